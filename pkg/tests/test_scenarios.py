"""Ground-truth generators: curves, dropout, outcome simulation, accrual."""

import math

import numpy as np
import pytest

from dltsim.model import CyclePlan
from dltsim.scenarios import (
    DEFAULT_MULTIPLIERS,
    DropoutScenario,
    ToxScenario,
    calibrated_tox_scenario,
    dropout_hazard,
    sample_accrual,
    simulate_patient,
    simulate_patients,
    true_cycle_probs,
)

NO_DROPOUT = DropoutScenario(name="none", rate_low=0.0, rate_high=0.0)


def _flat_scenario(hc: float, doses=(160.0,), multipliers=(1.0, 1.0, 1.0)):
    return ToxScenario(
        name="constant",
        base_hazards={d: hc for d in doses},
        multipliers=multipliers,
    )


class TestTrueCycleProbs:
    def test_constant_calibration_anchor(self):
        scn = _flat_scenario(-math.log1p(-0.25) / 3.0)
        q, pi = true_cycle_probs(scn, 160.0)
        assert np.allclose(q, 0.09144, atol=5e-5)
        assert pi == pytest.approx(0.25, abs=1e-9)

    def test_increasing_multipliers(self):
        scn = ToxScenario(
            name="increasing",
            base_hazards={160.0: -math.log1p(-0.25) / 3.0},
            multipliers=(0.2, 1.0, 1.8),
        )
        q, pi = true_cycle_probs(scn, 160.0)
        assert q[0] == pytest.approx(0.0190, abs=5e-5)
        assert q[2] == pytest.approx(0.1585, abs=5e-5)
        assert pi == pytest.approx(0.25, abs=1e-9)

    def test_zero_hazard(self):
        q, pi = true_cycle_probs(_flat_scenario(0.0), 160.0)
        assert np.all(q == 0.0) and pi == 0.0

    def test_unknown_dose_rejected(self):
        with pytest.raises(ValueError):
            true_cycle_probs(_flat_scenario(0.1), 40.0)

    def test_scenario_coincidence(self, grid, plan):
        """All shipped shapes share q2 and the cumulative probability."""
        scns = {
            name: calibrated_tox_scenario(name, grid, plan)
            for name in DEFAULT_MULTIPLIERS
        }
        for dose in grid.doses:
            q_ref, pi_ref = true_cycle_probs(scns["constant"], dose)
            for name in ("increasing", "decreasing"):
                q, pi = true_cycle_probs(scns[name], dose)
                assert abs(pi - pi_ref) < 1e-12
                assert q[1] == pytest.approx(q_ref[1], abs=1e-15)

    def test_calibrated_band_placement(self, grid, plan):
        scn = calibrated_tox_scenario("constant", grid, plan)
        _, pi160 = true_cycle_probs(scn, 160.0)
        _, pi320 = true_cycle_probs(scn, 320.0)
        _, pi80 = true_cycle_probs(scn, 80.0)
        assert pi160 == pytest.approx(0.25, abs=1e-12)
        assert pi320 > 0.33
        assert pi80 < 0.16


class TestScenarioValidation:
    def test_multipliers_must_sum_to_cycles(self):
        with pytest.raises(ValueError):
            _flat_scenario(0.1, multipliers=(1.0, 1.0, 1.5))

    def test_middle_multiplier_pinned(self):
        with pytest.raises(ValueError):
            _flat_scenario(0.1, multipliers=(1.5, 0.5, 1.0))

    def test_monotonicity_for_named_shapes(self):
        with pytest.raises(ValueError):
            ToxScenario(name="increasing", base_hazards={160.0: 0.1},
                        multipliers=(1.8, 1.0, 0.2))


class TestDropout:
    def test_rate_to_hazard(self, plan):
        scn = DropoutScenario(name="c33", rate_low=0.33, rate_high=0.33)
        lam = dropout_hazard(scn, 40.0, plan)
        assert lam == pytest.approx(-math.log(0.67) / 126.0, rel=1e-12)
        assert lam == pytest.approx(3.178e-3, abs=2e-6)

    def test_zero_rate(self, plan):
        assert dropout_hazard(NO_DROPOUT, 40.0, plan) == 0.0

    def test_step_uses_upper_half_rate(self, plan):
        decreasing = DropoutScenario(name="decreasing", rate_low=0.55, rate_high=0.0)
        assert dropout_hazard(decreasing, 320.0, plan) == 0.0
        assert dropout_hazard(decreasing, 80.0, plan) > 0.0

    def test_rates_validated(self):
        with pytest.raises(ValueError):
            DropoutScenario(name="x", rate_low=1.0, rate_high=0.0)


class TestSimulatePatient:
    def test_no_risk_always_completes(self, plan, rng):
        scn = _flat_scenario(0.0)
        for _ in range(100):
            out = simulate_patient(scn, NO_DROPOUT, 160.0, plan, rng)
            assert (out.u_cycles, out.delta, out.dropout_flag) == (3, 0, False)

    def test_certain_event_first_cycle(self, plan, rng):
        # q1 ~ 1: enormous hazard makes the first-cycle event certain
        scn = _flat_scenario(60.0)
        for _ in range(100):
            out = simulate_patient(scn, NO_DROPOUT, 160.0, plan, rng)
            assert (out.u_cycles, out.delta) == (1, 1)

    def test_dlt_fraction_matches_analytic(self, plan, rng):
        """10^6 subjects at q_j = 0.0914 per cycle: DLT fraction = 0.25."""
        scn = _flat_scenario(-math.log1p(-0.25) / 3.0)
        u, delta, dropped, _ = simulate_patients(scn, NO_DROPOUT, 160.0, plan, rng, 10**6)
        assert delta.mean() == pytest.approx(0.25, abs=1e-3)
        assert not dropped.any()

    def test_dropout_marginal_matches_table_rate(self, plan, rng):
        """With toxicity off, the three-cycle dropout fraction matches the
        memoryless scenario rate."""
        scn = _flat_scenario(0.0)
        for rate in (0.33, 0.55):
            drop = DropoutScenario(name="c", rate_low=rate, rate_high=rate)
            _, _, dropped, _ = simulate_patients(scn, drop, 160.0, plan, rng, 10**6)
            assert dropped.mean() == pytest.approx(rate, abs=2e-3)

    def test_cycle1_dropout_has_no_exposure(self, plan, rng):
        """A dropout during cycle 1 censors at the enrollment boundary."""
        drop = DropoutScenario(name="heavy", rate_low=0.999, rate_high=0.999)
        scn = _flat_scenario(0.0)
        seen_u0 = False
        for _ in range(200):
            out = simulate_patient(scn, drop, 160.0, plan, rng)
            if out.dropout_flag and out.dropout_day < plan.cycle_length_days:
                assert out.u_cycles == 0
                seen_u0 = True
        assert seen_u0

    def test_outputs_satisfy_record_invariants(self, plan, rng):
        scn = ToxScenario(
            name="increasing", base_hazards={80.0: 0.2}, multipliers=(0.2, 1.0, 1.8)
        )
        drop = DropoutScenario(name="c", rate_low=0.4, rate_high=0.4)
        u, delta, dropped, day = simulate_patients(scn, drop, 80.0, plan, rng, 5000)
        assert np.all((u >= 0) & (u <= plan.n_cycles))
        assert set(np.unique(delta)) <= {0, 1}
        assert np.all(u[delta == 1] >= 1)
        assert not np.any(delta.astype(bool) & dropped)
        # dropout days lie strictly inside the dropout cycle
        has = dropped.nonzero()[0]
        assert np.all(day[has] > u[has] * plan.cycle_length_days)
        assert np.all(day[has] <= (u[has] + 1) * plan.cycle_length_days)

    def test_deterministic_given_stream(self, plan):
        scn = _flat_scenario(0.1)
        drop = DropoutScenario(name="c", rate_low=0.3, rate_high=0.3)
        a = simulate_patient(scn, drop, 160.0, plan, np.random.default_rng(5))
        b = simulate_patient(scn, drop, 160.0, plan, np.random.default_rng(5))
        assert a == b


class TestAccrual:
    def test_mean_over_many_draws(self, rng):
        draws = np.array([sample_accrual(rng) for _ in range(10**6)])
        assert draws.mean() == pytest.approx(10.0, abs=0.05)
        assert np.all(draws > 0.0)

    def test_deterministic_under_fixed_seed(self):
        a = sample_accrual(np.random.default_rng(3))
        b = sample_accrual(np.random.default_rng(3))
        assert a == b

    def test_rate_validation(self, rng):
        with pytest.raises(ValueError):
            sample_accrual(rng, mean_days=0.0)
