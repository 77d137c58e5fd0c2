"""Dose admissibility, selection, MTD declaration, and truth classification."""

import numpy as np
import pytest

from dltsim.mcmc import PosteriorDraws
from dltsim.policy import (
    DoseAssessment,
    EscalationState,
    EwocThresholds,
    MtdRules,
    assess_doses,
    check_mtd,
    classify_truth,
    select_next_dose,
)

THRESH = EwocThresholds()


def _blrm_draws(alpha1, log_beta1, alpha2) -> PosteriorDraws:
    """Synthetic comparator draws from explicit parameter columns."""
    draws = np.column_stack([alpha1, log_beta1, alpha2])
    return PosteriorDraws(
        kind="blrm", names=("alpha1", "log_beta1", "alpha2"), draws=draws,
        rhat={}, ess={}, accept_rate=1.0, converged=True, warning=False,
        seed=0, n_chains=2, n_draws_per_chain=len(draws) // 2,
    )


def _tte_draws(alpha1, log_beta1, alpha2, gamma2, xi1) -> PosteriorDraws:
    xi1 = np.asarray(xi1, dtype=float)
    draws = np.column_stack([alpha1, log_beta1, alpha2, gamma2, xi1, 1.0 - xi1])
    return PosteriorDraws(
        kind="tte",
        names=("alpha1", "log_beta1", "alpha2", "gamma2", "xi_1", "xi_2"),
        draws=draws, rhat={}, ess={}, accept_rate=1.0, converged=True,
        warning=False, seed=0, n_chains=2, n_draws_per_chain=len(draws) // 2,
    )


def _degenerate_blrm(pi_target: float, n: int, grid) -> PosteriorDraws:
    """Draws whose window probability at every dose is exactly pi_target
    (flat dose-response via a zero slope is impossible with beta1 > 0, so the
    background carries the whole probability and the drug part is disabled)."""
    from dltsim.model import logit

    alpha1 = np.full(n, -200.0)
    log_beta1 = np.full(n, -30.0)
    alpha2 = np.full(n, logit(pi_target))
    return _blrm_draws(alpha1, log_beta1, alpha2)


class TestAssessDoses:
    def test_degenerate_safe_draws_admissible(self, grid, plan):
        draws = _degenerate_blrm(0.10, 64, grid)
        out = assess_doses(draws, "B1", grid, plan, THRESH)
        for a in out:
            assert a.p_over == 0.0
            assert a.ewoc_ok
            assert a.p_under == 1.0  # 0.10 < 0.16 everywhere

    def test_half_over_draws_inadmissible(self, grid, plan):
        from dltsim.model import logit

        n = 64
        alpha2 = np.where(np.arange(n) % 2 == 0, logit(0.5), logit(0.10))
        draws = _blrm_draws(np.full(n, -200.0), np.full(n, -30.0), alpha2)
        out = assess_doses(draws, "B1", grid, plan, THRESH)
        for a in out:
            assert a.p_over == pytest.approx(0.5)
            assert not a.ewoc_ok  # 0.5 >= feasibility 0.25

    def test_tco_requires_every_cycle(self, grid, plan):
        """q = (0.1, 0.1, 0.4) in every draw: cycle 3 alone breaks admissibility."""
        n = 32
        delta = plan.cycle_length_days
        # constant dose-independent hazard per cycle via the background channel:
        # alpha2 sets cycle-1 hazard; gamma2/xi shape cycles 2 and 3
        h1 = -np.log1p(-0.1) / delta
        h3 = -np.log1p(-0.4) / delta
        alpha2 = np.full(n, np.log(h1))
        gamma2 = np.full(n, np.log(h3 / h1) / 2.0)
        xi1 = np.zeros(n)  # no shift into cycle 2, full shift in cycle 3
        draws = _tte_draws(np.full(n, -200.0), np.full(n, -30.0), alpha2, gamma2, xi1)
        out = assess_doses(draws, "TCO", grid, plan, THRESH)
        # cycle 1 alone is safe (q1 = 0.1 by construction), yet the
        # all-cycles rule rejects every dose because of cycle 3
        for a in out:
            assert not a.ewoc_ok
            assert a.metric == "per-cycle-conditional"
            assert a.p_over == 1.0  # band metric is max_j q_j = 0.4

    def test_interval_probabilities_sum_to_one(self, grid, plan, rng):
        n = 500
        draws = _blrm_draws(
            rng.normal(-3, 1, n), rng.normal(0, 0.9, n), rng.normal(-3, 0.5, n)
        )
        for a in assess_doses(draws, "B1", grid, plan, THRESH):
            assert a.p_under + a.p_target + a.p_over == pytest.approx(1.0, abs=1e-9)

    def test_vacuous_thresholds_admit_everything(self, grid, plan, rng):
        eps = 1e-9
        loose = EwocThresholds(
            overdose_prob=1.0 - eps, feasibility=1.0 - eps, target_low=0.16
        )
        n = 200
        draws = _blrm_draws(
            rng.normal(0, 2, n), rng.normal(0, 1, n), rng.normal(0, 2, n)
        )
        assert all(a.ewoc_ok for a in assess_doses(draws, "B1", grid, plan, loose))


class TestSelectNextDose:
    def _assessments(self, grid, ok_doses, p_target_map):
        out = []
        for d in grid.doses:
            p_target = p_target_map.get(d, 0.1)
            p_over = (1.0 - p_target) * 0.3
            out.append(
                DoseAssessment(
                    dose=d,
                    p_under=1.0 - p_target - p_over,
                    p_target=p_target,
                    p_over=p_over,
                    ewoc_ok=d in ok_doses,
                    metric="cycle1",
                )
            )
        return out

    def test_picks_highest_target_probability(self, grid):
        state = EscalationState()
        state.record_cohort(40.0, 3)
        assessments = self._assessments(
            grid, {10.0, 20.0, 40.0, 80.0}, {20.0: 0.2, 40.0: 0.3, 80.0: 0.5}
        )
        assert select_next_dose(assessments, state, grid) == 80.0

    def test_stop_when_nothing_admissible(self, grid):
        state = EscalationState()
        state.record_cohort(20.0, 3)
        assessments = self._assessments(grid, set(), {})
        assert select_next_dose(assessments, state, grid) is None

    def test_no_dose_skipping_cap(self, grid):
        state = EscalationState()
        state.record_cohort(20.0, 3)
        assessments = self._assessments(grid, set(grid.doses), {1280.0: 0.99, 40.0: 0.2})
        assert select_next_dose(assessments, state, grid) == 40.0

    def test_cap_disabled_allows_skipping(self, grid):
        state = EscalationState()
        state.record_cohort(20.0, 3)
        assessments = self._assessments(grid, set(grid.doses), {1280.0: 0.99})
        assert select_next_dose(assessments, state, grid, escalation_cap=False) == 1280.0

    def test_tie_broken_by_higher_dose(self, grid):
        state = EscalationState()
        state.record_cohort(80.0, 3)
        assessments = self._assessments(grid, {20.0, 40.0, 80.0}, {40.0: 0.5, 80.0: 0.5})
        assert select_next_dose(assessments, state, grid) == 80.0

    def test_requires_full_grid(self, grid):
        with pytest.raises(ValueError):
            select_next_dose([], EscalationState(), grid)


class TestCheckMtd:
    def _assessment(self, dose, p_target, ewoc_ok=True):
        return DoseAssessment(
            dose=dose, p_under=1.0 - p_target - 0.1, p_target=p_target,
            p_over=0.1, ewoc_ok=ewoc_ok, metric="cycle1",
        )

    def _full(self, grid, special):
        return [special if a.dose == special.dose else a
                for a in (self._assessment(d, 0.2) for d in grid.doses)]

    def test_declares_on_main_rule(self, grid):
        state = EscalationState()
        state.record_cohort(80.0, 3)
        state.record_cohort(80.0, 4)
        assessments = self._full(grid, self._assessment(80.0, 0.55))
        assert check_mtd(assessments, state, 80.0, MtdRules()) == 80.0

    def test_continue_when_dose_changed(self, grid):
        state = EscalationState()
        state.record_cohort(80.0, 6)
        state.record_cohort(160.0, 3)
        assessments = self._full(grid, self._assessment(80.0, 0.9))
        assert check_mtd(assessments, state, 80.0, MtdRules()) is None

    def test_alternative_rule_at_twelve_patients(self, grid):
        state = EscalationState()
        for _ in range(4):
            state.record_cohort(80.0, 3)
        assessments = self._full(grid, self._assessment(80.0, 0.4))
        assert check_mtd(assessments, state, 80.0, MtdRules()) == 80.0

    def test_six_patients_low_target_prob_continues(self, grid):
        state = EscalationState()
        state.record_cohort(80.0, 6)
        assessments = self._full(grid, self._assessment(80.0, 0.45))
        assert check_mtd(assessments, state, 80.0, MtdRules()) is None


class TestClassifyTruth:
    def test_bands(self):
        assert classify_truth(0.25, THRESH) == "target"
        assert classify_truth(0.15999, THRESH) == "underdose"
        assert classify_truth(0.34, THRESH) == "overdose"
        assert classify_truth(0.16, THRESH) == "target"
        assert classify_truth(0.33, THRESH) == "target"

    def test_domain(self):
        with pytest.raises(ValueError):
            classify_truth(-0.01, THRESH)
        with pytest.raises(ValueError):
            classify_truth(1.01, THRESH)


def test_thresholds_validation():
    with pytest.raises(ValueError):
        EwocThresholds(overdose_prob=0.1, feasibility=0.25, target_low=0.16)
    with pytest.raises(ValueError):
        EwocThresholds(feasibility=0.0)
