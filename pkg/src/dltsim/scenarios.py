"""Ground-truth generators: dose-toxicity curves, dropout, accrual, outcomes.

A toxicity scenario fixes a per-cycle baseline hazard curve over the dose
grid plus cycle multipliers (m1, m2, m3) with m2 = 1 and sum 3, so the three
shipped shapes (constant / increasing / decreasing) share the cycle-2
conditional probability and the cumulative three-cycle probability at every
dose while redistributing risk across cycles.

Dropout is a memoryless competing process whose three-cycle probability may
step across the dose range (informative dropout).  Within each cycle a
latent exponential race between toxicity and dropout decides the outcome;
everything is recorded at cycle boundaries, so dropping out mid-cycle
censors at the last completed boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CyclePlan, DoseGrid, inv_cloglog, cloglog

__all__ = [
    "ToxScenario",
    "DropoutScenario",
    "PatientOutcome",
    "calibrated_tox_scenario",
    "true_cycle_probs",
    "dropout_hazard",
    "simulate_patient",
    "simulate_patients",
    "sample_accrual",
    "DEFAULT_MULTIPLIERS",
    "DEFAULT_DROPOUT_SCENARIOS",
]

DEFAULT_MULTIPLIERS = {
    "constant": (1.0, 1.0, 1.0),
    "increasing": (0.2, 1.0, 1.8),
    "decreasing": (1.8, 1.0, 0.2),
}

# name -> (rate on the lower half of the grid, rate on the upper half)
DEFAULT_DROPOUT_SCENARIOS = {
    "none": (0.0, 0.0),
    "constant_33": (0.33, 0.33),
    "constant_55": (0.55, 0.55),
    "decreasing": (0.55, 0.0),
    "increasing": (0.0, 0.55),
}


@dataclass(frozen=True)
class ToxScenario:
    """True dose-toxicity curve: per-dose baseline hazards and cycle multipliers."""

    name: str
    base_hazards: dict[float, float]  # dose -> per-cycle cumulative hazard (1/cycle)
    multipliers: tuple[float, ...]

    def __post_init__(self):
        m = tuple(float(v) for v in self.multipliers)
        object.__setattr__(self, "multipliers", m)
        object.__setattr__(
            self, "base_hazards", {float(k): float(v) for k, v in self.base_hazards.items()}
        )
        if any(h < 0.0 for h in self.base_hazards.values()):
            raise ValueError("baseline hazards must be non-negative")
        if any(v <= 0.0 for v in m):
            raise ValueError("cycle multipliers must be positive")
        if abs(sum(m) - len(m)) > 1e-9:
            raise ValueError("cycle multipliers must sum to the number of cycles")
        if len(m) >= 3 and abs(m[1] - 1.0) > 1e-12:
            raise ValueError("the cycle-2 multiplier must be 1")
        diffs = np.diff(m)
        if self.name == "increasing" and not np.all(diffs > 0):
            raise ValueError("increasing scenario needs strictly increasing multipliers")
        if self.name == "decreasing" and not np.all(diffs < 0):
            raise ValueError("decreasing scenario needs strictly decreasing multipliers")

    def hazard_at(self, dose: float) -> float:
        try:
            return self.base_hazards[float(dose)]
        except KeyError:
            raise ValueError(f"dose {dose} mg has no configured true hazard") from None


def calibrated_tox_scenario(
    name: str,
    grid: DoseGrid,
    plan: CyclePlan,
    multipliers: tuple[float, ...] | None = None,
    anchor_dose: float = 160.0,
    anchor_prob: float = 0.25,
    log_dose_slope: float = 0.8,
) -> ToxScenario:
    """Scenario whose cumulative probability is cloglog-linear in log dose.

    cloglog(pi_cum(d)) = cloglog(anchor_prob) + slope * log(d / anchor_dose);
    the per-cycle baseline hazard divides the implied cumulative hazard
    evenly across cycles before the multipliers reshape it.
    """
    m = multipliers if multipliers is not None else DEFAULT_MULTIPLIERS[name]
    a = cloglog(anchor_prob)
    base = {}
    for d in grid.doses:
        pi_cum = inv_cloglog(a + log_dose_slope * np.log(d / anchor_dose))
        base[d] = -np.log1p(-pi_cum) / plan.n_cycles
    return ToxScenario(name=name, base_hazards=base, multipliers=m)


def true_cycle_probs(scn: ToxScenario, dose: float):
    """Conditional per-cycle DLT probabilities and the cumulative total."""
    hc = scn.hazard_at(dose)
    m = np.asarray(scn.multipliers)
    q = -np.expm1(-m * hc)
    pi_cum = float(-np.expm1(-m.sum() * hc))
    return q, pi_cum


@dataclass(frozen=True)
class DropoutScenario:
    """Dose-dependent (step) dropout probabilities over the full treatment."""

    name: str
    rate_low: float
    rate_high: float
    boundary: float = 80.0

    def __post_init__(self):
        for r in (self.rate_low, self.rate_high):
            if not 0.0 <= r < 1.0:
                raise ValueError("dropout rates must lie in [0, 1)")

    def rate_at(self, dose: float) -> float:
        return self.rate_low if dose <= self.boundary else self.rate_high


def dropout_hazard(scn: DropoutScenario, dose: float, plan: CyclePlan) -> float:
    """Constant per-day dropout rate matching the scenario's probability
    over the full treatment duration."""
    rate = scn.rate_at(dose)
    if rate == 0.0:
        return 0.0
    return float(-np.log1p(-rate) / plan.total_days)


@dataclass(frozen=True)
class PatientOutcome:
    """Final follow-up of one simulated subject.

    dropout_day is the latent study-day offset (from enrollment) of the
    dropout for censored-by-dropout subjects, None otherwise.
    """

    u_cycles: int
    delta: int
    dropout_flag: bool
    dropout_day: float | None = None


def simulate_patients(
    scn: ToxScenario,
    drop: DropoutScenario,
    dose: float,
    plan: CyclePlan,
    rng: np.random.Generator,
    n: int,
):
    """Vectorized outcome simulation for `n` subjects at one dose.

    Per cycle, latent exponential toxicity and dropout times race; toxicity
    within the cycle records an event at the cycle boundary, dropout censors
    at the previous boundary, neither advances to the next cycle.  Returns
    (u_cycles, delta, dropout_flag, dropout_day) arrays.
    """
    q, _ = true_cycle_probs(scn, dose)
    delta_days = plan.cycle_length_days
    with np.errstate(divide="ignore"):  # q == 1 maps to an infinite rate
        tox_rate = -np.log1p(-q) / delta_days  # per-day, may contain 0 or inf
    drop_rate = dropout_hazard(drop, dose, plan)

    u = np.full(n, plan.n_cycles, dtype=int)
    delta = np.zeros(n, dtype=int)
    dropped = np.zeros(n, dtype=bool)
    dropout_day = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    for j in range(plan.n_cycles):
        # draw for everyone to keep stream consumption shape-independent
        e_tox = rng.exponential(1.0, n)
        e_drop = rng.exponential(1.0, n)
        t_tox = np.where(tox_rate[j] > 0.0, e_tox / max(tox_rate[j], 1e-300), np.inf)
        t_drop = np.where(drop_rate > 0.0, e_drop / max(drop_rate, 1e-300), np.inf)
        tox_hit = active & (t_tox <= delta_days) & (t_tox <= t_drop)
        drop_hit = active & (t_drop <= delta_days) & (t_drop < t_tox)
        u[tox_hit] = j + 1
        delta[tox_hit] = 1
        u[drop_hit] = j
        dropped[drop_hit] = True
        dropout_day[drop_hit] = j * delta_days + t_drop[drop_hit]
        active &= ~(tox_hit | drop_hit)
    return u, delta, dropped, dropout_day


def simulate_patient(
    scn: ToxScenario,
    drop: DropoutScenario,
    dose: float,
    plan: CyclePlan,
    rng: np.random.Generator,
) -> PatientOutcome:
    """Single-subject wrapper over :func:`simulate_patients`."""
    u, delta, dropped, dropout_day = simulate_patients(scn, drop, dose, plan, rng, 1)
    return PatientOutcome(
        u_cycles=int(u[0]),
        delta=int(delta[0]),
        dropout_flag=bool(dropped[0]),
        dropout_day=float(dropout_day[0]) if dropped[0] else None,
    )


def sample_accrual(rng: np.random.Generator, mean_days: float = 10.0) -> float:
    """Inter-arrival gap of the memoryless accrual process."""
    if mean_days <= 0.0:
        raise ValueError("accrual mean must be positive")
    return float(rng.exponential(mean_days))
