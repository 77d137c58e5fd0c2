"""Overdose-controlled dose recommendation and MTD declaration.

A dose is admissible when its posterior probability of exceeding the
overdose boundary stays below the feasibility bound.  The four methods
apply this rule to different risk metrics:

  B1   window DLT probability of the 1-cycle comparator
  B3   window DLT probability of the 3-cycle comparator
  TCU  cumulative multi-cycle probability of the time-to-event model
  TCO  per-cycle conditional probabilities, all cycles must pass

Interval (under/target/over) probabilities are computed on the same metric
the method controls; for TCO the per-draw metric is the worst (largest)
conditional cycle probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mcmc import PosteriorDraws
from .model import CyclePlan, DoseGrid, blrm_probability_batch, tte_hazards_batch

__all__ = [
    "EwocThresholds",
    "MtdRules",
    "DoseAssessment",
    "EscalationState",
    "assess_doses",
    "select_next_dose",
    "check_mtd",
    "classify_truth",
    "METHODS",
]

METHODS = ("B1", "B3", "TCO", "TCU")


@dataclass(frozen=True)
class EwocThresholds:
    """Overdose boundary, feasibility bound, and the lower edge of the target band."""

    overdose_prob: float = 0.33
    feasibility: float = 0.25
    target_low: float = 0.16

    def __post_init__(self):
        if not 0.0 < self.target_low < self.overdose_prob < 1.0:
            raise ValueError("need 0 < target_low < overdose_prob < 1")
        if not 0.0 < self.feasibility < 1.0:
            raise ValueError("feasibility bound must be in (0, 1)")


@dataclass(frozen=True)
class MtdRules:
    """Patient-count and confidence constraints for declaring the MTD."""

    min_patients: int = 6
    min_patients_alt: int = 12
    target_prob: float = 0.5
    require_same_dose: bool = True


@dataclass(frozen=True)
class DoseAssessment:
    """Posterior risk classification of one dose under one method's metric."""

    dose: float
    p_under: float
    p_target: float
    p_over: float
    ewoc_ok: bool
    metric: str  # cycle1 | cumulative | per-cycle-conditional

    def __post_init__(self):
        total = self.p_under + self.p_target + self.p_over
        if abs(total - 1.0) > 1e-9:
            raise ValueError("interval probabilities must sum to 1")


@dataclass
class EscalationState:
    """Enrollment bookkeeping the dose-selection rules depend on."""

    patients_per_dose: dict[float, int] = field(default_factory=dict)
    highest_administered: float | None = None
    last_cohort_dose: float | None = None

    def record_cohort(self, dose: float, n: int) -> None:
        self.patients_per_dose[dose] = self.patients_per_dose.get(dose, 0) + n
        if self.highest_administered is None or dose > self.highest_administered:
            self.highest_administered = dose
        self.last_cohort_dose = dose

    def patients_at(self, dose: float) -> int:
        return self.patients_per_dose.get(dose, 0)


def _method_metric(draws: PosteriorDraws, method: str, grid: DoseGrid, plan: CyclePlan):
    """Per-draw risk metric (draws, doses); TCO also returns per-cycle probs."""
    log_ratio = grid.log_ratio(np.asarray(grid.doses))
    if method in ("B1", "B3"):
        if draws.kind != "blrm":
            raise ValueError(f"{method} assessment requires comparator draws")
        pi = blrm_probability_batch(
            draws.column("alpha1"), draws.column("log_beta1"),
            draws.column("alpha2"), log_ratio,
        )
        return pi, None
    if draws.kind != "tte":
        raise ValueError(f"{method} assessment requires time-to-event draws")
    n_xi = plan.n_cycles - 1
    xi = np.column_stack([draws.column(f"xi_{i + 1}") for i in range(n_xi)]) \
        if n_xi > 0 else np.ones((draws.draws.shape[0], 0))
    h = tte_hazards_batch(
        draws.column("alpha1"), draws.column("log_beta1"),
        draws.column("alpha2"), draws.column("gamma2"), xi,
        log_ratio, plan.n_cycles,
    )
    q = -np.expm1(-h * plan.cycle_length_days)          # (draws, doses, cycles)
    if method == "TCU":
        pi_cum = -np.expm1(-plan.cycle_length_days * h.sum(axis=2))
        return pi_cum, None
    if method == "TCO":
        return q.max(axis=2), q
    raise ValueError(f"unknown method {method!r}")


def assess_doses(
    draws: PosteriorDraws,
    method: str,
    grid: DoseGrid,
    plan: CyclePlan,
    thresholds: EwocThresholds,
) -> list[DoseAssessment]:
    """Classify every grid dose from posterior draws under one method."""
    metric, per_cycle = _method_metric(draws, method, grid, plan)
    p_under = (metric < thresholds.target_low).mean(axis=0)
    p_over = (metric > thresholds.overdose_prob).mean(axis=0)
    p_target = 1.0 - p_under - p_over
    if per_cycle is None:
        eligible = p_over < thresholds.feasibility
    else:
        exceed_by_cycle = (per_cycle > thresholds.overdose_prob).mean(axis=0)
        eligible = np.all(exceed_by_cycle < thresholds.feasibility, axis=1)
    metric_label = {
        "B1": "cycle1",
        "B3": "cumulative",
        "TCU": "cumulative",
        "TCO": "per-cycle-conditional",
    }[method]
    return [
        DoseAssessment(
            dose=d,
            p_under=float(p_under[i]),
            p_target=float(p_target[i]),
            p_over=float(p_over[i]),
            ewoc_ok=bool(eligible[i]),
            metric=metric_label,
        )
        for i, d in enumerate(grid.doses)
    ]


def select_next_dose(
    assessments: list[DoseAssessment],
    state: EscalationState,
    grid: DoseGrid,
    escalation_cap: bool = True,
) -> float | None:
    """Best admissible dose for the next cohort; None means stop for toxicity.

    Candidates are the admissible doses no higher than one grid level above
    the highest dose given so far (when the no-skip cap is on); among them
    the target-band probability decides, ties going to the higher dose.
    """
    if len(assessments) != len(grid.doses):
        raise ValueError("assessments must cover the whole grid")
    by_dose = {a.dose: a for a in assessments}
    candidates = [d for d in grid.doses if by_dose[d].ewoc_ok]
    if escalation_cap and state.highest_administered is not None:
        cap = grid.level_above(state.highest_administered)
        candidates = [d for d in candidates if d <= cap]
    if not candidates:
        return None
    best = max(candidates, key=lambda d: (by_dose[d].p_target, d))
    return best


def check_mtd(
    assessments: list[DoseAssessment],
    state: EscalationState,
    next_dose: float,
    rules: MtdRules,
) -> float | None:
    """MTD dose if the declaration rules fire for the selected dose, else None."""
    by_dose = {a.dose: a for a in assessments}
    a = by_dose[next_dose]
    n_at = state.patients_at(next_dose)
    same_dose = (not rules.require_same_dose) or state.last_cohort_dose == next_dose
    if n_at >= rules.min_patients and same_dose and a.p_target > rules.target_prob:
        return next_dose
    if n_at >= rules.min_patients_alt and a.ewoc_ok:
        return next_dose
    return None


def classify_truth(prob: float, thresholds: EwocThresholds) -> str:
    """Band of a true cumulative DLT probability: underdose/target/overdose."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    if prob < thresholds.target_low:
        return "underdose"
    if prob <= thresholds.overdose_prob:
        return "target"
    return "overdose"
