"""Discrete-event simulation of a single dose-escalation trial.

The loop enrolls cohorts, waits in simulated time until every enrolled
subject has either completed the method's decision window or discontinued,
fits the method's model on all data recorded by then, applies the
overdose-control selection rules, and either continues at the selected
dose, stops for toxicity, or declares the MTD.  After an MTD candidate the
clock still runs to the last subject's final data acquisition, which is
what the reported trial duration measures.

Methods deciding on a 1-cycle window (B1, TCO, TCU) analyse after each
cohort's first cycle; the 3-cycle comparator (B3) waits for full follow-up.
A cohort that entirely drops out before its decision window is replaced at
the same dose without a model decision.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .likelihood import Dataset
from .mcmc import PosteriorDraws, SamplerConfig, fit_with_retry
from .model import CyclePlan, DoseGrid, PatientRecord
from .policy import (
    DoseAssessment,
    EscalationState,
    EwocThresholds,
    MtdRules,
    assess_doses,
    check_mtd,
    select_next_dose,
)
from .scenarios import DropoutScenario, PatientOutcome, ToxScenario, sample_accrual, simulate_patient
from .seeding import derive_rng, derive_seed
from .targets import make_target

__all__ = [
    "TrialConfig",
    "TrialResult",
    "AnalysisRecord",
    "PriorLibrary",
    "run_trial",
    "audit_to_jsonl",
    "DECISION_WINDOW",
]

# cycles every enrolled subject must resolve before an analysis
DECISION_WINDOW = {"B1": 1, "TCO": 1, "TCU": 1, "B3": 3}

OUTCOME_MTD = "mtd"
OUTCOME_STOP_TOXICITY = "stop_toxicity"
OUTCOME_STOP_MAX_PATIENTS = "stop_max_patients"


@dataclass(frozen=True)
class PriorLibrary:
    """The per-family prior specs a trial can draw on."""

    tte: object
    b1: object
    b3: object


@dataclass(frozen=True)
class TrialConfig:
    """Escalation rules and operational parameters of one simulated trial."""

    cohort_size: int = 3
    start_dose: float | None = None  # default: second-lowest grid dose
    max_patients: int = 60
    accrual_mean_days: float = 10.0
    thresholds: EwocThresholds = field(default_factory=EwocThresholds)
    mtd_rules: MtdRules = field(default_factory=MtdRules)
    escalation_cap: bool = True
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(seed=0))

    def __post_init__(self):
        if self.cohort_size < 1:
            raise ValueError("cohort size must be >= 1")
        if self.max_patients < self.cohort_size:
            raise ValueError("max_patients must fit at least one cohort")

    def resolve_start_dose(self, grid: DoseGrid) -> float:
        if self.start_dose is None:
            return grid.doses[min(1, len(grid.doses) - 1)]
        if self.start_dose not in grid.doses:
            raise ValueError(f"start dose {self.start_dose} mg is not on the grid")
        return self.start_dose


@dataclass(frozen=True)
class _Subject:
    """Internal: a simulated subject with their full latent follow-up."""

    id: str
    dose: float
    enroll_time: float
    outcome: PatientOutcome

    def final_data_time(self, plan: CyclePlan) -> float:
        """Study time at which this subject's last data point is acquired."""
        if self.outcome.dropout_flag:
            return self.enroll_time + self.outcome.dropout_day
        return self.enroll_time + self.outcome.u_cycles * plan.cycle_length_days

    def window_resolution_time(self, window: int, plan: CyclePlan) -> float:
        """Study time at which the subject resolves a decision window."""
        return min(
            self.final_data_time(plan),
            self.enroll_time + window * plan.cycle_length_days,
        )

    def record_at(self, t: float, plan: CyclePlan) -> PatientRecord:
        """Follow-up recorded by study time t (cycle-boundary truncation)."""
        elapsed = t - self.enroll_time
        completed = min(plan.n_cycles, int(math.floor(elapsed / plan.cycle_length_days + 1e-9)))
        completed = max(completed, 0)
        out = self.outcome
        if out.delta == 1 and out.u_cycles <= completed:
            return PatientRecord(
                id=self.id, dose=self.dose, u_cycles=out.u_cycles, delta=1,
                enroll_time=self.enroll_time,
            )
        u = completed
        is_dropout = False
        if out.dropout_flag and self.enroll_time + out.dropout_day <= t:
            u = min(u, out.u_cycles)
            is_dropout = True
        elif out.delta == 0:
            u = min(u, out.u_cycles)
        return PatientRecord(
            id=self.id, dose=self.dose, u_cycles=u, delta=0,
            enroll_time=self.enroll_time, dropout_flag=is_dropout,
        )


@dataclass(frozen=True)
class AnalysisRecord:
    """Audit entry for one model-based decision."""

    index: int
    time_days: float
    n_enrolled: int
    dataset: tuple[tuple[str, float, int, int], ...]  # (id, dose, u_cycles, delta)
    sampler_seed: int
    converged: bool
    retried: bool
    assessments: tuple[DoseAssessment, ...]
    next_dose: float | None
    mtd: float | None
    cohort_replaced: bool = False


@dataclass(frozen=True)
class TrialResult:
    """One replication's outcome, enrollment and audit trail."""

    outcome: str
    mtd_dose: float | None
    n_enrolled: int
    duration_days: float
    patients: tuple[PatientRecord, ...]
    analyses: tuple[AnalysisRecord, ...]
    method: str
    seed: int

    def __post_init__(self):
        if self.duration_days < 0.0:
            raise ValueError("trial duration cannot be negative")


def audit_to_jsonl(result: TrialResult) -> str:
    """Line-delimited JSON rendering of the per-analysis audit trail."""
    lines = []
    for a in result.analyses:
        entry = asdict(a)
        entry["assessments"] = [asdict(x) for x in a.assessments]
        lines.append(json.dumps(entry, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def run_trial(
    cfg: TrialConfig,
    grid: DoseGrid,
    plan: CyclePlan,
    tox: ToxScenario,
    dropout: DropoutScenario,
    method: str,
    seed: int,
    priors: PriorLibrary,
) -> TrialResult:
    """Simulate one trial replication; deterministic in all arguments."""
    if method not in DECISION_WINDOW:
        raise ValueError(f"unknown method {method!r}")
    window = min(DECISION_WINDOW[method], plan.n_cycles)

    subjects: list[_Subject] = []
    analyses: list[AnalysisRecord] = []
    state = EscalationState()
    dose = cfg.resolve_start_dose(grid)
    accrual_rng = derive_rng(seed, "accrual")
    clock = 0.0
    analysis_index = 0
    outcome = None
    mtd_dose = None
    end_of_trial = None

    while True:
        if len(subjects) + cfg.cohort_size > cfg.max_patients:
            outcome = OUTCOME_STOP_MAX_PATIENTS
            end_of_trial = max(
                [clock] + [s.final_data_time(plan) for s in subjects]
            )
            break

        # enroll one cohort; the very first subject arrives at time zero
        cohort: list[_Subject] = []
        t_enroll = clock
        for i in range(cfg.cohort_size):
            if subjects or cohort:
                t_enroll += sample_accrual(accrual_rng, cfg.accrual_mean_days)
            pid = f"p{len(subjects) + len(cohort) + 1:03d}"
            patient_rng = derive_rng(seed, "patient", len(subjects) + len(cohort))
            out = simulate_patient(tox, dropout, dose, plan, patient_rng)
            cohort.append(_Subject(id=pid, dose=dose, enroll_time=t_enroll, outcome=out))
        subjects.extend(cohort)
        state.record_cohort(dose, cfg.cohort_size)

        t_decision = max(s.window_resolution_time(window, plan) for s in subjects)

        whole_cohort_dropped = all(
            s.outcome.dropout_flag and s.outcome.u_cycles < window for s in cohort
        )
        if whole_cohort_dropped:
            analyses.append(
                AnalysisRecord(
                    index=analysis_index,
                    time_days=t_decision,
                    n_enrolled=len(subjects),
                    dataset=(),
                    sampler_seed=-1,
                    converged=True,
                    retried=False,
                    assessments=(),
                    next_dose=dose,
                    mtd=None,
                    cohort_replaced=True,
                )
            )
            analysis_index += 1
            clock = t_decision
            continue

        records = tuple(s.record_at(t_decision, plan) for s in subjects)
        data = Dataset(records=records, grid=grid, plan=plan)
        sampler_seed = derive_seed(seed, "analysis", analysis_index)
        draws = fit_with_retry(
            make_target(method, data, priors),
            replace(cfg.sampler, seed=sampler_seed),
        )
        assessments = assess_doses(draws, method, grid, plan, cfg.thresholds)
        next_dose = select_next_dose(assessments, state, grid, cfg.escalation_cap)
        mtd = (
            check_mtd(assessments, state, next_dose, cfg.mtd_rules)
            if next_dose is not None
            else None
        )
        analyses.append(
            AnalysisRecord(
                index=analysis_index,
                time_days=t_decision,
                n_enrolled=len(subjects),
                dataset=tuple((r.id, r.dose, r.u_cycles, r.delta) for r in records),
                sampler_seed=sampler_seed,
                converged=draws.converged,
                retried=draws.seed != sampler_seed,
                assessments=tuple(assessments),
                next_dose=next_dose,
                mtd=mtd,
            )
        )
        analysis_index += 1

        if next_dose is None:
            outcome = OUTCOME_STOP_TOXICITY
            end_of_trial = t_decision
            break
        if mtd is not None:
            outcome = OUTCOME_MTD
            mtd_dose = mtd
            end_of_trial = max(
                [t_decision] + [s.final_data_time(plan) for s in subjects]
            )
            break
        clock = t_decision
        dose = next_dose

    # end_of_trial covers every subject's last data point except on an early
    # toxicity stop, where records stay truncated at the stopping analysis
    final_records = tuple(s.record_at(end_of_trial, plan) for s in subjects)
    return TrialResult(
        outcome=outcome,
        mtd_dose=mtd_dose,
        n_enrolled=len(subjects),
        duration_days=end_of_trial,
        patients=final_records,
        analyses=tuple(analyses),
        method=method,
        seed=seed,
    )
