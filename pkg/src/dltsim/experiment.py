"""Factorial operating-characteristics study over many trial replications.

A plan enumerates (method, toxicity, dropout) cells; each cell runs R
independent replications whose seeds derive from the master seed and the
cell's identity, so results are identical for any execution order or worker
count.  Aggregation happens after all replications of a cell finish and is
a deterministic reduction over the replication index.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import CyclePlan, DoseGrid
from .policy import EwocThresholds, classify_truth
from .scenarios import DropoutScenario, ToxScenario, true_cycle_probs
from .seeding import derive_seed
from .trial import PriorLibrary, TrialConfig, TrialResult, run_trial

__all__ = [
    "Cell",
    "ExperimentPlan",
    "ExperimentSetup",
    "ReplicationRecord",
    "CellSummary",
    "AggregateReport",
    "run_experiment",
    "allocation_metrics",
    "proportion_mcse",
]

MTD_CATEGORIES = ("underdose", "target", "overdose", "stopped")
DURATION_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True, order=True)
class Cell:
    """One factorial cell of the study."""

    method: str
    toxicity: str
    dropout: str

    def label(self) -> str:
        return f"{self.method}/{self.toxicity}/{self.dropout}"


@dataclass(frozen=True)
class ExperimentPlan:
    """Which cells to run, how many replications, and how."""

    cells: tuple[Cell, ...]
    replications: int = 1000
    master_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if not self.cells:
            raise ValueError("experiment plan has no cells")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything a replication needs besides its cell and seed."""

    grid: DoseGrid
    plan: CyclePlan
    trial: TrialConfig
    priors: PriorLibrary
    toxicity_scenarios: dict[str, ToxScenario]
    dropout_scenarios: dict[str, DropoutScenario]


@dataclass(frozen=True)
class ReplicationRecord:
    """Flat summary of one finished replication."""

    method: str
    toxicity: str
    dropout: str
    replication: int
    seed: int
    outcome: str
    mtd_dose: float | None
    truth_category: str
    n_enrolled: int
    duration_days: float
    allocation: tuple[int, int, int]  # patients at underdose/target/overdose doses
    any_sampler_warning: bool


@dataclass(frozen=True)
class CellSummary:
    """Cross-replication aggregates for one cell."""

    cell: Cell
    replications: int
    mtd_probs: dict[str, float]
    mtd_mcse: dict[str, float]
    stop_toxicity_prob: float
    stop_max_patients_prob: float
    allocation_fracs: dict[str, float]
    allocation_mcse: dict[str, float]
    duration_mean: float
    duration_quantiles: dict[float, float]
    n_enrolled_mean: float
    n_enrolled_mcse: float


@dataclass(frozen=True)
class AggregateReport:
    """All cell summaries of one experiment run."""

    summaries: tuple[CellSummary, ...]
    replications: int
    master_seed: int


def proportion_mcse(p: float, n: int) -> float:
    """Monte Carlo standard error of a simulated proportion."""
    return float(np.sqrt(p * (1.0 - p) / n))


def _truth_classifier(setup: ExperimentSetup, toxicity: str):
    tox = setup.toxicity_scenarios[toxicity]
    thresholds = setup.trial.thresholds

    def classify(dose: float) -> str:
        _, pi_cum = true_cycle_probs(tox, dose)
        return classify_truth(pi_cum, thresholds)

    return classify


def summarize_replication(
    setup: ExperimentSetup, cell: Cell, replication: int, seed: int, result: TrialResult
) -> ReplicationRecord:
    classify = _truth_classifier(setup, cell.toxicity)
    alloc = {"underdose": 0, "target": 0, "overdose": 0}
    for r in result.patients:
        alloc[classify(r.dose)] += 1
    truth_cat = "stopped" if result.mtd_dose is None else classify(result.mtd_dose)
    return ReplicationRecord(
        method=cell.method,
        toxicity=cell.toxicity,
        dropout=cell.dropout,
        replication=replication,
        seed=seed,
        outcome=result.outcome,
        mtd_dose=result.mtd_dose,
        truth_category=truth_cat,
        n_enrolled=result.n_enrolled,
        duration_days=result.duration_days,
        allocation=(alloc["underdose"], alloc["target"], alloc["overdose"]),
        any_sampler_warning=any(not a.converged for a in result.analyses),
    )


def run_replication(setup: ExperimentSetup, plan_seed: int, cell: Cell, replication: int) -> ReplicationRecord:
    """One replication, addressed by its cell identity and index."""
    seed = derive_seed(plan_seed, cell.method, cell.toxicity, cell.dropout, replication)
    result = run_trial(
        setup.trial,
        setup.grid,
        setup.plan,
        setup.toxicity_scenarios[cell.toxicity],
        setup.dropout_scenarios[cell.dropout],
        cell.method,
        seed,
        setup.priors,
    )
    return summarize_replication(setup, cell, replication, seed, result)


def _run_task(args):
    setup, plan_seed, cell, replication = args
    try:
        return run_replication(setup, plan_seed, cell, replication)
    except Exception as exc:  # re-raise with the failing cell attached
        raise RuntimeError(
            f"replication {replication} of cell {cell.label()} failed: {exc}"
        ) from exc


def run_experiment(setup: ExperimentSetup, plan: ExperimentPlan):
    """Execute the full plan; returns (records, AggregateReport).

    Records come back sorted by (cell, replication) regardless of the worker
    pool's completion order.
    """
    tasks = [
        (setup, plan.master_seed, cell, r)
        for cell in plan.cells
        for r in range(plan.replications)
    ]
    workers = min(plan.parallelism, len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=4))
    else:
        records = [_run_task(t) for t in tasks]
    records.sort(key=lambda r: (r.method, r.toxicity, r.dropout, r.replication))
    report = aggregate(records, plan)
    return records, report


def aggregate(records: list[ReplicationRecord], plan: ExperimentPlan) -> AggregateReport:
    summaries = []
    for cell in sorted(set(plan.cells)):
        rows = [
            r for r in records
            if (r.method, r.toxicity, r.dropout) == (cell.method, cell.toxicity, cell.dropout)
        ]
        if not rows:
            continue
        summaries.append(_summarize_cell(cell, rows))
    return AggregateReport(
        summaries=tuple(summaries),
        replications=plan.replications,
        master_seed=plan.master_seed,
    )


def _summarize_cell(cell: Cell, rows: list[ReplicationRecord]) -> CellSummary:
    n = len(rows)
    mtd_probs = {
        cat: sum(1 for r in rows if r.truth_category == cat) / n
        for cat in MTD_CATEGORIES
    }
    mtd_mcse = {cat: proportion_mcse(p, n) for cat, p in mtd_probs.items()}
    alloc_fracs, alloc_mcse = allocation_metrics(rows)
    durations = np.array([r.duration_days for r in rows])
    n_enrolled = np.array([r.n_enrolled for r in rows], dtype=float)
    return CellSummary(
        cell=cell,
        replications=n,
        mtd_probs=mtd_probs,
        mtd_mcse=mtd_mcse,
        stop_toxicity_prob=sum(1 for r in rows if r.outcome == "stop_toxicity") / n,
        stop_max_patients_prob=sum(1 for r in rows if r.outcome == "stop_max_patients") / n,
        allocation_fracs=alloc_fracs,
        allocation_mcse=alloc_mcse,
        duration_mean=float(durations.mean()),
        duration_quantiles={
            q: float(np.quantile(durations, q)) for q in DURATION_QUANTILES
        },
        n_enrolled_mean=float(n_enrolled.mean()),
        n_enrolled_mcse=float(n_enrolled.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
    )


def allocation_metrics(rows: list[ReplicationRecord]):
    """Fractions of enrolled patients at underdose/target/overdose doses.

    Pooled over all replications of one cell; raises on empty input so a
    misconfigured cell cannot silently divide by zero.
    """
    if not rows:
        raise ValueError("no replications to aggregate")
    totals = np.zeros(3)
    for r in rows:
        totals += np.asarray(r.allocation, dtype=float)
    grand = totals.sum()
    if grand == 0:
        raise ValueError("no patients enrolled across replications")
    fracs = {
        "underdose": float(totals[0] / grand),
        "target": float(totals[1] / grand),
        "overdose": float(totals[2] / grand),
    }
    n = len(rows)
    mcse = {k: proportion_mcse(v, n) for k, v in fracs.items()}
    return fracs, mcse
