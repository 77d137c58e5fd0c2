"""Core dose-toxicity arithmetic.

Two event processes can trigger a dose-limiting toxicity: the experimental
drug (dose-dependent) and the background treatment (dose-independent, with a
monotone cycle-to-cycle shift).  Both are piecewise-constant hazards aligned
with treatment cycles; their sum drives the time-to-first-DLT model.  The
binomial comparator collapses the same two components into per-window event
probabilities combined under independence.

All functions here are pure; the batch variants broadcast over a leading
axis of parameter draws and are the hot path for posterior summaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "DoseGrid",
    "CyclePlan",
    "TteParams",
    "BlrmParams",
    "PatientRecord",
    "CycleHazards",
    "cloglog",
    "inv_cloglog",
    "logit",
    "inv_logit",
    "cycle_hazards",
    "survivor_and_density",
    "event_probabilities",
    "blrm_dlt_probability",
    "tte_hazards_batch",
    "blrm_probability_batch",
]


# ---------------------------------------------------------------------------
# Link functions
# ---------------------------------------------------------------------------

def cloglog(p):
    """Complementary log-log link, log(-log(1-p)); requires 0 < p < 1."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("cloglog requires probabilities strictly inside (0, 1)")
    out = np.log(-np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def inv_cloglog(x):
    """Inverse of :func:`cloglog`: 1 - exp(-exp(x))."""
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-np.exp(x))
    return float(out) if out.ndim == 0 else out


def logit(p):
    """Log-odds link; requires 0 < p < 1."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("logit requires probabilities strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def inv_logit(x):
    """Inverse log-odds, numerically stable on both tails."""
    out = expit(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Domain value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoseGrid:
    """Pre-specified dose levels (mg) plus the reference dose anchoring priors.

    The reference dose need not be a grid member; at that dose the slope term
    of every model vanishes, so intercept priors are stated there.
    """

    doses: tuple[float, ...]
    reference_dose: float

    def __post_init__(self):
        doses = tuple(float(d) for d in self.doses)
        object.__setattr__(self, "doses", doses)
        object.__setattr__(self, "reference_dose", float(self.reference_dose))
        if not doses:
            raise ValueError("dose grid is empty")
        if any(d <= 0.0 for d in doses):
            raise ValueError("all doses must be positive")
        if any(b <= a for a, b in zip(doses, doses[1:])):
            raise ValueError("doses must be strictly increasing")
        if self.reference_dose <= 0.0:
            raise ValueError("reference dose must be positive")

    def index_of(self, dose: float) -> int:
        for i, d in enumerate(self.doses):
            if d == dose:
                return i
        raise ValueError(f"dose {dose} mg is not on the grid")

    def level_above(self, dose: float) -> float:
        """Next grid dose above `dose`, or `dose` itself if already at the top."""
        i = self.index_of(dose)
        return self.doses[min(i + 1, len(self.doses) - 1)]

    def log_ratio(self, dose) -> np.ndarray:
        """log(dose / reference_dose), vectorized."""
        return np.log(np.asarray(dose, dtype=float) / self.reference_dose)


@dataclass(frozen=True)
class CyclePlan:
    """Fixed-length treatment cycles and the reference cycle used by priors."""

    n_cycles: int = 3
    cycle_length_days: float = 42.0
    reference_cycle: int = 3

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ValueError("need at least one cycle")
        if self.cycle_length_days <= 0.0:
            raise ValueError("cycle length must be positive")
        if not 1 <= self.reference_cycle <= self.n_cycles:
            raise ValueError("reference cycle must lie within the plan")

    @property
    def reference_time_days(self) -> float:
        return self.reference_cycle * self.cycle_length_days

    @property
    def total_days(self) -> float:
        return self.n_cycles * self.cycle_length_days


@dataclass(frozen=True)
class TteParams:
    """Parameters of the compound time-to-first-DLT model.

    alpha1/log_beta1 place the experimental drug's log-hazard (intercept at
    the reference dose, positive slope on log-dose).  alpha2 is the
    background log-hazard in cycle 1; gamma2 scales a monotone shift across
    cycles whose per-transition fractions xi live on the simplex.
    """

    alpha1: float
    log_beta1: float
    alpha2: float
    gamma2: float
    xi: tuple[float, ...]

    def __post_init__(self):
        xi = tuple(float(x) for x in self.xi)
        object.__setattr__(self, "xi", xi)
        if any(x < 0.0 for x in xi):
            raise ValueError("xi components must be non-negative")
        if xi and abs(sum(xi) - 1.0) > 1e-12:
            raise ValueError("xi must sum to 1 (tolerance 1e-12)")

    @property
    def beta1(self) -> float:
        return float(np.exp(self.log_beta1))


@dataclass(frozen=True)
class BlrmParams:
    """Parameters of the two-component logistic comparator."""

    alpha1: float
    log_beta1: float
    alpha2: float

    @property
    def beta1(self) -> float:
        return float(np.exp(self.log_beta1))


@dataclass(frozen=True)
class PatientRecord:
    """One subject's observed follow-up: dose, cycles at risk, event flag.

    u_cycles counts completed (or event) cycles; delta = 1 marks a DLT in
    cycle u_cycles.  A record with u_cycles = 0 carries no at-risk time and
    contributes nothing to any likelihood.
    """

    id: str
    dose: float
    u_cycles: int
    delta: int
    enroll_time: float = 0.0
    dropout_flag: bool = False

    def __post_init__(self):
        if self.dose <= 0.0:
            raise ValueError(f"patient {self.id}: dose must be positive")
        if self.u_cycles < 0:
            raise ValueError(f"patient {self.id}: u_cycles must be >= 0")
        if self.delta not in (0, 1):
            raise ValueError(f"patient {self.id}: delta must be 0 or 1")
        if self.delta == 1 and self.u_cycles < 1:
            raise ValueError(f"patient {self.id}: an event requires u_cycles >= 1")


@dataclass(frozen=True)
class CycleHazards:
    """Per-cycle hazard decomposition (1/day): drug, background, total."""

    h1: float
    h2: np.ndarray = field(repr=False)
    total: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# Hazard/probability arithmetic (scalar API on top of the batch kernels)
# ---------------------------------------------------------------------------

def _background_log_hazards(alpha2, gamma2, xi, n_cycles: int) -> np.ndarray:
    """log h2 per cycle; broadcasts over a leading draw axis.

    The cycle effect enters as (J-1) * gamma2 * (fraction of the shift
    accumulated before the cycle), with the fractions xi summing to one so
    the last cycle carries the full (J-1)*gamma2 increment.
    """
    alpha2 = np.asarray(alpha2, dtype=float)
    gamma2 = np.asarray(gamma2, dtype=float)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    cum = np.concatenate(
        [np.zeros((xi.shape[0], 1)), np.cumsum(xi, axis=1)], axis=1
    )[:, :n_cycles]
    return alpha2[..., None] + (n_cycles - 1) * gamma2[..., None] * cum


def tte_hazards_batch(
    alpha1,
    log_beta1,
    alpha2,
    gamma2,
    xi,
    log_dose_ratio,
    n_cycles: int,
    include_background: bool = True,
) -> np.ndarray:
    """Total per-cycle hazards with shape (draws, doses, cycles).

    Parameters are arrays of shape (draws,) (xi: (draws, J-1)) and
    log_dose_ratio has shape (doses,).
    """
    alpha1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
    beta1 = np.exp(np.atleast_1d(np.asarray(log_beta1, dtype=float)))
    log_dose_ratio = np.atleast_1d(np.asarray(log_dose_ratio, dtype=float))
    h1 = np.exp(alpha1[:, None] + beta1[:, None] * log_dose_ratio[None, :])
    if include_background:
        h2 = np.exp(
            _background_log_hazards(
                np.atleast_1d(alpha2), np.atleast_1d(gamma2), xi, n_cycles
            )
        )
    else:
        h2 = np.zeros((h1.shape[0], n_cycles))
    return h1[:, :, None] + h2[:, None, :]


def cycle_hazards(
    params: TteParams,
    dose: float,
    grid: DoseGrid,
    plan: CyclePlan,
    include_background: bool = True,
) -> CycleHazards:
    """Hazard decomposition at one dose: constant drug part, per-cycle background."""
    if dose <= 0.0:
        raise ValueError("dose must be positive")
    h1 = float(np.exp(params.alpha1 + params.beta1 * grid.log_ratio(dose)))
    if include_background:
        h2 = np.exp(
            _background_log_hazards(
                params.alpha2, params.gamma2, np.asarray(params.xi), plan.n_cycles
            )
        )[0]
    else:
        h2 = np.zeros(plan.n_cycles)
    return CycleHazards(h1=h1, h2=h2, total=h1 + h2)


def survivor_and_density(hazards, plan: CyclePlan):
    """Cumulative hazard, survivor and event density per cycle.

    H_j accumulates the full cycle including j; S_j = exp(-H_j) is survival
    past the end of cycle j; the event density is evaluated at the recorded
    (cycle-end) time, f_j = h_j * exp(-H_j).
    """
    h = hazards.total if isinstance(hazards, CycleHazards) else np.asarray(hazards, float)
    if h.shape[-1] != plan.n_cycles:
        raise ValueError("hazard vector length must equal the number of cycles")
    H = plan.cycle_length_days * np.cumsum(h, axis=-1)
    S = np.exp(-H)
    f = h * S
    return H, S, f


def event_probabilities(hazards, plan: CyclePlan):
    """Per-cycle conditional event probabilities q_j and the cumulative total.

    q_j = 1 - exp(-h_j * delta) conditions on entering cycle j event-free;
    the cumulative probability over all planned cycles is
    1 - exp(-H_J) = 1 - prod_j (1 - q_j).
    """
    h = hazards.total if isinstance(hazards, CycleHazards) else np.asarray(hazards, float)
    q = -np.expm1(-h * plan.cycle_length_days)
    pi_total = -np.expm1(-plan.cycle_length_days * np.sum(h, axis=-1))
    return q, float(pi_total) if np.ndim(pi_total) == 0 else pi_total


def blrm_probability_batch(
    alpha1, log_beta1, alpha2, log_dose_ratio, include_background: bool = True
) -> np.ndarray:
    """Window DLT probability for the logistic comparator, shape (draws, doses)."""
    alpha1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
    beta1 = np.exp(np.atleast_1d(np.asarray(log_beta1, dtype=float)))
    log_dose_ratio = np.atleast_1d(np.asarray(log_dose_ratio, dtype=float))
    p1 = inv_logit(alpha1[:, None] + beta1[:, None] * log_dose_ratio[None, :])
    if not include_background:
        return p1
    p2 = inv_logit(np.atleast_1d(np.asarray(alpha2, dtype=float)))[:, None]
    return 1.0 - (1.0 - p1) * (1.0 - p2)


def blrm_dlt_probability(
    params: BlrmParams, dose: float, grid: DoseGrid, include_background: bool = True
) -> float:
    """Overall DLT probability: independent drug and background components."""
    if dose <= 0.0:
        raise ValueError("dose must be positive")
    out = blrm_probability_batch(
        params.alpha1,
        params.log_beta1,
        params.alpha2,
        grid.log_ratio(dose),
        include_background=include_background,
    )
    return float(out[0, 0])
