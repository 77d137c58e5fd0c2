"""Observed-data log-likelihoods for both model families.

The time-to-event likelihood multiplies, per patient, the event density at
the recorded cycle (delta = 1) or the survivor at the censoring cycle
(delta = 0); patients with no completed cycle contribute nothing.  The
binomial comparators reduce each record to a binary outcome over a fixed
cycle window and drop records that neither complete the window nor show an
event inside it.

Records aggregate into (dose, cycles, outcome) groups with counts, so a
likelihood evaluation costs a handful of vectorized operations regardless
of sample size.  The samplers evaluate the same kernels through index
arrays compiled once per fit (see :class:`TteGroups` / :class:`BlrmGroups`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    BlrmParams,
    CyclePlan,
    DoseGrid,
    PatientRecord,
    TteParams,
    inv_logit,
)

__all__ = [
    "Dataset",
    "TteGroups",
    "BlrmGroups",
    "log_likelihood_tte",
    "log_likelihood_blrm",
    "blrm_evaluable_outcomes",
    "tte_loglik_batch",
    "blrm_loglik_batch",
]


@dataclass(frozen=True)
class Dataset:
    """Patient records bound to the dose grid and cycle plan they came from."""

    records: tuple[PatientRecord, ...]
    grid: DoseGrid
    plan: CyclePlan

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for r in self.records:
            if r.u_cycles > self.plan.n_cycles:
                raise ValueError(
                    f"patient {r.id}: u_cycles {r.u_cycles} exceeds the "
                    f"{self.plan.n_cycles}-cycle plan"
                )

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class TteGroups:
    """Compiled (dose, cycles, outcome) aggregation for the survival kernel."""

    log_dose_ratio: np.ndarray  # (D,) unique doses present
    dose_index: np.ndarray      # (G,) into log_dose_ratio
    cycle_index: np.ndarray     # (G,) zero-based event/censor cycle
    is_event: np.ndarray        # (G,) floats
    counts: np.ndarray          # (G,)
    n_cycles: int
    cycle_length_days: float

    @classmethod
    def compile(cls, data: Dataset) -> "TteGroups":
        groups: dict[tuple[float, int, int], int] = {}
        for r in data.records:
            if r.u_cycles == 0:
                continue
            key = (r.dose, r.u_cycles, r.delta)
            groups[key] = groups.get(key, 0) + 1
        items = sorted(groups.items())
        doses = sorted({k[0] for k, _ in items})
        lookup = {d: i for i, d in enumerate(doses)}
        return cls(
            log_dose_ratio=data.grid.log_ratio(np.array(doses or [data.grid.reference_dose])),
            dose_index=np.array([lookup[k[0]] for k, _ in items], dtype=np.intp),
            cycle_index=np.array([k[1] - 1 for k, _ in items], dtype=np.intp),
            is_event=np.array([k[2] for k, _ in items], dtype=float),
            counts=np.array([n for _, n in items], dtype=float),
            n_cycles=data.plan.n_cycles,
            cycle_length_days=data.plan.cycle_length_days,
        )

    @property
    def empty(self) -> bool:
        return self.counts.size == 0

    def loglik(self, alpha1, beta1, alpha2, gamma2, xi_cum) -> np.ndarray:
        """Kernel: log-likelihood for a draw batch.

        alpha1/beta1/alpha2/gamma2 are (K,); xi_cum is the (K, J) cumulative
        simplex prefix [0, xi_1, xi_1+xi_2, ...].
        """
        if self.empty:
            return np.zeros(np.shape(alpha1)[0])
        h1 = np.exp(alpha1[:, None] + beta1[:, None] * self.log_dose_ratio[None, :])
        h2 = np.exp(alpha2[:, None] + (self.n_cycles - 1) * gamma2[:, None] * xi_cum)
        h = h1[:, :, None] + h2[:, None, :]
        H = self.cycle_length_days * np.cumsum(h, axis=2)
        picked_h = h[:, self.dose_index, self.cycle_index]
        picked_H = H[:, self.dose_index, self.cycle_index]
        return (self.is_event[None, :] * np.log(picked_h) - picked_H) @ self.counts


@dataclass(frozen=True)
class BlrmGroups:
    """Compiled (dose, outcome) aggregation for the binomial kernel."""

    log_dose_ratio: np.ndarray
    dose_index: np.ndarray
    outcome: np.ndarray
    counts: np.ndarray

    @classmethod
    def compile(cls, data: Dataset, window_cycles: int) -> "BlrmGroups":
        items = blrm_evaluable_outcomes(data, window_cycles)
        doses = sorted({k[0] for k, _ in items})
        lookup = {d: i for i, d in enumerate(doses)}
        return cls(
            log_dose_ratio=data.grid.log_ratio(np.array(doses or [data.grid.reference_dose])),
            dose_index=np.array([lookup[k[0]] for k, _ in items], dtype=np.intp),
            outcome=np.array([k[1] for k, _ in items], dtype=float),
            counts=np.array([n for _, n in items], dtype=float),
        )

    @property
    def empty(self) -> bool:
        return self.counts.size == 0

    def loglik(self, alpha1, beta1, alpha2) -> np.ndarray:
        """Kernel: Bernoulli log-likelihood for a draw batch of (K,) arrays."""
        if self.empty:
            return np.zeros(np.shape(alpha1)[0])
        p1 = inv_logit(alpha1[:, None] + beta1[:, None] * self.log_dose_ratio[None, :])
        p2 = inv_logit(alpha2)[:, None]
        p = np.clip(1.0 - (1.0 - p1) * (1.0 - p2), 1e-300, 1.0 - 1e-16)
        picked = p[:, self.dose_index]
        terms = self.outcome[None, :] * np.log(picked) \
            + (1.0 - self.outcome)[None, :] * np.log1p(-picked)
        return terms @ self.counts


def blrm_evaluable_outcomes(data: Dataset, window_cycles: int):
    """Reduce records to binary outcomes over a fixed window.

    An event inside the window counts as y = 1.  Anyone at risk through the
    whole window counts as y = 0 -- including patients whose event came
    later, since reaching a later cycle means the window passed event-free.
    Only censoring before window completion (dropout, partial follow-up) is
    excluded rather than imputed.  Returns aggregated ((dose, y), count).
    """
    if not 1 <= window_cycles <= data.plan.n_cycles:
        raise ValueError("window must lie within the cycle plan")
    groups: dict[tuple[float, int], int] = {}
    for r in data.records:
        if r.delta == 1 and r.u_cycles <= window_cycles:
            y = 1
        elif r.u_cycles >= window_cycles:
            y = 0
        else:
            continue
        key = (r.dose, y)
        groups[key] = groups.get(key, 0) + 1
    return tuple(sorted(groups.items()))


def _xi_cum(xi: np.ndarray, n_cycles: int) -> np.ndarray:
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    cum = np.concatenate([np.zeros((xi.shape[0], 1)), np.cumsum(xi, axis=1)], axis=1)
    return cum[:, :n_cycles]


def tte_loglik_batch(alpha1, log_beta1, alpha2, gamma2, xi, data: Dataset) -> np.ndarray:
    """Time-to-event log-likelihood for a batch of parameter draws."""
    groups = TteGroups.compile(data)
    alpha1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
    return groups.loglik(
        alpha1,
        np.exp(np.atleast_1d(np.asarray(log_beta1, dtype=float))),
        np.atleast_1d(np.asarray(alpha2, dtype=float)),
        np.atleast_1d(np.asarray(gamma2, dtype=float)),
        _xi_cum(xi, data.plan.n_cycles),
    )


def log_likelihood_tte(params: TteParams, data: Dataset) -> float:
    """Log-likelihood of the compound time-to-first-DLT model (scalar)."""
    out = tte_loglik_batch(
        params.alpha1,
        params.log_beta1,
        params.alpha2,
        params.gamma2,
        np.asarray(params.xi)[None, :],
        data,
    )
    return float(out[0])


def blrm_loglik_batch(
    alpha1, log_beta1, alpha2, data: Dataset, window_cycles: int
) -> np.ndarray:
    """Bernoulli log-likelihood of the logistic comparator for a draw batch."""
    groups = BlrmGroups.compile(data, window_cycles)
    alpha1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
    return groups.loglik(
        alpha1,
        np.exp(np.atleast_1d(np.asarray(log_beta1, dtype=float))),
        np.atleast_1d(np.asarray(alpha2, dtype=float)),
    )


def log_likelihood_blrm(params: BlrmParams, data: Dataset, window_cycles: int) -> float:
    """Binomial log-likelihood over the window; 0 when nothing is evaluable."""
    out = blrm_loglik_batch(
        params.alpha1, params.log_beta1, params.alpha2, data, window_cycles
    )
    return float(out[0])
