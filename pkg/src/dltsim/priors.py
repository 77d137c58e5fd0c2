"""Prior specifications and the simplex parameterization.

Intercept priors are anchored at the reference dose: for the time-to-event
family the prior mean for an intercept is cloglog(anchor probability) minus
log(reference time in days), so that at the reference dose the anchor is the
event probability by the reference time-point.  The logistic comparators use
logit(anchor) directly, matched so both families agree on the cumulative DLT
probability over their observation window.

The cycle-effect fractions xi live on the simplex and are sampled on an
unconstrained additive log-ratio scale with the usual Jacobian correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .model import CyclePlan, cloglog, logit

__all__ = [
    "PriorSpecTte",
    "PriorSpecBlrm",
    "default_tte_prior",
    "default_b1_prior",
    "default_b3_prior",
    "log_prior_tte",
    "log_prior_blrm",
    "simplex_to_unconstrained",
    "unconstrained_to_simplex",
    "simplex_log_jacobian",
]

# Anchor probabilities quoted at the reference dose/time (drug, background).
TTE_ANCHORS = (0.09, 0.11)
B1_ANCHORS = (0.03, 0.04)
B3_ANCHORS = (0.09, 0.12)


@dataclass(frozen=True)
class PriorSpecTte:
    """Normal priors on (alpha1, log beta1, alpha2, gamma2), Dirichlet on xi."""

    alpha1_mean: float
    alpha1_sd: float
    log_beta1_mean: float
    log_beta1_sd: float
    alpha2_mean: float
    alpha2_sd: float
    gamma2_mean: float
    gamma2_sd: float
    xi_concentration: tuple[float, ...]

    def __post_init__(self):
        for name in ("alpha1_sd", "log_beta1_sd", "alpha2_sd", "gamma2_sd"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        conc = tuple(float(c) for c in self.xi_concentration)
        object.__setattr__(self, "xi_concentration", conc)
        if any(c <= 0.0 for c in conc):
            raise ValueError("Dirichlet concentrations must be positive")


@dataclass(frozen=True)
class PriorSpecBlrm:
    """Normal priors on (alpha1, log beta1, alpha2)."""

    alpha1_mean: float
    alpha1_sd: float
    log_beta1_mean: float
    log_beta1_sd: float
    alpha2_mean: float
    alpha2_sd: float

    def __post_init__(self):
        for name in ("alpha1_sd", "log_beta1_sd", "alpha2_sd"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def default_tte_prior(plan: CyclePlan) -> PriorSpecTte:
    """Time-to-event prior: anchors 9%/11% by the reference time-point."""
    log_ref_time = float(np.log(plan.reference_time_days))
    return PriorSpecTte(
        alpha1_mean=cloglog(TTE_ANCHORS[0]) - log_ref_time,
        alpha1_sd=1.0,
        log_beta1_mean=0.0,
        log_beta1_sd=float(np.log(4.0) / 1.96),
        alpha2_mean=cloglog(TTE_ANCHORS[1]) - log_ref_time,
        alpha2_sd=0.5,
        gamma2_mean=0.0,
        gamma2_sd=0.5,
        xi_concentration=(1.0,) * (plan.n_cycles - 1),
    )


def default_b1_prior() -> PriorSpecBlrm:
    """1-cycle comparator prior: anchors 3%/4% over the first cycle."""
    return PriorSpecBlrm(
        alpha1_mean=logit(B1_ANCHORS[0]),
        alpha1_sd=1.0,
        log_beta1_mean=0.0,
        log_beta1_sd=0.9,
        alpha2_mean=logit(B1_ANCHORS[1]),
        alpha2_sd=0.5,
    )


def default_b3_prior() -> PriorSpecBlrm:
    """3-cycle comparator prior: anchors 9%/12% over three cycles."""
    return PriorSpecBlrm(
        alpha1_mean=logit(B3_ANCHORS[0]),
        alpha1_sd=1.3,
        log_beta1_mean=0.0,
        log_beta1_sd=1.2,
        alpha2_mean=logit(B3_ANCHORS[1]),
        alpha2_sd=0.7,
    )


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

_LOG_2PI = float(np.log(2.0 * np.pi))


def normal_logpdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * (z * z + _LOG_2PI) - np.log(sd)


def dirichlet_logpdf(xi, concentration) -> float:
    xi = np.asarray(xi, dtype=float)
    conc = np.asarray(concentration, dtype=float)
    if xi.shape[-1] != conc.shape[-1]:
        raise ValueError("xi and concentration lengths differ")
    norm = gammaln(conc.sum()) - gammaln(conc).sum()
    return float(norm + np.sum((conc - 1.0) * np.log(xi), axis=-1))


def log_prior_tte(params, prior: PriorSpecTte) -> float:
    """Joint log prior density on the constrained scale."""
    lp = (
        normal_logpdf(params.alpha1, prior.alpha1_mean, prior.alpha1_sd)
        + normal_logpdf(params.log_beta1, prior.log_beta1_mean, prior.log_beta1_sd)
        + normal_logpdf(params.alpha2, prior.alpha2_mean, prior.alpha2_sd)
        + normal_logpdf(params.gamma2, prior.gamma2_mean, prior.gamma2_sd)
    )
    return float(lp) + dirichlet_logpdf(np.asarray(params.xi), prior.xi_concentration)


def log_prior_blrm(params, prior: PriorSpecBlrm) -> float:
    lp = (
        normal_logpdf(params.alpha1, prior.alpha1_mean, prior.alpha1_sd)
        + normal_logpdf(params.log_beta1, prior.log_beta1_mean, prior.log_beta1_sd)
        + normal_logpdf(params.alpha2, prior.alpha2_mean, prior.alpha2_sd)
    )
    return float(lp)


# ---------------------------------------------------------------------------
# Simplex <-> unconstrained (additive log-ratio against the last component)
# ---------------------------------------------------------------------------

def simplex_to_unconstrained(xi: np.ndarray) -> np.ndarray:
    """Map simplex rows (m components) to (m-1) free log-ratio coordinates."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    return np.log(xi[:, :-1]) - np.log(xi[:, -1:])


def unconstrained_to_simplex(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`simplex_to_unconstrained` (softmax with a fixed last slot)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    full = np.concatenate([z, np.zeros((z.shape[0], 1))], axis=1)
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def simplex_log_jacobian(xi: np.ndarray) -> np.ndarray:
    """log |det d(xi)/d(z)| = sum_k log xi_k over all m components."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    return np.sum(np.log(xi), axis=1)
