"""Unconstrained log-posterior targets consumed by the sampler and oracle.

Both model families are sampled on a fully unconstrained vector: the slope
already lives on the log scale and the simplex fractions of the
time-to-event model enter through the additive log-ratio map (with its
Jacobian folded into the target).  A target compiles its dataset into index
arrays once, evaluates batches of unconstrained points, draws initial
values from its prior, and maps draws back to the constrained scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .likelihood import BlrmGroups, Dataset, TteGroups
from .priors import (
    PriorSpecBlrm,
    PriorSpecTte,
    simplex_to_unconstrained,
    unconstrained_to_simplex,
)

__all__ = ["TtePosterior", "BlrmPosterior", "make_target"]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _normal_block(means: np.ndarray, sds: np.ndarray):
    """Constant and callable for a product of independent normal densities."""
    const = float(-0.5 * len(means) * _LOG_2PI - np.sum(np.log(sds)))

    def logpdf(x: np.ndarray) -> np.ndarray:
        z = (x - means) / sds
        return const - 0.5 * np.einsum("ij,ij->i", z, z)

    return logpdf


@dataclass(frozen=True)
class TtePosterior:
    """Posterior of the time-to-event model on the unconstrained scale.

    Layout: [alpha1, log_beta1, alpha2, gamma2, alr(xi)...], dimension
    4 + (J - 2) for J >= 2 cycles.
    """

    data: Dataset
    prior: PriorSpecTte
    _groups: TteGroups = field(init=False, repr=False, compare=False)
    _normal_logpdf: object = field(init=False, repr=False, compare=False)
    _dirichlet_const: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_groups", TteGroups.compile(self.data))
        p = self.prior
        object.__setattr__(
            self,
            "_normal_logpdf",
            _normal_block(
                np.array([p.alpha1_mean, p.log_beta1_mean, p.alpha2_mean, p.gamma2_mean]),
                np.array([p.alpha1_sd, p.log_beta1_sd, p.alpha2_sd, p.gamma2_sd]),
            ),
        )
        conc = np.asarray(p.xi_concentration)
        object.__setattr__(
            self, "_dirichlet_const", float(gammaln(conc.sum()) - gammaln(conc).sum())
        )

    @property
    def kind(self) -> str:
        return "tte"

    @property
    def dim(self) -> int:
        return 4 + max(self.data.plan.n_cycles - 2, 0)

    @property
    def param_names(self) -> tuple[str, ...]:
        n_xi = self.data.plan.n_cycles - 1
        return ("alpha1", "log_beta1", "alpha2", "gamma2") + tuple(
            f"xi_{i + 1}" for i in range(n_xi)
        )

    @property
    def sampled_names(self) -> tuple[str, ...]:
        return ("alpha1", "log_beta1", "alpha2", "gamma2") + tuple(
            f"xi_alr_{i + 1}" for i in range(self.dim - 4)
        )

    def prior_scales(self) -> np.ndarray:
        p = self.prior
        return np.array(
            [p.alpha1_sd, p.log_beta1_sd, p.alpha2_sd, p.gamma2_sd]
            + [1.0] * (self.dim - 4)
        )

    def _xi_from(self, z: np.ndarray) -> np.ndarray:
        n_xi = self.data.plan.n_cycles - 1
        if self.dim > 4:
            return unconstrained_to_simplex(z[:, 4:])
        return np.ones((z.shape[0], n_xi))

    def log_post(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        lp = self._normal_logpdf(z[:, :4])
        xi = self._xi_from(z)
        if self.dim > 4:
            log_xi = np.log(np.clip(xi, 1e-300, None))
            conc = np.asarray(self.prior.xi_concentration)
            # Dirichlet density plus the log-ratio-transform Jacobian
            lp = lp + self._dirichlet_const + log_xi @ conc
        xi_cum = np.concatenate(
            [np.zeros((xi.shape[0], 1)), np.cumsum(xi, axis=1)], axis=1
        )[:, : self.data.plan.n_cycles]
        lp = lp + self._groups.loglik(z[:, 0], np.exp(z[:, 1]), z[:, 2], z[:, 3], xi_cum)
        return np.where(np.isfinite(lp), lp, -np.inf)

    def sample_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.prior
        z = np.column_stack(
            [
                rng.normal(p.alpha1_mean, p.alpha1_sd, n),
                rng.normal(p.log_beta1_mean, p.log_beta1_sd, n),
                rng.normal(p.alpha2_mean, p.alpha2_sd, n),
                rng.normal(p.gamma2_mean, p.gamma2_sd, n),
            ]
        )
        if self.dim > 4:
            xi = rng.dirichlet(np.asarray(p.xi_concentration), size=n)
            z = np.column_stack([z, simplex_to_unconstrained(xi)])
        return z

    def constrain(self, z: np.ndarray) -> np.ndarray:
        """Constrained draw matrix with columns :attr:`param_names`."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.column_stack([z[:, :4], self._xi_from(z)])


@dataclass(frozen=True)
class BlrmPosterior:
    """Posterior of the logistic comparator over a fixed cycle window."""

    data: Dataset
    prior: PriorSpecBlrm
    window_cycles: int
    _groups: BlrmGroups = field(init=False, repr=False, compare=False)
    _normal_logpdf: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_groups", BlrmGroups.compile(self.data, self.window_cycles)
        )
        object.__setattr__(
            self, "_normal_logpdf", _normal_block(self.prior_means(), self.prior_scales())
        )

    @property
    def kind(self) -> str:
        return "blrm"

    @property
    def dim(self) -> int:
        return 3

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("alpha1", "log_beta1", "alpha2")

    @property
    def sampled_names(self) -> tuple[str, ...]:
        return self.param_names

    def prior_means(self) -> np.ndarray:
        p = self.prior
        return np.array([p.alpha1_mean, p.log_beta1_mean, p.alpha2_mean])

    def prior_scales(self) -> np.ndarray:
        p = self.prior
        return np.array([p.alpha1_sd, p.log_beta1_sd, p.alpha2_sd])

    def log_prior(self, z: np.ndarray) -> np.ndarray:
        return self._normal_logpdf(np.atleast_2d(np.asarray(z, dtype=float)))

    def log_lik(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self._groups.loglik(z[:, 0], np.exp(z[:, 1]), z[:, 2])

    def log_post(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        lp = self._normal_logpdf(z) + self._groups.loglik(z[:, 0], np.exp(z[:, 1]), z[:, 2])
        return np.where(np.isfinite(lp), lp, -np.inf)

    def sample_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.prior
        return np.column_stack(
            [
                rng.normal(p.alpha1_mean, p.alpha1_sd, n),
                rng.normal(p.log_beta1_mean, p.log_beta1_sd, n),
                rng.normal(p.alpha2_mean, p.alpha2_sd, n),
            ]
        )

    def constrain(self, z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(z, dtype=float)).copy()


def make_target(model: str, data: Dataset, priors) -> TtePosterior | BlrmPosterior:
    """Build the posterior target for a method name (B1, B3, TCO, TCU).

    `priors` carries `.tte`, `.b1`, `.b3` prior specs.
    """
    if model in ("TCO", "TCU"):
        return TtePosterior(data=data, prior=priors.tte)
    if model == "B1":
        return BlrmPosterior(data=data, prior=priors.b1, window_cycles=1)
    if model == "B3":
        return BlrmPosterior(
            data=data, prior=priors.b3, window_cycles=min(3, data.plan.n_cycles)
        )
    raise ValueError(f"unknown model {model!r}")
