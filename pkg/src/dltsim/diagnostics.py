"""Chain convergence diagnostics: split potential scale reduction and bulk ESS.

Both statistics operate on a (chains, draws) array for one scalar quantity.
Chains are split in half before anything else, so slow trends inside a chain
inflate the between-chain variance.  The effective sample size rank-
normalizes the split chains and applies Geyer's initial monotone sequence to
the pooled autocorrelation.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm, rankdata

__all__ = ["split_rhat", "ess_bulk"]


def _split_chains(chains: np.ndarray) -> np.ndarray:
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("expected a (chains, draws) array")
    n_chain, n_draw = chains.shape
    if n_chain < 2 or n_draw < 4:
        raise ValueError("need >= 2 chains and >= 4 draws per chain")
    half = n_draw // 2
    return np.vstack([chains[:, :half], chains[:, n_draw - half:]])


def _z_scale(a: np.ndarray) -> np.ndarray:
    ranks = rankdata(a, method="average").reshape(a.shape)
    return norm.ppf((ranks - 0.5) / a.size)


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction; +inf for zero-variance chains."""
    a = _split_chains(chains)
    n = a.shape[1]
    within = np.mean(np.var(a, axis=1, ddof=1))
    if within == 0.0:
        return float("inf")
    between = n * np.var(np.mean(a, axis=1), ddof=1)
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance via FFT, lags 0..n-1."""
    n = x.size
    xc = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real
    return acov / n


def ess_bulk(chains: np.ndarray) -> float:
    """Rank-normalized bulk effective sample size across split chains."""
    a = _split_chains(chains)
    if np.var(a) == 0.0:
        return float("nan")
    a = _z_scale(a)
    n_chain, n_draw = a.shape
    acov = np.array([_autocovariance(a[c]) for c in range(n_chain)])
    chain_means = a.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_means, ddof=1)

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n_draw - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    # enforce monotone decreasing pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1: max_t + 2].sum()
    return float(n_chain * n_draw / max(tau, 1.0 / np.log10(n_chain * n_draw + 10)))
