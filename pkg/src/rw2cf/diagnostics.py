"""Split R-hat and effective sample size for multi-chain output."""
from __future__ import annotations

import math

import numpy as np


def _split(chains: np.ndarray) -> np.ndarray:
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise ValueError("need at least 4 draws per chain")
    return np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)


def split_rhat(chains) -> float | None:
    """Potential scale reduction on split chains; ``chains`` is (m, n).

    Returns None when within-chain variance is zero (constant draws).
    """
    x = _split(np.asarray(chains, dtype=float))
    m, n = x.shape
    w = x.var(axis=1, ddof=1).mean()
    if not w > 0 or not np.isfinite(w):
        return None
    b = n * x.mean(axis=1).var(ddof=1)
    var_hat = (n - 1) / n * w + b / n
    return float(math.sqrt(var_hat / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def effective_sample_size(chains) -> float | None:
    """Multi-chain ESS with Geyer's initial monotone sequence on split chains."""
    x = _split(np.asarray(chains, dtype=float))
    m, n = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return None
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first non-positive pair, made monotone
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    total = 0.0
    prev = math.inf
    for p in pairs:
        if p <= 0:
            break
        p = min(p, prev)
        total += p
        prev = p
    tau = max(-1.0 + 2.0 * total, 1.0 / math.log10(m * n))
    return float(m * n / tau)
