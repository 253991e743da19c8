"""Intrinsic second-order random walk: conditionals, penalty, forward simulation."""
from __future__ import annotations

import numpy as np
from scipy import sparse

MIN_LENGTH = 5


def rw2_conditional(u, t: int, v_e: float) -> tuple[float, float]:
    """Full conditional of ``u[t]`` given the rest (``t`` is 0-based).

    Returns ``(mean, variance)``. Boundary months use the one-sided
    weights; interior months use (-1/6, 2/3, 2/3, -1/6) with variance v_e/6.
    """
    T = len(u)
    if T < MIN_LENGTH:
        raise ValueError(f"RW2 field needs at least {MIN_LENGTH} points, got {T}")
    if not 0 <= t < T:
        raise IndexError(f"index {t} out of range for field of length {T}")
    if t == 0:
        return 2.0 * u[1] - u[2], v_e
    if t == 1:
        return 0.4 * u[0] + 0.8 * u[2] - 0.2 * u[3], v_e / 5.0
    if t == T - 2:
        return -0.2 * u[T - 4] + 0.8 * u[T - 3] + 0.4 * u[T - 1], v_e / 5.0
    if t == T - 1:
        return -u[T - 3] + 2.0 * u[T - 2], v_e
    return (
        -u[t - 2] / 6.0 + 2.0 * u[t - 1] / 3.0 + 2.0 * u[t + 1] / 3.0 - u[t + 2] / 6.0,
        v_e / 6.0,
    )


def second_difference_matrix(T: int) -> sparse.csr_matrix:
    """(T-2) x T operator with rows (1, -2, 1)."""
    return sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(T - 2, T), format="csr")


def rw2_structure(T: int) -> np.ndarray:
    """Dense penalty ``D^T D``; the RW2 precision is this divided by v_e."""
    if T < MIN_LENGTH:
        raise ValueError(f"RW2 structure needs T >= {MIN_LENGTH}, got {T}")
    D = second_difference_matrix(T)
    return (D.T @ D).toarray()


def rw2_banded(T: int) -> np.ndarray:
    """Upper banded storage (3 x T, scipy ``ab`` layout) of ``D^T D``."""
    if T < MIN_LENGTH:
        raise ValueError(f"RW2 structure needs T >= {MIN_LENGTH}, got {T}")
    diag = np.full(T, 6.0)
    diag[[0, -1]] = 1.0
    diag[[1, -2]] = 5.0
    off1 = np.full(T - 1, -4.0)
    off1[[0, -1]] = -2.0
    ab = np.zeros((3, T))
    ab[2] = diag
    ab[1, 1:] = off1
    ab[0, 2:] = 1.0
    return ab


def second_differences(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u[2:] - 2.0 * u[1:-1] + u[:-2]


def rw2_logpenalty(u, v_e: float) -> float:
    """Log-kernel of the improper RW2 density (no normalizing constant)."""
    d = second_differences(u)
    return -0.5 * float(d @ d) / v_e


def rw2_forward_simulate(u_last2, horizon: int, v_e, rng: np.random.Generator) -> np.ndarray:
    """Extend a field by ``horizon`` steps of ``u_t = 2 u_{t-1} - u_{t-2} + e_t``.

    ``u_last2`` is ``(u_{T-1}, u_T)``, or an ``(n, 2)`` array to extend
    ``n`` fields at once with per-row ``v_e``. Returns shape ``(horizon,)``
    or ``(n, horizon)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    last = np.asarray(u_last2, dtype=float)
    single = last.ndim == 1
    last = np.atleast_2d(last)
    n = last.shape[0]
    sd = np.sqrt(np.broadcast_to(np.asarray(v_e, dtype=float), (n,)))
    eps = rng.standard_normal((n, horizon)) * sd[:, None]
    out = np.empty((n, horizon))
    prev2, prev1 = last[:, 0], last[:, 1]
    for h in range(horizon):
        cur = 2.0 * prev1 - prev2 + eps[:, h]
        out[:, h] = cur
        prev2, prev1 = prev1, cur
    return out[0] if single else out
