"""Conjugate Gibbs sampler for the regression + RW2 trend model.

Model over the likelihood window::

    y_t ~ Normal(beta0 + X_t beta + gamma * y_{t-12} + u_t, 1/tau)
    u   ~ RW2 with innovation precision tau_e
    beta0, beta_k, gamma ~ Normal(0, prior_coef_variance)
    tau, tau_e ~ Gamma(shape, rate)
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .diagnostics import effective_sample_size, split_rhat
from .rw2 import rw2_banded, rw2_conditional, second_differences

log = logging.getLogger(__name__)

RHAT_WARN = 1.05
# weak proper prior on (u_1, u_2), relative to tau_e, used only when the data
# cannot pin the RW2 null space (fewer than two likelihood points)
_NULL_SPACE_JITTER = 1e-6


LATENT_SCHEMES = ("joint", "block", "single_site")


class NonFiniteStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    covariate_names: tuple[str, ...] = ()
    use_lag12: bool = True
    standardize_outcome: bool = False
    prior_coef_variance: float = 1000.0
    prior_gamma_shape: float = 1.0
    prior_gamma_rate: float = 0.01
    latent_update: str = "joint"

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        for name in ("prior_coef_variance", "prior_gamma_shape", "prior_gamma_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.latent_update not in LATENT_SCHEMES:
            raise ValueError(f"latent_update must be one of {LATENT_SCHEMES}, got {self.latent_update!r}")


@dataclass(frozen=True)
class SamplerSettings:
    chains: int = 4
    iterations: int = 20000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def draws_per_chain(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class ModelState:
    beta0: float
    beta: np.ndarray
    gamma: float
    u: np.ndarray
    tau: float
    tau_e: float

    def coef_vector(self, use_lag12: bool) -> np.ndarray:
        parts = [[self.beta0], np.asarray(self.beta, dtype=float)]
        if use_lag12:
            parts.append([self.gamma])
        return np.concatenate(parts)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite([self.beta0, self.gamma, self.tau, self.tau_e]).all()
            and np.isfinite(self.beta).all()
            and np.isfinite(self.u).all()
        )


def _split_coefs(coef: np.ndarray, k: int, use_lag12: bool) -> tuple[float, np.ndarray, float]:
    return float(coef[0]), coef[1 : 1 + k].copy(), float(coef[1 + k]) if use_lag12 else 0.0


def _draw_mvn_precision(P: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from Normal(P^-1 b, P^-1) via Cholesky of the precision."""
    try:
        L = linalg.cholesky(P, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NonFiniteStateError("coefficient conditional precision is not positive definite") from exc
    mean = linalg.cho_solve((L, True), b, check_finite=False)
    z = rng.standard_normal(len(b))
    return mean + linalg.solve_triangular(L, z, trans="T", lower=True, check_finite=False)


def _coef_system(state: ModelState, inp, config: ModelConfig):
    w = inp.window
    Z = inp.design[w]
    P = state.tau * (Z.T @ Z) + np.eye(Z.shape[1]) / config.prior_coef_variance
    b = state.tau * (Z.T @ (inp.y[w] - state.u[w]))
    return P, b


def coefficient_conditional(state: ModelState, inp, config: ModelConfig | None = None):
    """Mean and precision of (beta0, beta, gamma) given u and tau.

    Precision ``tau Z'Z + I/prior_var``, mean ``precision^-1 tau Z'(y - u)``
    with ``Z = [1 | X | lag12]`` over the likelihood window.
    """
    P, b = _coef_system(state, inp, config or ModelConfig())
    return np.linalg.solve(P, b), P


def gibbs_update_coefficients(state: ModelState, inp, rng: np.random.Generator, config: ModelConfig | None = None):
    """Joint Gaussian draw of (beta0, beta, gamma); returns the three parts."""
    P, b = _coef_system(state, inp, config or ModelConfig())
    return _split_coefs(_draw_mvn_precision(P, b, rng), inp.k, inp.use_lag12)


def _latent_targets(state: ModelState, inp) -> tuple[np.ndarray, np.ndarray]:
    """Per-month data precision and residual target for the latent update."""
    d = np.where(inp.mask, state.tau, 0.0)
    r = np.zeros(inp.T)
    w = inp.window
    r[w] = inp.y[w] - inp.design[w] @ state.coef_vector(inp.use_lag12)
    return d, r


def _latent_factor(tau_e: float, d: np.ndarray, penalty_ab: np.ndarray):
    """Upper banded Cholesky factor of ``tau_e * penalty + diag(d)``."""
    ab = tau_e * penalty_ab
    ab[2] += d
    if np.count_nonzero(d) < 2:
        ab[2, :2] += _NULL_SPACE_JITTER * tau_e
    try:
        return ab, linalg.cholesky_banded(ab, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NonFiniteStateError("latent conditional precision is not positive definite") from exc


def latent_conditional(state: ModelState, inp, penalty_ab: np.ndarray | None = None):
    """Mean and banded precision (scipy upper ``ab`` layout) of u given everything else."""
    d, r = _latent_targets(state, inp)
    ab, cb = _latent_factor(state.tau_e, d, rw2_banded(inp.T) if penalty_ab is None else penalty_ab)
    return linalg.cho_solve_banded((cb, False), d * r, check_finite=False), ab


def _draw_latent_block(tau_e: float, d: np.ndarray, r: np.ndarray, rng, penalty_ab: np.ndarray) -> np.ndarray:
    _, cb = _latent_factor(tau_e, d, penalty_ab)
    mean = linalg.cho_solve_banded((cb, False), d * r, check_finite=False)
    z = rng.standard_normal(len(d))
    return mean + linalg.solve_banded((0, 2), cb, z, check_finite=False)


def _draw_joint(tau, tau_e, Zw, yw, w, T, prior_prec, penalty_ab, rng):
    """Exact joint draw of (coefficients, u) given both precisions.

    u is integrated out through its banded conditional precision
    ``Q = tau_e * penalty + tau * diag(mask)``; the coefficients are drawn
    from the resulting Schur complement, then u given them reuses the same
    banded factor.
    """
    d = np.zeros(T)
    d[w] = tau
    _, cb = _latent_factor(tau_e, d, penalty_ab)
    p = Zw.shape[1]
    rhs = np.zeros((T, p + 1))
    rhs[w, :p] = tau * Zw
    rhs[w, p] = tau * yw
    sol = linalg.cho_solve_banded((cb, False), rhs, check_finite=False)
    G, g = sol[:, :p], sol[:, p]
    Pc = tau * (Zw.T @ Zw) + prior_prec - tau * (Zw.T @ G[w])
    Pc = 0.5 * (Pc + Pc.T)
    bc = tau * (Zw.T @ (yw - g[w]))
    coef = _draw_mvn_precision(Pc, bc, rng)
    z = rng.standard_normal(T)
    u = g - G @ coef + linalg.solve_banded((0, 2), cb, z, check_finite=False)
    return coef, u


def latent_site_conditional(u, t: int, tau_e: float, d_t: float, r_t: float) -> tuple[float, float]:
    """(mean, variance) of u_t combining its RW2 conditional with one data term.

    ``d_t`` is the data precision at month t (0 outside the likelihood
    window) and ``r_t`` the residual target y_t - beta0 - X_t beta - gamma y_{t-12}.
    """
    m, var = rw2_conditional(u, t, 1.0 / tau_e)
    prec = 1.0 / var + d_t
    return (m / var + d_t * r_t) / prec, 1.0 / prec


def _draw_latent_single_site(u: np.ndarray, tau_e: float, d: np.ndarray, r: np.ndarray, rng) -> np.ndarray:
    u = u.copy()
    order = rng.permutation(len(u))
    z = rng.standard_normal(len(u))
    for i, t in enumerate(order):
        mean, var = latent_site_conditional(u, t, tau_e, d[t], r[t])
        u[t] = mean + z[i] * math.sqrt(var)
    return u


def gibbs_update_latent(
    state: ModelState,
    inp,
    rng: np.random.Generator,
    scheme: str = "block",
    center: bool = True,
    _penalty_ab: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Draw u from its full conditional; returns ``(u, beta0)``.

    ``scheme="single_site"`` sweeps months in a random order using the RW2
    conditionals; ``"block"`` draws the whole field at once from the banded
    joint conditional. With ``center`` the mean of u is moved into beta0,
    which leaves the fitted values unchanged.
    """
    d, r = _latent_targets(state, inp)
    if scheme == "block":
        penalty_ab = rw2_banded(inp.T) if _penalty_ab is None else _penalty_ab
        u = _draw_latent_block(state.tau_e, d, r, rng, penalty_ab)
    elif scheme == "single_site":
        u = _draw_latent_single_site(np.asarray(state.u, dtype=float), state.tau_e, d, r, rng)
    else:
        raise ValueError(f"unknown latent scheme {scheme!r}")
    beta0 = state.beta0
    if center:
        shift = u.mean()
        u = u - shift
        beta0 = beta0 + shift
    return u, beta0


def residuals(state: ModelState, inp) -> np.ndarray:
    w = inp.window
    return inp.y[w] - inp.design[w] @ state.coef_vector(inp.use_lag12) - state.u[w]


def precision_conditionals(state: ModelState, inp, config: ModelConfig | None = None):
    """Gamma (shape, rate) pairs for tau and tau_e given everything else."""
    config = config or ModelConfig()
    a, b = config.prior_gamma_shape, config.prior_gamma_rate
    e = residuals(state, inp)
    dd = second_differences(state.u)
    return (a + 0.5 * len(e), b + 0.5 * float(e @ e)), (a + 0.5 * (inp.T - 2), b + 0.5 * float(dd @ dd))


def gibbs_update_precisions(state: ModelState, inp, rng: np.random.Generator, config: ModelConfig | None = None):
    """Conjugate Gamma draws; returns ``(tau, tau_e)``."""
    (a1, b1), (a2, b2) = precision_conditionals(state, inp, config)
    return float(rng.gamma(a1, 1.0 / b1)), float(rng.gamma(a2, 1.0 / b2))


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained states, merged across chains in ascending chain order."""

    chain: np.ndarray
    iteration: np.ndarray
    beta0: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray
    tau_e: np.ndarray
    u: np.ndarray
    covariate_names: tuple[str, ...] = ()
    use_lag12: bool = True
    acceptance: dict = field(default_factory=lambda: {"coefficients": 1.0, "latent": 1.0, "precisions": 1.0})

    def __len__(self) -> int:
        return len(self.beta0)

    @property
    def T(self) -> int:
        return self.u.shape[1]

    @property
    def n_chains(self) -> int:
        return len(np.unique(self.chain))

    def coef_matrix(self) -> np.ndarray:
        cols = [self.beta0[:, None], self.beta]
        if self.use_lag12:
            cols.append(self.gamma[:, None])
        return np.hstack(cols)

    def scalar_params(self, include_latent: bool = False) -> dict[str, np.ndarray]:
        out = {"beta0": self.beta0}
        for j, name in enumerate(self.covariate_names):
            out[f"beta.{name}"] = self.beta[:, j]
        if self.use_lag12:
            out["gamma"] = self.gamma
        out["tau"] = self.tau
        out["tau_e"] = self.tau_e
        if include_latent:
            for t in range(self.T):
                out[f"u.{t + 1}"] = self.u[:, t]
        return out

    def by_chain(self, values: np.ndarray) -> np.ndarray:
        """Reshape a per-draw vector to (chains, draws_per_chain)."""
        ids = np.unique(self.chain)
        return np.stack([values[self.chain == c] for c in ids])

    @classmethod
    def concatenate(cls, parts: list[PosteriorDraws]) -> PosteriorDraws:
        parts = sorted(parts, key=lambda p: int(p.chain[0]) if len(p) else 0)
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(
            chain=cat("chain"), iteration=cat("iteration"), beta0=cat("beta0"),
            beta=np.vstack([p.beta for p in parts]), gamma=cat("gamma"), tau=cat("tau"),
            tau_e=cat("tau_e"), u=np.vstack([p.u for p in parts]),
            covariate_names=first.covariate_names, use_lag12=first.use_lag12,
        )

    def to_csv(self) -> str:
        header = ["chain", "iter", "beta0"] + [f"beta.{n}" for n in self.covariate_names]
        header += ["gamma", "tau", "tau_e"] + [f"u.{t + 1}" for t in range(self.T)]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i in range(len(self)):
            row = [str(int(self.chain[i])), str(int(self.iteration[i])), repr(float(self.beta0[i]))]
            row += [repr(float(x)) for x in self.beta[i]]
            row += [repr(float(self.gamma[i])), repr(float(self.tau[i])), repr(float(self.tau_e[i]))]
            row += [repr(float(x)) for x in self.u[i]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, use_lag12: bool = True) -> PosteriorDraws:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty draws file")
        header = lines[0].split(",")
        required = ["chain", "iter", "beta0", "gamma", "tau", "tau_e"]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"draws file missing columns {missing}")
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float).reshape(-1, len(header))
        col = {name: j for j, name in enumerate(header)}
        names = tuple(h[len("beta."):] for h in header if h.startswith("beta."))
        u_cols = [h for h in header if h.startswith("u.")]
        return cls(
            chain=data[:, col["chain"]].astype(int),
            iteration=data[:, col["iter"]].astype(int),
            beta0=data[:, col["beta0"]],
            beta=data[:, [col[f"beta.{n}"] for n in names]].reshape(len(data), len(names)),
            gamma=data[:, col["gamma"]],
            tau=data[:, col["tau"]],
            tau_e=data[:, col["tau_e"]],
            u=data[:, [col[c] for c in u_cols]].reshape(len(data), len(u_cols)),
            covariate_names=names,
            use_lag12=use_lag12,
        )


def initial_state(inp, rng: np.random.Generator) -> ModelState:
    """Over-dispersed start: intercept near the outcome mean, jittered precisions."""
    w = inp.window
    y = inp.y[w] if len(w) else np.zeros(1)
    scale = float(np.std(y)) if len(y) > 1 and np.std(y) > 0 else 1.0
    return ModelState(
        beta0=float(np.mean(y) + scale * rng.normal(0, 0.5)),
        beta=rng.normal(0, 0.5, inp.k),
        gamma=float(rng.normal(0, 0.1)) if inp.use_lag12 else 0.0,
        u=np.zeros(inp.T),
        tau=float(np.exp(rng.normal(0, 0.5)) / scale**2),
        tau_e=float(np.exp(rng.normal(0, 0.5)) * 100.0 / scale**2),
    )


def run_chain(
    inp,
    config: ModelConfig,
    settings: SamplerSettings,
    chain_seed,
    chain_id: int = 0,
    init: ModelState | None = None,
    update_coefficients: bool = True,
    update_precisions: bool = True,
) -> PosteriorDraws:
    """One chain of sweeps: coefficients -> latent -> precisions.

    With ``latent_update="joint"`` the first two steps are a single draw of
    (coefficients, u) from their joint conditional. After the latent step u
    is centered and its mean moved into beta0.
    """
    rng = np.random.default_rng(chain_seed)
    state = init if init is not None else initial_state(inp, rng)
    use_lag = inp.use_lag12
    k = inp.k

    w = inp.window
    Zw = inp.design[w]
    yw = inp.y[w]
    ZtZ = Zw.T @ Zw
    prior_prec = np.eye(Zw.shape[1]) / config.prior_coef_variance
    penalty_ab = rw2_banded(inp.T)
    mask = inp.mask
    a, b_rate = config.prior_gamma_shape, config.prior_gamma_rate
    n_obs = len(w)

    keep = range(settings.burn_in, settings.iterations, settings.thin)
    n_keep = len(keep)
    out_beta0 = np.empty(n_keep)
    out_beta = np.empty((n_keep, k))
    out_gamma = np.empty(n_keep)
    out_tau = np.empty(n_keep)
    out_tau_e = np.empty(n_keep)
    out_u = np.empty((n_keep, inp.T))
    out_iter = np.empty(n_keep, dtype=int)

    coef = state.coef_vector(use_lag)
    u = np.array(state.u, dtype=float)
    tau, tau_e = state.tau, state.tau_e
    slot = 0
    joint = config.latent_update == "joint" and update_coefficients
    for it in range(settings.iterations):
        if joint:
            coef, u = _draw_joint(tau, tau_e, Zw, yw, w, inp.T, prior_prec, penalty_ab, rng)
        else:
            if update_coefficients:
                P = tau * ZtZ + prior_prec
                coef = _draw_mvn_precision(P, tau * (Zw.T @ (yw - u[w])), rng)
            d = np.where(mask, tau, 0.0)
            r = np.zeros(inp.T)
            r[w] = yw - Zw @ coef
            if config.latent_update == "single_site":
                u = _draw_latent_single_site(u, tau_e, d, r, rng)
            else:
                u = _draw_latent_block(tau_e, d, r, rng, penalty_ab)
        shift = u.mean()
        u -= shift
        coef[0] += shift

        if update_precisions:
            e = yw - Zw @ coef - u[w]
            tau = rng.gamma(a + 0.5 * n_obs, 1.0 / (b_rate + 0.5 * float(e @ e)))
            dd = second_differences(u)
            tau_e = rng.gamma(a + 0.5 * (inp.T - 2), 1.0 / (b_rate + 0.5 * float(dd @ dd)))

        if not (np.isfinite(coef).all() and np.isfinite(u).all() and math.isfinite(tau) and math.isfinite(tau_e)):
            raise NonFiniteStateError(f"non-finite state in chain {chain_id} at iteration {it}")

        if it >= settings.burn_in and (it - settings.burn_in) % settings.thin == 0:
            b0, beta, gamma = _split_coefs(coef, k, use_lag)
            out_beta0[slot], out_beta[slot], out_gamma[slot] = b0, beta, gamma
            out_tau[slot], out_tau_e[slot] = tau, tau_e
            out_u[slot] = u
            out_iter[slot] = it
            slot += 1

    return PosteriorDraws(
        chain=np.full(n_keep, chain_id), iteration=out_iter, beta0=out_beta0, beta=out_beta,
        gamma=out_gamma, tau=out_tau, tau_e=out_tau_e, u=out_u,
        covariate_names=tuple(inp.covariate_names), use_lag12=use_lag,
    )


def run_chains(inp, config: ModelConfig, settings: SamplerSettings, **kwargs) -> PosteriorDraws:
    seeds = np.random.SeedSequence(settings.seed).spawn(settings.chains)
    parts = [run_chain(inp, config, settings, seeds[c], chain_id=c, **kwargs) for c in range(settings.chains)]
    return PosteriorDraws.concatenate(parts)


@dataclass(frozen=True)
class Diagnostics:
    rhat: dict[str, float | None]
    ess: dict[str, float | None]
    available: bool
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"available": self.available, "rhat": self.rhat, "ess": self.ess, "warnings": list(self.warnings)}


def diagnose(draws: PosteriorDraws, include_latent: bool = True) -> Diagnostics:
    """Split R-hat and ESS per scalar parameter.

    With a single chain R-hat is not computed and the result is marked
    unavailable; zero-variance parameters report None.
    """
    params = draws.scalar_params(include_latent=include_latent)
    available = draws.n_chains >= 2 and len(draws) // max(draws.n_chains, 1) >= 4
    rhat, ess, warnings = {}, {}, []
    if not available:
        return Diagnostics({k: None for k in params}, {k: None for k in params}, False,
                           ("diagnostics need at least 2 chains with 4 draws each",))
    bad_sites = []
    for name, values in params.items():
        ch = draws.by_chain(values)
        rhat[name] = split_rhat(ch)
        ess[name] = effective_sample_size(ch)
        if rhat[name] is not None and rhat[name] > RHAT_WARN:
            if name.startswith("u."):
                bad_sites.append(name)
            else:
                warnings.append(f"R-hat for {name} is {rhat[name]:.3f} (> {RHAT_WARN})")
    if bad_sites:
        worst = max(bad_sites, key=rhat.get)
        warnings.append(f"R-hat > {RHAT_WARN} at {len(bad_sites)} of {draws.T} latent sites "
                        f"(max {rhat[worst]:.3f} at {worst})")
    for msg in warnings:
        log.warning(msg)
    return Diagnostics(rhat, ess, True, tuple(warnings))


def quantiles(values, probs=(0.025, 0.5, 0.975), axis=0) -> np.ndarray:
    """Empirical quantiles with linear interpolation between order statistics."""
    return np.quantile(np.asarray(values, dtype=float), probs, axis=axis, method="linear")


@dataclass(frozen=True)
class CoefficientSummary:
    name: str
    median: float
    lower: float
    upper: float

    def to_dict(self) -> dict:
        return {"name": self.name, "median": self.median, "lower": self.lower, "upper": self.upper}


def summarize_coefficients(draws: PosteriorDraws) -> list[CoefficientSummary]:
    """Median and 95% interval per parameter, covariates on the standardized scale."""
    if len(draws) == 0:
        raise ValueError("no draws to summarize")
    cols = {"beta0": draws.beta0}
    for j, name in enumerate(draws.covariate_names):
        cols[name] = draws.beta[:, j]
    if draws.use_lag12:
        cols["lag12"] = draws.gamma
    cols["v"] = 1.0 / draws.tau
    cols["v_e"] = 1.0 / draws.tau_e
    rows = []
    for name, x in cols.items():
        lo, med, hi = quantiles(x)
        rows.append(CoefficientSummary(name, float(med), float(lo), float(hi)))
    return rows


def coefficients_json(draws: PosteriorDraws, extra: dict | None = None) -> str:
    payload = {"coefficients": [r.to_dict() for r in summarize_coefficients(draws)], "n_draws": len(draws)}
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"
