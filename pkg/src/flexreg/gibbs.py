"""Blocked Gibbs sampler for regression with two-level Student-t mixture errors.

One sweep updates, in this order,

1. the latent block ``(Z, Zdot, U)``: component labels, tail labels, mixing scales;
2. the weights ``(w, wdot)`` from their Dirichlet conditionals;
3. ``(mu_star, sigma2)`` per component from the normal-inverse-gamma conditional;
4. the regression coefficients ``beta`` from a Gaussian conditional;
5. (ordinary-t variant with ``nu_sampling``) each component's degrees of
   freedom by random-walk Metropolis-Hastings on ``log(nu - 2)``.

Random numbers are drawn from one ``numpy.random.Generator`` per chain in a
fixed order, so a chain is reproducible bit for bit from its seed.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .mixmodel import (
    Dataset,
    LatentState,
    ModelSpec,
    ParamState,
    component_logpdf,
    log_sum_exp,
    mixture_logpdf,
)
from .nuplan import NumericalError, PcPriorSpec, default_pc_lambda, pc_prior_table

__all__ = [
    "Variant",
    "SamplerConfig",
    "Chain",
    "sample_labels_z",
    "sample_labels_zdot",
    "sample_mixing_u",
    "sample_weights",
    "sample_location_scale",
    "sample_coefficients",
    "sample_nu_mh",
    "initial_state",
    "run_chain",
    "relabel_chain",
]

log = logging.getLogger(__name__)

BETA_DOT_FLOOR = 1e-12


class Variant(str, enum.Enum):
    TWO_LEVEL = "two-level"
    ORDINARY_T = "ordinary-t"


@dataclass
class SamplerConfig:
    iterations: int = 50000
    burn_in: int = 10000
    thin: int = 1
    seed: int = 0
    variant: Variant = Variant.TWO_LEVEL
    nu_sampling: bool = False
    relabel: bool = False
    nu_step: float = 0.25
    pc_lambda: Optional[float] = None

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError(f"need 0 <= burn_in < iterations, got {self.burn_in}, {self.iterations}")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.nu_sampling and self.variant is not Variant.ORDINARY_T:
            raise ValueError("nu_sampling is only available for the ordinary-t variant")
        if self.nu_step < 0:
            raise ValueError("nu_step must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class Chain:
    """Post burn-in, thinned draws stored column-wise."""

    mu_star: np.ndarray
    sigma2: np.ndarray
    w: np.ndarray
    wdot: np.ndarray
    beta: np.ndarray
    loglik: np.ndarray
    n_j: np.ndarray
    n_jk: np.ndarray
    nu: Optional[np.ndarray] = None
    wall_time: float = 0.0
    nu_accept_rate: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.mu_star.shape[0]

    def __getitem__(self, m: int) -> ParamState:
        return ParamState(
            self.mu_star[m],
            self.sigma2[m],
            self.w[m],
            self.wdot[m],
            self.beta[m],
            None if self.nu is None else self.nu[m],
        )

    @property
    def draws(self) -> list:
        return [self[m] for m in range(len(self))]

    @property
    def J(self) -> int:
        return self.mu_star.shape[1]

    @classmethod
    def from_states(cls, states, loglik, n_j=None, n_jk=None, **kw) -> "Chain":
        M = len(states)
        J, K = states[0].wdot.shape
        nus = [s.nu for s in states]
        return cls(
            mu_star=np.array([s.mu_star for s in states]),
            sigma2=np.array([s.sigma2 for s in states]),
            w=np.array([s.w for s in states]),
            wdot=np.array([s.wdot for s in states]),
            beta=np.array([s.beta for s in states]).reshape(M, -1),
            loglik=np.asarray(loglik, dtype=float),
            n_j=np.zeros((M, J), dtype=int) if n_j is None else np.asarray(n_j),
            n_jk=np.zeros((M, J, K), dtype=int) if n_jk is None else np.asarray(n_jk),
            nu=None if nus[0] is None else np.array(nus),
            **kw,
        )


# ---------------------------------------------------------------------------
# helpers


def _categorical(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of unnormalised log probabilities (inverse CDF)."""
    p = np.exp(logp - logp.max(axis=1, keepdims=True))
    cdf = np.cumsum(p, axis=1)
    if not np.all(cdf[:, -1] > 0):
        raise NumericalError("categorical probabilities vanished after normalisation")
    u = rng.random(logp.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, logp.shape[1] - 1)


def _linear_predictor(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return X @ beta if X.shape[1] else np.zeros(X.shape[0])


def _log_kernels(y, X, theta: ParamState, spec: ModelSpec) -> np.ndarray:
    resid = y[:, None] - theta.mu_star[None, :] - _linear_predictor(X, theta.beta)[:, None]
    return component_logpdf(resid, theta.sigma2, theta.nu_for(spec))


def _log_w(theta: ParamState):
    with np.errstate(divide="ignore"):
        return np.log(theta.w), np.log(theta.wdot)


def _joint_terms(log_t, theta):
    """``log wdot_jk + log t_ijk`` (n, J, K) and ``log w_j + log r~_ij`` (n, J)."""
    log_w, log_wdot = _log_w(theta)
    a = log_wdot[None, :, :] + log_t
    return a, log_w[None, :] + log_sum_exp(a, axis=2)


def _zdot_given_z(a, z, rng):
    return _categorical(a[np.arange(z.shape[0]), z, :], rng)


def _as_arrays(y, X):
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(y.shape[0], -1) if X.size else np.zeros((y.shape[0], 0))
    return y, X


# ---------------------------------------------------------------------------
# full conditionals


def sample_labels_z(y, X, theta: ParamState, spec: ModelSpec, rng) -> np.ndarray:
    """Component labels with ``P(z_i = j) ∝ w_j sum_k wdot_jk t(y_i | mu~_ij, sigma2_j, nu_k)``."""
    y, X = _as_arrays(y, X)
    _, b = _joint_terms(_log_kernels(y, X, theta, spec), theta)
    return _categorical(b, rng)


def sample_labels_zdot(y, X, theta: ParamState, z, spec: ModelSpec, rng) -> np.ndarray:
    """Tail labels given ``z``, with ``P(zdot_i = k) ∝ wdot_{z_i k} t(y_i | mu~_{i z_i}, sigma2_{z_i}, nu_k)``."""
    y, X = _as_arrays(y, X)
    a, _ = _joint_terms(_log_kernels(y, X, theta, spec), theta)
    return _zdot_given_z(a, np.asarray(z), rng)


def sample_mixing_u(y, X, theta: ParamState, z, zdot, spec: ModelSpec, rng) -> np.ndarray:
    """Mixing scales from ``Gamma((nu_k + 1)/2, rate = nu_k/2 + r_i^2 / (2 sigma2_j))``."""
    y, X = _as_arrays(y, X)
    z, zdot = np.asarray(z), np.asarray(zdot)
    nu = theta.nu_for(spec)[zdot]
    r = y - theta.mu_star[z] - _linear_predictor(X, theta.beta)
    rate = 0.5 * nu + r * r / (2.0 * theta.sigma2[z])
    return rng.gamma(0.5 * (nu + 1.0), 1.0 / rate)


def occupancy(z, zdot, J: int, K: int):
    n_j = np.bincount(z, minlength=J)
    n_jk = np.bincount(z * K + zdot, minlength=J * K).reshape(J, K)
    return n_j, n_jk


def sample_weights(z, zdot, spec: ModelSpec, rng, update_wdot: bool = True):
    """Dirichlet draws for ``w`` and each row of ``wdot``; empty components draw from the prior."""
    n_j, n_jk = occupancy(np.asarray(z), np.asarray(zdot), spec.J, spec.K)
    pr = spec.priors
    w = rng.dirichlet(np.asarray(pr.alpha_w) + n_j)
    if not update_wdot:
        return w, None
    alpha_wdot = np.asarray(pr.alpha_wdot)
    wdot = np.empty((spec.J, spec.K))
    for j in range(spec.J):
        wdot[j] = rng.dirichlet(alpha_wdot[j] + n_jk[j])
    return w, wdot


def nig_posterior(e: np.ndarray, u: np.ndarray, mu0: float, tau: float, alpha: float, beta: float):
    """Parameters ``(mu0*, tau*, alpha*, beta*)`` of the NIG conditional for one component."""
    s0 = u.sum()
    tau_n = tau + s0
    s1 = np.dot(u, e)
    mu_n = (s1 + tau * mu0) / tau_n
    if s0 > 0:
        ebar = s1 / s0
        ss = np.dot(u, (e - ebar) ** 2) + tau * s0 / tau_n * (ebar - mu0) ** 2
    else:
        ss = 0.0
    beta_n = beta + 0.5 * ss
    if not beta_n > 0:
        log.warning("NIG rate %.3g is not positive; clamping to %.0e", beta_n, BETA_DOT_FLOOR)
        beta_n = BETA_DOT_FLOOR
    return mu_n, tau_n, alpha + 0.5 * e.shape[0], beta_n


def sample_location_scale(y, X, theta: ParamState, z, u, spec: ModelSpec, rng):
    """Per-component NIG draws: first every ``sigma2_j``, then every ``mu_star_j``."""
    y, X = _as_arrays(y, X)
    z, u = np.asarray(z), np.asarray(u)
    pr = spec.priors
    e = y - _linear_predictor(X, theta.beta)
    params = [
        nig_posterior(e[z == j], u[z == j], pr.mu0, pr.tau, pr.alpha_dot, pr.beta_dot) for j in range(spec.J)
    ]
    mu_n, tau_n, a_n, b_n = (np.array(v) for v in zip(*params))
    sigma2 = 1.0 / rng.gamma(a_n, 1.0 / b_n)
    mu_star = rng.normal(mu_n, np.sqrt(sigma2 / tau_n))
    return mu_star, sigma2


def sample_coefficients(y, X, theta: ParamState, z, u, spec: ModelSpec, rng) -> np.ndarray:
    """Gaussian draw of ``beta`` with observation weights ``u_i / sigma2_{z_i}``."""
    y, X = _as_arrays(y, X)
    p = X.shape[1]
    if p == 0:
        return np.zeros(0)
    z, u = np.asarray(z), np.asarray(u)
    pr = spec.priors
    c = u / theta.sigma2[z]
    prec = (X.T * c) @ X
    prec[np.diag_indices(p)] += 1.0 / pr.upsilon2
    rhs = np.asarray(pr.phi) / pr.upsilon2 + X.T @ (c * (y - theta.mu_star[z]))
    try:
        L = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(prec) / p
        log.warning("beta precision not positive definite; retrying with jitter %.3g", jitter)
        try:
            L = linalg.cholesky(prec + jitter * np.eye(p), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("beta precision matrix is not positive definite") from exc
    mean = linalg.cho_solve((L, True), rhs)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(p), lower=False)


def sample_nu_mh(theta: ParamState, latent: LatentState, spec: ModelSpec, pc: PcPriorSpec, rng, step: float = 0.25):
    """Random-walk MH on ``x_j = log(nu_j - 2)`` for each component of the ordinary-t model.

    Targets ``prod_{i: z_i = j} Gamma(u_i | nu_j/2, nu_j/2) * pc(nu_j)`` with
    the Jacobian of the log transform.  Returns ``(nu, accepted)``.
    """
    nu = theta.nu_for(spec).astype(float).copy()
    table = pc_prior_table(pc)
    z, u = np.asarray(latent.z), np.asarray(latent.u)
    n_j = np.bincount(z, minlength=spec.J)
    sum_u = np.bincount(z, weights=u, minlength=spec.J)
    sum_logu = np.bincount(z, weights=np.log(u), minlength=spec.J)
    accepted = np.zeros(spec.J, dtype=bool)

    def log_target(j, x):
        lp = table(x)
        if not np.isfinite(lp):
            return -math.inf
        a = 0.5 * (2.0 + math.exp(x))
        return lp + n_j[j] * (a * math.log(a) - gammaln(a)) + (a - 1.0) * sum_logu[j] - a * sum_u[j]

    noise = rng.standard_normal(spec.J)
    log_unif = np.log(rng.random(spec.J))
    for j in range(spec.J):
        x = math.log(nu[j] - 2.0)
        x_new = x + step * noise[j]
        diff = log_target(j, x_new) - log_target(j, x)
        if x_new == x or log_unif[j] < diff:
            nu[j] = 2.0 + math.exp(x_new)
            accepted[j] = True
    return nu, accepted


# ---------------------------------------------------------------------------
# driver


def initial_state(data: Dataset, spec: ModelSpec, variant: Variant = Variant.TWO_LEVEL) -> ParamState:
    """Start from least squares: ``mu_star`` at residual quantiles, pooled variance / J."""
    y, X = data.y, data.X
    design = np.column_stack([np.ones(data.n), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    beta = coef[1:]
    r = y - _linear_predictor(X, beta)
    J = spec.J
    mu_star = np.quantile(r, (np.arange(J) + 0.5) / J)
    var = np.var(r) if data.n > 1 else 1.0
    sigma2 = np.full(J, max(var, 1e-6) / J)
    w = np.full(J, 1.0 / J)
    if Variant(variant) is Variant.ORDINARY_T:
        wdot, nu = np.eye(J), spec.nu_array.copy()
    else:
        wdot, nu = np.full((J, spec.K), 1.0 / spec.K), None
    return ParamState(mu_star, sigma2, w, wdot, beta, nu)


def _check_variant(spec: ModelSpec, cfg: SamplerConfig):
    if cfg.variant is Variant.ORDINARY_T and spec.K != spec.J:
        raise ValueError("the ordinary-t variant needs one degree of freedom per component (K == J)")


def run_chain(data: Dataset, spec: ModelSpec, cfg: SamplerConfig, init: Optional[ParamState] = None) -> Chain:
    """Run one chain and return its post burn-in, thinned draws."""
    _check_variant(spec, cfg)
    if data.p != spec.p:
        raise ValueError(f"data has p={data.p} covariates but the model expects p={spec.p}")
    ordinary = cfg.variant is Variant.ORDINARY_T
    y, X = data.y, data.X
    rng = np.random.default_rng(cfg.seed)
    theta = (init.copy() if init is not None else initial_state(data, spec, cfg.variant)).validate(spec)
    if ordinary:
        theta.wdot = np.eye(spec.J)
        if theta.nu is None:
            theta.nu = spec.nu_array.copy()
    pc = None
    if cfg.nu_sampling:
        lam = cfg.pc_lambda if cfg.pc_lambda is not None else default_pc_lambda()
        pc = PcPriorSpec(lam)

    n_keep = len(range(cfg.burn_in, cfg.iterations, cfg.thin))
    J, K, p = spec.J, spec.K, spec.p
    out = dict(
        mu_star=np.empty((n_keep, J)),
        sigma2=np.empty((n_keep, J)),
        w=np.empty((n_keep, J)),
        wdot=np.empty((n_keep, J, K)),
        beta=np.empty((n_keep, p)),
        loglik=np.empty(n_keep),
        n_j=np.empty((n_keep, J), dtype=int),
        n_jk=np.empty((n_keep, J, K), dtype=int),
    )
    nu_out = np.empty((n_keep, J)) if ordinary else None
    n_accept = 0
    n_prop = 0
    m = 0
    t0 = time.perf_counter()
    pending = None  # (slot, sweep) of the last stored draw awaiting its log-likelihood

    def finish(slot, sweep, ll):
        if not np.isfinite(ll):
            raise NumericalError(f"non-finite log-likelihood for the draw stored at sweep {sweep}")
        out["loglik"][slot] = ll

    for it in range(cfg.iterations):
        try:
            a, b = _joint_terms(_log_kernels(y, X, theta, spec), theta)
            if pending is not None:
                # kernels at the start of a sweep belong to the state stored at the end of the last one
                finish(*pending, float(log_sum_exp(b, axis=1).sum()))
                pending = None
            z = _categorical(b, rng)
            zdot = z.copy() if ordinary else _zdot_given_z(a, z, rng)
            u = sample_mixing_u(y, X, theta, z, zdot, spec, rng)

            w, wdot = sample_weights(z, zdot, spec, rng, update_wdot=not ordinary)
            theta.w = w
            if wdot is not None:
                theta.wdot = wdot
            theta.mu_star, theta.sigma2 = sample_location_scale(y, X, theta, z, u, spec, rng)
            theta.beta = sample_coefficients(y, X, theta, z, u, spec, rng)
            if cfg.nu_sampling:
                theta.nu, acc = sample_nu_mh(theta, LatentState(u, z, zdot), spec, pc, rng, cfg.nu_step)
                if it >= cfg.burn_in:
                    n_accept += int(acc.sum())
                    n_prop += J

            if not np.all(np.isfinite(theta.sigma2)) or not np.all(np.isfinite(theta.mu_star)):
                raise NumericalError("non-finite parameter values")
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                pending = (m, it)
                n_j, n_jk = occupancy(z, zdot, J, K)
                out["mu_star"][m] = theta.mu_star
                out["sigma2"][m] = theta.sigma2
                out["w"][m] = theta.w
                out["wdot"][m] = theta.wdot
                out["beta"][m] = theta.beta
                out["n_j"][m] = n_j
                out["n_jk"][m] = n_jk
                if nu_out is not None:
                    nu_out[m] = theta.nu
                m += 1
        except NumericalError as exc:
            raise NumericalError(f"sweep {it}: {exc}") from exc
    if pending is not None:
        finish(*pending, float(np.sum(mixture_logpdf(y, X, theta, spec))))
    chain = Chain(
        **out,
        nu=nu_out,
        wall_time=time.perf_counter() - t0,
        nu_accept_rate=(n_accept / n_prop) if n_prop else None,
    )
    return relabel_chain(chain) if cfg.relabel else chain


def relabel_chain(chain: Chain) -> Chain:
    """Permute components within every draw so that ``mu_star`` is ascending.

    For the ordinary-t variant (``chain.nu`` set) the per-component degrees of
    freedom and the identity ``wdot`` are permuted along with the components.
    """
    order = np.argsort(chain.mu_star, axis=1, kind="stable")
    rows = np.arange(len(chain))[:, None]
    wdot = chain.wdot[rows, order]
    if chain.nu is not None:
        # ordinary-t: tails are tied to components, so columns move with rows
        wdot = wdot[rows[:, :, None], np.arange(chain.J)[None, :, None], order[:, None, :]]
    return Chain(
        mu_star=chain.mu_star[rows, order],
        sigma2=chain.sigma2[rows, order],
        w=chain.w[rows, order],
        wdot=wdot,
        beta=chain.beta.copy(),
        loglik=chain.loglik.copy(),
        n_j=chain.n_j[rows, order],
        n_jk=chain.n_jk[rows, order],
        nu=None if chain.nu is None else chain.nu[rows, order],
        wall_time=chain.wall_time,
        nu_accept_rate=chain.nu_accept_rate,
        meta=dict(chain.meta),
    )
