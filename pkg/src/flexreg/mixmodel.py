"""Domain types and densities for regression with two-level Student-t mixture errors.

The error density is

    f(e) = sum_j w_j sum_k wdot_jk t(e | mu_j, sigma2_j, nu_k)

where ``t`` is the location / squared-scale Student-t density.  The outer
level (``J`` components) carries modes and skewness, the inner level (``K``
fixed degrees of freedom) carries the tails.  Internally the model is written
with unrestricted means ``mu_star`` that absorb the intercept; the centred
parametrisation is recovered by :func:`identify_transform`.

Component and tail labels are 0-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "InfiniteVarianceError",
    "PriorSpec",
    "ModelSpec",
    "ParamState",
    "LatentState",
    "Dataset",
    "student_t_logpdf",
    "component_logpdf",
    "mixture_logpdf",
    "identify_transform",
    "error_variance",
    "error_logpdf",
    "log_sum_exp",
]

SIMPLEX_TOL = 1e-12


class InfiniteVarianceError(ValueError):
    """Raised when a variance is requested for degrees of freedom <= 2."""


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the conjugate priors.

    ``(mu_star_j, sigma2_j) ~ NIG(mu0, tau, alpha_dot, beta_dot)``,
    ``w ~ Dir(alpha_w)``, ``wdot_j ~ Dir(alpha_wdot[j])`` and
    ``beta ~ N_p(phi, upsilon2 * I)``.
    """

    mu0: float
    tau: float
    alpha_dot: float
    beta_dot: float
    alpha_w: tuple
    alpha_wdot: tuple
    phi: tuple
    upsilon2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha_w", tuple(float(a) for a in self.alpha_w))
        object.__setattr__(
            self, "alpha_wdot", tuple(tuple(float(a) for a in row) for row in self.alpha_wdot)
        )
        object.__setattr__(self, "phi", tuple(float(a) for a in self.phi))
        for name in ("tau", "alpha_dot", "beta_dot", "upsilon2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not np.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")
        if min(self.alpha_w) <= 0 or min(min(r) for r in self.alpha_wdot) <= 0:
            raise ValueError("Dirichlet weights must be positive")

    @classmethod
    def default(cls, J: int, K: int, p: int, mu0: float = 0.0, **overrides) -> "PriorSpec":
        """Weakly informative defaults: tau=0.005, alpha_dot=1, beta_dot=1.5, flat simplices."""
        kw = dict(
            mu0=float(mu0),
            tau=0.005,
            alpha_dot=1.0,
            beta_dot=1.5,
            alpha_w=(1.0,) * J,
            alpha_wdot=((1.0,) * K,) * J,
            phi=(0.0,) * p,
            upsilon2=100.0,
        )
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "mu0": self.mu0,
            "tau": self.tau,
            "alpha_dot": self.alpha_dot,
            "beta_dot": self.beta_dot,
            "alpha_w": list(self.alpha_w),
            "alpha_wdot": [list(r) for r in self.alpha_wdot],
            "phi": list(self.phi),
            "upsilon2": self.upsilon2,
        }


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions, fixed degrees of freedom and priors of a fitted model."""

    J: int
    K: int
    p: int
    nu: tuple
    priors: PriorSpec

    def __post_init__(self):
        nu = tuple(float(v) for v in self.nu)
        object.__setattr__(self, "nu", nu)
        if self.J < 1 or self.K < 1 or self.p < 0:
            raise ValueError(f"need J >= 1, K >= 1, p >= 0; got J={self.J}, K={self.K}, p={self.p}")
        if len(nu) != self.K:
            raise ValueError(f"nu has {len(nu)} entries, expected K={self.K}")
        if any(not v > 2 for v in nu):
            raise ValueError(f"every degree of freedom must exceed 2, got {nu}")
        if any(b <= a for a, b in zip(nu, nu[1:])):
            raise ValueError(f"nu must be strictly increasing, got {nu}")
        pr = self.priors
        if len(pr.alpha_w) != self.J:
            raise ValueError("alpha_w must have J entries")
        if len(pr.alpha_wdot) != self.J or any(len(r) != self.K for r in pr.alpha_wdot):
            raise ValueError("alpha_wdot must be J x K")
        if len(pr.phi) != self.p:
            raise ValueError("phi must have p entries")

    @property
    def nu_array(self) -> np.ndarray:
        return np.asarray(self.nu)

    @classmethod
    def with_defaults(cls, J: int, nu: Sequence[float], p: int = 0, mu0: float = 0.0, **prior_overrides):
        K = len(nu)
        return cls(J=J, K=K, p=p, nu=tuple(nu), priors=PriorSpec.default(J, K, p, mu0, **prior_overrides))

    def to_dict(self) -> dict:
        return {"J": self.J, "K": self.K, "p": self.p, "nu": list(self.nu), "priors": self.priors.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(J=d["J"], K=d["K"], p=d["p"], nu=tuple(d["nu"]), priors=PriorSpec(**d["priors"]))


@dataclass
class ParamState:
    """One draw of (mu_star, sigma2, w, wdot, beta).

    ``nu`` is only set when degrees of freedom are themselves sampled (the
    ordinary Student-t mixture variant); otherwise the model's fixed grid
    applies.
    """

    mu_star: np.ndarray
    sigma2: np.ndarray
    w: np.ndarray
    wdot: np.ndarray
    beta: np.ndarray
    nu: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mu_star = np.atleast_1d(np.asarray(self.mu_star, dtype=float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
        self.wdot = np.atleast_2d(np.asarray(self.wdot, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).reshape(-1)
        if self.nu is not None:
            self.nu = np.atleast_1d(np.asarray(self.nu, dtype=float))

    @property
    def J(self) -> int:
        return self.mu_star.shape[0]

    def validate(self, spec: Optional[ModelSpec] = None) -> "ParamState":
        J = self.J
        if self.sigma2.shape != (J,) or self.w.shape != (J,) or self.wdot.shape[0] != J:
            raise ValueError("inconsistent component dimensions in ParamState")
        if spec is not None:
            if J != spec.J or self.wdot.shape[1] != spec.K or self.beta.shape[0] != spec.p:
                raise ValueError(
                    f"ParamState dims (J={J}, K={self.wdot.shape[1]}, p={self.beta.shape[0]}) "
                    f"do not match spec (J={spec.J}, K={spec.K}, p={spec.p})"
                )
        if np.any(self.sigma2 <= 0):
            raise ValueError("sigma2 entries must be positive")
        if np.any(self.w < 0) or np.any(self.wdot < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("w must sum to one")
        if np.any(np.abs(self.wdot.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("each row of wdot must sum to one")
        return self

    def nu_for(self, spec: ModelSpec) -> np.ndarray:
        return spec.nu_array if self.nu is None else self.nu

    def copy(self) -> "ParamState":
        return replace(
            self,
            mu_star=self.mu_star.copy(),
            sigma2=self.sigma2.copy(),
            w=self.w.copy(),
            wdot=self.wdot.copy(),
            beta=self.beta.copy(),
            nu=None if self.nu is None else self.nu.copy(),
        )


@dataclass
class LatentState:
    """Per-observation mixing scales and 0-based component / tail labels."""

    u: np.ndarray
    z: np.ndarray
    zdot: np.ndarray

    def validate(self, spec: ModelSpec) -> "LatentState":
        if np.any(self.u <= 0):
            raise ValueError("mixing scales must be positive")
        if self.z.min(initial=0) < 0 or self.z.max(initial=0) >= spec.J:
            raise ValueError("component label out of range")
        if self.zdot.min(initial=0) < 0 or self.zdot.max(initial=0) >= spec.K:
            raise ValueError("tail label out of range")
        return self


@dataclass
class Dataset:
    """Response vector and covariate matrix.  The intercept is not a column of ``X``."""

    y: np.ndarray
    X: np.ndarray
    ids: Optional[list] = None
    columns: list = field(default_factory=list)
    n_dropped: int = 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(self.y.shape[0], -1) if X.size else np.zeros((self.y.shape[0], 0))
        self.X = X
        if self.y.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def student_t_logpdf(y, mu, sigma2, nu):
    """Log density of the location / squared-scale Student-t distribution.

    Broadcasts over its arguments.  ``sigma2`` is a squared scale, so the
    variance is ``sigma2 * nu / (nu - 2)`` when ``nu > 2``.
    """
    y, mu, sigma2, nu = (np.asarray(a, dtype=float) for a in (y, mu, sigma2, nu))
    for a in (y, mu, sigma2, nu):
        if not np.all(np.isfinite(a)):
            raise ValueError("student_t_logpdf received non-finite input")
    if np.any(sigma2 <= 0) or np.any(nu <= 0):
        raise ValueError("sigma2 and nu must be positive")
    half = 0.5 * (nu + 1.0)
    out = (
        gammaln(half)
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi * sigma2)
        - half * np.log1p((y - mu) ** 2 / (nu * sigma2))
    )
    return out[()] if out.ndim == 0 else out


def _t_logpdf_unchecked(resid, sigma2, nu):
    half = 0.5 * (nu + 1.0)
    return (
        gammaln(half)
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi * sigma2)
        - half * np.log1p(resid * resid / (nu * sigma2))
    )


def component_logpdf(resid: np.ndarray, sigma2: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Array ``(n, J, K)`` of log t densities for residuals ``resid`` of shape ``(n, J)``."""
    return _t_logpdf_unchecked(resid[:, :, None], sigma2[None, :, None], nu[None, None, :])


def log_sum_exp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Lean log-sum-exp over one axis; rows that are entirely ``-inf`` give ``-inf``."""
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _log_weights(theta: ParamState):
    with np.errstate(divide="ignore"):
        return np.log(theta.w), np.log(theta.wdot)


def mixture_logpdf(y, x, theta: ParamState, spec: ModelSpec):
    """Log of ``sum_j w_j sum_k wdot_jk t(y | mu_star_j + x'beta, sigma2_j, nu_k)``.

    ``y`` may be a scalar with ``x`` a p-vector, or an n-vector with ``x`` an
    ``(n, p)`` matrix; the return type follows ``y``.
    """
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = x.reshape(y.shape[0], -1) if x.size else np.zeros((y.shape[0], 0))
    if x.shape != (y.shape[0], spec.p):
        raise ValueError(f"covariates have shape {x.shape}, expected ({y.shape[0]}, {spec.p})")
    if theta.J != spec.J or theta.wdot.shape[1] != spec.K or theta.beta.shape[0] != spec.p:
        raise ValueError("ParamState dimensions do not match the model spec")
    nu = theta.nu_for(spec)
    resid = y[:, None] - theta.mu_star[None, :] - (x @ theta.beta)[:, None]
    log_w, log_wdot = _log_weights(theta)
    terms = log_w[None, :, None] + log_wdot[None, :, :] + component_logpdf(resid, theta.sigma2, nu)
    out = log_sum_exp(terms.reshape(y.shape[0], -1), axis=1)
    return float(out[0]) if scalar else out


def identify_transform(theta: ParamState):
    """Return ``(beta0, mu)`` with ``beta0 = sum_j w_j mu_star_j`` and ``mu = mu_star - beta0``."""
    beta0 = float(np.dot(theta.w, theta.mu_star))
    return beta0, theta.mu_star - beta0


def error_variance(theta: ParamState, spec: ModelSpec) -> float:
    """Total variance of the error mixture.

    Each outer component is a ``wdot_j``-mixture of t laws sharing location
    ``mu_j``, so its variance is ``sigma2_j * sum_k wdot_jk nu_k / (nu_k - 2)``.
    """
    nu = theta.nu_for(spec)
    if np.any(nu <= 2):
        raise InfiniteVarianceError(f"error variance is infinite for nu <= 2 (nu={nu})")
    _, mu = identify_transform(theta)
    within = theta.sigma2 * (theta.wdot @ (nu / (nu - 2.0)))
    lam_mix = np.dot(theta.w, mu)
    return float(np.dot(theta.w, (mu - lam_mix) ** 2 + within))


def error_logpdf(e, theta: ParamState, spec: ModelSpec):
    """Log density of the centred error distribution at ``e``."""
    _, mu = identify_transform(theta)
    e = np.atleast_1d(np.asarray(e, dtype=float))
    nu = theta.nu_for(spec)
    resid = e[:, None] - mu[None, :]
    log_w, log_wdot = _log_weights(theta)
    terms = log_w[None, :, None] + log_wdot[None, :, :] + component_logpdf(resid, theta.sigma2, nu)
    return log_sum_exp(terms.reshape(e.shape[0], -1), axis=1)
