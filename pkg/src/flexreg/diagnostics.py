"""Model comparison and chain-quality summaries."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .gibbs import Chain, relabel_chain
from .mixmodel import Dataset, ModelSpec, ParamState, error_logpdf, error_variance, mixture_logpdf

__all__ = [
    "FitReport",
    "GridSpec",
    "posterior_mean_state",
    "dic",
    "posterior_error_density",
    "density_distance",
    "v_eps_summary",
    "ess",
    "fit_report",
]


@dataclass
class FitReport:
    dic: float
    dbar: float
    d_theta_tilde: float
    dic_var: float = float("nan")
    pd_var: float = float("nan")
    v_eps_posterior: dict = field(default_factory=dict)
    ess_loglik: Optional[float] = None

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def posterior_mean_state(chain: Chain) -> ParamState:
    """Coordinate-wise posterior mean of the relabelled draws, simplices renormalised."""
    rc = relabel_chain(chain)
    w = rc.w.mean(axis=0)
    wdot = rc.wdot.mean(axis=0)
    return ParamState(
        mu_star=rc.mu_star.mean(axis=0),
        sigma2=rc.sigma2.mean(axis=0),
        w=w / w.sum(),
        wdot=wdot / wdot.sum(axis=1, keepdims=True),
        beta=rc.beta.mean(axis=0),
        nu=None if rc.nu is None else rc.nu.mean(axis=0),
    )


def dic(chain: Chain, data: Dataset, spec: ModelSpec) -> FitReport:
    """``DIC = 2 Dbar - D(theta~)`` with ``Dbar`` from the stored log-likelihood trace.

    ``dic_var = Dbar + var(D) / 2`` is reported alongside; it does not depend on
    a plug-in point estimate and so is unaffected by label switching.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    dbar = -2.0 * float(np.mean(chain.loglik))
    theta = posterior_mean_state(chain)
    ll = mixture_logpdf(data.y, data.X, theta, spec)
    bad = np.flatnonzero(~np.isfinite(ll))
    if bad.size:
        raise ValueError(f"non-finite log density at the posterior mean for observation {int(bad[0])}")
    d_tilde = -2.0 * float(ll.sum())
    pd_var = 0.5 * float(np.var(-2.0 * chain.loglik))
    return FitReport(dic=2.0 * dbar - d_tilde, dbar=dbar, d_theta_tilde=d_tilde, dic_var=dbar + pd_var, pd_var=pd_var)


def posterior_error_density(source: Union[Chain, ParamState], spec: ModelSpec, x, chunk: int = 256) -> np.ndarray:
    """Posterior mean of the centred error density at ``x`` (a single state gives its own density)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if isinstance(source, ParamState):
        return np.exp(error_logpdf(x, source, spec))
    total = np.zeros_like(x)
    for m in range(len(source)):
        total += np.exp(error_logpdf(x, source[m], spec))
    return total / len(source)


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid between quantiles of the true density.

    Quantiles are found from a numerical CDF of ``f_true`` on ``support``.
    """

    points: int = 512
    lower_q: float = 0.001
    upper_q: float = 0.999
    tail_lower_q: float = 0.01
    tail_upper_q: float = 0.99
    support: tuple = (-200.0, 200.0)
    resolution: int = 400001


def _quantiles(f_true: Callable, grid: GridSpec, qs):
    xs = np.linspace(*grid.support, grid.resolution)
    fx = np.asarray(f_true(xs), dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (fx[1:] + fx[:-1]) * np.diff(xs))])
    cdf /= cdf[-1]
    return np.interp(qs, cdf, xs)


def density_distance(
    f_true: Callable, source: Union[Chain, ParamState], spec: ModelSpec, grid: GridSpec = GridSpec()
) -> dict:
    """Mean absolute relative deviation of the fitted error density from ``f_true``.

    ``dbar_global`` averages over ``grid.points`` equally spaced points between
    the ``lower_q`` and ``upper_q`` quantiles of ``f_true``; ``dbar_tail``
    averages over the subset below ``tail_lower_q`` or above ``tail_upper_q``.
    """
    lo, hi, tlo, thi = _quantiles(
        f_true, grid, [grid.lower_q, grid.upper_q, grid.tail_lower_q, grid.tail_upper_q]
    )
    xb = np.linspace(lo, hi, grid.points)
    ft = np.asarray(f_true(xb), dtype=float)
    if np.any(ft <= 0):
        raise ValueError("true density vanishes on the evaluation grid")
    rel = np.abs((ft - posterior_error_density(source, spec, xb)) / ft)
    tail = (xb < tlo) | (xb > thi)
    return {
        "dbar_global": float(rel.mean()),
        "dbar_tail": float(rel[tail].mean()) if tail.any() else float("nan"),
        "grid": xb,
    }


def v_eps_summary(chain: Chain, spec: ModelSpec, truth: Optional[float] = None) -> dict:
    """Posterior mean and variance of the error variance; bias and MSE against ``truth``."""
    if len(chain) == 0:
        raise ValueError("empty chain")
    v = np.array([error_variance(chain[m], spec) for m in range(len(chain))])
    out = {"mean": float(v.mean()), "var": float(v.var())}
    if truth is not None:
        bias = out["mean"] - truth
        out["bias"] = float(bias)
        out["mse"] = float(bias**2 + out["var"])
    return out


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def ess(trace) -> float:
    """Effective sample size by Geyer's initial positive sequence, capped at the trace length."""
    x = np.asarray(trace, dtype=float).reshape(-1)
    n = x.shape[0]
    if n < 10:
        raise ValueError("ESS needs at least 10 values")
    if np.ptp(x) == 0:
        return float(n)
    rho = _autocorr(x)
    pairs = rho[: 2 * ((n - 1) // 2)].reshape(-1, 2).sum(axis=1)
    nonpos = np.flatnonzero(pairs <= 0)
    m = nonpos[0] if nonpos.size else pairs.shape[0]
    tau = -1.0 + 2.0 * pairs[:m].sum()
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def fit_report(chain: Chain, data: Dataset, spec: ModelSpec, v_eps_truth: Optional[float] = None) -> FitReport:
    rep = dic(chain, data, spec)
    rep.v_eps_posterior = v_eps_summary(chain, spec, v_eps_truth)
    rep.ess_loglik = ess(chain.loglik) if len(chain) >= 10 else None
    return rep
