"""Posterior predictive simulation, HPD intervals and held-out prediction metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gibbs import Chain
from .mixmodel import ModelSpec

__all__ = ["PredictiveDraws", "PredictionMetrics", "posterior_predictive", "hpd_interval", "prediction_metrics"]


@dataclass
class PredictiveDraws:
    """``samples[r, m]`` is the draw for new row ``r`` under chain draw ``m``."""

    samples: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.samples.shape[0]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    def hpd(self, level: float = 0.99) -> np.ndarray:
        return np.array([hpd_interval(s, level) for s in self.samples])


def _pick(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum((cum < u[..., None] * cum[..., -1:]).sum(axis=-1), cum.shape[-1] - 1)


def posterior_predictive(Xnew, chain: Chain, spec: ModelSpec, rng) -> PredictiveDraws:
    """One predictive draw per (row, chain draw), with fresh labels for each new point.

    Per draw ``m``: ``j ~ w``, ``k ~ wdot_j``, ``u ~ Gamma(nu_k/2, nu_k/2)`` and
    ``y ~ N(mu_star_j + x'beta, sigma2_j / u)``.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    Xnew = np.asarray(Xnew, dtype=float)
    if Xnew.ndim == 1:
        Xnew = Xnew.reshape(1, -1) if spec.p else Xnew.reshape(-1, 0)
    if Xnew.shape[1] != spec.p:
        raise ValueError(f"Xnew has {Xnew.shape[1]} columns, expected {spec.p}")
    M = len(chain)
    block = max(1, 2_000_000 // M)
    parts = [_predict_block(Xnew[i : i + block], chain, spec, rng) for i in range(0, Xnew.shape[0], block)]
    return PredictiveDraws(np.concatenate(parts, axis=0) if parts else np.zeros((0, M)))


def _predict_block(Xnew, chain, spec, rng):
    R, M = Xnew.shape[0], len(chain)
    m_idx = np.broadcast_to(np.arange(M), (R, M))

    j = _pick(np.cumsum(chain.w, axis=1)[m_idx], rng.random((R, M)))
    k = _pick(np.cumsum(chain.wdot, axis=2)[m_idx, j], rng.random((R, M)))
    nu = spec.nu_array[k] if chain.nu is None else chain.nu[m_idx, k]
    u = rng.gamma(nu / 2, 2 / nu)
    loc = chain.mu_star[m_idx, j] + Xnew @ chain.beta.T if spec.p else chain.mu_star[m_idx, j]
    return loc + np.sqrt(chain.sigma2[m_idx, j] / u) * rng.standard_normal((R, M))


def hpd_interval(samples, level: float = 0.95):
    """Shortest interval spanning ``ceil(level * n)`` sorted samples; ties go to the lowest start."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    s = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = s.shape[0]
    if n < 20:
        raise ValueError(f"HPD interval needs at least 20 samples, got {n}")
    k = max(1, math.ceil(level * n - 1e-9))
    widths = s[k - 1 :] - s[: n - k + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + k - 1])


@dataclass
class PredictionMetrics:
    rmse: float
    mae: float
    re: Optional[float]
    interval_range_mean: float
    interval_range_median: float
    coverage: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def prediction_metrics(y_true, draws: PredictiveDraws, level: float = 0.99, re_floor: float = 1e-8) -> PredictionMetrics:
    """RMSE, MAE and relative error of the predictive mean; HPD width summaries.

    RE is the mean of ``|y - yhat| / |y|`` over rows with ``|y| >= re_floor``
    and is ``None`` if every row is excluded.
    """
    y = np.asarray(y_true, dtype=float).reshape(-1)
    if y.shape[0] != draws.n_rows:
        raise ValueError(f"{y.shape[0]} responses for {draws.n_rows} predictive rows")
    yhat = draws.mean()
    err = y - yhat
    keep = np.abs(y) >= re_floor
    re = float(np.mean(np.abs(err[keep]) / np.abs(y[keep]))) if keep.any() else None
    iv = draws.hpd(level)
    widths = iv[:, 1] - iv[:, 0]
    covered = (y >= iv[:, 0]) & (y <= iv[:, 1])
    return PredictionMetrics(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        re=re,
        interval_range_mean=float(widths.mean()),
        interval_range_median=float(np.median(widths)),
        coverage=float(covered.mean()),
    )
