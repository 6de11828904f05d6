"""Choosing the fixed degrees-of-freedom grid, and a PC prior for nu.

Both rest on the Kullback-Leibler divergence between a Student-t law and the
standard normal.  Two choices have to be made to compute it:

* the direction, ``KLD(t || normal)`` (:attr:`Direction.FLEXIBLE_VS_BASE`) or
  ``KLD(normal || t)`` (:attr:`Direction.BASE_VS_FLEXIBLE``);
* the scaling of the t law, either the standard t (unit squared scale) or the
  t rescaled to unit variance, ``sqrt((nu - 2) / nu) * T``.

The default convention, flexible-vs-base on the unit-variance t, is the one
that best reproduces the reference grids ``(2.8, 3.2, 3.9, 14.4)`` and
``(2.8, 3.5, 14.4)``; :func:`compare_conventions` tabulates all candidates.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

__all__ = [
    "NumericalError",
    "Direction",
    "Scaling",
    "NuGridRequest",
    "PcPriorSpec",
    "REFERENCE_GRIDS",
    "kld_normal_t",
    "pc_distance",
    "build_nu_grid",
    "round_grid",
    "compare_conventions",
    "pc_prior_logpdf",
    "default_pc_lambda",
    "pc_prior_table",
]

QUAD_ABS_TOL = 1e-9
GRID_NU_TOL = 1e-10
NU_MAX_LIMIT = 50.0

REFERENCE_GRIDS = {
    4: (2.8, 3.2, 3.9, 14.4),
    3: (2.8, 3.5, 14.4),
}


class NumericalError(RuntimeError):
    """Quadrature, root-finding or factorisation failed to converge."""


class Direction(str, enum.Enum):
    FLEXIBLE_VS_BASE = "flexible-vs-base"
    BASE_VS_FLEXIBLE = "base-vs-flexible"


class Scaling(str, enum.Enum):
    STANDARD = "standard"
    UNIT_VARIANCE = "unit-variance"


@dataclass(frozen=True)
class NuGridRequest:
    nu_min: float
    nu_max: float
    K: int
    rounding: int = 1

    def __post_init__(self):
        if not self.nu_min > 2:
            raise ValueError(f"nu_min must exceed 2 (finite variance), got {self.nu_min}")
        if not self.nu_max > self.nu_min:
            raise ValueError("nu_max must exceed nu_min")
        if self.nu_max > NU_MAX_LIMIT:
            raise ValueError(f"nu_max must not exceed {NU_MAX_LIMIT}")
        if self.K < 2:
            raise ValueError("K must be at least 2")


@dataclass(frozen=True)
class PcPriorSpec:
    """Rate ``lam`` of the exponential prior on the distance ``d(nu) = sqrt(2 KLD)``."""

    lam: float
    direction: Direction = Direction.FLEXIBLE_VS_BASE
    scaling: Scaling = Scaling.UNIT_VARIANCE

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "scaling", Scaling(self.scaling))


def _t_scale(nu: float, scaling: Scaling) -> float:
    return math.sqrt((nu - 2.0) / nu) if scaling is Scaling.UNIT_VARIANCE else 1.0


def _quad_half_line(f, what: str) -> float:
    # both integrands are even in y
    val, err, info = integrate.quad(
        f, 0.0, np.inf, epsabs=QUAD_ABS_TOL / 4, epsrel=1e-11, limit=400, full_output=True
    )[:3]
    if err > QUAD_ABS_TOL / 2 or not np.isfinite(val):
        raise NumericalError(
            f"quadrature for {what} did not converge: value={val}, error estimate={err}, "
            f"evaluations={info.get('neval')}"
        )
    return 2.0 * val


def _t_log_const(nu: float) -> float:
    return math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)


_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@lru_cache(maxsize=8192)
def _kld_cached(nu: float, direction: Direction, scaling: Scaling) -> float:
    s = _t_scale(nu, scaling)
    log_s = math.log(s)
    c = _t_log_const(nu)
    half = 0.5 * (nu + 1)
    if direction is Direction.FLEXIBLE_VS_BASE:
        # integrate in the standard-t variable so the rescaled law stays well resolved near nu = 2
        def f(v):
            lt = c - half * math.log1p(v * v / nu)
            return math.exp(lt) * (lt - log_s + _LOG_SQRT_2PI + 0.5 * s * s * v * v)
    else:
        def f(y):
            ln = -_LOG_SQRT_2PI - 0.5 * y * y
            v = y / s
            return math.exp(ln) * (ln - c + half * math.log1p(v * v / nu) + log_s)

    return max(_quad_half_line(f, f"KLD({direction.value}, {scaling.value}, nu={nu})"), 0.0)


def kld_normal_t(
    nu: float,
    direction: Direction = Direction.FLEXIBLE_VS_BASE,
    scaling: Scaling = Scaling.UNIT_VARIANCE,
) -> float:
    """Kullback-Leibler divergence between a Student-t law and the standard normal.

    Computed by adaptive quadrature on the half line to absolute tolerance
    ``1e-9``; results are memoised per ``(nu, direction, scaling)``.
    """
    direction, scaling = Direction(direction), Scaling(scaling)
    nu = float(nu)
    if not np.isfinite(nu) or nu <= 0:
        raise ValueError(f"nu must be positive and finite, got {nu}")
    if nu <= 2 and (direction is Direction.FLEXIBLE_VS_BASE or scaling is Scaling.UNIT_VARIANCE):
        raise ValueError(f"this KLD convention needs a finite t variance (nu > 2), got {nu}")
    return _kld_cached(nu, direction, scaling)


def pc_distance(nu: float, direction=Direction.FLEXIBLE_VS_BASE, scaling=Scaling.UNIT_VARIANCE) -> float:
    """``d(nu) = sqrt(2 KLD)``."""
    return math.sqrt(2.0 * kld_normal_t(nu, direction, scaling))


def _bisect(g, lo: float, hi: float, target: float, tol: float) -> float:
    g_lo, g_hi = g(lo) - target, g(hi) - target
    if g_lo * g_hi > 0:
        raise NumericalError(f"root not bracketed on [{lo}, {hi}] for target {target}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid) - target
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_nu_grid(
    req: NuGridRequest,
    direction: Direction = Direction.FLEXIBLE_VS_BASE,
    scaling: Scaling = Scaling.UNIT_VARIANCE,
    on_distance: bool = False,
) -> np.ndarray:
    """Degrees of freedom equally spaced on the KLD scale between ``nu_min`` and ``nu_max``.

    With ``on_distance=True`` the spacing is done on ``sqrt(2 KLD)`` instead.
    Returns the unrounded grid; see :func:`round_grid`.
    """
    if on_distance:
        g = lambda v: pc_distance(v, direction, scaling)  # noqa: E731
    else:
        g = lambda v: kld_normal_t(v, direction, scaling)  # noqa: E731
    top, bottom = g(req.nu_min), g(req.nu_max)
    step = (top - bottom) / (req.K - 1)
    grid = [req.nu_min]
    for j in range(1, req.K - 1):
        grid.append(_bisect(g, grid[-1], req.nu_max, top - j * step, GRID_NU_TOL))
    grid.append(req.nu_max)
    out = np.array(grid)
    if np.any(np.diff(out) <= 0):
        raise NumericalError(f"grid is not strictly increasing: {out}")
    return out


def round_grid(grid, decimals: int = 1) -> np.ndarray:
    return np.round(np.asarray(grid, dtype=float), decimals)


def compare_conventions(nu_min: float = 2.8, nu_max: float = 14.4, Ks=(3, 4), decimals: int = 1) -> list:
    """Grid interiors under every KLD convention against the reference grids.

    Rows are ranked by the number of interior points that match the
    reference after rounding, then by the summed absolute deviation.
    """
    rows = []
    for direction in Direction:
        for scaling in Scaling:
            for on_distance in (False, True):
                grids, devs, matches = {}, [], 0
                for K in Ks:
                    g = build_nu_grid(NuGridRequest(nu_min, nu_max, K), direction, scaling, on_distance)
                    grids[K] = g
                    ref = REFERENCE_GRIDS.get(K)
                    if ref is not None and len(ref) == K and ref[0] == nu_min and ref[-1] == nu_max:
                        inner = np.asarray(ref[1:-1])
                        devs.extend(np.abs(g[1:-1] - inner))
                        matches += int(np.sum(np.isclose(round_grid(g[1:-1], decimals), inner)))
                rows.append(
                    {
                        "direction": direction.value,
                        "scaling": scaling.value,
                        "metric": "distance" if on_distance else "kld",
                        "grids": grids,
                        "rounded_matches": matches,
                        "total_abs_deviation": float(np.sum(devs)) if devs else float("nan"),
                        "max_interior_deviation": float(np.max(devs)) if devs else float("nan"),
                    }
                )
    rows.sort(key=lambda r: (-r["rounded_matches"], r["total_abs_deviation"]))
    return rows


def _distance_derivative(nu: float, direction, scaling) -> float:
    h = 1e-4 * max(1.0, nu)
    h = min(h, 0.5 * (nu - 2.0))
    return (pc_distance(nu + h, direction, scaling) - pc_distance(nu - h, direction, scaling)) / (2 * h)


def pc_prior_logpdf(nu: float, spec: PcPriorSpec, direction: Direction | None = None) -> float:
    """Log PC-prior density ``log(lam) - lam d(nu) + log|d'(nu)|`` on ``nu > 2``.

    ``d'`` is a central finite difference with step ``1e-4 * max(1, nu)``.
    The density is not renormalised to the truncated support.
    """
    direction = spec.direction if direction is None else Direction(direction)
    nu = float(nu)
    if not nu > 2:
        raise ValueError("the PC prior is supported on nu > 2")
    dprime = _distance_derivative(nu, direction, spec.scaling)
    if not np.isfinite(dprime) or dprime == 0:
        raise NumericalError(f"non-finite or zero derivative of d at nu={nu}")
    return math.log(spec.lam) - spec.lam * pc_distance(nu, direction, spec.scaling) + math.log(abs(dprime))


def default_pc_lambda(
    direction=Direction.FLEXIBLE_VS_BASE,
    scaling=Scaling.UNIT_VARIANCE,
    nu_upper: float = 10.0,
    prob: float = 0.8,
) -> float:
    """Rate giving prior mass ``prob`` to ``2 < nu < nu_upper`` (mass taken relative to ``nu > 2``)."""
    direction, scaling = Direction(direction), Scaling(scaling)
    d_up = pc_distance(nu_upper, direction, scaling)
    if scaling is Scaling.UNIT_VARIANCE:
        # d(nu) diverges as nu -> 2, so the support carries all the mass
        return -math.log(prob) / d_up
    d_low = pc_distance(2.0 + 1e-9, direction, scaling) if direction is Direction.BASE_VS_FLEXIBLE else math.inf
    if not np.isfinite(d_low):
        return -math.log(prob) / d_up

    def frac(lam):
        return (math.exp(-lam * d_up) - math.exp(-lam * d_low)) / (1 - math.exp(-lam * d_low)) - prob

    return optimize.brentq(frac, 1e-6, 1e4)


@dataclass
class _PcTable:
    """Log PC prior on ``x = log(nu - 2)`` including the Jacobian ``nu - 2``."""

    x_min: float
    x_max: float
    spline: CubicSpline

    def __call__(self, x: float) -> float:
        if x < self.x_min or x > self.x_max:
            return -math.inf
        return float(self.spline(x))


@lru_cache(maxsize=32)
def pc_prior_table(spec: PcPriorSpec, nu_excess_min: float = 0.01, nu_excess_max: float = 1000.0, points: int = 401):
    """Cubic-spline table of the log PC prior on ``log(nu - 2)``, for use inside MCMC.

    Outside ``[2 + nu_excess_min, 2 + nu_excess_max]`` the table returns
    ``-inf``, truncating the prior there.
    """
    xs = np.linspace(math.log(nu_excess_min), math.log(nu_excess_max), points)
    vals = np.array([pc_prior_logpdf(2.0 + math.exp(x), spec) + x for x in xs])
    return _PcTable(float(xs[0]), float(xs[-1]), CubicSpline(xs, vals))
