"""Simulation designs and CSV ingestion.

``simulate_study1`` draws errors from the two-level t mixture itself,
``simulate_study2`` from a two-component skew-t mixture.  Both use
``y = 1 - 2 x1 + x2 + e`` and return the generating truth with the data.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .mixmodel import Dataset, InfiniteVarianceError, ModelSpec, ParamState, error_variance

__all__ = [
    "SkewTComponent",
    "Study2Truth",
    "STUDY1_TRUTH",
    "STUDY1_NU",
    "STUDY2_COMPONENTS",
    "simulate_study1",
    "simulate_study2",
    "simulate_nhanes_like",
    "simulate_two_level_errors",
    "skew_t_moments",
    "skew_t_logpdf",
    "load_csv",
    "load_design",
    "load_galaxies",
    "write_dataset_csv",
    "dataset_digest",
]

log = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none"}

STUDY_BETA0 = 1.0
STUDY_BETA = (-2.0, 1.0)

STUDY1_NU = (2.8, 4.0)
STUDY1_TRUTH = ParamState(
    mu_star=np.array([-1.0, 1.5]) + STUDY_BETA0,
    sigma2=np.array([1.0, 0.75]),
    w=np.array([0.6, 0.4]),
    wdot=np.array([[0.5, 0.5], [0.5, 0.5]]),
    beta=np.array(STUDY_BETA),
    nu=np.array(STUDY1_NU),
)


@dataclass(frozen=True)
class SkewTComponent:
    """Azzalini skew-t: ``mu + sqrt(sigma2) * (delta |T0| + sqrt(1 - delta^2) T1) / sqrt(W)``."""

    mu: float
    sigma2: float
    lam: float
    nu: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def delta(self) -> float:
        return self.lam / math.sqrt(1.0 + self.lam**2)


STUDY2_COMPONENTS = (
    SkewTComponent(mu=-0.8, sigma2=1.0, lam=-1.5, nu=2.8, weight=0.6),
    SkewTComponent(mu=1.2, sigma2=0.75, lam=0.8, nu=4.0, weight=0.4),
)


def _b(nu: float) -> float:
    return math.sqrt(nu / math.pi) * math.exp(gammaln(0.5 * (nu - 1)) - gammaln(0.5 * nu))


def skew_t_moments(c: SkewTComponent):
    """Mean and variance of a skew-t component (requires ``nu > 2``)."""
    if not c.nu > 2:
        raise InfiniteVarianceError(f"skew-t variance is infinite for nu={c.nu}")
    b = _b(c.nu)
    mean = c.mu + math.sqrt(c.sigma2) * c.delta * b
    var = c.sigma2 * (c.nu / (c.nu - 2) - c.delta**2 * b**2)
    return mean, var


def skew_t_logpdf(x, c: SkewTComponent):
    """``log(2/s) + log t_nu(z) + log T_{nu+1}(lam z sqrt((nu+1)/(nu+z^2)))`` with ``z = (x - mu)/s``."""
    s = math.sqrt(c.sigma2)
    z = (np.asarray(x, dtype=float) - c.mu) / s
    arg = c.lam * z * np.sqrt((c.nu + 1) / (c.nu + z * z))
    return math.log(2 / s) + stats.t.logpdf(z, c.nu) + stats.t.logcdf(arg, c.nu + 1)


@dataclass(frozen=True)
class Study2Truth:
    components: tuple = STUDY2_COMPONENTS
    beta0: float = STUDY_BETA0
    beta: tuple = STUDY_BETA

    def error_mean(self) -> float:
        return sum(c.weight * skew_t_moments(c)[0] for c in self.components)

    def error_variance(self) -> float:
        m = np.array([skew_t_moments(c) for c in self.components])
        w = np.array([c.weight for c in self.components])
        mean = w @ m[:, 0]
        return float(w @ (m[:, 1] + m[:, 0] ** 2) - mean**2)

    def error_pdf(self, e, centred: bool = True):
        """Error density; ``centred`` shifts it to mean zero so it compares with fitted error densities."""
        e = np.asarray(e, dtype=float) + (self.error_mean() if centred else 0.0)
        return sum(c.weight * np.exp(skew_t_logpdf(e, c)) for c in self.components)

    def to_dict(self) -> dict:
        return {
            "components": [asdict(c) for c in self.components],
            "beta0": self.beta0,
            "beta": list(self.beta),
            "error_mean": self.error_mean(),
            "error_variance": self.error_variance(),
        }


def simulate_two_level_errors(n: int, theta: ParamState, nu, rng) -> np.ndarray:
    """Errors ``e = mu_j + sqrt(sigma2_j / u) N(0,1)``, centred via ``beta0 = sum_j w_j mu_star_j``."""
    nu = np.asarray(nu, dtype=float)
    beta0 = float(theta.w @ theta.mu_star)
    mu = theta.mu_star - beta0
    J, K = theta.wdot.shape
    j = rng.choice(J, size=n, p=theta.w)
    cdf = np.cumsum(theta.wdot, axis=1)[j]
    k = np.minimum((cdf < rng.random(n)[:, None] * cdf[:, -1:]).sum(axis=1), K - 1)
    u = rng.gamma(nu[k] / 2, 2 / nu[k])
    return mu[j] + np.sqrt(theta.sigma2[j] / u) * rng.standard_normal(n)


def _study_covariates(n: int, rng, binary_x2: bool) -> np.ndarray:
    x1 = rng.standard_normal(n)
    x2 = rng.binomial(1, 0.5, size=n).astype(float) if binary_x2 else rng.random(n)
    return np.column_stack([x1, x2])


def simulate_study1(n: int, seed: int):
    """Study-1 data and its generating :class:`ParamState` (``nu`` holds the true (2.8, 4))."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = _study_covariates(n, rng, binary_x2=False)
    e = simulate_two_level_errors(n, STUDY1_TRUTH, STUDY1_NU, rng)
    y = STUDY_BETA0 + X @ np.array(STUDY_BETA) + e
    return Dataset(y, X, ids=list(range(1, n + 1)), columns=["x1", "x2"]), STUDY1_TRUTH.copy()


def study1_error_variance() -> float:
    spec = ModelSpec.with_defaults(2, STUDY1_NU, p=2)
    return error_variance(STUDY1_TRUTH, spec)


def simulate_skew_t(n: int, c: SkewTComponent, rng) -> np.ndarray:
    t0 = np.abs(rng.standard_normal(n))
    t1 = rng.standard_normal(n)
    w = rng.gamma(c.nu / 2, 2 / c.nu, size=n)
    d = c.delta
    return c.mu + math.sqrt(c.sigma2) * (d * t0 + math.sqrt(1 - d * d) * t1) / np.sqrt(w)


def simulate_study2_errors(n: int, rng, truth: Study2Truth = Study2Truth()) -> np.ndarray:
    w = np.array([c.weight for c in truth.components])
    j = rng.choice(len(w), size=n, p=w / w.sum())
    e = np.empty(n)
    for idx, c in enumerate(truth.components):
        sel = j == idx
        e[sel] = simulate_skew_t(int(sel.sum()), c, rng)
    return e


def simulate_study2(n: int, seed: int):
    """Study-2 data (skew-t mixture errors, Bernoulli ``x2``) and its :class:`Study2Truth`."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    truth = Study2Truth()
    X = _study_covariates(n, rng, binary_x2=True)
    e = simulate_study2_errors(n, rng, truth)
    y = truth.beta0 + X @ np.array(truth.beta) + e
    return Dataset(y, X, ids=list(range(1, n + 1)), columns=["x1", "x2"]), truth


# Error mixture taken from a four-component fit to body weight (kg), rescaled so the
# error standard deviation is 23 kg.
NHANES_NU = (2.8, 3.2, 3.9, 14.4)
_NHANES_RAW = ParamState(
    mu_star=np.array([-30.586, -4.064, 22.012, 62.097]),
    sigma2=np.array([27.479, 173.528, 190.682, 118.679]),
    w=np.array([0.141, 0.580, 0.261, 0.018]),
    wdot=np.array(
        [
            [0.146, 0.196, 0.231, 0.427],
            [0.027, 0.036, 0.055, 0.882],
            [0.204, 0.233, 0.313, 0.250],
            [0.245, 0.255, 0.264, 0.236],
        ]
    ),
    beta=np.array([0.642, 6.098, 4.319]),
)
NHANES_BETA0 = 33.154
NHANES_ERROR_SD = 23.0


def nhanes_like_truth() -> ParamState:
    raw = _NHANES_RAW.copy()
    raw.w = raw.w / raw.w.sum()
    raw.wdot = raw.wdot / raw.wdot.sum(axis=1, keepdims=True)
    raw.mu_star = raw.mu_star - raw.w @ raw.mu_star
    v = error_variance(raw, ModelSpec.with_defaults(4, NHANES_NU, p=3))
    c = NHANES_ERROR_SD / math.sqrt(v)
    raw.mu_star = raw.mu_star * c + NHANES_BETA0
    raw.sigma2 = raw.sigma2 * c * c
    raw.nu = np.array(NHANES_NU)
    return raw


def simulate_nhanes_like(n: int, seed: int):
    """Weight-like response on (age, sex, diabetes) with a four-component error mixture."""
    rng = np.random.default_rng(seed)
    truth = nhanes_like_truth()
    age = rng.integers(2, 81, size=n).astype(float)
    sex = rng.binomial(1, 0.5, size=n).astype(float)
    diabetes = rng.binomial(1, 0.08, size=n).astype(float)
    X = np.column_stack([age, sex, diabetes])
    e = simulate_two_level_errors(n, truth, NHANES_NU, rng)
    y = float(truth.w @ truth.mu_star) + X @ truth.beta + e
    return Dataset(y, X, ids=list(range(1, n + 1)), columns=["age", "sex", "diabetes"]), truth


def _read_columns(path: Path, wanted: list):
    """Parse ``wanted`` columns of a header-first CSV; returns ``(ids, values, n_dropped)``."""
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        missing_cols = [c for c in wanted if c not in header]
        if missing_cols:
            raise ValueError(f"{path}: columns not found: {missing_cols}")
        idx = [header.index(c) for c in wanted]
        id_idx = header.index("id") if "id" in header else None
        rows, ids, dropped = [], [], 0
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}: line {line_no} has {len(rec)} fields, expected {len(header)}")
            fields = [rec[i].strip() for i in idx]
            if any(f.lower() in MISSING for f in fields):
                dropped += 1
                continue
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise ValueError(f"{path}: line {line_no} has a non-numeric value: {fields}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: line {line_no} has a non-finite value")
            rows.append(vals)
            ids.append(rec[id_idx] if id_idx is not None else str(line_no - 1))
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, dropped)
    if not rows:
        raise ValueError(f"{path}: no complete rows")
    return ids, np.array(rows).reshape(len(rows), len(wanted)), dropped


def load_csv(path, response_column: str, covariate_columns=()) -> Dataset:
    """Read a header-first CSV; rows with missing values are dropped and counted."""
    path = Path(path)
    covariate_columns = list(covariate_columns)
    ids, arr, dropped = _read_columns(path, [response_column] + covariate_columns)
    return Dataset(arr[:, 0], arr[:, 1:], ids=ids, columns=covariate_columns, n_dropped=dropped)


def load_design(path, covariate_columns=()):
    """Covariates only, for prediction at new points: ``(ids, X, n_dropped)``."""
    return _read_columns(Path(path), list(covariate_columns))


def load_galaxies() -> Dataset:
    """Velocities (1000 km/s) of 82 galaxies; no covariates."""
    with resources.as_file(resources.files("flexreg") / "data" / "galaxies.csv") as p:
        return load_csv(p, "velocity", [])


def write_dataset_csv(data: Dataset, path, response_name: str = "y") -> None:
    cols = data.columns or [f"x{i + 1}" for i in range(data.p)]
    ids = data.ids if data.ids is not None else list(range(1, data.n + 1))
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", response_name, *cols])
        for i in range(data.n):
            wr.writerow([ids[i], repr(float(data.y[i])), *(repr(float(v)) for v in data.X[i])])


def dataset_digest(data: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.y, dtype=float).tobytes())
    h.update(np.ascontiguousarray(data.X, dtype=float).tobytes())
    h.update(json.dumps(list(data.X.shape)).encode())
    return h.hexdigest()
