"""Residual monitoring: T^2 statistics, KDE thresholds, detection and estimation scores."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import gaussian_kde

from .errors import DataError, NumericError, ShapeError
from .idn import idn_apply

log = logging.getLogger(__name__)

MIN_GRID = 4096


def residuals(idn, Z):
    """Decoupling-network output for standardized observations."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != idn.m_z:
        raise ShapeError(f"expected (N, {idn.m_z}) observations, got {Z.shape}")
    # raw process data sits far from zero with a small spread on every channel;
    # standardized data with large faults has a spread comparable to its offset
    if len(Z) > 1 and np.all(np.abs(Z.mean(axis=0)) > 10.0 * np.maximum(Z.std(axis=0), 1.0)):
        log.warning("every input column is far from zero; was it standardized with the training scaler?")
    return idn_apply(idn, Z)


def estimate_fault(idn, Z, scaler=None):
    """Fault estimate ``-D(z)``; physical units if ``scaler`` is given."""
    f = -residuals(idn, np.atleast_2d(Z))
    if scaler is not None:
        f = scaler.unscale_only(f)
    return f if np.ndim(Z) == 2 else f[0]


@dataclass
class ResidualStats:
    mean: np.ndarray
    covariance: np.ndarray
    inverse: np.ndarray
    ridge: float

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["covariance"]), np.array(d["inverse"]), float(d["ridge"]))


def fit_stats(Phi, ridge_scale=1e-6):
    Phi = np.asarray(Phi, dtype=np.float64)
    n, m = Phi.shape
    if n < 10 * m:
        raise DataError(f"need at least {10 * m} residual rows to fit statistics, got {n}")
    mean = Phi.mean(axis=0)
    X = Phi - mean
    cov = X.T @ X / n
    ridge = ridge_scale * np.trace(cov) / m
    cov = cov + ridge * np.eye(m)
    try:
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise NumericError("residual covariance is singular even after ridge") from None
    if not np.all(np.isfinite(inv)) or np.max(np.abs(inv @ cov - np.eye(m))) > 1e-8:
        raise NumericError("residual covariance is numerically singular even after ridge")
    return ResidualStats(mean, cov, inv, float(ridge))


def t2(stats, phi):
    """Hotelling-type statistic; accepts one vector or an ``(N, m)`` array."""
    d = np.asarray(phi, dtype=np.float64) - stats.mean
    return np.einsum("...i,ij,...j->...", d, stats.inverse, d)


@dataclass
class Threshold:
    j_th: float
    confidence: float
    bandwidth: float
    n_train_stats: int

    @property
    def expected_far(self):
        return 1.0 - self.confidence


def kde_bandwidth(x):
    return 1.06 * np.std(x, ddof=1) * len(x) ** -0.2


def learn_threshold(t2_train, expected_far=0.005, min_grid=MIN_GRID):
    """Upper ``1 - expected_far`` quantile of a Gaussian KDE of ``t2_train``.

    Bandwidth ``1.06 sigma N^-0.2``; the CDF is the trapezoid integral of the
    density on a uniform grid over ``[min - 4h, max + 4h]``.
    """
    x = np.asarray(t2_train, dtype=np.float64).ravel()
    if x.size < 1000:
        raise DataError(f"need at least 1000 training statistics, got {x.size}")
    if not 0.0 < expected_far < 1.0:
        raise ValueError("expected_far must lie in (0, 1)")
    sigma = np.std(x, ddof=1)
    if not sigma > 0:
        raise NumericError("all training statistics are equal; cannot fit a density")
    h = kde_bandwidth(x)
    lo, hi = x.min() - 4 * h, x.max() + 4 * h
    # keep the grid at least four points per bandwidth
    n_grid = int(max(min_grid, min(np.ceil(4 * (hi - lo) / h), 1 << 20)))
    grid = np.linspace(lo, hi, n_grid)
    kde = gaussian_kde(x, bw_method=h / sigma)
    cdf = cumulative_trapezoid(kde(grid), grid, initial=0.0)
    target = 1.0 - expected_far
    i = int(np.searchsorted(cdf, target, side="left"))
    j_th = grid[min(i, n_grid - 1)]
    return Threshold(float(j_th), target, float(h), int(x.size))


def classify(threshold, t2_value):
    """True (faulty) iff the statistic exceeds the threshold."""
    j = threshold.j_th if isinstance(threshold, Threshold) else float(threshold)
    return np.asarray(t2_value) > j


@dataclass
class FaultScore:
    fault_id: str
    n_fa: int
    n_ta: int
    n_md: int
    n_rd: int
    far: float
    mdr: float
    rmse: float = None  # None when the fault has no additive ground truth

    @property
    def total(self):
        return self.n_fa + self.n_ta + self.n_md + self.n_rd


@dataclass
class DetectionReport:
    faults: list = field(default_factory=list)

    @property
    def afar(self):
        return float(np.mean([f.far for f in self.faults]))

    @property
    def amdr(self):
        return float(np.mean([f.mdr for f in self.faults]))

    @property
    def armse(self):
        vals = [f.rmse for f in self.faults if f.rmse is not None]
        return float(np.mean(vals)) if vals else None

    def by_id(self, fault_id):
        return next(f for f in self.faults if f.fault_id == fault_id)


def rmse(f_est, f_true):
    """Root of the mean, over samples, of the squared 2-norm of the estimation error."""
    e = np.asarray(f_est, dtype=np.float64) - np.asarray(f_true, dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum(e * e, axis=-1))))


def score_fault(fault_id, predictions, labels, f_est=None, f_true=None):
    """Counts and rates for one test set; ``labels``/``predictions`` are True for faulty."""
    pred = np.asarray(predictions, dtype=bool)
    lab = np.asarray(labels, dtype=bool)
    if pred.shape != lab.shape:
        raise ShapeError(f"{len(pred)} predictions for {len(lab)} labels")
    n_fa = int(np.sum(pred & ~lab))
    n_rd = int(np.sum(~pred & ~lab))
    n_ta = int(np.sum(pred & lab))
    n_md = int(np.sum(~pred & lab))
    far = n_fa / (n_fa + n_rd) if n_fa + n_rd else 0.0
    mdr = n_md / (n_md + n_ta) if n_md + n_ta else 0.0
    err = None
    if f_est is not None and f_true is not None:
        if len(f_est) != len(lab) or len(f_true) != len(lab):
            raise ShapeError("fault series length does not match labels")
        err = rmse(f_est, f_true)
    return FaultScore(fault_id, n_fa, n_ta, n_md, n_rd, far, mdr, err)


@dataclass
class Monitor:
    """Fitted residual statistics plus threshold."""

    stats: ResidualStats
    threshold: Threshold

    def statistic(self, idn, Zs):
        return t2(self.stats, residuals(idn, Zs))

    def to_dict(self):
        return {"stats": self.stats.to_dict(), "threshold": asdict(self.threshold)}

    @classmethod
    def from_dict(cls, d):
        return cls(ResidualStats.from_dict(d["stats"]), Threshold(**d["threshold"]))


def fit_monitor(idn, Zs_train, expected_far=0.005):
    Phi = residuals(idn, Zs_train)
    stats = fit_stats(Phi)
    return Monitor(stats, learn_threshold(t2(stats, Phi), expected_far))
