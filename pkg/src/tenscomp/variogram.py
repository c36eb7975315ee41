"""Variogram models, empirical estimation and weighted least-squares fitting.

Ranges are *practical* ranges: the spherical model reaches the sill exactly at
the range, the exponential and gaussian models reach 95% of it.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

KINDS = ("spherical", "exponential", "gaussian")
SILL_FLOOR = 1e-12


class DegenerateFitWarning(UserWarning):
    pass


def _structure(kind: str, s: np.ndarray) -> np.ndarray:
    """Unit-sill structure function of the scaled lag ``s = |h| / range``."""
    if kind == "spherical":
        return np.where(s < 1.0, 1.5 * s - 0.5 * s**3, 1.0)
    if kind == "exponential":
        return 1.0 - np.exp(-3.0 * s)
    if kind == "gaussian":
        return 1.0 - np.exp(-3.0 * s**2)
    raise ValueError(f"unknown variogram kind {kind!r}; expected one of {KINDS}")


def rotation_matrix(azimuth: float, dip: float) -> np.ndarray:
    """Rows are the (major, minor, vertical) axes in grid coordinates.

    ``azimuth`` is the counter-clockwise angle in degrees of the major axis from
    the grid ``x`` (``i``) axis in the horizontal plane; ``dip`` tilts the
    major axis downward from horizontal.
    """
    a = np.deg2rad(azimuth)
    d = np.deg2rad(dip)
    ca, sa, cd, sd = np.cos(a), np.sin(a), np.cos(d), np.sin(d)
    major = np.array([ca * cd, sa * cd, -sd])
    minor = np.array([-sa, ca, 0.0])
    vertical = np.cross(major, minor)
    return np.vstack([major, minor, vertical])


def scaled_lag(h, ranges, azimuth: float = 0.0, dip: float = 0.0) -> np.ndarray:
    """Norm of displacement(s) ``h`` (shape ``(..., 3)``) after rotation into the
    anisotropy frame and division by ``ranges``."""
    h = np.asarray(h, dtype=float)
    rotated = h @ rotation_matrix(azimuth, dip).T
    return np.linalg.norm(rotated / np.asarray(ranges, dtype=float), axis=-1)


@dataclass(frozen=True)
class VariogramModel:
    kind: str = "spherical"
    nugget: float = 0.0
    sill: float = 1.0
    ranges: tuple = (1.0, 1.0, 1.0)
    azimuth: float = 0.0
    dip: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variogram kind {self.kind!r}; expected one of {KINDS}")
        ranges = tuple(float(r) for r in np.broadcast_to(self.ranges, 3))
        object.__setattr__(self, "ranges", ranges)
        if min(ranges) <= 0:
            raise ValueError(f"ranges must be positive, got {ranges}")
        if self.nugget < 0 or self.sill <= 0 or self.nugget > self.sill:
            raise ValueError(
                f"need 0 <= nugget <= sill and sill > 0, got nugget={self.nugget}, sill={self.sill}"
            )

    def gamma_scaled(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        g = self.nugget + (self.sill - self.nugget) * _structure(self.kind, s)
        return np.where(s == 0.0, 0.0, g)

    def gamma(self, h) -> np.ndarray:
        """Semivariance at displacement(s) ``h`` of shape ``(..., 3)``."""
        return self.gamma_scaled(scaled_lag(h, self.ranges, self.azimuth, self.dip))

    def covariance(self, h) -> np.ndarray:
        return self.sill - self.gamma(h)

    def covariance_scaled(self, s) -> np.ndarray:
        return self.sill - self.gamma_scaled(s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ranges"] = list(self.ranges)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariogramModel":
        d = dict(d)
        if "ranges" in d:
            d["ranges"] = tuple(d["ranges"])
        return cls(**d)


def covariance(model: VariogramModel, h) -> float:
    """``C(h) = sill - gamma(h)``."""
    return float(model.covariance(np.asarray(h, dtype=float)))


@dataclass
class EmpiricalVariogram:
    lags: np.ndarray
    semivariance: np.ndarray
    counts: np.ndarray
    direction: Optional[np.ndarray] = None
    tolerance: Optional[float] = None

    @property
    def nonempty(self) -> np.ndarray:
        return self.counts > 0


def _direction_filter(d, direction, tolerance):
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    dist = np.linalg.norm(d, axis=1)
    cosang = np.abs(d @ u) / np.where(dist > 0, dist, 1.0)
    return cosang >= np.cos(np.deg2rad(tolerance))


def empirical_variogram(
    positions,
    values,
    lag_width: float,
    n_lags: int,
    direction: Optional[Sequence[float]] = None,
    tolerance: float = 22.5,
    max_pairs: int = 2_000_000,
    seed: int = 0,
) -> EmpiricalVariogram:
    """Method-of-moments semivariogram ``sum((z_i - z_j)^2) / (2 N(h))``.

    Bin ``b`` collects pairs with separation in ``[b, b+1) * lag_width``; its lag
    is the mean separation of its pairs (the bin centre when empty).  When the
    number of distinct pairs exceeds ``max_pairs``, ``max_pairs`` pairs are drawn
    at random with the given seed.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    z = np.asarray(values, dtype=float).ravel()
    if len(pos) != len(z):
        raise ValueError(f"{len(pos)} positions but {len(z)} values")
    if len(z) < 2:
        raise ValueError("need at least 2 samples")
    if lag_width <= 0:
        raise ValueError(f"lag_width must be positive, got {lag_width}")
    n = len(z)
    n_all = n * (n - 1) // 2
    if n_all <= max_pairs:
        a, b = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, n, size=max_pairs)
        b = rng.integers(0, n - 1, size=max_pairs)
        b = b + (b >= a)
    d = pos[b] - pos[a]
    keep = np.ones(len(a), dtype=bool)
    if direction is not None:
        keep &= _direction_filter(d, direction, tolerance)
    dist = np.linalg.norm(d, axis=1)
    bins = np.floor(dist / lag_width).astype(np.int64)
    keep &= (bins < n_lags) & (dist > 0)
    if not keep.any():
        raise ValueError("no sample pairs fall inside the lag bins")
    bins, dist = bins[keep], dist[keep]
    sq = (z[a[keep]] - z[b[keep]]) ** 2
    counts = np.bincount(bins, minlength=n_lags)
    sums = np.bincount(bins, weights=sq, minlength=n_lags)
    dsum = np.bincount(bins, weights=dist, minlength=n_lags)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(counts > 0, sums / (2.0 * counts), 0.0)
        lags = np.where(counts > 0, dsum / counts, (np.arange(n_lags) + 0.5) * lag_width)
    return EmpiricalVariogram(
        lags=lags,
        semivariance=gamma,
        counts=counts,
        direction=None if direction is None else np.asarray(direction, dtype=float),
        tolerance=None if direction is None else float(tolerance),
    )


def grid_axis_variogram(field, axis: int, n_lags: int, spacing: float = 1.0) -> EmpiricalVariogram:
    """Exact semivariogram of a gridded field along one grid axis.

    Uses every pair of cells ``l`` steps apart along ``axis`` for
    ``l = 1..n_lags``; lags are ``l * spacing``.
    """
    x = np.asarray(field, dtype=float)
    n_lags = min(int(n_lags), x.shape[axis] - 1)
    if n_lags < 1:
        raise ValueError(f"axis {axis} has a single cell; no pairs")
    gam, cnt = [], []
    for lag in range(1, n_lags + 1):
        a = np.take(x, np.arange(lag, x.shape[axis]), axis=axis)
        b = np.take(x, np.arange(0, x.shape[axis] - lag), axis=axis)
        diff = a - b
        gam.append(0.5 * float(np.mean(diff**2)))
        cnt.append(diff.size)
    direction = np.zeros(3)
    direction[axis] = 1.0
    return EmpiricalVariogram(
        lags=np.arange(1, n_lags + 1) * float(spacing),
        semivariance=np.array(gam),
        counts=np.array(cnt),
        direction=direction,
        tolerance=0.0,
    )


def fit_variogram(emp: EmpiricalVariogram, kind: str = "spherical", sill: Optional[float] = None) -> VariogramModel:
    """Weighted least squares fit of (nugget, sill, range), weights = pair counts.

    Passing ``sill`` pins the sill and fits only nugget and range.  The
    returned model is isotropic.  All-equal semivariances return a
    nugget-only model and emit :class:`DegenerateFitWarning`.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown variogram kind {kind!r}; expected one of {KINDS}")
    ok = emp.counts > 0
    if ok.sum() < 3:
        raise ValueError(f"need at least 3 nonempty lag bins, got {int(ok.sum())}")
    h = np.asarray(emp.lags, dtype=float)[ok]
    g = np.asarray(emp.semivariance, dtype=float)[ok]
    w = np.sqrt(np.asarray(emp.counts, dtype=float)[ok])
    w = w / w.max()

    if np.ptp(g) <= 1e-12 * max(1.0, abs(g).max()):
        warnings.warn("flat empirical variogram; returning a pure nugget model", DegenerateFitWarning)
        level = max(float(g.mean()), 0.0)
        top = max(level, SILL_FLOOR)
        return VariogramModel(kind=kind, nugget=min(level, top), sill=top, ranges=(float(h.max()),) * 3)

    gmax = float(g.max())
    hmax = float(h.max())
    if sill is None:
        # params: nugget, partial sill, range
        x0 = [max(float(g.min()) * 0.5, 0.0), gmax, 0.5 * hmax]
        lo, hi = [0.0, 0.0, 1e-6 * hmax], [gmax, 10 * gmax, 10 * hmax]

        def resid(p):
            return w * (p[0] + p[1] * _structure(kind, h / p[2]) - g)
    else:
        x0 = [min(float(g.min()) * 0.5, sill), 0.5 * hmax]
        lo, hi = [0.0, 1e-6 * hmax], [float(sill), 10 * hmax]

        def resid(p):
            return w * (p[0] + (sill - p[0]) * _structure(kind, h / p[1]) - g)

    x0 = np.clip(x0, lo, hi)
    fit = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if sill is None:
        nugget, psill, rng_ = fit.x
        total = max(nugget + psill, SILL_FLOOR)
    else:
        nugget, rng_ = fit.x
        total = float(sill)
    return VariogramModel(kind=kind, nugget=float(min(nugget, total)), sill=float(total), ranges=(float(rng_),) * 3)


def fit_anisotropic_from_grid(
    field,
    kind: str = "spherical",
    cell_size=(1.0, 1.0, 1.0),
    n_lags=(30, 30, 30),
) -> VariogramModel:
    """Fit an axis-aligned anisotropic model from a full gridded field.

    Sill is pinned at the field variance; nugget and per-axis ranges come from
    exact grid-axis variograms.  The longer horizontal range becomes the major
    axis (``azimuth`` 0 or 90 degrees).
    """
    x = np.asarray(field, dtype=float)
    total = float(np.var(x))
    if total <= 0:
        raise ValueError("field has zero variance")
    fits = []
    for axis in range(3):
        if x.shape[axis] < 4:
            fits.append(None)
            continue
        emp = grid_axis_variogram(x, axis, n_lags[axis], cell_size[axis])
        fits.append(fit_variogram(emp, kind, sill=total))
    horiz = [f.ranges[0] if f is not None else float(cell_size[a]) for a, f in enumerate(fits[:2])]
    vert = fits[2].ranges[0] if fits[2] is not None else float(cell_size[2])
    nuggets = [f.nugget for f in fits if f is not None]
    nugget = float(np.mean(nuggets)) if nuggets else 0.0
    if horiz[0] >= horiz[1]:
        ranges, az = (horiz[0], horiz[1], vert), 0.0
    else:
        ranges, az = (horiz[1], horiz[0], vert), 90.0
    return VariogramModel(kind=kind, nugget=nugget, sill=total, ranges=ranges, azimuth=az, dip=0.0)
