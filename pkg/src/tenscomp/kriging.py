"""Ordinary kriging on a regular 3-D grid.

Positions are given in cell-index coordinates (cell ``(i, j, k)`` sits at
``(i, j, k)``) and multiplied by ``cell_size`` before any distance is taken, so
variogram ranges and search radii are in physical units (feet for SPE10).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .tensor import as_dims
from .variogram import VariogramModel, rotation_matrix, scaled_lag

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchEllipsoid:
    radii: tuple = (1.0, 1.0, 1.0)
    azimuth: float = 0.0
    dip: float = 0.0
    max_neighbors: int = 16
    min_neighbors: int = 1

    def __post_init__(self):
        radii = tuple(float(r) for r in np.broadcast_to(self.radii, 3))
        object.__setattr__(self, "radii", radii)
        if min(radii) <= 0:
            raise ValueError(f"search radii must be positive, got {radii}")
        if not 1 <= self.min_neighbors <= self.max_neighbors:
            raise ValueError(
                f"need 1 <= min_neighbors <= max_neighbors, got {self.min_neighbors}, {self.max_neighbors}"
            )

    def transform(self, xyz: np.ndarray) -> np.ndarray:
        """Map physical coordinates into the frame where the ellipsoid is the unit ball."""
        return (np.asarray(xyz, dtype=float) @ rotation_matrix(self.azimuth, self.dip).T) / np.asarray(self.radii)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radii"] = list(self.radii)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchEllipsoid":
        d = dict(d)
        if "radii" in d:
            d["radii"] = tuple(d["radii"])
        return cls(**d)


class KrigingWeights(NamedTuple):
    weights: np.ndarray
    mu: float


# cKDTree's distance bound is exclusive; the ellipsoid surface counts as inside
_SEARCH_BOUND = np.nextafter(1.0, 2.0)


def select_neighbors(positions, target, ellipsoid: SearchEllipsoid, cell_size=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Indices of samples inside the search ellipsoid around ``target``.

    Sorted by scaled distance (ties by index) and truncated at
    ``max_neighbors``.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    cs = np.asarray(cell_size, dtype=float)
    d = ellipsoid.transform((pos - np.asarray(target, dtype=float)) * cs)
    dist = np.linalg.norm(d, axis=1)
    idx = np.flatnonzero(dist <= 1.0)
    order = np.lexsort((idx, dist[idx]))
    return idx[order][: ellipsoid.max_neighbors]


def ok_system(positions, target, model: VariogramModel, cell_size=(1.0, 1.0, 1.0)):
    """Ordinary-kriging matrix and right-hand side for one target.

    The covariance block is bordered by a row and column of ones with a zero
    corner; the last unknown is the Lagrange multiplier.
    """
    cs = np.asarray(cell_size, dtype=float)
    p = np.asarray(positions, dtype=float).reshape(-1, 3) * cs
    t = np.asarray(target, dtype=float) * cs
    n = len(p)
    a = np.ones((n + 1, n + 1))
    a[:n, :n] = model.covariance(p[:, None, :] - p[None, :, :])
    a[n, n] = 0.0
    b = np.ones(n + 1)
    b[:n] = model.covariance(p - t)
    return a, b


def krige_weights(positions, target, model: VariogramModel, cell_size=(1.0, 1.0, 1.0)) -> KrigingWeights:
    a, b = ok_system(positions, target, model, cell_size)
    sol = np.linalg.solve(a, b)
    return KrigingWeights(sol[:-1], float(sol[-1]))


def deduplicate(positions, values):
    """Average values of co-located samples."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    z = np.asarray(values, dtype=float).ravel()
    uniq, inv = np.unique(pos, axis=0, return_inverse=True)
    inv = inv.ravel()
    if len(uniq) == len(pos):
        return pos, z
    sums = np.bincount(inv, weights=z, minlength=len(uniq))
    counts = np.bincount(inv, minlength=len(uniq))
    return uniq, sums / counts


def _solve_batch(sample_xyz, nbr, valid, target_xyz, model: VariogramModel):
    """Solve a batch of padded OK systems.

    Padded neighbour slots get an identity row so their weight is exactly 0.
    Returns weights of shape ``(B, m)``.
    """
    bsz, m = nbr.shape
    p = sample_xyz[np.where(valid, nbr, 0)]  # (B, m, 3)
    s = scaled_lag(p[:, :, None, :] - p[:, None, :, :], model.ranges, model.azimuth, model.dip)
    c = model.covariance_scaled(s)
    pair_ok = valid[:, :, None] & valid[:, None, :]
    c = np.where(pair_ok, c, 0.0)
    a = np.zeros((bsz, m + 1, m + 1))
    a[:, :m, :m] = c
    diag = np.arange(m)
    a[:, diag, diag] = np.where(valid, c[:, diag, diag], 1.0)
    a[:, :m, m] = valid
    a[:, m, :m] = valid
    rhs = np.zeros((bsz, m + 1))
    s0 = scaled_lag(p - target_xyz[:, None, :], model.ranges, model.azimuth, model.dip)
    rhs[:, :m] = np.where(valid, model.covariance_scaled(s0), 0.0)
    rhs[:, m] = 1.0
    try:
        sol = np.linalg.solve(a, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sol = np.empty_like(rhs)
        for b in range(bsz):
            sol[b] = np.linalg.lstsq(a[b], rhs[b], rcond=None)[0]
    return sol[:, :m], sol[:, m]


def krige_points(
    positions,
    values,
    targets,
    model: VariogramModel,
    ellipsoid: SearchEllipsoid,
    cell_size=(1.0, 1.0, 1.0),
    chunk: int = 2048,
    return_weights: bool = False,
):
    """Ordinary-kriging predictions at arbitrary target positions.

    Returns ``(pred, n_neighbors)``; targets with fewer than
    ``min_neighbors`` samples in range get NaN.  With ``return_weights`` also
    returns the padded weight matrix and neighbour indices.
    """
    pos, z = deduplicate(positions, values)
    cs = np.asarray(cell_size, dtype=float)
    sample_xyz = pos * cs
    tgt = np.asarray(targets, dtype=float).reshape(-1, 3)
    target_xyz = tgt * cs
    m = min(ellipsoid.max_neighbors, len(pos))
    tree = cKDTree(ellipsoid.transform(sample_xyz))
    dist, nbr = tree.query(ellipsoid.transform(target_xyz), k=m, distance_upper_bound=_SEARCH_BOUND)
    dist = dist.reshape(len(tgt), m)
    nbr = nbr.reshape(len(tgt), m)
    valid = np.isfinite(dist)
    counts = valid.sum(axis=1)
    pred = np.full(len(tgt), np.nan)
    weights = np.zeros((len(tgt), m)) if return_weights else None
    ok = np.flatnonzero(counts >= ellipsoid.min_neighbors)
    for start in range(0, len(ok), chunk):
        rows = ok[start : start + chunk]
        lam, _ = _solve_batch(sample_xyz, nbr[rows], valid[rows], target_xyz[rows], model)
        zz = np.where(valid[rows], z[np.where(valid[rows], nbr[rows], 0)], 0.0)
        pred[rows] = np.sum(lam * zz, axis=1)
        if return_weights:
            weights[rows] = lam
    if return_weights:
        return pred, counts, weights, np.where(valid, nbr, -1)
    return pred, counts


def ordinary_krige(
    positions,
    values,
    dims,
    model: VariogramModel,
    ellipsoid: SearchEllipsoid,
    cell_size=(1.0, 1.0, 1.0),
    chunk: int = 2048,
):
    """Krige every grid cell.

    Cells holding a sample take its value verbatim.  Cells with fewer than
    ``min_neighbors`` samples inside the ellipsoid take the global sample mean.
    Returns ``(field, estimated)`` where ``estimated`` is False exactly on those
    fallback cells.
    """
    dims = as_dims(dims)
    pos, z = deduplicate(positions, values)
    if len(z) == 0:
        raise ValueError("kriging needs at least one sample")
    field = np.full(dims, np.nan)
    estimated = np.ones(dims, dtype=bool)

    on_grid = np.all(pos == np.round(pos), axis=1) & np.all((pos >= 0) & (pos < np.array(dims)), axis=1)
    gi = pos[on_grid].astype(np.int64)
    field[gi[:, 0], gi[:, 1], gi[:, 2]] = z[on_grid]
    sampled = np.zeros(dims, dtype=bool)
    sampled[gi[:, 0], gi[:, 1], gi[:, 2]] = True

    todo = np.argwhere(~sampled)
    if len(todo):
        pred, _ = krige_points(pos, z, todo, model, ellipsoid, cell_size, chunk)
        miss = np.isnan(pred)
        if miss.any():
            log.info("%d cells had fewer than %d neighbours; using the sample mean", int(miss.sum()), ellipsoid.min_neighbors)
        pred[miss] = float(np.mean(z))
        field[todo[:, 0], todo[:, 1], todo[:, 2]] = pred
        estimated[todo[miss, 0], todo[miss, 1], todo[miss, 2]] = False
    return field, estimated
