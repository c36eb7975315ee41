"""Seeded synthetic fields for tests, benchmarks and desk-scale runs."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .tensor import as_dims


def rank_one(dims, seed: int) -> np.ndarray:
    """Outer product ``u (x) v (x) w`` with standard normal factors."""
    dims = as_dims(dims)
    rng = np.random.default_rng(seed)
    u, v, w = (rng.standard_normal(n) for n in dims)
    return np.einsum("i,j,k->ijk", u, v, w)


def tucker(dims, ranks, seed: int) -> np.ndarray:
    """Gaussian core times Gaussian factor matrices, scaled to unit std."""
    dims = as_dims(dims)
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(tuple(ranks))
    factors = [rng.standard_normal((n, r)) for n, r in zip(dims, ranks)]
    x = np.einsum("abc,ia,jb,kc->ijk", core, *factors)
    return x / x.std()


def step_levels(k: int, levels=(1.0, -0.5, 2.0)) -> np.ndarray:
    """Piecewise-constant profile over ``k`` layers with equal-thickness
    blocks."""
    edges = np.linspace(0, k, len(levels) + 1)
    idx = np.searchsorted(edges, np.arange(k), side="right") - 1
    return np.asarray(levels, dtype=float)[np.clip(idx, 0, len(levels) - 1)]


def layered(dims, levels=(1.0, -0.5, 2.0)) -> np.ndarray:
    """``sin(2 pi i / I) * cos(2 pi j / J) * g(k)`` with ``g`` a step profile."""
    dims = as_dims(dims)
    i = np.arange(dims.i)
    j = np.arange(dims.j)
    g = step_levels(dims.k, levels)
    return np.einsum(
        "i,j,k->ijk", np.sin(2 * np.pi * i / dims.i), np.cos(2 * np.pi * j / dims.j), g
    )


def gaussian_random_field(dims, correlation=(8.0, 8.0, 2.0), seed: int = 0) -> np.ndarray:
    """Anisotropic stationary GRF: white noise smoothed by a gaussian kernel
    with per-axis widths ``correlation`` (cells), scaled to unit std."""
    dims = as_dims(dims)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(dims)
    x = ndimage.gaussian_filter(noise, sigma=correlation, mode="wrap")
    return (x - x.mean()) / x.std()


def make_field(spec: dict) -> np.ndarray:
    """Build a field from a config dict such as
    ``{"kind": "tucker", "dims": [40, 40, 40], "ranks": [3, 3, 3], "seed": 0}``.

    ``offset`` and ``scale`` (defaults 0 and 1) are applied last.
    """
    kind = spec.get("kind")
    dims = spec.get("dims")
    seed = int(spec.get("seed", 0))
    if kind == "rank_one":
        x = rank_one(dims, seed)
    elif kind == "tucker":
        x = tucker(dims, spec.get("ranks", (3, 3, 3)), seed)
    elif kind == "layered":
        x = layered(dims, spec.get("levels", (1.0, -0.5, 2.0)))
    elif kind == "grf":
        x = gaussian_random_field(dims, spec.get("correlation", (8.0, 8.0, 2.0)), seed)
    else:
        raise ValueError(f"unknown synthetic field kind {kind!r}")
    return x * float(spec.get("scale", 1.0)) + float(spec.get("offset", 0.0))
