"""ADMM tensor completion under a sum-of-nuclear-norms prior.

Two variants share one loop:

* :func:`complete_plain` -- every mode-wise lane takes the update
  ``V_n = Z_n - T_n / rho``.
* :func:`complete_smoothed` -- lanes 0 and 1 instead solve
  ``(beta * D^T D + rho * I) V_n = rho * Z_n - T_n`` on their mode unfolding,
  which adds a path-graph Laplacian penalty along the two horizontal axes.

Each iteration thresholds the three unfoldings, applies the lane updates,
restores the observed cells, updates the duals and averages the three lanes
into a single reconstruction that seeds the next iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .linalg import RegularizedSolver, build_difference_operator, svd
from .tensor import check_mask, fold, unfold

N_LANES = 3


class DivergenceError(FloatingPointError):
    def __init__(self, iteration: int, lane: Optional[int], what: str = "iterate"):
        self.iteration = iteration
        self.lane = lane
        where = "reconstruction" if lane is None else f"lane {lane}"
        super().__init__(f"non-finite {what} at iteration {iteration} ({where})")


@dataclass(frozen=True)
class AdmmParams:
    """Solver configuration.

    ``beta`` defaults to ``0.1 * rho``.  The SVT threshold is ``alpha / rho``.
    """

    alpha: float = 1.0
    rho: float = 1.0
    beta: Optional[float] = None
    max_iters: int = 500
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", 0.1 * self.rho)
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")

    @property
    def threshold(self) -> float:
        return self.alpha / self.rho


@dataclass
class ConvergenceTrace:
    rel_change: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    nuclear_surrogate: list = field(default_factory=list)

    def __len__(self):
        return len(self.rel_change)

    def append(self, rel_change: float, primal_residual: float, nuclear_surrogate: float):
        self.rel_change.append(rel_change)
        self.primal_residual.append(primal_residual)
        self.nuclear_surrogate.append(nuclear_surrogate)

    def rows(self):
        for it, rec in enumerate(zip(self.rel_change, self.primal_residual, self.nuclear_surrogate)):
            yield (it + 1, *rec)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "rel_change", "primal_residual", "nuclear_surrogate"])
            for row in self.rows():
                writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])
        return path


@dataclass
class AdmmState:
    """Iterate state.

    ``x``, ``z`` and ``t`` hold the three lanes stacked on axis 0, shape
    ``(3, I, J, K)``.  ``x`` is the lane iterate after the data-consistency
    step; ``x_hat`` is the lane average the next iteration starts from.
    """

    x: np.ndarray
    z: np.ndarray
    t: np.ndarray
    x_hat: np.ndarray
    iteration: int = 0
    rel_change: float = float("inf")
    primal_residual: float = float("nan")
    nuclear_surrogate: float = float("nan")

    @classmethod
    def initial(cls, y: np.ndarray, mask: np.ndarray) -> "AdmmState":
        y0 = np.where(mask, y, 0.0)
        x = np.stack([y0] * N_LANES)
        return cls(x=x, z=np.zeros_like(x), t=np.zeros_like(x), x_hat=y0.copy())


def check_convergence(trace: ConvergenceTrace, params: AdmmParams) -> bool:
    """True when the latest relative change of the reconstruction is below
    ``params.rel_tol``."""
    if len(trace) == 0:
        raise ValueError("empty convergence trace")
    return trace.rel_change[-1] < params.rel_tol


def make_solvers(dims, params: AdmmParams):
    """Factored smoothing solves for modes 0 and 1."""
    solvers = []
    for mode in (0, 1):
        n = dims[mode]
        if params.beta > 0 and n < 2:
            raise ValueError(f"smoothing along mode {mode} needs at least 2 cells, got {n}")
        d = build_difference_operator(n) if n >= 2 else np.zeros((0, n))
        solvers.append(RegularizedSolver(d, params.beta, params.rho))
    return tuple(solvers)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = np.linalg.norm(new - old)
    base = np.linalg.norm(old)
    if base == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / base)


def admm_step(
    state: AdmmState,
    y: np.ndarray,
    mask: np.ndarray,
    params: AdmmParams,
    solvers: Optional[Sequence[RegularizedSolver]] = None,
) -> AdmmState:
    """One full iteration.  ``solvers=None`` gives the plain variant."""
    rho = params.rho
    dims = state.x_hat.shape
    k = state.iteration + 1
    z = np.empty_like(state.z)
    nuclear = 0.0
    for n in range(N_LANES):
        w = unfold(state.x_hat + state.t[n] / rho, n)
        u, s, v = svd(w)
        s = np.maximum(s - params.threshold, 0.0)
        keep = s > 0
        with np.errstate(invalid="ignore", over="ignore"):
            z[n] = fold((u[:, keep] * s[keep]) @ v[:, keep].T, n, dims)
        if not np.all(np.isfinite(z[n])):
            raise DivergenceError(k, n, "thresholded unfolding")
        nuclear += float(s.sum())

    v_lanes = np.empty_like(z)
    for n in range(N_LANES):
        if solvers is not None and n < 2:
            rhs = unfold(rho * z[n] - state.t[n], n)
            v_lanes[n] = fold(solvers[n].solve(rhs), n, dims)
        else:
            v_lanes[n] = z[n] - state.t[n] / rho

    x = np.where(mask, y, v_lanes)
    for n in range(N_LANES):
        if not np.all(np.isfinite(x[n])):
            raise DivergenceError(k, n)
    t = state.t + rho * (x - z)
    if not np.all(np.isfinite(t)):
        raise DivergenceError(k, None, "dual variable")

    # average only the free cells so observed cells stay bit-exact
    x_hat = np.where(mask, y, x.mean(axis=0))
    return AdmmState(
        x=x,
        z=z,
        t=t,
        x_hat=x_hat,
        iteration=k,
        rel_change=_relative_change(x_hat, state.x_hat),
        primal_residual=float(np.linalg.norm(x - z)),
        nuclear_surrogate=nuclear,
    )


def _validate(y, mask):
    y = np.asarray(y, dtype=float)
    if y.ndim != 3:
        raise ValueError(f"y must be 3-dimensional, got shape {y.shape}")
    mask = check_mask(mask, y.shape)
    if not mask.any():
        raise ValueError("mask has no observed cells")
    if not np.all(np.isfinite(y[mask])):
        raise ValueError("observed values must be finite")
    return y, mask


def _run(y, mask, params: AdmmParams, smoothed: bool, callback=None):
    y, mask = _validate(y, mask)
    trace = ConvergenceTrace()
    if mask.all():
        return y.copy(), trace
    y = np.where(mask, y, 0.0)
    solvers = make_solvers(y.shape, params) if smoothed else None
    state = AdmmState.initial(y, mask)
    for _ in range(params.max_iters):
        state = admm_step(state, y, mask, params, solvers)
        trace.append(state.rel_change, state.primal_residual, state.nuclear_surrogate)
        if callback is not None:
            callback(state)
        if check_convergence(trace, params):
            break
    return np.where(mask, y, state.x_hat), trace


def complete_plain(y, mask, params: AdmmParams, callback=None):
    """Complete ``y`` on the cells where ``mask`` is False.

    Returns ``(reconstruction, trace)``; observed cells of the reconstruction
    are copied from ``y``.
    """
    return _run(y, mask, params, smoothed=False, callback=callback)


def complete_smoothed(y, mask, params: AdmmParams, callback=None):
    """Like :func:`complete_plain`, with Laplacian smoothing of strength
    ``params.beta`` along modes 0 and 1."""
    return _run(y, mask, params, smoothed=True, callback=callback)


def with_params(params: AdmmParams, **changes) -> AdmmParams:
    """Copy ``params``; changing ``rho`` without ``beta`` re-derives ``beta``."""
    if "rho" in changes and "beta" not in changes:
        changes["beta"] = None
    return replace(params, **changes)
