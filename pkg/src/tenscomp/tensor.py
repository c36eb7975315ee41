"""Dense 3-way field helpers: mode unfolding/folding, mask projections and RSE.

Fields are plain ``numpy`` arrays of shape ``(i, j, k)``.  Whenever a field is
flattened to a 1-D sequence (files, manifests) index ``i`` varies fastest, then
``j``, then ``k`` -- i.e. Fortran order.

Mode-n unfolding places mode ``n`` on the rows.  Columns enumerate the two
remaining modes with the lower-numbered one varying fastest, so for a field of
shape ``(I, J, K)``::

    unfold(X, 0)[i, j + J*k] == X[i, j, k]
    unfold(X, 1)[j, i + I*k] == X[i, j, k]
    unfold(X, 2)[k, i + I*j] == X[i, j, k]
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Dims3(NamedTuple):
    i: int
    j: int
    k: int

    @property
    def size(self) -> int:
        return self.i * self.j * self.k


def as_dims(dims) -> Dims3:
    """Coerce a 3-sequence to :class:`Dims3`, checking positivity."""
    try:
        i, j, k = (int(d) for d in dims)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"dims must be three integers, got {dims!r}") from exc
    if min(i, j, k) <= 0:
        raise ValueError(f"dims must be strictly positive, got {(i, j, k)}")
    return Dims3(i, j, k)


def check_field(field, name: str = "field") -> np.ndarray:
    arr = np.asarray(field, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-dimensional, got shape {arr.shape}")
    as_dims(arr.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_mask(mask, shape=None) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool:
        raise TypeError(f"mask must be boolean, got dtype {arr.dtype}")
    if arr.ndim != 3:
        raise ValueError(f"mask must be 3-dimensional, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"mask shape {arr.shape} does not match field shape {tuple(shape)}")
    return arr


def _check_mode(mode) -> int:
    if mode not in (0, 1, 2) or isinstance(mode, bool):
        raise ValueError(f"mode must be 0, 1 or 2, got {mode!r}")
    return int(mode)


def unfold(field: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding of a 3-way array.

    Returns a matrix of shape ``(dims[mode], prod(other dims))`` following the
    column convention in the module docstring.
    """
    mode = _check_mode(mode)
    field = np.asarray(field)
    if field.ndim != 3:
        raise ValueError(f"expected a 3-way array, got shape {field.shape}")
    return np.reshape(np.moveaxis(field, mode, 0), (field.shape[mode], -1), order="F")


def fold(matrix: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold` for the same ``mode`` and ``dims``."""
    mode = _check_mode(mode)
    dims = as_dims(dims)
    matrix = np.asarray(matrix)
    rest = [d for n, d in enumerate(dims) if n != mode]
    expected = (dims[mode], rest[0] * rest[1])
    if matrix.shape != expected:
        raise ValueError(
            f"mode-{mode} unfolding of dims {tuple(dims)} must have shape {expected}, "
            f"got {matrix.shape}"
        )
    return np.moveaxis(np.reshape(matrix, (dims[mode], *rest), order="F"), 0, mode)


def _same_shape(field, mask):
    field = np.asarray(field)
    mask = check_mask(mask)
    if field.shape != mask.shape:
        raise ValueError(f"field shape {field.shape} does not match mask shape {mask.shape}")
    return field, mask


def project(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Keep observed entries, zero the rest."""
    field, mask = _same_shape(field, mask)
    return np.where(mask, field, 0.0)


def project_complement(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Keep unobserved entries, zero the observed ones."""
    field, mask = _same_shape(field, mask)
    return np.where(mask, 0.0, field)


def frobenius_norm(field) -> float:
    return float(np.linalg.norm(np.ravel(field)))


def rse(reconstruction: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """Error-to-truth norm ratio over the unobserved cells only.

    Note this is a ratio of Frobenius norms, not of squared norms.
    """
    reconstruction = np.asarray(reconstruction, dtype=float)
    truth, mask = _same_shape(np.asarray(truth, dtype=float), mask)
    if reconstruction.shape != truth.shape:
        raise ValueError(
            f"reconstruction shape {reconstruction.shape} does not match truth {truth.shape}"
        )
    hidden = ~mask
    if not hidden.any():
        raise ValueError("no unobserved cells: RSE is undefined")
    denom = np.linalg.norm(truth[hidden])
    if denom == 0.0:
        raise ValueError("ground truth is identically zero on the unobserved cells")
    return float(np.linalg.norm(reconstruction[hidden] - truth[hidden]) / denom)
