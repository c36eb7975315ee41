"""SPE10 porosity I/O, well sampling, normalization and slice images."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tensor import Dims3, as_dims, check_mask

SPE10_DIMS = Dims3(60, 220, 85)
SPE10_CELL_FT = (20.0, 20.0, 2.0)
# as published; note 220 cells * 20 ft != 2200 ft (the original benchmark uses 10 ft in y)
SPE10_EXTENT_FT = (1200.0, 2200.0, 170.0)
ORDER = "i-fastest"


class DataError(ValueError):
    pass


@dataclass
class Spe10Grid:
    porosity: np.ndarray
    dims: Dims3 = SPE10_DIMS
    cell_ft: tuple = SPE10_CELL_FT
    extent_ft: tuple = SPE10_EXTENT_FT


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def read_manifest(path) -> Optional[dict]:
    mp = manifest_path(path)
    if not mp.exists():
        return None
    meta = json.loads(mp.read_text())
    if meta.get("order", ORDER) != ORDER:
        raise DataError(f"{mp}: unsupported value order {meta.get('order')!r}")
    return meta


def _parse_values(text: str, expected: int, source) -> np.ndarray:
    tokens = text.split()
    if len(tokens) != expected:
        raise DataError(f"{source}: expected {expected} values, found {len(tokens)}")
    try:
        values = np.array(tokens, dtype=float)
    except ValueError:
        for n, tok in enumerate(tokens):
            try:
                float(tok)
            except ValueError:
                raise DataError(f"{source}: non-numeric token {tok!r} at index {n}") from None
        raise
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DataError(f"{source}: non-finite value {tokens[bad[0]]!r} at index {bad[0]}")
    return values


def load_field(path, dims=None) -> np.ndarray:
    """Read whitespace-separated ASCII floats into an ``(i, j, k)`` array.

    ``dims`` falls back to the sidecar manifest, then to the SPE10 grid.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if dims is None:
        meta = read_manifest(path)
        dims = meta["dims"] if meta else SPE10_DIMS
    dims = as_dims(dims)
    values = _parse_values(path.read_text(), dims.size, path)
    return values.reshape(dims, order="F")


def load_spe10_porosity(path) -> Spe10Grid:
    """Load the SPE10 model-2 porosity file (1,122,000 values, i fastest)."""
    phi = load_field(path, SPE10_DIMS)
    if (phi < 0).any():
        raise DataError(f"{path}: negative porosity values")
    return Spe10Grid(porosity=phi)


def save_field(path, field, cell_ft=(1.0, 1.0, 1.0)) -> Path:
    """Write ``field`` as ASCII (i fastest, shortest round-trip repr) plus a
    sidecar manifest."""
    path = Path(path)
    field = np.asarray(field, dtype=float)
    vals = field.ravel(order="F")
    with path.open("w") as fh:
        for start in range(0, len(vals), 6):
            fh.write(" ".join(repr(float(v)) for v in vals[start : start + 6]))
            fh.write("\n")
    manifest_path(path).write_text(
        json.dumps({"dims": list(field.shape), "cell_ft": list(cell_ft), "order": ORDER}) + "\n"
    )
    return path


def crop(field, size, origin=(0, 0, 0)) -> np.ndarray:
    i0, j0, k0 = origin
    ci, cj, ck = size
    out = np.asarray(field)[i0 : i0 + ci, j0 : j0 + cj, k0 : k0 + ck]
    if out.shape != tuple(size):
        raise ValueError(f"crop {tuple(size)} at {tuple(origin)} exceeds field shape {np.shape(field)}")
    return out.copy()


@dataclass
class WellPlan:
    """Lateral ``(i, j)`` positions of vertical wells, in draw order."""

    wells: np.ndarray
    dims: Dims3

    def __len__(self):
        return len(self.wells)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.dims, dtype=bool)
        m[self.wells[:, 0], self.wells[:, 1], :] = True
        return m

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["well_id", "i", "j"])
            for n, (i, j) in enumerate(self.wells):
                w.writerow([n, int(i), int(j)])
        return path

    @classmethod
    def from_csv(cls, path, dims) -> "WellPlan":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        wells = np.array([[int(r["i"]), int(r["j"])] for r in rows], dtype=np.int64).reshape(-1, 2)
        return cls(wells=wells, dims=as_dims(dims))


def sample_wells(dims, n_wells: int, seed: int):
    """Draw ``n_wells`` distinct lateral positions uniformly without replacement.

    Each well observes its whole vertical column.  Returns ``(plan, mask)``.
    """
    dims = as_dims(dims)
    lateral = dims.i * dims.j
    if n_wells < 0 or n_wells > lateral:
        raise ValueError(f"cannot place {n_wells} wells on {dims.i}x{dims.j} lateral cells")
    rng = np.random.default_rng(seed)
    flat = rng.choice(lateral, size=n_wells, replace=False)
    wells = np.column_stack([flat % dims.i, flat // dims.i]).astype(np.int64)
    plan = WellPlan(wells=wells, dims=dims)
    return plan, plan.mask()


def active_cell_fraction(mask) -> float:
    """Observed cells as a percentage of all cells."""
    mask = check_mask(mask)
    return 100.0 * int(mask.sum()) / mask.size


@dataclass(frozen=True)
class Normalization:
    mean: float
    std: float


def normalize(field, mask):
    """Z-score the field with mean and (population) std of the observed cells."""
    field = np.asarray(field, dtype=float)
    mask = check_mask(mask, field.shape)
    obs = field[mask]
    if obs.size < 2:
        raise ValueError("normalization needs at least 2 observed values")
    std = float(np.std(obs))
    if std == 0.0:
        raise ValueError("observed values have zero spread")
    norm = Normalization(float(np.mean(obs)), std)
    return (field - norm.mean) / norm.std, norm


def denormalize(field, norm: Normalization) -> np.ndarray:
    return np.asarray(field, dtype=float) * norm.std + norm.mean


_AXES = {"x": 0, "y": 1, "z": 2}


def slice_plane(field, axis: str, index: int) -> np.ndarray:
    """2-D raster for one cross-section.

    z-slices have ``i`` down the rows and ``j`` across the columns; x- and
    y-slices put ``k`` down the rows.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    field = np.asarray(field)
    ax = _AXES[axis]
    if not 0 <= index < field.shape[ax]:
        raise IndexError(f"{axis}-index {index} out of range [0, {field.shape[ax]})")
    plane = np.take(field, index, axis=ax)
    return plane if axis == "z" else plane.T


def to_gray(plane, vmin: float, vmax: float) -> np.ndarray:
    plane = np.asarray(plane, dtype=float)
    if vmax <= vmin:
        return np.zeros(plane.shape, dtype=np.uint8)
    scaled = (np.clip(plane, vmin, vmax) - vmin) / (vmax - vmin)
    return np.round(scaled * 255.0).astype(np.uint8)


def write_pgm(path, pixels: np.ndarray) -> Path:
    path = Path(path)
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def export_slice_image(field, axis: str, index: int, path, value_range: Optional[Sequence[float]] = None) -> Path:
    """Write one cross-section as an 8-bit PGM, linear gray map over
    ``value_range`` (defaults to the slice's own min/max)."""
    plane = slice_plane(field, axis, index)
    if value_range is None:
        value_range = (float(plane.min()), float(plane.max()))
    return write_pgm(path, to_gray(plane, *value_range))


def write_panel(path, planes: Sequence[np.ndarray], value_ranges, gap: int = 4) -> Path:
    """Place several equally sized gray rasters side by side, separated by
    white gaps."""
    tiles = [to_gray(p, *r) for p, r in zip(planes, value_ranges)]
    h = tiles[0].shape[0]
    if any(t.shape[0] != h for t in tiles):
        raise ValueError("panel tiles must share a height")
    sep = np.full((h, gap), 255, dtype=np.uint8)
    row = [tiles[0]]
    for t in tiles[1:]:
        row += [sep, t]
    return write_pgm(path, np.hstack(row))
