"""
Coordinate-regression datasets: analytic occupancy volumes, procedural
grayscale images, and binary PGM (P5) input/output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadPGM

__all__ = [
    "TaskDataset",
    "grid_coords",
    "gen_occupancy_task",
    "gen_image_task",
    "image_task_from_array",
    "read_pgm",
    "write_pgm",
    "encode_pgm",
    "decode_pgm",
    "to_uint8_minmax",
    "write_voxels",
]

SPHERE_RADIUS = 0.6
TORUS_MAJOR = 0.5
TORUS_MINOR = 0.2


@dataclass(frozen=True)
class TaskDataset:
    """Grid samples of a target signal.

    ``inputs`` is ``(N, d)`` with every axis in ``[-1, 1]``; ``targets`` is
    ``(N,)``.  Rows run in C order over ``grid_shape``.  For images the
    first input column is the horizontal (column) coordinate.
    """

    inputs: np.ndarray
    targets: np.ndarray
    grid_shape: tuple
    task_kind: str

    def __post_init__(self):
        if self.inputs.shape[0] != int(np.prod(self.grid_shape)):
            raise ValueError("inputs count must equal the product of grid_shape")
        if self.targets.shape != (self.inputs.shape[0],):
            raise ValueError("targets must be one value per input")
        if self.task_kind == "occupancy":
            if not np.all((self.targets == 0) | (self.targets == 1)):
                raise ValueError("occupancy targets must be 0 or 1")
        elif self.task_kind == "image_fit":
            if np.any(self.targets < 0) or np.any(self.targets > 1):
                raise ValueError("image targets must lie in [0, 1]")
        else:
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        for arr in (self.inputs, self.targets):
            arr.flags.writeable = False

    def __len__(self):
        return self.inputs.shape[0]

    def target_grid(self) -> np.ndarray:
        return self.targets.reshape(self.grid_shape)


def grid_coords(*sizes: int) -> np.ndarray:
    """``linspace(-1, 1, size)`` per axis, flattened to ``(prod(sizes), len(sizes))``."""
    axes = [np.linspace(-1.0, 1.0, s) for s in sizes]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def _check_grid(sizes):
    for s in sizes:
        if int(s) < 8:
            raise ValueError(f"grid size must be at least 8 per axis, got {s}")


def gen_occupancy_task(shape: str = "sphere", grid: int = 64) -> TaskDataset:
    """Binary occupancy of a centred analytic solid on a ``grid**3`` lattice.

    sphere: radius 0.6.  torus: major radius 0.5, minor radius 0.2, axis
    along z.  Points on the surface count as inside.
    """
    _check_grid([grid])
    x = grid_coords(grid, grid, grid)
    if shape == "sphere":
        inside = np.sum(x * x, axis=1) <= SPHERE_RADIUS**2
    elif shape == "torus":
        rho = np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2)
        inside = (rho - TORUS_MAJOR) ** 2 + x[:, 2] ** 2 <= TORUS_MINOR**2
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return TaskDataset(x, inside.astype(np.float64), (grid, grid, grid), "occupancy")


def _image_inputs(h, w):
    # column coordinate first
    rows = grid_coords(h, w)
    return rows[:, ::-1].copy()


def gen_image_task(pattern: str = "checker", grid=(64, 64), cells: int = 8,
                   pgm_path: Optional[str] = None) -> TaskDataset:
    """Procedural grayscale target, or an external PGM when ``pgm_path`` is set.

    gradient: ``(x + 1) / 2``.  checker: ``cells x cells`` board, top-left
    cell dark.  radial: rings ``(1 + cos(4 pi r)) / 2``.
    """
    if pgm_path is not None:
        img, maxval = read_pgm(pgm_path)
        return image_task_from_array(img.astype(np.float64) / maxval)
    h, w = (grid, grid) if np.isscalar(grid) else tuple(grid)
    _check_grid([h, w])
    xy = _image_inputs(h, w)
    x, y = xy[:, 0], xy[:, 1]
    if pattern == "gradient":
        t = (x + 1.0) / 2.0
    elif pattern == "checker":
        r, c = np.divmod(np.arange(h * w), w)
        t = (((r * cells) // h + (c * cells) // w) % 2).astype(np.float64)
    elif pattern == "radial":
        t = (1.0 + np.cos(4.0 * np.pi * np.sqrt(x * x + y * y))) / 2.0
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return TaskDataset(xy, np.clip(t, 0.0, 1.0), (h, w), "image_fit")


def image_task_from_array(img) -> TaskDataset:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    h, w = img.shape
    _check_grid([h, w])
    return TaskDataset(_image_inputs(h, w), img.reshape(-1).copy(), (h, w), "image_fit")


# --------------------------------------------------------------------------
# PGM
# --------------------------------------------------------------------------

_HEADER = re.compile(rb"\AP5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Parse binary PGM bytes into ``(uint array of shape (h, w), maxval)``."""
    match = _HEADER.match(data)
    if match is None:
        raise BadPGM("not a binary (P5) PGM header")
    w, h, maxval = (int(g) for g in match.groups())
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise BadPGM(f"bad PGM dimensions or maxval: {w}x{h}, {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = data[match.end():]
    need = w * h * dtype.itemsize
    if len(body) < need:
        raise BadPGM(f"PGM raster truncated: {len(body)} of {need} bytes")
    img = np.frombuffer(body[:need], dtype=dtype).reshape(h, w)
    if img.max(initial=0) > maxval:
        raise BadPGM("pixel value exceeds maxval")
    return img.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def encode_pgm(img, maxval: Optional[int] = None) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if maxval is None:
        maxval = 255 if img.dtype == np.uint8 else int(max(img.max(initial=0), 1))
    if np.any(img < 0) or img.max(initial=0) > maxval:
        raise ValueError("pixel values must lie in [0, maxval]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = b"P5\n%d %d\n%d\n" % (img.shape[1], img.shape[0], maxval)
    return header + np.ascontiguousarray(img.astype(dtype)).tobytes()


def read_pgm(path) -> tuple[np.ndarray, int]:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, img, maxval: Optional[int] = None) -> None:
    Path(path).write_bytes(encode_pgm(img, maxval))


def to_uint8_minmax(values) -> np.ndarray:
    """Min-max scale to ``0..255``; a constant array maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def to_uint8_unit(values) -> np.ndarray:
    """Clip to ``[0, 1]`` and quantize to ``0..255``."""
    return np.rint(np.clip(np.asarray(values, dtype=np.float64), 0, 1) * 255.0).astype(np.uint8)


def write_voxels(path, values, grid_shape, threshold: float = 0.5) -> Path:
    """Raw little-endian float64 voxels plus a JSON sidecar ``<path>.json``."""
    import json

    path = Path(path)
    arr = np.asarray(values, dtype="<f8").reshape(grid_shape)
    path.write_bytes(arr.tobytes())
    side = path.with_name(path.name + ".json")
    side.write_text(json.dumps({"grid_shape": list(grid_shape), "threshold": threshold,
                                "dtype": "float64", "byte_order": "little"}, indent=2) + "\n")
    return side
