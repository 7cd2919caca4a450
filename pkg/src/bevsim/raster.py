"""BEV instance-mask rasterization of oriented box footprints.

A footprint is the ground-plane rectangle of a 3D box annotation
(dims, position, yaw). A grid cell belongs to the footprint iff the
cell's center lies inside or on the boundary of the rectangle; the test
runs in the box frame (inverse-rotated cell centers, inclusive
comparison against the half extents). Boxes later in the input list
overwrite earlier ones, which is the documented occlusion convention;
out-of-grid portions are clipped silently.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bevgrid import GridSpec, grid_dims
from .errors import DataError, DataFormatError
from .geometry import wrap_angle


@dataclass(frozen=True, eq=False)
class FootprintBox:
    """Oriented 3D box annotation; dims are (length, width, height)."""

    dims: np.ndarray
    position: np.ndarray
    yaw: float
    class_id: int
    instance_id: int

    def __post_init__(self):
        dims = np.asarray(self.dims, dtype=float).reshape(3)
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(dims > 0.0):
            raise ValueError(f"box dims must be positive, got {dims.tolist()}")
        if self.instance_id <= 0:
            raise ValueError(f"instance_id must be positive, got {self.instance_id}")
        dims.flags.writeable = False
        pos.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def length(self) -> float:
        return float(self.dims[0])

    @property
    def width(self) -> float:
        return float(self.dims[1])

    @property
    def height(self) -> float:
        return float(self.dims[2])


def footprint_polygon(box: FootprintBox) -> np.ndarray:
    """The footprint's 4 corners (x, y), counter-clockwise from the
    (+length/2, +width/2) corner."""
    hl, hw = 0.5 * box.length, 0.5 * box.width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + box.position[:2]


@dataclass(frozen=True, eq=False)
class InstanceMaskMap:
    """H x W cell labels: 0 background, >0 instance id."""

    cells: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint32)
        if cells.shape != grid_dims(self.spec):
            raise ValueError(f"expected cells of shape {grid_dims(self.spec)}, got {cells.shape}")
        object.__setattr__(self, "cells", cells)

    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.cells)
        return ids[ids > 0]


def rasterize(boxes: list[FootprintBox], spec: GridSpec) -> InstanceMaskMap:
    """Fill each footprint with its instance id; later boxes win overlaps.

    Raises:
        DataError: two boxes share an instance id.
    """
    ids = [b.instance_id for b in boxes]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate instance ids: {dupes}")
    h, w = grid_dims(spec)
    cells = np.zeros((h, w), dtype=np.uint32)
    v = spec.cell_size
    for box in boxes:
        poly = footprint_polygon(box)
        # candidate window: cells whose centers can fall inside the polygon
        col_lo = max(0, int(math.floor((poly[:, 0].min() - spec.x_range[0]) / v - 0.5)))
        col_hi = min(w - 1, int(math.ceil((poly[:, 0].max() - spec.x_range[0]) / v - 0.5)))
        row_lo = max(0, int(math.floor((poly[:, 1].min() - spec.y_range[0]) / v - 0.5)))
        row_hi = min(h - 1, int(math.ceil((poly[:, 1].max() - spec.y_range[0]) / v - 0.5)))
        if col_lo > col_hi or row_lo > row_hi:
            continue  # footprint entirely off-grid
        cols = np.arange(col_lo, col_hi + 1)
        rows = np.arange(row_lo, row_hi + 1)
        cx = spec.x_range[0] + (cols + 0.5) * v - box.position[0]
        cy = spec.y_range[0] + (rows + 0.5) * v - box.position[1]
        gx, gy = np.meshgrid(cx, cy)
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        u = c * gx + s * gy  # cell centers in the box frame
        t = -s * gx + c * gy
        inside = (np.abs(u) <= 0.5 * box.length) & (np.abs(t) <= 0.5 * box.width)
        window = cells[row_lo : row_hi + 1, col_lo : col_hi + 1]
        window[inside] = box.instance_id
    return InstanceMaskMap(cells=cells, spec=spec)


def extract_binary(mask_map: InstanceMaskMap, instance_id: int) -> np.ndarray:
    """H x W uint8 mask: 1 where cells == instance_id."""
    if instance_id <= 0:
        raise ValueError("instance_id must be positive")
    return (mask_map.cells == instance_id).astype(np.uint8)


# --- binary + image export ---------------------------------------------------
# Mask format: header H, W as little-endian uint32, then H*W little-endian
# uint32 instance ids, row-major.


def write_mask(mask_map: InstanceMaskMap, path: str | Path) -> None:
    h, w = mask_map.cells.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", h, w))
        fh.write(mask_map.cells.astype("<u4").tobytes(order="C"))


def read_mask(path: str | Path, spec: GridSpec | None = None) -> np.ndarray:
    """Read instance ids back as a (H, W) uint32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: missing mask header")
    h, w = struct.unpack("<II", raw[:8])
    expected = 8 + 4 * h * w
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {h}x{w} mask, got {len(raw)}")
    cells = np.frombuffer(raw[8:], dtype="<u4").reshape(h, w).copy()
    if spec is not None and (h, w) != grid_dims(spec):
        raise DataFormatError(f"{path}: mask shape {(h, w)} does not match grid {grid_dims(spec)}")
    return cells


def write_mask_image(mask_map: InstanceMaskMap, path: str | Path) -> None:
    """Greyscale PGM (P5) for eyeballing masks; ids cycle through grays."""
    cells = mask_map.cells
    grey = np.where(cells == 0, 0, 64 + (cells * 47) % 192).astype(np.uint8)
    h, w = grey.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(grey.tobytes(order="C"))
