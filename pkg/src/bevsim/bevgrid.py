"""BEV discretization: range filter, cluster division, feature scatter.

Points are binned into a 2D grid of square cells of side ``cell_size``
over the configured x/y ranges (z participates in filtering only).
Non-empty cells become clusters; a fixed, pluggable reducer set turns
each cluster into an F-vector which is scattered onto a dense
F x H x W map. Empty cells hold exactly 0.

All intervals are half-open [min, max) so every in-range point maps to
exactly one cell, and clusters are canonically ordered by (row, col) so
outputs do not depend on input point order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataFormatError
from .raycast import PointCloud

_DIM_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Spatial ranges (min, max) in meters and the square cell size."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    cell_size: float

    def __post_init__(self):
        for name, (lo, hi) in (("x", self.x_range), ("y", self.y_range), ("z", self.z_range)):
            if not hi > lo:
                raise ConfigError(f"{name}_range must satisfy max > min, got ({lo}, {hi})")
        if not self.cell_size > 0.0:
            raise ConfigError("cell_size must be positive")
        grid_dims(self)  # validates integral H, W

    @property
    def shape(self) -> tuple[int, int]:
        return grid_dims(self)

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) centers of the given cells."""
        v = self.cell_size
        cx = self.x_range[0] + (np.asarray(cols) + 0.5) * v
        cy = self.y_range[0] + (np.asarray(rows) + 0.5) * v
        return cx, cy


def grid_dims(spec: GridSpec) -> tuple[int, int]:
    """(H, W) = (y extent / cell, x extent / cell); both must be integral.

    Rows index y, columns index x. Ratios farther than 1e-9 from an
    integer are a configuration error.
    """
    dims = []
    for lo, hi in (spec.y_range, spec.x_range):
        ratio = (hi - lo) / spec.cell_size
        n = round(ratio)
        if abs(ratio - n) > _DIM_TOL or n < 1:
            raise ConfigError(
                f"range ({lo}, {hi}) is not an integral number of {spec.cell_size} m cells"
            )
        dims.append(int(n))
    return dims[0], dims[1]


def filter_in_range(points: PointCloud, spec: GridSpec) -> PointCloud:
    """Keep points with min <= coord < max on all three axes, order preserved."""
    p = points.points
    keep = (
        (p[:, 0] >= spec.x_range[0])
        & (p[:, 0] < spec.x_range[1])
        & (p[:, 1] >= spec.y_range[0])
        & (p[:, 1] < spec.y_range[1])
        & (p[:, 2] >= spec.z_range[0])
        & (p[:, 2] < spec.z_range[1])
    )
    return PointCloud(points=p[keep])


def cell_indices(points: np.ndarray, spec: GridSpec) -> np.ndarray:
    """(row, col) = floor((y - y_min) / v), floor((x - x_min) / v) per point."""
    v = spec.cell_size
    rows = np.floor((points[:, 1] - spec.y_range[0]) / v).astype(np.int64)
    cols = np.floor((points[:, 0] - spec.x_range[0]) / v).astype(np.int64)
    return np.column_stack((rows, cols))


@dataclass(frozen=True, eq=False)
class ClusterSet:
    """Non-empty cells with their member points.

    ``points`` holds all input points regrouped so cluster k owns the
    slice [offsets[k], offsets[k+1]); clusters are sorted by (row, col).
    """

    coords: np.ndarray  # (K, 2) int64, unique (row, col)
    counts: np.ndarray  # (K,) int64, all >= 1
    offsets: np.ndarray  # (K + 1,) int64
    points: np.ndarray  # (N, 4) regrouped points
    spec: GridSpec

    def __len__(self) -> int:
        return len(self.coords)

    def cluster_points(self, k: int) -> np.ndarray:
        return self.points[self.offsets[k] : self.offsets[k + 1]]


def cluster_divide(points: PointCloud, spec: GridSpec) -> ClusterSet:
    """Group range-filtered points by BEV cell.

    Every input point lands in exactly one cluster and sum(counts) == N.
    Points must already lie inside the grid ranges (see
    :func:`filter_in_range`).
    """
    p = points.points
    h, w = grid_dims(spec)
    if len(p) == 0:
        return ClusterSet(
            coords=np.empty((0, 2), dtype=np.int64),
            counts=np.empty(0, dtype=np.int64),
            offsets=np.zeros(1, dtype=np.int64),
            points=p.reshape(0, 4),
            spec=spec,
        )
    rc = cell_indices(p, spec)
    # float-edge guard: in-range points can round to H/W at the open boundary
    rc[:, 0] = np.clip(rc[:, 0], 0, h - 1)
    rc[:, 1] = np.clip(rc[:, 1], 0, w - 1)
    keys = rc[:, 0] * w + rc[:, 1]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq, first, counts = np.unique(sorted_keys, return_index=True, return_counts=True)
    coords = np.column_stack((uniq // w, uniq % w))
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return ClusterSet(
        coords=coords,
        counts=counts.astype(np.int64),
        offsets=offsets.astype(np.int64),
        points=p[order],
        spec=spec,
    )


# A reducer maps (points, offsets, counts, cx, cy) to one value per cluster;
# points are the regrouped (N, 4) records, (cx, cy) the cell centers.
Reducer = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _seg_mean(values: np.ndarray, offsets: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(values, offsets[:-1]) / counts


def _r_log_count(p, off, cnt, cx, cy):
    return np.log1p(cnt.astype(float))


def _r_mean_dx(p, off, cnt, cx, cy):
    return _seg_mean(p[:, 0], off, cnt) - cx


def _r_mean_dy(p, off, cnt, cx, cy):
    return _seg_mean(p[:, 1], off, cnt) - cy


def _r_mean_z(p, off, cnt, cx, cy):
    return _seg_mean(p[:, 2], off, cnt)


def _r_max_z(p, off, cnt, cx, cy):
    return np.maximum.reduceat(p[:, 2], off[:-1])


def _r_min_z(p, off, cnt, cx, cy):
    return np.minimum.reduceat(p[:, 2], off[:-1])


def _r_mean_range(p, off, cnt, cx, cy):
    return _seg_mean(np.hypot(p[:, 0], p[:, 1]), off, cnt)


#: Default cluster statistics (F = 7): log(1 + count), mean x/y offset from
#: the cell center, mean/max/min z, and mean horizontal distance from the
#: sensor at the cloud origin.
DEFAULT_REDUCERS: tuple[Reducer, ...] = (
    _r_log_count,
    _r_mean_dx,
    _r_mean_dy,
    _r_mean_z,
    _r_max_z,
    _r_min_z,
    _r_mean_range,
)


def reduce_features(
    clusters: ClusterSet, reducers: Sequence[Reducer] = DEFAULT_REDUCERS
) -> np.ndarray:
    """Per-cluster feature matrix of shape (K, F), float32."""
    k = len(clusters)
    if k == 0:
        return np.zeros((0, len(reducers)), dtype=np.float32)
    cx, cy = clusters.spec.cell_centers(clusters.coords[:, 0], clusters.coords[:, 1])
    cols = [
        red(clusters.points, clusters.offsets, clusters.counts, cx, cy) for red in reducers
    ]
    return np.column_stack(cols).astype(np.float32)


@dataclass(frozen=True, eq=False)
class BevFeatureMap:
    """Dense F x H x W float32 map; cells without a cluster are exactly 0.

    ``occupancy`` records which cells came from a cluster, which matters
    for normalization (a cluster's features may legitimately be 0).
    """

    values: np.ndarray
    spec: GridSpec
    occupancy: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        occ = np.asarray(self.occupancy, dtype=bool)
        h, w = grid_dims(self.spec)
        if vals.ndim != 3 or vals.shape[1:] != (h, w):
            raise ValueError(f"expected values of shape (F, {h}, {w}), got {vals.shape}")
        if occ.shape != (h, w):
            raise ValueError(f"expected occupancy of shape ({h}, {w}), got {occ.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "occupancy", occ)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


def bev_scatter(features: np.ndarray, coords: np.ndarray, spec: GridSpec) -> BevFeatureMap:
    """Place one feature vector per cluster cell; everything else stays 0.

    Pure placement, no accumulation: the sum over the map equals the sum
    over the feature matrix. Duplicate coordinates violate the
    ClusterSet invariant and raise.
    """
    h, w = grid_dims(spec)
    features = np.asarray(features, dtype=np.float32)
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    if len(features) != len(coords):
        raise ValueError("features and coords length mismatch")
    if len(coords):
        if coords[:, 0].min() < 0 or coords[:, 0].max() >= h or coords[:, 1].min() < 0 or coords[:, 1].max() >= w:
            raise ValueError("cluster coordinates outside the grid")
        keys = coords[:, 0] * w + coords[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise ValueError("duplicate cluster coordinates")
    f = features.shape[1] if features.ndim == 2 else 0
    values = np.zeros((f, h, w), dtype=np.float32)
    occupancy = np.zeros((h, w), dtype=bool)
    if len(coords):
        values[:, coords[:, 0], coords[:, 1]] = features.T
        occupancy[coords[:, 0], coords[:, 1]] = True
    return BevFeatureMap(values=values, spec=spec, occupancy=occupancy)


def rasterize_cloud(points: PointCloud, spec: GridSpec,
                    reducers: Sequence[Reducer] = DEFAULT_REDUCERS) -> BevFeatureMap:
    """filter -> cluster -> reduce -> scatter in one call."""
    clusters = cluster_divide(filter_in_range(points, spec), spec)
    return bev_scatter(reduce_features(clusters, reducers), clusters.coords, spec)


def normalize_map(fmap: BevFeatureMap) -> BevFeatureMap:
    """Standardize each channel over occupied cells (population statistics).

    Occupied cells get zero mean and unit variance per channel; channels
    with variance below 1e-12 are only mean-shifted. Empty cells stay 0.
    """
    occ = fmap.occupancy
    if not occ.any():
        return fmap
    values = fmap.values.astype(np.float64).copy()
    cells = values[:, occ]  # (F, K)
    mean = cells.mean(axis=1)
    var = cells.var(axis=1)
    shifted = cells - mean[:, None]
    scale = np.where(var < 1e-12, 1.0, np.sqrt(var))
    values[:, occ] = shifted / scale[:, None]
    return BevFeatureMap(values=values.astype(np.float32), spec=fmap.spec, occupancy=occ)


# --- binary export -----------------------------------------------------------
# Header: F, H, W as little-endian uint32; payload: F*H*W little-endian
# float32, channel-major (all of channel 0 row-major, then channel 1, ...).


def write_feature_map(fmap: BevFeatureMap, path: str | Path) -> None:
    f, h, w = fmap.values.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", f, h, w))
        fh.write(fmap.values.astype("<f4").tobytes(order="C"))


def read_feature_map(path: str | Path) -> np.ndarray:
    """Read the exported tensor back as a float32 (F, H, W) array.

    Occupancy is not part of the format; with the default reducers,
    occupied cells are recoverable as ``values[0] > 0``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise DataFormatError(f"{path}: missing feature-map header")
    f, h, w = struct.unpack("<III", raw[:12])
    expected = 12 + 4 * f * h * w
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes for a {f}x{h}x{w} map, got {len(raw)}"
        )
    return np.frombuffer(raw[12:], dtype="<f4").reshape(f, h, w).copy()
