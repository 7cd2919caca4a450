"""Dataset persistence in a KITTI-inspired layout.

Point clouds are raw little-endian float32 ``.bin`` files, N x 4
point-major (x, y, z, intensity), no header. Labels are one object per
line::

    type truncation occlusion h w l x y z yaw

with floats rendered to 6 decimal places, occlusion an integer, and the
ten fields space-separated (extra trailing fields are tolerated on
read). ``DontCare`` lines are skipped by the parser. Directory layout::

    {root}/{split}/points/{frame_id}.bin
    {root}/{split}/labels/{frame_id}.txt
    {root}/splits.json

with six-digit zero-padded frame ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DataFormatError
from .geometry import wrap_angle
from .raster import FootprintBox
from .raycast import PointCloud
from .taxonomy import DONT_CARE, Taxonomy

SPLIT_NAMES = ("train", "val", "test")
_POINT_DTYPE = np.dtype("<f4")
_BYTES_PER_POINT = 16


def frame_name(index: int) -> str:
    return f"{index:06d}"


# --- point clouds -------------------------------------------------------------


def write_cloud(cloud: PointCloud, path: str | Path) -> None:
    data = np.ascontiguousarray(cloud.points, dtype=_POINT_DTYPE)
    with open(path, "wb") as fh:
        fh.write(data.tobytes(order="C"))


def read_cloud(path: str | Path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % _BYTES_PER_POINT != 0:
        raise DataFormatError(
            f"{path}: byte length {len(raw)} is not a multiple of {_BYTES_PER_POINT}"
        )
    points = np.frombuffer(raw, dtype=_POINT_DTYPE).reshape(-1, 4)
    return PointCloud(points=points.astype(np.float64))


# --- labels --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabelEntry:
    """One annotated object; dims are (h, w, l) as in the label file."""

    type: str
    truncation: float
    occlusion: int
    dims_hwl: np.ndarray
    location: np.ndarray
    yaw: float

    def __post_init__(self):
        dims = np.asarray(self.dims_hwl, dtype=float).reshape(3)
        loc = np.asarray(self.location, dtype=float).reshape(3)
        if self.type != DONT_CARE and not np.all(dims > 0.0):
            raise ValueError(f"label dims must be positive, got {dims.tolist()}")
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation must be in [0, 1], got {self.truncation}")
        if self.occlusion not in (0, 1, 2, 3):
            raise ValueError(f"occlusion must be one of 0..3, got {self.occlusion}")
        object.__setattr__(self, "dims_hwl", dims)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "yaw", float(self.yaw))


def write_labels(entries: list[LabelEntry], path: str | Path) -> None:
    lines = []
    for e in entries:
        h, w, l = e.dims_hwl
        x, y, z = e.location
        lines.append(
            f"{e.type} {e.truncation:.6f} {e.occlusion:d} "
            f"{h:.6f} {w:.6f} {l:.6f} {x:.6f} {y:.6f} {z:.6f} {e.yaw:.6f}"
        )
    Path(path).write_text("".join(line + "\n" for line in lines))


def parse_labels(path: str | Path) -> list[LabelEntry]:
    """Parse a label file, skipping DontCare entries.

    Raises:
        DataFormatError: a malformed line, reported with its line number.
    """
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 10:
            raise DataFormatError(f"{path}:{lineno}: expected 10 fields, got {len(fields)}")
        name = fields[0]
        try:
            truncation = float(fields[1])
            occlusion = int(float(fields[2]))
            numbers = [float(v) for v in fields[3:10]]
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if name == DONT_CARE:
            continue
        try:
            entries.append(
                LabelEntry(
                    type=name,
                    truncation=truncation,
                    occlusion=occlusion,
                    dims_hwl=numbers[0:3],
                    location=numbers[3:6],
                    yaw=numbers[6],
                )
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return entries


def labels_to_footprints(
    entries: list[LabelEntry], taxonomy: Taxonomy, id_offset: int = 0
) -> list[FootprintBox]:
    """Convert labels to footprint boxes with sequential instance ids.

    The label's (h, w, l) becomes dims (l, w, h); ids are assigned in
    file order starting at ``id_offset + 1``.

    Raises:
        DataError: a label's class name is not in the taxonomy.
    """
    boxes = []
    next_id = id_offset + 1
    for e in entries:
        if e.type == DONT_CARE:
            continue
        h, w, l = e.dims_hwl
        boxes.append(
            FootprintBox(
                dims=(l, w, h),
                position=e.location,
                yaw=e.yaw,
                class_id=taxonomy.class_id(e.type),
                instance_id=next_id,
            )
        )
        next_id += 1
    return boxes


def footprint_to_label(
    box: FootprintBox,
    taxonomy: Taxonomy,
    truncation: float = 0.0,
    occlusion: int = 0,
) -> LabelEntry:
    """Inverse of :func:`labels_to_footprints` for one box."""
    l, w, h = box.dims
    return LabelEntry(
        type=taxonomy.class_name(box.class_id),
        truncation=truncation,
        occlusion=occlusion,
        dims_hwl=(h, w, l),
        location=box.position,
        yaw=wrap_angle(box.yaw),
    )


# --- dataset layout --------------------------------------------------------------


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    cloud_path: Path
    label_path: Path


def frame_paths(root: str | Path, split: str, frame_id: str) -> FrameRecord:
    root = Path(root)
    return FrameRecord(
        frame_id=frame_id,
        cloud_path=root / split / "points" / f"{frame_id}.bin",
        label_path=root / split / "labels" / f"{frame_id}.txt",
    )


def list_frames(root: str | Path, split: str) -> list[FrameRecord]:
    """Frames of one split, sorted by frame id; both files must exist."""
    root = Path(root)
    points_dir = root / split / "points"
    if not points_dir.is_dir():
        raise DataError(f"missing points directory {points_dir}")
    records = []
    for cloud_path in sorted(points_dir.glob("*.bin")):
        rec = frame_paths(root, split, cloud_path.stem)
        if not rec.label_path.exists():
            raise DataError(f"frame {rec.frame_id}: missing label file {rec.label_path}")
        records.append(rec)
    return records


def write_splits(root: str | Path, splits: dict[str, list[str]]) -> None:
    Path(root, "splits.json").write_text(json.dumps(splits, indent=2) + "\n")


def read_splits(root: str | Path) -> dict[str, list[str]]:
    path = Path(root, "splits.json")
    if not path.exists():
        raise DataError(f"missing split manifest {path}")
    return json.loads(path.read_text())


def split_dataset(
    frame_ids: list[str], ratios: tuple[float, ...], seed: int
) -> tuple[list[str], ...]:
    """Seeded shuffle then contiguous partition by cumulative ratios.

    The returned lists are disjoint and cover the input exactly.

    Raises:
        DataError: ratios invalid or fewer frames than splits.
    """
    ratios = tuple(float(r) for r in ratios)
    if any(r <= 0.0 for r in ratios):
        raise DataError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {sum(ratios)}")
    if len(frame_ids) < len(ratios):
        raise DataError(f"{len(frame_ids)} frames cannot fill {len(ratios)} splits")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(frame_ids))
    shuffled = [frame_ids[k] for k in order]
    n = len(shuffled)
    bounds = [0] + [round(sum(ratios[: k + 1]) * n) for k in range(len(ratios))]
    bounds[-1] = n
    return tuple(shuffled[bounds[k] : bounds[k + 1]] for k in range(len(ratios)))
