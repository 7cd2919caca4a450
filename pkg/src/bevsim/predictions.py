"""Per-frame prediction and ground-truth files for the evaluator.

Prediction file (JSON, one per frame)::

    {"frame_id": "000001",
     "predictions": [
        {"class_probs": [...],          # simplex, last entry = background
         "dims": [l, w, h], "position": [x, y, z], "yaw": r,
         "mask": <mask reference>}, ...]}

Ground-truth file (JSON, one per frame, written by the rasterizer)::

    {"frame_id": "000001", "mask_file": "000001.mask",
     "instances": [
        {"instance_id": k, "class_id": c,
         "dims": [l, w, h], "position": [x, y, z], "yaw": r}, ...]}

A mask reference is either a run-length encoding
``{"rle": [...], "size": [H, W]}`` — row-major, alternating 0-run /
1-run lengths, starting with a 0-run (possibly of length zero) — or a
pointer into an instance-mask file,
``{"file": "000001.mask", "instance_id": k}``, resolved relative to the
JSON file's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .matching import GroundTruth, Prediction
from .raster import read_mask

# --- run-length encoding --------------------------------------------------------


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major alternating run lengths, starting with a 0-run."""
    flat = (np.asarray(mask).reshape(-1) != 0).astype(np.int8)
    if len(flat) == 0:
        return []
    change = np.nonzero(np.diff(flat))[0] + 1
    starts = np.concatenate(([0], change, [len(flat)]))
    runs = np.diff(starts).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`rle_encode`."""
    total = int(shape[0] * shape[1])
    if sum(runs) != total:
        raise DataFormatError(f"RLE runs sum to {sum(runs)}, expected {total}")
    flat = np.zeros(total, dtype=np.uint8)
    pos = 0
    value = 0
    for run in runs:
        if run < 0:
            raise DataFormatError("RLE runs must be non-negative")
        if value:
            flat[pos : pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(shape)


# --- mask references --------------------------------------------------------------


def _encode_mask_ref(mask: np.ndarray) -> dict:
    return {"rle": rle_encode(mask), "size": [int(mask.shape[0]), int(mask.shape[1])]}


def _decode_mask_ref(ref: dict, base_dir: Path) -> np.ndarray:
    if "rle" in ref:
        h, w = ref["size"]
        return rle_decode(ref["rle"], (int(h), int(w)))
    if "file" in ref:
        cells = read_mask(base_dir / ref["file"])
        return (cells == int(ref["instance_id"])).astype(np.uint8)
    raise DataFormatError(f"mask reference needs 'rle' or 'file', got keys {sorted(ref)}")


# --- prediction files ---------------------------------------------------------------


def write_predictions(
    preds: list[Prediction],
    path: str | Path,
    frame_id: str,
    mask_refs: list[dict] | None = None,
) -> None:
    """Write one frame's predictions; masks are RLE-embedded unless
    explicit ``mask_refs`` are given (one per prediction)."""
    if mask_refs is not None and len(mask_refs) != len(preds):
        raise ValueError("mask_refs must match predictions one-to-one")
    items = []
    for k, pred in enumerate(preds):
        ref = mask_refs[k] if mask_refs is not None else _encode_mask_ref(pred.mask_probs >= 0.5)
        items.append(
            {
                "class_probs": pred.class_probs.tolist(),
                "dims": pred.dims.tolist(),
                "position": pred.position.tolist(),
                "yaw": pred.yaw,
                "mask": ref,
            }
        )
    Path(path).write_text(json.dumps({"frame_id": frame_id, "predictions": items}, indent=2) + "\n")


def read_predictions(path: str | Path, max_queries: int | None = None) -> list[Prediction]:
    """Read one frame's predictions, resolving mask references.

    Raises:
        DataFormatError: malformed file or more than ``max_queries`` entries.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        items = data["predictions"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if max_queries is not None and len(items) > max_queries:
        raise DataFormatError(f"{path}: {len(items)} predictions exceed the cap of {max_queries}")
    preds = []
    for k, item in enumerate(items):
        try:
            mask = _decode_mask_ref(item["mask"], path.parent)
            preds.append(
                Prediction(
                    class_probs=item["class_probs"],
                    mask_probs=mask.astype(np.float64),
                    dims=item["dims"],
                    position=item["position"],
                    yaw=item["yaw"],
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DataFormatError(f"{path}: prediction {k}: {exc}") from None
    return preds


# --- ground-truth files ---------------------------------------------------------------


def write_ground_truth(
    path: str | Path,
    frame_id: str,
    mask_file: str,
    instances: list[dict],
) -> None:
    doc = {"frame_id": frame_id, "mask_file": mask_file, "instances": instances}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_ground_truth(path: str | Path) -> list[GroundTruth]:
    """Read one frame's ground truth; masks come from the referenced
    instance-mask file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        cells = read_mask(path.parent / data["mask_file"])
        out = []
        for inst in data["instances"]:
            mask = (cells == int(inst["instance_id"])).astype(np.uint8)
            out.append(
                GroundTruth(
                    class_id=int(inst["class_id"]),
                    mask=mask,
                    dims=inst["dims"],
                    position=inst["position"],
                    yaw=float(inst["yaw"]),
                )
            )
        return out
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def ground_truth_to_predictions(path: str | Path, n_classes: int) -> list[Prediction]:
    """Turn a ground-truth file into perfect predictions (probability 1
    on the true class, the instance's own mask)."""
    path = Path(path)
    data = json.loads(path.read_text())
    cells = read_mask(path.parent / data["mask_file"])
    preds = []
    for inst in data["instances"]:
        probs = np.zeros(n_classes)
        probs[int(inst["class_id"])] = 1.0
        mask = (cells == int(inst["instance_id"])).astype(np.float64)
        preds.append(
            Prediction(
                class_probs=probs,
                mask_probs=mask,
                dims=inst["dims"],
                position=inst["position"],
                yaw=float(inst["yaw"]),
            )
        )
    return preds


def gt_mask_reference(mask_file: str, instance_id: int) -> dict:
    """Mask reference pointing at an instance in a mask file."""
    return {"file": mask_file, "instance_id": int(instance_id)}


__all__ = [
    "rle_encode",
    "rle_decode",
    "write_predictions",
    "read_predictions",
    "write_ground_truth",
    "read_ground_truth",
    "ground_truth_to_predictions",
    "gt_mask_reference",
]
