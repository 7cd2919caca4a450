"""Set-based matching between predicted queries and ground-truth objects.

The matching cost per (prediction, ground truth) pair combines a
classification term, two mask terms (dice and focal) and an L1
regression term over the concatenated box parameters
(dims, position, yaw); yaw differences are wrapped to (-pi, pi].
Assignments come from a Hungarian solve of the full cost matrix, and
the training-style loss sums per-pair terms plus a down-weighted
background cross-entropy for unmatched queries.

Everything here is a pure function over numpy arrays; no gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import angle_diff

DICE_EPS = 1e-6
FOCAL_CLAMP = 1e-7
CE_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class Prediction:
    """One query's output: class simplex, soft mask, box regression.

    ``class_probs`` has N_cls entries and must sum to 1; the last entry
    is the background / no-object class.
    """

    class_probs: np.ndarray
    mask_probs: np.ndarray
    dims: np.ndarray
    position: np.ndarray
    yaw: float

    def __post_init__(self):
        probs = np.asarray(self.class_probs, dtype=float).reshape(-1)
        if len(probs) < 2:
            raise ValueError("class_probs needs at least one foreground class plus background")
        if probs.min() < -1e-9 or abs(probs.sum() - 1.0) > 1e-6:
            raise ValueError("class_probs must form a probability simplex (tolerance 1e-6)")
        mask = np.asarray(self.mask_probs, dtype=float)
        if mask.ndim != 2:
            raise ValueError("mask_probs must be an H x W array")
        if len(mask) and (mask.min() < 0.0 or mask.max() > 1.0):
            raise ValueError("mask_probs must lie in [0, 1]")
        object.__setattr__(self, "class_probs", probs)
        object.__setattr__(self, "mask_probs", mask)
        object.__setattr__(self, "dims", np.asarray(self.dims, dtype=float).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "yaw", float(self.yaw))

    @property
    def background_prob(self) -> float:
        return float(self.class_probs[-1])

    @property
    def confidence(self) -> float:
        """Highest foreground class probability."""
        return float(self.class_probs[:-1].max())

    @property
    def predicted_class(self) -> int:
        return int(self.class_probs[:-1].argmax())


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """One annotated foreground object with its binary BEV mask."""

    class_id: int
    mask: np.ndarray
    dims: np.ndarray
    position: np.ndarray
    yaw: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        mask = (np.asarray(self.mask) != 0).astype(np.uint8)
        if mask.ndim != 2:
            raise ValueError("mask must be an H x W array")
        if not mask.any():
            raise ValueError("ground-truth mask must be non-empty")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "dims", np.asarray(self.dims, dtype=float).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "yaw", float(self.yaw))


@dataclass(frozen=True)
class MatchWeights:
    """Matching (alpha) and loss (lambda) term weights.

    Defaults are the published loss weight vector
    (cls, dice, mask, dim, pos, yaw) = (2.0, 5.0, 2.0, 0.1, 0.1, 0.1)
    with the matching alphas mirroring the corresponding lambdas, a
    background weight of 0.1 and standard focal parameters.
    """

    alpha_cls: float = 2.0
    alpha_dice: float = 5.0
    alpha_focal: float = 2.0
    alpha_reg: float = 0.1
    lambda_cls: float = 2.0
    lambda_dice: float = 5.0
    lambda_mask: float = 2.0
    lambda_dim: float = 0.1
    lambda_pos: float = 0.1
    lambda_yaw: float = 0.1
    background_weight: float = 0.1
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0.0:
                raise ValueError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class Assignment:
    """Bipartite matching result: (query, gt) pairs plus leftover queries."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_queries: tuple[int, ...]


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")


def dice_score(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Soft dice overlap (2 sum(p*g) + eps) / (sum(p) + sum(g) + eps)."""
    p = np.asarray(pred_mask, dtype=float)
    g = np.asarray(gt_mask, dtype=float)
    _check_same_shape(p, g)
    inter = float((p * g).sum())
    total = float(p.sum() + g.sum())
    return (2.0 * inter + DICE_EPS) / (total + DICE_EPS)


def focal_loss(
    pred_mask: np.ndarray, gt_mask: np.ndarray, gamma: float = 2.0, alpha: float = 0.25
) -> float:
    """Mean focal binary cross-entropy over cells.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the log.
    """
    p = np.asarray(pred_mask, dtype=float)
    g = np.asarray(gt_mask, dtype=float)
    _check_same_shape(p, g)
    p = np.clip(p, FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    p_t = np.where(g > 0.5, p, 1.0 - p)
    a_t = np.where(g > 0.5, alpha, 1.0 - alpha)
    return float(np.mean(-a_t * (1.0 - p_t) ** gamma * np.log(p_t)))


def regression_l1(pred: Prediction, gt: GroundTruth) -> float:
    """L1 over concatenated (dims, position, wrapped yaw) — 7 values."""
    return float(
        np.abs(pred.dims - gt.dims).sum()
        + np.abs(pred.position - gt.position).sum()
        + abs(angle_diff(pred.yaw, gt.yaw))
    )


def match_cost(pred: Prediction, gt: GroundTruth, weights: MatchWeights = MatchWeights()) -> float:
    """Scalar matching cost for one (prediction, ground truth) pair."""
    p_cls = float(pred.class_probs[gt.class_id])
    return (
        weights.alpha_cls * (1.0 - p_cls)
        + weights.alpha_dice * (1.0 - dice_score(pred.mask_probs, gt.mask))
        + weights.alpha_focal
        * focal_loss(pred.mask_probs, gt.mask, weights.focal_gamma, weights.focal_alpha)
        + weights.alpha_reg * regression_l1(pred, gt)
    )


def cost_matrix(
    preds: list[Prediction], gts: list[GroundTruth], weights: MatchWeights = MatchWeights()
) -> np.ndarray:
    out = np.empty((len(preds), len(gts)))
    for i, pred in enumerate(preds):
        for j, gt in enumerate(gts):
            out[i, j] = match_cost(pred, gt, weights)
    return out


# --- Hungarian assignment ----------------------------------------------------


def _jv_solve(cost: np.ndarray) -> list[tuple[int, int]]:
    """Shortest-augmenting-path assignment; requires rows <= cols."""
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match_col = np.zeros(m + 1, dtype=np.int64)  # 1-based row matched to col, 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta = np.inf
            j1 = 0
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = ~used[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            free = ~used[1:]
            if free.any():
                idx = np.argmin(np.where(free, minv[1:], np.inf))
                delta = minv[1 + idx]
                j1 = 1 + idx
            u[match_col[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    return [(int(match_col[j]) - 1, j - 1) for j in range(1, m + 1) if match_col[j] != 0]


def _solve_pairs(cost: np.ndarray) -> list[tuple[int, int]]:
    if cost.shape[0] <= cost.shape[1]:
        return sorted(_jv_solve(cost))
    return sorted((i, j) for j, i in _jv_solve(cost.T))


def _pairs_total(cost: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    if not pairs:
        return 0.0
    rows, cols = zip(*pairs)
    return float(np.sum(cost[list(rows), list(cols)]))


def hungarian(cost: np.ndarray) -> Assignment:
    """Minimum-cost assignment of min(N, M) pairs.

    Among all optimal assignments the returned pair list is the
    lexicographically smallest sequence of (query, gt) pairs, so ties
    resolve toward low query indices matched with low gt indices.

    Raises:
        ValueError: the matrix contains non-finite entries.
    """
    cost = np.asarray(np.atleast_2d(cost), dtype=float)
    if cost.size and not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    n, m = cost.shape
    k = min(n, m)
    if k == 0:
        return Assignment(pairs=(), unmatched_queries=tuple(range(n)))

    base = _solve_pairs(cost)
    best_total = _pairs_total(cost, base)
    tol = 1e-9 * (1.0 + abs(best_total))

    pairs: list[tuple[int, int]] = []
    fixed_cost = 0.0
    free_cols = list(range(m))
    for i in range(n):
        need = k - len(pairs)
        if need == 0:
            break
        rows_after = n - i - 1
        sub_rows = np.arange(i + 1, n)
        chosen = None
        for j in free_cols:
            if need == 1:
                rest_cost = 0.0
            else:
                cols_wo_j = [c for c in free_cols if c != j]
                sub = cost[np.ix_(sub_rows, cols_wo_j)]
                lb = float(np.sort(sub.min(axis=1))[: need - 1].sum())
                if fixed_cost + cost[i, j] + lb > best_total + tol:
                    continue
                rest_cost = _pairs_total(sub, _solve_pairs(sub))
            if fixed_cost + cost[i, j] + rest_cost <= best_total + tol:
                chosen = j
                break
        if chosen is None and rows_after >= need:
            # leaving query i unmatched must still reach the optimum
            sub = cost[np.ix_(sub_rows, free_cols)]
            rest_cost = _pairs_total(sub, _solve_pairs(sub))
            if fixed_cost + rest_cost <= best_total + tol:
                continue
        if chosen is None:
            # numerical fallback: keep the base solver's partner for i
            fallback = next((j for q, j in base if q == i and j in free_cols), None)
            chosen = fallback if fallback is not None else min(free_cols, key=lambda j: cost[i, j])
        pairs.append((i, chosen))
        fixed_cost += float(cost[i, chosen])
        free_cols.remove(chosen)

    matched_queries = {i for i, _ in pairs}
    unmatched = tuple(i for i in range(n) if i not in matched_queries)
    return Assignment(pairs=tuple(pairs), unmatched_queries=unmatched)


# --- set loss -----------------------------------------------------------------


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted loss terms; ``total`` is their sum."""

    total: float
    classification: float
    dice: float
    mask_focal: float
    dims: float
    position: float
    yaw: float
    background: float
    assignment: Assignment = field(compare=False)


def set_loss(
    preds: list[Prediction],
    gts: list[GroundTruth],
    weights: MatchWeights = MatchWeights(),
) -> LossBreakdown:
    """Hungarian-matched loss over one frame's prediction set.

    Matched pairs contribute weighted cross-entropy, dice, focal and L1
    regression terms; unmatched queries contribute
    ``background_weight * lambda_cls * CE(background)``.

    Raises:
        ValueError: more ground-truth objects than queries.
    """
    if len(gts) > len(preds):
        raise ValueError(f"{len(gts)} ground-truth objects exceed {len(preds)} queries")
    if gts:
        assignment = hungarian(cost_matrix(preds, gts, weights))
    else:
        assignment = Assignment(pairs=(), unmatched_queries=tuple(range(len(preds))))

    cls_term = dice_term = focal_term = dim_term = pos_term = yaw_term = 0.0
    for qi, gi in assignment.pairs:
        pred, gt = preds[qi], gts[gi]
        p_cls = max(float(pred.class_probs[gt.class_id]), CE_CLAMP)
        cls_term += weights.lambda_cls * -math.log(p_cls)
        dice_term += weights.lambda_dice * (1.0 - dice_score(pred.mask_probs, gt.mask))
        focal_term += weights.lambda_mask * focal_loss(
            pred.mask_probs, gt.mask, weights.focal_gamma, weights.focal_alpha
        )
        dim_term += weights.lambda_dim * float(np.abs(pred.dims - gt.dims).sum())
        pos_term += weights.lambda_pos * float(np.abs(pred.position - gt.position).sum())
        yaw_term += weights.lambda_yaw * abs(angle_diff(pred.yaw, gt.yaw))

    bg_term = 0.0
    for qi in assignment.unmatched_queries:
        p_bg = max(preds[qi].background_prob, CE_CLAMP)
        bg_term += weights.background_weight * weights.lambda_cls * -math.log(p_bg)

    total = cls_term + dice_term + focal_term + dim_term + pos_term + yaw_term + bg_term
    return LossBreakdown(
        total=total,
        classification=cls_term,
        dice=dice_term,
        mask_focal=focal_term,
        dims=dim_term,
        position=pos_term,
        yaw=yaw_term,
        background=bg_term,
        assignment=assignment,
    )
