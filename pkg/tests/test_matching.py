import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bevsim.matching import (
    Assignment,
    GroundTruth,
    MatchWeights,
    Prediction,
    cost_matrix,
    dice_score,
    focal_loss,
    hungarian,
    match_cost,
    set_loss,
)

from .helpers import brute_force_assignment_cost

H = W = 8


def make_mask(cells):
    m = np.zeros((H, W), dtype=np.uint8)
    for r, c in cells:
        m[r, c] = 1
    return m


def make_pred(class_id=0, n_classes=4, mask=None, dims=(1, 1, 1), position=(0, 0, 0),
              yaw=0.0, prob=1.0, background=False):
    probs = np.zeros(n_classes)
    target = n_classes - 1 if background else class_id
    probs[target] = prob
    rest = (1.0 - prob) / (n_classes - 1)
    probs[np.arange(n_classes) != target] = rest
    if mask is None:
        mask = make_mask([(2, 2), (2, 3)])
    return Prediction(class_probs=probs, mask_probs=mask.astype(float), dims=dims,
                      position=position, yaw=yaw)


def make_gt(class_id=0, mask=None, dims=(1, 1, 1), position=(0, 0, 0), yaw=0.0):
    if mask is None:
        mask = make_mask([(2, 2), (2, 3)])
    return GroundTruth(class_id=class_id, mask=mask, dims=dims, position=position, yaw=yaw)


class TestDice:
    def test_identical_masks(self):
        m = make_mask([(1, 1), (2, 2), (3, 3)])
        assert dice_score(m.astype(float), m) == pytest.approx(1.0, abs=1e-6)

    def test_disjoint_masks(self):
        a = make_mask([(0, 0)])
        b = make_mask([(5, 5)])
        assert dice_score(a.astype(float), b) == pytest.approx(0.0, abs=1e-6)

    def test_half_overlap(self):
        # pred covers 2 cells, gt covers 2 cells, 1 shared: 2*1/(2+2) = 0.5
        pred = make_mask([(1, 1), (1, 2)]).astype(float)
        gt = make_mask([(1, 1), (2, 1)])
        assert dice_score(pred, gt) == pytest.approx(0.5, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            dice_score(np.zeros((2, 2)), np.zeros((3, 3)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bounds_and_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.random((H, W)) < 0.4).astype(float)
        b = (rng.random((H, W)) < 0.4).astype(float)
        d = dice_score(a, b)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(dice_score(b, a), abs=1e-12)
        if a.sum():
            assert dice_score(a, a) == pytest.approx(1.0, abs=1e-6)


class TestFocal:
    def test_perfect_prediction_tiny(self):
        gt = make_mask([(1, 1), (4, 4)])
        assert focal_loss(gt.astype(float), gt) < 1e-5

    def test_gamma_zero_is_half_bce(self):
        # gamma=0, alpha=0.5 halves the standard BCE mean
        rng = np.random.default_rng(0)
        pred = rng.random((H, W))
        gt = (rng.random((H, W)) < 0.5).astype(float)
        p = np.clip(pred, 1e-7, 1 - 1e-7)
        bce = float(np.mean(-(gt * np.log(p) + (1 - gt) * np.log(1 - p))))
        assert focal_loss(pred, gt, gamma=0.0, alpha=0.5) == pytest.approx(bce / 2, rel=1e-9)

    def test_uniform_half_closed_form(self):
        # p = 0.5 everywhere: per-cell value alpha_t * 0.25 * log 2
        gt = make_mask([(r, c) for r in range(H) for c in range(W) if (r + c) % 3 == 0])
        pred = np.full((H, W), 0.5)
        alpha = 0.25
        a_t = np.where(gt > 0, alpha, 1 - alpha)
        expected = float(np.mean(a_t * 0.25 * math.log(2)))
        assert focal_loss(pred, gt, gamma=2.0, alpha=alpha) == pytest.approx(expected, rel=1e-12)


class TestMatchCost:
    def test_perfect_prediction_zero(self):
        pred = make_pred()
        gt = make_gt()
        assert match_cost(pred, gt) == pytest.approx(0.0, abs=1e-5)

    def test_class_term_isolation(self):
        # probability 0.5 on the true class: alpha_cls * 0.5 = 1.0
        pred = make_pred(prob=0.5)
        gt = make_gt()
        cost = match_cost(pred, gt)
        assert cost == pytest.approx(2.0 * 0.5, abs=1e-5)

    def test_position_term_isolation(self):
        pred = make_pred(position=(0.1, 0, 0))
        gt = make_gt()
        assert match_cost(pred, gt) == pytest.approx(0.1 * 0.1, abs=1e-6)

    def test_yaw_wrapping(self):
        pred = make_pred(yaw=math.pi - 0.05)
        gt = make_gt(yaw=-math.pi + 0.05)
        # wrapped difference is -0.1, not ~2 pi
        assert match_cost(pred, gt) == pytest.approx(0.1 * 0.1, abs=1e-6)

    def test_custom_weights(self):
        w = MatchWeights(alpha_cls=3.0)
        pred = make_pred(prob=0.5)
        assert match_cost(pred, make_gt(), w) == pytest.approx(1.5, abs=1e-5)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            MatchWeights(alpha_cls=-1.0)


class TestHungarian:
    def test_two_by_two(self):
        a = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert a.pairs == ((0, 0), (1, 1))
        assert a.unmatched_queries == ()

    def test_one_by_one(self):
        assert hungarian(np.array([[7.0]])).pairs == ((0, 0),)

    def test_three_by_three_vs_enumeration(self, rng):
        for _ in range(30):
            c = rng.integers(0, 20, size=(3, 3)).astype(float)
            a = hungarian(c)
            total = sum(c[i, j] for i, j in a.pairs)
            assert total == brute_force_assignment_cost(c)

    def test_rectangular_both_ways(self, rng):
        for shape in [(2, 5), (5, 2), (1, 4), (4, 1), (3, 7), (7, 3)]:
            c = rng.random(shape) * 10
            a = hungarian(c)
            assert len(a.pairs) == min(shape)
            total = sum(c[i, j] for i, j in a.pairs)
            assert total == pytest.approx(brute_force_assignment_cost(c), abs=1e-9)
            assert len(a.unmatched_queries) == shape[0] - len(a.pairs)

    def test_matches_scipy_on_larger_matrices(self, rng):
        from scipy.optimize import linear_sum_assignment

        for _ in range(10):
            n, m = rng.integers(8, 24, size=2)
            c = rng.random((int(n), int(m))) * 5
            a = hungarian(c)
            rows, cols = linear_sum_assignment(c)
            assert sum(c[i, j] for i, j in a.pairs) == pytest.approx(
                float(c[rows, cols].sum()), abs=1e-9
            )

    def test_constant_shift_invariance(self, rng):
        for _ in range(20):
            c = rng.integers(0, 10, size=(4, 4)).astype(float)
            base = hungarian(c)
            shifted = hungarian(c + 7.0)
            assert base.pairs == shifted.pairs

    def test_tie_break_lexicographic(self):
        a = hungarian(np.zeros((3, 3)))
        assert a.pairs == ((0, 0), (1, 1), (2, 2))
        # two optima: (0,0),(1,1) and (0,1),(1,0) both cost 2
        b = hungarian(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert b.pairs == ((0, 0), (1, 1))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            hungarian(np.array([[1.0, np.inf], [0.0, 1.0]]))

    def test_empty_inputs(self):
        a = hungarian(np.zeros((0, 3)))
        assert a.pairs == ()


class TestSetLoss:
    def test_all_perfect_zero(self):
        masks = [make_mask([(1, 1)]), make_mask([(5, 5), (5, 6)])]
        gts = [make_gt(class_id=k, mask=m) for k, m in enumerate(masks)]
        preds = [make_pred(class_id=k, mask=m) for k, m in enumerate(masks)]
        preds.append(make_pred(background=True))  # unmatched, prob 1 on background
        out = set_loss(preds, gts)
        assert out.total == pytest.approx(0.0, abs=1e-5)
        assert sorted(out.assignment.pairs) == [(0, 0), (1, 1)]
        assert out.assignment.unmatched_queries == (2,)

    def test_class_ce_isolation(self):
        # class prob e^-1 on the true class: lambda_cls * 1 = 2.0
        pred = make_pred(prob=math.exp(-1))
        out = set_loss([pred], [make_gt()])
        assert out.total == pytest.approx(2.0, abs=1e-4)
        assert out.classification == pytest.approx(2.0, abs=1e-4)

    def test_background_path(self):
        # no gts; one query with background prob e^-1: 0.1 * 2.0 * 1 = 0.2
        pred = make_pred(background=True, prob=math.exp(-1))
        out = set_loss([pred], [])
        assert out.total == pytest.approx(0.2, abs=1e-6)
        assert out.background == pytest.approx(0.2, abs=1e-6)

    def test_too_many_gts_rejected(self):
        with pytest.raises(ValueError, match="exceed"):
            set_loss([make_pred()], [make_gt(), make_gt(class_id=1)])

    def test_breakdown_sums_to_total(self, rng):
        preds = [make_pred(class_id=int(rng.integers(0, 3)), prob=float(rng.uniform(0.4, 1.0)),
                           position=rng.normal(size=3) * 0.1)
                 for _ in range(4)]
        gts = [make_gt(class_id=k % 3, mask=make_mask([(k, k), (k, k + 1)])) for k in range(3)]
        out = set_loss(preds, gts)
        total = (out.classification + out.dice + out.mask_focal + out.dims
                 + out.position + out.yaw + out.background)
        assert out.total == pytest.approx(total, rel=1e-12)
        assert len(out.assignment.pairs) == 3

    def test_matching_minimizes_eq2_cost(self, rng):
        preds = [make_pred(class_id=k, mask=make_mask([(k, k)])) for k in range(3)]
        gts = [make_gt(class_id=k, mask=make_mask([(k, k)])) for k in (2, 0, 1)]
        out = set_loss(preds, gts)
        c = cost_matrix(preds, gts)
        total = sum(c[i, j] for i, j in out.assignment.pairs)
        assert total == pytest.approx(brute_force_assignment_cost(c), abs=1e-9)
        # the permutation must pair identical masks/classes
        assert sorted(out.assignment.pairs) == [(0, 1), (1, 2), (2, 0)]


class TestValidation:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(ValueError, match="simplex"):
            Prediction(class_probs=[0.5, 0.2], mask_probs=np.zeros((2, 2)),
                       dims=(1, 1, 1), position=(0, 0, 0), yaw=0.0)

    def test_mask_range_checked(self):
        with pytest.raises(ValueError, match="mask_probs"):
            Prediction(class_probs=[0.5, 0.5], mask_probs=np.full((2, 2), 1.5),
                       dims=(1, 1, 1), position=(0, 0, 0), yaw=0.0)

    def test_gt_mask_must_be_non_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            GroundTruth(class_id=0, mask=np.zeros((4, 4)), dims=(1, 1, 1),
                        position=(0, 0, 0), yaw=0.0)
