import math

import numpy as np
import pytest

from conftest import random_box
from lidarssl.errors import ShapeError, ValidationError
from lidarssl.geometry import Box3D, Rect, bev_iou
from lidarssl.patches import NormalizerMode, NormalizerSpec
from lidarssl.rpn_loss import (SMOOTH_L1_BETA, AnchorAssignment, DetectorOutput, assign_anchors,
                               decode_box, encode_box, make_anchor_grid, rpn_loss)

K = 3
FC = NormalizerSpec(NormalizerMode.FOREGROUND_COUNT)
PN = NormalizerSpec(NormalizerMode.PATCH_NORMALIZER, 3.0)
AVG = NormalizerSpec(NormalizerMode.AVG_NEGATIVES)


def random_instance(rng, n=16, n_fg=2, n_ignored=2):
    cls = np.zeros(n, dtype=np.int64)
    idx = rng.permutation(n)
    cls[idx[:n_fg]] = rng.integers(1, K + 1, n_fg)
    cls[idx[n_fg:n_fg + n_ignored]] = -1
    fg = cls > 0
    reg_t = np.where(fg[:, None], rng.normal(0, 0.3, (n, 7)), 0.0)
    asg = AnchorAssignment(cls, reg_t, fg, np.where(fg, 0, -1))
    out = DetectorOutput(rng.normal(0, 1.5, (n, K)), reg_t + rng.normal(0, 0.3, (n, 7)))
    return asg, out


def naive_loss(logits, reg, asg, cls_div, gamma=2.0, alpha=0.25, beta=1 / 9):
    """Scalar-by-scalar loss written straight from the definitions."""
    total_cls = 0.0
    for i in range(logits.shape[0]):
        if asg.cls_target[i] < 0:
            continue
        for c in range(logits.shape[1]):
            p = 1.0 / (1.0 + math.exp(-logits[i, c]))
            if asg.cls_target[i] == c + 1:
                total_cls += -alpha * (1 - p) ** gamma * math.log(p)
            else:
                total_cls += -(1 - alpha) * p ** gamma * math.log(1 - p)
    total_reg = 0.0
    for i in np.flatnonzero(asg.fg_mask):
        for d in reg[i] - asg.reg_target[i]:
            total_reg += 0.5 * d * d / beta if abs(d) < beta else abs(d) - 0.5 * beta
    return total_cls / cls_div + total_reg / max(asg.num_fg, 1)


def near_kink(out, asg, h):
    d = np.abs(out.reg_pred - asg.reg_target)[asg.fg_mask]
    return bool((np.abs(d - SMOOTH_L1_BETA) < 10 * h).any() or (d < 10 * h).any())


def max_rel_error(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


class TestLossValues:
    def test_matches_naive_formula(self, rng):
        for norm, div in ((FC, None), (PN, 30.0), (AVG, None)):
            asg, out = random_instance(rng)
            res = rpn_loss(out, asg, norm, scene_gt_total=10)
            if div is None:
                div = max(asg.num_fg, 1) if norm is FC else max(asg.num_bg, 1)
            assert res.cls_normalizer == div
            assert res.loss == pytest.approx(naive_loss(out.cls_logits, out.reg_pred, asg, div), rel=1e-12)

    def test_patch_normalizer_divisor_ignores_local_fg(self, rng):
        for n_fg in (0, 1, 5):
            asg, out = random_instance(rng, n_fg=n_fg)
            res = rpn_loss(out, asg, PN, scene_gt_total=10)
            assert res.cls_normalizer == 30.0
            assert res.reg_normalizer == max(n_fg, 1)

    def test_divisor_shared_by_all_patches(self, rng):
        divisors = {rpn_loss(o, a, PN, 7).cls_normalizer
                    for a, o in (random_instance(rng, n_fg=k) for k in range(5))}
        assert divisors == {21.0}

    def test_scaling_identity(self, rng):
        # one patch spanning the scene: only the classification divisor changes
        for _ in range(20):
            asg, out = random_instance(rng, n_fg=int(rng.integers(1, 6)))
            g_total = int(rng.integers(1, 8))
            fc = rpn_loss(out, asg, FC, g_total)
            pn = rpn_loss(out, asg, PN, g_total)
            assert pn.cls_loss == pytest.approx(fc.cls_loss * asg.num_fg / (3.0 * g_total), rel=1e-12)
            assert pn.reg_loss == fc.reg_loss

    def test_empty_foreground_and_confident_negatives(self):
        n = 10
        asg = AnchorAssignment(np.zeros(n, dtype=np.int64), np.zeros((n, 7)), np.zeros(n, bool),
                               np.full(n, -1))
        res = rpn_loss(DetectorOutput(np.full((n, K), -30.0), np.ones((n, 7))), asg, FC)
        assert res.cls_loss < 1e-12
        assert res.reg_loss == 0.0

    def test_perfect_prediction(self, rng):
        asg, _ = random_instance(rng, n_fg=4, n_ignored=0)
        logits = np.full((16, K), -40.0)
        for i in np.flatnonzero(asg.fg_mask):
            logits[i, asg.cls_target[i] - 1] = 40.0
        res = rpn_loss(DetectorOutput(logits, asg.reg_target.copy()), asg, PN, 4)
        assert 0.0 <= res.loss <= 1e-9

    def test_non_negative(self, rng):
        for _ in range(50):
            asg, out = random_instance(rng)
            assert rpn_loss(out, asg, FC).loss >= 0.0

    def test_shape_errors(self, rng):
        asg, out = random_instance(rng)
        with pytest.raises(ShapeError):
            rpn_loss(DetectorOutput(out.cls_logits[:5], out.reg_pred), asg, FC)
        with pytest.raises(ShapeError):
            rpn_loss(DetectorOutput(out.cls_logits, out.reg_pred[:, :6]), asg, FC)
        with pytest.raises(ValidationError):
            rpn_loss(out, asg, PN, -1)


class TestGradients:
    def _fd(self, asg, out, norm, h=1e-4):
        def f(logits, reg):
            return rpn_loss(DetectorOutput(logits, reg), asg, norm, 5).loss

        gl = np.zeros_like(out.cls_logits)
        for idx in np.ndindex(*gl.shape):
            up, dn = out.cls_logits.copy(), out.cls_logits.copy()
            up[idx] += h
            dn[idx] -= h
            gl[idx] = (f(up, out.reg_pred) - f(dn, out.reg_pred)) / (2 * h)
        gr = np.zeros_like(out.reg_pred)
        for idx in np.ndindex(*gr.shape):
            up, dn = out.reg_pred.copy(), out.reg_pred.copy()
            up[idx] += h
            dn[idx] -= h
            gr[idx] = (f(out.cls_logits, up) - f(out.cls_logits, dn)) / (2 * h)
        return gl, gr

    def test_small_instance(self, rng):
        asg, out = random_instance(rng, n=16, n_fg=2)
        while near_kink(out, asg, 1e-4):
            asg, out = random_instance(rng, n=16, n_fg=2)
        res = rpn_loss(out, asg, FC)
        gl, gr = self._fd(asg, out, FC)
        assert max_rel_error(res.grad_cls_logits, gl) < 1e-4
        assert max_rel_error(res.grad_reg_pred, gr) < 1e-4

    def test_many_instances_all_modes(self, rng):
        checked = 0
        while checked < 100:
            asg, out = random_instance(rng, n=8, n_fg=int(rng.integers(0, 4)))
            if near_kink(out, asg, 1e-4):
                continue
            norm = (FC, PN, AVG)[checked % 3]
            res = rpn_loss(out, asg, norm, 5)
            gl, gr = self._fd(asg, out, norm)
            assert max_rel_error(res.grad_cls_logits, gl) < 1e-4
            assert max_rel_error(res.grad_reg_pred, gr) < 1e-4
            checked += 1


class TestAssignment:
    def test_identical_anchor_is_foreground_with_zero_target(self):
        grid = make_anchor_grid(Rect(0, 8, 0, 8), 4.0)
        a = grid.anchors[5]
        asg = assign_anchors(grid, [a])
        assert asg.fg_mask[5]
        assert asg.cls_target[5] == a.class_id
        np.testing.assert_array_equal(asg.reg_target[5], np.zeros(7))

    def test_no_gt(self):
        asg = assign_anchors(make_anchor_grid(Rect(0, 8, 0, 8), 4.0), [])
        assert asg.num_fg == 0
        assert (asg.cls_target == 0).all()

    def test_matches_brute_force(self, rng):
        grid = make_anchor_grid(Rect(0, 40, 0, 40), 2.0, {1: (3.9, 1.6, 1.56)}, (0.0,))
        assert len(grid) == 400
        gts = [Box3D(float(rng.uniform(x, x + 6)), float(rng.uniform(5, 35)), 0.78, 4.2, 1.7, 1.5,
                     float(rng.uniform(-0.3, 0.3)), 1) for x in (5, 17, 29)]
        asg = assign_anchors(grid, gts, 0.6, 0.45)
        ious = [[bev_iou(a, g) for g in gts] for a in grid.anchors]
        best_anchor = {max(range(400), key=lambda i: ious[i][j]) for j in range(3)}
        for i, row in enumerate(ious):
            best = max(row)
            if best >= 0.6 or i in best_anchor:
                expected = 1
            elif best < 0.45:
                expected = 0
            else:
                expected = -1
            assert asg.cls_target[i] == expected, i
        assert asg.num_fg >= 3

    def test_classes_do_not_cross_match(self):
        grid = make_anchor_grid(Rect(0, 8, 0, 8), 4.0)
        ped = next(a for a in grid.anchors if a.class_id == 2)
        asg = assign_anchors(grid, [ped])
        assert set(asg.cls_target[asg.fg_mask]) == {2}

    def test_encode_decode_round_trip(self, rng):
        for _ in range(50):
            a, g = random_box(rng), random_box(rng)
            back = decode_box(a, encode_box(a, g), g.class_id)
            np.testing.assert_allclose(back.as_array()[:6], g.as_array()[:6], atol=1e-9)
            assert math.cos(back.yaw - g.yaw) == pytest.approx(1.0)

    def test_bad_thresholds(self):
        with pytest.raises(ValidationError):
            assign_anchors(make_anchor_grid(Rect(0, 8, 0, 8), 4.0), [], 0.4, 0.5)
