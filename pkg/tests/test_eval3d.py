import itertools
import math

import pytest

from conftest import random_box
from lidarssl.errors import NotDefined
from lidarssl.eval3d import (average_precision, heading_accuracy, match, metrics_report)
from lidarssl.geometry import Box3D, Transform2D, iou_3d


def car(x, y=0.0, yaw=0.0, score=None, cls=1):
    return Box3D(x, y, 0.8, 4.0, 2.0, 1.6, yaw, cls, score)


def greedy_oracle(preds, gts, thr):
    """Plain-Python greedy matching over an explicit IoU table."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken, tp = set(), {}
    for i in order:
        cands = [(iou_3d(preds[i], g), j) for j, g in enumerate(gts)
                 if j not in taken and g.class_id == preds[i].class_id]
        if cands:
            v, j = max(cands, key=lambda t: (t[0], -t[1]))
            if v >= thr:
                taken.add(j)
                tp[i] = j
    return tp


class TestMatch:
    def test_perfect(self):
        gts = [car(0), car(10, yaw=1.0), car(20, yaw=-2.0)]
        m = match([g.replace(score=1.0) for g in gts], gts)
        assert len(m.tp) == 3 and not m.fp and not m.fn
        assert all(h == 1.0 for *_, h in m.tp)

    def test_reversed_heading(self):
        assert heading_accuracy(math.pi, 0.0) == 0.0
        assert heading_accuracy(0.3, 0.3 + 2 * math.pi) == pytest.approx(1.0)
        m = match([car(0, yaw=math.pi, score=0.9)], [car(0)])
        assert m.tp[0][3] == pytest.approx(0.0)

    def test_pred_between_two_gts_takes_the_better(self):
        gts = [car(0.0), car(1.0)]
        pred = car(0.7, score=0.9)
        m = match([pred], gts, 0.3)
        assert [(i, j) for i, j, *_ in m.tp] == [(0, 1)]
        assert m.fn == [0]
        # exhaustive: of all single assignments this is the max-IoU one
        best = max(range(2), key=lambda j: iou_3d(pred, gts[j]))
        assert best == 1

    def test_exhaustive_small_cases(self, rng):
        for _ in range(200):
            n_p, n_g = rng.integers(0, 6, 2)
            gts = [random_box(rng, extent=2.0, class_id=int(rng.integers(1, 3))) for _ in range(n_g)]
            preds = [random_box(rng, extent=2.0, class_id=int(rng.integers(1, 3))).replace(score=float(s))
                     for s in rng.permutation(n_p) / 10 + 0.05]
            thr = float(rng.choice([0.1, 0.3, 0.5]))
            m = match(preds, gts, thr)
            assert {i: j for i, j, *_ in m.tp} == greedy_oracle(preds, gts, thr)
            assert sorted([i for i, *_ in m.tp] + m.fp) == list(range(n_p))
            # greedy never beats the best one-to-one assignment found by brute force
            ok = [[iou_3d(p, g) >= thr and p.class_id == g.class_id for g in gts] for p in preds]
            if n_p <= n_g:
                pairings = ([(i, j) for i, j in enumerate(perm)]
                            for perm in itertools.permutations(range(int(n_g)), int(n_p)))
            else:
                pairings = ([(i, j) for j, i in enumerate(perm)]
                            for perm in itertools.permutations(range(int(n_p)), int(n_g)))
            best = max(sum(ok[i][j] for i, j in pairs) for pairs in pairings)
            assert len(m.tp) <= best

    def test_rigid_invariance(self, rng):
        gts = [random_box(rng, extent=8.0) for _ in range(6)]
        preds = [g.replace(cx=g.cx + 0.3, yaw=g.yaw + 0.1, score=float(s))
                 for g, s in zip(gts, rng.random(6))]
        t = Transform2D(rotation=0.8, translation=(5.0, -7.0))
        a = match(preds, gts, 0.5)
        b = match([t.apply_box(p) for p in preds], [t.apply_box(g) for g in gts], 0.5)
        assert [(i, j) for i, j, *_ in a.tp] == [(i, j) for i, j, *_ in b.tp]


class TestAveragePrecision:
    def test_perfect_detector(self):
        gts = [car(10.0 * i) for i in range(5)]
        r = average_precision([([g.replace(score=0.9) for g in gts], gts)])
        assert r.ap == r.aph == 1.0

    def test_all_below_threshold(self):
        gts = [car(10.0 * i) for i in range(5)]
        r = average_precision([([g.replace(cx=g.cx + 3.0, score=0.9) for g in gts], gts)])
        assert r.ap == 0.0

    def test_no_gt(self):
        with pytest.raises(NotDefined):
            average_precision([([car(0, score=0.5)], [])])

    def test_hand_computed_ten_predictions(self):
        gts = [car(10.0 * i) for i in range(5)]
        pattern = "TTFTFFTFFF"
        preds, k = [], 0
        for rank, c in enumerate(pattern):
            score = 1.0 - rank / 20
            if c == "T":
                preds.append(gts[k].replace(score=score))
                k += 1
            else:
                preds.append(car(100.0 + 10 * rank, score=score))
        r = average_precision([(preds, gts)])
        # recall 0..0.4 at precision 1, to 0.6 at 3/4, to 0.8 at 4/7, beyond at 0
        expected = (41 * 1.0 + 20 * 0.75 + 20 * 4 / 7) / 101
        assert r.ap == pytest.approx(expected, abs=1e-6)
        assert r.recall == 0.8

    def test_aph_not_above_ap_and_weighted(self, rng):
        for _ in range(30):
            gts = [car(10.0 * i, yaw=float(rng.uniform(-3, 3))) for i in range(6)]
            preds = [g.replace(yaw=g.yaw + float(rng.normal(0, 1)), score=float(rng.random()))
                     for g in gts if rng.random() < 0.8]
            preds += [car(200.0 + i, score=float(rng.random())) for i in range(3)]
            r = average_precision([(preds, gts)], 0.5, "bev")
            assert r.aph <= r.ap + 1e-12

    def test_rank_invariance(self, rng):
        gts = [random_box(rng, extent=15.0) for _ in range(10)]
        preds = [g.replace(cx=g.cx + float(rng.normal(0, 0.3)), score=float(rng.random())) for g in gts]
        preds += [random_box(rng, extent=15.0).replace(score=float(rng.random())) for _ in range(5)]
        base = average_precision([(preds, gts)], 0.5)
        warped = [p.replace(score=1 / (1 + math.exp(-5 * p.score))) for p in preds]
        other = average_precision([(warped, gts)], 0.5)
        assert (base.ap, base.aph) == (other.ap, other.aph)

    def test_frames_pool_before_ranking(self):
        g1, g2 = [car(0)], [car(0)]
        r = average_precision([([car(0, score=0.9)], g1), ([car(50, score=0.95)], g2)])
        # FP at rank 1, TP at rank 2: precision 1/2 at recall 1/2
        assert r.ap == pytest.approx(51 * 0.5 / 101)

    def test_report_shape(self):
        gts = [car(0), car(10, cls=2)]
        rep = metrics_report([([car(0, score=0.9), car(30, cls=3, score=0.5)], gts)])
        assert rep["classes"]["Vehicle"]["ap"] == 1.0
        assert rep["classes"]["Pedestrian"]["ap"] == 0.0
        assert rep["classes"]["Cyclist"]["ap"] is None
        assert rep["overall"]["map"] == pytest.approx(0.5)
