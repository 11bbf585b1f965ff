import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from _oracles import diou_finite_difference, monte_carlo_overlap, near_regime_boundary, rel_err
from fedn.geometry import (
    Interval,
    ScoredDetection,
    diou,
    diou_loss_with_grad,
    giou,
    iou,
    match_greedy,
    nms,
)

I = Interval


def det(a, b, conf, cat=0):
    return ScoredDetection(I(a, b), conf, (), cat)


@st.composite
def intervals(draw, lo=-50.0, hi=50.0):
    a = draw(st.floats(lo, hi, allow_nan=False))
    length = draw(st.floats(0.01, 40.0, allow_nan=False))
    return I(a, a + length)


def test_interval_rejects_degenerate():
    with pytest.raises(ValueError):
        I(3, 3)
    with pytest.raises(ValueError):
        I(4, 2)
    assert I(2, 6).length() == 4
    assert I(2, 6).center() == 4


@pytest.mark.parametrize(
    "fn, a, b, expected",
    [
        (iou, (0, 10), (0, 10), 1.0),
        (iou, (0, 4), (6, 10), 0.0),
        (iou, (0, 10), (5, 15), 1 / 3),
        (giou, (0, 10), (0, 10), 1.0),
        (giou, (0, 4), (6, 10), -0.2),
        (giou, (0, 10), (5, 15), 1 / 3),
        (diou, (0, 10), (0, 10), 1.0),
        (diou, (0, 4), (6, 10), -0.36),
        (diou, (0, 10), (5, 15), 2 / 9),
    ],
)
def test_worked_examples(fn, a, b, expected):
    assert fn(I(*a), I(*b)) == pytest.approx(expected, abs=1e-12)


def test_touching_intervals_are_disjoint():
    assert iou(I(0, 5), I(5, 9)) == 0.0


@pytest.mark.parametrize(
    "pred, gt, loss",
    [((0, 10), (0, 10), 0.0), ((0, 4), (6, 10), 1.36), ((0, 10), (5, 15), 7 / 9)],
)
def test_diou_loss_examples(pred, gt, loss):
    value, _, _ = diou_loss_with_grad(I(*pred), I(*gt))
    assert value == pytest.approx(loss, abs=1e-12)


@given(intervals(), intervals())
def test_symmetry_and_orderings(a, b):
    for fn in (iou, giou, diou):
        assert fn(a, b) == pytest.approx(fn(b, a), abs=1e-12)
    assert 0.0 <= iou(a, b) <= 1.0
    assert -1.0 < giou(a, b) <= iou(a, b) + 1e-12
    assert -1.0 < diou(a, b) <= iou(a, b) + 1e-12


@given(intervals(), intervals(), st.floats(-100, 100), st.floats(0.1, 10))
def test_translation_and_scale_invariance(a, b, shift, scale):
    def moved(x):
        return I(scale * x.start + shift, scale * x.end + shift)

    for fn in (iou, giou, diou):
        assert fn(moved(a), moved(b)) == pytest.approx(fn(a, b), abs=1e-7)


def test_equality_conditions():
    # contained interval: hull == union, so giou == iou
    assert giou(I(0, 10), I(2, 5)) == pytest.approx(iou(I(0, 10), I(2, 5)))
    # concentric: diou == iou
    assert diou(I(0, 10), I(3, 7)) == pytest.approx(iou(I(0, 10), I(3, 7)))
    # disjoint: giou strictly below iou
    assert giou(I(0, 1), I(2, 3)) < iou(I(0, 1), I(2, 3))
    # off-centre: diou strictly below iou
    assert diou(I(0, 10), I(1, 4)) < iou(I(0, 10), I(1, 4))


def test_monte_carlo_agreement():
    rng = np.random.default_rng(3)
    for _ in range(100):
        s = rng.uniform(0, 20, 2)
        lengths = rng.uniform(1, 15, 2)
        a, b = I(s[0], s[0] + lengths[0]), I(s[1], s[1] + lengths[1])
        mi, mg, md = monte_carlo_overlap(a, b, rng)
        assert abs(iou(a, b) - mi) < 2e-3
        assert abs(giou(a, b) - mg) < 2e-3
        assert abs(diou(a, b) - md) < 2e-3


def test_diou_gradient_matches_finite_differences():
    rng = random.Random(11)
    checked = 0
    while checked < 1000:
        p0, g0 = rng.uniform(0, 20), rng.uniform(0, 20)
        p = I(p0, p0 + rng.uniform(1, 10))
        g = I(g0, g0 + rng.uniform(1, 10))
        if near_regime_boundary(p, g):
            continue
        _, ds, de = diou_loss_with_grad(p, g)
        fs, fe = diou_finite_difference(p, g)
        assert rel_err(ds, fs) < 1e-5, (p, g, ds, fs)
        assert rel_err(de, fe) < 1e-5, (p, g, de, fe)
        checked += 1


def test_diou_gradient_nonzero_when_disjoint():
    loss, ds, de = diou_loss_with_grad(I(0, 4), I(6, 10))
    assert loss == pytest.approx(1.36)
    assert (ds, de) != (0.0, 0.0)
    fs, fe = diou_finite_difference(I(0, 4), I(6, 10))
    assert ds == pytest.approx(fs, rel=1e-6) and de == pytest.approx(fe, rel=1e-6)
    # extending the end towards the gt reduces the loss
    assert de < 0


def test_diou_gradient_boundary_uses_left_derivative():
    p, g = I(0, 10), I(0, 10)
    _, ds, de = diou_loss_with_grad(p, g)
    h = 1e-6
    left_s = (diou_loss_with_grad(p, g)[0] - (1 - diou(I(-h, 10), g))) / h
    left_e = (diou_loss_with_grad(p, g)[0] - (1 - diou(I(0, 10 - h), g))) / h
    assert ds == pytest.approx(left_s, rel=1e-4)
    assert de == pytest.approx(left_e, rel=1e-4)


# -- NMS ---------------------------------------------------------------------


def test_nms_example():
    dets = [det(0, 10, 0.9), det(1, 11, 0.8), det(20, 30, 0.7)]
    kept = nms(dets, 0.5)
    assert [(d.interval.start, d.confidence) for d in kept] == [(0, 0.9), (20, 0.7)]


def test_nms_trivial_cases():
    assert nms([], 0.5) == []
    one = [det(2, 5, 0.4)]
    assert nms(one, 0.5) == one
    two = [det(0, 5, 0.4), det(8, 9, 0.9)]
    assert set(nms(two, 0.01)) == set(two)


def test_nms_rejects_bad_threshold():
    with pytest.raises(ValueError):
        nms([det(0, 1, 0.5)], 1.0)


def test_nms_tie_break():
    dets = [det(5, 15, 0.5, 1), det(4, 14, 0.5, 0), det(4, 14, 0.5, 2)]
    kept = nms(dets, 0.5)
    assert kept == [det(4, 14, 0.5, 0)]


@st.composite
def detection_sets(draw):
    n = draw(st.integers(0, 12))
    out = []
    for _ in range(n):
        a = draw(st.floats(0, 100))
        length = draw(st.floats(0.5, 30))
        conf = draw(st.floats(0, 1))
        out.append(det(a, a + length, conf, draw(st.integers(0, 3))))
    return out


@given(detection_sets(), st.floats(0.05, 0.95))
def test_nms_properties(dets, t):
    kept = nms(dets, t)
    assert all(k in dets for k in kept)
    for a, b in itertools.combinations(kept, 2):
        assert iou(a.interval, b.interval) <= t
    assert nms(kept, t) == kept
    confs = [k.confidence for k in kept]
    assert confs == sorted(confs, reverse=True)


@given(detection_sets())
def test_nms_near_one_keeps_everything(dets):
    t = 1 - 1e-9
    assume(all(iou(a.interval, b.interval) <= t for a, b in itertools.combinations(dets, 2)))
    kept = nms(dets, t)
    assert len(kept) == len(dets) and set(kept) == set(dets)


# -- matching ----------------------------------------------------------------


def test_match_examples():
    assert match_greedy([det(0, 10, 0.9)], [I(0, 10)], 0.5) == [(0, 0)]
    assert match_greedy([det(12, 22, 0.9)], [I(10, 20)], 0.7) == []
    two = [det(0, 10, 0.6), det(0, 10, 0.9)]
    assert match_greedy(two, [I(0, 10)], 0.5) == [(1, 0)]


def test_match_requires_category():
    preds = [det(0, 10, 0.9, cat=1)]
    assert match_greedy(preds, [I(0, 10)], 0.5, True, [0]) == []
    assert match_greedy(preds, [I(0, 10)], 0.5, True, [1]) == [(0, 0)]
    with pytest.raises(ValueError):
        match_greedy(preds, [I(0, 10)], 0.5, True)


def greedy_oracle(preds, gts, t, cats=None):
    """Reference greedy matcher working off a precomputed IoU table."""
    table = [[iou(p.interval, g) for g in gts] for p in preds]
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].interval.start, preds[i].category))
    used, tp = set(), 0
    for i in order:
        cands = [
            (table[i][j], -j) for j in range(len(gts))
            if j not in used and table[i][j] >= t and (cats is None or cats[j] == preds[i].category)
        ]
        if cands:
            _, neg_j = max(cands)
            used.add(-neg_j)
            tp += 1
    return tp


def test_match_against_oracle_exhaustive_small():
    rng = random.Random(5)
    grid = [0, 2, 4, 6, 8]
    for n_pred in range(6):
        for n_gt in range(6):
            for _ in range(20):
                preds = []
                for _ in range(n_pred):
                    a = rng.choice(grid)
                    preds.append(det(a, a + rng.choice([2, 4, 6]), rng.random(), rng.randrange(2)))
                gts = []
                for _ in range(n_gt):
                    a = rng.choice(grid)
                    gts.append(I(a, a + rng.choice([2, 4, 6])))
                cats = [rng.randrange(2) for _ in gts]
                for t in (0.3, 0.5, 0.7):
                    got = match_greedy(preds, gts, t)
                    assert len(got) == greedy_oracle(preds, gts, t)
                    assert len({g for _, g in got}) == len(got)
                    got = match_greedy(preds, gts, t, True, cats)
                    assert len(got) == greedy_oracle(preds, gts, t, cats)


def test_scored_detection_argmax_tie_goes_low():
    d = ScoredDetection.from_scores(I(0, 1), [0.2, 0.8, 0.8])
    assert d.category == 1
    assert d.confidence == 0.8
    assert math.isclose(max(d.category_scores), d.confidence)
