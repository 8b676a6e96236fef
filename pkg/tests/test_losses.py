import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from projfair import diffgraph as dg
from projfair import losses as L


def textbook_corr(a, b):
    # two passes: means first, then centred sums
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    sab = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = sum((x - ma) ** 2 for x in a)
    sbb = sum((y - mb) ** 2 for y in b)
    return sab / math.sqrt(saa * sbb)


def test_pearson_examples():
    assert L.pearson_corr([1, 2, 3], [2, 4, 6], eps_v=0) == pytest.approx(1.0, abs=1e-15)
    assert L.pearson_corr([1, 2, 3], [3, 2, 1], eps_v=0) == pytest.approx(-1.0, abs=1e-15)
    # the variance floor shrinks |r| by roughly eps_v * (1/sd_a + 1/sd_b)
    assert L.pearson_corr([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-7)
    # by hand: cov = 1, var_a = 2/3, var_b = 42/27, so r^2 = 27/28
    assert L.pearson_corr([1, 2, 3], [1, 2, 4], eps_v=0) == pytest.approx(math.sqrt(27 / 28), abs=1e-12)
    # sqrt(3/7) belongs to the pair with the first two entries of b swapped
    assert L.pearson_corr([1, 2, 3], [2, 1, 4], eps_v=0) == pytest.approx(math.sqrt(3 / 7), abs=1e-12)


def test_pearson_matches_textbook_on_random_pairs():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 50))
        a = rng.standard_normal(d) * rng.uniform(0.1, 10)
        b = 0.4 * a + rng.standard_normal(d)
        worst = max(worst, abs(L.pearson_corr(a, b, eps_v=0) - textbook_corr(a.tolist(), b.tolist())))
    assert worst < 1e-10


def test_pearson_zero_variance_without_floor():
    with pytest.raises(L.DegenerateBatch):
        L.pearson_corr([1, 1, 1], [1, 2, 3], eps_v=0)
    assert L.pearson_corr([1, 1, 1], [1, 2, 3]) == 0.0


def test_rec_loss_examples():
    X = np.array([[1.0, 2.0]])
    assert L.rec_loss(X, X).value[0, 0] == 0.0
    assert L.rec_loss(X, np.zeros((1, 2))).value[0, 0] == 2.5
    with pytest.raises(dg.ShapeError):
        L.rec_loss(X, np.zeros((2, 1)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-5, 5, allow_nan=False)),
       arrays(np.float64, (3, 2), elements=st.floats(-5, 5, allow_nan=False)),
       st.floats(0.1, 10))
def test_rec_loss_homogeneous(X, Y, c):
    base = L.rec_loss(X, Y).value[0, 0]
    assert L.rec_loss(c * X, c * Y).value[0, 0] == pytest.approx(c * c * base, rel=1e-9, abs=1e-12)


def _with_corr(t, target):
    # returns a vector whose population correlation with t is exactly ``target``
    rng = np.random.default_rng(1)
    t = (t - t.mean()) / t.std()
    r = rng.standard_normal(t.size)
    r -= r.mean()
    r -= (r @ t) / (t @ t) * t
    r /= r.std()
    return target * t + math.sqrt(1 - target * target) * r


def test_corr_loss_substitution_cases():
    t = np.random.default_rng(2).standard_normal(40)
    s = _with_corr(t, 0.0)
    v = L.corr_loss(t, t, s, eta=0.5).value[0, 0]
    assert v == pytest.approx(-0.5, abs=1e-7)

    # z_p chosen so that |Corr(z_p, t)| = 0.8 and each bias sits at 0.1
    z = _with_corr(t, 0.8)
    s1, s2 = _with_corr(z, 0.1), _with_corr(z, -0.1)
    expected = abs(L.pearson_corr(z, s1)) + abs(L.pearson_corr(z, s2)) - 0.5 * abs(L.pearson_corr(z, t))
    v = L.corr_loss(z, t, np.column_stack([s1, s2]), eta=0.5).value[0, 0]
    assert v == pytest.approx(expected, abs=1e-12)
    assert v == pytest.approx(-0.2, abs=1e-6)


def test_corr_loss_worked_example_tiled():
    # the 4-row example tiled to the minimum batch of 8; population moments are unchanged
    z = np.tile([1.0, 2.0, 3.0, 4.0], 2)
    s = np.tile([4.0, 3.0, 2.0, 1.0], 2)
    assert L.corr_loss(z, z, s, eta=0.5).value[0, 0] == pytest.approx(0.5, abs=1e-7)


def test_corr_loss_rejects_small_and_degenerate_batches():
    with pytest.raises(ValueError):
        L.corr_loss(np.arange(4.0), np.arange(4.0), None)
    z = np.arange(8.0)
    with pytest.raises(L.DegenerateBatch):
        L.corr_loss(z, np.ones(8), None)
    with pytest.raises(L.DegenerateBatch):
        L.corr_loss(z, z, np.ones((8, 1)))


def _batch(rng, d=16):
    X = rng.standard_normal((d, 3))
    X_rec = rng.standard_normal((d, 3))
    z = rng.standard_normal(d)
    t = rng.standard_normal(d)
    S = rng.standard_normal((d, 2))
    return X, X_rec, z, t, S


def test_joint_lambda_zero_is_rec_exactly():
    X, X_rec, z, t, S = _batch(np.random.default_rng(3))
    joint = L.joint_loss(X, X_rec, z, t, S, L.LossConfig(lam=0.0)).value[0, 0]
    assert joint == L.rec_loss(X, X_rec).value[0, 0]


def test_joint_is_rec_plus_lambda_corr():
    X, X_rec, z, t, S = _batch(np.random.default_rng(4))
    cfg = L.LossConfig(eta=0.5, lam=1.0)
    joint, rec, corr = (n.value[0, 0] for n in L.joint_terms(X, X_rec, z, t, S, cfg))
    assert joint == pytest.approx(rec + corr, abs=1e-15)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        L.LossConfig(eta=0.0)
    with pytest.raises(ValueError):
        L.LossConfig(lam=-1.0)
    with pytest.raises(ValueError):
        L.LossConfig(eps_v=1e-3)


def test_dummy_encode():
    M, cats = L.dummy_encode(["A", "B", "A"], "A")
    assert M.shape == (3, 1) and M[:, 0].tolist() == [0, 1, 0]
    M, cats = L.dummy_encode(["A", "B", "C", "B"], "A")
    assert M.shape == (4, 2)
    assert set(M.sum(axis=1).tolist()) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        L.dummy_encode(["A", "A"], "A")
