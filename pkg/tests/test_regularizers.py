import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbspect.regularizers import (
    D_NORM_SQ_BOUND,
    AdmissibleSet,
    apply_D,
    apply_D_transpose,
    difference_matrix,
    multibang_penalty,
    multibang_pointwise,
    multibang_prox,
    tv_gradient,
    tv_smoothed,
)

A01 = AdmissibleSet((0.0, 1.0))
A5 = AdmissibleSet((0.0, 0.2, 0.3, 0.4, 1.0))


def brute_prox(x, A, w, step=1e-5):
    z = np.arange(A.lo, A.hi + step / 2, step)
    return z[np.argmin(w * multibang_pointwise(z, A) + 0.5 * (z - x) ** 2)]


def test_admissible_set_validation():
    with pytest.raises(ValueError):
        AdmissibleSet((0.0,))
    with pytest.raises(ValueError):
        AdmissibleSet((0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        AdmissibleSet((0.0, math.inf))


def test_penalty_examples():
    assert multibang_penalty(np.array(A5.levels), A5) == 0.0
    assert multibang_penalty(np.array([0.5]), A01) == 0.25
    assert multibang_penalty(np.array([1.1]), A01) == math.inf
    assert multibang_penalty(np.array([-1e-9]), A01) == math.inf


@settings(max_examples=200)
@given(st.floats(0, 1, allow_subnormal=False))
def test_penalty_nonnegative_zero_only_on_levels(x):
    m = multibang_pointwise(x, A5)
    assert m >= 0
    assert (m == 0) == (x in A5.levels)


def test_prox_examples():
    for w in (0.01, 0.25, 0.49):
        for a in A5.levels:
            assert multibang_prox(a, A5, w) == a
    assert multibang_prox(0.5, A01, 0.25) == 0.5


@pytest.mark.parametrize("w", [0.0, 0.5, -0.1, 0.7])
def test_prox_rejects_bad_weight(w):
    with pytest.raises(ValueError):
        multibang_prox(0.3, A01, w)


def test_prox_matches_brute_force():
    rng = np.random.default_rng(0)
    for A in (A01, A5):
        for _ in range(300):
            x = rng.uniform(A.lo - 0.3, A.hi + 0.3)
            w = rng.uniform(0.01, 0.49)
            assert abs(multibang_prox(x, A, w) - brute_prox(x, A, w)) <= 1e-4


def test_prox_thresholds_map_to_level():
    w = 0.2
    lv = A5.array
    for i in range(1, len(lv) - 1):
        lo_t = lv[i] - w * (lv[i] - lv[i - 1])
        hi_t = lv[i] + w * (lv[i + 1] - lv[i])
        xs = np.linspace(lo_t, hi_t, 101)
        assert np.all(multibang_prox(xs, A5, w) == lv[i])
        # just outside the interval the output leaves the level
        assert multibang_prox(hi_t + 1e-9, A5, w) != lv[i]
        assert multibang_prox(lo_t - 1e-9, A5, w) != lv[i]


@settings(max_examples=200)
@given(x=st.floats(-2, 3), y=st.floats(-2, 3), w=st.floats(0.001, 0.499))
def test_prox_monotone_and_in_range(x, y, w):
    px, py = multibang_prox(x, A5, w), multibang_prox(y, A5, w)
    assert A5.lo <= px <= A5.hi
    if x <= y:
        assert px <= py


def test_prox_vectorised():
    x = np.array([-1.0, 0.1, 0.5, 0.9, 2.0])
    np.testing.assert_array_equal(multibang_prox(x, A01, 0.2),
                                  [multibang_prox(v, A01, 0.2) for v in x])


def test_D_examples():
    M = 4
    assert np.all(apply_D(np.full(M * M, 3.7), M) == 0)
    a = np.arange(M * M, dtype=float) ** 2
    y = apply_D(a, M)
    assert y.shape == (M * M - 1, 2)
    for i in range(1, M * M):  # 1-based pixel index
        if i % M == 0:
            assert y[i - 1, 0] == 0
        else:
            assert y[i - 1, 0] == a[i - 1] - a[i]
        if i > M * (M - 1):
            assert y[i - 1, 1] == 0
        else:
            assert y[i - 1, 1] == a[i - 1] - a[i - 1 + M]


@pytest.mark.parametrize("M", [1, 2, 5, 9])
def test_D_adjoint(M):
    rng = np.random.default_rng(M)
    a = rng.standard_normal(M * M)
    y = rng.standard_normal((M * M - 1, 2))
    assert abs(np.sum(apply_D(a, M) * y) - a @ apply_D_transpose(y, M)) <= 1e-12
    Dm = difference_matrix(M)
    np.testing.assert_array_equal(Dm @ a, apply_D(a, M).ravel())


def test_D_norm_bound():
    Dm = difference_matrix(12).toarray()
    assert np.linalg.norm(Dm, 2) ** 2 <= D_NORM_SQ_BOUND


def test_tv_examples():
    M, c = 6, 1e-3
    const = np.full(M * M, 0.4)
    assert tv_smoothed(const, M, c) == pytest.approx((M * M - 1) * math.sqrt(c), rel=1e-14)
    assert np.all(tv_gradient(const, M, c) == 0)
    with pytest.raises(ValueError):
        tv_smoothed(const, M, 0.0)
    with pytest.raises(ValueError):
        tv_gradient(const, M, -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_tv_gradient_finite_differences(seed):
    M, c = 6, 1e-2
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(M * M)
    h = 1e-5
    fd = np.array([(tv_smoothed(a + h * e, M, c) - tv_smoothed(a - h * e, M, c)) / (2 * h)
                   for e in np.eye(M * M)])
    g = tv_gradient(a, M, c)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)


def test_tv_gradient_lipschitz_bound():
    M, c = 8, 1e-2
    rng = np.random.default_rng(3)
    bound = D_NORM_SQ_BOUND / math.sqrt(c)
    for _ in range(50):
        a, b = rng.standard_normal((2, M * M))
        lhs = np.linalg.norm(tv_gradient(a, M, c) - tv_gradient(b, M, c))
        assert lhs <= bound * np.linalg.norm(a - b)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16))
def test_tv_lower_bound(vals):
    a = np.array(vals)
    c = 1e-3
    tv = tv_smoothed(a, 4, c)
    assert tv >= 15 * math.sqrt(c) * (1 - 1e-15)
    if np.ptp(a) > 1e-6:
        assert tv > 15 * math.sqrt(c)
