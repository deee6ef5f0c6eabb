"""Transport metrics against brute-force and analytic oracles."""

import itertools

import numpy as np
import pytest

from mmsbm.metrics import EmpiricalMeasure, mmd_rbf, sliced_wasserstein, wasserstein


def brute_force_wasserstein(x, y, order):
    """Exact assignment by enumerating every permutation (sizes <= 7)."""
    n = len(x)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(x[i] - y[p]) ** order
                   for i, p in enumerate(perm)) / n
        best = min(best, cost)
    return best ** (1.0 / order)


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((3, 2)), weights=np.array([0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 2)), weights=np.array([-0.5, 1.5]))
    m = EmpiricalMeasure(np.arange(3.0))
    assert m.dim == 1 and m.is_uniform


def test_identical_measures_are_zero():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((12, 3))
    assert wasserstein(pts, pts.copy(), order=2) == 0.0
    assert sliced_wasserstein(pts, pts.copy()) == 0.0
    assert mmd_rbf(pts, pts.copy()) == pytest.approx(0.0, abs=1e-7)


def test_single_pair_1d():
    assert wasserstein(np.array([0.0]), np.array([3.0]), order=2) == pytest.approx(3.0)


def test_two_point_shift_order_one():
    got = wasserstein(np.array([0.0, 1.0]), np.array([1.0, 2.0]), order=1)
    assert got == pytest.approx(1.0)      # both assignments cost 1


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_against_brute_force(order, d):
    rng = np.random.default_rng(order * 10 + d)
    for _ in range(30):
        n = rng.integers(2, 8)
        x = rng.uniform(-2, 2, (n, d))
        y = rng.uniform(-2, 2, (n, d))
        got = wasserstein(x, y, order=order)
        expect = brute_force_wasserstein(x, y, order)
        assert got == pytest.approx(expect, rel=1e-10)


def test_symmetry_and_nonnegativity():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((9, 2)), rng.standard_normal((9, 2))
    for fn in (lambda a, b: wasserstein(a, b, 2),
               lambda a, b: sliced_wasserstein(a, b, 64),
               mmd_rbf):
        assert fn(x, y) == pytest.approx(fn(y, x), rel=1e-9)
        assert fn(x, y) >= 0


def test_wasserstein_errors():
    with pytest.raises(ValueError):
        wasserstein(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        wasserstein(np.zeros((3, 2)), np.zeros((3, 2)), order=3)
    with pytest.raises(ValueError, match="sliced_wasserstein"):
        wasserstein(np.zeros((5001, 2)), np.zeros((5001, 2)))
    with pytest.raises(ValueError, match="sliced_wasserstein"):
        wasserstein(np.zeros((4, 2)), np.zeros((5, 2)))


def test_1d_unequal_sizes_exact():
    # quantile coupling handles unequal sizes: {0,1} vs {0, 0.5, 1}
    got = wasserstein(np.array([0.0, 1.0]), np.array([0.0, 0.5, 1.0]), order=1)
    # piecewise quantile gap: u in (1/3, 1/2): |0 - 0.5|, u in (1/2, 2/3): |1 - 0.5|
    assert got == pytest.approx((1 / 6) * 0.5 + (1 / 6) * 0.5, rel=1e-12)


def test_1d_weighted_point_masses():
    a = EmpiricalMeasure(np.array([0.0, 10.0]), weights=np.array([1.0, 0.0]))
    b = EmpiricalMeasure(np.array([1.0, 10.0]), weights=np.array([1.0, 0.0]))
    assert wasserstein(a, b, order=2) == pytest.approx(1.0)


def test_swd_equals_w2_in_1d():
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal(20), rng.standard_normal(20) + 0.7
    for npr in (1, 17):
        assert sliced_wasserstein(x, y, npr) == pytest.approx(
            wasserstein(x, y, order=2), rel=1e-12)


def test_swd_gaussian_shift():
    rng = np.random.default_rng(5)
    mu = np.array([1.2, -0.8])
    x = rng.standard_normal((4000, 2))
    y = rng.standard_normal((4000, 2)) + mu
    got = sliced_wasserstein(x, y, 256, rng=np.random.default_rng(0))
    expect = np.linalg.norm(mu) / np.sqrt(2)
    assert got == pytest.approx(expect, rel=0.1)


def test_swd_concentrates_over_reseeds():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((300, 3))
    y = rng.standard_normal((300, 3)) + 0.5
    vals = [sliced_wasserstein(x, y, 256, rng=np.random.default_rng(s))
            for s in range(10)]
    assert np.std(vals) <= 0.05 * np.mean(vals)


def test_mmd_far_clusters_saturate():
    x = np.zeros((40, 2)) + 1e-3 * np.random.default_rng(7).standard_normal((40, 2))
    y = x + np.array([1e4, 0.0])
    got = mmd_rbf(x, y, bandwidth=1.0)
    assert got == pytest.approx(np.sqrt(2.0), rel=1e-3)


def test_mmd_permutation_invariance():
    rng = np.random.default_rng(8)
    x, y = rng.standard_normal((15, 2)), rng.standard_normal((15, 2))
    base = mmd_rbf(x, y)
    assert mmd_rbf(x[::-1], y[rng.permutation(15)]) == pytest.approx(base, rel=1e-12)


def test_mmd_bandwidth_validation():
    with pytest.raises(ValueError):
        mmd_rbf(np.zeros((2, 1)), np.ones((2, 1)), bandwidth=0.0)
