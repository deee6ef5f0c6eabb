"""Dataset generators and the CSV round trip."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mmsbm.data import (SnapshotDataset, generate_gaussian_mixture_sequence,
                        generate_lotka_volterra, generate_vortex_2d,
                        lv_invariant, read_csv, write_csv)
from mmsbm.errors import ConfigError, ParseError
from mmsbm.metrics import EmpiricalMeasure, wasserstein


def test_lv_defaults_shape_and_roles():
    ds = generate_lotka_volterra(rng=np.random.default_rng(0))
    assert len(ds.marginals) == 9 and ds.dim == 2
    assert all(len(m.points) == 50 for m in ds.marginals)
    assert ds.roles == ["train", "heldout"] * 4 + ["train"]
    assert list(ds.schedule.normalized_times) == list(range(9))
    assert ds.train_schedule().raw_times == (0.0, 2.0, 4.0, 6.0, 8.0)


def test_lv_deterministic_under_seed():
    a = generate_lotka_volterra(rng=np.random.default_rng(5))
    b = generate_lotka_volterra(rng=np.random.default_rng(5))
    for ma, mb in zip(a.marginals, b.marginals):
        np.testing.assert_array_equal(ma.points, mb.points)


def test_lv_point_mass_without_noise():
    ds = generate_lotka_volterra(ic_jitter=0.0, n_samples=4, obs_noise=0.0,
                                 rng=np.random.default_rng(1))
    for m in ds.marginals:
        assert np.ptp(m.points, axis=0).max() < 1e-9


def test_lv_conservation_oracle():
    # the flow conserves x - ln x + y - ln y; snapshots without observation
    # noise must stay on the level set of their start
    ds = generate_lotka_volterra(ic_jitter=0.0, n_samples=1, obs_noise=0.0,
                                 rng=np.random.default_rng(2))
    H = np.array([lv_invariant(m.points[0]) for m in ds.marginals])
    assert np.ptp(H) < 1e-6


def test_lv_periodicity():
    # locate the period numerically from a dense solve and check the flow
    # returns to its start within 5%
    start = np.array([2.0, 0.5])

    def rhs(_t, z):
        return [z[0] - z[0] * z[1], z[0] * z[1] - z[1]]

    sol = solve_ivp(rhs, (0, 20), start, dense_output=True, rtol=1e-10, atol=1e-12)
    ts = np.linspace(1.0, 20, 8000)
    dist = np.linalg.norm(sol.sol(ts).T - start, axis=1)
    period = ts[np.argmin(dist)]
    end = sol.sol(period)
    assert np.linalg.norm(end - start) / np.linalg.norm(start) < 0.05
    assert 2 * np.pi * 0.5 < period < 20          # a genuine cycle, not t=0


def test_lv_rejects_bad_params():
    with pytest.raises(ConfigError):
        generate_lotka_volterra(rates=(1, 1, -1, 1))
    with pytest.raises(ConfigError):
        generate_lotka_volterra(ic=(0.0, 1.0))


def test_vortex_static_case():
    ds = generate_vortex_2d(n_samples=40, angular_speed=0.0, noise=0.0,
                            rng=np.random.default_rng(3))
    base = ds.points(0)
    for m in ds.marginals[1:]:
        np.testing.assert_array_equal(m.points, base)


def test_vortex_rotation_alignment():
    # quarter turn per training step (2 raw units) means the first heldout
    # snapshot is the base cloud rotated by one-eighth turn
    ds = generate_vortex_2d(n_samples=60, angular_speed=np.pi / 4, noise=0.0,
                            rng=np.random.default_rng(4))
    th = np.pi / 4
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    np.testing.assert_allclose(ds.points(1), ds.points(0) @ rot.T, atol=1e-12)


def test_vortex_default_sizes():
    ds = generate_vortex_2d(rng=np.random.default_rng(5))
    assert len(ds.marginals) == 9
    assert all(len(m.points) == 300 for m in ds.marginals)
    assert len(ds.indices("train")) == 5 and len(ds.indices("heldout")) == 4


def test_mixture_point_masses():
    spec = {"dimension": 2, "n_samples": 10, "times": [0, 1],
            "marginals": [[{"mean": [1.0, 2.0], "std": 0.0}],
                          [{"mean": [0.0, 0.0], "std": 0.0}]]}
    ds = generate_gaussian_mixture_sequence(spec, np.random.default_rng(6))
    np.testing.assert_array_equal(ds.points(0), np.tile([1.0, 2.0], (10, 1)))


def test_mixture_swap_has_known_transport_cost():
    # two point blobs swapping locations: the optimal plan moves only the
    # count imbalance, so W2^2 = |k0 - k1| / n * gap^2
    gap = 3.0
    spec = {"dimension": 1, "n_samples": 200, "times": [0, 1, 2],
            "marginals": [
                [{"mean": [0.0], "std": 0.0, "weight": 0.75},
                 {"mean": [gap], "std": 0.0, "weight": 0.25}],
                [{"mean": [0.0], "std": 0.0, "weight": 0.25},
                 {"mean": [gap], "std": 0.0, "weight": 0.75}],
                [{"mean": [0.0], "std": 0.0, "weight": 0.75},
                 {"mean": [gap], "std": 0.0, "weight": 0.25}]]}
    ds = generate_gaussian_mixture_sequence(spec, np.random.default_rng(7))
    k0 = int((ds.points(0) == 0).sum())
    k1 = int((ds.points(1) == 0).sum())
    expect = np.sqrt(abs(k0 - k1) / 200.0) * gap
    got = wasserstein(ds.points(0), ds.points(1), order=2)
    assert got == pytest.approx(expect, rel=1e-12)


def test_mixture_spec_validation():
    with pytest.raises(ConfigError):
        generate_gaussian_mixture_sequence({"dimension": 2}, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        generate_gaussian_mixture_sequence(
            {"dimension": 1, "n_samples": 5, "times": [0, 1], "marginals": [[]] * 2},
            np.random.default_rng(0))


def test_csv_round_trip(tmp_path):
    ds = generate_lotka_volterra(n_samples=7, rng=np.random.default_rng(8))
    p = tmp_path / "lv.csv"
    write_csv(ds, p)
    back = read_csv(p)
    assert back.schedule.raw_times == ds.schedule.raw_times
    assert back.roles == ds.roles
    for a, b in zip(ds.marginals, back.marginals):
        np.testing.assert_array_equal(a.points, b.points)


def test_csv_round_trip_mixture_spec(tmp_path):
    spec = {"dimension": 2, "n_samples": 6, "times": [0.0, 2.5, 7.0],
            "marginals": [[{"mean": [0, 0], "std": 0.2}]] * 3}
    ds = generate_gaussian_mixture_sequence(spec, np.random.default_rng(9))
    p = tmp_path / "mix.csv"
    write_csv(ds, p)
    back = read_csv(p)
    assert back.schedule.raw_times == (0.0, 2.5, 7.0)
    for a, b in zip(ds.marginals, back.marginals):
        np.testing.assert_array_equal(a.points, b.points)


def test_csv_header_required(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,0,1.0\n")
    with pytest.raises(ParseError, match="header"):
        read_csv(p)


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time_index,sample_id,x_0\n0,0,1.0\n0,1,oops\n")
    with pytest.raises(ParseError, match=":3"):
        read_csv(p)
    p.write_text("time_index,sample_id,x_0\n0,0,1.0,9.0\n")
    with pytest.raises(ParseError, match=":2"):
        read_csv(p)


def test_csv_without_manifest_defaults(tmp_path):
    p = tmp_path / "plain.csv"
    p.write_text("time_index,sample_id,x_0\n0,0,1.0\n1,0,2.0\n")
    ds = read_csv(p)
    assert ds.roles == ["train", "train"]
    assert ds.schedule.raw_times == (0.0, 1.0)


def test_csv_high_dimensional(tmp_path):
    rng = np.random.default_rng(10)
    sched_times = [0.0, 1.0]
    pts = [rng.standard_normal((5, 100)) for _ in range(2)]
    ds = SnapshotDataset(
        schedule=__import__("mmsbm.bridge", fromlist=["normalize_schedule"])
        .normalize_schedule(sched_times),
        marginals=[EmpiricalMeasure(p) for p in pts],
        roles=["train", "train"])
    p = tmp_path / "wide.csv"
    write_csv(ds, p)
    back = read_csv(p)
    assert back.dim == 100
    np.testing.assert_array_equal(back.points(1), pts[1])
