"""Drift network, optimizer, matching loss, and the training loop."""

import numpy as np
import pytest

from mmsbm.errors import ConfigError, TrainingError
from mmsbm.matching import (TrainConfig, _sample_times, load_checkpoint,
                            matching_loss, save_checkpoint, train)
from mmsbm.net import AdamW, DriftNet
from mmsbm.sde import refine_velocities


def test_loss_zero_on_perfect_net():
    net = DriftNet(dim=2, width=16, depth=1, seed=0)   # zero head -> output 0
    t = np.linspace(0.1, 0.9, 7)
    X = np.random.default_rng(0).standard_normal((7, 2))
    V = np.zeros((7, 2))
    assert matching_loss(net, t, X, V, np.zeros((7, 2))) == 0.0


def test_loss_zero_net_unit_targets():
    net = DriftNet(dim=2, width=16, depth=1, seed=0)
    t = np.full(5, 0.3)
    Z = np.zeros((5, 2))
    assert matching_loss(net, t, Z, Z, np.ones((5, 2))) == pytest.approx(2.0)


def test_loss_rejects_nonfinite():
    net = DriftNet(dim=1, width=8, depth=1, seed=0)
    with pytest.raises(TrainingError):
        matching_loss(net, np.array([0.5]), np.array([[0.0]]),
                      np.array([[0.0]]), np.array([[np.nan]]))


def test_gradient_check_finite_differences():
    rng = np.random.default_rng(1)
    net = DriftNet(dim=2, width=8, depth=2, n_freqs=3, span=2.0, seed=3)
    for k, p in net.params.items():           # break the zero head symmetry
        net.params[k] = rng.standard_normal(p.shape) * 0.3
    B = 5
    t = rng.uniform(0, 2, B)
    X, V = rng.standard_normal((B, 2)), rng.standard_normal((B, 2))
    tgt = rng.standard_normal((B, 2))
    _, grads = net.loss_and_grad(t, X, V, tgt)

    eps = 1e-6
    checked = 0
    for name in sorted(net.params):
        flat = net.params[name].reshape(-1)
        for j in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            orig = flat[j]
            flat[j] = orig + eps
            lp = matching_loss(net, t, X, V, tgt)
            flat[j] = orig - eps
            lm = matching_loss(net, t, X, V, tgt)
            flat[j] = orig
            fd = (lp - lm) / (2 * eps)
            an = grads[name].reshape(-1)[j]
            assert an == pytest.approx(fd, rel=1e-4, abs=1e-8), name
            checked += 1
    assert checked >= 10


def test_forward_deterministic_and_batched():
    net = DriftNet(dim=3, width=16, depth=2, seed=5)
    rng = np.random.default_rng(2)
    for k, p in net.params.items():
        net.params[k] = rng.standard_normal(p.shape) * 0.2
    t = rng.uniform(0, 1, 4)
    X, V = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    a1 = net.forward(t, X, V)
    a2 = net.forward(t, X, V)
    np.testing.assert_array_equal(a1, a2)
    assert a1.shape == (4, 3)
    # scalar time broadcasts
    a3 = net.forward(0.5, X, V)
    a4 = net.forward(np.full(4, 0.5), X, V)
    np.testing.assert_allclose(a3, a4)


def test_ema_shadow():
    net = DriftNet(dim=1, width=8, depth=1, seed=0, ema_decay=0.5)
    net.params["b_out"][:] = 2.0
    net.ema_update()
    assert net.shadow["b_out"][0] == pytest.approx(0.5 * 0.0 + 0.5 * 2.0)

    net0 = DriftNet(dim=1, width=8, depth=1, seed=0, ema_decay=0.0)
    net0.params["b_out"][:] = 3.0
    net0.ema_update()
    assert net0.shadow["b_out"][0] == 3.0      # decay 0: shadow == weights


def test_adamw_decoupled_decay():
    net = DriftNet(dim=1, width=4, depth=1, seed=0)
    net.params["b_out"][:] = 1.0
    opt = AdamW(net.params, lr=0.1, weight_decay=0.5)
    opt.step(net.params, {"b_out": np.zeros(1)})
    assert net.params["b_out"][0] == pytest.approx(1.0 - 0.1 * 0.5 * 1.0)


def test_target_independence():
    net = DriftNet(dim=2, width=8, depth=1, seed=1)
    rng = np.random.default_rng(3)
    t = rng.uniform(0, 1, 6)
    X, V = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    tgt = rng.standard_normal((6, 2))
    l1, g1 = net.loss_and_grad(t, X, V, tgt)
    l2, g2 = net.loss_and_grad(t, X, V, tgt.copy())
    assert l1 == l2
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


def test_refine_updates_no_parameters():
    net = DriftNet(dim=2, width=16, depth=2, seed=0)
    before = net.param_hash()
    rng = np.random.default_rng(0)
    points = rng.uniform(-1, 1, (8, 3, 2))
    refine_velocities(points, rng.standard_normal((8, 2)), rounds=2, sigma=0.3,
                      rng=rng, steps_per_segment=50)
    assert net.param_hash() == before


def test_time_sampling_covers_segments():
    rng = np.random.default_rng(4)
    n_seg = 5
    t = _sample_times(rng, n_seg, 50 * n_seg)
    hist, _ = np.histogram(t, bins=n_seg, range=(0, n_seg))
    assert (hist > 0).all()
    assert t.max() < n_seg and t.min() >= 0


def _toy_config(**kw):
    base = dict(sigma=0.3, batch_size=16, learning_rate=1e-3,
                outer_iterations=2, inner_steps=40, refinement_rounds=2,
                seed=0, width=16, depth=1, time_freqs=4,
                steps_per_segment=40, pool_cap=32)
    base.update(kw)
    return TrainConfig(**base)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        _toy_config(batch_size=0).validate()
    with pytest.raises(ConfigError):
        _toy_config(truncation_k=0).validate()
    with pytest.raises(ConfigError):
        _toy_config(ema_decay=1.0).validate()


def test_train_rejects_small_marginals():
    rng = np.random.default_rng(0)
    data = [rng.standard_normal((8, 2)) for _ in range(3)]
    with pytest.raises(ConfigError):
        train(data, _toy_config(batch_size=16))


def test_train_point_masses_learns_zero_drift():
    data = [np.zeros((24, 2)) for _ in range(3)]
    net, log = train(data, _toy_config(outer_iterations=2, inner_steps=30))
    a = net.forward(np.array([1.0]), np.zeros((1, 2)), np.zeros((1, 2)),
                    shadow=True)
    assert np.linalg.norm(a) <= 1e-2
    assert len(log.rows) == 2
    assert log.final_coupling.shape == (24, 3, 2)


def test_train_determinism():
    rng = np.random.default_rng(5)
    data = [np.array([0.0, 0.0]) + 0.1 * rng.standard_normal((24, 2)),
            np.array([1.0, 0.5]) + 0.1 * rng.standard_normal((24, 2))]
    _, log1 = train(data, _toy_config())
    _, log2 = train(data, _toy_config())
    assert log1.losses == log2.losses
    for r1, r2 in zip(log1.rows, log2.rows):
        assert r1["w2"] == r2["w2"]


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    data = [0.1 * rng.standard_normal((24, 2)),
            np.array([1.0, 0.0]) + 0.1 * rng.standard_normal((24, 2))]
    cfg = _toy_config()
    net, log = train(data, cfg)
    path = tmp_path / "checkpoint.bin"
    start = np.concatenate([log.start_x0, log.start_v0], axis=1)
    save_checkpoint(path, net, cfg, outer_iteration=2, start_ensemble=start,
                    coupling=log.final_coupling)
    net2, doc = load_checkpoint(path)
    for k in net.params:
        np.testing.assert_array_equal(net.params[k], net2.params[k])
        np.testing.assert_array_equal(net.shadow[k], net2.shadow[k])
    assert doc["outer_iteration"] == 2
    assert doc["config"]["batch_size"] == cfg.batch_size
    np.testing.assert_array_equal(doc["start_ensemble"], start)
    t = np.array([0.3]); X = np.array([[0.2, -0.1]]); V = np.array([[0.0, 0.4]])
    np.testing.assert_array_equal(net.forward(t, X, V, shadow=True),
                                  net2.forward(t, X, V, shadow=True))


def test_checkpoint_rejects_foreign_files(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_text('{"hello": 1}')
    with pytest.raises(ConfigError):
        load_checkpoint(p)
