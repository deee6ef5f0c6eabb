"""Command-line pipeline: demo-bridge, train, evaluate, ablate.

    mmsbm <command> --config cfg.json [--seed N] [--threads N] [--out DIR]

Every command is reproducible from (config, seed); emitted artifacts carry
the config hash in a leading comment.  Exit codes: 0 success, 2 config or
usage error, 3 numerical error, 4 training abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bridge import lambda_vector, normalize_schedule
from .config import load_config
from .data import (SnapshotDataset, generate_gaussian_mixture_sequence,
                   generate_lotka_volterra, generate_vortex_2d, read_csv)
from .errors import (ConfigError, MMSBMError, NumericalError, ParseError,
                     ScheduleError, SimulationError, TrainingError)
from .matching import (TrainConfig, config_hash, load_checkpoint,
                       save_checkpoint, train)
from .metrics import mmd_rbf, sliced_wasserstein, wasserstein
from .net import DriftNet
from .plot import line_chart_svg, trajectory_svg
from .runtime import chunked_map, set_threads, threads_from_env
from .sde import bridge_sim_drift, euler_maruyama


def _comment(cfg: dict, seed: int) -> str:
    return f"mmsbm config={config_hash(cfg)} seed={seed}"


def _load_dataset(cfg: dict, seed: int) -> SnapshotDataset:
    data = cfg["data"]
    gen, path = data["generator"], data["path"]
    if (gen is None) == (path is None):
        raise ConfigError("data: exactly one of data.generator / data.path required")
    if path is not None:
        return read_csv(path)
    rng = np.random.default_rng(seed)
    p = data["params"]
    if gen == "lotka_volterra":
        return generate_lotka_volterra(
            rates=tuple(p["rates"]), ic=tuple(p["ic"]), ic_jitter=p["ic_jitter"],
            n_samples=data["n_samples"], times=data["times"],
            obs_noise=p["obs_noise"], rng=rng)
    if gen == "vortex":
        return generate_vortex_2d(
            n_samples=data["n_samples"], times=data["times"],
            angular_speed=p["angular_speed"], noise=p["noise"], arc=p["arc"],
            radius=tuple(p["radius"]), rng=rng)
    return generate_gaussian_mixture_sequence(p["spec"], rng=rng)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    kw = dict(cfg["train"])
    kw["seed"] = seed
    return TrainConfig(**kw).validate()


def _heldout_normalized(dataset: SnapshotDataset):
    """Heldout raw times mapped onto the training-normalized axis."""
    tr = dataset.train_schedule()
    return [(i, float(tr.to_normalized(dataset.schedule.raw_times[i])))
            for i in dataset.indices("heldout")]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_demo_bridge(cfg: dict, out: Path, seed: int) -> int:
    br = cfg["bridge"]
    if br["pinned_points"] is None:
        raise ConfigError("bridge.pinned_points: required for demo-bridge")
    points = np.asarray(br["pinned_points"], dtype=float)
    n_seg, d = points.shape[0] - 1, points.shape[1]
    v0 = np.zeros(d) if br["v0"] is None else np.asarray(br["v0"], dtype=float)
    if v0.shape != (d,):
        raise ConfigError("bridge.v0: dimension must match the pinned points")
    m_paths, steps = br["n_paths"], br["steps_per_segment"]
    rng = np.random.default_rng(seed)

    if m_paths > 0:
        drift = bridge_sim_drift(points[None], steps)
        traj = euler_maruyama(drift, np.tile(points[0], (m_paths, 1)),
                              np.tile(v0, (m_paths, 1)), n_seg, br["sigma"],
                              rng, steps_per_segment=steps, record="all")
        times, X, V = traj.times, traj.X, traj.V
    else:
        times = np.zeros(0)
        X = V = np.zeros((0, 0, d))

    note = _comment(cfg, seed)
    lines = [f"# {note}",
             "path,time," + ",".join(f"x_{j}" for j in range(d))
             + "," + ",".join(f"v_{j}" for j in range(d))]
    for p in range(m_paths):
        for k in range(0, len(times), max(1, len(times) // 400)):
            row = [str(p), f"{times[k]:.6g}"]
            row += [f"{v:.8g}" for v in X[k, p]] + [f"{v:.8g}" for v in V[k, p]]
            lines.append(",".join(row))
    (out / "trajectories.csv").write_text("\n".join(lines) + "\n")

    if d >= 2:
        curves = [X[:, p, :2] for p in range(m_paths)]
        markers = [(points[:, :2], "#000", 5)]
        xlab, ylab = "x_0", "x_1"
    else:
        curves = [np.stack([times, X[:, p, 0]], axis=1) for p in range(m_paths)]
        markers = [(np.stack([np.arange(n_seg + 1.0), points[:, 0]], axis=1),
                    "#000", 5)]
        xlab, ylab = "t", "x"
    (out / "plot.svg").write_text(trajectory_svg(
        curves, markers, title=f"conditional bridges (sigma={br['sigma']})",
        xlabel=xlab, ylabel=ylab, meta=note))
    return 0


def cmd_train(cfg: dict, out: Path, seed: int) -> int:
    dataset = _load_dataset(cfg, seed)
    tc = _train_config(cfg, seed)
    note = _comment(cfg, seed)
    try:
        net, log = train(dataset.train_points(), tc)
    except TrainingError as exc:
        log = getattr(exc, "log", None)
        if log is not None and log.rows:
            log.to_csv(out / "log.csv", header_comment=note + " (aborted)")
        raise
    log.to_csv(out / "log.csv", header_comment=note)
    start = np.concatenate([log.start_x0, log.start_v0], axis=1)
    save_checkpoint(out / "checkpoint.bin", net, tc,
                    outer_iteration=tc.outer_iterations,
                    start_ensemble=start, coupling=log.final_coupling,
                    extra={"train_times_raw":
                           [dataset.schedule.raw_times[i]
                            for i in dataset.indices("train")],
                           "plateau_iteration": log.plateau_iteration,
                           "config_note": note})
    return 0


def _simulate_model(net: DriftNet, doc: dict, n_paths: int, record_times,
                    n_seg: int, sigma: float, steps: int, seed: int):
    """Evaluation-grade simulation with EMA weights, chunked for threads."""
    ens = doc.get("start_ensemble")
    d = net.dim
    if ens is None:
        starts = None
    else:
        starts = np.asarray(ens, dtype=float)

    def drift(t, X, V):
        return net.forward(t, X, V, shadow=True)

    def run(a, b, rng):
        n = b - a
        if starts is None:
            x0 = np.zeros((n, d))
            v0 = rng.standard_normal((n, d))
        else:
            rows = rng.integers(0, len(starts), n)
            x0, v0 = starts[rows, :d], starts[rows, d:]
        traj = euler_maruyama(drift, x0, v0, n_seg, sigma, rng,
                              steps_per_segment=steps, record=record_times)
        return np.transpose(traj.X, (1, 0, 2))      # (n, T, d)

    return chunked_map(run, n_paths, seed)


def cmd_evaluate(cfg: dict, out: Path, seed: int, checkpoint: Path) -> int:
    net, doc = load_checkpoint(checkpoint)
    dataset = _load_dataset(cfg, seed)
    if dataset.dim != net.dim:
        raise ConfigError(
            f"data: dimension {dataset.dim} does not match checkpoint ({net.dim})")
    train_idx = dataset.indices("train")
    n_seg = len(train_idx) - 1
    heldout = _heldout_normalized(dataset)
    record_times = sorted([float(n) for n in range(n_seg + 1)]
                          + [t for _, t in heldout])
    ev = cfg["eval"]
    sigma = doc["config"]["sigma"]
    paths = _simulate_model(net, doc, ev["n_paths"], np.asarray(record_times),
                            n_seg, sigma, ev["steps_per_segment"], seed)

    rng = np.random.default_rng(seed + 1)
    rows = []

    def scores(model_pts, data_pts, tag, t_raw, t_norm):
        k = min(len(model_pts), len(data_pts))
        sel = rng.choice(len(model_pts), size=k, replace=False)
        mp, dp = model_pts[sel], data_pts[:k]
        vals = {}
        if "w1" in ev["metrics"]:
            vals["w1"] = wasserstein(mp, dp, order=1)
        if "w2" in ev["metrics"]:
            vals["w2"] = wasserstein(mp, dp, order=2)
        if "swd" in ev["metrics"]:
            vals["swd"] = sliced_wasserstein(mp, dp, ev["num_projections"],
                                             rng=np.random.default_rng(seed + 2))
        if "mmd" in ev["metrics"]:
            vals["mmd"] = mmd_rbf(mp, dp)
        for m, v in vals.items():
            rows.append((m, tag, t_raw, t_norm, v))
        return vals

    t_of = {float(t): i for i, t in enumerate(record_times)}
    rest = {m: [] for m in ev["metrics"]}
    for idx, t_norm in heldout:
        model = paths[:, t_of[t_norm]]
        scores(model, dataset.points(idx), "heldout",
               dataset.schedule.raw_times[idx], t_norm)
    for k, idx in enumerate(train_idx):
        model = paths[:, t_of[float(k)]]
        vals = scores(model, dataset.points(idx), "train",
                      dataset.schedule.raw_times[idx], float(k))
        for m, v in vals.items():
            rest[m].append(v)
    for m in ev["metrics"]:
        rows.append((m, "rest_mean", "", "", float(np.mean(rest[m]))))

    note = _comment(cfg, seed)
    lines = [f"# {note}", "metric,role,time_raw,time_normalized,value"]
    for m, tag, t_raw, t_norm, v in rows:
        lines.append(f"{m},{tag},{t_raw},{t_norm},{v:.8g}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")

    if ev["plot"] and dataset.dim >= 2:
        sample = paths[: min(40, len(paths))]
        curves = [sample[i, :, :2] for i in range(len(sample))]
        markers = [(dataset.points(i)[:, :2], "#000", 2) for i in train_idx]
        markers += [(dataset.points(i)[:, :2], "#c22", 2)
                    for i in dataset.indices("heldout")]
        (out / "plot.svg").write_text(trajectory_svg(
            curves, markers, title="model trajectories vs snapshots",
            xlabel="x_0", ylabel="x_1", meta=note))
    return 0


def _aligned_tuples(dataset: SnapshotDataset):
    """Sample-id-aligned pinned tuples over the training marginals."""
    pts = dataset.train_points()
    k = min(len(p) for p in pts)
    return np.stack([p[:k] for p in pts], axis=1)


def cmd_ablate(cfg: dict, out: Path, seed: int, axis: str) -> int:
    if axis not in ("pins", "sigma"):
        raise ConfigError(f"--axis: must be 'pins' or 'sigma', got {axis!r}")
    dataset = _load_dataset(cfg, seed)
    ev = cfg["eval"]
    n_seg = len(dataset.indices("train")) - 1
    heldout = _heldout_normalized(dataset)
    tuples = _aligned_tuples(dataset)
    sigma0 = cfg["bridge"]["sigma"]
    n_paths = ev["ablate_n_paths"]
    steps = ev["steps_per_segment"]

    if axis == "pins":
        values = [int(v) for v in (ev["ablate_values"] or range(1, n_seg + 1))]
        bad = [v for v in values if not 1 <= v <= n_seg]
        if bad:
            raise ConfigError(f"eval.ablate_values: pins values {bad} outside 1..{n_seg}")
    else:
        values = [float(v) for v in (ev["ablate_values"] or (0.1, 0.3, 1.0))]
        if any(v <= 0 for v in values):
            raise ConfigError("eval.ablate_values: sigma values must be positive")

    results = []
    for val in values:
        if ev["ablate_mode"] == "retrain":
            tc = _train_config(cfg, seed)
            if axis == "pins":
                tc.truncation_k = int(val)
            else:
                tc.sigma = float(val)
            net, log = train(dataset.train_points(), tc)
            doc = {"config": {"sigma": tc.sigma},
                   "start_ensemble": np.concatenate(
                       [log.start_x0, log.start_v0], axis=1)}
            record = np.asarray(sorted(t for _, t in heldout))
            paths = _simulate_model(net, doc, n_paths, record, n_seg,
                                    tc.sigma, steps, seed)
            t_of = {float(t): i for i, t in enumerate(record)}
        else:
            trunc = int(val) if axis == "pins" else None
            sig = sigma0 if axis == "pins" else float(val)
            record = np.asarray(sorted(t for _, t in heldout))

            def run(a, b, rng, trunc=trunc, sig=sig):
                rows = rng.integers(0, len(tuples), b - a)
                sel = tuples[rows]
                drift = bridge_sim_drift(sel, steps, truncation_k=trunc)
                traj = euler_maruyama(drift, sel[:, 0], rng.standard_normal(sel[:, 0].shape),
                                      n_seg, sig, rng, steps_per_segment=steps,
                                      record=record)
                return np.transpose(traj.X, (1, 0, 2))

            paths = chunked_map(run, n_paths, seed)
            t_of = {float(t): i for i, t in enumerate(record)}

        rng = np.random.default_rng(seed + 3)
        w2s = []
        for idx, t_norm in heldout:
            data = dataset.points(idx)
            model = paths[:, t_of[t_norm]]
            k = min(len(model), len(data))
            sel = rng.choice(len(model), size=k, replace=False)
            w2s.append(wasserstein(model[sel], data[:k], order=2))
        results.append((val, float(np.mean(w2s))))

    note = _comment(cfg, seed)
    lines = [f"# {note}", f"{axis},mean_heldout_w2"]
    lines += [f"{v},{w:.8g}" for v, w in results]
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")

    lam = lambda_vector(10)
    lam_lines = [f"# {note}", "entry,lambda,abs_lambda"]
    lam_lines += [f"{j + 1},{l:.10g},{abs(l):.10g}" for j, l in enumerate(lam)]
    (out / "lambda_decay.csv").write_text("\n".join(lam_lines) + "\n")

    (out / "plot.svg").write_text(line_chart_svg(
        [(f"mean heldout W2 vs {axis}", [r[0] for r in results],
          [r[1] for r in results])],
        title=f"ablation over {axis}", xlabel=axis, ylabel="mean heldout W2",
        meta=note))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmsbm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("demo-bridge", "train", "evaluate", "ablate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default="out")
        if name == "evaluate":
            sp.add_argument("--checkpoint", default=None)
        if name == "ablate":
            sp.add_argument("--axis", default="pins")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        set_threads(threads_from_env(args.threads))
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else cfg["train"]["seed"]
        if args.command == "demo-bridge":
            return cmd_demo_bridge(cfg, out, seed)
        if args.command == "train":
            return cmd_train(cfg, out, seed)
        if args.command == "evaluate":
            ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
            if not ckpt.exists():
                raise ConfigError(f"checkpoint not found: {ckpt}")
            return cmd_evaluate(cfg, out, seed, ckpt)
        return cmd_ablate(cfg, out, seed, args.axis)
    except (ConfigError, ParseError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, SimulationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 4
    except MMSBMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
