"""Command line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import TASKS, ConfigError, ExperimentConfig, default_config
from .kinematics import IKError, solve_ik_arrays
from .pipeline import Pipeline, PipelineError
from .presets import workspace_grid
from .waypoints import MODES

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

TIMING_ROWS = (
    ("network", "Neural network (action prediction)"),
    ("waypoints", "Waypoint generation ({mode})"),
    ("smoothing", "Smoothing (circular blends)"),
    ("ik", "Inverse kinematics solver"),
    ("parameterization", "Time-optimal parameterization"),
    ("simulation", "Trajectory simulation and reward calculation"),
)


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------
# helpers

def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return ExperimentConfig.load(p).validate()
    except ConfigError as exc:
        raise UsageError(f"invalid config {p}: {exc}") from exc


def parse_vector(text: str, dim: int, name: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.replace(" ", "").split(",")])
    except ValueError as exc:
        raise UsageError(f"{name} must be comma-separated numbers, got {text!r}") from exc
    if v.size != dim:
        raise UsageError(f"{name} needs {dim} coordinates, got {v.size}")
    return v


def preflight(pipeline: Pipeline, n: int = 10) -> int:
    """IK sweep over an ``n``-per-axis workspace grid; returns the pose count.

    Raises:
        IKError: on the first unreachable grid pose.
    """
    ws = pipeline.workspace
    P, O = workspace_grid(ws.lower, ws.upper, ws.angle_lower, ws.angle_upper, n)
    try:
        solve_ik_arrays(pipeline.chain, P, O)
    except IKError as exc:
        i = exc.index
        raise IKError(f"preflight: workspace pose {P[i].round(4).tolist()} / {O[i].round(4).tolist()} "
                      f"unreachable (residual {exc.residual:.2e})", exc.residual, i) from exc
    return len(P)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _axis_names(dim: int) -> list[str]:
    return ["x", "y", "z"][:dim]


def dump_path(path, smooth, spacing: float):
    from .blending import equidistant_s

    s = equidistant_s(smooth.length, spacing)
    pos, ori = smooth.sample_arrays(s)
    header = ["s"] + _axis_names(smooth.geometry.dim) + ["roll", "pitch", "yaw"]
    _write_csv(path, header, np.column_stack([s, pos, ori]).tolist())


def dump_waypoints(path, waypoints):
    dim = waypoints[0].dim
    header = ["index"] + _axis_names(dim) + ["roll", "pitch", "yaw"]
    rows = [[i, *w.position.tolist(), *w.orientation.tolist()] for i, w in enumerate(waypoints)]
    _write_csv(path, header, rows)


def dump_trajectory(path, traj):
    n = traj.n_joints
    header = ["t"] + [f"q_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
    _write_csv(path, header, np.column_stack([traj.times, traj.positions, traj.velocities]).tolist())


def dump_episode(path, trace):
    d = trace.plate_positions.shape[1]
    b = trace.ball_positions.shape[1]
    header = (["t"] + [f"plate_{a}" for a in _axis_names(d)] + ["plate_roll", "plate_pitch", "plate_yaw"]
              + [f"ball_{a}" for a in ["x", "y"][:b]] + ["dist"])
    rows = np.column_stack([trace.times, trace.plate_positions, trace.plate_orientations,
                            trace.ball_positions, trace.distances])
    _write_csv(path, header, rows.tolist())


def _print_result(result, out=None):
    fields = {
        "cost": result.cost, "reward": result.reward, "boundary_hit": result.boundary_hit,
        "duration": result.duration, "path_length": result.path_length,
        "max_jerk": list(result.max_jerk), "failed": result.failed,
    }
    print(json.dumps(fields), file=out or sys.stdout)


def _action_from_args(args, pipeline: Pipeline, start, end):
    n = pipeline.action_size
    if args.checkpoint:
        from .learning import load_checkpoint, normalize_state, policy_forward

        params, _, _ = load_checkpoint(args.checkpoint, pipeline.config)
        return np.clip(policy_forward(params, normalize_state(start, end, pipeline.regions))[0][0], -1, 1)
    if args.action_file:
        text = Path(args.action_file).read_text().replace(",", " ").split()
        a = np.array([float(x) for x in text])
        if a.size != n:
            raise UsageError(f"action file has {a.size} values, the generator needs {n}")
        return a
    if args.action == "zero":
        return np.zeros(n)
    if args.action == "random":
        return np.random.default_rng(args.seed).uniform(-1.0, 1.0, n)
    raise UsageError(f"unknown action source {args.action!r}")


# ----------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    from .learning import Trainer

    cfg = load_config(args.config)
    if args.total_episodes is not None:
        cfg.trainer.total_episodes = args.total_episodes
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    out = Path(args.output_dir or cfg.output_dir)
    pipeline = Pipeline(cfg)
    if not args.skip_preflight:
        n = preflight(pipeline)
        print(f"preflight: {n} workspace poses reachable")
    trainer = Trainer(cfg, out, resume=not args.no_resume, progress=_progress_printer())
    history = trainer.train()
    last = history[-1]
    print(f"done: {trainer.episodes} episodes, hit rate {last.hit_rate:.3f}, mean reward {last.mean_reward:+.4f}")
    print(f"metrics: {out / 'metrics.csv'}\ncheckpoint: {out / 'checkpoint.npz'}")
    return EXIT_OK


def _progress_printer():
    t0 = time.perf_counter()

    def show(m):
        print(f"[{time.perf_counter() - t0:8.1f}s] samples {m.samples:7d}  hit {m.hit_rate:.3f}  "
              f"reward {m.mean_reward:+.4f}  length {m.mean_length:.3f} m  time {m.mean_time:.3f} s", flush=True)

    return show


def cmd_eval(args) -> int:
    from .learning import evaluate, load_checkpoint
    from .learning.trainer import CheckpointMismatch

    cfg = load_config(args.config)
    pipeline = Pipeline(cfg)
    try:
        params, meta, _ = load_checkpoint(args.checkpoint, cfg)
    except CheckpointMismatch as exc:
        raise UsageError(f"refusing to evaluate: {exc}") from exc
    except FileNotFoundError as exc:
        raise UsageError(f"checkpoint not found: {args.checkpoint}") from exc
    metrics, results = evaluate(params, pipeline, args.n, samples=meta["episodes"], return_results=True)
    if args.n == 1:
        _print_result(results[0])
    row = metrics.row()
    row["failures"] = metrics.failures
    print(json.dumps(row))
    if args.output:
        _write_csv(args.output, list(row), [list(row.values())])
    return EXIT_OK


def cmd_rollout(args) -> int:
    cfg = load_config(args.config)
    pipeline = Pipeline(cfg)
    d = pipeline.workspace.dim
    start = pipeline.pose(parse_vector(args.start, d, "--start"))
    end = pipeline.pose(parse_vector(args.end, d, "--end"))
    for name, p in (("--start", start), ("--end", end)):
        if not pipeline.workspace.contains(p.position):
            raise UsageError(f"{name} {p.position.tolist()} lies outside the workspace")
    t0 = time.perf_counter()
    action = _action_from_args(args, pipeline, start, end)
    t_net = time.perf_counter() - t0
    want_trace = bool(args.dump_episode)
    runs = []
    for _ in range(max(1, args.repeat)):
        try:
            out = pipeline.episode(start, end, action, trace=want_trace)
        except PipelineError as exc:
            print(f"error: pipeline stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
            return EXIT_RUNTIME
        runs.append(out.timings)
    _print_result(out.result)
    if args.dump_waypoints:
        dump_waypoints(args.dump_waypoints, out.waypoints)
    if args.dump_path:
        dump_path(args.dump_path, out.path, cfg.path.spacing)
    if args.dump_traj:
        dump_trajectory(args.dump_traj, out.trajectory)
    if args.dump_episode:
        dump_episode(args.dump_episode, out.trace)
    if args.timing:
        print(format_timing(runs, t_net if args.checkpoint else None, cfg.generator.mode))
    return EXIT_OK


def timing_table(runs: list[dict], t_net: float | None = None) -> dict[str, tuple[float, float, float]]:
    """Per-stage ``(median, min, max)`` in milliseconds; simulation includes the reward."""
    table = {}
    for key, _ in TIMING_ROWS:
        if key == "network":
            if t_net is not None:
                table[key] = (t_net * 1e3,) * 3
            continue
        vals = np.array([r[key] + (r.get("reward", 0.0) if key == "simulation" else 0.0) for r in runs]) * 1e3
        table[key] = (float(np.median(vals)), float(vals.min()), float(vals.max()))
    return table


def format_timing(runs: list[dict], t_net: float | None, mode: str) -> str:
    names = {"truerma": "TrueRMA", "trueabs": "TrueAbs", "truerel": "TrueRel"}
    table = timing_table(runs, t_net)
    lines = [f"{'System component':<46} {'median ms':>10} {'min ms':>9} {'max ms':>9}", "-" * 77]
    for key, label in TIMING_ROWS:
        if key in table:
            med, lo, hi = table[key]
            lines.append(f"{label.format(mode=names.get(mode, mode)):<46} {med:>10.3f} {lo:>9.3f} {hi:>9.3f}")
    lines.append(f"({len(runs)} run{'s' if len(runs) != 1 else ''}; single process)")
    return "\n".join(lines)


def cmd_export_path(args) -> int:
    cfg = load_config(args.config)
    pipeline = Pipeline(cfg)
    d = pipeline.workspace.dim
    start = pipeline.pose(parse_vector(args.start, d, "--start"))
    end = pipeline.pose(parse_vector(args.end, d, "--end"))
    action = _action_from_args(args, pipeline, start, end)
    try:
        out = pipeline.run(start, end, action)
    except PipelineError as exc:
        print(f"error: pipeline stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    dump_path(args.output, out.path, args.spacing or cfg.path.spacing)
    print(f"wrote {args.output} (length {out.path.length:.4f} m)")
    return EXIT_OK


def _strip_for_compare(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    for key in ("output_dir", "seed", "workers"):
        d.pop(key)
    d["generator"].pop("mode")
    d["generator"].pop("rel_max_step")
    return d


def cmd_compare(args) -> int:
    from .learning import Trainer, samples_to_threshold

    cfgs = [load_config(p) for p in args.configs]
    if len(cfgs) != 3:
        raise UsageError("compare needs exactly three configs (TrueRMA, TrueAbs, TrueRel)")
    base = _strip_for_compare(cfgs[0])
    for p, c in zip(args.configs[1:], cfgs[1:]):
        if _strip_for_compare(c) != base:
            raise UsageError(f"{p} differs from {args.configs[0]} in more than the generator mode")
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds if args.seeds else [cfgs[0].seed]
    threshold = args.threshold if args.threshold is not None else cfgs[0].evaluation.hit_threshold
    merged = []
    summary = []
    for seed in seeds:
        for slot, cfg in enumerate(cfgs):
            cfg = ExperimentConfig.from_dict(cfg.to_dict())
            cfg.seed = seed
            if args.total_episodes is not None:
                cfg.trainer.total_episodes = args.total_episodes
            if args.workers is not None:
                cfg.workers = args.workers
            label = f"{slot}-{cfg.generator.mode}"
            run_dir = out / f"seed{seed}" / label
            print(f"== seed {seed}: {cfg.generator.mode} -> {run_dir}", flush=True)
            if slot == 0 and not args.skip_preflight:
                preflight(Pipeline(cfg))
            history = Trainer(cfg, run_dir, resume=not args.no_resume, progress=_progress_printer()).train()
            for m in history:
                merged.append([seed, slot, cfg.generator.mode, *m.row().values()])
            last = history[-1]
            summary.append({
                "seed": seed, "slot": slot, "mode": cfg.generator.mode,
                "samples_to_threshold": samples_to_threshold(history, threshold),
                "final_hit_rate": last.hit_rate, "final_mean_reward": last.mean_reward,
                "final_mean_length": last.mean_length, "final_mean_time": last.mean_time,
            })
    _write_csv(out / "compare.csv", ["seed", "slot", "mode", "samples", "hit_rate", "mean_reward",
                                     "mean_length", "mean_time"], merged)
    (out / "summary.json").write_text(json.dumps({"threshold": threshold, "runs": summary}, indent=2))
    print(f"\nsamples to hit rate <= {threshold:g}:")
    for s in summary:
        stt = s["samples_to_threshold"]
        print(f"  seed {s['seed']}  {s['mode']:<8} {('never' if stt is None else stt):>8}  "
              f"final hit {s['final_hit_rate']:.3f}  reward {s['final_mean_reward']:+.4f}  "
              f"length {s['final_mean_length']:.3f} m")
    print(f"merged curves: {out / 'compare.csv'}")
    return EXIT_OK


def cmd_preflight(args) -> int:
    cfg = load_config(args.config)
    n = preflight(Pipeline(cfg), args.grid)
    print(f"preflight ok: {n} workspace poses reachable")
    return EXIT_OK


# ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="truerma", description=__doc__.splitlines()[0])
    parser.add_argument("--print-defaults", action="store_true", help="print the default config as YAML and exit")
    parser.add_argument("--task", choices=TASKS, default="ball2d", help="task for --print-defaults")
    parser.add_argument("--mode", choices=MODES, default="truerma", help="generator mode for --print-defaults")
    parser.add_argument("--chain", choices=("robot", "identity"), default="robot",
                        help="chain for --print-defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--total-episodes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-resume", action="store_true", help="start fresh even if a checkpoint exists")
    p.add_argument("--skip-preflight", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with mean actions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("-n", type=int, default=500)
    p.add_argument("--output", help="write the metrics row as CSV")
    p.set_defaults(func=cmd_eval)

    def action_args(q):
        q.add_argument("--start", required=True, help="comma-separated start position")
        q.add_argument("--end", required=True, help="comma-separated end position")
        q.add_argument("--action", choices=("zero", "random"), default="zero")
        q.add_argument("--action-file", help="whitespace or comma separated action values")
        q.add_argument("--checkpoint", help="use the policy mean from this checkpoint")
        q.add_argument("--seed", type=int, default=0, help="seed for --action random")

    p = sub.add_parser("rollout", help="run one pipeline pass")
    p.add_argument("config")
    action_args(p)
    p.add_argument("--timing", action="store_true", help="print per-stage wall-clock times")
    p.add_argument("--repeat", type=int, default=1, help="repeat the pass for timing statistics")
    p.add_argument("--dump-waypoints")
    p.add_argument("--dump-path")
    p.add_argument("--dump-traj")
    p.add_argument("--dump-episode")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("compare", help="train TrueRMA, TrueAbs and TrueRel with shared seeds")
    p.add_argument("configs", nargs=3)
    p.add_argument("--output-dir", default="runs/compare")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--threshold", type=float)
    p.add_argument("--total-episodes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.add_argument("--skip-preflight", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-path", help="write the smoothed Cartesian path as CSV")
    p.add_argument("config")
    action_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--spacing", type=float)
    p.set_defaults(func=cmd_export_path)

    p = sub.add_parser("preflight", help="check IK reachability over the workspace grid")
    p.add_argument("config")
    p.add_argument("--grid", type=int, default=10)
    p.set_defaults(func=cmd_preflight)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.print_defaults:
        cfg = default_config(args.task, args.mode, None if args.chain == "robot" else "identity")
        sys.stdout.write(cfg.to_yaml())
        return EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PipelineError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
