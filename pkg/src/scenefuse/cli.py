"""Command-line entry points: run, eval, synth, sweep.

Exit codes, shared by every subcommand:

  0  success
  1  any other pipeline failure
  2  unreadable or corrupt input/output file (I/O and stream-format errors)
  3  configuration problem (bad config file, bad spec file, bad flag value)
  4  evaluation contract violation (e.g. vocabulary mismatch)
  5  scene generation failure

``run`` streams a JSON Lines detection file through the fusion engine a
frame at a time and writes the final graph as JSON. By default everything
happens on one thread; ``pipeline_split`` in the config moves parsing to a
reader thread connected by a bounded in-order queue. ``--bench`` collects
per-frame wall times for the parse, lift, and merge stages separately and
writes mean/median/p99 per stage plus end-to-end FPS next to the output
graph.

``eval`` matches a saved graph against a ground-truth scene and prints the
five headline recall numbers; ``synth`` materializes a synthetic dataset
from a scene spec; ``sweep`` re-runs the pipeline at several merge
thresholds and prints one recall row per threshold.

The environment variable SCENEFUSE_LOG sets the log level (DEBUG, INFO,
WARNING, ERROR); the default is WARNING.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import queue
import sys
import tempfile
import threading
import time
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    EvaluationError,
    GenerationError,
    SceneFuseError,
    StreamFormatError,
)
from .evaluation import (
    compute_recalls,
    load_ground_truth,
    match_objects,
    report_to_obj,
)
from .fusion import FusionConfig, process_frame
from .graph import ClassVocabulary, GlobalSSG, load_graph, save_graph, to_dot
from .streams import DepthCache, RunConfig, load_run_config, parse_frame_stream
from .synthetic import load_scene_spec, scene_vocab, synthesize_dataset

log = logging.getLogger(__name__)

QUEUE_DEPTH = 8


def _configure_logging() -> None:
    name = os.environ.get("SCENEFUSE_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# frame sources: both yield (parse_seconds, frame) so bench can cost the
# parse stage separately from lift and merge
# ---------------------------------------------------------------------------


def _serial_frames(path):
    it = parse_frame_stream(path)
    while True:
        t0 = time.perf_counter()
        try:
            frame = next(it)
        except StopIteration:
            return
        yield time.perf_counter() - t0, frame


def _threaded_frames(path):
    """Reader thread parses; the consumer sees frames in stream order."""
    q: queue.Queue = queue.Queue(maxsize=QUEUE_DEPTH)
    done = object()

    def reader():
        try:
            it = parse_frame_stream(path)
            while True:
                t0 = time.perf_counter()
                try:
                    frame = next(it)
                except StopIteration:
                    break
                q.put((time.perf_counter() - t0, frame))
        except BaseException as exc:  # re-raised on the consumer side
            q.put(exc)
            return
        q.put(done)

    t = threading.Thread(target=reader, name="scenefuse-reader", daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is done:
            break
        if isinstance(item, BaseException):
            raise item
        yield item
    t.join()


# ---------------------------------------------------------------------------
# vocabulary plumbing
# ---------------------------------------------------------------------------


def _vocab_for_run(cfg: RunConfig, g: GlobalSSG) -> ClassVocabulary:
    """Config-supplied vocabulary, or generic names wide enough for the graph."""
    if cfg.vocab_objects is not None and cfg.vocab_predicates is not None:
        return ClassVocabulary(tuple(cfg.vocab_objects), tuple(cfg.vocab_predicates))
    n_cls = 1 + max((n.class_id for n in g.nodes.values()), default=-1)
    n_pred = 0
    for edge in g.edges.values():
        if edge.votes:
            n_pred = max(n_pred, 1 + max(edge.votes))
    return ClassVocabulary(
        tuple(f"class_{i}" for i in range(n_cls)),
        tuple(f"predicate_{i}" for i in range(n_pred)),
    )


# ---------------------------------------------------------------------------
# bench accounting
# ---------------------------------------------------------------------------


def _stage_stats(seconds: list[float]) -> dict:
    if not seconds:
        return {"mean_ms": 0.0, "p50_ms": 0.0, "p99_ms": 0.0}
    ms = np.asarray(seconds) * 1e3
    return {
        "mean_ms": float(ms.mean()),
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
    }


def _bench_report(parse_s, lift_s, merge_s, n_frames, wall_seconds, skipped) -> dict:
    return {
        "frames": n_frames,
        "skipped_frames": skipped,
        "wall_seconds": wall_seconds,
        "fps": (n_frames / wall_seconds) if wall_seconds > 0 else 0.0,
        "stages": {
            "parse": _stage_stats(parse_s),
            "lift": _stage_stats(lift_s),
            "merge": _stage_stats(merge_s),
        },
    }


def _print_bench(report: dict, out) -> None:
    print(f"frames      {report['frames']}", file=out)
    print(f"wall        {report['wall_seconds']:.3f} s", file=out)
    print(f"fps         {report['fps']:.1f}", file=out)
    print("stage          mean_ms    p50_ms    p99_ms", file=out)
    for name in ("parse", "lift", "merge"):
        s = report["stages"][name]
        print(
            f"{name:<12} {s['mean_ms']:9.4f} {s['p50_ms']:9.4f} {s['p99_ms']:9.4f}",
            file=out,
        )


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _execute_run(cfg: RunConfig) -> tuple[GlobalSSG, ClassVocabulary, dict | None]:
    """Shared engine loop for `run` and `sweep`; returns (graph, vocab, bench)."""
    if cfg.input is None:
        raise ConfigError("no input stream given (flag --input or config key)")
    state = GlobalSSG()
    rng = np.random.default_rng(cfg.seed)
    depth = DepthCache(Path(cfg.input).resolve().parent)
    source = _threaded_frames(cfg.input) if cfg.pipeline_split else _serial_frames(cfg.input)

    parse_s: list[float] = []
    lift_s: list[float] = []
    merge_s: list[float] = []
    n_frames = 0
    skipped = 0
    t_start = time.perf_counter()
    for parse_dt, frame in source:
        res = process_frame(
            frame,
            state,
            cfg.fusion,
            rng=rng,
            depth_provider=depth,
            record_eval_points=cfg.record_eval_points,
        )
        n_frames += 1
        if res.skipped:
            skipped += 1
        if cfg.bench:
            parse_s.append(parse_dt)
            lift_s.append(res.lift_seconds)
            merge_s.append(res.merge_seconds)
    wall = time.perf_counter() - t_start

    bench = None
    if cfg.bench:
        bench = _bench_report(parse_s, lift_s, merge_s, n_frames, wall, skipped)
    vocab = _vocab_for_run(cfg, state)
    return state, vocab, bench


def cmd_run(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.input is not None:
        cfg.input = args.input
    if args.output is not None:
        cfg.output = args.output
    if args.export_dot is not None:
        cfg.export_dot = args.export_dot
    if args.record_eval_points:
        cfg.record_eval_points = True
    if args.bench:
        cfg.bench = True
    if cfg.output is None:
        raise ConfigError("no output path given (flag --output or config key)")

    state, vocab, bench = _execute_run(cfg)
    save_graph(cfg.output, state, vocab)
    if cfg.export_dot:
        Path(cfg.export_dot).write_text(to_dot(state, vocab), encoding="utf-8")
    if bench is not None:
        bench_path = Path(cfg.output).with_suffix(".bench.json")
        with open(bench_path, "w", encoding="utf-8") as f:
            json.dump(bench, f, indent=2)
            f.write("\n")
        _print_bench(bench, sys.stdout)
        print(f"bench report  {bench_path}")
    print(f"graph written {cfg.output} ({len(state.nodes)} nodes, {len(state.edges)} edges)")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_HEADLINE_HEADER = f"{'Rel.R':>8} {'Obj.R':>8} {'Obj.mR':>8} {'Pred.R':>8} {'Pred.mR':>8}"


def _headline_row(report) -> str:
    return (
        f"{report.relationship_recall:8.4f} {report.object_recall:8.4f} "
        f"{report.object_mrecall:8.4f} {report.predicate_recall:8.4f} "
        f"{report.predicate_mrecall:8.4f}"
    )


def cmd_eval(args) -> int:
    pred, vocab = load_graph(args.pred)
    gt = load_ground_truth(args.gt)
    match = match_objects(pred, gt)
    report = compute_recalls(match, pred, gt, vocab)
    with open(args.report, "w", encoding="utf-8") as f:
        json.dump(report_to_obj(report), f, indent=2)
        f.write("\n")
    print(_HEADLINE_HEADER)
    print(_headline_row(report))
    print(f"report written {args.report}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = load_scene_spec(args.spec)
    scene = synthesize_dataset(
        spec, args.out_frames, args.out_gt, depth_dir=args.depth_dir
    )
    print(
        f"scene: {len(scene.centers)} objects, {len(scene.gt.triplets)} triplets, "
        f"{len(scene.trajectory)} frames"
    )
    print(f"frames written {args.out_frames}")
    print(f"gt written     {args.out_gt}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_thresholds(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad threshold list {text!r}: {exc}") from exc
    if not values:
        raise ConfigError("threshold list is empty")
    return values


def cmd_sweep(args) -> int:
    thresholds = _parse_thresholds(args.thresholds)
    base = load_run_config(args.config) if args.config else RunConfig()
    base.record_eval_points = True

    with tempfile.TemporaryDirectory(prefix="scenefuse-sweep-") as tmp:
        if args.spec is not None:
            spec = load_scene_spec(args.spec)
            frames_path = str(Path(tmp) / "frames.jsonl")
            gt_path = str(Path(tmp) / "gt.json")
            synthesize_dataset(spec, frames_path, gt_path)
        else:
            if args.input is None or args.gt is None:
                raise ConfigError("sweep needs either --spec or both --input and --gt")
            frames_path, gt_path = args.input, args.gt

        gt = load_ground_truth(gt_path)
        rows = []
        for delta in thresholds:
            cfg = dataclasses.replace(base)
            try:
                cfg.fusion = dataclasses.replace(base.fusion, hellinger_threshold=delta)
                cfg.fusion.validate()
            except ValueError as exc:
                raise ConfigError(f"bad threshold {delta}: {exc}") from exc
            cfg.input = frames_path
            cfg.bench = False
            state, vocab, _ = _execute_run(cfg)
            if gt.vocab is not None:
                vocab = gt.vocab
            match = match_objects(state, gt)
            report = compute_recalls(match, state, gt, vocab)
            rows.append((delta, report))

    print(f"{'delta':>8} {_HEADLINE_HEADER}")
    for delta, report in rows:
        print(f"{delta:8.3f} {_headline_row(report)}")
    if args.report:
        doc = [
            {"hellinger_threshold": delta, **report_to_obj(report)}
            for delta, report in rows
        ]
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
        print(f"report written {args.report}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenefuse",
        description="Stream 2D scene-graph detections into a global 3D Gaussian scene graph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="fuse a detection stream into a graph")
    p_run.add_argument("--input", help="JSON Lines detection stream")
    p_run.add_argument("--config", help="run configuration JSON")
    p_run.add_argument("--output", help="output graph JSON")
    p_run.add_argument("--export-dot", dest="export_dot", help="also write a DOT rendering")
    p_run.add_argument(
        "--record-eval-points",
        dest="record_eval_points",
        action="store_true",
        help="keep a reservoir of lifted centers per node for evaluation",
    )
    p_run.add_argument("--bench", action="store_true", help="collect per-stage latency stats")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a graph against ground truth")
    p_eval.add_argument("--pred", required=True, help="predicted graph JSON")
    p_eval.add_argument("--gt", required=True, help="ground-truth scene JSON")
    p_eval.add_argument("--report", required=True, help="output recall report JSON")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--spec", required=True, help="scene spec JSON")
    p_synth.add_argument("--out-frames", dest="out_frames", required=True, help="output frame stream")
    p_synth.add_argument("--out-gt", dest="out_gt", required=True, help="output ground-truth scene")
    p_synth.add_argument(
        "--depth-dir",
        dest="depth_dir",
        help="also write per-frame depth maps into this directory (relative to the stream)",
    )
    p_synth.set_defaults(func=cmd_synth)

    p_sweep = sub.add_parser("sweep", help="recall table across merge thresholds")
    p_sweep.add_argument(
        "--thresholds", required=True, help="comma-separated merge thresholds, e.g. 0.6,0.85,0.9"
    )
    p_sweep.add_argument("--spec", help="scene spec JSON; dataset is synthesized on the fly")
    p_sweep.add_argument("--input", help="existing frame stream (with --gt)")
    p_sweep.add_argument("--gt", help="ground truth for --input")
    p_sweep.add_argument("--config", help="base run configuration JSON")
    p_sweep.add_argument("--report", help="also write the table as JSON")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except (StreamFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SceneFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
