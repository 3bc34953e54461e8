"""Command-line entry points.

Exit status: 0 success, 1 validation error, 2 I/O error, 64 usage error.
Log verbosity comes from the ``PLAYBACK_LOG`` environment variable
(e.g. ``DEBUG``, ``INFO``; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .config import PipelineConfig
from .dreaming import dream, export_st_baseline
from .evaluation import evaluate
from .sim import ScenarioSpec, SensorModel, generate, traffic_scenario
from .tracker import run_online

log = logging.getLogger("dreamtrack")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("PLAYBACK_LOG", "WARNING").upper()
    logging.basicConfig(
        level=int(level) if level.isdigit() else getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON ({exc.msg})") from None
    return PipelineConfig.from_dict(data)


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- simulate --------------------------------------------------------------

def scenarios_from_spec(data: dict, seed: int | None = None) -> list[ScenarioSpec]:
    """Expand a scenario file: a single scenario, ``{"scenarios": [...]}``, or a traffic preset."""
    if "preset" in data:
        params = dict(data)
        if params.pop("preset") != "traffic":
            raise ValueError("only the 'traffic' preset is available")
        count = int(params.pop("num_sequences", 1))
        base = int(params.pop("seed", 0))
        base = base if seed is None else seed
        if "sensor" in params:
            params["sensor"] = SensorModel(**params["sensor"])
        return [traffic_scenario(base + i, **params) for i in range(count)]
    if "scenarios" in data:
        specs = [ScenarioSpec.from_dict(s) for s in data["scenarios"]]
        if seed is not None:
            specs = [ScenarioSpec.from_dict({**s.to_dict(), "seed": seed + i}) for i, s in enumerate(specs)]
        return specs
    spec = ScenarioSpec.from_dict(data)
    return [spec if seed is None else ScenarioSpec.from_dict({**spec.to_dict(), "seed": seed})]


def _simulate_one(args) -> str:
    spec, out = args
    seq, gt = generate(spec)
    io.save_sequence(seq, out / f"{seq.sequence_id}.jsonl")
    io.save_labels(seq.sequence_id, gt, out / "gt" / f"{seq.sequence_id}.jsonl")
    return seq.sequence_id


def cmd_simulate(ns) -> int:
    with open(ns.spec, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{ns.spec}: malformed JSON ({exc.msg})") from None
    specs = scenarios_from_spec(data, ns.seed)
    ids = [s.sequence_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario sequence ids must be unique")
    out = Path(ns.out)
    done = _map(_simulate_one, [(s, out) for s in specs], ns.jobs)
    log.info("simulated %d sequences into %s", len(done), out)
    return EXIT_OK


# --- track / dream ---------------------------------------------------------

def _label_one(args) -> str:
    path, out, cfg, mode = args
    seq = io.load_sequence(path)
    if mode == "online":
        _, labels = run_online(seq, cfg)
    elif mode == "st":
        labels = export_st_baseline(seq.frames, cfg.st_score_min)
    else:
        labels, _ = dream(seq, cfg)
    io.save_labels(seq.sequence_id, labels, Path(out) / f"{seq.sequence_id}.jsonl")
    return seq.sequence_id


def _run_labels(ns, mode: str) -> int:
    cfg = _load_config(ns.config)
    files = io.jsonl_files(ns.inp)
    if not files:
        raise FileNotFoundError(f"no .jsonl sequences in {ns.inp}")
    done = _map(_label_one, [(p, ns.out, cfg, mode) for p in files], ns.jobs)
    log.info("%s: wrote labels for %d sequences", mode, len(done))
    return EXIT_OK


def cmd_track(ns) -> int:
    return _run_labels(ns, ns.mode or "online")


def cmd_dream(ns) -> int:
    return _run_labels(ns, ns.mode or "offline")


# --- eval ------------------------------------------------------------------

def _collect(path) -> dict:
    out = {}
    for f in io.jsonl_files(path):
        seq_id, labels = io.load_labels(f)
        if any(k[0] == seq_id for k in out):
            raise ValueError(f"duplicate sequence {seq_id!r} in {path}")
        for frame_index, labs in labels.items():
            out[(seq_id, frame_index)] = labs
    return out


def cmd_eval(ns) -> int:
    preds = _collect(ns.pred)
    gts = _collect(ns.gt)
    gt_seqs = {k[0] for k in gts}
    stray = sorted({k[0] for k in preds} - gt_seqs)
    if stray:
        log.warning("predictions for sequences without ground truth are ignored: %s", stray)
        preds = {k: v for k, v in preds.items() if k[0] in gt_seqs}
    report = evaluate(preds, gts)
    out = Path(ns.out)
    io.atomic_write_text(out, json.dumps(report.to_dict(), indent=1) + "\n")
    io.atomic_write_text(out.with_suffix(".txt"), report.table())
    sys.stdout.write(report.table())
    return EXIT_OK


# --- convert / plot-data ---------------------------------------------------

def cmd_convert(ns) -> int:
    labels, skipped = io.convert_kitti_labels(ns.inp)
    seq_id = ns.sequence_id or Path(ns.inp).name
    out = Path(ns.out)
    if out.suffix != ".jsonl":
        out = out / f"{seq_id}.jsonl"
    io.save_labels(seq_id, labels, out)
    if skipped:
        sys.stderr.write(f"skipped {skipped} malformed rows\n")
    return EXIT_OK


def cmd_plot_data(ns) -> int:
    preds = {}
    if ns.pred:
        for f in io.jsonl_files(ns.pred):
            seq_id, labels = io.load_labels(f)
            preds[seq_id] = labels
    sequences = [io.load_sequence(p) for p in io.jsonl_files(ns.inp)]
    data = {"sequences": [io.plot_data(s, preds.get(s.sequence_id)) for s in sequences]}
    io.atomic_write_text(ns.out, io.dumps(data) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dreamtrack", description="Offline 3D tracking and pseudo-label refinement.")
    parser.add_argument(
        "--dump-config", nargs="?", const="-", metavar="PATH",
        help="write the default pipeline config (to stdout without PATH) and exit",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    def label_args(p, modes):
        p.add_argument("--in", dest="inp", required=True, help="sequence .jsonl file or directory")
        p.add_argument("--out", required=True, help="output directory for label files")
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--mode", choices=modes)
        p.add_argument("--jobs", type=int, default=1)

    label_args(add("track", cmd_track, "online tracking labels"), ["online", "offline"])
    label_args(add("dream", cmd_dream, "offline refinement labels"), ["offline", "online", "st"])

    p = add("eval", cmd_eval, "AP report of labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="report JSON path (a .txt table is written alongside)")

    p = add("simulate", cmd_simulate, "generate synthetic sequences and ground truth")
    p.add_argument("--spec", required=True, help="scenario JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)

    p = add("convert", cmd_convert, "KITTI label directory to a ground-truth label file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="output .jsonl file or directory")
    p.add_argument("--sequence-id")

    p = add("plot-data", cmd_plot_data, "world-frame polygons and track polylines as JSON")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--pred")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.dump_config is not None:
            text = json.dumps(PipelineConfig().to_dict(notes=True), indent=2) + "\n"
            if ns.dump_config == "-":
                sys.stdout.write(text)
            else:
                io.atomic_write_text(ns.dump_config, text)
            return EXIT_OK
        if ns.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if getattr(ns, "jobs", 1) < 1:
            parser.error("--jobs must be at least 1")
        return ns.func(ns)
    except (ValueError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
