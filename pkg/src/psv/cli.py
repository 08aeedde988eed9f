"""``psv`` command line: train, eval, complete, simulate-partial, sweep, report."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import data, geometry, nn, pipeline
from .config import ConfigError, load_config

EXIT_OK, EXIT_INPUT, EXIT_TASK, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("psv")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _set_threads():
    n = os.environ.get("PSV_THREADS")
    if n:
        try:
            torch.set_num_threads(max(1, int(n)))
        except ValueError:
            raise CliError(f"PSV_THREADS must be an integer, got {n!r}") from None


def _dataset(spec: str, task: str) -> data.Dataset:
    if spec.startswith("toy://"):
        name = spec[len("toy://"):].split("?", 1)[0]
        toy = data.TOY_DATASETS.get(name)
        if toy and toy[1] != task:
            raise CliError(f"dataset {name!r} is a {toy[1]} dataset, task is {task!r}", EXIT_TASK)
    return data.load_dataset(spec, task)


def _load_checkpoint(path) -> pipeline.Checkpoint:
    try:
        return pipeline.Checkpoint.load(path)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.task, seed=args.seed, epochs=args.epochs)
    ds = _dataset(args.data, args.task)
    if not ds.samples:
        raise CliError(f"{args.data}: dataset is empty")
    out = Path(args.out)
    ckpt = pipeline.train(
        cfg, ds, out_dir=out,
        progress=lambda e, loss: log.info("epoch %d/%d loss %.6f", e, cfg.epochs, loss),
    )
    print(f"final loss {ckpt.loss_curve[-1]:.10g}")
    print(f"checkpoint written to {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    task = ckpt.config.task
    if args.task and args.task != task:
        raise CliError(f"checkpoint task is {task!r}, requested {args.task!r}", EXIT_TASK)
    ds = _dataset(args.data, task)
    metrics = pipeline.evaluate(
        ckpt, ds, votes_test=args.votes_test, partial=args.partial, seed=args.seed,
        aggregation=args.aggregation,
    )
    print(metrics.report())
    if args.out:
        _write(args.out, metrics.to_csv())
    return EXIT_OK


def cmd_complete(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if ckpt.config.task != "complete":
        raise CliError(f"checkpoint task is {ckpt.config.task!r}, not 'complete'", EXIT_TASK)
    try:
        cloud = geometry.read_xyz(args.input)
    except OSError as exc:
        raise CliError(f"{args.input}: {exc.strerror}") from None
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not args.diverse:
        geometry.write_xyz(out, pipeline.complete_cloud(ckpt, cloud, seed=args.seed))
        print(out)
        return EXIT_OK
    if args.diverse < 2:
        raise CliError("--diverse needs at least 2 outputs")
    n_votes = min(ckpt.config.n_sets, len(cloud))
    if not 0 <= args.vote_index < n_votes:
        raise CliError(f"--vote-index must lie in [0, {n_votes})")
    for t, pts in pipeline.diverse_completions(ckpt, cloud, args.vote_index, args.diverse, seed=args.seed):
        path = out.with_name(f"{out.stem}_t{t:.2f}{out.suffix}")
        geometry.write_xyz(path, pts)
        print(path)
    return EXIT_OK


def cmd_simulate_partial(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        files = sorted(src.rglob("*.xyz"))
    elif src.exists():
        files = [src]
    else:
        raise CliError(f"{src}: no such file or directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    normals = ["file,nx,ny,nz"]
    for i, f in enumerate(files):
        cloud = geometry.read_xyz(f)
        part, plane = geometry.simulate_plane_cut(cloud, seed=args.seed * 100003 + i, minimum_points=args.min_points)
        rel = f.relative_to(src) if src.is_dir() else Path(f.name)
        dest = out / rel.with_name(f"{rel.stem}_partial.xyz")
        dest.parent.mkdir(parents=True, exist_ok=True)
        geometry.write_xyz(dest, part)
        n = plane.normal
        normals.append(f"{dest.relative_to(out)},{n[0]:.10g},{n[1]:.10g},{n[2]:.10g}")
    _write(out / "normals.csv", "\n".join(normals) + "\n")
    print(f"{len(files)} partial cloud(s) written to {out}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise CliError("vote counts must be positive integers")
    return vals


def cmd_sweep(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    ds = _dataset(args.data, ckpt.config.task)
    aggs = [a.strip() for a in args.aggregations.split(",") if a.strip()]
    bad = [a for a in aggs if a not in pipeline.AGGREGATIONS]
    if bad:
        raise CliError(f"unknown aggregation(s): {', '.join(bad)}")
    rows = pipeline.sweep_votes(ckpt, ds, _int_list(args.votes), aggs, partial=not args.complete, seed=args.seed)
    text = pipeline.sweep_csv(rows)
    print(text, end="")
    if args.out:
        _write(args.out, text)
    return EXIT_OK


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise CliError(f"{path}:1: empty file")
    header, body = rows[0], rows[1:]
    for lineno, row in enumerate(body, 2):
        if len(row) != len(header):
            raise CliError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
    return header, body


def _number(path, lineno, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise CliError(f"{path}:{lineno}: not a number: {raw!r}") from None


def report_curves(path: Path) -> dict[str, list[tuple]]:
    """Split a loss, sweep or metrics CSV into named two-column series."""
    header, body = _read_csv(path)
    curves: dict[str, list[tuple]] = {}
    if header[:2] == ["epoch", "loss"]:
        curves["loss"] = [(_number(path, i, r[0]), _number(path, i, r[1])) for i, r in enumerate(body, 2)]
    elif header[:2] == ["aggregation", "votes"] and len(header) == 3:
        for i, r in enumerate(body, 2):
            curves.setdefault(r[0], []).append((_number(path, i, r[1]), _number(path, i, r[2])))
    elif header[:2] == ["class", "count"] and len(header) >= 3:
        for col in range(2, len(header)):
            curves[header[col]] = [
                (j, _number(path, i, r[col])) for j, (i, r) in enumerate(enumerate(body, 2))
            ]
    else:
        raise CliError(f"{path}:1: unrecognized header {','.join(header)!r}")
    return curves


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.inputs:
        path = Path(name)
        for curve, pts in report_curves(path).items():
            dest = out / f"{path.stem}_{curve}.dat"
            dest.write_text("".join(f"{x:.10g} {y:.10g}\n" for x, y in pts))
            print(dest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model on complete clouds")
    t.add_argument("--task", required=True, choices=("classify", "segment", "complete"))
    t.add_argument("--data", required=True, help="dataset directory or toy://<name> URI")
    t.add_argument("--config", required=True, help="key = value run configuration")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--epochs", type=int, default=None, help="override the config epochs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--task", choices=("classify", "segment", "complete"))
    e.add_argument("--partial", action="store_true", help="evaluate on plane-cut partial clouds")
    e.add_argument("--votes-test", type=int, default=None)
    e.add_argument("--aggregation", choices=pipeline.AGGREGATIONS, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="metrics CSV path")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("complete", help="complete a partial XYZ cloud")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--diverse", type=int, default=0, help="number of interpolated completions")
    c.add_argument("--vote-index", type=int, default=0)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_complete)

    s = sub.add_parser("simulate-partial", help="plane-cut XYZ clouds")
    s.add_argument("--input", required=True, help="XYZ file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-points", type=int, default=32)
    s.set_defaults(func=cmd_simulate_partial)

    w = sub.add_parser("sweep", help="metric per (aggregation, vote count)")
    w.add_argument("--checkpoint", required=True)
    w.add_argument("--data", required=True)
    w.add_argument("--votes", required=True, help="comma-separated vote counts")
    w.add_argument("--aggregations", default="voting,max,mean")
    w.add_argument("--complete", action="store_true", help="use complete instead of plane-cut clouds")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="turn metric CSVs into two-column plot data")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _set_threads()
        return args.func(args)
    except CliError as exc:
        print(f"psv: error: {exc}", file=sys.stderr)
        return exc.code
    except pipeline.TaskMismatch as exc:
        print(f"psv: error: {exc}", file=sys.stderr)
        return EXIT_TASK
    except pipeline.NumericalError as exc:
        print(f"psv: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, data.DataError, geometry.GeometryError, nn.CheckpointError, ValueError) as exc:
        print(f"psv: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
