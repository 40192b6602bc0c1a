"""hyperinv command line: pretrain, downstream, measure, sweep, bound, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np
import toml

from . import __version__
from .analysis import (
    BoundInputs,
    bound_sanity_check,
    generalization_bound,
    interpolation_sweep,
    loss_descriptor_sweep,
    make_report,
    measure_invariance,
)
from .analysis.plots import line_plot
from .data import subsample_per_class
from .data.datasets import N_CLASSES
from .experiment import (
    ConfigError,
    downstream_data,
    measure_families,
    merge_config,
    pretrain_data,
    run_downstream_grid,
    run_pretrain,
    train_config,
)
from .numerics import CheckpointError
from .training import DownstreamResult, PretrainedBundle

log = logging.getLogger("hyperinv")

INCOMPLETE = ".incomplete"
CHECKPOINT = "checkpoint"


class CliError(Exception):
    pass


# -- files ----------------------------------------------------------------

def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        f.write(text)
    os.replace(tmp, path)
    return path


def write_json(path, obj):
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_rows(path, rows, fields=None):
    fields = fields or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return atomic_write(path, buf.getvalue())


def prepare_out(out, force):
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    (out / INCOMPLETE).write_text("run started; this marker is removed when every artifact is written\n")
    return out


def finish_out(out):
    (Path(out) / INCOMPLETE).unlink(missing_ok=True)


# -- config ---------------------------------------------------------------

def _key_line(text, section, key):
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if key and current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return lineno
        if key is None and current == section:
            return lineno - 1
        if section and current is None and re.match(rf"\s*{re.escape(section)}\s*=", line):
            return lineno
    return None


def load_config(path, overrides=None):
    """Parse a TOML run config; errors name the file, line and field."""
    raw = {}
    text = ""
    if path:
        path = Path(path)
        if not path.exists():
            raise CliError(f"config file {path} not found")
        text = path.read_text()
        try:
            raw = toml.loads(text)
        except toml.TomlDecodeError as exc:
            raise CliError(f"{path}:{exc.lineno}:{exc.colno}: TOML parse error: {exc.msg}") from None
    for section, values in (overrides or {}).items():
        raw.setdefault(section, {}).update(values)
    try:
        cfg = merge_config(raw)
        # validate the training sections eagerly
        for section in ("pretrain_train", "downstream_train", "sweep_train"):
            train_config(cfg, section)
    except ConfigError as exc:
        line = _key_line(text, exc.section, exc.key) if text else None
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        raise CliError(f"{where}config error: {exc}") from None
    return cfg


def snapshot(out, cfg):
    atomic_write(Path(out) / "config.toml", toml.dumps(cfg))


def load_bundle(stem):
    stem = Path(stem)
    if stem.is_dir():
        stem = stem / CHECKPOINT
    try:
        return PretrainedBundle.load(stem)
    except FileNotFoundError:
        raise CliError(f"checkpoint {stem}.json not found") from None
    except CheckpointError as exc:
        raise CliError(f"bad checkpoint {stem}: {exc}") from None


def _source_overrides(args):
    over = {}
    if getattr(args, "source", None):
        if args.source == "glyph":
            over = {"data": {"source": "glyph"}, "downstream_data": {"source": "glyph"}}
        else:
            over = {"data": {"source": "idx", "name": "mnist"}, "downstream_data": {"source": "idx", "name": "kmnist"}}
    if getattr(args, "data_dir", None):
        for s in ("data", "downstream_data"):
            over.setdefault(s, {})["data_dir"] = args.data_dir
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    return over


def _config(args, extra=None):
    over = _source_overrides(args)
    seed = over.pop("seed", None)
    for k, v in (extra or {}).items():
        over.setdefault(k, {}).update(v)
    cfg = load_config(args.config, over)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


# -- commands -------------------------------------------------------------

def cmd_pretrain(args):
    extra = {"pretrain": {"model": args.model}} if args.model else None
    cfg = _config(args, extra)
    out = prepare_out(args.out, args.force)
    snapshot(out, cfg)
    train, test = pretrain_data(cfg)
    for ds in (train, test):
        write_json(out / "manifests" / f"pretrain-{ds.split}.json", ds.manifest())
    bundle = run_pretrain(cfg, train)
    write_rows(out / "metrics.csv", bundle.log, ["epoch", "task", "split", "loss", "accuracy"])
    digest = bundle.save(out / CHECKPOINT)
    atomic_write(out / "digest.txt", digest + "\n")
    finish_out(out)
    print(f"checkpoint {out / CHECKPOINT}.json sha256 {digest}")
    return 0


def cmd_downstream(args):
    cfg = _config(args)
    bundle = load_bundle(args.checkpoint)
    if not bundle.is_hyper:
        raise CliError("downstream descriptor fitting needs a hypernetwork checkpoint")
    out = prepare_out(args.out, args.force)
    snapshot(out, cfg)
    data = downstream_data(cfg)
    for ds in data:
        write_json(out / "manifests" / f"downstream-{ds.split}.json", ds.manifest())
    baseline = None
    if args.baseline == "mtl":
        baseline = load_bundle(args.baseline_checkpoint) if args.baseline_checkpoint else None
        if baseline is None:
            baseline = run_pretrain(cfg, pretrain_data(cfg)[0], model="mtl")
            baseline.save(out / "baseline" / CHECKPOINT)
            write_rows(out / "baseline" / "metrics.csv", baseline.log, ["epoch", "task", "split", "loss", "accuracy"])
        if baseline.is_hyper:
            raise CliError("--baseline-checkpoint must point at an MTL (plain encoder) checkpoint")

    def save(r):
        write_json(out / "results" / f"{r.task}_N{r.n_per_class}_seed{r.seed}.json", r.to_dict())

    digest_before = bundle.digest()
    results = run_downstream_grid(cfg, bundle, data, baseline=baseline, on_result=save,
                                  ns=args.n or None, seeds=args.seeds or None)
    if bundle.digest() != digest_before:
        raise CliError("pre-trained weights changed during downstream fitting")
    for task, rs in results.items():
        csv_text, table = make_report(rs, title=f"{task} prediction")
        atomic_write(out / f"report_{task}.csv", csv_text)
        atomic_write(out / f"report_{task}.txt", table)
        print(table)
    finish_out(out)
    return 0


def cmd_measure(args):
    cfg = _config(args)
    bundle = load_bundle(args.checkpoint)
    out = prepare_out(args.out, args.force)
    snapshot(out, cfg)
    m = cfg["measure"]
    points = args.sweep or m["points"]
    train, _ = pretrain_data(cfg) if bundle.config.get("objective") == "nt-xent" else downstream_data(cfg)
    images = train.subset(np.arange(min(m["n_images"], len(train))))
    ts, sweep = interpolation_sweep(points)
    families = measure_families(bundle)
    curve = measure_invariance(bundle, images, families, sweep, n_aug=m["n_aug"], seed=cfg["seed"], ts=ts)
    rows = curve.rows()
    write_rows(out / "invariance.csv", rows)
    line_plot(out / "invariance.svg", ts, {f: curve.series(f) for f in curve.families},
              "descriptor parameter t (descriptor [t, 1-t])", "feature cosine similarity")
    finish_out(out)
    for r in rows:
        print("  ".join(f"{k}={v:.4f}" for k, v in r.items()))
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    bundle = load_bundle(args.checkpoint)
    out = prepare_out(args.out, args.force)
    snapshot(out, cfg)
    s = cfg["sweep"]
    tasks = args.task or [s["task"]]
    points = args.sweep or s["points"]
    train, _ = downstream_data(cfg)
    ts, sweep = interpolation_sweep(points)
    scfg = train_config(cfg, "sweep_train").but(seed=cfg["seed"])
    series = {}
    for task in tasks:
        data = subsample_per_class(train, s["n_per_class"], task, cfg["seed"])
        pts = loss_descriptor_sweep(bundle, data, task, N_CLASSES[task], sweep, scfg, ts=ts)
        write_rows(out / f"loss_sweep_{task}.csv",
                   [{"t": p.t, "i0": p.descriptor[0], "i1": p.descriptor[1], "loss": p.loss, "accuracy": p.accuracy}
                    for p in pts])
        series[task] = [p.loss for p in pts]
    line_plot(out / "loss_sweep.svg", ts, series, "descriptor parameter t (descriptor [t, 1-t])", "train loss")
    finish_out(out)
    return 0


def cmd_bound(args):
    if args.checkpoint is None:
        missing = [f"--{k}" for k in ("n", "card", "delta", "X", "B", "risk") if getattr(args, k.replace("-", "_")) is None]
        if missing:
            raise CliError(f"closed-form bound needs {', '.join(missing)} (or --checkpoint for the Monte Carlo check)")
        try:
            inputs = BoundInputs(args.risk, args.X, args.B, args.n, args.card, args.delta)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        print(f"{generalization_bound(inputs):.7f}")
        return 0
    cfg = _config(args)
    bundle = load_bundle(args.checkpoint)
    out = prepare_out(args.out, args.force)
    snapshot(out, cfg)
    b = cfg["bound"]
    train, test = downstream_data(cfg)
    delta = args.delta if args.delta is not None else b["delta"]
    report = bound_sanity_check(bundle, train, test, b["task"], N_CLASSES[b["task"]], trials=b["trials"],
                                delta=delta, n_per_class=b["n_per_class"],
                                config=train_config(cfg, "downstream_train"), levels=b["levels"], seed=cfg["seed"])
    write_json(out / "bound_check.json", report)
    write_rows(out / "bound_check.csv", [{k: v for k, v in t.items() if k != "descriptor"} for t in report["trials"]])
    finish_out(out)
    print(f"violations: {report['violations']} / {len(report['trials'])} at delta={delta}")
    return 0


def cmd_report(args):
    results = []
    for d in args.results:
        for p in sorted(Path(d).glob("**/*.json")):
            obj = json.loads(p.read_text())
            if "descriptor" in obj and "n_per_class" in obj:
                results.append(DownstreamResult(**obj))
    if not results:
        raise CliError("no DownstreamResult JSON files found")
    out = prepare_out(args.out, args.force)
    for task in sorted({r.task for r in results}):
        rs = [r for r in results if r.task == task]
        csv_text, table = make_report(rs, split=args.split, title=f"{task} prediction ({args.split})")
        atomic_write(out / f"report_{task}.csv", csv_text)
        atomic_write(out / f"report_{task}.txt", table)
        print(table)
    finish_out(out)
    return 0


# -- parser ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hyperinv", description="Amortized invariance learning with hypernetworks")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="TOML run config (defaults apply to anything missing)")
        sp.add_argument("--source", choices=["glyph", "mnist"], help="glyph: synthetic, no files; mnist: IDX files")
        sp.add_argument("--data-dir", help="IDX root (default $HYPERINV_DATA_DIR or ./data)")
        sp.add_argument("--seed", type=int, help="master seed")
        if out:
            sp.add_argument("--out", required=True, help="run directory")
            sp.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")

    sp = sub.add_parser("pretrain", help="pre-train a hypernetwork, MTL baseline or contrastive bundle")
    common(sp)
    sp.add_argument("--model", choices=["hyper", "mtl", "contrastive"])
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("downstream", help="fit descriptor + head per (task, N, seed)")
    common(sp)
    sp.add_argument("--checkpoint", required=True, help="checkpoint stem or run directory")
    sp.add_argument("--n", type=int, nargs="+", help="samples per class (default from config)")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--baseline", choices=["mtl"], help="also fit the MTL baseline under the same protocol")
    sp.add_argument("--baseline-checkpoint", help="reuse a pre-trained MTL checkpoint instead of training one")
    sp.set_defaults(fn=cmd_downstream)

    sp = sub.add_parser("measure", help="invariance curve along [t, 1-t]")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sweep", type=int, help="number of sweep points")
    sp.set_defaults(fn=cmd_measure)

    sp = sub.add_parser("sweep", help="train loss vs pinned descriptor")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sweep", type=int, help="number of sweep points")
    sp.add_argument("--task", nargs="+", choices=sorted(N_CLASSES))
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("bound", help="closed-form bound, or the Monte Carlo check with --checkpoint")
    sp.add_argument("--config")
    sp.add_argument("--source", choices=["glyph", "mnist"])
    sp.add_argument("--data-dir")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--checkpoint")
    sp.add_argument("--out")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--n", type=int)
    sp.add_argument("--card", type=int, help="|I|, number of discretized descriptors")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--X", type=float, help="feature norm bound")
    sp.add_argument("--B", type=float, help="head norm bound")
    sp.add_argument("--risk", type=float, help="empirical risk")
    sp.set_defaults(fn=cmd_bound)

    sp = sub.add_parser("report", help="rebuild tables from DownstreamResult JSON files")
    sp.add_argument("results", nargs="+", help="directories holding result JSON")
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--split", choices=["test", "train"], default="test")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "bound" and args.checkpoint is not None and not args.out:
        print("error: bound --checkpoint needs --out", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (CliError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
