"""Command-line entry point: synth-gen, ingest, run, eval, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import checkpoint
from .config import default_config_text, dump_config, load_config, ExperimentConfig
from .data import (
    Vocabulary, day_index_from_name, generate_synthetic, preprocess, read_block,
    read_criteo_day, read_stream, write_stream)
from .errors import ConfigError, IncCTRError, NumericError
from .evaluation import (
    MetricsLog, delay_degradation, efficiency_summary, evaluate, format_table, read_metrics,
    write_report)
from .schedule import run_schedule

log = logging.getLogger("incctr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(IncCTRError):
    """Missing or unreadable input data."""


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def ingest_criteo(raw_dir, pipeline):
    """Read every day file in ``raw_dir`` and apply the preprocessing chain.

    Returns ``(stream, info)`` where ``info`` holds per-day sample and parse
    error counts.
    """
    files = sorted((p for p in Path(raw_dir).iterdir() if p.is_file() and p.suffix in (".txt", ".tsv")),
                   key=lambda p: day_index_from_name(p.name)) if Path(raw_dir).is_dir() else []
    if not files:
        raise DataError(f"no .txt/.tsv day files in {raw_dir}")
    vocab, raw, info = None, [], []
    for p in files:
        block, errors = read_criteo_day(p, day_index_from_name(p.name), vocab)
        vocab = block.vocab
        raw.append(block)
        info.append({"file": p.name, "day": block.day_index, "samples": block.n,
                     "parse_errors": len(errors)})
        for e in errors[:5]:
            log.warning("%s: %s", p.name, e)
    stream = preprocess(raw, pipeline)
    for rec, b in zip(info, stream):
        rec["kept"] = b.n
        rec["positive_ratio"] = float(b.labels.mean()) if b.n else 0.0
    return stream, info


def load_stream(cfg):
    if cfg.source == "synth":
        return generate_synthetic(cfg.synth)
    if cfg.source == "stream":
        return read_stream(cfg.path)
    return ingest_criteo(cfg.path, cfg.pipeline)[0]


# ---------------------------------------------------------------- subcommands

def cmd_synth_gen(args):
    cfg = _config(args)
    out = Path(cfg.out)
    stream = generate_synthetic(cfg.synth)
    write_stream(out, stream)
    _write_json(out / "provenance.json", {"source": "synth", "synth": cfg.synth.to_dict(),
                                          "days": [b.day_index for b in stream],
                                          "samples": [b.n for b in stream]})
    print(f"wrote {len(stream)} day blocks to {out}")
    return EXIT_OK


def cmd_ingest(args):
    cfg = _config(args)
    out = Path(cfg.out)
    stream, info = ingest_criteo(args.raw_dir, cfg.pipeline)
    write_stream(out, stream)
    _write_json(out / "provenance.json", {"source": "criteo", "raw_dir": str(args.raw_dir),
                                          "pipeline": cfg.pipeline.to_dict(), "days": info})
    for rec in info:
        print(f"{rec['file']}: {rec['samples']} parsed, {rec['parse_errors']} errors, {rec['kept']} kept")
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    stream = load_stream(cfg)
    metrics_path = out / "metrics.tsv"
    if metrics_path.exists():
        metrics_path.unlink()
    mlog = MetricsLog(metrics_path)
    res = run_schedule(stream, cfg.w, cfg.T, cfg.arms, cfg.registry, cfg.model,
                       jobs=cfg.jobs, on_record=mlog.append)

    ck_dir = out / "checkpoints"
    checkpoint.save(ck_dir / "warm.ckpt", res.warm)
    for arm, ckpts in res.checkpoints.items():
        for ck in ckpts:
            checkpoint.save(ck_dir / arm / f"step_{ck.step:03d}.ckpt", ck)

    days = {b.day_index for b in stream}
    curve = None
    if cfg.delay_gaps > 0 and all(cfg.w + g in days for g in range(cfg.delay_gaps + 1)):
        curve = delay_degradation(res.warm, stream, cfg.w, cfg.delay_gaps)
    rows = efficiency_summary(read_metrics(metrics_path)) if res.metrics else []
    doc = write_report(rows, out, curve)
    doc["failures"] = res.failures
    _write_json(out / "report.json", doc)
    if rows:
        print(format_table(rows))
    for arm, err in res.failures.items():
        print(f"arm {arm} failed: {err}", file=sys.stderr)
    if any(err.startswith("NumericError") for err in res.failures.values()):
        return EXIT_NUMERIC
    return EXIT_OK if not res.failures else EXIT_DATA


def cmd_eval(args):
    ck = checkpoint.load(args.checkpoint)
    block = read_block(args.block, Vocabulary(ck.model.m))
    rep = evaluate(ck, block)
    print(json.dumps(asdict(rep), sort_keys=True))
    return EXIT_OK


def cmd_report(args):
    src = Path(args.metrics)
    path = src / "metrics.tsv" if src.is_dir() else src
    out = Path(args.out) if args.out else path.parent
    rows = efficiency_summary(read_metrics(path))
    write_report(rows, out)
    print(format_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser():
    p = argparse.ArgumentParser(prog="incctr", description="Incremental CTR training experiments.")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    def common(sp, jobs=False):
        sp.add_argument("--config", help="INI experiment config")
        sp.add_argument("--out", help="output directory (overrides [experiment] out)")
        sp.add_argument("--seed", type=int, help="global seed (overrides the config)")
        if jobs:
            sp.add_argument("--jobs", type=int, help="arms trained concurrently")

    sp = sub.add_parser("synth-gen", help="generate a synthetic drifting stream")
    common(sp)
    sp.set_defaults(func=cmd_synth_gen)

    sp = sub.add_parser("ingest", help="preprocess raw Criteo day files into a stream")
    sp.add_argument("raw_dir")
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("run", help="run every arm over the schedule and write the report")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a day block")
    sp.add_argument("checkpoint")
    sp.add_argument("block")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("report", help="summarise a metrics log")
    sp.add_argument("metrics", help="metrics.tsv or a run directory")
    sp.add_argument("--out", help="directory for report files")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                         format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IncCTRError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
