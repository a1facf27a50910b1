"""AUC / logloss, delay-degradation curves and efficiency summaries."""

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ScheduleError, UndefinedAUCError
from .model import ce_loss

METRIC_COLUMNS = ("step", "arm", "auc", "logloss", "epochs", "wall_ms")
REPORT_COLUMNS = ("arm", "updates", "auc", "logloss", "avg_epochs", "avg_time_s",
                  "speedup", "impr_abs", "impr_rel_pct")


@dataclass
class EvalReport:
    auc: float
    logloss: float
    n_samples: int
    positives: int


def auc(scores, labels):
    """Mann-Whitney AUC with ties counted 1/2, via average ranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def logloss(predictions, labels, epsilon=1e-7):
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if predictions.size == 0:
        raise ValueError("logloss of an empty set is undefined")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have the same length")
    return float(np.mean(ce_loss(labels, predictions, epsilon)))


def evaluate(ckpt, block):
    from .trainer import inference

    _, p = inference(ckpt, block)
    return EvalReport(auc(p, block.labels), logloss(p, block.labels, ckpt.train_cfg.loss.epsilon),
                      int(block.n), int(block.labels.sum()))


@dataclass
class DelayCurve:
    gaps: list
    auc_at_gap: list
    relative_degradation: list

    def rows(self):
        return list(zip(self.gaps, self.auc_at_gap, self.relative_degradation))


def relative_degradation(aucs):
    """Percent AUC drop of each entry relative to the first."""
    base = aucs[0]
    return [100.0 * (base - a) / base for a in aucs]


def delay_degradation(ckpt, stream, train_end_day, max_gap):
    """Evaluate a frozen checkpoint on days ``train_end_day + g`` for g in 0..max_gap.

    ``train_end_day`` is the first day after the training range.
    """
    if train_end_day < ckpt.train_end:
        raise ScheduleError(f"day {train_end_day} overlaps the checkpoint's training range")
    days = {b.day_index: b for b in stream}
    need = [train_end_day + g for g in range(max_gap + 1)]
    missing = [d for d in need if d not in days]
    if missing:
        raise ScheduleError(f"stream lacks days {missing} needed for the delay curve")
    aucs = [evaluate(ckpt, days[d]).auc for d in need]
    return DelayCurve(list(range(max_gap + 1)), aucs, relative_degradation(aucs))


# ---------------------------------------------------------------- metrics log

@dataclass
class MetricRecord:
    step: int
    arm: str
    auc: float
    logloss: float
    epochs: int
    wall_ms: float

    def line(self):
        return "\t".join([str(self.step), self.arm, repr(self.auc), repr(self.logloss),
                          str(self.epochs), f"{self.wall_ms:.3f}"])


class MetricsLog:
    """Append-only TSV log of per-update metrics."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.write_text("\t".join(METRIC_COLUMNS) + "\n", encoding="utf-8")

    def append(self, rec):
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(rec.line() + "\n")


def read_metrics(path):
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ValueError(f"unexpected metrics columns {reader.fieldnames}")
        return [MetricRecord(int(r["step"]), r["arm"], float(r["auc"]), float(r["logloss"]),
                             int(r["epochs"]), float(r["wall_ms"])) for r in reader]


# ---------------------------------------------------------------- summaries

@dataclass
class SummaryRow:
    arm: str
    updates: int
    auc: float
    logloss: float
    avg_epochs: float
    avg_time_s: float
    speedup: float
    impr_abs: float
    impr_rel_pct: float


def _is_incremental(arm):
    return arm in ("ft", "kd_batch", "kd_self") or arm.startswith(("ft", "kd"))


def reference_arm(arms):
    if "batch" in arms:
        return "batch"
    batch = sorted(a for a in arms if a.startswith("batch"))
    return batch[0] if batch else None


def efficiency_summary(records, reference=None):
    """Per-arm means, speedup vs the batch reference and Impr. columns.

    ``impr_*`` is the AUC gain of the best incremental arm over each arm,
    absolute and relative (percent).
    """
    arms = {}
    for r in records:
        arms.setdefault(r.arm, []).append(r)
    if not arms:
        raise ValueError("metrics log is empty")
    reference = reference or reference_arm(list(arms))
    means = {}
    for arm, rs in arms.items():
        means[arm] = (float(np.mean([r.auc for r in rs])), float(np.mean([r.logloss for r in rs])),
                      float(np.mean([r.epochs for r in rs])), float(np.mean([r.wall_ms for r in rs])))
    inc = [a for a in arms if _is_incremental(a)]
    best = max(inc, key=lambda a: means[a][0]) if inc else None
    ref_ms = means[reference][3] if reference in means else None
    rows = []
    for arm in arms:
        a, ll, ep, ms = means[arm]
        speed = ref_ms / ms if ref_ms is not None and ms > 0 else float("nan")
        if best is None:
            ia = ir = float("nan")
        else:
            ia = means[best][0] - a
            ir = 100.0 * ia / a
        rows.append(SummaryRow(arm, len(arms[arm]), a, ll, ep, ms / 1e3, speed, ia, ir))
    return rows


def write_report(rows, out_dir, curve=None):
    """Write report.csv, report.json and (optionally) delay_curve.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([getattr(r, c) for c in REPORT_COLUMNS])
    doc = {"columns": list(REPORT_COLUMNS), "rows": [asdict(r) for r in rows]}
    if curve is not None:
        doc["delay_curve"] = asdict(curve)
        with (out_dir / "delay_curve.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["gap", "auc", "relative_degradation_pct"])
            w.writerows(curve.rows())
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def format_table(rows):
    head = f"{'arm':<10} {'n':>3} {'AUC':>8} {'logloss':>8} {'epochs':>6} {'time_s':>8} {'speedup':>8} {'impr%':>7}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.arm:<10} {r.updates:>3} {r.auc:>8.4f} {r.logloss:>8.4f} {r.avg_epochs:>6.2f} "
                     f"{r.avg_time_s:>8.3f} {r.speedup:>8.2f} {r.impr_rel_pct:>7.3f}")
    return "\n".join(lines)
