"""Sliding-window experiment schedule: warm start, batch arms, incremental arms.

For every update day ``s`` in ``[w, T-1]`` each arm produces (or reuses) a
model that has seen data up to day ``s - delay`` and is scored on day
``s + 1``:

* ``batch``: retrain from scratch on ``[s-w+1, s+1)``.
* ``batch-i``: the window model trained through day ``s - i`` (stale by i
  days). ``batch-0`` is normally configured with ``validate_refit``.
* ``ft`` / ``kd_self`` / ``kd_batch``: chained incremental steps starting
  from the warm-start model trained on ``[0, w)``. The KD-batch teacher at
  day ``s`` is the window model trained through day ``s - 1``.
"""

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .errors import ScheduleError
from .evaluation import MetricRecord, evaluate
from .trainer import TrainConfig, incremental_step, train_batch

log = logging.getLogger(__name__)

_BATCH_ARM = re.compile(r"^batch(?:-(\d+))?$")


def batch_delay(arm):
    """Delay in days for a batch arm name, or None for incremental arms."""
    mt = _BATCH_ARM.match(arm)
    if mt is None:
        return None
    return int(mt.group(1)) if mt.group(1) else 0


@dataclass
class ScheduleResult:
    warm: object
    metrics: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def arm_metrics(self, arm):
        return [r for r in self.metrics if r.arm == arm]


class _WindowModels:
    """Cache of batch models keyed by (last training day, config)."""

    def __init__(self, days, w, registry_cfg, model_cfg, warm, warm_cfg):
        self.days, self.w = days, w
        self.registry_cfg, self.model_cfg = registry_cfg, model_cfg
        self._cache = {(w - 1, warm_cfg): warm}

    def through(self, d, cfg):
        key = (d, cfg)
        if key not in self._cache:
            lo = max(0, d - self.w + 1)
            window = [self.days[i] for i in range(lo, d + 1)]
            log.info("batch model through day %d (window [%d, %d))", d, lo, d + 1)
            self._cache[key] = train_batch(window, cfg, self.registry_cfg, self.model_cfg, step=d)
        return self._cache[key]


def _check_stream(days, w, T):
    if not 1 <= w < T:
        raise ScheduleError(f"need 1 <= w < T, got w={w}, T={T}")
    missing = [d for d in range(T + 1) if d not in days]
    if missing:
        raise ScheduleError(f"stream must cover days 0..{T}; missing {missing[:5]}")


def _record(step, arm, ckpt, eval_block):
    rep = evaluate(ckpt, eval_block)
    prov = ckpt.provenance
    return MetricRecord(step, arm, rep.auc, rep.logloss, int(prov["epochs"]), float(prov["wall_ms"]))


def _incremental_arm(arm, cfg, warm, days, w, T, teachers, keep):
    prev, records, ckpts = warm, [], []
    for s in range(w, T):
        teacher = teachers.get(s) if cfg.mode == "kd_batch" else None
        ckpt = incremental_step(prev, days[s], teacher, cfg)
        if ckpt.train_end > s + 1:
            raise ScheduleError("incremental model saw the evaluation day")
        records.append(_record(s, arm, ckpt, days[s + 1]))
        if keep:
            ckpts.append(ckpt)
        prev = ckpt
    return records, ckpts


def _safe_incremental(args):
    arm = args[0]
    try:
        return arm, _incremental_arm(*args), None
    except Exception as exc:  # noqa: BLE001 - one failing arm must not stop the others
        return arm, None, f"{type(exc).__name__}: {exc}"


def run_schedule(stream, w, T, arms, registry_cfg=None, model_cfg=None, warmup_cfg=None,
                 keep_checkpoints=True, jobs=1, on_record=None):
    """Run every arm over update days ``w..T-1``; returns a :class:`ScheduleResult`.

    ``arms`` maps arm names (``batch``, ``batch-<i>``, ``ft``, ``kd_batch``,
    ``kd_self`` or any name whose config has an incremental mode) to
    :class:`TrainConfig`. ``on_record`` is called with each MetricRecord as
    it is produced, in deterministic order.
    """
    if not arms:
        raise ScheduleError("no arms to run")
    days = {b.day_index: b for b in stream}
    _check_stream(days, w, T)
    batch_arms = {a: c for a, c in arms.items() if c.mode == "batch"}
    inc_arms = {a: c for a, c in arms.items() if c.mode != "batch"}
    for a in batch_arms:
        if batch_delay(a) is None:
            raise ScheduleError(f"batch-mode arm {a!r} must be named 'batch' or 'batch-<delay>'")
    if warmup_cfg is None:
        warmup_cfg = arms.get("batch") or next(iter(batch_arms.values()), None) or TrainConfig(mode="batch", epoch_cap=2)

    warm = train_batch([days[d] for d in range(w)], warmup_cfg, registry_cfg, model_cfg, step=w - 1)
    result = ScheduleResult(warm)
    models = _WindowModels(days, w, registry_cfg, model_cfg, warm, warmup_cfg)
    emit = on_record or (lambda rec: None)

    for arm, cfg in batch_arms.items():
        delay = batch_delay(arm)
        records, ckpts = [], []
        try:
            for s in range(w, T):
                ckpt = models.through(max(s - delay, 0), cfg)
                records.append(_record(s, arm, ckpt, days[s + 1]))
                ckpts.append(ckpt)
        except Exception as exc:  # noqa: BLE001
            result.failures[arm] = f"{type(exc).__name__}: {exc}"
            log.error("arm %s failed: %s", arm, exc)
            continue
        for r in records:
            emit(r)
        result.metrics.extend(records)
        if keep_checkpoints:
            result.checkpoints[arm] = ckpts

    teachers = {}
    if any(c.mode == "kd_batch" for c in inc_arms.values()):
        teacher_cfg = arms.get("batch") or warmup_cfg
        for s in range(w, T):
            teachers[s] = models.through(s - 1, teacher_cfg)

    jobs_args = [(a, c, warm, days, w, T, teachers, keep_checkpoints) for a, c in inc_arms.items()]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_safe_incremental, jobs_args))
    else:
        outcomes = [_safe_incremental(a) for a in jobs_args]
    for arm, out, err in outcomes:
        if err is not None:
            result.failures[arm] = err
            log.error("arm %s failed: %s", arm, err)
            continue
        records, ckpts = out
        for r in records:
            emit(r)
        result.metrics.extend(records)
        if keep_checkpoints:
            result.checkpoints[arm] = ckpts
    return result
