"""Batch-window training, warm-started incremental steps, FT and KD loops."""

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import concat_blocks
from .embedding import InitConfig, cold_start, warm_start
from .errors import ConfigError, MalformedBlockError, NumericError, ScheduleError, TeacherError
from .model import LossConfig, ModelConfig, backward, batch_ce, forward, init_network, kd_loss
from .optim import Optimizer
from .registry import FeatureRegistry, RegistryConfig

MODES = ("batch", "ft", "kd_batch", "kd_self")
INFERENCE_CHUNK = 8192


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "ft"
    epoch_cap: int = 1
    kd_epoch_ceiling: int = 5
    lr_existing: float = 1e-3
    lr_new: float = 1e-2
    lr_network: float = 1e-3
    batch_size: int = 256
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    expand_features: bool = True
    inherit_moments: bool = False
    kd_stop_measure: str = "inference"
    validate_refit: bool = False

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epoch_cap < 1 or self.kd_epoch_ceiling < 1 or self.batch_size < 1:
            raise ConfigError("epoch_cap, kd_epoch_ceiling and batch_size must be >= 1")
        if min(self.lr_existing, self.lr_new, self.lr_network) < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.lr_existing > self.lr_new:
            raise ConfigError("lr_existing must not exceed lr_new")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.kd_stop_measure not in ("inference", "train_avg"):
            raise ConfigError("kd_stop_measure must be 'inference' or 'train_avg'")

    @property
    def is_kd(self):
        return self.mode in ("kd_batch", "kd_self")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainStats:
    epochs: int = 0
    steps: int = 0
    ce_history: list = field(default_factory=list)
    kd_history: list = field(default_factory=list)
    wall_ms: float = 0.0


@dataclass
class Checkpoint:
    """A trained model plus everything needed to continue or reproduce it."""

    registry: FeatureRegistry
    model: object
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    provenance: dict
    optimizer: Optimizer = None
    version: int = 1

    @property
    def step(self):
        return self.provenance["step"]

    @property
    def train_end(self):
        """First day index *after* the data this model has seen."""
        return self.provenance["train_end"]


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def _ids_labels(registry, blocks):
    block = concat_blocks(blocks) if len(blocks) > 1 else blocks[0]
    return registry.lookup_ids(block), block.labels.astype(float)


def logits_for(state, ids):
    """Forward pass in fixed-size chunks; no state is touched."""
    out = np.empty(ids.shape[0])
    for lo in range(0, ids.shape[0], INFERENCE_CHUNK):
        out[lo:lo + INFERENCE_CHUNK] = forward(state, ids[lo:lo + INFERENCE_CHUNK]).logits
    return out


def inference(ckpt, block):
    """Logits and predictions of a checkpoint on a raw block (unknowns -> Others)."""
    from scipy.special import expit

    z = logits_for(ckpt.model, ckpt.registry.lookup_ids(block))
    return z, expit(z)


def _train_epoch(state, opt, ids, labels, teacher_logits, cfg, rng):
    order = rng.permutation(ids.shape[0])
    ce_sum = kd_sum = 0.0
    steps = 0
    for lo in range(0, order.size, cfg.batch_size):
        idx = order[lo:lo + cfg.batch_size]
        zs = None if teacher_logits is None else teacher_logits[idx]
        fwd = forward(state, ids[idx])
        ce = batch_ce(labels[idx], fwd.predictions, cfg.loss.epsilon)
        if not math.isfinite(ce):
            raise NumericError(f"non-finite loss at step {steps}", "loss")
        ce_sum += ce
        if zs is not None:
            kd_sum += kd_loss(fwd.logits, zs, cfg.loss)
        grads = backward(state, fwd, labels[idx], zs, cfg.loss)
        opt.step(state, grads)
        steps += 1
    return ce_sum, kd_sum, steps


def _rng(cfg, rng, salt):
    return rng if rng is not None else np.random.default_rng(derive_seed(cfg.seed, salt))


def train_with_ft(state, ids, labels, cfg, optimizer=None, rng=None):
    """Minimise CE (+ L2) for exactly ``epoch_cap`` epochs; updates ``state`` in place."""
    opt = optimizer or Optimizer.from_config(cfg)
    rng = _rng(cfg, rng, 1)
    stats = TrainStats()
    n = max(ids.shape[0], 1)
    while stats.epochs < cfg.epoch_cap:
        ce_sum, _, steps = _train_epoch(state, opt, ids, labels, None, cfg, rng)
        stats.epochs += 1
        stats.steps += steps
        stats.ce_history.append(ce_sum / n)
    return state, stats


def train_with_kd(state, ids, labels, teacher_logits, cfg, optimizer=None, rng=None):
    """Minimise ``lam*CE + KD + L2`` until the KD loss stops decreasing.

    The KD loss on the block is measured before the first epoch and after
    every epoch (``kd_stop_measure='inference'``); with ``'train_avg'`` the
    running average over the epoch's training batches is used instead and
    the pre-training value counts as +inf. Training stops once at least
    ``epoch_cap`` epochs are done and the latest value is not below the
    previous one, or at the hard ceiling.
    """
    if teacher_logits is None:
        raise TeacherError("KD training needs teacher logits")
    teacher_logits = np.asarray(teacher_logits, dtype=float)
    if teacher_logits.shape != (ids.shape[0],):
        raise ValueError("teacher logits must have one entry per sample")
    opt = optimizer or Optimizer.from_config(cfg)
    rng = _rng(cfg, rng, 2)
    stats = TrainStats()
    n = max(ids.shape[0], 1)
    by_inference = cfg.kd_stop_measure == "inference"

    def measure():
        return kd_loss(logits_for(state, ids), teacher_logits, cfg.loss) / n

    last = measure() if by_inference else math.inf
    stats.kd_history.append(last)
    ceiling = max(cfg.kd_epoch_ceiling, cfg.epoch_cap)
    while True:
        ce_sum, kd_sum, steps = _train_epoch(state, opt, ids, labels, teacher_logits, cfg, rng)
        stats.epochs += 1
        stats.steps += steps
        stats.ce_history.append(ce_sum / n)
        cur = measure() if by_inference else kd_sum / n
        stats.kd_history.append(cur)
        stalled = cur >= last
        last = cur
        if (stats.epochs >= cfg.epoch_cap and stalled) or stats.epochs >= ceiling:
            break
    return state, stats


def _auc(scores, labels):
    from .evaluation import auc

    return auc(scores, labels)


def _fresh_model(window, cfg, registry_cfg, model_cfg, salt):
    reg = FeatureRegistry.from_window(window, registry_cfg)
    init = InitConfig(model_cfg.k, model_cfg.init_scale, derive_seed(cfg.seed, salt, 11))
    table = cold_start(reg.policy, init)
    state = init_network(window[0].m, table, model_cfg, derive_seed(cfg.seed, salt, 12))
    return reg, state


def train_batch(window, cfg=None, registry_cfg=None, model_cfg=None, step=0):
    """Train from scratch on a window of day blocks.

    The policy and counts are rebuilt over the window and every embedding is
    cold-started. With ``validate_refit`` the epoch count is first chosen by
    AUC on the window's last day (trained on the rest), then the model is
    refit on the whole window for that many epochs.
    """
    if not window:
        raise ScheduleError("batch training needs a non-empty window")
    cfg = cfg or TrainConfig(mode="batch")
    registry_cfg = registry_cfg or RegistryConfig()
    model_cfg = model_cfg or ModelConfig()
    days = [b.day_index for b in window]
    salt = derive_seed(days[0], days[-1], step)
    t0 = time.perf_counter()
    epochs_total = 0
    epochs = cfg.epoch_cap
    if cfg.validate_refit and len(window) > 1:
        reg, state = _fresh_model(window[:-1], cfg, registry_cfg, model_cfg, salt)
        ids, labels = _ids_labels(reg, window[:-1])
        val_ids = reg.lookup_ids(window[-1])
        opt = Optimizer.from_config(cfg)
        rng = np.random.default_rng(derive_seed(cfg.seed, salt, 13))
        one = replace(cfg, epoch_cap=1)
        best, best_auc = 1, -1.0
        for e in range(1, cfg.epoch_cap + 1):
            train_with_ft(state, ids, labels, one, opt, rng)
            score = _auc(logits_for(state, val_ids), window[-1].labels)
            if score > best_auc:
                best, best_auc = e, score
        epochs_total += cfg.epoch_cap
        epochs = best
    reg, state = _fresh_model(window, cfg, registry_cfg, model_cfg, salt)
    ids, labels = _ids_labels(reg, window)
    state, stats = train_with_ft(state, ids, labels, replace(cfg, epoch_cap=epochs),
                                 Optimizer.from_config(cfg),
                                 np.random.default_rng(derive_seed(cfg.seed, salt, 14)))
    epochs_total += stats.epochs
    state.check_finite()
    wall_ms = (time.perf_counter() - t0) * 1e3
    prov = {"step": int(step), "mode": "batch", "train_start": int(days[0]), "train_end": int(days[-1]) + 1,
            "epochs": int(epochs_total), "wall_ms": wall_ms, "n_features": len(reg.policy)}
    return Checkpoint(reg, state, model_cfg, cfg, prov)


def incremental_step(prev, block, teacher=None, cfg=None):
    """One incremental update of ``prev`` on ``block``.

    Extends the feature policy, warm-starts the embedding table, inherits the
    network and trains with FT or KD. ``kd_self`` always distils from
    ``prev``; ``kd_batch`` needs an explicit batch-mode teacher.
    """
    cfg = cfg or TrainConfig()
    if cfg.mode == "batch":
        raise ConfigError("incremental_step needs mode ft, kd_batch or kd_self")
    if cfg.mode == "kd_self":
        if teacher is not None and teacher is not prev:
            raise TeacherError("kd_self distils from the previous incremental model only")
        teacher = prev
    elif cfg.mode == "kd_batch" and teacher is None:
        raise TeacherError("kd_batch requires a batch-mode teacher checkpoint")
    elif cfg.mode == "ft" and teacher is not None:
        raise TeacherError("ft mode takes no teacher")
    if block.m != prev.model.m:
        raise MalformedBlockError(f"block has {block.m} fields, model expects {prev.model.m}")

    t0 = time.perf_counter()
    step = prev.step + 1
    reg, n_new = prev.registry.ingest(block, expand=cfg.expand_features)
    init = InitConfig(prev.model_cfg.k, prev.model_cfg.init_scale, derive_seed(cfg.seed, step, 21))
    state = prev.model.copy()
    state.embeddings = warm_start(prev.model.embeddings, reg.policy, init)
    ids = reg.lookup_ids(block)
    labels = block.labels.astype(float)
    opt = Optimizer.from_config(cfg)
    if cfg.inherit_moments and prev.optimizer is not None:
        opt.load_state(*prev.optimizer.state_dict())
    rng = np.random.default_rng(derive_seed(cfg.seed, step, 22))
    if cfg.is_kd:
        zs = logits_for(teacher.model, teacher.registry.lookup_ids(block))
        state, stats = train_with_kd(state, ids, labels, zs, cfg, opt, rng)
    else:
        state, stats = train_with_ft(state, ids, labels, cfg, opt, rng)
    state.check_finite()
    wall_ms = (time.perf_counter() - t0) * 1e3
    prov = {"step": step, "mode": cfg.mode,
            "train_start": int(min(prev.provenance["train_start"], block.day_index)),
            "train_end": int(max(prev.train_end, block.day_index + 1)),
            "epochs": int(stats.epochs), "wall_ms": wall_ms, "n_features": len(reg.policy),
            "n_new_features": int(n_new), "kd_history": [float(x) for x in stats.kd_history]}
    if cfg.mode == "kd_batch":
        prov["teacher_train_end"] = int(teacher.train_end)
    return Checkpoint(reg, state, prev.model_cfg, cfg, prov, opt)
