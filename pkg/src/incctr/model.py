"""Compact DCN-style CTR model with hand-written gradients.

Per sample the flattened field embeddings ``x0`` (length ``m*k``) feed two
parallel towers: a cross network ``x_{l+1} = x0 * (x_l . w_l) + b_l + x_l``
and a ReLU MLP. Their outputs are concatenated into a linear head that gives
the logit. Everything is batched over rows of an id matrix.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .embedding import EmbeddingTable
from .errors import DimensionError, IdLookupError, NumericError


@dataclass(frozen=True)
class ModelConfig:
    k: int = 16
    cross_layers: int = 2
    hidden: tuple = (64, 32)
    init_scale: float = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.k < 1 or self.cross_layers < 0 or any(h < 1 for h in self.hidden):
            raise ValueError("invalid model dimensions")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 1.0
    lam: float = 1.0
    l2: float = 0.0
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.lam < 0 or self.l2 < 0:
            raise ValueError("lam and l2 must be non-negative")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")


@dataclass
class ModelState:
    embeddings: EmbeddingTable
    cross_w: list
    cross_b: list
    mlp_w: list
    mlp_b: list
    head_w: np.ndarray
    head_b: np.ndarray
    m: int

    @property
    def d(self):
        return self.m * self.embeddings.k

    def network(self):
        """Non-embedding parameters by name (live references)."""
        out = {}
        for i, (w, b) in enumerate(zip(self.cross_w, self.cross_b)):
            out[f"cross_w.{i}"] = w
            out[f"cross_b.{i}"] = b
        for i, (w, b) in enumerate(zip(self.mlp_w, self.mlp_b)):
            out[f"mlp_w.{i}"] = w
            out[f"mlp_b.{i}"] = b
        out["head_w"] = self.head_w
        out["head_b"] = self.head_b
        return out

    def copy(self):
        return ModelState(
            self.embeddings.copy(),
            [w.copy() for w in self.cross_w], [b.copy() for b in self.cross_b],
            [w.copy() for w in self.mlp_w], [b.copy() for b in self.mlp_b],
            self.head_w.copy(), self.head_b.copy(), self.m)

    def check_finite(self):
        if not np.isfinite(self.embeddings.rows).all():
            raise NumericError("non-finite parameter", "embeddings")
        for name, p in self.network().items():
            if not np.isfinite(p).all():
                raise NumericError("non-finite parameter", name)


def init_network(m, embeddings, cfg, seed):
    """Glorot-uniform weights, zero biases, around an existing table."""
    if embeddings.k != cfg.k:
        raise DimensionError(f"table k={embeddings.k} but model k={cfg.k}")
    rng = np.random.default_rng(seed)
    d = m * cfg.k

    def glorot(fan_in, fan_out, shape):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    cross_w = [glorot(d, 1, d) for _ in range(cfg.cross_layers)]
    cross_b = [np.zeros(d) for _ in range(cfg.cross_layers)]
    mlp_w, mlp_b, width = [], [], d
    for h in cfg.hidden:
        mlp_w.append(glorot(width, h, (width, h)))
        mlp_b.append(np.zeros(h))
        width = h
    head_in = d + width
    return ModelState(embeddings, cross_w, cross_b, mlp_w, mlp_b,
                      glorot(head_in, 1, head_in), np.zeros(1), m)


# ---------------------------------------------------------------- forward

@dataclass
class ForwardResult:
    logits: np.ndarray
    predictions: np.ndarray
    cache: dict = field(default=None, repr=False)


def _embed(table, ids, m):
    ids = np.asarray(ids)
    if ids.ndim not in (2, 3) or ids.shape[1] != m:
        raise DimensionError(f"ids must have shape (n, {m}) or (n, {m}, v), got {ids.shape}")
    if ids.size and ids.max() >= table.size:
        raise IdLookupError(f"feature id {int(ids.max())} out of range for {table.size} rows")
    n = ids.shape[0]
    if ids.ndim == 2:
        if ids.size and ids.min() < 0:
            raise IdLookupError("negative feature id")
        return table.rows[ids].reshape(n, -1), None
    mask = ids >= 0
    counts = mask.sum(axis=2)
    if np.any(counts == 0):
        raise IdLookupError("every field needs at least one id (Others fills absent fields)")
    gathered = table.rows[np.where(mask, ids, 0)] * mask[..., None]
    return (gathered.sum(axis=2) / counts[..., None]).reshape(n, -1), (mask, counts)


def forward(state, ids):
    """Batched forward pass; ``ids`` is ``(n, m)`` or padded ``(n, m, v)``."""
    x0, multi = _embed(state.embeddings, ids, state.m)
    xs, ss = [x0], []
    for w, b in zip(state.cross_w, state.cross_b):
        s = xs[-1] @ w
        ss.append(s)
        xs.append(x0 * s[:, None] + b + xs[-1])
    hs, pre = [x0], []
    for w, b in zip(state.mlp_w, state.mlp_b):
        a = hs[-1] @ w + b
        pre.append(a)
        hs.append(np.maximum(a, 0.0))
    top = np.concatenate([xs[-1], hs[-1]], axis=1)
    z = top @ state.head_w + state.head_b[0]
    if not np.isfinite(z).all():
        raise NumericError("non-finite logit in forward pass", "logit")
    cache = {"ids": np.asarray(ids), "multi": multi, "xs": xs, "ss": ss, "hs": hs, "pre": pre, "top": top}
    return ForwardResult(z, expit(z), cache)


# ---------------------------------------------------------------- losses

def sigmoid(z):
    return expit(z)


def ce_loss(y, yhat, epsilon=1e-7):
    """Binary cross-entropy on a prediction clamped to ``[eps, 1-eps]``."""
    p = np.clip(yhat, epsilon, 1.0 - epsilon)
    return -y * np.log(p) - (1 - y) * np.log1p(-p)


def batch_ce(labels, predictions, epsilon=1e-7):
    labels = np.asarray(labels, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if labels.shape != predictions.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {predictions.shape} predictions")
    return float(np.sum(ce_loss(labels, predictions, epsilon)))


def kd_loss(student_logits, teacher_logits, cfg=LossConfig()):
    """Soft-target cross-entropy between tempered teacher and student sigmoids."""
    z = np.asarray(student_logits, dtype=float)
    zs = np.asarray(teacher_logits, dtype=float)
    if z.shape != zs.shape:
        raise ValueError(f"length mismatch: {z.shape} vs {zs.shape}")
    return float(np.sum(ce_loss(expit(zs / cfg.tau), expit(z / cfg.tau), cfg.epsilon)))


def used_rows(ids):
    ids = np.asarray(ids)
    return np.unique(ids[ids >= 0])


def regularizer(state, rows, l2):
    if l2 == 0:
        return 0.0
    total = sum(float(np.sum(p * p)) for p in state.network().values())
    total += float(np.sum(state.embeddings.rows[rows] ** 2))
    return l2 * total


def combined_loss(labels, student, teacher_logits, state, cfg=LossConfig()):
    """``lam * CE + KD + l2 * R`` over a batch (KD mode)."""
    if teacher_logits is None:
        raise ValueError("teacher logits are required in KD mode")
    rows = used_rows(student.cache["ids"])
    return (cfg.lam * batch_ce(labels, student.predictions, cfg.epsilon)
            + kd_loss(student.logits, teacher_logits, cfg)
            + regularizer(state, rows, cfg.l2))


def objective(state, ids, labels, teacher_logits=None, cfg=LossConfig()):
    """FT objective (CE + R) when ``teacher_logits`` is None, else the KD objective."""
    fwd = forward(state, ids)
    if teacher_logits is not None:
        return combined_loss(labels, fwd, teacher_logits, state, cfg)
    return batch_ce(labels, fwd.predictions, cfg.epsilon) + regularizer(state, used_rows(ids), cfg.l2)


# ---------------------------------------------------------------- backward

@dataclass
class Gradients:
    network: dict
    emb_rows: np.ndarray
    emb_grad: np.ndarray

    def check_finite(self):
        for name, g in self.network.items():
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient", name)
        if not np.isfinite(self.emb_grad).all():
            raise NumericError("non-finite gradient", "embeddings")


def logit_grad(logits, labels, teacher_logits=None, cfg=LossConfig()):
    """d(objective)/d(logit) per sample."""
    g = expit(logits) - labels
    if teacher_logits is None:
        return g
    return cfg.lam * g + (expit(logits / cfg.tau) - expit(np.asarray(teacher_logits) / cfg.tau)) / cfg.tau


def scatter_rows(rows, grads):
    """Sum gradient rows that hit the same embedding id."""
    uniq, inv = np.unique(rows, return_inverse=True)
    inv = inv.reshape(-1)
    out = np.empty((uniq.size, grads.shape[1]))
    for j in range(grads.shape[1]):
        out[:, j] = np.bincount(inv, weights=grads[:, j], minlength=uniq.size)
    return uniq, out


def backward(state, fwd, labels, teacher_logits=None, cfg=LossConfig()):
    """Exact gradients of the selected objective from a cached forward pass."""
    c = fwd.cache
    labels = np.asarray(labels, dtype=float)
    dz = logit_grad(fwd.logits, labels, teacher_logits, cfg)
    d = state.d
    grads = {"head_w": c["top"].T @ dz, "head_b": np.array([dz.sum()])}
    dtop = dz[:, None] * state.head_w[None, :]
    g, dh = dtop[:, :d], dtop[:, d:]

    for j in reversed(range(len(state.mlp_w))):
        da = dh * (c["pre"][j] > 0)
        grads[f"mlp_w.{j}"] = c["hs"][j].T @ da
        grads[f"mlp_b.{j}"] = da.sum(axis=0)
        dh = da @ state.mlp_w[j].T
    dx0 = dh

    x0 = c["xs"][0]
    for l in reversed(range(len(state.cross_w))):
        a = np.einsum("ij,ij->i", g, x0)
        grads[f"cross_w.{l}"] = c["xs"][l].T @ a
        grads[f"cross_b.{l}"] = g.sum(axis=0)
        dx0 = dx0 + g * c["ss"][l][:, None]
        g = g + a[:, None] * state.cross_w[l][None, :]
    dx0 = dx0 + g

    n, m, k = dx0.shape[0], state.m, state.embeddings.k
    ids = c["ids"]
    if c["multi"] is None:
        rows, emb_grad = scatter_rows(ids.reshape(-1), dx0.reshape(n * m, k))
    else:
        mask, counts = c["multi"]
        per_slot = dx0.reshape(n, m, 1, k) / counts[..., None, None]
        per_slot = np.broadcast_to(per_slot, ids.shape + (k,))
        rows, emb_grad = scatter_rows(ids[mask], per_slot[mask])

    if cfg.l2:
        net = state.network()
        for name in grads:
            grads[name] = grads[name] + 2 * cfg.l2 * net[name]
        emb_grad = emb_grad + 2 * cfg.l2 * state.embeddings.rows[rows]
    out = Gradients(grads, rows, emb_grad)
    out.check_finite()
    return out
