"""Day blocks, Criteo ingestion, preprocessing and the synthetic drifting stream.

A stream is a list of :class:`DayBlock` sharing one :class:`Vocabulary`.
Blocks store integer codes into the per-field token tables so that counting
and id lookup can be vectorised; the registry still keys features by the
``(field_index, token)`` pair.
"""

import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import container
from .errors import MalformedBlockError, ParseError, RatioUnattainableError, ScheduleError

N_NUMERIC = 13
N_CATEGORICAL = 26
CRITEO_COLUMNS = 1 + N_NUMERIC + N_CATEGORICAL
OTHERS_TOKEN = "__others__"
BLOCK_KIND = "dayblock"
BLOCK_VERSION = 1


class RawFeature(NamedTuple):
    field_index: int
    token: str


class Sample(NamedTuple):
    label: int
    fields: tuple


def missing_token(field_index):
    return f"__missing_{field_index}__"


class Vocabulary:
    """Per-field token tables shared by every block of a stream."""

    def __init__(self, m):
        self.tokens = [[] for _ in range(m)]
        self._index = [{} for _ in range(m)]

    @property
    def m(self):
        return len(self.tokens)

    def encode(self, field_index, token):
        idx = self._index[field_index]
        code = idx.get(token)
        if code is None:
            code = len(self.tokens[field_index])
            idx[token] = code
            self.tokens[field_index].append(token)
        return code

    def encode_many(self, field_index, tokens):
        return np.fromiter((self.encode(field_index, t) for t in tokens), dtype=np.int32, count=len(tokens))

    def size(self, field_index):
        return len(self.tokens[field_index])


@dataclass
class DayBlock:
    day_index: int
    labels: np.ndarray
    codes: np.ndarray
    vocab: Vocabulary

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.codes = np.asarray(self.codes, dtype=np.int32)
        if self.codes.ndim != 2 or self.codes.shape[0] != self.labels.shape[0]:
            raise MalformedBlockError(
                f"codes shape {self.codes.shape} does not match {self.labels.shape[0]} labels")
        if self.codes.shape[1] != self.vocab.m:
            raise MalformedBlockError(
                f"block has {self.codes.shape[1]} fields but vocabulary has {self.vocab.m}")

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def m(self):
        return self.codes.shape[1]

    def token(self, row, field_index):
        return self.vocab.tokens[field_index][self.codes[row, field_index]]

    def samples(self):
        for i in range(self.n):
            feats = tuple(RawFeature(f, self.token(i, f)) for f in range(self.m))
            yield Sample(int(self.labels[i]), feats)

    def subset(self, rows):
        return DayBlock(self.day_index, self.labels[rows], self.codes[rows], self.vocab)

    def validate(self):
        """Check codes against the vocabulary; raises MalformedBlockError."""
        if self.n == 0:
            return
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise MalformedBlockError("labels must be 0 or 1")
        for f in range(self.m):
            col = self.codes[:, f]
            if col.min() < 0 or col.max() >= self.vocab.size(f):
                raise MalformedBlockError(f"field {f}: token code out of range")

    @classmethod
    def from_samples(cls, day_index, samples, vocab=None, m=None):
        samples = list(samples)
        if m is None:
            if vocab is not None:
                m = vocab.m
            elif samples:
                m = len(samples[0].fields)
            else:
                raise MalformedBlockError("cannot infer field count from an empty sample list")
        vocab = vocab if vocab is not None else Vocabulary(m)
        codes = np.zeros((len(samples), m), dtype=np.int32)
        labels = np.zeros(len(samples), dtype=np.int8)
        for i, s in enumerate(samples):
            if len(s.fields) != m:
                raise MalformedBlockError(f"sample {i} has {len(s.fields)} fields, expected {m}")
            labels[i] = s.label
            for f, feat in enumerate(s.fields):
                if isinstance(feat, RawFeature):
                    if not 0 <= feat.field_index < m:
                        raise MalformedBlockError(f"field_index {feat.field_index} out of range [0, {m})")
                    if feat.field_index != f:
                        raise MalformedBlockError(
                            f"sample {i}: feature for field {feat.field_index} in slot {f}")
                    tok = feat.token
                else:
                    tok = feat
                if not tok:
                    raise MalformedBlockError(f"sample {i}, field {f}: empty token")
                codes[i, f] = vocab.encode(f, tok)
        return cls(day_index, labels, codes, vocab)


def concat_blocks(blocks):
    """Stack blocks that share a vocabulary; keeps the first day index."""
    if not blocks:
        raise MalformedBlockError("nothing to concatenate")
    vocab = blocks[0].vocab
    if any(b.vocab is not vocab for b in blocks):
        raise MalformedBlockError("blocks must share one vocabulary")
    return DayBlock(blocks[0].day_index,
                    np.concatenate([b.labels for b in blocks]),
                    np.concatenate([b.codes for b in blocks]), vocab)


# ---------------------------------------------------------------- Criteo

def parse_criteo(line, line_no=None):
    """Split one Criteo TSV line into ``(label, numerics, categoricals)``.

    Missing values come back as ``None``.
    """
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) != CRITEO_COLUMNS:
        raise ParseError(f"expected {CRITEO_COLUMNS} columns, got {len(cols)}", line_no)
    if cols[0] not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got {cols[0]!r}", line_no)
    nums = []
    for c in cols[1:1 + N_NUMERIC]:
        if c == "":
            nums.append(None)
            continue
        try:
            nums.append(int(c))
        except ValueError:
            try:
                nums.append(float(c))
            except ValueError:
                raise ParseError(f"bad numeric value {c!r}", line_no) from None
    cats = [c if c != "" else None for c in cols[1 + N_NUMERIC:]]
    return int(cols[0]), nums, cats


def discretize(v):
    """Map a numeric value to its categorical token.

    ``v > 2`` becomes ``floor(ln(v)**2)``; smaller values (zero and negatives
    included) keep their integer value. ``None`` stays ``None`` so callers can
    substitute the per-field missing token. Strings are already tokens and
    pass through unchanged.
    """
    if v is None or isinstance(v, str):
        return v
    if v > 2:
        return str(int(math.floor(math.log(v) ** 2)))
    return str(int(math.floor(v)))


def criteo_tokens(nums, cats):
    toks = []
    for i, v in enumerate(nums):
        t = discretize(v)
        toks.append(missing_token(i) if t is None else t)
    for j, c in enumerate(cats):
        toks.append(missing_token(N_NUMERIC + j) if c is None else c)
    return toks


def read_criteo_day(path, day_index, vocab=None):
    """Parse a Criteo TSV day file into a block.

    Returns ``(block, errors)`` where ``errors`` lists ParseError instances for
    skipped lines.
    """
    m = N_NUMERIC + N_CATEGORICAL
    vocab = vocab if vocab is not None else Vocabulary(m)
    labels, rows, errors = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                label, nums, cats = parse_criteo(line, line_no)
            except ParseError as exc:
                errors.append(exc)
                continue
            toks = criteo_tokens(nums, cats)
            labels.append(label)
            rows.append([vocab.encode(f, t) for f, t in enumerate(toks)])
    codes = np.array(rows, dtype=np.int32).reshape(len(rows), m)
    return DayBlock(day_index, np.array(labels, dtype=np.int8), codes, vocab), errors


_DAY_RE = re.compile(r"(\d+)")


def day_index_from_name(name):
    found = _DAY_RE.findall(Path(name).stem)
    if not found:
        raise ParseError(f"cannot infer a day index from file name {name!r}")
    return int(found[-1])


# ---------------------------------------------------------------- preprocessing

def negative_keep_probability(n_pos, n_neg, target_ratio):
    if not 0 < target_ratio < 1:
        raise ValueError("target ratio must lie in (0, 1)")
    if n_pos == 0:
        raise RatioUnattainableError("block has no positives; target positive ratio is unattainable")
    if n_neg == 0:
        return 1.0
    return min(1.0, n_pos * (1 - target_ratio) / (target_ratio * n_neg))


def downsample_negatives(block, target_ratio, seed):
    """Keep every positive and each negative with probability p.

    p solves ``pos / (pos + p * neg) = target_ratio`` (capped at 1), so the
    expected positive ratio hits the target.
    """
    pos = block.labels == 1
    p = negative_keep_probability(int(pos.sum()), int((~pos).sum()), target_ratio)
    if p >= 1.0:
        return block.subset(np.arange(block.n))
    rng = np.random.default_rng([seed, block.day_index])
    keep = pos | (rng.random(block.n) < p)
    return block.subset(np.flatnonzero(keep))


def token_counts(blocks):
    """Per-field occurrence counts of token codes over ``blocks``."""
    vocab = blocks[0].vocab
    counts = [np.zeros(vocab.size(f), dtype=np.int64) for f in range(vocab.m)]
    for b in blocks:
        for f in range(b.m):
            c = np.bincount(b.codes[:, f], minlength=vocab.size(f))
            counts[f][: c.size] += c
    return counts


def filter_infrequent(blocks, min_count, scope=None):
    """Rewrite tokens seen fewer than ``min_count`` times to the Others token.

    Counts are taken over ``scope`` (defaults to ``blocks`` themselves); pass
    the training window as scope to avoid peeking at test days.
    """
    if min_count <= 0 or not blocks:
        return [b.subset(np.arange(b.n)) for b in blocks]
    scope = blocks if scope is None else scope
    vocab = blocks[0].vocab
    counts = token_counts(scope)
    out = []
    for b in blocks:
        codes = b.codes.copy()
        for f in range(b.m):
            others = vocab.encode(f, OTHERS_TOKEN)
            cnt = counts[f]
            if cnt.size < vocab.size(f):
                cnt = np.pad(cnt, (0, vocab.size(f) - cnt.size))
            rare = cnt[codes[:, f]] < min_count
            rare &= codes[:, f] != others
            codes[rare, f] = others
        out.append(DayBlock(b.day_index, b.labels.copy(), codes, vocab))
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Criteo preprocessing knobs: negative downsampling and rare-token filtering."""

    neg_sample_target_ratio: float = 0.5
    filter_min_count: int = 20
    log_base: str = "natural"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.neg_sample_target_ratio < 1:
            raise ValueError("neg_sample_target_ratio must lie in (0, 1)")
        if self.filter_min_count < 0:
            raise ValueError("filter_min_count must be non-negative")
        if self.log_base != "natural":
            raise ValueError("only the natural log base is supported")

    def to_dict(self):
        return asdict(self)


def preprocess(blocks, cfg):
    """Downsample negatives per day, then filter rare tokens over the whole range."""
    sampled = [downsample_negatives(b, cfg.neg_sample_target_ratio, cfg.seed) for b in blocks]
    return filter_infrequent(sampled, cfg.filter_min_count)


def slice_windows(stream, s, w):
    """Return (blocks with day in [s, s+w), blocks with day in [s, s+1))."""
    days = {b.day_index: b for b in stream}
    if w < 1 or s < 0 or any(d not in days for d in range(s, s + w)):
        raise ScheduleError(f"window [{s}, {s + w}) is not covered by the stream")
    window = [days[d] for d in range(s, s + w)]
    return window, [days[s]]


# ---------------------------------------------------------------- block files

def write_block(path, block):
    """Serialise a block with its own compact token tables."""
    tables, local = [], np.empty_like(block.codes)
    for f in range(block.m):
        used, inv = np.unique(block.codes[:, f], return_inverse=True)
        tables.append([block.vocab.tokens[f][c] for c in used])
        local[:, f] = inv.reshape(-1)
    meta = {"day_index": int(block.day_index), "m": int(block.m), "n": int(block.n), "tokens": tables}
    container.write(path, BLOCK_KIND, BLOCK_VERSION, meta,
                    {"labels": block.labels.astype(np.int8), "codes": local.astype(np.int32)})


def read_block(path, vocab=None):
    version, meta, arrays = container.read(path, kind=BLOCK_KIND)
    if version != BLOCK_VERSION:
        raise MalformedBlockError(f"unsupported block version {version}")
    m = meta["m"]
    vocab = vocab if vocab is not None else Vocabulary(m)
    if vocab.m != m:
        raise MalformedBlockError(f"block has {m} fields, stream vocabulary has {vocab.m}")
    local = arrays["codes"].reshape(meta["n"], m)
    codes = np.empty_like(local)
    for f in range(m):
        remap = vocab.encode_many(f, meta["tokens"][f])
        codes[:, f] = remap[local[:, f]] if local.shape[0] else local[:, f]
    return DayBlock(meta["day_index"], arrays["labels"], codes, vocab)


def block_path(out_dir, day_index):
    return Path(out_dir) / f"day_{day_index:03d}.blk"


def write_stream(out_dir, stream):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for b in stream:
        p = block_path(out_dir, b.day_index)
        write_block(p, b)
        paths.append(p)
    return paths


def read_stream(in_dir):
    paths = sorted(Path(in_dir).glob("day_*.blk"), key=lambda p: day_index_from_name(p.name))
    if not paths:
        raise MalformedBlockError(f"no day_*.blk files in {in_dir}")
    vocab = None
    stream = []
    for p in paths:
        b = read_block(p, vocab)
        vocab = b.vocab
        stream.append(b)
    days = [b.day_index for b in stream]
    if any(b <= a for a, b in zip(days, days[1:])):
        raise MalformedBlockError("day indices must be strictly increasing")
    return stream


# ---------------------------------------------------------------- synthetic stream

def default_new_feature_schedule(days, start=0.12, end=0.04, decay_days=14):
    """Per-day new-feature fractions: 0 on day 0, then a geometric decay from
    ``start`` (day 1) to ``end`` (day ``decay_days``), flat afterwards."""
    sched = [0.0]
    for d in range(1, days):
        if d >= decay_days:
            sched.append(end)
        else:
            frac = (d - 1) / (decay_days - 1)
            sched.append(start * (end / start) ** frac)
    return sched[:days]


@dataclass
class SynthConfig:
    days: int = 30
    samples_per_day: int = 20000
    m: int = 8
    base_vocab_per_field: int = 100
    new_feature_rate_schedule: list = None
    drift_rate: float = 0.1
    positive_rate: float = 0.3
    seed: int = 0
    weight_scale: float = 0.6
    zipf_exponent: float = 1.0
    min_intro_count: int = 25
    interaction_rank: int = 2
    interaction_scale: float = 0.5

    def __post_init__(self):
        for name in ("days", "samples_per_day", "m", "base_vocab_per_field"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.positive_rate < 1:
            raise ValueError("positive_rate must lie in (0, 1)")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be non-negative")
        if self.new_feature_rate_schedule is None:
            self.new_feature_rate_schedule = default_new_feature_schedule(self.days)
        self.new_feature_rate_schedule = [float(r) for r in self.new_feature_rate_schedule]
        if len(self.new_feature_rate_schedule) < self.days:
            raise ValueError("new_feature_rate_schedule must cover every day")
        if any(not 0 <= r <= 1 for r in self.new_feature_rate_schedule):
            raise ValueError("new-feature rates must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class _FieldTruth:
    weight: np.ndarray
    partner: np.ndarray
    factors: np.ndarray
    factor_partner: np.ndarray
    popularity: np.ndarray


def _rotate(a, b, theta):
    c, s = math.cos(theta), math.sin(theta)
    return c * a + s * b, c * b - s * a


def generate_synthetic(cfg):
    """Draw a drifting stream from a latent logistic model over field tokens.

    Each field starts with ``base_vocab_per_field`` Zipf-popular tokens. On
    day ``t > 0`` every field gains ``round(rate_t * |active tokens|)`` new
    tokens, each placed in at least ``min_intro_count`` samples of that day so
    that a registry threshold below that count promotes them immediately.
    Latent token weights rotate towards an independent partner direction by
    ``drift_rate`` radians per day, preserving their marginal scale.
    """
    rng = np.random.default_rng(cfg.seed)
    vocab = Vocabulary(cfg.m)
    r, s = cfg.interaction_rank, cfg.weight_scale
    fields = []
    for f in range(cfg.m):
        nb = cfg.base_vocab_per_field
        truth = _FieldTruth(
            weight=rng.normal(0, s, nb), partner=rng.normal(0, s, nb),
            factors=rng.normal(0, 1, (nb, r)), factor_partner=rng.normal(0, 1, (nb, r)),
            popularity=1.0 / np.arange(1, nb + 1) ** cfg.zipf_exponent)
        for j in range(nb):
            vocab.encode(f, f"f{f}_t{j}")
        fields.append(truth)
    pair_scale = cfg.interaction_scale / math.sqrt(max(1, cfg.m * (cfg.m - 1) / 2) * max(r, 1))

    n = cfg.samples_per_day
    stream = []
    for day in range(cfg.days):
        codes = np.empty((n, cfg.m), dtype=np.int32)
        for f, truth in enumerate(fields):
            if day > 0 and cfg.drift_rate > 0:
                truth.weight, truth.partner = _rotate(truth.weight, truth.partner, cfg.drift_rate)
                truth.factors, truth.factor_partner = _rotate(truth.factors, truth.factor_partner, cfg.drift_rate)
            n_new = 0
            if day > 0:
                n_new = int(round(cfg.new_feature_rate_schedule[day] * truth.weight.size))
            if n_new:
                first = truth.weight.size
                if n_new * cfg.min_intro_count > n:
                    raise ValueError("samples_per_day too small to introduce the scheduled new tokens")
                truth.weight = np.concatenate([truth.weight, rng.normal(0, s, n_new)])
                truth.partner = np.concatenate([truth.partner, rng.normal(0, s, n_new)])
                truth.factors = np.vstack([truth.factors, rng.normal(0, 1, (n_new, r))])
                truth.factor_partner = np.vstack([truth.factor_partner, rng.normal(0, 1, (n_new, r))])
                ranks = rng.integers(1, cfg.base_vocab_per_field + 1, n_new)
                truth.popularity = np.concatenate([truth.popularity, 1.0 / ranks ** cfg.zipf_exponent])
                for j in range(first, first + n_new):
                    vocab.encode(f, f"f{f}_t{j}")
            p = truth.popularity / truth.popularity.sum()
            col = rng.choice(p.size, size=n, p=p).astype(np.int32)
            if n_new:
                slots = rng.permutation(n)[: n_new * cfg.min_intro_count]
                col[slots] = np.repeat(np.arange(first, first + n_new), cfg.min_intro_count)
            codes[:, f] = col

        logit = np.zeros(n)
        for f, truth in enumerate(fields):
            logit += truth.weight[codes[:, f]]
        if r and cfg.interaction_scale:
            fac = [truth.factors[codes[:, f]] for f, truth in enumerate(fields)]
            total = np.sum(fac, axis=0)
            pair = 0.5 * ((total * total).sum(1) - sum((x * x).sum(1) for x in fac))
            logit += pair_scale * pair
        bias = brentq(lambda b: expit(logit + b).mean() - cfg.positive_rate, -50, 50, xtol=1e-12)
        labels = (rng.random(n) < expit(logit + bias)).astype(np.int8)
        stream.append(DayBlock(day, labels, codes, vocab))
    return stream
