"""Feature occurrence counts and the incremental auto-increment id policy.

Features are keyed by :class:`~incctr.data.RawFeature`. With per-field
vocabularies the key keeps its field index; otherwise the field index is
replaced by ``GLOBAL_FIELD`` so equal tokens from different fields share an
id. Id 0 is reserved for the Others dummy feature and is never assigned.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import dumps_json
from .data import OTHERS_TOKEN, RawFeature
from .errors import FormatError, MalformedBlockError, UndefinedRatioError

OTHERS_ID = 0
GLOBAL_FIELD = -1
POLICY_FORMAT = "incctr-policy"
POLICY_VERSION = 1


@dataclass(frozen=True)
class RegistryConfig:
    threshold: int = 19
    per_field_vocab: bool = True

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")


class FrequencyTable:
    """Cumulative occurrence counts. Treat instances as immutable values."""

    def __init__(self, counts=None, per_field=True):
        self.counts = dict(counts or {})
        self.per_field = per_field

    def __getitem__(self, key):
        return self.counts.get(key, 0)

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        return (isinstance(other, FrequencyTable) and self.per_field == other.per_field
                and self.counts == other.counts)

    @property
    def total(self):
        return sum(self.counts.values())


class AssignmentPolicy:
    """Feature -> id map with dense ids ``1..len(mapping)``."""

    others_id = OTHERS_ID

    def __init__(self, mapping=None):
        self.mapping = dict(mapping or {})

    @property
    def next_id(self):
        return len(self.mapping) + 1

    def __len__(self):
        return len(self.mapping)

    def __contains__(self, key):
        return key in self.mapping

    def __eq__(self, other):
        return isinstance(other, AssignmentPolicy) and self.mapping == other.mapping


def canonical(raw, per_field):
    return raw if per_field else RawFeature(GLOBAL_FIELD, raw.token)


def block_features(block, per_field=True):
    """Distinct features of a block as ``{key: (count, first_position)}``.

    ``first_position`` is the row-major index ``row * m + field`` of the first
    occurrence, which fixes the deterministic promotion order.
    """
    block.validate()
    m = block.m
    out = {}
    for f in range(m):
        if block.n == 0:
            break
        uniq, first, cnt = np.unique(block.codes[:, f], return_index=True, return_counts=True)
        toks = block.vocab.tokens[f]
        for code, pos, c in zip(uniq.tolist(), first.tolist(), cnt.tolist()):
            key = canonical(RawFeature(f, toks[code]), per_field)
            prev = out.get(key)
            p = pos * m + f
            out[key] = (c, p) if prev is None else (prev[0] + c, min(prev[1], p))
    return out


def record_occurrences(freq, block):
    """Return a new table with one extra count per field value in ``block``."""
    counts = dict(freq.counts)
    for key, (c, _) in block_features(block, freq.per_field).items():
        counts[key] = counts.get(key, 0) + c
    return FrequencyTable(counts, freq.per_field)


def _eligible(policy, freq, feats, cfg):
    order = sorted(feats.items(), key=lambda kv: kv[1][1])
    return [key for key, _ in order
            if key.token != OTHERS_TOKEN and key not in policy.mapping and freq[key] > cfg.threshold]


def update_policy(policy, freq, block, cfg, feats=None):
    """Assign the next ids to unmapped block features whose count exceeds THR.

    ``freq`` must already include ``block``. Existing entries are kept as-is.
    """
    if feats is None:
        feats = block_features(block, cfg.per_field_vocab)
    mapping = dict(policy.mapping)
    for key in _eligible(policy, freq, feats, cfg):
        mapping[key] = len(mapping) + 1
    return AssignmentPolicy(mapping)


def lookup(policy, raw, per_field=True):
    return policy.mapping.get(canonical(raw, per_field), OTHERS_ID)


def lookup_ids(policy, block, per_field=True):
    """Vectorised :func:`lookup` over a block: an ``(n, m)`` int64 id matrix."""
    ids = np.zeros(block.codes.shape, dtype=np.int64)
    for f in range(block.m):
        if block.n == 0:
            break
        uniq, inv = np.unique(block.codes[:, f], return_inverse=True)
        toks = block.vocab.tokens[f]
        mapped = np.fromiter(
            (lookup(policy, RawFeature(f, toks[c]), per_field) for c in uniq.tolist()),
            dtype=np.int64, count=uniq.size)
        ids[:, f] = mapped[inv.reshape(-1)]
    return ids


def new_feature_proportion(policy_before, block, freq_after, cfg):
    """Fraction of block features newly eligible for ids, relative to the
    size of the policy before the block."""
    if len(policy_before) == 0:
        raise UndefinedRatioError("prior policy is empty; new-feature proportion is undefined")
    feats = block_features(block, cfg.per_field_vocab)
    return len(_eligible(policy_before, freq_after, feats, cfg)) / len(policy_before)


@dataclass
class FeatureRegistry:
    """Registry state threaded through incremental steps."""

    cfg: RegistryConfig
    policy: AssignmentPolicy
    freq: FrequencyTable

    @classmethod
    def empty(cls, cfg=None):
        cfg = cfg or RegistryConfig()
        return cls(cfg, AssignmentPolicy(), FrequencyTable(per_field=cfg.per_field_vocab))

    @classmethod
    def from_window(cls, blocks, cfg=None):
        """Build counts and policy from scratch over a training window."""
        reg = cls.empty(cfg)
        freq = reg.freq
        merged = {}
        for b in blocks:
            feats = block_features(b, reg.cfg.per_field_vocab)
            for key, (c, _) in feats.items():
                freq.counts[key] = freq.counts.get(key, 0) + c
            for key, (c, p) in feats.items():
                if key not in merged:
                    merged[key] = (c, (b.day_index, p))
        order = sorted(merged, key=lambda k: merged[k][1])
        mapping = {}
        for key in order:
            if key.token != OTHERS_TOKEN and freq[key] > reg.cfg.threshold:
                mapping[key] = len(mapping) + 1
        return cls(reg.cfg, AssignmentPolicy(mapping), freq)

    def ingest(self, block, expand=True):
        """Count a block and promote the features that cross the threshold.

        Returns ``(registry, n_promoted)``. With ``expand=False`` counts still
        accumulate but the policy is frozen.
        """
        feats = block_features(block, self.cfg.per_field_vocab)
        counts = dict(self.freq.counts)
        for key, (c, _) in feats.items():
            counts[key] = counts.get(key, 0) + c
        freq = FrequencyTable(counts, self.freq.per_field)
        policy = update_policy(self.policy, freq, block, self.cfg, feats) if expand else self.policy
        return FeatureRegistry(self.cfg, policy, freq), len(policy) - len(self.policy)

    def lookup_ids(self, block):
        return lookup_ids(self.policy, block, self.cfg.per_field_vocab)

    # -------------------------------------------------------------- snapshots

    def to_dict(self):
        inv = {v: k for k, v in self.policy.mapping.items()}
        records = [[k.field_index, k.token, i, self.freq[k]] for i, k in sorted(inv.items())]
        unmapped = sorted(k for k in self.freq.counts if k not in self.policy.mapping)
        records += [[k.field_index, k.token, OTHERS_ID, self.freq[k]] for k in unmapped]
        return {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "cfg": {"threshold": self.cfg.threshold, "per_field_vocab": self.cfg.per_field_vocab},
            "next_id": self.policy.next_id,
            "others_id": OTHERS_ID,
            "records": records,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != POLICY_FORMAT:
            raise FormatError("not a policy snapshot")
        if doc.get("version") != POLICY_VERSION:
            raise FormatError(f"unsupported policy snapshot version {doc.get('version')}")
        cfg = RegistryConfig(**doc["cfg"])
        mapping, counts = {}, {}
        for field_index, token, fid, count in doc["records"]:
            key = RawFeature(int(field_index), token)
            counts[key] = int(count)
            if fid != OTHERS_ID:
                mapping[key] = int(fid)
        if sorted(mapping.values()) != list(range(1, len(mapping) + 1)) or doc["next_id"] != len(mapping) + 1:
            raise FormatError("policy snapshot ids are not dense")
        return cls(cfg, AssignmentPolicy(mapping), FrequencyTable(counts, cfg.per_field_vocab))

    def dumps(self):
        return dumps_json(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
