"""Embedding table with warm-start (inherit existing rows, draw new ones)."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IdLookupError, ShrinkError


@dataclass(frozen=True)
class InitConfig:
    k: int = 16
    random_scale: float = None
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.random_scale is not None and self.random_scale <= 0:
            raise ValueError("random_scale must be positive")

    @property
    def scale(self):
        return 1.0 / math.sqrt(self.k) if self.random_scale is None else self.random_scale


@dataclass
class EmbeddingTable:
    """Row 0 is Others; ``new_mask[i]`` marks rows initialised this step."""

    rows: np.ndarray
    new_mask: np.ndarray

    @property
    def k(self):
        return self.rows.shape[1]

    @property
    def size(self):
        return self.rows.shape[0]

    @property
    def new_ids(self):
        return set(np.flatnonzero(self.new_mask).tolist())

    def copy(self):
        return EmbeddingTable(self.rows.copy(), self.new_mask.copy())


def _size(policy):
    return policy if isinstance(policy, (int, np.integer)) else policy.next_id


def _draw(cfg, n):
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(-cfg.scale, cfg.scale, size=(n, cfg.k))


def cold_start(policy, cfg):
    """Fresh table with one row per id (plus Others), all random."""
    n = _size(policy)
    return EmbeddingTable(_draw(cfg, n), np.ones(n, dtype=bool))


def warm_start(prev, policy_new, cfg):
    """Copy every existing row bit-exactly; draw rows for ids past the old size."""
    if cfg.k != prev.k:
        raise DimensionError(f"embedding size mismatch: table k={prev.k}, config k={cfg.k}")
    n = _size(policy_new)
    if n < prev.size:
        raise ShrinkError(f"new policy has {n} rows but the table already has {prev.size}")
    fresh = _draw(cfg, n - prev.size)
    rows = np.vstack([prev.rows, fresh]) if fresh.size else prev.rows.copy()
    mask = np.zeros(n, dtype=bool)
    mask[prev.size:] = True
    return EmbeddingTable(rows, mask)


def field_embed(table, ids_per_field, m=None):
    """Instance matrix ``(m, k)``: one row per field, averaging multivalent fields."""
    m = len(ids_per_field) if m is None else m
    if len(ids_per_field) != m:
        raise DimensionError(f"expected {m} fields, got {len(ids_per_field)}")
    out = np.empty((m, table.k))
    for f, ids in enumerate(ids_per_field):
        ids = np.atleast_1d(np.asarray(ids if not isinstance(ids, (set, frozenset)) else sorted(ids)))
        if ids.size == 0:
            raise IdLookupError(f"field {f} has no ids (use Others for absent fields)")
        if ids.min() < 0 or ids.max() >= table.size:
            raise IdLookupError(f"field {f}: id out of range for a table of {table.size} rows")
        out[f] = table.rows[ids].mean(axis=0) if ids.size > 1 else table.rows[ids[0]]
    return out
