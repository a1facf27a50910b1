"""Incremental CTR training: feature registry, warm-started DCN, fine-tune and distillation updates."""

__version__ = "0.1.0"
