"""Checkpoint files: container header (provenance, configs, policy) plus
float64 parameter sections."""

from dataclasses import asdict

import numpy as np

from . import container
from .embedding import EmbeddingTable
from .errors import FormatError
from .model import ModelConfig, ModelState
from .optim import Optimizer
from .registry import FeatureRegistry
from .trainer import Checkpoint, TrainConfig

KIND = "checkpoint"
VERSION = 1


def _model_arrays(state):
    arrays = {"embeddings": state.embeddings.rows.astype("<f8"),
              "new_mask": state.embeddings.new_mask.astype(np.uint8)}
    for name, p in state.network().items():
        arrays[f"param.{name}"] = p.astype("<f8")
    return arrays


def save(path, ckpt):
    arrays = _model_arrays(ckpt.model)
    meta = {
        "provenance": ckpt.provenance,
        "registry": ckpt.registry.to_dict(),
        "model_cfg": asdict(ckpt.model_cfg),
        "train_cfg": ckpt.train_cfg.to_dict(),
        "m": ckpt.model.m,
        "optimizer": None,
    }
    if ckpt.optimizer is not None:
        opt_meta, opt_arrays = ckpt.optimizer.state_dict()
        opt_meta["kind"] = ckpt.optimizer.kind
        meta["optimizer"] = opt_meta
        arrays.update({f"opt.{k}": v.astype("<f8") for k, v in opt_arrays.items()})
    container.write(path, KIND, VERSION, meta, arrays)


def load(path):
    version, meta, arrays = container.read(path, kind=KIND)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    model_cfg = ModelConfig(**meta["model_cfg"])
    train_cfg = TrainConfig.from_dict(meta["train_cfg"])
    table = EmbeddingTable(arrays["embeddings"], arrays["new_mask"].astype(bool))
    m = meta["m"]

    def layers(prefix):
        out, i = [], 0
        while f"param.{prefix}.{i}" in arrays:
            out.append(arrays[f"param.{prefix}.{i}"])
            i += 1
        return out

    state = ModelState(table, layers("cross_w"), layers("cross_b"), layers("mlp_w"), layers("mlp_b"),
                       arrays["param.head_w"], arrays["param.head_b"], m)
    if len(state.cross_w) != model_cfg.cross_layers or len(state.mlp_w) != len(model_cfg.hidden):
        raise FormatError("parameter sections do not match the model config")
    opt = None
    if meta["optimizer"] is not None:
        opt = Optimizer.from_config(train_cfg)
        opt.load_state(meta["optimizer"], {k[4:]: v for k, v in arrays.items() if k.startswith("opt.")})
    return Checkpoint(FeatureRegistry.from_dict(meta["registry"]), state, model_cfg, train_cfg,
                      meta["provenance"], opt, version)
