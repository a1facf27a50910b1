"""Adam and SGD with three learning-rate groups.

Embedding rows flagged new in the table use ``lr_new``, inherited rows use
``lr_existing`` and all network parameters use ``lr_network``. Embedding
moments are updated lazily: only rows touched by the batch move, with the
bias correction driven by the global step count.
"""

import numpy as np


class Optimizer:
    def __init__(self, kind="adam", lr_network=1e-3, lr_existing=1e-3, lr_new=1e-2,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr_network, self.lr_existing, self.lr_new = lr_network, lr_existing, lr_new
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m, self.v = {}, {}
        self.emb_m = self.emb_v = None

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.optimizer, cfg.lr_network, cfg.lr_existing, cfg.lr_new,
                   cfg.beta1, cfg.beta2, cfg.adam_eps)

    def _grow(self, shape):
        if self.emb_m is None:
            self.emb_m, self.emb_v = np.zeros(shape), np.zeros(shape)
        elif self.emb_m.shape[0] < shape[0]:
            pad = ((0, shape[0] - self.emb_m.shape[0]), (0, 0))
            self.emb_m, self.emb_v = np.pad(self.emb_m, pad), np.pad(self.emb_v, pad)

    def step(self, state, grads):
        table = state.embeddings
        rows = grads.emb_rows
        row_lr = np.where(table.new_mask[rows], self.lr_new, self.lr_existing)[:, None]
        params = state.network()
        if self.kind == "sgd":
            for name, g in grads.network.items():
                params[name] -= self.lr_network * g
            table.rows[rows] -= row_lr * grads.emb_grad
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1, bc2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for name, g in grads.network.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            params[name] -= self.lr_network * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self._grow(table.rows.shape)
        g = grads.emb_grad
        m = self.emb_m[rows] = b1 * self.emb_m[rows] + (1 - b1) * g
        v = self.emb_v[rows] = b2 * self.emb_v[rows] + (1 - b2) * (g * g)
        table.rows[rows] -= row_lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    # -------------------------------------------------------------- persistence

    def state_dict(self):
        arrays = {f"m.{k}": v for k, v in self.m.items()}
        arrays.update({f"v.{k}": v for k, v in self.v.items()})
        if self.emb_m is not None:
            arrays["emb_m"], arrays["emb_v"] = self.emb_m, self.emb_v
        return {"t": self.t}, arrays

    def load_state(self, meta, arrays):
        self.t = int(meta["t"])
        self.m = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("m.")}
        self.v = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("v.")}
        if "emb_m" in arrays:
            self.emb_m, self.emb_v = np.array(arrays["emb_m"]), np.array(arrays["emb_v"])
