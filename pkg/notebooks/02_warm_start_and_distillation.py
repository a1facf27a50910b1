"""
Warm start, fine-tune and self-distillation
===========================================

An incremental step inherits everything it can from yesterday's model:
existing embedding rows are copied, new features get fresh random rows, and
the network weights carry over. We then train on one day, either with plain
cross-entropy (fine-tune) or with an extra pull towards the previous model's
soft predictions (KD-self).
"""

# %%
import numpy as np

from incctr.data import SynthConfig, generate_synthetic
from incctr.evaluation import evaluate
from incctr.model import ModelConfig
from incctr.registry import RegistryConfig
from incctr.trainer import TrainConfig, incremental_step, train_batch

stream = generate_synthetic(SynthConfig(days=10, samples_per_day=8000, m=6, seed=3))
base = train_batch(stream[:5], TrainConfig(mode="batch", epoch_cap=2), RegistryConfig(threshold=5),
                   ModelConfig(k=8, hidden=(32, 16)), step=4)
print("base model:", len(base.registry.policy), "features, AUC on day 5 =", round(evaluate(base, stream[5]).auc, 4))

# %%
# One fine-tune step on day 5. The table grows by the features promoted that
# day, and every inherited row starts from exactly the old values.
lrs = dict(lr_existing=3e-3, lr_new=1e-2, lr_network=1e-3)
ft = incremental_step(base, stream[5], None, TrainConfig(mode="ft", **lrs))
n_old = base.model.embeddings.size
print("new features:", ft.provenance["n_new_features"], "| table rows", n_old, "->", ft.model.embeddings.size)
print("new rows flagged:", int(ft.model.embeddings.new_mask.sum()))

# %%
# Freezing inherited rows is a one-line config change.
frozen = incremental_step(base, stream[5], None, TrainConfig(mode="ft", lr_existing=0.0, lr_new=1e-2))
print("inherited rows untouched:", np.array_equal(frozen.model.embeddings.rows[:n_old], base.model.embeddings.rows))

# %%
# KD-self keeps going while the distillation loss on the day still drops.
kd = incremental_step(base, stream[5], None, TrainConfig(mode="kd_self", **lrs))
print("kd_self epochs:", kd.provenance["epochs"], "KD loss per epoch:",
      [round(x, 4) for x in kd.provenance["kd_history"]])

# %%
for name, ck in [("base", base), ("ft", ft), ("kd_self", kd)]:
    print(f"{name:8} AUC on day 6: {evaluate(ck, stream[6]).auc:.4f}")
