"""
How fast does a frozen model go stale?
======================================

Train once on a week of data, stop updating, and score each following day.
On a drifting stream the AUC slides; on a stationary one it only wobbles.
"""

# %%
import numpy as np

from incctr.data import SynthConfig, generate_synthetic
from incctr.evaluation import delay_degradation
from incctr.model import ModelConfig
from incctr.registry import RegistryConfig
from incctr.trainer import TrainConfig, train_batch

W, GAPS = 7, 5


def curve(drift, seed, new_features=True):
    days = W + GAPS + 1
    sched = None if new_features else [0.0] * days
    stream = generate_synthetic(SynthConfig(days=days, samples_per_day=10000, drift_rate=drift,
                                            seed=seed, new_feature_rate_schedule=sched))
    ck = train_batch(stream[:W], TrainConfig(mode="batch", epoch_cap=2), RegistryConfig(threshold=5),
                     ModelConfig(k=8, hidden=(32, 16)), step=W - 1)
    return delay_degradation(ck, stream, W, GAPS)


# %%
for drift in (0.0, 0.05, 0.1):
    curves = [curve(drift, s, new_features=drift > 0) for s in range(2)]
    mean = np.mean([c.relative_degradation for c in curves], axis=0)
    print(f"drift {drift:4.2f}  AUC drop % by gap:", " ".join(f"{x:6.2f}" for x in mean))

# %%
# With 10k samples a day and two seeds the zero-drift row is mostly sampling
# noise of a few tenths of a percent; the acceptance suite uses larger
# evaluation days to pin it down.
#
# A gap-0 AUC of around 0.8 that loses a few percent within five days is the
# cost of not updating; the next notebook asks what updating costs.
