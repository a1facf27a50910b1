"""
Feature ids that grow with the data
===================================

A categorical feature only gets its own embedding row once it has been seen
often enough. Everything rarer shares id 0, the Others row. This walk-through
feeds two days of toy data through the registry and watches ids appear.
"""

# %%
import numpy as np

from incctr.data import DayBlock, RawFeature, Sample, Vocabulary
from incctr.registry import FeatureRegistry, RegistryConfig

vocab = Vocabulary(2)


def day(i, rows):
    samples = [Sample(k % 2, (RawFeature(0, a), RawFeature(1, b))) for k, (a, b) in enumerate(rows)]
    return DayBlock.from_samples(i, samples, vocab=vocab)


# %%
# Day 0: "ios" shows up three times, "android" twice, "linux" once.
d0 = day(0, [("ios", "us"), ("android", "us"), ("ios", "de"), ("ios", "us"), ("android", "fr"), ("linux", "us")])

cfg = RegistryConfig(threshold=2)  # a feature needs a count strictly above 2
reg = FeatureRegistry.from_window([d0], cfg)
for (field, token), fid in sorted(reg.policy.mapping.items(), key=lambda kv: kv[1]):
    print(f"field {field} {token!r:10} -> id {fid}  (count {reg.freq[(field, token)]})")

# %%
# Only ios and us made the cut. The others map to 0 when encoded.
print(reg.lookup_ids(d0))

# %%
# Day 1: android crosses the threshold with its cumulative count, and a new
# token "fr" arrives. Expansion appends ids; nothing already assigned moves.
d1 = day(1, [("android", "fr"), ("android", "fr"), ("ios", "us")])
reg2, promoted = reg.ingest(d1)
print("promoted on day 1:", promoted)
for key in [(0, "android"), (1, "fr"), (0, "linux")]:
    print(key, "->", reg2.policy.mapping.get(key, 0), "count", reg2.freq[key])

# %%
# The ids of day-0 features are unchanged, which is what lets a model inherit
# its embedding rows row-for-row.
assert all(reg2.policy.mapping[k] == v for k, v in reg.policy.mapping.items())
print(np.array_equal(reg2.lookup_ids(d0)[:, 0] > 0, [True, True, True, True, True, False]))
