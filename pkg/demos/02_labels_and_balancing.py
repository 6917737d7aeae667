"""Labeling, rebalancing and balanced minibatches on a small corpus.

Run:  python demos/02_labels_and_balancing.py
"""

import tempfile
from pathlib import Path

import numpy as np

import deathcast as dc
from deathcast.dataset import ShardPool

cfg = dc.SynthConfig(n_frames=1500, seed=3)

# Labels come from the exact death times: slot s is positive at time t iff
# a death of s falls in (t, t + 5]. A death at exactly t is the past.
m = dc.generate_match(cfg, 0)
labels = dc.label_frames(m, window=5.0)
idx = dc.downsample(m, period_ticks=4)
print(f"{m.match_id}: {len(m.deaths)} deaths -> "
      f"{labels[idx].sum()} positive (frame, hero) samples "
      f"of {labels[idx].size} ({labels[idx].mean():.1%} positive)")

# Stage 1 rebalancing: all-negative samples are dropped with probability
# 0.5 (samples with any positive label always survive).
keep = dc.dataset.undersample_mask(labels[idx], drop_fraction=0.5, seed=1)
print(f"undersampling keeps {keep.sum()}/{len(keep)} samples "
      f"({keep.mean():.1%}); positives kept: "
      f"{labels[idx][keep].any(axis=1).sum()} of {labels[idx].any(axis=1).sum()}")

# The full dataset build: split by match 80/10/10, train-only min/max
# normalization stats, undersampling, global shuffle, 4000-sample shards.
out = Path(tempfile.mkdtemp())
schema = dc.feature_schema("minimal")


def provider():
    return (dc.generate_match(cfg, i) for i in range(20))


manifest = dc.build_dataset(provider, out, schema, split_seed=1, shuffle_seed=2,
                            drop_seed=3)
print(f"split: {len(manifest.split.train)} train / {len(manifest.split.val)} val "
      f"/ {len(manifest.split.test)} test matches; "
      f"{manifest.counts['train']} train samples in "
      f"{len(manifest.shard_paths['train'])} shard file(s)")

# Stage 2 rebalancing happens at batch time: pick one hero slot at random
# and draw exactly 64 positive and 64 negative samples for that slot.
pool = ShardPool.from_paths(manifest.shard_paths["train"], "train")
rng = np.random.default_rng(0)
batch = dc.sample_balanced_batch(pool, batch_size=128, rng=rng)
col = batch.labels[:, batch.selected_slot]
print(f"balanced batch: slot {batch.selected_slot}, "
      f"{col.sum()} positive / {(~col).sum()} negative for that slot "
      f"(other slots stay unbalanced: {batch.labels.mean():.1%} positive overall)")
