"""Labeled, downsampled, rebalanced, sharded training data.

The pipeline per match is: strip pauses, label every frame from the exact
death events, keep every period-th tick, extract and scale features, drop
~half of the all-negative samples, then shuffle globally and write shards
of at most 4000 samples. Minibatches are balanced for one randomly chosen
hero slot (64 positive / 64 negative at batch size 128).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as ft
from . import match_data as md
from .errors import (ChecksumMismatch, InsufficientPositives, NonPositiveWindow,
                     SchemaMismatch, SchemaViolation, VersionMismatch)
from .util import checksum8, hash64, ordered_map

SHARD_CAPACITY = 4000
SHARD_MAGIC = b"DSH1"
SHARD_VERSION = 1
_VARIANT_CODE = {"minimal": 0, "medium": 1, "full": 2}
_VARIANT_NAME = {v: k for k, v in _VARIANT_CODE.items()}
_HEADER = struct.Struct("<4sHBBII")  # magic, version, variant, pad, per_hero, count


@dataclass(frozen=True)
class LabeledSample:
    """One normalized frame with its 10 death-within-window labels."""

    features: np.ndarray  # (10, per_hero_count) float32, normalized
    labels: np.ndarray  # (10,) bool
    match_key: int  # hash64 of the match id
    game_time: float


def label_frames(m, window=5.0):
    """(n_frames, 10) booleans: slot s dies within (t, t + window].

    Uses the full-resolution death events, never the per-frame alive flags.
    The boundary is half-open: a death at exactly t is the past, a death at
    exactly t + window still counts.
    """
    if window <= 0:
        raise NonPositiveWindow(f"window must be > 0 seconds, got {window}")
    if m.paused.any():
        raise SchemaViolation("strip pauses before labeling")
    t = m.game_time
    labels = np.zeros((m.n_frames, md.N_HEROES), dtype=bool)
    for s in range(md.N_HEROES):
        deaths = np.sort(m.deaths_for_slot(s))
        if deaths.size == 0:
            continue
        lo = np.searchsorted(deaths, t, side="right")
        hi = np.searchsorted(deaths, t + window, side="right")
        labels[:, s] = hi > lo
    return labels


def downsample(m, period_ticks=4):
    """Indices of frames whose tick matches the first kept tick mod period."""
    if period_ticks < 1:
        raise ValueError(f"period_ticks must be >= 1, got {period_ticks}")
    offset = m.tick - m.tick[0]
    return np.flatnonzero(offset % period_ticks == 0)


def undersample_negatives(samples, drop_fraction=0.5, seed=0):
    """Drop all-negative samples independently with probability drop_fraction.

    Samples with at least one positive label always survive. One uniform
    draw is consumed per sample (positives included) so the kept set is a
    pure function of (stream order, seed).
    """
    if not 0 <= drop_fraction < 1:
        raise ValueError(f"drop_fraction must be in [0, 1), got {drop_fraction}")
    samples = list(samples)
    rng = np.random.default_rng(seed)
    u = rng.random(len(samples))
    return [s for s, ui in zip(samples, u)
            if s.labels.any() or ui >= drop_fraction]


def undersample_mask(labels, drop_fraction=0.5, seed=0):
    """Vectorized form: keep-mask for an (n, 10) label array."""
    if not 0 <= drop_fraction < 1:
        raise ValueError(f"drop_fraction must be in [0, 1), got {drop_fraction}")
    rng = np.random.default_rng(seed)
    u = rng.random(labels.shape[0])
    return labels.any(axis=1) | (u >= drop_fraction)


# ---------------------------------------------------------------------------
# Shards


@dataclass
class Shard:
    """Up to 4000 samples of one schema variant, column-wise."""

    variant: str
    features: np.ndarray  # (n, 10, F) float32
    labels: np.ndarray  # (n, 10) bool
    match_keys: np.ndarray  # (n,) uint64
    game_times: np.ndarray  # (n,) float32

    def __post_init__(self):
        if len(self.features) > SHARD_CAPACITY:
            raise SchemaViolation(f"shard holds {len(self.features)} > {SHARD_CAPACITY} samples")

    def __len__(self):
        return int(self.features.shape[0])

    @property
    def per_hero_count(self):
        return int(self.features.shape[2])

    def sample(self, i) -> LabeledSample:
        return LabeledSample(features=self.features[i], labels=self.labels[i],
                             match_key=int(self.match_keys[i]), game_time=float(self.game_times[i]))

    @classmethod
    def from_samples(cls, variant, samples):
        samples = list(samples)
        return cls(
            variant=variant,
            features=np.stack([s.features for s in samples]).astype("<f4"),
            labels=np.stack([s.labels for s in samples]),
            match_keys=np.array([s.match_key for s in samples], dtype="<u8"),
            game_times=np.array([s.game_time for s in samples], dtype="<f4"),
        )


def _sample_dtype(per_hero_count):
    return np.dtype([
        ("features", "<f4", (md.N_HEROES, per_hero_count)),
        ("labels", "<u2"),
        ("match_key", "<u8"),
        ("game_time", "<f4"),
    ])


def _pack_labels(labels):
    weights = (1 << np.arange(md.N_HEROES)).astype(np.uint16)
    return (labels.astype(np.uint16) @ weights).astype("<u2")


def _unpack_labels(packed):
    bits = (packed[:, None] >> np.arange(md.N_HEROES, dtype=np.uint16)) & 1
    return bits.astype(bool)


def encode_shard(shard: Shard) -> bytes:
    n = len(shard)
    head = _HEADER.pack(SHARD_MAGIC, SHARD_VERSION, _VARIANT_CODE[shard.variant], 0,
                        shard.per_hero_count, n)
    rec = np.zeros(n, dtype=_sample_dtype(shard.per_hero_count))
    rec["features"] = shard.features
    rec["labels"] = _pack_labels(shard.labels)
    rec["match_key"] = shard.match_keys
    rec["game_time"] = shard.game_times
    body = head + rec.tobytes()
    return body + checksum8(body)


def decode_shard(blob: bytes) -> Shard:
    if len(blob) < _HEADER.size + 8:
        raise ChecksumMismatch("shard file truncated")
    body, stored = blob[:-8], blob[-8:]
    if checksum8(body) != stored:
        raise ChecksumMismatch("shard checksum does not match contents")
    magic, version, variant_code, _, per_hero, n = _HEADER.unpack_from(body)
    if magic != SHARD_MAGIC or version != SHARD_VERSION:
        raise VersionMismatch(f"bad shard magic/version {magic!r}/{version}")
    variant = _VARIANT_NAME.get(variant_code)
    if variant is None:
        raise SchemaMismatch(f"unknown schema variant code {variant_code}")
    dt = _sample_dtype(per_hero)
    expected = _HEADER.size + n * dt.itemsize
    if len(body) != expected:
        raise ChecksumMismatch(f"shard body is {len(body)} bytes, expected {expected}")
    rec = np.frombuffer(body[_HEADER.size:], dtype=dt)
    return Shard(
        variant=variant,
        features=rec["features"].copy(),
        labels=_unpack_labels(rec["labels"]),
        match_keys=rec["match_key"].copy(),
        game_times=rec["game_time"].copy(),
    )


def write_shards(samples_or_shard_arrays, out_dir, variant, prefix="shard"):
    """Chunk pre-shuffled samples into <=4000-sample files; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(samples_or_shard_arrays, Shard):
        pools = [samples_or_shard_arrays]
    else:
        samples = list(samples_or_shard_arrays)
        pools = [Shard.from_samples(variant, samples[i:i + SHARD_CAPACITY])
                 for i in range(0, len(samples), SHARD_CAPACITY)]
    paths = []
    for i, shard in enumerate(pools):
        path = out_dir / f"{prefix}_{i:05d}.shard"
        path.write_bytes(encode_shard(shard))
        paths.append(path)
    return paths


def read_shard(path, expect_variant=None) -> Shard:
    shard = decode_shard(Path(path).read_bytes())
    if expect_variant is not None and shard.variant != expect_variant:
        raise SchemaMismatch(
            f"{path}: shard is {shard.variant!r}, expected {expect_variant!r}")
    return shard


# ---------------------------------------------------------------------------
# Split manifest


@dataclass(frozen=True)
class SplitManifest:
    """Disjoint train/validation/test match-id partition, split by match."""

    train: tuple
    val: tuple
    test: tuple
    seed: int

    def split_of(self, match_id):
        for name in ("train", "val", "test"):
            if match_id in getattr(self, name):
                return name
        return None

    def all_ids(self):
        return self.train + self.val + self.test


def split_matches(match_ids, seed=0, fractions=(0.8, 0.1, 0.1)) -> SplitManifest:
    """Shuffle ids and partition by match with the given fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError("fractions must be three values summing to 1")
    ids = list(match_ids)
    if len(set(ids)) != len(ids):
        raise SchemaViolation("duplicate match ids in split input")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    return SplitManifest(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Balanced batches


@dataclass(frozen=True)
class BalancedBatch:
    """A minibatch whose labels are exactly 50/50 for selected_slot only."""

    features: np.ndarray  # (B, 10, F) float32
    labels: np.ndarray  # (B, 10) bool
    selected_slot: int


class ShardPool:
    """In-memory shard collection with per-slot positive/negative indices."""

    def __init__(self, shards, split="train"):
        shards = list(shards)
        if not shards:
            raise SchemaViolation("empty shard pool")
        variants = {s.variant for s in shards}
        if len(variants) != 1:
            raise SchemaMismatch(f"mixed shard variants in one pool: {sorted(variants)}")
        self.variant = shards[0].variant
        self.split = split
        self.shards = shards
        self._pos = [[np.flatnonzero(s.labels[:, slot]) for slot in range(md.N_HEROES)]
                     for s in shards]
        self._neg = [[np.flatnonzero(~s.labels[:, slot]) for slot in range(md.N_HEROES)]
                     for s in shards]
        self.pos_total = np.array([sum(len(self._pos[i][slot]) for i in range(len(shards)))
                                   for slot in range(md.N_HEROES)])
        self.neg_total = np.array([sum(len(self._neg[i][slot]) for i in range(len(shards)))
                                   for slot in range(md.N_HEROES)])

    @classmethod
    def from_paths(cls, paths, split="train", expect_variant=None):
        return cls([read_shard(p, expect_variant) for p in paths], split=split)

    def __len__(self):
        return sum(len(s) for s in self.shards)

    def n_samples(self):
        return len(self)

    def all_features(self):
        return np.concatenate([s.features for s in self.shards], axis=0)

    def all_labels(self):
        return np.concatenate([s.labels for s in self.shards], axis=0)


def _draw_from_shards(pool, index_lists, need, rng):
    """Pick `need` (shard, row) pairs, filling from random shards in turn."""
    order = rng.permutation(len(pool.shards))
    picked = []
    for si in order:
        cand = index_lists[si]
        if len(cand) == 0:
            continue
        take = min(need - len(picked), len(cand))
        if take == len(cand):
            rows = cand
        else:
            rows = rng.choice(cand, size=take, replace=False)
        picked.extend((si, int(r)) for r in rows)
        if len(picked) == need:
            break
    return picked


def sample_balanced_batch(pool: ShardPool, batch_size=128, rng=None) -> BalancedBatch:
    """Draw a batch balanced 50/50 for one uniformly chosen satisfiable slot.

    Positives for the slot come from a random shard, topping up from more
    shards when one does not hold enough; negatives likewise.
    """
    if batch_size % 2 != 0 or batch_size < 2:
        raise ValueError(f"batch_size must be a positive even number, got {batch_size}")
    rng = np.random.default_rng() if rng is None else rng
    half = batch_size // 2
    ok = (pool.pos_total >= half) & (pool.neg_total >= half)
    if not ok.any():
        raise InsufficientPositives(
            f"no slot has {half} positives and {half} negatives in the pool")
    slot = int(rng.choice(np.flatnonzero(ok)))
    pos_rows = _draw_from_shards(pool, [p[slot] for p in pool._pos], half, rng)
    neg_rows = _draw_from_shards(pool, [p[slot] for p in pool._neg], half, rng)
    rows = pos_rows + neg_rows
    feats = np.stack([pool.shards[si].features[r] for si, r in rows])
    labels = np.stack([pool.shards[si].labels[r] for si, r in rows])
    return BalancedBatch(features=feats, labels=labels, selected_slot=slot)


# ---------------------------------------------------------------------------
# Dataset build pipeline


@dataclass
class DatasetManifest:
    """Everything needed to reproduce and safely consume a built dataset."""

    variant: str
    window: float
    period_ticks: int
    drop_fraction: float
    split_seed: int
    shuffle_seed: int
    drop_seed: int
    split: SplitManifest
    shard_paths: dict  # split name -> list of path strings
    stats_path: str
    counts: dict = field(default_factory=dict)  # split name -> sample count

    def save(self, path):
        lines = [
            f"variant\t{self.variant}",
            f"window\t{self.window!r}",
            f"period_ticks\t{self.period_ticks}",
            f"drop_fraction\t{self.drop_fraction!r}",
            f"split_seed\t{self.split_seed}",
            f"shuffle_seed\t{self.shuffle_seed}",
            f"drop_seed\t{self.drop_seed}",
            f"stats_path\t{self.stats_path}",
        ]
        for name in ("train", "val", "test"):
            lines.append(f"count_{name}\t{self.counts.get(name, 0)}")
        lines.append("[matches]")
        for name in ("train", "val", "test"):
            for mid in getattr(self.split, name):
                lines.append(f"{mid}\t{name}")
        lines.append("[shards]")
        for name in ("train", "val", "test"):
            for p in self.shard_paths.get(name, []):
                lines.append(f"{name}\t{p}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        kv = {}
        matches = {"train": [], "val": [], "test": []}
        shards = {"train": [], "val": [], "test": []}
        section = None
        for ln in Path(path).read_text(encoding="utf-8").splitlines():
            if not ln.strip():
                continue
            if ln == "[matches]":
                section = "matches"
                continue
            if ln == "[shards]":
                section = "shards"
                continue
            a, b = ln.split("\t")
            if section is None:
                kv[a] = b
            elif section == "matches":
                matches[b].append(a)
            else:
                shards[a].append(b)
        split = SplitManifest(train=tuple(matches["train"]), val=tuple(matches["val"]),
                              test=tuple(matches["test"]), seed=int(kv["split_seed"]))
        return cls(
            variant=kv["variant"], window=float(kv["window"]),
            period_ticks=int(kv["period_ticks"]), drop_fraction=float(kv["drop_fraction"]),
            split_seed=int(kv["split_seed"]), shuffle_seed=int(kv["shuffle_seed"]),
            drop_seed=int(kv["drop_seed"]), split=split, shard_paths=shards,
            stats_path=kv["stats_path"],
            counts={name: int(kv.get(f"count_{name}", 0)) for name in ("train", "val", "test")},
        )


def _chunks(iterator, size):
    buf = []
    for item in iterator:
        buf.append(item)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def match_samples(m, schema, stats, window=5.0, period_ticks=4):
    """strip -> label -> downsample -> extract -> normalize for one match.

    Returns (features (k,10,F) float32, labels (k,10) bool, game_times (k,)).
    """
    m = md.strip_pauses(m)
    labels = label_frames(m, window=window)
    idx = downsample(m, period_ticks=period_ticks)
    feats, gt = ft.extract_match(m, schema, idx)
    feats = ft.normalize_array(feats, stats).astype("<f4")
    return feats, labels[idx], gt


def build_dataset(match_provider, out_dir, schema, window=5.0, period_ticks=4,
                  drop_fraction=0.5, split_seed=0, shuffle_seed=0, drop_seed=0,
                  threads=1) -> DatasetManifest:
    """Two-pass dataset build from a restartable match source.

    `match_provider()` must return a fresh iterator of MatchRecords each
    call (pass 1 computes the match split and train-only normalization
    stats; pass 2 extracts, normalizes, rebalances and writes shards).
    Test matches are never sharded or rebalanced: the test split is
    evaluated straight from its match records.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = max(1, threads)

    ids = []
    for m in match_provider():
        ids.append(m.match_id)
    split = split_matches(ids, seed=split_seed)

    def stats_one(m):
        clean = md.strip_pauses(m)
        feats, _ = ft.extract_match(clean, schema, downsample(clean, period_ticks))
        return ft.compute_norm_stats([feats], schema=schema)

    stats_acc = None
    for chunk in _chunks(match_provider(), threads):
        train_only = [m for m in chunk if split.split_of(m.match_id) == "train"]
        for part in ordered_map(stats_one, train_only, threads):
            stats_acc = part if stats_acc is None else ft.merge_norm_stats(stats_acc, part)
    if stats_acc is None:
        raise SchemaViolation("no training matches in the split")
    stats_path = out_dir / "norm_stats.tsv"
    ft.save_norm_stats(stats_acc, stats_path)

    def samples_one(m):
        feats, labels, gt = match_samples(m, schema, stats_acc, window, period_ticks)
        return split.split_of(m.match_id), (hash64(m.match_id), feats, labels, gt)

    buckets = {"train": [], "val": []}
    for chunk in _chunks(match_provider(), threads):
        wanted = [m for m in chunk if split.split_of(m.match_id) in buckets]
        for part, block in ordered_map(samples_one, wanted, threads):
            buckets[part].append(block)

    rngs = {"train": 0, "val": 1}
    shard_paths = {"train": [], "val": [], "test": []}
    counts = {"train": 0, "val": 0, "test": 0}
    for part, blocks in buckets.items():
        if not blocks:
            continue
        feats = np.concatenate([b[1] for b in blocks], axis=0)
        labels = np.concatenate([b[2] for b in blocks], axis=0)
        gts = np.concatenate([b[3] for b in blocks], axis=0).astype("<f4")
        keys = np.concatenate([np.full(len(b[1]), b[0], dtype="<u8") for b in blocks])
        keep = undersample_mask(labels, drop_fraction,
                                seed=(drop_seed, rngs[part]))
        feats, labels, gts, keys = feats[keep], labels[keep], gts[keep], keys[keep]
        order = np.random.default_rng((shuffle_seed, rngs[part])).permutation(len(feats))
        feats, labels, gts, keys = feats[order], labels[order], gts[order], keys[order]
        counts[part] = len(feats)
        paths = []
        for i in range(0, len(feats), SHARD_CAPACITY):
            shard = Shard(variant=schema.variant,
                          features=feats[i:i + SHARD_CAPACITY],
                          labels=labels[i:i + SHARD_CAPACITY],
                          match_keys=keys[i:i + SHARD_CAPACITY],
                          game_times=gts[i:i + SHARD_CAPACITY])
            path = out_dir / f"{part}_{i // SHARD_CAPACITY:05d}.shard"
            path.write_bytes(encode_shard(shard))
            paths.append(str(path))
        shard_paths[part] = paths

    manifest = DatasetManifest(
        variant=schema.variant, window=window, period_ticks=period_ticks,
        drop_fraction=drop_fraction, split_seed=split_seed, shuffle_seed=shuffle_seed,
        drop_seed=drop_seed, split=split, shard_paths=shard_paths,
        stats_path=str(stats_path), counts=counts,
    )
    manifest.save(out_dir / "manifest.tsv")
    return manifest
