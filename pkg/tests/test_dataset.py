import numpy as np
import pytest

from deathcast import dataset as ds
from deathcast import features as ft
from deathcast import match_data as md
from deathcast import synth as sy
from deathcast.errors import (ChecksumMismatch, InsufficientPositives, NonPositiveWindow,
                              SchemaMismatch, SchemaViolation)
from deathcast.util import hash64

from conftest import random_match
from oracles import brute_force_labels


class TestLabels:
    def test_death_inside_window(self, rng):
        m = random_match(rng, n_frames=2, with_pauses=False)
        m.game_time[0] = 5.5
        m.game_time[1] = 11.0
        m2 = _with_deaths(m, [(0, 10.0)])
        assert ds.label_frames(m2, 5.0)[0, 0]

    def test_death_outside_window(self, rng):
        m = random_match(rng, n_frames=2, with_pauses=False)
        m.game_time[0] = 4.9
        m.game_time[1] = 11.0
        m2 = _with_deaths(m, [(0, 10.0)])
        assert not ds.label_frames(m2, 5.0)[0, 0]

    def test_death_at_sample_time_is_past(self, rng):
        m = random_match(rng, n_frames=2, with_pauses=False)
        m.game_time[0] = 10.0
        m.game_time[1] = 12.0
        m2 = _with_deaths(m, [(3, 10.0)])
        assert not ds.label_frames(m2, 5.0)[0, 3]

    def test_window_boundary_inclusive(self, rng):
        m = random_match(rng, n_frames=2, with_pauses=False)
        m.game_time[0] = 5.0
        m.game_time[1] = 12.0
        m2 = _with_deaths(m, [(7, 10.0)])
        assert ds.label_frames(m2, 5.0)[0, 7]

    def test_nonpositive_window(self, rng):
        m = random_match(rng, with_pauses=False)
        with pytest.raises(NonPositiveWindow):
            ds.label_frames(m, 0.0)

    def test_requires_stripped(self, rng):
        m = random_match(rng, n_frames=20, with_pauses=True)
        if not m.paused.any():
            pytest.skip("no pause drawn")
        with pytest.raises(SchemaViolation):
            ds.label_frames(m)

    def test_brute_force_oracle_random_matches(self, rng):
        for _ in range(30):
            m = md.strip_pauses(random_match(rng, n_frames=int(rng.integers(2, 40))))
            w = float(rng.uniform(0.5, 8.0))
            assert np.array_equal(ds.label_frames(m, w), brute_force_labels(m, w))

    def test_brute_force_oracle_synth(self, rng):
        cfg = sy.SynthConfig(n_frames=300, seed=5)
        for i in range(5):
            m = sy.generate_match(cfg, i)
            assert np.array_equal(ds.label_frames(m, 5.0), brute_force_labels(m, 5.0))


def _with_deaths(m, deaths):
    return md.MatchRecord(
        match_id=m.match_id, tick_interval=m.tick_interval, roster_size=m.roster_size,
        hero_ids=m.hero_ids, tick=m.tick, game_time=m.game_time, paused=m.paused,
        alive=m.alive, health=m.health, max_health=m.max_health, mana=m.mana,
        max_mana=m.max_mana, pos=m.pos, visible=m.visible, state=m.state, stats=m.stats,
        item_owned=m.item_owned, item_cooldown=m.item_cooldown, abilities=m.abilities,
        ability_count=m.ability_count, tower_team=m.tower_team, tower_pos=m.tower_pos,
        tower_alive=m.tower_alive,
        death_slot=[s for s, _ in deaths], death_time=[t for _, t in deaths])


class TestDownsample:
    def test_twelve_ticks_period_four(self, rng):
        m = random_match(rng, n_frames=12)
        assert len(ds.downsample(m, 4)) == 3

    def test_period_one_identity(self, rng):
        m = random_match(rng, n_frames=7)
        assert np.array_equal(ds.downsample(m, 1), np.arange(7))

    def test_count_oracle_consecutive_ticks(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 200))
            p = int(rng.integers(1, 9))
            m = random_match(rng, n_frames=min(n, 50))
            n = m.n_frames
            assert len(ds.downsample(m, p)) == int(np.ceil(n / p))

    def test_bad_period(self, rng):
        with pytest.raises(ValueError):
            ds.downsample(random_match(rng), 0)


def make_samples(rng, n, per_hero=3, pos_prob=0.2):
    out = []
    for i in range(n):
        labels = rng.random(md.N_HEROES) < pos_prob
        out.append(ds.LabeledSample(
            features=rng.random((md.N_HEROES, per_hero)).astype("<f4"),
            labels=labels, match_key=int(rng.integers(1 << 60)),
            game_time=float(rng.uniform(0, 100))))
    return out


class TestUndersample:
    def test_positives_always_kept(self, rng):
        samples = make_samples(rng, 200, pos_prob=0.9)
        positives = [s for s in samples if s.labels.any()]
        kept = ds.undersample_negatives(samples, 0.9, seed=1)
        assert all(any(s is k for k in kept) for s in positives)

    def test_drop_zero_is_identity(self, rng):
        samples = make_samples(rng, 50)
        assert ds.undersample_negatives(samples, 0.0, seed=1) == samples

    def test_deterministic(self, rng):
        samples = make_samples(rng, 300)
        a = ds.undersample_negatives(samples, 0.5, seed=42)
        b = ds.undersample_negatives(samples, 0.5, seed=42)
        assert len(a) == len(b) and all(x is y for x, y in zip(a, b))

    def test_kept_fraction_statistical(self):
        labels = np.zeros((100_000, md.N_HEROES), dtype=bool)
        keep = ds.undersample_mask(labels, 0.5, seed=20260808)
        assert abs(keep.mean() - 0.5) < 0.01

    def test_mask_matches_listwise(self, rng):
        samples = make_samples(rng, 500)
        labels = np.stack([s.labels for s in samples])
        keep = ds.undersample_mask(labels, 0.5, seed=9)
        kept = ds.undersample_negatives(samples, 0.5, seed=9)
        assert [s for s, k in zip(samples, keep) if k] == kept


class TestShards:
    def test_chunking_9000(self, rng, tmp_path):
        samples = make_samples(rng, 9000)
        paths = ds.write_shards(samples, tmp_path, "minimal")
        sizes = [len(ds.read_shard(p)) for p in paths]
        assert sizes == [4000, 4000, 1000]

    def test_round_trip(self, rng, tmp_path):
        for trial in range(10):
            samples = make_samples(rng, int(rng.integers(1, 50)), per_hero=15)
            paths = ds.write_shards(samples, tmp_path, "minimal", prefix=f"t{trial}")
            shard = ds.read_shard(paths[0])
            blob1 = paths[0].read_bytes()
            assert ds.encode_shard(shard) == blob1
            for i, s in enumerate(samples[:len(shard)]):
                got = shard.sample(i)
                assert np.array_equal(got.features, s.features)
                assert np.array_equal(got.labels, s.labels)
                assert got.match_key == s.match_key
                assert got.game_time == np.float32(s.game_time)

    def test_corrupted_byte(self, rng, tmp_path):
        samples = make_samples(rng, 10)
        (path,) = ds.write_shards(samples, tmp_path, "minimal")
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatch):
            ds.read_shard(path)

    def test_variant_mismatch(self, rng, tmp_path):
        samples = make_samples(rng, 5)
        (path,) = ds.write_shards(samples, tmp_path, "minimal")
        with pytest.raises(SchemaMismatch):
            ds.read_shard(path, expect_variant="full")

    def test_capacity_enforced(self, rng):
        with pytest.raises(SchemaViolation):
            ds.Shard(variant="minimal",
                     features=np.zeros((4001, 10, 3), dtype="<f4"),
                     labels=np.zeros((4001, 10), dtype=bool),
                     match_keys=np.zeros(4001, dtype="<u8"),
                     game_times=np.zeros(4001, dtype="<f4"))


class TestSplit:
    def test_partition_and_fractions(self, rng):
        ids = [f"m{i}" for i in range(250)]
        split = ds.split_matches(ids, seed=3)
        assert len(split.train) == 200 and len(split.val) == 25 and len(split.test) == 25
        assert sorted(split.all_ids()) == sorted(ids)
        assert not (set(split.train) & set(split.val))
        assert not (set(split.train) & set(split.test))
        assert not (set(split.val) & set(split.test))

    def test_deterministic(self):
        ids = [f"m{i}" for i in range(40)]
        assert ds.split_matches(ids, seed=7) == ds.split_matches(ids, seed=7)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SchemaViolation):
            ds.split_matches(["a", "a", "b"], seed=0)


def pool_from_labels(rng, labels, per_hero=3, shard_size=None):
    n = len(labels)
    samples = [ds.LabeledSample(features=rng.random((10, per_hero)).astype("<f4"),
                                labels=np.asarray(labels[i], dtype=bool),
                                match_key=i, game_time=float(i))
               for i in range(n)]
    shard_size = shard_size or ds.SHARD_CAPACITY
    shards = [ds.Shard.from_samples("minimal", samples[i:i + shard_size])
              for i in range(0, n, shard_size)]
    return ds.ShardPool(shards)


class TestBalancedBatch:
    def test_exact_half_positive(self, rng):
        labels = rng.random((2000, 10)) < 0.3
        pool = pool_from_labels(rng, labels, shard_size=400)
        for _ in range(20):
            batch = ds.sample_balanced_batch(pool, 128, rng)
            col = batch.labels[:, batch.selected_slot]
            assert col.sum() == 64 and (~col).sum() == 64

    def test_no_positives_anywhere(self, rng):
        labels = np.zeros((500, 10), dtype=bool)
        pool = pool_from_labels(rng, labels)
        with pytest.raises(InsufficientPositives):
            ds.sample_balanced_batch(pool, 128, rng)

    def test_top_up_across_shards(self, rng):
        # each shard holds only 8 positives for slot 0; a 128-batch needs 64
        labels = np.zeros((400, 10), dtype=bool)
        labels[::50, 0] = True
        pool = pool_from_labels(rng, labels, shard_size=50)
        batch = ds.sample_balanced_batch(pool, 16, rng)
        assert batch.labels[:, batch.selected_slot].sum() == 8

    def test_only_satisfiable_slots_selected(self, rng):
        labels = np.zeros((600, 10), dtype=bool)
        labels[:100, 4] = True  # only slot 4 has positives
        pool = pool_from_labels(rng, labels, shard_size=200)
        for _ in range(10):
            batch = ds.sample_balanced_batch(pool, 64, rng)
            assert batch.selected_slot == 4

    def test_mixed_variant_pool_rejected(self, rng):
        s1 = ds.Shard.from_samples("minimal", make_samples(rng, 3))
        s2 = ds.Shard.from_samples("full", make_samples(rng, 3))
        with pytest.raises(SchemaMismatch):
            ds.ShardPool([s1, s2])


class TestBuildDataset:
    def test_end_to_end_manifest(self, rng, tmp_path):
        cfg = sy.SynthConfig(n_frames=240, seed=9)
        schema = ft.feature_schema("minimal")

        def provider():
            return (sy.generate_match(cfg, i) for i in range(12))

        manifest = ds.build_dataset(provider, tmp_path, schema,
                                    split_seed=1, shuffle_seed=2, drop_seed=3)
        assert len(manifest.split.train) == 10
        assert len(manifest.split.val) == 1
        assert len(manifest.split.test) == 1
        assert manifest.shard_paths["test"] == []  # test split is never sharded
        loaded = ds.DatasetManifest.load(tmp_path / "manifest.tsv")
        assert loaded.split == manifest.split
        assert loaded.shard_paths == manifest.shard_paths
        assert loaded.counts == manifest.counts
        pool = ds.ShardPool.from_paths(manifest.shard_paths["train"], "train",
                                       expect_variant="minimal")
        assert len(pool) == manifest.counts["train"]
        stats = ft.load_norm_stats(manifest.stats_path)
        assert stats.schema.variant == "minimal"

    def test_deterministic_rebuild(self, rng, tmp_path):
        cfg = sy.SynthConfig(n_frames=150, seed=4)
        schema = ft.feature_schema("minimal")

        def provider():
            return (sy.generate_match(cfg, i) for i in range(6))

        m1 = ds.build_dataset(provider, tmp_path / "a", schema, split_seed=1,
                              shuffle_seed=2, drop_seed=3)
        m2 = ds.build_dataset(provider, tmp_path / "b", schema, split_seed=1,
                              shuffle_seed=2, drop_seed=3)
        for part in ("train", "val"):
            for pa, pb in zip(m1.shard_paths[part], m2.shard_paths[part]):
                from pathlib import Path
                assert Path(pa).read_bytes() == Path(pb).read_bytes()

    def test_hash_key_matches_match_ids(self, rng, tmp_path):
        cfg = sy.SynthConfig(n_frames=150, seed=4)
        schema = ft.feature_schema("minimal")

        def provider():
            return (sy.generate_match(cfg, i) for i in range(6))

        manifest = ds.build_dataset(provider, tmp_path, schema, split_seed=1,
                                    shuffle_seed=2, drop_seed=3)
        pool = ds.ShardPool.from_paths(manifest.shard_paths["train"], "train")
        train_keys = {hash64(mid) for mid in manifest.split.train}
        seen = set()
        for shard in pool.shards:
            seen.update(int(k) for k in shard.match_keys)
        assert seen <= train_keys
