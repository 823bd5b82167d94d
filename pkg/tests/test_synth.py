"""Sampling determinism, unit handling and export round trips."""
import numpy as np
import pytest

from gridsynth import nets, synth
from gridsynth.errors import DataError

TINY = nets.ArchConfig(seq_len=96, latent_dim=4, channels=3, kernel_size=3, dilations=(1, 2))
NORM = {"norm_min": 50.0, "norm_max": 950.0, "kind": "load"}


@pytest.fixture
def model(rng):
    m = nets.VaeGanModel(TINY, rng)
    for p in nets.all_params(m).values():
        p.value += rng.standard_normal(p.value.shape) * 0.3
    return m


@pytest.fixture
def untrained(rng):
    # untrained generator with an explicitly zero-initialized output layer
    m = nets.VaeGanModel(TINY, rng)
    m.generator.w_out.value[...] = 0.0
    m.generator.b_out.value[...] = 0.0
    return m


class TestSample:
    def test_same_seed_identical(self, model):
        a = synth.sample(model, 6, seed=11, norm_meta=NORM)
        b = synth.sample(model, 6, seed=11, norm_meta=NORM)
        np.testing.assert_array_equal(a.profiles, b.profiles)
        np.testing.assert_array_equal(a.denorm, b.denorm)

    def test_different_seed_differs(self, model):
        a = synth.sample(model, 6, seed=11, norm_meta=NORM)
        b = synth.sample(model, 6, seed=12, norm_meta=NORM)
        assert not np.array_equal(a.profiles, b.profiles)

    def test_n_zero_rejected(self, model):
        with pytest.raises(ValueError, match="n >= 1"):
            synth.sample(model, 0, seed=1, norm_meta=NORM)

    def test_missing_norm_meta_rejected(self, model):
        with pytest.raises(DataError, match="normalization"):
            synth.sample(model, 2, seed=1, norm_meta={})
        with pytest.raises(DataError, match="normalization"):
            synth.sample(model, 2, seed=1, norm_meta={"norm_min": 0.0, "norm_max": None})

    def test_zero_init_output_layer_gives_mid_range(self, untrained):
        # tanh(0) -> 0.5 after rescale, for every z
        batch = synth.sample(untrained, 4, seed=3, norm_meta=NORM)
        np.testing.assert_allclose(batch.profiles, 0.5)
        np.testing.assert_allclose(batch.denorm, 500.0)

    def test_outputs_within_norm_range(self, model):
        batch = synth.sample(model, 16, seed=5, norm_meta=NORM)
        assert batch.profiles.min() >= 0.0 and batch.profiles.max() <= 1.0
        assert batch.denorm.min() >= NORM["norm_min"]
        assert batch.denorm.max() <= NORM["norm_max"]

    def test_provenance(self, model):
        batch = synth.sample(model, 3, seed=21, norm_meta=NORM, checkpoint_id="ck-42")
        assert batch.provenance["seed"] == 21
        assert batch.provenance["latent_draws"] == 3
        assert batch.provenance["checkpoint_id"] == "ck-42"


class TestModeCollapseProbe:
    def test_distinct_outputs_not_collapsed(self, model):
        batch = synth.sample(model, 8, seed=2, norm_meta=NORM)
        assert not synth.is_mode_collapsed(batch.profiles)

    def test_identical_outputs_collapsed(self):
        profiles = np.tile(np.linspace(0, 1, 96), (5, 1))
        assert synth.is_mode_collapsed(profiles)

    def test_untrained_constant_output_is_collapsed(self, untrained):
        batch = synth.sample(untrained, 5, seed=1, norm_meta=NORM)
        assert synth.is_mode_collapsed(batch.profiles)


class TestExport:
    def test_round_trip(self, tmp_path, model):
        batch = synth.sample(model, 5, seed=9, norm_meta=NORM, checkpoint_id="ck")
        synth.export(batch, tmp_path / "synth.csv")
        watts, meta = synth.load_exported(tmp_path / "synth.csv")
        assert np.max(np.abs(watts - batch.denorm)) < 1e-9
        assert meta["seed"] == "9"
        assert meta["checkpoint_id"] == "ck"

    def test_header_names(self, tmp_path, model):
        batch = synth.sample(model, 2, seed=1, norm_meta=NORM)
        synth.export(batch, tmp_path / "synth.csv")
        header = (tmp_path / "synth.csv").read_text().splitlines()[0]
        cols = header.split(",")
        assert cols[0] == "t00" and cols[-1] == "t95" and len(cols) == 96

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            synth.load_exported(tmp_path / "nope.csv")
