import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanet import degradation as D
from fanet.images import DatasetError, load_image, save_image


def _params(depth, beta_d=(0.5, 0.2, 0.1), beta_b=None, b_inf=(0.1, 0.3, 0.4)):
    return D.WaterParams(beta_d, beta_d if beta_b is None else beta_b, b_inf, depth)


class TestSynthesize:
    def test_zero_range_is_identity(self):
        clean = np.random.default_rng(0).random((6, 5, 3))
        out = D.synthesize_hazy(clean, _params(np.zeros((6, 5))))
        np.testing.assert_array_equal(out, clean)

    def test_far_range_is_veiling_light(self):
        clean = np.random.default_rng(1).random((6, 5, 3))
        out = D.synthesize_hazy(clean, _params(np.full((6, 5), 200.0)))
        assert np.max(np.abs(out - np.array([0.1, 0.3, 0.4]))) < 1e-6

    def test_hand_pixel(self):
        out = D.synthesize_hazy(np.ones((1, 1, 3)), _params(np.full((1, 1), 2.0)))[0, 0]
        np.testing.assert_allclose(out, [0.43112, 0.76921, 0.89125], atol=1e-4)

    def test_misaligned_rejected(self):
        with pytest.raises(ValueError):
            D.synthesize_hazy(np.zeros((4, 4, 3)), _params(np.zeros((4, 5))))

    @pytest.mark.parametrize("bad", [dict(beta_d=(-0.1, 0, 0)), dict(b_inf=(0, 0, 1.5))])
    def test_invalid_params(self, bad):
        with pytest.raises(ValueError):
            _params(np.zeros((2, 2)), **bad)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.lists(st.floats(0, 2), min_size=3, max_size=3),
           st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_monotone_in_range_and_bounded(self, j, beta, b_inf):
        j, b_inf = np.array(j), np.array(b_inf)
        zs = np.linspace(0, 30, 31)
        depth = zs[None, :]
        clean = np.broadcast_to(j, (1, len(zs), 3))
        out = D.synthesize_hazy(clean, _params(depth, beta_d=beta, b_inf=b_inf))[0]
        dist = np.abs(out - b_inf)
        assert np.all(np.diff(dist, axis=0) <= 1e-12)
        lo, hi = np.minimum(j, b_inf), np.maximum(j, b_inf)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_unmatched_beta_bounds(self, seed):
        rng = np.random.default_rng(seed)
        clean = rng.random((4, 4, 3))
        p = D.WaterParams(rng.uniform(0, 2, 3), rng.uniform(0, 2, 3), rng.random(3), rng.uniform(0, 10, (4, 4)))
        out = D.synthesize_hazy(clean, p)
        assert np.all(out >= 0) and np.all(out <= clean + p.b_inf + 1e-12)


class TestDepth:
    def test_deterministic(self):
        np.testing.assert_array_equal(D.gen_depth((20, 30), seed=4), D.gen_depth((20, 30), seed=4))
        assert not np.array_equal(D.gen_depth((20, 30), seed=4), D.gen_depth((20, 30), seed=5))

    @given(st.integers(2, 40), st.integers(2, 40), st.floats(0, 1), st.integers(0, 1000))
    @settings(deadline=None)
    def test_range(self, h, w, rough, seed):
        z = D.gen_depth((h, w), rough, seed, 0.5, 10.0)
        assert z.shape == (h, w)
        assert z.min() >= 0.5 - 1e-12 and z.max() <= 10.0 + 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_smooth(self, seed):
        z = D.gen_depth((64, 64), roughness=0.3, seed=seed)
        for a, b in ((z[:, :-1], z[:, 1:]), (z[:-1, :], z[1:, :])):
            assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.9


class TestSampling:
    def test_record_round_trips_json(self):
        rec = D.sample_water(D.SynthSpec(), 3)
        assert json.loads(json.dumps(rec)) == rec
        assert rec["beta_d"] == sorted(rec["beta_d"], reverse=True)

    @given(st.integers(0, 10**6))
    def test_within_ranges(self, seed):
        spec = D.SynthSpec()
        rec = D.sample_water(spec, seed)
        for key, rng in (("beta_d", spec.beta_d_range), ("beta_b", spec.beta_b_range), ("b_inf", spec.b_inf_range)):
            assert all(rng[0] <= v <= rng[1] for v in rec[key])

    def test_bad_range(self):
        with pytest.raises(ValueError):
            D.SynthSpec(z_range=(5, 1))
        with pytest.raises(ValueError):
            D.SynthSpec(b_inf_range=(0.1, 1.2))


@pytest.fixture
def clean_dir(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(3):
        save_image(D.procedural_scene(24, 20 + i, seed=i), src / f"img{i}.png")
    return src


class TestMakeDataset:
    def test_layout_and_cardinality(self, clean_dir, tmp_path):
        recs = D.make_dataset(clean_dir, tmp_path / "out", D.SynthSpec(seed=7))
        assert len(recs) == 3
        for sub, ext in (("clean", ".png"), ("hazy", ".png"), ("params", ".json")):
            assert sorted(p.name for p in (tmp_path / "out" / sub).iterdir()) == [f"{i:04d}{ext}" for i in range(3)]

    def test_byte_identical_rerun(self, clean_dir, tmp_path):
        D.make_dataset(clean_dir, tmp_path / "a", D.SynthSpec(seed=7))
        D.make_dataset(clean_dir, tmp_path / "b", D.SynthSpec(seed=7))
        for i in range(3):
            assert (tmp_path / "a/hazy" / f"{i:04d}.png").read_bytes() == (tmp_path / "b/hazy" / f"{i:04d}.png").read_bytes()

    def test_recompute_oracle(self, clean_dir, tmp_path):
        out = tmp_path / "out"
        D.make_dataset(clean_dir, out, D.SynthSpec(seed=11))
        for i in range(3):
            rec = json.loads((out / "params" / f"{i:04d}.json").read_text())
            clean = load_image(out / "clean" / f"{i:04d}.png")
            expect = D.synthesize_hazy(clean, D.params_from_record(rec, clean.shape[:2]))
            assert np.max(np.abs(load_image(out / "hazy" / f"{i:04d}.png") - expect)) <= 1 / 255 + 1e-9

    def test_count_cycles(self, clean_dir, tmp_path):
        recs = D.make_dataset(clean_dir, tmp_path / "out", D.SynthSpec(count=5))
        assert [r["source"] for r in recs] == ["img0.png", "img1.png", "img2.png", "img0.png", "img1.png"]

    def test_skips_undecodable(self, clean_dir, tmp_path, caplog):
        (clean_dir / "broken.png").write_bytes(b"not an image")
        recs = D.make_dataset(clean_dir, tmp_path / "out", D.SynthSpec())
        assert len(recs) == 3
        assert "broken.png" in caplog.text

    def test_empty_input(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DatasetError):
            D.make_dataset(tmp_path / "empty", tmp_path / "out", D.SynthSpec())
