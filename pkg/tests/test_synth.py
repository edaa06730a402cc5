import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualmatte import media, synth
from dualmatte.synth import AffineState, GeneratorConfig, ShadowParams


def small_cfg(**overrides) -> GeneratorConfig:
    return GeneratorConfig(**overrides)


class TestAffineSampling:
    def test_fixed_seed_reproducible(self):
        a1, b1 = synth.sample_affine_pair(np.random.default_rng(42))
        a2, b2 = synth.sample_affine_pair(np.random.default_rng(42))
        assert a1 == a2 and b1 == b2

    def test_range_audit_and_opposite_signs(self):
        cfg = GeneratorConfig()
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a, b = synth.sample_affine_pair(rng, cfg)
            for s in (a, b):
                assert 0.15 <= abs(s.tx) <= 0.30
                assert -0.05 <= s.ty <= 0.05
                assert -5.0 <= s.rotation_deg <= 5.0
                assert 0.95 <= s.scale <= 1.05
                assert -3.0 <= s.shear_deg <= 3.0
            assert np.sign(a.tx) * np.sign(b.tx) == -1

    def test_collapsed_interval(self):
        cfg = GeneratorConfig(tx_range=(0.15, 0.15))
        a, b = synth.sample_affine_pair(np.random.default_rng(1), cfg)
        assert abs(a.tx) == pytest.approx(0.15)
        assert abs(b.tx) == pytest.approx(0.15)


class TestEaseInterpolate:
    def test_endpoints(self):
        a = AffineState(-0.2, 0.01, 2.0, 1.02, -1.0)
        b = AffineState(0.25, -0.03, -4.0, 0.97, 2.0)
        assert synth.ease_interpolate(a, b, 0.0) == a
        assert synth.ease_interpolate(a, b, 1.0) == b

    def test_midpoint_tx(self):
        a = AffineState(-0.2, 0.0, 0.0, 1.0, 0.0)
        b = AffineState(0.2, 0.0, 0.0, 1.0, 0.0)
        mid = synth.ease_interpolate(a, b, 0.5)
        assert mid.tx == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("u", [-0.1, 1.1])
    def test_u_out_of_range_rejected(self, u):
        a = AffineState(0.2, 0.0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            synth.ease_interpolate(a, a, u)

    @settings(max_examples=50, deadline=None)
    @given(u=st.floats(0.0, 1.0))
    def test_blend_stays_between_endpoints(self, u):
        a = AffineState(-0.3, -0.05, -5.0, 0.95, -3.0)
        b = AffineState(0.15, 0.05, 5.0, 1.05, 3.0)
        mid = synth.ease_interpolate(a, b, u)
        assert a.tx <= mid.tx <= b.tx
        assert a.scale <= mid.scale <= b.scale


class TestSynthShadow:
    def test_zero_opacity(self):
        alpha = np.zeros((1, 12, 12), np.float32)
        alpha[0, 2:8, 2:8] = 1.0
        params = ShadowParams(0.2, 45.0, 0.0, 0)
        out = synth.synth_shadow(alpha, params, anchor=(7, 5))
        assert not out.any()

    def test_parallelogram_oracle(self):
        # 10x10 unit square; compression 0.2 about its bottom row, 45 degree
        # shear, opacity 0.5, no blur.
        h = w = 40
        r0, c0 = 20, 8
        alpha = np.zeros((1, h, w), np.float32)
        alpha[0, r0 : r0 + 10, c0 : c0 + 10] = 1.0
        a_r = r0 + 9
        params = ShadowParams(v_compress=0.2, h_shear_deg=45.0, opacity=0.5, blur_radius=0)
        got = synth.synth_shadow(alpha, params, anchor=(a_r, c0 + 5))[0]

        tan_sh = math.tan(math.radians(45.0))
        expected = np.zeros((h, w), np.float32)
        for y in range(h):
            for x in range(w):
                sy = round(a_r + (y - a_r) / 0.2)
                sx = round(x - tan_sh * (y - a_r))
                if r0 <= sy <= r0 + 9 and c0 <= sx <= c0 + 9:
                    expected[y, x] = 0.5
        np.testing.assert_allclose(got, expected)
        rows = np.nonzero(got.max(axis=1) > 0)[0]
        assert len(rows) == 2 and rows[-1] == a_r

    def test_blur_preserves_mass(self):
        alpha = np.zeros((1, 30, 30), np.float32)
        alpha[0, 10:18, 10:18] = 1.0
        sharp = synth.synth_shadow(alpha, ShadowParams(0.25, 40.0, 0.5, 0), (17, 14))
        blurred = synth.synth_shadow(alpha, ShadowParams(0.25, 40.0, 0.5, 1), (17, 14))
        assert blurred.sum() == pytest.approx(sharp.sum(), rel=0.01)

    def test_empty_alpha_gives_empty_shadow(self):
        alpha = np.zeros((1, 8, 8), np.float32)
        out = synth.synth_shadow(alpha, ShadowParams(0.2, 45.0, 0.5, 1), (4, 4))
        assert not out.any()


class TestRenderClip:
    def test_empty_foreground(self):
        cfg = small_cfg(shadow_enabled=False)
        rng = np.random.default_rng(3)
        bg = synth.make_background(rng, cfg.height, cfg.width + 10)
        color = np.zeros((6, 6, 3), np.float32)
        alpha = np.zeros((6, 6), np.float32)
        sample = synth.render_clip(color, alpha, bg, rng, cfg)
        np.testing.assert_allclose(sample.composite, sample.background, atol=1e-6)
        assert not sample.alpha_full.any()

    def test_shadow_disabled(self):
        cfg = small_cfg(shadow_enabled=False)
        sample = synth.generate_sample(11, cfg)
        assert not sample.shadow_matte.any()
        assert sample.shadow_params is None
        np.testing.assert_array_equal(
            sample.alpha_full > 0.5, media.binarize(sample.alpha_full, 0.5)
        )

    def test_compose_round_trip_within_quantum(self):
        sample = synth.generate_sample(12, small_cfg())
        rebuilt = media.compose(sample.foreground, sample.alpha_full, sample.background)
        assert np.abs(rebuilt - sample.composite).max() <= 1.0 / 255.0

    def test_recoverable_layer_against_darkened_background(self):
        sample = synth.generate_sample(13, small_cfg())
        dark = sample.background * (1.0 - sample.shadow_matte[..., None])
        layer = media.recover_foreground(sample.composite, sample.alpha_full, dark)
        rebuilt = media.compose(layer, sample.alpha_full, dark)
        assert np.abs(rebuilt - sample.composite).max() <= 1.0 / 255.0

    def test_background_too_small_rejected(self):
        cfg = small_cfg()
        rng = np.random.default_rng(4)
        bg = np.zeros((cfg.height, cfg.width, 3), np.float32)  # no padding budget
        color = np.zeros((4, 4, 3), np.float32)
        alpha = np.ones((4, 4), np.float32)
        with pytest.raises(ValueError):
            synth.render_clip(color, alpha, bg, rng, cfg)

    def test_obj_mask_within_alpha_support(self):
        sample = synth.generate_sample(14, small_cfg())
        assert (sample.obj_mask <= media.binarize(sample.alpha_full, 0.5)).all()

    def test_object_disjoint_from_shadow(self):
        for seed in range(20, 26):
            sample = synth.generate_sample(seed, small_cfg())
            assert not (sample.obj_mask & (sample.shadow_matte > 0)).any()

    def test_motion_smoothness_disk(self):
        # disk sprites keep their centroid at center + translation, so the
        # eased-slope bound 1.5*|dtx|/N*width applies directly
        cfg = small_cfg(height=32, width=32, shadow_enabled=False)
        rng = np.random.default_rng(5)
        bg = synth.make_background(rng, cfg.height, cfg.width * 2)
        color, alpha = synth.make_sprite(rng, cfg, kind="disk")
        sample = synth.render_clip(color, alpha, bg, rng, cfg)
        txs = [m.tx for m in sample.motion]
        centroids = []
        for f in range(cfg.frames):
            a = sample.alpha_full[f]
            total = a.sum()
            assert total > 0
            centroids.append((a * np.arange(cfg.width)[None, :]).sum() / total)
        max_step = max(abs(centroids[i + 1] - centroids[i]) for i in range(cfg.frames - 1))
        tx_a = txs[0]
        # recover tx_b from the last eased state
        s_last = synth.smoothstep((cfg.frames - 1) / cfg.frames)
        tx_b = (txs[-1] - (1 - s_last) * tx_a) / s_last
        limit = 1.5 * abs(tx_a - tx_b) / cfg.frames * cfg.width
        assert max_step <= limit + 0.75  # rasterization slack in pixels

    def test_determinism(self):
        s1 = synth.generate_sample(30, small_cfg())
        s2 = synth.generate_sample(30, small_cfg())
        np.testing.assert_array_equal(s1.composite, s2.composite)
        np.testing.assert_array_equal(s1.alpha_full, s2.alpha_full)
        assert s1.motion == s2.motion


class TestSampleIO:
    def test_round_trip_quantized(self, tmp_path):
        sample = synth.generate_sample(40, small_cfg())
        synth.write_sample(sample, tmp_path / "c")
        back = synth.read_sample(tmp_path / "c")
        assert np.abs(back.alpha_full - sample.alpha_full).max() <= 1 / 255 + 1e-7
        assert np.abs(back.composite - sample.composite).max() <= 1 / 255 + 1e-7
        np.testing.assert_array_equal(back.obj_mask, sample.obj_mask)
        assert back.motion == sample.motion
        assert back.shadow_params == sample.shadow_params
        assert back.seed == sample.seed
        assert back.foreground is None

    def test_missing_meta_is_structured_error(self, tmp_path):
        sample = synth.generate_sample(41, small_cfg())
        synth.write_sample(sample, tmp_path / "c")
        (tmp_path / "c" / "meta.json").unlink()
        with pytest.raises(media.ManifestError):
            synth.read_sample(tmp_path / "c")

    def test_meta_missing_field_named(self, tmp_path):
        sample = synth.generate_sample(42, small_cfg())
        synth.write_sample(sample, tmp_path / "c")
        (tmp_path / "c" / "meta.json").write_text('{"seed": 42}')
        with pytest.raises(media.ManifestError, match="motion"):
            synth.read_sample(tmp_path / "c")

    def test_same_seed_byte_identical_directories(self, tmp_path):
        cfg = small_cfg()
        synth.write_sample(synth.generate_sample(50, cfg), tmp_path / "a")
        synth.write_sample(synth.generate_sample(50, cfg), tmp_path / "b")
        assert _trees_identical(tmp_path / "a", tmp_path / "b")


def _trees_identical(a: Path, b: Path) -> bool:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if fa != fb:
        return False
    return all((a / p).read_bytes() == (b / p).read_bytes() for p in fa)


class TestGeneratorConfig:
    def test_validate_rejects_out_of_bound_range_with_field_name(self):
        cfg = GeneratorConfig(shadow_opacity_range=(0.3, 0.9))
        with pytest.raises(ValueError, match="shadow_opacity_range"):
            cfg.validate()

    def test_json_round_trip(self):
        cfg = GeneratorConfig(tx_range=(0.2, 0.25), frames=4)
        back = GeneratorConfig.from_dict(cfg.to_dict())
        assert back == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="bogus"):
            GeneratorConfig.from_dict({"bogus": 1})


class TestDataset:
    def test_generate_and_load(self, tmp_path):
        cfg = small_cfg(frames=4)
        paths = synth.generate_dataset(tmp_path, 3, base_seed=100, cfg=cfg)
        assert [p.name for p in paths] == ["clip_00000", "clip_00001", "clip_00002"]
        samples = synth.load_dataset(tmp_path)
        assert len(samples) == 3
        assert samples[0].composite.shape == (4, cfg.height, cfg.width, 3)

    def test_jobs_parallelism_identical_output(self, tmp_path):
        cfg = small_cfg(frames=2)
        synth.generate_dataset(tmp_path / "seq", 4, 7, cfg, jobs=1)
        synth.generate_dataset(tmp_path / "par", 4, 7, cfg, jobs=3)
        assert _trees_identical(tmp_path / "seq", tmp_path / "par")
