import numpy as np
import pytest

from cameranet import isp, synth
from cameranet.errors import ManifestError, ValidationError
from cameranet.image import XYZ, SRGB
from cameranet.synth import (SynthConfig, enhance_operator, generate_scene,
                             load_dataset, load_triplet, preset_config,
                             save_dataset, write_scene)


class TestConfig:
    def test_presets_exist_and_validate(self):
        for name in ("sid-like", "fivek-like", "hdrplus-like"):
            cfg = preset_config(name, height=32, width=32)
            assert cfg.height == 32

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValidationError):
            preset_config("nonexistent")

    def test_inverted_range_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig(exposure=(0.5, 0.1))

    def test_odd_extent_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig(height=33)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig.from_json({"height": 32, "width": 32,
                                   "film_stock": "velvia"})

    def test_json_round_trip(self):
        cfg = preset_config("sid-like", height=64, width=48)
        assert SynthConfig.from_json(cfg.to_json()) == cfg


class TestEnhanceOperator:
    def test_defaults_are_identity(self):
        img = np.random.default_rng(0).uniform(0, 1, (8, 8, 3))
        assert np.abs(enhance_operator(img) - img).max() < 1e-9

    def test_gamma_below_one_brightens(self):
        img = np.full((8, 8, 3), 0.3)
        assert enhance_operator(img, tone_gamma=0.6).mean() > 0.3

    def test_saturation_preserves_luminance(self):
        img = np.random.default_rng(1).uniform(0.2, 0.8, (8, 8, 3))
        from cameranet.metrics import luminance
        out = enhance_operator(img, saturation=1.5)
        assert np.abs(luminance(out) - luminance(img)).max() < 1e-6

    def test_output_stays_in_unit_range(self):
        img = np.random.default_rng(2).uniform(0, 1, (16, 16, 3))
        out = enhance_operator(img, tone_gamma=0.5, tone_gain=2.5,
                               saturation=2.0, local_contrast=0.8)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestGenerateScene:
    def test_seed_determinism(self):
        cfg = preset_config("hdrplus-like", height=32, width=32)
        a, pa = generate_scene(3, cfg)
        b, pb = generate_scene(3, cfg)
        c, _ = generate_scene(4, cfg)
        assert np.array_equal(a.raw.cfa, b.raw.cfa)
        assert np.array_equal(a.g_rest.data, b.g_rest.data)
        assert pa == pb
        assert not np.array_equal(a.raw.cfa, c.raw.cfa)

    def test_triplet_spaces_and_shapes(self):
        cfg = preset_config("sid-like", height=32, width=48)
        t, _ = generate_scene(0, cfg)
        assert t.raw.shape == (32, 48)
        assert t.g_rest.space == XYZ and t.g_rest.shape == (32, 48, 3)
        assert t.g_enh.space == SRGB and t.g_enh.shape == (32, 48, 3)

    def test_exposure_scales_the_mosaic(self):
        base = dict(height=32, width=32, wb_red=(1.0, 1.0),
                    wb_blue=(1.0, 1.0), color_jitter=0.0)
        bright, _ = generate_scene(5, SynthConfig(**base))
        dim, _ = generate_scene(5, SynthConfig(exposure=(0.25, 0.25), **base))
        norm_b = isp.normalize_levels(bright.raw.cfa, 512, 16383)
        norm_d = isp.normalize_levels(dim.raw.cfa, 512, 16383)
        ratio = norm_d.mean() / norm_b.mean()
        assert ratio == pytest.approx(0.25, rel=0.01)

    def test_noise_moments_match_model(self):
        # constant mid-grey scene: sample variance of the mosaic should
        # match shot_gain * signal + read_sigma^2
        cfg = SynthConfig(height=128, width=128, num_shapes=(0, 0),
                          texture_amp=(0.0, 0.0), value_floor=0.5,
                          value_ceil=0.5, color_jitter=0.0,
                          shot_gain=(0.004, 0.004),
                          read_sigma=(0.01, 0.01))
        t, params = generate_scene(7, cfg)
        norm = isp.normalize_levels(t.raw.cfa, cfg.black_level,
                                    cfg.white_level)
        clean, _ = generate_scene(
            7, SynthConfig(**{**cfg.to_json(), "shot_gain": (0.0, 0.0),
                              "read_sigma": (0.0, 0.0)}))
        signal = isp.normalize_levels(clean.raw.cfa, cfg.black_level,
                                      cfg.white_level)
        noise = norm - signal
        want_var = params["shot_gain"] * signal.mean() + 0.01 ** 2
        assert noise.var() == pytest.approx(want_var, rel=0.1)

    def test_forward_model_round_trip_noise_free(self):
        # prepare + color conversion should recover the restoration
        # groundtruth up to demosaicking error away from the border
        cfg = SynthConfig(color_jitter=0.0, vignette_strength=(0.4, 0.4),
                          bad_pixel_count=3)
        t, _ = generate_scene(9, cfg)
        xyz = isp.camera_rgb_to_xyz(isp.prepare(t.raw), t.raw.metadata)
        err = np.abs(xyz.data - t.g_rest.data)[1:-1, 1:-1].max()
        assert err < 0.02

    def test_camera_space_selects_the_forward_matrix(self):
        # with an xyz-like sensor, no jitter and unit gains, the camera
        # plane is the XYZ groundtruth itself
        cfg = SynthConfig(camera_space="xyz-like", color_jitter=0.0)
        t, _ = generate_scene(2, cfg)
        xyz = isp.camera_rgb_to_xyz(isp.prepare(t.raw), t.raw.metadata)
        assert np.abs(xyz.data - t.g_rest.data)[1:-1, 1:-1].max() < 0.02
        with pytest.raises(ValidationError):
            SynthConfig(camera_space="hsv")

    def test_bad_pixels_recorded_and_saturated(self):
        cfg = SynthConfig(height=32, width=32, bad_pixel_count=5)
        t, _ = generate_scene(11, cfg)
        bads = t.raw.metadata.bad_pixel_list
        assert bads and len(bads) <= 5
        for (y, x) in bads:
            assert t.raw.cfa[y, x] == cfg.white_level


class TestDatasetIO:
    def build(self, tmp_path, n=3):
        cfg = preset_config("hdrplus-like", height=16, width=16)
        records = []
        for i in range(n):
            t, params = generate_scene(i, cfg)
            records.append(write_scene(t, params, f"scene{i:03d}",
                                       tmp_path, cfg, i))
        split = {"train": [r.scene_id for r in records[:-1]],
                 "test": [records[-1].scene_id]}
        save_dataset(records, tmp_path / "manifest.json", split)
        return cfg, records

    def test_round_trip_lossless(self, tmp_path):
        cfg, records = self.build(tmp_path)
        manifest = load_dataset(tmp_path / "manifest.json")
        assert len(manifest.records) == 3
        assert [r.scene_id for r in manifest.subset("test")] == ["scene002"]
        orig, _ = generate_scene(1, cfg)
        back = load_triplet(manifest.records[1], manifest.root)
        assert np.array_equal(back.raw.cfa, orig.raw.cfa)
        assert np.array_equal(back.g_rest.data,
                              orig.g_rest.data.astype(np.float32))
        assert np.array_equal(back.g_enh.data,
                              orig.g_enh.data.astype(np.float32))

    def test_checksum_mismatch_detected(self, tmp_path):
        self.build(tmp_path)
        victim = next(tmp_path.glob("scene000_grest.f32"))
        blob = bytearray(victim.read_bytes())
        blob[-1] ^= 0xFF
        victim.write_bytes(bytes(blob))
        with pytest.raises(ManifestError, match="checksum"):
            load_dataset(tmp_path / "manifest.json")

    def test_missing_file_detected(self, tmp_path):
        self.build(tmp_path)
        next(tmp_path.glob("scene001_genh.f32")).unlink()
        with pytest.raises(ManifestError, match="missing"):
            load_dataset(tmp_path / "manifest.json")

    def test_split_must_reference_known_scenes(self, tmp_path):
        cfg, records = self.build(tmp_path)
        with pytest.raises(ManifestError):
            save_dataset(records, tmp_path / "bad.json",
                         {"train": ["ghost"]})
