import json

import numpy as np
import pytest

from dglle import arrayio
from dglle.synth import (SPLITS, SynthConfig, degrade, depth_to_normals,
                         export_dataset, generate_scene, load_manifest,
                         luminance, render_normal_image, sample_seed)

SMALL = SynthConfig(image_size=32, counts={"train": 6, "val": 2, "test": 2})


class TestDepthToNormals:
    def test_constant_depth(self):
        n = depth_to_normals(np.full((16, 16), 0.5))
        np.testing.assert_allclose(n[0], 0)
        np.testing.assert_allclose(n[1], 0)
        np.testing.assert_allclose(n[2], 1)

    def test_planar_ramp(self):
        a = 0.3
        x = np.arange(16, dtype=np.float64)
        d = a * np.tile(x, (16, 1))
        n = depth_to_normals(d)
        expect = np.array([-a, 0.0, 1.0]) / np.sqrt(a * a + 1)
        inner = n[:, :, 1:-1]  # replicated edges halve the edge gradient
        np.testing.assert_allclose(inner[0], expect[0], atol=1e-12)
        np.testing.assert_allclose(inner[1], expect[1], atol=1e-12)
        np.testing.assert_allclose(inner[2], expect[2], atol=1e-12)

    def test_unit_norm(self):
        d = np.random.default_rng(1).random((20, 20))
        n = depth_to_normals(d)
        np.testing.assert_allclose(np.sqrt((n * n).sum(axis=0)), 1.0, atol=1e-6)


class TestGenerateScene:
    def test_flat_scene_uniform_shading(self):
        # zero primitives + constant depth: shading is spatially uniform,
        # so image variation comes only from the ambient field
        depth = np.full((24, 24), 0.5)
        albedo = np.full((3, 24, 24), 0.6)
        light = np.array([0.3, 0.2, 0.9])
        light = light / np.linalg.norm(light)
        flat_ambient = np.full((24, 24), 0.2)
        img = render_normal_image(depth, albedo, light, flat_ambient)
        assert float(img.max() - img.min()) < 1e-12

    def test_identity_degradation(self):
        pair = generate_scene(11, SMALL)
        rng = np.random.default_rng(0)
        low = degrade(pair.normal.astype(np.float64), 1.0, 1.0, 0.0, rng)
        np.testing.assert_array_equal(low, pair.normal.astype(np.float64))

    def test_determinism_and_seed_sensitivity(self):
        a = generate_scene(5, SMALL)
        b = generate_scene(5, SMALL)
        c = generate_scene(6, SMALL)
        for k in ("normal", "low", "depth"):
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
        assert not np.array_equal(a.normal, c.normal)

    def test_ranges(self):
        p = generate_scene(3, SMALL)
        for arr in (p.normal, p.low, p.depth):
            assert arr.min() >= 0.0 and arr.max() <= 1.0

    def test_degradation_sanity(self):
        for seed in range(10):
            p = generate_scene(seed, SMALL)
            assert luminance(p.low).mean() < luminance(p.normal).mean()

    def test_depth_luminance_link(self):
        # |Pearson r| between depth and normal-light luminance, averaged
        # over scenes, must exceed 0.1 for the benchmark to carry signal
        rs = []
        for seed in range(20):
            p = generate_scene(seed, SynthConfig())
            lum = luminance(p.normal).ravel()
            dep = p.depth.ravel()
            rs.append(abs(np.corrcoef(dep, lum)[0, 1]))
        assert float(np.mean(rs)) > 0.1


class TestExport:
    def test_roundtrip_and_manifest(self, tmp_path):
        records = export_dataset(SMALL, tmp_path)
        assert len(records) == 10
        manifest = load_manifest(tmp_path)
        assert [r["id"] for r in manifest] == [r["id"] for r in records]
        per_split = {s: sum(1 for r in manifest if r["split"] == s) for s in SPLITS}
        assert per_split == SMALL.counts
        rec = manifest[0]
        pair = generate_scene(rec["seed"], SMALL)
        got = arrayio.load_array(tmp_path / rec["files"]["normal"])
        np.testing.assert_array_equal(got, pair.normal)

    def test_reexport_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        export_dataset(SMALL, a)
        export_dataset(SMALL, b)
        for pa in sorted(a.iterdir()):
            assert pa.read_bytes() == (b / pa.name).read_bytes()

    def test_empty_split(self, tmp_path):
        cfg = SynthConfig(image_size=16, counts={"train": 2, "val": 0, "test": 0})
        export_dataset(cfg, tmp_path)
        manifest = load_manifest(tmp_path)
        assert all(r["split"] == "train" for r in manifest)
        assert len(list(tmp_path.glob("val_*"))) == 0

    def test_split_seed_disjointness(self):
        cfg = SynthConfig()
        seeds = [sample_seed(cfg.master_seed, s, i)
                 for s in SPLITS for i in range(cfg.counts[s])]
        assert len(seeds) == len(set(seeds))


class TestArrayContainer:
    @pytest.mark.parametrize("dtype", ["float32", "float64", "int64", "uint8"])
    def test_roundtrip(self, tmp_path, dtype):
        rng = np.random.default_rng(0)
        arr = (rng.random((2, 3, 4)) * 100).astype(dtype)
        path = tmp_path / "x.arr"
        arrayio.save_array(path, arr)
        back = arrayio.load_array(path)
        assert back.dtype == arr.dtype
        np.testing.assert_array_equal(back, arr)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.arr"
        p.write_bytes(b"NOTMAGIC" + b"\0" * 32)
        from dglle.errors import ValidationError
        with pytest.raises(ValidationError, match="magic"):
            arrayio.load_array(p)
