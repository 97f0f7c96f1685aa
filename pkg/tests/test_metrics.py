import math

import numpy as np
import pytest

from dglle.errors import DimensionError
from dglle.metrics import psnr, ssim


class TestPsnr:
    def test_identical_is_inf(self):
        x = np.random.default_rng(0).random((3, 16, 16))
        assert math.isinf(psnr(x, x))

    def test_constant_offset_closed_form(self):
        x = np.full((3, 8, 8), 0.4)
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-10)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((2, 5, 5)), rng.random((2, 5, 5))
        acc, n = 0.0, 0
        for c in range(2):
            for i in range(5):
                for j in range(5):
                    acc += (a[c, i, j] - b[c, i, j]) ** 2
                    n += 1
        expect = 10.0 * math.log10(1.0 / (acc / n))
        assert psnr(a, b) == pytest.approx(expect, abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((3, 9, 9)), rng.random((3, 9, 9))
        assert psnr(a, b) == psnr(b, a)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((1, 6, 6)), rng.random((1, 6, 6))
        perm = rng.permutation(36)
        ap = a.reshape(1, -1)[:, perm].reshape(1, 6, 6)
        bp = b.reshape(1, -1)[:, perm].reshape(1, 6, 6)
        assert psnr(ap, bp) == pytest.approx(psnr(a, b), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 5, 4)))


class TestSsim:
    def test_self_similarity_is_one(self):
        x = np.random.default_rng(0).random((3, 32, 32))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((3, 24, 24)), rng.random((3, 24, 24))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_inverted_halves_strongly_negative(self):
        x = np.zeros((1, 32, 32))
        x[:, :, 16:] = 1.0
        assert ssim(x, 1.0 - x) < 0.0

    def test_global_fallback_small_images(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((1, 6, 6)), rng.random((1, 6, 6))
        val = ssim(a, b)
        assert -1.0 <= val <= 1.0
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_global_fallback_permutation_invariance(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((1, 6, 6)), rng.random((1, 6, 6))
        perm = rng.permutation(36)
        ap = a.reshape(-1)[perm].reshape(1, 6, 6)
        bp = b.reshape(-1)[perm].reshape(1, 6, 6)
        assert ssim(ap, bp) == pytest.approx(ssim(a, b), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a, b = rng.random((3, 20, 20)), rng.random((3, 20, 20))
            assert -1.0 <= ssim(a, b) <= 1.0
