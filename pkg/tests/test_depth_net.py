import subprocess
import sys

import numpy as np
import pytest
import torch

from dglle.depth_net import (DepthNet, depth_forward, depth_loss,
                             expected_depth_param_count)
from dglle.errors import ConfigError, DimensionError


class TestDepthForward:
    def test_pyramid_shape_contract(self):
        torch.manual_seed(0)
        net = DepthNet(levels=3, base_width=8, image_size=(32, 32))
        levels, depth = depth_forward(net, torch.rand(1, 3, 32, 32))
        shapes = [tuple(f.shape) for f in levels]
        assert shapes == [(1, 8, 32, 32), (1, 16, 16, 16), (1, 32, 8, 8)]
        assert tuple(depth.shape) == (1, 1, 32, 32)

    def test_indivisible_size_fails_at_build(self):
        with pytest.raises(ConfigError, match="divisible"):
            DepthNet(levels=3, image_size=(30, 32))

    def test_zero_weights_give_bias_map(self):
        net = DepthNet(levels=2, base_width=4)
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
            net.head.bias.fill_(0.37)
        _, depth = depth_forward(net, torch.rand(1, 3, 16, 16))
        assert torch.allclose(depth, torch.full_like(depth, 0.37))

    def test_bit_exact_across_processes(self, tmp_path):
        code = (
            "import torch, numpy as np\n"
            "from dglle.depth_net import DepthNet\n"
            "torch.manual_seed(123)\n"
            "net = DepthNet(levels=2, base_width=4)\n"
            "x = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(5))\n"
            "np.save('{out}', net(x).depth.detach().numpy())\n"
        )
        outs = []
        for i in range(2):
            out = tmp_path / f"d{i}.npy"
            subprocess.run([sys.executable, "-c", code.format(out=out)], check=True)
            outs.append(np.load(out))
        np.testing.assert_array_equal(outs[0], outs[1])

    @pytest.mark.parametrize("levels,size", [(2, 16), (3, 32), (3, 64), (4, 32)])
    def test_pyramid_alignment_grid(self, levels, size):
        torch.manual_seed(0)
        net = DepthNet(levels=levels, base_width=4, image_size=(size, size))
        feats = net(torch.rand(1, 3, size, size))
        for l, f in enumerate(feats.encoder):
            assert tuple(f.shape[2:]) == (size // 2 ** l, size // 2 ** l)
        for l, f in enumerate(feats.decoder):
            assert tuple(f.shape[2:]) == (size // 2 ** l, size // 2 ** l)

    def test_param_count_closed_form(self):
        for levels, base in ((2, 4), (3, 8)):
            net = DepthNet(levels=levels, base_width=base)
            actual = sum(p.numel() for p in net.parameters())
            assert actual == expected_depth_param_count(levels, base)


class TestDepthLoss:
    def test_identical_is_zero(self):
        x = torch.rand(2, 1, 8, 8)
        assert float(depth_loss(x, x)) == 0.0

    def test_constant_offset(self):
        x = torch.rand(1, 1, 8, 8, dtype=torch.float64)
        assert float(depth_loss(x + 0.1, x)) == pytest.approx(0.01, abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        a = rng.random((1, 1, 4, 4))
        b = rng.random((1, 1, 4, 4))
        acc = 0.0
        for i in range(4):
            for j in range(4):
                acc += (a[0, 0, i, j] - b[0, 0, i, j]) ** 2
        expect = acc / 16.0
        got = float(depth_loss(torch.from_numpy(a), torch.from_numpy(b)))
        assert got == pytest.approx(expect, abs=1e-15)

    def test_symmetry_and_nonnegative(self):
        g = torch.Generator().manual_seed(2)
        a = torch.rand(1, 1, 5, 5, generator=g, dtype=torch.float64)
        b = torch.rand(1, 1, 5, 5, generator=g, dtype=torch.float64)
        assert float(depth_loss(a, b)) == float(depth_loss(b, a))
        assert float(depth_loss(a, b)) > 0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            depth_loss(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 5, 4))
