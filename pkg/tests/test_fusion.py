import numpy as np
import pytest

from speechmoe.components import BlockFusion, ConcatFusion, block_fuse, concat_fuse
from speechmoe.errors import ShapeError
from speechmoe.schema import BlockFusionConfig
from speechmoe.tensor import RngStream, Tensor, gradcheck, l2_normalize, signed_sqrt
from speechmoe.training import gradcheck_component


def small_fusion(normalize: bool = True) -> BlockFusion:
    cfg = BlockFusionConfig(
        input_dims=(6, 5),
        projected_dim=8,
        num_chunks=4,
        chunk_out_dim=3,
        output_dim=12,
        normalize=normalize,
    )
    return BlockFusion(cfg, RngStream(0))


class TestBlockFusionConfig:
    """Block layout validation"""

    def test_defaults_tile_the_embedding(self):
        cfg = BlockFusionConfig()
        assert cfg.num_chunks * cfg.chunk_out_dim == cfg.output_dim
        assert cfg.chunk_in_dim == 32

    def test_projection_must_split_evenly(self):
        with pytest.raises(ValueError, match="divisible by num_chunks"):
            BlockFusionConfig(projected_dim=250)

    def test_chunks_must_tile_output(self):
        with pytest.raises(ValueError, match="must equal output_dim"):
            BlockFusionConfig(chunk_out_dim=10)


class TestBlockFusion:
    """Block-term bilinear fusion"""

    def test_output_shapes(self, rng):
        fusion = small_fusion()
        x, y = Tensor(rng.standard_normal((3, 6))), Tensor(rng.standard_normal((3, 5)))
        assert block_fuse(x, y, fusion).shape == (3, 12)
        assert fusion(Tensor(x.data[0]), Tensor(y.data[0])).shape == (12,)

    def test_chunk_products_oracle(self, rng):
        fusion = small_fusion()
        x, y = rng.standard_normal((2, 6)), rng.standard_normal((2, 5))
        xp = x @ fusion.proj_x.weight.data + fusion.proj_x.bias.data
        yp = y @ fusion.proj_y.weight.data + fusion.proj_y.bias.data
        expected = np.concatenate(
            [
                np.einsum("bi,bj,ijo->bo", xp[:, 2 * k : 2 * k + 2], yp[:, 2 * k : 2 * k + 2], core.data)
                for k, core in enumerate(fusion.cores)
            ],
            axis=1,
        )
        assert np.allclose(fusion.chunk_products(Tensor(x), Tensor(y)).data, expected)

    def test_normalized_forward(self, rng):
        fusion = small_fusion()
        x, y = Tensor(rng.standard_normal((2, 6))), Tensor(rng.standard_normal((2, 5)))
        z = fusion.chunk_products(x, y).data
        z = np.sign(z) * np.sqrt(np.abs(z))
        z = z / np.linalg.norm(z, axis=1, keepdims=True)
        expected = z @ fusion.proj_out.weight.data + fusion.proj_out.bias.data
        assert np.allclose(fusion(x, y).data, expected)

    def test_bilinear_without_normalization(self, rng):
        """Projection biases start at zero, so scaling one input scales the blocks"""
        fusion = small_fusion(normalize=False)
        x, y = Tensor(rng.standard_normal((2, 6))), Tensor(rng.standard_normal((2, 5)))
        base = fusion.chunk_products(x, y).data
        scaled = fusion.chunk_products(x * 2.5, y).data
        assert np.allclose(scaled, 2.5 * base)

    def test_single_diagonal_block_is_elementwise_product(self, rng):
        cfg = BlockFusionConfig(
            input_dims=(4, 4), projected_dim=4, num_chunks=1, chunk_out_dim=4, output_dim=4
        )
        fusion = BlockFusion(cfg, RngStream(0))
        fusion.proj_x.weight.data[...] = np.eye(4)
        fusion.proj_y.weight.data[...] = np.eye(4)
        core = np.zeros((4, 4, 4))
        core[np.arange(4), np.arange(4), np.arange(4)] = 1.0
        fusion.cores[0].data[...] = core
        x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        assert np.allclose(fusion.chunk_products(Tensor(x), Tensor(y)).data, x * y)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_zero_input_gives_output_bias(self, rng, normalize):
        fusion = small_fusion(normalize)
        fusion.proj_out.bias.data[...] = rng.standard_normal(12)
        out = fusion(Tensor(np.zeros((2, 6))), Tensor(rng.standard_normal((2, 5))))
        assert np.allclose(out.data, np.broadcast_to(fusion.proj_out.bias.data, (2, 12)))

    def test_additive_in_each_input(self, rng):
        fusion = small_fusion(normalize=False)
        x1, x2 = rng.standard_normal((2, 6)), rng.standard_normal((2, 6))
        y1, y2 = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))

        def f(a, b):
            return fusion(Tensor(a), Tensor(b)).data - fusion.proj_out.bias.data

        assert np.allclose(f(x1 + x2, y1), f(x1, y1) + f(x2, y1))
        assert np.allclose(f(x1, y1 + y2), f(x1, y1) + f(x1, y2))

    def test_normalized_blocks_have_unit_norm(self, rng):
        fusion = small_fusion()
        x, y = Tensor(rng.standard_normal((5, 6))), Tensor(rng.standard_normal((5, 5)))
        z = l2_normalize(signed_sqrt(fusion.chunk_products(x, y)), axis=-1).data
        assert np.allclose(np.linalg.norm(z, axis=1), 1.0)

    def test_rejects_wrong_sizes(self, rng):
        fusion = small_fusion()
        with pytest.raises(ShapeError, match="block fusion expects inputs"):
            fusion(Tensor(rng.standard_normal((2, 5))), Tensor(rng.standard_normal((2, 5))))

    def test_block_fusion_gradcheck(self, make_config):
        report = gradcheck_component(make_config(), "fusion")
        assert report.passed, report.failures()


class TestConcatFusion:
    """Concatenation ablation"""

    def test_shape(self, rng):
        fusion = ConcatFusion((6, 5), 4, RngStream(0))
        x, y = Tensor(rng.standard_normal((3, 6))), Tensor(rng.standard_normal((3, 5)))
        out = concat_fuse(x, y, fusion)
        assert out.shape == (3, 4)
        expected = np.concatenate([x.data, y.data], axis=1) @ fusion.proj.weight.data
        assert np.allclose(out.data, expected)

    def test_rejects_wrong_sizes(self, rng):
        fusion = ConcatFusion((6, 5), 4, RngStream(0))
        with pytest.raises(ShapeError, match="concat fusion expects inputs"):
            fusion(Tensor(rng.standard_normal((3, 6))), Tensor(rng.standard_normal((3, 6))))

    def test_concat_gradcheck(self, rng):
        fusion = ConcatFusion((6, 5), 4, RngStream(0))
        fusion.proj.bias.data[...] = rng.split("b").standard_normal(4)
        x, y = Tensor(rng.standard_normal((3, 6))), Tensor(rng.standard_normal((3, 5)))
        weights = rng.split("w").standard_normal((3, 4))
        report = gradcheck(
            lambda: (concat_fuse(x, y, fusion) * weights).sum(),
            fusion.parameters(),
            tolerance=1e-6,
            rng=RngStream(1),
        )
        assert report.passed, report.failures()
