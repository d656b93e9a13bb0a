import numpy as np
import pytest

from speechmoe.components import (
    build_encoder,
    encode_pair,
    export_weights,
    import_weights,
    layer_plan,
    plan_parameter_count,
)
from speechmoe.errors import ContainerError, ShapeError
from speechmoe.schema import EncoderConfig
from speechmoe.tensor import RngStream, Tensor
from speechmoe.training import gradcheck_component
from speechmoe.utils import write_container


class TestLayerPlan:
    """Resolved layer sizes per topology"""

    def test_tiny_parameter_count(self):
        plan = layer_plan(EncoderConfig(topology="tiny", embedding_dim=768, image_size=224))
        assert plan_parameter_count(plan) == 227984
        assert plan[-1].in_features == 288

    def test_alexnet_like_sizes(self):
        plan = layer_plan(EncoderConfig(topology="alexnet_like", embedding_dim=768, image_size=224))
        linears = [s for s in plan if s.kind == "linear"]
        assert [(s.in_features, s.out_features) for s in linears] == [
            (9216, 4096),
            (4096, 4096),
            (4096, 768),
        ]

    @pytest.mark.parametrize("size", [8, 32])
    def test_image_too_small(self, size):
        with pytest.raises(ShapeError, match="shrinks to nothing"):
            layer_plan(EncoderConfig(image_size=size))

    def test_built_encoder_matches_plan(self):
        cfg = EncoderConfig(embedding_dim=16, image_size=64)
        enc = build_encoder(cfg, RngStream(0))
        assert enc.num_parameters() == plan_parameter_count(layer_plan(cfg))


class TestEncoder:
    """Forward pass, weight sharing and weight files"""

    @pytest.fixture
    def cfg(self) -> EncoderConfig:
        return EncoderConfig(embedding_dim=16, image_size=64)

    def test_output_shapes(self, cfg, rng):
        enc = build_encoder(cfg, RngStream(0))
        images = rng.uniform(0.0, 1.0, (2, 3, 64, 64))
        assert enc(Tensor(images)).shape == (2, 16)
        assert enc(Tensor(images[0])).shape == (16,)

    def test_rejects_wrong_image_size(self, cfg):
        enc = build_encoder(cfg, RngStream(0))
        with pytest.raises(ShapeError, match=r"\(3, 64, 64\)"):
            enc(Tensor(np.zeros((1, 3, 32, 32))))

    def test_same_stream_same_weights(self, cfg):
        a = build_encoder(cfg, RngStream(5)).state_dict()
        b = build_encoder(cfg, RngStream(5)).state_dict()
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_parameter_names(self, cfg):
        names = [name for name, _ in build_encoder(cfg, RngStream(0)).named_parameters()]
        assert names[:2] == ["layers.0.weight", "layers.0.bias"]

    def test_shared_encoder_accumulates_both_branches(self, cfg, rng):
        enc = build_encoder(cfg, RngStream(0))
        a = Tensor(rng.uniform(0.0, 1.0, (1, 3, 64, 64)))
        b = Tensor(rng.uniform(0.0, 1.0, (1, 3, 64, 64)))

        def grads(*images):
            enc.zero_grad()
            total = None
            for image in images:
                out = enc(image).sum()
                total = out if total is None else total + out
            total.backward()
            return [p.grad.copy() for p in enc.parameters()]

        separate = [ga + gb for ga, gb in zip(grads(a), grads(b))]
        enc.zero_grad()
        x, y = encode_pair(enc, enc, a, b)
        (x.sum() + y.sum()).backward()
        for expected, p in zip(separate, enc.parameters()):
            assert np.allclose(p.grad, expected)

    def test_encode_pair_shape_mismatch(self, cfg):
        enc = build_encoder(cfg, RngStream(0))
        with pytest.raises(ShapeError, match="branch image shapes differ"):
            encode_pair(enc, enc, Tensor(np.zeros((1, 3, 64, 64))), Tensor(np.zeros((2, 3, 64, 64))))

    def test_weights_round_trip(self, cfg, rng, tmp_path):
        source = build_encoder(cfg, RngStream(1))
        path = export_weights(source, tmp_path / "enc.moet")
        target = import_weights(build_encoder(cfg, RngStream(2)), path)
        images = Tensor(rng.uniform(0.0, 1.0, (2, 3, 64, 64)))
        assert np.array_equal(source(images).data, target(images).data)

    def test_import_shape_mismatch(self, cfg, tmp_path):
        path = export_weights(build_encoder(cfg, RngStream(1)), tmp_path / "enc.moet")
        other = build_encoder(EncoderConfig(embedding_dim=8, image_size=64), RngStream(1))
        with pytest.raises(ContainerError, match="has shape"):
            import_weights(other, path)

    def test_import_missing_tensor(self, cfg, tmp_path):
        enc = build_encoder(cfg, RngStream(1))
        state = enc.state_dict()
        state.pop("layers.3.bias")
        path = write_container(tmp_path / "partial.moet", state)
        with pytest.raises(ContainerError, match="missing tensor 'layers.3.bias'"):
            import_weights(enc, path)


class TestEncoderGradients:
    """Finite-difference check of the tiny encoder"""

    def test_tiny_encoder_gradcheck(self, make_config):
        report = gradcheck_component(make_config(), "encoder", batch=1)
        assert report.passed, report.failures()
