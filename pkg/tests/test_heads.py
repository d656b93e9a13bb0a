import numpy as np
import pytest

from speechmoe.components import (
    CpMuMoE,
    DenseHead,
    DenseMuMoE,
    GateState,
    SparseMoE,
    TrMuMoE,
    build_head,
    cv_squared,
    gate_param_count,
    importance_loss,
    kth_excluding_index,
    load_loss,
    load_probabilities,
    materialize_cp,
    materialize_tr,
    noisy_topk_gate,
    param_count,
    sparse_moe_forward,
)
from speechmoe.errors import ShapeError, ValidationError
from speechmoe.schema import DenseHeadConfig, MuMoEConfig, SparseMoEConfig
from speechmoe.tensor import RngStream, Tensor, cross_entropy, gradcheck, softmax
from speechmoe.training import gradcheck_component


def sparse_head(n: int = 4, k: int = 2, i: int = 6, hidden: int = 5, out: int = 3, seed: int = 0):
    cfg = SparseMoEConfig(input_dim=i, out_dim=out, n_experts=n, k=k, expert_hidden=hidden)
    return SparseMoE(cfg, RngStream(seed))


def mumoe_head(variant: str, n: int = 3, i: int = 6, out: int = 4, seed: int = 0, **ranks):
    cfg = MuMoEConfig(input_dim=i, out_dim=out, variant=variant, n_experts=n, **ranks)
    return build_head(cfg, RngStream(seed))


class TestSparseGate:
    """Noisy top-k gating"""

    @pytest.mark.parametrize("mode", ["eval", "train"])
    def test_exactly_k_positive_gates(self, mode, rng):
        """Every row keeps min(k, n) experts, whatever the input and noise"""
        layer = sparse_head(n=4, k=2)
        x = Tensor(rng.standard_normal((10_000, 6)) * 3.0)
        state = noisy_topk_gate(x, layer, mode, rng.split("noise"))
        positive = (state.gates.data > 0).sum(axis=1)
        assert np.all(positive == 2)
        assert np.allclose(state.gates.data.sum(axis=1), 1.0)

    def test_k_equal_n_is_plain_softmax(self, rng):
        layer = sparse_head(n=3, k=3)
        x = Tensor(rng.standard_normal((5, 6)))
        state = noisy_topk_gate(x, layer, "eval", None)
        expected = softmax(x @ layer.w_gate, axis=-1).data
        assert np.allclose(state.gates.data, expected)

    def test_ties_prefer_lower_index(self):
        layer = sparse_head(n=4, k=2)
        layer.w_gate.assign(np.zeros((6, 4)))
        state = noisy_topk_gate(Tensor(np.ones((1, 6))), layer, "eval", None)
        assert state.gates.data.tolist() == [[0.5, 0.5, 0.0, 0.0]]

    def test_eval_mode_has_no_noise(self, rng):
        layer = sparse_head()
        x = Tensor(rng.standard_normal((3, 6)))
        state = noisy_topk_gate(x, layer, "eval", None)
        assert state.noise_std is None
        assert np.array_equal(state.noisy.data, state.clean.data)

    def test_train_mode_needs_stream(self, rng):
        layer = sparse_head()
        with pytest.raises(ValidationError, match="RngStream"):
            noisy_topk_gate(Tensor(rng.standard_normal((2, 6))), layer, "train", None)

    def test_noise_replays_from_stream(self, rng):
        layer = sparse_head()
        x = Tensor(rng.standard_normal((8, 6)))
        a = noisy_topk_gate(x, layer, "train", RngStream(42)).gates.data
        b = noisy_topk_gate(x, layer, "train", RngStream(42)).gates.data
        assert np.array_equal(a, b)


class TestSparseMoE:
    """Expert combination and the two balancing losses"""

    def test_single_expert_passes_through(self, rng):
        layer = sparse_head(n=1, k=1)
        x = Tensor(rng.standard_normal((4, 6)))
        y = layer.represent(x, "eval", None).logits.data
        assert np.allclose(y, layer.experts[0](x).data)

    def test_identical_experts_ignore_gates(self, rng):
        layer = sparse_head(n=3, k=2)
        state = layer.experts[0].state_dict()
        for expert in layer.experts[1:]:
            expert.load_state_dict(state)
        x = Tensor(rng.standard_normal((5, 6)))
        y = layer.represent(x, "train", rng.split("noise")).logits.data
        assert np.allclose(y, layer.experts[0](x).data)

    def test_all_experts_oracle(self, rng):
        """With k = n the output is the softmax-weighted sum of every expert"""
        layer = sparse_head(n=3, k=3)
        x = Tensor(rng.standard_normal((4, 6)))
        y = layer.represent(x, "eval", None).logits.data
        weights = softmax(x @ layer.w_gate, axis=-1).data
        expected = sum(weights[:, [i]] * e(x).data for i, e in enumerate(layer.experts))
        assert np.allclose(y, expected)

    def test_forward_shapes(self, rng):
        layer = sparse_head()
        assert sparse_moe_forward(Tensor(rng.standard_normal((3, 6))), layer).shape == (3, 2)
        assert layer(Tensor(rng.standard_normal(6))).logits.shape == (2,)

    def test_wrong_input_size(self):
        with pytest.raises(ShapeError, match="6-d input"):
            sparse_head()(Tensor(np.ones((2, 5))))

    def test_aux_losses_only_in_train_mode(self, rng):
        layer = sparse_head()
        x = Tensor(rng.standard_normal((8, 6)))
        assert layer(x, "eval").importance is None
        out = layer(x, "train", rng.split("noise"))
        assert out.importance.item() >= 0.0
        assert np.isfinite(out.load.item())

    @pytest.mark.parametrize(
        "imp,expected",
        [
            ([1.0, 1.0, 1.0, 3.0], 1.0 / 3.0),
            ([2.0, 2.0, 2.0, 2.0], 0.0),
        ],
    )
    def test_importance_loss(self, imp, expected):
        assert importance_loss(Tensor([imp])).item() == pytest.approx(expected)

    def test_importance_is_permutation_invariant(self, rng):
        gates = rng.uniform(0.0, 1.0, (5, 4))
        shuffled = gates[:, [2, 0, 3, 1]]
        assert importance_loss(Tensor(gates)).item() == pytest.approx(
            importance_loss(Tensor(shuffled)).item()
        )

    def test_cv_squared_guards_zero_mean(self):
        assert cv_squared(Tensor(np.zeros(4))).item() == 0.0

    def test_load_probability_at_threshold(self):
        """An expert exactly at its threshold is selected with probability 1/2"""
        state = GateState(
            gates=Tensor([[1.0, 0.0]]),
            clean=Tensor([[0.0, 1.0]]),
            noisy=Tensor([[1.0, 0.0]]),
            noise_std=Tensor([[1.0, 2.0]]),
        )
        assert load_probabilities(state, 1).data.tolist() == [[0.5, 0.5]]

    def test_load_probability_all_selected(self):
        state = GateState(
            gates=Tensor([[0.5, 0.5]]),
            clean=Tensor([[0.0, 1.0]]),
            noisy=Tensor([[1.0, 0.0]]),
            noise_std=Tensor([[1.0, 1.0]]),
        )
        assert np.array_equal(load_probabilities(state, 2).data, [[1.0, 1.0]])

    def test_load_probability_needs_train_state(self, rng):
        state = noisy_topk_gate(Tensor(rng.standard_normal((2, 6))), sparse_head(), "eval", None)
        with pytest.raises(ValidationError, match="train-mode"):
            load_probabilities(state, 2)

    def test_kth_excluding_index(self):
        noisy = np.array([[0.9, 0.1, 0.5, 0.7]])
        # top-2 is {0, 3}; inside experts see the 3rd value, outside ones the 2nd
        assert kth_excluding_index(noisy, 2).tolist() == [[2, 3, 3, 2]]

    def test_load_probability_matches_resampling(self, rng):
        """P_i equals the chance that redrawing only expert i's noise keeps it in the top k"""
        layer = sparse_head(n=5, k=2)
        x = Tensor(rng.standard_normal((1, 6)))
        state = noisy_topk_gate(x, layer, "train", rng.split("noise"))
        predicted = load_probabilities(state, 2).data[0]

        clean, sigma = state.clean.data[0], state.noise_std.data[0]
        noisy = state.noisy.data[0]
        draws = rng.split("mc").standard_normal(100_000)
        for i in range(5):
            others = np.delete(noisy, i)
            kth = np.sort(others)[::-1][1]
            selected = np.mean(clean[i] + draws * sigma[i] > kth)
            assert selected == pytest.approx(predicted[i], abs=0.01)

    def test_load_probability_within_sampling_error(self, rng):
        """20 gate instances: at least 95% of expert slots fall within 3 standard errors"""
        draws = 100_000
        layer = sparse_head(n=5, k=2)
        state = noisy_topk_gate(Tensor(rng.standard_normal((20, 6))), layer, "train", rng.split("noise"))
        predicted = load_probabilities(state, 2).data
        clean, sigma, noisy = state.clean.data, state.noise_std.data, state.noisy.data
        hits = []
        for b in range(20):
            eps = rng.split("mc", b).standard_normal(draws)
            for i in range(5):
                kth = np.sort(np.delete(noisy[b], i))[::-1][1]
                estimate = np.mean(clean[b, i] + eps * sigma[b, i] > kth)
                p = predicted[b, i]
                bound = 3.0 * np.sqrt(p * (1.0 - p) / draws) + 1.0 / draws
                hits.append(abs(estimate - p) <= bound)
        assert np.mean(hits) >= 0.95

    def test_load_loss_is_reproducible(self, rng):
        layer = sparse_head()
        x = Tensor(rng.standard_normal((6, 6)))
        a = load_loss(x, layer, RngStream(8)).item()
        b = load_loss(x, layer, RngStream(8)).item()
        assert a == b
        assert a >= 0.0

    def test_gradients_through_balancing_losses(self, rng):
        layer = sparse_head(n=4, k=2)
        x = Tensor(rng.standard_normal((6, 6)))
        labels = np.array([0, 1, 0, 1, 1, 0])

        def loss():
            out = layer(x, "train", RngStream(77))
            return cross_entropy(out.logits, labels) + 0.1 * (out.importance + out.load)

        report = gradcheck(loss, layer.parameters(), rng=rng.split("coords"))
        assert report.passed, report.failures()


class TestMultilinearMoE:
    """Dense, CP and tensor-ring μMoE heads"""

    @pytest.mark.parametrize("variant", ["dense", "cp", "tr"])
    def test_loop_oracle(self, variant, rng):
        layer = mumoe_head(variant)
        z = Tensor(rng.standard_normal((3, 6)))
        a = layer.expert_weights(z)
        y = layer.contract(a, z).data
        w = layer.materialize()
        expected = np.zeros((3, 4))
        for b in range(3):
            for n in range(3):
                for i in range(6):
                    expected[b] += w[n, i] * a.data[b, n] * z.data[b, i]
        assert np.allclose(y, expected)

    @pytest.mark.parametrize("variant", ["dense", "cp", "tr"])
    def test_single_expert(self, variant, rng):
        layer = mumoe_head(variant, n=1)
        z = Tensor(rng.standard_normal((2, 6)))
        rep = layer.represent(z, "eval", None)
        assert np.array_equal(rep.gates.data, np.ones((2, 1)))
        assert np.allclose(rep.logits.data, z.data @ layer.materialize()[0])

    @pytest.mark.parametrize("variant", ["dense", "cp", "tr"])
    def test_one_hot_selects_expert_slice(self, variant, rng):
        layer = mumoe_head(variant)
        z = Tensor(rng.standard_normal((2, 6)))
        a = Tensor(np.tile([0.0, 1.0, 0.0], (2, 1)))
        assert np.allclose(layer.contract(a, z).data, z.data @ layer.materialize()[1])

    @pytest.mark.parametrize("variant", ["dense", "cp", "tr"])
    def test_segment_between_two_experts(self, variant, rng):
        """Mixing weights (t, 1 - t) interpolate the two expert outputs linearly"""
        layer = mumoe_head(variant, n=2)
        z = Tensor(rng.standard_normal((1, 6)))
        y0 = layer.contract(Tensor([[1.0, 0.0]]), z).data
        y1 = layer.contract(Tensor([[0.0, 1.0]]), z).data
        t = 0.3
        yt = layer.contract(Tensor([[t, 1.0 - t]]), z).data
        assert np.allclose(yt, t * y0 + (1.0 - t) * y1)

    @pytest.mark.parametrize("variant", ["dense", "cp", "tr"])
    def test_zero_input_gives_zero(self, variant):
        layer = mumoe_head(variant)
        assert np.all(layer.represent(Tensor(np.zeros((2, 6))), "eval", None).logits.data == 0.0)

    def test_gates_on_simplex(self, rng):
        layer = mumoe_head("tr", n=5)
        a = layer.expert_weights(Tensor(rng.standard_normal((20, 6)) * 4.0)).data
        assert np.all(a >= 0.0)
        assert np.allclose(a.sum(axis=1), 1.0)

    def test_factorized_heads_match_materialized(self, rng):
        """CP and TR forward passes equal contraction with the materialized tensor"""
        dims = rng.split("dims").generator
        for trial in range(100):
            n, i, o = (int(v) for v in dims.integers(1, [6, 33, 17]))
            variant = "cp" if trial % 2 == 0 else "tr"
            cfg = MuMoEConfig(
                input_dim=i,
                out_dim=o,
                variant=variant,
                n_experts=n,
                cp_rank=int(dims.integers(1, 5)),
                tr_ranks=tuple(int(r) for r in dims.integers(1, 5, size=3)),
            )
            layer = build_head(cfg, rng.split("trial", trial))
            z = Tensor(rng.split("z", trial).standard_normal((3, i)))
            rep = layer.represent(z, "eval", None)
            expected = np.einsum("bn,nio,bi->bo", rep.gates.data, layer.materialize(), z.data)
            assert np.allclose(rep.logits.data, expected, atol=1e-10)

    def test_materialize_helpers(self, rng):
        u1, u2, u3 = rng.standard_normal((2, 3)), rng.standard_normal((2, 4)), rng.standard_normal((2, 5))
        w = materialize_cp(u1, u2, u3)
        assert w[1, 2, 3] == pytest.approx(np.sum(u1[:, 1] * u2[:, 2] * u3[:, 3]))

        t1 = rng.standard_normal((2, 3, 4))
        t2 = rng.standard_normal((4, 5, 3))
        t3 = rng.standard_normal((3, 6, 2))
        w = materialize_tr(t1, t2, t3)
        assert w[2, 1, 4] == pytest.approx(np.trace(t1[:, 2, :] @ t2[:, 1, :] @ t3[:, 4, :]))


class TestParameterCounts:
    """Head sizes at the experimental dimensions"""

    @pytest.mark.parametrize(
        "config,expected",
        [
            (MuMoEConfig(variant="cp", n_experts=3, cp_rank=4), 3596),
            (MuMoEConfig(variant="tr", n_experts=3, tr_ranks=(4, 4, 4)), 14384),
            (MuMoEConfig(variant="dense", n_experts=3), 294912),
            (SparseMoEConfig(n_experts=4, k=3, expert_hidden=256), 919040),
            (DenseHeadConfig(), 98432),
        ],
    )
    def test_param_count(self, config, expected):
        assert param_count(config) == expected

    @pytest.mark.parametrize(
        "config",
        [
            MuMoEConfig(variant="cp", input_dim=10, out_dim=3, n_experts=4, cp_rank=2),
            MuMoEConfig(variant="tr", input_dim=10, out_dim=3, n_experts=4, tr_ranks=(2, 3, 4)),
            MuMoEConfig(variant="dense", input_dim=10, out_dim=3, n_experts=4),
            SparseMoEConfig(input_dim=10, out_dim=3, n_experts=3, k=2, expert_hidden=5),
            DenseHeadConfig(input_dim=10, out_dim=3),
        ],
    )
    def test_count_matches_built_head(self, config):
        head = build_head(config, RngStream(0))
        assert param_count(config) == sum(p.size for p in head.core_parameters())
        out_layer = (config.out_dim + 1) * config.n_classes
        assert head.num_parameters() == param_count(config) + gate_param_count(config) + out_layer

    def test_count_matches_random_heads(self, rng):
        dims = rng.generator
        kinds = ["cp", "tr", "dense", "sparse", "dense128"]
        for trial in range(50):
            i, o, n = (int(v) for v in dims.integers(1, [17, 9, 6]))
            kind = kinds[trial % len(kinds)]
            if kind == "sparse":
                k = int(dims.integers(1, n + 1))
                config = SparseMoEConfig(
                    input_dim=i, out_dim=o, n_experts=n, k=k, expert_hidden=int(dims.integers(1, 9))
                )
            elif kind == "dense128":
                config = DenseHeadConfig(input_dim=i, out_dim=o)
            else:
                config = MuMoEConfig(
                    input_dim=i,
                    out_dim=o,
                    variant=kind,
                    n_experts=n,
                    cp_rank=int(dims.integers(1, 6)),
                    tr_ranks=tuple(int(r) for r in dims.integers(1, 6, size=3)),
                )
            head = build_head(config, RngStream(trial))
            assert param_count(config) == sum(p.size for p in head.core_parameters()), config
            out_layer = (config.out_dim + 1) * config.n_classes
            assert head.num_parameters() == param_count(config) + gate_param_count(config) + out_layer

    def test_dense_head_is_smaller_than_sparse(self):
        assert param_count(DenseHeadConfig()) < param_count(SparseMoEConfig())

    def test_build_head_types(self):
        assert isinstance(build_head(MuMoEConfig(variant="cp", input_dim=4), RngStream(0)), CpMuMoE)
        assert isinstance(build_head(MuMoEConfig(variant="tr", input_dim=4), RngStream(0)), TrMuMoE)
        assert isinstance(build_head(MuMoEConfig(variant="dense", input_dim=4), RngStream(0)), DenseMuMoE)
        assert isinstance(build_head(DenseHeadConfig(input_dim=4), RngStream(0)), DenseHead)

    def test_sparse_config_rejects_large_k(self):
        with pytest.raises(ValueError, match="must not exceed"):
            SparseMoEConfig(n_experts=2, k=3)


class TestHeadGradients:
    """Finite-difference checks of every head kind"""

    @pytest.mark.parametrize("head", ["sparse_moe", "cp_mumoe", "tr_mumoe", "dense_mumoe", "dense128"])
    def test_head_gradcheck(self, head, make_config):
        report = gradcheck_component(make_config(head=head), "head")
        assert report.passed, report.failures()
