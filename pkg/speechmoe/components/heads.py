from abc import abstractmethod
from typing import Literal, NamedTuple

import numpy as np
from typing_extensions import override

from speechmoe.components.base import Linear, Module, init_tensor
from speechmoe.constants import CV_EPS
from speechmoe.errors import ShapeError, ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import DenseHeadConfig, HeadConfig, MuMoEConfig, SparseMoEConfig
from speechmoe.tensor import (
    Parameter,
    RngStream,
    Tensor,
    einsum,
    entmax15,
    keep_topk,
    normal_cdf,
    relu,
    scatter_rows,
    softmax,
    softplus,
    topk_mask,
)

_logger = get_logger()

Mode = Literal["train", "eval"]


class GateState(NamedTuple):
    """Everything the sparse gate computed for one batch."""

    gates: Tensor  # G(x), B×n
    clean: Tensor  # x·W_g
    noisy: Tensor  # H(x); equals `clean` in eval mode
    noise_std: Tensor | None  # softplus(x·W_noise); None in eval mode


class HeadOutput(NamedTuple):
    logits: Tensor
    gates: Tensor | None = None
    importance: Tensor | None = None
    load: Tensor | None = None


def cv_squared(values: Tensor) -> Tensor:
    """Squared coefficient of variation with population variance and a guarded mean."""
    mean = values.mean()
    var = ((values - mean) ** 2).mean()
    return var / (mean + CV_EPS) ** 2


def _as_batch(x: Tensor, dim: int) -> tuple[Tensor, bool]:
    if x.shape[-1] != dim:
        raise ShapeError(f"head expects {dim}-d input, got shape {x.shape}")
    if x.ndim == 1:
        return x.reshape(1, -1), True
    return x, False


class Head(Module):
    """Classification head: fused vector -> O-d representation -> two logits."""

    def __init__(self, config: HeadConfig, rng: RngStream):
        super().__init__(config=config)
        self.out_layer = Linear(config.out_dim, config.n_classes, rng.split("out_layer"))

    @abstractmethod
    def represent(self, z: Tensor, mode: Mode, rng: RngStream | None) -> HeadOutput:
        """Compute y (B × out_dim) in the `logits` slot plus any gate quantities."""
        raise NotImplementedError("Subclasses must implement this method")

    @abstractmethod
    def core_parameters(self) -> list[Parameter]:
        """Parameters counted by `param_count` (excludes gates and the output layer)."""
        raise NotImplementedError("Subclasses must implement this method")

    @override
    def forward(self, z: Tensor, mode: Mode = "eval", rng: RngStream | None = None) -> HeadOutput:
        zb, single = _as_batch(z, self.config.input_dim)
        rep = self.represent(zb, mode, rng)
        logits = self.out_layer(rep.logits)
        if single:
            logits = logits.reshape(-1)
        return rep._replace(logits=logits)


# ---------------------------------------------------------------------------
# sparsely-gated MoE
# ---------------------------------------------------------------------------


class ExpertMLP(Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: RngStream):
        super().__init__()
        self.fc1 = Linear(in_dim, hidden, rng.split("fc1"))
        self.fc2 = Linear(hidden, out_dim, rng.split("fc2"))

    @override
    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(x)))


class SparseMoE(Head):
    """Noisy top-k gated mixture of MLP experts feeding a shared two-unit output layer."""

    def __init__(self, config: SparseMoEConfig, rng: RngStream):
        super().__init__(config, rng)
        i, n = config.input_dim, config.n_experts
        self.w_gate = Parameter(init_tensor((i, n), rng.split("w_gate")))
        self.w_noise = Parameter(init_tensor((i, n), rng.split("w_noise")))
        self.experts = [
            ExpertMLP(i, config.expert_hidden, config.out_dim, rng.split("expert", e))
            for e in range(n)
        ]
        self.name_parameters()

    @override
    def core_parameters(self) -> list[Parameter]:
        return [p for e in self.experts for p in e.parameters()]

    @override
    def represent(self, z: Tensor, mode: Mode, rng: RngStream | None) -> HeadOutput:
        state = noisy_topk_gate(z, self, mode, rng)
        y = combine_experts(z, self, state.gates)
        importance = load = None
        if mode == "train":
            importance = importance_loss(state.gates)
            load = load_loss_from_state(state, self.config.k)
        return HeadOutput(logits=y, gates=state.gates, importance=importance, load=load)


def noisy_topk_gate(x: Tensor, layer: SparseMoE, mode: Mode, rng: RngStream | None) -> GateState:
    """
    G(x) = Softmax(KeepTopK(H(x), k)), H(x) = x·W_g + eps * softplus(x·W_noise).

    eps ~ N(0, 1) from `rng` in train mode and 0 in eval mode. Non-top-k entries become -inf
    before the softmax, so exactly min(k, n) gates are positive; ties go to the lower index.
    """
    xb = x.reshape(1, -1) if x.ndim == 1 else x
    clean = xb @ layer.w_gate
    noise_std = None
    noisy = clean
    if mode == "train":
        if rng is None:
            raise ValidationError("train-mode gating needs an RngStream")
        noise_std = softplus(xb @ layer.w_noise)
        noisy = clean + noise_std * rng.standard_normal(clean.shape)
    gates = softmax(keep_topk(noisy, layer.config.k), axis=-1)
    return GateState(gates=gates, clean=clean, noisy=noisy, noise_std=noise_std)


def combine_experts(x: Tensor, layer: SparseMoE, gates: Tensor) -> Tensor:
    """y = sum_i G_i(x) E_i(x); experts run only on rows where their gate is nonzero."""
    batch = x.shape[0]
    y: Tensor | None = None
    for i, expert in enumerate(layer.experts):
        rows = np.flatnonzero(gates.data[:, i] > 0)
        if rows.size == 0:
            continue
        out = expert(x[rows]) * gates[rows, i : i + 1]
        part = scatter_rows(out, rows, batch)
        y = part if y is None else y + part
    return y


def sparse_moe_forward(
    x: Tensor, layer: SparseMoE, mode: Mode = "eval", rng: RngStream | None = None
) -> Tensor:
    return layer(x, mode, rng).logits


def importance_loss(gates: Tensor) -> Tensor:
    """CV² of Imp_i = sum over the batch of G(x)_i."""
    gates = gates if isinstance(gates, Tensor) else Tensor(gates)
    gates = gates.reshape(1, -1) if gates.ndim == 1 else gates
    return cv_squared(gates.sum(axis=0))


def kth_excluding_index(noisy: np.ndarray, k: int) -> np.ndarray:
    """
    For every (row, i): column of the k-th highest entry of the row excluding column i.

    Experts inside the top k see the (k+1)-th value, the others the k-th; ties resolve by
    lower index as in KeepTopK.
    """
    order = np.argsort(-noisy, axis=-1, kind="stable")
    inside = topk_mask(noisy, k)
    kth = order[:, k - 1 : k]
    next_after = order[:, k : k + 1]
    return np.where(inside, next_after, kth)


def load_probabilities(state: GateState, k: int) -> Tensor:
    """
    P_i(x) = Phi(((x·W_g)_i - kth_excluding(H(x), k, i)) / softplus((x·W_noise)_i)).

    With k == n every expert is always selected and P is identically 1.
    """
    if state.noise_std is None:
        raise ValidationError("load probabilities need train-mode gate quantities")
    batch, n = state.noisy.shape
    if k >= n:
        return Tensor(np.ones((batch, n)))
    cols = kth_excluding_index(state.noisy.data, k)
    rows = np.repeat(np.arange(batch)[:, None], n, axis=1)
    threshold = state.noisy[rows, cols]
    return normal_cdf((state.clean - threshold) / state.noise_std)


def load_loss_from_state(state: GateState, k: int) -> Tensor:
    """CV² of Load_i = sum over the batch of P_i(x)."""
    return cv_squared(load_probabilities(state, k).sum(axis=0))


def load_loss(x: Tensor, layer: SparseMoE, rng: RngStream) -> Tensor:
    """Load-balancing loss of a batch, drawing the gating noise from `rng`."""
    state = noisy_topk_gate(x, layer, "train", rng)
    return load_loss_from_state(state, layer.config.k)


# ---------------------------------------------------------------------------
# multilinear MoE (dense, CP, tensor ring)
# ---------------------------------------------------------------------------


class MuMoEBase(Head):
    """a = entmax15(Gᵀz), y = W x1 a x2 z; subclasses choose how W is stored."""

    def __init__(self, config: MuMoEConfig, rng: RngStream):
        super().__init__(config, rng)
        self.gate = Parameter(init_tensor((config.input_dim, config.n_experts), rng.split("gate")))

    def expert_weights(self, z: Tensor) -> Tensor:
        return entmax15(z @ self.gate, axis=-1)

    @abstractmethod
    def contract(self, a: Tensor, z: Tensor) -> Tensor:
        """y[b, o] = sum_n sum_i W[n, i, o] a[b, n] z[b, i]."""
        raise NotImplementedError("Subclasses must implement this method")

    @abstractmethod
    def materialize(self) -> np.ndarray:
        """The full N×I×O weight tensor this head represents."""
        raise NotImplementedError("Subclasses must implement this method")

    @override
    def represent(self, z: Tensor, mode: Mode, rng: RngStream | None) -> HeadOutput:
        a = self.expert_weights(z)
        return HeadOutput(logits=self.contract(a, z), gates=a)


class DenseMuMoE(MuMoEBase):
    def __init__(self, config: MuMoEConfig, rng: RngStream):
        super().__init__(config, rng)
        shape = (config.n_experts, config.input_dim, config.out_dim)
        self.weight = Parameter(init_tensor(shape, rng.split("weight")))
        self.name_parameters()

    @override
    def core_parameters(self) -> list[Parameter]:
        return [self.weight]

    @override
    def contract(self, a: Tensor, z: Tensor) -> Tensor:
        per_expert = einsum("bi,nio->bno", z, self.weight)
        return einsum("bn,bno->bo", a, per_expert)

    @override
    def materialize(self) -> np.ndarray:
        return self.weight.data.copy()


class CpMuMoE(MuMoEBase):
    """W = sum_r u1_r ∘ u2_r ∘ u3_r, never materialized in the forward pass."""

    def __init__(self, config: MuMoEConfig, rng: RngStream):
        super().__init__(config, rng)
        r = config.cp_rank
        self.u1 = Parameter(init_tensor((r, config.n_experts), rng.split("u1")))
        self.u2 = Parameter(init_tensor((r, config.input_dim), rng.split("u2")))
        self.u3 = Parameter(init_tensor((r, config.out_dim), rng.split("u3")))
        self.name_parameters()

    @override
    def core_parameters(self) -> list[Parameter]:
        return [self.u1, self.u2, self.u3]

    @override
    def contract(self, a: Tensor, z: Tensor) -> Tensor:
        mixed = einsum("bn,rn->br", a, self.u1) * einsum("bi,ri->br", z, self.u2)
        return einsum("br,ro->bo", mixed, self.u3)

    @override
    def materialize(self) -> np.ndarray:
        return materialize_cp(self.u1.data, self.u2.data, self.u3.data)


class TrMuMoE(MuMoEBase):
    """W[n, i, o] = trace(U1[:, n, :] U2[:, i, :] U3[:, o, :]) with ring ranks R1, R2, R3."""

    def __init__(self, config: MuMoEConfig, rng: RngStream):
        super().__init__(config, rng)
        r1, r2, r3 = config.tr_ranks
        self.u1 = Parameter(init_tensor((r1, config.n_experts, r2), rng.split("u1")))
        self.u2 = Parameter(init_tensor((r2, config.input_dim, r3), rng.split("u2")))
        self.u3 = Parameter(init_tensor((r3, config.out_dim, r1), rng.split("u3")))
        self.name_parameters()

    @override
    def core_parameters(self) -> list[Parameter]:
        return [self.u1, self.u2, self.u3]

    @override
    def contract(self, a: Tensor, z: Tensor) -> Tensor:
        a_core = einsum("bn,pnq->bpq", a, self.u1)
        z_core = einsum("bi,qis->bqs", z, self.u2)
        ring = einsum("bpq,bqs->bps", a_core, z_core)
        # closing the ring: y_o = sum_{s,p} U3[s, o, p] M[p, s]
        return einsum("bps,sop->bo", ring, self.u3)

    @override
    def materialize(self) -> np.ndarray:
        return materialize_tr(self.u1.data, self.u2.data, self.u3.data)


def materialize_cp(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray) -> np.ndarray:
    return np.einsum("rn,ri,ro->nio", u1, u2, u3)


def materialize_tr(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray) -> np.ndarray:
    return np.einsum("pnq,qis,sop->nio", u1, u2, u3)


def mumoe_forward(z: Tensor, layer: MuMoEBase) -> Tensor:
    return layer(z).logits


def cp_forward(z: Tensor, layer: CpMuMoE) -> Tensor:
    return layer(z).logits


def tr_forward(z: Tensor, layer: TrMuMoE) -> Tensor:
    return layer(z).logits


# ---------------------------------------------------------------------------
# MoE removed
# ---------------------------------------------------------------------------


class DenseHead(Head):
    """A single dense layer of `out_dim` units in place of the MoE layer."""

    def __init__(self, config: DenseHeadConfig, rng: RngStream):
        super().__init__(config, rng)
        self.dense = Linear(config.input_dim, config.out_dim, rng.split("dense"))
        self.name_parameters()

    @override
    def core_parameters(self) -> list[Parameter]:
        return self.dense.parameters()

    @override
    def represent(self, z: Tensor, mode: Mode, rng: RngStream | None) -> HeadOutput:
        return HeadOutput(logits=relu(self.dense(z)))


def build_head(config: HeadConfig, rng: RngStream) -> Head:
    """
    Instantiate the head described by `config`.

    Args:
        config: sparse, multilinear (dense, CP or TR variant) or plain dense head settings
        rng: stream every initial weight is drawn from

    Returns:
        An untrained head whose parameters carry dotted names.

    Raises:
        ValidationError: an unrecognized config type
    """
    match config:
        case SparseMoEConfig():
            return SparseMoE(config, rng)
        case MuMoEConfig(variant="dense"):
            return DenseMuMoE(config, rng)
        case MuMoEConfig(variant="cp"):
            return CpMuMoE(config, rng)
        case MuMoEConfig(variant="tr"):
            return TrMuMoE(config, rng)
        case DenseHeadConfig():
            return DenseHead(config, rng)
        case _:
            raise ValidationError(f"Unknown head config: {config!r}")


def param_count(config: HeadConfig) -> int:
    """
    Trainable parameters of the head's core, excluding gate matrices and the output layer.

    CP: R(N + I + O). Tensor ring: R1·N·R2 + R2·I·R3 + R3·O·R1. Dense μMoE: N·I·O.
    """
    i, o = config.input_dim, config.out_dim
    match config:
        case SparseMoEConfig(n_experts=n, expert_hidden=h):
            return n * (i * h + h + h * o + o)
        case MuMoEConfig(variant="dense", n_experts=n):
            return n * i * o
        case MuMoEConfig(variant="cp", n_experts=n, cp_rank=r):
            return r * (n + i + o)
        case MuMoEConfig(variant="tr", n_experts=n, tr_ranks=(r1, r2, r3)):
            return r1 * n * r2 + r2 * i * r3 + r3 * o * r1
        case DenseHeadConfig():
            return i * o + o
        case _:
            raise ValidationError(f"Unknown head config: {config!r}")


def gate_param_count(config: HeadConfig) -> int:
    match config:
        case SparseMoEConfig(n_experts=n):
            return 2 * config.input_dim * n
        case MuMoEConfig(n_experts=n):
            return config.input_dim * n
        case _:
            return 0
