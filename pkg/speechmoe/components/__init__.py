from .base import Module, Linear, glorot_uniform, init_tensor
from .encoder import (
    Encoder,
    LayerSpec,
    build_encoder,
    encode_pair,
    export_weights,
    import_weights,
    layer_plan,
    plan_parameter_count,
)
from .fusion import BlockFusion, ConcatFusion, block_fuse, concat_fuse
from .heads import (
    CpMuMoE,
    DenseHead,
    DenseMuMoE,
    GateState,
    Head,
    HeadOutput,
    SparseMoE,
    TrMuMoE,
    build_head,
    cp_forward,
    cv_squared,
    gate_param_count,
    importance_loss,
    kth_excluding_index,
    load_loss,
    load_probabilities,
    materialize_cp,
    materialize_tr,
    mumoe_forward,
    noisy_topk_gate,
    param_count,
    sparse_moe_forward,
    tr_forward,
)
from .model import DepressionModel, build_model

__all__ = [
    "Module",
    "Linear",
    "glorot_uniform",
    "init_tensor",
    "Encoder",
    "LayerSpec",
    "build_encoder",
    "encode_pair",
    "export_weights",
    "import_weights",
    "layer_plan",
    "plan_parameter_count",
    "BlockFusion",
    "ConcatFusion",
    "block_fuse",
    "concat_fuse",
    "Head",
    "HeadOutput",
    "GateState",
    "SparseMoE",
    "DenseMuMoE",
    "CpMuMoE",
    "TrMuMoE",
    "DenseHead",
    "build_head",
    "noisy_topk_gate",
    "sparse_moe_forward",
    "importance_loss",
    "load_loss",
    "load_probabilities",
    "kth_excluding_index",
    "cv_squared",
    "mumoe_forward",
    "cp_forward",
    "tr_forward",
    "materialize_cp",
    "materialize_tr",
    "param_count",
    "gate_param_count",
    "DepressionModel",
    "build_model",
]
