import numpy as np
from typing_extensions import override

from speechmoe.components.base import Linear, Module, init_tensor
from speechmoe.errors import ShapeError
from speechmoe.schema import BlockFusionConfig
from speechmoe.tensor import (
    Parameter,
    RngStream,
    Tensor,
    concat,
    einsum,
    l2_normalize,
    signed_sqrt,
)


class BlockFusion(Module):
    """
    Block-term bilinear fusion of two vectors.

    Both inputs are projected, split into K chunks, and each chunk pair is combined by its own
    dense core: c_k = core_k x1 x_k x2 y_k. The concatenated chunk outputs are optionally
    signed-sqrt + L2 normalized, then projected to the fused vector.
    """

    def __init__(self, config: BlockFusionConfig, rng: RngStream):
        super().__init__(config=config)
        dx, dy = config.input_dims
        size = config.chunk_in_dim
        self.proj_x = Linear(dx, config.projected_dim, rng.split("proj_x"))
        self.proj_y = Linear(dy, config.projected_dim, rng.split("proj_y"))
        self.cores = [
            Parameter(init_tensor((size, size, config.chunk_out_dim), rng.split("core", k)))
            for k in range(config.num_chunks)
        ]
        self.proj_out = Linear(config.output_dim, config.output_dim, rng.split("proj_out"))
        self.name_parameters()

    def chunk_products(self, x: Tensor, y: Tensor) -> Tensor:
        """Concatenated block outputs before normalization and proj_out (B × output_dim)."""
        cfg: BlockFusionConfig = self.config
        dx, dy = cfg.input_dims
        if x.shape[-1] != dx or y.shape[-1] != dy:
            raise ShapeError(f"block fusion expects inputs ({dx}, {dy}), got {x.shape}, {y.shape}")
        xp, yp = self.proj_x(x), self.proj_y(y)
        size = cfg.chunk_in_dim
        chunks = []
        for k, core in enumerate(self.cores):
            xk = xp[:, k * size : (k + 1) * size]
            yk = yp[:, k * size : (k + 1) * size]
            outer = einsum("bi,bj->bij", xk, yk)
            chunks.append(einsum("bij,ijo->bo", outer, core))
        return concat(chunks, axis=1)

    @override
    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        single = x.ndim == 1
        if single:
            x, y = x.reshape(1, -1), y.reshape(1, -1)
        z = self.chunk_products(x, y)
        if self.config.normalize:
            z = l2_normalize(signed_sqrt(z), axis=-1)
        out = self.proj_out(z)
        return out.reshape(-1) if single else out


class ConcatFusion(Module):
    """Concatenation ablation: [x; y] projected back to the fused size."""

    def __init__(self, input_dims: tuple[int, int], output_dim: int, rng: RngStream):
        super().__init__()
        self._input_dims = tuple(input_dims)
        self.proj = Linear(sum(input_dims), output_dim, rng.split("concat"))
        self.name_parameters()

    @override
    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        if (x.shape[-1], y.shape[-1]) != self._input_dims:
            raise ShapeError(
                f"concat fusion expects inputs {self._input_dims}, got {x.shape}, {y.shape}"
            )
        return self.proj(concat([x, y], axis=-1))


def block_fuse(x: Tensor, y: Tensor, model: BlockFusion) -> Tensor:
    return model(x, y)


def concat_fuse(x: Tensor, y: Tensor, model: ConcatFusion) -> Tensor:
    return model(x, y)
