from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from speechmoe.errors import ShapeError
from speechmoe.tensor import Parameter


class AdamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=1e-4, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class AdamState:
    """First/second moment estimates and the step counter."""

    def __init__(self, shapes: Sequence[tuple[int, ...]]):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    @classmethod
    def like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.shape(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
    config: AdamConfig | None = None,
) -> tuple[list[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update: theta -= lr * m_hat / (sqrt(v_hat) + eps).

    `lr` overrides `config.lr`; betas and eps come from `config`. Returns new parameter
    arrays; `state` is advanced in place and returned.
    """
    cfg = config or AdamConfig()
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} state slots"
        )
    state.t += 1
    correction1 = 1.0 - cfg.beta1**state.t
    correction2 = 1.0 - cfg.beta2**state.t
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
    return updated, state


class Adam:
    """Adam over a fixed list of Parameters, reading their accumulated `grad`."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, config: AdamConfig | None = None):
        self.params = list(params)
        self.config = config or AdamConfig(lr=lr)
        self.state = AdamState.like([p.data for p in self.params])

    def step(self) -> None:
        new_values, self.state = adam_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            lr=self.config.lr,
            config=self.config,
        )
        for p, value in zip(self.params, new_values):
            p.data = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
