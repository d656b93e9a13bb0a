from typing import NamedTuple

import numpy as np

from speechmoe.tensor import Tensor, cross_entropy


class LossParts(NamedTuple):
    total: Tensor
    cross_entropy: Tensor
    importance: Tensor | None = None
    load: Tensor | None = None


def total_loss(
    logits: Tensor,
    labels: np.ndarray,
    aux: tuple[Tensor, Tensor] | None = None,
    alpha: float = 0.1,
) -> LossParts:
    """
    Mean cross-entropy plus alpha * (L_imp + L_load) when auxiliary losses are given.

    Labels are 0 (control) / 1 (depression). Heads without auxiliary losses pass `aux=None`.
    """
    ce = cross_entropy(logits, labels)
    if aux is None:
        return LossParts(total=ce, cross_entropy=ce)
    importance, load = aux
    return LossParts(
        total=ce + alpha * (importance + load),
        cross_entropy=ce,
        importance=importance,
        load=load,
    )
