from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from speechmoe.errors import GradcheckError
from speechmoe.logger import get_logger
from speechmoe.tensor.rng import RngStream
from speechmoe.tensor.tensor import Parameter, Tensor

_logger = get_logger()


class GradcheckReport(BaseModel):
    """Max relative error per parameter from a finite-difference comparison."""

    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(gt=0.0)
    max_rel_error: dict[str, float] = Field(default_factory=dict)
    coordinates_checked: dict[str, int] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.max_rel_error.items() if v >= self.tolerance}


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def gradcheck(
    loss_fn: Callable[[], Tensor],
    parameters: Sequence[Parameter],
    tolerance: float = 1e-4,
    n_coords: int = 50,
    rng: RngStream | None = None,
    raise_on_failure: bool = False,
    step: float = 1e-5,
) -> GradcheckReport:
    """
    Compare backward() gradients against central differences.

    `loss_fn` must be deterministic (gating noise disabled or replayed from a fixed stream)
    and return a scalar. For each parameter, up to `n_coords` coordinates are sampled and
    perturbed by h = step * (1 + |theta|). Piecewise-linear models (relu, max pooling) want a
    smaller step so fewer coordinates straddle a kink.

    Raises:
        GradcheckError: when `raise_on_failure` and some parameter exceeds `tolerance`
    """
    rng = rng or RngStream(0, 0)
    for p in parameters:
        p.zero_grad()
    loss_fn().backward()
    analytic = {id(p): p.grad.copy() for p in parameters}

    report = GradcheckReport(tolerance=tolerance)
    for p in parameters:
        flat = p.data.reshape(-1)
        count = min(n_coords, flat.size)
        coords = np.sort(rng.generator.choice(flat.size, size=count, replace=False))
        worst = 0.0
        for idx in coords:
            theta = flat[idx]
            h = step * (1.0 + abs(theta))
            flat[idx] = theta + h
            plus = loss_fn().item()
            flat[idx] = theta - h
            minus = loss_fn().item()
            flat[idx] = theta
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic[id(p)].reshape(-1)[idx]), numeric))
        name = p.name or f"param_{len(report.max_rel_error)}"
        report.max_rel_error[name] = worst
        report.coordinates_checked[name] = int(count)
        _logger.debug(f"gradcheck {name}: max rel. err {worst:.3e} over {count} coordinates")

    if raise_on_failure and not report.passed:
        failures = report.failures()
        names = ", ".join(f"{k} ({v:.3e})" for k, v in failures.items())
        raise GradcheckError(f"gradient check failed (tol {tolerance:g}): {names}", failures)
    return report
