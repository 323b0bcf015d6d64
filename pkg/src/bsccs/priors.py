"""Normal and Laplace priors on the drug effects and the penalized Newton step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StepError

PRIOR_KINDS = ("normal", "laplace", "none")


@dataclass(frozen=True)
class PriorSpec:
    """Independent prior on every coefficient.

    ``variance`` is the prior variance sigma^2. For the Laplace prior the
    scale is ``b = sqrt(variance / 2)``; pass ``laplace_convention="scale"``
    to read ``variance`` as ``b`` directly instead.
    """

    kind: str = "laplace"
    variance: float = 1.0
    laplace_convention: str = "variance"

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"prior kind must be one of {PRIOR_KINDS}, got {self.kind!r}")
        if self.laplace_convention not in ("variance", "scale"):
            raise ValueError("laplace_convention must be 'variance' or 'scale'")
        if self.kind != "none" and not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"prior variance must be positive and finite, got {self.variance}")

    @property
    def laplace_scale(self) -> float:
        if self.laplace_convention == "scale":
            return float(self.variance)
        return math.sqrt(self.variance / 2.0)


def log_density(spec: PriorSpec, beta) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    if spec.kind == "none":
        return 0.0
    if spec.kind == "normal":
        s2 = spec.variance
        return float(np.sum(-beta**2 / (2 * s2)) - beta.size * 0.5 * math.log(2 * math.pi * s2))
    b = spec.laplace_scale
    return float(-np.sum(np.abs(beta)) / b - beta.size * math.log(2 * b))


def _newton(numerator: float, h: float) -> float:
    # -numerator / h with h <= 0; h == 0 gives an unbounded step left to the trust region
    if h == 0.0:
        return 0.0 if numerator == 0.0 else math.copysign(math.inf, numerator)
    return -numerator / h


def penalized_step(spec: PriorSpec, beta_j: float, g: float, h: float) -> float:
    """Unbounded one-dimensional Newton step on log-likelihood plus log-prior.

    For the Laplace prior the step never carries a coefficient across zero
    (it stops exactly at 0), and a zero coefficient only leaves zero when
    the one-sided derivative in that direction is positive.
    """
    if spec.kind == "none":
        if h == 0.0:
            if g == 0.0:
                return 0.0
            raise StepError("flat direction: h = 0 with no prior curvature")
        return -g / h

    if spec.kind == "normal":
        s2 = spec.variance
        return -(g - beta_j / s2) / (h - 1.0 / s2)

    inv_b = 1.0 / spec.laplace_scale
    if beta_j != 0.0:
        s = math.copysign(1.0, beta_j)
        delta = _newton(g - s * inv_b, h)
        if (beta_j + delta) * s <= 0.0:
            delta = -beta_j
        return delta
    up = _newton(g - inv_b, h)
    if up > 0.0:
        return up
    down = _newton(g + inv_b, h)
    if down < 0.0:
        return down
    return 0.0
