"""Laplace mechanism for locally private loss reporting.

Each client adds Laplace(b) noise with b = sensitivity / epsilon to its
training loss before the value ever leaves the device. Sampling is by
inverse CDF so a given generator state always yields the same noise on
every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LdpConfig:
    """Pure epsilon-DP budget for the Laplace mechanism (delta is always 0)."""

    epsilon: float = 1.0
    sensitivity: float = 0.0001

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")


def laplace_scale(config: LdpConfig) -> float:
    """Noise scale b = sensitivity / epsilon."""
    return config.sensitivity / config.epsilon


def laplace_sample(b: float, rng: np.random.Generator, size: int | None = None):
    """Laplace(0, b) noise via inverse CDF.

    Draws u uniform in [-0.5, 0.5) and returns -b * sign(u) * ln(1 - 2|u|).
    Returns a scalar when size is None, else an array of that length.
    """
    if b <= 0:
        raise ValueError("scale b must be positive")
    u = rng.random(size) - 0.5
    # rng.random() can return exactly 0.0, which maps u to the closed
    # endpoint -0.5 and the formula to -inf; nudge inside the open interval.
    u = np.where(u == -0.5, np.nextafter(-0.5, 0.0), u)
    noise = -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return float(noise) if size is None else noise


def perturb_loss(loss: float, config: LdpConfig, rng: np.random.Generator) -> float:
    """The reported value: true loss plus Laplace noise. May go negative."""
    if not np.isfinite(loss):
        raise ValueError(f"loss must be finite, got {loss}")
    return loss + laplace_sample(laplace_scale(config), rng)
