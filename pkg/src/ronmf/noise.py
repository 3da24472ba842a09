"""
Controlled corruption of a DataMatrix for robustness experiments.

A noise ratio is the fraction of matrix entries corrupted. Every corruption
keeps the shape and clamps results to be non-negative; labels are carried over
unchanged.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .models import DataMatrix

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    SALT_PEPPER = "salt_pepper"
    POISSON = "poisson"


def corrupted_count(fraction: float, size: int) -> int:
    """floor(fraction * size), robust to rounding."""
    return int(math.floor(round(fraction * size, 9)))


def _pick_entries(data: DataMatrix, fraction: float, rng: np.random.Generator) -> np.ndarray:
    size = data.d * data.n
    # flat indices into the row-major values
    return rng.choice(size, size=corrupted_count(fraction, size), replace=False)


def gaussian_corrupt(data: DataMatrix, ratio: float, sigma_scale: float = 0.1, seed: Optional[int] = None) -> DataMatrix:
    """
    Add N(0, (sigma_scale * (max X - min X))^2) to floor(ratio * d * n) entries
    drawn without replacement, then clamp at zero.
    """
    if not 0 <= ratio <= 1:
        raise ContractViolation(f"ratio must lie in [0, 1], got {ratio!r}")
    if not sigma_scale > 0:
        raise ContractViolation(f"sigma_scale must be positive, got {sigma_scale!r}")

    rng = np.random.default_rng(seed)
    values = data.values.copy()
    picked = _pick_entries(data, ratio, rng)
    spread = sigma_scale * float(values.max() - values.min())
    flat = values.reshape(-1)
    flat[picked] = np.maximum(flat[picked] + rng.normal(0.0, spread, size=picked.size), 0.0)
    logger.debug("gaussian noise on %d entries, std %.4g", picked.size, spread)
    return data.with_values(values)


def salt_pepper_corrupt(data: DataMatrix, density: float, seed: Optional[int] = None) -> DataMatrix:
    """Set floor(density * d * n) entries to min X or max X with probability 1/2 each."""
    if not 0 <= density <= 1:
        raise ContractViolation(f"density must lie in [0, 1], got {density!r}")

    rng = np.random.default_rng(seed)
    values = data.values.copy()
    low, high = float(values.min()), float(values.max())
    picked = _pick_entries(data, density, rng)
    flat = values.reshape(-1)
    flat[picked] = np.where(rng.random(picked.size) < 0.5, low, high)
    logger.debug("salt-and-pepper noise on %d entries", picked.size)
    return data.with_values(values)


def poisson_corrupt(data: DataMatrix, scale: float = 1.0, seed: Optional[int] = None) -> DataMatrix:
    """Replace every entry x by Poisson(scale * x) / scale."""
    if not (scale > 0 and math.isfinite(scale)):
        raise ContractViolation(f"scale must be a positive finite number, got {scale!r}")

    rng = np.random.default_rng(seed)
    values = rng.poisson(scale * np.maximum(data.values, 0.0)) / scale
    return data.with_values(values)


@dataclass(frozen=True)
class NoiseSpec:
    """
    Which corruption an experiment applies.

    Attributes:
        kind: gaussian, salt_pepper or poisson
        ratio: Fraction of entries hit by Gaussian noise
        sigma_scale: Gaussian std as a fraction of the data range
        density: Fraction of entries hit by salt-and-pepper noise
        scale: Poisson intensity scale
    """
    kind: NoiseKind
    ratio: float = 0.1
    sigma_scale: float = 0.1
    density: float = 0.1
    scale: float = 1.0

    def __post_init__(self):
        """Validate the parameters of the chosen corruption."""
        try:
            object.__setattr__(self, 'kind', NoiseKind(self.kind))
        except ValueError:
            raise ContractViolation(f"Unknown noise kind: {self.kind!r}") from None
        if not 0 <= self.ratio <= 1:
            raise ContractViolation("noise ratio must lie in [0, 1]")
        if not 0 <= self.density <= 1:
            raise ContractViolation("noise density must lie in [0, 1]")
        if not self.sigma_scale > 0:
            raise ContractViolation("noise sigma_scale must be positive")
        if not self.scale > 0:
            raise ContractViolation("noise scale must be positive")

    def to_dict(self) -> dict:
        """Convert the noise spec to a dictionary."""
        return {
            'kind': self.kind.value,
            'ratio': self.ratio,
            'sigma_scale': self.sigma_scale,
            'density': self.density,
            'scale': self.scale
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'NoiseSpec':
        """Create a NoiseSpec from a dictionary."""
        return cls(**data)


def corrupt(data: DataMatrix, spec: Optional[NoiseSpec], seed: Optional[int] = None) -> DataMatrix:
    """Apply the corruption described by spec; None leaves the data unchanged."""
    if spec is None:
        return data
    if spec.kind is NoiseKind.GAUSSIAN:
        return gaussian_corrupt(data, spec.ratio, spec.sigma_scale, seed)
    if spec.kind is NoiseKind.SALT_PEPPER:
        return salt_pepper_corrupt(data, spec.density, seed)
    return poisson_corrupt(data, spec.scale, seed)
