"""System parameters and external potentials.

Default units follow the dimensionless convention hbar = mass = stiffness = 1;
every value stays overridable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Scales of the one-particle system."""

    hbar: float = 1.0
    mass: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class Potential:
    """External potential: harmonic with stiffness k, or free."""

    kind: str = "harmonic"
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in ("harmonic", "free"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "harmonic" and self.k <= 0:
            raise ValueError(f"harmonic potential requires k > 0, got {self.k}")

    def value(self, x):
        if self.kind == "harmonic":
            return 0.5 * self.k * np.square(x)
        return np.zeros_like(np.asarray(x, dtype=float))

    def gradient(self, x):
        if self.kind == "harmonic":
            return self.k * np.asarray(x, dtype=float)
        return np.zeros_like(np.asarray(x, dtype=float))

    def gradient_scalar(self, x: float) -> float:
        if self.kind == "harmonic":
            return self.k * x
        return 0.0


HARMONIC = Potential("harmonic", 1.0)
FREE = Potential("free")
