"""Frequency lattices and spatial grids on the circle and torus.

The torus has circumference 2*pi in every coordinate, so the dual lattice is
the integer lattice Z^d truncated to a box |xi_i| <= N.  All reductions over
lattice points run in a fixed order (ascending |xi|, ties broken
lexicographically) so results are bit-reproducible regardless of how the
tabulation itself was scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FrequencyGrid:
    """Truncated integer frequency lattice for T^d, d in {1, 2}."""

    dimension: int
    cutoff: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.cutoff < 1:
            raise ValidationError(f"cutoff must be >= 1, got {self.cutoff}")
        object.__setattr__(self, "points", _ordered_lattice(self.dimension, self.cutoff))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def boundary_shell(self) -> np.ndarray:
        """Mask of lattice points with max coordinate magnitude equal to N."""
        return np.max(np.abs(self.points), axis=1) == self.cutoff


def _ordered_lattice(d: int, n: int) -> np.ndarray:
    axes = [np.arange(-n, n + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    # ascending Euclidean norm, lexicographic tie-break
    norms = np.sum(pts.astype(np.int64) ** 2, axis=1)
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(d))) + (norms,))
    return pts[order]


def spatial_grid(m: int, d: int = 1) -> np.ndarray:
    """Uniform grid of m points per axis on [0, 2*pi)."""
    x = TWO_PI * np.arange(m) / m
    if d == 1:
        return x
    return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)


def wrap_angle(z):
    """Reduce to the centered fundamental domain (-pi, pi]."""
    out = np.mod(np.asarray(z, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def trapezoid_mass(values: np.ndarray, d: int = 1) -> float:
    """Integral over the torus by the trapezoid rule (spectrally accurate)."""
    m = values.shape[0]
    cell = (TWO_PI / m) ** d
    return float(np.sum(values) * cell)
