"""Fourier DVR on a periodic interval, model potentials and absorber.

Orbitals live on the grid as weight-scaled samples, ``f_k = sqrt(w) f(x_k)``,
so that inner products are plain dot products and every matrix below acts on
those samples directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import circulant


class InvalidDomain(ValueError):
    pass


@dataclass(frozen=True)
class CapSpec:
    """Monomial absorbing ramp, applied as ``-1j * cap_vector``."""

    onset_fraction: float = 0.8
    strength: float = 0.5
    order: int = 2

    def __post_init__(self):
        if not 0.0 < self.onset_fraction < 1.0:
            raise ValueError("onset_fraction must lie in (0, 1)")
        if self.strength < 0.0:
            raise ValueError("CAP strength must be nonnegative")
        if self.order < 2:
            raise ValueError("CAP order must be >= 2")


@dataclass(frozen=True, eq=False)
class DvrGrid:
    x_min: float
    x_max: float
    n_points: int
    points: np.ndarray = field(repr=False)
    weight: float

    @property
    def spacing(self) -> float:
        return self.weight

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @cached_property
    def kinetic(self) -> np.ndarray:
        t = np.fft.ifft(0.5 * self.wavenumbers**2).real
        mat = circulant(t)
        mat = 0.5 * (mat + mat.T)
        mat.setflags(write=False)
        return mat

    @cached_property
    def derivative(self) -> np.ndarray:
        k = self.wavenumbers.copy()
        if self.n_points % 2 == 0:
            k[self.n_points // 2] = 0.0  # drop the unpaired Nyquist mode
        d = np.fft.ifft(1j * k).real
        mat = circulant(d)
        mat = 0.5 * (mat - mat.T)
        mat.setflags(write=False)
        return mat

    def __eq__(self, other):
        if not isinstance(other, DvrGrid):
            return NotImplemented
        return (self.x_min, self.x_max, self.n_points) == (other.x_min, other.x_max, other.n_points)

    def __hash__(self):
        return hash((self.x_min, self.x_max, self.n_points))

    def to_samples(self, values: np.ndarray) -> np.ndarray:
        """Function values -> weight-scaled samples."""
        return np.sqrt(self.weight) * values

    def to_values(self, samples: np.ndarray) -> np.ndarray:
        return samples / np.sqrt(self.weight)


def build_grid(x_min: float, x_max: float, n: int) -> DvrGrid:
    if n < 2 or not x_max > x_min:
        raise InvalidDomain(f"need n >= 2 and x_max > x_min, got n={n}, [{x_min}, {x_max}]")
    dx = (x_max - x_min) / n
    points = x_min + dx * np.arange(n)
    points.setflags(write=False)
    return DvrGrid(float(x_min), float(x_max), int(n), points, dx)


def kinetic_matrix(grid: DvrGrid) -> np.ndarray:
    """Exact Fourier-DVR matrix of -1/2 d^2/dx^2 (periodic)."""
    return grid.kinetic


def derivative_matrix(grid: DvrGrid) -> np.ndarray:
    """Fourier-DVR first derivative, real antisymmetric."""
    return grid.derivative


def potential_vector(grid: DvrGrid, Z: float) -> np.ndarray:
    if Z <= 0:
        raise ValueError("nuclear charge must be positive")
    return -Z / np.sqrt(grid.points**2 + 1.0)


def dipole_acceleration_vector(grid: DvrGrid, Z: float) -> np.ndarray:
    """d(x) = -dV/dx for the soft-Coulomb well."""
    x = grid.points
    return -Z * x / (x**2 + 1.0) ** 1.5


def interaction_kernel(grid: DvrGrid) -> np.ndarray:
    x = grid.points
    return 1.0 / np.sqrt((x[:, None] - x[None, :]) ** 2 + 1.0)


def cap_vector(grid: DvrGrid, spec: CapSpec) -> np.ndarray:
    edge = max(abs(grid.x_min), abs(grid.x_max))
    onset = spec.onset_fraction * edge
    ax = np.abs(grid.points)
    ramp = np.clip((ax - onset) / (edge - onset), 0.0, None)
    return spec.strength * ramp**spec.order
