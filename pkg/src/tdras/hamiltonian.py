"""Laser pulse, gauges and orbital-basis matrix elements.

Orbitals are stored column-wise as weight-scaled grid samples, ``phi[x, i]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad

from .grid import CapSpec, DvrGrid, cap_vector, interaction_kernel, potential_vector


class Gauge(str, Enum):
    LENGTH = "length"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class LaserPulse:
    """sin^2-envelope pulse ``A(t) = (F0/w) sin^2(pi t/T) sin(w t)`` on [0, T]."""

    f0: float
    omega: float
    duration: float

    def __post_init__(self):
        if self.f0 < 0:
            raise ValueError("f0 must be nonnegative")
        if self.omega <= 0 or self.duration <= 0:
            raise ValueError("omega and duration must be positive")

    @classmethod
    def from_cycles(cls, f0: float, omega: float, cycles: float) -> "LaserPulse":
        return cls(f0, omega, cycles * 2.0 * np.pi / omega)

    @property
    def ponderomotive(self) -> float:
        return self.f0**2 / (4.0 * self.omega**2)

    def cutoff(self, ip: float) -> float:
        """Classical cutoff photon energy 3.17 Up + Ip."""
        return 3.17 * self.ponderomotive + ip

    def vector_potential(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        a = self.f0 / self.omega * np.sin(np.pi * t / self.duration) ** 2 * np.sin(self.omega * t)
        return np.where(inside, a, 0.0)

    def electric_field(self, t):
        """F(t) = -dA/dt."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        w, T = self.omega, self.duration
        env = np.sin(np.pi * t / T)
        denv2 = 2.0 * env * np.cos(np.pi * t / T) * np.pi / T
        da = self.f0 / w * (denv2 * np.sin(w * t) + env**2 * w * np.cos(w * t))
        return np.where(inside, -da, 0.0)

    def a2_integral(self, t: float) -> float:
        """int_0^t A(s)^2 ds (clipped to the pulse interval)."""
        t = min(max(float(t), 0.0), self.duration)
        if t == 0.0:
            return 0.0
        val, _ = quad(lambda s: float(self.vector_potential(s)) ** 2, 0.0, t, limit=400, epsabs=1e-14, epsrel=1e-13)
        return val


def vector_potential(pulse: LaserPulse | None, t: float) -> float:
    return 0.0 if pulse is None else float(pulse.vector_potential(t))


def electric_field(pulse: LaserPulse | None, t: float) -> float:
    return 0.0 if pulse is None else float(pulse.electric_field(t))


class OneBodyOperator:
    """Grid action of h(t) = T + V + laser term (- i CAP)."""

    def __init__(self, grid: DvrGrid, Z: float, cap: CapSpec | None = None):
        self.grid = grid
        self.Z = Z
        self.potential = potential_vector(grid, Z)
        self.cap = None if cap is None else cap_vector(grid, cap)
        self.kinetic_symbol = 0.5 * grid.wavenumbers**2
        k = grid.wavenumbers.copy()
        if grid.n_points % 2 == 0:
            k[grid.n_points // 2] = 0.0
        self.derivative_symbol = 1j * k

    def kinetic(self, phi: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self.kinetic_symbol[:, None] * np.fft.fft(phi, axis=0), axis=0)

    def local(self, t: float, pulse: LaserPulse | None, gauge: Gauge, include_cap: bool = True) -> np.ndarray:
        """Diagonal (multiplicative) part of h at time t, complex if CAP is on."""
        v = self.potential.astype(complex)
        if gauge == Gauge.LENGTH and pulse is not None:
            v = v + electric_field(pulse, t) * self.grid.points
        if include_cap and self.cap is not None:
            v = v - 1j * self.cap
        return v

    def apply(self, phi, t=0.0, pulse=None, gauge=Gauge.LENGTH, include_cap=True, skip_kinetic=False):
        out = self.local(t, pulse, gauge, include_cap)[:, None] * phi
        if not skip_kinetic:
            out = out + self.kinetic(phi)
        if gauge == Gauge.VELOCITY and pulse is not None:
            a = vector_potential(pulse, t)
            if a != 0.0:
                dphi = np.fft.ifft(self.derivative_symbol[:, None] * np.fft.fft(phi, axis=0), axis=0)
                out = out - 1j * a * dphi
        return out


def one_body_matrix(phi, op: OneBodyOperator, pulse=None, t=0.0, gauge=Gauge.LENGTH, include_cap=False):
    """h[p, q] = <phi_p| h(t) |phi_q>."""
    return phi.conj().T @ op.apply(phi, t, pulse, gauge, include_cap)


def pair_densities(phi: np.ndarray) -> np.ndarray:
    """conj(phi_k) phi_l on the grid, shape (n, M, M)."""
    return phi.conj()[:, :, None] * phi[:, None, :]


def mean_fields_and_v2(phi: np.ndarray, kernel: np.ndarray):
    """Mean fields W[x, k, l] and the two-body tensor v2[i, j, k, l].

    ``W[x, k, l] = sum_y K(x, y) conj(phi_k(y)) phi_l(y)`` (function values) and
    ``v2[i, j, k, l] = sum_x conj(phi_i(x)) phi_j(x) W[x, k, l]``.
    """
    n, M = phi.shape
    # W[:, l, k] = conj(W[:, k, l]) for a real kernel: convolve only k <= l
    ku, lu = np.triu_indices(M)
    upper = np.ascontiguousarray(phi.conj()[:, ku] * phi[:, lu])
    wu = (kernel @ upper.view(np.float64)).view(np.complex128)
    w = np.empty((n, M, M), dtype=complex)
    w[:, ku, lu] = wu
    w[:, lu, ku] = wu.conj()
    pair = pair_densities(phi).reshape(n, M * M)
    v2 = (pair.T @ w.reshape(n, M * M)).reshape(M, M, M, M)
    return w, v2


def koopmans_ip(orbital_energies: np.ndarray, n_electrons: int) -> float:
    """-(HOMO energy) for a closed shell."""
    return -float(np.sort(np.real(orbital_energies))[n_electrons // 2 - 1])


def gauge_phase(grid: DvrGrid, pulse: LaserPulse | None, t: float, source: Gauge, target: Gauge,
                a2_integral: float | None = None) -> np.ndarray:
    """Local phase factor mapping orbitals from one gauge to the other.

    psi_V = exp(-i A x + (i/2) int A^2) psi_L; the inverse maps back.
    """
    source, target = Gauge(source), Gauge(target)
    if source == target:
        raise ValueError("source and target gauges must differ")
    a = vector_potential(pulse, t)
    s = pulse.a2_integral(t) if (a2_integral is None and pulse is not None) else (a2_integral or 0.0)
    arg = -a * grid.points + 0.5 * s
    if target == Gauge.LENGTH:
        arg = -arg
    return np.exp(1j * arg)


def gauge_transform(phi: np.ndarray, grid: DvrGrid, pulse, t: float, source, target, a2_integral=None):
    return gauge_phase(grid, pulse, t, source, target, a2_integral)[:, None] * phi


def interaction(grid: DvrGrid) -> np.ndarray:
    return interaction_kernel(grid)
