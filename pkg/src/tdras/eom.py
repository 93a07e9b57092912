"""Right-hand side of the coupled amplitude and orbital equations of motion.

Real and imaginary time share one code path through the rotation generator
``theta = i * eta`` (``eta[p, q] = <phi_p | d phi_q / dt>``): it is hermitian in
real time and anti-hermitian in imaginary time.  With

    F_C   = (H - sum_pq theta[p, q] E_p^q) C
    F_phi = phi theta + Q (h phi rho1^T + R) (rho1_reg^T)^-1

the real-time flow is ``d/dt (C, phi) = -i (F_C - E0 C, F_phi)`` and the imaginary-time
flow is ``d/dtau (C, phi) = -(F_C - lambda C, F_phi)`` with a Rayleigh shift
``lambda`` that keeps the CI norm fixed.  The constant ``E0`` (``energy_shift``)
only removes a global phase; it keeps the integrator from resolving the fast
exp(-i E t) rotation of the amplitudes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .densities import (
    DensitySet,
    commutator_two_body,
    density_matrices,
    excitation_stack,
    p_coupling_rhs,
    zeta4,
)
from .fock import FockSpace, sigma
from .hamiltonian import Gauge, LaserPulse, OneBodyOperator, mean_fields_and_v2


class SingularSystemWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Regularization:
    epsilon: float = 1e-10

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("regularization epsilon must be positive")

    def regularize(self, rho1: np.ndarray) -> np.ndarray:
        """rho + eps * exp(-rho / eps) applied to the eigenvalues."""
        lam, u = np.linalg.eigh(0.5 * (rho1 + rho1.conj().T))
        eps = self.epsilon
        lam = lam + eps * np.exp(-np.clip(lam, 0.0, None) / eps)
        return (u * lam) @ u.conj().T

    def inverse(self, rho1: np.ndarray) -> np.ndarray:
        lam, u = np.linalg.eigh(0.5 * (rho1 + rho1.conj().T))
        eps = self.epsilon
        lam = lam + eps * np.exp(-np.clip(lam, 0.0, None) / eps)
        return (u / lam) @ u.conj().T


def regularized_solve(a: np.ndarray, b: np.ndarray, epsilon: float):
    """Tikhonov-filtered SVD solution of a x = b; returns (x, condition estimate)."""
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    filt = s / (s**2 + epsilon**2)
    x = vh.T @ (filt * (u.T @ b))
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    return x, cond


def _lower_pairs(sub: np.ndarray):
    M = len(sub)
    return [(a, b) for a in range(M) for b in range(M) if sub[a] > sub[b]]


def solve_theta(space: FockSpace, h: np.ndarray, v2: np.ndarray, dens: DensitySet,
                zeta=None, coupling_rhs=None, imaginary: bool = False,
                epsilon: float = 1e-10, warn_cond: float = 1e12) -> np.ndarray:
    """Inter-subspace rotation generator theta (zero within each subspace).

    Core rows (P0-P1, P0-P2) and the P1-P2 rows of D and CASSCF-type schemes use
    the commutator condition ``<[E_i^j, H - Theta]> = 0`` (i in the lower, j in
    the higher subspace).  For S/SD/SDT the P1-P2 rows use the coupling tensors:
    ``sum_{k in P2, l in P1} (theta - h)[k, l] zeta[i, j, k, l] = rhs[i, j]``.
    """
    scheme = space.scheme
    M = space.n_orbitals
    sub = scheme.subspace_of()
    lower = _lower_pairs(sub)
    theta = np.zeros((M, M), dtype=complex)
    if not lower:
        return theta
    rho1 = dens.rho1
    vcomm = None
    rows_a, rows_b = [], []  # coefficient tensors over full theta, constants
    for bx in range(3):
        for by in range(bx + 1, 3):
            ix = np.nonzero(sub == bx)[0]
            iy = np.nonzero(sub == by)[0]
            if len(ix) == 0 or len(iy) == 0:
                continue
            if (bx, by) == (1, 2) and scheme.has_p_coupling:
                for a, i in enumerate(ix):
                    for c, j in enumerate(iy):
                        coef = np.zeros((M, M), dtype=complex)
                        coef[np.ix_(iy, ix)] = zeta[a, c]
                        const = -np.sum(h[np.ix_(iy, ix)] * zeta[a, c]) - coupling_rhs[a, c]
                        rows_a.append(coef)
                        rows_b.append(const)
                continue
            if vcomm is None:
                vcomm = commutator_two_body(v2, dens.rho2)
            for i in ix:
                for j in iy:
                    coef = np.zeros((M, M), dtype=complex)
                    coef[j, :] -= rho1[i, :]
                    coef[:, i] += rho1[:, j]
                    const = h[j, :] @ rho1[i, :] - h[:, i] @ rho1[:, j] + vcomm[i, j]
                    rows_a.append(coef)
                    rows_b.append(const)
    amat = np.array(rows_a).reshape(len(rows_a), M * M)
    bvec = np.array(rows_b)
    s = -1.0 if imaginary else 1.0
    lo = np.array([a * M + b for a, b in lower])
    up = np.array([b * M + a for a, b in lower])
    b1 = amat[:, lo]
    b2 = s * amat[:, up]
    plus, minus = b1 + b2, b1 - b2
    real_sys = np.block([[plus.real, -minus.imag], [plus.imag, minus.real]])
    rhs = -np.concatenate([bvec.real, bvec.imag])
    x, cond = regularized_solve(real_sys, rhs, epsilon)
    if cond > warn_cond:
        warnings.warn(f"rotation system is ill-conditioned (cond ~ {cond:.3g}); regularization active",
                      SingularSystemWarning, stacklevel=2)
    n = len(lower)
    vals = x[:n] + 1j * x[n:]
    for (a, b), val in zip(lower, vals):
        theta[a, b] = val
        theta[b, a] = s * np.conj(val)
    return theta


class EomSystem:
    """Packed derivative of (C, phi) for one RAS scheme, grid and field."""

    def __init__(self, space: FockSpace, op: OneBodyOperator, kernel: np.ndarray,
                 pulse: LaserPulse | None = None, gauge: Gauge = Gauge.LENGTH,
                 regularization: Regularization = Regularization(), imaginary: bool = False,
                 include_cap: bool = True, energy_shift: float = 0.0):
        self.space = space
        self.op = op
        self.kernel = kernel
        self.pulse = pulse
        self.gauge = Gauge(gauge)
        self.reg = regularization
        self.imaginary = imaginary
        self.include_cap = include_cap and not imaginary
        self.n_grid = op.grid.n_points
        self.n_orb = space.n_orbitals
        self.energy_shift = energy_shift
        self.n_evals = 0

    # -- packing ---------------------------------------------------------------
    def pack(self, c: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return np.concatenate([c, phi.ravel()])

    def unpack(self, y: np.ndarray):
        dim = self.space.dim
        return y[:dim], y[dim:].reshape(self.n_grid, self.n_orb)

    # -- pieces ----------------------------------------------------------------
    def snapshot(self, t: float, c: np.ndarray, phi: np.ndarray, skip_kinetic: bool = False):
        """Everything needed for one derivative evaluation at a single time."""
        space = self.space
        cmat = space.to_matrix(c)
        d = excitation_stack(cmat, space)
        dens = density_matrices(cmat, space, d=d, time=t)
        hphi = self.op.apply(phi, t, self.pulse, self.gauge, self.include_cap)
        h = phi.conj().T @ hphi
        w, v2 = mean_fields_and_v2(phi, self.kernel)
        zeta = rhs = None
        if space.scheme.has_p_coupling:
            zeta = zeta4(cmat, space, d=d)
            rhs = p_coupling_rhs(cmat, space, v2, d=d)
        theta = solve_theta(space, h, v2, dens, zeta, rhs, imaginary=self.imaginary,
                            epsilon=self.reg.epsilon)
        return dict(cmat=cmat, d=d, dens=dens, hphi=hphi, h=h, w=w, v2=v2, theta=theta)

    def amplitude_force(self, snap) -> np.ndarray:
        """F_C = (H - Theta) C restricted to the RAS space."""
        sig = sigma(snap["cmat"], self.space, snap["h"] - snap["theta"], snap["v2"], d=snap["d"])
        return self.space.from_matrix(sig)

    def qspace_force(self, phi: np.ndarray, snap) -> np.ndarray:
        """Q (h phi rho1^T + R) (rho1_reg^T)^-1, orthogonal to every orbital."""
        n, M = phi.shape
        dens = snap["dens"]
        w = snap["w"].reshape(n, M * M)
        t = (w @ dens.rho2.reshape(M * M, M * M).T).reshape(n, M, M)
        r = np.einsum("xij,xj->xi", t, phi)
        g = snap["hphi"] @ dens.rho1.T + r
        g = g - phi @ (phi.conj().T @ g)
        return g @ self.reg.inverse(dens.rho1).T

    def forces(self, t: float, c: np.ndarray, phi: np.ndarray):
        snap = self.snapshot(t, c, phi)
        fc = self.amplitude_force(snap)
        fphi = phi @ snap["theta"] + self.qspace_force(phi, snap)
        return fc, fphi, snap

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        self.n_evals += 1
        c, phi = self.unpack(y)
        fc, fphi, _ = self.forces(t, c, phi)
        if self.imaginary:
            lam = np.vdot(c, fc) / np.vdot(c, c).real
            return -self.pack(fc - lam * c, fphi)
        return -1j * self.pack(fc - self.energy_shift * c, fphi)
