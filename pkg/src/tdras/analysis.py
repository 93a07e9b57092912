"""Observables and post-processing: dipole acceleration, harmonic spectra,
HF-basis excitation probabilities, state-resolved dipoles and the cost model.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .densities import density_matrices
from .fock import FockSpace, RasScheme
from .grid import DvrGrid, dipole_acceleration_vector


class UnsupportedSet(ValueError):
    pass


class GridMismatch(ValueError):
    pass


# -- dipole acceleration -----------------------------------------------------------

def dipole_acceleration(wf, grid: DvrGrid, Z: float) -> float:
    """<Psi|D|Psi> with D = sum_k d(x_k), d(x) = -dV/dx, as a one-body contraction."""
    dvec = dipole_acceleration_vector(grid, Z)
    dmat = wf.phi.conj().T @ (dvec[:, None] * wf.phi)
    dens = density_matrices(wf.space.to_matrix(wf.c), wf.space)
    return float(np.sum(dmat * dens.rho1).real)


# -- spectra -----------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray  # in units of omega
    intensities: np.ndarray
    window: str
    d_omega: float  # bin spacing in angular frequency (a.u.)
    nyquist: bool = False  # last bin is the Nyquist frequency

    def __post_init__(self):
        if len(self.frequencies) != len(self.intensities):
            raise ValueError("frequency and intensity lengths differ")

    def band(self, lo: float, hi: float):
        sel = (self.frequencies >= lo) & (self.frequencies <= hi)
        return self.frequencies[sel], self.intensities[sel]

    def total_power(self) -> float:
        """sum S dOmega / 2 pi over positive and negative frequencies of a real series."""
        w = np.full(len(self.intensities), 2.0)
        w[0] = 1.0
        if self.nyquist:
            w[-1] = 1.0
        return float(np.sum(w * self.intensities) * self.d_omega / (2.0 * np.pi))


_WINDOWS = ("hann", "rect")


def _window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(n)
    if name == "rect":
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}; choose from {_WINDOWS}")


def hhg_spectrum(series, dt: float | None = None, omega: float = 1.0, window: str = "hann",
                 pad: int = 4, times=None) -> Spectrum:
    """S(Omega) = |dt sum_k w_k x_k exp(i Omega t_k)|^2 on the non-negative frequency grid.

    Either ``dt`` or a uniform ``times`` array must be given.  ``pad`` zero-pads
    the windowed series to ``pad * len(series)`` samples, which only
    interpolates the spectrum.
    """
    x = np.asarray(series, dtype=float)
    if times is not None:
        times = np.asarray(times, dtype=float)
        steps = np.diff(times)
        if len(steps) == 0 or np.ptp(steps) > 1e-9 * max(1.0, abs(steps.mean())):
            raise ValueError("hhg_spectrum needs uniformly sampled data")
        dt = float(steps.mean())
    if dt is None or dt <= 0:
        raise ValueError("sampling step must be positive")
    if pad < 1:
        raise ValueError("pad must be >= 1")
    n = len(x)
    npad = pad * n
    xw = x * _window(window, n)
    amp = dt * np.fft.rfft(xw, n=npad)
    s = np.abs(amp) ** 2
    d_omega = 2.0 * np.pi / (npad * dt)
    freqs = np.arange(len(s)) * d_omega / omega
    return Spectrum(freqs, s, window, d_omega, nyquist=npad % 2 == 0)


def windowed_energy(series, dt: float, window: str = "hann") -> float:
    """sum |w x|^2 dt, the time-side of the Parseval identity."""
    x = np.asarray(series, dtype=float)
    return float(np.sum((x * _window(window, len(x))) ** 2) * dt)


# -- HF-basis projections ------------------------------------------------------------

@dataclass
class HfProjectionWorkspace:
    """Psi re-expanded over {occupied HF orbitals} + {orthonormalized remainder}.

    ``basis[:, :n_occ]`` are the occupied HF orbitals and the remaining columns
    span the components of the time-dependent orbitals orthogonal to them.
    ``c_new`` is the CI matrix (alpha strings x beta strings) in that basis and
    ``level`` counts the electrons outside the occupied HF set per entry.
    """

    basis: np.ndarray
    n_occ: int
    space: FockSpace
    c_new: np.ndarray
    level: np.ndarray
    overlap: complex  # <HF|Psi>
    chi: np.ndarray  # [x, i] one-electron packets (alpha channel)
    chi_beta: np.ndarray
    norm2: float

    def masked(self, levels) -> np.ndarray:
        keep = np.isin(self.level, list(levels))
        return self.c_new * keep


@lru_cache(maxsize=16)
def _full_space(n_orbitals: int, n_electrons: int) -> FockSpace:
    return FockSpace(RasScheme.mctdhf(n_orbitals), n_electrons)


def _string_transform(u: np.ndarray, old: list, new: list) -> np.ndarray:
    """T[t, s] = det U[t, s]: expansion of the old determinants in the new basis."""
    out = np.zeros((len(new), len(old)), dtype=complex)
    for a, t in enumerate(new):
        rows = u[list(t)]
        for b, s in enumerate(old):
            out[a, b] = np.linalg.det(rows[:, list(s)]) if len(s) else 1.0
    return out


def hf_projection_workspace(wf, hf, rank_tol: float = 1e-10) -> HfProjectionWorkspace:
    """Express ``wf`` in the HF-adapted orbital basis and extract the packets chi_i."""
    if wf.phi.shape[0] != hf.grid.n_points:
        raise GridMismatch("wave function and HF solution live on different grids")
    occ = hf.occupied.astype(complex)
    nocc = occ.shape[1]
    space = wf.space
    nps = space.n_electrons // 2
    if nps != nocc:
        raise GridMismatch("electron count differs from the HF reference")
    phi = wf.phi
    s_occ = occ.conj().T @ phi
    rest = phi - occ @ s_occ
    uu, sv, _ = np.linalg.svd(rest, full_matrices=False)
    extra = uu[:, sv > rank_tol * max(1.0, sv.max(initial=0.0))]
    basis = np.concatenate([occ, extra], axis=1)
    u = basis.conj().T @ phi  # [q, n] = <e_q|phi_n>
    n_new = basis.shape[1]
    new_space = _full_space(n_new, space.n_electrons)
    t = _string_transform(u, space.strings, new_space.strings)
    c_new = t @ space.to_matrix(wf.c) @ t.T
    n_ext = np.array([sum(1 for k in s if k >= nocc) for s in new_space.strings])
    level = n_ext[:, None] + n_ext[None, :]
    ref = new_space.strings.index(tuple(range(nocc)))
    overlap = complex(c_new[ref, ref])
    # chi_i = sum_a e_a <HF_i^a|Psi> for one spin channel
    chi_a = np.zeros((basis.shape[0], nocc), dtype=complex)
    chi_b = np.zeros_like(chi_a)
    for i in range(nocc):
        for a in range(nocc, n_new):
            tgt = tuple(k for k in range(nocc) if k != i) + (a,)
            sign = (-1.0) ** (i + nocc - 1)
            idx = new_space.strings.index(tgt)
            chi_a[:, i] += sign * c_new[idx, ref] * basis[:, a]
            chi_b[:, i] += sign * c_new[ref, idx] * basis[:, a]
    norm2 = float(np.sum(np.abs(c_new) ** 2))
    return HfProjectionWorkspace(basis, nocc, new_space, c_new, level, overlap, chi_a, chi_b, norm2)


def excitation_probabilities(ws: HfProjectionWorkspace) -> tuple[float, float, float]:
    """(<P0>, <P1>, <P2>): weight with zero, one and two electrons outside the occupied HF set."""
    w = np.abs(ws.c_new) ** 2
    return tuple(float(np.sum(w[ws.level == k])) for k in range(3))


_SETS = {
    frozenset({0, 1}): (0, 1),
    frozenset({0, 1, 2}): (0, 1, 2),
    frozenset({1}): (1,),
    frozenset({1, 2}): (1, 2),
}


def _parse_set(projectors) -> tuple[int, ...]:
    keys = set()
    for p in projectors:
        if isinstance(p, str):
            p = p.strip().upper()
            if not p.startswith("P") or not p[1:].isdigit():
                raise UnsupportedSet(f"unknown projector {p!r}")
            p = int(p[1:])
        keys.add(int(p))
    try:
        return _SETS[frozenset(keys)]
    except KeyError:
        raise UnsupportedSet(f"projector set {sorted(keys)} not supported; use one of "
                             "{P0,P1}, {P0,P1,P2}, {P1}, {P1,P2}") from None


def state_resolved_dipole(ws: HfProjectionWorkspace, grid: DvrGrid, Z: float, projectors) -> float:
    """<Psi|P_S D P_S|Psi> with P_S the sum of the requested HF-basis projectors."""
    levels = _parse_set(projectors)
    dvec = dipole_acceleration_vector(grid, Z)
    dmat = ws.basis.conj().T @ (dvec[:, None] * ws.basis)
    cm = ws.masked(levels)
    dens = density_matrices(cm, ws.space)
    return float(np.sum(dmat * dens.rho1).real)


# -- cost model ----------------------------------------------------------------------

COST_METHODS = ("HF", "S", "D", "SD", "SDT", "MHF")
_ALIASES = {"TDHF": "HF", "MCTDHF": "MHF"}


def _dims(ne: int, m: int):
    k = ne // 2
    v = m - k
    d1 = 2 * k * v
    d2 = (k * v) ** 2 + 2 * comb(k, 2) * comb(v, 2)
    d3 = 2 * comb(k, 3) * comb(v, 3) + 2 * k * v * comb(k, 2) * comb(v, 2)
    return d1, d2, d3


def cost_estimate(method: str, n_electrons: int, m: int | None, n_dvr: int) -> int:
    """Per-step operation count of the closed-form scaling model (exact integers)."""
    tag = _ALIASES.get(method.upper(), method.upper())
    if tag not in COST_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {COST_METHODS}")
    ne, n = int(n_electrons), int(n_dvr)
    if ne <= 0 or ne % 2:
        raise ValueError("closed shell needs a positive even electron count")
    k = ne // 2
    if tag == "HF":
        return k**4 * n**2
    if m is None or int(m) < k:
        raise ValueError("orbital count M must be at least N_e/2")
    m = int(m)
    d1, d2, d3 = _dims(ne, m)
    if tag == "MHF":
        return 2 * m**4 * (n**2 + comb(m, k) ** 2)
    if tag == "S":
        return 2 * m**4 * (n**2 + 1 + d1) + m**6 * d1
    if tag == "D":
        return 2 * m**4 * (n**2 + 1 + d2)
    if tag == "SD":
        return 2 * m**4 * (n**2 + 1 + d1 + d2) + m**6 * d2
    return 2 * m**4 * (n**2 + 1 + d1 + d2 + d3) + m**6 * d3
