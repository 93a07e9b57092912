"""Baseline methods: restricted HF, TDCIS, single-active-electron and exact two-electron dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .grid import CapSpec, DvrGrid, cap_vector, dipole_acceleration_vector, interaction_kernel, potential_vector
from .hamiltonian import Gauge, LaserPulse, electric_field, vector_potential
from .propagator import DormandPrince, PropagationConfig, Trajectory


class ScfDivergence(RuntimeError):
    pass


class NotConverged(RuntimeError):
    pass


@dataclass
class HfSolution:
    grid: DvrGrid
    Z: float
    n_electrons: int
    orbitals: np.ndarray  # all Fock eigenvectors, occupied first
    energies: np.ndarray
    energy: float
    residual: float
    fock: np.ndarray

    @property
    def n_occ(self) -> int:
        return self.n_electrons // 2

    @property
    def occupied(self) -> np.ndarray:
        return self.orbitals[:, : self.n_occ]

    @property
    def virtual(self) -> np.ndarray:
        return self.orbitals[:, self.n_occ :]

    def koopmans_ip(self, tol: float = 1e-7) -> float:
        if self.residual > tol:
            raise NotConverged(f"HF residual {self.residual:.3g} above {tol:.1g}")
        return -float(self.energies[self.n_occ - 1])


def _fock(grid, hcore, kernel, occ):
    dens = np.abs(occ) ** 2
    j = kernel @ dens.sum(axis=1)
    kmat = kernel * (occ @ occ.conj().T)
    return hcore + np.diag(2.0 * j) - kmat


def hf_scf(grid: DvrGrid, Z: float, n_electrons: int, damping: float = 0.3, tol: float = 1e-10,
           max_iter: int = 500) -> HfSolution:
    """Closed-shell restricted HF by damped SCF diagonalization with DIIS acceleration."""
    if n_electrons <= 0 or n_electrons % 2:
        raise ValueError("closed shell needs an even electron count")
    nocc = n_electrons // 2
    hcore = grid.kinetic + np.diag(potential_vector(grid, Z))
    kernel = interaction_kernel(grid)
    _, vecs = np.linalg.eigh(hcore)
    occ = vecs[:, :nocc]
    dmat = occ @ occ.T
    hist_f, hist_e = [], []
    e_old = np.inf
    for it in range(max_iter):
        fock = _fock(grid, hcore, kernel, occ)
        err = fock @ dmat - dmat @ fock
        hist_f.append(fock)
        hist_e.append(err)
        hist_f, hist_e = hist_f[-8:], hist_e[-8:]
        if len(hist_f) > 2:
            nb = len(hist_f)
            b = -np.ones((nb + 1, nb + 1))
            b[-1, -1] = 0.0
            for i in range(nb):
                for k in range(nb):
                    b[i, k] = np.sum(hist_e[i] * hist_e[k])
            rhs = np.zeros(nb + 1)
            rhs[-1] = -1.0
            try:
                coef = np.linalg.solve(b, rhs)[:nb]
                f_use = sum(c * f for c, f in zip(coef, hist_f))
            except np.linalg.LinAlgError:
                f_use = fock
        else:
            f_use = fock
        eps, vecs = np.linalg.eigh(f_use)
        occ_new = vecs[:, :nocc]
        d_new = occ_new @ occ_new.T
        if len(hist_f) <= 2:
            d_new = (1.0 - damping) * d_new + damping * dmat
            lam, u = np.linalg.eigh(d_new)
            occ_new = u[:, -nocc:]
            d_new = occ_new @ occ_new.T
        dmat, occ = d_new, occ_new
        e = float(np.sum(dmat * (hcore + _fock(grid, hcore, kernel, occ))))
        res = float(np.abs(err).max())
        if not np.isfinite(e):
            raise ScfDivergence("SCF energy became non-finite; increase damping")
        if res < tol and abs(e - e_old) < tol:
            break
        e_old = e
    else:
        raise ScfDivergence(f"SCF not converged after {max_iter} iterations (residual {res:.3g}); try damping > {damping}")
    fock = _fock(grid, hcore, kernel, occ)
    eps, vecs = np.linalg.eigh(fock)
    occ = vecs[:, :nocc]
    fock = _fock(grid, hcore, kernel, occ)
    eps, vecs = np.linalg.eigh(fock)
    dmat = vecs[:, :nocc] @ vecs[:, :nocc].T
    e = float(np.sum(dmat * (hcore + fock)))
    res = float(np.abs(fock @ dmat - dmat @ fock).max())
    vecs = _fix_sign(vecs)
    return HfSolution(grid, Z, n_electrons, vecs, eps, e, res, fock)


def _fix_sign(vecs):
    """Deterministic phase: largest-magnitude component positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s


# -- TDCIS -----------------------------------------------------------------------

@dataclass
class CisState:
    alpha0: complex
    alpha: np.ndarray  # (n_occ, n_virt), singlet-adapted amplitudes

    @property
    def norm2(self) -> float:
        return float(abs(self.alpha0) ** 2 + np.sum(np.abs(self.alpha) ** 2))


class CisModel:
    """Singlet CIS Hamiltonian and one-body couplings in the HF basis."""

    def __init__(self, hf: HfSolution, n_virtual: int | None = None, cap: CapSpec | None = None):
        self.hf = hf
        grid = hf.grid
        occ = hf.occupied
        virt = hf.virtual if n_virtual is None else hf.virtual[:, :n_virtual]
        self.occ, self.virt = occ, virt
        no, nv = occ.shape[1], virt.shape[1]
        self.no, self.nv = no, nv
        kernel = interaction_kernel(grid)
        eo = hf.energies[:no]
        ev = hf.energies[no : no + nv]
        # (ai|jb) and (ab|ji) two-electron integrals
        p_ai = (virt[:, :, None] * occ[:, None, :]).reshape(grid.n_points, nv * no)  # [x, (a,i)]
        coul = (p_ai.T @ (kernel @ p_ai)).reshape(nv, no, nv, no)  # (ai|bj) = (ai|jb) for real orbitals
        exch = np.empty((nv, no, nv, no))
        for i in range(no):
            for j in range(no):
                wji = kernel @ (occ[:, j] * occ[:, i])
                exch[:, i, :, j] = virt.T @ (wji[:, None] * virt)  # (ab|ji)
        h = 2.0 * coul - exch
        diag = (ev[:, None] - eo[None, :]).ravel()
        h = h.reshape(nv * no, nv * no) + np.diag(diag)
        self.h_cis = np.transpose(h.reshape(nv, no, nv, no), (1, 0, 3, 2)).reshape(no * nv, no * nv)
        self.basis = np.concatenate([occ, virt], axis=1)
        x = grid.points
        self.x_mat = self.basis.T @ (x[:, None] * self.basis)
        self.d_mat = self.basis.T @ (dipole_acceleration_vector(grid, hf.Z)[:, None] * self.basis)
        self.grad_mat = self.basis.T @ (grid.derivative @ self.basis)
        self.cap_mat = None if cap is None else self.basis.T @ (cap_vector(grid, cap)[:, None] * self.basis)

    @property
    def dim(self) -> int:
        return 1 + self.no * self.nv

    def one_body_block(self, o: np.ndarray) -> np.ndarray:
        """Matrix of sum_pq o_pq E_p^q in the {HF, singlet singles} basis."""
        no, nv = self.no, self.nv
        oo = o[:no, :no]
        ov = o[:no, no:]
        vv = o[no:, no:]
        out = np.zeros((self.dim, self.dim), dtype=complex)
        ref = 2.0 * np.trace(oo)
        out[0, 0] = ref
        out[0, 1:] = np.sqrt(2.0) * ov.ravel()
        out[1:, 0] = np.sqrt(2.0) * o[no:, :no].T.ravel()
        blk = np.kron(np.eye(no), vv) - np.kron(oo.T, np.eye(nv)) + ref * np.eye(no * nv)
        out[1:, 1:] = blk
        return out

    def coupling(self, t: float, pulse, gauge: Gauge) -> np.ndarray:
        o = np.zeros_like(self.x_mat, dtype=complex)
        if pulse is not None:
            if Gauge(gauge) == Gauge.LENGTH:
                o = o + electric_field(pulse, t) * self.x_mat
            else:
                o = o - 1j * vector_potential(pulse, t) * self.grad_mat
        if self.cap_mat is not None:
            o = o - 1j * self.cap_mat
        return o

    def pack(self, state: CisState) -> np.ndarray:
        return np.concatenate([[state.alpha0], state.alpha.ravel()])

    def unpack(self, y) -> CisState:
        return CisState(complex(y[0]), y[1:].reshape(self.no, self.nv))

    def dipole(self, y) -> float:
        """<D> including the constant HF part."""
        return float(np.vdot(y, self.one_body_block(self.d_mat) @ y).real)


def tdcis_propagate(hf: HfSolution, pulse: LaserPulse | None = None, gauge: Gauge = Gauge.LENGTH,
                    cap: CapSpec | None = None, config: PropagationConfig = PropagationConfig(),
                    n_virtual: int | None = None, state: CisState | None = None) -> Trajectory:
    model = CisModel(hf, n_virtual, cap)
    h0 = np.zeros((model.dim, model.dim), dtype=complex)
    h0[1:, 1:] = model.h_cis
    d_block = model.one_body_block(model.d_mat)
    # time-dependent part is linear in the scalar field value
    if gauge == Gauge.LENGTH:
        v_block = model.one_body_block(model.x_mat.astype(complex))
        scalar = lambda t: electric_field(pulse, t)
    else:
        v_block = model.one_body_block(-1j * model.grad_mat)
        scalar = lambda t: vector_potential(pulse, t)
    cap_block = None if model.cap_mat is None else model.one_body_block(-1j * model.cap_mat.astype(complex))
    # drop the constant 2 tr(o_occ) shift of the field term: a global phase
    v_block -= v_block[0, 0] * np.eye(model.dim)
    static = h0 if cap_block is None else h0 + cap_block

    def rhs(t, y):
        s = scalar(t) if pulse is not None else 0.0
        return -1j * (static @ y + s * (v_block @ y))

    y = np.zeros(model.dim, dtype=complex)
    if state is None:
        y[0] = 1.0
    else:
        y = model.pack(state)
    traj = Trajectory()

    def record(t, y):
        p0 = abs(y[0]) ** 2
        p1 = float(np.sum(np.abs(y[1:]) ** 2))
        traj.append(t, {"A": vector_potential(pulse, t), "F": electric_field(pulse, t),
                        "D": float(np.vdot(y, d_block @ y).real), "norm2": p0 + p1,
                        "P0": p0, "P1": p1, "P2": 0.0})

    _run_sampled(rhs, y, config, record, traj)
    traj.final = model.unpack(traj.final)
    return traj


def _run_sampled(rhs, y, config, record, traj, post=None):
    rk = DormandPrince(rhs, config.rtol, config.atol, config.dt)
    n_samples = int(round(config.t_end / config.sample_dt))
    t = 0.0
    record(0.0, y)
    for k in range(1, n_samples + 1):
        target = k * config.sample_dt
        while t < target:
            t, y, _ = rk.step(t, y, t_limit=target)
            if post is not None:
                y2 = post(y)
                if y2 is not y:
                    y = y2
                    rk.reset()
        t = target
        record(t, y)
    traj.final = y
    traj.stats = {"steps": rk.n_accepted, "rejected": rk.n_rejected}
    return y


# -- single active electron ------------------------------------------------------

def sae_propagate(hf: HfSolution, pulse: LaserPulse | None = None, gauge: Gauge = Gauge.LENGTH,
                  cap: CapSpec | None = None, config: PropagationConfig = PropagationConfig()) -> Trajectory:
    """One active electron starting in the HOMO; all other HF spin orbitals frozen.

    The wave packet obeys ``i dphi/dt = P (h + J - K) phi`` with ``P`` the projector
    orthogonal to the frozen lower orbitals, which fixes the gauge freedom of the
    component along ``phi`` itself so that the CAP can deplete its norm.
    """
    grid = hf.grid
    nocc = hf.n_occ
    frozen = hf.occupied[:, : nocc - 1]
    homo = hf.occupied[:, nocc - 1]
    kernel = interaction_kernel(grid)
    vloc = potential_vector(grid, hf.Z) + 2.0 * (kernel @ (np.abs(frozen) ** 2).sum(axis=1)) + kernel @ homo**2
    cap_v = None if cap is None else cap_vector(grid, cap)
    dvec = dipole_acceleration_vector(grid, hf.Z)
    ksym = 0.5 * grid.wavenumbers**2
    kder = 1j * grid.wavenumbers
    if grid.n_points % 2 == 0:
        kder[grid.n_points // 2] = 0.0
    const_d = 2.0 * float(np.sum(dvec[:, None] * frozen**2)) + float(np.sum(dvec * homo**2))

    def apply_h(t, phi):
        loc = vloc.astype(complex)
        if pulse is not None and gauge == Gauge.LENGTH:
            loc = loc + electric_field(pulse, t) * grid.points
        if cap_v is not None:
            loc = loc - 1j * cap_v
        fphi = np.fft.fft(phi)
        out = np.fft.ifft(ksym * fphi) + loc * phi
        if pulse is not None and gauge == Gauge.VELOCITY:
            out = out - 1j * vector_potential(pulse, t) * np.fft.ifft(kder * fphi)
        if frozen.shape[1]:
            kphi = sum(frozen[:, i] * (kernel @ (frozen[:, i] * phi)) for i in range(frozen.shape[1]))
            out = out - kphi
            out = out - frozen @ (frozen.T @ out)
        return out

    def rhs(t, y):
        return -1j * apply_h(t, y)

    traj = Trajectory()

    def record(t, y):
        ov = np.vdot(homo, y)
        n2 = float(np.vdot(y, y).real)
        traj.append(t, {"A": vector_potential(pulse, t), "F": electric_field(pulse, t),
                        "D": const_d + float(np.vdot(y, dvec * y).real), "norm2": n2,
                        "P0": abs(ov) ** 2, "P1": n2 - abs(ov) ** 2, "P2": 0.0})

    _run_sampled(rhs, homo.astype(complex), config, record, traj)
    return traj


# -- exact two-electron solver ----------------------------------------------------

class TwoElectronModel:
    """Spatial two-electron wave function psi[x1, x2] on the product grid."""

    max_points = 512

    def __init__(self, grid: DvrGrid, Z: float, cap: CapSpec | None = None):
        if grid.n_points > self.max_points:
            raise MemoryError(f"exact two-electron solver limited to n <= {self.max_points}")
        self.grid = grid
        self.Z = Z
        v = potential_vector(grid, Z)
        self.local = v[:, None] + v[None, :] + interaction_kernel(grid)
        self.cap = None if cap is None else cap_vector(grid, cap)
        self.kin = np.array(grid.kinetic)
        self.dvec = dipole_acceleration_vector(grid, Z)

    def apply(self, psi, t=0.0, pulse=None, gauge=Gauge.LENGTH):
        out = self.kin @ psi + psi @ self.kin + self.local * psi
        if pulse is not None:
            x = self.grid.points
            if gauge == Gauge.LENGTH:
                out = out + electric_field(pulse, t) * (x[:, None] + x[None, :]) * psi
            else:
                d = self.grid.derivative
                out = out - 1j * vector_potential(pulse, t) * (d @ psi + psi @ d.T)
        if self.cap is not None:
            out = out - 1j * (self.cap[:, None] + self.cap[None, :]) * psi
        return out

    def ground_state(self, tol: float = 1e-12):
        n = self.grid.n_points

        def mv(v):
            return self.apply(v.reshape(n, n)).real.ravel()

        op = LinearOperator((n * n, n * n), matvec=mv, dtype=float)
        x = self.grid.points
        v0 = np.exp(-0.5 * (x[:, None] ** 2 + x[None, :] ** 2)).ravel()
        vals, vecs = eigsh(op, k=1, which="SA", v0=v0, tol=tol)
        psi = vecs[:, 0].reshape(n, n)
        psi = 0.5 * (psi + psi.T)
        psi /= np.linalg.norm(psi)
        return float(vals[0]), psi.astype(complex)

    def dipole(self, psi) -> float:
        dens = np.abs(psi) ** 2
        return float(np.sum(dens * (self.dvec[:, None] + self.dvec[None, :])))


def exact_2e(grid: DvrGrid, Z: float, pulse: LaserPulse | None = None, gauge: Gauge = Gauge.LENGTH,
             cap: CapSpec | None = None, config: PropagationConfig | None = None):
    """Ground-state energy and (if ``config`` is given) a trajectory of the exact 1D two-electron problem."""
    model = TwoElectronModel(grid, Z, cap)
    e0, psi = model.ground_state()
    if config is None:
        return e0, psi, None
    n = grid.n_points
    traj = Trajectory()

    def rhs(t, y):
        return -1j * model.apply(y.reshape(n, n), t, pulse, gauge).ravel()

    def record(t, y):
        psi = y.reshape(n, n)
        asym = float(np.abs(psi - psi.T).max())
        traj.append(t, {"A": vector_potential(pulse, t), "F": electric_field(pulse, t),
                        "D": model.dipole(psi), "norm2": float(np.vdot(y, y).real), "asym": asym})

    _run_sampled(rhs, psi.ravel(), config, record, traj)
    return e0, psi, traj
