"""Adaptive Dormand-Prince integration, imaginary-time relaxation and real-time runs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .eom import EomSystem, Regularization
from .fock import FockSpace, RasScheme
from .grid import CapSpec, DvrGrid, interaction_kernel
from .hamiltonian import Gauge, LaserPulse, OneBodyOperator, mean_fields_and_v2, vector_potential, electric_field
from .densities import density_matrices, energy_from_densities

log = logging.getLogger(__name__)


class PropagationError(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    pass


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class DormandPrince:
    """Embedded RK 5(4) with FSAL reuse and a PI step-size controller.

    ``post_step(t, y)`` may return a modified state (e.g. re-orthonormalized);
    the FSAL derivative is then discarded.
    """

    def __init__(self, rhs, rtol=1e-8, atol=1e-10, dt=1e-2, dt_min=1e-10, dt_max=np.inf):
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.dt = dt
        self.dt_min = dt_min
        self.dt_max = dt_max
        self.n_accepted = 0
        self.n_rejected = 0
        self._err_prev = 1e-4
        self._k1 = None

    def reset(self):
        self._k1 = None

    def step(self, t, y, t_limit=None):
        """Advance by one accepted step (not beyond ``t_limit``); returns (t, y, dt_used)."""
        if self._k1 is None:
            self._k1 = self.rhs(t, y)
        while True:
            h = min(self.dt, self.dt_max)
            clipped = False
            if t_limit is not None and t + h >= t_limit - 1e-12 * max(1.0, abs(t_limit)):
                h = t_limit - t
                clipped = True
            ks = [self._k1]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
                ks.append(self.rhs(t + _C[i] * h, yi))
            y_new = yi  # stage 7 is evaluated at the 5th-order solution
            err_vec = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean(np.abs(err_vec / scale) ** 2))
            if not np.isfinite(err):
                raise PropagationError(f"non-finite state at t={t:.6g}")
            if err <= 1.0:
                fac = 0.9 * err ** (-0.7 / 5) * self._err_prev ** (0.4 / 5) if err > 0 else 5.0
                fac = min(5.0, max(0.2, fac))
                self.dt = min(self.dt, h * fac) if clipped else h * fac
                self._err_prev = max(err, 1e-4)
                self._k1 = ks[6]
                self.n_accepted += 1
                return t + h, y_new, h
            self.n_rejected += 1
            self.dt = h * max(0.2, 0.9 * err ** (-1 / 5))
            if self.dt < self.dt_min:
                raise PropagationError(f"step size underflow at t={t:.6g} (dt={self.dt:.3g})")


# -- orbital bookkeeping ---------------------------------------------------------

def lowdin(phi: np.ndarray) -> np.ndarray:
    s = phi.conj().T @ phi
    lam, u = np.linalg.eigh(s)
    return phi @ ((u / np.sqrt(lam)) @ u.conj().T)


def orthonormalize(phi: np.ndarray, blocks) -> np.ndarray:
    """Blockwise symmetric orthonormalization, later blocks projected against earlier ones."""
    out = np.array(phi, dtype=complex)
    done = []
    for idx in blocks:
        b = out[:, idx]
        if done:
            prev = out[:, np.concatenate(done)]
            b = b - prev @ (prev.conj().T @ b)
        out[:, idx] = lowdin(b)
        done.append(idx)
    return out


def orthonormality_error(phi: np.ndarray) -> float:
    return float(np.abs(phi.conj().T @ phi - np.eye(phi.shape[1])).max())


# -- wave function and system ----------------------------------------------------

@dataclass
class WaveFunction:
    space: FockSpace
    c: np.ndarray
    phi: np.ndarray

    def copy(self):
        return WaveFunction(self.space, self.c.copy(), self.phi.copy())

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.c, self.c).real)


@dataclass(frozen=True)
class AtomSystem:
    Z: float
    n_electrons: int
    grid: DvrGrid

    def operator(self, cap: CapSpec | None = None) -> OneBodyOperator:
        return OneBodyOperator(self.grid, self.Z, cap)


@dataclass
class PropagationConfig:
    dt: float = 0.01
    rtol: float = 1e-9
    atol: float = 1e-11
    t_end: float = 50.0
    renorm_interval: int = 10
    sample_dt: float = 0.5
    tol: float = 1e-10
    max_time: float = 2000.0
    check_interval: int = 10
    admixture: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.rtol <= 0 or self.atol <= 0 or self.tol <= 0:
            raise ValueError("dt and tolerances must be positive")
        if self.renorm_interval < 1:
            raise ValueError("renorm_interval must be >= 1")


def energy(wf: WaveFunction, op: OneBodyOperator, kernel: np.ndarray) -> float:
    """<Psi|H|Psi>/<Psi|Psi> with the field-free, CAP-free Hamiltonian."""
    cmat = wf.space.to_matrix(wf.c)
    dens = density_matrices(cmat, wf.space)
    h = wf.phi.conj().T @ op.apply(wf.phi, include_cap=False)
    _, v2 = mean_fields_and_v2(wf.phi, kernel)
    return float(energy_from_densities(h, v2, dens).real / wf.norm2)


def initial_guess(system: AtomSystem, scheme: RasScheme, admixture=1e-3, seed=0) -> WaveFunction:
    """Lowest eigenvectors of T + V as orbitals; reference configuration plus a seeded admixture."""
    space = FockSpace(scheme, system.n_electrons)
    op = system.operator()
    hmat = system.grid.kinetic + np.diag(op.potential)
    _, vecs = np.linalg.eigh(hmat)
    phi = vecs[:, : scheme.n_orbitals].astype(complex)
    c = space.reference()
    if space.dim > 1 and admixture > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(size=space.dim)
        noise[np.argmax(np.abs(c))] = 0.0
        c = c + admixture * noise / np.linalg.norm(noise)
        c = c / np.linalg.norm(c)
    return WaveFunction(space, c.astype(complex), phi)


@dataclass
class RelaxationResult:
    energy: float
    psi: WaveFunction
    iterations: int
    residual: float
    tau: float
    history: list = field(default_factory=list)


def relax_imaginary(system: AtomSystem, scheme: RasScheme, config: PropagationConfig = PropagationConfig(),
                    reg: Regularization = Regularization(), guess: WaveFunction | None = None) -> RelaxationResult:
    """Imaginary-time relaxation to the variational ground state of ``scheme``."""
    wf = guess.copy() if guess is not None else initial_guess(system, scheme, config.admixture, config.seed)
    op = system.operator()
    kernel = interaction_kernel(system.grid)
    eom = EomSystem(wf.space, op, kernel, regularization=reg, imaginary=True)
    blocks = scheme.blocks()
    wf.phi = orthonormalize(wf.phi, blocks)
    wf.c = wf.c / np.linalg.norm(wf.c)
    y = eom.pack(wf.c, wf.phi)
    rk = DormandPrince(eom, config.rtol, config.atol, config.dt)
    tau, e_prev, tau_prev = 0.0, energy(wf, op, kernel), 0.0
    history = [(0.0, e_prev)]
    residual = np.inf
    steps = 0
    while tau < config.max_time:
        tau, y, _ = rk.step(tau, y)
        steps += 1
        c, phi = eom.unpack(y)
        phi = orthonormalize(phi, blocks)
        c = c / np.linalg.norm(c)
        y = eom.pack(c, phi)
        rk.reset()
        if steps % config.check_interval == 0:
            e = energy(WaveFunction(wf.space, c, phi), op, kernel)
            residual = abs(e - e_prev) / (tau - tau_prev)
            history.append((tau, e))
            log.debug("tau=%.4f E=%.12f dE/dtau=%.3e", tau, e, residual)
            e_prev, tau_prev = e, tau
            if residual < config.tol:
                c, phi = eom.unpack(y)
                return RelaxationResult(e, WaveFunction(wf.space, c.copy(), phi.copy()), steps, residual, tau, history)
    raise NoConvergence(f"imaginary-time relaxation did not converge by tau={tau:.1f} (residual {residual:.3g})")


# -- real time -------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled observables; ``columns`` maps a name to a list of values per sample."""

    times: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    final: WaveFunction | None = None
    stats: dict = field(default_factory=dict)

    def append(self, t: float, values: dict):
        self.times.append(t)
        for k, v in values.items():
            self.columns.setdefault(k, []).append(v)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)


def dipole_matrix(phi: np.ndarray, dvec: np.ndarray) -> np.ndarray:
    return phi.conj().T @ (dvec[:, None] * phi)


def standard_observables(system: AtomSystem, pulse, with_energy=False):
    """Observer returning A, F, <D> and norm^2 (and optionally the field-free energy)."""
    from .grid import dipole_acceleration_vector

    dvec = dipole_acceleration_vector(system.grid, system.Z)
    op = system.operator()
    kernel = interaction_kernel(system.grid) if with_energy else None

    def observe(t, wf):
        cmat = wf.space.to_matrix(wf.c)
        dens = density_matrices(cmat, wf.space)
        out = {
            "A": vector_potential(pulse, t),
            "F": electric_field(pulse, t),
            "D": float(np.sum(dipole_matrix(wf.phi, dvec) * dens.rho1).real),
            "norm2": wf.norm2,
        }
        if with_energy:
            out["energy"] = energy(wf, op, kernel)
            out["ortho"] = orthonormality_error(wf.phi)
        return out

    return observe


def propagate_real(psi0: WaveFunction, system: AtomSystem, pulse: LaserPulse | None = None,
                   gauge: Gauge = Gauge.LENGTH, cap: CapSpec | None = None,
                   config: PropagationConfig = PropagationConfig(), reg: Regularization = Regularization(),
                   observers=None, with_energy=False, checkpoint=None) -> Trajectory:
    """Real-time propagation from ``psi0`` over [0, t_end], sampling every ``sample_dt``.

    ``observers`` is a list of callables ``f(t, wf) -> dict``; the standard set
    (A, F, D, norm2) is always recorded first.  ``checkpoint`` is an optional
    ``(path, interval)`` pair.  The amplitudes are propagated in a frame that
    rotates with the initial field-free energy, so the state carries an extra
    global phase ``exp(i E0 t)`` that no observable depends on.
    """
    wf = psi0.copy()
    op = system.operator(cap)
    kernel = interaction_kernel(system.grid)
    e0 = energy(wf, system.operator(), kernel)
    eom = EomSystem(wf.space, op, kernel, pulse=pulse, gauge=gauge, regularization=reg, imaginary=False,
                    energy_shift=e0)
    blocks = wf.space.scheme.blocks()
    obs = [standard_observables(system, pulse, with_energy)] + list(observers or [])
    traj = Trajectory()
    y = eom.pack(wf.c, wf.phi)
    rk = DormandPrince(eom, config.rtol, config.atol, config.dt)
    n_samples = int(round(config.t_end / config.sample_dt))
    t, steps = 0.0, 0
    next_ckpt = checkpoint[1] if checkpoint else None

    def record(t):
        c, phi = eom.unpack(y)
        state = WaveFunction(wf.space, c, phi)
        vals = {}
        for f in obs:
            vals.update(f(t, state))
        traj.append(t, vals)
        return state

    record(0.0)
    for k in range(1, n_samples + 1):
        t_target = k * config.sample_dt
        while t < t_target:
            t, y, _ = rk.step(t, y, t_limit=t_target)
            steps += 1
            if steps % config.renorm_interval == 0:
                c, phi = eom.unpack(y)
                y = eom.pack(c, orthonormalize(phi, blocks))
                rk.reset()
        t = t_target
        state = record(t)
        if next_ckpt is not None and t >= next_ckpt - 1e-12:
            write_checkpoint(checkpoint[0], state, t, system)
            next_ckpt += checkpoint[1]
    c, phi = eom.unpack(y)
    traj.final = WaveFunction(wf.space, c.copy(), phi.copy())
    traj.stats = {"steps": rk.n_accepted, "rejected": rk.n_rejected, "evaluations": eom.n_evals}
    return traj


# -- checkpoints -----------------------------------------------------------------

def _fmt(z: complex) -> str:
    return f"{z.real:.16e} {z.imag:.16e}"


def write_checkpoint(path, wf: WaveFunction, t: float, system: AtomSystem) -> None:
    """Text checkpoint: header lines, then CI coefficients and orbital samples."""
    s = wf.space.scheme
    g = system.grid
    n, M = wf.phi.shape
    lines = [
        "# tdras checkpoint v1",
        f"scheme = {s.method} {s.m0} {s.m1} {s.m2}",
        f"electrons = {wf.space.n_electrons}",
        f"Z = {system.Z!r}",
        f"grid = {g.x_min!r} {g.x_max!r} {g.n_points}",
        f"time = {t!r}",
        f"dim = {wf.space.dim}",
        f"orbitals = {M}",
        "[ci]",
    ]
    lines += [_fmt(z) for z in wf.c]
    lines.append("[orbitals]")
    lines += [" ".join(_fmt(z) for z in row) for row in wf.phi]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path):
    """Inverse of :func:`write_checkpoint`; returns (wf, t, system)."""
    from .grid import build_grid

    with open(path) as fh:
        text = fh.read().splitlines()
    head = {}
    k = 1
    while text[k] != "[ci]":
        key, val = (p.strip() for p in text[k].split("=", 1))
        head[key] = val
        k += 1
    method, m0, m1, m2 = head["scheme"].split()
    scheme = RasScheme(method, int(m0), int(m1), int(m2))
    ne = int(head["electrons"])
    x0, x1, n = head["grid"].split()
    grid = build_grid(float(x0), float(x1), int(n))
    system = AtomSystem(float(head["Z"]), ne, grid)
    dim, M = int(head["dim"]), int(head["orbitals"])
    vals = np.array([list(map(float, line.split())) for line in text[k + 1 : k + 1 + dim]])
    c = vals[:, 0] + 1j * vals[:, 1]
    rows = np.array([list(map(float, line.split())) for line in text[k + 2 + dim : k + 2 + dim + grid.n_points]])
    phi = rows[:, 0::2] + 1j * rows[:, 1::2]
    space = FockSpace(scheme, ne)
    if space.dim != dim or phi.shape != (grid.n_points, M):
        raise ValueError("checkpoint dimensions do not match its header")
    return WaveFunction(space, c, phi), float(head["time"]), system
