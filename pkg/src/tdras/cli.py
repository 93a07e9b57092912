"""Command-line driver: config parsing, run orchestration and output files.

Subcommands::

    tdras run <config>        relax, propagate (when a pulse is given), analyze
    tdras relax <config>      ground state only
    tdras cost --method M --ne N --m M --ndvr N
    tdras sweep <glob> [--jobs J]

Exit codes: 0 ok, 1 configuration error, 2 relaxation failure, 3 propagation failure.
The output root defaults to the current directory and can be overridden with
the ``TDRAS_OUTPUT_ROOT`` environment variable.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .analysis import (
    excitation_probabilities,
    hf_projection_workspace,
    hhg_spectrum,
    cost_estimate,
)
from .eom import Regularization
from .fock import FockSpace, InvalidScheme, RasScheme
from .grid import CapSpec, InvalidDomain, build_grid
from .hamiltonian import Gauge, LaserPulse
from .propagator import (
    AtomSystem,
    NoConvergence,
    PropagationConfig,
    PropagationError,
    propagate_real,
    relax_imaginary,
)
from .reference import NotConverged, ScfDivergence, exact_2e, hf_scf, sae_propagate, tdcis_propagate

log = logging.getLogger(__name__)

OUTPUT_ENV = "TDRAS_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RELAX, EXIT_PROPAGATE = 0, 1, 2, 3
RAS_METHODS = ("TDHF", "MCTDHF", "CASSCF", "S", "D", "SD", "SDT")
REFERENCE_METHODS = ("TDCIS", "SAE", "EXACT2E")


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# -- configuration ---------------------------------------------------------------

# section -> key -> (converter, default); None default means required
_SCHEMA = {
    "method": {
        "name": (str, None),
        "partition": (str, ""),
        "epsilon": (float, 1e-10),
        "virtuals": (int, 0),
    },
    "system": {"Z": (float, None), "electrons": (int, None)},
    "grid": {"x_min": (float, -25.0), "x_max": (float, 25.0), "points": (int, 256)},
    "pulse": {"f0": (float, 0.0), "omega": (float, 0.057), "cycles": (float, 3.0), "gauge": (str, "length")},
    "cap": {"onset": (float, 0.8), "strength": (float, 0.0), "order": (int, 2)},
    "relax": {
        "tol": (float, 1e-9),
        "max_time": (float, 2000.0),
        "rtol": (float, 1e-8),
        "atol": (float, 1e-10),
        "dt": (float, 0.01),
        "admixture": (float, 1e-3),
        "seed": (int, 0),
    },
    "propagate": {
        "t_end": (float, 0.0),
        "rtol": (float, 1e-8),
        "atol": (float, 1e-10),
        "dt": (float, 0.01),
        "sample_dt": (float, 0.5),
        "renorm_interval": (int, 10),
        "checkpoint_interval": (float, 0.0),
    },
    "output": {
        "directory": (str, ""),
        "window": (str, "hann"),
        "pad": (int, 4),
        "projections": (str, "yes"),
    },
}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"expected yes/no, got {text!r}")


@dataclass
class RunConfig:
    scheme: RasScheme | None
    method: str
    Z: float
    n_electrons: int
    box: tuple[float, float]
    n_points: int
    pulse: LaserPulse | None
    gauge: Gauge
    cap: CapSpec | None
    relax: PropagationConfig
    propagate: PropagationConfig
    epsilon: float
    virtuals: int
    checkpoint_interval: float
    output: str
    window: str
    pad: int
    projections: bool
    values: dict = field(default_factory=dict)  # resolved section -> key -> value
    source: str = ""

    @property
    def seed(self) -> int:
        return self.relax.seed

    def resolved_lines(self) -> list[str]:
        out = []
        for sec, keys in self.values.items():
            out.append(f"[{sec}]")
            out += [f"{k} = {v}" for k, v in keys.items()]
        return out


def _tokenize(text: str):
    """Yield (line_no, section, key, value); raises ConfigError on malformed lines."""
    section = None
    seen = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]", no)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        if section is None:
            raise ConfigError("key outside of any [section]", no)
        key, value = (p.strip() for p in line.split("=", 1))
        schema_keys = {k.lower(): k for k in _SCHEMA[section]}
        if key.lower() not in schema_keys:
            raise ConfigError(f"unknown key {key!r} in [{section}]", no)
        key = schema_keys[key.lower()]
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", no)
        seen.add((section, key))
        yield no, section, key, value


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate a ``key = value`` config with ``[section]`` headers."""
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in _SCHEMA.items()}
    lines = {}
    for no, sec, key, raw in _tokenize(text):
        conv = _SCHEMA[sec][key][0]
        try:
            values[sec][key] = conv(raw)
        except ValueError:
            raise ConfigError(f"{sec}.{key}: cannot read {raw!r} as {conv.__name__}", no) from None
        lines[(sec, key)] = no
    for sec, keys in values.items():
        for key, val in keys.items():
            if val is None:
                raise ConfigError(f"missing required key {sec}.{key}")

    def fail(msg, *where):
        raise ConfigError(msg, next((lines[w] for w in where if w in lines), None))

    method = values["method"]["name"].strip().upper()
    if method not in RAS_METHODS + REFERENCE_METHODS:
        fail(f"unknown method {method!r}; choose from {', '.join(RAS_METHODS + REFERENCE_METHODS)}",
             ("method", "name"))
    Z, ne = values["system"]["Z"], values["system"]["electrons"]
    if ne <= 0 or ne % 2:
        fail("system.electrons must be a positive even number (closed shell)", ("system", "electrons"))
    if Z <= 0:
        fail("system.Z must be positive", ("system", "Z"))
    scheme = None
    if method in RAS_METHODS:
        part = values["method"]["partition"].replace(",", " ").replace("(", " ").replace(")", " ").split()
        try:
            m = [int(p) for p in part]
        except ValueError:
            fail(f"method.partition must be integers, got {values['method']['partition']!r}",
                 ("method", "partition"))
        if method == "TDHF" and not m:
            m = [0, ne // 2, 0]
        if len(m) != 3:
            fail("method.partition needs three integers m0 m1 m2", ("method", "partition"), ("method", "name"))
        try:
            scheme = RasScheme(method, *m)
            FockSpace(scheme, ne)
        except InvalidScheme as exc:
            fail(str(exc), ("method", "partition"), ("method", "name"))
        if m[0] + m[1] != ne // 2 and method not in ("MCTDHF", "CASSCF"):
            fail("m0 + m1 must equal N_e/2 for this method", ("method", "partition"))
        values["method"]["partition"] = " ".join(map(str, m))
    elif method == "EXACT2E" and ne != 2:
        fail("the exact solver handles two electrons only", ("method", "name"), ("system", "electrons"))
    g = values["grid"]
    try:
        build_grid(g["x_min"], g["x_max"], g["points"])
    except (InvalidDomain, ValueError) as exc:
        fail(str(exc), ("grid", "points"), ("grid", "x_min"), ("grid", "x_max"))
    if method == "EXACT2E" and g["points"] > 512:
        fail("the exact solver is limited to grid.points <= 512", ("grid", "points"))
    p = values["pulse"]
    try:
        gauge = Gauge(p["gauge"].strip().lower())
    except ValueError:
        fail(f"pulse.gauge must be 'length' or 'velocity', got {p['gauge']!r}", ("pulse", "gauge"))
    pulse = None
    if p["f0"] < 0:
        fail("pulse.f0 must be nonnegative", ("pulse", "f0"))
    if p["f0"] > 0:
        if p["omega"] <= 0 or p["cycles"] <= 0:
            fail("pulse.omega and pulse.cycles must be positive", ("pulse", "omega"), ("pulse", "cycles"))
        pulse = LaserPulse.from_cycles(p["f0"], p["omega"], p["cycles"])
    c = values["cap"]
    cap = None
    try:
        if c["strength"] > 0:
            cap = CapSpec(c["onset"], c["strength"], c["order"])
        else:
            CapSpec(c["onset"], 0.0, c["order"])
    except ValueError as exc:
        fail(str(exc), ("cap", "onset"), ("cap", "order"), ("cap", "strength"))
    r, q = values["relax"], values["propagate"]
    t_end = q["t_end"] if q["t_end"] > 0 else (pulse.duration if pulse else 0.0)
    try:
        relax = PropagationConfig(dt=r["dt"], rtol=r["rtol"], atol=r["atol"], tol=r["tol"],
                                  max_time=r["max_time"], admixture=r["admixture"], seed=r["seed"])
        prop = PropagationConfig(dt=q["dt"], rtol=q["rtol"], atol=q["atol"], t_end=t_end,
                                 sample_dt=q["sample_dt"], renorm_interval=q["renorm_interval"])
        Regularization(values["method"]["epsilon"])
    except ValueError as exc:
        fail(str(exc))
    if q["sample_dt"] <= 0:
        fail("propagate.sample_dt must be positive", ("propagate", "sample_dt"))
    o = values["output"]
    if o["window"] not in ("hann", "rect"):
        fail("output.window must be 'hann' or 'rect'", ("output", "window"))
    if o["pad"] < 1:
        fail("output.pad must be >= 1", ("output", "pad"))
    try:
        projections = _bool(o["projections"])
    except ValueError as exc:
        fail(f"output.projections: {exc}", ("output", "projections"))
    values["propagate"]["t_end"] = t_end
    values["method"]["name"] = method
    return RunConfig(
        scheme=scheme, method=method, Z=Z, n_electrons=ne, box=(g["x_min"], g["x_max"]), n_points=g["points"],
        pulse=pulse, gauge=gauge, cap=cap, relax=relax, propagate=prop, epsilon=values["method"]["epsilon"],
        virtuals=values["method"]["virtuals"], checkpoint_interval=q["checkpoint_interval"],
        output=o["directory"], window=o["window"], pad=o["pad"], projections=projections,
        values=values, source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


# -- outputs ---------------------------------------------------------------------

def output_dir(cfg: RunConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ENV, "."))
    name = cfg.output or (Path(cfg.source).stem if cfg.source else "run")
    return root / name


def _header(cfg: RunConfig) -> str:
    return "".join(f"# {line}\n" for line in [f"tdras {__version__}"] + cfg.resolved_lines())


def _g(x: float) -> str:
    return f"{x:.12g}"


def write_ground_state(path: Path, cfg: RunConfig, energy: float, dim: int, iterations: int, residual: float):
    with open(path, "w") as fh:
        fh.write(_header(cfg))
        fh.write(f"energy = {energy:.12f}\n")
        fh.write(f"dim_V = {dim}\n")
        fh.write(f"iterations = {iterations}\n")
        fh.write(f"residual = {residual:.3e}\n")


TRAJECTORY_COLUMNS = ("A", "F", "D", "norm2", "P0", "P1", "P2")


def write_trajectory(path: Path, cfg: RunConfig, traj):
    with open(path, "w") as fh:
        fh.write(_header(cfg))
        fh.write("# P0, P1, P2 are divided by norm2\n")
        fh.write("t\t" + "\t".join(TRAJECTORY_COLUMNS) + "\n")
        cols = [traj.array(c) for c in TRAJECTORY_COLUMNS]
        for k, t in enumerate(traj.times):
            fh.write("\t".join([_g(t)] + [_g(float(c[k])) for c in cols]) + "\n")


def write_spectrum(path: Path, cfg: RunConfig, spec):
    with open(path, "w") as fh:
        fh.write(_header(cfg))
        fh.write(f"# window = {spec.window}, zero padding = {cfg.pad}x, bin = {spec.d_omega:.6e} a.u.\n")
        fh.write("# S = |integral window(t) <D>(t) exp(i Omega t) dt|^2\n")
        fh.write("Omega/omega\tS\n")
        for f, s in zip(spec.frequencies, spec.intensities):
            fh.write(f"{_g(f)}\t{_g(s)}\n")


def write_manifest(path: Path, cfg: RunConfig, wall: float, status: str, extra: dict):
    with open(path, "w") as fh:
        fh.write(f"# tdras run manifest\nsource = {cfg.source}\nstatus = {status}\n")
        fh.write(f"wall_time_s = {wall:.3f}\n")
        fh.write(f"tdras = {__version__}\nnumpy = {np.__version__}\nscipy = {scipy.__version__}\n")
        fh.write(f"python = {platform.python_version()}\nkernels = {kernels.BACKEND}\n")
        for k, v in extra.items():
            fh.write(f"{k} = {v}\n")
        fh.write("\n".join(cfg.resolved_lines()) + "\n")


# -- orchestration ---------------------------------------------------------------

class RunFailure(RuntimeError):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _projection_observer(hf, enabled: bool):
    def observe(t, wf):
        if not enabled or hf is None:
            return {"P0": np.nan, "P1": np.nan, "P2": np.nan}
        ws = hf_projection_workspace(wf, hf)
        n2 = ws.norm2
        p = excitation_probabilities(ws)
        return {"P0": p[0] / n2, "P1": p[1] / n2, "P2": p[2] / n2}

    return observe


def _normalize_probabilities(traj):
    n2 = traj.array("norm2")
    for key in ("P0", "P1", "P2"):
        traj.columns[key] = list(traj.array(key) / n2)


def execute(cfg: RunConfig, relax_only: bool = False) -> tuple[int, Path]:
    """Run one configuration and write its output files; returns (exit code, directory)."""
    start = time.perf_counter()
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    extra = {}
    grid = build_grid(cfg.box[0], cfg.box[1], cfg.n_points)
    system = AtomSystem(cfg.Z, cfg.n_electrons, grid)
    reg = Regularization(cfg.epsilon)
    try:
        try:
            hf = hf_scf(grid, cfg.Z, cfg.n_electrons) if (cfg.projections or cfg.scheme is None) else None
            if cfg.scheme is not None:
                res = relax_imaginary(system, cfg.scheme, cfg.relax, reg)
                e0, dim, iters, resid, psi = res.energy, res.psi.space.dim, res.iterations, res.residual, res.psi
            elif cfg.method == "EXACT2E":
                e0, psi2, _ = exact_2e(grid, cfg.Z)
                dim, iters, resid, psi = grid.n_points**2, 0, 0.0, None
            else:
                e0, dim, iters, resid, psi = hf.energy, 1, 0, hf.residual, None
        except (NoConvergence, ScfDivergence, NotConverged, np.linalg.LinAlgError) as exc:
            raise RunFailure(EXIT_RELAX, f"relaxation failed: {exc}") from exc
        write_ground_state(out / "ground_state.txt", cfg, e0, dim, iters, resid)
        extra.update(energy=f"{e0:.12f}", dim_V=dim)
        if not relax_only and cfg.propagate.t_end > 0:
            ckpt = (str(out / "checkpoint.txt"), cfg.checkpoint_interval) if cfg.checkpoint_interval > 0 else None
            try:
                if cfg.scheme is not None:
                    traj = propagate_real(psi, system, cfg.pulse, cfg.gauge, cfg.cap, cfg.propagate, reg,
                                          observers=[_projection_observer(hf, cfg.projections)], checkpoint=ckpt)
                elif cfg.method == "TDCIS":
                    traj = tdcis_propagate(hf, cfg.pulse, cfg.gauge, cfg.cap, cfg.propagate,
                                           n_virtual=cfg.virtuals or None)
                    _normalize_probabilities(traj)
                elif cfg.method == "SAE":
                    traj = sae_propagate(hf, cfg.pulse, cfg.gauge, cfg.cap, cfg.propagate)
                    _normalize_probabilities(traj)
                else:
                    _, _, traj = exact_2e(grid, cfg.Z, cfg.pulse, cfg.gauge, cfg.cap, cfg.propagate)
                    for key in ("P0", "P1", "P2"):
                        traj.columns[key] = [np.nan] * len(traj.times)
            except PropagationError as exc:
                raise RunFailure(EXIT_PROPAGATE, f"propagation failed: {exc}") from exc
            write_trajectory(out / "trajectory.tsv", cfg, traj)
            omega = cfg.pulse.omega if cfg.pulse else 1.0
            spec = hhg_spectrum(traj.array("D"), cfg.propagate.sample_dt, omega=omega, window=cfg.window,
                                pad=cfg.pad)
            write_spectrum(out / "spectrum.tsv", cfg, spec)
            extra.update({f"final_{k}": _g(float(traj.array(k)[-1])) for k in ("norm2", "P0", "P1", "P2")})
            extra.update({f"integrator_{k}": v for k, v in traj.stats.items()})
        code, status = EXIT_OK, "ok"
    except RunFailure as exc:
        log.error("%s: %s", cfg.source, exc)
        code, status = exc.code, f"failed ({exc})"
    write_manifest(out / "run_manifest.txt", cfg, time.perf_counter() - start, status, extra)
    return code, out


# -- entry point -----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdras", description="TD-RASSCF simulator for 1D model atoms")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="relax, propagate and analyze one configuration")
    p.add_argument("config")
    p = sub.add_parser("relax", help="ground state only")
    p.add_argument("config")
    p = sub.add_parser("cost", help="per-step operation count of the scaling model")
    p.add_argument("--method", required=True)
    p.add_argument("--ne", type=int, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ndvr", type=int, required=True)
    p = sub.add_parser("sweep", help="run every configuration matching a glob")
    p.add_argument("pattern")
    p.add_argument("--jobs", type=int, default=1)
    return ap


def _run_one(path: str, relax_only: bool = False) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"{path}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, out = execute(cfg, relax_only)
    print(f"{path}: {'ok' if code == 0 else 'failed'} -> {out}")
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("run", "relax"):
        return _run_one(args.config, relax_only=args.command == "relax")
    if args.command == "cost":
        try:
            print(cost_estimate(args.method, args.ne, args.m, args.ndvr))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no configuration matches {args.pattern!r}", file=sys.stderr)
        return EXIT_CONFIG
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        codes = list(pool.map(_run_one, paths))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
