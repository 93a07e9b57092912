import numpy as np
import pytest

from tdras.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PROPAGATE,
    EXIT_RELAX,
    OUTPUT_ENV,
    ConfigError,
    main,
    parse_config,
)

TINY = """
# two-electron smoke test
[method]
name = {method}
partition = {partition}

[system]
Z = 2
electrons = 2

[grid]
x_min = -10
x_max = 10
points = 32

[pulse]
f0 = 0.05
omega = 1.0
cycles = 1

[propagate]
sample_dt = 0.5
{extra}
"""


def _write(tmp_path, name="tiny", method="S", partition="0 1 2", extra=""):
    path = tmp_path / f"{name}.cfg"
    path.write_text(TINY.format(method=method, partition=partition, extra=extra))
    return path


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(root))
    return root


def test_defaults_and_resolution():
    cfg = parse_config("[method]\nname = tdhf\n[system]\nZ = 4\nelectrons = 4\n")
    assert cfg.scheme.label() == "TDHF(0,2,0)"
    assert cfg.n_points == 256 and cfg.box == (-25.0, 25.0)
    assert cfg.pulse is None and cfg.propagate.t_end == 0.0
    assert "partition = 0 2 0" in cfg.resolved_lines()


def test_pulse_duration_sets_t_end():
    cfg = parse_config("[method]\nname=S\npartition=0 2 2\n[system]\nZ=4\nelectrons=4\n"
                       "[pulse]\nf0=0.0755\nomega=0.057\ncycles=3\n")
    assert cfg.propagate.t_end == pytest.approx(6 * np.pi / 0.057)


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("[method]\nname = S\n[system]\nZ = 4\nelectrons = 4\nbogus = 1\n", 6, "unknown key"),
        ("[method]\nname = S\n[systems]\n", 3, "unknown section"),
        ("name = S\n", 1, "outside"),
        ("[method]\nname = S\nname = D\n", 3, "duplicate"),
        ("[method]\nname S\n", 2, "key = value"),
        ("[method]\nname = S\npartition = 0 2 2\n[system]\nZ = four\nelectrons = 4\n", 5, "cannot read"),
        ("[method]\nname = S\npartition = 0 2 0\n[system]\nZ = 4\nelectrons = 4\n", 3, "P2 orbital"),
        ("[method]\nname = XYZ\n[system]\nZ = 4\nelectrons = 4\n", 2, "unknown method"),
        ("[method]\nname = S\npartition = 0 2 2\n[system]\nZ = 4\nelectrons = 3\n", 6, "even"),
        ("[method]\nname = S\npartition = 0 2 2\n[system]\nZ = 4\nelectrons = 4\n[grid]\nx_min = 5\nx_max = -5\n",
         None, None),
        ("[method]\nname = S\npartition = 0 2 2\n[system]\nZ = 4\nelectrons = 4\n[pulse]\ngauge = coulomb\n", 8,
         "gauge"),
        ("[method]\nname = exact2e\n[system]\nZ = 4\nelectrons = 4\n", 2, "two electrons"),
    ],
)
def test_config_errors_carry_lines(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    if line is not None:
        assert err.value.line == line
        assert f"line {line}" in str(err.value)
    if fragment:
        assert fragment in str(err.value)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="system.Z"):
        parse_config("[method]\nname = S\n[system]\nelectrons = 4\n")


def test_cost_subcommand(capsys):
    assert main(["cost", "--method", "HF", "--ne", "4", "--ndvr", "2048"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "67108864"
    assert main(["cost", "--method", "MHF", "--ne", "4", "--m", "4", "--ndvr", "2048"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "2147502080"
    assert main(["cost", "--method", "bad", "--ne", "4", "--ndvr", "10"]) == EXIT_CONFIG


def test_run_writes_outputs_and_is_deterministic(tmp_path, output_root):
    path = _write(tmp_path)
    assert main(["run", str(path)]) == EXIT_OK
    out = output_root / "tiny"
    first = (out / "trajectory.tsv").read_text()
    for name in ("ground_state.txt", "spectrum.tsv", "run_manifest.txt"):
        assert (out / name).exists()
    header = [l for l in first.splitlines() if not l.startswith("#")][0].split("\t")
    assert header == ["t", "A", "F", "D", "norm2", "P0", "P1", "P2"]
    rows = np.loadtxt(out / "trajectory.tsv", comments="#", skiprows=1 + sum(l.startswith("#") for l in first.splitlines()))
    assert rows.shape[1] == 8 and rows[0, 0] == 0.0
    np.testing.assert_allclose(rows[:, 5:].sum(axis=1), 1.0, atol=1e-8)  # no triples for two electrons
    manifest = (out / "run_manifest.txt").read_text()
    assert "status = ok" in manifest and "wall_time_s" in manifest and "numpy" in manifest
    assert "energy = " in (out / "ground_state.txt").read_text()
    spec = (out / "spectrum.tsv").read_text()
    assert spec.startswith("#")
    assert main(["run", str(path)]) == EXIT_OK
    assert (out / "trajectory.tsv").read_text() == first


def test_relax_subcommand(tmp_path, output_root):
    path = _write(tmp_path, name="gs", method="TDHF", partition="")
    assert main(["relax", str(path)]) == EXIT_OK
    out = output_root / "gs"
    assert (out / "ground_state.txt").exists()
    assert not (out / "trajectory.tsv").exists()


def test_exit_code_config(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[method]\nname = S\nwhat = 1\n")
    assert main(["run", str(path)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_exit_code_relax(tmp_path, output_root):
    path = _write(tmp_path, name="norelax", extra="[relax]\nmax_time = 0.05\ntol = 1e-14\n")
    assert main(["run", str(path)]) == EXIT_RELAX
    assert "failed" in (output_root / "norelax" / "run_manifest.txt").read_text()


def test_exit_code_propagate(tmp_path):
    path = _write(tmp_path, name="noprop", extra="rtol = 1e-30\natol = 1e-40\n")
    assert main(["run", str(path)]) == EXIT_PROPAGATE


def test_sweep_returns_worst_code(tmp_path, output_root):
    _write(tmp_path, name="a", method="TDHF", partition="", extra="t_end = 1.0")
    (tmp_path / "b.cfg").write_text("[method]\nname = S\nwhat = 1\n")
    assert main(["sweep", str(tmp_path / "*.cfg")]) == EXIT_CONFIG
    assert (output_root / "a" / "trajectory.tsv").exists()
    assert main(["sweep", str(tmp_path / "none*.cfg")]) == EXIT_CONFIG


@pytest.mark.parametrize("method", ["TDCIS", "SAE", "EXACT2E"])
def test_reference_methods_run(tmp_path, output_root, method):
    path = _write(tmp_path, name=method.lower(), method=method, partition="", extra="t_end = 2.0")
    assert main(["run", str(path)]) == EXIT_OK
    assert (output_root / method.lower() / "trajectory.tsv").exists()
