import os
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sceflrw.cli import main, parse_config_text
from sceflrw.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
MINIMAL = (ROOT / "examples" / "minimal.cfg").read_text()


def _config(tmp_path, name="run.cfg", **overrides):
    """Minimal example with keys replaced; output goes under ``tmp_path``."""
    overrides.setdefault("output.dir", str(tmp_path / "out"))
    lines = []
    for line in MINIMAL.splitlines():
        key = line.split("=", 1)[0].strip()
        if key in overrides:
            continue
        lines.append(line)
    lines += [f"{k} = {v}" for k, v in overrides.items() if v is not None]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_missing_config_exits_1(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 1
    assert "not found" in capsys.readouterr().err


def test_unknown_subcommand_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_bad_thread_count_exits_1(tmp_path):
    assert main(["--threads", "0", "run", _config(tmp_path)]) == 1


@pytest.mark.slow
def test_minimal_run(tmp_path):
    cfg = _config(tmp_path, **{"grid.n": 129})
    assert main(["run", cfg]) == 0
    header, data = _read_csv(tmp_path / "out" / "trajectory.csv")
    assert header[:3] == ["tau", "a", "ap"]
    assert data[0, 0] == 0.0 and data[0, 1] == 1.0
    assert data.shape == (129, len(header))
    report = (tmp_path / "out" / "report.txt").read_text()
    assert "solver.converged = True" in report
    assert "= fail" not in report
    assert (tmp_path / "out" / "components.csv").exists()


@pytest.mark.slow
def test_long_interval_is_shrunk(tmp_path):
    cfg = _config(tmp_path, **{"grid.tau1": 0.5, "grid.n": 129})
    assert main(["run", cfg]) == 0
    report = (tmp_path / "out" / "report.txt").read_text()
    shrinks = int(re.search(r"solver\.shrinks = (\d+)", report).group(1))
    assert shrinks >= 1
    tau1 = float(re.search(r"solver\.tau1 = (\S+)", report).group(1))
    assert tau1 < 0.5


@pytest.mark.slow
def test_csv_is_reproducible_and_thread_independent(tmp_path, monkeypatch):
    outs = []
    for i, (argv, env) in enumerate([([], None), (["--threads", "4"], None), ([], "3")]):
        if env is None:
            monkeypatch.delenv("SCE_THREADS", raising=False)
        else:
            monkeypatch.setenv("SCE_THREADS", env)
        d = tmp_path / f"o{i}"
        cfg = _config(tmp_path, name=f"c{i}.cfg", **{"grid.n": 65, "output.dir": str(d)})
        assert main(argv + ["run", cfg]) == 0
        outs.append(((d / "trajectory.csv").read_bytes(), (d / "components.csv").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_validate_vacuum_state(tmp_path, capsys):
    assert main(["validate-state", _config(tmp_path, **{"state.family": "vacuum"})]) == 0
    assert "regularity.pass = True" in capsys.readouterr().out


def test_validate_rejects_subminimal_energy(tmp_path):
    k = np.geomspace(1e-4, 1e6, 50)
    Phi = 0.5 / np.sqrt(k * k + 1)
    np.savetxt(tmp_path / "phi.txt", np.column_stack([k, Phi]))
    np.savetxt(tmp_path / "E.txt", np.column_stack([k, 1 / (8 * Phi)]))
    cfg = _config(tmp_path, **{"state.family": "tabulated",
                               "state.phi_table": str(tmp_path / "phi.txt"),
                               "state.E_table": str(tmp_path / "E.txt")})
    assert main(["validate-state", cfg]) == 2


def test_validate_rejects_inverted_bump(tmp_path, capsys):
    cfg = _config(tmp_path, **{"state.bump.C": 0.1, "state.bump.p1": 20, "state.bump.p2": 10})
    assert main(["validate-state", cfg]) == 1
    assert "p1 < p2" in capsys.readouterr().err


def _kernel_lines(out):
    C = float(re.search(r"C_inf\(1\) = (\S+)", out).group(1))
    res = [float(x) for x in re.findall(r"relative_residual = (\S+)", out)]
    return C, res


def test_kernel_table_and_cache(tmp_path, capsys):
    d = str(tmp_path / "kc")
    assert main(["kernel-table", "--r", "1", "--n", "33", "--out", d]) == 0
    first = capsys.readouterr().out
    assert "cache = miss" in first
    C, res = _kernel_lines(first)
    assert C > 1 and len(res) == 3 and max(res) <= 1e-3
    files = os.listdir(d)
    blob = (Path(d) / files[0]).read_bytes()
    assert main(["kernel-table", "--r", "1", "--n", "33", "--out", d]) == 0
    second = capsys.readouterr().out
    assert "cache = hit" in second
    assert _kernel_lines(second)[0] == C
    assert (Path(d) / files[0]).read_bytes() == blob


def test_kernel_table_tolerance_tightens_residuals(tmp_path, capsys):
    d = str(tmp_path / "kc")
    main(["kernel-table", "--n", "17", "--tol", "1e-6", "--out", d])
    _, loose = _kernel_lines(capsys.readouterr().out)
    main(["kernel-table", "--n", "17", "--tol", "1e-7", "--out", d])
    _, tight = _kernel_lines(capsys.readouterr().out)
    # entries already at rounding level can move either way; the worst one must improve
    assert max(tight) < max(loose)


def test_kernel_table_rejects_bad_arguments(tmp_path):
    assert main(["kernel-table", "--n", "1", "--out", str(tmp_path)]) == 1


def test_demo_unbounded(capsys):
    assert main(["demo-unbounded", "--eps", "1e-2", "1e-3", "1e-4"]) == 0
    out = capsys.readouterr().out
    sups = [float(x) for x in re.findall(r"sup\|T\[f_eps\]\| = (\S+)", out)]
    assert len(sups) == 3 and sups[0] < sups[1] < sups[2]
    assert "fitted slope" in out


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sceflrw", "demo-unbounded", "--eps", "1e-2", "1e-3"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "fitted slope" in proc.stdout


def test_config_parsing_errors():
    base = "init.a0 = 1\ninit.a0p = 0\ninit.a0pp = 0\ninit.a0ppp = 0\nparams.m = 1\nparams.xi = 0\ngrid.tau1 = 1\n"
    assert parse_config_text(base)["grid.n"] == 257
    for extra in ("bogus.key = 1", "grid.n = many", "grid.n = 8", "state.s = 2",
                  "params.m = 2\nparams.m = 3", "no equals sign"):
        with pytest.raises(ConfigError):
            parse_config_text(base + extra + "\n")
    with pytest.raises(ConfigError):
        parse_config_text(base.replace("params.xi = 0\n", ""))
