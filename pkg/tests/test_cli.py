import json
import os

import pytest

from coldstart import cli
from coldstart.cli import main


def _write(path, text):
    path.write_text(text)
    return str(path)


SMALL_HT = """
model.N = 16
model.D = 16
experiment.budget = 200
experiment.replicas = 4
kernel.beta = 0.2
"""


def test_simulate_writes_manifest(tmp_path):
    cfg = _write(tmp_path / "c.toml", "[model]\nN = 10\nD = 3\n")
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 5 and man["config"]["model.N"] == 10
    assert set(man["outputs"]) == {"dataset.csv", "dataset.json"}


def test_missing_required_key_names_path(tmp_path, capsys):
    assert main(["audit", "--out", str(tmp_path)]) == 2
    assert "audit.trace" in capsys.readouterr().err


def test_unknown_and_mistyped_keys(tmp_path, capsys):
    cfg = _write(tmp_path / "c.toml", "model.Q = 3\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "model.Q" in capsys.readouterr().err
    cfg = _write(tmp_path / "d.toml", 'model.N = "many"\n')
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "model.N" in capsys.readouterr().err


def test_bad_seed_and_threads(tmp_path):
    assert main(["simulate", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_numeric_fault_exit_code(tmp_path, monkeypatch, capsys):
    def boom(run):
        raise FloatingPointError("overflow in test")

    monkeypatch.setitem(cli.HANDLERS, "simulate", boom)
    assert main(["simulate", "--out", str(tmp_path)]) == 3
    assert "numeric fault" in capsys.readouterr().err


def _read_all(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_hitting_time_reproducible_and_thread_free(tmp_path):
    cfg = _write(tmp_path / "ht.toml", SMALL_HT)
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        d = str(tmp_path / name)
        assert main(["hitting-time", "--config", cfg, "--seed", "7", "--threads", threads, "--out", d]) == 0
        outs.append(_read_all(d))
    assert outs[0] == outs[1]
    assert outs[0]["hitting_times.csv"] == outs[2]["hitting_times.csv"]
    assert "survival.svg" in outs[0]


def test_manifest_rerun_reproduces(tmp_path):
    cfg = _write(tmp_path / "ht.toml", SMALL_HT)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["hitting-time", "--config", cfg, "--seed", "11", "--out", a]) == 0
    assert main(["hitting-time", "--config", os.path.join(a, "manifest.json"), "--out", b]) == 0
    assert _read_all(a) == _read_all(b)


def test_replicas_flag(tmp_path):
    cfg = _write(tmp_path / "ht.toml", SMALL_HT)
    assert main(["hitting-time", "--config", cfg, "--replicas", "2", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["experiment.replicas"] == 2
    assert main(["audit", "--replicas", "2", "--out", str(tmp_path)]) == 2


def test_free_entropy_averaged(tmp_path):
    cfg = _write(tmp_path / "f.toml", "grid.n = 199\n")
    assert main(["free-entropy", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "profile.csv").exists()
    svg = (tmp_path / "profile.svg").read_text()
    assert svg.count('<polyline class="curve"') == 3
    crit = json.loads((tmp_path / "critical_points.json").read_text())
    assert len(crit["maxima"]) == 2 and len(crit["minima"]) == 1


def test_free_entropy_bad_kind(tmp_path):
    cfg = _write(tmp_path / "f.toml", 'model.kind = "spherical"\n')
    assert main(["free-entropy", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_plot_empty_csv(tmp_path):
    csv = _write(tmp_path / "empty.csv", "r,F_N\n")
    assert main(["plot", csv, "--kind", "profile", "--out", str(tmp_path / "o")]) == 0
    svg = (tmp_path / "o" / "empty.svg").read_text()
    assert "<svg" in svg and "polyline" not in svg


def test_plot_missing_column_is_config_error(tmp_path):
    csv = _write(tmp_path / "bad.csv", "x,y\n1,2\n")
    assert main(["plot", csv, "--kind", "profile", "--out", str(tmp_path)]) == 2
    assert main(["plot", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


def test_plot_is_byte_stable(tmp_path):
    csv = _write(tmp_path / "p.csv", "k,empirical,bound\n0,0,0\n10,0.1,0.5\n100,0.2,3.0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["plot", csv, "--kind", "bound-overlay", "--out", str(a)]) == 0
    assert main(["plot", csv, "--kind", "bound-overlay", "--out", str(b)]) == 0
    assert (a / "p.svg").read_bytes() == (b / "p.svg").read_bytes()


def test_audit_on_written_chain(tmp_path):
    cfg = _write(tmp_path / "rc.toml", "model.N = 8\nmodel.D = 4\nkernel.beta = 0.5\nchain.iterations = 200\n")
    assert main(["run-chain", "--config", cfg, "--out", str(tmp_path / "rc")]) == 0
    trace = tmp_path / "rc" / "chain_000.csv"
    acfg = _write(tmp_path / "a.toml", f'audit.trace = "{trace}"\n')
    assert main(["audit", "--config", acfg, "--out", str(tmp_path / "au")]) == 0
    res = json.loads((tmp_path / "au" / "audit.json").read_text())
    assert res["unattributed"] == 0


@pytest.mark.parametrize("cmd,body", [
    ("small-ball", "smallball.z = [1.0, 2.0]\nsmallball.N = [16]\nsmallball.n_mc = 2000\n"),
    ("bands", "tensor.n = 6\nbands.n_mc = 5000\n"),
    ("tensor-contract", "tensor.n = 6\ncontraction.lambdas = [0.0, 4.0]\ncontraction.seeds = 2\n"
                        "contraction.n_mc = 2000\n"),
    ("bottleneck", "tensor.n = 6\nbottleneck.k = [0, 10]\nbottleneck.n_mc = 2000\nexperiment.replicas = 4\n"),
])
def test_other_subcommands_run(tmp_path, cmd, body):
    cfg = _write(tmp_path / "c.toml", body)
    assert main([cmd, "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    for name in man["outputs"]:
        assert (tmp_path / "o" / name).exists()
