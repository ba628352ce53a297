import json

import numpy as np
import pytest

from bayesim import cli


@pytest.fixture(autouse=True)
def serial_workers(monkeypatch):
    # keep in-process CLI tests off the process pool; the parallel-vs-serial
    # equality lives in the acceptance suite
    monkeypatch.setenv("BAYESIM_THREADS", "1")


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    header = None
    rows = []
    for ln in path.read_text().splitlines():
        if ln.startswith("#"):
            continue
        if header is None:
            header = ln.split(",")
        else:
            rows.append(dict(zip(header, ln.split(","))))
    return rows


def test_pipeline_end_to_end(tmp_path):
    out = tmp_path / "run"
    assert run("gen", "--task", "gesture_like", "--seed", 11, "--out", out) == 0
    assert (out / "train.csv").exists() and (out / "test.csv").exists()
    assert (out / "train.csv.manifest.json").exists()

    model = out / "model.json"
    assert run("train", "--data", out / "train.csv", "--dist", "gaussian",
               "--bins", 64, "--out", model) == 0
    assert run("compile", "--model", model, "--mode", "logarithmic",
               "--out", out / "log.img") == 0
    assert run("compile", "--model", model, "--mode", "stochastic",
               "--out", out / "lin.img") == 0

    assert run("sim", "--model", model, "--image", out / "log.img",
               "--data", out / "test.csv", "--out", out) == 0
    sim = read_rows(out / "sim.csv")
    assert len(sim) == 1 and sim[0]["mode"] == "logarithmic"
    assert float(sim[0]["mean_acc"]) > 0.5  # clearly above 4-class chance
    assert sim[0]["std_acc"] == "0.0"  # deterministic machine

    assert run("sim", "--model", model, "--image", out / "lin.img",
               "--data", out / "test.csv", "--budget", 32, "--trials", 3,
               "--seed", 5, "--out", out) == 0
    sim = read_rows(out / "sim.csv")
    assert sim[0]["mode"] == "stochastic" and sim[0]["trials"] == "3"
    assert float(sim[0]["mean_cycles"]) <= 32

    assert run("sweep", "--kind", "cycles", "--model", model,
               "--data", out / "test.csv", "--grid", "4,16", "--trials", 2,
               "--seed", 5, "--out", out) == 0
    rows = read_rows(out / "sweep_cycles.csv")
    assert len(rows) == 4  # grid size x strategy count
    assert {r["strategy"] for r in rows} == {"conventional", "power_conscious"}

    assert run("sweep", "--kind", "ber", "--model", model,
               "--data", out / "test.csv", "--grid", "0,0.01", "--budget", 16,
               "--trials", 2, "--seed", 5, "--out", out) == 0
    rows = read_rows(out / "sweep_ber.csv")
    assert len(rows) == 4
    assert {r["machine"] for r in rows} == {"logarithmic", "stochastic"}

    assert run("energy", "--model", model, "--data", out / "test.csv",
               "--grid", "4,16", "--trials", 2, "--seed", 5, "--out", out) == 0
    rows = read_rows(out / "energy.csv")
    assert len(rows) == 5  # 2 strategies x 2 budgets + 1 log point
    assert "# crossover_budget=" in (out / "energy.csv").read_text()

    assert run("report", "--run", out, "--out", out) == 0
    statuses = {r["file"]: r["status"] for r in read_rows(out / "report.csv")}
    assert set(statuses.values()) == {"ok"}
    assert "sweep_cycles.csv" in statuses


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen", "--task", "sleep_like", "--seed", 3, "--out", a) == 0
    assert run("gen", "--task", "sleep_like", "--seed", 3, "--out", b) == 0
    assert (a / "train.csv").read_bytes() == (b / "train.csv").read_bytes()
    assert (a / "test.csv").read_bytes() == (b / "test.csv").read_bytes()


def test_gen_spec_file_round(tmp_path):
    out = tmp_path / "r"
    assert run("gen", "--task", "gesture_like", "--seed", 9, "--out", out) == 0
    out2 = tmp_path / "r2"
    assert run("gen", "--spec", out / "spec.json", "--out", out2) == 0
    # same data; only the embedded manifest hash reflects the different flags
    strip = lambda p: p.read_text().splitlines()[1:]
    assert strip(out / "train.csv") == strip(out2 / "train.csv")
    assert strip(out / "test.csv") == strip(out2 / "test.csv")


def test_exit_codes(tmp_path, capsys):
    assert run("train", "--data", tmp_path / "nope.csv", "--out", tmp_path / "m.json") == 2
    assert "error:" in capsys.readouterr().err

    bad = tmp_path / "bad.csv"
    bad.write_text("not a dataset\n")
    assert run("train", "--data", bad, "--out", tmp_path / "m.json") == 2
    assert ":1:" in capsys.readouterr().err  # line-anchored

    out = tmp_path / "r"
    assert run("gen", "--task", "gesture_like", "--seed", 1, "--out", out) == 0
    model = out / "model.json"
    assert run("train", "--data", out / "train.csv", "--out", model) == 0
    assert run("compile", "--model", model, "--mode", "logarithmic",
               "--width", 16, "--out", out / "x.img") == 2
    assert "8-bit" in capsys.readouterr().err


def test_exit_one_on_runtime_failure(tmp_path, capsys):
    blocker = tmp_path / "blocked"
    blocker.write_text("")
    code = run("gen", "--task", "gesture_like", "--seed", 1,
               "--out", blocker / "sub")
    assert code == 1
    assert "runtime failure" in capsys.readouterr().err


def test_missing_required_flag(tmp_path, capsys):
    assert run("compile", "--out", tmp_path / "x.img") == 2
    assert "--model" in capsys.readouterr().err


def test_report_flags_tampering(tmp_path):
    out = tmp_path / "r"
    assert run("gen", "--task", "gesture_like", "--seed", 2, "--out", out) == 0
    assert run("report", "--run", out, "--out", out) == 0
    with open(out / "train.csv", "a") as fh:
        fh.write("junk\n")
    assert run("report", "--run", out, "--out", out) == 2
    statuses = {r["file"]: r["status"] for r in read_rows(out / "report.csv")}
    assert statuses["train.csv"] == "content-mismatch"
    (out / "test.csv.manifest.json").unlink()
    assert run("report", "--run", out, "--out", out) == 2
    statuses = {r["file"]: r["status"] for r in read_rows(out / "report.csv")}
    assert statuses["test.csv"] == "missing-manifest"


def test_single_class_machine_is_always_right(tmp_path):
    rng = np.random.default_rng(0)
    out = tmp_path / "one"
    out.mkdir()
    data = out / "train.csv"
    lines = ["# bayesim-dataset version=1 kind=features fs=0.0 dt=0.0 columns=2"]
    for _ in range(30):
        lines.append("0," + ",".join(repr(float(v)) for v in rng.normal(size=2)))
    data.write_text("\n".join(lines) + "\n")
    model = out / "m.json"
    assert run("train", "--data", data, "--bins", 4, "--classes", 1,
               "--out", model) == 0
    assert run("sweep", "--kind", "cycles", "--model", model, "--data", data,
               "--grid", "1", "--trials", 2, "--seed", 1, "--out", out) == 0
    rows = read_rows(out / "sweep_cycles.csv")
    assert all(float(r["mean_acc"]) == 1.0 for r in rows)


def test_config_file_defaults_and_flag_priority(tmp_path):
    out = tmp_path / "r"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gen": {"task": "gesture_like", "seed": 7},
                               "sim": {"budget": 16, "trials": 2}}))
    assert run("--config", cfg, "gen", "--out", out) == 0
    model = out / "m.json"
    assert run("train", "--data", out / "train.csv", "--out", model) == 0
    assert run("compile", "--model", model, "--mode", "stochastic",
               "--out", out / "lin.img") == 0
    assert run("--config", cfg, "sim", "--model", model, "--image", out / "lin.img",
               "--data", out / "test.csv", "--out", out) == 0
    rows = read_rows(out / "sim.csv")
    assert rows[0]["budget"] == "16" and rows[0]["trials"] == "2"
    # explicit flag beats the config value
    assert run("--config", cfg, "sim", "--model", model, "--image", out / "lin.img",
               "--data", out / "test.csv", "--budget", 8, "--out", out) == 0
    rows = read_rows(out / "sim.csv")
    assert rows[0]["budget"] == "8"


def test_bad_config_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{broken\n")
    assert run("--config", cfg, "gen", "--task", "gesture_like",
               "--out", tmp_path / "r") == 2
    assert cfg.name in capsys.readouterr().err


def test_sweep_bits_schema(tmp_path):
    out = tmp_path / "r"
    assert run("gen", "--task", "gesture_like", "--seed", 4, "--out", out) == 0
    model = out / "m.json"
    assert run("train", "--data", out / "train.csv", "--bins", 16, "--out", model) == 0
    assert run("sweep", "--kind", "bits", "--model", model,
               "--data", out / "test.csv", "--grid", "4,8", "--trials", 2,
               "--seed", 3, "--out", out) == 0
    rows = read_rows(out / "sweep_bits.csv")
    assert len(rows) == 8  # 2 widths x 2 strategies x 2 budgets
    assert {r["width"] for r in rows} == {"8", "16"}


def test_manifest_hash_location_independent(tmp_path):
    a, b = tmp_path / "deep" / "a", tmp_path / "b"
    assert run("gen", "--task", "gesture_like", "--seed", 5, "--out", a) == 0
    assert run("gen", "--task", "gesture_like", "--seed", 5, "--out", b) == 0
    ha = json.loads((a / "train.csv.manifest.json").read_text())["hash"]
    hb = json.loads((b / "train.csv.manifest.json").read_text())["hash"]
    assert ha == hb
    assert (a / "train.csv").read_bytes() == (b / "train.csv").read_bytes()
