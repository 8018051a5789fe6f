import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from langevin_noise import cli


def run(tmp_path, sub, options=None, seed=0, name="cfg.yaml", args=()):
    cfg = tmp_path / name
    cfg.write_text(yaml.safe_dump({"seed": seed, "options": options or {}}))
    out = tmp_path / f"out_{sub}_{len(list(tmp_path.iterdir()))}"
    code = cli.main([sub, "--config", str(cfg), "--out", str(out), *args])
    return code, out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_zero_noise_quadratic_endpoint(tmp_path):
    opts = {"problem": {"name": "quadratic", "noise_scale": 0.0}, "delta": 0.1, "steps": 10, "n_traj": 3, "x0": 1.0}
    code, out = run(tmp_path, "simulate", opts)
    assert code == 0
    ends = rows(out / "endpoints.csv")
    assert np.allclose([float(r["x_0"]) for r in ends], 0.9**10, rtol=1e-14, atol=0)


def test_missing_problem_is_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", {"delta": 0.1})
    assert code == 2
    assert "'problem'" in capsys.readouterr().err


@pytest.mark.parametrize(
    "options",
    [{"problem": "nope"}, {"problem": "quadratic", "kind": "milstein"}, {"problem": "quadratic", "bogus": 1},
     {"problem": {"name": "quadratic", "bad_arg": 2}}, {"problem": "quadratic", "x0": [1.0, 2.0]}],
)
def test_config_errors(tmp_path, options):
    assert run(tmp_path, "simulate", options)[0] == 2


def test_malformed_files(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    other = tmp_path / "other.yaml"
    other.write_text(yaml.safe_dump({"subcommand": "energy", "options": {}}))
    assert cli.main(["simulate", "--config", str(other), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert cli.main(["clt-check", "--threads", "0", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(tmp_path):
    opts = {"problem": {"name": "quadratic", "scale": 1000.0}, "delta": 0.1, "steps": 200, "n_traj": 2, "x0": 1.0}
    assert run(tmp_path, "simulate", opts)[0] == 3


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    opts = {"problem": "state_dependent_2d", "kind": "fine", "refine": 16, "delta": 0.05, "steps": 20, "n_traj": 25, "x0": [0.3, -0.2]}
    code, out = run(tmp_path, "simulate", opts, seed=17)
    assert code == 0
    again = tmp_path / "again"
    assert cli.main(["simulate", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (out / "endpoints.csv").read_bytes() == (again / "endpoints.csv").read_bytes()
    m1, m2 = (json.loads((d / "manifest.json").read_text()) for d in (out, again))
    assert m1 == m2 and m1["seed"] == 17 and m1["version"]


def test_config_round_trip_and_hash():
    cfg = cli.RunConfig("couple", {"eps_hat": 0.5, "checkpoints": [1, 2]}, seed=3, out="x")
    back = cli.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest == cfg.digest
    assert cli.RunConfig("couple", {"eps_hat": 0.5, "checkpoints": [1, 2]}, seed=4).digest != cfg.digest
    # key order and output location do not change the hash
    assert cli.RunConfig("couple", {"checkpoints": [1, 2], "eps_hat": 0.5}, seed=3).digest == cfg.digest


def test_seed_override(tmp_path):
    opts = {"problem": "quadratic", "steps": 5, "n_traj": 4}
    _, a = run(tmp_path, "simulate", opts, seed=1)
    _, b = run(tmp_path, "simulate", opts, seed=2, args=("--seed", "1"))
    assert (a / "endpoints.csv").read_bytes() == (b / "endpoints.csv").read_bytes()
    assert json.loads((b / "manifest.json").read_text())["seed"] == 1


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"out": str(tmp_path / "from_config"), "options": {"sizes": [4, 8]}}))
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "from_env"))
    assert cli.main(["clt-check", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_env" / "clt.csv").exists()
    monkeypatch.delenv(cli.OUT_ENV)
    assert cli.main(["clt-check", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_config" / "manifest.json").exists()


def test_threads_do_not_change_bytes(tmp_path):
    opts = {"problem": "double_well_1d", "kind": "xi", "delta": 0.05, "steps": 30, "n_traj": 41}
    _, a = run(tmp_path, "simulate", opts, seed=5)
    _, b = run(tmp_path, "simulate", opts, seed=5, args=("--threads", "4"))
    assert (a / "endpoints.csv").read_bytes() == (b / "endpoints.csv").read_bytes()


def test_rate_sweep_constant_drift(tmp_path):
    opts = {"problem": {"name": "constant_drift", "drift": 0.5}, "deltas": [0.5, 0.25, 0.125, 0.0625], "n_pairs": 50, "refine": 16,
            "x0": [1.0], "min_slope": 0.0}
    _, out = run(tmp_path, "rate-sweep", opts)
    assert all(float(r["w1"]) == 0.0 for r in rows(out / "sweep.csv"))


def test_rate_sweep_ou_slope(tmp_path):
    opts = {"problem": "quadratic", "deltas": [2.0**-k for k in range(3, 8)], "n_pairs": 500, "refine": 32, "x0": [1.0]}
    code, out = run(tmp_path, "rate-sweep", opts)
    slope = json.loads((out / "result.json").read_text())["info"]["slope"]
    assert code == 0 and 0.4 <= slope <= 1.2


def test_rate_sweep_needs_four_steps(tmp_path):
    assert run(tmp_path, "rate-sweep", {"deltas": [0.1, 0.05, 0.025]})[0] == 2


def test_clt_check(tmp_path):
    code, out = run(tmp_path, "clt-check", {"sizes": [64, 256, 1024], "n_aggregates": 2000})
    assert code == 0
    table = rows(out / "clt.csv")
    assert all(float(r["w2"]) <= float(r["bound"]) for r in table)
    assert float(table[0]["bound"]) == pytest.approx(6 * np.sqrt(np.log(64)) / 8)


def test_sgd_match_unmatchable(tmp_path):
    assert run(tmp_path, "sgd-match", {"delta": 0.01, "b": 16, "s": 0.1, "b1": 1})[0] == 2


def test_couple_rejects_loose_target(tmp_path):
    assert run(tmp_path, "couple", {"eps_hat": 1e30})[0] == 2


def test_invariant1d_small(tmp_path):
    code, out = run(tmp_path, "invariant1d", {"n_traj": 300, "n_steps": 600})
    res = json.loads((out / "result.json").read_text())
    checks = {c["check"]: c for c in res["checks"]}
    assert checks["mode_gap"]["value"] <= 0.5
    oracle = rows(out / "oracle.csv")
    assert set(oracle[0]) == {"x", "V", "density"}


def test_selftest(tmp_path):
    code, out = run(tmp_path, "selftest", {"points": 200, "eldan_pairs": 100, "xlogx_draws": 1000})
    assert code == 0
    table = rows(out / "selftest.csv")
    assert list(table[0]) == ["lemma_id", "check_id", "worst_violation", "status"]
    assert all(r["status"] == "PASS" for r in table)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "langevin_noise", "clt-check", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, input="")
    assert proc.returncode == 0 and "PASS clt-check" in proc.stdout
