"""Command line entry point.

Every subcommand reads an optional YAML or JSON config, runs one experiment
and writes CSV tables, a ``checks.csv`` summary, a ``result.json`` verdict
and a ``manifest.json`` holding the seed, the hash of the canonical config and
the package version.

Exit codes: 0 all checks pass, 1 some check failed, 2 bad config,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, experiments, problems, simulate
from .fokker1d import DegenerateDiffusion
from .linalg import FloorViolated, NotPSD
from .lyapunov import TargetTooLoose, xlogx_bound_holds, xlogx_threshold
from .quadrature import QuadratureNotConverged
from .sgdnoise import Unmatchable

OUT_ENV = "LANGEVIN_NOISE_OUT"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


NUMERIC_ERRORS = (
    simulate.NonFinite,
    simulate.NoiseBoundViolated,
    NotPSD,
    FloorViolated,
    QuadratureNotConverged,
    DegenerateDiffusion,
    FloatingPointError,
)
CONFIG_ERRORS = (ConfigError, TargetTooLoose, Unmatchable, problems.ConstraintViolation)


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None

    def canonical(self) -> str:
        body = {"subcommand": self.subcommand, "seed": self.seed, "options": self.options}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "out": self.out, "options": self.options}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(data["subcommand"], dict(data.get("options", {})), int(data.get("seed", 0)), data.get("out"))


PROBLEMS = {
    "quadratic": problems.quadratic,
    "double_well_1d": problems.double_well_1d,
    "state_dependent_2d": problems.state_dependent_2d,
    "builtin_1d": problems.builtin_1d_example,
    "constant_drift": problems.constant_drift,
    "logistic_sgd": lambda step=0.01, sigma=0.0, b1=1, b2=1: experiments.toy_problem(step, sigma, b1, b2),
}

KINDS = {
    "em": simulate.ProcessKind.EM_GAUSSIAN,
    "xi": simulate.ProcessKind.DISCRETE_XI,
    "fine": simulate.ProcessKind.FINE_REFERENCE,
}


def build_problem(entry):
    if entry is None:
        raise ConfigError("missing required key 'problem'")
    if isinstance(entry, str):
        name, kwargs = entry, {}
    elif isinstance(entry, dict) and "name" in entry:
        kwargs = {k: v for k, v in entry.items() if k != "name"}
        name = entry["name"]
    else:
        raise ConfigError("'problem' must be a name or a mapping with a 'name' key")
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem '{name}' (choose from {', '.join(sorted(PROBLEMS))})")
    try:
        return PROBLEMS[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for problem '{name}': {exc}") from exc


def _take(options: dict, allowed: dict) -> dict:
    """Merge options over defaults, rejecting unknown keys."""
    unknown = sorted(set(options) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown option(s): {', '.join(unknown)}")
    merged = dict(allowed)
    merged.update(options)
    return merged


def _initial(x0, n: int, dim: int) -> np.ndarray:
    arr = np.asarray(x0, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.ndim == 1:
        if arr.size != dim:
            raise ConfigError(f"x0 has {arr.size} entries but the problem has dimension {dim}")
        return np.tile(arr, (n, 1))
    if arr.shape != (n, dim):
        raise ConfigError(f"x0 must have shape ({n}, {dim})")
    return arr


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"problem": None, "kind": "em", "delta": 0.01, "steps": 100, "n_traj": 100, "x0": 0.0, "refine": 1})
    spec = build_problem(o["problem"])
    if o["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    n = int(o["n_traj"])
    x0 = _initial(o["x0"], n, spec.dim)
    return experiments.simulate_endpoints(spec, KINDS[o["kind"]], x0, float(o["delta"]), int(o["steps"]), cfg.seed, threads, int(o["refine"]))


def cmd_rate_sweep(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"problem": "state_dependent_2d", "deltas": [2.0**-k for k in range(4, 10)], "n_pairs": 2000,
                            "T": 1.0, "refine": 64, "x0": None, "min_slope": 0.4})
    spec = build_problem(o["problem"])
    deltas = [float(d) for d in o["deltas"]]
    if len(deltas) < 4:
        raise ConfigError("'deltas' needs at least four values")
    x0 = o["x0"] if o["x0"] is not None else [0.5] * spec.dim
    x0 = _initial(x0, 1, spec.dim)[0]
    return experiments.rate_sweep(spec, deltas, int(o["n_pairs"]), float(o["T"]), int(o["refine"]), x0, cfg.seed, threads, float(o["min_slope"]))


def cmd_couple(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"eps_hat": 1.0, "epsilon": "auto", "delta": "auto", "n_pairs": 1000, "n_steps": 1000, "inner": 32,
                            "x0": -0.6, "y0": 0.6, "checkpoints": [10, 100, 1000]})
    eps = None if o["epsilon"] == "auto" else float(o["epsilon"])
    delta = None if o["delta"] == "auto" else float(o["delta"])
    return experiments.contraction(float(o["eps_hat"]), int(o["n_pairs"]), int(o["n_steps"]), int(o["inner"]), float(o["x0"]),
                                   float(o["y0"]), tuple(int(k) for k in o["checkpoints"]), cfg.seed, threads, eps, delta)


def cmd_invariant1d(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"n_traj": 1000, "n_steps": 1000, "delta": 0.01, "init_center": -2.0, "init_spread": 1.0,
                            "m_floor": 0.05, "convention": "paper"})
    if o["convention"] not in ("paper", "ito"):
        raise ConfigError("convention must be 'paper' or 'ito'")
    return experiments.invariant_1d(int(o["n_traj"]), int(o["n_steps"]), float(o["delta"]), cfg.seed, threads,
                                    float(o["init_center"]), float(o["init_spread"]), float(o["m_floor"]), o["convention"])


def cmd_sgd_match(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"delta": 0.05, "b": 16, "s": 0.01, "b1": 16, "b2": 16, "mismatch_b": 4, "steps": 2000,
                            "n_chains": 400, "groups": 20, "tail_every": 20})
    out = experiments.matching(float(o["delta"]), int(o["b"]), float(o["s"]), int(o["b1"]), int(o["b2"]), int(o["mismatch_b"]),
                               int(o["steps"]), int(o["n_chains"]), int(o["groups"]), int(o["tail_every"]), seed=cfg.seed, threads=threads)
    print(f"sigma = {out.info['sigma']:.17g}")
    return out


def cmd_clt_check(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"sizes": [64, 256, 1024], "n_aggregates": 10_000})
    return experiments.clt(tuple(int(n) for n in o["sizes"]), int(o["n_aggregates"]), cfg.seed, threads)


def cmd_energy(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"delta": 0.01, "n_traj": 1000, "n_steps": 1000, "x_refine": 16, "every": 10})
    return experiments.energy(float(o["delta"]), int(o["n_traj"]), int(o["n_steps"]), int(o["x_refine"]), int(o["every"]), cfg.seed, threads)


def cmd_frozen_pair(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"delta": 1e-4, "n_pairs": 10_000})
    return experiments.frozen_pair(float(o["delta"]), int(o["n_pairs"]), cfg.seed, threads)


def cmd_selftest(cfg: RunConfig, threads: int) -> experiments.Outcome:
    o = _take(cfg.options, {"epsilon": 0.1, "points": 500, "eldan_pairs": 1000, "xlogx_draws": 100_000})
    out = experiments.lemma_grid(epsilon=float(o["epsilon"]), points=int(o["points"]), seed=cfg.seed)
    eld = experiments.eldan(int(o["eldan_pairs"]), seed=cfg.seed)
    out.checks += eld.checks
    rng = np.random.default_rng(cfg.seed)
    cs = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), int(o["xlogx_draws"])))
    misses = sum(not xlogx_bound_holds(c, xlogx_threshold(c) * (1.0 + u) + 1e-12)
                 for c, u in zip(cs, rng.exponential(size=cs.size)))
    out.add("xlogx", "failures_above_threshold", float(misses), 0.0)
    out.name = "selftest"
    rows = [(c.group, c.name, c.value, "PASS" if c.passed else "FAIL") for c in out.checks]
    out.info["selftest_rows"] = rows
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "rate-sweep": cmd_rate_sweep,
    "couple": cmd_couple,
    "invariant1d": cmd_invariant1d,
    "sgd-match": cmd_sgd_match,
    "clt-check": cmd_clt_check,
    "energy": cmd_energy,
    "frozen-pair": cmd_frozen_pair,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return "%.17g" % x


def write_csv(path: Path, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def write_outputs(out_dir: Path, cfg: RunConfig, outcome: experiments.Outcome, threads: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (cols, rows) in outcome.tables.items():
        write_csv(out_dir / f"{name}.csv", cols, rows)
    if cfg.subcommand == "selftest":
        write_csv(out_dir / "selftest.csv", ["lemma_id", "check_id", "worst_violation", "status"], outcome.info["selftest_rows"])
    write_csv(out_dir / "checks.csv", ["group", "check", "value", "bound", "status"],
              [(c.group, c.name, c.value, c.bound, "PASS" if c.passed else "FAIL") for c in outcome.checks])
    info = {k: v for k, v in outcome.info.items() if k != "selftest_rows"}
    result = {
        "subcommand": cfg.subcommand,
        "status": "PASS" if outcome.passed else "FAIL",
        "checks": [{"group": c.group, "check": c.name, "value": c.value, "bound": c.bound, "status": "PASS" if c.passed else "FAIL"}
                   for c in outcome.checks],
        "info": _jsonable(info),
        "seconds": outcome.seconds,
    }
    (out_dir / "result.json").write_text(json.dumps(result, indent=2) + "\n")
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest,
        "config": cfg.to_dict(),
        "threads": threads,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# entry point


def load_config(path: str | None, subcommand: str) -> RunConfig:
    if path is None:
        return RunConfig(subcommand)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    # a manifest written by a previous run can be fed back in
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if data.get("subcommand", subcommand) != subcommand:
        raise ConfigError(f"config is for '{data['subcommand']}', not '{subcommand}'")
    extra = sorted(set(data) - {"subcommand", "seed", "out", "options"})
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(extra)}")
    options = data.get("options") or {}
    if not isinstance(options, dict):
        raise ConfigError("'options' must be a mapping")
    return RunConfig(subcommand, options, int(data.get("seed", 0)), data.get("out"))


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="langevin-noise", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
        p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config, else runs/<subcommand>)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand)
        if args.seed is not None:
            cfg.seed = args.seed
        if cfg.seed < 0 or cfg.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = args.out or os.environ.get(OUT_ENV) or cfg.out or os.path.join("runs", args.subcommand)
        outcome = COMMANDS[args.subcommand](cfg, args.threads)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(Path(out_dir), cfg, outcome, args.threads)
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.group}/{c.name}: {c.value:.6g} vs {c.bound:.6g}")
    print(f"{'PASS' if outcome.passed else 'FAIL'} {args.subcommand} ({outcome.seconds:.2f} s) -> {out_dir}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
