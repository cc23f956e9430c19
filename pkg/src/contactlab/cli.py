"""Command-line experiment harness.

    contactlab <command> --config <file> [--seed N] [--out DIR]

One JSON config per run; every stochastic output is reproducible from
(config, seed).  Outputs land in the run directory together with a
``manifest.json`` listing each file with a content digest.

Exit codes: 0 success, 1 check failure, 2 config error, 3 numerical
divergence (with diagnostics in the report).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .criticality import calibrate, theta_kernel
from .errors import ConfigError, ContactLabError, DivergenceError
from .hierarchy import (bound_constant_D, convergence_check, evolve_hierarchy,
                        factorial_bound_check, HierarchySolution,
                        stationary_k)
from .model import load_model_config, model_from_dict
from .simulator import empirical_correlations, run_replicas
from .walkers import (convolution_bound_check, estimate_H, heat_bound_check,
                      lower_tail_bound_check, poisson_domination_check)

STOCHASTIC_COMMANDS = {"transience", "simulate", "verify-lemmas", "verify-bounds"}

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


class Run:
    """Collects output files and writes the manifest at the end."""

    def __init__(self, config: dict, outdir: Path):
        self.config = config
        self.outdir = outdir
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.checks: dict[str, bool] = {}
        self.files: list[Path] = []

    def write_json(self, name: str, payload: dict):
        path = self.outdir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        self.files.append(path)

    def write_csv(self, name: str, header, rows):
        path = self.outdir / name
        _write_csv(path, header, rows)
        self.files.append(path)

    def finish(self, command: str):
        manifest = {
            "artifact_version": __version__,
            "command": command,
            "config_digest": hashlib.sha256(
                json.dumps(self.config, sort_keys=True).encode()).hexdigest(),
            "wall_clock_seconds": round(time.time() - self.started, 3),
            "checks": self.checks,
            "outputs": {p.name: _digest(p) for p in self.files},
        }
        path = self.outdir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _model_from_config(cfg: dict, config_path: str):
    if "model" in cfg:
        return model_from_dict(cfg["model"])
    if "model_file" in cfg:
        p = Path(cfg["model_file"])
        if not p.is_absolute():
            p = Path(config_path).parent / p
        return load_model_config(p)
    raise ConfigError("config needs a 'model' dict or 'model_file' path")


def _require(cfg: dict, key: str, default=None):
    if key in cfg:
        return cfg[key]
    if default is not None:
        return default
    raise ConfigError(f"config key '{key}' is required")


def _tolerances_positive(cfg: dict):
    for key in ("tol", "dt"):
        if key in cfg and not (isinstance(cfg[key], (int, float)) and cfg[key] > 0):
            raise ConfigError(f"config key '{key}' must be positive")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_calibrate(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tol = float(cfg.get("tol", 1e-12))
    tm, gs, report = calibrate(model, space, tol=tol)
    payload = {
        "r": report["r_initial"],
        "r_after_rescale": report["r_after_rescale"],
        "criticality_residual": report["criticality_residual"],
        "iterations": report["iterations"],
        "normalization": report["normalization"],
    }
    run.write_json("calibration.json", payload)
    tm_payload = {
        "psi": tm.psi, "mbar": tm.mbar, "death": tm.death, "b": tm.b,
        "alpha": ([[list(k), v] for k, v in tm.alpha.items()]
                  if tm.alpha is not None else None),
        "Q": tm.Q, "q": tm.q, "v": tm.v,
    }
    run.write_json("transformed_model.json", tm_payload)
    ok = report["criticality_residual"] <= max(1e-10, 100 * tol)
    run.checks["criticality_residual"] = bool(ok)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_transience(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    d = space.dim or 1
    starts = [tuple(s) for s in cfg.get(
        "starts", [[0] * d, [1] + [0] * (d - 1), [2] + [0] * (d - 1)])]
    rep = estimate_H(tm, starts, T=float(cfg.get("T", 1000.0)),
                     replicas=int(cfg.get("replicas", 100_000)), rng=rng,
                     variant=cfg.get("variant", "full"))
    run.write_json("transience.json", {
        "H_hat": rep.H_hat, "stderr": rep.stderr, "converged": rep.converged,
        "tail_exponent_fit": rep.tail_exponent_fit,
        "growth_exponent": rep.growth_exponent, "horizon": rep.horizon,
        "variant": rep.variant,
        "per_start": {str(k): v for k, v in rep.per_start.items()},
    })
    if rep.times is not None:
        run.write_csv("transience_curve.csv", ["t", "running_integral"],
                      zip(rep.times, rep.running))
    run.checks["transience_converged"] = rep.converged
    return EXIT_OK


def cmd_evolve(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    rho = float(_require(cfg, "rho"))
    N = int(cfg.get("N", 2))
    T = float(cfg.get("T", 2.0))
    results = evolve_hierarchy(tm, rho, N, T, dt=float(cfg.get("dt", 0.05)))
    for n, (times, traj) in results.items():
        rows = []
        for t, tensor in zip(times, traj):
            for idx in np.ndindex(*tensor.values.shape):
                rows.append((t,) + idx + (tensor.values[idx],))
        run.write_csv(f"evolve_k{n}.csv",
                      ["t"] + [f"x{i + 1}" for i in range(n)] + ["value"], rows)
    return EXIT_OK


def cmd_stationary(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    rho = float(_require(cfg, "rho"))
    n = int(cfg.get("n", 2))
    backend = cfg.get("backend", "dense")
    controls = dict(cfg.get("controls", {}))
    if backend == "montecarlo":
        if "seed" not in cfg:
            raise ConfigError("montecarlo backend requires a seed")
        controls.setdefault("replicas", 20000)
        controls["rng"] = rng
        if "displacements" in cfg:
            controls["displacements"] = [tuple(u) for u in cfg["displacements"]]
    try:
        k = stationary_k(n, tm, rho, backend=backend, controls=controls)
    except DivergenceError as exc:
        run.write_json("divergence.json",
                       {"error": str(exc),
                        "diagnostics": {kk: vv for kk, vv in exc.diagnostics.items()
                                        if kk != "increments"}})
        run.checks["stationary_converged"] = False
        run.finish("stationary")
        return EXIT_DIVERGENCE
    if backend == "montecarlo":
        rows = [tuple(u) + (val, se) for u, val, se in
                zip(k.displacements, k.values, k.stderr)]
        run.write_csv("stationary_k2.csv",
                      [f"u{i + 1}" for i in range(space.dim)] + ["value", "stderr"],
                      rows)
    else:
        rows = [idx + (k.values[idx],) for idx in np.ndindex(*k.values.shape)]
        run.write_csv(f"stationary_k{n}.csv",
                      [f"x{i + 1}" for i in range(n)] + ["value"], rows)
    run.checks["stationary_converged"] = True
    return EXIT_OK


def cmd_simulate(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    rho = float(_require(cfg, "rho"))
    T = float(cfg.get("T", 2.0))
    snap = [float(t) for t in cfg.get("snapshot_times", [T])]
    replicas = int(cfg.get("replicas", 1000))
    logs = run_replicas(tm, rho, T, snap, replicas, seed=int(cfg["seed"]))
    truncated = sum(log.truncated for log in logs)
    orders = [int(n) for n in cfg.get("orders", [1, 2])]
    width = max(orders)
    rows = []
    for t in snap:
        for n in orders:
            est = empirical_correlations(logs, space, t, n, tm.mbar)
            for idx in np.ndindex(*est.values.shape):
                rows.append((t, n) + idx + ("",) * (width - n)
                            + (est.values[idx], est.stderr[idx]))
    header = ["t", "order"] + [f"x{i + 1}" for i in range(width)] + ["value", "stderr"]
    run.write_csv("moments.csv", header, rows)
    run.write_json("simulate.json",
                   {"replicas": replicas, "truncated": truncated,
                    "snapshot_times": snap})
    return EXIT_OK


def cmd_verify_lemmas(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    d = space.dim or 1
    results = {}
    ok = True
    conv = convolution_bound_check(tm.alpha, d, int(cfg.get("n_max", 64)))
    results["convolution"] = {"max_over_median": conv["max_over_median"],
                              "bounded": conv["bounded"]}
    ok &= conv["bounded"]
    run.write_csv("convolution.csv", ["n", "sup", "scaled"],
                  zip(conv["n"], conv["sup"], conv["scaled"]))
    lam0 = float(cfg.get("lambda0", tm.v.min() if tm.marked else tm.death.min()))
    tgrid = np.asarray(cfg.get("t_grid", np.linspace(2.0 / lam0, 40.0 / lam0, 8)))
    lower = lower_tail_bound_check(lam0, tgrid)
    results["lower_tail"] = {"max_ratio": lower["max_ratio"],
                             "passed": lower["passed"]}
    ok &= lower["passed"]
    replicas = int(cfg.get("replicas", 20000))
    if tm.marked:
        theta = theta_kernel(tm)
        kgrid = np.asarray(cfg.get("k_grid", np.arange(0, 8)), dtype=int)
        dom = poisson_domination_check(tm.v, theta, lam0, tgrid, kgrid,
                                       replicas, rng)
        results["poisson_domination"] = {"passed": dom["passed"],
                                         "max_excess": dom["max_excess"]}
        ok &= dom["passed"]
    hb_grid = np.asarray(cfg.get("heat_t_grid",
                                 np.geomspace(1.0, 100.0, 12)))
    x0 = ((tuple([0] * d), space.marks[0]) if tm.marked else tuple([0] * d))
    hb = heat_bound_check(tm, hb_grid, x0, tuple([0] * d), replicas, rng)
    results["heat_bound"] = {"sup_scaled": hb["sup_scaled"], "flat": hb["flat"]}
    ok &= hb["flat"]
    results["passed"] = bool(ok)
    run.write_json("lemmas.json", results)
    for name, res in results.items():
        if name == "passed":
            continue
        verdict = res.get("passed", res.get("bounded", res.get("flat")))
        run.checks[f"lemma_{name}"] = bool(verdict)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_verify_bounds(cfg, run: Run, rng):
    space, model = _model_from_config(cfg, cfg["_path"])
    tm, _, _ = calibrate(model, space)
    rho = float(_require(cfg, "rho"))
    d = space.dim or 1
    T = float(cfg.get("T", 200.0))
    replicas = int(cfg.get("replicas", 20000))
    starts = [tuple(s) for s in cfg.get(
        "starts", [[0] * d, [1] + [0] * (d - 1), [2] + [0] * (d - 1)])]
    trans = estimate_H(tm, starts, T=T, replicas=replicas, rng=rng)
    if not trans.converged:
        run.write_json("bounds.json", {"error": "transience not established",
                                       "H_hat": trans.H_hat,
                                       "converged": False})
        run.checks["factorial_bound"] = False
        run.finish("verify-bounds")
        return EXIT_DIVERGENCE
    try:
        k2 = stationary_k(2, tm, rho, backend="montecarlo",
                          controls={"displacements": starts, "T": T,
                                    "replicas": replicas, "rng": rng})
    except DivergenceError as exc:
        run.write_json("bounds.json", {"error": str(exc), "converged": False})
        run.checks["factorial_bound"] = False
        run.finish("verify-bounds")
        return EXIT_DIVERGENCE
    from .hierarchy import CorrelationTensor
    k1 = CorrelationTensor(1, np.full(1, rho))
    sol = HierarchySolution(rho=rho, tensors=[k1, k2], H_used=trans.H_hat,
                            D_const=bound_constant_D(rho, trans.H_hat))
    rep = factorial_bound_check(sol, mc_tolerance=float(cfg.get("mc_tolerance", 0.0)))
    run.write_json("bounds.json", {
        "H": trans.H_hat, "D": rep["D"],
        "per_level": {str(k): v for k, v in rep["per_level"].items()},
        "passed": rep["passed"],
    })
    run.checks["factorial_bound"] = rep["passed"]
    return EXIT_OK if rep["passed"] else EXIT_CHECK_FAILED


def cmd_report(cfg, run: Run, rng):
    runs = cfg.get("runs", [])
    if not runs:
        raise ConfigError("report needs a 'runs' list of run directories")
    table = []
    all_ok = True
    for rdir in runs:
        mpath = Path(rdir) / "manifest.json"
        if not mpath.exists():
            raise ConfigError(f"no manifest in {rdir}")
        with open(mpath) as fh:
            man = json.load(fh)
        for check, passed in man.get("checks", {}).items():
            table.append((man["command"], check, "pass" if passed else "fail"))
            all_ok &= bool(passed)
    run.write_csv("report.csv", ["command", "check", "status"], table)
    run.write_json("report.json", {"checks": len(table), "all_passed": all_ok})
    run.checks["all_runs_passed"] = all_ok
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


COMMANDS = {
    "calibrate": cmd_calibrate,
    "transience": cmd_transience,
    "evolve": cmd_evolve,
    "stationary": cmd_stationary,
    "simulate": cmd_simulate,
    "verify-lemmas": cmd_verify_lemmas,
    "verify-bounds": cmd_verify_bounds,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="contactlab",
                                     description="contact-process laboratory")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        cfg["_path"] = args.config
        if args.seed is not None:
            cfg["seed"] = args.seed
        _tolerances_positive(cfg)
        if args.command in STOCHASTIC_COMMANDS and "seed" not in cfg:
            raise ConfigError(f"command '{args.command}' requires a seed")
        outdir = Path(args.out or cfg.get("output_dir", "out"))
        rng = (np.random.default_rng(int(cfg["seed"]))
               if "seed" in cfg else None)
        run = Run({k: v for k, v in cfg.items() if k != "_path"}, outdir)
        code = COMMANDS[args.command](cfg, run, rng)
        if not (outdir / "manifest.json").exists():
            run.finish(args.command)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ContactLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
