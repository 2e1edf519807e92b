"""Command-line front end: ``smoothfix [COMMAND] --config FILE [--seed N] [--workers N] [--out DIR]``.

Exit codes: 0 pass, 1 fail, 2 inconclusive or truncated, 64 configuration error.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .artifacts import csv_text, json_text, samples_csv_rows, sha256_file, atomic_write
from .branching import DEFAULT_NODE_CAP, grow, martingale_trace
from .config import ConfigError, LawSampler, build_model, build_stable, load_config, validate_config
from .fixedpoint import FixedPointSpec, FixedPointSpecError, fixed_point_sampler, sample_fixed_point
from .kinetic import KineticConfig, KineticConfigError, relax_to_stationary
from .stable import StableSpecError
from .verify import (
    audit_from_replicas, fixed_point_residual, replica_martingales, tensor_grid,
)
from .weights import (
    NoCharacteristicIndexError, check_assumptions, compute_pq, estimate_m,
    solve_characteristic_index,
)

EXIT = {"pass": 0, "fail": 1, "inconclusive": 2, "truncated": 2}
EXIT_CONFIG = 64

DEFAULTS = {
    "alpha-solve": {"n_samples": 200_000, "force_mc": False},
    "assumptions": {"n_samples": 200_000},
    "simulate-tree": {"depth": 6, "n_trees": 1, "node_cap": DEFAULT_NODE_CAP},
    "construct": {"size": 10_000, "tree_depth": 12, "chunk_size": 2_000,
                  "node_cap": DEFAULT_NODE_CAP},
    "verify": {"candidate": "constructed", "n_samples": 100_000, "tree_depth": 12,
               "grid_points": 41, "grid_max": 5.0, "fail_factor": 3.0},
    "kinetic": {"initial": "point", "value": 1.0, "scale": 1.0,
                "times": [1.0, 2.0, 4.0, 8.0, 16.0], "n_samples": 10_000, "method": "auto",
                "depth_cap": 40},
    "audit": {"depth": 12, "replicas": 2000, "chunk_size": 250, "node_cap": DEFAULT_NODE_CAP},
}


class Outputs:
    """Collects artifact texts; written atomically once the command finishes."""

    def __init__(self):
        self.files = []

    def csv(self, name, header, rows):
        self.files.append((name, csv_text(header, rows)))

    def json(self, name, obj):
        self.files.append((name, json_text(obj)))


def _seeds(seed):
    setup, work = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(setup), work


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _alpha(model, params, rng):
    if params.get("alpha") is not None:
        return float(params["alpha"])
    return solve_characteristic_index(model, rng=rng, n_samples=params.get("n_samples", 200_000)).alpha


# -- commands -----------------------------------------------------------------


def cmd_alpha_solve(cfg, model, params, seed, workers, out):
    rng, _ = _seeds(seed)
    try:
        ci = solve_characteristic_index(model, rng=rng, n_samples=params["n_samples"],
                                        force_mc=params["force_mc"])
    except NoCharacteristicIndexError as exc:
        return "fail", {"error": str(exc)}
    case = compute_pq(model, ci.alpha, n_samples=params["n_samples"], rng=rng,
                      force_mc=params["force_mc"])
    gammas = np.linspace(0.0, max(4.0, 2 * ci.alpha), 41)
    rows = []
    for g in gammas:
        est = estimate_m(model, g, n_samples=params["n_samples"], rng=rng, force_mc=params["force_mc"])
        rows.append([g, est.mean, est.stderr, est.infinite])
    out.csv("m_curve.csv", ["gamma", "m", "stderr", "infinite"], rows)
    return "pass", {**ci.to_dict(), **{k: v for k, v in case.to_dict().items()}}


def cmd_assumptions(cfg, model, params, seed, workers, out):
    rng, _ = _seeds(seed)
    try:
        alpha = _alpha(model, params, rng)
    except NoCharacteristicIndexError as exc:
        return "fail", {"error": str(exc)}
    report = check_assumptions(model, alpha, rng=rng, n_samples=params["n_samples"])
    out.csv("assumptions.csv", ["id", "status"], [[e.id, e.status] for e in report.entries])
    statuses = [e.status for e in report.entries]
    status = ("fail" if "estimated-fail" in statuses else
              "inconclusive" if "not-checkable" in statuses else "pass")
    return status, report.to_dict()


def _addresses(tree):
    addr = [""] * tree.n_nodes
    for i in range(tree.n_trees, tree.n_nodes):
        p = tree.parent[i]
        addr[i] = (addr[p] + "." if addr[p] else "") + str(int(tree.child_index[i]))
    return [a or "root" for a in addr]


def cmd_simulate_tree(cfg, model, params, seed, workers, out):
    rng, work = _seeds(seed)
    alpha = _alpha(model, params, rng)
    tree = grow(model, params["depth"], np.random.default_rng(work), node_cap=params["node_cap"],
                n_trees=params["n_trees"])
    addr = _addresses(tree)
    out.csv("tree.csv", ["tree", "address", "depth", "L", "S", "tau"],
            ([int(tree.tree[i]), addr[i], int(tree.depth[i]), tree.L[i], tree.S[i], int(tree.tau[i])]
             for i in range(tree.n_nodes)))
    tr = martingale_trace(tree, alpha)
    out.csv("martingales.csv", ["tree", "n", "W", "Z", "N"],
            ([k, n, tr.W[k, n], tr.Z[k, n], int(tr.N[k, n])]
             for k in range(tree.n_trees) for n in range(tr.generations)))
    summary = {"alpha": alpha, "n_nodes": tree.n_nodes, "generations_complete": tr.generations - 1,
               "truncated": tree.truncated}
    return ("truncated" if tree.truncated else "pass"), summary


def _fixed_point_spec(cfg, model, params, rng):
    stable = build_stable(cfg, model.d, cfg.get("_source"))
    try:
        return FixedPointSpec.build(model, stable, params.get("shift"), params["tree_depth"], rng=rng)
    except (FixedPointSpecError, NoCharacteristicIndexError) as exc:
        raise ConfigError(f"fixed point: {exc}")


def _construct_chunk(spec, ss, size, node_cap):
    s = sample_fixed_point(spec, np.random.default_rng(ss), size=size, node_cap=node_cap)
    return s.x, s.W, s.Z, s.Wstar, s.truncated


def cmd_construct(cfg, model, params, seed, workers, out):
    rng, work = _seeds(seed)
    spec = _fixed_point_spec(cfg, model, params, rng)
    n, chunk = params["size"], params["chunk_size"]
    sizes = [min(chunk, n - s) for s in range(0, n, chunk)]
    jobs = [(spec, ss, k, params["node_cap"]) for ss, k in zip(work.spawn(len(sizes)), sizes)]
    parts = _map(_construct_chunk, jobs, workers)
    x, W, Z, Ws, tr = (np.concatenate([p[i] for p in parts]) for i in range(5))
    d = model.d
    header = [f"x_{k + 1}" for k in range(d)] + ["W", "Z"] + [f"Wstar_{k + 1}" for k in range(d)] + ["truncated"]
    out.csv("samples.csv", header, samples_csv_rows(x, [W, Z, Ws, tr]))
    summary = {"spec": spec.to_dict(), "size": n, "truncated_fraction": float(tr.mean())}
    return ("truncated" if tr.any() else "pass"), summary


def _candidate(cfg, model, params, rng):
    kind = params["candidate"]
    if kind == "constructed":
        spec = _fixed_point_spec(cfg, model, params, rng)
        return fixed_point_sampler(spec), None, {"constructed": spec.to_dict()}
    if model.d != 1:
        raise ConfigError("named candidate laws are one-dimensional")
    alpha = params.get("alpha")
    if kind == "stable" and alpha is None:
        raise ConfigError("params.alpha is required for a stable candidate")
    law = LawSampler(kind, params.get("value", 0.0), params.get("scale", 1.0),
                     alpha if kind == "stable" else None)
    return law, law.cf, law.to_dict()


def cmd_verify(cfg, model, params, seed, workers, out):
    rng, work = _seeds(seed)
    sampler, cf, described = _candidate(cfg, model, params, rng)
    grid = tensor_grid(model.d, params["grid_points"], -params["grid_max"], params["grid_max"])
    rep = fixed_point_residual(model, sampler, grid, params["n_samples"],
                               np.random.default_rng(work), cf=cf)
    coords = [f"t_{k + 1}" for k in range(model.d)]
    out.csv("residual.csv", coords + ["abs_residual", "lhs_re", "lhs_im", "rhs_re", "rhs_im"],
            rep.rows())
    if rep.passed:
        status = "pass"
    elif rep.sup_residual > params["fail_factor"] * rep.noise_floor:
        status = "fail"
    else:
        status = "inconclusive"
    return status, {**rep.to_dict(), "candidate": described}


def cmd_kinetic(cfg, model, params, seed, workers, out):
    rng, work = _seeds(seed)
    law = LawSampler(params["initial"], params["value"], params["scale"], params.get("alpha"))
    try:
        kc = KineticConfig(model, law, t=max(params["times"]), n_samples=params["n_samples"],
                           depth_cap=params["depth_cap"])
        rep = relax_to_stationary(kc, params["times"], np.random.default_rng(work),
                                  method=params["method"])
    except KineticConfigError as exc:
        raise ConfigError(f"kinetic: {exc}")
    out.csv("kinetic.csv", ["t", "ks", "noise_level", "capped_fraction"], rep.rows())
    return ("pass" if rep.non_increasing else "fail"), {**rep.to_dict(), "initial": law.to_dict()}


def _audit_chunk(model, alpha, depth, k, ss, node_cap):
    return replica_martingales(model, alpha, depth, k, np.random.default_rng(ss), node_cap)


def cmd_audit(cfg, model, params, seed, workers, out):
    rng, work = _seeds(seed)
    alpha = _alpha(model, params, rng)
    n, chunk, depth = params["replicas"], params["chunk_size"], params["depth"]
    if depth < 2:
        raise ConfigError("audit needs depth >= 2")
    sizes = [min(chunk, n - s) for s in range(0, n, chunk)]
    jobs = [(model, alpha, depth, k, ss, params["node_cap"]) for ss, k in zip(work.spawn(len(sizes)), sizes)]
    parts = _map(_audit_chunk, jobs, workers)
    W = np.vstack([p[0] for p in parts])
    Z = np.vstack([p[1] for p in parts])
    trunc = any(p[2] for p in parts)
    if trunc:
        return "truncated", {"alpha": alpha, "error": "trees exceeded node_cap"}
    rep = audit_from_replicas(W, Z, alpha)
    out.csv("audit.csv", ["n", "W_mean", "W_sd", "Z_mean", "Z_sd", "absZ_mean", "Z_rms"], rep.rows())
    status = "inconclusive" if "inconclusive" in (rep.W_trend, rep.Z_trend) else "pass"
    return status, rep.to_dict()


COMMANDS = {
    "alpha-solve": cmd_alpha_solve,
    "assumptions": cmd_assumptions,
    "simulate-tree": cmd_simulate_tree,
    "construct": cmd_construct,
    "verify": cmd_verify,
    "kinetic": cmd_kinetic,
    "audit": cmd_audit,
}


# -- driver -------------------------------------------------------------------


def resolve(cfg, command=None, seed=None):
    """Fill in defaults; returns the config echoed into the manifest."""
    cfg = {k: v for k, v in cfg.items() if not k.startswith("_")}
    if command is not None:
        cfg["command"] = command
    if seed is not None:
        cfg["seed"] = int(seed)
    if "seed" not in cfg:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    if not 0 <= int(cfg["seed"]) < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    cfg["params"] = {**DEFAULTS[cfg["command"]], **cfg.get("params", {})}
    return cfg


def run(cfg, out_dir, workers=1, source=None):
    """Run a resolved config; returns ``(exit_code, manifest)``."""
    model = build_model(cfg, source)
    cfg_src = dict(cfg, _source=source)
    out = Outputs()
    try:
        status, summary = COMMANDS[cfg["command"]](cfg_src, model, dict(cfg["params"]),
                                                   int(cfg["seed"]), workers, out)
    except (FixedPointSpecError, StableSpecError, KineticConfigError) as exc:
        raise ConfigError(str(exc))
    out.json("result.json", {"command": cfg["command"], "status": status, "summary": summary})
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    for name, text in out.files:
        path = os.path.join(out_dir, name)
        atomic_write(path, text)
        artifacts.append({"path": name, "sha256": sha256_file(path)})
    manifest = {"command": cfg["command"], "seed": int(cfg["seed"]), "status": status,
                "exit_code": EXIT[status], "config": cfg, "artifacts": artifacts,
                "version": __version__, "workers": int(workers)}
    atomic_write(os.path.join(out_dir, "manifest.json"), json_text(manifest))
    return EXIT[status], manifest


def _workers(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("SMOOTHFIX_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SMOOTHFIX_WORKERS must be an integer, got {env!r}")
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="smoothfix", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS),
                   help="overrides the config's command")
    p.add_argument("--config", required=True, metavar="PATH", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--workers", type=int, help="worker processes (default: $SMOOTHFIX_WORKERS or 1)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        source = raw.get("_source")
        cfg = resolve(raw, args.command, args.seed)
        validate_config(cfg)
        workers = _workers(args.workers)
        out_dir = args.out or cfg.get("output", {}).get("dir") or os.path.join("smoothfix-out", cfg["command"])
        code, manifest = run(cfg, out_dir, workers, source)
    except ConfigError as exc:
        print(f"smoothfix: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"smoothfix: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{manifest['command']}: {manifest['status']} -> {os.path.join(out_dir, 'manifest.json')}")
    return code


if __name__ == "__main__":
    sys.exit(main())
