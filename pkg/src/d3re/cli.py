"""Command line entry point: ``d3re <subcommand> --config run.json --seed N --out DIR``.

Exit codes: 0 success, 1 unexpected failure, 2 bad configuration, 3 numeric
failure.  Failures print a one-line JSON object to stderr.  Every artifact is
recorded in ``<out>/manifest.json`` together with the config hash and seed;
``d3re verify --out DIR`` re-hashes them.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np
from pydantic import ValidationError

from . import rng as rngmod
from .config import RunConfig, load_config
from .distributions import dequantize, gaussian_kl, gaussian_sample, toy2d_sample
from .estimation import Integrator, density_grid, estimate_logratio, grid_mass, integrate_logratio
from .exceptions import ConfigurationError, DomainError, NonFiniteError
from .interpolants import InterpolantConfig, Schedule, gaussian_marginal_time_score, schedule_eval
from .scorenet import load_checkpoint, save_checkpoint
from .training import gaussian_source, toy_source, train
from .transport import cost_matrix, entropic_objective, entropy, sample_coupling, sinkhorn

log = logging.getLogger("d3re")

COMMANDS = ("gen-data", "train", "estimate", "mi", "density-grid", "sample-interpolant",
            "sinkhorn-report", "nfe-report", "verify")


# ---------------------------------------------------------------------------
# artifact helpers

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_points(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.asarray([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg, out, command):
        self.cfg = cfg
        self.out = out
        self.command = command
        self.config_hash = cfg.hash()
        os.makedirs(out, exist_ok=True)
        self.manifest_path = os.path.join(out, "manifest.json")

    def path(self, name):
        return os.path.join(self.out, name)

    def stamp(self):
        return {"config_hash": self.config_hash, "seed": self.cfg.seed, "command": self.command}

    def record(self, *names):
        manifest = {"artifacts": {}, "configs": {}}
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path) as fh:
                manifest = json.load(fh)
        manifest["configs"][self.config_hash] = json.loads(self.cfg.canonical())
        for name in names:
            manifest["artifacts"][name] = {**self.stamp(), "sha256": _sha256(self.path(name))}
        write_json(self.manifest_path, manifest)


def _sources(cfg, q0, q1):
    src0 = gaussian_source(q0)
    src1 = toy_source(cfg.data.name) if cfg.data.kind == "toy" else gaussian_source(q1)
    return src0, src1


def _score_fn(cfg, args, q0, q1):
    """Model score from a checkpoint, or the analytic marginal score in oracle mode."""
    if cfg.score == "oracle":
        if q1 is None:
            raise ConfigurationError("oracle score mode needs Gaussian endpoints")
        ic = cfg.interpolant.build()
        return lambda x, t: gaussian_marginal_time_score(ic, q0, q1, t, x), None
    ckpt = args.checkpoint or os.path.join(args.out, "model.ckpt")
    if not os.path.exists(ckpt):
        raise ConfigurationError(f"checkpoint {ckpt} not found (run `train` first or use score=oracle)")
    model, header = load_checkpoint(ckpt)
    return model, header


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    g0 = rngmod.stream(cfg.seed, "data0")
    g1 = rngmod.stream(cfg.seed, "data1")
    x0 = gaussian_sample(q0, cfg.n_samples, g0)
    x1 = toy2d_sample(cfg.data.name, cfg.n_samples, g1) if q1 is None else \
        gaussian_sample(q1, cfg.n_samples, g1)
    header = [f"x{i}" for i in range(dim)]
    write_csv(run.path("data0.csv"), header, x0)
    write_csv(run.path("data1.csv"), header, x1)
    run.record("data0.csv", "data1.csv")
    return {"data0": run.path("data0.csv"), "data1": run.path("data1.csv"), "n": cfg.n_samples}


def cmd_train(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    tc = cfg.train_config()
    src0, src1 = _sources(cfg, q0, q1)
    oracle = None
    if tc.loss == "L1":
        if q1 is None:
            raise ConfigurationError("L1 loss needs Gaussian endpoints")
        ic = tc.interpolant
        oracle = lambda x, t: gaussian_marginal_time_score(ic, q0, q1, t, x)
    model, hist = train(tc, src0, src1, dim, oracle=oracle)
    save_checkpoint(run.path("model.ckpt"), model, iteration=len(hist.loss),
                    extra={"config_hash": run.config_hash, "train": tc.to_dict()})
    write_csv(run.path("history.csv"), ["iteration", "loss", "wall_ms"], hist.rows())
    run.record("model.ckpt", "history.csv")
    final = float(np.mean(hist.loss[-100:])) if hist.loss else None
    return {"checkpoint": run.path("model.ckpt"), "iterations": len(hist.loss), "final_loss": final}


def cmd_estimate(cfg, args, run):
    if not args.points:
        raise ConfigurationError("estimate needs --points <csv>")
    q0, q1, dim = cfg.data.endpoints()
    pts = read_points(args.points)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ConfigurationError(f"points must have {dim} columns")
    score, _ = _score_fn(cfg, args, q0, q1)
    rep = estimate_logratio(score, pts, cfg.integrator.build())
    _check_finite(rep.log_ratio)
    header = [f"x{i}" for i in range(dim)] + ["log_ratio", "nfe"]
    write_csv(run.path("log_ratio.csv"), header,
              [(*p, v, int(n)) for p, v, n in zip(pts, rep.log_ratio, rep.nfe)])
    run.record("log_ratio.csv")
    return {"output": run.path("log_ratio.csv"), "n": int(pts.shape[0])}


def cmd_mi(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    if q1 is None:
        raise ConfigurationError("mi needs Gaussian endpoints (data.kind = mi or gaussian)")
    score, _ = _score_fn(cfg, args, q0, q1)
    samples = gaussian_sample(q1, cfg.n_samples, rngmod.stream(cfg.seed, "eval"))
    rep = estimate_logratio(score, samples, cfg.integrator.build())
    _check_finite(rep.log_ratio)
    lr = rep.log_ratio
    report = {
        "estimate": float(lr.mean()),
        "stderr": float(lr.std(ddof=1) / np.sqrt(lr.size)) if lr.size > 1 else None,
        "n": int(lr.size),
        "true_mi": gaussian_kl(q1, q0),
        "nfe": {"median": float(np.median(rep.nfe)), "mean": float(np.mean(rep.nfe)),
                "max": int(np.max(rep.nfe)), "total": int(np.sum(rep.nfe))},
        "score": cfg.score,
        **run.stamp(),
    }
    write_json(run.path("mi.json"), report)
    run.record("mi.json")
    return report


def cmd_density_grid(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    if dim != 2:
        raise ConfigurationError("density-grid needs 2-D data")
    score, _ = _score_fn(cfg, args, q0, q1)
    bounds = tuple(tuple(b) for b in cfg.grid.bounds)
    grid, xs, ys = density_grid(score, q0, bounds, cfg.grid.resolution, cfg.integrator.build())
    _check_finite(grid)
    rows = [(x, y, grid[i, j]) for i, x in enumerate(xs) for j, y in enumerate(ys)]
    write_csv(run.path("density_grid.csv"), ["x0", "x1", "log_density"], rows)
    meta = {"bounds": [list(b) for b in bounds], "resolution": cfg.grid.resolution,
            "order": "row-major, x0 slowest", "mass": grid_mass(grid, xs, ys), **run.stamp()}
    write_json(run.path("density_grid.json"), meta)
    run.record("density_grid.csv", "density_grid.json")
    return meta


def cmd_sample_interpolant(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    ic = cfg.interpolant.build()
    n = cfg.n_trajectories
    g0 = rngmod.stream(cfg.seed, "data0")
    g1 = rngmod.stream(cfg.seed, "data1")
    x0 = gaussian_sample(q0, n, g0)
    x1 = toy2d_sample(cfg.data.name, n, g1) if q1 is None else gaussian_sample(q1, n, g1)
    deq = rngmod.stream(cfg.seed, "dequant")
    x0 = dequantize(x0, ic.effective_eps, deq)
    x1 = dequantize(x1, ic.effective_eps, deq)
    if ic.uses_coupling:
        cp = sinkhorn(cost_matrix(x0, x1), reg=2 * ic.gamma2)
        x0, x1, _, _ = sample_coupling(cp, x0, x1, n, rngmod.stream(cfg.seed, "coupling"))
    # one Brownian bridge per trajectory, so each path is continuous in t and
    # its marginal at every t matches the bridge kernel
    ts = np.linspace(0.0, 1.0, cfg.n_times)
    noise = rngmod.stream(cfg.seed, "noise")
    dW = noise.standard_normal((ts.size - 1, n, dim)) * np.sqrt(np.diff(ts))[:, None, None]
    W = np.concatenate([np.zeros((1, n, dim)), np.cumsum(dW, axis=0)])
    B = np.sqrt(ic.effective_gamma2) * (W - ts[:, None, None] * W[-1])
    rows = []
    for k, t in enumerate(ts):
        a, b, _, _ = schedule_eval(ic.schedule, float(t))
        xt = a * x0 + b * x1 + B[k]
        rows.extend((j, float(t), *xt[j]) for j in range(n))
    write_csv(run.path("trajectories.csv"), ["trajectory", "t"] + [f"x{i}" for i in range(dim)], rows)
    run.record("trajectories.csv")
    return {"output": run.path("trajectories.csv"), "rows": len(rows)}


def cmd_sinkhorn_report(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    B = cfg.train.batch_size
    src0, src1 = _sources(cfg, q0, q1)
    x0 = src0(B, rngmod.stream(cfg.seed, "data0"))
    x1 = src1(B, rngmod.stream(cfg.seed, "data1"))
    reg = 2.0 * cfg.interpolant.gamma2
    C = cost_matrix(x0, x1)
    cp = sinkhorn(C, reg=reg)
    indep = np.full(C.shape, 1.0 / C.size)
    report = {
        "objective": entropic_objective(cp.P, C, reg),
        "entropy": entropy(cp.P),
        "marginal_error": cp.marginal_error,
        "iterations": cp.iterations,
        "converged": cp.converged,
        "independent_objective": entropic_objective(indep, C, reg),
        "reg": reg,
        "batch_size": B,
        **run.stamp(),
    }
    write_json(run.path("sinkhorn.json"), report)
    run.record("sinkhorn.json")
    return report


def cmd_nfe_report(cfg, args, run):
    q0, q1, dim = cfg.data.endpoints()
    methods = [m.strip().upper() for m in (args.methods or "di,ddbi,dsbi").split(",") if m.strip()]
    base = cfg.interpolant
    src0, src1 = _sources(cfg, q0, q1)
    integ = Integrator("rk45", rtol=cfg.integrator.rtol, atol=cfg.integrator.atol)
    if dim == 2:
        pts = np.stack(np.meshgrid(np.linspace(-3, 3, 10), np.linspace(-3, 3, 10)), -1).reshape(-1, 2)
    else:
        pts = src1(100, rngmod.stream(cfg.seed, "eval"))
    report = {"methods": {}, "points": int(pts.shape[0]), **run.stamp()}
    for method in methods:
        sched = Schedule() if method == "DSBI" else base.build().schedule
        ic = InterpolantConfig(method, sched, base.gamma2, base.eps)
        model, hist = train(cfg.train_config(ic), src0, src1, dim)
        _, nfe = integrate_logratio(model, pts, integ)
        report["methods"][method] = {"median_nfe": float(np.median(nfe)),
                                     "mean_nfe": float(np.mean(nfe)),
                                     "final_loss": float(np.mean(hist.loss[-100:])) if hist.loss else None}
    write_json(run.path("nfe.json"), report)
    run.record("nfe.json")
    return report


def cmd_verify(cfg, args, run):
    if not os.path.exists(run.manifest_path):
        raise ConfigurationError(f"no manifest in {args.out}")
    with open(run.manifest_path) as fh:
        manifest = json.load(fh)
    bad = []
    for name, entry in manifest["artifacts"].items():
        stored = manifest["configs"].get(entry["config_hash"])
        ok = stored is not None and RunConfig.model_validate(stored).hash() == entry["config_hash"]
        path = run.path(name)
        ok = ok and os.path.exists(path) and _sha256(path) == entry["sha256"]
        if not ok:
            bad.append(name)
    return {"verified": not bad, "checked": len(manifest["artifacts"]), "failed": bad}


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "mi": cmd_mi,
    "density-grid": cmd_density_grid,
    "sample-interpolant": cmd_sample_interpolant,
    "sinkhorn-report": cmd_sinkhorn_report,
    "nfe-report": cmd_nfe_report,
    "verify": cmd_verify,
}


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("estimate produced non-finite values")


def build_parser():
    p = argparse.ArgumentParser(prog="d3re", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--points", help="CSV of query points (estimate)")
    p.add_argument("--checkpoint", help="model checkpoint (default <out>/model.ckpt)")
    p.add_argument("--methods", help="comma list for nfe-report, e.g. di,ddbi,dsbi")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        run = Run(cfg, args.out, args.command)
        result = HANDLERS[args.command](cfg, args, run)
    except (ValidationError, ConfigurationError, DomainError, json.JSONDecodeError,
            FileNotFoundError) as exc:
        return _fail(2, "configuration", str(exc))
    except (NonFiniteError, FloatingPointError) as exc:
        return _fail(3, "numeric", str(exc))
    except Exception as exc:  # noqa: BLE001
        return _fail(1, type(exc).__name__, str(exc))
    print(json.dumps(result, sort_keys=True, default=float))
    if args.command == "verify" and not result["verified"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
