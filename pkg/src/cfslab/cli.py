"""Experiment runner.

Subcommands (each reads a plain-text config, writes CSV results, a JSON
manifest and, where it makes sense, an SVG plot into the output
directory):

  eigencheck    spectral-coincidence suite over random operator pairs
  vacuum-sweep  Dirac-sea regularization sweep, Lagrangian by causal class
  minimize      causal-action descent over a random discrete measure
  discrete-vp   Krein flow descent with the commutator residual
  sea-contour   contour sea projector convergence tables
  pexp-test     ordered-exponential convergence (Dyson orders vs ODE)

Artifacts contain no timestamps: a rerun with the same config and seed
reproduces them byte for byte (thread count only changes scheduling of
pure evaluations, not any output value).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, core, dirac_sea, discrete_vp, lightcone, measure_opt, perturbation, spectral
from .config import ConfigError, Field, parse_config, validate

_SCHEMAS = {
    "eigencheck": {
        "trials": Field("int", default=100),
        "dims": Field("int-list", default=[8, 16]),
        "spins": Field("int-list", default=[1, 2]),
    },
    "vacuum-sweep": {
        "lattice.extent": Field("float", required=True),
        "lattice.points": Field("int", required=True),
        "lattice.mode": Field("str", default="1+1"),
        "lattice.mass": Field("float", default=1.0),
        "sweep.eps": Field("float-list", required=True),
        "sweep.grid_points": Field("int", default=4),
        "sweep.grid_spacing": Field("float", default=1.0),
    },
    "minimize": {
        "system.dim": Field("int", required=True),
        "system.spin": Field("int", default=1),
        "system.atoms": Field("int", required=True),
        "opt.mu": Field("float", default=0.5),
        "opt.volume_target": Field("float", default=1.0),
        "opt.trace_target": Field("float", default=1.0),
        "opt.max_iters": Field("int", default=200),
        "opt.step_init": Field("float", default=0.05),
        "opt.grad_mode": Field("str", default="analytic-with-fd-check"),
    },
    "discrete-vp": {
        "space.points": Field("int", required=True),
        "space.block_dim": Field("int", default=4),
        "flow.particles": Field("int", required=True),
        "flow.mu": Field("float", default=0.25),
        "flow.max_iters": Field("int", default=500),
        "flow.step_init": Field("float", default=1.0),
    },
    "sea-contour": {
        "model.dim": Field("int", required=True),
        "model.n_neg": Field("int", required=True),
        "model.n_pos": Field("int", required=True),
        "model.strength": Field("float", default=0.05),
        "orders": Field("int-list", default=[0, 1, 2, 4, 8, 16]),
    },
    "pexp-test": {
        "path.dim": Field("int", default=3),
        "orders": Field("int-list", default=[2, 4, 6, 8, 10, 12]),
    },
}


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def _write_manifest(outdir: Path, command: str, cfg_text: str, cfg, seed: int, threads: int):
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "config": {k: v for k, v in sorted(cfg.items())},
        "seed": seed,
        "threads": threads,
        "versions": {
            "cfslab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": "%d.%d" % sys.version_info[:2],
        },
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plot_ratio(outdir: Path, records) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cfslab"  # keep element ids reproducible
    import matplotlib.pyplot as plt

    eps = [r["eps"] for r in records]
    ratio = [r["ratio"] for r in records]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(eps, ratio, "o-")
    ax.set_xlabel("regularization scale")
    ax.set_ylabel("spacelike / non-spacelike mean Lagrangian")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(outdir / "ratio.svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# command implementations


def _run_eigencheck(cfg, outdir: Path, seed: int, threads: int):
    rng = np.random.default_rng(seed)
    jobs = []
    for N in cfg["dims"]:
        for n in cfg["spins"]:
            for t in range(cfg["trials"]):
                jobs.append((N, n, rng.integers(0, 2**63)))

    def one(job):
        N, n, s = job
        r = np.random.default_rng(s)
        x = _random_point(N, n, r)
        y = _random_point(N, n, r)
        lam_fast = core.product_spectrum(x, y)
        full = x.matrix() @ y.matrix()
        lam_full = np.linalg.eigvals(full)
        lam_full = lam_full[np.argsort(-np.abs(lam_full))][: 2 * n]
        scale = max(np.max(np.abs(lam_fast)), 1e-300)
        return N, n, spectral.multiset_deviation(lam_fast, lam_full) / scale

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    worst: dict[tuple[int, int], float] = {}
    for N, n, dev in results:
        worst[(N, n)] = max(worst.get((N, n), 0.0), dev)
    rows = [(N, n, dev) for (N, n), dev in sorted(worst.items())]
    _write_csv(outdir / "eigencheck.csv", ["dim", "spin", "max_rel_deviation"], rows)
    return 0


def _random_point(N, n, rng) -> core.OperatorPoint:
    r = 2 * n
    V = rng.normal(size=(N, r)) + 1j * rng.normal(size=(N, r))
    nu = np.concatenate(
        [rng.uniform(0.3, 1.5, size=n), -rng.uniform(0.3, 1.5, size=n)]
    )
    return core.make_operator_point(V, nu, n)


def _run_vacuum_sweep(cfg, outdir: Path, seed: int, threads: int):
    lattice = dirac_sea.MomentumLattice(
        extent=cfg["lattice.extent"],
        points_per_axis=cfg["lattice.points"],
        mode=cfg["lattice.mode"],
        mass=cfg["lattice.mass"],
    )
    records = dirac_sea.suppression_sweep(
        lattice,
        cfg["sweep.eps"],
        grid_points=cfg["sweep.grid_points"],
        grid_spacing=cfg["sweep.grid_spacing"],
    )
    rows = [
        (r["eps"], r["mean_spacelike"], r["mean_nonspacelike"], r["ratio"])
        for r in records
    ]
    _write_csv(
        outdir / "sweep.csv",
        ["eps", "mean_spacelike_L", "mean_nonspacelike_L", "ratio"],
        rows,
    )
    _plot_ratio(outdir, records)
    return 0


def _run_minimize(cfg, outdir: Path, seed: int, threads: int):
    opt = measure_opt.OptConfig(
        mu=cfg["opt.mu"],
        volume_target=cfg["opt.volume_target"],
        trace_target=cfg["opt.trace_target"],
        max_iters=cfg["opt.max_iters"],
        step_init=cfg["opt.step_init"],
        seed=seed,
        grad_mode=cfg["opt.grad_mode"],
    )
    rng = np.random.default_rng(seed)
    system = measure_opt.random_feasible_system(
        cfg["system.dim"], cfg["system.spin"], cfg["system.atoms"], opt, rng
    )
    result = measure_opt.minimize_measure(system, opt, csv_path=outdir / "iterations.csv")
    final = core.CausalFermionSystem(cfg["system.dim"], cfg["system.spin"], result.measure)
    core.save_system(final, outdir / "measure.cfs")
    summary = [
        ("objective", result.objective_history[-1]),
        ("volume_residual", result.constraint_residuals[0]),
        ("trace_residual", result.constraint_residuals[1]),
        ("grad_norm", result.grad_norm),
        ("status", result.status),
    ]
    _write_csv(outdir / "summary.csv", ["key", "value"], summary)
    return 0


def _run_discrete_vp(cfg, outdir: Path, seed: int, threads: int):
    space, partition = discrete_vp.canonical_spacetime(
        cfg["space.points"], cfg["space.block_dim"]
    )
    rng = np.random.default_rng(seed)
    P0 = discrete_vp.random_admissible(space, cfg["flow.particles"], rng)
    res = discrete_vp.flow_descent(
        P0,
        partition,
        space,
        mu=cfg["flow.mu"],
        max_iters=cfg["flow.max_iters"],
        step_init=cfg["flow.step_init"],
    )
    rows = [
        (i, obj, resid)
        for i, (obj, resid) in enumerate(zip(res.objective_history, res.residual_history))
    ]
    _write_csv(outdir / "flow.csv", ["iter", "objective", "el_residual"], rows)
    return 0


def _run_sea_contour(cfg, outdir: Path, seed: int, threads: int):
    rng = np.random.default_rng(seed)
    model = perturbation.random_model(
        cfg["model.dim"],
        cfg["model.n_neg"],
        cfg["model.n_pos"],
        rng,
        perturbation=cfg["model.strength"],
    )
    contour = perturbation.Contour()
    oracle = perturbation.sea_projector_oracle(model, contour)
    D = perturbation.off_shell_operator(model)
    rows = []
    for order in cfg["orders"]:
        P = perturbation.contour_sea_projector(model, contour, order=order)
        defect = float(np.linalg.norm(P - oracle))
        bound = max(
            perturbation.neumann_resolvent(model, z, order).tail_bound
            for z in contour.points()[0]
        )
        resid = perturbation.dirac_identity_residual(P, D)
        rows.append((order, defect, bound, resid))
    _write_csv(
        outdir / "contour.csv",
        ["order", "defect_vs_oracle", "tail_bound", "dirac_residual"],
        rows,
    )
    return 0


def _run_pexp_test(cfg, outdir: Path, seed: int, threads: int):
    rng = np.random.default_rng(seed)
    d = cfg["path.dim"]
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A /= np.linalg.norm(A, 2)
    B /= np.linalg.norm(B, 2)

    def path(t):
        return np.cos(1.3 * t) * A + np.sin(0.7 * t) * t * B

    ref = lightcone.ordered_exp(path, 0.0, 1.0, method="ode-adaptive")
    rows = []
    for order in cfg["orders"]:
        val = lightcone.ordered_exp(path, 0.0, 1.0, method=f"dyson-order-{order}")
        rows.append((order, float(np.linalg.norm(val - ref))))
    _write_csv(outdir / "pexp.csv", ["order", "dyson_vs_ode"], rows)
    return 0


_RUNNERS = {
    "eigencheck": _run_eigencheck,
    "vacuum-sweep": _run_vacuum_sweep,
    "minimize": _run_minimize,
    "discrete-vp": _run_discrete_vp,
    "sea-contour": _run_sea_contour,
    "pexp-test": _run_pexp_test,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cfslab", description="causal fermion system experiments"
    )
    parser.add_argument("command", choices=sorted(_RUNNERS))
    parser.add_argument("--config", required=True, help="plain-text config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg_text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = validate(parse_config(cfg_text), _SCHEMAS[args.command])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.verbose:
        print(f"[cfslab] {args.command} -> {outdir}", file=sys.stderr)
    try:
        rc = _RUNNERS[args.command](cfg, outdir, args.seed, max(1, args.threads))
    except (ValueError, RuntimeError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1
    _write_manifest(outdir, args.command, cfg_text, cfg, args.seed, max(1, args.threads))
    return rc


if __name__ == "__main__":
    sys.exit(main())
