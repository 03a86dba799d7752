"""Command-line front end.

Subcommands: phase | trajectory | free-energy | simulate | redtree | validate.

Every run writes its artifacts plus a manifest.json (config echo, generator
id, seed, per-file sha256, wall-clock, package version) into the output
directory; identical config + seed reproduces byte-identical CSV/JSON.
Exit codes: 0 ok, 1 validation failure, 2 usage, 3 numerical, 4 resource.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, dynamics, measures, painting, redtree, rngtools
from .errors import DomainError, NumericsError, ResourceError, UsageError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

ENV_OUT_DIR = "YULEPAINT_OUT"


def _fmt(x) -> str:
    """17-significant-digit float formatting for bit-faithful round-trips."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    seed: int
    out_dir: str
    workers: int = 1

    def to_dict(self):
        return {"subcommand": self.subcommand, "params": self.params,
                "seed": self.seed, "out_dir": self.out_dir,
                "workers": self.workers}


@dataclass
class RunManifest:
    config: RunConfig
    generator_id: str = rngtools.GENERATOR_ID
    outputs: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    def add(self, path: str):
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        self.outputs[os.path.basename(path)] = digest

    def write(self, out_dir: str):
        payload = {"config": self.config.to_dict(),
                   "generator_id": self.generator_id,
                   "seed": self.config.seed,
                   "outputs": self.outputs,
                   "wall_clock_seconds": round(self.wall_clock, 3),
                   "version": self.version}
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) if not isinstance(c, str) else c
                              for c in row) + "\n")


def _write_json(path, payload):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.bool_,)):
            return bool(o)
        raise TypeError(f"not serializable: {type(o)}")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


# ---------------------------------------------------------------------------
# SVG rendering (static, no timestamps)


PHASE_COLORS = {"pinned": "#7fb2e5", "critical": "#222222",
                "unpinned": "#e5a97f", "degenerate-boundary": "#888888"}


def _phase_svg(lams, ps, phases, width=480, height=420):
    lam_lo, lam_hi = float(lams.min()), float(lams.max())
    p_lo, p_hi = float(ps.min()), float(ps.max())
    sx = width / max(lam_hi - lam_lo, 1e-12)
    sy = height / max(p_hi - p_lo, 1e-12)
    cw = width / max(len(np.unique(lams)) - 1, 1) * 1.0
    ch = height / max(len(np.unique(ps)) - 1, 1) * 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width+60}" '
             f'height="{height+50}" viewBox="0 0 {width+60} {height+50}">',
             '<g transform="translate(40,10)">']
    for lam, p, ph in zip(lams, ps, phases):
        x = (lam - lam_lo) * sx
        y = height - (p - p_lo) * sy
        parts.append(f'<rect x="{x - cw/2:.2f}" y="{y - ch/2:.2f}" '
                     f'width="{cw:.2f}" height="{ch:.2f}" '
                     f'fill="{PHASE_COLORS[ph]}"/>')
    # critical curve p = lam - lam log lam over the visible window
    pts = []
    for lam in np.linspace(max(lam_lo, 1e-6), lam_hi, 200):
        p = dynamics.critical_p(float(lam))
        if p_lo <= p <= p_hi:
            pts.append(f"{(lam-lam_lo)*sx:.2f},{height-(p-p_lo)*sy:.2f}")
    if pts:
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                     'stroke="#000000" stroke-width="2"/>')
    parts.append('</g></svg>')
    return "\n".join(parts)


def _tree_svg(tree: "redtree.RedTree", width=600, height=600):
    """Time runs upward; leaves fan out uniformly in x."""
    leaf_order = {}
    for i in np.flatnonzero(tree.is_leaf):
        leaf_order[i] = len(leaf_order)
    n_leaves = max(len(leaf_order), 1)
    xs = np.zeros(tree.n_nodes)
    for i in range(tree.n_nodes - 1, -1, -1):
        if tree.is_leaf[i]:
            xs[i] = (leaf_order[i] + 0.5) / n_leaves
    for i in range(tree.n_nodes - 1, -1, -1):
        if not tree.is_leaf[i]:
            ch = np.flatnonzero(tree.parent == i)
            xs[i] = xs[ch].mean()
    h = tree.height
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">']
    for i in range(tree.n_nodes):
        x1 = xs[i] * (width - 20) + 10
        y1 = height - 10 - tree.birth[i] / h * (height - 20)
        y2 = height - 10 - tree.death[i] / h * (height - 20)
        parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x1:.2f}" '
                     f'y2="{y2:.2f}" stroke="#c03030" stroke-width="1"/>')
        if not tree.is_leaf[i]:
            ch = np.flatnonzero(tree.parent == i)
            xa = xs[ch].min() * (width - 20) + 10
            xb = xs[ch].max() * (width - 20) + 10
            parts.append(f'<line x1="{xa:.2f}" y1="{y2:.2f}" x2="{xb:.2f}" '
                         f'y2="{y2:.2f}" stroke="#c03030" stroke-width="1"/>')
    parts.append('</svg>')
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_phase(args, out_dir, manifest):
    if args.lam_steps < 1 or args.p_steps < 1:
        raise UsageError("grid must contain at least one point per axis")
    lams = np.linspace(args.lam_min, args.lam_max, args.lam_steps)
    ps = np.linspace(args.p_min, args.p_max, args.p_steps)
    rows, glam, gp, gphase = [], [], [], []
    for p in ps:
        for lam in lams:
            pt = dynamics.PhasePoint(float(p), float(lam))
            phase = dynamics.classify_phase(pt, args.tol)
            H = dynamics.conserved_H(pt) if lam > 0 else math.nan
            rows.append([lam, p, phase.value, H])
            glam.append(lam)
            gp.append(p)
            gphase.append(phase.value)
    path = os.path.join(out_dir, "phase.csv")
    _write_csv(path, ["lambda", "p", "phase", "H"], rows)
    manifest.add(path)
    if args.svg:
        spath = os.path.join(out_dir, "phase.svg")
        with open(spath, "w") as fh:
            fh.write(_phase_svg(np.array(glam), np.array(gp), gphase))
        manifest.add(spath)
    return EXIT_OK


def cmd_trajectory(args, out_dir, manifest):
    pt = dynamics.PhasePoint(args.p, args.lam)
    traj = dynamics.integrate_dynamics(pt, args.t_max)
    rows = list(zip(traj.t, traj.p, traj.lam, traj.rho, np.abs(traj.h_error)))
    path = os.path.join(out_dir, "trajectory.csv")
    _write_csv(path, ["t", "p", "lambda", "rho", "H_error"], rows)
    manifest.add(path)
    return EXIT_OK


def _fit_line(xs, ys):
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def cmd_free_energy(args, out_dir, manifest):
    lam = args.lam
    if not (0.0 < lam < math.e):
        raise UsageError("lambda must lie in (0, e) for the asymptote sweep")
    gaps = np.array([float(g) for g in args.gaps.split(",")])
    if np.any(gaps <= 0.0):
        raise UsageError("gaps must be positive")
    pc = dynamics.critical_p(lam) if lam > 1.0 else 1.0
    rows, Fs = [], []
    for g in gaps:
        p = pc - g
        pt = dynamics.PhasePoint(float(p), lam)
        if dynamics.classify_phase(pt) is not dynamics.Phase.PINNED:
            rows.append([p, g, 0.0, math.nan])
            Fs.append(0.0)
            continue
        F = dynamics.free_energy_quadrature(pt).value
        shape = dynamics.asymptote_prediction(lam, float(p))
        rows.append([p, g, F, shape])
        Fs.append(F)
    path = os.path.join(out_dir, "free_energy.csv")
    _write_csv(path, ["p", "gap", "F", "asymptote_shape"], rows)
    manifest.add(path)

    Fs = np.array(Fs)
    if lam > 1.0:
        slope, icpt, r2 = _fit_line(gaps ** -0.5, np.log(Fs))
        target = -math.pi * math.sqrt(2.0 * lam)
        kind = "logF_vs_inverse_sqrt_gap"
    elif lam == 1.0:
        slope, icpt, r2 = _fit_line(gaps ** -0.5, np.log(Fs) - (2.0 / 3.0) * np.log(gaps))
        target = -math.pi / math.sqrt(2.0)
        kind = "log(F*gap^-2/3)_vs_inverse_sqrt_gap"
    else:
        slope, icpt, r2 = _fit_line(np.log(gaps), np.log(Fs))
        target = 1.0 / (1.0 - lam)
        kind = "loglog"
    fit = {"lambda": lam, "kind": kind, "slope": slope,
           "intercept_logC": icpt, "r_squared": r2, "target_slope": target,
           "relative_slope_error": slope / target - 1.0}
    fpath = os.path.join(out_dir, "fit_report.json")
    _write_json(fpath, fit)
    manifest.add(fpath)
    return EXIT_OK


def _parse_pmf(spec: str) -> painting.DiscretePmf:
    try:
        entries = {}
        for item in spec.split(","):
            k, v = item.split(":")
            entries[int(k)] = float(v)
        return painting.DiscretePmf.from_dict(entries)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad pmf spec {spec!r}; use e.g. '0:0.8,2:0.2'") from exc


def _paint_worker(job):
    p0, lam0, t, reps, seed, r = job
    rng = rngtools.replica_stream(seed, r)
    sample, summary = painting.monte_carlo_root_law(p0, lam0, t, reps, rng)
    return sample.values, summary


def cmd_simulate(args, out_dir, manifest):
    seed = args.seed
    if args.kind == "paint":
        jobs = []
        per = args.replicas // args.workers
        extra = args.replicas - per * args.workers
        for r in range(args.workers):
            reps = per + (1 if r < extra else 0)
            if reps:
                jobs.append((args.p, args.lam, args.t, reps, seed, r))
        if args.workers > 1:
            import concurrent.futures
            with concurrent.futures.ProcessPoolExecutor(args.workers) as ex:
                results = list(ex.map(_paint_worker, jobs))
        else:
            results = [_paint_worker(j) for j in jobs]
        values = np.sort(np.concatenate([v for v, _ in results]))
        summary = results[0][1]
        for _, s in results[1:]:
            summary = summary.merge(s)
        sample = measures.EmpiricalSample(values, seed, rngtools.GENERATOR_ID)
        traj = dynamics.integrate_dynamics(dynamics.PhasePoint(args.p, args.lam), args.t)
        p_t, lam_t, _ = traj.eval(args.t)
        target = measures.ExpMixture(float(p_t), float(lam_t))
        ks = measures.ks_distance(sample, target)
        crit = measures.ks_critical_value(sample.count, level=0.01)
        payload = {"kind": "paint", "summary": summary.to_dict(),
                   "exact_marginal": {"p": float(p_t), "lambda": float(lam_t)},
                   "ks": {"distance": ks, "critical_1pct": crit,
                          "pass": ks < crit}}
    elif args.kind == "particles":
        rng = rngtools.replica_stream(seed, 0)
        mu0 = (_parse_pmf(args.pmf) if args.pmf
               else measures.ExpMixture(args.p, args.lam))
        system = painting.simulate_particles(mu0, args.n_particles, args.t, rng)
        values = np.sort(system.positions)
        sample = measures.EmpiricalSample(values, seed, rngtools.GENERATOR_ID)
        summary = painting.ReplicaSummary.from_values(values)
        payload = {"kind": "particles", "summary": summary.to_dict()}
        if args.pmf is None:
            traj = dynamics.integrate_dynamics(
                dynamics.PhasePoint(args.p, args.lam), args.t)
            p_t, lam_t, _ = traj.eval(args.t)
            ks = measures.ks_distance(sample,
                                      measures.ExpMixture(float(p_t), float(lam_t)))
            payload["exact_marginal"] = {"p": float(p_t), "lambda": float(lam_t)}
            payload["ks"] = {"distance": ks,
                             "critical_1pct": measures.ks_critical_value(
                                 sample.count, level=0.01),
                             "note": "raw one-sample KS; particle output is "
                                     "exchangeable, not i.i.d."}
    elif args.kind == "discrete":
        pmf = _parse_pmf(args.pmf or "0:0.8,2:0.2")
        rng = rngtools.replica_stream(seed, 0)
        exact = painting.discrete_parking_iterate(pmf, args.height)
        sample = painting.discrete_parking_sample(pmf, args.height,
                                                  args.replicas, rng)
        values = sample.values
        cg = painting.cegm_criterion(pmf)
        epath = os.path.join(out_dir, "exact_pmf.csv")
        _write_csv(epath, ["value", "probability"],
                   list(zip(range(exact.probs.size), exact.probs)))
        manifest.add(epath)
        payload = {"kind": "discrete",
                   "cegm": {"decision": cg.decision,
                            "weighted_sum": cg.weighted_sum,
                            "plain_sum": cg.plain_sum},
                   "exact_mean_rescaled": exact.mean() / 2 ** args.height,
                   "sample_mean_rescaled": float(values.mean()) / 2 ** args.height}
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown kind {args.kind}")

    spath = os.path.join(out_dir, "sample.csv")
    _write_csv(spath, ["value"], [[v] for v in values])
    manifest.add(spath)
    jpath = os.path.join(out_dir, "summary.json")
    _write_json(jpath, payload)
    manifest.add(jpath)
    return EXIT_OK


def cmd_redtree(args, out_dir, manifest):
    rng = rngtools.replica_stream(args.seed, 0)
    if args.limit:
        rows = []
        for r in range(args.replicas):
            rep_rng = rngtools.replica_stream(args.seed, r)
            tree = redtree.simulate_limit_tree(args.x0, args.eps, rep_rng)
            st = redtree.leaf_stats(tree)
            rows.append([r, st.n_leaves, st.total_mass, tree.first_branch_time])
        summary = {"mode": "limit", "eps": args.eps}
        tree_for_svg = redtree.simulate_limit_tree(args.x0, args.eps, rng)
    else:
        traj = dynamics.integrate_dynamics(
            dynamics.PhasePoint(args.p, args.lam), max(args.t, 2e4))
        n, m, fb = redtree.leaf_statistics_ensemble(args.x0, args.t, traj,
                                                    args.replicas, rng)
        rows = [[r, int(n[r]), m[r], fb[r]] for r in range(args.replicas)]
        gam = redtree.linearized_gammas(traj)
        scaled = np.sort(fb / args.t)
        cdfv = 1.0 - np.array([redtree.first_branching_survival(float(v), args.x0 / args.t)
                               for v in scaled])
        nn = scaled.size
        ks = float(max(np.max(np.arange(1, nn + 1) / nn - cdfv),
                       np.max(cdfv - np.arange(0, nn) / nn)))
        summary = {"mode": "finite-t",
                   "gamma1": gam.gamma1, "gamma2": gam.gamma2,
                   "mean_N_over_t2": float(n.mean()) / args.t ** 2,
                   "mean_M_over_t2": float(m.mean()) / args.t ** 2,
                   "laplace": {
                       "theta1": 1.0,
                       "mc": float(np.mean(np.exp(-n / args.t ** 2))),
                       "limit": redtree.limit_laplace(gam.gamma1, args.x0 / args.t)},
                   "first_branch_ks_vs_limit": ks}
        tree_for_svg = redtree.simulate_red_tree(args.x0, min(args.t, 200.0),
                                                 traj, rng)
    path = os.path.join(out_dir, "redtree.csv")
    _write_csv(path, ["replica", "N", "M", "first_branch_time"], rows)
    manifest.add(path)
    jpath = os.path.join(out_dir, "summary.json")
    _write_json(jpath, summary)
    manifest.add(jpath)
    if args.svg:
        spath = os.path.join(out_dir, "redtree.svg")
        with open(spath, "w") as fh:
            fh.write(_tree_svg(tree_for_svg))
        manifest.add(spath)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def _validate_measures(fast, seed):
    from .measures import ExpMixture
    rng = rngtools.replica_stream(seed, 0)
    n = 10 ** 4 if fast else 10 ** 5
    checks = []
    m = ExpMixture(0.2, 2.0)
    checks.append(("cdf_closed_form", abs(measures.cdf(m, 1.0)
                                          - (0.2 + 0.8 * -math.expm1(-2.0))) < 1e-12))
    conv = measures.convolve_self(m)
    checks.append(("convolution_mean_doubles",
                   abs(conv.mean() - 2 * m.mean()) < 1e-12))
    samp = measures.EmpiricalSample.from_values(measures.sample(m, rng, size=n))
    ks = measures.ks_distance(samp, m)
    checks.append(("sampling_ks_1pct", ks < measures.ks_critical_value(n, level=0.01)))
    return checks


def _validate_ode(fast, seed):
    checks = []
    traj = dynamics.integrate_dynamics(dynamics.PhasePoint(0.3, 2.2), 50.0)
    checks.append(("H_conservation_1e-10", float(np.max(np.abs(traj.h_error))) < 1e-10))
    traj = dynamics.integrate_dynamics(dynamics.PhasePoint(0.0, math.e), 1000.0)
    lam = traj.eval(1000.0)[1]
    stat = (float(lam) - 1 - 2e-3) * 1e6 / math.log(1000.0)
    checks.append(("critical_lambda_tail", abs(stat / (-8.0 / 3.0) - 1.0) < 0.25))
    fq = dynamics.free_energy_quadrature(dynamics.PhasePoint(0.3, 0.5)).value
    fo = dynamics.free_energy_ode_limit(dynamics.PhasePoint(0.3, 0.5), 40.0).value
    checks.append(("free_energy_cross_method", abs(fq / fo - 1.0) < 1e-5))
    checks.append(("fixed_point_residual",
                   dynamics.verify_fixed_point(dynamics.PhasePoint(0.5, 1.0), 2.0) < 1e-6))
    checks.append(("pde_weak_residual",
                   dynamics.verify_pde_weak(dynamics.PhasePoint(0.5, 1.0), 1.0, 3.0) < 1e-7))
    return checks


def _validate_painting(fast, seed):
    rng = rngtools.replica_stream(seed, 1)
    reps = 10 ** 4 if fast else 10 ** 5
    checks = []
    sample, summary = painting.monte_carlo_root_law(0.0, 1.0, 3.0, reps, rng)
    traj = dynamics.integrate_dynamics(dynamics.PhasePoint(0.0, 1.0), 3.0)
    p3, l3, _ = traj.eval(3.0)
    ks = measures.ks_distance(sample, measures.ExpMixture(float(p3), float(l3)))
    checks.append(("painting_marginal_ks", ks < measures.ks_critical_value(reps, level=0.01)))
    pmf = painting.DiscretePmf.from_dict({0: 0.8, 2: 0.2})
    cg = painting.cegm_criterion(pmf)
    checks.append(("cegm_equality", cg.decision == "unpinned_or_critical"
                   and abs(cg.weighted_sum - cg.plain_sum) < 1e-12))
    means = [painting.discrete_parking_iterate(pmf, k).mean() / 2 ** k
             for k in range(0, 13, 3)]
    checks.append(("discrete_rescaled_mean_decreasing",
                   bool(np.all(np.diff(means) < 0))))
    return checks


def _validate_redtree(fast, seed):
    rng = rngtools.replica_stream(seed, 2)
    reps = 10 ** 4 if fast else 10 ** 5
    checks = []
    r = redtree.limit_first_split_sample(0.0, reps, rng)
    target = 1.0 - 4.0 * math.exp(-2.0)
    se = math.sqrt(target * (1 - target) / reps)
    checks.append(("limit_first_branch_fraction",
                   abs(float(np.mean(r <= 0.5)) - target) < 3 * se))
    traj = dynamics.integrate_dynamics(dynamics.PhasePoint(0.0, math.e), 2e4)
    gam = redtree.linearized_gammas(traj, 1e4)
    checks.append(("gammas_positive", gam.gamma1 > 0 and gam.gamma2 > 0))
    eta = redtree.bessel_eta_ensemble(0.0, 500 if fast else 2000,
                                      10 ** 4 if fast else 10 ** 5, rng)
    checks.append(("bessel_eta_mean", abs(float(eta.mean()) - 1.0) < 0.01))
    return checks


VALIDATE_SUITES = {"measures": _validate_measures, "ode": _validate_ode,
                   "painting": _validate_painting, "redtree": _validate_redtree}


def cmd_validate(args, out_dir, manifest):
    if args.suite == "all":
        suites = list(VALIDATE_SUITES)
    elif args.suite in VALIDATE_SUITES:
        suites = [args.suite]
    else:
        raise UsageError(f"unknown suite {args.suite!r}; "
                         f"choose from all, {', '.join(VALIDATE_SUITES)}")
    verdicts = {}
    ok = True
    for name in suites:
        checks = VALIDATE_SUITES[name](args.fast, args.seed)
        verdicts[name] = {cname: bool(passed) for cname, passed in checks}
        ok &= all(passed for _, passed in checks)
    path = os.path.join(out_dir, "validate.json")
    _write_json(path, {"suites": verdicts, "pass": ok})
    manifest.add(path)
    print(json.dumps({"suites": verdicts, "pass": ok}, indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# parser and entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="yulepaint",
        description="Exact dynamics and simulators for the painted-tree "
                    "depinning model")
    parser.add_argument("--config", help="TOML file with option defaults "
                                         "(explicit flags win)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=None,
                       help=f"output directory (default: ${ENV_OUT_DIR} or cwd)")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("phase", help="classify a (lambda, p) grid")
    common(p)
    p.add_argument("--lam-min", type=float, default=0.0)
    p.add_argument("--lam-max", type=float, default=3.0)
    p.add_argument("--lam-steps", type=int, default=61)
    p.add_argument("--p-min", type=float, default=0.0)
    p.add_argument("--p-max", type=float, default=0.999)
    p.add_argument("--p-steps", type=int, default=41)
    p.add_argument("--tol", type=float, default=dynamics.PHASE_TOL)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("trajectory", help="integrate the exact flow")
    common(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--t-max", type=float, default=50.0)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("free-energy", help="sweep F toward criticality")
    common(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--gaps", default="0.04,0.02,0.01,0.005,0.0025")
    p.set_defaults(func=cmd_free_energy)

    p = sub.add_parser("simulate", help="stochastic simulators")
    common(p)
    p.add_argument("--kind", choices=("paint", "particles", "discrete"),
                   required=True)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--t", type=float, default=3.0)
    p.add_argument("--replicas", type=int, default=10 ** 4)
    p.add_argument("--n-particles", type=int, default=10 ** 4)
    p.add_argument("--pmf", default=None, help="e.g. '0:0.8,2:0.2'")
    p.add_argument("--height", type=int, default=6,
                   help="iterations/tree height for kind=discrete")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("redtree", help="conditioned-tree ensembles")
    common(p)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=math.e)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--t", type=float, default=50.0)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--limit", action="store_true",
                   help="simulate the scaling-limit process instead")
    p.add_argument("--eps", type=float, default=0.01,
                   help="limit-process cutoff before time 1")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_redtree)

    p = sub.add_parser("validate", help="run consistency suites")
    common(p)
    p.add_argument("--suite", default="all")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def _apply_config(parser, argv):
    """Load TOML defaults; explicit command-line flags always win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        raise UsageError("--config needs a file argument")
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    flat = {}
    sub_name = next((a for a in argv if not a.startswith("-") and a != path), None)
    for key, val in data.items():
        if isinstance(val, dict):
            if key == sub_name:
                flat.update(val)
        else:
            flat[key] = val
    defaults = {k.replace("-", "_"): v for k, v in flat.items()}
    for action in parser._subparsers._group_actions:
        for name, sp in action.choices.items():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
        out_dir = args.out_dir or os.environ.get(ENV_OUT_DIR) or os.getcwd()
        os.makedirs(out_dir, exist_ok=True)
        config = RunConfig(
            subcommand=args.subcommand,
            params={k: v for k, v in vars(args).items()
                    if k not in ("func", "subcommand", "seed", "out_dir",
                                 "workers", "config")},
            seed=args.seed, out_dir=out_dir, workers=args.workers)
        manifest = RunManifest(config)
        start = time.perf_counter()
        code = args.func(args, out_dir, manifest)
        manifest.wall_clock = time.perf_counter() - start
        manifest.write(out_dir)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericsError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
