"""Command-line entry point: manifests, seed streams, experiments, artifacts.

Every experiment is described by a manifest (JSON-serializable, hashed);
each output file carries the manifest hash on its first line so artifacts
can be traced back to the exact run description.  Exit status: 0 when all
embedded assertions pass, 1 on an assertion failure (with a machine
readable failure report), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .process import Configuration, ModelParams, mu_k_calibrate, sample_stationary_batch, simulate_X
from .spectral import decay_check
from .streams import seed_stream

__all__ = ["ExperimentManifest", "main", "run"]


@dataclass
class ExperimentManifest:
    kind: str
    n: int = 0
    lam: float = 0.0
    alpha1: float = 1.0
    schedule: list = field(default_factory=list)  # for sweeps: [[N, lam, regime], ...]
    t_grid: list = field(default_factory=list)
    trajectories: int = 1000
    epsilon: float = 0.25
    seed: int = 0
    regime: str = ""
    extra: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentManifest":
        return cls(**json.loads(text))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def params(self) -> ModelParams:
        return ModelParams(N=self.n, lam=self.lam, alpha1=self.alpha1)


@dataclass
class RunContext:
    """Execution details deliberately kept out of the manifest (and its hash):
    outputs must be byte-identical for a fixed manifest regardless of these."""

    out_dir: str = "."
    threads: int = 1


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError("refusing to write a non-finite value")
        return repr(float(v))
    return str(v)


def write_csv(path: str, manifest: ExperimentManifest, header: list[str], rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest: {manifest.hash}\r\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: str, manifest: ExperimentManifest, payload: dict):
    payload = dict(payload)
    payload["manifest_hash"] = manifest.hash
    payload["manifest"] = json.loads(manifest.to_json())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _fail(manifest: ExperimentManifest, ctx: RunContext, reasons: list[str]) -> int:
    report = {"status": "fail", "reasons": reasons}
    path = os.path.join(ctx.out_dir, f"{manifest.kind}_failure.json")
    write_json(path, manifest, report)
    print(json.dumps(report), file=sys.stderr)
    return 1


# --- experiments -----------------------------------------------------------

def _exp_simulate(m: ExperimentManifest, ctx: RunContext) -> int:
    p = m.params()
    t_grid = np.asarray(m.t_grid, dtype=float)
    c0 = Configuration.maximal(p)
    mean = np.zeros((t_grid.size, p.N + 1))
    rows = []
    for i in range(m.trajectories):
        _, snaps = simulate_X(c0, p, float(t_grid[-1]) + 1e-9, seed_stream(m.seed, i), obs_times=t_grid)
        mean += snaps
        if i == 0:
            for j, t in enumerate(t_grid):
                for k in range(p.N + 1):
                    rows.append((t, k, snaps[j, k]))
    mean /= m.trajectories
    write_csv(os.path.join(ctx.out_dir, "trajectory.csv"), m, ["t", "k", "x_k"], rows)
    write_json(os.path.join(ctx.out_dir, "simulate_summary.json"), m, {
        "status": "pass",
        "t_grid": t_grid.tolist(),
        "mean_heights": mean.tolist(),
    })
    return 0


def _exp_stationary_test(m: ExperimentManifest, ctx: RunContext) -> int:
    from scipy import stats

    from .special import reg_beta_cdf

    p = m.params()
    rng = seed_stream(m.seed, 0)
    heights = sample_stationary_batch(p, m.trajectories, rng)
    ks_sites = m.extra.get("sites") or [p.N // 4, p.N // 2, 3 * p.N // 4]
    results = []
    for k in ks_sites:
        a, b = p.marginal_shapes(int(k))
        pv = stats.kstest(heights[:, int(k)] / p.N, lambda z, a=a, b=b: np.array(
            [reg_beta_cdf(a, b, zi) for zi in np.atleast_1d(z)])).pvalue
        results.append({"k": int(k), "p_value": float(pv)})
    write_json(os.path.join(ctx.out_dir, "stationary_test.json"), m,
               {"status": "pass" if all(r["p_value"] > 0.01 for r in results) else "fail",
                "tests": results})
    if not all(r["p_value"] > 0.01 for r in results):
        return _fail(m, ctx, [f"KS p-value {r['p_value']:.4g} at k={r['k']}" for r in results if r["p_value"] <= 0.01])
    return 0


def _exp_decay(m: ExperimentManifest, ctx: RunContext) -> int:
    p = m.params()
    rep = decay_check(p, np.asarray(m.t_grid, dtype=float), m.trajectories, seed_stream(m.seed, 0))
    payload = {
        "params": {"N": p.N, "lambda": p.lam, "alpha1": p.alpha1},
        "slope": rep.slope, "ci_low": rep.ci_low, "ci_high": rep.ci_high,
        "gamma_N": rep.gamma, "excluded_points": rep.n_excluded,
    }
    ok = rep.ci_low <= rep.gamma <= rep.ci_high
    payload["status"] = "pass" if ok else "fail"
    write_json(os.path.join(ctx.out_dir, "decay.json"), m, payload)
    if not ok:
        return _fail(m, ctx, [f"gamma_N {rep.gamma} outside slope CI [{rep.ci_low}, {rep.ci_high}]"])
    return 0


def _exp_coupling(m: ExperimentManifest, ctx: RunContext) -> int:
    from .coupling import simulate_coupled
    from .process import sample_stationary

    p = m.params()
    t_end = float(m.t_grid[-1]) if m.t_grid else 1.2 * 4.0 * p.N / max(p.lam, 1e-9)
    rows = []
    merged_count = 0
    for i in range(m.trajectories):
        rng = seed_stream(m.seed, i)
        lower = sample_stationary(p, rng)
        rec = simulate_coupled(Configuration.maximal(p), lower, p, t_end, rng)
        merged_count += rec.merged
        rows.append((i, m.seed, rec.merge_time if rec.merged else math.inf, bool(rec.merged)))
    safe_rows = [(i, s, (mt if math.isfinite(mt) else -1.0), mg) for i, s, mt, mg in rows]
    write_csv(os.path.join(ctx.out_dir, "coalescence.csv"), m,
              ["trajectory", "seed", "merge_time", "merged"], safe_rows)
    write_json(os.path.join(ctx.out_dir, "coupling_summary.json"), m,
               {"status": "pass", "merged_fraction": merged_count / m.trajectories,
                "t_end": t_end})
    return 0


def _exp_hydro_naive(m: ExperimentManifest, ctx: RunContext) -> int:
    from .hydro import barrier_profiles_naive, naive_front

    p = m.params()
    t = float(m.t_grid[-1]) if m.t_grid else 0.5
    rep = naive_front(p, t, m.trajectories, seed_stream(m.seed, 0))
    f_minus, f_plus = barrier_profiles_naive(p, t)
    sandwich_ok = bool(np.all(f_minus <= rep.g_mean + 1e-9) and np.all(rep.g_mean <= f_plus + 1e-9))
    rows = [(t, rep.x_grid[k], rep.g_mean[k], rep.g_se[k], f_minus[k], f_plus[k])
            for k in range(p.N + 1)]
    write_csv(os.path.join(ctx.out_dir, "naive_front.csv"), m,
              ["t", "x", "g_mean", "se", "f_minus", "f_plus"], rows)
    payload = {"front_location": rep.front_location, "sharpness": rep.sharpness,
               "frac_low_ok": rep.frac_low_ok, "frac_high_ok": rep.frac_high_ok,
               "sandwich_ok": sandwich_ok,
               "status": "pass" if sandwich_ok else "fail"}
    write_json(os.path.join(ctx.out_dir, "naive_front.json"), m, payload)
    if not sandwich_ok:
        return _fail(m, ctx, ["barrier sandwich violated"])
    return 0


def _exp_hydro_transformed(m: ExperimentManifest, ctx: RunContext) -> int:
    from .hydro import empirical_transformed_profile

    p = m.params()
    t = float(m.t_grid[-1]) if m.t_grid else 2.0
    eps = m.epsilon
    prof = empirical_transformed_profile(p, t, m.trajectories, seed_stream(m.seed, 0))
    sel = prof.x_grid >= eps
    sup_dist = float(np.abs(prof.mean_T_X - prof.lax)[sel].max())
    rows = [(t, prof.x_grid[k], prof.lax[k], prof.T_mean_X[k], prof.mean_T_X[k],
             prof.mean_T_M[k], prof.se_T_X[k]) for k in range(p.N + 1)]
    write_csv(os.path.join(ctx.out_dir, "transformed_profile.csv"), m,
              ["t", "x", "S", "emp_TmeanX", "emp_meanTX", "emp_meanTM", "se"], rows)
    write_json(os.path.join(ctx.out_dir, "transformed_profile.json"), m,
               {"status": "pass", "sup_distance_to_S": sup_dist, "epsilon": eps})
    return 0


def _exp_schemes(m: ExperimentManifest, ctx: RunContext) -> int:
    from .hydro import SchemeKind, exact_fX, initial_profile, integrate_scheme, lax_solution

    p = m.params()
    t = float(m.t_grid[-1]) if m.t_grid else 4.0
    eps = m.epsilon
    sched = mu_k_calibrate(p)
    kind_m = SchemeKind("M", mu=sched)
    _, prof_m = integrate_scheme(kind_m, initial_profile(kind_m, p), p, t, store_times=[t])
    f_x = exact_fX(p, t)
    x = np.arange(p.N + 1) / p.N
    s_vals = lax_solution(x, t)
    sel = x >= eps
    sup_x = float(np.abs(f_x - s_vals)[sel].max())
    sup_m = float(np.abs(prof_m[0] - s_vals)[sel].max())
    rows = [(t, x[k], f_x[k], prof_m[0][k], s_vals[k]) for k in range(p.N + 1)]
    write_csv(os.path.join(ctx.out_dir, "schemes.csv"), m, ["t", "x", "f_X", "f_M", "S"], rows)
    write_json(os.path.join(ctx.out_dir, "schemes.json"), m,
               {"status": "pass", "sup_X_to_S": sup_x, "sup_M_to_S": sup_m,
                "epsilon": eps, "regime_violation": sched.regime_violation})
    return 0


def _exp_mixing(m: ExperimentManifest, ctx: RunContext) -> int:
    from .mixing import InconsistentWindowError, mixing_window

    p = m.params()
    try:
        win = mixing_window(p, m.epsilon, np.asarray(m.t_grid, dtype=float),
                            m.trajectories, m.seed, threads=ctx.threads)
    except InconsistentWindowError as exc:
        return _fail(m, ctx, [str(exc)])
    payload = {"status": "pass", "epsilon": m.epsilon,
               "t_lower": win.t_lower, "t_upper": win.t_upper,
               "upper_curve": win.upper_curve.bound.tolist(),
               "lower_curve": win.lower_curve.bound.tolist(),
               "t_grid": win.t_grid.tolist()}
    write_json(os.path.join(ctx.out_dir, "mixing_window.json"), m, payload)
    return 0


def _exp_cutoff_sweep(m: ExperimentManifest, ctx: RunContext) -> int:
    from .mixing import cutoff_sweep

    schedule = [(int(n), float(lam), str(reg)) for n, lam, reg in m.schedule]
    rows = cutoff_sweep(schedule, m.epsilon, m.trajectories, m.seed, threads=ctx.threads)
    out = [(r.N, r.lam, r.regime, r.epsilon, r.t_lower, r.t_upper,
            r.normalizer, r.ratio_low, r.ratio_high) for r in rows]
    write_csv(os.path.join(ctx.out_dir, "cutoff_sweep.csv"), m,
              ["N", "lambda", "regime", "epsilon", "t_lower", "t_upper",
               "normalizer", "ratio_low", "ratio_high"], out)
    write_json(os.path.join(ctx.out_dir, "cutoff_sweep.json"), m,
               {"status": "pass", "rows": [asdict(r) for r in rows]})
    return 0


_EXPERIMENTS = {
    "simulate": _exp_simulate,
    "stationary-test": _exp_stationary_test,
    "decay": _exp_decay,
    "coupling": _exp_coupling,
    "hydro-naive": _exp_hydro_naive,
    "hydro-transformed": _exp_hydro_transformed,
    "schemes": _exp_schemes,
    "mixing": _exp_mixing,
    "cutoff-sweep": _exp_cutoff_sweep,
}


def run(manifest: ExperimentManifest, out_dir: str = ".", threads: int = 1) -> int:
    """Execute one experiment; returns the process exit status."""
    if manifest.kind not in _EXPERIMENTS:
        raise ValueError(f"unknown experiment kind {manifest.kind!r}")
    ctx = RunContext(out_dir=out_dir, threads=threads)
    os.makedirs(ctx.out_dir, exist_ok=True)
    return _EXPERIMENTS[manifest.kind](manifest, ctx)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adjwalk",
                                 description="Simulator and verification suite for the biased adjacent walk")
    ap.add_argument("--version", action="version", version=f"adjwalk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in _EXPERIMENTS:
        sp = sub.add_parser(kind)
        sp.add_argument("--manifest", help="JSON manifest file; flags override its values")
        sp.add_argument("--n", type=int)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--alpha1", type=float)
        sp.add_argument("--t-max", dest="t_max", type=float)
        sp.add_argument("--t", dest="t_max", type=float)
        sp.add_argument("--t-grid", dest="t_grid", type=str,
                        help="comma-separated times (overrides --t-max)")
        sp.add_argument("--trajectories", type=int)
        sp.add_argument("--samples", dest="trajectories", type=int)
        sp.add_argument("--eps", dest="epsilon", type=float)
        sp.add_argument("--epsilon", dest="epsilon", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="out_dir",
                        default=os.environ.get("ADJWALK_OUT_DIR"))
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--grid-points", dest="grid_points", type=int, default=9)
        sp.add_argument("--schedule", type=str,
                        help="sweep schedule as N:lam:regime,... entries")
    return ap


def _manifest_from_args(args) -> ExperimentManifest:
    m = ExperimentManifest(kind=args.command)
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            m = ExperimentManifest.from_json(fh.read())
        m.kind = args.command
    if args.n is not None:
        m.n = args.n
    if args.lam is not None:
        m.lam = args.lam
    if args.alpha1 is not None:
        m.alpha1 = args.alpha1
    if args.trajectories is not None:
        m.trajectories = args.trajectories
    if args.epsilon is not None:
        m.epsilon = args.epsilon
    if args.seed is not None:
        m.seed = args.seed
    if args.t_grid:
        m.t_grid = [float(v) for v in args.t_grid.split(",")]
    elif args.t_max is not None:
        m.t_grid = np.linspace(0.0, args.t_max, args.grid_points)[1:].tolist()
    if args.schedule:
        m.schedule = [[int(a), float(b), c] for a, b, c in
                      (entry.split(":") for entry in args.schedule.split(","))]
    return m


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        manifest = _manifest_from_args(args)
        if manifest.kind != "cutoff-sweep":
            manifest.params()  # validate early: usage error, not assertion failure
        elif not manifest.schedule:
            raise ValueError("cutoff-sweep needs --schedule")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(manifest, out_dir=args.out_dir or ".", threads=args.threads)
    except ValueError as exc:  # parameter/regime gates raised by library ops
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
