"""Command-line front end: ``rieszlab <command> ... --out DIR``.

Every command writes a ``manifest.json`` listing its parameters, seed and
outputs; ``rieszlab replay DIR/manifest.json --out NEW`` re-runs it.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import Configuration, ModelParams, RandomStream, Window
from .energy import QuadratureSettings, energy_inequality_audit, evaluate
from .generators import GENERATOR_NAMES, make_generator, parse_kv
from .io import csv_text, json_text, svg_plot, write_text
from .rigidity import (discrepancy_stats, exterior_count_predictor, mann_kendall, shift_estimator,
                       uniformity_test, variance_curve)
from .sampler import (RejectionBudgetExceeded, SampleBatch, entropy_bound_check, estimate_log_partition,
                      exact_coulomb_batch, mcmc_sample, verify_partition_bounds)
from .transport import monotone_cost_to_lebesgue, window_cost


def thread_count() -> int:
    raw = os.environ.get("RIESZLAB_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def pmap(fn, items):
    """Order-preserving map over a pool capped by RIESZLAB_THREADS."""
    items = list(items)
    k = min(thread_count(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(k) as pool:
        return list(pool.map(fn, items))


def float_list(text: str) -> list:
    return [float(v) for v in str(text).split(",") if v.strip()]


class Run:
    """Output directory bookkeeping and manifest."""

    def __init__(self, command: str, args: argparse.Namespace, argv: list):
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.args = args
        self.argv = argv
        self.files = []
        self.timings = {}
        self.start = dt.datetime.now(dt.timezone.utc).isoformat()

    def write(self, name: str, text: str):
        write_text(self.out / name, text)
        self.files.append(name)

    def finish(self):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "out")}
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "parameters": params,
            "seed": params.get("seed"),
            "version": __version__,
            "start": self.start,
            "end": dt.datetime.now(dt.timezone.utc).isoformat(),
            "outputs": sorted(self.files),
            "timings": self.timings,
        }
        write_text(self.out / "manifest.json", json_text(manifest))


def read_batch(path: str) -> SampleBatch:
    text = Path(path).read_text(encoding="utf-8")
    return SampleBatch.from_jsonl(text)


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args, run: Run):
    params = parse_kv(args.set)
    for key in ("intensity", "law", "param", "margin", "a", "nmax"):
        v = getattr(args, key)
        if v is not None:
            params[key] = str(v)
    sampler = make_generator(args.process, params)
    window = Window.parse(args.window)
    stream = RandomStream(args.seed)
    configs = [sampler(window, stream.substream(i)) for i in range(args.samples)]
    run.write("configs.jsonl", "".join(c.to_json() + "\n" for c in configs))
    counts = [c.mass for c in configs]
    run.write("summary.json", json_text({"process": args.process, "params": params, "window": window.as_list(),
                                         "samples": args.samples, "mass": counts,
                                         "max_multiplicity": max((int(c.multiplicities.max()) for c in configs
                                                                  if len(c)), default=0)}))
    if configs and len(configs[0]):
        c = configs[0]
        x = c.positions
        disc = np.cumsum(c.multiplicities) - (x - window.left)
        run.write("discrepancy_profile.svg", svg_plot({"N[left,x] - (x-left)": (x, disc)},
                                                      f"{args.process}: first sample", "x", "discrepancy"))


def cmd_sample_riesz(args, run: Run):
    params = ModelParams(args.s, args.beta, args.n)
    stream = RandomStream(args.seed)
    method = args.method
    if method == "exact" and not params.is_coulomb:
        raise SystemExit("error: --method exact needs s = -1; the ordered-Gaussian representation "
                         "of the Gibbs measure holds only for the Coulomb case")
    batch = report = None
    if method == "exact":
        try:
            batch, report = exact_coulomb_batch(params, args.samples, stream, args.max_attempts)
        except RejectionBudgetExceeded as exc:
            warnings.warn(f"{exc}; falling back to MCMC", stacklevel=1)
            print(f"warning: {exc}; falling back to MCMC", file=sys.stderr)
    if batch is None:
        steps = args.steps if args.steps else args.samples * args.thin
        batch, report = mcmc_sample(params, steps, args.burn_in, args.thin, stream, chains=args.chains)
    run.write("samples.jsonl", batch.to_jsonl())
    rep = report.to_dict()
    run.timings["sampling"] = rep.pop("elapsed")
    run.write("report.json", json_text({"report": rep, "batch": batch.sidecar(),
                                        "mean_energy": float(np.mean(batch.energies))}))
    run.write("energies.csv", csv_text(["index", "energy"], enumerate(batch.energies)))
    run.write("energy_trace.svg", svg_plot({"H": (np.arange(len(batch)), batch.energies)},
                                           f"{batch.method} s={params.s} beta={params.beta} n={params.n}",
                                           "sample", "energy"))


def cmd_energy(args, run: Run):
    batch = read_batch(args.input)
    evaluators = ["pairwise", "baxter", "fourier"] if args.evaluator == "all" else [args.evaluator]
    quad = QuadratureSettings(tolerance=args.tol)

    def one(c: Configuration):
        n = args.n if args.n is not None else c.mass
        p = ModelParams(args.s, 1.0, n)
        return [evaluate(c, p, e, quad) for e in evaluators]

    reports = pmap(one, batch.configs)
    rows = [[i] + [r.value for r in reps] for i, reps in enumerate(reports)]
    run.write("energies.csv", csv_text(["index"] + evaluators, rows))
    run.timings["evaluation"] = sum(r.elapsed for reps in reports for r in reps)
    run.write("energies.json", json_text([[{k: v for k, v in r.to_dict().items() if k != "elapsed"} for r in reps]
                                          for reps in reports]))
    if args.audit:
        audit_rows = []
        for i, c in enumerate(batch.configs):
            n = args.n if args.n is not None else c.mass
            a = energy_inequality_audit(c, ModelParams(args.s, 1.0, n), quad)
            audit_rows += [(i, q, v) for q, v in a.rows()]
        run.write("audit.csv", csv_text(["index", "quantity", "value"], audit_rows))
    for k, e in enumerate(evaluators):
        vals = [reps[k].value for reps in reports]
        run.write(f"energy_{e}.svg", svg_plot({e: (np.arange(len(vals)), vals)}, f"{e} energy", "index", "H"))


def _cost_curve(configs, lengths, target, p):
    vals = np.array(pmap(lambda c: [window_cost(c, c.window.center, l, target, p) for l in lengths], configs))
    k = len(configs)
    se = vals.std(0, ddof=1) / math.sqrt(k) if k > 1 else np.full(len(lengths), np.nan)
    return vals.mean(0), se


def cmd_transport(args, run: Run):
    batch = read_batch(args.input)
    configs = batch.configs
    summary = {"p": args.p, "target": args.target, "samples": len(configs)}
    if args.box:
        reps = [monotone_cost_to_lebesgue(c, c.window, args.p) for c in configs]
        run.write("box_costs.csv", csv_text(["index", "total_cost", "cost_per_length"],
                                            [(i, r.total_cost, r.cost_per_length) for i, r in enumerate(reps)]))
        summary["box_mean_cost_per_length"] = float(np.mean([r.cost_per_length for r in reps]))
    lengths = float_list(args.lengths)
    if lengths:
        mean, se = _cost_curve(configs, lengths, args.target, args.p)
        run.write("cost_curve.csv", csv_text(["length", "mean_cost", "stderr", "samples"],
                                             [(l, m, s, len(configs)) for l, m, s in zip(lengths, mean, se)]))
        run.write("cost_curve.svg", svg_plot({"estimator": (lengths, mean)}, f"window cost, p={args.p}",
                                             "window length", "cost per unit length"))
        if len(lengths) >= 3:
            mk = mann_kendall(mean, "increasing")
            summary.update(curve_trend_pvalue=mk.pvalue, flat=not mk.rejects(0.05))
    run.write("summary.json", json_text(summary))


def _diag_variance(configs, args, run, kind):
    lengths = float_list(args.lengths)
    fn = variance_curve if kind == "variance" else discrepancy_stats
    curve = fn(configs, lengths)
    run.write(f"{kind}.csv", curve.to_csv())
    run.write(f"{kind}.svg", svg_plot({kind: (curve.lengths, curve.values)}, f"{kind} curve", "length", kind))
    mk = mann_kendall(curve.values, "increasing")
    out = {"trend_pvalue": mk.pvalue, "max": float(curve.values.max()),
           "slope": curve.slope(weighted=True)[0], "passed": not mk.rejects(0.05)}
    if kind == "variance":
        out["verdict"] = "hyperuniform (no trend)" if out["passed"] else "not hyperuniform"
    else:
        out["verdict"] = "bounded (no trend)" if out["passed"] else "growing"
    return out


def _diag_shift(configs, args, run):
    reps = [shift_estimator(c, c.window.left if args.origin is None else args.origin, args.depth)
            for c in configs]
    u = np.array([r.u for r in reps])
    run.write("shift.csv", csv_text(["index", "phi", "u", "consistency_gap", "stderr"],
                                    [(i, r.phi, r.u, r.consistency_gap, r.stderr) for i, r in enumerate(reps)]))
    hist, edges = np.histogram(u, bins=10, range=(0, 1))
    run.write("shift_histogram.csv", csv_text(["bin_left", "bin_right", "count"], zip(edges[:-1], edges[1:], hist)))
    run.write("shift.svg", svg_plot({"count": (0.5 * (edges[1:] + edges[:-1]), hist)}, "fractional shift",
                                    "u", "count"))
    test = uniformity_test(u)
    return {**test.to_dict(), "passed": test.passes(0.01)}


def _diag_rigidity(configs, args, run):
    reps = []
    for c in configs:
        dom = Window.centered(c.window.center, args.domain_length)
        reps.append(exterior_count_predictor(c, dom, args.depth_rigidity))
    run.write("rigidity.csv", csv_text(["index", "predicted", "actual", "depth", "difference", "ambiguous"],
                                       [(i, r.predicted, r.actual, r.depth, r.difference, r.ambiguous)
                                        for i, r in enumerate(reps)]))
    rate = float(np.mean([r.correct for r in reps]))
    diff = np.array([r.predicted - r.actual for r in reps])
    vals, cnt = np.unique(diff, return_counts=True)
    run.write("rigidity.svg", svg_plot({"trials": (vals, cnt)}, "predicted - actual", "error", "count"))
    return {"agreement_rate": rate, "ambiguous": int(sum(r.ambiguous for r in reps)),
            "passed": rate >= args.rigidity_threshold}


def _diag_transport(configs, args, run):
    lengths = float_list(args.lengths)
    mean, se = _cost_curve(configs, lengths, "lebesgue", args.p)
    run.write("transport.csv", csv_text(["length", "mean_cost", "stderr", "samples"],
                                        [(l, m, s, len(configs)) for l, m, s in zip(lengths, mean, se)]))
    run.write("transport.svg", svg_plot({"estimator": (lengths, mean)}, "window transport cost", "length", "cost"))
    mk = mann_kendall(mean, "increasing")
    return {"trend_pvalue": mk.pvalue, "plateau": float(mean[-1]), "passed": not mk.rejects(0.05)}


def cmd_diagnose(args, run: Run):
    batch = read_batch(args.input)
    configs = batch.configs
    if any(c.window is None for c in configs):
        raise SystemExit("error: diagnostics need configurations that carry a window")
    summary = {}
    for name in [d.strip() for d in args.diagnostics.split(",") if d.strip()]:
        if name in ("variance", "discrepancy"):
            summary[name] = _diag_variance(configs, args, run, name)
        elif name == "shift":
            summary[name] = _diag_shift(configs, args, run)
        elif name == "rigidity":
            summary[name] = _diag_rigidity(configs, args, run)
        elif name == "transport":
            summary[name] = _diag_transport(configs, args, run)
        else:
            raise SystemExit(f"error: unknown diagnostic {name!r}")
    run.write("summary.json", json_text(summary))


def _beta_grid(beta, points):
    return np.linspace(0.0, beta, points)


def cmd_logz(args, run: Run):
    params = ModelParams(args.s, args.beta, args.n)
    est = estimate_log_partition(params, _beta_grid(args.beta, args.grid_points), args.samples_per_point,
                                 RandomStream(args.seed))
    bounds = verify_partition_bounds(params, est.value)
    ent = entropy_bound_check(params, float(est.mean_energy[-1]), est.value)
    run.write("logz.json", json_text({"log_z": est.to_dict(), "bounds": bounds.to_dict(), "entropy": ent.to_dict()}))
    run.write("mean_energy.csv", csv_text(["beta", "mean_energy", "stderr"],
                                          zip(est.betas, est.mean_energy, est.stderr)))
    run.write("mean_energy.svg", svg_plot({"E[H]": (est.betas, est.mean_energy)}, "mean energy", "beta", "E[H]"))


def cmd_scan_beta(args, run: Run):
    betas = float_list(args.betas)
    if not betas or min(betas) <= 0:
        raise SystemExit("error: --betas needs positive values")
    stream = RandomStream(args.seed)
    rows = []
    for k, beta in enumerate(betas):
        params = ModelParams(args.s, beta, args.n)
        st = stream.substream(k)
        est = estimate_log_partition(params, _beta_grid(beta, args.grid_points), args.samples_per_point,
                                     st.substream(0))
        batch, _ = mcmc_sample(params, args.samples * args.thin, args.burn_in, args.thin, st.substream(1))
        plateau = float(np.mean([monotone_cost_to_lebesgue(c, params.box, 2.0).cost_per_length
                                 for c in batch.configs]))
        lengths = [l for l in range(1, args.n) if l <= 0.5 * args.n] or [0.5 * args.n]
        vmax = float(variance_curve(batch.configs, lengths).values.max()) if len(batch) >= 30 else math.nan
        rows.append((beta, float(batch.energies.mean()), est.value, plateau, vmax))
    header = ["beta", "mean_energy", "log_z", "transport_plateau", "variance_max"]
    run.write("scan.csv", csv_text(header, rows))
    arr = np.array(rows)
    run.write("scan.svg", svg_plot({"mean energy": (arr[:, 0], arr[:, 1]), "log Z": (arr[:, 0], arr[:, 2])},
                                   f"beta scan s={args.s} n={args.n}", "beta", "value"))


def cmd_selftest(args, run: Run):
    from .selftest import run_selftest

    checks = run_selftest(args.level)
    ok = all(c.passed for c in checks)
    run.timings.update({c.name: c.elapsed for c in checks})
    run.write("selftest.json", json_text({"level": args.level, "passed": ok,
                                          "checks": [{k: v for k, v in c.to_dict().items() if k != "elapsed"}
                                                     for c in checks]}))
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: observed {c.observed} expected {c.expected}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rieszlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rieszlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="sample a reference point process")
    g.add_argument("process", choices=GENERATOR_NAMES)
    g.add_argument("--window", default="0,100", help="left,right")
    g.add_argument("--samples", type=int, default=1)
    g.add_argument("--intensity", type=float)
    g.add_argument("--law", choices=("gaussian", "uniform", "laplace", "constant"))
    g.add_argument("--param", type=float, help="perturbation parameter")
    g.add_argument("--margin", type=float)
    g.add_argument("--a", help="mass law: zipf<exp>, dirac<n> or comma weights")
    g.add_argument("--nmax", type=int)
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="extra generator parameter")
    common(g)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample-riesz", help="sample the finite-volume Riesz gas")
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--method", choices=("mcmc", "exact"), default="mcmc")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--steps", type=int, default=0, help="sweeps after burn-in (default samples * thin)")
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--max-attempts", type=int, default=1_000_000)
    common(s)
    s.set_defaults(func=cmd_sample_riesz)

    e = sub.add_parser("energy", help="evaluate Hamiltonians of a batch")
    e.add_argument("--input", required=True)
    e.add_argument("--s", type=float, default=-1.0)
    e.add_argument("--n", type=int, help="box size (default: configuration mass)")
    e.add_argument("--evaluator", choices=("pairwise", "baxter", "fourier", "all"), default="pairwise")
    e.add_argument("--tol", type=float, default=1e-8)
    e.add_argument("--audit", action="store_true", help="also write the inequality audit")
    common(e, seed=False)
    e.set_defaults(func=cmd_energy)

    t = sub.add_parser("transport", help="transport costs of a batch")
    t.add_argument("--input", required=True)
    t.add_argument("--p", type=float, default=2.0)
    t.add_argument("--target", choices=("lebesgue", "lattice"), default="lebesgue")
    t.add_argument("--lengths", default="", help="comma list of window lengths")
    t.add_argument("--box", action="store_true", help="cost to Lebesgue on each configuration's own window")
    common(t, seed=False)
    t.set_defaults(func=cmd_transport)

    d = sub.add_parser("diagnose", help="rigidity diagnostics of a batch")
    d.add_argument("--input", required=True)
    d.add_argument("--diagnostics", default="variance")
    d.add_argument("--lengths", default=",".join(str(v) for v in range(10, 101, 10)))
    d.add_argument("--depth", type=int, default=20, help="shift estimator depth")
    d.add_argument("--origin", type=float, help="shift estimator origin (default window left)")
    d.add_argument("--domain-length", type=float, default=10.0)
    d.add_argument("--depth-rigidity", type=int, help="predictor depth (default automatic)")
    d.add_argument("--rigidity-threshold", type=float, default=0.9)
    d.add_argument("--p", type=float, default=2.0)
    common(d, seed=False)
    d.set_defaults(func=cmd_diagnose)

    z = sub.add_parser("logz", help="log partition function by thermodynamic integration")
    z.add_argument("--s", type=float, required=True)
    z.add_argument("--beta", type=float, required=True)
    z.add_argument("--n", type=int, required=True)
    z.add_argument("--grid-points", type=int, default=21)
    z.add_argument("--samples-per-point", type=int, default=2000)
    common(z)
    z.set_defaults(func=cmd_logz)

    b = sub.add_parser("scan-beta", help="observables over a list of beta values")
    b.add_argument("--s", type=float, required=True)
    b.add_argument("--betas", required=True, help="comma list")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--samples", type=int, default=200)
    b.add_argument("--thin", type=int, default=5)
    b.add_argument("--burn-in", type=int, default=500)
    b.add_argument("--grid-points", type=int, default=11)
    b.add_argument("--samples-per-point", type=int, default=500)
    common(b)
    b.set_defaults(func=cmd_scan_beta)

    st = sub.add_parser("selftest", help="run the built-in checks")
    st.add_argument("--level", choices=("fast", "full"), default="fast")
    common(st, seed=False)
    st.set_defaults(func=cmd_selftest)

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return ap


def _replace_out(argv, out):
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            argv[i + 1] = out
            return argv
        if a.startswith("--out="):
            argv[i] = f"--out={out}"
            return argv
    return argv + ["--out", out]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        stored = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        return main(_replace_out(stored["argv"], args.out))
    run = Run(args.command, args, argv)
    try:
        code = args.func(args, run)
    except (ValueError, RejectionBudgetExceeded) as exc:
        parser.exit(2, f"rieszlab {args.command}: error: {exc}\n")
    run.finish()
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
