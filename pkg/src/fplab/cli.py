"""Batch front door: one subcommand per certified artifact.

Each subcommand writes CSV traces (and SVG line plots derived purely from
the CSVs) under ``<out-dir>/<subcommand>-<timestamp>/`` together with a
``manifest.json``, prints a pass/fail certificate summary, and exits with:

    0   success, every certificate holds
    2   a certificate failed (offending row printed)
    3   runtime abort (rejection-sampling trial cap)
    64  usage error

Configuration precedence: command-line flags > ``--config`` JSON file >
built-in defaults.  The JSON file maps flag names (dashes as underscores)
to values, e.g. ``{"alpha": 0.5, "iters": 10000}``.  ``FPLAB_THREADS``
caps the worker pool used for independent trace rows.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from datetime import datetime

import numpy as np

from . import gaussian as ga
from . import optim, potentials, quadrature, sampler
from .svgplot import plot_csv

EXIT_OK = 0
EXIT_CERT = 2
EXIT_ABORT = 3
EXIT_USAGE = 64

_ENVELOPE_SLACK = 1e-9  # relative; Gaussian curves meet their envelopes with equality


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse's own failures to exit 64
        raise UsageError(message)


def _thread_count() -> int:
    env = os.environ.get("FPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"FPLAB_THREADS must be an integer, got {env!r}") from exc
    return min(8, os.cpu_count() or 1)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def write_table(path, params: dict, header, rows) -> None:
    lines = ["# " + " ".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items()))]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class RunDir:
    """Output directory plus the manifest bookkeeping."""

    def __init__(self, out_dir: str, subcommand: str, params: dict):
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        self.path = os.path.join(out_dir, f"{subcommand}-{stamp}")
        os.makedirs(self.path, exist_ok=True)
        self.subcommand = subcommand
        self.params = params
        self.outputs: list[str] = []
        self.t0 = time.monotonic()

    def file(self, name: str) -> str:
        full = os.path.join(self.path, name)
        self.outputs.append(full)
        return full

    def finish(self) -> None:
        manifest = {
            "subcommand": self.subcommand,
            "parameters": self.params,
            "output_paths": self.outputs,
            "git_describe": _git_describe(),
            "seed": int(self.params.get("seed", 0)),
            "wall_time_ms": int(1000 * (time.monotonic() - self.t0)),
        }
        with open(os.path.join(self.path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
        missing = [p for p in self.outputs if not (os.path.exists(p) and os.path.getsize(p) > 0)]
        if missing:
            raise RuntimeError(f"declared outputs missing or empty: {missing}")


def _merge(defaults: dict, config_path, flags: dict) -> dict:
    params = dict(defaults)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path!r}: {exc}") from exc
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        params.update(loaded)
    params.update({k: v for k, v in flags.items() if v is not None})
    return params


def _dominates(fi, bound) -> bool:
    return bound is None or fi <= bound * (1.0 + _ENVELOPE_SLACK) + 1e-15


# ---------------------------------------------------------------------------
# gaussian-rates


_GAUSSIAN_DEFAULTS = {
    "channel": None,
    "alpha": 1.0,
    "gamma": 1.0,
    "beta": None,
    "s": 2.0,
    "m": 0.0,
    "m0": 1.0,
    "var0": 1.0,
    "eta": 1.0,
    "k": 50,
    "t_max": 10.0,
    "points": 201,
    "no_plot": False,
}


def cmd_gaussian_rates(params: dict, run: RunDir) -> int:
    channel = params["channel"]
    if channel not in ("heat", "ou", "prox"):
        raise UsageError("--channel must be heat, ou, or prox")
    alpha = float(params["alpha"])
    if alpha <= 0.0:
        raise UsageError("--alpha must be positive")
    rows = []
    if channel == "prox":
        eta = float(params["eta"])
        if eta <= 0.0:
            raise UsageError("--eta must be positive")
        k_max = int(params["k"])
        p0 = ga.IsoGaussian([float(params["m0"])], float(params["var0"]))
        target = ga.IsoGaussian([0.0], 1.0 / alpha)
        env = ga.ProxRate(alpha=alpha, eta=eta)
        fi0 = ga.fisher_information(p0, target)
        for k, p in enumerate(ga.proximal_chain(p0, alpha, eta, k_max)):
            fi = ga.fisher_information(p, target)
            kl = ga.kl_divergence(p, target)
            rows.append((k, fi, kl, env.factor(k) * fi0 if fi0 > 0 else None))
    else:
        m = float(params["m"])
        if channel == "heat":
            s = float(params["s"])
            if s <= 0.0:
                raise UsageError("--s must be positive")
            p0 = ga.IsoGaussian([m], s)
            q0 = ga.IsoGaussian([0.0], 1.0 / alpha)
            chan = ga.Heat()
            beta = 1.0 / s if params["beta"] is None else float(params["beta"])
            env = ga.HeatSLCPoincare(alpha, beta) if m == 0.0 else ga.HeatSLC(alpha)
        else:
            gamma = float(params["gamma"])
            if gamma <= 0.0:
                raise UsageError("--gamma must be positive")
            beta = 1.0 if params["beta"] is None else float(params["beta"])
            p0 = ga.IsoGaussian([m], 1.0 / beta)
            q0 = ga.IsoGaussian([0.0], 1.0 / alpha)
            chan = ga.OU(gamma=gamma)
            env = (
                ga.OuSLCPoincare(alpha, beta, gamma) if m == 0.0 else ga.OuSLC(alpha, gamma)
            )
        fi0 = ga.fisher_information(p0, q0)
        for t in np.linspace(0.0, float(params["t_max"]), int(params["points"])):
            pt, qt = ga.evolve(p0, chan, t), ga.evolve(q0, chan, t)
            fi = ga.fisher_information(pt, qt)
            kl = ga.kl_divergence(pt, qt)
            rows.append((float(t), fi, kl, env.factor(t) * fi0 if fi0 > 0 else None))
    csv_path = run.file("trace.csv")
    write_table(csv_path, params, ["t", "fi", "kl", "bound"], rows)
    if not params["no_plot"]:
        plot_csv(csv_path, run.file("plot.svg"), "t", ["fi", "bound"],
                 title=f"{channel} channel", logy=any(r[1] > 0 for r in rows))
    bad = [r for r in rows if not _dominates(r[1], r[3])]
    if bad:
        print(f"FAIL envelope domination: t={bad[0][0]} fi={bad[0][1]!r} bound={bad[0][3]!r}")
        return EXIT_CERT
    print(f"PASS {channel}: envelope dominates fi on all {len(rows)} rows")
    return EXIT_OK


# ---------------------------------------------------------------------------
# counterexample


_COUNTER_DEFAULTS = {
    "M": 2.0,
    "L": 2.0,
    "t_min": 1e-3,
    "t_max": 50.0,
    "t_points": 60,
    "gh_order": 128,
    "grid_step": 1e-3,
    "no_plot": False,
}


def cmd_counterexample(params: dict, run: RunDir) -> int:
    m_big, halfwidth = float(params["M"]), float(params["L"])
    if m_big < 2.0 or halfwidth < 2.0:
        raise UsageError("need --M >= 2 and --L >= 2")
    t_grid = quadrature.default_time_grid(
        float(params["t_min"]), float(params["t_max"]), int(params["t_points"])
    )
    code = EXIT_OK
    try:
        trace = quadrature.perturbed_bound_check(
            m_big, halfwidth, t_grid,
            order=int(params["gh_order"]), step=float(params["grid_step"]),
            threads=_thread_count(),
        )
        print(f"PASS perturbed envelope dominates fi on all {len(trace.rows)} rows")
    except quadrature.EnvelopeViolation as exc:
        print(f"FAIL envelope: t={exc.t!r} fi={exc.fi!r} bound={exc.bound!r}")
        trace = quadrature.counterexample_trace(
            m_big, halfwidth, t_grid,
            order=int(params["gh_order"]), step=float(params["grid_step"]),
            threads=_thread_count(),
        )
        code = EXIT_CERT

    trace_csv = run.file("trace.csv")
    trace.write_csv(trace_csv, params)
    bound_csv = run.file("bound.csv")
    write_table(bound_csv, params, ["t", "fi", "bound"],
                [(r.t, r.fi, r.bound) for r in trace.rows])

    slope = quadrature.counterexample_initial_slope(m_big, halfwidth)
    lower = max(0.0, (m_big - 2.0) * (m_big + 1.0) ** 2)
    slope_csv = run.file("slope.csv")
    write_table(slope_csv, params, ["slope", "lower_bound", "fi0"],
                [(slope, lower, trace.rows[0].fi)])
    print(f"initial fi slope = {slope:.6f} (must exceed {lower:.6f}); fi(0) = {trace.rows[0].fi:.6f}")
    if not slope > lower:
        print("FAIL initial slope certificate")
        code = EXIT_CERT

    kl = trace.column("kl")
    if np.any(np.diff(kl) > 1e-8):
        worst = int(np.argmax(np.diff(kl)))
        print(f"FAIL kl monotonicity between t={trace.rows[worst].t} and t={trace.rows[worst + 1].t}")
        code = EXIT_CERT
    else:
        print("PASS kl non-increasing along the whole trace")

    if not params["no_plot"]:
        plot_csv(trace_csv, run.file("fi.svg"), "t", ["fi"], title="relative Fisher information")
        plot_csv(trace_csv, run.file("kl.svg"), "t", ["kl"], title="KL divergence")
        plot_csv(bound_csv, run.file("bound.svg"), "t", ["fi", "bound"],
                 title="fi vs perturbed envelope", logy=True)
    return code


# ---------------------------------------------------------------------------
# sampler


_SAMPLER_DEFAULTS = {
    "d": 5,
    "alpha": 1.0,
    "L": 1.0,
    "eta": "auto",
    "iters": 20000,
    "seed": 7,
    "burn_in": None,
    "record_every": None,
    "no_plot": False,
}


def cmd_sampler(params: dict, run: RunDir) -> int:
    d = int(params["d"])
    alpha, L = float(params["alpha"]), float(params["L"])
    if d < 1 or alpha <= 0.0 or L <= 0.0:
        raise UsageError("need d >= 1 and positive --alpha/--L")
    if alpha != L:
        raise UsageError("the quadratic target has a single curvature: pass --alpha == --L")
    eta = 1.0 / (d * L) if params["eta"] == "auto" else float(params["eta"])
    if not 0.0 < eta * L < 1.0:
        raise UsageError("need 0 < eta * L < 1 for rejection sampling")
    iters = int(params["iters"])
    seed = int(params["seed"])
    burn_in = params["burn_in"] if params["burn_in"] is None else int(params["burn_in"])
    cfg = sampler.SamplerConfig(eta=eta, iters=iters, seed=seed, burn_in=burn_in)
    target = potentials.quadratic_potential(d, alpha)
    # stream 1 seeds the stationary start; stream 0 drives the chain itself
    x0 = sampler.chain_rng(seed, 1).standard_normal(d) / math.sqrt(alpha)

    try:
        out = sampler.run_chain(target, x0, cfg)
    except sampler.TrialCapExceeded as exc:
        print(f"ABORT rejection sampling: {exc}")
        return EXIT_ABORT

    n = out.samples.shape[0]
    a = 1.0 / (1.0 + alpha * eta)  # lag-1 autocorrelation of the Gaussian chain
    se_mean = math.sqrt((1.0 / alpha) / n * (1.0 + a) / (1.0 - a))
    se_var = math.sqrt(2.0 / (alpha**2 * n) * (1.0 + a * a) / (1.0 - a * a))
    kappa_bound = sampler.expected_trials_bound(eta, L, d)
    se_trials = float(out.trial_counts.std(ddof=1)) / math.sqrt(iters)

    code = EXIT_OK
    mean_ok = bool(np.all(np.abs(out.mean) <= 3.0 * se_mean))
    var_ok = bool(np.all(np.abs(out.var - 1.0 / alpha) <= 3.0 * se_var))
    trials_ok = out.mean_trials <= kappa_bound + 3.0 * se_trials
    print(f"{'PASS' if mean_ok else 'FAIL'} mean within 3 se: max|mean|={np.max(np.abs(out.mean)):.5f} "
          f"(3 se = {3 * se_mean:.5f})")
    print(f"{'PASS' if var_ok else 'FAIL'} variance within 3 se: max|var-{1 / alpha:g}|="
          f"{np.max(np.abs(out.var - 1.0 / alpha)):.5f} (3 se = {3 * se_var:.5f})")
    print(f"{'PASS' if trials_ok else 'FAIL'} mean trials {out.mean_trials:.4f} <= "
          f"kappa^(d/2) + 3 se = {kappa_bound + 3 * se_trials:.4f}")
    if not (mean_ok and var_ok and trials_ok):
        code = EXIT_CERT

    every = params["record_every"] or max(1, iters // 1000)
    counts = np.arange(1, n + 1)[:, None]
    cum_mean = np.cumsum(out.samples, axis=0) / counts
    cum_sq = np.cumsum(out.samples**2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum_var = (cum_sq - counts * cum_mean**2) / np.maximum(counts - 1, 1)
    burn = cfg.resolved_burn_in()
    rows = []
    for i in range(0, n, every):
        k = burn + i
        rows.append((k, int(out.trial_counts[k]), *cum_mean[i], *cum_var[i]))
    header = (["k", "trials"] + [f"mean_{j + 1}" for j in range(d)]
              + [f"var_{j + 1}" for j in range(d)])
    run_csv = run.file("run.csv")
    write_table(run_csv, {**params, "eta": eta, "x0_norm": float(np.linalg.norm(x0))},
                header, rows)
    with open(run.file("config.json"), "w") as fh:
        json.dump({**params, "eta": eta, "burn_in": burn}, fh, indent=2)
    if not params["no_plot"]:
        plot_csv(run_csv, run.file("plot.svg"), "k", ["mean_1", "var_1"],
                 title="running moments")
    return code


# ---------------------------------------------------------------------------
# gap


_GAP_DEFAULTS = {
    "eps": 0.5,
    "fi_floor": 10.0,
    "grid_step": 2e-4,
    "no_plot": False,
}


def cmd_gap(params: dict, run: RunDir) -> int:
    eps, fi_floor = float(params["eps"]), float(params["fi_floor"])
    if not (0.0 < eps < 1.0 < fi_floor):
        raise UsageError("need 0 < --eps < 1 < --fi-floor")
    spec = potentials.spike_spec(eps, fi_floor)
    half = spec.a + 12.0
    grid = quadrature.EvalGrid(-half, half, float(params["grid_step"]))
    code = EXIT_OK
    try:
        r_inf, fi = quadrature.gap_check(spec, grid)
        print(f"PASS r_inf={r_inf:.8f} <= eps={eps}  and  fi={fi:.6f} >= fi_floor={fi_floor}")
    except quadrature.GapBoundError as exc:
        r_inf, fi = exc.r_inf, exc.fi
        print(f"FAIL gap certificate: {exc}")
        code = EXIT_CERT
    print(f"a={spec.a:.10f} M={spec.m_big:.10f} K={spec.k_count} eta={spec.width:.10f}")
    write_table(run.file("gap.csv"), params,
                ["eps", "fi_floor", "a", "m_big", "k_count", "width", "r_inf", "fi"],
                [(eps, fi_floor, spec.a, spec.m_big, spec.k_count, spec.width, r_inf, fi)])
    pot = potentials.spike_potential(spec)
    pts = grid.points[:: max(1, grid.points.size // 4000)]
    nu = np.exp(-(pts**2) / 2.0) / math.sqrt(2.0 * math.pi)
    rho_w = nu * np.exp(-pot.value(pts))
    dens_csv = run.file("density.csv")
    write_table(dens_csv, params, ["x", "nu", "rho_unnormalized"],
                list(zip(pts, nu, rho_w)))
    if not params["no_plot"]:
        plot_csv(dens_csv, run.file("plot.svg"), "x", ["nu", "rho_unnormalized"],
                 title="spiked density vs N(0,1)")
    return code


# ---------------------------------------------------------------------------
# proxgrad


_PROXGRAD_DEFAULTS = {
    "eta": 1.0,
    "k": 25,
    "t_end": 5.0,
    "dt": 0.01,
    "no_plot": False,
}


def cmd_proxgrad(params: dict, run: RunDir) -> int:
    eta = float(params["eta"])
    if eta <= 0.0:
        raise UsageError("--eta must be positive")
    k_max = int(params["k"])
    t_end, dt = float(params["t_end"]), float(params["dt"])
    code = EXIT_OK

    quad = potentials.quadratic_potential(1, 1.0)
    quad_trace = optim.prox_grad_run(quad, [1.0], eta, k_max)
    gsq = quad_trace.grad_sq_norms
    target_ratio = 1.0 / (1.0 + eta) ** 2
    live = gsq[:-1] > 1e-280
    ratios = gsq[1:][live] / gsq[:-1][live]
    worst = float(np.max(np.abs(ratios - target_ratio))) if ratios.size else 0.0
    if worst > 1e-12:
        print(f"FAIL quadratic per-step ratio: off by {worst!r}")
        code = EXIT_CERT
    else:
        print(f"PASS quadratic per-step ratio exactly (1+alpha eta)^-2 (max dev {worst:.2e})")

    quartic = potentials.quartic_1d()
    dt_q = min(dt, 0.1 / quartic.smoothness)
    times, flow_gsq = optim.gradient_flow(quartic, [1.0], t_end, dt_q)
    envelope = flow_gsq[0] * np.exp(-2.0 * quartic.alpha * times)
    if np.any(flow_gsq > envelope * (1.0 + 1e-6)):
        print("FAIL quartic gradient-flow envelope")
        code = EXIT_CERT
    else:
        print("PASS quartic gradient-flow decay within e^{-2 alpha t}")
    quartic_trace = optim.prox_grad_run(quartic, [1.0], eta, k_max)
    qgsq = quartic_trace.grad_sq_norms
    prox_env = qgsq[0] / (1.0 + quartic.alpha * eta) ** (2 * np.arange(k_max + 1))
    if np.any(qgsq > prox_env * (1.0 + 1e-6) + 1e-300):
        print("FAIL quartic proximal-gradient envelope")
        code = EXIT_CERT
    else:
        print("PASS quartic proximal-gradient decay within (1+alpha eta)^{-2k}")

    for name, trace in (("quadratic", quad_trace), ("quartic", quartic_trace)):
        path = run.file(f"proxgrad_{name}.csv")
        write_table(path, params, ["k", "grad_sq_norm"],
                    list(enumerate(trace.grad_sq_norms)))
        if not params["no_plot"]:
            plot_csv(path, run.file(f"proxgrad_{name}.svg"), "k", ["grad_sq_norm"],
                     title=f"proximal gradient, {name}", logy=True)
    flow_csv = run.file("flow_quartic.csv")
    write_table(flow_csv, params, ["t", "grad_sq_norm"],
                list(zip(times, flow_gsq)))
    if not params["no_plot"]:
        plot_csv(flow_csv, run.file("flow_quartic.svg"), "t", ["grad_sq_norm"],
                 title="gradient flow, quartic", logy=True)
    return code


# ---------------------------------------------------------------------------
# driver


_SUBCOMMANDS = {
    "gaussian-rates": (_GAUSSIAN_DEFAULTS, cmd_gaussian_rates),
    "counterexample": (_COUNTER_DEFAULTS, cmd_counterexample),
    "sampler": (_SAMPLER_DEFAULTS, cmd_sampler),
    "gap": (_GAP_DEFAULTS, cmd_gap),
    "proxgrad": (_PROXGRAD_DEFAULTS, cmd_proxgrad),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="fplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand")
    specs = {
        "gaussian-rates": [
            ("--channel", str), ("--alpha", float), ("--gamma", float), ("--beta", float),
            ("--s", float), ("--m", float), ("--m0", float), ("--var0", float),
            ("--eta", float), ("--k", int), ("--t-max", float), ("--points", int),
        ],
        "counterexample": [
            ("--M", float), ("--L", float), ("--t-min", float), ("--t-max", float),
            ("--t-points", int), ("--gh-order", int), ("--grid-step", float),
        ],
        "sampler": [
            ("--d", int), ("--alpha", float), ("--L", float), ("--eta", str),
            ("--iters", int), ("--seed", int), ("--burn-in", int), ("--record-every", int),
        ],
        "gap": [("--eps", float), ("--fi-floor", float), ("--grid-step", float)],
        "proxgrad": [("--eta", float), ("--k", int), ("--t-end", float), ("--dt", float)],
    }
    for name, opts in specs.items():
        p = sub.add_parser(name)
        for flag, typ in opts:
            p.add_argument(flag, type=typ, default=None)
        p.add_argument("--no-plot", action="store_const", const=True, default=None)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out-dir", type=str, default="./out")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if not args.subcommand:
            raise UsageError("a subcommand is required (one of: " + ", ".join(_SUBCOMMANDS) + ")")
        defaults, fn = _SUBCOMMANDS[args.subcommand]
        flags = {
            k: v for k, v in vars(args).items()
            if k not in ("subcommand", "config", "out_dir")
        }
        params = _merge(defaults, args.config, flags)
        run = RunDir(args.out_dir, args.subcommand, params)
        code = fn(params, run)
        run.finish()
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
