"""1-D quadrature engine: Gauss-Hermite smoothing of a density, scores of
the smoothed density, Fisher-information/KL functionals on uniform grids,
and the trace producers for the non-monotonicity and gap constructions.

Numerical policy
----------------
* Gauss-Hermite rules use the probabilist convention: weights sum to 1 and
  represent an expectation over N(0,1).
* Smoothed densities are evaluated as E_Z[exp(-g(x - sqrt(t) Z))] with a
  shared max-exponent shift per evaluation point; scores come from the
  ratio of smoothed expectations (smoothing commutes with d/dx), never
  from numerically differentiating the log-density.
* Integrals are composite Simpson on uniform grids with an odd point
  count; the reported error estimate is the classical |fine - coarse|/15
  comparison and is heuristic, not a rigorous bound.
* Grids must cover >= 8 standard deviations of every density they
  integrate; the trace producers grow their grids with t accordingly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .gaussian import (
    OU,
    HeatPerturbed,
    IsoGaussian,
    OuSLC,
    evolve,
    fi_curve,
    fisher_information,
    kl_divergence,
)
from .potentials import ScalarPotential, SpikeSpec, counterexample_potential, spike_potential

__all__ = [
    "GaussHermiteRule",
    "EvalGrid",
    "DensityHandle",
    "QuadResult",
    "TraceRow",
    "ChannelTrace",
    "NormalizationError",
    "QuadratureError",
    "EnvelopeViolation",
    "GapBoundError",
    "gauss_hermite",
    "gaussian_handle",
    "convolved_logdensity",
    "convolved_handle",
    "fi_functional",
    "kl_functional",
    "counterexample_trace",
    "counterexample_initial_slope",
    "perturbed_bound_check",
    "gap_check",
    "ou_trace_gaussian",
    "default_time_grid",
]

_CHUNK = 16384  # grid points per Gauss-Hermite block, caps temporaries at ~16 MB


class NormalizationError(ValueError):
    """A density handle does not integrate to 1 on its grid."""


class QuadratureError(RuntimeError):
    """Non-finite intermediate in a smoothed-density evaluation."""


class EnvelopeViolation(RuntimeError):
    """A trace row exceeded the envelope it is certified against."""

    def __init__(self, msg: str, t: float, fi: float, bound: float):
        super().__init__(msg)
        self.t, self.fi, self.bound = t, fi, bound


class GapBoundError(RuntimeError):
    """The spike construction failed one of its two certified inequalities."""

    def __init__(self, msg: str, r_inf: float, fi: float):
        super().__init__(msg)
        self.r_inf, self.fi = r_inf, fi


# ---------------------------------------------------------------------------
# Rules and grids


@dataclass(frozen=True, eq=False)
class GaussHermiteRule:
    """Probabilist Gauss-Hermite rule: sum(weights * f(nodes)) ~ E_{N(0,1)} f."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w, x = self.weights, self.nodes
        # extreme-node weights may underflow to exactly 0 at high order
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(x)) and np.all(w >= 0.0) and w.max() > 0.0):
            raise ValueError("rule nodes and weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if abs(float((w * x**2).sum()) - 1.0) > 1e-10:
            raise ValueError("second moment of the rule must be 1")
        if not np.allclose(x, -x[::-1], atol=1e-12):
            raise ValueError("nodes must be symmetric about 0")


def gauss_hermite(order: int) -> GaussHermiteRule:
    if order < 1:
        raise ValueError("order must be positive")
    from scipy.special import roots_hermitenorm  # stable for high orders

    nodes, weights = roots_hermitenorm(int(order))
    return GaussHermiteRule(order=order, nodes=nodes, weights=weights / math.sqrt(2.0 * math.pi))


@dataclass(frozen=True, eq=False)
class EvalGrid:
    """Uniform grid on [lo, hi].  The point count is rounded up so that the
    interval count is a multiple of 4 (composite Simpson plus its coarse
    comparison both apply); ``dx`` is the realized spacing."""

    lo: float
    hi: float
    step: float
    points: np.ndarray = field(init=False, repr=False, default=None)
    dx: float = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if not self.step > 0.0:
            raise ValueError("step must be positive")
        if (self.hi - self.lo) / self.step < 200.0:
            raise ValueError("grid too coarse: need at least 200 steps")
        n = int(round((self.hi - self.lo) / self.step)) + 1
        while (n - 1) % 4 != 0:
            n += 1
        object.__setattr__(self, "points", np.linspace(self.lo, self.hi, n))
        object.__setattr__(self, "dx", (self.hi - self.lo) / (n - 1))

    def covers(self, center: float, sd: float, nsd: float = 8.0) -> bool:
        return self.lo <= center - nsd * sd and self.hi >= center + nsd * sd

    def require_covers(self, center: float, sd: float, nsd: float = 8.0) -> None:
        if not self.covers(center, sd, nsd):
            raise ValueError(
                f"grid [{self.lo}, {self.hi}] does not cover {nsd} standard "
                f"deviations of a density at ({center}, sd={sd})"
            )

    def refined(self) -> "EvalGrid":
        return EvalGrid(self.lo, self.hi, self.step / 2.0)


def _simpson(y: np.ndarray, dx: float) -> float:
    n = y.size
    if n < 3 or n % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of points >= 3")
    return float(dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))


class QuadResult(NamedTuple):
    """An integral value with a heuristic Simpson refinement estimate."""

    value: float
    error: float


def _simpson_with_error(y: np.ndarray, dx: float) -> QuadResult:
    fine = _simpson(y, dx)
    if (y.size - 1) % 4 == 0:
        coarse = _simpson(y[::2], 2.0 * dx)
        return QuadResult(fine, abs(fine - coarse) / 15.0)
    return QuadResult(fine, math.nan)


# ---------------------------------------------------------------------------
# Density handles


@dataclass(frozen=True, eq=False)
class DensityHandle:
    """A 1-D density as callables; both must accept numpy arrays.

    ``logpdf`` is expected to be normalized on whatever grid it is used
    with (the functionals re-check and raise NormalizationError).
    """

    logpdf: Callable[[np.ndarray], np.ndarray]
    score: Callable[[np.ndarray], np.ndarray]


def gaussian_handle(mean: float, var: float) -> DensityHandle:
    if not var > 0.0:
        raise ValueError("var must be positive")
    lognorm = -0.5 * math.log(2.0 * math.pi * var)

    def logpdf(x):
        x = np.asarray(x, dtype=float)
        return lognorm - (x - mean) ** 2 / (2.0 * var)

    def score(x):
        x = np.asarray(x, dtype=float)
        return -(x - mean) / var

    return DensityHandle(logpdf=logpdf, score=score)


def _grid_mass(handle: DensityHandle, grid: EvalGrid) -> float:
    return _simpson(np.exp(handle.logpdf(grid.points)), grid.dx)


def _require_normalized(handle: DensityHandle, grid: EvalGrid, tol: float = 1e-6) -> None:
    mass = _grid_mass(handle, grid)
    if abs(mass - 1.0) > tol:
        raise NormalizationError(f"density integrates to {mass!r} on the grid, not 1 +- {tol:g}")


# ---------------------------------------------------------------------------
# Gauss-Hermite smoothing


def convolved_logdensity(pot: ScalarPotential, t: float, x, rule: GaussHermiteRule):
    """Unnormalized log-density and score of exp(-pot) smoothed by N(0, t).

    Returns (logval, score) for log E_Z[exp(-g(x - sqrt(t) Z))] up to an
    x-independent constant (normalization is the caller's job, via grid
    integration); the score is the ratio of smoothed expectations, never a
    numerical derivative of logval.  At t = 0 both reduce to
    (-g(x), -g'(x)) exactly.

    The quadratic core of g is folded into the kernel in closed form:
    with psi(y) = g(y) - y^2/2, the product of exp(-y^2/2) and the
    smoothing kernel is again a Gaussian, N(x/(1+t), t/(1+t)), leaving

        logval(x) = -x^2/(2(1+t)) + log E_{Y ~ N(x/(1+t), t/(1+t))}[e^{-psi(Y)}]
        score(x)  = (-x + E[-psi'(Y) e^{-psi}]/E[e^{-psi}]) / (1+t)

    so the Gauss-Hermite rule only ever sees the residual e^{-psi}, whose
    scale does not shrink as t grows (exact algebra for any potential;
    the rule converges fast when psi varies on unit scales, which holds
    for potentials with near-unit tail curvature).  A shared max-exponent
    shift per evaluation point guards the exponentials.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if rule.order < 64:
        raise ValueError("rule order must be at least 64 for smoothing work")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0.0:
        logval, score = -pot.value(x_arr), -pot.deriv1(x_arr)
    else:
        shrink = 1.0 + t
        sd = math.sqrt(t / shrink)
        logval = np.empty_like(x_arr)
        score = np.empty_like(x_arr)
        for start in range(0, x_arr.size, _CHUNK):
            sl = slice(start, min(start + _CHUNK, x_arr.size))
            mu = x_arr[sl] / shrink
            args = mu[:, None] + sd * rule.nodes[None, :]
            neg_psi = 0.5 * args**2 - pot.value(args)
            shift = neg_psi.max(axis=1, keepdims=True)
            if not np.all(np.isfinite(shift)):
                raise QuadratureError(
                    "non-finite potential value; grid and potential scales disagree"
                )
            w = rule.weights[None, :] * np.exp(neg_psi - shift)
            s0 = w.sum(axis=1)
            s1 = (w * (args - pot.deriv1(args))).sum(axis=1)
            if not (np.all(np.isfinite(s0)) and np.all(s0 > 0.0) and np.all(np.isfinite(s1))):
                raise QuadratureError(
                    "non-finite smoothed expectation; grid and potential scales disagree"
                )
            logval[sl] = -x_arr[sl] ** 2 / (2.0 * shrink) + np.log(s0) + shift[:, 0]
            score[sl] = (-x_arr[sl] + s1 / s0) / shrink
    if np.ndim(x) == 0:
        return float(logval[0]), float(score[0])
    return logval, score


def convolved_handle(
    pot: ScalarPotential, t: float, rule: GaussHermiteRule, grid: EvalGrid
) -> DensityHandle:
    """Grid-normalized handle for exp(-pot) * N(0, t)."""
    logval, _ = convolved_logdensity(pot, t, grid.points, rule)
    shift = float(logval.max())
    lognorm = math.log(_simpson(np.exp(logval - shift), grid.dx)) + shift

    def logpdf(x):
        return convolved_logdensity(pot, t, x, rule)[0] - lognorm

    def score(x):
        return convolved_logdensity(pot, t, x, rule)[1]

    return DensityHandle(logpdf=logpdf, score=score)


# ---------------------------------------------------------------------------
# Functionals


def fi_functional(rho: DensityHandle, nu_score: Callable, grid: EvalGrid) -> QuadResult:
    """integral rho(x) (d/dx log rho - d/dx log nu)^2 dx by composite Simpson."""
    _require_normalized(rho, grid)
    pts = grid.points
    dens = np.exp(rho.logpdf(pts))
    diff = rho.score(pts) - nu_score(pts)
    return _simpson_with_error(dens * diff * diff, grid.dx)


def kl_functional(rho: DensityHandle, nu: DensityHandle, grid: EvalGrid) -> QuadResult:
    """integral rho(x) log(rho(x)/nu(x)) dx by composite Simpson."""
    _require_normalized(rho, grid)
    _require_normalized(nu, grid)
    pts = grid.points
    logr = rho.logpdf(pts)
    dens = np.exp(logr)
    ratio = logr - nu.logpdf(pts)
    integrand = np.where(dens > 0.0, dens * ratio, 0.0)
    return _simpson_with_error(integrand, grid.dx)


# ---------------------------------------------------------------------------
# Traces


class TraceRow(NamedTuple):
    t: float
    fi: float
    kl: float
    bound: Optional[float]


_NOISE_FLOOR = -1e-9


@dataclass(frozen=True, eq=False)
class ChannelTrace:
    """A (t, fi, kl, bound) series along a channel; t strictly increasing."""

    rows: tuple

    def __post_init__(self):
        ts = [r.t for r in self.rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trace times must be strictly increasing")
        for r in self.rows:
            if r.fi < _NOISE_FLOOR or r.kl < _NOISE_FLOOR:
                raise ValueError(f"negative fi/kl beyond quadrature noise at t={r.t}")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path, params: Optional[dict] = None) -> None:
        lines = []
        if params:
            echo = " ".join(f"{k}={v}" for k, v in params.items())
            lines.append(f"# {echo}")
        lines.append("t,fi,kl,bound")
        for r in self.rows:
            bound = "" if r.bound is None else f"{r.bound:.17g}"
            lines.append(f"{r.t:.17g},{r.fi:.17g},{r.kl:.17g},{bound}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def default_time_grid(t_min: float = 1e-3, t_max: float = 50.0, points: int = 60) -> np.ndarray:
    """t = 0 followed by a geometric ladder from t_min to t_max."""
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, points)])


def _smoothing_grid(t: float, halfwidth: float, step: float) -> EvalGrid:
    # rho_t = N(0, 1+t) needs 8 sd; the smoothed potential density has
    # comparable scale plus its well of half-width L.  Every length scale
    # grows like sqrt(1+t), so the step scales with it: points per standard
    # deviation, hence relative Simpson accuracy, stay constant in t.
    half = max(20.0, 8.5 * math.sqrt(1.0 + t) + halfwidth + 10.0)
    return EvalGrid(-half, half, step * math.sqrt(1.0 + t))


def _counterexample_rows(
    pot: ScalarPotential,
    halfwidth: float,
    t_grid: Sequence[float],
    rule: GaussHermiteRule,
    step: float,
    threads: Optional[int],
) -> list:
    t_vals = [float(t) for t in t_grid]
    if not t_vals or t_vals[0] != 0.0:
        raise ValueError("t_grid must start at 0")

    def row(t: float) -> TraceRow:
        grid = _smoothing_grid(t, halfwidth, step)
        grid.require_covers(0.0, math.sqrt(1.0 + t))
        pts = grid.points
        lognu_u, nu_score = convolved_logdensity(pot, t, pts, rule)
        shift = float(lognu_u.max())
        lognu = lognu_u - (math.log(_simpson(np.exp(lognu_u - shift), grid.dx)) + shift)
        v = 1.0 + t
        logrho = -0.5 * math.log(2.0 * math.pi * v) - pts**2 / (2.0 * v)
        rho = np.exp(logrho)
        fi = _simpson(rho * (-pts / v - nu_score) ** 2, grid.dx)
        kl = _simpson(np.where(rho > 0.0, rho * (logrho - lognu), 0.0), grid.dx)
        return TraceRow(t, fi, kl, None)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(row, t_vals))
    return [row(t) for t in t_vals]


def counterexample_trace(
    m_big: float,
    halfwidth: float,
    t_grid: Sequence[float],
    *,
    order: int = 128,
    step: float = 1e-3,
    threads: Optional[int] = None,
) -> ChannelTrace:
    """FI and KL between N(0, 1+t) and the smoothed concave-well density.

    The start pair is N(0,1) against exp(-g) for the piecewise potential g;
    both evolve by Gaussian smoothing.  FI rises on an initial segment and
    falls later; KL is non-increasing throughout.
    """
    pot = counterexample_potential(m_big, halfwidth)
    rule = gauss_hermite(order)
    rows = _counterexample_rows(pot, halfwidth, t_grid, rule, step, threads)
    return ChannelTrace(rows=tuple(rows))


def counterexample_initial_slope(m_big: float, halfwidth: float) -> float:
    """Exact t=0 slope of FI(N(0,1+t) || smoothed well density).

    Evaluates -E[(-1+g'')^2] - 2 E[g''(-X+g')^2] under X ~ N(0,1) with
    truncated-Gaussian moments in closed form.  Positive for every
    admissible (M, L), and strictly above (M-2)(M+1)^2.
    """
    M, L = float(m_big), float(halfwidth)
    if M < 2.0 or L < 2.0:
        raise ValueError("need m_big >= 2 and halfwidth >= 2")
    phi_l = math.exp(-0.5 * L * L) / math.sqrt(2.0 * math.pi)
    p_in = math.erf(L / math.sqrt(2.0))  # P(|X| <= L)
    second_moment_in = p_in - 2.0 * L * phi_l  # E[X^2 1{|X| <= L}]
    q_tail = 0.5 * math.erfc(L / math.sqrt(2.0))  # P(X > L)
    c = (M + 1.0) ** 2
    return -c * p_in + 2.0 * M * c * second_moment_in - 4.0 * c * L * L * q_tail


def perturbed_bound_check(
    m_big: float,
    halfwidth: float,
    t_grid: Sequence[float],
    *,
    order: int = 128,
    step: float = 1e-3,
    threads: Optional[int] = None,
    slack: float = 1e-6,
) -> ChannelTrace:
    """Counterexample trace with the perturbed heat-flow envelope attached.

    The well potential splits as x^2/2 plus an (M+1)L-Lipschitz remainder,
    which licenses the perturbed envelope with alpha=1, lip=(M+1)L.  Every
    row must satisfy fi(t) <= factor(t) * fi(0) + slack; a violating row
    raises EnvelopeViolation (either the quadrature or the envelope
    transcription is at fault).
    """
    pot = counterexample_potential(m_big, halfwidth)
    rule = gauss_hermite(order)
    rows = _counterexample_rows(pot, halfwidth, t_grid, rule, step, threads)
    env = HeatPerturbed(alpha=1.0, lip=(m_big + 1.0) * halfwidth)
    fi0 = rows[0].fi
    out = []
    for r in rows:
        bound = env.factor(r.t) * fi0
        if r.fi > bound + slack:
            raise EnvelopeViolation(
                f"fi={r.fi!r} exceeds envelope {bound!r} at t={r.t!r}", r.t, r.fi, bound
            )
        out.append(TraceRow(r.t, r.fi, r.kl, bound))
    return ChannelTrace(rows=tuple(out))


# ---------------------------------------------------------------------------
# Spike gap certificate


def gap_check(spec: SpikeSpec, grid: EvalGrid):
    """Certify the spike construction: rho = N(0,1) e^{-g} / Z against N(0,1).

    Returns (r_inf, fi) where r_inf = max over the grid of log(rho/nu)
    (the sup is attained wherever g vanishes) and fi = E_rho[(g')^2].
    Raises GapBoundError unless r_inf <= eps + 1e-6 and fi >= fi_floor - 1e-6.
    """
    if grid.lo > -(spec.a + 8.0) or grid.hi < spec.a + 8.0:
        raise ValueError("grid must cover [-a-8, a+8]")
    pot = spike_potential(spec)
    pts = grid.points
    g = pot.value(pts)
    weight = np.exp(-(pts**2) / 2.0 - g) / math.sqrt(2.0 * math.pi)
    z = _simpson(weight, grid.dx)
    r_inf = float(np.max(-g)) - math.log(z)
    fi = _simpson(weight * pot.deriv1(pts) ** 2, grid.dx) / z
    if r_inf > spec.eps + 1e-6:
        raise GapBoundError(f"r_inf={r_inf!r} exceeds eps={spec.eps}", r_inf, fi)
    if fi < spec.fi_floor - 1e-6:
        raise GapBoundError(f"fi={fi!r} below floor={spec.fi_floor}", r_inf, fi)
    return r_inf, fi


# ---------------------------------------------------------------------------
# Closed-form OU trace


def ou_trace_gaussian(
    p0: IsoGaussian,
    q0: IsoGaussian,
    gamma: float,
    t_grid: Sequence[float],
    *,
    alpha: Optional[float] = None,
) -> ChannelTrace:
    """FI/KL along the OU semigroup for a Gaussian pair, in closed form.

    ``alpha`` is the declared strong-log-concavity modulus of q0 (default:
    its exact precision 1/var); the attached bound column is the
    matching OU envelope times fi(0), omitted when fi(0) = 0.
    """
    if alpha is None:
        alpha = 1.0 / q0.var
    if q0.var > 1.0 / alpha + 1e-12:
        raise ValueError("declared alpha exceeds the actual log-concavity of q0")
    channel = OU(gamma=gamma)
    env = OuSLC(alpha=alpha, gamma=gamma)
    fi0 = fisher_information(p0, q0)
    t_vals = [float(t) for t in t_grid]
    fis = fi_curve(p0, q0, channel, t_vals)
    rows = []
    for t, fi in zip(t_vals, fis):
        pt, qt = evolve(p0, channel, t), evolve(q0, channel, t)
        kl = kl_divergence(pt, qt)
        bound = env.factor(t) * fi0 if fi0 > 0.0 else None
        rows.append(TraceRow(t, float(fi), kl, bound))
    return ChannelTrace(rows=tuple(rows))
