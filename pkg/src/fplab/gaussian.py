"""Closed-form isotropic-Gaussian arithmetic for smoothing channels.

Everything in this module is exact arithmetic: KL divergence and relative
Fisher information between isotropic Gaussians, the solution maps of the
heat and Ornstein-Uhlenbeck semigroups, the one-iteration law of the
proximal sampling recursion for a centered Gaussian target, the
multiplicative contraction envelopes for each channel, and the
time-derivative identities that the test suite cross-checks against
finite differences.

Conventions: an ``IsoGaussian`` is N(mean, var * I) with scalar variance
``var``.  A Gaussian N(m, v I) is (1/v)-strongly log-concave and satisfies
a (1/v)-Poincare inequality; those are the natural moduli to feed the
envelopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "IsoGaussian",
    "Heat",
    "OU",
    "ProximalForward",
    "Channel",
    "HeatSLC",
    "HeatSLCPoincare",
    "HeatPerturbed",
    "OuSLC",
    "OuSLCPoincare",
    "ProxRate",
    "BoundEnvelope",
    "kl_divergence",
    "fisher_information",
    "evolve",
    "fi_curve",
    "proximal_step",
    "proximal_chain",
    "fi_time_derivative",
    "kl_time_derivative",
    "iteration_count",
]


@dataclass(frozen=True, eq=False)
class IsoGaussian:
    """N(mean, var * I) on R^d."""

    mean: np.ndarray
    var: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or mean.size < 1:
            raise ValueError("mean must be a vector of length >= 1")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean entries must be finite")
        var = float(self.var)
        if not (math.isfinite(var) and var > 0.0):
            raise ValueError(f"variance must be positive and finite, got {var!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.size

    def close_to(self, other: "IsoGaussian", tol: float = 0.0) -> bool:
        return (
            self.dim == other.dim
            and abs(self.var - other.var) <= tol
            and float(np.max(np.abs(self.mean - other.mean))) <= tol
        )


@dataclass(frozen=True)
class Heat:
    """Brownian smoothing: time t convolves with N(0, t I)."""

    c = 1.0  # Fokker-Planck diffusion coefficient

    def evolve(self, g: IsoGaussian, t: float) -> IsoGaussian:
        return IsoGaussian(g.mean, g.var + t)


@dataclass(frozen=True)
class OU:
    """Ornstein-Uhlenbeck semigroup targeting N(0, I/gamma)."""

    gamma: float
    c = 2.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")

    def evolve(self, g: IsoGaussian, t: float) -> IsoGaussian:
        decay = math.exp(-self.gamma * t)
        var = decay**2 * g.var + (1.0 - decay**2) / self.gamma
        return IsoGaussian(decay * g.mean, var)


@dataclass(frozen=True)
class ProximalForward:
    """Forward half of one proximal-sampler iteration: add N(0, eta I).

    The map is a single discrete step; the time argument of ``evolve`` is
    ignored (kept for interface symmetry with the continuous channels).
    """

    eta: float

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ValueError("eta must be positive")

    def evolve(self, g: IsoGaussian, t: float) -> IsoGaussian:
        return IsoGaussian(g.mean, g.var + self.eta)


Channel = Union[Heat, OU, ProximalForward]


def evolve(g: IsoGaussian, channel: Channel, t: float) -> IsoGaussian:
    """Push an isotropic Gaussian through a channel for time t >= 0."""
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    return channel.evolve(g, t)


def fi_curve(p0: IsoGaussian, q0: IsoGaussian, channel: Channel, ts) -> np.ndarray:
    """Fisher information t -> FI(p_t || q_t) in cancellation-free form.

    Equivalent to mapping evolve + fisher_information over ts, but the
    evolved mean/variance differences are taken at t = 0 and transported
    multiplicatively (they contract as e^{-gamma t} and e^{-2 gamma t}
    along OU, and are constant along the heat flow), so the curve stays
    accurate to a few ulp even where the differences underflow the
    rounding of the evolved variances themselves.
    """
    _check_dims(p0, q0)
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0.0):
        raise ValueError("times must be nonnegative")
    shift2 = float(np.dot(p0.mean - q0.mean, p0.mean - q0.mean))
    dv = p0.var - q0.var
    if isinstance(channel, Heat):
        mean_decay2 = np.ones_like(ts)
        var_decay2 = np.ones_like(ts)
    elif isinstance(channel, OU):
        mean_decay2 = np.exp(-2.0 * channel.gamma * ts)
        var_decay2 = mean_decay2**2
    elif isinstance(channel, ProximalForward):
        mean_decay2 = np.ones_like(ts)
        var_decay2 = np.ones_like(ts)
    else:
        raise ValueError(f"unsupported channel: {channel!r}")
    vp = np.array([channel.evolve(p0, t).var for t in ts])
    vq = np.array([channel.evolve(q0, t).var for t in ts])
    return mean_decay2 * shift2 / vq**2 + var_decay2 * p0.dim * dv * dv / (vp * vq**2)


# ---------------------------------------------------------------------------
# Divergences


def _check_dims(p: IsoGaussian, q: IsoGaussian) -> None:
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")


def kl_divergence(p: IsoGaussian, q: IsoGaussian) -> float:
    """KL(p || q) = d/2 (r - 1 - ln r) + |mp - mq|^2 / (2 vq), r = vp/vq."""
    _check_dims(p, q)
    r = p.var / q.var
    shift = float(np.dot(p.mean - q.mean, p.mean - q.mean))
    return 0.5 * p.dim * (r - 1.0 - math.log(r)) + shift / (2.0 * q.var)


def fisher_information(p: IsoGaussian, q: IsoGaussian) -> float:
    """Relative Fisher information E_p |grad log(p/q)|^2.

    For isotropic Gaussians the score difference is affine and the
    expectation is exact:

        FI = |mp - mq|^2 / vq^2 + d (vp - vq)^2 / (vp vq^2).
    """
    _check_dims(p, q)
    shift = float(np.dot(p.mean - q.mean, p.mean - q.mean))
    dv = p.var - q.var
    return shift / q.var**2 + p.dim * dv * dv / (p.var * q.var**2)


# ---------------------------------------------------------------------------
# Proximal recursion for the Gaussian target N(0, I/alpha)


def proximal_step(p: IsoGaussian, alpha: float, eta: float) -> IsoGaussian:
    """One full proximal-sampler iteration in closed form.

    For the target N(0, I/alpha) the iterates stay Gaussian; one step maps
    N(m, v I) to N(m/(1+alpha eta), ((v - 1/alpha)/(1+alpha eta)^2 + 1/alpha) I).
    N(0, I/alpha) is an exact fixed point.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    if not eta > 0.0:
        raise ValueError("eta must be positive")
    shrink = 1.0 + alpha * eta
    var = (p.var - 1.0 / alpha) / shrink**2 + 1.0 / alpha
    return IsoGaussian(p.mean / shrink, var)


def proximal_chain(p0: IsoGaussian, alpha: float, eta: float, k: int) -> list[IsoGaussian]:
    """Iterates [p0, p1, ..., pk] of the closed-form proximal recursion."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = [p0]
    for _ in range(k):
        out.append(proximal_step(out[-1], alpha, eta))
    return out


# ---------------------------------------------------------------------------
# Contraction envelopes.  factor(t) is the multiplier such that the cited
# contraction statement reads FI(t) <= factor(t) * FI(0); factor(0) == 1.


def _require_positive(**kwargs: float) -> None:
    for name, val in kwargs.items():
        if not val > 0.0:
            raise ValueError(f"{name} must be positive, got {val!r}")


def _check_time(t: float) -> float:
    t = float(t)
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t!r}")
    return t


@dataclass(frozen=True)
class HeatSLC:
    """Heat-flow contraction under alpha-strong log-concavity of q0."""

    alpha: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha)

    def factor(self, t: float) -> float:
        t = _check_time(t)
        return 1.0 / (1.0 + self.alpha * t) ** 2


@dataclass(frozen=True)
class HeatSLCPoincare:
    """Heat-flow contraction, q0 alpha-SLC plus symmetric p0 with beta-PI."""

    alpha: float
    beta: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha, beta=self.beta)

    def factor(self, t: float) -> float:
        t = _check_time(t)
        return 1.0 / ((1.0 + self.beta * t) * (1.0 + self.alpha * t) ** 2)


@dataclass(frozen=True)
class HeatPerturbed:
    """Heat-flow envelope when -log q0 = (alpha-strongly convex) + (lip-Lipschitz).

    The factor exceeds 1 for small t and decays like (1+alpha t)^-2 e^O(1)
    for large t, so contraction only holds eventually.
    """

    alpha: float
    lip: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha, lip=self.lip)

    def factor(self, t: float) -> float:
        t = _check_time(t)
        denom = self.alpha * t + 1.0
        bump = 2.0 * t * self.lip**2 / denom + 8.0 * self.lip * math.sqrt(t) / math.sqrt(denom)
        return math.exp(bump) / (1.0 + self.alpha * t) ** 2


@dataclass(frozen=True)
class OuSLC:
    """OU contraction under alpha-strong log-concavity of q0.

    Non-increasing in t iff 2*alpha >= gamma; for alpha < gamma/2 the factor
    rises above 1 before its eventual e^{-2 gamma t} decay.
    """

    alpha: float
    gamma: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha, gamma=self.gamma)

    def factor(self, t: float) -> float:
        t = _check_time(t)
        decay = math.exp(-2.0 * self.gamma * t)
        return self.gamma**2 * decay / (self.alpha + decay * (self.gamma - self.alpha)) ** 2


@dataclass(frozen=True)
class OuSLCPoincare:
    """OU contraction, q0 alpha-SLC plus symmetric p0 with beta-PI."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha, beta=self.beta, gamma=self.gamma)

    def factor(self, t: float) -> float:
        t = _check_time(t)
        decay = math.exp(-2.0 * self.gamma * t)
        pi_part = self.beta + decay * (self.gamma - self.beta)
        slc_part = self.alpha + decay * (self.gamma - self.alpha)
        return self.gamma**3 * decay**2 / (pi_part * slc_part**2)


@dataclass(frozen=True)
class ProxRate:
    """Per-iteration contraction of the proximal recursion; evaluate at k."""

    alpha: float
    eta: float

    def __post_init__(self):
        _require_positive(alpha=self.alpha, eta=self.eta)

    def factor(self, k: float) -> float:
        k = _check_time(k)
        return (1.0 + self.alpha * self.eta) ** (-2.0 * k)


BoundEnvelope = Union[HeatSLC, HeatSLCPoincare, HeatPerturbed, OuSLC, OuSLCPoincare, ProxRate]


# ---------------------------------------------------------------------------
# Time-derivative identities (finite-difference oracles live in the tests)


def fi_time_derivative(p: IsoGaussian, q: IsoGaussian, channel: Channel) -> float:
    """d/dt FI(p_t || q_t) at t=0 when both laws follow the same channel.

    Specialization of the general Fokker-Planck identity to isotropic
    Gaussians, where the log-ratio Hessian is the constant matrix
    (1/vq - 1/vp) I:

        heat:   -d (1/vq - 1/vp)^2 - (2/vq) FI(p, q)
        OU(g):  -2 d (1/vq - 1/vp)^2 - 2 (2/vq - g) FI(p, q)

    The weighted term can outweigh the (always nonpositive) Hessian term
    only when its weight is negative, i.e. vq > 2/g for OU; that is the
    only route to a positive derivative, and it additionally needs the
    mean-shift part of FI to dominate the variance part.
    """
    _check_dims(p, q)
    hess = (1.0 / q.var - 1.0 / p.var) ** 2 * p.dim
    fi = fisher_information(p, q)
    if isinstance(channel, Heat):
        return -hess - (2.0 / q.var) * fi
    if isinstance(channel, OU):
        return -2.0 * hess - 2.0 * (2.0 / q.var - channel.gamma) * fi
    raise ValueError(f"unsupported channel for time derivative: {channel!r}")


def kl_time_derivative(p: IsoGaussian, q: IsoGaussian, channel: Channel) -> float:
    """d/dt KL(p_t || q_t) = -(c/2) FI(p_t || q_t) along a shared channel."""
    if not isinstance(channel, (Heat, OU)):
        raise ValueError(f"unsupported channel for time derivative: {channel!r}")
    return -0.5 * channel.c * fisher_information(p, q)


# ---------------------------------------------------------------------------
# Iteration budget


def iteration_count(d: int, L: float, alpha: float, eps: float) -> int:
    """Smallest k with k >= (d L / alpha) ln(d L / eps); 0 when d L <= eps."""
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ValueError("d must be a positive integer")
    if not (0.0 < alpha <= L):
        raise ValueError("need 0 < alpha <= L")
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if d * L <= eps:
        return 0
    return max(0, math.ceil((d * L / alpha) * math.log(d * L / eps)))
