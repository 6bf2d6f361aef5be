"""Subordinator sampling and Laplace / fractional-moment conformance checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .bernstein import BernsteinFunction, evaluate

__all__ = [
    "SubordinatorPath",
    "LaplaceCheck",
    "positive_stable",
    "sample_increments",
    "sample_marginal",
    "validate_laplace",
    "fractional_moment",
    "replica_rng",
]


def replica_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, *keys)``, e.g. ``(seed, row, replica)``."""
    keys = keys or (0,)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SubordinatorPath:
    grid: np.ndarray
    values: np.ndarray
    family: str
    seed: Optional[int] = None

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def positive_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """One-sided stable variables with ``E exp(-lam X) = exp(-lam**alpha)``.

    Kanter's representation: with ``U ~ Unif(0, pi)`` and ``E ~ Exp(1)``,
    ``X = sin(aU)/sin(U)**(1/a) * (sin((1-a)U)/E)**((1-a)/a)``.
    """
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = alpha
    # log-space keeps alpha near 0 from overflowing the intermediate powers
    log_x = (np.log(np.sin(a * u)) - np.log(np.sin(u)) / a
             + (1.0 - a) / a * (np.log(np.sin((1.0 - a) * u)) - np.log(e)))
    return np.exp(log_x)


def _draw(B: BernsteinFunction, dt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent draws of ``S_dt`` for each entry of ``dt``."""
    dt = np.asarray(dt, dtype=float)
    fam = B.family
    if fam == "linear":
        return dt.copy()
    if fam == "stable":
        return dt ** (1.0 / B.alpha) * positive_stable(B.alpha, dt.shape, rng)
    if fam == "gamma":
        return rng.gamma(np.maximum(dt, 1e-300))
    if fam in ("b1", "b2"):
        shape_per_jump = 1.0 if fam == "b2" else 1.0 - B.alpha
        n_jumps = rng.poisson(dt)
        out = np.zeros(dt.shape)
        hit = n_jumps > 0
        # a sum of k Gamma(s, 1) jumps is Gamma(k s, 1)
        out[hit] = rng.gamma(n_jumps[hit] * shape_per_jump)
        return out
    lt = B.levy_triplet
    if lt is None:
        raise ValueError(
            f"cannot sample family {B.tag!r}: custom Bernstein functions need a levy_triplet")
    out = (lt.drift + lt.small_jump_mean) * dt
    n_jumps = rng.poisson(lt.rate * dt)
    total = int(n_jumps.sum())
    if total:
        jumps = lt.jump_sampler(rng, total)
        owner = np.repeat(np.arange(dt.size), n_jumps.ravel())
        out = out.ravel() + np.bincount(owner, weights=jumps, minlength=dt.size)
        out = out.reshape(dt.shape)
    return out


def sample_increments(B: BernsteinFunction, grid, rng: np.random.Generator,
                      seed: Optional[int] = None) -> SubordinatorPath:
    """Sample ``S`` on an increasing time grid with exact increments per family.

    Values are stored, not increments; ``S_0 = 0`` is implicit so a grid that
    starts above zero gets a first value drawn over ``[0, grid[0]]``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at t >= 0")
    dt = np.diff(np.concatenate([[0.0], grid]))
    inc = _draw(B, dt, rng)
    if grid[0] == 0.0:
        inc[0] = 0.0
    values = np.cumsum(inc)
    return SubordinatorPath(grid=grid, values=values, family=B.tag, seed=seed)


def sample_marginal(B: BernsteinFunction, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent copies of ``S_t``."""
    return _draw(B, np.full(int(n), float(t)), rng)


@dataclass
class LaplaceCheck:
    mean: float
    target: float
    se: float
    z: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "target": self.target, "se": self.se, "z": self.z}


def validate_laplace(B: BernsteinFunction, lam: float, t: float, n: int,
                     rng: np.random.Generator) -> LaplaceCheck:
    """z-score of the sample mean of ``exp(-lam S_t)`` against ``exp(-t B(lam))``."""
    if n < 1000:
        raise ValueError("validate_laplace needs n >= 1000")
    s = sample_marginal(B, t, n, rng)
    y = np.exp(-lam * s)
    mean = float(y.mean())
    target = math.exp(-t * evaluate(B, lam))
    # a degenerate sample (deterministic subordinator) has exactly zero spread
    se = 0.0 if np.ptp(y) == 0.0 else float(y.std(ddof=1) / math.sqrt(n))
    diff = mean - target
    if se == 0.0:
        z = 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    return LaplaceCheck(mean, target, se, z)


def fractional_moment(B: BernsteinFunction, r: float, p: float) -> float:
    """``E[S_r**p]`` from ``p/Gamma(1-p) * int_0^inf (1 - exp(-r B(u))) u**(-p-1) du``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    if r == 0.0:
        return 0.0

    def f(u):
        return -math.expm1(-r * evaluate(B, u)) * u ** (-p - 1.0)

    head, e1 = integrate.quad(f, 0.0, 1.0, limit=400)
    tail, e2 = integrate.quad(f, 1.0, np.inf, limit=400)
    total = head + tail
    if not np.isfinite(total) or e1 + e2 > 1e-7 * max(abs(total), 1.0):
        raise ArithmeticError(
            f"fractional moment quadrature did not converge (estimate {total}, error {e1 + e2})")
    return p / special.gamma(1.0 - p) * total
