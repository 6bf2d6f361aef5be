"""Model spaces and the base diffusion with generator ``Delta + grad V . grad``.

Points of one-dimensional models are plain arrays of shape ``(n,)``; points
of ``d``-dimensional models have shape ``(n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numba
import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "ModelSpace",
    "DiffusionState",
    "DiffusionBlowUp",
    "PotentialMoments",
    "circle",
    "torus",
    "interval",
    "euclidean",
    "ou",
    "model_from_dict",
    "step",
    "transition",
    "simulate_at",
    "evolve",
    "sample_invariant",
    "potential_moments",
]

TWO_PI = 2.0 * math.pi
GRAD_CLAMP = 1e-8


class DiffusionBlowUp(FloatingPointError):
    """Raised when an Euler-Maruyama step produces a non-finite position."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ModelSpace:
    """A state space with distance, drift and invariant measure.

    ``kind`` is one of ``circle``, ``torus``, ``interval``, ``euclidean`` or
    ``ou``.  ``size`` is the circumference (circle), side (torus) or length
    (interval).  Euclidean models carry ``V = -kappa |x|**q + U``; ``ou`` is
    the special case ``q = 2``.
    """

    kind: str
    d: int = 1
    size: float = TWO_PI
    kappa: float = 1.0
    q: float = 2.0
    reflecting: bool = True
    U: Optional[Callable] = field(default=None, repr=False, compare=False)
    grad_U: Optional[Callable] = field(default=None, repr=False, compare=False)

    # -- geometry ---------------------------------------------------------
    @property
    def compact(self) -> bool:
        return self.kind in ("circle", "torus", "interval")

    @property
    def periodic(self) -> bool:
        return self.kind in ("circle", "torus")

    @property
    def has_potential(self) -> bool:
        return self.kind in ("euclidean", "ou") or self.U is not None

    def _coords(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., None] if self.d == 1 else x

    def distance(self, x, y):
        """Elementwise geodesic distance between aligned point arrays."""
        diff = np.abs(self._coords(x) - self._coords(y))
        if self.periodic:
            diff = np.minimum(diff, self.size - diff)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def pairwise(self, x, y):
        """Distance matrix of shape ``(len(x), len(y))``."""
        a, b = self._coords(x), self._coords(y)
        diff = np.abs(a[:, None, :] - b[None, :, :])
        if self.periodic:
            diff = np.minimum(diff, self.size - diff)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def project(self, x):
        """Map raw coordinates back into the state space (wrap or fold)."""
        x = np.asarray(x, dtype=float)
        if self.periodic:
            return np.mod(x, self.size)
        if self.kind == "interval":
            return _fold(x, self.size)
        return x

    # -- potential --------------------------------------------------------
    def V(self, x):
        c = self._coords(x)
        if self.kind in ("euclidean", "ou"):
            r = np.sqrt(np.sum(c * c, axis=-1))
            out = -self.kappa * r**self.q
        else:
            out = np.zeros(c.shape[:-1])
        if self.U is not None:
            out = out + self.U(x)
        return out

    def grad_V(self, x):
        x = np.asarray(x, dtype=float)
        c = self._coords(x)
        if self.kind in ("euclidean", "ou"):
            r = np.sqrt(np.sum(c * c, axis=-1, keepdims=True))
            if self.q == 2.0:
                g = -2.0 * self.kappa * c
            else:
                g = -self.kappa * self.q * np.maximum(r, GRAD_CLAMP) ** (self.q - 2.0) * c
        else:
            g = np.zeros_like(c)
        if self.grad_U is not None:
            g = g + self._coords(self.grad_U(x))
        return g[..., 0] if self.d == 1 else g

    @cached_property
    def normalizer(self) -> float:
        """``Z_V``, the integral of ``exp(V)`` over the state space."""
        if self.periodic:
            base = self.size**self.d
            if self.U is None:
                return base
        if self.kind == "interval":
            if self.U is None:
                return self.size
            val, _ = integrate.quad(lambda s: math.exp(float(self.V(s))), 0.0, self.size, limit=200)
            return val
        if self.U is None:
            # int r^(d-1) exp(-kappa r^q) times the sphere area
            area = 2.0 * math.pi ** (self.d / 2.0) / special.gamma(self.d / 2.0)
            radial = special.gamma(self.d / self.q) / (self.q * self.kappa ** (self.d / self.q))
            return area * radial
        if self.d == 1:
            val, _ = integrate.quad(lambda s: math.exp(float(self.V(s))), -np.inf, np.inf, limit=400)
            return val
        if self.d == 2:
            val, _ = integrate.dblquad(lambda y, x: math.exp(float(self.V(np.array([x, y])))),
                                       -np.inf, np.inf, -np.inf, np.inf)
            return val
        raise NotImplementedError("Z_V by quadrature is limited to d <= 2")

    def density(self, x):
        """Normalised invariant density ``exp(V)/Z_V``."""
        return np.exp(self.V(x)) / self.normalizer

    @property
    def max_dt(self) -> float:
        if self.kind in ("euclidean", "ou"):
            return 0.25 / self.kappa if self.q <= 2.0 else 1e-2 / self.kappa
        return math.inf

    @property
    def exact_transition(self) -> bool:
        """Whether transitions can be drawn exactly (no time stepping)."""
        if self.U is not None:
            return False
        return self.kind in ("circle", "torus", "interval", "ou") and (
            self.kind != "interval" or self.reflecting)

    @cached_property
    def spectrum(self):
        from .spectral import spectral_data
        return spectral_data(self)

    # -- one-dimensional quantile machinery ------------------------------
    @cached_property
    def _table(self):
        if self.d != 1:
            raise ValueError("quantile tables exist for one-dimensional models only")
        return _QuantileTable(self)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "interval" and self.U is None:
            return np.clip(x / self.size, 0.0, 1.0)
        if self.kind == "circle":
            return np.clip(x / self.size, 0.0, 1.0)
        if self.kind in ("euclidean", "ou") and self.U is None and self.d == 1:
            s = np.sign(x)
            return 0.5 + 0.5 * s * special.gammainc(1.0 / self.q, self.kappa * np.abs(x) ** self.q)
        return self._table.cdf(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind in ("interval", "circle") and self.U is None:
            return u * self.size
        if self.kind in ("euclidean", "ou") and self.U is None and self.d == 1:
            v = 2.0 * u - 1.0
            g = special.gammaincinv(1.0 / self.q, np.abs(v))
            return np.sign(v) * (g / self.kappa) ** (1.0 / self.q)
        return self._table.quantile(u)

    def partial_moment(self, x, k: int):
        """``int_{-inf}^x y**k mu(dy)`` for one-dimensional models, k in {0, 1, 2}."""
        x = np.asarray(x, dtype=float)
        if k == 0:
            return self.cdf(x)
        if self.kind in ("interval", "circle") and self.U is None:
            xc = np.clip(x, 0.0, self.size)
            return xc ** (k + 1) / ((k + 1) * self.size)
        if self.kind in ("euclidean", "ou") and self.U is None and self.d == 1:
            # int_0^a y^k e^{-kappa y^q} dy = kappa^{-(k+1)/q} / q * lower_gamma((k+1)/q, kappa a^q)
            a = (k + 1.0) / self.q
            scale = self.kappa ** (-a) / self.q * special.gamma(a) / self.normalizer
            ax = np.abs(x)
            inner = scale * special.gammainc(a, self.kappa * ax**self.q)
            full = scale
            if k % 2 == 1:
                return np.where(x < 0, inner - full, inner - full)
            return np.where(x < 0, full - inner, full + inner)
        return self._table.partial(x, k)

    def moment(self, k: int) -> float:
        big = np.inf if not self.compact else self.size
        return float(self.partial_moment(big, k))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "circle":
            out["circumference"] = self.size
        elif self.kind == "torus":
            out["side"] = self.size
        elif self.kind == "interval":
            out["length"] = self.size
            out["reflecting"] = self.reflecting
        else:
            out["kappa"] = self.kappa
            out["q"] = self.q
        return out


def circle(circumference: float = TWO_PI) -> ModelSpace:
    return ModelSpace("circle", 1, float(circumference))


def torus(d: int = 2, side: float = TWO_PI) -> ModelSpace:
    return ModelSpace("torus", int(d), float(side))


def interval(length: float = 1.0, reflecting: bool = True, U=None, grad_U=None) -> ModelSpace:
    if not reflecting:
        raise NotImplementedError("only reflecting (Neumann) intervals are supported")
    return ModelSpace("interval", 1, float(length), reflecting=True, U=U, grad_U=grad_U)


def euclidean(d: int = 1, kappa: float = 1.0, q: float = 2.0, U=None, grad_U=None) -> ModelSpace:
    """``R^d`` with ``V(x) = -kappa |x|**q + U(x)``; ``U`` needs a bounded gradient."""
    if q <= 1.0:
        raise ValueError("the potential exponent q must exceed 1")
    if (U is None) != (grad_U is None):
        raise ValueError("U and grad_U must be given together")
    return ModelSpace("euclidean", int(d), math.inf, float(kappa), float(q), U=U, grad_U=grad_U)


def ou(d: int = 1, kappa: float = 1.0) -> ModelSpace:
    """Ornstein-Uhlenbeck model, ``V = -kappa |x|**2``."""
    return ModelSpace("ou", int(d), math.inf, float(kappa), 2.0)


def model_from_dict(spec: dict) -> ModelSpace:
    """Build a model from a config mapping ``{kind, d, kappa, q, length, circumference}``."""
    kind = spec["kind"]
    if kind == "circle":
        return circle(spec.get("circumference", TWO_PI))
    if kind == "torus":
        return torus(spec.get("d", 2), spec.get("side", TWO_PI))
    if kind == "interval":
        return interval(spec.get("length", 1.0), spec.get("reflecting", True))
    if kind == "euclidean":
        return euclidean(spec.get("d", 1), spec.get("kappa", 1.0), spec.get("q", 2.0))
    if kind == "ou":
        return ou(spec.get("d", 1), spec.get("kappa", 1.0))
    raise ValueError(f"unknown model kind {kind!r}")


def _fold(x, length):
    y = np.mod(x, 2.0 * length)
    return np.where(y > length, 2.0 * length - y, y)


class _QuantileTable:
    """CDF, quantile and partial moments of a 1-d density from a quadrature table."""

    def __init__(self, model: ModelSpace, n: int = 40001):
        if model.compact:
            lo, hi = 0.0, model.size
        else:
            lo, hi = _support_bounds(model)
        xs = np.linspace(lo, hi, n)
        logf = model.V(xs)
        f = np.exp(logf - logf.max())
        mass = integrate.cumulative_simpson(f, x=xs, initial=0.0)
        m1 = integrate.cumulative_simpson(f * xs, x=xs, initial=0.0)
        m2 = integrate.cumulative_simpson(f * xs * xs, x=xs, initial=0.0)
        z = mass[-1]
        self.xs = xs
        self.F = np.maximum.accumulate(np.clip(mass / z, 0.0, 1.0))
        self.M1 = m1 / z
        self.M2 = m2 / z

    def cdf(self, x):
        return np.interp(x, self.xs, self.F, left=0.0, right=1.0)

    def quantile(self, u):
        return np.interp(u, self.F, self.xs)

    def partial(self, x, k):
        arr = {1: self.M1, 2: self.M2}[k]
        return np.interp(x, self.xs, arr, left=0.0, right=arr[-1])


def _support_bounds(model):
    # V(x) < V_max - 745 beyond these bounds (density below double precision)
    x = 1.0
    vmax = max(float(model.V(0.0)), float(np.max(model.V(np.linspace(-5, 5, 1001)))))
    while float(model.V(x)) > vmax - 745.0 or float(model.V(-x)) > vmax - 745.0:
        x *= 1.5
    return -x, x


# ---------------------------------------------------------------------------
# stepping


@dataclass
class DiffusionState:
    position: np.ndarray
    clock: float = 0.0


def step(model: ModelSpace, state: DiffusionState, dt: float, rng: np.random.Generator) -> DiffusionState:
    """One Euler-Maruyama step ``x + grad V(x) dt + sqrt(2 dt) xi`` then wrap/fold."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt > model.max_dt:
        raise ValueError(f"dt={dt} exceeds the model's maximum stable step {model.max_dt}")
    x = np.asarray(state.position, dtype=float)
    if dt == 0.0:
        return DiffusionState(x.copy(), state.clock)
    noise = rng.standard_normal(x.shape)
    drift = model.grad_V(x) if model.has_potential else 0.0
    new = model.project(x + drift * dt + math.sqrt(2.0 * dt) * noise)
    if not np.all(np.isfinite(new)):
        raise DiffusionBlowUp("non-finite position after Euler-Maruyama step", state)
    return DiffusionState(new, state.clock + dt)


def transition(model: ModelSpace, x, dt, rng: np.random.Generator):
    """Exact draw of ``X_dt`` given ``X_0 = x`` (models without stepping error only).

    ``dt`` may be an array broadcastable against the leading axis of ``x``.
    """
    if not model.exact_transition:
        raise ValueError(f"no exact transition for model kind {model.kind!r}")
    x = np.asarray(x, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if model.d > 1 and dt.ndim:
        dt = dt[..., None]
    xi = rng.standard_normal(x.shape)
    if model.kind == "ou":
        decay = np.exp(-2.0 * model.kappa * dt)
        sd = np.sqrt(-np.expm1(-4.0 * model.kappa * dt) / (2.0 * model.kappa))
        return x * decay + sd * xi
    return model.project(x + np.sqrt(2.0 * dt) * xi)


@numba.njit(cache=True)
def _em_power(x0, times, n_sub, noise, kappa, q, boundary, size):
    # boundary: 0 none, 1 periodic, 2 reflecting interval
    d = x0.shape[0]
    out = np.empty((times.shape[0], d))
    x = x0.copy()
    t_prev = 0.0
    k = 0
    for j in range(times.shape[0]):
        gap = times[j] - t_prev
        m = n_sub[j]
        if m > 0:
            h = gap / m
            sq = np.sqrt(2.0 * h)
            for _ in range(m):
                r2 = 0.0
                for c in range(d):
                    r2 += x[c] * x[c]
                r = np.sqrt(r2)
                if r < 1e-8:
                    r = 1e-8
                fac = 0.0
                if kappa > 0.0:
                    fac = -kappa * q * r ** (q - 2.0)
                for c in range(d):
                    x[c] = x[c] + fac * x[c] * h + sq * noise[k, c]
                    if boundary == 1:
                        x[c] = x[c] % size
                    elif boundary == 2:
                        y = x[c] % (2.0 * size)
                        x[c] = 2.0 * size - y if y > size else y
                    if not np.isfinite(x[c]):
                        return out, j
                k += 1
        out[j] = x
        t_prev = times[j]
    return out, -1


def simulate_at(model: ModelSpace, x0, times, rng: np.random.Generator, fine_dt: float = 1e-3):
    """Positions of one diffusion path at increasing diffusion times ``times``.

    Exact transitions are chained where available.  Otherwise every gap is
    split into equal Euler-Maruyama substeps no longer than ``fine_dt`` so the
    requested times are hit exactly, never interpolated.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be nondecreasing and nonnegative")
    x0 = np.asarray(x0, dtype=float)
    gaps = np.diff(np.concatenate([[0.0], times]))
    if model.exact_transition:
        if model.kind == "ou":
            out = np.empty((times.size,) + x0.shape)
            decay = np.exp(-2.0 * model.kappa * gaps)
            sd = np.sqrt(-np.expm1(-4.0 * model.kappa * gaps) / (2.0 * model.kappa))
            xi = rng.standard_normal((times.size,) + x0.shape)
            x = x0.copy()
            for j in range(times.size):
                x = x * decay[j] + sd[j] * xi[j]
                out[j] = x
            return out
        shape = (times.size,) + x0.shape
        incr = rng.standard_normal(shape)
        sd = np.sqrt(2.0 * gaps)
        if model.d > 1:
            sd = sd[:, None]
        return model.project(x0 + np.cumsum(sd * incr, axis=0))
    if fine_dt > model.max_dt:
        raise ValueError(f"fine_dt={fine_dt} exceeds the model's maximum stable step {model.max_dt}")
    n_sub = np.ceil(gaps / fine_dt - 1e-12).astype(np.int64)
    n_sub[gaps == 0] = 0
    if model.grad_U is not None:
        return _em_generic(model, x0, times, n_sub, rng)
    d = model.d
    noise = rng.standard_normal((int(n_sub.sum()), d))
    boundary = 1 if model.periodic else (2 if model.kind == "interval" else 0)
    kappa = model.kappa if model.kind in ("euclidean", "ou") else 0.0
    out, bad = _em_power(np.atleast_1d(x0).astype(float), times, n_sub, noise,
                         float(kappa), float(model.q), boundary, float(model.size))
    if bad >= 0:
        raise DiffusionBlowUp(f"non-finite position before time {times[bad]}",
                              DiffusionState(out[bad - 1] if bad else x0, times[bad]))
    return out[:, 0] if d == 1 else out


def evolve(model: ModelSpace, x, t: float, rng: np.random.Generator, fine_dt: float = 1e-3):
    """Advance an ensemble of independent particles by diffusion time ``t``."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    if model.exact_transition:
        return transition(model, x, t, rng)
    m = max(1, math.ceil(t / fine_dt - 1e-12))
    state = DiffusionState(x, 0.0)
    for _ in range(m):
        state = step(model, state, t / m, rng)
    return state.position


def _em_generic(model, x0, times, n_sub, rng):
    out = np.empty((times.size,) + np.shape(x0))
    state = DiffusionState(np.asarray(x0, dtype=float), 0.0)
    t_prev = 0.0
    for j, (t, m) in enumerate(zip(times, n_sub)):
        if m:
            h = (t - t_prev) / m
            for _ in range(m):
                state = step(model, state, h, rng)
        out[j] = state.position
        t_prev = t
    return out


# ---------------------------------------------------------------------------
# invariant measure


def sample_invariant(model: ModelSpace, n: int, rng: np.random.Generator,
                     return_meta: bool = False, burn_in: float = 20.0, thin: float = 1.0,
                     fine_dt: float = 1e-3):
    """i.i.d. draws from the invariant measure ``mu``.

    Exact for every built-in model except a ``d >= 2`` Euclidean model with a
    perturbation ``U``, which falls back to a thinned long-run diffusion
    (``burn_in`` and ``thin`` in diffusion time); ``meta["exact"]`` records
    which route was used.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    meta = {"exact": True, "method": ""}
    if model.periodic and model.U is None:
        shape = (n,) if model.d == 1 else (n, model.d)
        pts = rng.uniform(0.0, model.size, shape)
        meta["method"] = "uniform"
    elif model.kind == "interval":
        pts = model.quantile(rng.random(n))
        meta["method"] = "inverse-cdf"
    elif model.kind in ("euclidean", "ou") and model.U is None:
        if model.d == 1:
            pts = model.quantile(rng.random(n))
            meta["method"] = "inverse-cdf"
        else:
            # radial part: kappa r^q ~ Gamma(d/q); direction uniform on the sphere
            g = rng.gamma(model.d / model.q, size=n)
            r = (g / model.kappa) ** (1.0 / model.q)
            v = rng.standard_normal((n, model.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            pts = r[:, None] * v
            meta["method"] = "radial-gamma"
    elif model.d == 1:
        pts = model.quantile(rng.random(n))
        meta["method"] = "inverse-cdf-table"
    else:
        x0 = np.zeros(model.d)
        times = burn_in + thin * np.arange(n)
        pts = simulate_at(model, x0, times, rng, fine_dt=fine_dt)
        meta.update(exact=False, method="thinned-diffusion", burn_in=burn_in, thin=thin)
    if not np.all(np.isfinite(pts)):
        raise ValueError("invariant density could not be normalised")
    return (pts, meta) if return_meta else pts


@dataclass
class PotentialMoments:
    grad_sq: float
    grad_abs: float
    se_sq: float = 0.0
    se_abs: float = 0.0
    method: str = "quadrature"


def potential_moments(model: ModelSpace, n_mc: int = 200_000, rng=None) -> PotentialMoments:
    """``(mu(|grad V|^2), mu(|grad V|))``; ``inf`` flags a divergent tail."""
    if not model.has_potential:
        return PotentialMoments(0.0, 0.0)
    if model.kind in ("euclidean", "ou") and model.U is None:
        d, k, q = model.d, model.kappa, model.q

        def radial(f):
            w = lambda r: r ** (d - 1) * math.exp(-k * r**q)  # noqa: E731
            num, _ = integrate.quad(lambda r: w(r) * f(r), 0.0, np.inf, limit=400)
            den, _ = integrate.quad(w, 0.0, np.inf, limit=400)
            return num / den

        g = lambda r: k * q * max(r, GRAD_CLAMP) ** (q - 1.0)  # noqa: E731
        return PotentialMoments(_finite(radial(lambda r: g(r) ** 2)), _finite(radial(g)))
    if model.d == 1:
        lo, hi = (0.0, model.size) if model.compact else (-np.inf, np.inf)

        def mom(power):
            f = lambda s: abs(float(model.grad_V(s))) ** power * float(model.density(s))  # noqa: E731
            val, err = integrate.quad(f, lo, hi, limit=400)
            return val if np.isfinite(val) and err < 1e-6 * max(val, 1.0) else math.inf

        return PotentialMoments(mom(2), mom(1))
    rng = np.random.default_rng(0) if rng is None else rng
    pts = sample_invariant(model, n_mc, rng)
    gn = np.linalg.norm(model.grad_V(pts), axis=-1)
    return PotentialMoments(float(np.mean(gn**2)), float(np.mean(gn)),
                            float(np.std(gn**2) / math.sqrt(n_mc)),
                            float(np.std(gn) / math.sqrt(n_mc)), "monte-carlo")


def _finite(x):
    return float(x) if np.isfinite(x) else math.inf


def ks_uniform_statistic(samples, size):
    """Kolmogorov-Smirnov distance of ``samples`` from ``Unif(0, size)``."""
    return float(stats.kstest(np.asarray(samples) / size, "uniform").statistic)
