"""Analytic eigen-data, heat kernels and the spectral functionals built on them.

Eigenvalues are indexed with multiplicity, ``lambda_0 = 0`` first, and the
eigenfunctions are orthonormal in ``L^2(mu)``.  Every truncated series comes
with a certified bound on the omitted tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .bernstein import BernsteinFunction, evaluate
from .diffusion import ModelSpace

__all__ = [
    "SpectralData",
    "SpectralTailError",
    "SpectralFunctionals",
    "LimitSum",
    "spectral_data",
    "heat_kernel",
    "trace_gamma",
    "eta_alpha",
    "ball_functionals",
    "gamma_tilde",
    "delta_eps",
    "limit_sum",
    "regularized_bound",
    "regularized_density",
    "xi_second_moment",
    "green_integral",
    "functionals",
]

CRAMER = 1.086435  # sup_y exp(-y^2/4)|He_n(y)|/sqrt(n!)


class SpectralTailError(ValueError):
    """The requested truncation tolerance cannot be certified."""

    def __init__(self, message, achievable=math.inf):
        super().__init__(message)
        self.achievable = achievable


# ---------------------------------------------------------------------------
# one-dimensional factors


@dataclass(frozen=True)
class _Factor:
    """A 1-d eigen-family: levels ``f(k)`` of multiplicity ``mult`` for ``k >= 1``."""

    kind: str  # "trig", "cos" or "hermite"
    scale: float  # circumference, length or kappa

    @property
    def mult(self) -> int:
        return 2 if self.kind == "trig" else 1

    def level(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "trig":
            return (2.0 * np.pi * k / self.scale) ** 2
        if self.kind == "cos":
            return (np.pi * k / self.scale) ** 2
        return 2.0 * self.scale * k

    def level_of(self, j):
        """Level ``k`` carrying eigen-index ``j``."""
        j = np.asarray(j)
        return (j + 1) // 2 if self.kind == "trig" else j

    def values(self, n: int) -> np.ndarray:
        return self.level(self.level_of(np.arange(n)))

    def index_limit(self, lam):
        """Number of indices with eigenvalue <= lam (vectorised)."""
        lam = np.asarray(lam, dtype=float)
        if self.kind == "trig":
            out = 1.0 + 2.0 * np.floor(self.scale * np.sqrt(lam) / (2.0 * np.pi) + 1e-12)
        elif self.kind == "cos":
            out = 1.0 + np.floor(self.scale * np.sqrt(lam) / np.pi + 1e-12)
        else:
            out = 1.0 + np.floor(lam / (2.0 * self.scale) + 1e-12)
        return int(out) if out.ndim == 0 else out

    def phi(self, x, n: int) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        out = np.empty((x.size, n))
        if n == 0:
            return out
        out[:, 0] = 1.0
        if self.kind == "hermite":
            # rows are contiguous in the recursion; the transpose is a view
            y = math.sqrt(2.0 * self.scale) * x
            rows = np.empty((n, x.size))
            rows[0] = 1.0
            if n > 1:
                rows[1] = y
            for j in range(1, n - 1):
                rows[j + 1] = (y * rows[j] - math.sqrt(j) * rows[j - 1]) / math.sqrt(j + 1)
            return rows.T
        j = np.arange(1, n)
        k = self.level_of(j)
        if self.kind == "trig":
            arg = np.outer(x, 2.0 * np.pi * k / self.scale)
            out[:, 1:] = np.where(j % 2 == 1, np.sqrt(2.0) * np.cos(arg), np.sqrt(2.0) * np.sin(arg))
        else:
            out[:, 1:] = np.sqrt(2.0) * np.cos(np.outer(x, np.pi * k / self.scale))
        return out

    def phi_bound(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if self.kind == "hermite":
            return np.maximum(1.0, CRAMER * np.exp(self.scale * x * x / 2.0))
        return np.full(x.size, math.sqrt(2.0))

    def tail(self, g: Callable, n: int) -> float:
        """Bound on ``sum_{j >= n} g(lambda_j)`` for nonincreasing ``g``."""
        k0 = int(self.level_of(n))
        if self.kind == "trig" and n % 2 == 0 and n > 0:
            # index n is the sine partner of level k0; its cosine is already counted
            head = float(g(self.level(k0)))
            k0 += 1
        else:
            head = 0.0
        k0 = max(k0, 1)
        first = self.mult * float(g(self.level(k0)))
        # log substitution u = k0 e^s turns power tails into exponential ones
        # (the range stops at u = k0 e^600, past every summable tail's mass)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            integral, err = integrate.quad(
                lambda s: float(g(self.level(k0 * math.exp(s)))) * k0 * math.exp(s),
                0.0, 600.0, limit=800, points=[1.0, 5.0, 20.0, 80.0])
        if not np.isfinite(integral) or err > 1e-3 * abs(integral) + 1e-300:
            return math.inf
        return head + first + self.mult * (integral + err)


def _count_exponent(factor: _Factor) -> float:
    return 1.0 if factor.kind == "hermite" else 0.5


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues and eigenfunctions of ``-L`` for a model with an explicit spectrum.

    Parameters
    ----------
    source : {"circle", "torus", "interval_neumann", "ou_hermite"}
    factor : the one-dimensional eigen-family; ``d`` copies are tensorised.
    """

    source: str
    factor: _Factor
    d: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def counting_exponent(self) -> float:
        """``N(lambda) = O(lambda**nu)`` growth of the eigenvalue counting function."""
        return self.d * _count_exponent(self.factor)

    # -- tables -----------------------------------------------------------
    def _product_table(self, n: int):
        lam_cut = self.factor.level(1)
        while True:
            m = self.factor.index_limit(lam_cut)
            lam1 = self.factor.values(m)
            lam = np.zeros(1)
            idx = np.zeros((1, 0), dtype=np.int64)
            for _ in range(self.d):
                tot = lam[:, None] + lam1[None, :]
                keep = tot <= lam_cut * (1 + 1e-12)
                rows, cols = np.nonzero(keep)
                lam = tot[rows, cols]
                idx = np.column_stack([idx[rows], cols])
            if lam.size >= n:
                order = np.lexsort((np.arange(lam.size), lam))
                return lam[order], idx[order]
            lam_cut *= 2.0

    def table(self, n: int):
        """First ``n`` eigenvalues and, for tensor products, their multi-indices."""
        if self.d == 1:
            return self.factor.values(n), None
        key = ("table", n)
        if key not in self._cache:
            lam, idx = self._product_table(n)
            self._cache.clear()
            self._cache[key] = (lam[:n], idx[:n])
        return self._cache[key]

    def eigenvalues(self, n: int) -> np.ndarray:
        return self.table(n)[0]

    def phi(self, x, n: int) -> np.ndarray:
        """Matrix ``phi_j(x_m)`` of shape ``(len(x), n)``, ``j = 0..n-1``."""
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return self.factor.phi(x, n)
        x = x.reshape(-1, self.d)
        _, idx = self.table(n)
        width = int(idx.max()) + 1
        out = np.ones((x.shape[0], n))
        for c in range(self.d):
            out *= self.factor.phi(x[:, c], width)[:, idx[:, c]]
        return out

    def phi_bound(self, x) -> np.ndarray:
        """Pointwise bound on ``sup_j |phi_j(x)|``."""
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return self.factor.phi_bound(x)
        x = x.reshape(-1, self.d)
        return np.prod([self.factor.phi_bound(x[:, c]) for c in range(self.d)], axis=0)

    def count_upper(self, lam):
        """Upper bound on ``#{i : lambda_i <= lam}`` (vectorised)."""
        m = np.asarray(self.factor.index_limit(lam), dtype=float)
        if self.d > 1:
            if self.factor.kind == "hermite":
                m = special.comb(m - 1 + self.d, self.d, exact=False)
            else:
                m = m**self.d
        return float(m) if m.ndim == 0 else m

    # -- tails --------------------------------------------------------------
    def tail_bound(self, g: Callable, n: int) -> float:
        """Certified bound on ``sum_{i >= n} g(lambda_i)`` for nonincreasing ``g >= 0``.

        Tensor products use Abel summation over geometric shells ``a_j``:
        with ``M_j <= count_upper(a_j) - n`` eigenvalues of index ``>= n``
        below ``a_j``, the tail is at most
        ``sum_{j=1}^J M_j (g(a_{j-1}) - g(a_j)) + count_upper(a_{J+1}) g(a_J)``
        for every ``J``; the smallest of these is returned.
        """
        if self.d == 1:
            return self.factor.tail(g, n)
        a0 = max(float(self.eigenvalues(n)[-1]), float(self.factor.level(1)))
        a = a0 * np.exp(np.arange(0.0, math.log(1e300 / a0), 0.01))
        with np.errstate(all="ignore"):
            ga = np.asarray(g(a), dtype=float)
            cnt = self.count_upper(a)
            m = np.maximum(cnt - n, 0.0)
            steps = m[1:] * (ga[:-1] - ga[1:])
            partial = np.concatenate([[0.0], np.cumsum(steps)])
            ends = partial[:-1] + cnt[1:] * ga[:-1]
        ends = ends[np.isfinite(ends)]
        return float(ends.min()) if ends.size else math.inf

    def truncation(self, g: Callable, tol: float, n_max: int = 20_000_000) -> tuple[int, float]:
        """Smallest tested ``n`` with ``tail_bound(g, n) <= tol`` (doubling search)."""
        if not summable(g, self.counting_exponent):
            raise SpectralTailError("series diverges: weights decay too slowly", math.inf)
        n = 16
        best = math.inf
        cap = n_max if self.d == 1 else min(n_max, 2_000_000)
        while n <= cap:
            tb = self.tail_bound(g, n)
            best = min(best, tb)
            if tb <= tol:
                return n, tb
            n *= 2
        raise SpectralTailError(f"tail bound {best:.3g} exceeds tolerance {tol:.3g}", best)


def summable(g: Callable, nu: float, margin: float = 0.05) -> bool:
    """Tail test: ``sum g(lambda_i)`` with ``N(lambda) ~ lambda**nu`` converges.

    Power-law tails must decay faster than ``lambda**-(nu + margin)``; tails in
    the margin converge too slowly to certify and are reported as divergent.
    """
    g_hi, g_mid = float(g(1e12)), float(g(1e10))
    if g_hi == 0.0:
        return True
    if g_mid <= 0.0:
        return True
    slope = (math.log(g_hi) - math.log(g_mid)) / math.log(100.0)
    return slope < -nu - margin


def spectral_data(model: ModelSpace) -> SpectralData:
    """Analytic eigen-data of a built-in model; ``ValueError`` when none exists."""
    if model.U is not None:
        raise ValueError("no closed-form spectrum once a perturbation U is present")
    if model.kind == "circle":
        return SpectralData("circle", _Factor("trig", model.size), 1)
    if model.kind == "torus":
        return SpectralData("torus", _Factor("trig", model.size), model.d)
    if model.kind == "interval":
        return SpectralData("interval_neumann", _Factor("cos", model.size), 1)
    if model.kind == "ou" or (model.kind == "euclidean" and model.q == 2.0):
        return SpectralData("ou_hermite", _Factor("hermite", model.kappa), model.d)
    raise ValueError(f"no closed-form spectrum for {model.kind} with q={model.q}")


def _weights(B: Optional[BernsteinFunction], t: float) -> Callable:
    if B is None:
        return lambda lam: np.exp(-t * np.asarray(lam, dtype=float))
    return lambda lam: np.exp(-t * evaluate(B, lam))


def heat_kernel(spec: SpectralData, t: float, x, y, B: Optional[BernsteinFunction] = None,
                tol: float = 1e-10, n_terms: Optional[int] = None):
    """``p_t(x, y) = 1 + sum_i w_i phi_i(x) phi_i(y)`` with ``w_i = exp(-t B(lambda_i))``.

    Without ``B`` the weights are ``exp(-t lambda_i)``.  ``x`` and ``y`` are
    aligned point arrays.  The truncation is chosen so the omitted terms are
    below ``tol`` at every requested point.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    g = _weights(B, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bound = float(np.max(spec.phi_bound(x)) * np.max(spec.phi_bound(y)))
    if n_terms is None:
        n_terms, _ = spec.truncation(g, tol / bound)
    w = g(spec.eigenvalues(n_terms))
    xf = x.reshape(-1, spec.d) if spec.d > 1 else x.ravel()
    yf = y.reshape(-1, spec.d) if spec.d > 1 else y.ravel()
    xf, yf = np.broadcast_arrays(xf, yf)
    out = np.empty(xf.shape[0])
    chunk = max(1, 4_000_000 // n_terms)  # bounds the eigenfunction tables in memory
    for a in range(0, out.size, chunk):
        b = a + chunk
        out[a:b] = np.einsum("ij,ij,j->i", spec.phi(xf[a:b], n_terms), spec.phi(yf[a:b], n_terms), w)
    return out.reshape(np.broadcast_shapes(np.shape(x)[: x.ndim - (spec.d > 1)],
                                           np.shape(y)[: y.ndim - (spec.d > 1)]))


def trace_gamma(spec: SpectralData, t: float, B: Optional[BernsteinFunction] = None,
                tol: float = 1e-12) -> float:
    """``gamma(t) = 1 + sum_{i>=1} exp(-t lambda_i)`` (or subordinated weights)."""
    if t <= 0:
        raise ValueError("t must be positive")
    g = _weights(B, t)
    n, _ = spec.truncation(g, tol)
    return float(np.sum(g(spec.eigenvalues(n))))


def eta_alpha(spec: SpectralData, alpha: float, eps: float, tol: float = 1e-12) -> float:
    """``1 + int_eps^1 gamma(u) u**alpha du``."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if eps == 1.0:
        return 1.0
    val, _ = integrate.quad(lambda u: trace_gamma(spec, u, tol=tol) * u**alpha, eps, 1.0,
                            limit=200, epsrel=1e-10)
    return 1.0 + val


# ---------------------------------------------------------------------------
# ball functionals


def _log_sf_power(y, kappa, q):
    """log P(X > y) for the symmetric law with density proportional to exp(-kappa|x|^q)."""
    y = np.asarray(y, dtype=float)
    a = 1.0 / q
    z = kappa * np.abs(y) ** q
    sf = 0.5 * special.gammaincc(a, z)
    with np.errstate(divide="ignore"):
        out = np.log(sf)
    big = z > 600
    if np.any(big):
        zb = z[big]
        series = 1.0 + (a - 1.0) / zb + (a - 1.0) * (a - 2.0) / zb**2
        out[big] = (a - 1.0) * np.log(zb) - zb + np.log(series) - special.gammaln(a) - math.log(2.0)
    neg = y < 0
    out[neg] = np.log1p(-0.5 * special.gammaincc(a, z[neg]))
    return out


def _gamma_tilde_power_1d(model: ModelSpace, t: float) -> float:
    kappa, q = model.kappa, model.q
    r = math.sqrt(t)
    logz = math.log(model.normalizer)

    def integrand(x):
        # x >= 0; mu(B(x, r)) = SF(x - r) - SF(x + r)
        lo = float(_log_sf_power(np.array([x - r]), kappa, q)[0])
        hi = float(_log_sf_power(np.array([x + r]), kappa, q)[0])
        log_mass = lo + math.log1p(-math.exp(hi - lo))
        return math.exp(-kappa * x**q - logz - log_mass)

    scale = (1.0 / (kappa * q * r)) ** (1.0 / (q - 1.0))
    pts = [0.0] + [scale * 10.0**k for k in range(0, 6)]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(integrand, a, b, limit=400, epsrel=1e-10)
        total += val
    return 2.0 * total


def gamma_tilde(model: ModelSpace, t: float, n_mc: int = 4000, rng=None) -> float:
    """``int mu(dx) / mu(B(x, sqrt t))``; returns ``inf`` when a ball mass underflows."""
    if t <= 0:
        raise ValueError("t must be positive")
    r = math.sqrt(t)
    if model.kind == "circle" and model.U is None:
        return max(model.size / (2.0 * r), 1.0)
    if model.kind == "interval" and model.U is None:
        L = model.size

        def inv_mass(x):
            return L / (min(x + r, L) - max(x - r, 0.0))

        val, _ = integrate.quad(inv_mass, 0.0, L, points=[min(r, L), max(L - r, 0.0)], limit=200)
        return val / L
    if model.kind == "torus" and model.U is None and model.d == 2:
        a = model.size
        if r >= a * math.sqrt(2.0) / 2.0:
            return 1.0

        def half_chord(x):
            return min(math.sqrt(max(r * r - x * x, 0.0)), a / 2.0)

        area, _ = integrate.quad(lambda x: 2.0 * half_chord(x), -min(r, a / 2), min(r, a / 2), limit=200)
        return a * a / area
    if model.kind in ("euclidean", "ou") and model.U is None and model.d == 1:
        return _gamma_tilde_power_1d(model, t)
    # Monte Carlo fallback: outer sample x, inner ball masses from an independent sample
    from .diffusion import sample_invariant
    rng = np.random.default_rng(12345) if rng is None else rng
    xs = sample_invariant(model, n_mc, rng)
    ys = sample_invariant(model, 4 * n_mc, rng)
    mass = np.array([np.mean(model.distance(np.broadcast_to(x, ys.shape), ys) <= r) for x in xs])
    if np.any(mass == 0.0):
        return math.inf
    return float(np.mean(1.0 / mass))


def ball_functionals(model: ModelSpace, t: float, alpha: float, eps: float) -> tuple[float, float]:
    """``(gamma_tilde(t), 1 + int_eps^1 gamma_tilde(u) u**alpha du)``."""
    gt = gamma_tilde(model, t)
    if eps == 1.0:
        return gt, 1.0
    val, _ = integrate.quad(lambda u: gamma_tilde(model, u) * u**alpha, eps, 1.0, limit=200)
    return gt, 1.0 + val


# ---------------------------------------------------------------------------
# delta(eps)


def delta_eps(model: ModelSpace, eps: float, method: str = "auto", n_pairs: int = 100_000,
              rng=None, fine_dt: float = 1e-3) -> float:
    """``E^mu[rho(X_0, X_eps)^2]`` for the stationary diffusion.

    ``method="spectral"`` integrates ``rho^2`` against the eigen-expansion of
    ``p_eps`` (circle, torus, interval); ``method="mc"`` averages over
    stationary pairs; ``"auto"`` picks spectral where available.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if method == "auto":
        method = "spectral" if model.compact and model.U is None else "mc"
    if method == "spectral":
        if model.kind in ("circle", "torus"):
            return model.d * _delta_circle(model.size, eps)
        if model.kind == "interval":
            return _delta_interval(model.size, eps)
        raise ValueError(f"no spectral route for {model.kind}")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    from .diffusion import evolve, sample_invariant
    rng = np.random.default_rng(0) if rng is None else rng
    x0 = sample_invariant(model, n_pairs, rng)
    x1 = evolve(model, x0, eps, rng, fine_dt=min(fine_dt, eps / 20.0))
    return float(np.mean(model.distance(x0, x1) ** 2))


def _delta_circle(C, eps, tol=1e-15):
    # int rho(0,y)^2 (1 + 2 sum e^{-lam_k eps} cos(2 pi k y / C)) dy / C
    k = np.arange(1, 1 + max(64, int(C / (2 * np.pi) * math.sqrt(40.0 / eps)) + 1))
    lam = (2.0 * np.pi * k / C) ** 2
    terms = (-1.0) ** k * np.exp(-lam * eps) / k**2
    return C * C / 12.0 + C * C / np.pi**2 * float(np.sum(terms))


def _delta_interval(L, eps):
    k = np.arange(1, 1 + max(64, int(L / np.pi * math.sqrt(40.0 / eps)) + 1), 2)
    lam = (np.pi * k / L) ** 2
    return L * L / 6.0 - 16.0 * L * L / np.pi**4 * float(np.sum(np.exp(-lam * eps) / k**4))


# ---------------------------------------------------------------------------
# limit sums and regularised bounds


@dataclass
class LimitSum:
    value: float
    truncation_index: int
    tail_bound: float
    divergent: bool = False

    def to_dict(self) -> dict:
        # JSON has no infinity; a divergent sum is reported as null
        fin = lambda v: float(v) if math.isfinite(v) else None
        return {"sum": fin(self.value), "truncation_index": self.truncation_index,
                "tail_bound": fin(self.tail_bound), "divergent": self.divergent}


def limit_sum(spec: SpectralData, B: BernsteinFunction, c: float = 2.0, tol: float = 1e-8) -> LimitSum:
    """``sum_{i>=1} c / (lambda_i B(lambda_i))`` with a certified tail bound."""
    if tol <= 0:
        raise ValueError("tol must be positive")

    def g(lam):
        lam = np.asarray(lam, dtype=float)
        return c / (lam * evaluate(B, lam))

    if not summable(g, spec.counting_exponent):
        return LimitSum(math.inf, 0, math.inf, True)
    n, tb = spec.truncation(g, tol)
    lam = spec.eigenvalues(n)[1:]
    return LimitSum(float(np.sum(g(lam))), n, tb, False)


def regularized_bound(xi, spec: SpectralData, eps: float) -> float:
    """``4 sum_i |xi_i|^2 / (lambda_i exp(2 lambda_i eps))`` over ``i = 1..len(xi)``."""
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        return 0.0
    lam = spec.eigenvalues(xi.size + 1)[1:]
    return float(4.0 * np.sum(xi**2 / lam * np.exp(-2.0 * lam * eps)))


def regularized_density(xi, spec: SpectralData, eps: float, y):
    """Density ``1 + sum_i exp(-lambda_i eps) xi_i phi_i(y)`` with respect to ``mu``."""
    xi = np.asarray(xi, dtype=float)
    lam = spec.eigenvalues(xi.size + 1)
    coef = np.concatenate([[1.0], np.exp(-lam[1:] * eps) * xi])
    return spec.phi(y, xi.size + 1) @ coef


def xi_second_moment(b: float, t: float) -> float:
    """``t E|xi_i(t)|^2`` under a stationary start, ``b = B(lambda_i)``.

    Equals ``(2/t) int_0^t int_{s1}^t exp(-b (s2 - s1)) ds2 ds1``.
    """
    bt = b * t
    return (2.0 / b) * (1.0 + math.expm1(-bt) / bt)


def green_integral(b: float, t: float) -> float:
    """``4 int_0^{t/2} (1 - 2s/t) exp(-2 b s) ds`` by quadrature."""
    val, _ = integrate.quad(lambda s: (1.0 - 2.0 * s / t) * math.exp(-2.0 * b * s), 0.0, t / 2.0,
                            epsabs=1e-13, epsrel=1e-12)
    return 4.0 * val


@dataclass
class SpectralFunctionals:
    gamma: Callable
    eta_alpha: Callable
    gamma_tilde: Callable
    eta_tilde: Callable
    delta: Callable


def functionals(model: ModelSpace) -> SpectralFunctionals:
    """Bundle ``gamma``, ``eta^alpha``, ``gamma_tilde``, ``eta_tilde`` and ``delta`` for a model."""
    try:
        spec = spectral_data(model)
    except ValueError:
        spec = None

    def need_spec():
        if spec is None:
            raise ValueError("model has no explicit spectrum")
        return spec

    return SpectralFunctionals(
        gamma=lambda t: trace_gamma(need_spec(), t),
        eta_alpha=lambda alpha, eps: eta_alpha(need_spec(), alpha, eps),
        gamma_tilde=lambda t: gamma_tilde(model, t),
        eta_tilde=lambda alpha, eps: ball_functionals(model, 1.0, alpha, eps)[1],
        delta=lambda eps: delta_eps(model, eps),
    )
