"""Transport distances between discrete measures and to the invariant measure.

Costs are ``rho**p`` (power), ``min(1, rho)**p`` (truncated) and
``min(n, rho**2)`` (capped), each raised to its outer exponent after
optimisation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize, sparse
from scipy.special import logsumexp

from .diffusion import ModelSpace, sample_invariant
from .pathlab import DiscreteMeasure, SubordinatedPath, empirical_measure

__all__ = [
    "CostSpec",
    "power",
    "truncated",
    "capped",
    "distance",
    "distance_to_invariant",
    "dual_lower",
    "dual_certificate",
    "transport_lp",
    "sinkhorn",
    "LP_CAP",
]

LP_CAP = 1_000_000  # largest n*m handed to the dense LP


@dataclass(frozen=True)
class CostSpec:
    """Ground cost built from the model's distance ``rho``.

    ``shape`` is ``"power"`` (``rho**p``), ``"truncated"`` (``min(1, rho)**p``)
    or ``"capped"`` (``min(n, rho**2)``).  ``model=None`` means the Euclidean
    distance on plain coordinates.
    """

    shape: str = "power"
    p: float = 2.0
    n: float = math.inf
    model: Optional[ModelSpace] = None

    def __post_init__(self):
        if self.shape not in ("power", "truncated", "capped"):
            raise ValueError(f"unknown cost shape {self.shape!r}")
        if self.p <= 0:
            raise ValueError("p must be positive")
        if self.shape == "capped" and not self.n > 0:
            raise ValueError("cap n must be positive")

    @property
    def outer_exponent(self) -> float:
        if self.shape == "capped":
            return 0.5
        return 1.0 / max(self.p, 1.0)

    def base(self, x, y) -> np.ndarray:
        if self.model is not None:
            return self.model.pairwise(x, y)
        a = np.asarray(x, dtype=float)
        b = np.asarray(y, dtype=float)
        if a.ndim == 1:
            return np.abs(a[:, None] - b[None, :])
        return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))

    def apply(self, rho):
        if self.shape == "power":
            return rho**self.p
        if self.shape == "truncated":
            return np.minimum(rho, 1.0) ** self.p
        return np.minimum(rho * rho, self.n)

    def matrix(self, x, y) -> np.ndarray:
        return self.apply(self.base(x, y))


def power(p: float = 2.0, model: Optional[ModelSpace] = None) -> CostSpec:
    return CostSpec("power", p, math.inf, model)


def truncated(p: float = 1.0, model: Optional[ModelSpace] = None) -> CostSpec:
    return CostSpec("truncated", p, math.inf, model)


def capped(n: float, model: Optional[ModelSpace] = None) -> CostSpec:
    return CostSpec("capped", 2.0, n, model)


# ---------------------------------------------------------------------------
# solvers


def transport_lp(a, b, C) -> float:
    """Exact optimal cost ``min <pi, C>`` over couplings of ``a`` and ``b`` (HiGHS)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = C.shape
    if n * m > LP_CAP:
        raise ValueError(f"LP instance {n}x{m} exceeds the cap; use method='entropic'")
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    A = sparse.vstack([rows, cols]).tocsr()
    res = optimize.linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None),
                           method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    pi = np.clip(res.x, 0.0, None)
    return float(pi @ C.ravel())


def sinkhorn(a, b, C, reg: float, tol: float = 1e-12, max_iter: int = 100_000):
    """Log-domain Sinkhorn; returns ``(<pi, C>, pi)`` for the entropic plan."""
    if reg <= 0:
        raise ValueError("reg must be positive")
    la, lb = np.log(a), np.log(b)
    K = -C / reg
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    for _ in range(max_iter):
        f = reg * (la - logsumexp(K + g[None, :] / reg, axis=1))
        g = reg * (lb - logsumexp(K + f[:, None] / reg, axis=0))
        logpi = K + (f[:, None] + g[None, :]) / reg
        err = np.abs(np.exp(logsumexp(logpi, axis=1)) - a).sum()
        if err < tol:
            break
    pi = np.exp(K + (f[:, None] + g[None, :]) / reg)
    return float((pi * C).sum()), pi


def _brute_force(x, y, cost: CostSpec) -> float:
    n = len(x)
    if n != len(y) or n > 8:
        raise ValueError("brute force needs equal-weight measures with at most 8 points")
    C = cost.matrix(x, y)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, float(C[np.arange(n), perm].sum()))
    return best / n


# -- one-dimensional quantile couplings -------------------------------------


def _sorted_atoms(m: DiscreteMeasure):
    order = np.argsort(m.points, kind="stable")
    x = m.points[order]
    c = np.cumsum(m.weights[order])
    c[-1] = 1.0
    return x, c


def _quantile_line(m1: DiscreteMeasure, m2: DiscreteMeasure, p: float) -> float:
    x1, c1 = _sorted_atoms(m1)
    x2, c2 = _sorted_atoms(m2)
    cuts = np.union1d(c1, c2)
    du = np.diff(np.concatenate([[0.0], cuts]))
    mid = cuts - du / 2.0
    i1 = np.minimum(np.searchsorted(c1, mid), x1.size - 1)
    i2 = np.minimum(np.searchsorted(c2, mid), x2.size - 1)
    return float(np.sum(du * np.abs(x1[i1] - x2[i2]) ** p))


def _circle_shift_cost(x1, c1, x2, c2, C, theta, p):
    # int_0^1 |Q1(u) - Q2(u + theta)|^p du with Q2 lifted periodically
    shifted = np.concatenate([c2 + j - theta for j in (-1, 0, 1, 2)])
    cuts = np.union1d(c1, shifted[(shifted > 0) & (shifted < 1)])
    cuts = np.union1d(cuts, [1.0])
    du = np.diff(np.concatenate([[0.0], cuts]))
    mid = cuts - du / 2.0
    q1 = x1[np.minimum(np.searchsorted(c1, mid), x1.size - 1)]
    v = mid + theta
    lap = np.floor(v)
    q2 = x2[np.minimum(np.searchsorted(c2, v - lap), x2.size - 1)] + C * lap
    return float(np.sum(du * np.abs(q1 - q2) ** p))


def _quantile_circle(m1: DiscreteMeasure, m2: DiscreteMeasure, C: float, p: float) -> float:
    x1, c1 = _sorted_atoms(DiscreteMeasure(np.mod(m1.points, C), m1.weights))
    x2, c2 = _sorted_atoms(DiscreteMeasure(np.mod(m2.points, C), m2.weights))
    return _golden_min(lambda th: _circle_shift_cost(x1, c1, x2, c2, C, th, p), -1.0, 1.0)


def _golden_min(f, lo, hi, iters=90):
    # golden-section search; the circle shift costs are convex in theta
    r = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1, x2 = b - r * (b - a), a + r * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - r * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + r * (b - a)
            f2 = f(x2)
    return float(min(f1, f2, f(0.5 * (a + b))))


def distance(mu1: DiscreteMeasure, mu2: DiscreteMeasure, cost: CostSpec,
             method: str = "exact_lp", reg: Optional[float] = None) -> float:
    """Optimal transport distance between two discrete measures.

    Parameters
    ----------
    method : {"exact_lp", "quantile_1d", "entropic", "brute_force"}
        ``quantile_1d`` needs a one-dimensional line or circle and a power
        cost with ``p >= 1``.  ``entropic`` needs ``reg`` and returns the
        transport cost of the regularised plan.  ``brute_force`` enumerates
        permutations of equal-weight measures with at most 8 points.
    """
    if method == "exact_lp":
        val = transport_lp(mu1.weights, mu2.weights, cost.matrix(mu1.points, mu2.points))
    elif method == "quantile_1d":
        if cost.shape != "power" or cost.p < 1:
            raise ValueError("quantile coupling is optimal only for convex power costs, p >= 1")
        model = cost.model
        if mu1.points.ndim != 1 or (model is not None and model.d != 1):
            raise ValueError("quantile_1d needs one-dimensional measures")
        if model is not None and model.periodic:
            val = _quantile_circle(mu1, mu2, model.size, cost.p)
        else:
            val = _quantile_line(mu1, mu2, cost.p)
    elif method == "entropic":
        if reg is None:
            raise ValueError("entropic method needs reg")
        val, _ = sinkhorn(mu1.weights, mu2.weights, cost.matrix(mu1.points, mu2.points), reg)
    elif method == "brute_force":
        n = mu1.size
        if n != mu2.size or not (np.allclose(mu1.weights, 1.0 / n, rtol=0, atol=1e-15)
                                 and np.allclose(mu2.weights, 1.0 / n, rtol=0, atol=1e-15)):
            raise ValueError("brute force needs equal-weight measures of the same size")
        val = _brute_force(mu1.points, mu2.points, cost)
    else:
        raise ValueError(f"unknown method {method!r}")
    return max(val, 0.0) ** cost.outer_exponent


# ---------------------------------------------------------------------------
# distance to the invariant measure


def _circle_to_uniform(m: DiscreteMeasure, C: float, p: float) -> float:
    """``W_p^p`` between atoms on a circle of circumference ``C`` and the uniform law."""
    x, c = _sorted_atoms(DiscreteMeasure(np.mod(m.points, C) / C, m.weights))
    c0 = np.concatenate([[0.0], c[:-1]])
    if p == 2.0:
        # g(u) = Q(u) - u;  W2^2 = C^2 Var(g)
        eg = float(np.dot(x, c - c0)) - 0.5
        eg2 = float(np.sum(((x - c0) ** 3 - (x - c) ** 3) / 3.0))
        return C * C * max(eg2 - eg * eg, 0.0)

    def J(theta):
        a = x - theta
        lo, hi = a - c0, a - c
        return float(np.sum(np.sign(lo) * np.abs(lo) ** (p + 1) - np.sign(hi) * np.abs(hi) ** (p + 1))) / (p + 1)

    return C**p * _golden_min(J, -1.0, 1.0)


def _line_to_model(m: DiscreteMeasure, model: ModelSpace, p: float) -> float:
    x, c = _sorted_atoms(m)
    c0 = np.concatenate([[0.0], c[:-1]])
    w = c - c0
    a = model.quantile(c0)
    b = model.quantile(c)
    if model.compact:
        a[0], b[-1] = 0.0, model.size
    else:
        a[0], b[-1] = -np.inf, np.inf
    M1 = lambda y: model.partial_moment(y, 1)  # noqa: E731
    if p == 2.0:
        val = np.sum(w * x * x) - 2.0 * np.sum(x * (M1(b) - M1(a))) + model.moment(2)
        return max(float(val), 0.0)
    if p == 1.0:
        F = model.cdf
        lo_end = np.clip(x, a, b)
        below = x * (F(lo_end) - F(a)) - (M1(lo_end) - M1(a))
        above = (M1(b) - M1(lo_end)) - x * (F(b) - F(lo_end))
        return float(np.sum(below + above))
    raise ValueError("semi-exact line route supports p in {1, 2}")


def _graph_truncated_w1(m: DiscreteMeasure, model: ModelSpace, bins: int) -> tuple[float, float]:
    """``W~_1`` to ``mu`` as a min-cost flow on binned measures.

    Bins form a cycle (circle) or a path (line); every bin also connects to a
    hub at cost 1/2, so graph distances equal ``min(1, rho)`` between bin
    centres.  Returns the value and the binning error bound.
    """
    if model.periodic:
        lo, hi = 0.0, model.size
    elif model.compact:
        lo, hi = 0.0, model.size
    else:
        lo = float(min(model.quantile(1e-13), np.min(m.points)))
        hi = float(max(model.quantile(1 - 1e-13), np.max(m.points)))
    edges = np.linspace(lo, hi, bins + 1)
    h = edges[1] - edges[0]
    pts = np.mod(m.points, model.size) if model.periodic else m.points
    idx = np.clip(((pts - lo) / h).astype(np.int64), 0, bins - 1)
    a = np.bincount(idx, weights=m.weights, minlength=bins)
    if model.periodic or (model.compact and model.U is None):
        target = np.full(bins, 1.0 / bins)
        tail = 0.0
    else:
        F = model.cdf(edges)
        target = np.diff(F)
        tail = float(F[0] + 1.0 - F[-1])
        target[0] += F[0]
        target[-1] += 1.0 - F[-1]
    s = a - target
    s -= s.mean()
    n_arc = bins if model.periodic else bins - 1
    i = np.arange(n_arc)
    j = (i + 1) % bins
    nodes = np.arange(bins)
    # columns: forward arcs, backward arcs, bin->hub, hub->bin
    heads = np.concatenate([i, j, nodes, np.full(bins, bins)])
    tails = np.concatenate([j, i, np.full(bins, bins), nodes])
    nvar = heads.size
    A = sparse.csr_matrix((np.concatenate([np.ones(nvar), -np.ones(nvar)]),
                           (np.concatenate([heads, tails]), np.tile(np.arange(nvar), 2))),
                          shape=(bins + 1, nvar))
    cost = np.concatenate([np.full(2 * n_arc, h), np.full(2 * bins, 0.5)])
    res = optimize.linprog(cost, A_eq=A[:-1], b_eq=s, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"flow LP failed: {res.message}")
    return float(res.fun), 0.75 * h + tail


def distance_to_invariant(mu1: DiscreteMeasure, model: ModelSpace, cost: CostSpec,
                          reference_n: Optional[int] = None, rng=None, bins: int = 4096,
                          method: Optional[str] = None) -> tuple[float, str]:
    """Distance from ``mu1`` to the invariant measure ``mu`` and a note on its bias.

    Exact routes: power costs on the circle (lifted-quantile formula) and on
    one-dimensional lines for ``p`` in {1, 2} (quantile function of ``mu``).
    ``W~_1`` in one dimension uses a binned min-cost flow whose error bound is
    reported.  Everything else compares against an i.i.d. sample of ``mu``
    of size ``reference_n``; that proxy overestimates in expectation by at
    most the sample's own distance to ``mu``.
    """
    cost = cost if cost.model is not None else CostSpec(cost.shape, cost.p, cost.n, model)
    one_d = model.d == 1 and mu1.points.ndim == 1
    if method is None:
        if cost.shape == "power" and cost.p >= 1 and one_d and (
                model.periodic or cost.p in (1.0, 2.0)):
            method = "quantile"
        elif cost.shape == "truncated" and cost.p == 1.0 and one_d:
            method = "flow"
        else:
            method = "reference"
    if method == "quantile":
        if model.periodic:
            val = _circle_to_uniform(mu1, model.size, cost.p)
        else:
            val = _line_to_model(mu1, model, cost.p)
        return val ** cost.outer_exponent, "exact: quantile coupling against mu"
    if method == "flow":
        val, err = _graph_truncated_w1(mu1, model, bins)
        return val, f"binned min-cost flow with {bins} bins; absolute error <= {err:.3g}"
    if method != "reference":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng() if rng is None else rng
    n_ref = reference_n or 10 * mu1.size
    ref = DiscreteMeasure.uniform(sample_invariant(model, n_ref, rng))
    if mu1.size * n_ref <= LP_CAP:
        val = distance(mu1, ref, cost, "exact_lp")
        how = "exact LP"
    else:
        C = cost.matrix(mu1.points, ref.points)
        reg = 1e-2 * float(C.mean())
        val = sinkhorn(mu1.weights, ref.weights, C, reg)[0] ** cost.outer_exponent
        how = f"entropic, reg={reg:.3g}"
    note = (f"proxy: {how} against {n_ref} i.i.d. draws of mu; biased upward by at most "
            "the reference sample's own distance to mu")
    return val, note


# ---------------------------------------------------------------------------
# dual lower bound


def _check_test_function(f: Callable, model: Optional[ModelSpace], tol: float = 1e-6):
    if model is None:
        return 1.0, 1.0
    if model.d != 1:
        pts = sample_invariant(model, 200_000, np.random.default_rng(7))
        mean = float(np.mean(f(pts)))
        if abs(mean) > 5.0 * np.std(f(pts)) / math.sqrt(pts.shape[0]) + tol:
            raise ValueError(f"test function has mu-mean {mean:.3g}, not 0")
        vals = f(pts)
        return float(np.max(np.abs(vals))), float(vals.max() - vals.min())
    if model.compact:
        ys = np.linspace(0.0, model.size, 200_001)
        w = model.density(ys)
    else:
        lo, hi = model.quantile(1e-12), model.quantile(1 - 1e-12)
        ys = np.linspace(lo, hi, 200_001)
        w = model.density(ys)
    fy = f(ys)
    from scipy.integrate import simpson
    mean = float(simpson(fy * w, x=ys))
    if abs(mean) > tol:
        raise ValueError(f"test function has mu-mean {mean:.3g}, not 0")
    sup = float(np.max(np.abs(fy)))
    lip = float(np.max(np.abs(np.diff(fy)) / np.diff(ys)))
    if sup > 1 + 1e-9 or lip > 1 + 1e-6:
        raise ValueError(f"test function needs sup|f| <= 1 and Lip(f) <= 1 (got {sup:.4g}, {lip:.4g})")
    return sup, float(fy.max() - fy.min())


def dual_lower(f: Callable, path, t: Optional[float] = None, model: Optional[ModelSpace] = None,
               check: bool = True) -> float:
    """``|(1/t) int_0^t f(X_s) ds|`` for a bounded 1-Lipschitz, ``mu``-centred ``f``.

    ``path`` is a :class:`SubordinatedPath` (with ``t``) or a ready-made
    :class:`DiscreteMeasure`.
    """
    m = path if isinstance(path, DiscreteMeasure) else empirical_measure(path, t)
    if model is None and isinstance(path, SubordinatedPath):
        model = path.model
    if check:
        _check_test_function(f, model)
    return abs(m.integrate(f))


def dual_certificate(f: Callable, path, t: Optional[float] = None,
                     model: Optional[ModelSpace] = None) -> float:
    """Certified lower bound on ``W~_1(mu_t, mu)``.

    ``f`` is Lipschitz for ``min(1, rho)`` with constant ``max(Lip f, osc f)``,
    so dividing :func:`dual_lower` by that constant (at least 1) certifies.
    """
    m = path if isinstance(path, DiscreteMeasure) else empirical_measure(path, t)
    if model is None and isinstance(path, SubordinatedPath):
        model = path.model
    _, osc = _check_test_function(f, model)
    return abs(m.integrate(f)) / max(1.0, osc)
