"""Bernstein functions: evaluation, membership classes and integrability.

A Bernstein function ``B`` is the Laplace exponent of a subordinator,
``E exp(-lam * S_t) = exp(-t * B(lam))``.  Built-in families carry closed
forms; custom ones wrap an arbitrary callable and are classified on a probe
grid only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

__all__ = [
    "LevyTriplet",
    "BernsteinFunction",
    "Verdict",
    "Condition12",
    "ClassReport",
    "linear",
    "stable",
    "b1",
    "b2",
    "gamma",
    "custom",
    "from_tag",
    "evaluate",
    "alternating_differences",
    "classify",
    "check_condition_1_2",
    "bound_constants",
    "default_probe_grid",
    "FAMILIES",
]

FAMILIES = ("linear", "stable", "b1", "b2", "gamma", "custom")

YES, NO, INCONCLUSIVE = "yes", "no", "inconclusive"


@dataclass(frozen=True)
class LevyTriplet:
    """Drift plus a jump law for subordinator sampling.

    ``rate`` is the total mass of the jump measure restricted to jumps that
    are simulated explicitly; ``jump_sampler(rng, n)`` draws ``n`` jump sizes
    from the normalised restriction.  ``small_jump_mean`` is the compensating
    drift ``int_0^cutoff x nu(dx)`` for jumps below the cutoff.
    """

    drift: float
    rate: float
    jump_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    small_jump_mean: float = 0.0
    cutoff: float = 0.0
    small_jump_var: float = 0.0

    @classmethod
    def from_density(cls, drift, density, cutoff=1e-4, upper=np.inf, table_size=4096):
        """Build a triplet from a Levy density ``density(x)`` on (0, inf).

        Jumps above ``cutoff`` are sampled by inverse CDF on a log-spaced
        table; the mean of the jumps below it is folded into the drift.
        """
        rate, _ = integrate.quad(density, cutoff, upper, limit=200)
        small_mean, _ = integrate.quad(lambda x: x * density(x), 0.0, cutoff, limit=200)
        small_var, _ = integrate.quad(lambda x: x * x * density(x), 0.0, cutoff, limit=200)
        top = upper if np.isfinite(upper) else _tail_cut(density, cutoff)
        xs = np.geomspace(cutoff, top, table_size)
        mid = np.sqrt(xs[1:] * xs[:-1])
        mass = density(mid) * np.diff(xs)
        cdf = np.concatenate([[0.0], np.cumsum(mass)])
        cdf /= cdf[-1]

        def sampler(rng, n):
            return np.interp(rng.random(n), cdf, xs)

        return cls(drift=float(drift), rate=float(rate), jump_sampler=sampler,
                   small_jump_mean=float(small_mean), cutoff=float(cutoff),
                   small_jump_var=float(small_var))


def _tail_cut(density, start):
    x = max(start, 1.0)
    while density(x) * x > 1e-14 and x < 1e12:
        x *= 2.0
    return x


@dataclass(frozen=True)
class BernsteinFunction:
    """An evaluable Laplace exponent with a family tag.

    Use the module constructors (:func:`stable`, :func:`b1`, ...) rather than
    instantiating directly.
    """

    family: str
    alpha: Optional[float] = None
    func: Optional[Callable] = field(default=None, repr=False, compare=False)
    derivative_at_zero: Optional[float] = None
    levy_triplet: Optional[LevyTriplet] = field(default=None, repr=False, compare=False)

    def __call__(self, lam):
        return evaluate(self, lam)

    @property
    def tag(self) -> str:
        if self.alpha is None:
            return self.family
        return f"{self.family}({self.alpha:g})"

    @property
    def builtin(self) -> bool:
        return self.family != "custom"

    def to_dict(self) -> dict:
        return {"family": self.family, "alpha": self.alpha}


def linear() -> BernsteinFunction:
    return BernsteinFunction("linear", None, derivative_at_zero=1.0)


def stable(alpha: float) -> BernsteinFunction:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"stable index must lie in (0, 1), got {alpha}")
    # B'(0) is infinite for lam**alpha; kept as None (not known finite)
    return BernsteinFunction("stable", float(alpha))


def b1(alpha: float) -> BernsteinFunction:
    """``1 - (1 + lam)**(alpha - 1)``, alpha in [0, 1)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"b1 parameter must lie in [0, 1), got {alpha}")
    return BernsteinFunction("b1", float(alpha), derivative_at_zero=1.0 - alpha)


def b2() -> BernsteinFunction:
    """``lam / (1 + lam)``."""
    return BernsteinFunction("b2", None, derivative_at_zero=1.0)


def gamma() -> BernsteinFunction:
    """``log(1 + lam)``, the Gamma subordinator with unit shape rate."""
    return BernsteinFunction("gamma", None, derivative_at_zero=1.0)


def custom(func, derivative_at_zero=None, levy_triplet=None) -> BernsteinFunction:
    """Wrap an arbitrary Laplace exponent; validity is not checked."""
    return BernsteinFunction("custom", None, func=func,
                             derivative_at_zero=derivative_at_zero,
                             levy_triplet=levy_triplet)


def from_tag(family: str, alpha: Optional[float] = None) -> BernsteinFunction:
    """Construct a built-in family from its tag, e.g. ``from_tag("stable", 0.5)``.

    The parameter may also be embedded in the tag: ``from_tag("stable(0.5)")``.
    """
    family = family.lower().strip()
    if family.endswith(")") and "(" in family:
        family, arg = family[:-1].split("(", 1)
        alpha = float(arg)
    if family == "linear":
        return linear()
    if family == "stable":
        return stable(_need(alpha, family))
    if family == "b1":
        return b1(_need(alpha, family))
    if family == "b2":
        return b2()
    if family == "gamma":
        return gamma()
    raise ValueError(f"unknown Bernstein family {family!r}")


def _need(alpha, family):
    if alpha is None:
        raise ValueError(f"family {family!r} needs an alpha parameter")
    return float(alpha)


def evaluate(B: BernsteinFunction, lam):
    """Return ``B(lam)``; scalar in, scalar out."""
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("Bernstein functions are evaluated on [0, inf) only")
    fam = B.family
    with np.errstate(over="ignore"):
        if fam == "linear":
            out = arr.copy()
        elif fam == "stable":
            out = arr ** B.alpha
        elif fam == "b1":
            out = -np.expm1((B.alpha - 1.0) * np.log1p(arr))
        elif fam == "b2":
            out = np.where(np.isinf(arr), 1.0, arr / (1.0 + arr))
        elif fam == "gamma":
            out = np.log1p(arr)
        else:
            out = np.asarray(B.func(arr), dtype=float)
    if np.ndim(lam) == 0:
        return float(out)
    return out


def alternating_differences(B: BernsteinFunction, grid, order: int = 3) -> bool:
    """Smoke test of complete monotonicity of ``B'`` by finite differences.

    Forward differences with step ``h = lam * 1e-3`` must satisfy
    ``(-1)**(n-1) * Delta^n B >= 0`` for ``n = 1..order``, up to rounding.
    """
    grid = np.asarray(grid, dtype=float)
    grid = grid[grid > 0]
    h = grid * 1e-3
    ks = np.arange(order + 1)
    vals = np.stack([evaluate(B, grid + k * h) for k in ks])  # (order+1, n)
    scale = np.max(np.abs(vals), axis=0) + 1e-300
    for n in range(1, order + 1):
        coeffs = np.array([(-1) ** (n - k) * math.comb(n, k) for k in range(n + 1)])
        diff = coeffs @ vals[: n + 1]
        slack = 64 * np.finfo(float).eps * scale * 2**n
        if np.any((-1) ** (n - 1) * diff < -slack):
            return False
    return True


# ---------------------------------------------------------------------------
# classification


@dataclass
class Verdict:
    verdict: str
    grid: np.ndarray
    ratios: np.ndarray
    method: str = "grid"
    grid_verdict: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "method": self.method,
            "grid_verdict": self.grid_verdict,
            "witness_grid": [float(x) for x in self.grid],
            "witness_ratios": [float(x) for x in self.ratios],
        }


@dataclass
class Condition12:
    verdict: str  # "finite" | "infinite" | "inconclusive"
    estimate: Optional[float]
    tail_slope: float
    d: int
    t: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "estimate": self.estimate,
                "tail_slope": self.tail_slope, "d": self.d, "t": self.t}


@dataclass
class ClassReport:
    family: str
    alpha: float
    in_bold_B: bool
    in_B_upper_alpha: Verdict
    in_B_lower_alpha: Verdict
    satisfies_1_2: dict = field(default_factory=dict)
    kappa_lower: Optional[float] = None
    kappa_upper: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "alpha": self.alpha,
            "in_bold_B": self.in_bold_B,
            "in_B_upper_alpha": self.in_B_upper_alpha.to_dict(),
            "in_B_lower_alpha": self.in_B_lower_alpha.to_dict(),
            "satisfies_1_2": {f"d={d},t={t:g}": c.to_dict()
                              for (d, t), c in self.satisfies_1_2.items()},
            "kappa_lower": self.kappa_lower,
            "kappa_upper": self.kappa_upper,
        }


def default_probe_grid() -> np.ndarray:
    return np.logspace(-4, 12, 161)


def _growth_index(B: BernsteinFunction):
    """Closed-form tail behaviour ``B(lam) ~ lam**a * (log lam)**b`` of built-ins."""
    return {
        "linear": (1.0, 0.0),
        "stable": (B.alpha, 0.0),
        "gamma": (0.0, 1.0),
        "b1": (0.0, 0.0),
        "b2": (0.0, 0.0),
    }[B.family]


def _analytic_verdicts(B, alpha):
    a, b = _growth_index(B)
    # ratio B / lam**alpha ~ lam**(a - alpha) * (log lam)**b
    if a > alpha or (a == alpha and b > 0):
        return YES, NO
    if a < alpha:
        return NO, YES
    return YES, YES


def _grid_verdicts(grid, ratios, tau=0.02, tau_small=0.002):
    """Decide liminf/limsup of the ratio from decade-averaged log-slopes."""
    logl = np.log10(grid)
    top = logl[-1]
    if top - logl[0] < 2.0 or np.any(ratios <= 0):
        return INCONCLUSIVE, INCONCLUSIVE
    logr = np.log10(np.maximum(ratios, 1e-300))
    at = lambda x: np.interp(x, logl, logr)  # noqa: E731
    s1 = at(top - 1.0) - at(top - 2.0)
    s2 = at(top) - at(top - 1.0)
    if abs(s2) <= tau_small or (abs(s2) <= tau and abs(s2) < 0.75 * abs(s1)):
        return YES, YES
    if s2 > tau and s2 >= 0.75 * s1:
        return YES, NO
    if s2 < -tau and s2 <= 0.75 * s1:
        return NO, YES
    return INCONCLUSIVE, INCONCLUSIVE


def classify(B: BernsteinFunction, alpha: float, probe_grid=None, pairs=(),
             kappa_grid=None, with_kappa: bool = True) -> ClassReport:
    """Membership of ``B`` in the classes with liminf / limsup of ``B/lam**alpha``.

    ``in_B_upper_alpha`` answers ``liminf B(lam)/lam**alpha > 0`` and
    ``in_B_lower_alpha`` answers ``limsup B(lam)/lam**alpha < inf``.  The
    probe grid must span six decades and reach ``1e8``; the last two decades
    form the tail window whose ratios are stored as witnesses.  Built-in
    families are decided from their closed-form growth index and the grid
    heuristic is recorded alongside for audit.  ``pairs`` is a sequence of
    ``(d, t)`` for which the integrability of ``r**(d/2-1) exp(-t B(r))`` is checked.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    grid = default_probe_grid() if probe_grid is None else np.asarray(probe_grid, float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("probe grid must be positive and increasing")
    if grid[-1] < 1e8 or np.log10(grid[-1] / grid[0]) < 6:
        raise ValueError("probe grid must span at least 6 decades and reach 1e8")

    vals = evaluate(B, grid)
    ratios = vals / grid**alpha
    window = grid >= grid[-1] / 100.0
    w_grid, w_ratio = grid[window], ratios[window]
    g_up, g_low = _grid_verdicts(grid, ratios)
    if B.builtin:
        up, low = _analytic_verdicts(B, alpha)
        method = "closed-form"
    else:
        up, low = g_up, g_low
        method = "grid"

    b0 = evaluate(B, 0.0)
    h = 1e-9
    slope0 = evaluate(B, h) / h
    in_bold = bool(abs(b0) == 0.0 and slope0 > 0 and alternating_differences(B, grid[grid <= 1e6]))

    report = ClassReport(
        family=B.tag,
        alpha=float(alpha),
        in_bold_B=in_bold,
        in_B_upper_alpha=Verdict(up, w_grid, w_ratio, method, g_up),
        in_B_lower_alpha=Verdict(low, w_grid, w_ratio, method, g_low),
    )
    for d, t in pairs:
        report.satisfies_1_2[(int(d), float(t))] = check_condition_1_2(B, d, t)
    if with_kappa and (up == YES or low == YES):
        kl, ku = bound_constants(B, alpha, kappa_grid, report=report)
        report.kappa_lower, report.kappa_upper = kl, ku
    return report


def check_condition_1_2(B: BernsteinFunction, d: int, t: float, r_max: float = 1e12) -> Condition12:
    """Decide whether ``int_1^inf r**(d/2-1) exp(-t B(r)) dr`` is finite.

    The log-log slope of the integrand over the last two decades below
    ``r_max`` is compared with -1: a slope at or above -1 (bounded ``B`` for
    instance) means divergence; a clearly steeper slope, or underflow, means
    the tail is integrable and the integral is evaluated by quadrature in
    ``u = log r`` with a geometric tail bound added.
    """
    if d < 1 or t <= 0:
        raise ValueError("need d >= 1 and t > 0")
    half = d / 2.0

    def log_g(r):
        return (half - 1.0) * np.log(r) - t * evaluate(B, r)

    lr = np.log(r_max)
    l_end, l_mid = log_g(r_max), log_g(r_max / 100.0)
    slope = float((l_end - l_mid) / np.log(100.0))
    margin = 0.05
    if np.isfinite(slope) and slope >= -1.0 + margin and l_end > -700:
        return Condition12("infinite", None, slope, int(d), float(t))
    if l_end > -700 and slope > -1.0 - margin:
        return Condition12("inconclusive", None, slope, int(d), float(t))

    def integrand(u):
        r = math.exp(u)
        return math.exp(half * u - t * evaluate(B, r))

    breaks = np.linspace(0.0, lr, 25)
    total, err = 0.0, 0.0
    with np.errstate(all="ignore"):
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            val, e = integrate.quad(integrand, lo, hi, limit=200)
            total += val
            err += e
    tail = math.exp(l_end) * r_max / (-1.0 - slope) if l_end > -700 else 0.0
    if not np.isfinite(total) or err > 1e-6 * max(total, 1.0):
        return Condition12("inconclusive", None, slope, int(d), float(t))
    return Condition12("finite", total + tail, slope, int(d), float(t))


def bound_constants(B: BernsteinFunction, alpha: float, grid=None, report: ClassReport = None):
    """Grid-certified constants ``kappa_lower`` and ``kappa_upper``.

    ``kappa_lower = min B(t) / min(t, t**alpha)`` is available when
    ``B`` has ``liminf B/lam**alpha > 0``; ``kappa_upper = max B(t)/t**alpha``
    when the limsup is finite.  The unavailable one is ``None``; if neither
    class verdict is ``yes`` a ``ValueError`` is raised.
    """
    if report is None:
        report = classify(B, alpha, with_kappa=False)
    grid = np.logspace(-8, 8, 1601) if grid is None else np.asarray(grid, float)
    vals = evaluate(B, grid)
    kl = ku = None
    if report.in_B_upper_alpha.verdict == YES:
        kl = float(np.min(vals / np.minimum(grid, grid**alpha)))
    if report.in_B_lower_alpha.verdict == YES:
        ku = float(np.max(vals / grid**alpha))
    if kl is None and ku is None:
        raise ValueError(f"{B.tag} belongs to neither class for alpha={alpha}")
    return kl, ku
