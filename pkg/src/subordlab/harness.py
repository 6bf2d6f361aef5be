"""Replicated experiments, exponent fits and the bracket checks built on them."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bernstein import BernsteinFunction, from_tag
from .diffusion import ModelSpace, model_from_dict
from .pathlab import DiscreteMeasure, discretized_empirical, empirical_measure, subordinated_path
from .spectral import limit_sum, spectral_data
from .subordinator import replica_rng
from .transport import CostSpec, distance_to_invariant, dual_certificate

__all__ = [
    "ExperimentConfig",
    "RateRow",
    "RateTable",
    "FitResult",
    "run_experiment",
    "theoretical_exponent",
    "upper_index",
    "fit_exponent",
    "sandwich_check",
    "lower_bound_suite",
]


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a rate experiment.

    ``distance`` holds ``shape`` (power | truncated | capped), ``p``, ``n``,
    ``reference_n`` and ``bins``; the mean reported per row is of the
    distance squared.
    """

    model: dict = field(default_factory=lambda: {"kind": "circle"})
    bernstein: dict = field(default_factory=lambda: {"family": "stable", "alpha": 0.5})
    initial: object = "invariant"
    t_grid: list = field(default_factory=lambda: [16.0, 32.0, 64.0, 128.0, 256.0, 512.0])
    replicas: Optional[int] = None
    distance: dict = field(default_factory=lambda: {"shape": "power", "p": 2.0})
    obs_dt: float = 0.05
    fine_dt: float = 1e-3
    seed: int = 0
    output: Optional[str] = None
    slack_lower: float = 0.8
    slack_upper: float = 1.2
    se_mult: float = 2.0
    slope_bracket: Optional[list] = None

    def __post_init__(self):
        if self.replicas is None:
            # default budget: 200 per t on compact spaces, 64 on R^d
            compact = self.model.get("kind", "circle") in ("circle", "torus", "interval")
            self.replicas = 200 if compact else 64

    # -- construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def load(cls, file) -> "ExperimentConfig":
        with open(file) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, file) -> None:
        with open(file, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_model(self) -> ModelSpace:
        return model_from_dict(self.model)

    def build_bernstein(self) -> BernsteinFunction:
        return from_tag(self.bernstein["family"], self.bernstein.get("alpha"))

    def build_cost(self, model: ModelSpace) -> CostSpec:
        d = self.distance
        return CostSpec(d.get("shape", "power"), float(d.get("p", 2.0)), float(d.get("n", math.inf)), model)

    def validate(self, for_fit: bool = False) -> None:
        if self.replicas < 1:
            raise ValueError("replicas must be positive")
        if not self.obs_dt >= self.fine_dt > 0:
            raise ValueError("need obs_dt >= fine_dt > 0")
        if any(t <= 0 for t in self.t_grid):
            raise ValueError("t grid must be positive")
        if for_fit:
            if self.replicas < 30:
                raise ValueError("fitted exponents need at least 30 replicas per t")
            if math.log10(max(self.t_grid) / min(self.t_grid)) < 1.5:
                raise ValueError("fitted exponents need a t grid spanning 1.5 decades")

    def fast(self) -> "ExperimentConfig":
        """Reduced budget for smoke runs: 30 replicas per row."""
        d = self.to_dict()
        d["replicas"] = min(self.replicas, 30)
        return ExperimentConfig.from_dict(d)


@dataclass
class RateRow:
    t: float
    mean: float
    se: float
    n: int
    error: Optional[str] = None
    samples: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class RateTable:
    rows: list
    fingerprint: str
    seed: int
    notes: list = field(default_factory=list)
    slope: Optional[float] = None
    slope_se: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    @property
    def mean(self) -> np.ndarray:
        return np.array([r.mean for r in self.rows])

    @property
    def se(self) -> np.ndarray:
        return np.array([r.se for r in self.rows])

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mean", "se", "n"])
            for r in self.rows:
                w.writerow([repr(r.t), repr(r.mean), repr(r.se), r.n])

    def summary(self, verdicts: Optional[dict] = None) -> dict:
        return {
            "config_fingerprint": self.fingerprint,
            "seed": self.seed,
            "fitted_slope": self.slope,
            "slope_se": self.slope_se,
            "verdicts": verdicts or {},
            "failures": {str(r.t): r.error for r in self.rows if r.error},
            "notes": self.notes,
            "diagnostics": self.diagnostics,
        }


def run_experiment(config: ExperimentConfig, keep_samples: bool = False) -> RateTable:
    """Estimate ``E[D(mu_t^B, mu)^2]`` for every ``t`` in the config grid.

    Replica ``r`` of row ``i`` draws from the stream ``(seed, i, r)``, so a
    table is bit-identical across runs.  An error inside a row is recorded on
    that row and the remaining rows still run.
    """
    config.validate()
    model = config.build_model()
    B = config.build_bernstein()
    cost = config.build_cost(model)
    rows, notes = [], set()
    ref_n = config.distance.get("reference_n")
    bins = int(config.distance.get("bins", 4096))
    for i, t in enumerate(config.t_grid):
        vals = np.empty(config.replicas)
        try:
            for r in range(config.replicas):
                rng = replica_rng(config.seed, i, r)
                path = subordinated_path(model, B, float(t), config.obs_dt, config.fine_dt,
                                         config.initial, rng)
                m = empirical_measure(path, float(t))
                val, note = distance_to_invariant(m, model, cost, ref_n, rng, bins=bins)
                notes.add(note.split(";")[0])
                vals[r] = val * val
        except Exception as exc:  # the row fails, the table survives
            rows.append(RateRow(float(t), math.nan, math.nan, 0, f"{type(exc).__name__}: {exc}"))
            continue
        n = vals.size
        se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        rows.append(RateRow(float(t), float(vals.mean()), se, n,
                            samples=vals if keep_samples else None))
    return RateTable(rows, config.fingerprint, config.seed, sorted(notes))


# ---------------------------------------------------------------------------
# exponents


def theoretical_exponent(d: int, q: float, alpha: float) -> tuple[float, str, bool]:
    """Rate exponent of ``E[W_2^2]`` in ``t`` for ``V = -kappa|x|^q`` on ``R^d``.

    Returns ``(exponent, regime, log_factor)`` with regime ``subcritical``
    when ``2(1+alpha)(q-1) < dq``, ``critical`` at equality (exponent -1 with
    a logarithmic factor) and ``supercritical`` otherwise.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    crit = 2.0 * (1.0 + alpha) * (q - 1.0) - d * q
    if abs(crit) <= 1e-12 * max(1.0, d * q):
        return -1.0, "critical", True
    if crit < 0:
        return -2.0 * (q - 1.0) / ((d - 2.0 * alpha) * q + 2.0 * alpha), "subcritical", False
    return -1.0, "supercritical", False


def upper_index(B: BernsteinFunction) -> float:
    """Largest ``alpha`` with ``liminf B(lam)/lam**alpha > 0`` for built-in families."""
    return {"linear": 1.0, "stable": B.alpha or 0.0, "gamma": 0.0, "b1": 0.0, "b2": 0.0}.get(B.family, 0.0)


@dataclass
class FitResult:
    slope: float
    stderr: float
    intercept: float
    n: int
    residuals: np.ndarray
    aic_power: float
    aic_log: float

    @property
    def preferred(self) -> str:
        return "log" if self.aic_log < self.aic_power else "power"

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept, "n": self.n,
                "residuals": self.residuals.tolist(), "aic_power": self.aic_power,
                "aic_log": self.aic_log, "preferred": self.preferred}


def _wls(x, y, w):
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    A = XtW @ X
    if np.linalg.cond(A) > 1e12:
        raise ValueError("singular design: t values do not vary")
    beta = np.linalg.solve(A, XtW @ y)
    resid = y - X @ beta
    rss = float(np.sum(w * resid**2))
    dof = max(x.size - 2, 1)
    cov = np.linalg.inv(A) * (rss / dof)
    return beta, math.sqrt(max(cov[1, 1], 0.0)), resid, rss


def fit_exponent(table, window: Optional[Sequence[float]] = None, se=None) -> FitResult:
    """Weighted least squares of ``log mean`` on ``log t``.

    Weights come from the delta method, ``var(log mean) = (se/mean)^2``; rows
    with zero SE get equal weights.  The alternative model with an added
    ``log log(1 + t)`` offset is fitted too and compared by AIC.

    ``table`` is a :class:`RateTable` or a pair ``(t, mean)`` (pass ``se``).
    """
    if isinstance(table, RateTable):
        t, mean, se = table.t, table.mean, table.se
    else:
        t, mean = (np.asarray(v, dtype=float) for v in table)
        se = np.zeros_like(t) if se is None else np.asarray(se, dtype=float)
    ok = np.isfinite(mean) & (mean > 0)
    if window is not None:
        ok &= (t >= window[0]) & (t <= window[1])
    t, mean, se = t[ok], mean[ok], se[ok]
    if t.size < 4:
        raise ValueError("need at least 4 rows in the fit window")
    x, y = np.log(t), np.log(mean)
    rel = se / mean
    w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-300) ** 2, 1.0) if np.all(rel > 0) else np.ones_like(x)
    beta, sd, resid, rss = _wls(x, y, w)
    _, _, _, rss_log = _wls(x, y - np.log(np.log1p(t)), w)
    n = t.size

    def aic(r):
        return -math.inf if r <= 0 else n * math.log(r / n) + 4.0

    return FitResult(float(beta[1]), sd, float(beta[0]), n, resid, aic(rss), aic(rss_log))


# ---------------------------------------------------------------------------
# bracket checks


def sandwich_check(config: ExperimentConfig, tol: float = 1e-6) -> dict:
    """Compare ``t E[W_2^2]`` at the largest ``t`` with the two limit sums.

    Verdict ``inside`` when the estimate plus or minus ``se_mult`` standard
    errors lies in ``[slack_lower * lower, slack_upper * upper]``.
    """
    model = config.build_model()
    B = config.build_bernstein()
    spec = spectral_data(model)
    lower = limit_sum(spec, B, 2.0, tol)
    upper = limit_sum(spec, B, 8.0, tol)
    out = {"lower_sum": lower.to_dict(), "upper_sum": upper.to_dict(),
           "slack": [config.slack_lower, config.slack_upper], "se_mult": config.se_mult}
    if lower.divergent or upper.divergent:
        out.update(verdict="divergent", estimate=None)
        return out
    d = config.to_dict()
    d["t_grid"] = [max(config.t_grid)]
    d["distance"] = {"shape": "power", "p": 2.0}
    table = run_experiment(ExperimentConfig.from_dict(d))
    row = table.rows[0]
    if row.error:
        out.update(verdict="error", error=row.error)
        return out
    est, se = row.t * row.mean, row.t * row.se
    lo, hi = config.slack_lower * lower.value, config.slack_upper * upper.value
    inside = (est - config.se_mult * se >= lo) and (est + config.se_mult * se <= hi)
    out.update(t=row.t, estimate=est, se=se, bracket=[lo, hi], n=row.n,
               verdict="inside" if inside else "outside", fingerprint=table.fingerprint)
    return out


def _uniform_quantizer(model: ModelSpace, N: int) -> DiscreteMeasure:
    u = (np.arange(N) + 0.5) / N
    if model.periodic:
        return DiscreteMeasure.uniform(u * model.size)
    return DiscreteMeasure.uniform(model.quantile(u))


def lower_bound_suite(config: ExperimentConfig, quant_N: Sequence[int] = (8, 16, 32, 64, 128, 256, 512),
                      slope_bracket=(-0.65, -0.35), product_tol: float = 0.25,
                      quant_slack: float = 0.1) -> dict:
    """Lower-bound checks for the truncated distance ``W~_1``.

    (a) slope of ``log E[W~_1]`` against ``log t`` inside ``slope_bracket``;
    (b) ``t E[W~_1^2]`` shows no trend over the last decade of ``t``;
    (c) quantisation: the slope of ``log W~_1(mu_N, mu)`` in ``log N`` is not
        below ``-1/d`` (minus ``quant_slack``) for the uniform quantiser and
        for the discretised path measure;
    (d) the dual certificate never exceeds the measured ``W~_1``.
    """
    model = config.build_model()
    cost = CostSpec("truncated", 1.0, math.inf, model)
    d = config.to_dict()
    d["distance"] = {"shape": "truncated", "p": 1.0, "bins": config.distance.get("bins", 2048)}
    cfg = ExperimentConfig.from_dict(d)
    table = run_experiment(cfg, keep_samples=True)
    good = [r for r in table.rows if r.error is None]
    t = np.array([r.t for r in good])
    w1 = [np.sqrt(r.samples) for r in good]
    m1 = np.array([v.mean() for v in w1])
    s1 = np.array([v.std(ddof=1) / math.sqrt(v.size) for v in w1])
    fit_a = fit_exponent((t, m1), se=s1)
    prod = t * np.array([r.mean for r in good])
    prod_se = t * np.array([r.se for r in good])
    last = t >= t.max() / 10.0 * (1 - 1e-12)
    x = np.log(t[last])
    slope_prod = float(np.polyfit(x, np.log(prod[last]), 1)[0]) if last.sum() >= 2 else math.nan
    out = {
        "fingerprint": cfg.fingerprint,
        "t": t.tolist(),
        "mean_w1": m1.tolist(),
        "se_w1": s1.tolist(),
        "slope_w1": fit_a.slope,
        "slope_w1_se": fit_a.stderr,
        "slope_bracket": list(slope_bracket),
        "t_mean_w1_sq": prod.tolist(),
        "t_mean_w1_sq_se": prod_se.tolist(),
        "product_slope_last_decade": slope_prod,
        "verdicts": {},
    }
    out["verdicts"]["w1_slope"] = bool(slope_bracket[0] <= fit_a.slope <= slope_bracket[1])
    out["verdicts"]["no_downward_trend"] = bool(abs(slope_prod) <= product_tol and np.all(prod > 0))

    # quantisation
    Ns = np.asarray(quant_N, dtype=float)
    qv = np.array([distance_to_invariant(_uniform_quantizer(model, int(N)), model, cost)[0] for N in Ns])
    q_slope = float(np.polyfit(np.log(Ns), np.log(qv), 1)[0])
    rng = replica_rng(config.seed, 10_000)
    T = float(max(config.t_grid))
    B = config.build_bernstein()
    # a path on a grid that contains every (i-1)T/N
    obs = T / float(max(quant_N))
    path = subordinated_path(model, B, T, obs, min(config.fine_dt, obs), config.initial, rng)
    pv = np.array([distance_to_invariant(discretized_empirical(path, T, int(N)), model, cost)[0]
                   for N in Ns])
    p_slope = float(np.polyfit(np.log(Ns), np.log(pv), 1)[0])
    floor = -1.0 / model.d - quant_slack
    out.update(quant_N=Ns.tolist(), quantizer_w1=qv.tolist(), quantizer_slope=q_slope,
               path_quant_w1=pv.tolist(), path_quant_slope=p_slope, quant_floor=floor)
    out["verdicts"]["quantization"] = bool(q_slope >= floor and p_slope >= floor)

    # dual certificate against measured distances on the same path
    if model.kind == "circle":
        fs = [lambda x: 0.5 * np.cos(x * 2 * np.pi / model.size),
              lambda x: 0.5 * np.sin(x * 2 * np.pi / model.size)]
        worst = -math.inf
        for tt in config.t_grid:
            if tt > path.horizon:
                continue
            m = empirical_measure(path, tt)
            val, note = distance_to_invariant(m, model, cost)
            slack = float(note.rsplit("<=", 1)[1]) if "<=" in note else 0.0
            for f in fs:
                worst = max(worst, dual_certificate(f, m, model=model) - val - slack)
        out["dual_margin"] = worst
        out["verdicts"]["dual_certificate"] = bool(worst <= 0.0)
    return out


def write_outputs(table: RateTable, out_dir: str, stem: str, verdicts: Optional[dict] = None,
                  extra: Optional[dict] = None) -> tuple[str, str]:
    """Write ``<stem>.csv`` (t, mean, se, n) and ``<stem>.json`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, stem + ".csv")
    json_path = os.path.join(out_dir, stem + ".json")
    table.to_csv(csv_path)
    summary = table.summary(verdicts)
    if extra:
        summary.update(extra)
    with open(json_path, "w") as fh:
        json.dump(finite_json(summary), fh, indent=2, default=_jsonable)
    return csv_path, json_path


def finite_json(obj):
    """Copy of ``obj`` with NaN and infinities replaced by ``None`` (strict JSON)."""
    if isinstance(obj, dict):
        return {k: finite_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [finite_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return finite_json(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    return str(x)
