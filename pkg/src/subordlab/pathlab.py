"""Subordinated paths ``X_{S_t}`` and the empirical measures built from them."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from .bernstein import BernsteinFunction
from .diffusion import ModelSpace, model_from_dict, sample_invariant, simulate_at
from .subordinator import SubordinatorPath, sample_increments

__all__ = [
    "DiscreteMeasure",
    "SubordinatedPath",
    "InitialLaw",
    "subordinated_path",
    "marginal_pairs",
    "draw_initial",
    "empirical_measure",
    "discretized_empirical",
    "eigen_coefficients",
    "time_average",
    "save_path",
    "load_path",
]


@dataclass
class DiscreteMeasure:
    """Weighted point cloud; ``points`` has shape ``(n,)`` or ``(n, d)``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1 or self.weights.size != self.points.shape[0]:
            raise ValueError("need one weight per point")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")
        if np.any(np.isnan(self.points)):
            raise ValueError("points contain NaN")

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)))

    def compact(self) -> "DiscreteMeasure":
        """Drop zero-weight atoms."""
        keep = self.weights > 0
        w = self.weights[keep]
        return DiscreteMeasure(self.points[keep], w / w.sum())


@dataclass
class InitialLaw:
    """Initial distribution with density ``h`` against ``mu`` bounded by ``k``.

    ``kind`` is ``"invariant"``, ``"point"``, ``"restricted"`` (uniform on a
    region of ``mu``-mass ``1/k``) or ``"tilted"`` (``h = 1 + a phi_1``).
    """

    kind: str = "invariant"
    point: Optional[np.ndarray] = None
    k: float = 1.0

    @classmethod
    def parse(cls, spec) -> "InitialLaw":
        if isinstance(spec, InitialLaw):
            return spec
        if spec is None or spec == "invariant":
            return cls("invariant")
        if isinstance(spec, dict):
            kind = spec.get("kind", "point" if "point" in spec else "invariant")
            pt = spec.get("point")
            return cls(kind, None if pt is None else np.asarray(pt, dtype=float), float(spec.get("k", 1.0)))
        return cls("point", np.asarray(spec, dtype=float))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.point is not None:
            out["point"] = np.asarray(self.point).tolist()
        if self.kind in ("restricted", "tilted"):
            out["k"] = self.k
        return out


def draw_initial(model: ModelSpace, initial, rng: np.random.Generator) -> np.ndarray:
    law = InitialLaw.parse(initial)
    if law.kind == "invariant":
        return sample_invariant(model, 1, rng)[0]
    if law.kind == "point":
        return np.array(law.point, dtype=float)
    if law.k < 1:
        raise ValueError("density bound k must be at least 1")
    if law.kind == "restricted":
        u = rng.random() / law.k
        if model.d == 1:
            return np.asarray(model.quantile(u), dtype=float)
        if model.periodic:
            x = rng.uniform(0.0, model.size, model.d)
            x[0] = u * model.size
            return x
        # radial quantile of the mu-mass-1/k ball around the origin
        g = special.gammaincinv(model.d / model.q, u)
        r = (g / model.kappa) ** (1.0 / model.q)
        v = rng.standard_normal(model.d)
        return r * v / np.linalg.norm(v)
    if law.kind == "tilted":
        spec = model.spectrum
        if not model.compact:
            raise ValueError("tilted initial laws need a bounded first eigenfunction")
        sup = float(np.max(spec.phi_bound(np.zeros((1, model.d)) if model.d > 1 else np.zeros(1))))
        a = min(law.k - 1.0, 1.0) / sup
        # rejection from mu with envelope 1 + a sup|phi_1|
        while True:
            x = sample_invariant(model, 1, rng)
            h = 1.0 + a * spec.phi(x, 2)[0, 1]
            if rng.random() * (1.0 + a * sup) <= h:
                return x[0]
    raise ValueError(f"unknown initial law {law.kind!r}")


@dataclass
class SubordinatedPath:
    """Positions ``X_{S_{t_j}}`` on the observation grid ``t_j``."""

    obs_times: np.ndarray
    positions: np.ndarray
    sub_path: SubordinatorPath
    model: ModelSpace

    @property
    def horizon(self) -> float:
        return float(self.obs_times[-1])


def subordinated_path(model: ModelSpace, B: BernsteinFunction, T: float, obs_dt: float,
                      fine_dt: float = 1e-3, initial="invariant",
                      rng: Optional[np.random.Generator] = None) -> SubordinatedPath:
    """Sample ``X_{S_t}`` on the grid ``0, obs_dt, ..., T``.

    The subordinator and the diffusion draw from independent child streams of
    ``rng``.  The diffusion is evaluated exactly at every distinct value of
    ``S`` (chained exact transitions, or Euler-Maruyama substeps no longer
    than ``fine_dt`` that land on each value), so positions are never
    interpolated.
    """
    if not obs_dt >= fine_dt > 0:
        raise ValueError("need obs_dt >= fine_dt > 0")
    if T <= 0:
        raise ValueError("horizon T must be positive")
    rng = np.random.default_rng() if rng is None else rng
    rng_sub, rng_diff = rng.spawn(2)
    n = int(round(T / obs_dt))
    if abs(n * obs_dt - T) > 1e-9 * T:
        grid = np.append(np.arange(n + 1) * obs_dt, T)
        grid = grid[np.concatenate([np.diff(grid) > 0, [True]])]
    else:
        grid = np.arange(n + 1) * obs_dt
    sub = sample_increments(B, grid, rng_sub)
    x0 = draw_initial(model, initial, rng_diff)
    svals, inverse = np.unique(sub.values, return_inverse=True)
    start = 1 if svals[0] == 0.0 else 0
    pos_u = np.empty((svals.size,) + np.shape(x0))
    if start:
        pos_u[0] = x0
    if svals.size > start:
        pos_u[start:] = simulate_at(model, x0, svals[start:], rng_diff, fine_dt=fine_dt)
    return SubordinatedPath(grid, pos_u[inverse], sub, model)


def marginal_pairs(model: ModelSpace, B: BernsteinFunction, t: float, n: int,
                   rng: np.random.Generator, fine_dt: float = 1e-3, mix_horizon: float = 50.0):
    """``n`` independent pairs ``(X_0, X_t^B)`` under a stationary start.

    Without an exact transition the particles are stepped jointly through the
    sorted clock values.  A clock beyond ``mix_horizon`` gets a fresh invariant
    draw instead, which is exact up to the mixing error at that horizon.
    """
    from .diffusion import evolve, transition
    from .subordinator import sample_marginal
    x0 = sample_invariant(model, n, rng)
    s = sample_marginal(B, t, n, rng)
    if model.exact_transition:
        return x0, transition(model, x0, s, rng)
    xt = np.array(x0, dtype=float)
    far = s > mix_horizon
    if far.any():
        xt[far] = sample_invariant(model, int(far.sum()), rng)
    order = np.argsort(s)
    order = order[~far[order]]
    cur = xt[order]
    clock = 0.0
    for k, i in enumerate(order):
        if s[i] > clock:
            cur[k:] = evolve(model, cur[k:], s[i] - clock, rng, fine_dt)
            clock = s[i]
        xt[i] = cur[k]
    return x0, xt


def _riemann_weights(times, t):
    if t <= 0:
        raise ValueError("t must be positive")
    if t > times[-1] * (1 + 1e-12):
        raise ValueError(f"t={t} exceeds the path horizon {times[-1]}")
    nxt = np.minimum(np.append(times[1:], np.inf), t)
    w = np.clip(nxt - times, 0.0, None) / t
    w[times >= t] = 0.0
    return w / w.sum()


def empirical_measure(path: SubordinatedPath, t: float) -> DiscreteMeasure:
    """Left-endpoint discretisation of ``(1/t) int_0^t delta_{X_s} ds``."""
    w = _riemann_weights(path.obs_times, t)
    keep = w > 0
    return DiscreteMeasure(path.positions[keep], w[keep])


def time_average(path: SubordinatedPath, f, t: float) -> float:
    """``(1/t) int_0^t f(X_s) ds`` with the same weights as :func:`empirical_measure`."""
    return empirical_measure(path, t).integrate(f)


def discretized_empirical(path: SubordinatedPath, t: float, N: int) -> DiscreteMeasure:
    """Equal weights ``1/N`` at ``X_{t_i}``, ``t_i = (i-1) t / N``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    ti = np.arange(N) * (t / N)
    idx = np.searchsorted(path.obs_times, ti - 1e-9 * max(t, 1.0))
    ok = idx < path.obs_times.size
    ok[ok] = np.abs(path.obs_times[idx[ok]] - ti[ok]) <= 1e-9 * max(t, 1.0)
    if not np.all(ok):
        raise ValueError("observation grid does not contain the points (i-1)t/N")
    return DiscreteMeasure.uniform(path.positions[idx])


def eigen_coefficients(path: SubordinatedPath, spec, t: float, I: int) -> np.ndarray:
    """``xi_i = (1/t) int_0^t phi_i(X_s) ds`` for ``i = 1..I``."""
    if spec is None:
        raise ValueError("model has no explicit spectrum")
    m = empirical_measure(path, t)
    return m.weights @ spec.phi(m.points, I + 1)[:, 1:]


# ---------------------------------------------------------------------------
# persistence


def save_path(path: SubordinatedPath, file: Union[str, os.PathLike]) -> None:
    """Write a path as ``.csv`` (columns ``t, S_t, x`` or ``x0..x{d-1}``) or ``.npz``."""
    file = os.fspath(file)
    pos = path.positions.reshape(path.obs_times.size, -1)
    meta = {"model": path.model.to_dict(), "family": path.sub_path.family, "seed": path.sub_path.seed}
    if file.endswith(".npz"):
        np.savez(file, t=path.obs_times, S=path.sub_path.values, positions=path.positions,
                 meta=json.dumps(meta))
        return
    cols = ["x"] if pos.shape[1] == 1 else [f"x{i}" for i in range(pos.shape[1])]
    data = np.column_stack([path.obs_times, path.sub_path.values, pos])
    header = "# " + json.dumps(meta) + "\n" + ",".join(["t", "S_t"] + cols)
    np.savetxt(file, data, delimiter=",", header=header, comments="", fmt="%.17g")


def load_path(file: Union[str, os.PathLike], model: Optional[ModelSpace] = None) -> SubordinatedPath:
    """Inverse of :func:`save_path`."""
    file = os.fspath(file)
    if file.endswith(".npz"):
        with np.load(file) as z:
            meta = json.loads(str(z["meta"]))
            t, S, pos = z["t"], z["S"], z["positions"]
    else:
        with open(file) as fh:
            first = fh.readline()
        meta = json.loads(first[2:])
        data = np.loadtxt(file, delimiter=",", skiprows=2, ndmin=2)
        t, S = data[:, 0], data[:, 1]
        pos = data[:, 2] if data.shape[1] == 3 else data[:, 2:]
    model = model_from_dict(meta["model"]) if model is None else model
    sub = SubordinatorPath(t, S, meta["family"], meta.get("seed"))
    return SubordinatedPath(t, pos, sub, model)
