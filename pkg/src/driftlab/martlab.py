"""Synthetic martingales, Doob decompositions, stopping times and decay-exponent fits.

Generators produce many paths at once. Paths are drawn in fixed blocks of
``PATH_BLOCK`` replicates, each block from its own stream, so results do not
depend on the worker count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .parallel import map_blocks
from .rng import stream

__all__ = [
    "DecayFit",
    "DegenerateGeneratorError",
    "DoobDecomposition",
    "DriftedWalk",
    "HeavyTailIncrements",
    "IncrementGenerator",
    "MartingalePath",
    "NotSupermartingaleError",
    "PlusMinusOne",
    "StateDependentVariance",
    "ZeroIncrements",
    "containment_violations",
    "doob_decompose",
    "fit_increment_scaling",
    "fit_loglog",
    "fit_tau_tail",
    "generator_from_json",
    "martingale_property_check",
    "stopping_time_tau",
    "stopping_times_ST",
    "stopping_times_tau",
    "submartingale_check",
]

PATH_BLOCK = 1024


class DegenerateGeneratorError(ValueError):
    pass


class NotSupermartingaleError(ValueError):
    def __init__(self, message: str, path: int, step: int, mean):
        super().__init__(message)
        self.path = path
        self.step = step
        self.mean = mean


class IncrementGenerator:
    """Law of the increments of a synthetic process in R^d.

    ``p_moment(p)`` is the exact sup over states of ``E[||dM||^p | F_n]``
    (infinite when the moment does not exist, None when not certified).
    ``conditional_mean(n, z)`` is ``E[Z_{n+1} - Z_n | Z_n = z]`` for a batch of
    current values ``z`` of shape (rows, d).
    """

    name = "generic"
    d = 1

    def increments(self, rng: np.random.Generator, rows: int, length: int) -> np.ndarray:
        raise NotImplementedError

    def sample_block(self, rng: np.random.Generator, rows: int, length: int, z0) -> np.ndarray:
        inc = self.increments(rng, rows, length)
        out = np.empty((rows, length + 1, self.d))
        out[:, 0] = z0
        np.cumsum(inc, axis=1, out=out[:, 1:])
        out[:, 1:] += out[:, :1]
        return out

    def sample_columns(self, rng: np.random.Generator, rows: int, cols: Sequence[int], z0,
                       chunk: int = 4096) -> np.ndarray:
        """Values at the time indices ``cols`` only, shape (rows, len(cols), d).

        Increments are drawn in fixed time chunks so long horizons never hold
        a full path array in memory.
        """
        cols = np.asarray(cols, dtype=np.int64)
        length = int(cols.max())
        if type(self).increments is IncrementGenerator.increments:
            return self.sample_block(rng, rows, length, z0)[:, cols]
        out = np.empty((rows, cols.size, self.d))
        cur = np.broadcast_to(np.asarray(z0, dtype=float), (rows, self.d)).copy()
        if np.any(cols == 0):
            out[:, cols == 0] = cur[:, None]
        for start in range(0, length, chunk):
            T = min(chunk, length - start)
            vals = cur[:, None] + np.cumsum(self.increments(rng, rows, T), axis=1)
            sel = (cols > start) & (cols <= start + T)
            out[:, sel] = vals[:, cols[sel] - start - 1]
            cur = vals[:, -1]
        return out

    def columns(self, replications: int, cols: Sequence[int], seed: int, z0=None,
                workers: int | None = None, purpose: str = "martlab") -> np.ndarray:
        z0 = np.zeros(self.d) if z0 is None else np.asarray(z0, dtype=float)

        def run(idx: range):
            rng = stream(seed, purpose, idx.start // PATH_BLOCK)
            return self.sample_columns(rng, len(idx), cols, z0)

        return np.concatenate(map_blocks(run, replications, workers, size=PATH_BLOCK), axis=0)

    def conditional_mean(self, n: int, z: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(z, dtype=float))

    def p_moment(self, p: float) -> float | None:
        return None

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d}

    def paths(self, replications: int, length: int, seed: int, z0=None,
              workers: int | None = None, purpose: str = "martlab") -> np.ndarray:
        """Array of shape (replications, length + 1, d)."""
        if replications < 1 or length < 1:
            raise ValueError("replications and length must be positive")
        z0 = np.zeros(self.d) if z0 is None else np.asarray(z0, dtype=float)

        def run(idx: range):
            rng = stream(seed, purpose, idx.start // PATH_BLOCK)
            return self.sample_block(rng, len(idx), length, z0)

        return np.concatenate(map_blocks(run, replications, workers, size=PATH_BLOCK), axis=0)


class PlusMinusOne(IncrementGenerator):
    """Independent fair +-1 steps in each coordinate."""

    name = "pm1"

    def __init__(self, d: int = 1):
        self.d = int(d)

    def increments(self, rng, rows, length):
        return np.where(rng.random((rows, length, self.d)) < 0.5, -1.0, 1.0)

    def p_moment(self, p):
        return float(self.d) ** (p / 2)


class HeavyTailIncrements(IncrementGenerator):
    """Symmetric Pareto steps ``+-U^(-1/alpha)``; ``E|dM|^p`` is finite only for ``p < alpha``."""

    name = "heavy-tail"

    def __init__(self, alpha: float = 1.2):
        if alpha <= 1:
            raise ValueError("alpha must exceed 1 so that increments have a mean")
        self.alpha = float(alpha)

    def increments(self, rng, rows, length):
        u = rng.random((rows, length, 2))
        mag = (1.0 - u[..., 0]) ** (-1.0 / self.alpha)
        return np.where(u[..., 1] < 0.5, -mag, mag)[..., None]

    def p_moment(self, p):
        return self.alpha / (self.alpha - p) if p < self.alpha else float("inf")

    def describe(self):
        return {"name": self.name, "d": 1, "alpha": self.alpha}


class StateDependentVariance(IncrementGenerator):
    """``dM = sigma(M_n) * (+-1)``: scale ``high`` while ``||M_n|| < threshold``, ``low`` beyond."""

    name = "state-variance"

    def __init__(self, low: float = 0.5, high: float = 2.0, threshold: float = 3.0):
        self.low, self.high, self.threshold = float(low), float(high), float(threshold)

    def sample_block(self, rng, rows, length, z0):
        signs = np.where(rng.random((rows, length)) < 0.5, -1.0, 1.0)
        out = np.empty((rows, length + 1, 1))
        out[:, 0, 0] = z0[0]
        for n in range(length):
            cur = out[:, n, 0]
            sigma = np.where(np.abs(cur) < self.threshold, self.high, self.low)
            out[:, n + 1, 0] = cur + sigma * signs[:, n]
        return out

    def p_moment(self, p):
        return max(self.low, self.high) ** p

    def describe(self):
        return {"name": self.name, "d": 1, "low": self.low, "high": self.high, "threshold": self.threshold}


class DriftedWalk(IncrementGenerator):
    """Supermartingale ``Z_n = W_n - n * drift`` with ``W`` a fair +-1 walk per coordinate."""

    name = "drifted-walk"

    def __init__(self, drift: float | Sequence[float] = 0.4, d: int = 1):
        drift = np.broadcast_to(np.asarray(drift, dtype=float), (int(d),)).copy()
        if np.any(drift < 0):
            raise ValueError("drift must be nonnegative for a supermartingale")
        self.drift = drift
        self.d = int(d)

    def sample_block(self, rng, rows, length, z0):
        walk = PlusMinusOne(self.d).sample_block(rng, rows, length, z0)
        return walk - np.arange(length + 1)[None, :, None] * self.drift

    def conditional_mean(self, n, z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(-self.drift, z.shape).copy()

    def p_moment(self, p):
        return float(self.d) ** (p / 2)

    def describe(self):
        return {"name": self.name, "d": self.d, "drift": self.drift.tolist()}


class ZeroIncrements(IncrementGenerator):
    name = "zero"

    def __init__(self, d: int = 1):
        self.d = int(d)

    def increments(self, rng, rows, length):
        return np.zeros((rows, length, self.d))

    def p_moment(self, p):
        return 0.0


GENERATORS: dict[str, Callable[..., IncrementGenerator]] = {
    "pm1": PlusMinusOne,
    "heavy-tail": HeavyTailIncrements,
    "state-variance": StateDependentVariance,
    "drifted-walk": DriftedWalk,
    "zero": ZeroIncrements,
}


def generator_from_json(spec: dict) -> IncrementGenerator:
    spec = dict(spec)
    name = spec.pop("name")
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[name](**spec)


@dataclass
class MartingalePath:
    values: np.ndarray
    increment_law: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ValueError("values must be a finite (length, d) array")
        self.values = v

    def __len__(self) -> int:
        return self.values.shape[0]


def _values(path) -> np.ndarray:
    if isinstance(path, MartingalePath):
        return path.values
    v = np.asarray(path, dtype=float)
    return v[:, None] if v.ndim == 1 else v


@dataclass
class DoobDecomposition:
    M: np.ndarray
    V: np.ndarray
    # V_{n+1} - V_n as computed from the conditional mean, before accumulation.
    dV: np.ndarray

    def reconstruction_error(self, Z: np.ndarray) -> float:
        return float(np.max(np.abs((self.M - self.V) - Z)))


def doob_decompose(z_paths, conditional_mean: Callable[[int, np.ndarray], np.ndarray],
                   tol: float = 0.0) -> DoobDecomposition:
    """``Z = M - V`` with ``V_0 = 0`` and ``V_{n+1} - V_n = -E[Z_{n+1} - Z_n | F_n]``.

    ``z_paths`` has shape (paths, length + 1, d) or (length + 1, d).
    Raises NotSupermartingaleError at the first step whose conditional mean
    has a component above ``tol``.
    """
    Z = np.asarray(z_paths, dtype=float)
    single = Z.ndim == 2
    if single:
        Z = Z[None]
    if Z.ndim != 3 or Z.shape[1] < 2:
        raise ValueError("z_paths must have shape (paths, length + 1, d) with length >= 1")
    R, N1, d = Z.shape
    dV = np.empty((R, N1 - 1, d))
    for n in range(N1 - 1):
        cm = np.asarray(conditional_mean(n, Z[:, n]), dtype=float).reshape(R, d)
        bad = np.argwhere(cm > tol)
        if bad.size:
            i = int(bad[0, 0])
            raise NotSupermartingaleError(
                f"conditional mean {cm[i].tolist()} has a positive component at step {n} of path {i}",
                i, n, cm[i].tolist())
        dV[:, n] = -cm
    V = np.zeros_like(Z)
    np.cumsum(dV, axis=1, out=V[:, 1:])
    M = Z + V
    if single:
        return DoobDecomposition(M[0], V[0], dV[0])
    return DoobDecomposition(M, V, dV)


def stopping_time_tau(path) -> int | None:
    """First ``n >= 1`` with ``||M_n|| < n``; None when censored at the horizon."""
    v = _values(path)
    if v.shape[0] < 2:
        raise ValueError("path needs at least two values")
    t = stopping_times_tau(v[None])[0]
    return None if t < 0 else int(t)


def stopping_times_tau(paths: np.ndarray) -> np.ndarray:
    """Vectorized ``tau`` over (paths, length + 1, d); -1 marks censoring."""
    norms = np.linalg.norm(np.asarray(paths, dtype=float), axis=2)
    n = np.arange(norms.shape[1])
    hit = (norms < n)[:, 1:]
    return np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, -1)


def stopping_times_ST(path, k: float) -> tuple[int | None, int | None]:
    """``S_k = inf{j >= 0 : ||M_j|| >= k/3}`` and ``T_k = inf{j >= 0 : ||M_{j+1} - M_j|| >= k/3}``."""
    if not k > 0:
        raise ValueError("k must be positive")
    v = _values(path)
    level = k / 3.0
    s = np.flatnonzero(np.linalg.norm(v, axis=1) >= level)
    t = np.flatnonzero(np.linalg.norm(np.diff(v, axis=0), axis=1) >= level)
    return (int(s[0]) if s.size else None, int(t[0]) if t.size else None)


def containment_violations(paths: np.ndarray) -> dict:
    """Count paths where ``tau > n`` holds without ``||M_n|| >= n``, or without ``S_n <= n``.

    ``S_n <= n`` is read off the running maximum: it holds iff
    ``max_{j <= n} ||M_j|| >= n/3``.
    """
    paths = np.asarray(paths, dtype=float)
    norms = np.linalg.norm(paths, axis=2)
    tau = stopping_times_tau(paths)
    n = np.arange(norms.shape[1])[None, :]
    alive = ((tau < 0)[:, None] | (tau[:, None] > n)) & (n >= 1)
    bad_norm = (alive & (norms < n)).any(axis=1)
    bad_S = (alive & (np.maximum.accumulate(norms, axis=1) < n / 3.0)).any(axis=1)
    return {"paths": int(paths.shape[0]), "norm_violations": int(bad_norm.sum()),
            "S_violations": int(bad_S.sum())}


@dataclass
class DecayFit:
    """Least-squares fit of ``log estimate = intercept + exponent * log n``."""

    exponent: float
    intercept: float
    stderr: float
    n_grid: list
    estimates: list
    survivors: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    bound: float | None = None
    slack: float | None = None
    direction: str | None = None
    passed: bool | None = None
    tail: "DecayFit | None" = None

    @property
    def decay(self) -> float:
        return -self.exponent

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("exponent", "intercept", "stderr", "n_grid", "estimates",
                                             "survivors", "dropped", "bound", "slack", "direction",
                                             "passed")}
        out["tail"] = None if self.tail is None else self.tail.to_dict()
        return out

    def rows(self):
        for i, n in enumerate(self.n_grid):
            yield {"n": n, "estimate": self.estimates[i],
                   "survivors": self.survivors[i] if self.survivors else ""}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fit", "n", "estimate", "survivors"])
            for label, fit in (("main", self), ("tail", self.tail)):
                if fit is None:
                    continue
                for r in fit.rows():
                    w.writerow([label, r["n"], repr(float(r["estimate"])), r["survivors"]])


def _check_grid(n_grid) -> list[int]:
    grid = [int(n) for n in n_grid]
    if len(grid) < 4:
        raise ValueError("a fit needs at least 4 grid points")
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ValueError("n_grid must be positive and strictly increasing")
    return grid


def fit_loglog(n_grid, estimates, survivors=None) -> DecayFit:
    """Ordinary least squares on the log-log scale; zero estimates are dropped."""
    n = np.asarray(n_grid, dtype=float)
    y = np.asarray(estimates, dtype=float)
    keep = y > 0
    dropped = [int(v) for v in n[~keep]]
    if keep.sum() < 2:
        raise ValueError(f"fewer than two positive estimates (dropped n={dropped})")
    lx, ly = np.log(n[keep]), np.log(y[keep])
    if keep.sum() > 2:
        coef, cov = np.polyfit(lx, ly, 1, cov="unscaled")
        resid = ly - np.polyval(coef, lx)
        s2 = float(resid @ resid) / (keep.sum() - 2)
        stderr = float(np.sqrt(cov[0, 0] * s2))
    else:
        coef = np.polyfit(lx, ly, 1)
        stderr = float("nan")
    return DecayFit(exponent=float(coef[0]), intercept=float(coef[1]), stderr=stderr,
                    n_grid=[int(v) for v in n], estimates=[float(v) for v in y],
                    survivors=[] if survivors is None else [int(s) for s in survivors],
                    dropped=dropped)


def fit_increment_scaling(generator: IncrementGenerator, p: float, n_grid, replications: int,
                          seed: int, r: float = 1.0, tail_grid=None, slack: float = 0.3,
                          workers: int | None = None) -> DecayFit:
    """Exponent of ``E||M_n - M_0||^p`` against n, asserted ``<= p/2 + slack``.

    ``tail`` holds the fit of ``E[||M_n||^r 1{||M_n|| >= n}]`` over
    ``tail_grid``, asserted to decay at rate at least ``p/2 - r - slack``.
    The event is rare for large n, so the default tail grid is ``2..11``;
    when fewer than two grid points have survivors the tail fit is
    recorded with a NaN exponent and no verdict.
    """
    if p <= 2:
        raise ValueError("p must exceed 2")
    grid = _check_grid(n_grid)
    tgrid = _check_grid(range(2, 12) if tail_grid is None else tail_grid)
    if generator.p_moment(p) == 0:
        raise DegenerateGeneratorError("generator has zero increments; the scaling exponent is undefined")
    cols = sorted(set([0] + grid + tgrid))
    where = {n: j for j, n in enumerate(cols)}
    vals = generator.columns(replications, cols, seed, workers=workers, purpose="martlab-scaling")
    disp = np.linalg.norm(vals - vals[:, :1], axis=2)
    est = [float(np.mean(disp[:, where[n]] ** p)) for n in grid]
    if not any(est):
        raise DegenerateGeneratorError("all displacement moments vanish; the scaling exponent is undefined")
    fit = fit_loglog(grid, est)
    certified = generator.p_moment(p) is not None
    fit.bound, fit.slack, fit.direction = p / 2, slack, "exponent <= bound + slack"
    fit.passed = bool(fit.exponent <= p / 2 + slack) if certified else None

    norms = np.linalg.norm(vals, axis=2)
    tail_est, surv = [], []
    for n in tgrid:
        v = norms[:, where[n]]
        hit = v >= n
        surv.append(int(hit.sum()))
        tail_est.append(float(np.sum(np.where(hit, v ** r, 0.0)) / replications))
    try:
        tail = fit_loglog(tgrid, tail_est, surv)
        tail.passed = bool(tail.decay >= p / 2 - r - slack) if certified else None
    except ValueError:
        nan = float("nan")
        tail = DecayFit(nan, nan, nan, tgrid, tail_est, surv, dropped=[n for n, v in zip(tgrid, tail_est) if v <= 0])
    tail.bound, tail.slack, tail.direction = p / 2 - r, slack, "decay >= bound - slack"
    fit.tail = tail
    return fit


def fit_tau_tail(generator: IncrementGenerator, p: float, r: float, n_grid, replications: int,
                 seed: int, slack: float = 0.5, workers: int | None = None) -> DecayFit:
    """Decay of ``E[||M_n||^r 1{tau > n}]`` in n, asserted ``>= (p - r) - slack``.

    With ``r = 0`` the quantity is ``P(tau > n)`` and the asserted rate is
    ``p/2 - slack``. Grid points without surviving paths are dropped and
    listed in ``dropped``.
    """
    if not 0 <= r < p:
        raise ValueError("need 0 <= r < p")
    grid = _check_grid(n_grid)
    if generator.p_moment(p) == 0:
        raise DegenerateGeneratorError("generator has zero increments; the tail exponent is undefined")
    paths = generator.paths(replications, grid[-1], seed, workers=workers, purpose="martlab-tau")
    norms = np.linalg.norm(paths, axis=2)
    tau = stopping_times_tau(paths)
    est, surv = [], []
    for n in grid:
        alive = (tau < 0) | (tau > n)
        surv.append(int(alive.sum()))
        vals = norms[:, n] ** r if r > 0 else np.ones(replications)
        est.append(float(np.sum(np.where(alive, vals, 0.0)) / replications))
    fit = fit_loglog(grid, est, surv)
    bound = p / 2 if r == 0 else p - r
    fit.bound, fit.slack, fit.direction = bound, slack, "decay >= bound - slack"
    fit.passed = bool(fit.decay >= bound - slack) if generator.p_moment(p) is not None else None
    return fit


def martingale_property_check(paths: np.ndarray, n_grid, sigmas: float = 3.0) -> dict:
    """Batch mean of ``M_{n+1} - M_n`` within ``sigmas`` standard errors of zero at each grid n."""
    inc = np.diff(np.asarray(paths, dtype=float), axis=1)
    rows = []
    for n in n_grid:
        x = inc[:, n]
        se = x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])
        z = np.abs(x.mean(axis=0)) / np.where(se > 0, se, np.inf)
        rows.append({"n": int(n), "max_z": float(z.max())})
    return {"ok": all(r["max_z"] <= sigmas for r in rows), "rows": rows}


def submartingale_check(paths: np.ndarray, p: float, n_grid, sigmas: float = 3.0) -> dict:
    """``E||M_n||^p`` nondecreasing along ``n_grid`` up to ``sigmas`` combined standard errors."""
    norms = np.linalg.norm(np.asarray(paths, dtype=float), axis=2)
    means, ses = [], []
    for n in n_grid:
        v = norms[:, n] ** p
        means.append(float(v.mean()))
        ses.append(float(v.std(ddof=1) / np.sqrt(v.size)))
    ok = all(m2 >= m1 - sigmas * np.hypot(s1, s2)
             for m1, m2, s1, s2 in zip(means, means[1:], ses, ses[1:]))
    return {"ok": bool(ok), "n": [int(n) for n in n_grid], "means": means, "stderr": ses}
