"""Iterated function systems with place-dependent probabilities.

The state is ``z = (x, y)`` with ``x`` in R^d_+ and ``y`` a mode index. One
step first draws the next mode ``y' ~ P_x(y, .)`` and then sets
``x' = f(x, y')``. Neither coordinate is Markov on its own, so the process
model always works with the pair, stored as a length ``d + 1`` float vector
whose last entry is the mode.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import OrthantMask, as_vector
from .model import Ball, Box, ProcessModel

__all__ = [
    "AffineMap",
    "CallableMap",
    "IfsModel",
    "IfsModelError",
    "IfsReport",
    "LogisticProbs",
    "RadialShift",
    "RationalProbs",
    "TableMap",
    "TableProbs",
    "check_prop_ifs",
    "ifs_drift_lhs",
    "ifs_from_json",
    "ifs_step",
    "radial_ifs",
    "set_from_json",
]

PROB_TOL = 1e-12
MIN_NORM = 1e-12


class IfsModelError(ValueError):
    pass


# -- maps f(., i) ---------------------------------------------------------------

class AffineMap:
    """``x -> A x + b``."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return X @ self.A.T + self.b

    def to_json(self):
        return {"affine": {"A": self.A.tolist(), "b": self.b.tolist()}}


class RadialShift:
    """Move ``x`` by ``step`` along the ray through ``x``; the radius is floored at zero.

    At the origin the ray is taken along ``direction`` (normalized), which
    defaults to the diagonal.
    """

    def __init__(self, step: float, direction=None):
        self.step = float(step)
        self.direction = None if direction is None else np.asarray(direction, dtype=float)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(X, axis=1, keepdims=True)
        d = X.shape[1]
        default = self.direction if self.direction is not None else np.ones(d)
        default = default / np.linalg.norm(default)
        unit = np.where(r > 0, X / np.where(r > 0, r, 1.0), default)
        new_r = np.maximum(r + self.step, 0.0)
        return unit * new_r

    def to_json(self):
        out = {"radial": self.step}
        if self.direction is not None:
            out["direction"] = self.direction.tolist()
        return out


class TableMap:
    """Lookup table ``{tuple(x): f(x)}`` for maps defined on finitely many points."""

    def __init__(self, table: dict):
        self.table = {tuple(float(v) for v in k): np.asarray(val, dtype=float) for k, val in table.items()}

    def __call__(self, X: np.ndarray) -> np.ndarray:
        out = np.empty_like(X, dtype=float)
        for i, row in enumerate(X):
            key = tuple(float(v) for v in row)
            if key not in self.table:
                raise IfsModelError(f"table map undefined at x={list(key)}")
            out[i] = self.table[key]
        return out

    def to_json(self):
        return {"table": [{"x": list(k), "fx": v.tolist()} for k, v in self.table.items()]}


class CallableMap:
    """Wrap a single-point callable ``f(x) -> x'``."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(self.fn(x), dtype=float) for x in X])


# -- place-dependent mode probabilities -----------------------------------------

class TableProbs:
    """Place-independent mode transition matrix ``P[y, y']``."""

    def __init__(self, P):
        self.P = np.atleast_2d(np.asarray(P, dtype=float))

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.P[Y]

    def to_json(self):
        return {"table": self.P.tolist()}


class LogisticProbs:
    """Softmax weights ``P_x(y, y') ∝ exp(W[y, y'] . x + b[y, y'])``."""

    def __init__(self, W, b):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.W.ndim != 3 or self.b.shape != self.W.shape[:2]:
            raise IfsModelError("logistic weights need W of shape (m, m, d) and b of shape (m, m)")

    def __call__(self, X, Y):
        logits = np.einsum("rkd,rd->rk", self.W[Y], X) + self.b[Y]
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)

    def to_json(self):
        return {"logistic": {"W": self.W.tolist(), "b": self.b.tolist()}}


class RationalProbs:
    """``P_x(y, y') = (c[y, y'] + D[y, y'] . x) / sum_k (c[y, k] + D[y, k] . x)``.

    Numerators must stay nonnegative on the visited states.
    """

    def __init__(self, c, D):
        self.c = np.asarray(c, dtype=float)
        self.D = np.asarray(D, dtype=float)

    def __call__(self, X, Y):
        num = self.c[Y] + np.einsum("rkd,rd->rk", self.D[Y], X)
        if np.any(num < 0):
            raise IfsModelError("rational probability numerator became negative")
        tot = num.sum(axis=1, keepdims=True)
        if np.any(tot <= 0):
            raise IfsModelError("rational probability weights sum to zero")
        return num / tot

    def to_json(self):
        return {"rational": {"c": self.c.tolist(), "D": self.D.tolist()}}


# -- the model -------------------------------------------------------------------

class IfsModel(ProcessModel):
    """Iterated function system on R^d_+ x {0..m-1} with place-dependent mode law.

    G is the identity on ``x`` and H is ``a x / ||x||``; G = identity makes
    the image-disjointness condition automatic.
    """

    n_uniforms = 1

    def __init__(self, maps: Sequence[Callable], probs: Callable, C, a: float,
                 x0, y0: int = 0, L_jump: float | None = None):
        self.maps = list(maps)
        if not self.maps:
            raise IfsModelError("at least one mode is required")
        self.probs = probs
        self.C = C
        self.a = float(a)
        self.L_jump = None if L_jump is None else float(L_jump)
        x0 = as_vector(x0, name="x0")
        self.d = x0.size
        self.x0 = np.append(x0, float(y0))
        self.orthant = OrthantMask.positive(self.d)

    @property
    def modes(self) -> int:
        return len(self.maps)

    def split(self, z) -> tuple[np.ndarray, int]:
        z = np.asarray(z, dtype=float)
        return z[: self.d], int(z[self.d])

    def pack(self, x, y) -> np.ndarray:
        return np.append(np.asarray(x, dtype=float), float(y))

    def mode_probs(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        P = np.asarray(self.probs(X, Y), dtype=float)
        if P.shape != (X.shape[0], self.modes):
            raise IfsModelError(f"mode probabilities have shape {P.shape}, expected {(X.shape[0], self.modes)}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL):
            bad = int(np.argmax(np.abs(P.sum(axis=1) - 1.0) + (P < 0).any(axis=1)))
            raise IfsModelError(f"P_x(y, .) is not a probability vector at x={X[bad].tolist()}, "
                                f"y={int(Y[bad])}: {P[bad].tolist()}")
        return P

    def apply_maps(self, X: np.ndarray, modes: np.ndarray) -> np.ndarray:
        out = np.empty_like(X, dtype=float)
        for i, f in enumerate(self.maps):
            sel = modes == i
            if np.any(sel):
                out[sel] = f(X[sel])
        if np.any(out < -1e-12):
            bad = int(np.argmax((out < -1e-12).any(axis=1)))
            raise IfsModelError(f"map {int(modes[bad])} left R^d_+ at x={X[bad].tolist()}")
        return np.maximum(out, 0.0)

    def step_batch(self, n, Z, U):
        X = Z[:, : self.d]
        Y = Z[:, self.d].astype(np.int64)
        cdf = np.cumsum(self.mode_probs(X, Y), axis=1)
        new_y = np.minimum((U[:, :1] >= cdf).sum(axis=1), self.modes - 1)
        new_x = self.apply_maps(X, new_y)
        return np.column_stack([new_x, new_y.astype(float)])

    def support(self, n, z):
        x, y = self.split(z)
        P = self.mode_probs(x[None, :], np.array([y]))[0]
        out = []
        for i, p in enumerate(P):
            if p > 0:
                fx = self.apply_maps(x[None, :], np.array([i]))[0]
                out.append((float(p), self.pack(fx, i)))
        return out

    def G(self, n, z):
        return np.asarray(z, dtype=float)[: self.d].copy()

    def G_batch(self, n, Z):
        return np.asarray(Z, dtype=float)[:, : self.d]

    def H(self, n, z):
        x = self.G(n, z)
        r = np.linalg.norm(x)
        return self.a * x / r if r > 0 else np.zeros_like(x)

    def in_C(self, z):
        return self.C.contains(self.G(0, z))

    def serialize_state(self, z):
        x, y = self.split(z)
        return {"x": x.tolist(), "y": y}


def ifs_step(model: IfsModel, z, rng: np.random.Generator):
    """Draw ``y' ~ P_x(y, .)`` and return ``(f(x, y'), y')`` packed as a state vector."""
    return model.step(0, z, rng)


def ifs_drift_lhs(model: IfsModel, x, y: int) -> np.ndarray:
    """Exact ``sum_{y'} P_x(y, y') f(x, y') - x``, summed as mode-weighted displacements."""
    x = as_vector(x, name="x")
    P = model.mode_probs(x[None, :], np.array([int(y)]))[0]
    disp = np.stack([model.apply_maps(x[None, :], np.array([i]))[0] - x for i in range(model.modes)])
    return P @ disp


@dataclass
class IfsReport:
    drift_ok: bool
    jump_ok: bool | None
    margin: float
    max_jump: float
    checked: int
    drift_witnesses: list = field(default_factory=list)
    jump_witnesses: list = field(default_factory=list)
    moment_bound_applies: bool = False
    admissible_r: str = ""
    coverage: str = ""

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d

    @property
    def ok(self) -> bool:
        return self.drift_ok and self.jump_ok is not False


def check_prop_ifs(model: IfsModel, region_sample: Sequence, roundoff: float = 1e-12) -> IfsReport:
    """Check the radial drift bound and the bounded-jump condition on sampled ``(x, y)``.

    Drift: ``sum_{y'} P_x(y, y') f(x, y') - x <= -a x / ||x||`` component-wise.
    Jumps: ``||x - f(x, i)|| <= L_jump`` for every mode when ``L_jump`` is set.
    ``margin`` is the smallest slack of the drift inequality over the sample.
    Both inequalities allow a rounding slack of ``roundoff`` relative to the
    scale of ``x``.
    """
    if model.a <= 0:
        raise IfsModelError("the drift magnitude a must be positive")
    sample = list(region_sample)
    if not sample:
        raise ValueError("region sample must be nonempty")
    drift_w, jump_w = [], []
    margin = np.inf
    max_jump = 0.0
    for x, y in sample:
        x = as_vector(x, name="x")
        if model.C.contains(x):
            raise ValueError(f"sampled state x={x.tolist()} lies in C")
        r = np.linalg.norm(x)
        if r < MIN_NORM:
            raise ValueError("sampled state too close to the origin for H = a x/||x||")
        lhs = ifs_drift_lhs(model, x, y)
        bound = -model.a * x / r
        slack = bound - lhs
        margin = min(margin, float(slack.min()))
        # Sums like 0.7(r-1) + 0.3(r+1) - r are exact in rationals but not in floats.
        eps = roundoff * max(1.0, model.a, float(np.abs(x).max()))
        if np.any(slack < -eps):
            drift_w.append({"x": x.tolist(), "y": int(y), "lhs": lhs.tolist(), "bound": bound.tolist()})
        for i in range(model.modes):
            fx = model.apply_maps(x[None, :], np.array([i]))[0]
            jump = float(np.linalg.norm(x - fx))
            max_jump = max(max_jump, jump)
            if model.L_jump is not None and jump > model.L_jump + eps:
                jump_w.append({"x": x.tolist(), "mode": i, "jump": jump, "L_jump": model.L_jump})
    drift_ok = not drift_w
    jump_ok = None if model.L_jump is None else not jump_w
    applies = drift_ok and jump_ok is True
    return IfsReport(
        drift_ok=drift_ok, jump_ok=jump_ok, margin=float(margin), max_jump=max_jump,
        checked=len(sample), drift_witnesses=drift_w, jump_witnesses=jump_w,
        moment_bound_applies=applies,
        admissible_r="every r > 0" if applies else "none established",
        coverage=f"{len(sample)} sampled (x, y) pairs off C; no claim beyond the sample",
    )


def radial_ifs(d: int = 2, p_in: float = 0.7, step: float = 1.0, c: float = 2.0, x0=None) -> IfsModel:
    """Two radial modes: shrink by ``step`` w.p. ``p_in``, grow by ``step`` otherwise.

    Off the box ``[0, c]^d`` (with ``c >= step``) the conditional drift is
    exactly ``-(2 p_in - 1) step x/||x||``.
    """
    maps = [RadialShift(-step), RadialShift(step)]
    probs = TableProbs([[p_in, 1 - p_in], [p_in, 1 - p_in]])
    x0 = np.zeros(d) if x0 is None else x0
    return IfsModel(maps, probs, C=Box((0.0,) * d, (c,) * d), a=(2 * p_in - 1) * step,
                    x0=x0, L_jump=step)


def set_from_json(spec: dict):
    if "box" in spec:
        return Box.from_bounds(spec["box"])
    if "ball" in spec:
        return Ball(float(spec["ball"]), open=bool(spec.get("open", False)))
    raise ValueError(f"unknown set specification {spec!r}")


def _map_from_json(spec: dict):
    if "affine" in spec:
        return AffineMap(spec["affine"]["A"], spec["affine"]["b"])
    if "radial" in spec:
        return RadialShift(spec["radial"], spec.get("direction"))
    if "table" in spec:
        return TableMap({tuple(e["x"]): e["fx"] for e in spec["table"]})
    raise IfsModelError(f"unknown map specification {spec!r}")


def _probs_from_json(spec: dict):
    if "table" in spec:
        return TableProbs(spec["table"])
    if "logistic" in spec:
        return LogisticProbs(spec["logistic"]["W"], spec["logistic"]["b"])
    if "rational" in spec:
        return RationalProbs(spec["rational"]["c"], spec["rational"]["D"])
    raise IfsModelError(f"unknown probability specification {spec!r}")


def ifs_from_json(spec: dict) -> IfsModel:
    """Build from ``{"maps": [...], "probs": {...}, "C": {...}, "a", "x0", "y0", "L_jump"}``
    or ``{"preset": "radial", "params": {...}}``."""
    if "preset" in spec:
        if spec["preset"] != "radial":
            raise IfsModelError(f"unknown IFS preset {spec['preset']!r}")
        return radial_ifs(**spec.get("params", {}))
    maps = [_map_from_json(m) for m in spec["maps"]]
    return IfsModel(maps, _probs_from_json(spec["probs"]), set_from_json(spec["C"]), spec["a"],
                    x0=spec["x0"], y0=spec.get("y0", 0), L_jump=spec.get("L_jump"))
