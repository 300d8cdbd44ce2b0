"""Built-in lattice random walks used as reference models and fixtures."""

from __future__ import annotations

from itertools import product
from typing import Callable, Sequence

import numpy as np

from .core import OrthantMask, as_vector
from .model import Box, ProcessModel

__all__ = ["CoordinateWalk", "LatticeWalk", "walk_preset", "WALK_PRESETS"]


class LatticeWalk(ProcessModel):
    """``X_{n+1} = X_n + xi`` with ``xi`` drawn from a finite increment table.

    ``boundary="clip"`` replaces the new state by ``max(X_{n+1}, 0)``
    coordinate-wise, which keeps the walk in the nonnegative orthant.
    G is the identity; H is a constant vector unless a callable is given.
    """

    n_uniforms = 1

    def __init__(self, increments: Sequence[tuple[Sequence[float], float]], x0, C,
                 H: Sequence[float] | Callable | None = None, boundary: str = "none"):
        incs = np.array([np.atleast_1d(v) for v, _ in increments], dtype=float)
        probs = np.array([p for _, p in increments], dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"increment probabilities must be nonnegative and sum to 1, got {probs.tolist()}")
        if boundary not in ("none", "clip"):
            raise ValueError(f"unknown boundary {boundary!r}")
        self.increments = incs
        self.probs = probs
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0
        self.boundary = boundary
        self.C = C
        self.discrete = bool(np.all(incs == np.round(incs)) and np.all(np.asarray(x0) == np.round(x0)))
        dtype = np.int64 if self.discrete else float
        self.increments_typed = incs.astype(dtype)
        self.x0 = np.asarray(np.atleast_1d(x0), dtype=dtype)
        d = self.x0.size
        if incs.shape[1] != d:
            raise ValueError("increment and state dimensions differ")
        self.orthant = OrthantMask.positive(d)
        if H is None:
            H = np.zeros(d)
        self._H = H if callable(H) else as_vector(H, name="H")

    def _move(self, X: np.ndarray, choice: np.ndarray) -> np.ndarray:
        Y = X + self.increments_typed[choice]
        if self.boundary == "clip":
            Y = np.maximum(Y, 0)
        return Y

    def step_batch(self, n, X, U):
        choice = np.searchsorted(self._cdf, U[:, 0], side="right")
        return self._move(X, np.minimum(choice, len(self.probs) - 1))

    def support(self, n, x):
        x = np.asarray(x)
        out: dict[tuple, list] = {}
        for k, p in enumerate(self.probs):
            if p == 0:
                continue
            y = self._move(x[None, :], np.array([k]))[0]
            key = tuple(y.tolist())
            if key in out:
                out[key][0] += p
            else:
                out[key] = [p, y]
        return [(p, y) for p, y in out.values()]

    def G(self, n, x):
        return np.asarray(x, dtype=float)

    def G_batch(self, n, X):
        return np.asarray(X, dtype=float)

    def H(self, n, x):
        return as_vector(self._H(n, x), name="H") if callable(self._H) else self._H.copy()

    def in_C(self, x):
        return self.C.contains(x)


class CoordinateWalk(ProcessModel):
    """Independent +-1 moves per coordinate on the lattice orthant Z^d_+.

    Outside the box ``C`` each coordinate moves up with probability ``q < 1/2``
    and a coordinate at zero is held, so every positive coordinate drifts by
    exactly ``2q - 1`` and none drifts upward. Inside ``C`` the up-probability
    is ``q_in`` (defaults to ``q``) and a coordinate at zero is reflected: it
    moves up with probability ``q_in`` and stays otherwise. With ``q_in > 1/2``
    the walk is pushed out of ``C`` and pulled back, hovering near the far
    corner of the box.

    H is ``1 - 2q`` on the positive coordinates and zero on the others; off
    ``C`` some coordinate exceeds the box, so ``||H|| >= 1 - 2q``.
    """

    discrete = True

    def __init__(self, d: int = 2, q: float = 0.35, c: int = 5, q_in: float | None = None, x0=None):
        if not 0 < q < 0.5:
            raise ValueError("q must lie in (0, 1/2) for a downward drift off C")
        q_in = q if q_in is None else float(q_in)
        if not 0 <= q_in <= 1:
            raise ValueError("q_in must be a probability")
        self.d = int(d)
        self.q = float(q)
        self.q_in = q_in
        self.C = Box((0,) * self.d, (c,) * self.d)
        self.n_uniforms = self.d
        self.x0 = np.zeros(self.d, dtype=np.int64) if x0 is None else np.asarray(x0, dtype=np.int64)
        self.orthant = OrthantMask.positive(self.d)

    def _move(self, X, up):
        inside = self.C.contains_batch(X)[:, None]
        Y = X + np.where(up, 1, -1)
        return np.where(inside, np.maximum(Y, 0), np.where(X == 0, 0, Y))

    def step_batch(self, n, X, U):
        inside = self.C.contains_batch(X)[:, None]
        return self._move(X, U < np.where(inside, self.q_in, self.q))

    def support(self, n, x):
        x = np.asarray(x, dtype=np.int64)
        q = self.q_in if self.C.contains(x) else self.q
        out: dict[tuple, list] = {}
        for pattern in product((True, False), repeat=self.d):
            p = 1.0
            for up in pattern:
                p *= q if up else 1.0 - q
            if p == 0:
                continue
            y = self._move(x[None, :], np.array(pattern)[None, :])[0]
            key = tuple(y.tolist())
            if key in out:
                out[key][0] += p
            else:
                out[key] = [p, y]
        return [(p, y) for p, y in out.values()]

    def G(self, n, x):
        return np.asarray(x, dtype=float)

    def G_batch(self, n, X):
        return np.asarray(X, dtype=float)

    def H(self, n, x):
        return (1.0 - 2.0 * self.q) * (np.asarray(x) >= 1).astype(float)

    def in_C(self, x):
        return self.C.contains(x)


def _symmetric(dim: int = 1, c: float = 5.0):
    incs = []
    for j in range(dim):
        for s in (1, -1):
            e = [0] * dim
            e[j] = s
            incs.append((e, 1.0 / (2 * dim)))
    return LatticeWalk(incs, x0=[0] * dim, C=Box((-c,) * dim, (c,) * dim), H=[0.0] * dim)


def _biased_reflected(q: float = 0.3, c: int = 5):
    return LatticeWalk([([1], q), ([-1], 1.0 - q)], x0=[0], C=Box((0,), (c,)),
                       H=[1.0 - 2.0 * q], boundary="clip")


def _coordinate(d: int = 2, q: float = 0.35, c: int = 10, q_in: float = 0.65):
    return CoordinateWalk(d=d, q=q, c=c, q_in=q_in)


WALK_PRESETS: dict[str, Callable[..., ProcessModel]] = {
    "symmetric": _symmetric,
    "biased-reflected": _biased_reflected,
    "coordinate": _coordinate,
}


def walk_preset(name: str, **params) -> ProcessModel:
    try:
        factory = WALK_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown walk preset {name!r}; choose from {sorted(WALK_PRESETS)}") from None
    return factory(**params)
