"""Process models, trajectory simulation and one-step conditional estimators.

A :class:`ProcessModel` bundles a one-step stochastic kernel ``step(n, x, rng)``
with the function sequences ``G(n, x)``, ``H(n, x)``, a safe-set predicate
``in_C`` and the orthant into which ``G`` and ``H`` map states outside ``C``.
States are opaque to the library; models with real or integer vector states
may additionally implement the uniform-driven batch interface
(``n_uniforms`` + ``step_batch``), which lets many replicates advance in one
numpy call while each replicate still consumes its own random stream.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import OrthantMask, as_vector
from .parallel import map_blocks
from .rng import stream

__all__ = [
    "Ball",
    "Box",
    "FunctionModel",
    "ModelError",
    "ProcessModel",
    "Trajectory",
    "estimate_conditional_drift",
    "estimate_jump_moment",
    "increment_samples",
    "run_paths",
    "simulate_paths",
    "simulate_trajectory",
    "validate_model",
]

TIME_BLOCK = 1024


class ModelError(RuntimeError):
    """A model callable failed on a simulated state."""

    def __init__(self, message: str, n: int | None = None, state: Any = None):
        super().__init__(message)
        self.n = n
        self.state = state


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``lo <= x <= hi``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid box bounds lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "Box":
        """``[[lo_1, hi_1], ..., [lo_d, hi_d]]``."""
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        return np.all((X >= self.lo) & (X <= self.hi), axis=-1)

    @property
    def radius(self) -> float:
        corners = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(corners))

    def lattice_points(self, step: float = 1.0) -> list[np.ndarray]:
        axes = [np.arange(np.ceil(a / step) * step, b + step / 2, step) for a, b in zip(self.lo, self.hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return [row for row in grid]

    def to_json(self):
        return {"box": [[a, b] for a, b in zip(self.lo, self.hi)]}


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of given radius around the origin; closed unless ``open``."""

    radius: float
    open: bool = False

    def contains(self, x) -> bool:
        r = float(np.linalg.norm(np.asarray(x, dtype=float)))
        return r < self.radius if self.open else r <= self.radius

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(X, axis=-1)
        return r < self.radius if self.open else r <= self.radius

    def to_json(self):
        return {"ball": self.radius, "open": self.open}


class ProcessModel:
    """One-step kernel plus the function sequences and safe set of the drift theory.

    Subclasses implement ``step`` (or ``n_uniforms`` + ``step_batch``), ``G``,
    ``H`` and ``in_C``. Kernels with a finite, enumerable one-step law should
    also implement ``support`` so that conditional moments are computed as
    exact finite sums.
    """

    orthant: OrthantMask
    x0: Any
    # The kernel may only depend on (n, x); history-dependent kernels are rejected.
    path_dependent: bool = False
    # Integer-lattice states that can be counted directly in occupation measures.
    discrete: bool = False
    # Number of U(0,1) draws per step for the batch interface; None if unsupported.
    n_uniforms: int | None = None

    def step(self, n: int, x, rng: np.random.Generator):
        if self.n_uniforms is None:
            raise NotImplementedError
        u = rng.random(self.n_uniforms)
        return self.step_batch(n, np.asarray(x)[None, ...], u[None, :])[0]

    def step_batch(self, n: int, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def G(self, n: int, x) -> np.ndarray:
        raise NotImplementedError

    def H(self, n: int, x) -> np.ndarray:
        raise NotImplementedError

    def in_C(self, x) -> bool:
        raise NotImplementedError

    def support(self, n: int, x) -> list[tuple[float, Any]] | None:
        """Finite one-step law as ``[(prob, next_state), ...]``, or None."""
        return None

    def G_batch(self, n: int, X) -> np.ndarray:
        return np.stack([as_vector(self.G(n, x), name="G") for x in X])

    def state_key(self, x) -> tuple:
        if not self.discrete:
            raise ValueError(f"{type(self).__name__} has continuous states; supply a binning function")
        return tuple(int(v) for v in np.atleast_1d(x))

    def state_keys(self, X) -> list[tuple]:
        if isinstance(X, np.ndarray) and self.discrete:
            return [tuple(row) for row in X.astype(np.int64).tolist()]
        return [self.state_key(x) for x in X]

    def serialize_state(self, x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, tuple):
            return list(x)
        return x

    @property
    def g_dim(self) -> int:
        return self.orthant.dim


class FunctionModel(ProcessModel):
    """Process model assembled from plain callables.

    ``step(n, x, rng)`` must depend on the history only through ``(n, x)``.
    """

    def __init__(self, step: Callable, G: Callable, H: Callable, in_C: Callable, x0,
                 orthant: OrthantMask | None = None, support: Callable | None = None,
                 discrete: bool = False, path_dependent: bool = False):
        self._step = step
        self._G = G
        self._H = H
        self._in_C = in_C
        self._support = support
        self.x0 = x0
        self.discrete = discrete
        self.path_dependent = path_dependent
        if orthant is None:
            orthant = OrthantMask.positive(as_vector(G(0, x0)).size)
        self.orthant = orthant

    def step(self, n, x, rng):
        return self._step(n, x, rng)

    def G(self, n, x):
        return as_vector(self._G(n, x), name="G")

    def H(self, n, x):
        return as_vector(self._H(n, x), name="H")

    def in_C(self, x):
        return bool(self._in_C(x))

    def support(self, n, x):
        return None if self._support is None else self._support(n, x)


def validate_model(model: ProcessModel) -> None:
    if getattr(model, "path_dependent", False):
        raise ValueError("path-dependent kernels are not supported: conditional estimators "
                         "restart the kernel from a frozen state")
    if not model.in_C(model.x0):
        raise ValueError("the initial state must lie in the set C")


@dataclass
class Trajectory:
    states: list
    g_values: np.ndarray
    seed: int
    times: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.states)

    def rows(self, serialize: Callable = None):
        serialize = serialize or _default_serialize
        for n, (x, g) in enumerate(zip(self.states, self.g_values)):
            row = {"n": n}
            if self.times is not None:
                row["time"] = repr(float(self.times[n]))
            row["state"] = json.dumps(serialize(x))
            for j, v in enumerate(g):
                row[f"g_{j}"] = repr(float(v))
            yield row

    def to_csv(self, path, serialize: Callable = None) -> None:
        rows = list(self.rows(serialize))
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)


def _default_serialize(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return [_default_serialize(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def simulate_trajectory(model: ProcessModel, horizon: int, seed: int) -> Trajectory:
    """Simulate ``X_0 .. X_horizon`` from ``model.x0`` with the replicate-0 stream."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    validate_model(model)
    rng = stream(seed, "trajectory", 0)
    x = model.x0
    states = [x]
    for n in range(horizon):
        try:
            x = model.step(n, x, rng)
        except Exception as exc:  # attach the failing step to whatever the model raised
            raise ModelError(f"step failed at n={n} from state {x!r}: {exc}", n, x) from exc
        states.append(x)
    g = np.stack([_eval_G(model, n, s) for n, s in enumerate(states)])
    return Trajectory(states=states, g_values=g, seed=seed)


def _eval_G(model, n, x):
    try:
        return as_vector(model.G(n, x), name="G")
    except Exception as exc:
        raise ModelError(f"G undefined at n={n} on state {x!r}: {exc}", n, x) from exc


def run_paths(model: ProcessModel, horizon: int, replications: int, seed: int,
              make_acc: Callable[[range], Any], visit: Callable[[Any, int, Any], None],
              workers: int | None = None, purpose: str = "trajectory") -> list:
    """Advance ``replications`` independent paths for ``horizon`` steps.

    ``visit(acc, n, X)`` sees every time index ``0..horizon``; ``X`` is an
    array of shape (block, state_dim) for batch-capable models and a list of
    states otherwise. One accumulator per fixed replicate block is returned in
    block order, independent of ``workers``.
    """
    validate_model(model)

    def run_block(idx: range):
        acc = make_acc(idx)
        gens = [stream(seed, purpose, i) for i in idx]
        if model.n_uniforms is not None:
            _run_batch(model, horizon, gens, acc, visit)
        else:
            _run_loop(model, horizon, gens, acc, visit)
        return acc

    return map_blocks(run_block, replications, workers)


def _run_batch(model, horizon, gens, acc, visit):
    k = model.n_uniforms
    X = np.repeat(np.asarray(model.x0)[None, ...], len(gens), axis=0)
    visit(acc, 0, X)
    n = 0
    while n < horizon:
        T = min(TIME_BLOCK, horizon - n)
        U = np.stack([g.random((T, k)) for g in gens], axis=1)
        for t in range(T):
            try:
                X = model.step_batch(n, X, U[t])
            except Exception as exc:
                raise ModelError(f"batch step failed at n={n}: {exc}", n, None) from exc
            n += 1
            visit(acc, n, X)


def _run_loop(model, horizon, gens, acc, visit):
    states = [model.x0] * len(gens)
    visit(acc, 0, states)
    for n in range(horizon):
        nxt = []
        for x, g in zip(states, gens):
            try:
                nxt.append(model.step(n, x, g))
            except Exception as exc:
                raise ModelError(f"step failed at n={n} from state {x!r}: {exc}", n, x) from exc
        states = nxt
        visit(acc, n + 1, states)


def simulate_paths(model: ProcessModel, horizon: int, replications: int, seed: int,
                   workers: int | None = None) -> np.ndarray:
    """G-values of every replicate at every step, shape (replications, horizon+1, d)."""

    def make_acc(idx):
        return np.empty((len(idx), horizon + 1, model.g_dim))

    def visit(acc, n, X):
        acc[:, n, :] = model.G_batch(n, X)

    return np.concatenate(run_paths(model, horizon, replications, seed, make_acc, visit, workers), axis=0)


def increment_samples(model: ProcessModel, x, n: int, samples: int, seed: int,
                      purpose: str = "increment") -> np.ndarray:
    """``samples`` draws of ``G(n+1, X_{n+1}) - G(n, x)`` with ``X_n = x``."""
    rng = stream(seed, purpose, 0)
    g0 = _eval_G(model, n, x)
    if model.n_uniforms is not None:
        X = np.repeat(np.asarray(x)[None, ...], samples, axis=0)
        Y = model.step_batch(n, X, rng.random((samples, model.n_uniforms)))
        return model.G_batch(n + 1, Y) - g0
    out = np.empty((samples, g0.size))
    for i in range(samples):
        try:
            y = model.step(n, x, rng)
        except Exception as exc:
            raise ModelError(f"step failed at n={n} from state {x!r}: {exc}", n, x) from exc
        out[i] = _eval_G(model, n + 1, y) - g0
    return out


def _exact_terms(model, x, n, outcomes):
    g0 = _eval_G(model, n, x)
    probs = np.array([p for p, _ in outcomes], dtype=float)
    incs = np.stack([_eval_G(model, n + 1, y) - g0 for _, y in outcomes])
    return probs, incs


def estimate_conditional_drift(model: ProcessModel, x, n: int, samples: int, seed: int
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Estimate ``E[G_{n+1}(X_{n+1}) - G_n(X_n) | X_n = x]`` with standard errors.

    Exact finite sum (stderr 0) when the model exposes its one-step support.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    outcomes = model.support(n, x)
    if outcomes is not None:
        probs, incs = _exact_terms(model, x, n, outcomes)
        return probs @ incs, np.zeros(incs.shape[1])
    incs = increment_samples(model, x, n, samples, seed, purpose="drift")
    return incs.mean(axis=0), incs.std(axis=0, ddof=1) / np.sqrt(samples)


def estimate_jump_moment(model: ProcessModel, x, n: int, p: float, samples: int, seed: int
                         ) -> tuple[float, float]:
    """Estimate ``E[||G_{n+1}(X_{n+1}) - G_n(X_n)||^p | X_n = x]``."""
    if samples < 2:
        raise ValueError("samples must be at least 2")
    if p <= 0:
        raise ValueError("p must be positive")
    outcomes = model.support(n, x)
    if outcomes is not None:
        probs, incs = _exact_terms(model, x, n, outcomes)
        return float(probs @ np.linalg.norm(incs, axis=1) ** p), 0.0
    incs = increment_samples(model, x, n, samples, seed, purpose="jump")
    vals = np.linalg.norm(incs, axis=1) ** p
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))
