"""Occupation measures, tightness tables and an exact stationary oracle for truncated chains."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .model import Box, ProcessModel, run_paths

__all__ = [
    "EmpiricalMeasure",
    "ReducibleChainError",
    "cesaro_estimate",
    "model_kernel",
    "stationarity_residual",
    "tightness_diagnostic",
    "truncated_stationary_oracle",
]

Kernel = Callable[[tuple], Iterable[tuple[float, Sequence]]]


def _key(x) -> tuple:
    return tuple(v.item() if hasattr(v, "item") else v for v in np.atleast_1d(np.asarray(x)))


def _key_str(s: tuple) -> str:
    return ",".join(str(v) for v in s)


@dataclass
class EmpiricalMeasure:
    """Finitely supported probability measure; ``support`` holds tuples."""

    support: list
    weights: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support = [_key(s) for s in self.support]
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.support),):
            raise ValueError("support and weights differ in length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support entries must be distinct")

    @classmethod
    def from_counts(cls, counts: dict, info: dict | None = None) -> "EmpiricalMeasure":
        keys = sorted(counts)
        c = np.array([counts[k] for k in keys], dtype=float)
        return cls(keys, c / c.sum(), dict(info or {}))

    @classmethod
    def point_mass(cls, x) -> "EmpiricalMeasure":
        return cls([_key(x)], [1.0])

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.weights))

    def mass(self, pred: Callable[[tuple], bool]) -> float:
        return float(sum(w for s, w in zip(self.support, self.weights) if pred(s)))

    def tv(self, other: "EmpiricalMeasure") -> float:
        """Total variation distance ``sum |mu - nu| / 2``."""
        a, b = self.as_dict(), other.as_dict()
        return 0.5 * float(sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b)))

    def restrict(self, keep: Callable[[tuple], bool]) -> "EmpiricalMeasure":
        """Condition on ``keep`` (renormalized)."""
        pairs = [(s, w) for s, w in zip(self.support, self.weights) if keep(s)]
        total = sum(w for _, w in pairs)
        if total == 0:
            raise ValueError("restriction has zero mass")
        return EmpiricalMeasure([s for s, _ in pairs], [w / total for _, w in pairs], dict(self.info))

    def to_json(self) -> dict:
        return {"measure": {_key_str(s): float(w) for s, w in zip(self.support, self.weights)},
                "info": self.info}

    @classmethod
    def from_json(cls, data: dict) -> "EmpiricalMeasure":
        items = data["measure"]
        support = [tuple(_parse_num(v) for v in k.split(",")) for k in items]
        return cls(support, list(items.values()), data.get("info", {}))

    def to_csv(self, path) -> None:
        d = len(self.support[0]) if self.support else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{j}" for j in range(d)] + ["weight"])
            for s, wt in zip(self.support, self.weights):
                w.writerow(list(s) + [repr(float(wt))])


def _parse_num(v: str):
    f = float(v)
    return int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f


def cesaro_estimate(model: ProcessModel, n: int, replications: int, seed: int,
                    binning: Callable | None = None, workers: int | None = None) -> EmpiricalMeasure:
    """Pooled occupation frequencies of steps ``0..n-1`` across replications.

    Continuous-state models need ``binning`` (state -> hashable tuple).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if not model.discrete and binning is None:
        raise ValueError(f"{type(model).__name__} has continuous states; supply a binning function")
    fast = binning is None and model.n_uniforms is not None

    def make_acc(idx):
        return [] if fast else {}

    def visit(acc, t, X):
        if t >= n:
            return
        if fast:
            acc.append(np.array(X, dtype=np.int64, copy=True))
        else:
            for x in X:
                k = _key(binning(x)) if binning else model.state_key(x)
                acc[k] = acc.get(k, 0) + 1

    counts: dict = {}
    for acc in run_paths(model, n - 1, replications, seed, make_acc, visit, workers, purpose="cesaro"):
        if fast:
            allx = np.concatenate(acc, axis=0)
            rows, c = np.unique(allx, axis=0, return_counts=True)
            acc = {tuple(r): int(k) for r, k in zip(rows.tolist(), c.tolist())}
        for k, v in acc.items():
            counts[k] = counts.get(k, 0) + v
    return EmpiricalMeasure.from_counts(counts, {"horizon": n, "replications": replications, "seed": seed})


def tightness_diagnostic(mu: EmpiricalMeasure, G: Callable, kappa_grid: Sequence[float]) -> list[dict]:
    """μ-mass of ``{x : ||G(x)|| > kappa}`` for each kappa."""
    kappas = [float(k) for k in kappa_grid]
    if any(k <= 0 for k in kappas) or any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappa values must be positive and strictly increasing")
    norms = np.array([np.linalg.norm(np.asarray(G(np.asarray(s)), dtype=float)) for s in mu.support])
    return [{"kappa": k, "outside_mass": float(mu.weights[norms > k].sum())} for k in kappas]


class ReducibleChainError(ValueError):
    def __init__(self, classes: list[list]):
        self.classes = classes
        listing = "; ".join(str(c if len(c) <= 6 else c[:6] + ["..."]) for c in classes)
        super().__init__(f"truncated chain has {len(classes)} closed recurrent classes: {listing}")


def _states_of(box) -> list[tuple]:
    if isinstance(box, Box):
        return [_key(np.round(p).astype(np.int64)) for p in box.lattice_points()]
    states = [_key(s) for s in box]
    if not states:
        raise ValueError("box must be nonempty")
    return states


def _transition_matrix(kernel: Kernel, states: list[tuple], boundary: str):
    index = {s: i for i, s in enumerate(states)}
    arr = np.array(states, dtype=float)
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    rows, cols, vals = [], [], []
    escape = 0.0
    for i, s in enumerate(states):
        total = 0.0
        lost = 0.0
        for p, y in kernel(s):
            total += p
            k = _key(y)
            j = index.get(k)
            if j is None:
                lost += p
                if boundary == "reflect":
                    j = index.get(_key(np.clip(np.asarray(k, dtype=float), lo, hi).astype(arr.dtype)))
                    if j is None:
                        j = index.get(tuple(int(v) for v in np.clip(k, lo, hi)))
                    if j is None:
                        raise ValueError(f"cannot reflect {k} into the state set")
                else:
                    j = i
            rows.append(i)
            cols.append(j)
            vals.append(p)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"kernel mass at {s} sums to {total!r}")
        escape = max(escape, float(lost))
    m = len(states)
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))
    P.sum_duplicates()
    return P, escape


def _closed_classes(P: sparse.csr_matrix) -> list[np.ndarray]:
    ncomp, labels = connected_components(P, directed=True, connection="strong")
    closed = []
    coo = P.tocoo()
    leaves = np.zeros(ncomp, dtype=bool)
    out = (labels[coo.row] != labels[coo.col]) & (coo.data > 0)
    leaves[labels[coo.row[out]]] = True
    for c in range(ncomp):
        if not leaves[c]:
            closed.append(np.flatnonzero(labels == c))
    return closed


def _l1(mu: np.ndarray, P) -> float:
    return float(np.abs(P.T @ mu - mu).sum())


def truncated_stationary_oracle(kernel: Kernel, box, boundary: str = "reject",
                                tol: float = 1e-12, max_iter: int = 20000) -> EmpiricalMeasure:
    """Stationary law of ``kernel`` restricted to the finite state set ``box``.

    ``boundary="reject"`` keeps mass that would leave the set at the source
    state; ``"reflect"`` moves it to the nearest state of the bounding box.
    Power iteration runs first; a chain that does not settle (periodic or
    slowly mixing) is solved directly as a linear system.
    """
    if boundary not in ("reject", "reflect"):
        raise ValueError("boundary must be 'reject' or 'reflect'")
    states = _states_of(box)
    P, escape = _transition_matrix(kernel, states, boundary)
    closed = _closed_classes(P)
    if len(closed) > 1:
        raise ReducibleChainError([[list(states[i]) for i in c] for c in closed])
    m = len(states)
    PT = P.T.tocsr()
    mu = np.full(m, 1.0 / m)
    method = "power"
    for it in range(max_iter):
        nxt = PT @ mu
        nxt /= nxt.sum()
        done = np.abs(nxt - mu).sum() < tol * 0.1
        mu = nxt
        if done:
            break
    if _l1(mu, P) >= tol:
        method = "linear"
        A = (PT - sparse.identity(m, format="csr")).tolil()
        A[0, :] = np.ones(m)
        rhs = np.zeros(m)
        rhs[0] = 1.0
        mu = spsolve(A.tocsc(), rhs) if m > 500 else np.linalg.solve(A.toarray(), rhs)
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
    residual = _l1(mu, P)
    info = {"method": method, "residual": residual, "escape_mass": escape,
            "boundary": boundary, "states": m}
    return EmpiricalMeasure(states, mu, info)


def stationarity_residual(mu: EmpiricalMeasure, kernel: Kernel, domain: Iterable | None = None) -> float:
    """``||mu P - mu||_1`` over the support and its one-step image."""
    allowed = None if domain is None else {_key(s) for s in domain}
    if allowed is not None:
        outside = [s for s in mu.support if s not in allowed]
        if outside:
            raise ValueError(f"measure support escapes the kernel domain at {list(outside[0])}")
    nxt: dict = {}
    for s, w in zip(mu.support, mu.weights):
        for p, y in kernel(s):
            k = _key(y)
            nxt[k] = nxt.get(k, 0.0) + w * p
    cur = mu.as_dict()
    return float(sum(abs(nxt.get(k, 0.0) - cur.get(k, 0.0)) for k in set(nxt) | set(cur)))


def model_kernel(model: ProcessModel, n: int = 0) -> Kernel:
    """Adapter from a model's exact one-step law to the oracle's kernel interface."""
    def kernel(s):
        out = model.support(n, np.asarray(s, dtype=np.asarray(model.x0).dtype))
        if out is None:
            raise ValueError(f"{type(model).__name__} does not expose an exact one-step law")
        return [(p, _key(y)) for p, y in out]
    return kernel
