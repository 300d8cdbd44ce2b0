"""Stochastic reaction networks: propensities, the jump chain, drift checks and Gillespie runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import OrthantMask
from .invariant import EmpiricalMeasure
from .model import Ball, ProcessModel, Trajectory, simulate_trajectory
from .rng import stream

__all__ = [
    "BrsReport",
    "JumpChainModel",
    "Reaction",
    "ReactionNetwork",
    "birth_death",
    "check_brs",
    "constant_H",
    "ctmc_balance_residual",
    "drift_F",
    "invariant_from_jumpchain",
    "jump_chain_kernel",
    "moment_Fp",
    "normalized_affine_H",
    "propensity",
    "simulate_ctmc",
    "simulate_jump_chain",
    "total_rate",
]


@dataclass(frozen=True)
class Reaction:
    nu_minus: tuple[int, ...]
    nu_plus: tuple[int, ...]
    rate: float

    def __post_init__(self):
        for vec in (self.nu_minus, self.nu_plus):
            if any((not float(v).is_integer()) or v < 0 for v in vec):
                raise ValueError(f"stoichiometric coefficients must be nonnegative integers, got {vec}")
        if len(self.nu_minus) != len(self.nu_plus):
            raise ValueError("reactant and product vectors differ in length")
        if not self.rate > 0:
            raise ValueError(f"rate constants must be positive, got {self.rate}")
        object.__setattr__(self, "nu_minus", tuple(int(v) for v in self.nu_minus))
        object.__setattr__(self, "nu_plus", tuple(int(v) for v in self.nu_plus))
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def nu(self) -> np.ndarray:
        return np.subtract(self.nu_plus, self.nu_minus)


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    mass_action: str = "stochastic"

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if not self.reactions:
            raise ValueError("a network needs at least one reaction")
        if any(len(r.nu_minus) != len(self.species) for r in self.reactions):
            raise ValueError("every reaction must list one coefficient per species")
        if self.mass_action not in ("stochastic", "deterministic"):
            raise ValueError("mass_action must be 'stochastic' or 'deterministic'")

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def nu(self) -> np.ndarray:
        """Net change vectors, one row per reaction."""
        return np.array([r.nu for r in self.reactions], dtype=np.int64)

    @property
    def nu_minus(self) -> np.ndarray:
        return np.array([r.nu_minus for r in self.reactions], dtype=np.int64)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.reactions])

    @classmethod
    def from_json(cls, spec: Mapping) -> "ReactionNetwork":
        """``{"species": [...], "reactions": [{"reactants": {name: count}, "products": {...}, "rate": c}]}``."""
        species = list(spec["species"])
        index = {s: i for i, s in enumerate(species)}
        reactions = []
        for k, r in enumerate(spec["reactions"]):
            vecs = []
            for side in ("reactants", "products"):
                v = [0] * len(species)
                for name, count in (r.get(side) or {}).items():
                    if name not in index:
                        raise ValueError(f"reaction {k} refers to unknown species {name!r}")
                    v[index[name]] = count
                vecs.append(tuple(v))
            reactions.append(Reaction(vecs[0], vecs[1], r["rate"]))
        return cls(tuple(species), tuple(reactions), spec.get("mass_action", "stochastic"))

    def to_json(self) -> dict:
        out = []
        for r in self.reactions:
            out.append({
                "reactants": {s: c for s, c in zip(self.species, r.nu_minus) if c},
                "products": {s: c for s, c in zip(self.species, r.nu_plus) if c},
                "rate": r.rate,
            })
        return {"species": list(self.species), "reactions": out, "mass_action": self.mass_action}


def _state(net: ReactionNetwork, x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.shape != (net.n_species,):
        raise ValueError(f"state must have {net.n_species} coordinates, got shape {arr.shape}")
    if not np.all(np.equal(np.mod(arr, 1), 0)) or np.any(arr < 0):
        raise ValueError(f"states must be nonnegative integer vectors, got {arr.tolist()}")
    return arr.astype(np.int64)


def _propensities(net: ReactionNetwork, X: np.ndarray) -> np.ndarray:
    """All propensities for a batch of states, shape (batch, reactions)."""
    X = np.atleast_2d(X).astype(np.int64)
    out = np.empty((X.shape[0], len(net.reactions)))
    for k, r in enumerate(net.reactions):
        a = np.full(X.shape[0], r.rate)
        for i, m in enumerate(r.nu_minus):
            if m == 0:
                continue
            xi = X[:, i]
            if net.mass_action == "deterministic":
                a = a * xi.astype(float) ** m
            elif m == 1:
                a = a * xi
            else:
                ok = xi >= m
                val = np.zeros(X.shape[0])
                val[ok] = np.array([math.comb(int(v), m) for v in xi[ok]], dtype=float)
                a = a * val
        out[:, k] = a
    return out


def propensity(net: ReactionNetwork, k: int, x) -> float:
    """Mass-action propensity ``c_k prod_i C(x_i, nu^-_{k,i})`` (or ``prod x_i^nu`` when deterministic)."""
    x = _state(net, x)
    if not 0 <= k < len(net.reactions):
        raise IndexError(f"reaction index {k} out of range")
    return float(_propensities(net, x[None, :])[0, k])


def total_rate(net: ReactionNetwork, x) -> float:
    return float(_propensities(net, _state(net, x)[None, :])[0].sum())


def drift_F(net: ReactionNetwork, x) -> np.ndarray:
    """``F(x) = sum_k a_k(x) nu_k``."""
    a = _propensities(net, _state(net, x)[None, :])[0]
    return a @ net.nu.astype(float)


def moment_Fp(net: ReactionNetwork, x, p: float) -> float:
    """``F_p(x) = sum_k a_k(x) ||nu_k||^p``."""
    if p <= 0:
        raise ValueError("p must be positive")
    a = _propensities(net, _state(net, x)[None, :])[0]
    return float(a @ (np.linalg.norm(net.nu, axis=1) ** p))


def jump_chain_kernel(net: ReactionNetwork, x) -> list[tuple[float, np.ndarray]]:
    """One-step law of the jump chain from ``x``.

    Probabilities ``a_k(x)/A(x)``, merged over reactions with equal ``nu_k``
    (in order of first appearance); the point mass at ``x`` when ``A(x) = 0``.
    """
    x = _state(net, x)
    a = _propensities(net, x[None, :])[0]
    A = a.sum()
    if A == 0:
        return [(1.0, x.copy())]
    merged: dict[tuple, float] = {}
    for k, nu in enumerate(net.nu):
        if a[k] == 0:
            continue
        key = tuple(nu.tolist())
        merged[key] = merged.get(key, 0.0) + a[k]
    return [(w / A, x + np.array(nu, dtype=np.int64)) for nu, w in merged.items()]


class JumpChainModel(ProcessModel):
    """Jump (skeleton) chain of the network as a process model with G = identity."""

    discrete = True
    n_uniforms = 1

    def __init__(self, net: ReactionNetwork, x0, H: Callable | None = None, rho: float = 0.0):
        self.net = net
        self.x0 = _state(net, x0)
        self.orthant = OrthantMask.positive(net.n_species)
        self._H = H or constant_H([0.0] * net.n_species)
        self.C = Ball(float(rho), open=True)
        self._nu = net.nu

    def step_batch(self, n, X, U):
        a = _propensities(self.net, X)
        A = a.sum(axis=1)
        cdf = np.cumsum(a, axis=1)
        k = (U[:, :1] * A[:, None] >= cdf).sum(axis=1)
        k = np.minimum(k, len(self.net.reactions) - 1)
        moved = X + self._nu[k]
        return np.where((A > 0)[:, None], moved, X)

    def support(self, n, x):
        return jump_chain_kernel(self.net, x)

    def G(self, n, x):
        return np.asarray(x, dtype=float)

    def G_batch(self, n, X):
        return np.asarray(X, dtype=float)

    def H(self, n, x):
        return np.asarray(self._H(x), dtype=float)

    def in_C(self, x):
        # B_rho is open; the origin always belongs to C so that X_0 = 0 is admissible.
        return self.C.contains(x) or not np.any(np.asarray(x))


def constant_H(value: Sequence[float]) -> Callable:
    v = np.asarray(value, dtype=float)
    if np.any(v < 0):
        raise ValueError("H must map into R^n_+")
    return lambda x: v.copy()


def normalized_affine_H(alpha: float, beta: Sequence[float] | float) -> Callable:
    """``H(x) = (alpha x + beta) / ||alpha x + beta||`` with ``alpha > 0``, ``beta >= 0``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ValueError("beta must be nonnegative")

    def H(x):
        v = alpha * np.asarray(x, dtype=float) + beta
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("alpha x + beta vanishes; H is undefined at the origin with beta = 0")
        return v / n

    return H


@dataclass
class BrsReport:
    states: np.ndarray
    A: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    H: np.ndarray
    rho: float
    p: float
    L: float
    a_emp: float
    b_emp: float
    brs1_ok: bool
    brs2_ok: bool
    brs3_ok: bool
    witnesses: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.brs1_ok and self.brs2_ok and self.brs3_ok

    @property
    def moment_bound_applies(self) -> bool:
        return self.ok

    def to_dict(self, include_table: bool = False) -> dict:
        out = {
            "rho": self.rho, "p": self.p, "L": self.L, "a": self.a_emp, "b": self.b_emp,
            "brs1_ok": self.brs1_ok, "brs2_ok": self.brs2_ok, "brs3_ok": self.brs3_ok,
            "ok": self.ok, "moment_bound_applies": self.moment_bound_applies,
            "G": "identity" if self.ok else None,
            "checked": int(len(self.states)), "witnesses": self.witnesses,
            "skipped_zero_rate": self.skipped,
        }
        if include_table:
            out["table"] = [row for row in self.rows()]
        return out

    def rows(self):
        for i, x in enumerate(self.states):
            row = {"state": x.tolist(), "A": float(self.A[i]), "Fp": float(self.Fp[i])}
            for j, v in enumerate(self.F[i]):
                row[f"F_{j}"] = float(v)
            for j, v in enumerate(self.H[i]):
                row[f"H_{j}"] = float(v)
            yield row

    def to_csv(self, path) -> None:
        rows = list(self.rows())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = [k for k in rows[0] if k != "state"]
            w.writerow(["state"] + keys)
            for r in rows:
                w.writerow([" ".join(str(v) for v in r["state"])] + [repr(r[k]) for k in keys])


def check_brs(net: ReactionNetwork, H: Callable, rho: float, p: float, region: Sequence,
              L: float | None = None) -> BrsReport:
    """Exact check of the bounded-H, drift and jump-moment conditions on a lattice region.

    ``region`` must avoid the open ball ``B_rho``. ``L=None`` takes the
    smallest admissible constant, the maximum of ``F_p/A`` over the region.
    States with ``A(x) = 0`` are skipped and listed in ``skipped``.
    """
    if p <= 2:
        raise ValueError("p must exceed 2")
    pts = [_state(net, x) for x in region]
    if not pts:
        raise ValueError("region must be nonempty")
    for x in pts:
        if np.linalg.norm(x) < rho:
            raise ValueError(f"region state {x.tolist()} lies inside the open ball B_rho (rho={rho})")
    X = np.stack(pts)
    a = _propensities(net, X)
    A = a.sum(axis=1)
    F = a @ net.nu.astype(float)
    Fp = a @ (np.linalg.norm(net.nu, axis=1) ** p)
    Hs = np.stack([np.asarray(H(x), dtype=float) for x in X])
    if np.any(Hs < 0):
        raise ValueError("H must map into R^n_+")
    active = A > 0
    skipped = [x.tolist() for x in X[~active]]
    hn = np.linalg.norm(Hs[active], axis=1)
    a_emp = float(hn.min()) if hn.size else 0.0
    b_emp = float(hn.max()) if hn.size else 0.0
    w1 = [X[i].tolist() for i in np.flatnonzero(active) if np.linalg.norm(Hs[i]) == 0]
    lhs, rhs = F[active], -Hs[active] * A[active, None]
    bad2 = np.flatnonzero(np.any(lhs > rhs, axis=1))
    idx = np.flatnonzero(active)
    w2 = [{"state": X[idx[i]].tolist(), "F": lhs[i].tolist(), "minus_HA": rhs[i].tolist(),
           "margin": float(np.min(rhs[i] - lhs[i]))} for i in bad2]
    ratio = Fp[active] / A[active]
    L_used = float(ratio.max()) if L is None else float(L)
    bad3 = np.flatnonzero(ratio > L_used)
    w3 = [{"state": X[idx[i]].tolist(), "Fp_over_A": float(ratio[i]), "L": L_used} for i in bad3]
    return BrsReport(
        states=X, A=A, F=F, Fp=Fp, H=Hs, rho=float(rho), p=float(p), L=L_used,
        a_emp=a_emp, b_emp=b_emp,
        brs1_ok=bool(a_emp > 0 and not w1), brs2_ok=not w2, brs3_ok=not w3,
        witnesses={"brs1": w1, "brs2": w2, "brs3": w3}, skipped=skipped,
    )


def simulate_jump_chain(net: ReactionNetwork, x0, horizon: int, seed: int) -> Trajectory:
    # C only matters to the drift checks; take it large enough to hold x0.
    rho = float(np.linalg.norm(_state(net, x0))) + 1.0
    return simulate_trajectory(JumpChainModel(net, x0, rho=rho), horizon, seed)


def simulate_ctmc(net: ReactionNetwork, x0, t_end: float, seed: int, max_events: int = 10_000_000
                  ) -> Trajectory:
    """Gillespie direct method on ``[0, t_end]``.

    ``times[j]`` is the time of the j-th jump (``times[0] = 0``); with
    ``A(x) = 0`` the path stays put until ``t_end``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rng = stream(seed, "ctmc", 0)
    x = _state(net, x0)
    nu = net.nu
    times, states = [0.0], [x.copy()]
    t = 0.0
    for _ in range(max_events):
        a = _propensities(net, x[None, :])[0]
        A = a.sum()
        if A == 0:
            break
        t += rng.exponential(1.0 / A)
        if t > t_end:
            break
        k = int(np.searchsorted(np.cumsum(a), rng.random() * A, side="right"))
        x = x + nu[min(k, len(a) - 1)]
        times.append(t)
        states.append(x.copy())
    else:
        raise RuntimeError(f"more than {max_events} events before t_end={t_end}")
    g = np.stack(states).astype(float)
    return Trajectory(states=states, g_values=g, seed=seed, times=np.asarray(times))


def invariant_from_jumpchain(lam: EmpiricalMeasure, net: ReactionNetwork) -> EmpiricalMeasure:
    """CTMC invariant law ``pi(x) ∝ lambda(x) / A(x)`` from a jump-chain invariant law."""
    rates = np.array([total_rate(net, s) for s in lam.support])
    if np.any(rates == 0):
        bad = [list(s) for s, r in zip(lam.support, rates) if r == 0]
        raise ValueError(f"A(x) = 0 on support states {bad}; the transfer is not defined there")
    w = lam.weights / rates
    return EmpiricalMeasure(list(lam.support), w / w.sum(),
                            info={"transfer": "lambda/A", "normalizer": float(w.sum())})


def ctmc_balance_residual(pi: EmpiricalMeasure, net: ReactionNetwork) -> float:
    """``sum_x |(pi Q)(x)|`` over the support and its one-step neighbours."""
    flow: dict[tuple, float] = {}
    for s, w in zip(pi.support, pi.weights):
        x = _state(net, s)
        a = _propensities(net, x[None, :])[0]
        for k, nu in enumerate(net.nu):
            if a[k] == 0 or not np.any(nu):
                continue
            y = tuple((x + nu).tolist())
            flow[y] = flow.get(y, 0.0) + w * a[k]
            flow[tuple(s)] = flow.get(tuple(s), 0.0) - w * a[k]
    return float(sum(abs(v) for v in flow.values()))


def birth_death(birth: float = 1.0, death: float = 1.0) -> ReactionNetwork:
    """``0 -> S`` at rate ``birth`` and ``S -> 0`` at rate ``death * x``."""
    return ReactionNetwork(("S",), (Reaction((0,), (1,), birth), Reaction((1,), (0,), death)))


def lattice_box(bounds: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    axes = [range(int(lo), int(hi) + 1) for lo, hi in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return [tuple(row) for row in grid.tolist()]
