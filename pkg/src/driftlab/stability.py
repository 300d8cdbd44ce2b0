"""Hypothesis checkers for the vector drift criterion and the moment-bound estimator.

The checkers are sample based: a pass is evidence over the sampled states,
a failure comes with a witness state. Kernels that expose a finite one-step
law are checked with exact sums; the remaining ones are checked against
Monte Carlo estimates with a tolerance tied to the estimator's standard error.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .core import in_orthant, reflect
from .model import (ProcessModel, estimate_conditional_drift, estimate_jump_moment,
                    increment_samples, run_paths, validate_model)

__all__ = [
    "DriftResult",
    "HypothesisReport",
    "JumpResult",
    "MomentTrace",
    "StructuralResult",
    "check_drift",
    "check_jump_bound",
    "check_structural",
    "estimate_sup_moment",
    "theorem_rate_bound",
]

# Slack for exact finite sums: e.g. 0.3*1 + 0.7*(-1) rounds to -0.39999999999999997.
ROUNDOFF = 1e-12


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


@dataclass
class StructuralResult:
    orthant_ok: bool
    disjoint_ok: bool
    bounds_ok: bool
    a_hat: float
    b_hat: float
    witnesses: dict[str, list] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.orthant_ok and self.disjoint_ok and self.bounds_ok

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["ok"] = self.ok
        return d


@dataclass
class DriftResult:
    ok: bool
    margin: float
    checked: int
    violations: list[dict] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class JumpResult:
    L_hat: float
    p: float
    nonconvergent: bool
    rows: list[dict] = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class HypothesisReport:
    structural: StructuralResult | None = None
    drift: DriftResult | None = None
    jump: JumpResult | None = None

    @property
    def a_hat(self):
        return None if self.structural is None else self.structural.a_hat

    @property
    def b_hat(self):
        return None if self.structural is None else self.structural.b_hat

    @property
    def ok(self) -> bool:
        parts = [self.structural.ok if self.structural else True,
                 self.drift.ok if self.drift else True,
                 (not self.jump.nonconvergent) if self.jump else True]
        return all(parts)

    def to_dict(self):
        return {
            "structural": self.structural.to_dict() if self.structural else None,
            "drift": self.drift.to_dict() if self.drift else None,
            "jump": self.jump.to_dict() if self.jump else None,
            "ok": self.ok,
        }


def _ser(model, x):
    return _jsonable(model.serialize_state(x))


def check_structural(model: ProcessModel, off_c_sample: Sequence, on_c_sample: Sequence,
                     n_range: Iterable[int] = (0,), collision_tol: float = 1e-9) -> StructuralResult:
    """Sample-based check of the orthant, image-disjointness and bound conditions.

    (i) ``G_n(x)`` and ``H_n(x)`` lie in the model's orthant for sampled ``x`` off C;
    (ii) no ``G_n`` image of an off-C sample is within ``collision_tol``
    (sup-norm) of the image of an on-C sample; (iii) ``a_hat`` is the smallest
    ``||H_n||`` off C and ``b_hat`` the largest of ``||H_n||`` off C and
    ``||G_n||`` on C. Condition (iii) fails when ``a_hat`` is zero.
    """
    off_c_sample, on_c_sample = list(off_c_sample), list(on_c_sample)
    if not off_c_sample or not on_c_sample:
        raise ValueError("both the off-C and the on-C samples must be nonempty")
    for x in off_c_sample:
        if model.in_C(x):
            raise ValueError(f"state {_ser(model, x)} is in C but was passed as off-C")
    for x in on_c_sample:
        if not model.in_C(x):
            raise ValueError(f"state {_ser(model, x)} is off C but was passed as on-C")
    n_range = list(n_range)
    witnesses: dict[str, list] = {"orthant": [], "collision": [], "bounds": []}
    h_norms, g_on_norms = [], []
    for n in n_range:
        g_off = np.stack([model.G(n, x) for x in off_c_sample])
        h_off = np.stack([model.H(n, x) for x in off_c_sample])
        g_on = np.stack([model.G(n, y) for y in on_c_sample])
        for x, g, h in zip(off_c_sample, g_off, h_off):
            if not (in_orthant(g, model.orthant) and in_orthant(h, model.orthant)):
                witnesses["orthant"].append({"n": n, "state": _ser(model, x), "G": g, "H": h})
        tree = cKDTree(g_on)
        dist, idx = tree.query(g_off, k=1, p=np.inf, distance_upper_bound=collision_tol)
        for i in np.flatnonzero(np.isfinite(dist)):
            witnesses["collision"].append({"n": n, "off_state": _ser(model, off_c_sample[i]),
                                           "on_state": _ser(model, on_c_sample[idx[i]]),
                                           "G": g_off[i]})
        hn = np.linalg.norm(h_off, axis=1)
        for x, v in zip(off_c_sample, hn):
            if v == 0:
                witnesses["bounds"].append({"n": n, "state": _ser(model, x), "norm_H": 0.0})
        h_norms.append(hn)
        g_on_norms.append(np.linalg.norm(g_on, axis=1))
    h_all = np.concatenate(h_norms)
    a_hat = float(h_all.min())
    b_hat = float(max(h_all.max(), np.concatenate(g_on_norms).max()))
    return StructuralResult(
        orthant_ok=not witnesses["orthant"],
        disjoint_ok=not witnesses["collision"],
        bounds_ok=a_hat > 0 and math.isfinite(b_hat),
        a_hat=a_hat, b_hat=b_hat,
        witnesses={k: _jsonable(v) for k, v in witnesses.items()},
    )


def check_drift(model: ProcessModel, states: Sequence, n_range: Iterable[int] = (0,),
                samples: int = 10_000, tol: float | None = None, seed: int = 0,
                roundoff: float = ROUNDOFF) -> DriftResult:
    """Check ``E[G_{n+1}(X_{n+1}) - G_n(X_n) | X_n = x] <=_alpha -H_n(x)`` on sampled states.

    The comparison is made in the reflected frame, where the orthant order is
    the component-wise one. ``tol=None`` uses three standard errors per
    component (zero for exact finite sums). A rounding slack of ``roundoff``
    (relative to the size of the bound) is always allowed.
    """
    states = list(states)
    for x in states:
        if model.in_C(x):
            raise ValueError(f"state {_ser(model, x)} lies in C; the drift condition is only imposed off C")
    if tol is not None and tol < 0:
        raise ValueError("tol must be nonnegative")
    mask = model.orthant
    rows, violations = [], []
    worst = math.inf
    for n in n_range:
        for i, x in enumerate(states):
            mean, se = estimate_conditional_drift(model, x, n, samples, seed=seed + i)
            bound = -model.H(n, x)
            tol_vec = 3.0 * se if tol is None else np.full_like(mean, tol)
            slack = roundoff * max(1.0, float(np.max(np.abs(bound))))
            margin_vec = reflect(bound, mask) - reflect(mean, mask)
            margin = float(np.min(margin_vec))
            ok = bool(np.all(margin_vec + tol_vec + slack >= 0))
            row = {"n": n, "state": _ser(model, x), "drift": mean, "stderr": se,
                   "bound": bound, "tol": tol_vec, "margin": margin, "ok": ok}
            rows.append(_jsonable(row))
            worst = min(worst, margin)
            if not ok:
                violations.append(_jsonable(row))
    return DriftResult(ok=not violations, margin=worst, checked=len(rows),
                       violations=violations, rows=rows)


def _prefix_growth(vals: np.ndarray) -> float:
    """Log-log slope of the running mean over nested prefixes of the sample."""
    n = vals.size
    sizes = [s for s in (n // 64, n // 16, n // 4, n) if s >= 8]
    if len(sizes) < 2:
        return 0.0
    means = [vals[:s].mean() for s in sizes]
    if min(means) <= 0:
        return 0.0
    return float(np.polyfit(np.log(sizes), np.log(means), 1)[0])


def check_jump_bound(model: ProcessModel, states: Sequence, n_range: Iterable[int] = (0,),
                     p: float = 3.0, samples: int = 10_000, seed: int = 0,
                     growth_tol: float = 0.25) -> JumpResult:
    """Estimate ``L_hat``, the largest conditional p-th jump moment over sampled states.

    Monte Carlo estimates contribute their upper 3-sigma value. The sample
    p-th moment of a heavy-tailed increment keeps growing with the sample
    size; a running-mean growth exponent above ``growth_tol`` flags the
    estimate as nonconvergent.
    """
    states = list(states)
    if not states:
        raise ValueError("states must be nonempty")
    if p <= 0:
        raise ValueError("p must be positive")
    if p <= 2:
        warnings.warn(f"p={p} <= 2: the moment bound needs a jump moment of order p > 2", stacklevel=2)
    rows = []
    L_hat = 0.0
    nonconvergent = False
    for n in n_range:
        for i, x in enumerate(states):
            if model.support(n, x) is not None:
                value, se = estimate_jump_moment(model, x, n, p, samples, seed=seed + i)
                growth = 0.0
            else:
                incs = increment_samples(model, x, n, samples, seed + i, purpose="jump")
                vals = np.linalg.norm(incs, axis=1) ** p
                value, se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))
                growth = _prefix_growth(vals)
            flagged = growth > growth_tol
            nonconvergent |= flagged
            upper = value + 3.0 * se
            L_hat = max(L_hat, upper)
            rows.append(_jsonable({"n": n, "state": _ser(model, x), "value": value, "stderr": se,
                                   "upper": upper, "growth": growth, "nonconvergent": flagged}))
    return JumpResult(L_hat=float(L_hat), p=float(p), nonconvergent=bool(nonconvergent), rows=rows)


def theorem_rate_bound(p: float, variant: str = "conditional") -> float:
    """Supremum of the admissible moment orders ``r`` given a jump moment of order ``p``.

    ``p - 1`` when the jump bound holds conditionally on the past, ``p/2 - 1``
    when it only holds unconditionally.
    """
    if variant == "conditional":
        return p - 1.0
    if variant == "unconditional":
        return p / 2.0 - 1.0
    raise ValueError(f"variant must be 'conditional' or 'unconditional', got {variant!r}")


@dataclass
class MomentTrace:
    r: float
    n: np.ndarray
    m: np.ndarray
    half_width: np.ndarray
    replications: int
    sup_estimate: float
    growth_exponent: float
    verdict: str
    trailing_sup: float
    mid_sup: float
    exponent_tol: float
    window_tol: float
    confidence: float

    def summary(self) -> dict:
        return _jsonable({
            "r": self.r, "replications": self.replications, "horizon": int(self.n[-1]),
            "sup_estimate": self.sup_estimate, "growth_exponent": self.growth_exponent,
            "verdict": self.verdict, "trailing_sup": self.trailing_sup, "mid_sup": self.mid_sup,
            "exponent_tol": self.exponent_tol, "window_tol": self.window_tol,
            "confidence": self.confidence,
        })

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "m_n", "half_width"])
            for n, m, h in zip(self.n, self.m, self.half_width):
                w.writerow([int(n), repr(float(m)), repr(float(h))])


def _growth_exponent(n: np.ndarray, m: np.ndarray) -> float:
    keep = m > 0
    if keep.sum() < 2 or np.all(m[keep] == m[keep][0]):
        return 0.0
    return float(np.polyfit(np.log(n[keep]), np.log(m[keep]), 1)[0])


def estimate_sup_moment(model: ProcessModel, r: float, horizon: int, replications: int, seed: int,
                        workers: int | None = None, exponent_tol: float = 0.1,
                        window_tol: float = 0.1, confidence: float = 0.95) -> MomentTrace:
    """Estimate ``m_n = E||G_n(X_n)||^r`` for ``n = 0..horizon`` across replicates.

    ``growth_exponent`` is the log-log slope of ``m_n`` over ``[horizon/2, horizon]``.
    The verdict compares the sup over ``[3H/4, H]`` with the sup over
    ``[H/4, H/2]``: "bounded" when the exponent is below ``exponent_tol`` and
    the later sup exceeds the earlier one by at most ``window_tol``,
    "growing" when both tests fail, "inconclusive" otherwise.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if horizon < 4:
        raise ValueError("horizon must be at least 4 to form a trailing window")
    if replications < 30:
        raise ValueError("at least 30 replications are needed for confidence intervals")
    validate_model(model)

    def make_acc(idx):
        return [np.zeros(horizon + 1), np.zeros(horizon + 1)]

    def visit(acc, n, X):
        v = np.linalg.norm(model.G_batch(n, X), axis=1) ** r
        acc[0][n] = v.sum()
        acc[1][n] = (v * v).sum()

    blocks = run_paths(model, horizon, replications, seed, make_acc, visit, workers, purpose="moments")
    # Fixed block order keeps the reduction independent of the worker count.
    s1 = np.zeros(horizon + 1)
    s2 = np.zeros(horizon + 1)
    for a, b in blocks:
        s1 += a
        s2 += b
    R = replications
    m = s1 / R
    var = np.maximum(s2 - R * m * m, 0.0) / (R - 1)
    tq = stats.t.ppf(0.5 + confidence / 2, R - 1)
    hw = tq * np.sqrt(var / R)
    # A constant process gives zero variance exactly, not a rounding residue.
    hw[var <= 1e-14 * np.maximum(m * m, 1e-300)] = 0.0
    n = np.arange(horizon + 1)
    lo = horizon // 2
    expo = _growth_exponent(n[max(lo, 1):], m[max(lo, 1):])
    mid = float(np.max(m[horizon // 4: horizon // 2 + 1]))
    trail = float(np.max(m[(3 * horizon) // 4:]))
    flat = trail <= (1.0 + window_tol) * mid
    if expo < exponent_tol and flat:
        verdict = "bounded"
    elif expo >= exponent_tol and not flat:
        verdict = "growing"
    else:
        verdict = "inconclusive"
    return MomentTrace(r=float(r), n=n, m=m, half_width=hw, replications=R,
                       sup_estimate=float(np.max(m + hw)), growth_exponent=expo, verdict=verdict,
                       trailing_sup=trail, mid_sup=mid, exponent_tol=exponent_tol,
                       window_tol=window_tol, confidence=confidence)
