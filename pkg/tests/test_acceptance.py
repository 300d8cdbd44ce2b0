"""Exit criteria at their stated tolerances.

Each test carries a ``criterion`` marker; the conftest hook prints one
PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import poisson

from driftlab.brn import (JumpChainModel, Reaction, ReactionNetwork, birth_death, check_brs, constant_H,
                          drift_F, invariant_from_jumpchain, jump_chain_kernel, moment_Fp, total_rate)
from driftlab.cli import main
from driftlab.core import OrthantMask, in_orthant, leq_orthant, norm_l1, norm_l2, reflect
from driftlab.ifs import check_prop_ifs, radial_ifs
from driftlab.invariant import (EmpiricalMeasure, cesaro_estimate, model_kernel, tightness_diagnostic,
                                truncated_stationary_oracle)
from driftlab.martlab import (DriftedWalk, PlusMinusOne, containment_violations, doob_decompose,
                              fit_increment_scaling)
from driftlab.stability import check_drift, check_jump_bound, check_structural, estimate_sup_moment
from driftlab.walks import walk_preset

pytestmark = pytest.mark.acceptance

SEED = 20240601


def poisson_measure(hi):
    w = poisson.pmf(np.arange(hi + 1), 1.0)
    return EmpiricalMeasure([(k,) for k in range(hi + 1)], w / w.sum())


@pytest.fixture(scope="module")
def fixture1_traces():
    model = walk_preset("coordinate")
    t0 = time.perf_counter()
    traces = {r: estimate_sup_moment(model, r, 10_000, 200, seed=SEED) for r in (1, 2, 4)}
    return traces, time.perf_counter() - t0


@pytest.mark.criterion(1, "reflected down-biased 2-d walk is bounded for r in {1,2,4}")
def test_positive_fixture(fixture1_traces, record_property):
    traces, elapsed = fixture1_traces
    w = walk_preset("coordinate")
    off = [np.array([a, b]) for a in range(0, 40, 3) for b in range(11, 40, 3)]
    off += [np.array([b, a]) for a, b in (tuple(x) for x in off)]
    on = [np.round(p).astype(np.int64) for p in w.C.lattice_points()]
    s = check_structural(w, off, on)
    d = check_drift(w, off, tol=0.0)
    j = check_jump_bound(w, off, p=6)
    record_property("detail", ", ".join(f"r={r}: {t.verdict} slope {t.growth_exponent:+.4f}"
                                        for r, t in traces.items()) + f" ({elapsed:.1f} s)")
    assert s.ok and d.ok and d.margin >= 0
    assert j.L_hat <= 2 ** 3 + 1e-12 and not j.nonconvergent
    for r, t in traces.items():
        assert t.verdict == "bounded", r
        assert t.growth_exponent < 0.1, r
    assert elapsed < 60


@pytest.mark.criterion(2, "symmetric walk grows like n for r=2")
def test_negative_fixture(record_property):
    trace = estimate_sup_moment(walk_preset("symmetric", dim=1), 2, 1000, 4000, seed=SEED)
    record_property("detail", f"slope {trace.growth_exponent:.4f}, verdict {trace.verdict}")
    assert abs(trace.growth_exponent - 1.0) <= 0.15
    assert trace.verdict == "growing"
    # The exact law E X_n^2 = n.
    n = trace.n[1:]
    assert np.all(np.abs(trace.m[1:] - n) <= 4 * trace.half_width[1:] + 1e-12)


@pytest.mark.criterion(3, "birth-death network end to end")
def test_brn_end_to_end(record_property):
    net = birth_death(1.0, 1.0)
    rep = check_brs(net, constant_H([0.5]), rho=2, p=3, region=[(x,) for x in range(2, 201)])
    model = JumpChainModel(net, (0,))
    lam_hat = cesaro_estimate(model, 100_000, 1, seed=SEED)
    pi_hat = invariant_from_jumpchain(lam_hat, net)
    truth = poisson_measure(30)
    tv_mc = pi_hat.restrict(lambda s: s[0] <= 30).tv(truth)
    lam = truncated_stationary_oracle(model_kernel(model), [(k,) for k in range(31)])
    tv_oracle = invariant_from_jumpchain(lam, net).tv(truth)
    witnesses = [w["state"][0] for w in rep.witnesses["brs2"]]
    record_property("detail", f"drift check ok={rep.brs2_ok} (witness x={witnesses}), "
                              f"TV(Cesaro, Poisson)={tv_mc:.4f}, TV(oracle, Poisson)={tv_oracle:.2e}")
    assert tv_mc < 0.05
    assert tv_oracle < 1e-8
    # At x=2: F = 1 - 2 = -1 but -H A = -0.5 * 3 = -1.5, so the check cannot pass on [2, 200].
    drift_ok = rep.ok
    assert drift_ok, f"drift condition fails at x={witnesses}"


def _network_zoo():
    return ReactionNetwork(("A", "B", "C"), (
        Reaction((0, 0, 0), (1, 0, 0), 2.0),
        Reaction((1, 1, 0), (0, 0, 1), 0.5),
        Reaction((2, 0, 0), (0, 1, 0), 0.3),
        Reaction((0, 0, 1), (1, 1, 0), 1.2),
        Reaction((0, 1, 0), (0, 0, 0), 0.7),
        Reaction((0, 0, 1), (0, 0, 3), 0.1),
        Reaction((1, 0, 0), (0, 0, 0), 0.4),
        Reaction((0, 1, 0), (0, 2, 0), 0.2),
    ))


@pytest.mark.criterion(4, "jump-kernel moments equal drift_F/A and F_p/A")
def test_kernel_identities(record_property):
    net = _network_zoo()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        x = rng.integers(0, 60, size=3)
        p = rng.uniform(2.1, 5.0)
        A = total_rate(net, x)
        ker = jump_chain_kernel(net, x)
        mass = sum(w for w, _ in ker)
        mean = sum(w * (y - x) for w, y in ker)
        pth = sum(w * np.linalg.norm(y - x) ** p for w, y in ker)
        errs = [abs(mass - 1), np.max(np.abs(mean - drift_F(net, x) / A)), abs(pth - moment_Fp(net, x, p) / A)]
        worst = max(worst, *errs)
    record_property("detail", f"max error {worst:.2e} over 100 states")
    assert worst <= 1e-12


@pytest.mark.criterion(5, "orthant algebra")
def test_orthant_algebra(record_property):
    rng = np.random.default_rng(SEED)
    failures = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 7))
        mask = OrthantMask(tuple(rng.choice([-1, 1], size=d)))
        x, y, z = (rng.normal(0, 10, d) for _ in range(3))
        checks = [
            leq_orthant(x, x, mask),
            not (leq_orthant(x, y, mask) and leq_orthant(y, x, mask)) or np.array_equal(x, y),
            not (leq_orthant(x, y, mask) and leq_orthant(y, z, mask)) or leq_orthant(x, z, mask),
            np.array_equal(reflect(reflect(x, mask), mask), x),
            norm_l2(reflect(x, mask)) == norm_l2(x),
            in_orthant(x, mask) == in_orthant(reflect(x, mask), OrthantMask.positive(d)),
            leq_orthant(x, y, mask) == in_orthant(y - x, mask),
            norm_l2(x) <= norm_l1(x) * (1 + 1e-12) and norm_l1(x) <= math.sqrt(d) * norm_l2(x) * (1 + 1e-12),
        ]
        # Force comparable pairs often enough to exercise antisymmetry and transitivity.
        y2 = x + reflect(np.abs(y), mask)
        z2 = y2 + reflect(np.abs(z), mask)
        checks += [leq_orthant(x, y2, mask), leq_orthant(y2, z2, mask), leq_orthant(x, z2, mask)]
        failures += not all(checks)
    record_property("detail", f"{failures} failures in 10000 triples")
    assert failures == 0


@pytest.mark.criterion(6, "Doob decomposition of drifted walks")
def test_doob(record_property):
    gen = DriftedWalk([0.4, 0.15], d=2)
    Z = gen.paths(100, 1000, seed=SEED)
    dec = doob_decompose(Z, gen.conditional_mean)
    err = dec.reconstruction_error(Z)
    scale = np.finfo(float).eps * np.max(np.abs(Z))
    record_property("detail", f"reconstruction error {err:.2e} (eps*max|Z| = {scale:.2e})")
    assert err <= 4 * scale
    assert np.all(np.diff(dec.V, axis=1) >= 0)
    assert np.all(dec.dV == np.array([0.4, 0.15]))


@pytest.mark.criterion(7, "martingale scaling and tail fits")
def test_martingale_fits(record_property):
    t0 = time.perf_counter()
    grid = [16, 32, 64, 128, 256, 512]
    fit = fit_increment_scaling(PlusMinusOne(1), 4, grid, 20_000, seed=SEED, r=1.0)
    exact = [3 * n ** 2 - 2 * n for n in grid]
    exact_slope = np.polyfit(np.log(grid), np.log(exact), 1)[0]
    paths = PlusMinusOne(1).paths(10_000, 1000, seed=SEED)
    cont = containment_violations(paths)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"scaling {fit.exponent:.3f} (exact-law slope {exact_slope:.3f}), "
                              f"tail decay {fit.tail.decay:.3f}, containment violations "
                              f"{cont['norm_violations'] + cont['S_violations']}/{cont['paths']}")
    assert abs(fit.exponent - 2) <= 0.3
    assert abs(fit.exponent - exact_slope) <= 0.3
    assert np.allclose(fit.estimates, exact, rtol=0.1)
    assert fit.tail.decay >= 1 - 0.3
    assert cont == {"paths": 10_000, "norm_violations": 0, "S_violations": 0}
    assert elapsed < 120


@pytest.mark.criterion(8, "radial IFS: exact drift and bounded moments for r in {1,2,4,6}")
def test_ifs_fixture(record_property):
    m = radial_ifs()
    rng = np.random.default_rng(SEED)
    pts = [x for x in rng.uniform(0, 50, (500, 2)) if not m.C.contains(x)]
    rep = check_prop_ifs(m, [(x, y) for x in pts for y in range(m.modes)])
    traces = {r: estimate_sup_moment(m, r, 10_000, 200, seed=SEED) for r in (1, 2, 4, 6)}
    record_property("detail", f"margin {rep.margin:.1e}; " + ", ".join(
        f"r={r}: {t.verdict}" for r, t in traces.items()))
    assert rep.ok and rep.moment_bound_applies
    assert abs(rep.margin) <= 1e-12
    assert all(t.verdict == "bounded" for t in traces.values())


@pytest.mark.criterion(9, "Cesaro tail mass obeys the Markov bound")
def test_tightness(fixture1_traces, record_property):
    model = walk_preset("coordinate")
    mu = cesaro_estimate(model, 10_000, 200, seed=SEED)
    trace = fixture1_traces[0][2]
    upper = float(np.max(trace.m + trace.half_width))
    rows = tightness_diagnostic(mu, lambda s: model.G(0, s), [5, 10, 20, 40])
    bounds = [upper / row["kappa"] ** 2 for row in rows]
    record_property("detail", ", ".join(f"k={row['kappa']:g}: {row['outside_mass']:.3g} <= {b:.3g}"
                                        for row, b in zip(rows, bounds)))
    assert all(row["outside_mass"] <= b for row, b in zip(rows, bounds))


BD = {"species": ["S"], "reactions": [{"products": {"S": 1}, "rate": 1.0}, {"reactants": {"S": 1}, "rate": 1.0}]}

RUNS = {
    "fixture1-moments": ("moments", {"model": {"walk": {"preset": "coordinate"}},
                                     "simulate": {"horizon": 10_000, "replications": 200, "r": 2, "p": 6}}),
    "symmetric-moments": ("moments", {"model": {"walk": {"preset": "symmetric", "params": {"dim": 1}}},
                                      "simulate": {"horizon": 1000, "replications": 4000, "r": 2, "p": 4}}),
    "bd-check": ("check", {"model": {"brn": {"network": BD, "x0": [0], "rho": 2}},
                           "check": {"p": 3, "rho": 2, "H": {"constant": [0.5]}, "region": {"box": [[2, 200]]}}}),
    "bd-invariant": ("invariant", {"model": {"brn": {"network": BD, "x0": [0]}},
                                   "invariant": {"horizon": 100_000, "box": [[0, 30]], "kappa": [1, 2, 5]}}),
    "pm1-martlab": ("martlab", {"model": {"martingale": {"name": "pm1"}},
                                "martlab": {"p": 4, "r": 1, "n_grid": [16, 32, 64, 128, 256, 512],
                                            "replications": 20_000}}),
    "radial-check": ("check", {"model": {"ifs": {"preset": "radial"}},
                               "check": {"region": {"random": {"box": [[0, 50], [0, 50]], "count": 500}}}}),
    "radial-moments": ("moments", {"model": {"ifs": {"preset": "radial"}},
                                   "simulate": {"horizon": 10_000, "replications": 200, "r": 6, "p": 8}}),
}


@pytest.mark.criterion(10, "byte-identical outputs across --workers")
def test_determinism(tmp_path, record_property):
    differing = []
    files = 0
    for name, (command, cfg) in RUNS.items():
        cfg = dict(cfg, seed=SEED)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        snaps = []
        for workers in (1, 3, 8):
            out = tmp_path / f"{name}-w{workers}"
            main([command, "--config", str(path), "--out", str(out), "--workers", str(workers)])
            snaps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        files += len(snaps[0])
        if not (snaps[0] and snaps[0] == snaps[1] == snaps[2]):
            differing.append(name)
    record_property("detail", f"{len(RUNS)} runs, {files} files per worker count, differing: {differing or 'none'}")
    assert not differing
