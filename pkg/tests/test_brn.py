import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftlab.brn import (JumpChainModel, Reaction, ReactionNetwork, birth_death, check_brs, constant_H,
                          ctmc_balance_residual, drift_F, invariant_from_jumpchain, jump_chain_kernel, lattice_box,
                          moment_Fp, normalized_affine_H, propensity, simulate_ctmc, simulate_jump_chain, total_rate)
from driftlab.invariant import EmpiricalMeasure, model_kernel, truncated_stationary_oracle
from driftlab.model import simulate_trajectory


def net_of(*reactions, n=1, mass_action="stochastic"):
    names = tuple(f"S{i + 1}" for i in range(n))
    return ReactionNetwork(names, tuple(Reaction(*r) for r in reactions), mass_action)


def kernel_dict(net, x):
    return {tuple(y.tolist()): p for p, y in jump_chain_kernel(net, x)}


def test_propensity_examples():
    net = net_of(((1, 1, 0), (0, 0, 1), 0.5), n=3)
    assert propensity(net, 0, (2, 3, 0)) == 3.0
    dimer = net_of(((2,), (0,), 1.0))
    assert propensity(dimer, 0, (3,)) == 3.0
    assert propensity(dimer, 0, (1,)) == 0.0
    det = net_of(((2,), (0,), 1.0), mass_action="deterministic")
    assert propensity(det, 0, (3,)) == 9.0


def test_birth_death_quantities():
    net = birth_death(1.0, 0.5)
    assert total_rate(net, (2,)) == 2.0
    assert drift_F(net, (2,))[0] == 0.0
    assert moment_Fp(net, (2,), 3) == 2.0
    assert kernel_dict(net, (2,)) == {(3,): 0.5, (1,): 0.5}
    net = birth_death(1.0, 1.0)
    assert total_rate(net, (5,)) == 6.0
    assert drift_F(net, (5,))[0] == -4.0


def test_kernel_merges_equal_jumps_and_absorbs():
    net = net_of(((1,), (2,), 1.0), ((0,), (1,), 1.0), ((1,), (0,), 2.0))
    assert kernel_dict(net, (1,)) == {(2,): 0.5, (0,): 0.5}
    absorbing = net_of(((1,), (0,), 1.0))
    assert kernel_dict(absorbing, (0,)) == {(0,): 1.0}
    traj = simulate_jump_chain(absorbing, (3,), 6, seed=0)
    assert [int(s[0]) for s in traj.states] == [3, 2, 1, 0, 0, 0, 0]


def test_network_validation_and_json():
    with pytest.raises(ValueError):
        Reaction((-1,), (0,), 1.0)
    with pytest.raises(ValueError):
        Reaction((1,), (0,), 0.0)
    with pytest.raises(ValueError):
        total_rate(birth_death(), (1.5,))
    with pytest.raises(ValueError):
        total_rate(birth_death(), (-1,))
    spec = {"species": ["A", "B"], "reactions": [{"reactants": {"A": 1}, "products": {"B": 2}, "rate": 0.3}]}
    net = ReactionNetwork.from_json(spec)
    assert net.nu.tolist() == [[-1, 2]]
    assert ReactionNetwork.from_json(net.to_json()) == net
    with pytest.raises(ValueError, match="unknown species"):
        ReactionNetwork.from_json({"species": ["A"], "reactions": [{"reactants": {"Z": 1}, "rate": 1}]})


def test_check_brs_examples(bd_net):
    half = constant_H([0.5])
    rep = check_brs(bd_net, half, rho=4.0, p=3, region=[(5,)])
    assert rep.ok and rep.L == pytest.approx(1.0)
    rep = check_brs(bd_net, constant_H([0.9]), rho=4.0, p=3, region=[(5,)])
    assert not rep.brs2_ok
    assert rep.witnesses["brs2"][0]["state"] == [5]
    assert rep.witnesses["brs2"][0]["margin"] == pytest.approx(-1.4)
    region = [(x,) for x in range(3, 201)]
    tight = check_brs(bd_net, half, rho=3.0, p=3, region=region)
    assert tight.ok
    assert check_brs(bd_net, half, rho=3.0, p=3, region=region, L=tight.L).brs3_ok
    assert not check_brs(bd_net, half, rho=3.0, p=3, region=region, L=tight.L * (1 - 1e-9)).brs3_ok
    with pytest.raises(ValueError, match="B_rho"):
        check_brs(bd_net, half, rho=4.0, p=3, region=[(3,)])
    with pytest.raises(ValueError, match="p must exceed 2"):
        check_brs(bd_net, half, rho=4.0, p=2, region=[(5,)])


def test_check_brs_small_state_witness(bd_net):
    rep = check_brs(bd_net, constant_H([0.5]), rho=2.0, p=3, region=[(x,) for x in range(2, 201)])
    assert not rep.brs2_ok
    assert [w["state"] for w in rep.witnesses["brs2"]] == [[2]]


def test_check_brs_skips_zero_rate_states():
    net = net_of(((1,), (0,), 1.0))
    rep = check_brs(net, constant_H([0.5]), rho=0.0, p=3, region=[(0,), (3,)])
    assert rep.skipped == [[0]]
    assert rep.ok


def test_normalized_affine_H():
    H = normalized_affine_H(1.0, 1.0)
    np.testing.assert_allclose(np.linalg.norm(H(np.array([3, 4]))), 1.0)
    with pytest.raises(ValueError):
        normalized_affine_H(1.0, 0.0)(np.zeros(2))
    with pytest.raises(ValueError):
        normalized_affine_H(0.0, 1.0)
    with pytest.raises(ValueError):
        constant_H([-0.1])


def test_pure_birth_strictly_increases():
    net = net_of(((0,), (1,), 2.0))
    traj = simulate_ctmc(net, (0,), 20.0, seed=4)
    xs = [int(s[0]) for s in traj.states]
    assert xs == list(range(len(xs)))
    assert np.all(np.diff(traj.times) > 0)


def test_ctmc_event_count_is_poisson():
    net = net_of(((0,), (1,), 1.0))
    counts = np.array([len(simulate_ctmc(net, (0,), 10.0, seed=s).states) - 1 for s in range(800)])
    se = np.sqrt(10.0 / counts.size)
    assert abs(counts.mean() - 10.0) < 4 * se
    assert abs(counts.var() - 10.0) < 2.0


def test_two_state_transfer():
    net = net_of(((1, 0), (0, 1), 1.0), ((0, 1), (1, 0), 2.0), n=2)
    lam = EmpiricalMeasure([(0, 1), (1, 0)], np.array([0.5, 0.5]))
    pi = invariant_from_jumpchain(lam, net)
    np.testing.assert_allclose(pi.weights, [1 / 3, 2 / 3])
    assert pi.as_dict()[(1, 0)] == pytest.approx(2 / 3)
    assert ctmc_balance_residual(pi, net) < 1e-12


def test_transfer_with_constant_rate_is_identity():
    net = net_of(((1, 0), (0, 1), 3.0), ((0, 1), (1, 0), 3.0), n=2)
    lam = EmpiricalMeasure([(0, 1), (1, 0)], np.array([0.2, 0.8]))
    np.testing.assert_allclose(invariant_from_jumpchain(lam, net).weights, lam.weights)
    with pytest.raises(ValueError, match="A\\(x\\) = 0"):
        invariant_from_jumpchain(EmpiricalMeasure.point_mass((0,)), net_of(((1,), (0,), 1.0)))


@settings(max_examples=60, deadline=None)
@given(x=st.integers(0, 60), birth=st.floats(0.1, 5), death=st.floats(0.1, 5), p=st.floats(2.1, 6))
def test_kernel_expectations_match_F_over_A(x, birth, death, p):
    net = birth_death(birth, death)
    A = total_rate(net, (x,))
    ker = jump_chain_kernel(net, (x,))
    assert sum(w for w, _ in ker) == pytest.approx(1.0)
    mean_jump = sum(w * (y[0] - x) for w, y in ker)
    assert mean_jump == pytest.approx(drift_F(net, (x,))[0] / A, abs=1e-12)
    p_jump = sum(w * abs(y[0] - x) ** p for w, y in ker)
    assert p_jump == pytest.approx(moment_Fp(net, (x,), p) / A)


def test_ctmc_embedded_chain_matches_jump_chain():
    net = birth_death(1.0, 1.0)
    pairs = {}
    for seed in range(60):
        s = simulate_ctmc(net, (2,), 40.0, seed=seed).states
        for a, b in zip(s[:-1], s[1:]):
            if int(a[0]) == 2:
                pairs[int(b[0])] = pairs.get(int(b[0]), 0) + 1
    up = pairs.get(3, 0) / sum(pairs.values())
    assert abs(up - 1 / 3) < 4 * np.sqrt(2 / 9 / sum(pairs.values()))


def test_birth_death_transfer_recovers_poisson():
    net = birth_death(1.0, 1.0)
    model = JumpChainModel(net, (0,))
    lam = truncated_stationary_oracle(model_kernel(model), [(x,) for x in range(41)])
    pi = invariant_from_jumpchain(lam, net)
    from scipy.stats import poisson
    truth = poisson.pmf(np.arange(41), 1.0)
    np.testing.assert_allclose(pi.weights, truth / truth.sum(), atol=1e-10)
    assert ctmc_balance_residual(pi.restrict(lambda s: s[0] < 30), net) < 1e-8


def test_jump_chain_model_interface():
    net = birth_death(1.0, 1.0)
    m = JumpChainModel(net, (0,), H=constant_H([0.5]), rho=3.0)
    assert m.in_C(np.array([0])) and m.in_C(np.array([2])) and not m.in_C(np.array([3]))
    np.testing.assert_array_equal(m.G(0, np.array([4])), [4.0])
    traj = simulate_trajectory(m, 50, seed=1)
    assert all(int(s[0]) >= 0 for s in traj.states)
    assert lattice_box([(0, 1), (0, 1)]) == [(0, 0), (0, 1), (1, 0), (1, 1)]
