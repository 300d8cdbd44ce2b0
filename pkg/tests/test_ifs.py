import numpy as np
import pytest

from driftlab.ifs import (AffineMap, CallableMap, IfsModel, IfsModelError, LogisticProbs, RadialShift,
                          RationalProbs, TableMap, TableProbs, check_prop_ifs, ifs_drift_lhs, ifs_from_json,
                          ifs_step, radial_ifs, set_from_json)
from driftlab.model import Ball, Box, estimate_conditional_drift
from driftlab.rng import stream
from driftlab.stability import check_jump_bound


def shift(v):
    v = np.asarray(v, dtype=float)
    return AffineMap(np.eye(v.size), v)


def one_d(p_down=0.7, a=0.4, L=None):
    return IfsModel([shift([-1]), shift([1])], TableProbs([[p_down, 1 - p_down]] * 2), C=Box((0,), (1,)),
                    a=a, x0=[0.0], L_jump=L)


def test_single_identity_mode_is_fixed():
    m = IfsModel([CallableMap(lambda x: x)], TableProbs([[1.0]]), C=Box((0, 0), (1, 1)), a=1, x0=[0.5, 0.5])
    z = m.x0
    rng = stream(1, "t")
    for _ in range(5):
        z = ifs_step(m, z, rng)
    np.testing.assert_array_equal(z, [0.5, 0.5, 0])


def test_deterministic_mode_choice():
    m = IfsModel([shift([0.0]), shift([1.0])], TableProbs([[0, 1], [0, 1]]), C=Box((0,), (1,)), a=1, x0=[0])
    z = ifs_step(m, m.x0, stream(0, "t"))
    assert m.split(z) == (np.array([1.0]), 1)


def test_mode_frequency_binomial():
    m = IfsModel([shift([0.0]), shift([0.0])], TableProbs([[0.8, 0.2]] * 2), C=Box((0,), (1,)), a=1, x0=[0])
    Z = np.repeat(m.x0[None], 100_000, axis=0)
    Y = m.step_batch(0, Z, stream(3, "t").random((100_000, 1)))[:, -1]
    freq = np.mean(Y == 0)
    assert abs(freq - 0.8) < 3 * np.sqrt(0.8 * 0.2 / 1e5)


def test_probabilities_must_sum_to_one():
    m = IfsModel([shift([0.0]), shift([1.0])], TableProbs([[0.5, 0.4]] * 2), C=Box((0,), (1,)), a=1, x0=[0])
    with pytest.raises(IfsModelError):
        ifs_step(m, m.x0, stream(0, "t"))


def test_maps_must_stay_in_orthant():
    m = IfsModel([shift([-5.0])], TableProbs([[1.0]]), C=Box((0,), (1,)), a=1, x0=[0])
    with pytest.raises(IfsModelError):
        ifs_step(m, m.x0, stream(0, "t"))


def test_drift_lhs_examples():
    m = IfsModel([shift([-1, 0]), shift([1, 0])], TableProbs([[0.8, 0.2]] * 2), C=Box((0, 0), (1, 1)), a=1,
                 x0=[0, 0])
    np.testing.assert_allclose(ifs_drift_lhs(m, np.array([5.0, 5.0]), 0), [-0.6, 0], atol=1e-15)
    ident = IfsModel([shift([0, 0])] * 2, TableProbs([[0.5, 0.5]] * 2), C=Box((0, 0), (1, 1)), a=1, x0=[0, 0])
    np.testing.assert_array_equal(ifs_drift_lhs(ident, np.array([3.0, 2.0]), 1), [0, 0])


def test_drift_lhs_matches_exact_conditional_drift():
    vs = [[1.0, 0.0], [0.0, 2.0], [-1.0, -1.0]]
    ps = [0.2, 0.3, 0.5]
    m = IfsModel([shift(v) for v in vs], TableProbs([ps] * 3), C=Box((0, 0), (1, 1)), a=1, x0=[0, 0])
    x = np.array([5.0, 7.0])
    expected = np.array(ps) @ np.array(vs)
    np.testing.assert_allclose(ifs_drift_lhs(m, x, 2), expected, atol=1e-14)
    mean, se = estimate_conditional_drift(m, m.pack(x, 2), 0, 10, seed=0)
    np.testing.assert_allclose(mean, expected, atol=1e-14)
    assert np.all(se == 0)


def test_prop_check_one_d_passes_exactly():
    rep = check_prop_ifs(one_d(L=1.0), [(np.array([x]), y) for x in (1.5, 2.0, 10.0, 1e3) for y in (0, 1)])
    assert rep.ok and rep.moment_bound_applies
    assert abs(rep.margin) < 1e-12
    assert rep.admissible_r == "every r > 0"


def test_prop_check_identity_modes_fail():
    m = IfsModel([shift([0.0])] * 2, TableProbs([[0.5, 0.5]] * 2), C=Box((0,), (1,)), a=0.1, x0=[0])
    rep = check_prop_ifs(m, [(np.array([x]), 0) for x in (2.0, 5.0)])
    assert not rep.drift_ok and len(rep.drift_witnesses) == 2


def test_prop_check_jump_witness():
    m = IfsModel([shift([-2.0]), shift([2.0])], TableProbs([[0.7, 0.3]] * 2), C=Box((0,), (2,)), a=0.8,
                 x0=[0], L_jump=1.0)
    rep = check_prop_ifs(m, [(np.array([4.0]), 0)])
    assert rep.drift_ok and rep.jump_ok is False and not rep.moment_bound_applies
    assert rep.jump_witnesses[0]["jump"] == 2.0


def test_prop_check_rejects_bad_samples():
    m = one_d()
    with pytest.raises(ValueError):
        check_prop_ifs(m, [(np.array([0.5]), 0)])
    with pytest.raises(ValueError):
        check_prop_ifs(IfsModel(m.maps, m.probs, C=Box((5,), (6,)), a=0.4, x0=[5]), [(np.array([0.0]), 0)])
    with pytest.raises(IfsModelError):
        check_prop_ifs(IfsModel(m.maps, m.probs, C=m.C, a=0.0, x0=[0]), [(np.array([3.0]), 0)])


def test_radial_fixture():
    m = radial_ifs()
    rng = np.random.default_rng(0)
    pts = [x for x in rng.uniform(0, 40, (300, 2)) if not m.C.contains(x)]
    rep = check_prop_ifs(m, [(x, y) for x in pts for y in (0, 1)])
    assert rep.ok and abs(rep.margin) < 1e-12
    assert rep.max_jump == pytest.approx(1.0, abs=1e-12)
    j = check_jump_bound(m, [m.pack(x, 0) for x in pts[:20]], p=5)
    assert j.L_hat <= 1 + 1e-10


def test_radial_shift_at_origin_and_floor():
    f = RadialShift(1.0)
    np.testing.assert_allclose(f(np.zeros((1, 2))), [[2 ** -0.5, 2 ** -0.5]])
    np.testing.assert_array_equal(RadialShift(-1.0)(np.array([[0.3, 0.4]])), [[0, 0]])


def test_place_dependent_probabilities():
    W = np.zeros((2, 2, 1))
    W[:, 1, 0] = -1.0
    lp = LogisticProbs(W, np.zeros((2, 2)))
    P = lp(np.array([[0.0], [5.0]]), np.array([0, 1]))
    np.testing.assert_allclose(P.sum(axis=1), 1)
    assert P[0, 0] == pytest.approx(0.5) and P[1, 1] < 0.01
    rp = RationalProbs([[1, 1], [1, 1]], [[[0], [1]], [[0], [1]]])
    np.testing.assert_allclose(rp(np.array([[2.0]]), np.array([0])), [[1 / 4, 3 / 4]])
    with pytest.raises(IfsModelError):
        LogisticProbs(np.zeros((2, 2)), np.zeros((2, 2)))


def test_table_map_and_serialisation():
    t = TableMap({(1.0,): [2.0], (2.0,): [1.0]})
    np.testing.assert_array_equal(t(np.array([[1.0], [2.0]])), [[2.0], [1.0]])
    with pytest.raises(IfsModelError):
        t(np.array([[3.0]]))
    m = one_d()
    assert m.serialize_state(m.pack([2.0], 1)) == {"x": [2.0], "y": 1}


def test_json_construction():
    spec = {"maps": [{"affine": {"A": [[1]], "b": [-1]}}, {"radial": 1}], "probs": {"table": [[0.7, 0.3]] * 2},
            "C": {"box": [[0, 1]]}, "a": 0.4, "x0": [0.0], "L_jump": 1}
    m = ifs_from_json(spec)
    assert m.modes == 2 and m.L_jump == 1
    assert isinstance(ifs_from_json({"preset": "radial"}), IfsModel)
    assert set_from_json({"ball": 2, "open": True}) == Ball(2, True)
    with pytest.raises(ValueError):
        set_from_json({"cube": 1})
    with pytest.raises(IfsModelError):
        ifs_from_json({"preset": "spiral"})
