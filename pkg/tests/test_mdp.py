"""Utility, SARSA, greedy band allocation, and the enumerable-MDP oracle."""

import itertools
import math

import numpy as np
import pytest

from aoiv2v.config import ExperimentConfig
from aoiv2v.mdp import (
    Decision,
    Observation,
    QTable,
    TabularMdp,
    VuePairState,
    discounted_return,
    greedy_joint_decision,
    policy_evaluation,
    quantize_state,
    sarsa_update,
    table_grant_values,
    utility,
    value_iteration,
)

CFG = ExperimentConfig()

# frozen by hand evaluation: 1 + 2 + 0.9*e^-1
U_REST = 3.331091497054298
# frozen: chains the 5-packet transmit-power value 4.157880353863721e-4
P_FIVE = 0.0004157880353863721
U_AFTER_TX = 3.330675795446778
# frozen: 1 + 2 + 0.9*exp(-0.003), age measured in seconds
U_REST_SECONDS = 3.8973040459530357


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# -- utility -------------------------------------------------------------------


def test_utility_hand_values():
    assert rel_err(utility(0.0, 0, 1, CFG), U_REST) < 1e-12
    assert rel_err(utility(P_FIVE, 0, 1, CFG), U_AFTER_TX) < 1e-12


def test_utility_seconds_units():
    cfg = CFG.replace(aoi_utility_units="seconds")
    assert rel_err(utility(0.0, 0, 1, cfg), U_REST_SECONDS) < 1e-12


def test_utility_decay_limit():
    assert utility(0.0, 800, 900, CFG) == pytest.approx(1.0, abs=1e-12)


def test_utility_bounds():
    rng = np.random.default_rng(31)
    for _ in range(2000):
        u = utility(
            float(rng.uniform(0.0, CFG.p_max_w)),
            int(rng.integers(0, CFG.x_max + 1)),
            int(rng.integers(1, CFG.a_max_slots + 1)),
            CFG,
        )
        assert 0.0 < u <= U_REST + 1e-12


def test_utility_rejects_bad_args():
    for bad in [(-1.0, 0, 1), (0.0, -1, 1), (0.0, 0, 0)]:
        with pytest.raises(ValueError):
            utility(*bad, CFG)


# -- discounted return ----------------------------------------------------------


def test_return_single_term():
    assert discounted_return([10.0], 0.9) == pytest.approx(1.0, rel=1e-15)


def test_return_constant_stream():
    # geometric identity: (1-g)*sum g^j * c -> c, truncation below g^J*c
    vals = [2.5] * 500
    assert discounted_return(vals, 0.9) == pytest.approx(2.5, rel=1e-12)


def test_return_myopic_gamma_zero():
    assert discounted_return([7.0, 100.0, -3.0], 0.0) == 7.0


def test_return_rejects_bad_input():
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.0)
    with pytest.raises(ValueError):
        discounted_return([], 0.9)


# -- SARSA -----------------------------------------------------------------------


def test_sarsa_zero_data_fixed_point():
    t = QTable()
    sarsa_update(t, "s", "a", 0.0, "s2", "a2", gamma=0.9, alpha=0.5)
    assert t.get("s", "a") == 0.0


def test_sarsa_hand_value():
    # (1-0.5)*0 + 0.5*((1-0.9)*1 + 0.9*0) = 0.05
    t = QTable()
    new = sarsa_update(t, "s", "a", 1.0, "s2", "a2", gamma=0.9, alpha=0.5)
    assert new == pytest.approx(0.05, rel=1e-15)
    assert t.get("s", "a") == new


def test_sarsa_zero_alpha_no_op():
    t = QTable()
    t.set("s", "a", 0.7)
    sarsa_update(t, "s", "a", 123.0, "s2", "a2", gamma=0.9, alpha=0.0)
    assert t.get("s", "a") == 0.7


def test_sarsa_full_overwrite_myopic():
    t = QTable()
    t.set("s", "a", 42.0)
    sarsa_update(t, "s", "a", 3.25, "s2", "a2", gamma=0.0, alpha=1.0)
    assert t.get("s", "a") == 3.25


def test_sarsa_visit_schedule():
    # alpha=None follows 1/(1+visits): first update is a full overwrite
    t = QTable()
    sarsa_update(t, "s", "a", 1.0, "s2", "a2", gamma=0.0)
    assert t.get("s", "a") == 1.0
    sarsa_update(t, "s", "a", 0.0, "s2", "a2", gamma=0.0)
    assert t.get("s", "a") == pytest.approx(0.5, rel=1e-15)
    sarsa_update(t, "s", "a", 0.0, "s2", "a2", gamma=0.0)
    assert t.get("s", "a") == pytest.approx(1.0 / 3.0, rel=1e-14)


def test_sum_of_per_link_tables_matches_joint_table():
    # one shared trajectory, fixed per-state action, shared alpha schedule:
    # the per-pair tables must sum to the joint table after every update
    rng = np.random.default_rng(77)
    k_n = 3
    n_states = 6
    fixed_action = {s: tuple((int(rng.integers(2)), int(rng.integers(1, 4))) for _ in range(k_n)) for s in range(n_states)}
    joint = QTable()
    per = [QTable() for _ in range(k_n)]
    s = 0
    a = fixed_action[s]
    for step in range(2000):
        s2 = int(rng.integers(n_states))
        a2 = fixed_action[s2]
        u_k = rng.uniform(0.0, 3.0, size=k_n)
        seen = joint.visits.get((s, a), 0)
        alpha = 1.0 / (1.0 + seen)
        joint.visits[(s, a)] = seen + 1
        sarsa_update(joint, s, a, float(u_k.sum()), s2, a2, gamma=0.9, alpha=alpha)
        for k in range(k_n):
            sarsa_update(per[k], s, a[k], float(u_k[k]), s2, a2[k], gamma=0.9, alpha=alpha)
        total = sum(per[k].get(s, a[k]) for k in range(k_n))
        assert abs(total - joint.get(s, a)) < 1e-9
        s, a = s2, a2
    # and the identity holds across every visited joint entry, not just the last
    for (s, a), q in joint.q.items():
        total = sum(per[k].get(s, a[k]) for k in range(k_n))
        assert abs(total - q) < 1e-9


# -- state keys and observations -------------------------------------------------


def test_observation_consistency():
    Observation(1, 3)
    Observation(0, 0)
    with pytest.raises(ValueError):
        Observation(0, 3)


def test_quantize_state_bins():
    st = VuePairState((3.0, 7.0), (12.0, 4.9), 1e-10, 2, 5)
    key = quantize_state(st, Observation(1, 2), bin_m=5.0)
    assert key == ((0, 1), (2, 0), 2, 5, 1, 2)
    # nearby positions inside the same 5 m cell share the key
    st_near = VuePairState((4.9, 5.0), (10.0, 0.0), 2e-10, 2, 5)
    assert quantize_state(st_near, Observation(1, 2)) == key
    # crossing a bin edge changes it
    st_far = VuePairState((5.1, 7.0), (12.0, 4.9), 1e-10, 2, 5)
    assert quantize_state(st_far, Observation(1, 2)) != key


# -- greedy joint decision --------------------------------------------------------


def two_pair_tables():
    t1, t2 = QTable(), QTable()
    t1.set("k1", (0, 0), 1.0)
    t1.set("k1", (1, 1), 0.3)
    t1.set("k1", (1, 2), 2.0)
    t2.set("k2", (0, 0), 1.2)
    t2.set("k2", (1, 1), 1.5)
    return [t1, t2], ["k1", "k2"]


def brute_force_best(tables, keys, caps, groups, num_bands):
    """Max sum of per-pair values over every feasible allocation."""
    per_pair_options = []
    for k, (t, key) in enumerate(zip(tables, keys)):
        opts = [((0, 0), t.get(key, (0, 0)))]
        opts += [((1, r), t.get(key, (1, r))) for r in range(1, caps[k] + 1)]
        per_pair_options.append(opts)
    best = -math.inf
    for combo in itertools.product(*per_pair_options):
        ok = True
        for g in np.unique(groups):
            grants = sum(combo[k][0][0] for k in np.flatnonzero(groups == g))
            if grants > num_bands:
                ok = False
        if ok:
            best = max(best, sum(val for _, val in combo))
    return best


def decision_value(tables, keys, dec):
    return sum(
        t.get(key, (int(dec.band_flag[k]), int(dec.scheduled[k])))
        for k, (t, key) in enumerate(zip(tables, keys))
    )


def test_allocation_example_totals():
    tables, keys = two_pair_tables()
    groups = np.zeros(2, dtype=int)
    dec = greedy_joint_decision(tables, keys, [2, 1], groups, num_bands=1)
    assert list(dec.band_flag) == [1, 0]
    assert list(dec.scheduled) == [2, 0]
    assert list(dec.band_index) == [0, -1]
    total = decision_value(tables, keys, dec)
    assert total == pytest.approx(3.2, rel=1e-15)
    assert total == pytest.approx(brute_force_best(tables, keys, [2, 1], groups, 1))


def test_allocation_all_gains_negative():
    t1, t2 = QTable(), QTable()
    t1.set("k1", (0, 0), 1.0)
    t1.set("k1", (1, 1), 0.5)
    t2.set("k2", (0, 0), 0.4)
    t2.set("k2", (1, 1), 0.1)
    dec = greedy_joint_decision([t1, t2], ["k1", "k2"], [1, 1], np.zeros(2, dtype=int), 1)
    assert list(dec.band_flag) == [0, 0]
    assert list(dec.scheduled) == [0, 0]
    assert list(dec.band_index) == [-1, -1]


def test_allocation_no_contention():
    tables, keys = [], []
    for k in range(3):
        t = QTable()
        t.set(k, (0, 0), 0.0)
        t.set(k, (1, 1), 1.0 + k)
        tables.append(t)
        keys.append(k)
    dec = greedy_joint_decision(tables, keys, [1, 1, 1], np.zeros(3, dtype=int), 5)
    assert list(dec.band_flag) == [1, 1, 1]
    assert list(dec.band_index) == [0, 1, 2]  # ascending ids within the group


def test_allocation_zero_cap_ineligible():
    tables, keys = two_pair_tables()
    dec = greedy_joint_decision(tables, keys, [0, 1], np.zeros(2, dtype=int), 1)
    assert list(dec.band_flag) == [0, 1]
    assert list(dec.scheduled) == [0, 1]


def test_allocation_tie_prefers_lower_index():
    tables, keys = [], []
    for k in range(2):
        t = QTable()
        t.set(k, (0, 0), 0.0)
        t.set(k, (1, 1), 1.0)
        tables.append(t)
        keys.append(k)
    dec = greedy_joint_decision(tables, keys, [1, 1], np.zeros(2, dtype=int), 1)
    assert list(dec.band_flag) == [1, 0]


def test_grant_values_tie_prefers_larger_r():
    t = QTable()
    t.set("k", (0, 0), 0.1)
    t.set("k", (1, 1), 0.5)
    t.set("k", (1, 2), 0.5)
    q0, q1, r = table_grant_values(t, "k", 2)
    assert (q0, q1, r) == (0.1, 0.5, 2)


def test_allocation_argmax_invariant_to_constant_shift():
    tables, keys = two_pair_tables()
    groups = np.zeros(2, dtype=int)
    base = greedy_joint_decision(tables, keys, [2, 1], groups, 1)
    for key_pair in list(tables[0].q):
        tables[0].q[key_pair] += 17.5  # shift every value of pair 0
    shifted = greedy_joint_decision(tables, keys, [2, 1], groups, 1)
    assert np.array_equal(base.band_flag, shifted.band_flag)
    assert np.array_equal(base.scheduled, shifted.scheduled)
    assert np.array_equal(base.band_index, shifted.band_index)


def test_allocation_matches_brute_force_random():
    rng = np.random.default_rng(101)
    for trial in range(40):
        k_n = 5
        groups = rng.integers(0, 2, size=k_n)
        caps = [int(c) for c in rng.integers(0, 4, size=k_n)]
        num_bands = int(rng.integers(1, 3))
        tables, keys = [], []
        for k in range(k_n):
            t = QTable()
            t.set(k, (0, 0), float(rng.normal()))
            for r in range(1, caps[k] + 1):
                t.set(k, (1, r), float(rng.normal()))
            tables.append(t)
            keys.append(k)
        dec = greedy_joint_decision(tables, keys, caps, groups, num_bands)
        got = decision_value(tables, keys, dec)
        want = brute_force_best(tables, keys, caps, groups, num_bands)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


# -- enumerable MDP oracle ---------------------------------------------------------


def single_state_mdp(c=2.5, gamma=0.9):
    return TabularMdp(
        states=["s"],
        actions={"s": ["only"]},
        transitions={("s", "only"): [("s", 1.0)]},
        utilities={("s", "only"): c},
        gamma=gamma,
    )


def two_state_mdp(gamma=0.5):
    # closed form: V(good)=1, V(bad)=0.5 via repair; wait at bad is worth 0.4
    return TabularMdp(
        states=["good", "bad"],
        actions={"good": ["cruise", "risk"], "bad": ["repair", "wait"]},
        transitions={
            ("good", "cruise"): [("good", 1.0)],
            ("good", "risk"): [("bad", 1.0)],
            ("bad", "repair"): [("good", 1.0)],
            ("bad", "wait"): [("bad", 1.0)],
        },
        utilities={
            ("good", "cruise"): 1.0,
            ("good", "risk"): 0.8,
            ("bad", "repair"): 0.0,
            ("bad", "wait"): 0.4,
        },
        gamma=gamma,
    )


def test_value_iteration_single_state():
    v, policy = value_iteration(single_state_mdp(), tol=1e-12)
    assert v["s"] == pytest.approx(2.5, rel=1e-9)
    assert policy["s"] == "only"


def test_value_iteration_two_state_closed_form():
    v, policy = value_iteration(two_state_mdp(), tol=1e-12)
    assert v["good"] == pytest.approx(1.0, abs=1e-9)
    assert v["bad"] == pytest.approx(0.5, abs=1e-9)
    assert policy == {"good": "cruise", "bad": "repair"}


def test_value_iteration_myopic():
    mdp = two_state_mdp(gamma=0.0)
    v, policy = value_iteration(mdp)
    assert v["good"] == 1.0
    assert v["bad"] == 0.4
    assert policy == {"good": "cruise", "bad": "wait"}


def test_value_iteration_tie_breaks_lexicographically():
    mdp = TabularMdp(
        states=["s"],
        actions={"s": ["zeta", "alpha"]},
        transitions={("s", "zeta"): [("s", 1.0)], ("s", "alpha"): [("s", 1.0)]},
        utilities={("s", "zeta"): 1.0, ("s", "alpha"): 1.0},
        gamma=0.5,
    )
    _, policy = value_iteration(mdp)
    assert policy["s"] == "alpha"


def test_policy_evaluation_fixed_policy():
    mdp = two_state_mdp()
    v = policy_evaluation(mdp, {"good": "cruise", "bad": "wait"}, tol=1e-12)
    assert v["good"] == pytest.approx(1.0, abs=1e-9)
    assert v["bad"] == pytest.approx(0.4, abs=1e-9)


def test_mdp_validation_errors():
    bad_row = single_state_mdp()
    bad_row.transitions[("s", "only")] = [("s", 0.9)]
    with pytest.raises(ValueError, match="sums"):
        bad_row.validate()
    bad_state = single_state_mdp()
    bad_state.transitions[("s", "only")] = [("ghost", 1.0)]
    with pytest.raises(ValueError, match="unknown state"):
        bad_state.validate()
    bad_gamma = single_state_mdp(gamma=1.0)
    with pytest.raises(ValueError, match="gamma"):
        bad_gamma.validate()
    bad_util = single_state_mdp()
    del bad_util.utilities[("s", "only")]
    with pytest.raises(ValueError, match="utility"):
        bad_util.validate()
