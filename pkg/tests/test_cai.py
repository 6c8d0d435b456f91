import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from caimhng import cai
from caimhng.cai import DegenerateForward, DegeneratePlan, MessagePotential
from caimhng.dist import LOG_FLOOR
from caimhng.env import Action, Grid, optimality_table, transition, transition_table


def random_potential(rng, T, S, zeros=False):
    rows = rng.dirichlet(np.ones(S), size=T)
    if zeros:
        rows[rng.random((T, S)) < 0.2] = 0
        rows[rows.sum(axis=1) == 0, 0] = 1
        rows /= rows.sum(axis=1, keepdims=True)
    return MessagePotential(T, S, rows)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    mask = b != 0
    # excluded states keep the 1e-300 floor instead of an exact zero
    assert np.all(np.abs(a[~mask]) < 1e-250)
    return np.max(np.abs(a[mask] - b[mask]) / np.abs(b[mask]), initial=0)


def setup(width, height, goal):
    g = Grid(width, height)
    return g, transition_table(g), optimality_table(g, goal)


def test_backward_no_preference():
    g, dyn, _ = setup(4, 2, 0)
    opt = np.where(dyn.valid, 1.0, 0.0)
    log_q, log_v = cai.backward_pass(dyn, opt, MessagePotential.uniform(1, 8), 1)
    assert np.allclose(log_q[0][dyn.valid], 0.0)
    assert np.all(np.isneginf(log_q[0][~dyn.valid]))
    assert np.allclose(log_v[0], 0.0)


def test_backward_matches_enumeration_2x2():
    g, dyn, opt = setup(2, 2, 3)
    pot = random_potential(np.random.default_rng(0), 3, 4)
    log_q, log_v = cai.backward_pass(dyn, opt, pot, 3)
    q_ref, v_ref = oracles.backward(g, opt, pot.rows, 3)
    assert rel_err(np.exp(log_v[:3]), v_ref) < 1e-10
    q = np.where(dyn.valid, np.exp(log_q), 0.0)
    assert rel_err(q, q_ref) < 1e-10


def test_forward_neighbours_of_corner():
    g, dyn, _ = setup(4, 2, 7)
    opt = np.where(dyn.valid, 1.0, 0.0)
    start = np.zeros(8)
    start[0] = 1
    alpha = cai.forward_pass(dyn, opt, MessagePotential.uniform(2, 8), start, 2)
    expected = np.zeros(8)
    expected[[g.index(0, 1), g.index(1, 0)]] = 0.5
    assert np.allclose(alpha[1], expected, atol=1e-15)
    alpha1 = cai.forward_pass(dyn, opt, MessagePotential.uniform(1, 8), start, 1)
    assert np.array_equal(alpha1, [start])


def test_forward_matches_enumeration_2x2():
    g, dyn, opt = setup(2, 2, 1)
    pot = random_potential(np.random.default_rng(1), 3, 4)
    start = np.eye(4)[0]
    alpha = cai.forward_pass(dyn, opt, pot, start, 3)
    assert np.allclose(alpha, oracles.forward(g, opt, pot.rows, 0, 3), rtol=0, atol=1e-12)


def test_marginals_uniform_from_corner_weighted_by_paths():
    g, dyn, _ = setup(2, 2, 0)
    opt = np.where(dyn.valid, 1.0, 0.0)
    tables = cai.plan(dyn, opt, MessagePotential.uniform(2, 4), 0, 2)
    ref = oracles.marginals(g, opt, np.full((2, 4), 1.0), 0, 2)
    assert np.allclose(tables.gamma, ref, atol=1e-12)
    # on a 2x2 ring from a corner both neighbours carry one path each
    assert np.allclose(tables.gamma[1], [0, 0.5, 0.5, 0])


def test_unit_values_give_filter_back():
    alpha = np.random.default_rng(0).dirichlet(np.ones(5), size=3)
    assert np.allclose(cai.state_marginals(np.zeros((4, 5)), alpha), alpha)


@pytest.mark.parametrize("goal", [0, 1, 2, 3])
def test_marginals_match_enumeration_2x2(goal):
    g, dyn, opt = setup(2, 2, goal)
    pot = random_potential(np.random.default_rng(goal), 3, 4)
    tables = cai.plan(dyn, opt, pot, 0, 3)
    assert rel_err(tables.gamma, oracles.marginals(g, opt, pot.rows, 0, 3)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(2, 2), (3, 2), (2, 3), (3, 3), (4, 2), (1, 4)]),
       st.integers(1, 4), st.integers(0, 2**31 - 1), st.booleans())
def test_marginals_match_enumeration_small_grids(shape, T, seed, zeros):
    rng = np.random.default_rng(seed)
    g = Grid(*shape)
    goal = int(rng.integers(g.n_states))
    start = int(rng.integers(g.n_states))
    dyn, opt = transition_table(g), optimality_table(g, goal)
    pot = random_potential(rng, T, g.n_states, zeros)
    ref = oracles.marginals(g, opt, pot.rows, start, T)
    try:
        tables = cai.plan(dyn, opt, pot, start, T)
    except DegeneratePlan:
        assert np.isnan(ref).any()  # the potential cut every trajectory
        return
    assert rel_err(tables.gamma, ref) < 1e-10


def test_delta_potential_is_absorbed():
    g, dyn, opt = setup(4, 2, 2)
    rows = np.full((4, 8), 1 / 8)
    d = g.index(1, 0)
    rows[1] = np.eye(8)[d]
    tables = cai.plan(dyn, opt, MessagePotential(4, 8, rows), 0, 4)
    assert tables.alpha[1, d] > 0 and tables.log_v[1, d] > LOG_FLOOR
    assert np.allclose(tables.gamma[1], np.eye(8)[d])


@pytest.mark.parametrize("seed", range(10))
def test_uniform_potential_equals_message_free(seed):
    rng = np.random.default_rng(seed)
    g = Grid(int(rng.integers(2, 5)), int(rng.integers(2, 4)))
    T = int(rng.integers(1, 8))
    goal, start = (int(x) for x in rng.integers(g.n_states, size=2))
    dyn, opt = transition_table(g), optimality_table(g, goal)
    got = cai.plan(dyn, opt, MessagePotential.uniform(T, g.n_states), start, T)
    ref = cai.plan_free(dyn, opt, start, T)
    assert np.allclose(got.gamma, ref.gamma, rtol=0, atol=1e-12)
    assert np.allclose(got.alpha, ref.alpha, rtol=0, atol=1e-12)
    assert np.allclose(got.log_v, ref.log_v, rtol=1e-12, atol=0)
    assert np.allclose(np.exp(got.log_q), np.exp(ref.log_q), rtol=1e-12, atol=0)
    # an explicit flat potential only rescales the values
    flat = MessagePotential(T, g.n_states, np.full((T, g.n_states), 1 / g.n_states))
    got_flat = cai.plan(dyn, opt, flat, start, T)
    assert np.allclose(got_flat.gamma, ref.gamma, rtol=0, atol=1e-12)
    for t in range(T):
        pol = got_flat.policy(t)[dyn.valid]
        assert np.allclose(pol, ref.policy(t)[dyn.valid], rtol=0, atol=1e-12)


# cells chosen with the right parity to be reachable from (0,0) at step t
@pytest.mark.parametrize("t,cell", [(2, (1, 0)), (3, (1, 1)), (5, (1, 3)), (6, (0, 3))])
def test_delta_potential_moves_argmax(t, cell):
    g, dyn, opt = setup(4, 2, 2)
    d = g.index(*cell)
    rows = np.full((8, 8), 1 / 8)
    rows[t - 1] = np.eye(8)[d]
    tables = cai.plan(dyn, opt, MessagePotential(8, 8, rows), 0, 8)
    assert int(np.argmax(tables.gamma[t - 1])) == d


@pytest.mark.parametrize("T", [1, 10, 25, 50])
def test_log_domain_safety(T):
    g, dyn, opt = setup(4, 2, 3)
    pot = random_potential(np.random.default_rng(T), T, 8)
    tables = cai.plan(dyn, opt, pot, 0, T)
    assert not np.isnan(tables.log_q).any()
    assert np.isfinite(tables.log_q[:, dyn.valid]).all()
    assert np.isfinite(tables.log_v).all()
    assert np.allclose(tables.alpha.sum(axis=1), 1, atol=1e-9)
    assert np.allclose(tables.gamma.sum(axis=1), 1, atol=1e-9)


def test_unrewarded_long_horizon_hits_floor_without_nan():
    g, dyn, opt = setup(4, 2, 3)
    opt = np.where(dyn.valid, 1e-7, 0.0)  # 50 misses: (1e-7)^50 is below the floor
    log_q, log_v = cai.backward_pass(dyn, opt, MessagePotential.uniform(50, 8), 50)
    assert np.isfinite(log_v).all() and log_v.min() >= LOG_FLOOR
    assert np.isfinite(log_q[:, dyn.valid]).all()
    with pytest.raises(DegeneratePlan):
        cai.plan(dyn, opt, MessagePotential.uniform(50, 8), 0, 50)


def test_gamma_proportional_to_v_alpha():
    g, dyn, opt = setup(4, 2, 2)
    pot = random_potential(np.random.default_rng(4), 6, 8)
    tables = cai.plan(dyn, opt, pot, 0, 6)
    prod = np.exp(tables.log_v[:6]) * tables.alpha
    assert np.allclose(tables.gamma, prod / prod.sum(axis=1, keepdims=True))


def test_potential_excluding_reachable_states_is_degenerate():
    g, dyn, opt = setup(4, 2, 2)
    rows = np.full((3, 8), 1 / 8)
    rows[1] = np.eye(8)[0]  # the start cell cannot be occupied at t=2
    with pytest.raises(DegeneratePlan):
        cai.plan(dyn, opt, MessagePotential(3, 8, rows), 0, 3)
    start = np.eye(8)[0]
    with pytest.raises(DegenerateForward):
        cai.forward_pass(dyn, opt, MessagePotential(3, 8, rows), start, 3)


def test_potential_validation():
    with pytest.raises(ValueError):
        MessagePotential(2, 3, np.ones((2, 3)))
    with pytest.raises(ValueError):
        MessagePotential(2, 3, np.full((3, 3), 1 / 3))


def test_decode_follows_delta_q():
    g, dyn, opt = setup(4, 2, 2)
    T = 3
    log_q = np.where(dyn.valid, LOG_FLOOR, -np.inf)[None].repeat(T, axis=0)
    log_q[:, :, Action.RIGHT] = np.where(dyn.valid[:, Action.RIGHT], 0.0, -np.inf)
    for greedy in (True, False):
        states, actions = cai.decode_plan(log_q, dyn, 0, T, np.random.default_rng(0), greedy)
        assert list(actions) == [Action.RIGHT] * 3
        assert list(states) == [0, 1, 2]


def test_greedy_decode_steps_into_adjacent_goal():
    g, dyn, opt = setup(4, 2, 2)
    tables = cai.plan(dyn, opt, MessagePotential.uniform(1, 8), 1, 1)
    states, actions = cai.decode_plan(tables.log_q, dyn, 1, 1, greedy=True)
    assert actions[0] == Action.RIGHT
    assert transition(g, 1, Action(actions[0])) == 2


def test_decode_rejects_all_floor_rows():
    g, dyn, _ = setup(4, 2, 2)
    log_q = np.where(dyn.valid, LOG_FLOOR, -np.inf)[None]
    with pytest.raises(DegeneratePlan):
        cai.decode_plan(log_q, dyn, 0, 1, greedy=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_decoded_paths_are_valid(seed):
    rng = np.random.default_rng(seed)
    g, dyn, opt = setup(4, 2, int(rng.integers(8)))
    T = int(rng.integers(1, 12))
    tables = cai.plan(dyn, opt, random_potential(rng, T, 8), 0, T)
    states, actions = cai.decode_plan(tables.log_q, dyn, 0, T, rng)
    assert states[0] == 0
    for t in range(T - 1):
        assert transition(g, int(states[t]), Action(actions[t])) == states[t + 1]
    assert transition(g, int(states[-1]), Action(actions[-1])) is not None


def test_sample_states_modes():
    g, dyn, opt = setup(2, 2, 3)
    pot = random_potential(np.random.default_rng(2), 3, 4)
    tables = cai.plan(dyn, opt, pot, 0, 3)
    states, _ = cai.decode_plan(tables.log_q, dyn, 0, 3, np.random.default_rng(0))
    assert np.array_equal(cai.sample_states(tables, states, "path"), states)
    ref = oracles.marginals(g, opt, pot.rows, 0, 3)
    rng = np.random.default_rng(1)
    for _ in range(50):
        drawn = cai.sample_states(tables, states, "marginal", rng)
        assert all(ref[t, s] > 0 for t, s in enumerate(drawn))
    delta = cai.PlanTables(tables.log_q, tables.log_v, tables.alpha, np.eye(4)[[0, 1, 3]])
    assert list(cai.sample_states(delta, states, "marginal", rng)) == [0, 1, 3]
    with pytest.raises(ValueError):
        cai.sample_states(tables, states, "bogus")
