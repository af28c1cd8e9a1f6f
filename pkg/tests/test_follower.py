import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vnfmig.cost import forwarding_cost, migration_time
from vnfmig.errors import InfeasibleAllocationError, UnreachableDestinationError, ZeroCapacityError
from vnfmig.feasibility import check_alpha_conservation, validate_plan
from vnfmig.follower import (
    AllocationProblem,
    FollowerOptions,
    adjust_residuals,
    equal_split_follower,
    estimate_alpha,
    follower_cost,
    run_follower,
    solve_follower_follower,
    solve_follower_leader,
    two_phase_follower,
)
from vnfmig.network import Link, Network
from vnfmig.oracles import brute_force_follower, convex_follower
from vnfmig.plan import MigrationPlan

from builders import agent, follower_instance, make_net, trivial_paths
from reference import equal_discharge


def test_adjust_residuals():
    net = make_net([("a", "b", 4, 10), ("b", "c", 0.5, 10), ("c", "a", 1, 10)])
    np.testing.assert_allclose(adjust_residuals(net), [3, 0, 0])


def test_estimate_alpha_disjoint():
    net = make_net([("s", "a", 3), ("a", "d", 3), ("s", "b", 1), ("b", "d", 1)])
    row = estimate_alpha(agent(), "d", net, residual=net.idle_rates)
    for (u, v), x in {("s", "a"): 0.75, ("a", "d"): 0.75, ("s", "b"): 0.25, ("b", "d"): 0.25}.items():
        assert row[net.link_between(u, v)] == pytest.approx(x)


def test_estimate_alpha_single_and_shared():
    chain = make_net([("s", "a", 3), ("a", "d", 2)])
    np.testing.assert_allclose(estimate_alpha(agent(), "d", chain, residual=chain.idle_rates), [1, 1])
    shared = make_net([("s", "m", 9), ("m", "a", 2), ("m", "b", 2), ("a", "d", 2), ("b", "d", 2)])
    row = estimate_alpha(agent(), "d", shared, residual=shared.idle_rates)
    assert row[shared.link_between("s", "m")] == pytest.approx(1.0)
    plan_alpha = row[None, :]
    plan = MigrationPlan(("f",), {"f": "d"}, plan_alpha, plan_alpha)
    assert check_alpha_conservation(agent(), plan, shared).passed


def test_estimate_alpha_errors():
    net = make_net([("s", "a", 3)], compute={"d": 1})
    with pytest.raises(UnreachableDestinationError):
        estimate_alpha(agent(), "d", net)
    with pytest.raises(ZeroCapacityError):
        estimate_alpha(agent(), "a", make_net([("s", "a", 0.5, 10)]))


def test_single_link_allocation():
    # B = 10, B^v = 5 gives B'_v = 4
    net = make_net([("s", "d", 5, 10)])
    prob = AllocationProblem.build(net, [agent(V=8)], {"f": "d"})
    res = solve_follower_leader(prob)
    assert res.beta_tilde[0, 0] == pytest.approx(1.0)
    assert res.zeta[0] == pytest.approx(0.5)
    out = two_phase_follower(prob)
    assert out.tau["f"] == pytest.approx(2.0)


def test_identical_agents_split_evenly():
    net = make_net([("s", "d", 5, 10)])
    prob = AllocationProblem.build(net, [agent("a1"), agent("a2")], {"a1": "d", "a2": "d"})
    res = solve_follower_leader(prob)
    np.testing.assert_allclose(res.beta_tilde[:, 0], [0.5, 0.5], atol=1e-9)


def _grid_objective(step=0.05):
    # objective zeta1 / w1 + zeta2 / w2 with zeta_i = 4 beta_i / 8, w = (1, 2)
    best, arg = -1.0, None
    for b1 in np.arange(0, 1 + 1e-9, step):
        b2 = 1 - b1
        val = (4 * b1 / 8) / 1 + (4 * b2 / 8) / 2
        if val > best + 1e-12:
            best, arg = val, (b1, b2)
    return arg


def test_weight_ordering():
    net = make_net([("s", "d", 5, 10)])
    # generous deadlines keep the per-agent floor negligible
    cheap = agent("a1", R=1, T=1e6)
    dear = agent("a2", R=2, T=1e6)
    prob = AllocationProblem.build(net, [cheap, dear], {"a1": "d", "a2": "d"})
    res = solve_follower_leader(prob)
    expect = _grid_objective()
    np.testing.assert_allclose(res.beta_tilde[:, 0], expect, atol=1e-4)


def test_strict_tat():
    net = make_net([("s", "d", 5, 10)])
    tight = agent(V=8, T=1.0)
    prob = AllocationProblem.build(net, [tight], {"f": "d"})
    with pytest.raises(InfeasibleAllocationError):
        solve_follower_leader(prob, FollowerOptions(strict_tat=True))
    # relaxed mode still returns the best allocation
    assert solve_follower_leader(prob).floor == pytest.approx(0.5)


def test_follower_follower_parallel():
    net = make_net([("s", "d", 10), ("s", "m", 10), ("m", "d", 10)])
    rates = np.zeros(3)
    rates[net.link_between("s", "d")] = 4
    rates[net.link_between("s", "m")] = 1
    rates[net.link_between("m", "d")] = 1e6
    alpha, tau = solve_follower_follower(agent(V=10), "d", rates, net)
    exp_alpha, exp_tau = equal_discharge(10, [4, 1])
    assert alpha[net.link_between("s", "d")] == pytest.approx(exp_alpha[0])
    assert alpha[net.link_between("s", "m")] == pytest.approx(exp_alpha[1])
    assert tau == pytest.approx(exp_tau)
    _, tau2 = solve_follower_follower(agent(V=10), "d", rates * 2, net)
    assert tau2 == pytest.approx(tau / 2)


def test_follower_follower_single_path():
    net = make_net([("s", "a", 10), ("a", "d", 10)])
    alpha, tau = solve_follower_follower(agent(V=6), "d", np.array([3.0, 2.0]), net)
    np.testing.assert_allclose(alpha, [1, 1])
    assert tau == pytest.approx(3.0)


def test_follower_follower_no_bandwidth():
    net = make_net([("s", "a", 10), ("a", "d", 10)])
    with pytest.raises(InfeasibleAllocationError):
        solve_follower_follower(agent(), "d", np.zeros(2), net)
    with pytest.raises(InfeasibleAllocationError):
        solve_follower_follower(agent(), "d", np.array([1.0, 0.0]), net)


def test_follower_cost():
    net = make_net([("s", "d", 5, 10)])
    f = agent(V=8, cu=1, R=1)
    prob = AllocationProblem.build(net, [f], {"f": "d"})
    out = two_phase_follower(prob, chain_paths=trivial_paths(net, [f], {"f": "d"}))
    weighted, total_tau = follower_cost([f], out.plan, net)
    assert weighted == pytest.approx(2.0)
    assert total_tau == pytest.approx(2.0)
    assert weighted == pytest.approx(forwarding_cost([f], out.plan, net))


def test_run_follower_dispatch():
    net = make_net([("s", "d", 5, 10)])
    prob = AllocationProblem.build(net, [agent()], {"f": "d"})
    assert run_follower(prob, "equal-split").algorithm == "equal-split"
    with pytest.raises(ValueError):
        run_follower(prob, "nope")


def test_equal_split_shares_links():
    net = make_net([("s", "d", 5, 10)])
    prob = AllocationProblem.build(net, [agent("a1"), agent("a2")], {"a1": "d", "a2": "d"})
    out = equal_split_follower(prob)
    np.testing.assert_allclose(out.plan.beta[:, 0], [0.4, 0.4])


def test_grid_oracle_single_link_matches():
    net = make_net([("s", "d", 5, 10)])
    f = agent(V=8)
    prob = AllocationProblem.build(net, [f], {"f": "d"})
    out = two_phase_follower(prob)
    grid = brute_force_follower([f], {"f": "d"}, net, 0.05)
    assert grid.cost == pytest.approx(follower_cost([f], out.plan, net)[0])


def test_two_agents_two_links_near_oracle():
    net = make_net([("s", "d", 6, 10), ("t", "d", 6, 10)])
    a1 = agent("a1", V=4, T=1e3)
    a2 = agent("a2", src="t", V=9, T=1e3, R=0.5)
    dest = {"a1": "d", "a2": "d"}
    out = two_phase_follower(AllocationProblem.build(net, [a1, a2], dest))
    heur = follower_cost([a1, a2], out.plan, net)[0]
    grid = brute_force_follower([a1, a2], dest, net, 0.05)
    assert grid.cost <= heur + 1e-9
    assert heur <= 1.10 * grid.cost


def _solved(seed, options=FollowerOptions()):
    net, agents, dest = follower_instance(seed)
    prob = AllocationProblem.build(net, agents, dest)
    return net, agents, dest, prob, two_phase_follower(prob, options, trivial_paths(net, agents, dest))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_plans_conserve_and_respect_shares(seed):
    net, agents, dest, prob, out = _solved(seed)
    rep = validate_plan(agents, out.plan, net)
    assert rep.sections["alpha_conservation"].passed
    assert rep.sections["beta_conservation"].passed
    assert rep.sections["link_share"].passed
    # the reserved tenth of every link stays free
    used = (out.plan.beta * net.idle_rates).sum(axis=0)
    assert np.all(used <= adjust_residuals(net) + 1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_tau_and_zeta_agree_with_cost_model(seed):
    net, agents, dest, prob, out = _solved(seed)
    for a in agents:
        assert out.tau[a.id] == pytest.approx(migration_time(a, out.plan, net), rel=1e-6)
        assert out.zeta[a.id] * out.tau[a.id] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(0, 5), st.floats(0.0, 1.0))
def test_objective_monotone_in_capacity(seed, which, bump):
    net, agents, dest = follower_instance(seed)
    agents = [a.__class__(**{**a.__dict__, "tat": 1e6}) for a in agents]
    e = which % len(net.links)
    base = solve_follower_leader(AllocationProblem.build(net, agents, dest)).objective
    links = list(net.links)
    l = links[e]
    links[e] = Link(l.src, l.dst, l.nominal_rate, min(l.nominal_rate, l.idle_rate + bump))
    bigger = Network(net.nodes, links)
    # keep the estimated split fixed so only the capacity changes
    prob = AllocationProblem.build(net, agents, dest)
    prob2 = AllocationProblem(bigger, prob.agents, prob.destinations, adjust_residuals(bigger), prob.alpha_tilde)
    after = solve_follower_leader(prob2).objective
    assert after >= base * (1 - 1e-7) - 1e-9


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_grid_oracle_bounds_heuristic(seed):
    net, agents, dest, prob, out = _solved(seed)
    heur = follower_cost(agents, out.plan, net)[0]
    grid = brute_force_follower(agents, dest, net, 0.1)
    cvx, _ = convex_follower(agents, dest, net)
    assert cvx <= grid.cost * (1 + 1e-6)
    assert cvx <= heur * (1 + 1e-6)
