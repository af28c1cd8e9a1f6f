import math

import numpy as np
import pytest

from vnfmig.errors import InvalidParameterError, InvalidReferenceError
from vnfmig.scenario import (
    PRESETS,
    THREE_TIER_PRESETS,
    Agent,
    CostWeights,
    Scenario,
    TopologyParams,
    build_vnf_pool,
    gen_grid_random,
    gen_modified_trapezoid,
    gen_three_tier,
    gen_trapezoid,
    inject_failures,
    load_scenario,
    make_scenario,
    sample_node_loads,
    save_scenario,
)

from builders import agent, make_net


def test_trapezoid_two_levels():
    net = gen_trapezoid(2)
    assert len(net.nodes) == 5
    assert len(net.links) == 6


def test_trapezoid_idle_draws():
    assert not gen_trapezoid(3, TopologyParams(p_idle=0.0)).idle_flags.any()
    a = gen_trapezoid(4, TopologyParams(p_idle=0.5), seed=7)
    b = gen_trapezoid(4, TopologyParams(p_idle=0.5), seed=7)
    np.testing.assert_array_equal(a.idle_flags, b.idle_flags)


def test_modified_trapezoid_is_hourglass():
    net = gen_modified_trapezoid(3)
    widths = {}
    for n in net.node_ids:
        widths[n[:2]] = widths.get(n[:2], 0) + 1
    assert [widths[f"L{i}"] for i in range(5)] == [4, 3, 2, 3, 4]


def test_grid_extremes():
    full = gen_grid_random(1, 3, 1.0)
    assert len(full.links) == 6
    assert len(gen_grid_random(2, 2, 0.0).links) == 0


def test_grid_link_count_band():
    net = gen_grid_random(10, 10, 0.5, seed=3)
    mean, sd = 9900 * 0.5, math.sqrt(9900 * 0.25)
    assert abs(len(net.links) - mean) <= 5 * sd


def test_three_tier_sizes():
    for size, pods in THREE_TIER_PRESETS.items():
        net = gen_three_tier(pods)
        assert len(net.nodes) == size
    assert min(THREE_TIER_PRESETS) == 18 and max(THREE_TIER_PRESETS) == 45


def test_three_tier_edges_have_uplinks():
    net = gen_three_tier(5)
    for n in net.node_ids:
        if "e" in n:
            assert net.successors(n) and net.predecessors(n)
    # every node reaches every other
    for n in net.node_ids:
        assert len(net.hop_distances_from(n)) == len(net.nodes)


def test_sample_node_loads():
    net = gen_grid_random(100, 100, 0.0)
    loaded = sample_node_loads(net, 8.0, seed=1)
    assert loaded.compute.min() >= 4.0 and loaded.compute.max() <= 8.0
    assert loaded.compute.mean() == pytest.approx(6.0, rel=0.02)
    np.testing.assert_array_equal(loaded.compute, sample_node_loads(net, 8.0, seed=1).compute)


def test_inject_failures():
    net = gen_three_tier(10, TopologyParams(p_idle=0.0), seed=2)
    pool = build_vnf_pool(net, seed=2)
    assert inject_failures(net, pool, 1.0, seed=0) == tuple(pool)
    ten = pool[:10]
    assert len(ten) == 10
    assert len(inject_failures(net, ten, 0.2, seed=0)) == 2
    assert inject_failures(net, pool, 0.3, seed=5) == inject_failures(net, pool, 0.3, seed=5)
    with pytest.raises(InvalidParameterError):
        inject_failures(net, pool, 0.0)


def test_agent_validation():
    with pytest.raises(InvalidParameterError):
        agent(V=0)
    with pytest.raises(InvalidParameterError):
        agent(R=-1)
    assert agent(V=6, T=3, R=2).priority == 4


def test_scenario_refs_and_weights():
    net = make_net([("s", "d", 5)])
    with pytest.raises(InvalidReferenceError):
        Scenario(net, (agent(src="zz"),))
    with pytest.raises(InvalidParameterError):
        CostWeights(0.7, 0.7)
    with pytest.raises(InvalidParameterError):
        Scenario(net, (agent(), agent()))


def test_folding_scales_state():
    net = make_net([("s", "d", 5)])
    sc = Scenario(net, (agent(V=10.0),))
    assert sc.folded(0.1).agents[0].state_size == pytest.approx(11.0)
    assert sc.folded(0.0) is sc


@pytest.mark.parametrize("preset", PRESETS)
def test_presets_round_trip(preset, tmp_path):
    sc = make_scenario(preset, 1)
    assert sc.agents
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert again.to_dict() == sc.to_dict()
    assert make_scenario(preset, 1).to_dict() == sc.to_dict()


def test_preset_options():
    assert len(make_scenario("trapezoid", 0).agents) == 1
    assert len(make_scenario("three-tier", 0, size=27).network.nodes) == 27
    with pytest.raises(InvalidParameterError):
        make_scenario("trapezoid", 0, bogus=1)
    with pytest.raises(InvalidParameterError):
        make_scenario("nope", 0)
    with pytest.raises(InvalidParameterError):
        make_scenario("three-tier", 0, size=19)


def test_grid_failure_fraction():
    sc = make_scenario("grid", 0, rows=5, cols=5, fraction=0.4)
    pool = sc.vnfs
    assert len(sc.agents) == math.ceil(0.4 * len(pool))
