import pytest

from aevsim.network import (
    Edge,
    Node,
    RoadNetwork,
    SignalPlan,
    TrafficState,
    apply_update,
)


def build_trinet(lanes: int = 2) -> RoadNetwork:
    """Three nodes, two-hop fast path and one-hop slow path, no signals."""
    nodes = [Node("A"), Node("B"), Node("C")]
    edges = [
        Edge("e_ab", "A", "B", length_m=500.0, lanes=lanes, speed_limit_mps=25.0),
        Edge("e_bc", "B", "C", length_m=500.0, lanes=lanes, speed_limit_mps=25.0),
        Edge("e_ac", "A", "C", length_m=1500.0, lanes=lanes, speed_limit_mps=25.0),
    ]
    return RoadNetwork(nodes, edges)


@pytest.fixture
def trinet() -> RoadNetwork:
    return build_trinet()


@pytest.fixture
def trinet_state(trinet) -> TrafficState:
    return TrafficState.free_flow(trinet, 0.0)


def state_with(net, delta, t_s=0.0) -> TrafficState:
    return apply_update(TrafficState.free_flow(net, 0.0), delta, t_s)


@pytest.fixture
def signal_net() -> RoadNetwork:
    """One 500 m edge feeding a signalized node (cycle 60, green [0, 30))."""
    nodes = [
        Node("X"),
        Node("Y", signalized=True,
             signal=SignalPlan(cycle_s=60.0, green_window=(0.0, 30.0))),
        Node("Z"),
    ]
    edges = [
        Edge("e_xy", "X", "Y", length_m=500.0, lanes=2, speed_limit_mps=25.0),
        Edge("e_yz", "Y", "Z", length_m=500.0, lanes=2, speed_limit_mps=25.0),
        Edge("e_wy", "W", "Y", length_m=500.0, lanes=2, speed_limit_mps=25.0),
    ]
    return RoadNetwork(nodes + [Node("W")], edges)
