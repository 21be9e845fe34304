"""Bandwidth oversubscription and power budget tests."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldpack.budget import (
    Battery,
    Flow,
    Link,
    PowerComponent,
    RigTopology,
    TopologyError,
    battery_runtime_h,
    link_utilization,
    power_total,
    validate_topology,
)


def paper_rig(uplink_mbps: float) -> RigTopology:
    return RigTopology(
        nodes=["cam_left", "cam_right", "lidar", "switch", "jetson"],
        links=[
            Link("cam_left", "switch", 1000),
            Link("cam_right", "switch", 1000),
            Link("switch", "jetson", uplink_mbps),
            Link("lidar", "jetson", 1000),
        ],
        flows=[
            Flow("cam_left", "cam_left", "jetson", 872, ("cam_left-switch", "switch-jetson")),
            Flow("cam_right", "cam_right", "jetson", 872, ("cam_right-switch", "switch-jetson")),
            Flow("lidar", "lidar", "jetson", 8, ("lidar-jetson",)),
        ],
    )


def by_link(reports):
    return {r.link: r for r in reports}


def test_two_cameras_oversubscribe_1gbe_uplink():
    reports = link_utilization(paper_rig(1000))
    uplink = by_link(reports)["switch-jetson"]
    assert uplink.total_mbps == pytest.approx(1744)
    assert uplink.utilization == pytest.approx(1.744)
    assert uplink.violating
    # violations lead the report
    assert reports[0].link == "switch-jetson"


def test_10gbe_uplink_resolves_oversubscription():
    reports = link_utilization(paper_rig(10000))
    uplink = by_link(reports)["switch-jetson"]
    assert uplink.utilization == pytest.approx(0.1744)
    assert not any(r.violating for r in reports)


def test_no_flows_zero_utilization():
    topo = paper_rig(1000)
    topo.flows = []
    reports = link_utilization(topo)
    assert all(r.total_mbps == 0 and not r.violating for r in reports)


def test_route_over_undeclared_link_rejected():
    topo = paper_rig(1000)
    topo.flows.append(Flow("ghost", "lidar", "jetson", 1, ("lidar-nowhere",)))
    with pytest.raises(TopologyError, match="undeclared link"):
        validate_topology(topo)


def test_disconnected_route_rejected():
    topo = paper_rig(1000)
    topo.flows.append(Flow("bad", "cam_left", "jetson", 1, ("cam_right-switch", "switch-jetson")))
    with pytest.raises(TopologyError, match="breaks"):
        validate_topology(topo)


def test_route_must_end_at_sink():
    topo = paper_rig(1000)
    topo.flows.append(Flow("short", "cam_left", "jetson", 1, ("cam_left-switch",)))
    with pytest.raises(TopologyError, match="sink"):
        validate_topology(topo)


def test_reversed_link_key_accepted():
    topo = paper_rig(1000)
    topo.flows.append(Flow("rev", "jetson", "cam_left", 1, ("jetson-switch", "switch-cam_left")))
    validate_topology(topo)


def test_power_total_paper_breakdown():
    components = [
        PowerComponent("computer", 40),
        PowerComponent("switch", 12),
        PowerComponent("other", 27),
    ]
    assert power_total(components) == 79


def test_power_total_empty_and_fractional():
    assert power_total([]) == 0
    assert power_total([PowerComponent("x", 1.5), PowerComponent("y", 2.5)]) == pytest.approx(4.0)


def test_negative_wattage_rejected():
    with pytest.raises(ValueError):
        PowerComponent("bad", -1)


def test_battery_runtime_paper_values():
    assert battery_runtime_h(56, 2.5, 79) == pytest.approx(1.77, abs=0.005)
    assert battery_runtime_h(56, 7.5, 79) == pytest.approx(5.32, abs=0.005)
    assert battery_runtime_h(56, 2.5, 140) == pytest.approx(1.0)


def test_battery_zero_load_rejected():
    with pytest.raises(ValueError):
        battery_runtime_h(56, 2.5, 0)


@settings(max_examples=40, deadline=None)
@given(
    rates=st.lists(st.floats(min_value=0, max_value=2000), min_size=1, max_size=5),
    extra=st.floats(min_value=0.1, max_value=500),
)
def test_adding_flow_never_decreases_utilization(rates, extra):
    def topo_for(rs):
        return RigTopology(
            nodes=["a", "b"],
            links=[Link("a", "b", 1000)],
            flows=[Flow(f"f{i}", "a", "b", r, ("a-b",)) for i, r in enumerate(rs)],
        )

    base = link_utilization(topo_for(rates))[0].utilization
    more = link_utilization(topo_for(rates + [extra]))[0].utilization
    assert more >= base


@settings(max_examples=40, deadline=None)
@given(
    rates=st.lists(st.floats(min_value=0.1, max_value=500), min_size=1, max_size=4),
    k=st.floats(min_value=0.1, max_value=10),
)
def test_scaling_flows_scales_utilization_linearly(rates, k):
    def topo_for(rs):
        return RigTopology(
            nodes=["a", "b"],
            links=[Link("a", "b", 1000)],
            flows=[Flow(f"f{i}", "a", "b", r, ("a-b",)) for i, r in enumerate(rs)],
        )

    base = link_utilization(topo_for(rates))[0].utilization
    scaled = link_utilization(topo_for([r * k for r in rates]))[0].utilization
    assert scaled == pytest.approx(base * k, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(watts=st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=8))
def test_removing_component_never_increases_power(watts):
    components = [PowerComponent(f"c{i}", w) for i, w in enumerate(watts)]
    total = power_total(components)
    assert power_total(components[:-1]) <= total + 1e-12
