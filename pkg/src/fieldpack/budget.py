"""Static bandwidth and power analysis over a declared rig topology.

Links are undirected with fixed capacity; each flow follows one declared
route (the rig is statically cabled, so there is no routing to solve). A link
is oversubscribed when the summed flow rates exceed its capacity, which on
the real rig shows up as packet loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity_mbps: float

    def __post_init__(self):
        if self.capacity_mbps <= 0:
            raise TopologyError(f"link {self.key} capacity must be positive")

    @property
    def key(self) -> str:
        return f"{self.a}-{self.b}"

    def matches(self, key: str) -> bool:
        return key in (f"{self.a}-{self.b}", f"{self.b}-{self.a}")

    def endpoints(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Flow:
    name: str
    source: str
    sink: str
    rate_mbps: float
    route: tuple[str, ...]      # ordered link keys, e.g. ("cam_left-switch", "switch-jetson")

    def __post_init__(self):
        if self.rate_mbps < 0:
            raise TopologyError(f"flow {self.name} rate must be non-negative")


@dataclass(frozen=True)
class PowerComponent:
    name: str
    watts: float

    def __post_init__(self):
        if self.watts < 0:
            raise ValueError(f"component {self.name} wattage must be non-negative")


@dataclass(frozen=True)
class Battery:
    voltage_v: float
    capacity_ah: float


@dataclass
class RigTopology:
    nodes: list[str] = field(default_factory=list)
    links: list[Link] = field(default_factory=list)
    flows: list[Flow] = field(default_factory=list)
    power_components: list[PowerComponent] = field(default_factory=list)
    battery: Battery | None = None


@dataclass(frozen=True)
class LinkReport:
    link: str
    capacity_mbps: float
    total_mbps: float
    utilization: float
    violating: bool

    @property
    def excess_mbps(self) -> float:
        return max(0.0, self.total_mbps - self.capacity_mbps)


def resolve_route(topology: RigTopology, flow: Flow) -> list[Link]:
    """Map a flow's route keys to declared links, checking path connectivity."""
    resolved: list[Link] = []
    for key in flow.route:
        match = next((ln for ln in topology.links if ln.matches(key)), None)
        if match is None:
            raise TopologyError(f"flow {flow.name} routed over undeclared link {key!r}")
        resolved.append(match)
    if not resolved:
        raise TopologyError(f"flow {flow.name} has an empty route")
    # walk the path: each hop must continue from the current node to the sink
    current = flow.source
    for link in resolved:
        if current not in link.endpoints():
            raise TopologyError(
                f"flow {flow.name} route breaks at {link.key}: not connected to {current}"
            )
        current = link.b if current == link.a else link.a
    if current != flow.sink:
        raise TopologyError(f"flow {flow.name} route ends at {current}, sink is {flow.sink}")
    return resolved


def validate_topology(topology: RigTopology) -> None:
    declared = set(topology.nodes)
    for link in topology.links:
        for node in (link.a, link.b):
            if declared and node not in declared:
                raise TopologyError(f"link {link.key} references undeclared node {node!r}")
    for flow in topology.flows:
        resolve_route(topology, flow)


def link_utilization(topology: RigTopology) -> list[LinkReport]:
    """Exact per-link rate summation; violating links lead, sorted by excess."""
    validate_topology(topology)
    totals: dict[str, float] = {link.key: 0.0 for link in topology.links}
    for flow in topology.flows:
        for link in resolve_route(topology, flow):
            totals[link.key] += flow.rate_mbps
    reports = [
        LinkReport(
            link=link.key,
            capacity_mbps=link.capacity_mbps,
            total_mbps=totals[link.key],
            utilization=totals[link.key] / link.capacity_mbps,
            violating=totals[link.key] > link.capacity_mbps,
        )
        for link in topology.links
    ]
    violating = sorted((r for r in reports if r.violating), key=lambda r: -r.excess_mbps)
    healthy = sorted((r for r in reports if not r.violating), key=lambda r: r.link)
    return violating + healthy


def power_total(components: list[PowerComponent]) -> float:
    """Exact sum of component draws in watts."""
    return sum(c.watts for c in components)


def battery_runtime_h(voltage_v: float, capacity_ah: float, load_w: float) -> float:
    """Ideal runtime in hours: V * Ah / W. Conversion losses are ignored."""
    if voltage_v <= 0 or capacity_ah <= 0:
        raise ValueError("battery voltage and capacity must be positive")
    if load_w <= 0:
        raise ValueError("load must be positive")
    return voltage_v * capacity_ah / load_w


def flow_rate_by_name(topology: RigTopology) -> dict[str, float]:
    """Nominal per-flow rates, used to cross-check measured bandwidth."""
    return {flow.name: flow.rate_mbps for flow in topology.flows}
