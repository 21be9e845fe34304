"""TOML configuration: sensors, trigger, thresholds, session, topology, power."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .acquisition import SensorDescriptor, SensorKind
from .budget import Battery, Flow, Link, PowerComponent, RigTopology
from .health import HealthThresholds
from .trigger import TriggerConfig, validate_config


class ConfigError(ValueError):
    pass


@dataclass
class CameraSimConfig:
    width: int = 320
    height: int = 240
    bit_depth: int = 12
    disparity_px: int = 12
    scene_seed: int = 1
    base_temperature_c: float = 45.0
    temperature_ramp_c_per_s: float = 0.0   # >0 simulates an overheating housing


@dataclass
class SimConfig:
    lidar_rotation_hz: float = 10.0
    lidar_obstructed: bool = False
    lidar_transport: str = "inproc"         # "inproc" or "udp"
    lidar_udp_port: int = 0                 # 0 picks a free port
    imu_rate_hz: float = 100.0
    gnss_rate_hz: float = 1.0
    gnss_fix_quality: int = 1
    gnss_base_latitude_deg: float = 46.8139
    gnss_base_longitude_deg: float = -71.2082
    camera: CameraSimConfig = field(default_factory=CameraSimConfig)


@dataclass
class SessionConfig:
    output_root: str = "./sessions"
    roll_threshold_bytes: int = 512 * 1024 * 1024
    disk_low_water_bytes: int = 2 * 1024 * 1024 * 1024
    queue_capacity: int = 1024
    pairing_window_periods: int = 5
    odom_publish_hz: float = 5.0


@dataclass
class ControlConfig:
    port: int = 8080
    host: str = "127.0.0.1"


@dataclass
class FieldpackConfig:
    sensors: list[SensorDescriptor]
    trigger: TriggerConfig
    thresholds: HealthThresholds
    session: SessionConfig
    control: ControlConfig
    sim: SimConfig
    topology: RigTopology

    def sensor_by_name(self, name: str) -> SensorDescriptor:
        for descriptor in self.sensors:
            if descriptor.name == name:
                return descriptor
        raise ConfigError(f"no sensor named {name!r} in config")

    def sensors_of_kind(self, kind: SensorKind) -> list[SensorDescriptor]:
        return [d for d in self.sensors if d.kind == kind]


def _parse_sensors(raw: list[dict]) -> list[SensorDescriptor]:
    sensors = []
    seen_ids: dict[int, str] = {}
    for entry in raw:
        try:
            descriptor = SensorDescriptor(
                id=int(entry["id"]),
                name=str(entry["name"]),
                kind=SensorKind(entry["kind"]),
                nominal_rate_hz=float(entry["nominal_rate_hz"]),
                silence_timeout_ms=float(entry["silence_timeout_ms"]),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad sensor entry {entry!r}: {exc}") from exc
        if descriptor.id in seen_ids:
            raise ConfigError(
                f"duplicate sensor id {descriptor.id}: {seen_ids[descriptor.id]!r} "
                f"and {descriptor.name!r}"
            )
        seen_ids[descriptor.id] = descriptor.name
        sensors.append(descriptor)
    if not sensors:
        raise ConfigError("config declares no sensors")
    return sensors


def _parse_topology(raw: dict, power_raw: dict) -> RigTopology:
    try:
        links = [
            Link(a=str(l["a"]), b=str(l["b"]), capacity_mbps=float(l["capacity_mbps"]))
            for l in raw.get("links", [])
        ]
        flows = [
            Flow(
                name=str(f["name"]),
                source=str(f["source"]),
                sink=str(f["sink"]),
                rate_mbps=float(f["rate_mbps"]),
                route=tuple(str(r) for r in f["route"]),
            )
            for f in raw.get("flows", [])
        ]
        components = [
            PowerComponent(name=str(c["name"]), watts=float(c["watts"]))
            for c in power_raw.get("components", [])
        ]
        battery = None
        if "battery" in power_raw:
            battery = Battery(
                voltage_v=float(power_raw["battery"]["voltage_v"]),
                capacity_ah=float(power_raw["battery"]["capacity_ah"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad topology/power section: {exc}") from exc
    return RigTopology(
        nodes=[str(n) for n in raw.get("nodes", [])],
        links=links,
        flows=flows,
        power_components=components,
        battery=battery,
    )


def load_config(path: str | Path) -> FieldpackConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error in {path}: {exc}") from exc

    sensors = _parse_sensors(raw.get("sensors", []))

    trig_raw = raw.get("trigger", {})
    trigger = TriggerConfig(
        fps=float(trig_raw.get("fps", 10.0)),
        exposure_us=int(trig_raw.get("exposure_us", 5000)),
    )
    violation = validate_config(trigger)
    if violation:
        raise ConfigError(f"trigger config invalid: {violation}")

    th_raw = raw.get("health", {})
    thresholds = HealthThresholds(
        overheat_c=float(th_raw.get("overheat_c", 75.0)),
        overheat_consecutive_frames=int(th_raw.get("overheat_consecutive_frames", 3)),
        obstruction_ratio=float(th_raw.get("obstruction_ratio", 0.95)),
        obstruction_near_m=float(th_raw.get("obstruction_near_m", 0.5)),
        obstruction_window_s=float(th_raw.get("obstruction_window_s", 1.0)),
        gnss_denied_after_s=float(th_raw.get("gnss_denied_after_s", 10.0)),
        clear_hold_s=float(th_raw.get("clear_hold_s", 2.0)),
        cal_duration_s=float(th_raw.get("cal_duration_s", 10.0)),
    )

    sess_raw = raw.get("session", {})
    session = SessionConfig(
        output_root=str(sess_raw.get("output_root", "./sessions")),
        roll_threshold_bytes=int(sess_raw.get("roll_threshold_mib", 512)) * 1024 * 1024,
        disk_low_water_bytes=int(float(sess_raw.get("disk_low_water_gib", 2.0)) * 1024**3),
        queue_capacity=int(sess_raw.get("queue_capacity", 1024)),
        pairing_window_periods=int(sess_raw.get("pairing_window_periods", 5)),
        odom_publish_hz=float(sess_raw.get("odom_publish_hz", 5.0)),
    )

    ctrl_raw = raw.get("control", {})
    control = ControlConfig(
        port=int(ctrl_raw.get("port", 8080)),
        host=str(ctrl_raw.get("host", "127.0.0.1")),
    )

    sim_raw = raw.get("sim", {})
    cam_raw = sim_raw.get("camera", {})
    sim = SimConfig(
        lidar_rotation_hz=float(sim_raw.get("lidar_rotation_hz", 10.0)),
        lidar_obstructed=bool(sim_raw.get("lidar_obstructed", False)),
        lidar_transport=str(sim_raw.get("lidar_transport", "inproc")),
        lidar_udp_port=int(sim_raw.get("lidar_udp_port", 0)),
        imu_rate_hz=float(sim_raw.get("imu_rate_hz", 100.0)),
        gnss_rate_hz=float(sim_raw.get("gnss_rate_hz", 1.0)),
        gnss_fix_quality=int(sim_raw.get("gnss_fix_quality", 1)),
        gnss_base_latitude_deg=float(sim_raw.get("gnss_base_latitude_deg", 46.8139)),
        gnss_base_longitude_deg=float(sim_raw.get("gnss_base_longitude_deg", -71.2082)),
        camera=CameraSimConfig(
            width=int(cam_raw.get("width", 320)),
            height=int(cam_raw.get("height", 240)),
            bit_depth=int(cam_raw.get("bit_depth", 12)),
            disparity_px=int(cam_raw.get("disparity_px", 12)),
            scene_seed=int(cam_raw.get("scene_seed", 1)),
            base_temperature_c=float(cam_raw.get("base_temperature_c", 45.0)),
            temperature_ramp_c_per_s=float(cam_raw.get("temperature_ramp_c_per_s", 0.0)),
        ),
    )
    if sim.lidar_transport not in ("inproc", "udp"):
        raise ConfigError(f"sim.lidar_transport must be inproc or udp, got {sim.lidar_transport!r}")

    topology = _parse_topology(raw.get("topology", {}), raw.get("power", {}))

    return FieldpackConfig(
        sensors=sensors,
        trigger=trigger,
        thresholds=thresholds,
        session=session,
        control=control,
        sim=sim,
        topology=topology,
    )
