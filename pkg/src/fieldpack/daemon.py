"""The running daemon: wires trigger, sources, ingest, pairing, health, recorder
and panel into one process, steered by serialized control commands.

Pipeline per datum: ingest (dual stamps, seq, stats) -> detector feeds ->
recording gate (enqueued iff the sensor is in REC) -> bounded queue -> writer.
The gate check and the queue outcome happen under one lock with the counter
updates, so ingested == recorded + dropped holds exactly no matter how a
record race aligns with RECORD_ON/OFF.

Fault policy: detector faults (DISCONNECTED, OVERHEAT, OBSTRUCTION,
GNSS_DENIED) drive the sensor state machine to ERR. Resource faults
(QUEUE_OVERFLOW, DISK_LOW, DISK_FULL) are raised on the fault board for the
panel and console but do not stop a recording sensor: halting recording over
a transient drop would turn one lost record into many.
"""

from __future__ import annotations

import enum
import json
import logging
import threading
import time
from dataclasses import dataclass

from .acquisition import (
    FramePair,
    FramePairer,
    Ingestor,
    PreviewRing,
    RecordType,
    RecordingQueue,
    SensorKind,
)
from .clock import SystemClock
from .config import FieldpackConfig
from .health import FaultKind, HealthEvent, HealthMonitor, SensorState
from .imu_odom import NonFiniteSampleError, apply_correction, initial_state, state_to_dict, step
from .panel import ButtonAction, PanelPublisher, button_action, decode_panel
from .recorder import DiskFullError, SessionWriter, disk_free
from .sensors.frames import CameraConfig, CameraId, encode_frame, synth_frame
from .sensors.imu import decode_imu_sample
from .sensors.lidar import packet_distance_stats
from .sensors.nmea import NmeaError, UnsupportedSentenceError, parse_nmea_gga
from .sensors.sources import (
    GnssSource,
    ImuSource,
    LidarSource,
    LidarUdpEmitter,
    LidarUdpReceiver,
    SourceRunner,
)
from .trigger import TriggerConfigError, TriggerSchedule

log = logging.getLogger("fieldpack")


class CommandKind(enum.Enum):
    START_SENSORS = "START_SENSORS"
    STOP_SENSORS = "STOP_SENSORS"
    RECORD_ON = "RECORD_ON"
    RECORD_OFF = "RECORD_OFF"
    SET_EXPOSURE = "SET_EXPOSURE"
    START_CAL = "START_CAL"


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    exposure_us: int | None = None


class FieldpackDaemon:
    def __init__(
        self,
        config: FieldpackConfig,
        session_root: str | None = None,
        panel_output=None,
        clock=None,
    ):
        self.config = config
        self.clock = clock or SystemClock()
        self.ingestor = Ingestor(self.clock)
        for descriptor in config.sensors:
            self.ingestor.register(descriptor)
        self.monitor = HealthMonitor(config.sensors, self.clock, config.thresholds)
        self.schedule = TriggerSchedule(config.trigger, start_ns=self.clock.mono_ns())

        self.session = SessionWriter(
            root=session_root or config.session.output_root,
            descriptors=config.sensors,
            start_wall_ns=self.clock.wall_ns(),
            roll_threshold=config.session.roll_threshold_bytes,
        )
        self.queue = RecordingQueue(
            capacity=config.session.queue_capacity,
            ingestor=self.ingestor,
            on_overflow=self._on_queue_overflow,
        )

        cams = config.sensors_of_kind(SensorKind.CAMERA)
        period_ns = self.schedule.period_ns
        self.pairer = FramePairer(
            window_periods=config.session.pairing_window_periods, period_ns=period_ns
        )
        self._camera_sides = {}
        for descriptor in cams:
            side = "LEFT" if "LEFT" in descriptor.name.upper() else "RIGHT"
            self._camera_sides[descriptor.id] = side
        self._camera_configs = {
            descriptor.id: CameraConfig(
                camera_id=CameraId.LEFT if self._camera_sides[descriptor.id] == "LEFT" else CameraId.RIGHT,
                width=config.sim.camera.width,
                height=config.sim.camera.height,
                bit_depth=config.sim.camera.bit_depth,
                disparity_px=config.sim.camera.disparity_px,
                base_temperature_c=config.sim.camera.base_temperature_c,
            )
            for descriptor in cams
        }
        self.schedule.subscribe(self._on_trigger)

        # timed simulated sources, started paused until START_SENSORS
        self.runners: dict[str, SourceRunner] = {}
        self._udp_emitter = None
        self._udp_receiver = None
        self._build_sources()

        # recording gate: gate flips and per-record gate checks exclude each other
        self._gate_lock = threading.Lock()
        self._recording = False
        self.last_session_stats: dict[str, dict] | None = None
        self.session_pairs = 0
        self.session_dropouts = 0

        self._control_lock = threading.Lock()
        self._stop_event = threading.Event()
        self.writer_stall = threading.Event()   # test hook: stalls the writer thread
        self._threads: list[threading.Thread] = []
        self._started = False
        self._start_mono_ns = self.clock.mono_ns()

        # preview state (drop-oldest, never touches the recording path)
        self.latest_frames: dict[str, object] = {}
        self.lidar_ring = PreviewRing(capacity=80)
        self.latest_odom: dict | None = None
        self.preview_frames_served = 0

        self.panel_tap: list[bytes] = []
        self._panel_tap_lock = threading.Lock()
        self._panel_output = panel_output
        order = [d.name for d in self.ingestor.descriptors]
        self.panel = PanelPublisher(self._write_panel_line, order)

        self.latest_snapshot = self.monitor.snapshot(disk_free_bytes=disk_free(self.session.root))
        self.disk_free_bytes = self.latest_snapshot.disk_free_bytes
        self.gnss_checksum_errors = 0
        self._last_overflow_ns: dict[int, int] = {}
        self._odom_state = initial_state(t_ns=self.clock.mono_ns())
        self._odom_last_publish_ns = 0
        self._odom_lock = threading.Lock()

    # --- construction helpers ------------------------------------------------

    def _build_sources(self) -> None:
        sim = self.config.sim
        for descriptor in self.config.sensors:
            if descriptor.kind is SensorKind.LIDAR:
                source = LidarSource(rotation_hz=sim.lidar_rotation_hz, obstructed=sim.lidar_obstructed)
                if sim.lidar_transport == "udp":
                    self._udp_receiver = LidarUdpReceiver(
                        self._make_sink(descriptor.id), port=sim.lidar_udp_port
                    )
                    self._udp_emitter = LidarUdpEmitter(port=self._udp_receiver.port)
                    sink = self._udp_emitter
                else:
                    sink = self._make_sink(descriptor.id)
                self.runners[descriptor.name] = SourceRunner(descriptor.name, source, self.clock, sink)
            elif descriptor.kind is SensorKind.IMU:
                source = ImuSource(rate_hz=sim.imu_rate_hz)
                self.runners[descriptor.name] = SourceRunner(
                    descriptor.name, source, self.clock, self._make_sink(descriptor.id)
                )
            elif descriptor.kind is SensorKind.GNSS:
                source = GnssSource(
                    base_latitude_deg=sim.gnss_base_latitude_deg,
                    base_longitude_deg=sim.gnss_base_longitude_deg,
                    rate_hz=sim.gnss_rate_hz,
                    fix_quality=sim.gnss_fix_quality,
                )
                self.runners[descriptor.name] = SourceRunner(
                    descriptor.name, source, self.clock, self._make_sink(descriptor.id)
                )

    def _make_sink(self, sensor_id: int):
        def sink(record_type: RecordType, payload: bytes) -> None:
            self.submit(sensor_id, record_type, payload)
        return sink

    # --- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for runner in self.runners.values():
            runner.pause()
            runner.start()
        if self._udp_receiver:
            self._udp_receiver.start()
        self._spawn(self._trigger_loop, "trigger")
        self._spawn(self._writer_loop, "writer")
        self._spawn(self._health_loop, "health")
        self._spawn(self._snapshot_loop, "snapshot")
        log.info("daemon started, session %s", self.session.session_dir)

    def _spawn(self, target, name: str) -> None:
        thread = threading.Thread(target=target, name=name, daemon=True)
        thread.start()
        self._threads.append(thread)

    def stop(self) -> None:
        if not self._started:
            return
        if self._recording:
            self.apply_command(Command(CommandKind.RECORD_OFF))
        for runner in self.runners.values():
            runner.stop()
        if self._udp_receiver:
            self._udp_receiver.stop()
        self.writer_stall.clear()
        self._stop_event.set()
        for runner in self.runners.values():
            runner.join(timeout=2)
        for thread in self._threads:
            thread.join(timeout=5)
        self.session.close()
        self._started = False
        log.info("daemon stopped, session %s closed", self.session.session_dir)

    @property
    def running(self) -> bool:
        return self._started

    # --- ingest and routing ------------------------------------------------------

    def submit(self, sensor_id: int, record_type: RecordType, payload: bytes) -> None:
        """Common entry for every datum, simulated or received off a socket."""
        with self._gate_lock:
            record = self.ingestor.ingest(sensor_id, record_type, payload)
            if self._recording and self.monitor.state(sensor_id) is SensorState.REC:
                self.queue.put(record)
        self.monitor.detectors.note_datum(sensor_id, record.mono_ns)

        if record_type is RecordType.LIDAR_PKT:
            self._after_lidar(sensor_id, record, payload)
        elif record_type is RecordType.IMU:
            self._after_imu(sensor_id, record, payload)
        elif record_type is RecordType.GNSS:
            self._after_gnss(sensor_id, record, payload)

    def _on_trigger(self, event) -> None:
        """Synthesize one frame per camera per trigger event."""
        for sensor_id, side in self._camera_sides.items():
            if self.monitor.state(sensor_id) is SensorState.OFF:
                continue
            cam_config = self._camera_configs[sensor_id]
            temperature = self._camera_temperature(cam_config)
            frame = synth_frame(
                event, cam_config, self.config.sim.camera.scene_seed, temperature_c=temperature
            )
            payload = encode_frame(frame)
            with self._gate_lock:
                record = self.ingestor.ingest(sensor_id, RecordType.FRAME, payload)
                if self._recording and self.monitor.state(sensor_id) is SensorState.REC:
                    self.queue.put(record)
            self.monitor.detectors.note_datum(sensor_id, record.mono_ns)
            self.monitor.detectors.note_frame_temperature(sensor_id, frame.temperature_c)
            self.latest_frames[self.ingestor.descriptor(sensor_id).name] = frame
            for pair_event in self.pairer.offer(side, event.seq, frame, record.mono_ns):
                self._handle_pair_event(pair_event)

    def _camera_temperature(self, cam_config: CameraConfig) -> float:
        ramp = self.config.sim.camera.temperature_ramp_c_per_s
        if ramp <= 0:
            return cam_config.base_temperature_c
        elapsed_s = (self.clock.mono_ns() - self._start_mono_ns) / 1e9
        return min(cam_config.base_temperature_c + ramp * elapsed_s, 95.0)

    def _handle_pair_event(self, pair_event) -> None:
        if isinstance(pair_event, FramePair):
            now = self.clock.mono_ns()
            self.monitor.note_pair(now)
            if self._recording:
                self.session_pairs += 1
        else:
            self.session_dropouts += 1
            missing_name = next(
                self.ingestor.descriptor(sid).name
                for sid, side in self._camera_sides.items()
                if side == pair_event.missing_side
            )
            self._emit_event(
                self.ingestor.id_of(missing_name),
                {"event": "pair_dropout", "side": pair_event.missing_side,
                 "trigger_seq": pair_event.trigger_seq},
            )

    def _after_lidar(self, sensor_id: int, record, payload: bytes) -> None:
        total, near = packet_distance_stats(payload, self.config.thresholds.obstruction_near_m)
        self.monitor.detectors.note_lidar_returns(sensor_id, record.mono_ns, total, near)
        self.lidar_ring.push(payload)

    def _after_imu(self, sensor_id: int, record, payload: bytes) -> None:
        sample = decode_imu_sample(payload)
        with self._odom_lock:
            try:
                if sample.mono_time_ns > self._odom_state.t_ns:
                    self._odom_state = step(self._odom_state, sample)
            except NonFiniteSampleError as exc:
                self.monitor.process_fault(sensor_id, FaultKind.DISCONNECTED, f"bad sample: {exc}")
                return
            publish_period_ns = int(1e9 / self.config.session.odom_publish_hz)
            due = record.mono_ns - self._odom_last_publish_ns >= publish_period_ns
            if due:
                self._odom_last_publish_ns = record.mono_ns
                self.latest_odom = state_to_dict(self._odom_state)
        if due:
            self._emit_event(sensor_id, {"event": "odometry", **self.latest_odom})

    def apply_pose_correction(self, q_ref, p_ref, t_ns: int) -> None:
        """External pose reference (stands in for map-based localization)."""
        from .imu_odom import PoseCorrection

        with self._odom_lock:
            self._odom_state = apply_correction(
                self._odom_state, PoseCorrection(q_ref=q_ref, p_ref=p_ref, t_ns=t_ns)
            )

    def _after_gnss(self, sensor_id: int, record, payload: bytes) -> None:
        try:
            fix = parse_nmea_gga(payload.decode("ascii", errors="replace").strip())
        except UnsupportedSentenceError:
            return  # other sentence types are skipped at the stream level
        except NmeaError:
            self.gnss_checksum_errors += 1
            return
        self.monitor.detectors.note_gnss_quality(sensor_id, record.mono_ns, fix.fix_quality)

    def _emit_event(self, sensor_id: int, body: dict) -> None:
        payload = json.dumps(body, separators=(",", ":")).encode("ascii")
        with self._gate_lock:
            record = self.ingestor.ingest(sensor_id, RecordType.EVENT, payload)
            if self._recording and self.monitor.state(sensor_id) is SensorState.REC:
                self.queue.put(record)

    def _on_queue_overflow(self, sensor_id: int) -> None:
        now = self.clock.mono_ns()
        self._last_overflow_ns[sensor_id] = now
        self.monitor.board.raise_fault(FaultKind.QUEUE_OVERFLOW, sensor_id, now, "recording queue full")

    # --- background loops ---------------------------------------------------------

    def _trigger_loop(self) -> None:
        while not self._stop_event.is_set():
            now = self.clock.mono_ns()
            if self.schedule.next_event(now) is None:
                wait_s = max((self.schedule.next_fire_ns() - now) / 1e9, 0.0005)
                self._stop_event.wait(min(wait_s, 0.05))

    def _writer_loop(self) -> None:
        while not self._stop_event.is_set() or self.queue.qsize():
            if self.writer_stall.is_set():
                time.sleep(0.005)
                continue
            record = self.queue.get(timeout=0.1)
            if record is None:
                continue
            try:
                self.session.append(record)
            except DiskFullError as exc:
                self.ingestor.move_recorded_to_dropped(record.sensor_id)
                self.monitor.raise_rig_fault(FaultKind.DISK_FULL, str(exc))

    def _health_loop(self) -> None:
        hold_ns = int(self.config.thresholds.clear_hold_s * 1e9)
        while not self._stop_event.is_set():
            self.monitor.tick()
            now = self.clock.mono_ns()
            for pair_event in self.pairer.expire_older_than(now):
                self._handle_pair_event(pair_event)
            for sensor_id, last in list(self._last_overflow_ns.items()):
                if now - last > hold_ns:
                    self.monitor.board.clear_fault(FaultKind.QUEUE_OVERFLOW, sensor_id)
                    del self._last_overflow_ns[sensor_id]
            self._stop_event.wait(0.1)

    def _snapshot_loop(self) -> None:
        ticks = 0
        while not self._stop_event.is_set():
            if ticks % 2 == 0:
                try:
                    self.disk_free_bytes = disk_free(self.session.root)
                except OSError:
                    self.monitor.raise_rig_fault(FaultKind.DISK_FULL, "recording root vanished")
                if self.disk_free_bytes < self.config.session.disk_low_water_bytes:
                    self.monitor.raise_rig_fault(
                        FaultKind.DISK_LOW, f"{self.disk_free_bytes} bytes free"
                    )
                else:
                    self.monitor.clear_rig_fault(FaultKind.DISK_LOW)
            snapshot = self.monitor.snapshot(
                disk_free_bytes=self.disk_free_bytes,
                exposure_us=self.schedule.exposure_us,
                trigger_fps=self.schedule.fps,
            )
            self.latest_snapshot = snapshot
            self.panel.publish(snapshot)
            ticks += 1
            self._stop_event.wait(0.5)

    # --- panel ----------------------------------------------------------------------

    def _write_panel_line(self, line: bytes) -> None:
        with self._panel_tap_lock:
            self.panel_tap.append(line)
            if len(self.panel_tap) > 300:
                del self.panel_tap[: len(self.panel_tap) - 300]
        if self._panel_output is not None:
            try:
                self._panel_output.write(line)
                self._panel_output.flush()
            except (OSError, ValueError):
                pass

    def panel_lines(self) -> list[bytes]:
        with self._panel_tap_lock:
            return list(self.panel_tap)

    def handle_panel_line(self, line: bytes) -> tuple[bool, str]:
        """Inbound button line from the panel byte stream."""
        message = decode_panel(line)
        action = button_action(message)
        if action is ButtonAction.START_SENSORS:
            return self.apply_command(Command(CommandKind.START_SENSORS))
        if self._recording:
            return self.apply_command(Command(CommandKind.RECORD_OFF))
        return self.apply_command(Command(CommandKind.RECORD_ON))

    # --- control --------------------------------------------------------------------

    def apply_command(self, command: Command) -> tuple[bool, str]:
        """Commands are serialized; concurrent duplicates resolve to one no-op rejection."""
        with self._control_lock:
            handler = {
                CommandKind.START_SENSORS: self._cmd_start_sensors,
                CommandKind.STOP_SENSORS: self._cmd_stop_sensors,
                CommandKind.RECORD_ON: self._cmd_record_on,
                CommandKind.RECORD_OFF: self._cmd_record_off,
                CommandKind.SET_EXPOSURE: self._cmd_set_exposure,
                CommandKind.START_CAL: self._cmd_start_cal,
            }[command.kind]
            accepted, reason = handler(command)
            log.info("command %s -> %s (%s)", command.kind.value, accepted, reason)
            return accepted, reason

    def _cmd_start_sensors(self, command: Command) -> tuple[bool, str]:
        off = [d for d in self.ingestor.descriptors if self.monitor.state(d.id) is SensorState.OFF]
        if not off:
            return False, "sensors already started"
        for descriptor in off:
            self.monitor.apply(descriptor.id, HealthEvent.START_OK)
            runner = self.runners.get(descriptor.name)
            if runner:
                runner.resume()
        return True, f"started {len(off)} sensors"

    def _cmd_stop_sensors(self, command: Command) -> tuple[bool, str]:
        if self._recording:
            self._cmd_record_off(command)
        for descriptor in self.ingestor.descriptors:
            self.monitor.apply(descriptor.id, HealthEvent.STOP)
            runner = self.runners.get(descriptor.name)
            if runner:
                runner.pause()
        return True, "all sensors off"

    def _cmd_record_on(self, command: Command) -> tuple[bool, str]:
        with self._gate_lock:
            if self._recording:
                return False, "already recording"
            idle = [d for d in self.ingestor.descriptors if self.monitor.state(d.id) is SensorState.IDLE]
            if not idle:
                return False, "no sensors in IDLE"
            for descriptor in idle:
                self.monitor.apply(descriptor.id, HealthEvent.RECORD_ON)
            self.ingestor.reset_counters()
            self.session_pairs = 0
            self.session_dropouts = 0
            self._recording = True
        return True, f"recording {len(idle)} sensors"

    def _cmd_record_off(self, command: Command) -> tuple[bool, str]:
        with self._gate_lock:
            if not self._recording:
                return False, "not recording"
            for descriptor in self.ingestor.descriptors:
                if self.monitor.state(descriptor.id) is SensorState.REC:
                    self.monitor.apply(descriptor.id, HealthEvent.RECORD_OFF)
            self._recording = False
            self.last_session_stats = self.ingestor.stats_by_name(self.clock.mono_ns())
        return True, "recording stopped"

    def _cmd_set_exposure(self, command: Command) -> tuple[bool, str]:
        if command.exposure_us is None:
            return False, "SET_EXPOSURE requires exposure_us"
        try:
            seq = self.schedule.set_exposure(command.exposure_us)
        except TriggerConfigError as exc:
            return False, str(exc)
        return True, f"effective from trigger seq {seq}"

    def _cmd_start_cal(self, command: Command) -> tuple[bool, str]:
        imus = self.config.sensors_of_kind(SensorKind.IMU)
        if not imus:
            return False, "no IMU in this rig"
        if self.monitor.start_calibration(imus[0].id):
            return True, f"calibrating for {self.config.thresholds.cal_duration_s:.0f} s"
        return False, "calibration requires the IMU to be IDLE"

    # --- introspection -----------------------------------------------------------------

    @property
    def recording(self) -> bool:
        return self._recording

    def status_dict(self) -> dict:
        snapshot = self.latest_snapshot.to_dict()
        snapshot["session_dir"] = str(self.session.session_dir)
        snapshot["session_pairs"] = self.session_pairs
        snapshot["session_dropouts"] = self.session_dropouts
        return snapshot

    def stats_dict(self) -> dict:
        return {
            "sensors": self.ingestor.stats_by_name(self.clock.mono_ns()),
            "rejected_unknown": self.ingestor.rejected_unknown,
            "gnss_checksum_errors": self.gnss_checksum_errors,
            "queue_depth": self.queue.qsize(),
            "bytes_written": self.session.writer.bytes_written,
            "records_written": self.session.writer.records_written,
            "last_session": self.last_session_stats,
        }
