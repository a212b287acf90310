"""
Pose Server - Latest hub snapshot as JSON over HTTP.

GET /pose answers {"sensors": [{"id": 0, "q": [w, x, y, z], "t_us": ...}, ...]}.
The simulation publishes by swapping one reference on a SnapshotBoard;
request handlers read whatever snapshot is current, so readers never see
a half-written snapshot and never hold up the simulation.
"""

import errno
import json
import socketserver
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler
from typing import Optional

from netsim import BusSimulation, HubSnapshot, SensorPose, StreamUnderrunError


class PortInUseError(OSError):
    """Raised when the pose endpoint cannot bind its port."""


@dataclass(frozen=True)
class PoseSnapshot:
    """Per-sensor quaternion (w, x, y, z) plus the hub time it was received."""
    t_us: int
    sensors: tuple[SensorPose, ...] = ()

    @classmethod
    def from_hub(cls, snapshot: HubSnapshot) -> "PoseSnapshot":
        return cls(t_us=snapshot.t_us, sensors=snapshot.sensors)

    def payload(self) -> dict:
        return {
            "sensors": [
                {"id": pose.sensor_id, "q": list(pose.q), "t_us": pose.t_us}
                for pose in self.sensors
            ]
        }


class SnapshotBoard:
    """Holds the latest snapshot. publish() replaces it; latest() never blocks."""

    def __init__(self):
        self._latest = PoseSnapshot(t_us=0)
        self.published = 0

    def publish(self, snapshot):
        if isinstance(snapshot, HubSnapshot):
            snapshot = PoseSnapshot.from_hub(snapshot)
        self._latest = snapshot
        self.published += 1

    def latest(self) -> PoseSnapshot:
        return self._latest


class PoseRequestHandler(BaseHTTPRequestHandler):
    """Serves GET /pose from the server's board; everything else is 404."""

    def do_GET(self):
        if self.path.split('?', 1)[0] == '/pose':
            body = json.dumps(self.server.board.latest().payload()).encode('utf-8')
            self.send_response(200)
            self.send_header('Content-type', 'application/json')
            self.send_header('Content-Length', str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_error(404, "Unknown path (try /pose)")

    def log_message(self, format, *args):
        """Suppress default logging"""
        pass


class PoseServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    daemon_threads = True

    def __init__(self, address, board: SnapshotBoard):
        self.board = board
        super().__init__(address, PoseRequestHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve_pose(board: SnapshotBoard, host: str = "127.0.0.1", port: int = 8080) -> PoseServer:
    """
    Start the pose endpoint in a background thread.

    Args:
        board: Snapshot source
        host: Interface to bind
        port: TCP port; 0 picks a free one (see PoseServer.port)

    Returns:
        Running server; call shutdown() then server_close() to stop it

    Raises:
        PortInUseError: the port is already bound
    """
    try:
        server = PoseServer((host, port), board)
    except OSError as e:
        if e.errno == errno.EADDRINUSE:
            raise PortInUseError(e.errno, f"Port {port} on {host} is already in use") from e
        raise

    thread = threading.Thread(target=server.serve_forever, name="pose-server", daemon=True)
    thread.start()
    print(f"[Server] Serving GET /pose on http://{host}:{server.port}")
    return server


def run_live_simulation(sim: BusSimulation, board: SnapshotBoard, realtime: bool = False,
                        stop: Optional[threading.Event] = None) -> int:
    """
    Run hub cycles until the streams run out, publishing after every cycle.

    Args:
        sim: Bus simulation (its on_snapshot is replaced by board.publish)
        board: Where snapshots go
        realtime: Sleep so simulated time keeps pace with wall-clock time
        stop: Optional event that ends the loop early

    Returns:
        Number of completed cycles
    """
    sim.on_snapshot = board.publish
    start_sim = sim.env.now
    start_wall = time.monotonic()
    cycles = 0
    while stop is None or not stop.is_set():
        try:
            sim.run_cycle()
        except StreamUnderrunError:
            break
        cycles += 1
        if realtime:
            ahead = (sim.env.now - start_sim) / 1e6 - (time.monotonic() - start_wall)
            if ahead > 0:
                time.sleep(ahead)
    print(f"[Hub] Simulation finished after {cycles} cycle(s)")
    return cycles
