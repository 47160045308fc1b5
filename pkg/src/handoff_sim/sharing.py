"""Central AP registry service and its blocking client.

Frames are a 4-byte big-endian payload length followed by UTF-8 JSON.
Requests::

    {"op": "upload", "entries": [{"t", "bssid", "ssid", "lat_deg", "lon_deg", "range_m", "auth"}]}
        -> {"ok": <int>, "rejected": [{"index": <int>, "reason": <str>}]}
    {"op": "nearest", "lat_deg": <float>, "lon_deg": <float>, "max_results": <int>}
        -> {"results": [{<entry fields>, "distance_m": <float>}]}

Anything else gets ``{"error": <reason>}`` and the session stays open.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable

from .geo import GeoPoint, degrees_exact
from .registry import ApRecord, NoKnownAp, Registry, canonical_bssid

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 16 * 1024 * 1024
POLL_INTERVAL_S = 0.05  # shutdown latency


class SharingError(Exception):
    pass


class TransportError(SharingError):
    """Connection-level failure; the request may be retried."""


class ProtocolError(SharingError):
    """The server understood the request and refused it."""


class FrameError(SharingError):
    """Malformed frame on the wire."""


def encode_frame(message: dict) -> bytes:
    payload = json.dumps(message, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME_BYTES}")
    return HEADER.pack(len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise ConnectionError(f"connection closed mid-frame ({got}/{n} bytes)")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame_bytes(sock: socket.socket) -> bytes | None:
    """Payload bytes of the next frame, or None on a clean EOF."""
    header = _recv_exact(sock, HEADER.size)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame length {length} exceeds {MAX_FRAME_BYTES}")
    payload = _recv_exact(sock, length)
    return payload if payload is not None else b""


def record_to_entry(rec: ApRecord) -> dict[str, Any]:
    return {
        "t": rec.timestamp,
        "bssid": rec.bssid,
        "ssid": rec.ssid,
        "lat_deg": degrees_exact(rec.location.lat),
        "lon_deg": degrees_exact(rec.location.lon),
        "range_m": rec.range_m,
        "auth": rec.auth,
    }


def entry_to_record(entry: Any) -> ApRecord:
    """Validate one upload entry; raises ValueError with a reason."""
    if not isinstance(entry, dict):
        raise ValueError("entry must be an object")
    missing = [k for k in ("t", "bssid", "ssid", "lat_deg", "lon_deg", "range_m") if k not in entry]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    t = entry["t"]
    if isinstance(t, bool) or not isinstance(t, int):
        raise ValueError("t must be an integer")
    for key in ("lat_deg", "lon_deg", "range_m"):
        v = entry[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValueError(f"{key} must be a finite number")
    if not isinstance(entry["ssid"], str) or not entry["ssid"]:
        raise ValueError("ssid must be a non-empty string")
    if not isinstance(entry["bssid"], str):
        raise ValueError("bssid must be a string")
    auth = entry.get("auth")
    if auth is not None and not isinstance(auth, str):
        raise ValueError("auth must be a string or null")
    if not -90.0 <= entry["lat_deg"] <= 90.0:
        raise ValueError("lat_deg outside [-90, 90]")
    if not entry["range_m"] > 0:
        raise ValueError("range_m must be positive")
    bssid = canonical_bssid(entry["bssid"])
    loc = GeoPoint.from_degrees(float(entry["lat_deg"]), float(entry["lon_deg"]))
    return ApRecord(t, entry["ssid"], bssid, loc, float(entry["range_m"]), auth)


class _Handler(socketserver.BaseRequestHandler):
    server: "_TCPServer"

    def handle(self) -> None:
        sock: socket.socket = self.request
        while True:
            try:
                payload = read_frame_bytes(sock)
            except FrameError as exc:
                # the stream cannot be resynchronized after a bad length
                self._send({"error": str(exc)})
                return
            except (ConnectionError, OSError):
                return
            if payload is None:
                return
            reply = self.server.service.dispatch(payload)
            if not self._send(reply):
                return

    def _send(self, message: dict) -> bool:
        try:
            self.request.sendall(encode_frame(message))
            return True
        except OSError:
            return False


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, service: "SharingService"):
        self.service = service
        super().__init__(address, _Handler)


@dataclass
class SharingService:
    """Serves a :class:`Registry` to concurrent sessions.

    Uploads and queries both take ``lock``: writes are serialized and a
    query never sees a half-applied upload batch.
    """

    registry: Registry = field(default_factory=Registry)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def dispatch(self, payload: bytes) -> dict:
        try:
            message = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return {"error": f"malformed JSON: {exc}"}
        if not isinstance(message, dict):
            return {"error": "message must be a JSON object"}
        op = message.get("op")
        if op == "upload":
            return self.handle_upload(message)
        if op == "nearest":
            return self.handle_nearest(message)
        return {"error": f"unknown op {op!r}"}

    def handle_upload(self, message: dict) -> dict:
        entries = message.get("entries")
        if not isinstance(entries, list):
            return {"error": "entries must be a list"}
        accepted: list[ApRecord] = []
        rejected = []
        for i, entry in enumerate(entries):
            try:
                accepted.append(entry_to_record(entry))
            except ValueError as exc:
                rejected.append({"index": i, "reason": str(exc)})
        with self.lock:
            for rec in accepted:
                self.registry.insert(rec)
        return {"ok": len(accepted), "rejected": rejected}

    def handle_nearest(self, message: dict) -> dict:
        lat, lon, k = message.get("lat_deg"), message.get("lon_deg"), message.get("max_results")
        for name, v in (("lat_deg", lat), ("lon_deg", lon)):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                return {"error": f"{name} must be a finite number"}
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            return {"error": "max_results must be a positive integer"}
        if not -90.0 <= lat <= 90.0:
            return {"error": "lat_deg outside [-90, 90]"}
        p = GeoPoint.from_degrees(float(lat), float(lon))
        with self.lock:
            hits = self.registry.nearest_k(p, k) if len(self.registry) else []
        return {"results": [{**record_to_entry(rec), "distance_m": d} for rec, d in hits]}


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


class RunningService:
    """A bound service; ``start()`` serves from a background thread."""

    def __init__(self, bind_address: str, registry: Registry | None = None):
        self.service = SharingService(registry if registry is not None else Registry())
        self._server = _TCPServer(parse_endpoint(bind_address), self.service)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "RunningService":
        self._thread = threading.Thread(target=self._server.serve_forever, args=(POLL_INTERVAL_S,),
                                        name="sharing-service", daemon=True)
        self._thread.start()
        logger.info("sharing service listening on %s", self.address)
        return self

    def serve_forever(self) -> None:
        logger.info("sharing service listening on %s", self.address)
        self._server.serve_forever(POLL_INTERVAL_S)

    def shutdown(self) -> None:
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
        self._server.server_close()

    def __enter__(self) -> "RunningService":
        return self.start() if self._thread is None else self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(bind_address: str, registry: Registry | None = None) -> RunningService:
    """Bind and start serving in the background."""
    return RunningService(bind_address, registry).start()


@dataclass
class UploadAck:
    ok: int
    rejected: list[dict]


class SharingClient:
    """Blocking request/reply client over one persistent connection."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            host, port = parse_endpoint(self.endpoint)
            try:
                self._sock = socket.create_connection((host, port), timeout=self.timeout)
            except OSError as exc:
                raise TransportError(f"cannot reach {self.endpoint}: {exc}") from exc
        return self._sock

    def request(self, message: dict) -> dict:
        sock = self._connect()
        try:
            sock.sendall(encode_frame(message))
            payload = read_frame_bytes(sock)
        except (OSError, ConnectionError) as exc:
            self.close()
            raise TransportError(f"{self.endpoint}: {exc}") from exc
        except FrameError as exc:
            self.close()
            raise ProtocolError(str(exc)) from exc
        if payload is None:
            self.close()
            raise TransportError(f"{self.endpoint} closed the connection")
        reply = json.loads(payload.decode("utf-8"))
        if "error" in reply:
            raise ProtocolError(reply["error"])
        return reply

    def upload(self, entries: Iterable[ApRecord | dict]) -> UploadAck:
        wire = [record_to_entry(e) if isinstance(e, ApRecord) else e for e in entries]
        reply = self.request({"op": "upload", "entries": wire})
        return UploadAck(reply["ok"], reply["rejected"])

    def nearest(self, position: GeoPoint, max_results: int = 1) -> list[tuple[ApRecord, float]]:
        reply = self.request({
            "op": "nearest",
            "lat_deg": degrees_exact(position.lat),
            "lon_deg": degrees_exact(position.lon),
            "max_results": max_results,
        })
        return [(entry_to_record(r), r["distance_m"]) for r in reply["results"]]

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> "SharingClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def client_upload(endpoint: str, entries: Iterable[ApRecord | dict]) -> UploadAck:
    with SharingClient(endpoint) as client:
        return client.upload(entries)


def client_nearest(endpoint: str, position: GeoPoint, max_results: int = 1) -> list[tuple[ApRecord, float]]:
    with SharingClient(endpoint) as client:
        return client.nearest(position, max_results)


class RemoteMatcher:
    """Nearest-AP lookups answered by a sharing service (simulator hook)."""

    remote = True

    def __init__(self, endpoint: str):
        self.client = SharingClient(endpoint)

    def nearest(self, p: GeoPoint) -> tuple[ApRecord, float]:
        hits = self.client.nearest(p, 1)
        if not hits:
            raise NoKnownAp("sharing service knows no AP")
        return hits[0]

    def upload(self, rec: ApRecord) -> None:
        self.client.upload([rec])

    def close(self) -> None:
        self.client.close()

    def __enter__(self) -> "RemoteMatcher":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
