"""Newline-delimited JSON request/response over a subprocess pipe or a TCP socket.

One request per line, one response per line. Responses are ``{"result": ...}``
or ``{"error": "Type: message"}``. Clients time out each request and retry
once on a fresh connection before giving up.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import socket
import socketserver
import subprocess
import sys
import threading
from typing import Callable, Optional

__all__ = [
    "WireError",
    "RemoteCallError",
    "PipeTransport",
    "SocketTransport",
    "serve_lines",
    "serve_stdio",
    "make_socket_server",
    "transport_from_endpoint",
]

logger = logging.getLogger(__name__)


class WireError(RuntimeError):
    """Transport failure: timeout, dead peer or unparseable response line."""


class RemoteCallError(RuntimeError):
    """The peer answered with an ``error`` record."""

    def __init__(self, message: str):
        super().__init__(message)
        self.kind, _, self.detail = message.partition(": ")


def _decode(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"response is not JSON: {exc}") from None
    if not isinstance(msg, dict) or not ({"result", "error"} & msg.keys()):
        raise WireError("response must be an object with 'result' or 'error'")
    return msg


class _Transport:
    def __init__(self, timeout: float = 60.0, retries: int = 1):
        self.timeout = float(timeout)
        self.retries = int(retries)
        self._lock = threading.Lock()

    def _exchange(self, line: str) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def _reset(self):  # pragma: no cover - abstract
        pass

    def request(self, payload: dict):
        """Send ``payload`` and return the ``result`` field of the reply."""
        line = json.dumps(payload, sort_keys=False) + "\n"
        last = None
        with self._lock:
            for attempt in range(self.retries + 1):
                try:
                    msg = _decode(self._exchange(line))
                    break
                except (WireError, OSError) as exc:
                    last = exc
                    logger.warning("wire request failed (attempt %d): %s", attempt + 1, exc)
                    self._reset()
            else:
                raise WireError(f"request failed after {self.retries + 1} attempts: {last}")
        if "error" in msg:
            raise RemoteCallError(str(msg["error"]))
        return msg["result"]

    def close(self):
        self._reset()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class PipeTransport(_Transport):
    """Talk to a child process over its stdin/stdout."""

    def __init__(self, argv, timeout: float = 60.0, retries: int = 1):
        super().__init__(timeout, retries)
        self.argv = list(argv)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: Optional[queue.Queue] = None

    def _start(self):
        self._proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        self._lines = queue.Queue()
        proc, lines = self._proc, self._lines

        def pump():
            for ln in proc.stdout:
                lines.put(ln)
            lines.put(None)

        threading.Thread(target=pump, daemon=True).start()

    def _exchange(self, line: str) -> str:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise WireError(f"peer closed the pipe: {exc}") from None
        try:
            reply = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise WireError(f"no response within {self.timeout:g}s") from None
        if reply is None:
            raise WireError("peer exited")
        return reply

    def _reset(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                pass
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
        self._proc = None


class SocketTransport(_Transport):
    """Talk to a line server on ``host:port``."""

    def __init__(self, host: str, port: int, timeout: float = 60.0, retries: int = 1):
        super().__init__(timeout, retries)
        self.host, self.port = host, int(port)
        self._sock = None
        self._file = None

    def _exchange(self, line: str) -> str:
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        try:
            self._file.write(line)
            self._file.flush()
            reply = self._file.readline()
        except socket.timeout:
            raise WireError(f"no response within {self.timeout:g}s") from None
        if not reply:
            raise WireError("connection closed by peer")
        return reply

    def _reset(self):
        for obj in (self._file, self._sock):
            if obj is not None:
                try:
                    obj.close()
                except OSError:
                    pass
        self._sock = self._file = None


def transport_from_endpoint(endpoint: str, timeout: float = 60.0, retries: int = 1) -> _Transport:
    """``tcp://host:port`` or ``pipe:<shell-words command>``."""
    if endpoint.startswith("tcp://"):
        host, _, port = endpoint[len("tcp://"):].rpartition(":")
        return SocketTransport(host or "127.0.0.1", int(port), timeout, retries)
    if endpoint.startswith("pipe:"):
        return PipeTransport(shlex.split(endpoint[len("pipe:"):]), timeout, retries)
    raise ValueError(f"endpoint must start with tcp:// or pipe:, got {endpoint!r}")


def _handle(handler: Callable[[dict], object], line: str) -> str:
    try:
        req = json.loads(line)
        if not isinstance(req, dict):
            raise ValueError("request must be a JSON object")
        reply = {"result": handler(req)}
    except Exception as exc:  # every failure becomes an error record
        reply = {"error": f"{type(exc).__name__}: {exc}"}
    return json.dumps(reply) + "\n"


def serve_lines(handler: Callable[[dict], object], infile, outfile) -> int:
    """Answer requests from ``infile`` until EOF. Returns the request count."""
    n = 0
    for line in infile:
        if not line.strip():
            continue
        outfile.write(_handle(handler, line))
        outfile.flush()
        n += 1
    return n


def serve_stdio(handler: Callable[[dict], object]) -> int:
    return serve_lines(handler, sys.stdin, sys.stdout)


def make_socket_server(handler: Callable[[dict], object], host: str = "127.0.0.1",
                       port: int = 0) -> socketserver.ThreadingTCPServer:
    """A threading TCP server; call ``serve_forever`` (port 0 picks a free one)."""

    class _Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                line = raw.decode("utf-8")
                if line.strip():
                    self.wfile.write(_handle(handler, line).encode("utf-8"))
                    self.wfile.flush()

    socketserver.ThreadingTCPServer.allow_reuse_address = True
    server = socketserver.ThreadingTCPServer((host, port), _Handler)
    server.daemon_threads = True
    return server
