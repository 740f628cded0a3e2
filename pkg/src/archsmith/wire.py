"""Line-delimited JSON request/response over a subprocess or TCP socket.

Addresses:

* ``cmd:<shell-style command>`` spawns the command and talks over its
  stdin/stdout.
* ``tcp://host:port`` connects to a listening socket.

Each request is one UTF-8 JSON object terminated by ``\\n``; each response is
one line back.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from typing import Any

from .errors import TransportError

_EOF = object()


class JsonLineChannel:
    """One bidirectional newline-framed JSON stream."""

    def __init__(self, address: str, timeout: float | None = 60.0):
        self.address = address
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        self._lines: queue.Queue = queue.Queue()
        if address.startswith("cmd:"):
            argv = shlex.split(address[4:])
            if not argv:
                raise TransportError("empty command in address")
            try:
                self._proc = subprocess.Popen(
                    argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                    bufsize=1,
                )
            except OSError as exc:
                raise TransportError(f"cannot start {argv[0]!r}: {exc}") from exc
            self._writer = self._proc.stdin
            reader = self._proc.stdout
        elif address.startswith("tcp://"):
            host, _, port = address[6:].rpartition(":")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as exc:
                raise TransportError(f"cannot connect to {address}: {exc}") from exc
            self._sock.settimeout(None)
            self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")
            reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        else:
            raise TransportError(f"unsupported address {address!r} (use cmd:... or tcp://host:port)")
        # A reader thread lets readline() honour a timeout on pipes and sockets alike.
        self._thread = threading.Thread(target=self._pump, args=(reader,), daemon=True)
        self._thread.start()

    def _pump(self, reader) -> None:
        try:
            for line in reader:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(_EOF)

    def send_line(self, text: str) -> None:
        try:
            self._writer.write(text + "\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"write to {self.address} failed: {exc}") from exc

    def read_line(self) -> str:
        """Next line without its terminator; ``TimeoutError`` if none arrives."""
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise TimeoutError(f"no response from {self.address} within {self.timeout}s") from None
        if line is _EOF:
            self._lines.put(_EOF)
            raise TransportError(f"{self.address} closed the stream")
        return line.rstrip("\r\n")

    def request(self, payload: dict[str, Any]) -> str:
        """Send one request and return the raw response line."""
        self.send_line(json.dumps(payload, sort_keys=True, ensure_ascii=False))
        return self.read_line()

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin and not self._proc.stdin.closed:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            if self._proc.stdout:
                self._proc.stdout.close()
        if self._sock is not None:
            try:
                self._writer.close()
            except OSError:
                pass
            self._sock.close()

    def __enter__(self) -> JsonLineChannel:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
