"""JSON request/response transport to external models.

An adapter spec is either ``extern:<command>`` (one JSON object on stdin,
one on stdout) or ``http:<url>`` (JSON POST to ``<url>/<route>``).  Each
handle allows one request in flight at a time.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

import requests

DEFAULT_TIMEOUT = 30.0


class AdapterError(RuntimeError):
    pass


class AdapterTimeout(AdapterError):
    pass


class AdapterProtocolError(AdapterError):
    pass


@dataclass
class AdapterSpec:
    kind: str  # "extern" or "http"
    target: str
    timeout: float = DEFAULT_TIMEOUT
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @classmethod
    def parse(cls, spec: str, timeout: float = DEFAULT_TIMEOUT) -> "AdapterSpec":
        kind, sep, target = spec.partition(":")
        if not sep or kind not in ("extern", "http") or not target:
            raise ValueError(f"adapter spec must be extern:<cmd> or http:<url>, got {spec!r}")
        if kind == "http" and not target.startswith(("http://", "https://")):
            target = "http://" + target.lstrip("/")
        return cls(kind, target, timeout)

    def call(self, route: str, payload: dict) -> dict:
        with self._lock:
            if self.kind == "extern":
                return self._call_process(payload)
            return self._call_http(route, payload)

    def _call_process(self, payload):
        try:
            proc = subprocess.run(shlex.split(self.target), input=json.dumps(payload, ensure_ascii=False),
                                  capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            raise AdapterTimeout(f"{self.target!r} did not answer within {self.timeout}s") from None
        except OSError as exc:
            raise AdapterError(f"cannot run {self.target!r}: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterProtocolError(f"{self.target!r} exited with {proc.returncode}: {proc.stderr.strip()}")
        return _decode(proc.stdout)

    def _call_http(self, route, payload):
        url = self.target.rstrip("/")
        if not url.endswith("/" + route):
            url += "/" + route
        try:
            resp = requests.post(url, json=payload, timeout=self.timeout)
        except requests.Timeout:
            raise AdapterTimeout(f"{url} did not answer within {self.timeout}s") from None
        except requests.RequestException as exc:
            raise AdapterError(f"cannot reach {url}: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterProtocolError(f"{url} returned HTTP {resp.status_code}")
        return _decode(resp.text)


def _decode(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AdapterProtocolError(f"adapter returned invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise AdapterProtocolError("adapter response is not a JSON object")
    return obj
