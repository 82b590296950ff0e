"""Model backends and the line-oriented trace format.

Trace files hold one JSON object per line::

    {"step":8,"role":"base","input_tokens":13953,"output_tokens":125,"logprobs":[...]}

with an optional trailing ``"confidence"`` key. ``dump_record`` writes the
canonical form (fixed key order, no whitespace) so a canonically formatted
file survives ``load_trace`` -> ``write_trace`` byte for byte.

Two backends share the ``complete(prompt_tokens, step, role)`` surface:

``ReplayBackend``
    serves records from a trace, verbatim and deterministically.
``LiveBackend``
    posts a JSON request to an HTTP endpoint. The request always asks for
    per-token logprobs and the response must carry them. Error mapping:

    ==============================  ==========================
    condition                       raised
    ==============================  ==========================
    connection error, timeout       BackendUnavailable
    HTTP 408, 429, 5xx              BackendUnavailable
    any other non-2xx status        BackendRejected
    body is not a JSON object       BackendUnavailable
    ``logprobs`` missing or null    LogprobsUnsupported
    record invariant violated       BackendRejected
    ==============================  ==========================
"""
from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional, Protocol, Sequence

from .entropy import InferenceRecord, Role
from .errors import (
    BackendRejected,
    BackendUnavailable,
    LogprobsUnsupported,
    MalformedTrace,
    TraceExhausted,
)

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class BackendKind(str, Enum):
    LIVE = "live"
    REPLAY = "replay"


@dataclass(frozen=True)
class BackendDescriptor:
    model_id: str
    kind: BackendKind
    endpoint: Optional[str] = None
    trace_path: Optional[str] = None
    price_ref: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if self.kind is BackendKind.LIVE and not self.endpoint:
            raise ValueError(f"live backend {self.model_id!r} needs an endpoint")
        if self.kind is BackendKind.REPLAY and not self.trace_path:
            raise ValueError(f"replay backend {self.model_id!r} needs a trace_path")


@dataclass(frozen=True)
class CompletionResult:
    record: InferenceRecord
    latency_ms: float = 0.0
    truncated: bool = False

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be nonnegative")


class Backend(Protocol):
    model_id: str

    def complete(self, prompt_tokens: int, step: int, role: Role = Role.BASE,
                 prompt: Optional[str] = None) -> CompletionResult: ...


# --------------------------------------------------------------------------
# trace format

def record_to_dict(record: InferenceRecord) -> dict:
    d = {
        "step": record.sequence_id,
        "role": record.role.value,
        "input_tokens": record.input_tokens,
        "output_tokens": record.output_tokens,
        "logprobs": list(record.token_logprobs),
    }
    if record.task_confidence is not None:
        d["confidence"] = record.task_confidence
    return d


def dump_record(record: InferenceRecord) -> str:
    return json.dumps(record_to_dict(record), separators=(",", ":"), allow_nan=False) + "\n"


def record_from_dict(d: dict, *, line: Optional[int] = None) -> InferenceRecord:
    if not isinstance(d, dict):
        raise MalformedTrace("record is not a JSON object", line=line)
    for key in ("step", "input_tokens", "output_tokens", "logprobs"):
        if key not in d:
            raise MalformedTrace(f"missing field {key!r}", line=line, field=key)
    if not isinstance(d["logprobs"], list):
        raise MalformedTrace("logprobs must be an array", line=line, field="logprobs")
    try:
        return InferenceRecord(
            sequence_id=d["step"],
            token_logprobs=tuple(d["logprobs"]),
            input_tokens=d["input_tokens"],
            output_tokens=d["output_tokens"],
            task_confidence=d.get("confidence"),
            role=d.get("role", "base"),
        )
    except MalformedTrace as exc:
        raise MalformedTrace(str(exc), line=line, field=exc.field) from None
    except (TypeError, ValueError) as exc:
        raise MalformedTrace(str(exc), line=line) from None


def parse_record(text: str, *, line: Optional[int] = None) -> InferenceRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedTrace(f"invalid JSON ({exc.msg})", line=line) from None
    return record_from_dict(obj, line=line)


def iter_trace(path: str | os.PathLike) -> Iterator[InferenceRecord]:
    """Stream records from a trace file without reading it whole."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            yield parse_record(text, line=lineno)


def load_trace(path: str | os.PathLike) -> list[InferenceRecord]:
    return list(iter_trace(path))


def write_trace(path: str | os.PathLike, records: Iterable[InferenceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dump_record(rec))


# --------------------------------------------------------------------------
# backends

class ReplayBackend:
    """Serve a recorded trace; step ``n`` (1-based) returns the n-th record."""

    def __init__(self, model_id: str, records: Sequence[InferenceRecord] | str | os.PathLike):
        self.model_id = model_id
        if isinstance(records, (str, os.PathLike)):
            records = load_trace(records)
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def complete(self, prompt_tokens: int, step: int, role: Role = Role.BASE,
                 prompt: Optional[str] = None) -> CompletionResult:
        if not 1 <= step <= len(self.records):
            raise TraceExhausted(f"{self.model_id}: step {step} outside trace of length {len(self.records)}")
        return CompletionResult(self.records[step - 1].with_role(role), latency_ms=0.0)


Transport = Callable[[str, bytes, float], "tuple[int, bytes]"]


def urllib_transport(url: str, payload: bytes, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=payload, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class LiveBackend:
    """HTTP JSON backend.

    Request body: ``model``, ``prompt`` (may be null), ``prompt_tokens``,
    ``step``, ``logprobs: true``. Response body: ``input_tokens``,
    ``output_tokens``, ``logprobs`` (one natural-log value per output token),
    optional ``confidence`` in [0, 1] and ``truncated``.
    """

    def __init__(self, model_id: str, endpoint: str, *, transport: Transport = urllib_transport,
                 timeout: float = 60.0):
        self.model_id = model_id
        self.endpoint = endpoint
        self.transport = transport
        self.timeout = timeout

    def _post(self, body: dict) -> dict:
        payload = json.dumps(body).encode()
        try:
            status, raw = self.transport(self.endpoint, payload, self.timeout)
        except (OSError, TimeoutError) as exc:
            raise BackendUnavailable(f"transport failure: {exc}", backend=self.model_id) from exc
        if status in RETRYABLE_STATUS or 500 <= status < 600:
            raise BackendUnavailable(f"HTTP {status}", backend=self.model_id)
        if not 200 <= status < 300:
            raise BackendRejected(f"HTTP {status}", backend=self.model_id)
        try:
            obj = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            obj = None
        if not isinstance(obj, dict):
            raise BackendUnavailable("response is not a JSON object", backend=self.model_id)
        if obj.get("logprobs") is None:
            raise LogprobsUnsupported("provider returned no per-token logprobs", backend=self.model_id)
        return obj

    def check_capabilities(self) -> None:
        """Probe once before a session starts; rejects providers without logprobs."""
        self._post({"model": self.model_id, "prompt": "ping", "prompt_tokens": 1,
                    "step": 0, "logprobs": True, "probe": True})

    def complete(self, prompt_tokens: int, step: int, role: Role = Role.BASE,
                 prompt: Optional[str] = None) -> CompletionResult:
        t0 = time.perf_counter()
        obj = self._post({"model": self.model_id, "prompt": prompt, "prompt_tokens": prompt_tokens,
                          "step": step, "logprobs": True})
        latency = (time.perf_counter() - t0) * 1000.0
        obj = dict(obj, step=step, role=Role(role).value)
        obj.setdefault("input_tokens", prompt_tokens)
        try:
            record = record_from_dict(obj)
        except MalformedTrace as exc:
            raise BackendRejected(f"invalid completion: {exc}", backend=self.model_id) from None
        return CompletionResult(record, latency_ms=latency, truncated=bool(obj.get("truncated", False)))


def open_backend(descriptor: BackendDescriptor, **kwargs) -> Backend:
    if descriptor.kind is BackendKind.REPLAY:
        return ReplayBackend(descriptor.model_id, descriptor.trace_path)
    return LiveBackend(descriptor.model_id, descriptor.endpoint, **kwargs)


_opened: dict[BackendDescriptor, Backend] = {}


def complete(backend: Backend | BackendDescriptor, prompt_tokens: int, step: int,
             role: Role = Role.BASE) -> CompletionResult:
    """Run one completion against a backend object or a descriptor."""
    if isinstance(backend, BackendDescriptor):
        if backend not in _opened:
            _opened[backend] = open_backend(backend)
        backend = _opened[backend]
    return backend.complete(prompt_tokens, step, role)
