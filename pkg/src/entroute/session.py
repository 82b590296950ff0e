"""Long-running routed sessions with checkpoint/resume.

A session directory holds::

    config.json        routing config, pricing and session id (written once)
    trace.jsonl        one inference record per step, in the trace format
    decisions.jsonl    {"step", "model_id", "reason"}
    entropy.jsonl      {"step", signal fields..., "event"}
    cost.jsonl         {"step", "model_id", "cost", "cumulative"}
    checkpoint.json    latest durable checkpoint

Logs are append-only and written one line per step. A checkpoint names the
byte length and SHA-256 of every log prefix it covers, and is replaced
atomically (temp file + rename). Anything past those offsets was written
after the last checkpoint and is dropped on resume, so a resumed session
reproduces the uninterrupted one byte for byte on deterministic backends.
"""
from __future__ import annotations

import contextlib
import datetime as _dt
import hashlib
import json
import logging
import os
import tempfile
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from .backends import Backend, record_to_dict
from .cost import CostAccumulator, CostReport, PricingModel, default_pricing
from .entropy import EntropySignal, Role, compute_signal
from .errors import (
    BackendError,
    BackendUnavailable,
    ConfigMismatch,
    CorruptCheckpoint,
    DomainError,
    SessionError,
    TraceExhausted,
)
from .routing import Reason, RouteDecision, RoutingConfig, RoutingState, decide_next, observe

try:
    import fcntl
except ImportError:  # pragma: no cover - non-POSIX
    fcntl = None

log = logging.getLogger(__name__)

LOGS = ("trace", "decisions", "entropy", "cost")
DEFAULT_CHECKPOINT_EVERY = 25
CHECKPOINT_FILE = "checkpoint.json"
CONFIG_FILE = "config.json"


class SessionStatus(str, Enum):
    RUNNING = "running"
    FINISHED = "finished"
    HALTED = "halted"


class ExitCode:
    FINISHED = 0
    HALTED = 3
    CORRUPT = 4


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    backoff_multiplier: float = 2.0
    retryable_errors: tuple[type[BaseException], ...] = (BackendUnavailable,)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise DomainError("max_attempts must be >= 1")
        if self.backoff_multiplier < 1:
            raise DomainError("backoff_multiplier must be >= 1")
        if self.base_delay < 0:
            raise DomainError("base_delay must be nonnegative")

    def is_retryable(self, exc: BaseException) -> bool:
        return isinstance(exc, self.retryable_errors)

    def delay(self, attempt: int) -> float:
        """Sleep before attempt ``attempt + 1`` (``attempt`` is 1-based)."""
        return self.base_delay * self.backoff_multiplier ** (attempt - 1)


@dataclass(frozen=True)
class WorkStep:
    """Opaque unit of work; the runtime only forwards it to the backend."""

    prompt_tokens: int
    prompt: Optional[str] = None


@dataclass(frozen=True)
class SessionCheckpoint:
    session_id: str
    routing_state: RoutingState
    inference_log_offset: int
    log_offsets: dict
    log_digests: dict
    cost_accumulator: CostAccumulator
    config_hash: str
    created_at: str
    status: SessionStatus = SessionStatus.RUNNING

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "status": self.status.value,
            "routing_state": self.routing_state.to_dict(),
            "inference_log_offset": self.inference_log_offset,
            "log_offsets": dict(self.log_offsets),
            "log_digests": dict(self.log_digests),
            "cost_accumulator": self.cost_accumulator.to_dict(),
            "config_hash": self.config_hash,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionCheckpoint":
        return cls(
            session_id=d["session_id"],
            routing_state=RoutingState.from_dict(d["routing_state"]),
            inference_log_offset=d["inference_log_offset"],
            log_offsets=dict(d["log_offsets"]),
            log_digests=dict(d["log_digests"]),
            cost_accumulator=CostAccumulator.from_dict(d["cost_accumulator"]),
            config_hash=d["config_hash"],
            created_at=d["created_at"],
            status=SessionStatus(d.get("status", "running")),
        )

    @property
    def cost_report(self) -> CostReport:
        return self.cost_accumulator.report()


@dataclass
class SessionResult:
    status: SessionStatus
    checkpoint: SessionCheckpoint
    session_dir: Path
    error: Optional[BaseException] = None
    attempts: int = 0  # backend calls made by this run, retries included

    @property
    def exit_code(self) -> int:
        return ExitCode.FINISHED if self.status is SessionStatus.FINISHED else ExitCode.HALTED

    def decisions(self) -> list[RouteDecision]:
        return [RouteDecision(d["model_id"], Reason(d["reason"])) for d in read_log(self.session_dir, "decisions")]

    def signals(self) -> list[Optional[EntropySignal]]:
        out = []
        for d in read_log(self.session_dir, "entropy"):
            sig = d.get("signal")
            out.append(None if sig is None else EntropySignal(**sig))
        return out

    def cost(self) -> CostReport:
        return self.checkpoint.cost_report


def read_log(session_dir: Union[str, os.PathLike], name: str) -> list[dict]:
    path = Path(session_dir) / f"{name}.jsonl"
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    with contextlib.suppress(OSError):
        dfd = os.open(path.parent, os.O_RDONLY)
        try:
            os.fsync(dfd)
        finally:
            os.close(dfd)


class _Log:
    """Append-only line log with a running digest of everything written."""

    def __init__(self, path: Path, offset: int = 0):
        self.path = path
        self.sha = hashlib.sha256()
        if offset:
            with open(path, "rb") as fh:
                remaining = offset
                while remaining:
                    chunk = fh.read(min(remaining, 1 << 20))
                    if not chunk:
                        break
                    self.sha.update(chunk)
                    remaining -= len(chunk)
        self.offset = offset
        self.fh = open(path, "ab")

    def append(self, line: str) -> None:
        data = line.encode("utf-8")
        self.fh.write(data)
        self.fh.flush()
        self.sha.update(data)
        self.offset += len(data)

    def sync(self) -> None:
        self.fh.flush()
        os.fsync(self.fh.fileno())

    def close(self) -> None:
        self.fh.close()


def _prefix_digest(path: Path, offset: int) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        remaining = offset
        while remaining:
            chunk = fh.read(min(remaining, 1 << 20))
            if not chunk:
                break
            sha.update(chunk)
            remaining -= len(chunk)
    return sha.hexdigest()


def _as_work(work: Sequence[Union[WorkStep, int]]) -> list[WorkStep]:
    return [w if isinstance(w, WorkStep) else WorkStep(int(w)) for w in work]


class Session:
    """One session directory and its single writer.

    Use :func:`run_session` / :func:`resume_session` rather than constructing
    this directly.
    """

    def __init__(self, session_dir, config: RoutingConfig, backends: Mapping[str, Backend],
                 pricing: Optional[Mapping[str, PricingModel]] = None,
                 retry: RetryPolicy = RetryPolicy(),
                 checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
                 sleep: Callable[[float], None] = time.sleep,
                 write_checkpoint: Optional[Callable[[Path, str], None]] = None):
        if checkpoint_every < 1:
            raise DomainError("checkpoint_every must be >= 1")
        for model_id in (config.base_model_id, config.support_model_id):
            if model_id not in backends:
                raise SessionError(f"no backend registered for {model_id!r}")
        self.dir = Path(session_dir)
        self.config = config
        self.backends = backends
        self.pricing = dict(pricing) if pricing is not None else default_pricing(
            config.base_model_id, config.support_model_id)
        self.retry = retry
        self.checkpoint_every = checkpoint_every
        self.sleep = sleep
        self._write_checkpoint = write_checkpoint or _atomic_write
        self.config_hash = config.digest()
        self.session_id: str = ""
        self.state = RoutingState()
        self.acc = CostAccumulator()
        self.logs: dict[str, _Log] = {}
        self.attempts = 0
        self._lock_fh = None

    # -- lifecycle ---------------------------------------------------------

    def _lock(self) -> None:
        self._lock_fh = open(self.dir / ".lock", "a")
        if fcntl is not None:
            try:
                fcntl.flock(self._lock_fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                self._lock_fh.close()
                self._lock_fh = None
                raise SessionError(f"session {self.dir} is held by another writer") from None

    def _close(self) -> None:
        for lg in self.logs.values():
            lg.close()
        self.logs = {}
        if self._lock_fh is not None:
            self._lock_fh.close()
            self._lock_fh = None

    def create(self, session_id: Optional[str] = None) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        if (self.dir / CHECKPOINT_FILE).exists() or (self.dir / CONFIG_FILE).exists():
            raise SessionError(f"{self.dir} already holds a session; resume it instead")
        self._lock()
        self.session_id = session_id or uuid.uuid4().hex
        snapshot = {
            "session_id": self.session_id,
            "config_hash": self.config_hash,
            "routing": self.config.to_dict(),
            "pricing": {
                m: [str(p.input_price_per_million), str(p.output_price_per_million)]
                for m, p in sorted(self.pricing.items())
            },
            "checkpoint_every": self.checkpoint_every,
        }
        _atomic_write(self.dir / CONFIG_FILE, json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
        for name in LOGS:
            (self.dir / f"{name}.jsonl").write_bytes(b"")
            self.logs[name] = _Log(self.dir / f"{name}.jsonl")
        self.checkpoint(SessionStatus.RUNNING)

    def load(self) -> SessionCheckpoint:
        path = self.dir / CHECKPOINT_FILE
        if not path.exists():
            raise CorruptCheckpoint(f"no checkpoint in {self.dir}")
        try:
            ckpt = SessionCheckpoint.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptCheckpoint(f"unreadable checkpoint: {exc}") from None
        if ckpt.config_hash != self.config_hash:
            raise ConfigMismatch(
                f"checkpoint was taken under config {ckpt.config_hash[:12]}, live config is {self.config_hash[:12]}"
            )
        self._lock()
        for name in LOGS:
            p = self.dir / f"{name}.jsonl"
            want = ckpt.log_offsets.get(name)
            if want is None or not p.exists() or p.stat().st_size < want:
                raise CorruptCheckpoint(f"{name} log is shorter than its checkpointed offset")
            if _prefix_digest(p, want) != ckpt.log_digests.get(name):
                raise CorruptCheckpoint(f"{name} log prefix was modified after checkpoint")
        with open(self.dir / "trace.jsonl", "rb") as fh:
            lines = fh.read(ckpt.log_offsets["trace"]).count(b"\n")
        if lines != ckpt.inference_log_offset:
            raise CorruptCheckpoint(
                f"trace log holds {lines} records, checkpoint expects {ckpt.inference_log_offset}")
        for name in LOGS:
            p = self.dir / f"{name}.jsonl"
            if p.stat().st_size > ckpt.log_offsets[name]:
                log.info("dropping uncheckpointed tail of %s", p.name)
                with open(p, "r+b") as fh:
                    fh.truncate(ckpt.log_offsets[name])
            self.logs[name] = _Log(p, ckpt.log_offsets[name])
        self.session_id = ckpt.session_id
        self.state = ckpt.routing_state
        self.acc = ckpt.cost_accumulator
        return ckpt

    def checkpoint(self, status: SessionStatus) -> SessionCheckpoint:
        for lg in self.logs.values():
            lg.sync()
        ckpt = SessionCheckpoint(
            session_id=self.session_id,
            routing_state=self.state,
            inference_log_offset=self.state.step,
            log_offsets={n: lg.offset for n, lg in self.logs.items()},
            log_digests={n: lg.sha.hexdigest() for n, lg in self.logs.items()},
            cost_accumulator=CostAccumulator(**vars(self.acc)),
            config_hash=self.config_hash,
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            status=status,
        )
        self._write_checkpoint(self.dir / CHECKPOINT_FILE, json.dumps(ckpt.to_dict(), indent=2) + "\n")
        self.last_checkpoint = ckpt
        return ckpt

    # -- the loop ----------------------------------------------------------

    def _call(self, backend: Backend, work: WorkStep, step: int, role: Role):
        attempt = 0
        while True:
            attempt += 1
            self.attempts += 1
            try:
                return backend.complete(work.prompt_tokens, step, role, work.prompt)
            except BaseException as exc:
                if not self.retry.is_retryable(exc) or attempt >= self.retry.max_attempts:
                    raise
                delay = self.retry.delay(attempt)
                log.warning("step %d: %s (attempt %d/%d), retrying in %.2fs",
                            step, exc, attempt, self.retry.max_attempts, delay)
                self.sleep(delay)

    def run(self, work: Sequence[Union[WorkStep, int]]) -> SessionResult:
        work = _as_work(work)
        try:
            while self.state.step < len(work):
                step = self.state.step + 1
                decision = decide_next(self.state, self.config)
                role = Role.SUPPORT if decision.is_support else Role.BASE
                try:
                    result = self._call(self.backends[decision.model_id], work[step - 1], step, role)
                except (BackendError, TraceExhausted) as exc:
                    log.error("step %d halted: %s", step, exc)
                    ckpt = self.checkpoint(SessionStatus.HALTED)
                    return SessionResult(SessionStatus.HALTED, ckpt, self.dir, exc, self.attempts)
                self._commit(step, decision, result.record)
                if step % self.checkpoint_every == 0 and step < len(work):
                    try:
                        self.checkpoint(SessionStatus.RUNNING)
                    except OSError as exc:
                        log.error("checkpoint write failed at step %d: %s", step, exc)
                        return SessionResult(SessionStatus.HALTED, self.last_checkpoint, self.dir, exc,
                                             self.attempts)
            try:
                ckpt = self.checkpoint(SessionStatus.FINISHED)
            except OSError as exc:
                return SessionResult(SessionStatus.HALTED, self.last_checkpoint, self.dir, exc, self.attempts)
            return SessionResult(SessionStatus.FINISHED, ckpt, self.dir, None, self.attempts)
        finally:
            self._close()

    def _commit(self, step: int, decision: RouteDecision, record) -> None:
        record = record.with_role(Role.SUPPORT if decision.is_support else Role.BASE)
        if record.sequence_id != step:
            record = type(record)(step, record.token_logprobs, record.input_tokens,
                                  record.output_tokens, record.task_confidence, record.role)
        signal = compute_signal(record, self.config.entropy_params) if record.token_logprobs else None
        before = self.state
        after = observe(before, signal, self.config)
        if after.switch_count > before.switch_count:
            event = Reason.TRIGGERED.value
        elif after.released:
            event = "released"
        else:
            event = None
        cost = self.acc.add(decision, record, self.pricing)
        self.logs["trace"].append(_dumps(record_to_dict(record)))
        self.logs["decisions"].append(_dumps(
            {"step": step, "model_id": decision.model_id, "reason": decision.reason.value}))
        self.logs["entropy"].append(_dumps(
            {"step": step, "signal": None if signal is None else signal.to_dict(), "event": event}))
        self.logs["cost"].append(_dumps(
            {"step": step, "model_id": decision.model_id, "cost": str(cost),
             "cumulative": str(self.acc.total_cost)}))
        self.state = after


def run_session(config: RoutingConfig, backends: Mapping[str, Backend],
                work: Sequence[Union[WorkStep, int]], session_dir, *,
                retry: RetryPolicy = RetryPolicy(),
                checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
                pricing: Optional[Mapping[str, PricingModel]] = None,
                session_id: Optional[str] = None,
                sleep: Callable[[float], None] = time.sleep,
                write_checkpoint=None) -> SessionResult:
    """Start a new session in ``session_dir`` and run it over ``work``.

    Per step: decide the model, complete (retrying retryable backend errors),
    compute the entropy signal, update the router, meter the cost and append
    to the logs. A checkpoint is written every ``checkpoint_every`` steps and
    at the end. Backend failures that survive the retry policy halt the
    session with a resumable checkpoint instead of raising.
    """
    s = Session(session_dir, config, backends, pricing, retry, checkpoint_every, sleep, write_checkpoint)
    try:
        s.create(session_id)
    except BaseException:
        s._close()
        raise
    return s.run(work)


def resume_session(session_dir, config: RoutingConfig, backends: Mapping[str, Backend],
                   work: Sequence[Union[WorkStep, int]], *,
                   retry: RetryPolicy = RetryPolicy(),
                   checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
                   pricing: Optional[Mapping[str, PricingModel]] = None,
                   sleep: Callable[[float], None] = time.sleep,
                   write_checkpoint=None) -> SessionResult:
    """Continue a session from its latest checkpoint.

    Raises :class:`ConfigMismatch` if ``config`` differs from the one the
    session was started with, and :class:`CorruptCheckpoint` if the logs do
    not cover the checkpointed offsets.
    """
    s = Session(session_dir, config, backends, pricing, retry, checkpoint_every, sleep, write_checkpoint)
    try:
        s.load()
    except BaseException:
        s._close()
        raise
    return s.run(work)


def load_checkpoint(session_dir) -> SessionCheckpoint:
    path = Path(session_dir) / CHECKPOINT_FILE
    return SessionCheckpoint.from_dict(json.loads(path.read_text(encoding="utf-8")))
