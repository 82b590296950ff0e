"""Base/support switching policy.

The router runs the cheap base model by default. When a base-model signal
meets the trigger condition it hands the next ``k`` inferences to the support
model, then returns to the base model and evaluates again. Signals produced
during a hold are recorded but never trigger.

State transitions are pure: ``observe`` returns a new :class:`RoutingState`.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .entropy import EntropyParams, EntropySignal
from .errors import DomainError, EmptySequence

# Inside the interval that fires exactly once on the bundled 10-step trace
# (inference 8) under default EntropyParams; see ``calibrate_tau``.
DEFAULT_TAU = 0.03
DEFAULT_K = 2


class Reason(str, Enum):
    BELOW_THRESHOLD = "below_threshold"
    TRIGGERED = "triggered"  # entropy-log event only; decide_next reports holds as HOLDING
    HOLDING = "holding"
    RE_EVALUATING = "re_evaluating"


@dataclass(frozen=True)
class RoutingConfig:
    tau: float = DEFAULT_TAU
    k: int = DEFAULT_K
    trigger_on_high: bool = True
    entropy_params: EntropyParams = field(default_factory=EntropyParams)
    base_model_id: str = "base"
    support_model_id: str = "support"

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError("tau must be a positive finite number")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("k must be a positive integer")
        if self.base_model_id == self.support_model_id:
            raise DomainError("base and support model ids must differ")

    def triggers(self, e_combined: float) -> bool:
        # ties count as triggered
        if self.trigger_on_high:
            return e_combined >= self.tau
        return e_combined <= self.tau

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "k": self.k,
            "trigger_on_high": self.trigger_on_high,
            "entropy_params": self.entropy_params.to_dict(),
            "base_model_id": self.base_model_id,
            "support_model_id": self.support_model_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoutingConfig":
        d = dict(d)
        d["entropy_params"] = EntropyParams(**d.get("entropy_params", {}))
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class RoutingState:
    """Live router state. ``remaining == 0`` is base mode, otherwise a support hold."""

    remaining: int = 0
    step: int = 0
    last_signal: Optional[EntropySignal] = None
    switch_count: int = 0
    released: bool = False  # the hold expired on the previous observation

    @property
    def in_hold(self) -> bool:
        return self.remaining > 0

    @property
    def mode(self) -> str:
        return f"SupportHold({self.remaining})" if self.remaining else "BaseMode"

    def to_dict(self) -> dict:
        return {
            "remaining": self.remaining,
            "step": self.step,
            "last_signal": None if self.last_signal is None else self.last_signal.to_dict(),
            "switch_count": self.switch_count,
            "released": self.released,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoutingState":
        sig = d.get("last_signal")
        return cls(
            remaining=d["remaining"],
            step=d["step"],
            last_signal=None if sig is None else EntropySignal(**sig),
            switch_count=d["switch_count"],
            released=d.get("released", False),
        )


@dataclass(frozen=True)
class RouteDecision:
    model_id: str
    reason: Reason

    @property
    def is_support(self) -> bool:
        return self.reason is Reason.HOLDING


def decide_next(state: RoutingState, config: RoutingConfig) -> RouteDecision:
    if state.in_hold:
        return RouteDecision(config.support_model_id, Reason.HOLDING)
    if state.released:
        return RouteDecision(config.base_model_id, Reason.RE_EVALUATING)
    return RouteDecision(config.base_model_id, Reason.BELOW_THRESHOLD)


def observe(state: RoutingState, signal: Optional[EntropySignal], config: RoutingConfig) -> RoutingState:
    """Fold the signal of the inference just completed into the state.

    ``signal`` is None for an inference that produced no output tokens; it
    advances the step and any hold countdown but can never trigger.
    """
    step = state.step + 1
    if state.in_hold:
        remaining = state.remaining - 1
        return RoutingState(remaining, step, signal, state.switch_count, released=remaining == 0)
    if signal is not None and config.triggers(signal.e_combined):
        return RoutingState(config.k, step, signal, state.switch_count + 1)
    return RoutingState(0, step, signal, state.switch_count)


def simulate_policy(signals: Sequence[EntropySignal], config: RoutingConfig) -> list[RouteDecision]:
    """Drive the router over a recorded signal sequence.

    Decision ``i`` is taken before signal ``i`` is observed, so it depends only
    on the signals that precede it.
    """
    if len(signals) == 0:
        raise EmptySequence("simulate_policy needs at least one signal")
    state = RoutingState()
    out = []
    for sig in signals:
        out.append(decide_next(state, config))
        state = observe(state, sig, config)
    return out


def count_switches(signals: Sequence[EntropySignal], config: RoutingConfig) -> int:
    state = RoutingState()
    for sig in signals:
        state = observe(state, sig, config)
    return state.switch_count


@dataclass(frozen=True)
class TauInterval:
    """Thresholds that fire on the trigger step and on no base step before it.

    With ``trigger_on_high`` any ``tau`` in ``(lower, upper]`` works.
    """

    lower: float
    upper: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def __contains__(self, tau: float) -> bool:
        return self.lower < tau <= self.upper


def calibrate_tau(values: Iterable[float], trigger_at: int) -> TauInterval:
    """Admissible high-trigger thresholds for a 1-based ``trigger_at`` step.

    ``values`` are the combined entropies of a recorded session. Steps after
    the trigger are ignored because they fall inside the support hold.
    """
    vals = list(values)
    if not 1 <= trigger_at <= len(vals):
        raise DomainError(f"trigger_at={trigger_at} outside 1..{len(vals)}")
    target = vals[trigger_at - 1]
    before = vals[: trigger_at - 1]
    lower = max(before, default=0.0)
    if lower >= target:
        raise DomainError(
            f"step {trigger_at} entropy {target:.6g} does not exceed earlier maximum {lower:.6g}"
        )
    return TauInterval(lower, target)


def with_tau(config: RoutingConfig, tau: float) -> RoutingConfig:
    return replace(config, tau=tau)
