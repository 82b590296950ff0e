"""Entropy-gated routing between a cheap base model and a premium support model."""
from __future__ import annotations

from .analytics import (
    LeaderboardSeries,
    early_late_ratio,
    final_margin,
    growth_table,
    load_leaderboard,
    percentile_for_rank,
    rank_trajectory,
    solve_rate,
    time_to_threshold,
    velocity_table,
    velocity_to_threshold,
    window_velocity,
)
from .backends import LiveBackend, ReplayBackend, load_trace, write_trace
from .cost import CostReport, PricingModel, TokenProfile, blended_rate, cost_table, project_cost, session_cost
from .entropy import (
    EntropyParams,
    EntropySignal,
    InferenceRecord,
    Role,
    avg_token_prob,
    combined_entropy,
    compute_signal,
    confidence_entropy,
    normalized_entropy,
    perplexity,
)
from .errors import (
    EntrouteError,
    DomainError,
    EmptySequence,
    MalformedTrace,
    AlignmentError,
    TraceExhausted,
    BackendError,
    BackendUnavailable,
    BackendRejected,
    LogprobsUnsupported,
    OutOfRange,
    NotReached,
    SessionError,
    ConfigMismatch,
    CorruptCheckpoint,
)
from .routing import (
    Reason,
    RouteDecision,
    RoutingConfig,
    RoutingState,
    calibrate_tau,
    count_switches,
    decide_next,
    observe,
    simulate_policy,
)
from .session import ExitCode, RetryPolicy, SessionStatus, WorkStep, resume_session, run_session

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BackendError",
    "BackendRejected",
    "BackendUnavailable",
    "ConfigMismatch",
    "CorruptCheckpoint",
    "CostReport",
    "DomainError",
    "EmptySequence",
    "EntropyParams",
    "EntropySignal",
    "EntrouteError",
    "ExitCode",
    "InferenceRecord",
    "LeaderboardSeries",
    "LiveBackend",
    "LogprobsUnsupported",
    "MalformedTrace",
    "NotReached",
    "OutOfRange",
    "PricingModel",
    "Reason",
    "ReplayBackend",
    "RetryPolicy",
    "Role",
    "RouteDecision",
    "RoutingConfig",
    "RoutingState",
    "SessionError",
    "SessionStatus",
    "TokenProfile",
    "TraceExhausted",
    "WorkStep",
    "avg_token_prob",
    "blended_rate",
    "calibrate_tau",
    "combined_entropy",
    "compute_signal",
    "confidence_entropy",
    "cost_table",
    "count_switches",
    "decide_next",
    "early_late_ratio",
    "final_margin",
    "growth_table",
    "load_leaderboard",
    "load_trace",
    "normalized_entropy",
    "observe",
    "percentile_for_rank",
    "perplexity",
    "project_cost",
    "rank_trajectory",
    "resume_session",
    "run_session",
    "session_cost",
    "simulate_policy",
    "solve_rate",
    "time_to_threshold",
    "velocity_table",
    "velocity_to_threshold",
    "window_velocity",
    "write_trace",
]
