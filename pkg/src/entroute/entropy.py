"""Token-level and task-level uncertainty signals for a single inference.

Four quantities are derived from one model call:

* perplexity, the geometric-mean inverse probability of the output tokens;
* the normalized token entropy ``h_p = ln(perplexity) / ln(vocab_size)``;
* the binary Shannon entropy ``h_c`` of a self-reported task confidence,
  rescaled by ``ln 2`` so it shares the ``[0, 1]`` scale of ``h_p``;
* their weighted harmonic mean ``(alpha/h_p + beta/h_c) ** -1``.

Both entropies are clamped below by ``entropy_floor`` so the harmonic mean
never divides by zero. When no task confidence is available the combined
value falls back to ``h_p``.

Everything here is a pure function; records and signals are immutable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, EmptySequence, MalformedTrace

DEFAULT_VOCAB_SIZE = 131072
DEFAULT_ENTROPY_FLOOR = 1e-9
LN2 = math.log(2.0)


class Role(str, Enum):
    BASE = "base"
    SUPPORT = "support"


@dataclass(frozen=True)
class InferenceRecord:
    """One completed model call as seen by the router."""

    sequence_id: int
    token_logprobs: tuple[float, ...]
    input_tokens: int
    output_tokens: int
    task_confidence: Optional[float] = None
    role: Role = Role.BASE

    def __post_init__(self):
        lps = tuple(float(x) for x in self.token_logprobs)
        object.__setattr__(self, "token_logprobs", lps)
        object.__setattr__(self, "role", Role(self.role))
        for i, lp in enumerate(lps):
            if not math.isfinite(lp) or lp > 0.0:
                raise MalformedTrace(
                    f"token_logprobs[{i}] = {lp!r} is not a finite value <= 0",
                    field="token_logprobs",
                )
        for name in ("input_tokens", "output_tokens"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise MalformedTrace(f"{name} must be a nonnegative integer, got {value!r}", field=name)
        if lps and self.output_tokens != len(lps):
            raise MalformedTrace(
                f"output_tokens = {self.output_tokens} but {len(lps)} logprobs recorded",
                field="output_tokens",
            )
        c = self.task_confidence
        if c is not None and not (0.0 <= c <= 1.0):
            raise MalformedTrace(f"task_confidence {c!r} outside [0, 1]", field="task_confidence")

    def with_role(self, role: Role | str) -> "InferenceRecord":
        return InferenceRecord(
            self.sequence_id, self.token_logprobs, self.input_tokens,
            self.output_tokens, self.task_confidence, Role(role),
        )


@dataclass(frozen=True)
class EntropyParams:
    """Weights and scale for the combined entropy.

    ``alpha`` and ``beta`` are rescaled to sum to one on construction.
    """

    alpha: float = 0.7
    beta: float = 0.3
    vocab_size: int = DEFAULT_VOCAB_SIZE
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must both be positive")
        if self.vocab_size < 2:
            raise DomainError("vocab_size must be at least 2")
        if not (0.0 < self.entropy_floor <= 1e-3):
            raise DomainError("entropy_floor must lie in (0, 1e-3]")
        total = self.alpha + self.beta
        object.__setattr__(self, "alpha", self.alpha / total)
        object.__setattr__(self, "beta", self.beta / total)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "vocab_size": self.vocab_size,
            "entropy_floor": self.entropy_floor,
        }


@dataclass(frozen=True)
class EntropySignal:
    perplexity: float
    avg_token_prob: float
    h_p: float
    h_c: Optional[float]
    e_combined: float

    def __post_init__(self):
        if not self.perplexity >= 1.0:
            raise DomainError(f"perplexity {self.perplexity!r} < 1")
        if not (0.0 <= self.h_p <= 1.0):
            raise DomainError(f"h_p {self.h_p!r} outside [0, 1]")
        if self.h_c is not None and not (0.0 <= self.h_c <= 1.0):
            raise DomainError(f"h_c {self.h_c!r} outside [0, 1]")
        if not self.e_combined >= 0.0:
            raise DomainError(f"e_combined {self.e_combined!r} < 0")

    def to_dict(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "avg_token_prob": self.avg_token_prob,
            "h_p": self.h_p,
            "h_c": self.h_c,
            "e_combined": self.e_combined,
        }


def _logprob_array(record: InferenceRecord | Sequence[float]) -> np.ndarray:
    lps = record.token_logprobs if isinstance(record, InferenceRecord) else record
    arr = np.asarray(lps, dtype=np.float64)
    if arr.size == 0:
        raise EmptySequence("perplexity is undefined for an empty token sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr > 0.0):
        raise MalformedTrace("logprobs must be finite and <= 0", field="token_logprobs")
    return arr


def perplexity(record: InferenceRecord | Sequence[float]) -> float:
    """``exp(-mean(logprob))`` over the output tokens; always >= 1."""
    arr = _logprob_array(record)
    return max(1.0, math.exp(-math.fsum(arr) / arr.size))


def avg_token_prob(record: InferenceRecord | Sequence[float]) -> float:
    """Arithmetic mean of the per-token probabilities."""
    arr = _logprob_array(record)
    return float(np.mean(np.exp(arr)))


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def normalized_entropy(perplexity: float, params: EntropyParams = EntropyParams()) -> float:
    if not perplexity >= 1.0:
        raise DomainError(f"perplexity must be >= 1, got {perplexity!r}")
    h = math.log(perplexity) / math.log(params.vocab_size)
    return _clamp(h, params.entropy_floor, 1.0)


def confidence_entropy(c: float, params: EntropyParams = EntropyParams()) -> float:
    """Binary entropy of ``c`` in bits (``0 ln 0 = 0``), clamped to ``[floor, 1]``."""
    if not (0.0 <= c <= 1.0):
        raise DomainError(f"confidence must lie in [0, 1], got {c!r}")
    h = 0.0
    for p in (c, 1.0 - c):
        if p > 0.0:
            h -= p * math.log(p)
    return _clamp(h / LN2, params.entropy_floor, 1.0)


def combined_entropy(h_p: float, h_c: Optional[float], params: EntropyParams = EntropyParams()) -> float:
    if h_c is None:
        return h_p
    lo = params.entropy_floor
    # tolerate one ulp of drift from upstream arithmetic
    if not (lo * (1 - 1e-12) <= h_p <= 1.0 + 1e-12) or not (lo * (1 - 1e-12) <= h_c <= 1.0 + 1e-12):
        raise DomainError(f"entropies must lie in [{lo}, 1]; got h_p={h_p!r}, h_c={h_c!r}")
    return 1.0 / (params.alpha / h_p + params.beta / h_c)


def compute_signal(record: InferenceRecord, params: EntropyParams = EntropyParams()) -> EntropySignal:
    """Derive the full uncertainty tuple for one inference."""
    ppl = perplexity(record)
    h_p = normalized_entropy(ppl, params)
    h_c = None if record.task_confidence is None else confidence_entropy(record.task_confidence, params)
    return EntropySignal(
        perplexity=ppl,
        avg_token_prob=avg_token_prob(record),
        h_p=h_p,
        h_c=h_c,
        e_combined=combined_entropy(h_p, h_c, params),
    )
