"""Bundled reference data and the code that builds it.

* ``reference_trace.jsonl``: ten inference records whose perplexity and
  mean token probability match a published entropy-dynamics plot. Each
  record has 125 output tokens split into two probability levels.
  :func:`two_level_logprobs` solves for the levels.
* ``dragos.csv``, ``neurogrid.csv``, ``uwsp.csv``: leaderboard series
  (``team,t_hours,score[,solves]``). See ``data/PROVENANCE.md`` for how each
  was transcribed or reconstructed.
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Sequence

from scipy.optimize import brentq

from .analytics import LeaderboardSeries, load_leaderboard
from .backends import load_trace, write_trace
from .entropy import InferenceRecord
from .errors import DomainError

# (perplexity, mean token probability) per inference, as plotted
REFERENCE_POINTS: tuple[tuple[float, float], ...] = (
    (1.14, 0.92), (1.12, 0.95), (1.11, 0.94), (1.12, 0.93), (1.11, 0.93),
    (1.09, 0.95), (1.21, 0.91), (1.52, 0.78), (1.40, 0.81), (1.29, 0.87),
)
REFERENCE_INPUT_TOKENS = 13953
REFERENCE_OUTPUT_TOKENS = 125


def data_path(name: str) -> Path:
    return Path(str(resources.files("entroute") / "data" / name))


def reference_trace_path() -> Path:
    return data_path("reference_trace.jsonl")


def _two_level_solutions(perplexity: float, avg_prob: float, n_tokens: int):
    """Yield ``(n_low, p_low, p_high)`` splits hitting both targets exactly."""
    log_target = -n_tokens * math.log(perplexity)
    for n_low in range(1, n_tokens):
        n_high = n_tokens - n_low

        def p_high(x):
            return (n_tokens * avg_prob - n_low * x) / n_high

        def gap(x):
            return n_low * math.log(x) + n_high * math.log(p_high(x)) - log_target

        lo = max(1e-300, (n_tokens * avg_prob - n_high) / n_low)
        hi = avg_prob * (1 - 1e-15)
        if lo >= hi or gap(lo) * gap(hi) > 0:
            continue
        x = brentq(gap, lo, hi, xtol=1e-16, rtol=4 * 2.220446049250313e-16)
        yield n_low, x, p_high(x)


def two_level_logprobs(perplexity: float, avg_prob: float, n_tokens: int = REFERENCE_OUTPUT_TOKENS
                       ) -> tuple[float, ...]:
    """Logprobs of ``n_tokens`` tokens with the given perplexity and mean probability.

    The tokens take two probability levels. Of the feasible split sizes the
    median one is used, which keeps both levels away from 0 and 1.
    """
    if not 1.0 <= perplexity:
        raise DomainError("perplexity must be >= 1")
    if not 1.0 / perplexity <= avg_prob <= 1.0:
        raise DomainError("mean probability must lie in [1/perplexity, 1] (AM-GM)")
    sols = list(_two_level_solutions(perplexity, avg_prob, n_tokens))
    if not sols:
        raise DomainError(f"no two-level split of {n_tokens} tokens hits ({perplexity}, {avg_prob})")
    n_low, p_low, p_high = sols[len(sols) // 2]
    return (math.log(p_low),) * n_low + (math.log(p_high),) * (n_tokens - n_low)


def build_reference_trace(points: Sequence[tuple[float, float]] = REFERENCE_POINTS) -> list[InferenceRecord]:
    return [
        InferenceRecord(
            sequence_id=i,
            token_logprobs=two_level_logprobs(ppl, avg),
            input_tokens=REFERENCE_INPUT_TOKENS,
            output_tokens=REFERENCE_OUTPUT_TOKENS,
        )
        for i, (ppl, avg) in enumerate(points, start=1)
    ]


def write_reference_trace(path) -> None:
    write_trace(path, build_reference_trace())


def reference_trace() -> list[InferenceRecord]:
    return load_trace(reference_trace_path())


def leaderboard(name: str) -> list[LeaderboardSeries]:
    """Bundled leaderboard by event name: ``dragos``, ``neurogrid`` or ``uwsp``."""
    path = data_path(f"{name}.csv")
    if not path.exists():
        raise FileNotFoundError(f"no bundled leaderboard named {name!r}")
    return load_leaderboard(path)


FIELD_SIZES = {"dragos": 1200, "neurogrid": 155, "uwsp": 635}
