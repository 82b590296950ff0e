from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroute.entropy import (
    EntropyParams,
    InferenceRecord,
    Role,
    avg_token_prob,
    combined_entropy,
    compute_signal,
    confidence_entropy,
    normalized_entropy,
    perplexity,
)
from entroute.errors import DomainError, EmptySequence, MalformedTrace
from entroute.fixtures import REFERENCE_POINTS, reference_trace

LN_V = math.log(131072)


def rec(lps, confidence=None, step=1):
    return InferenceRecord(step, tuple(lps), 100, len(lps), confidence)


# hand-computed oracles

def test_perplexity_uniform_tokens():
    # every token at p = 0.5 -> perplexity exactly 2
    assert perplexity([math.log(0.5)] * 7) == pytest.approx(2.0, rel=1e-15)


def test_perplexity_mixed_tokens():
    lps = [math.log(0.9), math.log(0.1)]
    # exp(-mean(ln p)) = 1/sqrt(0.09)
    assert perplexity(lps) == pytest.approx(1 / 0.3, rel=1e-14)
    assert avg_token_prob(lps) == pytest.approx(0.5, rel=1e-14)


def test_perplexity_certain_is_one():
    assert perplexity([0.0, 0.0, 0.0]) == 1.0
    assert avg_token_prob([0.0]) == 1.0


def test_empty_sequence_rejected():
    with pytest.raises(EmptySequence):
        perplexity([])
    with pytest.raises(EmptySequence):
        avg_token_prob([])


def test_normalized_entropy_vocab_scaling():
    assert normalized_entropy(131072.0) == pytest.approx(1.0)
    assert normalized_entropy(2.0) == pytest.approx(1 / 17)
    assert normalized_entropy(math.sqrt(131072)) == pytest.approx(0.5)
    # perplexity 1 floors at epsilon rather than hitting 0
    assert normalized_entropy(1.0) == EntropyParams().entropy_floor
    # perplexities above |V| clamp to 1
    assert normalized_entropy(1e9) == 1.0
    with pytest.raises(DomainError):
        normalized_entropy(0.99)


def test_confidence_entropy_values():
    assert confidence_entropy(0.5) == pytest.approx(1.0)
    # H(0.11) in bits
    expected = -(0.11 * math.log2(0.11) + 0.89 * math.log2(0.89))
    assert confidence_entropy(0.11) == pytest.approx(expected)
    assert confidence_entropy(0.0) == EntropyParams().entropy_floor
    assert confidence_entropy(1.0) == EntropyParams().entropy_floor
    assert confidence_entropy(0.3) == pytest.approx(confidence_entropy(0.7))
    with pytest.raises(DomainError):
        confidence_entropy(1.2)


def test_combined_entropy_harmonic():
    p = EntropyParams(0.7, 0.3)
    assert combined_entropy(0.2, 0.4, p) == pytest.approx(1 / (0.7 / 0.2 + 0.3 / 0.4))
    # missing confidence falls back to h_p
    assert combined_entropy(0.2, None, p) == 0.2


def test_params_normalize_weights():
    p = EntropyParams(7, 3)
    assert p.alpha == pytest.approx(0.7) and p.beta == pytest.approx(0.3)
    with pytest.raises(DomainError):
        EntropyParams(0, 1)
    with pytest.raises(DomainError):
        EntropyParams(vocab_size=1)


def test_record_validation_names_field():
    with pytest.raises(MalformedTrace) as ei:
        rec([0.1])
    assert ei.value.field == "token_logprobs"
    with pytest.raises(MalformedTrace) as ei:
        rec([-0.1], confidence=1.5)
    assert ei.value.field == "task_confidence"
    with pytest.raises(MalformedTrace) as ei:
        InferenceRecord(1, (-0.1, -0.2), 10, 3)
    assert ei.value.field == "output_tokens"
    with pytest.raises(MalformedTrace):
        rec([float("nan")])
    with pytest.raises(MalformedTrace):
        InferenceRecord(1, (-0.1,), -1, 1)


def test_with_role_keeps_content():
    r = rec([-0.2, -0.3]).with_role("support")
    assert r.role is Role.SUPPORT and r.token_logprobs == (-0.2, -0.3)


def test_signal_with_confidence():
    s = compute_signal(rec([math.log(0.5)] * 4, confidence=0.5))
    h_p = math.log(2) / LN_V
    assert s.h_p == pytest.approx(h_p)
    assert s.h_c == pytest.approx(1.0)
    assert s.e_combined == pytest.approx(1 / (0.7 / h_p + 0.3 / 1.0))


# reference trace

def test_reference_trace_pairs():
    records = reference_trace()
    assert len(records) == 10
    for r, (ppl, avg) in zip(records, REFERENCE_POINTS):
        assert perplexity(r) == pytest.approx(ppl, abs=1e-9)
        assert avg_token_prob(r) == pytest.approx(avg, abs=1e-9)


def test_reference_step8_entropy():
    sig = [compute_signal(r) for r in reference_trace()]
    assert sig[7].h_p == pytest.approx(math.log(1.52) / LN_V, rel=1e-9)
    assert sig[7].h_p == pytest.approx(0.03554, abs=1e-4)
    assert sig[6].h_p == pytest.approx(0.016177, abs=1e-6)
    assert int(np.argmax([s.e_combined for s in sig])) == 7


# properties

logprob_lists = st.lists(st.floats(min_value=-20.0, max_value=0.0, allow_nan=False), min_size=1, max_size=200)


@settings(max_examples=1000, deadline=None)
@given(logprob_lists)
def test_am_gm(lps):
    assert avg_token_prob(lps) >= 1 / perplexity(lps) * (1 - 1e-12)


@settings(max_examples=300, deadline=None)
@given(logprob_lists)
def test_signal_ranges(lps):
    s = compute_signal(rec(lps))
    assert s.perplexity >= 1
    assert 0 < s.avg_token_prob <= 1
    assert EntropyParams().entropy_floor <= s.h_p <= 1


@settings(max_examples=300, deadline=None)
@given(logprob_lists, st.floats(min_value=-5.0, max_value=0.0))
def test_perplexity_monotone_under_shift(lps, shift):
    # lowering every logprob cannot lower perplexity
    shifted = [x + shift for x in lps]
    assert perplexity(shifted) >= perplexity(lps) * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.05, max_value=20.0))
def test_combined_weight_normalization(alpha, scale):
    a = EntropyParams(alpha, 1 - alpha)
    b = EntropyParams(alpha * scale, (1 - alpha) * scale)
    assert combined_entropy(0.3, 0.6, a) == pytest.approx(combined_entropy(0.3, 0.6, b))


def test_combined_grid_fixed_point_and_bound():
    p = EntropyParams()
    grid = np.linspace(1e-6, 1.0, 100)
    for h in grid:
        assert combined_entropy(h, h, p) == pytest.approx(h, rel=1e-12)
    for hp in grid:
        for hc in grid:
            e = combined_entropy(hp, hc, p)
            assert e <= min(hp / p.alpha, hc / p.beta) * (1 + 1e-12)
            assert min(hp, hc) * (1 - 1e-12) <= e <= max(hp, hc) * (1 + 1e-12)
