"""
Entropy signals and the routing policy on the reference trace
=============================================================

Walk the ten bundled inferences, compute each uncertainty signal, and
watch the router hand two inferences to the support model.
"""
from __future__ import annotations

import numpy as np

from entroute import EntropyParams, RoutingConfig, compute_signal, simulate_policy
from entroute.fixtures import reference_trace
from entroute.routing import calibrate_tau

records = reference_trace()
signals = [compute_signal(r) for r in records]

# perplexity and mean token probability, one row per inference
for r, s in zip(records, signals):
    print(f"step {r.sequence_id:2d}  ppl {s.perplexity:.3f}  avg p {s.avg_token_prob:.3f}  h_p {s.h_p:.5f}")

ppl = np.array([s.perplexity for s in signals])
print("mean perplexity", ppl.mean().round(3), "peak at step", ppl.argmax() + 1)

# thresholds that fire once, at step 8
interval = calibrate_tau([s.e_combined for s in signals], trigger_at=8)
print(f"tau in ({interval.lower:.5f}, {interval.upper:.5f}]")

decisions = simulate_policy(signals, RoutingConfig())
print([d.model_id for d in decisions])

# a larger vocabulary shrinks h_p, so the same tau no longer fires
wide = EntropyParams(vocab_size=2**24)
print(max(compute_signal(r, wide).h_p for r in records) < RoutingConfig().tau)

# with a task confidence attached, the harmonic mean leans on the more confident signal
sig = compute_signal(records[7].__class__(8, records[7].token_logprobs, 13953, 125, task_confidence=0.98))
print(f"h_p {sig.h_p:.4f}  h_c {sig.h_c:.4f}  combined {sig.e_combined:.4f}")
