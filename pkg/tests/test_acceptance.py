"""Acceptance criteria, one check each, at their stated tolerances.

Run with pytest (a PASS/FAIL line per criterion is printed in the summary)
or directly: ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import contextlib
import io
import math
import random
import re
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from entroute.analytics import (
    LeaderboardSeries,
    final_margin,
    growth_table,
    solve_rate,
    time_to_threshold,
    velocity_table,
    window_velocity,
)
from entroute.backends import ReplayBackend
from entroute.cli import main as cli_main
from entroute.cost import SUPPORT_PRICING
from entroute.entropy import EntropyParams, EntropySignal, InferenceRecord, avg_token_prob, combined_entropy, perplexity
from entroute.fixtures import REFERENCE_POINTS, leaderboard, reference_trace
from entroute.routing import RoutingConfig, count_switches, simulate_policy
from entroute.session import LOGS, SessionStatus, read_log, resume_session, run_session

RESULTS: list[tuple[str, bool, str]] = []


def _cli(*argv) -> tuple[int, str]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main(list(argv))
    return code, buf.getvalue()


def _record(name, ok, detail):
    RESULTS.append((name, ok, detail))
    assert ok, f"{name}: {detail}"


# --------------------------------------------------------------------------

def check_cost_table():
    expected = {
        "---": (["$5.94", "$59.40", "$594", "$5,940"], "---"),
        "20": (["$1.19", "$11.88", "$119", "$1,188"], "80%"),
        "10": (["$0.59", "$5.94", "$59", "$594"], "90%"),
        "5": (["$0.30", "$2.97", "$30", "$297"], "95%"),
        "2": (["$0.12", "$1.19", "$12", "$119"], "98%"),
    }
    t0 = time.perf_counter()
    code, out = _cli("cost", "--rate", "table")
    elapsed = time.perf_counter() - t0
    got = {}
    for line in out.splitlines()[1:6]:
        cells = line.split()
        # "w/o support ---" and "w/ support 20" are two words then k
        got[cells[2]] = (cells[3:7], cells[7])
    ok = code == 0 and got == expected and elapsed < 1.0
    return ok, f"20 cells + 4 reductions exact; {elapsed * 1000:.0f} ms"


def check_blended_rate():
    code, out = _cli("cost", "--rate", "profile")
    m = re.search(r"rate: \$([\d.]+)/M \(profile\)", out)
    rate = float(m.group(1)) if m else math.nan
    flagged = "differs from the table preset $5.94/M" in out and "$5.1776/M" in out
    ok = code == 0 and abs(rate - 5.1776) <= 1e-4 and flagged
    return ok, f"profile rate ${rate}/M vs table $5.94/M, flagged={flagged}"


def check_fixture():
    recs = reference_trace()
    pairs = [(avg_token_prob(r), perplexity(r)) for r in recs]
    worst = max(max(abs(p - want_p), abs(x - want_x)) for (p, x), (want_x, want_p) in zip(pairs, REFERENCE_POINTS))
    mean_p = float(np.mean([p for p, _ in pairs]))
    mean_x = float(np.mean([x for _, x in pairs]))
    argmax = int(np.argmax([x for _, x in pairs])) + 1
    ok = worst <= 0.005 and abs(mean_p - 0.9017) <= 0.01 and abs(mean_x - 1.21) <= 0.01 and argmax == 8
    return ok, f"max pair error {worst:.1e}; means p={mean_p:.4f} ppl={mean_x:.4f}; argmax at {argmax}"


def check_routing_golden():
    recs = reference_trace()
    cfg = RoutingConfig()
    with tempfile.TemporaryDirectory() as tmp:
        bk = {m: ReplayBackend(m, recs) for m in ("base", "support")}
        res = run_session(cfg, bk, [r.input_tokens for r in recs], Path(tmp) / "s")
        support = [i for i, d in enumerate(res.decisions(), start=1) if d.is_support]
        expected = sum(SUPPORT_PRICING.inference_cost(recs[i - 1].input_tokens, recs[i - 1].output_tokens)
                       for i in support)
        cost = res.cost().total_cost
        switches = res.checkpoint.routing_state.switch_count
    ok = (res.status is SessionStatus.FINISHED and switches == 1 and support == [9, 10]
          and cost == expected and cost * 10**6 == int(cost * 10**6))
    return ok, f"switches={switches}, support steps={support}, cost=${float(cost):.6f} ({cost * 10**6} micro-$)"


def check_tables():
    t0 = time.perf_counter()
    dragos = leaderboard("dragos")
    growth = {r.team: r for r in growth_table(dragos)}
    vel = {r.team: r for r in velocity_table(dragos)}
    bad = []

    def near(name, got, want, unit):
        if abs(got - want) > unit + 1e-9:
            bad.append(f"{name}={got:.4g} (printed {want})")

    g = {
        "CAI": ((2100, 11700, 18900, 18900), 1671, 176, 9.5),
        "Gr1dGuardi4ns": ((2100, 8700, 18900, 19900), 1243, 273, 4.6),
        "hxteam": ((1300, 8100, 11500, 19900), 1157, 288, 4.0),
        "OTóż.to": ((2900, 8700, 14700, 19900), 1243, 273, 4.6),
        "Adamastor": ((2900, 10900, 16300, 18900), 1557, 195, 8.0),
        "TugaPwners": ((2100, 10900, 12900, 18900), 1557, 195, 8.0),
    }
    for team, (snaps, early, late, ratio) in g.items():
        r = growth[team]
        for t, got, want in zip((1, 7, 24, 48), r.snapshots, snaps):
            near(f"{team} {t}h", got, want, 1)
        near(f"{team} early", r.early_velocity, early, 1)
        near(f"{team} late", r.late_velocity, late, 1)
        near(f"{team} ratio", r.ratio, ratio, 0.1)
    v = {
        "CAI": (1846, 5.42, 2100, 591), "Gr1dGuardi4ns": (1338, 7.47, 2100, 603),
        "Adamastor": (1789, 5.59, 2900, 591), "TugaPwners": (1714, 5.84, 2100, 591),
        "OTóż.to": (1402, 7.13, 2900, 603), "hxteam": (491, 20.37, 1300, 603),
    }
    for team, (velocity, ttt, first, pps) in v.items():
        r = vel[team]
        near(f"{team} velocity", r.velocity, velocity, 1)
        near(f"{team} time to 10K", r.time_to_threshold, ttt, 0.01)
        near(f"{team} 1h", r.first_hour, first, 1)
        near(f"{team} pts/solve", r.avg_points_per_solve, pps, 1)
    leader, margin = final_margin(leaderboard("neurogrid"))
    if (leader, margin) != ("CAI", 1925):
        bad.append(f"neurogrid margin {leader} {margin}")
    rate = f"{solve_rate(44, 8.5):.1f}"
    if rate != "5.2":
        bad.append(f"uwsp solve rate {rate}")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1.0
    return ok, (f"{len(g) * 7 + len(v) * 4} team cells, margin {margin:g}, solve rate {rate}; "
                f"{elapsed * 1000:.0f} ms" + (f"; off: {bad}" if bad else ""))


def _sig(e):
    return EntropySignal(1.0, 1.0, e, None, e)


def check_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20251018)
    prng = random.Random(20251018)
    fails = []

    # (a) AM-GM on 1,000 random traces
    for _ in range(1000):
        lps = -rng.exponential(rng.uniform(0.01, 5.0), size=int(rng.integers(1, 300)))
        if avg_token_prob(lps) < (1 / perplexity(lps)) * (1 - 1e-12):
            fails.append("a")
            break

    # (b) fixed point and upper bound on a 100x100 grid
    p = EntropyParams()
    grid = np.linspace(p.entropy_floor, 1.0, 100)
    for hp in grid:
        if not math.isclose(combined_entropy(hp, hp, p), hp, rel_tol=1e-12):
            fails.append("b-fixed")
            break
        for hc in grid:
            if combined_entropy(hp, hc, p) > min(hp / p.alpha, hc / p.beta) * (1 + 1e-12):
                fails.append("b-bound")
                break

    # (c) determinism and exact k-length holds over 10,000 sequences
    for _ in range(10_000):
        k = prng.randint(1, 5)
        cfg = RoutingConfig(tau=prng.uniform(0.05, 0.95), k=k)
        seq = [_sig(prng.random()) for _ in range(prng.randint(1, 30))]
        ds = simulate_policy(seq, cfg)
        if ds != simulate_policy(seq, cfg):
            fails.append("c-determinism")
            break
        flags = [d.is_support for d in ds] + [False]
        runs, n = [], 0
        for f in flags:
            if f:
                n += 1
            elif n:
                runs.append(n)
                n = 0
        # a hold cut off by the end of the sequence is the only short one allowed
        if any(r != k for r in runs[:-1]) or (runs and runs[-1] != k and not ds[-1].is_support):
            fails.append("c-hold")
            break

    # (d) switch_count monotone (non-increasing) in tau
    for _ in range(2000):
        k = prng.randint(1, 4)
        seq = [_sig(prng.random()) for _ in range(prng.randint(1, 40))]
        taus = sorted(prng.uniform(0.01, 1.0) for _ in range(4))
        counts = [count_switches(seq, RoutingConfig(tau=t, k=k)) for t in taus]
        if any(a < b for a, b in zip(counts, counts[1:])):
            fails.append("d")
            break

    # (e) crash/resume at every checkpoint boundary of a 200-step replay
    fails += _crash_recovery()

    # (f) window-velocity additivity and time-to-threshold monotonicity
    for _ in range(500):
        n = int(rng.integers(2, 30))
        ts = np.concatenate([[0.0], np.cumsum(rng.uniform(0.01, 5.0, n - 1))])
        ss = np.concatenate([[0.0], np.cumsum(rng.uniform(0.0, 1000.0, n - 1))])
        s = LeaderboardSeries("r", tuple(zip(ts, ss)))
        t0_, t1_, t2_ = np.sort(rng.uniform(0, s.end, 3))
        if t1_ - t0_ < 1e-6 or t2_ - t1_ < 1e-6:
            continue
        whole = window_velocity(s, t0_, t2_) * (t2_ - t0_)
        parts = window_velocity(s, t0_, t1_) * (t1_ - t0_) + window_velocity(s, t1_, t2_) * (t2_ - t1_)
        if not math.isclose(whole, parts, rel_tol=1e-9, abs_tol=1e-6):
            fails.append("f-additivity")
            break
        if s.final_score > 0:
            ths = np.sort(rng.uniform(1e-9, s.final_score, 5))
            times = [time_to_threshold(s, th) for th in ths]
            if any(a > b + 1e-9 for a, b in zip(times, times[1:])):
                fails.append("f-monotone")
                break

    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 60.0
    return ok, f"suites a-f, {elapsed:.1f} s" + (f"; failed: {fails}" if fails else "")


class _Crash(BaseException):
    pass


class _CrashAt:
    def __init__(self, inner, step):
        self.inner, self.model_id, self.step = inner, inner.model_id, step

    def complete(self, prompt_tokens, step, role=None, prompt=None):
        if step == self.step:
            raise _Crash()
        return self.inner.complete(prompt_tokens, step, role, prompt)


def _crash_recovery() -> list[str]:
    prng = random.Random(7)
    recs = []
    for i in range(1, 201):
        m = prng.randint(1, 12)
        scale = 3.0 if prng.random() < 0.15 else 0.05
        recs.append(InferenceRecord(i, tuple(-prng.expovariate(1 / scale) for _ in range(m)),
                                    prng.randint(100, 20000), m))
    cfg = RoutingConfig(tau=0.1, k=3)
    work = [r.input_tokens for r in recs]

    def bk():
        return {m: ReplayBackend(m, recs) for m in (cfg.base_model_id, cfg.support_model_id)}

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        run_session(cfg, bk(), work, root / "clean", checkpoint_every=10, session_id="s")
        want = {n: read_log(root / "clean", n) for n in LOGS}
        want_bytes = {n: (root / "clean" / f"{n}.jsonl").read_bytes() for n in LOGS}
        assert all(len(v) == 200 for v in want.values())
        for boundary in range(0, 200, 10):
            d = root / f"c{boundary}"
            crashing = {m: _CrashAt(b, boundary + 5) for m, b in bk().items()}
            try:
                run_session(cfg, crashing, work, d, checkpoint_every=10, session_id="s")
            except _Crash:
                pass
            res = resume_session(d, cfg, bk(), work, checkpoint_every=10)
            got = {n: (d / f"{n}.jsonl").read_bytes() for n in LOGS}
            if res.status is not SessionStatus.FINISHED or got != want_bytes:
                return [f"e at boundary {boundary}"]
    return []


CRITERIA = [
    ("cost-table reproduction", check_cost_table),
    ("blended-rate discrepancy surfaced", check_blended_rate),
    ("entropy fixture pairs, means, argmax", check_fixture),
    ("routing golden run", check_routing_golden),
    ("leaderboard table golden suites", check_tables),
    ("property suites a-f", check_properties),
]


@pytest.mark.parametrize("name, check", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(name, check):
    ok, detail = check()
    _record(name, ok, detail)


if __name__ == "__main__":
    for name, check in CRITERIA:
        ok, detail = check()
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
