"""``entroute`` command line.

Subcommands: ``cost``, ``replay``, ``route``, ``analyze``, ``calibrate``.
Session commands exit 0 when finished, 3 when halted with a resumable
checkpoint, 4 when the session state is corrupt or the config does not match.
Usage and input errors exit 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import report
from .analytics import (
    final_margin,
    growth_table,
    load_leaderboard,
    plot_data,
    rank_trajectory,
    solve_rate,
    velocity_table,
)
from .backends import LiveBackend, ReplayBackend, load_trace
from .cost import (
    TABLE_KS,
    TABLE_RATE,
    TABLE_VOLUMES,
    PricingModel,
    TokenProfile,
    blended_rate,
    cost_table,
    to_fraction,
)
from .entropy import EntropyParams, compute_signal
from .errors import ConfigMismatch, CorruptCheckpoint, EntrouteError, LogprobsUnsupported, SessionError
from .fixtures import FIELD_SIZES, data_path, reference_trace_path
from .routing import DEFAULT_K, DEFAULT_TAU, RoutingConfig, calibrate_tau
from .session import (
    CHECKPOINT_FILE,
    DEFAULT_CHECKPOINT_EVERY,
    ExitCode,
    RetryPolicy,
    SessionResult,
    WorkStep,
    resume_session,
    run_session,
)

USAGE_ERROR = 2


def _out(text: str) -> None:
    sys.stdout.write(text)


def _csv_list(text: str, conv=float) -> list:
    return [conv(x) for x in text.split(",") if x.strip()]


def _tokens(text: str) -> int:
    """Accept ``1000000``, ``1e6``, ``10M``, ``1B``, ``1,000,000``."""
    t = text.strip().replace(",", "").replace("_", "")
    mult = {"K": 10**3, "M": 10**6, "B": 10**9}.get(t[-1:].upper())
    if mult:
        return int(Fraction(t[:-1]) * mult)
    return int(Fraction(t)) if "e" not in t.lower() else int(float(t))


# --------------------------------------------------------------------------
# cost

def _resolve_rate(args) -> tuple[Fraction, str]:
    profile_rate = blended_rate(
        PricingModel("support", args.input_price, args.output_price),
        TokenProfile(args.input_tokens, args.output_tokens),
    )
    if args.rate == "table":
        return TABLE_RATE, "table preset"
    if args.rate == "profile":
        return profile_rate, "profile"
    return to_fraction(args.rate), "explicit"


def cmd_cost(args) -> int:
    rate, source = _resolve_rate(args)
    profile_rate = blended_rate(
        PricingModel("support", args.input_price, args.output_price),
        TokenProfile(args.input_tokens, args.output_tokens),
    )
    volumes = args.tokens or list(TABLE_VOLUMES)
    ks = args.k or list(TABLE_KS)
    rows = cost_table(rate, volumes, ks)
    differs = profile_rate != TABLE_RATE
    note = (f"profile blended rate {report.format_rate(profile_rate)} "
            f"(${args.input_price}/${args.output_price} per M, "
            f"{args.input_tokens}/{args.output_tokens} tokens) differs from the table preset "
            f"{report.format_rate(TABLE_RATE)}")
    if args.format == "json":
        _out(report.cost_rows_json(
            rows, volumes, rate=float(rate), rate_exact=str(rate), rate_source=source,
            profile_rate=float(profile_rate), table_rate=float(TABLE_RATE), rates_differ=differs))
    elif args.format == "csv":
        _out(report.cost_rows_csv(rows, volumes))
    else:
        _out(report.cost_rows_text(rows, volumes))
        _out(f"\nrate: {report.format_rate(rate)} ({source})\n")
        if differs:
            _out(f"note: {note}\n")
    return 0


# --------------------------------------------------------------------------
# sessions

def _routing_config(args, support_id: str = "support", base_id: str = "base") -> RoutingConfig:
    params = EntropyParams(alpha=args.alpha, beta=args.beta, vocab_size=args.vocab_size)
    return RoutingConfig(tau=args.tau, k=args.k, trigger_on_high=args.trigger == "high",
                         entropy_params=params, base_model_id=base_id, support_model_id=support_id)


def _session_dir(args) -> Path:
    if args.session_dir:
        return Path(args.session_dir)
    d = Path(tempfile.mkdtemp(prefix="entroute-"))
    sys.stderr.write(f"session directory: {d}\n")
    return d


def _pricing(args, config: RoutingConfig) -> dict[str, PricingModel]:
    return {
        config.base_model_id: PricingModel(config.base_model_id, args.base_input_price, args.base_output_price),
        config.support_model_id: PricingModel(config.support_model_id, args.input_price, args.output_price),
    }


def _run(args, config, backends, work, session_dir: Path) -> int:
    retry = RetryPolicy(max_attempts=args.max_attempts, base_delay=args.retry_delay)
    kwargs = dict(retry=retry, checkpoint_every=args.checkpoint_every, pricing=_pricing(args, config))
    try:
        if args.resume or (session_dir / CHECKPOINT_FILE).exists():
            if not args.resume:
                sys.stderr.write(f"error: {session_dir} already holds a session; pass --resume\n")
                return USAGE_ERROR
            result = resume_session(session_dir, config, backends, work, **kwargs)
        else:
            result = run_session(config, backends, work, session_dir, **kwargs)
    except (ConfigMismatch, CorruptCheckpoint) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return ExitCode.CORRUPT
    except SessionError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR
    _summarize(result, args.format)
    return result.exit_code


def _summarize(result: SessionResult, fmt: str) -> None:
    decisions = result.decisions()
    signals = result.signals()
    cost = result.cost()
    acc = result.checkpoint.cost_accumulator
    if fmt == "json":
        _out(json.dumps({
            "status": result.status.value,
            "session_dir": str(result.session_dir),
            "steps": len(decisions),
            "switches": result.checkpoint.routing_state.switch_count,
            "support_steps": [i for i, d in enumerate(decisions, start=1) if d.is_support],
            "cost": str(cost.total_cost),
            "cost_micro_dollars": cost.micro_dollars,
            "error": None if result.error is None else str(result.error),
        }, indent=2) + "\n")
        return
    body = [["step", "model", "reason", "perplexity", "avg p", "h_p", "E"]]
    for i, (d, s) in enumerate(zip(decisions, signals), start=1):
        if s is None:
            vals = ["-"] * 4
        else:
            vals = [f"{s.perplexity:.4f}", f"{s.avg_token_prob:.4f}", f"{s.h_p:.6f}", f"{s.e_combined:.6f}"]
        body.append([str(i), d.model_id, d.reason.value] + vals)
    _out(report.align(body, left=3) if len(body) > 1 else "no steps recorded\n")
    support = [str(i) for i, d in enumerate(decisions, start=1) if d.is_support]
    _out(f"\nstatus: {result.status.value}\n")
    _out(f"switches: {result.checkpoint.routing_state.switch_count}\n")
    _out(f"support steps: {', '.join(support) or 'none'} ({acc.support_inferences} of {acc.inferences})\n")
    _out(f"metered cost: ${float(cost.total_cost):.6f} ({cost.micro_dollars:,} micro-dollars)\n")
    _out(f"session: {result.session_dir}\n")
    if result.error is not None:
        _out(f"halted: {result.error}\n")


def cmd_replay(args) -> int:
    trace_path = Path(args.trace) if args.trace else reference_trace_path()
    records = load_trace(trace_path)
    config = _routing_config(args)
    backends = {
        config.base_model_id: ReplayBackend(config.base_model_id, records),
        config.support_model_id: ReplayBackend(config.support_model_id, records),
    }
    work = [WorkStep(r.input_tokens) for r in records]
    return _run(args, config, backends, work, _session_dir(args))


def cmd_route(args) -> int:
    config = _routing_config(args, support_id=args.support_model, base_id=args.base_model)
    backends = {
        config.base_model_id: LiveBackend(config.base_model_id, args.base_endpoint, timeout=args.timeout),
        config.support_model_id: LiveBackend(config.support_model_id, args.support_endpoint,
                                             timeout=args.timeout),
    }
    if not args.skip_probe:
        for b in backends.values():
            try:
                b.check_capabilities()
            except LogprobsUnsupported as exc:
                sys.stderr.write(f"error: {exc}\n")
                return USAGE_ERROR
    text = Path(args.prompts).read_text(encoding="utf-8")
    prompts = [ln for ln in text.splitlines() if ln.strip()]
    # whitespace tokens are only a size hint; the backend reports real counts
    work = [WorkStep(max(1, len(p.split())), p) for p in prompts]
    return _run(args, config, backends, work, _session_dir(args))


# --------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args) -> int:
    trace_path = Path(args.trace) if args.trace else reference_trace_path()
    params = EntropyParams(alpha=args.alpha, beta=args.beta, vocab_size=args.vocab_size)
    values = [compute_signal(r, params).e_combined for r in load_trace(trace_path)]
    interval = calibrate_tau(values, args.trigger_at)
    if args.format == "json":
        _out(json.dumps({"lower": interval.lower, "upper": interval.upper, "midpoint": interval.midpoint,
                         "default_tau": DEFAULT_TAU, "default_inside": DEFAULT_TAU in interval,
                         "values": values}, indent=2) + "\n")
        return 0
    body = [["step", "E"]] + [[str(i), f"{v:.6f}"] for i, v in enumerate(values, start=1)]
    _out(report.align(body, left=0))
    _out(f"\ntau interval for a single trigger at step {args.trigger_at}: "
         f"({interval.lower:.6f}, {interval.upper:.6f}]\n")
    _out(f"midpoint: {interval.midpoint:.6f}\n")
    inside = "inside" if DEFAULT_TAU in interval else "outside"
    _out(f"default tau {DEFAULT_TAU:g} is {inside} the interval\n")
    return 0


# --------------------------------------------------------------------------
# analyze

METRICS = ("growth", "velocity", "rank", "margin")


def cmd_analyze(args) -> int:
    if args.input:
        series = load_leaderboard(args.input)
        field = args.field_size
    else:
        series = load_leaderboard(data_path(f"{args.fixture}.csv"))
        field = args.field_size or FIELD_SIZES[args.fixture]
    if args.teams:
        keep = set(args.teams)
        series = [s for s in series if s.team in keep]
    metrics = args.metric or ["growth", "velocity"]
    snapshots = args.snapshots or [1.0, args.split, 24.0, args.end]
    machine: dict = {}
    chunks = []

    if "growth" in metrics:
        rows = growth_table(series, split=args.split, end=args.end, snapshots=snapshots)
        machine["growth"] = report.rows_json(rows)
        chunks.append(report.growth_csv(rows, snapshots) if args.format == "csv"
                      else report.growth_text(rows, snapshots, args.split, args.end))
    if "velocity" in metrics:
        rows = velocity_table(series, threshold=args.threshold, first_window=args.first_window)
        machine["velocity"] = report.rows_json(rows)
        chunks.append(report.velocity_csv(rows) if args.format == "csv"
                      else report.velocity_text(rows, args.threshold, args.first_window))
    if "rank" in metrics:
        at = args.at if args.at is not None else max(s.end for s in series)
        entries = rank_trajectory(series, at, field)
        machine["rank"] = {"t": at, "field_size": field, "entries": report.rows_json(entries)}
        chunks.append(f"ranks at {at:g}h, field of {field or len(series)}\n" + report.rank_text(entries))
    if "margin" in metrics:
        team, margin = final_margin(series)
        machine["margin"] = {"leader": team, "margin": margin}
        chunks.append(f"final margin: {team} leads by {margin:,.0f} points\n")
    if args.solve_rate:
        count, hours = args.solve_rate
        rate = solve_rate(count, hours)
        machine["solve_rate"] = rate
        chunks.append(f"solve rate: {count:g} / {hours:g} h = {rate:.1f} per hour\n")

    if args.format == "json":
        _out(json.dumps(machine, indent=2) + "\n")
    else:
        _out("\n".join(chunks))
    if args.emit_plot_data:
        grid = None
        if args.grid_step:
            lo = min(s.entry_time for s in series)
            hi = max(s.end for s in series)
            n = int((hi - lo) / args.grid_step)
            grid = [lo + i * args.grid_step for i in range(n + 1)]
        data = plot_data(series, field_size=field, grid=grid)
        Path(args.emit_plot_data).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
        sys.stderr.write(f"plot data written to {args.emit_plot_data}\n")
    return 0


# --------------------------------------------------------------------------
# parser

def _add_routing_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("routing")
    g.add_argument("--tau", type=float, default=DEFAULT_TAU, help="trigger threshold (default %(default)s)")
    g.add_argument("--k", type=int, default=DEFAULT_K, help="support hold length (default %(default)s)")
    g.add_argument("--trigger", choices=("high", "low"), default="high",
                   help="fire when E >= tau (high) or E <= tau (low)")
    g.add_argument("--vocab-size", type=int, default=131072)
    g.add_argument("--alpha", type=float, default=0.7)
    g.add_argument("--beta", type=float, default=0.3)
    s = p.add_argument_group("session")
    s.add_argument("--session-dir", help="session directory (default: a fresh temp dir)")
    s.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    s.add_argument("--checkpoint-every", type=int, default=DEFAULT_CHECKPOINT_EVERY)
    s.add_argument("--max-attempts", type=int, default=3)
    s.add_argument("--retry-delay", type=float, default=0.5, help="first backoff delay in seconds")
    s.add_argument("--input-price", type=str, default="5", help="support $/M input tokens")
    s.add_argument("--output-price", type=str, default="25", help="support $/M output tokens")
    s.add_argument("--base-input-price", type=str, default="0")
    s.add_argument("--base-output-price", type=str, default="0")
    s.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entroute", description="Entropy-gated base/support model routing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="project deployment cost across token volumes and hold lengths")
    p.add_argument("--tokens", type=_tokens, action="append", help="token volume, e.g. 1M or 1e9 (repeatable)")
    p.add_argument("--k", type=int, action="append", help="hold length (repeatable)")
    p.add_argument("--rate", default="table", help="table, profile, or $/M as a number (default table)")
    p.add_argument("--input-price", type=str, default="5")
    p.add_argument("--output-price", type=str, default="25")
    p.add_argument("--input-tokens", type=str, default="13953")
    p.add_argument("--output-tokens", type=str, default="125")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("replay", help="run a routed session over a recorded trace")
    p.add_argument("--trace", help="trace file (default: bundled reference trace)")
    _add_routing_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("route", help="run a routed session against live HTTP backends")
    p.add_argument("--prompts", required=True, help="file with one prompt per line")
    p.add_argument("--base-endpoint", required=True)
    p.add_argument("--support-endpoint", required=True)
    p.add_argument("--base-model", default="base")
    p.add_argument("--support-model", default="support")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--skip-probe", action="store_true", help="do not probe for logprob support first")
    _add_routing_flags(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("analyze", help="leaderboard velocity and rank metrics")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="CSV with team,t_hours,score[,solves]")
    src.add_argument("--fixture", choices=sorted(FIELD_SIZES), default="dragos")
    p.add_argument("--metric", choices=METRICS, action="append", help="repeatable (default growth, velocity)")
    p.add_argument("--team", dest="teams", action="append", help="restrict to these teams (repeatable)")
    p.add_argument("--split", type=float, default=7.0, help="early/late split in hours")
    p.add_argument("--end", type=float, default=48.0, help="late window end in hours")
    p.add_argument("--snapshots", type=_csv_list, help="comma-separated snapshot hours")
    p.add_argument("--threshold", type=float, default=10_000.0)
    p.add_argument("--first-window", type=float, default=1.0)
    p.add_argument("--field-size", type=int)
    p.add_argument("--at", type=float, help="rank snapshot time in hours (default: end of data)")
    p.add_argument("--solve-rate", type=float, nargs=2, metavar=("COUNT", "HOURS"))
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--emit-plot-data", metavar="PATH", help="write score and percentile series as JSON")
    p.add_argument("--grid-step", type=float, help="plot grid spacing in hours")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="threshold interval that fires once at a given step")
    p.add_argument("--trace", help="trace file (default: bundled reference trace)")
    p.add_argument("--trigger-at", type=int, default=8)
    p.add_argument("--vocab-size", type=int, default=131072)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EntrouteError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
