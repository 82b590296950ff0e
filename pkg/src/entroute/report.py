"""Plain-text, CSV and JSON renderings of cost and leaderboard tables."""
from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from typing import Optional, Sequence

from .analytics import GrowthRow, RankEntry, VelocityRow
from .cost import (
    CostRow,
    column_places,
    format_money,
    format_percent,
    volume_label,
)


def align(rows: Sequence[Sequence[str]], left: int = 1) -> str:
    """Right-align every column except the first ``left`` ones."""
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        cells = [c.ljust(w) if i < left else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x: Optional[float]):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


# --------------------------------------------------------------------------
# cost

def cost_rows_text(rows: Sequence[CostRow], volumes: Sequence[int]) -> str:
    header = ["Configuration", "k"] + [volume_label(v) for v in volumes] + ["Reduction"]
    body = [header]
    for row in rows:
        cells = [row.label, "---" if row.k is None else str(row.k)]
        cells += [format_money(rep.total_cost, column_places(v)) for rep, v in zip(row.reports, volumes)]
        cells.append("---" if row.reduction is None else format_percent(row.reduction))
        body.append(cells)
    return align(body, left=1)


def cost_rows_csv(rows: Sequence[CostRow], volumes: Sequence[int]) -> str:
    out = [["configuration", "k", "tokens", "support_fraction", "rate_per_million", "cost", "cost_exact",
            "cost_display", "reduction"]]
    for row in rows:
        for rep, v in zip(row.reports, volumes):
            out.append([row.label, "" if row.k is None else row.k, v, float(rep.support_fraction),
                        float(rep.blended_rate_per_million), float(rep.total_cost), str(rep.total_cost),
                        format_money(rep.total_cost, column_places(v)),
                        "" if row.reduction is None else float(row.reduction)])
    return _csv(out)


def cost_rows_json(rows: Sequence[CostRow], volumes: Sequence[int], **extra) -> str:
    data = {
        "rows": [
            {
                "configuration": row.label,
                "k": row.k,
                "reduction": None if row.reduction is None else float(row.reduction),
                "cells": [
                    {"tokens": v, "cost": float(rep.total_cost), "exact": str(rep.total_cost),
                     "display": format_money(rep.total_cost, column_places(v))}
                    for rep, v in zip(row.reports, volumes)
                ],
            }
            for row in rows
        ],
        **extra,
    }
    return json.dumps(data, indent=2) + "\n"


def format_rate(rate: Fraction, places: int = 4) -> str:
    text = f"{float(rate):.{places}f}".rstrip("0")
    if text.endswith("."):
        text += "00"
    elif len(text.split(".")[1]) < 2:
        text += "0"
    return f"${text}/M"


# --------------------------------------------------------------------------
# leaderboard

def _int(x: float) -> str:
    return f"{x:,.0f}"


def _ratio(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.1f}x"


def growth_text(rows: Sequence[GrowthRow], snapshots: Sequence[float], split: float, end: float) -> str:
    header = ["Team"] + [f"{t:g}h" for t in snapshots] + [
        f"Pts/h (0-{split:g}h)", f"Pts/h ({split:g}-{end:g}h)", "Early/Late"]
    body = [header]
    for r in rows:
        body.append([r.team] + [_int(s) for s in r.snapshots]
                    + [_int(r.early_velocity), _int(r.late_velocity), _ratio(r.ratio)])
    return align(body)


def growth_csv(rows: Sequence[GrowthRow], snapshots: Sequence[float]) -> str:
    out = [["team"] + [f"score_{t:g}h" for t in snapshots] + ["early_pts_per_h", "late_pts_per_h",
                                                               "early_late_ratio"]]
    for r in rows:
        out.append([r.team, *r.snapshots, r.early_velocity, r.late_velocity, _num(r.ratio)])
    return _csv(out)


def velocity_text(rows: Sequence[VelocityRow], threshold: float, first_window: float) -> str:
    thr = f"{threshold / 1000:g}K" if threshold >= 1000 else f"{threshold:g}"
    body = [["Team", "Velocity (pts/h)", f"Time to {thr}", f"Points in {first_window:g}h", "Avg pts/solve"]]
    for r in rows:
        body.append([
            r.team,
            "inf" if math.isinf(r.velocity) else f"{r.velocity:.0f}",
            f"{r.time_to_threshold:.2f}h",
            f"{r.first_hour:.0f}",
            "-" if r.avg_points_per_solve is None else f"{r.avg_points_per_solve:.0f}",
        ])
    return align(body)


def velocity_csv(rows: Sequence[VelocityRow]) -> str:
    out = [["team", "velocity_pts_per_h", "time_to_threshold_h", "first_window_points", "avg_pts_per_solve"]]
    for r in rows:
        out.append([r.team, _num(r.velocity), r.time_to_threshold, r.first_hour,
                    "" if r.avg_points_per_solve is None else r.avg_points_per_solve])
    return _csv(out)


def rank_text(entries: Sequence[RankEntry]) -> str:
    body = [["Rank", "Team", "Score", "Outperformed"]]
    for e in entries:
        body.append([str(e.rank), e.team, _int(e.score), f"{100 * e.percentile:.1f}%"])
    return align(body, left=0)


def rows_json(rows) -> list[dict]:
    out = []
    for r in rows:
        d = {k: _num(v) if not isinstance(v, tuple) else list(v) for k, v in vars(r).items()}
        out.append(d)
    return out
