"""Leaderboard time series and competition-velocity metrics.

A :class:`LeaderboardSeries` is one team's cumulative score against hours
since the competition started. ``score_at`` interpolates linearly between
recorded points; before the team's entry time the score is 0, and between
entry and the first recorded point it ramps linearly from 0. Several points
may share a timestamp (simultaneous solves); the highest score at that
time wins.

Series are read from delimited text with a header row::

    team,t_hours,score[,solves]

``solves`` is an optional cumulative solve count, used for points-per-solve.
"""
from __future__ import annotations

import bisect
import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, EmptySequence, NotReached, OutOfRange

INF = math.inf


@dataclass(frozen=True)
class LeaderboardSeries:
    team: str
    points: tuple[tuple[float, float], ...]
    entry_time: Optional[float] = None
    solves: Optional[int] = None  # total solves at the last point, when known

    def __post_init__(self):
        pts = tuple((float(t), float(s)) for t, s in self.points)
        if not pts:
            raise EmptySequence(f"series for {self.team!r} has no points")
        for (t0, s0), (t1, s1) in zip(pts, pts[1:]):
            if t1 < t0:
                raise DomainError(f"{self.team}: time goes backwards at t={t1}")
            if s1 < s0:
                raise DomainError(f"{self.team}: score drops from {s0} to {s1} at t={t1}")
        if pts[0][0] < 0 or pts[0][1] < 0:
            raise DomainError(f"{self.team}: negative time or score")
        entry = pts[0][0] if self.entry_time is None else float(self.entry_time)
        if entry > pts[0][0]:
            raise DomainError(f"{self.team}: entry time after first recorded point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "entry_time", entry)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.points])

    @property
    def start(self) -> float:
        return self.entry_time

    @property
    def end(self) -> float:
        return self.points[-1][0]

    @property
    def final_score(self) -> float:
        return self.points[-1][1]

    def _knots(self) -> list[tuple[float, float]]:
        knots = [(self.entry_time, 0.0)] if self.entry_time < self.points[0][0] else []
        return knots + list(self.points)

    def score_at(self, t: float) -> float:
        if t > self.end:
            raise OutOfRange(f"{self.team}: t={t} h is past the last recorded point ({self.end} h)")
        if t < self.entry_time:
            return 0.0
        knots = self._knots()
        times = [k[0] for k in knots]
        hi = bisect.bisect_right(times, t)
        if times[hi - 1] == t:
            return knots[hi - 1][1]
        (t0, s0), (t1, s1) = knots[hi - 1], knots[hi]
        return s0 + (s1 - s0) * (t - t0) / (t1 - t0)

    def scaled(self, factor: float) -> "LeaderboardSeries":
        return LeaderboardSeries(self.team, tuple((t, s * factor) for t, s in self.points),
                                 self.entry_time, self.solves)


@dataclass(frozen=True)
class VelocityReport:
    team: str
    window: tuple[float, float]
    points_per_hour: float
    time_to_threshold: Optional[float] = None
    early_late_ratio: Optional[float] = None
    avg_points_per_solve: Optional[float] = None

    def __post_init__(self):
        if not self.window[1] > self.window[0]:
            raise DomainError("window end must follow its start")
        if self.points_per_hour < 0:
            raise DomainError("negative velocity")


def window_velocity(series: LeaderboardSeries, t0: float, t1: float) -> float:
    if not t1 > t0:
        raise DomainError(f"empty window [{t0}, {t1}]")
    if t0 < 0:
        raise OutOfRange(f"window start {t0} is negative")
    return (series.score_at(t1) - series.score_at(t0)) / (t1 - t0)


def early_late_ratio(series: LeaderboardSeries, split: float, end: float, start: float = 0.0) -> float:
    early = window_velocity(series, start, split)
    late = window_velocity(series, split, end)
    if late == 0:
        return INF
    return early / late


def time_to_threshold(series: LeaderboardSeries, threshold: float) -> float:
    """First time the interpolated score reaches ``threshold``."""
    if threshold <= 0:
        return series.entry_time
    knots = series._knots()
    prev_t, prev_s = series.entry_time, 0.0
    for t, s in knots:
        if s >= threshold:
            if s == prev_s or t == prev_t:
                return t
            return prev_t + (t - prev_t) * (threshold - prev_s) / (s - prev_s)
        prev_t, prev_s = t, s
    raise NotReached(f"{series.team} never reaches {threshold:g} points (final {series.final_score:g})")


def velocity_to_threshold(series: LeaderboardSeries, threshold: float) -> float:
    """``threshold / time_to_threshold``; infinite when it is reached at t = 0."""
    t = time_to_threshold(series, threshold)
    return INF if t == 0 else threshold / t


def solve_rate(count: float, window_hours: float) -> float:
    if not window_hours > 0:
        raise DomainError("window must be positive")
    return count / window_hours


def avg_points_per_solve(series: LeaderboardSeries) -> Optional[float]:
    if not series.solves:
        return None
    return series.final_score / series.solves


@dataclass(frozen=True)
class RankEntry:
    team: str
    score: float
    rank: int
    percentile: float  # share of the field strictly below this team


def rank_trajectory(all_series: Sequence[LeaderboardSeries], t: float,
                    field_size: Optional[int] = None) -> list[RankEntry]:
    """Rank teams by interpolated score at ``t``.

    Ranks use competition ranking (ties share the better rank). The
    percentile is ``(field_size - #teams scoring at least as much) / field_size``,
    which counts unlisted teams as below when the series are a top-N sample.
    Teams that have not yet entered score 0; teams whose data ends before
    ``t`` keep their last score.
    """
    if not all_series:
        raise EmptySequence("no series to rank")
    n = len(all_series)
    field_n = n if field_size is None else int(field_size)
    if field_n < n:
        raise DomainError(f"field size {field_n} smaller than the {n} listed teams")
    scores = [s.score_at(min(t, s.end)) if t >= s.entry_time else 0.0 for s in all_series]
    ordered = sorted(zip(all_series, scores), key=lambda p: -p[1])
    out = []
    for series, sc in ordered:
        above = sum(1 for x in scores if x > sc)
        at_least = sum(1 for x in scores if x >= sc)
        out.append(RankEntry(series.team, sc, above + 1, (field_n - at_least) / field_n))
    return out


def percentile_for_rank(rank: int, field_size: int) -> float:
    """Share of a field of ``field_size`` outperformed by the team at ``rank``."""
    if not 1 <= rank <= field_size:
        raise DomainError("rank must lie in 1..field_size")
    return (field_size - rank) / field_size


def final_margin(all_series: Sequence[LeaderboardSeries]) -> tuple[str, float]:
    """Leader and its final-score lead over the runner-up."""
    if len(all_series) < 2:
        raise DomainError("need at least two teams for a margin")
    ordered = sorted(all_series, key=lambda s: -s.final_score)
    return ordered[0].team, ordered[0].final_score - ordered[1].final_score


# --------------------------------------------------------------------------
# tables

@dataclass(frozen=True)
class GrowthRow:
    team: str
    snapshots: tuple[float, ...]
    early_velocity: float
    late_velocity: float
    ratio: float


@dataclass(frozen=True)
class VelocityRow:
    team: str
    velocity: float
    time_to_threshold: float
    first_hour: float
    avg_points_per_solve: Optional[float]


def growth_table(all_series: Sequence[LeaderboardSeries], *, split: float = 7.0, end: float = 48.0,
                 snapshots: Sequence[float] = (1.0, 7.0, 24.0, 48.0)) -> list[GrowthRow]:
    rows = []
    for s in all_series:
        rows.append(GrowthRow(
            s.team,
            tuple(s.score_at(t) for t in snapshots),
            window_velocity(s, 0.0, split),
            window_velocity(s, split, end),
            early_late_ratio(s, split, end),
        ))
    return rows


def velocity_table(all_series: Sequence[LeaderboardSeries], *, threshold: float = 10_000.0,
                   first_window: float = 1.0) -> list[VelocityRow]:
    rows = []
    for s in all_series:
        rows.append(VelocityRow(
            s.team,
            velocity_to_threshold(s, threshold),
            time_to_threshold(s, threshold),
            s.score_at(first_window),
            avg_points_per_solve(s),
        ))
    return rows


def velocity_report(series: LeaderboardSeries, t0: float, t1: float, *,
                    threshold: Optional[float] = None, split: Optional[float] = None) -> VelocityReport:
    ttt = None
    if threshold is not None:
        try:
            ttt = time_to_threshold(series, threshold)
        except NotReached:
            ttt = None
    return VelocityReport(
        series.team, (t0, t1), window_velocity(series, t0, t1), ttt,
        None if split is None else early_late_ratio(series, split, t1, start=t0),
        avg_points_per_solve(series),
    )


# --------------------------------------------------------------------------
# ingestion and plot data

def load_leaderboard(path: str | os.PathLike, entry_times: Optional[Mapping[str, float]] = None
                     ) -> list[LeaderboardSeries]:
    """Read ``team,t_hours,score[,solves]`` rows; team order follows first appearance."""
    pts: dict[str, list[tuple[float, float]]] = {}
    solves: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(row for row in fh if row.strip() and not row.lstrip().startswith("#"))
        missing = {"team", "t_hours", "score"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t, sc = float(row["t_hours"]), float(row["score"])
            except (TypeError, ValueError):
                raise DomainError(f"{path}:{lineno}: bad number in {row}") from None
            pts.setdefault(row["team"], []).append((t, sc))
            if row.get("solves"):
                solves[row["team"]] = int(row["solves"])
    entry_times = entry_times or {}
    return [LeaderboardSeries(team, tuple(p), entry_times.get(team), solves.get(team))
            for team, p in pts.items()]


def series_by_team(all_series: Iterable[LeaderboardSeries]) -> dict[str, LeaderboardSeries]:
    return {s.team: s for s in all_series}


def plot_data(all_series: Sequence[LeaderboardSeries], *, field_size: Optional[int] = None,
              grid: Optional[Sequence[float]] = None) -> dict:
    """Score curves and percentile trajectories ready for an external plotter."""
    if grid is None:
        lo = min(s.entry_time for s in all_series)
        hi = max(s.end for s in all_series)
        grid = np.linspace(lo, hi, 97).tolist()
    pct: dict[str, list[float]] = {s.team: [] for s in all_series}
    for t in grid:
        for entry in rank_trajectory(all_series, t, field_size):
            pct[entry.team].append(entry.percentile)
    return {
        "series": {s.team: [list(p) for p in s.points] for s in all_series},
        "grid": list(grid),
        "percentile": pct,
    }

