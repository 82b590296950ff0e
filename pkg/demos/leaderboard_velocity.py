"""
Leaderboard velocity
====================

Score growth, time to a point threshold and rank percentiles from the
bundled leaderboard series.
"""
from __future__ import annotations

import numpy as np

from entroute import final_margin, growth_table, rank_trajectory, velocity_table
from entroute.analytics import series_by_team
from entroute.fixtures import FIELD_SIZES, leaderboard
from entroute.report import growth_text, velocity_text

dragos = leaderboard("dragos")
print(growth_text(growth_table(dragos), (1, 7, 24, 48), 7, 48))
print(velocity_text(velocity_table(dragos), 10_000, 1))

cai = series_by_team(dragos)["CAI"]
hours = np.arange(0, 49, 6)
print(dict(zip(hours.tolist(), [round(cai.score_at(t)) for t in hours])))

neurogrid = leaderboard("neurogrid")
print(final_margin(neurogrid))
for t in (1, 12, 40, 78):
    top = rank_trajectory(neurogrid, t, FIELD_SIZES["neurogrid"])[0]
    print(f"{t:>3}h  leader {top.team:<18} ahead of {100 * top.percentile:.1f}% of the field")
