"""
Projecting deployment cost
==========================

The cost of routing a share of traffic to a premium model, across token
volumes, and the gap between the table rate and the profile rate.
"""
from __future__ import annotations

from fractions import Fraction

from entroute.cost import (
    DEFAULT_PROFILE,
    SUPPORT_PRICING,
    TABLE_RATE,
    blended_rate,
    cost_table,
    format_money,
    project_cost,
)
from entroute.report import cost_rows_text, format_rate

volumes = (10**6, 10**7, 10**8, 10**9)
print(cost_rows_text(cost_table(TABLE_RATE), volumes))

profile = blended_rate(SUPPORT_PRICING, DEFAULT_PROFILE)
print("table rate  ", format_rate(TABLE_RATE))
print("profile rate", format_rate(profile), "=", profile)

# one billion tokens with a hold of 2, at each rate
for rate in (TABLE_RATE, profile):
    print(format_money(project_cost(10**9, 2, rate).total_cost, 2))

# a measured support share (2 of 10 inferences in the replay demo) can replace the k/100 law
print(format_money(project_cost(10**9, None, TABLE_RATE, fraction=Fraction(2, 10)).total_cost, 0))
