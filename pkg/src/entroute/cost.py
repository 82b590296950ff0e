"""Cost projection and metering.

Money is carried as :class:`fractions.Fraction` dollars, so closed-form
projections and per-inference metering agree exactly; rounding happens only
when a value is formatted. A price quoted "per million tokens" in dollars is
numerically the price per token in micro-dollars.

Two rates are in play for the reference deployment:

* ``TABLE_RATE`` ($5.94/M) is the base rate implied by the published cost
  table;
* ``blended_rate(SUPPORT_PRICING, DEFAULT_PROFILE)`` (about $5.1776/M) is what
  the stated $5/$25 prices and the 13,953/125 token profile actually give.

They do not agree; callers pick one explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .entropy import InferenceRecord
from .errors import AlignmentError, DomainError
from .routing import RouteDecision

Number = Union[int, float, str, Decimal, Fraction]
MILLION = 10**6


def to_fraction(x: Number) -> Fraction:
    """Exact conversion; floats go through their shortest repr so 5.94 stays 594/100."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class PricingModel:
    model_id: str
    input_price_per_million: Fraction
    output_price_per_million: Fraction

    def __post_init__(self):
        for name in ("input_price_per_million", "output_price_per_million"):
            value = to_fraction(getattr(self, name))
            if value < 0:
                raise DomainError(f"{name} must be nonnegative")
            object.__setattr__(self, name, value)

    def inference_cost(self, input_tokens: int, output_tokens: int) -> Fraction:
        return (input_tokens * self.input_price_per_million
                + output_tokens * self.output_price_per_million) / MILLION


@dataclass(frozen=True)
class TokenProfile:
    mean_input_tokens: Fraction
    mean_output_tokens: Fraction

    def __post_init__(self):
        for name in ("mean_input_tokens", "mean_output_tokens"):
            value = to_fraction(getattr(self, name))
            if value <= 0:
                raise DomainError(f"{name} must be positive")
            object.__setattr__(self, name, value)


TABLE_RATE = Fraction("5.94")
SUPPORT_PRICING = PricingModel("support", 5, 25)
BASE_PRICING = PricingModel("base", 0, 0)
DEFAULT_PROFILE = TokenProfile(13953, 125)
TABLE_VOLUMES = (10**6, 10**7, 10**8, 10**9)
TABLE_KS = (20, 10, 5, 2)


def blended_rate(pricing: PricingModel, profile: TokenProfile) -> Fraction:
    """Price per million tokens, weighting input/output prices by token share."""
    n_in, n_out = profile.mean_input_tokens, profile.mean_output_tokens
    total = n_in + n_out
    if total == 0:
        raise DomainError("token profile has zero total tokens")
    return (n_in * pricing.input_price_per_million + n_out * pricing.output_price_per_million) / total


def support_fraction(k: int) -> Fraction:
    """Share of traffic sent to the support model under a ``k`` hold: ``k/100``."""
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= 100:
        raise DomainError(f"k must be an integer in [1, 100], got {k!r}")
    return Fraction(int(k), 100)


@dataclass(frozen=True)
class CostReport:
    total_tokens: int
    support_fraction: Fraction
    blended_rate_per_million: Fraction
    total_cost: Fraction

    @property
    def reduction_vs_unsupported(self) -> Fraction:
        return 1 - self.support_fraction

    @property
    def micro_dollars(self) -> int:
        return round_half_up(self.total_cost, 6)

    @property
    def cents(self) -> int:
        return round_half_up(self.total_cost, 2)

    def to_dict(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "support_fraction": str(self.support_fraction),
            "blended_rate_per_million": str(self.blended_rate_per_million),
            "total_cost": str(self.total_cost),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostReport":
        return cls(
            total_tokens=int(d["total_tokens"]),
            support_fraction=Fraction(d["support_fraction"]),
            blended_rate_per_million=Fraction(d["blended_rate_per_million"]),
            total_cost=Fraction(d["total_cost"]),
        )


def project_cost(total_tokens: int, k: Optional[int], rate: Number,
                 *, fraction: Optional[Fraction] = None) -> CostReport:
    """Closed-form cost of ``total_tokens`` when a share of them hits the support model.

    ``k=None`` is the unsupported deployment (every token at ``rate``).
    ``fraction`` overrides the ``k/100`` law, e.g. with a share measured from a session.
    """
    if total_tokens < 0:
        raise DomainError("total_tokens must be nonnegative")
    rate = to_fraction(rate)
    if fraction is not None:
        frac = Fraction(fraction)
        if not 0 <= frac <= 1:
            raise DomainError("fraction must lie in [0, 1]")
    else:
        frac = Fraction(1) if k is None else support_fraction(k)
    total = Fraction(total_tokens, MILLION) * frac * rate
    return CostReport(int(total_tokens), frac, rate, total)


def session_cost(decisions: Sequence[RouteDecision], records: Sequence[InferenceRecord],
                 pricing: Mapping[str, PricingModel]) -> CostReport:
    """Meter a routed session with each record's actual token counts."""
    if len(decisions) != len(records):
        raise AlignmentError(f"{len(decisions)} decisions vs {len(records)} records")
    acc = CostAccumulator()
    for decision, record in zip(decisions, records):
        acc.add(decision, record, pricing)
    return acc.report()


@dataclass
class CostAccumulator:
    """Running metered totals; the session runtime checkpoints this."""

    total_cost: Fraction = Fraction(0)
    total_tokens: int = 0
    inferences: int = 0
    support_inferences: int = 0

    def add(self, decision: RouteDecision, record: InferenceRecord,
            pricing: Mapping[str, PricingModel]) -> Fraction:
        try:
            price = pricing[decision.model_id]
        except KeyError:
            raise DomainError(f"no pricing for model {decision.model_id!r}") from None
        cost = price.inference_cost(record.input_tokens, record.output_tokens)
        self.total_cost += cost
        self.total_tokens += record.input_tokens + record.output_tokens
        self.inferences += 1
        self.support_inferences += decision.is_support
        return cost

    def report(self) -> CostReport:
        frac = Fraction(self.support_inferences, self.inferences) if self.inferences else Fraction(0)
        denom = Fraction(self.total_tokens, MILLION) * frac
        rate = self.total_cost / denom if denom else Fraction(0)
        return CostReport(self.total_tokens, frac, rate, self.total_cost)

    def to_dict(self) -> dict:
        return {
            "total_cost": str(self.total_cost),
            "total_tokens": self.total_tokens,
            "inferences": self.inferences,
            "support_inferences": self.support_inferences,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostAccumulator":
        return cls(Fraction(d["total_cost"]), d["total_tokens"], d["inferences"], d["support_inferences"])


def default_pricing(base_model_id: str = "base", support_model_id: str = "support") -> dict[str, PricingModel]:
    """Free base model plus the $5/$25 support model."""
    return {
        base_model_id: PricingModel(base_model_id, 0, 0),
        support_model_id: PricingModel(support_model_id, 5, 25),
    }


# --------------------------------------------------------------------------
# presentation

def round_half_up(amount: Fraction, places: int) -> int:
    """``amount`` in units of ``10**-places``, halves rounded away from zero."""
    scaled = Fraction(amount) * 10**places
    sign = -1 if scaled < 0 else 1
    return sign * int(abs(scaled) + Fraction(1, 2))


def format_money(amount: Fraction, places: int = 2) -> str:
    units = round_half_up(amount, places)
    sign = "-" if units < 0 else ""
    units = abs(units)
    if places == 0:
        return f"{sign}${units:,}"
    whole, part = divmod(units, 10**places)
    return f"{sign}${whole:,}.{part:0{places}d}"


def volume_label(tokens: int) -> str:
    for scale, suffix in ((10**9, "B"), (10**6, "M"), (10**3, "K")):
        if tokens >= scale and tokens % scale == 0:
            return f"{tokens // scale}{suffix}"
    return str(tokens)


def column_places(tokens: int) -> int:
    # the published table prints cents below 100M tokens and whole dollars from 100M up
    return 2 if tokens < 10**8 else 0


@dataclass(frozen=True)
class CostRow:
    label: str
    k: Optional[int]
    reports: tuple[CostReport, ...]

    @property
    def reduction(self) -> Optional[Fraction]:
        return None if self.k is None else self.reports[0].reduction_vs_unsupported


def cost_table(rate: Number = TABLE_RATE, volumes: Sequence[int] = TABLE_VOLUMES,
               ks: Sequence[int] = TABLE_KS) -> list[CostRow]:
    rows = [CostRow("w/o support", None, tuple(project_cost(v, None, rate) for v in volumes))]
    for k in ks:
        rows.append(CostRow("w/ support", k, tuple(project_cost(v, k, rate) for v in volumes)))
    return rows


def format_percent(frac: Fraction) -> str:
    return f"{round_half_up(frac, 2)}%"
