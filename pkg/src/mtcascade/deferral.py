"""Deferral rules and budget-constrained selection.

A rule assigns each record a deferral priority (larger means the record is
more deserving of the large model).  Under a budget ``eta`` the
``round_half_up(eta * B)`` highest-priority records are deferred, ties going
to the lower batch index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Any, Sequence

from .core import Batch, TranslationRecord, missing_report
from .errors import DomainError, MissingColumnError, ValidationError
from .rng import check_seed, fisher_yates


class RuleKind(str, Enum):
    QE = "qe"
    RANDOM = "random"
    LENGTH_SHORTEST = "length"
    LENGTH_LONGEST = "-length"
    LOGPROBS = "logprobs"
    ORACLE = "oracle"


@dataclass(frozen=True)
class DeferralRule:
    """A deferral rule.

    ``family`` names the quality column pair an oracle optimises:
    ``"quality"`` means ``quality_small``/``quality_large``, ``"human"`` means
    ``human_small``/``human_large``, and so on.
    """

    kind: RuleKind
    seed: int | None = None
    family: str = "quality"

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.RANDOM:
            if self.seed is None:
                raise ValueError("the random rule needs an explicit seed")
            object.__setattr__(self, "seed", check_seed(self.seed))
        elif self.seed is not None:
            object.__setattr__(self, "seed", None)

    @classmethod
    def qe(cls) -> "DeferralRule":
        return cls(RuleKind.QE)

    @classmethod
    def random(cls, seed: int) -> "DeferralRule":
        return cls(RuleKind.RANDOM, seed=seed)

    @classmethod
    def length_shortest(cls) -> "DeferralRule":
        return cls(RuleKind.LENGTH_SHORTEST)

    @classmethod
    def length_longest(cls) -> "DeferralRule":
        return cls(RuleKind.LENGTH_LONGEST)

    @classmethod
    def logprobs(cls) -> "DeferralRule":
        return cls(RuleKind.LOGPROBS)

    @classmethod
    def oracle(cls, family: str = "quality") -> "DeferralRule":
        return cls(RuleKind.ORACLE, family=family)

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "DeferralRule":
        """Parse ``qe``, ``random``, ``length``, ``-length``, ``logprobs``,
        ``oracle`` or ``oracle:<family>``."""
        text = text.strip()
        name, _, family = text.partition(":")
        try:
            kind = RuleKind(name)
        except ValueError:
            raise ValueError(f"unknown deferral rule {text!r}") from None
        if kind is RuleKind.ORACLE:
            return cls.oracle(family or "quality")
        if family:
            raise ValueError(f"rule {name!r} takes no column family")
        if kind is RuleKind.RANDOM:
            return cls.random(0 if seed is None else seed)
        return cls(kind)

    @property
    def label(self) -> str:
        if self.kind is RuleKind.ORACLE and self.family != "quality":
            return f"oracle:{self.family}"
        return self.kind.value

    @property
    def score_based(self) -> bool:
        return self.kind is not RuleKind.RANDOM

    def required_columns(self) -> tuple[str, ...]:
        return {
            RuleKind.QE: ("qe_small",),
            RuleKind.RANDOM: (),
            RuleKind.LENGTH_SHORTEST: ("src_token_len",),
            RuleKind.LENGTH_LONGEST: ("src_token_len",),
            RuleKind.LOGPROBS: ("logprob_small", "hyp_token_len"),
            RuleKind.ORACLE: (f"{self.family}_small", f"{self.family}_large"),
        }[self.kind]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"rule": self.label}
        if self.seed is not None:
            out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class DeferralDecision:
    deferred: frozenset[int]
    eta_requested: float
    eta_effective: float
    rule: DeferralRule
    deferred_ids: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        out = self.rule.to_dict()
        out.update(
            eta_requested=self.eta_requested,
            eta_effective=self.eta_effective,
            deferred_ids=list(self.deferred_ids),
        )
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any], batch: Batch) -> "DeferralDecision":
        index = {rid: i for i, rid in enumerate(batch.ids)}
        try:
            deferred = frozenset(index[rid] for rid in data["deferred_ids"])
        except KeyError as exc:
            raise ValidationError(f"decision names unknown record id {exc.args[0]!r}") from None
        rule = DeferralRule.parse(data["rule"], seed=data.get("seed"))
        ids = batch.ids
        ordered = tuple(ids[i] for i in sorted(deferred))
        return cls(deferred, data["eta_requested"], data["eta_effective"], rule, ordered)


def check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"budget eta must lie in [0, 1], got {eta}")
    return eta


def deferral_count(eta: float, batch_size: int) -> int:
    """``round_half_up(eta * B)`` clamped to ``[0, B]``.

    The product is taken in decimal on the shortest repr of ``eta`` so that
    e.g. ``0.15 * 10`` rounds to 2 rather than tripping on binary error.
    """
    eta = check_eta(eta)
    k = int((Decimal(repr(eta)) * batch_size).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(max(k, 0), batch_size)


def priority(record: TranslationRecord, rule: DeferralRule) -> float:
    """Deferral priority of one record; larger defers first."""
    kind = rule.kind
    if kind is RuleKind.QE:
        return -record.score("qe_small")
    if kind is RuleKind.LOGPROBS:
        length = record.get("hyp_token_len")
        if length is None:
            raise MissingColumnError(record.id, "hyp_token_len")
        return -(record.score("logprob_small") / length)
    if kind is RuleKind.LENGTH_SHORTEST:
        return -record.score("src_token_len")
    if kind is RuleKind.LENGTH_LONGEST:
        return record.score("src_token_len")
    if kind is RuleKind.ORACLE:
        return record.score(f"{rule.family}_large") - record.score(f"{rule.family}_small")
    raise ValueError("the random rule ranks by a seeded permutation, not by priority")


def deferral_order(batch: Batch, rule: DeferralRule) -> list[int]:
    """Batch indices in the order they would be deferred."""
    if rule.kind is RuleKind.RANDOM:
        return fisher_yates(len(batch), rule.seed)
    prios = [priority(r, rule) for r in batch]
    return sorted(range(len(batch)), key=lambda i: (-prios[i], i))


def select_deferrals(batch: Batch, rule: DeferralRule, eta: float) -> DeferralDecision:
    """Pick the records the large model should translate under budget ``eta``."""
    eta = check_eta(eta)
    if missing := missing_report(batch, rule):
        column, ids = next(iter(missing.items()))
        raise MissingColumnError(ids[0], column)
    n = len(batch)
    k = deferral_count(eta, n)
    order = deferral_order(batch, rule)
    chosen = frozenset(order[:k])
    all_ids = batch.ids
    ids = tuple(all_ids[i] for i in sorted(chosen))
    return DeferralDecision(chosen, eta, k / n if n else 0.0, rule, ids)


def apply_decision(batch: Batch, decision: DeferralDecision, family: str = "quality") -> list[float]:
    """Realised per-record quality of the cascade for a column family."""
    small, large = f"{family}_small", f"{family}_large"
    return [
        rec.score(large) if i in decision.deferred else rec.score(small)
        for i, rec in enumerate(batch)
    ]


def realized_quality(
    small: Sequence[float], large: Sequence[float], deferred: frozenset[int] | set[int]
) -> list[float]:
    return [large[i] if i in deferred else small[i] for i in range(len(small))]
