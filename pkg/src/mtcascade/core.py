"""Translation records, batches and JSONL ingestion.

Every score column is stored higher-is-better.  Columns that a scorer emits
lower-is-better (MetricX, for instance) are declared with a
:class:`ScoreOrientation` and negated once, at load time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import BatchParseError, MissingColumnError, ValidationError

TEXT_FIELDS = ("source", "hyp_small", "hyp_large")
SCORE_FIELDS = (
    "qe_small",
    "qe_large",
    "quality_small",
    "quality_large",
    "logprob_small",
)
LENGTH_FIELDS = ("hyp_token_len", "src_token_len")
# Serialization order of the fixed schema.
FIELD_ORDER = ("id", "lang_pair") + TEXT_FIELDS + SCORE_FIELDS + LENGTH_FIELDS


class Direction(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


@dataclass(frozen=True)
class ScoreOrientation:
    column: str
    direction: Direction = Direction.HIGHER_BETTER

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))

    @classmethod
    def parse(cls, spec: str) -> "ScoreOrientation":
        """Parse ``column=lower_better`` (or ``column:lower_better``)."""
        for sep in ("=", ":"):
            if sep in spec:
                column, direction = spec.split(sep, 1)
                return cls(column.strip(), Direction(direction.strip()))
        raise ValueError(f"orientation must look like 'column=lower_better', got {spec!r}")


@dataclass(frozen=True)
class TranslationRecord:
    id: str
    lang_pair: str | None = None
    source: str | None = None
    hyp_small: str | None = None
    hyp_large: str | None = None
    qe_small: float | None = None
    qe_large: float | None = None
    quality_small: float | None = None
    quality_large: float | None = None
    logprob_small: float | None = None
    hyp_token_len: int | None = None
    src_token_len: int | None = None
    # Additional numeric score columns, e.g. human_small / human_large.
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError(f"record id must be a non-empty string, got {self.id!r}")
        for name in SCORE_FIELDS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _finite(value, self.id, name))
        for name, value in self.extra.items():
            _finite(value, self.id, name)
        for name in LENGTH_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValidationError(f"record {self.id!r}: {name} must be a positive integer, got {value!r}")
        if self.logprob_small is not None:
            if self.hyp_token_len is None:
                raise ValidationError(f"record {self.id!r}: logprob_small requires hyp_token_len")
            if self.logprob_small > 0:
                raise ValidationError(f"record {self.id!r}: logprob_small must be <= 0")
        if not self.source and self.src_token_len is None:
            raise ValidationError(f"record {self.id!r}: empty source requires src_token_len")

    def get(self, column: str) -> Any:
        """Value of a fixed field or extra score column, ``None`` if absent."""
        if column in FIELD_ORDER:
            return getattr(self, column)
        return self.extra.get(column)

    def score(self, column: str) -> float:
        value = self.get(column)
        if value is None:
            raise MissingColumnError(self.id, column)
        return float(value)

    def replace(self, **changes: Any) -> "TranslationRecord":
        data = self.to_dict()
        data.update(changes)
        return TranslationRecord.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in FIELD_ORDER:
            value = getattr(self, name)
            if value is None:
                continue
            out[name] = value
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TranslationRecord":
        if "id" not in data:
            raise ValidationError("record is missing 'id'")
        known = {k: v for k, v in data.items() if k in FIELD_ORDER}
        extra = {}
        for key, value in data.items():
            if key in FIELD_ORDER:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"record {data['id']!r}: unknown non-numeric field {key!r}")
            extra[key] = value
        for name in SCORE_FIELDS:
            value = known.get(name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ValidationError(f"record {data['id']!r}: {name} must be a number")
        return cls(**known, extra=extra)


def _finite(value: Any, record_id: str, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"record {record_id!r}: {name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"record {record_id!r}: {name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Batch:
    """Ordered records for one test set and language pair."""

    records: tuple[TranslationRecord, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValidationError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i: int) -> TranslationRecord:
        return self.records[i]

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def column(self, name: str) -> list[float]:
        return [r.score(name) for r in self.records]


def _negate(value: float) -> float:
    return -value


def load_batch(
    path: str | Path,
    orientations: Iterable[ScoreOrientation] = (),
    name: str | None = None,
) -> Batch:
    """Read a JSONL file into a :class:`Batch`.

    Columns declared ``lower_better`` are negated so that every stored score
    is higher-is-better.  Blank lines are skipped; record order follows the
    file.
    """
    path = Path(path)
    lower = {o.column for o in orientations if o.direction is Direction.LOWER_BETTER}
    records = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except (json.JSONDecodeError, ValueError) as exc:
                raise BatchParseError(path, lineno, str(exc)) from None
            if not isinstance(obj, dict):
                raise BatchParseError(path, lineno, "expected a JSON object")
            for column in lower:
                if obj.get(column) is not None:
                    value = obj[column]
                    if isinstance(value, (int, float)) and not isinstance(value, bool):
                        obj[column] = _negate(value)
            try:
                rec = TranslationRecord.from_dict(obj)
            except (ValidationError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if rec.id in seen:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate record id {rec.id!r} (first seen on line {seen[rec.id]})"
                )
            seen[rec.id] = lineno
            records.append(rec)
    return Batch(tuple(records), name=path.stem if name is None else name)


def _reject_constant(token: str):
    raise ValueError(f"non-finite number {token} is not allowed")


def dumps_batch(batch: Batch) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in batch)


def save_batch(batch: Batch, path: str | Path) -> None:
    Path(path).write_text(dumps_batch(batch), encoding="utf-8")


def required_columns(rule) -> tuple[str, ...]:
    """Columns a deferral rule reads from every record."""
    return rule.required_columns()


def validate_for_rule(batch: Batch, rule) -> list[str]:
    """Ids of records lacking a column ``rule`` needs; empty means ok."""
    needed = rule.required_columns()
    return [r.id for r in batch if any(r.get(c) is None for c in needed)]


def missing_report(batch: Batch, rule) -> dict[str, list[str]]:
    """Per-column list of record ids that lack it."""
    report: dict[str, list[str]] = {}
    for column in rule.required_columns():
        ids = [r.id for r in batch if r.get(column) is None]
        if ids:
            report[column] = ids
    return report


def batch_from_dicts(rows: Sequence[Mapping[str, Any]], name: str = "") -> Batch:
    return Batch(tuple(TranslationRecord.from_dict(r) for r in rows), name=name)
