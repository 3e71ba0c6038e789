"""Inference FLOPs for single models, the QE cascade and QE reranking.

All costs use the ``2 * N * D`` per-example approximation for a transformer
with ``N`` parameters generating ``D`` tokens.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

from .errors import DomainError


class ParityWarning(UserWarning):
    """Cascading cannot undercut always using the large model."""


@dataclass(frozen=True)
class CostModel:
    n_small: float
    n_large: float
    n_qe: float
    d_small: float = 1.0
    d_large: float = 1.0
    name: str = ""

    def __post_init__(self):
        for attr in ("n_small", "n_large", "n_qe", "d_small", "d_large"):
            value = getattr(self, attr)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise DomainError(f"{attr} must be a number, got {value!r}") from None
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{attr} must be positive, got {value!r}")
            object.__setattr__(self, attr, value)

    @property
    def front_params(self) -> float:
        """Parameters every example passes through: small model plus QE."""
        return self.n_small + self.n_qe

    @property
    def equal_lengths(self) -> bool:
        return self.d_small == self.d_large

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], name: str = "") -> "CostModel":
        allowed = {"n_small", "n_large", "n_qe", "d_small", "d_large"}
        unknown = set(data) - allowed - {"name"}
        if unknown:
            raise DomainError(f"unknown cost-model keys: {sorted(unknown)}")
        # YAML 1.1 reads "7e9" as a string; accept it.
        values = {k: float(v) if isinstance(v, str) else v for k, v in data.items() if k in allowed}
        return cls(**values, name=data.get("name", name))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CostReport:
    flops: float
    relative_cost_x: float
    breakdown: dict[str, float] = field(default_factory=dict)
    # Set when d_small != d_large, where X no longer reduces to the closed forms.
    unequal_lengths: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "flops": self.flops,
            "relative_cost_x": self.relative_cost_x,
            "breakdown": dict(self.breakdown),
            "unequal_lengths": self.unequal_lengths,
        }


def _positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value!r}")


def single_model_flops(n_params: float, d_tokens: float, batch: float) -> float:
    _positive(n_params=n_params, d_tokens=d_tokens, batch=batch)
    return 2.0 * batch * d_tokens * n_params


def _always_large(cost: CostModel, batch: float) -> float:
    return single_model_flops(cost.n_large, cost.d_large, batch)


def cascade_flops(cost: CostModel, eta: float, batch: float) -> CostReport:
    """Cost of generating with the small model, QE-scoring every hypothesis
    and regenerating an ``eta`` fraction with the large model."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    _positive(batch=batch)
    small = 2.0 * batch * cost.d_small * cost.n_small
    qe = 2.0 * batch * cost.d_small * cost.n_qe
    large = 2.0 * eta * batch * cost.d_large * cost.n_large
    # Grouped as in 2BD_S(N_S + N_QE) + 2*eta*B*D_L*N_L.
    flops = 2.0 * batch * cost.d_small * (cost.n_small + cost.n_qe) + large
    return CostReport(
        flops=flops,
        relative_cost_x=flops / _always_large(cost, batch),
        breakdown={"small_gen": small, "qe_score": qe, "large_gen": large},
        unequal_lengths=not cost.equal_lengths,
    )


def parity_fraction(cost: CostModel, warn: bool = True) -> float:
    """Largest deferral fraction whose cascade cost does not exceed always
    running the large model.  Non-positive values are returned as-is."""
    eta = 1.0 - cost.front_params / cost.n_large
    if eta <= 0 and warn:
        warnings.warn(
            f"small+QE parameters ({cost.front_params:g}) reach the large model's "
            f"({cost.n_large:g}); cascading never beats always-large",
            ParityWarning,
            stacklevel=2,
        )
    return eta


def reranking_flops(cost: CostModel, k_hypotheses: int, batch: float) -> CostReport:
    """Cost of sampling ``K`` small-model hypotheses and QE-scoring each."""
    if k_hypotheses < 1:
        raise DomainError(f"k_hypotheses must be >= 1, got {k_hypotheses}")
    _positive(batch=batch)
    small = 2.0 * batch * cost.d_small * k_hypotheses * cost.n_small
    qe = 2.0 * batch * cost.d_small * k_hypotheses * cost.n_qe
    flops = 2.0 * batch * cost.d_small * k_hypotheses * (cost.n_small + cost.n_qe)
    return CostReport(
        flops=flops,
        relative_cost_x=flops / _always_large(cost, batch),
        breakdown={"small_gen": small, "qe_score": qe, "large_gen": 0.0},
        unequal_lengths=not cost.equal_lengths,
    )


def reranking_relative_cost(cost: CostModel, k_hypotheses: int) -> float:
    """``X = K * (N_S + N_QE) / N_L`` (generated lengths assumed equal)."""
    if k_hypotheses < 1:
        raise DomainError(f"k_hypotheses must be >= 1, got {k_hypotheses}")
    return k_hypotheses * (cost.front_params / cost.n_large)


def cascade_relative_cost(cost: CostModel, eta: float) -> float:
    """``X = eta + (N_S + N_QE) / N_L`` (generated lengths assumed equal)."""
    return eta + cost.front_params / cost.n_large


def cascade_equivalent_eta(cost: CostModel, k_hypotheses: int) -> float:
    """Deferral fraction at which the cascade costs as much as reranking
    ``K`` hypotheses.  May exceed 1."""
    if k_hypotheses < 1:
        raise DomainError(f"k_hypotheses must be >= 1, got {k_hypotheses}")
    return (k_hypotheses - 1) * (cost.front_params / cost.n_large)


def reranking_parity_k(cost: CostModel) -> int:
    """Largest ``K`` with reranking cost ``X <= 1``; 0 if even ``K = 1`` exceeds it."""
    k = math.floor(cost.n_large / cost.front_params)
    while k >= 1 and reranking_relative_cost(cost, k) > 1.0:
        k -= 1
    while reranking_relative_cost(cost, k + 1) <= 1.0:
        k += 1
    return max(k, 0)


# Parameter counts of the setups studied; one generated token per example by
# default since only ratios matter when d_small == d_large.
BUILTIN_PROFILES: dict[str, CostModel] = {
    "tower-7b+kiwi22": CostModel(7e9, 70e9, 0.5e9, name="tower-7b+kiwi22"),
    "tower-7b+kiwi-xxl": CostModel(7e9, 70e9, 10.5e9, name="tower-7b+kiwi-xxl"),
    "eurollm-1.7b+kiwi22": CostModel(1.7e9, 70e9, 0.5e9, name="eurollm-1.7b+kiwi22"),
    "eurollm-9b+kiwi22": CostModel(9e9, 70e9, 0.5e9, name="eurollm-9b+kiwi22"),
}
