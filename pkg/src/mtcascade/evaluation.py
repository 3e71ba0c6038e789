"""Aggregate quality, win/tie/loss rates, deferral curves and significance."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from . import kernels
from .core import Batch
from .costmodel import CostModel, cascade_flops
from .deferral import DeferralRule, apply_decision, check_eta, select_deferrals
from .errors import DomainError
from .rng import check_seed

DEFAULT_GRID = tuple(i / 10 for i in range(11))
# MetricX segment-level difference below which two translations tie.
DEFAULT_TIE_THRESHOLD = 0.122
DEFAULT_ALPHA = 0.01
DEFAULT_MAX_EXACT_N = 20
DEFAULT_ITERATIONS = 100_000
# Relative slack when comparing permuted sums to the observed sum, so that
# permutations tying the observed statistic are not lost to rounding.
_TIE_RTOL = 1e-10


def mean_quality(realized: Sequence[float]) -> float:
    """Correctly rounded arithmetic mean (independent of record order)."""
    if len(realized) == 0:
        raise DomainError("mean of an empty list")
    return math.fsum(realized) / len(realized)


@dataclass(frozen=True)
class WinTieLoss:
    wins: float
    ties: float
    losses: float
    threshold: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "wins": self.wins,
            "ties": self.ties,
            "losses": self.losses,
            "threshold": self.threshold,
            "n": self.n,
        }


def win_tie_loss_scores(a: Sequence[float], b: Sequence[float], threshold: float = DEFAULT_TIE_THRESHOLD) -> WinTieLoss:
    if len(a) != len(b):
        raise DomainError(f"length mismatch: {len(a)} vs {len(b)}")
    if not threshold >= 0:
        raise DomainError(f"tie threshold must be >= 0, got {threshold}")
    n = len(a)
    if n == 0:
        raise DomainError("win/tie/loss over an empty batch")
    wins = ties = losses = 0
    for x, y in zip(a, b):
        d = x - y
        if abs(d) < threshold:
            ties += 1
        elif d >= 0:
            wins += 1
        else:
            losses += 1
    return WinTieLoss(wins / n, ties / n, losses / n, threshold, n)


def win_tie_loss(batch: Batch, col_a: str, col_b: str, threshold: float = DEFAULT_TIE_THRESHOLD) -> WinTieLoss:
    """Per-segment comparison of system A against system B.

    Differences with magnitude below ``threshold`` tie; otherwise the sign of
    ``a - b`` decides.  Both columns are higher-is-better.
    """
    return win_tie_loss_scores(batch.column(col_a), batch.column(col_b), threshold)


@dataclass(frozen=True)
class CurvePoint:
    eta: float
    mean_quality: float
    flops: float
    relative_cost_x: float
    rule: DeferralRule
    eta_effective: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule": self.rule.label,
            "eta": self.eta,
            "eta_effective": self.eta_effective,
            "mean_quality": self.mean_quality,
            "flops": self.flops,
            "relative_cost_x": self.relative_cost_x,
        }


def deferral_curve(
    batch: Batch,
    rule: DeferralRule,
    grid: Iterable[float] = DEFAULT_GRID,
    cost: CostModel | None = None,
    family: str = "quality",
) -> list[CurvePoint]:
    """Cascade quality and cost at each budget in ``grid`` (grid order kept).

    Costs are charged for the fraction actually deferred, which differs from
    the grid value when ``eta * B`` is not an integer.
    """
    if len(batch) == 0:
        raise DomainError("deferral curve over an empty batch")
    points = []
    for eta in grid:
        eta = check_eta(eta)
        decision = select_deferrals(batch, rule, eta)
        realized = apply_decision(batch, decision, family)
        if cost is not None:
            report = cascade_flops(cost, decision.eta_effective, len(batch))
            flops, x = report.flops, report.relative_cost_x
        else:
            flops = x = math.nan
        points.append(
            CurvePoint(eta, mean_quality(realized), flops, x, rule, decision.eta_effective)
        )
    return points


def crossover_budget(curve: Sequence[CurvePoint], target: float) -> float | None:
    """Smallest budget whose mean quality reaches ``target``."""
    if not curve:
        raise DomainError("crossover of an empty curve")
    for point in sorted(curve, key=lambda p: p.eta):
        if point.mean_quality >= target:
            return point.eta
    return None


def aggregate_curves(curves: Sequence[Sequence[CurvePoint]]) -> list[dict[str, float]]:
    """Unweighted mean over batches (language pairs) of per-batch curves.

    All curves must share the same grid.
    """
    if not curves:
        raise DomainError("no curves to aggregate")
    grid = [p.eta for p in curves[0]]
    for c in curves[1:]:
        if [p.eta for p in c] != grid:
            raise DomainError("curves are on different grids")
    out = []
    for j, eta in enumerate(grid):
        out.append(
            {
                "eta": eta,
                "mean_quality": math.fsum(c[j].mean_quality for c in curves) / len(curves),
                "relative_cost_x": math.fsum(c[j].relative_cost_x for c in curves) / len(curves),
            }
        )
    return out


def curves_to_csv(curves: Iterable[Sequence[CurvePoint]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rule", "eta", "mean_quality", "flops", "relative_cost_x"])
    for curve in curves:
        for p in curve:
            writer.writerow([p.rule.label, repr(p.eta), repr(p.mean_quality), repr(p.flops), repr(p.relative_cost_x)])
    return buf.getvalue()


@dataclass(frozen=True)
class PermutationTestResult:
    p_value: float
    observed_stat: float
    mode: str
    n_pairs: int
    alpha: float
    iterations: int | None = None
    seed: int | None = None

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "p_value": self.p_value,
            "observed_stat": self.observed_stat,
            "mode": self.mode,
            "n_pairs": self.n_pairs,
            "alpha": self.alpha,
            "significant": self.significant,
        }
        if self.mode == "monte_carlo":
            out["iterations"] = self.iterations
            out["seed"] = self.seed
        return out


def paired_permutation_test(
    a: Sequence[float],
    b: Sequence[float],
    alpha: float = DEFAULT_ALPHA,
    max_exact_n: int = DEFAULT_MAX_EXACT_N,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    backend: str | None = None,
) -> PermutationTestResult:
    """Two-sided sign-flip test on the mean paired difference.

    With ``n <= max_exact_n`` pairs all ``2**n`` sign vectors are enumerated;
    otherwise ``iterations`` seeded sign vectors are drawn and the add-one
    estimate ``(1 + hits) / (iterations + 1)`` is returned.
    """
    if len(a) != len(b):
        raise DomainError(f"length mismatch: {len(a)} vs {len(b)}")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = len(d)
    if n < 1:
        raise DomainError("permutation test needs at least one pair")
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    if not np.all(np.isfinite(d)):
        raise DomainError("scores must be finite")
    seed = check_seed(seed)
    impl = kernels.get_backend(backend)

    observed = math.fsum(d)
    threshold = abs(observed) - _TIE_RTOL * math.fsum(np.abs(d))
    stat = abs(observed) / n
    if n <= max_exact_n:
        hits = impl.exact_count(d, threshold)
        return PermutationTestResult(hits / 2.0**n, stat, "exact", n, alpha)
    hits = impl.monte_carlo_count(d, seed, 0, iterations, threshold)
    return PermutationTestResult((1 + hits) / (iterations + 1), stat, "monte_carlo", n, alpha, iterations, seed)


@dataclass(frozen=True)
class BandPoint:
    eta: float
    p_value: float
    indistinguishable: bool

    def to_dict(self) -> dict[str, Any]:
        return {"eta": self.eta, "p_value": self.p_value, "indistinguishable": self.indistinguishable}


def significance_band(
    batch: Batch,
    rule: DeferralRule,
    grid: Iterable[float] = DEFAULT_GRID,
    family: str = "quality",
    reference: str = "quality_large",
    alpha: float = DEFAULT_ALPHA,
    max_exact_n: int = DEFAULT_MAX_EXACT_N,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
) -> list[BandPoint]:
    """Pointwise test of the cascade against a reference system at each budget.

    A point is flagged when the cascade is not significantly different from
    the reference at level ``alpha``.
    """
    ref = batch.column(reference)
    out = []
    for eta in grid:
        decision = select_deferrals(batch, rule, eta)
        realized = apply_decision(batch, decision, family)
        res = paired_permutation_test(realized, ref, alpha, max_exact_n, iterations, seed)
        out.append(BandPoint(eta, res.p_value, res.p_value >= alpha))
    return out
