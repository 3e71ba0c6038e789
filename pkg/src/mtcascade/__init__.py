"""Budget-constrained quality-estimation deferral for cascaded MT."""

__version__ = "0.1.0"

from .core import Batch, Direction, ScoreOrientation, TranslationRecord, load_batch, save_batch, validate_for_rule
from .costmodel import (
    CostModel,
    CostReport,
    cascade_equivalent_eta,
    cascade_flops,
    parity_fraction,
    reranking_flops,
    reranking_parity_k,
    single_model_flops,
)
from .deferral import DeferralDecision, DeferralRule, RuleKind, apply_decision, priority, select_deferrals
from .evaluation import (
    CurvePoint,
    PermutationTestResult,
    WinTieLoss,
    crossover_budget,
    deferral_curve,
    mean_quality,
    paired_permutation_test,
    significance_band,
    win_tie_loss,
)

__all__ = [
    "Batch",
    "CostModel",
    "CostReport",
    "CurvePoint",
    "DeferralDecision",
    "DeferralRule",
    "Direction",
    "PermutationTestResult",
    "RuleKind",
    "ScoreOrientation",
    "TranslationRecord",
    "WinTieLoss",
    "apply_decision",
    "cascade_equivalent_eta",
    "cascade_flops",
    "crossover_budget",
    "deferral_curve",
    "load_batch",
    "mean_quality",
    "paired_permutation_test",
    "parity_fraction",
    "priority",
    "reranking_flops",
    "reranking_parity_k",
    "save_batch",
    "select_deferrals",
    "significance_band",
    "single_model_flops",
    "validate_for_rule",
    "win_tie_loss",
]
