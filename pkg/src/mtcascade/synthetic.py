"""Synthetic batches with a known quality structure.

Generative story, per segment ``i``:

* small-model quality ``q_s ~ Normal(-3.0, 1.0)`` (MetricX-like, higher is
  better after negation);
* large-model quality ``q_l = q_s + g`` where the gain
  ``g = 0.22 - 0.5 * (q_s + 3.0) + Normal(0, 0.5)`` is largest where the
  small model did worst, and negative for a sizeable share of segments
  (so an oracle that must defer a fixed fraction eventually loses quality);
* QE score ``qe = 0.8 + 0.05 * (q_s + 3.0) + Normal(0, qe_noise)``, so the
  QE ranking tracks small-model quality (Spearman about 0.8 at the default
  noise);
* source length and length-normalised log-probability only weakly
  related to quality.
"""

from __future__ import annotations

import numpy as np

from .core import Batch, TranslationRecord


def make_batch(n: int = 200, seed: int = 0, qe_noise: float = 0.03, name: str = "synthetic") -> Batch:
    rng = np.random.default_rng(seed)
    q_small = rng.normal(-3.0, 1.0, n)
    gain = 0.22 - 0.5 * (q_small + 3.0) + rng.normal(0.0, 0.5, n)
    q_large = q_small + gain
    qe = 0.8 + 0.05 * (q_small + 3.0) + rng.normal(0.0, qe_noise, n)
    src_len = rng.integers(5, 80, n)
    hyp_len = np.maximum(1, (src_len * rng.uniform(0.8, 1.3, n)).astype(int))
    logprob = -hyp_len * rng.uniform(0.2, 1.2, n)
    records = tuple(
        TranslationRecord(
            id=f"syn-{i}",
            lang_pair="en-xx",
            source=f"synthetic source {i}",
            qe_small=float(qe[i]),
            quality_small=float(q_small[i]),
            quality_large=float(q_large[i]),
            logprob_small=float(logprob[i]),
            hyp_token_len=int(hyp_len[i]),
            src_token_len=int(src_len[i]),
        )
        for i in range(n)
    )
    return Batch(records, name=name)


def spearman(x, y) -> float:
    """Rank correlation (average ranks for ties)."""

    def ranks(v):
        v = np.asarray(v, dtype=float)
        order = np.argsort(v, kind="mergesort")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=float)
        for val in np.unique(v):
            idx = v == val
            if idx.sum() > 1:
                r[idx] = r[idx].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])
