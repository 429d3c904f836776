"""Internal LM estimation for CTC by iterative input masking.

Each masked copy of an utterance is re-scored; frames whose posteriors
move enough under a mask (normalized max-abs change above ``gamma``)
contribute that mask's log-posteriors to the frame's ILM estimate. The
summed contributions are renormalized with log-softmax, and the weighted
ILM is subtracted from the original log-posteriors wherever the blank
probability stays under ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .acoustic import score_batch
from .core import FeatureSequence, LogPosteriorMatrix, log_softmax
from .errors import UsageError
from .masking import MaskPlan, apply_mask


@dataclass(frozen=True)
class IlmConfig:
    gamma: float = 0.25
    beta: float = 0.9
    lambda_ilm: float = 0.1
    # False scores the K+1 sequences one at a time (lower peak memory)
    batched: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise UsageError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.beta <= 1.0:
            raise UsageError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.lambda_ilm >= 0.0:
            raise UsageError(f"lambda_ilm must be >= 0, got {self.lambda_ilm}")


@dataclass(frozen=True)
class IlmEstimate:
    """Per-frame ILM log-distribution.

    Rows of frames with ``applied[t] == False`` hold NaN and must not be read.
    """

    rows: np.ndarray
    contributing_mask_counts: np.ndarray
    applied: np.ndarray


@dataclass(frozen=True)
class IlmDiagnostics:
    delta_hat: np.ndarray  # K x T
    contributing_mask_counts: np.ndarray
    blank_prob: np.ndarray
    adjusted: np.ndarray  # frames where the ILM was actually subtracted
    original: LogPosteriorMatrix | None = field(default=None, repr=False)

    def report(self) -> str:
        K = self.delta_hat.shape[0]
        head = "# frame\tblank_prob\tadjusted\tcount\t" + "\t".join(f"dhat_{k + 1}" for k in range(K))
        lines = [head]
        for t in range(self.blank_prob.shape[0]):
            dh = "\t".join(f"{self.delta_hat[k, t]:.6f}" for k in range(K))
            lines.append(f"{t}\t{self.blank_prob[t]:.6f}\t{int(self.adjusted[t])}\t"
                         f"{int(self.contributing_mask_counts[t])}\t{dh}")
        return "\n".join(lines) + "\n"


def _as_array(m) -> np.ndarray:
    if isinstance(m, LogPosteriorMatrix):
        return m.as_float64()
    return np.asarray(m, dtype=np.float64)


def posterior_deltas(original, masked) -> np.ndarray:
    """Per-frame max over tokens of |masked - original| log-posterior."""
    a = _as_array(original)
    b = _as_array(masked)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.asarray(kernels.max_abs_diff_rows(a, b), dtype=np.float64)


def normalize_deltas(deltas) -> np.ndarray:
    """Scale a mask's deltas by their maximum over frames.

    All-zero input stays all-zero. If some delta is infinite (a token
    moved to or from probability zero), those frames map to 1 and the rest to 0.
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise UsageError("normalize_deltas needs at least one frame")
    if (d < 0).any() or np.isnan(d).any():
        raise UsageError("deltas must be non-negative")
    top = d.max()
    if top == 0.0:
        return np.zeros_like(d)
    if np.isinf(top):
        return np.where(np.isinf(d), 1.0, 0.0)
    return d / top


def estimate_ilm(original, masked_set: Sequence, plan: MaskPlan, config: IlmConfig,
                 delta_hat: np.ndarray | None = None) -> IlmEstimate:
    """ILM pseudo log-likelihood per frame.

    For every frame, the log-posteriors of exactly those masks whose
    normalized delta is strictly greater than ``gamma`` are summed and then
    log-softmaxed. ``delta_hat`` (K x T) may be passed when already computed.
    """
    orig = _as_array(original)
    if len(masked_set) != plan.K:
        raise UsageError(f"{len(masked_set)} masked matrices for a plan with K={plan.K}")
    if plan.T != orig.shape[0]:
        raise UsageError(f"plan covers T={plan.T}, posteriors have T={orig.shape[0]}")
    stack = np.stack([_as_array(m) for m in masked_set])
    if stack.shape[1:] != orig.shape:
        raise UsageError(f"masked matrices have shape {stack.shape[1:]}, original {orig.shape}")
    if delta_hat is None:
        delta_hat = np.stack([normalize_deltas(posterior_deltas(orig, m)) for m in stack])
    selected = delta_hat > config.gamma  # K x T
    counts = selected.sum(axis=0).astype(np.int64)
    applied = counts > 0
    summed = np.zeros_like(orig)
    for k in range(plan.K):
        sel = selected[k]
        summed[sel] += stack[k][sel]
    rows = np.full_like(orig, np.nan)
    if applied.any():
        rows[applied] = log_softmax(summed[applied], axis=1)
    for arr in (rows, counts, applied):
        arr.setflags(write=False)
    return IlmEstimate(rows, counts, applied)


def adjustment_gate(original, ilm: IlmEstimate, config: IlmConfig, blank_index: int) -> np.ndarray:
    """Frames that receive the ILM subtraction."""
    orig = _as_array(original)
    blank_prob = np.exp(orig[:, blank_index])
    return (blank_prob < config.beta) & ilm.applied


def adjust_scores(original, ilm: IlmEstimate, config: IlmConfig, blank_index: int) -> np.ndarray:
    """Subtract ``lambda_ilm`` times the ILM from gated frames; other rows are copied.

    The result is a score matrix, not renormalized.
    """
    orig = _as_array(original)
    if ilm.rows.shape != orig.shape:
        raise UsageError(f"ILM shape {ilm.rows.shape} vs posteriors {orig.shape}")
    out = np.array(orig, dtype=np.float64)
    if config.lambda_ilm != 0.0:
        gate = adjustment_gate(orig, ilm, config, blank_index)
        out[gate] = orig[gate] - config.lambda_ilm * ilm.rows[gate]
    out.setflags(write=False)
    return out


def run_ilme(X: FeatureSequence, scorer, plan: MaskPlan, config: IlmConfig, blank_index: int):
    """Mask, re-score, estimate and adjust for one utterance.

    Returns ``(adjusted_scores, estimate, diagnostics)``; the unmasked
    posteriors ride along as ``diagnostics.original``. The original
    sequence is always first in the scoring batch.
    """
    if plan.T != X.T:
        raise UsageError(f"plan covers T={plan.T}, features have T={X.T}")
    inputs = [X] + [apply_mask(X, plan, k) for k in range(plan.K)]
    if config.batched:
        outputs = score_batch(scorer, inputs)
    else:
        outputs = [score_batch(scorer, [x])[0] for x in inputs]
    original, masked = outputs[0], outputs[1:]
    orig = original.as_float64()
    delta_hat = np.stack([normalize_deltas(posterior_deltas(orig, m)) for m in masked])
    est = estimate_ilm(orig, masked, plan, config, delta_hat=delta_hat)
    adjusted = adjust_scores(orig, est, config, blank_index)
    diag = IlmDiagnostics(
        delta_hat=delta_hat,
        contributing_mask_counts=est.contributing_mask_counts,
        blank_prob=np.exp(orig[:, blank_index]),
        adjusted=adjustment_gate(orig, est, config, blank_index),
        original=original,
    )
    return adjusted, est, diag
