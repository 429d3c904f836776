"""Domain types and numeric primitives used throughout the engine.

Everything lives in the natural-log domain. ``-inf`` is a legal value and
stands for a hard zero probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import UsageError

NEG_INF = float("-inf")

# Tolerances on row normalization of stored/loaded posteriors.
ROW_NORM_TOL = 1e-4
NONPOS_TOL = 1e-6


def log_sum_exp(values: Iterable[float]) -> float:
    """Stable ``log(sum(exp(values)))``.

    Returns ``-inf`` exactly when every input is ``-inf``.
    """
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64).ravel()
    if arr.size == 0:
        raise UsageError("log_sum_exp of an empty sequence")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise UsageError("log_sum_exp expects finite or -inf entries")
    peak = arr.max()
    if peak == NEG_INF:
        return NEG_INF
    return float(peak + math.log(np.exp(arr - peak).sum()))


def log_softmax(row, axis: int = -1) -> np.ndarray:
    """Normalize log-scores so that they exponentiate to a distribution.

    Works on a single row or on a matrix along ``axis``.
    """
    arr = np.asarray(row, dtype=np.float64)
    peak = arr.max(axis=axis, keepdims=True)
    shifted = arr - peak
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def row_log_norms(frames: np.ndarray) -> np.ndarray:
    """Per-row logsumexp of a 2-D array, computed in float64."""
    arr = np.asarray(frames, dtype=np.float64)
    peak = arr.max(axis=1, keepdims=True)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(arr - safe).sum(axis=1)) + safe[:, 0]
    return out


def collapse_ctc(path: Sequence[int], blank_index: int, n_tokens: Optional[int] = None) -> list[int]:
    """Map a frame-level CTC path to its label sequence.

    Consecutive duplicates are merged first, then blanks are dropped.
    ``n_tokens`` enables the range check on indices.
    """
    out: list[int] = []
    prev = None
    for idx in path:
        idx = int(idx)
        if idx < 0 or (n_tokens is not None and idx >= n_tokens):
            raise UsageError(f"token index {idx} out of range")
        if idx != prev and idx != blank_index:
            out.append(idx)
        prev = idx
    return out


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory with a designated CTC blank.

    ``word_start_marker`` is the subword prefix (e.g. ``"▁"``) that opens a
    new word; without it every token is treated as a whole word.
    """

    tokens: tuple
    blank_index: int = 0
    word_start_marker: Optional[str] = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        toks = tuple(str(t) for t in self.tokens)
        object.__setattr__(self, "tokens", toks)
        if len(toks) < 2:
            raise UsageError("vocabulary needs a blank and at least one emitting token")
        if len(set(toks)) != len(toks):
            raise UsageError("vocabulary tokens must be unique")
        if not 0 <= self.blank_index < len(toks):
            raise UsageError(f"blank_index {self.blank_index} outside [0, {len(toks)})")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(toks)})

    def __len__(self):
        return len(self.tokens)

    @property
    def blank(self) -> str:
        return self.tokens[self.blank_index]

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UsageError(f"unknown token {token!r}") from None

    def __contains__(self, token):
        return token in self._index

    def words(self, ids: Sequence[int]) -> list[str]:
        """Group token ids into words.

        With a marker, a token starting with it opens a new word and the
        marker is stripped; other tokens are glued to the current word.
        """
        toks = [self.tokens[i] for i in ids if i != self.blank_index]
        marker = self.word_start_marker
        if not marker:
            return toks
        words: list[str] = []
        for tok in toks:
            if tok.startswith(marker) or not words:
                piece = tok[len(marker):] if tok.startswith(marker) else tok
                words.append(piece)
            else:
                words[-1] += tok
        return [w for w in words if w]

    def detokenize(self, ids: Sequence[int]) -> str:
        return " ".join(self.words(ids))


def load_vocabulary(path, blank_index: int = 0, word_start_marker: Optional[str] = None) -> Vocabulary:
    """Read a one-token-per-line UTF-8 vocabulary file."""
    text = Path(path).read_text(encoding="utf-8")
    tokens = [line.rstrip("\r") for line in text.split("\n")]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return Vocabulary(tuple(tokens), blank_index, word_start_marker)


def store_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")


class LogPosteriorMatrix:
    """T x N per-frame log-posteriors.

    The array is kept in the dtype it was given (LPM files hold float32)
    and made read-only. Set ``validate=False`` only for data already known
    to satisfy the row-normalization invariants.
    """

    __slots__ = ("frames", "frame_duration")

    def __init__(self, frames, frame_duration: Optional[float] = None, validate: bool = True):
        arr = np.array(frames, copy=True)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise UsageError(f"log-posterior matrix must be T x N with T>=1, N>=2; got {arr.shape}")
        if validate:
            check_log_posteriors(arr)
        arr.setflags(write=False)
        self.frames = arr
        self.frame_duration = frame_duration

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def N(self) -> int:
        return self.frames.shape[1]

    @property
    def shape(self):
        return self.frames.shape

    def as_float64(self) -> np.ndarray:
        return self.frames.astype(np.float64, copy=False)

    def __eq__(self, other):
        if not isinstance(other, LogPosteriorMatrix):
            return NotImplemented
        return (self.frames.dtype == other.frames.dtype
                and np.array_equal(self.frames, other.frames))

    def __repr__(self):
        return f"LogPosteriorMatrix(T={self.T}, N={self.N}, dtype={self.frames.dtype})"


def check_log_posteriors(frames: np.ndarray) -> None:
    """Raise UsageError naming the first row that is not a log-distribution."""
    arr = np.asarray(frames, dtype=np.float64)
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise UsageError("log-posteriors contain NaN or +inf")
    bad = np.argwhere(arr > NONPOS_TOL)
    if bad.size:
        t, n = bad[0]
        raise UsageError(f"positive log-probability {arr[t, n]!r} at frame {t}, token {n}")
    norms = row_log_norms(arr)
    off = np.flatnonzero(~(np.abs(norms) <= ROW_NORM_TOL))
    if off.size:
        t = int(off[0])
        raise UsageError(f"row {t} not normalized: logsumexp = {norms[t]!r}")


class FeatureSequence:
    """T x D real-valued acoustic features."""

    __slots__ = ("frames",)

    def __init__(self, frames):
        arr = np.array(frames, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError(f"features must be T x D with T, D >= 1; got {arr.shape}")
        if not np.isfinite(arr).all():
            raise UsageError("features must be finite")
        arr.setflags(write=False)
        self.frames = arr

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]

    def __repr__(self):
        return f"FeatureSequence(T={self.T}, D={self.D})"


@dataclass(frozen=True)
class Hypothesis:
    """A decoded label sequence with its decomposed scores.

    ``total_score = acoustic_score - lambda_ilm * ilm_score + lambda_lm * lm_score``.
    The acoustic term is the CTC path-sum over the matrix handed to the
    decoder and absorbs any token insertion bonus.
    """

    tokens: tuple
    acoustic_score: float
    ilm_score: float
    lm_score: float
    total_score: float

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


def compose_total(acoustic: float, ilm: float, lm: float, lambda_ilm: float, lambda_lm: float) -> float:
    ilm_term = lambda_ilm * ilm if lambda_ilm else 0.0
    lm_term = lambda_lm * lm if lambda_lm else 0.0
    return acoustic - ilm_term + lm_term
