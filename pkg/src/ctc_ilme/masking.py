"""Mask plans: which frames each masked copy of an utterance zeroes out."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from .acoustic import KeyedFeatures
from .core import FeatureSequence
from .errors import FormatError, UsageError


@dataclass(frozen=True)
class MaskPlan:
    """K disjoint half-open frame ranges covering [0, T), ordered by start."""

    T: int
    ranges: tuple

    def __post_init__(self):
        ranges = tuple((int(a), int(b)) for a, b in self.ranges)
        object.__setattr__(self, "ranges", ranges)
        if self.T < 1 or not ranges:
            raise UsageError("a mask plan needs T >= 1 and at least one range")
        pos = 0
        for a, b in ranges:
            if a != pos or b <= a:
                raise UsageError(f"ranges must tile [0, {self.T}) with non-empty intervals; got {ranges}")
            pos = b
        if pos != self.T:
            raise UsageError(f"ranges end at {pos}, expected {self.T}")

    @property
    def K(self) -> int:
        return len(self.ranges)

    def mask_of_frame(self) -> np.ndarray:
        """Owner mask index for every frame."""
        owner = np.empty(self.T, dtype=np.int64)
        for k, (a, b) in enumerate(self.ranges):
            owner[a:b] = k
        return owner


def plan_equal(T: int, K: int) -> MaskPlan:
    """Equal partitions with floor boundaries: range k is [kT//K, (k+1)T//K)."""
    if K < 1 or K > T:
        raise UsageError(f"need 1 <= K <= T, got K={K}, T={T}")
    return MaskPlan(T, tuple((k * T // K, (k + 1) * T // K) for k in range(K)))


def plan_segments(T: int, boundaries: Sequence[int]) -> MaskPlan:
    """Ranges between interior boundaries, e.g. word boundaries from an alignment."""
    if T < 1:
        raise UsageError("T must be >= 1")
    cuts = [int(b) for b in boundaries]
    for b in cuts:
        if not 0 < b < T:
            raise UsageError(f"boundary {b} outside (0, {T})")
    if any(b2 <= b1 for b1, b2 in zip(cuts, cuts[1:])):
        raise UsageError(f"boundaries must be strictly increasing: {cuts}")
    edges = [0] + cuts + [T]
    return MaskPlan(T, tuple(zip(edges[:-1], edges[1:])))


def apply_mask(X: FeatureSequence, plan: MaskPlan, k: int) -> FeatureSequence:
    """Copy of ``X`` with every frame of range ``k`` set to the zero vector."""
    if not 0 <= k < plan.K:
        raise UsageError(f"mask index {k} outside [0, {plan.K})")
    if plan.T != X.T:
        raise UsageError(f"plan covers T={plan.T} frames, features have T={X.T}")
    a, b = plan.ranges[k]
    frames = np.array(X.frames)
    frames[a:b] = 0.0
    if isinstance(X, KeyedFeatures):
        return X.with_mask(frames, str(k + 1))
    return FeatureSequence(frames)


def read_segments_file(path) -> Dict[str, list]:
    """Parse ``utt<TAB>b1,b2,...`` lines. An empty list means a single mask."""
    out: Dict[str, list] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        utt, _, rest = line.partition("\t")
        rest = rest.strip()
        try:
            out[utt] = [int(v) for v in rest.split(",")] if rest else []
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad boundary list {rest!r}") from None
    return out
