"""Acoustic scorers: anything that turns feature sequences into log-posteriors.

Two providers ship with the engine. :class:`FileScorer` replays matrices
exported by a real model as LPM files; :class:`ToyConvModel` is a small
seeded convolutional model whose output at a frame depends on a fixed
window of neighbouring input frames.

LPM layout (little-endian): ``b"LPM1"``, uint32 T, uint32 N, then T*N
float32 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from .core import FeatureSequence, LogPosteriorMatrix, Vocabulary, check_log_posteriors, log_softmax
from .errors import FormatError, ScoringError, UsageError

LPM_MAGIC = b"LPM1"
_HEADER = struct.Struct("<4sII")

ORIGINAL_MASK_ID = "0"


class AcousticScorer(Protocol):
    def score(self, batch: Sequence[FeatureSequence]) -> list[LogPosteriorMatrix]:
        ...


def store_lpm(matrix: LogPosteriorMatrix, path) -> None:
    """Write ``matrix`` as float32 LPM. float64 input is rounded to float32."""
    frames = np.asarray(matrix.frames if isinstance(matrix, LogPosteriorMatrix) else matrix)
    T, N = frames.shape
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LPM_MAGIC, T, N))
        fh.write(payload)


def load_lpm(path) -> LogPosteriorMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, T, N = _HEADER.unpack_from(data)
    if magic != LPM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {LPM_MAGIC!r}")
    if T < 1 or N < 2:
        raise FormatError(f"{path}: invalid dimensions T={T}, N={N}")
    expected = _HEADER.size + 4 * T * N
    if len(data) < expected:
        raise FormatError(f"{path}: truncated payload, {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes after payload")
    frames = np.frombuffer(data, dtype="<f4", count=T * N, offset=_HEADER.size)
    frames = frames.reshape(T, N).astype(np.float32)
    try:
        check_log_posteriors(frames)
    except UsageError as exc:
        raise FormatError(f"{path}: normalization error: {exc}") from None
    return LogPosteriorMatrix(frames, validate=False)


class KeyedFeatures(FeatureSequence):
    """Feature sequence tagged with the (utterance, mask) key a file scorer needs.

    For file-backed utterances the frames are a zero placeholder carrying
    only T; the real posteriors come from disk.
    """

    __slots__ = ("utterance_id", "mask_id")

    def __init__(self, frames, utterance_id: str, mask_id: str = ORIGINAL_MASK_ID):
        super().__init__(frames)
        self.utterance_id = utterance_id
        self.mask_id = mask_id

    @classmethod
    def placeholder(cls, T: int, utterance_id: str) -> "KeyedFeatures":
        return cls(np.zeros((T, 1)), utterance_id)

    def with_mask(self, frames, mask_id: str) -> "KeyedFeatures":
        return KeyedFeatures(frames, self.utterance_id, mask_id)


def read_lpm_manifest(path) -> Dict[Tuple[str, str], Path]:
    """Parse ``utt<TAB>mask<TAB>path`` lines; relative paths resolve against the manifest."""
    base = Path(path).parent
    table: Dict[Tuple[str, str], Path] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        utt, mask, p = parts
        fp = Path(p)
        table[(utt, mask)] = fp if fp.is_absolute() else base / fp
    return table


def write_lpm_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (utt, mask), p in entries:
            fh.write(f"{utt}\t{mask}\t{p}\n")


class FileScorer:
    """Serves precomputed posteriors keyed by (utterance-id, mask-id)."""

    def __init__(self, paths: Dict[Tuple[str, str], Path]):
        self.paths = dict(paths)

    @classmethod
    def from_manifest(cls, path) -> "FileScorer":
        return cls(read_lpm_manifest(path))

    def utterances(self) -> list[str]:
        return sorted({u for u, _ in self.paths})

    def mask_ids(self, utterance_id: str) -> list[str]:
        return sorted((m for u, m in self.paths if u == utterance_id), key=_mask_sort_key)

    def original(self, utterance_id: str) -> LogPosteriorMatrix:
        return self._load(utterance_id, ORIGINAL_MASK_ID, None)

    def _load(self, utt, mask, index):
        key = (utt, mask)
        if key not in self.paths:
            raise ScoringError(f"no LPM file for utterance {utt!r}, mask {mask!r}", index)
        try:
            return load_lpm(self.paths[key])
        except (OSError, FormatError) as exc:
            raise ScoringError(f"utterance {utt!r}, mask {mask!r}: {exc}", index) from exc

    def score(self, batch):
        out = []
        for i, item in enumerate(batch):
            if not isinstance(item, KeyedFeatures):
                raise ScoringError("FileScorer needs KeyedFeatures inputs", i)
            m = self._load(item.utterance_id, item.mask_id, i)
            if m.T != item.T:
                raise ScoringError(
                    f"utterance {item.utterance_id!r}, mask {item.mask_id!r}: file has T={m.T}, input has T={item.T}", i)
            out.append(m)
        return out


def _mask_sort_key(m):
    return (0, int(m)) if m.isdigit() else (1, m)


class ToyConvModel:
    """Seeded 1-D convolution over features followed by log-softmax.

    logits[t] = bias + sum_{j=-r..r} x[t+j] @ W[j + r], with zero padding
    outside [0, T). The output at frame t therefore depends on input
    frames t-r..t+r only.

    ``identity_gain`` adds a scaled identity to the centre tap (on the first
    min(D, N) dimensions) so features built as token one-hots are
    recognisable. ``blank_bias`` is added to the blank logit.
    """

    def __init__(self, vocabulary: Vocabulary, feature_dim: int, context_radius: int = 2,
                 seed: int = 7, weight_scale: float = 1.0, identity_gain: float = 0.0,
                 blank_bias: float = 0.0):
        if feature_dim < 1 or context_radius < 0:
            raise UsageError("feature_dim must be >= 1 and context_radius >= 0")
        self.vocabulary = vocabulary
        self.feature_dim = feature_dim
        self.context_radius = context_radius
        self.seed = seed
        self.weight_scale = weight_scale
        self.identity_gain = identity_gain
        self.blank_bias = blank_bias
        N = len(vocabulary)
        taps = 2 * context_radius + 1
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((taps, feature_dim, N)) * (weight_scale / np.sqrt(feature_dim * taps))
        bias = rng.standard_normal(N) * 0.1
        m = min(feature_dim, N)
        W[context_radius, np.arange(m), np.arange(m)] += identity_gain
        bias[vocabulary.blank_index] += blank_bias
        W.setflags(write=False)
        bias.setflags(write=False)
        self.weights = W
        self.bias = bias

    def logits(self, x: np.ndarray) -> np.ndarray:
        T = x.shape[0]
        r = self.context_radius
        padded = np.zeros((T + 2 * r, self.feature_dim))
        padded[r:r + T] = x
        out = np.tile(self.bias, (T, 1))
        for j in range(2 * r + 1):
            out += padded[j:j + T] @ self.weights[j]
        return out

    def score(self, batch):
        out = []
        for i, item in enumerate(batch):
            if item.D != self.feature_dim:
                raise ScoringError(f"feature dim {item.D} != model dim {self.feature_dim}", i)
            lp = log_softmax(self.logits(item.frames), axis=1)
            out.append(LogPosteriorMatrix(lp, validate=False))
        return out


def score_batch(scorer: AcousticScorer, inputs: Sequence[FeatureSequence]) -> list[LogPosteriorMatrix]:
    """Score a batch in one call, checking shapes on the way out."""
    if not inputs:
        raise UsageError("score_batch needs at least one input")
    D = inputs[0].D
    for i, x in enumerate(inputs):
        if x.D != D:
            raise ScoringError(f"input {i} has D={x.D}, expected {D}", i)
    try:
        outputs = list(scorer.score(inputs))
    except ScoringError:
        raise
    except Exception as exc:
        raise ScoringError(f"scorer failed: {exc}") from exc
    if len(outputs) != len(inputs):
        raise ScoringError(f"scorer returned {len(outputs)} outputs for {len(inputs)} inputs")
    for i, (x, m) in enumerate(zip(inputs, outputs)):
        if m.T != x.T:
            raise ScoringError(f"output {i} has T={m.T}, input has T={x.T}", i)
    return outputs
