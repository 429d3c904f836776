"""Greedy and prefix beam-search CTC decoding with shallow fusion.

ILME reaches the decoder only through an already-adjusted score matrix;
nothing here knows about masks or internal LMs apart from
:func:`attribute_ilm`, which splits a finished hypothesis' acoustic score
into its raw and ILM parts for reporting.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import kernels
from .acoustic import score_batch
from .core import FeatureSequence, Hypothesis, LogPosteriorMatrix, Vocabulary, collapse_ctc, compose_total
from .errors import ConfigError, IlmeError
from .ilme import IlmConfig, IlmDiagnostics, run_ilme
from .masking import MaskPlan
from .ngram import NGramModel, TokenLmScorer

log = logging.getLogger(__name__)

MODES = ("baseline", "sf", "ilme", "ilme+sf")


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 50
    lambda_lm: float = 1.0
    token_insertion_bonus: float = 0.0
    # candidate tokens scoring below (frame best - threshold) are skipped; inf disables
    prune_log_threshold: float = math.inf
    # score LM over whole words assembled at the vocabulary's word-start marker
    lm_word_level: bool = False
    nbest: int = 1

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError(f"beam_size must be >= 1, got {self.beam_size}", "beam_size")
        if not self.lambda_lm >= 0:
            raise ConfigError(f"lambda_lm must be >= 0, got {self.lambda_lm}", "lambda_lm")
        if not self.prune_log_threshold > 0:
            raise ConfigError("prune_log_threshold must be positive", "prune_log_threshold")
        if self.nbest < 1:
            raise ConfigError("nbest must be >= 1", "nbest")


def _scores_array(scores) -> np.ndarray:
    if isinstance(scores, LogPosteriorMatrix):
        return scores.as_float64()
    return np.ascontiguousarray(scores, dtype=np.float64)


def greedy_decode(scores, vocabulary: Vocabulary) -> Hypothesis:
    """Per-frame argmax (lowest index wins ties), then CTC collapse."""
    arr = _scores_array(scores)
    path = arr.argmax(axis=1)
    best = float(arr[np.arange(arr.shape[0]), path].sum())
    tokens = collapse_ctc(path.tolist(), vocabulary.blank_index)
    return Hypothesis(tuple(tokens), best, 0.0, 0.0, best)


def make_lm_scorer(lm: NGramModel, vocabulary: Vocabulary, word_level: bool = False) -> TokenLmScorer:
    """Bind an n-gram model to decoder token ids, checking the vocabularies agree."""
    marker = vocabulary.word_start_marker if word_level else None
    if word_level and not marker:
        raise ConfigError("word-level LM fusion needs a vocabulary word_start_marker", "lm_word_level")
    has_unk = (lm.unk,) in lm.tables[0]
    if not has_unk:
        if word_level:
            raise ConfigError(f"word-level fusion needs {lm.unk!r} in the LM", "lm")
        lm_vocab = lm.vocabulary
        missing = [t for i, t in enumerate(vocabulary.tokens)
                   if i != vocabulary.blank_index and t not in lm_vocab]
        if missing:
            raise ConfigError(f"LM lacks {lm.unk!r} and tokens {missing[:5]}", "lm")
    return TokenLmScorer(lm, vocabulary.tokens, marker)


def beam_decode(scores, vocabulary: Vocabulary, lm: Optional[NGramModel] = None,
                config: DecodeConfig = DecodeConfig(), backend: Optional[str] = None) -> List[Hypothesis]:
    """CTC prefix beam search; returns the final beam ranked by total score."""
    arr = _scores_array(scores)
    impl = kernels.get_backend(backend)
    lm_weight = config.lambda_lm if lm is not None else 0.0
    if lm is not None:
        scorer = make_lm_scorer(lm, vocabulary, config.lm_word_level)
        init, step, final = scorer.initial_state(), scorer.step, scorer.final
    else:
        init, step, final = None, None, None
    raw = impl.prefix_beam_search(arr, vocabulary.blank_index, config.beam_size,
                                  float(config.prune_log_threshold),
                                  float(config.token_insertion_bonus), float(lm_weight),
                                  init, step, final)
    hyps = []
    for prefix, ac, lm_total in raw:
        if config.token_insertion_bonus:
            ac = ac + config.token_insertion_bonus * len(prefix)
        lm_score = lm_total if lm is not None else 0.0
        hyps.append(Hypothesis(prefix, ac, 0.0, lm_score, compose_total(ac, 0.0, lm_score, 0.0, lm_weight)))
    return hyps


def ctc_log_likelihood(scores, tokens: Sequence[int], blank_index: int, backend: Optional[str] = None) -> float:
    """Exact log path-sum over all alignments of ``tokens``."""
    return kernels.get_backend(backend).ctc_forward(_scores_array(scores), list(tokens), blank_index)


def attribute_ilm(hyps: Sequence[Hypothesis], raw, adjusted, lambda_ilm: float,
                  blank_index: int) -> List[Hypothesis]:
    """Split each hypothesis' acoustic term into raw CTC and ILM parts.

    ``ilm_score`` is the drop in exact alignment log-sum caused by the
    adjustment, divided by ``lambda_ilm``. The total score is unchanged.
    """
    if lambda_ilm == 0:
        return list(hyps)
    raw_a, adj_a = _scores_array(raw), _scores_array(adjusted)
    out = []
    for h in hyps:
        shift = ctc_log_likelihood(raw_a, h.tokens, blank_index) - ctc_log_likelihood(adj_a, h.tokens, blank_index)
        if not math.isfinite(shift):
            shift = 0.0
        out.append(Hypothesis(h.tokens, h.acoustic_score + shift, shift / lambda_ilm,
                              h.lm_score, h.total_score))
    return out


@dataclass
class UtteranceResult:
    utt_id: str
    hypotheses: List[Hypothesis] = field(default_factory=list)
    text: str = ""
    diagnostics: Optional[IlmDiagnostics] = None
    error: Optional[str] = None


@dataclass
class CorpusResult:
    mode: str
    results: List[UtteranceResult]

    @property
    def failures(self) -> Dict[str, str]:
        return {r.utt_id: r.error for r in self.results if r.error}

    def transcripts_text(self) -> str:
        return "".join(f"{r.utt_id}\t{r.text}\n" for r in self.results if not r.error)

    def nbest_text(self, vocabulary: Vocabulary) -> str:
        lines = []
        for r in self.results:
            for rank, h in enumerate(r.hypotheses, 1):
                lines.append(f"{r.utt_id}\t{rank}\t{h.acoustic_score:.6f}\t{h.ilm_score:.6f}\t"
                             f"{h.lm_score:.6f}\t{h.total_score:.6f}\t{vocabulary.detokenize(h.tokens)}\n")
        return "".join(lines)


def decode_utterance(utt_id: str, X: FeatureSequence, scorer, mode: str, vocabulary: Vocabulary,
                     lm: Optional[NGramModel], ilm_config: IlmConfig, decode_config: DecodeConfig,
                     plan_for: Callable[[str, int], MaskPlan]) -> UtteranceResult:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}", "mode")
    use_lm = lm if mode in ("sf", "ilme", "ilme+sf") else None
    diag = None
    if mode in ("ilme", "ilme+sf"):
        plan = plan_for(utt_id, X.T)
        scores, _, diag = run_ilme(X, scorer, plan, ilm_config, vocabulary.blank_index)
        raw = diag.original
    else:
        raw = score_batch(scorer, [X])[0]
        scores = raw
    hyps = beam_decode(scores, vocabulary, use_lm, decode_config)
    if diag is not None:
        hyps = attribute_ilm(hyps, raw, scores, ilm_config.lambda_ilm, vocabulary.blank_index)
    hyps = hyps[:decode_config.nbest]
    text = vocabulary.detokenize(hyps[0].tokens) if hyps else ""
    return UtteranceResult(utt_id, hyps, text, diag)


def decode_corpus(utterances: Sequence[tuple], scorer, mode: str, vocabulary: Vocabulary,
                  lm: Optional[NGramModel] = None, ilm_config: IlmConfig = IlmConfig(),
                  decode_config: DecodeConfig = DecodeConfig(),
                  plan_for: Optional[Callable[[str, int], MaskPlan]] = None,
                  workers: int = 1) -> CorpusResult:
    """Decode ``(utt_id, FeatureSequence)`` pairs; output order is sorted by utterance id.

    Per-utterance failures are recorded on the result and do not stop the run.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}", "mode")
    if mode in ("sf", "ilme+sf") and lm is None:
        raise ConfigError(f"mode {mode!r} needs an LM", "lm")
    if plan_for is None:
        from .masking import plan_equal
        plan_for = lambda _utt, T: plan_equal(T, min(5, T))  # noqa: E731
    items = sorted(utterances, key=lambda u: u[0])

    def run(item):
        utt_id, X = item
        try:
            return decode_utterance(utt_id, X, scorer, mode, vocabulary, lm, ilm_config, decode_config, plan_for)
        except (IlmeError, ValueError, OSError) as exc:
            log.warning("utterance %s failed: %s", utt_id, exc)
            return UtteranceResult(utt_id, error=str(exc))

    if workers <= 1:
        results = [run(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    return CorpusResult(mode, results)
