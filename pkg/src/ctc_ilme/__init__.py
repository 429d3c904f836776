"""Masking-based internal LM estimation and shallow-fusion decoding for CTC models."""

__version__ = "0.1.0"

from .core import (FeatureSequence, Hypothesis, LogPosteriorMatrix, Vocabulary, collapse_ctc,
                   log_softmax, log_sum_exp, load_vocabulary)
from .acoustic import FileScorer, ToyConvModel, load_lpm, score_batch, store_lpm
from .masking import MaskPlan, apply_mask, plan_equal, plan_segments
from .ilme import IlmConfig, IlmEstimate, adjust_scores, estimate_ilm, normalize_deltas, posterior_deltas, run_ilme
from .ngram import NGramModel, parse_arpa, load_arpa, score_sequence, score_token, write_arpa
from .decoder import DecodeConfig, beam_decode, decode_corpus, greedy_decode
from .metrics import mine_oov, oov_f1, word_error_rate

__all__ = [
    "FeatureSequence", "Hypothesis", "LogPosteriorMatrix", "Vocabulary", "collapse_ctc",
    "log_softmax", "log_sum_exp", "load_vocabulary",
    "FileScorer", "ToyConvModel", "load_lpm", "score_batch", "store_lpm",
    "MaskPlan", "apply_mask", "plan_equal", "plan_segments",
    "IlmConfig", "IlmEstimate", "adjust_scores", "estimate_ilm", "normalize_deltas",
    "posterior_deltas", "run_ilme",
    "NGramModel", "parse_arpa", "load_arpa", "score_sequence", "score_token", "write_arpa",
    "DecodeConfig", "beam_decode", "decode_corpus", "greedy_decode",
    "mine_oov", "oov_f1", "word_error_rate",
]
