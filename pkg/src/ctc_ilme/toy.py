"""Synthetic corpus generator for demos, tests and the WER grid.

Builds a subword vocabulary, source- and target-domain text, bigram ARPA
models for both domains, noisy one-hot feature sequences for a target test
set, and the LPM files a :class:`~ctc_ilme.acoustic.FileScorer` needs
(original plus K masked copies per utterance).

The bigram estimator is interpolated absolute discounting written out in
backoff form. It exists only to produce fixtures; real runs read ARPA
files trained elsewhere.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .acoustic import ORIGINAL_MASK_ID, KeyedFeatures, ToyConvModel, store_lpm, write_lpm_manifest
from .core import FeatureSequence, Vocabulary, store_vocabulary
from .masking import apply_mask, plan_equal
from .ngram import NGramModel, write_arpa

MARKER = "▁"

_SOURCE_WORDS = {
    "det": ["the", "a", "this"],
    "noun": ["cat", "dog", "bird", "man", "child"],
    "verb": ["sat", "ran", "walked", "jumped"],
    "prep": ["on", "near", "under"],
    "place": ["mat", "road", "house", "park"],
}
_TARGET_WORDS = {
    "det": ["the", "a", "this"],
    "noun": ["bank", "market", "trader", "zantis", "korvel"],
    "verb": ["rose", "fell", "closed", "opened"],
    "prep": ["on", "near", "under"],
    "place": ["monday", "friday", "road", "exchange"],
}
# words spelled from more than one token
_SPLITS = {
    "walked": ["▁walk", "ed"],
    "jumped": ["▁jump", "ed"],
    "opened": ["▁open", "ed"],
    "closed": ["▁close", "d"],
    "zantis": ["▁zan", "tis"],
    "korvel": ["▁kor", "vel"],
    "trader": ["▁trade", "r"],
}


def toy_vocabulary() -> Vocabulary:
    pieces = set()
    for table in (_SOURCE_WORDS, _TARGET_WORDS):
        for words in table.values():
            for w in words:
                pieces.update(_SPLITS.get(w, [MARKER + w]))
    return Vocabulary(("<blank>",) + tuple(sorted(pieces)), 0, MARKER)


def tokenize(words: Sequence[str]) -> List[str]:
    out: List[str] = []
    for w in words:
        out.extend(_SPLITS.get(w, [MARKER + w]))
    return out


def _sentence(rng, table) -> List[str]:
    pick = lambda cat: table[cat][rng.integers(len(table[cat]))]  # noqa: E731
    words = [pick("det"), pick("noun"), pick("verb")]
    if rng.random() < 0.7:
        words += [pick("prep"), pick("det") if rng.random() < 0.5 else "the", pick("place")]
    return words


def estimate_bigram(sentences: Sequence[Sequence[str]], vocab: Sequence[str],
                    discount: float = 0.5, alpha: float = 0.1) -> NGramModel:
    """Interpolated absolute-discount bigram over ``vocab`` in ARPA backoff form."""
    bos, eos, unk = "<s>", "</s>", "<unk>"
    words = sorted(set(vocab) | {eos, unk})
    uni = Counter()
    big: Dict[str, Counter] = defaultdict(Counter)
    for sent in sentences:
        seq = [bos] + list(sent) + [eos]
        uni.update(seq[1:])
        for h, w in zip(seq, seq[1:]):
            big[h][w] += 1
    total = sum(uni.values())
    p_uni = {w: (uni[w] + alpha) / (total + alpha * len(words)) for w in words}
    unigrams: Dict[tuple, tuple] = {}
    bigrams: Dict[tuple, tuple] = {}
    backoffs: Dict[str, float] = {}
    for h in sorted(big):
        counts = big[h]
        c_h = sum(counts.values())
        lam = discount * len(counts) / c_h
        seen_p = 0.0
        seen_uni = 0.0
        for w in sorted(counts):
            p = max(counts[w] - discount, 0.0) / c_h + lam * p_uni[w]
            bigrams[(h, w)] = (round(math.log10(p), 6), None)
            seen_p += 10 ** bigrams[(h, w)][0]
            seen_uni += p_uni[w]
        backoffs[h] = round(math.log10(max(1.0 - seen_p, 1e-12) / (1.0 - seen_uni)), 6)
    unigrams[(bos,)] = (-99.0, backoffs.get(bos, 0.0))
    for w in words:
        unigrams[(w,)] = (round(math.log10(p_uni[w]), 6), backoffs.get(w) if w in backoffs else None)
    return NGramModel([unigrams, bigrams])


def synth_features(token_ids: Sequence[int], vocab: Vocabulary, rng, frames_per_token: int = 3,
                   noise: float = 0.75, amplitude: float = 3.0) -> FeatureSequence:
    """One-hot frames (D = N) following a simple alignment: blank, token repeats, blank, ..."""
    N = len(vocab)
    path = [vocab.blank_index]
    for tid in token_ids:
        path += [tid] * int(rng.integers(1, frames_per_token + 1))
        path += [vocab.blank_index] * int(rng.integers(1, 3))
    X = np.zeros((len(path), N))
    X[np.arange(len(path)), path] = amplitude
    X += rng.normal(scale=noise, size=X.shape)
    return FeatureSequence(X)


def toy_utterance(vocab: Vocabulary, seed: int, T: int) -> FeatureSequence:
    """Exactly ``T`` frames of target-domain speech-like features."""
    rng = np.random.default_rng(seed)
    ids: List[int] = []
    while True:
        ids += [vocab.index(t) for t in tokenize(_sentence(rng, _TARGET_WORDS))]
        X = synth_features(ids, vocab, np.random.default_rng(seed))
        if X.T >= T:
            return FeatureSequence(X.frames[:T])


def toy_model(vocab: Vocabulary, seed: int = 7, context_radius: int = 2) -> ToyConvModel:
    return ToyConvModel(vocab, feature_dim=len(vocab), context_radius=context_radius, seed=seed,
                        weight_scale=1.0, identity_gain=2.0, blank_bias=0.5)


def build_toy_corpus(out_dir, seed: int = 7, n_utts: int = 20, K: int = 5, n_text: int = 400,
                     noise: float = 0.75, context_radius: int = 2) -> Dict[str, Path]:
    """Write a complete toy experiment under ``out_dir`` and return the file map."""
    out = Path(out_dir)
    (out / "lpm").mkdir(parents=True, exist_ok=True)
    (out / "feats").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    vocab = toy_vocabulary()
    emitting = [t for i, t in enumerate(vocab.tokens) if i != vocab.blank_index]

    source_text = [_sentence(rng, _SOURCE_WORDS) for _ in range(n_text)]
    target_text = [_sentence(rng, _TARGET_WORDS) for _ in range(n_text)]
    test_sents = [_sentence(rng, _TARGET_WORDS) for _ in range(n_utts)]

    files = {
        "vocab": out / "tokens.txt",
        "source_lm": out / "source.arpa",
        "target_lm": out / "target.arpa",
        "train_words": out / "train_words.txt",
        "ref": out / "ref.txt",
        "manifest": out / "lpm_manifest.tsv",
        "features": out / "feats_manifest.tsv",
    }
    store_vocabulary(vocab, files["vocab"])
    files["source_lm"].write_text(write_arpa(estimate_bigram([tokenize(s) for s in source_text], emitting)),
                                  encoding="utf-8")
    files["target_lm"].write_text(write_arpa(estimate_bigram([tokenize(s) for s in target_text], emitting)),
                                  encoding="utf-8")
    train_words = sorted({w for s in source_text for w in s})
    files["train_words"].write_text("".join(w + "\n" for w in train_words), encoding="utf-8")

    model = toy_model(vocab, seed, context_radius)
    lpm_entries = []
    feat_lines = []
    ref_lines = []
    for u, words in enumerate(test_sents):
        utt = f"utt{u:03d}"
        ids = [vocab.index(t) for t in tokenize(words)]
        X = synth_features(ids, vocab, rng, noise=noise)
        np.save(out / "feats" / f"{utt}.npy", X.frames)
        feat_lines.append(f"{utt}\tfeats/{utt}.npy\n")
        ref_lines.append(f"{utt}\t{' '.join(words)}\n")
        keyed = KeyedFeatures(X.frames, utt)
        plan = plan_equal(X.T, min(K, X.T))
        seqs = [keyed] + [apply_mask(keyed, plan, k) for k in range(plan.K)]
        for x, m in zip(seqs, model.score(seqs)):
            rel = f"lpm/{utt}.{x.mask_id}.lpm"
            store_lpm(m, out / rel)
            lpm_entries.append(((utt, x.mask_id), rel))
    write_lpm_manifest(lpm_entries, files["manifest"])
    files["features"].write_text("".join(feat_lines), encoding="utf-8")
    files["ref"].write_text("".join(ref_lines), encoding="utf-8")
    return files


def read_feature_manifest(path) -> Dict[str, Path]:
    base = Path(path).parent
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            utt, p = line.split("\t")
            fp = Path(p)
            out[utt] = fp if fp.is_absolute() else base / fp
    return out


__all__ = ["build_toy_corpus", "estimate_bigram", "toy_vocabulary", "toy_model", "toy_utterance", "tokenize",
           "synth_features", "read_feature_manifest", "ORIGINAL_MASK_ID"]
