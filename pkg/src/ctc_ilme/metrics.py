"""WER and OOV-detection metrics, plus report rendering.

OOV F1 counts, per utterance and OOV term, ``min(count in hyp, count in
ref)`` matches; precision and recall pool these over all terms and
utterances.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from . import kernels
from .errors import FormatError, UsageError

OOV_F1_DEFINITION = ("OOV F1: per utterance and term, TP = min(hyp count, ref count); "
                     "P = sum TP / sum hyp count, R = sum TP / sum ref count, F1 = 2PR/(P+R)")

_PUNCT = re.compile(r"[^\w\s']|(?<!\w)'|'(?!\w)")


def normalize_words(text: str, case_fold: bool = True, strip_punct: bool = True) -> List[str]:
    if case_fold:
        text = text.casefold()
    if strip_punct:
        text = _PUNCT.sub(" ", text)
    return text.split()


@dataclass(frozen=True)
class WerCounts:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        # empty reference: insertions over max(1, R); R = 0 stays visible in ref_words
        return self.errors / max(1, self.ref_words)

    def __add__(self, other: "WerCounts") -> "WerCounts":
        return WerCounts(self.substitutions + other.substitutions, self.deletions + other.deletions,
                         self.insertions + other.insertions, self.ref_words + other.ref_words)


def word_error_rate(reference: Sequence[str], hypothesis: Sequence[str]) -> WerCounts:
    """Minimum edit alignment; ties prefer fewer insertions, then fewer deletions."""
    s, d, i = kernels.edit_counts(list(reference), list(hypothesis))
    return WerCounts(s, d, i, len(reference))


def corpus_wer(pairs: Iterable[tuple]) -> WerCounts:
    """Pooled counts over ``(ref_words, hyp_words)`` pairs."""
    total = WerCounts(0, 0, 0, 0)
    for ref, hyp in pairs:
        total = total + word_error_rate(ref, hyp)
    return total


def relative_werr(baseline_wer: float, wer: float) -> Optional[float]:
    if baseline_wer == 0:
        return None
    return (baseline_wer - wer) / baseline_wer


def f1_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


@dataclass
class TermStats:
    tp: int = 0
    hyp_count: int = 0
    ref_count: int = 0

    @property
    def precision(self) -> float:
        return self.tp / self.hyp_count if self.hyp_count else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.ref_count if self.ref_count else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


@dataclass
class OovReport:
    terms: Dict[str, TermStats]
    totals: TermStats

    @property
    def precision(self):
        return self.totals.precision

    @property
    def recall(self):
        return self.totals.recall

    @property
    def f1(self):
        return self.totals.f1


def oov_f1(references: Sequence[Sequence[str]], hypotheses: Sequence[Sequence[str]],
           oov_terms: Iterable[str]) -> OovReport:
    terms = sorted(set(oov_terms))
    if not terms:
        raise UsageError("oov_f1 needs at least one OOV term")
    if len(references) != len(hypotheses):
        raise UsageError(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    term_set = set(terms)
    stats = {w: TermStats() for w in terms}
    for ref, hyp in zip(references, hypotheses):
        rc = Counter(w for w in ref if w in term_set)
        hc = Counter(w for w in hyp if w in term_set)
        for w in rc.keys() | hc.keys():
            st = stats[w]
            st.tp += min(rc[w], hc[w])
            st.ref_count += rc[w]
            st.hyp_count += hc[w]
    totals = TermStats(sum(s.tp for s in stats.values()),
                       sum(s.hyp_count for s in stats.values()),
                       sum(s.ref_count for s in stats.values()))
    return OovReport(stats, totals)


def mine_oov(reference_corpus: Iterable[Sequence[str]], training_vocabulary: Iterable[str]) -> set:
    vocab = {w.casefold() for w in training_vocabulary}
    return {w.casefold() for sent in reference_corpus for w in sent} - vocab


def load_word_list(path) -> set:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"training vocabulary file not found: {path}")
    return {line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()}


def read_transcripts(path) -> Dict[str, str]:
    """``utt<TAB>text`` lines; a missing text field means an empty transcript."""
    out: Dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        utt, sep, text = line.partition("\t")
        if not sep and " " in utt:
            utt, _, text = utt.partition(" ")
        if utt in out:
            raise FormatError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
        out[utt] = text
    return out


@dataclass
class SystemEval:
    name: str
    per_utterance: Dict[str, WerCounts]
    corpus: WerCounts
    werr: Optional[float] = None
    oov: Optional[OovReport] = None


def evaluate_system(name: str, refs: Mapping[str, str], hyps: Mapping[str, str],
                    oov_terms: Optional[set] = None, case_fold: bool = True,
                    strip_punct: bool = True) -> SystemEval:
    """Score one system against references, in sorted utterance-id order.

    Utterances absent from ``hyps`` count as empty hypotheses.
    """
    per = {}
    ref_words, hyp_words = [], []
    for utt in sorted(refs):
        r = normalize_words(refs[utt], case_fold, strip_punct)
        h = normalize_words(hyps.get(utt, ""), case_fold, strip_punct)
        per[utt] = word_error_rate(r, h)
        ref_words.append(r)
        hyp_words.append(h)
    total = WerCounts(0, 0, 0, 0)
    for c in per.values():
        total = total + c
    oov = oov_f1(ref_words, hyp_words, oov_terms) if oov_terms else None
    return SystemEval(name, per, total, None, oov)


def compare_systems(systems: List[SystemEval], baseline: Optional[str]) -> List[SystemEval]:
    """Fill in WERR against the named baseline system."""
    if baseline is None:
        return systems
    base = next((s for s in systems if s.name == baseline), None)
    if base is None:
        raise UsageError(f"baseline system {baseline!r} not among {[s.name for s in systems]}")
    for s in systems:
        s.werr = relative_werr(base.corpus.wer, s.corpus.wer)
    return systems


def _fmt_werr(werr):
    return "-" if werr is None else f"({werr * 100:+.1f}%)"


def render_text(systems: List[SystemEval], baseline: Optional[str] = None, dataset: str = "") -> str:
    name_w = max([len("system")] + [len(s.name) for s in systems])
    lines = []
    if dataset:
        lines.append(f"dataset: {dataset}")
    lines.append(f"{'system':<{name_w}}  {'WER':>7}  {'WERR':>9}  {'S':>5} {'D':>5} {'I':>5} {'N':>6}")
    for s in systems:
        c = s.corpus
        werr = "-" if s.name == baseline else _fmt_werr(s.werr)
        lines.append(f"{s.name:<{name_w}}  {c.wer * 100:7.3f}  {werr:>9}  "
                     f"{c.substitutions:5d} {c.deletions:5d} {c.insertions:5d} {c.ref_words:6d}")
    if any(s.oov for s in systems):
        lines.append("")
        lines.append(OOV_F1_DEFINITION)
        lines.append(f"{'system':<{name_w}}  {'P':>7}  {'R':>7}  {'F1':>7}  {'TP':>5} {'hyp':>5} {'ref':>5}")
        for s in systems:
            if s.oov is None:
                continue
            o = s.oov
            lines.append(f"{s.name:<{name_w}}  {o.precision * 100:7.2f}  {o.recall * 100:7.2f}  "
                         f"{o.f1 * 100:7.2f}  {o.totals.tp:5d} {o.totals.hyp_count:5d} {o.totals.ref_count:5d}")
    return "\n".join(lines) + "\n"


def _split_name(name: str):
    """``"ILME+target"`` -> ("ILME", "target"); bare names get LM "no LM"."""
    method, _, lm = name.partition("+")
    return method, (lm or "no LM")


def render_json(systems: List[SystemEval], baseline: Optional[str] = None, dataset: str = "") -> str:
    """Machine-readable report: a WER table (method, LM, WER, WERR) and an OOV F1 table."""
    wer_rows = []
    for s in systems:
        method, lm = _split_name(s.name)
        wer_rows.append({
            "system": s.name, "method": method, "lm": lm,
            "wer": s.corpus.wer, "werr": None if s.name == baseline else s.werr,
            "substitutions": s.corpus.substitutions, "deletions": s.corpus.deletions,
            "insertions": s.corpus.insertions, "ref_words": s.corpus.ref_words,
        })
    f1_row = {"dataset": dataset}
    for s in systems:
        if s.oov is not None:
            f1_row[s.name] = s.oov.f1
    doc = {
        "dataset": dataset,
        "baseline": baseline,
        "wer_table": wer_rows,
        "oov_f1_definition": OOV_F1_DEFINITION,
        "oov_f1_table": [f1_row] if len(f1_row) > 1 else [],
        "oov_terms": {s.name: {w: asdict(t) for w, t in s.oov.terms.items()} for s in systems if s.oov},
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
