"""ARPA backoff n-gram models: parsing, serialization and querying.

Probabilities are stored base-10 exactly as written in the file and
converted to natural log when queried.
"""

from __future__ import annotations

import gzip
import io
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ArpaParseError, ScoringError

LN10 = math.log(10.0)

_NGRAM_COUNT = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION = re.compile(r"^\\(\d+)-grams:$")

# (log10 prob, log10 backoff or None)
Entry = Tuple[float, Optional[float]]


@dataclass(eq=False)
class NGramModel:
    """Backoff tables; ``tables[n - 1]`` maps n-token tuples to :data:`Entry`."""

    tables: List[Dict[Tuple[str, ...], Entry]]
    bos: str = "<s>"
    eos: str = "</s>"
    unk: str = "<unk>"
    _cached: object = field(init=False, repr=False)

    def __post_init__(self):
        self._cached = lru_cache(maxsize=1 << 18)(self._log10_prob)

    @property
    def order(self) -> int:
        return len(self.tables)

    @property
    def counts(self) -> List[int]:
        return [len(t) for t in self.tables]

    @property
    def vocabulary(self) -> set:
        return {k[0] for k in self.tables[0]}

    def __eq__(self, other):
        if not isinstance(other, NGramModel):
            return NotImplemented
        return (self.tables == other.tables and self.bos == other.bos
                and self.eos == other.eos and self.unk == other.unk)

    def map_token(self, token: str) -> str:
        if (token,) in self.tables[0]:
            return token
        if (self.unk,) in self.tables[0]:
            return self.unk
        raise ScoringError(f"token {token!r} not in LM and no {self.unk!r} entry")

    def _log10_prob(self, context: Tuple[str, ...], word: str) -> float:
        n = len(context) + 1
        hit = self.tables[n - 1].get(context + (word,)) if n <= self.order else None
        if hit is not None:
            return hit[0]
        if not context:
            raise ScoringError(f"no unigram for {word!r}")
        ctx_entry = self.tables[len(context) - 1].get(context)
        backoff = ctx_entry[1] if ctx_entry is not None and ctx_entry[1] is not None else 0.0
        return backoff + self._cached(context[1:], word)

    def log10_prob(self, history: Sequence[str], token: str) -> float:
        word = self.map_token(token)
        ctx = tuple(self.map_token(h) for h in history[-(self.order - 1):]) if self.order > 1 else ()
        return self._cached(ctx, word)


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        return io.StringIO(raw.decode("utf-8"))
    return source


def parse_arpa(source, bos: str = "<s>", eos: str = "</s>", unk: str = "<unk>") -> NGramModel:
    """Parse ARPA text from a path (plain or gzip) or a text stream."""
    stream = _open_text(source)
    declared: Dict[int, int] = {}
    tables: Dict[int, Dict[Tuple[str, ...], Entry]] = {}
    state = "start"
    current = 0
    section_line = 0
    lineno = 0

    def close_section():
        if current and len(tables[current]) != declared[current]:
            raise ArpaParseError(
                f"\\{current}-grams: section has {len(tables[current])} entries, "
                f"header declares {declared[current]}", section_line)

    for lineno, raw_line in enumerate(stream, 1):
        line = raw_line.strip()
        if not line:
            continue
        if state == "start":
            if line == "\\data\\":
                state = "data"
            continue
        if line == "\\end\\":
            close_section()
            state = "end"
            break
        sec = _SECTION.match(line)
        if sec:
            if state == "data" and not declared:
                raise ArpaParseError("\\data\\ section declares no n-gram counts", lineno)
            close_section()
            n = int(sec.group(1))
            if n not in declared:
                raise ArpaParseError(f"section \\{n}-grams: not declared in \\data\\", lineno)
            if n != current + 1:
                raise ArpaParseError(f"section \\{n}-grams: out of order", lineno)
            current = n
            section_line = lineno
            tables[n] = {}
            state = "grams"
            continue
        if state == "data":
            m = _NGRAM_COUNT.match(line)
            if not m:
                raise ArpaParseError(f"malformed count line {line!r}", lineno)
            declared[int(m.group(1))] = int(m.group(2))
            continue
        # inside an n-gram section
        key, entry = _parse_entry(raw_line.rstrip("\r\n"), current, lineno)
        if key in tables[current]:
            raise ArpaParseError(f"duplicate {current}-gram {' '.join(key)!r}", lineno)
        tables[current][key] = entry

    if state == "start":
        raise ArpaParseError("missing \\data\\ section", None)
    if state != "end":
        raise ArpaParseError("missing \\end\\ marker", None)
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        raise ArpaParseError(f"\\data\\ declares orders {sorted(declared)}, expected 1..{order}", None)
    for n in range(1, order + 1):
        if n not in tables:
            raise ArpaParseError(f"missing \\{n}-grams: section", None)
    for n in range(2, order + 1):
        lower = tables[n - 1]
        for key in tables[n]:
            if key[:-1] not in lower:
                raise ArpaParseError(
                    f"{n}-gram {' '.join(key)!r} has no {n - 1}-gram history entry", None)
    return NGramModel([tables[n] for n in range(1, order + 1)], bos=bos, eos=eos, unk=unk)


def _parse_entry(line: str, n: int, lineno: int):
    fields = line.split("\t")
    if len(fields) in (2, 3) and len(fields[1].split()) == n:
        prob_s, words_s = fields[0], fields[1]
        bo_s = fields[2] if len(fields) == 3 else None
        words = words_s.split()
    else:
        parts = line.split()
        if len(parts) == n + 1:
            prob_s, words, bo_s = parts[0], parts[1:], None
        elif len(parts) == n + 2:
            prob_s, words, bo_s = parts[0], parts[1:-1], parts[-1]
        else:
            raise ArpaParseError(f"malformed {n}-gram line {line!r}", lineno)
    try:
        prob = float(prob_s)
        bo = float(bo_s) if bo_s is not None and bo_s.strip() else None
    except ValueError:
        raise ArpaParseError(f"non-numeric field in {line!r}", lineno) from None
    if math.isnan(prob) or (bo is not None and math.isnan(bo)):
        raise ArpaParseError(f"NaN in {line!r}", lineno)
    return tuple(words), (prob, bo)


def write_arpa(model: NGramModel) -> str:
    """Serialize to ARPA text. Floats use shortest round-trip repr."""
    out = ["", "\\data\\"]
    for n, table in enumerate(model.tables, 1):
        out.append(f"ngram {n}={len(table)}")
    for n, table in enumerate(model.tables, 1):
        out.append("")
        out.append(f"\\{n}-grams:")
        for key, (prob, bo) in table.items():
            line = f"{prob!r}\t{' '.join(key)}"
            if bo is not None:
                line += f"\t{bo!r}"
            out.append(line)
    out += ["", "\\end\\", ""]
    return "\n".join(out)


def load_arpa(path, **kw) -> NGramModel:
    return parse_arpa(path, **kw)


def score_token(model: NGramModel, history: Sequence[str], token: str) -> float:
    """Natural-log P(token | history) with standard backoff."""
    return LN10 * model.log10_prob(history, token)


def score_sequence(model: NGramModel, tokens: Sequence[str]) -> float:
    """Natural-log probability of ``<s> tokens </s>``."""
    history = [model.bos]
    total = 0.0
    for tok in tokens:
        total += score_token(model, history, tok)
        history.append(tok)
    return total + score_token(model, history, model.eos)


class TokenLmScorer:
    """Incremental LM state for beam search over decoder token ids.

    State is the tuple of the last order-1 LM tokens. In word mode
    (``word_start_marker`` set) subword tokens are glued into words and a
    word is scored only once the next word starts or the sentence ends;
    the state then also carries the pending partial word.
    """

    def __init__(self, model: NGramModel, tokens: Sequence[str],
                 word_start_marker: Optional[str] = None):
        self.model = model
        self.tokens = list(tokens)
        self.marker = word_start_marker
        self._keep = max(model.order - 1, 1)

    @property
    def word_mode(self) -> bool:
        return bool(self.marker)

    def initial_state(self):
        hist = (self.model.bos,)
        return (hist, "") if self.word_mode else hist

    def _push(self, hist, word):
        lp = score_token(self.model, hist, word)
        return (hist + (word,))[-self._keep:], lp

    def step(self, state, token_id: int):
        tok = self.tokens[token_id]
        if not self.word_mode:
            return self._push(state, tok)
        hist, pending = state
        m = self.marker
        if tok.startswith(m):
            piece = tok[len(m):]
            if pending:
                hist, lp = self._push(hist, pending)
                return (hist, piece), lp
            return (hist, piece), 0.0
        return (hist, pending + tok), 0.0

    def final(self, state) -> float:
        if not self.word_mode:
            return score_token(self.model, state, self.model.eos)
        hist, pending = state
        lp = 0.0
        if pending:
            hist, lp = self._push(hist, pending)
        return lp + score_token(self.model, hist, self.model.eos)

    def score_ids(self, ids: Iterable[int]) -> float:
        state = self.initial_state()
        total = 0.0
        for i in ids:
            state, lp = self.step(state, i)
            total += lp
        return total + self.final(state)
