"""Command-line front end.

Subcommands: decode, eval, lm-score, mask-plan, make-toy, ilm-diagnose,
grid. Run settings come from built-in defaults, then an INI config file
(``[run]`` section), then command-line flags, later sources winning.

Exit codes: 0 success, 1 runtime failure (including any failed
utterance), 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .acoustic import FileScorer, KeyedFeatures, ToyConvModel, load_lpm, read_lpm_manifest, store_lpm
from .core import FeatureSequence, Vocabulary, load_vocabulary, store_vocabulary
from .decoder import MODES, DecodeConfig, decode_corpus
from .errors import ConfigError, IlmeError, UsageError
from .ilme import IlmConfig, run_ilme
from .masking import plan_equal, plan_segments, read_segments_file
from .metrics import (compare_systems, evaluate_system, load_word_list, mine_oov, normalize_words,
                      read_transcripts, render_json, render_text)
from .ngram import load_arpa, score_sequence

log = logging.getLogger("ctc_ilme")

WORKERS_ENV = "CTC_ILME_WORKERS"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


@dataclass
class RunConfig:
    mode: str = "ilme+sf"
    scorer: str = "file"  # "file" (LPM manifest) or "toy" (feature manifest)
    manifest: Optional[str] = None
    features: Optional[str] = None
    vocab: Optional[str] = None
    blank_index: int = 0
    word_start_marker: Optional[str] = None
    lm: Optional[str] = None
    out_dir: str = "run"
    K: int = 5
    segments: Optional[str] = None
    gamma: float = 0.25
    beta: float = 0.9
    lambda_ilm: float = 0.1
    batched: bool = True
    beam_size: int = 50
    lambda_lm: float = 1.0
    token_insertion_bonus: float = 0.0
    prune_log_threshold: float = math.inf
    lm_word_level: bool = False
    nbest: int = 5
    seed: int = 7
    context_radius: int = 2
    workers: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", "mode")
        if self.scorer not in ("file", "toy"):
            raise ConfigError(f"scorer must be 'file' or 'toy', got {self.scorer!r}", "scorer")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", "K")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", "workers")
        if self.vocab is None:
            raise ConfigError("vocab path is required", "vocab")
        needed = ["vocab", "manifest" if self.scorer == "file" else "features"]
        if self.mode in ("sf", "ilme+sf"):
            needed.append("lm")
        for key in needed:
            if getattr(self, key) is None:
                raise ConfigError(f"{key} path is required in mode {self.mode!r}", key)
        for key in ("vocab", "manifest", "features", "lm", "segments"):
            val = getattr(self, key)
            if val is not None and not Path(val).is_file():
                raise ConfigError(f"{key} path does not exist: {val}", key)
        try:
            self.ilm_config()
            self.decode_config()
        except UsageError as exc:
            raise ConfigError(str(exc), None) from None

    def ilm_config(self) -> IlmConfig:
        return IlmConfig(self.gamma, self.beta, self.lambda_ilm, self.batched)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(self.beam_size, self.lambda_lm, self.token_insertion_bonus,
                            self.prune_log_threshold, self.lm_word_level, self.nbest)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    if value is None or not isinstance(value, str):
        return value
    if kind == "bool":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}", key)
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}", key) from None
    return value


def resolve_config(args) -> RunConfig:
    values = {}
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers:
        values["workers"] = _coerce("workers", env_workers)
    if getattr(args, "config", None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not parser.read(args.config, encoding="utf-8"):
            raise ConfigError(f"config file not found: {args.config}", "config")
        section = parser["run"] if parser.has_section("run") else {}
        for key, val in section.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}", key)
            values[key] = _coerce(key, val)
    for key in _FIELD_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = _coerce(key, val)
    return RunConfig(**values)


def _add_run_flags(p):
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--scorer", choices=("file", "toy"))
    p.add_argument("--manifest", help="LPM manifest: utt<TAB>mask<TAB>path")
    p.add_argument("--features", help="feature manifest: utt<TAB>path.npy (toy scorer)")
    p.add_argument("--vocab")
    p.add_argument("--blank-index", dest="blank_index", type=int)
    p.add_argument("--word-start-marker", dest="word_start_marker")
    p.add_argument("--lm")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("-K", "--K", dest="K", type=int)
    p.add_argument("--segments", help="segment boundary file for word-boundary masking")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda-ilm", dest="lambda_ilm", type=float)
    p.add_argument("--sequential-scoring", dest="batched", action="store_const", const=False)
    p.add_argument("--beam-size", dest="beam_size", type=int)
    p.add_argument("--lambda-lm", dest="lambda_lm", type=float)
    p.add_argument("--insertion-bonus", dest="token_insertion_bonus", type=float)
    p.add_argument("--prune", dest="prune_log_threshold", type=float)
    p.add_argument("--lm-word-level", dest="lm_word_level", action="store_const", const=True)
    p.add_argument("--nbest", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--context-radius", dest="context_radius", type=int)
    p.add_argument("--workers", type=int, help=f"worker threads (default ${WORKERS_ENV} or 1)")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Corpus:
    """Vocabulary, scorer, utterances and mask plans resolved from a RunConfig."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.vocab = load_vocabulary(cfg.vocab, cfg.blank_index, cfg.word_start_marker)
        self.data_files = []
        if cfg.scorer == "file":
            table = read_lpm_manifest(cfg.manifest)
            self.scorer = FileScorer(table)
            self.data_files = sorted(str(p) for p in table.values())
            self.utterances = []
            for utt in self.scorer.utterances():
                T = self.scorer.original(utt).T
                self.utterances.append((utt, KeyedFeatures.placeholder(T, utt)))
        else:
            from .toy import read_feature_manifest, toy_model
            feats = read_feature_manifest(cfg.features)
            self.data_files = sorted(str(p) for p in feats.values())
            self.utterances = [(u, FeatureSequence(np.load(p))) for u, p in sorted(feats.items())]
            D = self.utterances[0][1].D if self.utterances else len(self.vocab)
            if D == len(self.vocab):
                self.scorer = toy_model(self.vocab, cfg.seed, cfg.context_radius)
            else:
                self.scorer = ToyConvModel(self.vocab, D, cfg.context_radius, cfg.seed)
        self.segments = read_segments_file(cfg.segments) if cfg.segments else None

    def plan_for(self, utt, T):
        if self.segments is not None:
            if utt not in self.segments:
                raise UsageError(f"no segment boundaries for utterance {utt!r}")
            return plan_segments(T, self.segments[utt])
        return plan_equal(T, min(self.cfg.K, T))


def run_manifest(cfg: RunConfig, corpus: Corpus, extra=None) -> dict:
    inputs = {}
    for key in ("vocab", "manifest", "features", "lm", "segments"):
        val = getattr(cfg, key)
        if val is not None:
            inputs[key] = {"path": str(val), "sha256": _sha256(val)}
    data = hashlib.sha256()
    for p in corpus.data_files:
        data.update(_sha256(p).encode())
    resolved = dataclasses.asdict(cfg)
    if math.isinf(resolved["prune_log_threshold"]):
        resolved["prune_log_threshold"] = "inf"
    doc = {
        "config": resolved,
        "inputs": inputs,
        "data_digest": data.hexdigest(),
        "data_files": len(corpus.data_files),
        "versions": {"ctc_ilme": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "kernels": kernels.BACKEND},
    }
    if extra:
        doc.update(extra)
    return doc


def _decode_to_dir(cfg: RunConfig, corpus: Corpus, lm, out_dir: Path):
    res = decode_corpus(corpus.utterances, corpus.scorer, cfg.mode, corpus.vocab, lm,
                        cfg.ilm_config(), cfg.decode_config(), corpus.plan_for, cfg.workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "transcripts.txt").write_text(res.transcripts_text(), encoding="utf-8")
    (out_dir / "nbest.txt").write_text(res.nbest_text(corpus.vocab), encoding="utf-8")
    if cfg.mode in ("ilme", "ilme+sf"):
        parts = []
        for r in res.results:
            if r.diagnostics is not None:
                parts.append(f"## {r.utt_id}\n" + r.diagnostics.report())
        (out_dir / "diagnostics.txt").write_text("".join(parts), encoding="utf-8")
    failures = res.failures
    if failures:
        (out_dir / "failures.txt").write_text(
            "".join(f"{u}\t{m}\n" for u, m in sorted(failures.items())), encoding="utf-8")
    manifest = run_manifest(cfg, corpus, {"failures": len(failures), "utterances": len(res.results)})
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return res


def cmd_decode(args) -> int:
    cfg = resolve_config(args)
    cfg.validate()
    corpus = Corpus(cfg)
    lm = load_arpa(cfg.lm) if cfg.lm and cfg.mode != "baseline" else None
    res = _decode_to_dir(cfg, corpus, lm, Path(cfg.out_dir))
    n_fail = len(res.failures)
    print(f"decoded {len(res.results) - n_fail}/{len(res.results)} utterances ({cfg.mode}) -> {cfg.out_dir}")
    return EXIT_RUNTIME if n_fail else EXIT_OK


def _parse_named(spec: str):
    name, sep, path = spec.partition("=")
    if not sep:
        return Path(spec).stem, spec
    return name, path


def cmd_eval(args) -> int:
    refs = read_transcripts(args.ref)
    named = [_parse_named(h) for h in args.hyp]
    oov_terms = None
    if args.oov_terms:
        oov_terms = load_word_list(args.oov_terms)
    elif args.train_vocab:
        ref_words = [normalize_words(t, not args.no_case_fold, not args.keep_punct) for t in refs.values()]
        oov_terms = mine_oov(ref_words, load_word_list(args.train_vocab))
    systems = [evaluate_system(name, refs, read_transcripts(path), oov_terms or None,
                               not args.no_case_fold, not args.keep_punct) for name, path in named]
    baseline = args.baseline or (named[0][0] if len(named) > 1 else None)
    compare_systems(systems, baseline)
    print(render_text(systems, baseline, args.dataset), end="")
    if oov_terms is not None and not oov_terms:
        print("no OOV terms found")
    if args.json:
        Path(args.json).write_text(render_json(systems, baseline, args.dataset), encoding="utf-8")
    return EXIT_OK


def cmd_lm_score(args) -> int:
    model = load_arpa(args.lm)
    if args.text is not None:
        lines = [args.text]
    else:
        src = sys.stdin if args.input in (None, "-") else open(args.input, encoding="utf-8")
        with src:
            lines = [ln.rstrip("\n") for ln in src]
    for line in lines:
        print(f"{score_sequence(model, line.split()):.6f}\t{line}")
    return EXIT_OK


def cmd_mask_plan(args) -> int:
    if args.segments is not None:
        bounds = [int(b) for b in args.segments.split(",") if b.strip()]
        plan = plan_segments(args.T, bounds)
    else:
        if args.K is None:
            raise ConfigError("mask-plan needs K or --segments", "K")
        plan = plan_equal(args.T, args.K)
    for a, b in plan.ranges:
        print(f"[{a},{b})")
    return EXIT_OK


def cmd_make_toy(args) -> int:
    out = Path(args.out)
    if args.dims:
        try:
            T, N, D = (int(v) for v in args.dims.split(","))
        except ValueError:
            raise ConfigError("--dims expects T,N,D", "dims") from None
        out.mkdir(parents=True, exist_ok=True)
        vocab = Vocabulary(("<blank>",) + tuple(f"t{i}" for i in range(1, N)))
        model = ToyConvModel(vocab, D, args.context_radius, args.seed)
        X = FeatureSequence(np.random.default_rng(args.seed).standard_normal((T, D)))
        store_vocabulary(vocab, out / "tokens.txt")
        store_lpm(model.score([X])[0], out / "toy.lpm")
        print(f"wrote {out / 'toy.lpm'} ({T}x{N}) and {out / 'tokens.txt'}")
        return EXIT_OK
    from .toy import build_toy_corpus
    files = build_toy_corpus(out, seed=args.seed, n_utts=args.utterances, K=args.K,
                             context_radius=args.context_radius)
    for key, path in files.items():
        print(f"{key}\t{path}")
    return EXIT_OK


def cmd_ilm_diagnose(args) -> int:
    cfg = resolve_config(args)
    cfg.mode = "ilme"
    cfg.validate()
    corpus = Corpus(cfg)
    chosen = [u for u in corpus.utterances if args.utt is None or u[0] == args.utt]
    if not chosen:
        raise UsageError(f"utterance {args.utt!r} not found")
    for utt, X in chosen:
        _, _, diag = run_ilme(X, corpus.scorer, corpus.plan_for(utt, X.T), cfg.ilm_config(),
                              corpus.vocab.blank_index)
        print(f"## {utt}")
        print(diag.report(), end="")
    return EXIT_OK


GRID = (
    ("BS", "baseline", None),
    ("SF+source", "sf", "source"),
    ("ILME+source", "ilme+sf", "source"),
    ("SF+target", "sf", "target"),
    ("ILME+target", "ilme+sf", "target"),
)


def cmd_grid(args) -> int:
    """Decode the five BS/SF/ILME x source/target systems and write one report."""
    cfg = resolve_config(args)
    lms = {"source": args.source_lm, "target": args.target_lm}
    for name, path in lms.items():
        if not path or not Path(path).is_file():
            raise ConfigError(f"{name} LM path missing or not found: {path}", f"{name}_lm")
    if not args.ref or not Path(args.ref).is_file():
        raise ConfigError(f"reference transcripts not found: {args.ref}", "ref")
    cfg.lm = args.target_lm
    cfg.mode = "ilme+sf"
    cfg.validate()
    corpus = Corpus(cfg)
    loaded = {k: load_arpa(v) for k, v in lms.items()}
    refs = read_transcripts(args.ref)
    oov_terms = None
    if args.train_vocab:
        oov_terms = mine_oov([normalize_words(t) for t in refs.values()], load_word_list(args.train_vocab))
    out = Path(cfg.out_dir)
    systems = []
    failed = 0
    for name, mode, which in GRID:
        sub = dataclasses.replace(cfg, mode=mode, lm=lms[which] if which else None)
        res = _decode_to_dir(sub, corpus, loaded[which] if which else None, out / name)
        failed += len(res.failures)
        hyps = {r.utt_id: r.text for r in res.results if not r.error}
        systems.append(evaluate_system(name, refs, hyps, oov_terms or None))
    compare_systems(systems, "BS")
    text = render_text(systems, "BS", args.dataset)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.json").write_text(render_json(systems, "BS", args.dataset), encoding="utf-8")
    print(text, end="")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctc-ilme", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a corpus in one mode")
    _add_run_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="WER / OOV-F1 report for one or more hypothesis files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True, action="append", help="NAME=path or path; repeatable")
    p.add_argument("--baseline", help="system name WERR is computed against")
    p.add_argument("--train-vocab", help="word list; OOV terms are reference words absent from it")
    p.add_argument("--oov-terms", help="explicit OOV term list")
    p.add_argument("--no-case-fold", action="store_true")
    p.add_argument("--keep-punct", action="store_true")
    p.add_argument("--dataset", default="")
    p.add_argument("--json", help="also write the structured report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lm-score", help="natural-log probability of each sentence")
    p.add_argument("--lm", required=True)
    p.add_argument("--text", help="score this sentence instead of reading input")
    p.add_argument("input", nargs="?", help="file with one sentence per line (default stdin)")
    p.set_defaults(func=cmd_lm_score)

    p = sub.add_parser("mask-plan", help="print the mask ranges for T frames")
    p.add_argument("T", type=int)
    p.add_argument("K", type=int, nargs="?")
    p.add_argument("--segments", help="comma-separated interior boundaries")
    p.set_defaults(func=cmd_mask_plan)

    p = sub.add_parser("make-toy", help="write a synthetic corpus or a single toy LPM")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--utterances", type=int, default=20)
    p.add_argument("-K", "--K", dest="K", type=int, default=5)
    p.add_argument("--context-radius", dest="context_radius", type=int, default=2)
    p.add_argument("--dims", help="T,N,D: write one random-feature LPM instead of a corpus")
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("ilm-diagnose", help="per-frame ILME diagnostics")
    _add_run_flags(p)
    p.add_argument("--utt", help="only this utterance")
    p.set_defaults(func=cmd_ilm_diagnose)

    p = sub.add_parser("grid", help="BS / SF / ILME with source and target LMs, plus report")
    _add_run_flags(p)
    p.add_argument("--source-lm", dest="source_lm")
    p.add_argument("--target-lm", dest="target_lm")
    p.add_argument("--ref")
    p.add_argument("--train-vocab", dest="train_vocab")
    p.add_argument("--dataset", default="")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IlmeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
