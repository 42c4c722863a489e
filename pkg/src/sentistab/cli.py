"""Command line interface.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 backend/gateway error, 4 partial batch failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import build_pipeline, load_pipeline, uses_network
from .corpus import TextSample, dumps_jsonl, generate_synthetic, load_jsonl, read_jsonl
from .detector import calibrate, detect, detect_batch
from .errors import ConfigError, DataError, EmptyText, GatewayError, SentistabError
from .evalreport import embedding_csv, load_experiment, read_scores_csv, run_experiment
from .gateway import clear_cache, iter_cache
from .robustness import lexical_perturb, paraphrase_mix
from .sentiment import default_lexicon, load_lexicon

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND, EXIT_PARTIAL = 0, 1, 2, 3, 4

log = logging.getLogger("sentistab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as f:
        return f.read()


def _emit(obj):
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _pipeline(args):
    overrides = dict(metric=args.metric, threshold=args.threshold, replay=args.replay)
    if args.config:
        return load_pipeline(args.config, **overrides)
    return build_pipeline({}, ".", **overrides)


def _jobs(args, pipe) -> int:
    if args.jobs:
        return args.jobs
    jobs = os.cpu_count() or 1
    live, cap = uses_network(pipe)
    return min(jobs, cap) if live else jobs


# -- commands ---------------------------------------------------------------

def cmd_detect(args) -> int:
    pipe = _pipeline(args)
    try:
        raw = _read_input(args.input)
        if args.jsonl:
            corpus = read_jsonl(raw.splitlines(keepends=True))
            batch = detect_batch(list(corpus), pipe.detector, parallelism=_jobs(args, pipe))
            for r in batch.results:
                _emit(r.to_dict())
            if batch.errors:
                print(json.dumps(batch.summary(), ensure_ascii=False), file=sys.stderr)
                if not batch.results and all(e.is_gateway for e in batch.errors):
                    return EXIT_BACKEND
                return EXIT_PARTIAL
            return EXIT_OK
        if not raw.strip():
            raise EmptyText("empty input text")
        sample_id = args.id or ("stdin" if args.input == "-" else Path(args.input).stem)
        _emit(detect(TextSample(sample_id, raw), pipe.detector).to_dict())
        return EXIT_OK
    finally:
        pipe.close()


def cmd_evaluate(args) -> int:
    cfg = load_experiment(args.config, replay=args.replay)
    if args.jobs:
        cfg.jobs = args.jobs
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    try:
        report = run_experiment(cfg)
    finally:
        cfg.pipeline.close()
    for path in report.files:
        print(path)
    if report.errors:
        print(f"{len(report.errors)} sample(s) failed; see metrics.json", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_calibrate(args) -> int:
    rows = read_scores_csv(args.scores)
    if not rows:
        raise DataError(f"{args.scores}: no rows")
    if "label" not in rows[0] or args.metric not in rows[0]:
        raise DataError(f"{args.scores}: needs 'label' and '{args.metric}' columns")
    usable = []
    for r in rows:
        v = r[args.metric]
        if v is None or v == "":
            continue
        try:
            usable.append((r.get("id"), float(v), r["label"]))
        except ValueError:
            raise DataError(f"{args.scores}: bad {args.metric} value {v!r}") from None
    report = calibrate([(s, lab) for _, s, lab in usable], ids=[str(i) for i, _, _ in usable])
    out = report.to_dict()
    out["metric"] = args.metric
    _emit(out)
    return EXIT_OK


def cmd_features(args) -> int:
    pipe = _pipeline(args)
    try:
        corpus = load_jsonl(args.corpus) if args.corpus != "-" else read_jsonl(sys.stdin)
        batch = detect_batch(list(corpus), pipe.detector, parallelism=_jobs(args, pipe), require_threshold=False)
    finally:
        pipe.close()
    text = embedding_csv(corpus, batch.results)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if batch.errors:
        print(json.dumps(batch.summary(), ensure_ascii=False), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_perturb(args) -> int:
    sys.stdout.write(lexical_perturb(_read_input(args.input), args.rate, args.seed))
    return EXIT_OK


def cmd_paraphrase_mix(args) -> int:
    sys.stdout.write(paraphrase_mix(_read_input(args.original), _read_input(args.paraphrase), args.ratio, args.seed))
    return EXIT_OK


def cmd_synth(args) -> int:
    lex = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    corpus = generate_synthetic(args.n, lex, args.seed)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps_jsonl(corpus))
        _emit(corpus.manifest())
    else:
        sys.stdout.write(dumps_jsonl(corpus))
    return EXIT_OK


def cmd_cache(args) -> int:
    cache_dir = Path(args.dir)
    if args.action == "clear":
        _emit({"removed": clear_cache(cache_dir) if cache_dir.exists() else 0})
        return EXIT_OK
    entries = list(iter_cache(cache_dir)) if cache_dir.exists() else []
    _emit({
        "entries": len(entries),
        "items": [{"key": k, "timestamp": e.get("timestamp"), "reply_chars": len(e.get("reply", ""))} for k, e in entries],
    })
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _detector_flags(p):
    p.add_argument("--config", help="detector config JSON (default: lexicon analyzer + mock_neutralizing rewriter)")
    p.add_argument("--metric", choices=["sdc", "sdp", "signed"], help="score used for the verdict (overrides config)")
    p.add_argument("--threshold", type=float, help="decision threshold; score < threshold means llm (overrides config)")
    p.add_argument("--replay", action="store_true", help="serve LLM calls from the cache only; never touch the network")
    p.add_argument("--jobs", type=int, help="parallel samples (default: CPU count, capped by gateway max_in_flight for live runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentistab", description="Sentiment-stability detector for LLM-generated text.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="score one text (or a JSONL batch) and print the verdict as JSON")
    p.add_argument("input", nargs="?", default="-", help="text file, or - for stdin (default)")
    p.add_argument("--jsonl", action="store_true", help="input is a JSONL corpus; print one result per line")
    p.add_argument("--id", help="sample id for single-text input")
    _detector_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="run an experiment config and write scores/embedding CSV + metrics JSON")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--replay", action="store_true", help="serve LLM calls from the cache only")
    p.add_argument("--jobs", type=int, help="parallel samples per sweep point")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="choose the F1-optimal threshold from a scores CSV")
    p.add_argument("scores", help="scores CSV with a label column and score columns")
    p.add_argument("--metric", default="sdc", help="score column to calibrate (default: sdc)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("features", help="export the concatenated sentiment embedding of a corpus as CSV")
    p.add_argument("corpus", help="JSONL corpus, or - for stdin")
    p.add_argument("-o", "--output", help="write CSV here instead of stdout")
    _detector_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("perturb", help="apply seeded lexical perturbation to a text")
    p.add_argument("input", nargs="?", default="-", help="text file, or - for stdin (default)")
    p.add_argument("--rate", type=float, required=True, help="fraction of words to edit, in [0, 1]")
    p.add_argument("--seed", type=int, default=0, help="selection seed (default: 0)")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("paraphrase-mix", help="replace a seeded fraction of sentences with their paraphrases")
    p.add_argument("--original", required=True, help="original text file, or - for stdin")
    p.add_argument("--paraphrase", required=True, help="paraphrased text file")
    p.add_argument("--ratio", type=float, required=True, help="fraction of sentences to replace, in [0, 1]")
    p.add_argument("--seed", type=int, default=0, help="selection seed (default: 0)")
    p.set_defaults(func=cmd_paraphrase_mix)

    p = sub.add_parser("synth", help="generate the deterministic synthetic corpus as JSONL")
    p.add_argument("--n", type=int, default=50, help="samples per class (default: 50)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    p.add_argument("--lexicon", help="valence lexicon file (default: bundled)")
    p.add_argument("-o", "--output", help="write JSONL here and print the manifest to stdout")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cache", help="inspect or clear an LLM response cache directory")
    p.add_argument("action", choices=["inspect", "clear"], help="what to do")
    p.add_argument("--dir", required=True, help="cache directory")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, SentistabError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
