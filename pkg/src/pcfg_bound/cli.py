"""Command-line interface: ``pcfg-bound <subcommand> ...``.

Every subcommand writes JSON, TSV or grammar text to standard output (or to
the files it is asked to write) and diagnostics to standard error.  Exit
codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .earley import causal_records, left_corner_matrices, scan_prefix
from .errors import PCFGError
from .grammar import binarize, build_unary_closure, format_grammar, prune_rules, read_grammar, validate
from .inside_outside import masked_logprobs, perplexity, score_records, sentence_logprobs
from .lm_eval import evaluate, format_tags, load_class_map, load_tags
from .naturalness import naturalness_report
from .oracle import brute_inside, brute_masked, brute_prefix, enumerate_language
from .records import load_records, records_to_tsv
from .sampler import SPLITS, SamplerConfig, build_vocab, format_corpus, generate_corpus, \
    read_corpus, read_vocab, tags_from_trees
from .treebank import induce_from_treebank, read_treebank

GRAMMAR_FORMAT_VERSION = 1
RECORD_FORMAT_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True) + "\n"


def _clean(obj):
    """Replace non-finite floats by ``None`` so the output stays valid JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_text(text: str, path, out):
    if path is None:
        out.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _engine_grammar(path):
    g = read_grammar(path)
    report = validate(g)
    if not report.ok:
        raise PCFGError(f"invalid grammar: {json.dumps(report.to_dict(), sort_keys=True)}")
    return g, binarize(g)


def _chunks(items, n):
    n = max(1, min(n, len(items)))
    size = -(-len(items) // n) if items else 0
    return [(lo, items[lo:lo + size]) for lo in range(0, len(items), size)] if items else []


def _pmap(fn, items, threads):
    """Apply ``fn(offset, chunk)`` over contiguous chunks; results in input order."""
    chunks = _chunks(items, threads)
    if threads <= 1 or len(chunks) <= 1:
        return [fn(lo, c) for lo, c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda lc: fn(*lc), chunks))


# ---------------------------------------------------------------------------
# subcommands

def cmd_induce(args, out):
    g = induce_from_treebank(read_treebank(args.treebank), binarize=args.binarize)
    _write_text(format_grammar(g), args.out, out)


def cmd_validate(args, out):
    report = validate(read_grammar(args.grammar), tolerance=args.tolerance)
    if not report.ok:
        raise PCFGError(f"invalid grammar: {json.dumps(report.to_dict(), sort_keys=True)}")
    out.write("ok\n")


def cmd_binarize(args, out):
    _write_text(format_grammar(binarize(read_grammar(args.grammar))), args.out, out)


def cmd_prune(args, out):
    g = prune_rules(read_grammar(args.grammar), args.threshold)
    _write_text(format_grammar(g), args.out, out)


def cmd_sample(args, out):
    g = read_grammar(args.grammar)
    report = validate(g)
    if not report.ok:
        raise PCFGError(f"invalid grammar: {json.dumps(report.to_dict(), sort_keys=True)}")
    config = SamplerConfig(
        min_len=args.min_len, max_len=args.max_len,
        sizes={s: getattr(args, s) for s in SPLITS}, seed=args.seed,
        max_expansions=args.max_expansions,
        allow_duplicates_within_split=not args.no_duplicates)
    splits = generate_corpus(g, config)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = {"seed": args.seed, "sizes": {}}
    for name, corpus in splits.items():
        if not len(corpus) and not getattr(args, name):
            continue
        (outdir / f"{name}.txt").write_text(format_corpus(corpus.sentences), encoding="utf-8")
        (outdir / f"{name}.trees").write_text(
            "".join(f"{t}\n" for t in corpus.trees), encoding="utf-8")
        (outdir / f"{name}.tags").write_text(format_tags(tags_from_trees(corpus.trees)),
                                             encoding="utf-8")
        summary["sizes"][name] = len(corpus)
        summary.setdefault("tokens", {})[name] = sum(len(s) for s in corpus.sentences)
    out.write(_dump(summary))


def cmd_vocab(args, out):
    out.write(build_vocab(read_corpus(args.corpus), args.min_freq).to_tsv())


def cmd_ppl_bound(args, out):
    _, g = _engine_grammar(args.grammar)
    corpus = read_corpus(args.corpus)
    vocab = read_vocab(args.vocab) if args.vocab else None
    if args.objective == "masked":
        closure = build_unary_closure(g)

        def run(lo, chunk):
            return masked_logprobs(g, closure, chunk)

        lps = [lp for part in _pmap(run, corpus, args.threads) for lp in part]
        records = score_records(corpus, lps, vocab)
        ppl, n = perplexity(records)
        result = {"psi_ppl": ppl, "n_scored": n}
    else:
        lc = left_corner_matrices(g)

        def run(lo, chunk):
            recs = causal_records(g, lc, chunk, vocab, args.score_eos)
            return [r.__class__(r.sentence_id + lo, r.position, r.token, r.logprob, r.skipped)
                    for r in recs]

        records = [r for part in _pmap(run, corpus, args.threads) for r in part]
        ppl, n = perplexity(records)
        result = {"ppl": ppl, "n_scored": n}
    if args.records:
        Path(args.records).write_text(records_to_tsv(records), encoding="utf-8")
    out.write(_dump(result))


def cmd_naturalness(args, out):
    corpus = read_corpus(args.corpus)
    reference = read_corpus(args.reference) if args.reference else None
    out.write(_dump(naturalness_report(corpus, reference, tuple(args.n))))


def cmd_eval_lm(args, out):
    lm = load_records(args.lm)
    pcfg = load_records(args.pcfg)
    tags = load_tags(args.tags) if args.tags else None
    class_map = load_class_map(args.class_map) if tags is not None else None
    out.write(_dump(evaluate(lm, pcfg, tags, class_map).to_dict()))


def cmd_oracle_check(args, out):
    original, g = _engine_grammar(args.grammar)
    lang = enumerate_language(original, args.max_len)
    pool = sorted(lang.entries)
    if not pool:
        raise PCFGError(f"no sentences of length <= {args.max_len}")
    rng = np.random.default_rng(args.seed)
    picks = rng.choice(len(pool), size=min(args.samples, len(pool)), replace=False)
    sentences = [pool[k] for k in sorted(picks)]
    closure = build_unary_closure(g)
    lc = left_corner_matrices(g)
    inside_dev = masked_dev = prefix_violation = 0.0
    for s, lp, mlp in zip(sentences, sentence_logprobs(g, closure, sentences),
                          masked_logprobs(g, closure, sentences)):
        inside_dev = max(inside_dev, abs(math.expm1(lp - brute_inside(original, s))))
        for i in range(1, len(s) + 1):
            masked_dev = max(masked_dev, abs(math.exp(mlp[i - 1]) - brute_masked(original, s, i)
                                             .prob(s[i - 1])))
        chart = scan_prefix(g, lc, s)
        for k in range(1, len(s) + 1):
            lower, upper = brute_prefix(original, s[:k], args.max_len)
            p = math.exp(chart.prefix_logprob(k))
            prefix_violation = max(prefix_violation, lower - p, p - upper)
    result = {"inside_max_rel_dev": inside_dev, "masked_max_abs_dev": masked_dev,
              "prefix_max_violation": prefix_violation, "n_sentences": len(sentences),
              "max_len": args.max_len, "tail_bound": lang.tail_bound}
    out.write(_dump(result))
    if max(inside_dev, masked_dev, prefix_violation) > args.tol:
        raise PCFGError(f"oracle deviation exceeds {args.tol}")


# ---------------------------------------------------------------------------
# parser

VERSION_STRING = (f"pcfg-bound {__version__} (grammar format {GRAMMAR_FORMAT_VERSION}, "
                  f"record format {RECORD_FORMAT_VERSION})")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker cap for corpus-level stages; results do not depend on it")

    p = _Parser(prog="pcfg-bound", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="store_true", help="print version information and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("induce", cmd_induce, "relative-frequency grammar from a treebank")
    sp.add_argument("--treebank", required=True)
    sp.add_argument("--binarize", action="store_true")
    sp.add_argument("--out")

    sp = add("validate", cmd_validate, "check rule sums, reachability and productivity")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--tolerance", type=float, default=1e-6)

    sp = add("binarize", cmd_binarize, "rewrite to at most two children per rule")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--out")

    sp = add("prune", cmd_prune, "drop low-probability rules and renormalize")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--threshold", type=float, default=1e-8)
    sp.add_argument("--out")

    sp = add("sample", cmd_sample, "sample train/dev/test/eval corpora")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--out-dir", required=True)
    for split in SPLITS:
        sp.add_argument(f"--{split}", type=int, default=0, help=f"{split} sentence count")
    sp.add_argument("--min-len", type=int, default=6)
    sp.add_argument("--max-len", type=int, default=25)
    sp.add_argument("--max-expansions", type=int)
    sp.add_argument("--no-duplicates", action="store_true",
                    help="also forbid repeated sentences inside a split")

    sp = add("vocab", cmd_vocab, "token counts at or above a frequency threshold (TSV)")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--min-freq", type=int, default=5)

    sp = add("ppl-bound", cmd_ppl_bound, "perplexity lower bound of a corpus")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--objective", choices=("masked", "causal"), required=True)
    sp.add_argument("--vocab", help="vocabulary TSV; other tokens are skipped")
    sp.add_argument("--records", help="write per-token records TSV here")
    sp.add_argument("--score-eos", action="store_true",
                    help="causal only: also score the end-of-sentence event")

    sp = add("naturalness", cmd_naturalness, "Zipf fit, length histogram, n-gram correlation")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--reference")
    sp.add_argument("--n", type=int, nargs="+", default=[1, 2, 3])

    sp = add("eval-lm", cmd_eval_lm, "compare LM records against grammar records")
    sp.add_argument("--lm", required=True)
    sp.add_argument("--pcfg", required=True)
    sp.add_argument("--tags")
    sp.add_argument("--class-map", help="JSON {tag: class}; defaults to the bundled Penn map")

    sp = add("oracle-check", cmd_oracle_check, "compare engines with brute-force enumeration")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--max-len", type=int, default=6)
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-9)
    return p


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            out.write(f"{VERSION_STRING}\n")
            return 0
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        if args.command == "ppl-bound" and args.score_eos and args.objective != "causal":
            raise UsageError("--score-eos applies to --objective causal only")
        args.func(args, out)
    except UsageError as e:
        err.write(f"{e}\n")
        return 1
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except (PCFGError, OSError, ValueError) as e:
        msg = " ".join(str(e).split())
        err.write(f"error: {msg}\n")
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
