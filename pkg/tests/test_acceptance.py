"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and printed at the end of the pytest
session by the hook in ``conftest.py``.
"""
import io
import math
import time
from collections import Counter, defaultdict

import numpy as np
import pytest
from scipy import stats

from pcfg_bound import (SamplerConfig, binarize, build_unary_closure, compare, enumerate_language,
                        left_corner_matrices, masked_logprobs, ngram_spearman, parse_grammar,
                        sample_corpus, scan_prefix, sentence_logprobs)
from pcfg_bound.earley import PrefixChart, causal_records
from pcfg_bound.estimators import ZipfMandelbrot
from pcfg_bound.grammar import Grammar
from pcfg_bound.inside_outside import ChartBatch, _closure_matrix, masked_distributions
from pcfg_bound.oracle import brute_prefix, random_pcfg
from pcfg_bound.sampler import format_corpus

from conftest import G1_TEXT, G2_TEXT, toy_text
from golden_cases import CASES, EXPECTED, run_case

RESULTS = {}


def report(number, title, ok, detail):
    RESULTS[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    assert ok, RESULTS[number]


def by_length(sentences):
    groups = defaultdict(list)
    for s in sentences:
        groups[len(s)].append(s)
    return groups


def smoothed(g: Grammar, weight=0.3) -> Grammar:
    """Mix every rule distribution with the uniform one over the same left-hand side."""
    counts = Counter(lhs for lhs, _, _ in g.productions())
    prods = [(lhs, rhs, (1 - weight) * p + weight / counts[lhs])
             for lhs, rhs, p in g.productions()]
    return Grammar.from_productions(prods, start=g.start.name)


# --------------------------------------------------------------------------
# shared fixtures

@pytest.fixture(scope="module")
def sweep():
    """25 random proper grammars with their languages up to length 6."""
    out = []
    for seed in range(25):
        g = random_pcfg(seed, n_terminals=2 + seed % 3, max_rules=30)
        out.append((g, build_unary_closure(g), enumerate_language(g, 6)))
    return out


@pytest.fixture(scope="module")
def toy():
    return binarize(parse_grammar(toy_text()))


@pytest.fixture(scope="module")
def toy_small(toy):
    return sample_corpus(parse_grammar(toy_text()), 1000, SamplerConfig(), seed=1).sentences


@pytest.fixture(scope="module")
def toy_eval():
    return sample_corpus(parse_grammar(toy_text()), 10_000, SamplerConfig(), seed=2).sentences


@pytest.fixture(scope="module")
def causal_bound(toy, toy_eval):
    t = time.perf_counter()
    recs = causal_records(toy, left_corner_matrices(toy), toy_eval, score_eos=True)
    return recs, time.perf_counter() - t


# --------------------------------------------------------------------------
# oracle equivalence

def test_01_oracle_masked(sweep):
    t = time.perf_counter()
    worst, n_dist = 0.0, 0
    for g, closure, lang in sweep:
        names = [s.name for s in g.terminals]
        for length, sents in by_length(lang.entries).items():
            for i in range(1, length + 1):
                contexts = sorted({s[:i - 1] + ("",) + s[i:] for s in sents})
                ours = masked_distributions(g, closure, contexts, i)
                for row, c in zip(ours, contexts):
                    mass = np.array([lang.prob(c[:i - 1] + (v,) + c[i:]) for v in names])
                    worst = max(worst, float(np.abs(row - mass / mass.sum()).max()))
                    n_dist += 1
    elapsed = time.perf_counter() - t
    report(1, "oracle equivalence (masked)", worst <= 1e-9 and elapsed < 10,
           f"max_abs_dev={worst:.2e} over {n_dist} contexts, {elapsed:.1f}s")


def test_02_oracle_inside(sweep):
    worst, n = 0.0, 0
    for g, closure, lang in sweep:
        sents = list(lang.entries)
        ours = np.exp(sentence_logprobs(g, closure, sents))
        ref = np.array([lang.entries[s] for s in sents])
        worst = max(worst, float(np.max(np.abs(ours - ref) / ref)))
        n += len(sents)
    report(2, "oracle equivalence (inside)", worst <= 1e-9,
           f"max_rel_dev={worst:.2e} over {n} sentences")


def test_03_oracle_prefix():
    violation, n = 0.0, 0
    for seed in range(10):
        g = random_pcfg(seed, n_terminals=2, n_nonterminals=3)
        lc = left_corner_matrices(g)
        lang = enumerate_language(g, 12)
        prefixes = {s[:k] for s in lang.entries for k in range(1, min(len(s), 5) + 1)}
        for prefix in sorted(prefixes):
            p = math.exp(scan_prefix(g, lc, prefix).prefix_logprob())
            lower, upper = brute_prefix(g, prefix, 12)
            violation = max(violation, lower - p, p - upper)
            n += 1
    g2 = binarize(parse_grammar(G2_TEXT))
    chart = scan_prefix(g2, None, ())
    closed = 0.0
    for k in range(1, 41):
        chart.advance("a")
        closed = max(closed, abs(chart.prefix_logprob() - (k - 1) * math.log(0.5)))
    ok = violation <= 1e-12 and closed <= 1e-9
    report(3, "oracle equivalence (prefix)", ok,
           f"bound_violation={max(violation, 0):.2e} over {n} prefixes, "
           f"geometric closed-form dev={closed:.2e}")


# --------------------------------------------------------------------------
# toy grammar, 10^3 sentences

def test_04_normalization(toy, toy_small):
    closure = build_unary_closure(toy)
    masked_dev = 0.0
    for length, sents in by_length(toy_small).items():
        for i in range(1, length + 1):
            probs = masked_distributions(toy, closure, sents, i)
            masked_dev = max(masked_dev, float(np.abs(probs.sum(axis=1) - 1).max()))
    lc = left_corner_matrices(toy)
    causal_dev = 0.0
    for s in toy_small:
        chart = PrefixChart(toy, lc)
        for tok in s + (None,):
            d = chart.next_distribution()
            total = math.fsum(d.probs().values())
            causal_dev = max(causal_dev, abs(total - 1))
            if tok is not None:
                chart.advance(tok)
    report(4, "normalization suite", masked_dev <= 1e-9 and causal_dev <= 1e-9,
           f"masked max_dev={masked_dev:.2e}, causal+EOS max_dev={causal_dev:.2e}, "
           f"{len(toy_small)} sentences, {len(toy.rules)} rules")


def test_05_inside_outside_consistency(toy, toy_small):
    c = _closure_matrix(toy, build_unary_closure(toy))
    worst = 0.0
    for length, sents in by_length(toy_small).items():
        batch = ChartBatch(toy, c, np.array([toy.terminal_ids(s) for s in sents])).outside()
        for k, s in enumerate(sents):
            chart = batch.chart(k, s)
            vals = [chart.position_logmass(i) for i in range(1, length + 1)]
            worst = max(worst, max(vals) - min(vals), abs(vals[0] - chart.sentence_logprob))
    report(5, "inside-outside consistency", worst <= 1e-9,
           f"max spread of per-position log mass={worst:.2e}")


def test_06_cross_engine(toy, toy_small):
    lc = left_corner_matrices(toy)
    inside_lp = sentence_logprobs(toy, build_unary_closure(toy), toy_small)
    earley_lp = np.array([scan_prefix(toy, lc, s).complete_logprob() for s in toy_small])
    worst = float(np.max(np.abs(inside_lp - earley_lp)))
    report(6, "cross-engine agreement", worst <= 1e-9, f"max log dev={worst:.2e}")


# --------------------------------------------------------------------------
# toy grammar, 10^4 sentences

def test_07_masked_below_causal(toy, toy_eval, causal_bound):
    t = time.perf_counter()
    lps = masked_logprobs(toy, build_unary_closure(toy), toy_eval)
    flat = np.concatenate(lps)
    psi = math.exp(-math.fsum(flat) / len(flat))
    recs, causal_time = causal_bound
    causal = compare(recs, recs).ppl_pcfg
    elapsed = time.perf_counter() - t + causal_time
    report(7, "masked bound below causal bound", psi < causal and elapsed < 300,
           f"psi_ppl={psi:.3f} < ppl={causal:.3f} on {len(toy_eval)} sentences, {elapsed:.0f}s")


def test_08_lower_bound(toy, toy_eval, causal_bound):
    pcfg, _ = causal_bound
    lm_grammar = smoothed(parse_grammar(toy_text()))
    lm_grammar = binarize(lm_grammar)
    lm = causal_records(lm_grammar, left_corner_matrices(lm_grammar), toy_eval, score_eos=True)
    smooth = compare(lm, pcfg)
    same = compare(pcfg, pcfg)
    ok = (smooth.ppl_lm > smooth.ppl_pcfg
          and abs(same.ppl_lm - same.ppl_pcfg) <= 1e-6
          and abs(same.r_squared - 1) <= 1e-9 and abs(same.spearman_rho - 1) <= 1e-9)
    report(8, "lower-bound property", ok,
           f"smoothed ppl_lm={smooth.ppl_lm:.3f} > ppl_pcfg={smooth.ppl_pcfg:.3f} "
           f"({smooth.n_scored} events); self R2={same.r_squared:.6f} rho={same.spearman_rho:.6f}")


# --------------------------------------------------------------------------
# sampler, naturalness, binarization

def test_09_sampler_fidelity():
    g = parse_grammar(G1_TEXT)
    config = SamplerConfig(min_len=1, max_len=2)
    sents = sample_corpus(g, 100_000, config, seed=0).sentences
    lang = enumerate_language(g, 2)
    keys = sorted(lang.entries)
    observed = Counter(sents)
    f_obs = np.array([observed[k] for k in keys], float)
    f_exp = np.array([lang.entries[k] for k in keys]) * len(sents)
    p = stats.chisquare(f_obs, f_exp).pvalue
    again = sample_corpus(g, 100_000, config, seed=0).sentences
    identical = format_corpus(sents).encode() == format_corpus(again).encode()
    report(9, "sampler fidelity", p > 1e-3 and identical and sum(observed.values()) == len(sents)
           and set(observed) <= set(keys),
           f"chi2 p={p:.3f} on {len(sents)} samples, reproducible={identical}")


def test_10_zipf_recovery():
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    ranks = np.arange(1, 5001)
    p = (ranks + 2.0) ** -1.2
    draws = rng.choice(len(ranks), size=10 ** 6, p=p / p.sum())
    words = np.array([f"w{r}" for r in ranks])[draws].reshape(-1, 20)
    model = ZipfMandelbrot().fit([tuple(s) for s in words.tolist()])
    elapsed = time.perf_counter() - t
    ok = abs(model.alpha_ - 1.2) <= 0.05 and abs(model.beta_shift_ - 2.0) <= 0.3 and elapsed < 30
    report(10, "Zipf recovery", ok,
           f"alpha={model.alpha_:.4f} beta={model.beta_shift_:.4f} on 1e6 tokens, {elapsed:.1f}s")


def test_11_ngram_self_correlation():
    g = parse_grammar(toy_text())
    a = sample_corpus(g, 100_000, SamplerConfig(), seed=3).sentences
    b = sample_corpus(g, 100_000, SamplerConfig(), seed=4).sentences
    rho = {n: ngram_spearman(a, b, n) for n in (1, 2)}
    report(11, "n-gram self-correlation", rho[1] > 0.9 and rho[2] > 0.9,
           f"rho1={rho[1]:.4f} rho2={rho[2]:.4f}")


NARY = """start: S
S -> A B C D 0.3
S -> 'x' A 'y' 0.2
S -> B C 0.2
S -> A 0.3
A -> 'a' 0.5
A -> B 'a' A 0.2
A -> 'b' 0.3
B -> 'b' 0.6
B -> C C C 0.4
C -> 'c' 0.7
C -> 'a' 'b' 'c' 'd' 0.3
D -> 'd' 1.0
"""


def test_12_binarization():
    raw = parse_grammar(NARY)
    bin_ = binarize(raw)
    a, b = enumerate_language(raw, 9), enumerate_language(bin_, 9)
    keys = set(a.entries) | set(b.entries)
    worst = max(abs(a.prob(k) - b.prob(k)) for k in keys)
    ok = worst <= 1e-10 and bin_.is_binarized and not raw.is_binarized
    report(12, "binarization equivalence", ok,
           f"max_abs_dev={worst:.2e} over {len(keys)} strings of length <= 9")


def test_13_cli_golden(tmp_path):
    failed = []
    for name, (_, code_expected, files) in sorted(CASES.items()):
        tmp = tmp_path / name
        tmp.mkdir()
        code, out, _ = run_case(name, tmp)
        same = code == code_expected and out == (EXPECTED / name / "stdout").read_text("utf-8")
        same = same and all((tmp / f).read_bytes() == (EXPECTED / name / f).read_bytes()
                            for f in files)
        if not same:
            failed.append(name)
    report(13, "CLI determinism", not failed,
           f"{len(CASES) - len(failed)}/{len(CASES)} golden cases byte-identical"
           + (f", failed: {failed}" if failed else ""))
