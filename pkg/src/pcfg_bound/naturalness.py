"""Corpus naturalness statistics: Zipf-Mandelbrot fit, lengths, n-gram correlation."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import PCFGError

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class ZipfFit:
    """Fit of ``p(r) ∝ (r + beta_shift) ** -alpha`` over ranks ``1..n_types``."""

    alpha: float
    beta_shift: float
    log_likelihood: float
    residual_summary: float
    n_types: int
    n_tokens: int

    def probabilities(self, ranks=None) -> np.ndarray:
        r = np.arange(1, self.n_types + 1) if ranks is None else np.asarray(ranks, float)
        logw = -self.alpha * np.log(np.arange(1, self.n_types + 1) + self.beta_shift)
        logz = logsumexp(logw)
        return np.exp(-self.alpha * np.log(r + self.beta_shift) - logz)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta_shift, "loglik": self.log_likelihood}


def _token_counts(corpus) -> Counter:
    c = Counter()
    for sent in corpus:
        c.update(sent)
    return c


def zipf_ranked_counts(corpus_a, corpus_b) -> np.ndarray:
    """Counts from ``corpus_b`` ordered by rank in ``corpus_a``.

    Only tokens present in both corpora take part.  Ranks follow descending
    frequency in ``corpus_a``, ties broken by the token string.
    """
    ca, cb = _token_counts(corpus_a), _token_counts(corpus_b)
    shared = [t for t in ca if t in cb]
    shared.sort(key=lambda t: (-ca[t], t))
    return np.array([cb[t] for t in shared], dtype=float)


class _Profile:
    """Log-likelihood of rank counts under the Zipf-Mandelbrot law."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, float)
        self.n = self.counts.sum()
        self.ranks = np.arange(1, len(self.counts) + 1, dtype=float)

    def loglik(self, alpha, beta):
        logr = np.log(self.ranks + beta)
        return float(-alpha * (self.counts @ logr) - self.n * logsumexp(-alpha * logr))

    def best_alpha(self, beta, tol=1e-12, max_iter=100):
        logr = np.log(self.ranks + beta)
        observed = (self.counts @ logr) / self.n
        alpha = 1.0
        for _ in range(max_iter):
            w = -alpha * logr
            p = np.exp(w - logsumexp(w))
            mean = p @ logr
            var = p @ (logr - mean) ** 2
            grad = self.n * (mean - observed)
            if var <= 0:
                break
            step = grad / (self.n * var)
            new = alpha + step
            if new < 0:
                new = alpha / 2 if alpha > tol else 0.0
            if abs(new - alpha) < tol:
                alpha = new
                break
            alpha = new
        return max(alpha, 0.0)

    def profile(self, beta):
        a = self.best_alpha(beta)
        return self.loglik(a, beta), a


def zipf_fit_counts(counts, beta_max: float = 100.0, tol: float = 1e-6) -> ZipfFit:
    """Maximum-likelihood Zipf-Mandelbrot parameters for rank-ordered counts.

    The shift is found by golden-section search on the profile likelihood
    (bracketed first on a coarse grid); for each shift the exponent is solved
    by Newton's method, on which the likelihood is concave.
    """
    counts = np.asarray(counts, float)
    if len(counts) < 3:
        raise PCFGError("Zipf fit needs at least 3 shared types")
    prof = _Profile(counts)
    grid = np.concatenate([[0.0], np.geomspace(1e-3, beta_max, 60)])
    vals = [prof.profile(b)[0] for b in grid]
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = prof.profile(x1)[0], prof.profile(x2)[0]
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = prof.profile(x2)[0]
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = prof.profile(x1)[0]
    candidates = [(vals[k], grid[k]), (f1, x1), (f2, x2)]
    _, beta = max(candidates)
    ll, alpha = prof.profile(beta)
    fit = ZipfFit(alpha, float(beta), ll, 0.0, len(counts), int(prof.n))
    p = fit.probabilities()
    nz = counts > 0
    resid = np.log(counts[nz] / prof.n) - np.log(p[nz])
    return ZipfFit(alpha, float(beta), ll, float(np.mean(resid ** 2)), len(counts), int(prof.n))


def zipf_fit(corpus_a, corpus_b, beta_max: float = 100.0) -> ZipfFit:
    """Fit with ranks taken from ``corpus_a`` and frequencies from ``corpus_b``."""
    counts = zipf_ranked_counts(corpus_a, corpus_b)
    if len(counts) < 3:
        raise PCFGError("shared vocabulary has fewer than 3 types; fit is under-determined")
    return zipf_fit_counts(counts, beta_max)


def length_histogram(corpus) -> dict[int, int]:
    c = Counter(len(s) for s in corpus)
    return dict(sorted(c.items()))


def ngram_counts(corpus, n: int) -> Counter:
    """Within-sentence n-gram counts (no boundary padding)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c = Counter()
    for s in corpus:
        s = tuple(s)
        for i in range(len(s) - n + 1):
            c[s[i:i + n]] += 1
    return c


def ngram_spearman(corpus, reference, n: int) -> float:
    """Spearman correlation of n-gram counts over the reference's n-grams.

    N-grams missing from ``corpus`` count as zero.  Ties get average ranks.
    When either count vector is constant the correlation is undefined and
    NaN is returned, except for identical vectors, which give 1.
    """
    ref = ngram_counts(reference, n)
    if not ref:
        raise PCFGError(f"reference has no {n}-grams")
    cor = ngram_counts(corpus, n)
    keys = sorted(ref)
    x = np.array([cor.get(k, 0) for k in keys], float)
    y = np.array([ref[k] for k in keys], float)
    if np.array_equal(x, y):
        return 1.0
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    return float(stats.spearmanr(x, y).statistic)


def naturalness_report(corpus, reference=None, ns=(1, 2, 3), beta_max: float = 100.0) -> dict:
    """JSON-ready summary: Zipf fit on alternating halves, lengths, n-gram rho."""
    corpus = [tuple(s) for s in corpus]
    report = {"zipf": zipf_fit(corpus[0::2], corpus[1::2], beta_max).to_dict(),
              "lengths": {str(k): v for k, v in length_histogram(corpus).items()}}
    if reference is not None:
        report["spearman"] = {str(n): ngram_spearman(corpus, reference, n) for n in ns}
    return report
