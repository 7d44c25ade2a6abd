"""scikit-learn style wrappers around the grammar engines and the Zipf fit."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_corpus, check_grammar, check_positive_int, check_trees
from .earley import causal_logprobs, left_corner_matrices
from .grammar import binarize, build_unary_closure, prune_rules, validate
from .errors import GrammarError
from .inside_outside import masked_logprobs, perplexity, score_records, sentence_logprobs
from .naturalness import zipf_fit, zipf_fit_counts, zipf_ranked_counts
from .records import TokenLogProbRecord
from .sampler import SamplerConfig, sample_corpus
from .treebank import induce_from_treebank

OBJECTIVES = ("masked", "causal")


class PCFGLanguageModel(BaseEstimator):
    """A PCFG used as a language model with exact conditional probabilities.

    ``fit`` takes a treebank (trees or bracketed strings) and induces a
    relative-frequency grammar, unless ``grammar`` is set, in which case
    the given grammar is compiled and ``X`` may be ``None``.

    ``transform`` maps sentences to per-token log-probabilities under the
    chosen ``objective``: ``"masked"`` conditions on both sides of each
    token, ``"causal"`` on the prefix only.  ``predict`` returns whole-sentence
    log-probabilities.
    """

    def __init__(self, grammar=None, objective="masked", prune_threshold=None):
        self.grammar = grammar
        self.objective = objective
        self.prune_threshold = prune_threshold

    def fit(self, X=None, y=None):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.grammar is not None:
            g = check_grammar(self.grammar)
        elif X is None:
            raise ValueError("fit needs a treebank when no grammar is given")
        else:
            g = induce_from_treebank(check_trees(X))
        if self.prune_threshold is not None:
            g = prune_rules(g, self.prune_threshold)
        report = validate(g)
        if not report.ok:
            raise GrammarError(f"grammar fails validation: {report.to_dict()}")
        self.grammar_ = g
        self.engine_grammar_ = binarize(g)
        self.unary_closure_ = build_unary_closure(self.engine_grammar_)
        self.left_corner_ = left_corner_matrices(self.engine_grammar_)
        self.n_rules_ = len(g.rules)
        return self

    def transform(self, X) -> list[np.ndarray]:
        """Per-token log-probabilities; NaN where a token is not a terminal."""
        check_is_fitted(self, "grammar_")
        X = check_corpus(X)
        if self.objective == "masked":
            return masked_logprobs(self.engine_grammar_, self.unary_closure_, X)
        return [causal_logprobs(self.engine_grammar_, self.left_corner_, s)[0] for s in X]

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "grammar_")
        return sentence_logprobs(self.engine_grammar_, self.unary_closure_, check_corpus(X))

    def records(self, X, vocab=None) -> list[TokenLogProbRecord]:
        X = check_corpus(X)
        return score_records(X, self.transform(X), vocab)

    def perplexity(self, X, vocab=None) -> float:
        return perplexity(self.records(X, vocab))[0]

    def score(self, X, y=None) -> float:
        """Mean scored log-probability per token (higher is better)."""
        return -float(np.log(self.perplexity(X)))

    def sample(self, n_samples, min_len=1, max_len=25, random_state=0) -> list[tuple[str, ...]]:
        check_is_fitted(self, "grammar_")
        n = check_positive_int(n_samples, "n_samples")
        config = SamplerConfig(min_len=min_len, max_len=max_len, seed=int(random_state))
        return sample_corpus(self.grammar_, n, config).sentences


class ZipfMandelbrot(BaseEstimator):
    """Maximum-likelihood fit of ``p(r) ∝ (r + beta_shift) ** -alpha``.

    With ``y`` given, ranks come from ``X`` and frequencies from ``y``.
    Otherwise ``X`` is split into alternating sentences for the two roles.
    """

    def __init__(self, beta_max=100.0):
        self.beta_max = beta_max

    def fit(self, X, y=None):
        if y is None:
            X = check_corpus(X)
            a, b = X[0::2], X[1::2]
        else:
            a, b = check_corpus(X), check_corpus(y, "y")
        fit = zipf_fit(a, b, self.beta_max)
        self._set(fit)
        return self

    def fit_counts(self, counts):
        """Fit directly on counts already ordered by rank."""
        self._set(zipf_fit_counts(np.asarray(counts, float), self.beta_max))
        return self

    def _set(self, fit):
        self.fit_ = fit
        self.alpha_ = fit.alpha
        self.beta_shift_ = fit.beta_shift
        self.log_likelihood_ = fit.log_likelihood
        self.n_types_ = fit.n_types

    def predict(self, ranks) -> np.ndarray:
        """Model probability of each 1-based rank."""
        check_is_fitted(self, "fit_")
        ranks = np.asarray(ranks, float)
        if np.any(ranks < 1) or np.any(ranks > self.n_types_):
            raise ValueError(f"ranks must lie in [1, {self.n_types_}]")
        return self.fit_.probabilities(ranks)

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per token of ``y`` (or ``X``) under the fit."""
        check_is_fitted(self, "fit_")
        X = check_corpus(X)
        counts = zipf_ranked_counts(X, X if y is None else check_corpus(y, "y"))
        counts = counts[:self.n_types_]
        p = self.fit_.probabilities(np.arange(1, len(counts) + 1))
        return float(counts @ np.log(p) / counts.sum())
