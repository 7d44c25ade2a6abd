"""Inside/outside charts and masked-token quantities.

Charts are log-space arrays indexed ``[start, end, nonterminal]`` with
0-based, end-exclusive spans; the public accessors take the 1-based,
inclusive ``(p, q)`` spans used in the literature.  Sentences of equal length
are processed as one batch, and all cells of one span width are filled by a
single vectorized step.

Two flavours of each quantity are kept per cell.  ``beta_pre``/``alpha_pre``
refer to a nonterminal whose own rule at that cell is binary or lexical (the
bottom of a unary chain); ``beta``/``alpha`` refer to the top of the chain,
after the unary closure has been applied.  Pairing ``alpha`` with ``beta``
(or the two ``_pre`` arrays) counts every derivation exactly once.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import TokenDistribution
from .errors import PCFGError, UnknownTerminalError, UnparseableError
from .grammar import Grammar, UnaryClosure, build_unary_closure
from .records import TokenLogProbRecord

BATCH_SIZE = 128


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _shift(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return np.where(np.isfinite(m), m, 0.0)


def _log_matmul(logv, mat):
    """``log(exp(logv) @ mat)`` over the last axis, stable."""
    m = _shift(logv, -1)
    return _log(np.exp(logv - m) @ mat) + m


def _scatter(e, indicator):
    shape = e.shape
    out = np.asarray(e.reshape(-1, shape[-1]) @ indicator)
    return out.reshape(shape[:-1] + (indicator.shape[1],))


def _closure_matrix(g: Grammar, closure: UnaryClosure | None) -> np.ndarray:
    if closure is None:
        closure = build_unary_closure(g)
    c = closure.matrix
    if c.shape != (len(g.nonterminals),) * 2:
        raise PCFGError("unary closure does not belong to this grammar")
    return c


@dataclass
class Chart:
    """Inside (and optionally outside) log-probabilities for one sentence."""

    tokens: tuple[str, ...]
    nonterminals: tuple[str, ...]
    beta: np.ndarray
    beta_pre: np.ndarray
    start: int
    alpha: np.ndarray | None = None
    alpha_pre: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def has_alpha(self) -> bool:
        return self.alpha is not None

    @property
    def sentence_logprob(self) -> float:
        return float(self.beta[0, self.n, self.start])

    def _id(self, name):
        return self.nonterminals.index(name)

    def beta_at(self, name: str, p: int, q: int) -> float:
        """Inside log-probability of ``name`` over 1-based inclusive span ``p..q``."""
        return float(self.beta[p - 1, q, self._id(name)])

    def alpha_at(self, name: str, p: int, q: int) -> float:
        if self.alpha is None:
            raise PCFGError("outside probabilities not computed")
        return float(self.alpha[p - 1, q, self._id(name)])

    def position_logmass(self, i: int) -> float:
        """``logsumexp_j alpha_j(i,i) + beta_j(i,i)``; equals the sentence log-prob."""
        if self.alpha is None:
            raise PCFGError("outside probabilities not computed")
        v = self.alpha[i - 1, i] + self.beta[i - 1, i]
        m = np.max(v)
        if not np.isfinite(m):
            return -math.inf
        return float(m + np.log(np.exp(v - m).sum()))


class ChartBatch:
    """Inside/outside for a batch of equal-length sentences (token ids, -1 = masked)."""

    def __init__(self, g: Grammar, closure_matrix: np.ndarray, token_ids: np.ndarray):
        self.g = g
        self.t = g.tables
        self.c = closure_matrix
        self.ids = np.asarray(token_ids, dtype=np.int64)
        self.b, self.n = self.ids.shape
        self.nn = self.t.n_nonterminals
        self.beta = None
        self.beta_pre = None
        self.alpha = None
        self.alpha_pre = None

    def inside(self):
        t, b, n, nn = self.t, self.b, self.n, self.nn
        beta_pre = np.full((b, n + 1, n + 1, nn), -np.inf)
        beta = np.full((b, n + 1, n + 1, nn), -np.inf)
        flat = self.ids.reshape(-1)
        known = flat >= 0
        lex = np.zeros((flat.size, nn))
        if known.any():
            lex[known] = t.lexical[:, flat[known]].toarray().T
        lex = _log(lex).reshape(b, n, nn)
        pos = np.arange(n)
        beta_pre[:, pos, pos + 1] = lex
        beta[:, pos, pos + 1] = _log_matmul(lex, self.c.T)
        has_binary = t.bin_lhs.size > 0
        for w in range(2, n + 1):
            starts = np.arange(n - w + 1)[:, None]
            splits = starts + np.arange(1, w)[None, :]
            if has_binary:
                left = beta[:, starts, splits]          # (b, P, K, N)
                right = beta[:, splits, starts + w]
                vals = (np.take(left, t.bin_left, axis=-1)
                        + np.take(right, t.bin_right, axis=-1) + t.bin_logp)
                m = _shift(vals, (2, 3))
                e = np.exp(vals - m).sum(axis=2)        # (b, P, R)
                cell = _log(_scatter(e, t.bin_lhs_indicator)) + m[:, :, 0]
            else:
                cell = np.full((b, n - w + 1, nn), -np.inf)
            beta_pre[:, starts[:, 0], starts[:, 0] + w] = cell
            beta[:, starts[:, 0], starts[:, 0] + w] = _log_matmul(cell, self.c.T)
        self.beta, self.beta_pre = beta, beta_pre
        return self

    def outside(self):
        if self.beta is None:
            self.inside()
        t, b, n, nn = self.t, self.b, self.n, self.nn
        beta = self.beta
        alpha = np.full((b, n + 1, n + 1, nn), -np.inf)
        alpha_pre = np.full((b, n + 1, n + 1, nn), -np.inf)
        alpha[:, 0, n, self.g.start.id] = 0.0
        alpha_pre[:, 0, n] = _log_matmul(alpha[:, 0, n], self.c)
        has_binary = t.bin_lhs.size > 0
        for w in range(n - 1, 0, -1):
            starts = np.arange(n - w + 1)[:, None]
            ends = starts + w
            d = np.arange(1, n - w + 1)[None, :]
            if has_binary:
                # cell as left child of (p, q) with sibling (p+w, q)
                q = ends + d
                ok = q <= n
                qc = np.minimum(q, n)
                par = np.where(ok[None, :, :, None], alpha_pre[:, starts, qc], -np.inf)
                sib = beta[:, ends, qc]
                vals = (np.take(par, t.bin_lhs, axis=-1)
                        + np.take(sib, t.bin_right, axis=-1) + t.bin_logp)
                m = _shift(vals, (2, 3))
                as_left = _log(_scatter(np.exp(vals - m).sum(axis=2), t.bin_left_indicator)) \
                    + m[:, :, 0]
                # cell as right child of (p - d, p + w) with sibling (p - d, p)
                s = starts - d
                ok = s >= 0
                sc = np.maximum(s, 0)
                par = np.where(ok[None, :, :, None], alpha_pre[:, sc, ends], -np.inf)
                sib = beta[:, sc, starts]
                vals = (np.take(par, t.bin_lhs, axis=-1)
                        + np.take(sib, t.bin_left, axis=-1) + t.bin_logp)
                m = _shift(vals, (2, 3))
                as_right = _log(_scatter(np.exp(vals - m).sum(axis=2), t.bin_right_indicator)) \
                    + m[:, :, 0]
                cell = np.logaddexp(as_left, as_right)
            else:
                cell = np.full((b, n - w + 1, nn), -np.inf)
            alpha[:, starts[:, 0], ends[:, 0]] = cell
            alpha_pre[:, starts[:, 0], ends[:, 0]] = _log_matmul(cell, self.c)
        self.alpha, self.alpha_pre = alpha, alpha_pre
        return self

    def sentence_logprobs(self) -> np.ndarray:
        return self.beta[:, 0, self.n, self.g.start.id]

    def masked_logmass(self):
        """Per position: unnormalized log-weights over nonterminals, and the
        log of the total context mass ``sum_v P(w_i = v, context)``."""
        pos = np.arange(self.n)
        a0 = self.alpha_pre[:, pos, pos + 1]            # (b, n, N)
        denom = _log_matmul(a0, self.t.lexical_mass[:, None])[..., 0]
        return a0, denom

    def masked_token_logprobs(self) -> np.ndarray:
        """``log P(w_i | w_without_i)`` of the tokens actually present."""
        a0, denom = self.masked_logmass()
        lex = self.beta_pre[:, np.arange(self.n), np.arange(self.n) + 1]
        v = a0 + lex
        m = _shift(v, -1)
        num = _log(np.exp(v - m).sum(-1)) + m[..., 0]
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(denom), num - denom, -np.inf)

    def chart(self, k: int, tokens) -> Chart:
        names = tuple(s.name for s in self.g.nonterminals)
        return Chart(tuple(tokens), names, self.beta[k], self.beta_pre[k], self.g.start.id,
                     None if self.alpha is None else self.alpha[k],
                     None if self.alpha_pre is None else self.alpha_pre[k])


def _ids(g: Grammar, w: Sequence[str]) -> np.ndarray:
    ids = g.terminal_ids(w)
    bad = [tok for tok, i in zip(w, ids) if i < 0]
    if bad:
        raise UnknownTerminalError(f"unknown terminal {bad[0]!r}")
    return ids


def inside(g: Grammar, closure: UnaryClosure | None, w: Sequence[str]) -> Chart:
    w = tuple(w)
    if not w:
        raise PCFGError("empty sentence")
    batch = ChartBatch(g, _closure_matrix(g, closure), _ids(g, w)[None, :]).inside()
    chart = batch.chart(0, w)
    if not np.isfinite(chart.sentence_logprob):
        raise UnparseableError(f"unparseable sentence: {' '.join(w)}")
    return chart


def outside(g: Grammar, closure: UnaryClosure | None, w: Sequence[str], chart: Chart) -> Chart:
    w = tuple(w)
    if chart.tokens != w:
        raise PCFGError("chart was built for a different sentence")
    batch = ChartBatch(g, _closure_matrix(g, closure), _ids(g, w)[None, :])
    batch.beta = chart.beta[None]
    batch.beta_pre = chart.beta_pre[None]
    batch.outside()
    return batch.chart(0, w)


def masked_distributions(g: Grammar, closure: UnaryClosure | None, sentences,
                         i: int) -> np.ndarray:
    """Masked distributions at 1-based position ``i`` for equal-length sentences.

    Returns a ``(len(sentences), n_terminals)`` array of probabilities in
    terminal-id order.  Rows whose context is unparseable are NaN.  The tokens
    at position ``i`` are ignored, so they may be anything.
    """
    sentences = [tuple(w) for w in sentences]
    lengths = {len(w) for w in sentences}
    if len(lengths) != 1:
        raise PCFGError("sentences must be non-empty and share one length")
    n = lengths.pop()
    if not 1 <= i <= n:
        raise IndexError(f"position {i} outside sentence of length {n}")
    rest = _ids(g, [t for w in sentences for t in w[:i - 1] + w[i:]])
    ids = np.insert(rest.reshape(len(sentences), n - 1), i - 1, -1, axis=1)
    batch = ChartBatch(g, _closure_matrix(g, closure), ids).outside()
    a0, denom = batch.masked_logmass()
    with np.errstate(invalid="ignore"):
        scores = _log_matmul(a0[:, i - 1], batch.t.lexical.toarray()) - denom[:, i - 1, None]
        return np.where(np.isfinite(denom[:, i - 1, None]), np.exp(scores), np.nan)


def masked_distribution(g: Grammar, closure: UnaryClosure | None, w: Sequence[str],
                        i: int) -> TokenDistribution:
    """``P(w_i = v | all other tokens)`` for every terminal ``v`` (``i`` is 1-based).

    The weight of ``v`` is the sum, over every nonterminal ``j`` that could sit
    directly above position ``i``, of ``j``'s outside probability at the
    width-one span times ``P(j -> v)``.  The token currently at position
    ``i`` is ignored.
    """
    w = list(w)
    if not 1 <= i <= len(w):
        raise IndexError(f"position {i} outside sentence of length {len(w)}")
    probs = masked_distributions(g, closure, [w[:i - 1] + [""] + w[i:]], i)[0]
    if np.isnan(probs).any():
        raise UnparseableError("context unparseable")
    logprobs = {s.name: math.log(probs[s.id]) for s in g.terminals if probs[s.id] > 0}
    return TokenDistribution(i, logprobs)


def _group_by_length(sentences):
    groups = defaultdict(list)
    for k, s in enumerate(sentences):
        groups[len(s)].append(k)
    return groups


def masked_logprobs(g: Grammar, closure: UnaryClosure | None, sentences,
                    batch_size: int = BATCH_SIZE) -> list[np.ndarray]:
    """Per-sentence arrays of masked log-probabilities of the observed tokens.

    Sentences containing a token that is not a grammar terminal get NaN at
    every position.
    """
    c = _closure_matrix(g, closure)
    sentences = [tuple(s) for s in sentences]
    out: list = [None] * len(sentences)
    for length, idx in sorted(_group_by_length(sentences).items()):
        if length == 0:
            for k in idx:
                out[k] = np.zeros(0)
            continue
        ids = np.array([g.terminal_ids(sentences[k]) for k in idx])
        bad = (ids < 0).any(axis=1)
        for k in np.asarray(idx)[bad]:
            out[k] = np.full(length, np.nan)
        good = np.asarray(idx)[~bad]
        gids = ids[~bad]
        for lo in range(0, len(good), batch_size):
            batch = ChartBatch(g, c, gids[lo:lo + batch_size]).outside()
            lp = batch.masked_token_logprobs()
            for row, k in enumerate(good[lo:lo + batch_size]):
                out[k] = lp[row]
    return out


def sentence_logprobs(g: Grammar, closure: UnaryClosure | None, sentences,
                      batch_size: int = BATCH_SIZE) -> np.ndarray:
    """Inside log-probability of each whole sentence (``-inf`` if unparseable)."""
    c = _closure_matrix(g, closure)
    sentences = [tuple(s) for s in sentences]
    out = np.full(len(sentences), -np.inf)
    for length, idx in _group_by_length(sentences).items():
        ids = np.array([_ids(g, sentences[k]) for k in idx])
        for lo in range(0, len(idx), batch_size):
            batch = ChartBatch(g, c, ids[lo:lo + batch_size]).inside()
            out[idx[lo:lo + batch_size]] = batch.sentence_logprobs()
    return out


def score_records(sentences, logprobs, vocab=None) -> list[TokenLogProbRecord]:
    """Turn per-sentence token log-probs into records, applying the vocabulary skip rule."""
    records = []
    for sid, (sent, lps) in enumerate(zip(sentences, logprobs)):
        for pos, (tok, lp) in enumerate(zip(sent, lps), 1):
            skipped = (vocab is not None and tok not in vocab) or bool(np.isnan(lp))
            records.append(TokenLogProbRecord(sid, pos, tok, None if skipped else float(lp),
                                              skipped))
    return records


def perplexity(records) -> tuple[float, int]:
    scored = [r.logprob for r in records if not r.skipped]
    if not scored:
        raise PCFGError("no scored tokens")
    if any(lp == -math.inf for lp in scored):
        raise UnparseableError("a scored token has probability zero under the grammar")
    return math.exp(-math.fsum(scored) / len(scored)), len(scored)


def pseudo_ppl(g: Grammar, closure: UnaryClosure | None, corpus, vocab=None):
    """Pseudo-perplexity of ``corpus`` and its per-token records.

    Tokens outside ``vocab`` are recorded as skipped and excluded from both
    the log-likelihood sum and the token count.  A sentence containing a
    token the grammar does not know is skipped entirely.
    """
    corpus = [tuple(s) for s in corpus]
    records = score_records(corpus, masked_logprobs(g, closure, corpus), vocab)
    ppl, _ = perplexity(records)
    return ppl, records
