"""Probabilistic Earley parsing for prefix probabilities.

This follows Stolcke's prefix-probability parser for a binarized grammar.
Left-recursive prediction chains are collapsed with the reflexive-transitive
left-corner closure ``R_L``, and unary completion chains with the unit
closure ``R_U``.  States are not stored one by one.  Each state set keeps
vectors instead:

* ``predicted[i][X]``: the summed forward probability of the predicted
  states ``(i: X -> . rhs)``, not yet multiplied by the rule probability.
* ``waiting_alpha[i][j, r]`` / ``waiting_gamma[i][j, r]``: the forward and
  inner probabilities of ``(j: lhs_r -> left_r . right_r)``, for each binary
  rule ``r`` and origin ``j < i``.

All probabilities in set ``i`` are divided by the prefix probability
``P(w_1..w_i)``, and inner probabilities of a span ``j..i`` carry the factor
``P(w_1..w_j) / P(w_1..w_i)``.  This scaling is consistent under the products
the parser forms, so nothing underflows however long the prefix gets.  The
prefix log-probability is kept separately as a running sum of logs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import EOS, TokenDistribution
from .errors import GrammarError, PCFGError, UnknownTerminalError
from .grammar import Grammar, series_closure
from .inside_outside import perplexity
from .records import TokenLogProbRecord


@dataclass(frozen=True)
class LeftCornerMatrices:
    left_corner: np.ndarray
    unit: np.ndarray
    names: tuple[str, ...]

    def rl(self, a: str, b: str) -> float:
        return float(self.left_corner[self.names.index(a), self.names.index(b)])

    def ru(self, a: str, b: str) -> float:
        return float(self.unit[self.names.index(a), self.names.index(b)])


def left_corner_matrices(g: Grammar) -> LeftCornerMatrices:
    if not g.is_binarized:
        raise GrammarError("left-corner matrices need a binarized grammar")
    n = len(g.nonterminals)
    p_left = np.zeros((n, n))
    p_unit = np.zeros((n, n))
    for r in g.rules:
        if r.is_binary or r.is_unary:
            p_left[r.lhs.id, r.rhs[0].id] += r.prob
        if r.is_unary:
            p_unit[r.lhs.id, r.rhs[0].id] += r.prob
    rl = series_closure(p_left, "left recursion")
    ru = series_closure(p_unit, "unary cycle")
    rl.setflags(write=False)
    ru.setflags(write=False)
    return LeftCornerMatrices(rl, ru, tuple(s.name for s in g.nonterminals))


class PrefixChart:
    """Incremental Earley chart; call :meth:`advance` once per token."""

    def __init__(self, g: Grammar, lc: LeftCornerMatrices | None = None):
        self.g = g
        self.lc = lc if lc is not None else left_corner_matrices(g)
        if self.lc.left_corner.shape[0] != len(g.nonterminals):
            raise PCFGError("left-corner matrices do not belong to this grammar")
        t = g.tables
        self._t = t
        self._lex = t.lexical
        self._lex_dense = None
        n_rules = t.bin_lhs.size
        self.tokens: list[str] = []
        self.log_prefix: list[float] = [0.0]
        self.log_complete: list[float] = [-math.inf]
        src = np.zeros(t.n_nonterminals)
        src[g.start.id] = 1.0
        self.predicted: list[np.ndarray] = [src @ self.lc.left_corner]
        self.waiting_alpha: list[np.ndarray] = [np.zeros((0, n_rules))]
        self.waiting_gamma: list[np.ndarray] = [np.zeros((0, n_rules))]
        self._eos_scaled = 0.0

    def __len__(self):
        return len(self.tokens)

    @property
    def dead(self) -> bool:
        return self.log_prefix[-1] == -math.inf

    def prefix_logprob(self, i: int | None = None) -> float:
        """Log of the total probability of sentences starting with ``w_1..w_i``."""
        return self.log_prefix[len(self.tokens) if i is None else i]

    def complete_logprob(self, i: int | None = None) -> float:
        """Log-probability that ``w_1..w_i`` is itself a complete sentence."""
        return self.log_complete[len(self.tokens) if i is None else i]

    def _append_dead(self, token):
        t = self._t
        i = len(self.tokens) + 1
        self.tokens.append(token)
        self.log_prefix.append(-math.inf)
        self.log_complete.append(-math.inf)
        self.predicted.append(np.zeros(t.n_nonterminals))
        self.waiting_alpha.append(np.zeros((i, t.bin_lhs.size)))
        self.waiting_gamma.append(np.zeros((i, t.bin_lhs.size)))
        self._eos_scaled = 0.0

    def advance(self, token: str) -> float:
        """Scan ``token``; returns ``log P(token | prefix)``."""
        if not self.g.has_terminal(token):
            raise UnknownTerminalError(f"unknown terminal {token!r}")
        if self.dead:
            self._append_dead(token)
            return -math.inf
        t, lc = self._t, self.lc
        i = len(self.tokens) + 1
        f_prev = self.predicted[i - 1]
        lexcol = self._lex[:, self.g.terminal(token).id].toarray().ravel()
        scanned = f_prev * lexcol
        cond = scanned.sum()
        if cond <= 0.0:
            self._append_dead(token)
            return -math.inf
        log_cond = math.log(cond)

        complete = np.zeros((i, t.n_nonterminals))
        complete[i - 1] = np.where(f_prev > 0, lexcol, 0.0) / cond
        new_alpha = np.zeros((i, t.bin_lhs.size))
        new_gamma = np.zeros((i, t.bin_lhs.size))
        eos = 0.0
        # origins are final once every longer-origin completion has fed them
        for m in range(i - 1, -1, -1):
            if not complete[m].any():
                continue
            v = lc.unit @ complete[m]
            if m > 0 and self.waiting_gamma[m].size:
                contrib = self.waiting_gamma[m] * v[t.bin_right]
                complete[:m] += np.asarray(contrib @ t.bin_lhs_indicator)
            if t.bin_lhs.size:
                f_lhs = self.predicted[m][t.bin_lhs]
                gam = np.where(f_lhs > 0, t.bin_prob * v[t.bin_left], 0.0)
                new_gamma[m] = gam
                new_alpha[m] = f_lhs * gam
            if m == 0:
                eos = float(v[self.g.start.id])
        src = np.asarray(new_alpha.sum(axis=0) @ t.bin_right_indicator).ravel()

        self.tokens.append(token)
        self.log_prefix.append(self.log_prefix[-1] + log_cond)
        self.log_complete.append(math.log(eos) + self.log_prefix[-1] if eos > 0 else -math.inf)
        self.predicted.append(src @ lc.left_corner)
        self.waiting_alpha.append(new_alpha)
        self.waiting_gamma.append(new_gamma)
        self._eos_scaled = eos
        return log_cond

    def next_distribution(self) -> TokenDistribution:
        """Distribution of the next token, including the end-of-sentence event."""
        if self.dead:
            raise PCFGError("dead prefix")
        if self._lex_dense is None:
            self._lex_dense = self._lex.toarray()
        scores = self.predicted[-1] @ self._lex_dense
        logprobs = {s.name: math.log(scores[s.id]) for s in self.g.terminals
                    if scores[s.id] > 0}
        eos = math.log(self._eos_scaled) if self._eos_scaled > 0 else -math.inf
        return TokenDistribution(len(self.tokens) + 1, logprobs, eos)


def scan_prefix(g: Grammar, lc: LeftCornerMatrices | None, prefix: Sequence[str]) -> PrefixChart:
    chart = PrefixChart(g, lc)
    for tok in prefix:
        chart.advance(tok)
    return chart


def next_token_distribution(g: Grammar, lc: LeftCornerMatrices | None,
                            prefix: Sequence[str]) -> TokenDistribution:
    return scan_prefix(g, lc, prefix).next_distribution()


def causal_logprobs(g: Grammar, lc: LeftCornerMatrices | None, sentence: Sequence[str]):
    """Conditional log-probabilities of each token and of the sentence end.

    Returns ``(token_logprobs, eos_logprob)``; positions after a token that is
    not a grammar terminal are NaN, and so is ``eos_logprob`` in that case.
    """
    chart = PrefixChart(g, lc)
    out = np.full(len(sentence), np.nan)
    for k, tok in enumerate(sentence):
        if not g.has_terminal(tok):
            return out, math.nan
        out[k] = chart.advance(tok)
    eos = chart.complete_logprob() - chart.prefix_logprob() if not chart.dead else -math.inf
    return out, eos


def causal_records(g: Grammar, lc: LeftCornerMatrices | None, corpus, vocab=None,
                   score_eos: bool = False) -> list[TokenLogProbRecord]:
    if lc is None:
        lc = left_corner_matrices(g)
    records = []
    for sid, sent in enumerate(corpus):
        sent = tuple(sent)
        lps, eos = causal_logprobs(g, lc, sent)
        for pos, (tok, lp) in enumerate(zip(sent, lps), 1):
            skipped = bool(np.isnan(lp)) or (vocab is not None and tok not in vocab)
            records.append(TokenLogProbRecord(sid, pos, tok, None if skipped else float(lp),
                                              skipped))
        if score_eos:
            skipped = math.isnan(eos)
            records.append(TokenLogProbRecord(sid, len(sent) + 1, EOS,
                                              None if skipped else float(eos), skipped))
    return records


def causal_ppl(g: Grammar, lc: LeftCornerMatrices | None, corpus, vocab=None,
               score_eos: bool = False):
    """Causal perplexity bound of ``corpus`` and its per-token records.

    A token outside ``vocab`` is skipped but still conditions later tokens.
    A token the grammar does not know ends scoring for the rest of its
    sentence.
    """
    records = causal_records(g, lc, corpus, vocab, score_eos)
    ppl, _ = perplexity(records)
    return ppl, records
