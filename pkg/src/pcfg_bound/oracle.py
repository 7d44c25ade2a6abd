"""Brute-force reference computations.

Everything here works on whole strings held in dictionaries and never builds
a position-indexed chart, so it shares no code path with the inside/outside
or Earley engines it is used to check.
"""
from __future__ import annotations

import itertools
import math
import weakref
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .dist import TokenDistribution
from .errors import GrammarError, PCFGError
from .grammar import Grammar, Terminal, validate

MAX_STRINGS = 10_000_000
_UNARY_MAX_ITER = 10_000

_cache: "weakref.WeakKeyDictionary[Grammar, EnumeratedLanguage]" = weakref.WeakKeyDictionary()


class LanguageTooLarge(PCFGError):
    pass


@dataclass
class EnumeratedLanguage:
    entries: dict[tuple[str, ...], float]
    max_len: int
    tail_bound: float

    @property
    def truncated(self) -> bool:
        return self.tail_bound > 0.0

    @property
    def mass(self) -> float:
        return math.fsum(self.entries.values())

    def prob(self, sentence) -> float:
        return self.entries.get(tuple(sentence), 0.0)

    def prefix_mass(self, prefix) -> float:
        """Summed probability of enumerated sentences starting with ``prefix``."""
        if not hasattr(self, "_prefix"):
            acc = defaultdict(list)
            for s, p in self.entries.items():
                for k in range(1, len(s) + 1):
                    acc[s[:k]].append(p)
            self._prefix = {k: math.fsum(v) for k, v in acc.items()}
        return self._prefix.get(tuple(prefix), 0.0)


def _concat(parts):
    """All concatenations of one string from each dict, probabilities multiplied."""
    out = {(): 1.0}
    for d in parts:
        nxt = defaultdict(float)
        for s1, p1 in out.items():
            for s2, p2 in d.items():
                nxt[s1 + s2] += p1 * p2
        out = nxt
    return out


def enumerate_language(g: Grammar, max_len: int) -> EnumeratedLanguage:
    """Exact probability of every sentence of length ``<= max_len``.

    Sentences are built length by length: for length ``L``, every rule with
    two or more children combines strictly shorter strings, and unary rules
    are resolved by fixed-point iteration at that length.
    """
    cached = _cache.get(g)
    if cached is not None and cached.max_len >= max_len:
        if cached.max_len == max_len:
            return cached
        entries = {s: p for s, p in cached.entries.items() if len(s) <= max_len}
        return EnumeratedLanguage(entries, max_len, max(0.0, 1.0 - math.fsum(entries.values())))

    nts = [s.name for s in g.nonterminals]
    # by_len[L][X] -> {string: prob} for strings of exactly length L
    by_len = [None]
    total = 0
    for length in range(1, max_len + 1):
        base = {x: defaultdict(float) for x in nts}
        unary = []
        for lhs, rhs, p in g.productions():
            if len(rhs) == 1:
                if isinstance(rhs[0], Terminal):
                    if length == 1:
                        base[lhs][(str(rhs[0]),)] += p
                else:
                    unary.append((lhs, rhs[0], p))
                continue
            if len(rhs) > length:
                continue
            for split in _compositions(length, len(rhs)):
                parts = []
                for item, n in zip(rhs, split):
                    if isinstance(item, Terminal):
                        d = {(str(item),): 1.0} if n == 1 else {}
                    else:
                        d = by_len[n][item]
                    if not d:
                        break
                    parts.append(d)
                else:
                    for s, q in _concat(parts).items():
                        base[lhs][s] += p * q
        current = {x: dict(base[x]) for x in nts}
        for _ in range(_UNARY_MAX_ITER):
            nxt = {x: defaultdict(float, base[x]) for x in nts}
            for lhs, child, p in unary:
                for s, q in current[child].items():
                    nxt[lhs][s] += p * q
            delta = 0.0
            for x in nts:
                old = current[x]
                for s, q in nxt[x].items():
                    delta = max(delta, abs(q - old.get(s, 0.0)))
            current = {x: dict(v) for x, v in nxt.items()}
            if delta <= 1e-18:
                break
        else:
            raise GrammarError("improper unary cycle in oracle enumeration")
        total += sum(len(v) for v in current.values())
        if total > MAX_STRINGS:
            raise LanguageTooLarge("language too large")
        by_len.append(current)

    entries = {}
    for length in range(1, max_len + 1):
        entries.update(by_len[length][g.start.name])
    lang = EnumeratedLanguage(entries, max_len, max(0.0, 1.0 - math.fsum(entries.values())))
    _cache[g] = lang
    return lang


def _compositions(total, k):
    """Ordered ways to write ``total`` as ``k`` positive parts."""
    for cuts in itertools.combinations(range(1, total), k - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(k))


def brute_inside(g: Grammar, sentence) -> float:
    p = enumerate_language(g, len(sentence)).prob(sentence)
    return math.log(p) if p > 0 else -math.inf


def brute_masked(g: Grammar, sentence, i: int) -> TokenDistribution:
    """Distribution of the token at 1-based position ``i`` given the rest."""
    sentence = tuple(sentence)
    lang = enumerate_language(g, len(sentence))
    masses = {}
    for t in g.terminals:
        s = sentence[:i - 1] + (t.name,) + sentence[i:]
        p = lang.prob(s)
        if p > 0:
            masses[t.name] = p
    z = math.fsum(masses.values())
    if z <= 0:
        raise PCFGError("context unparseable")
    return TokenDistribution(i, {k: math.log(v / z) for k, v in masses.items()})


def brute_prefix(g: Grammar, prefix, max_len: int) -> tuple[float, float]:
    """Bounds on the total probability of sentences starting with ``prefix``."""
    prefix = tuple(prefix)
    lang = enumerate_language(g, max_len)
    lower = lang.prefix_mass(prefix)
    return lower, min(1.0, lower + lang.tail_bound)


# ---------------------------------------------------------------------------
# random test grammars

def random_pcfg(rng, n_nonterminals=4, n_terminals=3, max_rules=30, *,
                finite=False, lexical_mass=(0.55, 0.8), unary_prob=0.5,
                max_binary=4, max_tries=1000) -> Grammar:
    """A random proper, binarized grammar.

    Each nonterminal puts at least 0.55 of its mass on lexical rules and at
    most 0.1 on unary rules, so the expected number of nonterminal children
    per expansion stays below one and derivations terminate with probability
    one.  With ``finite`` true, children always have a higher index than
    their parent, which makes the language finite.
    """
    rng = np.random.default_rng(rng)
    terminals = [chr(ord("a") + i) for i in range(n_terminals)]
    nts = ["S"] + [f"N{i}" for i in range(1, n_nonterminals)]
    for _ in range(max_tries):
        prods = []
        for idx, x in enumerate(nts):
            kids = nts[idx + 1:] if finite else nts
            n_lex = int(rng.integers(1, n_terminals + 1))
            n_bin = int(rng.integers(0 if idx else 1, max_binary + 1)) if kids else 0
            n_bin = min(n_bin, len(kids) ** 2)
            n_un = int(rng.random() < unary_prob) if kids else 0
            lex_share = rng.uniform(*lexical_mass) if (n_bin or n_un) else 1.0
            un_share = min(0.1, 1.0 - lex_share) if n_un else 0.0
            bin_share = 1.0 - lex_share - un_share if n_bin else 0.0
            lex = rng.choice(terminals, size=n_lex, replace=False)
            for t, w in zip(lex, rng.dirichlet(np.ones(n_lex)) * lex_share):
                prods.append((x, (Terminal(t),), w))
            pairs = set()
            while len(pairs) < n_bin:
                pairs.add((kids[rng.integers(len(kids))], kids[rng.integers(len(kids))]))
            if pairs:
                for pair, w in zip(sorted(pairs), rng.dirichlet(np.ones(len(pairs))) * bin_share):
                    prods.append((x, pair, w))
            if n_un:
                child = kids[rng.integers(len(kids))]
                if child != x:
                    prods.append((x, (child,), un_share))
        prods = _rescale_lhs(prods, None)
        if len(prods) > max_rules:
            continue
        g = Grammar.from_productions(prods, start="S")
        if validate(g).ok:
            return g
    raise RuntimeError("could not generate a valid random grammar")


def _rescale_lhs(prods, only):
    totals = defaultdict(float)
    for lhs, _, p in prods:
        totals[lhs] += p
    return [(lhs, rhs, p / totals[lhs] if only is None or lhs == only else p)
            for lhs, rhs, p in prods]
