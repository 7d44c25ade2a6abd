"""Ancestral sampling of corpora and vocabulary construction."""
from __future__ import annotations

import bisect
import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import PCFGError, SplitExhaustionError
from .grammar import Grammar
from .treebank import TreeNode

SPLITS = ("train", "dev", "test", "eval")
UNK = "<unk>"
# disjointness rejections allowed per requested sentence
EXHAUSTION_FACTOR = 100
# total draws (any rejection reason) allowed per requested sentence
DRAW_FACTOR = 10_000


@dataclass
class SamplerConfig:
    min_len: int = 6
    max_len: int = 25
    sizes: dict = field(default_factory=lambda: dict.fromkeys(SPLITS, 0))
    seed: int = 0
    max_expansions: int | None = None
    allow_duplicates_within_split: bool = True

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        unknown = set(self.sizes) - set(SPLITS)
        if unknown:
            raise ValueError(f"unknown split names: {sorted(unknown)}")
        self.sizes = {s: int(self.sizes.get(s, 0)) for s in SPLITS}
        if any(v < 0 for v in self.sizes.values()):
            raise ValueError("split sizes must be non-negative")
        if self.max_expansions is None:
            self.max_expansions = 10 * self.max_len
        if self.max_expansions < self.max_len:
            raise ValueError("max_expansions must be >= max_len")


@dataclass
class Corpus:
    sentences: list[tuple[str, ...]]
    trees: list[TreeNode] | None = None

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass
class CorpusSplits:
    train: Corpus
    dev: Corpus
    test: Corpus
    eval: Corpus

    def __getitem__(self, name) -> Corpus:
        return getattr(self, name)

    def items(self):
        return ((s, self[s]) for s in SPLITS)


class _Uniforms:
    """Buffered uniform draws from a numpy Generator."""

    def __init__(self, rng, block=4096):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.i = 0

    def __call__(self):
        if self.i == self.block:
            self.buf = self.rng.random(self.block)
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return u


class _RuleTable:
    def __init__(self, g: Grammar):
        self.cum = {}
        self.rhs = {}
        for lhs, rules in g.rules_by_lhs.items():
            probs = np.array([r.prob for r in rules])
            cum = np.cumsum(probs / probs.sum())
            cum[-1] = 1.0
            self.cum[lhs] = cum.tolist()
            self.rhs[lhs] = [r.rhs for r in rules]


_tables: "dict[int, tuple[Grammar, _RuleTable]]" = {}


def _rule_table(g):
    entry = _tables.get(id(g))
    if entry is None or entry[0] is not g:
        entry = (g, _RuleTable(g))
        _tables[id(g)] = entry
    return entry[1]


def sample_sentence(g: Grammar, rng, config: SamplerConfig):
    """Draw one derivation by leftmost ancestral sampling.

    Returns ``(tokens, tree)``, or ``None`` when the sentence falls outside
    the length window or the derivation needs more than
    ``config.max_expansions`` rule applications.
    """
    uniform = rng if isinstance(rng, _Uniforms) else _Uniforms(np.random.default_rng(rng))
    table = _rule_table(g)
    root = TreeNode(g.start.name)
    stack = [(g.start.id, root)]
    n_terminals = 0
    expansions = 0
    while stack:
        lhs, node = stack.pop()
        expansions += 1
        if expansions > config.max_expansions:
            return None
        options = table.rhs[lhs]
        rhs = options[min(bisect.bisect_right(table.cum[lhs], uniform()), len(options) - 1)]
        node.children = [TreeNode(s.name) for s in rhs]
        for s, child in zip(reversed(rhs), reversed(node.children)):
            if s.is_terminal:
                n_terminals += 1
            else:
                stack.append((s.id, child))
        # every pending nonterminal yields at least one token
        if n_terminals + len(stack) > config.max_len:
            return None
    if n_terminals < config.min_len:
        return None
    return tuple(root.leaves()), root


def generate_corpus(g: Grammar, config: SamplerConfig) -> CorpusSplits:
    """Sample the train/dev/test/eval splits.

    Duplicates are allowed inside a split.  A dev sentence may not occur in
    train, a test sentence in train or dev, and an eval sentence in train.
    """
    uniform = _Uniforms(np.random.default_rng(config.seed))
    exclude_from = {"train": (), "dev": ("train",), "test": ("train", "dev"),
                    "eval": ("train",)}
    seen = {s: set() for s in SPLITS}
    out = {}
    for split in SPLITS:
        want = config.sizes[split]
        sents, trees = [], []
        blocked = set().union(*(seen[s] for s in exclude_from[split])) \
            if exclude_from[split] else set()
        collisions = 0
        draws = 0
        while len(sents) < want:
            draws += 1
            if draws > DRAW_FACTOR * max(want, 1):
                raise PCFGError(f"sampling budget exhausted for {split}: "
                                "the length window is rarely satisfied")
            res = sample_sentence(g, uniform, config)
            if res is None:
                continue
            toks, tree = res
            if toks in blocked or (not config.allow_duplicates_within_split
                                   and toks in seen[split]):
                collisions += 1
                if collisions > EXHAUSTION_FACTOR * want:
                    raise SplitExhaustionError(
                        f"split exhaustion: cannot fill {split} with sentences disjoint "
                        f"from {'/'.join(exclude_from[split]) or 'itself'}")
                continue
            sents.append(toks)
            trees.append(tree)
            seen[split].add(toks)
        out[split] = Corpus(sents, trees)
    return CorpusSplits(**out)


def sample_corpus(g: Grammar, n: int, config: SamplerConfig | None = None,
                  seed: int | None = None) -> Corpus:
    """``n`` i.i.d. accepted samples with no split constraints."""
    config = config or SamplerConfig()
    cfg = SamplerConfig(config.min_len, config.max_len, {"train": n},
                        config.seed if seed is None else seed, config.max_expansions)
    return generate_corpus(g, cfg).train


# ---------------------------------------------------------------------------
# vocabulary

@dataclass(frozen=True)
class Vocabulary:
    tokens: frozenset
    unk: str = UNK
    counts: dict = field(default_factory=dict, compare=False)

    def __contains__(self, token):
        return token in self.tokens

    def __len__(self):
        return len(self.tokens)

    def map(self, token: str) -> str:
        return token if token in self.tokens else self.unk

    def to_tsv(self) -> str:
        rows = sorted(((t, self.counts.get(t, 0)) for t in self.tokens),
                      key=lambda tc: (-tc[1], tc[0]))
        return "".join(f"{t}\t{c}\n" for t, c in rows)


def build_vocab(corpus, min_freq: int = 5, unk: str = UNK) -> Vocabulary:
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(itertools.chain.from_iterable(corpus))
    if unk in counts:
        raise PCFGError(f"unk marker {unk!r} occurs in the corpus")
    kept = {t: c for t, c in counts.items() if c >= min_freq}
    return Vocabulary(frozenset(kept), unk, kept)


def read_vocab(path, unk: str = UNK) -> Vocabulary:
    counts = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            tok, _, c = line.partition("\t")
            counts[tok] = int(c) if c else 0
    return Vocabulary(frozenset(counts), unk, counts)


# ---------------------------------------------------------------------------
# corpus files

def read_corpus(path) -> list[tuple[str, ...]]:
    with open(path, encoding="utf-8") as f:
        return [tuple(line.split()) for line in f if line.strip()]


def format_corpus(sentences) -> str:
    return "".join(" ".join(s) + "\n" for s in sentences)


def tags_from_trees(trees) -> list[tuple[int, int, str]]:
    """``(sentence_id, position, preterminal)`` rows, positions 1-based."""
    rows = []
    for sid, tree in enumerate(trees):
        for pos, tag in enumerate(tree.preterminals(), 1):
            rows.append((sid, pos, tag))
    return rows
