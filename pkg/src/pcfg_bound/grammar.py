"""Grammar representation, grammar-file I/O, and structural transforms.

Rule probabilities are stored as natural logs.  A :class:`Grammar` is never
mutated after construction; transforms such as :func:`binarize` and
:func:`prune_rules` return new grammars.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import GrammarError, GrammarSyntaxError, ImproperGrammarError

NONTERMINAL = "nonterminal"
TERMINAL = "terminal"
DEFAULT_START = "ROOT"
PROB_TOLERANCE = 1e-6

CLOSURE_TOL = 1e-12
CLOSURE_MAX_TERMS = 10_000
CLOSURE_BOUND = 1e6


class Terminal(str):
    """Marks a right-hand-side item as a terminal in :meth:`Grammar.from_productions`."""

    def __repr__(self):
        return f"Terminal({str.__repr__(self)})"


@dataclass(frozen=True)
class Symbol:
    id: int
    name: str
    kind: str

    @property
    def is_terminal(self) -> bool:
        return self.kind == TERMINAL

    def __str__(self):
        return quote_terminal(self.name) if self.is_terminal else self.name


@dataclass(frozen=True)
class Rule:
    lhs: Symbol
    rhs: tuple[Symbol, ...]
    log_prob: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)

    @property
    def is_lexical(self) -> bool:
        return len(self.rhs) == 1 and self.rhs[0].is_terminal

    @property
    def is_unary(self) -> bool:
        return len(self.rhs) == 1 and not self.rhs[0].is_terminal

    @property
    def is_binary(self) -> bool:
        return len(self.rhs) == 2 and not any(s.is_terminal for s in self.rhs)

    def key(self) -> tuple:
        return (self.lhs.name, tuple((s.kind, s.name) for s in self.rhs))

    def __str__(self):
        return f"{self.lhs} -> {' '.join(map(str, self.rhs))} {_format_prob(self.prob)}"


@dataclass(frozen=True)
class GrammarTables:
    """Dense/sparse numeric views of a binarized grammar used by the chart engines."""

    n_nonterminals: int
    n_terminals: int
    bin_lhs: np.ndarray
    bin_left: np.ndarray
    bin_right: np.ndarray
    bin_prob: np.ndarray
    bin_logp: np.ndarray
    bin_lhs_indicator: sparse.csr_matrix
    bin_left_indicator: sparse.csr_matrix
    bin_right_indicator: sparse.csr_matrix
    unary: np.ndarray
    lexical: sparse.csc_matrix
    lexical_mass: np.ndarray


class Grammar:
    """An immutable PCFG.

    Nonterminal and terminal ids are dense within their kind.  Build one with
    :func:`parse_grammar` or :meth:`from_productions`; the constructor expects
    already-resolved :class:`Rule` objects.
    """

    def __init__(self, nonterminals: Sequence[str], terminals: Sequence[str],
                 rules: Iterable[Rule], start: str):
        self._nonterminals = tuple(Symbol(i, n, NONTERMINAL) for i, n in enumerate(nonterminals))
        self._terminals = tuple(Symbol(i, t, TERMINAL) for i, t in enumerate(terminals))
        self._nt_index = {s.name: s for s in self._nonterminals}
        self._t_index = {s.name: s for s in self._terminals}
        if len(self._nt_index) != len(self._nonterminals):
            raise GrammarError("duplicate nonterminal names")
        if len(self._t_index) != len(self._terminals):
            raise GrammarError("duplicate terminal names")
        if start not in self._nt_index:
            raise GrammarError(f"unknown start symbol {start!r}")
        self._start = self._nt_index[start]
        self._rules = tuple(rules)

        seen = set()
        by_lhs = defaultdict(list)
        by_children = defaultdict(list)
        by_terminal = defaultdict(list)
        for rule in self._rules:
            if not rule.rhs:
                raise GrammarError(f"epsilon rule for {rule.lhs.name}")
            if not math.isfinite(rule.log_prob) or rule.log_prob > 1e-12:
                raise GrammarError(f"invalid log-probability in rule {rule}")
            key = rule.key()
            if key in seen:
                raise GrammarError(f"duplicate rule {rule}")
            seen.add(key)
            by_lhs[rule.lhs.id].append(rule)
            if rule.is_binary:
                by_children[rule.rhs[0].id, rule.rhs[1].id].append(rule)
            elif rule.is_lexical:
                by_terminal[rule.rhs[0].id].append(rule)
        self.rules_by_lhs = {k: tuple(v) for k, v in by_lhs.items()}
        self.binary_by_children = {k: tuple(v) for k, v in by_children.items()}
        self.lexical_by_terminal = {k: tuple(v) for k, v in by_terminal.items()}

    @classmethod
    def from_productions(cls, productions, start: str = DEFAULT_START, log: bool = False):
        """Build from ``(lhs, rhs, p)`` triples.

        ``rhs`` items are nonterminal names (plain ``str``) or :class:`Terminal`.
        ``p`` is a probability unless ``log`` is true.
        """
        nts, ts = {start: None}, {}
        prepared = []
        for lhs, rhs, p in productions:
            rhs = (rhs,) if isinstance(rhs, str) else tuple(rhs)
            nts.setdefault(lhs, None)
            for item in rhs:
                (ts if isinstance(item, Terminal) else nts).setdefault(str(item), None)
            prepared.append((lhs, rhs, p))
        nt_ids = {n: i for i, n in enumerate(nts)}
        t_ids = {t: i for i, t in enumerate(ts)}
        rules = []
        for lhs, rhs, p in prepared:
            if log:
                lp = float(p)
            else:
                if not 0.0 < p <= 1.0 + 1e-12:
                    raise GrammarError(f"probability {p} out of range for {lhs}")
                lp = math.log(p)
            rules.append(Rule(
                Symbol(nt_ids[lhs], lhs, NONTERMINAL),
                tuple(Symbol(t_ids[str(x)], str(x), TERMINAL) if isinstance(x, Terminal)
                      else Symbol(nt_ids[x], x, NONTERMINAL) for x in rhs),
                min(lp, 0.0),
            ))
        return cls(list(nts), list(ts), rules, start)

    @property
    def nonterminals(self) -> tuple[Symbol, ...]:
        return self._nonterminals

    @property
    def terminals(self) -> tuple[Symbol, ...]:
        return self._terminals

    @property
    def rules(self) -> tuple[Rule, ...]:
        return self._rules

    @property
    def start(self) -> Symbol:
        return self._start

    def nonterminal(self, name: str) -> Symbol:
        return self._nt_index[name]

    def terminal(self, name: str) -> Symbol:
        return self._t_index[name]

    def has_terminal(self, name: str) -> bool:
        return name in self._t_index

    def has_nonterminal(self, name: str) -> bool:
        return name in self._nt_index

    def terminal_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._t_index[t].id if t in self._t_index else -1 for t in tokens],
                        dtype=np.int64)

    def productions(self):
        """Rules as ``(lhs, rhs, prob)`` triples accepted by :meth:`from_productions`."""
        for r in self._rules:
            yield (r.lhs.name,
                   tuple(Terminal(s.name) if s.is_terminal else s.name for s in r.rhs),
                   r.prob)

    def rule_dict(self) -> dict:
        """``{(lhs, rhs-key): prob}``; handy for comparing grammars."""
        return {r.key(): r.prob for r in self._rules}

    @property
    def is_binarized(self) -> bool:
        return all(r.is_lexical or r.is_unary or r.is_binary for r in self._rules)

    def __len__(self):
        return len(self._rules)

    def __repr__(self):
        return (f"Grammar(start={self._start.name!r}, nonterminals={len(self._nonterminals)}, "
                f"terminals={len(self._terminals)}, rules={len(self._rules)})")

    @cached_property
    def tables(self) -> GrammarTables:
        if not self.is_binarized:
            raise GrammarError("grammar must be binarized (see binarize())")
        n, v = len(self._nonterminals), len(self._terminals)
        binary = [r for r in self._rules if r.is_binary]
        bin_lhs = np.array([r.lhs.id for r in binary], dtype=np.int64)
        bin_left = np.array([r.rhs[0].id for r in binary], dtype=np.int64)
        bin_right = np.array([r.rhs[1].id for r in binary], dtype=np.int64)
        bin_logp = np.array([r.log_prob for r in binary], dtype=float)

        def indicator(cols):
            data = np.ones(len(cols))
            return sparse.csr_matrix((data, (np.arange(len(cols)), cols)), shape=(len(cols), n))

        unary = np.zeros((n, n))
        lex_rows, lex_cols, lex_vals = [], [], []
        for r in self._rules:
            if r.is_unary:
                unary[r.lhs.id, r.rhs[0].id] += r.prob
            elif r.is_lexical:
                lex_rows.append(r.lhs.id)
                lex_cols.append(r.rhs[0].id)
                lex_vals.append(r.prob)
        lexical = sparse.csc_matrix((lex_vals, (lex_rows, lex_cols)), shape=(n, v))
        return GrammarTables(
            n_nonterminals=n, n_terminals=v,
            bin_lhs=bin_lhs, bin_left=bin_left, bin_right=bin_right,
            bin_prob=np.exp(bin_logp), bin_logp=bin_logp,
            bin_lhs_indicator=indicator(bin_lhs),
            bin_left_indicator=indicator(bin_left),
            bin_right_indicator=indicator(bin_right),
            unary=unary, lexical=lexical,
            lexical_mass=np.asarray(lexical.sum(axis=1)).ravel(),
        )


# ---------------------------------------------------------------------------
# grammar file format

_TOKEN = re.compile(r"""\s*(?:('(?:[^'\\]|\\.)*')|(\#.*)|([^\s'#]+)|(\S))""")
_START = re.compile(r"^\s*start\s*:\s*(\S+)\s*(?:#.*)?$")
_BARE = re.compile(r"^[^\s'#]+$")


def quote_terminal(token: str) -> str:
    return "'" + token.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _unquote(token: str) -> str:
    return re.sub(r"\\(.)", r"\1", token[1:-1])


def _format_prob(p: float) -> str:
    return "%.15g" % p


def _tokenize(line, lineno):
    out = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None or m.end() == pos:
            break
        pos = m.end()
        quoted, comment, bare, stray = m.groups()
        if comment is not None:
            break
        if stray is not None:
            raise GrammarSyntaxError(f"unterminated terminal near {line[m.start(4):].strip()!r}",
                                     lineno)
        out.append(Terminal(_unquote(quoted)) if quoted is not None else bare)
    return out


def parse_grammar(text: str) -> Grammar:
    """Parse grammar-file text.

    >>> g = parse_grammar("start: S\\nS -> 'a' 1.0")
    >>> len(g), g.start.name
    (1, 'S')
    """
    start = DEFAULT_START
    productions = []
    seen = {}
    first = True
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if first:
            first = False
            m = _START.match(line)
            if m:
                start = m.group(1)
                continue
        tokens = _tokenize(line, lineno)
        if not tokens:
            continue
        if len(tokens) < 3 or tokens[1] != "->" or isinstance(tokens[1], Terminal):
            raise GrammarSyntaxError("expected 'LHS -> RHS... prob'", lineno)
        lhs = tokens[0]
        if isinstance(lhs, Terminal) or lhs == "->":
            raise GrammarSyntaxError("left-hand side must be a nonterminal", lineno)
        *rhs, prob_text = tokens[2:]
        if isinstance(prob_text, Terminal):
            raise GrammarSyntaxError("missing probability", lineno)
        try:
            prob = float(prob_text)
        except ValueError:
            raise GrammarSyntaxError(f"bad probability {prob_text!r}", lineno) from None
        if not rhs:
            raise GrammarSyntaxError("empty right-hand side (epsilon rules are not supported)",
                                     lineno)
        if not 0.0 < prob <= 1.0:
            raise GrammarSyntaxError(f"probability {prob_text} not in (0, 1]", lineno)
        if any(x == "->" and not isinstance(x, Terminal) for x in rhs):
            raise GrammarSyntaxError("unexpected '->'", lineno)
        key = (lhs, tuple((isinstance(x, Terminal), str(x)) for x in rhs))
        if key in seen:
            raise GrammarSyntaxError(f"duplicate rule (first defined on line {seen[key]})", lineno)
        seen[key] = lineno
        productions.append((lhs, rhs, prob))
    lhs_names = {p[0] for p in productions}
    if start not in lhs_names:
        raise GrammarSyntaxError(f"unknown start symbol {start!r}")
    return Grammar.from_productions(productions, start=start)


def format_grammar(g: Grammar) -> str:
    for s in g.nonterminals:
        if not _BARE.match(s.name) or s.name == "->":
            raise GrammarError(f"nonterminal {s.name!r} cannot be written in the grammar format")
    lines = [f"start: {g.start.name}"]
    lines.extend(str(r) for r in g.rules)
    return "\n".join(lines) + "\n"


def read_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read())


def write_grammar(g: Grammar, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_grammar(g))


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    sums: dict[str, float]
    unreachable: set[str] = field(default_factory=set)
    nonproductive: set[str] = field(default_factory=set)
    tolerance: float = PROB_TOLERANCE

    @property
    def improper(self) -> dict[str, float]:
        return {k: v for k, v in self.sums.items() if abs(v - 1.0) > self.tolerance}

    @property
    def ok(self) -> bool:
        return not self.improper and not self.unreachable and not self.nonproductive

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "improper": dict(sorted(self.improper.items())),
            "unreachable": sorted(self.unreachable),
            "nonproductive": sorted(self.nonproductive),
        }


def _productive(g: Grammar) -> set[int]:
    productive = set()
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.lhs.id not in productive and all(
                    s.is_terminal or s.id in productive for s in r.rhs):
                productive.add(r.lhs.id)
                changed = True
    return productive


def _reachable(g: Grammar) -> set[int]:
    seen = {g.start.id}
    stack = [g.start.id]
    while stack:
        for r in g.rules_by_lhs.get(stack.pop(), ()):
            for s in r.rhs:
                if not s.is_terminal and s.id not in seen:
                    seen.add(s.id)
                    stack.append(s.id)
    return seen


def validate(g: Grammar, tolerance: float = PROB_TOLERANCE) -> ValidationReport:
    sums = {}
    for lhs, rules in g.rules_by_lhs.items():
        sums[g.nonterminals[lhs].name] = math.fsum(r.prob for r in rules)
    reach = _reachable(g)
    prod = _productive(g)
    return ValidationReport(
        sums=sums,
        unreachable={s.name for s in g.nonterminals if s.id not in reach},
        nonproductive={s.name for s in g.nonterminals if s.id not in prod},
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# transforms

def _fresh(name, taken):
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def binarize(g: Grammar) -> Grammar:
    """X-bar style binarization.

    ``L -> X1 ... Xn (p)`` becomes ``L -> X1 @L_1 (p)``, ``@L_1 -> X2 @L_2 (1)``, ...
    Terminals inside multi-symbol right-hand sides are first lifted to
    preterminals ``$tok -> 'tok' (1)``.  Already-binary grammars come back
    with an identical rule set.
    """
    if g.is_binarized:
        return g
    taken = {s.name for s in g.nonterminals}
    lifted = {}
    counters = defaultdict(int)
    out = []

    def preterminal(tok):
        if tok not in lifted:
            name = _fresh("$" + tok if _BARE.match("$" + tok) else f"$T{len(lifted)}", taken)
            lifted[tok] = name
            out.append((name, (Terminal(tok),), 1.0))
        return lifted[tok]

    def intermediate(lhs):
        while True:
            counters[lhs] += 1
            name = f"@{lhs}_{counters[lhs]}"
            if name not in taken:
                taken.add(name)
                return name

    for lhs, rhs, p in g.productions():
        if len(rhs) == 1:
            out.append((lhs, rhs, p))
            continue
        items = [preterminal(str(x)) if isinstance(x, Terminal) else x for x in rhs]
        head, prob = lhs, p
        while len(items) > 2:
            nxt = intermediate(lhs)
            out.append((head, (items[0], nxt), prob))
            head, prob, items = nxt, 1.0, items[1:]
        out.append((head, tuple(items), prob))
    return Grammar.from_productions(out, start=g.start.name)


def _renormalize(productions):
    totals = defaultdict(float)
    for lhs, _, p in productions:
        totals[lhs] += p
    return [(lhs, rhs, p / totals[lhs]) for lhs, rhs, p in productions]


def prune_rules(g: Grammar, threshold: float) -> Grammar:
    """Drop rules with probability below ``threshold`` and renormalize.

    Nonterminals left without a derivation are removed transitively, as are
    symbols no longer reachable from the start symbol.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    start = g.start.name
    prods = [pr for pr in g.productions() if pr[2] >= threshold]
    while True:
        productive = set()
        changed = True
        while changed:
            changed = False
            for lhs, rhs, _ in prods:
                if lhs not in productive and all(
                        isinstance(x, Terminal) or x in productive for x in rhs):
                    productive.add(lhs)
                    changed = True
        if start not in productive:
            raise GrammarError(f"start symbol {start!r} is non-productive after pruning")
        kept = [pr for pr in prods if pr[0] in productive
                and all(isinstance(x, Terminal) or x in productive for x in pr[1])]
        reach = {start}
        stack = [start]
        by_lhs = defaultdict(list)
        for pr in kept:
            by_lhs[pr[0]].append(pr)
        while stack:
            for _, rhs, _ in by_lhs[stack.pop()]:
                for x in rhs:
                    if not isinstance(x, Terminal) and x not in reach:
                        reach.add(x)
                        stack.append(x)
        kept = [pr for pr in kept if pr[0] in reach]
        if len(kept) == len(prods):
            break
        prods = kept
    return Grammar.from_productions(_renormalize(prods), start=start)


# ---------------------------------------------------------------------------
# closures

def series_closure(m: np.ndarray, what: str = "unary cycle") -> np.ndarray:
    """``sum_k m^k`` by repeated doubling; raises on divergence.

    After ``j`` doublings the partial sum holds ``2**j`` terms; the loop stops
    once the newest block of terms is below ``CLOSURE_TOL`` and gives up once
    more than ``CLOSURE_MAX_TERMS`` terms would be needed.
    """
    n = m.shape[0]
    total = np.eye(n)
    power = np.array(m, dtype=float)
    terms = 1
    while True:
        block = power @ total
        total = total + block
        terms *= 2
        if not np.all(np.isfinite(total)) or total.max(initial=0.0) > CLOSURE_BOUND:
            raise ImproperGrammarError(f"improper {what}")
        if np.abs(block).max(initial=0.0) < CLOSURE_TOL:
            return total
        if terms >= CLOSURE_MAX_TERMS:
            raise ImproperGrammarError(f"improper {what}")
        power = power @ power


class UnaryClosure:
    """``matrix[a, b]``: total probability that ``a`` rewrites to ``b`` through
    zero or more unary steps."""

    def __init__(self, matrix: np.ndarray, names: Sequence[str]):
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self._index = {n: i for i, n in enumerate(names)}

    def __getitem__(self, pair):
        a, b = pair
        return float(self.matrix[self._index[a], self._index[b]])


def unary_matrix(g: Grammar) -> np.ndarray:
    n = len(g.nonterminals)
    u = np.zeros((n, n))
    for r in g.rules:
        if r.is_unary:
            u[r.lhs.id, r.rhs[0].id] += r.prob
    return u


def build_unary_closure(g: Grammar) -> UnaryClosure:
    return UnaryClosure(series_closure(unary_matrix(g), "unary cycle"),
                        [s.name for s in g.nonterminals])
