"""Penn-style bracketed trees and relative-frequency grammar induction."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import PCFGError, TreeSyntaxError
from .grammar import Grammar, Terminal, binarize as _binarize


@dataclass
class TreeNode:
    label: str
    children: list["TreeNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def preterminals(self) -> list[str]:
        """Label of the node directly above each leaf, left to right."""
        out = []
        for c in self.children:
            if c.is_leaf:
                out.append(self.label)
            else:
                out.extend(c.preterminals())
        return out

    def __str__(self):
        if self.is_leaf:
            return self.label
        return f"({self.label} {' '.join(map(str, self.children))})"


_TREE_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_tree(text: str) -> TreeNode:
    """Parse one bracketed tree.

    >>> str(parse_tree("(S (A a) (B b))"))
    '(S (A a) (B b))'
    """
    tokens = _TREE_TOKEN.findall(text)
    if not tokens:
        raise TreeSyntaxError("empty tree")
    pos = 0

    def node():
        nonlocal pos
        if tokens[pos] != "(":
            raise TreeSyntaxError(f"expected '(' at token {pos}")
        pos += 1
        label = ""
        if pos < len(tokens) and tokens[pos] not in "()":
            label = tokens[pos]
            pos += 1
        children = []
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                children.append(node())
            else:
                children.append(TreeNode(tokens[pos]))
                pos += 1
        if pos >= len(tokens):
            raise TreeSyntaxError("unbalanced brackets")
        pos += 1
        if not children:
            raise TreeSyntaxError(f"node {label!r} has no children")
        return TreeNode(label, children)

    tree = node()
    if pos != len(tokens):
        raise TreeSyntaxError("trailing material after tree")
    # Penn files often wrap each tree in an unlabeled bracket
    if tree.label == "" and len(tree.children) == 1 and not tree.children[0].is_leaf:
        tree = tree.children[0]
    if tree.label == "":
        raise TreeSyntaxError("root node has no label")
    return tree


def iter_treebank(lines: Iterable[str]) -> Iterator[TreeNode]:
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            yield parse_tree(line)
        except TreeSyntaxError as e:
            raise TreeSyntaxError(f"line {lineno}: {e}") from None


def read_treebank(path) -> list[TreeNode]:
    with open(path, encoding="utf-8") as f:
        return list(iter_treebank(f))


def _productions(tree: TreeNode, counts: Counter):
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        if not node.label:
            raise TreeSyntaxError("internal node without a label")
        rhs = tuple(Terminal(c.label) if c.is_leaf else c.label for c in node.children)
        counts[node.label, rhs] += 1
        stack.extend(c for c in node.children if not c.is_leaf)


def induce_from_treebank(trees: Iterable[TreeNode], binarize: bool = False) -> Grammar:
    """Relative-frequency estimate: ``count(lhs -> rhs) / count(lhs)``."""
    trees = list(trees)
    if not trees:
        raise PCFGError("empty treebank")
    roots = {t.label for t in trees}
    if len(roots) != 1:
        raise PCFGError(f"trees have different root labels: {sorted(roots)}")
    counts = Counter()
    for t in trees:
        _productions(t, counts)
    lhs_totals = Counter()
    for (lhs, _), c in counts.items():
        lhs_totals[lhs] += c
    # sorted for a deterministic symbol numbering
    productions = [(lhs, rhs, c / lhs_totals[lhs])
                   for (lhs, rhs), c in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1]))]
    g = Grammar.from_productions(productions, start=roots.pop())
    return _binarize(g) if binarize else g
