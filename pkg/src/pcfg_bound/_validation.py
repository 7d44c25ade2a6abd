"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

from collections.abc import Sequence

from .grammar import Grammar, parse_grammar, read_grammar
from .treebank import TreeNode, parse_tree


def check_corpus(X, name="X") -> list[tuple[str, ...]]:
    """Sentences as tuples of tokens.

    Accepts strings (split on whitespace) or sequences of string tokens.
    """
    if isinstance(X, (str, bytes)) or not isinstance(X, (Sequence, list, tuple)) \
            and not hasattr(X, "__iter__"):
        raise TypeError(f"{name} must be an iterable of sentences, got {type(X).__name__}")
    out = []
    for k, s in enumerate(X):
        if isinstance(s, str):
            toks = tuple(s.split())
        else:
            toks = tuple(s)
            if not all(isinstance(t, str) for t in toks):
                raise TypeError(f"{name}[{k}] contains a non-string token")
        out.append(toks)
    if not out:
        raise ValueError(f"{name} is empty")
    return out


def check_trees(X, name="X") -> list[TreeNode]:
    trees = [t if isinstance(t, TreeNode) else parse_tree(str(t)) for t in X]
    if not trees:
        raise ValueError(f"{name} is empty")
    return trees


def check_grammar(grammar) -> Grammar:
    """A :class:`Grammar` from an instance, a file path, or grammar text."""
    if isinstance(grammar, Grammar):
        return grammar
    if isinstance(grammar, str):
        return parse_grammar(grammar) if "->" in grammar else read_grammar(grammar)
    if hasattr(grammar, "__fspath__"):
        return read_grammar(grammar)
    raise TypeError(f"cannot build a grammar from {type(grammar).__name__}")


def check_positive_int(value, name) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
