import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcfg_bound import (PCFGError, GrammarError, GrammarSyntaxError, ImproperGrammarError, binarize,
                        build_unary_closure, enumerate_language, format_grammar, parse_grammar,
                        prune_rules, validate)
from pcfg_bound.grammar import Terminal, Grammar, quote_terminal, series_closure, unary_matrix
from pcfg_bound.oracle import random_pcfg

from conftest import G1_TEXT


def rules_of(g):
    return {f"{r.lhs} -> {' '.join(map(str, r.rhs))}": r.prob for r in g.rules}


class TestParse:
    def test_g1(self, g1):
        assert len(g1.rules) == 5
        assert len(g1.terminals) == 2
        assert g1.start.name == "S"
        assert rules_of(g1)["A -> 'a'"] == pytest.approx(0.7)

    def test_default_start_is_root(self):
        g = parse_grammar("ROOT -> 'x' 1.0\n")
        assert g.start.name == "ROOT"

    def test_duplicate_rule(self):
        with pytest.raises(PCFGError, match="duplicate"):
            parse_grammar("start: S\nS -> A B 1.0\nS -> A B 0.5\nA -> 'a' 1\nB -> 'b' 1\n")

    def test_epsilon_rule_is_syntax_error(self):
        with pytest.raises(GrammarSyntaxError) as info:
            parse_grammar("start: A\nA -> 0.7\n")
        assert "line 2" in str(info.value)

    def test_unknown_start(self):
        with pytest.raises(PCFGError, match="start"):
            parse_grammar("start: Q\nS -> 'a' 1.0\n")

    def test_comments_blank_lines_and_escapes(self):
        g = parse_grammar("# header\n\nstart: S  # trailing\nS -> 'it\\'s' 1.0 # c\n")
        assert g.terminals[0].name == "it's"

    @pytest.mark.parametrize("line", ["S -> 'a' 1.5", "S -> 'a' 0", "S -> 'a' x",
                                      "S 'a' 0.5", "S -> 'a"])
    def test_bad_lines(self, line):
        with pytest.raises(GrammarSyntaxError):
            parse_grammar(line + "\n")

    def test_format_round_trip(self, g1):
        again = parse_grammar(format_grammar(g1))
        assert again.rule_dict() == pytest.approx(g1.rule_dict())
        assert format_grammar(again) == format_grammar(g1)

    def test_quote_terminal(self):
        assert quote_terminal("it's") == "'it\\'s'"


class TestValidate:
    def test_g1_ok(self, g1):
        report = validate(g1)
        assert report.ok
        assert all(v == pytest.approx(1.0) for v in report.sums.values())

    def test_improper_sum(self):
        g = parse_grammar(G1_TEXT.replace("A -> 'b' 0.3", "A -> 'b' 0.2"))
        report = validate(g)
        assert not report.ok
        assert report.sums["A"] == pytest.approx(0.9)

    def test_orphan(self):
        g = parse_grammar(G1_TEXT + "X -> 'a' 1.0\n")
        report = validate(g)
        assert report.unreachable == {"X"}
        assert not report.ok

    def test_nonproductive(self):
        g = parse_grammar("start: S\nS -> 'a' 0.5\nS -> Y 0.5\nY -> Y Y 1.0\n")
        assert validate(g).nonproductive == {"Y"}


class TestBinarize:
    def test_ternary(self):
        g = parse_grammar("start: S\nS -> A B C 0.8\nS -> 'x' 0.2\n"
                          "A -> 'a' 1\nB -> 'b' 1\nC -> 'c' 1\n")
        b = binarize(g)
        rules = rules_of(b)
        assert rules["S -> A @S_1"] == pytest.approx(0.8)
        assert rules["@S_1 -> B C"] == pytest.approx(1.0)
        assert b.is_binarized and validate(b).ok

    def test_identity_on_binary(self, g1):
        b = binarize(g1)
        assert b.rule_dict() == g1.rule_dict()
        assert not any(s.name.startswith("@") for s in b.nonterminals)

    def test_quaternary_language_unchanged(self):
        g = parse_grammar("start: S\nS -> A B C D 1.0\nA -> 'a' 0.5\nA -> 'b' 0.5\n"
                          "B -> 'a' 1\nC -> 'b' 0.3\nC -> C C 0.2\nC -> 'a' 0.5\nD -> 'b' 1\n")
        before = enumerate_language(g, 6).entries
        after = enumerate_language(binarize(g), 6).entries
        assert before.keys() == after.keys()
        assert max(abs(before[k] - after[k]) for k in before) <= 1e-10

    def test_terminal_inside_long_rule_is_lifted(self, g2_raw):
        b = binarize(g2_raw)
        assert b.is_binarized
        assert rules_of(b) == pytest.approx({"S -> $a S": 0.5, "S -> 'a'": 0.5, "$a -> 'a'": 1.0})


class TestPrune:
    def test_g1_unchanged(self, g1):
        assert prune_rules(g1, 1e-8).rule_dict() == pytest.approx(g1.rule_dict())

    def test_renormalizes(self):
        g = parse_grammar("start: A\nA -> 'a' 0.999999999\nA -> 'b' 1e-9\n")
        p = prune_rules(g, 1e-8)
        assert rules_of(p) == {"A -> 'a'": 1.0}

    def test_start_lost(self):
        g = parse_grammar("start: S\nS -> A 1.0\nA -> 'a' 1e-9\nA -> A A 0.999999999\n")
        with pytest.raises(GrammarError, match="non-productive"):
            prune_rules(g, 1e-8)

    def test_transitive_removal(self):
        g = parse_grammar("start: S\nS -> 'a' 0.9\nS -> X 0.1\nX -> Y 1.0\nY -> 'b' 1e-9\n"
                          "Y -> Y Y 0.999999999\n")
        p = prune_rules(g, 1e-8)
        assert {s.name for s in p.nonterminals} == {"S"}
        assert validate(p).ok

    def test_bad_threshold(self, g1):
        with pytest.raises(ValueError):
            prune_rules(g1, 1.5)


class TestUnaryClosure:
    def test_identity_without_unaries(self, g1):
        c = build_unary_closure(g1)
        assert np.array_equal(c.matrix, np.eye(len(g1.nonterminals)))

    def test_geometric(self):
        g = parse_grammar("start: S\nS -> A 0.5\nS -> 'b' 0.5\nA -> S 0.4\nA -> 'a' 0.6\n")
        c = build_unary_closure(g)
        assert c["S", "A"] == pytest.approx(0.5 / (1 - 0.2), abs=1e-12)
        assert c["S", "S"] == pytest.approx(1 / (1 - 0.2), abs=1e-12)

    def test_unit_cycle_diverges(self):
        g = parse_grammar("start: S\nS -> S 1.0\nS -> 'a' 1.0\n")
        with pytest.raises(ImproperGrammarError, match="improper unary cycle"):
            build_unary_closure(g)

    def test_series_closure_cap(self):
        # spectral radius just under one converges too slowly for the cap
        with pytest.raises(ImproperGrammarError):
            series_closure(np.array([[0.999999]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_unary_closure_fixed_point(seed):
    g = random_pcfg(seed, unary_prob=0.9)
    c = build_unary_closure(g).matrix
    u = unary_matrix(g)
    assert np.allclose(c, np.eye(len(c)) + u @ c, atol=1e-10, rtol=0)
    assert np.all(np.diag(c) >= 1.0) and np.all(c >= u)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_format_parse_round_trip(seed):
    g = random_pcfg(seed)
    again = parse_grammar(format_grammar(g))
    assert again.rule_dict() == pytest.approx(g.rule_dict(), abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 5))
def test_binarize_preserves_language(seed, arity):
    rng = np.random.default_rng(seed)
    prods = [("S", tuple(f"X{i}" for i in range(arity)), 0.7), ("S", (Terminal("a"),), 0.3)]
    for i in range(arity):
        p = rng.uniform(0.2, 0.8)
        prods += [(f"X{i}", (Terminal("a"),), p), (f"X{i}", (Terminal("b"),), 1 - p)]
    g = Grammar.from_productions(prods, start="S")
    before = enumerate_language(g, 6).entries
    after = enumerate_language(binarize(g), 6).entries
    assert before.keys() == after.keys()
    assert max(abs(before[k] - after[k]) for k in before) <= 1e-10
