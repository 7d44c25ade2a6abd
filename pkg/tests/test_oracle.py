import math

import pytest

from pcfg_bound import brute_inside, brute_masked, brute_prefix, enumerate_language, parse_grammar
from pcfg_bound.oracle import LanguageTooLarge, random_pcfg
import pcfg_bound.oracle as oracle


def test_g1_language(g1):
    lang = enumerate_language(g1, 2)
    assert lang.entries == pytest.approx({("a", "a"): 0.28, ("a", "b"): 0.42,
                                          ("b", "a"): 0.12, ("b", "b"): 0.18})
    assert lang.tail_bound == pytest.approx(0.0, abs=1e-15)


def test_g2_language(g2_raw):
    lang = enumerate_language(g2_raw, 3)
    assert lang.entries == pytest.approx({("a",): 0.5, ("a", "a"): 0.25, ("a", "a", "a"): 0.125})
    assert lang.tail_bound == pytest.approx(0.125)
    assert lang.truncated


def test_single(single):
    lang = enumerate_language(single, 1)
    assert lang.entries == {("a",): 1.0} and lang.tail_bound == 0.0


def test_brute_masked_g1(g1):
    d = brute_masked(g1, ("a", "b"), 1)
    assert d.probs() == pytest.approx({"a": 0.7, "b": 0.3})


def test_brute_prefix(g1, g2_raw):
    assert brute_prefix(g1, ("a",), 2) == pytest.approx((0.7, 0.7))
    lower, upper = brute_prefix(g2_raw, ("a",), 20)
    assert lower == pytest.approx(1 - 2 ** -20, abs=1e-15) and upper == 1.0


def test_brute_inside(g1):
    assert brute_inside(g1, ("a", "b")) == pytest.approx(math.log(0.42))
    assert brute_inside(g1, ("a",)) == -math.inf


def test_too_large(monkeypatch):
    monkeypatch.setattr(oracle, "MAX_STRINGS", 10)
    g = parse_grammar("start: S\nS -> S S 0.3\nS -> 'a' 0.35\nS -> 'b' 0.35\n")
    with pytest.raises(LanguageTooLarge, match="language too large"):
        enumerate_language(g, 6)


def test_cache_extends_and_truncates(g2_raw):
    long = enumerate_language(g2_raw, 6)
    short = enumerate_language(g2_raw, 4)
    assert short.max_len == 4 and len(short.entries) == 4
    assert long.mass + long.tail_bound == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_random_grammars_are_proper(seed):
    g = random_pcfg(seed)
    lang = enumerate_language(g, 6)
    assert lang.mass + lang.tail_bound == pytest.approx(1.0, abs=1e-9)
    assert lang.tail_bound < 0.2


@pytest.mark.parametrize("seed", range(10))
def test_finite_random_grammars(seed):
    g = random_pcfg(seed, finite=True, n_nonterminals=3)
    lang = enumerate_language(g, 8)
    assert lang.mass == pytest.approx(1.0, abs=1e-9)
