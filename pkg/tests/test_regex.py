import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from typemix.pfsm import brute_force_prob, validate
from typemix.regex import RegexError, UnsupportedRegexError, compile_regex

from conftest import all_strings

# strings used to probe the language: "z" is outside every pattern alphabet
PROBES = all_strings("abz", 5)


def support(machine, strings):
    return {s for s in strings if machine.prob(s) > 0}


def test_char_class():
    m = compile_regex("[01]")
    assert m.prob("0") == m.prob("1") > 0
    assert m.prob("01") == 0


def test_single_literal():
    m = compile_regex("a")
    assert support(m, all_strings("ab", 4)) == {"a"}


def test_star_geometric():
    m = compile_regex("a*")
    p = [brute_force_prob(m, "a" * n) for n in range(5)]
    assert p[0] > p[1] > p[2] > 0
    ratios = [b / a for a, b in zip(p, p[1:])]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)


def test_uniform_split_at_each_state():
    m = compile_regex("a(b|c)?")
    assert validate(m) == []
    rows = {}
    for q, p in zip(m.trans_src.tolist(), m.trans_p.tolist()):
        rows.setdefault(q, []).append(p)
    for q, p in zip(m.final_states.tolist(), m.final_p.tolist()):
        rows.setdefault(q, []).append(p)
    for ps in rows.values():
        assert np.allclose(ps, ps[0])


def test_negated_class_uses_catch_all():
    m = compile_regex("[^a]b")
    assert m.catch_all
    assert m.prob("xb") > 0 and m.prob("⟐b") > 0 and m.prob("ab") == 0


def test_bounded_repeat():
    m = compile_regex("x{2,3}")
    assert [m.prob("x" * n) > 0 for n in range(5)] == [False, False, True, True, False]


def test_decimal_pattern():
    m = compile_regex(r"\d+(\.\d+)?")
    assert m.prob("12.5") > 0 and m.prob("12.") == 0 and m.prob(".5") == 0


@pytest.mark.parametrize("pattern", [r"(?=a)b", r"(?<!a)b", r"(a)\1", r"\bword"])
def test_unsupported(pattern):
    with pytest.raises(UnsupportedRegexError, match="unsupported regex feature"):
        compile_regex(pattern)


@pytest.mark.parametrize("pattern,pos", [("(ab", 0), ("a)", 1), ("[ab", 0), ("*a", 0),
                                         ("a{3,1}", 1)])
def test_parse_errors_carry_position(pattern, pos):
    with pytest.raises(RegexError, match=f"parse error at position {pos}") as info:
        compile_regex(pattern)
    assert info.value.position == pos


# -- random patterns against the reference matcher -------------------------

atoms = st.sampled_from(["a", "b", "[ab]", "[^a]", "[^ab]", ".", r"\w"])


def _quantify(node):
    return st.tuples(node, st.sampled_from(["", "*", "+", "?", "{2}", "{0,2}", "{1,}"])).map(
        lambda t: f"(?:{t[0]}){t[1]}" if t[1] else t[0])


patterns = st.recursive(
    atoms,
    lambda inner: st.one_of(
        _quantify(inner),
        st.lists(inner, min_size=2, max_size=3).map("".join),
        st.lists(inner, min_size=2, max_size=3).map(lambda xs: "(" + "|".join(xs) + ")"),
    ),
    max_leaves=6,
)


@settings(max_examples=150, deadline=None)
@given(pattern=patterns)
def test_support_equals_language(pattern):
    ref = re.compile(pattern, re.ASCII)
    try:
        m = compile_regex(pattern)
    except RegexError as exc:
        assert "matches no string" in str(exc)
        assert not any(ref.fullmatch(s) for s in PROBES)
        return
    assert validate(m) == []
    for s in PROBES:
        assert (m.prob(s) > 0) == bool(ref.fullmatch(s)), (pattern, s)
