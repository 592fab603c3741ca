import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from hps.case import (CaseDescription, Const, Expression, canonicalize, case_from_json,
                      case_to_json, content_vector, dot, dumps_case, fact)
from oracles import count_functors, cosine, random_case


def test_content_vector_counts():
    c = CaseDescription([fact("above", "A", "B"), fact("above", "B", "C"), fact("small", "A")])
    assert content_vector(c).counts == {"above": 2, "small": 1}
    assert content_vector(CaseDescription([])).counts == {}


def test_content_vector_nested():
    c = CaseDescription([fact("cause", fact("above", "A", "B"), fact("fall", "B"))])
    assert content_vector(c).counts == {"cause": 1, "above": 1, "fall": 1}


def test_isa_label_tokens():
    c = CaseDescription([fact("isa", "A", Const("person"))])
    assert content_vector(c).counts == {"isa": 1, "isa:person": 1}


def test_dot_examples():
    a = CaseDescription([fact("a", "X"), fact("b", "X")])
    b = CaseDescription([fact("a", "Y")])
    assert dot(content_vector(a), content_vector(a)) == pytest.approx(1.0)
    assert dot(content_vector(b), content_vector(CaseDescription([fact("z", "Q")]))) == 0.0
    assert dot(content_vector(a), content_vector(b)) == pytest.approx(1 / math.sqrt(2))
    assert dot(content_vector(a), content_vector(CaseDescription([]))) == 0.0


@pytest.mark.parametrize("seed", range(30))
def test_content_vector_matches_recursive_count(seed):
    c = random_case(random.Random(seed))
    assert content_vector(c).counts == count_functors(c)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_dot_symmetric_bounded_and_cosine(s1, s2):
    a, b = random_case(random.Random(s1)), random_case(random.Random(s2))
    va, vb = content_vector(a), content_vector(b)
    d = dot(va, vb)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(dot(vb, va), abs=1e-12)
    assert d == pytest.approx(cosine(count_functors(a), count_functors(b)), abs=1e-12)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_content_vector_additive_over_disjoint_union(s1, s2):
    a = random_case(random.Random(s1), prefix="a")
    b = random_case(random.Random(s2), prefix="b")
    u = a.union(b)
    va, vb, vu = content_vector(a).counts, content_vector(b).counts, content_vector(u).counts
    for k in set(va) | set(vb):
        assert vu[k] == va.get(k, 0) + vb.get(k, 0)


def test_canonicalize_examples():
    c = canonicalize(CaseDescription([fact("adjacent", "e2", "e1")]))
    assert c.facts == (fact("adjacent", "e1", "e2"),)
    f = fact("small", "A")
    assert len(CaseDescription([f, f]).facts) == 1


@given(st.integers(0, 10**6), st.randoms())
def test_canonicalize_order_insensitive_and_idempotent(seed, rnd):
    rng = random.Random(seed)
    facts = []
    for _ in range(20):
        a, b = rng.sample("ABCDE", 2)
        facts.append(fact(rng.choice(("adjacent", "above", "small")), a, *([b] if rng.random() < .7 else [])))
    shuffled = facts[:]
    rnd.shuffle(shuffled)
    c1, c2 = canonicalize(CaseDescription(facts)), canonicalize(CaseDescription(shuffled))
    assert dumps_case(c1) == dumps_case(c2)
    assert dumps_case(canonicalize(c1)) == dumps_case(c1)


def test_hash_consing():
    a = fact("above", "A", fact("small", "B"))
    b = Expression("above", ["A", Expression("small", ["B"])])
    assert a is b
    assert Const("x") is Const("x")
    assert fact("adjacent", "A", "B").symmetric and not fact("above", "A", "B").symmetric


def test_expression_nesting_and_entities():
    e = fact("cause", fact("above", "A", "B"), fact("fall", "B"))
    assert e.depth == 2
    assert e.entities() == {"A", "B"}
    assert e.substitute({"A": "X"}) is fact("cause", fact("above", "X", "B"), fact("fall", "B"))


@pytest.mark.parametrize("seed", range(20))
def test_json_round_trip(seed):
    c = canonicalize(random_case(random.Random(seed)))
    back = case_from_json(json.loads(json.dumps(case_to_json(c))))
    assert back.facts == c.facts and back.entities == c.entities


def test_json_shape():
    c = CaseDescription([fact("isa", "A", Const("dog"))], {"A": "glyph"}, "img1")
    obj = case_to_json(c)
    assert obj["provenance"] == "img1"
    assert obj["entities"] == [{"id": "A", "kind": "glyph"}]
    assert obj["facts"][0] == {"functor": "isa", "args": ["A", {"const": "dog"}], "symmetric": False}


def test_weights_survive_json():
    f = fact("small", "A")
    c = CaseDescription([f], weights={f: 0.5})
    assert case_from_json(case_to_json(c)).weight(f) == 0.5
