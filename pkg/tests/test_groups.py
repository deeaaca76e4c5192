import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactlab.groups import BallTooLarge, GroupError, parse_group


def el(g, text):
    return g.parse_element(text)


def test_compose_examples():
    Z2 = parse_group("Z^2")
    assert Z2.compose(el(Z2, "(1,2)"), el(Z2, "(3,-1)")) == el(Z2, "(4,1)")
    F2 = parse_group("F2")
    assert F2.compose(el(F2, "ab"), el(F2, "B")) == el(F2, "a")
    C3 = parse_group("C3")
    assert C3.compose(el(C3, "2"), el(C3, "2")) == el(C3, "1")


def test_invert_examples():
    Z2 = parse_group("Z^2")
    assert Z2.invert(el(Z2, "(3,-1)")) == el(Z2, "(-3,1)")
    F2 = parse_group("F2")
    assert F2.invert(el(F2, "ab")) == el(F2, "BA")
    assert F2.invert(F2.identity) == F2.identity


def test_word_norm_examples():
    Z2 = parse_group("Z^2")
    assert Z2.word_norm(el(Z2, "(3,-1)")) == 4
    F2 = parse_group("F2")
    assert F2.word_norm(el(F2, "abab")) == 4
    L = parse_group("lamplighter")
    # toggling the lamp under the walker is one generator
    assert L.word_norm(el(L, "t")) == 1
    assert L.word_norm(L.identity) == 0


def test_ball_examples():
    Z = parse_group("Z")
    assert {Z.word_norm(x) for x in Z.ball_enumerate(2)} == {0, 1, 2}
    assert len(Z.ball_enumerate(2)) == 5
    F2 = parse_group("F2")
    assert F2.ball_enumerate(1) == {F2.identity, *F2.generators}
    for n in range(4):
        assert len(F2.ball_enumerate(n)) == 1 + 2 * (3 ** n - 1)


def test_ball_cap():
    with pytest.raises(BallTooLarge):
        parse_group("F2").ball_enumerate(8, cap=1000)


def test_ball_nesting_and_growth():
    for name in ("Z", "Z^2", "F2", "lamplighter"):
        g = parse_group(name)
        prev = set()
        for n in range(4):
            b = g.ball_enumerate(n)
            assert prev <= b
            prev = b
    Z2 = parse_group("Z^2")
    assert len(Z2.ball_enumerate(6)) / len(Z2.ball_enumerate(3)) < 5


def test_generators_symmetric_no_identity():
    for name in ("Z", "Z^3", "F3", "C4", "C2", "trivial", "lamplighter"):
        g = parse_group(name)
        gens = set(g.generators)
        assert g.identity not in gens
        assert {x.inverse() for x in gens} == gens


def test_finite_groups_enumerate():
    for n in (1, 2, 3, 5):
        g = parse_group(f"C{n}")
        assert g.finite_order == n
        assert len(set(g.elements())) == n
    assert parse_group("trivial").finite_order == 1


def test_free_group_words_reduced():
    F2 = parse_group("F2")
    x = el(F2, "abBA")
    assert x == F2.identity
    w = el(F2, "aabAb")
    form = w.form
    assert all(form[i] != -form[i + 1] for i in range(len(form) - 1))


def test_parse_errors():
    with pytest.raises(GroupError):
        parse_group("Q8")
    with pytest.raises(GroupError):
        parse_group("F2").parse_element("c")
    with pytest.raises(GroupError):
        parse_group("Z").compose(parse_group("Z").identity, parse_group("F2").identity)


def test_encode_roundtrip():
    for name in ("Z", "Z^2", "F2", "C3", "lamplighter"):
        g = parse_group(name)
        for x in g.ball_enumerate(3):
            assert g.decode(g.encode(x)) == x


WORDS = {
    "Z^2": st.text(alphabet="aAbB", max_size=8),
    "F2": st.text(alphabet="aAbB", max_size=8),
    "C3": st.text(alphabet="aA", max_size=8),
    "lamplighter": st.text(alphabet="taA", max_size=8),
}


@pytest.mark.parametrize("name", sorted(WORDS))
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_group_axioms(name, data):
    g = parse_group(name)
    x, y, z = (el(g, data.draw(WORDS[name]) or "e") for _ in range(3))
    assert (x * y) * z == x * (y * z)
    assert x * g.identity == x == g.identity * x
    assert x * x.inverse() == g.identity
    same = g.element(x.form)
    assert same == x and hash(same) == hash(x)
    assert g.word_norm(x * y) <= g.word_norm(x) + g.word_norm(y)
