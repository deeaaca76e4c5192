import pytest

from contactlab.groups import parse_group
from contactlab.kernel import (FAILED, INCONCLUSIVE, VERIFIED, ProcessParams, RateKernel, check_irreducibility,
                               parse_kernel, reverse_kernel, total_rate)


def test_reverse_examples():
    Z = parse_group("Z")
    k = parse_kernel(Z, "a:2,A:1")
    assert reverse_kernel(k) == parse_kernel(Z, "a:1,A:2")
    F2 = parse_group("F2")
    assert reverse_kernel(parse_kernel(F2, "a:1")) == parse_kernel(F2, "A:1")
    sym = parse_kernel(Z, "nn(1)")
    assert reverse_kernel(sym) == sym and sym.is_symmetric()


def test_reverse_involution_and_total():
    for g, spec in (("Z", "a:2,A:1"), ("F2", "a:1,b:0.5,AB:2"), ("Z^2", "a:1,b:3")):
        k = parse_kernel(parse_group(g), spec)
        assert reverse_kernel(reverse_kernel(k)) == k
        assert total_rate(reverse_kernel(k)) == pytest.approx(total_rate(k))


def test_total_rate_examples():
    Z = parse_group("Z")
    assert total_rate(parse_kernel(Z, "a:2,A:1")) == 3
    assert total_rate(parse_kernel(Z, "none")) == 0
    assert total_rate(parse_kernel(parse_group("F2"), "nn(1)")) == 4


def test_left_invariance_spot_checks():
    F2 = parse_group("F2")
    k = parse_kernel(F2, "a:1,b:2,ab:0.5")
    for i in list(F2.ball_enumerate(2))[:10]:
        for j in F2.ball_enumerate(2):
            assert k.rate(i, j) == k.rate(F2.identity, i.inverse() * j)


def test_kernel_validation():
    Z = parse_group("Z")
    with pytest.raises(ValueError):
        RateKernel(Z, {Z.identity: 1.0})
    with pytest.raises(ValueError):
        RateKernel(Z, {Z.parse_element("a"): -1.0})
    with pytest.raises(ValueError):
        ProcessParams(parse_kernel(Z, "nn(1)"), -0.5)
    with pytest.raises(ValueError):
        parse_kernel(Z, "a=1")


def test_irreducibility_examples():
    Z = parse_group("Z")
    r = check_irreducibility(parse_kernel(Z, "a:1"), 4)
    assert r.ir1 == VERIFIED and r.irr == VERIFIED
    F2 = parse_group("F2")
    r = check_irreducibility(parse_kernel(F2, "a:1,b:1"), 2)
    assert r.irr == FAILED
    assert r.certificates["irr"] is not None
    Z2 = parse_group("Z^2")
    r = check_irreducibility(parse_kernel(Z2, "a:1,b:1"), 5)
    assert r.irr == VERIFIED


def test_irreducibility_failed_ir1_on_free_factor():
    F2 = parse_group("F2")
    r = check_irreducibility(parse_kernel(F2, "a:1,A:1"), 2)
    assert r.ir1 == FAILED


def test_irreducibility_monotone_in_support():
    Z2 = parse_group("Z^2")
    small = check_irreducibility(parse_kernel(Z2, "a:1,b:1"), 3)
    big = check_irreducibility(parse_kernel(Z2, "a:1,b:1,A:1"), 3)
    assert small.irr == VERIFIED and big.irr == VERIFIED
    assert INCONCLUSIVE != big.ir1
