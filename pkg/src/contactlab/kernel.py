"""Translation-invariant infection kernels and process parameters."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .groups import FreeGroup, GroupDescriptor, GroupElement, GroupError

VERIFIED = "verified"
FAILED = "failed"
INCONCLUSIVE = "inconclusive"


class RateKernel:
    """Finite-support rates ``k -> a(0, k)``; ``a(i, j) = a(0, i^-1 j)``."""

    def __init__(self, group: GroupDescriptor, support: Mapping[GroupElement, float]):
        clean: dict[GroupElement, float] = {}
        for k, rate in support.items():
            if k.group != group:
                raise GroupError(f"support element {k!r} is not in {group.name}")
            if k == group.identity:
                raise ValueError("the identity cannot carry an infection rate")
            rate = float(rate)
            if not rate > 0:
                raise ValueError(f"rates must be strictly positive, got {rate} at {k}")
            clean[k] = clean.get(k, 0.0) + rate
        self.group = group
        self.support = MappingProxyType(dict(sorted(clean.items(), key=lambda kv: group.sort_key(kv[0]))))

    def rate(self, i: GroupElement, j: GroupElement) -> float:
        return self.support.get(i.inverse() * j, 0.0)

    @property
    def total_rate(self) -> float:
        return total_rate(self)

    def reversed(self) -> "RateKernel":
        return reverse_kernel(self)

    def is_symmetric(self) -> bool:
        return self == reverse_kernel(self)

    def __eq__(self, other):
        if not isinstance(other, RateKernel):
            return NotImplemented
        if self.group != other.group or set(self.support) != set(other.support):
            return False
        return all(np.isclose(self.support[k], other.support[k], rtol=1e-12, atol=0) for k in self.support)

    def __repr__(self):
        body = ", ".join(f"{k}: {v:g}" for k, v in self.support.items())
        return f"RateKernel({self.group.name}, {{{body}}})"

    def describe(self) -> str:
        return ",".join(f"{k}:{v:g}" for k, v in self.support.items())

    # arrays for the compiled core
    def core_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        keys = list(self.support)
        rows = self.group.operand_rows(keys) if keys else np.zeros((0, self.group.operand_width), np.int64)
        rates = np.array([self.support[k] for k in keys], dtype=np.float64)
        return rows, rates


def reverse_kernel(k: RateKernel) -> RateKernel:
    """``a_dagger(i, j) = a(j, i)``, i.e. support ``g -> a(0, g^-1)``."""
    return RateKernel(k.group, {g.inverse(): r for g, r in k.support.items()})


def total_rate(k: RateKernel) -> float:
    return float(sum(k.support.values()))


def nearest_neighbor(group: GroupDescriptor, lam: float) -> RateKernel:
    return RateKernel(group, {g: lam for g in group.generators})


@dataclass(frozen=True)
class ProcessParams:
    kernel: RateKernel
    delta: float

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("recovery rate delta must be nonnegative")

    @property
    def group(self) -> GroupDescriptor:
        return self.kernel.group

    def reversed(self) -> "ProcessParams":
        return ProcessParams(reverse_kernel(self.kernel), self.delta)

    def with_delta(self, delta: float) -> "ProcessParams":
        return ProcessParams(self.kernel, delta)


_NN = re.compile(r"^nn\(\s*([-+0-9.eE]+)\s*\)$")


def parse_kernel(group: GroupDescriptor, spec) -> RateKernel:
    """Kernel from ``"nn(1.5)"``, ``"a:2,A:1"``, ``"none"`` or a list of ``(word, rate)`` pairs."""
    if isinstance(spec, str):
        s = spec.strip()
        if s in ("", "none", "0"):
            return RateKernel(group, {})
        m = _NN.match(s)
        if m:
            return nearest_neighbor(group, float(m.group(1)))
        pairs = []
        for part in s.split(","):
            if ":" not in part:
                raise GroupError(f"kernel entry {part!r} must look like word:rate")
            word, rate = part.rsplit(":", 1)
            pairs.append((word, float(rate)))
    else:
        pairs = [(str(w), float(r)) for w, r in spec]
    support: dict[GroupElement, float] = {}
    for word, rate in pairs:
        g = group.parse_element(word)
        support[g] = support.get(g, 0.0) + rate
    return RateKernel(group, support)


@dataclass
class IrreducibilityReport:
    ir1: str
    irr: str
    radius: int
    certificates: dict = field(default_factory=dict)


def _closure(starts, steps, limit: int, group: GroupDescriptor) -> set:
    reach = set(starts)
    frontier = list(starts)
    while frontier:
        nxt = []
        for x in frontier:
            for s in steps:
                y = x * s
                if y not in reach and group.word_norm(y) <= limit:
                    reach.add(y)
                    nxt.append(y)
        frontier = nxt
    return reach


def _free_certificates(kernel: RateKernel) -> dict:
    """Failure certificates available from the letters of free-group words."""
    group = kernel.group
    assert isinstance(group, FreeGroup)
    letters = [x for g in kernel.support for x in g.form]
    out = {}
    used = {abs(x) for x in letters}
    missing = [i for i in range(1, group.k + 1) if i not in used]
    if missing:
        # the generated subgroup lies in the free factor on the used letters
        out["ir1"] = group.element((missing[0],))
    if group.k >= 2 and letters:
        if all(x > 0 for x in letters):
            # A^-n A^m contains only words (negative letters)(positive letters)
            out["irr"] = group.element((1, -2))
        elif all(x < 0 for x in letters):
            out["irr"] = group.element((-1, 2))
    if "ir1" in out and "irr" not in out:
        out["irr"] = out["ir1"]
    return out


def check_irreducibility(kernel: RateKernel, radius: int, ball_cap: int = 200_000) -> IrreducibilityReport:
    """Truncated semi-decision of the two irreducibility conditions.

    ``ir1``: the subgroup generated by the support covers ``ball(radius)``.
    ``irr``: ``A^-n A^m`` and ``A^n A^-m`` each cover ``ball(radius)``.
    Word factors are confined to ``ball(3 * radius)``.  ``failed`` is only
    reported with a certificate element, which exists for free groups.
    """
    if radius < 1:
        raise ValueError("radius must be positive")
    group = kernel.group
    target = group.ball_enumerate(radius, cap=ball_cap)
    limit = 3 * radius
    group.ball_enumerate(limit, cap=ball_cap)  # cap guard
    A = list(kernel.support)
    certs = _free_certificates(kernel) if isinstance(group, FreeGroup) else {}
    e = group.identity

    if "ir1" in certs:
        ir1 = FAILED
    else:
        sym = A + [g.inverse() for g in A]
        reach = _closure([e], sym, limit, group)
        ir1 = VERIFIED if target <= reach else INCONCLUSIVE

    if "irr" in certs:
        irr = FAILED
    else:
        mono = _closure([e], A, limit, group)
        inv = [u.inverse() for u in mono]
        left = {ui * v for ui in inv for v in mono}
        right = {u * vi for u in mono for vi in inv}
        irr = VERIFIED if target <= left and target <= right else INCONCLUSIVE
    return IrreducibilityReport(ir1=ir1, irr=irr, radius=radius, certificates=certs)

