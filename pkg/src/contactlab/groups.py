"""Countable groups with finite symmetric generating sets.

The catalogue is fixed: integer lattices ``Z^d``, free groups ``F_k``
(whose Cayley graphs are the ``2k``-regular trees), the lamplighter group
``Z_2 wr Z``, cyclic groups ``C_n`` and the trivial group ``C_1``.

Every element has a unique canonical form, so equality and hashing are
structural.  Besides the Python-level API each group knows how to pack its
elements into a single ``int64`` *code* and how to express an element as a
right-multiplication *operand row*; the compiled simulator in
:mod:`contactlab._fastcore` only ever sees codes and rows.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator

import numpy as np

DEFAULT_BALL_CAP = 10_000_000

# kind ids understood by the compiled core
KIND_LATTICE = 0
KIND_FREE = 1
KIND_CYCLIC = 2
KIND_LAMPLIGHTER = 3


class GroupError(ValueError):
    """Structural misuse: mismatched groups, bad element syntax, unknown group."""


class BallTooLarge(RuntimeError):
    """Raised when a ball enumeration would exceed the configured cap."""

    def __init__(self, radius: int, size: int, cap: int):
        super().__init__(f"ball of radius {radius} exceeds cap {cap} (reached {size} elements)")
        self.radius = radius
        self.size = size
        self.cap = cap


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: "GroupDescriptor"
    form: Hashable

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group == other.group and self.form == other.form

    def __hash__(self):
        return hash((self.group.name, self.form))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return self.group.compose(self, other)

    def inverse(self) -> "GroupElement":
        return self.group.invert(self)

    def norm(self) -> int:
        return self.group.word_norm(self)

    def __str__(self):
        return self.group.format_element(self)

    def __repr__(self):
        return f"<{self.group.name}: {self}>"


_TOKEN = re.compile(r"([A-Za-z])(?:\^(-?\d+))?")


class GroupDescriptor:
    """Base class for the catalogue groups.

    Subclasses implement the canonical-form arithmetic (``_compose``,
    ``_invert``), the generator list and the integer packing used by the
    compiled core.
    """

    kind: str = ""
    kind_id: int = -1
    finite_order: int | None = None
    amenable_known: bool | None = None
    # width of operand rows handed to the compiled core
    operand_width: int = 1

    def __init__(self, name: str):
        self.name = name
        self._letters: dict[str, Hashable] = {}

    # --- equality -------------------------------------------------------
    def __eq__(self, other):
        return isinstance(other, GroupDescriptor) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    # --- hooks ------------------------------------------------------------
    def _identity_form(self) -> Hashable:
        raise NotImplementedError

    def _compose(self, a, b):
        raise NotImplementedError

    def _invert(self, a):
        raise NotImplementedError

    def _generator_forms(self) -> list:
        raise NotImplementedError

    def _norm(self, a) -> int:
        return self._bfs_norm(a)

    def _format(self, a) -> str:
        return str(a)

    # --- public API ---------------------------------------------------------
    def element(self, form) -> GroupElement:
        return GroupElement(self, self._canonical(form))

    def _canonical(self, form):
        return form

    @property
    def identity(self) -> GroupElement:
        return GroupElement(self, self._identity_form())

    @property
    def generators(self) -> tuple[GroupElement, ...]:
        return tuple(GroupElement(self, f) for f in self._generator_forms())

    def _check(self, *elements: GroupElement) -> None:
        for g in elements:
            if not isinstance(g, GroupElement) or g.group != self:
                other = getattr(getattr(g, "group", None), "name", type(g).__name__)
                raise GroupError(f"element of {other} used with group {self.name}")

    def compose(self, g: GroupElement, h: GroupElement) -> GroupElement:
        self._check(g, h)
        return GroupElement(self, self._compose(g.form, h.form))

    def invert(self, g: GroupElement) -> GroupElement:
        self._check(g)
        return GroupElement(self, self._invert(g.form))

    def word_norm(self, g: GroupElement) -> int:
        self._check(g)
        return self._norm(g.form)

    def format_element(self, g: GroupElement) -> str:
        return self._format(g.form)

    def ball_enumerate(self, radius: int, cap: int = DEFAULT_BALL_CAP) -> set[GroupElement]:
        """All elements of word norm at most ``radius``, by BFS from the identity."""
        return set(self.ball_layers(radius, cap).keys())

    def ball_layers(self, radius: int, cap: int = DEFAULT_BALL_CAP) -> dict[GroupElement, int]:
        """BFS distances from the identity for every element of ``ball(radius)``."""
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        gens = self._generator_forms()
        dist = {self._identity_form(): 0}
        frontier = [self._identity_form()]
        for n in range(1, radius + 1):
            nxt = []
            for a in frontier:
                for s in gens:
                    b = self._compose(a, s)
                    if b not in dist:
                        dist[b] = n
                        nxt.append(b)
                        if len(dist) > cap:
                            raise BallTooLarge(radius, len(dist), cap)
            frontier = nxt
            if not frontier:
                break
        return {GroupElement(self, f): d for f, d in dist.items()}

    def _bfs_norm(self, a) -> int:
        target = a
        if target == self._identity_form():
            return 0
        gens = self._generator_forms()
        seen = {self._identity_form()}
        frontier = [self._identity_form()]
        n = 0
        while frontier:
            n += 1
            nxt = []
            for x in frontier:
                for s in gens:
                    y = self._compose(x, s)
                    if y == target:
                        return n
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            frontier = nxt
            if len(seen) > DEFAULT_BALL_CAP:
                raise BallTooLarge(n, len(seen), DEFAULT_BALL_CAP)
        raise GroupError(f"{self._format(a)} is not generated by the generating set")

    def elements(self) -> list[GroupElement]:
        """Enumerate a finite group in a fixed order (identity first)."""
        if self.finite_order is None:
            raise GroupError(f"{self.name} is infinite")
        return sorted(self.ball_enumerate(self.finite_order), key=self.sort_key)

    def sort_key(self, g: GroupElement):
        return (self.word_norm(g), repr(g.form))

    # --- parsing ------------------------------------------------------------
    def parse_element(self, text: str) -> GroupElement:
        """Parse a word such as ``"aB^2"`` (uppercase = inverse) or ``"e"``.

        Groups with integer coordinates also accept literals like ``"3"`` or
        ``"(1,-2)"``.
        """
        s = text.strip()
        if s in ("", "e", "0", "id"):
            return self.identity
        lit = self._parse_literal(s)
        if lit is not None:
            return lit
        pos = 0
        form = self._identity_form()
        compact = s.replace(" ", "").replace(".", "").replace("*", "")
        while pos < len(compact):
            m = _TOKEN.match(compact, pos)
            if not m:
                raise GroupError(f"cannot parse element {text!r} of {self.name}")
            letter, power = m.group(1), int(m.group(2) or 1)
            base = self._letter(letter, text)
            if power < 0:
                base = self._invert(base)
                power = -power
            for _ in range(power):
                form = self._compose(form, base)
            pos = m.end()
        return GroupElement(self, form)

    def _letter(self, letter: str, text: str):
        if letter in self._letters:
            return self._letters[letter]
        if letter.lower() in self._letters and letter.isupper():
            return self._invert(self._letters[letter.lower()])
        raise GroupError(f"unknown letter {letter!r} in {text!r} for group {self.name}")

    def _parse_literal(self, s: str) -> GroupElement | None:
        return None

    # --- compiled-core encoding ----------------------------------------------
    def core_params(self) -> np.ndarray:
        raise NotImplementedError

    def encode(self, g: GroupElement) -> int:
        raise NotImplementedError

    def decode(self, code: int) -> GroupElement:
        raise NotImplementedError

    def operand(self, g: GroupElement) -> list[int]:
        """Row describing right multiplication by ``g`` in the compiled core."""
        raise NotImplementedError

    def operand_rows(self, elements: Iterable[GroupElement]) -> np.ndarray:
        elements = list(elements)
        rows = [self.operand(g) for g in elements]
        width = max([self.operand_width] + [len(r) for r in rows])
        out = np.zeros((len(rows), width), dtype=np.int64)
        for i, r in enumerate(rows):
            out[i, : len(r)] = r
        return out


class IntegerLattice(GroupDescriptor):
    kind = "IntegerLattice"
    kind_id = KIND_LATTICE
    amenable_known = True

    def __init__(self, d: int):
        if d < 1:
            raise GroupError("lattice dimension must be positive")
        super().__init__(f"Z^{d}")
        self.d = d
        for c, letter in zip(range(d), "abcd"):
            self._letters[letter] = self._unit(c)
        self.bits = 64 if d == 1 else 63 // d

    def _unit(self, c: int, sign: int = 1):
        return tuple(sign if i == c else 0 for i in range(self.d))

    def _identity_form(self):
        return (0,) * self.d

    def _canonical(self, form):
        if isinstance(form, int):
            form = (form,)
        form = tuple(int(x) for x in form)
        if len(form) != self.d:
            raise GroupError(f"{self.name} element needs {self.d} coordinates")
        return form

    def _compose(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def _invert(self, a):
        return tuple(-x for x in a)

    def _norm(self, a):
        return sum(abs(x) for x in a)

    def _generator_forms(self):
        gens = []
        for c in range(self.d):
            gens.append(self._unit(c, 1))
            gens.append(self._unit(c, -1))
        return gens

    def _format(self, a):
        return str(a[0]) if self.d == 1 else "(" + ",".join(map(str, a)) + ")"

    def sort_key(self, g):
        return g.form

    def _parse_literal(self, s):
        body = s.strip("()")
        try:
            coords = [int(x) for x in body.split(",")]
        except ValueError:
            return None
        return self.element(tuple(coords))

    def core_params(self):
        return np.array([self.d, self.bits], dtype=np.int64)

    def _check_core(self):
        if self.d > 3:
            raise GroupError("the compiled simulator supports Z^d only for d <= 3")

    def encode(self, g):
        self._check_core()
        if self.d == 1:
            return int(g.form[0])
        off = 1 << (self.bits - 1)
        code = 0
        for c, x in enumerate(g.form):
            if not -off < x < off:
                raise GroupError(f"coordinate {x} out of encodable range")
            code |= (x + off) << (self.bits * c)
        return code

    def decode(self, code):
        code = int(code)
        if self.d == 1:
            return GroupElement(self, (code,))
        off = 1 << (self.bits - 1)
        mask = (1 << self.bits) - 1
        return GroupElement(self, tuple(((code >> (self.bits * c)) & mask) - off for c in range(self.d)))

    def operand(self, g):
        self._check_core()
        if self.d == 1:
            return [int(g.form[0])]
        return [sum(x << (self.bits * c) for c, x in enumerate(g.form))]


class FreeGroup(GroupDescriptor):
    """Free group on ``k`` letters; elements are reduced words.

    A word is a tuple of nonzero integers, ``+i`` for the ``i``-th
    generator and ``-i`` for its inverse.
    """

    kind = "FreeGroup"
    kind_id = KIND_FREE

    def __init__(self, k: int):
        if not 1 <= k <= 4:
            raise GroupError("free groups are supported for 1 <= k <= 4")
        super().__init__(f"F{k}")
        self.k = k
        self.amenable_known = k == 1
        for i, letter in zip(range(1, k + 1), "abcd"):
            self._letters[letter] = (i,)
        self.base = 2 * k + 1
        # largest L with base**L < 2**63 (leave one digit of headroom)
        L = 0
        while self.base ** (L + 1) < 2**63:
            L += 1
        self.max_length = L - 1
        self.operand_width = 1 + 8

    def _identity_form(self):
        return ()

    @staticmethod
    def _reduce(word):
        out = []
        for x in word:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(x)
        return tuple(out)

    def _canonical(self, form):
        form = tuple(int(x) for x in form)
        if any(x == 0 or abs(x) > self.k for x in form):
            raise GroupError(f"letters of {self.name} must be in ±1..±{self.k}")
        return self._reduce(form)

    def _compose(self, a, b):
        i = 0
        n = min(len(a), len(b))
        while i < n and a[len(a) - 1 - i] == -b[i]:
            i += 1
        return a[: len(a) - i] + b[i:]

    def _invert(self, a):
        return tuple(-x for x in reversed(a))

    def _norm(self, a):
        return len(a)

    def _generator_forms(self):
        gens = []
        for i in range(1, self.k + 1):
            gens.append((i,))
            gens.append((-i,))
        return gens

    def _format(self, a):
        if not a:
            return "e"
        return "".join("abcd"[abs(x) - 1] if x > 0 else "ABCD"[abs(x) - 1] for x in a)

    def sort_key(self, g):
        return (len(g.form), g.form)

    # letter x in 1..k, sign -> core letter index 0..2k-1 (inverse = index ^ 1)
    @staticmethod
    def _core_letter(x: int) -> int:
        return 2 * (abs(x) - 1) + (0 if x > 0 else 1)

    @staticmethod
    def _from_core_letter(l: int) -> int:
        return (l // 2 + 1) * (1 if l % 2 == 0 else -1)

    def core_params(self):
        return np.array([self.k, self.base, self.max_length], dtype=np.int64)

    def encode(self, g):
        if len(g.form) > self.max_length:
            raise GroupError(f"word longer than {self.max_length} cannot be encoded")
        code = 0
        for x in g.form:
            code = code * self.base + self._core_letter(x) + 1
        return code

    def decode(self, code):
        code = int(code)
        letters = []
        while code > 0:
            letters.append(self._from_core_letter(code % self.base - 1))
            code //= self.base
        return GroupElement(self, tuple(reversed(letters)))

    def operand(self, g):
        return [len(g.form)] + [self._core_letter(x) for x in g.form]


class Cyclic(GroupDescriptor):
    kind = "Cyclic"
    kind_id = KIND_CYCLIC
    amenable_known = True

    def __init__(self, n: int):
        if n < 1:
            raise GroupError("cyclic group order must be positive")
        super().__init__(f"C{n}")
        self.n = n
        self.finite_order = n
        if n > 1:
            self._letters["a"] = 1 % n
        if n == 1:
            self.kind = "Trivial"

    def _identity_form(self):
        return 0

    def _canonical(self, form):
        if isinstance(form, tuple):
            (form,) = form
        return int(form) % self.n

    def _compose(self, a, b):
        return (a + b) % self.n

    def _invert(self, a):
        return (-a) % self.n

    def _norm(self, a):
        return min(a, self.n - a)

    def _generator_forms(self):
        if self.n == 1:
            return []
        if self.n == 2:
            return [1]
        return [1, self.n - 1]

    def sort_key(self, g):
        return g.form

    def _parse_literal(self, s):
        try:
            return self.element(int(s))
        except ValueError:
            return None

    def core_params(self):
        return np.array([self.n], dtype=np.int64)

    def encode(self, g):
        return int(g.form)

    def decode(self, code):
        return GroupElement(self, int(code) % self.n)

    def operand(self, g):
        return [int(g.form)]


def Trivial() -> Cyclic:
    return Cyclic(1)


class Lamplighter(GroupDescriptor):
    """The lamplighter group ``Z_2 wr Z``.

    Elements are ``(lamps, position)`` with ``lamps`` a sorted tuple of lit
    positions.  Multiplication: ``(S, x)(T, y) = (S xor (T + x), x + y)``.
    Generators: toggle the lamp under the walker, move the walker by ±1.
    """

    kind = "Lamplighter"
    kind_id = KIND_LAMPLIGHTER
    amenable_known = True
    # lamps are packed for absolute positions in [-LAMP_HALF, LAMP_HALF)
    LAMP_HALF = 23
    POS_BITS = 16
    operand_width = 4

    def __init__(self):
        super().__init__("lamplighter")
        self._letters["t"] = ((0,), 0)
        self._letters["T"] = ((0,), 0)
        self._letters["a"] = ((), 1)

    def _identity_form(self):
        return ((), 0)

    def _canonical(self, form):
        lamps, pos = form
        return (tuple(sorted(set(int(x) for x in lamps))), int(pos))

    def _compose(self, a, b):
        s, x = a
        t, y = b
        lit = set(s)
        lit.symmetric_difference_update(p + x for p in t)
        return (tuple(sorted(lit)), x + y)

    def _invert(self, a):
        s, x = a
        return (tuple(p - x for p in s), -x)

    def _generator_forms(self):
        return [((0,), 0), ((), 1), ((), -1)]

    def _norm(self, a):
        # visit every lit lamp starting at 0 and ending at x, plus one toggle per lamp
        s, x = a
        pts = list(s) + [0, x]
        lo, hi = min(pts), max(pts)
        walk = min((0 - lo) + (hi - lo) + (hi - x), (hi - 0) + (hi - lo) + (x - lo))
        return len(s) + walk

    def _format(self, a):
        s, x = a
        return "[" + ",".join(map(str, s)) + "]@" + str(x)

    def sort_key(self, g):
        return (self._norm(g.form), g.form)

    def core_params(self):
        return np.array([self.LAMP_HALF, self.POS_BITS], dtype=np.int64)

    def _lamp_bits(self, lamps) -> int:
        bits = 0
        for p in lamps:
            if not -self.LAMP_HALF <= p < self.LAMP_HALF:
                raise GroupError(f"lamp position {p} out of encodable range")
            bits |= 1 << (p + self.LAMP_HALF)
        return bits

    def encode(self, g):
        s, x = g.form
        half = 1 << (self.POS_BITS - 1)
        if not -half <= x < half:
            raise GroupError("walker position out of encodable range")
        return (self._lamp_bits(s) << self.POS_BITS) | (x + half)

    def decode(self, code):
        code = int(code)
        half = 1 << (self.POS_BITS - 1)
        x = (code & ((1 << self.POS_BITS) - 1)) - half
        bits = code >> self.POS_BITS
        lamps = tuple(p - self.LAMP_HALF for p in range(2 * self.LAMP_HALF) if bits >> p & 1)
        return GroupElement(self, (lamps, x))

    def operand(self, g):
        s, y = g.form
        lo = min(s) if s else 0
        hi = max(s) if s else 0
        return [self._lamp_bits(s), y, lo, hi]


_GROUP_RE = re.compile(r"^(?:Z\^?(\d+)|Z|F(\d+)|C(\d+)|lamplighter|trivial)$", re.IGNORECASE)


def parse_group(spec: str) -> GroupDescriptor:
    """Build a group from a config string: ``Z^1``, ``Z^2``, ``F2``, ``lamplighter``, ``C3``, ``C1``."""
    s = spec.strip()
    m = _GROUP_RE.match(s)
    if not m:
        raise GroupError(f"unknown group {spec!r}")
    low = s.lower()
    if low == "lamplighter":
        return Lamplighter()
    if low == "trivial":
        return Trivial()
    if m.group(1) is not None:
        return IntegerLattice(int(m.group(1)))
    if low == "z":
        return IntegerLattice(1)
    if m.group(2) is not None:
        return FreeGroup(int(m.group(2)))
    return Cyclic(int(m.group(3)))


def iter_words(group: GroupDescriptor, texts: Iterable[str]) -> Iterator[GroupElement]:
    for t in texts:
        yield group.parse_element(t)
