"""Dirichlet characters modulo odd q with exact rational phases.

A character is stored as an exponent vector against fixed generators of the
cyclic factors ``(Z/p^e Z)*``.  Its value at a unit ``m`` is
``e(sum_j x_j * log_j(m) / ord_j)``, which is kept as an exact fraction
(:class:`ExactPhase`) until a complex number is really needed.

The generator of each factor is the smallest positive integer generating
``(Z/p^e Z)*``, so the exponent-vector labelling is reproducible.  This
labelling is a convention of this package; nothing canonical is implied.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .errors import EvenModulus, LiftMismatch, ModulusTooLarge
from .modarith import FactoredModulus, as_factored, factorize, nu_p

MAX_TABLE_MODULUS = 10**7


@dataclass(frozen=True, order=True)
class ExactPhase:
    """The root of unity e(numerator/denominator), reduced into [0, 1)."""

    numerator: int
    denominator: int = 1

    def __post_init__(self):
        f = Fraction(self.numerator, self.denominator) % 1
        object.__setattr__(self, "numerator", f.numerator)
        object.__setattr__(self, "denominator", f.denominator)

    @classmethod
    def from_fraction(cls, f: Fraction) -> "ExactPhase":
        return cls(f.numerator, f.denominator)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __add__(self, other: "ExactPhase") -> "ExactPhase":
        return ExactPhase.from_fraction(self.fraction + other.fraction)

    def __sub__(self, other: "ExactPhase") -> "ExactPhase":
        return ExactPhase.from_fraction(self.fraction - other.fraction)

    def __neg__(self) -> "ExactPhase":
        return ExactPhase(-self.numerator, self.denominator)

    def __mul__(self, k: int) -> "ExactPhase":
        return ExactPhase(self.numerator * k, self.denominator)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.numerator == 0

    def to_complex(self) -> complex:
        ang = 2.0 * math.pi * self.numerator / self.denominator
        return complex(math.cos(ang), math.sin(ang))


ZERO_PHASE = ExactPhase(0, 1)


@dataclass(frozen=True)
class Component:
    """One cyclic factor (Z/p^e Z)* with its generator and discrete-log table."""

    prime: int
    exponent: int
    modulus: int
    generator: int
    order: int
    dlog: np.ndarray  # dlog[m] for m mod p^e, -1 off the units

    def __eq__(self, other):
        return isinstance(other, Component) and self.modulus == other.modulus

    def __hash__(self):
        return hash(self.modulus)


def smallest_generator(p: int, e: int) -> int:
    pe = p**e
    order = pe // p * (p - 1)
    ells = [ell for ell, _ in factorize(order)]
    g = 2
    while True:
        if g % p and all(pow(g, order // ell, pe) != 1 for ell in ells):
            return g
        g += 1


def _component(p: int, e: int) -> Component:
    pe = p**e
    g = smallest_generator(p, e)
    order = pe // p * (p - 1)
    table = np.full(pe, -1, dtype=np.int64)
    x = 1
    for i in range(order):
        table[x] = i
        x = x * g % pe
    if x != 1 or (table >= 0).sum() != order:
        raise AssertionError(f"generator {g} failed for {p}^{e}")
    table.flags.writeable = False
    return Component(p, e, pe, g, order, table)


class UnitGroup:
    """(Z/qZ)* as a product of cyclic prime-power factors."""

    def __init__(self, modulus: FactoredModulus):
        self.modulus = modulus
        self.components = tuple(_component(p, e) for p, e in modulus.factors)

    def __repr__(self):
        return f"UnitGroup({self.modulus.value})"

    def __eq__(self, other):
        return isinstance(other, UnitGroup) and self.modulus.value == other.modulus.value

    def __hash__(self):
        return hash(self.modulus.value)

    @property
    def q(self) -> int:
        return self.modulus.value

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(c.order for c in self.components)

    @cached_property
    def exponent(self) -> int:
        """Group exponent: lcm of the component orders."""
        return math.lcm(*self.orders) if self.components else 1

    def dlog_vector(self, m: int) -> tuple[int, ...] | None:
        logs = []
        for c in self.components:
            v = int(c.dlog[m % c.modulus])
            if v < 0:
                return None
            logs.append(v)
        return tuple(logs)

    def dlogs(self, m: np.ndarray) -> np.ndarray:
        """Discrete logs of an integer array, shape (k, len(m)); -1 marks non-units."""
        m = np.asarray(m, dtype=np.int64)
        if not self.components:
            return np.zeros((0, m.size), dtype=np.int64)
        return np.stack([c.dlog[m % c.modulus] for c in self.components])

    @cached_property
    def all_dlogs(self) -> np.ndarray:
        out = self.dlogs(np.arange(self.q))
        out.flags.writeable = False
        return out

    @cached_property
    def unit_mask(self) -> np.ndarray:
        if not self.components:
            return np.ones(self.q, dtype=bool)
        return (self.all_dlogs >= 0).all(axis=0)

    def character(self, exponents) -> "DirichletCharacter":
        return DirichletCharacter(self, tuple(int(x) % o for x, o in zip(exponents, self.orders)))

    def principal(self) -> "DirichletCharacter":
        return DirichletCharacter(self, (0,) * len(self.components))


@lru_cache(maxsize=64)
def _unit_group_cached(value: int, factors: tuple) -> UnitGroup:
    return UnitGroup(FactoredModulus(value, factors))


def unit_group(q) -> UnitGroup:
    q = as_factored(q)
    if q.value % 2 == 0:
        raise EvenModulus(f"even modulus {q.value}")
    if q.value > MAX_TABLE_MODULUS:
        raise ModulusTooLarge(f"q = {q} exceeds the table-size guard {MAX_TABLE_MODULUS}")
    return _unit_group_cached(q.value, q.factors)


@dataclass(frozen=True)
class DirichletCharacter:
    group: UnitGroup
    exponents: tuple[int, ...]

    def __post_init__(self):
        if len(self.exponents) != len(self.group.components):
            raise ValueError("exponent vector length does not match the group")

    def __repr__(self):
        return f"DirichletCharacter(q={self.modulus}, exponents={list(self.exponents)})"

    @property
    def modulus(self) -> int:
        return self.group.q

    @property
    def index(self) -> tuple[int, ...]:
        return self.exponents

    @cached_property
    def _weights(self) -> np.ndarray:
        lam = self.group.exponent
        return np.array([x * (lam // o) for x, o in zip(self.exponents, self.group.orders)],
                        dtype=np.int64)

    def phase(self, m: int) -> ExactPhase | None:
        """Exact phase of chi(m); ``None`` when m is not a unit (the value is 0)."""
        logs = self.group.dlog_vector(m)
        if logs is None:
            return None
        f = sum((Fraction(x * l, o) for x, l, o in zip(self.exponents, logs, self.group.orders)),
                Fraction(0))
        return ExactPhase.from_fraction(f)

    def phase_ints(self, m: np.ndarray | None = None) -> np.ndarray:
        """Phase numerators over the group exponent lambda; -1 for non-units.

        chi(m) = e(phase_ints[m] / lambda).  With ``m=None`` all residues
        0..q-1 are returned.
        """
        lam = self.group.exponent
        logs = self.group.all_dlogs if m is None else self.group.dlogs(m)
        if logs.shape[0] == 0:
            return np.zeros(logs.shape[1], dtype=np.int64)
        out = (self._weights[:, None] * logs).sum(axis=0) % lam
        out[(logs < 0).any(axis=0)] = -1
        return out

    def values(self, m: np.ndarray | None = None) -> np.ndarray:
        """Complex values chi(m), zero off the units."""
        k = self.phase_ints(m)
        lam = self.group.exponent
        out = np.exp(2j * np.pi * (k % lam) / lam)
        out[k < 0] = 0.0
        return out

    def __call__(self, m: int) -> complex:
        ph = self.phase(m)
        return 0j if ph is None else ph.to_complex()

    def __mul__(self, other: "DirichletCharacter") -> "DirichletCharacter":
        if other.group != self.group:
            other = lift(other, self.group)
        return self.group.character(a + b for a, b in zip(self.exponents, other.exponents))

    def conjugate(self) -> "DirichletCharacter":
        return self.group.character(-x for x in self.exponents)

    def is_principal(self) -> bool:
        return not any(self.exponents)

    @property
    def order(self) -> int:
        return math.lcm(*(o // math.gcd(x, o) for x, o in zip(self.exponents, self.group.orders))) \
            if self.exponents else 1

    def is_even(self) -> bool:
        ph = self.phase(-1)
        return ph is not None and ph.is_zero()

    @cached_property
    def conductor(self) -> int:
        out = 1
        for x, c in zip(self.exponents, self.group.components):
            o = c.order // math.gcd(x, c.order)
            if o > 1:
                out *= c.prime ** (1 + nu_p(o, c.prime))
        return out

    def is_primitive(self) -> bool:
        return self.conductor == self.modulus

    def primitive(self) -> "DirichletCharacter":
        """The primitive character (mod the conductor) inducing this one."""
        f = self.conductor
        if f == self.modulus:
            return self
        target = unit_group(f)
        exps = []
        for tc in target.components:
            c, x = next((c, x) for c, x in zip(self.group.components, self.exponents)
                        if c.prime == tc.prime)
            num = x * int(c.dlog[tc.generator % c.modulus]) * tc.order
            if num % c.order:
                raise AssertionError("restriction to the conductor is not integral")
            exps.append(num // c.order)
        return target.character(exps)

    def to_json(self) -> str:
        return json.dumps({"modulus": self.modulus, "exponents": list(self.exponents)})

    @classmethod
    def from_json(cls, text: str) -> "DirichletCharacter":
        obj = json.loads(text)
        grp = unit_group(int(obj["modulus"]))
        exps = tuple(int(x) for x in obj["exponents"])
        if any(not 0 <= x < o for x, o in zip(exps, grp.orders)):
            raise ValueError("exponent out of range")
        return cls(grp, exps)


def lift(chi: DirichletCharacter, group: UnitGroup) -> DirichletCharacter:
    """The character mod ``group.q`` induced by chi (mod d, d | q)."""
    d, q = chi.modulus, group.q
    if q % d:
        raise LiftMismatch(f"{d} does not divide {q}")
    by_prime = {c.prime: (c, x) for c, x in zip(chi.group.components, chi.exponents)}
    exps = []
    for cq in group.components:
        if cq.prime not in by_prime:
            exps.append(0)
            continue
        cd, x = by_prime[cq.prime]
        log_g = int(cd.dlog[cq.generator % cd.modulus])
        exps.append(x * log_g * (cq.order // cd.order))
    return group.character(exps)


def enumerate_characters(d, parity: str = "all") -> list[DirichletCharacter]:
    """All characters mod d (or only the even ones), ordered by exponent vector."""
    if parity not in ("all", "even"):
        raise ValueError(f"unknown parity filter {parity!r}")
    grp = unit_group(d)
    out = []
    for exps in itertools.product(*(range(o) for o in grp.orders)):
        # -1 has log ord_j/2 in every odd-prime component
        if parity == "even" and sum(exps) % 2:
            continue
        out.append(DirichletCharacter(grp, exps))
    return out


def primitive_characters(q, parity: str = "all") -> list[DirichletCharacter]:
    return [c for c in enumerate_characters(q, parity) if c.is_primitive()]


def coset_character(chi: DirichletCharacter, psi: DirichletCharacter) -> DirichletCharacter:
    """chi * psi as a character modulo psi's modulus."""
    if psi.modulus % chi.modulus:
        raise LiftMismatch(f"{chi.modulus} does not divide {psi.modulus}")
    return psi * lift(chi, psi.group)
