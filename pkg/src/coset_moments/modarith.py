"""Exact integer and modular arithmetic, plus the quadratic Gauss sum.

Everything here works on Python integers so that moduli such as ``7**239``
are handled exactly.  Floating point appears only when a root of unity has
to be turned into a complex number.
"""
from __future__ import annotations

import cmath
import enum
import math
import re
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .errors import BNotCoprime, EvenModulus, NotInvertible, PreconditionViolated

TWO_PI = 2.0 * math.pi


def nu_p(n: int, p: int) -> int:
    """p-adic valuation of a positive integer."""
    if n <= 0:
        raise ValueError("nu_p needs n >= 1")
    e = 0
    while n % p == 0:
        n //= p
        e += 1
    return e


def factorize(n: int) -> list[tuple[int, int]]:
    """Trial-division factorization; fine for the desk-scale moduli used here."""
    if n < 1:
        raise ValueError(f"cannot factor {n}")
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if n > 1:
        out.append((n, 1))
    return out


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


_POWER_TERM = re.compile(r"^\s*(\d+)\s*(?:(?:\^|\*\*)\s*(\d+))?\s*$")


@dataclass(frozen=True)
class FactoredModulus:
    """An odd positive integer together with its prime factorization."""

    value: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.value < 1:
            raise ValueError("modulus must be positive")
        if self.value % 2 == 0:
            raise EvenModulus(f"even modulus {self.value} is not supported")
        prod = 1
        primes = set()
        for p, e in self.factors:
            if e < 1 or p % 2 == 0 or p in primes:
                raise ValueError(f"bad factorization entry {(p, e)}")
            primes.add(p)
            prod *= p**e
        if prod != self.value:
            raise ValueError("factorization does not multiply out to the value")

    @classmethod
    def from_int(cls, n: int) -> "FactoredModulus":
        if n % 2 == 0:
            raise EvenModulus(f"even modulus {n} is not supported")
        return cls(n, tuple(factorize(n)))

    @classmethod
    def from_factors(cls, factors) -> "FactoredModulus":
        merged: dict[int, int] = {}
        for p, e in factors:
            if not is_prime(p):
                raise ValueError(f"{p} is not prime")
            merged[p] = merged.get(p, 0) + e
        fac = tuple(sorted((p, e) for p, e in merged.items() if e > 0))
        value = 1
        for p, e in fac:
            value *= p**e
        return cls(value, fac)

    @classmethod
    def parse(cls, text: str) -> "FactoredModulus":
        """Parse ``"625"``, ``"5^4"``, ``"3^2*5"`` or ``"7**239"``.

        Prime powers given explicitly are never re-factored, so huge moduli
        can be passed in pre-factored form.
        """
        text = text.strip()
        parts = re.split(r"\*(?!\*)", text.replace("**", "^"))
        factors = []
        for part in parts:
            m = _POWER_TERM.match(part)
            if not m:
                raise ValueError(f"cannot parse modulus {text!r}")
            base, exp = int(m.group(1)), int(m.group(2) or 1)
            if exp == 1 and not is_prime(base) and base > 1:
                factors.extend(factorize(base))
            elif base > 1:
                factors.append((base, exp))
        return cls.from_factors(factors)

    def __int__(self) -> int:
        return self.value

    def __str__(self) -> str:
        if self.value < 10**12:
            return str(self.value)
        return "*".join(f"{p}^{e}" if e > 1 else str(p) for p, e in self.factors)

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.factors)

    def valuation(self, p: int) -> int:
        for pp, e in self.factors:
            if pp == p:
                return e
        return 0

    @cached_property
    def phi(self) -> int:
        out = 1
        for p, e in self.factors:
            out *= p ** (e - 1) * (p - 1)
        return out

    @cached_property
    def divisor_count(self) -> int:
        return math.prod(e + 1 for _, e in self.factors)

    def divisors(self) -> list[int]:
        divs = [1]
        for p, e in self.factors:
            divs = [x * p**k for x in divs for k in range(e + 1)]
        return sorted(divs)

    def divide(self, other: "FactoredModulus | int") -> "FactoredModulus":
        """Return self / other as a factored modulus (other must divide self)."""
        other = as_factored(other)
        fac = []
        for p, e in self.factors:
            k = e - other.valuation(p)
            if k < 0:
                raise PreconditionViolated(f"{other} does not divide {self}")
            if k:
                fac.append((p, k))
        if any(self.valuation(p) == 0 for p in other.primes):
            raise PreconditionViolated(f"{other} does not divide {self}")
        return FactoredModulus.from_factors(fac)

    def power(self, k: int) -> "FactoredModulus":
        return FactoredModulus.from_factors([(p, e * k) for p, e in self.factors])


def as_factored(n: "FactoredModulus | int | str") -> FactoredModulus:
    if isinstance(n, FactoredModulus):
        return n
    if isinstance(n, str):
        return FactoredModulus.parse(n)
    return FactoredModulus.from_int(int(n))


class Relation(enum.Enum):
    PREC = "Prec"
    PRECEQ_ONLY = "PreceqOnly"
    NEITHER = "Neither"


def prec_relation(a, b) -> Relation:
    """Classify a against b under the same-support valuation orders."""
    fa, fb = as_factored(a), as_factored(b)
    if set(fa.primes) != set(fb.primes) or not fb.primes:
        return Relation.NEITHER
    va = [fa.valuation(p) for p in fb.primes]
    vb = [fb.valuation(p) for p in fb.primes]
    if all(x < y for x, y in zip(va, vb)):
        return Relation.PREC
    if all(x <= y for x, y in zip(va, vb)):
        return Relation.PRECEQ_ONLY
    return Relation.NEITHER


def precedes(a, b) -> bool:
    """a strictly precedes b."""
    return prec_relation(a, b) is Relation.PREC


def precedes_eq(a, b) -> bool:
    return prec_relation(a, b) is not Relation.NEITHER


def mod_inv(a: int, m: int) -> int:
    if m == 1:
        return 0
    try:
        return pow(a, -1, m)
    except ValueError:
        raise NotInvertible(f"{a} is not invertible modulo {m}") from None


def crt(residues, moduli) -> int:
    """Combine pairwise-coprime congruences."""
    x, m = 0, 1
    for r, n in zip(residues, moduli):
        t = ((r - x) * mod_inv(m, n)) % n
        x += m * t
        m *= n
    return x % m


def jacobi(B: int, r: int) -> int:
    if r <= 0 or r % 2 == 0:
        raise ValueError("Jacobi symbol needs a positive odd modulus")
    B %= r
    result = 1
    while B:
        while B % 2 == 0:
            B //= 2
            if r % 8 in (3, 5):
                result = -result
        B, r = r, B
        if B % 4 == 3 and r % 4 == 3:
            result = -result
        B %= r
    return result if r == 1 else 0


def epsilon_r(r: int) -> complex:
    if r % 2 == 0:
        raise ValueError("epsilon_r needs odd r")
    return 1 + 0j if r % 4 == 1 else 1j


def e_frac(num: int, den: int) -> complex:
    """e(num/den) with the numerator reduced exactly before conversion."""
    return cmath.exp(1j * TWO_PI * ((num % den) / den))


def quad_gauss_closed(A: int, B: int, r: int) -> complex:
    """Completed-square evaluation of sum_{u mod r} e_r(A u + B u^2)."""
    if r < 1 or r % 2 == 0:
        raise ValueError("r must be a positive odd integer")
    if math.gcd(B, r) != 1:
        raise BNotCoprime(f"gcd({B}, {r}) > 1")
    phase = e_frac(-mod_inv(4 * B, r) * A * A, r)
    return phase * jacobi(B, r) * epsilon_r(r) * math.sqrt(r)


def quad_gauss_brute(A: int, B: int, r: int) -> complex:
    """Literal sum over u = 0..r-1, exact integer phases, fsum accumulation."""
    u = np.arange(r, dtype=np.int64)
    k = ((A % r) * u + (B % r) * (u * u % r)) % r
    ang = TWO_PI * k / r
    return complex(math.fsum(np.cos(ang)), math.fsum(np.sin(ang)))


def theta_q(q) -> float:
    q = as_factored(q)
    return math.fsum(math.log(p) / (p - 1) for p in q.primes)


def divisors(n: int) -> list[int]:
    if n < 1:
        raise ValueError("divisors needs n >= 1")
    divs = [1]
    for p, e in factorize(n):
        divs = [x * p**k for x in divs for k in range(e + 1)]
    return sorted(divs)


def sigma0(n: int) -> int:
    if n < 1:
        raise ValueError("sigma0 needs n >= 1")
    return math.prod(e + 1 for _, e in factorize(n))


def lcm(*xs: int) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), xs, 1)


def signed_residue(a: int, m: int) -> int:
    """Representative of a mod m in the open interval (-m/2, m/2); m odd."""
    r = a % m
    return r - m if 2 * r > m else r
