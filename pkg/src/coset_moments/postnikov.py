"""Truncated d-adic logarithm, the invariants a_psi / b_psi, and the complete sums.

For odd d | q with the same prime support, the power series
``sum_k (-1)^(k+1) d^k x^k / k`` reduces modulo q to a polynomial L(x), and
every character psi mod q satisfies ``psi(1 + d x) = e_q(a_psi * L(x))`` for
a unique ``a_psi mod q/d``.  This module builds L, solves for a_psi from the
single point x = 1, and certifies the identity for every x mod q/d.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .characters import DirichletCharacter
from .errors import (NotPrimitive, PreconditionViolated, RegimeUnsupported,
                     VerificationFailed)
from .modarith import (TWO_PI, FactoredModulus, as_factored, e_frac, epsilon_r,
                       jacobi, mod_inv, signed_residue)


def constructive_threshold(A: int) -> int:
    """Smallest M with k - A >= log(k) for every k >= M."""
    # k - A - log k is increasing for k >= 1, so the first hit is final
    k = 1
    while k - A < math.log(k):
        k += 1
    return k


def _shared_support_or_raise(d: FactoredModulus, q: FactoredModulus) -> None:
    if q.value % d.value:
        raise PreconditionViolated(f"d = {d} does not divide q = {q}")
    if set(d.primes) != set(q.primes):
        raise PreconditionViolated(f"d = {d} and q = {q} have different prime support")


def truncation_length(d: FactoredModulus, q: FactoredModulus) -> int:
    """Smallest N with nu_p(d^k / k) >= nu_p(q) for all k >= N and all p | q."""
    last_fail = 0
    for p in q.primes:
        v, e = d.valuation(p), q.valuation(p)
        # k*v - log_p(k) is increasing in k; once it clears e, the exact
        # condition k*v - nu_p(k) >= e holds from there on.
        k = 1
        while not (k * v >= e and p ** (k * v - e) >= k):
            k += 1
        for j in range(1, k):
            vj, jj = 0, j
            while jj % p == 0:
                jj //= p
                vj += 1
            if j * v - vj < e:
                last_fail = max(last_fail, j)
    return last_fail + 1


def _split_k(k: int, primes) -> tuple[int, int]:
    kq = 1
    rest = k
    for p in primes:
        while rest % p == 0:
            rest //= p
            kq *= p
    return kq, rest


@dataclass(frozen=True)
class TruncatedLog:
    """L_q(1 + d x) reduced mod q: ``coeffs[k-1]`` multiplies x^k."""

    d: int
    q: int
    coeffs: tuple[int, ...]
    truncation_N: int

    def __call__(self, x: int) -> int:
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc + c) * x % self.q
        return acc

    def eval_many(self, x) -> np.ndarray:
        """Vectorised Horner evaluation; requires q^2 < 2^63."""
        if self.q > 3_000_000_000:
            raise OverflowError("use the scalar evaluator for huge moduli")
        x = np.asarray(x, dtype=np.int64) % self.q
        acc = np.zeros_like(x)
        for c in reversed(self.coeffs):
            acc = (acc + c) % self.q * x % self.q
        return acc


def lq_build(d, q) -> TruncatedLog:
    d, q = as_factored(d), as_factored(q)
    return _lq_build(d, q)


@lru_cache(maxsize=256)
def _lq_build(d: FactoredModulus, q: FactoredModulus) -> TruncatedLog:
    _shared_support_or_raise(d, q)
    N = truncation_length(d, q)
    coeffs = []
    for k in range(1, N + 1):
        kq, kp = _split_k(k, q.primes)
        c = (d.value**k // kq) % q.value * mod_inv(kp, q.value) % q.value
        coeffs.append(c if k % 2 else (-c) % q.value)
    return TruncatedLog(d.value, q.value, tuple(coeffs), N)


lq_eval = TruncatedLog.__call__


@dataclass(frozen=True)
class PostnikovData:
    q: int
    d: int
    a_psi: int
    b_psi: int | None
    verified: bool
    psi: DirichletCharacter | None = field(default=None, compare=False)

    def to_json(self) -> str:
        return json.dumps({
            "q": self.q, "d": self.d,
            "psi_exponents": list(self.psi.exponents) if self.psi is not None else None,
            "a_psi": self.a_psi, "b_psi": self.b_psi, "verified": self.verified,
        })

    @classmethod
    def from_json(cls, text: str) -> "PostnikovData":
        obj = json.loads(text)
        return cls(int(obj["q"]), int(obj["d"]), int(obj["a_psi"]),
                   None if obj["b_psi"] is None else int(obj["b_psi"]), bool(obj["verified"]))


def b_from_a(a_psi: int, q: int, d: int) -> int | None:
    """Signed reduction of a_psi mod d, defined when d | q/d."""
    if (q // d) % d:
        return None
    return signed_residue(a_psi, d)


def postnikov_residue(psi: DirichletCharacter, d: int, L: TruncatedLog | None = None) -> int:
    """a_psi mod q/d from the point x = 1 (any psi, primitive or not)."""
    q = psi.modulus
    L = L or lq_build(d, psi.group.modulus)
    m = q // d
    r = psi.phase(1 + d).fraction
    t = r * q
    if t.denominator != 1 or t.numerator % d:
        raise VerificationFailed(f"psi(1+d) = e({r}) is not a q-th root of unity of the expected form")
    L1 = L(1)
    u = (L1 // d) % m
    return (t.numerator // d) * mod_inv(u, m) % m


def verify_postnikov(psi: DirichletCharacter, d: int, a_psi: int, L: TruncatedLog) -> bool:
    """Exact check of psi(1+dx) = e_q(a L(x)) for every x mod q/d."""
    q = psi.modulus
    lam = psi.group.exponent
    xs = np.arange(q // d, dtype=np.int64)
    k = psi.phase_ints(1 + d * xs)
    if (k < 0).any():
        return False
    aL = (a_psi % q) * L.eval_many(xs) % q
    return bool(np.array_equal(k * q % (lam * q), aL * lam % (lam * q)))


def compute_postnikov(psi: DirichletCharacter, d: int, verify: bool = True,
                      require_primitive: bool = True) -> PostnikovData:
    if require_primitive and not psi.is_primitive():
        raise NotPrimitive(f"{psi} has conductor {psi.conductor}")
    q = psi.modulus
    L = lq_build(d, psi.group.modulus)
    a = signed_residue(postnikov_residue(psi, d, L), q // d)
    if verify and not verify_postnikov(psi, d, a, L):
        raise VerificationFailed(f"Postnikov identity fails for {psi}, d = {d}")
    return PostnikovData(q, d, a, b_from_a(a, q, d), verify, psi)


def s_qd_brute(psi: DirichletCharacter, d: int, k: int) -> complex:
    """Literal sum_{u mod q/d} psi(1 + d u) e_q(d k u)."""
    q = psi.modulus
    lam = psi.group.exponent
    u = np.arange(q // d, dtype=np.int64)
    kp = psi.phase_ints(1 + d * u)
    num = kp * q + (d * (k % (q // d)) * u % q) * lam
    ang = TWO_PI * (num % (lam * q)) / (lam * q)
    return complex(math.fsum(np.cos(ang)), math.fsum(np.sin(ang)))


def s_qd_brute_all(psi: DirichletCharacter, d: int) -> np.ndarray:
    """The same literal sum for every k in one period 0..q/d-1, as a matrix product."""
    m = psi.modulus // d
    u = np.arange(m, dtype=np.int64)
    vals = psi.values(1 + d * u)
    kernel = np.exp(2j * np.pi * (np.outer(u, u) % m) / m)
    return vals @ kernel


def sqd_regime(q: int, d: int) -> str | None:
    if q % d == 0 and (d * d) % q == 0:
        return "A"
    if q % (d * d) == 0 and (d**3) % q == 0 and q % 3:
        return "B"
    return None


def s_qd_closed(data: PostnikovData, k: int) -> complex:
    """Closed form for the complete sum in the q | d^2 or d^2 | q | d^3 regimes."""
    q, d, a = data.q, data.d, data.a_psi
    regime = sqd_regime(q, d)
    if regime == "A":
        return complex(q // d) if (k + a) % (q // d) == 0 else 0j
    if regime == "B":
        if (k + a) % d:
            return 0j
        phase = e_frac(mod_inv(2 * a, q) * (k + a) ** 2, q)
        return epsilon_r(q) * math.sqrt(q) * phase * jacobi(-2 * a, q // (d * d))
    raise RegimeUnsupported(f"no closed form for q = {q}, d = {d}")


def hb_sum_brute(chi: DirichletCharacter, h: int, n: int) -> complex:
    """sum_{m mod q} chi(m + h) conj(chi(m)) e(m n / q), zero terms off the units."""
    q = chi.modulus
    lam = chi.group.exponent
    m = np.arange(q, dtype=np.int64)
    k1 = chi.phase_ints(m + h)
    k2 = chi.phase_ints(m)
    ok = (k1 >= 0) & (k2 >= 0)
    num = ((k1 - k2) % lam) * q + (m * (n % q) % q) * lam
    ang = TWO_PI * (num[ok] % (lam * q)) / (lam * q)
    return complex(math.fsum(np.cos(ang)), math.fsum(np.sin(ang)))


def hb_shift_ratio(chi: DirichletCharacter, q0: int, A: int) -> float:
    """sum_{1<=|h|<=A} |S(q; chi, h q0, 0)| / (q0 A); a bounded-ness diagnostic only."""
    total = math.fsum(abs(hb_sum_brute(chi, s * h * q0, 0)) for h in range(1, A + 1) for s in (1, -1))
    return total / (q0 * A)


def check_periodicity(L: TruncatedLog, ys=(1, 2, 3)) -> bool:
    m = L.q // L.d
    xs = np.arange(m, dtype=np.int64)
    base = L.eval_many(xs)
    return all(np.array_equal(base, L.eval_many(xs + m * y)) for y in ys)


def check_additivity(L: TruncatedLog, chunk: int = 1 << 22) -> bool:
    """Exhaustive over x, y mod q/d: (1+dx)(1+dy) = 1+dz implies L(z) = L(x) + L(y)."""
    q, d = L.q, L.d
    m = q // d
    xs = np.arange(m, dtype=np.int64)
    Lx = L.eval_many(xs)
    rows = max(1, chunk // m)
    for start in range(0, m, rows):
        x = xs[start:start + rows, None]
        z = (x + xs[None, :] + d * (x * xs[None, :] % m)) % m  # z = x + y + d x y mod q/d
        lhs = L.eval_many(z.ravel()).reshape(z.shape)
        if not np.array_equal(lhs, (Lx[start:start + rows, None] + Lx[None, :]) % q):
            return False
    return True


def check_modularity(L: TruncatedLog) -> dict[str, bool | None]:
    """L(x) = dx mod gcd(q, d^2), and L(x) = dx - (dx)^2/2 mod q when q | d^3 and 3 does not divide q."""
    q, d = L.q, L.d
    xs = np.arange(q, dtype=np.int64)
    vals = L.eval_many(xs)
    g = math.gcd(q, d * d)
    out: dict[str, bool | None] = {"first": bool(np.array_equal(vals % g, d * xs % g))}
    if q % 3 and (d**3) % q == 0:
        dx = d * xs % q
        expect = (dx - mod_inv(2, q) * (dx * dx % q)) % q
        out["second"] = bool(np.array_equal(vals, expect))
    else:
        out["second"] = None
    return out
