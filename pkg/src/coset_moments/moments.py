"""Second moments of L(1/2, chi psi) over a coset of characters, and their main terms.

M(psi, d) sums |L(1/2, chi psi)|^2 over the even characters chi mod d (or
over all of them).  The predicted main terms are

* D, the diagonal contribution, of size phi(d) log q;
* A, a secondary term governed by the invariant a_psi, when d < q <= d^2;
* A', its Gauss-sum counterpart when d^2 <= q <= d^3 and 3 does not divide q.

Reports carry the raw residual M - D - A (or A') next to the predicted size
of the error so that thresholds can be changed without recomputation.
"""
from __future__ import annotations

import enum
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import digamma

from .characters import (DirichletCharacter, coset_character, enumerate_characters,
                         primitive_characters)
from .errors import NotPrimitive, NotPrimitiveEven, RegimeViolation
from .lvalue import (G_CHOICE, VTable, _weights_upto, afe_weights, character_matrix_sums,
                     default_vtable, effective_cutoff, hurwitz_table, hurwitz_zeta_half,
                     l_central_hurwitz, pair_blocks)
from .modarith import (FactoredModulus, as_factored, jacobi, mod_inv, precedes,
                       precedes_eq, sigma0, theta_q)
from .postnikov import PostnikovData, b_from_a, compute_postnikov

EULER_GAMMA = float(np.euler_gamma)
DIGAMMA_QUARTER = float(digamma(0.25))
CONSTANT_SOURCES = {"euler_gamma": "numpy.euler_gamma",
                    "digamma(1/4)": "scipy.special.digamma"}
ZETA_HALF = hurwitz_zeta_half(1.0)

CSV_VERSION = 1
CSV_COLUMNS = ("q", "d", "psi_index", "a_psi", "b_psi", "regime", "M", "D", "A_or_Aprime",
               "residual", "predicted_scale", "ratio", "method", "seconds")


class Regime(str, enum.Enum):
    THM1 = "Thm1"
    THM2 = "Thm2"
    THM3 = "Thm3-only"


def regime_of(q, d) -> Regime:
    """Which asymptotic applies to the coset of characters mod d inside mod q."""
    q, d = as_factored(q), as_factored(d)
    if q.value % d.value:
        raise RegimeViolation(f"d = {d} does not divide q = {q}")
    if precedes(d, q) and precedes_eq(q, d.power(2)):
        return Regime.THM1
    if precedes_eq(d.power(2), q) and precedes_eq(q, d.power(3)) and q.value % 3:
        return Regime.THM2
    return Regime.THM3


def _is_thm1(q: FactoredModulus, d: FactoredModulus) -> bool:
    return precedes(d, q) and precedes_eq(q, d.power(2))


def _is_thm2(q: FactoredModulus, d: FactoredModulus) -> bool:
    return precedes_eq(d.power(2), q) and precedes_eq(q, d.power(3)) and q.value % 3 != 0


# --------------------------------------------------------------------------
# main terms
# --------------------------------------------------------------------------

def log_gamma_derivative_half() -> float:
    """gamma'/gamma at 1/2 for gamma(s) = pi^{-s/2} Gamma(s/2)."""
    return -0.5 * math.log(math.pi) + 0.5 * DIGAMMA_QUARTER


def main_D(q, d) -> float:
    q, d = as_factored(q), as_factored(d)
    bracket = (math.log(q.value) + 2 * EULER_GAMMA + DIGAMMA_QUARTER - math.log(math.pi)
               + 2 * theta_q(q))
    return d.phi / 2 * (q.phi / q.value) * bracket


def diag_closed_form(q) -> float:
    q = as_factored(q)
    return q.phi / q.value * (0.5 * math.log(q.value) + EULER_GAMMA
                              + log_gamma_derivative_half() + theta_q(q))


def diag_sum(q: int, V: VTable | None = None, n_max: int | None = None) -> float:
    """sum_{(n,q)=1, n <= n_max} V(n^2/q)/n, by default up to where V is negligible."""
    V = V or default_vtable()
    if n_max is None:
        n_max = math.isqrt(int(math.ceil(q * V.negligible_from()))) + 1
    n = np.arange(1, n_max + 1, dtype=np.int64)
    n = n[np.gcd(n, q) == 1]
    terms = V(n.astype(float) ** 2 / q) / n
    return math.fsum(terms)


def diag_vs_closed_form(q, V: VTable | None = None, n_max: int | None = None) -> tuple[float, float]:
    """(direct diagonal sum, closed-form asymptotic) for the m = n terms."""
    q = as_factored(q)
    return diag_sum(q.value, V, n_max), diag_closed_form(q)


def main_A(data: PostnikovData) -> float:
    q, d = as_factored(data.q), as_factored(data.d)
    if not _is_thm1(q, d):
        raise RegimeViolation(f"A needs d < q <= d^2, got q = {q}, d = {d}")
    a = abs(data.a_psi)
    return d.phi / d.value * math.sqrt(q.value) * sigma0(a) / math.sqrt(a)


@dataclass(frozen=True)
class AprimeTerms:
    """Exact ingredients of A' and its value."""

    q: int
    d: int
    a_psi: int
    b_psi: int
    residue: int                 # (2a)^{-1} (a - b)^2 mod q
    angle: Fraction              # residue / q reduced into (-1/2, 1/2]
    trig: str                    # "cos" (q = 1 mod 4) or "sin" (q = 3 mod 4)
    trig_value: float
    jacobi_statement: int        # (2a / q)
    jacobi_derivation: int       # (2a / (q / d^2))
    value: float


def aprime_terms(q, d, a_psi: int, b_psi: int | None = None) -> AprimeTerms:
    """A' from the invariants alone; all phase arithmetic is exact until the last step."""
    q, d = as_factored(q), as_factored(d)
    if not _is_thm2(q, d):
        raise RegimeViolation(f"A' needs d^2 <= q <= d^3 and 3 not dividing q, got q = {q}, d = {d}")
    Q, D_ = q.value, d.value
    if b_psi is None:
        b_psi = b_from_a(a_psi, Q, D_)
    residue = mod_inv(2 * a_psi, Q) * (a_psi - b_psi) ** 2 % Q
    frac = Fraction(residue, Q)
    if frac > Fraction(1, 2):
        frac -= 1
    # frac is exact; only the final small angle goes to floating point
    ang = 2 * math.pi * float(frac)
    trig = "cos" if Q % 4 == 1 else "sin"
    tv = math.cos(ang) if trig == "cos" else math.sin(ang)
    j_stmt = jacobi(2 * a_psi, Q)
    j_der = jacobi(2 * a_psi, Q // (D_ * D_))
    b = abs(b_psi)
    value = j_stmt * d.phi * sigma0(b) / math.sqrt(b) * tv + 0.0  # no -0.0 in reports
    return AprimeTerms(Q, D_, a_psi, b_psi, residue, frac, trig, tv, j_stmt, j_der, value)


def main_Aprime(data: PostnikovData) -> float:
    return aprime_terms(data.q, data.d, data.a_psi, data.b_psi).value


# --------------------------------------------------------------------------
# coset moments
# --------------------------------------------------------------------------

def _fold_by_residue(values: np.ndarray, d: int) -> np.ndarray:
    """g[r] = sum over a = r (mod d) of values[a], for a = 0..q-1."""
    r = np.arange(values.size) % d
    return (np.bincount(r, weights=values.real, minlength=d)
            + 1j * np.bincount(r, weights=values.imag, minlength=d))


def _check_coset_inputs(psi: DirichletCharacter, d: int, parity: str) -> None:
    q = psi.modulus
    if q % d:
        raise RegimeViolation(f"d = {d} does not divide q = {q}")
    if not psi.is_primitive():
        raise NotPrimitive(f"{psi} is not primitive")
    if parity == "even" and d > 1 and not precedes(d, q):
        raise RegimeViolation(f"even cosets need d < q in every valuation, got q = {q}, d = {d}")


def coset_terms(psi: DirichletCharacter, d: int, parity: str = "even", method: str = "hurwitz",
                V: VTable | None = None, cutoff_T: int | None = None) -> np.ndarray:
    """|L(1/2, chi psi)|^2 for each chi mod d of the given parity, in enumeration order."""
    _check_coset_inputs(psi, d, parity)
    q = psi.modulus
    chars = enumerate_characters(d, parity)
    lifted = [coset_character(chi, psi) for chi in chars]
    primitive = np.array([c.is_primitive() for c in lifted])
    psi_vals = psi.values()
    if method == "afe":
        if parity != "even" or not psi.is_even() or not primitive.all():
            raise NotPrimitiveEven("the AFE route needs an even coset of primitive even characters")
        W = afe_weights(q, V, cutoff_T)
        g = _fold_by_residue(psi_vals * W.F, d)
        return 2.0 * character_matrix_sums(chars, g).real
    if method != "hurwitz":
        raise ValueError(f"unknown method {method!r}")
    g = _fold_by_residue(psi_vals * hurwitz_table(q), d)
    L = character_matrix_sums(chars, g) / math.sqrt(q)
    out = np.abs(L) ** 2
    for i in np.nonzero(~primitive)[0]:
        prim = lifted[i].primitive()
        val = ZETA_HALF if prim.modulus == 1 else l_central_hurwitz(prim)
        out[i] = abs(val) ** 2
    return out


def coset_moment(psi: DirichletCharacter, d: int, parity: str = "even", method: str = "hurwitz",
                 V: VTable | None = None, cutoff_T: int | None = None) -> float:
    """sum over chi mod d (even ones, or all) of |L(1/2, chi psi)|^2."""
    return math.fsum(coset_terms(psi, d, parity, method, V, cutoff_T))


def gambit_rhs(psi: DirichletCharacter, d: int, truncation_T: int | None = None,
               V: VTable | None = None) -> float:
    """phi(d) sum_+- sum_{m = +-n (d), (mn,q)=1, mn <= T} psi(m) conj psi(n) V(mn/q)/sqrt(mn).

    Pairs are enumerated directly and filtered by congruence, with no
    character orthogonality involved.
    """
    q = psi.modulus
    V = V or default_vtable()
    T = int(truncation_T or 60 * q)
    T_eff, _ = effective_cutoff(q, V, T)
    w = _weights_upto(q, V, T_eff)
    k = psi.phase_ints()
    lam = psi.group.exponent
    partial = []
    for m, n in pair_blocks(T_eff):
        km, kn = k[m % q], k[n % q]
        ok = (km >= 0) & (kn >= 0)
        mult = ((m - n) % d == 0).astype(np.int64) + ((m + n) % d == 0)
        sel = ok & (mult > 0)
        ang = 2 * np.pi * ((km[sel] - kn[sel]) % lam) / lam
        # (m, n) and (n, m) together give twice the real part
        partial.append(float(np.sum(2.0 * mult[sel] * np.cos(ang) * w[m[sel] * n[sel]])))
    n = np.arange(1, math.isqrt(T_eff) + 1, dtype=np.int64)
    n = n[k[n % q] >= 0]
    mult = 1 + ((2 * n) % d == 0)
    partial.append(float(np.sum(mult * w[n * n])))
    return as_factored(d).phi * math.fsum(partial)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class MomentReport:
    q: int
    d: int
    psi_index: tuple[int, ...] | None
    a_psi: int | None
    b_psi: int | None
    regime: str
    M: float | None
    D: float | None
    A_or_Aprime: float | None
    residual: float | None
    predicted_scale: float
    ratio: float | None
    method: str
    seconds: float | None = None
    meta: dict = field(default_factory=dict)

    def csv_row(self, with_seconds: bool = False) -> list[str]:
        idx = None if self.psi_index is None else " ".join(map(str, self.psi_index))
        cells = [self.q, self.d, idx, self.a_psi, self.b_psi, self.regime, self.M, self.D,
                 self.A_or_Aprime, self.residual, self.predicted_scale, self.ratio, self.method,
                 self.seconds if with_seconds else None]
        return [_fmt(c) for c in cells]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["psi_index"] = None if self.psi_index is None else list(self.psi_index)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=str)


def csv_header_comment() -> str:
    return f"# coset_moments report v{CSV_VERSION}; {G_CHOICE}; columns: {','.join(CSV_COLUMNS)}"


def main_term_report(psi: DirichletCharacter, d: int, method: str = "hurwitz",
                   V: VTable | None = None, cutoff_T: int | None = None) -> MomentReport:
    t0 = time.perf_counter()
    q = psi.modulus
    qf, df = as_factored(psi.group.modulus), as_factored(d)
    regime = regime_of(qf, df)
    meta = {"G": G_CHOICE, "constants": CONSTANT_SOURCES}
    if method == "afe":
        W = afe_weights(q, V, cutoff_T)
        meta.update(cutoff_T=W.cutoff_T, effective_T=W.effective_T, tail_bound=W.tail_bound)
    data = None
    if set(df.primes) == set(qf.primes):
        data = compute_postnikov(psi, d)
    a = data.a_psi if data else None
    b = data.b_psi if data else None
    if regime is Regime.THM3:
        return _envelope(psi, d, a, b, regime.value, method, V, cutoff_T, meta, t0)
    if not psi.is_even():
        raise RegimeViolation(f"the {regime.value} main terms need an even psi")
    M = coset_moment(psi, d, "even", method, V, cutoff_T)
    D = main_D(qf, df)
    if regime is Regime.THM1:
        main2 = main_A(data)
        scale = q ** -0.125 * d
    else:
        terms = aprime_terms(qf, df, a, b)
        main2 = terms.value
        scale = d ** -0.25 * math.sqrt(q)
        meta.update(jacobi_statement=terms.jacobi_statement,
                    jacobi_derivation=terms.jacobi_derivation,
                    phase_residue=terms.residue, trig=terms.trig)
    residual = M - D - main2
    return MomentReport(q, d, psi.exponents, a, b, regime.value, M, D, main2, residual,
                        scale, abs(residual) / scale, method, time.perf_counter() - t0, meta)


def _envelope(psi, d, a, b, regime, method, V, cutoff_T, meta, t0) -> MomentReport:
    q = psi.modulus
    M = coset_moment(psi, d, "all", method, V, cutoff_T)
    scale = d + math.sqrt(q / d)
    return MomentReport(q, d, psi.exponents, a, b, regime, M, None, None, None,
                        scale, M / scale, method, time.perf_counter() - t0, meta)


def envelope_report(psi: DirichletCharacter, d: int, V: VTable | None = None) -> MomentReport:
    """The full-coset moment against d + d^{-1/2} q^{1/2}, whatever the regime."""
    t0 = time.perf_counter()
    qf, df = as_factored(psi.group.modulus), as_factored(d)
    data = compute_postnikov(psi, d) if set(df.primes) == set(qf.primes) else None
    meta = {"G": G_CHOICE, "constants": CONSTANT_SOURCES, "envelope_for": regime_of(qf, df).value}
    return _envelope(psi, d, data and data.a_psi, data and data.b_psi, Regime.THM3.value,
                     "hurwitz", V, None, meta, t0)


def default_threads() -> int:
    env = os.environ.get("COSET_MOMENT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def main_term_reports(psis: list[DirichletCharacter], d: int, method: str = "hurwitz",
                    threads: int | None = None, V: VTable | None = None,
                    cutoff_T: int | None = None, envelope: bool = False) -> list[MomentReport]:
    """One report per psi, computed concurrently and returned in input order."""
    # shared tables are built once before fanning out
    if psis:
        q = psis[0].modulus
        hurwitz_table(q)
        if method == "afe":
            V = V or default_vtable()
            afe_weights(q, V, cutoff_T)
    def one(p):
        if envelope:
            return envelope_report(p, d, V)
        return main_term_report(p, d, method, V, cutoff_T)

    threads = threads or default_threads()
    if threads == 1:
        return [one(p) for p in psis]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, psis))


# --------------------------------------------------------------------------
# character selection
# --------------------------------------------------------------------------

def postnikov_table(q, d) -> list[tuple[DirichletCharacter, PostnikovData]]:
    """Every primitive even psi mod q with its (unverified) invariants."""
    d = as_factored(d).value
    out = []
    for psi in primitive_characters(q, "even"):
        out.append((psi, compute_postnikov(psi, d, verify=False)))
    return out


def select_by_target_a(q, d, target: int) -> tuple[DirichletCharacter, PostnikovData, bool]:
    """A primitive even psi whose a_psi equals target (exact=True) or is nearest to it."""
    d = as_factored(d).value
    table = postnikov_table(q, d)
    best = min(table, key=lambda t: (abs(t[1].a_psi - target), t[1].a_psi, t[0].exponents))
    psi = best[0]
    return psi, compute_postnikov(psi, d), best[1].a_psi == target


def sample_characters(q, d, count: int = 6) -> list[DirichletCharacter]:
    """A deterministic spread of primitive even psi with distinct a_psi.

    Always includes a character with a_psi = 1 and one with b_psi != a_psi
    when such characters exist; the rest are spread evenly over the distinct
    invariants ordered by |a_psi|.  Each a_psi is represented by the first
    character carrying it in enumeration order.
    """
    table = postnikov_table(q, d)
    firsts: dict[int, int] = {}
    for i, (_, t) in enumerate(table):
        firsts.setdefault(t.a_psi, i)
    if not firsts:
        return []
    by_size = sorted(firsts, key=lambda a: (abs(a), a))
    chosen: list[int] = []
    for pred in (lambda t: t.a_psi == 1, lambda t: t.b_psi is not None and t.b_psi != t.a_psi):
        hit = next((a for a in by_size if pred(table[firsts[a]][1])), None)
        if hit is not None and hit not in chosen:
            chosen.append(hit)
    for i in np.linspace(0, len(by_size) - 1, count).round().astype(int):
        if len(chosen) >= count:
            break
        if by_size[i] not in chosen:
            chosen.append(by_size[i])
    return [table[i][0] for i in sorted(firsts[a] for a in chosen)]
