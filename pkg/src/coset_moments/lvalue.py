"""Central values L(1/2, chi) by two independent routes.

* The |L|^2 approximate functional equation for primitive even characters,
  weighted by the smooth cutoff V (computed by a contour integral with
  G(s) = 1, tabulated once, interpolated).
* A Hurwitz-zeta expansion valid for every non-principal character:
  L(1/2, chi) = q^{-1/2} sum_a chi(a) zeta(1/2, a/q).

The Mellin-transform identity for x^{-s} cos(2 pi k x) / sqrt(x) is also
checked here, with an oscillatory quadrature written from scratch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn
from scipy.special import k0e, loggamma, roots_jacobi, roots_legendre

from .characters import DirichletCharacter
from .errors import (NotPrimitiveEven, PoleInput, PrincipalCharacter,
                     QuadratureNotConverged)

LOG_PI = math.log(math.pi)
_LOGGAMMA_QUARTER = float(loggamma(0.25).real)

# G(s) = 1 is the weight inside V; recorded in every report.
G_CHOICE = "G(s)=1"


def gamma_factor(s: complex) -> complex:
    """pi^{-s/2} Gamma(s/2)."""
    s = complex(s)
    half = s / 2
    if half.imag == 0 and half.real <= 0 and half.real == round(half.real):
        raise PoleInput(f"Gamma(s/2) has a pole at s = {s}")
    return complex(np.exp(-half * LOG_PI + loggamma(half)))


# --------------------------------------------------------------------------
# the cutoff V(x)
# --------------------------------------------------------------------------

def _default_abscissa(x: float) -> float:
    """Integration line for V(x).

    For x < 1 the line Re s = -1/4 sits between the poles at -1/2 and 0; the
    residue 1 at s = 0 is added back.  For x >= 1 the line is placed near the
    saddle point c ~ 2 pi x, quantized to a ladder of ratio 2^(1/8) so that
    lines can be shared between nearby x.  On Re s = 1 the integrand would be
    many orders larger than V(x) for large x and the result would be noise.
    """
    if x < 1.0:
        return -0.25
    target = max(1.0, 2 * math.pi * x - 0.5)
    return 2.0 ** (math.floor(8 * math.log2(target)) / 8)


def _line_height(c: float) -> float:
    # |Gamma(a + it/2)|^2 falls like exp(-pi t / 2) for small a, like exp(-t^2 / 2c) for large a
    return max(40.0, 9.0 * math.sqrt(abs(c)) + 20.0)


def v_of_x(x, c: float | None = None, step: float = 0.02, height: float | None = None) -> np.ndarray | float:
    """V(x) = (1/2 pi i) int_(c) gamma(1/2+s)^2 / gamma(1/2)^2 x^{-s} ds / s, trapezoid rule.

    ``c`` forces a particular abscissa (it must avoid the poles at 0 and
    -1/2; a line left of 0 picks up the residue 1).  The trapezoid sum with
    twice the step is computed alongside as a convergence check.
    """
    scalar = np.isscalar(x)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if (xs <= 0).any():
        raise ValueError("V(x) needs x > 0")
    cs = np.array([_default_abscissa(v) for v in xs]) if c is None else np.full(xs.size, float(c))
    out = np.empty_like(xs)
    for cv in np.unique(cs):
        sel = cs == cv
        out[sel] = _v_line(xs[sel], float(cv), step, height or _line_height(cv))
    return float(out[0]) if scalar else out


def _v_line(xs: np.ndarray, c: float, step: float, height: float) -> np.ndarray:
    if c == 0 or c <= -0.5:
        raise ValueError("abscissa must avoid the poles at 0 and -1/2")
    n = int(math.ceil(height / step))
    n += n % 2
    t = np.arange(n + 1) * step
    s = c + 1j * t
    log_g = 2.0 * (loggamma(0.25 + s / 2) - _LOGGAMMA_QUARTER) - np.log(s)
    # conjugate symmetry: the integral over R is twice the real part over t >= 0
    fine_w = np.full(n + 1, step)
    fine_w[0] = fine_w[-1] = step / 2
    coarse_w = np.zeros(n + 1)
    coarse_w[::2] = 2 * step
    coarse_w[0] = coarse_w[-1] = step
    logs = np.log(math.pi * xs)
    out = np.empty_like(xs)
    coarse = np.empty_like(xs)
    block = max(1, (1 << 22) // (n + 1))
    for i in range(0, xs.size, block):
        e = log_g[None, :] - s[None, :] * logs[i:i + block, None]
        mag = e.real
        peak = mag.max(axis=1)
        if (mag[:, -1] - peak > -39.0).any():
            raise QuadratureNotConverged("integrand has not decayed at the truncation height")
        f = np.exp(e).real
        out[i:i + block] = f @ fine_w
        coarse[i:i + block] = f @ coarse_w
    out /= math.pi
    coarse /= math.pi
    if c < 0:
        out += 1.0
        coarse += 1.0
    if (np.abs(out - coarse) > 1e-9 * np.abs(out)).any():
        raise QuadratureNotConverged("step doubling changed V by more than 1e-9 relative")
    return out


def v_of_x_bessel(x: float) -> float:
    """Independent form V(x) = 4 Gamma(1/4)^{-2} int_{pi x}^inf u^{-1/2} K_0(2u) du."""
    # u = pi x + w with K_0 scaled by exp(2u), so the tolerance stays relative for large x
    u0 = math.pi * x
    val, _ = quad(lambda w: (u0 + w) ** -0.5 * k0e(2 * (u0 + w)) * math.exp(-2 * w), 0, np.inf,
                  limit=400, epsabs=0.0, epsrel=1e-13)
    return 4.0 / gamma_fn(0.25) ** 2 * val * math.exp(-2 * u0)


@dataclass(eq=False)
class VTable:
    """V tabulated on a geometric grid and interpolated by a cubic spline in log x."""

    grid: np.ndarray
    values: np.ndarray
    quadrature_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = CubicSpline(np.log(self.grid), self.values)

    @classmethod
    def build(cls, n: int = 4096, x_min: float = 1e-8, x_max: float = 100.0,
              step: float = 0.02) -> "VTable":
        grid = np.geomspace(x_min, x_max, n)
        vals = v_of_x(grid, step=step)
        params = {"abscissa": "-1/4 for x<1, ~2 pi x for x>=1", "step": step,
                  "height": "max(40, 9 sqrt|c| + 20)", "points": n,
                  "x_min": x_min, "x_max": x_max, "G": G_CHOICE}
        return cls(grid, vals, params)

    @property
    def x_min(self) -> float:
        return float(self.grid[0])

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= self.x_min) & (x <= self.x_max)
        out[inside] = self._spline(np.log(x[inside]))
        low = x < self.x_min
        if low.any():
            out[low] = v_of_x(x[low])
        return out

    def negligible_from(self, threshold: float = 1e-30) -> float:
        """Smallest grid x beyond which every tabulated |V| is below threshold."""
        big = np.nonzero(np.abs(self.values) >= threshold)[0]
        if big.size == 0:
            return self.x_min
        return float(self.grid[min(big[-1] + 1, self.grid.size - 1)])

    def refinement_error(self, samples: int = 400) -> float:
        """Max |spline - direct quadrature| at log-midpoints of the grid."""
        idx = np.linspace(0, self.grid.size - 2, samples).astype(int)
        mids = np.sqrt(self.grid[idx] * self.grid[idx + 1])
        return float(np.max(np.abs(self(mids) - v_of_x(mids))))


@lru_cache(maxsize=4)
def default_vtable(n: int = 4096) -> VTable:
    return VTable.build(n=n)


# --------------------------------------------------------------------------
# approximate functional equation for |L(1/2, chi)|^2
# --------------------------------------------------------------------------

@dataclass
class AfeWeights:
    """F[r] = sum over m n^{-1} = r (mod q), m n <= T, of V(mn/q) / sqrt(mn).

    For chi mod q the approximate functional equation is then
    L(1/2,chi) L(1/2,conj chi) = 2 sum_r chi(r) F[r].
    """

    q: int
    cutoff_T: int
    effective_T: int
    tail_bound: float
    F: np.ndarray


def unit_inverses(q: int) -> np.ndarray:
    """inv[r] = r^{-1} mod q for units r, 0 elsewhere."""
    r = np.arange(q, dtype=np.int64)
    unit = np.gcd(r, q) == 1
    inv = np.zeros(q, dtype=np.int64)
    inv[unit] = [pow(int(a), -1, q) for a in r[unit]]
    return inv


def pair_blocks(T: int, block: int = 1 << 21):
    """Yield (m, n) arrays covering every pair 1 <= m < n with m n <= T."""
    ms, ns = [], []
    size = 0
    m = 1
    while m * (m + 1) <= T:
        n = np.arange(m + 1, T // m + 1, dtype=np.int64)
        ms.append(np.full(n.size, m, dtype=np.int64))
        ns.append(n)
        size += n.size
        if size >= block:
            yield np.concatenate(ms), np.concatenate(ns)
            ms, ns, size = [], [], 0
        m += 1
    if ms:
        yield np.concatenate(ms), np.concatenate(ns)


def _weights_upto(q: int, V: VTable, T: int) -> np.ndarray:
    w = np.zeros(T + 1)
    t = np.arange(1, T + 1, dtype=np.float64)
    w[1:] = V(t / q) / np.sqrt(t)
    return w


def effective_cutoff(q: int, V: VTable, cutoff_T: int) -> tuple[int, float]:
    """Drop products mn whose V(mn/q) is below 1e-30; return (T_eff, tail bound)."""
    x_neg = V.negligible_from()
    T_eff = min(cutoff_T, int(math.ceil(q * x_neg)))
    # every dropped term is below 1e-30 / sqrt(mn); there are < T log T of them
    tail = 0.0 if T_eff >= cutoff_T else 1e-30 * cutoff_T * (math.log(cutoff_T) + 1)
    return T_eff, tail


@lru_cache(maxsize=32)
def _afe_weights_cached(q: int, cutoff_T: int, V: VTable) -> AfeWeights:
    T_eff, tail = effective_cutoff(q, V, cutoff_T)
    w = _weights_upto(q, V, T_eff)
    inv = unit_inverses(q)
    unit = np.gcd(np.arange(q), q) == 1
    G = np.zeros(q)
    for m, n in pair_blocks(T_eff):
        ok = unit[m % q] & unit[n % q]
        m, n = m[ok], n[ok]
        r = (m % q) * inv[n % q] % q
        G += np.bincount(r, weights=w[m * n], minlength=q)
    F = G + G[inv]
    F[~unit] = 0.0
    n = np.arange(1, math.isqrt(T_eff) + 1, dtype=np.int64)
    n = n[unit[n % q]]
    F[1 % q] += math.fsum(w[n * n])
    return AfeWeights(q, cutoff_T, T_eff, tail, F)


def afe_weights(q: int, V: VTable | None = None, cutoff_T: int | None = None) -> AfeWeights:
    cutoff_T = int(cutoff_T or 60 * q)
    return _afe_weights_cached(q, cutoff_T, V or default_vtable())


def character_matrix_sums(chars: list[DirichletCharacter], vec: np.ndarray, block: int = 1 << 22) -> np.ndarray:
    """sum_r chi(r) vec[r] for each chi (all of one modulus)."""
    if not chars:
        return np.zeros(0, dtype=complex)
    grp = chars[0].group
    q, lam = grp.q, grp.exponent
    unit = grp.unit_mask
    logs = grp.all_dlogs[:, unit]
    v = np.asarray(vec)[unit]
    W = np.array([c._weights for c in chars], dtype=np.int64).reshape(len(chars), -1)
    out = np.empty(len(chars), dtype=complex)
    rows = max(1, block // max(1, v.size))
    for i in range(0, len(chars), rows):
        k = (W[i:i + rows] @ logs) % lam if logs.shape[0] else np.zeros((len(W[i:i + rows]), v.size), dtype=np.int64)
        out[i:i + rows] = np.exp(2j * np.pi * k / lam) @ v
    return out


def _check_primitive_even(chi: DirichletCharacter) -> None:
    if chi.modulus == 1 or not chi.is_primitive() or not chi.is_even():
        raise NotPrimitiveEven(f"{chi} is not a primitive even character of modulus > 1")


def afe_moment_term(chi: DirichletCharacter, V: VTable | None = None, cutoff_T: int | None = None) -> float:
    """|L(1/2, chi)|^2 from the bilinear sum 2 sum_{mn<=T} chi(m) conj chi(n) V(mn/q)/sqrt(mn)."""
    return float(afe_moment_terms([chi], V, cutoff_T)[0])


def afe_moment_terms(chars: list[DirichletCharacter], V: VTable | None = None,
                     cutoff_T: int | None = None) -> np.ndarray:
    for chi in chars:
        _check_primitive_even(chi)
    if not chars:
        return np.zeros(0)
    q = chars[0].modulus
    if cutoff_T is not None and cutoff_T < 60 * q:
        raise ValueError("cutoff_T must be at least 60 q")
    W = afe_weights(q, V, cutoff_T)
    return 2.0 * character_matrix_sums(chars, W.F).real


# --------------------------------------------------------------------------
# Hurwitz zeta route
# --------------------------------------------------------------------------

# B_2 .. B_16
_BERNOULLI = [Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30),
              Fraction(5, 66), Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510)]


def hurwitz_zeta_half(a, direct_terms: int = 12) -> np.ndarray | float:
    """zeta(1/2, a) for 0 < a <= 1 by Euler-Maclaurin with Bernoulli terms through B_16.

    With 12 direct terms the first omitted correction is below 1e-17.
    """
    scalar = np.isscalar(a)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if (a <= 0).any():
        raise ValueError("hurwitz_zeta_half needs a > 0")
    s = 0.5
    N = direct_terms
    head = np.zeros_like(a)
    for n in range(N - 1, -1, -1):
        head += (n + a) ** -s
    z = N + a
    tail = z ** (1 - s) / (s - 1) + 0.5 * z ** -s
    rising = s  # s (s+1) ... (s+2j-2)
    fact = 1.0
    for j, B in enumerate(_BERNOULLI, start=1):
        fact *= (2 * j - 1) * (2 * j)
        tail = tail + float(B) / fact * rising * z ** (-s - 2 * j + 1)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    out = head + tail
    return float(out[0]) if scalar else out


@lru_cache(maxsize=16)
def hurwitz_table(q: int) -> np.ndarray:
    """table[a] = zeta(1/2, a/q) for a = 1..q, stored at index a mod q."""
    a = np.arange(1, q + 1, dtype=np.float64)
    vals = hurwitz_zeta_half(a / q)
    table = np.roll(vals, 1)  # index 0 holds a = q
    table.flags.writeable = False
    return table


def l_central_hurwitz(chi: DirichletCharacter) -> complex:
    """L(1/2, chi) = q^{-1/2} sum_{a mod q} chi(a) zeta(1/2, a/q).

    For an imprimitive chi this is the L-function of chi as a character mod
    q (Euler factors at p | q absent), not that of its primitive inducer.
    """
    return complex(l_central_many([chi])[0])


def l_central_many(chars: list[DirichletCharacter]) -> np.ndarray:
    for chi in chars:
        if chi.is_principal():
            raise PrincipalCharacter("the Hurwitz route needs a non-principal character")
    if not chars:
        return np.zeros(0, dtype=complex)
    q = chars[0].modulus
    return character_matrix_sums(chars, hurwitz_table(q)) / math.sqrt(q)


# --------------------------------------------------------------------------
# Mellin transform of cos(2 pi k x) / sqrt(x)
# --------------------------------------------------------------------------

def mellin_closed(s: float, k: int) -> float:
    e = 0.5 - s
    return math.gamma(e) / (2 * math.pi * abs(k)) ** e * math.cos(math.pi / 2 * e)


def _sine_tail(beta: float, X: float, terms: int = 12) -> float:
    """int_X^inf y^{-beta} sin y dy for X a multiple of pi (asymptotic series)."""
    sign = 1.0 if round(X / math.pi) % 2 == 0 else -1.0  # cos X
    total, coef = 0.0, 1.0
    for j in range(terms):
        total += coef * X ** (-beta - 2 * j)
        coef *= -(beta + 2 * j) * (beta + 2 * j + 1)
    return sign * total


def _oscillatory_integral(alpha: float, panels: int, order: int) -> float:
    """int_0^inf y^{-alpha} cos y dy, 0 < alpha < 1, via one integration by parts."""
    # = alpha * int_0^inf y^{-alpha-1} sin y dy; first panel uses Gauss-Jacobi for y^{-alpha}
    tj, wj = roots_jacobi(order, 0.0, -alpha)
    y = math.pi * (1 + tj) / 2
    first = (math.pi / 2) ** (1 - alpha) * float(np.dot(wj, np.sin(y) / y))
    tl, wl = roots_legendre(order)
    j = np.arange(1, panels)[:, None]
    yy = math.pi * (j + (1 + tl[None, :]) / 2)
    body = (math.pi / 2) * (np.sin(yy) * yy ** (-alpha - 1)) @ wl
    total = first + math.fsum(body) + _sine_tail(alpha + 1, panels * math.pi)
    return alpha * total


def mellin_check(s: float, k: int, panels: int = 400, order: int = 24) -> tuple[float, float]:
    """(quadrature, closed form) for int_0^inf x^{-s} cos(2 pi k x) dx / sqrt(x)."""
    if not -0.5 < s < 0.5 or k == 0:
        raise ValueError("need -1/2 < s < 1/2 and k != 0")
    alpha = s + 0.5
    fine = _oscillatory_integral(alpha, panels, order)
    coarse = _oscillatory_integral(alpha, panels // 2, order // 2)
    if abs(fine - coarse) > 1e-8 * max(1.0, abs(fine)):
        raise QuadratureNotConverged(f"resolutions disagree: {fine} vs {coarse}")
    lhs = (2 * math.pi * abs(k)) ** (alpha - 1) * fine
    return lhs, mellin_closed(s, k)
