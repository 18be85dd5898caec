"""Command-line front end: verification suites, moment reports and family scans.

Exit codes: 0 when everything passes, 1 when a check fails, 2 on a usage or
configuration error.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import operator
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .characters import DirichletCharacter, primitive_characters, unit_group
from .errors import CosetMomentError, QuadratureNotConverged, VerificationFailed
from .modarith import (FactoredModulus, as_factored, quad_gauss_brute, quad_gauss_closed,
                       signed_residue)
from .moments import (CSV_COLUMNS, MomentReport, Regime, aprime_terms, coset_moment,
                      csv_header_comment, default_threads, diag_vs_closed_form, gambit_rhs, main_A,
                      regime_of, sample_characters, select_by_target_a, main_term_reports)
from .postnikov import (PostnikovData, b_from_a, check_additivity, check_modularity,
                        check_periodicity, compute_postnikov, lq_build, s_qd_brute_all,
                        s_qd_closed, sqd_regime)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
L_VALUE_LIMIT = 200_000


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Pow: operator.pow}


def parse_int_expr(text: str) -> int:
    """Evaluate an integer expression made of literals, + - * and ^ (or **)."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError:
        raise UsageError(f"cannot parse integer expression {text!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and type(node.value) is int:
            return node.value
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Pow) and (right < 0 or right > 10_000):
                raise UsageError(f"exponent {right} out of range in {text!r}")
            return _BINOPS[type(node.op)](left, right)
        raise UsageError(f"unsupported element in integer expression {text!r}")

    return ev(tree)


def parse_modulus(text: str) -> FactoredModulus:
    try:
        return as_factored(text)
    except (ValueError, CosetMomentError) as exc:
        raise UsageError(str(exc)) from None


@dataclass
class RunConfig:
    command: str
    q: FactoredModulus | None = None
    d: FactoredModulus | None = None
    psi_selector: tuple = ("all-primitive-even",)
    method: str = "hurwitz"
    output: str = "csv"
    output_path: str | None = None
    threads: int = 1
    timings: bool = False
    phase_only: bool = False
    extra: dict = field(default_factory=dict)


def _resolve_q_d(args) -> tuple[FactoredModulus | None, FactoredModulus | None]:
    if getattr(args, "prime", None) is not None:
        if args.q_exp is None or args.d_exp is None:
            raise UsageError("--prime needs --q-exp and --d-exp")
        if args.q is not None or args.d is not None:
            raise UsageError("give either --q/--d or --prime/--q-exp/--d-exp")
        q = FactoredModulus.from_factors([(args.prime, args.q_exp)]) if args.prime > 2 else None
        if q is None:
            raise UsageError("the prime must be odd")
        d = FactoredModulus.from_factors([(args.prime, args.d_exp)])
        return q, d
    q = parse_modulus(args.q) if args.q is not None else None
    d = parse_modulus(args.d) if args.d is not None else None
    if q is not None and d is not None and q.value % d.value:
        raise UsageError(f"d = {d} does not divide q = {q}")
    return q, d


def _require_small(q: FactoredModulus) -> None:
    if q.value > L_VALUE_LIMIT:
        raise UsageError(f"q = {q} exceeds {L_VALUE_LIMIT}; only --phase-only accepts larger moduli")


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

class Tally:
    def __init__(self, out):
        self.out = out
        self.passed = 0
        self.failed = 0

    def record(self, ok: bool, label: str, detail: str = "") -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
        self.out.write(f"{'PASS' if ok else 'FAIL'} {label}{(' ' + detail) if detail else ''}\n")

    def finish(self, scope: str) -> int:
        self.out.write(f"{scope}: {self.passed} passed, {self.failed} failed\n")
        return EXIT_OK if self.failed == 0 else EXIT_FAIL


POSTNIKOV_GRID = [p**k for p in (3, 5, 7, 11) for k in range(2, 7) if p**k <= 20000]


def _same_support_divisors(q: int) -> list[int]:
    p = as_factored(q)
    return [d for d in p.divisors() if set(as_factored(d).primes) == set(p.primes)]


def verify_postnikov_cases(q: int, d: int, tally: Tally) -> None:
    bad = 0
    chars = primitive_characters(q, "even")
    for psi in chars:
        try:
            compute_postnikov(psi, d)
        except CosetMomentError:
            bad += 1
    tally.record(bad == 0, f"postnikov q={q} d={d}", f"{len(chars)} characters, {bad} failures")


def verify_lq_cases(q: int, d: int, tally: Tally) -> None:
    L = lq_build(d, q)
    tally.record(check_periodicity(L), f"periodicity q={q} d={d}")
    tally.record(check_additivity(L), f"additivity q={q} d={d}")
    mod = check_modularity(L)
    tally.record(mod["first"], f"modularity-1 q={q} d={d}")
    if mod["second"] is not None:
        tally.record(mod["second"], f"modularity-2 q={q} d={d}")


def verify_gauss(r_max: int, tally: Tally, pairs: int = 100, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for r in range(1, r_max + 1, 2):
        worst = 0.0
        for _ in range(pairs):
            A = int(rng.integers(0, r))
            B = int(rng.integers(1, r + 1))
            while math.gcd(B, r) != 1:
                B = int(rng.integers(1, r + 1))
            worst = max(worst, abs(quad_gauss_closed(A, B, r) - quad_gauss_brute(A, B, r)))
        tally.record(worst <= 1e-9, f"gauss r={r}", f"max error {worst:.3g}")


def sqd_max_error(q: int, d: int, chars: list[DirichletCharacter]) -> float:
    m = q // d
    worst = 0.0
    for psi in chars:
        data = compute_postnikov(psi, d)
        brute = s_qd_brute_all(psi, d)
        closed = np.array([s_qd_closed(data, k) for k in range(m)])
        worst = max(worst, float(np.max(np.abs(brute - closed))))
    return worst


def verify_sqd(q: int, d: int, tally: Tally, sample: int | None = None) -> None:
    if sqd_regime(q, d) is None:
        raise UsageError(f"no closed form for q = {q}, d = {d}")
    chars = primitive_characters(q)
    if sample is not None and len(chars) > sample:
        idx = np.linspace(0, len(chars) - 1, sample).round().astype(int)
        chars = [chars[i] for i in idx]
    err = sqd_max_error(q, d, chars)
    tally.record(err <= 1e-9, f"sqd q={q} d={d} regime {sqd_regime(q, d)}",
                 f"{len(chars)} characters, max error {err:.3g}")


def afe_oracle_max_error(q: int, chars=None) -> tuple[int, float]:
    from .lvalue import afe_moment_terms, l_central_many
    chars = primitive_characters(q, "even") if chars is None else chars
    if not chars:
        return 0, 0.0
    afe = afe_moment_terms(chars)
    hz = np.abs(l_central_many(chars)) ** 2
    return len(chars), float(np.max(np.abs(afe - hz)))


def verify_afe_oracle(qs, tally: Tally) -> None:
    for q in qs:
        n, err = afe_oracle_max_error(q)
        tally.record(err <= 1e-6, f"afe-oracle q={q}", f"{n} characters, max error {err:.3g}")


GAMBIT_CASES = [(243, 27), (729, 27), (625, 25), (2401, 49)]


def verify_gambit(q: int, d: int, tally: Tally) -> None:
    worst = 0.0
    chars = primitive_characters(q, "even")
    for psi in chars:
        worst = max(worst, abs(coset_moment(psi, d, "even", "afe") - gambit_rhs(psi, d)))
    tally.record(worst <= 1e-5, f"gambit q={q} d={d}", f"{len(chars)} characters, max error {worst:.3g}")


def verify_diag(q: int, tally: Tally) -> None:
    lhs, rhs = diag_vs_closed_form(q)
    tol = 10 / math.sqrt(q)
    tally.record(abs(lhs - rhs) <= tol, f"diag q={q}",
                 f"lhs={lhs!r} rhs={rhs!r} |diff|={abs(lhs - rhs):.3g} tol={tol:.3g}")


MELLIN_S = (-0.4, -0.2, 0.0, 0.25, 0.45)
MELLIN_K = (1, -1, 2, 3, 7)


def verify_mellin(tally: Tally) -> None:
    from .lvalue import mellin_check
    for s in MELLIN_S:
        for k in MELLIN_K:
            lhs, rhs = mellin_check(s, k)
            tally.record(abs(lhs - rhs) <= 1e-6, f"mellin s={s} k={k}", f"|diff|={abs(lhs - rhs):.3g}")


def cmd_verify(args, out) -> int:
    q, d = _resolve_q_d(args)
    tally = Tally(out)
    scope = args.scope
    if scope in ("postnikov", "sqd", "gambit") and (q is None) != (d is None):
        raise UsageError(f"verify {scope} needs both --q and --d, or neither")
    if scope == "postnikov":
        cases = [(q.value, d.value)] if q else [(qq, dd) for qq in POSTNIKOV_GRID
                                                for dd in _same_support_divisors(qq)]
        for qq, dd in cases:
            if set(as_factored(dd).primes) != set(as_factored(qq).primes):
                raise UsageError("d and q must have the same prime support")
            verify_postnikov_cases(qq, dd, tally)
            verify_lq_cases(qq, dd, tally)
    elif scope == "gauss":
        verify_gauss(args.r_max, tally)
    elif scope == "sqd":
        cases = [(q.value, d.value)] if q else [(qq, dd) for qq in POSTNIKOV_GRID
                                                for dd in _same_support_divisors(qq)
                                                if sqd_regime(qq, dd)]
        for qq, dd in cases:
            _require_small(as_factored(qq))
            verify_sqd(qq, dd, tally, sample=args.sample)
    elif scope == "afe-oracle":
        if q is not None:
            _require_small(q)
        verify_afe_oracle([q.value] if q else range(3, args.r_max + 1, 2), tally)
    elif scope == "gambit":
        cases = [(q.value, d.value)] if q else GAMBIT_CASES
        for qq, dd in cases:
            _require_small(as_factored(qq))
            verify_gambit(qq, dd, tally)
    elif scope == "diag":
        for qq in ([q.value] if q else [625, 2401, 14641]):
            _require_small(as_factored(qq))
            verify_diag(qq, tally)
    elif scope == "mellin":
        verify_mellin(tally)
    return tally.finish(scope)


# --------------------------------------------------------------------------
# moment and scan
# --------------------------------------------------------------------------

def write_reports(reports: list[MomentReport], fmt: str, stream, timings: bool = False) -> None:
    if fmt == "json":
        stream.write(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, default=str))
        stream.write("\n")
        return
    stream.write(csv_header_comment() + "\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row(with_seconds=timings))


def _emit(reports, args, out) -> None:
    if args.output_path:
        with open(args.output_path, "w", newline="") as fh:
            write_reports(reports, args.out, fh, args.timings)
    else:
        write_reports(reports, args.out, out, args.timings)


def _select_psis(q: FactoredModulus, d: FactoredModulus, selector: list[str],
                 err) -> list[DirichletCharacter]:
    kind = selector[0]
    if kind == "all-primitive-even":
        if len(selector) != 1:
            raise UsageError("all-primitive-even takes no argument")
        return primitive_characters(q, "even")
    if len(selector) != 2:
        raise UsageError(f"--psi {kind} needs exactly one argument")
    if kind == "index":
        grp = unit_group(q)
        exps = [int(x) for x in selector[1].replace(";", ",").split(",") if x.strip()]
        if len(exps) != len(grp.orders):
            raise UsageError(f"index needs {len(grp.orders)} exponents")
        psi = grp.character(exps)
        if not psi.is_primitive():
            raise UsageError(f"{psi} is not primitive")
        return [psi]
    if kind == "target-a":
        target = parse_int_expr(selector[1])
        psi, data, exact = select_by_target_a(q, d, target)
        if not exact:
            err.write(f"note: no primitive even character with a_psi = {target}; "
                      f"using nearest a_psi = {data.a_psi}\n")
        return [psi]
    raise UsageError(f"unknown --psi selector {kind!r}")


def phase_only_report(q: FactoredModulus, d: FactoredModulus, data: PostnikovData,
                      psi_index=None) -> MomentReport:
    """Main-term data from the invariants alone, with no L-values."""
    regime = regime_of(q, d)
    meta = {"phase_only": True}
    if regime is Regime.THM1:
        main2 = main_A(data)
        scale = q.value ** -0.125 * d.value
    elif regime is Regime.THM2:
        t = aprime_terms(q, d, data.a_psi, data.b_psi)
        main2 = t.value
        scale = d.value ** -0.25 * math.sqrt(q.value)
        meta.update(phase_residue=str(t.residue), angle=str(t.angle), trig=t.trig,
                    trig_value=t.trig_value, jacobi_statement=t.jacobi_statement,
                    jacobi_derivation=t.jacobi_derivation)
    else:
        main2 = None
        scale = d.value + math.sqrt(q.value / d.value)
    return MomentReport(q.value, d.value, psi_index, data.a_psi, data.b_psi, regime.value,
                        None, None, main2, None, scale, None, "phase-only", None, meta)


def cmd_moment(args, out, err) -> int:
    q, d = _resolve_q_d(args)
    if q is None or d is None:
        raise UsageError("moment needs a modulus and a divisor")
    regime = regime_of(q, d)
    if args.phase_only:
        if set(q.primes) != set(d.primes):
            raise UsageError("--phase-only needs d and q with the same prime support")
        if args.psi[0] == "target-a" and len(args.psi) == 2:
            m = q.value // d.value
            a = signed_residue(parse_int_expr(args.psi[1]), m)
            if math.gcd(a, q.value) != 1:
                raise UsageError("a_psi must be a unit for a primitive character")
            datas = [(None, PostnikovData(q.value, d.value, a, b_from_a(a, q.value, d.value), False))]
        else:
            if q.value > L_VALUE_LIMIT:
                raise UsageError("for large moduli give the invariant with --psi target-a")
            datas = [(psi.exponents, compute_postnikov(psi, d.value))
                     for psi in _select_psis(q, d, args.psi, err)]
        _emit([phase_only_report(q, d, data, idx) for idx, data in datas], args, out)
        return EXIT_OK
    _require_small(q)
    psis = _select_psis(q, d, args.psi, err)
    methods = ["hurwitz", "afe"] if args.method == "both" else [args.method]
    if "afe" in methods and regime is Regime.THM3:
        raise UsageError("the AFE route covers only even cosets (Thm1 and Thm2 regimes)")
    reports = []
    for method in methods:
        reports.extend(main_term_reports(psis, d.value, method, threads=args.threads))
    _emit(reports, args, out)
    if args.method == "both":
        n = len(psis)
        worst = max((abs(h.M - a.M) for h, a in zip(reports[:n], reports[n:])), default=0.0)
        if worst > 1e-5:
            err.write(f"hurwitz and afe disagree by {worst:.3g}\n")
            return EXIT_FAIL
    return EXIT_OK


FAMILY_DEFAULT_PRIMES = {"thm1": (5, 7, 11, 13), "thm2": (5, 7, 11), "thm3": (5, 7, 11)}
FAMILY_THRESHOLD = {"thm1": 5.0, "thm2": 5.0, "thm3": 20.0}


def family_cases(family: str, primes) -> list[tuple[FactoredModulus, FactoredModulus]]:
    shapes = {"thm1": [(4, 2)], "thm2": [(5, 2)], "thm3": [(5, 1), (5, 2), (4, 1)]}[family]
    return [(FactoredModulus.from_factors([(p, kq)]), FactoredModulus.from_factors([(p, kd)]))
            for p in primes for kq, kd in shapes]


def run_scan(family: str, cases, psi_count: int, threads: int) -> list[MomentReport]:
    reports = []
    for q, d in cases:
        _require_small(q)
        psis = sample_characters(q, d.value, psi_count)
        if family != "thm3" and regime_of(q, d).value != {"thm1": "Thm1", "thm2": "Thm2"}[family]:
            raise UsageError(f"(q, d) = ({q}, {d}) is not in the {family} regime")
        reports.extend(main_term_reports(psis, d.value, threads=threads, envelope=family == "thm3"))
    return reports


def cmd_scan(args, out, err) -> int:
    q, d = _resolve_q_d(args)
    if (q is None) != (d is None):
        raise UsageError("scan needs both --q and --d, or neither")
    if q is not None:
        cases = [(q, d)]
    else:
        primes = (tuple(int(x) for x in args.primes.split(",")) if args.primes
                  else FAMILY_DEFAULT_PRIMES[args.family])
        if any(p < 3 for p in primes):
            raise UsageError("primes must be odd")
        cases = family_cases(args.family, primes)
    reports = run_scan(args.family, cases, args.psi_count, args.threads)
    _emit(reports, args, out)
    limit = FAMILY_THRESHOLD[args.family]
    over = [r for r in reports if r.ratio is not None and r.ratio > limit]
    for r in over:
        err.write(f"ratio {r.ratio:.3g} exceeds {limit} at q={r.q} d={r.d} psi={r.psi_index}\n")
    return EXIT_FAIL if over else EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _add_modulus_args(p, with_prime: bool = False) -> None:
    p.add_argument("--q", help="modulus, e.g. 625, 5^4 or 7**239")
    p.add_argument("--d", help="divisor of q")
    if with_prime:
        p.add_argument("--prime", type=int, help="odd prime p (with --q-exp/--d-exp)")
        p.add_argument("--q-exp", type=int)
        p.add_argument("--d-exp", type=int)


def _add_output_args(p) -> None:
    p.add_argument("--out", choices=("csv", "json"), default="csv")
    p.add_argument("--output", dest="output_path", help="write to this file instead of stdout")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: COSET_MOMENT_THREADS or 1)")
    p.add_argument("--timings", action="store_true", help="fill the seconds column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coset-moments",
                                     description="Coset second moments of Dirichlet L-functions.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run an identity suite")
    v.add_argument("scope", choices=("postnikov", "gauss", "sqd", "afe-oracle", "gambit", "diag", "mellin"))
    _add_modulus_args(v)
    v.add_argument("--r-max", type=int, default=999,
                   help="largest odd r (gauss) or modulus (afe-oracle sweep)")
    v.add_argument("--sample", type=int, default=None, help="characters per case for sqd")

    m = sub.add_parser("moment", help="moment reports for selected characters")
    _add_modulus_args(m, with_prime=True)
    m.add_argument("--psi", nargs="+", default=["all-primitive-even"], metavar="SELECTOR",
                   help="all-primitive-even | index E1,E2,... | target-a EXPR")
    m.add_argument("--method", choices=("hurwitz", "afe", "both"), default="hurwitz")
    m.add_argument("--phase-only", action="store_true",
                   help="main-term phase data from exact arithmetic, no L-values")
    _add_output_args(m)

    s = sub.add_parser("scan", help="residual table for a family of moduli")
    s.add_argument("--family", choices=("thm1", "thm2", "thm3"), required=True)
    s.add_argument("--primes", help="comma-separated odd primes")
    _add_modulus_args(s)
    s.add_argument("--psi-count", type=int, default=6, help="characters per modulus")
    _add_output_args(s)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        if args.command == "verify":
            return cmd_verify(args, out)
        if args.command == "moment":
            return cmd_moment(args, out, err)
        return cmd_scan(args, out, err)
    except (VerificationFailed, QuadratureNotConverged) as exc:
        err.write(f"check failed: {exc}\n")
        return EXIT_FAIL
    except (UsageError, CosetMomentError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE


def main_entry() -> None:
    try:
        code = main()
        sys.stdout.flush()
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); silence the final flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    sys.exit(code)


if __name__ == "__main__":
    main_entry()
