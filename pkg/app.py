import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import colorlog
import numpy as np
from dotenv import load_dotenv

from anf import BoolPoly, TruthTable, format_poly, from_truth_table, parse_poly
from annihilators import AnnihilatorBasis, IndependentSet, algebraic_immunity, analyze_filter
from ciphers import (WGT13_ANF, WGT13_TABLE, WGT13_TERMS, CipherSpec, init_phase, keystream, load_cipher,
                     random_state, wgt_anf)
from errors import EXIT_ANALYSIS, EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, UsageError, WorkbenchError
from estimator import (OMEGA_CW, OMEGA_STRASSEN, EstimateReport, baseline_cm_keystream, estimate,
                       estimate_table, render_csv, render_pretty)
from resource_monitor import GIB, ResourceMonitor
from storage import (read_keystream, read_sealed_state, save_report, sealed_state_path, write_keystream,
                     write_sealed_state, output_dir)
from workers import progress_enabled
from xl import (build_attack_system, check_attack_size, rank_report, solve_and_recover, system_residual,
                xl_linearize_streaming, xl_multiply_linearize)

# Load environment
load_dotenv(".env" if os.path.exists(".env") else "config.example.env")

VERSION = "1.0.0"

# Limits
MEMORY_CAP_GIB = float(os.getenv("FILTERXL_MEMORY_CAP_GIB", "4"))
ENUM_CAP = int(os.getenv("FILTERXL_ENUM_CAP", "20"))
THREADS = int(os.getenv("FILTERXL_THREADS", "1"))

# Estimator
OMEGA = float(os.getenv("FILTERXL_OMEGA", str(OMEGA_STRASSEN)))
SECURITY_LEVEL = int(os.getenv("FILTERXL_SECURITY_LEVEL", "128"))

# Output
LOG_LEVEL = os.getenv("FILTERXL_LOG_LEVEL", "INFO").upper()

TABLE1_DS = (4, 5, 6, 7)

log = logging.getLogger("CLI")


def setup_logging(level: str = LOG_LEVEL):
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(colorlog.ColoredFormatter(
        "%(log_color)s[%(name)s]%(reset)s %(message)s",
        log_colors={'DEBUG': 'cyan', 'INFO': 'green', 'WARNING': 'yellow', 'ERROR': 'red', 'CRITICAL': 'bold_red'}
    ))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream of numpy's default_rng, seeded with the 64-bit user seed."""
    if not 0 <= seed < 1 << 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return np.random.default_rng(seed)


# ==== ANALYSIS ====

@dataclass
class FilterAnalysis:
    spec: CipherSpec
    ai: int
    bases: Dict[int, AnnihilatorBasis]
    independent: Dict[int, IndependentSet]

    @property
    def d(self) -> int:
        return max(b.max_degree for b in self.bases.values())

    def estimate(self, D: int, omega: Optional[float] = None, security_level: Optional[int] = None) -> EstimateReport:
        return estimate(self.spec.name, self.spec.n, self.spec.m, D, self.independent[0], self.independent[1],
                        self.d, max_keystream=self.spec.max_keystream, omega=omega,
                        security_level=security_level)

    def table(self, Ds: Sequence[int], omega: Optional[float] = None,
              security_level: Optional[int] = None) -> List[EstimateReport]:
        return estimate_table(self.spec.name, self.spec.n, self.spec.m, self.independent[0], self.independent[1],
                              self.d, Ds, max_keystream=self.spec.max_keystream, omega=omega,
                              security_level=security_level)


def run_analysis(spec: CipherSpec) -> FilterAnalysis:
    """Groebner bases of both sides and their independent sets at full degree m."""
    F = spec.filter
    sides = analyze_filter(F)
    return FilterAnalysis(spec, algebraic_immunity(F), {s: v[0] for s, v in sides.items()},
                          {s: v[1] for s, v in sides.items()})


# ==== COMMANDS ====

def cmd_analyze(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    spec = load_cipher(args.cipher)
    with monitor.phase("annihilators"):
        fa = run_analysis(spec)
    report = fa.estimate(args.D, omega=args.omega, security_level=args.security_level)
    baseline = baseline_cm_keystream(spec.n, fa.ai)
    result = {
        'cipher': spec.describe(),
        'filter_anf': format_poly(spec.filter),
        'algebraic_immunity': fa.ai,
        'sides': {str(s): dict(fa.bases[s].report(),
                               s_prime_size=len(fa.independent[s]),
                               s_prime_histogram=fa.independent[s].truncated(args.D).degree_histogram)
                  for s in (0, 1)},
        'estimate': report.to_dict(),
        'baseline': {'t': baseline, 't_log2': round(math.log2(baseline), 2) if baseline else None},
        'verdict': "; ".join(report.notes) or "feasible"
    }
    if not report.feasible:
        log.warning("infeasible: t = 2^%.2f exceeds the keystream limit", report.t_log2)
    return result, EXIT_OK


def cmd_estimate(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    spec = load_cipher(args.cipher)
    with monitor.phase("annihilators"):
        fa = run_analysis(spec)
    rows = fa.table(args.D, omega=args.omega, security_level=args.security_level)
    return {'cipher': spec.name, 'rows': [r.to_dict() for r in rows],
            'csv': render_csv(rows), 'pretty': render_pretty(rows)}, EXIT_OK


def cmd_table1(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    spec = load_cipher("wg-prng")
    with monitor.phase("annihilators"):
        fa = run_analysis(spec)
    rows = fa.table(TABLE1_DS, omega=args.omega, security_level=args.security_level)
    baseline = baseline_cm_keystream(spec.n, fa.ai)
    return {'rows': [r.to_dict() for r in rows], 'csv': render_csv(rows), 'pretty': render_pretty(rows),
            'baseline': {'t': baseline, 't_log2': round(math.log2(baseline), 2)}}, EXIT_OK


def cmd_keystream(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    spec = load_cipher(args.cipher)
    rng = make_rng(args.seed)
    seed_state = random_state(spec, rng)
    state = init_phase(spec, seed_state) if spec.has_init else seed_state
    with monitor.phase("keystream"):
        bits = keystream(spec, state, args.t, enforce_limit=args.enforce_limit)
    path = args.out or os.path.join(output_dir(args.output_dir), "keystreams",
                                    f"{spec.name}_seed{args.seed}_t{args.t}.bits")
    write_keystream(path, bits)
    state_path = write_sealed_state(sealed_state_path(path), spec.name, state, seed=args.seed,
                                    extra={'t': args.t})
    return {'cipher': spec.name, 't': int(args.t), 'keystream_file': path, 'state_file': state_path}, EXIT_OK


def cmd_attack(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    spec = load_cipher(args.cipher)
    observed = read_keystream(args.keystream)
    memory_cap = int(args.memory_cap * GIB)
    with monitor.phase("annihilators"):
        fa = run_analysis(spec)
    est = fa.estimate(args.D, omega=args.omega, security_level=args.security_level)
    t = args.t or est.t
    if len(observed) < t:
        log.warning("keystream has %d bits, estimator asks for %d; proceeding", len(observed), t)
        t = len(observed)
    z = observed[:t]
    check_attack_size(spec, fa.bases, z, args.D, memory_cap=memory_cap, streaming=args.streaming)

    with monitor.phase("compose"):
        system = build_attack_system(spec, fa.bases, z, threads=args.threads, progress=args.progress)
    if args.streaming:
        with monitor.phase("linearize+eliminate (streaming)"):
            ech, index, generated = xl_linearize_streaming(system, args.D, memory_cap=memory_cap,
                                                           progress=args.progress)
        rows, solve_input = generated, ech
    else:
        with monitor.phase("linearize"):
            matrix, index = xl_multiply_linearize(system, args.D, memory_cap=memory_cap, threads=args.threads,
                                                  progress=args.progress)
        rows, generated, solve_input = matrix.rows, None, matrix
    with monitor.phase("solve"):
        result = solve_and_recover(solve_input, index, spec, z, enum_cap=args.enum_cap, memory_cap=memory_cap,
                                   progress=args.progress)

    k = min(est.k0, est.k1)
    out = {
        'cipher': spec.name,
        'D': args.D,
        't_used': int(t),
        't_estimated': est.t,
        'equations': len(system.equations),
        'recovery': result.to_dict(),
        'rank_report': rank_report(result.rank, int(t), k, rows, index.T, generated)
    }
    code = EXIT_OK if result.success else EXIT_ANALYSIS

    state_path = args.state or sealed_state_path(args.keystream)
    if os.path.exists(state_path):
        truth = read_sealed_state(state_path)['state']
        match = result.state == truth
        out['sealed_state'] = {'path': state_path, 'match': match}
        if result.success:
            fresh = keystream(spec, truth, 5 * int(t))
            out['sealed_state']['fresh_bits_match'] = bool(np.array_equal(fresh, keystream(spec, result.state, 5 * int(t))))
        if not args.streaming:
            out['sealed_state']['soundness_violations'] = system_residual(matrix, index, truth.to_bits())
        if not match:
            code = EXIT_ANALYSIS
    return out, code


# ==== SELFTEST ====

def _reverse7(p: int) -> int:
    return int(f"{p:07b}"[::-1], 2)


def _selftest_checks() -> List[Tuple[str, Callable[[], str]]]:
    cache = {}

    def wg():
        if 'wg' not in cache:
            cache['wg'] = run_analysis(load_cipher("wg-prng"))
        return cache['wg']

    def anf_fidelity():
        fixture = parse_poly(WGT13_ANF, 7)
        assert wgt_anf() == fixture, "computed ANF differs from the published one"
        assert len(fixture) == WGT13_TERMS, f"expected {WGT13_TERMS} terms, got {len(fixture)}"
        reversed_table = np.array([WGT13_TABLE[_reverse7(p)] for p in range(128)], dtype=np.uint8)
        assert from_truth_table(TruthTable(7, reversed_table)) != fixture, "reversed bit mapping also matches"
        return f"{WGT13_TERMS} terms, bit-exact"

    def immunity():
        F = wgt_anf()
        a0 = algebraic_immunity(F)
        a1 = algebraic_immunity(F + BoolPoly.one(7))
        assert a0 == a1 == 3, f"AI = {a0}/{a1}"
        return "AI(WGT) = AI(WGT+1) = 3"

    def gb_shape():
        for s in (0, 1):
            h = wg().bases[s].degree_histogram()
            assert h == {3: 1, 4: 30}, f"side {s}: {h}"
        return "31 members, {3: 1, 4: 30} on both sides"

    def s_prime_shape():
        for s in (0, 1):
            h = wg().independent[s].degree_histogram
            assert h == {3: 1, 4: 34, 5: 21, 6: 7, 7: 1}, f"side {s}: {h}"
        return "64 members on both sides"

    def k_table():
        rows = wg().table(TABLE1_DS)
        got = [r.k0 for r in rows]
        assert got == [287, 40502, 3756585, 258089371], got
        assert all(r.k0 == r.k1 for r in rows), "k'0 != k'1"
        return str(got)

    def table1():
        rows = wg().table(TABLE1_DS, omega=OMEGA_STRASSEN)
        want_t = [19.31, 17.84, 16.72, 15.80]
        want_c = [77.06, 92.98, 108.15, 122.68]
        for r, wt, wc in zip(rows, want_t, want_c):
            assert abs(r.t_log2 - wt) <= 0.02, f"D={r.D}: log2 t = {r.t_log2:.3f}"
            assert abs(r.complexity_log2 - wc) <= 0.02, f"D={r.D}: log2 cost = {r.complexity_log2:.3f}"
        assert [r.feasible for r in rows[:3]] == [False, True, True], "feasibility verdicts"
        return "within 0.02"

    def baseline():
        b = baseline_cm_keystream(259, 3)
        assert b == 2862209 and abs(math.log2(b) - 21.45) <= 0.01, b
        return f"C(259,3) = {b}"

    return [("WGT ANF fidelity", anf_fidelity), ("algebraic immunity", immunity),
            ("Groebner basis shape", gb_shape), ("S' shape", s_prime_shape), ("k' table", k_table),
            ("WG-PRNG table", table1), ("baseline", baseline)]


def cmd_selftest(args, monitor: ResourceMonitor) -> Tuple[Dict, int]:
    results = []
    for name, check in _selftest_checks():
        start = time.time()
        try:
            detail = check()
            ok = True
        except AssertionError as e:
            detail, ok = str(e), False
        results.append({'check': name, 'passed': ok, 'detail': detail, 'seconds': round(time.time() - start, 3)})
        log.info("%s %s: %s", "✓" if ok else "✗", name, detail)
    failed = sum(not r['passed'] for r in results)
    return {'checks': results, 'failed': failed}, EXIT_OK if not failed else EXIT_ANALYSIS


COMMANDS = {
    'analyze': cmd_analyze,
    'estimate': cmd_estimate,
    'keystream': cmd_keystream,
    'attack': cmd_attack,
    'table1': cmd_table1,
    'selftest': cmd_selftest
}


# ==== ARGUMENTS ====

def _omega(text: str) -> float:
    named = {'strassen': OMEGA_STRASSEN, 'cw': OMEGA_CW}
    if text.lower() in named:
        return named[text.lower()]
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"omega must be a number, 'strassen' or 'cw', got {text!r}")


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad arguments as UsageError (exit 1) instead of exiting with 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("--memory-cap", type=float, default=MEMORY_CAP_GIB,
                        help=f"memory budget in GiB (default {MEMORY_CAP_GIB:g})")
    common.add_argument("--enum-cap", type=int, default=ENUM_CAP,
                        help=f"largest residual dimension enumerated (default {ENUM_CAP})")
    common.add_argument("--threads", type=int, default=THREADS, help=f"worker threads (default {THREADS})")
    common.add_argument("--omega", type=_omega, default=OMEGA,
                        help="matrix-multiplication exponent: number, 'strassen' (log2 7) or 'cw' (2.3728596)")
    common.add_argument("--security-level", type=int, default=SECURITY_LEVEL,
                        help=f"bits of claimed security for the brute-force note (default {SECURITY_LEVEL})")
    common.add_argument("--output-dir", default=None, help="run directory (default $FILTERXL_OUTPUT_DIR)")
    common.add_argument("--no-save", action="store_true", help="do not write a JSON report")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = ArgumentParser(prog="filterxl", description="Algebraic-attack workbench for filter generators")
    parser.add_argument("--version", action="version", version=f"filterxl {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="annihilators, AI, k' and t for one D")
    p.add_argument("cipher", help="wg-prng, toy3, toy5 or a cipher-spec file")
    p.add_argument("--D", type=int, default=5, help="XL degree bound (default 5)")

    p = sub.add_parser("estimate", parents=[common], help="estimator table over several D")
    p.add_argument("cipher")
    p.add_argument("--D", type=int, nargs="+", default=list(TABLE1_DS), help="degree bounds (default 4 5 6 7)")
    p.add_argument("--format", choices=("pretty", "csv"), default="pretty")

    p = sub.add_parser("keystream", parents=[common], help="generate a keystream and a sealed state")
    p.add_argument("cipher")
    p.add_argument("--seed", type=int, required=True, help="64-bit seed for numpy's PCG64")
    p.add_argument("--t", type=int, required=True, help="number of keystream bits")
    p.add_argument("--out", default=None, help="keystream file (default under the run directory)")
    p.add_argument("--enforce-limit", action="store_true", help="refuse to exceed the cipher's keystream limit")

    p = sub.add_parser("attack", parents=[common], help="recover the state from a keystream file")
    p.add_argument("cipher")
    p.add_argument("keystream", help="keystream file (ASCII bits)")
    p.add_argument("--D", type=int, default=5)
    p.add_argument("--t", type=int, default=None, help="bits to use (default: the estimator's t)")
    p.add_argument("--state", default=None, help="sealed state file to verify against")
    p.add_argument("--streaming", action="store_true", help="eliminate rows incrementally to save memory")

    p = sub.add_parser("table1", parents=[common], help="WG-PRNG keystream and cost table, D = 4..7")
    p.add_argument("--format", choices=("pretty", "csv"), default="csv")

    sub.add_parser("selftest", parents=[common], help="fast fidelity checks")
    return parser


def _pretty(command: str, result: Dict, args) -> str:
    if command in ("estimate", "table1"):
        return result['csv'] if getattr(args, "format", "pretty") == "csv" else result['pretty']
    if command == "selftest":
        return "".join(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']}: {r['detail']}\n" for r in result['checks'])
    return json.dumps(result, indent=2, default=str) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    level = "DEBUG" if args.verbose else "WARNING" if args.quiet or args.json else LOG_LEVEL
    setup_logging(level)
    args.progress = progress_enabled() and not args.json
    monitor = ResourceMonitor()
    log.debug("filterxl %s: %s", VERSION, args.command)
    try:
        if args.threads < 1 or args.enum_cap < 0 or args.memory_cap <= 0:
            raise UsageError("--threads, --enum-cap and --memory-cap must be positive")
        result, code = COMMANDS[args.command](args, monitor)
    except WorkbenchError as e:
        log.error("✗ %s", e)
        if args.json:
            print(json.dumps(e.to_dict(), indent=2))
        return e.exit_code
    except MemoryError as e:
        log.error("✗ out of memory: %s", e)
        if args.json:
            print(json.dumps({'success': False, 'error': f"out of memory: {e}"}, indent=2))
        return EXIT_RESOURCE

    config = {k: v for k, v in vars(args).items() if k not in ("progress",)}
    report = {
        'tool': "filterxl",
        'version': VERSION,
        'command': args.command,
        'config': config,
        'wall_time_s': round(monitor.wall_time(), 3),
        'monitor': monitor.get_all_status(),
        'success': code == EXIT_OK,
        'result': result
    }
    if not args.no_save:
        report['report_file'] = save_report(report, args.command, args.output_dir)
    sys.stdout.write(json.dumps(report, indent=2, default=str) + "\n" if args.json else _pretty(args.command, result, args))
    return code


if __name__ == "__main__":
    sys.exit(main())
