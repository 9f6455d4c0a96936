"""Closed-form counts for the attack: k', keystream requirement t, XL sizes, cost."""
import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from anf import monomial_count
from annihilators import IndependentSet
from errors import AnalysisError, UsageError

log = logging.getLogger("ESTIMATOR")

IndependentSetLike = Union[IndependentSet, Iterable[int]]

OMEGA_STRASSEN = math.log2(7)
OMEGA_CW = 2.3728596
DEFAULT_SECURITY_LEVEL = 128
# "no better than exhaustive search" once the cost is within this many bits of the security level
DEFAULT_BRUTE_FORCE_MARGIN = 8.0


def default_omega() -> float:
    return float(os.getenv("FILTERXL_OMEGA", OMEGA_STRASSEN))


def default_security_level() -> int:
    return int(os.getenv("FILTERXL_SECURITY_LEVEL", DEFAULT_SECURITY_LEVEL))


def _degrees(s: IndependentSetLike) -> List[int]:
    if isinstance(s, IndependentSet):
        return [int(p.degree) for p in s.polys]
    return [int(d) for d in s]


def k_prime(s: IndependentSetLike, n: int, m: int, D: int) -> int:
    """sum over f in s of sum_{i <= D - deg f} C(n - m, i); f with deg f > D adds nothing.

    s is an independent set or just the degrees of its members.
    """
    if n < m:
        raise UsageError(f"n={n} is smaller than the filter width m={m}")
    total = 0
    for deg in _degrees(s):
        if deg <= D:
            total += sum(comb(n - m, i) for i in range(D - deg + 1))
    return total


def required_keystream(k0: int, k1: int, n: int, D: int) -> int:
    """t = ceil(T / min(k0, k1))."""
    k = min(k0, k1)
    if k <= 0:
        raise AnalysisError("no independent annihilator equations per clock (k' = 0)")
    T = monomial_count(n, D)
    return -(-T // k)


def xl_size_estimates(t: int, n: int, d: int, D: int) -> Tuple[int, int]:
    """(N, T): equations after multiplication and monomials up to degree D."""
    if D < d:
        raise UsageError(f"D={D} is below the equation degree d={d}")
    return t * monomial_count(n, D - d), monomial_count(n, D)


def complexity_log2(T: int, omega: Optional[float] = None) -> float:
    """omega * log2(T) for a T-column elimination."""
    if T < 1:
        raise UsageError("T must be at least 1")
    omega = default_omega() if omega is None else omega
    return omega * math.log2(T)


def baseline_cm_keystream(n: int, e: int) -> int:
    """Keystream needed with one degree-e annihilator: C(n, e)."""
    if not 0 <= e <= n:
        raise UsageError(f"need 0 <= e <= n, got e={e}, n={n}")
    return comb(n, e)


@dataclass
class EstimateReport:
    cipher: str
    D: int
    n: int
    m: int
    d: int
    k0: int
    k1: int
    t: int
    T: int
    N: int
    omega: float
    complexity_log2: float
    max_keystream: Optional[int]
    security_level: int
    feasible: bool
    worse_than_brute_force: bool
    notes: List[str] = field(default_factory=list)

    @property
    def t_log2(self) -> float:
        return math.log2(self.t)

    @property
    def k_times_t(self) -> int:
        return self.t * min(self.k0, self.k1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d['t_log2'] = round(self.t_log2, 2)
        d['complexity_log2'] = round(self.complexity_log2, 2)
        return d


def estimate(cipher: str, n: int, m: int, D: int, s0: IndependentSetLike, s1: IndependentSetLike,
             d: int, max_keystream: Optional[int] = None, omega: Optional[float] = None,
             security_level: Optional[int] = None,
             brute_force_margin: float = DEFAULT_BRUTE_FORCE_MARGIN) -> EstimateReport:
    """Full report for one (cipher, D); s0 and s1 are the independent sets of the two sides."""
    omega = default_omega() if omega is None else omega
    security_level = default_security_level() if security_level is None else security_level
    k0 = k_prime(s0, n, m, D)
    k1 = k_prime(s1, n, m, D)
    t = required_keystream(k0, k1, n, D)
    N, T = xl_size_estimates(t, n, min(d, D), D)
    # cost counts the top-degree monomials C(n, D); t and N use the full T
    cost = complexity_log2(comb(n, min(D, n)), omega)
    feasible = max_keystream is None or t <= max_keystream
    worse = cost >= security_level - brute_force_margin
    notes = []
    if not feasible:
        notes.append(f"infeasible: t > 2^{math.log2(max_keystream):g}")
    if worse:
        notes.append(f"worse than brute force at the {security_level}-bit level")
    log.debug("%s D=%d: k'=%d/%d t=%d log2 cost %.2f", cipher, D, k0, k1, t, cost)
    return EstimateReport(cipher, D, n, m, d, k0, k1, t, T, N, omega, cost, max_keystream,
                          security_level, feasible, worse, notes)


def estimate_table(cipher: str, n: int, m: int, s0: IndependentSetLike, s1: IndependentSetLike, d: int,
                   Ds: Iterable[int], **kwargs) -> List[EstimateReport]:
    return [estimate(cipher, n, m, D, s0, s1, d, **kwargs) for D in Ds]


TABLE_COLUMNS = ("D", "k0", "k1", "t", "log2_t", "log2_complexity", "feasible")


def _row(r: EstimateReport) -> List:
    return [r.D, r.k0, r.k1, r.t, f"{r.t_log2:.2f}", f"{r.complexity_log2:.2f}",
            "yes" if r.feasible else "no"]


def render_csv(reports: Sequence[EstimateReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for r in reports:
        writer.writerow(_row(r))
    return buf.getvalue()


def render_pretty(reports: Sequence[EstimateReport]) -> str:
    rows = [list(TABLE_COLUMNS)] + [[str(c) for c in _row(r)] for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    for r in reports:
        for note in r.notes:
            lines.append(f"D={r.D}: {note}")
    return "\n".join(lines) + "\n"
