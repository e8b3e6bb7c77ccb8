"""
Executable checks of the rank bounds for entrywise sine modulation.

For a nonzero matrix ``A`` with smallest nonzero magnitude ``a0`` the
checks compare

* ``rank(sin(w A))``      against ``w (a0 / ||sqrt|A| ||_op)**2``      (lower)
* ``||sin(w A)||_F**2``   against ``(w a0 / 2)**2``                    (lower)
* ``||sin(w A)||_op**2``  against ``w ||sqrt|A| ||_op**2``             (upper)

The two lower bounds are only claimed on ``0 <= w <= pi / (3 a0)``.
Both the printed statement and the form the argument actually supports
are recorded; they differ by constant factors (see ``BoundReport``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyGrid, ZeroMatrix
from .linalg import (
    SpectrumReport,
    _as_float_matrix,
    elementwise_map,
    min_nonzero_abs,
    numerical_rank,
    singular_values,
    spectrum_report,
    sqrt_abs,
)

__all__ = [
    "BoundReport",
    "OmegaSearchResult",
    "omega_upper_limit",
    "prop1_check",
    "lemma_frob_lower_check",
    "lemma_op_upper_check",
    "default_omega_grid",
    "find_omega0",
    "theorem_factors",
    "nonlinearity_spectrum_compare",
    "frequency_spectrum_sweep",
    "sweep_csv",
    "compare_csv",
    "random_trial_matrix",
    "verify_bounds",
]

LOWER = ("prop1", "lemma_frob_lower")


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of one inequality.

    ``rhs``/``holds`` use the form the checker is judged on: the printed
    statement for ``prop1``, the argument-supported form for
    ``lemma_frob_lower``.  ``rhs_stated``/``rhs_proof`` carry both forms.
    ``holds`` is ``None`` when ``omega`` lies outside the validity range.
    """

    bound_name: str
    omega: float
    lhs: float
    rhs: float
    condition_met: bool
    holds: Optional[bool]
    rhs_stated: float
    rhs_proof: float
    holds_stated: Optional[bool] = None
    holds_proof: Optional[bool] = None

    @property
    def margin(self) -> float:
        """Signed slack, positive when the bound holds."""
        if self.bound_name in LOWER:
            return self.lhs - self.rhs
        return self.rhs - self.lhs

    def to_dict(self):
        return asdict(self)


def _compare(name, lhs, rhs, met):
    if not met:
        return None
    if name in LOWER:
        return bool(lhs >= rhs)
    return bool(lhs <= rhs * (1.0 + 1e-9))


def omega_upper_limit(a) -> float:
    """``pi / (3 a0)``, the end of the lower bounds' validity range."""
    return math.pi / (3.0 * min_nonzero_abs(a))


def _report(name, omega, lhs, rhs_stated, rhs_proof, met, primary):
    rhs = rhs_stated if primary == "stated" else rhs_proof
    return BoundReport(
        bound_name=name,
        omega=float(omega),
        lhs=float(lhs),
        rhs=float(rhs),
        condition_met=bool(met),
        holds=_compare(name, lhs, rhs, met),
        rhs_stated=float(rhs_stated),
        rhs_proof=float(rhs_proof),
        holds_stated=_compare(name, lhs, rhs_stated, met),
        holds_proof=_compare(name, lhs, rhs_proof, met),
    )


def prop1_check(a, omega: float, *, _sqrt_op: Optional[float] = None,
                _sin_sv: Optional[np.ndarray] = None) -> BoundReport:
    """Rank lower bound for ``sin(omega a)``.

    The argument chains the two lemmas through the stable rank, which
    gives ``w a0**2 / (4 ||sqrt|A| ||_op**2)``; the printed bound omits
    the 4.  ``rhs`` is the printed form.
    """
    a = _as_float_matrix(a)
    a0 = min_nonzero_abs(a)
    if omega < 0:
        raise ValueError("omega must be non-negative")
    sqrt_op = _sqrt_op if _sqrt_op is not None else float(singular_values(sqrt_abs(a))[0])
    s = np.sin(omega * a)
    sv = _sin_sv if _sin_sv is not None else singular_values(s)
    lhs = numerical_rank(s, sv=sv) if sv[0] > 0 else 0
    stated = omega * (a0 / sqrt_op) ** 2
    met = omega <= math.pi / (3.0 * a0)
    return _report("prop1", omega, lhs, stated, stated / 4.0, met, "stated")


def lemma_frob_lower_check(a, omega: float) -> BoundReport:
    """Frobenius lower bound.

    The printed statement reads ``||sin(w A)||_F**2 >= w**2 a0``; the
    argument establishes ``sin(w a0) >= w a0 / 2`` on the validity range,
    i.e. ``(w a0 / 2)**2``.  ``rhs`` is the argument-supported form.
    """
    a = _as_float_matrix(a)
    a0 = min_nonzero_abs(a)
    s = np.sin(omega * a)
    lhs = float(np.sum(s * s))
    proof = (omega * a0 / 2.0) ** 2
    stated = omega**2 * a0
    met = 0.0 < omega <= math.pi / (3.0 * a0)
    return _report("lemma_frob_lower", omega, lhs, stated, proof, met, "proof")


def lemma_op_upper_check(a, omega: float, *, _sqrt_op: Optional[float] = None,
                         _sin_sv: Optional[np.ndarray] = None) -> BoundReport:
    """Operator-norm upper bound ``||sin(w A)||_op**2 <= w ||sqrt|A| ||_op**2``.

    Valid for every ``w >= 0``; ``holds`` allows ``1e-9`` relative slack.
    """
    a = _as_float_matrix(a)
    if omega < 0:
        raise ValueError("omega must be non-negative")
    sqrt_op = _sqrt_op if _sqrt_op is not None else float(singular_values(sqrt_abs(a))[0])
    sv = _sin_sv if _sin_sv is not None else singular_values(np.sin(omega * a))
    lhs = float(sv[0]) ** 2
    rhs = omega * sqrt_op**2
    return _report("lemma_op_upper", omega, lhs, rhs, rhs, True, "stated")


# --------------------------------------------------------------------------
# rank lift search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OmegaSearchResult:
    base_rank: int
    omega_grid: list
    ranks: list
    omega0: Optional[float]

    def to_dict(self):
        return asdict(self)


def default_omega_grid(lo: float = 1.0, hi: float = 1e6, num: int = 40) -> np.ndarray:
    return np.geomspace(lo, hi, num)


def find_omega0(u, v, omega_grid=None, tol: Optional[float] = None) -> OmegaSearchResult:
    """Smallest grid frequency at which ``sin(w U V^T)`` out-ranks ``U V^T``.

    Raises :class:`EmptyGrid` for an empty grid; the grid must be
    ascending and positive.
    """
    grid = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("omega grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("omega grid must be strictly ascending and positive")
    prod = np.asarray(u, dtype=float) @ np.asarray(v, dtype=float).T
    base = numerical_rank(prod, tol)
    ranks = [numerical_rank(np.sin(w * prod), tol) for w in grid]
    omega0 = next((float(w) for w, r in zip(grid, ranks) if r > base), None)
    return OmegaSearchResult(base_rank=base, omega_grid=[float(w) for w in grid],
                             ranks=ranks, omega0=omega0)


def theorem_factors(m: int, n: int, k: int, big_n: float, seed: int,
                    dist: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """Draw ``U`` (m x k) and ``V`` (n x k) for the rank-lift setting.

    ``dist="uniform"`` draws from ``U(-1/N, 1/N)`` and requires ``N > k``.
    The normal variant is ambiguous about its scale, so both readings are
    available and experimental: ``"normal_var_n"`` (variance ``N``) and
    ``"normal_var_inv_n2"`` (variance ``1/N**2``).
    """
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        if big_n <= k:
            raise ValueError(f"need N > k (N={big_n}, k={k})")
        return (rng.uniform(-1 / big_n, 1 / big_n, (m, k)),
                rng.uniform(-1 / big_n, 1 / big_n, (n, k)))
    if dist == "normal_var_n":
        sd = math.sqrt(big_n)
    elif dist == "normal_var_inv_n2":
        sd = 1.0 / big_n
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return rng.normal(0, sd, (m, k)), rng.normal(0, sd, (n, k))


# --------------------------------------------------------------------------
# spectra under nonlinearities / frequencies
# --------------------------------------------------------------------------


def nonlinearity_spectrum_compare(u, v, omega: float, fns: Iterable[str],
                                  tol: Optional[float] = None) -> dict[str, SpectrumReport]:
    """Spectrum of ``phi(omega U V^T)`` for each requested ``phi``.

    The unmodulated product is always included under ``"identity"``.
    """
    fns = list(fns)
    if not fns:
        raise ValueError("need at least one function kind")
    prod = np.asarray(u, dtype=float) @ np.asarray(v, dtype=float).T
    out = {"identity": spectrum_report(prod, tol)}
    for fn in fns:
        if fn == "identity":
            continue
        out[fn] = spectrum_report(elementwise_map(prod, fn, omega), tol)
    return out


def frequency_spectrum_sweep(u, v, omega_list: Iterable[float],
                             tol: Optional[float] = None) -> dict[float, SpectrumReport]:
    prod = np.asarray(u, dtype=float) @ np.asarray(v, dtype=float).T
    return {float(w): spectrum_report(np.sin(w * prod), tol) for w in omega_list}


def _sr(rep: SpectrumReport):
    return "" if rep.stable_rank is None else repr(rep.stable_rank)


def sweep_csv(sweep: dict[float, SpectrumReport]) -> str:
    """CSV with columns ``omega,stable_rank,numerical_rank,sigma_max``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega", "stable_rank", "numerical_rank", "sigma_max"])
    for omega, rep in sweep.items():
        w.writerow([repr(float(omega)), _sr(rep), rep.numerical_rank, repr(rep.operator_norm)])
    return buf.getvalue()


def compare_csv(reports: dict, omega: float) -> str:
    """CSV with columns ``fn,omega,stable_rank,numerical_rank,sigma_max``.

    ``reports`` maps a function kind to a SpectrumReport, or to a mapping
    of omega -> SpectrumReport when several frequencies were compared.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fn", "omega", "stable_rank", "numerical_rank", "sigma_max"])
    for fn, rep in reports.items():
        items = rep.items() if isinstance(rep, dict) else [(omega, rep)]
        for om, r in items:
            w.writerow([fn, repr(float(om)), _sr(r), r.numerical_rank, repr(r.operator_norm)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# randomized bound sweep
# --------------------------------------------------------------------------

MATRIX_FAMILIES = ("uniform", "normal", "lowrank", "integer")


def random_trial_matrix(rng: np.random.Generator, min_size: int = 8, max_size: int = 256):
    """Draw one test matrix: shape uniform in ``[min_size, max_size]**2``.

    Families: dense uniform with random scale, dense Gaussian, a low-rank
    product of ``U(-1/N, 1/N)`` factors with ``N > k``, and small signed
    integers (many exact zeros, ``a0 = 1``).
    """
    m = int(rng.integers(min_size, max_size + 1))
    n = int(rng.integers(min_size, max_size + 1))
    family = MATRIX_FAMILIES[int(rng.integers(len(MATRIX_FAMILIES)))]
    if family == "uniform":
        scale = 10.0 ** rng.uniform(-3, 2)
        a = rng.uniform(-scale, scale, (m, n))
    elif family == "normal":
        a = rng.normal(0.0, 10.0 ** rng.uniform(-3, 2), (m, n))
    elif family == "lowrank":
        k = int(rng.integers(1, max(2, min(m, n) // 4) + 1))
        big_n = float(max(m, n))
        a = rng.uniform(-1 / big_n, 1 / big_n, (m, k)) @ rng.uniform(-1 / big_n, 1 / big_n, (n, k)).T
    else:
        a = rng.integers(-3, 4, (m, n)).astype(float)
    return family, a


def _sample_valid_omega(rng, limit):
    # half uniform on [0, limit], half log-uniform over six decades below it
    if rng.random() < 0.5:
        return float(rng.uniform(0.0, limit))
    return float(limit * 10.0 ** rng.uniform(-6, 0))


@dataclass
class BoundTally:
    checked: int = 0
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    worst_margin: Optional[float] = None
    worst_lhs: Optional[float] = None
    worst_rhs: Optional[float] = None
    worst_omega: Optional[float] = None
    failures: list = field(default_factory=list)

    def add(self, rep: BoundReport, context=None):
        if rep.holds is None:
            self.skipped += 1
            return
        self.checked += 1
        if rep.holds:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 20:
                self.failures.append({"omega": rep.omega, "lhs": rep.lhs, "rhs": rep.rhs,
                                      **(context or {})})
        # scale-free slack: relative to the larger side
        denom = max(abs(rep.lhs), abs(rep.rhs), 1e-300)
        margin = rep.margin / denom
        if self.worst_margin is None or margin < self.worst_margin:
            self.worst_margin = float(margin)
            self.worst_lhs, self.worst_rhs, self.worst_omega = rep.lhs, rep.rhs, rep.omega

    def to_dict(self):
        return asdict(self)


def verify_bounds(trials: int, seed: int = 42, matrices: Optional[Iterable] = None,
                  min_size: int = 8, max_size: int = 256) -> dict:
    """Randomized sweep of all three inequalities.

    Each trial draws one matrix, one frequency inside the validity range
    (used by all three checks) and one frequency up to 100x beyond it
    (upper bound only).  ``matrices`` overrides the generator; zero
    matrices are counted as skipped, not failed.
    """
    rng = np.random.default_rng(seed)
    tallies = {name: BoundTally() for name in ("prop1", "lemma_frob_lower", "lemma_op_upper")}
    zero_skipped = 0
    source = iter(matrices) if matrices is not None else None
    for t in range(trials):
        if source is not None:
            try:
                a = _as_float_matrix(np.asarray(next(source), dtype=float))
            except StopIteration:
                break
            family = "given"
        else:
            family, a = random_trial_matrix(rng, min_size, max_size)
        try:
            limit = omega_upper_limit(a)
        except ZeroMatrix:
            zero_skipped += 1
            for tally in tallies.values():
                tally.skipped += 1
            continue
        ctx = {"trial": t, "family": family, "shape": list(a.shape)}
        sqrt_op = float(singular_values(sqrt_abs(a))[0])
        w_in = limit if rng.random() < 0.05 else _sample_valid_omega(rng, limit)
        sin_sv = singular_values(np.sin(w_in * a))
        tallies["prop1"].add(prop1_check(a, w_in, _sqrt_op=sqrt_op, _sin_sv=sin_sv), ctx)
        tallies["lemma_frob_lower"].add(lemma_frob_lower_check(a, w_in), ctx)
        tallies["lemma_op_upper"].add(
            lemma_op_upper_check(a, w_in, _sqrt_op=sqrt_op, _sin_sv=sin_sv), ctx)
        w_out = float(limit * rng.uniform(1.0, 100.0))
        tallies["lemma_op_upper"].add(lemma_op_upper_check(a, w_out, _sqrt_op=sqrt_op), ctx)
    return {
        "trials": trials,
        "seed": seed,
        "zero_matrices_skipped": zero_skipped,
        "bounds": {name: t.to_dict() for name, t in tallies.items()},
        "all_passed": all(t.failed == 0 for t in tallies.values()),
    }
