"""
Dense real-matrix primitives: singular values, norms, ranks and
elementwise maps.

Matrices are plain 2-D ``float64`` numpy arrays.  :func:`as_matrix`
validates and freezes them; every other function here accepts anything
``as_matrix`` accepts and never mutates its input.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NonFiniteMatrix, UnknownFunction, ZeroMatrix

__all__ = [
    "as_matrix",
    "singular_values",
    "jacobi_singular_values",
    "frobenius_norm",
    "operator_norm",
    "stable_rank",
    "numerical_rank",
    "default_rank_tolerance",
    "min_nonzero_abs",
    "sqrt_abs",
    "sine_modulate",
    "elementwise_map",
    "FUNCTION_KINDS",
    "SpectrumReport",
    "spectrum_report",
]

EPS = np.finfo(np.float64).eps

FUNCTION_KINDS = ("sine", "relu", "sigmoid", "tanh", "identity")


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a read-only, finite, 2-D float64 array.

    A 1-D input is not promoted; callers must be explicit about shape.
    """
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteMatrix("matrix contains NaN or Inf entries")
    arr.flags.writeable = False
    return arr


def _as_float_matrix(a) -> np.ndarray:
    # cheap path for internal callers that already hold a float64 2-D array
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and a.ndim == 2:
        if not np.all(np.isfinite(a)):
            raise NonFiniteMatrix("matrix contains NaN or Inf entries")
        return a
    return as_matrix(a)


# --------------------------------------------------------------------------
# singular values
# --------------------------------------------------------------------------


def _round_robin_pairs(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament ordering of column pairs; each round pairs every column once."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_singular_values(a, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Singular values by one-sided (Hestenes) Jacobi rotations.

    Columns are orthogonalised pairwise; all disjoint pairs of a round are
    rotated at once, so one sweep costs ``n - 1`` vectorised rounds.  The
    singular values are the final column norms.  High relative accuracy,
    but much slower than LAPACK for large matrices.

    Parameters
    ----------
    a : array_like, 2-D
    tol : float
        Stop once every pair satisfies ``|a_p . a_q| <= tol * |a_p| |a_q|``.
    max_sweeps : int

    Returns
    -------
    numpy.ndarray
        ``min(m, n)`` values, descending.
    """
    a = _as_float_matrix(a)
    work = np.array(a.T if a.shape[0] < a.shape[1] else a, dtype=np.float64)
    m, n = work.shape
    k = n
    if n == 1:
        return np.array([np.sqrt(np.sum(work * work))])
    if n % 2:
        work = np.hstack([work, np.zeros((m, 1))])
        n += 1
    rounds = _round_robin_pairs(n)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap = work[:, p]
            aq = work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
        if not rotated:
            break
    sv = np.sqrt(np.einsum("ij,ij->j", work, work))
    return np.sort(sv)[::-1][:k]


def singular_values(a, method: str = "lapack") -> np.ndarray:
    """All ``min(m, n)`` singular values of ``a`` in descending order.

    ``method="lapack"`` (default) calls LAPACK through numpy;
    ``method="jacobi"`` uses :func:`jacobi_singular_values`.
    The zero matrix yields all zeros.
    """
    a = _as_float_matrix(a)
    if method == "lapack":
        sv = np.linalg.svd(a, compute_uv=False)
    elif method == "jacobi":
        sv = jacobi_singular_values(a)
    else:
        raise ValueError(f"unknown singular value method {method!r}")
    sv = np.clip(sv, 0.0, None)
    return np.sort(sv)[::-1]


def frobenius_norm(a) -> float:
    # scaled to avoid overflow / underflow of the squares
    return float(np.linalg.norm(_as_float_matrix(a)))


def operator_norm(a) -> float:
    """Largest singular value (spectral norm)."""
    return float(singular_values(a)[0])


def stable_rank(a) -> float:
    """``||a||_F**2 / ||a||_op**2``; raises :class:`ZeroMatrix` for ``a == 0``."""
    a = _as_float_matrix(a)
    sv = singular_values(a)
    if sv[0] == 0.0:
        raise ZeroMatrix("stable rank is undefined for the zero matrix")
    # normalise before squaring so tiny or huge entries do not under/overflow
    r = a / sv[0]
    return float(np.sum(r * r))


def default_rank_tolerance(shape: Sequence[int], sigma_max: float) -> float:
    """Conventional cut ``max(m, n) * sigma_max * eps``."""
    return max(shape) * sigma_max * EPS


def numerical_rank(a, tol: Optional[float] = None, sv: Optional[np.ndarray] = None) -> int:
    """Number of singular values strictly above a threshold.

    Parameters
    ----------
    a : array_like, 2-D
    tol : float, optional
        Absolute threshold.  ``None`` selects ``max(m, n) * sigma_max * eps``.
    sv : numpy.ndarray, optional
        Precomputed singular values of ``a`` (skips the decomposition).
    """
    a = _as_float_matrix(a)
    if sv is None:
        sv = singular_values(a)
    if tol is None:
        tol = default_rank_tolerance(a.shape, sv[0])
    return int(np.count_nonzero(sv > tol))


def min_nonzero_abs(a) -> float:
    """Smallest ``|a_ij|`` over the nonzero entries."""
    a = _as_float_matrix(a)
    mags = np.abs(a[a != 0.0])
    if mags.size == 0:
        raise ZeroMatrix("matrix has no nonzero entries")
    return float(mags.min())


def sqrt_abs(a) -> np.ndarray:
    """Entrywise ``sqrt(|a_ij|)``."""
    return np.sqrt(np.abs(_as_float_matrix(a)))


def sine_modulate(a, omega: float) -> np.ndarray:
    """Entrywise ``sin(omega * a_ij)``."""
    if omega < 0:
        raise ValueError("omega must be non-negative")
    return np.sin(omega * _as_float_matrix(a))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_MAPS = {
    "sine": np.sin,
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "identity": lambda x: x,
}


def elementwise_map(a, fn_kind: str, omega: float = 1.0) -> np.ndarray:
    """Entrywise ``phi(omega * a_ij)`` for ``phi`` named by ``fn_kind``."""
    try:
        fn = _MAPS[fn_kind]
    except KeyError:
        raise UnknownFunction(
            f"unknown function {fn_kind!r}; expected one of {FUNCTION_KINDS}"
        ) from None
    return fn(omega * _as_float_matrix(a))


# --------------------------------------------------------------------------
# spectrum reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    singular_values: list
    sv_normalized: list
    frobenius_norm: float
    operator_norm: float
    # None for the zero matrix, where the ratio is undefined
    stable_rank: Optional[float]
    numerical_rank: int
    rank_tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumReport":
        return cls(**d)

    def sigma_csv(self) -> str:
        """Single-column CSV of the singular values, header ``sigma``."""
        return _column_csv("sigma", self.singular_values)

    def normalized_csv(self) -> str:
        return _column_csv("sigma_normalized", self.sv_normalized)


def _column_csv(header: str, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([header])
    for v in values:
        w.writerow([repr(float(v))])
    return buf.getvalue()


def spectrum_report(a, tol: Optional[float] = None) -> SpectrumReport:
    """Collect the singular spectrum and derived ranks of ``a``.

    When ``tol`` is ``None`` the numerical rank uses the default cut
    ``max(m, n) * sigma_max * eps``; for the zero matrix the reported
    tolerance falls back to ``max(m, n) * eps`` so it stays positive.
    """
    a = _as_float_matrix(a)
    sv = singular_values(a)
    smax = float(sv[0])
    if tol is None:
        tol = default_rank_tolerance(a.shape, smax) if smax > 0 else max(a.shape) * EPS
    fro = float(np.linalg.norm(a))
    if smax > 0:
        normalized = sv / smax
        r = a / smax
        sr = np.sum(r * r)
    else:
        normalized = np.zeros_like(sv)
        sr = None
    return SpectrumReport(
        singular_values=[float(x) for x in sv],
        sv_normalized=[float(x) for x in normalized],
        frobenius_norm=fro,
        operator_norm=smax,
        stable_rank=None if sr is None else float(sr),
        numerical_rank=int(np.count_nonzero(sv > tol)),
        rank_tolerance=float(tol),
    )
