"""Digital reference detectors and equivalent FLOP accounting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveLambda, SingularGram, SingularMatrix
from .linalg import solve_dense


@dataclass(frozen=True)
class DetectorKind:
    variant: str = "MMSE"
    rho: float = 0.0

    def __post_init__(self):
        v = self.variant.upper()
        if v not in ("ZF", "MMSE"):
            raise ValueError(f"unknown detector variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


def _t(M):
    return np.swapaxes(M, -1, -2)


def _solve(M, rhs):
    try:
        return solve_dense(M, rhs)
    except SingularMatrix as exc:
        raise SingularGram(str(exc)) from exc


def detect_zf(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(H^T H)^{-1} H^T y``."""
    return _solve(_t(H) @ H, np.einsum("...ij,...i->...j", H, y))


def detect_mmse(H: np.ndarray, y: np.ndarray, rho) -> np.ndarray:
    """``(H^T H + rho I)^{-1} H^T y``; ``rho`` may be batched."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    n = H.shape[-1]
    M = _t(H) @ H + (rho[..., None, None] if rho.ndim else rho) * np.eye(n)
    return _solve(M, np.einsum("...ij,...i->...j", H, y))


def detect(H, y, kind: DetectorKind, rho=None):
    if kind.variant == "ZF":
        return detect_zf(H, y)
    return detect_mmse(H, y, kind.rho if rho is None else rho)


def detect_decomposed(G, Lambda, X, Q, y) -> np.ndarray:
    """``Lambda^{-1} (X + Q)^{-1} G^T y``.

    ``Lambda`` may be the diagonal matrix or its ``(..., 2K)`` diagonal vector.
    """
    lam = np.asarray(Lambda, dtype=float)
    if lam.ndim >= 2 and lam.shape[-1] == lam.shape[-2] == X.shape[-1]:
        lam = np.diagonal(lam, axis1=-2, axis2=-1)
    if np.any(~(lam > 0)):
        raise NonPositiveLambda("Lambda must be a positive diagonal")
    z = _solve(X + Q, np.einsum("...ij,...i->...j", G, y))
    return z / lam


@dataclass(frozen=True)
class FlopReport:
    flops: int
    breakdown: dict = field(default_factory=dict)


def lu_solve_flops(n: int) -> int:
    """Exact operation count of an n x n LU factorization plus two triangular solves.

    Factorization: ``n-k`` divisions and ``(n-k)^2`` multiply/subtract pairs at
    step k. Forward substitution (unit lower): ``n(n-1)``. Back substitution:
    ``n(n-1)`` plus ``n`` divisions. Divisions count as multiplications.
    """
    factor = n * (n - 1) // 2 + n * (n - 1) * (2 * n - 1) // 3
    return factor + n * (n - 1) + n * n


def count_flops(R: int, K: int, kind: DetectorKind | str) -> FlopReport:
    """Real FLOPs of a dense ZF/MMSE evaluation with ``n = 2K`` and ``m = 2R``.

    One real multiplication or one real addition is one FLOP. The Gram matrix
    is formed on its upper triangle only (``n(n+1)/2`` inner products of
    length m), MMSE adds ``rho`` to ``n`` diagonal entries, the system is
    solved by LU, and ``H^T y`` costs ``n(2m-1)``.
    """
    if not (R >= K >= 1):
        raise ValueError("need R >= K >= 1")
    variant = kind.variant if isinstance(kind, DetectorKind) else str(kind).upper()
    n, m = 2 * K, 2 * R
    breakdown = {
        "gram": n * (n + 1) // 2 * (2 * m - 1),
        "regularize": n if variant == "MMSE" else 0,
        "solve": lu_solve_flops(n),
        "matvec": n * (2 * m - 1),
    }
    return FlopReport(flops=sum(breakdown.values()), breakdown=breakdown)
