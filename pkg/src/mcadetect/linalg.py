"""Dense real linear algebra and seeded random streams.

Matrices are plain ``numpy`` arrays. Every routine accepts leading batch
dimensions so that a Monte Carlo batch of small systems is factorized in one
vectorized pass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrix

PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct stream ids are spawned from the same root seed through
    ``numpy.random.SeedSequence`` so they are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngStream":
        """Derive a sub-stream; the key tuple is folded into the stream id."""
        sid = self.stream_id
        for k in keys:
            sid = (sid * 1_000_003 + int(k) + 1) % (1 << 63)
        return RngStream(self.seed, sid)


def lu_factor(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial-pivoting LU of a (batch of) square matrices.

    Returns ``(lu, perm)`` where ``lu`` packs the unit-lower and upper factors
    and ``perm[..., i]`` is the original row placed at position ``i``.
    Raises :class:`SingularMatrix` when a pivot magnitude drops below
    ``1e-13 * max|M|`` of the corresponding matrix.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    n = M.shape[-1]
    batch_shape = M.shape[:-2]
    lu = M.reshape(-1, n, n).copy()
    nb = lu.shape[0]
    perm = np.tile(np.arange(n), (nb, 1))
    rows = np.arange(nb)
    tol = PIVOT_RTOL * np.abs(lu).max(axis=(1, 2))

    for k in range(n):
        p = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            r = rows[swap]
            pk = p[swap]
            tmp = lu[r, k, :].copy()
            lu[r, k, :] = lu[r, pk, :]
            lu[r, pk, :] = tmp
            tmp = perm[r, k].copy()
            perm[r, k] = perm[r, pk]
            perm[r, pk] = tmp
        piv = lu[:, k, k]
        if np.any(~(np.abs(piv) > tol)):
            bad = int(np.argmax(~(np.abs(piv) > tol)))
            raise SingularMatrix(
                f"pivot {k} of matrix {bad} is {piv[bad]:.3e} (tolerance {tol[bad]:.3e})"
            )
        if k + 1 < n:
            lu[:, k + 1:, k] /= piv[:, None]
            lu[:, k + 1:, k + 1:] -= lu[:, k + 1:, k, None] * lu[:, k, None, k + 1:]

    return lu.reshape(batch_shape + (n, n)), perm.reshape(batch_shape + (n,))


def lu_solve(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with factors from :func:`lu_factor`. ``rhs`` is ``(..., n)`` or ``(..., n, m)``."""
    n = lu.shape[-1]
    batch_shape = lu.shape[:-2]
    rhs = np.asarray(rhs, dtype=float)
    vector = rhs.ndim == lu.ndim - 1
    if vector:
        rhs = rhs[..., None]
    rhs = np.broadcast_to(rhs, batch_shape + rhs.shape[-2:])
    m = rhs.shape[-1]
    L = lu.reshape(-1, n, n)
    P = perm.reshape(-1, n)
    x = np.take_along_axis(rhs.reshape(-1, n, m), P[:, :, None], axis=1).copy()

    for i in range(1, n):
        x[:, i, :] -= np.einsum("bj,bjm->bm", L[:, i, :i], x[:, :i, :])
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[:, i, :] -= np.einsum("bj,bjm->bm", L[:, i, i + 1:], x[:, i + 1:, :])
        x[:, i, :] /= L[:, i, i, None]

    x = x.reshape(batch_shape + (n, m))
    return x[..., 0] if vector else x


def solve_dense(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M X = rhs`` by partial-pivoting LU (batched over leading axes)."""
    lu, perm = lu_factor(M)
    return lu_solve(lu, perm, rhs)


def draw_gaussian(stream: RngStream | np.random.Generator, n, mean: float = 0.0,
                  sigma: float = 1.0) -> np.ndarray:
    """``n`` i.i.d. normal draws (``n`` may be a shape tuple)."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    z = rng.standard_normal(n)
    return mean + sigma * z
