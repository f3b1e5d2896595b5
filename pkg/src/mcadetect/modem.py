"""Gray-mapped square QAM, AWGN and hard-decision bit error counting."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .channel import stack
from .errors import BadLength
from .linalg import RngStream


def _gray(i):
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Square ``order``-QAM, Gray coded independently on each axis.

    The first half of each symbol's bits select the in-phase level, the second
    half the quadrature level; levels are ``(2i - (L-1)) * scale``.
    """

    order: int = 64
    p_s: float = 1.0

    def __post_init__(self):
        if self.order not in (4, 16, 64):
            raise ValueError(f"unsupported QAM order {self.order}")
        if self.p_s <= 0:
            raise ValueError("p_s must be positive")

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def bits_per_axis(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def levels_per_axis(self) -> int:
        return 1 << self.bits_per_axis

    @property
    def scale(self) -> float:
        L = self.levels_per_axis
        return float(np.sqrt(self.p_s / (2 * (L * L - 1) / 3)))

    @cached_property
    def _tables(self):
        L, m = self.levels_per_axis, self.bits_per_axis
        idx = np.arange(L)
        code = _gray(idx)
        # bits of level index i, MSB first
        bits_of_level = ((code[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)
        level_of_code = np.empty(L, dtype=int)
        level_of_code[code] = idx
        return bits_of_level, level_of_code

    @property
    def pam_levels(self) -> np.ndarray:
        L = self.levels_per_axis
        return (2 * np.arange(L) - (L - 1)) * self.scale

    @property
    def points(self) -> np.ndarray:
        """All constellation points indexed by their bit pattern value."""
        nb = self.bits_per_symbol
        pats = (np.arange(self.order)[:, None] >> np.arange(nb - 1, -1, -1)) & 1
        return self.modulate(pats.reshape(-1))

    def modulate(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        nb, m = self.bits_per_symbol, self.bits_per_axis
        if bits.shape[-1] % nb:
            raise BadLength(f"bit length {bits.shape[-1]} is not a multiple of {nb}")
        b = bits.reshape(bits.shape[:-1] + (-1, 2, m))
        weights = 1 << np.arange(m - 1, -1, -1)
        codes = (b * weights).sum(axis=-1)
        _, level_of_code = self._tables
        lv = level_of_code[codes]
        amp = (2 * lv - (self.levels_per_axis - 1)) * self.scale
        return amp[..., 0] + 1j * amp[..., 1]

    def level_index(self, x: np.ndarray) -> np.ndarray:
        """Nearest PAM level index for real amplitudes ``x``."""
        L = self.levels_per_axis
        i = np.rint((np.asarray(x) / self.scale + (L - 1)) / 2)
        return np.clip(i, 0, L - 1).astype(int)

    def demodulate(self, s_c: np.ndarray) -> np.ndarray:
        """Hard nearest-point decisions back to bits (same layout as ``modulate``)."""
        bits_of_level, _ = self._tables
        bi = bits_of_level[self.level_index(np.real(s_c))]
        bq = bits_of_level[self.level_index(np.imag(s_c))]
        out = np.concatenate([bi, bq], axis=-1)
        return out.reshape(out.shape[:-2] + (out.shape[-2] * out.shape[-1],))


@dataclass
class Frame:
    bits: np.ndarray
    s_c: np.ndarray
    s: np.ndarray
    y: np.ndarray = field(default=None)
    sigma_n: float | np.ndarray = 0.0


def random_bits(const: Constellation, K: int, stream: RngStream | np.random.Generator,
                batch: tuple = ()) -> np.ndarray:
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    return rng.integers(0, 2, size=tuple(batch) + (K * const.bits_per_symbol,), dtype=np.uint8)


def make_frame(const: Constellation, K: int, stream, batch: tuple = ()) -> Frame:
    bits = random_bits(const, K, stream, batch)
    s_c = const.modulate(bits)
    return Frame(bits=bits, s_c=s_c, s=stack(s_c))


def modulate(bits, const: Constellation | None = None) -> np.ndarray:
    return (const or Constellation()).modulate(bits)


def apply_awgn(y_clean: np.ndarray, sigma_n, stream: RngStream | np.random.Generator) -> np.ndarray:
    """Add real noise of variance ``sigma_n^2 / 2`` per dimension.

    ``sigma_n`` is the complex-noise standard deviation; it may carry batch
    dimensions matching the leading axes of ``y_clean``.
    """
    sigma_n = np.asarray(sigma_n, dtype=float)
    if np.any(sigma_n < 0):
        raise ValueError("sigma_n must be non-negative")
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    z = rng.standard_normal(np.shape(y_clean))
    sd = sigma_n[..., None] if sigma_n.ndim else sigma_n
    return y_clean + (sd / np.sqrt(2)) * z


def count_bit_errors(s_hat: np.ndarray, bits: np.ndarray, const: Constellation):
    """Bit errors per frame for real-stacked estimates ``s_hat`` of shape ``(..., 2K)``."""
    from .channel import unstack

    decided = const.demodulate(unstack(np.asarray(s_hat)))
    return np.count_nonzero(decided != bits, axis=-1)


def demap_and_count(s_hat: np.ndarray, frame: Frame, const: Constellation | None = None):
    """Total ``(bit_errors, bit_total)`` of a (batched) frame."""
    const = const or Constellation()
    errs = count_bit_errors(s_hat, frame.bits, const)
    return int(np.sum(errs)), int(np.asarray(frame.bits).size)


def qam_ber_awgn(const: Constellation, es_n0: float) -> float:
    """Exact Gray-coded square-QAM BER over AWGN by enumerating decision regions.

    ``es_n0`` is the linear symbol-energy to complex-noise ratio. Each axis is
    an independent Gray PAM; the bit error probability is the Hamming-weighted
    probability of landing in every decision interval.
    """
    from scipy.stats import norm

    L, m = const.levels_per_axis, const.bits_per_axis
    bits_of_level, _ = const._tables
    sd = np.sqrt(const.p_s / es_n0 / 2)
    levels = const.pam_levels
    edges = np.concatenate([[-np.inf], (levels[:-1] + levels[1:]) / 2, [np.inf]])
    total = 0.0
    for i in range(L):
        cdf = norm.cdf((edges - levels[i]) / sd)
        p = np.diff(cdf)
        ham = np.count_nonzero(bits_of_level != bits_of_level[i], axis=1)
        total += float(np.sum(p * ham))
    return total / (L * m)
