"""Channel realizations: Rayleigh small-scale fading, path-loss large-scale
fading, the real-valued equivalent model and the Gram-matrix split used by the
crossbar detector.

All array-valued functions accept leading batch dimensions; a single
realization simply has none.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveLambda
from .linalg import RngStream

THERMAL_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class ScenarioParams:
    R: int = 64
    K: int = 4
    cell_radius: float = 150.0
    tx_power_dbm: float = 20.0
    carrier_freq: float = 2e9
    bandwidth: float = 25e6
    noise_figure_db: float = 7.0
    sigma_g: float = float(np.sqrt(0.5))
    pathloss_exponent: float = 3.76
    pathloss_ref_db: float = 38.46
    min_distance: float = 1.0

    def __post_init__(self):
        if not (self.R >= self.K >= 1):
            raise ValueError(f"need R >= K >= 1, got R={self.R}, K={self.K}")
        if self.cell_radius <= 0:
            raise ValueError("cell_radius must be positive")
        if self.sigma_g <= 0:
            raise ValueError("sigma_g must be positive")

    @property
    def sigma_g2(self) -> float:
        return self.sigma_g ** 2

    @property
    def q_zf(self) -> float:
        """Mean of the Gram diagonal, ``2 R sigma_g^2``."""
        return 2 * self.R * self.sigma_g2

    @property
    def tx_power_w(self) -> float:
        return 10 ** ((self.tx_power_dbm - 30) / 10)

    @property
    def noise_power_w(self) -> float:
        dbm = THERMAL_NOISE_DBM_HZ + 10 * np.log10(self.bandwidth) + self.noise_figure_db
        return 10 ** ((dbm - 30) / 10)


@dataclass(frozen=True)
class ChannelRealization:
    G_c: np.ndarray      # (..., R, K) complex SSFC
    lam: np.ndarray      # (..., K) large-scale fading powers
    H_c: np.ndarray      # (..., R, K)
    G: np.ndarray        # (..., 2R, 2K)
    Lambda: np.ndarray   # (..., 2K, 2K) diagonal, sqrt(lam) repeated
    H: np.ndarray        # (..., 2R, 2K)
    W: np.ndarray        # (..., 2K, 2K)
    X: np.ndarray
    Q_zf: np.ndarray
    Q_mmse: np.ndarray
    P: np.ndarray
    rho: float | np.ndarray
    sigma_g2: float

    @property
    def R(self) -> int:
        return self.G_c.shape[-2]

    @property
    def K(self) -> int:
        return self.G_c.shape[-1]

    @property
    def lambda_diag(self) -> np.ndarray:
        """Diagonal of ``Lambda`` as a ``(..., 2K)`` vector."""
        return np.concatenate([np.sqrt(self.lam)] * 2, axis=-1)

    def Q(self, variant: str) -> np.ndarray:
        return self.Q_zf if variant.upper() == "ZF" else self.Q_mmse


def draw_ssfc(params: ScenarioParams, stream: RngStream | np.random.Generator,
              batch: tuple = ()) -> np.ndarray:
    """Rayleigh SSFC matrix with i.i.d. ``N(0, sigma_g^2)`` real and imaginary parts."""
    if params.sigma_g <= 0:
        raise ValueError("sigma_g must be positive")
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    z = rng.standard_normal(tuple(batch) + (params.R, params.K, 2))
    return params.sigma_g * (z[..., 0] + 1j * z[..., 1])


def pathloss_db(d, params: ScenarioParams):
    d = np.maximum(np.asarray(d, dtype=float), params.min_distance)
    return params.pathloss_ref_db + 10 * params.pathloss_exponent * np.log10(d)


def lambda_from_distance(d, params: ScenarioParams):
    return 10 ** (-pathloss_db(d, params) / 10)


def ut_distances(params: ScenarioParams, stream: RngStream | np.random.Generator,
                 batch: tuple = ()) -> np.ndarray:
    """Distances of K area-uniform UT positions in the cell disc."""
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    u = rng.random(tuple(batch) + (params.K,))
    return np.maximum(params.cell_radius * np.sqrt(u), params.min_distance)


def place_uts(params: ScenarioParams, stream: RngStream | np.random.Generator,
              batch: tuple = ()) -> np.ndarray:
    """Large-scale fading powers of K UTs dropped uniformly in the cell."""
    if params.cell_radius <= 0:
        raise ValueError("cell_radius must be positive")
    return lambda_from_distance(ut_distances(params, stream, batch), params)


def realify(H_c: np.ndarray) -> np.ndarray:
    """``[[Re, -Im], [Im, Re]]`` real-valued equivalent of a complex matrix."""
    H_c = np.asarray(H_c)
    re, im = H_c.real, H_c.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def stack(v_c: np.ndarray) -> np.ndarray:
    """Stack real part over imaginary part along the last axis."""
    v_c = np.asarray(v_c)
    return np.concatenate([v_c.real, v_c.imag], axis=-1)


def unstack(v: np.ndarray) -> np.ndarray:
    n = v.shape[-1] // 2
    return v[..., :n] + 1j * v[..., n:]


def build_gram(G: np.ndarray, params: ScenarioParams, rho, lam: np.ndarray):
    """Gram split of the real SSFC matrix.

    Returns ``(W, X, Q_zf, Q_mmse, P)`` with ``W = G^T G``,
    ``X = W - 2 R sigma_g^2 I``, ``Q_zf = 2 R sigma_g^2 I``,
    ``Q_mmse = Q_zf + P`` and ``P = diag(rho / lam)`` repeated for both halves.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise NonPositiveLambda("large-scale fading coefficients must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    n = G.shape[-1]
    W = np.swapaxes(G, -1, -2) @ G
    eye = np.eye(n)
    q0 = params.q_zf
    X = W - q0 * eye
    p_diag = np.concatenate([lam] * 2, axis=-1)
    p_diag = rho[..., None] / p_diag if rho.ndim else rho / p_diag
    P = p_diag[..., :, None] * eye
    Q_zf = np.broadcast_to(q0 * eye, W.shape).copy()
    Q_mmse = Q_zf + P
    return W, X, Q_zf, Q_mmse, P


def make_realization(params: ScenarioParams, G_c: np.ndarray, lam: np.ndarray,
                     rho) -> ChannelRealization:
    lam = np.asarray(lam, dtype=float)
    lam = np.broadcast_to(lam, G_c.shape[:-2] + (G_c.shape[-1],))
    sq = np.sqrt(lam)
    H_c = G_c * sq[..., None, :]
    G = realify(G_c)
    H = realify(H_c)
    lam_d = np.concatenate([sq, sq], axis=-1)
    Lambda = lam_d[..., :, None] * np.eye(2 * params.K)
    W, X, Q_zf, Q_mmse, P = build_gram(G, params, rho, lam)
    return ChannelRealization(G_c=G_c, lam=lam, H_c=H_c, G=G, Lambda=Lambda, H=H, W=W,
                              X=X, Q_zf=Q_zf, Q_mmse=Q_mmse, P=P, rho=rho,
                              sigma_g2=params.sigma_g2)


def draw_realization(params: ScenarioParams, stream: RngStream | np.random.Generator,
                     rho=0.0, lam=None, batch: tuple = ()) -> ChannelRealization:
    """Draw SSFC (and, if ``lam`` is None, UT positions) and assemble a realization."""
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    G_c = draw_ssfc(params, rng, batch)
    if lam is None:
        lam = place_uts(params, rng, batch)
    return make_realization(params, G_c, lam, rho)
