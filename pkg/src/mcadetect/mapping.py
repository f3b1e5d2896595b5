"""Conductance mapping: matrices onto device pairs, Q onto the diagonal array,
LSFCs onto amplifier device ratios, and programming deviations.

Functions broadcast over leading batch axes. Mapping factors are returned
with the batch shape of their input matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DynamicRangeExceeded, InfeasibleMapping, ZeroMatrix
from .linalg import RngStream

MICRO = 1e-6
# clamps smaller than this (relative to omega_max) are rounding, not truncation
CLIP_ATOL = 1e-9


@dataclass(frozen=True)
class DeviceRange:
    omega_min: float = 0.1 * MICRO
    omega_max: float = 30.0 * MICRO

    def __post_init__(self):
        if not (0 < self.omega_min < self.omega_max):
            raise ValueError("need 0 < omega_min < omega_max")

    @property
    def omega(self) -> float:
        return self.omega_max - self.omega_min

    @property
    def theta_mid(self) -> float:
        return float(np.sqrt(self.omega_min * self.omega_max))

    def clip(self, g):
        return np.clip(g, self.omega_min, self.omega_max)


@dataclass(frozen=True)
class MappingScheme:
    kind: str = "AMF"
    beta: float = 3.0

    def __post_init__(self):
        k = self.kind.upper()
        if k not in ("FMF", "AMF"):
            raise ValueError(f"unknown mapping scheme {self.kind!r}")
        object.__setattr__(self, "kind", k)
        if k == "FMF" and not self.beta > 0:
            raise ValueError("FMF needs beta > 0")


@dataclass(frozen=True)
class ConductancePair:
    A: np.ndarray
    B: np.ndarray
    alpha: np.ndarray
    truncated_count: np.ndarray

    def represented(self) -> np.ndarray:
        """Matrix actually realized, ``(A - B) / alpha``."""
        return (self.A - self.B) / np.asarray(self.alpha)[..., None, None]


@dataclass(frozen=True)
class ScaleLedger:
    """Scalars needed to turn measured output voltages back into estimates."""

    alpha_in: np.ndarray
    alpha_fb: np.ndarray
    lambda_norm: np.ndarray
    v_scale: np.ndarray | float = 1.0

    @property
    def out_gain(self) -> np.ndarray:
        return self.alpha_fb / (self.alpha_in * self.lambda_norm * np.asarray(self.v_scale))

    def with_input_scale(self, v_scale) -> "ScaleLedger":
        return replace(self, v_scale=v_scale)


def compute_alpha(U: np.ndarray, scheme: MappingScheme, rng: DeviceRange) -> np.ndarray:
    """Mapping factor in siemens per matrix unit.

    FMF: ``omega / (beta * sigma_u)`` with the population std of the entries of
    this instance of ``U``. AMF: ``omega / max|u|``, which never truncates.
    """
    U = np.asarray(U, dtype=float)
    peak = np.abs(U).max(axis=(-2, -1))
    if np.any(peak == 0):
        raise ZeroMatrix("cannot map an all-zero matrix")
    if scheme.kind == "AMF":
        return rng.omega / peak
    sigma_u = U.std(axis=(-2, -1))
    if np.any(sigma_u == 0):
        raise ZeroMatrix("matrix entries have zero spread")
    return rng.omega / (scheme.beta * sigma_u)


def map_matrix(U: np.ndarray, alpha, rng: DeviceRange) -> ConductancePair:
    """Differential pair with ``a = omega_max`` where ``u > 0`` else ``omega_min``,
    ``b = a - alpha u``, both then clamped to the device window."""
    U = np.asarray(U, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise ValueError("alpha must be positive")
    a = np.where(U > 0, rng.omega_max, rng.omega_min)
    b = a - alpha[..., None, None] * U
    b_c = rng.clip(b)
    clipped = np.abs(b_c - b) > CLIP_ATOL * rng.omega_max
    return ConductancePair(A=a, B=b_c, alpha=alpha,
                           truncated_count=np.count_nonzero(clipped, axis=(-2, -1)))


@dataclass(frozen=True)
class DiagonalMapping:
    """Diagonal conductance array realized with ``slots`` parallel devices per row.

    ``units[..., i, s]`` is the conductance of device ``s`` on row ``i``;
    unused slots are zero and flagged False in ``active``.
    """

    units: np.ndarray
    active: np.ndarray
    feasible: np.ndarray      # every target fits a single device
    realizable: np.ndarray    # the chosen realization fits the slot budget
    truncated_count: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.where(self.active, self.units, 0.0).sum(axis=-1)

    @property
    def C(self) -> np.ndarray:
        d = self.diag
        return d[..., :, None] * np.eye(d.shape[-1])

    @property
    def devices_per_row(self) -> np.ndarray:
        return self.active.sum(axis=-1)


def map_q_onto_c(Q: np.ndarray, alpha_fb, rng: DeviceRange, *, strict: bool = False,
                 overflow: str = "parallel", slots: int = 32) -> DiagonalMapping:
    """Map the diagonal of ``Q`` onto the diagonal array ``C = alpha_fb * Q``.

    ``alpha_fb`` must be the factor used for the off-diagonal feedback array.
    A target outside the device window makes ``feasible`` False (and raises
    :class:`InfeasibleMapping` under ``strict``). Otherwise, with
    ``overflow="parallel"`` a target above ``omega_max`` is split evenly over
    ``ceil(target / omega_max)`` parallel devices; with ``overflow="clip"``
    it is clamped. Targets below ``omega_min`` are clamped.
    """
    Q = np.asarray(Q, dtype=float)
    q = np.diagonal(Q, axis1=-2, axis2=-1) if Q.ndim >= 2 and Q.shape[-1] == Q.shape[-2] else Q
    alpha_fb = np.asarray(alpha_fb, dtype=float)
    target = alpha_fb[..., None] * q
    if np.any(target <= 0):
        raise InfeasibleMapping("Q must be a positive diagonal")
    in_range = (target >= rng.omega_min) & (target <= rng.omega_max)
    feasible = in_range.all(axis=-1)
    if strict and not np.all(feasible):
        raise InfeasibleMapping(
            f"alpha_fb * q spans [{target.min():.3e}, {target.max():.3e}] S, "
            f"outside [{rng.omega_min:.3e}, {rng.omega_max:.3e}] S")
    if overflow == "parallel":
        n_dev = np.maximum(np.ceil(target / rng.omega_max - 1e-12), 1).astype(int)
    elif overflow == "clip":
        n_dev = np.ones_like(target, dtype=int)
    else:
        raise ValueError(f"unknown overflow policy {overflow!r}")
    over = n_dev > slots
    n_dev = np.minimum(n_dev, slots)
    per = target / n_dev
    per_c = rng.clip(per)
    truncated = np.count_nonzero(np.abs(per_c - per) > CLIP_ATOL * rng.omega_max, axis=-1)
    s = np.arange(slots)
    active = s < n_dev[..., None]
    units = np.where(active, per_c[..., None], 0.0)
    return DiagonalMapping(units=units, active=active, feasible=feasible,
                           realizable=~over.any(axis=-1), truncated_count=truncated)


@dataclass(frozen=True)
class ThetaMapping:
    theta_0: np.ndarray       # (...,) common input-device target
    theta: np.ndarray         # (..., 2K) feedback devices
    lambda_norm: np.ndarray   # (...,)
    feasible: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.theta / self.theta_0[..., None]


def map_lambda_onto_theta(lam: np.ndarray, rng: DeviceRange, *, strict: bool = True,
                          placement: str = "max") -> ThetaMapping:
    """Amplifier conductances realizing ``diag(sqrt(lam))`` up to ``lambda_norm``.

    With ``lam_bar = lam / max(lam)`` the feedback devices are
    ``theta_k = sqrt(lam_bar_k) * theta_0`` for both real and imaginary rails.
    ``placement="max"`` puts ``theta_0`` at ``omega_max`` so additive deviations
    are smallest relative to the devices. ``placement="mid"`` starts at the
    geometric centre of the window and raises ``theta_0`` to
    ``omega_min / sqrt(min lam_bar)`` (capped at ``omega_max``) only when needed.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise DynamicRangeExceeded("large-scale fading coefficients must be positive")
    lmax = lam.max(axis=-1)
    r = np.sqrt(lam / lmax[..., None])
    rmin = r.min(axis=-1)
    if placement == "max":
        theta_0 = np.full(rmin.shape, rng.omega_max)
    elif placement == "mid":
        theta_0 = np.maximum(rng.theta_mid, np.minimum(rng.omega_max, rng.omega_min / rmin))
    else:
        raise ValueError(f"unknown theta_0 placement {placement!r}")
    feasible = rmin * theta_0 >= rng.omega_min * (1 - 1e-12)
    if strict and not np.all(feasible):
        raise DynamicRangeExceeded(
            f"LSFC amplitude span {1 / rmin.min():.1f} exceeds device ratio "
            f"{rng.omega_max / rng.omega_min:.1f}")
    th = rng.clip(np.concatenate([r, r], axis=-1) * theta_0[..., None])
    return ThetaMapping(theta_0=theta_0, theta=th, lambda_norm=np.sqrt(lmax), feasible=feasible)


def inject_deviation(g: np.ndarray, sigma_m: float, stream: RngStream | np.random.Generator,
                     rng: DeviceRange, mask: np.ndarray | None = None) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma_m^2)`` to every device and clamp to the window.

    ``mask`` selects which entries are physical devices; others pass through.
    The normal draws are consumed for every entry regardless of ``mask`` so
    the random sequence depends only on the array shape.
    """
    if sigma_m < 0:
        raise ValueError("sigma_m must be non-negative")
    g = np.asarray(g, dtype=float)
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    z = gen.standard_normal(g.shape)
    if sigma_m == 0:
        return g.copy()
    out = rng.clip(g + sigma_m * z)
    if mask is not None:
        out = np.where(mask, out, g)
    return out
