"""Crossbar detector circuits and their nodal solvers.

Node model (one row ``j`` of the 2K inversion OAs): the input array ``A`` is
driven by ``v_in`` and ``B`` by its inverted copy; ``C`` connects the OA output
``v1_j`` straight back to its own inverting node; ``D`` is driven by followers
of ``v1`` and ``E`` by inverters of ``v1``. Kirchhoff's current law at the
inverting node ``u_j`` then reads

    [(A - B) v_in]_j + [(C + D - E) v1]_j - L_j u_j = 0,

with ``L_j`` the total conductance attached to the node. The amplifier stage
``k`` is an inverting amplifier with input device ``theta0_k`` from ``v1_k``
and feedback device ``theta_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from .channel import ChannelRealization
from .detector import DetectorKind
from .errors import (DynamicRangeExceeded, InfeasibleMapping, NoConvergence,
                     SingularFeedback, SingularMatrix, SingularSystem,
                     StabilityViolation)
from .linalg import RngStream, solve_dense
from .mapping import (DeviceRange, MappingScheme, ScaleLedger, compute_alpha,
                      inject_deviation, map_lambda_onto_theta, map_matrix,
                      map_q_onto_c)

PROPOSED = "proposed"
CONVENTIONAL = "conventional"
C_OVERFLOW_POLICIES = ("parallel", "cap_alpha", "clip", "strict")


@dataclass(frozen=True)
class OaModel:
    open_loop_gain: float = 1e12
    gbp: float = 500e6
    ideal_inverters: bool = True
    ideal_followers: bool = True

    def __post_init__(self):
        if not self.open_loop_gain > 0:
            raise ValueError("open_loop_gain must be positive")
        if not self.gbp > 0:
            raise ValueError("gbp must be positive")

    @classmethod
    def from_db(cls, olg_db: float, **kw) -> "OaModel":
        return cls(open_loop_gain=10 ** (olg_db / 20), **kw)

    @property
    def tau(self) -> float:
        """Open-loop pole time constant ``A_OL / (2 pi GBP)``."""
        return self.open_loop_gain / (2 * np.pi * self.gbp)

    @property
    def inverter_gain(self) -> float:
        a = self.open_loop_gain
        return 1.0 if self.ideal_inverters else a / (a + 2)

    @property
    def follower_gain(self) -> float:
        a = self.open_loop_gain
        return 1.0 if self.ideal_followers else a / (a + 1)


@dataclass(frozen=True)
class ConductanceProgram:
    topology: str
    A: np.ndarray            # (..., 2K, 2R)
    B: np.ndarray
    c_units: np.ndarray      # (..., 2K, slots) parallel devices of the diagonal array
    c_active: np.ndarray
    D: np.ndarray            # (..., 2K, 2K)
    E: np.ndarray
    theta0: np.ndarray | None  # (..., 2K) amplifier input devices
    theta: np.ndarray | None   # (..., 2K) amplifier feedback devices
    ledger: ScaleLedger
    truncated: np.ndarray
    mapped_entries: int
    valid: np.ndarray

    @property
    def n(self) -> int:
        return self.D.shape[-1]

    @property
    def c_diag(self) -> np.ndarray:
        return np.where(self.c_active, self.c_units, 0.0).sum(axis=-1)

    @property
    def C(self) -> np.ndarray:
        return self.c_diag[..., :, None] * np.eye(self.n)

    @property
    def feedback(self) -> np.ndarray:
        return self.C + self.D - self.E

    @property
    def input_stage(self) -> np.ndarray:
        return self.A - self.B

    @property
    def has_amplifiers(self) -> bool:
        return self.theta is not None

    @property
    def theta_ratio(self) -> np.ndarray:
        """Diagonal of ``Theta``; ones when the amplifier stage is absent."""
        if not self.has_amplifiers:
            return np.ones(self.c_diag.shape)
        return self.theta / self.theta0

    @property
    def node_loading(self) -> np.ndarray:
        return (self.A.sum(-1) + self.B.sum(-1) + self.c_diag + self.D.sum(-1) + self.E.sum(-1))

    @property
    def truncated_fraction(self) -> np.ndarray:
        return self.truncated / self.mapped_entries

    def deviate(self, sigma_m: float, stream: RngStream | np.random.Generator,
                rng: DeviceRange, deviate_theta: bool = True) -> "ConductanceProgram":
        """Programmed copy with independent Gaussian errors on every device."""
        gen = stream.generator() if isinstance(stream, RngStream) else stream
        A = inject_deviation(self.A, sigma_m, gen, rng)
        B = inject_deviation(self.B, sigma_m, gen, rng)
        cu = inject_deviation(self.c_units, sigma_m, gen, rng, mask=self.c_active)
        D = inject_deviation(self.D, sigma_m, gen, rng)
        E = inject_deviation(self.E, sigma_m, gen, rng)
        t0, th = self.theta0, self.theta
        if self.has_amplifiers:
            s = sigma_m if deviate_theta else 0.0
            t0 = inject_deviation(t0, s, gen, rng)
            th = inject_deviation(th, s, gen, rng)
        return replace(self, A=A, B=B, c_units=cu, D=D, E=E, theta0=t0, theta=th)


@dataclass(frozen=True)
class CircuitSolution:
    v_out: np.ndarray
    v1: np.ndarray
    u: np.ndarray
    amp_node: np.ndarray
    residual: np.ndarray
    settle_time: float = float("nan")
    v_in: np.ndarray | None = None


def _t(M):
    return np.swapaxes(M, -1, -2)


def _alpha_fb(U, q_diag, scheme, rng, policy):
    alpha = compute_alpha(U, scheme, rng)
    if policy == "cap_alpha":
        alpha = np.minimum(alpha, rng.omega_max / q_diag.max(axis=-1))
    return alpha


def _map_feedback(U, q_diag, alpha_fb, rng, policy, slots):
    cmap = map_q_onto_c(q_diag, alpha_fb, rng, strict=policy == "strict",
                        overflow="clip" if policy == "clip" else "parallel", slots=slots)
    pair = map_matrix(U, alpha_fb, rng)
    return cmap, pair


def _finish(topology, pair_in, pair_fb, cmap, theta, ledger, valid, sigma_m, stream,
            rng, deviate_theta, strict):
    if strict and not np.all(valid):
        if theta is not None and not np.all(theta.feasible):
            raise DynamicRangeExceeded("LSFC span cannot be represented by the amplifier devices")
        raise InfeasibleMapping("diagonal array needs more parallel devices than available")
    n = pair_fb.A.shape[-1]
    mapped = pair_in.A.shape[-1] * pair_in.A.shape[-2] + n * n + n
    prog = ConductanceProgram(
        topology=topology, A=pair_in.A, B=pair_in.B, c_units=cmap.units, c_active=cmap.active,
        D=pair_fb.A, E=pair_fb.B,
        theta0=None if theta is None else np.broadcast_to(theta.theta_0[..., None], theta.theta.shape).copy(),
        theta=None if theta is None else theta.theta,
        ledger=ledger,
        truncated=pair_in.truncated_count + pair_fb.truncated_count + cmap.truncated_count,
        mapped_entries=mapped, valid=valid)
    if stream is not None:
        prog = prog.deviate(sigma_m, stream, rng, deviate_theta)
    return prog


def build_proposed(chan: ChannelRealization, kind: DetectorKind, scheme: MappingScheme,
                   rng: DeviceRange, sigma_m: float = 0.0, stream=None, *,
                   c_overflow: str = "parallel", c_slots: int = 32, strict: bool = True,
                   deviate_theta: bool = True, theta_placement: str = "max") -> ConductanceProgram:
    """Program the SSFC-based detector: ``A-B <- G^T``, ``C <- Q``, ``D-E <- X``,
    ``Theta <- Lambda / lambda_norm``; deviations are injected last."""
    if c_overflow not in C_OVERFLOW_POLICIES:
        raise ValueError(f"c_overflow must be one of {C_OVERFLOW_POLICIES}")
    Gt = _t(chan.G)
    alpha_in = compute_alpha(Gt, scheme, rng)
    pair_in = map_matrix(Gt, alpha_in, rng)
    q_diag = np.diagonal(chan.Q(kind.variant), axis1=-2, axis2=-1)
    alpha_fb = _alpha_fb(chan.X, q_diag, scheme, rng, c_overflow)
    cmap, pair_fb = _map_feedback(chan.X, q_diag, alpha_fb, rng, c_overflow, c_slots)
    theta = map_lambda_onto_theta(chan.lam, rng, strict=strict, placement=theta_placement)
    ledger = ScaleLedger(alpha_in=alpha_in, alpha_fb=alpha_fb, lambda_norm=theta.lambda_norm)
    valid = cmap.realizable & theta.feasible
    return _finish(PROPOSED, pair_in, pair_fb, cmap, theta, ledger, valid, sigma_m, stream,
                   rng, deviate_theta, strict)


def conventional_matrix(chan: ChannelRealization, kind: DetectorKind, rho=None) -> np.ndarray:
    H = chan.H
    M = _t(H) @ H
    if kind.variant == "MMSE":
        r = np.asarray(chan.rho if rho is None else rho, dtype=float)
        M = M + (r[..., None, None] if r.ndim else r) * np.eye(M.shape[-1])
    return M


def build_conventional(chan: ChannelRealization, kind: DetectorKind, scheme: MappingScheme,
                       rng: DeviceRange, sigma_m: float = 0.0, stream=None, *,
                       c_overflow: str = "parallel", c_slots: int = 32, strict: bool = True,
                       deviate_theta: bool = True, theta_placement: str = "max") -> ConductanceProgram:
    """Program the direct-form detector: ``A-B <- H^T``, ``C <- diag(M)``,
    ``D-E <- offdiag(M)`` with ``M = H^T H (+ rho I)``; no amplifier stage."""
    if c_overflow not in C_OVERFLOW_POLICIES:
        raise ValueError(f"c_overflow must be one of {C_OVERFLOW_POLICIES}")
    if np.any(np.diagonal(conventional_matrix(chan, kind), axis1=-2, axis2=-1) <= 0):
        raise StabilityViolation("Gram diagonal must be positive")
    Ht = _t(chan.H)
    alpha_in = compute_alpha(Ht, scheme, rng)
    pair_in = map_matrix(Ht, alpha_in, rng)
    M = conventional_matrix(chan, kind)
    m_diag = np.diagonal(M, axis1=-2, axis2=-1)
    off = M - m_diag[..., :, None] * np.eye(M.shape[-1])
    # K = 1: the real-valued Gram matrix has no off-diagonal content beyond
    # rounding, so the mapping factor is taken from the whole matrix instead
    peak = np.abs(M).max(axis=(-2, -1))
    empty = np.abs(off).max(axis=(-2, -1)) <= 1e-12 * peak
    alpha_fb = _alpha_fb(np.where(empty[..., None, None], M, off), m_diag, scheme, rng, c_overflow)
    cmap, pair_fb = _map_feedback(off, m_diag, alpha_fb, rng, c_overflow, c_slots)
    ledger = ScaleLedger(alpha_in=alpha_in, alpha_fb=alpha_fb,
                         lambda_norm=np.ones_like(np.asarray(alpha_in)))
    return _finish(CONVENTIONAL, pair_in, pair_fb, cmap, None, ledger, cmap.realizable,
                   sigma_m, stream, rng, deviate_theta, strict)


def quantize(v: np.ndarray, bits: int | None, full_scale: float = 1.0) -> np.ndarray:
    """Uniform mid-rise ``bits``-bit converter over ``[-full_scale, full_scale]``."""
    if bits is None:
        return v
    step = 2 * full_scale / (1 << bits)
    q = (np.floor(np.clip(v, -full_scale, full_scale - 1e-15) / step) + 0.5) * step
    return q


def prepare_input(prog: ConductanceProgram, y: np.ndarray, dac_bits: int | None = None,
                  full_scale: float = 1.0):
    """Scale ``y`` so ``max|v_in|`` equals the DAC full scale; returns ``(v_in, program)``
    with the input scale recorded in the program's ledger."""
    peak = np.abs(y).max(axis=-1)
    peak = np.where(peak > 0, peak, 1.0)
    v_scale = full_scale / peak
    v_in = quantize(y * v_scale[..., None], dac_bits, full_scale)
    return v_in, replace(prog, ledger=prog.ledger.with_input_scale(v_scale))


def descale(prog: ConductanceProgram, v_out: np.ndarray) -> np.ndarray:
    """Digital estimate from the measured output voltages."""
    return np.asarray(prog.ledger.out_gain)[..., None] * v_out


def check_stability(prog: ConductanceProgram) -> bool:
    """Diagonal feedback devices must all be positive."""
    return bool(np.all(prog.c_diag > 0))


def _require_stable(prog):
    if not check_stability(prog):
        raise StabilityViolation("diagonal of C must be strictly positive")


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _kcl_residual(prog, v_in, v1, u, g_i, g_f):
    drive = prog.A - g_i * prog.B
    F = prog.C + g_f * prog.D - g_i * prog.E
    r = _mv(drive, v_in) + _mv(F, v1) - prog.node_loading * u
    return np.abs(r).max(axis=-1)


def solve_ideal(prog: ConductanceProgram, v_in: np.ndarray) -> CircuitSolution:
    """Virtual-ground solution ``v_out = Theta^{-1} (C+D-E)^{-1} (A-B) v_in``."""
    _require_stable(prog)
    i1 = _mv(prog.input_stage, v_in)
    try:
        v1 = -solve_dense(prog.feedback, i1)
    except SingularMatrix as exc:
        raise SingularFeedback(str(exc)) from exc
    v_out = -v1 / prog.theta_ratio
    u = np.zeros_like(v1)
    res = _kcl_residual(prog, v_in, v1, u, 1.0, 1.0)
    return CircuitSolution(v_out=v_out, v1=v1, u=u, amp_node=np.zeros_like(v1), residual=res,
                          v_in=v_in)


def _amp_static(prog, v1, a_ol):
    if not prog.has_amplifiers:
        return -v1, np.zeros_like(v1), np.zeros(v1.shape[:-1])
    t0, th = prog.theta0, prog.theta
    v_out = -t0 * v1 / (th + (t0 + th) / a_ol)
    a = -v_out / a_ol
    r = np.abs(t0 * (v1 - a) + th * (v_out - a)).max(axis=-1)
    return v_out, a, r


def solve_finite_gain(prog: ConductanceProgram, v_in: np.ndarray, oa: OaModel) -> CircuitSolution:
    """Exact nodal solution with OA outputs ``v1 = -A_OL u``."""
    _require_stable(prog)
    a_ol = oa.open_loop_gain
    g_i, g_f = oa.inverter_gain, oa.follower_gain
    L = prog.node_loading
    F = prog.C + g_f * prog.D - g_i * prog.E
    system = F + (L / a_ol)[..., :, None] * np.eye(prog.n)
    rhs = -_mv(prog.A - g_i * prog.B, v_in)
    try:
        v1 = solve_dense(system, rhs)
    except SingularMatrix as exc:
        raise SingularSystem(str(exc)) from exc
    u = -v1 / a_ol
    v_out, a, r_amp = _amp_static(prog, v1, a_ol)
    res = np.maximum(_kcl_residual(prog, v_in, v1, u, g_i, g_f), r_amp)
    return CircuitSolution(v_out=v_out, v1=v1, u=u, amp_node=a, residual=res, v_in=v_in)


def transient_system(prog: ConductanceProgram, v_in: np.ndarray, oa: OaModel):
    """Linear state equation ``dx/dt = M x + b`` with ``x = [v1, v_out]``.

    Each OA is a single pole, ``tau dv/dt = -v - A_OL u`` with the inverting
    node voltage ``u`` given by the instantaneous current balance.
    """
    if v_in.ndim != 1:
        raise ValueError("transient analysis takes a single realization")
    a_ol, tau = oa.open_loop_gain, oa.tau
    g_i, g_f = oa.inverter_gain, oa.follower_gain
    n = prog.n
    L = prog.node_loading
    F = prog.C + g_f * prog.D - g_i * prog.E
    drive = _mv(prog.A - g_i * prog.B, v_in)
    # u = (drive + F v1) / L
    M11 = -(np.eye(n) + a_ol * F / L[:, None]) / tau
    b1 = -(a_ol * drive / L) / tau
    if not prog.has_amplifiers:
        return M11, b1
    t0, th = prog.theta0, prog.theta
    s = t0 + th
    # a = (t0 v1 + th v_out) / s
    M21 = np.diag(-a_ol * t0 / s / tau)
    M22 = np.diag(-(1 + a_ol * th / s) / tau)
    M = np.block([[M11, np.zeros((n, n))], [M21, M22]])
    b = np.concatenate([b1, np.zeros(n)])
    return M, b


def solve_transient(prog: ConductanceProgram, v_in: np.ndarray, oa: OaModel,
                    t_end: float | None = None, settle_tol: float = 0.01,
                    n_steps: int = 4000, return_waveform: bool = False):
    """Step response from zero initial state; reports the settling time.

    The trajectory is propagated exactly on a uniform grid with the matrix
    exponential. ``settle_time`` is the first instant after which
    ``max|v_out(t) - v_out(inf)| <= settle_tol * max|v_out(inf)|`` holds for
    the rest of the window (linearly interpolated between grid points).
    """
    _require_stable(prog)
    M, b = transient_system(prog, v_in, oa)
    eig = np.linalg.eigvals(M)
    slowest = np.max(eig.real)
    if slowest >= 0:
        raise NoConvergence(f"unstable pole at {slowest:.3e} 1/s")
    try:
        x_inf = -solve_dense(M, b)
    except SingularMatrix as exc:
        raise SingularSystem(str(exc)) from exc
    if t_end is None:
        t_end = 30.0 / -slowest
    n = prog.n
    dt = t_end / n_steps
    phi = expm(M * dt)
    xs = np.empty((n_steps + 1, M.shape[0]))
    e = -x_inf
    xs[0] = 0.0
    for k in range(1, n_steps + 1):
        e = phi @ e
        xs[k] = x_inf + e
    if prog.has_amplifiers:
        out, out_inf = xs[:, n:], x_inf[n:]
    else:
        out, out_inf = -xs[:, :n], -x_inf[:n]
    err = np.abs(out - out_inf).max(axis=1)
    bound = settle_tol * np.abs(out_inf).max()
    bad = np.nonzero(err > bound)[0]
    t = np.arange(n_steps + 1) * dt
    if bad.size and bad[-1] == n_steps:
        raise NoConvergence(f"not settled within {t_end:.3e} s")
    if bad.size == 0:
        settle = 0.0
    else:
        k = bad[-1]
        # crossing between grid points k and k+1
        frac = (err[k] - bound) / (err[k] - err[k + 1]) if err[k] != err[k + 1] else 1.0
        settle = t[k] + frac * dt
    v1_inf = x_inf[:n]
    u = -v1_inf / oa.open_loop_gain
    v_out_inf, a, r_amp = _amp_static(prog, v1_inf, oa.open_loop_gain)
    if prog.has_amplifiers:
        v_out_inf = x_inf[n:]
    res = max(float(_kcl_residual(prog, v_in, v1_inf, u, oa.inverter_gain, oa.follower_gain)),
              float(r_amp))
    sol = CircuitSolution(v_out=v_out_inf, v1=v1_inf, u=u, amp_node=a, residual=np.asarray(res),
                          settle_time=float(settle), v_in=v_in)
    if return_waveform:
        return sol, t, out
    return sol
