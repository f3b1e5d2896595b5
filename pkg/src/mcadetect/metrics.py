"""Detection-quality and hardware metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitSolution, ConductanceProgram
from .detector import FlopReport
from .errors import ZeroSignal


def nmse(s_hat, s) -> float:
    """``sum ||s_hat - s||^2 / sum ||s||^2`` over the whole batch."""
    s_hat = np.asarray(s_hat, dtype=float)
    s = np.asarray(s, dtype=float)
    if s_hat.shape != s.shape:
        raise ValueError(f"shape mismatch {s_hat.shape} vs {s.shape}")
    energy = float(np.sum(s * s))
    if energy == 0:
        raise ZeroSignal("reference signal has zero energy")
    return float(np.sum((s_hat - s) ** 2)) / energy


def ber(bit_errors: int, bits: int) -> float:
    return bit_errors / bits if bits else float("nan")


@dataclass(frozen=True)
class PowerParams:
    # Assumed component figures (no values are printed for the cited parts):
    # a low-power CMOS OA, a current-steering DAC channel and one SAR ADC channel.
    p_oa: float = 50e-6
    p_dac: float = 1e-3
    p_adc: float = 2e-3
    include_array_static: bool = True

    def __post_init__(self):
        if min(self.p_oa, self.p_dac, self.p_adc) < 0:
            raise ValueError("component powers must be non-negative")


@dataclass(frozen=True)
class PowerReport:
    total: float
    breakdown: dict = field(default_factory=dict)

    @property
    def amplifier_stage(self) -> float:
        return self.breakdown.get("oa_amplifier", 0.0) + self.breakdown.get("array_amplifier", 0.0)

    @property
    def amplifier_share(self) -> float:
        """Amplifier-stage power relative to everything else in the circuit."""
        rest = self.total - self.amplifier_stage
        return self.amplifier_stage / rest if rest > 0 else float("nan")


def array_static_power(prog: ConductanceProgram, sol: CircuitSolution) -> tuple[float, float]:
    """Ohmic dissipation ``sum g dv^2`` of the crossbars and of the amplifier devices.

    Inverters and followers are taken as ideal when reconstructing the drive
    voltage of each device. Returns ``(crossbar, amplifier)`` in watts,
    averaged over any batch axes.
    """
    v_in, v1, u = sol.v_in, sol.v1, sol.u
    uu = u[..., :, None]
    p = (np.sum(prog.A * (v_in[..., None, :] - uu) ** 2, axis=(-2, -1))
         + np.sum(prog.B * (-v_in[..., None, :] - uu) ** 2, axis=(-2, -1))
         + np.sum(np.where(prog.c_active, prog.c_units, 0.0) * (v1 - u)[..., :, None] ** 2,
                  axis=(-2, -1))
         + np.sum(prog.D * (v1[..., None, :] - uu) ** 2, axis=(-2, -1))
         + np.sum(prog.E * (-v1[..., None, :] - uu) ** 2, axis=(-2, -1)))
    amp = np.zeros_like(p)
    if prog.has_amplifiers:
        a = sol.amp_node
        amp = (np.sum(prog.theta0 * (v1 - a) ** 2, axis=-1)
               + np.sum(prog.theta * (sol.v_out - a) ** 2, axis=-1))
    return float(np.mean(p)), float(np.mean(amp))


def oa_count(topology_has_amplifiers: bool, K: int) -> dict:
    n = 2 * K
    counts = {"oa_inversion": n, "oa_inverters": n, "oa_followers": n}
    counts["oa_amplifier"] = n if topology_has_amplifiers else 0
    return counts


def estimate_power(prog: ConductanceProgram, solution: CircuitSolution | None, R: int, K: int,
                   params: PowerParams = PowerParams()) -> PowerReport:
    """Quiescent OA and converter power plus (optionally) resistive array power."""
    bd = {k: c * params.p_oa for k, c in oa_count(prog.has_amplifiers, K).items()}
    bd["dac"] = 2 * R * params.p_dac
    bd["adc"] = 2 * K * params.p_adc
    if params.include_array_static:
        if solution is None or solution.v_in is None:
            raise ValueError("array static power needs a solved circuit with its inputs")
        bd["array_crossbar"], bd["array_amplifier"] = array_static_power(prog, solution)
    return PowerReport(total=float(sum(bd.values())), breakdown=bd)


@dataclass(frozen=True)
class EfficiencyReport:
    power: float
    t_compute: float
    flops: int
    tops_per_watt: float


def energy_efficiency(flops: FlopReport | int, power: float, t_compute: float) -> EfficiencyReport:
    """Equivalent digital FLOPs per joule of analog computation, in TOPS/W."""
    if not (power > 0 and t_compute > 0):
        raise ValueError("power and t_compute must be positive")
    f = flops.flops if isinstance(flops, FlopReport) else int(flops)
    return EfficiencyReport(power=power, t_compute=t_compute, flops=f,
                            tops_per_watt=f / (t_compute * power) / 1e12)
