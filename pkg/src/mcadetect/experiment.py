"""Monte Carlo experiment execution."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
from pydantic import BaseModel, ConfigDict

from .channel import (ScenarioParams, draw_ssfc, lambda_from_distance, make_realization, stack,
                      ut_distances)
from .circuit import (OaModel, build_conventional, build_proposed, descale, prepare_input,
                      quantize, solve_finite_gain, solve_ideal, solve_transient)
from .config import ExperimentConfig
from .detector import DetectorKind, count_flops, detect
from .errors import ConfigError, SimulationError
from .linalg import RngStream
from .mapping import DeviceRange, MappingScheme
from .metrics import PowerParams, energy_efficiency, estimate_power
from .modem import Constellation, apply_awgn, count_bit_errors, random_bits

log = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_value", "snr_db", "ber", "bit_errors", "bits", "nmse", "power_w",
               "tops_per_watt", "settle_time_s", "truncated_fraction", "seed")

# stream-id namespaces
_FRAMES, _LSFC, _METRICS = 1, 2, 3


class ResultRow(BaseModel):
    # NaN marks metrics that were not computed; keep it through JSON
    model_config = ConfigDict(ser_json_inf_nan="strings")

    sweep_value: float
    snr_db: float
    ber: float
    bit_errors: int
    bits: int
    nmse: float
    power_w: float
    tops_per_watt: float
    settle_time_s: float
    truncated_fraction: float
    seed: int
    frames: int = 0
    failed_frames: int = 0
    clamped_frames: int = 0


@dataclass
class PointStats:
    """Additive per-point accumulators; merging is associative."""

    frames: int = 0
    failed: int = 0
    clamped: int = 0
    bit_errors: int = 0
    bits: int = 0
    sq_err: float = 0.0
    sig_energy: float = 0.0
    truncated: int = 0
    mapped: int = 0
    rx_signal: float = 0.0
    rx_noise: float = 0.0

    def merge(self, other: "PointStats") -> "PointStats":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


def point_config(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    """Configuration of one sweep point."""
    key = {
        "snr_db": "scenario.snr_db",
        "beta": "mapping.beta",
        "sigma_m": "device.sigma_m",
        "olg_db": "oa.olg_db",
        "k_users": "scenario.K",
    }[cfg.sweep.axis]
    if cfg.sweep.axis == "k_users":
        if value != int(value):
            raise ConfigError("k_users sweep values must be integers")
        value = int(value)
    return cfg.with_overrides(**{key: value})


def scenario_params(cfg: ExperimentConfig) -> ScenarioParams:
    sc = cfg.scenario
    return ScenarioParams(R=sc.R, K=sc.K, cell_radius=sc.cell_radius, tx_power_dbm=sc.tx_power_dbm,
                          carrier_freq=sc.carrier_freq, bandwidth=sc.bandwidth,
                          noise_figure_db=sc.noise_figure_db, sigma_g=math.sqrt(sc.sigma_g2),
                          pathloss_exponent=sc.pathloss_exponent,
                          pathloss_ref_db=sc.pathloss_ref_db, min_distance=sc.min_distance)


def link_budget(cfg: ExperimentConfig) -> tuple[float, float]:
    """``(p_s, sigma_n^2)`` of the configured operating point."""
    sc = cfg.scenario
    if sc.mode == "cell":
        p = scenario_params(cfg)
        return p.tx_power_w, p.noise_power_w
    snr = 10 ** (sc.snr_db / 10)
    p_s = 1.0
    if sc.snr_definition == "matched_filter":
        return p_s, 2 * sc.R * sc.sigma_g2 * p_s / snr
    return p_s, 2 * sc.sigma_g2 * sc.K * p_s / snr


def device_range(cfg: ExperimentConfig) -> DeviceRange:
    return DeviceRange(cfg.device.omega_min, cfg.device.omega_max)


def oa_model(cfg: ExperimentConfig) -> OaModel | None:
    oa = cfg.oa
    if oa.olg_db is None:
        return None
    return OaModel.from_db(oa.olg_db, gbp=oa.gbp, ideal_inverters=oa.ideal_inverters,
                           ideal_followers=oa.ideal_followers)


def _lsfc(cfg, params, gen, batch, point_stream):
    if cfg.scenario.mode == "snr":
        return np.ones(batch + (params.K,))
    if cfg.scenario.freeze_lsfc:
        lam = lambda_from_distance(ut_distances(params, point_stream.child(_LSFC)), params)
        return np.broadcast_to(lam, batch + (params.K,))
    return lambda_from_distance(ut_distances(params, gen, batch), params)


@dataclass
class FrameBatch:
    chan: object
    bits: np.ndarray
    s: np.ndarray
    y: np.ndarray
    rho: float
    const: Constellation


def draw_frames(cfg: ExperimentConfig, point_stream: RngStream, gen: np.random.Generator,
                n: int) -> FrameBatch:
    params = scenario_params(cfg)
    p_s, noise_var = link_budget(cfg)
    rho = noise_var / p_s
    batch = (n,)
    G_c = draw_ssfc(params, gen, batch)
    lam = _lsfc(cfg, params, gen, batch, point_stream)
    chan = make_realization(params, G_c, lam, rho)
    const = Constellation(cfg.scenario.qam_order, p_s)
    bits = random_bits(const, params.K, gen, batch)
    s = stack(const.modulate(bits))
    clean = np.einsum("bij,bj->bi", chan.H, s)
    y = apply_awgn(clean, math.sqrt(noise_var), gen)
    return FrameBatch(chan=chan, bits=bits, s=s, y=y, rho=rho, const=const)


def build_program(cfg: ExperimentConfig, chan, gen, strict: bool = False):
    kind = DetectorKind(cfg.detector.variant, float(np.asarray(chan.rho)))
    scheme = MappingScheme(cfg.mapping.scheme, cfg.mapping.beta)
    rng = device_range(cfg)
    build = build_proposed if cfg.topology == "proposed" else build_conventional
    return build(chan, kind, scheme, rng, cfg.device.sigma_m * rng.omega, gen,
                 c_overflow=cfg.mapping.c_overflow, c_slots=cfg.mapping.c_slots, strict=strict,
                 deviate_theta=cfg.device.deviate_theta,
                 theta_placement=cfg.mapping.theta_placement)


def circuit_estimate(cfg: ExperimentConfig, prog, y):
    """Run the analog detector on ``y``; returns ``(s_hat, program, solution)``."""
    v_in, prog = prepare_input(prog, y, cfg.oa.dac_bits)
    oa = oa_model(cfg)
    sol = solve_ideal(prog, v_in) if oa is None else solve_finite_gain(prog, v_in, oa)
    v_out = quantize(sol.v_out, cfg.oa.adc_bits, cfg.oa.adc_full_scale)
    return descale(prog, v_out), prog, sol


def _take(obj, idx):
    """Index the batch axis of every array field of a dataclass."""
    kw = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray) and v.ndim > 0:
            kw[f.name] = v[idx]
        elif hasattr(v, "__dataclass_fields__") and not isinstance(v, Constellation):
            kw[f.name] = _take(v, idx)
        else:
            kw[f.name] = v
    return type(obj)(**kw)


def _estimate(cfg, fb: FrameBatch, gen):
    """Estimates for a batch.

    Returns ``(s_hat, ok, clamped, truncated, mapped)``: ``ok`` marks frames
    that produced an estimate and ``clamped`` those whose program could not be
    represented exactly and ran with devices clamped to the window.
    """
    n = fb.y.shape[0]
    if cfg.topology == "digital":
        kind = DetectorKind(cfg.detector.variant, fb.rho)
        return detect(fb.chan.H, fb.y, kind), np.ones(n, bool), np.zeros(n, bool), np.zeros(n, int), 0
    prog = build_program(cfg, fb.chan, gen)
    clamped = ~np.asarray(prog.valid, bool)
    ok = np.ones(n, bool)
    try:
        s_hat, _, _ = circuit_estimate(cfg, prog, fb.y)
    except SimulationError:
        s_hat = np.zeros_like(fb.s)
        for i in range(n):
            if not ok[i]:
                continue
            try:
                s_hat[i] = circuit_estimate(cfg, _take(prog, i), fb.y[i])[0]
            except SimulationError as exc:
                log.debug("frame %d failed: %s", i, exc)
                ok[i] = False
    ok &= np.all(np.isfinite(s_hat), axis=-1)
    return s_hat, ok, clamped, np.asarray(prog.truncated), prog.mapped_entries


def simulate_batch(cfg: ExperimentConfig, point_idx: int, batch_idx: int, n: int) -> PointStats:
    point_stream = RngStream(cfg.seed, point_idx)
    gen = point_stream.child(_FRAMES, batch_idx).generator()
    fb = draw_frames(cfg, point_stream, gen, n)
    s_hat, ok, clamped, truncated, mapped = _estimate(cfg, fb, gen)
    errs = count_bit_errors(s_hat[ok], fb.bits[ok], fb.const)
    clean = np.einsum("bij,bj->bi", fb.chan.H, fb.s)
    return PointStats(
        frames=n, failed=int(n - ok.sum()), clamped=int(clamped.sum()), bit_errors=int(errs.sum()),
        bits=int(fb.bits[ok].size), sq_err=float(np.sum((s_hat[ok] - fb.s[ok]) ** 2)),
        sig_energy=float(np.sum(fb.s[ok] ** 2)),
        truncated=int(np.sum(truncated[ok])) if np.ndim(truncated) else 0,
        mapped=int(mapped * ok.sum()),
        rx_signal=float(np.sum(clean ** 2)), rx_noise=float(np.sum((fb.y - clean) ** 2)))


def hardware_metrics(cfg: ExperimentConfig, point_idx: int) -> tuple[float, float, float]:
    """``(power_w, tops_per_watt, settle_time_s)`` averaged over a few frames."""
    nan = float("nan")
    if cfg.topology == "digital" or not (cfg.metrics.power or cfg.metrics.transient):
        return nan, nan, nan
    m = cfg.metrics
    point_stream = RngStream(cfg.seed, point_idx)
    gen = point_stream.child(_METRICS).generator()
    fb = draw_frames(cfg, point_stream, gen, m.metric_frames)
    prog = build_program(cfg, fb.chan, gen)
    v_in, prog = prepare_input(prog, fb.y, cfg.oa.dac_bits)
    oa = oa_model(cfg) or OaModel(gbp=cfg.oa.gbp)
    pp = PowerParams(m.p_oa, m.p_dac, m.p_adc, m.include_array_static)
    powers, settles = [], []
    for i in range(m.metric_frames):
        single = _take(prog, i)
        try:
            sol = solve_finite_gain(single, v_in[i], oa)
            powers.append(estimate_power(single, sol, cfg.scenario.R, cfg.scenario.K, pp).total)
            if m.transient:
                settles.append(solve_transient(single, v_in[i], oa, settle_tol=m.settle_tol).settle_time)
        except SimulationError as exc:
            log.debug("metrics frame %d failed: %s", i, exc)
    if not powers:
        return nan, nan, nan
    power = float(np.mean(powers))
    settle = float(np.mean(settles)) if settles else nan
    t_compute = settle if m.transient and settles else m.t_compute
    flops = count_flops(cfg.scenario.R, cfg.scenario.K, cfg.detector.variant)
    tops = energy_efficiency(flops, power, t_compute).tops_per_watt if m.power else nan
    return (power if m.power else nan), tops, settle


def run_point(cfg: ExperimentConfig, point_idx: int, pool: ThreadPoolExecutor | None = None) -> PointStats:
    stop = cfg.stop
    total = PointStats()
    scheduled = 0
    batch_idx = 0
    width = cfg.threads if pool is not None else 1

    def done():
        return total.frames >= stop.max_frames or (
            stop.target_bit_errors > 0 and total.bit_errors >= stop.target_bit_errors)

    while not done():
        jobs = []
        for _ in range(width):
            if scheduled >= stop.max_frames:
                break
            n = min(stop.batch_frames, stop.max_frames - scheduled)
            jobs.append((batch_idx, n))
            scheduled += n
            batch_idx += 1
        if not jobs:
            break
        if pool is None:
            results = [simulate_batch(cfg, point_idx, b, n) for b, n in jobs]
        else:
            results = list(pool.map(lambda job: simulate_batch(cfg, point_idx, *job), jobs))
        for r in results:
            if done():
                break
            total.merge(r)
        scheduled = total.frames
    return total


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """One result row per sweep value."""
    rows = []
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for idx, value in enumerate(cfg.sweep.values):
            pcfg = point_config(cfg, value)
            st = run_point(pcfg, idx, pool)
            if st.frames and st.failed == st.frames:
                raise SimulationError(f"every frame failed at {cfg.sweep.axis}={value:g}")
            power, tops, settle = hardware_metrics(pcfg, idx)
            if pcfg.scenario.mode == "cell" and st.rx_noise > 0:
                snr_db = 10 * math.log10(st.rx_signal / st.rx_noise)
            else:
                snr_db = pcfg.scenario.snr_db
            rows.append(ResultRow(
                sweep_value=float(value), snr_db=snr_db,
                ber=st.bit_errors / st.bits if st.bits else float("nan"),
                bit_errors=st.bit_errors, bits=st.bits,
                nmse=st.sq_err / st.sig_energy if st.sig_energy else float("nan"),
                power_w=power, tops_per_watt=tops, settle_time_s=settle,
                truncated_fraction=st.truncated / st.mapped if st.mapped else 0.0,
                seed=cfg.seed, frames=st.frames, failed_frames=st.failed,
                clamped_frames=st.clamped))
            log.info("%s %s=%g ber=%.3e nmse=%.3e frames=%d failed=%d clamped=%d", cfg.name,
                     cfg.sweep.axis, value, rows[-1].ber, rows[-1].nmse, st.frames, st.failed,
                     st.clamped)
    finally:
        if pool is not None:
            pool.shutdown()
    return rows
