"""Named experiment bundles that regenerate the standard figure set.

A recipe is a list of curves. Each curve is a set of dotted-key overrides
applied on top of the user's base configuration; every curve is run as an
independent experiment and written to ``<out>/<recipe>_<curve>.csv``. One
gnuplot script per recipe, ``<out>/<recipe>.gp``, plots all its curves.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError
from .experiment import ResultRow, run_experiment
from .output import emit_csv, emit_plot_script

log = logging.getLogger(__name__)

SNR_GRID = [8.0, 12.0, 16.0, 20.0, 24.0, 28.0]
BETA_GRID = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
SIGMA_GRID = [0.0, 0.005, 0.01, 0.015, 0.02]
K_GRID = [2.0, 4.0, 8.0, 16.0]


@dataclass(frozen=True)
class Curve:
    name: str
    overrides: dict
    label: str = ""
    surface_value: float | None = None


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    plot_kind: str
    common: dict
    curves: tuple[Curve, ...]
    plot_options: dict = field(default_factory=dict)

    def curve(self, name: str) -> Curve:
        for c in self.curves:
            if c.name == name:
                return c
        raise ConfigError(f"recipe {self.name} has no curve {name!r}")

    def config(self, base: ExperimentConfig, curve: str | Curve) -> ExperimentConfig:
        c = self.curve(curve) if isinstance(curve, str) else curve
        name = f"{self.name}_{c.name}"
        try:
            return base.with_overrides(name=name, **self.common, **c.overrides)
        except ValueError as exc:
            raise ConfigError(f"recipe {self.name}: {exc}") from exc


def _waterfall_common(**extra) -> dict:
    # BER waterfalls use the matched-filter SNR so the swept range shows
    # measurable error rates for 64-QAM on a 4 x 64 link.
    d = {"scenario.snr_definition": "matched_filter", "sweep.axis": "snr_db",
         "sweep.values": SNR_GRID, "metrics.power": False}
    d.update(extra)
    return d


def _hw_common(**extra) -> dict:
    d = {"sweep.axis": "k_users", "sweep.values": K_GRID, "oa.olg_db": 100.0,
         "stop.max_frames": 200, "stop.target_bit_errors": 0, "stop.batch_frames": 200,
         "metrics.power": True}
    d.update(extra)
    return d


def _build() -> dict[str, Recipe]:
    r = {}
    r["fig3"] = Recipe(
        "fig3", "BER vs SNR for several OA open-loop gains (AMF, no deviation)", "ber_vs_snr",
        _waterfall_common(**{"mapping.scheme": "AMF", "device.sigma_m": 0.0}),
        (Curve("digital", {"topology": "digital"}, "digital"),)
        + tuple(Curve(f"olg{int(g)}", {"oa.olg_db": g}, f"OLG {int(g)} dB")
                for g in (40.0, 60.0, 80.0, 100.0)))
    r["fig4"] = Recipe(
        "fig4", "BER vs SNR under FMF for several beta (no deviation)", "ber_vs_snr",
        _waterfall_common(**{"mapping.scheme": "FMF", "device.sigma_m": 0.0}),
        (Curve("digital", {"topology": "digital"}, "digital"),)
        + tuple(Curve(f"beta{int(b)}", {"mapping.beta": b}, f"FMF beta={int(b)}")
                for b in (1.0, 2.0, 3.0, 4.0)))
    r["fig5"] = Recipe(
        "fig5", "BER vs SNR under FMF for several beta with 1% deviation", "ber_vs_snr",
        _waterfall_common(**{"mapping.scheme": "FMF", "device.sigma_m": 0.01}),
        (Curve("digital", {"topology": "digital"}, "digital"),)
        + tuple(Curve(f"beta{int(b)}", {"mapping.beta": b}, f"FMF beta={int(b)}")
                for b in BETA_GRID))
    fig6 = []
    for topo in ("proposed", "conventional"):
        for scheme in ("FMF", "AMF"):
            for sm in SIGMA_GRID:
                tag = f"{topo}_{scheme}_sm{sm:g}"
                fig6.append(Curve(tag, {"topology": topo, "mapping.scheme": scheme,
                                        "device.sigma_m": sm},
                                  f"{topo} {scheme} sigma_m={sm:g}", surface_value=sm))
    r["fig6"] = Recipe(
        "fig6", "NMSE over beta and deviation level at 20 dB SNR", "nmse_surface",
        {"scenario.snr_definition": "receive", "scenario.snr_db": 20.0,
         "sweep.axis": "beta", "sweep.values": BETA_GRID,
         "stop.max_frames": 4000, "stop.target_bit_errors": 0, "metrics.power": False},
        tuple(fig6))
    r["fig7"] = Recipe(
        "fig7", "BER vs beta in a cell with random UT positions, 0.5% deviation",
        "metric_vs_sweep",
        {"scenario.mode": "cell", "device.sigma_m": 0.005, "sweep.axis": "beta",
         "sweep.values": BETA_GRID, "metrics.power": False},
        tuple(Curve(f"{topo}_{scheme}", {"topology": topo, "mapping.scheme": scheme},
                    f"{topo} {scheme}")
              for topo in ("proposed", "conventional") for scheme in ("FMF", "AMF")),
        {"sweep_label": "beta"})
    hw_curves = (Curve("proposed", {"topology": "proposed"}, "proposed"),
                 Curve("conventional", {"topology": "conventional"}, "conventional"))
    r["fig8"] = Recipe("fig8", "circuit power vs number of UTs", "power_vs_k",
                       _hw_common(), hw_curves)
    r["fig9"] = Recipe("fig9", "energy efficiency vs number of UTs", "tops_vs_k",
                       _hw_common(), hw_curves)
    r["timing"] = Recipe(
        "timing", "settling time of the single-pole OA model vs number of UTs", "settle_vs_k",
        _hw_common(**{"metrics.transient": True, "metrics.power": True}),
        tuple(Curve(f"{topo}_gbp{int(g / 1e6)}", {"topology": topo, "oa.gbp": g},
                    f"{topo} GBP {int(g / 1e6)} MHz")
              for topo in ("proposed", "conventional") for g in (500e6, 1000e6)))
    return r


RECIPES: dict[str, Recipe] = _build()


def get_recipe(name: str) -> Recipe:
    try:
        return RECIPES[name]
    except KeyError:
        raise ConfigError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None


def run_recipe(name: str, base: ExperimentConfig,
               curves: list[str] | None = None) -> dict[str, list[ResultRow]]:
    """Run (a subset of) a recipe; returns the rows of each curve in order."""
    recipe = get_recipe(name)
    selected = [recipe.curve(c) for c in curves] if curves else list(recipe.curves)
    results = {}
    for curve in selected:
        log.info("recipe %s curve %s", name, curve.name)
        results[curve.name] = run_experiment(recipe.config(base, curve))
    return results


def write_recipe(name: str, results: dict[str, list[ResultRow]], out_dir: str | Path,
                 gpu_tops_per_watt: float | None = None) -> list[Path]:
    """Write ``<recipe>_<curve>.csv`` per curve and the ``<recipe>.gp`` plot script."""
    recipe = get_recipe(name)
    out_dir = Path(out_dir)
    selected = [recipe.curve(c) for c in results]
    paths = [emit_csv(rows, out_dir / f"{name}_{c}.csv") for c, rows in results.items()]
    opts = dict(recipe.plot_options)
    if recipe.plot_kind == "tops_vs_k":
        opts["reference_tops"] = gpu_tops_per_watt
    if recipe.plot_kind == "nmse_surface":
        opts["surface_values"] = [c.surface_value for c in selected]
    script = emit_plot_script(list(results.values()), recipe.plot_kind, out_dir / f"{name}.gp",
                              csv_paths=paths, labels=[c.label or c.name for c in selected],
                              title=recipe.description, **opts)
    return paths + [script]
