"""CSV and gnuplot-script writers for experiment results."""
from __future__ import annotations

import io
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

from .experiment import CSV_COLUMNS, ResultRow

PLOT_KINDS = ("ber_vs_snr", "nmse_surface", "power_vs_k", "tops_vs_k", "settle_vs_k",
              "metric_vs_sweep")

# CSV column positions (1-based, as gnuplot counts them)
_COL = {name: i + 1 for i, name in enumerate(CSV_COLUMNS)}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def csv_text(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO(newline="")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(getattr(row, c)) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue()


def emit_csv(rows: Iterable[ResultRow], path: str | os.PathLike) -> Path:
    """Write rows with the fixed header, shortest round-trip floats and LF endings."""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(csv_text(rows))
    return path


def _quote(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _series(csv_paths: Sequence[str | os.PathLike], labels: Sequence[str] | None):
    paths = [Path(p).name for p in csv_paths]
    if labels is None:
        labels = [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise ValueError("need one label per CSV file")
    return paths, list(labels)


def plot_script(kind: str, csv_paths: Sequence[str | os.PathLike], *,
                labels: Sequence[str] | None = None, title: str = "",
                sweep_label: str = "sweep value", surface_values: Sequence[float] | None = None,
                reference_tops: float | None = None, output: str | None = None) -> str:
    """Gnuplot source plotting the given CSV files (referenced by file name)."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if not csv_paths:
        raise ValueError("nothing to plot")
    paths, labels = _series(csv_paths, labels)
    out = output or (Path(paths[0]).stem + ".png")
    lines = [
        "set datafile separator ','",
        "set key outside right",
        "set key autotitle columnhead",  # first CSV line is the header
        "set grid",
        "set terminal pngcairo size 900,600",
        f"set output {_quote(out)}",
    ]
    if title:
        lines.append(f"set title {_quote(title)}")
    c = _COL

    def plot_cmd(plot, items):
        return plot + " " + ", \\\n     ".join(items)

    if kind == "ber_vs_snr":
        lines += ["set logscale y", "set format y '10^{%L}'",
                  "set xlabel 'SNR (dB)'", "set ylabel 'BER'"]
        items = [f"{_quote(p)} using {c['snr_db']}:{c['ber']} with linespoints "
                 f"title {_quote(lbl)}" for p, lbl in zip(paths, labels)]
        lines.append(plot_cmd("plot", items))
    elif kind == "nmse_surface":
        if surface_values is None or len(surface_values) != len(paths):
            raise ValueError("nmse_surface needs one second-axis value per CSV file")
        lines += ["set logscale z", "set xlabel 'beta'", "set ylabel 'sigma_m / omega'",
                  "set zlabel 'NMSE' rotate parallel", "set hidden3d", "set ticslevel 0"]
        items = [f"{_quote(p)} using {c['sweep_value']}:({float(v)!r}):{c['nmse']} "
                 f"with lines title {_quote(lbl)}"
                 for p, lbl, v in zip(paths, labels, surface_values)]
        lines.append(plot_cmd("splot", items))
    elif kind in ("power_vs_k", "tops_vs_k", "settle_vs_k"):
        col, ylabel = {
            "power_vs_k": (c["power_w"], "power (W)"),
            "tops_vs_k": (c["tops_per_watt"], "energy efficiency (TOPS/W)"),
            "settle_vs_k": (c["settle_time_s"], "settling time (s)"),
        }[kind]
        lines += ["set style data histograms", "set style histogram clustered gap 1",
                  "set style fill solid 0.8 border -1", "set boxwidth 0.9",
                  "set xlabel 'number of UTs K'", f"set ylabel {_quote(ylabel)}",
                  "set yrange [0:*]"]
        if kind == "tops_vs_k":
            lines.append("set logscale y")
            lines.append("set yrange [*:*]")
        items = [f"{_quote(p)} using {col}:xtic(int(${c['sweep_value']})) "
                 f"title {_quote(lbl)}" for p, lbl in zip(paths, labels)]
        if reference_tops is not None and kind == "tops_vs_k":
            items.append(f"{float(reference_tops)!r} with lines dashtype 2 title 'GPU'")
        lines.append(plot_cmd("plot", items))
    else:
        lines += [f"set xlabel {_quote(sweep_label)}", "set ylabel 'BER'", "set logscale y",
                  "set y2label 'NMSE'", "set logscale y2", "set y2tics"]
        items = []
        for p, lbl in zip(paths, labels):
            items.append(f"{_quote(p)} using {c['sweep_value']}:{c['ber']} "
                         f"with linespoints title {_quote(lbl + ' BER')}")
            items.append(f"{_quote(p)} using {c['sweep_value']}:{c['nmse']} axes x1y2 "
                         f"with linespoints dashtype 2 title {_quote(lbl + ' NMSE')}")
        lines.append(plot_cmd("plot", items))
    return "\n".join(lines) + "\n"


def emit_plot_script(rows: Sequence[ResultRow] | Sequence[Sequence[ResultRow]], kind: str,
                     path: str | os.PathLike, csv_paths: Sequence[str | os.PathLike] = (),
                     **kwargs) -> Path:
    """Write a gnuplot script for ``kind`` next to the CSV files it reads.

    ``rows`` is only used to refuse plotting empty results; the script reads
    the data from ``csv_paths`` (default: ``path`` with a ``.csv`` suffix).
    """
    if not rows or all(isinstance(r, (list, tuple)) and not r for r in rows):
        raise ValueError("cannot plot an empty result set")
    path = Path(path)
    csv_paths = list(csv_paths) or [path.with_suffix(".csv")]
    kwargs.setdefault("output", path.with_suffix(".png").name)
    text = plot_script(kind, csv_paths, **kwargs)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return path


def default_plot_kind(axis: str) -> str:
    return {"snr_db": "ber_vs_snr", "k_users": "power_vs_k"}.get(axis, "metric_vs_sweep")
