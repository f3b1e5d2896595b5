"""``simulate`` command-line client.

By default the experiment runs in-process through the same entry point the
HTTP service uses; ``--server URL`` sends the request to a running service
instead. Either way the CSV files and plot scripts are written locally.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
1 anything else (I/O, unreachable server).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .api import RunRequest, RunResponse, execute
from .config import load_config
from .errors import ConfigError, SimulationError
from .output import default_plot_kind, emit_csv, emit_plot_script
from .recipes import RECIPES, write_recipe

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("mcadetect.cli")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="TOML experiment file (layered over defaults)")
    ap.add_argument("--seed", type=int, help="root seed; beats SIM_SEED and the config file")
    ap.add_argument("--out", help="CSV path, or output directory when --recipe is given")
    ap.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    ap.add_argument("--recipe", choices=sorted(RECIPES), help="regenerate a figure")
    ap.add_argument("--curve", action="append", dest="curves",
                    help="restrict a recipe to this curve (repeatable)")
    ap.add_argument("--server", help="base URL of a running service, e.g. http://127.0.0.1:8000")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _request(args) -> tuple[RunRequest, object]:
    cfg = load_config(args.config)  # validates locally, applies SIM_SEED
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    text = Path(args.config).read_text()
    seed = args.seed if args.seed is not None else cfg.seed
    req = RunRequest(config_toml=text, seed=seed, threads=args.threads,
                     recipe=args.recipe, curves=args.curves)
    return req, cfg


def _remote(url: str, req: RunRequest) -> RunResponse:
    import httpx

    resp = httpx.post(url.rstrip("/") + "/runs", json=req.model_dump(), timeout=None)
    if resp.status_code == 400:
        raise ConfigError(resp.json().get("detail", resp.text))
    if resp.status_code == 500:
        raise SimulationError(resp.json().get("detail", resp.text))
    resp.raise_for_status()
    return RunResponse.model_validate(resp.json())


def write_outputs(resp: RunResponse, cfg, out: str | None) -> list[Path]:
    if resp.recipe:
        results = {c.name: c.rows for c in resp.results}
        return write_recipe(resp.recipe, results, out or "results", resp.gpu_tops_per_watt)
    curve = resp.results[0]
    csv_path = emit_csv(curve.rows, Path(out or resp.out_path))
    script = emit_plot_script(curve.rows, default_plot_kind(cfg.sweep.axis),
                              csv_path.with_suffix(".gp"), csv_paths=[csv_path],
                              labels=[cfg.topology], title=cfg.name)
    return [csv_path, script]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        req, cfg = _request(args)
        resp = _remote(args.server, req) if args.server else execute(req)
        for p in write_outputs(resp, cfg, args.out):
            print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except Exception as exc:  # unreachable server, unexpected HTTP status
        if type(exc).__module__.startswith("httpx"):
            print(f"service error: {exc}", file=sys.stderr)
            return EXIT_OTHER
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
