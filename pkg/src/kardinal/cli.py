"""``kardinal`` command-line interface.

Subcommands: ``backtest``, ``depth-diag``, ``select`` and ``synth``. Exit
status is 0 on success, 1 for configuration errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .backtest import STRATEGIES, BacktestConfig, run_walk_forward, select_at
from .encoding import SelectionProblem
from .errors import ConfigError, DataError, KardinalError
from .market_data import estimate_moments, load_prices, synth_prices
from .qaoa import depth_sweep
from .report import RunManifest, dumps, file_digest, write_backtest, write_depth_diag, write_json

log = logging.getLogger("kardinal")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


def bundled(name: str) -> Path:
    return Path(str(resources.files("kardinal") / "data" / name))


def worker_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("KARDINAL_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"KARDINAL_THREADS must be an integer, got {cap!r}") from exc
    return n


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_config(path, args) -> BacktestConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    overrides = {
        "seed": getattr(args, "seed", None),
        "p_max": getattr(args, "p_max", None),
        "free_initial_fill": True if getattr(args, "free_initial_fill", False) else None,
        "hrp_shrinkage": True if getattr(args, "hrp_shrinkage", False) else None,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return BacktestConfig.from_dict(doc)


def _inputs(args):
    config_path = Path(args.config) if args.config else bundled("default_config.json")
    data_path = Path(args.data) if args.data else bundled("fixture_prices.csv")
    config = load_config(config_path, args)
    panel = load_prices(data_path, config.tickers)
    return config_path, data_path, config, panel


def _finish_manifest(manifest: RunManifest, out: Path, outputs) -> None:
    manifest.finished = _now()
    manifest.outputs = {Path(p).name: file_digest(p) for p in outputs}
    write_json(out / "manifest.json", manifest.to_json())


def cmd_backtest(args) -> int:
    started = _now()
    config_path, data_path, config, panel = _inputs(args)
    out = Path(args.out)
    result = run_walk_forward(panel, config, workers=worker_count())
    paths = write_backtest(result, out)
    write_json(out / "diagnostics.json", {"months": result.timings})
    manifest = RunManifest.for_inputs("backtest", config.to_dict(), config.seed, [config_path, data_path], started)
    _finish_manifest(manifest, out, paths.values())
    for s in STRATEGIES:
        m = result.summary[s]
        print(f"{s:8s} total {m.total_return:+.4f}  vol {m.ann_vol:.4f}  sharpe {m.sharpe:.3f}  "
              f"mdd {m.max_drawdown:.4f}  turnover {m.avg_monthly_turnover:.4f}")
    return EXIT_OK


def _problem_at(config: BacktestConfig, panel, asof) -> SelectionProblem:
    mom = estimate_moments(panel, asof, config.lookback)
    return SelectionProblem(mom.mu_ann, mom.sigma_ann, config.q, config.k, frozenset(), config.kappa)


def _asof(args, panel):
    if args.asof:
        return np.datetime64(args.asof, "D")
    return panel.dates[-1]


def cmd_depth_diag(args) -> int:
    started = _now()
    config_path, data_path, config, panel = _inputs(args)
    out = Path(args.out)
    sweep = depth_sweep(_problem_at(config, panel, _asof(args, panel)), config.p_max, config.qaoa, worker_count())
    paths = write_depth_diag(sweep, out)
    manifest = RunManifest.for_inputs("depth-diag", config.to_dict(), config.seed, [config_path, data_path], started)
    _finish_manifest(manifest, out, paths.values())
    for d in sweep.depths:
        print(f"p={d.p}  cost {d.final_cost}  iters {d.iterations}  |grad| {d.grad_norm}  {d.wall_ms:.1f} ms")
    return EXIT_OK


def cmd_select(args) -> int:
    _, _, config, panel = _inputs(args)
    asof = _asof(args, panel)
    picks = select_at(panel, config, asof, workers=worker_count())
    doc = {"asof": str(asof), "tickers": list(panel.tickers), "strategies": {}}
    for s in STRATEGIES:
        entry = picks[s]
        alloc = entry["allocation"]
        sel = entry["selection"]
        doc["strategies"][s] = {
            "selection": sel,
            "selected_tickers": [t for t, b in zip(panel.tickers, sel) if b == "1"] if sel else None,
            "cost": entry["cost"],
            "weights": {t: float(w) for t, w in zip(panel.tickers, alloc.weights)},
            "fallback_used": alloc.fallback_used,
        }
    sys.stdout.write(dumps(doc))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        panel = synth_prices(
            args.seed if args.seed is not None else 42,
            n_assets=args.n_assets,
            n_days=args.n_days,
            drift=args.drift,
            vol=args.vol,
            correlation=args.correlation,
            start=args.start,
        )
    except (ValueError, KardinalError) as exc:
        raise ConfigError(f"invalid synthetic parameters: {exc}") from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    panel.write_csv(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kardinal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True, asof=False):
        p.add_argument("--config", help="JSON config (default: bundled)")
        p.add_argument("--data", help="price CSV (default: bundled fixture)")
        p.add_argument("--seed", type=int)
        p.add_argument("--p-max", type=int, dest="p_max")
        p.add_argument("--free-initial-fill", action="store_true", dest="free_initial_fill")
        p.add_argument("--hrp-shrinkage", action="store_true", dest="hrp_shrinkage")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if asof:
            p.add_argument("--asof", help="decision date YYYY-MM-DD (default: last panel date)")

    common(sub.add_parser("backtest", help="monthly walk-forward backtest"))
    common(sub.add_parser("depth-diag", help="QAOA depth-scaling diagnostics"), asof=True)
    common(sub.add_parser("select", help="single-date selection as JSON on stdout"), out=False, asof=True)

    synth = sub.add_parser("synth", help="write a synthetic price panel")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--n-assets", type=int, default=10, dest="n_assets")
    synth.add_argument("--n-days", type=int, default=500, dest="n_days")
    synth.add_argument("--drift", type=float, default=0.1)
    synth.add_argument("--vol", type=float, default=0.25)
    synth.add_argument("--correlation", type=float, default=0.3)
    synth.add_argument("--start", default="2024-01-02")
    synth.add_argument("--out", required=True, help="output CSV path")
    return parser


COMMANDS = {"backtest": cmd_backtest, "depth-diag": cmd_depth_diag, "select": cmd_select, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"kardinal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"kardinal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
