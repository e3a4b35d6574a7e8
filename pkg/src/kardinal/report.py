"""Serialization helpers: 17-significant-digit JSON/CSV writers, their readers, and run manifests."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ",".join(pad + _encode(v, indent, level + 1) for v in obj) + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (pad + json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items())
        return "{" + ",".join(items) + end + "}"
    if dataclasses.is_dataclass(obj):
        return _encode(dataclasses.asdict(obj), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits.

    Infinities and NaN use the ``Infinity``/``NaN`` literals that
    :func:`json.loads` accepts.
    """
    return _encode(obj, indent, 0) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_table(path: str | Path, header, rows) -> None:
    """CSV with floats at 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: dict[str, str]  # path -> sha256
    started: str
    finished: str = ""
    version: str = __version__
    outputs: dict[str, str] = dataclasses.field(default_factory=dict)

    @classmethod
    def for_inputs(cls, command: str, config: dict, seed, paths, started: str) -> "RunManifest":
        return cls(command, config, seed, {str(p): file_digest(p) for p in paths}, started)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "RunManifest":
        return cls(**doc)


# ---------------------------------------------------------------------------
# backtest exports


def write_backtest(result, out_dir: str | Path) -> dict[str, Path]:
    """Write result.json plus values, turnover and weights CSVs; returns the paths."""
    from .backtest import STRATEGIES

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("result.json", "values.csv", "turnover.csv", "weights.csv")}
    write_json(paths["result.json"], result.to_json())

    first = result.records[STRATEGIES[0]]
    rows = [[first[0].date] + [float(result.config.initial_capital)] * len(STRATEGIES)]
    for m, rec in enumerate(first):
        rows.append([rec.end_date] + [float(result.records[s][m].value) for s in STRATEGIES])
    write_table(paths["values.csv"], ["date", *STRATEGIES], rows)

    rows = [[rec.date] + [float(result.records[s][m].turnover) for s in STRATEGIES] for m, rec in enumerate(first)]
    write_table(paths["turnover.csv"], ["date", *STRATEGIES], rows)

    rows = []
    for s in STRATEGIES:
        for rec in result.records[s]:
            rows.append([rec.date, s] + [float(w) for w in rec.weights])
    write_table(paths["weights.csv"], ["date", "strategy", *result.tickers], rows)
    return paths


def write_depth_diag(sweep, out_dir: str | Path) -> dict[str, Path]:
    """Per-depth table (CSV + JSON with traces) and a long-format trace CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("depth_table.csv", "depth_table.json", "traces.csv")}
    cols = ["p", "final_cost", "iterations", "grad_norm", "wall_ms"]
    table = [[d.p, d.final_cost, d.iterations, d.grad_norm, d.wall_ms] for d in sweep.depths]
    write_table(paths["depth_table.csv"], cols, [["" if v is None else v for v in row] for row in table])
    doc = {
        "best_bitstring": sweep.bitstring,
        "best_cost": sweep.cost,
        "depths": [
            {
                **d.to_json(),
                "trace": {
                    "cost": list(d.trace.costs) if d.trace else [],
                    "grad_norm": list(d.trace.grad_norms) if d.trace else [],
                },
            }
            for d in sweep.depths
        ],
    }
    write_json(paths["depth_table.json"], doc)
    rows = []
    for d in sweep.depths:
        if d.trace:
            for it, (c, g) in enumerate(zip(d.trace.costs, d.trace.grad_norms), start=1):
                rows.append([d.p, it, float(c), float(g)])
    write_table(paths["traces.csv"], ["p", "iteration", "cost", "grad_norm"], rows)
    return paths
