"""Text persistence for graphs, histograms and experiment results.

A graph saved at ``path`` consists of three files:

* ``path``: the edge list, one ``i j`` line per edge, 0-based, i < j, sorted;
* ``path.header.json``: vertex count, dimension, seed, kernel id, metric,
  domain, root and the vertex-data format;
* ``path.vertices.csv`` (default) with columns ``x0 .. x{d-1}, weight`` and
  any per-vertex auxiliary arrays, every value written with 17 significant
  digits; or ``path.vertices.bin`` holding the same columns as little-endian
  float64, row-major.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .generator import SpatialGraph
from .geometry import BallSpec, BoxSpec, PointCloud
from .weights import WeightVector

GRAPH_FORMAT = "sirg-graph/1"


class FormatError(ValueError):
    """Malformed or inconsistent file contents."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _sidecars(path: Path):
    return (path.with_name(path.name + ".header.json"),
            path.with_name(path.name + ".vertices.csv"),
            path.with_name(path.name + ".vertices.bin"))


def write_graph(G: SpatialGraph, path, vertex_format: str = "csv") -> None:
    if vertex_format not in ("csv", "binary"):
        raise FormatError(f"unknown vertex format {vertex_format!r}")
    path = Path(path)
    header_path, csv_path, bin_path = _sidecars(path)
    i, j = G.edges()
    with open(path, "w") as fh:
        fh.writelines(f"{a} {b}\n" for a, b in zip(i.tolist(), j.tolist()))

    dom = G.locations.domain
    if isinstance(dom, BoxSpec):
        domain = {"kind": "box", "side": dom.side}
    else:
        domain = {"kind": "ball", "radius": dom.radius, "center": list(dom.center)}
    arrays = {k: np.asarray(v, dtype=float) for k, v in G.aux.items()
              if isinstance(v, np.ndarray) and v.shape == (G.n,)}
    scalars = {k: v for k, v in G.aux.items() if k not in arrays}
    d = G.locations.dimension
    columns = [f"x{k}" for k in range(d)] + ["weight"] + [f"aux:{k}" for k in arrays]
    header = {
        "format": GRAPH_FORMAT, "n": G.n, "d": d, "seed": G.seed, "kernel_id": G.kernel_id,
        "metric": G.metric, "root": G.root, "domain": domain, "edges": G.num_edges,
        "vertex_format": vertex_format, "columns": columns,
        "aux_scalars": {k: float(v) for k, v in scalars.items()},
    }
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")

    table = np.column_stack([G.locations.points, G.weights.values] + list(arrays.values())) \
        if G.n else np.zeros((0, len(columns)))
    if vertex_format == "csv":
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows([_fmt(x) for x in row] for row in table)
    else:
        table.astype("<f8").tofile(bin_path)


def read_graph(path) -> SpatialGraph:
    path = Path(path)
    header_path, csv_path, bin_path = _sidecars(path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{header_path}: invalid JSON: {exc}") from None
    if header.get("format") != GRAPH_FORMAT:
        raise FormatError(f"{header_path}: unsupported format {header.get('format')!r}")
    n, d = int(header["n"]), int(header["d"])
    columns = header["columns"]
    if header["vertex_format"] == "csv":
        table = _read_vertex_csv(csv_path, columns, n)
    else:
        raw = np.fromfile(bin_path, dtype="<f8")
        if raw.size != n * len(columns):
            raise FormatError(f"{bin_path}: expected {n * len(columns)} doubles, found {raw.size}")
        table = raw.reshape(n, len(columns)).astype(np.float64)
    ei, ej = _read_edges(path, n)
    if "edges" in header and int(header["edges"]) != ei.shape[0]:
        raise FormatError(f"{path}: header declares {header['edges']} edges, file has {ei.shape[0]}")

    dom = header["domain"]
    domain = BoxSpec(d, float(dom["side"])) if dom["kind"] == "box" else \
        BallSpec(d, float(dom["radius"]), tuple(dom["center"]))
    aux = {c[4:]: table[:, k].copy() for k, c in enumerate(columns) if c.startswith("aux:")}
    aux.update(header.get("aux_scalars", {}))
    return SpatialGraph.from_edges(
        ei, ej, PointCloud(table[:, :d].reshape(n, d), domain), WeightVector(table[:, d]),
        kernel_id=header["kernel_id"], seed=header["seed"], metric=header["metric"],
        root=header["root"], aux=aux)


def _read_vertex_csv(path, columns, n):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != columns:
        raise FormatError(f"{path}:1: header does not match {columns}")
    if len(rows) - 1 != n:
        raise FormatError(f"{path}: expected {n} vertex rows, found {len(rows) - 1}")
    out = np.empty((n, len(columns)))
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise FormatError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
        try:
            out[lineno - 2] = [float(x) for x in row]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: not a number in {row}") from None
    return out


def _read_edges(path, n):
    ei, ej = [], []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'i j', got {s!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer vertex in {s!r}") from None
            if not (0 <= a < n and 0 <= b < n):
                raise FormatError(f"{path}:{lineno}: vertex index out of range for n={n}")
            if a >= b:
                raise FormatError(f"{path}:{lineno}: edges must be written with i < j")
            if (a, b) in seen:
                raise FormatError(f"{path}:{lineno}: duplicate edge {a} {b}")
            seen.add((a, b))
            ei.append(a)
            ej.append(b)
    return np.array(ei, dtype=np.int64), np.array(ej, dtype=np.int64)


# results

@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    config_digest: str
    seed: int
    n: int
    statistic: str
    parameter: str
    value: float
    stderr: float
    replicas: int
    timestamp: str


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRecord))
_INT_COLUMNS = {"seed", "n", "replicas"}
_FLOAT_COLUMNS = {"value", "stderr"}


def config_digest(config) -> str:
    """SHA-256 of the canonical JSON form, independent of key order."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_timestamp() -> str:
    """UTC time stamp; SOURCE_DATE_EPOCH pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _cell(v):
    if isinstance(v, float):
        return _fmt(v) if math.isfinite(v) else repr(v)
    return str(v)


def write_results(records, path, fmt: str = "csv") -> None:
    path = Path(path)
    records = list(records)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(RESULT_COLUMNS)
                for r in records:
                    w.writerow([_cell(getattr(r, c)) for c in RESULT_COLUMNS])
        elif fmt == "json":
            path.write_text(json.dumps([asdict(r) for r in records], indent=1) + "\n")
        else:
            raise FormatError(f"unknown result format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path, fmt: str | None = None) -> list[ResultRecord]:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "json":
        return [ResultRecord(**r) for r in json.loads(path.read_text())]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RESULT_COLUMNS:
        raise FormatError(f"{path}:1: unexpected header")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(RESULT_COLUMNS):
            raise FormatError(f"{path}:{lineno}: expected {len(RESULT_COLUMNS)} fields")
        kw = {}
        for c, v in zip(RESULT_COLUMNS, row):
            kw[c] = int(v) if c in _INT_COLUMNS else float(v) if c in _FLOAT_COLUMNS else v
        out.append(ResultRecord(**kw))
    return out


def write_histogram(hist, path) -> None:
    Path(path).write_text(hist.to_json() + "\n")


def read_histogram(path):
    from .neighborhoods import NeighborhoodHistogram
    return NeighborhoodHistogram.from_json(Path(path).read_text())
