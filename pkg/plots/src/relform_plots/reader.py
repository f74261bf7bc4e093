"""Schema-validated readers for the simulator's CSV output files.

Three file shapes are understood, detected from the header row:

* trace files: run, k, estimator, eps, cov_trace, affine_residual,
  leader_residual, then one xhat_<i>_<j>_<c> column per edge component;
* single-estimator summaries: k, estimator, eps_mean, eps_std, cov_trace;
* comparison summaries: k plus eps_mean_<name>, eps_std_<name>,
  cov_trace_<name> triplets, one per estimator.

Estimator labels always come from file contents (the estimator column or
the summary column suffixes), never from file names. Any deviation from
the expected columns raises SchemaError naming the file and the column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRACE_FIXED = ["run", "k", "estimator", "eps", "cov_trace", "affine_residual", "leader_residual"]
RUN_SUMMARY_COLUMNS = ["k", "estimator", "eps_mean", "eps_std", "cov_trace"]


class SchemaError(Exception):
    """An input file does not match any known column contract."""


@dataclass
class TraceData:
    path: Path
    estimator: str
    edges: list  # (head, tail) pairs in file order
    dim: int
    runs: dict  # run index -> dict with k, eps, cov_trace, xhat (steps, M*D)

    @property
    def edge_columns(self) -> int:
        return len(self.edges) * self.dim

    def eps_matrix(self) -> np.ndarray:
        """Per-run eps rows aligned on steps (requires equal run lengths)."""
        lengths = {v["eps"].size for v in self.runs.values()}
        if len(lengths) != 1:
            raise SchemaError(f"{self.path}: runs have unequal lengths {sorted(lengths)}")
        return np.vstack([self.runs[r]["eps"] for r in sorted(self.runs)])


@dataclass
class RunSummary:
    path: Path
    estimator: str
    k: np.ndarray
    eps_mean: np.ndarray
    eps_std: np.ndarray
    cov_trace: np.ndarray


@dataclass
class CompareSummary:
    path: Path
    estimators: list
    k: np.ndarray
    eps_mean: dict
    eps_std: dict
    cov_trace: dict


def _read_rows(path: Path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    return rows[0], rows[1:]


def _parse_edge_column(path: Path, name: str):
    parts = name.split("_")
    if len(parts) != 4 or parts[0] != "xhat":
        raise SchemaError(f"{path}: unexpected trace column '{name}'")
    try:
        return int(parts[1]), int(parts[2]), int(parts[3])
    except ValueError:
        raise SchemaError(f"{path}: malformed edge column '{name}'") from None


def _load_trace(path: Path, header, data) -> TraceData:
    edge_names = header[len(TRACE_FIXED):]
    if not edge_names:
        raise SchemaError(f"{path}: trace file has no xhat_* columns")
    triples = [_parse_edge_column(path, name) for name in edge_names]
    dim = max(c for _, _, c in triples) + 1
    edges = []
    for idx, (i, j, c) in enumerate(triples):
        if c != idx % dim:
            raise SchemaError(f"{path}: edge column '{edge_names[idx]}' out of order")
        if c == 0:
            edges.append((i, j))
    if not data:
        raise SchemaError(f"{path}: no data rows (empty run set)")

    runs: dict[int, dict] = {}
    labels = set()
    for line_no, row in enumerate(data, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {line_no} has {len(row)} fields, header has {len(header)}")
        run = int(row[0])
        labels.add(row[2])
        bucket = runs.setdefault(run, {"k": [], "eps": [], "cov_trace": [], "xhat": []})
        bucket["k"].append(int(row[1]))
        bucket["eps"].append(float(row[3]))
        bucket["cov_trace"].append(float(row[4]))
        bucket["xhat"].append([float(v) for v in row[len(TRACE_FIXED):]])
    if len(labels) != 1:
        raise SchemaError(f"{path}: mixed estimator labels {sorted(labels)} in one trace file")
    for bucket in runs.values():
        bucket["k"] = np.array(bucket["k"])
        bucket["eps"] = np.array(bucket["eps"])
        bucket["cov_trace"] = np.array(bucket["cov_trace"])
        bucket["xhat"] = np.array(bucket["xhat"])
    return TraceData(path=path, estimator=labels.pop(), edges=edges, dim=dim, runs=runs)


def _load_run_summary(path: Path, header, data) -> RunSummary:
    if not data:
        raise SchemaError(f"{path}: no data rows (empty run set)")
    labels = {row[1] for row in data}
    if len(labels) != 1:
        raise SchemaError(f"{path}: mixed estimator labels {sorted(labels)}")
    cols = np.array([[row[0], row[2], row[3], row[4]] for row in data], dtype=float)
    return RunSummary(
        path=path,
        estimator=labels.pop(),
        k=cols[:, 0].astype(int),
        eps_mean=cols[:, 1],
        eps_std=cols[:, 2],
        cov_trace=cols[:, 3],
    )


def _load_compare_summary(path: Path, header, data) -> CompareSummary:
    names = []
    for idx in range(1, len(header), 3):
        block = header[idx : idx + 3]
        if len(block) != 3:
            raise SchemaError(f"{path}: dangling summary column '{header[idx]}'")
        prefixes = ("eps_mean_", "eps_std_", "cov_trace_")
        suffixes = []
        for col, prefix in zip(block, prefixes):
            if not col.startswith(prefix):
                raise SchemaError(f"{path}: expected column '{prefix}<estimator>', found '{col}'")
            suffixes.append(col[len(prefix):])
        if len(set(suffixes)) != 1:
            raise SchemaError(f"{path}: inconsistent estimator suffixes {suffixes}")
        names.append(suffixes[0])
    if not names:
        raise SchemaError(f"{path}: comparison summary has no estimator columns")
    if not data:
        raise SchemaError(f"{path}: no data rows (empty run set)")
    values = np.array(data, dtype=float)
    if values.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged rows")
    out = CompareSummary(
        path=path, estimators=names, k=values[:, 0].astype(int),
        eps_mean={}, eps_std={}, cov_trace={},
    )
    for pos, name in enumerate(names):
        base = 1 + 3 * pos
        out.eps_mean[name] = values[:, base]
        out.eps_std[name] = values[:, base + 1]
        out.cov_trace[name] = values[:, base + 2]
    return out


def load_input(path) -> TraceData | RunSummary | CompareSummary:
    """Load one input file, dispatching on its header row."""
    path = Path(path)
    header, data = _read_rows(path)
    if header[: len(TRACE_FIXED)] == TRACE_FIXED:
        return _load_trace(path, header, data)
    if header == RUN_SUMMARY_COLUMNS:
        return _load_run_summary(path, header, data)
    if header and header[0] == "k" and len(header) > 1 and header[1].startswith("eps_mean_"):
        return _load_compare_summary(path, header, data)
    expected = f"{TRACE_FIXED + ['xhat_*']} or {RUN_SUMMARY_COLUMNS} or k,eps_mean_<name>,..."
    got = header[0] if header else "<empty>"
    raise SchemaError(f"{path}: unrecognized header starting at column '{got}'; expected {expected}")
