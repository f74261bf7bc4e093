"""Figure rendering: agent paths, covariance-trace curves, error bands.

Axes policy: data-driven limits with a 5% margin, equal aspect for the
paths figure, linear scales unless the log toggle is set. Output images
carry no timestamps, so identical inputs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np

from .reader import CompareSummary, RunSummary, SchemaError, TraceData

# Keyword arguments that keep savefig deterministic for each format.
_CLEAN_METADATA = {
    ".png": {"Software": None},
    ".svg": {"Date": None},
    ".pdf": {"CreationDate": None},
}


def _save(fig, out_path):
    out_path = Path(out_path)
    metadata = _CLEAN_METADATA.get(out_path.suffix.lower(), {})
    fig.savefig(out_path, dpi=120, metadata=metadata)
    plt.close(fig)


def _embedding_operator(edges, dim):
    """Pseudo-inverse mapping stacked edge states to zero-centroid positions.

    Edge (i, j) carries z_i - z_j, so stacking all edges is the lifted
    transposed incidence matrix applied to the positions; the minimum-norm
    inverse pins the unobservable translation at centroid zero.
    """
    nodes = sorted({v for pair in edges for v in pair})
    index = {node: row for row, node in enumerate(nodes)}
    b = np.zeros((len(nodes), len(edges)))
    for col, (i, j) in enumerate(edges):
        b[index[i], col] = 1.0
        b[index[j], col] = -1.0
    lifted_t = np.kron(b.T, np.eye(dim))
    return nodes, np.linalg.pinv(lifted_t)


def render_paths(traces: list[TraceData], out_path, run: int = 0):
    """One panel per estimator: reconstructed agent paths over time."""
    if not traces:
        raise SchemaError("paths figure needs at least one trace file")
    for item in traces:
        if not isinstance(item, TraceData):
            raise SchemaError(f"{item.path}: paths figure needs trace files with xhat_* columns")
    fig, axes = plt.subplots(
        1, len(traces), figsize=(4.2 * len(traces), 4.2), squeeze=False
    )
    for ax, trace in zip(axes[0], traces):
        if run not in trace.runs:
            raise SchemaError(f"{trace.path}: run {run} not present")
        nodes, embed = _embedding_operator(trace.edges, trace.dim)
        xhat = trace.runs[run]["xhat"]
        positions = (xhat @ embed.T).reshape(xhat.shape[0], len(nodes), trace.dim)
        for a, node in enumerate(nodes):
            ax.plot(positions[:, a, 0], positions[:, a, 1], lw=0.9, label=f"agent {node}")
            ax.plot(positions[-1, a, 0], positions[-1, a, 1], "o", ms=4, color=ax.lines[-1].get_color())
        ax.set_title(trace.estimator)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal", adjustable="datalim")
        ax.margins(0.05)
    axes[0][0].legend(fontsize=7, loc="best")
    fig.tight_layout()
    _save(fig, out_path)
    return fig


def _trace_curves(item):
    if isinstance(item, TraceData):
        first = sorted(item.runs)[0]
        run = item.runs[first]
        yield item.estimator, run["k"], run["cov_trace"]
    elif isinstance(item, RunSummary):
        yield item.estimator, item.k, item.cov_trace
    elif isinstance(item, CompareSummary):
        for name in item.estimators:
            yield name, item.k, item.cov_trace[name]
    else:
        raise SchemaError(f"unsupported input {item!r}")


def render_trace(inputs, out_path, log_y: bool = False):
    """Posterior covariance trace over time, one curve per estimator."""
    if not inputs:
        raise SchemaError("trace figure needs at least one input file")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    count = 0
    for item in inputs:
        for label, k, curve in _trace_curves(item):
            ax.plot(k, curve, lw=1.2, label=label)
            count += 1
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("posterior covariance trace")
    ax.margins(x=0.05)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    return fig


def _band_curves(item):
    if isinstance(item, TraceData):
        eps = item.eps_matrix()
        first = sorted(item.runs)[0]
        k = item.runs[first]["k"]
        std = eps.std(axis=0, ddof=1) if eps.shape[0] > 1 else np.zeros(eps.shape[1])
        yield item.estimator, k, eps.mean(axis=0), std
    elif isinstance(item, RunSummary):
        yield item.estimator, item.k, item.eps_mean, item.eps_std
    elif isinstance(item, CompareSummary):
        for name in item.estimators:
            yield name, item.k, item.eps_mean[name], item.eps_std[name]
    else:
        raise SchemaError(f"unsupported input {item!r}")


def render_error_bands(inputs, out_path, log_y: bool = False):
    """Mean estimation error with a +/-1 sigma band per estimator."""
    if not inputs:
        raise SchemaError("error-bands figure needs at least one input file")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for item in inputs:
        for label, k, mean, std in _band_curves(item):
            line = ax.plot(k, mean, lw=1.2, label=label)[0]
            ax.fill_between(k, mean - std, mean + std, alpha=0.25, color=line.get_color(), lw=0)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("estimation error")
    ax.margins(x=0.05)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    return fig
