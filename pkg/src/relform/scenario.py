"""Scenario file loading, validation, overrides, and resolved-file emission.

Scenario files are TOML with exactly the sections [graph], [target],
[weights], [noise], [filter], [sim]. Unknown sections or keys are
rejected so that typos cannot silently change an experiment. The resolved
(post-override) document is emitted next to every output so a third party
can re-run from the outputs alone.
"""

from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .graph import SensingGraph
from .sim import ESTIMATOR_KEYS, Scenario

# Section -> key -> (kind, required, default). Kinds drive coercion and
# validation; "pairs"/"triples"/"matrix" are nested numeric arrays.
SCHEMA = {
    "graph": {
        "nodes": ("int", True, None),
        "links": ("pairs", True, None),
        "leaders": ("int_list", False, []),
    },
    "target": {
        "positions": ("matrix", True, None),
        "leader_distances": ("triples", False, None),
    },
    "weights": {
        "mode": ("str", False, "solve"),
        "scale": ("float", False, 1.0),
        "values": ("triples", False, None),
    },
    "noise": {
        "sigma_w": ("float", True, None),
        "rho_w": ("float", False, 0.5),
        "sigma_v": ("float", True, None),
        "rho_v": ("float", False, 0.5),
    },
    "filter": {
        "estimator": ("str", True, None),
        "T": ("int", False, 10),
    },
    "sim": {
        "dt": ("float", True, None),
        "horizon": ("int", True, None),
        "runs": ("int", False, 1),
        "seed": ("int", False, 0),
        "leader_gain": ("float", False, 1.0),
        "mu": ("vector", False, None),
        "p": ("matrix", False, None),
        "pairing": ("str", False, "paired"),
    },
}

REQUIRED_SECTIONS = ("graph", "target", "noise", "filter", "sim")
SECTION_ORDER = ("graph", "target", "weights", "noise", "filter", "sim")


def _coerce(kind, value, where):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if kind == "int_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ConfigError(f"{where} must be a list of integers, got {value!r}")
        return list(value)
    if kind == "vector":
        if not isinstance(value, list) or any(not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{where} must be a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if kind in ("pairs", "triples", "matrix"):
        if not isinstance(value, list) or not value or any(not isinstance(r, list) for r in value):
            raise ConfigError(f"{where} must be a non-empty list of rows, got {value!r}")
        rows = []
        for row in value:
            if any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in row):
                raise ConfigError(f"{where} rows must be numeric, got {row!r}")
            rows.append(list(row))
        if kind == "pairs" and any(len(r) != 2 for r in rows):
            raise ConfigError(f"{where} rows must be [i, j] pairs")
        if kind == "triples" and any(len(r) != 3 for r in rows):
            raise ConfigError(f"{where} rows must be [i, j, value] triples")
        if kind == "matrix" and len({len(r) for r in rows}) != 1:
            raise ConfigError(f"{where} rows must all have the same length")
        return rows
    raise AssertionError(kind)


def normalize_document(doc: dict) -> dict:
    """Validate raw TOML data against the schema and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must contain TOML tables")
    for section in doc:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    for section in REQUIRED_SECTIONS:
        if section not in doc:
            raise ConfigError(f"missing section [{section}]")
    out = {}
    for section in SECTION_ORDER:
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section [{section}] must be a table")
        keys = SCHEMA[section]
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
        resolved = {}
        for key, (kind, required, default) in keys.items():
            if key in given:
                resolved[key] = _coerce(kind, given[key], f"{section}.{key}")
            elif required:
                raise ConfigError(f"missing required key {section}.{key}")
            elif default is not None or key in ("mu", "p", "values", "leader_distances"):
                if default is not None:
                    resolved[key] = default
        out[section] = resolved
    return out


def parse_override(text: str):
    """Split one --set KEY=VALUE argument into (section, key, value)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key.count(".") != 1:
        raise ConfigError(f"override key {key!r} must be section.key")
    section, name = key.split(".")
    if section not in SCHEMA or name not in SCHEMA[section]:
        raise ConfigError(f"override names unknown key {key!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, name, value


def apply_overrides(doc: dict, overrides) -> dict:
    out = {s: dict(v) for s, v in doc.items()}
    for text in overrides:
        section, name, value = parse_override(text)
        out.setdefault(section, {})[name] = value
    return out


def load_document(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid TOML: {exc}") from exc


def build_scenario(doc: dict) -> tuple[Scenario, list[str]]:
    """Turn a normalized document into a Scenario, collecting warnings."""
    doc = normalize_document(doc)
    warnings = []

    g = doc["graph"]
    try:
        graph = SensingGraph(
            num_nodes=g["nodes"],
            links=tuple((int(i), int(j)) for i, j in g["links"]),
            leader_set=tuple(g.get("leaders", [])),
        )
    except ValueError as exc:
        raise ConfigError(f"graph: {exc}") from exc

    target = np.asarray(doc["target"]["positions"], dtype=float)
    if target.shape[0] != graph.num_nodes:
        raise ConfigError(
            f"target.positions has {target.shape[0]} rows for graph.nodes = {graph.num_nodes}"
        )
    dim = target.shape[1]
    if dim < 1:
        raise ConfigError("target.positions rows must have at least one coordinate")

    linkset = set(graph.links)
    wsec = doc["weights"]
    mode = wsec.get("mode", "solve")
    if mode == "solve":
        weights = "solve"
    elif mode == "explicit":
        triples = wsec.get("values")
        if not triples:
            raise ConfigError("weights.values is required when weights.mode = 'explicit'")
        weights = {}
        for i, j, w in triples:
            i, j = int(i), int(j)
            pair = (min(i, j), max(i, j))
            if pair not in linkset:
                raise ConfigError(f"weights.values entry ({i},{j}) is not a graph link")
            if (i, j) in weights:
                raise ConfigError(f"weights.values repeats link ({i},{j})")
            weights[(i, j)] = float(w)
            weights[(j, i)] = float(w)
    else:
        raise ConfigError(f"weights.mode must be 'solve' or 'explicit', got {mode!r}")

    distances = None
    if doc["target"].get("leader_distances") is not None:
        distances = {}
        leaders = set(graph.leader_set)
        for i, j, d in doc["target"]["leader_distances"]:
            i, j = int(i), int(j)
            if i not in leaders or j not in leaders:
                raise ConfigError(f"target.leader_distances pair ({i},{j}) not inside the leader set")
            distances[(i, j)] = float(d)
            distances[(j, i)] = float(d)

    fsec = doc["filter"]
    if fsec["estimator"] not in ESTIMATOR_KEYS:
        raise ConfigError(
            f"filter.estimator must be one of {', '.join(ESTIMATOR_KEYS)}; got {fsec['estimator']!r}"
        )

    ssec = doc["sim"]
    mu = ssec.get("mu")
    if mu is not None and len(mu) != dim:
        raise ConfigError(f"sim.mu has length {len(mu)}, target dimension is {dim}")
    p = ssec.get("p")
    if p is not None and (len(p) != dim or len(p[0]) != dim):
        raise ConfigError(f"sim.p must be a {dim}x{dim} matrix")

    if len(graph.leader_set) != dim + 1:
        warnings.append(
            f"leader set has {len(graph.leader_set)} nodes; rigid pinning expects D+1 = {dim + 1}"
        )

    try:
        scenario = Scenario(
            graph=graph,
            target=target,
            estimator=fsec["estimator"],
            weights=weights,
            weight_scale=wsec.get("scale", 1.0),
            dt=ssec["dt"],
            horizon=ssec["horizon"],
            repeat=fsec.get("T", 10),
            sigma_w=doc["noise"]["sigma_w"],
            rho_w=doc["noise"].get("rho_w", 0.5),
            sigma_v=doc["noise"]["sigma_v"],
            rho_v=doc["noise"].get("rho_v", 0.5),
            init_mean=None if mu is None else np.asarray(mu, dtype=float),
            init_cov=None if p is None else np.asarray(p, dtype=float),
            seed=ssec.get("seed", 0),
            runs=ssec.get("runs", 1),
            leader_gain=ssec.get("leader_gain", 1.0),
            leader_distances=distances,
            pairing=ssec.get("pairing", "paired"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return scenario, warnings


def load_scenario(path, overrides=()) -> tuple[Scenario, dict, list[str]]:
    """Load, override, and validate; returns (scenario, resolved doc, warnings)."""
    doc = load_document(path)
    doc = apply_overrides(doc, overrides)
    normalized = normalize_document(doc)
    scenario, warnings = build_scenario(normalized)
    return scenario, normalized, warnings


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        text = repr(float(value))
        return text if ("." in text or "e" in text or "inf" in text or "nan" in text) else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r} into a scenario file")


def emit_document(doc: dict) -> str:
    """Deterministic TOML text for a normalized document."""
    lines = []
    for section in SECTION_ORDER:
        if section not in doc:
            continue
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in doc[section]:
                lines.append(f"{key} = {_emit_value(doc[section][key])}")
        lines.append("")
    return "\n".join(lines)
