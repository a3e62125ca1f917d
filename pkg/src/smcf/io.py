"""Run configuration, snapshot files and CSV tables.

Every number written by this module uses 17 significant digits, so values
read back are bit-identical to the ones written.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import shapes
from .errors import ConfigurationError
from .flow import FlowConfig
from .geometry import ImmersionState, PeriodicGrid

FORMAT_VERSION = 1

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_sizes = {"type": "array", "items": {"type": "integer", "minimum": 16, "multipleOf": 2}, "minItems": 1, "maxItems": 2}


def _builtin(name, props, required=()):
    return {
        "type": "object",
        "properties": {"builtin": {"const": name}, "sizes": _sizes, **props},
        "required": ["builtin", "sizes", *required],
        "additionalProperties": False,
    }


CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "flow": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["smcf", "perturbed"]},
                "epsilon": {"type": "number", "minimum": 0},
                "dt": _positive,
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "t_end": _positive,
                "k": {"type": "integer", "minimum": 0, "maximum": 3},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "output_every": {"type": "integer", "minimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 0},
                "energy_ceiling": {"type": "number", "exclusiveMinimum": 1},
                "filter_strength": {"type": "number", "minimum": 0},
            },
            "required": ["t_end"],
            "additionalProperties": False,
        },
        "initial": {
            "oneOf": [
                _builtin("circle", {"r": _positive, "center": {"type": "array", "items": _number, "minItems": 3, "maxItems": 3}}),
                _builtin(
                    "perturbed_circle",
                    {"r": _positive, "m": {"type": "integer", "minimum": 1}, "amp": {"type": "number", "minimum": 0, "maximum": 0.5}, "lift": _number},
                ),
                _builtin("clifford_torus", {"a": _positive, "b": _positive}),
                _builtin(
                    "perturbed_torus",
                    {"a": _positive, "b": _positive, "amp": {"type": "number", "minimum": 0, "maximum": 0.5}, "m": {"type": "integer", "minimum": 1}},
                ),
                {
                    "type": "object",
                    "properties": {"from_snapshot": {"type": "string"}},
                    "required": ["from_snapshot"],
                    "additionalProperties": False,
                },
            ]
        },
        "outputs": {
            "type": "object",
            "properties": {"csv": {"type": "string"}, "snapshot_dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["flow", "initial"],
    "additionalProperties": False,
}


def _field_of(error):
    path = [str(p) for p in error.absolute_path]
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        path.append(extra[0] if extra else "?")
    elif error.validator == "required":
        path.append(error.message.split("'")[1])
    return ".".join(path) or "<root>"


def validate_config(config):
    """Validate a run configuration dict; raises :class:`ConfigurationError` naming the offending field."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        if err.validator == "oneOf" and err.context:
            # report the branch that matches the chosen builtin
            name = config.get("initial", {}).get("builtin")
            branch = [e for e in err.context if name is None or e.schema_path[0] == _branch_index(name)]
            err = min(branch or err.context, key=lambda e: len(list(e.absolute_path)))
            field = "initial." + _field_of(err) if not str(_field_of(err)).startswith("initial") else _field_of(err)
        else:
            field = _field_of(err)
        raise ConfigurationError(f"invalid config at {field}: {err.message}", field=field)
    flow = config["flow"]
    mode = flow.get("mode", "perturbed" if flow.get("epsilon", 0) > 0 else "smcf")
    eps = flow.get("epsilon", 0.0)
    if mode == "smcf" and eps != 0:
        raise ConfigurationError("mode smcf requires epsilon = 0", field="flow.epsilon")
    if mode == "perturbed" and not eps > 0:
        raise ConfigurationError("mode perturbed requires epsilon > 0", field="flow.epsilon")
    if "dt" in flow and "cfl" in flow:
        raise ConfigurationError("give either dt or cfl, not both", field="flow.dt")
    return config


_BUILTINS = ["circle", "perturbed_circle", "clifford_torus", "perturbed_torus"]


def _branch_index(name):
    return _BUILTINS.index(name) if name in _BUILTINS else len(_BUILTINS)


def load_config(path):
    path = Path(path)
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})", field="<file>") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", field="<file>") from exc
    validate_config(config)
    config["_base"] = str(path.parent)
    return config


def flow_config(config, **overrides):
    flow = {k: v for k, v in config["flow"].items() if k != "mode"}
    return FlowConfig(**{**flow, **overrides})


def initial_state(config):
    init = config["initial"]
    if "from_snapshot" in init:
        p = Path(init["from_snapshot"])
        if not p.is_absolute():
            p = Path(config.get("_base", ".")) / p
        return read_snapshot(p)
    name = init["builtin"]
    sizes = tuple(init["sizes"])
    params = {k: v for k, v in init.items() if k not in ("builtin", "sizes")}
    if name in ("circle", "perturbed_circle"):
        if len(sizes) != 1:
            raise ConfigurationError(f"{name} needs one grid size", field="initial.sizes")
        return getattr(shapes, name)(N=sizes[0], **params)
    if len(sizes) != 2:
        raise ConfigurationError(f"{name} needs two grid sizes", field="initial.sizes")
    return getattr(shapes, name)(N=sizes, **params)


# ---------------------------------------------------------------------------
# snapshots


def _fmt(x):
    return format(float(x), ".17g")


def _json_array(values):
    return "[" + ",".join(_fmt(v) for v in np.ravel(values)) + "]"


def write_snapshot(state, path):
    """Write ``state`` as a JSON document (positions flattened row-major)."""
    grid = state.grid
    parts = [
        f'"format_version": {FORMAT_VERSION}',
        f'"n": {grid.n}',
        f'"ambient_dim": {grid.ambient_dim}',
        f'"grid_sizes": {json.dumps(list(grid.sizes))}',
        f'"time": {_fmt(state.time)}',
        f'"positions": {_json_array(state.positions)}',
    ]
    if state.frame_ref is not None:
        parts.append(f'"frame_ref": {_json_array(state.frame_ref)}')
    Path(path).write_text("{\n  " + ",\n  ".join(parts) + "\n}\n")


def read_snapshot(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read snapshot {path}: {exc}", field="from_snapshot") from exc
    for key in ("format_version", "n", "ambient_dim", "grid_sizes", "time", "positions"):
        if key not in doc:
            raise ConfigurationError(f"snapshot missing {key}", field=key)
    if doc["format_version"] != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported snapshot version {doc['format_version']}", field="format_version")
    sizes = tuple(int(s) for s in doc["grid_sizes"])
    grid = PeriodicGrid(sizes)
    if doc["n"] != grid.n or doc["ambient_dim"] != grid.n + 2:
        raise ConfigurationError("snapshot dimensions disagree with grid_sizes", field="ambient_dim")
    m = grid.n + 2
    pos = np.asarray(doc["positions"], dtype=float)
    if pos.size != int(np.prod(sizes)) * m:
        raise ConfigurationError(f"expected {int(np.prod(sizes)) * m} coordinates, got {pos.size}", field="positions")
    ref = doc.get("frame_ref")
    if ref is not None:
        ref = np.asarray(ref, dtype=float).reshape(sizes + (m, 2))
    return ImmersionState(grid, pos.reshape(sizes + (m,)), float(doc["time"]), ref)


# ---------------------------------------------------------------------------
# CSV tables


def trace_columns(k):
    return ["t", "vol", "H_Lp"] + [f"A_l2_sq_{l}" for l in range(k + 1)] + ["E_k", "status"]


def energy_row(t, report, status):
    return [t, report.vol, report.H_Lp, *report.A_levels_sq, report.E_k, status]


def write_csv(path_or_file, header, rows):
    """Write rows; floats formatted with 17 significant digits, ``None`` as an empty cell."""

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return _fmt(v)
        return str(v)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


def trace_rows(trace):
    """One row per energy record; the status column is ``running`` except on the last row."""
    rows = []
    last = len(trace.records) - 1
    for i, rec in enumerate(trace.records):
        status = trace.status if i == last else "running"
        rows.append(energy_row(rec.time, rec.report, status))
    return rows
