"""Scenario files: strict JSON schema for experiments.

A scenario document mirrors :class:`selftrig.simulator.Scenario` plus
optional output paths.  Matrices are flat row-major lists against the
declared dimensions; unknown fields anywhere in the document are
rejected, and the schema version is checked.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import ConfigurationError
from .model import LtiSystem, WeightSpec
from .simulator import MODE_PERIODIC, MODE_SELF_TRIGGERED, LoopSpec, Scenario

SCENARIO_SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "name", "loops", "I0", "p", "horizon", "seed",
    "mode", "ts", "outputs",
}
_LOOP_KEYS = {
    "name", "n", "m", "w", "A", "B", "E", "Q", "R", "alpha",
    "x0", "x0_variance", "noise_variance",
}
_OUTPUT_KEYS = {"tables_dir", "traces_dir", "sweep_csv"}


def _require_keys(doc: dict, allowed: set, context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigurationError(f"{context}: unknown fields {sorted(unknown)}")


def _get(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigurationError(f"{context}: missing required field {key!r}")
    return doc[key]


def _matrix(doc: dict, key: str, rows: int, cols: int, context: str) -> np.ndarray:
    flat = _get(doc, key, context)
    if not isinstance(flat, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in flat
    ):
        raise ConfigurationError(f"{context}: {key} must be a flat list of numbers")
    arr = np.asarray(flat, dtype=float)
    if arr.size != rows * cols:
        raise ConfigurationError(
            f"{context}: {key} needs {rows * cols} row-major entries "
            f"({rows}x{cols}), got {arr.size}"
        )
    return arr.reshape(rows, cols)


def _loop_from_dict(doc: dict, index: int) -> LoopSpec:
    context = f"loops[{index}]"
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{context}: must be an object")
    _require_keys(doc, _LOOP_KEYS, context)
    name = str(_get(doc, "name", context))
    n = int(_get(doc, "n", context))
    m = int(_get(doc, "m", context))
    w = int(doc.get("w", 1))
    if n < 1 or m < 1 or w < 1:
        raise ConfigurationError(f"{context}: dimensions must be positive")
    A = _matrix(doc, "A", n, n, context)
    B = _matrix(doc, "B", n, m, context)
    E = _matrix(doc, "E", n, w, context) if "E" in doc else None
    Q = _matrix(doc, "Q", n, n, context)
    R = _matrix(doc, "R", m, m, context)
    alpha = float(_get(doc, "alpha", context))
    x0 = None
    x0_variance = None
    if "x0" in doc and "x0_variance" in doc:
        raise ConfigurationError(f"{context}: give x0 or x0_variance, not both")
    if "x0" in doc:
        x0 = np.asarray(doc["x0"], dtype=float)
        if x0.size != n:
            raise ConfigurationError(f"{context}: x0 must have length {n}")
    elif "x0_variance" in doc:
        x0_variance = float(doc["x0_variance"])
    else:
        raise ConfigurationError(f"{context}: one of x0 or x0_variance is required")
    return LoopSpec(
        name=name,
        system=LtiSystem(A=A, B=B, E=E),
        weights=WeightSpec(Q=Q, R=R, alpha=alpha),
        x0=x0,
        x0_variance=x0_variance,
        noise_variance=float(doc.get("noise_variance", 0.0)),
    )


def scenario_from_dict(doc: dict) -> tuple[Scenario, dict]:
    """Build a Scenario from a parsed document; returns (scenario, outputs)."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario document must be a JSON object")
    _require_keys(doc, _TOP_KEYS, "scenario")
    version = _get(doc, "schema_version", "scenario")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported scenario schema version {version!r} "
            f"(expected {SCENARIO_SCHEMA_VERSION})"
        )
    loops_doc = _get(doc, "loops", "scenario")
    if not isinstance(loops_doc, list) or not loops_doc:
        raise ConfigurationError("scenario: loops must be a non-empty list")
    loops = tuple(_loop_from_dict(lp, i) for i, lp in enumerate(loops_doc))
    mode = str(doc.get("mode", MODE_SELF_TRIGGERED))
    if mode not in (MODE_SELF_TRIGGERED, MODE_PERIODIC):
        raise ConfigurationError(f"scenario: unknown mode {mode!r}")
    outputs = doc.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigurationError("scenario: outputs must be an object")
    _require_keys(outputs, _OUTPUT_KEYS, "outputs")
    scenario = Scenario(
        loops=loops,
        I0=tuple(int(i) for i in _get(doc, "I0", "scenario")),
        p=int(_get(doc, "p", "scenario")),
        horizon=int(_get(doc, "horizon", "scenario")),
        seed=int(_get(doc, "seed", "scenario")),
        mode=mode,
        ts=int(doc["ts"]) if "ts" in doc and doc["ts"] is not None else None,
        name=str(doc.get("name", "scenario")),
    )
    return scenario, dict(outputs)


def load_scenario(path) -> tuple[Scenario, dict]:
    """Read and validate a scenario file; returns (scenario, outputs)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)
