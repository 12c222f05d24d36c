"""JSON problem files and reports.

Matrices are objects ``{"rows": r, "cols": c, "data": [...]}`` with ``data``
in row-major order. Numbers in reports carry 12 significant digits.
"""

import json

import jsonschema
import numpy as np

from .lqg import OptimalControlProblem
from .system import CostWeights, DescriptorSystem

DIGITS = 12

MATRIX_SCHEMA = {
    "type": "object",
    "properties": {
        "rows": {"type": "integer", "minimum": 0},
        "cols": {"type": "integer", "minimum": 0},
        "data": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["rows", "cols", "data"],
    "additionalProperties": False,
}

_M = {"$ref": "#/definitions/matrix"}
_NULLABLE_M = {"anyOf": [_M, {"type": "null"}]}

PROBLEM_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dlqg problem",
    "type": "object",
    "definitions": {"matrix": MATRIX_SCHEMA},
    "properties": {
        "name": {"type": "string"},
        "E": _M, "A": _M, "B": _M, "N": _M,
        "Q": _M, "S": _M, "R": _M,
        "beta": {"type": "number", "exclusiveMaximum": 0},
        "initial": {
            "type": "object",
            "properties": {"mean": {"type": "array", "items": {"type": "number"}}, "cov": _M},
            "additionalProperties": False,
        },
        "sim": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "tf": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "save_every": {"type": "integer", "minimum": 1},
                "control": {"anyOf": [{"enum": ["optimal", "zero"]}, _M]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["E", "A", "beta"],
    "additionalProperties": False,
}

_NUM = {"type": "number"}
_OPT_NUM = {"type": ["number", "null"]}
_OPT_BOOL = {"type": ["boolean", "null"]}

CHECK_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dlqg check report",
    "type": "object",
    "properties": {
        "regular_pencil": {"type": "boolean"},
        "wellposed": _OPT_BOOL,
        "stabilizable": _OPT_BOOL,
        "failing_lambda": {"type": ["array", "null"], "items": _NUM},
        "vdiff_dim": {"type": ["integer", "null"]},
        "vsys_dim": {"type": ["integer", "null"]},
        "block_sizes": {"type": ["array", "null"], "items": {"type": "integer"}},
    },
    "required": ["regular_pencil", "wellposed", "stabilizable", "vdiff_dim", "vsys_dim"],
    "additionalProperties": False,
}

SOLVE_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dlqg solve report",
    "type": "object",
    "definitions": {"matrix": MATRIX_SCHEMA},
    "properties": {
        "feasible": {"type": "boolean"},
        "verdict": {"type": "string"},
        "regular": _OPT_BOOL,
        "pencil_ok": _OPT_BOOL,
        "space_ok": _OPT_BOOL,
        "W_plus": _OPT_NUM,
        "term_initial": _OPT_NUM,
        "term_noise": _OPT_NUM,
        "q": {"type": ["integer", "null"]},
        "stabilizing": _OPT_BOOL,
        "backend": {"type": ["string", "null"]},
        "P": _NULLABLE_M, "K": _NULLABLE_M, "L": _NULLABLE_M,
        "feedback": _NULLABLE_M,
    },
    "required": ["feasible", "verdict", "W_plus"],
    "additionalProperties": False,
}

SIMULATE_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dlqg simulate report",
    "type": "object",
    "properties": {
        "J_est": _NUM,
        "std_error": _NUM,
        "gap_est": _NUM,
        "gap_std_error": _NUM,
        "W_plus": _NUM,
        "identity_residual": _NUM,
        "identity_std_error": _NUM,
        "terminal_moment": _NUM,
        "terminal_threshold": _NUM,
        "algebraic_residual": _NUM,
        "control": {"type": "string"},
        "seed": {"type": "integer"},
        "paths": {"type": "integer"},
        "dt": _NUM,
        "tf": _NUM,
    },
    "required": ["J_est", "std_error", "gap_est", "terminal_moment"],
    "additionalProperties": False,
}

REPORT_SCHEMAS = {"check": CHECK_REPORT_SCHEMA, "solve": SOLVE_REPORT_SCHEMA, "simulate": SIMULATE_REPORT_SCHEMA}


class ProblemError(ValueError):
    """The problem file is malformed or inconsistent."""


def matrix_from_json(obj, name):
    r, c, data = obj["rows"], obj["cols"], obj["data"]
    if len(data) != r * c:
        raise ProblemError(f"{name}: expected {r * c} entries for a {r}x{c} matrix, got {len(data)}")
    return np.asarray(data, dtype=float).reshape(r, c)


def matrix_to_json(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [rnd(v) for v in a.ravel()]}


def rnd(x):
    """Round to :data:`DIGITS` significant digits."""
    return float(f"{float(x):.{DIGITS}g}")


def load_problem(path):
    """Parse and validate a problem file.

    Returns ``(problem, sim)`` where ``sim`` is the raw simulation section
    (possibly empty) with ``control`` converted to a string or matrix.

    Raises
    ------
    ProblemError
        On invalid JSON, schema violations or inconsistent dimensions.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ProblemError(f"cannot read {path}: {err}") from err
    return problem_from_dict(doc)


def problem_from_dict(doc):
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as err:
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ProblemError(f"schema violation at {loc}: {err.message}") from err
    mats = {k: matrix_from_json(doc[k], k) for k in "EABNQSR" if k in doc}
    E = mats["E"]
    n = E.shape[0]
    B = mats.get("B", np.zeros((n, 0)))
    m = B.shape[1]
    try:
        sys = DescriptorSystem(E, mats["A"], B, mats.get("N"), beta=doc["beta"])
        w = CostWeights(mats.get("Q", np.zeros((n, n))), mats.get("S", np.zeros((n, m))),
                        mats.get("R", np.zeros((m, m))))
        w.check(sys)
        init = doc.get("initial", {})
        cov = matrix_from_json(init["cov"], "initial.cov") if "cov" in init else None
        prob = OptimalControlProblem(sys, w, init.get("mean"), cov)
    except ValueError as err:
        raise ProblemError(str(err)) from err
    sim = dict(doc.get("sim", {}))
    if isinstance(sim.get("control"), dict):
        sim["control"] = matrix_from_json(sim["control"], "sim.control")
    return prob, sim


def problem_to_dict(p, sim=None):
    """Inverse of :func:`problem_from_dict` (used by the demos and tests)."""
    doc = {"E": matrix_to_json(p.sys.E), "A": matrix_to_json(p.sys.A), "beta": p.sys.beta}
    if p.sys.m:
        doc["B"] = matrix_to_json(p.sys.B)
    if p.sys.n_w:
        doc["N"] = matrix_to_json(p.sys.N)
    doc["Q"] = matrix_to_json(p.w.Q)
    if p.sys.m:
        doc["S"] = matrix_to_json(p.w.S)
        doc["R"] = matrix_to_json(p.w.R)
    doc["initial"] = {"mean": [rnd(v) for v in p.x0_mean]}
    if np.any(p.x0_cov):
        doc["initial"]["cov"] = matrix_to_json(p.x0_cov)
    if sim:
        doc["sim"] = dict(sim)
        if isinstance(doc["sim"].get("control"), np.ndarray):
            doc["sim"]["control"] = matrix_to_json(doc["sim"]["control"])
    return doc


def validate_report(kind, report):
    jsonschema.validate(report, REPORT_SCHEMAS[kind])


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=False)
