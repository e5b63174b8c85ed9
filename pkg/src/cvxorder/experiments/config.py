"""Experiment configuration: JSON schema, descriptor parsing, defaults.

Configs are plain JSON.  ``validate_config`` schema-checks the document and
raises ``ConfigError`` with the offending field path; the ``parse_*`` helpers
turn descriptor dicts into package objects.
"""

from __future__ import annotations

import copy
import json
import math

import jsonschema
import numpy as np

from ..coeffs import CoefficientFn
from ..convexfns import ScalarConvexFn
from ..errors import ConfigError
from ..noise import InnovationSpec, JumpLaw, LevySpec
from ..payoffs import PayoffFunctional

EXPERIMENTS = (
    "compare_european",
    "compare_bermudan",
    "sandwich",
    "peacock",
    "ito_compare",
    "doleans_compare",
    "laplace",
    "cm_compare",
    "counterexample_2period",
    "counterexample_integrand",
    "refine_study",
)

_NUM = {"type": "number"}
_POSINT = {"type": "integer", "minimum": 1}

_SCALAR_FN = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {
        "call": _NUM,
        "put": _NUM,
        "abs": {"type": "boolean"},
        "identity": {"type": "boolean"},
        "power": {"type": "number", "minimum": 1},
        "exp_affine": _NUM,
        "piecewise_linear": {
            "type": "object",
            "properties": {
                "const": _NUM,
                "slope": _NUM,
                "knots": {"type": "array", "items": _NUM},
                "coefs": {"type": "array", "items": _NUM},
            },
        },
    },
    "additionalProperties": False,
}

_PAYOFF = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["terminal", "integral", "running_max", "running_min", "digital"]},
        "f": _SCALAR_FN,
        "weights": {"anyOf": [{"const": "uniform"}, {"type": "array", "items": _NUM}]},
        "strike": _NUM,
    },
    "additionalProperties": False,
}

_COEFFICIENT = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "affine", "bounded_rational", "time_fn", "sigmoid"]},
        "value": _NUM,
        "a": _NUM,
        "b": _NUM,
        "c0": _NUM,
        "c1": _NUM,
        "c": _NUM,
        "center": _NUM,
        "scale": _NUM,
        "times": {"type": "array", "items": _NUM},
        "values": {"type": "array", "items": _NUM},
    },
    "additionalProperties": False,
}

_JUMP = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {
        "two_point": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
        "gaussian": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "finite_support": {
            "type": "object",
            "required": ["points", "probs"],
            "properties": {
                "points": {"type": "array", "items": _NUM},
                "probs": {"type": "array", "items": _NUM},
            },
        },
    },
    "additionalProperties": False,
}

_LEVY = {
    "type": "object",
    "properties": {
        "a": {"type": "number", "minimum": 0},
        "intensity": {"type": "number", "minimum": 0},
        "jump": _JUMP,
        "p_moment": {"type": "number", "exclusiveMinimum": 1},
    },
    "additionalProperties": False,
}

_INNOVATION = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "finite_support", "levy"]},
        "variance": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "array", "items": _NUM},
        "probs": {"type": "array", "items": _NUM},
        "a": {"type": "number", "minimum": 0},
        "intensity": {"type": "number", "minimum": 0},
        "jump": _JUMP,
        "p_moment": {"type": "number", "exclusiveMinimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_MODEL = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["euler", "local_vol", "levy"]},
        "sigma": _COEFFICIENT,
        "kappa": _COEFFICIENT,
        "levy": _LEVY,
        "x0": _NUM,
        "s0": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_GRID = {
    "type": "object",
    "required": ["n", "T"],
    "properties": {"n": _POSINT, "T": {"type": "number", "exclusiveMinimum": 0}},
    "additionalProperties": False,
}

_RULE = {
    "type": "object",
    "required": ["form"],
    "properties": {
        "form": {"enum": ["deterministic", "abs_sin", "one_plus_abs", "coefficient"]},
        "h": {"anyOf": [_NUM, {"type": "array", "items": _NUM}]},
        "coefficient": _COEFFICIENT,
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "n_paths": _POSINT,
        "threads": _POSINT,
        "z": {"type": "number", "exclusiveMinimum": 0},
        "quad_nodes": _POSINT,
        "grid_points": _POSINT,
        "out": {"type": "string"},
        "plot": {"type": "boolean"},
        "trace": {"type": "boolean"},
        "expected": {"enum": ["dominance_confirmed", "violation_detected", "any"]},
        "grid": _GRID,
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}

_PARAMS_SCHEMAS: dict[str, dict] = {
    "compare_european": {
        "type": "object",
        "required": ["model_lo", "model_hi", "payoff"],
        "properties": {"model_lo": _MODEL, "model_hi": _MODEL, "payoff": _PAYOFF},
        "additionalProperties": False,
    },
    "compare_bermudan": {
        "type": "object",
        "required": ["sigma_lo", "sigma_hi", "payoff", "s0"],
        "properties": {
            "sigma_lo": _COEFFICIENT, "sigma_hi": _COEFFICIENT, "payoff": _PAYOFF,
            "s0": _NUM, "n_dates": _POSINT, "T": {"type": "number", "exclusiveMinimum": 0},
            "quant_points": _POSINT,
        },
        "additionalProperties": False,
    },
    "sandwich": {
        "type": "object",
        "required": ["sigma", "payoff", "s0"],
        "properties": {"sigma": _COEFFICIENT, "payoff": _PAYOFF, "s0": {"type": "number", "exclusiveMinimum": 0}},
        "additionalProperties": False,
    },
    "peacock": {
        "type": "object",
        "required": ["sigma_values", "payoff", "s0"],
        "properties": {
            "sigma_values": {"type": "array", "items": _NUM, "minItems": 1},
            "payoff": _PAYOFF, "s0": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
    "ito_compare": {
        "type": "object",
        "required": ["integrand", "h", "payoff", "direction"],
        "properties": {
            "integrand": _RULE,
            "h": {"anyOf": [_NUM, {"type": "array", "items": _NUM}]},
            "payoff": _PAYOFF,
            "direction": {"enum": ["upper", "lower"]},
            "x0": _NUM,
        },
        "additionalProperties": False,
    },
    "doleans_compare": {
        "type": "object",
        "required": ["integrand", "h", "payoff", "direction"],
        "properties": {
            "integrand": _RULE,
            "h": {"anyOf": [_NUM, {"type": "array", "items": _NUM}]},
            "payoff": _PAYOFF,
            "direction": {"enum": ["upper", "lower"]},
        },
        "additionalProperties": False,
    },
    "laplace": {
        "type": "object",
        "required": ["f", "g", "lambdas"],
        "properties": {
            "f": {"type": "array", "items": _COEFFICIENT},
            "g": {"type": "array", "items": _COEFFICIENT},
            "lambdas": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "mc_paths": _POSINT,
        },
        "additionalProperties": False,
    },
    "cm_compare": {
        "type": "object",
        "required": ["f", "g", "mixture"],
        "properties": {
            "f": _COEFFICIENT,
            "g": _COEFFICIENT,
            "mixture": {
                "type": "array",
                "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "additionalProperties": False,
    },
    "counterexample_2period": {
        "type": "object",
        "properties": {
            "c": {"type": "number"},
            "x0": _NUM,
            "sigma_grid": {"type": "array", "items": _NUM},
            "fd_step": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
    "counterexample_integrand": {
        "type": "object",
        "properties": {
            "sigma_pair": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "v_form": {"enum": ["logistic_decreasing"]},
            "v_scale": {"type": "number", "exclusiveMinimum": 0},
            "scan_max": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
    "refine_study": {
        "type": "object",
        "required": ["sigma", "payoff", "s0", "n_list"],
        "properties": {
            "sigma": _COEFFICIENT, "payoff": _PAYOFF, "s0": _NUM,
            "n_list": {"type": "array", "items": _POSINT, "minItems": 1},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "quant_points": _POSINT,
        },
        "additionalProperties": False,
    },
}


def validate_config(config: dict) -> dict:
    """Schema-validate and fill defaults; raise ConfigError with a field path."""
    try:
        jsonschema.validate(config, SCHEMA)
        exp = config["experiment"]
        params = config.get("params", {})
        jsonschema.validate(params, _PARAMS_SCHEMAS[exp])
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}") from None
    merged = {
        "seed": 1,
        "n_paths": 100_000,
        "threads": 1,
        "z": 3.0,
        "quad_nodes": 64,
        "grid_points": 513,
        "expected": "dominance_confirmed",
        "plot": True,
        "grid": {"n": 64, "T": 1.0},
    }
    merged.update(copy.deepcopy(config))
    return merged


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, col {err.colno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return doc


# -- descriptor parsing --------------------------------------------------------


def parse_scalar_fn(d: dict) -> ScalarConvexFn:
    (key, val), = d.items()
    if key == "call":
        return ScalarConvexFn.call(float(val))
    if key == "put":
        return ScalarConvexFn.put(float(val))
    if key == "abs":
        return ScalarConvexFn.abs()
    if key == "identity":
        return ScalarConvexFn.identity()
    if key == "power":
        return ScalarConvexFn.power(float(val))
    if key == "exp_affine":
        return ScalarConvexFn.exp_affine(float(val))
    if key == "piecewise_linear":
        return ScalarConvexFn.piecewise_linear(
            const=val.get("const", 0.0), slope=val.get("slope", 0.0),
            knots=val.get("knots", ()), coefs=val.get("coefs", ()),
        )
    raise ConfigError(f"unknown scalar function {key!r}")


def parse_payoff(d: dict) -> PayoffFunctional:
    kind = d["kind"]
    if kind == "digital":
        if "strike" not in d:
            raise ConfigError("digital payoff requires 'strike'")
        return PayoffFunctional.digital(d["strike"])
    if "f" not in d:
        raise ConfigError(f"payoff kind {kind!r} requires 'f'")
    f = parse_scalar_fn(d["f"])
    if kind == "terminal":
        return PayoffFunctional.terminal(f)
    if kind == "integral":
        return PayoffFunctional.integral(f, d.get("weights", "uniform"))
    if kind == "running_max":
        return PayoffFunctional.running_max(f)
    return PayoffFunctional.running_min(f)


def parse_coefficient(d: dict) -> CoefficientFn:
    kind = d["kind"]
    try:
        if kind == "constant":
            return CoefficientFn.constant(d["value"])
        if kind == "affine":
            return CoefficientFn.affine(d.get("a", 0.0), d.get("b", 0.0))
        if kind == "bounded_rational":
            return CoefficientFn.bounded_rational(
                d["c0"], d["c1"], d.get("center", 0.0), d.get("scale", 1.0)
            )
        if kind == "sigmoid":
            return CoefficientFn.sigmoid(d["c"], d.get("center", 0.0), d.get("scale", 1.0))
        if kind == "time_fn":
            return CoefficientFn.time_fn(d["times"], d["values"])
    except KeyError as err:
        raise ConfigError(f"coefficient kind {kind!r} missing field {err.args[0]!r}") from None
    raise ConfigError(f"unknown coefficient kind {kind!r}")


def parse_jump(d: dict) -> JumpLaw:
    (key, val), = d.items()
    if key == "two_point":
        return JumpLaw.two_point(*val)
    if key == "gaussian":
        return JumpLaw.gaussian(*val)
    return JumpLaw.finite_support(val["points"], val["probs"])


def parse_levy(d: dict) -> LevySpec:
    return LevySpec(
        brownian_coeff_a=d.get("a", 0.0),
        cp_intensity=d.get("intensity", 0.0),
        jump_law=parse_jump(d["jump"]) if "jump" in d else None,
        p_moment=d.get("p_moment", 2.0),
    )


def parse_innovation(d: dict) -> InnovationSpec:
    kind = d["kind"]
    if kind == "gaussian":
        return InnovationSpec.gaussian(d.get("variance", 1.0))
    if kind == "finite_support":
        return InnovationSpec.finite_support(d["points"], d["probs"])
    return InnovationSpec.levy_increment(parse_levy(d), d.get("dt", 1.0))


def innovation_to_config(spec: InnovationSpec) -> dict:
    """Inverse of parse_innovation for the shipped kinds."""
    if spec.kind == "gaussian":
        return {"kind": "gaussian", "variance": spec.variance}
    if spec.kind == "finite_support":
        return {"kind": "finite_support", "points": list(spec.points), "probs": list(spec.probs)}
    levy = spec.levy
    doc: dict = {"kind": "levy", "a": levy.brownian_coeff_a, "intensity": levy.cp_intensity, "dt": spec.dt}
    if levy.jump_law is not None:
        jl = levy.jump_law
        if jl.kind == "two_point":
            doc["jump"] = {"two_point": list(jl.params)}
        elif jl.kind == "gaussian":
            doc["jump"] = {"gaussian": list(jl.params)}
        else:
            x, p = jl.params
            doc["jump"] = {"finite_support": {"points": list(x), "probs": list(p)}}
    return doc


def parse_h_values(h, n: int) -> np.ndarray:
    if isinstance(h, (int, float)):
        return np.full(n, float(h))
    arr = np.asarray(h, dtype=float)
    if arr.size != n:
        raise ConfigError(f"integrand bound h has {arr.size} entries but the grid has {n} steps")
    return arr


DEFAULT_CONFIGS: dict[str, dict] = {
    "sandwich": {
        "experiment": "sandwich",
        "seed": 20240, "n_paths": 200_000, "grid": {"n": 128, "T": 1.0},
        "params": {
            "s0": 100.0,
            "sigma": {"kind": "bounded_rational", "c0": 0.1, "c1": 0.2, "center": 100.0, "scale": 100.0},
            "payoff": {"kind": "terminal", "f": {"call": 100.0}},
        },
    },
    "compare_european": {
        "experiment": "compare_european",
        "seed": 20241, "n_paths": 100_000, "grid": {"n": 64, "T": 1.0},
        "params": {
            "model_lo": {"type": "local_vol", "s0": 100.0, "sigma": {"kind": "constant", "value": 0.1}},
            "model_hi": {"type": "local_vol", "s0": 100.0, "sigma": {"kind": "constant", "value": 0.3}},
            "payoff": {"kind": "terminal", "f": {"call": 100.0}},
        },
    },
    "compare_bermudan": {
        "experiment": "compare_bermudan",
        "seed": 20242, "grid_points": 513,
        "params": {
            "s0": 100.0, "n_dates": 12, "T": 1.0, "quant_points": 16,
            "sigma_lo": {"kind": "constant", "value": 0.2},
            "sigma_hi": {"kind": "constant", "value": 0.3},
            "payoff": {"kind": "terminal", "f": {"put": 100.0}},
        },
    },
    "peacock": {
        "experiment": "peacock",
        "seed": 20243, "n_paths": 100_000, "grid": {"n": 64, "T": 1.0},
        "params": {
            "s0": 100.0, "sigma_values": [0.1, 0.2, 0.3],
            "payoff": {"kind": "integral", "f": {"call": 100.0}, "weights": "uniform"},
        },
    },
    "ito_compare": {
        "experiment": "ito_compare",
        "seed": 20244, "n_paths": 100_000, "grid": {"n": 64, "T": 1.0},
        "params": {
            "integrand": {"form": "abs_sin"}, "h": 1.0, "direction": "upper", "x0": 0.0,
            "payoff": {"kind": "terminal", "f": {"call": 0.0}},
        },
    },
    "doleans_compare": {
        "experiment": "doleans_compare",
        "seed": 20245, "n_paths": 100_000, "grid": {"n": 64, "T": 1.0},
        "params": {
            "integrand": {"form": "abs_sin"}, "h": 0.3, "direction": "upper",
            "payoff": {"kind": "terminal", "f": {"call": 1.0}},
        },
    },
    "laplace": {
        "experiment": "laplace",
        "seed": 20246, "n_paths": 1_000_000,
        "params": {
            "f": [{"kind": "sigmoid", "c": 0.4}] * 5,
            "g": [{"kind": "sigmoid", "c": 0.8}] * 5,
            "lambdas": [0.5, 1.0, 2.0],
        },
    },
    "cm_compare": {
        "experiment": "cm_compare",
        "seed": 20247, "n_paths": 200_000, "grid": {"n": 32, "T": 1.0},
        "params": {
            "f": {"kind": "sigmoid", "c": 0.4},
            "g": {"kind": "sigmoid", "c": 0.8},
            "mixture": [[1.0, 0.5], [0.5, 1.0]],
        },
    },
    "counterexample_2period": {
        "experiment": "counterexample_2period",
        "seed": 20248, "expected": "any",
        "params": {"c": 1.0, "x0": 0.0},
    },
    "counterexample_integrand": {
        "experiment": "counterexample_integrand",
        "seed": 20249, "n_paths": 400_000, "expected": "any",
        "params": {"sigma_pair": [0.05, 0.15]},
    },
    "refine_study": {
        "experiment": "refine_study",
        "seed": 20250, "expected": "any", "grid_points": 1025,
        "params": {
            "s0": 100.0, "T": 1.0, "quant_points": 32,
            "sigma": {"kind": "constant", "value": 0.2},
            "payoff": {"kind": "terminal", "f": {"put": 100.0}},
            "n_list": [8, 16, 32, 64],
        },
    },
}


def default_config(experiment: str) -> dict:
    if experiment not in DEFAULT_CONFIGS:
        raise ConfigError(f"unknown experiment id {experiment!r}")
    return copy.deepcopy(DEFAULT_CONFIGS[experiment])


def merge_config(base: dict, override: dict) -> dict:
    """Deep merge of JSON objects; override wins."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out
