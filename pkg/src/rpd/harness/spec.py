"""Problem-spec documents: schema, defaults, canonical serialization.

A spec is a JSON object with a ``version`` field. Unknown fields are
rejected at every level; omitted optional fields receive defaults during
normalization, so that ``ProblemSpec.from_json(s.to_json()) == s``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import jsonschema

from ..exceptions import SpecError

SPEC_VERSION = 1

PD_FAMILIES = ("lasso", "tv1d", "box_ls", "custom-pd")
DIST_FAMILIES = ("ridge_consensus", "custom-dist")
FAMILIES = PD_FAMILIES + DIST_FAMILIES

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_auto_or_pos = {"oneOf": [{"const": "auto"}, _pos]}

_prox = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["l1", "sq_distance", "box", "zero", "point"]},
        "tau": _pos,
        "center": _vec,
        "lo": {"oneOf": [_num, _vec]},
        "hi": {"oneOf": [_num, _vec]},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_smooth = {
    "type": "object",
    "properties": {"M": _mat, "b": _vec, "weight": {"type": "number", "minimum": 0},
                   "c": _vec},
    "required": ["M"],
    "additionalProperties": False,
}

_reference = {
    "type": "object",
    "properties": {"x": _vec, "objective": _num},
    "required": ["x", "objective"],
    "additionalProperties": False,
}

_graph = {"oneOf": [
    {"const": "ring"},
    {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                "minItems": 1}, "minItems": 1},
]}

PARAM_SCHEMAS = {
    "lasso": {
        "properties": {"n_samples": _int_pos, "n_features": _int_pos, "tau": _pos,
                       "data_seed": {"type": "integer", "minimum": 0}, "n_blocks": _int_pos,
                       "sparsity": _int_pos, "noise": {"type": "number", "minimum": 0}},
        "defaults": {"n_samples": 40, "n_features": 20, "tau": 0.1, "data_seed": 7,
                     "n_blocks": 1, "sparsity": 5, "noise": 0.01},
    },
    "tv1d": {
        "properties": {"d": {"type": "integer", "minimum": 2}, "tau": _pos,
                       "data_seed": {"type": "integer", "minimum": 0},
                       "noise": {"type": "number", "minimum": 0}},
        "defaults": {"d": 50, "tau": 0.5, "data_seed": 7, "noise": 0.1},
    },
    "box_ls": {
        "properties": {"n_samples": _int_pos, "n_features": _int_pos, "lo": _num, "hi": _num,
                       "data_seed": {"type": "integer", "minimum": 0}},
        "defaults": {"n_samples": 40, "n_features": 20, "lo": -0.5, "hi": 0.5, "data_seed": 7},
    },
    "ridge_consensus": {
        "properties": {"m": _int_pos, "d": _int_pos, "n_per_agent": _int_pos, "reg": _pos,
                       "graph": _graph, "data_seed": {"type": "integer", "minimum": 0},
                       "noise": {"type": "number", "minimum": 0}},
        "defaults": {"m": 5, "d": 10, "n_per_agent": 8, "reg": 1.0, "graph": "ring",
                     "data_seed": 7, "noise": 0.1},
    },
    "custom-pd": {
        "properties": {
            "primal_dims": {"type": "array", "items": _int_pos, "minItems": 1},
            "dual_dims": {"type": "array", "items": _int_pos, "minItems": 1},
            "L": {"type": "array", "minItems": 1, "items": {
                "type": "object", "properties": {
                    "row": {"type": "integer", "minimum": 0},
                    "col": {"type": "integer", "minimum": 0}, "matrix": _mat},
                "required": ["row", "col", "matrix"], "additionalProperties": False}},
            "f": {"type": "array", "items": _prox},
            "g": {"type": "array", "items": _prox},
            "h": {"type": "array", "items": {"oneOf": [{"type": "null"}, _smooth]}},
            "reference": _reference,
        },
        "required": ["primal_dims", "dual_dims", "L", "f", "g"],
        "defaults": {},
    },
    "custom-dist": {
        "properties": {
            "m": _int_pos, "d": _int_pos, "graph": _graph,
            "M": {"type": "array", "items": _mat, "minItems": 1},
            "f": {"type": "array", "items": _prox},
            "g": {"type": "array", "items": _prox},
            "h": {"type": "array", "items": {"oneOf": [{"type": "null"}, _smooth]}},
            "reference": _reference,
        },
        "required": ["m", "d", "graph", "M", "f", "g"],
        "defaults": {},
    },
}

SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": SPEC_VERSION},
        "family": {"enum": list(FAMILIES)},
        "params": {"type": "object"},
        "algorithm": {"enum": ["alg1", "alg1_sym", "alg2", "dist1", "dist2", "dist_opt",
                               "dist_pairwise"]},
        "metrics": {
            "type": "object",
            "properties": {"primal": _auto_or_pos, "dual": _auto_or_pos, "theta": _auto_or_pos},
            "additionalProperties": False,
        },
        "activation": {
            "type": "object",
            "properties": {"kind": {"enum": ["full", "bernoulli", "single"]},
                           "prob": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        "errors": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["none", "power", "geometric"]},
                "C": _pos, "s": {"type": "number", "exclusiveMinimum": 1},
                "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "channels": {"oneOf": [
                    {"const": "all"},
                    {"type": "array", "items": {"enum": ["a", "b", "c", "d"]},
                     "uniqueItems": True}]},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "lambda": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "stop": {
            "type": "object",
            "properties": {"max_iters": _int_pos, "tol": _pos, "window": _int_pos},
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["version", "family", "algorithm"],
    "additionalProperties": False,
}

DEFAULTS = {
    "params": {},
    "metrics": {"primal": "auto", "dual": "auto", "theta": "auto"},
    "activation": {"kind": "full"},
    "errors": {"kind": "none"},
    "lambda": 1.0,
    "stop": {"max_iters": 1000, "tol": 1e-10, "window": 10},
}

_VALIDATOR = jsonschema.Draft202012Validator(SPEC_SCHEMA)


def _param_validator(family: str):
    ps = PARAM_SCHEMAS[family]
    schema = {"type": "object", "properties": ps["properties"], "additionalProperties": False}
    if "required" in ps:
        schema["required"] = ps["required"]
    return jsonschema.Draft202012Validator(schema)


def _first_error(validator, doc) -> str | None:
    errs = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if not errs:
        return None
    e = errs[0]
    where = "/".join(str(p) for p in e.absolute_path) or "<root>"
    return f"{where}: {e.message}"


def normalize(doc: dict) -> dict:
    """Validate ``doc`` and return a copy with every default filled in.

    Raises
    ------
    SpecError
        Schema violation, unknown field or inconsistent combination.
    """
    if not isinstance(doc, dict):
        raise SpecError("a spec must be a JSON object")
    msg = _first_error(_VALIDATOR, doc)
    if msg:
        raise SpecError(msg)
    out = copy.deepcopy(doc)
    fam = out["family"]
    msg = _first_error(_param_validator(fam), out.get("params", {}))
    if msg:
        raise SpecError(f"params/{msg}")
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            merged = copy.deepcopy(val)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, val)
    params = copy.deepcopy(PARAM_SCHEMAS[fam]["defaults"])
    params.update(out["params"])
    out["params"] = params
    algo = out["algorithm"]
    if fam in PD_FAMILIES and algo.startswith("dist"):
        raise SpecError(f"family {fam!r} needs a primal-dual algorithm, got {algo!r}")
    if fam in DIST_FAMILIES and not algo.startswith("dist"):
        raise SpecError(f"family {fam!r} needs a distributed algorithm, got {algo!r}")
    act = out["activation"]
    if act["kind"] == "bernoulli":
        act.setdefault("prob", 0.5)
    elif "prob" in act:
        raise SpecError("activation/prob only applies to bernoulli schedules")
    err = out["errors"]
    if err["kind"] == "none":
        extra = set(err) - {"kind"}
        if extra:
            raise SpecError(f"errors: fields {sorted(extra)} need an active error kind")
    else:
        if err["kind"] == "power":
            err.setdefault("s", 2.0)
            if "rho" in err:
                raise SpecError("errors/rho only applies to geometric decay")
        else:
            err.setdefault("rho", 0.5)
            if "s" in err:
                raise SpecError("errors/s only applies to power decay")
        err.setdefault("C", 1.0)
        err.setdefault("channels", "all")
    return out


@dataclass(frozen=True)
class ProblemSpec:
    """Normalized problem description (see ``normalize``)."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemSpec":
        return cls(normalize(doc))

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ProblemSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise SpecError(f"cannot read spec: {exc}") from exc
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def to_json(self) -> str:
        return canonical_json(self.doc)

    def __eq__(self, other):
        return isinstance(other, ProblemSpec) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.to_json())

    def __getitem__(self, key) -> Any:
        return self.doc[key]

    @property
    def family(self) -> str:
        return self.doc["family"]

    @property
    def algorithm(self) -> str:
        return self.doc["algorithm"]

    @property
    def params(self) -> dict:
        return self.doc["params"]

    @property
    def is_distributed(self) -> bool:
        return self.family in DIST_FAMILIES

    def with_value(self, path: str, value) -> "ProblemSpec":
        """Copy with the dotted ``path`` set to ``value`` (re-validated)."""
        doc = self.to_dict()
        keys = path.split(".")
        node = doc
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise SpecError(f"unknown path {path!r}")
            node = node[k]
        node[keys[-1]] = value
        return ProblemSpec.from_dict(doc)

    def resolve_seed(self, cli_seed: int | None = None, env: dict | None = None) -> int:
        """Run seed: CLI flag, then the ``seed`` field, then ``RPD_SEED``, then 0."""
        if cli_seed is not None:
            return int(cli_seed)
        if "seed" in self.doc:
            return int(self.doc["seed"])
        if env is not None and env.get("RPD_SEED"):
            try:
                return int(env["RPD_SEED"])
            except ValueError as exc:
                raise SpecError("RPD_SEED must be an integer") from exc
        return 0

    def config_hash(self, seed: int) -> str:
        """SHA-256 of the canonical spec together with the resolved run seed."""
        payload = canonical_json({"spec": self.doc, "seed": int(seed)})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)
