"""JSON files for strategies, witnesses, behaviours and decompositions.

Every real number is written as a decimal string with 17 significant digits
so that doubles survive a round trip exactly; complex numbers are
``[re, im]`` pairs.  Each document carries ``schema`` and ``version``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .bell import BellScenario, Behaviour, Strategy
from .channels import Channel
from .simulation import Witness

VERSION = 1
SCHEMAS = ("bellsim.strategy", "bellsim.witness", "bellsim.behaviour", "bellsim.decomposition")


class FormatError(ValueError):
    """Unreadable or structurally malformed file (CLI exit code 2)."""


class InvariantError(ValueError):
    """Well-formed file whose content violates a mathematical invariant (exit code 3)."""


def _num(v: float) -> str:
    return format(float(v), ".17g")


def encode_array(a) -> Any:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return [_num(a.real), _num(a.imag)]
    return [encode_array(x) for x in a]


def encode_real(a) -> Any:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _num(a)
    return [encode_real(x) for x in a]


def _parse_num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (str, int, float)):
        raise FormatError(f"{where}: expected a number, got {type(v).__name__}")
    try:
        return float(v)
    except ValueError:
        raise FormatError(f"{where}: cannot parse {v!r} as a number") from None


def decode_array(obj, where: str = "array") -> np.ndarray:
    """Inverse of :func:`encode_array`; the innermost lists must be [re, im] pairs."""
    def walk(o, path):
        if not isinstance(o, list):
            raise FormatError(f"{path}: expected a list")
        if len(o) == 2 and not isinstance(o[0], list) and not isinstance(o[1], list):
            return complex(_parse_num(o[0], path + "[0]"), _parse_num(o[1], path + "[1]"))
        return [walk(x, f"{path}[{i}]") for i, x in enumerate(o)]

    out = walk(obj, where)
    try:
        return np.array(out, dtype=complex)
    except ValueError:
        raise FormatError(f"{where}: ragged nested lists") from None


def decode_real(obj, where: str = "array") -> np.ndarray:
    def walk(o, path):
        if isinstance(o, list):
            return [walk(x, f"{path}[{i}]") for i, x in enumerate(o)]
        return _parse_num(o, path)

    try:
        return np.array(walk(obj, where), dtype=float)
    except ValueError:
        raise FormatError(f"{where}: ragged nested lists") from None


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def loads(text: str, where: str = "<string>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{where}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: top level must be an object")
    return doc


def read(path, schema: str | None = None) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FormatError(f"{p}: {e.strerror}") from None
    doc = loads(text, str(p))
    found = doc.get("schema")
    if found not in SCHEMAS:
        raise FormatError(f"{p}: unknown schema {found!r}")
    if schema is not None and found != schema:
        raise FormatError(f"{p}: expected schema {schema!r}, found {found!r}")
    if doc.get("version") != VERSION:
        raise FormatError(f"{p}: unsupported version {doc.get('version')!r}")
    return doc


def write(path, doc: dict):
    Path(path).write_text(dumps(doc))


def _field(doc: dict, key: str, where: str):
    if key not in doc:
        raise FormatError(f"{where}: missing field {key!r}")
    return doc[key]


# -- strategies ---------------------------------------------------------------------

def scenario_doc(sc: BellScenario) -> dict:
    return {"x_a": list(sc.x_a), "x_b": list(sc.x_b), "y_a": list(sc.y_a), "y_b": list(sc.y_b)}


def scenario_from(doc, where: str) -> BellScenario:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: scenario must be an object")
    try:
        return BellScenario(*(tuple(_field(doc, k, where + ".scenario")) for k in ("x_a", "x_b", "y_a", "y_b")))
    except (TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"{where}.scenario: {e}") from None


def strategy_doc(s: Strategy) -> dict:
    return {
        "schema": "bellsim.strategy",
        "version": VERSION,
        "scenario": scenario_doc(s.scenario),
        "dims": list(s.dims),
        "state": encode_array(s.state),
        "povm_a": [[encode_array(e) for e in p] for p in s.povm_a],
        "povm_b": [[encode_array(e) for e in p] for p in s.povm_b],
        "purification": None if s.purification is None else encode_array(s.purification),
    }


def strategy_from(doc: dict, where: str = "strategy") -> Strategy:
    sc = scenario_from(_field(doc, "scenario", where), where)
    dims = _field(doc, "dims", where)
    if not (isinstance(dims, list) and len(dims) == 2 and all(isinstance(d, int) and d > 0 for d in dims)):
        raise FormatError(f"{where}.dims: expected two positive integers")
    state = decode_array(_field(doc, "state", where), where + ".state")
    povms = {}
    for key in ("povm_a", "povm_b"):
        raw = _field(doc, key, where)
        if not isinstance(raw, list):
            raise FormatError(f"{where}.{key}: expected a list of POVMs")
        povms[key] = [[decode_array(e, f"{where}.{key}[{x}][{y}]") for y, e in enumerate(p)]
                      for x, p in enumerate(raw)]
    pur = doc.get("purification")
    pur = None if pur is None else decode_array(pur, where + ".purification")
    try:
        return Strategy(sc, state, tuple(dims), povms["povm_a"], povms["povm_b"], pur)
    except ValueError as e:
        raise InvariantError(f"{where}: {e}") from None


def save_strategy(s: Strategy, path):
    write(path, strategy_doc(s))


def load_strategy(path) -> Strategy:
    return strategy_from(read(path, "bellsim.strategy"), str(path))


# -- behaviours and decompositions --------------------------------------------------

def behaviour_doc(p: Behaviour) -> dict:
    return {"schema": "bellsim.behaviour", "version": VERSION, "scenario": scenario_doc(p.scenario),
            "table": encode_real(p.table)}


def behaviour_from(doc: dict, where: str = "behaviour") -> Behaviour:
    sc = scenario_from(_field(doc, "scenario", where), where)
    table = decode_real(_field(doc, "table", where), where + ".table")
    if table.shape != sc.shape:
        raise FormatError(f"{where}.table: shape {table.shape} does not match the scenario {sc.shape}")
    b = Behaviour(sc, table)
    dev = b.check()
    if dev > 1e-9:
        raise InvariantError(f"{where}: not a family of distributions (deviation {dev:.3e})")
    return b


def decomposition_doc(terms) -> dict:
    sc = terms[0][1].scenario
    return {"schema": "bellsim.decomposition", "version": VERSION, "scenario": scenario_doc(sc),
            "terms": [{"weight": _num(w), "table": encode_real(b.table)} for w, b in terms]}


def decomposition_from(doc: dict, where: str = "decomposition"):
    from .analysis import ConvexDecomposition
    sc = scenario_from(_field(doc, "scenario", where), where)
    raw = _field(doc, "terms", where)
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"{where}.terms: expected a non-empty list")
    terms = []
    for i, t in enumerate(raw):
        if not isinstance(t, dict):
            raise FormatError(f"{where}.terms[{i}]: expected an object")
        w = _parse_num(_field(t, "weight", f"{where}.terms[{i}]"), f"{where}.terms[{i}].weight")
        table = decode_real(_field(t, "table", f"{where}.terms[{i}]"), f"{where}.terms[{i}].table")
        if table.shape != sc.shape:
            raise FormatError(f"{where}.terms[{i}].table: wrong shape {table.shape}")
        terms.append((w, Behaviour(sc, table)))
    try:
        return ConvexDecomposition(terms, tol=1e-9)
    except ValueError as e:
        raise InvariantError(f"{where}: {e}") from None


# -- witnesses ------------------------------------------------------------------------

def _channel_doc(ch: Channel) -> dict:
    return {"d_in": ch.d_in, "d_out": ch.d_out, "choi": encode_array(ch.choi)}


def _channel_from(doc, where: str) -> Channel:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected an object")
    d_in, d_out = _field(doc, "d_in", where), _field(doc, "d_out", where)
    if not (isinstance(d_in, int) and isinstance(d_out, int)):
        raise FormatError(f"{where}: d_in and d_out must be integers")
    choi = decode_array(_field(doc, "choi", where), where + ".choi")
    try:
        return Channel(choi, d_in, d_out)
    except ValueError as e:
        raise InvariantError(f"{where}: {e}") from None


def witness_doc(w: Witness) -> dict:
    isos = {}
    for k, v in w.isometries.items():
        if isinstance(v, (list, tuple)):
            isos[k] = {"per_input": [encode_array(m) for m in v]}
        else:
            isos[k] = {"matrix": encode_array(v)}
    return {
        "schema": "bellsim.witness",
        "version": VERSION,
        "kind": w.kind,
        "conventions": list(w.conventions),
        "channels": {k: _channel_doc(g) for k, g in w.gammas.items()},
        "isometries": isos,
        "assistant": None if w.assistant is None else encode_array(w.assistant),
        "assistant_dims": None if w.assistant_dims is None else list(w.assistant_dims),
        "side_dims": None if w.side_dims is None else list(w.side_dims),
        "residual_state": None if w.residual_state is None else encode_array(w.residual_state),
        "residual_dims": None if w.residual_dims is None else list(w.residual_dims),
    }


def _dims(v, where: str):
    if v is None:
        return None
    if not (isinstance(v, list) and all(isinstance(d, int) and d > 0 for d in v)):
        raise FormatError(f"{where}: expected a list of positive integers")
    return tuple(v)


def witness_from(doc: dict, where: str = "witness") -> Witness:
    kind = _field(doc, "kind", where)
    channels = doc.get("channels") or {}
    if not isinstance(channels, dict):
        raise FormatError(f"{where}.channels: expected an object")
    gammas = {k: _channel_from(c, f"{where}.channels.{k}") for k, c in channels.items()}
    isos = {}
    for k, v in (doc.get("isometries") or {}).items():
        if isinstance(v, dict) and "per_input" in v:
            isos[k] = [decode_array(m, f"{where}.isometries.{k}") for m in v["per_input"]]
        elif isinstance(v, dict) and "matrix" in v:
            isos[k] = decode_array(v["matrix"], f"{where}.isometries.{k}")
        else:
            raise FormatError(f"{where}.isometries.{k}: expected 'matrix' or 'per_input'")
    assistant = doc.get("assistant")
    residual = doc.get("residual_state")
    conventions = doc.get("conventions", ["minimal", "minimal"])
    if not (isinstance(conventions, list) and len(conventions) == 2):
        raise FormatError(f"{where}.conventions: expected two names")
    try:
        return Witness(
            kind, gammas,
            assistant=None if assistant is None else decode_array(assistant, where + ".assistant"),
            assistant_dims=_dims(doc.get("assistant_dims"), where + ".assistant_dims"),
            side_dims=_dims(doc.get("side_dims"), where + ".side_dims"),
            isometries=isos,
            residual_state=None if residual is None else decode_array(residual, where + ".residual_state"),
            residual_dims=_dims(doc.get("residual_dims"), where + ".residual_dims"),
            conventions=tuple(conventions),
        )
    except ValueError as e:
        if isinstance(e, (FormatError, InvariantError)):
            raise
        raise FormatError(f"{where}: {e}") from None


def save_witness(w: Witness, path):
    write(path, witness_doc(w))


def load_witness(path) -> Witness:
    return witness_from(read(path, "bellsim.witness"), str(path))


__all__ = [
    "FormatError", "InvariantError", "VERSION", "encode_array", "decode_array", "encode_real", "decode_real",
    "strategy_doc", "strategy_from", "save_strategy", "load_strategy", "behaviour_doc", "behaviour_from",
    "decomposition_doc", "decomposition_from", "witness_doc", "witness_from", "save_witness", "load_witness",
    "read", "write", "dumps", "loads",
]
