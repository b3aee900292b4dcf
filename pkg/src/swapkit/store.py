"""Reading and writing the on-disk formats of every module."""
from __future__ import annotations

import json
from pathlib import Path

from .core import FunctionTable, function_from_dict
from .testers import DPInstance, dpinstance_from_dict
from .threeap import DenseSet, denseset_from_dict
from .tridist import TriDist, tridist_from_dict

KINDS = {
    "function": (FunctionTable, function_from_dict),
    "tridist": (TriDist, tridist_from_dict),
    "denseset": (DenseSet, denseset_from_dict),
    "dpinstance": (DPInstance, dpinstance_from_dict),
}


class StoreError(ValueError):
    """Malformed file; the message names the file and the offending line or field."""


def parse_store(text: str, kind: str, source: str = "<string>"):
    if kind not in KINDS:
        raise StoreError(f"unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StoreError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise StoreError(f"{source}: top level must be a JSON object")
    try:
        return KINDS[kind][1](doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreError(f"{source}: {exc}") from None


def load_store(path, kind: str):
    path = Path(path)
    return parse_store(path.read_text(), kind, str(path))


def dump_store(obj) -> str:
    for kind, (cls, _) in KINDS.items():
        if isinstance(obj, cls):
            return obj.to_json()
    raise TypeError(f"cannot store {type(obj).__name__}")


def save_store(obj, path) -> None:
    Path(path).write_text(dump_store(obj) + "\n")


def kind_of(obj) -> str:
    for kind, (cls, _) in KINDS.items():
        if isinstance(obj, cls):
            return kind
    raise TypeError(f"no stored kind for {type(obj).__name__}")
