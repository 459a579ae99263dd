"""JSON and CSV report writing.

Floats are written with 17 significant digits so identical runs produce
identical bytes; NaN and infinities become the strings "nan", "inf", "-inf".
"""

from __future__ import annotations

import datetime as _dt
import enum
import io
import json
import math
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, enum.Enum):
        obj = obj.value
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return "[" + pad + ("," + pad).join(items) + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def envelope(command: str, config: dict, body: dict, status: str, failures: list[str]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": status,
        "failures": failures,
        "config": config,
        "result": body,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def csv_summary(report: dict) -> str:
    """Flat key,value lines for every scalar leaf of the result section."""
    buf = io.StringIO()
    buf.write("key,value\n")

    def walk(prefix: str, node: Any):
        if hasattr(node, "to_dict"):
            node = node.to_dict()
        if isinstance(node, dict):
            for k, v in node.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(node, (list, tuple)):
            if len(node) <= 16:
                for i, v in enumerate(node):
                    walk(f"{prefix}[{i}]", v)
        else:
            if isinstance(node, enum.Enum):
                node = node.value
            text = _float(float(node)).strip('"') if isinstance(node, (float, np.floating)) else str(node)
            buf.write(f"{prefix},{text}\n")

    walk("", {"command": report["command"], "status": report["status"], **report["result"]})
    return buf.getvalue()
