"""JSON helpers with reproducible float formatting.

Every float is written with 17 significant digits, which is enough for a
lossless float64 round-trip, so documents written here re-load bit-exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any


def format_float(x: float) -> str:
    """Render a float with 17 significant digits, always parseable as a float."""
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    text = format(float(x), ".17g")
    # keep a float marker so json.loads does not degrade "1" or "-0" to int
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def dumps(obj: Any) -> str:
    """Serialize to JSON with deterministic float formatting (no whitespace padding)."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def _emit(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(", ")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key).__name__}")
            if i:
                out.append(", ")
            out.append(json.dumps(key))
            out.append(": ")
            _emit(value, out)
        out.append("}")
    else:
        # numpy scalars and arrays are accepted via their Python equivalents
        if hasattr(obj, "tolist"):
            _emit(obj.tolist(), out)
        else:
            raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_path(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def load_path(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
