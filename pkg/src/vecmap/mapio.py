"""JSON map files: one scene per file.

Schema (keys are written sorted)::

    {
      "elements": [
        {"category": "divider", "closed": false, "confidence": 0.93,
         "vertices": [[x, y], ...]},
        ...
      ],
      "range": {"x": [-15.0, 15.0], "y": [-30.0, 30.0]},
      "version": "1.0"
    }

``confidence`` appears on prediction files only. Vertices may carry a third
coordinate, which is dropped on read. Coordinates are written rounded to six
decimals.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import GeometryError, Polyline
from .hsmr import REAL_CATEGORIES, ElementCategory, MapElement
from .scenegen import PerceptionRange

FORMAT_VERSION = "1.0"
DECIMALS = 6


class MapFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MapFile:
    elements: tuple[MapElement, ...]
    range: PerceptionRange
    version: str = FORMAT_VERSION

    @property
    def is_prediction(self) -> bool:
        return any(e.confidence is not None for e in self.elements)


def _round(v: float) -> float:
    return round(float(v), DECIMALS) + 0.0  # + 0.0 folds -0.0 into 0.0


def dumps(elements: Sequence[MapElement], rng: PerceptionRange) -> str:
    items = []
    for e in elements:
        if e.is_padding:
            continue
        item = {
            "category": e.category.value,
            "closed": e.closed,
            "vertices": [[_round(x), _round(y)] for x, y in e.shape.vertices],
        }
        if e.confidence is not None:
            item["confidence"] = _round(e.confidence)
        items.append(item)
    rng_doc = {"x": [_round(v) for v in rng.x], "y": [_round(v) for v in rng.y]}
    # one element per line; top-level keys in sorted order
    body = ",\n".join("  " + json.dumps(item, sort_keys=True) for item in items)
    elements = "[\n" + body + "\n ]" if items else "[]"
    return (
        "{\n"
        f' "elements": {elements},\n'
        f' "range": {json.dumps(rng_doc, sort_keys=True)},\n'
        f' "version": {json.dumps(FORMAT_VERSION)}\n'
        "}\n"
    )


def write_text_atomic(path: Path | str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_map(elements: Sequence[MapElement], rng: PerceptionRange, path: Path | str) -> None:
    write_text_atomic(path, dumps(elements, rng))


def _fail(where: str, message: str):
    raise MapFormatError(f"{where}: {message}")


def _parse_range(doc) -> PerceptionRange:
    raw = doc.get("range")
    if not isinstance(raw, dict):
        _fail("range", "missing or not an object")
    try:
        return PerceptionRange(tuple(raw["x"]), tuple(raw["y"]))
    except (KeyError, TypeError, ValueError) as exc:
        _fail("range", f"invalid ({exc})")


def _parse_element(i: int, raw) -> MapElement:
    where = f"element {i}"
    if not isinstance(raw, dict):
        _fail(where, "not an object")
    for key in ("category", "closed", "vertices"):
        if key not in raw:
            _fail(where, f"missing field '{key}'")
    allowed = {c.value for c in REAL_CATEGORIES}
    if raw["category"] not in allowed:
        _fail(where, f"field 'category': unknown category {raw['category']!r}")
    if not isinstance(raw["closed"], bool):
        _fail(where, "field 'closed' must be a boolean")
    category = ElementCategory(raw["category"])
    if raw["closed"] != (category is ElementCategory.PED_CROSSING):
        _fail(where, f"field 'closed' must be {category is ElementCategory.PED_CROSSING} for {category.value}")
    verts = raw["vertices"]
    try:
        arr = np.array(verts, dtype=np.float64)
    except (TypeError, ValueError):
        _fail(where, "field 'vertices' must be a list of [x, y] or [x, y, z]")
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        _fail(where, "field 'vertices' must be a list of [x, y] or [x, y, z]")
    need = 3 if raw["closed"] else 2
    if len(arr) < need:
        _fail(where, f"field 'vertices' needs at least {need} points, got {len(arr)}")
    confidence = raw.get("confidence")
    if confidence is not None:
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)) or not 0.0 <= confidence <= 1.0:
            _fail(where, "field 'confidence' must be a number in [0, 1]")
        confidence = float(confidence)
    try:
        shape = Polyline(arr, raw["closed"])
    except GeometryError as exc:
        _fail(where, f"field 'vertices': {exc}")
    return MapElement(category, shape, confidence)


def loads(text: str) -> MapFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        _fail("document", "top level must be an object")
    version = doc.get("version")
    if not isinstance(version, str):
        _fail("version", "missing or not a string")
    rng = _parse_range(doc)
    raw_elements = doc.get("elements")
    if not isinstance(raw_elements, list):
        _fail("elements", "missing or not a list")
    elements = tuple(_parse_element(i, raw) for i, raw in enumerate(raw_elements))
    with_conf = sum(e.confidence is not None for e in elements)
    if 0 < with_conf < len(elements):
        _fail("elements", "confidence must be present on all elements (prediction file) or none (ground truth)")
    return MapFile(elements, rng, version)


def read_map(path: Path | str) -> MapFile:
    """Parse and validate a map file; nothing is returned unless every element is valid."""
    return loads(Path(path).read_text(encoding="utf-8"))
