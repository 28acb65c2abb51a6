"""Typed CSV datasets and JSON tree documents.

A dataset file has a header ``left,right,<name>:<type>,...`` with types
``num``, ``nom``, ``nom(a|b|c)`` (declared level order) and
``ord(s1|s2|...)`` (increasing level scores).  An empty or ``inf`` right
field means right censoring and ``left == right`` an exact event.

Numbers are written with 17 significant digits so that every value
survives a write/read cycle unchanged.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ctree import NOMINAL, NUMERIC, ORDINAL, Covariate, CovariateSpec, Split, SurvivalTree, TreeConfig, TreeNode
from .estimator import IntervalData, SurvivalCurve

__all__ = [
    "ParseError",
    "Dataset",
    "parse_dataset",
    "read_dataset",
    "serialize_dataset",
    "tree_to_document",
    "tree_from_document",
    "dumps_tree",
    "loads_tree",
    "format_number",
    "atomic_write",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
_TYPE_RE = re.compile(r"^(num|nom|ord)(?:\((.*)\))?$")
_INF_TOKENS = {"", "inf", "+inf", "infinity", "Inf", "Infinity"}


class ParseError(ValueError):
    """Malformed dataset or tree document."""


def format_number(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


@dataclass(frozen=True)
class Dataset:
    """Parsed table; ``data`` is None for covariate-only files."""

    data: IntervalData | None
    covariates: list

    @property
    def table(self) -> dict:
        return {c.name: c.values for c in self.covariates}


@dataclass(frozen=True)
class _Field:
    name: str
    kind: str
    levels: tuple | None  # None: nominal levels taken in order of appearance


def _parse_header_field(text: str, col: int) -> _Field:
    if ":" not in text:
        raise ParseError(f"header column {col}: expected name:type, got {text!r}")
    name, tag = (s.strip() for s in text.rsplit(":", 1))
    m = _TYPE_RE.match(tag)
    if not name or m is None:
        raise ParseError(f"header column {col}: unknown type tag {tag!r} (use num, ord(...), nom)")
    kind, arg = m.group(1), m.group(2)
    if arg is None:
        if kind == ORDINAL:
            raise ParseError(f"header column {col}: ord needs its scores, e.g. ord(1|2|3)")
        return _Field(name, kind, None if kind == NOMINAL else ())
    if kind == NUMERIC:
        raise ParseError(f"header column {col}: num takes no level list")
    items = tuple(s.strip() for s in arg.split("|"))
    if kind == ORDINAL:
        try:
            items = tuple(float(s) for s in items)
        except ValueError:
            raise ParseError(f"header column {col}: ordinal scores must be numbers") from None
    try:
        CovariateSpec(name, kind, items)
    except ValueError as err:
        raise ParseError(f"header column {col}: {err}") from None
    return _Field(name, kind, items)


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col}: {text!r} is not a number") from None
    if math.isnan(v):
        raise ParseError(f"row {row}, column {col}: missing value")
    return v


def _covariates(fields: Sequence[_Field], rows: list, offset: int) -> list:
    out = []
    for j, f in enumerate(fields):
        vals = []
        for r, row in rows:
            text = row[offset + j].strip()
            if text == "":
                raise ParseError(f"row {r}, column {f.name}: missing value")
            if f.kind == NOMINAL:
                if f.levels is not None and text not in f.levels:
                    raise ParseError(f"row {r}, column {f.name}: level {text!r} not declared")
                vals.append(text)
                continue
            v = _parse_float(text, r, f.name)
            if f.kind == ORDINAL and v not in f.levels:
                raise ParseError(f"row {r}, column {f.name}: {text!r} is not a declared ordinal score")
            vals.append(v)
        if f.kind == NOMINAL:
            levels = f.levels if f.levels is not None else tuple(dict.fromkeys(vals))
            if len(levels) < 2:
                raise ParseError(f"column {f.name}: a nominal covariate needs at least two levels; declare them as nom(a|b)")
            out.append(Covariate(f.name, np.array(vals, dtype=object), NOMINAL, levels))
        else:
            out.append(Covariate(f.name, np.array(vals, dtype=float), f.kind, f.levels))
    return out


def parse_dataset(text: str, require_response: bool = True) -> Dataset:
    """Parse a typed CSV table; row numbers in errors count the header as row 1.

    Without ``require_response`` the ``left,right`` columns may be absent
    (prediction input).
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty dataset") from None
    has_response = header[:2] == ["left", "right"]
    if require_response and not has_response:
        raise ParseError("header must start with left,right")
    offset = 2 if has_response else 0
    fields = [_parse_header_field(f, j + 1) for j, f in enumerate(header[offset:], start=offset)]
    names = [f.name for f in fields]
    if len(set(names)) != len(names):
        raise ParseError("duplicate covariate names in header")

    rows, left, right = [], [], []
    for r, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} fields, found {len(row)}")
        rows.append((r, row))
        if not has_response:
            continue
        lo_text, hi_text = row[0].strip(), row[1].strip()
        if lo_text == "":
            raise ParseError(f"row {r}, column left: missing value")
        lo = _parse_float(lo_text, r, "left")
        hi = math.inf if hi_text in _INF_TOKENS else _parse_float(hi_text, r, "right")
        if not 0 <= lo < math.inf:
            raise ParseError(f"row {r}: left must be finite and >= 0")
        if hi < lo:
            raise ParseError(f"row {r}: right ({hi_text}) < left ({lo_text})")
        left.append(lo)
        right.append(hi)
    if not rows:
        raise ParseError("dataset has no rows")
    data = IntervalData.from_intervals(np.array(left), np.array(right)) if has_response else None
    return Dataset(data, _covariates(fields, rows, offset))


def read_dataset(path, require_response: bool = True) -> Dataset:
    return parse_dataset(Path(path).read_text(), require_response)


def _type_tag(cov: Covariate) -> str:
    if cov.kind == NUMERIC:
        return "num"
    if cov.kind == ORDINAL:
        return "ord(" + "|".join(format_number(v) for v in cov.levels) + ")"
    return "nom(" + "|".join(str(v) for v in cov.levels) + ")"


def serialize_dataset(data: IntervalData, covariates: Sequence[Covariate] = ()) -> str:
    """Typed CSV text for a dataset; ``parse_dataset`` inverts it exactly."""
    if np.any(data.weight != 1.0):
        raise ValueError("the CSV format has no weight column; only unit weights can be written")
    for cov in covariates:
        if cov.kind == NOMINAL and any(set(str(v)) & set("|(),\n\"") for v in cov.levels):
            raise ValueError(f"nominal levels of {cov.name!r} may not contain | ( ) , quotes or newlines")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["left", "right"] + [f"{c.name}:{_type_tag(c)}" for c in covariates])
    for i in range(len(data)):
        row = [format_number(data.left[i]), format_number(data.right[i])]
        for c in covariates:
            v = c.values[i]
            row.append(str(v) if c.kind == NOMINAL else format_number(v))
        w.writerow(row)
    return buf.getvalue()


# ------------------------------------------------------------ tree documents

def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _unnum(x) -> float:
    return float(x)


def _curve_doc(curve: SurvivalCurve) -> dict:
    return {
        "intervals": [[_num(q), _num(p), _num(m)] for q, p, m in zip(curve.q, curve.p, curve.masses)],
        "loglik": _num(curve.loglik),
        "iterations": int(curve.iterations),
        "converged": bool(curve.converged),
    }


def _node_doc(node: TreeNode) -> dict:
    doc = {
        "id": node.id,
        "n": node.n,
        "weight": _num(node.weight),
        "depth": node.depth,
        "p_values": [[name, _num(p)] for name, p in node.p_values],
        "diagnostics": list(node.diagnostics),
    }
    if node.is_terminal:
        doc["curve"] = _curve_doc(node.curve)
        return doc
    s = node.split
    doc["split"] = {
        "variable": s.variable,
        "kind": s.kind,
        "threshold": None if s.threshold is None else _num(s.threshold),
        "left_levels": list(s.left_levels),
        "right_levels": list(s.right_levels),
        "statistic": _num(s.statistic),
    }
    doc["left"] = _node_doc(node.left)
    doc["right"] = _node_doc(node.right)
    return doc


def tree_to_document(tree: SurvivalTree) -> dict:
    return {
        "format": "ictree",
        "version": FORMAT_VERSION,
        "config": tree.config.to_dict(),
        "schema": [{"name": s.name, "kind": s.kind, "levels": [_num(v) if s.kind != NOMINAL else v for v in s.levels]}
                   for s in tree.schema],
        "root": _node_doc(tree.root),
    }


def _curve_from(doc) -> SurvivalCurve:
    iv = np.array([[_unnum(v) for v in row] for row in doc["intervals"]], dtype=float)
    return SurvivalCurve(iv[:, 0], iv[:, 1], iv[:, 2], _unnum(doc["loglik"]), int(doc["iterations"]), bool(doc["converged"]))


def _node_from(doc) -> TreeNode:
    common = dict(
        id=int(doc["id"]), n=int(doc["n"]), weight=_unnum(doc["weight"]), depth=int(doc["depth"]),
        p_values=tuple((name, _unnum(p)) for name, p in doc["p_values"]),
        diagnostics=tuple(doc["diagnostics"]),
    )
    if "curve" in doc:
        return TreeNode(**common, curve=_curve_from(doc["curve"]))
    s = doc["split"]
    split = Split(
        s["variable"], s["kind"], None if s["threshold"] is None else _unnum(s["threshold"]),
        tuple(s["left_levels"]), tuple(s["right_levels"]), _unnum(s["statistic"]),
    )
    return TreeNode(**common, split=split, left=_node_from(doc["left"]), right=_node_from(doc["right"]))


def tree_from_document(doc: dict) -> SurvivalTree:
    try:
        if doc.get("format") != "ictree":
            raise ParseError("not a tree document")
        if doc.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported tree document version {doc.get('version')!r}")
        config = TreeConfig(**doc["config"])
        schema = tuple(
            CovariateSpec(s["name"], s["kind"], tuple(_unnum(v) for v in s["levels"]) if s["kind"] != NOMINAL else tuple(s["levels"]))
            for s in doc["schema"]
        )
        return SurvivalTree(_node_from(doc["root"]), schema, config)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as err:
        raise ParseError(f"malformed tree document: {err}") from None


def dumps_tree(tree: SurvivalTree) -> str:
    return json.dumps(tree_to_document(tree), indent=1, allow_nan=False) + "\n"


def loads_tree(text: str) -> SurvivalTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"tree document is not valid JSON: {err}") from None
    return tree_from_document(doc)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
