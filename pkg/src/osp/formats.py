"""Lossless text serializations of tabular content: CSV, TSV, JSON, XML.

All four formats re-parse to cell-identical tables, so a fingerprint
computed over parsed content does not depend on the transport format.
Dialect details that fingerprint reproducibility hangs on (quoting,
missing versus empty string, line endings) are pinned in docs/api.md:

* delimited formats use LF line endings, a header row, UTF-8, and
  double-quote escaping with quote doubling;
* a missing cell is an empty unquoted field; the empty text string is a
  quoted empty field ``""``;
* numerics render with ``repr`` (shortest round-trip form), booleans as
  ``true``/``false``; non-finite numerics are rejected.
"""

from __future__ import annotations

import io
import json
import math
import xml.etree.ElementTree as ET

import numpy as np

from .content import COLUMN_TYPES, Column, MatrixContent, TableContent
from .errors import NotAcceptable, SchemaMismatch

MEDIA_CSV = "text/csv"
MEDIA_TSV = "text/tab-separated-values"
MEDIA_XML = "application/xml"
MEDIA_JSON = "application/json"

SUPPORTED_MEDIA = (MEDIA_CSV, MEDIA_TSV, MEDIA_XML, MEDIA_JSON)
DEFAULT_MEDIA = MEDIA_CSV

_DELIMS = {MEDIA_CSV: ",", MEDIA_TSV: "\t"}


def negotiate(accept_header: str | None) -> str:
    """Pick a supported media type from an Accept header.

    Client-listed types are honored in order; ``*/*`` (and a missing
    header) selects CSV.  A header offering only unsupported types raises
    ``NotAcceptable`` listing the alternatives.
    """
    if not accept_header or not accept_header.strip():
        return DEFAULT_MEDIA
    for item in accept_header.split(","):
        media = item.split(";")[0].strip().lower()
        if media in SUPPORTED_MEDIA:
            return media
        if media in ("*/*", "text/*"):
            return DEFAULT_MEDIA
        if media == "application/*":
            return MEDIA_JSON
    raise NotAcceptable(
        f"no supported media type in {accept_header!r}", supported=list(SUPPORTED_MEDIA)
    )


# --- delimited (CSV / TSV) ---------------------------------------------------

def _render_number(v) -> str:
    if isinstance(v, float):
        if not math.isfinite(v):
            raise SchemaMismatch(f"non-finite numeric cell {v!r}")
        return repr(v)
    return str(v)


def _quote_field(text: str, delim: str) -> str:
    if text == "" or '"' in text or delim in text or "\n" in text or "\r" in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def _render_cell(v, ctype: str, delim: str) -> str:
    if v is None:
        return ""
    if ctype == "numeric":
        return _render_number(v)
    if ctype == "boolean":
        return "true" if v else "false"
    return _quote_field(v, delim)


def _write_delimited(table: TableContent, delim: str) -> bytes:
    out = io.StringIO()
    out.write(delim.join(_quote_field(c.name, delim) or '""' for c in table.columns))
    out.write("\n")
    for i in range(table.row_count):
        out.write(delim.join(_render_cell(c.values[i], c.ctype, delim) for c in table.columns))
        out.write("\n")
    return out.getvalue().encode("utf-8")


def _split_delimited(text: str, delim: str):
    """Yield rows of (field_text, was_quoted) pairs."""
    row, field, quoted, in_quotes = [], [], False, False
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    field.append('"')
                    i += 1
                else:
                    in_quotes = False
            else:
                field.append(ch)
        elif ch == '"' and not field:
            in_quotes = True
            quoted = True
        elif ch == delim:
            row.append(("".join(field), quoted))
            field, quoted = [], False
        elif ch == "\n" or ch == "\r":
            if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 1
            row.append(("".join(field), quoted))
            yield row
            row, field, quoted = [], [], False
        else:
            field.append(ch)
        i += 1
    if in_quotes:
        raise SchemaMismatch("unterminated quoted field")
    if field or quoted or row:
        row.append(("".join(field), quoted))
        yield row


_INT_CHARS = set("+-0123456789")


def _parse_cell(text: str, was_quoted: bool, ctype: str):
    if not was_quoted and text == "":
        return None
    if ctype == "text":
        return text
    if ctype == "boolean":
        if text == "true":
            return True
        if text == "false":
            return False
        raise SchemaMismatch(f"not a boolean: {text!r}")
    try:
        if set(text) <= _INT_CHARS:
            return int(text)
        v = float(text)
    except ValueError:
        raise SchemaMismatch(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise SchemaMismatch(f"non-finite number not allowed: {text!r}")
    return v


def _read_delimited(data: bytes, delim: str, schema) -> TableContent:
    if schema is None:
        raise SchemaMismatch("delimited formats need a declared schema")
    rows = list(_split_delimited(data.decode("utf-8"), delim))
    if not rows:
        raise SchemaMismatch("missing header row")
    header = [f for f, _ in rows[0]]
    names = [name for name, _ in schema]
    if header != names:
        raise SchemaMismatch("header does not match declared schema", header=header, schema=names)
    types = [t for _, t in schema]
    columns = [Column(name, t, []) for name, t in schema]
    for row in rows[1:]:
        if len(row) != len(columns):
            raise SchemaMismatch("row width does not match schema", width=len(row))
        for col, t, (text, q) in zip(columns, types, row):
            col.values.append(_parse_cell(text, q, t))
    return TableContent(columns)


# --- JSON ---------------------------------------------------------------------

def _write_json(table: TableContent) -> bytes:
    doc = {
        "columns": [{"name": c.name, "type": c.ctype} for c in table.columns],
        "rows": [table.row(i) for i in range(table.row_count)],
    }
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _read_json(data: bytes, schema) -> TableContent:
    try:
        doc = json.loads(data.decode("utf-8"))
        cols = [(c["name"], c["type"]) for c in doc["columns"]]
        rows = doc["rows"]
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaMismatch(f"malformed JSON table: {exc}") from None
    if schema is not None and cols != list(schema):
        raise SchemaMismatch("embedded schema does not match declaration", embedded=cols)
    columns = [Column(name, t, []) for name, t in cols]
    for row in rows:
        if len(row) != len(columns):
            raise SchemaMismatch("row width does not match schema", width=len(row))
        for col, v in zip(columns, row):
            col.values.append(_coerce_json_cell(v, col.ctype))
    return TableContent(columns)


def _coerce_json_cell(v, ctype: str):
    if v is None:
        return None
    if ctype == "numeric":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaMismatch(f"not a number: {v!r}")
        return v
    if ctype == "boolean":
        if not isinstance(v, bool):
            raise SchemaMismatch(f"not a boolean: {v!r}")
        return v
    if not isinstance(v, str):
        raise SchemaMismatch(f"not text: {v!r}")
    return v


# --- XML ------------------------------------------------------------------------

def _write_xml(table: TableContent) -> bytes:
    root = ET.Element("table")
    cols = ET.SubElement(root, "columns")
    for c in table.columns:
        ET.SubElement(cols, "column", name=c.name, type=c.ctype)
    rows = ET.SubElement(root, "rows")
    for i in range(table.row_count):
        row = ET.SubElement(rows, "row")
        for c in table.columns:
            v = c.values[i]
            cell = ET.SubElement(row, "c")
            if v is None:
                cell.set("missing", "true")
            elif c.ctype == "numeric":
                cell.text = _render_number(v)
            elif c.ctype == "boolean":
                cell.text = "true" if v else "false"
            else:
                cell.text = v
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def _read_xml(data: bytes, schema) -> TableContent:
    try:
        root = ET.fromstring(data.decode("utf-8"))
    except ET.ParseError as exc:
        raise SchemaMismatch(f"malformed XML table: {exc}") from None
    if root.tag != "table" or root.find("columns") is None:
        raise SchemaMismatch("XML document is not a table")
    cols = [(c.get("name"), c.get("type")) for c in root.findall("./columns/column")]
    if any(name is None or t not in COLUMN_TYPES for name, t in cols):
        raise SchemaMismatch("malformed XML column declarations")
    if schema is not None and cols != list(schema):
        raise SchemaMismatch("embedded schema does not match declaration", embedded=cols)
    columns = [Column(name, t, []) for name, t in cols]
    for row in root.findall("./rows/row"):
        cells = row.findall("c")
        if len(cells) != len(columns):
            raise SchemaMismatch("row width does not match schema", width=len(cells))
        for col, cell in zip(columns, cells):
            if cell.get("missing") == "true":
                col.values.append(None)
            else:
                col.values.append(_parse_cell(cell.text or "", True, col.ctype))
    return TableContent(columns)


# --- public surface ---------------------------------------------------------------

def write_table(table: TableContent, media_type: str = DEFAULT_MEDIA) -> bytes:
    if media_type in _DELIMS:
        return _write_delimited(table, _DELIMS[media_type])
    if media_type == MEDIA_JSON:
        return _write_json(table)
    if media_type == MEDIA_XML:
        return _write_xml(table)
    raise NotAcceptable(f"unsupported media type {media_type!r}", supported=list(SUPPORTED_MEDIA))


def read_table(data: bytes, media_type: str = DEFAULT_MEDIA, schema=None) -> TableContent:
    """Parse serialized content back to a table.

    ``schema`` (list of (name, type)) is required for the delimited
    formats and cross-checked against the embedded one for JSON/XML.
    """
    if media_type in _DELIMS:
        return _read_delimited(data, _DELIMS[media_type], schema)
    if media_type == MEDIA_JSON:
        return _read_json(data, schema)
    if media_type == MEDIA_XML:
        return _read_xml(data, schema)
    raise NotAcceptable(f"unsupported media type {media_type!r}", supported=list(SUPPORTED_MEDIA))


# --- dense matrix fast path ---------------------------------------------------------

def write_matrix(matrix: MatrixContent, media_type: str = DEFAULT_MEDIA) -> bytes:
    """Serialize a dense matrix under the same dialects as tables.

    Single-digit integer matrices take a vectorized path (the realistic
    shape for very large dimensional fixtures); everything else goes
    through the column-equivalent table.
    """
    arr = matrix.array
    if media_type in _DELIMS and arr.size and arr.dtype.kind in "iu":
        lo = int(arr.min()) if arr.size else 0
        hi = int(arr.max()) if arr.size else 0
        if 0 <= lo and hi <= 9:
            return _write_matrix_digits(arr, _DELIMS[media_type])
    return write_table(matrix.to_table(), media_type)


def _write_matrix_digits(arr: np.ndarray, delim: str) -> bytes:
    rows, cols = arr.shape
    header = delim.join(f"c{j}" for j in range(cols)).encode("ascii") + b"\n"
    if cols == 0 or rows == 0:
        return header
    out = np.empty((rows, 2 * cols), dtype=np.uint8)
    out[:, 0::2] = arr.astype(np.uint8, copy=False) + ord("0")
    out[:, 1::2] = ord(delim)
    out[:, -1] = ord("\n")
    return header + out.tobytes()
