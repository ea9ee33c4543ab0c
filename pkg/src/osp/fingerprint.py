"""Canonical normalization and content fingerprinting.

Every citable object (table, matrix, graph, raw byte stream) reduces to a
canonical byte form that is independent of the serialization it arrived
in; fingerprints are SHA-256 digests over those canonical bytes truncated
to 128 bits and rendered as ``UNF:<version>:<base64>``.

Canonical forms:

* numeric: sign, one leading digit, decimal point, up to six further
  significant digits with trailing zeros stripped (seven significant
  digits total, round half to even), ``e``, signed decimal exponent
  without leading zeros, then a 0x00 terminator.  Example:
  ``3.1415926535`` -> ``b"+3.141593e+0\\x00"``.  Zero is ``+0.e+0``.
* boolean: the numerics 0/1.
* text: Unicode NFC, UTF-8 encoded, 0x00 terminator.
* missing: the three-byte sentinel 0x00 0x00 0x00.

NaN and infinities have no portable decimal form; by default they
normalize to the missing sentinel (``nonfinite="error"`` raises instead).
"""

from __future__ import annotations

import base64
import decimal
import hashlib
import math
import re
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .content import GraphContent, MatrixContent, TableContent
from .errors import DanglingEdge, NonFiniteNumeric

ALGORITHM_VERSION = 6
DIGEST_BYTES = 16
SIGNIFICANT_DIGITS = 7

MISSING_SENTINEL = b"\x00\x00\x00"
_TERMINATOR = b"\x00"
_ZERO = b"+0.e+0" + _TERMINATOR

_UNF_RE = re.compile(r"^UNF:(\d+):([A-Za-z0-9+/]+={0,2})$")

VALUE_KINDS = ("numeric", "text", "boolean", "missing")
SCOPES = ("dataset", "sample", "graph", "bytes")


@dataclass(frozen=True)
class CanonicalValue:
    kind: str
    data: bytes


@dataclass(frozen=True)
class Fingerprint:
    """128-bit content digest; ``scope`` is descriptive and ignored by equality."""

    version: int
    digest: bytes
    scope: str = field(default="bytes", compare=False)

    def render(self) -> str:
        return f"UNF:{self.version}:{base64.b64encode(self.digest).decode('ascii')}"

    @classmethod
    def parse(cls, text: str, scope: str = "bytes") -> "Fingerprint":
        m = _UNF_RE.match(text)
        if m is None:
            raise ValueError(f"not a UNF string: {text!r}")
        return cls(int(m.group(1)), base64.b64decode(m.group(2)), scope)


def _numeric_bytes(value, nonfinite: str) -> bytes:
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            if nonfinite == "missing":
                return MISSING_SENTINEL
            raise NonFiniteNumeric(f"cannot normalize {value!r}")
        if value == 0.0:
            return _ZERO
        dec = decimal.Decimal(value)
    elif isinstance(value, int):
        if value == 0:
            return _ZERO
        dec = decimal.Decimal(value)
    elif isinstance(value, decimal.Decimal):
        if not value.is_finite():
            if nonfinite == "missing":
                return MISSING_SENTINEL
            raise NonFiniteNumeric(f"cannot normalize {value!r}")
        if value == 0:
            return _ZERO
        dec = value
    else:
        raise TypeError(f"not a numeric cell: {value!r}")
    with decimal.localcontext() as ctx:
        ctx.rounding = decimal.ROUND_HALF_EVEN
        text = format(dec, f".{SIGNIFICANT_DIGITS - 1}e")
    sign = "-" if text.startswith("-") else "+"
    mantissa, _, exp = text.lstrip("+-").partition("e")
    lead, _, frac = mantissa.partition(".")
    frac = frac.rstrip("0")
    return f"{sign}{lead}.{frac}e{int(exp):+d}".encode("ascii") + _TERMINATOR


def normalize_value(value, kind: str = None, *, nonfinite: str = "missing") -> CanonicalValue:
    """Reduce one cell of declared type to its canonical byte form.

    Idempotent: a ``CanonicalValue`` passes through unchanged.
    """
    if isinstance(value, CanonicalValue):
        return value
    if kind not in VALUE_KINDS:
        raise ValueError(f"unknown value kind {kind!r}")
    if value is None or kind == "missing":
        return CanonicalValue("missing", MISSING_SENTINEL)
    if kind == "text":
        data = unicodedata.normalize("NFC", value).encode("utf-8") + _TERMINATOR
        return CanonicalValue("text", data)
    data = _numeric_bytes(value, nonfinite)
    if data == MISSING_SENTINEL:
        return CanonicalValue("missing", data)
    return CanonicalValue(kind if kind != "boolean" else "boolean", data)


def _column_digest(values, ctype: str) -> bytes:
    h = hashlib.sha256()
    for v in values:
        h.update(normalize_value(v, ctype).data)
    return h.digest()


def _combine(column_digests) -> Fingerprint:
    outer = hashlib.sha256()
    for d in sorted(column_digests):
        outer.update(d)
    return Fingerprint(ALGORITHM_VERSION, outer.digest()[:DIGEST_BYTES], "dataset")


def fingerprint_table(table: TableContent) -> Fingerprint:
    """Digest of a table's canonical content, independent of column order.

    Per-column SHA-256 over the concatenated canonical cell bytes in row
    order; the dataset digest hashes the byte-sorted column digests.
    Column names do not enter the digest.
    """
    return _combine(_column_digest(c.values, c.ctype) for c in table.columns)


def _canonical_lut(uniques: np.ndarray):
    """Canonical byte strings per unique value, or None when widths differ
    (mixed widths fall back to the per-cell path)."""
    canon = [_numeric_bytes(v.item(), "missing") for v in uniques]
    widths = {len(c) for c in canon}
    if len(widths) != 1:
        return None
    return np.array(canon, dtype=f"S{widths.pop()}")


def fingerprint_matrix(matrix) -> Fingerprint:
    """Same digest as ``fingerprint_table`` over the column-equivalent table.

    Vectorized: canonical forms are precomputed per distinct value and
    gathered column by column, which keeps terabyte-shaped numeric
    matrices hashable in seconds.  Small-range integer dtypes index the
    table directly by value; other dtypes go through the sorted uniques.
    Falls back to the per-cell path when the distinct values canonicalize
    to different byte widths.
    """
    arr = matrix.array if isinstance(matrix, MatrixContent) else np.asarray(matrix)
    if arr.ndim != 2:
        raise ValueError("matrix must be 2-D")
    lut = uniques = None
    offset = 0
    if arr.size:
        if arr.dtype.kind in "iub":
            lo, hi = int(arr.min()), int(arr.max())
            if hi - lo < (1 << 20):
                offset = lo
                lut = _canonical_lut(np.arange(lo, hi + 1, dtype=arr.dtype))
        if lut is None:
            uniques = np.unique(arr)
            if uniques.dtype.kind == "f" and not np.isfinite(uniques).all():
                uniques = None
            else:
                lut = _canonical_lut(uniques)
                if lut is None:
                    uniques = None
    # One transpose makes every column gather contiguous; worth it from a
    # few hundred columns up.
    columns = np.asfortranarray(arr) if lut is not None and arr.shape[1] > 256 else arr
    digests = []
    for j in range(arr.shape[1]):
        col = columns[:, j]
        if lut is not None:
            idx = np.searchsorted(uniques, col) if uniques is not None else col - offset
            digests.append(hashlib.sha256(lut[idx].tobytes()).digest())
        else:
            digests.append(_column_digest((v.item() for v in col), "numeric"))
    return _combine(digests)


def _text_canon(value) -> bytes:
    return normalize_value(str(value), "text").data


def fingerprint_graph(graph: GraphContent) -> Fingerprint:
    """Digest of a graph canonicalized by node id (not isomorphism class).

    Serialization: nodes sorted by id, each rendered as the id followed by
    its attribute pairs in key order; then edges sorted by (src, dst,
    attribute pairs).  Record markers keep node and edge sections
    unambiguous.
    """
    for src, dst, _ in graph.edges:
        if src not in graph.nodes or dst not in graph.nodes:
            raise DanglingEdge(f"edge ({src!r}, {dst!r}) references a missing node")
    h = hashlib.sha256()
    for node_id in sorted(graph.nodes):
        h.update(b"N\x00" + _text_canon(node_id))
        for k in sorted(graph.nodes[node_id]):
            h.update(_text_canon(k) + _text_canon(graph.nodes[node_id][k]))

    def edge_key(edge):
        src, dst, attrs = edge
        return (src, dst, tuple(sorted((k, str(v)) for k, v in attrs.items())))

    for src, dst, attrs in sorted(graph.edges, key=edge_key):
        h.update(b"E\x00" + _text_canon(src) + _text_canon(dst))
        for k, v in sorted((k, str(v)) for k, v in attrs.items()):
            h.update(_text_canon(k) + _text_canon(v))
    return Fingerprint(ALGORITHM_VERSION, h.digest()[:DIGEST_BYTES], "graph")


def fingerprint_bytes(content) -> Fingerprint:
    """SHA-256 of a raw byte stream, truncated to 128 bits."""
    h = hashlib.sha256()
    if isinstance(content, (bytes, bytearray, memoryview)):
        h.update(content)
    else:
        for chunk in iter(lambda: content.read(1 << 20), b""):
            h.update(chunk)
    return Fingerprint(ALGORITHM_VERSION, h.digest()[:DIGEST_BYTES], "bytes")


def fingerprint_content(content) -> Fingerprint:
    """Dispatch on the content carrier type."""
    if isinstance(content, TableContent):
        return fingerprint_table(content)
    if isinstance(content, MatrixContent):
        return fingerprint_matrix(content)
    if isinstance(content, GraphContent):
        return fingerprint_graph(content)
    return fingerprint_bytes(content)
