"""In-memory content carriers: typed tables, dense matrices, labeled graphs.

Cell conventions for tables: missing is ``None``; numeric cells are
``int``/``float``; boolean cells are ``bool``; text cells are ``str``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatch

COLUMN_TYPES = ("numeric", "text", "boolean")


@dataclass
class Column:
    name: str
    ctype: str
    values: list


@dataclass
class TableContent:
    columns: list[Column]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate column names", names=names)
        for col in self.columns:
            if col.ctype not in COLUMN_TYPES:
                raise SchemaMismatch(f"unknown column type {col.ctype!r}")
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise SchemaMismatch("ragged columns", lengths=sorted(lengths))

    @property
    def row_count(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    @property
    def schema(self) -> list[tuple[str, str]]:
        return [(c.name, c.ctype) for c in self.columns]

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def row(self, i: int) -> list:
        return [c.values[i] for c in self.columns]

    def select_rows(self, indices) -> "TableContent":
        return TableContent(
            [Column(c.name, c.ctype, [c.values[i] for i in indices]) for c in self.columns]
        )

    def validate_cells(self):
        """Check every cell against its declared column type."""
        for col in self.columns:
            for v in col.values:
                if v is None:
                    continue
                if col.ctype == "numeric":
                    if isinstance(v, bool) or not isinstance(v, (int, float)):
                        raise SchemaMismatch(
                            f"non-numeric cell in column {col.name!r}", value=repr(v)
                        )
                    if isinstance(v, float) and not math.isfinite(v):
                        raise SchemaMismatch(
                            f"non-finite cell in column {col.name!r}", value=repr(v)
                        )
                elif col.ctype == "boolean":
                    if not isinstance(v, bool):
                        raise SchemaMismatch(
                            f"non-boolean cell in column {col.name!r}", value=repr(v)
                        )
                elif not isinstance(v, str):
                    raise SchemaMismatch(
                        f"non-text cell in column {col.name!r}", value=repr(v)
                    )
        return self


@dataclass
class MatrixContent:
    """Dense 2-D numeric data; the compact carrier for large dimensional sets."""

    array: np.ndarray

    def __post_init__(self):
        self.array = np.asarray(self.array)
        if self.array.ndim != 2:
            raise SchemaMismatch("matrix content must be 2-D", ndim=self.array.ndim)

    @property
    def row_count(self) -> int:
        return int(self.array.shape[0])

    @property
    def column_count(self) -> int:
        return int(self.array.shape[1])

    def select_rows(self, indices) -> "MatrixContent":
        return MatrixContent(self.array[list(indices), :])

    def to_table(self) -> TableContent:
        cols = [
            Column(f"c{j}", "numeric", [v.item() for v in self.array[:, j]])
            for j in range(self.column_count)
        ]
        return TableContent(cols)


@dataclass
class GraphContent:
    """Labeled directed graph: node ids with attribute maps, attributed edges."""

    nodes: dict[str, dict] = field(default_factory=dict)
    edges: list[tuple[str, str, dict]] = field(default_factory=list)
