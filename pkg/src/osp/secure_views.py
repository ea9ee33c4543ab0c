"""View-scoped access control: permissions attach to slices of data.

A view selects rows (conjunction of comparisons), projects columns, and
redacts values.  Authorization unions all views granted to a principal
for the requested capability: row sets union (any granted predicate may
admit a row), column sets union, and a column stays redacted only if
every granted view redacts it.  Absent any grant the answer is deny.

Evaluation order is fixed: row filter, then column projection, then
value redaction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count
from threading import Lock

from .content import Column, TableContent
from .errors import TypeMismatch, UnknownColumn, UnknownView
from .fingerprint import normalize_value, fingerprint_bytes

CAPABILITIES = ("read", "sample", "analyze")
COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")
MASK_RULES = ("null_out", "hash")

PUBLIC_GROUP = "public"
REGISTERED_GROUP = "registered"


@dataclass(frozen=True)
class Comparison:
    column: str
    op: str
    constant: object

    def matches(self, value) -> bool:
        # Comparisons against a missing cell never hold.
        if value is None:
            return False
        if self.op == "=":
            return value == self.constant
        if self.op == "!=":
            return value != self.constant
        if self.op == "<":
            return value < self.constant
        if self.op == "<=":
            return value <= self.constant
        if self.op == ">":
            return value > self.constant
        return value >= self.constant


@dataclass(frozen=True)
class ViewDef:
    view_id: str
    dataset: tuple[str, str]
    column_mask: frozenset[str] | None = None          # None = all columns
    predicate: tuple[Comparison, ...] = ()             # empty = all rows
    value_masks: tuple[tuple[str, str], ...] = ()      # (column, rule)


@dataclass(frozen=True)
class Grant:
    subject: str                                        # principal or group id
    view_id: str
    capabilities: frozenset[str]


def _check_comparison(cmp: Comparison, schema: dict[str, str]):
    if cmp.column not in schema:
        raise UnknownColumn(f"predicate references unknown column {cmp.column!r}")
    if cmp.op not in COMPARE_OPS:
        raise TypeMismatch(f"unknown comparison operator {cmp.op!r}")
    ctype = schema[cmp.column]
    c = cmp.constant
    if ctype == "numeric":
        ok = isinstance(c, (int, float)) and not isinstance(c, bool)
    elif ctype == "boolean":
        ok = isinstance(c, bool) and cmp.op in ("=", "!=")
    else:
        ok = isinstance(c, str)
    if not ok:
        raise TypeMismatch(
            f"constant {c!r} does not fit {ctype} column {cmp.column!r}"
        )


def validate_view(view: ViewDef, schema: list[tuple[str, str]]) -> ViewDef:
    """Check a view definition against the dataset schema it targets."""
    types = dict(schema)
    if view.column_mask is not None:
        for name in view.column_mask:
            if name not in types:
                raise UnknownColumn(f"column mask references unknown column {name!r}")
    for cmp in view.predicate:
        _check_comparison(cmp, types)
    for name, rule in view.value_masks:
        if name not in types:
            raise UnknownColumn(f"value mask references unknown column {name!r}")
        if rule not in MASK_RULES:
            raise TypeMismatch(f"unknown redaction rule {rule!r}")
    return view


def _mask_cell(value, ctype: str, rule: str):
    if rule == "null_out" or value is None:
        return None
    return fingerprint_bytes(normalize_value(value, ctype).data).render()


def _row_passes(table: TableContent, i: int, conjunction) -> bool:
    return all(c.matches(table.column(c.column).values[i]) for c in conjunction)


@dataclass(frozen=True)
class EffectiveView:
    """Union of granted views: OR over predicates, union of columns,
    redaction only where every contributing view redacts."""

    columns: frozenset[str] | None = None               # None = all
    predicates: tuple[tuple[Comparison, ...], ...] = ((),)
    value_masks: tuple[tuple[str, str], ...] = ()

    @classmethod
    def full(cls) -> "EffectiveView":
        return cls()

    def admits_row(self, table: TableContent, i: int) -> bool:
        return any(_row_passes(table, i, conj) for conj in self.predicates)


def apply_effective(view: EffectiveView, table: TableContent) -> TableContent:
    rows = [i for i in range(table.row_count) if view.admits_row(table, i)]
    masks = dict(view.value_masks)
    out = []
    for col in table.columns:
        if view.columns is not None and col.name not in view.columns:
            continue
        rule = masks.get(col.name)
        if rule is None:
            out.append(Column(col.name, col.ctype, [col.values[i] for i in rows]))
        else:
            ctype = "text" if rule == "hash" else col.ctype
            out.append(Column(col.name, ctype,
                              [_mask_cell(col.values[i], col.ctype, rule) for i in rows]))
    return TableContent(out)


def as_effective(view: ViewDef) -> EffectiveView:
    return EffectiveView(view.column_mask, (view.predicate,), view.value_masks)


def apply_view(view: ViewDef, table: TableContent) -> TableContent:
    """Filter, project, then redact one table under one view."""
    return apply_effective(as_effective(view), table)


def union_views(views) -> EffectiveView | None:
    views = list(views)
    if not views:
        return None
    columns: frozenset[str] | None = frozenset()
    for v in views:
        if v.column_mask is None:
            columns = None
            break
        columns = columns | v.column_mask
    predicates = tuple(v.predicate for v in views)
    # A column stays redacted only if every view exposing it redacts it.
    # When rules disagree, what the grants jointly reveal is the hash
    # pattern (equality structure), so hash wins over null_out.
    masks = {}
    masked_anywhere = {name for v in views for name, _ in v.value_masks}
    for name in masked_anywhere:
        exposing = [v for v in views
                    if v.column_mask is None or name in v.column_mask]
        rules = [dict(v.value_masks).get(name) for v in exposing]
        if exposing and all(rules):
            masks[name] = "hash" if "hash" in rules else "null_out"
    return EffectiveView(columns, predicates, tuple(sorted(masks.items())))


class ViewStore:
    """Registry of views and grants; writes serialized, reads on snapshots."""

    def __init__(self):
        self._lock = Lock()
        self._views: dict[str, ViewDef] = {}
        self._grants: list[Grant] = []
        self._serial = count(1)

    def define(self, dataset, schema, column_mask=None, predicate=(),
               value_masks=()) -> ViewDef:
        with self._lock:
            view_id = f"view-{next(self._serial)}"
            view = ViewDef(
                view_id, tuple(dataset),
                None if column_mask is None else frozenset(column_mask),
                tuple(predicate), tuple(value_masks),
            )
            validate_view(view, schema)
            self._views[view_id] = view
            return view

    def get(self, view_id: str) -> ViewDef:
        try:
            return self._views[view_id]
        except KeyError:
            raise UnknownView(f"no view {view_id!r}") from None

    def grant(self, subject: str, view_id: str, capabilities) -> Grant:
        with self._lock:
            self.get(view_id)
            g = Grant(subject, view_id, frozenset(capabilities))
            self._grants.append(g)
            return g

    def has_grants(self, dataset) -> bool:
        with self._lock:
            return any(
                self._views[g.view_id].dataset == tuple(dataset) for g in self._grants
            )

    def export_audit(self) -> str:
        """Structured text dump of every view and grant, one record per line."""
        with self._lock:
            views = sorted(self._views.values(), key=lambda v: v.view_id)
            grants = list(self._grants)
        lines = []
        for v in views:
            columns = "*" if v.column_mask is None else ",".join(sorted(v.column_mask))
            predicate = "&".join(
                f"{c.column}{c.op}{c.constant!r}" for c in v.predicate) or "*"
            masks = ",".join(f"{col}:{rule}" for col, rule in v.value_masks) or "-"
            lines.append(
                f"view {v.view_id} dataset={v.dataset[0]}/{v.dataset[1]} "
                f"columns={columns} rows={predicate} masks={masks}"
            )
        for g in grants:
            lines.append(
                f"grant subject={g.subject} view={g.view_id} "
                f"capabilities={','.join(sorted(g.capabilities))}"
            )
        return "\n".join(lines) + "\n" if lines else ""

    def authorize(self, subjects, dataset, capability: str) -> EffectiveView | None:
        """Effective view for the requested capability, or None (deny).

        ``subjects`` is the principal id plus every group it belongs to.
        """
        subjects = set(subjects)
        with self._lock:
            granted = [
                self._views[g.view_id]
                for g in self._grants
                if g.subject in subjects and capability in g.capabilities
                and self._views[g.view_id].dataset == tuple(dataset)
            ]
        return union_views(granted)
