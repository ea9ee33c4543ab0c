"""Lineage store: derivation records over an acyclic entity graph.

Records arrive from five sources (ingest metadata, external provenance
documents, execution records, transformed tool logs, provenance-aware
tools).  External documents use a line-oriented subset of the standard
entity/activity/agent model with the used / wasGeneratedBy /
wasDerivedFrom / wasAssociatedWith relations; export emits the same
subset, and re-ingesting an export is a no-op.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from threading import Lock

from .errors import CycleDetected, DuplicateProducer, ParseError, UnknownEntity

NODE_KINDS = ("entity", "activity", "agent")

SOURCES = (
    "ingest_metadata",
    "external_prov",
    "execution_record",
    "transformed_tool_log",
    "provenance_aware_tool",
)

UNSPECIFIED_TOOL = ("unspecified", "0")


@dataclass
class ProvNode:
    node_id: str
    kind: str
    attributes: dict = field(default_factory=dict)
    link: tuple[str, str, int] | None = None            # (study, dataset, version)


@dataclass(frozen=True)
class DerivationRecord:
    record_id: str
    inputs: frozenset[str]
    outputs: frozenset[str]
    tool: tuple[str, str]
    agent: str
    timestamp: float
    source: str


def _version_key(version: str):
    parts = []
    for seg in str(version).split("."):
        parts.append((0, int(seg)) if seg.isdigit() else (1, seg))
    return tuple(parts)


def version_matches(version: str, predicate: str) -> bool:
    """Evaluate a version predicate like ``<2.0`` or ``==1.0``; ``*`` is any.

    Dotted segments compare numerically where possible.
    """
    predicate = predicate.strip()
    if predicate in ("", "*"):
        return True
    for op in ("<=", ">=", "==", "!=", "<", ">"):
        if predicate.startswith(op):
            target = _version_key(predicate[len(op):].strip())
            actual = _version_key(version)
            return {
                "<=": actual <= target, ">=": actual >= target,
                "==": actual == target, "!=": actual != target,
                "<": actual < target, ">": actual > target,
            }[op]
    return _version_key(version) == _version_key(predicate)


class ProvenanceStore:
    """Append-only derivation DAG with serialized writes."""

    def __init__(self):
        self._lock = Lock()
        self._nodes: dict[str, ProvNode] = {}
        self._records: dict[str, DerivationRecord] = {}
        self._producer: dict[str, str] = {}             # entity -> record id
        self._consumers: dict[str, list[str]] = {}      # entity -> record ids using it
        self._ingested_digests: set[str] = set()
        self._serial = 0

    # --- nodes ---------------------------------------------------------------

    def add_node(self, node_id: str, kind: str, attributes=None, link=None) -> ProvNode:
        if kind not in NODE_KINDS:
            raise ParseError(f"unknown node kind {kind!r}")
        with self._lock:
            return self._add_node_locked(node_id, kind, attributes, link)

    def _add_node_locked(self, node_id, kind, attributes=None, link=None) -> ProvNode:
        existing = self._nodes.get(node_id)
        if existing is not None:
            if existing.kind != kind:
                raise ParseError(
                    f"node {node_id!r} already exists with kind {existing.kind!r}"
                )
            if attributes:
                for k, v in attributes.items():
                    existing.attributes.setdefault(k, v)
            if link is not None:
                existing.link = link
            return existing
        node = ProvNode(node_id, kind, dict(attributes or {}), link)
        self._nodes[node_id] = node
        return node

    def node(self, node_id: str) -> ProvNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownEntity(f"no node {node_id!r}") from None

    def entities(self):
        return [n for n in self._nodes.values() if n.kind == "entity"]

    def records(self):
        return list(self._records.values())

    # --- derivations -----------------------------------------------------------

    def record_derivation(self, inputs, outputs, tool, agent, source,
                          record_id=None, timestamp=None) -> DerivationRecord:
        inputs, outputs = frozenset(inputs), frozenset(outputs)
        if source not in SOURCES:
            raise ParseError(f"unknown provenance source {source!r}", allowed=SOURCES)
        if inputs & outputs:
            raise CycleDetected("an entity cannot derive from itself",
                                overlap=sorted(inputs & outputs))
        with self._lock:
            for e in inputs:
                if e not in self._nodes or self._nodes[e].kind != "entity":
                    raise UnknownEntity(f"unknown input entity {e!r}")
            for e in outputs:
                if e in self._producer:
                    raise DuplicateProducer(
                        f"entity {e!r} already has a producing record",
                        record=self._producer[e],
                    )
            if self._would_cycle(inputs, outputs):
                raise CycleDetected("derivation would close a cycle")
            self._serial += 1
            rec = DerivationRecord(
                record_id or f"rec-{self._serial}",
                inputs, outputs, (str(tool[0]), str(tool[1])),
                agent, timestamp if timestamp is not None else time.time(), source,
            )
            if rec.record_id in self._records:
                raise DuplicateProducer(f"record id {rec.record_id!r} already used")
            for e in outputs:
                self._add_node_locked(e, "entity")
                self._producer[e] = rec.record_id
            for e in inputs:
                self._consumers.setdefault(e, []).append(rec.record_id)
            self._records[rec.record_id] = rec
            return rec

    def _would_cycle(self, inputs: frozenset[str], outputs: frozenset[str]) -> bool:
        # A cycle appears iff some input is reachable from some output
        # through existing derivation edges.
        seen, frontier = set(), list(outputs)
        while frontier:
            e = frontier.pop()
            if e in inputs:
                return True
            if e in seen:
                continue
            seen.add(e)
            for rid in self._consumers.get(e, ()):
                frontier.extend(self._records[rid].outputs)
        return False

    # --- queries ----------------------------------------------------------------

    def _check_entity(self, entity: str):
        node = self.node(entity)
        if node.kind != "entity":
            raise UnknownEntity(f"{entity!r} is a {node.kind}, not an entity")

    def ancestors(self, entity: str) -> set[str]:
        self._check_entity(entity)
        seen: set[str] = set()
        frontier = [entity]
        while frontier:
            e = frontier.pop()
            rid = self._producer.get(e)
            if rid is None:
                continue
            for src in self._records[rid].inputs:
                if src not in seen:
                    seen.add(src)
                    frontier.append(src)
        seen.discard(entity)
        return seen

    def descendants(self, entity: str) -> set[str]:
        self._check_entity(entity)
        seen: set[str] = set()
        frontier = [entity]
        while frontier:
            e = frontier.pop()
            for rid in self._consumers.get(e, ()):
                for out in self._records[rid].outputs:
                    if out not in seen:
                        seen.add(out)
                        frontier.append(out)
        seen.discard(entity)
        return seen

    def impacted_by_tool(self, name: str, version_predicate: str = "*") -> set[str]:
        """Entities whose ancestry includes a matching tool run: the outputs
        of every matching record plus everything derived from them."""
        impacted: set[str] = set()
        for rec in self._records.values():
            if rec.tool[0] == name and version_matches(rec.tool[1], version_predicate):
                for out in rec.outputs:
                    impacted.add(out)
                    impacted |= self.descendants(out)
        return impacted

    def tools_for(self, entity: str) -> set[tuple[str, str]]:
        """Tools on every derivation record along every ancestor path."""
        self._check_entity(entity)
        lineage = {entity} | self.ancestors(entity)
        tools = set()
        for e in lineage:
            rid = self._producer.get(e)
            if rid is not None:
                tools.add(self._records[rid].tool)
        return tools

    def topological_order(self) -> list[str]:
        """Entities in dependency order; raises if the graph has a cycle."""
        entities = [n.node_id for n in self.entities()]
        indeg = {e: 0 for e in entities}
        for rec in self._records.values():
            for out in rec.outputs:
                indeg[out] += len(rec.inputs)
        ready = sorted(e for e, d in indeg.items() if d == 0)
        order = []
        while ready:
            e = ready.pop()
            order.append(e)
            for rid in self._consumers.get(e, ()):
                for out in self._records[rid].outputs:
                    indeg[out] -= 1
                    if indeg[out] == 0:
                        ready.append(out)
        if len(order) != len(entities):
            raise CycleDetected("derivation graph is not acyclic")
        return order

    # --- external documents --------------------------------------------------------

    def ingest(self, document: str) -> dict:
        """Ingest a structured-text lineage document.

        Returns the added node and record ids; re-ingesting a document
        with the same content digest is a no-op.
        """
        digest = hashlib.sha256(document.encode("utf-8")).hexdigest()
        if digest in self._ingested_digests:
            return {"nodes": [], "records": [], "duplicate": True}
        decl, used, generated, derived, associated = _parse_document(document)
        added_nodes, added_records = [], []
        for node_id, (kind, attrs) in decl.items():
            if node_id not in self._nodes:
                added_nodes.append(node_id)
            self.add_node(node_id, kind, attrs)
        for rel, pairs in (("used", used), ("wasGeneratedBy", generated),
                           ("wasDerivedFrom", derived), ("wasAssociatedWith", associated)):
            for a, b in pairs:
                for ref in (a, b):
                    if ref not in decl and ref not in self._nodes:
                        raise ParseError(f"{rel} references undeclared id {ref!r}")
        activities = [n for n, (k, _) in decl.items() if k == "activity"]
        agent_of = dict(associated)
        for act in sorted(activities):
            ins = frozenset(e for a, e in used if a == act)
            outs = frozenset(e for e, a in generated if a == act)
            if not outs:
                continue
            attrs = decl[act][1]
            tool = (attrs.get("tool", act), attrs.get("version", "0"))
            # Activity ids become record ids so that re-ingesting an
            # export reproduces the store; collisions across documents
            # get a digest prefix.
            record_id = act if act not in self._records else f"{digest[:12]}:{act}"
            rec = self.record_derivation(
                ins, outs, tool, agent_of.get(act, "external"), "external_prov",
                record_id=record_id,
            )
            added_records.append(rec.record_id)
        for out, src in derived:
            if out in self._producer:
                # The derivation is already explained by a producing record.
                continue
            rec = self.record_derivation(
                {src}, {out}, UNSPECIFIED_TOOL, "external", "external_prov",
                record_id=f"{digest[:12]}:derived:{out}",
            )
            added_records.append(rec.record_id)
        self._ingested_digests.add(digest)
        return {"nodes": added_nodes, "records": added_records, "duplicate": False}

    def export(self) -> str:
        """Render the store in the ingestible subset, canonically ordered."""
        lines = []
        for node in sorted(self.entities(), key=lambda n: n.node_id):
            lines.append(_decl_line("entity", node))
        recs = sorted(self._records.values(), key=lambda r: r.record_id)
        agents = {n.node_id for n in self._nodes.values() if n.kind == "agent"}
        agents |= {r.agent for r in recs if r.agent != "external"}
        agents = sorted(agents)
        for rec in recs:
            if rec.tool == UNSPECIFIED_TOOL and len(rec.inputs) == 1 and len(rec.outputs) == 1:
                continue
            lines.append(
                f"activity {rec.record_id} tool={rec.tool[0]} version={rec.tool[1]}"
            )
        for agent in agents:
            lines.append(f"agent {agent}")
        for rec in recs:
            if rec.tool == UNSPECIFIED_TOOL and len(rec.inputs) == 1 and len(rec.outputs) == 1:
                lines.append(
                    f"wasDerivedFrom {next(iter(rec.outputs))} {next(iter(rec.inputs))}"
                )
                continue
            for e in sorted(rec.inputs):
                lines.append(f"used {rec.record_id} {e}")
            for e in sorted(rec.outputs):
                lines.append(f"wasGeneratedBy {e} {rec.record_id}")
            if rec.agent != "external":
                lines.append(f"wasAssociatedWith {rec.record_id} {rec.agent}")
        return "\n".join(lines) + "\n"


def _decl_line(kind: str, node: ProvNode) -> str:
    attrs = "".join(f" {k}={v}" for k, v in sorted(node.attributes.items()))
    return f"{kind} {node.node_id}{attrs}"


def _parse_document(document: str):
    decl: dict[str, tuple[str, dict]] = {}
    used, generated, derived, associated = [], [], [], []
    for lineno, raw in enumerate(document.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        head, rest = tokens[0], tokens[1:]
        if head in NODE_KINDS:
            if not rest:
                raise ParseError(f"line {lineno}: {head} declaration without an id")
            attrs = {}
            for tok in rest[1:]:
                if "=" not in tok:
                    raise ParseError(f"line {lineno}: malformed attribute {tok!r}")
                k, _, v = tok.partition("=")
                attrs[k] = v
            decl[rest[0]] = (head, attrs)
        elif head in ("used", "wasGeneratedBy", "wasDerivedFrom", "wasAssociatedWith"):
            if len(rest) != 2:
                raise ParseError(f"line {lineno}: {head} needs exactly two ids")
            target = {"used": used, "wasGeneratedBy": generated,
                      "wasDerivedFrom": derived, "wasAssociatedWith": associated}[head]
            target.append(tuple(rest))
        else:
            raise ParseError(f"line {lineno}: unknown statement {head!r}")
    return decl, used, generated, derived, associated
