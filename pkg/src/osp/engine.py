"""Repository engine: the façade that wires catalog, privacy, views,
fingerprints, citations, samples, provenance and jobs together.

One instance owns all mutable state.  The REST layer and the test suites
drive everything through this surface; HTTP never reaches module
internals directly.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import secrets
from dataclasses import dataclass, field, replace
from threading import Lock

import numpy as np

from . import analytics, formats, privacy, secure_views
from .catalog import (
    Catalog,
    DataProfile,
    DatasetVersion,
    HandleRegistry,
    Study,
    StudyMetadata,
    DEACCESSIONED,
    DRAFT,
    RELEASED,
    recommend_store,
)
from .citation import Citation
from .content import GraphContent, MatrixContent, TableContent
from .errors import (
    InvalidMetadata,
    NotReleased,
    PermissionDenied,
    SampleTooLarge,
    SchemaMismatch,
    SourceDrift,
    UnknownDataset,
    UnknownIdentifier,
)
from .fingerprint import fingerprint_content
from .provenance import ProvenanceStore
from .sampler import (
    INDEX_MATERIALIZATION_BOUND,
    SampleDescriptor,
    SampleRegistry,
    select_indices,
)
from .secure_views import EffectiveView, ViewStore, apply_effective
from .storage import BlobStore


@dataclass
class Principal:
    principal_id: str
    password_hash: bytes = b""
    password_salt: bytes = b""
    verified: bool = False
    pending_codes: dict = field(default_factory=dict)    # purpose -> code

    def set_password(self, password: str):
        self.password_salt = os.urandom(16)
        self.password_hash = _hash_password(password, self.password_salt)

    def check_password(self, password: str) -> bool:
        return bool(self.password_hash) and secrets.compare_digest(
            _hash_password(password, self.password_salt), self.password_hash
        )


def _hash_password(password: str, salt: bytes) -> bytes:
    return hashlib.scrypt(password.encode(), salt=salt, n=2 ** 14, r=8, p=1)


@dataclass(frozen=True)
class Resolution:
    kind: str                                   # study | dataset_landing | sample | tombstone
    persistent_id: str
    payload: dict


class Repository:
    def __init__(self, *, handle_prefix: str = "1902.1",
                 resolver_base: str = "/resolve/",
                 workers: int = 2,
                 index_bound: int = INDEX_MATERIALIZATION_BOUND,
                 platform_key: bytes | None = None):
        self.registry = HandleRegistry(handle_prefix)
        self.catalog = Catalog(self.registry)
        self.store = BlobStore()
        self.keys = privacy.KeyRegistry(platform_key)
        self.views = ViewStore()
        self.samples = SampleRegistry()
        self.provenance = ProvenanceStore()
        self.resolver_base = resolver_base
        self.index_bound = index_bound
        self.citations: dict[tuple[str, str, int], Citation] = {}
        self.sample_citations: dict[str, Citation] = {}
        self.sample_pids: dict[str, str] = {}
        self.principals: dict[str, Principal] = {}
        self.approvals: dict[str, set[tuple[str, str]]] = {}     # principal -> (study, kind)
        self.dua: dict[str, dict[tuple[str, str], str]] = {}     # principal -> state map
        self._owner_keys_lock = Lock()
        self._dataset_locks: dict[tuple[str, str], Lock] = {}
        self.scheduler = analytics.JobScheduler(self._run_job, workers=workers)

    def close(self):
        self.scheduler.stop()

    # --- principals -----------------------------------------------------------

    def register_principal(self, principal_id: str, password: str) -> Principal:
        if not principal_id or "/" in principal_id:
            raise InvalidMetadata("principal id must be a non-empty token")
        p = self.principals.get(principal_id)
        if p is None:
            p = Principal(principal_id)
            self.principals[principal_id] = p
        p.set_password(password)
        return p

    def principal(self, principal_id: str) -> Principal:
        p = self.principals.get(principal_id)
        if p is None:
            raise UnknownIdentifier(f"no principal {principal_id!r}")
        return p

    def access_context(self, principal_id: str, credentials=frozenset()) -> privacy.AccessContext:
        """Assemble the decision context from per-principal state."""
        return privacy.AccessContext(
            principal=principal_id,
            credentials=frozenset(credentials),
            approvals=frozenset(self.approvals.get(principal_id, ())),
            dua=tuple(sorted(self.dua.get(principal_id, {}).items())),
        )

    def grant_approval(self, study_handle: str, principal_id: str,
                       approver_kind: str, actor: str):
        study = self.catalog.study(study_handle)
        if not study.has_role(actor, "curator"):
            raise PermissionDenied(f"{actor!r} cannot approve access on {study_handle}")
        self.approvals.setdefault(principal_id, set()).add((study_handle, approver_kind))

    def record_dua(self, study_handle: str, dataset: str, principal_id: str, action: str):
        if action not in ("accepted", "signed"):
            raise InvalidMetadata("data-use agreement action must be accepted or signed")
        self.catalog.dataset(study_handle, dataset)
        states = self.dua.setdefault(principal_id, {})
        current = states.get((study_handle, dataset), "none")
        # Signing subsumes accepting; never downgrade.
        if current != "signed":
            states[(study_handle, dataset)] = action

    # --- studies ------------------------------------------------------------------

    def create_study(self, metadata: StudyMetadata, owner: str) -> Study:
        return self.catalog.create_study(metadata, owner)

    def grant_role(self, study_handle: str, principal_id: str, role: str, actor: str):
        if role not in ("depositor", "curator"):
            raise InvalidMetadata(f"unknown role {role!r}")
        study = self.catalog.study(study_handle)
        if actor != study.owner:
            raise PermissionDenied("only the study owner assigns roles")
        study.roles.setdefault(principal_id, set()).add(role)

    def export_study_metadata(self, study_handle: str) -> str:
        """Flat key-value metadata document, one field per line."""
        study = self.catalog.study(study_handle)
        lines = [f"title: {study.metadata.title}"]
        lines += [f"creator: {a}" for a in study.metadata.authors]
        if study.metadata.year:
            lines.append(f"date: {study.metadata.year}")
        lines.append(f"identifier: {study.handle}")
        if study.metadata.description:
            lines.append(f"description: {study.metadata.description}")
        for kw in study.metadata.keywords:
            lines.append(f"subject: {kw}")
        return "\n".join(lines) + "\n"

    # --- content serialization for storage ---------------------------------------------

    @staticmethod
    def _serialize_content(content) -> tuple[bytes, str, object, list[str]]:
        """Returns (bytes, content_kind, schema, variable names)."""
        if isinstance(content, TableContent):
            content.validate_cells()
            return (formats.write_table(content, formats.MEDIA_JSON), "table",
                    content.schema, [name for name, _ in content.schema])
        if isinstance(content, MatrixContent):
            buf = io.BytesIO()
            np.save(buf, content.array, allow_pickle=False)
            shape = content.array.shape
            return (buf.getvalue(), "matrix",
                    {"kind": "matrix", "rows": int(shape[0]), "cols": int(shape[1])},
                    [f"c{j}" for j in range(shape[1])])
        if isinstance(content, GraphContent):
            doc = {
                "nodes": [{"id": i, "attributes": a} for i, a in sorted(content.nodes.items())],
                "edges": [{"src": s, "dst": d, "attributes": a} for s, d, a in content.edges],
            }
            return (json.dumps(doc, ensure_ascii=False).encode(), "graph",
                    {"kind": "graph"}, [])
        if isinstance(content, (bytes, bytearray, memoryview)):
            return bytes(content), "bytes", {"kind": "bytes"}, []
        raise SchemaMismatch(f"cannot store content of type {type(content).__name__}")

    @staticmethod
    def _deserialize_content(data: bytes, content_kind: str):
        if content_kind == "table":
            return formats.read_table(data, formats.MEDIA_JSON)
        if content_kind == "matrix":
            return MatrixContent(np.load(io.BytesIO(data), allow_pickle=False))
        if content_kind == "graph":
            doc = json.loads(data.decode())
            return GraphContent(
                {n["id"]: n["attributes"] for n in doc["nodes"]},
                [(e["src"], e["dst"], e["attributes"]) for e in doc["edges"]],
            )
        return data

    def _dataset_lock(self, handle: str, name: str) -> Lock:
        with self._owner_keys_lock:
            return self._dataset_locks.setdefault((handle, name), Lock())

    # --- deposit / release / deaccession ---------------------------------------------------

    def deposit(self, study_handle: str, name: str, content, privacy_level: int,
                actor: str, declared_schema=None, owner_passphrase: str | None = None,
                store_kind: str | None = None) -> DatasetVersion:
        study = self.catalog.study(study_handle)
        if not study.has_role(actor, "depositor"):
            raise PermissionDenied(f"{actor!r} may not deposit into {study_handle}")
        if privacy_level not in privacy.LEVELS:
            raise InvalidMetadata(f"privacy level must be 1..6, got {privacy_level}")
        data, kind, schema, variables = self._serialize_content(content)
        if declared_schema is not None and kind == "table" and list(declared_schema) != schema:
            raise SchemaMismatch("content does not match the declared schema",
                                 declared=list(declared_schema), actual=schema)
        with self._dataset_lock(study_handle, name):
            blob = privacy.seal(privacy_level, data, self.keys, owner_passphrase)
            version = self.catalog.new_draft(
                study_handle, name,
                privacy_level=privacy_level,
                schema=schema,
                content_kind=kind,
                content_key="",
                variables=variables,
            )
            key = f"{study_handle}/{name}/v{version.version}"
            if store_kind is None:
                store_kind = _default_store_kind(kind)
            self.store.put(key, blob.to_bytes(), store_kind)
            version.content_key = key
            return version

    def get_version(self, study_handle: str, name: str,
                    version: int | None = None) -> DatasetVersion:
        ds = self.catalog.dataset(study_handle, name)
        if version is not None:
            return ds.version(version)
        latest = ds.latest() or ds.latest((DRAFT,))
        if latest is None:
            raise UnknownDataset(f"dataset {name!r} has no versions")
        return latest

    def load_content(self, version: DatasetVersion, owner_passphrase: str | None = None):
        raw = self.store.get(version.content_key)
        blob = privacy.SealedBlob.from_bytes(raw)
        data = privacy.unseal(blob, self.keys, owner_passphrase)
        return self._deserialize_content(data, version.content_kind)

    def release(self, study_handle: str, name: str, version_number: int, actor: str,
                owner_passphrase: str | None = None) -> DatasetVersion:
        study = self.catalog.study(study_handle)
        if not study.has_role(actor, "curator"):
            raise PermissionDenied(f"{actor!r} may not release versions of {study_handle}")
        with self._dataset_lock(study_handle, name):
            version = self.catalog.dataset(study_handle, name).version(version_number)
            content = self.load_content(version, owner_passphrase)
            fp = fingerprint_content(content)
            self.catalog.mark_released(version, fp)
        self._mint_version_citation(version)
        self._register_release_entity(version)
        self._ensure_default_grant(version)
        return version

    def deaccession(self, study_handle: str, name: str, version_number: int,
                    reason: str, actor: str) -> DatasetVersion:
        study = self.catalog.study(study_handle)
        if not study.has_role(actor, "curator"):
            raise PermissionDenied(f"{actor!r} may not deaccession versions of {study_handle}")
        with self._dataset_lock(study_handle, name):
            version = self.catalog.dataset(study_handle, name).version(version_number)
            self.catalog.mark_deaccessioned(version, reason)
        return version

    def verify_stored(self, version: DatasetVersion,
                      owner_passphrase: str | None = None) -> bool:
        """Re-fingerprint stored content against the frozen fingerprint."""
        if version.fingerprint is None:
            return False
        return fingerprint_content(self.load_content(version, owner_passphrase)) \
            == version.fingerprint

    def _register_release_entity(self, version: DatasetVersion):
        entity_id = "osp:{}/{}/v{}".format(*version.ref)
        self.provenance.add_node(
            entity_id, "entity",
            {"source": "ingest_metadata", "unf": version.fingerprint.render()},
            link=version.ref,
        )

    def _ensure_default_grant(self, version: DatasetVersion):
        # Released data is view-gated; the privacy level stays the outer
        # gate.  Releasing mints a full-table public grant unless a
        # curator already scoped explicit grants for this dataset.
        dataset = (version.study_handle, version.dataset_name)
        if not self.views.has_grants(dataset):
            schema = version.schema if isinstance(version.schema, list) else []
            view = self.views.define(dataset, schema)
            self.views.grant(secure_views.PUBLIC_GROUP, view.view_id,
                             ("read", "sample", "analyze"))

    # --- citations -----------------------------------------------------------------------

    def _citation_year(self, version: DatasetVersion, study: Study) -> int:
        if study.metadata.year:
            return study.metadata.year
        import datetime

        return datetime.datetime.fromtimestamp(version.released_at).year

    def _mint_version_citation(self, version: DatasetVersion) -> Citation:
        key = version.ref
        if key in self.citations:
            return self.citations[key]
        study = self.catalog.study(version.study_handle)
        ds = self.catalog.dataset(version.study_handle, version.dataset_name)
        citation = Citation(
            authors=tuple(study.metadata.authors),
            year=self._citation_year(version, study),
            title=study.metadata.title,
            persistent_url=self.resolver_base + ds.persistent_id,
            unf=version.fingerprint.render(),
            version=version.version,
            target="dataset_version",
        )
        self.citations[key] = citation
        return citation

    def mint_citation(self, study_handle: str, name: str, version_number: int) -> Citation:
        version = self.catalog.dataset(study_handle, name).version(version_number)
        if version.state == DRAFT:
            raise NotReleased("citations exist only for released versions")
        return self.citations[version.ref]

    def mint_sample_citation(self, sample_id: str) -> Citation:
        if sample_id in self.sample_citations:
            return self.sample_citations[sample_id]
        descriptor = self.samples.get(sample_id)
        handle, name, vnum = descriptor.source
        study = self.catalog.study(handle)
        version = self.catalog.dataset(handle, name).version(vnum)
        pid = self.sample_pids.get(sample_id)
        if pid is None:
            pid = self.registry.mint("sample", sample_id)
            self.sample_pids[sample_id] = pid
        citation = Citation(
            authors=tuple(study.metadata.authors),
            year=self._citation_year(version, study),
            title=study.metadata.title,
            persistent_url=self.resolver_base + pid,
            unf=descriptor.sample_fingerprint.render(),
            version=vnum,
            target="sample",
        )
        self.sample_citations[sample_id] = citation
        return citation

    def resolve(self, persistent_id: str) -> Resolution:
        kind, target = self.registry.lookup(persistent_id)
        if kind == "study":
            study: Study = target
            return Resolution("study", persistent_id, {
                "handle": study.handle,
                "title": study.metadata.title,
                "datasets": sorted(study.datasets),
            })
        if kind == "sample":
            descriptor = self.samples.get(target)
            handle, name, vnum = descriptor.source
            study = self.catalog.study(handle)
            return Resolution("sample", persistent_id, {
                "sample_id": descriptor.sample_id,
                "descriptor": descriptor_dict(descriptor),
                "extraction_path": f"/studies/{handle}/datasets/{name}/samples/{descriptor.sample_id}",
                "dataset": {
                    "study": handle, "name": name, "version": vnum,
                    "title": study.metadata.title,
                    "authors": list(study.metadata.authors),
                },
            })
        handle, name = target
        ds = self.catalog.dataset(handle, name)
        version = ds.latest()
        if version is None:
            raise UnknownIdentifier(f"{persistent_id} has no released version")
        study = self.catalog.study(handle)
        base = {
            "study": handle,
            "dataset": name,
            "version": version.version,
            "title": study.metadata.title,
            "authors": list(study.metadata.authors),
            "unf": version.fingerprint.render(),
        }
        if version.state == DEACCESSIONED:
            base["reason"] = version.deaccession_reason
            return Resolution("tombstone", persistent_id, base)
        citation = self.citations.get(version.ref)
        base["citation"] = citation.render() if citation else None
        base["access_path"] = f"/studies/{handle}/datasets/{name}"
        return Resolution("dataset_landing", persistent_id, base)

    # --- sampling -------------------------------------------------------------------------

    def draw_sample(self, study_handle: str, name: str, version_number: int,
                    method: str, n: int, seed: int,
                    window: tuple[int, int] | None = None,
                    view: EffectiveView | None = None,
                    actor: str = "", owner_passphrase: str | None = None):
        version = self.catalog.dataset(study_handle, name).version(version_number)
        if version.state != RELEASED:
            raise NotReleased("samples are drawn from released versions only")
        content = self.load_content(version, owner_passphrase)
        scoped = self.masked_content(content, view)
        descriptor, sample = self._draw_from(scoped, version, method, n, seed,
                                             window, view, actor)
        self.samples.register(descriptor)
        return descriptor, sample

    def masked_content(self, content, view: EffectiveView | None):
        if view is None:
            return content
        if isinstance(content, MatrixContent):
            if view == EffectiveView.full():
                return content
            content = content.to_table()
        if isinstance(content, TableContent):
            return apply_effective(view, content)
        return content

    def _draw_from(self, content, version, method, n, seed, window, view, actor):
        rows = _row_count(content)
        if window is not None:
            start, end = window
            if not (0 <= start <= end <= rows):
                raise SampleTooLarge(
                    f"window [{start}, {end}) outside 0..{rows}")
            scope, offset = end - start, start
        else:
            scope, offset = rows, 0
        indices = select_indices(method, n, seed, scope, offset)
        sample = _extract_rows(content, indices)
        sample_fp = replace(fingerprint_content(sample), scope="sample")
        descriptor = SampleDescriptor(
            sample_id=self.samples.next_id(),
            source=version.ref,
            source_fingerprint=version.fingerprint,
            method=method,
            seed=seed,
            requested_n=n,
            selected_indices=tuple(indices) if n <= self.index_bound else None,
            window=window,
            sample_fingerprint=sample_fp,
            view_snapshot=view,
            drawn_by=actor,
        )
        return descriptor, sample

    def reextract(self, sample_id: str, owner_passphrase: str | None = None):
        descriptor = self.samples.get(sample_id)
        handle, name, vnum = descriptor.source
        version = self.catalog.dataset(handle, name).version(vnum)
        content = self.load_content(version, owner_passphrase)
        if fingerprint_content(content) != descriptor.source_fingerprint:
            raise SourceDrift(
                "stored source content no longer matches the recorded fingerprint"
            )
        scoped = self.masked_content(content, descriptor.view_snapshot)
        if descriptor.selected_indices is not None:
            indices = list(descriptor.selected_indices)
        else:
            rows = _row_count(scoped)
            if descriptor.window is not None:
                start, end = descriptor.window
                scope, offset = end - start, start
            else:
                scope, offset = rows, 0
            indices = select_indices(descriptor.method, descriptor.requested_n,
                                     descriptor.seed, scope, offset)
        sample = _extract_rows(scoped, indices)
        recomputed = replace(fingerprint_content(sample), scope="sample")
        if recomputed != descriptor.sample_fingerprint:
            raise SourceDrift("re-extracted sample does not match its fingerprint")
        return sample

    def sample_uniformity_check(self, study_handle: str, name: str, version_number: int,
                                n: int, trials: int, seed_base: int = 0):
        """Per-row selection frequencies over ``trials`` independent seeds."""
        version = self.catalog.dataset(study_handle, name).version(version_number)
        content = self.load_content(version)
        rows = _row_count(content)
        counts = [0] * rows
        for t in range(trials):
            for i in select_indices("uniform_without_replacement", n,
                                    seed_base + t, rows):
                counts[i] += 1
        return [c / trials for c in counts]

    # --- authorization -------------------------------------------------------------------

    def subjects_for(self, principal_id: str, ctx: privacy.AccessContext) -> set[str]:
        subjects = {principal_id, secure_views.PUBLIC_GROUP}
        if privacy.REQ_VERIFIED in ctx.credentials:
            subjects.add(secure_views.REGISTERED_GROUP)
        return subjects

    def authorize(self, principal_id: str, ctx: privacy.AccessContext,
                  dataset: tuple[str, str], capability: str) -> EffectiveView | None:
        """Secure-views gate; owners and curators hold an implicit full view."""
        study = self.catalog.study(dataset[0])
        if study.has_role(principal_id, "curator"):
            return EffectiveView.full()
        return self.views.authorize(self.subjects_for(principal_id, ctx),
                                    dataset, capability)

    def _view_schema(self, version: DatasetVersion) -> list[tuple[str, str]]:
        if isinstance(version.schema, list):
            return [tuple(pair) for pair in version.schema]
        if version.content_kind == "matrix":
            return [(f"c{j}", "numeric") for j in range(version.schema["cols"])]
        return []

    def define_view(self, study_handle: str, name: str, actor: str,
                    column_mask=None, predicate=(), value_masks=()):
        study = self.catalog.study(study_handle)
        if not study.has_role(actor, "curator"):
            raise PermissionDenied(f"{actor!r} holds no curator capability on {study_handle}")
        version = self.get_version(study_handle, name)
        return self.views.define((study_handle, name), self._view_schema(version),
                                 column_mask, predicate, value_masks)

    def grant_view(self, view_id: str, subject: str, capabilities, actor: str):
        view = self.views.get(view_id)
        study = self.catalog.study(view.dataset[0])
        if not study.has_role(actor, "curator"):
            raise PermissionDenied(f"{actor!r} holds no curator capability on {view.dataset[0]}")
        return self.views.grant(subject, view_id, capabilities)

    # --- analytics jobs --------------------------------------------------------------------

    def submit_job(self, kind: str, study_handle: str, name: str,
                   version_number: int | None, parameters: dict,
                   principal_id: str, ctx: privacy.AccessContext) -> analytics.AnalyticsJob:
        version = self.get_version(study_handle, name, version_number)
        if version.state != RELEASED:
            raise NotReleased("jobs run against released versions")
        decision = privacy.access_decision(version.privacy_level, ctx,
                                           (study_handle, name))
        if not decision:
            raise PermissionDenied("privacy policy denies access",
                                   missing=sorted(decision.missing))
        view = self.authorize(principal_id, ctx, (study_handle, name), "analyze")
        if view is None:
            raise PermissionDenied("no analyze grant on this dataset")
        params = dict(parameters)
        params["_view"] = view
        return self.scheduler.submit(kind, version.ref, params, principal_id)

    def job_status(self, job_id: str) -> analytics.AnalyticsJob:
        return self.scheduler.get(job_id)

    def _run_job(self, job: analytics.AnalyticsJob) -> dict:
        handle, name, vnum = job.dataset
        version = self.catalog.dataset(handle, name).version(vnum)
        content = self.load_content(version)
        view = job.parameters.get("_view") or EffectiveView.full()
        table = self.masked_content(content, view)
        if isinstance(table, MatrixContent):
            table = table.to_table()
        if not isinstance(table, TableContent):
            raise SchemaMismatch("analytics need tabular content")
        return run_analysis(job.kind, table, job.parameters)

    # --- provenance ---------------------------------------------------------------------------

    def entity_for_version(self, study_handle: str, name: str, version_number: int) -> str:
        return f"osp:{study_handle}/{name}/v{version_number}"


_CONTENT_SHAPES = {
    "table": "flat_records",
    "matrix": "matrix",
    "graph": "graph",
    "bytes": "blob",
}


def _default_store_kind(content_kind: str) -> str:
    return recommend_store(DataProfile(_CONTENT_SHAPES[content_kind]))


def _row_count(content) -> int:
    if isinstance(content, (TableContent, MatrixContent)):
        return content.row_count
    raise SchemaMismatch("content is not row addressable")


def _extract_rows(content, indices):
    return content.select_rows(indices)


def descriptor_dict(d: SampleDescriptor) -> dict:
    return {
        "sample_id": d.sample_id,
        "source": {"study": d.source[0], "dataset": d.source[1], "version": d.source[2]},
        "source_unf": d.source_fingerprint.render(),
        "method": d.method,
        "seed": d.seed,
        "requested_n": d.requested_n,
        "selected_indices": list(d.selected_indices) if d.selected_indices is not None else None,
        "window": list(d.window) if d.window else None,
        "sample_unf": d.sample_fingerprint.render(),
        "drawn_by": d.drawn_by,
    }


# --- analysis parameter handling ----------------------------------------------------------------

def _numeric_matrix(table: TableContent, names) -> tuple[np.ndarray, int]:
    """Column stack with listwise deletion; returns (matrix, dropped rows)."""
    cols = []
    for name in names:
        try:
            col = table.column(name)
        except KeyError:
            raise SchemaMismatch(f"no column {name!r} in the effective view") from None
        if col.ctype not in ("numeric", "boolean"):
            raise SchemaMismatch(f"column {name!r} is not numeric")
        cols.append([
            float(v) if v is not None else math.nan for v in col.values
        ])
    arr = np.array(cols, dtype=float).T if cols else np.empty((table.row_count, 0))
    keep = ~np.isnan(arr).any(axis=1)
    return arr[keep], int((~keep).sum())


def run_analysis(kind: str, table: TableContent, parameters: dict) -> dict:
    if kind == "anova":
        group_col = parameters["group_column"]
        value_col = parameters["value_column"]
        groups_map: dict[object, list[float]] = {}
        gvals = table.column(group_col).values
        vvals = table.column(value_col).values
        dropped = 0
        for g, v in zip(gvals, vvals):
            if g is None or v is None:
                dropped += 1
                continue
            groups_map.setdefault(g, []).append(float(v))
        result = analytics.anova_oneway([groups_map[g] for g in sorted(groups_map, key=str)])
        out = result.as_dict()
        out["dropped_rows"] = dropped
        return out
    if kind in ("ols", "logistic"):
        predictors = list(parameters["predictors"])
        response = parameters["response"]
        data, dropped = _numeric_matrix(table, [response] + predictors)
        y = data[:, 0]
        X = np.column_stack([np.ones(len(y)), data[:, 1:]])
        if kind == "ols":
            out = analytics.ols(X, y).as_dict()
        else:
            out = analytics.logistic(X, y).as_dict()
        out["dropped_rows"] = dropped
        return out
    if kind == "kmeans":
        columns = list(parameters["columns"])
        data, dropped = _numeric_matrix(table, columns)
        result = analytics.kmeans(
            data, int(parameters["k"]), int(parameters.get("seed", 0)),
            int(parameters.get("max_iter", 100)),
        )
        out = result.as_dict()
        out["dropped_rows"] = dropped
        return out
    raise SchemaMismatch(f"unknown analysis kind {kind!r}")
