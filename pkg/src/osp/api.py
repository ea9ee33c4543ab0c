"""REST surface: resource addressing, range slicing, content negotiation.

Route map and status codes are documented in docs/api.md.  Data routes
enforce three gates in a fixed order: the privacy-level gate, then the
secure-views gate, then range validation; deny bodies list what is
missing and never carry dataset values.  Every 200 data body travels
with an ``X-OSP-UNF`` header holding the fingerprint of exactly the
content served.
"""

from __future__ import annotations

import json
import re
import secrets
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from . import formats, privacy
from .analytics import render_result_json
from .catalog import DEACCESSIONED, DRAFT, RELEASED, StudyMetadata
from .content import MatrixContent, TableContent
from .engine import Repository, Resolution, descriptor_dict
from .errors import (
    Deaccessioned,
    NotReleased,
    OspError,
    ParseError,
    PermissionDenied,
    RangeOutOfBounds,
    SchemaMismatch,
    Unauthenticated,
    UnknownDataset,
    UnknownIdentifier,
)
from .fingerprint import Fingerprint, fingerprint_content
from .secure_views import Comparison, EffectiveView

UNF_HEADER = "X-OSP-UNF"
OWNER_KEY_HEADER = "X-OSP-Owner-Key"

_RANGE_RE = re.compile(r"^(\d+)\.\.(\d+)$")


def _tombstone_payload(version, study) -> dict:
    return {
        "state": DEACCESSIONED,
        "study": version.study_handle,
        "dataset": version.dataset_name,
        "version": version.version,
        "title": study.metadata.title,
        "authors": list(study.metadata.authors),
        "unf": version.fingerprint.render(),
        "reason": version.deaccession_reason,
    }


def gate_access(repo: Repository, principal: str | None, ctx, handle: str,
                name: str, version_number: int | None, capability: str):
    """Privacy gate, then secure-views gate; returns (version, view).

    Deaccessioned versions surface their tombstone; drafts are invisible
    outside the study's depositors and curators.  Anonymous callers get
    401 on denial, authenticated ones 403 with the missing requirements.
    """
    version = repo.get_version(handle, name, version_number)
    study = repo.catalog.study(handle)
    if version.state == DEACCESSIONED:
        raise Deaccessioned("content withdrawn; tombstone only",
                            tombstone=_tombstone_payload(version, study))
    if version.state == DRAFT:
        if not study.has_role(principal or "", "depositor", "curator"):
            raise UnknownDataset(f"no released version of {name!r}")
    decision = privacy.access_decision(version.privacy_level, ctx, (handle, name))
    if not decision:
        _deny(principal, "privacy policy denies access",
              missing=sorted(decision.missing))
    if version.state == DRAFT:
        view = EffectiveView.full()
    else:
        view = repo.authorize(principal or "anonymous", ctx, (handle, name),
                              capability)
    if view is None:
        _deny(principal, f"no {capability} grant on this dataset")
    return version, view


def _deny(principal: str | None, message: str, **details):
    if principal is None:
        raise Unauthenticated(message, **details)
    raise PermissionDenied(message, **details)


class CodeChannel:
    """Delivery stub for verification and one-time codes.

    Real SMS/email delivery is deployment wiring; this records each code
    in an outbox and, when ``echo`` is set (the default for a
    self-contained instance), also returns it to the caller.
    """

    def __init__(self, echo: bool = True):
        self.echo = echo
        self.outbox: list[tuple[str, str, str]] = []       # (principal, purpose, code)

    def deliver(self, principal: str, purpose: str) -> str:
        code = secrets.token_hex(4)
        self.outbox.append((principal, purpose, code))
        return code

    def last_code(self, principal: str, purpose: str) -> str | None:
        for p, why, code in reversed(self.outbox):
            if p == principal and why == purpose:
                return code
        return None


@dataclass
class Session:
    principal: str
    credentials: set[str] = field(default_factory=set)


class TokenStore:
    def __init__(self):
        self._tokens: dict[str, Session] = {}

    def issue(self, principal: str, credentials) -> str:
        token = secrets.token_urlsafe(24)
        self._tokens[token] = Session(principal, set(credentials))
        return token

    def get(self, token: str) -> Session:
        session = self._tokens.get(token)
        if session is None:
            raise Unauthenticated("unknown or expired token")
        return session


def create_app(repo: Repository | None = None, *,
               channel: CodeChannel | None = None, workers: int = 2) -> FastAPI:
    repo = repo or Repository(workers=workers)
    channel = channel or CodeChannel()
    tokens = TokenStore()

    app = FastAPI(title="osp", docs_url=None, redoc_url=None)
    app.state.repo = repo
    app.state.channel = channel
    app.state.tokens = tokens

    @app.exception_handler(OspError)
    async def _osp_error(_request: Request, exc: OspError):
        body = {"error": {"code": exc.code, "message": exc.message}}
        if exc.details:
            body["error"].update(exc.details)
        return JSONResponse(body, status_code=exc.http_status)

    # --- request context -------------------------------------------------------

    def current(request: Request) -> tuple[str | None, privacy.AccessContext]:
        header = request.headers.get("authorization")
        if not header:
            return None, privacy.ANONYMOUS
        parts = header.split()
        if len(parts) != 2 or parts[0].lower() != "bearer":
            raise Unauthenticated("authorization header must be 'Bearer <token>'")
        session = tokens.get(parts[1])
        return session.principal, repo.access_context(
            session.principal, frozenset(session.credentials)
        )

    def require_principal(request: Request) -> tuple[str, privacy.AccessContext]:
        principal, ctx = current(request)
        if principal is None:
            raise Unauthenticated("this route needs a bearer token")
        return principal, ctx

    # --- auth -------------------------------------------------------------------

    @app.post("/auth/register", status_code=201)
    async def register(body: dict):
        principal = repo.register_principal(
            str(body.get("principal", "")), str(body.get("password", ""))
        )
        code = channel.deliver(principal.principal_id, "verify")
        principal.pending_codes["verify"] = code
        out = {"principal": principal.principal_id, "verification": "delivered"}
        if channel.echo:
            out["code"] = code
        return out

    @app.post("/auth/verify")
    async def verify_registration(body: dict):
        principal = repo.principal(str(body.get("principal", "")))
        if body.get("code") != principal.pending_codes.get("verify"):
            raise PermissionDenied("verification code does not match")
        principal.verified = True
        principal.pending_codes.pop("verify", None)
        return {"principal": principal.principal_id, "verified": True}

    @app.post("/auth/token")
    async def login(body: dict):
        try:
            principal = repo.principal(str(body.get("principal", "")))
        except UnknownIdentifier:
            raise Unauthenticated("unknown principal or bad password") from None
        if not principal.check_password(str(body.get("password", ""))):
            raise Unauthenticated("unknown principal or bad password")
        creds = {privacy.REQ_PASSWORD}
        if principal.verified:
            creds.add(privacy.REQ_VERIFIED)
        token = tokens.issue(principal.principal_id, creds)
        return {"token": token, "credentials": sorted(creds)}

    @app.post("/auth/two-factor/request")
    async def request_second_factor(request: Request):
        principal_id, _ = require_principal(request)
        principal = repo.principal(principal_id)
        code = channel.deliver(principal_id, "two_factor")
        principal.pending_codes["two_factor"] = code
        out = {"delivery": "sent"}
        if channel.echo:
            out["code"] = code
        return out

    @app.post("/auth/two-factor")
    async def confirm_second_factor(request: Request, body: dict):
        principal_id, _ = require_principal(request)
        principal = repo.principal(principal_id)
        if body.get("code") != principal.pending_codes.get("two_factor"):
            raise PermissionDenied("one-time code does not match")
        principal.pending_codes.pop("two_factor", None)
        session = tokens.get(request.headers["authorization"].split()[1])
        session.credentials |= {privacy.REQ_TWO_FACTOR, privacy.REQ_PASSWORD}
        return {"credentials": sorted(session.credentials)}

    # --- studies ------------------------------------------------------------------

    @app.post("/studies", status_code=201)
    async def create_study(request: Request, body: dict):
        principal, _ = require_principal(request)
        metadata = StudyMetadata(
            title=str(body.get("title", "")),
            authors=[str(a) for a in body.get("authors", [])],
            year=body.get("year"),
            description=str(body.get("description", "")),
            keywords=[str(k) for k in body.get("keywords", [])],
        )
        study = repo.create_study(metadata, principal)
        return {"handle": study.handle}

    @app.get("/studies/{prefix}/{suffix}")
    async def study_landing(prefix: str, suffix: str, request: Request):
        principal, _ = current(request)
        study = repo.catalog.study(f"{prefix}/{suffix}")
        insider = study.has_role(principal or "", "depositor", "curator")
        datasets = {}
        for name, ds in study.datasets.items():
            versions = [
                {"version": v.version, "state": v.state,
                 "privacy_level": v.privacy_level}
                for v in ds.versions if insider or v.state != DRAFT
            ]
            if versions:
                datasets[name] = versions
        return {
            "handle": study.handle,
            "title": study.metadata.title,
            "authors": list(study.metadata.authors),
            "year": study.metadata.year,
            "description": study.metadata.description,
            "keywords": list(study.metadata.keywords),
            "datasets": datasets,
        }

    @app.get("/studies/{prefix}/{suffix}/metadata")
    async def study_metadata(prefix: str, suffix: str):
        return PlainTextResponse(repo.export_study_metadata(f"{prefix}/{suffix}"))

    @app.post("/studies/{prefix}/{suffix}/roles", status_code=201)
    async def grant_role(prefix: str, suffix: str, request: Request, body: dict):
        principal, _ = require_principal(request)
        repo.grant_role(f"{prefix}/{suffix}", str(body.get("principal", "")),
                        str(body.get("role", "")), principal)
        return {"granted": body.get("role"), "to": body.get("principal")}

    @app.post("/studies/{prefix}/{suffix}/approvals", status_code=201)
    async def grant_approval(prefix: str, suffix: str, request: Request, body: dict):
        principal, _ = require_principal(request)
        repo.grant_approval(f"{prefix}/{suffix}", str(body.get("principal", "")),
                            str(body.get("kind", "curator")), principal)
        return {"approved": body.get("principal")}

    @app.post("/studies/{prefix}/{suffix}/datasets/{name}/dua", status_code=201)
    async def record_dua(prefix: str, suffix: str, name: str,
                         request: Request, body: dict):
        principal, _ = require_principal(request)
        repo.record_dua(f"{prefix}/{suffix}", name, principal,
                        str(body.get("action", "")))
        return {"dua": body.get("action")}

    # --- deposit and lifecycle -------------------------------------------------------

    def _parse_schema_param(schema: str | None):
        if not schema:
            return None
        pairs = []
        for part in schema.split(","):
            name, _, ctype = part.partition(":")
            if not name or ctype not in ("numeric", "text", "boolean"):
                raise SchemaMismatch(f"bad schema entry {part!r}")
            pairs.append((name, ctype))
        return pairs

    @app.put("/studies/{prefix}/{suffix}/datasets/{name}", status_code=201)
    async def deposit(prefix: str, suffix: str, name: str, request: Request,
                      level: int = 1, schema: str | None = None,
                      kind: str = "table"):
        principal, _ = require_principal(request)
        body = await request.body()
        declared = _parse_schema_param(schema)
        if kind == "table":
            media = request.headers.get("content-type", formats.MEDIA_CSV)
            media = media.split(";")[0].strip() or formats.MEDIA_CSV
            content = formats.read_table(body, media, declared)
        elif kind == "bytes":
            content = body
        else:
            raise SchemaMismatch(f"unsupported deposit kind {kind!r}")
        version = repo.deposit(
            f"{prefix}/{suffix}", name, content, level, principal,
            declared_schema=declared,
            owner_passphrase=request.headers.get(OWNER_KEY_HEADER),
        )
        return {"version": version.version, "state": version.state}

    @app.post("/studies/{prefix}/{suffix}/datasets/{name}/release")
    async def release(prefix: str, suffix: str, name: str,
                      request: Request, body: dict):
        principal, _ = require_principal(request)
        version = repo.release(
            f"{prefix}/{suffix}", name, int(body.get("version", 0)), principal,
            owner_passphrase=request.headers.get(OWNER_KEY_HEADER),
        )
        citation = repo.mint_citation(f"{prefix}/{suffix}", name, version.version)
        return {
            "version": version.version,
            "state": version.state,
            "unf": version.fingerprint.render(),
            "citation": citation.render(),
        }

    @app.post("/studies/{prefix}/{suffix}/datasets/{name}/deaccession")
    async def deaccession(prefix: str, suffix: str, name: str,
                          request: Request, body: dict):
        principal, _ = require_principal(request)
        version = repo.deaccession(
            f"{prefix}/{suffix}", name, int(body.get("version", 0)),
            str(body.get("reason", "")), principal,
        )
        return {"version": version.version, "state": version.state}

    # --- data access ---------------------------------------------------------------------

    def _gated_version(request: Request, handle: str, name: str,
                       version_number: int | None, capability: str):
        principal, ctx = current(request)
        return gate_access(repo, principal, ctx, handle, name,
                           version_number, capability)

    @app.exception_handler(Deaccessioned)
    async def _tombstone(_request, exc: Deaccessioned):
        return JSONResponse({"tombstone": exc.details["tombstone"]},
                            status_code=410)

    def _serve_table(table: TableContent, accept: str | None,
                     unf: Fingerprint | None = None) -> Response:
        media = formats.negotiate(accept)
        body = formats.write_table(table, media)
        fp = unf or fingerprint_content(table)
        return Response(body, media_type=media, headers={UNF_HEADER: fp.render()})

    def _serve_content(content, accept: str | None,
                       unf: Fingerprint | None = None) -> Response:
        if isinstance(content, MatrixContent):
            media = formats.negotiate(accept)
            if media in (formats.MEDIA_CSV, formats.MEDIA_TSV):
                body = formats.write_matrix(content, media)
                fp = unf or fingerprint_content(content)
                return Response(body, media_type=media, headers={UNF_HEADER: fp.render()})
            content = content.to_table()
        if isinstance(content, TableContent):
            return _serve_table(content, accept, unf)
        if isinstance(content, (bytes, bytearray)):
            fp = unf or fingerprint_content(bytes(content))
            return Response(bytes(content), media_type="application/octet-stream",
                            headers={UNF_HEADER: fp.render()})
        raise SchemaMismatch("content kind has no direct serialization")

    @app.get("/studies/{prefix}/{suffix}/datasets/{name}")
    async def fetch_dataset(prefix: str, suffix: str, name: str, request: Request,
                            version: int | None = None):
        handle = f"{prefix}/{suffix}"
        ver, view = _gated_version(request, handle, name, version, "read")
        content = repo.load_content(ver, request.headers.get(OWNER_KEY_HEADER))
        identity = view == EffectiveView.full()
        masked = repo.masked_content(content, view)
        unf = ver.fingerprint if identity and ver.fingerprint else None
        return _serve_content(masked, request.headers.get("accept"), unf)

    def _parse_range(segment: str, upper: int, what: str) -> tuple[int, int]:
        m = _RANGE_RE.match(segment)
        if m is None:
            raise UnknownIdentifier(f"malformed {what} range {segment!r}")
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo > hi or hi >= upper:
            raise RangeOutOfBounds(
                f"{what} range {segment} outside 0..{upper - 1}")
        return lo, hi

    @app.get("/studies/{prefix}/{suffix}/datasets/{name}/matrix/{rows}/{cols}")
    @app.get("/studies/{prefix}/{suffix}/datasets/{name}/matrix/{rows}/{cols}/")
    async def fetch_submatrix(prefix: str, suffix: str, name: str, rows: str,
                              cols: str, request: Request,
                              version: int | None = None):
        handle = f"{prefix}/{suffix}"
        ver, view = _gated_version(request, handle, name, version, "read")
        content = repo.load_content(ver, request.headers.get(OWNER_KEY_HEADER))
        masked = repo.masked_content(content, view)
        if isinstance(masked, MatrixContent):
            n_rows, n_cols = masked.row_count, masked.column_count
        elif isinstance(masked, TableContent):
            n_rows, n_cols = masked.row_count, len(masked.columns)
        else:
            raise SchemaMismatch("content is not dimensional")
        r0, r1 = _parse_range(rows, n_rows, "row")
        c0, c1 = _parse_range(cols, n_cols, "column")
        if isinstance(masked, MatrixContent):
            sub = MatrixContent(masked.array[r0:r1 + 1, c0:c1 + 1])
        else:
            picked = masked.columns[c0:c1 + 1]
            sub = TableContent([
                type(c)(c.name, c.ctype, c.values[r0:r1 + 1]) for c in picked
            ])
        return _serve_content(sub, request.headers.get("accept"))

    # --- samples --------------------------------------------------------------------------

    @app.post("/studies/{prefix}/{suffix}/datasets/{name}/samples", status_code=201)
    async def draw_sample(prefix: str, suffix: str, name: str,
                          request: Request, body: dict):
        handle = f"{prefix}/{suffix}"
        principal, ctx = current(request)
        version_number = body.get("version")
        ver, view = _gated_version(request, handle, name, version_number, "sample")
        if ver.state != RELEASED:
            raise NotReleased("samples are drawn from released versions only")
        window = tuple(body["window"]) if body.get("window") else None
        descriptor, _sample = repo.draw_sample(
            handle, name, ver.version,
            str(body.get("method", "uniform_without_replacement")),
            int(body.get("n", 0)), int(body.get("seed", 0)),
            window=window, view=view, actor=principal or "anonymous",
            owner_passphrase=request.headers.get(OWNER_KEY_HEADER),
        )
        return descriptor_dict(descriptor)

    @app.get("/studies/{prefix}/{suffix}/datasets/{name}/samples/{sample_id}")
    async def fetch_sample(prefix: str, suffix: str, name: str, sample_id: str,
                           request: Request):
        handle = f"{prefix}/{suffix}"
        descriptor = repo.samples.get(sample_id)
        if descriptor.source[0] != handle or descriptor.source[1] != name:
            raise UnknownIdentifier(f"sample {sample_id!r} does not belong to {name!r}")
        _gated_version(request, handle, name, descriptor.source[2], "read")
        sample = repo.reextract(sample_id, request.headers.get(OWNER_KEY_HEADER))
        return _serve_content(sample, request.headers.get("accept"),
                              descriptor.sample_fingerprint)

    @app.get("/studies/{prefix}/{suffix}/datasets/{name}/samples/{sample_id}/citation")
    async def sample_citation(prefix: str, suffix: str, name: str, sample_id: str):
        citation = repo.mint_sample_citation(sample_id)
        return {"citation": citation.render(), "target": citation.target}

    # --- citations and resolution -------------------------------------------------------------

    @app.get("/studies/{prefix}/{suffix}/datasets/{name}/citation")
    async def dataset_citation(prefix: str, suffix: str, name: str,
                               version: int | None = None):
        handle = f"{prefix}/{suffix}"
        ver = repo.get_version(handle, name, version)
        citation = repo.mint_citation(handle, name, ver.version)
        return {
            "citation": citation.render(),
            "authors": list(citation.authors),
            "year": citation.year,
            "title": citation.title,
            "persistent_url": citation.persistent_url,
            "unf": citation.unf,
            "version": citation.version,
            "target": citation.target,
        }

    @app.get("/resolve/{prefix}/{suffix}")
    async def resolve(prefix: str, suffix: str):
        resolution: Resolution = repo.resolve(f"{prefix}/{suffix}")
        body = {"kind": resolution.kind, "persistent_id": resolution.persistent_id,
                **resolution.payload}
        status = 410 if resolution.kind == "tombstone" else 200
        return JSONResponse(body, status_code=status)

    @app.get("/search")
    async def search(request: Request, q: str = ""):
        principal, _ = current(request)
        hits = repo.catalog.search(q, principal)
        return {
            "query": q,
            "results": [
                {"handle": study.handle, "title": study.metadata.title,
                 "matched_fields": matched}
                for study, matched in hits
            ],
        }

    # --- secure views ----------------------------------------------------------------------------

    @app.post("/views", status_code=201)
    async def define_view(request: Request, body: dict):
        principal, _ = require_principal(request)
        dataset = body.get("dataset", {})
        predicate = tuple(
            Comparison(str(p["column"]), str(p["op"]), p["constant"])
            for p in body.get("predicate", [])
        )
        masks = tuple(
            (str(m["column"]), str(m["rule"])) for m in body.get("value_masks", [])
        )
        view = repo.define_view(
            str(dataset.get("study", "")), str(dataset.get("name", "")), principal,
            column_mask=body.get("columns"), predicate=predicate, value_masks=masks,
        )
        return {"view_id": view.view_id}

    @app.get("/audit/views")
    async def audit_views(request: Request):
        require_principal(request)
        return PlainTextResponse(repo.views.export_audit())

    @app.post("/grants", status_code=201)
    async def grant(request: Request, body: dict):
        principal, _ = require_principal(request)
        g = repo.grant_view(
            str(body.get("view_id", "")), str(body.get("subject", "")),
            tuple(body.get("capabilities", ())), principal,
        )
        return {"subject": g.subject, "view_id": g.view_id,
                "capabilities": sorted(g.capabilities)}

    # --- jobs ------------------------------------------------------------------------------------

    @app.post("/jobs", status_code=202)
    async def submit_job(request: Request, body: dict):
        principal, ctx = require_principal(request)
        job = repo.submit_job(
            str(body.get("kind", "")),
            str(body.get("study", "")), str(body.get("dataset", "")),
            body.get("version"), dict(body.get("parameters", {})),
            principal, ctx,
        )
        return {"job_id": job.job_id, "state": job.state}

    @app.get("/jobs/{job_id}")
    async def job_status(job_id: str):
        job = repo.job_status(job_id)
        body = {"job_id": job.job_id, "kind": job.kind, "state": job.state}
        if job.result is not None:
            body["result"] = job.result
        if job.error is not None:
            body["error"] = job.error
        return Response(render_result_json(body), media_type="application/json")

    # --- provenance -------------------------------------------------------------------------------

    @app.post("/prov/records", status_code=201)
    async def record_derivation(request: Request, body: dict):
        principal, _ = require_principal(request)
        for e in body.get("inputs", []):
            repo.provenance.add_node(str(e), "entity")
        tool = body.get("tool", ["unspecified", "0"])
        rec = repo.provenance.record_derivation(
            [str(e) for e in body.get("inputs", [])],
            [str(e) for e in body.get("outputs", [])],
            (str(tool[0]), str(tool[1])),
            str(body.get("agent", principal)),
            str(body.get("source", "execution_record")),
        )
        return {"record_id": rec.record_id}

    @app.post("/prov/documents", status_code=201)
    async def ingest_document(request: Request):
        require_principal(request)
        text = (await request.body()).decode("utf-8")
        return repo.provenance.ingest(text)

    @app.get("/prov/entities/{entity_id:path}/ancestors")
    async def ancestors(entity_id: str):
        return {"entity": entity_id,
                "ancestors": sorted(repo.provenance.ancestors(entity_id))}

    @app.get("/prov/entities/{entity_id:path}/descendants")
    async def descendants(entity_id: str):
        return {"entity": entity_id,
                "descendants": sorted(repo.provenance.descendants(entity_id))}

    @app.get("/prov/entities/{entity_id:path}/tools")
    async def tools_for(entity_id: str):
        tools = sorted(repo.provenance.tools_for(entity_id))
        return {"entity": entity_id,
                "tools": [{"name": n, "version": v} for n, v in tools]}

    @app.get("/prov/impacted")
    async def impacted(tool: str, version: str = "*"):
        return {"tool": tool, "version_predicate": version,
                "impacted": sorted(repo.provenance.impacted_by_tool(tool, version))}

    @app.get("/prov/export")
    async def export_provenance():
        return PlainTextResponse(repo.provenance.export())

    # --- batch -------------------------------------------------------------------------------------

    @app.post("/batch")
    async def batch(request: Request, body: dict):
        principal, ctx = require_principal(request)
        receipt = []
        for item in body.get("operations", []):
            try:
                receipt.append({"status": "ok",
                                "result": _batch_item(repo, principal, ctx, item)})
            except OspError as exc:
                receipt.append({"status": "error", "code": exc.code,
                                "message": exc.message})
        return {"receipt": receipt}

    return app


def _batch_item(repo: Repository, principal: str, ctx, item: dict):
    op = item.get("op")
    if op == "deposit":
        table = formats.read_table(
            json.dumps(item["table"]).encode(), formats.MEDIA_JSON
        )
        version = repo.deposit(item["study"], item["dataset"], table,
                               int(item.get("level", 1)), principal)
        return {"version": version.version, "state": version.state}
    if op == "release":
        version = repo.release(item["study"], item["dataset"],
                               int(item["version"]), principal)
        return {"version": version.version, "state": version.state,
                "unf": version.fingerprint.render()}
    if op == "deaccession":
        version = repo.deaccession(item["study"], item["dataset"],
                                   int(item["version"]),
                                   str(item.get("reason", "")), principal)
        return {"version": version.version, "state": version.state}
    if op == "draw_sample":
        version, view = gate_access(repo, principal, ctx, item["study"],
                                    item["dataset"], int(item["version"]),
                                    "sample")
        descriptor, _ = repo.draw_sample(
            item["study"], item["dataset"], version.version,
            str(item.get("method", "uniform_without_replacement")),
            int(item.get("n", 0)), int(item.get("seed", 0)),
            window=tuple(item["window"]) if item.get("window") else None,
            view=view, actor=principal,
        )
        return descriptor_dict(descriptor)
    if op == "submit_job":
        job = repo.submit_job(str(item.get("kind", "")), item["study"],
                              item["dataset"], item.get("version"),
                              dict(item.get("parameters", {})), principal, ctx)
        return {"job_id": job.job_id, "state": job.state}
    if op == "record_derivation":
        for e in item.get("inputs", []):
            repo.provenance.add_node(str(e), "entity")
        tool = item.get("tool", ["unspecified", "0"])
        rec = repo.provenance.record_derivation(
            item.get("inputs", []), item.get("outputs", []),
            (str(tool[0]), str(tool[1])), str(item.get("agent", principal)),
            str(item.get("source", "execution_record")),
        )
        return {"record_id": rec.record_id}
    raise ParseError(f"unknown batch operation {op!r}")
