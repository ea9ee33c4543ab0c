"""Command-line client for the repository server.

Configuration: ``--server`` flag, else ``OSP_SERVER``, else the config
file ``~/.config/osp/config.json``, else ``http://127.0.0.1:8080``.  The
bearer token comes from ``OSP_TOKEN`` or the token file (written with
0600 permissions by ``osp auth login``).

Exit codes: 0 success, 64 network failure, 65 validation error
(including tombstones), 77 authorization, 70 server fault.  Server error
bodies carry a machine code; it is printed verbatim.
"""

from __future__ import annotations

import json
import os
import stat
import sys
from dataclasses import dataclass

import click
import httpx

from . import formats
from .citation import parse_citation, verify as verify_citation

EXIT_NETWORK = 64
EXIT_VALIDATION = 65
EXIT_SERVER = 70
EXIT_AUTH = 77

DEFAULT_SERVER = "http://127.0.0.1:8080"
CONFIG_PATH = os.path.expanduser("~/.config/osp/config.json")
DEFAULT_TOKEN_PATH = os.path.expanduser("~/.config/osp/token")

ACCEPT_ALIASES = {
    "csv": formats.MEDIA_CSV,
    "tsv": formats.MEDIA_TSV,
    "json": formats.MEDIA_JSON,
    "xml": formats.MEDIA_XML,
}


@dataclass
class CliConfig:
    server: str
    token_path: str
    output_format: str = "text"
    token_override: str | None = None

    def token(self) -> str | None:
        if self.token_override:
            return self.token_override
        if os.path.exists(self.token_path):
            mode = stat.S_IMODE(os.stat(self.token_path).st_mode)
            if mode & 0o077:
                click.echo(
                    f"warning: {self.token_path} is readable by others "
                    f"(mode {oct(mode)})", err=True,
                )
            with open(self.token_path, encoding="utf-8") as fh:
                return fh.read().strip() or None
        return None

    def headers(self) -> dict:
        token = self.token()
        return {"Authorization": f"Bearer {token}"} if token else {}


def _load_config(server_flag, token_file_flag, format_flag) -> CliConfig:
    file_cfg = {}
    if os.path.exists(CONFIG_PATH):
        try:
            with open(CONFIG_PATH, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, ValueError):
            file_cfg = {}
    server = server_flag or os.environ.get("OSP_SERVER") \
        or file_cfg.get("server") or DEFAULT_SERVER
    token_path = token_file_flag or file_cfg.get("token_path") or DEFAULT_TOKEN_PATH
    fmt = format_flag or file_cfg.get("format") or "text"
    return CliConfig(server.rstrip("/"), token_path, fmt,
                     os.environ.get("OSP_TOKEN"))


def _fail(message: str, exit_code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(exit_code)


def _request(cfg: CliConfig, method: str, path: str, *, ok=(200, 201, 202),
             **kwargs) -> httpx.Response:
    try:
        resp = httpx.request(method, cfg.server + path,
                             headers={**cfg.headers(), **kwargs.pop("headers", {})},
                             timeout=60.0, **kwargs)
    except httpx.HTTPError as exc:
        _fail(f"network failure talking to {cfg.server}: {exc}", EXIT_NETWORK)
    if resp.status_code in ok:
        return resp
    code, message = _error_parts(resp)
    if resp.status_code in (401, 403):
        _fail(f"{code}: {message}", EXIT_AUTH)
    if resp.status_code >= 500:
        _fail(f"{code}: {message}", EXIT_SERVER)
    _fail(f"{code}: {message}", EXIT_VALIDATION)


def _error_parts(resp: httpx.Response) -> tuple[str, str]:
    try:
        body = resp.json()
    except ValueError:
        return (f"HTTP{resp.status_code}", resp.text[:200])
    err = body.get("error", {})
    if err:
        return (err.get("code", f"HTTP{resp.status_code}"), err.get("message", ""))
    if "tombstone" in body:
        t = body["tombstone"]
        return ("Deaccessioned",
                f"tombstone: {t.get('title')} V{t.get('version')} "
                f"unf={t.get('unf')} reason={t.get('reason')}")
    if body.get("kind") == "tombstone":
        return ("Deaccessioned",
                f"tombstone: {body.get('title')} V{body.get('version')} "
                f"unf={body.get('unf')} reason={body.get('reason')}")
    return (f"HTTP{resp.status_code}", resp.text[:200])


def _emit(cfg: CliConfig, payload, text_lines=None):
    if cfg.output_format == "json":
        click.echo(json.dumps(payload, indent=2, ensure_ascii=False))
    elif text_lines is not None:
        for line in text_lines:
            click.echo(line)
    else:
        click.echo(json.dumps(payload, indent=2, ensure_ascii=False))


@click.group()
@click.option("--server", help="server base URL")
@click.option("--token-file", help="path to the bearer token file")
@click.option("--format", "output_format", type=click.Choice(["text", "json"]),
              default=None, help="output format")
@click.pass_context
def main(ctx, server, token_file, output_format):
    """Client for an open-science data repository server."""
    ctx.obj = _load_config(server, token_file, output_format)


# --- auth -----------------------------------------------------------------------

@main.group()
def auth():
    """Account registration and tokens."""


@auth.command("register")
@click.option("--principal", required=True)
@click.option("--password", required=True, prompt=False)
@click.pass_obj
def auth_register(cfg, principal, password):
    resp = _request(cfg, "POST", "/auth/register",
                    json={"principal": principal, "password": password})
    body = resp.json()
    code = body.get("code")
    if code:
        v = _request(cfg, "POST", "/auth/verify",
                     json={"principal": principal, "code": code})
        _emit(cfg, v.json(), [f"registered and verified {principal}"])
    else:
        _emit(cfg, body, [f"registered {principal}; verification code delivered"])


@auth.command("verify")
@click.option("--principal", required=True)
@click.option("--code", required=True)
@click.pass_obj
def auth_verify(cfg, principal, code):
    resp = _request(cfg, "POST", "/auth/verify",
                    json={"principal": principal, "code": code})
    _emit(cfg, resp.json(), [f"verified {principal}"])


@auth.command("login")
@click.option("--principal", required=True)
@click.option("--password", required=True)
@click.pass_obj
def auth_login(cfg, principal, password):
    resp = _request(cfg, "POST", "/auth/token",
                    json={"principal": principal, "password": password})
    token = resp.json()["token"]
    os.makedirs(os.path.dirname(cfg.token_path), exist_ok=True)
    fd = os.open(cfg.token_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(token + "\n")
    _emit(cfg, {"token_path": cfg.token_path},
          [f"token stored in {cfg.token_path}"])


@auth.command("two-factor")
@click.option("--code", help="one-time code; omit to request one")
@click.pass_obj
def auth_two_factor(cfg, code):
    if code is None:
        resp = _request(cfg, "POST", "/auth/two-factor/request", json={})
        body = resp.json()
        shown = body.get("code", "(delivered out of band)")
        _emit(cfg, body, [f"one-time code: {shown}"])
    else:
        resp = _request(cfg, "POST", "/auth/two-factor", json={"code": code})
        _emit(cfg, resp.json(), ["second factor confirmed"])


# --- studies ---------------------------------------------------------------------

@main.group()
def study():
    """Study management."""


@study.command("create")
@click.option("--title", required=True)
@click.option("--author", "authors", multiple=True, required=True,
              help="repeat for multiple authors, 'Family, Given'")
@click.option("--year", type=int)
@click.option("--description", default="")
@click.option("--keyword", "keywords", multiple=True)
@click.pass_obj
def study_create(cfg, title, authors, year, description, keywords):
    resp = _request(cfg, "POST", "/studies", json={
        "title": title, "authors": list(authors), "year": year,
        "description": description, "keywords": list(keywords),
    })
    body = resp.json()
    _emit(cfg, body, [body["handle"]])


# --- datasets ---------------------------------------------------------------------

@main.group()
def dataset():
    """Deposit, release, deaccession and fetch dataset versions."""


@dataset.command("deposit")
@click.option("--study", "handle", required=True)
@click.option("--name", required=True)
@click.option("--file", "path", required=True, type=click.Path(exists=True))
@click.option("--schema", help="comma list of name:type (numeric|text|boolean)")
@click.option("--level", type=click.IntRange(1, 6), default=1)
@click.option("--content-format", "fmt", type=click.Choice(list(ACCEPT_ALIASES)),
              default="csv")
@click.option("--owner-key", help="owner passphrase, required at level 6")
@click.pass_obj
def dataset_deposit(cfg, handle, name, path, schema, level, fmt, owner_key):
    with open(path, "rb") as fh:
        body = fh.read()
    params = {"level": level}
    if schema:
        params["schema"] = schema
    headers = {"Content-Type": ACCEPT_ALIASES[fmt]}
    if owner_key:
        headers["X-OSP-Owner-Key"] = owner_key
    resp = _request(cfg, "PUT", f"/studies/{handle}/datasets/{name}",
                    params=params, content=body, headers=headers)
    out = resp.json()
    _emit(cfg, out, [f"draft version {out['version']}"])


@dataset.command("release")
@click.option("--study", "handle", required=True)
@click.option("--name", required=True)
@click.option("--version", type=int, required=True)
@click.option("--owner-key")
@click.pass_obj
def dataset_release(cfg, handle, name, version, owner_key):
    headers = {"X-OSP-Owner-Key": owner_key} if owner_key else {}
    resp = _request(cfg, "POST", f"/studies/{handle}/datasets/{name}/release",
                    json={"version": version}, headers=headers)
    out = resp.json()
    _emit(cfg, out, [f"released V{out['version']}", out["unf"], out["citation"]])


@dataset.command("deaccession")
@click.option("--study", "handle", required=True)
@click.option("--name", required=True)
@click.option("--version", type=int, required=True)
@click.option("--reason", required=True)
@click.pass_obj
def dataset_deaccession(cfg, handle, name, version, reason):
    resp = _request(cfg, "POST",
                    f"/studies/{handle}/datasets/{name}/deaccession",
                    json={"version": version, "reason": reason})
    out = resp.json()
    _emit(cfg, out, [f"deaccessioned V{out['version']}"])


@dataset.command("fetch")
@click.option("--study", "handle", required=True)
@click.option("--name", required=True)
@click.option("--version", type=int)
@click.option("--accept", type=click.Choice(list(ACCEPT_ALIASES)), default="csv")
@click.option("--output", "-o", type=click.Path(), help="write body here")
@click.option("--owner-key")
@click.pass_obj
def dataset_fetch(cfg, handle, name, version, accept, output, owner_key):
    params = {"version": version} if version else {}
    headers = {"Accept": ACCEPT_ALIASES[accept]}
    if owner_key:
        headers["X-OSP-Owner-Key"] = owner_key
    resp = _request(cfg, "GET", f"/studies/{handle}/datasets/{name}",
                    params=params, headers=headers)
    if output:
        with open(output, "wb") as fh:
            fh.write(resp.content)
        click.echo(f"wrote {output} ({len(resp.content)} bytes), "
                   f"unf {resp.headers.get('X-OSP-UNF')}")
    else:
        sys.stdout.write(resp.text)


# --- citations ----------------------------------------------------------------------

@main.group()
def cite():
    """Mint and verify data citations."""


@cite.command("mint")
@click.option("--study", "handle", required=True)
@click.option("--dataset", "name", required=True)
@click.option("--version", type=int)
@click.pass_obj
def cite_mint(cfg, handle, name, version):
    params = {"version": version} if version else {}
    resp = _request(cfg, "GET", f"/studies/{handle}/datasets/{name}/citation",
                    params=params)
    body = resp.json()
    _emit(cfg, body, [body["citation"]])


@cite.command("verify")
@click.option("--citation", "citation_text", help="citation string")
@click.option("--citation-file", type=click.Path(exists=True))
@click.option("--content-file", required=True, type=click.Path(exists=True))
@click.option("--content-format", "fmt", type=click.Choice(list(ACCEPT_ALIASES)),
              default="csv")
@click.option("--schema", help="required for csv/tsv content")
@click.pass_obj
def cite_verify(cfg, citation_text, citation_file, content_file, fmt, schema):
    """Recompute the fingerprint locally and compare with the citation."""
    if citation_text is None:
        if citation_file is None:
            _fail("need --citation or --citation-file", EXIT_VALIDATION)
        with open(citation_file, encoding="utf-8") as fh:
            citation_text = fh.read().strip()
    try:
        citation = parse_citation(citation_text)
    except Exception as exc:
        _fail(f"ParseError: {exc}", EXIT_VALIDATION)
    declared = None
    if schema:
        declared = []
        for part in schema.split(","):
            n, _, t = part.partition(":")
            declared.append((n, t))
    with open(content_file, "rb") as fh:
        data = fh.read()
    try:
        table = formats.read_table(data, ACCEPT_ALIASES[fmt], declared)
    except Exception as exc:
        _fail(f"SchemaMismatch: {exc}", EXIT_VALIDATION)
    outcome = verify_citation(citation, table)
    _emit(cfg, {"outcome": outcome}, [outcome])
    if outcome != "verified":
        sys.exit(EXIT_VALIDATION)


# --- samples -------------------------------------------------------------------------

@main.group()
def sample():
    """Draw and fetch reproducible samples."""


@sample.command("draw")
@click.option("--study", "handle", required=True)
@click.option("--dataset", "name", required=True)
@click.option("--version", type=int, required=True)
@click.option("--method", type=click.Choice(
    ["uniform_without_replacement", "systematic", "head"]),
    default="uniform_without_replacement")
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--window", help="start:end row offsets")
@click.pass_obj
def sample_draw(cfg, handle, name, version, method, n, seed, window):
    body = {"version": version, "method": method, "n": n, "seed": seed}
    if window:
        start, _, end = window.partition(":")
        body["window"] = [int(start), int(end)]
    resp = _request(cfg, "POST", f"/studies/{handle}/datasets/{name}/samples",
                    json=body)
    out = resp.json()
    _emit(cfg, out, [out["sample_id"], out["sample_unf"]])


@sample.command("fetch")
@click.option("--study", "handle", required=True)
@click.option("--dataset", "name", required=True)
@click.option("--sample-id", required=True)
@click.option("--accept", type=click.Choice(list(ACCEPT_ALIASES)), default="csv")
@click.option("--output", "-o", type=click.Path())
@click.pass_obj
def sample_fetch(cfg, handle, name, sample_id, accept, output):
    resp = _request(cfg, "GET",
                    f"/studies/{handle}/datasets/{name}/samples/{sample_id}",
                    headers={"Accept": ACCEPT_ALIASES[accept]})
    if output:
        with open(output, "wb") as fh:
            fh.write(resp.content)
        click.echo(f"wrote {output}, unf {resp.headers.get('X-OSP-UNF')}")
    else:
        sys.stdout.write(resp.text)


# --- provenance -----------------------------------------------------------------------

@main.group()
def prov():
    """Record and query lineage."""


@prov.command("record")
@click.option("--input", "inputs", multiple=True)
@click.option("--output", "outputs", multiple=True, required=True)
@click.option("--tool", required=True, help="name@version")
@click.option("--source", default="execution_record",
              type=click.Choice(["ingest_metadata", "external_prov",
                                 "execution_record", "transformed_tool_log",
                                 "provenance_aware_tool"]))
@click.option("--agent")
@click.pass_obj
def prov_record(cfg, inputs, outputs, tool, source, agent):
    name, _, version = tool.partition("@")
    body = {"inputs": list(inputs), "outputs": list(outputs),
            "tool": [name, version or "0"], "source": source}
    if agent:
        body["agent"] = agent
    resp = _request(cfg, "POST", "/prov/records", json=body)
    out = resp.json()
    _emit(cfg, out, [out["record_id"]])


@prov.command("ancestors")
@click.option("--entity", required=True)
@click.pass_obj
def prov_ancestors(cfg, entity):
    resp = _request(cfg, "GET", f"/prov/entities/{entity}/ancestors")
    out = resp.json()
    _emit(cfg, out, out["ancestors"])


@prov.command("descendants")
@click.option("--entity", required=True)
@click.pass_obj
def prov_descendants(cfg, entity):
    resp = _request(cfg, "GET", f"/prov/entities/{entity}/descendants")
    out = resp.json()
    _emit(cfg, out, out["descendants"])


@prov.command("impacted")
@click.option("--tool", required=True)
@click.option("--version-predicate", default="*", help="e.g. '<2.0'")
@click.pass_obj
def prov_impacted(cfg, tool, version_predicate):
    resp = _request(cfg, "GET", "/prov/impacted",
                    params={"tool": tool, "version": version_predicate})
    out = resp.json()
    _emit(cfg, out, out["impacted"])


# --- jobs -----------------------------------------------------------------------------

@main.group()
def job():
    """Submit analytics jobs and collect results."""


@job.command("submit")
@click.option("--study", "handle", required=True)
@click.option("--dataset", "name", required=True)
@click.option("--version", type=int)
@click.option("--kind", required=True,
              type=click.Choice(["anova", "ols", "logistic", "kmeans"]))
@click.option("--params", "params_json", default="{}",
              help="JSON object of parameters")
@click.pass_obj
def job_submit(cfg, handle, name, version, kind, params_json):
    try:
        parameters = json.loads(params_json)
    except ValueError as exc:
        _fail(f"ParseError: bad --params JSON: {exc}", EXIT_VALIDATION)
    body = {"study": handle, "dataset": name, "kind": kind,
            "parameters": parameters}
    if version:
        body["version"] = version
    resp = _request(cfg, "POST", "/jobs", json=body)
    out = resp.json()
    _emit(cfg, out, [out["job_id"]])


@job.command("status")
@click.option("--id", "job_id", required=True)
@click.pass_obj
def job_status(cfg, job_id):
    resp = _request(cfg, "GET", f"/jobs/{job_id}")
    out = resp.json()
    lines = [f"{out['job_id']}: {out['state']}"]
    if "result" in out:
        lines.append(json.dumps(out["result"], ensure_ascii=False))
    if "error" in out:
        lines.append(f"{out['error']['code']}: {out['error']['message']}")
    _emit(cfg, out, lines)


@job.command("report")
@click.option("--id", "job_id", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_obj
def job_report(cfg, job_id, out_dir):
    """Write the job result as result.csv plus a figure into --out."""
    from .report import render_job_report

    resp = _request(cfg, "GET", f"/jobs/{job_id}")
    body = resp.json()
    written = render_job_report(body, out_dir)
    _emit(cfg, {"written": written}, [f"wrote {p}" for p in written])


# --- search ------------------------------------------------------------------------------

@main.command("search")
@click.argument("query")
@click.pass_obj
def search(cfg, query):
    resp = _request(cfg, "GET", "/search", params={"q": query})
    out = resp.json()
    lines = [
        f"{hit['handle']}  {hit['title']}  [{', '.join(hit['matched_fields'])}]"
        for hit in out["results"]
    ]
    _emit(cfg, out, lines or ["no matches"])


# --- server -------------------------------------------------------------------------------

@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
@click.option("--workers", "job_workers", type=int, default=2,
              help="analytics worker threads")
def serve(host, port, job_workers):
    """Run a repository server instance."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(workers=job_workers), host=host, port=port,
                log_level="warning")


if __name__ == "__main__":
    main()
