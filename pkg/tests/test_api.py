import json
import time

import pytest
from fastapi.testclient import TestClient

from osp.api import create_app
from osp.content import Column, TableContent
from osp.fingerprint import Fingerprint, fingerprint_table
from osp.formats import MEDIA_JSON, MEDIA_TSV, MEDIA_XML, read_table


@pytest.fixture
def app():
    application = create_app(workers=1)
    yield application
    application.state.repo.close()


@pytest.fixture
def client(app):
    return TestClient(app)


def make_account(client, name="alice", password="pw123456"):
    code = client.post("/auth/register",
                       json={"principal": name, "password": password}).json()["code"]
    client.post("/auth/verify", json={"principal": name, "code": code})
    token = client.post("/auth/token",
                        json={"principal": name, "password": password}).json()["token"]
    return {"Authorization": f"Bearer {token}"}


def elevate_two_factor(client, headers):
    code = client.post("/auth/two-factor/request", headers=headers).json()["code"]
    client.post("/auth/two-factor", json={"code": code}, headers=headers)


def make_study(client, headers, **overrides):
    body = {"title": "Traffic sensors", "authors": ["Kim, Sona"],
            "year": 2015, "keywords": ["traffic"]}
    body.update(overrides)
    return client.post("/studies", json=body, headers=headers).json()["handle"]


CSV = "speed,road\n50,main\n61,\"ring\"\n70,main\n"


def deposit_and_release(client, headers, handle, name="main", level=1, csv=CSV,
                        schema="speed:numeric,road:text"):
    r = client.put(f"/studies/{handle}/datasets/{name}?schema={schema}&level={level}",
                   content=csv, headers={**headers, "Content-Type": "text/csv"})
    assert r.status_code == 201, r.text
    r = client.post(f"/studies/{handle}/datasets/{name}/release",
                    json={"version": 1}, headers=headers)
    assert r.status_code == 200, r.text
    return r.json()


# --- auth -------------------------------------------------------------------------

def test_token_flow_and_bad_credentials(client):
    headers = make_account(client)
    assert client.post("/studies", json={"title": "T", "authors": ["A, B"]},
                       headers=headers).status_code == 201
    r = client.post("/auth/token", json={"principal": "alice", "password": "wrong"})
    assert r.status_code == 401
    r = client.post("/studies", json={"title": "T", "authors": ["A, B"]})
    assert r.status_code == 401
    r = client.post("/studies", json={"title": "T", "authors": ["A, B"]},
                    headers={"Authorization": "Bearer bogus"})
    assert r.status_code == 401


def test_level1_anonymous_read(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    released = deposit_and_release(client, headers, handle)
    r = client.get(f"/studies/{handle}/datasets/main")
    assert r.status_code == 200
    assert r.headers["X-OSP-UNF"] == released["unf"]


def test_level2_needs_verified_registration(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    deposit_and_release(client, headers, handle, level=2)
    r = client.get(f"/studies/{handle}/datasets/main")
    assert r.status_code == 401                       # anonymous: authenticate first
    # unverified principal
    client.post("/auth/register", json={"principal": "newbie", "password": "x1y2z3"})
    token = client.post("/auth/token",
                        json={"principal": "newbie", "password": "x1y2z3"}).json()["token"]
    r = client.get(f"/studies/{handle}/datasets/main",
                   headers={"Authorization": f"Bearer {token}"})
    assert r.status_code == 403
    assert r.json()["error"]["missing"] == ["verified_registration"]
    # a verified account passes
    r = client.get(f"/studies/{handle}/datasets/main", headers=make_account(client, "vera"))
    assert r.status_code == 200


def test_level5_full_ladder(client):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    deposit_and_release(client, owner, handle, level=5)
    reader = make_account(client, "reader")
    r = client.get(f"/studies/{handle}/datasets/main", headers=reader)
    assert r.status_code == 403
    missing = set(r.json()["error"]["missing"])
    assert missing == {"two_factor", "approval", "dua_signed"}
    assert "rows" not in r.text and "speed" not in json.dumps(r.json())
    client.post(f"/studies/{handle}/approvals",
                json={"principal": "reader", "kind": "curator"}, headers=owner)
    client.post(f"/studies/{handle}/datasets/main/dua",
                json={"action": "signed"}, headers=reader)
    r = client.get(f"/studies/{handle}/datasets/main", headers=reader)
    assert r.status_code == 403
    assert r.json()["error"]["missing"] == ["two_factor"]
    elevate_two_factor(client, reader)
    r = client.get(f"/studies/{handle}/datasets/main", headers=reader)
    assert r.status_code == 200


def test_level6_owner_key_dance(client):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    r = client.put(f"/studies/{handle}/datasets/vault?schema=x:numeric&level=6",
                   content="x\n1\n2\n",
                   headers={**owner, "Content-Type": "text/csv",
                            "X-OSP-Owner-Key": "hunter2hunter2"})
    assert r.status_code == 201
    r = client.post(f"/studies/{handle}/datasets/vault/release",
                    json={"version": 1}, headers=owner)
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "MissingOwnerKey"
    r = client.post(f"/studies/{handle}/datasets/vault/release",
                    json={"version": 1},
                    headers={**owner, "X-OSP-Owner-Key": "hunter2hunter2"})
    assert r.status_code == 200
    client.post(f"/studies/{handle}/approvals",
                json={"principal": "owner", "kind": "curator"}, headers=owner)
    client.post(f"/studies/{handle}/datasets/vault/dua",
                json={"action": "accepted"}, headers=owner)
    r = client.get(f"/studies/{handle}/datasets/vault", headers=owner)
    assert r.status_code == 400                       # platform key alone: sealed
    r = client.get(f"/studies/{handle}/datasets/vault",
                   headers={**owner, "X-OSP-Owner-Key": "hunter2hunter2"})
    assert r.status_code == 200


# --- content negotiation -------------------------------------------------------------

def test_negotiation_variants(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    released = deposit_and_release(client, headers, handle)
    base = Fingerprint.parse(released["unf"])
    schema = [("speed", "numeric"), ("road", "text")]
    for accept, media in [(None, "text/csv"),
                          ("text/tab-separated-values", MEDIA_TSV),
                          ("application/xml", MEDIA_XML),
                          ("application/json", MEDIA_JSON)]:
        req_headers = {} if accept is None else {"Accept": accept}
        r = client.get(f"/studies/{handle}/datasets/main", headers=req_headers)
        assert r.status_code == 200
        assert r.headers["content-type"].startswith(media)
        table = read_table(r.content, media, schema)
        assert fingerprint_table(table) == base
    r = client.get(f"/studies/{handle}/datasets/main",
                   headers={"Accept": "application/pdf"})
    assert r.status_code == 406
    assert r.json()["error"]["supported"]


# --- errors and lifecycle -----------------------------------------------------------------

def test_unknown_dataset_404(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    assert client.get(f"/studies/{handle}/datasets/nope").status_code == 404
    assert client.get("/studies/1902.1/99999/datasets/x").status_code == 404


def test_deaccession_410_tombstone(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    released = deposit_and_release(client, headers, handle)
    r = client.post(f"/studies/{handle}/datasets/main/deaccession",
                    json={"version": 1, "reason": "withdrawn"}, headers=headers)
    assert r.status_code == 200
    r = client.get(f"/studies/{handle}/datasets/main")
    assert r.status_code == 410
    tomb = r.json()["tombstone"]
    assert tomb["unf"] == released["unf"]
    assert tomb["reason"] == "withdrawn"


def test_resolve_routes(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    released = deposit_and_release(client, headers, handle)
    pid = released["citation"].split(" ")[-4].removeprefix("/resolve/")
    r = client.get(f"/resolve/{pid}")
    assert r.status_code == 200
    assert r.json()["kind"] == "dataset_landing"
    assert client.get("/resolve/1902.1/424242").status_code == 404


def test_matrix_range_and_bounds(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    csv = "a,b,c\n" + "\n".join(f"{i},{i+1},{i+2}" for i in range(10)) + "\n"
    deposit_and_release(client, headers, handle, csv=csv,
                        schema="a:numeric,b:numeric,c:numeric")
    r = client.get(f"/studies/{handle}/datasets/main/matrix/2..5/1..2")
    assert r.status_code == 200
    table = read_table(r.content, "text/csv", [("b", "numeric"), ("c", "numeric")])
    assert table.row_count == 4
    assert table.column("b").values == [3, 4, 5, 6]
    assert Fingerprint.parse(r.headers["X-OSP-UNF"]) == fingerprint_table(table)
    # trailing slash variant
    assert client.get(f"/studies/{handle}/datasets/main/matrix/2..5/1..2/").status_code == 200
    assert client.get(f"/studies/{handle}/datasets/main/matrix/0..0/0..0").status_code == 200
    assert client.get(f"/studies/{handle}/datasets/main/matrix/5..2/0..1").status_code == 416
    assert client.get(f"/studies/{handle}/datasets/main/matrix/0..10/0..1").status_code == 416
    assert client.get(f"/studies/{handle}/datasets/main/matrix/0..1/0..7").status_code == 416
    assert client.get(f"/studies/{handle}/datasets/main/matrix/x..1/0..1").status_code == 404


def test_samples_over_http(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    deposit_and_release(client, headers, handle)
    r = client.post(f"/studies/{handle}/datasets/main/samples",
                    json={"version": 1, "method": "uniform_without_replacement",
                          "n": 2, "seed": 11}, headers=headers)
    assert r.status_code == 201
    descriptor = r.json()
    r = client.get(f"/studies/{handle}/datasets/main/samples/{descriptor['sample_id']}")
    assert r.status_code == 200
    assert r.headers["X-OSP-UNF"] == descriptor["sample_unf"]
    table = read_table(r.content, "text/csv", [("speed", "numeric"), ("road", "text")])
    assert fingerprint_table(table).render() == descriptor["sample_unf"]
    assert client.get(
        f"/studies/{handle}/datasets/main/samples/smp-404").status_code == 404
    r = client.get(
        f"/studies/{handle}/datasets/main/samples/{descriptor['sample_id']}/citation")
    assert r.status_code == 200
    assert descriptor["sample_unf"] in r.json()["citation"]


def test_sample_source_drift_409(client, app):
    headers = make_account(client)
    handle = make_study(client, headers)
    deposit_and_release(client, headers, handle)
    r = client.post(f"/studies/{handle}/datasets/main/samples",
                    json={"version": 1, "method": "head", "n": 1, "seed": 0},
                    headers=headers)
    sample_id = r.json()["sample_id"]
    repo = app.state.repo
    version = repo.catalog.dataset(handle, "main").version(1)
    from osp import privacy

    altered = TableContent([Column("speed", "numeric", [1.0]),
                            Column("road", "text", ["x"])])
    data, _, _, _ = repo._serialize_content(altered)
    repo.store.put(version.content_key,
                   privacy.seal(1, data, repo.keys).to_bytes())
    r = client.get(f"/studies/{handle}/datasets/main/samples/{sample_id}")
    assert r.status_code == 409
    assert r.json()["error"]["code"] == "SourceDrift"


# --- views and jobs over HTTP -----------------------------------------------------------------

def test_views_shape_responses(client):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    csv = "age,name\n10,ana\n20,bo\n30,cy\n"
    r = client.put(f"/studies/{handle}/datasets/people?schema=age:numeric,name:text",
                   content=csv, headers={**owner, "Content-Type": "text/csv"})
    assert r.status_code == 201
    # curator scopes a view BEFORE release, so no public grant is minted
    r = client.post("/views", json={
        "dataset": {"study": handle, "name": "people"},
        "columns": ["age"],
        "predicate": [{"column": "age", "op": ">", "constant": 15}],
    }, headers=owner)
    view_id = r.json()["view_id"]
    client.post("/grants", json={"subject": "public", "view_id": view_id,
                                 "capabilities": ["read"]}, headers=owner)
    client.post(f"/studies/{handle}/datasets/people/release",
                json={"version": 1}, headers=owner)
    r = client.get(f"/studies/{handle}/datasets/people")
    assert r.status_code == 200
    table = read_table(r.content, "text/csv", [("age", "numeric")])
    assert table.column("age").values == [20, 30]
    unf = Fingerprint.parse(r.headers["X-OSP-UNF"])
    assert unf == fingerprint_table(table)


def test_job_routes(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    csv = "x,y\n" + "\n".join(f"{i},{2 * i + 1}" for i in range(30)) + "\n"
    deposit_and_release(client, headers, handle, csv=csv,
                        schema="x:numeric,y:numeric")
    r = client.post("/jobs", json={
        "study": handle, "dataset": "main", "kind": "ols",
        "parameters": {"response": "y", "predictors": ["x"]},
    }, headers=headers)
    assert r.status_code == 202
    job_id = r.json()["job_id"]
    for _ in range(100):
        body = client.get(f"/jobs/{job_id}").json()
        if body["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert body["state"] == "done"
    assert abs(body["result"]["coefficients"][1] - 2.0) < 1e-10
    assert client.get("/jobs/job-404").status_code == 404


def test_job_requires_analyze_capability(client, app):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    csv = "x\n1\n2\n3\n4\n5\n"
    r = client.put(f"/studies/{handle}/datasets/d?schema=x:numeric",
                   content=csv, headers={**owner, "Content-Type": "text/csv"})
    view_id = client.post("/views", json={
        "dataset": {"study": handle, "name": "d"},
    }, headers=owner).json()["view_id"]
    client.post("/grants", json={"subject": "public", "view_id": view_id,
                                 "capabilities": ["read"]}, headers=owner)
    client.post(f"/studies/{handle}/datasets/d/release",
                json={"version": 1}, headers=owner)
    other = make_account(client, "other")
    r = client.post("/jobs", json={"study": handle, "dataset": "d",
                                   "kind": "kmeans",
                                   "parameters": {"columns": ["x"], "k": 2}},
                    headers=other)
    assert r.status_code == 403


# --- provenance routes ---------------------------------------------------------------------------

def test_prov_routes(client):
    headers = make_account(client)
    r = client.post("/prov/records", json={
        "inputs": ["raw"], "outputs": ["clean"],
        "tool": ["scrubber", "1.0"], "source": "execution_record",
    }, headers=headers)
    assert r.status_code == 201
    r = client.post("/prov/documents",
                    content="entity clean\nentity final\nwasDerivedFrom final clean\n",
                    headers=headers)
    assert r.status_code == 201
    assert client.get("/prov/entities/final/ancestors").json()["ancestors"] == \
        ["clean", "raw"]
    assert client.get("/prov/entities/raw/descendants").json()["descendants"] == \
        ["clean", "final"]
    tools = client.get("/prov/entities/final/tools").json()["tools"]
    assert {"name": "scrubber", "version": "1.0"} in tools
    r = client.get("/prov/impacted", params={"tool": "scrubber", "version": "<2.0"})
    assert set(r.json()["impacted"]) == {"clean", "final"}
    assert client.get("/prov/entities/ghost/ancestors").status_code == 404
    exported = client.get("/prov/export").text
    assert "wasDerivedFrom final clean" in exported


def test_release_registers_provenance_entity(client, app):
    headers = make_account(client)
    handle = make_study(client, headers)
    deposit_and_release(client, headers, handle)
    entity = f"osp:{handle}/main/v1"
    node = app.state.repo.provenance.node(entity)
    assert node.kind == "entity"
    assert node.attributes["source"] == "ingest_metadata"


# --- batch ------------------------------------------------------------------------------------------

def test_batch_per_item_independence(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    table_doc = {"columns": [{"name": "x", "type": "numeric"}],
                 "rows": [[1], [2]]}
    r = client.post("/batch", json={"operations": [
        {"op": "deposit", "study": handle, "dataset": "b1", "table": table_doc},
        {"op": "release", "study": handle, "dataset": "missing", "version": 1},
        {"op": "deposit", "study": handle, "dataset": "b2", "table": table_doc},
    ]}, headers=headers)
    assert r.status_code == 200
    receipt = r.json()["receipt"]
    assert [item["status"] for item in receipt] == ["ok", "error", "ok"]
    assert receipt[1]["code"] == "UnknownDataset"
    r = client.post("/batch", json={"operations": [
        {"op": "release", "study": handle, "dataset": "b1", "version": 1},
        {"op": "draw_sample", "study": handle, "dataset": "b1", "version": 1,
         "n": 1, "seed": 4},
    ]}, headers=headers)
    receipt = r.json()["receipt"]
    assert [item["status"] for item in receipt] == ["ok", "ok"]
    assert receipt[1]["result"]["requested_n"] == 1
    assert client.post("/batch", json={"operations": []}).status_code == 401


def test_batch_sampling_respects_gates(client):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    deposit_and_release(client, owner, handle, level=3)
    outsider = make_account(client, "outsider")
    r = client.post("/batch", json={"operations": [
        {"op": "draw_sample", "study": handle, "dataset": "main",
         "version": 1, "n": 1, "seed": 0},
    ]}, headers=outsider)
    item = r.json()["receipt"][0]
    assert item["status"] == "error"
    assert item["code"] == "PermissionDenied"


def test_landing_hides_drafts_from_strangers(client):
    owner = make_account(client, "owner")
    handle = make_study(client, owner)
    client.put(f"/studies/{handle}/datasets/wip?schema=x:numeric",
               content="x\n1\n", headers={**owner, "Content-Type": "text/csv"})
    public = client.get(f"/studies/{handle}").json()
    assert public["datasets"] == {}
    mine = client.get(f"/studies/{handle}", headers=owner).json()
    assert mine["datasets"]["wip"][0]["state"] == "draft"


def test_batch_unknown_op(client):
    headers = make_account(client)
    r = client.post("/batch", json={"operations": [{"op": "explode"}]},
                    headers=headers)
    assert r.json()["receipt"][0]["code"] == "ParseError"


# --- study metadata export ----------------------------------------------------------------------------

def test_metadata_export_route(client):
    headers = make_account(client)
    handle = make_study(client, headers)
    r = client.get(f"/studies/{handle}/metadata")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("text/plain")
    assert f"identifier: {handle}" in r.text
    assert "creator: Kim, Sona" in r.text
