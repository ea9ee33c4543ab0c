import itertools

import pytest

from osp.catalog import (
    DataProfile,
    DATA_SHAPES,
    INSERT_RATES,
    QUERY_KINDS,
    StudyMetadata,
    recommend_store,
)
from osp.content import Column, TableContent
from osp.errors import (
    AlreadyReleased,
    InvalidMetadata,
    NotDraft,
    NotReleased,
    PermissionDenied,
    SchemaMismatch,
)
from osp.storage import STORE_KINDS


def table():
    return TableContent([
        Column("aid", "numeric", [1.0, 2.0, 3.0]),
        Column("country", "text", ["a", "b", "c"]),
    ])


def test_create_study_mints_unique_handles(repo):
    meta = StudyMetadata("Replication data for: Foreign Aid Shocks as a Cause "
                         "of Violent Armed Conflict", ["Nielsen, Richard"])
    s1 = repo.create_study(meta, "nielsen")
    s2 = repo.create_study(StudyMetadata("Other", ["A, B"]), "nielsen")
    assert s1.handle != s2.handle
    assert s1.handle.startswith("1902.1/")


def test_invalid_metadata(repo):
    with pytest.raises(InvalidMetadata):
        repo.create_study(StudyMetadata("", ["A, B"]), "x")
    with pytest.raises(InvalidMetadata):
        repo.create_study(StudyMetadata("T", []), "x")


def test_versions_are_consecutive(repo, study):
    v1 = repo.deposit(study.handle, "main", table(), 1, "carmen")
    v2 = repo.deposit(study.handle, "main", table(), 1, "carmen")
    assert (v1.version, v2.version) == (1, 2)
    assert v1.state == "draft"


def test_deposit_needs_permission(repo, study):
    with pytest.raises(PermissionDenied):
        repo.deposit(study.handle, "main", table(), 1, "stranger")
    repo.grant_role(study.handle, "helper", "depositor", "carmen")
    repo.deposit(study.handle, "main", table(), 1, "helper")


def test_deposit_schema_mismatch(repo, study):
    with pytest.raises(SchemaMismatch):
        repo.deposit(study.handle, "main", table(), 1, "carmen",
                     declared_schema=[("aid", "numeric")])


def test_release_freezes_fingerprint(repo, study):
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    released = repo.release(study.handle, "main", 1, "carmen")
    assert released.state == "released"
    assert released.fingerprint is not None
    assert repo.verify_stored(released)
    with pytest.raises(AlreadyReleased):
        repo.release(study.handle, "main", 1, "carmen")


def test_release_keeps_earlier_versions(repo, study):
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    repo.release(study.handle, "main", 2, "carmen")
    v1 = repo.catalog.dataset(study.handle, "main").version(1)
    assert v1.state == "draft"


def test_deaccession_rules(repo, study):
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    with pytest.raises(NotReleased):
        repo.deaccession(study.handle, "main", 1, "why", "carmen")
    repo.release(study.handle, "main", 1, "carmen")
    with pytest.raises(InvalidMetadata):
        repo.deaccession(study.handle, "main", 1, "  ", "carmen")
    done = repo.deaccession(study.handle, "main", 1, "superseded", "carmen")
    assert done.state == "deaccessioned"
    assert done.fingerprint is not None
    with pytest.raises(NotDraft):
        repo.release(study.handle, "main", 1, "carmen")


def test_tombstone_keeps_fingerprint(repo, study):
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    released = repo.release(study.handle, "main", 1, "carmen")
    unf = released.fingerprint.render()
    repo.deaccession(study.handle, "main", 1, "gone", "carmen")
    ds = repo.catalog.dataset(study.handle, "main")
    resolution = repo.resolve(ds.persistent_id)
    assert resolution.kind == "tombstone"
    assert resolution.payload["unf"] == unf
    assert resolution.payload["reason"] == "gone"


def test_search_over_fields(repo, study):
    repo.deposit(study.handle, "main", table(), 1, "carmen")
    repo.release(study.handle, "main", 1, "carmen")
    hits = repo.catalog.search("air quality")
    assert [s.handle for s, _ in hits] == [study.handle]
    assert "title" in hits[0][1]
    # variable names extracted at ingest are searchable
    hits = repo.catalog.search("country")
    assert hits and hits[0][1] == ["variables"]
    assert repo.catalog.search("zzzz-no-match") == []
    assert repo.catalog.search("") == []


def test_search_case_insensitive_and_order(repo):
    a = repo.create_study(StudyMetadata("Alpha water", ["X, Y"],
                                        keywords=["water"]), "o")
    b = repo.create_study(StudyMetadata("Beta water", ["X, Y"]), "o")
    hits = repo.catalog.search("WATER")
    assert [s.handle for s, _ in hits] == [a.handle, b.handle]


def test_draft_only_study_hidden_from_strangers(repo, study):
    repo.deposit(study.handle, "secret", table(), 1, "carmen")
    assert repo.catalog.search("air") == []
    assert [s.handle for s, _ in repo.catalog.search("air", "carmen")] == [study.handle]


def test_version_monotonicity_and_no_deletion(repo, study):
    for i in range(4):
        repo.deposit(study.handle, "main", table(), 1, "carmen")
    repo.release(study.handle, "main", 1, "carmen")
    repo.release(study.handle, "main", 3, "carmen")
    repo.deaccession(study.handle, "main", 1, "old", "carmen")
    ds = repo.catalog.dataset(study.handle, "main")
    assert [v.version for v in ds.versions] == [1, 2, 3, 4]
    assert repo.catalog.released_or_deaccessioned_count() == 2


def test_metadata_export_flat_fields(repo, study):
    text = repo.export_study_metadata(study.handle)
    lines = text.strip().split("\n")
    assert f"identifier: {study.handle}" in lines
    assert "title: Air quality time series" in lines
    assert "creator: Reyes, Carmen" in lines
    assert "date: 2012" in lines


# --- storage recommendation ------------------------------------------------------

def test_recommendation_examples():
    assert recommend_store(DataProfile("flat_records", "high")) == "wide_column"
    assert recommend_store(DataProfile("nested_records")) == "document"
    assert recommend_store(DataProfile("graph", "low", "traversal")) == "graph"
    assert recommend_store(DataProfile("matrix", "low", "range_scan")) == "tabular"
    assert recommend_store(DataProfile("blob")) == "blob"


def test_recommendation_total_over_enumeration():
    for shape, rate, query in itertools.product(DATA_SHAPES, INSERT_RATES,
                                                QUERY_KINDS):
        kind = recommend_store(DataProfile(shape, rate, query))
        assert kind in STORE_KINDS
        if shape == "blob":
            assert kind == "blob"
        if shape == "graph" or query == "traversal":
            assert kind in ("graph", "blob")
        if shape == "flat_records" and query != "traversal":
            assert kind == "wide_column"


def test_profile_enumerations_enforced():
    with pytest.raises(ValueError):
        DataProfile("spreadsheet")
    with pytest.raises(ValueError):
        DataProfile("blob", "medium")
