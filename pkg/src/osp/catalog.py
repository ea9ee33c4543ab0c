"""Studies, datasets, immutable versions, search, and storage advice.

Versioning rules: versions of a dataset are consecutive integers from 1;
a released version's content and fingerprint are frozen forever; the only
transitions are draft -> released -> deaccessioned.  Released versions
are never deleted, deaccession leaves a resolvable tombstone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from threading import Lock

from .errors import (
    AlreadyReleased,
    InvalidMetadata,
    NotDraft,
    NotReleased,
    UnknownDataset,
    UnknownIdentifier,
    UnknownStudy,
)
from .fingerprint import Fingerprint

DRAFT = "draft"
RELEASED = "released"
DEACCESSIONED = "deaccessioned"


@dataclass
class StudyMetadata:
    title: str
    authors: list[str]
    year: int | None = None
    description: str = ""
    keywords: list[str] = field(default_factory=list)

    def validate(self) -> "StudyMetadata":
        if not self.title.strip():
            raise InvalidMetadata("study title must not be empty")
        if not self.authors or not all(a.strip() for a in self.authors):
            raise InvalidMetadata("study needs at least one author")
        return self


@dataclass
class DatasetVersion:
    study_handle: str
    dataset_name: str
    version: int
    state: str
    privacy_level: int
    schema: object                       # [(name, type)] | {"kind": ...} descriptor
    content_kind: str                    # table | matrix | graph | bytes
    content_key: str
    variables: list[str] = field(default_factory=list)
    fingerprint: Fingerprint | None = None
    created_at: float = field(default_factory=time.time)
    released_at: float | None = None
    deaccession_reason: str | None = None

    @property
    def ref(self) -> tuple[str, str, int]:
        return (self.study_handle, self.dataset_name, self.version)


@dataclass
class Dataset:
    name: str
    versions: list[DatasetVersion] = field(default_factory=list)
    persistent_id: str | None = None     # minted at first release

    def version(self, number: int) -> DatasetVersion:
        if not 1 <= number <= len(self.versions):
            raise UnknownDataset(f"no version {number} of dataset {self.name!r}")
        return self.versions[number - 1]

    def latest(self, states=(RELEASED, DEACCESSIONED)) -> DatasetVersion | None:
        for v in reversed(self.versions):
            if v.state in states:
                return v
        return None


@dataclass
class Study:
    handle: str
    owner: str
    metadata: StudyMetadata
    datasets: dict[str, Dataset] = field(default_factory=dict)
    roles: dict[str, set[str]] = field(default_factory=dict)   # principal -> roles

    def has_role(self, principal: str, *roles: str) -> bool:
        if principal == self.owner:
            return True
        return bool(self.roles.get(principal, set()) & set(roles))


class HandleRegistry:
    """Mints ``prefix/sequence`` persistent ids and resolves them locally."""

    def __init__(self, prefix: str = "1902.1"):
        self.prefix = prefix
        self._lock = Lock()
        self._serial = 10000
        self._targets: dict[str, tuple[str, object]] = {}

    def mint(self, kind: str, target) -> str:
        with self._lock:
            self._serial += 1
            pid = f"{self.prefix}/{self._serial}"
            self._targets[pid] = (kind, target)
            return pid

    def lookup(self, pid: str) -> tuple[str, object]:
        try:
            return self._targets[pid]
        except KeyError:
            raise UnknownIdentifier(f"no persistent id {pid!r}") from None


class Catalog:
    """Bookkeeping for studies and dataset versions.

    Content handling (parsing, sealing, fingerprint freezing) lives with
    the repository engine; this class owns the state machine.
    """

    def __init__(self, registry: HandleRegistry):
        self.registry = registry
        self._lock = Lock()
        self._studies: dict[str, Study] = {}

    def create_study(self, metadata: StudyMetadata, owner: str) -> Study:
        metadata.validate()
        with self._lock:
            study = Study("", owner, metadata)
            study.handle = self.registry.mint("study", study)
            self._studies[study.handle] = study
            return study

    def study(self, handle: str) -> Study:
        try:
            return self._studies[handle]
        except KeyError:
            raise UnknownStudy(f"no study {handle!r}") from None

    def studies(self):
        return list(self._studies.values())

    def dataset(self, handle: str, name: str) -> Dataset:
        study = self.study(handle)
        try:
            return study.datasets[name]
        except KeyError:
            raise UnknownDataset(f"no dataset {name!r} in study {handle}") from None

    def new_draft(self, handle: str, name: str, **fields) -> DatasetVersion:
        with self._lock:
            study = self.study(handle)
            ds = study.datasets.setdefault(name, Dataset(name))
            version = DatasetVersion(
                study_handle=handle,
                dataset_name=name,
                version=len(ds.versions) + 1,
                state=DRAFT,
                **fields,
            )
            ds.versions.append(version)
            return version

    def mark_released(self, version: DatasetVersion, fingerprint: Fingerprint):
        with self._lock:
            if version.state == RELEASED:
                raise AlreadyReleased(
                    f"version {version.version} of {version.dataset_name!r} is already released"
                )
            if version.state != DRAFT:
                raise NotDraft(f"version is {version.state}, not a draft")
            ds = self.dataset(version.study_handle, version.dataset_name)
            if ds.persistent_id is None:
                ds.persistent_id = self.registry.mint(
                    "dataset", (version.study_handle, version.dataset_name)
                )
            version.state = RELEASED
            version.fingerprint = fingerprint
            version.released_at = time.time()

    def mark_deaccessioned(self, version: DatasetVersion, reason: str):
        if not reason or not reason.strip():
            raise InvalidMetadata("deaccession needs a non-empty reason")
        with self._lock:
            if version.state != RELEASED:
                raise NotReleased(f"version is {version.state}, not released")
            version.state = DEACCESSIONED
            version.deaccession_reason = reason

    # --- search ------------------------------------------------------------------

    def search(self, query: str, visible_to: str | None = None):
        """Case-insensitive keyword match over title/authors/keywords/variables.

        Every whitespace-separated keyword must appear in a field for the
        field to match.  Results order: match count descending, then
        handle ascending.  Draft-only studies show only to their owner or
        grantees.
        """
        keywords = [k.lower() for k in query.split()]
        if not keywords:
            return []
        results = []
        for study in self.studies():
            if not self._visible(study, visible_to):
                continue
            fields = {
                "title": study.metadata.title,
                "authors": "; ".join(study.metadata.authors),
                "keywords": " ".join(study.metadata.keywords),
                "variables": " ".join(
                    var
                    for ds in study.datasets.values()
                    for v in ds.versions
                    if self._version_visible(study, v, visible_to)
                    for var in v.variables
                ),
            }
            matched = [
                name for name, text in fields.items()
                if text and all(k in text.lower() for k in keywords)
            ]
            if matched:
                results.append((study, matched))
        results.sort(key=lambda pair: (-len(pair[1]), pair[0].handle))
        return results

    def _visible(self, study: Study, principal: str | None) -> bool:
        if any(
            v.state in (RELEASED, DEACCESSIONED)
            for ds in study.datasets.values()
            for v in ds.versions
        ):
            return True
        if not study.datasets:
            return True                    # a study with no data is just metadata
        return principal is not None and study.has_role(principal, "depositor", "curator")

    def _version_visible(self, study, version, principal) -> bool:
        if version.state in (RELEASED, DEACCESSIONED):
            return True
        return principal is not None and study.has_role(principal, "depositor", "curator")

    # --- invariant helpers ----------------------------------------------------------

    def released_or_deaccessioned_count(self) -> int:
        return sum(
            1
            for study in self.studies()
            for ds in study.datasets.values()
            for v in ds.versions
            if v.state in (RELEASED, DEACCESSIONED)
        )


# --- storage recommendation ------------------------------------------------------------

DATA_SHAPES = ("flat_records", "nested_records", "graph", "matrix", "blob")
INSERT_RATES = ("low", "high")
QUERY_KINDS = ("point_lookup", "range_scan", "traversal", "full_scan")


@dataclass(frozen=True)
class DataProfile:
    shape: str
    insert_rate: str = "low"
    expected_query: str = "full_scan"

    def __post_init__(self):
        if self.shape not in DATA_SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.insert_rate not in INSERT_RATES:
            raise ValueError(f"unknown insert rate {self.insert_rate!r}")
        if self.expected_query not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.expected_query!r}")


def recommend_store(profile: DataProfile) -> str:
    """Advise a store kind for a data profile.

    Fixed precedence: opaque blobs first, then graph-shaped data or
    traversal queries, then nested records, then matrices; flat records
    (and with them any high insert rates) land on the wide-column store.
    Advice only; nothing migrates.
    """
    if profile.shape == "blob":
        return "blob"
    if profile.shape == "graph" or profile.expected_query == "traversal":
        return "graph"
    if profile.shape == "nested_records":
        return "document"
    if profile.shape == "matrix":
        return "tabular"
    # Remaining shape is flat_records, the wide-column fit, which also
    # absorbs the high-insert-rate rule.
    return "wide_column"
