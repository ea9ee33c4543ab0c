import random

import pytest
from scipy import stats as scipy_stats

from osp.content import Column, TableContent
from osp.errors import NotReleased, SampleTooLarge, SourceDrift, UnknownSample
from osp.fingerprint import fingerprint_table
from osp.sampler import select_indices
from osp.secure_views import Comparison


def numbered_table(n):
    return TableContent([
        Column("idx", "numeric", list(range(n))),
        Column("label", "text", [f"row{i}" for i in range(n)]),
    ])


def released(repo, study, n=20, name="main"):
    repo.deposit(study.handle, name, numbered_table(n), 1, "carmen")
    return repo.release(study.handle, name, 1, "carmen")


# --- index selection ------------------------------------------------------------

def test_selection_exactness_and_bounds():
    rng = random.Random(1)
    for _ in range(300):
        scope = rng.randint(1, 200)
        n = rng.randint(0, scope)
        method = rng.choice(["uniform_without_replacement", "systematic", "head"])
        picked = select_indices(method, n, rng.getrandbits(64), scope)
        assert len(picked) == n
        assert len(set(picked)) == n
        assert picked == sorted(picked)
        assert all(0 <= i < scope for i in picked)


def test_head_and_full_selection():
    assert select_indices("head", 3, 99, 10) == [0, 1, 2]
    assert select_indices("uniform_without_replacement", 10, 7, 10) == list(range(10))
    assert select_indices("systematic", 10, 7, 10) == list(range(10))
    assert select_indices("head", 0, 0, 10) == []


def test_systematic_plain_stride():
    # With start + (n-1)*step inside the scope the plain arithmetic
    # progression is returned untouched.
    assert select_indices("systematic", 3, 4, 12) == [0, 4, 8]
    assert select_indices("systematic", 3, 5, 12) == [1, 5, 9]


def test_systematic_wraps_to_keep_exactness():
    picked = select_indices("systematic", 3, 3, 10)   # step 4, start 3 -> wraps
    assert len(picked) == 3 and len(set(picked)) == 3


def test_window_offsets():
    picked = select_indices("uniform_without_replacement", 5, 3, 10, offset=50)
    assert all(50 <= i < 60 for i in picked)


def test_too_large():
    with pytest.raises(SampleTooLarge):
        select_indices("head", 11, 0, 10)


def test_selection_deterministic():
    a = select_indices("uniform_without_replacement", 25, 777, 1000)
    b = select_indices("uniform_without_replacement", 25, 777, 1000)
    assert a == b
    c = select_indices("uniform_without_replacement", 25, 778, 1000)
    assert a != c


# --- engine draw / re-extract ------------------------------------------------------

def test_draw_requires_release(repo, study):
    repo.deposit(study.handle, "main", numbered_table(5), 1, "carmen")
    with pytest.raises(NotReleased):
        repo.draw_sample(study.handle, "main", 1, "head", 2, 0)


def test_draw_determinism(repo, study):
    released(repo, study)
    d1, s1 = repo.draw_sample(study.handle, "main", 1,
                              "uniform_without_replacement", 7, 31)
    d2, s2 = repo.draw_sample(study.handle, "main", 1,
                              "uniform_without_replacement", 7, 31)
    assert d1.selected_indices == d2.selected_indices
    assert d1.sample_fingerprint == d2.sample_fingerprint
    assert [s1.row(i) for i in range(7)] == [s2.row(i) for i in range(7)]


def test_full_draw_equals_dataset(repo, study):
    version = released(repo, study, n=9)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1,
                                          "uniform_without_replacement", 9, 5)
    assert descriptor.selected_indices == tuple(range(9))
    assert descriptor.sample_fingerprint == version.fingerprint
    assert sample.row_count == 9


def test_empty_draw(repo, study):
    released(repo, study)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1, "head", 0, 0)
    assert sample.row_count == 0
    empty = TableContent([Column("idx", "numeric", []), Column("label", "text", [])])
    assert descriptor.sample_fingerprint == fingerprint_table(empty)


def test_subset_rows_identical(repo, study):
    released(repo, study, n=30)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1,
                                          "uniform_without_replacement", 10, 77)
    source = numbered_table(30)
    for pos, idx in enumerate(descriptor.selected_indices):
        assert sample.row(pos) == source.row(idx)


def test_window_containment(repo, study):
    released(repo, study, n=40)
    descriptor, _ = repo.draw_sample(study.handle, "main", 1,
                                     "uniform_without_replacement", 5, 3,
                                     window=(10, 25))
    assert all(10 <= i < 25 for i in descriptor.selected_indices)
    with pytest.raises(SampleTooLarge):
        repo.draw_sample(study.handle, "main", 1, "head", 16, 0, window=(10, 25))


def test_reextract_roundtrip(repo, study):
    released(repo, study, n=25)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1,
                                          "systematic", 6, 11)
    again = repo.reextract(descriptor.sample_id)
    assert fingerprint_table(again) == descriptor.sample_fingerprint
    assert [again.row(i) for i in range(6)] == [sample.row(i) for i in range(6)]


def test_reextract_unknown(repo):
    with pytest.raises(UnknownSample):
        repo.reextract("smp-404")


def test_reextract_detects_source_drift(repo, study):
    version = released(repo, study)
    descriptor, _ = repo.draw_sample(study.handle, "main", 1, "head", 3, 0)
    # Tamper with the stored source bytes behind the engine's back.
    from osp import privacy

    tampered = numbered_table(20)
    tampered.columns[0].values[5] = 999
    data, _, _, _ = repo._serialize_content(tampered)
    blob = privacy.seal(version.privacy_level, data, repo.keys)
    repo.store.put(version.content_key, blob.to_bytes())
    with pytest.raises(SourceDrift):
        repo.reextract(descriptor.sample_id)


def test_unmaterialized_indices_reextract(repo, study):
    repo.index_bound = 4                       # force index elision
    released(repo, study, n=30)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1,
                                          "uniform_without_replacement", 10, 5)
    assert descriptor.selected_indices is None
    again = repo.reextract(descriptor.sample_id)
    assert fingerprint_table(again) == descriptor.sample_fingerprint


def test_sample_through_view_uses_masked_numbering(repo, study):
    released(repo, study, n=10)
    view = repo.define_view(study.handle, "main", "carmen",
                            predicate=[Comparison("idx", ">=", 5)])
    from osp.secure_views import as_effective

    eff = as_effective(view)
    descriptor, sample = repo.draw_sample(study.handle, "main", 1, "head", 3, 0,
                                          view=eff)
    # Indices refer to the post-filter numbering.
    assert descriptor.selected_indices == (0, 1, 2)
    assert sample.column("idx").values == [5, 6, 7]
    again = repo.reextract(descriptor.sample_id)
    assert again.column("idx").values == [5, 6, 7]


def test_citation_closure(repo, study):
    released(repo, study, n=12)
    descriptor, _ = repo.draw_sample(study.handle, "main", 1,
                                     "uniform_without_replacement", 4, 2)
    citation = repo.mint_sample_citation(descriptor.sample_id)
    pid = citation.persistent_url.removeprefix(repo.resolver_base)
    resolution = repo.resolve(pid)
    assert resolution.kind == "sample"
    sample = repo.reextract(resolution.payload["sample_id"])
    from osp.citation import verify

    assert verify(citation, sample) == "verified"


def test_uniformity_chi_square(repo, study):
    released(repo, study, n=10)
    trials = 10_000
    freqs = repo.sample_uniformity_check(study.handle, "main", 1, n=1,
                                         trials=trials)
    assert all(0.08 <= f <= 0.12 for f in freqs)
    expected = trials / 10
    chi2 = sum((f * trials - expected) ** 2 / expected for f in freqs)
    assert chi2 < scipy_stats.chi2.ppf(0.999, df=9)


def test_uniformity_forced_cases(repo, study):
    released(repo, study, n=2, name="two")
    freqs = repo.sample_uniformity_check(study.handle, "two", 1, n=2, trials=50)
    assert freqs == [1.0, 1.0]
