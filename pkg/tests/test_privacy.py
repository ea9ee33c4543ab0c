import itertools
import os

import pytest

from osp.errors import DecryptFailure, IncompleteAnswers, MissingOwnerKey, PermissionDenied
from osp.privacy import (
    ANONYMOUS,
    AccessContext,
    KeyRegistry,
    LEVELS,
    SealedBlob,
    access_decision,
    classify,
    seal,
    unseal,
    unseal_for,
)

DATASET = ("1902.1/1", "main")

# The policy matrix as printed, encoded independently of the production
# constants: (storage, requirement labels).
PRINTED_MATRIX = {
    1: ("clear", set()),
    2: ("clear", {"verified"}),
    3: ("encrypted", {"password", "registered", "approval", "dua"}),
    4: ("encrypted", {"password", "registered", "approval", "dua_signed"}),
    5: ("encrypted", {"two_factor", "registered", "approval", "dua_signed"}),
    6: ("double_encrypted", {"password", "registered", "approval", "dua"}),
}


def make_ctx(verified=False, password=False, two_factor=False,
             approval=False, dua="none"):
    creds = set()
    if verified:
        creds.add("verified_registration")
    if password:
        creds.add("password")
    if two_factor:
        creds.add("two_factor")
    return AccessContext(
        "tester",
        frozenset(creds),
        frozenset({(DATASET[0], "curator")} if approval else set()),
        ((DATASET, dua),) if dua != "none" else (),
    )


def printed_allows(level, verified, password, two_factor, approval, dua):
    """Independent re-encoding of the printed table rows."""
    storage, reqs = PRINTED_MATRIX[level]
    checks = {
        "verified": verified,
        "password": password or two_factor,   # a second factor implies a password
        "registered": verified,
        "approval": approval,
        "dua": dua in ("accepted", "signed"),
        "dua_signed": dua == "signed",
        "two_factor": two_factor,
    }
    return all(checks[r] for r in reqs)


def test_matrix_exhaustive():
    combos = itertools.product(
        [False, True], [False, True], [False, True], [False, True],
        ["none", "accepted", "signed"],
    )
    checked = 0
    for verified, password, two_factor, approval, dua in combos:
        ctx = make_ctx(verified, password, two_factor, approval, dua)
        for level in range(1, 7):
            expected = printed_allows(level, verified, password, two_factor,
                                      approval, dua)
            decision = access_decision(level, ctx, DATASET)
            assert bool(decision) == expected, (level, verified, password,
                                                two_factor, approval, dua)
            checked += 1
    assert checked == 2 * 2 * 2 * 2 * 3 * 6


def test_level_one_is_open():
    assert access_decision(1, ANONYMOUS, DATASET).allowed


def test_level_five_missing_two_factor_only():
    ctx = make_ctx(verified=True, password=True, approval=True, dua="signed")
    decision = access_decision(5, ctx, DATASET)
    assert not decision.allowed
    assert decision.missing == frozenset({"two_factor"})


def test_level_three_allows_accepted_dua():
    ctx = make_ctx(verified=True, password=True, approval=True, dua="accepted")
    assert access_decision(3, ctx, DATASET).allowed


def test_row_six_as_printed_uses_password_not_two_factor():
    # Reproduced verbatim from the printed matrix: row 6 lists a password
    # and an unsigned agreement even though it sits above row 5.
    assert "two_factor" not in LEVELS[6].requirements
    assert "dua_signed" not in LEVELS[6].requirements
    ctx = make_ctx(verified=True, password=True, approval=True, dua="accepted")
    assert access_decision(6, ctx, DATASET).allowed


def test_deny_lists_exactly_missing():
    decision = access_decision(4, make_ctx(password=True), DATASET)
    assert decision.missing == frozenset({"registered", "approval", "dua_signed"})


def test_two_factor_implies_password():
    ctx = AccessContext("t", frozenset({"two_factor"}))
    assert "password" in ctx.credentials


# --- classification wizard -----------------------------------------------------

def test_classify_examples():
    assert classify({"identifiable": False, "harm": "none", "staff_blind": False}).level == 1
    assert classify({"identifiable": True, "harm": "none", "staff_blind": False}).level == 2
    assert classify({"identifiable": True, "harm": "embarrassment", "staff_blind": False}).level == 3
    assert classify({"identifiable": True, "harm": "civil_regulated", "staff_blind": False}).level == 4
    assert classify({"identifiable": True, "harm": "criminal_severe", "staff_blind": False}).level == 5
    assert classify({"identifiable": True, "harm": "none", "staff_blind": True}).level == 6


def test_classify_incomplete():
    with pytest.raises(IncompleteAnswers):
        classify({"identifiable": True})
    with pytest.raises(IncompleteAnswers):
        classify({"identifiable": True, "harm": "catastrophic", "staff_blind": False})


def test_classify_monotone():
    harms = ["none", "embarrassment", "civil_regulated", "criminal_severe"]
    for identifiable in (False, True):
        for staff_blind in (False, True):
            levels = [
                classify({"identifiable": identifiable, "harm": h,
                          "staff_blind": staff_blind}).level
                for h in harms
            ]
            assert levels == sorted(levels)
    # Strengthening identifiable or staff-blind never lowers the level.
    for h in harms:
        weak = classify({"identifiable": False, "harm": h, "staff_blind": False})
        strong = classify({"identifiable": True, "harm": h, "staff_blind": False})
        blind = classify({"identifiable": True, "harm": h, "staff_blind": True})
        assert weak.level <= strong.level <= blind.level


# --- sealing -----------------------------------------------------------------------

SENTINEL = os.urandom(32) + b"SENTINEL-PLAINTEXT-MARKER-BYTES!"


def test_seal_roundtrip_every_level():
    registry = KeyRegistry()
    for level in range(1, 7):
        owner = "owner-pass" if level == 6 else None
        blob = seal(level, SENTINEL, registry, owner)
        parsed = SealedBlob.from_bytes(blob.to_bytes())
        assert unseal(parsed, registry, owner) == SENTINEL


def test_clear_levels_have_no_keys():
    registry = KeyRegistry()
    for level in (1, 2):
        blob = seal(level, SENTINEL, registry)
        assert blob.key_ids == ()
        assert blob.payload == SENTINEL


def test_sealed_levels_hide_plaintext():
    registry = KeyRegistry()
    for level in (3, 4, 5, 6):
        owner = "owner-pass" if level == 6 else None
        blob = seal(level, SENTINEL, registry, owner)
        assert SENTINEL not in blob.to_bytes()


def test_level_six_needs_owner_key_both_ways():
    registry = KeyRegistry()
    with pytest.raises(MissingOwnerKey):
        seal(6, SENTINEL, registry)
    blob = seal(6, SENTINEL, registry, "owner-pass")
    assert len(blob.key_ids) == 2
    with pytest.raises(MissingOwnerKey):
        unseal(blob, registry)                   # platform key alone: still sealed
    with pytest.raises(DecryptFailure):
        unseal(blob, registry, "wrong-pass")


def test_tamper_detection():
    registry = KeyRegistry()
    blob = seal(3, SENTINEL, registry)
    raw = bytearray(blob.to_bytes())
    raw[-1] ^= 0x01
    with pytest.raises(DecryptFailure):
        unseal(SealedBlob.from_bytes(bytes(raw)), registry)


def test_relabeled_level_fails_authentication():
    registry = KeyRegistry()
    blob = seal(4, SENTINEL, registry)
    raw = bytearray(blob.to_bytes())
    raw[0] = 3                                   # pretend it is level 3
    with pytest.raises(DecryptFailure):
        unseal(SealedBlob.from_bytes(bytes(raw)), registry)


def test_key_rotation_keeps_old_blobs_readable():
    registry = KeyRegistry()
    blob = seal(3, SENTINEL, registry)
    registry.rotate()
    assert unseal(blob, registry) == SENTINEL
    blob2 = seal(3, SENTINEL, registry)
    assert blob2.key_ids != blob.key_ids


def test_unseal_for_rechecks_access():
    registry = KeyRegistry()
    blob = seal(3, SENTINEL, registry)
    with pytest.raises(PermissionDenied):
        unseal_for(blob, ANONYMOUS, DATASET, registry)
    ctx = make_ctx(verified=True, password=True, approval=True, dua="accepted")
    assert unseal_for(blob, ctx, DATASET, registry) == SENTINEL
