"""Six-level privacy scale: classification, access decisions, at-rest sealing.

The level table is a fixed constant.  Row 6 is kept exactly as printed in
the source policy matrix: it lists password (not two-factor) and an
unsigned data-use agreement even though it sits above row 5; the
difference is that level-6 content is double encrypted so platform staff
cannot inspect it.

Sealing schemes (byte-exact layout in docs/sealed_blob.md):

* levels 1-2: cleartext;
* levels 3-5: AES-256-GCM under the current platform key;
* level 6: AES-256-GCM under an owner key derived from a passphrase with
  scrypt (n=2**14, r=8, p=1), the result wrapped again under the platform
  key.  Opening requires both.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from threading import Lock

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from .errors import DecryptFailure, IncompleteAnswers, MissingOwnerKey, PermissionDenied

REQ_OPEN = "open"
REQ_VERIFIED = "verified_registration"
REQ_PASSWORD = "password"
REQ_REGISTERED = "registered"
REQ_APPROVAL = "approval"
REQ_DUA_ACCEPT = "dua_accept"
REQ_DUA_SIGNED = "dua_signed"
REQ_TWO_FACTOR = "two_factor"

REQUIREMENTS = (
    REQ_OPEN, REQ_VERIFIED, REQ_PASSWORD, REQ_REGISTERED,
    REQ_APPROVAL, REQ_DUA_ACCEPT, REQ_DUA_SIGNED, REQ_TWO_FACTOR,
)

STORAGE_CLEAR = "clear"
STORAGE_ENCRYPTED = "encrypted"
STORAGE_DOUBLE = "double_encrypted"


@dataclass(frozen=True)
class PrivacyLevel:
    level: int
    storage_mode: str
    requirements: frozenset[str]


LEVELS: dict[int, PrivacyLevel] = {
    1: PrivacyLevel(1, STORAGE_CLEAR, frozenset({REQ_OPEN})),
    2: PrivacyLevel(2, STORAGE_CLEAR, frozenset({REQ_VERIFIED})),
    3: PrivacyLevel(3, STORAGE_ENCRYPTED,
                    frozenset({REQ_PASSWORD, REQ_REGISTERED, REQ_APPROVAL, REQ_DUA_ACCEPT})),
    4: PrivacyLevel(4, STORAGE_ENCRYPTED,
                    frozenset({REQ_PASSWORD, REQ_REGISTERED, REQ_APPROVAL, REQ_DUA_SIGNED})),
    5: PrivacyLevel(5, STORAGE_ENCRYPTED,
                    frozenset({REQ_TWO_FACTOR, REQ_REGISTERED, REQ_APPROVAL, REQ_DUA_SIGNED})),
    # Row 6 as printed: password + unsigned agreement; protection comes
    # from the double-encrypted storage mode, not extra credentials.
    6: PrivacyLevel(6, STORAGE_DOUBLE,
                    frozenset({REQ_PASSWORD, REQ_REGISTERED, REQ_APPROVAL, REQ_DUA_ACCEPT})),
}


@dataclass(frozen=True)
class AccessContext:
    """A principal's achieved credential state at evaluation time.

    ``credentials`` is the subset of {verified_registration, password,
    two_factor} this session has achieved (two_factor implies password
    and is normalized to include it).  ``approvals`` holds (study handle,
    approver kind) grants; ``dua`` maps (study handle, dataset name) to
    none/accepted/signed.
    """

    principal: str
    credentials: frozenset[str] = frozenset()
    approvals: frozenset[tuple[str, str]] = frozenset()
    dua: tuple[tuple[tuple[str, str], str], ...] = ()

    def __post_init__(self):
        creds = set(self.credentials)
        if REQ_TWO_FACTOR in creds:
            creds.add(REQ_PASSWORD)
        object.__setattr__(self, "credentials", frozenset(creds))

    def dua_state(self, study: str, dataset: str) -> str:
        return dict(self.dua).get((study, dataset), "none")

    def has_approval(self, study: str) -> bool:
        return any(s == study for s, _ in self.approvals)


ANONYMOUS = AccessContext("anonymous")


@dataclass(frozen=True)
class Decision:
    allowed: bool
    missing: frozenset[str] = frozenset()

    def __bool__(self):
        return self.allowed


def _requirement_met(req: str, ctx: AccessContext, study: str, dataset: str) -> bool:
    if req == REQ_OPEN:
        return True
    if req in (REQ_VERIFIED, REQ_REGISTERED):
        return REQ_VERIFIED in ctx.credentials
    if req in (REQ_PASSWORD, REQ_TWO_FACTOR):
        return req in ctx.credentials
    if req == REQ_APPROVAL:
        return ctx.has_approval(study)
    if req == REQ_DUA_ACCEPT:
        return ctx.dua_state(study, dataset) in ("accepted", "signed")
    if req == REQ_DUA_SIGNED:
        return ctx.dua_state(study, dataset) == "signed"
    raise ValueError(f"unknown requirement {req!r}")


def access_decision(level: PrivacyLevel | int, ctx: AccessContext,
                    dataset: tuple[str, str]) -> Decision:
    """Pure evaluation of a level's requirements against a context.

    Returns allow, or deny listing exactly the unmet requirements.
    """
    if isinstance(level, int):
        level = LEVELS[level]
    study, name = dataset
    missing = frozenset(
        r for r in level.requirements if not _requirement_met(r, ctx, study, name)
    )
    return Decision(not missing, missing)


# --- classification wizard ----------------------------------------------------

HARM_NONE = "none"
HARM_EMBARRASSMENT = "embarrassment"
HARM_CIVIL = "civil_regulated"
HARM_CRIMINAL = "criminal_severe"

HARM_ORDER = (HARM_NONE, HARM_EMBARRASSMENT, HARM_CIVIL, HARM_CRIMINAL)

_HARM_LEVEL = {HARM_NONE: 2, HARM_EMBARRASSMENT: 3, HARM_CIVIL: 4, HARM_CRIMINAL: 5}


def classify(answers) -> PrivacyLevel:
    """Map wizard answers to a privacy level.

    ``answers`` must provide: ``identifiable`` (bool), ``harm`` (one of
    none / embarrassment / civil_regulated / criminal_severe) and
    ``staff_blind`` (bool).  Monotone: strengthening any answer never
    lowers the level.
    """
    try:
        identifiable = answers["identifiable"]
        harm = answers["harm"]
        staff_blind = answers["staff_blind"]
    except (KeyError, TypeError):
        raise IncompleteAnswers(
            "wizard needs identifiable, harm and staff_blind answers"
        ) from None
    if harm not in _HARM_LEVEL:
        raise IncompleteAnswers(f"unknown harm class {harm!r}", allowed=list(HARM_ORDER))
    if staff_blind:
        return LEVELS[6]
    if not identifiable:
        return LEVELS[1]
    return LEVELS[_HARM_LEVEL[harm]]


# --- sealing -------------------------------------------------------------------

SCHEME_CLEAR = 0
SCHEME_PLATFORM = 1
SCHEME_OWNER = 2

_SCRYPT_N = 2 ** 14
_SCRYPT_R = 8
_SCRYPT_P = 1
_KEY_LEN = 32
_NONCE_LEN = 12
_SALT_LEN = 16

OWNER_KEY_ID = "owner-scrypt"


class KeyRegistry:
    """Holds platform keys; rotation adds a key, old ones stay readable."""

    def __init__(self, platform_key: bytes | None = None):
        self._lock = Lock()
        self._keys: dict[str, bytes] = {}
        self._serial = 0
        self._current = self._add(platform_key or os.urandom(_KEY_LEN))

    def _add(self, key: bytes) -> str:
        self._serial += 1
        key_id = f"pk-{self._serial}"
        self._keys[key_id] = key
        return key_id

    @property
    def current_id(self) -> str:
        return self._current

    def key(self, key_id: str) -> bytes:
        try:
            return self._keys[key_id]
        except KeyError:
            raise DecryptFailure(f"unknown key id {key_id!r}") from None

    def rotate(self) -> str:
        with self._lock:
            self._current = self._add(os.urandom(_KEY_LEN))
            return self._current


@dataclass(frozen=True)
class SealedBlob:
    level: int
    scheme: int
    key_ids: tuple[str, ...]
    salt: bytes
    nonce: bytes
    payload: bytes

    def to_bytes(self) -> bytes:
        ids = b"".join(
            struct.pack("B", len(k.encode())) + k.encode() for k in self.key_ids
        )
        return (
            struct.pack("BBB", self.level, self.scheme, len(self.key_ids))
            + ids + self.salt + self.nonce + self.payload
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        try:
            level, scheme, n_keys = struct.unpack_from("BBB", data, 0)
            off = 3
            key_ids = []
            for _ in range(n_keys):
                (klen,) = struct.unpack_from("B", data, off)
                off += 1
                key_ids.append(data[off:off + klen].decode())
                off += klen
            salt = b""
            if scheme == SCHEME_OWNER:
                salt = data[off:off + _SALT_LEN]
                off += _SALT_LEN
            nonce = b""
            if scheme != SCHEME_CLEAR:
                nonce = data[off:off + _NONCE_LEN]
                off += _NONCE_LEN
            return cls(level, scheme, tuple(key_ids), salt, nonce, data[off:])
        except (struct.error, UnicodeDecodeError) as exc:
            raise DecryptFailure(f"malformed sealed blob: {exc}") from None


def _derive_owner_key(passphrase: str, salt: bytes) -> bytes:
    kdf = Scrypt(salt=salt, length=_KEY_LEN, n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P)
    return kdf.derive(passphrase.encode("utf-8"))


def _aad(level: int, scheme: int) -> bytes:
    # Binds level and scheme into the authentication tag so a blob cannot
    # be relabeled to a weaker level.
    return struct.pack("BB", level, scheme)


def seal(level: int, content: bytes, registry: KeyRegistry,
         owner_passphrase: str | None = None) -> SealedBlob:
    mode = LEVELS[level].storage_mode
    if mode == STORAGE_CLEAR:
        return SealedBlob(level, SCHEME_CLEAR, (), b"", b"", bytes(content))
    if mode == STORAGE_DOUBLE:
        if owner_passphrase is None:
            raise MissingOwnerKey("level 6 content needs the owner's passphrase")
        salt = os.urandom(_SALT_LEN)
        key = _derive_owner_key(owner_passphrase, salt)
        nonce = os.urandom(_NONCE_LEN)
        ct = AESGCM(key).encrypt(nonce, bytes(content), _aad(level, SCHEME_OWNER))
        inner = SealedBlob(level, SCHEME_OWNER, (OWNER_KEY_ID,), salt, nonce, ct)
        outer = _platform_seal(level, inner.to_bytes(), registry)
        return SealedBlob(level, SCHEME_PLATFORM,
                          (registry.current_id, OWNER_KEY_ID),
                          b"", outer.nonce, outer.payload)
    return _platform_seal(level, bytes(content), registry)


def _platform_seal(level: int, content: bytes, registry: KeyRegistry) -> SealedBlob:
    nonce = os.urandom(_NONCE_LEN)
    key = registry.key(registry.current_id)
    ct = AESGCM(key).encrypt(nonce, content, _aad(level, SCHEME_PLATFORM))
    return SealedBlob(level, SCHEME_PLATFORM, (registry.current_id,), b"", nonce, ct)


def unseal(blob: SealedBlob, registry: KeyRegistry,
           owner_passphrase: str | None = None) -> bytes:
    """Recover the sealed content; tampering and wrong keys raise."""
    if blob.scheme == SCHEME_CLEAR:
        return blob.payload
    if blob.scheme == SCHEME_OWNER:
        if owner_passphrase is None:
            raise MissingOwnerKey("content is sealed under the owner's key")
        key = _derive_owner_key(owner_passphrase, blob.salt)
        try:
            return AESGCM(key).decrypt(blob.nonce, blob.payload, _aad(blob.level, blob.scheme))
        except InvalidTag:
            raise DecryptFailure("owner-layer authentication failed") from None
    key = registry.key(blob.key_ids[0])
    try:
        plain = AESGCM(key).decrypt(blob.nonce, blob.payload, _aad(blob.level, blob.scheme))
    except InvalidTag:
        raise DecryptFailure("platform-layer authentication failed") from None
    if LEVELS[blob.level].storage_mode == STORAGE_DOUBLE:
        return unseal(SealedBlob.from_bytes(plain), registry, owner_passphrase)
    return plain


def unseal_for(blob: SealedBlob, ctx: AccessContext, dataset: tuple[str, str],
               registry: KeyRegistry, owner_passphrase: str | None = None) -> bytes:
    """Unseal after re-checking the access decision for this context."""
    decision = access_decision(blob.level, ctx, dataset)
    if not decision:
        raise PermissionDenied(
            "privacy policy denies access", missing=sorted(decision.missing)
        )
    return unseal(blob, registry, owner_passphrase)
