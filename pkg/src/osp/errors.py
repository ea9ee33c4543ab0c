"""Shared exception hierarchy.

Every error carries a stable machine code (the class name) that the REST
layer mirrors verbatim in error bodies and the CLI prints back to the
user, plus the HTTP status the API maps it to.
"""

from __future__ import annotations


class OspError(Exception):
    http_status = 400

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    @property
    def code(self) -> str:
        return type(self).__name__


# --- authentication / authorization ---------------------------------------

class Unauthenticated(OspError):
    http_status = 401


class PermissionDenied(OspError):
    http_status = 403


# --- catalog / identifiers --------------------------------------------------

class InvalidMetadata(OspError):
    http_status = 400


class SchemaMismatch(OspError):
    http_status = 400


class UnknownStudy(OspError):
    http_status = 404


class UnknownDataset(OspError):
    http_status = 404


class UnknownIdentifier(OspError):
    http_status = 404


class UnknownPrincipal(OspError):
    http_status = 404


class AlreadyReleased(OspError):
    http_status = 409


class NotDraft(OspError):
    http_status = 409


class NotReleased(OspError):
    http_status = 409


class Deaccessioned(OspError):
    """The version resolved, but only to its tombstone."""

    http_status = 410


# --- fingerprinting ---------------------------------------------------------

class NonFiniteNumeric(OspError):
    http_status = 400


class DanglingEdge(OspError):
    http_status = 400


# --- sampling ---------------------------------------------------------------

class UnknownSample(OspError):
    http_status = 404


class SampleTooLarge(OspError):
    http_status = 400


class SourceDrift(OspError):
    http_status = 409


# --- privacy ----------------------------------------------------------------

class IncompleteAnswers(OspError):
    http_status = 400


class MissingOwnerKey(OspError):
    http_status = 400


class DecryptFailure(OspError):
    http_status = 500


# --- secure views -----------------------------------------------------------

class UnknownColumn(OspError):
    http_status = 400


class TypeMismatch(OspError):
    http_status = 400


class UnknownView(OspError):
    http_status = 404


# --- provenance -------------------------------------------------------------

class UnknownEntity(OspError):
    http_status = 404


class CycleDetected(OspError):
    http_status = 409


class DuplicateProducer(OspError):
    http_status = 409


class ParseError(OspError):
    http_status = 400


# --- analytics / jobs -------------------------------------------------------

class UnknownJob(OspError):
    http_status = 404


class KTooLarge(OspError):
    http_status = 400


class RankDeficient(OspError):
    http_status = 400


class Separation(OspError):
    http_status = 400


class NoConvergence(OspError):
    http_status = 400


class DegenerateWithinVariance(OspError):
    http_status = 400


# --- API --------------------------------------------------------------------

class RangeOutOfBounds(OspError):
    http_status = 416


class NotAcceptable(OspError):
    http_status = 406
