"""Formal data citations: mint, render, parse, verify.

Rendered form (byte-exact):

    Family, Given; Family2, Given2, YEAR, "Title", URL UNF-STRING Vn [Version]

``[Version]`` is a literal trailing annotation.  A citation is immutable
once minted; the cited target may change state (release, deaccession)
but the citation string never does.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError
from .fingerprint import Fingerprint, fingerprint_content

TARGETS = ("dataset_version", "sample", "tombstone")


@dataclass(frozen=True)
class Citation:
    authors: tuple[str, ...]
    year: int
    title: str
    persistent_url: str
    unf: str
    version: int
    target: str = field(default="dataset_version", compare=False)

    def render(self) -> str:
        names = "; ".join(self.authors)
        return (
            f'{names}, {self.year}, "{self.title}", '
            f"{self.persistent_url} {self.unf} V{self.version} [Version]"
        )


_CITATION_RE = re.compile(
    r'^(?P<authors>.+), (?P<year>\d{4}), "(?P<title>.*)", '
    r"(?P<url>\S+) (?P<unf>UNF:\d+:[A-Za-z0-9+/]+={0,2}) "
    r"V(?P<version>\d+) \[Version\]$"
)


def parse_citation(text: str, target: str = "dataset_version") -> Citation:
    m = _CITATION_RE.match(text.strip())
    if m is None:
        raise ParseError(f"not a citation string: {text!r}")
    return Citation(
        authors=tuple(a.strip() for a in m.group("authors").split(";")),
        year=int(m.group("year")),
        title=m.group("title"),
        persistent_url=m.group("url"),
        unf=m.group("unf"),
        version=int(m.group("version")),
        target=target,
    )


def verify(citation: Citation, content) -> str:
    """Recompute the content fingerprint and compare with the citation.

    ``content`` is any fingerprintable carrier (table, matrix, graph,
    bytes).  Returns ``"verified"`` or ``"mismatch"``.
    """
    computed = fingerprint_content(content)
    try:
        cited = Fingerprint.parse(citation.unf)
    except ValueError:
        return "mismatch"
    return "verified" if computed == cited else "mismatch"
