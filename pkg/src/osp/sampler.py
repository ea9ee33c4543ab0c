"""Deterministic, re-extractable samples of released dataset versions.

A sample descriptor records everything needed to rebuild the sample
bit-identically: source reference and fingerprint (the tamper seal),
method, seed, window, the masked-view snapshot when drawn through one,
and - when small enough - the explicit selected indices, so that
re-extraction decades later does not even need the generator.

Methods:

* uniform_without_replacement: partial Fisher-Yates over the scope,
  driven by the pinned SplitMix64 generator;
* systematic: step ceil(N/n), start ``seed mod step``; when the
  arithmetic progression runs past the scope before collecting n rows it
  continues modulo N, skipping already-selected rows, so the sample is
  always exactly n;
* head: the first n rows of the scope.

Indices are absolute row numbers of the (masked) source and are returned
sorted ascending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import count
from threading import Lock

from .errors import SampleTooLarge, UnknownSample
from .fingerprint import Fingerprint
from .prng import SplitMix64

METHODS = ("uniform_without_replacement", "systematic", "head")

INDEX_MATERIALIZATION_BOUND = 100_000


@dataclass(frozen=True)
class SampleDescriptor:
    sample_id: str
    source: tuple[str, str, int]                 # (study handle, dataset, version)
    source_fingerprint: Fingerprint
    method: str
    seed: int
    requested_n: int
    selected_indices: tuple[int, ...] | None     # materialized when small
    window: tuple[int, int] | None               # [start, end) row offsets
    sample_fingerprint: Fingerprint
    view_snapshot: object = field(default=None, compare=False)
    drawn_by: str = field(default="", compare=False)


def select_indices(method: str, n: int, seed: int, scope: int,
                   offset: int = 0) -> list[int]:
    """Choose n distinct ascending row indices from [offset, offset+scope)."""
    if method not in METHODS:
        raise ValueError(f"unknown sampling method {method!r}")
    if n > scope:
        raise SampleTooLarge(f"requested {n} rows from a scope of {scope}")
    if n == 0:
        return []
    if method == "head":
        picked = range(n)
    elif method == "systematic":
        picked = _systematic(n, seed, scope)
    else:
        picked = _fisher_yates(n, seed, scope)
    return sorted(offset + i for i in picked)


def _fisher_yates(n: int, seed: int, scope: int) -> list[int]:
    # Sparse partial Fisher-Yates: O(n) memory regardless of scope.
    rng = SplitMix64(seed)
    swapped: dict[int, int] = {}
    picked = []
    for i in range(n):
        j = i + rng.below(scope - i)
        picked.append(swapped.get(j, j))
        swapped[j] = swapped.get(i, i)
    return picked


def _systematic(n: int, seed: int, scope: int) -> list[int]:
    step = math.ceil(scope / n)
    start = seed % step
    picked, seen = [], set()
    pos = start
    while len(picked) < n:
        idx = pos % scope
        while idx in seen:
            idx = (idx + 1) % scope
        seen.add(idx)
        picked.append(idx)
        pos += step
    return picked


class SampleRegistry:
    """Append-only descriptor registry with atomic registration."""

    def __init__(self):
        self._lock = Lock()
        self._descriptors: dict[str, SampleDescriptor] = {}
        self._serial = count(1)

    def next_id(self) -> str:
        return f"smp-{next(self._serial)}"

    def register(self, descriptor: SampleDescriptor) -> SampleDescriptor:
        with self._lock:
            if descriptor.sample_id in self._descriptors:
                raise ValueError(f"sample id {descriptor.sample_id!r} already registered")
            self._descriptors[descriptor.sample_id] = descriptor
            return descriptor

    def get(self, sample_id: str) -> SampleDescriptor:
        try:
            return self._descriptors[sample_id]
        except KeyError:
            raise UnknownSample(f"no sample {sample_id!r}") from None

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._descriptors
