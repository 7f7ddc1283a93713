"""Routing-table snapshots and their line-oriented text format.

::

    snapshot t=<ms> n=<live-count> b=<bits> k=<bucket-size> pass=<i>
    <owner-hex>:<contact-hex> <contact-hex> ...
    ...
    stable:<id-hex> ...

Ids are lowercase hex zero-padded to ``ceil(b/4)`` digits. Owners appear in
ascending id order; each owner's contacts are its flattened routing table
(ascending bucket index, least-recently-seen first). Every line ends in
``\\n`` and carries no trailing whitespace.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from ._io import atomic_write_text

__all__ = ["Snapshot", "SnapshotFormatError", "dumps", "loads", "write", "read"]

_HEADER = re.compile(r"snapshot t=(\d+) n=(\d+) b=(\d+) k=(\d+) pass=(\d+)")
_HEX = re.compile(r"[0-9a-f]+")


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    time: int
    b: int
    k: int
    pass_index: int
    nodes: dict[int, tuple[int, ...]] = field(default_factory=dict)
    stable_ids: frozenset[int] = frozenset()

    @property
    def live_count(self) -> int:
        return len(self.nodes)

    @property
    def time_minutes(self) -> float:
        return self.time / 60000


def _hex(value: int, width: int) -> str:
    return format(value, "x").zfill(width)


def dumps(snap: Snapshot) -> str:
    width = -(-snap.b // 4)
    lines = [f"snapshot t={snap.time} n={snap.live_count} b={snap.b} k={snap.k} pass={snap.pass_index}"]
    for owner in sorted(snap.nodes):
        contacts = " ".join(_hex(c, width) for c in snap.nodes[owner])
        lines.append(f"{_hex(owner, width)}:{contacts}")
    stable = " ".join(_hex(s, width) for s in sorted(snap.stable_ids))
    lines.append(f"stable:{stable}")
    return "\n".join(lines) + "\n"


def _parse_ids(text: str, lineno: int) -> list[int]:
    if not text:
        return []
    parts = text.split(" ")
    for p in parts:
        if not _HEX.fullmatch(p):
            raise SnapshotFormatError(f"line {lineno}: bad id {p!r}")
    return [int(p, 16) for p in parts]


def loads(text: str) -> Snapshot:
    if not text.endswith("\n"):
        raise SnapshotFormatError("missing final newline")
    lines = text[:-1].split("\n")
    m = _HEADER.fullmatch(lines[0])
    if m is None:
        raise SnapshotFormatError(f"line 1: bad header {lines[0]!r}")
    t, n, b, k, pass_index = (int(x) for x in m.groups())
    if len(lines) < 2 or not lines[-1].startswith("stable:"):
        raise SnapshotFormatError("missing trailing stable line")
    nodes: dict[int, tuple[int, ...]] = {}
    for lineno, line in enumerate(lines[1:-1], start=2):
        owner_text, sep, rest = line.partition(":")
        if not sep or not _HEX.fullmatch(owner_text):
            raise SnapshotFormatError(f"line {lineno}: expected '<owner>:<contacts>'")
        owner = int(owner_text, 16)
        if owner in nodes:
            raise SnapshotFormatError(f"line {lineno}: duplicate owner {owner_text}")
        contacts = _parse_ids(rest, lineno)
        if owner in contacts:
            raise SnapshotFormatError(f"line {lineno}: owner lists itself")
        nodes[owner] = tuple(contacts)
    if len(nodes) != n:
        raise SnapshotFormatError(f"header says n={n} but {len(nodes)} owners listed")
    stable = frozenset(_parse_ids(lines[-1][len("stable:"):], len(lines)))
    return Snapshot(t, b, k, pass_index, nodes, stable)


def write(snap: Snapshot, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, dumps(snap))


def read(path: str | os.PathLike) -> Snapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise SnapshotFormatError(f"non-ascii content at byte {exc.start}") from None
    return loads(text)
