"""Kademlia node state: XOR metric, k-buckets, iterative lookups.

Nodes never touch sockets or clocks directly. A node is handed a transport
object that delivers its messages and reports RPC timeouts back through
:meth:`KademliaNode.on_message` and :meth:`KademliaNode.on_rpc_timeout`; the
discrete-event simulator provides that transport.
"""

from __future__ import annotations

import bisect
import enum
import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Protocol

__all__ = [
    "KademliaParams",
    "Contact",
    "KBucket",
    "RoutingTable",
    "UpdateOutcome",
    "LookupMode",
    "LookupFailed",
    "Lookup",
    "Message",
    "MsgKind",
    "KademliaNode",
    "xor_distance",
    "bucket_index",
]


@dataclass(frozen=True)
class KademliaParams:
    b: int = 160
    k: int = 20
    alpha: int = 3

    def __post_init__(self) -> None:
        if self.b < 4:
            raise ValueError(f"b must be >= 4, got {self.b}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 1 <= self.alpha <= self.k:
            raise ValueError(f"alpha must lie in [1, k={self.k}], got {self.alpha}")


def xor_distance(a: int, b: int) -> int:
    return a ^ b


def bucket_index(owner: int, other: int) -> int:
    """Index ``i`` with ``2**i <= owner ^ other < 2**(i+1)``."""
    d = owner ^ other
    if d == 0:
        raise ValueError("a node has no bucket for its own id")
    return d.bit_length() - 1


class Contact:
    __slots__ = ("id", "address", "last_seen")

    def __init__(self, id: int, address: int, last_seen: int = 0):
        self.id = id
        self.address = address
        self.last_seen = last_seen

    def __repr__(self) -> str:
        return f"Contact(id={self.id:#x}, address={self.address}, last_seen={self.last_seen})"


class KBucket:
    """Contacts of one distance range, least-recently-seen first.

    Both ``entries`` and ``replacements`` are insertion-ordered dicts keyed
    by node id; "moving to the tail" is pop-and-reinsert.
    """

    __slots__ = ("entries", "replacements")

    def __init__(self) -> None:
        self.entries: dict[int, Contact] = {}
        self.replacements: dict[int, Contact] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __repr__(self) -> str:
        return f"KBucket(entries={len(self.entries)}, replacements={len(self.replacements)})"


class UpdateOutcome(str, enum.Enum):
    INSERTED = "inserted"
    REFRESHED = "refreshed"
    CACHED = "cached"


class RoutingTable:
    """``b`` k-buckets of contacts plus a replacement list per bucket."""

    def __init__(self, owner: int, params: KademliaParams):
        if not 0 <= owner < (1 << params.b):
            raise ValueError(f"owner id does not fit in {params.b} bits")
        self.owner = owner
        self.params = params
        self.buckets = [KBucket() for _ in range(params.b)]
        # id -> bucket index, for entries only
        self._where: dict[int, int] = {}

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._where

    def __len__(self) -> int:
        return len(self._where)

    def get(self, node_id: int) -> Contact | None:
        i = self._where.get(node_id)
        return None if i is None else self.buckets[i].entries[node_id]

    def update(self, node_id: int, address: int, now: int) -> UpdateOutcome:
        """Record that ``node_id`` was seen at ``now``."""
        i = bucket_index(self.owner, node_id)
        bucket = self.buckets[i]
        entries = bucket.entries
        contact = entries.pop(node_id, None)
        if contact is not None:
            contact.last_seen = now
            contact.address = address
            entries[node_id] = contact
            return UpdateOutcome.REFRESHED
        replacements = bucket.replacements
        cached = replacements.pop(node_id, None)
        if len(entries) < self.params.k:
            entries[node_id] = Contact(node_id, address, now)
            self._where[node_id] = i
            return UpdateOutcome.INSERTED
        if cached is None:
            if len(replacements) >= self.params.k:
                del replacements[next(iter(replacements))]
            cached = Contact(node_id, address, now)
        else:
            cached.last_seen = now
            cached.address = address
        replacements[node_id] = cached
        return UpdateOutcome.CACHED

    def evict(self, stale: int) -> Contact | None:
        """Drop ``stale``; promote the most recently seen replacement, if any.

        Raises ``KeyError`` when ``stale`` is not an entry of this table.
        """
        i = self._where.pop(stale)
        bucket = self.buckets[i]
        del bucket.entries[stale]
        if not bucket.replacements:
            return None
        newest = next(reversed(bucket.replacements))
        promoted = bucket.replacements.pop(newest)
        bucket.entries[newest] = promoted
        self._where[newest] = i
        return promoted

    def forget(self, node_id: int) -> None:
        """Remove ``node_id`` from the replacement lists (no promotion)."""
        if node_id == self.owner:
            return
        self.buckets[bucket_index(self.owner, node_id)].replacements.pop(node_id, None)

    def closest(self, target: int, count: int) -> list[Contact]:
        if count < 1:
            raise ValueError("count must be >= 1")
        ids = heapq.nsmallest(count, self._where, key=lambda c: c ^ target)
        buckets = self.buckets
        where = self._where
        return [buckets[where[c]].entries[c] for c in ids]

    def contacts(self) -> Iterator[Contact]:
        """All entries by ascending bucket index, least-recently-seen first."""
        for bucket in self.buckets:
            yield from bucket.entries.values()

    def contact_ids(self) -> list[int]:
        return [c for bucket in self.buckets for c in bucket.entries]

    def nonempty_buckets(self) -> list[int]:
        return sorted(set(self._where.values()))

    def check_invariants(self) -> None:
        k = self.params.k
        seen: set[int] = set()
        for i, bucket in enumerate(self.buckets):
            if len(bucket.entries) > k or len(bucket.replacements) > k:
                raise AssertionError(f"bucket {i} over capacity")
            for cid in (*bucket.entries, *bucket.replacements):
                if cid in seen or cid == self.owner:
                    raise AssertionError(f"duplicate or self id {cid:#x} in bucket {i}")
                seen.add(cid)
                if bucket_index(self.owner, cid) != i:
                    raise AssertionError(f"id {cid:#x} misplaced in bucket {i}")
        if set(self._where) != {c for b in self.buckets for c in b.entries}:
            raise AssertionError("entry index out of sync")


# ---------------------------------------------------------------- messages


class MsgKind(enum.IntEnum):
    PING = 0
    FIND_NODE = 1
    FIND_VALUE = 2
    STORE = 3
    REPLY = 4


class Message(NamedTuple):
    kind: MsgKind
    src_id: int
    src_addr: int
    rpc_id: int
    arg: object = None


class Transport(Protocol):
    def now(self) -> int: ...

    def send(self, sender: "KademliaNode", dst_addr: int, msg: Message) -> None: ...


# ---------------------------------------------------------------- lookups


class LookupMode(str, enum.Enum):
    NODE = "node_lookup"
    VALUE = "value_lookup"
    STORE = "store"


class LookupFailed(RuntimeError):
    """The initiator has no contacts to start from."""


_NEW, _INFLIGHT, _RESPONDED, _FAILED = range(4)


@dataclass
class Lookup:
    """One iterative lookup, driven by replies and timeouts.

    The shortlist holds every candidate learned so far ordered by XOR
    distance. At most ``alpha`` queries are in flight; new queries always go
    to the closest unqueried candidate among the ``k`` closest non-failed
    ones. The lookup ends when no such candidate is left and nothing is in
    flight, i.e. the ``k`` closest known nodes have all responded (or there
    is nothing closer left to learn), or as soon as a value lookup reaches a
    holder.
    """

    node: KademliaNode
    target: int
    mode: LookupMode
    on_done: Callable[[Lookup], None] | None = None
    found: bool = False
    done: bool = False
    queries: int = 0
    _order: list[tuple[int, int]] = field(default_factory=list)
    _state: dict[int, int] = field(default_factory=dict)
    _addr: dict[int, int] = field(default_factory=dict)
    _inflight: int = 0
    _responded: int = 0

    def start(self) -> None:
        seeds = self.node.table.closest(self.target, self.node.params.k) if len(self.node.table) else []
        if not seeds:
            raise LookupFailed(f"node {self.node.id:#x} has no contacts")
        for c in seeds:
            self._add(c.id, c.address)
        self._step()

    def _add(self, node_id: int, address: int) -> None:
        if node_id in self._state or node_id == self.node.id:
            return
        self._state[node_id] = _NEW
        self._addr[node_id] = address
        bisect.insort(self._order, (node_id ^ self.target, node_id))

    def shortlist(self) -> list[int]:
        """Closest ``k`` candidates that have not failed, nearest first."""
        k = self.node.params.k
        out = []
        for _, nid in self._order:
            if self._state[nid] != _FAILED:
                out.append(nid)
                if len(out) == k:
                    break
        return out

    def responders(self) -> list[int]:
        k = self.node.params.k
        out = []
        for _, nid in self._order:
            if self._state[nid] == _RESPONDED:
                out.append(nid)
                if len(out) == k:
                    break
        return out

    def _step(self) -> None:
        if self.done:
            return
        k = self.node.params.k
        alpha = self.node.params.alpha
        state = self._state
        pending = False
        seen = 0
        for _, nid in self._order:
            st = state[nid]
            if st == _FAILED:
                continue
            seen += 1
            if st == _NEW:
                if self._inflight < alpha:
                    state[nid] = _INFLIGHT
                    self._inflight += 1
                    self.queries += 1
                    self.node.query(self, nid, self._addr[nid])
                pending = True
            elif st == _INFLIGHT:
                pending = True
            if seen == k:
                break
        if not pending:
            self._finish()

    def on_reply(self, peer: int, payload: object) -> None:
        if self._state.get(peer) == _INFLIGHT:
            self._inflight -= 1
        if self.done:
            return
        self._state[peer] = _RESPONDED
        self._responded += 1
        if self.mode is LookupMode.VALUE and payload[0]:
            self.found = True
            self._finish()
            return
        contacts = payload[1] if self.mode is LookupMode.VALUE else payload
        for nid, addr in contacts:
            self._add(nid, addr)
        self._step()

    def on_failure(self, peer: int) -> None:
        if self._state.get(peer) == _INFLIGHT:
            self._inflight -= 1
        if self.done:
            return
        self._state[peer] = _FAILED
        self._step()

    def _finish(self) -> None:
        self.done = True
        if self.mode is LookupMode.STORE:
            for nid in self.responders():
                self.node.send_store(nid, self._addr[nid], self.target)
        if self.on_done is not None:
            self.on_done(self)


# ---------------------------------------------------------------- node


class KademliaNode:
    """One overlay node. ``address`` is the simulator's handle for it."""

    def __init__(
        self,
        node_id: int,
        address: int,
        params: KademliaParams,
        transport: Transport,
        rpc_retries: int = 2,
        learn_from_replies: bool = False,
    ):
        self.id = node_id
        self.address = address
        self.params = params
        self.transport = transport
        self.rpc_retries = rpc_retries
        self.learn_from_replies = learn_from_replies
        self.table = RoutingTable(node_id, params)
        self.storage: set[int] = set()
        self.alive = True
        # rpc_id -> [dst_id, dst_addr, message, tries, lookup or None]
        self._pending: dict[int, list] = {}
        self._next_rpc = 0

    def __repr__(self) -> str:
        return f"KademliaNode(id={self.id:#x}, address={self.address}, contacts={len(self.table)})"

    # outgoing -------------------------------------------------------------

    def _request(self, dst_id: int, dst_addr: int, kind: MsgKind, arg: object, lookup: Lookup | None) -> None:
        self._next_rpc += 1
        msg = Message(kind, self.id, self.address, self._next_rpc, arg)
        self._pending[self._next_rpc] = [dst_id, dst_addr, msg, 0, lookup]
        self.transport.send(self, dst_addr, msg)

    def query(self, lookup: Lookup, dst_id: int, dst_addr: int) -> None:
        kind = MsgKind.FIND_VALUE if lookup.mode is LookupMode.VALUE else MsgKind.FIND_NODE
        self._request(dst_id, dst_addr, kind, lookup.target, lookup)

    def send_store(self, dst_id: int, dst_addr: int, key: int) -> None:
        self._request(dst_id, dst_addr, MsgKind.STORE, key, None)

    def ping(self, dst_id: int, dst_addr: int) -> None:
        self._request(dst_id, dst_addr, MsgKind.PING, None, None)

    def lookup(self, target: int, mode: LookupMode = LookupMode.NODE, on_done: Callable[[Lookup], None] | None = None) -> Lookup:
        """Start an iterative lookup; raises :class:`LookupFailed` on an empty table."""
        lk = Lookup(self, target, mode, on_done)
        lk.start()
        return lk

    def refresh_targets(self, rng) -> list[int]:
        """One uniformly drawn contact id per non-empty bucket."""
        targets = []
        for bucket in self.table.buckets:
            if bucket.entries:
                ids = list(bucket.entries)
                targets.append(ids[rng.randrange(len(ids))])
        return targets

    # incoming -------------------------------------------------------------

    def on_message(self, msg: Message) -> None:
        now = self.transport.now()
        if msg.kind is MsgKind.REPLY:
            pending = self._pending.pop(msg.rpc_id, None)
            if pending is None:
                return
            self.table.update(msg.src_id, msg.src_addr, now)
            lookup = pending[4]
            if lookup is not None:
                payload = msg.arg
                if self.learn_from_replies:
                    contacts = payload[1] if lookup.mode is LookupMode.VALUE else payload
                    table = self.table
                    own = self.id
                    for nid, addr in contacts:
                        if nid != own:
                            table.update(nid, addr, now)
                lookup.on_reply(msg.src_id, payload)
            return
        self.table.update(msg.src_id, msg.src_addr, now)
        kind = msg.kind
        if kind is MsgKind.FIND_NODE:
            arg: object = self._closest_for(msg.arg, msg.src_id)
        elif kind is MsgKind.FIND_VALUE:
            arg = (True, ()) if msg.arg in self.storage else (False, self._closest_for(msg.arg, msg.src_id))
        elif kind is MsgKind.STORE:
            self.storage.add(msg.arg)
            arg = None
        else:
            arg = None
        self.transport.send(self, msg.src_addr, Message(MsgKind.REPLY, self.id, self.address, msg.rpc_id, arg))

    def _closest_for(self, target: int, requester: int) -> list[tuple[int, int]]:
        k = self.params.k
        out = [(c.id, c.address) for c in self.table.closest(target, k + 1) if c.id != requester]
        return out[:k]

    def on_rpc_timeout(self, rpc_id: int) -> None:
        pending = self._pending.get(rpc_id)
        if pending is None:
            return
        if pending[3] < self.rpc_retries:
            pending[3] += 1
            self.transport.send(self, pending[1], pending[2])
            return
        del self._pending[rpc_id]
        dst_id = pending[0]
        if dst_id in self.table:
            self.table.evict(dst_id)
        else:
            self.table.forget(dst_id)
        if pending[4] is not None:
            pending[4].on_failure(dst_id)
