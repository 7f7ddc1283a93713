"""Deterministic discrete-event simulation of a Kademlia overlay.

One :class:`Simulation` runs one pass of a :class:`ScenarioConfig`: nodes join
one every ``join_interval_ms``, then churn and traffic schedules run until
``duration`` minutes have elapsed or fewer than ``min_live_nodes`` nodes are
left. Routing tables are captured as :class:`~kadconn.snapshot.Snapshot`
objects immediately after the initial setup and every ``snapshot_period``
minutes.

Events are ordered by ``(time, sequence number)``; all snapshot events are
queued before anything else, so a snapshot always precedes churn or traffic
that falls on the same millisecond. Every source of randomness is a separate
``random.Random`` stream derived from the pass seed.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field, replace
from typing import Iterable

from .kademlia import KademliaNode, KademliaParams, Lookup, LookupFailed, LookupMode, Message, MsgKind
from .snapshot import Snapshot

__all__ = [
    "SETUPS",
    "CHURN_PRESETS",
    "ChurnSpec",
    "ScenarioConfig",
    "PassResult",
    "Simulation",
    "pass_seed",
    "simulate_pass",
    "run",
    "run_passes",
    "parse_scenario_tag",
]

SETUPS = ("R", "S", "B")
MINUTE = 60_000

# event kinds, roughly by frequency
_DELIVER, _TIMEOUT, _OP_LOOKUP, _OP_STORE, _REFRESH, _TRAFFIC, _CHURN, _JOIN, _SNAPSHOT = range(9)


@dataclass(frozen=True)
class ChurnSpec:
    joins_per_cycle: int = 0
    removals_per_cycle: int = 0
    cycle_minutes: int = 1

    def __post_init__(self) -> None:
        if self.joins_per_cycle < 0 or self.removals_per_cycle < 0:
            raise ValueError("churn counts must be non-negative")
        if self.cycle_minutes < 1:
            raise ValueError("churn cycle must be at least one minute")

    @property
    def active(self) -> bool:
        return self.joins_per_cycle > 0 or self.removals_per_cycle > 0

    @property
    def label(self) -> str:
        if not self.active:
            return "none"
        return f"{self.joins_per_cycle}/{self.removals_per_cycle}"

    @property
    def tag(self) -> str:
        if not self.active:
            return "nochurn"
        base = f"{self.joins_per_cycle}x{self.removals_per_cycle}"
        if CHURN_PRESETS.get(self.label, ChurnSpec(1, 1, 1)).cycle_minutes != self.cycle_minutes:
            base += f"c{self.cycle_minutes}"
        return base

    @classmethod
    def parse(cls, text: str, cycle_minutes: int | None = None) -> "ChurnSpec":
        """``"none"``, a preset such as ``"0/40"``, or any ``"<joins>/<removals>"``."""
        text = text.strip()
        if text == "none":
            spec = cls()
        elif text in CHURN_PRESETS:
            spec = CHURN_PRESETS[text]
        else:
            joins, sep, removals = text.partition("/")
            if not sep or not joins.isdigit() or not removals.isdigit():
                raise ValueError(f"churn must be 'none' or '<joins>/<removals>', got {text!r}")
            spec = cls(int(joins), int(removals), 1)
        if cycle_minutes is not None:
            spec = replace(spec, cycle_minutes=cycle_minutes)
        return spec


CHURN_PRESETS = {
    "none": ChurnSpec(),
    "0/1": ChurnSpec(0, 1, 1),
    "1/1": ChurnSpec(1, 1, 1),
    "0/19": ChurnSpec(0, 19, 10),
    "0/40": ChurnSpec(0, 40, 10),
    "10/10": ChurnSpec(10, 10, 1),
}


@dataclass(frozen=True)
class ScenarioConfig:
    network_size: int = 250
    setup: str = "R"
    churn: ChurnSpec = field(default_factory=ChurnSpec)
    traffic: bool = False
    params: KademliaParams = field(default_factory=KademliaParams)
    passes: int = 5
    seed: int = 0
    snapshot_period: int = 10
    duration: int = 360
    min_live_nodes: int = 10
    join_interval_ms: int = 180
    latency_min_ms: int = 10
    latency_max_ms: int = 100
    rpc_timeout_ms: int = 1000
    rpc_retries: int = 2
    refresh_minutes: int = 60
    stable_count: int = 5
    lookups_per_minute: int = 10
    stores_per_minute: int = 1
    learn_from_replies: bool = False

    def __post_init__(self) -> None:
        if self.network_size < 2:
            raise ValueError(f"network_size must be >= 2, got {self.network_size}")
        if self.setup not in SETUPS:
            raise ValueError(f"setup must be one of {', '.join(SETUPS)}, got {self.setup!r}")
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        if self.snapshot_period < 1:
            raise ValueError(f"snapshot_period must be >= 1, got {self.snapshot_period}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError("latency bounds must satisfy 0 <= min <= max")
        if 2 * self.latency_max_ms >= self.rpc_timeout_ms:
            raise ValueError("rpc_timeout_ms must exceed the maximum round trip")
        if self.join_interval_ms < 1 or self.refresh_minutes < 1:
            raise ValueError("join_interval_ms and refresh_minutes must be positive")
        if self.rpc_retries < 0 or self.stable_count < 0 or self.min_live_nodes < 0:
            raise ValueError("rpc_retries, stable_count and min_live_nodes must be non-negative")

    @property
    def bootstrap_end_ms(self) -> int:
        return self.network_size * self.join_interval_ms

    @property
    def tag(self) -> str:
        parts = [
            f"n{self.network_size}",
            self.setup,
            self.churn.tag,
            "traffic" if self.traffic else "quiet",
            f"k{self.params.k}",
        ]
        if self.params.b != 160:
            parts.append(f"b{self.params.b}")
        return "-".join(parts)


def parse_scenario_tag(tag: str) -> dict[str, str]:
    """Recover the CSV tag fields from :attr:`ScenarioConfig.tag`.

    Unrecognised tags give empty fields rather than an error.
    """
    out = {"setup": "", "churn": "", "traffic": "", "k": ""}
    parts = tag.split("-")
    if len(parts) < 5 or parts[1] not in SETUPS or not parts[4].startswith("k"):
        return out
    out["setup"] = parts[1]
    churn = parts[2]
    if churn == "nochurn":
        out["churn"] = "none"
    else:
        joins, _, rest = churn.partition("x")
        removals, _, cycle = rest.partition("c")
        out["churn"] = f"{joins}/{removals}" + (f"@{cycle}" if cycle else "")
    out["traffic"] = {"traffic": "true", "quiet": "false"}.get(parts[3], "")
    out["k"] = parts[4][1:]
    return out


def pass_seed(seed: int, pass_index: int) -> int:
    """64-bit seed of one pass: BLAKE2b of ``"<seed>/<pass_index>"``."""
    digest = hashlib.blake2b(f"{seed}/{pass_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class PassResult:
    pass_index: int
    seed: int
    snapshots: list[Snapshot]
    join_failures: int
    nodes_joined: int
    events: int
    end_time: int


class Simulation:
    """Single pass of a scenario; also the transport handed to every node."""

    def __init__(self, config: ScenarioConfig, pass_index: int = 0):
        self.config = config
        self.pass_index = pass_index
        self.seed = pass_seed(config.seed, pass_index)
        self._rng_net = random.Random(f"{self.seed}:net")
        self._rng_ids = random.Random(f"{self.seed}:ids")
        self._rng_boot = random.Random(f"{self.seed}:bootstrap")
        self._rng_churn = random.Random(f"{self.seed}:churn")
        self._rng_traffic = random.Random(f"{self.seed}:traffic")
        self._rng_refresh = random.Random(f"{self.seed}:refresh")
        self._heap: list[tuple[int, int, int, object]] = []
        self._seq = 0
        self._now = 0
        self._stopped = False
        self.nodes: list[KademliaNode] = []
        self.live: list[int] = []
        self.stable: list[int] = []
        self.objects: list[int] = []
        self.snapshots: list[Snapshot] = []
        self.join_failures = 0
        self.events = 0
        self._ids: set[int] = set()

    # transport -------------------------------------------------------------

    def now(self) -> int:
        return self._now

    def send(self, sender: KademliaNode, dst_addr: int, msg: Message) -> None:
        cfg = self.config
        latency = self._rng_net.randint(cfg.latency_min_ms, cfg.latency_max_ms)
        self._push(self._now + latency, _DELIVER, (dst_addr, msg, self._now))

    # scheduling ------------------------------------------------------------

    def _push(self, time: int, kind: int, payload: object) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, payload))

    def _schedule_initial(self) -> None:
        cfg = self.config
        end = cfg.duration * MINUTE
        boot_end = cfg.bootstrap_end_ms
        if boot_end <= end:
            self._push(boot_end, _SNAPSHOT, None)
        period = cfg.snapshot_period * MINUTE
        t = period
        while t <= end:
            self._push(t, _SNAPSHOT, None)
            t += period
        for i in range(cfg.network_size):
            self._push(i * cfg.join_interval_ms, _JOIN, None)
        if cfg.churn.active:
            cycle = cfg.churn.cycle_minutes * MINUTE
            self._push((boot_end // cycle + 1) * cycle, _CHURN, None)
        if cfg.traffic:
            self._push(0, _TRAFFIC, None)

    # node lifecycle ------------------------------------------------------

    def _new_id(self) -> int:
        b = self.config.params.b
        while True:
            node_id = self._rng_ids.getrandbits(b)
            if node_id not in self._ids:
                self._ids.add(node_id)
                return node_id

    def _choose_bootstrap(self) -> int | None:
        if not self.live:
            return None
        if self.config.setup == "B":
            stable_live = [a for a in self.stable if self.nodes[a].alive]
            if stable_live:
                return stable_live[self._rng_boot.randrange(len(stable_live))]
        return self.live[self._rng_boot.randrange(len(self.live))]

    def join(self) -> KademliaNode:
        cfg = self.config
        bootstrap = self._choose_bootstrap()
        node = KademliaNode(
            self._new_id(), len(self.nodes), cfg.params, self, cfg.rpc_retries, cfg.learn_from_replies
        )
        self.nodes.append(node)
        self.live.append(node.address)
        if cfg.setup in ("S", "B") and len(self.stable) < cfg.stable_count:
            self.stable.append(node.address)
        self._push(self._now + cfg.refresh_minutes * MINUTE, _REFRESH, node.address)
        if bootstrap is not None:
            boot = self.nodes[bootstrap]
            node.table.update(boot.id, boot.address, self._now)
            node.lookup(node.id, LookupMode.NODE, on_done=self._join_done)
        return node

    def _join_done(self, lookup: Lookup) -> None:
        # nobody answered the self-lookup: the node never joined and leaves the live set
        if not lookup.responders():
            self.join_failures += 1
            if lookup.node.alive:
                self.remove(lookup.node.address)

    def remove(self, address: int) -> None:
        """Silent crash: the node stops answering and drops all its events."""
        node = self.nodes[address]
        node.alive = False
        self.live.remove(address)

    def _churn_tick(self) -> None:
        cfg = self.config
        spec = cfg.churn
        for _ in range(spec.joins_per_cycle):
            self.join()
        stable = set(self.stable)
        removable = [a for a in self.live if a not in stable]
        count = min(spec.removals_per_cycle, len(removable))
        for address in self._rng_churn.sample(removable, count):
            self.remove(address)
        if len(self.live) < cfg.min_live_nodes:
            self._stopped = True
            return
        self._push(self._now + spec.cycle_minutes * MINUTE, _CHURN, None)

    def _traffic_tick(self) -> None:
        cfg = self.config
        rng = self._rng_traffic
        t = self._now
        for address in self.live:
            for _ in range(cfg.lookups_per_minute):
                self._push(t + rng.randrange(MINUTE), _OP_LOOKUP, address)
            for _ in range(cfg.stores_per_minute):
                self._push(t + rng.randrange(MINUTE), _OP_STORE, address)
        self._push(t + MINUTE, _TRAFFIC, None)

    def _start_lookup(self, node: KademliaNode, target: int, mode: LookupMode) -> None:
        try:
            node.lookup(target, mode)
        except LookupFailed:
            pass

    def _refresh(self, address: int) -> None:
        node = self.nodes[address]
        for target in node.refresh_targets(self._rng_refresh):
            self._start_lookup(node, target, LookupMode.NODE)
        self._push(self._now + self.config.refresh_minutes * MINUTE, _REFRESH, address)

    def capture_snapshot(self) -> Snapshot:
        cfg = self.config
        nodes = {}
        for address in self.live:
            node = self.nodes[address]
            nodes[node.id] = tuple(node.table.contact_ids())
        stable = frozenset(self.nodes[a].id for a in self.stable if self.nodes[a].alive)
        return Snapshot(self._now, cfg.params.b, cfg.params.k, self.pass_index, nodes, stable)

    # main loop -------------------------------------------------------------

    def run(self) -> PassResult:
        cfg = self.config
        self._schedule_initial()
        end = cfg.duration * MINUTE
        heap = self._heap
        nodes = self.nodes
        pop = heapq.heappop
        timeout = cfg.rpc_timeout_ms
        events = 0
        while heap:
            t, _, kind, payload = pop(heap)
            if t > end:
                break
            self._now = t
            events += 1
            if kind == _DELIVER:
                dst, msg, sent = payload
                node = nodes[dst]
                if node.alive:
                    node.on_message(msg)
                elif msg.kind is not MsgKind.REPLY:
                    # replies always beat the timeout, so only dead peers need one
                    self._push(sent + timeout, _TIMEOUT, (msg.src_addr, msg.rpc_id))
            elif kind == _TIMEOUT:
                node = nodes[payload[0]]
                if node.alive:
                    node.on_rpc_timeout(payload[1])
            elif kind == _OP_LOOKUP:
                node = nodes[payload]
                if node.alive:
                    objects = self.objects
                    rng = self._rng_traffic
                    key = objects[rng.randrange(len(objects))] if objects else rng.getrandbits(cfg.params.b)
                    self._start_lookup(node, key, LookupMode.VALUE)
            elif kind == _OP_STORE:
                node = nodes[payload]
                if node.alive:
                    key = self._rng_traffic.getrandbits(cfg.params.b)
                    self.objects.append(key)
                    self._start_lookup(node, key, LookupMode.STORE)
            elif kind == _REFRESH:
                if nodes[payload].alive:
                    self._refresh(payload)
            elif kind == _TRAFFIC:
                self._traffic_tick()
            elif kind == _CHURN:
                self._churn_tick()
            elif kind == _JOIN:
                self.join()
            elif kind == _SNAPSHOT:
                self.snapshots.append(self.capture_snapshot())
            if self._stopped:
                break
        self.events = events
        return PassResult(
            pass_index=self.pass_index,
            seed=self.seed,
            snapshots=self.snapshots,
            join_failures=self.join_failures,
            nodes_joined=len(self.nodes),
            events=events,
            end_time=self._now,
        )


def simulate_pass(config: ScenarioConfig, pass_index: int) -> PassResult:
    return Simulation(config, pass_index).run()


def run_passes(config: ScenarioConfig, jobs: int = 1, passes: Iterable[int] | None = None) -> list[PassResult]:
    """Run the configured passes, optionally in worker processes."""
    indices = list(range(config.passes)) if passes is None else list(passes)
    if jobs <= 1 or len(indices) <= 1:
        return [simulate_pass(config, i) for i in indices]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(simulate_pass, [config] * len(indices), indices))


def run(config: ScenarioConfig) -> list[list[Snapshot]]:
    """Snapshots of every pass, in pass order."""
    return [r.snapshots for r in run_passes(config)]
