#!/usr/bin/env python3
"""
Discrete-round simulator for COPE, SCOPE and robust SCOPE.

Round model:
    1. sources whose flow starts this round emit their native packet
    2. every node with a queued packet transmits exactly one frame
       (a native alone, or two natives coded together)
    3. all neighbours of each transmitter receive the frame; next hops
       decode/forward/deliver, everybody else keeps it in the overheard pool

Everything a receiver does is driven by the frame bytes it parses; the
simulator only adds engine-side tags (flow id, packet id per native) that
stand in for routing state. Keys are provisioned out of band at setup.

Built-in scenarios:
    1  chain N1-N2-N3,               F1 1->2->3, F2 3->2->1
    2  star centred on N5, leaves 1-4, flows crossing at N5
    3  star centred on N7, leaves 1-6, flows crossing at N7
    4  chain N1..N9,                 F1 1->...->9, F2 9->...->1
"""
from __future__ import annotations

import hashlib
import hmac
import itertools
import json
import logging
import random
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .auth import SigKeyPair, SignPayload, evaluate_contact, evaluate_payload, sig_keygen, sign_header, sign_payload
from .coding import (
    ConditionParty, ConditionSession, code_payload, coding_condition, compute_hop_sets,
    decrypt_payload, encrypt_payload, node_point, pad_chunk_lists, secure_coding_condition, strip_contributions,
)
from .errors import GroupError, LayerError, ParseError, ScenarioError, ScopeError
from .group import B163, GroupParams, chunk_capacity, encode_chunk
from .he import Ciphertext, FlowKey, KeyPair, encrypt, keygen
from .packet import (
    BITMAP_LEN, FRAME_COPE, FRAME_ROBUST, FRAME_SCOPE, IP_STUB, ROUTING_STUB,
    AckEntry, CodingEntry, CopeHeader, CopePacket, EncCodingEntry, ReceptionEntry, RobustPacket,
    ScopeHeader, ScopePacket, deserialize, encrypt_header, mac_stub, serialize,
)

logger = logging.getLogger(__name__)

MODES = ('cope', 'scope', 'robust')
ADVERSARY_MODES = ('curious', 'malicious')
AUTH_DROP_REASONS = ('contact_signature', 'source_signature')
DEFAULT_PAYLOAD_SIZE = 32
FORGED_CHUNK = b'forged by relay'


# ============================================
# TOPOLOGY / FLOWS / SCENARIOS
# ============================================

@dataclass(frozen=True)
class Topology:
    """Symmetric radio-range neighbour relation without self-loops."""
    nodes: frozenset[int]
    adjacency: Mapping[int, frozenset[int]]

    def __post_init__(self):
        for node, nbrs in self.adjacency.items():
            if node not in self.nodes:
                raise ScenarioError(f"adjacency mentions unknown node {node}")
            if node in nbrs:
                raise ScenarioError(f"self-loop at node {node}")
            for other in nbrs:
                if node not in self.adjacency.get(other, frozenset()):
                    raise ScenarioError(f"adjacency not symmetric between {node} and {other}")

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[Sequence[int]]) -> Topology:
        node_set = frozenset(int(n) for n in nodes)
        adj: dict[int, set[int]] = {n: set() for n in node_set}
        for edge in edges:
            if len(edge) != 2:
                raise ScenarioError(f"edge must name two nodes: {edge!r}")
            a, b = int(edge[0]), int(edge[1])
            if a not in node_set or b not in node_set:
                raise ScenarioError(f"edge ({a}, {b}) uses an unknown node")
            if a == b:
                raise ScenarioError(f"self-loop at node {a}")
            adj[a].add(b)
            adj[b].add(a)
        return cls(node_set, {n: frozenset(v) for n, v in adj.items()})

    def neighbors(self, node: int) -> frozenset[int]:
        return self.adjacency.get(node, frozenset())

    def adjacent(self, a: int, b: int) -> bool:
        return b in self.neighbors(a)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a in self.adjacency for b in self.adjacency[a] if a < b)


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    path: tuple[int, ...]
    start_round: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'path', tuple(int(n) for n in self.path))
        if len(self.path) < 2:
            raise ScenarioError(f"flow {self.flow_id} needs at least two nodes")
        if len(set(self.path)) != len(self.path):
            raise ScenarioError(f"flow {self.flow_id} visits a node twice")
        if not 0 < self.flow_id <= 0xFFFF:
            raise ScenarioError(f"flow id {self.flow_id} outside 1..65535")
        if self.start_round < 0:
            raise ScenarioError(f"flow {self.flow_id} starts before round 0")

    @property
    def source(self) -> int:
        return self.path[0]

    @property
    def destination(self) -> int:
        return self.path[-1]

    def next_hop(self, node: int) -> int | None:
        if node not in self.path:
            return None
        i = self.path.index(node)
        return self.path[i + 1] if i + 1 < len(self.path) else None

    def label(self) -> str:
        return f"F{self.flow_id}: " + ' -> '.join(f"N{n}" for n in self.path)


@dataclass(frozen=True)
class Scenario:
    id: int
    topology: Topology
    flows: tuple[FlowSpec, ...]
    name: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'flows', tuple(self.flows))
        ids = [f.flow_id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate flow ids")
        for f in self.flows:
            missing = [n for n in f.path if n not in self.topology.nodes]
            if missing:
                raise ScenarioError(f"flow {f.flow_id} uses unknown nodes {missing}")

    def flow(self, flow_id: int) -> FlowSpec:
        for f in self.flows:
            if f.flow_id == flow_id:
                return f
        raise ScenarioError(f"unknown flow {flow_id}")

    def broken_links(self, flow: FlowSpec) -> list[tuple[int, int]]:
        return [(a, b) for a, b in zip(flow.path, flow.path[1:]) if not self.topology.adjacent(a, b)]

    def routable(self, flow: FlowSpec) -> bool:
        return not self.broken_links(flow)

    def flow_index(self, flow_id: int) -> int:
        return [f.flow_id for f in self.flows].index(flow_id)

    def to_dict(self) -> dict:
        return {
            'id': self.id,
            'name': self.name,
            'nodes': sorted(self.topology.nodes),
            'edges': [list(e) for e in self.topology.edges()],
            'flows': [{'id': f.flow_id, 'path': list(f.path), 'start_round': f.start_round} for f in self.flows],
        }


def _chain_edges(nodes: Sequence[int]) -> list[tuple[int, int]]:
    return list(zip(nodes, nodes[1:]))


def _star(centre: int, leaves: Sequence[int]) -> Topology:
    return Topology.from_edges([centre, *leaves], [(centre, leaf) for leaf in leaves])


def _crossing_flows(centre: int, pairs: Sequence[tuple[int, int]]) -> tuple[FlowSpec, ...]:
    flows = []
    for a, b in pairs:
        flows.append(FlowSpec(len(flows) + 1, (a, centre, b)))
        flows.append(FlowSpec(len(flows) + 1, (b, centre, a)))
    return tuple(flows)


SCENARIO_IDS = (1, 2, 3, 4)


def build_scenario(scenario_id: int) -> Scenario:
    """
    One of the four built-in scenarios.

    Raises:
        ScenarioError: unknown id
    """
    if scenario_id == 1:
        topo = Topology.from_edges([1, 2, 3], _chain_edges([1, 2, 3]))
        flows = (FlowSpec(1, (1, 2, 3)), FlowSpec(2, (3, 2, 1)))
        return Scenario(1, topo, flows, 'two-hop relay')
    if scenario_id == 2:
        return Scenario(2, _star(5, [1, 2, 3, 4]), _crossing_flows(5, [(1, 3), (2, 4)]), 'four flows crossing at N5')
    if scenario_id == 3:
        return Scenario(3, _star(7, [1, 2, 3, 4, 5, 6]), _crossing_flows(7, [(1, 4), (2, 5), (3, 6)]),
                        'six flows crossing at N7')
    if scenario_id == 4:
        chain = list(range(1, 10))
        topo = Topology.from_edges(chain, _chain_edges(chain))
        return Scenario(4, topo, (FlowSpec(1, tuple(chain)), FlowSpec(2, tuple(reversed(chain)))),
                        'nine-node chain')
    raise ScenarioError(f"unknown scenario id {scenario_id}; built-ins are {', '.join(map(str, SCENARIO_IDS))}")


def load_scenario(source: str | Path | Mapping) -> Scenario:
    """
    Scenario from a JSON file (or an already parsed mapping):

        {"name": "...", "nodes": [1, 2, 3], "edges": [[1, 2], [2, 3]],
         "flows": [{"id": 1, "path": [1, 2, 3], "start_round": 0}]}

    Raises:
        ScenarioError: unreadable file or malformed content
    """
    if isinstance(source, Mapping):
        data = source
    else:
        try:
            data = json.loads(Path(source).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read scenario file {source}: {e}") from None
    try:
        topo = Topology.from_edges(data['nodes'], data.get('edges', []))
        flows = tuple(FlowSpec(int(f['id']), tuple(f['path']), int(f.get('start_round', 0)))
                      for f in data['flows'])
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"malformed scenario: {e!r}") from None
    return Scenario(int(data.get('id', 0)), topo, flows, str(data.get('name', '')))


def busiest_relay(scenario: Scenario) -> int:
    """Node interior to the most flows (lowest id on ties)."""
    counts: dict[int, int] = {}
    for f in scenario.flows:
        for n in f.path[1:-1]:
            counts[n] = counts.get(n, 0) + 1
    if not counts:
        raise ScenarioError("scenario has no relay nodes")
    return min(counts, key=lambda n: (-counts[n], n))


# ============================================
# RUN RECORDS
# ============================================

@dataclass(frozen=True)
class TransmissionRecord:
    round: int
    sender: int
    frame: bytes
    receivers: tuple[int, ...]
    coded: bool
    natives: tuple[tuple[int, int], ...]   # engine tags: (flow_id, pkt_id) per coding entry

    def to_dict(self) -> dict:
        return {'round': self.round, 'sender': self.sender, 'receivers': list(self.receivers),
                'coded': self.coded, 'flows': [f for f, _ in self.natives], 'bytes': len(self.frame),
                'frame': self.frame.hex()}


@dataclass(frozen=True)
class ControlRecord:
    """One message of a secure coding-condition exchange."""
    round: int
    sender: int
    receiver: int
    stage: str
    payload: bytes

    def to_dict(self) -> dict:
        return {'round': self.round, 'sender': self.sender, 'receiver': self.receiver,
                'stage': self.stage, 'payload': self.payload.hex()}


@dataclass(frozen=True)
class DropRecord:
    round: int
    node: int
    flow_id: int
    pkt_id: int
    reason: str

    def to_dict(self) -> dict:
        return {'round': self.round, 'node': self.node, 'flow': self.flow_id,
                'pkt_id': self.pkt_id, 'reason': self.reason}


@dataclass
class TransmissionLog:
    """Every data frame, control message and drop of one run; counters are derived."""
    records: list[TransmissionRecord] = field(default_factory=list)
    control: list[ControlRecord] = field(default_factory=list)
    drops: list[DropRecord] = field(default_factory=list)
    undeliverable: list[int] = field(default_factory=list)

    @property
    def transmissions(self) -> int:
        return len(self.records)

    @property
    def unicast_count(self) -> int:
        return sum(1 for r in self.records if not r.coded)

    @property
    def broadcast_count(self) -> int:
        return sum(1 for r in self.records if r.frame[:6] == b'\xff' * 6)

    @property
    def coded_packet_count(self) -> int:
        return sum(1 for r in self.records if r.coded)

    @property
    def dropped_by_auth_count(self) -> int:
        return sum(1 for d in self.drops if d.reason in AUTH_DROP_REASONS)

    def observed_by(self, node: int) -> list[bytes]:
        """Frames and control messages the node sent, received or overheard."""
        seen = [r.frame for r in self.records if r.sender == node or node in r.receivers]
        seen += [c.payload for c in self.control if node in (c.sender, c.receiver)]
        return seen

    def counters(self) -> dict[str, int]:
        return {
            'transmissions': self.transmissions,
            'unicast': self.unicast_count,
            'broadcast': self.broadcast_count,
            'coded': self.coded_packet_count,
            'control_messages': len(self.control),
            'dropped_by_auth': self.dropped_by_auth_count,
            'dropped': len(self.drops),
        }

    def to_dict(self) -> dict:
        return {
            'counters': self.counters(),
            'records': [r.to_dict() for r in self.records],
            'control': [c.to_dict() for c in self.control],
            'drops': [d.to_dict() for d in self.drops],
            'undeliverable': list(self.undeliverable),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class AdversaryReport:
    """What a curious or malicious node saw, inferred and tampered with (append-only)."""
    node: int
    mode: str
    observed: list[bytes] = field(default_factory=list)
    inferences: list[dict] = field(default_factory=list)
    tampers: list[dict] = field(default_factory=list)
    detections: list[dict] = field(default_factory=list)

    def recovered_plaintexts(self) -> list[bytes]:
        return [bytes.fromhex(i['data']) for i in self.inferences if i['outcome'] == 'plaintext']

    def observation_bytes(self) -> bytes:
        return b''.join(self.observed) + b''.join(bytes.fromhex(i['data']) for i in self.inferences)

    def to_dict(self) -> dict:
        return {
            'node': self.node,
            'mode': self.mode,
            'observed_frames': len(self.observed),
            'observed_bytes': sum(len(o) for o in self.observed),
            'inferences': list(self.inferences),
            'tampers': list(self.tampers),
            'detections': list(self.detections),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class RunResult:
    scenario: Scenario
    mode: str
    log: TransmissionLog
    sent: dict[int, bytes]
    received: dict[int, bytes]
    adversaries: dict[int, AdversaryReport] = field(default_factory=dict)

    @property
    def adversary(self) -> AdversaryReport | None:
        return next(iter(self.adversaries.values()), None)

    def delivered(self, flow_id: int) -> bool:
        return self.received.get(flow_id) == self.sent[flow_id]

    @property
    def all_delivered(self) -> bool:
        return all(self.delivered(f) for f in self.sent)

    def to_dict(self) -> dict:
        return {
            'scenario': self.scenario.to_dict(),
            'mode': self.mode,
            'delivery': {str(f): self.delivered(f) for f in sorted(self.sent)},
            'log': self.log.to_dict(),
            'adversaries': {str(n): a.to_dict() for n, a in self.adversaries.items()},
        }


# ============================================
# NODE STATE
# ============================================

@dataclass
class NativeRecord:
    """One native packet as a node holds it."""
    flow_id: int
    pkt_id: int
    source: int
    match_key: bytes
    entry: CodingEntry | EncCodingEntry
    payload: bytes | tuple[Ciphertext, ...]
    payload_sig: SignPayload | None = None


@dataclass
class NodeState:
    node: int
    keypair: KeyPair
    sig_keypair: SigKeyPair | None = None
    flow_keys: dict[int, FlowKey] = field(default_factory=dict)
    queue: list[NativeRecord] = field(default_factory=list)
    pool: dict[bytes, NativeRecord] = field(default_factory=dict)
    received: dict[int, bytes] = field(default_factory=dict)
    heard: dict[int, list[int]] = field(default_factory=dict)
    acked: dict[int, list[int]] = field(default_factory=dict)
    handled: set[tuple[int, int]] = field(default_factory=set)


def _bitmap(ids: Sequence[int]) -> tuple[int, int]:
    """(last id, bitmap of the 64 ids before it)."""
    last = max(ids)
    bits = 0
    for i in ids:
        if 0 < last - i <= 64:
            bits |= 1 << (last - i - 1)
    return last, bits


def _xor_all(blobs: Sequence[bytes]) -> bytes:
    out = bytearray(max(len(b) for b in blobs))
    for b in blobs:
        for k, v in enumerate(b):
            out[k] ^= v
    return bytes(out)


def _unframe(data: bytes) -> bytes:
    (length,) = struct.unpack('>H', data[:2])
    return data[2:2 + length]


# ============================================
# SIMULATOR
# ============================================

class Simulator:
    """
    One deterministic run of a scenario.

    Args:
        scenario: topology and flows
        mode: 'cope' (plaintext), 'scope' (encrypted) or 'robust' (encrypted + signed)
        payloads: flow id -> payload bytes; random bytes of `payload_size` when omitted
        seed: seeds every key, nonce and payload drawn during the run
        params: binary curve for the homomorphic cipher
        sig_bits: ECDSA size for robust mode (384 or 521)
        coding: False gives the coding-disabled baseline
    """

    def __init__(self, scenario: Scenario, mode: str = 'scope', payloads: Mapping[int, bytes] | None = None,
                 seed: int = 0, params: GroupParams = B163, sig_bits: int = 384, coding: bool = True,
                 payload_size: int = DEFAULT_PAYLOAD_SIZE):
        if mode not in MODES:
            raise ScenarioError(f"unknown mode {mode!r}; choose one of {', '.join(MODES)}")
        if chunk_capacity(params) < BITMAP_LEN:
            raise GroupError(f"curve {params.name} is too small for header fields")
        self.scenario = scenario
        self.mode = mode
        self.seed = seed
        self.params = params
        self.sig_bits = sig_bits
        self.coding = coding
        self.rng = random.Random(seed)
        self.log = TransmissionLog()
        self.adversaries: dict[int, AdversaryReport] = {}
        self._views: dict[int, list[tuple[frozenset[bytes], object]]] = {}
        self._conditions: dict[tuple[int, int, int], bool] = {}
        self._setup_keys()
        if payloads is None:
            payloads = {f.flow_id: self.rng.randbytes(payload_size) for f in scenario.flows}
        self.sent: dict[int, bytes] = {}
        for f in scenario.flows:
            data = bytes(payloads.get(f.flow_id, b''))
            if not data:
                raise ScenarioError(f"flow {f.flow_id} has an empty payload")
            if len(data) > 0xFFFF - 2:
                raise ScenarioError(f"flow {f.flow_id} payload exceeds 65533 bytes")
            self.sent[f.flow_id] = data

    # ----------------------------------------
    # setup
    # ----------------------------------------

    def _setup_keys(self) -> None:
        self.nodes: dict[int, NodeState] = {}
        for n in sorted(self.scenario.topology.nodes):
            kp = keygen(self.rng, self.params)
            sig_kp = sig_keygen(self.rng, self.sig_bits) if self.mode == 'robust' else None
            self.nodes[n] = NodeState(n, kp, sig_kp)
        for f in self.scenario.flows:
            fk = FlowKey.generate(self.rng)
            self.nodes[f.source].flow_keys[f.flow_id] = fk
            self.nodes[f.destination].flow_keys[f.flow_id] = fk
        self._setup_secret = self.rng.randbytes(32)
        self.directory = {s.keypair.key_id: s.keypair.pk for s in self.nodes.values()}

    def pair_key(self, a: int, b: int) -> FlowKey:
        """Out-of-band key shared by nodes a and b."""
        lo, hi = sorted((a, b))
        tag = b'pair' + lo.to_bytes(4, 'big') + hi.to_bytes(4, 'big')
        return FlowKey(hmac.new(self._setup_secret, tag, hashlib.sha256).digest())

    def attach_adversary(self, node: int, mode: str) -> AdversaryReport:
        if node not in self.nodes:
            raise ScenarioError(f"cannot attach adversary: unknown node {node}")
        if mode not in ADVERSARY_MODES:
            raise ScenarioError(f"unknown adversary mode {mode!r}; choose curious or malicious")
        report = AdversaryReport(node, mode)
        self.adversaries[node] = report
        self._views[node] = []
        return report

    # ----------------------------------------
    # main loop
    # ----------------------------------------

    def run(self) -> RunResult:
        flows = self.scenario.flows
        last_start = max(f.start_round for f in flows)
        max_rounds = sum(len(f.path) for f in flows) + last_start + 2 * len(flows) + 4
        for rnd in range(max_rounds):
            for f in flows:
                if f.start_round == rnd:
                    self._emit(f, rnd)
            senders = [n for n in sorted(self.nodes) if self.nodes[n].queue]
            if not senders:
                if rnd >= last_start:
                    break
                continue
            records = [self._transmit(n, rnd) for n in senders]
            for rec in records:
                self._receive_all(rec)
        received = {}
        for f in flows:
            data = self.nodes[f.destination].received.get(f.flow_id)
            if data is not None:
                received[f.flow_id] = data
            elif not any(d.flow_id == f.flow_id for d in self.log.drops) and f.flow_id not in self.log.undeliverable:
                self.log.undeliverable.append(f.flow_id)
        logger.debug("run finished: %s", self.log.counters())
        return RunResult(self.scenario, self.mode, self.log, dict(self.sent), received, dict(self.adversaries))

    # ----------------------------------------
    # emission
    # ----------------------------------------

    def _emit(self, flow: FlowSpec, rnd: int) -> None:
        if not self.scenario.routable(flow):
            logger.warning("flow %d has no route (missing links %s)", flow.flow_id, self.scenario.broken_links(flow))
            self.log.undeliverable.append(flow.flow_id)
            return
        src = self.nodes[flow.source]
        pkt_id = (flow.flow_id << 16) | 1
        data = self.sent[flow.flow_id]
        first_hop = flow.path[1]
        if self.mode == 'cope':
            native = NativeRecord(flow.flow_id, pkt_id, flow.source, pkt_id.to_bytes(4, 'big'),
                                  CodingEntry(pkt_id, first_hop), struct.pack('>H', len(data)) + data)
        else:
            pk_dest = self.nodes[flow.destination].keypair.pk
            fk = src.flow_keys[flow.flow_id]
            entry = encrypt_header(self.params, CopeHeader((CodingEntry(pkt_id, first_hop),)), fk, pk_dest).coding_report[0]
            payload = tuple(encrypt_payload(self.rng, self.params, data, pk_dest))
            sig = sign_payload(src.sig_keypair, payload, self.rng) if self.mode == 'robust' else None
            native = NativeRecord(flow.flow_id, pkt_id, flow.source, entry.pkt_id.to_bytes(), entry, payload, sig)
        src.queue.append(native)
        src.pool[native.match_key] = native
        src.handled.add((flow.flow_id, pkt_id))
        logger.debug("round %d: N%d emits flow %d", rnd, flow.source, flow.flow_id)

    # ----------------------------------------
    # transmission
    # ----------------------------------------

    def _transmit(self, node: int, rnd: int) -> TransmissionRecord:
        natives = self._select(node, rnd)
        frame = self._frame(node, natives)
        rec = TransmissionRecord(rnd, node, frame, tuple(sorted(self.scenario.topology.neighbors(node))),
                                 len(natives) > 1, tuple((n.flow_id, n.pkt_id) for n in natives))
        self.log.records.append(rec)
        if node in self.adversaries:
            self._observe(node, frame, rnd)
        logger.debug("round %d: N%d sends %s", rnd, node,
                     'coded ' + '+'.join(f"F{n.flow_id}" for n in natives) if rec.coded else f"F{natives[0].flow_id}")
        return rec

    def _select(self, node: int, rnd: int) -> list[NativeRecord]:
        state = self.nodes[node]
        adv = self.adversaries.get(node)
        if adv is not None and adv.mode == 'malicious' and not adv.tampers:
            for i, n in enumerate(state.queue):
                if n.source != node:
                    state.queue.pop(i)
                    return [self._forge(adv, n, rnd)]
        if self.coding and len(state.queue) > 1:
            order = sorted(state.queue, key=lambda n: (self.scenario.flow_index(n.flow_id), n.pkt_id))
            for a, b in itertools.combinations(order, 2):
                if a.flow_id != b.flow_id and self._condition(node, a.flow_id, b.flow_id, rnd):
                    state.queue.remove(a)
                    state.queue.remove(b)
                    return [a, b]
        return [state.queue.pop(0)]

    def _condition(self, node: int, fi: int, fj: int, rnd: int) -> bool:
        key = (node, min(fi, fj), max(fi, fj))
        if key in self._conditions:
            return self._conditions[key]
        topo = self.scenario.topology
        flow_i, flow_j = self.scenario.flow(key[1]), self.scenario.flow(key[2])
        hs_i = compute_hop_sets(topo, flow_i, node)
        hs_j = compute_hop_sets(topo, flow_j, node)
        if self.mode == 'cope' or not hs_i.ph or not hs_j.ph:
            verdict = coding_condition(hs_i, hs_j)
        else:
            (x_i,), (x_j,) = hs_i.ph, hs_j.ph
            session = ConditionSession(
                self.params, node,
                ConditionParty.from_hop_sets(self.nodes[x_i].keypair, hs_i),
                ConditionParty.from_hop_sets(self.nodes[x_j].keypair, hs_j),
                self.pair_key(x_i, x_j),
                rng=self.rng,
            )
            verdict = secure_coding_condition(session)
            for msg in session.transcript:
                payload = b''.join(bytes.fromhex(h) for cts in msg['lists'].values() for h in cts)
                self.log.control.append(ControlRecord(rnd, msg['from'], msg['to'], msg['stage'], payload))
                for party in (msg['from'], msg['to']):
                    if party in self.adversaries:
                        self.adversaries[party].observed.append(payload)
        logger.debug("condition at N%d for F%d/F%d: %s", node, key[1], key[2], verdict)
        self._conditions[key] = verdict
        return verdict

    def _relay_entry(self, node: int, native: NativeRecord, hop: int) -> EncCodingEntry:
        if native.source == node:
            return native.entry
        # a relay holds no flow key: next hop is re-encrypted with fresh randomness
        pk_dest = self.nodes[self.scenario.flow(native.flow_id).destination].keypair.pk
        next_hop = encrypt(self.params, pk_dest, node_point(self.params, hop), self.params.random_scalar(self.rng))
        return EncCodingEntry(native.entry.pkt_id, next_hop)

    def _reports(self, node: int) -> dict[int, tuple[tuple[ReceptionEntry, ...], tuple[AckEntry, ...]]]:
        state = self.nodes[node]
        out = {}
        for nbr in sorted(set(state.heard) | set(state.acked)):
            rec = ()
            if state.heard.get(nbr):
                last, bits = _bitmap(state.heard[nbr])
                rec = (ReceptionEntry(nbr, last, bits),)
            ack = ()
            if state.acked.get(nbr):
                last, bits = _bitmap(state.acked[nbr])
                ack = (AckEntry(nbr, last, bits),)
            out[nbr] = (rec, ack)
        return out

    def _frame(self, node: int, natives: list[NativeRecord]) -> bytes:
        coded = len(natives) > 1
        hops = [self.scenario.flow(n.flow_id).next_hop(node) for n in natives]
        dst = None if coded else hops[0]
        reports = self._reports(node)
        if self.mode == 'cope':
            header = CopeHeader(tuple(CodingEntry(n.pkt_id, h) for n, h in zip(natives, hops)),
                                tuple(e for rec, _ in reports.values() for e in rec),
                                tuple(e for _, ack in reports.values() for e in ack))
            packet = CopePacket(mac_stub(node, FRAME_COPE, dst), header, ROUTING_STUB, IP_STUB,
                                _xor_all([n.payload for n in natives]))
            return serialize(packet)
        header = ScopeHeader(tuple(self._relay_entry(node, n, h) for n, h in zip(natives, hops)))
        for nbr, (rec, ack) in reports.items():
            header = header + encrypt_header(self.params, CopeHeader((), rec, ack),
                                             self.pair_key(node, nbr), self.nodes[nbr].keypair.pk)
        if coded:
            payload = tuple(code_payload(pad_chunk_lists([n.payload for n in natives])))
        else:
            payload = tuple(natives[0].payload)
        if self.mode == 'scope':
            return serialize(ScopePacket(mac_stub(node, FRAME_SCOPE, dst), header, ROUTING_STUB, IP_STUB, payload))
        payload_sig = sum((n.payload_sig for n in natives), SignPayload())
        header_sig = sign_header(self.nodes[node].sig_keypair, header, self.rng)
        return serialize(RobustPacket(mac_stub(node, FRAME_ROBUST, dst), header, ROUTING_STUB, IP_STUB,
                                      payload, header_sig, payload_sig, self.sig_bits))

    # ----------------------------------------
    # reception
    # ----------------------------------------

    def _parse(self, frame: bytes):
        pkt = deserialize(frame, self.params, self.sig_bits)
        if isinstance(pkt, CopePacket):
            entries = pkt.header.coding_report
            keys = [e.pkt_id.to_bytes(4, 'big') for e in entries]
        else:
            entries = pkt.scope_header.coding_report
            keys = [e.pkt_id.to_bytes() for e in entries]
        return pkt, entries, keys

    def _receive_all(self, rec: TransmissionRecord) -> None:
        pkt, entries, keys = self._parse(rec.frame)
        contact_ok = True
        if isinstance(pkt, RobustPacket):
            contact_ok = evaluate_contact(pkt.header_sig, pkt.scope_header, self.nodes[rec.sender].sig_keypair.pk)
        for rx in rec.receivers:
            if rx in self.adversaries:
                self._observe(rx, rec.frame, rec.round)
            self._receive(rx, rec, pkt, entries, keys, contact_ok)

    def _receive(self, rx: int, rec: TransmissionRecord, pkt, entries, keys, contact_ok: bool) -> None:
        state = self.nodes[rx]
        flows = [self.scenario.flow(f) for f, _ in rec.natives]
        is_next = [f.next_hop(rec.sender) == rx for f in flows]
        if not contact_ok:
            for (flow_id, pkt_id), nxt in zip(rec.natives, is_next):
                if nxt:
                    self._drop(rec.round, rx, flow_id, pkt_id, 'contact_signature')
            return
        known = [state.pool.get(k) for k in keys]
        unknown = [i for i, n in enumerate(known) if n is None]
        if len(unknown) == 1:
            u = unknown[0]
            try:
                native = self._recover(pkt, entries, keys, known, u, rec)
            except ScopeError as e:
                logger.debug("N%d cannot decode F%d: %s", rx, rec.natives[u][0], e)
                if is_next[u]:
                    self._drop(rec.round, rx, *rec.natives[u], 'decode')
                native = None
            if native is not None:
                state.pool[native.match_key] = native
                known[u] = native
        elif len(unknown) > 1:
            logger.debug("N%d holds too few natives to decode a frame from N%d", rx, rec.sender)
        for (flow_id, pkt_id), flow, nxt, native in zip(rec.natives, flows, is_next, known):
            if native is None:
                continue
            state.heard.setdefault(rec.sender, [])
            if pkt_id not in state.heard[rec.sender]:
                state.heard[rec.sender].append(pkt_id)
            if not nxt or (flow_id, pkt_id) in state.handled:
                continue
            state.handled.add((flow_id, pkt_id))
            state.acked.setdefault(rec.sender, []).append(pkt_id)
            if rx == flow.destination:
                self._deliver(rx, flow, native, rec.round)
            else:
                state.queue.append(native)

    def _recover(self, pkt, entries, keys, known, u: int, rec: TransmissionRecord) -> NativeRecord:
        """Rebuild the single unknown native of a frame from the natives already held."""
        flow_id, pkt_id = rec.natives[u]
        source = self.scenario.flow(flow_id).source
        others = [n for i, n in enumerate(known) if i != u]
        if isinstance(pkt, CopePacket):
            framed = _xor_all([pkt.payload] + [n.payload for n in others])
            (length,) = struct.unpack('>H', framed[:2])
            return NativeRecord(flow_id, pkt_id, source, keys[u], entries[u], framed[:2 + length])
        residual = strip_contributions(pkt.payload, [n.payload for n in others])
        while residual and residual[-1].is_zero:
            residual.pop()
        if not residual or any(len(c.layer_keys) != 1 for c in residual):
            raise LayerError("residual payload is not a single-layer ciphertext list")
        sig = None
        if isinstance(pkt, RobustPacket):
            offset = sum(len(n.payload_sig.sigs) for n in known[:u])
            size = len(pkt.payload_sig.sigs) - sum(len(n.payload_sig.sigs) for n in others)
            sig = SignPayload(pkt.payload_sig.sigs[offset:offset + size])
        return NativeRecord(flow_id, pkt_id, source, keys[u], entries[u], tuple(residual), sig)

    def _deliver(self, rx: int, flow: FlowSpec, native: NativeRecord, rnd: int) -> None:
        state = self.nodes[rx]
        tampered = self._tampered(flow.flow_id)
        if self.mode == 'robust':
            src_pk = self.nodes[flow.source].sig_keypair.pk
            if native.payload_sig is None or not evaluate_payload(native.payload_sig, native.payload, src_pk):
                self._drop(rnd, rx, flow.flow_id, native.pkt_id, 'source_signature')
                if tampered is not None:
                    tampered.detections.append({'flow': flow.flow_id, 'detected': True, 'node': rx})
                return
        try:
            if self.mode == 'cope':
                data = _unframe(native.payload)
            else:
                data = decrypt_payload(state.keypair, native.payload)
        except ScopeError as e:
            logger.debug("N%d failed to decrypt F%d: %s", rx, flow.flow_id, e)
            self._drop(rnd, rx, flow.flow_id, native.pkt_id, 'decode')
            return
        state.received[flow.flow_id] = data
        if tampered is not None:
            tampered.detections.append({'flow': flow.flow_id, 'detected': False, 'node': rx})
        logger.debug("round %d: N%d delivers F%d (%d bytes)", rnd, rx, flow.flow_id, len(data))

    def _drop(self, rnd: int, node: int, flow_id: int, pkt_id: int, reason: str) -> None:
        logger.debug("round %d: N%d drops F%d (%s)", rnd, node, flow_id, reason)
        self.log.drops.append(DropRecord(rnd, node, flow_id, pkt_id, reason))

    # ----------------------------------------
    # adversaries
    # ----------------------------------------

    def _tampered(self, flow_id: int) -> AdversaryReport | None:
        for adv in self.adversaries.values():
            if any(t['flow'] == flow_id for t in adv.tampers):
                return adv
        return None

    def _forge(self, adv: AdversaryReport, native: NativeRecord, rnd: int) -> NativeRecord:
        """Replace the first payload chunk of a relayed native (the signature stays the source's)."""
        adv.tampers.append({'round': rnd, 'flow': native.flow_id, 'pkt_id': native.pkt_id})
        logger.debug("round %d: N%d tampers with F%d", rnd, adv.node, native.flow_id)
        if self.mode == 'cope':
            forged = bytes(b ^ 0x5A for b in _unframe(native.payload))
            return replace(native, payload=struct.pack('>H', len(forged)) + forged)
        first = native.payload[0]
        pk_dest = self.directory[first.layer_keys[0]]
        chunk = FORGED_CHUNK[:chunk_capacity(self.params)]
        forged = encrypt(self.params, pk_dest, encode_chunk(self.params, chunk), self.params.random_scalar(self.rng))
        return replace(native, payload=(forged,) + tuple(native.payload[1:]))

    def _observe(self, node: int, frame: bytes, rnd: int) -> None:
        """Record a frame and try the subtraction inference against earlier ones."""
        adv = self.adversaries[node]
        adv.observed.append(frame)
        try:
            pkt, _, keys = self._parse(frame)
        except ParseError:
            return
        view = (frozenset(keys), pkt.payload)
        for old_keys, old_payload in self._views[node]:
            for big, big_payload, small, small_payload in ((view[0], view[1], old_keys, old_payload),
                                                            (old_keys, old_payload, view[0], view[1])):
                if small < big and len(big) == len(small) + 1:
                    adv.inferences.append(self._subtract(rnd, big_payload, small_payload))
        self._views[node].append(view)

    def _subtract(self, rnd: int, big, small) -> dict:
        if isinstance(big, bytes):
            framed = _xor_all([big, small])
            return {'round': rnd, 'outcome': 'plaintext', 'data': _unframe(framed).hex()}
        try:
            residual = strip_contributions(big, [small])
        except ScopeError:
            return {'round': rnd, 'outcome': 'failed', 'data': ''}
        data = b''.join(c.to_bytes() for c in residual if not c.is_zero)
        return {'round': rnd, 'outcome': 'ciphertext', 'data': data.hex()}


def run(scenario: Scenario, mode: str = 'scope', payloads: Mapping[int, bytes] | None = None, seed: int = 0,
        *, adversaries: Iterable[tuple[int, str]] = (), **options) -> RunResult:
    """Build a Simulator, attach adversaries, run it."""
    sim = Simulator(scenario, mode, payloads, seed, **options)
    for node, adv_mode in adversaries:
        sim.attach_adversary(node, adv_mode)
    return sim.run()
