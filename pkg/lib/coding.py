#!/usr/bin/env python3
"""
Coding decisions and payload coding.

Plaintext side (what a COPE relay evaluates):
    compute_hop_sets / coding_condition
        N_m may code packets of flows F_i and F_j when
        (NH_i <= NB(X_j) or NH_i == PH_j) and (NH_j <= NB(X_i) or NH_j == PH_i)
        with X_i the previous hop of F_i and NB(X) its neighbour set.

Encrypted side (what a SCOPE relay evaluates without any secret key):
    ConditionSession runs the twice-encryption exchange between the previous
    hops X_i, X_j and the relay; equal_list / subset_list compare the
    resulting double-layer ciphertexts by identity difference.

Payload side:
    split_payload / encrypt_payload / decrypt_payload, code_payload (chunkwise
    ct_add with zero padding) and decode_payload (strip known contributions,
    decrypt the residual).
"""
from __future__ import annotations

import json
import logging
import secrets
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import EncodingError, LayerError, ProtocolError, ScenarioError
from .group import GroupParams, Point, chunk_capacity, decode_chunk, encode_chunk
from .he import (
    Ciphertext, FlowKey, KeyPair, ct_add, ct_difference_is_zero, ct_sub,
    decrypt, encrypt, encrypt_det_layered, encrypt_random,
)

logger = logging.getLogger(__name__)


# ============================================
# PLAINTEXT CODING CONDITION
# ============================================

@dataclass(frozen=True)
class HopSets:
    """Next hops, previous hops and the previous hops' neighbour sets of one flow at one node."""
    nh: frozenset[int]
    ph: frozenset[int]
    nb_ph: Mapping[int, frozenset[int]] = field(default_factory=dict)

    @property
    def nb(self) -> frozenset[int]:
        """Neighbours of the previous hop(s)."""
        return frozenset().union(*self.nb_ph.values()) if self.nb_ph else frozenset()


def compute_hop_sets(topo, flow, node: int) -> HopSets:
    """
    Read NH/PH from the flow path and NB(X) from the topology.

    Raises:
        ScenarioError: node is not on the flow's path
    """
    path = list(flow.path)
    if node not in path:
        raise ScenarioError(f"node {node} is not on flow {flow.flow_id}")
    i = path.index(node)
    nh = frozenset(path[i + 1:i + 2])
    ph = frozenset(path[i - 1:i]) if i > 0 else frozenset()
    return HopSets(nh, ph, {x: frozenset(topo.neighbors(x)) for x in ph})


def _side(nh: frozenset[int], other: HopSets) -> bool:
    return nh <= other.nb or nh == other.ph


def coding_condition(hs_i: HopSets, hs_j: HopSets) -> bool:
    """Both next hops already hold the other flow's packet (subset read as non-strict)."""
    return _side(hs_i.nh, hs_j) and _side(hs_j.nh, hs_i)


# ============================================
# ENCRYPTED LIST COMPARISON
# ============================================

def _dedupe(cts: Sequence[Ciphertext]) -> list[Ciphertext]:
    unique: list[Ciphertext] = []
    for c in cts:
        if not any(ct_difference_is_zero(c, u) for u in unique):
            unique.append(c)
    return unique


def equal_list(lx: Sequence[Ciphertext], ly: Sequence[Ciphertext]) -> bool:
    """
    Set equality of two encrypted lists.

    Counts cross pairs whose difference is the zero ciphertext; equal iff that
    count matches both (deduplicated) list sizes.
    """
    ux, uy = _dedupe(lx), _dedupe(ly)
    if len(ux) != len(uy):
        return False
    count = sum(1 for x in ux for y in uy if ct_difference_is_zero(x, y))
    return count == len(ux) == len(uy)


def subset_list(la: Sequence[Ciphertext], lb: Sequence[Ciphertext]) -> bool:
    return all(any(ct_difference_is_zero(a, b) for b in lb) for a in la)


# ============================================
# SECURE CODING-CONDITION EXCHANGE
# ============================================

def node_point(params: GroupParams, node: int) -> Point:
    """Curve point carrying a NodeId (4-byte chunk; small multiples of B on tiny curves)."""
    if chunk_capacity(params) >= 4:
        return encode_chunk(params, node.to_bytes(4, 'big'))
    return params.mul(node + 1, params.base)


class Stage(Enum):
    INIT = 'init'
    SINGLE = 'single'
    RELAYED = 'relayed'
    DOUBLE = 'double'
    DONE = 'done'


@dataclass(frozen=True)
class ConditionParty:
    """
    Previous hop X of one flow at the relay, with what it knows about that flow:
    the relay's next hop for the flow, itself as PH, and its own neighbours.
    """
    node: int
    keypair: KeyPair
    nh: frozenset[int]
    ph: frozenset[int]
    nb: frozenset[int]

    @classmethod
    def from_hop_sets(cls, keypair: KeyPair, hs: HopSets) -> ConditionParty:
        if len(hs.ph) != 1:
            raise ProtocolError(f"secure exchange needs exactly one previous hop, got {sorted(hs.ph)}")
        (node,) = hs.ph
        return cls(node, keypair, hs.nh, hs.ph, hs.nb_ph[node])

    def lists(self) -> dict[str, list[int]]:
        return {'nh': sorted(self.nh), 'ph': sorted(self.ph), 'nb': sorted(self.nb)}


class ConditionSession:
    """
    One run of the twice-encryption exchange for flows F_i, F_j at `relay`.

    Stages, each advanced by one caller:
        INIT    -> emit_single():       X_i, X_j send their lists, single layer under the peer's key
        SINGLE  -> relay_lists():       the relay swaps the lists between X_i and X_j
        RELAYED -> add_second_layers(): each party opens the lists addressed to it and
                                        re-encrypts every entry under both keys
        DOUBLE  -> evaluate():          the relay compares double-layer lists and decides

    Single-layer entries use fresh randomness, so the relay cannot match them
    across parties or against the double layer. Double-layer entries draw every
    layer's randomness from the pair key (encrypt_det_layered over (K_i, K_j)),
    so equal NodeIds end up as identical double-layer ciphertexts.
    """

    def __init__(self, params: GroupParams, relay: int, party_i: ConditionParty,
                 party_j: ConditionParty, pair_key: FlowKey | None, rng=None):
        if pair_key is None:
            raise ProtocolError("parties share no pair key")
        if party_i.keypair.params != params or party_j.keypair.params != params:
            raise ProtocolError("party keys are not on the session curve")
        self.params = params
        self.relay = relay
        self.party_i = party_i
        self.party_j = party_j
        self.pair_key = pair_key
        self.rng = rng if rng is not None else secrets.SystemRandom()
        self.layer_order = (party_i.keypair.pk, party_j.keypair.pk)
        self.stage = Stage.INIT
        self.transcript: list[dict] = []
        self.verdict: bool | None = None
        self._single: dict[str, dict[str, list[Ciphertext]]] = {}
        self._double: dict[str, dict[str, list[Ciphertext]]] = {}

    def _expect(self, stage: Stage) -> None:
        if self.stage is not stage:
            raise ProtocolError(f"exchange is at stage {self.stage.value}, expected {stage.value}")

    def _record(self, stage: Stage, sender: int, receiver: int, about: str,
                lists: Mapping[str, Sequence[Ciphertext]]) -> None:
        self.transcript.append({
            'stage': stage.value,
            'from': sender,
            'to': receiver,
            'lists_of': about,
            'lists': {name: [c.to_bytes().hex() for c in cts] for name, cts in lists.items()},
        })

    def _encrypt_lists(self, party: ConditionParty, peer: ConditionParty) -> dict[str, list[Ciphertext]]:
        pk = peer.keypair.pk
        return {
            name: [encrypt_random(self.rng, self.params, pk, node_point(self.params, n)) for n in values]
            for name, values in party.lists().items()
        }

    def _double_lists(self, opener: ConditionParty, lists: Mapping[str, Sequence[Ciphertext]]
                      ) -> dict[str, list[Ciphertext]]:
        return {
            name: [encrypt_det_layered(self.params, self.layer_order, decrypt(opener.keypair, c), self.pair_key)
                   for c in cts]
            for name, cts in lists.items()
        }

    def emit_single(self) -> None:
        self._expect(Stage.INIT)
        for tag, party, peer in (('i', self.party_i, self.party_j), ('j', self.party_j, self.party_i)):
            self._single[tag] = self._encrypt_lists(party, peer)
            self._record(Stage.SINGLE, party.node, self.relay, tag, self._single[tag])
        self.stage = Stage.SINGLE

    def relay_lists(self) -> None:
        self._expect(Stage.SINGLE)
        self._record(Stage.RELAYED, self.relay, self.party_j.node, 'i', self._single['i'])
        self._record(Stage.RELAYED, self.relay, self.party_i.node, 'j', self._single['j'])
        self.stage = Stage.RELAYED

    def add_second_layers(self) -> None:
        self._expect(Stage.RELAYED)
        for tag, opener in (('i', self.party_j), ('j', self.party_i)):
            self._double[tag] = self._double_lists(opener, self._single[tag])
            self._record(Stage.DOUBLE, opener.node, self.relay, tag, self._double[tag])
        self.stage = Stage.DOUBLE

    def evaluate(self) -> bool:
        self._expect(Stage.DOUBLE)
        li, lj = self._double['i'], self._double['j']
        side_i = subset_list(li['nh'], lj['nb']) or equal_list(li['nh'], lj['ph'])
        side_j = subset_list(lj['nh'], li['nb']) or equal_list(lj['nh'], li['ph'])
        self.verdict = side_i and side_j
        self.stage = Stage.DONE
        logger.debug("secure condition at %d for X_i=%d X_j=%d: %s",
                     self.relay, self.party_i.node, self.party_j.node, self.verdict)
        return self.verdict

    def run(self) -> bool:
        self.emit_single()
        self.relay_lists()
        self.add_second_layers()
        return self.evaluate()

    def transcript_json(self) -> str:
        return json.dumps({'relay': self.relay, 'verdict': self.verdict, 'messages': self.transcript}, indent=2)

    def transcript_bytes(self) -> bytes:
        """Every ciphertext the relay saw or forwarded, concatenated."""
        return b''.join(bytes.fromhex(h) for msg in self.transcript
                        for cts in msg['lists'].values() for h in cts)

    def message_count(self) -> int:
        return len(self.transcript)


def secure_coding_condition(ctx: ConditionSession) -> bool:
    """Run (or finish) the exchange and return the relay's verdict."""
    if ctx.stage is Stage.DONE:
        return bool(ctx.verdict)
    steps = {Stage.INIT: ctx.emit_single, Stage.SINGLE: ctx.relay_lists,
             Stage.RELAYED: ctx.add_second_layers, Stage.DOUBLE: ctx.evaluate}
    while ctx.stage is not Stage.DONE:
        steps[ctx.stage]()
    return bool(ctx.verdict)


# ============================================
# PAYLOAD CHUNKING
# ============================================

def split_payload(params: GroupParams, payload: bytes, size: int | None = None) -> list[bytes]:
    """Chunks of at most `size` (default: chunk capacity) bytes; an empty payload is one empty chunk."""
    size = chunk_capacity(params) if size is None else size
    if size <= 0:
        raise EncodingError(f"curve {params.name} cannot carry payload chunks")
    if not payload:
        return [b'']
    return [payload[i:i + size] for i in range(0, len(payload), size)]


def _encode_points(params: GroupParams, chunk: bytes) -> list[Point]:
    try:
        return [encode_chunk(params, chunk)]
    except EncodingError:
        if len(chunk) < 2:
            raise
        half = len(chunk) // 2
        logger.debug("re-splitting %d-byte chunk after encoding failure", len(chunk))
        return _encode_points(params, chunk[:half]) + _encode_points(params, chunk[half:])


def encrypt_payload(rng, params: GroupParams, payload: bytes, pk: Point) -> list[Ciphertext]:
    """Randomized encryption of every chunk; a fresh r per chunk."""
    points = [P for chunk in split_payload(params, payload) for P in _encode_points(params, chunk)]
    return [encrypt(params, pk, P, params.random_scalar(rng)) for P in points]


def decrypt_payload(kp: KeyPair, cts: Sequence[Ciphertext]) -> bytes:
    return b''.join(decode_chunk(kp.params, decrypt(kp, c)) for c in cts)


# ============================================
# PAYLOAD CODING / DECODING
# ============================================

def pad_chunk_lists(chunk_lists: Sequence[Sequence[Ciphertext]]) -> list[list[Ciphertext]]:
    """Pad every list with zero ciphertexts up to the longest one."""
    params = next((c.params for cl in chunk_lists for c in cl), None)
    if params is None:
        return [[] for _ in chunk_lists]
    longest = max(len(cl) for cl in chunk_lists)
    zero = Ciphertext.zero(params)
    return [list(cl) + [zero] * (longest - len(cl)) for cl in chunk_lists]


def code_payload(chunk_lists: Sequence[Sequence[Ciphertext]]) -> list[Ciphertext]:
    """
    Chunkwise sum of several packets' payloads.

    Raises:
        LayerError: chunk counts differ (pad with pad_chunk_lists first)
    """
    if not chunk_lists:
        raise LayerError("nothing to code")
    lengths = {len(cl) for cl in chunk_lists}
    if len(lengths) != 1:
        raise LayerError(f"chunk-count mismatch: {sorted(lengths)}")
    coded = list(chunk_lists[0])
    for cl in chunk_lists[1:]:
        coded = [ct_add(a, b) for a, b in zip(coded, cl)]
    return coded


def strip_contributions(coded: Sequence[Ciphertext], known: Iterable[Sequence[Ciphertext]]) -> list[Ciphertext]:
    """Subtract every known payload (zero-padded to the coded length) chunkwise."""
    residual = list(coded)
    for cl in known:
        if len(cl) > len(residual):
            raise LayerError("known payload is longer than the coded payload")
        for k, c in enumerate(cl):
            residual[k] = ct_sub(residual[k], c)
    return residual


def decode_payload(coded: Sequence[Ciphertext], known: Iterable[Sequence[Ciphertext]],
                   kp_self: KeyPair) -> list[bytes]:
    """
    Recover the chunks addressed to kp_self.

    Zero residuals are padding and are skipped.

    Raises:
        LayerError: a residual is not a single layer under kp_self (missing or extra contribution)
        NotAMessagePoint: the decrypted point carries no valid framing
    """
    chunks = []
    for c in strip_contributions(coded, known):
        if c.is_zero and not c.layer_keys:
            continue
        if c.layer_keys != (kp_self.key_id,):
            raise LayerError(f"residual has layers {[k.hex() for k in c.layer_keys]}, "
                             f"expected only {kp_self.key_id.hex()}")
        chunks.append(decode_chunk(c.params, decrypt(kp_self, c)))
    return chunks


def decode_payload_bytes(coded: Sequence[Ciphertext], known: Iterable[Sequence[Ciphertext]],
                         kp_self: KeyPair) -> bytes:
    return b''.join(decode_payload(coded, known, kp_self))
