#!/usr/bin/env python3
"""
Packet model and wire format for COPE, SCOPE and robust SCOPE frames.

Frame layout (big-endian throughout, see docs/wire_format.md):

    MAC stub (14)       dst(6) | src(6) | frame type(2)
    header              [u8 n] coding entries | [u8 n] reception reports | [u8 n] ack reports
    routing stub (8)
    IP stub (20)
    robust only:        SignScope  [u8 n] sigs | [u8 n] sigs | [u8 n] sigs
                        SignPayload [u8 n] sigs
    payload             SCOPE: [u8 n] ciphertexts    COPE: [u16 len] bytes

COPE header fields are plaintext integers (ids 4 bytes, bitmaps 8 bytes);
in a SCOPE header every field is a Ciphertext and only the section counts
stay readable. Counts in the header and SignScope are entry counts; every
coding entry has two fields and every report or ack entry has three.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Callable

from .auth import Signature, SignPayload, SignScope, sig_curve
from .errors import ParseError, ScopeError
from .group import GroupParams, Point, decode_chunk, encode_chunk
from .he import Ciphertext, FlowKey, KeyPair, ct_from_bytes, decrypt, encrypt_det

logger = logging.getLogger(__name__)

# ============================================
# CONSTANTS
# ============================================

MAC_LEN = 14
ROUTING_LEN = 8
IP_LEN = 20
ID_LEN = 4
BITMAP_LEN = 8
MAX_ENTRIES = 255

FRAME_COPE = 0x7C01
FRAME_SCOPE = 0x7C02
FRAME_ROBUST = 0x7C03
FRAME_TYPES = {FRAME_COPE: 'cope', FRAME_SCOPE: 'scope', FRAME_ROBUST: 'robust'}

BROADCAST = b'\xff' * 6
ROUTING_STUB = b'\x00' * ROUTING_LEN
IP_STUB = b'\x45' + b'\x00' * (IP_LEN - 1)

CODING_FIELDS = ('pkt_id', 'next_hop')
REPORT_FIELDS = ('src_ip', 'last_pkt', 'bitmap')
ACK_FIELDS = ('neighbor', 'last_ack', 'ack_map')

# byte width of each plaintext field
FIELD_WIDTH = {
    'pkt_id': ID_LEN, 'next_hop': ID_LEN,
    'src_ip': ID_LEN, 'last_pkt': ID_LEN, 'bitmap': BITMAP_LEN,
    'neighbor': ID_LEN, 'last_ack': ID_LEN, 'ack_map': BITMAP_LEN,
}


def node_mac(node: int) -> bytes:
    """Locally administered MAC for a simulated node."""
    return b'\x02\x00' + node.to_bytes(ID_LEN, 'big')


def mac_stub(src: int, frame_type: int, dst: int | None = None) -> bytes:
    dst_mac = BROADCAST if dst is None else node_mac(dst)
    return dst_mac + node_mac(src) + frame_type.to_bytes(2, 'big')


def frame_type_of(mac_header: bytes) -> int:
    return int.from_bytes(mac_header[12:14], 'big')


# ============================================
# PLAINTEXT (COPE) HEADER
# ============================================

@dataclass(frozen=True)
class CodingEntry:
    pkt_id: int
    next_hop: int


@dataclass(frozen=True)
class ReceptionEntry:
    src_ip: int
    last_pkt: int
    bitmap: int


@dataclass(frozen=True)
class AckEntry:
    neighbor: int
    last_ack: int
    ack_map: int


@dataclass(frozen=True)
class CopeHeader:
    coding_report: tuple[CodingEntry, ...] = ()
    reception_reports: tuple[ReceptionEntry, ...] = ()
    ack_reports: tuple[AckEntry, ...] = ()

    def __add__(self, other: CopeHeader) -> CopeHeader:
        return CopeHeader(self.coding_report + other.coding_report,
                          self.reception_reports + other.reception_reports,
                          self.ack_reports + other.ack_reports)


@dataclass(frozen=True)
class CopePacket:
    """Plaintext COPE frame, carried on the air in cope mode."""
    mac_header: bytes
    header: CopeHeader
    routing_header: bytes
    ip_header: bytes
    payload: bytes


# ============================================
# ENCRYPTED (SCOPE) HEADER AND PACKETS
# ============================================

@dataclass(frozen=True)
class EncCodingEntry:
    pkt_id: Ciphertext
    next_hop: Ciphertext


@dataclass(frozen=True)
class EncReceptionEntry:
    src_ip: Ciphertext
    last_pkt: Ciphertext
    bitmap: Ciphertext


@dataclass(frozen=True)
class EncAckEntry:
    neighbor: Ciphertext
    last_ack: Ciphertext
    ack_map: Ciphertext


@dataclass(frozen=True)
class ScopeHeader:
    coding_report: tuple[EncCodingEntry, ...] = ()
    reception_reports: tuple[EncReceptionEntry, ...] = ()
    ack_reports: tuple[EncAckEntry, ...] = ()

    def sections(self) -> tuple[list[Ciphertext], list[Ciphertext], list[Ciphertext]]:
        """Encrypted fields of each section, flattened in header order."""
        return (
            [getattr(e, f) for e in self.coding_report for f in CODING_FIELDS],
            [getattr(e, f) for e in self.reception_reports for f in REPORT_FIELDS],
            [getattr(e, f) for e in self.ack_reports for f in ACK_FIELDS],
        )

    def __add__(self, other: ScopeHeader) -> ScopeHeader:
        return ScopeHeader(self.coding_report + other.coding_report,
                           self.reception_reports + other.reception_reports,
                           self.ack_reports + other.ack_reports)


@dataclass(frozen=True)
class ScopePacket:
    mac_header: bytes
    scope_header: ScopeHeader
    routing_header: bytes
    ip_header: bytes
    payload: tuple[Ciphertext, ...]


@dataclass(frozen=True)
class RobustPacket(ScopePacket):
    """ScopePacket plus contact and source signatures (between IP stub and payload)."""
    header_sig: SignScope = SignScope()
    payload_sig: SignPayload = SignPayload()
    sig_bits: int = 384


# ============================================
# FIELD ENCRYPTION
# ============================================

def _field_point(params: GroupParams, name: str, value: int) -> Point:
    return encode_chunk(params, value.to_bytes(FIELD_WIDTH[name], 'big'))


def _encrypt_entry(params, entry, names, cls, fk: FlowKey, pk_dest: Point):
    return cls(*(encrypt_det(params, pk_dest, _field_point(params, n, getattr(entry, n)), fk) for n in names))


def encrypt_header(params: GroupParams, h: CopeHeader, fk: FlowKey, pk_dest: Point) -> ScopeHeader:
    """
    Encrypt every field with encrypt_det under pk_dest.

    Raises:
        EncodingError: a field does not fit the curve's chunk capacity
    """
    return ScopeHeader(
        tuple(_encrypt_entry(params, e, CODING_FIELDS, EncCodingEntry, fk, pk_dest) for e in h.coding_report),
        tuple(_encrypt_entry(params, e, REPORT_FIELDS, EncReceptionEntry, fk, pk_dest) for e in h.reception_reports),
        tuple(_encrypt_entry(params, e, ACK_FIELDS, EncAckEntry, fk, pk_dest) for e in h.ack_reports),
    )


def decrypt_field(kp: KeyPair, C: Ciphertext) -> int:
    return int.from_bytes(decode_chunk(C.params, decrypt(kp, C)), 'big')


def decrypt_header(h: ScopeHeader, kp: KeyPair) -> CopeHeader:
    """Holder-of-key inverse of encrypt_header."""
    def plain(entry, names, cls):
        return cls(*(decrypt_field(kp, getattr(entry, n)) for n in names))

    return CopeHeader(
        tuple(plain(e, CODING_FIELDS, CodingEntry) for e in h.coding_report),
        tuple(plain(e, REPORT_FIELDS, ReceptionEntry) for e in h.reception_reports),
        tuple(plain(e, ACK_FIELDS, AckEntry) for e in h.ack_reports),
    )


# ============================================
# SERIALIZATION
# ============================================

def _count(n: int, section: str) -> bytes:
    if n > MAX_ENTRIES:
        raise ParseError(section, f"{n} entries exceed the one-byte count")
    return bytes([n])


def _check_stub(data: bytes, size: int, section: str) -> bytes:
    if len(data) != size:
        raise ParseError(section, f"stub must be {size} bytes, got {len(data)}")
    return data


def _serialize_cope_header(h: CopeHeader) -> bytes:
    out = bytearray(_count(len(h.coding_report), 'cope_header.coding'))
    for e in h.coding_report:
        out += struct.pack('>II', e.pkt_id, e.next_hop)
    out += _count(len(h.reception_reports), 'cope_header.report')
    for e in h.reception_reports:
        out += struct.pack('>IIQ', e.src_ip, e.last_pkt, e.bitmap)
    out += _count(len(h.ack_reports), 'cope_header.ack')
    for e in h.ack_reports:
        out += struct.pack('>IIQ', e.neighbor, e.last_ack, e.ack_map)
    return bytes(out)


def _serialize_scope_header(h: ScopeHeader) -> bytes:
    out = bytearray()
    sections = (('scope_header.coding', h.coding_report, CODING_FIELDS),
                ('scope_header.report', h.reception_reports, REPORT_FIELDS),
                ('scope_header.ack', h.ack_reports, ACK_FIELDS))
    for section, entries, names in sections:
        out += _count(len(entries), section)
        for e in entries:
            for n in names:
                out += getattr(e, n).to_bytes()
    return bytes(out)


def _serialize_signatures(p: RobustPacket) -> bytes:
    out = bytearray()
    per_entry = (len(CODING_FIELDS), len(REPORT_FIELDS), len(ACK_FIELDS))
    names = ('header_sig.encode', 'header_sig.report', 'header_sig.ack')
    for sigs, k, section in zip(p.header_sig.sections(), per_entry, names):
        if len(sigs) % k:
            raise ParseError(section, f"{len(sigs)} signatures do not cover whole entries")
        out += _count(len(sigs) // k, section)
        for s in sigs:
            out += s.to_bytes(p.sig_bits)
    out += _count(len(p.payload_sig.sigs), 'payload_sig')
    for s in p.payload_sig.sigs:
        out += s.to_bytes(p.sig_bits)
    return bytes(out)


def serialize(p: CopePacket | ScopePacket | RobustPacket) -> bytes:
    """Deterministic byte image of a packet."""
    if isinstance(p, CopePacket):
        if len(p.payload) > 0xFFFF:
            raise ParseError('payload', "payload longer than 65535 bytes")
        return (_check_stub(p.mac_header, MAC_LEN, 'mac_header')
                + _serialize_cope_header(p.header)
                + _check_stub(p.routing_header, ROUTING_LEN, 'routing_header')
                + _check_stub(p.ip_header, IP_LEN, 'ip_header')
                + struct.pack('>H', len(p.payload)) + p.payload)
    out = bytearray(_check_stub(p.mac_header, MAC_LEN, 'mac_header'))
    out += _serialize_scope_header(p.scope_header)
    out += _check_stub(p.routing_header, ROUTING_LEN, 'routing_header')
    out += _check_stub(p.ip_header, IP_LEN, 'ip_header')
    if isinstance(p, RobustPacket):
        out += _serialize_signatures(p)
    out += _count(len(p.payload), 'payload')
    for c in p.payload:
        out += c.to_bytes()
    return bytes(out)


class _Reader:
    """Cursor over a frame; every failure becomes a ParseError naming the section."""

    def __init__(self, data: bytes, params: GroupParams | None = None):
        self.data = data
        self.params = params
        self.pos = 0

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(section, f"truncated: need {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, section: str) -> int:
        return self.take(1, section)[0]

    def ciphertext(self, section: str) -> Ciphertext:
        try:
            ct, self.pos = ct_from_bytes(self.params, self.data, self.pos)
        except ScopeError as e:
            raise ParseError(section, str(e)) from None
        return ct

    def entries(self, section: str, build: Callable):
        return tuple(build() for _ in range(self.u8(section)))

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise ParseError('trailer', f"{len(self.data) - self.pos} trailing bytes")


def _parse_cope(r: _Reader, mac: bytes) -> CopePacket:
    def unpack(fmt, size, section):
        return struct.unpack(fmt, r.take(size, section))

    header = CopeHeader(
        r.entries('cope_header.coding', lambda: CodingEntry(*unpack('>II', 8, 'cope_header.coding'))),
        r.entries('cope_header.report', lambda: ReceptionEntry(*unpack('>IIQ', 16, 'cope_header.report'))),
        r.entries('cope_header.ack', lambda: AckEntry(*unpack('>IIQ', 16, 'cope_header.ack'))),
    )
    routing = r.take(ROUTING_LEN, 'routing_header')
    ip = r.take(IP_LEN, 'ip_header')
    (length,) = struct.unpack('>H', r.take(2, 'payload'))
    payload = r.take(length, 'payload')
    r.finish()
    return CopePacket(mac, header, routing, ip, payload)


def _parse_scope_header(r: _Reader) -> ScopeHeader:
    def entry(cls, names, section):
        return lambda: cls(*(r.ciphertext(section) for _ in names))

    return ScopeHeader(
        r.entries('scope_header.coding', entry(EncCodingEntry, CODING_FIELDS, 'scope_header.coding')),
        r.entries('scope_header.report', entry(EncReceptionEntry, REPORT_FIELDS, 'scope_header.report')),
        r.entries('scope_header.ack', entry(EncAckEntry, ACK_FIELDS, 'scope_header.ack')),
    )


def _parse_signatures(r: _Reader, sig_bits: int) -> tuple[SignScope, SignPayload]:
    width = sig_curve(sig_bits).sig_len

    def sigs(count: int, section: str) -> tuple[Signature, ...]:
        return tuple(Signature.from_bytes(r.take(width, section), sig_bits) for _ in range(count))

    encode = sigs(r.u8('header_sig.encode') * len(CODING_FIELDS), 'header_sig.encode')
    report = sigs(r.u8('header_sig.report') * len(REPORT_FIELDS), 'header_sig.report')
    ack = sigs(r.u8('header_sig.ack') * len(ACK_FIELDS), 'header_sig.ack')
    payload = sigs(r.u8('payload_sig'), 'payload_sig')
    return SignScope(encode, report, ack), SignPayload(payload)


def deserialize(data: bytes, params: GroupParams, sig_bits: int = 384) -> CopePacket | ScopePacket | RobustPacket:
    """
    Exact inverse of serialize.

    Args:
        params: curve the ciphertexts live on
        sig_bits: ECDSA size of robust frames (384 or 521)

    Raises:
        ParseError: truncation, bad counts, malformed points, unknown frame
                    type or trailing bytes; `.section` names the culprit
    """
    r = _Reader(bytes(data), params)
    mac = r.take(MAC_LEN, 'mac_header')
    frame_type = frame_type_of(mac)
    if frame_type not in FRAME_TYPES:
        raise ParseError('mac_header', f"unknown frame type 0x{frame_type:04x}")
    if frame_type == FRAME_COPE:
        return _parse_cope(r, mac)
    header = _parse_scope_header(r)
    routing = r.take(ROUTING_LEN, 'routing_header')
    ip = r.take(IP_LEN, 'ip_header')
    if frame_type == FRAME_ROBUST:
        header_sig, payload_sig = _parse_signatures(r, sig_bits)
    payload = r.entries('payload', lambda: r.ciphertext('payload'))
    r.finish()
    if frame_type == FRAME_ROBUST:
        return RobustPacket(mac, header, routing, ip, payload, header_sig, payload_sig, sig_bits)
    return ScopePacket(mac, header, routing, ip, payload)


def minimal_length(kind: str) -> int:
    """Length of a frame whose sections are all empty."""
    base = MAC_LEN + 3 + ROUTING_LEN + IP_LEN
    return {'cope': base + 2, 'scope': base + 1, 'robust': base + 4 + 1}[kind]
