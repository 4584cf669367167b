#!/usr/bin/env python3
"""
ECDSA over NIST P-384 / P-521 and the per-field / per-chunk signature
procedures of robust SCOPE.

Contact signature (SignScope): the sending node signs every encrypted header
field separately, grouped as encode, report and ack sections. Source
signature (SignPayload): the source signs every encrypted payload chunk.
Signatures always cover the ciphertext bytes, never the plaintext.

Key derivation, DER encoding and verification go through `cryptography`;
signing with a caller-supplied random.Random draws the nonce here so that
simulations replay bit-for-bit.

Signature bytes: r || s, each big-endian and as wide as the curve order
(48 bytes for P-384, 66 bytes for P-521).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import decode_dss_signature, encode_dss_signature

from .errors import GroupError, ProtocolError

logger = logging.getLogger(__name__)


# ============================================
# SIGNATURE CURVES
# ============================================

@dataclass(frozen=True)
class SigCurve:
    bits: int
    name: str
    curve: Callable[[], ec.EllipticCurve]
    hash: Callable[[], hashes.HashAlgorithm]
    order: int

    @property
    def scalar_len(self) -> int:
        return (self.order.bit_length() + 7) // 8

    @property
    def sig_len(self) -> int:
        return 2 * self.scalar_len

    def digest(self, msg: bytes) -> int:
        h = hashes.Hash(self.hash())
        h.update(msg)
        # SHA-384 / SHA-512 are never wider than the order, no truncation needed
        return int.from_bytes(h.finalize(), 'big')


P384 = SigCurve(
    bits=384, name='P-384', curve=ec.SECP384R1, hash=hashes.SHA384,
    order=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFC7634D81F4372DDF581A0DB248B0A77AECEC196ACCC52973,
)
P521 = SigCurve(
    bits=521, name='P-521', curve=ec.SECP521R1, hash=hashes.SHA512,
    order=0x01FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFA51868783BF2F966B7FCC0148F709A5D03BB5C9B8899C47AEBB6FB71E91386409,
)

SIG_CURVES: dict[int, SigCurve] = {384: P384, 521: P521}
ECDSA_BITS = tuple(SIG_CURVES)


def sig_curve(bits: int) -> SigCurve:
    try:
        return SIG_CURVES[bits]
    except KeyError:
        raise GroupError(f"unsupported ECDSA size {bits}; choose 384 or 521") from None


# ============================================
# KEYS AND SIGNATURES
# ============================================

@dataclass(frozen=True)
class Signature:
    r: int
    s: int

    def to_bytes(self, bits: int) -> bytes:
        width = sig_curve(bits).scalar_len
        return self.r.to_bytes(width, 'big') + self.s.to_bytes(width, 'big')

    @classmethod
    def from_bytes(cls, data: bytes, bits: int) -> Signature:
        width = sig_curve(bits).scalar_len
        if len(data) != 2 * width:
            raise ValueError(f"signature must be {2 * width} bytes, got {len(data)}")
        return cls(int.from_bytes(data[:width], 'big'), int.from_bytes(data[width:], 'big'))


@dataclass(frozen=True)
class SigKeyPair:
    curve: SigCurve
    sk: int
    private_key: ec.EllipticCurvePrivateKey = field(compare=False, repr=False)

    @property
    def bits(self) -> int:
        return self.curve.bits

    @property
    def pk(self) -> ec.EllipticCurvePublicKey:
        return self.private_key.public_key()

    def public_bytes(self) -> bytes:
        return public_key_bytes(self.pk)


def sig_keygen(rng, bits: int = 384) -> SigKeyPair:
    """sk uniform in [1, n) drawn from `rng`."""
    curve = sig_curve(bits)
    sk = rng.randrange(1, curve.order)
    return SigKeyPair(curve, sk, ec.derive_private_key(sk, curve.curve()))


def public_key_bytes(pk: ec.EllipticCurvePublicKey) -> bytes:
    return pk.public_bytes(serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)


def public_key_from_bytes(bits: int, data: bytes) -> ec.EllipticCurvePublicKey:
    """Raises ValueError for points that are not on the curve."""
    return ec.EllipticCurvePublicKey.from_encoded_point(sig_curve(bits).curve(), data)


def ecdsa_sign(kp: SigKeyPair, msg: bytes, rng=None) -> Signature:
    """
    ECDSA signature with a fresh nonce.

    Args:
        rng: random.Random for reproducible nonces; None lets OpenSSL draw one
    """
    curve = kp.curve
    if rng is None:
        r, s = decode_dss_signature(kp.private_key.sign(msg, ec.ECDSA(curve.hash())))
        return Signature(r, s)
    n = curve.order
    z = curve.digest(msg)
    while True:
        k = rng.randrange(1, n)
        x = ec.derive_private_key(k, curve.curve()).public_key().public_numbers().x
        r = x % n
        if r == 0:
            continue
        s = pow(k, -1, n) * (z + r * kp.sk) % n
        if s:
            return Signature(r, s)


def ecdsa_verify(pk: ec.EllipticCurvePublicKey, msg: bytes, sig: Signature) -> bool:
    """True iff sig is valid for msg under pk; malformed input answers False."""
    try:
        curve = sig_curve(pk.curve.key_size)
        if not (0 < sig.r < curve.order and 0 < sig.s < curve.order):
            return False
        pk.verify(encode_dss_signature(sig.r, sig.s), msg, ec.ECDSA(curve.hash()))
        return True
    except InvalidSignature:
        return False
    except (GroupError, ValueError, TypeError, AttributeError, UnsupportedAlgorithm):
        return False


def verify_bytes(bits: int, pk_bytes: bytes, msg: bytes, sig_bytes: bytes) -> bool:
    """ecdsa_verify over wire encodings of key and signature."""
    try:
        pk = public_key_from_bytes(bits, pk_bytes)
        sig = Signature.from_bytes(sig_bytes, bits)
    except (GroupError, ValueError):
        return False
    return ecdsa_verify(pk, msg, sig)


# ============================================
# CONTACT SIGNATURE (per encrypted header field)
# ============================================

@dataclass(frozen=True)
class SignScope:
    sign_encode: tuple[Signature, ...] = ()
    sign_report: tuple[Signature, ...] = ()
    sign_ack: tuple[Signature, ...] = ()

    def sections(self) -> tuple[tuple[Signature, ...], ...]:
        return self.sign_encode, self.sign_report, self.sign_ack

    def __add__(self, other: SignScope) -> SignScope:
        return SignScope(self.sign_encode + other.sign_encode,
                         self.sign_report + other.sign_report,
                         self.sign_ack + other.sign_ack)


@dataclass(frozen=True)
class SignPayload:
    sigs: tuple[Signature, ...] = ()

    def __add__(self, other: SignPayload) -> SignPayload:
        return SignPayload(self.sigs + other.sigs)


def sign_header(kp: SigKeyPair, header, rng=None) -> SignScope:
    """
    One signature per encrypted field of `header`, in header order.

    `header` is anything with sections() -> (encode, report, ack) lists of
    ciphertexts, normally a packet.ScopeHeader.
    """
    encode, report, ack = header.sections()
    return SignScope(
        tuple(ecdsa_sign(kp, f.to_bytes(), rng) for f in encode),
        tuple(ecdsa_sign(kp, f.to_bytes(), rng) for f in report),
        tuple(ecdsa_sign(kp, f.to_bytes(), rng) for f in ack),
    )


def evaluate_contact(sig: SignScope, header, pk_sender: ec.EllipticCurvePublicKey) -> bool:
    """Check encode, then report, then ack fields; False on the first bad one."""
    for sigs, fields in zip(sig.sections(), header.sections()):
        if len(sigs) != len(fields):
            return False
        for s, f in zip(sigs, fields):
            if not ecdsa_verify(pk_sender, f.to_bytes(), s):
                logger.debug("contact signature rejected")
                return False
    return True


# ============================================
# SOURCE SIGNATURE (per encrypted payload chunk)
# ============================================

def sign_payload(kp_source: SigKeyPair, chunks: Sequence, rng=None) -> SignPayload:
    if not chunks:
        raise ProtocolError("cannot sign an empty payload")
    return SignPayload(tuple(ecdsa_sign(kp_source, c.to_bytes(), rng) for c in chunks))


def evaluate_payload(sig: SignPayload, chunks: Sequence, pk_source: ec.EllipticCurvePublicKey) -> bool:
    if len(sig.sigs) != len(chunks):
        return False
    for s, c in zip(sig.sigs, chunks):
        if not ecdsa_verify(pk_source, c.to_bytes(), s):
            logger.debug("source signature rejected")
            return False
    return True
