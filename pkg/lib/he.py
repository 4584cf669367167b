#!/usr/bin/env python3
"""
Additively homomorphic EC-ElGamal over the binary curves of lib.group.

A ciphertext is (R, S) = (sum r_u*B, M + sum r_u*K_u) plus the ordered list
of key identifiers it is layered under. Adding ciphertexts adds plaintexts;
subtracting a known contribution removes it again (point addition is not
self-inverse, so removal is an explicit subtraction).

Key identifiers are the first 4 bytes of SHA-256 over the public key's
point bytes.

Wire layout of a ciphertext:
    [R point bytes] [S point bytes] [u8 layer count] [4-byte key id] * count
"""
from __future__ import annotations

import hashlib
import logging
import secrets
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand

from .errors import GroupError, LayerError, ProtocolError
from .group import IDENTITY, GroupParams, Point, point_from_bytes, point_to_bytes

logger = logging.getLogger(__name__)

KEY_ID_LEN = 4
FLOW_KEY_LEN = 32


# ============================================
# KEYS
# ============================================

def key_id(params: GroupParams, pk: Point) -> bytes:
    return hashlib.sha256(point_to_bytes(params, pk)).digest()[:KEY_ID_LEN]


@dataclass(frozen=True)
class KeyPair:
    params: GroupParams
    sk: int
    pk: Point

    @property
    def key_id(self) -> bytes:
        return key_id(self.params, self.pk)


@dataclass(frozen=True)
class FlowKey:
    """32-byte secret shared by the two endpoints of a flow."""
    secret: bytes

    def __post_init__(self):
        if len(self.secret) != FLOW_KEY_LEN:
            raise ProtocolError(f"flow key must be {FLOW_KEY_LEN} bytes, got {len(self.secret)}")

    @classmethod
    def generate(cls, rng=None) -> FlowKey:
        """Fresh key; `rng` (random.Random) makes it reproducible for simulations."""
        if rng is None:
            return cls(secrets.token_bytes(FLOW_KEY_LEN))
        return cls(rng.randbytes(FLOW_KEY_LEN))


def keygen(rng, params: GroupParams) -> KeyPair:
    """sk uniform in [1, n), pk = sk*B."""
    sk = params.random_scalar(rng)
    return KeyPair(params, sk, params.mul(sk, params.base))


# ============================================
# CIPHERTEXT
# ============================================

@dataclass(frozen=True)
class Ciphertext:
    params: GroupParams
    R: Point
    S: Point
    layer_keys: tuple[bytes, ...]

    def __post_init__(self):
        if not self.layer_keys and not self.is_zero:
            raise LayerError("ciphertext without layers must be the zero ciphertext")

    @classmethod
    def zero(cls, params: GroupParams) -> Ciphertext:
        """R = S = Identity, no layers: the additive zero every party can add or remove."""
        return cls(params, IDENTITY, IDENTITY, ())

    @property
    def is_zero(self) -> bool:
        return self.R.is_identity and self.S.is_identity

    def to_bytes(self) -> bytes:
        if len(self.layer_keys) > 255:
            raise LayerError("more than 255 layers")
        return (point_to_bytes(self.params, self.R)
                + point_to_bytes(self.params, self.S)
                + bytes([len(self.layer_keys)])
                + b''.join(self.layer_keys))


def _read_point(params: GroupParams, data: bytes, offset: int) -> tuple[Point, int]:
    if offset >= len(data):
        raise GroupError("truncated point")
    size = 1 if data[offset] == 0x00 else params.point_len
    if offset + size > len(data):
        raise GroupError("truncated point")
    return point_from_bytes(params, data[offset:offset + size]), offset + size


def ct_from_bytes(params: GroupParams, data: bytes, offset: int = 0) -> tuple[Ciphertext, int]:
    """
    Parse one ciphertext starting at `offset`.

    Returns:
        (ciphertext, offset just past it)

    Raises:
        GroupError / LayerError on truncated or malformed input
    """
    R, offset = _read_point(params, data, offset)
    S, offset = _read_point(params, data, offset)
    if offset >= len(data):
        raise GroupError("truncated layer count")
    count = data[offset]
    offset += 1
    end = offset + count * KEY_ID_LEN
    if end > len(data):
        raise GroupError("truncated layer keys")
    layers = tuple(data[i:i + KEY_ID_LEN] for i in range(offset, end, KEY_ID_LEN))
    return Ciphertext(params, R, S, layers), end


# ============================================
# ENCRYPTION
# ============================================

def encrypt(params: GroupParams, pk: Point, M: Point, r: int) -> Ciphertext:
    """(r*B, M + r*pk) under the single layer pk."""
    if r % params.n == 0:
        raise LayerError("encryption randomness must be nonzero mod n")
    params.require(pk, M)
    R = params.mul(r, params.base)
    S = params.add(M, params.mul(r, pk))
    return Ciphertext(params, R, S, (key_id(params, pk),))


def encrypt_random(rng, params: GroupParams, pk: Point, M: Point) -> Ciphertext:
    return encrypt(params, pk, M, params.random_scalar(rng))


def derive_scalar(params: GroupParams, key: bytes, message: bytes) -> int:
    """
    HKDF-Expand (SHA-256) of `message` under `key`, 64 bits past n, reduced; never zero.

    A zero result is redrawn with a 4-byte attempt counter appended to the info.
    """
    need = (params.n.bit_length() + 7) // 8 + 8
    attempt = 0
    while True:
        info = message + attempt.to_bytes(4, 'big')
        okm = HKDFExpand(algorithm=hashes.SHA256(), length=need, info=info).derive(key)
        r = int.from_bytes(okm, 'big') % params.n
        if r:
            return r
        attempt += 1


def encrypt_det(params: GroupParams, pk: Point, M: Point, fk: FlowKey) -> Ciphertext:
    """
    encrypt() with r = PRF(fk, M || pk).

    Equal (fk, M, pk) give byte-identical ciphertexts.
    """
    r = derive_scalar(params, fk.secret, point_to_bytes(params, M) + point_to_bytes(params, pk))
    return encrypt(params, pk, M, r)


def encrypt_det_layered(params: GroupParams, pks: Sequence[Point], M: Point, fk: FlowKey) -> Ciphertext:
    """
    M under every key of `pks`, one layer each, in order.

    Each layer draws its own r from PRF(fk, tag || M || pks || index). Equal
    (fk, M, pks) give byte-identical results; no layer shares randomness with
    encrypt_det or with another layer.
    """
    if not pks:
        raise LayerError("layered encryption needs at least one key")
    context = b'layered' + point_to_bytes(params, M) + b''.join(point_to_bytes(params, pk) for pk in pks)
    C = None
    for index, pk in enumerate(pks):
        r = derive_scalar(params, fk.secret, context + bytes([index]))
        C = encrypt(params, pk, M, r) if C is None else add_layer(C, pk, r)
    return C


def decrypt(key: KeyPair | int, C: Ciphertext) -> Point:
    """
    S - sk*R for a single-layer ciphertext.

    Raises:
        LayerError: more than one layer, or the layer is not keyed to `key`
    """
    if len(C.layer_keys) != 1:
        raise LayerError(f"decrypt needs exactly one layer, ciphertext has {len(C.layer_keys)}")
    params = C.params
    if isinstance(key, KeyPair):
        sk, kid = key.sk, key.key_id
    else:
        sk = key
        kid = key_id(params, params.mul(sk, params.base))
    if kid != C.layer_keys[0]:
        raise LayerError(f"ciphertext is keyed to {C.layer_keys[0].hex()}, not {kid.hex()}")
    return params.sub(C.S, params.mul(sk, C.R))


# ============================================
# HOMOMORPHIC OPERATIONS
# ============================================

def _same_params(C1: Ciphertext, C2: Ciphertext) -> GroupParams:
    if C1.params != C2.params:
        raise GroupError(f"curve mismatch: {C1.params.name} vs {C2.params.name}")
    return C1.params


def ct_add(C1: Ciphertext, C2: Ciphertext) -> Ciphertext:
    params = _same_params(C1, C2)
    return Ciphertext(params, params.add(C1.R, C2.R), params.add(C1.S, C2.S),
                      C1.layer_keys + C2.layer_keys)


def _layer_difference(outer: tuple[bytes, ...], inner: tuple[bytes, ...]) -> tuple[bytes, ...]:
    remaining = Counter(inner)
    if remaining - Counter(outer):
        raise LayerError("subtrahend carries layers the ciphertext does not have")
    kept = []
    for layer in outer:
        if remaining[layer]:
            remaining[layer] -= 1
        else:
            kept.append(layer)
    return tuple(kept)


def ct_sub(C1: Ciphertext, C2: Ciphertext) -> Ciphertext:
    """Remove contribution C2 from C1; C2's layers must be a sub-multiset of C1's."""
    params = _same_params(C1, C2)
    layers = _layer_difference(C1.layer_keys, C2.layer_keys)
    return Ciphertext(params, params.sub(C1.R, C2.R), params.sub(C1.S, C2.S), layers)


def ct_sum(params: GroupParams, cts: Iterable[Ciphertext]) -> Ciphertext:
    total = Ciphertext.zero(params)
    for C in cts:
        total = ct_add(total, C)
    return total


def ct_difference_is_zero(C1: Ciphertext, C2: Ciphertext) -> bool:
    """True iff ct_sub(C1, C2) would be the zero ciphertext with no layers left."""
    if C1.params != C2.params or Counter(C1.layer_keys) != Counter(C2.layer_keys):
        return False
    params = C1.params
    return params.sub(C1.R, C2.R).is_identity and params.sub(C1.S, C2.S).is_identity


def add_layer(C: Ciphertext, pk2: Point, r2: int) -> Ciphertext:
    """(R + r2*B, S + r2*pk2), layer pk2 appended."""
    params = C.params
    if r2 % params.n == 0:
        raise LayerError("layer randomness must be nonzero mod n")
    params.require(pk2)
    return Ciphertext(params,
                      params.add(C.R, params.mul(r2, params.base)),
                      params.add(C.S, params.mul(r2, pk2)),
                      C.layer_keys + (key_id(params, pk2),))
