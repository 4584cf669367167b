#!/usr/bin/env python3
"""
Elliptic-curve group over GF(2^m) used by every cipher in scope-sim.

Contents:
- BinaryField / FieldElement: polynomial-basis arithmetic over GF(2^m),
  coefficient vectors packed into Python ints (bit i = coefficient of t^i)
- GroupParams / Point: binary curves y^2 + xy = x^3 + ax^2 + b with the
  group law, scalar multiplication and point (de)serialization
- the NIST curves B-163, B-283, B-409, B-571 and a small toy curve that
  can be enumerated exhaustively by tests
- encode_chunk / decode_chunk: try-and-increment map between short byte
  strings and curve points

Point serialization (uncompressed):
    Identity      -> 0x00
    (x, y)        -> 0x04 || x || y     (each ceil(m/8) bytes, big-endian)

Message encoding, x-coordinate layout (floor(m/8) bytes, big-endian):
    [1-byte length] [payload] [zero padding] [1-byte counter]

Scalar multiplication uses Lopez-Dahab projective coordinates so that only
one field inversion is paid per multiplication; multiples of the base point
go through a cached comb table. Nothing here is constant-time.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

from .errors import EncodingError, GroupError, NotAMessagePoint

logger = logging.getLogger(__name__)


# ============================================
# GF(2^m) - POLYNOMIAL BASIS
# ============================================

def _clmul(a: int, b: int) -> int:
    """Carry-less product of two bit vectors, 4-bit window over the smaller operand."""
    if a < b:
        a, b = b, a
    if b == 0:
        return 0
    table = [0] * 16
    table[1] = a
    for i in range(2, 16, 2):
        table[i] = table[i >> 1] << 1
        table[i + 1] = table[i] ^ a
    r = 0
    shift = (b.bit_length() - 1) & ~3
    while shift >= 0:
        r = (r << 4) ^ table[(b >> shift) & 15]
        shift -= 4
    return r


def _trace_mask(m: int, exponents: tuple[int, ...]) -> int:
    """
    Bit mask T such that Tr(a) = parity(a & T).

    Tr(t^i) is the i-th power sum of the roots of the reduction polynomial,
    obtained from Newton's identities (in characteristic 2 the elementary
    symmetric function e_k is the coefficient of t^(m-k)).
    """
    ks = {m - e for e in exponents}
    sums = [0] * m
    sums[0] = m & 1
    mask = sums[0]
    for i in range(1, m):
        acc = (i & 1) if i in ks else 0
        for k in ks:
            if k < i:
                acc ^= sums[i - k]
        sums[i] = acc
        if acc:
            mask |= 1 << i
    return mask


@dataclass(frozen=True)
class BinaryField:
    """
    GF(2^m) defined by t^m + sum(t^e for e in exponents).

    Args:
        m: extension degree
        exponents: exponents of the reduction polynomial below m, constant term included
    """
    m: int
    exponents: tuple[int, ...]
    poly: int = field(init=False, repr=False, compare=False)
    mask: int = field(init=False, repr=False, compare=False)
    trace_mask: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 2 or 0 not in self.exponents or any(not 0 <= e < self.m for e in self.exponents):
            raise GroupError(f"invalid reduction polynomial for GF(2^{self.m}): {self.exponents}")
        poly = 1 << self.m
        for e in self.exponents:
            poly |= 1 << e
        object.__setattr__(self, 'poly', poly)
        object.__setattr__(self, 'mask', (1 << self.m) - 1)
        object.__setattr__(self, 'trace_mask', _trace_mask(self.m, self.exponents))

    @property
    def byte_len(self) -> int:
        return (self.m + 7) // 8

    def reduce(self, x: int) -> int:
        m = self.m
        mask = self.mask
        exponents = self.exponents
        while x >> m:
            hi = x >> m
            x &= mask
            for e in exponents:
                x ^= hi << e
        return x

    def mul(self, a: int, b: int) -> int:
        return self.reduce(_clmul(a, b))

    def sqr(self, a: int) -> int:
        # squaring spreads the coefficients: bit i moves to bit 2i
        return self.reduce(int('0'.join(format(a, 'b')), 2))

    def inv(self, a: int) -> int:
        """Inverse by the binary-polynomial extended Euclidean algorithm."""
        if a == 0:
            raise GroupError("zero has no inverse")
        u, v = a, self.poly
        g1, g2 = 1, 0
        while u != 1:
            j = u.bit_length() - v.bit_length()
            if j < 0:
                u, v = v, u
                g1, g2 = g2, g1
                j = -j
            u ^= v << j
            g1 ^= g2 << j
        return self.reduce(g1)

    def trace(self, a: int) -> int:
        return (a & self.trace_mask).bit_count() & 1

    def half_trace(self, c: int) -> int:
        """sum of c^(4^i) for i in 0..(m-1)/2; m must be odd."""
        h = c
        for _ in range((self.m - 1) // 2):
            h = self.sqr(self.sqr(h)) ^ c
        return h

    def sqrt(self, a: int) -> int:
        for _ in range(self.m - 1):
            a = self.sqr(a)
        return a

    def solve_quadratic(self, c: int) -> int | None:
        """
        Solve z^2 + z = c.

        Returns:
            one root z (the other is z + 1), or None when Tr(c) = 1
        """
        if not self.m & 1:
            raise GroupError("quadratic solver requires an odd extension degree")
        if self.trace(c):
            return None
        return self.half_trace(c)

    def element(self, bits: int) -> FieldElement:
        return FieldElement(bits, self)


@dataclass(frozen=True)
class FieldElement:
    """Element of a BinaryField; bits is the packed coefficient vector."""
    bits: int
    gf: BinaryField

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.gf.m:
            raise GroupError(f"value does not fit GF(2^{self.gf.m})")

    def __add__(self, other: FieldElement) -> FieldElement:
        return fe_add(self, other)

    def __mul__(self, other: FieldElement) -> FieldElement:
        return fe_mul(self, other)

    def __bytes__(self) -> bytes:
        return self.bits.to_bytes(self.gf.byte_len, 'big')


def _same_field(a: FieldElement, b: FieldElement) -> BinaryField:
    if a.gf != b.gf:
        raise GroupError(f"field mismatch: GF(2^{a.gf.m}) vs GF(2^{b.gf.m})")
    return a.gf


def fe_add(a: FieldElement, b: FieldElement) -> FieldElement:
    gf = _same_field(a, b)
    return FieldElement(a.bits ^ b.bits, gf)


def fe_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    gf = _same_field(a, b)
    return FieldElement(gf.mul(a.bits, b.bits), gf)


def fe_sqr(a: FieldElement) -> FieldElement:
    return FieldElement(a.gf.sqr(a.bits), a.gf)


def fe_inv(a: FieldElement) -> FieldElement:
    return FieldElement(a.gf.inv(a.bits), a.gf)


# ============================================
# CURVE POINTS
# ============================================

@dataclass(frozen=True)
class Point:
    """Affine point; x = y = None is the point at infinity."""
    x: int | None = None
    y: int | None = None

    @property
    def is_identity(self) -> bool:
        return self.x is None


IDENTITY = Point()

# Lopez-Dahab identity: Z = 0
_LD_IDENTITY = (1, 0, 0)


@dataclass(frozen=True)
class GroupParams:
    """
    Binary curve y^2 + xy = x^3 + a*x^2 + b over `gf` with base point of prime
    order n and cofactor h. Curve coefficients and coordinates are packed
    coefficient vectors of `gf`.
    """
    name: str
    gf: BinaryField
    a: int
    b: int
    base: Point
    n: int
    h: int

    @property
    def m(self) -> int:
        return self.gf.m

    @property
    def reduction_poly(self) -> int:
        return self.gf.poly

    @property
    def byte_len(self) -> int:
        return self.gf.byte_len

    @property
    def point_len(self) -> int:
        """Serialized size of a non-identity point."""
        return 1 + 2 * self.gf.byte_len

    @property
    def chunk_capacity(self) -> int:
        return chunk_capacity(self)

    # ----------------------------------------
    # affine group law
    # ----------------------------------------

    def contains(self, P: Point) -> bool:
        if P.is_identity:
            return True
        x, y = P.x, P.y
        if x < 0 or y < 0 or x >> self.m or y >> self.m:
            return False
        gf = self.gf
        x2 = gf.sqr(x)
        lhs = gf.sqr(y) ^ gf.mul(x, y)
        rhs = gf.mul(x2, x) ^ gf.mul(self.a, x2) ^ self.b
        return lhs == rhs

    def require(self, *points: Point) -> None:
        for P in points:
            if not self.contains(P):
                raise GroupError(f"point not on curve {self.name}")

    def neg(self, P: Point) -> Point:
        if P.is_identity:
            return P
        return Point(P.x, P.x ^ P.y)

    def double(self, P: Point) -> Point:
        if P.is_identity or P.x == 0:
            return IDENTITY
        gf = self.gf
        x, y = P.x, P.y
        lam = x ^ gf.mul(y, gf.inv(x))
        x3 = gf.sqr(lam) ^ lam ^ self.a
        y3 = gf.sqr(x) ^ gf.mul(lam ^ 1, x3)
        return Point(x3, y3)

    def add(self, P: Point, Q: Point) -> Point:
        if P.is_identity:
            return Q
        if Q.is_identity:
            return P
        x1, y1, x2, y2 = P.x, P.y, Q.x, Q.y
        if x1 == x2:
            if y2 == x1 ^ y1:
                return IDENTITY
            return self.double(P)
        gf = self.gf
        lam = gf.mul(y1 ^ y2, gf.inv(x1 ^ x2))
        x3 = gf.sqr(lam) ^ lam ^ x1 ^ x2 ^ self.a
        y3 = gf.mul(lam, x1 ^ x3) ^ x3 ^ y1
        return Point(x3, y3)

    def sub(self, P: Point, Q: Point) -> Point:
        return self.add(P, self.neg(Q))

    # ----------------------------------------
    # scalar multiplication
    # ----------------------------------------

    def mul(self, k: int, P: Point) -> Point:
        """k*P; multiples of the base point below n use the comb table."""
        if k < 0:
            return self.mul(-k, self.neg(P))
        if k == 0 or P.is_identity:
            return IDENTITY
        if k < self.n and P == self.base:
            return self._comb_mul(k)
        return self._ld_mul(k, P)

    def _ld_double(self, X: int, Y: int, Z: int) -> tuple[int, int, int]:
        if Z == 0 or X == 0:
            return _LD_IDENTITY
        gf = self.gf
        sqr, mul = gf.sqr, gf.mul
        z2 = sqr(Z)
        x2 = sqr(X)
        Z3 = mul(z2, x2)
        bz4 = mul(self.b, sqr(z2))
        X3 = sqr(x2) ^ bz4
        inner = sqr(Y) ^ bz4
        if self.a == 1:
            inner ^= Z3
        elif self.a:
            inner ^= mul(self.a, Z3)
        Y3 = mul(bz4, Z3) ^ mul(X3, inner)
        return X3, Y3, Z3

    def _ld_add_affine(self, X1: int, Y1: int, Z1: int, x2: int, y2: int) -> tuple[int, int, int]:
        """Mixed addition: (X1:Y1:Z1) in LD coordinates plus affine (x2, y2)."""
        if Z1 == 0:
            return x2, y2, 1
        gf = self.gf
        sqr, mul = gf.sqr, gf.mul
        z2 = sqr(Z1)
        A = mul(y2, z2) ^ Y1
        B = mul(x2, Z1) ^ X1
        if B == 0:
            if A == 0:
                return self._ld_double(x2, y2, 1)
            return _LD_IDENTITY
        C = mul(Z1, B)
        if self.a == 1:
            az2 = z2
        elif self.a:
            az2 = mul(self.a, z2)
        else:
            az2 = 0
        D = mul(sqr(B), C ^ az2)
        Z3 = sqr(C)
        E = mul(A, C)
        X3 = sqr(A) ^ D ^ E
        F = X3 ^ mul(x2, Z3)
        G = mul(x2 ^ y2, sqr(Z3))
        Y3 = mul(E ^ Z3, F) ^ G
        return X3, Y3, Z3

    def _ld_to_affine(self, X: int, Y: int, Z: int) -> Point:
        if Z == 0:
            return IDENTITY
        gf = self.gf
        zi = gf.inv(Z)
        return Point(gf.mul(X, zi), gf.mul(Y, gf.sqr(zi)))

    def _ld_mul(self, k: int, P: Point) -> Point:
        X, Y, Z = _LD_IDENTITY
        x2, y2 = P.x, P.y
        for bit in bin(k)[2:]:
            X, Y, Z = self._ld_double(X, Y, Z)
            if bit == '1':
                X, Y, Z = self._ld_add_affine(X, Y, Z, x2, y2)
        return self._ld_to_affine(X, Y, Z)

    def _comb_mul(self, k: int) -> Point:
        X, Y, Z = _LD_IDENTITY
        for row in _comb_table(self):
            digit = k & 15
            k >>= 4
            if digit:
                Q = row[digit]
                X, Y, Z = self._ld_add_affine(X, Y, Z, Q.x, Q.y)
        return self._ld_to_affine(X, Y, Z)

    # ----------------------------------------
    # helpers
    # ----------------------------------------

    def lift_x(self, x: int) -> Point | None:
        """A curve point with abscissa x, or None when x is not an abscissa."""
        gf = self.gf
        if x == 0:
            return Point(0, gf.sqrt(self.b))
        c = x ^ self.a ^ gf.mul(self.b, gf.sqr(gf.inv(x)))
        z = gf.solve_quadratic(c)
        if z is None:
            return None
        return Point(x, gf.mul(x, z))

    def random_scalar(self, rng) -> int:
        return rng.randrange(1, self.n)

    def random_point(self, rng) -> Point:
        return self.mul(self.random_scalar(rng), self.base)


@functools.lru_cache(maxsize=None)
def _comb_table(params: GroupParams) -> tuple[tuple[Point, ...], ...]:
    """rows[i][j] = j * 16^i * B, enough rows to cover any scalar below n."""
    windows = (params.n.bit_length() + 3) // 4
    logger.debug("building comb table for %s (%d windows)", params.name, windows)
    rows = []
    base = params.base
    for _ in range(windows):
        row = [IDENTITY, base]
        for _ in range(14):
            row.append(params.add(row[-1], base))
        rows.append(tuple(row))
        base = params.double(row[8])
    return tuple(rows)


# ============================================
# PUBLIC GROUP OPERATIONS
# ============================================

def is_on_curve(params: GroupParams, P: Point) -> bool:
    return params.contains(P)


def point_add(params: GroupParams, P: Point, Q: Point) -> Point:
    """Group law; raises GroupError if either operand is off the curve."""
    params.require(P, Q)
    return params.add(P, Q)


def point_neg(params: GroupParams, P: Point) -> Point:
    params.require(P)
    return params.neg(P)


def scalar_mul(params: GroupParams, k: int, P: Point) -> Point:
    params.require(P)
    return params.mul(k, P)


def point_to_bytes(params: GroupParams, P: Point) -> bytes:
    if P.is_identity:
        return b'\x00'
    size = params.byte_len
    return b'\x04' + P.x.to_bytes(size, 'big') + P.y.to_bytes(size, 'big')


def point_from_bytes(params: GroupParams, data: bytes) -> Point:
    """Inverse of point_to_bytes; rejects bad tags, bad lengths and off-curve points."""
    if data == b'\x00':
        return IDENTITY
    size = params.byte_len
    if len(data) != 1 + 2 * size or data[0] != 0x04:
        raise GroupError("malformed point encoding")
    P = Point(int.from_bytes(data[1:1 + size], 'big'), int.from_bytes(data[1 + size:], 'big'))
    if not params.contains(P):
        raise GroupError(f"point not on curve {params.name}")
    return P


def fe_to_bytes(a: FieldElement) -> bytes:
    return bytes(a)


# ============================================
# MESSAGE <-> POINT CODEC
# ============================================

COUNTER_LIMIT = 256


def chunk_capacity(params: GroupParams) -> int:
    """Largest chunk (bytes) encode_chunk accepts on this curve."""
    return params.m // 8 - 2


def encode_chunk(params: GroupParams, chunk: bytes) -> Point:
    """
    Map up to chunk_capacity bytes to a curve point (try-and-increment).

    Raises:
        EncodingError: chunk too long, curve too small, or no counter value
                       produced an abscissa
    """
    capacity = chunk_capacity(params)
    if capacity < 0:
        raise EncodingError(f"curve {params.name} is too small to carry messages")
    if len(chunk) > capacity:
        raise EncodingError(f"chunk of {len(chunk)} bytes exceeds capacity {capacity} of {params.name}")
    body = bytes([len(chunk)]) + bytes(chunk) + bytes(capacity - len(chunk))
    for counter in range(COUNTER_LIMIT):
        P = params.lift_x(int.from_bytes(body + bytes([counter]), 'big'))
        if P is not None:
            return P
    raise EncodingError(f"no curve point found for chunk after {COUNTER_LIMIT} counters")


def decode_chunk(params: GroupParams, P: Point) -> bytes:
    """Inverse of encode_chunk; NotAMessagePoint when the framing is invalid."""
    if P.is_identity or not params.contains(P):
        raise NotAMessagePoint("not a message point")
    width = params.m // 8
    if width < 2 or P.x >> (8 * width):
        raise NotAMessagePoint("not a message point")
    raw = P.x.to_bytes(width, 'big')
    length = raw[0]
    if length > width - 2 or any(raw[1 + length:-1]):
        raise NotAMessagePoint("not a message point")
    return raw[1:1 + length]


# ============================================
# NIST BINARY CURVES (FIPS 186, polynomial basis)
# ============================================

B163 = GroupParams(
    name='B-163',
    gf=BinaryField(163, (7, 6, 3, 0)),
    a=1,
    b=0x20A601907B8C953CA1481EB10512F78744A3205FD,
    base=Point(0x3F0EBA16286A2D57EA0991168D4994637E8343E36,
               0x0D51FBC6C71A0094FA2CDD545B11C5C0C797324F1),
    n=0x40000000000000000000292FE77E70C12A4234C33,
    h=2,
)

B283 = GroupParams(
    name='B-283',
    gf=BinaryField(283, (12, 7, 5, 0)),
    a=1,
    b=0x27B680AC8B8596DA5A4AF8A19A0303FCA97FD7645309FA2A581485AF6263E313B79A2F5,
    base=Point(0x5F939258DB7DD90E1934F8C70B0DFEC2EED25B8557EAC9C80E2E198F8CDBECD86B12053,
               0x3676854FE24141CB98FE6D4B20D02B4516FF702350EDDB0826779C813F0DF45BE8112F4),
    n=7770675568902916283677847627294075626569625924376904889109196526770044277787378692871,
    h=2,
)

B409 = GroupParams(
    name='B-409',
    gf=BinaryField(409, (87, 0)),
    a=1,
    b=0x021A5C2C8EE9FEB5C4B9A753B7B476B7FD6422EF1F3DD674761FA99D6AC27C8A9A197B272822F6CD57A55AA4F50AE317B13545F,
    base=Point(0x15D4860D088DDB3496B0C6064756260441CDE4AF1771D4DB01FFE5B34E59703DC255A868A1180515603AEAB60794E54BB7996A7,
               0x061B1CFAB6BE5F32BBFA78324ED106A7636B9C5A7BD198D0158AA4F5488D08F38514F1FDF4B4F40D2181B3681C364BA0273C706),
    n=0x10000000000000000000000000000000000000000000000000001E2AAD6A612F33307BE5FA47C3C9E052F838164CD37D9A21173,
    h=2,
)

B571 = GroupParams(
    name='B-571',
    gf=BinaryField(571, (10, 5, 2, 0)),
    a=1,
    b=0x2F40E7E2221F295DE297117B7F3D62F5C6A97FFCB8CEFF1CD6BA8CE4A9A18AD84FFABBD8EFA59332BE7AD6756A66E294AFD185A78FF12AA520E4DE739BACA0C7FFEFF7F2955727A,
    base=Point(0x303001D34B856296C16C0D40D3CD7750A93D1D2955FA80AA5F40FC8DB7B2ABDBDE53950F4C0D293CDD711A35B67FB1499AE60038614F1394ABFA3B4C850D927E1E7769C8EEC2D19,
               0x37BF27342DA639B6DCCFFFEB73D69D78C6C27A6009CBBCA1980F8533921E8A684423E43BAB08A576291AF8F461BB2A8B3531D2F0485C19B16E2F1516E23DD3C1A4827AF1B8AC15B),
    n=0x3FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFE661CE18FF55987308059B186823851EC7DD9CA1161DE93D5174D66E8382E9BB2FE84E47,
    h=2,
)

CURVES: dict[int, GroupParams] = {163: B163, 283: B283, 409: B409, 571: B571}
ECC_BITS = tuple(CURVES)


def curve_for_bits(bits: int) -> GroupParams:
    try:
        return CURVES[bits]
    except KeyError:
        raise GroupError(f"unsupported ECC size {bits}; choose one of {', '.join(map(str, ECC_BITS))}") from None


def curve_by_name(name: str) -> GroupParams:
    for params in CURVES.values():
        if params.name == name:
            return params
    toy = toy_curve()
    if name == toy.name:
        return toy
    raise GroupError(f"unknown curve {name!r}")


# ============================================
# TOY CURVE
# ============================================

# small odd-degree fields, tried in order until one yields order 2*prime
TOY_FIELDS = ((7, (1, 0)), (9, (4, 0)), (11, (2, 0)))


def _is_prime(k: int) -> bool:
    if k < 2:
        return False
    i = 2
    while i * i <= k:
        if k % i == 0:
            return False
        i += 1
    return True


def count_points(gf: BinaryField, a: int, b: int) -> int:
    """#E(GF(2^m)) by counting abscissas whose quadratic is solvable (m odd)."""
    total = 2  # identity and (0, sqrt(b))
    for x in range(1, 1 << gf.m):
        c = x ^ a ^ gf.mul(b, gf.sqr(gf.inv(x)))
        if not gf.trace(c):
            total += 2
    return total


@functools.lru_cache(maxsize=None)
def toy_curve() -> GroupParams:
    """
    Smallest curve y^2 + xy = x^3 + x^2 + b over TOY_FIELDS with order 2*n, n prime.

    The search is deterministic, so every process sees the same curve.
    """
    for m, exponents in TOY_FIELDS:
        gf = BinaryField(m, exponents)
        for b in range(1, 1 << m):
            order = count_points(gf, 1, b)
            if order % 2 or not _is_prime(order // 2):
                continue
            n = order // 2
            probe = GroupParams(f'toy-2^{m}', gf, 1, b, IDENTITY, n, 2)
            for x in range(1, 1 << m):
                P = probe.lift_x(x)
                if P is None:
                    continue
                B = probe.double(P)
                if not B.is_identity and probe._ld_mul(n, B).is_identity:
                    logger.debug("toy curve: m=%d b=%d order=%d", m, b, order)
                    return GroupParams(f'toy-2^{m}', gf, 1, b, B, n, 2)
    raise GroupError("no toy curve found")


def enumerate_points(params: GroupParams) -> list[Point]:
    """Every point of a small curve, identity first."""
    points = [IDENTITY]
    for x in range(1 << params.m):
        P = params.lift_x(x)
        if P is None:
            continue
        points.append(P)
        other = params.neg(P)
        if other != P:
            points.append(other)
    return points
