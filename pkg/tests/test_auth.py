#!/usr/bin/env python3
"""
Test suite for lib.auth: ECDSA on P-384 / P-521 and the contact / source
signature procedures.
"""
import dataclasses
import random
import unittest

from support import samples

from lib.auth import (
    ECDSA_BITS, P384, P521, Signature, SignPayload, SignScope,
    ecdsa_sign, ecdsa_verify, evaluate_contact, evaluate_payload, public_key_bytes,
    sig_curve, sig_keygen, sign_header, sign_payload, verify_bytes,
)
from lib.errors import GroupError, ProtocolError
from lib.group import B163
from lib.he import Ciphertext, FlowKey, keygen
from lib.packet import AckEntry, CodingEntry, CopeHeader, ReceptionEntry, encrypt_header


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


SECTIONS = ('coding_report', 'reception_reports', 'ack_reports')


def random_header(rng):
    return CopeHeader(
        tuple(CodingEntry(rng.getrandbits(32), rng.randint(1, 9)) for _ in range(rng.randint(1, 2))),
        tuple(ReceptionEntry(rng.randint(1, 9), rng.getrandbits(32), rng.getrandbits(64))
              for _ in range(rng.randint(1, 2))),
        tuple(AckEntry(rng.randint(1, 9), rng.getrandbits(32), rng.getrandbits(64)) for _ in range(rng.randint(1, 2))),
    )


def one_field_changed(header, change):
    """Every copy of `header` with exactly one entry field replaced by change(value)."""
    for section in SECTIONS:
        entries = getattr(header, section)
        for k, entry in enumerate(entries):
            for f in dataclasses.fields(entry):
                changed = dataclasses.replace(entry, **{f.name: change(getattr(entry, f.name))})
                rebuilt = entries[:k] + (changed,) + entries[k + 1:]
                yield f"{section}[{k}].{f.name}", dataclasses.replace(header, **{section: rebuilt})


def entry_counts_changed(header):
    """Copies of `header` with one entry dropped from, or repeated in, a section."""
    for section in SECTIONS:
        entries = getattr(header, section)
        yield f"{section} minus one", dataclasses.replace(header, **{section: entries[:-1]})
        yield f"{section} plus one", dataclasses.replace(header, **{section: entries + entries[:1]})


def one_signature_changed(sig):
    for k, section in enumerate(sig.sections()):
        for i, s in enumerate(section):
            for label, bad in (('s', Signature(s.r, s.s ^ 1)), ('r', Signature(s.r ^ 1, s.s))):
                sections = list(sig.sections())
                sections[k] = section[:i] + (bad,) + section[i + 1:]
                yield f"section {k} sig {i} {label}", SignScope(*sections)
            sections = list(sig.sections())
            sections[k] = section[:i] + section[i + 1:]
            yield f"section {k} sig {i} dropped", SignScope(*sections)
        if len(section) > 1:
            sections = list(sig.sections())
            sections[k] = section[1:] + section[:1]
            yield f"section {k} rotated", SignScope(*sections)


class TestEcdsa(unittest.TestCase):
    """Sign / verify round trips and tamper checks"""

    def setUp(self):
        self.rng = random.Random(2024)

    def test_curve_constants(self):
        self.assertEqual(P384.sig_len, 96)
        self.assertEqual(P521.sig_len, 132)
        with self.assertRaises(GroupError):
            sig_curve(256)

    def test_round_trip_both_curves(self):
        for bits in ECDSA_BITS:
            kp = sig_keygen(self.rng, bits)
            for use_rng in (True, False):
                sig = ecdsa_sign(kp, b'scope', self.rng if use_rng else None)
                self.assertTrue(ecdsa_verify(kp.pk, b'scope', sig))

    def test_reproducible_with_seeded_rng(self):
        kp = sig_keygen(random.Random(1), 384)
        a = ecdsa_sign(kp, b'm', random.Random(5))
        b = ecdsa_sign(kp, b'm', random.Random(5))
        self.assertEqual(a, b)

    def test_wrong_key_rejected(self):
        for _ in range(samples(100, 5)):
            a, b = sig_keygen(self.rng, 384), sig_keygen(self.rng, 384)
            self.assertFalse(ecdsa_verify(b.pk, b'msg', ecdsa_sign(a, b'msg', self.rng)))

    def test_perturbations_rejected(self):
        for bits in ECDSA_BITS:
            kp = sig_keygen(self.rng, bits)
            msg = self.rng.randbytes(40)
            sig = ecdsa_sign(kp, msg, self.rng).to_bytes(bits)
            pk = public_key_bytes(kp.pk)
            self.assertTrue(verify_bytes(bits, pk, msg, sig))
            for _ in range(samples(1000, 10)):
                self.assertFalse(verify_bytes(bits, pk, flip_bit(msg, self.rng.randrange(len(msg) * 8)), sig))
                self.assertFalse(verify_bytes(bits, pk, msg, flip_bit(sig, self.rng.randrange(len(sig) * 8))))
                self.assertFalse(verify_bytes(bits, flip_bit(pk, self.rng.randrange(8, len(pk) * 8)), msg, sig))

    def test_truncated_message_rejected(self):
        kp = sig_keygen(self.rng, 384)
        sig = ecdsa_sign(kp, b'full message', self.rng)
        self.assertFalse(ecdsa_verify(kp.pk, b'full messag', sig))

    def test_zero_and_out_of_range_components(self):
        kp = sig_keygen(self.rng, 384)
        sig = ecdsa_sign(kp, b'x', self.rng)
        self.assertFalse(ecdsa_verify(kp.pk, b'x', Signature(0, sig.s)))
        self.assertFalse(ecdsa_verify(kp.pk, b'x', Signature(sig.r, 0)))
        self.assertFalse(ecdsa_verify(kp.pk, b'x', Signature(sig.r + P384.order, sig.s)))

    def test_malformed_signature_bytes(self):
        kp = sig_keygen(self.rng, 521)
        self.assertFalse(verify_bytes(521, public_key_bytes(kp.pk), b'x', b'\x01' * 10))
        self.assertFalse(verify_bytes(521, b'\x04garbage', b'x', b'\x01' * 132))

    def test_signature_bytes(self):
        sig = Signature(1, 2)
        data = sig.to_bytes(384)
        self.assertEqual(len(data), 96)
        self.assertEqual(Signature.from_bytes(data, 384), sig)
        self.assertEqual(len(sig.to_bytes(521)), 132)


class TestContactAndSourceSignatures(unittest.TestCase):
    """Per-field and per-chunk signing"""

    @classmethod
    def setUpClass(cls):
        rng = random.Random(77)
        cls.rng = rng
        dest = keygen(rng, B163)
        fk = FlowKey.generate(rng)
        plain = CopeHeader(
            (CodingEntry(1, 3), CodingEntry(2, 3)),
            (ReceptionEntry(4, 9, 0b1011),),
            (AckEntry(5, 7, 0xFF),),
        )
        cls.header = encrypt_header(B163, plain, fk, dest.pk)
        other = CopeHeader((CodingEntry(8, 3),), (), (AckEntry(5, 8, 0xFE),))
        cls.other_header = encrypt_header(B163, other, fk, dest.pk)
        cls.sender = sig_keygen(rng, 384)
        cls.source = sig_keygen(rng, 384)
        cls.chunks = cls.header.sections()[0][:3]

    def test_sign_header_layout(self):
        sig = sign_header(self.sender, self.header, self.rng)
        self.assertEqual(len(sig.sign_encode), 4)   # PKT_ID, NEXTHOP per coding entry
        self.assertEqual(len(sig.sign_report), 3)   # SRC_IP, LAST_PKT, Bit Map
        self.assertEqual(len(sig.sign_ack), 3)      # NEIGHBOR, LAST_ACK, Ack Map
        self.assertTrue(evaluate_contact(sig, self.header, self.sender.pk))

    def test_contact_rejects_wrong_key(self):
        sig = sign_header(self.sender, self.header, self.rng)
        self.assertFalse(evaluate_contact(sig, self.header, self.source.pk))

    def test_contact_rejects_swapped_ack_field(self):
        sig = sign_header(self.sender, self.header, self.rng)
        tampered = type(self.header)(self.header.coding_report, self.header.reception_reports,
                                     self.other_header.ack_reports)
        self.assertFalse(evaluate_contact(sig, tampered, self.sender.pk))

    def test_contact_length_mismatch(self):
        sig = sign_header(self.sender, self.header, self.rng)
        short = SignScope(sig.sign_encode[:-1], sig.sign_report, sig.sign_ack)
        self.assertFalse(evaluate_contact(short, self.header, self.sender.pk))

    def test_empty_header_signs_to_empty_scope(self):
        empty = type(self.header)()
        sig = sign_header(self.sender, empty)
        self.assertEqual(sig, SignScope())
        self.assertTrue(evaluate_contact(sig, empty, self.sender.pk))

    def test_payload_round_trip(self):
        sig = sign_payload(self.source, self.chunks, self.rng)
        self.assertEqual(len(sig.sigs), len(self.chunks))
        self.assertTrue(evaluate_payload(sig, self.chunks, self.source.pk))
        single = sign_payload(self.source, self.chunks[:1], self.rng)
        self.assertTrue(evaluate_payload(single, self.chunks[:1], self.source.pk))

    def test_payload_substitution_and_reordering(self):
        sig = sign_payload(self.source, self.chunks, self.rng)
        substituted = [self.chunks[0], self.other_header.sections()[0][0], self.chunks[2]]
        self.assertFalse(evaluate_payload(sig, substituted, self.source.pk))
        self.assertFalse(evaluate_payload(sig, list(reversed(self.chunks)), self.source.pk))
        self.assertFalse(evaluate_payload(sig, self.chunks[:2], self.source.pk))

    def test_empty_payload_cannot_be_signed(self):
        with self.assertRaises(ProtocolError):
            sign_payload(self.source, [])

    def test_agrees_with_verify_all_oracle(self):
        """Algorithm-style early exit matches checking every signature"""
        fields = self.header.sections()[0] + self.header.sections()[1]
        sig = sign_payload(self.source, fields, self.rng)
        pool = fields + self.other_header.sections()[0]
        for _ in range(samples(1000, 25)):
            candidate = [self.rng.choice(pool) if self.rng.random() < 0.2 else f for f in fields]
            sigs = list(sig.sigs)
            if self.rng.random() < 0.2:
                i = self.rng.randrange(len(sigs))
                sigs[i] = Signature(sigs[i].r, sigs[i].s ^ 1)
            oracle = all(ecdsa_verify(self.source.pk, c.to_bytes(), s) for c, s in zip(candidate, sigs))
            self.assertEqual(evaluate_payload(SignPayload(tuple(sigs)), candidate, self.source.pk), oracle)


class TestContactMutations(unittest.TestCase):
    """evaluate_contact rejects every single change to a signed header"""

    @classmethod
    def setUpClass(cls):
        cls.rng = random.Random(404)
        cls.dest = keygen(cls.rng, B163)
        cls.fk = FlowKey.generate(cls.rng)
        cls.sender = sig_keygen(cls.rng, 384)

    def signed(self, plain):
        header = encrypt_header(B163, plain, self.fk, self.dest.pk)
        sig = sign_header(self.sender, header, self.rng)
        self.assertTrue(evaluate_contact(sig, header, self.sender.pk))
        return header, sig

    def test_plaintext_values(self):
        """Ids, next hops, report and ack values each re-encrypted with one bit changed"""
        for _ in range(samples(1000, 3)):
            plain = random_header(self.rng)
            _, sig = self.signed(plain)
            for where, changed in one_field_changed(plain, lambda v: v ^ 1):
                with self.subTest(field=where):
                    enc = encrypt_header(B163, changed, self.fk, self.dest.pk)
                    self.assertFalse(evaluate_contact(sig, enc, self.sender.pk))

    def test_ciphertext_bytes(self):
        p = B163

        def shift_r(c):
            return Ciphertext(p, p.add(c.R, p.base), c.S, c.layer_keys)

        def shift_s(c):
            return Ciphertext(p, c.R, p.add(c.S, p.base), c.layer_keys)

        def rekey(c):
            return Ciphertext(p, c.R, c.S, (bytes([c.layer_keys[0][0] ^ 0xFF]) + c.layer_keys[0][1:],))

        for _ in range(samples(1000, 3)):
            header, sig = self.signed(random_header(self.rng))
            for change in (shift_r, shift_s, rekey):
                for where, changed in one_field_changed(header, change):
                    with self.subTest(change=change.__name__, field=where):
                        self.assertFalse(evaluate_contact(sig, changed, self.sender.pk))

    def test_entry_counts(self):
        for _ in range(samples(1000, 3)):
            header, sig = self.signed(random_header(self.rng))
            for where, changed in entry_counts_changed(header):
                with self.subTest(change=where):
                    self.assertFalse(evaluate_contact(sig, changed, self.sender.pk))

    def test_signatures(self):
        for _ in range(samples(1000, 3)):
            header, sig = self.signed(random_header(self.rng))
            for where, bad in one_signature_changed(sig):
                with self.subTest(change=where):
                    self.assertFalse(evaluate_contact(bad, header, self.sender.pk))


if __name__ == '__main__':
    unittest.main(verbosity=2)
