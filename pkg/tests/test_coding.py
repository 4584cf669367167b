#!/usr/bin/env python3
"""
Test suite for lib.coding: the plaintext coding condition, the encrypted
list comparisons, the twice-encryption exchange and payload coding.
"""
import itertools
import json
import random
import unittest

from support import samples

from lib.coding import (
    ConditionParty, ConditionSession, Stage,
    code_payload, coding_condition, compute_hop_sets, decode_payload, decode_payload_bytes,
    decrypt_payload, encrypt_payload, equal_list, node_point, pad_chunk_lists,
    secure_coding_condition, split_payload, strip_contributions, subset_list,
)
from lib.errors import LayerError, ProtocolError, ScenarioError
from lib.group import B163, point_to_bytes
from lib.he import FlowKey, ct_from_bytes, encrypt_det_layered, keygen
from lib.sim import SCENARIO_IDS, FlowSpec, Topology, build_scenario


def oracle_condition(edges, path_i, path_j, node):
    """Eq.-1 check written directly against an edge list."""
    def nbrs(x):
        return {b for a, b in edges if a == x} | {a for a, b in edges if b == x}

    def hops(path):
        k = path.index(node)
        nh = {path[k + 1]} if k + 1 < len(path) else set()
        ph = {path[k - 1]} if k > 0 else set()
        nb = set().union(*(nbrs(x) for x in ph)) if ph else set()
        return nh, ph, nb

    nh_i, ph_i, nb_i = hops(path_i)
    nh_j, ph_j, nb_j = hops(path_j)
    return (nh_i <= nb_j or nh_i == ph_j) and (nh_j <= nb_i or nh_j == ph_i)


def session_for(topo, flow_i, flow_j, node, keys, fk):
    hs_i = compute_hop_sets(topo, flow_i, node)
    hs_j = compute_hop_sets(topo, flow_j, node)
    (x_i,), (x_j,) = hs_i.ph, hs_j.ph
    return ConditionSession(B163, node,
                            ConditionParty.from_hop_sets(keys[x_i], hs_i),
                            ConditionParty.from_hop_sets(keys[x_j], hs_j), fk)


def shared_interior_pairs(scenario):
    for fi, fj in itertools.combinations(scenario.flows, 2):
        for node in sorted(set(fi.path[1:-1]) & set(fj.path[1:-1])):
            yield fi, fj, node


class TestHopSets(unittest.TestCase):
    """compute_hop_sets"""

    def test_relay_of_two_hop_flow(self):
        s = build_scenario(1)
        hs = compute_hop_sets(s.topology, s.flow(1), 2)
        self.assertEqual(hs.nh, {3})
        self.assertEqual(hs.ph, {1})
        self.assertEqual(hs.nb_ph, {1: frozenset({2})})

    def test_source_has_no_previous_hop(self):
        s = build_scenario(1)
        hs = compute_hop_sets(s.topology, s.flow(1), 1)
        self.assertEqual(hs.ph, frozenset())
        self.assertEqual(hs.nb, frozenset())

    def test_chain_interior_singletons(self):
        s = build_scenario(4)
        for flow in s.flows:
            for k, node in enumerate(flow.path[1:-1], start=1):
                hs = compute_hop_sets(s.topology, flow, node)
                self.assertEqual(hs.nh, {flow.path[k + 1]})
                self.assertEqual(hs.ph, {flow.path[k - 1]})

    def test_node_off_path(self):
        s = build_scenario(2)
        with self.assertRaises(ScenarioError):
            compute_hop_sets(s.topology, s.flow(1), 2)


class TestCodingCondition(unittest.TestCase):
    """Plaintext condition against a hand-written oracle"""

    def test_reverse_flows_code(self):
        s = build_scenario(1)
        topo = s.topology
        self.assertTrue(coding_condition(compute_hop_sets(topo, s.flow(1), 2), compute_hop_sets(topo, s.flow(2), 2)))

    def test_same_direction_flows_do_not_code(self):
        topo = Topology.from_edges([1, 2, 3], [(1, 2), (2, 3)])
        a, b = FlowSpec(1, (1, 2, 3)), FlowSpec(2, (1, 2, 3))
        self.assertFalse(coding_condition(compute_hop_sets(topo, a, 2), compute_hop_sets(topo, b, 2)))

    def test_star_pairs(self):
        s = build_scenario(2)
        hs = {f.flow_id: compute_hop_sets(s.topology, f, 5) for f in s.flows}
        self.assertTrue(coding_condition(hs[1], hs[2]))
        self.assertTrue(coding_condition(hs[3], hs[4]))
        self.assertFalse(coding_condition(hs[1], hs[3]))
        self.assertFalse(coding_condition(hs[2], hs[4]))

    def test_matrix_matches_oracle_on_builtin_scenarios(self):
        for sid in SCENARIO_IDS:
            s = build_scenario(sid)
            edges = s.topology.edges()
            for fi, fj, node in shared_interior_pairs(s):
                with self.subTest(scenario=sid, flows=(fi.flow_id, fj.flow_id), node=node):
                    hs_i = compute_hop_sets(s.topology, fi, node)
                    hs_j = compute_hop_sets(s.topology, fj, node)
                    expected = oracle_condition(edges, fi.path, fj.path, node)
                    self.assertEqual(coding_condition(hs_i, hs_j), expected)
                    self.assertEqual(coding_condition(hs_j, hs_i), expected)

    def test_overhearing_branch(self):
        # next hops overhear the other flow's previous hop; no NH == PH match
        topo = Topology.from_edges([1, 2, 3, 4, 5], [(1, 2), (2, 3), (2, 4), (2, 5), (3, 4), (1, 5)])
        a, b = FlowSpec(1, (1, 2, 3)), FlowSpec(2, (4, 2, 5))
        hs_a, hs_b = compute_hop_sets(topo, a, 2), compute_hop_sets(topo, b, 2)
        self.assertNotEqual(hs_a.nh, hs_b.ph)
        self.assertTrue(coding_condition(hs_a, hs_b))
        self.assertTrue(oracle_condition(topo.edges(), a.path, b.path, 2))


class TestEncryptedLists(unittest.TestCase):
    """equal_list / subset_list against plaintext set oracles"""

    @classmethod
    def setUpClass(cls):
        rng = random.Random(12)
        a, b = keygen(rng, B163), keygen(rng, B163)
        fk = FlowKey.generate(rng)
        cls.double = {n: encrypt_det_layered(B163, (a.pk, b.pk), node_point(B163, n), fk) for n in range(1, 7)}

    def enc(self, values):
        return [self.double[v] for v in values]

    def test_trivial_cases(self):
        self.assertTrue(equal_list(self.enc([3]), self.enc([3])))
        self.assertFalse(equal_list(self.enc([3]), self.enc([3, 4])))
        self.assertTrue(subset_list([], self.enc([1])))
        self.assertTrue(subset_list(self.enc([1, 2]), self.enc([1, 2])))
        self.assertFalse(subset_list(self.enc([5]), []))

    def test_agree_with_set_oracles(self):
        rng = random.Random(99)
        for _ in range(samples(1000, 200)):
            x = [rng.randint(1, 6) for _ in range(rng.randint(0, 4))]
            y = [rng.randint(1, 6) for _ in range(rng.randint(0, 4))]
            with self.subTest(x=x, y=y):
                self.assertEqual(equal_list(self.enc(x), self.enc(y)), set(x) == set(y))
                self.assertEqual(subset_list(self.enc(x), self.enc(y)), set(x) <= set(y))


class TestSecureCondition(unittest.TestCase):
    """Twice-encryption exchange against the plaintext condition"""

    @classmethod
    def setUpClass(cls):
        rng = random.Random(21)
        cls.keys = {n: keygen(rng, B163) for n in range(1, 10)}
        cls.fk = FlowKey.generate(rng)

    def test_reverse_flows_code(self):
        s = build_scenario(1)
        ctx = session_for(s.topology, s.flow(1), s.flow(2), 2, self.keys, self.fk)
        self.assertTrue(secure_coding_condition(ctx))
        self.assertEqual(ctx.stage, Stage.DONE)

    def test_same_direction_flows(self):
        topo = Topology.from_edges([1, 2, 3], [(1, 2), (2, 3)])
        ctx = session_for(topo, FlowSpec(1, (1, 2, 3)), FlowSpec(2, (1, 2, 3)), 2, self.keys, self.fk)
        self.assertFalse(secure_coding_condition(ctx))

    def test_equivalent_on_builtin_scenarios(self):
        for sid in SCENARIO_IDS:
            s = build_scenario(sid)
            for fi, fj, node in shared_interior_pairs(s):
                with self.subTest(scenario=sid, flows=(fi.flow_id, fj.flow_id), node=node):
                    plain = coding_condition(compute_hop_sets(s.topology, fi, node),
                                             compute_hop_sets(s.topology, fj, node))
                    ctx = session_for(s.topology, fi, fj, node, self.keys, self.fk)
                    self.assertEqual(secure_coding_condition(ctx), plain)

    def test_equivalent_on_random_topologies(self):
        rng = random.Random(8)
        checked = 0
        while checked < samples(1000, 6):
            nodes = list(range(1, rng.randint(4, 9) + 1))
            edges = [(a, b) for a, b in itertools.combinations(nodes, 2) if rng.random() < 0.45]
            topo = Topology.from_edges(nodes, edges)
            relays = [n for n in nodes if len(topo.neighbors(n)) >= 2]
            if not relays:
                continue
            m = rng.choice(relays)
            nbrs = sorted(topo.neighbors(m))
            x_i, y_i = rng.sample(nbrs, 2)
            x_j, y_j = rng.sample(nbrs, 2)
            fi, fj = FlowSpec(1, (x_i, m, y_i)), FlowSpec(2, (x_j, m, y_j))
            plain = oracle_condition(edges, fi.path, fj.path, m)
            ctx = session_for(topo, fi, fj, m, self.keys, self.fk)
            self.assertEqual(secure_coding_condition(ctx), plain, (edges, fi.path, fj.path))
            checked += 1

    def test_transcript_hides_node_ids(self):
        s = build_scenario(2)
        ctx = session_for(s.topology, s.flow(1), s.flow(2), 5, self.keys, self.fk)
        ctx.run()
        blob = ctx.transcript_bytes()
        self.assertEqual(ctx.message_count(), 6)
        for n in s.topology.nodes:
            self.assertNotIn(point_to_bytes(B163, node_point(B163, n)), blob)
            self.assertNotIn(n.to_bytes(4, 'big'), blob)
        doc = json.loads(ctx.transcript_json())
        self.assertEqual(doc['relay'], 5)
        self.assertEqual([m['stage'] for m in doc['messages']],
                         ['single', 'single', 'relayed', 'relayed', 'double', 'double'])

    def test_relay_cannot_link_or_open_lists(self):
        """Shared NodeIds leave no common R and no relay-side difference decodes"""
        s = build_scenario(1)
        ctx = session_for(s.topology, s.flow(1), s.flow(2), 2, self.keys, self.fk)
        ctx.run()
        by_stage = {}
        for msg in ctx.transcript:
            cts = [ct_from_bytes(B163, bytes.fromhex(h))[0] for hs in msg['lists'].values() for h in hs]
            by_stage.setdefault(msg['stage'], {}).setdefault(msg['from'], []).extend(cts)
        single_i, single_j = by_stage['single'][1], by_stage['single'][3]
        self.assertFalse({c.R for c in single_i} & {c.R for c in single_j})
        singles = single_i + single_j
        doubles = [c for cts in by_stage['double'].values() for c in cts]
        self.assertFalse({c.R for c in doubles} & {c.R for c in singles})
        ids = {node_point(B163, n) for n in s.topology.nodes}
        for d in doubles:
            for c in singles:
                mask = B163.sub(d.S, c.S)
                self.assertNotIn(mask, ids)
                for other in singles:
                    self.assertNotIn(B163.sub(other.S, mask), ids)

    def test_double_lists_compare_across_parties(self):
        s = build_scenario(1)
        ctx = session_for(s.topology, s.flow(1), s.flow(2), 2, self.keys, self.fk)
        ctx.run()
        doubles = {msg['lists_of']: msg['lists'] for msg in ctx.transcript if msg['stage'] == 'double'}
        # F1 at N2: NH = {3}; F2's previous hop is N3, so NH_i and PH_j are the same value
        self.assertEqual(doubles['i']['nh'], doubles['j']['ph'])
        self.assertEqual(doubles['i']['nb'], doubles['j']['nb'])

    def test_stage_order_enforced(self):
        s = build_scenario(1)
        ctx = session_for(s.topology, s.flow(1), s.flow(2), 2, self.keys, self.fk)
        with self.assertRaises(ProtocolError):
            ctx.evaluate()
        ctx.emit_single()
        with self.assertRaises(ProtocolError):
            ctx.emit_single()

    def test_missing_pair_key(self):
        s = build_scenario(1)
        hs = compute_hop_sets(s.topology, s.flow(1), 2)
        party = ConditionParty.from_hop_sets(self.keys[1], hs)
        with self.assertRaises(ProtocolError):
            ConditionSession(B163, 2, party, party, None)

    def test_party_needs_one_previous_hop(self):
        s = build_scenario(1)
        with self.assertRaises(ProtocolError):
            ConditionParty.from_hop_sets(self.keys[1], compute_hop_sets(s.topology, s.flow(1), 1))


class TestPayloadCoding(unittest.TestCase):
    """Chunking, coding and decoding of encrypted payloads"""

    @classmethod
    def setUpClass(cls):
        cls.rng = random.Random(55)
        cls.keys = [keygen(cls.rng, B163) for _ in range(4)]

    def test_split(self):
        self.assertEqual(split_payload(B163, b''), [b''])
        self.assertEqual([len(c) for c in split_payload(B163, bytes(40))], [18, 18, 4])

    def test_single_packet_unchanged(self):
        cts = encrypt_payload(self.rng, B163, b'lonely', self.keys[0].pk)
        self.assertEqual(code_payload([cts]), cts)
        self.assertEqual(decode_payload_bytes(cts, [], self.keys[0]), b'lonely')

    def test_coded_structure(self):
        kp_i, kp_j = self.keys[:2]
        a = encrypt_payload(self.rng, B163, b'from i to j', kp_j.pk)
        b = encrypt_payload(self.rng, B163, b'from j to i', kp_i.pk)
        (coded,) = code_payload([a, b])
        self.assertEqual(coded.R, B163.add(a[0].R, b[0].R))
        self.assertEqual(sorted(coded.layer_keys), sorted([kp_i.key_id, kp_j.key_id]))

    def test_two_party_exchange(self):
        kp_i, kp_j = self.keys[:2]
        p_ij, p_ji = b'payload for N_j', b'payload for N_i'
        c_ij = encrypt_payload(self.rng, B163, p_ij, kp_j.pk)
        c_ji = encrypt_payload(self.rng, B163, p_ji, kp_i.pk)
        coded = code_payload([c_ij, c_ji])
        self.assertEqual(decode_payload_bytes(coded, [c_ji], kp_j), p_ij)
        self.assertEqual(decode_payload_bytes(coded, [c_ij], kp_i), p_ji)

    def test_all_removal_orders(self):
        for n in (2, 3, 4):
            payloads = [self.rng.randbytes(self.rng.randint(1, 50)) for _ in range(n)]
            cts = [encrypt_payload(self.rng, B163, p, kp.pk) for p, kp in zip(payloads, self.keys)]
            coded = code_payload(pad_chunk_lists(cts))
            for target in range(n):
                others = [cts[k] for k in range(n) if k != target]
                for order in itertools.permutations(others):
                    residual = strip_contributions(coded, order)
                    live = [c for c in residual if not c.is_zero]
                    self.assertEqual([c.to_bytes() for c in live], [c.to_bytes() for c in cts[target]])
                    self.assertEqual(decode_payload_bytes(coded, order, self.keys[target]), payloads[target])

    def test_padding(self):
        short = encrypt_payload(self.rng, B163, b'x', self.keys[0].pk)
        long = encrypt_payload(self.rng, B163, bytes(50), self.keys[1].pk)
        padded = pad_chunk_lists([short, long])
        self.assertEqual([len(p) for p in padded], [3, 3])
        self.assertTrue(padded[0][2].is_zero)
        with self.assertRaises(LayerError):
            code_payload([short, long])

    def test_missing_contribution(self):
        cts = [encrypt_payload(self.rng, B163, b'abc', kp.pk) for kp in self.keys[:3]]
        coded = code_payload(cts)
        with self.assertRaises(LayerError):
            decode_payload(coded, [cts[1]], self.keys[0])

    def test_wrong_recipient(self):
        cts = encrypt_payload(self.rng, B163, b'abc', self.keys[0].pk)
        with self.assertRaises(LayerError):
            decode_payload(cts, [], self.keys[1])

    def test_conservation(self):
        rng = random.Random(3)
        for _ in range(samples(100, 3)):
            payloads = [rng.randbytes(rng.randint(1, 60)) for _ in range(3)]
            cts = [encrypt_payload(rng, B163, p, kp.pk) for p, kp in zip(payloads, self.keys)]
            coded = code_payload(pad_chunk_lists(cts))
            recovered = [decode_payload_bytes(coded, [cts[k] for k in range(3) if k != t], self.keys[t])
                         for t in range(3)]
            self.assertEqual(recovered, payloads)
            self.assertEqual(decrypt_payload(self.keys[0], cts[0]), payloads[0])


if __name__ == '__main__':
    unittest.main(verbosity=2)
