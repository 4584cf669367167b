#!/usr/bin/env python3
"""
Test suite for scope_cli: the run and bench subcommands, exit codes and
output files.
"""
import csv
import io
import json
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from support import FIXTURES

import scope_cli
from lib.bench import WORKLOADS

NO_WORK = {metric: (lambda cell, rng: (lambda: None)) for metric in WORKLOADS}


def invoke(*argv):
    """Run main() and capture (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with patch('sys.stdout', out), patch('sys.stderr', err):
        try:
            code = scope_cli.main(list(argv))
        except SystemExit as e:
            code = e.code
    return code, out.getvalue(), err.getvalue()


class TestRunCommand(unittest.TestCase):
    """scope-sim run"""

    def test_cope_transmissions(self):
        code, out, _ = invoke('run', '--scenario', '1', '--mode', 'cope', '--seed', '0')
        self.assertEqual(code, 0)
        self.assertIn('transmissions=3', out.splitlines())
        self.assertIn('delivered=2', out.splitlines())

    def test_no_coding_baseline(self):
        code, out, _ = invoke('run', '--scenario', '1', '--mode', 'cope', '--no-coding')
        self.assertEqual(code, 0)
        self.assertIn('transmissions=4', out.splitlines())

    def test_robust_tamper(self):
        code, out, _ = invoke('run', '--scenario', '1', '--mode', 'robust', '--tamper', '--seed', '0')
        self.assertEqual(code, 0)
        self.assertIn('dropped_by_auth=1', out.splitlines())
        self.assertIn('adversary_2_detected=1', out.splitlines())

    def test_curious_adversary(self):
        code, out, _ = invoke('run', '--scenario', '1', '--mode', 'cope', '--adversary', '2:curious')
        self.assertEqual(code, 0)
        self.assertIn('adversary_2_recovered_plaintexts=2', out.splitlines())

    def test_unknown_scenario_is_usage_error(self):
        code, _, err = invoke('run', '--scenario', '9')
        self.assertEqual(code, 2)
        self.assertIn('usage', err.lower())

    def test_missing_scenario_file(self):
        code, _, _ = invoke('run', '--scenario', 'does/not/exist.json')
        self.assertEqual(code, 2)

    def test_bad_adversary_argument(self):
        for value in ('2', 'x:curious', '2:angry'):
            with self.subTest(value=value):
                code, _, _ = invoke('run', '--scenario', '1', '--adversary', value)
                self.assertEqual(code, 2)

    def test_adversary_on_unknown_node(self):
        code, _, _ = invoke('run', '--scenario', '1', '--adversary', '8:curious')
        self.assertEqual(code, 2)

    def test_scenario_file(self):
        code, out, _ = invoke('run', '--scenario', str(FIXTURES / 'scenario_diamond.json'), '--mode', 'cope')
        self.assertEqual(code, 0)
        self.assertIn('scenario=0', out.splitlines())
        self.assertIn('transmissions=3', out.splitlines())

    def test_json_to_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'reports' / 'run.json'
            code, out, err = invoke('run', '--scenario', '1', '--mode', 'scope', '--format', 'json', '--out', str(path))
            self.assertEqual(code, 0)
            self.assertEqual(out, '')
            self.assertIn('[OK]', err)
            doc = json.loads(path.read_text(encoding='utf-8'))
        self.assertEqual(doc['summary']['transmissions'], 3)
        self.assertEqual(doc['delivery'], {'1': True, '2': True})

    def test_csv_table(self):
        code, out, _ = invoke('run', '--scenario', '2', '--mode', 'cope', '--format', 'csv')
        self.assertEqual(code, 0)
        rows = list(csv.DictReader(io.StringIO(out)))
        self.assertEqual(len(rows), 6)
        self.assertEqual(sum(1 for r in rows if r['kind'] == 'coded'), 2)

    def test_undelivered_run_fails(self):
        scenario = {'nodes': [1, 2, 3], 'edges': [[1, 2]], 'flows': [{'id': 1, 'path': [1, 2, 3]}]}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.json'
            path.write_text(json.dumps(scenario), encoding='utf-8')
            code, out, err = invoke('run', '--scenario', str(path), '--mode', 'cope')
        self.assertEqual(code, 1)
        self.assertIn('undeliverable=1', out.splitlines())
        self.assertIn('[ERROR]', err)


class TestBenchCommand(unittest.TestCase):
    """scope-sim bench"""

    @patch.dict(WORKLOADS, NO_WORK)
    def test_csv_rows(self):
        code, out, _ = invoke('bench', '--family', 'fig8', '--trials', '1')
        self.assertEqual(code, 0)
        lines = out.strip().splitlines()
        self.assertEqual(lines[0], 'family,scenario,mode,ecc_bits,ecdsa_bits,metric,workload,trials,seed,mean_ms')
        self.assertEqual(len(lines), 1 + 8)

    @patch.dict(WORKLOADS, NO_WORK)
    def test_filters_and_json(self):
        code, out, _ = invoke('bench', '--family', 'fig7', '--scenario', '3', '--ecc-bits', '163',
                              '--trials', '2', '--format', 'json')
        self.assertEqual(code, 0)
        rows = json.loads(out)['rows']
        self.assertEqual(len(rows), 3)
        self.assertEqual({r['workload'] for r in rows}, {6, 30})

    @patch.dict(WORKLOADS, NO_WORK)
    def test_default_covers_all_families(self):
        code, out, _ = invoke('bench', '--trials', '1', '--workers', '3')
        self.assertEqual(code, 0)
        self.assertEqual(len(out.strip().splitlines()), 1 + 48 + 8 + 32)

    def test_invalid_trials(self):
        code, _, _ = invoke('bench', '--trials', '0')
        self.assertEqual(code, 2)


class TestEntryPoint(unittest.TestCase):
    """Top-level flags and logging setup"""

    def test_version(self):
        code, out, _ = invoke('--version')
        self.assertEqual(code, 0)
        self.assertIn(scope_cli.__version__, out)

    def test_no_command(self):
        code, _, err = invoke()
        self.assertEqual(code, 2)
        self.assertIn('usage', err.lower())

    def test_log_level_from_environment(self):
        with patch.dict(os.environ, {'SCOPE_LOG_LEVEL': 'info'}):
            scope_cli.setup_logging(False)
            self.assertEqual(logging.getLogger().level, logging.INFO)
        with patch.dict(os.environ, {'SCOPE_LOG_LEVEL': 'nonsense'}):
            scope_cli.setup_logging(False)
            self.assertEqual(logging.getLogger().level, logging.WARNING)
        scope_cli.setup_logging(True)
        self.assertEqual(logging.getLogger().level, logging.DEBUG)
        scope_cli.setup_logging(False)


if __name__ == '__main__':
    unittest.main(verbosity=2)
