#!/usr/bin/env python3
"""scope-sim - simulate COPE / SCOPE / robust SCOPE network coding and time the crypto
Usage: scope-sim run --scenario 1 --mode scope
       scope-sim bench --family fig7 --trials 5
"""
from __future__ import annotations
import argparse
import logging
import os
import sys
from pathlib import Path

# Import version from lib package
from lib import __version__
from lib.auth import ECDSA_BITS
from lib.bench import DEFAULT_TRIALS, DEFAULT_WORKERS, FAMILIES, monotonic_violations, run_bench, to_csv, to_json
from lib.errors import ScenarioError, ScopeError
from lib.group import ECC_BITS, curve_for_bits
from lib.report import RENDERERS, color_enabled
from lib.sim import (
    ADVERSARY_MODES, DEFAULT_PAYLOAD_SIZE, MODES, SCENARIO_IDS,
    Simulator, build_scenario, busiest_relay, load_scenario,
)

DEFAULT_ECC_BITS = 163
DEFAULT_ECDSA_BITS = 384
DEFAULT_SEED = 0

GREEN = '\033[0;32m'
YELLOW = '\033[0;33m'
RED = '\033[0;31m'
CYAN = '\033[0;36m'
RESET = '\033[0m'

if not color_enabled():
    GREEN = YELLOW = RED = CYAN = RESET = ''


def print_banner():
    """Print scope-sim ASCII banner with version."""
    banner = f"""
╔══════════════════════════════════════════╗
║                                          ║
║   ___  ___ ___  ___ ___                  ║
║  / __|/ __/ _ \\| _ \\ __|                 ║
║  \\__ \\ (_| (_) |  _/ _|                  ║
║  |___/\\___\\___/|_| |___|                 ║
║                                          ║
║  Secure Network Coding Simulator         ║
║  Version: {__version__:<30} ║
║                                          ║
╚══════════════════════════════════════════╝
"""
    print(f"{CYAN}{banner}{RESET}", flush=True)


def setup_logging(verbose: bool) -> None:
    if verbose:
        level = logging.DEBUG
    else:
        name = os.environ.get('SCOPE_LOG_LEVEL', 'WARNING').upper()
        level = getattr(logging, name, None)
        if not isinstance(level, int):
            level = logging.WARNING
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr, force=True)


def write_output(text: str, out: str | None) -> tuple[bool, str]:
    """Write to --out, or stdout when no path is given."""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return True, ''
    try:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        return False, f"cannot write {out}: {e}"
    return True, f"written to {out}"


def parse_adversary(value: str) -> tuple[int, str]:
    """NODE:MODE, e.g. 2:curious."""
    node, sep, mode = value.partition(':')
    if not sep or not node.strip().isdigit() or mode not in ADVERSARY_MODES:
        raise argparse.ArgumentTypeError(f"expected NODE:{'|'.join(ADVERSARY_MODES)}, got {value!r}")
    return int(node), mode


def resolve_scenario(value: str):
    """Built-in id or path to a JSON scenario file."""
    if value.isdigit():
        return build_scenario(int(value))
    return load_scenario(value)


# ============================================
# SUBCOMMANDS
# ============================================

def cmd_run(args, parser) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as e:
        parser.error(str(e))

    adversaries = list(args.adversary or [])
    if args.tamper:
        try:
            adversaries.append((busiest_relay(scenario), 'malicious'))
        except ScenarioError as e:
            parser.error(str(e))

    try:
        sim = Simulator(scenario, args.mode, seed=args.seed, params=curve_for_bits(args.ecc_bits),
                        sig_bits=args.ecdsa_bits, coding=not args.no_coding, payload_size=args.payload_size)
        for node, mode in adversaries:
            sim.attach_adversary(node, mode)
    except ScenarioError as e:
        parser.error(str(e))

    try:
        result = sim.run()
    except ScopeError as e:
        print(f"{RED}[ERROR]{RESET} simulation failed: {e}", file=sys.stderr)
        return 1

    if args.format == 'text':
        text = RENDERERS['text'](result, color=color_enabled() and args.out is None)
    else:
        text = RENDERERS[args.format](result)
    ok, msg = write_output(text, args.out)
    if not ok:
        print(f"{RED}[ERROR]{RESET} {msg}", file=sys.stderr)
        return 1
    if msg:
        print(f"{GREEN}[OK]{RESET} report {msg}", file=sys.stderr)

    tampered = any(mode == 'malicious' for _, mode in adversaries)
    if not tampered and not result.all_delivered:
        print(f"{RED}[ERROR]{RESET} not every flow was delivered", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args, parser) -> int:
    families = FAMILIES if 'all' in args.family else tuple(dict.fromkeys(args.family))
    scenarios = sorted(set(args.scenario)) if args.scenario else SCENARIO_IDS
    ecc_bits = sorted(set(args.ecc_bits)) if args.ecc_bits else ECC_BITS
    ecdsa_bits = sorted(set(args.ecdsa_bits)) if args.ecdsa_bits else ECDSA_BITS

    def progress(r):
        if args.verbose:
            print(f"{GREEN}[OK]{RESET} {r.family} scenario {r.scenario} {r.metric} "
                  f"ecc={r.ecc_bits} ecdsa={r.ecdsa_bits or '-'} n={r.workload}: {r.mean_ms:.3f} ms", file=sys.stderr)

    try:
        records = run_bench(families, scenarios, ecc_bits, ecdsa_bits, trials=args.trials, seed=args.seed,
                            workers=args.workers, progress=progress)
    except (ScopeError, ValueError) as e:
        print(f"{RED}[ERROR]{RESET} bench failed: {e}", file=sys.stderr)
        return 1

    for issue in monotonic_violations(records):
        print(f"{YELLOW}[WARNING]{RESET} {issue}", file=sys.stderr)

    ok, msg = write_output(to_json(records) + '\n' if args.format == 'json' else to_csv(records), args.out)
    if not ok:
        print(f"{RED}[ERROR]{RESET} {msg}", file=sys.stderr)
        return 1
    if msg:
        print(f"{GREEN}[OK]{RESET} {len(records)} rows {msg}", file=sys.stderr)
    return 0


class VersionAction(argparse.Action):
    """Custom action to show banner with version."""
    def __call__(self, parser, namespace, values, option_string=None):
        print_banner()
        parser.exit()


class HelpAction(argparse.Action):
    """Custom action to show banner with help."""
    def __call__(self, parser, namespace, values, option_string=None):
        print_banner()
        parser.print_help()
        parser.exit()


def positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='scope-sim',
        description='scope-sim - secure network coding simulator and crypto benchmark',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        add_help=False,  # Disable default -h/--help to use custom action
        epilog='''
Examples:
  # Two crossing flows through one relay, plaintext COPE
  scope-sim run --scenario 1 --mode cope

  # Same scenario encrypted and signed, with a malicious relay
  scope-sim run --scenario 1 --mode robust --tamper

  # Curious relay on the star scenario, JSON report to a file
  scope-sim run --scenario 2 --adversary 5:curious --format json --out run.json

  # Custom topology
  scope-sim run --scenario my_topology.json --mode scope

  # ECC sweep only, 5 trials per cell
  scope-sim bench --family fig7 --trials 5 --out fig7.csv

Environment:
  SCOPE_NO_COLOR / NO_COLOR   disable colours
  SCOPE_LOG_LEVEL             logging level without --verbose (default WARNING)
        ''')

    parser.add_argument('-h', '--help', action=HelpAction, nargs=0, help='show this help message and exit')
    parser.add_argument('-v', '--version', action=VersionAction, nargs=0, help='show program version and exit')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')

    run_p = sub.add_parser('run', help='simulate one scenario', formatter_class=argparse.RawDescriptionHelpFormatter)
    run_p.add_argument('--scenario', required=True, metavar='ID|FILE',
                       help=f"built-in scenario ({', '.join(map(str, SCENARIO_IDS))}) or path to a JSON scenario")
    run_p.add_argument('--mode', choices=MODES, default='scope', help='coding mode (default: scope)')
    run_p.add_argument('--ecc-bits', type=int, choices=ECC_BITS, default=DEFAULT_ECC_BITS,
                       help=f'binary curve size (default: {DEFAULT_ECC_BITS})')
    run_p.add_argument('--ecdsa-bits', type=int, choices=ECDSA_BITS, default=DEFAULT_ECDSA_BITS,
                       help=f'ECDSA curve size for robust mode (default: {DEFAULT_ECDSA_BITS})')
    run_p.add_argument('--seed', type=int, default=DEFAULT_SEED, help='seed for keys, nonces and payloads (default: 0)')
    run_p.add_argument('--payload-size', type=positive_int, default=DEFAULT_PAYLOAD_SIZE,
                       help=f'random payload bytes per flow (default: {DEFAULT_PAYLOAD_SIZE})')
    run_p.add_argument('--no-coding', action='store_true', help='never code; the baseline for transmission counts')
    run_p.add_argument('--tamper', action='store_true', help='make the busiest relay malicious')
    run_p.add_argument('--adversary', action='append', type=parse_adversary, metavar='NODE:MODE',
                       help='attach a curious or malicious adversary (repeatable)')
    run_p.add_argument('-f', '--format', choices=['text', 'json', 'csv'], default='text',
                       help='report format (default: text)')
    run_p.add_argument('-o', '--out', metavar='PATH', help='write the report to PATH instead of stdout')
    run_p.add_argument('--verbose', action='store_true', help='debug logging on stderr')

    bench_p = sub.add_parser('bench', help='time the crypto workloads over key sizes')
    bench_p.add_argument('--family', action='append', choices=list(FAMILIES) + ['all'], default=None,
                         help='experiment family (repeatable, default: all)')
    bench_p.add_argument('--scenario', action='append', type=int, choices=SCENARIO_IDS, metavar='ID',
                         help='restrict to scenario ID (repeatable)')
    bench_p.add_argument('--ecc-bits', action='append', type=int, choices=ECC_BITS, metavar='B',
                         help='restrict to ECC size B (repeatable)')
    bench_p.add_argument('--ecdsa-bits', action='append', type=int, choices=ECDSA_BITS, metavar='S',
                         help='restrict to ECDSA size S (repeatable)')
    bench_p.add_argument('--trials', type=positive_int, default=DEFAULT_TRIALS,
                         help=f'timed repetitions per cell (default: {DEFAULT_TRIALS})')
    bench_p.add_argument('--seed', type=int, default=DEFAULT_SEED, help='seed for setup material (default: 0)')
    bench_p.add_argument('--workers', type=positive_int, default=DEFAULT_WORKERS,
                         help=f'cells measured in parallel (default: {DEFAULT_WORKERS})')
    bench_p.add_argument('-f', '--format', choices=['csv', 'json'], default='csv', help='output format (default: csv)')
    bench_p.add_argument('-o', '--out', metavar='PATH', help='write rows to PATH instead of stdout')
    bench_p.add_argument('--verbose', action='store_true', help='per-cell progress and debug logging on stderr')
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        print_banner()
        parser.print_usage(sys.stderr)
        return 2
    setup_logging(args.verbose)
    if args.command == 'run':
        return cmd_run(args, parser)
    args.family = args.family or ['all']
    return cmd_bench(args, parser)


if __name__ == '__main__':
    sys.exit(main())
