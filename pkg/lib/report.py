#!/usr/bin/env python3
"""
Console, JSON and CSV renderings of a simulator run.

The text report has four parts:
    - overview (scenario, mode, counters)
    - transmission table, one row per frame
    - delivery verdict per flow
    - adversary findings (inferences, tampering, detections)
followed by `key=value` lines that scripts can grep for.

Colours follow SCOPE_NO_COLOR / NO_COLOR; every function returns text and
leaves the printing to the caller.
"""
from __future__ import annotations

import csv
import io
import json
import os

from .sim import RunResult

# ============================================
# ANSI COLOR CODES
# ============================================
GREEN = '\033[0;32m'
YELLOW = '\033[0;33m'
RED = '\033[0;31m'
BLUE = '\033[0;34m'
CYAN = '\033[0;36m'
MAGENTA = '\033[0;35m'
BOLD = '\033[1m'
DIM = '\033[2m'
RESET = '\033[0m'

TABLE_COLUMNS = ('round', 'sender', 'kind', 'flows', 'receivers', 'bytes')


def color_enabled() -> bool:
    return not (os.environ.get('SCOPE_NO_COLOR') or os.environ.get('NO_COLOR'))


class Palette:
    """Colour codes, or empty strings when colour is off."""

    def __init__(self, enabled: bool | None = None):
        on = color_enabled() if enabled is None else enabled
        for name in ('GREEN', 'YELLOW', 'RED', 'BLUE', 'CYAN', 'MAGENTA', 'BOLD', 'DIM', 'RESET'):
            setattr(self, name, globals()[name] if on else '')


def section_header(title: str, c: Palette) -> list[str]:
    return ['', f"{c.BOLD}{c.CYAN}{'=' * 80}{c.RESET}", f"{c.BOLD}{c.CYAN}{title}{c.RESET}",
            f"{c.BOLD}{c.CYAN}{'=' * 80}{c.RESET}", '']


def subsection(title: str, c: Palette) -> list[str]:
    return ['', f"{c.BOLD}{title}{c.RESET}", f"{c.DIM}{'─' * 60}{c.RESET}"]


# ============================================
# SUMMARY VALUES
# ============================================

def summary(result: RunResult) -> dict:
    """Flat counters and verdicts, the source of the key=value lines."""
    log = result.log
    out = {
        'scenario': result.scenario.id,
        'mode': result.mode,
        'transmissions': log.transmissions,
        'coded': log.coded_packet_count,
        'unicast': log.unicast_count,
        'broadcast': log.broadcast_count,
        'control_messages': len(log.control),
        'dropped_by_auth': log.dropped_by_auth_count,
        'delivered': sum(1 for f in result.sent if result.delivered(f)),
        'flows': len(result.sent),
        'undeliverable': ','.join(str(f) for f in log.undeliverable) or '-',
    }
    for node, adv in sorted(result.adversaries.items()):
        out[f"adversary_{node}_inferences"] = len(adv.inferences)
        out[f"adversary_{node}_recovered_plaintexts"] = len(adv.recovered_plaintexts())
        out[f"adversary_{node}_tampers"] = len(adv.tampers)
        out[f"adversary_{node}_detected"] = sum(1 for d in adv.detections if d['detected'])
    return out


def key_value_lines(result: RunResult) -> list[str]:
    return [f"{k}={v}" for k, v in summary(result).items()]


def transmission_rows(result: RunResult) -> list[dict]:
    return [{
        'round': r.round,
        'sender': r.sender,
        'kind': 'coded' if r.coded else 'native',
        'flows': '+'.join(f"F{f}" for f, _ in r.natives),
        'receivers': ' '.join(f"N{n}" for n in r.receivers),
        'bytes': len(r.frame),
    } for r in result.log.records]


# ============================================
# RENDERERS
# ============================================

def render_text(result: RunResult, color: bool | None = None) -> str:
    c = Palette(color)
    s = result.scenario
    lines = [f"{c.BOLD}{c.MAGENTA}{'=' * 80}{c.RESET}",
             f"{c.BOLD}{c.MAGENTA}SCOPE-SIM - scenario {s.id}{' (' + s.name + ')' if s.name else ''}, "
             f"mode {result.mode}{c.RESET}",
             f"{c.BOLD}{c.MAGENTA}{'=' * 80}{c.RESET}"]

    lines += subsection('Flows', c)
    for f in s.flows:
        lines.append(f"  {c.CYAN}{f.label()}{c.RESET}" + (f"  {c.DIM}(starts round {f.start_round}){c.RESET}"
                                                           if f.start_round else ''))

    lines += section_header('Transmissions', c)
    lines.append(f"{c.BOLD}{'Round':>5} {'Sender':>6}  {'Kind':<7} {'Flows':<12} {'Receivers':<20} {'Bytes':>6}{c.RESET}")
    lines.append(f"{c.DIM}{'-' * 5} {'-' * 6}  {'-' * 7} {'-' * 12} {'-' * 20} {'-' * 6}{c.RESET}")
    for row in transmission_rows(result):
        color = c.YELLOW if row['kind'] == 'coded' else ''
        lines.append(f"{color}{row['round']:>5} {'N' + str(row['sender']):>6}  {row['kind']:<7} "
                     f"{row['flows']:<12} {row['receivers']:<20} {row['bytes']:>6}{c.RESET}")
    log = result.log
    lines.append('')
    lines.append(f"{c.BOLD}Total:{c.RESET} {log.transmissions} transmissions "
                 f"({c.YELLOW}{log.coded_packet_count} coded{c.RESET}, {log.unicast_count} native), "
                 f"{len(log.control)} control messages")

    lines += section_header('Delivery', c)
    for f in s.flows:
        if result.delivered(f.flow_id):
            lines.append(f"{c.GREEN}[OK]{c.RESET} F{f.flow_id} delivered to N{f.destination} "
                         f"({len(result.sent[f.flow_id])} bytes)")
        elif f.flow_id in log.undeliverable:
            lines.append(f"{c.RED}[ERROR]{c.RESET} F{f.flow_id} has no route")
        elif f.flow_id in result.received:
            lines.append(f"{c.RED}[ERROR]{c.RESET} F{f.flow_id} delivered a modified payload")
        else:
            reasons = sorted({d.reason for d in log.drops if d.flow_id == f.flow_id}) or ['not delivered']
            lines.append(f"{c.YELLOW}[DROPPED]{c.RESET} F{f.flow_id}: {', '.join(reasons)}")

    if result.adversaries:
        lines += section_header('Adversaries', c)
        for node, adv in sorted(result.adversaries.items()):
            lines += subsection(f"N{node} ({adv.mode})", c)
            lines.append(f"  observed {len(adv.observed)} frames/messages, {sum(len(o) for o in adv.observed)} bytes")
            recovered = adv.recovered_plaintexts()
            if recovered:
                lines.append(f"  {c.RED}recovered {len(recovered)} plaintext payload(s) by subtraction{c.RESET}")
            elif adv.inferences:
                lines.append(f"  {c.GREEN}{len(adv.inferences)} subtraction(s) yielded ciphertext only{c.RESET}")
            for t in adv.tampers:
                lines.append(f"  tampered with F{t['flow']} in round {t['round']}")
            for d in adv.detections:
                verdict = f"{c.GREEN}detected and dropped{c.RESET}" if d['detected'] else f"{c.RED}undetected{c.RESET}"
                lines.append(f"  F{d['flow']} at N{d['node']}: {verdict}")

    lines += subsection('Summary', c)
    lines += key_value_lines(result)
    return '\n'.join(lines) + '\n'


def render_json(result: RunResult) -> str:
    doc = result.to_dict()
    doc['summary'] = summary(result)
    return json.dumps(doc, indent=2, sort_keys=True) + '\n'


def render_csv(result: RunResult) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator='\n')
    writer.writeheader()
    writer.writerows(transmission_rows(result))
    return buf.getvalue()


RENDERERS = {'text': render_text, 'json': render_json, 'csv': render_csv}
