#!/usr/bin/env python3
"""
Timing sweeps over curve sizes, signature sizes and scenarios.

Families:
    fig7  per scenario x ECC size: aggregate_time, end_to_end_time, condition_eval_time
    fig8  per ECDSA size x signature count: signature_gen_time
    fig9  per scenario x ECC size x ECDSA size: enc_plus_sign_time

Workloads follow the scenarios: payload cipher aggregations 2/4/6/8 and
coding-condition comparisons 4/20/30/32 for scenarios 1-4. Each cell is
timed `trials` times and reported as a mean in milliseconds; setup (keys,
ciphertexts, comparison lists) is never timed.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

from .auth import ECDSA_BITS, sig_keygen, sign_payload
from .coding import equal_list, node_point, strip_contributions, subset_list
from .group import ECC_BITS, curve_for_bits
from .he import FlowKey, ct_sum, decrypt, encrypt, encrypt_det_layered, keygen
from .sim import SCENARIO_IDS

logger = logging.getLogger(__name__)

FAMILIES = ('fig7', 'fig8', 'fig9')
FIG7_METRICS = ('aggregate_time', 'end_to_end_time', 'condition_eval_time')
METRIC_ORDER = FIG7_METRICS + ('signature_gen_time', 'enc_plus_sign_time')
AGGREGATIONS = {1: 2, 2: 4, 3: 6, 4: 8}
CONDITION_COMPARISONS = {1: 4, 2: 20, 3: 30, 4: 32}
SIGNATURE_COUNTS = (5, 10, 15, 20)
SIGNATURE_ECC_BITS = 163
DEFAULT_TRIALS = 20
DEFAULT_WORKERS = 1
CSV_COLUMNS = ('family', 'scenario', 'mode', 'ecc_bits', 'ecdsa_bits', 'metric', 'workload', 'trials', 'seed', 'mean_ms')


@dataclass(frozen=True)
class BenchCell:
    family: str
    scenario: int
    metric: str
    ecc_bits: int
    ecdsa_bits: int | None
    workload: int

    @property
    def mode(self) -> str:
        return 'scope' if self.family == 'fig7' else 'robust'

    def sort_key(self) -> tuple:
        return (FAMILIES.index(self.family), self.scenario, METRIC_ORDER.index(self.metric),
                self.ecc_bits, self.ecdsa_bits or 0, self.workload)

    def seed_for(self, seed: int) -> str:
        return f"{seed}:{self.family}:{self.scenario}:{self.metric}:{self.ecc_bits}:{self.ecdsa_bits}:{self.workload}"


@dataclass(frozen=True)
class BenchRecord:
    """One output row."""
    family: str
    scenario: int
    mode: str
    ecc_bits: int
    ecdsa_bits: int | None
    metric: str
    workload: int
    trials: int
    seed: int
    mean_ms: float

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.mean_ms < 0:
            raise ValueError("mean time cannot be negative")

    def non_timing(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS if c != 'mean_ms')


def plan_cells(families: Iterable[str] = FAMILIES, scenarios: Sequence[int] = SCENARIO_IDS,
               ecc_bits: Sequence[int] = ECC_BITS, ecdsa_bits: Sequence[int] = ECDSA_BITS) -> list[BenchCell]:
    """Every cell of the requested families, in output order."""
    cells = []
    for family in families:
        if family not in FAMILIES:
            raise ValueError(f"unknown bench family {family!r}")
        if family == 'fig7':
            cells += [BenchCell('fig7', s, metric, e, None,
                                AGGREGATIONS[s] if metric != 'condition_eval_time' else CONDITION_COMPARISONS[s])
                      for s in scenarios for metric in FIG7_METRICS for e in ecc_bits]
        elif family == 'fig8':
            cells += [BenchCell('fig8', 0, 'signature_gen_time', SIGNATURE_ECC_BITS, d, n)
                      for d in ecdsa_bits for n in SIGNATURE_COUNTS]
        else:
            cells += [BenchCell('fig9', s, 'enc_plus_sign_time', e, d, AGGREGATIONS[s])
                      for s in scenarios for e in ecc_bits for d in ecdsa_bits]
    return sorted(cells, key=BenchCell.sort_key)


# ============================================
# WORKLOADS
# ============================================

def _random_ciphertexts(rng, params, count, pks):
    return [encrypt(params, pks[k % len(pks)], params.random_point(rng), params.random_scalar(rng))
            for k in range(count)]


def _aggregate(cell: BenchCell, rng) -> Callable[[], object]:
    params = curve_for_bits(cell.ecc_bits)
    kp = keygen(rng, params)
    cts = _random_ciphertexts(rng, params, cell.workload, [kp.pk])
    return lambda: ct_sum(params, cts)


def _end_to_end(cell: BenchCell, rng) -> Callable[[], object]:
    """Encrypt at every source, aggregate at the relay, strip and decrypt at every destination."""
    params = curve_for_bits(cell.ecc_bits)
    keys = [keygen(rng, params) for _ in range(cell.workload)]
    messages = [params.random_point(rng) for _ in keys]
    scalars = [params.random_scalar(rng) for _ in keys]

    def job():
        cts = [encrypt(params, kp.pk, M, r) for kp, M, r in zip(keys, messages, scalars)]
        coded = ct_sum(params, cts)
        for k, kp in enumerate(keys):
            (residual,) = strip_contributions([coded], [[c] for j, c in enumerate(cts) if j != k])
            decrypt(kp, residual)
    return job


def _condition_eval(cell: BenchCell, rng) -> Callable[[], object]:
    params = curve_for_bits(cell.ecc_bits)
    a, b = keygen(rng, params), keygen(rng, params)
    fk = FlowKey.generate(rng)
    double = [encrypt_det_layered(params, (a.pk, b.pk), node_point(params, n), fk) for n in range(1, 5)]
    pairs = [(double[:k % 3 + 1], double[k % 2:k % 2 + 2]) for k in range(cell.workload)]

    def job():
        for k, (x, y) in enumerate(pairs):
            (equal_list if k % 2 == 0 else subset_list)(x, y)
    return job


def _signature_gen(cell: BenchCell, rng) -> Callable[[], object]:
    params = curve_for_bits(cell.ecc_bits)
    kp = keygen(rng, params)
    chunks = _random_ciphertexts(rng, params, cell.workload, [kp.pk])
    signer = sig_keygen(rng, cell.ecdsa_bits)
    return lambda: sign_payload(signer, chunks, rng)


def _enc_plus_sign(cell: BenchCell, rng) -> Callable[[], object]:
    params = curve_for_bits(cell.ecc_bits)
    kp = keygen(rng, params)
    messages = [params.random_point(rng) for _ in range(cell.workload)]
    signer = sig_keygen(rng, cell.ecdsa_bits)

    def job():
        cts = [encrypt(params, kp.pk, M, params.random_scalar(rng)) for M in messages]
        sign_payload(signer, cts, rng)
    return job


WORKLOADS = {
    'aggregate_time': _aggregate,
    'end_to_end_time': _end_to_end,
    'condition_eval_time': _condition_eval,
    'signature_gen_time': _signature_gen,
    'enc_plus_sign_time': _enc_plus_sign,
}


def time_job(job: Callable[[], object], trials: int) -> float:
    """Mean wall time of `trials` calls, in milliseconds."""
    elapsed = []
    for _ in range(trials):
        start = time.perf_counter()
        job()
        elapsed.append(time.perf_counter() - start)
    return statistics.fmean(elapsed) * 1000.0


def measure(cell: BenchCell, trials: int = DEFAULT_TRIALS, seed: int = 0) -> BenchRecord:
    rng = random.Random(cell.seed_for(seed))
    job = WORKLOADS[cell.metric](cell, rng)
    mean_ms = time_job(job, trials)
    logger.debug("bench %s scenario=%d %s ecc=%d ecdsa=%s n=%d: %.3f ms",
                 cell.family, cell.scenario, cell.metric, cell.ecc_bits, cell.ecdsa_bits, cell.workload, mean_ms)
    return BenchRecord(cell.family, cell.scenario, cell.mode, cell.ecc_bits, cell.ecdsa_bits,
                       cell.metric, cell.workload, trials, seed, mean_ms)


def run_bench(families: Iterable[str] = FAMILIES, scenarios: Sequence[int] = SCENARIO_IDS,
              ecc_bits: Sequence[int] = ECC_BITS, ecdsa_bits: Sequence[int] = ECDSA_BITS,
              trials: int = DEFAULT_TRIALS, seed: int = 0, workers: int = DEFAULT_WORKERS,
              progress: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    """
    Measure every planned cell.

    Args:
        workers: cells measured in parallel threads (timings are noisier above 1)
        progress: called with each record as it completes

    Returns:
        Records in deterministic cell order, whatever the completion order.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    cells = plan_cells(families, scenarios, ecc_bits, ecdsa_bits)
    records: dict[BenchCell, BenchRecord] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(measure, cell, trials, seed): cell for cell in cells}
        for future in as_completed(futures):
            record = future.result()
            records[futures[future]] = record
            if progress is not None:
                progress(record)
    return [records[cell] for cell in cells]


# ============================================
# OUTPUT
# ============================================

def to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for r in records:
        row = asdict(r)
        row['ecdsa_bits'] = '' if r.ecdsa_bits is None else r.ecdsa_bits
        row['mean_ms'] = f"{r.mean_ms:.4f}"
        writer.writerow(row)
    return buf.getvalue()


def to_json(records: Iterable[BenchRecord]) -> str:
    return json.dumps({'columns': list(CSV_COLUMNS), 'rows': [asdict(r) for r in records]}, indent=2)


def monotonic_violations(records: Sequence[BenchRecord]) -> list[str]:
    """
    Places where a mean drops as the key size or signature count grows.

    Timings are hardware dependent; the CLI reports these as warnings only.
    """
    issues = []
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        if r.family == 'fig8':
            groups.setdefault(('fig8', 'count', r.ecdsa_bits), []).append(r)
            groups.setdefault(('fig8', 'ecdsa', r.workload), []).append(r)
        else:
            groups.setdefault((r.family, r.scenario, r.metric, r.ecdsa_bits), []).append(r)
    for key, rows in groups.items():
        if key[:2] == ('fig8', 'count'):
            axis = 'workload'
        elif key[:2] == ('fig8', 'ecdsa'):
            axis = 'ecdsa_bits'
        else:
            axis = 'ecc_bits'
        rows = sorted(rows, key=lambda r: getattr(r, axis))
        for lo, hi in zip(rows, rows[1:]):
            if hi.mean_ms < lo.mean_ms:
                issues.append(f"{lo.family} scenario {lo.scenario} {lo.metric}: {axis} "
                              f"{getattr(lo, axis)} -> {getattr(hi, axis)} drops "
                              f"{lo.mean_ms:.3f} -> {hi.mean_ms:.3f} ms")
    return issues
