"""Ground-truth reference for small instances.

Exhaustive enumeration walks canonical set partitions (restricted-growth
strings), so stream relabelings are never evaluated twice, and scores each
partition with the exact discrete objective.  A Monte-Carlo sampler checks
the analytic prescale expectations against realized Bernoulli draws.

Both exist for verification at desk scale; the enumeration refuses instances
beyond its caps rather than silently truncating.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .cost import DEFAULT_BASE_KB, DEFAULT_SHARED_KB, parse_objective
from .errors import InfeasibleError
from .model import (EventLineIncidence, LineCatalog, Scheme, fold_lines_subset,
                    fold_modules)

MAX_ORACLE_MODULES = 12
MAX_ORACLE_STREAMS = 4
DEFAULT_MAX_EVALUATIONS = 10_000_000


@dataclass(frozen=True)
class OracleResult:
    best_scheme: Scheme
    best_cost: float
    n_evaluated: int
    ranked_tail: tuple[tuple[Scheme, float], ...] | None = None


@dataclass(frozen=True)
class MonteCarloCheck:
    read_mean: float
    read_se: float
    storage_mean: float
    storage_se: float
    n_samples: int


def count_partitions(n_items: int, max_blocks: int) -> int:
    """Number of set partitions of n items into at most max_blocks blocks."""
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    k = min(max_blocks, n_items)
    # Stirling numbers of the second kind, summed over block counts.
    stirling = [1] + [0] * k
    for _ in range(n_items):
        prev = stirling.copy()
        for j in range(k, 0, -1):
            stirling[j] = prev[j - 1] + j * prev[j]
        stirling[0] = 0
    return sum(stirling[1:])


def restricted_growth_strings(n_items: int, max_blocks: int):
    """Yield canonical partition codes in lexicographic order.

    A code ``a`` satisfies a[0] == 0 and a[i] <= max(a[:i]) + 1, with all
    values below ``max_blocks``; each partition appears exactly once.
    """
    a = [0] * n_items
    while True:
        yield a
        i = n_items - 1
        while i > 0:
            if a[i] < min(max(a[:i]) + 1, max_blocks - 1):
                break
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n_items):
            a[j] = 0


def enumerate_optimal(incidence: EventLineIncidence, catalog: LineCatalog,
                      n_streams: int, objective: str = "T", *,
                      max_evaluations: int = DEFAULT_MAX_EVALUATIONS,
                      top_k: int = 0,
                      base_kb: float = DEFAULT_BASE_KB,
                      shared_kb: float = DEFAULT_SHARED_KB) -> OracleResult:
    """Exactly minimize the discrete objective over all schemes.

    Ties are broken toward the lexicographically smallest canonical partition
    code.  Raises when the instance exceeds the enumeration caps.
    """
    n_modules = catalog.n_modules
    if n_streams < 1:
        raise InfeasibleError("n_streams must be >= 1")
    if n_modules > MAX_ORACLE_MODULES:
        raise InfeasibleError(
            f"oracle caps at {MAX_ORACLE_MODULES} modules (got {n_modules}); "
            "reduce the instance"
        )
    if n_streams > MAX_ORACLE_STREAMS:
        raise InfeasibleError(
            f"oracle caps at {MAX_ORACLE_STREAMS} streams (got {n_streams}); "
            "reduce the instance"
        )
    total = count_partitions(n_modules, n_streams)
    if total > max_evaluations:
        raise InfeasibleError(
            f"{total} partitions exceed the evaluation cap {max_evaluations}; "
            "reduce the instance"
        )

    kind, weight = parse_objective(objective)
    n_events = incidence.n_events
    line_counts = catalog.module_line_counts.astype(float)
    need_read = kind in ("T", "weighted")
    need_storage = kind in ("S", "weighted")
    miss = None
    if need_read:
        miss = 1.0 - fold_modules(incidence, catalog).to_dense()
    miss_pr = turbo_kb = None
    if need_storage:
        miss_pr = 1.0 - fold_lines_subset(incidence, catalog,
                                          catalog.persist_reco_mask)
        # Expected turbo payload is additive over modules.
        turbo = catalog.turbo_mask[incidence.line_index]
        entry_module = catalog.module_of_line[incidence.line_index[turbo]]
        turbo_kb = base_kb * np.bincount(
            entry_module,
            weights=catalog.prescales[incidence.line_index[turbo]],
            minlength=n_modules,
        )

    def score(blocks) -> float:
        value = 0.0
        if need_read:
            for cols in blocks:
                expected = n_events - np.prod(miss[:, cols], axis=1).sum()
                value += line_counts[cols].sum() * expected
        if need_storage:
            stored = 0.0
            for cols in blocks:
                shared_events = n_events - np.prod(miss_pr[:, cols], axis=1).sum()
                stored += turbo_kb[cols].sum() + shared_kb * shared_events
            value = stored if kind == "S" else value + weight * stored
        return float(value)

    best_cost = np.inf
    best_code: list[int] | None = None
    tail: list[tuple[float, int, tuple[int, ...]]] = []
    n_evaluated = 0
    for code in restricted_growth_strings(n_modules, n_streams):
        blocks: list[list[int]] = [[] for _ in range(max(code) + 1)]
        for module, block in enumerate(code):
            blocks[block].append(module)
        cost = score([np.asarray(b) for b in blocks])
        if cost < best_cost:
            best_cost = cost
            best_code = list(code)
        if top_k:
            # Min-heap on (-cost, -seq): the root is the worst kept entry.
            heapq.heappush(tail, (-cost, -n_evaluated, tuple(code)))
            if len(tail) > top_k:
                heapq.heappop(tail)
        n_evaluated += 1

    ranked_tail = None
    if top_k:
        ordered = sorted(((-c, -s, code) for c, s, code in tail))
        ranked_tail = tuple((Scheme(n_streams, code), cost)
                            for cost, _, code in ordered)
    return OracleResult(Scheme(n_streams, tuple(best_code)), best_cost,
                        n_evaluated, ranked_tail)


def mc_prescale_check(incidence: EventLineIncidence, catalog: LineCatalog,
                      scheme: Scheme, n_samples: int, seed: int, *,
                      base_kb: float = DEFAULT_BASE_KB,
                      shared_kb: float = DEFAULT_SHARED_KB,
                      chunk: int = 1024) -> MonteCarloCheck:
    """Sample prescale outcomes and measure the realized discrete T and S.

    Each (event, line) pass survives independently with the line's prescale;
    the realized read cost and storage are averaged over ``n_samples`` draws,
    for comparison with the analytic expectations.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    stream_of_unit = np.asarray(scheme.assignment, dtype=np.int64)
    stream_of_line = stream_of_unit[catalog.module_of_line]

    order = np.lexsort((incidence.event_index,
                        stream_of_line[incidence.line_index]))
    ev = incidence.event_index[order]
    li = incidence.line_index[order]
    st = stream_of_line[li]
    p_entry = catalog.prescales[li]
    turbo = catalog.turbo_mask[li]
    pr = catalog.persist_reco_mask[li]

    n_streams = scheme.n_streams
    lines_per_stream = np.bincount(stream_of_line, minlength=n_streams)

    # Per-stream slices plus event-group boundaries for the OR-reductions.
    stream_slices = []
    for s in range(n_streams):
        idx = np.nonzero(st == s)[0]
        if idx.size == 0:
            stream_slices.append(None)
            continue
        starts = np.nonzero(np.r_[True, np.diff(ev[idx]) != 0])[0]
        pr_idx = idx[pr[idx]]
        pr_starts = np.nonzero(np.r_[True, np.diff(ev[pr_idx]) != 0])[0]
        stream_slices.append((idx, starts, idx[turbo[idx]], pr_idx, pr_starts))

    rng = np.random.default_rng(seed)
    read_samples = np.empty(n_samples)
    storage_samples = np.empty(n_samples)
    pos = 0
    while pos < n_samples:
        batch = min(chunk, n_samples - pos)
        kept = rng.random((batch, len(ev))) < p_entry[None, :]
        read = np.zeros(batch)
        stored = np.zeros(batch)
        for s, entry in enumerate(stream_slices):
            if entry is None:
                continue
            idx, starts, turbo_idx, pr_idx, pr_starts = entry
            present = np.logical_or.reduceat(kept[:, idx], starts, axis=1)
            read += lines_per_stream[s] * present.sum(axis=1)
            stored += base_kb * kept[:, turbo_idx].sum(axis=1)
            if pr_idx.size:
                pr_present = np.logical_or.reduceat(kept[:, pr_idx], pr_starts,
                                                    axis=1)
                stored += shared_kb * pr_present.sum(axis=1)
        read_samples[pos:pos + batch] = read
        storage_samples[pos:pos + batch] = stored
        pos += batch

    def mean_se(samples):
        mean = float(samples.mean())
        if n_samples < 2:
            return mean, 0.0
        return mean, float(samples.std(ddof=1) / np.sqrt(n_samples))

    read_mean, read_se = mean_se(read_samples)
    storage_mean, storage_se = mean_se(storage_samples)
    return MonteCarloCheck(read_mean, read_se, storage_mean, storage_se,
                           n_samples)
