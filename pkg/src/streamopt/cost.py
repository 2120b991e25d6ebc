"""Discrete cost models evaluated on hard streaming schemes.

Read cost: analysis jobs read whole streams sequentially, and each event is
requested once per line it passes, so the total read cost is

    T = sum over streams of  N_lines_in_stream * E[N_events_in_stream]

where, with prescales applied analytically,

    E[N_events_in_stream] = sum_e (1 - prod_{l in stream} (1 - pass[e,l] * prescale[l])).

Storage: a turbo line contributes ``base_kb`` per expected pass; lines with
the persist-reco flag share one ``shared_kb`` payload per event and stream,
counted with probability 1 - prod(1 - pass * prescale) over those lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .model import (EventLineIncidence, LineCatalog, ModuleIncidence, Scheme,
                    _log_keep_per_entry, _require_consistent)

DEFAULT_BASE_KB = 10.0
DEFAULT_SHARED_KB = 50.0


@dataclass(frozen=True)
class StreamCost:
    """Read-cost contribution of one stream."""

    n_units: int
    n_lines: int
    expected_events: float
    contribution: float


@dataclass(frozen=True)
class CostBreakdown:
    """Per-stream read-cost terms; total is their sum (event-reads)."""

    per_stream: tuple[StreamCost, ...]
    total: float


@dataclass(frozen=True)
class StorageBreakdown:
    """Per-stream storage sizes in kB; total is their sum."""

    per_stream: tuple[float, ...]
    total: float


def _stream_of_units(catalog: LineCatalog, scheme: Scheme) -> np.ndarray:
    if scheme.n_units < catalog.n_modules:
        missing = catalog.modules[scheme.n_units]
        raise DataError(f"module '{missing}' has no stream assignment")
    if scheme.n_units > catalog.n_modules:
        raise DataError(
            f"scheme assigns {scheme.n_units} units but catalog has "
            f"{catalog.n_modules} modules"
        )
    return np.asarray(scheme.assignment, dtype=np.int64)


def read_cost(incidence: EventLineIncidence, catalog: LineCatalog,
              scheme: Scheme) -> CostBreakdown:
    """Expected disk-read cost of a hard scheme, per stream and total.

    With all prescales equal to 1 the expected event term is the exact count
    of events passing at least one line of the stream.
    """
    _require_consistent(incidence, catalog)
    stream_of_unit = _stream_of_units(catalog, scheme)
    n_streams = scheme.n_streams
    stream_of_line = stream_of_unit[catalog.module_of_line]

    log_keep = _log_keep_per_entry(incidence, catalog)
    entry_stream = stream_of_line[incidence.line_index]
    flat = incidence.event_index * n_streams + entry_stream
    log_miss = np.bincount(flat, weights=log_keep,
                           minlength=incidence.n_events * n_streams)
    # P(event read from stream) = 1 - prod(1 - prescale) over passing lines.
    read_prob = -np.expm1(log_miss.reshape(incidence.n_events, n_streams))
    expected_events = read_prob.sum(axis=0)

    lines_per_stream = np.bincount(stream_of_line, minlength=n_streams)
    units_per_stream = np.bincount(stream_of_unit, minlength=n_streams)
    contributions = lines_per_stream * expected_events
    per_stream = tuple(
        StreamCost(int(units_per_stream[s]), int(lines_per_stream[s]),
                   float(expected_events[s]), float(contributions[s]))
        for s in range(n_streams)
    )
    return CostBreakdown(per_stream, float(contributions.sum()))


def storage_cost(incidence: EventLineIncidence, catalog: LineCatalog,
                 scheme: Scheme, *, base_kb: float = DEFAULT_BASE_KB,
                 shared_kb: float = DEFAULT_SHARED_KB) -> StorageBreakdown:
    """Expected storage size of a hard scheme, per stream and total (kB)."""
    _require_consistent(incidence, catalog)
    stream_of_unit = _stream_of_units(catalog, scheme)
    n_streams = scheme.n_streams
    stream_of_line = stream_of_unit[catalog.module_of_line]
    entry_stream = stream_of_line[incidence.line_index]

    # Turbo payload: base_kb per expected pass of a turbo line.
    turbo = catalog.turbo_mask[incidence.line_index]
    turbo_passes = np.bincount(
        entry_stream[turbo],
        weights=catalog.prescales[incidence.line_index[turbo]],
        minlength=n_streams,
    )

    # Shared payload: one shared_kb per event and stream where any
    # persist-reco line keeps the event.
    pr = catalog.persist_reco_mask[incidence.line_index]
    log_keep = _log_keep_per_entry(incidence, catalog)[pr]
    flat = incidence.event_index[pr] * n_streams + entry_stream[pr]
    log_miss = np.bincount(flat, weights=log_keep,
                           minlength=incidence.n_events * n_streams)
    pr_prob = -np.expm1(log_miss.reshape(incidence.n_events, n_streams))
    pr_events = pr_prob.sum(axis=0)

    sizes = base_kb * turbo_passes + shared_kb * pr_events
    return StorageBreakdown(tuple(float(v) for v in sizes), float(sizes.sum()))


def read_cost_from_modules(module_incidence: ModuleIncidence,
                           catalog: LineCatalog,
                           scheme: Scheme) -> CostBreakdown:
    """Read cost of a hard scheme evaluated from a folded incidence.

    Identical to :func:`read_cost` for every hard scheme (the per-stream
    keep probability factors over modules); used where the line-level
    incidence is no longer at hand.
    """
    if module_incidence.n_modules != catalog.n_modules:
        raise DataError("module incidence does not match catalog")
    stream_of_unit = _stream_of_units(catalog, scheme)
    n_streams = scheme.n_streams

    expected_events = np.zeros(n_streams)
    if module_incidence.is_dense:
        miss = 1.0 - module_incidence.values
        for s in range(n_streams):
            cols = np.nonzero(stream_of_unit == s)[0]
            if cols.size:
                expected_events[s] = float(
                    (1.0 - np.prod(miss[:, cols], axis=1)).sum()
                )
    else:
        values: sp.csr_matrix = module_incidence.values
        for s in range(n_streams):
            cols = np.nonzero(stream_of_unit == s)[0]
            if not cols.size:
                continue
            sub = values[:, cols].copy()
            with np.errstate(divide="ignore"):
                sub.data = np.log1p(-sub.data)
            log_miss = np.asarray(sub.sum(axis=1)).ravel()
            expected_events[s] = float((-np.expm1(log_miss)).sum())

    lines_per_stream = np.bincount(stream_of_unit,
                                   weights=catalog.module_line_counts,
                                   minlength=n_streams)
    units_per_stream = np.bincount(stream_of_unit, minlength=n_streams)
    contributions = lines_per_stream * expected_events
    per_stream = tuple(
        StreamCost(int(units_per_stream[s]), int(lines_per_stream[s]),
                   float(expected_events[s]), float(contributions[s]))
        for s in range(n_streams)
    )
    return CostBreakdown(per_stream, float(contributions.sum()))


def extreme_schemes(catalog: LineCatalog) -> tuple[Scheme, Scheme]:
    """The two boundary schemes: everything in one stream, one stream per unit.

    The single stream minimizes storage (nothing is duplicated); one stream
    per module minimizes read cost (each job reads only the events its lines
    selected).
    """
    n = catalog.n_modules
    single = Scheme(1, (0,) * n)
    per_unit = Scheme(n, tuple(range(n)))
    return single, per_unit


def parse_objective(spec: str) -> tuple[str, float]:
    """Parse an objective token: 'T', 'S', or 'weighted:<w>'."""
    if spec == "T" or spec == "S":
        return spec, 0.0
    if spec.startswith("weighted:"):
        try:
            weight = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad objective weight in '{spec}'") from None
        if weight < 0:
            raise ValueError("objective weight must be nonnegative")
        return "weighted", weight
    raise ValueError(f"unknown objective '{spec}' (use T, S, or weighted:<w>)")


def objective_total(incidence: EventLineIncidence, catalog: LineCatalog,
                    scheme: Scheme, objective: str = "T", *,
                    base_kb: float = DEFAULT_BASE_KB,
                    shared_kb: float = DEFAULT_SHARED_KB) -> float:
    """Scalar objective value of a scheme: T, S, or T + w * S."""
    kind, weight = parse_objective(objective)
    if kind == "T":
        return read_cost(incidence, catalog, scheme).total
    if kind == "S":
        return storage_cost(incidence, catalog, scheme,
                            base_kb=base_kb, shared_kb=shared_kb).total
    t = read_cost(incidence, catalog, scheme).total
    s = storage_cost(incidence, catalog, scheme,
                     base_kb=base_kb, shared_kb=shared_kb).total
    return t + weight * s
