"""Core data model: event/line incidence, line catalogs, and module folding.

An *incidence* records which events pass which selection lines.  Lines are
grouped into *modules* that must be streamed together; folding an incidence
over the modules gives, per event and module, the probability that the event
is kept by at least one of the module's lines after prescaling:

    fold[e, m] = 1 - prod_{l in m, e passes l} (1 - prescale[l])

All objects are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DataError

logger = logging.getLogger(__name__)

#: fold_modules materializes a dense event-by-module matrix up to this many
#: modules; beyond it the folded incidence stays sparse.
DENSE_MODULE_THRESHOLD = 512

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class LineRecord:
    """One selection line.

    ``prescale`` is the probability that a positive decision is kept.  Turbo
    lines persist per-candidate payload; persist-reco lines additionally
    persist shared full-event payload.  Range checks are deliberately left to
    :func:`validate_dataset` so that malformed catalogs can be reported as a
    batch instead of raising record by record.
    """

    name: str
    prescale: float = 1.0
    is_turbo: bool = True
    is_persist_reco: bool = False
    module: str | None = None

    def __post_init__(self):
        if self.module is None:
            # A line without an explicit group is its own module.
            object.__setattr__(self, "module", self.name)


@dataclass(frozen=True)
class LineCatalog:
    """Ordered collection of lines plus the ordered list of their modules."""

    lines: tuple[LineRecord, ...]
    modules: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if not self.lines:
            raise DataError("catalog must contain at least one line")
        if self.modules:
            object.__setattr__(self, "modules", tuple(self.modules))
        else:
            seen = dict.fromkeys(rec.module for rec in self.lines)
            object.__setattr__(self, "modules", tuple(seen))

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_modules(self) -> int:
        return len(self.modules)

    @cached_property
    def line_names(self) -> tuple[str, ...]:
        return tuple(rec.name for rec in self.lines)

    @cached_property
    def prescales(self) -> np.ndarray:
        arr = np.array([rec.prescale for rec in self.lines], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def turbo_mask(self) -> np.ndarray:
        arr = np.array([rec.is_turbo for rec in self.lines], dtype=bool)
        arr.setflags(write=False)
        return arr

    @cached_property
    def persist_reco_mask(self) -> np.ndarray:
        arr = np.array([rec.is_persist_reco for rec in self.lines], dtype=bool)
        arr.setflags(write=False)
        return arr

    @cached_property
    def _module_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.modules)}

    @cached_property
    def module_of_line(self) -> np.ndarray:
        """Module index of each line; raises on unknown module references."""
        idx = np.empty(self.n_lines, dtype=np.int64)
        for i, rec in enumerate(self.lines):
            j = self._module_index.get(rec.module)
            if j is None:
                raise DataError(
                    f"line '{rec.name}' references unknown module '{rec.module}'"
                )
            idx[i] = j
        idx.setflags(write=False)
        return idx

    @cached_property
    def module_line_counts(self) -> np.ndarray:
        counts = np.bincount(self.module_of_line, minlength=self.n_modules)
        counts.setflags(write=False)
        return counts

    def line_index(self, name: str) -> int:
        try:
            return self.line_names.index(name)
        except ValueError:
            raise DataError(f"unknown line name '{name}'") from None

    def singleton_modules(self) -> "LineCatalog":
        """Copy of the catalog with one module per line (line-level runs)."""
        return LineCatalog(tuple(replace(rec, module=rec.name) for rec in self.lines))


class EventLineIncidence:
    """Sparse binary event-by-line pass matrix.

    Entries are canonicalized to lexicographic (event, line) order.  Every
    event must pass at least one line; use :meth:`dropping_empty_events` to
    ingest raw data that may contain events passing nothing.
    """

    def __init__(self, n_events: int, n_lines: int,
                 entries: Iterable[tuple[int, int]]):
        n_events = int(n_events)
        n_lines = int(n_lines)
        if n_events < 1 or n_lines < 1:
            raise DataError("incidence needs at least one event and one line")
        arr = np.asarray(sorted(entries), dtype=np.int64)
        if arr.size == 0:
            raise DataError("incidence has no entries")
        ev, li = arr[:, 0], arr[:, 1]
        if ev.min() < 0 or ev.max() >= n_events:
            raise DataError(f"event index out of range [0, {n_events})")
        if li.min() < 0 or li.max() >= n_lines:
            raise DataError(f"line index out of range [0, {n_lines})")
        dup = (np.diff(ev) == 0) & (np.diff(li) == 0)
        if dup.any():
            k = int(np.nonzero(dup)[0][0])
            raise DataError(f"duplicate incidence entry ({ev[k]}, {li[k]})")
        passes = np.bincount(ev, minlength=n_events)
        if (passes == 0).any():
            missing = int(np.nonzero(passes == 0)[0][0])
            raise DataError(f"event {missing} passes no line")
        ev.setflags(write=False)
        li.setflags(write=False)
        self._n_events = n_events
        self._n_lines = n_lines
        self._event_index = ev
        self._line_index = li

    @classmethod
    def dropping_empty_events(
        cls, n_events: int, n_lines: int, entries: Iterable[tuple[int, int]]
    ) -> tuple["EventLineIncidence", int]:
        """Build an incidence, renumbering away events that pass no line.

        Returns the incidence and the number of dropped events; the count is
        also logged because it silently shrinks the dataset.
        """
        arr = np.asarray(sorted(entries), dtype=np.int64)
        if arr.size == 0:
            raise DataError("incidence has no entries")
        present = np.unique(arr[:, 0])
        dropped = int(n_events) - len(present)
        if dropped < 0:
            raise DataError("entries reference more events than declared")
        if dropped:
            logger.info("dropped %d events that pass no line", dropped)
            remap = np.full(int(n_events), -1, dtype=np.int64)
            remap[present] = np.arange(len(present))
            arr = np.column_stack([remap[arr[:, 0]], arr[:, 1]])
        return cls(len(present), n_lines, map(tuple, arr)), dropped

    @classmethod
    def from_dense(cls, matrix) -> "EventLineIncidence":
        mat = np.asarray(matrix, dtype=bool)
        ev, li = np.nonzero(mat)
        return cls(mat.shape[0], mat.shape[1], zip(ev.tolist(), li.tolist()))

    @property
    def n_events(self) -> int:
        return self._n_events

    @property
    def n_lines(self) -> int:
        return self._n_lines

    @property
    def n_entries(self) -> int:
        return len(self._event_index)

    @property
    def event_index(self) -> np.ndarray:
        return self._event_index

    @property
    def line_index(self) -> np.ndarray:
        return self._line_index

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self._event_index.tolist(), self._line_index.tolist()))

    def to_dense(self) -> np.ndarray:
        mat = np.zeros((self._n_events, self._n_lines), dtype=bool)
        mat[self._event_index, self._line_index] = True
        return mat

    def __repr__(self):
        return (f"EventLineIncidence(n_events={self._n_events}, "
                f"n_lines={self._n_lines}, n_entries={self.n_entries})")


class ModuleIncidence:
    """Per-event, per-module selection probabilities produced by folding.

    ``values`` is a dense ``(n_events, n_modules)`` array for small module
    counts, or a CSR matrix above :data:`DENSE_MODULE_THRESHOLD`.  All values
    lie in [0, 1]; with unit prescales they are exactly 0 or 1.
    """

    def __init__(self, n_events: int, n_modules: int, values):
        self._n_events = int(n_events)
        self._n_modules = int(n_modules)
        if sp.issparse(values):
            values = values.tocsr()
            data = values.data
        else:
            values = np.ascontiguousarray(values, dtype=float)
            if values.shape != (self._n_events, self._n_modules):
                raise DataError(
                    f"values shape {values.shape} does not match "
                    f"({self._n_events}, {self._n_modules})"
                )
            values.setflags(write=False)
            data = values
        if data.size and (np.min(data) < 0.0 or np.max(data) > 1.0):
            raise DataError("module incidence values must lie in [0, 1]")
        self._values = values

    @property
    def n_events(self) -> int:
        return self._n_events

    @property
    def n_modules(self) -> int:
        return self._n_modules

    @property
    def values(self):
        return self._values

    @property
    def is_dense(self) -> bool:
        return not sp.issparse(self._values)

    def to_dense(self) -> np.ndarray:
        if self.is_dense:
            return self._values
        return np.asarray(self._values.todense())

    def row_groups(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique rows and their multiplicities (cached, dense only)."""
        cached = getattr(self, "_row_groups", None)
        if cached is None:
            rows, counts = np.unique(self.to_dense(), axis=0, return_counts=True)
            cached = (rows, counts.astype(float))
            self._row_groups = cached
        return cached

    def __repr__(self):
        kind = "dense" if self.is_dense else "sparse"
        return (f"ModuleIncidence(n_events={self._n_events}, "
                f"n_modules={self._n_modules}, {kind})")


@dataclass(frozen=True)
class Scheme:
    """Hard assignment of units (modules) to streams.

    ``assignment[u]`` is the stream index of unit ``u``.  Streams may end up
    empty; they are kept in ``n_streams`` and surfaced via
    :meth:`empty_streams`.
    """

    n_streams: int
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment",
                           tuple(int(s) for s in self.assignment))
        if self.n_streams < 1:
            raise DataError("a scheme needs at least one stream")
        if not self.assignment:
            raise DataError("a scheme must assign at least one unit")
        for u, s in enumerate(self.assignment):
            if not 0 <= s < self.n_streams:
                raise DataError(
                    f"unit {u} assigned to stream {s}, outside [0, {self.n_streams})"
                )

    @property
    def n_units(self) -> int:
        return len(self.assignment)

    def units_in_stream(self, stream: int) -> tuple[int, ...]:
        return tuple(u for u, s in enumerate(self.assignment) if s == stream)

    def empty_streams(self) -> tuple[int, ...]:
        used = set(self.assignment)
        return tuple(s for s in range(self.n_streams) if s not in used)


class SoftAssignment:
    """Row-stochastic unit-to-stream probabilities, optionally with logits.

    Built either from logits (row-wise softmax, all entries strictly inside
    (0, 1)) or as an exact one-hot embedding of a hard :class:`Scheme`.
    """

    def __init__(self, probabilities, logits=None):
        probs = np.ascontiguousarray(probabilities, dtype=float)
        if probs.ndim != 2:
            raise ValueError("probabilities must be a 2-d matrix")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("probability rows must sum to 1")
        probs.setflags(write=False)
        self._probs = probs
        if logits is not None:
            logits = np.ascontiguousarray(logits, dtype=float)
            logits.setflags(write=False)
        self._logits = logits

    @classmethod
    def from_logits(cls, logits) -> "SoftAssignment":
        from .relax import softmax_rows

        logits = np.ascontiguousarray(logits, dtype=float)
        return cls(softmax_rows(logits), logits)

    @classmethod
    def one_hot(cls, scheme: Scheme) -> "SoftAssignment":
        probs = np.zeros((scheme.n_units, scheme.n_streams))
        probs[np.arange(scheme.n_units), scheme.assignment] = 1.0
        return cls(probs)

    @property
    def probabilities(self) -> np.ndarray:
        return self._probs

    @property
    def logits(self) -> np.ndarray | None:
        return self._logits

    @property
    def n_units(self) -> int:
        return self._probs.shape[0]

    @property
    def n_streams(self) -> int:
        return self._probs.shape[1]

    def row_entropy(self) -> np.ndarray:
        """Shannon entropy (nats) of each row; 0 for one-hot rows."""
        p = self._probs
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, p * np.log(p), 0.0)
        return -terms.sum(axis=1)


def validate_dataset(incidence: EventLineIncidence,
                     catalog: LineCatalog) -> list[str]:
    """Cross-check an incidence against a catalog.

    Returns a list of human-readable violations; an empty list means the
    dataset is consistent.  Nothing is raised here so that callers can report
    every problem at once.
    """
    violations: list[str] = []
    if incidence.n_lines != catalog.n_lines:
        violations.append(
            f"incidence has {incidence.n_lines} lines but catalog has "
            f"{catalog.n_lines}"
        )
    seen_names: set[str] = set()
    module_index = {name: i for i, name in enumerate(catalog.modules)}
    for rec in catalog.lines:
        if not 0.0 <= rec.prescale <= 1.0:
            violations.append(
                f"line '{rec.name}': prescale {rec.prescale} outside [0, 1]"
            )
        if rec.module not in module_index:
            violations.append(
                f"line '{rec.name}': module '{rec.module}' not in catalog modules"
            )
        if rec.name in seen_names:
            violations.append(f"duplicate line name '{rec.name}'")
        seen_names.add(rec.name)
    seen_modules: set[str] = set()
    for name in catalog.modules:
        if name in seen_modules:
            violations.append(f"duplicate module name '{name}'")
        seen_modules.add(name)
    populated = {rec.module for rec in catalog.lines}
    for name in catalog.modules:
        if name not in populated:
            violations.append(f"module '{name}' contains no lines")
    return violations


def _require_consistent(incidence: EventLineIncidence, catalog: LineCatalog):
    if incidence.n_lines != catalog.n_lines:
        raise DataError(
            f"incidence has {incidence.n_lines} lines but catalog has "
            f"{catalog.n_lines}"
        )
    p = catalog.prescales
    if p.min() < 0.0 or p.max() > 1.0:
        raise DataError("catalog contains prescales outside [0, 1]; "
                        "run validate_dataset for details")


def _log_keep_per_entry(incidence: EventLineIncidence,
                        catalog: LineCatalog) -> np.ndarray:
    """log(1 - prescale) per incidence entry; -inf where prescale == 1."""
    with np.errstate(divide="ignore"):
        return np.log1p(-catalog.prescales[incidence.line_index])


def fold_modules(incidence: EventLineIncidence, catalog: LineCatalog, *,
                 dense_threshold: int = DENSE_MODULE_THRESHOLD) -> ModuleIncidence:
    """Fold a line-level incidence into per-module selection probabilities.

    fold[e, m] = 1 - prod over passing lines l of module m of (1 - prescale[l]).
    Computed as -expm1(sum of log1p(-prescale)) for precision; a prescale of 1
    contributes -inf to the sum and the folded value is exactly 1.
    """
    _require_consistent(incidence, catalog)
    n_events, n_modules = incidence.n_events, catalog.n_modules
    log_keep = _log_keep_per_entry(incidence, catalog)
    entry_module = catalog.module_of_line[incidence.line_index]
    if n_modules <= dense_threshold:
        flat = incidence.event_index * n_modules + entry_module
        sums = np.bincount(flat, weights=log_keep,
                           minlength=n_events * n_modules)
        values = -np.expm1(sums.reshape(n_events, n_modules))
        return ModuleIncidence(n_events, n_modules, values)
    mat = sp.coo_matrix((log_keep, (incidence.event_index, entry_module)),
                        shape=(n_events, n_modules)).tocsr()
    mat.data = -np.expm1(mat.data)
    return ModuleIncidence(n_events, n_modules, mat)


def fold_lines_subset(incidence: EventLineIncidence, catalog: LineCatalog,
                      line_mask) -> np.ndarray:
    """Dense fold over a subset of lines only (e.g. the persist-reco ones)."""
    _require_consistent(incidence, catalog)
    mask = np.asarray(line_mask, dtype=bool)
    keep = mask[incidence.line_index]
    log_keep = _log_keep_per_entry(incidence, catalog)[keep]
    entry_module = catalog.module_of_line[incidence.line_index[keep]]
    flat = incidence.event_index[keep] * catalog.n_modules + entry_module
    sums = np.bincount(flat, weights=log_keep,
                       minlength=incidence.n_events * catalog.n_modules)
    return -np.expm1(sums.reshape(incidence.n_events, catalog.n_modules))
