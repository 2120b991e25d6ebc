"""Gradient-descent driver: AdaMax on logits, multi-restart, rounding.

Each restart starts from independent Gaussian logits and follows AdaMax
(first-moment EMA, infinity-norm second moment, bias-corrected step) until
the loss plateaus or the iteration cap is hit.  Restarts are ranked by the
*discrete* read cost of rounded schemes, because the surrogate loss of a
non-integral assignment is not the expected discrete cost.

The surrogate rewards spreading a module's probability over several streams
(both loss factors shrink), so on instances with more streams than natural
groups the descent can end at an interior point whose rounding is poor even
though it passed through the true optimum on the way.  Each restart therefore
rounds its assignment whenever the argmax pattern changes and keeps the best
discrete cost seen along its whole trajectory, not just at the stopping
point.

All restarts advance together as one batched tensor; converged or diverged
restarts are compacted out of the batch.  Results are bit-reproducible for a
given seed and configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cost import (DEFAULT_BASE_KB, DEFAULT_SHARED_KB, CostBreakdown,
                   StorageBreakdown, read_cost_from_modules, storage_cost)
from .errors import InfeasibleError, StreamOptError
from .model import (EventLineIncidence, LineCatalog, ModuleIncidence, Scheme,
                    SoftAssignment, fold_modules)
from .relax import LossEvaluator, softmax_rows


@dataclass(frozen=True)
class OptimizerConfig:
    n_streams: int
    n_restarts: int = 20
    max_iters: int = 5000
    step_size: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_tol: float = 1e-7
    plateau_window: int = 100
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.plateau_tol <= 0:
            raise ValueError("plateau_tol must be positive")
        if self.plateau_window < 1:
            raise ValueError("plateau_window must be >= 1")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True)
class RestartRecord:
    """Outcome of one restart; ``failed`` marks a discarded (non-finite) run."""

    index: int
    relaxed_loss: float
    discrete_cost: float
    iterations: int
    max_row_entropy: float
    scheme: Scheme | None
    failed: bool = False


@dataclass(frozen=True)
class OptimizationResult:
    best_scheme: Scheme
    best_loss_relaxed: float
    best_cost_discrete: CostBreakdown
    per_restart: tuple[RestartRecord, ...]
    seed: int


@dataclass(frozen=True)
class SweepPoint:
    n_streams: int
    result: OptimizationResult
    storage: StorageBreakdown


def _round_probability_rows(probs: np.ndarray, n_streams: int) -> Scheme:
    # argmax returns the lowest index on ties, which is the tie-break rule.
    return Scheme(n_streams, tuple(int(s) for s in np.argmax(probs, axis=1)))


def round_assignment(soft: SoftAssignment) -> Scheme:
    """Round soft probabilities to the most likely stream per unit."""
    return _round_probability_rows(soft.probabilities, soft.n_streams)


def _max_row_entropy(probs: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return float(np.max(-terms.sum(axis=1)))


def optimize(module_incidence: ModuleIncidence, catalog: LineCatalog,
             config: OptimizerConfig) -> OptimizationResult:
    """Minimize the surrogate loss and return the best rounded scheme.

    Runs ``config.n_restarts`` independent AdaMax descents from random
    logits; each restart keeps the best rounded scheme it visits, and the
    restart with the smallest discrete read cost wins (ties go to the lowest
    restart index).  Restarts that produce a non-finite loss are discarded
    but reported.
    """
    n_modules = module_incidence.n_modules
    if catalog.n_modules != n_modules:
        raise StreamOptError("module incidence does not match catalog")
    n_streams = config.n_streams
    if n_streams > n_modules:
        raise InfeasibleError(
            f"n_streams={n_streams} exceeds the {n_modules} available modules"
        )

    if n_streams == 1 or n_streams == n_modules:
        # Both boundary cases are settled without optimization: one stream is
        # the only scheme, and one stream per module is provably optimal
        # (every other scheme merges some of its streams, and merging never
        # lowers the read cost).
        if n_streams == 1:
            scheme = Scheme(1, (0,) * n_modules)
        else:
            scheme = Scheme(n_streams, tuple(range(n_modules)))
        breakdown = read_cost_from_modules(module_incidence, catalog, scheme)
        record = RestartRecord(0, breakdown.total, breakdown.total, 0, 0.0,
                               scheme)
        return OptimizationResult(scheme, breakdown.total, breakdown,
                                  (record,), config.seed)

    evaluator = LossEvaluator(module_incidence,
                              catalog.module_line_counts.astype(float))
    rng = np.random.default_rng(config.seed)
    logits = rng.normal(0.0, config.init_scale,
                        size=(config.n_restarts, n_modules, n_streams))
    moment = np.zeros_like(logits)
    inf_norm = np.zeros_like(logits)
    window = config.plateau_window
    ring = np.empty((window, config.n_restarts))
    origin = np.arange(config.n_restarts)
    records: dict[int, RestartRecord] = {}

    cost_cache: dict[tuple[int, ...], float] = {}

    def rounded_cost(assignment: tuple[int, ...]) -> float:
        cost = cost_cache.get(assignment)
        if cost is None:
            scheme = Scheme(n_streams, assignment)
            cost = read_cost_from_modules(module_incidence, catalog,
                                          scheme).total
            cost_cache[assignment] = cost
        return cost

    n_active = config.n_restarts
    best_cost = np.full(n_active, np.inf)
    best_assignment: list[tuple[int, ...] | None] = [None] * n_active
    previous = np.full((n_active, n_modules), -1, dtype=np.int64)

    def finalize(idx: int, probs_row: np.ndarray, loss_value: float,
                 iterations: int, failed: bool, pos: int):
        if failed:
            records[idx] = RestartRecord(idx, float(loss_value), math.inf,
                                         iterations, math.nan, None, True)
            return
        records[idx] = RestartRecord(idx, float(loss_value),
                                     float(best_cost[pos]), iterations,
                                     _max_row_entropy(probs_row),
                                     Scheme(n_streams, best_assignment[pos]))

    beta1_power = 1.0
    for step in range(1, config.max_iters + 1):
        probs = softmax_rows(logits)
        loss, grad = evaluator.loss_and_gradient(probs)

        # Round every restart whose argmax pattern moved and keep its best.
        rounded = np.argmax(probs, axis=2)
        moved = np.any(rounded != previous, axis=1)
        for k in np.nonzero(moved)[0]:
            assignment = tuple(int(s) for s in rounded[k])
            cost = rounded_cost(assignment)
            if cost < best_cost[k]:
                best_cost[k] = cost
                best_assignment[k] = assignment
        previous = rounded

        failed = ~np.isfinite(loss)
        done = np.zeros_like(failed)
        if step > window:
            slot = ring[(step - 1) % window]  # loss from `window` steps ago
            improvement = (slot - loss) / np.maximum(np.abs(slot), 1e-300)
            done = improvement < config.plateau_tol
        stop = failed | done
        if stop.any():
            for k in np.nonzero(stop)[0]:
                finalize(int(origin[k]), probs[k], loss[k], step,
                         bool(failed[k]), int(k))
            keep = ~stop
            logits, moment, inf_norm = logits[keep], moment[keep], inf_norm[keep]
            origin, ring = origin[keep], ring[:, keep]
            loss, grad = loss[keep], grad[keep]
            best_cost, previous = best_cost[keep], previous[keep]
            best_assignment = [a for a, ok in zip(best_assignment, keep) if ok]
            if logits.shape[0] == 0:
                break

        beta1_power *= config.beta1
        moment = config.beta1 * moment + (1.0 - config.beta1) * grad
        inf_norm = np.maximum(config.beta2 * inf_norm, np.abs(grad))
        scale = config.step_size / (1.0 - beta1_power)
        logits = logits - scale * moment / (inf_norm + config.epsilon)
        ring[(step - 1) % window] = loss
    else:
        probs = softmax_rows(logits)
        loss = np.atleast_1d(evaluator.loss(probs))
        for k in range(logits.shape[0]):
            finalize(int(origin[k]), probs[k], loss[k], config.max_iters,
                     not np.isfinite(loss[k]), k)

    per_restart = tuple(records[i] for i in range(config.n_restarts))
    survivors = [r for r in per_restart if not r.failed]
    if not survivors:
        raise StreamOptError("every restart diverged to a non-finite loss")
    best = min(survivors, key=lambda r: (r.discrete_cost, r.index))
    breakdown = read_cost_from_modules(module_incidence, catalog, best.scheme)
    return OptimizationResult(best.scheme, best.relaxed_loss, breakdown,
                              per_restart, config.seed)


def sweep_streams(incidence: EventLineIncidence, catalog: LineCatalog,
                  stream_counts, config: OptimizerConfig, *,
                  base_kb: float = DEFAULT_BASE_KB,
                  shared_kb: float = DEFAULT_SHARED_KB) -> list[SweepPoint]:
    """Optimize once per requested stream count and report T and S."""
    counts = [int(k) for k in stream_counts]
    if any(k < 1 for k in counts):
        raise InfeasibleError("stream counts must be >= 1")
    module_incidence = fold_modules(incidence, catalog)
    points = []
    for k in counts:
        result = optimize(module_incidence, catalog,
                          replace(config, n_streams=k))
        storage = storage_cost(incidence, catalog, result.best_scheme,
                               base_kb=base_kb, shared_kb=shared_kb)
        points.append(SweepPoint(k, result, storage))
    return points
