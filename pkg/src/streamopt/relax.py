"""Differentiable surrogate of the read cost, with its analytic gradient.

Instead of a hard assignment, each module m carries a probability L[m, s] of
belonging to stream s (rows of a softmax over free logits A).  The surrogate
loss is

    loss(L) = sum_s lines(s) * events(s)
    lines(s)  = sum_m n_lines[m] * L[m, s]
    events(s) = sum_e (1 - prod_m (1 - fold[e, m] * L[m, s]))

where ``fold`` is the per-module selection probability from
:func:`streamopt.model.fold_modules`.  For one-hot rows the loss equals the
discrete read cost exactly; in between it is a smooth surrogate (not the
expectation of the discrete cost over rounded assignments).

The gradient is closed-form.  Writing F[e,m,s] = 1 - fold[e,m] * L[m,s]:

    d events(s) / d L[m, s] = sum_e fold[e, m] * prod_{m' != m} F[e, m', s]

The leave-one-out products are obtained from exclusive prefix/suffix
cumulative products along the module axis, avoiding division by factors that
approach zero as rows saturate.  When every fold value is 0 or 1 (unit
prescales) the products instead collapse to sparse matmuls in log space,
which is what makes 1e4+-event optimization runs cheap.  The chain rule
through the softmax needs only the probabilities:
dA[m, s] = L[m,s] * (G[m,s] - sum_s' G[m,s'] L[m,s']).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import LineCatalog, ModuleIncidence, SoftAssignment

_BLOCK_ELEMS = 2_000_000  # target elements of the (restarts, events, M, S) block

# The sparse-binary gradient divides by 1 - L[m, s]; below this margin the
# dense leave-one-out path is used instead (softmax rows only get that
# saturated from one-hot inputs, never during optimization).
_SATURATION_MARGIN = 1e-12


@dataclass(frozen=True)
class RelaxedLoss:
    """Surrogate loss value with its per-stream factors."""

    value: float
    per_stream_expected_lines: np.ndarray
    per_stream_expected_events: np.ndarray


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax_rows requires finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class LossEvaluator:
    """Repeated loss/gradient evaluation over one folded incidence.

    Identical event rows are merged with multiplicities up front, which cuts
    the dominant event dimension substantially on clustered data.  Probability
    tensors may carry a leading batch axis (one slice per restart).
    """

    def __init__(self, module_incidence: ModuleIncidence,
                 line_counts=None, *, block_elems: int = _BLOCK_ELEMS):
        self._incidence = module_incidence
        self.n_modules = module_incidence.n_modules
        if line_counts is not None:
            line_counts = np.asarray(line_counts, dtype=float)
            if line_counts.shape != (self.n_modules,):
                raise ValueError("line_counts must have one entry per module")
        self._line_counts = line_counts
        self._block_elems = int(block_elems)
        self._hits = None
        if module_incidence.is_dense:
            self._rows, self._weights = module_incidence.row_groups()
            if np.all((self._rows == 0.0) | (self._rows == 1.0)):
                # Unit prescales fold to a 0/1 incidence; the per-event
                # products then collapse to one sparse matmul in log space.
                self._hits = sp.csr_matrix(self._rows)
        else:
            self._rows = None
            self._weights = None

    # -- internals ---------------------------------------------------------

    def _blocks(self, n_batch: int, n_streams: int):
        per_row = max(1, n_batch * self.n_modules * n_streams)
        step = max(1, self._block_elems // per_row)
        if self._rows is not None:
            for start in range(0, len(self._rows), step):
                stop = start + step
                yield self._rows[start:stop], self._weights[start:stop]
        else:
            values = self._incidence.values
            ones = None
            for start in range(0, self._incidence.n_events, step):
                stop = min(start + step, self._incidence.n_events)
                block = np.asarray(values[start:stop].todense())
                if ones is None or len(ones) != stop - start:
                    ones = np.ones(stop - start)
                yield block, ones

    def _check_probs(self, probs) -> tuple[np.ndarray, bool]:
        probs = np.asarray(probs, dtype=float)
        if probs.ndim == 2:
            return probs[None, :, :], True
        if probs.ndim == 3:
            return probs, False
        raise ValueError("probabilities must be (units, streams) or "
                         "(batch, units, streams)")

    def _line_counts_or_raise(self) -> np.ndarray:
        if self._line_counts is None:
            raise ValueError("evaluator was built without per-module line counts")
        return self._line_counts

    # -- evaluation --------------------------------------------------------

    def _log_miss(self, probs: np.ndarray):
        """Binary path: log prod_m(1 - L[m,s]) over each row's hit modules."""
        n_batch, n_modules, n_streams = probs.shape
        flat = probs.transpose(1, 0, 2).reshape(n_modules,
                                                n_batch * n_streams)
        with np.errstate(divide="ignore"):
            log_keep = np.log1p(-flat)
        return self._hits @ log_keep, flat

    def expected_events(self, probs) -> np.ndarray:
        probs, squeeze = self._check_probs(probs)
        if probs.shape[1] != self.n_modules:
            raise ValueError(
                f"probabilities have {probs.shape[1]} units, incidence has "
                f"{self.n_modules} modules"
            )
        n_batch, _, n_streams = probs.shape
        if self._hits is not None:
            log_miss, _ = self._log_miss(probs)
            terms = -np.expm1(log_miss) * self._weights[:, None]
            events = terms.sum(axis=0).reshape(n_batch, n_streams)
            return events[0] if squeeze else events
        events = np.zeros((n_batch, n_streams))
        for rows, weights in self._blocks(n_batch, n_streams):
            factors = 1.0 - rows[None, :, :, None] * probs[:, None, :, :]
            miss = np.prod(factors, axis=2)
            events += np.sum((1.0 - miss) * weights[None, :, None], axis=1)
        return events[0] if squeeze else events

    def expected_lines(self, probs) -> np.ndarray:
        probs, squeeze = self._check_probs(probs)
        counts = self._line_counts_or_raise()
        lines = np.einsum("m,bms->bs", counts, probs)
        return lines[0] if squeeze else lines

    def loss(self, probs):
        lines = self.expected_lines(probs)
        events = self.expected_events(probs)
        value = np.sum(lines * events, axis=-1)
        return float(value) if np.ndim(value) == 0 else value

    def loss_and_gradient(self, probs):
        """Loss and its gradient with respect to the logits.

        Returns ``(loss, grad)`` with batch shapes matching the input.
        """
        probs, squeeze = self._check_probs(probs)
        if probs.shape[1] != self.n_modules:
            raise ValueError("probability rows do not match module count")
        counts = self._line_counts_or_raise()
        n_batch, n_modules, n_streams = probs.shape

        if (self._hits is not None
                and np.min(1.0 - probs) > _SATURATION_MARGIN):
            log_miss, flat = self._log_miss(probs)
            miss = np.exp(log_miss)
            events = ((1.0 - miss) * self._weights[:, None]).sum(axis=0)
            events = events.reshape(n_batch, n_streams)
            # Leave-one-out products: divide each row product back out by its
            # own factor, which stays away from 0 by the saturation margin.
            weighted = miss * self._weights[:, None]
            devents_flat = (self._hits.T @ weighted) / (1.0 - flat)
            devents = devents_flat.reshape(n_modules, n_batch,
                                           n_streams).transpose(1, 0, 2)
        else:
            events = np.zeros((n_batch, n_streams))
            devents = np.zeros((n_batch, n_modules, n_streams))
            for rows, weights in self._blocks(n_batch, n_streams):
                factors = 1.0 - rows[None, :, :, None] * probs[:, None, :, :]
                fwd = np.cumprod(factors, axis=2)
                events += np.sum(
                    (1.0 - fwd[:, :, -1, :]) * weights[None, :, None], axis=1)
                # Exclusive prefix/suffix products give prod_{m' != m} F.
                prefix = np.ones_like(factors)
                prefix[:, :, 1:, :] = fwd[:, :, :-1, :]
                rev = np.cumprod(factors[:, :, ::-1, :], axis=2)[:, :, ::-1, :]
                prefix[:, :, :-1, :] *= rev[:, :, 1:, :]
                devents += np.einsum("um,bums->bms", rows * weights[:, None],
                                     prefix)

        lines = np.einsum("m,bms->bs", counts, probs)
        loss = np.sum(lines * events, axis=-1)
        grad_probs = (counts[None, :, None] * events[:, None, :]
                      + lines[:, None, :] * devents)
        inner = np.sum(grad_probs * probs, axis=-1, keepdims=True)
        grad_logits = probs * (grad_probs - inner)
        if squeeze:
            return float(loss[0]), grad_logits[0]
        return loss, grad_logits


def expected_lines(catalog: LineCatalog, probs: SoftAssignment) -> np.ndarray:
    """Expected number of lines per stream: sum_m n_lines[m] * L[m, s]."""
    if probs.n_units != catalog.n_modules:
        raise ValueError(
            f"assignment has {probs.n_units} units, catalog has "
            f"{catalog.n_modules} modules"
        )
    return catalog.module_line_counts.astype(float) @ probs.probabilities


def expected_events(module_incidence: ModuleIncidence,
                    probs: SoftAssignment) -> np.ndarray:
    """Expected number of events per stream under soft assignment."""
    evaluator = LossEvaluator(module_incidence)
    return evaluator.expected_events(probs.probabilities)


def relaxed_loss(module_incidence: ModuleIncidence, catalog: LineCatalog,
                 soft: SoftAssignment) -> RelaxedLoss:
    """Evaluate the grouped surrogate loss for a soft assignment."""
    lines = expected_lines(catalog, soft)
    events = expected_events(module_incidence, soft)
    return RelaxedLoss(float(np.sum(lines * events)), lines, events)


def loss_gradient(module_incidence: ModuleIncidence, catalog: LineCatalog,
                  soft: SoftAssignment) -> np.ndarray:
    """Analytic gradient of the surrogate loss with respect to the logits."""
    evaluator = LossEvaluator(module_incidence,
                              catalog.module_line_counts.astype(float))
    _, grad = evaluator.loss_and_gradient(soft.probabilities)
    return grad
