import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamopt import (EventLineIncidence, SoftAssignment,
                       expected_events, expected_lines, fold_modules,
                       loss_gradient, read_cost, relaxed_loss, softmax_rows)
from helpers import build_catalog, random_instance, random_scheme


def finite_difference_gradient(module_incidence, catalog, logits, step=1e-5):
    grad = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            plus = logits.copy()
            plus[i, j] += step
            minus = logits.copy()
            minus[i, j] -= step
            f_plus = relaxed_loss(module_incidence, catalog,
                                  SoftAssignment.from_logits(plus)).value
            f_minus = relaxed_loss(module_incidence, catalog,
                                   SoftAssignment.from_logits(minus)).value
            grad[i, j] = (f_plus - f_minus) / (2 * step)
    return grad


class TestSoftmaxRows:
    def test_symmetric_row(self):
        assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_closed_form(self):
        out = softmax_rows(np.array([[0.0, math.log(3.0)]]))
        assert np.allclose(out, [[0.25, 0.75]], atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            softmax_rows(np.array([[np.inf, 0.0]]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=5),
           st.floats(-100, 100))
    def test_shift_invariance(self, row, shift):
        base = softmax_rows(np.array([row]))
        shifted = softmax_rows(np.array([row]) + shift)
        assert np.allclose(base, shifted, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.lists(st.floats(-50, 50), min_size=2, max_size=5),
                    min_size=1, max_size=4).filter(
                        lambda rows: len({len(r) for r in rows}) == 1))
    def test_rows_sum_to_one(self, rows):
        out = softmax_rows(np.array(rows))
        assert np.max(np.abs(out.sum(axis=1) - 1.0)) <= 1e-12


class TestExpectedLines:
    def test_three_line_module_split(self):
        cat = build_catalog([(f"l{i}", 1.0, True, False, "m") for i in range(3)])
        soft = SoftAssignment(np.array([[0.5, 0.5]]))
        assert np.allclose(expected_lines(cat, soft), [1.5, 1.5])

    def test_hard_assignment_counts_lines(self):
        cat = build_catalog([("a", 1.0, True, False, "m0"),
                             ("b", 1.0, True, False, "m0"),
                             ("c", 1.0, True, False, "m1")])
        soft = SoftAssignment(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert expected_lines(cat, soft).tolist() == [2.0, 1.0]

    def test_dimension_mismatch(self):
        cat = build_catalog([("a", 1.0, True, False, "m0")])
        with pytest.raises(ValueError, match="units"):
            expected_lines(cat, SoftAssignment(np.array([[0.5, 0.5],
                                                         [0.5, 0.5]])))


class TestExpectedEvents:
    def test_single_module_splits_mass(self):
        cat = build_catalog([("a", 1.0, True, False, "m")])
        inc = EventLineIncidence(1, 1, [(0, 0)])
        folded = fold_modules(inc, cat)
        soft = SoftAssignment(np.array([[0.5, 0.5]]))
        assert np.allclose(expected_events(folded, soft), [0.5, 0.5])

    def test_hard_assignment_counts_events(self):
        rng = np.random.default_rng(31)
        inc, cat = random_instance(rng, prescale_mix=False)
        folded = fold_modules(inc, cat)
        scheme = random_scheme(rng, cat.n_modules, 3)
        events = expected_events(folded, SoftAssignment.one_hot(scheme))
        stream_of_line = np.asarray(scheme.assignment)[cat.module_of_line]
        for s in range(3):
            selected = {e for e, l in inc.pairs() if stream_of_line[l] == s}
            assert events[s] == pytest.approx(len(selected), rel=1e-12)

    def test_two_module_arithmetic(self):
        cat = build_catalog([("a", 1.0, True, False, "m0"),
                             ("b", 0.5, True, False, "m1")])
        inc = EventLineIncidence(1, 2, [(0, 0), (0, 1)])
        folded = fold_modules(inc, cat)
        soft = SoftAssignment(np.array([[1.0, 0.0], [1.0, 0.0]]))
        events = expected_events(folded, soft)
        assert events[0] == pytest.approx(1.0, abs=1e-12)
        assert events[1] == 0.0


class TestRelaxedLoss:
    def test_one_hot_equals_discrete_cost(self):
        rng = np.random.default_rng(32)
        for _ in range(25):
            inc, cat = random_instance(rng)
            folded = fold_modules(inc, cat)
            scheme = random_scheme(rng, cat.n_modules, int(rng.integers(1, 5)))
            loss = relaxed_loss(folded, cat, SoftAssignment.one_hot(scheme))
            cost = read_cost(inc, cat, scheme).total
            assert loss.value == pytest.approx(cost, rel=1e-9)

    def test_interior_point_differs_from_expectation(self):
        # One line, one event, half/half: surrogate is 0.5 although any
        # rounded assignment costs 1.
        cat = build_catalog([("a", 1.0, True, False, "m")])
        inc = EventLineIncidence(1, 1, [(0, 0)])
        folded = fold_modules(inc, cat)
        soft = SoftAssignment(np.array([[0.5, 0.5]]))
        assert relaxed_loss(folded, cat, soft).value == pytest.approx(0.5)

    def test_uniform_single_module_closed_form(self):
        rng = np.random.default_rng(33)
        n_lines, n_events, k = 4, 30, 3
        mat = rng.random((n_events, n_lines)) < 0.5
        mat[:, 0] = True
        inc = EventLineIncidence.from_dense(mat)
        cat = build_catalog([(f"l{i}", 1.0, True, False, "m")
                             for i in range(n_lines)])
        folded = fold_modules(inc, cat)
        soft = SoftAssignment(np.full((1, k), 1.0 / k))
        expected = n_lines / k * folded.values.sum()
        assert relaxed_loss(folded, cat, soft).value == \
            pytest.approx(expected, rel=1e-12)

    def test_value_is_product_of_factors(self):
        rng = np.random.default_rng(34)
        inc, cat = random_instance(rng)
        folded = fold_modules(inc, cat)
        soft = SoftAssignment.from_logits(
            rng.normal(0, 1, (cat.n_modules, 3)))
        loss = relaxed_loss(folded, cat, soft)
        assert loss.value == pytest.approx(
            float(np.sum(loss.per_stream_expected_lines
                         * loss.per_stream_expected_events)), rel=1e-9)

    def test_ungrouped_reduction(self):
        # One module per line at unit prescales reduces to the line-level
        # surrogate computed directly from the incidence matrix.
        rng = np.random.default_rng(35)
        mat = rng.random((40, 5)) < 0.3
        mat = mat[mat.any(axis=1)]
        inc = EventLineIncidence.from_dense(mat)
        cat = build_catalog([(f"l{i}", 1.0, True, False, f"l{i}")
                             for i in range(5)])
        folded = fold_modules(inc, cat)
        probs = softmax_rows(rng.normal(0, 1, (5, 3)))
        lines = probs.sum(axis=0)
        miss = 1.0 - mat.astype(float)[:, :, None] * probs[None, :, :]
        events = (1.0 - miss.prod(axis=1)).sum(axis=0)
        want = float((lines * events).sum())
        got = relaxed_loss(folded, cat, SoftAssignment(probs)).value
        assert got == pytest.approx(want, rel=1e-12)


class TestLossGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(36)
        inc, cat = random_instance(rng, max_modules=5)
        folded = fold_modules(inc, cat)
        logits = rng.normal(0, 1, (cat.n_modules, 3))
        analytic = loss_gradient(folded, cat, SoftAssignment.from_logits(logits))
        numeric = finite_difference_gradient(folded, cat, logits)
        scale = max(np.abs(numeric).max(), 1e-12)
        assert np.abs(analytic - numeric).max() / scale < 1e-5

    def test_uniform_logits_symmetric_across_streams(self):
        rng = np.random.default_rng(37)
        inc, cat = random_instance(rng)
        folded = fold_modules(inc, cat)
        soft = SoftAssignment.from_logits(np.zeros((cat.n_modules, 3)))
        grad = loss_gradient(folded, cat, soft)
        assert np.allclose(grad, grad[:, :1], atol=1e-12)

    def test_single_stream_gradient_vanishes(self):
        rng = np.random.default_rng(38)
        inc, cat = random_instance(rng)
        folded = fold_modules(inc, cat)
        soft = SoftAssignment.from_logits(rng.normal(0, 1, (cat.n_modules, 1)))
        assert np.all(loss_gradient(folded, cat, soft) == 0.0)

    def test_shift_invariance_of_loss_and_gradient(self):
        rng = np.random.default_rng(39)
        inc, cat = random_instance(rng)
        folded = fold_modules(inc, cat)
        logits = rng.normal(0, 1, (cat.n_modules, 3))
        shifted = logits + rng.normal(0, 5, (cat.n_modules, 1))
        a = SoftAssignment.from_logits(logits)
        b = SoftAssignment.from_logits(shifted)
        assert np.allclose(a.probabilities, b.probabilities, atol=1e-12)
        assert relaxed_loss(folded, cat, a).value == pytest.approx(
            relaxed_loss(folded, cat, b).value, rel=1e-12)
        assert np.allclose(loss_gradient(folded, cat, a),
                           loss_gradient(folded, cat, b), atol=1e-9)

    def test_sparse_incidence_matches_dense(self):
        rng = np.random.default_rng(40)
        inc, cat = random_instance(rng, max_modules=6)
        dense = fold_modules(inc, cat)
        sparse = fold_modules(inc, cat, dense_threshold=1)
        soft = SoftAssignment.from_logits(rng.normal(0, 1, (cat.n_modules, 2)))
        assert relaxed_loss(sparse, cat, soft).value == pytest.approx(
            relaxed_loss(dense, cat, soft).value, rel=1e-12)
        assert np.allclose(loss_gradient(sparse, cat, soft),
                           loss_gradient(dense, cat, soft), atol=1e-12)
