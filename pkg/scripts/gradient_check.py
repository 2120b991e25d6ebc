#!/usr/bin/env python3
"""Spot-check the analytic loss gradient against central finite differences.

Usage:
    python3 scripts/gradient_check.py --trials 10 --seed 0
"""

import argparse
import sys

import numpy as np

from streamopt import (EventLineIncidence, LineCatalog, LineRecord,
                       SoftAssignment, fold_modules, loss_gradient,
                       relaxed_loss)


def random_instance(rng, n_events, n_modules):
    records = []
    for m in range(n_modules):
        for j in range(int(rng.integers(1, 4))):
            prescale = 1.0 if rng.random() < 0.5 else float(rng.uniform(0.2, 1))
            records.append(LineRecord(f"m{m:02d}_l{j}", prescale,
                                      module=f"m{m:02d}"))
    catalog = LineCatalog(tuple(records))
    matrix = rng.random((n_events, catalog.n_lines)) < 0.15
    matrix = matrix[matrix.any(axis=1)]
    return EventLineIncidence.from_dense(matrix), catalog


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--step", type=float, default=1e-5)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        inc, cat = random_instance(rng, int(rng.integers(50, 300)),
                                   int(rng.integers(3, 15)))
        folded = fold_modules(inc, cat)
        n_streams = int(rng.integers(2, 7))
        logits = rng.normal(0, 1, (cat.n_modules, n_streams))
        analytic = loss_gradient(folded, cat,
                                 SoftAssignment.from_logits(logits))
        numeric = np.zeros_like(logits)
        for i in range(logits.shape[0]):
            for j in range(n_streams):
                plus, minus = logits.copy(), logits.copy()
                plus[i, j] += args.step
                minus[i, j] -= args.step
                f_plus = relaxed_loss(folded, cat,
                                      SoftAssignment.from_logits(plus)).value
                f_minus = relaxed_loss(folded, cat,
                                       SoftAssignment.from_logits(minus)).value
                numeric[i, j] = (f_plus - f_minus) / (2 * args.step)
        rel = np.abs(analytic - numeric).max() / max(np.abs(numeric).max(),
                                                     1e-12)
        worst = max(worst, rel)
        print(f"trial {trial:2d}: modules={cat.n_modules:2d} "
              f"streams={n_streams} relative error={rel:.3e}")
    print(f"worst relative error: {worst:.3e}")
    return 0 if worst < 1e-5 else 1


if __name__ == "__main__":
    sys.exit(main())
