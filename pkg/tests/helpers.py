"""Shared instance builders for the test suite."""

import numpy as np

from streamopt import (EventLineIncidence, LineCatalog, LineRecord, Scheme,
                       SyntheticSpec, gen_synthetic)


def build_catalog(rows):
    """Catalog from (name, prescale, turbo, persist_reco, module) tuples."""
    return LineCatalog(tuple(LineRecord(*row) for row in rows))


def random_instance(rng, *, max_events=300, max_modules=8, lines_range=(1, 3),
                    rate_range=(0.01, 0.12), prescale_mix=True,
                    turbo_prob=0.9, pr_prob=0.3):
    """Random sparse instance: per-line pass rates drawn from rate_range."""
    n_modules = int(rng.integers(2, max_modules + 1))
    records = []
    for m in range(n_modules):
        for j in range(int(rng.integers(lines_range[0], lines_range[1] + 1))):
            if prescale_mix and rng.random() < 0.5:
                prescale = float(rng.uniform(0.2, 1.0))
            else:
                prescale = 1.0
            records.append(LineRecord(
                f"m{m:02d}_l{j}", prescale,
                bool(rng.random() < turbo_prob),
                bool(rng.random() < pr_prob),
                f"m{m:02d}",
            ))
    catalog = LineCatalog(tuple(records))
    n_events = int(rng.integers(20, max_events + 1))
    rates = rng.uniform(rate_range[0], rate_range[1], catalog.n_lines)
    matrix = rng.random((n_events, catalog.n_lines)) < rates
    matrix = matrix[matrix.any(axis=1)]
    if matrix.shape[0] == 0:
        matrix = np.zeros((1, catalog.n_lines), dtype=bool)
        matrix[0, 0] = True
    return EventLineIncidence.from_dense(matrix), catalog


def random_clustered_instance(rng, *, max_events=300, max_modules=8,
                              max_streams=3):
    """Planted-cluster instance plus a random feasible stream count."""
    n_modules = int(rng.integers(3, max_modules + 1))
    n_streams = min(int(rng.integers(2, max_streams + 1)), n_modules)
    spec = SyntheticSpec(
        n_events=int(rng.integers(60, max_events + 1)),
        n_modules=n_modules,
        lines_per_module=(1, 3),
        n_latent_clusters=int(rng.integers(2, min(n_modules, 5) + 1)),
        intra_cluster_pass_rate=float(rng.uniform(0.2, 0.6)),
        cross_cluster_pass_rate=float(rng.uniform(0.0, 0.05)),
        prescale_options=(1.0, 1.0, float(rng.uniform(0.3, 0.9))),
        persist_reco_fraction=0.3,
        seed=int(rng.integers(0, 2 ** 31)),
    )
    instance = gen_synthetic(spec)
    return instance.incidence, instance.catalog, n_streams


def random_scheme(rng, n_units, n_streams):
    return Scheme(n_streams,
                  tuple(int(s) for s in rng.integers(0, n_streams, n_units)))


def brute_force_read_cost(incidence, catalog, scheme):
    """Set-based reference for the read cost, valid for unit prescales only."""
    stream_of_line = [scheme.assignment[catalog.modules.index(rec.module)]
                      for rec in catalog.lines]
    total = 0.0
    for s in range(scheme.n_streams):
        lines = [i for i, t in enumerate(stream_of_line) if t == s]
        events = set()
        for e, l in incidence.pairs():
            if l in set(lines):
                events.add(e)
        total += len(lines) * len(events)
    return total
