"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately naive and kept independent of the library's
fast paths: worlds are enumerated exhaustively, AUC is the O(n^2) pairwise
statistic, and solver verdicts are checked against full domain products.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from desia import AttributeSchema, Dataset, QueryRelease
from desia.queries import QueryEvaluator


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> np.ndarray:
    """All vectors of `parts` non-negative ints summing to `total` (stars and bars)."""
    rows = []
    for dividers in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        row = []
        for d in dividers:
            row.append(d - prev - 1)
            prev = d
        row.append(total + parts - 1 - prev - 1)
        rows.append(row)
    return np.asarray(rows, dtype=np.int64)


def consistent_worlds(schema: AttributeSchema, rel: QueryRelease) -> np.ndarray:
    """All size-s multiplicity vectors over the domain product whose exact
    query answers equal the released answers."""
    worlds = _compositions(rel.dataset_size, schema.n_cells)
    if rel.m == 0:
        return worlds
    masks = QueryEvaluator(schema, rel.queries).cell_masks().astype(np.int64)
    answers = worlds @ masks.T
    ok = (answers == rel.answers[None, :]).all(axis=1)
    return worlds[ok]


def oracle_aia(schema: AttributeSchema, rel: QueryRelease, partial) -> int | None:
    """Sensitive value v iff every consistent world with the target unique on
    its non-sensitive values completes the target with v; else None."""
    worlds = consistent_worlds(schema, rel)
    k_n = schema.sensitive_size
    base = schema.partial_cell_index(partial) * k_n
    comp = worlds[:, base : base + k_n]
    unique_ok = comp.sum(axis=1) == 1
    comp = comp[unique_ok]
    if comp.shape[0] == 0:
        return None
    values = {int(np.flatnonzero(row)[0]) for row in comp}
    return values.pop() if len(values) == 1 else None


def oracle_mia(schema: AttributeSchema, rel: QueryRelease, record) -> int | None:
    """1 iff the record's multiplicity is >=1 in every consistent world,
    0 iff it is 0 in every world, else None."""
    worlds = consistent_worlds(schema, rel)
    if worlds.shape[0] == 0:
        return None
    mult = worlds[:, schema.cell_index(record)]
    if (mult >= 1).all():
        return 1
    if (mult == 0).all():
        return 0
    return None


def pairwise_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie) over all pos/neg pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for p in pos:
        wins += int((p > neg).sum())
        ties += int((p == neg).sum())
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def brute_force_satisfiable(problem) -> bool:
    """Exhaustive check over the full cartesian product of variable domains."""
    lo = problem.lower
    hi = problem.upper
    if (lo > hi).any():
        return False
    grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)], indexing="ij")
    assignments = np.stack([g.ravel() for g in grids], axis=1)
    ok = np.ones(assignments.shape[0], dtype=bool)
    for c in problem.constraints:
        if c.variables:
            ok &= assignments[:, list(c.variables)].sum(axis=1) == c.target
        else:
            ok &= c.target == 0
    return bool(ok.any())


def solve_checked(problem, **kwargs):
    """solve() plus the soundness assertion on every returned assignment."""
    from desia import SolveStatus, solve

    res = solve(problem, **kwargs)
    if res.status is SolveStatus.SATISFIABLE:
        assert res.assignment.satisfies(problem), "solver returned an invalid assignment"
    return res


def random_schema(rng: np.random.Generator, max_cells: int = 16) -> AttributeSchema:
    """Small random schema whose domain product stays under max_cells."""
    while True:
        n_attr = int(rng.integers(2, 4))
        sizes = [int(rng.integers(2, 4)) for _ in range(n_attr)]
        prod = int(np.prod(sizes))
        if prod <= max_cells:
            break
    names = tuple(f"a{i}" for i in range(n_attr))
    return AttributeSchema(names=names, sizes=tuple(sizes))


def random_box_query(schema: AttributeSchema, rng: np.random.Generator):
    from desia import AggregateQuery

    subsets = []
    for k in schema.sizes:
        if rng.random() < 0.4:
            subsets.append(tuple(range(k)))
        else:
            size = int(rng.integers(1, k + 1))
            subsets.append(tuple(sorted(rng.choice(k, size=size, replace=False))))
    return AggregateQuery(subsets=tuple(subsets))


def random_dataset(schema: AttributeSchema, s: int, rng: np.random.Generator) -> Dataset:
    rows = np.stack(
        [rng.integers(0, k, size=s) for k in schema.sizes], axis=1
    ).astype(np.int64)
    return Dataset(schema=schema, values=rows.reshape(s, schema.n_attributes))
