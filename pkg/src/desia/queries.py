"""Counting aggregate statistics and their release.

A query is a per-attribute value subset; a record is counted when every
coordinate falls in the corresponding subset. A release is an ordered query
list with (optionally Laplace-noised) integer answers and the dataset size.

Batch evaluation uses either a domain-product histogram (small products) or
a per-record membership matrix; both are exact integer arithmetic and
bit-identical to evaluating queries one at a time.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._seeds import derive_rng
from .data import AttributeSchema, Dataset, Record
from .errors import ParameterError, ParseError, SchemaError

# Above this many domain-product cells, evaluate_all switches from the
# histogram fast path to the per-record membership path.
HISTOGRAM_CELL_LIMIT = 1 << 16


@dataclass(frozen=True)
class AggregateQuery:
    """Per-attribute value subsets; a full-domain subset imposes no condition."""

    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "subsets", tuple(tuple(sorted(set(int(v) for v in s))) for s in self.subsets)
        )
        if any(len(s) == 0 for s in self.subsets):
            raise ParameterError("every query subset must be non-empty")

    def validate(self, schema: AttributeSchema) -> None:
        if len(self.subsets) != schema.n_attributes:
            raise SchemaError("query arity does not match schema")
        for i, s in enumerate(self.subsets):
            if s[0] < 0 or s[-1] >= schema.sizes[i]:
                raise SchemaError(
                    f"query subset out of domain for attribute {schema.names[i]!r}"
                )

    def conditions_on(self, i: int, schema: AttributeSchema) -> bool:
        return len(self.subsets[i]) != schema.sizes[i]

    def is_total_count(self, schema: AttributeSchema) -> bool:
        return not any(self.conditions_on(i, schema) for i in range(schema.n_attributes))


def total_count_query(schema: AttributeSchema) -> AggregateQuery:
    return AggregateQuery(subsets=tuple(schema.domain(i) for i in range(schema.n_attributes)))


def covers(q: AggregateQuery, r: Record) -> bool:
    """True iff every coordinate of r lies in the query's subset."""
    return all(v in s for v, s in zip(r, q.subsets))


def evaluate(q: AggregateQuery, d: Dataset) -> int:
    """Count of records covered by q (the naive per-query path)."""
    q.validate(d.schema)
    mask = np.ones(d.size, dtype=bool)
    for i, s in enumerate(q.subsets):
        if len(s) != d.schema.sizes[i]:
            mask &= np.isin(d.values[:, i], np.asarray(s, dtype=np.int64))
    return int(mask.sum())


class QueryEvaluator:
    """Precomputed batch evaluator for a fixed (schema, query list) pair."""

    def __init__(self, schema: AttributeSchema, queries: Sequence[AggregateQuery]):
        self.schema = schema
        self.queries = tuple(queries)
        for q in self.queries:
            q.validate(schema)
        m = len(self.queries)
        # per-attribute membership tables: attr_masks[i][j, v] == v in q_j.subsets[i]
        self.attr_masks = []
        for i, k in enumerate(schema.sizes):
            t = np.zeros((m, k), dtype=bool)
            for j, q in enumerate(self.queries):
                t[j, list(q.subsets[i])] = True
            self.attr_masks.append(t)
        self._cell_masks: np.ndarray | None = None

    @property
    def n_queries(self) -> int:
        return len(self.queries)

    def cell_masks(self) -> np.ndarray:
        """(m, n_cells) bool: which potential records each query covers."""
        if self._cell_masks is None:
            m = self.n_queries
            if m == 0:
                self._cell_masks = np.zeros((0, self.schema.n_cells), dtype=bool)
                return self._cell_masks
            masks = np.ones((m, 1), dtype=bool)
            for t in self.attr_masks:
                masks = (masks[:, :, None] & t[:, None, :]).reshape(m, -1)
            self._cell_masks = masks
        return self._cell_masks

    def query_cells(self, j: int) -> np.ndarray:
        """Sorted cell indices covered by query j."""
        return np.flatnonzero(self.cell_masks()[j])

    def answers_for_multiplicities(self, mult: np.ndarray) -> np.ndarray:
        return self.cell_masks().astype(np.int64) @ np.asarray(mult, dtype=np.int64)

    def answers_for_histograms(self, hists: np.ndarray) -> np.ndarray:
        """(N, n_cells) multiplicity matrix -> (N, m) exact answers."""
        return np.asarray(hists, dtype=np.int64) @ self.cell_masks().T.astype(np.int64)

    def membership_matrix(self, d: Dataset) -> np.ndarray:
        """(m, s) bool userset-membership bitmap; row popcounts are the answers."""
        out = np.ones((self.n_queries, d.size), dtype=bool)
        for i, t in enumerate(self.attr_masks):
            out &= t[:, d.values[:, i]]
        return out

    def answers(self, d: Dataset) -> np.ndarray:
        if d.schema != self.schema:
            raise SchemaError("dataset schema does not match evaluator schema")
        if self.schema.n_cells <= HISTOGRAM_CELL_LIMIT:
            return self.answers_for_multiplicities(d.multiplicities())
        return self.membership_matrix(d).sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class QueryMembershipIndex:
    """Per-query bitsets over a dataset's records (userset membership)."""

    bits: np.ndarray  # (m, s) bool

    def answers(self) -> np.ndarray:
        return self.bits.sum(axis=1).astype(np.int64)


def build_membership_index(
    queries: Sequence[AggregateQuery], d: Dataset
) -> QueryMembershipIndex:
    return QueryMembershipIndex(bits=QueryEvaluator(d.schema, queries).membership_matrix(d))


def evaluate_all(queries: Sequence[AggregateQuery], d: Dataset) -> np.ndarray:
    """Batch answers, element-wise equal to evaluate() per query."""
    if not queries:
        return np.zeros(0, dtype=np.int64)
    return QueryEvaluator(d.schema, queries).answers(d)


@dataclass(frozen=True)
class QueryRelease:
    """Fixed one-shot publication: ordered queries, answers, dataset size.

    Answers are exact counts unless ``noise_meta`` is present, in which case
    they are rounded Laplace-noised counts and may be negative.
    """

    queries: tuple[AggregateQuery, ...]
    answers: np.ndarray
    dataset_size: int
    noise_meta: dict | None = None

    def __post_init__(self):
        a = np.asarray(self.answers, dtype=np.int64).copy()
        if a.shape != (len(self.queries),):
            raise ParameterError("answers length must equal query count")
        if self.noise_meta is None and a.size:
            if a.min() < 0 or a.max() > self.dataset_size:
                raise ParameterError("exact answers must lie in [0, dataset_size]")
        a.setflags(write=False)
        object.__setattr__(self, "answers", a)

    @property
    def m(self) -> int:
        return len(self.queries)


def release(queries: Sequence[AggregateQuery], d: Dataset) -> QueryRelease:
    return QueryRelease(
        queries=tuple(queries),
        answers=evaluate_all(queries, d),
        dataset_size=d.size,
        noise_meta=None,
    )


def add_laplace_noise(rel: QueryRelease, epsilon: float, seed: int) -> QueryRelease:
    """Per-query Laplace(1/epsilon) noise, rounded to the nearest integer.

    Noisy answers are published as-is: no clamping to [0, s] and no
    renormalization, so negative counts can appear.
    """
    if rel.noise_meta is not None:
        raise ParameterError("release is already noisy")
    if not (epsilon > 0):
        raise ParameterError("epsilon must be > 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.laplace(loc=0.0, scale=1.0 / epsilon, size=rel.m)
    noisy = np.rint(rel.answers + noise).astype(np.int64)
    return QueryRelease(
        queries=rel.queries,
        answers=noisy,
        dataset_size=rel.dataset_size,
        noise_meta={"epsilon": float(epsilon), "seed": int(seed)},
    )


def sample_queries(
    queries: Sequence[AggregateQuery], m: int, seed: int
) -> list[AggregateQuery]:
    """Uniform without-replacement subset of size m, order stable under seed."""
    if m < 0 or m > len(queries):
        raise ParameterError(f"m={m} out of range for {len(queries)} queries")
    rng = derive_rng("sample_queries", seed)
    idx = rng.permutation(len(queries))[:m]
    return [queries[i] for i in idx]


def make_marginal_queries(
    schema: AttributeSchema,
    k: int,
    attributes: Sequence[str] | None = None,
    bucket_widths: Mapping[str, int] | None = None,
) -> list[AggregateQuery]:
    """All k-way marginal cell queries over the chosen attributes.

    Each conditioned attribute carries one cell of its (optionally bucketed)
    domain: an interval of codes when a bucket width is given, a singleton
    otherwise. Unconditioned attributes stay full-domain.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    names = list(attributes) if attributes is not None else list(schema.names)
    unknown = set(names) - set(schema.names)
    if unknown:
        raise ParameterError(f"unknown attributes: {sorted(unknown)}")
    if k > len(names):
        raise ParameterError(f"k={k} larger than {len(names)} chosen attributes")
    widths = dict(bucket_widths or {})
    if any(w < 1 for w in widths.values()):
        raise ParameterError("bucket widths must be >= 1")

    index_of = {n: i for i, n in enumerate(schema.names)}
    cells_per_attr: dict[int, list[tuple[int, ...]]] = {}
    for name in names:
        i = index_of[name]
        w = widths.get(name, 1)
        dom = schema.domain(i)
        cells_per_attr[i] = [dom[lo : lo + w] for lo in range(0, len(dom), w)]

    full = [schema.domain(i) for i in range(schema.n_attributes)]
    out: list[AggregateQuery] = []
    chosen = sorted(index_of[n] for n in names)
    for combo in itertools.combinations(chosen, k):
        for cells in itertools.product(*(cells_per_attr[i] for i in combo)):
            subsets = list(full)
            for i, cell in zip(combo, cells):
                subsets[i] = cell
            out.append(AggregateQuery(subsets=tuple(subsets)))
    return out


# -- query/release files -------------------------------------------------


def _encode_subset(subset: tuple[int, ...], full_size: int):
    if len(subset) == full_size:
        return None
    lo, hi = subset[0], subset[-1]
    if len(subset) == hi - lo + 1 and len(subset) > 2:
        return {"range": [lo, hi]}
    return list(subset)


def _decode_subset(enc, schema: AttributeSchema, i: int, where: str) -> tuple[int, ...]:
    k = schema.sizes[i]
    if isinstance(enc, dict) and set(enc) == {"range"}:
        lo, hi = enc["range"]
        vals = list(range(int(lo), int(hi) + 1))
    elif isinstance(enc, list):
        vals = [int(v) for v in enc]
    else:
        raise ParseError(f"{where}: bad subset encoding for attribute {schema.names[i]!r}")
    if not vals or min(vals) < 0 or max(vals) >= k:
        raise ParseError(
            f"{where}: value outside domain of attribute {schema.names[i]!r}"
        )
    return tuple(sorted(set(vals)))


def queries_to_json_list(
    queries: Sequence[AggregateQuery], schema: AttributeSchema
) -> list[dict]:
    out = []
    for q in queries:
        enc = {}
        for i, s in enumerate(q.subsets):
            e = _encode_subset(s, schema.sizes[i])
            if e is not None:
                enc[schema.names[i]] = e
        out.append(enc)
    return out


def queries_from_json_list(
    items: Sequence[dict], schema: AttributeSchema, where: str = "query spec"
) -> list[AggregateQuery]:
    name_to_idx = {n: i for i, n in enumerate(schema.names)}
    out = []
    for j, item in enumerate(items):
        subsets = [schema.domain(i) for i in range(schema.n_attributes)]
        for name, enc in item.items():
            if name not in name_to_idx:
                raise ParseError(f"{where}: query {j}: unknown attribute {name!r}")
            i = name_to_idx[name]
            subsets[i] = _decode_subset(enc, schema, i, f"{where}: query {j}")
        out.append(AggregateQuery(subsets=tuple(subsets)))
    return out


def save_query_spec(
    queries: Sequence[AggregateQuery],
    schema: AttributeSchema,
    path: str | Path,
    meta: dict | None = None,
) -> None:
    doc = {
        "schema_hash": _schema_hash(schema),
        "queries": queries_to_json_list(queries, schema),
    }
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_query_spec(path: str | Path, schema: AttributeSchema) -> list[AggregateQuery]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    items = doc.get("queries")
    if not isinstance(items, list):
        raise ParseError(f"{path}: expected a 'queries' list")
    return queries_from_json_list(items, schema, where=str(path))


def _schema_hash(schema: AttributeSchema) -> str:
    import hashlib

    return hashlib.sha256(schema.canonical_json().encode()).hexdigest()[:16]


def save_release_json(rel: QueryRelease, schema: AttributeSchema, path: str | Path,
                      meta: dict | None = None) -> None:
    doc = {
        "schema_hash": _schema_hash(schema),
        "queries": queries_to_json_list(rel.queries, schema),
        "answers": [int(a) for a in rel.answers],
        "dataset_size": rel.dataset_size,
    }
    if rel.noise_meta is not None:
        doc["noise"] = rel.noise_meta
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_release_json(path: str | Path, schema: AttributeSchema) -> QueryRelease:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("schema_hash") != _schema_hash(schema):
        raise ParseError(f"{path}: release was built for a different schema")
    queries = queries_from_json_list(doc["queries"], schema, where=str(path))
    return QueryRelease(
        queries=tuple(queries),
        answers=np.asarray(doc["answers"], dtype=np.int64),
        dataset_size=int(doc["dataset_size"]),
        noise_meta=doc.get("noise"),
    )
