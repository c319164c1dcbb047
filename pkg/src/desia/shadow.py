"""Shadow-dataset sampling for the stochastic attack module.

Each shadow dataset mimics the protected dataset from the attacker's side:
auxiliary records drawn without replacement plus a copy of the target, with
sensitive values freshly randomized (attribute-inference case) or membership
randomized (membership-inference case). Features are the query answers on
each shadow dataset; labels are the hidden value the meta-classifier learns
to recover.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._seeds import seed_sequence
from .data import Dataset, Record, TargetUser, dataset_from_records
from .errors import ParameterError
from .queries import HISTOGRAM_CELL_LIMIT, AggregateQuery, QueryEvaluator

TRAIN_FRACTION = 2.0 / 3.0


@dataclass(frozen=True, eq=False)
class ShadowBatch:
    """Labeled query-answer vectors from N shadow datasets, with a row split."""

    features: np.ndarray  # (N, m) int64 query answers
    labels: np.ndarray  # (N,) int64
    train_idx: np.ndarray
    val_idx: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ParameterError("feature rows and labels must align")
        n = self.features.shape[0]
        combined = np.sort(np.concatenate([self.train_idx, self.val_idx]))
        if not np.array_equal(combined, np.arange(n)):
            raise ParameterError("train/val split must partition the rows")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])


def _row_split(n: int) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(np.floor(TRAIN_FRACTION * n))
    idx = np.arange(n)
    return idx[:n_train], idx[n_train:]


def _answers_from_cells(
    ev: QueryEvaluator, cell_rows: list[np.ndarray]
) -> np.ndarray:
    schema = ev.schema
    if schema.n_cells <= HISTOGRAM_CELL_LIMIT:
        hists = np.zeros((len(cell_rows), schema.n_cells), dtype=np.int64)
        for i, cells in enumerate(cell_rows):
            hists[i] = np.bincount(cells, minlength=schema.n_cells)
        return ev.answers_for_histograms(hists)
    out = np.empty((len(cell_rows), ev.n_queries), dtype=np.int64)
    for i, cells in enumerate(cell_rows):
        rows = np.empty((cells.size, schema.n_attributes), dtype=np.int64)
        rem = cells.copy()
        for a in range(schema.n_attributes - 1, -1, -1):
            rows[:, a] = rem % schema.sizes[a]
            rem //= schema.sizes[a]
        out[i] = ev.answers(Dataset(schema=schema, values=rows))
    return out


def sample_shadow_datasets_aia(
    aux: Dataset,
    target: TargetUser,
    queries: Sequence[AggregateQuery],
    size: int,
    n_shadow: int,
    seed: int,
) -> ShadowBatch:
    """Shadow datasets of the released size: s-1 auxiliary draws plus the target.

    All sensitive values, including the target's label, are fresh uniform
    draws; the label is the target's drawn value.
    """
    schema = aux.schema
    if n_shadow < 2:
        raise ParameterError("need at least 2 shadow datasets")
    if size < 1:
        raise ParameterError("shadow dataset size must be >= 1")
    if aux.size < size - 1:
        raise ParameterError(
            f"auxiliary dataset too small: {aux.size} < {size - 1} draws per shadow"
        )
    k_n = schema.sensitive_size
    ev = QueryEvaluator(schema, queries)
    aux_pcells = aux.partial_cell_indices()
    target_pcell = schema.partial_cell_index(target.partial)

    children = seed_sequence("shadow-aia", seed, target.id).spawn(n_shadow)
    cell_rows = []
    labels = np.empty(n_shadow, dtype=np.int64)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        sel = rng.choice(aux.size, size=size - 1, replace=False)
        z = rng.integers(0, k_n, size=size - 1)
        z_star = int(rng.integers(0, k_n))
        cells = np.concatenate(
            [aux_pcells[sel] * k_n + z, [target_pcell * k_n + z_star]]
        )
        cell_rows.append(cells)
        labels[i] = z_star

    train_idx, val_idx = _row_split(n_shadow)
    return ShadowBatch(
        features=_answers_from_cells(ev, cell_rows),
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
    )


def sample_shadow_datasets_mia(
    aux: Dataset,
    target_record: Record,
    queries: Sequence[AggregateQuery],
    size: int,
    n_shadow: int,
    seed: int,
) -> ShadowBatch:
    """Shadow datasets of the released size with randomized target membership.

    A membership bit is drawn per shadow: 1 puts the exact target record in
    alongside size-1 auxiliary draws, 0 uses size auxiliary draws. Auxiliary
    records keep their own sensitive values; the label is the bit.
    """
    schema = aux.schema
    if n_shadow < 2:
        raise ParameterError("need at least 2 shadow datasets")
    if size < 1:
        raise ParameterError("shadow dataset size must be >= 1")
    if aux.size < size:
        raise ParameterError(f"auxiliary dataset too small: {aux.size} < {size}")
    schema.validate_record(target_record)
    ev = QueryEvaluator(schema, queries)
    aux_cells = aux.cell_indices()
    target_cell = schema.cell_index(target_record)

    children = seed_sequence("shadow-mia", seed, *target_record).spawn(n_shadow)
    cell_rows = []
    labels = np.empty(n_shadow, dtype=np.int64)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        b = int(rng.integers(0, 2))
        if b:
            sel = rng.choice(aux.size, size=size - 1, replace=False)
            cells = np.concatenate([aux_cells[sel], [target_cell]])
        else:
            sel = rng.choice(aux.size, size=size, replace=False)
            cells = aux_cells[sel]
        cell_rows.append(cells)
        labels[i] = b

    train_idx, val_idx = _row_split(n_shadow)
    return ShadowBatch(
        features=_answers_from_cells(ev, cell_rows),
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
    )
