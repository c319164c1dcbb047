"""Finite-domain tabular data model.

Records are fixed-length vectors of dense integer codes, one per attribute.
The sensitive attribute is always the last one; schema files that flag a
different attribute as sensitive are permuted on load. Datasets are
multisets of records and immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParameterError, ParseError, SchemaError

DEFAULT_CELL_CAP = 1_000_000

Record = tuple[int, ...]
PartialRecord = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class AttributeSchema:
    """Ordered attributes with dense-coded finite domains, sensitive last.

    Codes for attribute i are 0..sizes[i]-1; ``labels`` maps codes back to
    human-readable values. The domain product (number of potential records,
    "cells") is capped so downstream solvers stay bounded.
    """

    names: tuple[str, ...]
    sizes: tuple[int, ...]
    labels: tuple[tuple[str, ...], ...] = ()
    cell_cap: int = DEFAULT_CELL_CAP

    def __post_init__(self):
        if len(self.names) < 2:
            raise SchemaError("schema needs at least two attributes (one non-sensitive)")
        if len(self.names) != len(set(self.names)):
            raise SchemaError("duplicate attribute names")
        if len(self.sizes) != len(self.names):
            raise SchemaError("sizes/names length mismatch")
        if any(k < 1 for k in self.sizes):
            raise SchemaError("every attribute domain must be non-empty")
        if not self.labels:
            object.__setattr__(
                self, "labels", tuple(tuple(str(v) for v in range(k)) for k in self.sizes)
            )
        for name, k, lab in zip(self.names, self.sizes, self.labels):
            if len(lab) != k or len(set(lab)) != k:
                raise SchemaError(f"attribute {name!r}: labels must be {k} distinct values")
        prod = 1
        for k in self.sizes:
            prod *= k
            if prod > self.cell_cap:
                raise SchemaError(
                    f"domain product exceeds cell cap ({self.cell_cap}); refusing schema"
                )

    # -- basic geometry -------------------------------------------------

    @property
    def n_attributes(self) -> int:
        return len(self.names)

    @property
    def sensitive_index(self) -> int:
        return len(self.names) - 1

    @property
    def sensitive_size(self) -> int:
        return self.sizes[-1]

    @property
    def n_cells(self) -> int:
        return math.prod(self.sizes)

    @property
    def n_partial_cells(self) -> int:
        return math.prod(self.sizes[:-1])

    def domain(self, i: int) -> tuple[int, ...]:
        return tuple(range(self.sizes[i]))

    @property
    def strides(self) -> np.ndarray:
        """Mixed-radix strides; first attribute most significant, sensitive least."""
        s = np.ones(self.n_attributes, dtype=np.int64)
        for i in range(self.n_attributes - 2, -1, -1):
            s[i] = s[i + 1] * self.sizes[i + 1]
        return s

    def cell_index(self, record: Sequence[int]) -> int:
        return int(np.dot(np.asarray(record, dtype=np.int64), self.strides))

    def cell_to_record(self, cell: int) -> Record:
        out = []
        for stride, k in zip(self.strides, self.sizes):
            code, cell = divmod(cell, int(stride))
            out.append(int(code))
        return tuple(out)

    def partial_cell_index(self, partial: Sequence[int]) -> int:
        return self.cell_index(tuple(partial) + (0,)) // self.sensitive_size

    def validate_record(self, values: Sequence[int]) -> Record:
        if len(values) != self.n_attributes:
            raise SchemaError(
                f"record length {len(values)} != attribute count {self.n_attributes}"
            )
        for i, v in enumerate(values):
            if not 0 <= int(v) < self.sizes[i]:
                raise SchemaError(f"value {v} outside domain of attribute {self.names[i]!r}")
        return tuple(int(v) for v in values)

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "attributes": [
                {"name": n, "values": list(lab), "sensitive": i == self.sensitive_index}
                for i, (n, lab) in enumerate(zip(self.names, self.labels))
            ],
            "cell_cap": self.cell_cap,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def __eq__(self, other) -> bool:
        return isinstance(other, AttributeSchema) and self.canonical_json() == other.canonical_json()

    def __hash__(self):
        return hash(self.canonical_json())


def load_schema_json(path: str | Path) -> AttributeSchema:
    """Load a schema file, permuting the sensitive attribute to last position."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    attrs = doc.get("attributes")
    if not isinstance(attrs, list) or not attrs:
        raise ParseError(f"{path}: expected a non-empty 'attributes' list")
    sensitive = [i for i, a in enumerate(attrs) if a.get("sensitive")]
    if len(sensitive) != 1:
        raise ParseError(f"{path}: exactly one attribute must be flagged sensitive")
    order = [i for i in range(len(attrs)) if i != sensitive[0]] + sensitive
    names, sizes, labels = [], [], []
    for i in order:
        a = attrs[i]
        vals = a.get("values")
        if not isinstance(vals, list) or not vals:
            raise ParseError(f"{path}: attribute {a.get('name')!r} needs a 'values' list")
        names.append(str(a["name"]))
        sizes.append(len(vals))
        labels.append(tuple(str(v) for v in vals))
    return AttributeSchema(
        names=tuple(names),
        sizes=tuple(sizes),
        labels=tuple(labels),
        cell_cap=int(doc.get("cell_cap", DEFAULT_CELL_CAP)),
    )


def save_schema_json(schema: AttributeSchema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(schema.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Multiset of records stored as an (s, n) integer array."""

    schema: AttributeSchema
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != self.schema.n_attributes:
            raise SchemaError(
                f"dataset array must be (s, {self.schema.n_attributes}), got {v.shape}"
            )
        for i, k in enumerate(self.schema.sizes):
            col = v[:, i]
            if col.size and (col.min() < 0 or col.max() >= k):
                raise SchemaError(
                    f"out-of-domain value in attribute {self.schema.names[i]!r}"
                )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def records(self) -> list[Record]:
        return [tuple(int(x) for x in row) for row in self.values]

    def cell_indices(self) -> np.ndarray:
        return self.values @ self.schema.strides

    def partial_cell_indices(self) -> np.ndarray:
        return self.cell_indices() // self.schema.sensitive_size

    def multiplicities(self) -> np.ndarray:
        """Record multiplicity per potential record (length = domain product)."""
        return np.bincount(self.cell_indices(), minlength=self.schema.n_cells).astype(np.int64)

    def projection(self) -> np.ndarray:
        return self.values[:, :-1]

    def same_multiset(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.size != other.size:
            return False
        return np.array_equal(
            np.sort(self.cell_indices(), kind="stable"),
            np.sort(other.cell_indices(), kind="stable"),
        )


@dataclass(frozen=True)
class TargetUser:
    """A target known to the attacker by its non-sensitive values."""

    partial: PartialRecord
    id: str


def project(record: Record) -> PartialRecord:
    """Drop the sensitive (last) coordinate."""
    return tuple(record[:-1])


def dataset_from_records(schema: AttributeSchema, records: Iterable[Sequence[int]]) -> Dataset:
    rows = [schema.validate_record(r) for r in records]
    arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), schema.n_attributes)
    return Dataset(schema=schema, values=arr)


def load_dataset_csv(path: str | Path, schema: AttributeSchema) -> Dataset:
    """Read integer-coded CSV: header must list schema attribute names in order."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        expected = ",".join(schema.names)
        if header != expected:
            raise SchemaError(
                f"{path}: header {header!r} does not match schema columns {expected!r}"
            )
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != schema.n_attributes:
                raise ParseError(f"{path}:{lineno}: expected {schema.n_attributes} columns")
            try:
                codes = [int(p) for p in parts]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer value") from exc
            for i, v in enumerate(codes):
                if not 0 <= v < schema.sizes[i]:
                    raise ParseError(
                        f"{path}:{lineno}: value {v} outside domain of "
                        f"attribute {schema.names[i]!r}"
                    )
            rows.append(codes)
    arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), schema.n_attributes)
    return Dataset(schema=schema, values=arr)


def write_dataset_csv(d: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(d.schema.names) + "\n")
        for row in d.values:
            f.write(",".join(str(int(x)) for x in row) + "\n")


def generate_synthetic(
    schema: AttributeSchema,
    s: int,
    seed: int,
    skew: Mapping[str, Sequence[float]] | None = None,
) -> Dataset:
    """Draw s i.i.d. records, each attribute from its own categorical distribution.

    ``skew`` maps attribute name to a weight vector over its domain; omitted
    attributes are uniform. Weights must be non-negative and sum to 1.
    """
    if s < 0:
        raise ParameterError("s must be non-negative")
    skew = dict(skew or {})
    unknown = set(skew) - set(schema.names)
    if unknown:
        raise ParameterError(f"skew names unknown attributes: {sorted(unknown)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cols = []
    for name, k in zip(schema.names, schema.sizes):
        if name in skew:
            w = np.asarray(skew[name], dtype=float)
            if w.shape != (k,):
                raise ParameterError(f"skew for {name!r} must have {k} weights")
            if (w < 0).any():
                raise ParameterError(f"skew for {name!r} has a negative weight")
            total = w.sum()
            if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
                raise ParameterError(f"skew for {name!r} must sum to 1 (got {total})")
            p = w / total
        else:
            p = np.full(k, 1.0 / k)
        cols.append(rng.choice(k, size=s, p=p))
    arr = np.stack(cols, axis=1).astype(np.int64) if s else np.empty((0, schema.n_attributes), np.int64)
    return Dataset(schema=schema, values=arr)


def randomize_sensitive(d: Dataset, seed: int) -> Dataset:
    """Replace every sensitive value with a fresh uniform draw from its domain."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.array(d.values, dtype=np.int64)
    out[:, -1] = rng.integers(0, d.schema.sensitive_size, size=d.size)
    return Dataset(schema=d.schema, values=out)


def find_unique_targets(d: Dataset) -> list[TargetUser]:
    """Users whose non-sensitive projection occurs exactly once, in lexicographic order."""
    if d.size == 0:
        return []
    proj = d.projection()
    uniq, counts = np.unique(proj, axis=0, return_counts=True)
    out = []
    for row, c in zip(uniq, counts):
        if c == 1:
            partial = tuple(int(x) for x in row)
            out.append(TargetUser(partial=partial, id="-".join(str(v) for v in partial)))
    return out


def split_private_aux(d: Dataset, private_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split into (private, auxiliary) parts."""
    if not 0.0 < private_fraction < 1.0:
        raise ParameterError("private_fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(d.size)
    n_priv = int(round(private_fraction * d.size))
    priv = np.sort(perm[:n_priv])
    aux = np.sort(perm[n_priv:])
    return (
        Dataset(schema=d.schema, values=d.values[priv]),
        Dataset(schema=d.schema, values=d.values[aux]),
    )


def dataset_hash(d: Dataset) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(d.schema.canonical_json().encode())
    h.update(str(d.values.shape).encode())
    h.update(np.ascontiguousarray(d.values).tobytes())
    return h.hexdigest()[:16]
