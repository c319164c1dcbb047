"""Bounded-integer feasibility solver over record-multiplicity variables.

One variable per potential record in the schema's domain product; each
released counting query contributes a sum-equality constraint over the
cells it covers, and the known dataset size adds a sum constraint over all
cells. The solver runs bounds-consistency propagation on the sum
constraints to a fixpoint, then depth-first search branching on the
variable with the smallest remaining interval. Seeds control tie-breaking
and value order; a hint biases value order toward hinted values first.

Outcomes are three-valued: SATISFIABLE (with an assignment), INFEASIBLE
(search space exhausted), or UNKNOWN (node or time budget hit). UNKNOWN is
never silently collapsed into INFEASIBLE, so callers can treat it as "not
verified".
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ._seeds import derive_rng
from .data import AttributeSchema, Dataset
from .errors import CapacityError, ParameterError
from .queries import QueryEvaluator, QueryRelease


@dataclass(frozen=True)
class SumConstraint:
    """Sum of the referenced variables must equal target exactly."""

    variables: tuple[int, ...]
    target: int

    def __post_init__(self):
        if self.target < 0:
            raise ParameterError("constraint target must be non-negative")
        object.__setattr__(self, "variables", tuple(int(v) for v in self.variables))


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int = 10_000_000
    max_seconds: float = 30.0


@dataclass(frozen=True, eq=False)
class FeasibilityProblem:
    """Immutable problem: per-variable integer intervals plus sum constraints.

    A variable with lower == upper is fixed. Intervals with lower > upper are
    permitted and make the problem trivially infeasible (used to encode
    "multiplicity >= 1" checks that have become impossible).
    """

    schema: AttributeSchema
    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple[SumConstraint, ...]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.int64).copy()
        hi = np.asarray(self.upper, dtype=np.int64).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ParameterError("lower/upper must be 1-D arrays of equal length")
        n = lo.shape[0]
        for c in self.constraints:
            if c.variables and (min(c.variables) < 0 or max(c.variables) >= n):
                raise ParameterError("constraint references a non-existent variable")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_variables(self) -> int:
        return int(self.lower.shape[0])

    def fixed(self) -> dict[int, int]:
        idx = np.flatnonzero(self.lower == self.upper)
        return {int(i): int(self.lower[i]) for i in idx}


class SolveStatus(enum.Enum):
    SATISFIABLE = "satisfiable"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class Assignment:
    """A value per variable; valid assignments satisfy every constraint exactly."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def satisfies(self, p: FeasibilityProblem) -> bool:
        v = self.values
        if v.shape != p.lower.shape:
            return False
        if (v < p.lower).any() or (v > p.upper).any():
            return False
        return all(
            int(v[list(c.variables)].sum()) == c.target for c in p.constraints
        )


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    assignment: Assignment | None
    nodes: int


def build_problem(schema: AttributeSchema, rel: QueryRelease) -> FeasibilityProblem:
    """One variable per potential record; one constraint per released query,
    plus the implicit total-size constraint (the attacker knows |D|).

    Negative noisy answers are clamped to 0 with a warning; the resulting
    hard constraints may be mutually infeasible.
    """
    n_cells = schema.n_cells
    if n_cells > schema.cell_cap:
        raise CapacityError(f"domain product {n_cells} exceeds cap {schema.cell_cap}")
    s = rel.dataset_size
    ev = QueryEvaluator(schema, rel.queries)
    constraints: list[SumConstraint] = []
    n_clamped = 0
    for j in range(rel.m):
        target = int(rel.answers[j])
        if target < 0:
            target = 0
            n_clamped += 1
        constraints.append(
            SumConstraint(variables=tuple(int(i) for i in ev.query_cells(j)), target=target)
        )
    if n_clamped:
        warnings.warn(
            f"clamped {n_clamped} negative noisy answers to 0 when building constraints",
            RuntimeWarning,
            stacklevel=2,
        )
    constraints.append(SumConstraint(variables=tuple(range(n_cells)), target=s))
    return FeasibilityProblem(
        schema=schema,
        lower=np.zeros(n_cells, dtype=np.int64),
        upper=np.full(n_cells, s, dtype=np.int64),
        constraints=tuple(constraints),
    )


def tighten_domains(p: FeasibilityProblem) -> FeasibilityProblem:
    """Shrink each upper bound to the smallest covering-constraint target.

    This is the minimum over released answers of all queries covering the
    record (the total-size constraint keeps the default at s), and never
    removes a satisfying assignment. Variables whose bound reaches 0 are
    thereby fixed to 0.
    """
    hi = p.upper.copy()
    for c in p.constraints:
        if c.variables:
            idx = np.fromiter(c.variables, dtype=np.int64, count=len(c.variables))
            np.minimum.at(hi, idx, c.target)
    return FeasibilityProblem(schema=p.schema, lower=p.lower, upper=hi, constraints=p.constraints)


def add_sum_constraint(
    p: FeasibilityProblem, variables: Sequence[int], target: int
) -> FeasibilityProblem:
    c = SumConstraint(variables=tuple(int(v) for v in variables), target=int(target))
    if c.variables and (min(c.variables) < 0 or max(c.variables) >= p.n_variables):
        raise ParameterError("constraint references a non-existent variable")
    return replace(p, constraints=p.constraints + (c,))


def fix_variable(p: FeasibilityProblem, var: int, value: int) -> FeasibilityProblem:
    if not 0 <= var < p.n_variables:
        raise ParameterError(f"variable {var} out of range")
    if not p.lower[var] <= value <= p.upper[var]:
        raise ParameterError(
            f"value {value} outside domain [{p.lower[var]}, {p.upper[var]}] of variable {var}"
        )
    lo = p.lower.copy()
    hi = p.upper.copy()
    lo[var] = hi[var] = value
    return replace(p, lower=lo, upper=hi)


def bound_variable(
    p: FeasibilityProblem, var: int, lo: int | None = None, hi: int | None = None
) -> FeasibilityProblem:
    """Intersect a variable's interval with [lo, hi]; may yield an empty domain."""
    if not 0 <= var < p.n_variables:
        raise ParameterError(f"variable {var} out of range")
    new_lo = p.lower.copy()
    new_hi = p.upper.copy()
    if lo is not None:
        new_lo[var] = max(new_lo[var], lo)
    if hi is not None:
        new_hi[var] = min(new_hi[var], hi)
    return replace(p, lower=new_lo, upper=new_hi)


class _Budget(Exception):
    pass


def _propagate(lo, hi, idx_arrays, targets) -> bool:
    """Bounds-consistency fixpoint over all sum constraints. Mutates lo/hi."""
    changed = True
    while changed:
        changed = False
        for idx, t in zip(idx_arrays, targets):
            sl = lo[idx]
            sh = hi[idx]
            lo_sum = int(sl.sum())
            hi_sum = int(sh.sum())
            if t < lo_sum or t > hi_sum:
                return False
            slack_up = t - lo_sum
            slack_down = hi_sum - t
            new_hi = np.minimum(sh, sl + slack_up)
            new_lo = np.maximum(sl, sh - slack_down)
            if (new_lo > new_hi).any():
                return False
            if not np.array_equal(new_hi, sh):
                hi[idx] = new_hi
                changed = True
            if not np.array_equal(new_lo, sl):
                lo[idx] = new_lo
                changed = True
    return True


def solve(
    p: FeasibilityProblem,
    seed: int = 0,
    hint: Mapping[int, int] | np.ndarray | None = None,
    limits: SolveLimits | None = None,
    constraint_order: Sequence[int] | None = None,
) -> SolveResult:
    """Find a satisfying assignment, prove infeasibility, or give up at a limit."""
    limits = limits or SolveLimits()
    rng = derive_rng("solve", seed)

    order = list(range(len(p.constraints)))
    if constraint_order is not None:
        if sorted(constraint_order) != order:
            raise ParameterError("constraint_order must be a permutation")
        order = list(constraint_order)
    idx_arrays = []
    targets = []
    for i in order:
        c = p.constraints[i]
        idx_arrays.append(np.fromiter(c.variables, dtype=np.int64, count=len(c.variables)))
        targets.append(c.target)

    hint_arr = np.full(p.n_variables, -1, dtype=np.int64)
    if hint is not None:
        if isinstance(hint, Mapping):
            for k, v in hint.items():
                hint_arr[int(k)] = int(v)
        else:
            h = np.asarray(hint, dtype=np.int64)
            if h.shape != (p.n_variables,):
                raise ParameterError("hint array must have one value per variable")
            hint_arr = h.copy()

    lo = p.lower.astype(np.int64)
    hi = p.upper.astype(np.int64)
    if (lo > hi).any():
        return SolveResult(SolveStatus.INFEASIBLE, None, 0)

    nodes = 0
    deadline = time.perf_counter() + limits.max_seconds

    def select_var(lo, hi) -> int | None:
        unfixed = np.flatnonzero(hi > lo)
        if unfixed.size == 0:
            return None
        widths = hi[unfixed] - lo[unfixed]
        cands = unfixed[widths == widths.min()]
        return int(cands[rng.integers(cands.size)])

    def value_order(var, lo, hi) -> list[int]:
        vals = np.arange(lo[var], hi[var] + 1)
        rng.shuffle(vals)
        h = hint_arr[var]
        if lo[var] <= h <= hi[var]:
            vals = np.concatenate(([h], vals[vals != h]))
        return [int(v) for v in vals]

    if not _propagate(lo, hi, idx_arrays, targets):
        return SolveResult(SolveStatus.INFEASIBLE, None, 0)
    var = select_var(lo, hi)
    if var is None:
        return SolveResult(SolveStatus.SATISFIABLE, Assignment(values=lo), 0)

    stack: list[tuple[np.ndarray, np.ndarray, int, list[int]]] = [
        (lo, hi, var, value_order(var, lo, hi))
    ]
    try:
        while stack:
            lo, hi, var, values = stack[-1]
            if not values:
                stack.pop()
                continue
            v = values.pop(0)
            nodes += 1
            if nodes > limits.max_nodes:
                raise _Budget()
            if nodes % 128 == 0 and time.perf_counter() > deadline:
                raise _Budget()
            lo2 = lo.copy()
            hi2 = hi.copy()
            lo2[var] = hi2[var] = v
            if not _propagate(lo2, hi2, idx_arrays, targets):
                continue
            nxt = select_var(lo2, hi2)
            if nxt is None:
                return SolveResult(SolveStatus.SATISFIABLE, Assignment(values=lo2), nodes)
            stack.append((lo2, hi2, nxt, value_order(nxt, lo2, hi2)))
    except _Budget:
        return SolveResult(SolveStatus.UNKNOWN, None, nodes)
    return SolveResult(SolveStatus.INFEASIBLE, None, nodes)


def enumerate_solutions(
    p: FeasibilityProblem,
    k: int,
    seed: int,
    hint: Mapping[int, int] | np.ndarray | None = None,
    limits: SolveLimits | None = None,
) -> list[Assignment]:
    """K independent solves under derived seeds and permuted constraint order.

    Repeats are allowed; infeasible or unknown solves contribute nothing, so
    fewer than k assignments may come back.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    out = []
    n_constraints = len(p.constraints)
    for i in range(k):
        rng = derive_rng("enumerate", seed, i)
        perm = [int(x) for x in rng.permutation(n_constraints)]
        res = solve(
            p,
            seed=int(rng.integers(2**63)),
            hint=hint,
            limits=limits,
            constraint_order=perm,
        )
        if res.status is SolveStatus.SATISFIABLE:
            out.append(res.assignment)
    return out


def assignment_to_dataset(schema: AttributeSchema, assignment: Assignment) -> Dataset:
    """Expand multiplicities into a concrete dataset, rows ordered by cell index."""
    mult = assignment.values
    if mult.shape != (schema.n_cells,):
        raise ParameterError("assignment length does not match the schema's domain product")
    cells = np.repeat(np.arange(schema.n_cells, dtype=np.int64), mult)
    rows = np.empty((cells.size, schema.n_attributes), dtype=np.int64)
    rem = cells.copy()
    for i in range(schema.n_attributes - 1, -1, -1):
        rows[:, i] = rem % schema.sizes[i]
        rem //= schema.sizes[i]
    return Dataset(schema=schema, values=rows)


def multiplicities_to_hint(mult: np.ndarray, p: FeasibilityProblem) -> np.ndarray:
    """Clip a multiplicity vector into the problem's domains for use as a hint."""
    return np.clip(np.asarray(mult, dtype=np.int64), p.lower, p.upper)
