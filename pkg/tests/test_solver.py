import numpy as np
import pytest

from desia import (
    AttributeSchema,
    FeasibilityProblem,
    ParameterError,
    SolveLimits,
    SolveStatus,
    SumConstraint,
    add_sum_constraint,
    assignment_to_dataset,
    build_problem,
    dataset_from_records,
    enumerate_solutions,
    fix_variable,
    generate_synthetic,
    make_marginal_queries,
    release,
    solve,
    tighten_domains,
    total_count_query,
)
from desia.queries import AggregateQuery, QueryRelease
from desia.solver import bound_variable

from helpers import brute_force_satisfiable, random_box_query, random_dataset, random_schema, solve_checked


def small_problem(n_vars, ub, constraints):
    return FeasibilityProblem(
        schema=None,
        lower=np.zeros(n_vars, dtype=np.int64),
        upper=np.full(n_vars, ub, dtype=np.int64),
        constraints=tuple(SumConstraint(variables=v, target=t) for v, t in constraints),
    )


class TestBuildProblem:
    def test_structural_counts(self, tiny_schema):
        d = generate_synthetic(tiny_schema, 3, seed=0)
        rel = release([total_count_query(tiny_schema)], d)
        p = build_problem(tiny_schema, rel)
        assert p.n_variables == 4
        assert len(p.constraints) == 2
        assert p.constraints[0].variables == p.constraints[1].variables

    def test_m_zero_release(self, tiny_schema):
        d = generate_synthetic(tiny_schema, 3, seed=0)
        p = build_problem(tiny_schema, release([], d))
        assert len(p.constraints) == 1
        assert p.constraints[0].target == 3

    def test_negative_noisy_answer_clamped_with_warning(self, tiny_schema):
        rel = QueryRelease(
            queries=(AggregateQuery(subsets=((0,), (0, 1))),),
            answers=np.asarray([-2]),
            dataset_size=3,
            noise_meta={"epsilon": 0.1, "seed": 0},
        )
        with pytest.warns(RuntimeWarning, match="clamped"):
            p = build_problem(tiny_schema, rel)
        assert p.constraints[0].target == 0


class TestTighten:
    def test_min_of_covering_answers(self):
        schema = AttributeSchema(names=("a", "s"), sizes=(2, 2))
        d = dataset_from_records(schema, [(0, 0)] * 3 + [(0, 1)] * 4 + [(1, 0)] * 3)
        queries = [
            AggregateQuery(subsets=((0,), (0, 1))),  # answers 7
            AggregateQuery(subsets=((0, 1), (0,))),  # answers 6
        ]
        p = tighten_domains(build_problem(schema, release(queries, d)))
        # cell (0,0) covered by both -> min(7,6)=6; (0,1) -> 7; (1,0) -> 6; (1,1) -> 10
        assert list(p.upper) == [6, 7, 6, 10]

    def test_uncovered_variable_keeps_s(self, tiny_schema):
        d = generate_synthetic(tiny_schema, 5, seed=1)
        q = AggregateQuery(subsets=((0,), (0, 1)))
        p = tighten_domains(build_problem(tiny_schema, release([q], d)))
        assert p.upper[tiny_schema.cell_index((1, 0))] == 5
        assert p.upper[tiny_schema.cell_index((1, 1))] == 5

    def test_zero_answer_fixes_to_zero(self, tiny_schema):
        d = dataset_from_records(tiny_schema, [(1, 0), (1, 1)])
        q = AggregateQuery(subsets=((0,), (0, 1)))
        p = tighten_domains(build_problem(tiny_schema, release([q], d)))
        assert p.upper[tiny_schema.cell_index((0, 0))] == 0
        assert p.lower[tiny_schema.cell_index((0, 0))] == 0

    def test_tightening_preserves_satisfiability(self, rng):
        for _ in range(60):
            schema = random_schema(rng)
            d = random_dataset(schema, int(rng.integers(1, 6)), rng)
            queries = [random_box_query(schema, rng) for _ in range(int(rng.integers(0, 5)))]
            rel = release(queries, d)
            p = build_problem(schema, rel)
            tp = tighten_domains(p)
            r1 = solve_checked(p, seed=1)
            r2 = solve_checked(tp, seed=1)
            assert r1.status == r2.status == SolveStatus.SATISFIABLE


class TestConstraintEdits:
    def test_add_sum_constraint_appends(self, tiny_schema):
        d = generate_synthetic(tiny_schema, 3, seed=0)
        p = build_problem(tiny_schema, release([], d))
        p2 = add_sum_constraint(p, [0, 1], 1)
        assert len(p2.constraints) == len(p.constraints) + 1
        assert len(p.constraints) == 1  # original untouched

    def test_fix_variable_respected(self):
        p = small_problem(2, 2, [([0, 1], 2)])
        p2 = fix_variable(p, 0, 0)
        res = solve_checked(p2, seed=0)
        assert res.status is SolveStatus.SATISFIABLE
        assert res.assignment.values[0] == 0

    def test_fix_above_ub_rejected(self):
        p = small_problem(2, 2, [])
        with pytest.raises(ParameterError):
            fix_variable(p, 0, 3)

    def test_bound_to_empty_domain_is_infeasible(self):
        p = small_problem(2, 2, [])
        p2 = bound_variable(p, 0, lo=3)
        assert solve(p2, seed=0).status is SolveStatus.INFEASIBLE


class TestSolve:
    def test_satisfiable_instance(self):
        p = small_problem(2, 2, [([0, 1], 2)])
        res = solve_checked(p, seed=0)
        assert res.status is SolveStatus.SATISFIABLE
        assert res.assignment.values.sum() == 2

    def test_contradiction(self):
        p = small_problem(1, 2, [([0], 1), ([0], 2)])
        assert solve(p, seed=0).status is SolveStatus.INFEASIBLE

    def test_empty_variable_set_constraint(self):
        assert solve(small_problem(2, 1, [([], 0)]), seed=0).status is SolveStatus.SATISFIABLE
        assert solve(small_problem(2, 1, [([], 1)]), seed=0).status is SolveStatus.INFEASIBLE

    def test_budget_exhaustion_is_unknown(self):
        # odd cycle: infeasible by parity, invisible to bounds propagation,
        # so deciding it requires branching nodes
        p = small_problem(3, 1, [([0, 1], 1), ([1, 2], 1), ([0, 2], 1)])
        assert solve(p, seed=0).status is SolveStatus.INFEASIBLE
        res = solve(p, seed=0, limits=SolveLimits(max_nodes=0, max_seconds=30))
        assert res.status is SolveStatus.UNKNOWN
        # even cycle: satisfiable, still needs branching
        p2 = small_problem(4, 1, [([0, 1], 1), ([1, 2], 1), ([2, 3], 1), ([3, 0], 1)])
        assert solve(p2, seed=0).status is SolveStatus.SATISFIABLE
        assert (
            solve(p2, seed=0, limits=SolveLimits(max_nodes=0, max_seconds=30)).status
            is SolveStatus.UNKNOWN
        )

    def test_determinism(self, rng):
        for trial in range(10):
            n = int(rng.integers(2, 8))
            ub = int(rng.integers(1, 4))
            n_constraints = int(rng.integers(1, 5))
            constraints = []
            for _ in range(n_constraints):
                size = int(rng.integers(1, n + 1))
                vs = sorted(rng.choice(n, size=size, replace=False).tolist())
                constraints.append((vs, int(rng.integers(0, ub * size + 1))))
            p = small_problem(n, ub, constraints)
            a = solve(p, seed=trial)
            b = solve(p, seed=trial)
            assert a.status == b.status
            if a.status is SolveStatus.SATISFIABLE:
                assert np.array_equal(a.assignment.values, b.assignment.values)

    def test_matches_brute_force_on_random_tiny_instances(self, rng):
        agree = 0
        for trial in range(200):
            n = int(rng.integers(2, 8))
            ub = int(rng.integers(1, 4))
            constraints = []
            for _ in range(int(rng.integers(1, 6))):
                size = int(rng.integers(1, n + 1))
                vs = sorted(rng.choice(n, size=size, replace=False).tolist())
                constraints.append((vs, int(rng.integers(0, ub * size + 1))))
            p = small_problem(n, ub, constraints)
            res = solve_checked(p, seed=trial)
            assert res.status is not SolveStatus.UNKNOWN
            expected = brute_force_satisfiable(p)
            assert (res.status is SolveStatus.SATISFIABLE) == expected
            agree += 1
        assert agree == 200

    def test_hint_first_value_order(self):
        p = small_problem(3, 3, [([0, 1, 2], 3)])
        hint = {0: 3, 1: 0, 2: 0}
        res = solve_checked(p, seed=9, hint=hint)
        assert list(res.assignment.values) == [3, 0, 0]


class TestEnumerate:
    def test_k1_matches_single_solve(self):
        p = small_problem(2, 2, [([0, 1], 2)])
        sols = enumerate_solutions(p, 1, seed=4)
        assert len(sols) == 1
        assert sols[0].satisfies(p)

    def test_infeasible_gives_empty(self):
        p = small_problem(1, 1, [([0], 1), ([0], 0)])
        assert enumerate_solutions(p, 5, seed=0) == []

    def test_underdetermined_instance_yields_distinct_solutions(self):
        # 6 vars, only a total-sum constraint: huge solution space
        p = small_problem(6, 3, [([0, 1, 2, 3, 4, 5], 3)])
        sols = enumerate_solutions(p, 100, seed=7)
        assert len(sols) == 100
        distinct = {tuple(s.values.tolist()) for s in sols}
        assert len(distinct) >= 2
        for s in sols:
            assert s.satisfies(p)


class TestAssignmentDataset:
    def test_all_zero_gives_empty(self, tiny_schema):
        from desia.solver import Assignment

        d = assignment_to_dataset(tiny_schema, Assignment(values=np.zeros(4, dtype=np.int64)))
        assert d.size == 0

    def test_multiplicity_three(self, tiny_schema):
        from desia.solver import Assignment

        vals = np.zeros(4, dtype=np.int64)
        vals[tiny_schema.cell_index((1, 0))] = 3
        d = assignment_to_dataset(tiny_schema, Assignment(values=vals))
        assert d.size == 3
        assert (d.values == np.asarray([1, 0])).all()

    def test_roundtrip(self, rng):
        from desia.solver import Assignment

        schema = random_schema(rng)
        d = random_dataset(schema, 9, rng)
        back = assignment_to_dataset(schema, Assignment(values=d.multiplicities()))
        assert back.same_multiset(d)
