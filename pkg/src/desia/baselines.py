"""Reconstruction-based baselines and the likelihood attack.

Two reconstructors produce K tentative datasets whose query answers match
the release: a constraint-solver route (exact feasibility, seeded search
order) and a relaxed-projection route (per-row categorical relaxation
trained by gradient descent on the squared answer error, then hardened by
argmax). Vote adapters turn tentative datasets into attribute or membership
predictions via the smallest non-empty Hamming neighborhood of the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeds import derive_rng, derive_seed
from .data import (
    AttributeSchema,
    Dataset,
    PartialRecord,
    Record,
    TargetUser,
    load_dataset_csv,
    write_dataset_csv,
)
from .errors import ParameterError
from .queries import AggregateQuery, QueryEvaluator, QueryRelease
from .shadow import ShadowBatch
from .solver import (
    SolveLimits,
    assignment_to_dataset,
    build_problem,
    enumerate_solutions,
    multiplicities_to_hint,
    tighten_domains,
)

# Logit magnitude that makes softmax reproduce a one-hot row exactly in
# float64 (the off terms vanish under addition to 1.0).
ONE_HOT_LOGIT = 500.0


@dataclass(frozen=True)
class RapConfig:
    iterations: int = 1000
    step_size: float = 0.1
    min_step: float = 1e-8
    harden: str = "argmax"  # "argmax" | "sample"


@dataclass(frozen=True, eq=False)
class SoftDataset:
    """Relaxed dataset: per row and attribute, a probability vector over codes."""

    schema: AttributeSchema
    probs: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.probs) != self.schema.n_attributes:
            raise ParameterError("one probability block per attribute required")
        s = self.probs[0].shape[0]
        for p, k in zip(self.probs, self.schema.sizes):
            if p.shape != (s, k):
                raise ParameterError("probability block shape mismatch")
            if (p < 0).any() or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
                raise ParameterError("rows must be non-negative and sum to 1")

    @property
    def n_rows(self) -> int:
        return int(self.probs[0].shape[0])


@dataclass(frozen=True)
class ReconstructionSet:
    """K tentative reconstructed datasets plus provenance for diagnostics."""

    datasets: tuple[Dataset, ...]
    method: str
    seeds: tuple[int, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.datasets)


def soft_from_logits(schema: AttributeSchema, logits: Sequence[np.ndarray]) -> SoftDataset:
    return SoftDataset(schema=schema, probs=tuple(_softmax_rows(l) for l in logits))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rap_relaxed_eval(soft: SoftDataset, q: AggregateQuery) -> float:
    """Expected count of the query under independent per-attribute row distributions."""
    q.validate(soft.schema)
    total = np.ones(soft.n_rows)
    for i, subset in enumerate(q.subsets):
        total = total * soft.probs[i][:, list(subset)].sum(axis=1)
    return float(total.sum())


class _RapObjective:
    """Squared answer error and its gradient w.r.t. per-attribute logits."""

    def __init__(self, schema: AttributeSchema, rel: QueryRelease):
        ev = QueryEvaluator(schema, rel.queries)
        self.masks = [t.astype(float) for t in ev.attr_masks]  # (m, k_i)
        self.targets = rel.answers.astype(float)
        self.schema = schema

    def loss_and_grad(self, logits: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
        probs = [_softmax_rows(l) for l in logits]
        subset_sums = [p @ m.T for p, m in zip(probs, self.masks)]  # (s, m) each
        n = len(probs)
        prefix = [None] * (n + 1)
        prefix[0] = 1.0
        for i in range(n):
            prefix[i + 1] = prefix[i] * subset_sums[i]
        suffix = [None] * (n + 1)
        suffix[n] = 1.0
        for i in range(n - 1, -1, -1):
            suffix[i] = subset_sums[i] * suffix[i + 1]
        full = prefix[n]
        residual = full.sum(axis=0) - self.targets
        loss = float(residual @ residual)
        d_ans = 2.0 * residual
        grads = []
        for i in range(n):
            others = prefix[i] * suffix[i + 1]  # (s, m): product of all other attrs
            d_subset = others * d_ans[None, :]
            d_p = d_subset @ self.masks[i]
            p = probs[i]
            d_logit = p * (d_p - (d_p * p).sum(axis=1, keepdims=True))
            grads.append(d_logit)
        return loss, grads

    def loss(self, logits: list[np.ndarray]) -> float:
        return self.loss_and_grad(logits)[0]


def rap_loss_and_grad(
    schema: AttributeSchema, rel: QueryRelease, logits: Sequence[np.ndarray]
) -> tuple[float, list[np.ndarray]]:
    """Standalone hook for gradient checking."""
    return _RapObjective(schema, rel).loss_and_grad(list(logits))


def _one_hot_logits(schema: AttributeSchema, rows: np.ndarray) -> list[np.ndarray]:
    out = []
    for i, k in enumerate(schema.sizes):
        l = np.zeros((rows.shape[0], k))
        l[np.arange(rows.shape[0]), rows[:, i]] = ONE_HOT_LOGIT
        out.append(l)
    return out


def _harden(schema: AttributeSchema, probs: Sequence[np.ndarray], mode: str,
            rng: np.random.Generator) -> Dataset:
    s = probs[0].shape[0]
    rows = np.empty((s, schema.n_attributes), dtype=np.int64)
    for i, p in enumerate(probs):
        if mode == "argmax":
            rows[:, i] = np.argmax(p, axis=1)
        elif mode == "sample":
            cum = np.cumsum(p, axis=1)
            u = rng.random((s, 1)) * cum[:, -1:]
            rows[:, i] = (u > cum).sum(axis=1)
        else:
            raise ParameterError(f"unknown harden mode {mode!r}")
    return Dataset(schema=schema, values=rows)


def rap_reconstruct(
    schema: AttributeSchema,
    rel: QueryRelease,
    k: int,
    init: Dataset | None = None,
    seed: int = 0,
    config: RapConfig = RapConfig(),
) -> ReconstructionSet:
    """K relaxed-projection reconstructions of size s, hardened per row.

    Initialization is near-uniform noise, or exact one-hots of a seeded
    sample from ``init``. Steps that would increase the loss are rejected
    and the step size halves, so the accepted-loss sequence never increases.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    obj = _RapObjective(schema, rel)
    s = rel.dataset_size
    datasets = []
    seeds = []
    runs = []
    for j in range(k):
        run_seed = derive_seed("rap", seed, j)
        rng = derive_rng("rap", seed, j)
        if init is None:
            logits = [rng.normal(0.0, 0.01, (s, ki)) for ki in schema.sizes]
        else:
            replace_draw = init.size < s
            rows = init.values[rng.choice(init.size, size=s, replace=replace_draw)]
            logits = _one_hot_logits(schema, rows)
        loss, grads = obj.loss_and_grad(logits)
        initial_loss = loss
        step = config.step_size
        iters_run = 0
        aborted = False
        for _ in range(config.iterations):
            if loss == 0.0 or step < config.min_step:
                break
            cand = [l - step * g for l, g in zip(logits, grads)]
            cand_loss, cand_grads = obj.loss_and_grad(cand)
            iters_run += 1
            if not np.isfinite(cand_loss):
                aborted = True
                break
            if cand_loss <= loss:
                logits, loss, grads = cand, cand_loss, cand_grads
            else:
                step *= 0.5
        if aborted:
            runs.append({"seed": run_seed, "error": "non-finite loss"})
            continue
        probs = [_softmax_rows(l) for l in logits]
        datasets.append(_harden(schema, probs, config.harden, rng))
        seeds.append(run_seed)
        runs.append(
            {
                "seed": run_seed,
                "initial_loss": initial_loss,
                "final_loss": loss,
                "iterations": iters_run,
            }
        )
    method = "rap-style-init" if init is not None else "rap-style-rand"
    return ReconstructionSet(
        datasets=tuple(datasets),
        method=method,
        seeds=tuple(seeds),
        diagnostics={"requested": k, "runs": runs},
    )


def cip_reconstruct(
    schema: AttributeSchema,
    rel: QueryRelease,
    k: int,
    init: Dataset | None = None,
    seed: int = 0,
    limits: SolveLimits | None = None,
) -> ReconstructionSet:
    """K solver reconstructions under reseeded search and constraint order.

    With ``init``, the solver's value order is hinted by the auxiliary
    multiplicities scaled by s/|init| (rounded half up, clipped to domains).
    Infeasible or budget-limited solves yield fewer than K datasets.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    p = tighten_domains(build_problem(schema, rel))
    hint = None
    if init is not None:
        if init.size == 0:
            raise ParameterError("init dataset is empty")
        scaled = np.floor(
            init.multiplicities() * (rel.dataset_size / init.size) + 0.5
        ).astype(np.int64)
        hint = multiplicities_to_hint(scaled, p)
    assignments = enumerate_solutions(p, k, seed=seed, hint=hint, limits=limits)
    datasets = tuple(assignment_to_dataset(schema, a) for a in assignments)
    method = "cip-init" if init is not None else "cip-rand"
    return ReconstructionSet(
        datasets=datasets,
        method=method,
        seeds=(seed,),
        diagnostics={"requested": k, "obtained": len(datasets)},
    )


def l_neighborhood(
    target_partial: PartialRecord, recon: ReconstructionSet, l: int
) -> np.ndarray:
    """Multiset (as stacked rows) of reconstruction records whose non-sensitive
    values differ from the target's in exactly ``l`` positions."""
    n_partial = len(target_partial)
    if not 0 <= l <= n_partial:
        raise ParameterError(f"l={l} out of range")
    if not recon.datasets:
        return np.empty((0, n_partial + 1), dtype=np.int64)
    rows = np.concatenate([d.values for d in recon.datasets], axis=0)
    partial = np.asarray(target_partial, dtype=np.int64)
    dist = (rows[:, :-1] != partial).sum(axis=1)
    return rows[dist == l]


def aia_vote(
    target: TargetUser, recon: ReconstructionSet, seed: int = 0
) -> tuple[int, float]:
    """Modal sensitive value in the smallest non-empty neighborhood.

    Ties are broken uniformly at random under the seed. The score is the
    positive class's vote share in the neighborhood used; with no
    reconstructions at all this degrades to a random guess at score 0.5.
    """
    n_partial = len(target.partial)
    rng = derive_rng("aia-vote", seed, target.id)
    if not recon.datasets or all(d.size == 0 for d in recon.datasets):
        k_n = 2 if not recon.datasets else recon.datasets[0].schema.sensitive_size
        return int(rng.integers(0, k_n)), 0.5
    schema = recon.datasets[0].schema
    neigh = np.empty((0, n_partial + 1), dtype=np.int64)
    for l in range(n_partial + 1):
        neigh = l_neighborhood(target.partial, recon, l)
        if neigh.shape[0]:
            break
    counts = np.bincount(neigh[:, -1], minlength=schema.sensitive_size)
    top = np.flatnonzero(counts == counts.max())
    value = int(top[rng.integers(top.size)]) if top.size > 1 else int(top[0])
    total = counts.sum()
    if schema.sensitive_size == 2:
        score = float(counts[1] / total)
    else:
        score = float(counts[value] / total)
    return value, score


def mia_vote(target_record: Record, recon: ReconstructionSet) -> tuple[int, float]:
    """Membership bit by appearance count: 1 iff the exact record appears in
    more than half of the tentative datasets; score is the appearance fraction."""
    if not recon.datasets:
        raise ParameterError("reconstruction set is empty")
    schema = recon.datasets[0].schema
    cell = schema.cell_index(schema.validate_record(target_record))
    count = sum(1 for d in recon.datasets if (d.cell_indices() == cell).any())
    k = len(recon.datasets)
    return int(count > k / 2), float(count / k)


def likelihood_attack(
    schema: AttributeSchema,
    rel: QueryRelease,
    target: TargetUser,
    batch: ShadowBatch,
    seed: int = 0,
) -> tuple[int, float]:
    """Per-query Gaussian votes from shadow answer statistics, majority-combined.

    Only queries that cover the target's non-sensitive values and condition
    on the sensitive attribute vote. For each, the group (by shadow label)
    whose Gaussian fit gives the observed answer the highest density wins;
    exact density ties abstain. An empty vote set degrades to a random
    guess at score 0.5.
    """
    k_n = schema.sensitive_size
    labels = np.unique(batch.labels)
    group_rows = {int(b): np.flatnonzero(batch.labels == b) for b in labels}
    if len(group_rows) < k_n:
        raise ParameterError("every sensitive value needs at least one shadow dataset")

    eligible = []
    for j, q in enumerate(rel.queries):
        if not q.conditions_on(schema.sensitive_index, schema):
            continue
        if all(target.partial[i] in q.subsets[i] for i in range(schema.n_attributes - 1)):
            eligible.append(j)

    votes = np.zeros(k_n, dtype=np.int64)
    for j in eligible:
        x = float(rel.answers[j])
        col = batch.features[:, j].astype(float)
        logdens = np.empty(k_n)
        for b in range(k_n):
            g = col[group_rows[b]]
            mu, sigma = float(g.mean()), float(g.std())
            if sigma == 0.0:
                logdens[b] = np.inf if x == mu else -np.inf
            else:
                logdens[b] = -np.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2
        best = np.flatnonzero(logdens == logdens.max())
        if best.size == 1:
            votes[best[0]] += 1

    rng = derive_rng("likelihood", seed, target.id)
    if votes.sum() == 0:
        return int(rng.integers(0, k_n)), 0.5
    top = np.flatnonzero(votes == votes.max())
    value = int(top[rng.integers(top.size)]) if top.size > 1 else int(top[0])
    total = votes.sum()
    score = float(votes[1] / total) if k_n == 2 else float(votes[value] / total)
    return value, score


# -- persistence ----------------------------------------------------------


def save_reconstruction_set(recon: ReconstructionSet, out_dir: str | Path) -> None:
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, d in enumerate(recon.datasets):
        name = f"recon_{i:04d}.csv"
        write_dataset_csv(d, out / name)
        files.append(name)
    manifest = {
        "method": recon.method,
        "seeds": list(recon.seeds),
        "files": files,
        "diagnostics": recon.diagnostics,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_reconstruction_set(in_dir: str | Path, schema: AttributeSchema) -> ReconstructionSet:
    import json

    out = Path(in_dir)
    with open(out / "manifest.json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    datasets = tuple(load_dataset_csv(out / name, schema) for name in manifest["files"])
    return ReconstructionSet(
        datasets=datasets,
        method=manifest["method"],
        seeds=tuple(manifest["seeds"]),
        diagnostics=manifest.get("diagnostics", {}),
    )
