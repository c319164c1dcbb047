"""Privacy-game orchestration for attribute and membership inference.

The defender randomizes the sensitive attribute (attribute game) or the
target's membership (membership game), publishes a fixed query release plus
the dataset size, and the attacker sees only that release, the auxiliary
dataset, the target's known values, and the attribute domains. Sweeps vary
the released-query ratio m/s and the per-query noise budget.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._seeds import derive_rng, derive_seed
from .attack import (
    AttackResult,
    DesiaAttackConfig,
    DesiaOptions,
    desia_attack,
    desia_attack_mia,
)
from .baselines import (
    RapConfig,
    aia_vote,
    cip_reconstruct,
    likelihood_attack,
    mia_vote,
    rap_reconstruct,
)
from .data import (
    Dataset,
    Record,
    TargetUser,
    dataset_hash,
    find_unique_targets,
    randomize_sensitive,
)
from .errors import ParameterError
from .logistic import DEFAULT_LAMBDA_GRID
from .metrics import summarize
from .queries import (
    AggregateQuery,
    QueryRelease,
    add_laplace_noise,
    release,
    sample_queries,
)
from .shadow import sample_shadow_datasets_aia
from .solver import SolveLimits

METHODS = (
    "desia",
    "cip-rand",
    "cip-init",
    "rap-rand",
    "rap-init",
    "likelihood",
    "random",
)


@dataclass(frozen=True)
class GameConfig:
    """One attack selection plus everything needed to reproduce a run."""

    method: str = "desia"
    m: int | None = None
    ratio: float | None = None
    epsilon: float | None = None  # None or inf means a noiseless release
    game_seed: int = 0
    attack_seed: int = 0
    k_reconstructions: int = 100
    n_shadow: int = 3000
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    target_cap: int = 200
    workers: int = 1
    query_round: int = 0
    noise_round: int = 0
    desia: DesiaOptions = DesiaOptions()
    solver_limits: SolveLimits = SolveLimits()
    rap: RapConfig = RapConfig()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; pick from {METHODS}")
        if (self.m is None) == (self.ratio is None):
            raise ParameterError("set exactly one of m and ratio")
        if self.epsilon is not None and not math.isinf(self.epsilon) and self.epsilon <= 0:
            raise ParameterError("epsilon must be > 0")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")

    def resolve_m(self, s: int, available: int) -> int:
        m = self.m if self.m is not None else int(round(self.ratio * s))
        if m < 0 or m > available:
            raise ParameterError(f"m={m} out of range for {available} available queries")
        return m

    def noiseless(self) -> bool:
        return self.epsilon is None or math.isinf(self.epsilon)


@dataclass(frozen=True)
class GameRun:
    results: tuple[AttackResult, ...]
    metadata: dict


def _map_targets(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _desia_config(cfg: GameConfig) -> DesiaAttackConfig:
    return DesiaAttackConfig(
        options=cfg.desia,
        n_shadow=cfg.n_shadow,
        lambda_grid=cfg.lambda_grid,
        limits=cfg.solver_limits,
        rap_iterations=cfg.rap.iterations,
        rap_step_size=cfg.rap.step_size,
    )


def attack_release_aia(
    rel: QueryRelease,
    targets: Sequence[TargetUser],
    aux: Dataset,
    cfg: GameConfig,
) -> list[AttackResult]:
    """Run the configured attack against every target of one release.

    This is the attacker's entire interface: the release (queries, answers,
    dataset size), the auxiliary dataset, the target's non-sensitive values,
    and the schema's domains. The protected dataset is not reachable from
    here.
    """
    schema = aux.schema
    method = cfg.method

    if method == "desia":
        dcfg = _desia_config(cfg)

        def one(t: TargetUser) -> AttackResult:
            return desia_attack(
                rel, t, aux, dcfg, seed=derive_seed("attack", cfg.attack_seed, t.id)
            )

        return _map_targets(one, list(targets), cfg.workers)

    if method in ("cip-rand", "cip-init", "rap-rand", "rap-init"):
        init = aux if method.endswith("init") else None
        if method.startswith("cip"):
            recon = cip_reconstruct(
                schema, rel, cfg.k_reconstructions, init=init,
                seed=derive_seed("recon", cfg.attack_seed), limits=cfg.solver_limits,
            )
        else:
            recon = rap_reconstruct(
                schema, rel, cfg.k_reconstructions, init=init,
                seed=derive_seed("recon", cfg.attack_seed), config=cfg.rap,
            )
        out = []
        for t in targets:
            value, score = aia_vote(t, recon, seed=cfg.attack_seed)
            out.append(
                AttackResult(
                    target_id=t.id, method=recon.method, prediction=value,
                    score=score, deterministic=False,
                )
            )
        return out

    if method == "likelihood":

        def one(t: TargetUser) -> AttackResult:
            batch = sample_shadow_datasets_aia(
                aux, t, rel.queries, rel.dataset_size, cfg.n_shadow,
                derive_seed("likelihood-shadow", cfg.attack_seed),
            )
            value, score = likelihood_attack(schema, rel, t, batch, seed=cfg.attack_seed)
            return AttackResult(
                target_id=t.id, method="likelihood", prediction=value,
                score=score, deterministic=False,
            )

        return _map_targets(one, list(targets), cfg.workers)

    if method == "random":
        out = []
        for t in targets:
            rng = derive_rng("attack-random", cfg.attack_seed, t.id)
            out.append(
                AttackResult(
                    target_id=t.id, method="random",
                    prediction=int(rng.integers(0, schema.sensitive_size)),
                    score=0.5, deterministic=False,
                )
            )
        return out

    raise ParameterError(f"method {method!r} not available for the attribute game")


def run_aia_game(
    d_private: Dataset,
    d_aux: Dataset,
    queries: Sequence[AggregateQuery],
    cfg: GameConfig,
) -> GameRun:
    """Full attribute-inference game on one protected dataset.

    The sensitive attribute is randomized once, the release is published
    once, and every unique target (capped, seeded subsample) is attacked
    against that shared release. Result truths are the randomized values.
    """
    if d_private.schema != d_aux.schema:
        raise ParameterError("private and auxiliary datasets must share a schema")
    if d_private.size < 1:
        raise ParameterError("protected dataset must be non-empty")
    t0 = time.perf_counter()
    schema = d_private.schema
    d_rand = randomize_sensitive(d_private, derive_seed("game-rand", cfg.game_seed))

    targets = find_unique_targets(d_rand)
    if not targets:
        warnings.warn("no unique targets in the protected dataset", RuntimeWarning,
                      stacklevel=2)
    if len(targets) > cfg.target_cap:
        rng = derive_rng("game-targets", cfg.game_seed)
        keep = sorted(rng.choice(len(targets), size=cfg.target_cap, replace=False))
        targets = [targets[i] for i in keep]

    truth_by_partial = {}
    proj = d_rand.projection()
    for t in targets:
        rows = np.flatnonzero((proj == np.asarray(t.partial)).all(axis=1))
        truth_by_partial[t.partial] = int(d_rand.values[rows[0], -1])

    m = cfg.resolve_m(d_private.size, len(queries))
    qsel = sample_queries(queries, m, derive_seed("game-queries", cfg.game_seed, cfg.query_round))
    rel = release(qsel, d_rand)
    if not cfg.noiseless():
        rel = add_laplace_noise(
            rel, cfg.epsilon, derive_seed("game-noise", cfg.game_seed, cfg.noise_round)
        )

    results = attack_release_aia(rel, targets, d_aux, cfg)
    results = tuple(
        replace(r, truth=truth_by_partial[t.partial]) for r, t in zip(results, targets)
    )
    metadata = {
        "game": "aia",
        "config": asdict(cfg),
        "m": m,
        "n_targets": len(targets),
        "private_hash": dataset_hash(d_private),
        "aux_hash": dataset_hash(d_aux),
        "wall_time_s": time.perf_counter() - t0,
    }
    return GameRun(results=results, metadata=metadata)


def run_mia_game(
    d_private: Dataset,
    d_aux: Dataset,
    queries: Sequence[AggregateQuery],
    cfg: GameConfig,
    targets: Sequence[Record],
) -> GameRun:
    """Membership-inference game: per target, a secret bit decides whether the
    target or a uniformly random other record is removed before release."""
    if d_private.schema != d_aux.schema:
        raise ParameterError("private and auxiliary datasets must share a schema")
    if d_private.size < 2:
        raise ParameterError("membership game needs at least 2 records")
    if cfg.method == "likelihood":
        raise ParameterError("the likelihood attack is attribute-inference only")
    t0 = time.perf_counter()
    schema = d_private.schema
    cells = d_private.cell_indices()
    m = cfg.resolve_m(d_private.size, len(queries))
    qsel = sample_queries(queries, m, derive_seed("game-queries", cfg.game_seed, cfg.query_round))

    results = []
    for i, record in enumerate(targets):
        record = schema.validate_record(record)
        target_cell = schema.cell_index(record)
        matches = np.flatnonzero(cells == target_cell)
        if matches.size == 0:
            raise ParameterError(f"target {i} is not a member of the protected dataset")
        target_row = int(matches[0])
        rng = derive_rng("mia-bit", cfg.game_seed, i)
        b = int(rng.integers(0, 2))
        if b == 0:
            drop = target_row
        else:
            others = np.concatenate(
                [np.arange(target_row), np.arange(target_row + 1, d_private.size)]
            )
            drop = int(others[rng.integers(others.size)])
        keep = np.ones(d_private.size, dtype=bool)
        keep[drop] = False
        d_i = Dataset(schema=schema, values=d_private.values[keep])
        rel = release(qsel, d_i)
        if not cfg.noiseless():
            rel = add_laplace_noise(
                rel, cfg.epsilon,
                derive_seed("game-noise", cfg.game_seed, cfg.noise_round, i),
            )
        target_id = f"{i}:" + "-".join(str(v) for v in record)
        res = _attack_release_mia(rel, record, target_id, d_aux, cfg)
        results.append(replace(res, truth=b))

    metadata = {
        "game": "mia",
        "config": asdict(cfg),
        "m": m,
        "n_targets": len(results),
        "private_hash": dataset_hash(d_private),
        "aux_hash": dataset_hash(d_aux),
        "wall_time_s": time.perf_counter() - t0,
    }
    return GameRun(results=tuple(results), metadata=metadata)


def _attack_release_mia(
    rel: QueryRelease,
    record: Record,
    target_id: str,
    aux: Dataset,
    cfg: GameConfig,
) -> AttackResult:
    schema = aux.schema
    method = cfg.method
    if method == "desia":
        return desia_attack_mia(
            rel, record, target_id, aux, _desia_config(cfg),
            seed=derive_seed("attack", cfg.attack_seed, target_id),
        )
    if method in ("cip-rand", "cip-init", "rap-rand", "rap-init"):
        init = aux if method.endswith("init") else None
        if method.startswith("cip"):
            recon = cip_reconstruct(
                schema, rel, cfg.k_reconstructions, init=init,
                seed=derive_seed("recon", cfg.attack_seed, target_id),
                limits=cfg.solver_limits,
            )
        else:
            recon = rap_reconstruct(
                schema, rel, cfg.k_reconstructions, init=init,
                seed=derive_seed("recon", cfg.attack_seed, target_id), config=cfg.rap,
            )
        if recon.datasets:
            bit, score = mia_vote(record, recon)
        else:
            rng = derive_rng("mia-vote-empty", cfg.attack_seed, target_id)
            bit, score = int(rng.integers(0, 2)), 0.5
        return AttackResult(
            target_id=target_id, method=recon.method, prediction=bit,
            score=score, deterministic=False,
        )
    if method == "random":
        rng = derive_rng("attack-random", cfg.attack_seed, target_id)
        return AttackResult(
            target_id=target_id, method="random",
            prediction=int(rng.integers(0, 2)), score=0.5, deterministic=False,
        )
    raise ParameterError(f"method {method!r} not available for the membership game")


def sweep_query_ratio(
    d_private: Dataset,
    d_aux: Dataset,
    queries: Sequence[AggregateQuery],
    ratios: Sequence[float],
    cfg: GameConfig,
) -> list[GameRun]:
    """One game per ratio on the same protected dataset; queries re-sampled
    per ratio under derived seeds."""
    runs = []
    for i, ratio in enumerate(ratios):
        cfg_i = replace(cfg, m=None, ratio=float(ratio), query_round=i)
        run = run_aia_game(d_private, d_aux, queries, cfg_i)
        run.metadata["sweep"] = {"axis": "ratio", "value": float(ratio)}
        runs.append(run)
    return runs


def sweep_noise(
    d_private: Dataset,
    d_aux: Dataset,
    queries: Sequence[AggregateQuery],
    epsilons: Sequence[float | None],
    cfg: GameConfig,
    repeats: int = 3,
) -> list[GameRun]:
    """Per epsilon, ``repeats`` independent noisy releases (one noiseless run
    for the infinity sentinel); callers average metrics across repeats."""
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    runs = []
    for eps in epsilons:
        noiseless = eps is None or math.isinf(eps)
        n_rep = 1 if noiseless else repeats
        for rep in range(n_rep):
            cfg_i = replace(
                cfg, epsilon=None if noiseless else float(eps), noise_round=rep
            )
            run = run_aia_game(d_private, d_aux, queries, cfg_i)
            run.metadata["sweep"] = {
                "axis": "epsilon",
                "value": None if noiseless else float(eps),
                "repeat": rep,
            }
            runs.append(run)
    return runs


# -- persistence ----------------------------------------------------------


def save_game_run(run: GameRun, out_dir: str | Path) -> None:
    """results.jsonl (stable bytes under fixed seeds) + metadata.json sidecar."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in run.results:
            f.write(
                json.dumps(
                    {
                        "target": r.target_id,
                        "method": r.method,
                        "prediction": r.prediction,
                        "score": r.score,
                        "deterministic": r.deterministic,
                        "truth": r.truth,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(out / "metadata.json", "w", encoding="utf-8") as f:
        json.dump(run.metadata, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def load_game_run(in_dir: str | Path) -> GameRun:
    import json

    out = Path(in_dir)
    results = []
    with open(out / "results.jsonl", "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            results.append(
                AttackResult(
                    target_id=d["target"], method=d["method"],
                    prediction=int(d["prediction"]), score=float(d["score"]),
                    deterministic=bool(d["deterministic"]),
                    truth=None if d["truth"] is None else int(d["truth"]),
                )
            )
    meta_path = out / "metadata.json"
    metadata = {}
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as f:
            metadata = json.load(f)
    return GameRun(results=tuple(results), metadata=metadata)


def mean_auc(runs: Sequence[GameRun]) -> float:
    vals = []
    for run in runs:
        rep = summarize(run)
        if rep.get("auc") is not None:
            vals.append(rep["auc"])
    if not vals:
        raise ParameterError("no binary-truth runs to average")
    return float(np.mean(vals))
