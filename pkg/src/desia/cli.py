"""Batch command-line frontend.

Subcommands compose through files: gen-data writes datasets, make-queries a
query spec, release a release file, attack a results directory, sweep a
results tree, and report a metrics summary. Everything is driven by a TOML
config with a handful of flag overrides; outputs are deterministic under
fixed seeds and carry tool/config/seed metadata.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .attack import DesiaOptions
from .baselines import RapConfig
from .data import (
    generate_synthetic,
    load_dataset_csv,
    load_schema_json,
    split_private_aux,
    write_dataset_csv,
)
from .errors import DesiaError, ParameterError, ParseError, SchemaError
from .harness import (
    GameConfig,
    load_game_run,
    run_aia_game,
    run_mia_game,
    save_game_run,
    sweep_noise,
    sweep_query_ratio,
)
from .metrics import DEFAULT_KS, summarize
from .queries import (
    add_laplace_noise,
    load_query_spec,
    make_marginal_queries,
    release,
    sample_queries,
    save_query_spec,
    save_release_json,
)
from .solver import SolveLimits


class UsageError(DesiaError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    with open(p, "rb") as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{p}: {exc}") from exc


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()[:12]


def _meta(cfg: dict, seeds: dict) -> dict:
    return {"tool": f"desia {__version__}", "config_hash": _config_hash(cfg), "seeds": seeds}


def _write_sidecar(path: Path, meta: dict) -> None:
    with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(cfg: dict, section: str, key: str):
    try:
        return cfg[section][key]
    except KeyError:
        raise UsageError(f"config is missing [{section}] {key}")


def _out_dir(cfg: dict, args) -> Path:
    out = args.out or cfg.get("paths", {}).get("out", "out")
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _schema(cfg: dict):
    path = _require(cfg, "paths", "schema")
    if not Path(path).exists():
        raise UsageError(f"schema file not found: {path}")
    return load_schema_json(path)


def _game_config(cfg: dict, args) -> tuple[GameConfig, str]:
    g = dict(cfg.get("game", {}))
    desia_flags = g.pop("desia", {})
    solver = g.pop("solver", {})
    rap = g.pop("rap", {})
    kind = g.pop("kind", "aia")
    if kind not in ("aia", "mia"):
        raise UsageError(f"game.kind must be 'aia' or 'mia', got {kind!r}")
    kw = {
        "method": g.get("method", "desia"),
        "m": g.get("m"),
        "ratio": g.get("ratio"),
        "epsilon": g.get("epsilon"),
        "game_seed": int(g.get("game_seed", 0)),
        "attack_seed": int(g.get("attack_seed", 0)),
        "k_reconstructions": int(g.get("k_reconstructions", 100)),
        "n_shadow": int(g.get("n_shadow", 3000)),
        "target_cap": int(g.get("targets", 200)),
        "workers": int(g.get("workers", 1)),
    }
    if "lambda_grid" in g:
        kw["lambda_grid"] = tuple(float(x) for x in g["lambda_grid"])
    if args.method:
        kw["method"] = args.method
    if args.ratio is not None:
        kw["ratio"] = args.ratio
        kw["m"] = None
    if args.epsilon is not None:
        kw["epsilon"] = args.epsilon
    if args.seed is not None:
        kw["game_seed"] = args.seed
        kw["attack_seed"] = args.seed
    if args.targets is not None:
        kw["target_cap"] = args.targets
    if args.workers is not None:
        kw["workers"] = args.workers
    if kw["m"] is None and kw["ratio"] is None:
        kw["ratio"] = 0.25
    kw["desia"] = DesiaOptions(**desia_flags)
    kw["solver_limits"] = SolveLimits(**solver)
    kw["rap"] = RapConfig(**rap)
    return GameConfig(**kw), kind


def cmd_gen_data(cfg: dict, args) -> int:
    schema = _schema(cfg)
    d = cfg.get("data", {})
    size = int(d.get("size", 1000))
    seed = args.seed if args.seed is not None else int(d.get("seed", 0))
    skew = d.get("skew")
    out = _out_dir(cfg, args)
    full = generate_synthetic(schema, size, seed, skew=skew)
    meta = _meta(cfg, {"data_seed": seed})
    frac = d.get("private_fraction")
    if frac is not None:
        private, aux = split_private_aux(full, float(frac), seed)
        for name, part in (("private.csv", private), ("aux.csv", aux)):
            write_dataset_csv(part, out / name)
            _write_sidecar(out / name, meta)
        print(f"wrote {out/'private.csv'} (s={private.size}) and {out/'aux.csv'} (s={aux.size})")
    else:
        write_dataset_csv(full, out / "dataset.csv")
        _write_sidecar(out / "dataset.csv", meta)
        print(f"wrote {out/'dataset.csv'} (s={full.size})")
    return 0


def cmd_make_queries(cfg: dict, args) -> int:
    schema = _schema(cfg)
    q = cfg.get("queries", {})
    out = _out_dir(cfg, args)
    if "spec" in q:
        queries = load_query_spec(q["spec"], schema)
    else:
        kinds = q.get("kinds", [1, 2])
        buckets = q.get("buckets", {})
        queries = []
        for k in kinds:
            queries.extend(make_marginal_queries(schema, int(k), bucket_widths=buckets))
    save_query_spec(queries, schema, out / "queries.json", meta=_meta(cfg, {}))
    print(f"wrote {out/'queries.json'} ({len(queries)} queries)")
    return 0


def cmd_release(cfg: dict, args) -> int:
    schema = _schema(cfg)
    queries = load_query_spec(_require(cfg, "paths", "queries"), schema)
    dataset = load_dataset_csv(_require(cfg, "paths", "private"), schema)
    gcfg, _ = _game_config(cfg, args)
    m = gcfg.resolve_m(dataset.size, len(queries))
    qsel = sample_queries(queries, m, gcfg.game_seed)
    rel = release(qsel, dataset)
    seeds = {"game_seed": gcfg.game_seed}
    if not gcfg.noiseless():
        rel = add_laplace_noise(rel, gcfg.epsilon, gcfg.game_seed)
        seeds["epsilon"] = gcfg.epsilon
    out = _out_dir(cfg, args)
    save_release_json(rel, schema, out / "release.json", meta=_meta(cfg, seeds))
    print(f"wrote {out/'release.json'} (m={rel.m}, s={rel.dataset_size})")
    return 0


def _load_game_inputs(cfg: dict):
    schema = _schema(cfg)
    queries = load_query_spec(_require(cfg, "paths", "queries"), schema)
    private = load_dataset_csv(_require(cfg, "paths", "private"), schema)
    aux = load_dataset_csv(_require(cfg, "paths", "aux"), schema)
    return schema, queries, private, aux


def _mia_targets(private, count: int, seed: int):
    from ._seeds import derive_rng

    rng = derive_rng("cli-mia-targets", seed)
    n = min(count, private.size)
    idx = sorted(rng.choice(private.size, size=n, replace=False))
    return [tuple(int(v) for v in private.values[i]) for i in idx]


def cmd_attack(cfg: dict, args) -> int:
    schema, queries, private, aux = _load_game_inputs(cfg)
    gcfg, kind = _game_config(cfg, args)
    if kind == "mia":
        targets = _mia_targets(private, gcfg.target_cap, gcfg.game_seed)
        run = run_mia_game(private, aux, queries, gcfg, targets)
    else:
        run = run_aia_game(private, aux, queries, gcfg)
    out = _out_dir(cfg, args)
    run.metadata["meta"] = _meta(cfg, {"game_seed": gcfg.game_seed, "attack_seed": gcfg.attack_seed})
    save_game_run(run, out)
    print(f"wrote {out/'results.jsonl'} ({len(run.results)} targets)")
    return 0


def cmd_sweep(cfg: dict, args) -> int:
    schema, queries, private, aux = _load_game_inputs(cfg)
    gcfg, kind = _game_config(cfg, args)
    if kind != "aia":
        raise UsageError("sweeps are defined for the attribute game")
    sw = cfg.get("sweep", {})
    axis = sw.get("axis", "ratio")
    values = sw.get("values")
    if not values:
        raise UsageError("config is missing [sweep] values")
    out = _out_dir(cfg, args)
    if axis == "ratio":
        runs = sweep_query_ratio(private, aux, queries, [float(v) for v in values], gcfg)
    elif axis == "epsilon":
        eps = [None if str(v) in ("inf", "none") else float(v) for v in values]
        runs = sweep_noise(private, aux, queries, eps, gcfg, repeats=int(sw.get("repeats", 3)))
    else:
        raise UsageError(f"unknown sweep axis {axis!r}")
    for run in runs:
        tag = run.metadata["sweep"]
        label = f"{axis}_{tag['value']}" + (
            f"_rep{tag['repeat']}" if "repeat" in tag else ""
        )
        run.metadata["meta"] = _meta(cfg, {"game_seed": gcfg.game_seed})
        save_game_run(run, out / "sweep" / label)
    print(f"wrote {len(runs)} runs under {out/'sweep'}")
    return 0


def cmd_report(cfg: dict, args) -> int:
    results_dir = Path(args.results)
    if not (results_dir / "results.jsonl").exists():
        raise UsageError(f"no results.jsonl under {results_dir}")
    run = load_game_run(results_dir)
    ks = tuple(args.ks) if args.ks else tuple(cfg.get("report", {}).get("ks", DEFAULT_KS))
    out = Path(args.out) if args.out else results_dir
    report = summarize(run, ks=ks, out_dir=out)
    report["meta"] = _meta(cfg, {})
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    auc_str = "n/a" if report.get("auc") is None else f"{report['auc']:.4f}"
    print(f"wrote {out/'report.json'} (n={report['n_targets']}, auc={auc_str})")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="desia", description=__doc__)
    p.add_argument("--version", action="version", version=f"desia {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="TOML config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--method", default=None)
        sp.add_argument("--ratio", type=float, default=None)
        sp.add_argument("--epsilon", type=float, default=None)
        sp.add_argument("--targets", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", default=None)

    for name, fn in (
        ("gen-data", cmd_gen_data),
        ("make-queries", cmd_make_queries),
        ("release", cmd_release),
        ("attack", cmd_attack),
        ("sweep", cmd_sweep),
    ):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("report")
    sp.add_argument("results", help="directory containing results.jsonl")
    sp.add_argument("--ks", type=float, nargs="+", default=None)
    common(sp)
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config)
        return args.fn(cfg, args)
    except (UsageError, ParameterError, ParseError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DesiaError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
