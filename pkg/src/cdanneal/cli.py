"""Command-line front end: generate, run, fit, histogram, cost, validate, figure.

Subcommands exit 0 on success, 2 on configuration problems (bad flags,
missing or malformed config files, impossible engine requests), and 3 on
numeric failures.  All file outputs are written to temporary names and
renamed into place, so interrupted commands never leave partial
artifacts.  Reruns with identical inputs rewrite byte-identical files,
with one documented exception: the wall_ms column of records CSVs.

The `figure` subcommand bundles named reproduction recipes.  Each recipe
runs the standard parameter sets (chain: tau=10, gamma=1, couplings in
{0.1, 0.5, 1}; all-to-all: tau=1, gamma=J=1, with the cost recipe also
run at tau=10) at desk-scale sizes by default; `--max-n` and
`--n-instances` rescale them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .errors import CdannealError, ConfigError, NumericError
from .model import sample_instance, save_instance

_CHAIN_SIZES = (4, 8, 12, 16, 20, 24, 28, 32)
_A2A_SIZES = (2, 3, 4, 5, 6, 7, 8)

#: recipe name -> list of (topology, coupling, base sizes, tau) ensembles
_RECIPES = {
    "fig1": [("chain", 0.5, _CHAIN_SIZES, 10.0)],
    "fig2a": [("all_to_all", 1.0, _A2A_SIZES, 1.0)],
    "fig2b": [("all_to_all", 1.0, _A2A_SIZES, 1.0)],
    "app3": [("chain", 0.1, _CHAIN_SIZES, 10.0), ("chain", 1.0, _CHAIN_SIZES, 10.0)],
    "app4": [("chain", 0.5, (16,), 10.0)],
    # all-to-all cost curves ship at both sweep durations in circulation,
    # tau=1 (the scaling runs) and tau=10 (the cost-figure caption)
    "app5": [
        ("chain", 0.5, (4, 8, 12, 16, 20), 10.0),
        ("all_to_all", 1.0, _A2A_SIZES, 1.0),
        ("all_to_all", 1.0, _A2A_SIZES, 10.0),
    ],
}


def _write_json(path, payload) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _load_config(path, args) -> harness.EnsembleConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(data.get("sizes"), list):
        data["sizes"] = tuple(data["sizes"])
    if isinstance(data.get("protocols"), list):
        data["protocols"] = tuple(data["protocols"])
    config = harness.config_from_dict(data)
    return _apply_overrides(config, args)


def _apply_overrides(config, args) -> harness.EnsembleConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "engine", None) is not None:
        updates["engine"] = args.engine
    if getattr(args, "max_n", None) is not None:
        sizes = tuple(n for n in config.sizes if n <= args.max_n)
        if not sizes:
            raise ConfigError(f"--max-n {args.max_n} removes every size")
        updates["sizes"] = sizes
    if updates:
        data = harness.config_to_dict(config)
        data.update(updates)
        config = harness.config_from_dict(data)
    return config


def _ensure_outdir(path) -> None:
    os.makedirs(path, exist_ok=True)


# -- subcommands -----------------------------------------------------------------


def _cmd_gen(args) -> int:
    config = _load_config(args.config, args)
    _ensure_outdir(args.out)
    count = 0
    for n in config.sizes:
        for i in range(config.n_instances):
            seed = harness.derive_seed(config.master_seed, n, i)
            instance = sample_instance(
                seed, n, config.topology, config.gamma_value, config.coupling_value
            )
            save_instance(instance, os.path.join(args.out, f"instance_N{n}_i{i}.json"))
            count += 1
    print(f"wrote {count} instance files to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args.config, args)
    _ensure_outdir(args.out)
    records = harness.run_ensemble(config, workers=args.workers)
    out = os.path.join(args.out, "records.csv")
    harness.write_records_csv(records, out)
    _write_json(os.path.join(args.out, "config.json"), harness.config_to_dict(config))
    print(f"wrote {len(records)} records to {out}")
    return 0


def _cmd_fit(args) -> int:
    records = harness.read_records_csv(args.infile)
    points = harness.mean_fidelity_points(records, args.protocol)
    fit = harness.fit_exponential(points)
    payload = harness.fit_to_dict(args.protocol, fit)
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _cmd_hist(args) -> int:
    records = harness.read_records_csv(args.infile)
    counts, edges = harness.histogram(records, args.protocol, args.n, args.bins)
    payload = {
        "protocol": args.protocol,
        "N": args.n,
        "counts": counts.tolist(),
        "bin_edges": edges.tolist(),
    }
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _cmd_cost(args) -> int:
    records = harness.read_records_csv(args.infile)
    groups: dict[str, dict[int, list[float]]] = {}
    for rec in records:
        if rec.protocol.startswith("CD"):
            groups.setdefault(rec.protocol, {}).setdefault(rec.n, []).append(rec.cost)
    payload = {
        protocol: [[n, float(np.mean(vals))] for n, vals in sorted(by_n.items())]
        for protocol, by_n in groups.items()
    }
    if not payload:
        raise ConfigError("no CD records to aggregate costs from")
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _cmd_validate(args) -> int:
    config = _load_config(args.config, args)
    base = harness.config_to_dict(config)
    base["engine"] = "exact"
    exact_records = harness.run_ensemble(harness.config_from_dict(base), workers=args.workers)
    base["engine"] = "mps"
    mps_records = harness.run_ensemble(harness.config_from_dict(base), workers=args.workers)
    diffs = [
        abs(a.fidelity - b.fidelity) for a, b in zip(exact_records, mps_records)
    ]
    worst = max(diffs)
    payload = {
        "records": len(diffs),
        "max_abs_fidelity_diff": worst,
        "tolerance": args.tol,
        "passed": worst <= args.tol,
    }
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    if worst > args.tol:
        raise NumericError(
            f"engines disagree by {worst:.3e} (tolerance {args.tol:.1e}); "
            "refine delta_t or loosen --tol"
        )
    return 0


def _recipe_config(args, topology, coupling, sizes, tau) -> harness.EnsembleConfig:
    sizes = tuple(n for n in sizes if n <= args.max_n)
    if not sizes:
        raise ConfigError(f"--max-n {args.max_n} removes every size in the recipe")
    return harness.EnsembleConfig(
        topology=topology,
        sizes=sizes,
        n_instances=args.n_instances,
        master_seed=args.seed if args.seed is not None else 0,
        protocols=("QA", "CD1", "CD2"),
        tau=tau,
        gamma_value=1.0,
        coupling_value=coupling,
        engine="auto",
    )


def _cmd_figure(args) -> int:
    _ensure_outdir(args.out)
    for topology, coupling, sizes, tau in _RECIPES[args.name]:
        tag = f"{'chain' if topology == 'chain' else 'a2a'}_J{coupling:g}_tau{tau:g}"
        config = _recipe_config(args, topology, coupling, sizes, tau)
        records = harness.run_ensemble(config, workers=args.workers)
        harness.write_records_csv(records, os.path.join(args.out, f"records_{tag}.csv"))
        if args.name == "fig2b":
            ratios = harness.fidelity_ratio(records)
            payload = {
                protocol: [[n, value] for (p, n), value in sorted(ratios.items()) if p == protocol]
                for protocol in config.protocols
            }
            _write_json(os.path.join(args.out, f"ratios_{tag}.json"), payload)
        elif args.name == "app4":
            for protocol in config.protocols:
                counts, edges = harness.histogram(records, protocol, config.sizes[-1], args.bins)
                _write_json(
                    os.path.join(args.out, f"hist_{tag}_N{config.sizes[-1]}_{protocol}.json"),
                    {"protocol": protocol, "N": config.sizes[-1],
                     "counts": counts.tolist(), "bin_edges": edges.tolist()},
                )
        elif args.name == "app5":
            groups: dict[str, list[list[float]]] = {}
            for protocol in ("CD1", "CD2"):
                means = {}
                for rec in records:
                    if rec.protocol == protocol:
                        means.setdefault(rec.n, []).append(rec.cost)
                groups[protocol] = [[n, float(np.mean(v))] for n, v in sorted(means.items())]
            _write_json(os.path.join(args.out, f"cost_{tag}.json"), groups)
        else:
            fits = {}
            for protocol in config.protocols:
                points = harness.mean_fidelity_points(records, protocol)
                fits[protocol] = harness.fit_to_dict(
                    protocol, harness.fit_exponential(points)
                )
            _write_json(os.path.join(args.out, f"fits_{tag}.json"), fits)
    print(f"recipe {args.name} written to {args.out}")
    return 0


# -- parser ------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdanneal",
        description="Quantum annealing ensembles with counter-diabatic driving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=False, infile=False):
        if config:
            p.add_argument("--config", required=True, help="ensemble config JSON")
        if infile:
            p.add_argument("--in", dest="infile", required=True, help="records CSV")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: CDANNEAL_WORKERS or 1)")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--max-n", type=int, default=None, help="drop sizes above this")
        p.add_argument("--engine", choices=harness.ENGINES, default=None,
                       help="override engine selection")

    p = sub.add_parser("gen", help="write the ensemble's instance files")
    common(p, config=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run an ensemble and write records.csv")
    common(p, config=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("fit", help="exponential fit of mean fidelity vs N")
    common(p, infile=True)
    p.add_argument("--protocol", required=True, help="protocol label to fit")
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("hist", help="fidelity histogram for one (protocol, N) slice")
    common(p, infile=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.set_defaults(func=_cmd_hist)

    p = sub.add_parser("cost", help="mean implementation cost per (protocol, N)")
    common(p, infile=True)
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("validate", help="cross-check MPS against the exact engine")
    common(p, config=True)
    p.add_argument("--tol", type=float, default=1e-6, help="max fidelity disagreement")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("figure", help="run a named reproduction recipe")
    common(p)
    p.add_argument("--name", required=True, choices=sorted(_RECIPES))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-instances", type=int, default=50)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=_cmd_figure)
    parser.set_defaults(max_n=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "max_n", None) is None and args.command == "figure":
        args.max_n = 20  # desk-scale default cap for recipes
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except CdannealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
