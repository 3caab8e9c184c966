"""Command-line entry point: ``rcfdml {simulate,estimate,lp,montecarlo}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import DataError, Role, load_csv, transform_and_lag, write_csv, write_roles
from .dgp import SvarSpec
from .estimator import estimate, estimate_lp
from .folds import FoldError, make_plan
from .montecarlo import CSV_COLUMNS, ExperimentGrid, lp_grid, run_grid, simulate, write_rows
from .numerics import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("rcfdml")


def _header(cfg: RunConfig, command: str) -> str:
    return f"rcfdml {command} seed={cfg.seed}\nconfig={json.dumps(cfg.resolved(), sort_keys=True)}"


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def cmd_simulate(cfg: RunConfig) -> dict:
    try:
        spec = cfg.dgp.build()
    except ValueError as exc:
        raise ConfigError(f"dgp: {exc}") from None
    sample = simulate(spec, cfg.dgp.T, RngStream(cfg.seed, 0), irf_horizon=cfg.dgp.irf_horizon)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "data.csv"
    write_csv(sample.dataset, path, time_column="t", header_comment=_header(cfg, "simulate"))
    extra = {
        "theta_true": sample.theta_true,
        "fingerprint": sample.fingerprint,
        "time_column": "t",
        "seed": cfg.seed,
        "config": cfg.resolved(),
    }
    if sample.irf_true is not None:
        extra["irf_true"] = sample.irf_true.tolist()
    write_roles(sample.dataset, _sidecar_path(path), **extra)
    return {"data": str(path), "sidecar": str(_sidecar_path(path)), "theta_true": sample.theta_true}


def _load_dataset(cfg: RunConfig):
    if cfg.data is None:
        raise ConfigError("missing 'data' section (path and roles of the dataset to estimate on)")
    d = cfg.data
    roles = dict(d.roles)
    time_column = d.time_column
    if not roles:
        side = _sidecar_path(d.path)
        if not side.exists():
            raise ConfigError(f"data.roles is empty and no sidecar {side} exists")
        meta = json.loads(side.read_text())
        roles = {k: Role(v) for k, v in meta["roles"].items()}
        time_column = time_column or meta.get("time_column")
    data = load_csv(d.path, roles, time_column)
    spec = d.transform_spec()
    return data if spec.is_identity else transform_and_lag(data, spec)


def cmd_estimate(cfg: RunConfig) -> dict:
    data = _load_dataset(cfg)
    e = cfg.estimator
    plan = make_plan(data.T, e.K, e.scheme)
    report = estimate(data, plan, e.settings(), e.bandwidth)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "estimate.json"
    report.to_json(path, seed=cfg.seed, config=cfg.resolved(), fold_plan=plan.to_dict())
    return {"report": str(path), "theta_hat": report.theta_hat, "se": report.se}


def cmd_lp(cfg: RunConfig) -> dict:
    data = _load_dataset(cfg)
    e = cfg.estimator
    plan = make_plan(data.T, e.K, e.scheme)
    report = estimate_lp(data, plan, e.settings(), e.H, e.bandwidth)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "lp.json"
    report.to_json(path, seed=cfg.seed, config=cfg.resolved(), fold_plan=plan.to_dict())
    report.to_csv(cfg.out / "irf.csv", header_comment=_header(cfg, "lp"))
    return {"report": str(path), "theta_h": report.theta_h.tolist()}


def cmd_montecarlo(cfg: RunConfig) -> dict:
    mc, e = cfg.montecarlo, cfg.estimator
    try:
        spec = cfg.dgp.build()
    except ValueError as exc:
        raise ConfigError(f"dgp: {exc}") from None
    cfg.out.mkdir(parents=True, exist_ok=True)
    header = _header(cfg, "montecarlo")
    if mc.mode == "lp":
        if not isinstance(spec, SvarSpec):
            raise ConfigError("montecarlo.mode 'lp' needs dgp.kind 'svar'")
        results = lp_grid(spec, mc.T_values, e.K, e.H, mc.replications, cfg.seed, e.settings(),
                          scheme=e.scheme, threads=cfg.threads, bandwidth=e.bandwidth)
        rows = [
            {"T": r.T, "horizon": h, "abs_bias": r.abs_bias[h], "coverage": r.coverage[h],
             "mc_se_coverage": r.mc_se_coverage[h], "mean_se": r.mean_se[h],
             "n_converged": r.n_converged, "n_failed": r.n_failed}
            for r in results for h in range(len(r.abs_bias))
        ]
        path = cfg.out / "lp_grid.csv"
        write_rows(rows, path, list(rows[0]), header)
        return {"table": str(path), "rows": len(rows)}
    try:
        grid = ExperimentGrid(
            dgp=spec,
            T_values=tuple(mc.T_values),
            K_values=tuple(mc.K_values),
            schemes=tuple(mc.schemes),
            criteria=tuple(mc.criteria),
            replications=mc.replications,
            base_seed=cfg.seed,
            grid=e.grid.build(),
            l1_ratio=e.l1_ratio,
            penalty_scale=e.penalty_scale,
            bandwidth=e.bandwidth,
            bias_mode=mc.bias_mode,
        )
    except ValueError as exc:
        raise ConfigError(f"montecarlo: {exc}") from None
    path = cfg.out / "grid.csv"
    rows = run_grid(grid, cache_dir=cfg.out / "cache" if mc.cache else None, out_csv=path,
                    threads=cfg.threads, header_comment=header)
    return {"table": str(path), "rows": len(rows), "columns": CSV_COLUMNS}


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "lp": cmd_lp,
    "montecarlo": cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcfdml", description="Reverse cross-fitting DML for time series.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "draw one dataset from the configured DGP (CSV + sidecar JSON)",
        "estimate": "estimate the policy effect on a CSV dataset",
        "lp": "estimate local-projection responses over horizons 0..H",
        "montecarlo": "run a bias/coverage grid over (T, K, scheme, criterion)",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", type=Path, help="YAML run configuration")
        s.add_argument("--out", type=Path, help="output directory (overrides 'out')")
        s.add_argument("--seed", type=int, help="base seed, unsigned 64-bit (overrides 'seed')")
        s.add_argument("--threads", type=int, help="worker processes (overrides 'threads')")
        s.add_argument("--replications", type=int, help="Monte Carlo replications (overrides montecarlo.replications)")
        s.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "out": str(args.out) if args.out is not None else None,
        "seed": args.seed,
        "threads": args.threads,
        "montecarlo.replications": args.replications,
    }
    try:
        cfg = load_config(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, DataError, FoldError) as exc:
        print(f"rcfdml {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rcfdml {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"rcfdml {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(result, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
