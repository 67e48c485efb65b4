"""Command-line entry point: simulate, fit, evaluate, sweep, certify.

Exit codes: 0 success, 1 error (including usage errors), 2 never-treat.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .core import Dataset
from .evaluation import assess_policy, assessments_csv
from .frankwolfe import ToySpec, certify
from .nuisance import glm_nuisances
from .pipeline import GridResult, run
from .policy import policy_dim_check, policy_from_dict
from .synthdata import KINDS, PROPENSITY_VARIANTS, Scenario, generate, oracle_metrics, preprocess_realistic

log = logging.getLogger("pluc")

EXIT_OK, EXIT_ERROR, EXIT_NEVER_TREAT = 0, 1, 2
SWEEP_COLUMNS = ["replicate", "mode", "scenario", "n", "lambda", "beta", "value_oracle",
                 "constraint_oracle", "s_upper", "v_lower", "selected"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _seed(value) -> int:
    return int(value) if value is not None else secrets.randbits(32)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _scenario(args) -> Scenario:
    return Scenario(args.scenario, bool(getattr(args, "with_baseline", False)),
                    getattr(args, "propensity", "x2"))


def _add_scenario_args(p, required=False):
    p.add_argument("--scenario", choices=KINDS, required=required)
    p.add_argument("--with-baseline", action="store_true", help="add the covariate-dependent baseline term")
    p.add_argument("--propensity", choices=PROPENSITY_VARIANTS, default="x2")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    seed = _seed(args.seed)
    out = _out_dir(args.out)
    data, cf = generate(sc, args.n, seed)
    _write(out / "data.csv", data.to_csv(schema="dataset/1"))
    cf.to_csv(out / "counterfactuals.csv")
    manifest = {"scenario": sc.to_dict(), "n": args.n, "seed": seed, "files": ["data.csv", "counterfactuals.csv"]}
    if sc.kind == "realistic":
        scaled, tr = preprocess_realistic(data)
        _write(out / "data_scaled.csv", scaled.to_csv(schema="dataset/1"))
        _write(out / "preprocess.json", _dump(json.loads(tr.to_json())))
        manifest["files"] += ["data_scaled.csv", "preprocess.json"]
    _write(out / "scenario.json", _dump(manifest))
    return EXIT_OK


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = cfg.override("grid", alpha=args.alpha, lambdas=args.lambdas, betas=args.betas,
                       exhaustive_grid=True if args.exhaustive_grid else None,
                       oracle_grid_n=args.oracle_grid_n)
    cfg = cfg.override("fw", iterations=args.iterations, intercept=args.intercept)
    cfg = cfg.override("targeting", K=args.K)
    return cfg.override("nuisance", kind=args.nuisance)


def _nuisance_spec(cfg: RunConfig, sc: Scenario | None):
    if cfg.nuisance.kind == "glm":
        return "glm"
    if sc is None:
        raise UsageError("oracle nuisances require --scenario")
    return sc


def cmd_fit(args) -> int:
    if args.mode == "oracle" and args.scenario is None:
        raise UsageError("--mode oracle requires --scenario")
    cfg = _config_from_args(args)
    sc = _scenario(args) if args.scenario else None
    seed = _seed(args.seed)
    data = Dataset.from_csv(args.data)
    grid = cfg.grid_config(args.mode)
    result = run(data, grid, _nuisance_spec(cfg, sc), seed, scenario=sc)
    out = _out_dir(args.out)
    _write(out / "grid.json", result.to_json() + "\n")
    _write(out / "summary.csv", result.summary_csv())
    rows = [(c.lam, c.beta, c.assessment) for c in result.cells if c.ok]
    _write(out / "assessments.csv", assessments_csv(rows))
    _write(out / "policy.json", _dump(_policy_record(result)))
    return EXIT_NEVER_TREAT if result.never_treat else EXIT_OK


def _policy_record(result: GridResult) -> dict:
    rec = {"selection": "never_treat" if result.never_treat else "selected", "seed": result.seed,
           "policy": result.recommended_policy().to_dict()}
    if not result.never_treat:
        rec.update({"lambda": result.selected.lam, "beta": result.selected.beta,
                    "smooth_policy": result.selected.policy.to_dict(),
                    "threshold": None if result.threshold is None else result.threshold.t})
    return rec


def _load_policy(path):
    d = json.loads(Path(path).read_text())
    try:
        return policy_from_dict(d["policy"] if "policy" in d else d)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed policy record ({exc!r})") from exc


def cmd_evaluate(args) -> int:
    if (args.scenario is None) == (args.data is None):
        raise UsageError("give exactly one of --scenario or --data")
    policy = _load_policy(args.policy)
    seed = _seed(args.seed)
    out = Path(args.out)
    if args.scenario:
        sc = _scenario(args)
        d = sc.covariates(np.random.default_rng(0), 1).shape[1]
        policy_dim_check(policy, d)
        v, s = oracle_metrics(sc, policy, args.alpha, args.mc_n, seed)
        rec = {"scenario": sc.to_dict(), "alpha": args.alpha, "mc_n": args.mc_n, "seed": seed,
               "value": v, "constraint": s}
        _write(out, _dump(rec))
        return EXIT_OK
    data = Dataset.from_csv(args.data)
    policy_dim_check(policy, data.d)
    nuis = glm_nuisances(data)
    pa = assess_policy(policy, nuis, data, args.alpha)
    lam = getattr(args, "lam", None)
    _write(out, assessments_csv([(float("nan") if lam is None else lam,
                                  float(getattr(getattr(policy, "base", policy), "beta", float("nan"))), pa)]))
    return EXIT_OK


def _sweep_one(job) -> list[list]:
    rep, kind, mode, n, seed, cfg_dict, mc_n, with_baseline, propensity = job
    cfg = RunConfig.model_validate(cfg_dict)
    sc = Scenario(kind, with_baseline, propensity)
    data_seed = int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])
    data, _ = generate(sc, n, data_seed)
    spec = "glm" if cfg.nuisance.kind == "glm" else sc
    result = run(data, cfg.grid_config(mode), spec, data_seed, scenario=sc)
    alpha = cfg.grid.alpha
    rows = []
    for c in result.cells:
        if not c.ok:
            continue
        v, s = oracle_metrics(sc, c.policy, alpha, mc_n, seed)
        rows.append([rep, mode, kind, n, c.lam, c.beta, v, s, c.assessment.s_upper,
                     c.assessment.v_lower, int(c is result.selected)])
    if result.never_treat:
        v, s = oracle_metrics(sc, result.smooth_policy(), alpha, mc_n, seed)
        rows.append([rep, mode, kind, n, "", "", v, s, -alpha, v, 1])
    return rows


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    seed = _seed(args.seed)
    jobs = [(r, kind, mode, args.n, seed, cfg.model_dump(), args.mc_n, args.with_baseline, args.propensity)
            for r in range(args.replicates) for kind in args.scenarios for mode in args.modes]
    for kind in args.scenarios:
        if kind == "realistic":
            raise UsageError("sweep supports the controlled scenarios only")
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write("# pluc-schema: sweep/1\n")
        fh.write(f"# seed: {seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for rows in results:
            for r in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return EXIT_OK


def cmd_certify(args) -> int:
    spec = ToySpec(n=args.n, lam=args.lam, beta=args.beta, alpha=args.alpha,
                   iterations=args.iterations, seed=_seed(args.seed))
    report = certify(spec)
    text = report.to_csv()
    _write(Path(args.out), text)
    if not report.all_ok:
        print("convergence bound violated with an exact oracle", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_grid_overrides(p):
    p.add_argument("--config", help="JSON config file (sections grid, fw, sgd, targeting, nuisance)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--betas", type=_floats)
    p.add_argument("--iterations", type=int, help="Frank-Wolfe iterations")
    p.add_argument("--K", type=int, help="maximum correction steps")
    p.add_argument("--exhaustive-grid", action="store_true")
    p.add_argument("--oracle-grid-n", type=int)
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--nuisance", choices=("glm", "oracle"))
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pluc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    _add_scenario_args(p, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="learn and select a policy")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("naive", "pluc", "oracle"), default="pluc")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    _add_grid_overrides(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="oracle metrics or targeted bounds for a policy")
    p.add_argument("--policy", required=True)
    _add_scenario_args(p)
    p.add_argument("--data")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--mc-n", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="replicates x scenarios x modes")
    p.add_argument("--scenarios", type=lambda s: s.split(","), default=["linear"])
    p.add_argument("--modes", type=lambda s: s.split(","), default=["naive", "pluc"])
    p.add_argument("--with-baseline", action="store_true")
    p.add_argument("--propensity", choices=PROPENSITY_VARIANTS, default="x2")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--mc-n", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    _add_grid_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="audit the Frank-Wolfe convergence bound on a toy problem")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "modes", None):
            bad = set(args.modes) - {"naive", "pluc", "oracle"}
            if bad:
                raise UsageError(f"unknown modes {sorted(bad)}")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
