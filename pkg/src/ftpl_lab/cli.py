"""Command line interface: ``run``, ``audit``, ``dist`` and ``oracle``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import distributions as dist
from . import oracle
from .harness import ConfigError, ExperimentConfig, emit, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(ValueError):
    pass


def _load_spec(text: str) -> dist.DistributionSpec:
    """A spec given inline as JSON or as a path to a JSON file."""
    try:
        if text.lstrip().startswith("{"):
            return dist.DistributionSpec.from_json(text)
        return dist.DistributionSpec.from_json(Path(text).read_text())
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad spec {text!r}: {exc}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _print(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    curves = run_experiment(config, args.threads)
    out = Path(config.output_path)
    if args.format == "json" and out.suffix == ".csv":
        out = out.with_suffix(".json")
    out.parent.mkdir(parents=True, exist_ok=True)
    emit(curves, out, args.format)
    for c in curves:
        print(f"{c.policy_label}: final regret {c.mean[-1]:.4g} (sd {c.std[-1]:.3g})" if c.checkpoints.size
              else f"{c.policy_label}: empty horizon")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit


def cmd_audit(args) -> int:
    if args.grid_points < 16:
        raise UsageError("--grid-points must be at least 16")
    if args.table2:
        cfg = audit_mod.AuditConfig(grid_points=args.grid_points, seed=args.seed, block_mc=False)
        table = audit_mod.table2(cfg)
        print(table.render())
        if args.out:
            Path(args.out).write_text(json.dumps({"columns": table.columns, "rows": dict(
                zip(audit_mod.ROW_NAMES, table.marks()))}, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return EXIT_OK
    if not args.spec:
        raise UsageError("audit needs --spec or --table2")
    spec = _load_spec(args.spec)
    cfg = audit_mod.AuditConfig(grid_points=args.grid_points, seed=args.seed)
    report = audit_mod.audit(spec, cfg)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    row = " ".join(f"{n}={report.verdicts[n].mark}" for n in audit_mod.CHECKS)
    print(f"{spec.label}: {row}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# dist


def cmd_dist(args) -> int:
    spec = _load_spec(args.spec)
    op = args.op
    if op in ("cdf", "pdf", "quantile", "s-f", "von-mises"):
        if args.x is None:
            raise UsageError(f"dist {op} needs --x")
        xs = np.asarray(_floats(args.x))
        fn = {"cdf": spec.cdf, "pdf": spec.pdf, "quantile": spec.quantile,
              "s-f": lambda v: dist.slowly_varying_S_F(spec, v),
              "von-mises": lambda v: dist.von_mises_ratio(spec, v)}[op]
        _print({"op": op, "x": xs, "values": fn(xs)})
    elif op == "sample":
        gen = np.random.default_rng(args.seed)
        _print({"op": op, "seed": args.seed, "values": spec.sample(gen, args.count)})
    elif op == "a-k":
        ks = [int(v) for v in _floats(args.k or "2")]
        _print({"op": op, "k": ks, "values": dist.tail_quantile_a_k(spec, np.asarray(ks))})
    elif op == "blockmax":
        k = int(args.k or 2)
        out = {"op": op, "k": k}
        try:
            out["closed_form"] = dist.block_max_mean_closed(spec, k)
        except dist.NotAvailableError:
            out["closed_form"] = None
        if args.reps:
            est, se = dist.block_max_mean_mc(spec, k, args.reps, np.random.default_rng(args.seed))
            out["mc_estimate"], out["mc_stderr"] = est, se
        _print(out)
    elif op == "fmda-gap":
        grid = _floats(args.x) if args.x else list(np.geomspace(0.5, 4.0, 64))
        k = int(args.k or 1000)
        _print({"op": op, "k": k, "gap": dist.fmda_convergence_gap(spec, k, grid)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    gaps = _floats(args.gaps)
    cfg = oracle.QuadratureConfig(rel_tol=args.rel_tol)
    target = _load_spec(args.spec) if args.spec else None
    op = args.op
    if op == "phi":
        if target is None:
            raise UsageError("oracle phi needs --spec")
        res = oracle.phi(target, gaps, cfg)
        _print({"values": res.values, "tolerance_achieved": res.tolerance_achieved})
        return EXIT_OK
    if op == "integral-i":
        if args.alpha is None:
            raise UsageError("integral-i needs --alpha")
        n = args.n if args.n is not None else args.alpha + 1
        _print({"value": oracle.integral_I(gaps, args.alpha, n, args.i, cfg)})
        return EXIT_OK
    if op == "integral-j":
        if target is None:
            raise UsageError("integral-j needs --spec")
        _print({"value": oracle.integral_J(target, gaps, args.i, cfg)})
        return EXIT_OK
    what = target if target is not None else args.alpha
    if what is None:
        raise UsageError(f"{op} needs --spec or --alpha")
    if op == "check-lemma4":
        if args.j is None:
            raise UsageError("check-lemma4 needs --j")
        v = oracle.check_lemma4_monotonicity(what, gaps, args.j, args.step, args.i, cfg)
        _print({"violation": v})
    else:
        _print({"slack": oracle.check_lemma5_bounds(what, gaps, args.i, None, cfg)})
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftpl-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--threads", type=int, default=None, help="worker processes (default: $FTPL_LAB_THREADS or 1)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.set_defaults(fn=cmd_run)

    a = sub.add_parser("audit", help="check a perturbation law against the regularity conditions")
    a.add_argument("--spec", help="spec JSON inline or as a file path")
    a.add_argument("--table2", action="store_true", help="print the family-level verdict matrix")
    a.add_argument("--grid-points", type=int, default=4096)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(fn=cmd_audit)

    d = sub.add_parser("dist", help="distribution analytics")
    d.add_argument("op", choices=("cdf", "pdf", "quantile", "sample", "a-k", "s-f", "von-mises", "blockmax", "fmda-gap"))
    d.add_argument("--spec", required=True)
    d.add_argument("--x", help="comma-separated evaluation points")
    d.add_argument("--k", help="block size(s)")
    d.add_argument("--count", type=int, default=10)
    d.add_argument("--reps", type=int, default=0, help="Monte-Carlo replicates for blockmax")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(fn=cmd_dist)

    o = sub.add_parser("oracle", help="selection probabilities and analysis integrals")
    o.add_argument("op", choices=("phi", "check-lemma4", "check-lemma5", "integral-i", "integral-j"))
    o.add_argument("--spec")
    o.add_argument("--alpha", type=float)
    o.add_argument("--gaps", required=True)
    o.add_argument("--i", type=int, default=0, help="tracked arm (0-based)")
    o.add_argument("--j", type=int, help="perturbed arm for check-lemma4 (0-based)")
    o.add_argument("--n", type=float, help="exponent for integral-i (default alpha + 1)")
    o.add_argument("--step", type=float, default=0.5)
    o.add_argument("--rel-tol", type=float, default=1e-10)
    o.set_defaults(fn=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.fn(args)
    except (UsageError, ConfigError, dist.DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
