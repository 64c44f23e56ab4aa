"""``frem`` command line: simulate, phase1, infer, ensemble, oracle.

Models are files or ``fixture:<name>``.  On failure a JSON error document
goes to stderr and the exit status is nonzero (2 for bad input, 3 when the
computation itself fails).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import MISSING, fields

import numpy as np

from . import rng as rngmod
from .bridge.estimator import NoBridgeError
from .fixtures import FIXTURES, get_fixture
from .inference.data import DataError, ObservedPath, extract_intervals
from .inference.em import DegenerateDataError
from .inference.frem import FREMFailure, ensemble_run, frem_run
from .inference.phase1 import Phase1Config, run_phase1
from .io import (
    InputError,
    RunConfig,
    canonical_json,
    format_observations,
    load_model,
    load_run_config,
    read_observations,
    trace_table,
    write_text,
)
from .model import as_theta
from .oracle import TruncatedStateSpace, UnsupportedBridgeError, bridge_expectations, transition_prob
from .ssa import sample_observations

EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _seed_list(text: str) -> list[list[float]]:
    """``"1,5;6,5"`` -> ``[[1, 5], [6, 5]]``."""
    return [[float(v) for v in part.split(",")] for part in text.split(";") if part.strip()]


def _seed_grid(text: str) -> list[list[float]]:
    """``"lo:hi:n,lo:hi:n"``: the full tensor grid, first coordinate slowest."""
    axes = []
    for part in text.split(","):
        lo, hi, n = part.split(":")
        axes.append(np.linspace(float(lo), float(hi), int(n)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).tolist()


def _fixture(spec: str):
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        if name in FIXTURES:
            return get_fixture(name)
    return None


def _emit(text: str, out: str | None) -> None:
    if out:
        write_text(out, text)
    else:
        sys.stdout.write(text)


# run-config flags, generated from the RunConfig fields

_LIST_PARSERS = {"seeds": _seed_list, "seed_upper": _floats}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="YAML or JSON run configuration")
    g.add_argument("--seed-grid", help="seed grid lo:hi:n per coordinate, comma separated")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not MISSING else f.default_factory()
        if f.name in _LIST_PARSERS:
            g.add_argument(flag, dest=f.name, type=_LIST_PARSERS[f.name], default=None,
                           help=f"default {default}")
        elif f.type in ("bool", bool):
            g.add_argument(flag, dest=f.name, action="store_const", const=True, default=None)
        else:
            conv = {"int": int, "float": float, "str": str}.get(str(f.type), float)
            g.add_argument(flag, dest=f.name, type=conv, default=None, help=f"default {default}")


def _run_config(args, model) -> RunConfig:
    base = load_run_config(args.config).to_dict() if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    if getattr(args, "seed_grid", None):
        base["seeds"] = _seed_grid(args.seed_grid)
    fx = _fixture(args.model)
    if not base.get("seeds") and not base.get("seed_upper") and fx is not None:
        base["seeds"] = [list(s) for s in fx.seeds]
    return RunConfig.from_dict(base, args.config or "<flags>")


def _load_data(args, model):
    paths = read_observations(args.data, model.species_names, args.rescale_delta, args.rescale_time)
    return extract_intervals(paths)


def _provenance(args, model, data, run: RunConfig) -> dict:
    return {"model": args.model, "model_name": model.name, "data": args.data,
            "n_intervals": len(data), "run_config": run.to_dict()}


# subcommands

def cmd_simulate(args) -> None:
    model = load_model(args.model)
    fx = _fixture(args.model)
    theta = args.theta or (list(fx.theta_true) if fx else list(model.theta_true or []))
    x0 = args.x0 or (list(fx.x0) if fx else None)
    if not theta or x0 is None:
        raise InputError("<flags>", "--theta and --x0 are required for non-fixture models")
    if args.epochs:
        epochs = np.array(args.epochs, dtype=np.float64)
    else:
        T = args.T if args.T is not None else (fx.T if fx else None)
        dt = args.dt if args.dt is not None else (fx.dt if fx else None)
        if T is None or dt is None or not dt > 0:
            raise InputError("<flags>", "need --T and a positive --dt, or --epochs")
        n = int(round(T / dt))
        epochs = np.linspace(0.0, n * dt, n + 1)
    theta = as_theta(theta, model)
    paths = []
    for i in range(args.n_paths):
        X = sample_observations(model, theta, x0, epochs, rngmod.stream(args.seed, rngmod.SIMULATE, i))
        paths.append(ObservedPath(str(i), epochs, X))
    _emit(format_observations(paths, model.species_names), args.out)


def cmd_phase1(args) -> None:
    model = load_model(args.model)
    data = _load_data(args, model)
    run = _run_config(args, model)
    cfg = Phase1Config(mode=run.phase1_mode, t_star_frac=run.t_star_frac, ode_dt=run.ode_dt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    J = model.J
    w.writerow([*[f"seed_c{j + 1}" for j in range(J)], *[f"c{j + 1}" for j in range(J)],
                "objective", "seed_objective", "converged", "warning"])
    for seed in run.chain_seeds(model):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = run_phase1(model, data, seed, cfg)
        msg = "; ".join(str(c.message) for c in caught)
        w.writerow([*map(repr, map(float, seed)), *map(repr, map(float, res.theta)),
                    repr(res.objective), repr(res.seed_objective), int(res.converged), msg])
    _emit(buf.getvalue(), args.out)


def cmd_infer(args) -> None:
    model = load_model(args.model)
    data = _load_data(args, model)
    run = _run_config(args, model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = frem_run(model, data, run.chain_seeds(model), run.frem_config(), run.master_seed)
    doc = res.to_dict()
    doc["provenance"] = _provenance(args, model, data, run)
    doc["warnings"] = sorted({str(c.message) for c in caught})
    out = args.out or f"{run.output_dir}/results.json"
    write_text(out, canonical_json(doc))
    write_text(args.trace or f"{run.output_dir}/trace.csv", trace_table(doc))
    if not args.quiet:
        sys.stdout.write(json.dumps({"cluster_average": doc["cluster_average"], "p_star": doc["p_star"],
                                     "converged": doc["converged"], "results": str(out)}) + "\n")


def cmd_ensemble(args) -> None:
    model = load_model(args.model)
    data = _load_data(args, model)
    run = _run_config(args, model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        summ = ensemble_run(model, data, run.chain_seeds(model), run.frem_config(), args.n_runs, run.master_seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["coefficient", "average", "ci_low", "ci_high", "min", "max", "runs", "failures"])
    n_fail = sum(1 for f in summ.failures if not f.get("kept"))
    for j in range(model.J):
        m, h = summ.mean[j], summ.ci_half[j]
        w.writerow([f"c{j + 1}", repr(float(m)), repr(float(m - h)), repr(float(m + h)),
                    repr(float(summ.min[j])), repr(float(summ.max[j])), len(summ.estimates), n_fail])
    _emit(buf.getvalue(), args.out)
    if args.json:
        doc = summ.to_dict()
        doc["provenance"] = _provenance(args, model, data, run)
        write_text(args.json, canonical_json(doc))


def _box(text: str) -> TruncatedStateSpace:
    """``"0:80"`` or ``"0:310,0:310,0:310"``."""
    bounds = [tuple(int(v) for v in part.split(":")) for part in text.split(",")]
    return TruncatedStateSpace.from_bounds(bounds)


def cmd_oracle(args) -> None:
    model = load_model(args.model)
    fx = _fixture(args.model)
    theta = args.theta or (list(fx.theta_true) if fx else list(model.theta_true or []))
    if not theta:
        raise InputError("<flags>", "--theta is required")
    box = _box(args.box)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.bridge:
            b = bridge_expectations(model, theta, box, args.x, args.s, args.y, args.t, n_quad=args.n_quad)
            doc = {"p": b.p, "sink_mass": b.sink_mass, "E_R": b.R.tolist(), "E_F": b.F.tolist()}
        else:
            r = transition_prob(model, theta, box, args.x, args.s, args.y, args.t)
            doc = {"p": r.p, "sink_mass": r.sink_mass}
    doc["warnings"] = sorted({str(c.message) for c in caught})
    _emit(canonical_json(doc), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frem", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log interval failures and chain flags")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample SSA paths at observation epochs")
    s.add_argument("--model", required=True)
    s.add_argument("--theta", type=_floats)
    s.add_argument("--x0", type=_ints)
    s.add_argument("--T", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--epochs", type=_floats)
    s.add_argument("--n-paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("phase1", cmd_phase1, "ODE-matching seeds only"),
                                 ("infer", cmd_infer, "full two-phase run"),
                                 ("ensemble", cmd_ensemble, "repeat infer over master seeds")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--model", required=True)
        c.add_argument("--data", required=True)
        c.add_argument("--rescale-delta", type=float, help="divide observed levels by this unit")
        c.add_argument("--rescale-time", type=float, help="divide observation times by this")
        c.add_argument("--out")
        _add_run_flags(c)
        c.set_defaults(func=func)
        if name == "infer":
            c.add_argument("--trace", help="per-iteration CSV (default <output_dir>/trace.csv)")
            c.add_argument("--quiet", action="store_true")
        if name == "ensemble":
            c.add_argument("--n-runs", type=int, default=30)
            c.add_argument("--json", help="also write the full summary document here")

    o = sub.add_parser("oracle", help="truncated master-equation ground truth")
    o.add_argument("--model", required=True)
    o.add_argument("--theta", type=_floats)
    o.add_argument("--box", required=True, help="lo:hi per species, comma separated")
    o.add_argument("--x", type=_ints, required=True)
    o.add_argument("--y", type=_ints, required=True)
    o.add_argument("--s", type=float, default=0.0)
    o.add_argument("--t", type=float, required=True)
    o.add_argument("--bridge", action="store_true", help="also return E[R], E[F] of the bridge")
    o.add_argument("--n-quad", type=int, default=64)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def _fail(kind: str, exc: Exception, code: int, report=None) -> int:
    doc = {"error": kind, "message": str(exc)}
    if report is not None:
        doc["report"] = report
    sys.stderr.write(canonical_json(doc))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FREMFailure as exc:
        return _fail("chain_failure", exc, EXIT_RUNTIME, exc.report)
    except (InputError, DataError) as exc:
        return _fail("input_error", exc, EXIT_INPUT)
    except (NoBridgeError, DegenerateDataError, UnsupportedBridgeError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_RUNTIME)
    except ValueError as exc:
        return _fail("invalid_argument", exc, EXIT_INPUT)
    return 0


if __name__ == "__main__":
    sys.exit(main())
