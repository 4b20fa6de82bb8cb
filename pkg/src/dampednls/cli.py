"""Command-line experiment runner.

Exit status: 0 when every verdict passes, 2 when a verdict fails, 1 on errors,
64 on usage errors.
"""

import argparse
import csv
import json
import os
import subprocess
import sys
import warnings

import numpy as np
import tomli

from . import __version__
from .analysis import birkhoff_average, lambda_sweep, mc_moments, sync_experiment
from .checkpoint import save_checkpoint
from .config import config_from_dict
from .dynamics import State, evolve
from .errors import BlowUpError, CheckpointError, ConfigurationError, DomainError
from .exponents import AdmissiblePair, as_exponent, check_assumptions, fmt, is_admissible_pair
from .grid import make_grid
from .noise import path_stream
from .observables import estimate_gn_constant

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_USAGE = 0, 1, 2, 64

# flag dest -> dotted config key
OVERRIDES = {
    "d": "grid.d", "n": "grid.n", "L": "grid.L",
    "lam": "params.lambda", "sigma": "params.sigma", "alpha": "params.alpha", "dt": "params.dt",
    "t_final": "params.t_final", "scheme": "params.scheme", "log_every": "params.log_every",
    "seed": "params.seed", "out": "output",
    "paths": "experiment.paths", "pairs": "experiment.pairs", "workers": "experiment.workers",
    "powers": "experiment.powers", "lambdas": "experiment.lambdas", "burn_in": "experiment.burn_in",
    "observables": "experiment.observables", "restarts": "experiment.restarts",
    "iters": "experiment.iters",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _common(p):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_true", help="run even if the parameter gate rejects")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--scheme", choices=("lie", "strang"))
    p.add_argument("--log-every", dest="log_every", type=int)


def build_parser():
    parser = _Parser(prog="dampednls", description="Damped stochastic NLS experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="one path, observables over time")
    _common(p)
    p.add_argument("--observables", type=_words)
    p.add_argument("--checkpoint", help="write the final state here")

    p = sub.add_parser("moments", help="ensemble moments and bound checks")
    _common(p)
    p.add_argument("--powers", type=_ints)
    p.add_argument("--observables", type=_words)

    p = sub.add_parser("sync", help="shared-noise pairs and the pathwise envelope")
    _common(p)
    p.add_argument("--pairs", type=int)

    p = sub.add_parser("birkhoff", help="time averages after burn-in")
    _common(p)
    p.add_argument("--observables", type=_words)
    p.add_argument("--burn-in", dest="burn_in", type=float)

    p = sub.add_parser("sweep", help="stationary estimates across damping values")
    _common(p)
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--burn-in", dest="burn_in", type=float)

    p = sub.add_parser("gn", help="estimate the Gagliardo-Nirenberg constant")
    _common(p)
    p.add_argument("--restarts", type=int)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("check", help="parameter gate for (d, sigma, alpha)")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--sigma", type=str, required=True)
    p.add_argument("--alpha", type=int, required=True)

    p = sub.add_parser("strichartz", help="admissibility of a Strichartz pair")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=str, required=True)
    p.add_argument("--r", type=str, required=True)
    return parser


# -- output -------------------------------------------------------------------


def git_version():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, columns):
    """One header row, then one record per row; numbers at 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(cols[0])):
            w.writerow([_num(c[i]) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def write_summary(out, cfg, overrides, config_file, verdicts, results):
    doc = {
        "version": git_version(),
        "seed": cfg.params["seed"],
        "config_file": config_file,
        "overrides": overrides,
        "config": cfg.to_dict(),
        "force": cfg.force,
        "gate": cfg.gate,
        "verdicts": verdicts,
        "results": results,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- config assembly ------------------------------------------------------------


def load_run_config(args):
    """Config file values overridden by any flags given; returns (cfg, overrides)."""
    doc = {}
    if args.config:
        with open(args.config, "rb") as fh:
            try:
                doc = tomli.load(fh)
            except tomli.TOMLDecodeError as err:
                raise ConfigurationError(f"malformed config: {err}") from err
    overrides = {}
    for dest, dotted in OVERRIDES.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        overrides[dotted] = val
        *tables, key = dotted.split(".")
        tgt = doc
        for t in tables:
            tgt = tgt.setdefault(t, {})
        tgt[key] = val
    doc.setdefault("experiment", {})["name"] = args.command
    return config_from_dict(doc, force=args.force), overrides


def _ensure_out(cfg):
    os.makedirs(cfg.output, exist_ok=True)
    return cfg.output


def _field_of(start):
    return start.field if isinstance(start, State) else start


# -- commands -------------------------------------------------------------------


def cmd_simulate(cfg, args):
    g = cfg.make_grid()
    params, noise = cfg.sim_params(), cfg.make_noise(g)
    start = cfg.initial_state(g)
    rng = None if isinstance(start, State) else path_stream(params.seed, "noise", 0)
    traj = evolve(start, params, noise, observers=cfg.experiment["observables"], rng=rng)
    cols = {"t": traj.times, **traj.values}
    results = {"final_t": traj.final.t}
    if getattr(args, "checkpoint", None):
        save_checkpoint(traj.final, args.checkpoint, params)
        results["checkpoint"] = args.checkpoint
    return {"simulate": cols}, {}, results


def cmd_moments(cfg, args):
    g = cfg.make_grid()
    params, noise = cfg.sim_params(), cfg.make_noise(g)
    ex = cfg.experiment
    u0 = _field_of(cfg.initial_state(g))
    G = ex.get("G")
    if "modified_energy" in ex["observables"] and G is None:
        G = estimate_gn_constant(g, params.sigma, restarts=ex["restarts"], iters=ex["iters"],
                                 seed=params.seed).G
    times = ex["times"] or None
    rep = mc_moments(u0, params, noise, powers=ex["powers"], n_paths=ex["paths"],
                     observables=ex["observables"], times=times, workers=ex["workers"],
                     block=ex["block"], G=G)
    verdicts = rep.verdicts()
    if rep.exact_mass is not None:
        mu, se = rep.mean[("mass", 1)], rep.se[("mass", 1)]
        verdicts["mass_identity"] = bool(np.all(np.abs(mu - rep.exact_mass)
                                                <= np.maximum(3 * se, 0.02 * rep.exact_mass)))
    results = rep.summary()
    if G is not None:
        results["G"] = G
    return {"moments": rep.columns()}, verdicts, results


def cmd_sync(cfg, args):
    g = cfg.make_grid()
    params, noise = cfg.sim_params(), cfg.make_noise(g)
    ex = cfg.experiment
    x1 = _field_of(cfg.initial_state(g))
    if cfg.initial_b is None:
        raise ConfigurationError("sync needs a second initial condition", "initial_b")
    x2 = _field_of(cfg.initial_state(g, "initial_b"))
    rep = sync_experiment(x1, x2, params, noise, n_pairs=ex["pairs"], tol=ex["tol"], workers=ex["workers"])
    return {"sync": rep.columns()}, rep.verdicts(), rep.summary()


def cmd_birkhoff(cfg, args):
    g = cfg.make_grid()
    params, noise = cfg.sim_params(), cfg.make_noise(g)
    ex = cfg.experiment
    starts = [_field_of(cfg.initial_state(g))]
    if cfg.initial_b is not None:
        starts.append(_field_of(cfg.initial_state(g, "initial_b")))
    reps = birkhoff_average(starts, params, noise, list(ex["observables"]), burn_in=ex.get("burn_in"),
                            n_batches=ex["n_batches"], workers=ex["workers"])
    first = next(iter(reps.values()))
    cols = {"t": first.times}
    for name, rep in reps.items():
        for i in range(rep.running.shape[1]):
            cols[f"{name}_A{i}"] = rep.running[:, i]
    verdicts = {}
    if len(starts) > 1:
        for name, rep in reps.items():
            gap = abs(rep.averages[0] - rep.averages[1])
            verdicts[f"consistent_{name}"] = bool(gap <= 3 * np.sqrt(rep.se[0] ** 2 + rep.se[1] ** 2))
    return {"birkhoff": cols}, verdicts, {k: r.summary() for k, r in reps.items()}


def cmd_sweep(cfg, args):
    g = cfg.make_grid()
    params, noise = cfg.sim_params(), cfg.make_noise(g)
    ex = cfg.experiment
    if not ex["lambdas"]:
        raise ConfigurationError("needs a list of damping values", "experiment.lambdas")
    u0 = _field_of(cfg.initial_state(g))
    rep = lambda_sweep(u0, params, noise, ex["lambdas"], n_paths=ex["paths"], burn_in=ex.get("burn_in"),
                       workers=ex["workers"], block=ex["block"])
    return {"sweep": rep.columns()}, rep.verdicts(), rep.summary()


def cmd_gn(cfg, args):
    g = cfg.make_grid()
    ex = cfg.experiment
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = estimate_gn_constant(g, cfg.params["sigma"], restarts=ex["restarts"], iters=ex["iters"],
                                   seed=cfg.params["seed"])
    tr = est.trace
    cols = {"start": np.arange(len(tr["per_start"])), "quotient": tr["per_start"],
            "iterations": tr["iterations"], "converged": tr["converged"]}
    return {"gn": cols}, {}, est.to_dict()


RUNNERS = {"simulate": cmd_simulate, "moments": cmd_moments, "sync": cmd_sync,
           "birkhoff": cmd_birkhoff, "sweep": cmd_sweep, "gn": cmd_gn}


def cmd_check(args):
    v = check_assumptions(args.d, as_exponent(args.sigma), args.alpha)
    print(v.status if not v.reason else f"{v.status}: {v.reason}")
    return EXIT_OK if v.ok else EXIT_FAIL


def cmd_strichartz(args):
    p, r = as_exponent(args.p), as_exponent(args.r)
    if is_admissible_pair(args.d, p, r):
        dp, dr = AdmissiblePair(args.d, p, r).dual
        print(f"admissible pair (dual exponents {fmt(dp)}, {fmt(dr)})")
        return EXIT_OK
    print("not admissible")
    return EXIT_FAIL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args)
        if args.command == "strichartz":
            return cmd_strichartz(args)
        cfg, overrides = load_run_config(args)
        tables, verdicts, results = RUNNERS[args.command](cfg, args)
        out = _ensure_out(cfg)
        for name, cols in tables.items():
            write_csv(os.path.join(out, f"{name}.csv"), cols)
        write_summary(out, cfg, overrides, args.config, verdicts, results)
    except (ConfigurationError, DomainError, CheckpointError, BlowUpError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    for k, ok in verdicts.items():
        print(f"{k}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(verdicts.values()) else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
