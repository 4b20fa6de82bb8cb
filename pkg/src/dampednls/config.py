"""Run configuration: TOML text to a validated :class:`RunConfig` and back.

Example::

    output = "runs/demo"

    [grid]
    d = 2
    n = 64
    L = 20.0

    [params]
    lambda = 1.0
    sigma = 1.0
    alpha = -1
    dt = 1e-3
    t_final = 2.0

    [[noise.modes]]
    mode = [1, 0]
    amplitude = 0.2

    [initial]
    kind = "gaussian"
    width = 2.0
    amplitude = 0.5

    [experiment]
    name = "moments"
    paths = 400
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import tomli
import tomli_w

from .dynamics import SCHEMES, SimParams
from .errors import ConfigurationError, DomainError
from .exponents import check_assumptions
from .grid import Field, gaussian, make_grid, plane_wave
from .noise import CONVENTIONS, build_noise, zero_noise

INITIAL_KINDS = ("zero", "gaussian", "modes", "checkpoint")

PARAM_DEFAULTS = {"scheme": "lie", "log_every": 1, "seed": 0, "dealias": False}
EXPERIMENT_DEFAULTS = {
    "name": "simulate", "paths": 100, "powers": [1], "times": [], "lambdas": [],
    "observables": ["mass"], "pairs": 50, "tol": 1e-3, "n_batches": 20, "workers": 1,
    "block": 16, "corpus_size": 1000, "restarts": 16, "iters": 500,
}

_INT, _REAL, _BOOL, _STR = "integer", "real", "boolean", "string"


def _typed(value, kind, key):
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}", key)
        return value
    if kind == _REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", key)
        return float(value)
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}", key)
        return value
    if not isinstance(value, str):
        raise ConfigurationError(f"expected a string, got {value!r}", key)
    return value


def _table(doc, name, required=True):
    if name not in doc:
        if required:
            raise ConfigurationError("missing table", name)
        return {}
    if not isinstance(doc[name], dict):
        raise ConfigurationError("expected a table", name)
    return doc[name]


def _get(tbl, prefix, key, kind, default=None, required=False):
    path = f"{prefix}.{key}"
    if key not in tbl:
        if required:
            raise ConfigurationError("missing key", path)
        return default
    return _typed(tbl[key], kind, path)


def _mode_list(entries, prefix, d):
    if not isinstance(entries, list):
        raise ConfigurationError("expected an array of tables", prefix)
    out = []
    for i, e in enumerate(entries):
        key = f"{prefix}[{i}]"
        if not isinstance(e, dict) or "mode" not in e or "amplitude" not in e:
            raise ConfigurationError("each entry needs 'mode' and 'amplitude'", key)
        mode = e["mode"]
        if isinstance(mode, int) and not isinstance(mode, bool):
            mode = [mode]
        if not isinstance(mode, list) or len(mode) != d:
            raise ConfigurationError(f"mode needs {d} integer indices", key + ".mode")
        mode = [_typed(m, _INT, key + ".mode") for m in mode]
        out.append({"mode": mode, "amplitude": _typed(e["amplitude"], _REAL, key + ".amplitude")})
    return out


def _initial(tbl, prefix, d):
    kind = _get(tbl, prefix, "kind", _STR, "zero")
    if kind not in INITIAL_KINDS:
        raise ConfigurationError(f"kind must be one of {INITIAL_KINDS}", prefix + ".kind")
    out = {"kind": kind}
    if kind == "gaussian":
        out["width"] = _get(tbl, prefix, "width", _REAL, required=True)
        out["amplitude"] = _get(tbl, prefix, "amplitude", _REAL, 1.0)
        if "center" in tbl:
            c = tbl["center"]
            if not isinstance(c, list) or len(c) != d:
                raise ConfigurationError(f"center needs {d} numbers", prefix + ".center")
            out["center"] = [_typed(x, _REAL, prefix + ".center") for x in c]
        if not out["width"] > 0:
            raise ConfigurationError("width must be > 0", prefix + ".width")
    elif kind == "modes":
        out["modes"] = _mode_list(tbl.get("modes", []), prefix + ".modes", d)
        if not out["modes"]:
            raise ConfigurationError("needs at least one mode", prefix + ".modes")
    elif kind == "checkpoint":
        out["path"] = _get(tbl, prefix, "path", _STR, required=True)
    return out


@dataclass
class RunConfig:
    grid: dict
    params: dict
    noise: dict
    initial: dict
    experiment: dict
    output: str = "runs/default"
    initial_b: dict = None
    force: bool = False
    gate: str = field(default="", compare=False)

    # -- builders --

    def make_grid(self):
        return make_grid(self.grid["d"], self.grid["n"], self.grid["L"])

    def sim_params(self):
        p = self.params
        return SimParams(lam=p["lambda"], sigma=p["sigma"], alpha=p["alpha"], dt=p["dt"],
                         t_final=p["t_final"], scheme=p["scheme"], log_every=p["log_every"],
                         seed=p["seed"], dealias=p["dealias"])

    def make_noise(self, grid):
        modes = self.noise["modes"]
        if not modes:
            return zero_noise(grid)
        return build_noise(grid, [(m["mode"], m["amplitude"]) for m in modes], self.noise["convention"])

    def initial_state(self, grid, which="initial"):
        """Initial Field, or a State when resuming from a checkpoint."""
        spec = getattr(self, which)
        if spec is None:
            raise ConfigurationError("missing table", which)
        kind = spec["kind"]
        if kind == "zero":
            return Field.zeros(grid)
        if kind == "gaussian":
            return gaussian(grid, spec["width"], spec["amplitude"], spec.get("center"))
        if kind == "modes":
            v = sum(plane_wave(grid, tuple(m["mode"]), m["amplitude"]).values for m in spec["modes"])
            return Field(grid, v)
        from .checkpoint import load_checkpoint

        st = load_checkpoint(spec["path"])
        if not st.field.grid == grid:
            raise ConfigurationError("checkpoint grid differs from [grid]", which + ".path")
        return st

    def to_dict(self):
        doc = {"output": self.output, "grid": dict(self.grid), "params": dict(self.params),
               "noise": copy.deepcopy(self.noise), "initial": copy.deepcopy(self.initial),
               "experiment": {k: v for k, v in self.experiment.items() if v is not None}}
        if self.initial_b is not None:
            doc["initial_b"] = copy.deepcopy(self.initial_b)
        return doc


def parse_config(text, force=False):
    """Validate TOML ``text`` into a :class:`RunConfig` with defaults filled.

    The parameter gate runs on ``(d, sigma, alpha)``; a rejection raises a
    :class:`ConfigurationError` unless ``force`` is set, and the outcome is kept
    in ``RunConfig.gate`` either way.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigurationError(f"malformed config: {err}") from err
    return config_from_dict(doc, force)


def config_from_dict(doc, force=False):
    gt = _table(doc, "grid")
    grid = {
        "d": _get(gt, "grid", "d", _INT, required=True),
        "n": _get(gt, "grid", "n", _INT, required=True),
        "L": _get(gt, "grid", "L", _REAL, required=True),
    }
    try:
        make_grid(grid["d"], grid["n"], grid["L"])
    except (ValueError, DomainError) as err:
        raise ConfigurationError(str(err), "grid") from err

    pt = _table(doc, "params")
    params = {
        "lambda": _get(pt, "params", "lambda", _REAL, required=True),
        "sigma": _get(pt, "params", "sigma", _REAL, required=True),
        "alpha": _get(pt, "params", "alpha", _INT, required=True),
        "dt": _get(pt, "params", "dt", _REAL, required=True),
        "t_final": _get(pt, "params", "t_final", _REAL, required=True),
        "scheme": _get(pt, "params", "scheme", _STR, PARAM_DEFAULTS["scheme"]),
        "log_every": _get(pt, "params", "log_every", _INT, PARAM_DEFAULTS["log_every"]),
        "seed": _get(pt, "params", "seed", _INT, PARAM_DEFAULTS["seed"]),
        "dealias": _get(pt, "params", "dealias", _BOOL, PARAM_DEFAULTS["dealias"]),
    }
    if params["scheme"] not in SCHEMES:
        raise ConfigurationError(f"scheme must be one of {SCHEMES}", "params.scheme")

    nt = _table(doc, "noise", required=False)
    noise = {
        "convention": _get(nt, "noise", "convention", _STR, "two-quadrature"),
        "modes": _mode_list(nt.get("modes", []), "noise.modes", grid["d"]),
    }
    if noise["convention"] not in CONVENTIONS:
        raise ConfigurationError(f"convention must be one of {CONVENTIONS}", "noise.convention")

    initial = _initial(_table(doc, "initial", required=False), "initial", grid["d"])
    initial_b = None
    if "initial_b" in doc:
        initial_b = _initial(_table(doc, "initial_b"), "initial_b", grid["d"])

    et = _table(doc, "experiment", required=False)
    experiment = dict(EXPERIMENT_DEFAULTS)
    for k, v in et.items():
        default = EXPERIMENT_DEFAULTS.get(k)
        if isinstance(default, bool):
            v = _typed(v, _BOOL, f"experiment.{k}")
        elif isinstance(default, int):
            v = _typed(v, _INT, f"experiment.{k}")
        elif isinstance(default, float):
            v = _typed(v, _REAL, f"experiment.{k}")
        elif isinstance(default, list):
            if not isinstance(v, list):
                raise ConfigurationError("expected an array", f"experiment.{k}")
        experiment[k] = v
    output = doc.get("output", "runs/default")
    if not isinstance(output, str):
        raise ConfigurationError("expected a string", "output")

    cfg = RunConfig(grid, params, noise, initial, experiment, output, initial_b, bool(force))
    try:
        cfg.sim_params()
        cfg.make_noise(cfg.make_grid())
    except ConfigurationError:
        raise
    except (ValueError, DomainError) as err:
        raise ConfigurationError(str(err), "noise.modes") from err
    verdict = check_assumptions(grid["d"], params["sigma"], params["alpha"])
    cfg.gate = str(verdict)
    if not verdict.ok and not force:
        raise ConfigurationError(f"parameter gate rejected: {verdict.reason} (use --force to override)",
                                 "params.sigma")
    return cfg


def dump_config(cfg):
    """TOML text that :func:`parse_config` maps back to an equal RunConfig."""
    return tomli_w.dumps(cfg.to_dict())


def set_path(cfg, dotted, value):
    """Override ``table.key`` (or a top-level key) in place, re-validating the result."""
    doc = cfg.to_dict()
    parts = dotted.split(".")
    tgt = doc
    for p in parts[:-1]:
        tgt = tgt.setdefault(p, {})
    tgt[parts[-1]] = value
    return config_from_dict(doc, cfg.force)


def experiment_array(cfg, key, dtype=float):
    return np.asarray(cfg.experiment.get(key, []), dtype=dtype)
