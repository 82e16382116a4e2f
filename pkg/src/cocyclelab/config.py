"""Experiment configuration files.

A config is a YAML mapping::

    seed: 7                      # optional; generated and recorded when absent
    threads: 1
    base: {bernoulli: [0.5, 0.5]}
    cocycle: {matrices: [[[3, 0], [0, 0.333]], [[2, 0], [0, 0.5]]]}
    params: {n: 100000}
    output: {json: report.json, csv: table.csv}

``base`` accepts ``shipped``, ``bernoulli``, ``chain`` or
``{memory, transitions}``; ``cocycle`` accepts ``shipped``, ``matrices``
(with ``depth``, ``lead``, ``alpha``), ``constant`` or ``scalar``.
Schrödinger experiments take a ``schrodinger`` block instead of ``cocycle``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import rng as _rng
from . import shipped
from .cocycle import MatrixCocycle
from .errors import ValidationError
from .schrodinger import SchrodingerSpec
from .symbolic import MarkovBase

TOP_KEYS = ("experiment", "seed", "threads", "base", "cocycle", "schrodinger", "params", "output")

DEFAULTS: dict[str, dict] = {
    "lyapunov": {"n": 100_000, "chains": 20, "warmup": None},
    "ldt": {"eps": [0.1], "n": [20, 40, 60, 80, 100], "N": 100_000, "method": "auto",
            "observable": None, "uniformity": None, "truth_chains": 20},
    "clt": {"n": 10_000, "N": 10_000, "direction": None, "grid": None, "m_prime": None,
            "stability": True},
    "holder": {"direction": "scalar", "scales": {"min": 1e-3, "max": 1e-1, "count": 7},
               "n": 100_000, "chains": 20},
    "holonomy": {"kind": "s", "pairs": 1000, "tol": 1e-8},
    "reduce": {"n": 100_000, "chains": 20},
    "typicality": {"search_budget": 2000, "max_period": 6, "max_bridge": 6, "block": None,
                   "bridge": None},
    "kappa": {"alphas": [0.25, 0.5, 1.0], "n": [1, 2, 3, 4, 5, 6, 7, 8], "grid": None,
              "m_prime": None, "submultiplicative": [1, 2, 3]},
    "operator": {"kind": "base", "m_prime": None, "grid": None, "alpha": 1.0, "nmax": 40,
                 "lasota_yorke": True, "probes": 20},
    "ldp": {"t": {"min": -1.0, "max": 1.0, "count": 41}, "grid": None, "m_prime": None},
    "schrodinger-scan": {"energies": {"delta": 0.5, "step": 0.05},
                         "lambdas": {"min": 1e-3, "max": 1e-1, "count": 5}, "n": 100_000,
                         "chains": 20},
    "schrodinger-trace": {"word": "01101", "lambdas": {"min": 1e-4, "max": 1e-2, "count": 9}},
    "schrodinger-periodic": {"max_period": 6},
}

EXPERIMENTS = tuple(DEFAULTS)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    seed_generated: bool
    threads: int
    base: MarkovBase
    cocycle: MatrixCocycle | None
    schrodinger: SchrodingerSpec | None
    params: dict
    output: dict
    echo: dict


def load_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed config {path}: {exc}".splitlines()[0]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    return raw


def _matrix_list(value, what: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} must be finite")
    return arr


def parse_base(spec) -> MarkovBase:
    if not isinstance(spec, dict) or len(spec) == 0:
        raise ValidationError("base must be a mapping such as {bernoulli: [0.5, 0.5]}")
    if "shipped" in spec:
        name = spec["shipped"]
        if name not in shipped.BASES:
            raise ValidationError(f"unknown shipped base {name!r}; choose from {sorted(shipped.BASES)}")
        return shipped.BASES[name]()
    if "bernoulli" in spec:
        return MarkovBase.bernoulli(_matrix_list(spec["bernoulli"], "bernoulli probabilities"))
    if "chain" in spec:
        return MarkovBase.chain(_matrix_list(spec["chain"], "transition matrix"))
    if "transitions" in spec:
        trans = _matrix_list(spec["transitions"], "transitions")
        if trans.ndim != 2:
            raise ValidationError("transitions must be a matrix")
        return MarkovBase(trans.shape[1], int(spec.get("memory", 1)), trans)
    raise ValidationError(f"unrecognized base keys {sorted(spec)}")


def parse_cocycle(spec, base: MarkovBase | None):
    """Return ``(cocycle, base_from_shipped_or_None)``."""
    if not isinstance(spec, dict) or len(spec) == 0:
        raise ValidationError("cocycle must be a mapping such as {shipped: diagonal}")
    if "shipped" in spec:
        A, b = shipped.load(spec["shipped"])
        return A, b
    n_symbols = int(spec.get("n_symbols", base.n_symbols if base is not None else 2))
    alpha = float(spec.get("alpha", 1.0))
    if "scalar" in spec:
        vals = _matrix_list(spec["scalar"], "scalar generators").ravel()
        return MatrixCocycle(vals.reshape(-1, 1, 1), n_symbols, int(spec.get("depth", 1)),
                             int(spec.get("lead", 0)), alpha), None
    if "constant" in spec:
        return MatrixCocycle.constant(_matrix_list(spec["constant"], "constant matrix"), n_symbols, alpha), None
    if "matrices" in spec:
        gens = _matrix_list(spec["matrices"], "matrices")
        return MatrixCocycle(gens, n_symbols, int(spec.get("depth", 1)), int(spec.get("lead", 0)), alpha), None
    raise ValidationError(f"unrecognized cocycle keys {sorted(spec)}")


def parse_schrodinger(spec, base: MarkovBase) -> SchrodingerSpec:
    if not isinstance(spec, dict) or "potential" not in spec:
        raise ValidationError("schrodinger block needs a potential")
    pot = _matrix_list(spec["potential"], "potential").ravel()
    return SchrodingerSpec(pot, base.n_symbols, int(spec.get("depth", 1)),
                           float(spec.get("coupling", 0.0)), float(spec.get("energy", 0.0)))


def _merge_params(experiment: str, given) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ValidationError("params must be a mapping")
    defaults = DEFAULTS[experiment]
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValidationError(f"unknown {experiment} parameters: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def expand_range(value, log: bool = True) -> list[float]:
    """A list, or ``{min, max, count}`` expanded (log-spaced unless ``log`` is false)."""
    if isinstance(value, dict):
        try:
            lo, hi, k = float(value["min"]), float(value["max"]), int(value["count"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError("range must have numeric min, max and count") from None
        if k < 1:
            raise ValidationError("range count must be positive")
        if log:
            if lo <= 0 or hi <= 0:
                raise ValidationError("log-spaced range needs positive bounds")
            return [float(x) for x in np.logspace(math.log10(lo), math.log10(hi), k)]
        return [float(x) for x in np.linspace(lo, hi, k)]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(x) for x in value]


def _base_echo(base: MarkovBase) -> dict:
    return {"n_symbols": base.n_symbols, "memory": base.memory, "transitions": base.trans.tolist()}


def _cocycle_echo(A: MatrixCocycle) -> dict:
    return {"n_symbols": A.n_symbols, "depth": A.depth, "lead": A.lead, "alpha": A.alpha,
            "matrices": A.gens.tolist()}


def resolve(raw: dict, experiment: str, seed: int | None = None, threads: int | None = None,
            out: str | None = None, csv: str | None = None) -> ExperimentConfig:
    """Validate a raw config and build the objects it names; flags override the file."""
    unknown = sorted(set(raw) - set(TOP_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    if experiment not in DEFAULTS:
        raise ValidationError(f"unknown experiment {experiment!r}")
    if raw.get("experiment") not in (None, experiment):
        raise ValidationError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    file_seed = raw.get("seed")
    chosen = seed if seed is not None else file_seed
    generated = chosen is None
    try:
        seed_v = _rng.resolve_seed(None if chosen is None else int(chosen))
        threads_v = int(threads if threads is not None else raw.get("threads", 1))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad seed or threads: {exc}") from None
    if threads_v < 1:
        raise ValidationError("threads must be at least 1")
    base = parse_base(raw["base"]) if raw.get("base") is not None else None
    A = spec = None
    if experiment.startswith("schrodinger"):
        if base is None:
            base = shipped.schrodinger_base()
        spec = parse_schrodinger(raw.get("schrodinger"), base)
    elif experiment == "operator" and raw.get("cocycle") is None:
        if base is None:
            raise ValidationError("operator experiment needs a base")
    else:
        if raw.get("cocycle") is None:
            raise ValidationError(f"{experiment} experiment needs a cocycle")
        A, shipped_base = parse_cocycle(raw["cocycle"], base)
        if base is None:
            if shipped_base is None:
                raise ValidationError("config needs a base")
            base = shipped_base
        if A.n_symbols != base.n_symbols:
            raise ValidationError(f"cocycle has {A.n_symbols} symbols but the base has {base.n_symbols}")
    params = _merge_params(experiment, raw.get("params"))
    output = dict(raw.get("output") or {})
    if not set(output) <= {"json", "csv"}:
        raise ValidationError("output accepts only json and csv paths")
    if out is not None:
        output["json"] = out
    if csv is not None:
        output["csv"] = csv
    echo = {"experiment": experiment, "seed": seed_v, "seed_generated": generated, "threads": threads_v,
            "base": _base_echo(base)}
    if A is not None:
        echo["cocycle"] = _cocycle_echo(A)
    if spec is not None:
        echo["schrodinger"] = {"potential": spec.potential.tolist(), "depth": spec.depth,
                               "coupling": spec.coupling, "energy": spec.energy}
    echo["params"] = params
    echo["output"] = output
    return ExperimentConfig(experiment, seed_v, generated, threads_v, base, A, spec, params, output, echo)
