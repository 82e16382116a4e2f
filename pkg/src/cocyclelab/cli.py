"""Command line runner.

``cocyclelab <experiment> CONFIG [--seed S] [--out report.json] [--csv table.csv] [--threads K]``

Exit codes: 0 success, 2 invalid input or config, 3 budget or numerical
failure, 4 command line usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cocycle import expected_log_det, lyapunov_spectrum
from .config import ExperimentConfig, expand_range, load_file, resolve
from .errors import BudgetError, CocycleLabError, NumericalError, ValidationError
from .holonomy import bunching_constants, equivariance_check, reduce_to_past
from .markov_operator import (ProjectiveGrid, build_base_operator, build_fiber_operator, holder_probes,
                              kappa_alpha, lasota_yorke_check, ldp_rate_function, mixing_rate,
                              stationary_measure)
from .schrodinger import energy_grid, periodic_classification, positivity_scan, trace_formula_check
from .statistics import ScalarObservable, clt_experiment, holder_fit, ldt_experiment, ldt_uniformity
from .typicality import find_typical_witness, verify

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# handlers: each returns (result dict, (header, rows) or None)


def _grid(cfg: ExperimentConfig, d: int):
    size = cfg.params.get("grid")
    return None if size is None else ProjectiveGrid.build(d, int(size))


def run_lyapunov(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    est = lyapunov_spectrum(A, base, int(p["n"]), cfg.seed, int(p["chains"]), cfg.threads, p["warmup"])
    sums = est.chain_estimates.sum(axis=1)
    sum_se = float(sums.std(ddof=1) / math.sqrt(len(sums))) if len(sums) > 1 else math.nan
    eld = expected_log_det(A, base)
    result = est.to_dict()
    result.update({
        "sum": float(est.exponents.sum()),
        "sum_stderr": sum_se,
        "expected_log_det": eld,
        "volume_residual": float(est.exponents.sum() - eld),
    })
    rows = [(k + 1, float(v), float(s)) for k, (v, s) in enumerate(zip(est.exponents, est.stderr))]
    return result, (("index", "exponent", "stderr"), rows)


def _ldt_table(rep):
    rows = []
    for i, e in enumerate(rep.epsilon):
        for j, n in enumerate(rep.n):
            rows.append((float(e), int(n), float(rep.frequencies[i, j]), float(rep.stderr[i, j]),
                         bool(rep.usable[i, j])))
    return ("epsilon", "n", "frequency", "stderr", "usable"), rows


def run_ldt(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    obs = None
    if p["observable"] is not None:
        spec = p["observable"]
        if not isinstance(spec, dict) or "values" not in spec:
            raise ValidationError("observable needs values (and optionally window)")
        obs = ScalarObservable(np.asarray(spec["values"], float), base.n_symbols, int(spec.get("window", 1)))
    eps = expand_range(p["eps"], log=False)
    ns = [int(n) for n in p["n"]]
    result = {}
    if p["uniformity"] is not None:
        u = dict(p["uniformity"])
        uni = ldt_uniformity(A, base, float(u.get("radius", 0.01)), int(u.get("n_perturb", 5)), eps, ns,
                             int(p["N"]), cfg.seed, p["method"], cfg.threads, bool(u.get("halving", False)))
        rep = uni.center
        if obs is not None:
            rep = ldt_experiment(A, base, eps, ns, int(p["N"]), cfg.seed, p["method"], obs,
                                 threads=cfg.threads, truth_chains=int(p["truth_chains"]))
        result["uniformity"] = uni.to_dict()
    else:
        rep = ldt_experiment(A, base, eps, ns, int(p["N"]), cfg.seed, p["method"], obs,
                             threads=cfg.threads, truth_chains=int(p["truth_chains"]))
    result = {"ldt": rep.to_dict(), **result}
    return result, _ldt_table(rep)


def run_clt(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    rep = clt_experiment(A, base, p["direction"], int(p["n"]), int(p["N"]), cfg.seed, grid=_grid(cfg, A.d),
                         m_prime=p["m_prime"], threads=cfg.threads, stability=bool(p["stability"]))
    rows = [(float(z),) for z in rep.samples]
    return rep.to_dict(), (("sample",), rows)


def run_holder(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    direction = 1.0 if p["direction"] == "scalar" else np.asarray(p["direction"], float)
    scales = expand_range(p["scales"])
    fit = holder_fit(A, base, direction, scales, int(p["n"]), cfg.seed, int(p["chains"]), cfg.threads)
    rows = [(float(s), float(d), float(v), float(e), bool(u))
            for s, d, v, e, u in zip(fit.scales, fit.distances, fit.differences, fit.stderr, fit.used)]
    return fit.to_dict(), (("scale", "distance", "difference", "stderr", "used"), rows)


def run_holonomy(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    consts = bunching_constants(A, base)
    rep = equivariance_check(A, base, int(p["pairs"]), cfg.seed, float(p["tol"]), p["kind"], consts)
    result = rep.to_dict()
    result["constants"] = {"tau": consts.tau, "C1": consts.C1, "N": consts.N, "alpha": consts.alpha,
                           "beta": consts.beta, "C_holder": consts.C_holder, "n_probes": consts.n_probes}
    rows = [(k, v) for k, v in result.items() if not isinstance(v, dict)]
    return result, (("key", "value"), rows)


def run_reduce(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    red = reduce_to_past(A, base)
    n, chains = int(p["n"]), int(p["chains"])
    est = lyapunov_spectrum(A, base, n, cfg.seed, chains, cfg.threads)
    est_s = lyapunov_spectrum(red.cocycle, base, n, cfg.seed, chains, cfg.threads)
    diff = est_s.exponents - est.exponents
    comb = np.sqrt(est.stderr**2 + est_s.stderr**2)
    result = {
        "reduced": {"depth": red.cocycle.depth, "lead": red.cocycle.lead,
                    "matrices": red.cocycle.gens.tolist()},
        "original_exponents": est.to_dict(),
        "reduced_exponents": est_s.to_dict(),
        "difference": [float(x) for x in diff],
        "combined_stderr": [float(x) for x in comb],
        "within_3_stderr": bool(np.all(np.abs(diff) <= 3 * comb)),
    }
    rows = [("original", k + 1, float(v), float(s)) for k, (v, s) in enumerate(zip(est.exponents, est.stderr))]
    rows += [("reduced", k + 1, float(v), float(s)) for k, (v, s) in enumerate(zip(est_s.exponents, est_s.stderr))]
    return result, (("cocycle", "index", "exponent", "stderr"), rows)


def _word(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(c) for c in value)
    return tuple(int(c) for c in value)


def run_typicality(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    if p["block"] is not None:
        cert = verify(A, _word(p["block"]), _word(p["bridge"] or ()), base)
    else:
        cert = find_typical_witness(A, base, int(p["search_budget"]), int(p["max_period"]), int(p["max_bridge"]))
    if cert is None:
        return {"found": False}, (("key", "value"), [("found", False)])
    result = {"found": True, "ok": cert.ok, **cert.to_dict()}
    rows = [(k, v) for k, v in result.items() if not isinstance(v, (dict, list))]
    return result, (("key", "value"), rows)


def run_kappa(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    grid = _grid(cfg, A.d) or ProjectiveGrid.build(A.d)
    ns = sorted({int(n) for n in p["n"]})
    table, rows = [], []
    values: dict = {}
    for alpha in p["alphas"]:
        for n in ns:
            rep = kappa_alpha(A, base, float(alpha), n, grid, p["m_prime"])
            values[(float(alpha), n)] = rep.value
            table.append(rep.to_dict())
            rows.append((float(alpha), n, rep.value))
    sub = [int(k) for k in p["submultiplicative"]]
    worst = 0.0
    for alpha in p["alphas"]:
        for a in sub:
            for b in sub:
                key = (float(alpha), a + b)
                if key in values and (float(alpha), a) in values and (float(alpha), b) in values:
                    worst = max(worst, values[key] / (values[(float(alpha), a)] * values[(float(alpha), b)]))
    best = min(table, key=lambda r: r["kappa"])
    result = {"table": table, "min_kappa": best["kappa"], "argmin": {"alpha": best["alpha"], "n": best["n"]},
              "contracting": best["kappa"] < 1, "submultiplicative_ratio": worst,
              "grid_size": grid.size}
    return result, (("alpha", "n", "kappa"), rows)


def run_operator(cfg):
    p = cfg.params
    base = cfg.base
    if p["kind"] == "base":
        op = build_base_operator(base, p["m_prime"])
    elif p["kind"] == "fiber":
        if cfg.cocycle is None:
            raise ValidationError("fiber operator needs a cocycle")
        op = build_fiber_operator(cfg.cocycle, base, p["m_prime"], _grid(cfg, cfg.cocycle.d))
    else:
        raise ValidationError("operator kind must be 'base' or 'fiber'")
    st = stationary_measure(op, tol=1e-14)
    probes = holder_probes(op, int(p["probes"]), float(p["alpha"]), cfg.seed)
    mix = mixing_rate(op, probes, int(p["nmax"]), st.measure)
    result = {
        "kind": p["kind"],
        "n_states": op.n_states,
        "stationary_residual": st.residual,
        "mixing_rate": mix.sigma0,
        "mixing_r_squared": mix.r_squared,
        "mixing_fit_window": list(mix.fit_window),
    }
    if p["kind"] == "base":
        result["stationary"] = [float(x) for x in st.measure]
        last = op.chain.words[:, -1]
        result["symbol_marginal"] = [float(st.measure[last == a].sum()) for a in range(base.n_symbols)]
        ev = np.sort(np.abs(np.linalg.eigvals(op.matrix.toarray())))[::-1]
        result["second_eigenvalue_modulus"] = float(ev[1]) if len(ev) > 1 else 0.0
    else:
        result["fiber_concentration"] = st.concentration
        result["dominated"] = st.dominated
    if p["lasota_yorke"]:
        ly = lasota_yorke_check(op, float(p["alpha"]), probes=probes)
        result["lasota_yorke"] = {"sigma": ly.sigma, "C": ly.C, "weak": ly.weak}
    rows = [(k, v) for k, v in result.items() if not isinstance(v, (dict, list))]
    return result, (("key", "value"), rows)


def run_ldp(cfg):
    p = cfg.params
    A, base = cfg.cocycle, cfg.base
    t = expand_range(p["t"], log=False)
    res = ldp_rate_function(A, base, _grid(cfg, A.d), t, p["m_prime"])
    k0 = [i for i, x in enumerate(res.t) if x == 0]
    result = {
        "t": [float(x) for x in res.t],
        "c": [float(x) for x in res.c],
        "eps": [float(x) for x in res.eps],
        "c_star": [float(x) for x in res.c_star],
        "center": res.center,
        "c_at_zero": float(res.c[k0[0]]) if k0 else None,
        "min_second_difference": float(np.min(res.second_differences())) if len(res.t) > 2 else None,
        "derivative_at_zero": res.derivative_at_zero() if k0 else None,
        "cell_diameter": res.cell_diameter,
    }
    return result, (("t", "c"), [(float(a), float(b)) for a, b in zip(res.t, res.c)])


def run_scan(cfg):
    p = cfg.params
    E = p["energies"]
    energies = energy_grid(float(E.get("delta", 0.5)), float(E.get("step", 0.05))) if isinstance(E, dict) \
        else np.asarray(E, float)
    lambdas = expand_range(p["lambdas"])
    scan = positivity_scan(cfg.schrodinger, cfg.base, energies, lambdas, int(p["n"]), cfg.seed,
                           int(p["chains"]), threads=cfg.threads)
    return scan.to_dict(), (("E", "lambda", "L1", "stderr", "positive_flag"), list(scan.rows()))


def run_trace(cfg):
    p = cfg.params
    tc = trace_formula_check(cfg.schrodinger, _word(p["word"]), expand_range(p["lambdas"]))
    rows = [(float(l), float(r), tc.slope) for l, r in zip(tc.lambdas, tc.residuals)]
    return tc.to_dict(), (("lambda", "residual", "slope"), rows)


def run_periodic(cfg):
    table = periodic_classification(cfg.schrodinger, cfg.base, int(cfg.params["max_period"]))
    rows = [("".join(map(str, r.block)), r.trace, r.kind, r.angle, r.excluded, r.order) for r in table.rows]
    return table.to_dict(), (("block", "trace", "class", "angle", "excluded", "order"), rows)


HANDLERS = {
    "lyapunov": run_lyapunov,
    "ldt": run_ldt,
    "clt": run_clt,
    "holder": run_holder,
    "holonomy": run_holonomy,
    "reduce": run_reduce,
    "typicality": run_typicality,
    "kappa": run_kappa,
    "operator": run_operator,
    "ldp": run_ldp,
    "schrodinger-scan": run_scan,
    "schrodinger-trace": run_trace,
    "schrodinger-periodic": run_periodic,
}


# --------------------------------------------------------------------------
# serialization


def clean(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def build_report(cfg: ExperimentConfig, result: dict, wall: float) -> dict:
    return {
        "artifact": "cocyclelab",
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": clean(cfg.echo),
        "result": clean(result),
        "timestamp": {
            "utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "wall_time_s": round(wall, 6),
        },
    }


def write_csv(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])


def run(experiment: str, config_path: str | None, seed: int | None = None, out: str | None = None,
        csv_path: str | None = None, threads: int | None = None, stream=None) -> int:
    """Run one experiment; returns the exit status."""
    stream = sys.stdout if stream is None else stream
    try:
        t0 = time.perf_counter()
        raw = load_file(config_path) if config_path else {}
        cfg = resolve(raw, experiment, seed, threads, out, csv_path)
        result, table = HANDLERS[experiment](cfg)
        report = build_report(cfg, result, time.perf_counter() - t0)
        text = json.dumps(report, indent=2, allow_nan=False) + "\n"
        if cfg.output.get("json"):
            Path(cfg.output["json"]).write_text(text)
        else:
            stream.write(text)
        if cfg.output.get("csv") and table is not None:
            write_csv(cfg.output["csv"], *table)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BudgetError, NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CocycleLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="YAML config file")
    p.add_argument("--config", dest="config_flag", metavar="PATH", help="YAML config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="write the table of the experiment as CSV")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cocyclelab", description="Linear cocycle experiments over Markov shifts.")
    parser.add_argument("--version", action="version", version=f"cocyclelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        if name.startswith("schrodinger"):
            continue
        _add_common(sub.add_parser(name, help=f"run the {name} experiment"))
    sch = sub.add_parser("schrodinger", help="Schrödinger cocycle experiments")
    sch_sub = sch.add_subparsers(dest="mode", required=True)
    for mode in ("scan", "trace", "periodic"):
        _add_common(sch_sub.add_parser(mode, help=f"schrodinger {mode}"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config and args.config_flag:
            raise UsageError("give the config either as a positional argument or with --config")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    experiment = args.command if args.command != "schrodinger" else f"schrodinger-{args.mode}"
    return run(experiment, args.config or args.config_flag, args.seed, args.out, args.csv, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
