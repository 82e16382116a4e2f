"""End-to-end acceptance checks on the shipped configs, one line per criterion."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from cocyclelab import shipped
from cocyclelab.cli import HANDLERS, clean
from cocyclelab.cocycle import expected_log_det, lyapunov_spectrum
from cocyclelab.config import load_file, resolve
from cocyclelab.schrodinger import SchrodingerSpec, chebyshev_trace_error, periodic_classification
from cocyclelab.symbolic import MarkovBase

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LOG2 = math.log(2.0)


def run_config(experiment, name, threads=None):
    cfg = resolve(load_file(CONFIGS / name), experiment, threads=threads)
    t0 = time.perf_counter()
    result, _ = HANDLERS[experiment](cfg)
    return result, time.perf_counter() - t0


def verdict(capsys, label, checks):
    """Print one PASS/FAIL line, then fail the test on any failed check."""
    failed = [k for k, ok in checks.items() if not ok]
    with capsys.disabled():
        status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        print(f"\n[acceptance] {label}: {status}")
    assert not failed, failed


def cramer_rate(a):
    # i.i.d. +-log2 steps: rate of the mean at a
    u = a / LOG2
    return 0.5 * ((1 + u) * math.log1p(u) + (1 - u) * math.log1p(-u))


def test_criterion_01_closed_form_lyapunov(capsys):
    checks = {}
    L = (math.log(3) + math.log(2)) / 2
    res, wall = run_config("lyapunov", "lyapunov_diagonal.yaml")
    e, se = res["exponents"], res["stderr"]
    checks["diagonal L1"] = abs(e[0] - L) <= 3 * se[0]
    checks["diagonal L2"] = abs(e[1] + L) <= 3 * se[1]
    checks["diagonal time"] = wall < 10
    res, wall = run_config("lyapunov", "lyapunov_scalar.yaml")
    checks["scalar L1"] = abs(res["exponents"][0]) <= 3 * res["stderr"][0]
    checks["scalar time"] = wall < 10
    res, wall = run_config("lyapunov", "lyapunov_constant.yaml")
    exact = math.log((3 + math.sqrt(5)) / 2)
    checks["trace-3 L1"] = abs(res["exponents"][0] - exact) <= 3 * max(res["stderr"][0], 1e-12)
    checks["trace-3 time"] = wall < 10
    verdict(capsys, "1 closed-form Lyapunov oracles", checks)


def test_criterion_02_volume_identity(capsys):
    checks = {}
    for name in shipped.CATALOG:
        A, base = shipped.load(name)
        est = lyapunov_spectrum(A, base, 100_000, 20240201, 20)
        sums = est.chain_estimates.sum(axis=1)
        se = sums.std(ddof=1) / math.sqrt(len(sums))
        checks[name] = abs(est.exponents.sum() - expected_log_det(A, base)) <= 3 * max(se, 1e-12)
    verdict(capsys, "2 volume identity on every shipped cocycle", checks)


def test_criterion_03_holonomy_certificate(capsys):
    res, _ = run_config("holonomy", "holonomy_depth2.yaml")
    checks = {
        "1000 pairs": res["n_pairs"] == 1000,
        "threshold is 2||A|| tol": res["threshold"] <= 2 * 1e-8 * max(
            np.linalg.norm(g, 2) for g in shipped.load("depth_two_bunched")[0].gens) + 1e-20,
        "equivariance residual": res["max_residual"] <= res["threshold"],
        "Cauchy ratios": res["max_cauchy_ratio"] <= 1.0,
    }
    verdict(capsys, "3 holonomy certificate", checks)


def test_criterion_04_conjugacy_invariance(capsys):
    res, _ = run_config("reduce", "reduce_future.yaml")
    diff, comb = res["difference"][0], res["combined_stderr"][0]
    verdict(capsys, "4 conjugacy invariance", {"L1 within 3 combined stderr": abs(diff) <= 3 * comb})


def test_criterion_05_kappa(capsys):
    t0 = time.perf_counter()
    rot, _ = run_config("kappa", "kappa_rotations.yaml")
    typ, _ = run_config("kappa", "kappa_typical.yaml")
    wall = time.perf_counter() - t0
    checks = {
        "rotations exactly 1": all(r["kappa"] == 1.0 for r in rot["table"]),
        "typical contracts for some n <= 8": typ["min_kappa"] < 1 and typ["argmin"]["n"] <= 8,
        "grid 720": typ["grid_size"] == 720,
        "submultiplicative within 5%": typ["submultiplicative_ratio"] <= 1.05,
        "time": wall < 60,
    }
    verdict(capsys, "5 kappa contraction", checks)


def test_criterion_06_base_operator(capsys):
    res, _ = run_config("operator", "operator_chain.yaml")
    m = res["symbol_marginal"]
    checks = {
        "stationary": abs(m[0] - 2 / 3) < 1e-10 and abs(m[1] - 1 / 3) < 1e-10,
        "second eigenvalue": abs(res["second_eigenvalue_modulus"] - 0.7) < 1e-6,
        "fitted mixing rate": abs(res["mixing_rate"] - 0.7) < 1e-6,
    }
    verdict(capsys, "6 base operator spectrum", checks)


def test_criterion_07_ldt(capsys):
    t0 = time.perf_counter()
    sc, _ = run_config("ldt", "ldt_scalar.yaml")
    typ, _ = run_config("ldt", "ldt_typical.yaml")
    wall = time.perf_counter() - t0
    oracle = cramer_rate(0.2)
    slope = sc["ldt"]["slope_n"][0]
    center = typ["uniformity"]["center_rate"][0]
    perturbed = [r[0] for r in typ["uniformity"]["rates"] if r is not None]
    checks = {
        "scalar rate within 30% of Cramer": abs(slope - oracle) <= 0.3 * oracle,
        "typical affine": typ["ldt"]["r_squared"][0] > 0.9,
        "typical positive slope": typ["ldt"]["slope_n"][0] > 0,
        "five perturbations": len(perturbed) == 5,
        "uniform within factor 3": min(perturbed) >= center / 3 and min(perturbed) <= 3 * center,
        "time": wall < 300,
    }
    verdict(capsys, "7 large deviations", checks)


def test_criterion_08_clt(capsys):
    t0 = time.perf_counter()
    sc, _ = run_config("clt", "clt_scalar.yaml")
    typ, _ = run_config("clt", "clt_typical.yaml")
    wall = time.perf_counter() - t0
    checks = {
        "scalar sigma_GL exact": abs(sc["sigma_gl"] ** 2 - LOG2**2) < 1e-10,
        "scalar sigma_hat within 5%": abs(sc["sigma_hat"] ** 2 / LOG2**2 - 1) <= 0.05,
        "typical KS at 5%": typ["ks"] < typ["ks_critical"] and typ["ks_pvalue"] > 0.05,
        "typical sigma_GL positive": typ["sigma_gl"] > 0,
        "time": wall < 300,
    }
    verdict(capsys, "8 central limit theorem", checks)


def test_criterion_09_holder(capsys):
    tilt, _ = run_config("holder", "holder_scalar_tilt.yaml")
    typ, _ = run_config("holder", "holder_typical.yaml")
    checks = {
        "scalar tilt theta": tilt["theta"] is not None and 0.9 <= tilt["theta"] <= 1.1,
        "typical theta": typ["theta"] is not None and 0 < typ["theta"] <= 1.2,
        "typical R2": typ["r_squared"] is not None and typ["r_squared"] > 0.9,
    }
    verdict(capsys, "9 Holder continuity", checks)


def test_criterion_10_ldp(capsys):
    sc, _ = run_config("ldp", "ldp_scalar.yaml")
    typ, _ = run_config("ldp", "ldp_typical.yaml")
    t = np.asarray(sc["t"])
    c = np.asarray(sc["c"])
    checks = {
        "c(0) = 0": sc["c_at_zero"] == 0.0 and typ["c_at_zero"] == 0.0,
        "convex": sc["min_second_difference"] >= -1e-9 and typ["min_second_difference"] >= -1e-9,
        "scalar cosh": np.max(np.abs(np.exp(c) - np.cosh(t * LOG2))) <= 1e-8,
    }
    verdict(capsys, "10 large deviation principle", checks)


def test_criterion_11_schrodinger(capsys):
    tr, _ = run_config("schrodinger-trace", "schrodinger_trace.yaml")
    scan, _ = run_config("schrodinger-scan", "schrodinger_scan.yaml")
    free = max(chebyshev_trace_error(E, 100) for E in np.linspace(-1.99, 1.99, 81))
    # constant elliptic matrices: rotation by 2 pi p / q via E - v = 2 cos(2 pi p / q)
    coin = MarkovBase.full_shift(2)
    table_ok = True
    for q in range(1, 25):
        for p in range(q):
            if math.gcd(p, q) != 1:
                continue
            trace = 2 * math.cos(2 * math.pi * p / q)
            spec = SchrodingerSpec(np.array([0.0, 0.0]), 2, 1, 1.0, trace)
            row = periodic_classification(spec, coin, 1).rows[0]
            small = q in (1, 2, 3, 4, 6, 8, 12)
            table_ok &= row.excluded == small and (not small or row.order == q)
    checks = {
        "free traces": free < 1e-10,
        "trace slope": 1.8 <= tr["slope"] <= 2.2,
        "all cells positive": scan["all_positive"],
        "excluded table": table_ok,
    }
    verdict(capsys, "11 Schrodinger", checks)


SMALL = {
    "lyapunov": {"cocycle": {"shipped": "diagonal"}, "params": {"n": 2000, "chains": 5}},
    "ldt": {"cocycle": {"shipped": "typical_sl2"},
            "params": {"eps": [0.3], "n": [10, 20, 30], "N": 3000, "truth_chains": 5,
                       "uniformity": {"radius": 0.01, "n_perturb": 2}}},
    "clt": {"cocycle": {"shipped": "typical_sl2"}, "params": {"n": 200, "N": 3000, "grid": 90}},
    "holder": {"cocycle": {"shipped": "typical_sl2"},
               "params": {"direction": [[0.0, 1.0], [0.0, 0.0]], "scales": [0.01, 0.1], "n": 2000,
                          "chains": 5}},
    "holonomy": {"cocycle": {"shipped": "depth_two_bunched"}, "params": {"pairs": 20}},
    "reduce": {"cocycle": {"shipped": "future_dependent"}, "params": {"n": 2000, "chains": 5}},
    "typicality": {"cocycle": {"shipped": "typical_sl2"}},
    "kappa": {"cocycle": {"shipped": "typical_sl2"}, "params": {"n": [1, 2], "grid": 90}},
    "operator": {"base": {"chain": [[0.9, 0.1], [0.2, 0.8]]}, "params": {"m_prime": 5}},
    "ldp": {"cocycle": {"shipped": "typical_sl2"}, "params": {"t": [-0.5, 0.0, 0.5], "grid": 90}},
    "schrodinger-scan": {"schrodinger": {"potential": [1.0, 2.0]},
                         "params": {"energies": [0.0, 0.5, 1.0], "lambdas": [0.3], "n": 3000,
                                    "chains": 5}},
    "schrodinger-trace": {"schrodinger": {"potential": [1.0, 2.0], "energy": 0.7}},
    "schrodinger-periodic": {"schrodinger": {"potential": [1.0, 2.0], "coupling": 1.0, "energy": 0.5},
                             "params": {"max_period": 4}},
}


def test_criterion_12_determinism(capsys):
    checks = {}
    for experiment, raw in SMALL.items():
        outs = []
        for threads in (1, 1, 3):
            cfg = resolve({"seed": 77, **raw}, experiment, threads=threads)
            outs.append(clean(HANDLERS[experiment](cfg)))
        checks[experiment] = outs[0] == outs[1] == outs[2]
    assert set(SMALL) == set(HANDLERS)
    verdict(capsys, "12 determinism across reruns and threads", checks)
