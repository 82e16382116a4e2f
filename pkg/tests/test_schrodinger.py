import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclelab.cocycle import lyapunov_spectrum
from cocyclelab.errors import ValidationError
from cocyclelab.schrodinger import (EXCLUDED_TRACES, PasturFigotinFrame, SchrodingerSpec, build_schrodinger,
                                    chebyshev_trace_error, classify_trace, conjugated_cocycle,
                                    cyclic_product, energy_grid, periodic_classification,
                                    positivity_scan, schrodinger_matrix, trace_formula_check)
from cocyclelab.symbolic import MarkovBase

COIN = MarkovBase.full_shift(2)
SPEC = SchrodingerSpec(np.array([1.0, 2.0]), 2)

energies = st.floats(-1.99, 1.99)


@given(energies)
def test_free_traces_are_chebyshev(E):
    assert chebyshev_trace_error(E, 100) < 1e-10


@given(energies, st.floats(0.0, 1.0))
def test_conjugation_identity(E, lam):
    spec = SPEC.at(E, lam)
    fr = PasturFigotinFrame.build(spec.kappa)
    np.testing.assert_allclose(fr.M @ fr.M_inv, np.eye(2), atol=1e-12)
    direct = fr.M @ build_schrodinger(spec).gens @ fr.M_inv
    np.testing.assert_allclose(conjugated_cocycle(spec).gens, direct, atol=1e-9 / math.sin(spec.kappa))


def test_free_conjugate_is_rotation():
    spec = SPEC.at(0.7, 0.0)
    g = conjugated_cocycle(spec).gens
    k = math.acos(0.35)
    np.testing.assert_allclose(g[0], [[math.cos(k), -math.sin(k)], [math.sin(k), math.cos(k)]], atol=1e-15)


def test_elliptic_frame_needs_small_energy():
    with pytest.raises(ValidationError, match="elliptic"):
        SPEC.at(2.0, 0.1).kappa
    with pytest.raises(ValidationError):
        conjugated_cocycle(SPEC.at(-2.5, 0.1))


def test_schrodinger_is_sl2():
    g = build_schrodinger(SPEC.at(0.3, 0.7)).gens
    np.testing.assert_allclose(np.linalg.det(g), 1.0)


def test_trace_formula_slope_and_first_order():
    spec = SPEC.at(0.7)
    tc = trace_formula_check(spec, (0, 1, 1, 0, 1), np.logspace(-4, -2, 9))
    assert 1.8 <= tc.slope <= 2.2
    # independent first-order coefficient: central difference of the unconjugated trace
    h = 1e-5
    codes = [1, 0, 1, 1, 0]  # windows of the periodic point, x_0 = last block symbol first
    trp = np.trace(cyclic_product(build_schrodinger(spec.at(coupling=h)).gens, codes))
    trm = np.trace(cyclic_product(build_schrodinger(spec.at(coupling=-h)).gens, codes))
    assert tc.first_order == pytest.approx((trp - trm) / (2 * h), rel=1e-6)


def test_trace_formula_rejects_negative_coupling():
    with pytest.raises(ValidationError):
        trace_formula_check(SPEC.at(0.5), (0, 1), [-0.1])


def brute_order(tr):
    R = np.array([[math.cos(math.acos(tr / 2)), -math.sin(math.acos(tr / 2))],
                  [math.sin(math.acos(tr / 2)), math.cos(math.acos(tr / 2))]])
    P = np.eye(2)
    for k in range(1, 25):
        P = R @ P
        if np.allclose(P, np.eye(2), atol=1e-9):
            return k
    return None


def test_excluded_table_matches_rotation_orders():
    expected = {0.0, 1.0, -1.0, math.sqrt(2), -math.sqrt(2), math.sqrt(3), -math.sqrt(3)}
    elliptic = {v for v, _ in EXCLUDED_TRACES if abs(v) < 2}
    assert {round(v, 12) for v in elliptic} == {round(v, 12) for v in expected}
    for v, order in EXCLUDED_TRACES:
        kind, _, excluded, got = classify_trace(v)
        assert excluded and got == order
        if abs(v) < 2:
            assert kind == "elliptic" and brute_order(v) == order
    for tr in (0.3, -1.2, 1.9):
        kind, _, excluded, _ = classify_trace(tr)
        assert kind == "elliptic" and not excluded
        assert brute_order(tr) is None
    assert classify_trace(2.5)[0] == "hyperbolic"


def test_periodic_table_for_constant_elliptic_matrix():
    # constant potential: S^q has trace 2 cos(q theta) for E - lam v = 2 cos theta
    spec = SchrodingerSpec(np.array([0.5, 0.5]), 2, 1, 1.0, 0.5 + 2 * math.cos(math.pi / 6))
    table = periodic_classification(spec, COIN, 6)
    for row in table.rows:
        q = len(row.block)
        assert row.trace == pytest.approx(2 * math.cos(q * math.pi / 6), abs=1e-12)
        assert row.excluded  # every power of an order-12 rotation is excluded
    assert not table.criterion


def test_periodic_blocks_are_rotation_representatives():
    table = periodic_classification(SPEC.at(0.5, 1.0), COIN, 6)
    blocks = [r.block for r in table.rows]
    # primitive binary necklaces of length 1..6: 2, 1, 2, 3, 6, 9
    assert len(blocks) == 23
    assert (0, 1) in blocks and (1, 0) not in blocks
    assert table.criterion


def test_energy_grid():
    E = energy_grid(0.5, 0.05)
    assert len(E) == 61 and E[0] == pytest.approx(-1.5) and E[-1] == pytest.approx(1.5)


def test_scan_refuses_zero_mean_potential():
    spec = SchrodingerSpec(np.array([1.0, -1.0]), 2)
    with pytest.raises(ValidationError, match="refused"):
        positivity_scan(spec, COIN, [0.0], [0.1], n=2000, seed=1)


def test_scan_matches_single_cell_estimate_and_threads():
    E, lam = [-0.5, 0.3], [0.5]
    a = positivity_scan(SPEC, COIN, E, lam, n=5000, seed=7, n_chains=40, threads=1)
    b = positivity_scan(SPEC, COIN, E, lam, n=5000, seed=7, n_chains=40, threads=2)
    np.testing.assert_array_equal(a.L1, b.L1)
    assert a.positive.all()
    # the conjugated cocycle has the exponents of the original one
    est = lyapunov_spectrum(build_schrodinger(SPEC.at(0.3, 0.5)), COIN, 20_000, seed=8)
    comb = math.hypot(est.stderr[0], a.stderr[0, 1])
    assert abs(est.exponents[0] - a.L1[0, 1]) <= 4 * comb


def test_schrodinger_matrix_shape():
    np.testing.assert_array_equal(schrodinger_matrix(1.0, 0.25), [[0.75, -1.0], [1.0, 0.0]])
