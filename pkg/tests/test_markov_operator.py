import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab import shipped
from cocyclelab.cocycle import MatrixCocycle
from cocyclelab.errors import ValidationError
from cocyclelab.markov_operator import (ProjectiveGrid, build_base_operator, build_fiber_operator,
                                        holder_probes, holder_seminorm, kappa_alpha, lasota_yorke_check,
                                        ldp_rate_function, mixing_rate, pairwise_state_distance,
                                        perron_root, projective_distance, stationary_measure)
from cocyclelab.symbolic import MarkovBase

STICKY = [[0.9, 0.1], [0.2, 0.8]]


def test_grid_points_are_their_own_cells():
    for d, G in ((2, 90), (3, 512)):
        grid = ProjectiveGrid.build(d, G)
        np.testing.assert_array_equal(grid.nearest(grid.points), np.arange(G))
        np.testing.assert_array_equal(grid.nearest(-3.0 * grid.points), np.arange(G))


def test_projective_distance_values():
    u = np.array([1.0, 0.0])
    assert projective_distance(u, -2 * u) == 0.0
    assert projective_distance(u, np.array([0.0, 5.0])) == pytest.approx(1.0)
    assert projective_distance(u, np.array([1.0, 1.0])) == pytest.approx(math.sqrt(0.5))


def test_base_operator_stationary_and_gap():
    base = MarkovBase.chain(STICKY)
    op = build_base_operator(base)
    st_ = stationary_measure(op, tol=1e-14)
    np.testing.assert_allclose(st_.measure, [2 / 3, 1 / 3], atol=1e-10)
    mix = mixing_rate(op, holder_probes(op))
    assert abs(mix.sigma0 - 0.7) < 1e-6


def test_lifted_base_operator_gap():
    op = build_base_operator(MarkovBase.chain(STICKY), m_prime=5)
    mix = mixing_rate(op)
    assert abs(mix.sigma0 - 0.7) < 1e-6
    ly = lasota_yorke_check(op, 1.0)
    assert ly.sigma < 1 and not ly.weak
    for row in ly.table:
        assert row["v_Qn"] <= row["bound"] + 1e-12


@settings(max_examples=15)
@given(st.floats(0.05, 0.35), st.floats(0.05, 0.35))
def test_two_state_gap_is_second_eigenvalue(p, q):
    base = MarkovBase.chain([[1 - p, p], [q, 1 - q]])
    op = build_base_operator(base, m_prime=3)
    mix = mixing_rate(op)
    assert mix.sigma0 == pytest.approx(abs(1 - p - q), abs=1e-6)


def test_lasota_yorke_needs_probes():
    op = build_base_operator(MarkovBase.chain(STICKY))
    with pytest.raises(ValidationError, match="20 probe"):
        lasota_yorke_check(op, 1.0)


def test_holder_probes_have_unit_seminorm():
    A, base = shipped.typical_sl2()
    op = build_fiber_operator(A, base, m_prime=2, grid=ProjectiveGrid.build(2, 24))
    P = holder_probes(op, 20, 0.5)
    v = holder_seminorm(op, P, 0.5, pairwise_state_distance(op))
    assert v[0] == 0.0
    assert np.all(v <= 1 + 1e-12)


def test_fiber_operator_is_stochastic():
    A, base = shipped.typical_sl2()
    op = build_fiber_operator(A, base, grid=ProjectiveGrid.build(2, 180))
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-14)
    assert op.n_states == op.n_classes * 180
    lam, _ = perron_root(op)
    assert lam == pytest.approx(1.0, abs=1e-12)


def test_stationary_concentration_diagnostic():
    D, base = shipped.diagonal()
    R, _ = shipped.rotations()
    grid = ProjectiveGrid.build(2, 360)
    assert stationary_measure(build_fiber_operator(D, base, grid=grid)).dominated
    assert not stationary_measure(build_fiber_operator(R, base, grid=grid)).dominated


def test_kappa_rotations_exactly_one():
    A, base = shipped.rotations()
    grid = ProjectiveGrid.build(2, 720)
    for alpha in (0.25, 0.5, 1.0):
        for n in (1, 2, 3):
            assert kappa_alpha(A, base, alpha, n, grid).value == pytest.approx(1.0, abs=1e-12)


def test_kappa_scalar_convention():
    A, base = shipped.scalar()
    assert kappa_alpha(A, base, 0.5, 3).value == 1.0


def sine(u, v):
    return abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))


def test_kappa_matches_brute_force_sines():
    A, base = shipped.typical_sl2()
    G = 48
    grid = ProjectiveGrid.build(2, G)
    rep = kappa_alpha(A, base, 0.5, 2, grid, m_prime=1)
    # brute force: sup over the class x_0 and grid pairs of the average over x_1;
    # off-diagonal pairs by sines of angles, diagonal pairs by a finite-difference angle
    th = np.arange(G) * math.pi / G
    best = 0.0
    for a in (0, 1):
        mats = [A.gens[b] @ A.gens[a] for b in (0, 1)]
        for i in range(G):
            for j in range(G):
                ti, tj = th[i], th[j] if j != i else th[i] + 1e-7
                u = np.array([math.cos(ti), math.sin(ti)])
                v = np.array([math.cos(tj), math.sin(tj)])
                base_d = abs(math.sin(ti - tj))
                s = np.mean([(sine(M @ u, M @ v) / base_d) ** 0.5 for M in mats])
                best = max(best, s)
    assert rep.value == pytest.approx(best, rel=1e-5)


def test_kappa_typical_contracts():
    A, base = shipped.typical_sl2()
    grid = ProjectiveGrid.build(2, 720)
    assert kappa_alpha(A, base, 0.25, 8, grid).value < 1


def test_kappa_rejects_bad_alpha():
    A, base = shipped.typical_sl2()
    with pytest.raises(ValidationError):
        kappa_alpha(A, base, 1.5, 1)


def test_ldp_scalar_is_cosh():
    A, base = shipped.scalar()
    t = np.linspace(-1, 1, 41)
    res = ldp_rate_function(A, base, t_grid=t)
    np.testing.assert_allclose(np.exp(res.c), np.cosh(t * math.log(2)), atol=1e-8)
    assert res.c[20] == 0.0


def test_ldp_typical_shape():
    A, base = shipped.typical_sl2()
    res = ldp_rate_function(A, base, ProjectiveGrid.build(2, 360), np.linspace(-1, 1, 21))
    assert res.c[10] == 0.0
    assert np.all(res.second_differences() >= -1e-9)
    assert abs(res.derivative_at_zero()) < 0.05
    assert np.all(res.c_star >= -1e-12)


def test_ldp_rejects_large_t():
    A, base = shipped.scalar()
    with pytest.raises(ValidationError):
        ldp_rate_function(A, base, t_grid=[0.0, 1.5])


def test_three_dimensional_fiber_operator():
    A = MatrixCocycle.from_symbols(np.random.default_rng(2).normal(size=(2, 3, 3)) + 2 * np.eye(3))
    op = build_fiber_operator(A, MarkovBase.full_shift(2), grid=ProjectiveGrid.build(3, 256))
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-14)
    assert stationary_measure(op).residual < 1e-9
