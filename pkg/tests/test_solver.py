import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from circdesign.errors import NonConvergence, ZeroInformation
from circdesign.fixtures import PAIR_31_8, PRINTED_T3_REPS, parse_runs
from circdesign.moments import IDENTITY, CovarianceSpec, ModelKind, moment_table, sequence_moments
from circdesign.sequences import canonicalize, enumerate_class_reps, orbit_key, stats
from circdesign.solver import (Certificate, Measure, SolverOptions, get_residual, known_support,
                               known_x_exact, maximize_symmetric, minimax_envelope, solve,
                               symmetric_weights, verify_universal_optimality)

U, D, X = ModelKind.UNDIRECTIONAL, ModelKind.DIRECTIONAL, ModelKind.CROSSOVER


def brute_envelope(k, t, model, sigma=IDENTITY, grid=20001):
    """min over a fine grid of max over every class representative, then a local refinement."""
    tab = moment_table([s for s in enumerate_class_reps(k, t) if max(s) > 1], model, sigma, fast=False)
    xs = np.linspace(0.0, 1.0, grid)
    vals = np.array([tab.q(np.array([x])).max() for x in xs])
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    for _ in range(200):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if tab.q(np.array([m1])).max() < tab.q(np.array([m2])).max():
            hi = m2
        else:
            lo = m1
    x = 0.5 * (lo + hi)
    return x, float(tab.q(np.array([x])).max())


def test_envelope_of_two_quadratics():
    x, y = minimax_envelope([(1, 1, 2, 2), (1, 2, 1, 2)], U, bracket=(0.0, 1.0))
    assert_allclose(x, [1 / 3], atol=1e-10)
    assert_allclose(y, 2 / 9, atol=1e-12)


def test_envelope_of_single_quadratic_at_its_vertex():
    # (1,1,2,2,3,3): vertex 2(k - gamma)/(6k + 2psi - 8gamma) = 1/2
    x, y = minimax_envelope([(1, 1, 2, 2, 3, 3)], U, bracket=(0.35, 0.55))
    assert_allclose(x, [0.5], atol=1e-10)
    assert_allclose(y, sequence_moments((1, 1, 2, 2, 3, 3), U).y(), atol=1e-12)


def test_envelope_rejects_degenerate_input():
    with pytest.raises(ZeroInformation):
        minimax_envelope([(1, 1, 1, 1)], U)
    with pytest.raises(ValueError):
        minimax_envelope([], U)


def test_smallest_instance():
    m, c = maximize_symmetric(4, 2, U)
    assert_allclose(c.x_star, [1 / 3], atol=1e-8)
    assert_allclose(c.y_star, 2 / 9, atol=1e-10)
    assert c.get_residual <= 1 + 1e-8
    x, y = brute_envelope(4, 2, U)
    assert y == pytest.approx(c.y_star, abs=1e-9)
    assert x == pytest.approx(1 / 3, abs=1e-6)


def test_directional_k4_t3():
    _, c = maximize_symmetric(4, 3, D)
    assert_allclose(c.x_star, [1 / 3, 1 / 3], atol=1e-8)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_tiny_blocks_carry_no_information(k):
    with pytest.raises(ZeroInformation):
        maximize_symmetric(k, 2, U)
    with pytest.raises(ZeroInformation):
        solve(k, 3, D)


def test_crossover_small_blocks():
    with pytest.raises(ZeroInformation):
        solve(2, 2, X)
    m, c = solve(3, 3, X)
    assert_allclose(c.x_star, [0.5], atol=1e-8)
    assert verify_universal_optimality(m, c.x_star, c.y_star).passed


def test_get_residual_values():
    m, c = maximize_symmetric(4, 2, U)
    for s in c.support_reps:
        assert get_residual(m, s) == pytest.approx(1.0, abs=1e-8)
    assert get_residual(m, (1, 1, 1, 2)) < 1
    single = Measure({(1, 1, 2, 3, 2): 1.0}, D)
    assert get_residual(single, (1, 1, 2, 3, 2)) == pytest.approx(1.0, abs=1e-10)


def test_exchange_history_is_monotone():
    m, _ = maximize_symmetric(7, 3, D)
    h = np.array(m.history)
    assert len(h) >= 2
    assert np.all(np.diff(h) >= -1e-12 * np.abs(h).max())


def test_exchange_iteration_budget():
    with pytest.raises(NonConvergence) as err:
        maximize_symmetric(7, 4, D, opts=SolverOptions(max_iters=1))
    assert err.value.best is not None


def test_known_support_examples():
    x, reps = known_support(6, 2, U)
    assert_allclose(x, [0.4])
    assert set(reps) == {(1, 1, 1, 2, 2, 2), (1, 2, 1, 2, 1, 2)}
    assert known_x_exact(7, 3) == pytest.approx((28 + math.sqrt(532)) / 126)
    x, _ = known_support(9, 3, D)
    assert_allclose(x, [4 / 9, 4 / 9])
    assert known_support(6, 4, U) is None
    assert known_support(6, 3, U, CovarianceSpec.ar1(0.2)) is None
    assert known_support(6, 3, X) is None


@pytest.mark.parametrize("t,k", [(2, k) for k in range(4, 14)] + [(3, k) for k in range(4, 15)])
def test_closed_form_supports_are_active(t, k):
    """Every tabulated class attains y* under the matrix path, and the envelope of
    all class representatives attains its minimum at the tabulated x*."""
    x, reps = known_support(k, t, U)
    tab = moment_table(reps, U, fast=False)
    q = tab.q(x)
    assert q.max() - q.min() <= 1e-9 * q.max()
    _, c = maximize_symmetric(k, t, U)
    assert_allclose(c.x_star, x, atol=1e-8)
    assert q.max() == pytest.approx(c.y_star, rel=1e-9)


def test_printed_small_k_representatives_match_table():
    for k, reps in PRINTED_T3_REPS.items():
        if k == 8:  # the printed s_b for k = 8 is not active; see known_support
            continue
        x, ours = known_support(k, 3, U)
        assert {canonicalize(tuple(int(a) for a in r)) for r in reps} <= set(ours)


def test_two_sample_support_five_four():
    m, c = solve(5, 4, D)
    keys = {stats(s).key for s in c.support_reps}
    assert stats((1, 2, 3, 4, 1)).key in keys
    # (1,1,2,3,3) stays strictly below y* at x*
    q = sequence_moments((1, 1, 2, 3, 3), D)
    assert q.F[0, 0] + 2 * q.ell @ c.x_star + c.x_star @ q.Q @ c.x_star < c.y_star - 1e-3
    assert_allclose(c.y_star, 0.690909090909, atol=1e-9)


def test_large_k_t8_support():
    """Solution at (31, 8): the balanced class is active; the second active class
    is s(31, 8, 2, 4), which dominates the listed M(1_4,2_3) class at its own optimum."""
    _, c = solve(31, 8, U)
    s1, s2 = (parse_runs(v) for v in PAIR_31_8)
    found = {orbit_key(s) for s in c.support_reps}
    assert orbit_key(s1) in found
    assert 0.4 <= c.x_star[0] < 0.5
    x_pair, y_pair = minimax_envelope([s1, s2], U, bracket=(0.35, 0.55))
    assert y_pair < c.y_star
    tab = moment_table(list(c.support_reps), U, fast=False)
    assert tab.q(x_pair).max() > y_pair + 1e-3


def test_symmetric_weights_single_class():
    m = symmetric_weights([(1, 1, 2, 2, 3, 3)], [0.5], U)
    assert list(m.weights.values()) == [1.0]
    with pytest.raises(ValueError):
        symmetric_weights([(1, 1, 2, 2, 3, 3)], [0.3], U)


@pytest.mark.parametrize("k,t,p", [(11, 8, 0.8034), (12, 8, 0.9264)])
def test_symmetric_weights_t8(k, t, p):
    m, c = solve(k, t, U)
    assert max(m.weights.values()) == pytest.approx(p, abs=1e-3)


def test_universal_optimality_check():
    m, c = solve(11, 5, U)
    rep = verify_universal_optimality(m, c.x_star, c.y_star)
    assert rep.passed, rep
    bad = Measure({(1,) * 6: 1.0}, U, t=3)
    rep = verify_universal_optimality(bad, [0.4], 1.0)
    assert not rep.passed and rep.y_xi == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("k,t", [(20, 6), (50, 10), (101, 7)])
def test_candidate_route_bracket(k, t):
    m, c = solve(k, t, D)
    assert c.path == "candidates"
    assert 0.4 <= c.x_star[0] < 0.5 and c.x_star[0] == c.x_star[1]
    assert not any("outside" in n for n in c.notes)
    assert sum(m.weights.values()) == pytest.approx(1.0, abs=1e-12)


def test_directional_without_persymmetry():
    S = np.diag([1.0, 1.5, 2.0, 2.5, 3.0]) + 0.1
    sigma = CovarianceSpec.from_matrix(S)
    assert not sigma.is_persymmetric(5)
    m, c = solve(5, 3, D, sigma)
    assert c.path == "exchange"
    tab = moment_table([s for s in enumerate_class_reps(5, 3) if max(s) > 1], D, sigma)
    grid = np.linspace(0.0, 0.8, 41)
    best = min(tab.q(np.array([a, b])).max() for a in grid for b in grid)
    assert c.y_star <= best + 1e-9
    assert m.y() == pytest.approx(c.y_star, rel=1e-7)


def test_certificate_round_trip():
    _, c = solve(6, 3, D)
    back = Certificate.from_dict(c.to_dict())
    assert back.to_dict() == c.to_dict()
