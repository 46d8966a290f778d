import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from circdesign.moments import (IDENTITY, CovarianceSpec, ModelKind, btilde, design_matrices,
                                measure_moments, moment_table, q_closed_form_typeh, q_value,
                                sequence_moments)
from circdesign.sequences import dual, expand_equivalence_class, stats
from circdesign.solver import Measure

U, D, X = ModelKind.UNDIRECTIONAL, ModelKind.DIRECTIONAL, ModelKind.CROSSOVER

seqs = st.integers(2, 5).flatmap(
    lambda t: st.lists(st.integers(1, t), min_size=4, max_size=12).map(tuple))


def random_pd(rng, k):
    a = rng.normal(size=(k, k))
    return a @ a.T + 0.1 * np.eye(k)


def test_btilde_identity_is_centering():
    k = 6
    assert_allclose(btilde(IDENTITY, k), np.eye(k) - 1.0 / k, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_btilde_invariants_random_sigma(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, 9))
    sigma = CovarianceSpec.from_matrix(random_pd(rng, k))
    B = btilde(sigma, k)
    assert_allclose(B, B.T, atol=1e-10)
    assert_allclose(B @ np.ones(k), 0, atol=1e-9)
    ev = np.linalg.eigvalsh(B)
    assert ev.min() > -1e-9
    assert np.sum(ev > 1e-9 * ev.max()) == k - 1
    # generalised-inverse identity B S B = B
    S = sigma.matrix(k)
    assert_allclose(B @ S @ B, B, atol=1e-8 * np.abs(B).max())


def test_btilde_ar1_rank():
    B = btilde(CovarianceSpec.ar1(0.2), 4)
    assert np.linalg.matrix_rank(B, tol=1e-10) == 3


def test_type_h_btilde_is_scaled_centering():
    k = 7
    b = np.linspace(-0.2, 0.3, k)
    S = 2.5 * np.eye(k) + b[:, None] + b[None, :]
    sigma = CovarianceSpec.from_matrix(S)
    assert sigma.is_type_h(k)
    assert_allclose(sigma.type_h_scale(k), 2.5, rtol=1e-10)
    assert_allclose(btilde(sigma, k), (np.eye(k) - 1.0 / k) / 2.5, atol=1e-12)


def test_covariance_flags_and_parsing(tmp_path):
    ar = CovarianceSpec.parse("ar1:0.2")
    assert ar.is_persymmetric(6) and not ar.is_type_h(6)
    assert IDENTITY.is_type_h(5) and IDENTITY.is_persymmetric(5)
    path = tmp_path / "s.csv"
    np.savetxt(path, ar.matrix(4), delimiter=",")
    dense = CovarianceSpec.parse(str(path))
    assert_allclose(dense.matrix(4), ar.matrix(4))
    assert CovarianceSpec.from_description(ar.describe()) == ar
    with pytest.raises(ValueError):
        CovarianceSpec.ar1(1.0)
    with pytest.raises(ValueError):
        CovarianceSpec.from_matrix([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        CovarianceSpec.from_matrix([[1.0, 0.5], [0.0, 1.0]])
    unsym = np.array([[2.0, 0.3, 0.0], [0.3, 2.0, 0.1], [0.0, 0.1, 3.0]])
    assert not CovarianceSpec.from_matrix(unsym).is_persymmetric(3)


def test_design_matrices_two_plot_circle():
    T, L, R = design_matrices((1, 2), 2)
    assert_allclose(T, np.eye(2))
    assert_allclose(L, [[0, 1], [1, 0]])
    T, L, R = design_matrices((1, 1, 2, 3), 3)
    for m in (T, L, R):
        assert_allclose(m.sum(axis=1), 1)
    T, L, R = design_matrices((2, 2, 2), 3)
    assert_allclose(L, T)
    assert_allclose(R, T)


def test_hand_computed_quadratic():
    # (1,1,2,2): gamma=2, psi=0, chi=8 gives q(x) = 2 - 8x + 8x^2
    m = sequence_moments((1, 1, 2, 2), U)
    assert_allclose([m.c00, m.ell[0], m.Q[0, 0]], [2.0, -4.0, 8.0], atol=1e-12)
    assert_allclose(q_value(m, [1 / 3]), 2 / 9, atol=1e-12)
    assert_allclose(q_value(m, [0.0]), m.c00)
    assert_allclose(q_value(sequence_moments((1, 2, 1, 2), U), [1 / 3]), 2 / 9, atol=1e-12)
    assert_allclose(q_closed_form_typeh(stats((1, 1, 2, 2)), 4, 1 / 3), 2 / 9, atol=1e-12)
    assert_allclose(q_closed_form_typeh(stats((1, 2, 1, 2)), 4, 1 / 3), 2 / 9, atol=1e-12)


@pytest.mark.parametrize("model", list(ModelKind))
def test_constant_sequence_has_no_information(model):
    m = sequence_moments((1,) * 6, model, CovarianceSpec.ar1(0.3))
    assert_allclose(m.c00, 0, atol=1e-12)
    assert_allclose(m.ell, 0, atol=1e-12)
    assert_allclose(m.Q, 0, atol=1e-12)
    assert q_closed_form_typeh(stats((1,) * 6), 6, 0.37) == pytest.approx(0, abs=1e-12)


def test_alternating_sequence_has_rank_one_directional_q():
    m = sequence_moments((1, 2, 1, 2), D)
    assert np.linalg.matrix_rank(m.Q, tol=1e-10) == 1
    m = sequence_moments((1, 1, 2, 3, 2), D)
    assert np.linalg.matrix_rank(m.Q, tol=1e-10) == 2


@settings(max_examples=200, deadline=None)
@given(seqs, st.floats(0, 1))
def test_matrix_path_equals_closed_form(seq, x):
    m = sequence_moments(seq, U)
    assert q_value(m, [x]) == pytest.approx(q_closed_form_typeh(stats(seq), len(seq), x), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(seqs, st.randoms(use_true_random=False))
def test_moments_are_relabel_invariant(seq, rnd):
    t = max(seq)
    perm = list(range(1, t + 1))
    rnd.shuffle(perm)
    moved = tuple(perm[a - 1] for a in seq)
    sigma = CovarianceSpec.ar1(0.4)
    a, b = sequence_moments(seq, D, sigma), sequence_moments(moved, D, sigma)
    assert_allclose(a.F, b.F, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seqs)
def test_dual_symmetry_under_persymmetric_sigma(seq):
    sigma = CovarianceSpec.ar1(-0.3)
    a, b = sequence_moments(seq, U, sigma), sequence_moments(dual(seq), U, sigma)
    assert_allclose(a.F, b.F, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seqs, st.floats(-1, 1))
def test_model_reductions(seq, x):
    sigma = CovarianceSpec.ar1(0.2)
    d = sequence_moments(seq, D, sigma)
    u = sequence_moments(seq, U, sigma)
    c = sequence_moments(seq, X, sigma)
    assert_allclose(q_value(d, [x, x]), q_value(u, [x]), atol=1e-9)
    assert_allclose(c.ell[0], d.ell[0], atol=1e-10)
    assert_allclose(c.Q[0, 0], d.Q[0, 0], atol=1e-10)
    assert np.linalg.eigvalsh(d.Q).min() > -1e-9
    assert d.c00 >= -1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        q_value(sequence_moments((1, 1, 2, 2), D), [0.3])


@pytest.mark.parametrize("model", list(ModelKind))
@pytest.mark.parametrize("sigma", [IDENTITY, CovarianceSpec.ar1(0.2)])
def test_vectorised_table_matches_per_sequence(model, sigma):
    rng = np.random.default_rng(3)
    seqs_ = [tuple(rng.integers(1, 4, size=7)) for _ in range(25)]
    fast = moment_table(seqs_, model, sigma, fast=True)
    slow = moment_table(seqs_, model, sigma, fast=False)
    assert_allclose(fast.c00, slow.c00, atol=1e-10)
    assert_allclose(fast.ell, slow.ell, atol=1e-10)
    assert_allclose(fast.Q, slow.Q, atol=1e-10)
    x = np.full(model.dim, 0.41)
    for i in (0, 7, 24):
        assert fast.q(x)[i] == pytest.approx(q_value(sequence_moments(seqs_[i], model, sigma), x), abs=1e-10)


def test_measure_moments_are_linear():
    a, b = (1, 1, 2, 3, 2), (1, 2, 1, 3, 3)
    mix = measure_moments(Measure({a: 0.5, b: 0.5}, D))
    ma, mb = sequence_moments(a, D), sequence_moments(b, D)
    assert_allclose(mix.F, 0.5 * (ma.F + mb.F), atol=1e-12)
    single = measure_moments(Measure({a: 1.0}, D))
    assert_allclose(single.F, ma.F, atol=1e-12)
    cls = expand_equivalence_class((1, 1, 2, 2), 2)
    uniform = measure_moments(Measure({s: 1 / len(cls) for s in cls}, U))
    assert_allclose(uniform.c00, sequence_moments((1, 1, 2, 2), U).c00, atol=1e-12)


def test_measure_weight_validation():
    with pytest.raises(ValueError):
        Measure({(1, 1, 2, 2): 0.6, (1, 2, 1, 2): 0.5}, U)
    with pytest.raises(ValueError):
        Measure({(1, 1, 2, 2): 1.2, (1, 2, 1, 2): -0.2}, U)
