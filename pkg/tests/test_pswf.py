import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import nystrom_prolate_eigenvalues
from pswfmimo.errors import NumericalFailure
from pswfmimo.pswf import (PswfBasis, TraceIdentityWarning, build_spectral_matrix,
                           compute_prolate_eigenvalues, default_nmax, evaluate_pswf,
                           finite_fourier_transform, rescale_to_interval, solve_pswf_eigensystem,
                           write_basis_csv)
from pswfmimo.special import gauss_legendre_rule


def standard_basis(c):
    b = solve_pswf_eigensystem(c)
    return b, compute_prolate_eigenvalues(b)


# spectral matrix ---------------------------------------------------------------

def test_matrix_at_c0_is_diagonal():
    m = build_spectral_matrix(0.0, 10)
    np.testing.assert_array_equal(m.diag[:4], [0, 2, 6, 12])
    np.testing.assert_array_equal(m.offdiag2, 0)


def test_matrix_entries_c1():
    m = build_spectral_matrix(1.0, 10)
    assert m.diag[0] == pytest.approx(1 / 3, abs=1e-15)
    assert m.offdiag2[0] == pytest.approx(2 / (3 * math.sqrt(5)), abs=1e-15)
    assert m.offdiag2[0] == pytest.approx(0.298142, abs=1e-6)


def test_matrix_symmetric_pentadiagonal():
    a = build_spectral_matrix(3.0, 12).dense()
    np.testing.assert_array_equal(a, a.T)
    i, j = np.nonzero(a)
    assert set(np.abs(i - j)) <= {0, 2}


@pytest.mark.parametrize("c,n", [(-1.0, 10), (1.0, 1)])
def test_matrix_rejects_bad_args(c, n):
    with pytest.raises(ValueError):
        build_spectral_matrix(c, n)


# eigensystem ---------------------------------------------------------------------

def test_c0_gives_legendre():
    b = solve_pswf_eigensystem(0.0, 16)
    np.testing.assert_allclose(np.abs(b.beta), np.eye(17), atol=1e-14)
    np.testing.assert_allclose(b.chi, np.arange(17) * np.arange(1, 18), atol=1e-12)
    assert evaluate_pswf(b, 0, 0.3) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("c", [0.5, 5.0, 20.0])
def test_unit_norm_and_residual(c):
    b = solve_pswf_eigensystem(c)
    a = build_spectral_matrix(c, b.n_max).dense()
    np.testing.assert_allclose(np.linalg.norm(b.beta, axis=0), 1.0, atol=1e-13)
    resid = a @ b.beta - b.beta * b.chi
    assert np.max(np.linalg.norm(resid, axis=0)) <= 1e-9 * np.linalg.norm(a, 2)
    assert np.all(np.diff(b.chi) > 0)


def test_sign_convention():
    b = solve_pswf_eigensystem(7.0)
    for n in range(b.n_modes):
        col = b.beta[:, n]
        first = col[np.abs(col) > 1e-10 * np.abs(col).max()][0]
        assert first > 0


def test_chi0_converged_under_refinement():
    a = solve_pswf_eigensystem(2.0, 64).chi[0]
    b = solve_pswf_eigensystem(2.0, 128).chi[0]
    assert abs(a - b) < 1e-10


def test_chi0_matches_dense_eigensolver():
    c = 4.0
    b = solve_pswf_eigensystem(c, 40)
    ref = np.linalg.eigvalsh(build_spectral_matrix(c, 40).dense())
    np.testing.assert_allclose(b.chi, ref, rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("ell", range(6))
def test_parity(ell):
    b = solve_pswf_eigensystem(6.0)
    x = np.linspace(0, 1, 17)
    np.testing.assert_allclose(b.values(-x, [ell])[:, 0], (-1) ** ell * b.values(x, [ell])[:, 0],
                               atol=1e-12)


def test_quadrature_orthonormality():
    b = solve_pswf_eigensystem(8.0)
    q = gauss_legendre_rule(2 * b.n_max)
    v = b.values(q.nodes, list(range(20)))
    np.testing.assert_allclose(v.T @ (q.weights[:, None] * v), np.eye(20), atol=1e-10)


def test_evaluate_range_checks():
    b = solve_pswf_eigensystem(1.0)
    with pytest.raises(ValueError):
        evaluate_pswf(b, b.n_modes, 0.0)
    with pytest.raises(ValueError):
        evaluate_pswf(b, 0, 1.5)


# prolate eigenvalues -------------------------------------------------------------

@pytest.mark.parametrize("c", [1.0, 5.0, 10.0, 25.0, 60.0])
def test_trace_identity(c):
    _, g = standard_basis(c)
    assert abs(g.sum() - 2 * c / math.pi) <= 1e-6 * 2 * c / math.pi


def test_c10_top_eigenvalue():
    _, g = standard_basis(10.0)
    assert g[0] > 0.999


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 40.0))
def test_gamma_bounded_and_monotone(c):
    _, g = standard_basis(c)
    assert np.all(g > 0) and np.all(g < 1)
    assert np.all(np.diff(g) <= 1e-12)


def test_matches_nystrom_oracle():
    c = 5.0
    _, g = standard_basis(c)
    ref = nystrom_prolate_eigenvalues(c, 512)
    k = math.ceil(2 * c / math.pi) + 10
    np.testing.assert_allclose(g[:k], ref[:k], atol=1e-6)


@pytest.mark.parametrize("c", [2.0, 9.0])
def test_integral_equation_residual(c):
    b, g = standard_basis(c)
    q = gauss_legendre_rule(4 * b.n_max)
    x = np.linspace(-1, 1, 101)
    kern = (c / math.pi) * np.sinc(c * (x[:, None] - q.nodes[None, :]) / math.pi)
    keep = np.flatnonzero(g > 1e-10)
    psi_q = b.values(q.nodes, keep)
    lhs = kern @ (q.weights[:, None] * psi_q)
    rhs = b.values(x, keep) * g[keep]
    assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_fourier_transform_commutes_with_differential_operator():
    c = 3.0
    b = solve_pswf_eigensystem(c)
    q = gauss_legendre_rule(2 * b.n_max)
    h = 1e-4
    x = np.linspace(-0.9, 0.9, 7)
    f = lambda t: finite_fourier_transform(b, 0, t, q)
    g0, gp, gm = f(x), f(x + h), f(x - h)
    d1 = (gp - gm) / (2 * h)
    d2 = (gp - 2 * g0 + gm) / h ** 2
    # L_c = -d/dx (1-x^2) d/dx + c^2 x^2 applied to F_c psi_0
    lg = -((1 - x ** 2) * d2 - 2 * x * d1) + c ** 2 * x ** 2 * g0
    np.testing.assert_allclose(lg, b.chi[0] * g0, rtol=1e-5, atol=1e-6)


def test_trace_warning_on_coarse_truncation():
    b = solve_pswf_eigensystem(200.0, 4)
    with pytest.warns(TraceIdentityWarning):
        compute_prolate_eigenvalues(b)


def test_zero_derivative_inner_product_fails():
    beta = np.eye(9)
    beta[:, 1] = beta[:, 0]  # psi_1 constant, so psi_1' = 0
    b = PswfBasis(c=1.0, n_max=8, beta=beta, chi=np.arange(9.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NumericalFailure):
            compute_prolate_eigenvalues(b)


def test_default_nmax():
    assert default_nmax(1.0) == 64
    assert default_nmax(50.0) == 140


# rescaling -----------------------------------------------------------------------

def test_rescale_band_parameter():
    b = rescale_to_interval(20.0, -0.15, 0.15)
    assert b.c == pytest.approx(3 * math.pi, rel=1e-15)
    assert b.c == pytest.approx(9.42478, abs=1e-5)


def test_rescaled_orthonormal_and_same_gamma():
    a, bb = -0.3, 0.5
    b = rescale_to_interval(12.0, a, bb)
    q = gauss_legendre_rule(2 * b.n_max).scaled(a, bb)
    v = b.values(q.nodes, list(range(12)))
    np.testing.assert_allclose(v.T @ (q.weights[:, None] * v), np.eye(12), atol=1e-8)
    _, g = standard_basis(b.c)
    np.testing.assert_allclose(b.gamma, g, rtol=1e-13)


def test_rescale_rejects_bad_interval():
    with pytest.raises(ValueError):
        rescale_to_interval(1.0, 0.2, 0.2)
    with pytest.raises(ValueError):
        rescale_to_interval(-1.0, 0.0, 0.5)


def test_csv_dump(tmp_path):
    b = rescale_to_interval(20.0, -0.15, 0.15)
    write_basis_csv(b, tmp_path / "e.csv", tmp_path / "s.csv", n_samples=11, n_functions=3)
    e = np.genfromtxt(tmp_path / "e.csv", delimiter=",", names=True)
    assert list(e.dtype.names) == ["ell", "chi", "gamma"]
    assert e["gamma"][0] == e["gamma"].max()
    s = np.genfromtxt(tmp_path / "s.csv", delimiter=",", names=True)
    assert list(s.dtype.names) == ["x", "psi_0", "psi_1", "psi_2"]
    assert len(s) == 11
