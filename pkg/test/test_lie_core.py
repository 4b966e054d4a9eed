import numpy as np
import pytest
from numpy.testing import assert_allclose
from shapeweb_solver.errors import RepeatedEigenvalue, BranchLost, NoRoot, NoConvergence
from shapeweb_solver.lie_core import (hat, unhat, as_sym, block_inertia, random_rotation,
                                      eig_sym, cluster_ids, track_branch, eigen_gradient,
                                      eigen_hessian, char_poly, discriminant, sym_discriminant,
                                      signature, bracket_so3xso3)
from shapeweb_solver import utils

rng = np.random.default_rng(1)

def random_sym(n=3):
    A = rng.normal(size=(n, n))
    return A + A.T

def path_matrix(t):
    # Smooth symmetric path with simple eigenvalues near t = 0
    return np.array([[1. + t, 0.3 * t, 0.1 * t**2],
                     [0.3 * t, 2. - t**2, 0.2 * t],
                     [0.1 * t**2, 0.2 * t, 3.5 + 0.5 * t]])

def test_hat_cross_product():
    a, b = rng.normal(size=(2, 3))
    assert_allclose(hat(a) @ b, np.cross(a, b))
    assert_allclose(unhat(hat(a)), a)

def test_block_inertia_layout():
    I = block_inertia([1., 2., 3.], [4., 5., 6.])
    assert I.shape == (6, 6)
    assert_allclose(I[:3, :3], np.diag([1., 2., 3.]))
    assert_allclose(I[:3, 3:], np.diag([4., 5., 6.]))
    assert_allclose(I, I.T)

def test_random_rotation_orthogonal():
    R = random_rotation(rng)
    assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.)

def test_eig_sym_reconstruction():
    S = random_sym()
    frame = eig_sym(S)
    V = frame.eigenvectors
    assert (np.diff(frame.eigenvalues) >= 0).all()
    assert_allclose(V @ np.diag(frame.eigenvalues) @ V.T, as_sym(S), atol=1e-12)
    assert not frame.has_repeated()

def test_repeated_cluster_flags():
    R = random_rotation(rng)
    S = R @ np.diag([1., 2., 2.]) @ R.T
    frame = eig_sym(S)
    assert frame.has_repeated()
    assert frame.is_simple(0)
    assert frame.cluster_size(1) == 2
    assert list(frame.cluster_members(2)) == [1, 2]
    assert frame.rank(0) == 'min'
    with pytest.raises(RepeatedEigenvalue):
        frame.rank(1)

def test_cluster_ids_relative_tolerance():
    lam = np.array([1., 1. + 1e-10, 2.])
    assert list(cluster_ids(lam)) == [0, 0, 1]
    assert list(cluster_ids(lam, tau_mult=1e-12)) == [0, 1, 2]

def test_rank_mid_and_max():
    frame = eig_sym(np.diag([3., 1., 2.]))
    assert [frame.rank(j) for j in range(3)] == ['min', 'mid', 'max']

def test_track_branch_sign_and_loss():
    frame = eig_sym(np.diag([1., 2., 3.]))
    j, v = track_branch(frame, np.array([0., -1., 0.1]))
    assert j == 1
    assert v[1] < 0
    with pytest.raises(BranchLost):
        track_branch(frame, np.array([1., 1., 1.]) / np.sqrt(3))

def test_eigen_gradient_matches_fd():
    frame = eig_sym(path_matrix(0.))
    dS = np.array([(path_matrix(1e-6) - path_matrix(-1e-6)) / 2e-6])
    for j in range(3):
        fd = (np.linalg.eigvalsh(path_matrix(1e-5))[j]
              - np.linalg.eigvalsh(path_matrix(-1e-5))[j]) / 2e-5
        assert_allclose(eigen_gradient(frame, j, dS), [fd], rtol=1e-6, atol=1e-8)

def test_eigen_hessian_matches_fd():
    t = 0.2
    frame = eig_sym(path_matrix(t))
    h = 1e-6
    dS = np.array([(path_matrix(t + h) - path_matrix(t - h)) / (2 * h)])
    d2S = np.array([[(path_matrix(t + 1e-3) - 2 * path_matrix(t) + path_matrix(t - 1e-3)) / 1e-6]])
    k = 1e-3
    for j in range(3):
        lam = [np.linalg.eigvalsh(path_matrix(t + s))[j] for s in (-k, 0., k)]
        fd = (lam[0] - 2 * lam[1] + lam[2]) / k**2
        assert_allclose(eigen_hessian(frame, j, dS, d2S)[0, 0], fd, rtol=1e-4, atol=1e-6)

def test_eigen_derivatives_reject_repeated():
    frame = eig_sym(np.diag([1., 1., 2.]))
    dS = np.zeros((1, 3, 3))
    with pytest.raises(RepeatedEigenvalue):
        eigen_gradient(frame, 0, dS)
    with pytest.raises(RepeatedEigenvalue):
        eigen_hessian(frame, 1, dS, np.zeros((1, 1, 3, 3)))

def test_char_poly_roots():
    S = random_sym()
    p = char_poly(S)
    assert_allclose(p.roots(), np.linalg.eigvalsh(S), atol=1e-10)
    for lam in np.linalg.eigvalsh(S):
        assert abs(p(lam)) < 1e-9

def test_discriminant_sign():
    assert sym_discriminant(np.diag([1., 2., 4.])) > 0
    assert abs(sym_discriminant(np.diag([1., 2., 2.]))) < 1e-12
    # (t - 1)(t - 2)(t - 4): product of squared root differences
    assert discriminant(char_poly(np.diag([1., 2., 4.]))) == pytest.approx(36.)

def test_sym_discriminant_shift_invariant():
    S = random_sym()
    assert sym_discriminant(S + 1e3 * np.eye(3)) == pytest.approx(sym_discriminant(S),
                                                                  rel=1e-6)

def test_signature_counts():
    assert signature(np.diag([2., 0., -1.])) == (1, 1, 1)
    assert signature(np.diag([1e-10, 1., 1.])) == (2, 1, 0)

def test_bracket_vanishes_on_parallel_pairs():
    w = np.array([0., 0., 1.])
    p, q = bracket_so3xso3((w, 2 * w), (3 * w, -w))
    assert_allclose(p, 0.)
    assert_allclose(q, 0.)

def test_sym3_eigvals_matches_eigh():
    S = np.array([random_sym() for _ in range(20)] + [2. * np.eye(3)])
    assert_allclose(utils.sym3_eigvals(S), np.linalg.eigvalsh(S), atol=1e-10)

def test_shifted_det():
    S = np.array([random_sym() for _ in range(5)])
    for lam in np.linalg.eigvalsh(S[0]):
        assert abs(utils.shifted_det(lam, S)[0]) < 1e-9

def test_boundary_grid_vanishes_on_faces():
    axis = np.array([-1., 0., 0.5, 1.])
    C = utils.boundary_grid(axis)
    assert C[1, 1, 1] == pytest.approx(1.)
    assert C[2, 2, 1] > 0
    assert C[3, 3, 3] == pytest.approx(0.)

def test_bisect_and_brackets():
    assert utils.bisect(np.cos, 0., 3.) == pytest.approx(np.pi / 2, abs=1e-12)
    with pytest.raises(NoRoot):
        utils.bisect(np.cos, 0., 1.)
    roots = utils.bracket_roots(np.sin, 0.5, 10., n=100)
    assert_allclose(roots, [np.pi, 2 * np.pi, 3 * np.pi], atol=1e-12)

def test_bracket_roots_skips_gaps():
    f = lambda t: np.nan if abs(t - 1.5 * np.pi) < 0.1 else np.tan(t)
    roots = utils.bracket_roots(f, 2.5, 5., n=60)
    assert_allclose(roots, [np.pi], atol=1e-12)

def test_finite_differences():
    f = lambda x: np.sin(x[0]) * np.exp(x[1])
    x = np.array([0.3, -0.2])
    g = utils.central_gradient(f, x)
    assert_allclose(g, [np.cos(0.3) * np.exp(-0.2), np.sin(0.3) * np.exp(-0.2)], rtol=1e-9)
    H = utils.central_hessian(f, x)
    expected = np.exp(-0.2) * np.array([[-np.sin(0.3), np.cos(0.3)],
                                         [np.cos(0.3), np.sin(0.3)]])
    assert_allclose(H, expected, rtol=1e-6, atol=1e-8)

def test_damped_newton():
    F = lambda x: np.array([x[0]**2 - 2., x[1] - x[0]])
    J = lambda x: np.array([[2 * x[0], 0.], [-1., 1.]])
    x = utils.damped_newton(F, J, np.array([1., 0.]))
    assert_allclose(x, [np.sqrt(2), np.sqrt(2)], atol=1e-12)
    G = lambda x: np.array([x[0]**2 + 1.])
    JG = lambda x: np.array([[2 * x[0]]])
    with pytest.raises(NoConvergence):
        utils.damped_newton(G, JG, np.array([0.5]), max_iter=20)

def test_numba_kernels_match_numpy():
    nutils = pytest.importorskip('shapeweb_solver.nutils')
    S = np.array([random_sym() for _ in range(10)])
    assert_allclose(nutils.sym3_eigvals(S), utils.sym3_eigvals(S), atol=1e-12)
    assert_allclose(nutils.shifted_det(0.7, S), utils.shifted_det(0.7, S), atol=1e-10)
    axis = np.linspace(-1., 1., 7)
    assert_allclose(nutils.cayley_grid(1.3, axis), utils.cayley_grid(1.3, axis), atol=1e-12)
    assert_allclose(nutils.boundary_grid(axis), utils.boundary_grid(axis), atol=1e-12)
