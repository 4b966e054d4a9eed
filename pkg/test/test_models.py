import numpy as np
import pytest
from numpy.testing import assert_allclose
from shapeweb_solver.errors import (ConfigError, DomainError, DegenerateShape, RepeatedEigenvalue,
                                    SingularConfiguration)
from shapeweb_solver.lie_core import eig_sym, sym_discriminant, block_inertia, bracket_so3xso3
from shapeweb_solver.models import (Sphere2Body, two_body_eigendata, RubberBall, Triatomic,
                                    FullBodySatellite, Spherical3Body, RiemannEllipsoid,
                                    ShapePoint, make_model, locked_inertia, triatomic_S_matrix,
                                    fullbody_repeated_curves, check_ellipsoid_shape,
                                    ellipsoid_blocks, ellipsoid_D, ellipsoid_multipliers,
                                    ellipsoid_solutions, type_s_web, type_r_web)
from shapeweb_solver.utils import central_gradient

rng = np.random.default_rng(7)

s3body = Spherical3Body()
fullbody = FullBodySatellite()
triatomic = Triatomic()

def sphere_shape():
    q = rng.normal(size=(3, 3))
    q /= np.linalg.norm(q, axis=1)[:, None]
    return q, np.array([q[0] @ q[1], q[0] @ q[2], q[1] @ q[2]])

def test_make_model_errors():
    assert isinstance(make_model('s3body'), Spherical3Body)
    assert make_model('s2body', m1=2.).m1 == 2.
    with pytest.raises(ConfigError):
        make_model('nbody')
    with pytest.raises(ConfigError):
        make_model('s3body', masses=1.)
    with pytest.raises(ConfigError):
        make_model('s3body', potential='yukawa')
    with pytest.raises(ConfigError):
        Sphere2Body(m1=-1.)

def test_two_body_closed_form_eigenvalues():
    model = Sphere2Body(m1=1., m2=2.)
    theta = 0.7
    lam0, lam_plus, lam_minus, dplus, dminus = two_body_eigendata(1., 2., theta)
    assert_allclose(np.sort([lam0, lam_plus, lam_minus]),
                    model.frame(np.array([theta])).eigenvalues, atol=1e-12)
    fd = (two_body_eigendata(1., 2., theta + 1e-6)[1]
          - two_body_eigendata(1., 2., theta - 1e-6)[1]) / 2e-6
    assert dplus == pytest.approx(fd, rel=1e-6)
    assert dminus == pytest.approx(-dplus)

def test_two_body_repeated_at_right_angle():
    with pytest.raises(RepeatedEigenvalue):
        two_body_eigendata(1., 1., np.pi / 2)
    frame = Sphere2Body().frame(np.array([np.pi / 2]))
    assert frame.has_repeated()
    with pytest.raises(DomainError):
        Sphere2Body().inertia(np.array([np.pi]))

def test_two_body_derivatives_match_fd():
    model = Sphere2Body(m1=1.5, m2=0.5)
    y = np.array([1.1])
    dS, d2S = model.inertia_derivatives(y)
    assert_allclose(dS, central_gradient(model.inertia, y), atol=1e-9)
    assert_allclose(d2S[0], central_gradient(lambda t: model.inertia_derivatives(t)[0][0], y),
                    atol=1e-8)

def test_s3body_inertia_matches_locked_inertia():
    q, x = sphere_shape()
    S = locked_inertia(q, np.ones(3))
    assert_allclose(np.sort(np.linalg.eigvalsh(S)), s3body.frame(x).eigenvalues, atol=1e-12)
    assert_allclose(np.trace(s3body.inertia(x)), 6.)

def test_s3body_section_realizes_shape():
    _, x = sphere_shape()
    Q = s3body.section(x)
    G = Q.T @ Q
    assert_allclose(np.diag(G), 1., atol=1e-10)
    assert_allclose([G[0, 1], G[0, 2], G[1, 2]], x, atol=1e-10)

def test_cayley_form_matches_det():
    _, x = sphere_shape()
    for lam in (0.3, 1.5, 2.9):
        det = np.linalg.det(lam * np.eye(3) - s3body.inertia(x))
        assert s3body.implicit(lam, x)[0] == pytest.approx(det, abs=1e-12)

def test_cayley_grid_matches_batch():
    axis = np.linspace(-1., 1., 9)
    grid = s3body.implicit_grid(1.2, [axis, axis, axis])
    assert grid.shape == (9, 9, 9)
    assert grid[2, 5, 7] == pytest.approx(s3body.implicit(1.2, [axis[2], axis[5], axis[7]])[0])
    C = s3body.domain_grid([axis, axis, axis])
    assert C[4, 4, 4] == pytest.approx(1.)

def test_s3body_gradients_match_fd():
    x = np.array([0.3, -0.2, 0.1])
    assert_allclose(s3body.grad_potential(x), central_gradient(s3body.potential, x),
                    rtol=1e-7, atol=1e-8)
    assert_allclose(s3body.hess_potential(x), central_gradient(s3body.grad_potential, x),
                    rtol=1e-6, atol=1e-6)

def test_s3body_singular_and_domain():
    with pytest.raises(SingularConfiguration):
        s3body.potential(np.array([1., 0., 0.]))
    assert s3body.domain_test(np.zeros(3))
    assert not s3body.domain_test(np.array([0.9, -0.9, 0.9]))
    assert s3body.local_chart(np.zeros(3)) == 'interior'
    assert s3body.local_chart(np.array([0.5, 0.5, -0.5])) == 'face'

def test_symmetry_maps_preserve_cayley():
    maps = s3body.symmetry_maps()
    assert len(maps) == 24
    assert len(s3body.symmetry_maps(reflections=False)) == 6
    _, x = sphere_shape()
    base = s3body.implicit(1.7, x)[0]
    for P, signs in maps:
        assert s3body.implicit(1.7, signs * (P @ x))[0] == pytest.approx(base, abs=1e-12)
        assert s3body.domain_value(signs * (P @ x)) == pytest.approx(s3body.domain_value(x))

def test_face_chart_consistency():
    face = s3body.charts['face']
    point = s3body.face_point(0.6, 0.9, 'F2')
    x = s3body.to_x(point)
    assert_allclose(np.arccos(x), [0.6, 1.5, 0.9], atol=1e-12)
    assert s3body.domain_value(x) == pytest.approx(0., abs=1e-12)
    back = s3body.face_coordinates(x)
    assert back.chart == 'face'
    assert_allclose(back.array, point.array, atol=1e-7)
    y = np.array([0.6, 1.5, 0.3])
    assert_allclose(face.grad_potential(y), central_gradient(face.potential, y), rtol=1e-7,
                    atol=1e-8)
    assert_allclose(np.linalg.eigvalsh(face.inertia(y)),
                    s3body.frame(face.to_x(y)).eigenvalues, atol=1e-12)

def test_face_point_opposite_side():
    point = s3body.face_point(2.0, 2.5, 'F0')
    x = s3body.to_x(point)
    assert_allclose(np.arccos(x), [2.0, 2 * np.pi - 4.5, 2.5], atol=1e-12)
    assert s3body.face_coordinates(x).array[2] == pytest.approx(np.pi)
    with pytest.raises(DomainError):
        s3body.face_point(1., 1., 'F1')

def test_repeated_lines_s3body():
    descriptor = s3body.repeated_descriptor()
    for d in ([1., 1., 1.], [1., -1., -1.]):
        x = 0.3 * np.array(d)
        assert descriptor.distance(x)[0] == pytest.approx(0., abs=1e-14)
        assert eig_sym(s3body.inertia(x)).has_repeated()
    assert descriptor.distance(np.array([0.3, 0., 0.]))[0] > 0.1

def test_rubber_ball_inertia():
    model = RubberBall()
    x = np.array([-1., 0.5, 1.])
    assert_allclose(np.diag(model.inertia(x)), [2.25, 4., 0.25])
    dS, d2S = model.inertia_derivatives(x)
    assert_allclose(dS, central_gradient(model.inertia, x), atol=1e-9)
    assert model.domain_value(x) == pytest.approx(0.5)
    assert model.repeated_descriptor().distance(np.array([0., 1., 2.]))[0] == pytest.approx(0.)

def test_triatomic_char_poly_matches_locked():
    q1, q2 = rng.normal(size=(2, 3))
    q3 = -(triatomic.m[0] * q1 + triatomic.m[1] * q2) / triatomic.m[2]
    x = np.array([q1 @ q1, q2 @ q2, q1 @ q2])
    locked = locked_inertia(np.array([q1, q2, q3]), triatomic.m)
    assert_allclose(np.linalg.eigvalsh(locked), triatomic.frame(x).eigenvalues,
                    rtol=1e-10, atol=1e-10)

def test_triatomic_positions_and_equilibrium():
    x0 = triatomic.equilibrium()
    q = triatomic.positions(x0)
    d = [np.linalg.norm(q[i] - q[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    assert_allclose(d, triatomic.rest, atol=1e-10)
    assert_allclose(triatomic.grad_potential(x0), 0., atol=1e-12)
    assert_allclose(triatomic.m @ q, 0., atol=1e-12)

def test_triatomic_s_point_spans_repeated_line():
    S = triatomic_S_matrix(*triatomic.m)
    assert_allclose(np.linalg.eigvalsh(S), [1., 1., 2.], atol=1e-12)
    x = triatomic.s_point()
    assert triatomic.frame(x).has_repeated()
    assert triatomic.frame(0.4 * x).has_repeated()

def test_fullbody_implicit_matches_det():
    x = np.array([0.7, -0.4, 1.1])
    for lam in (1.5, 3., 5.):
        det = np.linalg.det(lam * np.eye(3) - fullbody.inertia(x))
        assert fullbody.implicit(lam, x)[0] == pytest.approx(det, rel=1e-10, abs=1e-10)

def test_fullbody_gradients():
    x = np.array([0.7, -0.4, 1.1])
    assert_allclose(fullbody.grad_potential(x), central_gradient(fullbody.potential, x),
                    rtol=1e-8)
    dS, d2S = fullbody.inertia_derivatives(x)
    assert_allclose(dS, central_gradient(fullbody.inertia, x), atol=1e-9)
    with pytest.raises(SingularConfiguration):
        fullbody.potential(np.zeros(3))

def test_fullbody_repeated_curves():
    ellipse = fullbody_repeated_curves(fullbody.I, 1, n=50)
    hyperbola = fullbody_repeated_curves(fullbody.I, 2, n=50, t_max=1.)
    assert ellipse.kind == 'ellipse'
    assert hyperbola.kind == 'hyperbola'
    assert hyperbola.points.shape == (100, 3)
    assert fullbody_repeated_curves(fullbody.I, 3).empty
    for x in np.vstack([ellipse.points, hyperbola.points]):
        S = fullbody.inertia(x)
        assert abs(sym_discriminant(S)) < 1e-8
    with pytest.raises(ConfigError):
        fullbody_repeated_curves(fullbody.I, 4)

def test_ellipsoid_shape_checks():
    with pytest.raises(DomainError):
        check_ellipsoid_shape([1., 2., 3.])
    with pytest.raises(DegenerateShape):
        check_ellipsoid_shape([2., 2., 0.25])
    x = np.array([2., 1., 0.5])
    a, b = ellipsoid_blocks(x)
    assert_allclose(a, [1.25, 4.25, 5.])
    assert_allclose(b, [-1., -2., -4.])
    assert RiemannEllipsoid().inertia(x).shape == (6, 6)

def test_ellipsoid_solutions_satisfy_bracket():
    x = np.array([2., 0.8, 0.625])
    a, b = ellipsoid_blocks(x)
    inertia = block_inertia(a, b)
    for k in (1, 2, 3):
        solutions = ellipsoid_solutions(x, k)
        kinds = [sol.kind for sol in solutions]
        assert kinds.count('S') == 2
        assert kinds.count('R') == (2 if ellipsoid_D(x, k) > 0 else 0)
        for sol in solutions:
            out = inertia @ np.concatenate([sol.omega, sol.xi])
            p, q = bracket_so3xso3((sol.omega, sol.xi), (out[:3], out[3:]))
            assert_allclose(p, 0., atol=1e-10)
            assert_allclose(q, 0., atol=1e-10)

def test_ellipsoid_multipliers():
    x = np.array([2., 1., 0.5])
    # D_1 = (4 - 1.5)(4 + 0.5)(4 - 0.5)(4 + 1.5)
    assert ellipsoid_D(x, 1) == pytest.approx(2.5 * 4.5 * 3.5 * 5.5)
    u_plus, u_minus, D = ellipsoid_multipliers(x, 1)
    assert u_plus - u_minus == pytest.approx(np.sqrt(D))
    assert u_plus + u_minus == pytest.approx(1.25 - 8.)
    assert np.isnan(ellipsoid_multipliers(x, 2)[0])
    assert ellipsoid_D(x, 3) == 0.
    with pytest.raises(ConfigError):
        ellipsoid_D(x, 0)

def test_web_functions():
    x = np.array([2., 1., 0.5])
    assert type_s_web(x, 1, 1, 3., 1.) == pytest.approx(10 * 1.25 + 12 * 0.5)
    assert np.isnan(type_r_web(x, 2, 1, 3., 1.))
    X = np.array([x, [0.5, 1., 2.]])
    assert type_s_web(X, 2, -1, 3., 1.).shape == (2,)

def test_shape_point_chart_dispatch():
    chart, y = s3body.chart_for(ShapePoint((0.5, 1., 0.), 'face'))
    assert chart is s3body.charts['face']
    with pytest.raises(DomainError):
        s3body.get_chart('edge')
