import json
import warnings
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from shapeweb_solver.errors import (AbnormalAt, DomainError, NotAnRE, NotOnLocus,
                                    RepeatedEigenvalue, SingularConfiguration, ConfigError)
from shapeweb_solver.models import (ModelSystem, Sphere2Body, Spherical3Body, FullBodySatellite,
                                    Triatomic)
from shapeweb_solver.web_engine import LeafSpec
from shapeweb_solver import models, re_solver, verify
from shapeweb_solver.re_solver import (re_test, lagrange_residual, best_branch, is_normal_re,
                                       merge_equilibria, eulerian_family, lagrange_family,
                                       planar_family, abnormal_check, classify_all,
                                       classify_two_body, lagrange_amended_profile)
from shapeweb_solver.stability import thresholds

s3body = Spherical3Body()
fullbody = FullBodySatellite()
s3body_catalog = classify_all(s3body, resolution=16)
found_thresholds = {th.name: th.value for th in thresholds()}

def test_re_test_tolerances():
    assert re_test(0.5, 1e-9, 0.5)
    assert not re_test(-1e-6, 0., 1.)
    assert re_test(1., 5e-8, 10.)
    assert not re_test(1., 5e-8, 1.)

def test_lagrange_family_closed_form():
    phi = 1.0
    re = lagrange_family(phi)
    s, c = np.sin(phi), np.cos(phi)
    assert re.family == 'Lagrange-2i'
    assert re.normal
    assert_allclose(re.x, np.full(3, c))
    assert re.lam == pytest.approx(2 * (1 - c))
    assert re.kappa == pytest.approx(1.5 / s**3)
    assert re.Lsq == pytest.approx(12 * (1 - c)**2 / s**3)
    assert re.Lsq == pytest.approx(2 * re.kappa * re.lam**2)
    assert re.residual < 1e-10
    assert_allclose(np.abs(re.omega_dir), np.ones(3) / np.sqrt(3), atol=1e-12)
    assert np.linalg.norm(re.omega) == pytest.approx(np.sqrt(2 * re.kappa))

def test_lagrange_family_errors():
    with pytest.raises(AbnormalAt):
        lagrange_family(np.pi / 2)
    with pytest.raises(DomainError):
        lagrange_family(2.2)
    with pytest.raises(ConfigError):
        lagrange_family(1.0, model=Sphere2Body())

def test_lagrange_amended_profile_critical_point():
    re = lagrange_family(1.0)
    profile, critical = lagrange_amended_profile(re.Lsq)
    assert list(profile.columns) == ['phi', 'VL', 'dVL', 'd2VL']
    assert any(abs(phi - 1.0) < 1e-8 for phi, _ in critical)

def test_eulerian_family_small_angle():
    theta = 0.5
    re = eulerian_family(theta)
    assert re.family == 'Euler-i'
    assert re.chart == 'face'
    assert_allclose(np.arccos(re.x), [theta, 2 * theta, theta], atol=1e-10)
    assert re.lam == pytest.approx(1.5 - abs(1 + 2 * np.cos(2 * theta)) / 2)
    assert re.kappa > 0
    assert abs(re.omega_dir[1]) < 0.5
    assert re.param == theta

def test_eulerian_family_branches():
    assert eulerian_family(2.5).family == 'Euler-ii'
    assert eulerian_family(1.8).family == 'Euler-i'
    with pytest.raises(AbnormalAt):
        eulerian_family(np.pi / 3)
    with pytest.raises(SingularConfiguration):
        eulerian_family(np.pi / 2)
    with pytest.raises(RepeatedEigenvalue):
        eulerian_family(2 * np.pi / 3)
    with pytest.raises(DomainError):
        eulerian_family(np.pi)

def test_planar_family():
    re = planar_family(50.)
    assert re.family == 'Planar-iii'
    assert re.lam == pytest.approx(3.)
    assert re.Lsq == pytest.approx(50.)
    assert abs(re.omega_dir[1]) == pytest.approx(1.)
    assert_allclose(np.arccos(np.clip(re.x, -1., 1.)), 2 * np.pi / 3, atol=1e-7)
    with pytest.raises(DomainError):
        planar_family(-1.)

def test_multiplier_helpers():
    x = np.full(3, np.cos(1.0))
    kappa, residual = lagrange_residual(s3body, x, 0)
    assert kappa == pytest.approx(1.5 / np.sin(1.0)**3)
    assert residual < 1e-10
    with pytest.raises(RepeatedEigenvalue):
        lagrange_residual(s3body, x, 1)
    assert is_normal_re(s3body, x)
    generic = np.array([0.3, -0.2, 0.1])
    assert not is_normal_re(s3body, generic)
    with pytest.raises(NotAnRE):
        best_branch(s3body, generic, s3body.frame(generic))

def test_merge_equilibria():
    a = lagrange_family(0.8)
    b = lagrange_family(1.2)
    merged = merge_equilibria([b, a, b])
    assert len(merged) == 2
    assert merged[0].x[0] < merged[1].x[0]

def test_scalene_crossing_matches_threshold():
    assert re_solver.scalene_diagonal_crossing() == pytest.approx(
        found_thresholds['theta_scal'], abs=1e-8)

def test_isosceles_crossings():
    assert re_solver.isosceles_boundary_crossing() == pytest.approx(
        np.arccos(8**-0.25), abs=1e-10)
    crossings = re_solver.isosceles_lagrange_crossings()
    phi_scal = np.arcsin(1 / np.sqrt(10))
    assert_allclose(crossings, [np.pi / 2 - phi_scal, np.pi / 2 + phi_scal], atol=1e-5)

def test_isosceles_eigenvalue_formula():
    a, b = 0.3, -0.4
    lam = np.linalg.eigvalsh(s3body.inertia(np.array([a, b, a])))
    for s in (1, -1):
        assert np.abs(lam - re_solver.isosceles_eigenvalue(a, b, s)).min() < 1e-12

def test_scalene_curve_near_diagonal():
    curve = re_solver.scalene_curve(np.linspace(0.8, 1.0, 9), model=s3body)
    assert len(curve) > 0
    for re in curve.points:
        assert re.kappa >= 0
        assert abs(s3body.domain_value(re.x)) < 1e-9
        t12, t13, t23 = np.arccos(np.clip(re.x, -1., 1.))
        assert t13 == pytest.approx(t12 + t23, abs=1e-9)
        assert abs(t12 - t23) > 1e-6

def test_isosceles_curve_near_lagrange_line():
    curve = re_solver.isosceles_curve(np.linspace(0.2, 0.45, 6), model=s3body)
    assert len(curve) > 0
    for re in curve.points:
        assert re.x[0] == re.x[2]
        assert re.kappa >= 0
        assert is_normal_re(s3body, re.x, tol=1e-7)

def test_families_need_cot_potential():
    chord = Spherical3Body(potential='chord')
    with pytest.raises(ConfigError):
        re_solver.scalene_curve(model=chord)
    with pytest.raises(ConfigError):
        re_solver.isosceles_curve(model=chord)

def test_face_critical_points():
    rows = re_solver.face_critical_points(s3body, face='F0', n=20)
    assert rows.shape[0] > 0
    assert_allclose(rows.sum(axis=1), 2 * np.pi, atol=1e-12)
    assert re_solver.coplanar_condition(0.5, 0.7, 0.5) == pytest.approx(0.)

def test_abnormal_check_three_body():
    assert abnormal_check(s3body, np.zeros(3)).exists
    assert abnormal_check(s3body, np.zeros(3)).multiplicity == 3
    assert abnormal_check(s3body, np.array([0.5, -0.5, 0.5])).exists
    assert not abnormal_check(s3body, np.array([-0.5, -0.5, -0.5])).exists
    assert not abnormal_check(s3body, 0.3 * np.ones(3)).exists
    assert not abnormal_check(s3body, np.array([0.3, -0.3, -0.3])).exists
    with pytest.raises(NotOnLocus):
        abnormal_check(s3body, np.array([0.3, -0.2, 0.1]))

def test_abnormal_check_great_circle_midpoint():
    result = abnormal_check(s3body, np.array([-0.5, -0.5, -0.5]))
    assert result.multiplicity == 2
    assert not result.exists
    assert not result.witnesses
    assert np.isnan(result.alignment)
    assert result.grad_K_min == pytest.approx(1 / (2 * np.sqrt(2)), rel=1e-3)

class SplitPair(ModelSystem):
    """
    Two shape coordinates splitting a double eigenvalue along diag(1, -1, 0),
    with a potential critical at the origin.
    """
    model_id = 'split'
    dim = 2

    def inertia(self, y):
        s = y[0] + y[1]
        return np.diag([1 + s, 1 - s, 5.])

    def inertia_derivatives(self, y):
        d = np.diag([1., -1., 0.])
        return np.array([d, d]), np.zeros((2, 2, 3, 3))

    def potential(self, y):
        return y @ y

    def grad_potential(self, y):
        return 2 * np.asarray(y, dtype=float)

def test_abnormal_check_at_critical_point():
    result = abnormal_check(SplitPair(), np.zeros(2))
    assert result.exists
    assert result.multiplicity == 2
    assert result.grad_K_min < 1e-8
    assert len(result.witnesses) == 2
    for w in result.witnesses:
        assert np.linalg.norm(w) == pytest.approx(1.)
        assert abs(w[0]) == pytest.approx(abs(w[1]), abs=1e-6)
        assert abs(w[2]) < 1e-12

def test_abnormal_lines_and_symmetry_closure():
    passed, detail = verify.check_abnormal_lines(n=11)
    assert passed, detail
    assert len(s3body.symmetry_maps()) == 24
    assert len(s3body.symmetry_maps(reflections=False)) == 6
    passed, detail = verify.check_symmetry_closure(np.random.default_rng(0), n=5)
    assert passed, detail

def test_abnormal_centre_witness():
    result = abnormal_check(s3body, np.zeros(3))
    w = result.witnesses[0]
    grad_K = -np.array([w[0] * w[1], w[0] * w[2], w[1] * w[2]])
    assert_allclose(grad_K, s3body.grad_potential(np.zeros(3)), atol=1e-4)

def test_two_body_catalog():
    catalog = classify_two_body(Sphere2Body(), resolution=32)
    assert len(catalog.families['Generic']) == 32
    assert len(catalog.abnormal) == 1
    abnormal = catalog.abnormal[0]
    assert not abnormal.normal
    assert abnormal.x[0] == pytest.approx(np.pi / 2)
    unequal = classify_two_body(Sphere2Body(m1=1., m2=2.), resolution=32)
    assert not unequal.abnormal
    frame = catalog.to_frame()
    assert_allclose(frame['theta12'], frame['x1'])

def test_three_body_catalog():
    families = s3body_catalog.families
    assert set(families) == {'Euler-i', 'Euler-ii', 'Planar-iii', 'Lagrange-2i',
                             'Scalene-iv', 'Isosceles-2ii'}
    assert len(families['Lagrange-2i']) == 16
    assert len(families['Planar-iii']) == 4
    assert len(families['Euler-i']) > 0 and len(families['Euler-ii']) > 0
    assert len(s3body_catalog.abnormal) == 4
    for curve in families.values():
        for re in curve.points:
            assert re.kappa >= 0
            assert re.normal
    assert all(re.family == 'Abnormal' for re in s3body_catalog.abnormal)

def test_catalog_exports(tmp_path):
    csv = tmp_path / 'catalog.csv'
    js = tmp_path / 'catalog.json'
    s3body_catalog.to_csv(str(csv))
    s3body_catalog.to_json(str(js))
    df = pd.read_csv(str(csv))
    assert list(df.columns) == re_solver.CATALOG_COLUMNS
    assert len(df) == len(s3body_catalog.to_frame())
    data = json.loads(js.read_text())
    assert data['model'] == 's3body'
    assert len(data['equilibria']) == len(df)
    assert sum(not row['normal'] for row in data['equilibria']) == 4

def test_catalog_is_deterministic():
    again = classify_all(s3body, resolution=16)
    pd.testing.assert_frame_equal(again.to_frame(), s3body_catalog.to_frame())

def test_chord_catalog_keeps_symmetric_families():
    catalog = classify_all(Spherical3Body(potential='chord'), resolution=16)
    assert 'Scalene-iv' not in catalog.families
    assert len(catalog.families['Lagrange-2i']) > 0

def test_fullbody_leaf_search():
    level = 4.
    seeds = re_solver.fullbody_axis_seeds(fullbody, level)
    assert len(seeds) == 12
    assert len(re_solver.fullbody_axis_seeds(fullbody, 1.5)) == 4
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        found = re_solver.find_re_on_leaf(fullbody, LeafSpec(fullbody, level), seeds, threads=2)
    assert len(found) > 0
    for re in found:
        assert re.lam == pytest.approx(level, abs=1e-8)
        assert re.kappa >= 0

def test_great_circle_re():
    r = 2.
    found = re_solver.great_circle_re(fullbody, r)
    assert len(found) > 0
    for re in found:
        assert np.linalg.norm(re.x) == pytest.approx(r)
        assert re.kappa == pytest.approx(1 / (2 * r**3))

def test_triatomic_bifurcation():
    model = Triatomic()
    x0 = model.equilibrium()
    branches = re_solver.triatomic_bifurcation(model)
    assert set(branches) == {0.1, 0.05, 0.02}
    for radius, found in branches.items():
        for re in found:
            assert np.linalg.norm(re.x - x0) < radius
            assert re.kappa >= 0

def test_ellipsoid_brute_force():
    x = np.array([2., 1., 0.5])
    n = 40
    solutions = re_solver.ellipsoid_brute_force(x, 1, n=n)
    assert set(solutions['kind']) == {'S', 'R'}
    assert len(solutions[solutions['kind'] == 'S']) == 6
    R = solutions[solutions['kind'] == 'R']
    assert R['alpha'].nunique() == n
    for sign in (1, -1):
        assert (R['sign'] == sign).sum() >= n // 2
    assert (solutions['residual'] <= 1e-9).all()

def test_ellipsoid_brute_force_no_type_r():
    x = np.array([2., 1., 0.5])
    assert models.ellipsoid_D(x, 2) < 0
    solutions = re_solver.ellipsoid_brute_force(x, 2, n=30)
    assert solutions['kind'].tolist() == ['S'] * 6

def test_record_layout():
    re = lagrange_family(1.0)
    row = re.record()
    assert row['theta12'] == pytest.approx(1.0)
    assert row['theta23'] == pytest.approx(1.0)
    assert np.isnan(re.record(angles=False)['theta12'])
    assert 'Lagrange-2i' in repr(re)
