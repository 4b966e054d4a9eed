import numpy as np
import pytest
from numpy.testing import assert_allclose
from shapeweb_solver.errors import ConfigError, NotAnRE
from shapeweb_solver.lie_core import eig_sym
from shapeweb_solver.models import Spherical3Body
from shapeweb_solver.re_solver import eulerian_family, lagrange_family, planar_family, classify_all
from shapeweb_solver import stability
from shapeweb_solver.stability import (thresholds, transition_points, verdict, jx_signature,
                                       euler_E_formulas, face_hessian, hess_vl,
                                       signature_report, signature_scan, STABLE, UNSTABLE,
                                       INDETERMINATE, SCAN_COLUMNS)

s3body = Spherical3Body()
found = {th.name: th.value for th in thresholds()}

def test_thresholds():
    assert set(found) == {'theta_scal', 'theta_iso', 'phi_scal', 'L2_gyro'}
    assert all(abs(th.residual) < 1e-12 for th in thresholds())
    assert found['theta_scal'] == pytest.approx(0.906, abs=5e-4)
    assert found['theta_iso'] == pytest.approx(np.arccos(8**-0.25), abs=1e-12)
    assert found['phi_scal'] == pytest.approx(np.arcsin(1 / np.sqrt(10)), abs=1e-12)
    assert found['L2_gyro'] == pytest.approx(24 * np.sqrt(3), rel=1e-12)

def test_transition_points():
    euler = transition_points('euler')
    assert euler['abnormal'] == pytest.approx(np.pi / 3)
    lagrange = transition_points('lagrange')
    assert lagrange['pi/2 + phi_scal'] - np.pi / 2 == pytest.approx(found['phi_scal'])
    assert transition_points('planar-iii')['L2_gyro'] == pytest.approx(24 * np.sqrt(3))
    with pytest.raises(ConfigError):
        transition_points('scalene')

def test_verdict_rules():
    assert verdict((3, 0, 0), (2, 0, 0)) == STABLE
    assert verdict((2, 0, 1), (2, 0, 0)) == UNSTABLE
    assert verdict((1, 0, 2), (2, 0, 0)) == INDETERMINATE
    assert verdict((2, 1, 0), (2, 0, 0)) == INDETERMINATE

def test_jx_signature_by_rank():
    frame = eig_sym(np.diag([1., 2., 3.]))
    assert jx_signature(frame, 2) == (2, 0, 0)
    assert jx_signature(frame, 1) == (1, 0, 1)
    assert jx_signature(frame, 0) == (0, 0, 2)

def test_euler_E_formulas():
    E1, E2 = euler_E_formulas(np.pi / 4)
    assert E1 == pytest.approx(16.)
    assert E2 == pytest.approx(-8.)
    # E2 changes sign at theta_scal
    assert euler_E_formulas(found['theta_scal'] - 0.01)[1] < 0
    assert euler_E_formulas(found['theta_scal'] + 0.01)[1] > 0

def test_face_hessian_matches_formulas():
    for theta in (0.5, 1.2, 1.8, 2.5):
        re = eulerian_family(theta, s3body)
        H, face = face_hessian(s3body, re)
        assert face == ('F2' if theta < np.pi / 2 else 'F0')
        E1, E2 = euler_E_formulas(theta)
        assert H[0, 0] + 2 * H[0, 1] + H[1, 1] == pytest.approx(E1, rel=1e-8)
        assert H[0, 0] - 2 * H[0, 1] + H[1, 1] == pytest.approx(E2, rel=1e-8)

def test_face_hessian_matches_finite_differences():
    for re in (eulerian_family(0.5, s3body), eulerian_family(2.5, s3body),
               planar_family(50., s3body)):
        H = hess_vl(s3body, re)
        H_fd = hess_vl(s3body, re, method='fd')
        assert_allclose(H_fd, H, rtol=1e-5, atol=1e-5 * (1 + np.abs(H).max()))

def test_interior_hessian_matches_finite_differences():
    re = lagrange_family(1.95, s3body)
    H = hess_vl(s3body, re)
    assert_allclose(hess_vl(s3body, re, method='fd'), H, rtol=1e-5,
                    atol=1e-5 * (1 + np.abs(H).max()))

def test_hess_vl_errors():
    re = lagrange_family(1.0, s3body)
    with pytest.raises(ConfigError):
        hess_vl(s3body, re, method='spectral')
    abnormal = classify_all(s3body, resolution=8).abnormal[0]
    with pytest.raises(NotAnRE):
        hess_vl(s3body, abnormal)

def test_planar_transversal_term():
    for Lsq in (30., 50.):
        re = planar_family(Lsq, s3body)
        assert stability.transversal_term(s3body, re) == pytest.approx(
            stability.planar_transversal(Lsq), rel=1e-9, abs=1e-12)
    assert stability.planar_transversal(found['L2_gyro']) == pytest.approx(0., abs=1e-12)

def test_lagrange_tangential_sign():
    u = np.array([1., -1., 0.]) / np.sqrt(2)
    for phi in (1.0, 1.3, 1.7, 2.0):
        H = hess_vl(s3body, lagrange_family(phi, s3body))
        value = u @ H @ u
        # The orthogonal complement of the Lagrange line is an eigenspace
        assert_allclose(H @ u, value * u, atol=1e-8 * (1 + np.abs(H).max()))
        assert np.sign(value) == np.sign(stability.lagrange_tangential_eigenvalue(phi))

def test_lagrange_tangential_factor_roots():
    for c in (1 / np.sqrt(10), -1 / np.sqrt(10)):
        assert stability.lagrange_tangential_factor(2 * (1 - c)) == pytest.approx(0., abs=1e-12)
    assert stability.lagrange_tangential_factor(2.) == 0.

def test_signature_reports():
    euler = signature_report(s3body, eulerian_family(0.5, s3body))
    assert euler.verdict == UNSTABLE
    assert euler.sig_m == '+++'
    assert euler.sig_jx == '--'
    assert len(euler.sig_vl) == 3
    lagrange = signature_report(s3body, lagrange_family(1.95, s3body))
    assert lagrange.verdict == STABLE
    assert lagrange.sig_vl == '+++'
    planar = signature_report(s3body, planar_family(50., s3body))
    assert planar.verdict == STABLE
    assert planar.sig_jx == '++'
    assert planar.det_vl > 0
    assert signature_report(s3body, planar_family(30., s3body)).verdict != STABLE
    assert list(planar.record()) == SCAN_COLUMNS

def test_report_flags_nearby_thresholds():
    report = signature_report(s3body, eulerian_family(found['theta_scal'] + 5e-3, s3body))
    assert 'theta_scal' in report.thresholds_nearby
    assert signature_report(s3body, eulerian_family(0.5, s3body)).thresholds_nearby == []

def test_scan_records_failures():
    scan = signature_scan(s3body, 'euler', params=[0.5, np.pi / 3, 2.5], refine=False,
                          threads=1)
    assert list(scan.table.columns) == SCAN_COLUMNS
    assert len(scan.table) == 2
    assert list(scan.failures) == [pytest.approx(np.pi / 3)]

def test_euler_scan_transitions():
    scan = signature_scan(s3body, 'euler', n=500, threads=2)
    assert len(scan.regimes()) == 5
    assert len(scan.transitions) == 4
    assert scan.table['param'].is_monotonic_increasing
    for target in (found['theta_scal'], found['theta_iso'], np.pi / 3, 2 * np.pi / 3):
        assert min(abs(t - target) for t in scan.transitions) < 1e-4

def test_lagrange_scan_transitions():
    scan = signature_scan(s3body, 'lagrange', n=500, threads=2)
    phi_scal = found['phi_scal']
    assert len(scan.regimes()) == 4
    assert len(scan.transitions) == 3
    for target in (np.pi / 2 - phi_scal, np.pi / 2, np.pi / 2 + phi_scal):
        assert min(abs(t - target) for t in scan.transitions) < 1e-4
    stable = scan.table[scan.table['verdict'] == STABLE]['param']
    assert len(stable) > 0
    assert (stable > np.pi / 2 + phi_scal).all()

def test_scan_zero_tolerance():
    scan = signature_scan(s3body, 'planar-iii', n=4, threads=1, refine=False, tau_zero=1e3)
    assert (scan.table['sig_vl'] == '000').all()
    assert len(scan.regimes()) == 1

def test_planar_scan_transition():
    scan = signature_scan(s3body, 'planar-iii', n=20, threads=1)
    assert len(scan.transitions) == 1
    assert scan.transitions[0] == pytest.approx(found['L2_gyro'], abs=1e-6)
    with pytest.raises(ConfigError):
        signature_scan(s3body, 'scalene')
