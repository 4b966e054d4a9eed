"""
Property and oracle suite behind the `verify` command. Each check returns
(passed, detail); `run_all` collects them into a table.
"""
import logging
import numpy as np
import pandas as pd
from shapeweb_solver.errors import ShapeWebError
from shapeweb_solver.lie_core import eig_sym, char_poly, sym_discriminant, block_inertia, bracket_so3xso3
from shapeweb_solver.models import (Spherical3Body, Sphere2Body, Triatomic, FullBodySatellite,
                                    locked_inertia, fullbody_repeated_curves, ellipsoid_blocks,
                                    ellipsoid_solutions)
from shapeweb_solver import re_solver
from shapeweb_solver import stability

logger = logging.getLogger(__name__)

def _unit_vectors(rng, n):
    q = rng.normal(size=(n, 3))
    return q / np.linalg.norm(q, axis=1)[:, None]

def random_s3body_points(rng, n):
    """
    Interior shapes of three random points on the unit sphere.
    """
    X = []
    while len(X) < n:
        q = _unit_vectors(rng, 3)
        x = np.array([q[0] @ q[1], q[0] @ q[2], q[1] @ q[2]])
        if (np.abs(x) < 0.999).all():
            X.append(x)
    return np.array(X)

def random_ellipsoid_shapes(rng, n):
    u = rng.uniform(-1., 1., size=(n, 2))
    return np.exp(np.column_stack([u[:, 0], u[:, 1], -u.sum(axis=1)]))

def check_thresholds():
    found = {th.name: th for th in stability.thresholds()}
    ok = all(abs(th.residual) < 1e-12 for th in found.values())
    ok &= abs(found['theta_scal'].value - 0.906) < 5e-4
    ok &= abs(found['theta_iso'].value - 0.934) < 5e-4
    ok &= abs(found['phi_scal'].value - np.arcsin(1 / np.sqrt(10))) < 1e-9
    ok &= abs(found['L2_gyro'].value - 24 * np.sqrt(3)) < 1e-9
    return ok, ', '.join('{0}={1:.9g}'.format(k, v.value) for k, v in found.items())

def check_eigen_reconstruction(rng, n=200):
    model = Spherical3Body()
    err = 0.
    for x in random_s3body_points(rng, n):
        S = model.inertia(x)
        frame = eig_sym(S)
        V = frame.eigenvectors
        err = max(err, np.abs(V @ np.diag(frame.eigenvalues) @ V.T - S).max())
    return err < 1e-12, 'max error {0:.3g}'.format(err)

def check_char_poly(rng, n=200):
    err = 0.
    s3 = Spherical3Body()
    for _ in range(n):
        q = _unit_vectors(rng, 3)
        x = np.array([q[0] @ q[1], q[0] @ q[2], q[1] @ q[2]])
        a = char_poly(locked_inertia(q, np.ones(3))).coefficients
        b = char_poly(s3.inertia(x)).coefficients
        err = max(err, np.abs(a - b).max())
    tri = Triatomic()
    for _ in range(n):
        q1, q2 = rng.normal(size=(2, 3))
        q3 = -(tri.m[0] * q1 + tri.m[1] * q2) / tri.m[2]
        x = np.array([q1 @ q1, q2 @ q2, q1 @ q2])
        a = char_poly(locked_inertia(np.array([q1, q2, q3]), tri.m)).coefficients
        b = char_poly(tri.inertia(x)).coefficients
        err = max(err, np.abs(a - b).max() / (1 + np.abs(a).max()))
    return err < 1e-10, 'max coefficient error {0:.3g}'.format(err)

def check_fullbody_implicit(rng, n=100):
    model = FullBodySatellite()
    err = 0.
    for _ in range(n):
        x = rng.uniform(-2., 2., size=3)
        lam = rng.uniform(0., 8.)
        det = np.linalg.det(lam * np.eye(3) - model.inertia(x))
        err = max(err, abs(model.implicit(lam, x)[0] - det) / (1 + abs(det)))
    return err < 1e-9, 'max relative error {0:.3g}'.format(err)

def check_fullbody_repeated(n=100):
    model = FullBodySatellite()
    worst = 0.
    for m in (1, 2):
        curve = fullbody_repeated_curves(model.I, m, n=n, t_max=1.)
        for x in curve.points:
            S = model.inertia(x)
            spread = np.ptp(np.linalg.eigvalsh(S))
            worst = max(worst, abs(sym_discriminant(S)) / (1 + spread**6))
    return worst < 1e-10, 'max scaled discriminant {0:.3g}'.format(worst)

def check_symmetry_closure(rng, n=20):
    """
    The inertia locus is closed under all 24 permutation and sign-flip maps.
    Relative equilibria are only closed under the 6 permutations: the cot
    potential is not invariant under sign flips, so the isosceles curve is
    mapped by permutations alone.
    """
    model = Spherical3Body()
    maps = model.symmetry_maps()
    err = 0.
    for x in random_s3body_points(rng, n):
        for lam in (0.5, 1.5, 2.5):
            base = model.implicit(lam, x)[0]
            for P, signs in maps:
                err = max(err, abs(model.implicit(lam, signs * (P @ x))[0] - base))
    closed = True
    curve = re_solver.isosceles_curve(np.array([-0.6, 0.3, 0.7]), model=model)
    for re in curve.points:
        for P, signs in model.symmetry_maps(reflections=False):
            closed &= re_solver.is_normal_re(model, signs * (P @ re.x), tol=1e-7)
    return (err < 1e-12) and closed and len(curve) > 0, \
        'implicit error {0:.3g}, {1} isosceles points mapped'.format(err, len(curve))

def check_kappa_sign(resolution=16):
    catalog = re_solver.classify_all(Spherical3Body(), resolution=resolution)
    normal = [re for curve in catalog.families.values() for re in curve.points]
    ok = all(re.kappa >= 0 for re in normal)
    ok &= all(re.residual <= 1e-7 * max(1., re.kappa) for re in normal)
    return ok, '{0} normal equilibria'.format(len(normal))

def check_branch_continuity(resolution=64):
    model = Spherical3Body()
    thetas = np.linspace(0., np.pi, resolution + 2)[1:-1]
    lam = []
    for theta in thetas[thetas < 2 * np.pi / 3]:
        try:
            lam.append(re_solver.eulerian_family(theta, model).lam)
        except ShapeWebError:
            continue
    jump = np.abs(np.diff(lam)).max()
    return jump < 0.2, 'largest eigenvalue step {0:.3g}'.format(jump)

def check_ellipsoid_solutions(rng, n=100):
    worst = 0.
    for x in random_ellipsoid_shapes(rng, n):
        a, b = ellipsoid_blocks(x)
        inertia = block_inertia(a, b)
        for k in (1, 2, 3):
            for sol in ellipsoid_solutions(x, k):
                out = inertia @ np.concatenate([sol.omega, sol.xi])
                p, q = bracket_so3xso3((sol.omega, sol.xi), (out[:3], out[3:]))
                worst = max(worst, np.linalg.norm(p) + np.linalg.norm(q))
    return worst < 1e-9, 'max bracket residual {0:.3g}'.format(worst)

def check_two_body_abnormal():
    model = Sphere2Body()
    catalog = re_solver.classify_two_body(model, resolution=64)
    result = re_solver.abnormal_check(model, np.array([np.pi / 2]), n_sweep=64)
    dV = model.grad_potential(np.array([np.pi / 2]))[0]
    err = max(abs(model.m2 * w[0] * w[1] - dV) for w in result.witnesses)
    return result.exists and err < 1e-10 and len(catalog.abnormal) == 1, \
        '{0} witnesses, max error {1:.3g}'.format(len(result.witnesses), err)

def check_abnormal_lines(n=51):
    """
    Along the four body diagonals only the centre and the three collinear-face
    midpoints are abnormal. The midpoint (-0.5, -0.5, -0.5) of the equilateral
    face is a critical point of V where grad K never vanishes.
    """
    model = Spherical3Body()
    directions = [(1., 1., 1.), (1., -1., -1.), (-1., 1., -1.), (-1., -1., 1.)]
    expected = {(0.5, -0.5, 0.5), (0.5, 0.5, -0.5), (-0.5, 0.5, 0.5), (0., 0., 0.)}
    wrong = []
    for d in directions:
        for t in np.linspace(-0.5, 0.75, n):
            x = t * np.array(d)
            exists = re_solver.abnormal_check(model, x).exists
            key = tuple(np.round(x, 9) + 0.)
            if exists != (key in expected):
                wrong.append(key)
    return not wrong, '{0} points disagree'.format(len(wrong))

def check_face_formulas():
    model = Spherical3Body()
    worst = 0.
    for theta in np.concatenate([np.linspace(0.2, 1.4, 7), np.linspace(1.65, 2.0, 5),
                                 np.linspace(2.2, 2.9, 5)]):
        re = re_solver.eulerian_family(theta, model)
        H, _ = stability.face_hessian(model, re)
        E1 = H[0, 0] + 2 * H[0, 1] + H[1, 1]
        E2 = H[0, 0] - 2 * H[0, 1] + H[1, 1]
        F1, F2 = stability.euler_E_formulas(theta)
        worst = max(worst, abs(E1 - F1) / abs(F1), abs(E2 - F2) / abs(F2))
    return worst < 1e-8, 'max relative error {0:.3g}'.format(worst)

def check_determinism(resolution=16):
    a = re_solver.classify_all(Spherical3Body(), resolution=resolution).to_frame()
    b = re_solver.classify_all(Spherical3Body(), resolution=resolution).to_frame()
    return a.equals(b), '{0} rows'.format(len(a))

def run_all(seed=0):
    """
    Run every check and return a table with columns check, passed, detail.
    """
    rng = np.random.default_rng(seed)
    checks = [('thresholds', check_thresholds),
              ('eigen reconstruction', lambda: check_eigen_reconstruction(rng)),
              ('characteristic polynomial', lambda: check_char_poly(rng)),
              ('full-body implicit', lambda: check_fullbody_implicit(rng)),
              ('full-body repeated curves', check_fullbody_repeated),
              ('symmetry closure', lambda: check_symmetry_closure(rng)),
              ('kappa sign', check_kappa_sign),
              ('branch continuity', check_branch_continuity),
              ('ellipsoid solutions', lambda: check_ellipsoid_solutions(rng)),
              ('two-body abnormal', check_two_body_abnormal),
              ('abnormal lines', check_abnormal_lines),
              ('face formulas', check_face_formulas),
              ('determinism', check_determinism)]
    rows = []
    for name, check in checks:
        try:
            passed, detail = check()
        except ShapeWebError as err:
            passed, detail = False, '{0}: {1}'.format(type(err).__name__, err)
        logger.info('%s: %s (%s)', name, 'pass' if passed else 'FAIL', detail)
        rows.append({'check': name, 'passed': bool(passed), 'detail': detail})
    return pd.DataFrame(rows, columns=['check', 'passed', 'detail'])
