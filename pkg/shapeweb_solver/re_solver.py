"""
Relative equilibria as Lagrange multiplier problems on the leaves of the
inertia-eigenvalue web.

A shape x with a simple eigenvalue branch lam_j is a normal relative
equilibrium when grad V(x) = kappa grad lam_j(x) with kappa >= 0; the
angular velocity is then parallel to the eigenvector with |omega|^2 = 2 kappa
and the squared momentum is Lsq = 2 kappa lam_j^2. On the repeated-eigenvalue
locus the branch is not differentiable and the abnormal test of
`abnormal_check` applies instead.
"""
import json
import logging
import warnings
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
import numpy as np
import pandas as pd
import scipy.optimize
from shapeweb_solver.errors import (ShapeWebError, DomainError, RepeatedEigenvalue, AbnormalAt,
                                    SingularConfiguration, NotAnRE, NotOnLocus, ConfigError)
from shapeweb_solver.lie_core import track_branch
from shapeweb_solver.models import (ShapePoint, Sphere2Body, Spherical3Body, CotPotential,
                                    check_ellipsoid_shape, ellipsoid_blocks,
                                    ellipsoid_multipliers, _klm)
from shapeweb_solver.utils import bracket_roots, damped_newton
from shapeweb_solver.config import worker_count

logger = logging.getLogger(__name__)

eps = np.finfo(float).eps

RE_TOL = 1e-8
MERGE_TOL = 1e-6
CATALOG_COLUMNS = ['family', 'x1', 'x2', 'x3', 'theta12', 'theta23',
                   'lambda', 'kappa', 'Lsq', 'normal']

@dataclass(frozen=True)
class RelEquilibrium:
    """
    A relative equilibrium of a model.

    Attributes:
    -----------
    x : np.ndarray
        Interior chart coordinates of the shape (boundary points included)
    y : np.ndarray
        Coordinates in the chart the equilibrium was solved in
    chart : str
        Name of that chart
    branch : int
        Eigenvalue index (ascending order) of the rotation axis
    lam : float
        Moment of inertia about the rotation axis
    omega_dir : np.ndarray (3)
        Unit rotation axis in the body frame
    kappa : float
        Multiplier, |omega|^2 / 2
        (grad V = kappa grad lam, so |omega|^2 = 2 kappa and Lsq = 2 kappa lam^2)
    family : str
        Family tag, 'Generic' when found by a leaf search
    normal : bool
        False for abnormal equilibria on the repeated-eigenvalue locus
    residual : float
        |grad V - kappa grad lam| at the solution
    param : float
        Family parameter (theta, phi, Lsq, ...) when known
    """
    x: np.ndarray
    y: np.ndarray
    chart: str
    branch: int
    lam: float
    omega_dir: np.ndarray
    kappa: float
    family: str = 'Generic'
    normal: bool = True
    residual: float = 0.
    param: float = np.nan

    @property
    def Lsq(self):
        return 2 * self.kappa * self.lam**2

    @property
    def omega(self):
        return np.sqrt(2 * self.kappa) * self.omega_dir

    @property
    def point(self):
        return ShapePoint(tuple(self.y), self.chart)

    def record(self, angles=True):
        """
        Catalog row; `angles` fills theta12, theta23 from cosine coordinates.
        """
        x = np.full(3, np.nan)
        x[:self.x.size] = self.x
        theta12 = theta23 = np.nan
        if self.x.size == 1:
            theta12 = float(self.x[0])
        elif angles:
            theta12, theta23 = np.arccos(np.clip(self.x[[0, 2]], -1., 1.))
        return {'family': self.family, 'x1': x[0], 'x2': x[1], 'x3': x[2],
                'theta12': theta12, 'theta23': theta23, 'lambda': self.lam,
                'kappa': self.kappa, 'Lsq': self.Lsq, 'normal': bool(self.normal)}

    def __repr__(self):
        return 'RelEquilibrium({0}, x={1}, lam={2:.9g}, Lsq={3:.9g}, normal={4})'.format(
            self.family, np.array2string(self.x, precision=6), self.lam, self.Lsq, self.normal)

@dataclass
class FamilyCurve:
    """
    A one-parameter family of relative equilibria.

    Attributes:
    -----------
    family : str
        Family tag
    equation : str
        Defining condition of the family
    param_range : tuple
        Parameter interval swept
    points : list of RelEquilibrium
    """
    family: str
    equation: str
    param_range: tuple
    points: list = field(default_factory=list)

    @property
    def params(self):
        return np.array([re.param for re in self.points])

    def __len__(self):
        return len(self.points)

    def to_frame(self, angles=True):
        return pd.DataFrame([re.record(angles) for re in self.points], columns=CATALOG_COLUMNS)

@dataclass
class Catalog:
    """
    All relative equilibria found for a model: normal families and abnormal records.
    """
    model_id: str
    families: dict = field(default_factory=dict)
    abnormal: list = field(default_factory=list)

    def to_frame(self):
        angles = (self.model_id == 's3body')
        frames = [curve.to_frame(angles) for curve in self.families.values() if len(curve)]
        if self.abnormal:
            frames.append(pd.DataFrame([re.record(angles) for re in self.abnormal],
                                       columns=CATALOG_COLUMNS))
        if not frames:
            return pd.DataFrame(columns=CATALOG_COLUMNS)
        return pd.concat(frames, ignore_index=True)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.9g')

    def to_json(self, path):
        records = self.to_frame().to_dict(orient='records')
        for record in records:
            for key, value in record.items():
                if isinstance(value, float):
                    record[key] = None if np.isnan(value) else float('{0:.9g}'.format(value))
        with open(path, 'w') as f:
            json.dump({'model': self.model_id, 'equilibria': records}, f, indent=2)

def re_test(kappa, residual, grad_norm, tol=RE_TOL):
    """
    Acceptance test for a multiplier solution: kappa >= 0 and a residual
    below tol relative to |grad V| (absolute when |grad V| < 1).
    """
    return bool((kappa >= -tol) and (residual <= tol * max(grad_norm, 1.)))

def _kappa_residual(chart, y, j, frame):
    g = chart.grad_potential(y)
    d = chart.eigen_gradient(y, j, frame)
    dd = d @ d
    kappa = (g @ d) / dd if dd > eps * (1 + g @ g) else 0.
    return kappa, float(np.linalg.norm(g - kappa * d)), float(np.linalg.norm(g))

def lagrange_residual(model, x, j):
    """
    Best multiplier and residual of grad V = kappa grad lam_j at a point.

    Inputs:
    -------
    model : ModelSystem
        Model to evaluate
    x : np.ndarray or ShapePoint
        Point (arrays are interior chart coordinates)
    j : int
        Branch index; must be a simple eigenvalue

    Returns:
    --------
    kappa : float
        Least squares multiplier
    residual : float
        |grad V - kappa grad lam_j|
    """
    chart, y = model.chart_for(x)
    frame = chart.frame(y)
    if not frame.is_simple(j):
        raise RepeatedEigenvalue('Branch {0} is repeated'.format(j), point=y)
    kappa, residual, _ = _kappa_residual(chart, y, j, frame)
    return kappa, residual

def best_branch(chart, y, frame, candidates=None, tol=RE_TOL):
    """
    Among simple branches, pick the one that makes y a normal relative
    equilibrium with the smallest residual.

    Returns:
    --------
    (j, kappa, residual) : tuple
    """
    if candidates is None:
        candidates = range(frame.dim)
    best = None
    for j in candidates:
        if not frame.is_simple(j):
            continue
        kappa, residual, grad_norm = _kappa_residual(chart, y, j, frame)
        if not re_test(kappa, residual, grad_norm, tol):
            continue
        if (best is None) or (residual < best[2]):
            best = (j, max(kappa, 0.), residual)
    if best is None:
        raise NotAnRE('No simple branch satisfies the multiplier condition', point=y)
    return best

def _to_x(model, chart, y):
    if chart is model:
        return np.array(y, dtype=float)
    return chart.to_x(y)

def _build_re(model, chart, y, j, frame, kappa, residual, family='Generic', param=np.nan):
    return RelEquilibrium(x=_to_x(model, chart, y), y=np.array(y, dtype=float),
                          chart=chart.name, branch=int(j), lam=float(frame.eigenvalues[j]),
                          omega_dir=frame.vector(j).copy(), kappa=float(kappa),
                          family=family, residual=float(residual), param=float(param))

def is_normal_re(model, x, tol=RE_TOL):
    """
    True if some simple branch makes x a normal relative equilibrium.
    """
    chart, y = model.chart_for(x)
    try:
        best_branch(chart, y, chart.frame(y), tol=tol)
    except NotAnRE:
        return False
    return True

def merge_equilibria(found, tol=MERGE_TOL):
    """
    Sort relative equilibria lexicographically by coordinates and drop
    duplicates closer than `tol` on the same branch.
    """
    ordered = sorted(found, key=lambda re: (re.chart, tuple(np.round(re.y, 9)), re.branch))
    merged = []
    for re in ordered:
        if any((re.chart == kept.chart) and (re.branch == kept.branch)
               and (np.linalg.norm(re.y - kept.y) < tol) for kept in merged):
            continue
        merged.append(re)
    return merged

def _refine_seed(model, level, seed, tol=RE_TOL, max_iter=50):
    """
    Newton's method on (grad V - kappa grad lam_j, lam_j - level) = 0 in the
    unknowns (y, kappa), following the branch through eigenvector overlap.
    """
    # 1. Choose the branch closest to the target level at the seed
    chart, y0 = model.chart_for(seed)
    frame0 = chart.frame(y0)
    j0 = int(np.argmin(np.abs(frame0.eigenvalues - level)))
    if not frame0.is_simple(j0):
        raise RepeatedEigenvalue('Seed on the repeated locus', point=y0)
    v_ref = frame0.vector(j0)
    kappa0, _, grad_norm0 = _kappa_residual(chart, y0, j0, frame0)
    n = y0.size

    def branch(y):
        frame = chart.frame(y)
        j, _ = track_branch(frame, v_ref)
        return frame, j

    def F(z):
        y, kappa = z[:n], z[n]
        frame, j = branch(y)
        g = chart.grad_potential(y)
        d = chart.eigen_gradient(y, j, frame)
        return np.append(g - kappa * d, frame.eigenvalues[j] - level)

    def J(z):
        y, kappa = z[:n], z[n]
        frame, j = branch(y)
        d = chart.eigen_gradient(y, j, frame)
        Jm = np.zeros((n + 1, n + 1))
        Jm[:n, :n] = chart.hess_potential(y) - kappa * chart.eigen_hessian(y, j, frame)
        Jm[:n, n] = -d
        Jm[n, :n] = d
        return Jm

    # 2. Solve
    scale = 1 + grad_norm0
    z = damped_newton(F, J, np.append(y0, kappa0), max_iter=max_iter,
                      atol=1e-12 * scale, stall_tol=1e-9 * scale)
    # 3. Validate
    y = z[:n]
    chart.check_domain(y)
    frame, j = branch(y)
    kappa, residual, grad_norm = _kappa_residual(chart, y, j, frame)
    if not re_test(kappa, residual, grad_norm, tol):
        raise NotAnRE('Critical point with kappa = {0:.3g}'.format(kappa), point=y)
    return _build_re(model, chart, y, j, frame, max(kappa, 0.), residual)

def find_re_on_leaf(model, spec, seeds, tol=RE_TOL, threads=None, max_iter=50):
    """
    Relative equilibria with rotation axis on a given eigenvalue level,
    found by Newton's method from each seed.

    Inputs:
    -------
    model : ModelSystem
        Model to search
    spec : LeafSpec
        Leaf (the eigenvalue level is `spec.level`)
    seeds : sequence of np.ndarray or ShapePoint
        Starting points
    tol : float
        Acceptance tolerance on the multiplier residual
    threads : int (optional)
        Worker count for the seed pool

    Returns:
    --------
    equilibria : list of RelEquilibrium
        Merged and sorted lexicographically
    """
    seeds = list(seeds)
    level = float(spec.level)

    def refine(seed):
        try:
            return _refine_seed(model, level, seed, tol, max_iter)
        except ShapeWebError as err:
            logger.debug('Seed %s failed: %s', seed, err)
            return None

    with ThreadPool(worker_count(threads)) as pool:
        results = pool.map(refine, seeds)
    found = [re for re in results if re is not None]
    failed = len(seeds) - len(found)
    if failed:
        warnings.warn('{0} of {1} seeds did not converge to a relative equilibrium'.format(
            failed, len(seeds)), RuntimeWarning)
    return merge_equilibria(found)

def _face_branch_candidates(frame):
    # In-plane eigenvectors are orthogonal to the face normal e_y
    return [j for j in range(frame.dim) if abs(frame.vector(j)[1]) < 0.5 and frame.is_simple(j)]

def _face_re(model, a, b, face, family, param=np.nan, tol=RE_TOL):
    point = model.face_point(a, b, face)
    chart, y = model.chart_for(point)
    frame = chart.frame(y)
    candidates = _face_branch_candidates(frame)
    if not candidates:
        raise AbnormalAt('In-plane eigenvalues coincide', point=y)
    j, kappa, residual = best_branch(chart, y, frame, candidates, tol)
    return _build_re(model, chart, y, j, frame, kappa, residual, family, param)

def _default_s3body(model):
    if model is None:
        return Spherical3Body()
    if not isinstance(model, Spherical3Body):
        raise ConfigError('Family requires the spherical three-body model')
    return model

def eulerian_family(theta, model=None, tau=1e-9):
    """
    Eulerian relative equilibrium: collinear isosceles shape with apex
    angle theta12 = theta23 = theta, rotating about an in-plane axis.

    Inputs:
    -------
    theta : float
        Equal angle in (0, pi)
    model : Spherical3Body (optional)
        Model (default cot potential)

    Raises:
    -------
    AbnormalAt : theta = pi/3 (abnormal equilibrium at a face midpoint)
    SingularConfiguration : theta = pi/2 (antipodal pair)
    RepeatedEigenvalue : theta = 2 pi/3 (equilateral great circle)
    """
    model = _default_s3body(model)
    if not (0 < theta < np.pi):
        raise DomainError('Euler angle outside (0, pi)', point=theta)
    if abs(theta - np.pi / 3) < tau:
        raise AbnormalAt('Abnormal equilibrium at theta = pi/3', point=theta)
    if abs(theta - np.pi / 2) < tau:
        raise SingularConfiguration('Antipodal pair at theta = pi/2', point=theta)
    if abs(theta - 2 * np.pi / 3) < tau:
        raise RepeatedEigenvalue('Equilateral great circle at theta = 2 pi/3', point=theta)
    face = 'F2' if theta < np.pi / 2 else 'F0'
    family = 'Euler-i' if theta < 2 * np.pi / 3 else 'Euler-ii'
    return _face_re(model, theta, theta, face, family, param=theta)

def lagrange_family(phi, model=None, tau=1e-9):
    """
    Lagrange relative equilibrium: equilateral shape x = (cos phi,) * 3
    rotating about the symmetry axis.

    Inputs:
    -------
    phi : float
        Mutual angle in (0, 2 pi/3)
    model : Spherical3Body (optional)
        Model (default cot potential)
    """
    model = _default_s3body(model)
    if not (0 < phi < 2 * np.pi / 3):
        raise DomainError('Lagrange angle outside (0, 2 pi/3)', point=phi)
    if abs(phi - np.pi / 2) < tau:
        raise AbnormalAt('Abnormal equilibrium at the centre (phi = pi/2)', point=phi)
    x = np.full(3, np.cos(phi))
    frame = model.frame(x)
    j, _ = track_branch(frame, np.ones(3) / np.sqrt(3))
    if not frame.is_simple(j):
        raise RepeatedEigenvalue('Symmetry axis eigenvalue is repeated', point=phi)
    kappa, residual, grad_norm = _kappa_residual(model, x, j, frame)
    if not re_test(kappa, residual, grad_norm):
        raise NotAnRE('Lagrange shape fails the multiplier test', point=phi)
    return _build_re(model, model, x, j, frame, max(kappa, 0.), residual, 'Lagrange-2i', phi)

def planar_family(Lsq, model=None):
    """
    Planar relative equilibrium: equilateral great-circle configuration
    (theta = 2 pi/3) rotating about the normal of its plane with squared
    momentum `Lsq`.
    """
    model = _default_s3body(model)
    if Lsq < 0:
        raise DomainError('Squared momentum must be nonnegative', point=Lsq)
    point = model.face_point(2 * np.pi / 3, 2 * np.pi / 3, 'F0')
    chart, y = model.chart_for(point)
    frame = chart.frame(y)
    j = int(np.argmax(np.abs(frame.eigenvectors[1])))
    _, residual, grad_norm = _kappa_residual(chart, y, j, frame)
    kappa = Lsq / (2 * frame.eigenvalues[j]**2)
    if not re_test(kappa, residual, grad_norm):
        raise NotAnRE('Great-circle configuration is not critical', point=y)
    return _build_re(model, chart, y, j, frame, kappa, residual, 'Planar-iii', Lsq)

def scalene_function(alpha, beta):
    """
    Scalene face condition for the cot potential, with theta12 = alpha,
    theta23 = beta and theta13 = alpha + beta:

        sin 2b (csc^2 a + csc^2 g) + sin 2g (csc^2 a - csc^2 b)
            - sin 2a (csc^2 b + csc^2 g)
    """
    gamma = alpha + beta
    ca, cb, cg = 1 / np.sin(alpha)**2, 1 / np.sin(beta)**2, 1 / np.sin(gamma)**2
    return (np.sin(2 * beta) * (ca + cg) + np.sin(2 * gamma) * (ca - cb)
            - np.sin(2 * alpha) * (cb + cg))

def _scalene_scale(alpha, beta):
    gamma = alpha + beta
    ca, cb, cg = 1 / np.sin(alpha)**2, 1 / np.sin(beta)**2, 1 / np.sin(gamma)**2
    return (abs(np.sin(2 * beta)) * (ca + cg) + abs(np.sin(2 * gamma)) * (ca + cb)
            + abs(np.sin(2 * alpha)) * (cb + cg))

def scalene_curve(alphas=None, n_sweep=400, model=None, tol=1e-7):
    """
    Scalene relative equilibria on the collinear face theta13 = theta12 + theta23.

    The trivial isosceles solution beta = alpha is divided out; each
    remaining root is verified with the full multiplier test.

    Inputs:
    -------
    alphas : np.ndarray (optional)
        Values of theta12 to sweep
    n_sweep : int
        Sweep points in beta for root bracketing
    model : Spherical3Body (optional)
        Must carry the cot potential
    tol : float
        Multiplier test tolerance
    """
    model = _default_s3body(model)
    if not isinstance(model.pair, CotPotential):
        raise ConfigError('Scalene family is defined for the cot potential')
    if alphas is None:
        alphas = np.linspace(0.05, np.pi - 0.05, 80)
    points = []
    for alpha in alphas:
        def reduced(beta):
            if abs(beta - alpha) < 1e-9:
                return np.nan
            return scalene_function(alpha, beta) / (beta - alpha)
        roots = bracket_roots(reduced, 1e-3, np.pi - alpha - 1e-3, n=n_sweep,
                              skip=lambda beta: abs(beta - alpha) < 1e-6)
        for beta in roots:
            # Sign changes across the csc^2 poles are not roots
            if abs(scalene_function(alpha, beta)) > 1e-10 * _scalene_scale(alpha, beta):
                continue
            try:
                points.append(_face_re(model, alpha, beta, 'F2', 'Scalene-iv', alpha, tol))
            except ShapeWebError as err:
                logger.debug('Scalene root (%g, %g) rejected: %s', alpha, beta, err)
    return FamilyCurve('Scalene-iv', 'scalene face condition',
                       (float(alphas[0]), float(alphas[-1])), points)

def scalene_diagonal_crossing(lo=0.8, hi=1.0, delta=1e-5):
    """
    Angle at which the scalene family meets the isosceles diagonal, the
    zero of d/dbeta of the scalene condition at beta = alpha.
    """
    def slope(alpha):
        return (scalene_function(alpha, alpha + delta)
                - scalene_function(alpha, alpha - delta)) / (2 * delta)
    return scipy.optimize.brentq(slope, lo, hi, xtol=1e-14)

def isosceles_function(a, b, s):
    """
    Isosceles condition for x = (a, b, a), the cosines of the mutual angles:

        b (1 - b^2)^(3/2) - 4 a (1 - a^2)^(3/2) - s (1 - b^2)^(3/2) sqrt(8 a^2 + b^2)
    """
    wa = (1 - a**2)**1.5
    wb = (1 - b**2)**1.5
    return b * wb - 4 * a * wa - s * wb * np.sqrt(8 * a**2 + b**2)

def coplanar_isosceles_residual(alpha, beta):
    """
    Residual cos a (2 sin^6 a - sin^6 b) - sin^3 a sin^3 b cos b of the
    isosceles condition written in the angles theta12 = theta23 = alpha,
    theta13 = beta.
    """
    sa, sb = np.sin(alpha), np.sin(beta)
    return np.cos(alpha) * (2 * sa**6 - sb**6) - sa**3 * sb**3 * np.cos(beta)

def isosceles_eigenvalue(a, b, s):
    """
    Eigenvalue 2 + (-b + s sqrt(b^2 + 8 a^2)) / 2 of the in-plane branch at x = (a, b, a).
    """
    return 2 + 0.5 * (-b + s * np.sqrt(b**2 + 8 * a**2))

def isosceles_curve(a_values=None, n_sweep=400, model=None, tol=1e-7):
    """
    Isosceles relative equilibria x = (a, b, a) off the Lagrange line.

    Inputs:
    -------
    a_values : np.ndarray (optional)
        Values of a = cos theta12 to sweep
    n_sweep : int
        Sweep points in b for root bracketing
    model : Spherical3Body (optional)
        Must carry the cot potential
    tol : float
        Multiplier test tolerance
    """
    model = _default_s3body(model)
    if not isinstance(model.pair, CotPotential):
        raise ConfigError('Isosceles family is defined for the cot potential')
    if a_values is None:
        a_values = np.linspace(-0.98, 0.98, 99)
    points = []
    for a in a_values:
        lo = max(2 * a**2 - 1, -1.) + 1e-9
        hi = 1 - 1e-6
        if lo >= hi:
            continue
        for s in (1, -1):
            roots = bracket_roots(lambda b: isosceles_function(a, b, s), lo, hi, n=n_sweep,
                                  skip=lambda b: abs(b - a) < 1e-6)
            for b in roots:
                x = np.array([a, b, a])
                if (np.abs(x) >= 1 - 1e-12).any():
                    continue
                frame = model.frame(x)
                j = int(np.argmin(np.abs(frame.eigenvalues - isosceles_eigenvalue(a, b, s))))
                if not frame.is_simple(j):
                    continue
                kappa, residual, grad_norm = _kappa_residual(model, x, j, frame)
                if not re_test(kappa, residual, grad_norm, tol):
                    logger.debug('Isosceles root (%g, %g) rejected', a, b)
                    continue
                points.append(_build_re(model, model, x, j, frame, max(kappa, 0.), residual,
                                        'Isosceles-2ii', a))
    return FamilyCurve('Isosceles-2ii', 'isosceles condition',
                       (float(a_values[0]), float(a_values[-1])), points)

def isosceles_boundary_crossing(lo=0.3, hi=0.8):
    """
    Angle at which the isosceles family reaches the coplanar boundary
    b = 2 a^2 - 1 (branch s = -1).
    """
    a = scipy.optimize.brentq(lambda a: isosceles_function(a, 2 * a**2 - 1, -1), lo, hi,
                              xtol=1e-15)
    return np.arccos(a)

def isosceles_lagrange_crossings(delta=1e-6, n=400):
    """
    Angles at which the isosceles family crosses the Lagrange line: zeros of
    d/db of the isosceles condition at b = a, with s = -sign(a).
    """
    def slope(a, s):
        return (isosceles_function(a, a + delta, s)
                - isosceles_function(a, a - delta, s)) / (2 * delta)
    crossings = []
    for s, lo, hi in ((-1, 0.02, 0.95), (1, -0.48, -0.02)):
        crossings.extend(np.arccos(a) for a in bracket_roots(slope, lo, hi, n=n, args=(s,)))
    return sorted(crossings)

def face_collinearity(model, a, b, face):
    """
    Cross product V_a lam_b - V_b lam_a of the face derivatives (up to the
    branch factor), zero exactly at face relative equilibria. Face 'F2' has
    theta13 = a + b and 'F0' has theta13 = 2 pi - a - b.
    """
    sigma = 1. if face == 'F2' else -1.
    gamma = a + b if face == 'F2' else 2 * np.pi - a - b
    d1 = model.pair.d1
    Va = d1(a) + sigma * d1(gamma)
    Vb = d1(b) + sigma * d1(gamma)
    Ra = -4 * (np.sin(2 * a) + np.sin(2 * (a + b)))
    Rb = -4 * (np.sin(2 * b) + np.sin(2 * (a + b)))
    return Va * Rb - Vb * Ra

def face_critical_points(model=None, face='F0', n=80, n_sweep=400):
    """
    Zeros of `face_collinearity` on a face, swept in b for a grid of a.

    Returns:
    --------
    points : np.ndarray (k x 3)
        Rows (theta12, theta13, theta23)
    """
    model = _default_s3body(model)
    rows = []
    for a in np.linspace(0.05, np.pi - 0.05, n):
        if face == 'F2':
            lo, hi = 1e-3, np.pi - a - 1e-3
        else:
            lo, hi = np.pi - a + 1e-3, np.pi - 1e-3
        if lo >= hi:
            continue
        for b in bracket_roots(lambda b: face_collinearity(model, a, b, face), lo, hi, n=n_sweep):
            gamma = a + b if face == 'F2' else 2 * np.pi - a - b
            scale = 1 + abs(model.pair.d1(a)) + abs(model.pair.d1(b)) + abs(model.pair.d1(gamma))
            if abs(face_collinearity(model, a, b, face)) <= 1e-9 * scale:
                rows.append((a, gamma, b))
    return np.array(rows).reshape(-1, 3)

def coplanar_condition(t12, t13, t23):
    """
    sin(t12 - t13) sin(t12 - t23) sin(t13 - t23); zero on isosceles shapes.
    """
    return np.sin(t12 - t13) * np.sin(t12 - t23) * np.sin(t13 - t23)

@dataclass(frozen=True)
class AbnormalResult:
    """
    Outcome of the abnormal relative equilibrium test at a point of the
    repeated-eigenvalue locus.

    Attributes:
    -----------
    exists : bool
        True if an abnormal equilibrium sits at the point
    witnesses : list of np.ndarray (3)
        Angular velocities omega with grad K(omega) = grad V
    eigenvalue : float
        The repeated eigenvalue
    multiplicity : int
        Dimension of its eigenspace
    alignment : float
        Largest cosine between grad K(u) and grad V over unit u in the
        eigenspace; nan at critical points of V
    grad_K_min : float
        Smallest |grad K(u)| over unit u, set at critical points of V only
    """
    exists: bool
    witnesses: list
    eigenvalue: float
    multiplicity: int
    alignment: float
    grad_K_min: float = np.nan

def _abnormal_chart(model, x):
    if isinstance(model, Spherical3Body) and not isinstance(x, ShapePoint):
        x = np.asarray(x, dtype=float)
        if model.local_chart(x) == 'face':
            x = model.face_coordinates(x)
    return model.chart_for(x)

def _sphere_directions(n):
    # Fibonacci points on the upper hemisphere (u and -u give the same K)
    k = np.arange(n) + 0.5
    z = k / n
    t = np.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z**2)
    return np.stack([r * np.cos(t), r * np.sin(t), z], axis=1)

def abnormal_check(model, x, n_sweep=720, tol=1e-8, tau_mult=1e-6):
    """
    Decide whether an abnormal relative equilibrium sits at a point of the
    repeated-eigenvalue locus.

    For omega = r u in the repeated eigenspace, K(omega) = omega^T S(x) omega / 2
    has shape gradient grad K(u)_a = u^T dS_a u / 2. An abnormal equilibrium
    exists when grad V = r^2 grad K(u) for some unit u and r > 0. At a critical
    point of V this requires grad K(u) = 0; any r then works and the witnesses
    are unit vectors.

    Inputs:
    -------
    model : ModelSystem
        Model to test
    x : np.ndarray or ShapePoint
        Point on the repeated locus; coplanar spherical shapes use the face chart
    n_sweep : int
        Sample directions in the eigenspace
    tol : float
        Tolerance on 1 - cos(angle) between grad K(u) and grad V
    tau_mult : float
        Relative tolerance for detecting the repeated eigenvalue

    Raises:
    -------
    NotOnLocus : no repeated eigenvalue at x
    """
    chart, y = _abnormal_chart(model, x)
    frame = chart.frame(y, tau_mult)
    repeated = [j for j in range(frame.dim) if not frame.is_simple(j)]
    if not repeated:
        raise NotOnLocus('No repeated eigenvalue', point=y)
    members = frame.cluster_members(repeated[0])
    W = frame.eigenvectors[:, members]
    p = members.size
    lam = float(frame.eigenvalues[members].mean())
    g = chart.grad_potential(y)
    g_norm = np.linalg.norm(g)
    dS, _ = chart.inertia_derivatives(y)
    M = np.einsum('ip,aij,jq->apq', W, dS, W)

    def grad_K(c):
        return 0.5 * np.einsum('p,apq,q->a', c, M, c)

    def cosine(c):
        gk = grad_K(c)
        nk = np.linalg.norm(gk)
        return (gk @ g) / (nk * g_norm) if nk > 0 else -1.

    def norm_K(c):
        return np.linalg.norm(grad_K(c))

    # 1. Sample the eigenspace
    if p == 2:
        angles = np.linspace(0., np.pi, n_sweep, endpoint=False)
        U = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        U = _sphere_directions(n_sweep)

    def to_unit(z):
        if p == 2:
            return np.array([np.cos(z[0]), np.sin(z[0])])
        return np.array([np.sin(z[0]) * np.cos(z[1]), np.sin(z[0]) * np.sin(z[1]), np.cos(z[0])])

    def refine(objective, values):
        # Local minimisers of objective on the unit sphere of the eigenspace
        refined = []
        if p == 2:
            step = np.pi / n_sweep
            lows = [k for k in range(values.size)
                    if values[k] <= values[k - 1] and values[k] <= values[(k + 1) % values.size]]
            for k in lows:
                res = scipy.optimize.minimize_scalar(
                    lambda t: objective(to_unit([t])),
                    bounds=(angles[k] - step, angles[k] + step), method='bounded',
                    options={'xatol': 1e-12})
                refined.append(to_unit([res.x]))
        else:
            for k in np.argsort(values)[:8]:
                u = U[k]
                z0 = np.array([np.arccos(np.clip(u[2], -1., 1.)), np.arctan2(u[1], u[0])])
                res = scipy.optimize.minimize(lambda z: objective(to_unit(z)), z0,
                                              method='Nelder-Mead',
                                              options={'xatol': 1e-12, 'fatol': 1e-16,
                                                       'maxiter': 4000})
                refined.append(to_unit(res.x))
        return refined

    def add_witness(witnesses, omega):
        # omega and -omega are the same equilibrium
        if omega[np.argmax(np.abs(omega))] < 0:
            omega = -omega
        if not any(np.linalg.norm(omega - w) < 1e-6 * (1 + np.linalg.norm(w))
                   for w in witnesses):
            witnesses.append(omega)

    witnesses = []
    if g_norm <= 1e-10:
        # 2. Critical point of V: grad V = r^2 grad K(u) for every r once grad K(u) = 0
        norms = np.array([norm_K(u) for u in U])
        refined = refine(norm_K, norms)
        smallest = min([float(norms.min())] + [norm_K(u) for u in refined])
        scale = 1 + np.abs(M).max()
        for u in refined:
            if norm_K(u) <= tol * scale:
                add_witness(witnesses, W @ u)
        logger.debug('Abnormal test at a critical point of V; min |grad K| = %g', smallest)
        return AbnormalResult(bool(witnesses), witnesses, lam, p, np.nan, smallest)
    cos = np.array([cosine(u) for u in U])
    # 3. A one-dimensional chart only needs the sign to match
    if y.size == 1:
        for u, c in zip(U, cos):
            if c > 1 - tol:
                witnesses.append(np.sqrt(g_norm / norm_K(u)) * (W @ u))
        return AbnormalResult(bool(witnesses), witnesses, lam, p, float(cos.max()))
    # 4. Refine the local maxima of the alignment
    best = float(cos.max())
    for u in refine(lambda c: -cosine(c), -cos):
        c = cosine(u)
        best = max(best, c)
        if c >= 1 - tol:
            add_witness(witnesses, np.sqrt(g_norm / norm_K(u)) * (W @ u))
    return AbnormalResult(bool(witnesses), witnesses, lam, p, best)

def _abnormal_record(model, x, result, param=np.nan):
    chart, y = _abnormal_chart(model, x)
    omega = result.witnesses[0]
    omega_sq = omega @ omega
    frame = chart.frame(y, 1e-6)
    j = int(np.argmin(np.abs(frame.eigenvalues - result.eigenvalue)))
    return RelEquilibrium(x=_to_x(model, chart, y), y=np.array(y, dtype=float),
                          chart=chart.name, branch=j, lam=result.eigenvalue,
                          omega_dir=omega / np.sqrt(omega_sq), kappa=0.5 * omega_sq,
                          family='Abnormal', normal=False, param=param)

def classify_two_body(model, resolution=256, tol=RE_TOL):
    """
    Normal relative equilibria of the two-body problem (one per angle away
    from pi/2) and, for equal masses, the abnormal equilibria at pi/2.
    """
    thetas = np.linspace(0., np.pi, resolution + 2)[1:-1]
    points = []
    for theta in thetas:
        y = np.array([theta])
        try:
            frame = model.frame(y)
            j, kappa, residual = best_branch(model, y, frame, tol=tol)
        except ShapeWebError as err:
            logger.debug('No normal equilibrium at theta = %g: %s', theta, err)
            continue
        points.append(_build_re(model, model, y, j, frame, kappa, residual, 'Generic', theta))
    catalog = Catalog(model.model_id)
    catalog.families['Generic'] = FamilyCurve('Generic', 'V\'(theta) = kappa lam\'(theta)',
                                              (thetas[0], thetas[-1]), points)
    if model.m1 == model.m2:
        result = abnormal_check(model, np.array([np.pi / 2]), n_sweep=16)
        if result.exists:
            catalog.abnormal.append(_abnormal_record(model, np.array([np.pi / 2]), result,
                                                     np.pi / 2))
    return catalog

def classify_all(model, resolution=64, tol=RE_TOL):
    """
    Catalog the relative equilibria of a spherical model.

    For the spherical three-body problem the families are Euler-i/ii,
    Planar-iii and Lagrange-2i for any attractive potential, plus Scalene-iv
    and Isosceles-2ii for the cot potential; abnormal equilibria sit at the
    centre and at the midpoints of the collinear faces.
    """
    if isinstance(model, Sphere2Body):
        return classify_two_body(model, 4 * resolution, tol)
    model = _default_s3body(model)
    catalog = Catalog(model.model_id)
    # 1. Eulerian families
    thetas = np.linspace(0., np.pi, resolution + 2)[1:-1]
    euler = {'Euler-i': [], 'Euler-ii': []}
    for theta in thetas:
        try:
            re = eulerian_family(theta, model)
        except ShapeWebError as err:
            logger.debug('Euler theta = %g skipped: %s', theta, err)
            continue
        euler[re.family].append(re)
    catalog.families['Euler-i'] = FamilyCurve('Euler-i', 'theta12 = theta23 collinear',
                                              (0., 2 * np.pi / 3), euler['Euler-i'])
    catalog.families['Euler-ii'] = FamilyCurve('Euler-ii', 'theta12 = theta23 collinear',
                                               (2 * np.pi / 3, np.pi), euler['Euler-ii'])
    # 2. Planar great circle
    lsq_values = np.linspace(0., 24 * np.sqrt(3) * 2, max(resolution // 4, 2))
    catalog.families['Planar-iii'] = FamilyCurve(
        'Planar-iii', 'equilateral great circle', (lsq_values[0], lsq_values[-1]),
        [planar_family(Lsq, model) for Lsq in lsq_values])
    # 3. Lagrange line
    phis = np.linspace(0., 2 * np.pi / 3, resolution + 2)[1:-1]
    lagrange = []
    for phi in phis:
        try:
            lagrange.append(lagrange_family(phi, model))
        except ShapeWebError as err:
            logger.debug('Lagrange phi = %g skipped: %s', phi, err)
    catalog.families['Lagrange-2i'] = FamilyCurve('Lagrange-2i', 'x1 = x2 = x3',
                                                  (0., 2 * np.pi / 3), lagrange)
    # 4. Potential-specific families
    if isinstance(model.pair, CotPotential):
        catalog.families['Scalene-iv'] = scalene_curve(
            np.linspace(0.05, np.pi - 0.05, resolution), model=model)
        catalog.families['Isosceles-2ii'] = isosceles_curve(
            np.linspace(-0.98, 0.98, resolution + 1), model=model)
    else:
        logger.info('Potential `%s`: only symmetry-forced families are cataloged',
                    model.pair.name)
    # 5. Abnormal equilibria
    for x in abnormal_points():
        result = abnormal_check(model, x)
        if result.exists:
            catalog.abnormal.append(_abnormal_record(model, x, result))
    logger.info('Cataloged %d normal and %d abnormal equilibria',
                sum(len(c) for c in catalog.families.values()), len(catalog.abnormal))
    return catalog

def abnormal_points():
    """
    Candidate abnormal points of the spherical three-body problem: the
    centre and the midpoints of the four coplanar faces.
    """
    return [np.zeros(3), np.array([-0.5, 0.5, 0.5]), np.array([0.5, -0.5, 0.5]),
            np.array([0.5, 0.5, -0.5]), np.array([-0.5, -0.5, -0.5])]

def great_circle_re(model, r, angles=(0., np.pi / 4, np.pi / 2), tol=RE_TOL):
    """
    Relative equilibria of the full-body satellite with the centre of mass
    in a principal plane, rotating about the plane normal.

    Inputs:
    -------
    model : FullBodySatellite
        Model
    r : float
        Orbit radius (outside the body)
    angles : sequence of float
        Polar angles of the centre of mass within each principal plane
    """
    E = np.eye(3)
    found = []
    for m in range(3):
        k, l = [i for i in range(3) if i != m]
        for angle in angles:
            x = r * (np.cos(angle) * E[k] + np.sin(angle) * E[l])
            model.check_domain(x)
            frame = model.frame(x)
            j, _ = track_branch(frame, E[m])
            if not frame.is_simple(j):
                logger.debug('Repeated eigenvalue at %s', x)
                continue
            kappa, residual, grad_norm = _kappa_residual(model, x, j, frame)
            if re_test(kappa, residual, grad_norm, tol):
                found.append(_build_re(model, model, x, j, frame, kappa, residual,
                                       'Generic', r))
    return found

def fullbody_axis_seeds(model, level, offset=0.05):
    """
    Seeds near the on-axis equilibria x = sqrt(level - I_j) e_k of a
    full-body leaf, slightly perturbed off the axis.
    """
    E = np.eye(3)
    seeds = []
    for j in range(3):
        if level <= model.I[j]:
            continue
        radius = np.sqrt(level - model.I[j])
        for k in range(3):
            if k == j:
                continue
            for sign in (1., -1.):
                seeds.append(sign * radius * E[k] + offset * radius * E[3 - j - k])
    return seeds

def triatomic_bifurcation(model, eps_list=(0.1, 0.05, 0.02), tol=RE_TOL):
    """
    Relative equilibria branching from the equilibrium x0 of the triatomic
    molecule: for each simple branch j and radius eps, solve
    grad V = kappa grad lam_j starting from x0 + kappa H^-1 grad lam_j.

    Returns:
    --------
    branches : dict
        eps -> list of RelEquilibrium within distance eps of x0
    """
    x0 = model.equilibrium()
    H0 = model.hess_potential(x0)
    frame0 = model.frame(x0)
    results = {}
    for radius in eps_list:
        found = []
        for j in range(frame0.dim):
            if not frame0.is_simple(j):
                continue
            v_ref = frame0.vector(j)
            step = np.linalg.solve(H0, model.eigen_gradient(x0, j, frame0))
            kappa = 0.5 * radius / np.linalg.norm(step)

            def F(x, kappa=kappa, v_ref=v_ref):
                frame = model.frame(x)
                jj, _ = track_branch(frame, v_ref)
                return model.grad_potential(x) - kappa * model.eigen_gradient(x, jj, frame)

            def J(x, kappa=kappa, v_ref=v_ref):
                frame = model.frame(x)
                jj, _ = track_branch(frame, v_ref)
                return model.hess_potential(x) - kappa * model.eigen_hessian(x, jj, frame)

            try:
                x = damped_newton(F, J, x0 + kappa * step)
                frame = model.frame(x)
                jj, _ = track_branch(frame, v_ref)
                k_fit, residual, grad_norm = _kappa_residual(model, x, jj, frame)
            except ShapeWebError as err:
                logger.debug('Branch %d at eps = %g failed: %s', j, radius, err)
                continue
            if re_test(k_fit, residual, grad_norm, tol) and np.linalg.norm(x - x0) < radius:
                found.append(_build_re(model, model, x, jj, frame, k_fit, residual,
                                       'Generic', radius))
        results[radius] = merge_equilibria(found)
    return results

def ellipsoid_brute_force(x, k, n=200, tol=1e-9):
    """
    Brute-force search for solutions of [(omega, xi), I_x (omega, xi)] = 0
    with omega, xi in the plane orthogonal to e_k, plus the axis pairs.

    With omega = cos(a) e_l + sin(a) e_m and xi = r (cos(b) e_l + sin(b) e_m),
    the squared bracket is a quartic in r. An n x n grid over (a, b) in
    [0, pi)^2 records the residual at the best r of every cell; the local
    minima in b of each row are refined in (b, r) by least squares and kept
    when the normalised residual drops below tol. Minimisers that match no
    predicted Type R multiplier are returned with kind 'unmatched'.

    Inputs:
    -------
    x : array-like, shape (3,)
        Semi-axes, x1 > x2 > x3 > 0
    k : int
        Axis orthogonal to the search plane, 1..3
    n : int
        Grid points per angle

    Returns:
    --------
    solutions : pd.DataFrame
        Columns kind, k, sign, alpha, beta, r, s, t, residual
    """
    x = check_ellipsoid_shape(x)
    i, l, m = _klm(k)
    a, b = ellipsoid_blocks(x)
    A, B = np.diag(a), np.diag(b)
    u_plus, u_minus, D = ellipsoid_multipliers(x, k)

    def unit(angle):
        v = np.zeros(3)
        v[l] = np.cos(angle)
        v[m] = np.sin(angle)
        return v

    def residual(w, xi):
        p, q = bracket_pair(w, xi, A, B)
        return (np.linalg.norm(p) + np.linalg.norm(q)) / (1 + np.linalg.norm(xi))

    def best_ratio(w, e):
        # |p|^2 + |q|^2 = |P0 + r P1|^2 + r^2 |Q1 + r Q2|^2
        P0, P1 = np.cross(w, A @ w), np.cross(w, B @ e)
        Q1, Q2 = np.cross(e, B @ w), np.cross(e, A @ e)
        slope = [4 * Q2 @ Q2, 6 * Q1 @ Q2, 2 * (P1 @ P1 + Q1 @ Q1), 2 * P0 @ P1]
        roots = np.roots(slope) if np.any(slope) else np.zeros(1)
        candidates = np.append(roots[np.abs(roots.imag) < 1e-9].real, 0.)
        values = [residual(w, r * e) for r in candidates]
        j = int(np.argmin(values))
        return candidates[j], values[j]

    alphas = (np.arange(n) + 0.5) * np.pi / n
    betas = np.arange(n) * np.pi / n
    grid = np.empty((n, n))
    ratios = np.empty((n, n))
    for ia, alpha in enumerate(alphas):
        w = unit(alpha)
        for ib, beta in enumerate(betas):
            ratios[ia, ib], grid[ia, ib] = best_ratio(w, unit(beta))

    rows = []
    for ia, alpha in enumerate(alphas):
        w = unit(alpha)
        row = grid[ia]
        lows = np.flatnonzero((row <= np.roll(row, 1)) & (row <= np.roll(row, -1)))
        found = []
        for ib in lows:
            def bracket(z, w=w):
                p, q = bracket_pair(w, z[1] * unit(z[0]), A, B)
                return np.concatenate([p, q])
            fit = scipy.optimize.least_squares(bracket, [betas[ib], ratios[ia, ib]],
                                               xtol=1e-15, ftol=1e-15, gtol=1e-15)
            xi = fit.x[1] * unit(fit.x[0])
            r = np.linalg.norm(xi)
            res = residual(w, xi)
            if res > tol or r < 1e-12:
                continue
            if any(np.linalg.norm(xi - other) <= 1e-6 * (1 + r) for other in found):
                continue
            found.append(xi)
            s = w @ (A @ w + B @ xi)
            t = xi @ (B @ w + A @ xi) / (xi @ xi)
            kind, sign = 'unmatched', 0
            if D >= 0:
                if abs(s - u_plus) <= 1e-7 * (1 + abs(u_plus)):
                    kind, sign = 'R', 1
                elif abs(s - u_minus) <= 1e-7 * (1 + abs(u_minus)):
                    kind, sign = 'R', -1
            rows.append({'kind': kind, 'k': k, 'sign': sign, 'alpha': alpha,
                         'beta': np.arctan2(xi[m], xi[l]), 'r': r, 's': s, 't': t,
                         'residual': res})
    logger.debug('Ellipsoid scan k = %d: %d grid minimisers below %g', k, len(rows), tol)
    E = np.eye(3)
    for axis in range(3):
        for sign in (1, -1):
            w, xi = E[axis], sign * E[axis]
            res = residual(w, xi)
            if res <= tol:
                s = w @ (A @ w + B @ xi)
                rows.append({'kind': 'S', 'k': axis + 1, 'sign': sign, 'alpha': np.nan,
                             'beta': np.nan, 'r': 1., 's': s, 't': s, 'residual': res})
    return pd.DataFrame(rows, columns=['kind', 'k', 'sign', 'alpha', 'beta', 'r', 's', 't',
                                       'residual'])

def bracket_pair(w, xi, A, B):
    """
    Components of [(w, xi), I (w, xi)] for the block tensor I = (A B; B A).
    """
    L = A @ w + B @ xi
    Om = B @ w + A @ xi
    return np.cross(w, L), np.cross(xi, Om)

def lagrange_amended_profile(Lsq, phis=None):
    """
    Amended potential of the cot Lagrange line,
    V_L(phi) = -3 cot(phi) + Lsq / (4 (1 - cos phi)),
    with its derivatives and critical points.

    Returns:
    --------
    profile : pd.DataFrame
        Columns phi, VL, dVL, d2VL
    critical : list of (phi, d2VL)
        Interior critical points
    """
    if phis is None:
        phis = np.linspace(0.01, 2 * np.pi / 3 - 0.01, 400)
    phis = np.asarray(phis, dtype=float)

    def dV(phi):
        return 3 / np.sin(phi)**2 - Lsq * np.sin(phi) / (4 * (1 - np.cos(phi))**2)

    def d2V(phi):
        s, c = np.sin(phi), np.cos(phi)
        return (-6 * c / s**3 - Lsq * c / (4 * (1 - c)**2)
                + Lsq * s**2 / (2 * (1 - c)**3))

    profile = pd.DataFrame({'phi': phis,
                            'VL': -3 / np.tan(phis) + Lsq / (4 * (1 - np.cos(phis))),
                            'dVL': dV(phis), 'd2VL': d2V(phis)})
    critical = [(phi, d2V(phi)) for phi in bracket_roots(dV, phis[0], phis[-1], n=phis.size)]
    return profile, critical
