"""
Energy-momentum stability of relative equilibria.

The reduced Hamiltonian Hessian at a relative equilibrium splits into three
blocks: the inverse shape metric (always positive definite), the Hessian of
the amended potential V_L = V + Lsq / (2 lam) on shape space, and the Hessian
of the rotational term on the momentum sphere. Signatures of the blocks give
Dirichlet stability (all positive) or instability (odd positive count, no
zeros).

Boundary equilibria of the spherical three-body problem are handled in face
coordinates (theta12, theta23): a 2x2 face block built from the in-plane
eigenvalues lam = (3 +- sqrt(R)) / 2 plus a transversal second derivative.
"""
import sys
import time
import logging
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
import numpy as np
import pandas as pd
from shapeweb_solver.errors import ShapeWebError, DomainError, NotAnRE, ConfigError
from shapeweb_solver.lie_core import track_branch, TAU_ZERO
from shapeweb_solver.models import Spherical3Body
from shapeweb_solver.utils import bisect, central_hessian
from shapeweb_solver.re_solver import eulerian_family, lagrange_family, planar_family
from shapeweb_solver.config import worker_count

logger = logging.getLogger(__name__)

STABLE = 'stable-by-minimum'
UNSTABLE = 'unstable-odd-index'
INDETERMINATE = 'indeterminate'
SCAN_COLUMNS = ['family', 'param', 'sig_m', 'sig_vl', 'sig_jx', 'verdict', 'det_vl']

def theta_scal_equation(theta):
    return 32 * np.cos(theta)**6 - 2 * np.cos(theta)**2 - 1

def theta_iso_equation(theta):
    return np.cos(theta)**4 - 1 / 8

def phi_scal_equation(phi):
    return np.sin(phi) - 1 / np.sqrt(10)

def planar_transversal(Lsq):
    """
    Transversal second derivative of V_L at the equilateral great circle,
    3/4 (Lsq / 27 - 8 / (3 sqrt(3))) for the cot potential.
    """
    return 0.75 * (Lsq / 27 - 8 / (3 * np.sqrt(3)))

@dataclass(frozen=True)
class Threshold:
    """
    A parameter value at which a stability signature changes.

    Attributes:
    -----------
    name : str
        'theta_scal', 'theta_iso', 'phi_scal' or 'L2_gyro'
    equation : str
        Defining equation
    value : float
        Root of the defining equation
    residual : float
        Defining equation evaluated at `value`
    """
    name: str
    equation: str
    value: float
    residual: float

def thresholds(xtol=1e-15):
    """
    Stability thresholds of the spherical three-body problem with the cot
    potential, each found by bisection on its defining equation.
    """
    table = [('theta_scal', '32 cos^6 t - 2 cos^2 t - 1 = 0', theta_scal_equation, 0.8, 1.0),
             ('theta_iso', 'cos^4 t = 1/8', theta_iso_equation, 0.8, 1.0),
             ('phi_scal', 'sin p = 1/sqrt(10)', phi_scal_equation, 0.1, 0.5),
             ('L2_gyro', 'Lsq / 27 = 8 / (3 sqrt(3))', planar_transversal, 10., 80.)]
    out = []
    for name, equation, f, lo, hi in table:
        value = bisect(f, lo, hi, xtol=xtol)
        out.append(Threshold(name, equation, value, float(f(value))))
    return out

def transition_points(family):
    """
    Parameter values at which the signature table of a family changes.
    """
    t = {th.name: th.value for th in thresholds()}
    if family == 'euler':
        return {'theta_scal': t['theta_scal'], 'theta_iso': t['theta_iso'],
                'abnormal': np.pi / 3, 'great_circle': 2 * np.pi / 3}
    if family == 'lagrange':
        return {'pi/2 - phi_scal': np.pi / 2 - t['phi_scal'], 'centre': np.pi / 2,
                'pi/2 + phi_scal': np.pi / 2 + t['phi_scal']}
    if family == 'planar-iii':
        return {'L2_gyro': t['L2_gyro']}
    raise ConfigError('Unknown family `{0}`'.format(family))

def _sig_string(counts):
    n_plus, n_zero, n_minus = counts
    return '+' * n_plus + '0' * n_zero + '-' * n_minus

def _sign_string(values, tau_zero):
    return ''.join('+' if v > tau_zero else ('-' if v < -tau_zero else '0') for v in values)

def _counts(values, tau_zero):
    values = np.asarray(values)
    n_plus = int((values > tau_zero).sum())
    n_minus = int((values < -tau_zero).sum())
    return n_plus, values.size - n_plus - n_minus, n_minus

def jx_signature(frame, j):
    """
    Signature of the rotational block on the momentum sphere: (++) about the
    largest principal moment, (+-) about the intermediate, (--) about the smallest.

    Returns:
    --------
    (n_plus, n_zero, n_minus) : tuple of int
    """
    rank = frame.rank(j)
    return {'max': (2, 0, 0), 'mid': (1, 0, 1), 'min': (0, 0, 2)}[rank]

def verdict(vl, jx, m=(3, 0, 0)):
    """
    Stability verdict from block signature counts.
    """
    if vl[1] or jx[1] or m[1]:
        return INDETERMINATE
    if (vl[2] == 0) and (jx[2] == 0) and (m[2] == 0):
        return STABLE
    if (m[0] + vl[0] + jx[0]) % 2 == 1:
        return UNSTABLE
    return INDETERMINATE

def amended_potential(model, x, j, Lsq, v_ref=None):
    """
    Amended potential V(x) + Lsq / (2 lam_j(x)).

    Inputs:
    -------
    model : ModelSystem
        Model
    x : np.ndarray or ShapePoint
        Shape point
    j : int
        Branch index at x (ignored when `v_ref` is given)
    Lsq : float
        Squared momentum
    v_ref : np.ndarray (optional)
        Eigenvector to follow by overlap instead of the index j
    """
    chart, y = model.chart_for(x)
    frame = chart.frame(y)
    if v_ref is not None:
        j, _ = track_branch(frame, v_ref)
    lam = frame.eigenvalues[j]
    if lam <= 0:
        raise DomainError('Nonpositive moment of inertia', point=y)
    return chart.potential(y) + Lsq / (2 * lam)

def _tracked_vl(chart, re):
    v_ref = re.omega_dir
    def vl(y):
        frame = chart.frame(y)
        j, _ = track_branch(frame, v_ref)
        return chart.potential(y) + re.Lsq / (2 * frame.eigenvalues[j])
    return vl

def _face_layout(model, re):
    """
    Face and coordinates (a, b) = (theta12, theta23) of a boundary equilibrium.
    """
    t12, t13, phi = re.y
    x = np.clip(model.charts['face'].to_x(re.y), -1., 1.)
    t23 = np.arccos(x[2])
    if abs(np.cos(phi) - 1) < 1e-9 and abs(t13 - t12 - t23) < 1e-7:
        return 'F2', t12, t23
    if abs(np.cos(phi) + 1) < 1e-9 and abs(t12 + t13 + t23 - 2 * np.pi) < 1e-7:
        return 'F0', t12, t23
    raise DomainError('Face orientation not supported', point=re.y)

def face_hessian(model, re):
    """
    Hessian of V_L in face coordinates (theta12, theta23) at a boundary
    equilibrium, HessV - kappa Hess lam + 2 kappa grad lam grad lam^T / lam.

    Returns:
    --------
    H : np.ndarray (2 x 2)
    face : str
        'F2' (theta13 = theta12 + theta23) or 'F0' (angles sum to 2 pi)
    """
    face, a, b = _face_layout(model, re)
    sigma = 1. if face == 'F2' else -1.
    gamma = a + b if face == 'F2' else 2 * np.pi - a - b
    pair = model.pair
    # 1. Potential
    gV = np.array([pair.d1(a) + sigma * pair.d1(gamma), pair.d1(b) + sigma * pair.d1(gamma)])
    HV = np.array([[pair.d2(a) + pair.d2(gamma), pair.d2(gamma)],
                   [pair.d2(gamma), pair.d2(b) + pair.d2(gamma)]])
    # 2. Eigenvalue; the out-of-plane eigenvalue is constant on the face
    if abs(re.omega_dir[1]) > 0.5:
        gl = np.zeros(2)
        Hl = np.zeros((2, 2))
    else:
        R = 3 + 2 * np.cos(2 * a) + 2 * np.cos(2 * b) + 2 * np.cos(2 * (a + b))
        s = 1. if re.lam > 1.5 else -1.
        Ri = -4 * np.array([np.sin(2 * a) + np.sin(2 * (a + b)),
                            np.sin(2 * b) + np.sin(2 * (a + b))])
        c = -8 * np.cos(2 * (a + b))
        Rij = np.array([[-8 * np.cos(2 * a) + c, c], [c, -8 * np.cos(2 * b) + c]])
        gl = s * Ri / (4 * np.sqrt(R))
        Hl = s * (Rij / (4 * np.sqrt(R)) - np.outer(Ri, Ri) / (8 * R**1.5))
    kappa = re.kappa
    H = HV - kappa * Hl + 2 * kappa * np.outer(gl, gl) / re.lam
    logger.debug('Face gradient residual %g', np.linalg.norm(gV - kappa * gl))
    return H, face

def transversal_term(model, re):
    """
    Second derivative of V_L across the face: with x3 = cos theta23 moving as
    phi leaves 0 or pi, d2 V_L / d phi^2 = -cos(phi) sin(theta12) sin(theta13) dV_L / dx3.
    """
    t12, t13, phi = re.y
    x = np.clip(model.charts['face'].to_x(re.y), -1., 1.)
    frame = model.frame(x)
    j = int(np.argmin(np.abs(frame.eigenvalues - re.lam)))
    v = frame.vector(j)
    dF = model.grad_potential(x)[2] - re.kappa * (-2 * v[1] * v[2])
    return -np.cos(phi) * np.sin(t12) * np.sin(t13) * dF

def face_fd_hessian(model, re):
    """
    Finite-difference Hessian of V_L in face chart coordinates, mapped to
    (theta12, theta23, phi). The off-diagonal entries against phi vanish by the
    reflection symmetry through the face.
    """
    face, _, _ = _face_layout(model, re)
    chart = model.charts['face']
    Hy = central_hessian(_tracked_vl(chart, re), re.y)
    if face == 'F2':
        J = np.array([[1., 0., 0.], [1., 1., 0.], [0., 0., 1.]])
    else:
        J = np.array([[1., 0., 0.], [-1., -1., 0.], [0., 0., 1.]])
    return J.T @ Hy @ J

def euler_E_formulas(theta):
    """
    Closed forms of E1 = (1, 1) H (1, 1)^T and E2 = (1, -1) H (1, -1)^T for
    the Eulerian family with the cot potential.
    """
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    csc3 = 1 / s2**3
    if theta < np.pi / 2:
        E1 = 4 * (4 + c2) * csc3
        E2 = -4 * (32 * np.cos(theta)**6 - 2 * np.cos(theta)**2 - 1) / ((1 + 2 * c2) * s2**3)
        return E1, E2
    E2 = -4 * (2 + c2) * (1 + 2 * c2) * csc3
    if theta < 2 * np.pi / 3:
        E1 = 6 * np.sin(4 * theta) / s2**4
    else:
        E1 = -6 * (7 + 8 * c2 + 3 * np.cos(4 * theta)) / ((2 + c2) * s2**3)
    return E1, E2

def lagrange_tangential_eigenvalue(phi):
    """
    Double eigenvalue (1 - 10 cos^2 phi) / (3 cos phi sin^5 phi) of Hess V_L
    orthogonal to the Lagrange line (cot potential).
    """
    c, s = np.cos(phi), np.sin(phi)
    return (1 - 10 * c**2) / (3 * c * s**5)

def lagrange_tangential_factor(lam):
    """
    (lam - 2)(5 lam^2 - 20 lam + 18); zero where the tangential eigenvalue changes sign.
    """
    return (lam - 2) * (5 * lam**2 - 20 * lam + 18)

def hess_vl(model, re, method='analytic'):
    """
    Hessian of the amended potential at a normal relative equilibrium.

    Inputs:
    -------
    model : ModelSystem
        Model
    re : RelEquilibrium
        Normal equilibrium
    method : str
        'analytic': perturbation theory in the interior, face formulas plus
        the transversal term on the boundary; 'fd': central differences

    Returns:
    --------
    H : np.ndarray (d x d)
        Interior: Hessian in chart coordinates. Boundary: block diagonal
        (2x2 face block in (theta12, theta23), transversal term).
    """
    if not re.normal:
        raise NotAnRE('Abnormal equilibria have no amended potential Hessian', point=re.y)
    if method not in ('analytic', 'fd'):
        raise ConfigError('Unknown Hessian method `{0}`'.format(method))
    chart, y = model.chart_for(re.point)
    if re.chart == 'face':
        if method == 'fd':
            return face_fd_hessian(model, re)
        H2, _ = face_hessian(model, re)
        H = np.zeros((3, 3))
        H[:2, :2] = H2
        H[2, 2] = transversal_term(model, re)
        return H
    if method == 'fd':
        return central_hessian(_tracked_vl(chart, re), y)
    frame = chart.frame(y)
    j, _ = track_branch(frame, re.omega_dir)
    d = chart.eigen_gradient(y, j, frame)
    lam = frame.eigenvalues[j]
    return (chart.hess_potential(y) - re.kappa * chart.eigen_hessian(y, j, frame)
            + (re.Lsq / lam**3) * np.outer(d, d))

@dataclass(frozen=True)
class SignatureReport:
    """
    Block signatures of the reduced Hamiltonian Hessian at a relative equilibrium.

    Attributes:
    -----------
    family : str
        Family tag of the equilibrium
    param : float
        Family parameter
    m_block : tuple
        Counts (n_plus, n_zero, n_minus) of the inverse metric block, (3, 0, 0)
    vl : tuple
        Counts of the amended potential block
    jx : tuple
        Counts of the rotational block
    sig_vl : str
        Signs of (E1, E2, T) on the boundary; sorted signs in the interior
    verdict : str
        'stable-by-minimum', 'unstable-odd-index' or 'indeterminate'
    det_vl : float
        Determinant of the amended potential block
    thresholds_nearby : list of str
        Transition points within 1e-2 of `param`
    """
    family: str
    param: float
    m_block: tuple
    vl: tuple
    jx: tuple
    sig_vl: str
    verdict: str
    det_vl: float
    thresholds_nearby: list = field(default_factory=list)

    @property
    def sig_m(self):
        return _sig_string(self.m_block)

    @property
    def sig_jx(self):
        return _sig_string(self.jx)

    @property
    def n_plus(self):
        return self.m_block[0] + self.vl[0] + self.jx[0]

    @property
    def n_zero(self):
        return self.m_block[1] + self.vl[1] + self.jx[1]

    def record(self):
        return {'family': self.family, 'param': self.param, 'sig_m': self.sig_m,
                'sig_vl': self.sig_vl, 'sig_jx': self.sig_jx, 'verdict': self.verdict,
                'det_vl': self.det_vl}

    def __repr__(self):
        return 'SignatureReport({0}={1:.6g}: ({2}, {3}, {4}) {5})'.format(
            self.family, self.param, self.sig_m, self.sig_vl, self.sig_jx, self.verdict)

_SCAN_FAMILY = {'Euler-i': 'euler', 'Euler-ii': 'euler', 'Lagrange-2i': 'lagrange',
                'Planar-iii': 'planar-iii'}

def signature_report(model, re, method='analytic', tau_zero=TAU_ZERO):
    """
    Assemble the block signatures and stability verdict of a normal relative
    equilibrium. The inverse metric block is positive definite and is
    declared (+++) without being computed.
    """
    H = hess_vl(model, re, method)
    chart, y = model.chart_for(re.point)
    frame = chart.frame(y)
    jx = jx_signature(frame, re.branch)
    if (re.chart == 'face') and (H.shape == (3, 3)) and abs(H[0, 0] - H[1, 1]) <= 1e-8 * (1 + abs(H[0, 0])):
        # Isosceles boundary point: (1, 1) and (1, -1) diagonalize the face block
        values = np.array([H[0, 0] + 2 * H[0, 1] + H[1, 1],
                           H[0, 0] - 2 * H[0, 1] + H[1, 1], H[2, 2]])
        sig_vl = _sign_string(values, tau_zero)
    else:
        values = np.linalg.eigvalsh(0.5 * (H + H.T))[::-1]
        sig_vl = _sign_string(values, tau_zero)
    vl = _counts(values, tau_zero)
    m_block = (y.size, 0, 0)
    nearby = []
    family = _SCAN_FAMILY.get(re.family)
    if family is not None:
        nearby = [name for name, value in transition_points(family).items()
                  if abs(value - re.param) < 1e-2]
    return SignatureReport(re.family, re.param, m_block, vl, jx, sig_vl,
                           verdict(vl, jx, m_block), float(np.linalg.det(H)), nearby)

def family_equilibrium(model, family, param):
    """
    Relative equilibrium of a scanned family at a parameter value.
    """
    if family == 'euler':
        return eulerian_family(param, model)
    if family == 'lagrange':
        return lagrange_family(param, model)
    if family == 'planar-iii':
        return planar_family(param, model)
    raise ConfigError('Unknown family `{0}`'.format(family))

def default_grid(family, n=500, lsq_range=(10., 80.)):
    if family == 'euler':
        return np.linspace(0., np.pi, n + 2)[1:-1]
    if family == 'lagrange':
        return np.linspace(0., 2 * np.pi / 3, n + 2)[1:-1]
    if family == 'planar-iii':
        return np.linspace(lsq_range[0], lsq_range[1], n)
    raise ConfigError('Unknown family `{0}`'.format(family))

class SignatureScan():
    """
    Recorder for a signature scan along a family. Reports are recorded inside
    a `with` block; on exit the records become a DataFrame.

    Inputs:
    -------
    family : str
        'euler', 'lagrange' or 'planar-iii'
    n_total : int (optional)
        Number of points, for the progress bar
    verbose : bool
        Print a progress bar on stdout

    Attributes:
    -----------
    table : pd.DataFrame
        One row per successful report, sorted by parameter
    failures : dict
        Parameter -> error message for points that could not be evaluated
    """
    def __init__(self, family, n_total=None, verbose=False):
        self.family = family
        self.n_total = n_total
        self.verbose = verbose
        self.reports = {}
        self.failures = {}
        self.table = None
        self.transitions = []

    def __enter__(self):
        self._clock_start_time = time.time()
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        d = {i: self.reports[p].record() for i, p in enumerate(sorted(self.reports))}
        df = pd.DataFrame.from_dict(d, orient='index')
        if df.empty:
            df = pd.DataFrame(columns=SCAN_COLUMNS)
        self.table = df[SCAN_COLUMNS].reset_index(drop=True)
        if self.verbose:
            sys.stdout.write('\n')

    def record(self, param, report=None, error=None):
        """
        Save the outcome at one parameter value.
        """
        if report is not None:
            self.reports[float(param)] = report
        else:
            self.failures[float(param)] = str(error)
            logger.debug('%s scan skipped %g: %s', self.family, param, error)
        if self.verbose:
            self.print_progress()

    def print_progress(self):
        """
        Print scan progress
        """
        done = len(self.reports) + len(self.failures)
        total = self.n_total or done
        elapsed_time = round(time.time() - self._clock_start_time, 2)
        bar_len = 50
        progress_ratio = float(min(done, total)) / float(max(total, 1))
        progress_len = int(round(bar_len * progress_ratio))
        pct_finished = round(100.0 * progress_ratio, 1)
        bar = '=' * progress_len + '-' * (bar_len - progress_len)
        sys.stdout.write('\r[{0}] {1}{2} [{3} s]'.format(bar, pct_finished, '%', elapsed_time))
        sys.stdout.flush()

    def key(self, param):
        report = self.reports[param]
        return (report.sig_vl, report.sig_jx)

    def regimes(self):
        """
        Maximal runs of constant (sig_vl, sig_jx) along the scan.

        Returns:
        --------
        regimes : pd.DataFrame
            Columns start, end, sig_vl, sig_jx, verdict, n_points
        """
        rows = []
        for param in sorted(self.reports):
            report = self.reports[param]
            if rows and (rows[-1]['sig_vl'], rows[-1]['sig_jx']) == self.key(param):
                rows[-1]['end'] = param
                rows[-1]['n_points'] += 1
            else:
                rows.append({'start': param, 'end': param, 'sig_vl': report.sig_vl,
                             'sig_jx': report.sig_jx, 'verdict': report.verdict,
                             'n_points': 1})
        return pd.DataFrame(rows, columns=['start', 'end', 'sig_vl', 'sig_jx', 'verdict',
                                           'n_points'])

    def brackets(self):
        """
        Consecutive scan parameters across which the signature changes.
        """
        params = sorted(self.reports)
        return [(p0, p1) for p0, p1 in zip(params[:-1], params[1:])
                if self.key(p0) != self.key(p1)]

def _report_at(model, family, param, method, tau_zero=TAU_ZERO):
    return signature_report(model, family_equilibrium(model, family, param), method, tau_zero)

def refine_transition(model, family, lo, hi, key_lo, method='analytic', xtol=1e-10,
                      tau_zero=TAU_ZERO):
    """
    Bisect a signature change between `lo` (signature `key_lo`) and `hi`.
    A parameter at which no equilibrium can be evaluated is returned as the
    transition itself.
    """
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        try:
            report = _report_at(model, family, mid, method, tau_zero)
        except ShapeWebError as err:
            logger.debug('Transition refinement stopped at singular point %g: %s', mid, err)
            return mid
        if (report.sig_vl, report.sig_jx) == key_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

def signature_scan(model=None, family='euler', params=None, n=500, lsq_range=(10., 80.),
                   method='analytic', threads=None, refine=True, verbose=False,
                   tau_zero=TAU_ZERO):
    """
    Signature reports along a family, with signature changes refined by bisection.

    Inputs:
    -------
    model : Spherical3Body (optional)
        Model (default cot potential)
    family : str
        'euler', 'lagrange' or 'planar-iii'
    params : np.ndarray (optional)
        Parameter grid; defaults to n interior points of the family range
    n : int
        Grid size when `params` is not given
    lsq_range : pair of float
        Squared momentum range for 'planar-iii'
    method : str
        Hessian method passed to `hess_vl`
    threads : int (optional)
        Worker count
    refine : bool
        Refine transition parameters by bisection
    verbose : bool
        Print a progress bar
    tau_zero : float
        Eigenvalues with |value| <= tau_zero count as zero in the signatures

    Returns:
    --------
    scan : SignatureScan
        With `table`, `regimes()` and refined `transitions`
    """
    if model is None:
        model = Spherical3Body()
    if params is None:
        params = default_grid(family, n, lsq_range)
    params = np.asarray(params, dtype=float)

    def evaluate(param):
        try:
            return param, _report_at(model, family, param, method, tau_zero), None
        except ShapeWebError as err:
            return param, None, err

    with SignatureScan(family, n_total=params.size, verbose=verbose) as scan:
        with ThreadPool(worker_count(threads)) as pool:
            for param, report, err in pool.imap(evaluate, params):
                scan.record(param, report, err)
    if refine:
        scan.transitions = [refine_transition(model, family, lo, hi, scan.key(lo), method,
                                              tau_zero=tau_zero)
                            for lo, hi in scan.brackets()]
    logger.info('%s scan: %d reports, %d skipped, %d transitions', family,
                len(scan.reports), len(scan.failures), len(scan.transitions))
    return scan
