"""
Mechanical systems with SO(3) (or SO(3) x SO(3)) symmetry, described on a
chart of shape space by their locked inertia tensor and potential.

Every model exposes the `Chart` interface: `inertia`, `potential`, their
derivatives, a domain test, and the implicit leaf function
det(lam I - inertia(x)) used by the web engine.
"""
import logging
from dataclasses import dataclass
from itertools import permutations
import numpy as np
import scipy.spatial
from shapeweb_solver.errors import (DomainError, SingularConfiguration, RepeatedEigenvalue,
                                    DegenerateShape, ConfigError)
from shapeweb_solver.lie_core import (eig_sym, eigen_gradient, eigen_hessian, block_inertia,
                                      TAU_MULT)
from shapeweb_solver.utils import central_gradient, central_hessian
try:
    import numba
    _HAS_NUMBA = True
except:
    _HAS_NUMBA = False
if _HAS_NUMBA:
    from shapeweb_solver.nutils import shifted_det, cayley_grid, boundary_grid
else:
    from shapeweb_solver.utils import shifted_det, cayley_grid, boundary_grid

logger = logging.getLogger(__name__)

eps = np.finfo(float).eps

# Boundary tolerance on C(x) for chart selection and clipping
TAU_BD = 1e-7

class CotPotential():
    """
    Cotangent pair potential V(theta) = -cot(theta) (attractive: dV/dtheta > 0).
    """
    name = 'cot'

    def value(self, theta):
        return -np.cos(theta) / np.sin(theta)

    def d1(self, theta):
        return 1. / np.sin(theta)**2

    def d2(self, theta):
        return -2 * np.cos(theta) / np.sin(theta)**3

class ChordPotential():
    """
    Newtonian potential in the chord distance, V(theta) = -1 / (2 sin(theta / 2)).
    """
    name = 'chord'

    def value(self, theta):
        return -0.5 / np.sin(0.5 * theta)

    def d1(self, theta):
        h = 0.5 * theta
        return np.cos(h) / (4 * np.sin(h)**2)

    def d2(self, theta):
        h = 0.5 * theta
        return -(1 + np.cos(h)**2) / (8 * np.sin(h)**3)

class NewtonRadial():
    """
    Attractive radial potential V(r) = -1 / r.
    """
    name = 'newton'

    def value(self, r):
        return -1. / r

    def d1(self, r):
        return 1. / r**2

    def d2(self, r):
        return -2. / r**3

PAIR_POTENTIALS = {'cot': CotPotential, 'chord': ChordPotential}
RADIAL_POTENTIALS = {'newton': NewtonRadial}

def _lookup(table, potential):
    if not isinstance(potential, str):
        return potential
    try:
        return table[potential]()
    except KeyError:
        raise ConfigError('Unknown potential `{0}`; expected one of {1}'.format(
            potential, sorted(table)))

@dataclass(frozen=True)
class ShapePoint:
    """
    Coordinates of a point of shape space in a named chart.
    """
    coords: tuple
    chart: str = 'interior'

    @property
    def array(self):
        return np.asarray(self.coords, dtype=float)

def grid_points(axes):
    """
    Flatten the tensor grid spanned by `axes` into an (n x d) array.
    """
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack(mesh, axis=-1).reshape(-1, len(axes))

class Chart():
    """
    Base class for a chart of shape space carrying a locked inertia tensor and
    a potential. Derivatives default to central finite differences; charts
    with closed forms override them.

    Methods:
    --------
    inertia : Locked inertia tensor at a point
    inertia_derivatives : First and second partials of the inertia tensor
    potential : Potential energy at a point
    grad_potential : Gradient of the potential
    hess_potential : Hessian of the potential
    domain_value : Signed domain function (nonnegative inside the chart)
    frame : Eigen decomposition of the inertia tensor
    implicit : det(lam I - inertia(x)) at a batch of points

    Attributes:
    -----------
    tau_mult : float
        Relative tolerance under which eigenvalues form a repeated cluster
    """
    name = 'interior'
    dim = 3
    tau_mult = TAU_MULT

    def inertia(self, y):
        raise NotImplementedError

    def inertia_batch(self, Y):
        return np.array([self.inertia(y) for y in Y])

    def inertia_derivatives(self, y):
        y = np.asarray(y, dtype=float)
        return central_gradient(self.inertia, y), central_hessian(self.inertia, y)

    def potential(self, y):
        raise NotImplementedError

    def grad_potential(self, y):
        return central_gradient(self.potential, np.asarray(y, dtype=float))

    def hess_potential(self, y):
        return central_hessian(self.potential, np.asarray(y, dtype=float))

    def domain_value(self, y):
        return 1.

    def domain_batch(self, Y):
        return np.array([self.domain_value(y) for y in Y])

    def domain_test(self, y, tol=TAU_BD):
        return bool(self.domain_value(np.asarray(y, dtype=float)) >= -tol)

    def check_domain(self, y):
        if not self.domain_test(y):
            raise DomainError('Point outside the {0} chart'.format(self.name), point=y)

    def frame(self, y, tau_mult=None):
        if tau_mult is None:
            tau_mult = self.tau_mult
        return eig_sym(self.inertia(y), tau_mult)

    def eigen_gradient(self, y, j, frame=None):
        if frame is None:
            frame = self.frame(y)
        dS, _ = self.inertia_derivatives(y)
        return eigen_gradient(frame, j, dS)

    def eigen_hessian(self, y, j, frame=None):
        if frame is None:
            frame = self.frame(y)
        dS, d2S = self.inertia_derivatives(y)
        return eigen_hessian(frame, j, dS, d2S)

    def implicit(self, lam, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return shifted_det(float(lam), np.ascontiguousarray(self.inertia_batch(Y)))

    def implicit_grid(self, lam, axes):
        shape = tuple(axis.size for axis in axes)
        return self.implicit(lam, grid_points(axes)).reshape(shape)

    def domain_grid(self, axes):
        shape = tuple(axis.size for axis in axes)
        return self.domain_batch(grid_points(axes)).reshape(shape)

class ModelSystem(Chart):
    """
    A mechanical system: its default chart plus any auxiliary charts.

    Attributes:
    -----------
    model_id : str
        Identifier used by configuration files and the CLI
    charts : dict
        Charts by name; the model itself is the 'interior' chart
    """
    model_id = None

    def __init__(self):
        self.charts = {'interior': self}

    def get_chart(self, name):
        try:
            return self.charts[name]
        except KeyError:
            raise DomainError('Model `{0}` has no chart `{1}`'.format(self.model_id, name))

    def chart_for(self, point):
        if isinstance(point, ShapePoint):
            return self.get_chart(point.chart), point.array
        return self, np.asarray(point, dtype=float)

    def local_chart(self, x):
        return 'interior'

    def bounds(self, lam=None):
        return np.array([[-1., 1.]] * self.dim)

    def repeated_descriptor(self):
        return None

    def params(self):
        return {}

    def __repr__(self):
        args = ', '.join('{0}={1}'.format(k, v) for k, v in self.params().items())
        return '{0}({1})'.format(type(self).__name__, args)

class Sphere2Body(ModelSystem):
    """
    Two particles on the unit sphere subject to an attractive pair potential.

    Inputs:
    -------
    m1, m2 : float
        Particle masses
    potential : str or pair potential instance
        Pair potential of the subtended angle (default 'cot')

    The chart is the subtended angle theta in (0, pi), with section
    q1 = (1, 0, 0), q2 = (cos theta, sin theta, 0).
    """
    model_id = 's2body'
    dim = 1

    def __init__(self, m1=1., m2=1., potential='cot'):
        super().__init__()
        if (m1 <= 0) or (m2 <= 0):
            raise ConfigError('Masses must be positive')
        self.m1 = float(m1)
        self.m2 = float(m2)
        self.pair = _lookup(PAIR_POTENTIALS, potential)

    def params(self):
        return {'m': [self.m1, self.m2], 'potential': self.pair.name}

    def bounds(self, lam=None):
        return np.array([[0., np.pi]])

    def _theta(self, y):
        theta = float(np.ravel(y)[0])
        if not (0 < theta < np.pi):
            raise DomainError('Angle outside (0, pi)', point=theta)
        return theta

    def section(self, y):
        theta = self._theta(y)
        return np.array([[1., 0., 0.], [np.cos(theta), np.sin(theta), 0.]])

    def inertia(self, y):
        theta = self._theta(y)
        m1, m2 = self.m1, self.m2
        s, c = np.sin(theta), np.cos(theta)
        return np.array([[m2 * s**2, -m2 * s * c, 0.],
                         [-m2 * s * c, m1 + m2 * c**2, 0.],
                         [0., 0., m1 + m2]])

    def inertia_derivatives(self, y):
        theta = self._theta(y)
        m2 = self.m2
        s2, c2 = np.sin(2 * theta), np.cos(2 * theta)
        dS = np.zeros((1, 3, 3))
        d2S = np.zeros((1, 1, 3, 3))
        dS[0, :2, :2] = [[m2 * s2, -m2 * c2], [-m2 * c2, -m2 * s2]]
        d2S[0, 0, :2, :2] = [[2 * m2 * c2, 2 * m2 * s2], [2 * m2 * s2, -2 * m2 * c2]]
        return dS, d2S

    def potential(self, y):
        return self.pair.value(self._theta(y))

    def grad_potential(self, y):
        return np.array([self.pair.d1(self._theta(y))])

    def hess_potential(self, y):
        return np.array([[self.pair.d2(self._theta(y))]])

    def domain_value(self, y):
        return np.sin(float(np.ravel(y)[0]))

def two_body_eigendata(m1, m2, theta, tau=1e-12):
    """
    Closed-form eigenvalues of the two-body locked inertia tensor.

    Inputs:
    -------
    m1, m2 : float
        Particle masses
    theta : float
        Subtended angle in (0, pi)
    tau : float
        Relative tolerance below which D_theta counts as zero

    Returns:
    --------
    lam0 : float
        Constant eigenvalue m1 + m2
    lam_plus, lam_minus : float
        (m1 + m2 +- sqrt(D_theta)) / 2
    dlam_plus, dlam_minus : float
        Derivatives -+ m1 m2 sin(2 theta) / sqrt(D_theta)
    """
    lam0 = m1 + m2
    D = m1**2 + 2 * m1 * m2 * np.cos(2 * theta) + m2**2
    if D <= tau * lam0**2:
        raise RepeatedEigenvalue('D_theta vanishes', point=theta)
    root = np.sqrt(D)
    dlam = m1 * m2 * np.sin(2 * theta) / root
    return lam0, 0.5 * (lam0 + root), 0.5 * (lam0 - root), -dlam, dlam

class RubberBall(ModelSystem):
    """
    Symmetric matrices under conjugation, charted locally by ordered eigenvalues
    x1 < x2 < x3. The locked inertia is diag((x1-x2)^2, (x1-x3)^2, (x2-x3)^2)
    and the sample potential is isotropic elastic, V = k/2 sum (x_i - rest)^2.
    """
    model_id = 'rubber'
    _pairs = ((0, 1), (0, 2), (1, 2))

    def __init__(self, stiffness=1., rest=1.):
        super().__init__()
        self.stiffness = float(stiffness)
        self.rest = float(rest)

    def params(self):
        return {'stiffness': self.stiffness, 'rest': self.rest}

    def bounds(self, lam=None):
        return np.array([[-2., 2.]] * 3)

    def inertia(self, x):
        x = np.asarray(x, dtype=float)
        return np.diag([(x[i] - x[j])**2 for i, j in self._pairs])

    def inertia_batch(self, X):
        X = np.asarray(X, dtype=float)
        S = np.zeros((X.shape[0], 3, 3))
        for n, (i, j) in enumerate(self._pairs):
            S[:, n, n] = (X[:, i] - X[:, j])**2
        return S

    def inertia_derivatives(self, x):
        x = np.asarray(x, dtype=float)
        dS = np.zeros((3, 3, 3))
        d2S = np.zeros((3, 3, 3, 3))
        for n, (i, j) in enumerate(self._pairs):
            dS[i, n, n] = 2 * (x[i] - x[j])
            dS[j, n, n] = -2 * (x[i] - x[j])
            d2S[i, i, n, n] = d2S[j, j, n, n] = 2.
            d2S[i, j, n, n] = d2S[j, i, n, n] = -2.
        return dS, d2S

    def potential(self, x):
        return 0.5 * self.stiffness * ((np.asarray(x) - self.rest)**2).sum()

    def grad_potential(self, x):
        return self.stiffness * (np.asarray(x, dtype=float) - self.rest)

    def hess_potential(self, x):
        return self.stiffness * np.eye(3)

    def domain_value(self, x):
        return min(x[1] - x[0], x[2] - x[1])

    def domain_batch(self, X):
        return np.minimum(X[:, 1] - X[:, 0], X[:, 2] - X[:, 1])

    def repeated_descriptor(self):
        # Chart walls x1 = x2 and x2 = x3 carry repeated eigenvalues as well
        normals = np.array([[1., -2., 1.], [1., -1., 0.], [0., 1., -1.]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        return RepeatedDescriptor('plane 2*x2 = x1 + x3 and chart walls',
                                  lambda X: np.abs(np.atleast_2d(X) @ normals.T).min(axis=1))

class Triatomic(ModelSystem):
    """
    Three particles in R^3 in a centre-of-mass frame, charted by
    x = (|q1|^2, |q2|^2, <q1, q2>) in the cone x1 x2 >= x3^2, x1, x2 >= 0.
    The orbit map pi(Q) = |Q|^2 Id - Q^T Q is linear in x and shares its
    characteristic polynomial with the locked inertia tensor.

    Inputs:
    -------
    m1, m2, m3 : float
        Particle masses
    stiffness : sequence of 3 floats
        Spring constants for the pairs (12, 13, 23)
    rest : sequence of 3 floats
        Rest lengths for the pairs (12, 13, 23)
    """
    model_id = 'triatomic'

    def __init__(self, m1=1., m2=2., m3=3., stiffness=(1., 1., 1.), rest=(1.0, 1.2, 1.4)):
        super().__init__()
        self.m = np.array([m1, m2, m3], dtype=float)
        if (self.m <= 0).any():
            raise ConfigError('Masses must be positive')
        self.stiffness = np.asarray(stiffness, dtype=float)
        self.rest = np.asarray(rest, dtype=float)
        # Squared pair distances are linear in x: d^2 = A x
        self._A = np.array([self._sq_distances(e) for e in np.eye(3)]).T

    def params(self):
        return {'m': self.m.tolist(), 'stiffness': self.stiffness.tolist(),
                'rest': self.rest.tolist()}

    def bounds(self, lam=None):
        return np.array([[0., 2.], [0., 2.], [-2., 2.]])

    def _inner(self, x):
        # Inner products <q_i, q_j> of the centre-of-mass positions
        m1, m2, m3 = self.m
        x1, x2, x3 = x
        q13 = -(m1 * x1 + m2 * x3) / m3
        q23 = -(m1 * x3 + m2 * x2) / m3
        q33 = (m1**2 * x1 + 2 * m1 * m2 * x3 + m2**2 * x2) / m3**2
        return np.array([[x1, x3, q13], [x3, x2, q23], [q13, q23, q33]])

    def _sq_distances(self, x):
        P = self._inner(x)
        return np.array([P[0, 0] + P[1, 1] - 2 * P[0, 1],
                         P[0, 0] + P[2, 2] - 2 * P[0, 2],
                         P[1, 1] + P[2, 2] - 2 * P[1, 2]])

    def gram(self, x):
        root_m = np.sqrt(self.m)
        return np.outer(root_m, root_m) * self._inner(np.asarray(x, dtype=float))

    def inertia(self, x):
        G = self.gram(x)
        return np.trace(G) * np.eye(3) - G

    def inertia_batch(self, X):
        dS, _ = self.inertia_derivatives(None)
        return np.einsum('na,aij->nij', np.asarray(X, dtype=float), dS)

    def inertia_derivatives(self, x):
        # pi(x) is linear in x
        dS = np.array([self.inertia(e) for e in np.eye(3)])
        return dS, np.zeros((3, 3, 3, 3))

    def positions(self, x):
        """
        Particle positions (rows) in the centre-of-mass frame realizing x.
        """
        x1, x2, x3 = np.asarray(x, dtype=float)
        if (x1 <= 0) or (x1 * x2 - x3**2 < 0):
            raise DomainError('Point outside the cone', point=x)
        q1 = np.array([np.sqrt(x1), 0., 0.])
        q2 = np.array([x3 / np.sqrt(x1), np.sqrt(max(x2 - x3**2 / x1, 0.)), 0.])
        q3 = -(self.m[0] * q1 + self.m[1] * q2) / self.m[2]
        return np.array([q1, q2, q3])

    def potential(self, x):
        d = np.sqrt(self._A @ np.asarray(x, dtype=float))
        return (self.stiffness * (d - self.rest)**2).sum()

    def grad_potential(self, x):
        d = np.sqrt(self._A @ np.asarray(x, dtype=float))
        return self._A.T @ (self.stiffness * (1 - self.rest / d))

    def hess_potential(self, x):
        d = np.sqrt(self._A @ np.asarray(x, dtype=float))
        w = self.stiffness * self.rest / (2 * d**3)
        return (self._A.T * w) @ self._A

    def equilibrium(self):
        """
        Shape at which every spring sits at its rest length.
        """
        x0 = np.linalg.solve(self._A, self.rest**2)
        self.check_domain(x0)
        return x0

    def s_point(self):
        """
        Shape coordinates of S = I + mu mu^T (mu the unit mass vector).
        """
        M = self.m.sum()
        return np.array([(M - self.m[0]) / (self.m[0] * M),
                         (M - self.m[1]) / (self.m[1] * M),
                         -1. / M])

    def domain_value(self, x):
        return min(x[0] * x[1] - x[2]**2, x[0], x[1])

    def domain_batch(self, X):
        return np.minimum.reduce([X[:, 0] * X[:, 1] - X[:, 2]**2, X[:, 0], X[:, 1]])

    def repeated_descriptor(self):
        s_hat = self.s_point() / np.linalg.norm(self.s_point())
        def distance(X):
            X = np.atleast_2d(X)
            to_line = np.linalg.norm(X - np.outer(X @ s_hat, s_hat), axis=1)
            cone = X[:, 0] * X[:, 1] - X[:, 2]**2
            grad = np.linalg.norm(np.stack([X[:, 1], X[:, 0], -2 * X[:, 2]], axis=1), axis=1)
            to_cone = np.abs(cone) / np.maximum(grad, eps)
            return np.minimum(to_line, to_cone)
        return RepeatedDescriptor('line span(S) and cone boundary', distance)

def locked_inertia(positions, masses):
    """
    Locked inertia tensor sum_j m_j (|q_j|^2 Id - q_j q_j^T) of point masses.
    """
    positions = np.atleast_2d(positions)
    I = np.zeros((3, 3))
    for q, m in zip(positions, masses):
        I += m * (q @ q * np.eye(3) - np.outer(q, q))
    return I

def triatomic_S_matrix(m1, m2, m3):
    """
    The matrix S = 2 mu mu^T + xi xi^T + eta eta^T = Id + mu mu^T, with mu the
    unit vector along (sqrt(m1), sqrt(m2), sqrt(m3)).
    """
    mu = np.sqrt(np.array([m1, m2, m3], dtype=float))
    mu /= np.linalg.norm(mu)
    return np.eye(3) + np.outer(mu, mu)

def repeated_locus_triatomic(model, x, tau_mult=1e-8):
    """
    True if pi(Q) has a repeated eigenvalue at the shape x.
    """
    return model.frame(x, tau_mult).has_repeated()

class FullBodySatellite(ModelSystem):
    """
    A rigid body with principal moments I1 < I2 < I3 whose centre of mass sits at
    x in R^3 (outside the body) in a radial potential.

    Inputs:
    -------
    I : sequence of 3 floats
        Principal moments of inertia, strictly increasing
    potential : str or radial potential instance
        Potential of |x| (default 'newton')
    r_body : float
        Radius of the excluded body region
    """
    model_id = 'fullbody'

    def __init__(self, I=(1., 2., 3.), potential='newton', r_body=0.5):
        super().__init__()
        self.I = np.asarray(I, dtype=float)
        if not (self.I[0] < self.I[1] < self.I[2]):
            raise ConfigError('Principal moments must be strictly increasing')
        self.radial = _lookup(RADIAL_POTENTIALS, potential)
        self.r_body = float(r_body)

    def params(self):
        return {'I': self.I.tolist(), 'potential': self.radial.name, 'r_body': self.r_body}

    def bounds(self, lam=None):
        if lam is None:
            half = 2.
        else:
            half = np.sqrt(max(lam - self.I[0], 0.)) + 0.25
        return np.array([[-half, half]] * 3)

    def inertia(self, x):
        x = np.asarray(x, dtype=float)
        return np.diag(self.I) + (x @ x) * np.eye(3) - np.outer(x, x)

    def inertia_batch(self, X):
        X = np.asarray(X, dtype=float)
        r2 = (X**2).sum(axis=1)
        return (np.diag(self.I)[None] + r2[:, None, None] * np.eye(3)[None]
                - X[:, :, None] * X[:, None, :])

    def inertia_derivatives(self, x):
        x = np.asarray(x, dtype=float)
        E = np.eye(3)
        dS = np.array([2 * x[a] * E - np.outer(E[a], x) - np.outer(x, E[a]) for a in range(3)])
        d2S = np.array([[2 * E[a, b] * E - np.outer(E[a], E[b]) - np.outer(E[b], E[a])
                         for b in range(3)] for a in range(3)])
        return dS, d2S

    def _radius(self, x):
        r = np.linalg.norm(x)
        if r <= eps:
            raise SingularConfiguration('Centre of mass at the origin', point=x)
        return r

    def potential(self, x):
        return self.radial.value(self._radius(np.asarray(x, dtype=float)))

    def grad_potential(self, x):
        x = np.asarray(x, dtype=float)
        r = self._radius(x)
        return self.radial.d1(r) * x / r

    def hess_potential(self, x):
        x = np.asarray(x, dtype=float)
        r = self._radius(x)
        u = x / r
        P = np.outer(u, u)
        return self.radial.d2(r) * P + self.radial.d1(r) / r * (np.eye(3) - P)

    def domain_value(self, x):
        return np.linalg.norm(x) - self.r_body

    def domain_batch(self, X):
        return np.linalg.norm(X, axis=1) - self.r_body

    def implicit(self, lam, X):
        """
        det(lam I - inertia(x)) written as the cleared-denominator form of the
        leaf equation 1 = sum_j x_j^2 / ((I_j - lam) + |x|^2).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r2 = (X**2).sum(axis=1)
        d = self.I[None, :] - lam + r2[:, None]
        prod = d.prod(axis=1)
        cross = sum(X[:, j]**2 * np.prod(np.delete(d, j, axis=1), axis=1) for j in range(3))
        return -(prod - cross)

    def leaf_equation(self, lam, x):
        """
        Right hand side sum_j x_j^2 / ((I_j - lam) + |x|^2) of the leaf equation.
        """
        x = np.asarray(x, dtype=float)
        return (x**2 / (self.I - lam + x @ x)).sum()

    def repeated_descriptor(self):
        curves = [fullbody_repeated_curves(self.I, m, n=4000) for m in (1, 2, 3)]
        points = np.vstack([c.points for c in curves if not c.empty])
        tree = scipy.spatial.cKDTree(points)
        return RepeatedDescriptor('principal-plane conics',
                                  lambda X: tree.query(np.atleast_2d(X))[0])

@dataclass(frozen=True)
class RepeatedCurve:
    """
    Sampled curve of repeated eigenvalues lying in a principal plane.

    Attributes:
    -----------
    kind : str
        'ellipse', 'hyperbola' or 'empty'
    m : int
        Index (1-based) of the principal axis normal to the plane
    points : np.ndarray (n x 3)
        Samples along the curve
    """
    kind: str
    m: int
    points: np.ndarray

    @property
    def empty(self):
        return self.kind == 'empty'

def fullbody_repeated_curves(I, m, n=200, t_max=2.):
    """
    Curve x_k^2 (I_l - I_m) + x_l^2 (I_k - I_m) = (I_k - I_m)(I_l - I_m), x_m = 0,
    on which the full-body inertia tensor has a repeated eigenvalue.

    Inputs:
    -------
    I : sequence of 3 floats
        Principal moments, strictly increasing
    m : int
        Principal axis (1, 2 or 3) normal to the plane of the curve
    n : int
        Number of samples (per branch for the hyperbola)
    t_max : float
        Parameter range for hyperbola branches
    """
    I = np.asarray(I, dtype=float)
    if m not in (1, 2, 3):
        raise ConfigError('Principal axis must be 1, 2 or 3')
    k, l = [i for i in range(3) if i != m - 1]
    i_m = m - 1
    if m == 3:
        return RepeatedCurve('empty', m, np.empty((0, 3)))
    if m == 1:
        t = np.linspace(0., 2 * np.pi, n, endpoint=False)
        points = np.zeros((n, 3))
        points[:, k] = np.sqrt(I[k] - I[i_m]) * np.cos(t)
        points[:, l] = np.sqrt(I[l] - I[i_m]) * np.sin(t)
        return RepeatedCurve('ellipse', m, points)
    # m == 2: x_l^2 / (I_l - I_m) - x_k^2 / (I_m - I_k) = 1
    t = np.linspace(-t_max, t_max, n)
    branches = []
    for sign in (1., -1.):
        branch = np.zeros((n, 3))
        branch[:, k] = np.sqrt(I[i_m] - I[k]) * np.sinh(t)
        branch[:, l] = sign * np.sqrt(I[l] - I[i_m]) * np.cosh(t)
        branches.append(branch)
    return RepeatedCurve('hyperbola', m, np.vstack(branches))

@dataclass(frozen=True)
class RepeatedDescriptor:
    """
    Analytic description of a repeated-eigenvalue locus.

    Attributes:
    -----------
    name : str
        Human readable description
    distance : function
        Maps an (n x d) array of points to their distances from the locus
    """
    name: str
    distance: object

class Spherical3Body(ModelSystem):
    """
    Three unit masses on the unit sphere. The interior chart uses
    x = (cos theta12, cos theta13, cos theta23) in the curvy tetrahedron
    C(x) = 1 + 2 x1 x2 x3 - x1^2 - x2^2 - x3^2 >= 0, with
    inertia pi(Q) = 3 Id - Q^T Q. Coplanar configurations (C(x) = 0) are
    handled in the smooth face chart y = (theta12, theta13, phi).

    Inputs:
    -------
    potential : str or pair potential instance
        Attractive pair potential of the mutual angles (default 'cot')

    Methods:
    --------
    local_chart : Name of the chart to use near a point
    section : Particle positions realizing an interior shape
    face_point : Face chart coordinates of an isosceles-style boundary point
    symmetry_maps : The order-24 action on x (permutations and double sign flips)
    """
    model_id = 's3body'
    # Pairs (12, 13, 23) as particle index tuples
    _pairs = ((0, 1), (0, 2), (1, 2))

    def __init__(self, potential='cot'):
        super().__init__()
        self.pair = _lookup(PAIR_POTENTIALS, potential)
        self.charts['face'] = FaceChart(self)

    def params(self):
        return {'potential': self.pair.name}

    def _angles(self, x):
        x = np.asarray(x, dtype=float)
        if (np.abs(x) >= 1 - 1e-14).any():
            raise SingularConfiguration('Collision or antipodal pair', point=x)
        return np.arccos(x)

    def inertia(self, x):
        x1, x2, x3 = np.asarray(x, dtype=float)
        return np.array([[2., -x1, -x2], [-x1, 2., -x3], [-x2, -x3, 2.]])

    def inertia_batch(self, X):
        X = np.asarray(X, dtype=float)
        S = np.zeros((X.shape[0], 3, 3))
        S[:, 0, 0] = S[:, 1, 1] = S[:, 2, 2] = 2.
        for n, (i, j) in enumerate(self._pairs):
            S[:, i, j] = S[:, j, i] = -X[:, n]
        return S

    def inertia_derivatives(self, x):
        dS = np.zeros((3, 3, 3))
        for n, (i, j) in enumerate(self._pairs):
            dS[n, i, j] = dS[n, j, i] = -1.
        return dS, np.zeros((3, 3, 3, 3))

    def potential(self, x):
        return self.pair.value(self._angles(x)).sum()

    def grad_potential(self, x):
        theta = self._angles(x)
        return -self.pair.d1(theta) / np.sin(theta)

    def hess_potential(self, x):
        theta = self._angles(x)
        s, c = np.sin(theta), np.cos(theta)
        return np.diag(self.pair.d2(theta) / s**2 - self.pair.d1(theta) * c / s**3)

    def domain_value(self, x):
        x1, x2, x3 = x
        return 1 + 2 * x1 * x2 * x3 - x1**2 - x2**2 - x3**2

    def domain_batch(self, X):
        X = np.asarray(X, dtype=float)
        return (1 + 2 * X[:, 0] * X[:, 1] * X[:, 2] - (X**2).sum(axis=1))

    def domain_test(self, x, tol=TAU_BD):
        x = np.asarray(x, dtype=float)
        return bool((np.abs(x) <= 1 + tol).all() and self.domain_value(x) >= -tol)

    def implicit(self, lam, X):
        """
        Cayley form (lam - 2)^3 - (lam - 2)|x|^2 + 2 x1 x2 x3 of det(lam I - pi(x)).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mu = lam - 2.
        return mu**3 - mu * (X**2).sum(axis=1) + 2 * X[:, 0] * X[:, 1] * X[:, 2]

    def implicit_grid(self, lam, axes):
        if all(np.array_equal(axes[0], axis) for axis in axes):
            return cayley_grid(float(lam), np.ascontiguousarray(axes[0], dtype=float))
        return super().implicit_grid(lam, axes)

    def domain_grid(self, axes):
        if all(np.array_equal(axes[0], axis) for axis in axes):
            return boundary_grid(np.ascontiguousarray(axes[0], dtype=float))
        return super().domain_grid(axes)

    def local_chart(self, x, tau_bd=TAU_BD):
        return 'interior' if self.domain_value(x) > tau_bd else 'face'

    def section(self, x):
        """
        Particle positions (columns) Q = sqrt(G) for the Gram matrix G of x.
        """
        G = 3 * np.eye(3) - self.inertia(x)
        w, V = np.linalg.eigh(G)
        return (V * np.sqrt(np.maximum(w, 0.))) @ V.T

    def face_point(self, a, b, face):
        """
        Face chart point for angles theta12 = a, theta23 = b on face 'F2'
        (theta13 = a + b) or 'F0' (theta12 + theta13 + theta23 = 2 pi).
        """
        if face == 'F2':
            return ShapePoint((a, a + b, 0.), 'face')
        if face == 'F0':
            return ShapePoint((a, 2 * np.pi - a - b, np.pi), 'face')
        raise DomainError('Unknown face `{0}`'.format(face))

    def face_coordinates(self, x):
        """
        Face chart point of a coplanar shape x (C(x) = 0).
        """
        t12, t13, t23 = np.arccos(np.clip(np.asarray(x, dtype=float), -1., 1.))
        same_side = abs(t23 - abs(t12 - t13))
        opposite = abs(t23 - min(t12 + t13, 2 * np.pi - t12 - t13))
        phi = 0. if same_side <= opposite else np.pi
        return ShapePoint((t12, t13, phi), 'face')

    def to_x(self, point):
        chart, y = self.chart_for(point)
        if chart is self:
            return y
        return chart.to_x(y)

    def symmetry_maps(self, reflections=True):
        """
        The action on x of particle permutations and, if `reflections`, of
        the double sign flips (q_i -> -q_i changes the sign of both pairs
        containing i). Returns a list of (P, signs) with x' = signs * (P @ x).
        """
        maps = []
        index = {pair: n for n, pair in enumerate(self._pairs)}
        if reflections:
            sign_sets = [np.ones(3), np.array([-1., -1., 1.]),
                         np.array([-1., 1., -1.]), np.array([1., -1., -1.])]
        else:
            sign_sets = [np.ones(3)]
        for perm in permutations(range(3)):
            P = np.zeros((3, 3))
            for n, (i, j) in enumerate(self._pairs):
                P[index[tuple(sorted((perm[i], perm[j])))], n] = 1.
            for signs in sign_sets:
                maps.append((P, signs))
        return maps

    def repeated_descriptor(self):
        directions = np.array([[1., 1., 1.], [1., -1., -1.], [-1., 1., -1.], [-1., -1., 1.]])
        directions /= np.sqrt(3)
        def distance(X):
            X = np.atleast_2d(X)
            dist = [np.linalg.norm(X - np.outer(X @ d, d), axis=1) for d in directions]
            return np.min(dist, axis=0)
        return RepeatedDescriptor('four lines through the centre', distance)

class FaceChart(Chart):
    """
    Smooth chart of the spherical three-body shape space near coplanar
    configurations, y = (theta12, theta13, phi), with section
    q1 = e3, q2 = (sin theta12, 0, cos theta12),
    q3 = (sin theta13 cos phi, sin theta13 sin phi, cos theta13).
    phi = 0 and phi = pi are the coplanar faces.
    """
    name = 'face'

    def __init__(self, model):
        self.model = model

    @property
    def tau_mult(self):
        return self.model.tau_mult

    def positions(self, y):
        t12, t13, phi = np.asarray(y, dtype=float)
        q1 = np.array([0., 0., 1.])
        q2 = np.array([np.sin(t12), 0., np.cos(t12)])
        q3 = np.array([np.sin(t13) * np.cos(phi), np.sin(t13) * np.sin(phi), np.cos(t13)])
        return np.array([q1, q2, q3])

    def to_x(self, y):
        q = self.positions(y)
        return np.array([q[0] @ q[1], q[0] @ q[2], q[1] @ q[2]])

    def inertia(self, y):
        q = self.positions(y)
        return 3 * np.eye(3) - q.T @ q

    def potential(self, y):
        x = np.clip(self.to_x(y), -1., 1.)
        return self.model.potential(x)

    def grad_potential(self, y):
        # theta12 and theta13 are coordinates; theta23 depends on all three
        t12, t13, phi = np.asarray(y, dtype=float)
        x3 = np.clip(np.sin(t12) * np.sin(t13) * np.cos(phi) + np.cos(t12) * np.cos(t13), -1., 1.)
        t23 = np.arccos(x3)
        if np.sin(t23) <= eps:
            raise SingularConfiguration('Collision or antipodal pair', point=y)
        dx3 = np.array([np.cos(t12) * np.sin(t13) * np.cos(phi) - np.sin(t12) * np.cos(t13),
                        np.sin(t12) * np.cos(t13) * np.cos(phi) - np.cos(t12) * np.sin(t13),
                        -np.sin(t12) * np.sin(t13) * np.sin(phi)])
        d1 = self.model.pair.d1
        g = -d1(t23) / np.sin(t23) * dx3
        g[0] += d1(t12)
        g[1] += d1(t13)
        return g

    def domain_value(self, y):
        return np.min(np.sin(np.arccos(np.clip(self.to_x(y), -1., 1.))))

MODELS = {
    's2body': Sphere2Body,
    'rubber': RubberBall,
    'triatomic': Triatomic,
    'fullbody': FullBodySatellite,
    's3body': Spherical3Body,
}

class RiemannEllipsoid(ModelSystem):
    """
    Homogeneous fluid ellipsoid with SO(3) x SO(3) symmetry, charted by its
    singular values x1, x2, x3 > 0 with x1 x2 x3 = 1 (locally distinct).
    The inertia is the block tensor (A B; B A) with a_k = x_l^2 + x_m^2 and
    b_k = -2 x_l x_m.

    Inputs:
    -------
    rho1, rho2 : float
        Orbit radii |omega| and |xi| of the adjoint orbit
    """
    model_id = 'ellipsoid'

    def __init__(self, rho1=3., rho2=1.):
        super().__init__()
        if (rho1 < 0) or (rho2 < 0):
            raise ConfigError('Orbit radii must be nonnegative')
        self.rho1 = float(rho1)
        self.rho2 = float(rho2)

    def params(self):
        return {'rho': [self.rho1, self.rho2]}

    def inertia(self, x):
        a, b = ellipsoid_blocks(x)
        return block_inertia(a, b)

    def implicit(self, lam, X):
        raise NotImplementedError('Ellipsoid leaves are level sets of web functions')

MODELS['ellipsoid'] = RiemannEllipsoid

def make_model(model_id, **params):
    """
    Construct a model from its identifier and parameters.
    """
    try:
        cls = MODELS[model_id]
    except KeyError:
        raise ConfigError('Unknown model `{0}`; expected one of {1}'.format(
            model_id, sorted(MODELS)))
    try:
        return cls(**params)
    except TypeError as err:
        raise ConfigError('Bad parameters for model `{0}`: {1}'.format(model_id, err))

def _klm(k):
    if k not in (1, 2, 3):
        raise ConfigError('Principal index must be 1, 2 or 3')
    i = k - 1
    l, m = [j for j in range(3) if j != i]
    return i, l, m

def check_ellipsoid_shape(x, tau=1e-9):
    """
    Validate singular values: positive, unit product, pairwise distinct.
    """
    x = np.asarray(x, dtype=float)
    if (x <= 0).any() or abs(np.prod(x) - 1) > tau:
        raise DomainError('Singular values must be positive with unit product', point=x)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        if abs(x[i] - x[j]) <= tau * (1 + abs(x[i])):
            raise DegenerateShape('Coinciding singular values', point=x)
    return x

def ellipsoid_blocks(x):
    """
    Diagonals a, b of the ellipsoid inertia blocks.
    """
    x = np.asarray(x, dtype=float)
    a = np.array([x[1]**2 + x[2]**2, x[0]**2 + x[2]**2, x[0]**2 + x[1]**2])
    b = -2 * np.array([x[1] * x[2], x[0] * x[2], x[0] * x[1]])
    return a, b

def ellipsoid_D(x, k):
    """
    D = (2x_k - x_l - x_m)(2x_k + x_l - x_m)(2x_k - x_l + x_m)(2x_k + x_l + x_m).
    """
    x = np.asarray(x, dtype=float)
    i, l, m = _klm(k)
    xk, xl, xm = x[i], x[l], x[m]
    return (2 * xk - xl - xm) * (2 * xk + xl - xm) * (2 * xk - xl + xm) * (2 * xk + xl + xm)

def ellipsoid_multipliers(x, k):
    """
    Multipliers u+- = (x_l^2 + x_m^2 - 2 x_k^2 +- sqrt(D)) / 2 of Type R_k
    solutions; nan when D < 0.
    """
    x = np.asarray(x, dtype=float)
    i, l, m = _klm(k)
    D = ellipsoid_D(x, k)
    half_sum = 0.5 * (x[l]**2 + x[m]**2 - 2 * x[i]**2)
    root = np.sqrt(D) if D >= 0 else np.nan
    return half_sum + 0.5 * root, half_sum - 0.5 * root, D

@dataclass(frozen=True)
class EllipsoidSolution:
    """
    A solution (omega, xi) of the bracket condition for the ellipsoid.

    Attributes:
    -----------
    kind : str
        'S' (omega, xi along e_k) or 'R' (omega, xi orthogonal to e_k)
    k : int
        Principal index (1-based)
    sign : int
        +1 or -1; relative orientation for Type S, choice of u+- for Type R
    s, t : float
        Multipliers with A omega + B xi = s omega, B omega + A xi = t xi
    D : float
        Discriminant of the Type R_k multipliers
    omega, xi : np.ndarray (3)
        Representative angular velocity and vorticity
    c : np.ndarray (3)
        Ratios xi_i / omega_i in the plane orthogonal to e_k (Type R)
    """
    kind: str
    k: int
    sign: int
    s: float
    t: float
    D: float
    omega: np.ndarray
    xi: np.ndarray
    c: np.ndarray

def ellipsoid_solutions(x, k, tau=1e-9):
    """
    Type S_k and Type R_k solutions of [(omega, xi), I_x (omega, xi)] = 0.

    Inputs:
    -------
    x : sequence of 3 floats
        Distinct singular values with unit product
    k : int
        Principal index (1, 2 or 3)
    tau : float
        Tolerance for coinciding singular values

    Returns:
    --------
    solutions : list of EllipsoidSolution
        Two Type S records, and Type R records when D >= 0
    """
    x = check_ellipsoid_shape(x, tau)
    i, l, m = _klm(k)
    a, b = ellipsoid_blocks(x)
    E = np.eye(3)
    solutions = []
    for sign in (1, -1):
        s = a[i] + sign * b[i]
        solutions.append(EllipsoidSolution('S', k, sign, s, s, ellipsoid_D(x, k),
                                           E[i].copy(), sign * E[i], np.zeros(3)))
    u_plus, u_minus, D = ellipsoid_multipliers(x, k)
    if D < 0:
        return solutions
    omega = (E[l] + E[m]) / np.sqrt(2)
    signs = (1,) if D == 0 else (1, -1)
    for sign in signs:
        s, t = (u_plus, u_minus) if sign > 0 else (u_minus, u_plus)
        c = np.zeros(3)
        c[[l, m]] = (s - a[[l, m]]) / b[[l, m]]
        solutions.append(EllipsoidSolution('R', k, sign, s, t, D, omega, c * omega, c))
    return solutions

def type_s_web(x, k, sign, rho1, rho2):
    """
    Type S_k web function (rho1^2 + rho2^2)(x_l^2 + x_m^2) +- 4 rho1 rho2 x_l x_m.
    """
    x = np.asarray(x, dtype=float)
    i, l, m = _klm(k)
    return (rho1**2 + rho2**2) * (x[..., l]**2 + x[..., m]**2) + sign * 4 * rho1 * rho2 * x[..., l] * x[..., m]

def type_r_web(x, k, sign, rho1, rho2):
    """
    Type R_k web function
    (rho1^2 + rho2^2)(x_l^2 + x_m^2 - 2 x_k^2) / 2 +- sqrt(D) (rho1^2 - rho2^2) / 2,
    nan where D < 0.
    """
    x = np.asarray(x, dtype=float)
    i, l, m = _klm(k)
    xk, xl, xm = x[..., i], x[..., l], x[..., m]
    D = (2 * xk - xl - xm) * (2 * xk + xl - xm) * (2 * xk - xl + xm) * (2 * xk + xl + xm)
    root = np.sqrt(np.where(D >= 0, D, np.nan))
    return (0.5 * (rho1**2 + rho2**2) * (xl**2 + xm**2 - 2 * xk**2)
            + sign * 0.5 * root * (rho1**2 - rho2**2))
