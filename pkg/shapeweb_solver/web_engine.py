"""
Leaves of inertia-eigenvalue webs as triangle meshes, repeated-eigenvalue
loci, and the ellipsoid web functions.

A leaf at level lam is the zero set of det(lam I - inertia(x)), a function of
x at fixed lam, so leaves never need sorted eigenvalue fields and are free of
branch swaps at repeated eigenvalues.
"""
import logging
from dataclasses import dataclass
import numpy as np
import pandas as pd
import scipy.sparse
import scipy.sparse.csgraph
import scipy.ndimage
from shapeweb_solver.errors import (DomainError, EmptyLeaf, DegenerateShape, ConfigError)
from shapeweb_solver.lie_core import eig_sym
from shapeweb_solver.models import (TAU_BD, RiemannEllipsoid, Spherical3Body, grid_points,
                                    check_ellipsoid_shape, ellipsoid_blocks,
                                    ellipsoid_multipliers, type_s_web, type_r_web, _klm)
from shapeweb_solver.mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE
try:
    import numba
    _HAS_NUMBA = True
except:
    _HAS_NUMBA = False
if _HAS_NUMBA:
    from shapeweb_solver.nutils import sym3_eigvals
else:
    from shapeweb_solver.utils import sym3_eigvals

logger = logging.getLogger(__name__)

eps = np.finfo(float).eps

WEB_KINDS = ('eigen', 'type-s', 'type-r')

# Start offset and axis of every local cube edge
_EDGE_START = np.minimum(CORNER_OFFSETS[EDGE_CORNERS[0]], CORNER_OFFSETS[EDGE_CORNERS[1]])
_EDGE_AXIS = np.argmax(np.abs(CORNER_OFFSETS[EDGE_CORNERS[1]]
                              - CORNER_OFFSETS[EDGE_CORNERS[0]]), axis=1)

@dataclass(frozen=True)
class LeafSpec:
    """
    Selects one leaf of a web.

    Attributes:
    -----------
    model : ModelSystem
        System whose web is sampled
    level : float
        Eigenvalue lam (web 'eigen') or web function value Lambda
    web : str
        'eigen', 'type-s' or 'type-r' (the latter two for ellipsoids)
    k : int
        Principal index for ellipsoid webs
    sign : int
        +1 or -1 for ellipsoid webs
    rho : tuple of float
        Orbit radii (rho1, rho2) for ellipsoid webs
    """
    model: object
    level: float
    web: str = 'eigen'
    k: int = 1
    sign: int = 1
    rho: tuple = (1., 1.)

    def __post_init__(self):
        if self.web not in WEB_KINDS:
            raise ConfigError('Unknown web `{0}`'.format(self.web))
        if (self.web != 'eigen') and not isinstance(self.model, RiemannEllipsoid):
            raise ConfigError('Type S/R webs are defined for the ellipsoid only')
        if isinstance(self.model, Spherical3Body) and not (0 <= self.level <= 3):
            raise DomainError('Eigenvalue levels of the three-body web lie in [0, 3]',
                              point=self.level)

@dataclass(frozen=True)
class IsoMesh:
    """
    Triangulated leaf.

    Attributes:
    -----------
    vertices : np.ndarray (n x 3)
        Vertex chart coordinates
    triangles : np.ndarray (m x 3, int)
        Vertex indices, oriented along the gradient of the implicit function
    residuals : np.ndarray (n)
        Implicit function value at each vertex
    level : float
        Level of the leaf
    spacing : float
        Largest grid spacing used for extraction
    """
    vertices: np.ndarray
    triangles: np.ndarray
    residuals: np.ndarray
    level: float
    spacing: float

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def point_cloud(self):
        df = pd.DataFrame(self.vertices, columns=['x1', 'x2', 'x3'])
        df['residual'] = self.residuals
        return df

    def to_csv(self, path):
        self.point_cloud().to_csv(path, index=False, float_format='%.9g')

    def to_obj(self, path):
        with open(path, 'w') as obj:
            obj.write('# leaf at level {0:.9g}\n'.format(self.level))
            for v in self.vertices:
                obj.write('v {0:.9g} {1:.9g} {2:.9g}\n'.format(*v))
            for t in self.triangles + 1:
                obj.write('f {0} {1} {2}\n'.format(*t))

@dataclass(frozen=True)
class RepeatedLocus:
    """
    Samples of the set where eigenvalues of the inertia tensor coincide.

    Attributes:
    -----------
    points : np.ndarray (n x d)
        Projected samples
    descriptor : RepeatedDescriptor or None
        Analytic description supplied by the model
    max_distance : float
        Largest distance from a sample to the descriptor (nan without one)
    spacing : float
        Grid spacing of the search
    """
    points: np.ndarray
    descriptor: object
    max_distance: float
    spacing: float

def implicit_value(spec, x):
    """
    Value of the implicit function defining the leaf `spec` at the point `x`.

    Inputs:
    -------
    spec : LeafSpec
        Leaf selection
    x : np.ndarray (3) or ShapePoint
        Point in the model's interior chart

    Returns:
    --------
    value : float
        det(lam I - inertia(x)) for eigenvalue webs, Lambda(x) - level for
        ellipsoid webs
    """
    model = spec.model
    chart, x = model.chart_for(x)
    if spec.web == 'eigen':
        if not chart.domain_test(x):
            raise DomainError('Point outside the chart', point=x)
        return float(chart.implicit(spec.level, x[None, :])[0])
    x = check_ellipsoid_shape(x)
    rho1, rho2 = spec.rho
    if spec.web == 'type-s':
        return float(type_s_web(x, spec.k, spec.sign, rho1, rho2) - spec.level)
    return float(type_r_web(x, spec.k, spec.sign, rho1, rho2) - spec.level)

def _batch_gradient(func, X, h=1e-6):
    X = np.asarray(X, dtype=float)
    grad = np.empty_like(X)
    for a in range(X.shape[1]):
        step = h * (1 + np.abs(X[:, a]))
        dX = np.zeros_like(X)
        dX[:, a] = step
        grad[:, a] = (func(X + dX) - func(X - dX)) / (2 * step)
    return grad

def marching_cubes(F, axes):
    """
    Triangulate the zero set of a sampled implicit function.

    Inputs:
    -------
    F : np.ndarray (N0 x N1 x N2)
        Implicit function on the tensor grid
    axes : sequence of 3 np.ndarray
        Grid coordinates along each axis

    Returns:
    --------
    p0, p1 : np.ndarray (n x 3)
        End points of the grid edge carrying each vertex; F(p0) < 0 <= F(p1)
        or the reverse
    triangles : np.ndarray (m x 3, int)
        Vertex indices (cell-major order)
    """
    shape = F.shape
    N0, N1, N2 = shape
    neg = (F < 0)
    # 1. Cube index of every cell
    cube = np.zeros((N0 - 1, N1 - 1, N2 - 1), dtype=np.int64)
    for c, (di, dj, dk) in enumerate(CORNER_OFFSETS):
        cube |= neg[di:N0 - 1 + di, dj:N1 - 1 + dj, dk:N2 - 1 + dk].astype(np.int64) << c
    # 2. Triangles of every active cell
    active = EDGE_TABLE[cube] != 0
    cells = np.argwhere(active)
    if cells.size == 0:
        return np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3), dtype=int)
    tri_edges = TRIANGLE_TABLE[cube[active]][:, :15].reshape(-1, 5, 3)
    valid = tri_edges[:, :, 0] >= 0
    cell_rows = np.repeat(np.arange(cells.shape[0]), valid.sum(axis=1))
    local_edges = tri_edges[valid]
    # 3. Global edge ids merge vertices shared by neighbouring cells
    start = cells[cell_rows][:, None, :] + _EDGE_START[local_edges]
    axis = _EDGE_AXIS[local_edges]
    gid = np.ravel_multi_index(start.reshape(-1, 3).T, shape) * 3 + axis.ravel()
    unique_gid, inverse = np.unique(gid, return_inverse=True)
    triangles = inverse.reshape(-1, 3)
    # 4. Edge end points
    lin, edge_axis = np.divmod(unique_gid, 3)
    i0 = np.array(np.unravel_index(lin, shape)).T
    i1 = i0 + np.eye(3, dtype=int)[edge_axis]
    p0 = np.stack([axes[a][i0[:, a]] for a in range(3)], axis=1)
    p1 = np.stack([axes[a][i1[:, a]] for a in range(3)], axis=1)
    return p0, p1, triangles

def refine_on_edges(func, p0, p1, n_iter=48):
    """
    Move vertices to the sign change of `func` along their grid edges by
    vectorized bisection.
    """
    lo = np.zeros(p0.shape[0])
    hi = np.ones(p0.shape[0])
    d = p1 - p0
    neg_lo = func(p0) < 0
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        neg_mid = func(p0 + mid[:, None] * d) < 0
        same = (neg_mid == neg_lo)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return p0 + (0.5 * (lo + hi))[:, None] * d

def _project_pair(f, g, X, n_iter=12):
    # Gauss-Newton onto {f = 0, g = 0}, minimum norm steps
    X = X.copy()
    for _ in range(n_iter):
        r = np.stack([f(X), g(X)], axis=1)
        J = np.stack([_batch_gradient(f, X), _batch_gradient(g, X)], axis=1)
        X -= np.einsum('nij,nj->ni', np.linalg.pinv(J), r)
    return X

def _clip_to_domain(model, level, vertices, triangles, tau_bd):
    implicit = lambda X: model.implicit(level, X)
    dom = model.domain_batch(vertices)
    inside = dom >= -tau_bd
    if inside.all():
        return vertices, triangles
    tri_inside = inside[triangles]
    straddle = tri_inside.any(axis=1) & ~tri_inside.all(axis=1)
    # Pull each outside vertex of a straddling triangle toward an inside neighbour
    anchors = {}
    for tri, ins in zip(triangles[straddle], tri_inside[straddle]):
        inner = tri[ins][0]
        for v in tri[~ins]:
            anchors.setdefault(v, inner)
    if anchors:
        moved = np.fromiter(anchors.keys(), dtype=int)
        targets = vertices[np.fromiter(anchors.values(), dtype=int)]
        start = vertices[moved]
        lo = np.zeros(moved.size)
        hi = np.ones(moved.size)
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            ok = model.domain_batch(start + mid[:, None] * (targets - start)) >= 0
            lo = np.where(ok, lo, mid)
            hi = np.where(ok, mid, hi)
        X = start + hi[:, None] * (targets - start)
        X = _project_pair(implicit, model.domain_batch, X)
        vertices = vertices.copy()
        vertices[moved] = X
        inside = model.domain_batch(vertices) >= -tau_bd
        inside[moved] &= np.isfinite(X).all(axis=1)
    keep = inside[triangles].all(axis=1)
    return vertices, triangles[keep]

def _compact(vertices, triangles):
    used, inverse = np.unique(triangles, return_inverse=True)
    return vertices[used], inverse.reshape(-1, 3)

def leaf_grid(spec, bounds=None, resolution=96):
    """
    Tensor grid axes and implicit values for a leaf.
    """
    model = spec.model
    if resolution < 16:
        raise ConfigError('Resolution must be at least 16')
    if bounds is None:
        bounds = model.bounds(spec.level)
    bounds = np.asarray(bounds, dtype=float)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    return axes, model.implicit_grid(spec.level, axes)

def extract_leaf(spec, bounds=None, resolution=96, tau_bd=TAU_BD):
    """
    Extract a leaf of an eigenvalue web as a triangle mesh.

    Inputs:
    -------
    spec : LeafSpec
        Leaf selection (web 'eigen')
    bounds : np.ndarray (3 x 2)
        Box to mesh (defaults to the model's bounds for the level)
    resolution : int
        Grid points per axis (at least 16)
    tau_bd : float
        Domain tolerance for clipping

    Returns:
    --------
    mesh : IsoMesh
    """
    if spec.web != 'eigen':
        raise ConfigError('Ellipsoid webs are sampled with ellipsoid_web_samples')
    model = spec.model
    level = spec.level
    implicit = lambda X: model.implicit(level, X)
    # 1. Sample and triangulate
    axes, F = leaf_grid(spec, bounds, resolution)
    spacing = max(np.diff(axis).max() for axis in axes)
    p0, p1, triangles = marching_cubes(F, axes)
    if triangles.shape[0] == 0:
        raise EmptyLeaf('No sign change of the implicit function at level {0}'.format(level),
                        point=level)
    # 2. Refine vertices along their edges
    vertices = refine_on_edges(implicit, p0, p1)
    # 3. Clip against the chart domain
    vertices, triangles = _clip_to_domain(model, level, vertices, triangles, tau_bd)
    if triangles.shape[0] == 0:
        raise EmptyLeaf('Leaf at level {0} lies outside the chart'.format(level), point=level)
    vertices, triangles = _compact(vertices, triangles)
    # 4. Orient along the gradient of the implicit function
    tri = vertices[triangles]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    grad = _batch_gradient(implicit, tri.mean(axis=1))
    flip = (normals * grad).sum(axis=1) < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    residuals = implicit(vertices)
    logger.info('Leaf at level %g: %d vertices, %d triangles', level,
                vertices.shape[0], triangles.shape[0])
    return IsoMesh(vertices=vertices, triangles=triangles, residuals=residuals,
                   level=level, spacing=spacing)

def component_count(mesh):
    """
    Number of connected components of a mesh under shared-edge adjacency.
    """
    m = mesh.n_triangles
    if m == 0:
        raise EmptyLeaf('Empty mesh')
    edges = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, edge_ids = np.unique(edges, axis=0, return_inverse=True)
    edge_ids = edge_ids.ravel()
    incidence = scipy.sparse.coo_matrix((np.ones(edge_ids.size), (np.repeat(np.arange(m), 3), edge_ids)),
                                        shape=(m, edge_ids.max() + 1)).tocsr()
    adjacency = incidence @ incidence.T
    n, _ = scipy.sparse.csgraph.connected_components(adjacency, directed=False)
    return int(n)

def flood_fill_components(spec, bounds=None, resolution=96):
    """
    Count connected clusters of grid cells crossed by the leaf whose centres lie
    inside the chart (26-connectivity). Independent of the mesh pipeline.
    """
    model = spec.model
    axes, F = leaf_grid(spec, bounds, resolution)
    N0, N1, N2 = F.shape
    neg = (F < 0)
    n_neg = np.zeros((N0 - 1, N1 - 1, N2 - 1), dtype=int)
    for di, dj, dk in CORNER_OFFSETS:
        n_neg += neg[di:N0 - 1 + di, dj:N1 - 1 + dj, dk:N2 - 1 + dk]
    crossed = (n_neg > 0) & (n_neg < 8)
    centres = [0.5 * (axis[1:] + axis[:-1]) for axis in axes]
    inside = model.domain_grid(centres) >= 0
    labels, n = scipy.ndimage.label(crossed & inside, structure=np.ones((3, 3, 3)))
    return int(n)

def repeated_locus(model, region=None, resolution=24, tau_mult=None, tau_bd=TAU_BD,
                   n_iter=30):
    """
    Sample the repeated-eigenvalue locus of a model's inertia tensor.

    Inputs:
    -------
    model : ModelSystem
        Model with a 3-dimensional chart
    region : np.ndarray (3 x 2)
        Search box (defaults to the model bounds)
    resolution : int
        Grid points per axis
    tau_mult : float (optional)
        Relative tolerance for repeated eigenvalues (defaults to the model's)
    tau_bd : float
        Domain tolerance
    n_iter : int
        Gauss-Newton iterations of the projection

    Returns:
    --------
    locus : RepeatedLocus
    """
    if region is None:
        region = model.bounds()
    region = np.asarray(region, dtype=float)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in region]
    spacing = max(np.diff(axis).max() for axis in axes)
    shape = tuple(axis.size for axis in axes)
    # 1. Candidate grid points with a small eigenvalue gap
    X = grid_points(axes)
    lam = sym3_eigvals(np.ascontiguousarray(model.inertia_batch(X))).reshape(shape + (3,))
    gap = np.minimum(lam[..., 1] - lam[..., 0], lam[..., 2] - lam[..., 1]).ravel()
    slopes = [np.abs(np.diff(lam, axis=a)).max() / np.diff(axes[a]).max() for a in range(3)]
    threshold = 2 * spacing * max(slopes)
    candidates = X[gap <= threshold]
    logger.debug('%d candidate points for the repeated locus', candidates.shape[0])
    # 2. Project onto the locus
    points = []
    for x in candidates:
        x = _project_repeated(model, x, n_iter)
        if (x is None) or (model.domain_value(x) < -tau_bd):
            continue
        if (x < region[:, 0] - spacing).any() or (x > region[:, 1] + spacing).any():
            continue
        if model.frame(x, tau_mult).has_repeated():
            points.append(x)
    if not points:
        return RepeatedLocus(np.empty((0, 3)), model.repeated_descriptor(), np.nan, spacing)
    points = np.unique(np.round(np.array(points), 10), axis=0)
    descriptor = model.repeated_descriptor()
    if descriptor is None:
        max_distance = np.nan
    else:
        max_distance = float(np.max(descriptor.distance(points)))
    return RepeatedLocus(points, descriptor, max_distance, spacing)

def _project_repeated(model, x, n_iter):
    # r = (M11 - M22, 2 M12) for the inertia restricted to the closest eigenpair
    x = np.asarray(x, dtype=float).copy()
    for _ in range(n_iter):
        frame = eig_sym(model.inertia(x))
        lam = frame.eigenvalues
        i = int(np.argmin(np.diff(lam)))
        W = frame.eigenvectors[:, i:i + 2]
        dS, _ = model.inertia_derivatives(x)
        M = W.T @ model.inertia(x) @ W
        r = np.array([M[0, 0] - M[1, 1], 2 * M[0, 1]])
        dM = np.einsum('ip,aij,jq->apq', W, dS, W)
        J = np.stack([dM[:, 0, 0] - dM[:, 1, 1], 2 * dM[:, 0, 1]])
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + dx
        if not np.isfinite(x).all():
            return None
        if np.linalg.norm(dx) < 1e-14 * (1 + np.linalg.norm(x)):
            break
    return x

def cayley_parametrization(lam, phi1, phi2, kind='cos', signs=(1, 1, 1)):
    """
    Points of the three-body leaf at level lam from the dilated Cayley cubic:
    x_j = (lam - 2) cos(phi_j), or x_j = s_j (lam - 2) cosh(phi_j) on the
    conical components, with phi1 + phi2 + phi3 = 0.

    Inputs:
    -------
    lam : float
        Level
    phi1, phi2 : float or np.ndarray
        Free angles; phi3 = -(phi1 + phi2)
    kind : str
        'cos' or 'cosh'
    signs : sequence of 3 ints
        Signs s_j for the cosh variant, with s1 s2 s3 = 1
    """
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    phi = np.stack([phi1, phi2, -(phi1 + phi2)], axis=-1)
    mu = lam - 2.
    if kind == 'cos':
        return mu * np.cos(phi)
    if kind == 'cosh':
        signs = np.asarray(signs, dtype=float)
        if np.prod(signs) != 1:
            raise ConfigError('Signs of the cosh parametrization must multiply to 1')
        return signs * mu * np.cosh(phi)
    raise ConfigError('Unknown parametrization `{0}`'.format(kind))

def ellipse_semi_axes(x, k, sign):
    """
    Ratios |c_l|, |c_m| of the map omega -> xi of Type R_k solutions; the image
    of the circle |omega| = rho1 is an ellipse with semi-axes rho1 |c_l| and
    rho1 |c_m|. Returns None when D < 0.
    """
    i, l, m = _klm(k)
    a, b = ellipsoid_blocks(x)
    u_plus, u_minus, D = ellipsoid_multipliers(x, k)
    if D < 0:
        return None
    s = u_plus if sign > 0 else u_minus
    return np.abs((s - a[[l, m]]) / b[[l, m]])

def ellipsoid_region_test(x, k, sign, rho1, rho2, tau=1e-9):
    """
    Membership of the shape x in the region R+-_k of shapes admitting Type R_k
    solutions with |omega| = rho1 and |xi| = rho2 (closed region).

    Inputs:
    -------
    x : sequence of 3 floats
        Distinct singular values with unit product
    k : int
        Principal index (1, 2 or 3)
    sign : int
        +1 for R+_k, -1 for R-_k
    rho1, rho2 : float
        Orbit radii
    tau : float
        Tolerance for coinciding singular values and for the interval test
    """
    x = check_ellipsoid_shape(x, tau)
    ratios = ellipse_semi_axes(x, k, sign)
    if ratios is None:
        return False
    lo, hi = rho1 * ratios.min(), rho1 * ratios.max()
    scale = tau * (1 + hi)
    return bool(lo - scale <= rho2 <= hi + scale)

def ellipsoid_web_samples(rho1, rho2, n=41, log_range=1., tau=1e-9):
    """
    Evaluate the ellipsoid web functions and region masks on a grid of shapes
    x = (e^u, e^v, e^(-u-v)).

    Inputs:
    -------
    rho1, rho2 : float
        Orbit radii
    n : int
        Grid points per log axis
    log_range : float
        Half width of the log grid
    tau : float
        Tolerance for coinciding singular values

    Returns:
    --------
    samples : pd.DataFrame
        Columns x1, x2, x3, then S{k}+, S{k}-, R{k}+, R{k}- web values and
        in_R{k}+, in_R{k}- masks for k = 1, 2, 3
    """
    u = np.linspace(-log_range, log_range, n)
    rows = []
    for ui in u:
        for vi in u:
            x = np.exp([ui, vi, -ui - vi])
            try:
                check_ellipsoid_shape(x, tau)
            except DegenerateShape:
                continue
            row = {'x1': x[0], 'x2': x[1], 'x3': x[2]}
            for k in (1, 2, 3):
                for sign, label in ((1, '+'), (-1, '-')):
                    row['S{0}{1}'.format(k, label)] = type_s_web(x, k, sign, rho1, rho2)
                    row['R{0}{1}'.format(k, label)] = type_r_web(x, k, sign, rho1, rho2)
                    row['in_R{0}{1}'.format(k, label)] = ellipsoid_region_test(x, k, sign,
                                                                               rho1, rho2, tau)
            rows.append(row)
    return pd.DataFrame(rows)
