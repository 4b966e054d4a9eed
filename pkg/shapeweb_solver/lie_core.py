"""
Small dense symmetric linear algebra on the symmetry Lie algebra.

so(3) is identified with R^3 by `hat`/`unhat`; the locked inertia tensor is a
symmetric 3x3 (or 6x6 block) matrix whose eigenvalues and eigenvectors are
packaged as an `EigenFrame`. Eigenvalue derivatives use first order
perturbation theory, which is exact for simple eigenvalues.
"""
import logging
from dataclasses import dataclass
import numpy as np
import scipy.spatial.transform
from shapeweb_solver.errors import RepeatedEigenvalue, BranchLost

logger = logging.getLogger(__name__)

eps = np.finfo(float).eps

TAU_MULT = 1e-8
TAU_ZERO = 1e-8

def hat(v):
    """
    Map a vector in R^3 to the antisymmetric matrix of the cross product.
    """
    v1, v2, v3 = np.asarray(v, dtype=float)
    return np.array([[0., -v3, v2],
                     [v3, 0., -v1],
                     [-v2, v1, 0.]])

def unhat(A):
    """
    Inverse of `hat`.
    """
    A = np.asarray(A, dtype=float)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])

def as_sym(S):
    """
    Return an exactly symmetric float copy of `S` (average with its transpose).
    """
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)

def block_inertia(A, B):
    """
    Assemble the 6x6 block tensor (A B; B A) from the diagonals of A and B.
    """
    A = np.diag(np.asarray(A, dtype=float))
    B = np.diag(np.asarray(B, dtype=float))
    return np.block([[A, B], [B, A]])

def random_rotation(rng):
    """
    Draw a uniformly distributed rotation matrix.

    Inputs:
    -------
    rng : np.random.Generator
        Source of randomness
    """
    return scipy.spatial.transform.Rotation.random(random_state=rng).as_matrix()

@dataclass(frozen=True)
class EigenFrame:
    """
    Ascending eigenvalues and orthonormal eigenvectors of a symmetric tensor.

    Attributes:
    -----------
    eigenvalues : np.ndarray (n)
        Eigenvalues in ascending order
    eigenvectors : np.ndarray (n x n)
        Orthonormal eigenvectors stored as columns
    clusters : np.ndarray (n, int)
        Cluster id of each eigenvalue; equal ids share a multiplicity flag
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.size

    def cluster_size(self, j):
        return int((self.clusters == self.clusters[j]).sum())

    def is_simple(self, j):
        return self.cluster_size(j) == 1

    def has_repeated(self):
        return np.unique(self.clusters).size < self.dim

    def cluster_members(self, j):
        return np.flatnonzero(self.clusters == self.clusters[j])

    def vector(self, j):
        return self.eigenvectors[:, j]

    def rank(self, j):
        """
        Position of eigenvalue j among the distinct clusters: 'min', 'mid' or 'max'.
        """
        if not self.is_simple(j):
            raise RepeatedEigenvalue('Eigenvalue {0} is repeated'.format(j),
                                     point=self.eigenvalues[j])
        c = self.clusters[j]
        if c == self.clusters.min():
            return 'min'
        if c == self.clusters.max():
            return 'max'
        return 'mid'

def cluster_ids(lam, tau_mult=TAU_MULT):
    """
    Group ascending eigenvalues: consecutive values with
    |lam_i - lam_i+1| < tau_mult * (1 + |lam_i|) share a cluster id.
    """
    ids = np.zeros(lam.size, dtype=int)
    for i in range(1, lam.size):
        gap = abs(lam[i] - lam[i - 1])
        ids[i] = ids[i - 1] if gap < tau_mult * (1 + abs(lam[i - 1])) else ids[i - 1] + 1
    return ids

def eig_sym(S, tau_mult=TAU_MULT):
    """
    Solve the symmetric eigenproblem and flag eigenvalue clusters.

    Inputs:
    -------
    S : np.ndarray (n x n)
        Symmetric tensor (n = 3 or 6)
    tau_mult : float
        Relative tolerance for treating eigenvalues as repeated

    Returns:
    --------
    frame : EigenFrame
    """
    S = as_sym(S)
    lam, V = np.linalg.eigh(S)
    return EigenFrame(eigenvalues=lam, eigenvectors=V,
                      clusters=cluster_ids(lam, tau_mult))

def track_branch(frame, v_ref, min_overlap=0.5):
    """
    Select the eigenvector of `frame` with maximal overlap with `v_ref`.

    Inputs:
    -------
    frame : EigenFrame
        Eigen decomposition at the new point
    v_ref : np.ndarray (n)
        Eigenvector at the reference point
    min_overlap : float
        Smallest acceptable squared overlap

    Returns:
    --------
    j : int
        Branch index at the new point
    v : np.ndarray (n)
        Eigenvector, sign-aligned with `v_ref`
    """
    overlap = frame.eigenvectors.T @ np.asarray(v_ref, dtype=float)
    j = int(np.argmax(np.abs(overlap)))
    if overlap[j]**2 < min_overlap:
        raise BranchLost('No eigenvector continues the branch', point=overlap)
    v = frame.eigenvectors[:, j]
    if overlap[j] < 0:
        v = -v
    return j, v

def eigen_gradient(frame, j, dS):
    """
    Gradient of a simple eigenvalue: d lam_j / d x_a = <v_j, dS_a v_j>.

    Inputs:
    -------
    frame : EigenFrame
        Eigen decomposition at the evaluation point
    j : int
        Branch index
    dS : np.ndarray (d x n x n)
        Partial derivatives of the tensor with respect to each chart coordinate
    """
    if not frame.is_simple(j):
        raise RepeatedEigenvalue('Gradient of a repeated eigenvalue',
                                 point=frame.eigenvalues[j])
    v = frame.vector(j)
    return np.einsum('i,aij,j->a', v, dS, v)

def eigen_hessian(frame, j, dS, d2S):
    """
    Hessian of a simple eigenvalue by second order perturbation theory:

        d2 lam_j = <v_j, d2S_ab v_j>
                   + 2 sum_k <v_j, dS_a v_k><v_k, dS_b v_j> / (lam_j - lam_k)

    Inputs:
    -------
    frame : EigenFrame
        Eigen decomposition at the evaluation point
    j : int
        Branch index
    dS : np.ndarray (d x n x n)
        First partial derivatives of the tensor
    d2S : np.ndarray (d x d x n x n)
        Second partial derivatives of the tensor
    """
    if not frame.is_simple(j):
        raise RepeatedEigenvalue('Hessian of a repeated eigenvalue',
                                 point=frame.eigenvalues[j])
    lam = frame.eigenvalues
    V = frame.eigenvectors
    v = V[:, j]
    H = np.einsum('i,abij,j->ab', v, d2S, v)
    # Couplings <v_k, dS_a v_j> for every k
    C = np.einsum('ik,aij,j->ak', V, dS, v)
    for k in range(frame.dim):
        if k == j:
            continue
        H += 2 * np.outer(C[:, k], C[:, k]) / (lam[j] - lam[k])
    return H

@dataclass(frozen=True)
class CubicPoly:
    """
    Cubic polynomial c0 + c1 t + c2 t^2 + c3 t^3.
    """
    c0: float
    c1: float
    c2: float
    c3: float

    @property
    def coefficients(self):
        return np.array([self.c0, self.c1, self.c2, self.c3])

    def __call__(self, t):
        return ((self.c3 * t + self.c2) * t + self.c1) * t + self.c0

    def roots(self):
        return np.sort(np.roots(self.coefficients[::-1]).real)

def char_poly(S):
    """
    Characteristic polynomial chi(t) = det(t I - S) of a 3x3 tensor (monic).
    """
    S = as_sym(S)
    tr = np.trace(S)
    minors = (S[0, 0] * S[1, 1] - S[0, 1]**2
              + S[0, 0] * S[2, 2] - S[0, 2]**2
              + S[1, 1] * S[2, 2] - S[1, 2]**2)
    return CubicPoly(c0=-np.linalg.det(S), c1=minors, c2=-tr, c3=1.)

def discriminant(p):
    """
    Discriminant of a cubic; zero iff the cubic has a repeated root and
    nonnegative when all roots are real.
    """
    a, b, c, d = p.c3, p.c2, p.c1, p.c0
    return (18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2
            - 4 * a * c**3 - 27 * a**2 * d**2)

def sym_discriminant(S):
    """
    Discriminant of the characteristic polynomial of a 3x3 symmetric tensor,
    evaluated on its traceless part. Shifting by a multiple of the identity
    leaves the discriminant unchanged and avoids cancellation for large traces.
    """
    S = as_sym(S)
    D = S - np.trace(S) / 3 * np.eye(3)
    return discriminant(char_poly(D))

def signature(S, tau_zero=TAU_ZERO):
    """
    Count positive, zero and negative eigenvalues of a symmetric tensor.

    Inputs:
    -------
    S : np.ndarray (n x n)
        Symmetric tensor
    tau_zero : float
        Eigenvalues with |lam| <= tau_zero count as zero

    Returns:
    --------
    (n_plus, n_zero, n_minus) : tuple of int
    """
    lam = np.linalg.eigvalsh(as_sym(S))
    n_plus = int((lam > tau_zero).sum())
    n_minus = int((lam < -tau_zero).sum())
    return n_plus, lam.size - n_plus - n_minus, n_minus

def bracket_so3xso3(a, b):
    """
    Lie bracket on so(3) x so(3): [(w, xi), (L, Om)] = (w x L, xi x Om).
    """
    w, xi = (np.asarray(u, dtype=float) for u in a)
    L, Om = (np.asarray(u, dtype=float) for u in b)
    return np.cross(w, L), np.cross(xi, Om)
