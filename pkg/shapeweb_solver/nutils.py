import numpy as np
from numba import njit, prange
from numba.types import float64

@njit(float64[:, :](float64[:, :, :]), parallel=True, cache=True)
def sym3_eigvals(S):
    """
    Closed-form (trigonometric) eigenvalues of a stack of 3x3 symmetric matrices.

    Inputs:
    -------
    S : np.ndarray (n x 3 x 3)
        Symmetric matrices

    Returns:
    --------
    lam : np.ndarray (n x 3)
        Eigenvalues of each matrix in ascending order
    """
    n = S.shape[0]
    lam = np.empty((n, 3))
    for k in prange(n):
        a11 = S[k, 0, 0]
        a22 = S[k, 1, 1]
        a33 = S[k, 2, 2]
        a12 = S[k, 0, 1]
        a13 = S[k, 0, 2]
        a23 = S[k, 1, 2]
        p1 = a12**2 + a13**2 + a23**2
        q = (a11 + a22 + a33) / 3
        p2 = (a11 - q)**2 + (a22 - q)**2 + (a33 - q)**2 + 2 * p1
        p = np.sqrt(p2 / 6)
        if p <= 2.220446049250313e-16 * (1 + abs(q)):
            lam[k, 0] = q
            lam[k, 1] = q
            lam[k, 2] = q
            continue
        b11 = (a11 - q) / p
        b22 = (a22 - q) / p
        b33 = (a33 - q) / p
        b12 = a12 / p
        b13 = a13 / p
        b23 = a23 / p
        r = 0.5 * (b11 * (b22 * b33 - b23 * b23)
                   - b12 * (b12 * b33 - b23 * b13)
                   + b13 * (b12 * b23 - b22 * b13))
        if r <= -1.:
            phi = np.pi / 3
        elif r >= 1.:
            phi = 0.
        else:
            phi = np.arccos(r) / 3
        lam_max = q + 2 * p * np.cos(phi)
        lam_min = q + 2 * p * np.cos(phi + (2 * np.pi / 3))
        lam[k, 0] = lam_min
        lam[k, 1] = 3 * q - lam_max - lam_min
        lam[k, 2] = lam_max
    return lam

@njit(float64[:](float64, float64[:, :, :]), parallel=True, cache=True)
def shifted_det(lam, S):
    """
    Evaluate det(lam * I - S) for a stack of 3x3 matrices.
    """
    n = S.shape[0]
    chi = np.empty(n)
    for k in prange(n):
        m11 = lam - S[k, 0, 0]
        m22 = lam - S[k, 1, 1]
        m33 = lam - S[k, 2, 2]
        m12 = -S[k, 0, 1]
        m13 = -S[k, 0, 2]
        m21 = -S[k, 1, 0]
        m23 = -S[k, 1, 2]
        m31 = -S[k, 2, 0]
        m32 = -S[k, 2, 1]
        chi[k] = (m11 * (m22 * m33 - m23 * m32)
                  - m12 * (m21 * m33 - m23 * m31)
                  + m13 * (m21 * m32 - m22 * m31))
    return chi

@njit(float64[:, :, :](float64, float64[:]), parallel=True, cache=True)
def cayley_grid(lam, axis):
    """
    Evaluate the Cayley implicit function
    (lam - 2)^3 - (lam - 2)(x1^2 + x2^2 + x3^2) + 2 x1 x2 x3
    on the tensor grid axis x axis x axis.
    """
    n = axis.size
    mu = lam - 2.
    out = np.empty((n, n, n))
    for i in prange(n):
        x1 = axis[i]
        for j in range(n):
            x2 = axis[j]
            for k in range(n):
                x3 = axis[k]
                out[i, j, k] = (mu**3 - mu * (x1**2 + x2**2 + x3**2)
                                + 2 * x1 * x2 * x3)
    return out

@njit(float64[:, :, :](float64[:]), cache=True)
def boundary_grid(axis):
    """
    Evaluate C(x) = 1 + 2 x1 x2 x3 - x1^2 - x2^2 - x3^2 on the tensor grid
    axis x axis x axis.
    """
    return cayley_grid(3., axis)
