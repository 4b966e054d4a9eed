import numpy as np
import scipy.optimize
from shapeweb_solver.errors import NoRoot, NoConvergence

eps = np.finfo(float).eps

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
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    lam = np.empty((n, 3))
    p1 = S[:, 0, 1]**2 + S[:, 0, 2]**2 + S[:, 1, 2]**2
    q = np.trace(S, axis1=1, axis2=2) / 3
    d = np.diagonal(S, axis1=1, axis2=2) - q[:, None]
    p2 = (d**2).sum(axis=1) + 2 * p1
    p = np.sqrt(p2 / 6)
    scalar = (p <= eps * (1 + np.abs(q)))
    p_safe = np.where(scalar, 1., p)
    B = (S - q[:, None, None] * np.eye(3)) / p_safe[:, None, None]
    r = np.clip(np.linalg.det(B) / 2, -1., 1.)
    phi = np.arccos(r) / 3
    lam_max = q + 2 * p * np.cos(phi)
    lam_min = q + 2 * p * np.cos(phi + (2 * np.pi / 3))
    lam[:, 0] = lam_min
    lam[:, 2] = lam_max
    lam[:, 1] = 3 * q - lam_max - lam_min
    lam[scalar] = q[scalar, None]
    return lam

def shifted_det(lam, S):
    """
    Evaluate det(lam * I - S) for a stack of 3x3 matrices.

    Inputs:
    -------
    lam : float
        Shift
    S : np.ndarray (n x 3 x 3)
        Matrices

    Returns:
    --------
    chi : np.ndarray (n)
    """
    S = np.asarray(S, dtype=float)
    return np.linalg.det(lam * np.eye(3) - S)

def cayley_grid(lam, axis):
    """
    Evaluate the Cayley implicit function
    (lam - 2)^3 - (lam - 2)(x1^2 + x2^2 + x3^2) + 2 x1 x2 x3
    on the tensor grid axis x axis x axis.
    """
    mu = lam - 2.
    x1 = axis[:, None, None]
    x2 = axis[None, :, None]
    x3 = axis[None, None, :]
    return mu**3 - mu * (x1**2 + x2**2 + x3**2) + 2 * x1 * x2 * x3

def boundary_grid(axis):
    """
    Evaluate C(x) = 1 + 2 x1 x2 x3 - x1^2 - x2^2 - x3^2 on the tensor grid
    axis x axis x axis.
    """
    return cayley_grid(3., axis)

def bisect(f, a, b, args=(), xtol=1e-13, max_iter=200):
    """
    Find a zero of `f` in the bracket [a, b] by bisection.

    Inputs:
    -------
    f : function
        Function to evaluate
    a: float
        Lower end of bracket
    b: float
        Upper end of bracket
    args: sequence
        Extra arguments to function `f`
    xtol: float
        Allowable (absolute) width of the final bracket
    max_iter: int
        Maximum number of halvings
    """
    # 1. Check the bracket
    # 1a.
    fa = f(a, *args)
    fb = f(b, *args)
    if fa == 0:
        return a
    if fb == 0:
        return b
    # 1b.
    if np.sign(fa) == np.sign(fb):
        raise NoRoot('No sign change in bracket', point=(a, b))
    # 2. Halve until the bracket is small enough
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m, *args)
        if (fm == 0) or (0.5 * abs(b - a) < xtol):
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)

def bracket_roots(f, lo, hi, n=200, args=(), xtol=1e-14, skip=None):
    """
    Locate all sign changes of a scalar function on a uniform sweep of [lo, hi]
    and refine each with Brent's method.

    Inputs:
    -------
    f : function
        Function to evaluate; nan values are treated as gaps
    lo, hi : float
        Sweep interval
    n : int
        Number of sweep points
    args : sequence
        Extra arguments to function `f`
    xtol : float
        Absolute tolerance passed to the root refinement
    skip : function (optional)
        Predicate on a refined root; roots for which it returns True are dropped

    Returns:
    --------
    roots : list of float
    """
    t = np.linspace(lo, hi, n)
    ft = np.array([f(ti, *args) for ti in t])
    roots = []
    for i in range(n - 1):
        f0, f1 = ft[i], ft[i + 1]
        if not (np.isfinite(f0) and np.isfinite(f1)):
            continue
        if f0 == 0:
            root = t[i]
        elif np.sign(f0) == np.sign(f1):
            continue
        else:
            root = scipy.optimize.brentq(f, t[i], t[i + 1], args=args, xtol=xtol)
        if (skip is not None) and skip(root):
            continue
        if roots and abs(root - roots[-1]) < 10 * xtol:
            continue
        roots.append(root)
    return roots

def fd_step(x, h=1e-4):
    return h * (1 + np.abs(np.asarray(x, dtype=float)))

def central_gradient(f, x, h=1e-4, args=()):
    """
    Five-point central difference gradient of a scalar or array valued
    function; the derivative index comes first in the result.

    Inputs:
    -------
    f : function
        Function of a 1D array
    x : np.ndarray (n)
        Evaluation point
    h : float
        Relative step size; step along coordinate i is h * (1 + |x_i|)
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = fd_step(x, h)
    grad = np.zeros((n,) + np.shape(f(x, *args)))
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        grad[i] = (-f(x + 2 * e, *args) + 8 * f(x + e, *args)
                   - 8 * f(x - e, *args) + f(x - 2 * e, *args)) / (12 * steps[i])
    return grad

def central_hessian(f, x, h=1e-4, args=()):
    """
    Five-point central difference Hessian of a scalar or array valued function. Mixed
    partials use the four-point cross stencil at steps h and 2h combined by one
    Richardson extrapolation.

    Inputs:
    -------
    f : function
        Function of a 1D array
    x : np.ndarray (n)
        Evaluation point
    h : float
        Relative step size
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = fd_step(x, h)
    f0 = f(x, *args)
    H = np.zeros((n, n) + np.shape(f0))
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        H[i, i] = (-f(x + 2 * e, *args) + 16 * f(x + e, *args) - 30 * f0
                   + 16 * f(x - e, *args) - f(x - 2 * e, *args)) / (12 * steps[i]**2)
    for i in range(n):
        for j in range(i + 1, n):
            mixed = []
            for s in (1., 2.):
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = s * steps[i]
                ej[j] = s * steps[j]
                mixed.append((f(x + ei + ej, *args) - f(x + ei - ej, *args)
                              - f(x - ei + ej, *args) + f(x - ei - ej, *args))
                             / (4 * ei[i] * ej[j]))
            H[i, j] = H[j, i] = (4 * mixed[0] - mixed[1]) / 3
    return H

def damped_newton(F, J, x0, args=(), max_iter=50, atol=1e-12, stall_tol=1e-9,
                  max_step=None):
    """
    Damped Gauss-Newton iteration for a (possibly non-square) system F(x) = 0.

    Inputs:
    -------
    F : function
        Residual function returning a 1D array
    J : function
        Jacobian of `F`
    x0 : np.ndarray
        Initial estimate
    args : sequence
        Extra arguments to `F` and `J`
    max_iter : int
        Maximum number of iterations
    atol : float
        Allowable residual norm
    stall_tol : float
        Residual norm accepted when the line search can make no more progress
    max_step : float (optional)
        Cap on the norm of a single step
    """
    x = np.asarray(x0, dtype=float).copy()
    r = F(x, *args)
    norm_r = np.linalg.norm(r)
    for _ in range(max_iter):
        if norm_r <= atol:
            return x
        dx = np.linalg.lstsq(J(x, *args), -r, rcond=None)[0]
        if (max_step is not None) and (np.linalg.norm(dx) > max_step):
            dx *= max_step / np.linalg.norm(dx)
        # Backtrack until the residual decreases
        alpha = 1.
        for _ in range(30):
            x_new = x + alpha * dx
            r_new = F(x_new, *args)
            norm_new = np.linalg.norm(r_new)
            if np.isfinite(norm_new) and (norm_new < norm_r):
                break
            alpha *= 0.5
        else:
            if norm_r <= stall_tol:
                return x
            raise NoConvergence('Line search failed', point=x)
        x, r, norm_r = x_new, r_new, norm_new
    if norm_r <= stall_tol:
        return x
    raise NoConvergence('No solution found', point=x)
