"""Independent reference computations used to freeze expected values.

Nothing here imports the solver stack: residuals are rebuilt from scratch
with dense numpy so that agreement is a genuine cross-check.
"""

import math

import numpy as np
from scipy.optimize import root


def path_laplacian(n, w=1.0):
    """Dense -Delta on path(n) with unit measure."""
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = -w
        A[i, i] += w
        A[i + 1, i + 1] += w
    return A


def lse_residual(A, h):
    def F(u):
        a = np.abs(u)
        nl = np.where(a > 0, 2 * u * np.log(np.where(a > 0, a, 1.0)), 0.0)
        return A @ u + h * u - nl

    return F


def lse_energy(A, h, u):
    a = np.abs(u)
    logm = np.sum(np.where(a > 0, u * u * np.log(np.where(a > 0, a * a, 1.0)), 0.0))
    return 0.5 * (u @ A @ u + np.sum((h + 1) * u * u) - logm)


def normalize(u):
    a = np.abs(u)
    i = int(np.flatnonzero(a >= a.max() * (1 - 1e-9))[0])
    return -u if u[i] < 0 else u


def multistart(A, h, n_starts=10_000, seed=12345, lo=-3.0, hi=1.5, tol=1e-10):
    """All nontrivial roots (up to sign) reached from random starts with scipy's hybrid method."""
    F = lse_residual(A, h)
    rng = np.random.default_rng(seed)
    n = len(h)
    found = []
    for _ in range(n_starts):
        x0 = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(lo, hi, n)
        sol = root(F, x0, method="hybr", tol=1e-14)
        u = sol.x
        if not np.all(np.isfinite(u)) or np.max(np.abs(F(u))) > tol:
            continue
        if np.sum(u * u) < 1e-16:
            continue
        u = normalize(u)
        thresh = 1e-6 * (1 + np.linalg.norm(u))
        if all(min(np.linalg.norm(u - v), np.linalg.norm(u + v)) > thresh for v in found):
            found.append(u)
    found.sort(key=lambda v: (lse_energy(A, h, v), tuple(v)))
    return found


def c_eps_mp(eps, dps=40):
    """sup_s |s| / cosh(eps s) via mpmath root of eps s tanh(eps s) = 1."""
    import mpmath as mp

    mp.mp.dps = dps
    e = mp.mpf(eps)
    s = mp.findroot(lambda s: e * s * mp.tanh(e * s) - 1, 1.2 / e)
    return s / mp.cosh(e * s)


def dirichlet_path_laplacian(n, w=1.0):
    """Dense -Delta on n interior vertices of Z^1 with zero boundary values."""
    A = path_laplacian(n, w)
    A[0, 0] += w
    A[-1, -1] += w
    return A


def nehari_ground_state(A, h, x0):
    """Ground state of the dense system with mu = 1, by direct minimization.

    On each ray the energy peaks at I(t* x) = 1/2 t*^2 |x|^2 with
    log t*^2 = (x.Ax + h x.x - sum x^2 log x^2) / |x|^2, so the ground state
    minimizes the log of that peak, a 0-homogeneous function of x.  The
    minimizer is rescaled to the Nehari set and polished with hybr.
    """
    from scipy.optimize import minimize, root

    def peak(x):
        m = x @ x
        a = np.abs(x)
        lm = np.sum(np.where(a > 0, 2 * x * x * np.log(np.where(a > 0, a, 1.0)), 0.0))
        return np.log(0.5 * m) + (x @ A @ x + h @ (x * x) - lm) / m

    x = minimize(peak, x0, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000}).x
    m = x @ x
    a = np.abs(x)
    lm = np.sum(np.where(a > 0, 2 * x * x * np.log(np.where(a > 0, a, 1.0)), 0.0))
    x = x * np.exp(0.5 * (x @ A @ x + h @ (x * x) - lm) / m)
    return normalize(root(lse_residual(A, h), x, method="hybr", tol=1e-14).x)
