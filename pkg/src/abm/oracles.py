"""Independent reference values used to validate the finite element code.

Nothing here touches the finite element machinery: Bessel zeros come from a
sign-change scan plus bisection, and the crack constant has a separate
finite-volume solver in log-polar coordinates.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import bisect
from scipy.sparse.linalg import spsolve
from scipy.special import jv


def bessel_zero(nu: float, n: int = 1, step: float = 0.05) -> float:
    """``n``-th positive zero of ``J_nu`` by scanning for a sign change and bisecting."""
    x = max(step, 1e-6)
    f0 = jv(nu, x)
    found = 0
    while True:
        y = x + step
        f1 = jv(nu, y)
        if f0 == 0.0:
            found += 1
            if found == n:
                return x
        elif f0 * f1 < 0:
            found += 1
            if found == n:
                return bisect(lambda s: jv(nu, s), x, y, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        x, f0 = y, f1


def disk_ab_eigenvalues(n: int = 4) -> list[float]:
    """Lowest Dirichlet eigenvalues on the unit disk with the half-flux pole at
    the center (with multiplicity).  Angular modes are ``e^{i(m+1/2)t}`` so the
    radial parts are ``J_{|m+1/2|}``, each order appearing twice."""
    vals = []
    for nu in (0.5, 1.5, 2.5, 3.5):
        for j in (1, 2):
            z = bessel_zero(nu, j)
            vals += [z * z, z * z]
    return sorted(vals)[:n]


def disk_laplace_eigenvalue() -> float:
    z = bessel_zero(0.0, 1)
    return z * z


# ---------------------------------------------------------------------- crack FV
def graded_points(a: float, b: float, c: float, h0: float, q: float, hmax: float) -> np.ndarray:
    """Points in ``[a, b]`` clustered at ``c``: spacing ``h0`` at ``c``,
    growing by ``q`` per cell up to ``hmax``."""

    def side(length):
        out = [0.0]
        h = h0
        while out[-1] < length:
            out.append(out[-1] + h)
            h = min(h * q, hmax)
        if len(out) > 2 and (out[-1] - length) > 0.5 * (out[-1] - out[-2]):
            out.pop()
        out[-1] = length
        return np.array(out)

    pts = [c]
    if c > a:
        pts = np.concatenate([c - side(c - a)[::-1], [c]])
    right = c + side(b - c)[1:] if b > c else np.array([])
    return np.unique(np.concatenate([np.atleast_1d(pts), right]))


def crack_m_fv(k: int = 1, R: float = 64.0, h0: float = 2e-4, q: float = 1.08, hmax: float = 0.02, s_min: float = -24.0) -> float:
    """Crack constant from a finite-volume solve in log-polar coordinates.

    With ``x = e^s (cos p, sin p)`` the Laplacian is conformally ``u_ss + u_pp``
    on the strip ``s < ln R``, ``0 < p < pi``.  The crack becomes
    ``{p = 0, s >= 0}`` and the load per unit ``s`` is ``(k/2) e^{k s/2}``.
    Vertex-centred 5-point scheme on a tensor grid graded toward the tip
    ``(s, p) = (0, 0)``.
    """
    s = graded_points(s_min, math.log(R), 0.0, h0, q, hmax)
    p = graded_points(0.0, math.pi, 0.0, h0, q, hmax)
    ns, npp = len(s), len(p)
    ds, dp = np.diff(s), np.diff(p)
    # control-volume widths
    cs = np.zeros(ns)
    cs[:-1] += ds / 2
    cs[1:] += ds / 2
    cp = np.zeros(npp)
    cp[:-1] += dp / 2
    cp[1:] += dp / 2
    idx = np.arange(ns * npp).reshape(ns, npp)
    # s-direction fluxes
    G = cp[None, :] / ds[:, None]
    a = idx[:-1, :].ravel()
    b = idx[1:, :].ravel()
    g = G.ravel()
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([g, g, -g, -g])
    G2 = cs[:, None] / dp[None, :]
    a2 = idx[:, :-1].ravel()
    b2 = idx[:, 1:].ravel()
    g2 = G2.ravel()
    rows = np.concatenate([rows, a2, b2, a2, b2])
    cols = np.concatenate([cols, a2, b2, b2, a2])
    vals = np.concatenate([vals, g2, g2, -g2, -g2])
    n = ns * npp
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    # load on p = 0, s < 0 integrated exactly over each control interval
    F = np.zeros(n)
    lo = np.concatenate([[s[0]], 0.5 * (s[:-1] + s[1:])])
    hi = np.concatenate([0.5 * (s[:-1] + s[1:]), [s[-1]]])
    hi = np.minimum(hi, 0.0)
    seg = hi > lo
    F[idx[seg, 0]] = np.exp(k * hi[seg] / 2) - np.exp(k * lo[seg] / 2)
    dirichlet = np.zeros((ns, npp), dtype=bool)
    dirichlet[-1, :] = True
    dirichlet[s >= -1e-14, 0] = True
    free = np.flatnonzero(~dirichlet.ravel())
    w = np.zeros(n)
    w[free] = spsolve(A[free][:, free].tocsc(), F[free])
    return -0.5 * float(F @ w)
