"""
Conjugate gradient for the trust-region subproblem

    min_s  m(s) = g^T s + 1/2 s^T H s   subject to ||s|| <= radius

using only Hessian-vector products. Inside the region this is Steihaug-Toint
CG. Once CG leaves the region (boundary crossing or non-positive curvature)
the Lanczos tridiagonal matrix that CG has been building implicitly is used to
solve the subproblem exactly on the Krylov subspace, and the Lanczos process
continues until the boundary residual is small.
"""
import math
from typing import Callable, List, NamedTuple, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

INTERIOR = "interior"
BOUNDARY = "boundary"
NEG_CURVATURE = "neg_curvature"
MAX_ITERS = "max_iters"


class SubproblemResult(NamedTuple):
    step: np.ndarray
    status: str
    iterations: int
    model_value: float


def boundary_step(s: np.ndarray, p: np.ndarray, radius: float) -> float:
    """Largest tau >= 0 with ||s + tau p|| = radius (assumes ||s|| <= radius)."""
    a = float(p @ p)
    b = 2.0 * float(s @ p)
    c = float(s @ s) - radius * radius
    root = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
    if b > 0:
        return -2.0 * c / (b + root)
    return (-b + root) / (2.0 * a)


def _eig(diag: np.ndarray, offdiag: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if diag.shape[0] == 1:
        return diag.copy(), np.ones((1, 1))
    return eigh_tridiagonal(diag, offdiag)


def solve_tridiagonal_subproblem(diag: np.ndarray, offdiag: np.ndarray, gamma0: float,
                                 radius: float) -> Tuple[np.ndarray, float, float]:
    """
    Exact minimizer of gamma0*h[0] + 1/2 h^T T h over ||h|| <= radius, T tridiagonal.

    Returns (h, multiplier, smallest eigenvalue of T).
    """
    evals, evecs = _eig(diag, offdiag)
    c = gamma0 * evecs[0, :]
    lam_min = float(evals[0])

    def h_of(lam):
        return -(evecs @ (c / (evals + lam)))

    if lam_min > 0:
        h = h_of(0.0)
        if np.linalg.norm(h) <= radius:
            return h, 0.0, lam_min

    lo = max(0.0, -lam_min)
    scale = max(1.0, float(np.abs(evals).max()))
    leftmost = evals + lo <= 1e-12 * scale

    # Hard case: g has no component along the leftmost eigenvectors.
    if lam_min <= 0 and np.all(np.abs(c[leftmost]) <= 1e-12 * gamma0):
        rest = ~leftmost
        h = -(evecs[:, rest] @ (c[rest] / (evals[rest] + lo)))
        slack = radius * radius - float(h @ h)
        if slack >= 0:
            return h + math.sqrt(slack) * evecs[:, 0], lo, lam_min

    def phi(lam):
        return 1.0 / np.linalg.norm(h_of(lam)) - 1.0 / radius

    a = lo if lam_min > 0 else lo + max(1e-300, 1e-14 * scale)
    b = lo + (gamma0 / radius) * (1.0 + 1e-8) + 1e-300
    if phi(a) >= 0:
        lam = a
    else:
        lam = brentq(phi, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    h = h_of(lam)
    return h * (radius / np.linalg.norm(h)), lam, lam_min


def steihaug_cg(hv: Callable[[np.ndarray], np.ndarray], g: np.ndarray, radius: float,
                rtol: float = 0.1, max_iters: int = 25, refine_boundary: bool = True) -> SubproblemResult:
    g = np.asarray(g, dtype=np.float64)
    gamma0 = float(np.linalg.norm(g))
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if gamma0 == 0:
        raise ValueError("gradient must be nonzero")

    tol = rtol * gamma0
    s = np.zeros_like(g)
    r = g.copy()
    p = -r
    gamma = gamma0
    model = 0.0
    interior = True

    lanczos: List[np.ndarray] = []
    diag: List[float] = []
    offdiag: List[float] = []
    sigma = 1.0
    beta = 0.0
    prev_inv_alpha = 0.0
    h = None
    k = 0

    for k in range(max_iters):
        if k > 0:
            sigma = -math.copysign(1.0, prev_inv_alpha) * sigma
        lanczos.append(sigma * r / gamma)

        Hp = hv(p)
        pHp = float(p @ Hp)
        inv_alpha = pHp / (gamma * gamma)
        if k == 0:
            diag.append(inv_alpha)
        else:
            diag.append(inv_alpha + beta * prev_inv_alpha)
            offdiag.append(math.sqrt(beta) * abs(prev_inv_alpha))

        if interior:
            if pHp <= 0:
                interior = False
            else:
                alpha = gamma * gamma / pHp
                s_next = s + alpha * p
                if np.linalg.norm(s_next) >= radius:
                    interior = False
                else:
                    s = s_next
                    model -= 0.5 * alpha * gamma * gamma

            if not interior and not refine_boundary:
                tau = boundary_step(s, p, radius)
                model += tau * float(p @ r) + 0.5 * tau * tau * pHp
                status = NEG_CURVATURE if pHp <= 0 else BOUNDARY
                return SubproblemResult(s + tau * p, status, k + 1, model)

        if not interior:
            h, _, _ = solve_tridiagonal_subproblem(np.array(diag), np.array(offdiag), gamma0, radius)

        if pHp == 0:
            break
        r = r + (gamma * gamma / pHp) * Hp
        gamma_next = float(np.linalg.norm(r))

        if interior and gamma_next <= tol:
            return SubproblemResult(s, INTERIOR, k + 1, model)
        if not interior and gamma_next * abs(h[-1]) <= tol:
            break
        if gamma_next == 0 or k + 1 == g.shape[0]:
            break

        beta = (gamma_next / gamma) ** 2
        p = -r + beta * p
        prev_inv_alpha = inv_alpha
        gamma = gamma_next

    iterations = k + 1
    if interior:
        converged = float(np.linalg.norm(r)) <= tol or iterations == g.shape[0]
        return SubproblemResult(s, INTERIOR if converged else MAX_ITERS, iterations, model)

    T_diag = np.array(diag)
    T_off = np.array(offdiag)
    h, lam, lam_min = solve_tridiagonal_subproblem(T_diag, T_off, gamma0, radius)
    step = np.array(lanczos).T @ h
    Th = T_diag * h
    if T_off.size:
        Th[:-1] += T_off * h[1:]
        Th[1:] += T_off * h[:-1]
    model = gamma0 * float(h[0]) + 0.5 * float(h @ Th)

    norm = float(np.linalg.norm(step))
    on_sphere = lam > 0 or lam_min <= 0 or np.linalg.norm(h) >= radius * (1 - 1e-12)
    if on_sphere and norm > 0:
        step *= radius / norm
    if lam_min <= 0:
        status = NEG_CURVATURE
    elif on_sphere:
        status = BOUNDARY
    else:
        status = INTERIOR
    return SubproblemResult(step, status, iterations, model)
