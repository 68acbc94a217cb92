"""Baseline duel opponents: Armijo gradient descent and a chain peeler.

Both drive the oracle through the duel query callback until the budget is
spent; every oracle call counts, line-search probes included.

The peeler is the information-optimal opponent for this instance family:
the family is public (only the rotation is hidden), the very first gradient
reveals the leading hidden direction, and each restricted minimization step
leaks exactly the next one through the out-of-span gradient component.  Its
query count therefore tracks the instance's certificate floor, which is the
quantity the query-complexity exponent lives in.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solveh_banded

from .model import InstanceParams, g_derivative, g_value

__all__ = ["gradient_descent", "GreedyChainPeeler"]


def gradient_descent(query, dim: int, max_steps: int = 10 ** 9,
                     stop_eps=None, lam=None):
    """Armijo backtracking descent from the origin.

    Runs until the duel budget ends, or (when stop_eps and the strong
    convexity modulus are given) until ||grad||^2 <= 2 lam stop_eps, which
    certifies a gap below stop_eps without knowing the optimum.
    """
    x = np.zeros(dim)
    bundle = query(x, 1)
    fx, grad = bundle.value, bundle.gradient
    lam = bundle.lam if lam is None else lam
    alpha = 1.0 / max(lam, 1e-300)
    for _ in range(max_steps):
        gn = float(np.linalg.norm(grad))
        if gn == 0.0:
            return
        if stop_eps is not None and gn * gn <= 2.0 * lam * stop_eps:
            return
        gsq = gn * gn
        # one expansion per step, capped so trial points stay finite
        alpha = min(2.0 * alpha, (1e6 * (1.0 + float(np.linalg.norm(x)))) / gn)
        while True:
            trial = x - alpha * grad
            tb = query(trial, 1)
            if tb.value <= fx - 1e-4 * alpha * gsq:
                x, fx, grad = trial, tb.value, tb.gradient
                break
            alpha *= 0.5


class GreedyChainPeeler:
    """Minimize over the revealed subspace, then peel the next direction.

    Knows the instance parameters (public) but not the rotation.  Step t
    solves the chain objective restricted to span(u_1..u_t) exactly; the
    gradient at that point contains -scale * g'(a_t) * v_{t+1}, from which
    the next hidden direction is recovered as long as the boundary
    coordinate a_t carries signal.
    """

    def __init__(self, params: InstanceParams, coef_floor: float = 1e-13):
        self.params = params
        self.coef_floor = coef_floor

    def _restricted_minimizer(self, t: int, warm: np.ndarray) -> np.ndarray:
        """Newton solve of the chain objective restricted to t leading coords.

        For t < chain_len the link from coordinate t to the (zero) next one
        adds a boundary term g(a_t).
        """
        p = self.params
        k, lam, scale, gamma = p.k, p.lam, p.scale, p.gamma
        boundary = t < p.chain_len
        a = warm.copy()

        def grad_hess(a):
            c = np.append(a, 0.0) if boundary else a
            z = c[:-1] - c[1:]
            gp = g_derivative(z, k, 1)
            gpp = g_derivative(z, k, 2)
            grad = lam * a.copy()
            grad[: len(z)] += scale * gp
            grad[1:] -= scale * gp[: t - 1]
            grad[0] -= scale * gamma
            diag = np.full(t, lam)
            diag[: len(z)] += scale * gpp
            diag[1:] += scale * gpp[: t - 1]
            off = -scale * gpp[: t - 1]
            return grad, diag, off

        def fval(a):
            c = np.append(a, 0.0) if boundary else a
            z = c[:-1] - c[1:]
            return (scale * (float(np.sum(g_value(z, k))) - gamma * a[0])
                    + 0.5 * lam * float(a @ a))

        fa = fval(a)
        for _ in range(80):
            grad, diag, off = grad_hess(a)
            gn = float(np.linalg.norm(grad))
            if gn <= 1e-13 * max(scale * gamma, 1.0):
                break
            if t == 1:
                step = -grad / diag
            else:
                band = np.zeros((2, t))
                band[0, 1:] = off
                band[1] = diag
                step = solveh_banded(band, -grad)
            alpha = 1.0
            for _ in range(40):
                trial = a + alpha * step
                ft = fval(trial)
                if ft < fa:
                    a, fa = trial, ft
                    break
                alpha *= 0.5
            else:
                break
        return a

    def __call__(self, query, dim: int):
        p = self.params
        k, lam, scale, gamma = p.k, p.lam, p.scale, p.gamma
        first = query(np.zeros(dim), 1)
        lead = -first.gradient / (scale * gamma)
        nrm = float(np.linalg.norm(lead))
        if nrm == 0.0:
            return
        basis = [lead / nrm]
        a = np.array([])
        while True:
            t = len(basis)
            a = self._restricted_minimizer(t, np.append(a, 0.0))
            U = np.asarray(basis)
            x = U.T @ a
            bundle = query(x, 1)
            if t >= p.chain_len:
                return  # every hidden direction recovered; x is optimal
            boundary_coef = scale * float(g_derivative(a[-1], k, 1))
            if abs(boundary_coef) <= self.coef_floor * scale * gamma:
                return  # boundary signal exhausted; no further direction leaks
            z = np.append(a[:-1] - a[1:], a[-1])
            gp = g_derivative(z, k, 1)
            w = gp.copy()
            w[1:] -= gp[:-1]
            predicted = scale * (U.T @ w - gamma * basis[0]) + lam * x
            resid = bundle.gradient - predicted
            v = -resid / boundary_coef
            v = v - U.T @ (U @ v)
            v = v - U.T @ (U @ v)
            vn = float(np.linalg.norm(v))
            if vn < 1e-6:
                return  # no orthogonal signal survived; stop peeling
            basis.append(v / vn)
