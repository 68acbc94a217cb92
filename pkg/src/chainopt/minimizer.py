"""Exact minimizer of the chain objective and its analytic envelopes.

Setting the chain-frame gradient to zero gives the first-order system

    (x_1 - x_2)^k         = gamma - lt * x_1
    (x_t - x_{t+1})^k     = (x_{t-1} - x_t)^k - lt * x_t,   1 < t < T
    (x_{T-1} - x_T)^k     = lt * x_T,

(lt = lambda_tilde), whose unique solution is nonnegative, non-increasing,
satisfies the forward recursion x_{t+1} = x_t - (gamma - lt * sum_{j<=t} x_j)^(1/k)
and the sum identity sum_t x_t = gamma / lt.  No closed form exists, so the
solver shoots on x_1: generate the tail by the recursion, bisect on the sum
residual, then polish with damped Newton on the stationarity system.  A
plain Armijo gradient descent doubles as an independent oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded

from .errors import (BracketFailure, InconsistentBasis, InvalidInput,
                     NoConvergence, PolishFailure)
from .model import (HIGH_DIM, LOW_DIM, InstanceParams, RotationBasis,
                    eval_chain, g_derivative)

__all__ = [
    "MinimizerSolution",
    "solve_chain_minimizer",
    "brute_force_minimizer",
    "chain_gradient",
    "coordinate_lower_bound",
    "tail_decay_bound",
    "norm_bound",
    "head_upper_bound",
    "pull_back",
    "solution_to_json",
]


def chain_gradient(params: InstanceParams, x: np.ndarray) -> np.ndarray:
    """Gradient of the chain-frame objective at a T-vector x."""
    k, lt = params.k, params.lambda_tilde
    gp = g_derivative(x[:-1] - x[1:], k, 1)
    grad = lt * x.copy()
    grad[:-1] += gp
    grad[1:] -= gp
    grad[0] -= params.gamma
    return grad


@dataclass(frozen=True)
class MinimizerSolution:
    """Solved chain minimizer plus residual diagnostics.

    Attributes:
        x_star: minimizer in the chain frame (length chain_len).
        residuals: per-equation residuals of the powered stationarity system.
        sum_residual: |sum_t x_t - gamma/lambda_tilde|.
        t0: first 1-based index with x_{t0+1} <= lambda_tilde^(1/(k-1))/2,
            present in the high-dim regime only.
    """

    x_star: np.ndarray
    residuals: np.ndarray
    sum_residual: float
    t0: Optional[int]

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def _shoot(params: InstanceParams, x1: float):
    """Run the forward recursion from a candidate first coordinate.

    Returns (x, sum).  The recursion argument gamma - lt*S_t is clamped at
    zero: for even k a negative argument has no real root, and the true
    solution never reaches one, so the clamp only affects off-solution
    shots.  Two exact shortcuts keep long chains cheap: once the argument
    clamps with a nonnegative coordinate the remainder of the shot is
    constant, and once a coordinate goes negative the sum can only keep
    falling (the recursion never increases a coordinate), so an undershoot
    is certain as soon as the linear continuation bound drops below the
    target sum.
    """
    k, lt, gamma, T = params.k, params.lambda_tilde, params.gamma, params.chain_len
    target = gamma / lt
    x = np.empty(T)
    x[0] = x1
    s = x1
    for t in range(1, T):
        arg = gamma - lt * s
        if arg <= 0.0:
            if x[t - 1] >= 0.0:
                x[t:] = x[t - 1]
                s += (T - t) * x[t - 1]
                return x, s
            x[t] = x[t - 1]
        else:
            x[t] = x[t - 1] - arg ** (1.0 / k)
        s += x[t]
        if x[t] < 0.0 and s + (T - 1 - t) * x[t] < target:
            x[t + 1:] = x[t]
            return x, s + (T - 1 - t) * x[t]
    return x, s


def _system_residuals(params: InstanceParams, x: np.ndarray) -> np.ndarray:
    """Residuals of the powered first-order system, one per coordinate."""
    k, lt, gamma = params.k, params.lambda_tilde, params.gamma
    diffs = x[:-1] - x[1:]
    powered = np.sign(diffs) * np.abs(diffs) ** k
    res = np.empty(params.chain_len)
    res[0] = powered[0] - (gamma - lt * x[0])
    if params.chain_len > 2:
        res[1:-1] = powered[1:] - (powered[:-1] - lt * x[1:-1])
    res[-1] = powered[-1] - lt * x[-1]
    return res


def _newton_polish(params: InstanceParams, x: np.ndarray,
                   max_iter: int = 60) -> np.ndarray:
    """Damped Newton on the stationarity system (tridiagonal SPD Jacobian)."""
    k, lt = params.k, params.lambda_tilde
    x = x.copy()
    fnorm = np.linalg.norm(chain_gradient(params, x))
    for _ in range(max_iter):
        grad = chain_gradient(params, x)
        fnorm = np.linalg.norm(grad)
        if fnorm <= 1e-15 * max(params.gamma, lt * abs(x[0]), 1e-300):
            break
        gpp = g_derivative(x[:-1] - x[1:], k, 2)
        diag = np.full(params.chain_len, lt)
        diag[:-1] += gpp
        diag[1:] += gpp
        band = np.zeros((2, params.chain_len))
        band[0, 1:] = -gpp
        band[1] = diag
        step = solveh_banded(band, -grad)
        alpha, improved = 1.0, False
        for _ in range(40):
            trial = x + alpha * step
            tnorm = np.linalg.norm(chain_gradient(params, trial))
            if tnorm < fnorm:
                x, fnorm, improved = trial, tnorm, True
                break
            alpha *= 0.5
        if not improved:
            break
    if not np.all(np.isfinite(x)):
        raise PolishFailure("Newton polish produced non-finite iterate",
                            solution=x)
    return x


def solve_chain_minimizer(params: InstanceParams,
                          bisect_tol: float = 1e-13) -> MinimizerSolution:
    """Shooting solver for the chain minimizer.

    Bisects the sum residual R(x1) = sum_t x_t(x1) - gamma/lt over
    x1 in [0, gamma^(1/k) + sqrt(2*gamma^(1+1/k)/lt)] (the proven head
    bracket), then polishes with damped Newton.  R is monotone increasing in
    x1, so a missing sign change signals a degenerate regime and raises
    BracketFailure; callers fall back to brute_force_minimizer.
    """
    k, lt, gamma, T = params.k, params.lambda_tilde, params.gamma, params.chain_len
    target = gamma / lt
    hi = head_upper_bound(params) * (1.0 + 1e-9)
    lo = 0.0

    def residual(x1):
        return _shoot(params, x1)[1] - target

    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo > 0.0 or r_hi < 0.0:
        raise BracketFailure(
            f"no sign change on [0, {hi:.6g}]: R(0)={r_lo:.3g}, R(hi)={r_hi:.3g}")
    while hi - lo > bisect_tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if residual(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    x = _newton_polish(params, _shoot(params, 0.5 * (lo + hi))[0])

    res = _system_residuals(params, x)
    sum_res = abs(float(np.sum(x)) - target)
    t0 = None
    if params.regime == HIGH_DIM and k >= 2:
        thr = lt ** (1.0 / (k - 1)) / 2.0
        below = np.nonzero(x[1:] <= thr)[0]
        if below.size and x[0] > thr:
            t0 = int(below[0]) + 1  # 1-based index t with x_{t+1} <= thr
    return MinimizerSolution(x_star=x, residuals=res, sum_residual=sum_res, t0=t0)


def brute_force_minimizer(params: InstanceParams, tol: float = 1e-7,
                          max_iter: int = 10_000_000) -> np.ndarray:
    """Armijo gradient descent from zero until ||grad|| <= tol * lambda_tilde.

    Strong convexity then guarantees ||x - x_star|| <= tol.  Deliberately
    independent of the shooting path; used as the cross-checking oracle.
    """
    if params.chain_len > 2000:
        raise InvalidInput("brute force oracle capped at chain_len <= 2000")
    lt = params.lambda_tilde
    x = np.zeros(params.chain_len)
    fx = eval_chain(params, x)
    step = 1.0 / lt
    it = 0
    while it < max_iter:
        grad = chain_gradient(params, x)
        gnorm = np.linalg.norm(grad)
        if gnorm <= tol * lt:
            return x
        gsq = gnorm * gnorm
        alpha = step * 2.0
        accepted = False
        for _ in range(60):
            trial = x - alpha * grad
            ftrial = eval_chain(params, trial)
            # strict decrease required: at float resolution fx - tiny == fx
            # and the plain Armijo test would accept zero-progress steps
            if ftrial <= fx - 1e-4 * alpha * gsq and ftrial < fx:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # objective at resolution; descend on the gradient norm, which
            # the analytic formula resolves far beyond value differences
            alpha = step * 2.0
            for _ in range(60):
                trial = x - alpha * grad
                if np.linalg.norm(chain_gradient(params, trial)) < gnorm:
                    accepted = True
                    ftrial = fx
                    break
                alpha *= 0.5
            if not accepted:
                raise NoConvergence(
                    f"stalled at gradient norm {gnorm:.3e} (target {tol * lt:.3e})")
        x, fx, step = trial, ftrial, alpha
        it += 1
    raise NoConvergence(f"gradient descent hit the {max_iter} iteration cap")


# ---------------------------------------------------------------------------
# analytic envelopes
# ---------------------------------------------------------------------------

def head_upper_bound(params: InstanceParams) -> float:
    """Proven cap on the first coordinate: gamma^(1/k) + sqrt(2 gamma^(1+1/k)/lt)."""
    k, lt, gamma = params.k, params.lambda_tilde, params.gamma
    return gamma ** (1.0 / k) + math.sqrt(2.0 * gamma ** (1.0 + 1.0 / k) / lt)


def coordinate_lower_bound(params: InstanceParams, t: int) -> float:
    """Closed-form floor for the t-th minimizer coordinate (1-based).

    High-dim: max(0, gamma^((k+1)/2k) / (12 sqrt(lt)) + (1/2 - t) gamma^(1/k)).
    Low-dim:  max(0, gamma / (4 (lt + sqrt(2 lt gamma^((k-1)/k))))
                     + (1/2 - t) gamma^(1/k)).
    """
    if not 1 <= t <= params.chain_len:
        raise InvalidInput(f"t must lie in 1..{params.chain_len}")
    k, lt, gamma = params.k, params.lambda_tilde, params.gamma
    ramp = (0.5 - t) * gamma ** (1.0 / k)
    if params.regime == HIGH_DIM:
        lead = gamma ** ((k + 1) / (2.0 * k)) / (12.0 * math.sqrt(lt))
    else:
        lead = 0.25 * gamma / (lt + math.sqrt(2.0 * lt * gamma ** ((k - 1.0) / k)))
    return max(0.0, lead + ramp)


def tail_decay_bound(params: InstanceParams, j: int):
    """Geometric-tail floor lt^(1/(k-1)) * 6^(-k^(j+1)) for coordinate t0 + j.

    Returns (value, log_value); the value underflows binary64 almost
    immediately, so comparisons should use the log.
    """
    if j < 0:
        raise InvalidInput("j must be nonnegative")
    k, lt = params.k, params.lambda_tilde
    if (j + 1) * math.log(k) > 700.0:
        log_val = -math.inf
    else:
        log_val = math.log(lt) / (k - 1) - (float(k) ** (j + 1)) * math.log(6.0)
    value = math.exp(log_val) if log_val > -745.0 else 0.0
    return value, log_val


def norm_bound(params: InstanceParams) -> float:
    """Cap on the squared norm of the chain minimizer for the active regime."""
    k, lt, gamma = params.k, params.lambda_tilde, params.gamma
    if params.regime == HIGH_DIM:
        return 3.0 * gamma ** ((3.0 * k + 1) / (2.0 * k)) / lt ** 1.5
    return (1.0 + math.sqrt(2.0 * gamma ** ((k - 1.0) / k) / lt)) \
        * gamma ** ((k + 1.0) / k) / lt


def pull_back(solution: MinimizerSolution, basis: RotationBasis) -> np.ndarray:
    """Rotate the chain minimizer into the ambient frame: x* = sum_i x_i v_i."""
    if not basis.is_complete:
        raise InconsistentBasis("pull_back requires a fully committed basis")
    return basis.vectors.T @ solution.x_star


def solution_to_json(solution: MinimizerSolution) -> str:
    return json.dumps({
        "x_star": solution.x_star.tolist(),
        "residual_max": solution.max_residual,
        "sum_residual": solution.sum_residual,
        "t0": solution.t0,
    })
