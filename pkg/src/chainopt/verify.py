"""Independent numerical verification: derivative checks, curvature
certificates, tensor norm estimation, and the per-claim assertion suite for
solved instances.

Everything here is deliberately decoupled from the closed forms it checks:
derivatives are compared against central finite differences, Lipschitz
moduli against sampled difference quotients, and tensor operator norms are
lower-estimated by multi-start projected ascent on the unit sphere (the
exact symmetric-tensor norm is NP-hard; a lower estimate keeps every
assertion sound, since only over-estimates could mask a violation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .minimizer import (MinimizerSolution, coordinate_lower_bound,
                        head_upper_bound, norm_bound, tail_decay_bound)
from .model import (HIGH_DIM, InstanceParams, RotationBasis, apply_to_vectors,
                    eval_rotated)

__all__ = [
    "CheckReport",
    "fd_derivative_check",
    "lipschitz_estimate",
    "strong_convexity_check",
    "estimate_tensor_norm",
    "hessian_norm",
    "measure_derivative_bound",
    "lemma_suite",
]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one numerical check."""

    check_name: str
    passed: bool
    worst_violation: float
    samples: int
    details: str = ""

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"[{flag}] {self.check_name}: worst={self.worst_violation:.3e} ({self.details})"


def _report(name, worst, tol, samples, details=""):
    return CheckReport(check_name=name, passed=bool(worst <= tol),
                       worst_violation=float(worst), samples=samples,
                       details=details or f"tol={tol:.1e}")


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_derivative_check(params: InstanceParams, basis: RotationBasis,
                        x, order: int, rng, step: float = None,
                        n_directions: int = 10) -> CheckReport:
    """Central finite differences of the order (m-1) derivative vs order m.

    The analytic side contracts the factored tensor; the numerical side
    differences the order (m-1) directional derivative along the last
    direction with step h = step * (1 + ||x||).  Relative tolerance
    max(1e-5, step) ties accuracy to the step.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-6
    h = step * (1.0 + float(np.linalg.norm(x)))
    k = params.k
    worst = 0.0
    for _ in range(n_directions):
        dirs = [rng.standard_normal(params.dim) for _ in range(order)]
        dirs = [u / np.linalg.norm(u) for u in dirs]

        def lower(y):
            b = eval_rotated(params, basis, y, max(order - 1, 1))
            if order == 1:
                return b.value
            if order == 2:
                return float(b.gradient @ dirs[0])
            return apply_to_vectors(b, order - 1, dirs[:-1])

        u = dirs[-1]
        numeric = (lower(x + h * u) - lower(x - h * u)) / (2.0 * h)
        b = eval_rotated(params, basis, x, order)
        analytic = (float(b.gradient @ dirs[0]) if order == 1
                    else apply_to_vectors(b, order, dirs))
        scale_ref = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / scale_ref)
    return _report(f"fd_order_{order}", worst, max(1e-5, step), n_directions)


# ---------------------------------------------------------------------------
# tensor and matrix operator norms
# ---------------------------------------------------------------------------

def estimate_tensor_norm(coeffs, factors, order: int, rng,
                         restarts: int = 20, steps: int = 200) -> float:
    """Lower estimate of || sum_i c_i r_i^(x m) || by sphere ascent.

    Maximizes |sum_i c_i <r_i, z>^m| over the unit sphere with multi-start
    projected gradient ascent, vectorized over restarts with per-restart
    adaptive step sizes.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    d = factors.shape[1]
    if coeffs.size == 0 or not np.any(coeffs):
        return 0.0
    R = factors.toarray() if sp.issparse(factors) else np.asarray(factors)
    Z = rng.standard_normal((restarts, d))
    Z /= np.linalg.norm(Z, axis=1)[:, None]
    W = Z @ R.T
    phi = (W ** order) @ coeffs
    eta = np.full(restarts, 0.5)
    for _ in range(steps):
        grad = (order * (coeffs * W ** (order - 1))) @ R
        Zt = Z + (eta * np.sign(phi))[:, None] * grad
        nrm = np.linalg.norm(Zt, axis=1)
        nrm[nrm == 0.0] = 1.0
        Zt /= nrm[:, None]
        Wt = Zt @ R.T
        phit = (Wt ** order) @ coeffs
        better = np.abs(phit) >= np.abs(phi)
        Z[better], W[better], phi[better] = Zt[better], Wt[better], phit[better]
        eta[better] *= 1.2
        eta[~better] *= 0.5
    return float(np.max(np.abs(phi)))


def hessian_norm(bundle, exact_dim_cap: int = 512) -> float:
    """Operator norm of the bundle's order-2 derivative (dense when small)."""
    d = bundle.dim
    R = bundle.factors
    Rd = R.toarray() if sp.issparse(R) else np.asarray(R)
    if d <= exact_dim_cap:
        H = Rd.T @ (bundle.coeffs[2][:, None] * Rd) + bundle.lam * np.eye(d)
        return float(np.max(np.abs(np.linalg.eigvalsh(H))))
    rng = np.random.default_rng(0)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(200):
        w = bundle.lam * v + Rd.T @ (bundle.coeffs[2] * (Rd @ v))
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def measure_derivative_bound(params: InstanceParams, solution: MinimizerSolution,
                             seed: int = 0) -> float:
    """Estimate M = max_m ||grad^m f(x*)|| over orders 2..k (chain frame).

    Rotation invariant, so evaluated in the identity embedding.  Orders
    three and up use the sphere-ascent lower estimate.
    """
    probe = InstanceParams(k=params.k, lam=params.lam, mu_k=params.mu_k,
                           gamma=params.gamma, chain_len=params.chain_len,
                           dim=params.chain_len + 1, regime=HIGH_DIM)
    basis = RotationBasis.identity(probe.chain_len, probe.dim)
    x = np.zeros(probe.dim)
    x[: probe.chain_len] = solution.x_star
    bundle = eval_rotated(probe, basis, x, probe.k)
    M = hessian_norm(bundle)
    rng = np.random.default_rng(seed)
    for m in range(3, probe.k + 1):
        M = max(M, estimate_tensor_norm(bundle.coeffs[m], bundle.factors, m, rng))
    return M


# ---------------------------------------------------------------------------
# sampled curvature certificates
# ---------------------------------------------------------------------------

def strong_convexity_check(params: InstanceParams, basis: RotationBasis,
                           rng, n_pairs: int = 1000, radius: float = 5.0,
                           center=None) -> CheckReport:
    """f(y) >= f(x) + <grad f(x), y-x> + lam/2 ||y-x||^2 at sampled pairs."""
    d = params.dim
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    worst = -math.inf
    vals = []
    for _ in range(n_pairs):
        x = c + radius * rng.standard_normal(d) / math.sqrt(d)
        y = c + radius * rng.standard_normal(d) / math.sqrt(d)
        bx = eval_rotated(params, basis, x, 1)
        by = eval_rotated(params, basis, y, 1)
        dxy = y - x
        lower = bx.value + float(bx.gradient @ dxy) \
            + 0.5 * params.lam * float(dxy @ dxy)
        vals.extend((abs(bx.value), abs(by.value)))
        worst = max(worst, lower - by.value)
    tol = 1e-8 * max(max(vals), 1.0)
    return _report("strong_convexity", worst, tol, n_pairs,
                   details=f"tol=1e-8*value_scale={tol:.2e}")


def lipschitz_estimate(params: InstanceParams, basis: RotationBasis, rng,
                       order: int = None, radius: float = 2.0,
                       n_pairs: int = 200, center=None,
                       bound: float = None, restarts: int = 20,
                       steps: int = 200) -> CheckReport:
    """Sampled Lipschitz ratio of the order-m derivative against its bound.

    Order k (default): the difference tensor keeps the factored form with
    coefficient deltas, so its operator norm is lower-estimated by sphere
    ascent and compared to mu_k * ||x - y||.  Order 2: dense Hessian
    difference (exact matrix norm) against the supplied local bound.
    """
    order = params.k if order is None else order
    if bound is None:
        bound = params.mu_k
    d = params.dim
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    worst_ratio = 0.0
    for _ in range(n_pairs):
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        x = c + radius * u / max(np.linalg.norm(u), 1e-12) * rng.uniform() ** (1.0 / d)
        y = c + radius * v / max(np.linalg.norm(v), 1e-12) * rng.uniform() ** (1.0 / d)
        sep = float(np.linalg.norm(x - y))
        if sep < 1e-9:
            continue
        bx = eval_rotated(params, basis, x, order)
        by = eval_rotated(params, basis, y, order)
        delta = bx.coeffs[order] - by.coeffs[order]
        if order == 2:
            R = bx.factors
            Rd = R.toarray() if sp.issparse(R) else np.asarray(R)
            diff = Rd.T @ (delta[:, None] * Rd)
            est = float(np.max(np.abs(np.linalg.eigvalsh(diff))))
        else:
            est = estimate_tensor_norm(delta, bx.factors, order, rng,
                                       restarts=restarts, steps=steps)
        worst_ratio = max(worst_ratio, est / sep)
    return _report(f"lipschitz_order_{order}", worst_ratio,
                   bound * (1.0 + 1e-6), n_pairs,
                   details=f"bound={bound:.6g}")


# ---------------------------------------------------------------------------
# per-claim suite for a solved instance
# ---------------------------------------------------------------------------

def lemma_suite(params: InstanceParams, solution: MinimizerSolution,
                basis: RotationBasis = None) -> list[CheckReport]:
    """Assert every proven property of the chain minimizer, one report each.

    High-dim instances get the full set (sign, monotonicity, recursion, sum
    identity, coordinate floor, head cap, geometric tail in log space, tail
    cap, squared-norm cap); low-dim instances the regime-specific floor and
    cap.  A basis adds the rotation consistency check <v_t, x*> = x_t.
    """
    x = solution.x_star
    k, lt, gamma, T = params.k, params.lambda_tilde, params.gamma, params.chain_len
    out = []

    out.append(_report("nonnegative", -float(np.min(x)), 1e-12, T))
    mono = float(np.max(np.diff(x))) if T > 1 else 0.0
    out.append(_report("non_increasing", mono, 1e-12, T))
    out.append(_report("stationarity_system", solution.max_residual,
                       1e-9 * gamma, T))
    out.append(_report("sum_identity", solution.sum_residual,
                       1e-10 * gamma / lt, 1))

    # forward recursion in powered form and its tail-sum twin
    s = np.cumsum(x)
    diffs = x[:-1] - x[1:]
    powered = diffs ** k
    rec = np.max(np.abs(powered - (gamma - lt * s[:-1])))
    out.append(_report("forward_recursion", float(rec), 1e-9 * gamma, T - 1))
    tail = s[-1] - s[:-1]
    rec2 = np.max(np.abs(powered - lt * tail))
    out.append(_report("tail_recursion", float(rec2), 1e-9 * gamma, T - 1))

    floor_slack = 1e-10 * max(1.0, gamma ** (1.0 / k))
    worst_floor = max(coordinate_lower_bound(params, t + 1) - x[t]
                      for t in range(T))
    out.append(_report("coordinate_floor", worst_floor, floor_slack, T))

    head = head_upper_bound(params)
    out.append(_report("head_cap", float(x[0]) - head, 1e-10 * head, 1))

    # upper tail x_{t+j} <= x_t^(k^j) / lt^((k^j - 1)/(k - 1)), in logs
    worst_upper_tail = -math.inf
    lx = np.where(x > 0, np.log(np.maximum(x, 1e-320)), -math.inf)
    llt = math.log(lt)
    for t in range(T - 1):
        if x[t] <= 0 or x[t + 1] <= 0:
            continue
        cap = k * lx[t] - llt
        worst_upper_tail = max(worst_upper_tail, lx[t + 1] - cap)
    out.append(_report("tail_cap_log", worst_upper_tail
                       if worst_upper_tail > -math.inf else 0.0, 1e-9, T))

    out.append(_report("norm_cap", float(x @ x) - norm_bound(params),
                       1e-10 * norm_bound(params), 1))

    if params.regime == HIGH_DIM:
        gamma_floor = max(lt ** (k / (k - 1.0)),
                          12.0 ** (2.0 * k / (k + 1)) * lt ** (2.0 * k / (2 * k - 1)))
        if gamma > gamma_floor:
            thr = lt ** (1.0 / (k - 1)) / 2.0
            out.append(_report("head_above_half_threshold",
                               thr - float(x[0]), 1e-12 * max(thr, 1.0), 1,
                               details="x_1 >= lt^(1/(k-1))/2"))
            t0 = solution.t0
            out.append(_report("t0_exists_first_half",
                               (t0 - T / 2.0) if t0 is not None else math.inf,
                               0.0, 1, details=f"t0={t0}"))
            if t0 is not None:
                worst_tail = -math.inf
                for j in range(0, T - t0 + 1):
                    idx = t0 + j - 1  # x_{t0+j}, 1-based
                    if idx >= T or x[idx] <= 0:
                        continue
                    _, logbound = tail_decay_bound(params, j)
                    worst_tail = max(worst_tail, logbound - lx[idx])
                out.append(_report("geometric_tail_floor_log",
                                   worst_tail if worst_tail > -math.inf else 0.0,
                                   1e-9, T - t0 + 1))

    if basis is not None and basis.is_complete:
        from .minimizer import pull_back

        xs = pull_back(solution, basis)
        proj = basis.vectors @ xs
        err = float(np.max(np.abs(proj - x))) / max(float(x[0]), 1e-300)
        out.append(_report("rotation_projection", err, 1e-10, T))
        norm_err = abs(float(xs @ xs) - float(x @ x)) / max(float(x @ x), 1e-300)
        out.append(_report("rotation_norm", norm_err, 1e-12, 1))
    return out
