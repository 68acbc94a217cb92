"""Hard chain instances for k-th order strongly convex optimization.

The instance family is built from the piecewise power kernel

    g(z) = |z|^(k+1) / (k+1),

chained along consecutive coordinates.  In the plain (chain) frame the
objective is

    f_chain(x) = sum_{i<T} g(x_i - x_{i+1}) - gamma * x_1
                 + (lambda_tilde / 2) * ||x||^2,

and the deployable instance is its rotated, rescaled sibling

    f(x) = scale * ( sum_{i<T} g(<v_i - v_{i+1}, x>) - gamma * <v_1, x> )
           + (lambda / 2) * ||x||^2,

where v_1..v_T are orthonormal directions hiding the chain, and

    lambda_tilde = k! * 2^((k+3)/2) * lambda / mu_k,
    scale        = mu_k / (k! * 2^((k+3)/2)) = lambda / lambda_tilde.

With that coupling, f is lambda-strongly convex and its k-th derivative is
mu_k-Lipschitz in the tensor operator norm.  All derivatives of the chain
part are sums of rank-one direction tensors

    grad^m f(x) = scale * sum_i g^(m)(<r_i, x>) r_i^(x m),   r_i = v_i - v_{i+1},

(plus lambda * I at order two), which is what `DerivativeBundle` stores:
never a dense d^m array, only coefficients plus the shared factor matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InconsistentBasis, InvalidInput, TooLarge

__all__ = [
    "InstanceParams",
    "RotationBasis",
    "DerivativeBundle",
    "AssumptionViolation",
    "g_value",
    "g_derivative",
    "select_gamma",
    "validate_params",
    "eval_chain",
    "eval_rotated",
    "densify_tensor",
    "apply_to_vectors",
    "instance_to_json",
    "instance_from_json",
]

HIGH_DIM = "high"
LOW_DIM = "low"

# |<v_committed, x>| above this (relative) level means the bundle would depend
# on rotation vectors that are not fixed yet.
_BOUNDARY_TOL = 1e-8


# ---------------------------------------------------------------------------
# power kernel
# ---------------------------------------------------------------------------

def g_value(z, k: int):
    """g(z) = |z|^(k+1)/(k+1), elementwise."""
    z = np.asarray(z, dtype=float)
    return np.abs(z) ** (k + 1) / (k + 1)


def g_derivative(z, k: int, m: int):
    """m-th derivative of g, elementwise, for 0 <= m <= k.

    Closed form: (k!/(k+1-m)!) * |z|^(k+1-m), carrying a sign(z) factor for
    odd m.  sign(0) = 0, so every formula is total; in particular
    g^(m)(0) = 0 for all m <= k.
    """
    if not 0 <= m <= k:
        raise InvalidInput(f"derivative order {m} outside 0..{k}")
    z = np.asarray(z, dtype=float)
    if m == 0:
        return g_value(z, k)
    p = k + 1 - m
    coef = float(math.perm(k, m - 1))  # k!/(k+1-m)!
    mag = coef * np.abs(z) ** p
    if m % 2 == 1:
        return np.sign(z) * mag
    return mag


# ---------------------------------------------------------------------------
# instance parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceParams:
    """Parameters of one chain instance.

    Attributes:
        k: derivative order of the oracle model, k >= 2.
        lam: strong convexity modulus of the rotated objective.
        mu_k: Lipschitz constant of the k-th derivative.
        gamma: driving coefficient of the linear chain term.
        chain_len: number of hidden orthonormal directions (T).
        dim: ambient dimension d (d > T in the high-dimensional regime,
            d == T in the low-dimensional one).
        regime: "high" or "low".
    """

    k: int
    lam: float
    mu_k: float
    gamma: float
    chain_len: int
    dim: int
    regime: str = HIGH_DIM

    def __post_init__(self):
        if self.k < 2 or int(self.k) != self.k:
            raise InvalidInput(f"k must be an integer >= 2, got {self.k}")
        for name in ("lam", "mu_k", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidInput(f"{name} must be positive and finite, got {v}")
        if self.chain_len < 2:
            raise InvalidInput("chain_len must be >= 2")
        if self.regime not in (HIGH_DIM, LOW_DIM):
            raise InvalidInput(f"unknown regime {self.regime!r}")
        if self.regime == HIGH_DIM and self.dim <= self.chain_len:
            raise InvalidInput("high-dim regime requires dim > chain_len")
        if self.regime == LOW_DIM and self.dim != self.chain_len:
            raise InvalidInput("low-dim regime requires dim == chain_len")

    @property
    def lambda_tilde(self) -> float:
        """Strong convexity modulus in the chain frame."""
        return math.factorial(self.k) * 2 ** ((self.k + 3) / 2) * self.lam / self.mu_k

    @property
    def scale(self) -> float:
        """Prefactor of the chain part; equals lam / lambda_tilde."""
        return self.mu_k / (math.factorial(self.k) * 2 ** ((self.k + 3) / 2))

    @classmethod
    def from_chain_frame(cls, k, lambda_tilde, gamma, chain_len, dim,
                         lam=1.0, regime=HIGH_DIM) -> "InstanceParams":
        """Build params from chain-frame quantities, fixing lam and deriving mu_k."""
        mu_k = math.factorial(k) * 2 ** ((k + 3) / 2) * lam / lambda_tilde
        return cls(k=k, lam=lam, mu_k=mu_k, gamma=gamma,
                   chain_len=chain_len, dim=dim, regime=regime)


def select_gamma(k: int, lam: float, mu_k: float, D: float) -> float:
    """Driving coefficient that saturates the minimizer norm cap at D^2.

    Returns ((2^((3k+9)/2) (k!)^3 lam^3 D^4) / (9 mu_k^3))^(k/(3k+1)).  With
    this choice, 3 gamma^((3k+1)/(2k)) / lambda_tilde^(3/2) == D^2 exactly,
    so the instance minimizer satisfies ||x*|| <= D.
    """
    for name, v in (("lam", lam), ("mu_k", mu_k), ("D", D)):
        if not np.isfinite(v) or v <= 0:
            raise InvalidInput(f"{name} must be positive and finite, got {v}")
    kf = math.factorial(k)
    base = (2 ** ((3 * k + 9) / 2) * kf ** 3 * lam ** 3 * D ** 4) / (9 * mu_k ** 3)
    return base ** (k / (3 * k + 1))


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionViolation:
    """One violated admissibility inequality, with both computed sides."""

    name: str
    lhs: float
    rhs: float
    relation: str  # e.g. "D > rhs" read as lhs relation-op rhs

    def __str__(self):
        return f"{self.name}: {self.relation} fails ({self.lhs!r} vs {self.rhs!r})"


def _pow(x, p, mp=None):
    if mp is None:
        return x ** p
    return mp.mpf(x) ** mp.mpf(p)


def _high_dim_thresholds(k, lam, mu_k, mp=None):
    kf = math.factorial(k)
    lt = _pow(2, (k + 3) / 2, mp) * kf * lam / mu_k
    sqrt3 = _pow(3, 0.5, mp)
    d_min = max(
        sqrt3 * _pow(lt, 1.0 / (k - 1), mp),
        sqrt3 * _pow(12, (3 * k + 1) / (2 * (k + 1)), mp)
        * _pow(lt, 5.0 / (4 * (2 * k - 1)), mp),
    )
    eps_max = min(
        _pow((4 * kf) ** 2 * _pow(lam, k + 1, mp) / mu_k ** 2, 1.0 / (k - 1), mp),
        lam / 8 * _pow(lt, 2.0 / (k - 1), mp),
    )
    return d_min, eps_max, lt


def validate_params(params: InstanceParams, regime: Optional[str] = None,
                    D: Optional[float] = None, eps: Optional[float] = None,
                    precision: str = "f64") -> list[AssumptionViolation]:
    """Check every admissibility inequality of the requested regime.

    Returns the violated inequalities (empty list means admissible).  D and
    eps checks are skipped when those arguments are None.  With
    precision="extended" the thresholds are evaluated at 50 significant
    digits, which matters for the lambda_tilde^(k/(k-1)) style expressions at
    large k.
    """
    for name, v in (("D", D), ("eps", eps)):
        if v is not None and not np.isfinite(v):
            raise InvalidInput(f"{name} must be finite, got {v}")
    regime = regime or params.regime
    mp = None
    if precision == "extended":
        import mpmath

        mp = mpmath.mp
        mp.dps = 50
    elif precision != "f64":
        raise InvalidInput(f"unknown precision {precision!r}")

    k, lam, mu_k, gamma = params.k, params.lam, params.mu_k, params.gamma
    out: list[AssumptionViolation] = []

    def check(name, lhs, rhs, op, relation):
        lhs_f, rhs_f = float(lhs), float(rhs)
        ok = lhs_f > rhs_f if op == ">" else (
            lhs_f < rhs_f if op == "<" else (
                lhs_f >= rhs_f if op == ">=" else lhs_f <= rhs_f))
        if not ok:
            out.append(AssumptionViolation(name, lhs_f, rhs_f, relation))

    if regime == HIGH_DIM:
        d_min, eps_max, lt = _high_dim_thresholds(k, lam, mu_k, mp)
        if D is not None:
            check("initial_distance", D, d_min, ">", "D > distance threshold")
        if eps is not None:
            check("target_accuracy", eps, eps_max, "<", "eps < accuracy threshold")
        gamma_min = max(
            float(_pow(lt, k / (k - 1), mp)),
            float(_pow(12, 2 * k / (k + 1), mp) * _pow(lt, 2 * k / (2 * k - 1), mp)),
        )
        check("gamma_floor", gamma, gamma_min, ">", "gamma > gamma threshold")
        check("chain_len_floor", params.chain_len,
              4 * gamma / float(_pow(lt, k / (k - 1), mp)), ">=",
              "chain_len >= 4*gamma/lambda_tilde^(k/(k-1))")
        check("ambient_dim", params.dim, params.chain_len, ">", "dim > chain_len")
    elif regime == LOW_DIM:
        lt = float(_pow(2, (k + 3) / 2, mp) * math.factorial(k) * lam / mu_k)
        check("gamma_positive", gamma, 0.0, ">", "gamma > 0")
        if D is not None:
            d_min = math.sqrt(1.0 / lt + math.sqrt(2.0) * lt ** -1.5)
            check("initial_distance", D, d_min, ">", "D > distance threshold")
        if eps is not None:
            check("target_accuracy", eps, lam / 32, "<", "eps < lam/32")
        if D is not None:
            d_cap = float(_pow(_pow(D, k - 1, mp) / lt, 2.0 / (3 * k + 1), mp))
            check("dim_cap", params.dim, d_cap, "<=", "dim <= dimension cap")
        check("square_chain", params.dim, params.chain_len, ">=",
              "dim == chain_len")
        check("square_chain_rev", params.chain_len, params.dim, ">=",
              "dim == chain_len")
    else:
        raise InvalidInput(f"unknown regime {regime!r}")
    return out


# ---------------------------------------------------------------------------
# rotation basis
# ---------------------------------------------------------------------------

class RotationBasis:
    """Ordered orthonormal directions v_1..v_T in R^d, committed left to right.

    Commits are single-writer; everything else is read-only.  The identity
    embedding (v_i = e_i) gets a sparse fast path for the factor matrix.
    """

    def __init__(self, chain_len: int, dim: int, kind: str = "generic"):
        if dim < chain_len:
            raise InvalidInput("dim must be >= chain_len")
        self.chain_len = chain_len
        self.dim = dim
        self.kind = kind
        self.vectors = np.zeros((chain_len, dim))
        self.committed_count = 0
        self._diff_cache = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, chain_len: int, dim: int) -> "RotationBasis":
        basis = cls(chain_len, dim, kind="identity")
        basis.vectors[np.arange(chain_len), np.arange(chain_len)] = 1.0
        basis.committed_count = chain_len
        return basis

    @classmethod
    def from_array(cls, vectors) -> "RotationBasis":
        vectors = np.asarray(vectors, dtype=float)
        basis = cls(vectors.shape[0], vectors.shape[1])
        basis.vectors[:] = vectors
        basis.committed_count = vectors.shape[0]
        return basis

    @classmethod
    def random_orthonormal(cls, chain_len: int, dim: int, rng) -> "RotationBasis":
        q, _ = np.linalg.qr(rng.standard_normal((dim, chain_len)))
        return cls.from_array(q.T)

    # -- mutation (single writer) ------------------------------------------

    def commit(self, v):
        if self.committed_count >= self.chain_len:
            raise InvalidInput("all rotation vectors already committed")
        self.vectors[self.committed_count] = v
        self.committed_count += 1
        self._diff_cache = None

    # -- queries -------------------------------------------------------------

    @property
    def is_complete(self) -> bool:
        return self.committed_count == self.chain_len

    def validate(self, ortho_tol: float = 1e-10, norm_tol: float = 1e-12):
        """Raise InvalidInput if committed vectors are not orthonormal."""
        V = self.vectors[: self.committed_count]
        if V.shape[0] == 0:
            return
        norms = np.linalg.norm(V, axis=1)
        if np.max(np.abs(norms - 1.0)) > norm_tol:
            raise InvalidInput("basis vector norm deviates from 1")
        gram = V @ V.T
        off = gram - np.diag(np.diag(gram))
        if off.size and np.max(np.abs(off)) > ortho_tol:
            raise InvalidInput("basis vectors are not pairwise orthogonal")

    def diff_rows(self, count: int):
        """Rows v_i - v_{i+1} for i < count (factor directions).

        Sparse for the identity embedding, dense otherwise.  The full set is
        cached once the basis is complete and small enough.
        """
        if count <= 0:
            d = self.dim
            return sp.csr_matrix((0, d)) if self.kind == "identity" else np.zeros((0, d))
        if self.kind == "identity":
            if self._diff_cache is None:
                n = self.chain_len - 1
                data = np.tile([1.0, -1.0], n)
                indices = np.repeat(np.arange(n), 2) + np.tile([0, 1], n)
                indptr = np.arange(0, 2 * n + 1, 2)
                self._diff_cache = sp.csr_matrix(
                    (data, indices, indptr), shape=(n, self.dim))
            return self._diff_cache[:count]
        full = self.is_complete and count == self.chain_len - 1
        if full and self._diff_cache is not None:
            return self._diff_cache
        rows = self.vectors[:count] - self.vectors[1 : count + 1]
        if full and rows.size <= 2 ** 24:
            self._diff_cache = rows
        return rows


# ---------------------------------------------------------------------------
# derivative bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeBundle:
    """Value, gradient and factored derivative tensors of the rotated objective.

    For each order m in coeffs, the order-m derivative is

        sum_i coeffs[m][i] * factors[i]^(x m)   (+ lam * I when m == 2),

    where factors[i] are the rows of the (possibly sparse) factor matrix.
    Immutable; safe to share between threads.
    """

    value: float
    gradient: np.ndarray
    order: int
    factors: object  # (n_factors, d) ndarray or scipy.sparse matrix
    coeffs: dict = field(default_factory=dict)
    lam: float = 0.0

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]

    @property
    def n_factors(self) -> int:
        return self.factors.shape[0]


def eval_chain(params: InstanceParams, x) -> float:
    """Chain-frame objective value at x (needs len(x) >= chain_len).

    Coordinates beyond chain_len only enter the quadratic term.
    """
    x = np.asarray(x, dtype=float)
    T = params.chain_len
    if x.ndim != 1 or x.shape[0] < T:
        raise InvalidInput(f"x must be a vector with at least {T} coordinates")
    z = x[: T - 1] - x[1:T]
    lt = params.lambda_tilde
    return float(np.sum(g_value(z, params.k)) - params.gamma * x[0]
                 + 0.5 * lt * np.dot(x, x))


def _bundle_from_inner(params, x, inner, v1, rows, order):
    """Assemble a DerivativeBundle given chain inner products and factor rows."""
    k, lam, scale, gamma = params.k, params.lam, params.scale, params.gamma
    gval = float(np.sum(g_value(inner, k)))
    value = scale * (gval - gamma * float(v1 @ x)) + 0.5 * lam * float(x @ x)
    gp = g_derivative(inner, k, 1)
    grad = scale * (rows.T @ gp - gamma * v1) + lam * x
    grad = np.asarray(grad).ravel()
    coeffs = {m: scale * g_derivative(inner, k, m) for m in range(2, order + 1)}
    return DerivativeBundle(value=value, gradient=grad, order=order,
                            factors=rows, coeffs=coeffs,
                            lam=lam if order >= 2 else 0.0)


def eval_rotated(params: InstanceParams, basis: RotationBasis, x,
                 order: Optional[int] = None) -> DerivativeBundle:
    """Evaluate the rotated objective and its derivatives up to `order`.

    With a partially committed basis the result is well defined only when x
    is orthogonal to every uncommitted direction; the checkable part of that
    precondition is <v_c, x> == 0 for the last committed vector v_c, and a
    violation raises InconsistentBasis.  Contributions of chain links whose
    inner product vanishes are identically zero (g^(m)(0) = 0 for m <= k),
    which is what makes lazily committed bases answer consistently.
    """
    order = params.k if order is None else order
    if not 1 <= order <= params.k:
        raise InvalidInput(f"order must lie in 1..{params.k}")
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise InvalidInput(f"x must have shape ({params.dim},)")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("x has non-finite entries")
    c = basis.committed_count
    T = params.chain_len
    if c == 0:
        raise InconsistentBasis("no rotation vector committed yet")

    if basis.kind == "identity":
        inner = x[: T - 1] - x[1:T]
        rows = basis.diff_rows(T - 1)
        return _bundle_from_inner(params, x, inner, basis.vectors[0], rows, order)

    proj = basis.vectors[:c] @ x
    if c < T:
        # last committed vector must not see x, otherwise the term v_c - v_{c+1}
        # would depend on the uncommitted v_{c+1}
        if abs(proj[c - 1]) > _BOUNDARY_TOL * (1.0 + float(np.linalg.norm(x))):
            raise InconsistentBasis(
                "query point overlaps the last committed direction "
                f"(|<v_c, x>| = {abs(proj[c - 1]):.3e})")
    n_rows = c - 1 if c < T else T - 1
    inner = proj[:n_rows] - proj[1 : n_rows + 1]
    rows = basis.diff_rows(n_rows)
    return _bundle_from_inner(params, x, inner, basis.vectors[0], rows, order)


# ---------------------------------------------------------------------------
# tensor plumbing
# ---------------------------------------------------------------------------

def densify_tensor(bundle: DerivativeBundle, order: int,
                   budget: int = 2 ** 26) -> np.ndarray:
    """Materialize the order-m derivative as a dense symmetric array.

    Only for small instances: raises TooLarge when d^order exceeds budget.
    """
    if order not in bundle.coeffs:
        raise InvalidInput(f"order {order} not populated in bundle")
    d = bundle.dim
    if d ** order > budget:
        raise TooLarge(f"dense tensor would need {d ** order} entries")
    coeffs = bundle.coeffs[order]
    rows = bundle.factors
    if sp.issparse(rows):
        rows = rows.toarray()
    out = np.zeros((d,) * order)
    for ci, ri in zip(coeffs, rows):
        if ci == 0.0:
            continue
        t = ri
        for _ in range(order - 1):
            t = np.multiply.outer(t, ri)
        out += ci * t
    if order == 2 and bundle.lam:
        out += bundle.lam * np.eye(d)
    return out


def apply_to_vectors(bundle: DerivativeBundle, order: int, directions):
    """Contract the factored order-m tensor with the given directions.

    Contraction of sum_i c_i r_i^(x m) with j = m - len(directions) slots
    left open costs O(n_factors * d) per direction and never materializes
    d^m entries.  Returns a scalar (j == 0), a vector (j == 1), or a
    (coeffs, factors, lam) triple describing the residual factored j-tensor.
    The identity part of order 2 is contracted alongside.
    """
    if order not in bundle.coeffs:
        raise InvalidInput(f"order {order} not populated in bundle")
    directions = [np.asarray(u, dtype=float) for u in directions]
    if len(directions) > order:
        raise InvalidInput("more directions than tensor slots")
    for u in directions:
        if u.shape != (bundle.dim,):
            raise InvalidInput("direction dimension mismatch")
    j = order - len(directions)
    w = bundle.coeffs[order].copy()
    rows = bundle.factors
    for u in directions:
        w = w * np.asarray(rows @ u).ravel()
    lam = bundle.lam if order == 2 else 0.0
    if j == 0:
        out = float(np.sum(w))
        if lam:
            out += lam * float(directions[0] @ directions[1])
        return out
    if j == 1:
        out = np.asarray(rows.T @ w).ravel()
        if lam:
            out = out + lam * directions[0]
        return out
    return w, rows, lam


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def instance_to_json(params: InstanceParams,
                     basis: Optional[RotationBasis] = None) -> str:
    """Serialize an instance (and optionally its basis, row-major) to JSON."""
    obj = {
        "k": params.k,
        "lambda": params.lam,
        "mu_k": params.mu_k,
        "gamma": params.gamma,
        "chain_len": params.chain_len,
        "dim": params.dim,
        "regime": params.regime,
    }
    if basis is not None:
        obj["basis"] = basis.vectors[: basis.committed_count].ravel().tolist()
    return json.dumps(obj)


def instance_from_json(text: str):
    """Inverse of instance_to_json; returns (params, basis_or_None)."""
    obj = json.loads(text)
    params = InstanceParams(
        k=int(obj["k"]), lam=float(obj["lambda"]), mu_k=float(obj["mu_k"]),
        gamma=float(obj["gamma"]), chain_len=int(obj["chain_len"]),
        dim=int(obj["dim"]), regime=obj.get("regime", HIGH_DIM))
    basis = None
    if "basis" in obj and obj["basis"] is not None:
        flat = np.asarray(obj["basis"], dtype=float)
        rows = flat.size // params.dim
        basis = RotationBasis(params.chain_len, params.dim)
        basis.vectors[:rows] = flat.reshape(rows, params.dim)
        basis.committed_count = rows
    return params, basis
