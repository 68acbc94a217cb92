"""Resisting oracle: answers k-th order queries while fixing the rotation lazily.

Each query x^t is logged, one fresh rotation vector v_t is committed
orthogonal to every logged query and every earlier v, and the response is
evaluated as if all uncommitted directions were zero.  That answer is exact
for the eventually finalized objective: every chain link touching an
uncommitted direction sees a zero inner product, and all derivatives of the
power kernel vanish at zero.  Any deterministic algorithm therefore reveals
at most one hidden direction per oracle call, which is what the closed-form
query floors in `lower_bound` quantify.

The duel runner drives an arbitrary algorithm against this oracle, then
finalizes and replays every logged query against the committed instance to
obtain true gaps, distances, and the per-query certificates
(lam/2) * <v_t, x*>^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (AlreadyFinalized, DimensionExhausted, InvalidInput,
                     QueryBudgetExceeded)
from .minimizer import MinimizerSolution, pull_back, solve_chain_minimizer
from .model import (HIGH_DIM, LOW_DIM, DerivativeBundle, InstanceParams,
                    RotationBasis, eval_chain, eval_rotated, select_gamma)

__all__ = [
    "AdversaryState",
    "LowerBoundReport",
    "DuelResult",
    "make_adversary",
    "lower_bound",
    "run_duel",
    "write_transcript",
]

_NOVELTY_TOL = 1e-12   # query component below this adds no new direction
_REDRAW_TOL = 1e-8     # random draw too close to the spanned subspace


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

class AdversaryState:
    """Mutable duel state: query log, partially committed basis, span tracker.

    Single-writer (the duel loop).  `span` is an orthonormal basis of
    span(queries) + span(committed vectors); commits draw a seeded random
    vector, sweep it twice through modified Gram-Schmidt against the span,
    and normalize.
    """

    def __init__(self, params: InstanceParams, max_queries: int, seed: int,
                 mode: Optional[str] = None):
        self.params = params
        self.mode = mode or params.regime
        self.max_queries = int(max_queries)
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(self.rng_seed)
        if self.mode == HIGH_DIM:
            need = params.chain_len + self.max_queries
            if params.dim < need:
                raise InvalidInput(
                    f"dim {params.dim} < chain_len + max_queries = {need}; "
                    "orthogonal directions may run out")
        self.basis = RotationBasis(params.chain_len, params.dim)
        self.queries: list[np.ndarray] = []
        self.finalized = False
        self.solution: Optional[MinimizerSolution] = None
        self.x_star: Optional[np.ndarray] = None
        self._span = np.zeros((min(params.dim,
                                   params.chain_len + self.max_queries + 2),
                               params.dim))
        self._span_size = 0

    # -- span bookkeeping ----------------------------------------------------

    def _project_out(self, v: np.ndarray) -> np.ndarray:
        w = self._span[: self._span_size]
        if self._span_size:
            v = v - w.T @ (w @ v)
            v = v - w.T @ (w @ v)  # second MGS pass for orthogonality at scale
        return v

    def _span_append(self, unit: np.ndarray):
        if self._span_size >= self._span.shape[0]:
            raise DimensionExhausted("span tracker capacity exceeded")
        self._span[self._span_size] = unit
        self._span_size += 1

    def _note_query(self, x: np.ndarray):
        nrm = float(np.linalg.norm(x))
        if nrm == 0.0:
            return
        resid = self._project_out(x.copy())
        rn = float(np.linalg.norm(resid))
        if rn > _NOVELTY_TOL * nrm:
            self._span_append(resid / rn)

    def _commit_next(self):
        if self._span_size >= self.params.dim:
            raise DimensionExhausted(
                f"span fills all {self.params.dim} dimensions; "
                "no orthogonal direction left for a new rotation vector")
        for _ in range(64):
            draw = self.rng.standard_normal(self.params.dim)
            resid = self._project_out(draw)
            rn = float(np.linalg.norm(resid))
            if rn > _REDRAW_TOL:
                unit = resid / rn
                self.basis.commit(unit)
                self._span_append(unit)
                return
        raise DimensionExhausted("64 redraws failed to leave the spanned subspace")

    # -- oracle interface ------------------------------------------------------

    def answer_query(self, x, order: Optional[int] = None) -> DerivativeBundle:
        """Log the query, commit one fresh direction, answer consistently."""
        if self.finalized:
            raise AlreadyFinalized("oracle already finalized")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.params.dim,):
            raise InvalidInput(f"query must have shape ({self.params.dim},)")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("query has non-finite entries")
        if len(self.queries) >= self.max_queries:
            raise QueryBudgetExceeded(f"duel budget of {self.max_queries} spent")
        self.queries.append(x.copy())
        self._note_query(x)
        if not self.basis.is_complete:
            self._commit_next()
        return eval_rotated(self.params, self.basis, x, order)

    def finalize(self, materialize: Optional[bool] = None):
        """Commit any remaining directions, solve for x*, freeze the state.

        Returns (basis, x_star).  With materialize=False the uncommitted
        tail of the basis is left open and x_star is None; gaps, distances
        and certificates stay exactly computable because every logged query
        is orthogonal to the uncommitted span.  materialize=None picks
        automatically by basis size.
        """
        if self.finalized:
            raise AlreadyFinalized("oracle already finalized")
        if materialize is None:
            materialize = self.params.chain_len * self.params.dim <= 2 ** 25
        if materialize:
            while not self.basis.is_complete:
                self._commit_next()
        self.solution = solve_chain_minimizer(self.params)
        if self.basis.is_complete:
            self.x_star = pull_back(self.solution, self.basis)
        self.finalized = True
        return self.basis, self.x_star

    # -- finalized-instance geometry ------------------------------------------

    def f_star(self) -> float:
        """Objective value at the hidden minimizer (rotation invariant)."""
        if self.solution is None:
            raise InvalidInput("finalize first")
        return self.params.scale * eval_chain(self.params, self.solution.x_star)

    def replay_value(self, x) -> float:
        """Objective value of the committed instance at a logged query point."""
        return eval_rotated(self.params, self.basis, x, order=1).value

    def query_geometry(self, x):
        """(value, distance to x*) for a logged query, without materializing."""
        val = self.replay_value(x)
        c = self.basis.committed_count
        xs = self.solution.x_star
        inner = float((self.basis.vectors[:c] @ x) @ xs[:c])
        dist_sq = float(x @ x) - 2.0 * inner + float(xs @ xs)
        return val, math.sqrt(max(dist_sq, 0.0))


def make_adversary(k: int, lam: float, mu_k: float, D: float, max_queries: int,
                   seed: int, regime: str = HIGH_DIM, eps: Optional[float] = None,
                   dim: Optional[int] = None, chain_cap: int = 2 ** 17,
                   ) -> AdversaryState:
    """Build a duel-ready adversary from complexity parameters.

    High-dim: gamma from select_gamma, chain length at the admissibility
    floor ceil(4*gamma / lambda_tilde^(k/(k-1))), ambient dimension
    chain_len + max_queries + 8.  Low-dim: gamma = 1 and dim == chain_len
    (pass dim explicitly).
    """
    if regime == HIGH_DIM:
        gamma = select_gamma(k, lam, mu_k, D)
        lt = math.factorial(k) * 2 ** ((k + 3) / 2) * lam / mu_k
        chain_len = int(math.ceil(4.0 * gamma / lt ** (k / (k - 1.0))))
        chain_len = max(chain_len, 2)
        if chain_len > chain_cap:
            raise InvalidInput(f"chain length {chain_len} exceeds cap {chain_cap}")
        params = InstanceParams(k=k, lam=lam, mu_k=mu_k, gamma=gamma,
                                chain_len=chain_len,
                                dim=chain_len + max_queries + 8, regime=HIGH_DIM)
    elif regime == LOW_DIM:
        if dim is None:
            raise InvalidInput("low-dim adversary needs an explicit dim")
        params = InstanceParams(k=k, lam=lam, mu_k=mu_k, gamma=1.0,
                                chain_len=dim, dim=dim, regime=LOW_DIM)
    else:
        raise InvalidInput(f"unknown regime {regime!r}")
    return AdversaryState(params, max_queries=max_queries, seed=seed, mode=regime)


# ---------------------------------------------------------------------------
# closed-form query floors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundReport:
    """Query floor for the instance: polynomial and doubly-log terms."""

    t_lower_poly: float
    t_lower_loglog: float
    t_lower: float
    eps_admissible: bool


def lower_bound(params: InstanceParams, D: float, eps: float,
                mode: Optional[str] = None) -> LowerBoundReport:
    """Evaluate the closed-form query floors for the given accuracy.

    High-dim: max of gamma^((k-1)/2k) / (12 sqrt(lambda_tilde)) and
    log_k log_6(...) - 1; the admissibility flag mirrors the strict
    accuracy threshold.  Low-dim: dim/10, with eps <= gamma^(2/k) lam / 32.
    Inadmissible eps is reported in the flag, never thrown.
    """
    mode = mode or params.regime
    k, lam, mu_k, gamma = params.k, params.lam, params.mu_k, params.gamma
    lt = params.lambda_tilde
    if mode == LOW_DIM:
        admissible = eps <= gamma ** (2.0 / k) * lam / 32.0
        t = params.dim / 10.0
        return LowerBoundReport(0.0, 0.0, t, admissible)

    poly = gamma ** ((k - 1.0) / (2.0 * k)) / (12.0 * math.sqrt(lt))
    log_arg = (2.0 ** (2.0 / (k - 1)) * math.factorial(k) ** (1.0 / (k - 1))
               * lam ** ((k + 1.0) / (2.0 * (k - 1)))
               / (mu_k ** (1.0 / (k - 1)) * math.sqrt(eps)))
    inner = math.log(log_arg, 6.0) if log_arg > 0 else -math.inf
    loglog = math.log(inner, k) - 1.0 if inner > 0 else -math.inf
    eps_cap = min(
        2.0 ** (4.0 / (k - 1)) * math.factorial(k) ** (2.0 / (k - 1))
        * lam ** ((k + 1.0) / (k - 1)) / mu_k ** (2.0 / (k - 1)),
        lam * gamma ** (2.0 / k) / 8.0,
    )
    return LowerBoundReport(poly, loglog, max(poly, loglog), eps < eps_cap)


# ---------------------------------------------------------------------------
# duels
# ---------------------------------------------------------------------------

@dataclass
class DuelResult:
    """Replay of one duel against the finalized instance."""

    records: list = field(default_factory=list)  # per query: t, cert, gap, dist
    first_success_T: Optional[int] = None
    n_queries: int = 0
    f_star: float = 0.0
    solution: Optional[MinimizerSolution] = None
    x_star: Optional[np.ndarray] = None
    queries: Optional[list] = None


def run_duel(state: AdversaryState, algorithm: Callable, eps: float,
             max_iters: Optional[int] = None,
             materialize: Optional[bool] = None,
             keep_queries: bool = False) -> DuelResult:
    """Drive `algorithm` against the resisting oracle, finalize, replay.

    `algorithm(query, dim)` receives a query callback returning derivative
    bundles; the callback raises QueryBudgetExceeded once max_iters oracle
    calls are spent (the paper-model cost: every call counts).  Gaps are
    only defined post hoc, so the runner finalizes afterwards and replays
    every logged query to record (certificate, true gap, distance) triples
    and the first query index whose gap reaches eps.
    """
    if max_iters is not None:
        state.max_queries = min(state.max_queries, int(max_iters))

    def query(x, order=None):
        return state.answer_query(x, order)

    try:
        algorithm(query, state.params.dim)
    except QueryBudgetExceeded:
        pass
    state.finalize(materialize=materialize)
    sol = state.solution
    lam = state.params.lam
    f_star = state.f_star()

    result = DuelResult(n_queries=len(state.queries), f_star=f_star,
                        solution=sol, x_star=state.x_star,
                        queries=list(state.queries) if keep_queries else None)
    xs = sol.x_star
    for i, q in enumerate(state.queries):
        t = i + 1
        val, dist = state.query_geometry(q)
        gap = val - f_star
        cert = 0.5 * lam * float(xs[i]) ** 2 if i < state.params.chain_len else 0.0
        result.records.append(
            {"t": t, "certificate": cert, "true_gap": gap, "dist": dist})
        if result.first_success_T is None and gap <= eps:
            result.first_success_T = t
    return result


def write_transcript(result: DuelResult, path):
    """One JSON line per query: {t, query, gap_certificate, true_gap}."""
    if result.queries is None:
        raise InvalidInput("duel was run without keep_queries=True")
    with open(path, "w") as fh:
        for rec, q in zip(result.records, result.queries):
            fh.write(json.dumps({
                "t": rec["t"],
                "query": q.tolist(),
                "gap_certificate": rec["certificate"],
                "true_gap": rec["true_gap"],
            }))
            fh.write("\n")
