"""From-scratch solves, the local Chebyshev update and the baseline updaters.

All solvers target ``pr = mu (R + mu I)^-1 y``. For the standard operator
with ``alpha = 1 / (mu + 1)`` this is the PageRank fixed point
``pr = (1 - alpha) y + alpha P^T pr``.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chebyshev import MessageLedger, cheby_apply, chebyshev_iterates, compute_coefficients
from .errors import ConvergenceError, DenseLimitError, NumericalError
from .graph import Graph, transition_transpose_apply, transition_transpose_matrix
from .operators import (
    DiffusionParams,
    OperatorSpec,
    affected_rows,
    check_lambda_max,
    fanout,
    make_diffusion_params,
    normalized_apply,
    operator_delta_apply,
    operator_matrix,
)

log = logging.getLogger(__name__)


@dataclass
class UpdateResult:
    scores: np.ndarray
    residual_support_size: int
    ledger: MessageLedger
    residual: Optional[np.ndarray] = None


def _dense_system(spec: OperatorSpec, g: Graph, mu: float) -> np.ndarray:
    mat = operator_matrix(spec, g)
    dense = mat.toarray() if sp.issparse(mat) else np.array(mat, dtype=float)
    dense[np.diag_indices_from(dense)] += mu
    return dense


def dense_oracle(g: Graph, spec: OperatorSpec, mu: float, y: np.ndarray, dense_limit: Optional[int] = None) -> np.ndarray:
    """Solve ``(R + mu I) p = mu y`` by dense LU factorization."""
    limit = spec.dense_limit if dense_limit is None else dense_limit
    if g.num_nodes > limit:
        raise DenseLimitError(f"dense oracle limited to {limit} nodes, graph has {g.num_nodes}")
    y = np.asarray(y, dtype=float)
    try:
        return scipy.linalg.solve(_dense_system(spec, g, mu), mu * y)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"dense factorization failed: {exc}") from exc


def sparse_reference(g: Graph, spec: OperatorSpec, mu: float, y: np.ndarray) -> np.ndarray:
    """Direct sparse solve of the same system; dense kinds fall back to the oracle."""
    if spec.is_dense:
        return dense_oracle(g, spec, mu, y)
    key = ("splu", spec.cache_key(), float(mu))
    lu = g._cache.get(key)
    if lu is None:
        system = (operator_matrix(spec, g) + mu * sp.identity(g.num_nodes, format="csr")).tocsc()
        # the sparsity pattern is symmetric, so order on A^T + A
        lu = spla.splu(system, permc_spec="MMD_AT_PLUS_A")
        g._cache[key] = lu
    return lu.solve(mu * np.asarray(y, dtype=float))


def solve_scratch(
    g: Graph,
    spec: OperatorSpec,
    mu: float,
    y: np.ndarray,
    K: int,
    ledger: Optional[MessageLedger] = None,
    tau: float = 0.0,
) -> np.ndarray:
    coeffs = compute_coefficients(mu, spec.lambda_max, K)
    return cheby_apply(g, spec, coeffs, y, ledger, tau)


def scratch_iterates(g, spec, mu, y, K_max, ledger=None, tau=0.0) -> Iterator[tuple[int, np.ndarray]]:
    coeffs = compute_coefficients(mu, spec.lambda_max, K_max)
    yield from chebyshev_iterates(g, spec, coeffs, y, ledger, tau)


def compute_residual(
    spec: OperatorSpec,
    g_old: Graph,
    g_new: Graph,
    params: DiffusionParams,
    pr_old: np.ndarray,
    touched=None,
) -> np.ndarray:
    """``r = psi (S_new - S_old) pr_old``, supported near the changed nodes."""
    return params.psi * operator_delta_apply(spec, g_old, g_new, pr_old, touched)


def update_iterates(
    g_old: Graph,
    g_new: Graph,
    spec: OperatorSpec,
    mu: float,
    pr_old: np.ndarray,
    K_max: int,
    ledger: Optional[MessageLedger] = None,
    tau: float = 0.0,
    touched=None,
    check_bound: bool = True,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(K, pr_old + h_K(R_new) r / rho)`` for ``K = 0..K_max``."""
    if check_bound:
        check_lambda_max(spec, g_new)
    params = make_diffusion_params(mu, spec.lambda_max)
    r = compute_residual(spec, g_old, g_new, params, pr_old, touched)
    coeffs = compute_coefficients(mu, spec.lambda_max, K_max)
    for k, diffused in chebyshev_iterates(g_new, spec, coeffs, r, ledger, tau):
        yield k, pr_old + diffused / params.rho


def update_local(
    g_old: Graph,
    g_new: Graph,
    spec: OperatorSpec,
    mu: float,
    pr_old: np.ndarray,
    K: int,
    ledger: Optional[MessageLedger] = None,
    tau: float = 0.0,
    touched=None,
    check_bound: bool = True,
) -> UpdateResult:
    """Update ``pr_old`` (solution on ``g_old``) to the solution on ``g_new``.

    The residual is diffused on ``g_new`` with an order-``K`` Chebyshev
    series; only those diffusion rounds are charged to the ledger.
    """
    if check_bound:
        check_lambda_max(spec, g_new)
    ledger = MessageLedger(tau=tau) if ledger is None else ledger
    params = make_diffusion_params(mu, spec.lambda_max)
    r = compute_residual(spec, g_old, g_new, params, pr_old, touched)
    coeffs = compute_coefficients(mu, spec.lambda_max, K)
    diffused = cheby_apply(g_new, spec, coeffs, r, ledger, tau)
    scores = pr_old + diffused / params.rho
    return UpdateResult(scores, int(np.count_nonzero(r)), ledger, r)


def warm_restart_power(
    g_new: Graph,
    spec: OperatorSpec,
    params: DiffusionParams,
    y: np.ndarray,
    p0: np.ndarray,
    T: int,
    ledger: Optional[MessageLedger] = None,
) -> np.ndarray:
    """Run ``p <- rho y + psi S p`` for ``T`` steps starting from ``p0``."""
    p = None
    for _, p in power_iterates(g_new, spec, params, y, p0, T, ledger):
        pass
    return p


def power_iterates(g, spec, params, y, p0, T, ledger=None) -> Iterator[tuple[int, np.ndarray]]:
    if T < 0:
        raise ValueError("T must be nonnegative")
    counts = fanout(spec, g)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    yield 0, p.copy()
    for t in range(1, T + 1):
        if ledger is not None:
            ledger.record(int(counts[p != 0].sum()))
        p = params.rho * y + params.psi * normalized_apply(spec, g, p)
        yield t, p.copy()


# -- random walk with restart (warm-restart power iteration) ------------------


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def rwr_residual(g_old: Graph, g_new: Graph, alpha: float, pr_old: np.ndarray, touched=None) -> np.ndarray:
    """``alpha (P_new^T - P_old^T) pr_old`` evaluated on the affected rows only."""
    rows = affected_rows(OperatorSpec("standard", 2.0), g_old, g_new, touched)
    out = np.zeros(g_old.num_nodes)
    if rows.size:
        new = transition_transpose_matrix(g_new)[rows] @ pr_old
        old = transition_transpose_matrix(g_old)[rows] @ pr_old
        out[rows] = alpha * (new - old)
    return out


def rwr_iterates(
    g_old: Graph,
    g_new: Graph,
    alpha: float,
    pr_old: np.ndarray,
    T: int,
    ledger: Optional[MessageLedger] = None,
    touched=None,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(t, pr_old + q_t / (1 - alpha))`` where ``q_t`` is the inner power iterate."""
    _check_alpha(alpha)
    r = rwr_residual(g_old, g_new, alpha, pr_old, touched)
    counts = g_new.edge_counts
    q = r.copy()
    yield 0, pr_old + q / (1.0 - alpha)
    for t in range(1, T + 1):
        if ledger is not None:
            ledger.record(int(counts[q != 0].sum()))
        q = (1.0 - alpha) * r + alpha * transition_transpose_apply(g_new, q)
        yield t, pr_old + q / (1.0 - alpha)


def rwr_update(
    g_old: Graph,
    g_new: Graph,
    alpha: float,
    pr_old: np.ndarray,
    target: Optional[float] = None,
    T: Optional[int] = None,
    ledger: Optional[MessageLedger] = None,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Warm-restart RWR update.

    With ``T`` a fixed number of inner iterations is run. With ``target`` the
    iteration stops once the successive-iterate change drops below
    ``target / 10`` relative to ``||pr_old||``.
    """
    if (target is None) == (T is None):
        raise ValueError("give exactly one of target or T")
    if T is not None:
        out = None
        for _, out in rwr_iterates(g_old, g_new, alpha, pr_old, T, ledger):
            pass
        return out
    scale = float(np.linalg.norm(pr_old)) or 1.0
    prev = None
    for t, est in rwr_iterates(g_old, g_new, alpha, pr_old, max_iter, ledger):
        if prev is not None and np.linalg.norm(est - prev) < 0.1 * target * scale:
            return est
        prev = est
    raise ConvergenceError(f"RWR update did not reach change {target / 10} in {max_iter} iterations")


# -- push (Gauss-Southwell) ---------------------------------------------------


@dataclass
class PushState:
    """Approximation ``p``, residual ``r`` and bookkeeping of the push method."""

    p: np.ndarray
    r: np.ndarray
    epsilon: float
    pushes: int = 0
    messages: int = 0


class PushSolver:
    """Gauss-Southwell pushes on ``g`` with damping ``alpha``.

    Each push picks the node with the largest ``|r_u|`` (ties: smallest id),
    moves ``r_u`` into ``p`` and spreads ``alpha r_u P^T delta_u`` over the
    residual. The selection order does not depend on the threshold, so a
    solver can be resumed with a smaller ``epsilon``.
    """

    def __init__(self, g: Graph, alpha: float, p0: np.ndarray, r0: np.ndarray):
        _check_alpha(alpha)
        self.g = g
        self.alpha = float(alpha)
        self._p = [float(v) for v in p0]
        self._r = [float(v) for v in r0]
        adj = g.adjacency
        self._indptr = adj.indptr.tolist()
        self._indices = adj.indices.tolist()
        self._data = adj.data.tolist()
        self._inv_deg = g.inv_degrees.tolist()
        self._counts = g.edge_counts.tolist()
        self._heap = [(-abs(v), u) for u, v in enumerate(self._r) if v != 0.0]
        heapq.heapify(self._heap)
        self.pushes = 0
        self.messages = 0
        self.epsilon = float("inf")

    def state(self) -> PushState:
        return PushState(np.array(self._p), np.array(self._r), self.epsilon, self.pushes, self.messages)

    def run(
        self,
        epsilon: float,
        max_pushes: int = 10**8,
        ledger: Optional[MessageLedger] = None,
        callback: Optional[Callable[[PushState], None]] = None,
        every: int = 10,
    ) -> np.ndarray:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)
        heap, r, p = self._heap, self._r, self._p
        indptr, indices, data = self._indptr, self._indices, self._data
        inv_deg, counts, alpha = self._inv_deg, self._counts, self.alpha
        pop, push = heapq.heappop, heapq.heappush
        while heap:
            key, u = heap[0]
            if -key != abs(r[u]):
                pop(heap)
                continue
            if -key < epsilon:
                break
            if self.pushes >= max_pushes:
                raise ConvergenceError(f"push exceeded {max_pushes} pushes before reaching epsilon={epsilon}")
            pop(heap)
            ru = r[u]
            p[u] += ru
            r[u] = 0.0
            scale = alpha * ru * inv_deg[u]
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                r[v] += scale * data[j]
                push(heap, (-abs(r[v]), v))
            self.pushes += 1
            self.messages += counts[u]
            if ledger is not None:
                ledger.record(counts[u])
            if callback is not None and self.pushes % every == 0:
                callback(self.state())
        return np.array(p)


def push_update(
    g_old: Graph,
    g_new: Graph,
    alpha: float,
    pr_old: np.ndarray,
    epsilon: float,
    ledger: Optional[MessageLedger] = None,
    max_pushes: int = 10**8,
    callback: Optional[Callable[[PushState], None]] = None,
) -> np.ndarray:
    """Push-based update started from ``p = pr_old`` and the RWR residual."""
    solver = make_push_solver(g_old, g_new, alpha, pr_old)
    return solver.run(epsilon, max_pushes, ledger, callback)


def make_push_solver(g_old: Graph, g_new: Graph, alpha: float, pr_old: np.ndarray, touched=None) -> PushSolver:
    r0 = rwr_residual(g_old, g_new, alpha, pr_old, touched)
    return PushSolver(g_new, alpha, pr_old, r0)
