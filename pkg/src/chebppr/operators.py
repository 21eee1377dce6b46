"""Reference operators R of the generalized PageRank family.

Every variant solves ``(R + mu I) p = mu y``. Supported kinds:

========== ==========================================  ========
kind       operator                                     storage
========== ==========================================  ========
standard   ``L D^-1 = I - P^T``                          sparse
iterated   ``(L D^-1)^m``                                sparse
dual       ``D^-sigma L D^(sigma-1)``                    sparse
gamma      ``L^gamma D_gamma^-1``                        dense
gamma-dual ``D_gamma^-sigma L^gamma D_gamma^(sigma-1)``  dense
recentered ``-C W C`` with ``C = I - 11^T/N``            dense
========== ==========================================  ========

Isolated nodes keep ``R_ii = 1`` in every degree-normalized kind, i.e. they
behave exactly as in ``I - P^T``: an isolated seed retains ``mu/(1+mu)`` of
its mass.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DenseLimitError, SpectralBoundError
from .graph import Graph, transition_transpose_apply, transition_transpose_matrix

log = logging.getLogger(__name__)

KINDS = ("standard", "iterated", "dual", "gamma", "gamma-dual", "recentered")
DENSE_KINDS = frozenset({"gamma", "gamma-dual", "recentered"})
ANALYTIC_KINDS = frozenset({"standard", "iterated"})
LOCAL_KINDS = frozenset({"standard", "iterated", "dual"})

DEFAULT_DENSE_LIMIT = 2000
LAMBDA_INFLATION = 1.01
EIG_CLAMP = 1e-12
LANCZOS_MIN_SIZE = 200


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    lambda_max: float
    gamma: float = 1.0
    sigma: float = 0.0
    m: int = 1
    dense_limit: int = DEFAULT_DENSE_LIMIT
    dense_payload: Optional[np.ndarray] = None

    @property
    def is_dense(self) -> bool:
        return self.kind in DENSE_KINDS

    @property
    def estimated(self) -> bool:
        """True when ``lambda_max`` comes from a power-iteration estimate."""
        return self.kind not in ANALYTIC_KINDS

    @property
    def phi(self) -> float:
        return self.lambda_max / 2.0

    def cache_key(self) -> tuple:
        return ("R", self.kind, self.gamma, self.sigma, self.m)


@dataclass(frozen=True)
class DiffusionParams:
    """Scalar coefficients of the normalized recursion ``p <- rho y + psi S p``."""

    mu: float
    alpha: float
    rho: float
    psi: float
    phi: float
    lambda_max: float


def mu_to_alpha(mu: float) -> float:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return 1.0 / (mu + 1.0)


def alpha_to_mu(alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return (1.0 - alpha) / alpha


def make_diffusion_params(mu: float, lambda_max: float) -> DiffusionParams:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    denom = 2.0 * mu + lambda_max
    rho = 2.0 * mu / denom
    psi = -lambda_max / denom
    return DiffusionParams(mu, mu_to_alpha(mu), rho, psi, lambda_max / 2.0, lambda_max)


# -- matrix construction -----------------------------------------------------


def _scaled_power(values: np.ndarray, exponent: float) -> np.ndarray:
    """``values**exponent`` with 0 mapped to 0 for any exponent."""
    out = np.zeros_like(values, dtype=float)
    nz = values > 0
    out[nz] = values[nz] ** exponent
    return out


def _standard(g: Graph) -> sp.csr_matrix:
    return (sp.identity(g.num_nodes, format="csr") - transition_transpose_matrix(g)).tocsr()


def _dual_scaling(g: Graph, exponent: float) -> np.ndarray:
    # isolated nodes are scaled by 1 so that the dual stays similar to I - P^T
    out = np.ones(g.num_nodes)
    nz = g.degrees > 0
    out[nz] = g.degrees[nz] ** exponent
    return out


def fractional_laplacian(g: Graph, gamma: float) -> np.ndarray:
    """Dense ``L^gamma`` via symmetric eigendecomposition of ``L = D - W``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    key = ("Lgamma", gamma)
    if key not in g._cache:
        lap = np.diag(g.degrees) - g.to_dense()
        evals, evecs = np.linalg.eigh(lap)
        evals = np.where(evals < EIG_CLAMP, 0.0, evals)
        g._cache[key] = (evecs * evals**gamma) @ evecs.T
    return g._cache[key]


def _check_dense(kind: str, g: Graph, dense_limit: int) -> None:
    if g.num_nodes > dense_limit:
        raise DenseLimitError(
            f"operator kind {kind!r} is dense-only; graph has {g.num_nodes} nodes > limit {dense_limit}"
        )


def _build_matrix(kind: str, g: Graph, gamma: float, sigma: float, m: int):
    if kind == "standard":
        return _standard(g)
    if kind == "iterated":
        base = _standard(g)
        out = base
        for _ in range(m - 1):
            out = (out @ base).tocsr()
        out.eliminate_zeros()
        return out
    if kind == "dual":
        left = sp.diags(_dual_scaling(g, -sigma))
        right = sp.diags(_dual_scaling(g, sigma))
        return (left @ _standard(g) @ right).tocsr()
    if kind in ("gamma", "gamma-dual"):
        lg = fractional_laplacian(g, gamma)
        dg = np.diag(lg).copy()
        iso = dg <= EIG_CLAMP
        dg[iso] = 0.0
        s = 0.0 if kind == "gamma" else sigma
        mat = _scaled_power(dg, -s)[:, None] * lg * _scaled_power(dg, s - 1.0)[None, :]
        mat[np.ix_(iso, iso)] = 0.0
        mat[iso, iso] = 1.0
        return mat
    if kind == "recentered":
        w = g.to_dense()
        centered = w - w.mean(axis=0, keepdims=True)
        centered = centered - centered.mean(axis=1, keepdims=True)
        return -centered
    raise ValueError(f"unknown operator kind {kind!r}")


def operator_matrix(spec: OperatorSpec, g: Graph):
    """The matrix of R for graph ``g`` (scipy CSR, or ndarray for dense kinds)."""
    key = spec.cache_key()
    if key not in g._cache:
        if spec.is_dense:
            _check_dense(spec.kind, g, spec.dense_limit)
        g._cache[key] = _build_matrix(spec.kind, g, spec.gamma, spec.sigma, spec.m)
    return g._cache[key]


def symmetric_form(spec: OperatorSpec, g: Graph):
    """A symmetric matrix similar to R (same spectrum), used for bound estimation."""
    if spec.kind in ("standard", "iterated", "dual"):
        half = np.sqrt(g.inv_degrees)
        norm_adj = sp.diags(half) @ g.adjacency @ sp.diags(half)
        base = (sp.identity(g.num_nodes, format="csr") - norm_adj).tocsr()
        if spec.kind != "iterated":
            return base
        out = base
        for _ in range(spec.m - 1):
            out = (out @ base).tocsr()
        return out
    if spec.kind in ("gamma", "gamma-dual"):
        lg = fractional_laplacian(g, spec.gamma)
        dg = np.diag(lg).copy()
        iso = dg <= EIG_CLAMP
        half = _scaled_power(np.where(iso, 0.0, dg), -0.5)
        mat = half[:, None] * lg * half[None, :]
        mat[np.ix_(iso, iso)] = 0.0
        mat[iso, iso] = 1.0
        return mat
    return operator_matrix(spec, g)


def estimate_spectral_radius(matrix, max_iter: int = 200, tol: float = 1e-8) -> float:
    """Power iteration on a symmetric matrix; returns ``||M x||`` at convergence.

    The start vector is the normalized all-ones vector plus ``delta_0``.
    Raises :class:`ConvergenceError` if the estimate has not settled to
    relative change ``tol`` within ``max_iter`` iterations.
    """
    n = matrix.shape[0]
    if n == 0:
        return 0.0
    x = np.full(n, 1.0 / np.sqrt(n))
    x[0] += 1.0
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = matrix @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        if abs(new - est) <= tol * new:
            return new
        est = new
        x = y / new
    raise ConvergenceError(f"power iteration did not reach relative change {tol} in {max_iter} iterations")


def spectral_radius(matrix, max_iter: int = 200, tol: float = 1e-8) -> float:
    """Spectral radius of a symmetric matrix.

    Power iteration first; if it stalls (nearly equal leading magnitudes) the
    radius is computed with Lanczos, or with a full eigensolve for small or
    dense matrices.
    """
    try:
        return estimate_spectral_radius(matrix, max_iter, tol)
    except ConvergenceError as exc:
        log.info("%s; falling back to a Lanczos eigensolve", exc)
    n = matrix.shape[0]
    try:
        if not sp.issparse(matrix) or n <= LANCZOS_MIN_SIZE:
            dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
            return float(np.abs(scipy.linalg.eigvalsh(dense)).max())
        vals = spla.eigsh(matrix, k=1, which="LM", tol=tol, return_eigenvectors=False)
        return float(np.abs(vals).max())
    except (scipy.linalg.LinAlgError, spla.ArpackError) as exc:
        raise ConvergenceError(f"spectral radius could not be computed: {exc}") from exc


def make_operator(
    kind: str,
    g: Graph,
    *,
    gamma: float = 1.0,
    sigma: float = 0.0,
    m: int = 1,
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    max_iter: int = 200,
) -> OperatorSpec:
    """Build an :class:`OperatorSpec` for ``g`` with its spectral radius bound."""
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    if kind == "iterated" and (int(m) != m or m < 1):
        raise ValueError(f"iterated kind needs integer m >= 1, got {m}")
    if kind in ("gamma", "gamma-dual") and not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if kind in DENSE_KINDS:
        _check_dense(kind, g, dense_limit)
    probe = OperatorSpec(kind, 1.0, float(gamma), float(sigma), int(m), dense_limit)
    if kind == "standard":
        lam = 2.0
    elif kind == "iterated":
        lam = 2.0 ** int(m)
    else:
        lam = LAMBDA_INFLATION * spectral_radius(symmetric_form(probe, g), max_iter=max_iter)
        if lam == 0.0:
            # empty graph: every node isolated, R = I
            lam = LAMBDA_INFLATION
    payload = operator_matrix(probe, g) if kind in DENSE_KINDS else None
    return OperatorSpec(kind, lam, float(gamma), float(sigma), int(m), dense_limit, payload)


def check_lambda_max(spec: OperatorSpec, g: Graph, max_iter: int = 200) -> None:
    """Raise :class:`SpectralBoundError` if ``spec.lambda_max`` does not cover ``g``."""
    if not spec.estimated:
        return
    est = spectral_radius(symmetric_form(spec, g), max_iter=max_iter)
    if est > spec.lambda_max:
        raise SpectralBoundError(
            f"spectral radius estimate {est:.6g} on evolved graph exceeds stored bound {spec.lambda_max:.6g}"
        )


def _check_vector(g: Graph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.num_nodes,):
        raise ValueError(f"vector of shape {x.shape} does not match graph with {g.num_nodes} nodes")
    return x


def operator_apply(spec: OperatorSpec, g: Graph, x: np.ndarray) -> np.ndarray:
    """Return ``R x``."""
    x = _check_vector(g, x)
    if spec.kind == "standard":
        return x - transition_transpose_apply(g, x)
    return np.asarray(operator_matrix(spec, g) @ x)


def normalized_apply(spec: OperatorSpec, g: Graph, x: np.ndarray) -> np.ndarray:
    """Return ``S x = (2 / lambda_max) R x - x``."""
    x = _check_vector(g, x)
    return operator_apply(spec, g, x) / spec.phi - x


def changed_nodes(g_old: Graph, g_new: Graph) -> np.ndarray:
    """Endpoints of edges whose weight differs between the two graphs."""
    if g_old.num_nodes != g_new.num_nodes:
        raise ValueError(f"graphs differ in size: {g_old.num_nodes} vs {g_new.num_nodes}")
    diff = (g_new.adjacency - g_old.adjacency).tocoo()
    mask = diff.data != 0
    return np.union1d(diff.row[mask], diff.col[mask]).astype(np.int64)


def affected_rows(spec: OperatorSpec, g_old: Graph, g_new: Graph, touched=None) -> np.ndarray:
    """Rows of R that can differ between ``g_old`` and ``g_new``."""
    nodes = changed_nodes(g_old, g_new) if touched is None else np.asarray(sorted(touched), dtype=np.int64)
    hops = spec.m if spec.kind == "iterated" else 1
    for _ in range(hops):
        nodes = np.union1d(g_old.neighborhood(nodes), g_new.neighborhood(nodes))
    return nodes


def operator_delta_apply(
    spec: OperatorSpec, g_old: Graph, g_new: Graph, x: np.ndarray, touched=None
) -> np.ndarray:
    """Return ``(S_new - S_old) x = (R_new - R_old) x / phi``.

    For sparse kinds only the rows in the vicinity of the changed nodes are
    evaluated, so the result is supported there. Dense kinds are evaluated in
    full.
    """
    if spec.kind == "recentered":
        raise ValueError("the recentered kernel has a global centering term and cannot be updated locally")
    x = _check_vector(g_old, x)
    _check_vector(g_new, x)
    out = np.zeros(g_old.num_nodes)
    if spec.is_dense:
        out[:] = operator_matrix(spec, g_new) @ x - operator_matrix(spec, g_old) @ x
        return out / spec.phi
    rows = affected_rows(spec, g_old, g_new, touched)
    if rows.size == 0:
        return out
    r_new = operator_matrix(spec, g_new)[rows]
    r_old = operator_matrix(spec, g_old)[rows]
    out[rows] = (r_new @ x - r_old @ x) / spec.phi
    return out


def operator_diagonal(spec: OperatorSpec, g: Graph) -> np.ndarray:
    key = ("diag",) + spec.cache_key()
    if key not in g._cache:
        mat = operator_matrix(spec, g)
        g._cache[key] = np.asarray(mat.diagonal() if sp.issparse(mat) else np.diag(mat), dtype=float)
    return g._cache[key]


def fanout(spec: OperatorSpec, g: Graph) -> np.ndarray:
    """Messages a node sends when it transmits its value once.

    For kinds built on the graph's own sparsity this is the number of
    incident edges; otherwise it is the off-diagonal nonzero count of the
    node's column in R.
    """
    if spec.kind in ("standard", "dual"):
        return g.edge_counts
    key = ("fanout",) + spec.cache_key()
    if key not in g._cache:
        mat = operator_matrix(spec, g)
        if sp.issparse(mat):
            off = (mat - sp.diags(mat.diagonal())).tocsc()
            off.eliminate_zeros()
            counts = np.diff(off.indptr)
        else:
            scale = np.abs(mat).max(axis=0, keepdims=True)
            big = np.abs(mat) > 1e-12 * np.where(scale > 0, scale, 1.0)
            np.fill_diagonal(big, False)
            counts = big.sum(axis=0)
        g._cache[key] = np.asarray(counts, dtype=np.int64)
    return g._cache[key]
