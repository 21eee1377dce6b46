"""Chebyshev approximation of ``h(R) = mu (R + mu I)^-1`` and message accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import scipy.fft

from .graph import Graph
from .operators import OperatorSpec, fanout, normalized_apply, operator_diagonal


@dataclass(frozen=True)
class ChebyCoefficients:
    """Coefficients ``c_0..c_K`` of ``h(x) = mu / (x + mu)`` on ``[0, lambda_max]``.

    The series convention is ``h ~ c_0/2 + sum_{t>=1} c_t T_t``.
    """

    K: int
    c: np.ndarray
    phi: float
    mu: float
    lambda_max: float


@dataclass
class MessageLedger:
    """Per-round message counts of a simulated synchronous computation."""

    rounds: list[int] = field(default_factory=list)
    tau: float = 0.0

    def record(self, count: int) -> None:
        count = int(count)
        if count < 0:
            raise ValueError("message counts are nonnegative")
        self.rounds.append(count)

    @property
    def total(self) -> int:
        return sum(self.rounds)

    def extend(self, other: "MessageLedger") -> None:
        self.rounds.extend(other.rounds)


def quadrature_nodes(K: int) -> int:
    return max(1024, 8 * K)


def compute_coefficients(mu: float, lambda_max: float, K: int) -> ChebyCoefficients:
    """Chebyshev coefficients by Gauss-Chebyshev quadrature (a type-II DCT).

    ``c_t = (2/Q) sum_q cos(t theta_q) h(phi (cos theta_q + 1))`` with
    ``theta_q = pi (q + 1/2) / Q``.
    """
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if not mu > 0 or not lambda_max > 0:
        raise ValueError("mu and lambda_max must be positive")
    phi = lambda_max / 2.0
    q = quadrature_nodes(K)
    theta = np.pi * (np.arange(q) + 0.5) / q
    samples = mu / (phi * (np.cos(theta) + 1.0) + mu)
    # scipy's unnormalized DCT-II is 2 * sum_q x_q cos(pi t (2q + 1) / (2Q))
    c = scipy.fft.dct(samples, type=2)[: K + 1] / q
    return ChebyCoefficients(int(K), c, phi, float(mu), float(lambda_max))


def ledger_messages_for_round(g: Graph, active_support) -> int:
    """Sum of incident-edge counts over the active nodes."""
    idx = np.asarray(list(active_support) if not isinstance(active_support, np.ndarray) else active_support)
    if idx.size == 0:
        return 0
    return int(g.edge_counts[idx.astype(np.int64)].sum())


def _round_messages(counts: np.ndarray, x: np.ndarray, tau: float) -> int:
    return int(counts[np.abs(x) > tau].sum())


def _transmit_apply(spec: OperatorSpec, g: Graph, x: np.ndarray, tau: float) -> np.ndarray:
    """``S x`` where entries at or below ``tau`` are not sent to neighbors.

    A silent node still applies its own diagonal term of R locally.
    """
    if tau <= 0:
        return normalized_apply(spec, g, x)
    silent = np.where(np.abs(x) > tau, 0.0, x)
    sent = x - silent
    rx = spec.phi * (normalized_apply(spec, g, sent) + sent) + operator_diagonal(spec, g) * silent
    return rx / spec.phi - x


def chebyshev_iterates(
    g: Graph,
    spec: OperatorSpec,
    coeffs: ChebyCoefficients,
    y: np.ndarray,
    ledger: Optional[MessageLedger] = None,
    tau: float = 0.0,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(t, f^(t))`` for ``t = 0..K``: the partial sums of the series.

    Round ``t`` transmits ``T_{t-1} y``; a node is active in that round iff its
    entry exceeds ``tau`` in magnitude, and then sends one message per fan-out
    edge. With ``tau > 0`` entries below the threshold are withheld from
    neighbors, which makes the result approximate. The yielded arrays are
    fresh copies.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (g.num_nodes,):
        raise ValueError(f"vector of shape {y.shape} does not match graph with {g.num_nodes} nodes")
    if not np.isclose(coeffs.lambda_max, spec.lambda_max, rtol=1e-15, atol=0):
        raise ValueError(
            f"coefficients built for lambda_max={coeffs.lambda_max}, operator has {spec.lambda_max}"
        )
    counts = fanout(spec, g)
    c = coeffs.c
    acc = 0.5 * c[0] * y
    yield 0, acc.copy()
    if coeffs.K == 0:
        return
    if ledger is not None:
        ledger.record(_round_messages(counts, y, tau))
    prev, cur = y, _transmit_apply(spec, g, y, tau)
    acc += c[1] * cur
    yield 1, acc.copy()
    for t in range(2, coeffs.K + 1):
        if ledger is not None:
            ledger.record(_round_messages(counts, cur, tau))
        prev, cur = cur, 2.0 * _transmit_apply(spec, g, cur, tau) - prev
        acc += c[t] * cur
        yield t, acc.copy()


def cheby_apply(
    g: Graph,
    spec: OperatorSpec,
    coeffs: ChebyCoefficients,
    y: np.ndarray,
    ledger: Optional[MessageLedger] = None,
    tau: float = 0.0,
) -> np.ndarray:
    """Approximate ``h(R) y`` with the order-``K`` truncated Chebyshev series."""
    out = None
    for _, out in chebyshev_iterates(g, spec, coeffs, y, ledger, tau):
        pass
    return out
