"""Legendre polynomials, Gauss-Legendre quadrature and the normalized sinc.

Everything here works on the standard interval [-1, 1]; callers rescale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# above this order the monomial table is numerically useless
_MONOMIAL_MAX_ORDER = 30


@dataclass(frozen=True)
class PolynomialTable:
    """Monomial coefficients of the orthonormal Legendre polynomials.

    Row ``n`` of ``coeffs`` holds ``c_0 .. c_max_order`` such that
    ``Pbar_n(x) = sum_k c_k x**k`` with ``Pbar_n = sqrt(n + 1/2) P_n``.
    """

    max_order: int
    coeffs: np.ndarray

    def derivative(self) -> np.ndarray:
        """Monomial coefficients of ``Pbar_n'`` (same layout as ``coeffs``)."""
        k = np.arange(1, self.max_order + 1)
        out = np.zeros_like(self.coeffs)
        out[:, :-1] = self.coeffs[:, 1:] * k
        return out

    def __call__(self, x, derivative: bool = False) -> np.ndarray:
        """Evaluate every row at ``x``; returns shape ``x.shape + (max_order+1,)``.

        High orders are evaluated by the three-term recursion instead of the
        monomial coefficients.
        """
        x = np.asarray(x, dtype=float)
        if self.max_order > _MONOMIAL_MAX_ORDER:
            vals, ders = legendre_values(self.max_order, x)
            return ders if derivative else vals
        coeffs = self.derivative() if derivative else self.coeffs
        powers = x[..., None] ** np.arange(self.max_order + 1)
        return powers @ coeffs.T


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return np.dot(self.weights, values)

    def scaled(self, a: float, b: float) -> "QuadratureRule":
        """Affine copy of the rule on [a, b]."""
        half = 0.5 * (b - a)
        return QuadratureRule(half * self.nodes + 0.5 * (a + b), half * self.weights)


def legendre_table(max_order: int) -> PolynomialTable:
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    p = np.zeros((max_order + 1, max_order + 1))
    p[0, 0] = 1.0
    p[1, 1] = 1.0
    for n in range(1, max_order):
        p[n + 1, 1:] = (2 * n + 1) / (n + 1) * p[n, :-1]
        p[n + 1] -= n / (n + 1) * p[n - 1]
    norms = np.sqrt(np.arange(max_order + 1) + 0.5)
    return PolynomialTable(max_order, p * norms[:, None])


def legendre_values(max_order: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Legendre values and first derivatives by recursion.

    Returns two arrays of shape ``x.shape + (max_order+1,)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.empty(x.shape + (max_order + 1,))
    dp = np.empty_like(p)
    p[..., 0] = 1.0
    dp[..., 0] = 0.0
    if max_order >= 1:
        p[..., 1] = x
        dp[..., 1] = 1.0
    for n in range(1, max_order):
        p[..., n + 1] = ((2 * n + 1) * x * p[..., n] - n * p[..., n - 1]) / (n + 1)
        # P'_{n+1} = P'_{n-1} + (2n+1) P_n
        dp[..., n + 1] = dp[..., n - 1] + (2 * n + 1) * p[..., n]
    norms = np.sqrt(np.arange(max_order + 1) + 0.5)
    return p * norms, dp * norms


def gauss_legendre_rule(n_nodes: int, tol: float = 1e-14, maxiter: int = 100) -> QuadratureRule:
    """Gauss-Legendre nodes and weights on [-1, 1].

    Newton iteration on P_n started from Chebyshev-like guesses; only the
    non-negative half is solved and mirrored.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    n = n_nodes
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(maxiter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(1, n):
            p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
        # derivative of P_n from P_n and P_{n-1}
        dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else np.ones_like(x)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    # one more pass so the weights use the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else np.ones_like(x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    if n % 2:
        x[-1] = 0.0  # exact middle node
    nodes = np.concatenate([-x, x[::-1][n % 2:]])
    weights = np.concatenate([w, w[::-1][n % 2:]])
    return QuadratureRule(nodes, weights)


def sinc(x):
    """Normalized sinc, ``sin(pi x) / (pi x)`` with ``sinc(0) = 1``."""
    if np.isscalar(x):
        if x == 0:
            return 1.0
        return math.sin(math.pi * x) / (math.pi * x)
    return np.sinc(x)
