"""Prolate spheroidal wave functions by a Legendre spectral method.

The differential operator ``d/dx (1-x^2) d/dx - c^2 x^2`` is diagonalised in
the orthonormal Legendre basis, where it becomes a symmetric penta-diagonal
matrix that splits into two tridiagonal blocks (even and odd degrees). The
concentration eigenvalues ``gamma`` are then obtained from the finite Fourier
transform eigenvalue of ``psi_0`` and a ratio recursion between neighbouring
modes.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import NumericalFailure
from .special import QuadratureRule, gauss_legendre_rule, legendre_values

GAMMA_FLOOR = 1e-14
TRACE_RTOL = 1e-6
_GAMMA_CEIL = float(np.nextafter(1.0, 0.0))


class TraceIdentityWarning(UserWarning):
    """Computed eigenvalues do not sum to 2c/pi; quadrature or truncation too coarse."""


@dataclass(frozen=True)
class SpectralMatrix:
    """Truncated Legendre-basis matrix of the prolate differential operator.

    Only the main diagonal and the second off-diagonal are nonzero.
    """

    order: int
    diag: np.ndarray
    offdiag2: np.ndarray  # entry (n, n+2), n = 0 .. order-2

    def dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        idx = np.arange(self.order - 2)
        a[idx, idx + 2] = self.offdiag2
        a[idx + 2, idx] = self.offdiag2
        return a


@dataclass(frozen=True)
class PswfBasis:
    """PSWF eigen-system on ``interval`` with bandwidth ``omega``.

    ``beta[:, n]`` holds the Legendre coefficients of the standardized
    ``psi_n`` on [-1, 1]; ``chi`` is ascending and ``gamma`` (when filled)
    descending.
    """

    c: float
    n_max: int
    beta: np.ndarray
    chi: np.ndarray
    gamma: np.ndarray | None = None
    interval: tuple[float, float] = (-1.0, 1.0)
    omega: float | None = None

    @property
    def n_modes(self) -> int:
        return self.beta.shape[1]

    def standard_coordinate(self, t) -> np.ndarray:
        a, b = self.interval
        return (2.0 * np.asarray(t, dtype=float) - a - b) / (b - a)

    @property
    def amplitude(self) -> float:
        a, b = self.interval
        return math.sqrt(2.0 / (b - a))

    def values(self, t, modes=None, derivative: bool = False) -> np.ndarray:
        """All requested modes at points ``t``; shape ``t.shape + (n_modes,)``."""
        a, b = self.interval
        t = np.asarray(t, dtype=float)
        slack = 1e-12 * (b - a)
        if np.any(t < a - slack) or np.any(t > b + slack):
            raise ValueError(f"evaluation points outside the basis interval {self.interval}")
        x = np.clip(self.standard_coordinate(t), -1.0, 1.0)
        p, dp = legendre_values(self.n_max, x)
        beta = self.beta if modes is None else self.beta[:, modes]
        out = (dp if derivative else p) @ beta
        scale = self.amplitude
        if derivative:
            scale *= 2.0 / (b - a)
        return scale * out


def default_nmax(c: float) -> int:
    return max(64, math.ceil(2 * c) + 40)


def build_spectral_matrix(c: float, n_max: int) -> SpectralMatrix:
    if c < 0:
        raise ValueError(f"band parameter c must be non-negative, got {c}")
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    n = np.arange(n_max + 1, dtype=float)
    c2 = c * c
    diag = n * (n + 1) + c2 * (2 * n * (n + 1) - 1) / ((2 * n + 3) * (2 * n - 1))
    m = n[:-2]
    off = c2 * (m + 2) * (m + 1) / ((2 * m + 3) * np.sqrt((2 * m + 1) * (2 * m + 5)))
    return SpectralMatrix(n_max + 1, diag, off)


def solve_pswf_eigensystem(c: float, n_max: int | None = None) -> PswfBasis:
    """Legendre coefficients and operator eigenvalues of the standard PSWFs.

    Modes are ordered by ascending ``chi``, which is descending concentration.
    """
    if n_max is None:
        n_max = default_nmax(c)
    mat = build_spectral_matrix(c, n_max)
    size = n_max + 1
    beta = np.zeros((size, size))
    chis = []
    cols = []
    for parity in (0, 1):
        idx = np.arange(parity, size, 2)
        d = mat.diag[idx]
        e = mat.offdiag2[idx[:-1]]
        try:
            w, v = eigh_tridiagonal(d, e)
        except LinAlgError as exc:
            raise NumericalFailure(
                f"tridiagonal eigensolver failed for c={c}, n_max={n_max}, parity={parity}"
            ) from exc
        for j in range(len(w)):
            col = np.zeros(size)
            col[idx] = v[:, j]
            chis.append(w[j])
            cols.append(col)
    order = np.argsort(chis, kind="stable")
    chi = np.asarray(chis)[order]
    for out, j in enumerate(order):
        col = cols[j]
        big = np.abs(col) > 1e-10 * np.max(np.abs(col))
        if col[np.argmax(big)] < 0:
            col = -col
        beta[:, out] = col
    return PswfBasis(c=float(c), n_max=n_max, beta=beta, chi=chi)


def evaluate_pswf(basis: PswfBasis, ell: int, x) -> np.ndarray | float:
    if not 0 <= ell < basis.n_modes:
        raise ValueError(f"mode index {ell} outside 0..{basis.n_modes - 1}")
    out = basis.values(x, modes=[ell])[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def finite_fourier_transform(basis: PswfBasis, ell: int, x, quad: QuadratureRule) -> np.ndarray:
    """``(F_c psi)(x) = int_{-1}^{1} exp(i c x y) psi(y) dy`` by quadrature."""
    x = np.asarray(x, dtype=float)
    p, _ = legendre_values(basis.n_max, quad.nodes)
    psi = p @ basis.beta[:, ell]
    kernel = np.exp(1j * basis.c * np.multiply.outer(x, quad.nodes))
    return kernel @ (quad.weights * psi)


def compute_prolate_eigenvalues(basis: PswfBasis, quad: QuadratureRule | None = None) -> np.ndarray:
    """Concentration eigenvalues ``gamma_l`` of a standardized basis.

    ``mu_0`` is the quadrature inner product ``<psi_0, F_c psi_0>``; the
    remaining ``|mu_l|`` follow from ``|mu_l/mu_{l-1}|^2 = |a/b|`` with
    ``a = <psi_l, psi'_{l-1}>`` and ``b = <psi'_l, psi_{l-1}>``. Finally
    ``gamma = c |mu|^2 / (2 pi)``.
    """
    c = basis.c
    if quad is None:
        quad = gauss_legendre_rule(2 * basis.n_max)
    n = basis.n_modes
    if c == 0:
        return np.full(n, GAMMA_FLOOR)
    p, dp = legendre_values(basis.n_max, quad.nodes)
    psi = p @ basis.beta
    dpsi = dp @ basis.beta
    wts = quad.weights

    ft0 = np.exp(1j * c * np.outer(quad.nodes, quad.nodes)) @ (wts * psi[:, 0])
    mu0 = np.dot(wts * psi[:, 0], ft0)
    # log-magnitudes avoid underflow deep in the tail
    log_mu = np.empty(n)
    log_mu[0] = math.log(abs(mu0))
    for ell in range(1, n):
        a = np.dot(wts, psi[:, ell] * dpsi[:, ell - 1])
        b = np.dot(wts, dpsi[:, ell] * psi[:, ell - 1])
        if abs(b) < 1e-300:
            raise NumericalFailure(
                f"derivative inner product vanished at mode {ell} (c={c}); ratio undefined"
            )
        if a == 0.0:
            log_mu[ell:] = -np.inf
            break
        log_mu[ell] = log_mu[ell - 1] + 0.5 * math.log(abs(a / b))
    with np.errstate(under="ignore"):
        gamma = c / (2 * math.pi) * np.exp(2 * log_mu)
    gamma = np.clip(gamma, GAMMA_FLOOR, _GAMMA_CEIL)
    # the recursion is unreliable once the tail has underflowed
    gamma = np.minimum.accumulate(gamma)
    target = 2 * c / math.pi
    total = float(np.sum(gamma[gamma > GAMMA_FLOOR]))
    if abs(total - target) > TRACE_RTOL * target:
        warnings.warn(
            f"sum of prolate eigenvalues {total:.10g} differs from 2c/pi = {target:.10g}; "
            f"increase n_max (now {basis.n_max}) or the quadrature order",
            TraceIdentityWarning,
            stacklevel=2,
        )
    return gamma


def rescale_to_interval(
    omega: float,
    a: float,
    b: float,
    n_max: int | None = None,
    quad: QuadratureRule | None = None,
) -> PswfBasis:
    """Full PSWF basis for the pair ([a, b], [-omega/2, omega/2])."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    c = math.pi * omega * (b - a) / 2
    basis = solve_pswf_eigensystem(c, n_max)
    gamma = compute_prolate_eigenvalues(basis, quad)
    return replace(basis, gamma=gamma, interval=(float(a), float(b)), omega=float(omega))


def write_basis_csv(basis: PswfBasis, eigen_path, samples_path=None, n_samples: int = 201,
                    n_functions: int | None = None) -> None:
    """Dump ``ell, chi, gamma`` and optionally sampled eigenfunctions."""
    with open(eigen_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ell", "chi", "gamma"])
        gamma = basis.gamma if basis.gamma is not None else np.full(basis.n_modes, np.nan)
        for ell in range(basis.n_modes):
            w.writerow([ell, repr(float(basis.chi[ell])), repr(float(gamma[ell]))])
    if samples_path is None:
        return
    L = basis.n_modes if n_functions is None else min(n_functions, basis.n_modes)
    a, b = basis.interval
    t = np.linspace(a, b, n_samples)
    vals = basis.values(t, modes=list(range(L)))
    with open(samples_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"psi_{k}" for k in range(L)])
        for i, ti in enumerate(t):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in vals[i]])
