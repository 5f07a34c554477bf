"""Wavenumber-domain bandlimited Gaussian channels and their discrete matrices.

The spectrum ``h~(beta, alpha)`` lives on ``support_r x support_t`` with
covariance ``sigma2/(G_t G_r) sinc((a-a')/G_t) sinc((b-b')/G_r)``. It is
sampled through a Karhunen-Loeve expansion in the PSWFs of each support,
so a realization is ``sigma * Phi_r sqrt(lam_r) G sqrt(lam_t) Phi_t^T`` with
an i.i.d. complex Gaussian mode matrix ``G``.

Array positions are stored in meters and divided by the wavelength inside
every transform.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pswf import rescale_to_interval

KL_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ChannelSpec:
    support_t: tuple[float, float]
    support_r: tuple[float, float]
    gamma_t: float
    gamma_r: float
    sigma2: float = 1.0
    grid_k: int = 1024

    def __post_init__(self):
        for name in ("support_t", "support_r"):
            a, b = getattr(self, name)
            if not -1 <= a < b <= 1:
                raise ValueError(f"{name} must be an interval inside [-1, 1], got {(a, b)}")
            object.__setattr__(self, name, (float(a), float(b)))
        for name in ("gamma_t", "gamma_r"):
            g = getattr(self, name)
            if not 0 < g <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {g}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        k = self.grid_k
        if k < 64 or k & (k - 1):
            raise ValueError(f"grid_k must be a power of two >= 64, got {k}")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array centered at the origin; lengths in meters."""

    n_elems: int
    spacing: float
    element_size: float
    wavelength: float

    def __post_init__(self):
        if self.n_elems < 1:
            raise ValueError("an array needs at least one element")
        if self.spacing <= 0 or self.wavelength <= 0 or self.element_size <= 0:
            raise ValueError("spacing, element size and wavelength must be positive")

    @classmethod
    def from_aperture(cls, aperture: float, spacing: float, wavelength: float,
                      element_size: float | None = None) -> "ArrayGeometry":
        n = max(1, round(aperture / spacing))
        return cls(n, spacing, spacing if element_size is None else element_size, wavelength)

    @property
    def positions(self) -> np.ndarray:
        m = np.arange(1, self.n_elems + 1)
        return (m - (self.n_elems + 1) / 2) * self.spacing

    @property
    def aperture(self) -> float:
        return self.n_elems * self.spacing

    @property
    def spacing_wavelengths(self) -> float:
        return self.spacing / self.wavelength


@dataclass(frozen=True)
class WavenumberField:
    spec: ChannelSpec
    grid: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class ChannelMatrix:
    h: np.ndarray
    tx_geom: ArrayGeometry
    rx_geom: ArrayGeometry
    provenance: str


def wavenumber_grid(k: int) -> np.ndarray:
    """Midpoints of ``k`` equal cells covering [-1, 1] (spacing ``2/k``)."""
    return -1.0 + (2.0 * np.arange(k) + 1.0) / k


@dataclass(frozen=True)
class KlSide:
    """PSWF modes of one side sampled on the support part of the grid."""

    index: np.ndarray  # grid indices inside the support
    eigenvalues: np.ndarray
    modes: np.ndarray  # (len(index), n_modes), orthonormal on the support


@lru_cache(maxsize=64)
def kl_side(support: tuple[float, float], gamma: float, grid_k: int) -> KlSide:
    a, b = support
    basis = rescale_to_interval(1.0 / gamma, a, b)
    keep = np.flatnonzero(basis.gamma >= KL_THRESHOLD)
    grid = wavenumber_grid(grid_k)
    index = np.flatnonzero((grid >= a) & (grid <= b))
    modes = basis.values(grid[index], modes=keep)
    return KlSide(index, basis.gamma[keep], modes)


def kl_sides(spec: ChannelSpec) -> tuple[KlSide, KlSide]:
    """(receive side, transmit side)."""
    return (kl_side(spec.support_r, spec.gamma_r, spec.grid_k),
            kl_side(spec.support_t, spec.gamma_t, spec.grid_k))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def draw_mode_coefficients(spec: ChannelSpec, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    side_r, side_t = kl_sides(spec)
    return _complex_normal(rng, (len(side_r.eigenvalues), len(side_t.eigenvalues)))


def field_from_modes(spec: ChannelSpec, g: np.ndarray) -> WavenumberField:
    side_r, side_t = kl_sides(spec)
    left = side_r.modes * np.sqrt(side_r.eigenvalues)
    right = side_t.modes * np.sqrt(side_t.eigenvalues)
    k = spec.grid_k
    values = np.zeros((k, k), dtype=complex)
    values[np.ix_(side_r.index, side_t.index)] = math.sqrt(spec.sigma2) * (left @ g @ right.T)
    return WavenumberField(spec, wavenumber_grid(k), values)


def generate_wavenumber_field(spec: ChannelSpec, seed) -> WavenumberField:
    """One realization of the bandlimited spectrum on the ``grid_k`` grid.

    ``seed`` is anything ``numpy.random.default_rng`` accepts. The mode
    coefficients do not depend on ``grid_k``, so the same seed on a finer grid
    samples the same continuous field.
    """
    return field_from_modes(spec, draw_mode_coefficients(spec, seed))


def steering_dictionary(geom: ArrayGeometry, grid) -> np.ndarray:
    """Columns ``exp(i 2 pi theta_k q_m / lambda)`` over element positions ``q_m``."""
    q = geom.positions / geom.wavelength
    return np.exp(2j * np.pi * np.outer(q, np.asarray(grid, dtype=float)))


def _support_block(field: WavenumberField):
    side_r, side_t = kl_sides(field.spec)
    return side_r.index, side_t.index, field.values[np.ix_(side_r.index, side_t.index)]


def synthesize_channel_matrix(field: WavenumberField, tx: ArrayGeometry,
                              rx: ArrayGeometry) -> ChannelMatrix:
    """``sqrt(D_t D_r) (2/K)^2 D_r H~ D_t^H`` with steering dictionaries ``D``."""
    if tx.wavelength != rx.wavelength:
        raise ValueError("transmit and receive arrays must share the wavelength")
    if field.values.shape != (len(field.grid), len(field.grid)):
        raise ValueError("field values do not match its grid")
    ir, it, block = _support_block(field)
    k = len(field.grid)
    d_r = steering_dictionary(rx, field.grid[ir])
    d_t = steering_dictionary(tx, field.grid[it])
    scale = math.sqrt(tx.spacing * rx.spacing) * (2.0 / k) ** 2
    h = scale * (d_r @ block @ d_t.conj().T)
    return ChannelMatrix(h, tx, rx, "dictionary")


def spatial_channel(field: WavenumberField, q, p) -> np.ndarray:
    """Inverse transform ``h(q, p)`` at positions given in wavelengths (Riemann sum)."""
    ir, it, block = _support_block(field)
    k = len(field.grid)
    e_r = np.exp(2j * np.pi * np.outer(np.asarray(q, dtype=float), field.grid[ir]))
    e_t = np.exp(2j * np.pi * np.outer(np.asarray(p, dtype=float), field.grid[it]))
    return (2.0 / k) ** 2 * (e_r @ block @ e_t.T)


def element_gain(geom: ArrayGeometry) -> float:
    return min(geom.element_size / geom.wavelength, 0.5)


def segmented_discretization(field: WavenumberField, tx: ArrayGeometry,
                             rx: ArrayGeometry) -> ChannelMatrix:
    """``H[m, n] = min(delta/lambda, 1/2) h(q_m, p_n)`` for segmented arrays."""
    for geom in (tx, rx):
        if geom.element_size > geom.spacing * (1 + 1e-12):
            raise ValueError("element size must not exceed the spacing")
    if tx.element_size != rx.element_size:
        raise ValueError("both arrays must use the same element size")
    h = element_gain(rx) * spatial_channel(
        field, rx.positions / rx.wavelength, tx.positions / tx.wavelength)
    return ChannelMatrix(h, tx, rx, "segmented")


@dataclass(frozen=True)
class ArrayFactors:
    """Linear map from the KL mode matrix ``G`` to ``H = A_r G A_t^T``."""

    a_r: np.ndarray
    a_t: np.ndarray

    def channel(self, g: np.ndarray) -> np.ndarray:
        return self.a_r @ g @ self.a_t.T

    def expected_energy(self) -> float:
        return float(np.linalg.norm(self.a_r) ** 2 * np.linalg.norm(self.a_t) ** 2)

    def covariance(self) -> np.ndarray:
        """Covariance of ``vec(H)`` (column stacking)."""
        return np.kron(self.a_t @ self.a_t.conj().T, self.a_r @ self.a_r.conj().T)


def dictionary_factors(spec: ChannelSpec, tx: ArrayGeometry, rx: ArrayGeometry,
                       normalize: bool = True) -> ArrayFactors:
    """Factors of the dictionary synthesis path.

    With ``normalize`` the scale is set so ``E ||H||_F^2 = N_t N_r``.
    """
    side_r, side_t = kl_sides(spec)
    grid = wavenumber_grid(spec.grid_k)
    d_r = steering_dictionary(rx, grid[side_r.index])
    d_t = steering_dictionary(tx, grid[side_t.index])
    a_r = d_r @ (side_r.modes * np.sqrt(side_r.eigenvalues))
    a_t = d_t.conj() @ (side_t.modes * np.sqrt(side_t.eigenvalues))
    scale = math.sqrt(spec.sigma2 * tx.spacing * rx.spacing) * (2.0 / spec.grid_k) ** 2
    factors = ArrayFactors(scale * a_r, a_t)
    if normalize:
        s = math.sqrt(tx.n_elems * rx.n_elems / factors.expected_energy())
        factors = ArrayFactors(s * factors.a_r, factors.a_t)
    return factors


def segmented_factors(spec: ChannelSpec, tx: ArrayGeometry, rx: ArrayGeometry) -> ArrayFactors:
    """Factors with ``channel(G)`` equal to the segmented discretization of the field
    built from ``G``; avoids materializing the ``K x K`` field."""
    if tx.element_size != rx.element_size:
        raise ValueError("both arrays must use the same element size")
    side_r, side_t = kl_sides(spec)
    grid = wavenumber_grid(spec.grid_k)
    # same e^{+i} kernel as spatial_channel
    e_r = steering_dictionary(rx, grid[side_r.index])
    e_t = steering_dictionary(tx, grid[side_t.index])
    scale = element_gain(rx) * math.sqrt(spec.sigma2) * (2.0 / spec.grid_k) ** 2
    a_r = scale * e_r @ (side_r.modes * np.sqrt(side_r.eigenvalues))
    a_t = e_t @ (side_t.modes * np.sqrt(side_t.eigenvalues))
    return ArrayFactors(a_r, a_t)


def write_channel_csv(ch: ChannelMatrix, path) -> None:
    """Row-major ``re, im`` pairs, one matrix row per line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in ch.h:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def read_channel_csv(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return rows[:, 0::2] + 1j * rows[:, 1::2]


def save_channel(ch: ChannelMatrix, path) -> None:
    np.save(path, ch.h)
