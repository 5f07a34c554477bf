"""MIMO capacity, epsilon-DoF, spectral dominance and the PSWF ergodic bound.

SNR is the only free parameter: total power is 1 and the noise variance is
``1/snr``. Capacities are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pswf import rescale_to_interval

SPEED_OF_LIGHT = 299_792_458.0
_CONTRACTION_SLACK = 1e-12


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray
    total: float
    water_level: float


@dataclass(frozen=True)
class CapacityResult:
    capacity_nats: float
    allocation: PowerAllocation
    singular_values: np.ndarray

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats * math.log2(math.e)


def waterfill_capacity(singular_values, snr: float) -> CapacityResult:
    """Water-filling capacity over parallel modes with gains ``sigma_i^2``.

    The water level comes from the closed form on each candidate active set,
    taken over modes sorted by decreasing gain.
    """
    if snr <= 0:
        raise ValueError(f"snr must be positive, got {snr}")
    s = np.asarray(singular_values, dtype=float).ravel()
    if np.any(s < 0):
        raise ValueError("singular values must be non-negative")
    noise = 1.0 / snr
    powers = np.zeros_like(s)
    gains = s * s
    positive = np.flatnonzero(gains > 0)
    if positive.size == 0:
        return CapacityResult(0.0, PowerAllocation(powers, 0.0, 0.0), s)
    order = positive[np.argsort(-gains[positive], kind="stable")]
    floors = noise / gains[order]  # ascending
    csum = np.cumsum(floors)
    k = np.arange(1, len(order) + 1)
    levels = (1.0 + csum) / k
    # largest active set whose weakest mode still sits under the water
    above = np.flatnonzero(levels > floors)
    # the strongest mode is always active, even when 1 + floor rounds to floor
    active = above[-1] + 1 if above.size else 1
    level = levels[active - 1]
    powers[order[:active]] = level - floors[:active]
    # level - floor cancels badly when the floors are large; spread the
    # rounding residual evenly, which keeps the KKT form intact
    fix = (1.0 - powers.sum()) / active
    powers[order[:active]] += fix
    level += fix
    if powers.sum() > 1.0:
        powers /= powers.sum()
    cap = float(np.sum(np.log1p(gains[order[:active]] * powers[order[:active]] / noise)))
    return CapacityResult(cap, PowerAllocation(powers, float(powers.sum()), float(level)), s)


def equipower_rate(h, snr: float) -> float:
    """``log det(I + snr/N_t H H^H)`` in nats."""
    if snr <= 0:
        raise ValueError(f"snr must be positive, got {snr}")
    h = np.asarray(getattr(h, "h", h))
    n_t = h.shape[1]
    s = np.linalg.svd(h, compute_uv=False)
    return float(np.sum(np.log1p(snr / n_t * s * s)))


def epsilon_dof(singular_values, eps: float) -> int:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return int(np.count_nonzero(np.asarray(singular_values) >= eps))


def check_spectral_dominance(a, p, q, atol: float = 1e-10) -> bool:
    """True iff every singular value of ``q @ a @ p`` is at most that of ``a``.

    ``p`` and ``q`` must be contractions (spectral norm at most one).
    """
    a = np.asarray(a)
    p = np.asarray(p)
    q = np.asarray(q)
    for name, m in (("p", p), ("q", q)):
        if m.size and np.linalg.norm(m, 2) > 1 + _CONTRACTION_SLACK:
            raise ValueError(f"{name} is not a contraction (norm {np.linalg.norm(m, 2):.6g})")
    sa = np.linalg.svd(a, compute_uv=False)
    sc = np.linalg.svd(q @ a @ p, compute_uv=False)
    n = min(len(sa), len(sc))
    # extra singular values of the product beyond rank(a) must vanish
    return bool(np.all(sc[:n] <= sa[:n] + atol) and np.all(sc[n:] <= atol))


def wavelength(freq_hz: float) -> float:
    return SPEED_OF_LIGHT / freq_hz


def bound_bandwidth(gamma: float, aperture_wavelengths: float) -> float:
    return min(aperture_wavelengths, 1.0 / gamma)


@lru_cache(maxsize=256)
def _prolate_spectrum(omega: float, a: float, b: float) -> np.ndarray:
    return rescale_to_interval(omega, a, b).gamma


def pswf_capacity_bound(support, gamma: float, aperture_wavelengths: float, snr: float,
                        tol: float = 1e-9) -> float:
    """Ergodic capacity bound ``sum_l log(1 + snr gamma_l)`` in nats.

    The prolate eigenvalues belong to ``support`` with bandwidth
    ``min(aperture_wavelengths, 1/gamma)``. Summation stops once
    ``snr`` times the remaining eigenvalue mass drops below ``tol``.
    """
    a, b = support
    if not -1 <= a < b <= 1:
        raise ValueError(f"support must be an interval inside [-1, 1], got {support}")
    if gamma <= 0 or aperture_wavelengths <= 0 or snr <= 0:
        raise ValueError("gamma, aperture and snr must be positive")
    omega = bound_bandwidth(gamma, aperture_wavelengths)
    spec = _prolate_spectrum(float(omega), float(a), float(b))
    remaining = omega * (b - a)  # 2c/pi
    total = 0.0
    for g in spec:
        if snr * remaining < tol:
            break
        total += math.log1p(snr * g)
        remaining -= g
    return total
