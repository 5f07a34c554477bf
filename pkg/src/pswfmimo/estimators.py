"""Pilot-based MIMO channel estimators.

Pilot slot ``i`` observes ``y_i = sqrt(P) w_i^H H v_i + z_i``. Stacking the
slots gives ``y = sqrt(P) B vec(H) + z`` with rows ``v_i^T kron w_i^H`` and
column-stacked ``vec``.

Bandwidths ``W`` are wavenumber bandwidths (band ``[-W/2, W/2]``). An array
with element spacing ``d`` wavelengths sees that band as the discrete band
``|f| <= W d / 2``, so its DPSS and sinc covariances use ``W d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dpss import compute_dpss
from .errors import NumericalFailure

ESTIMATOR_NAMES = (
    "randcomb-mmse",
    "randcomb-amp",
    "bwest-pswf",
    "pswf-mmse-noprior",
    "pswf-mmse-statcsi",
)


def default_bandwidth_grid(size: int = 64) -> np.ndarray:
    return np.arange(1, size + 1) / size


@dataclass(frozen=True)
class PilotDesign:
    """Row ``i`` of ``precoders``/``combiners`` is ``v_i``/``w_i``."""

    precoders: np.ndarray
    combiners: np.ndarray
    power: float = 1.0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.precoders, dtype=complex))
        w = np.atleast_2d(np.asarray(self.combiners, dtype=complex))
        if v.shape[0] != w.shape[0]:
            raise ValueError("precoders and combiners must have the same number of slots")
        for name, m in (("precoders", v), ("combiners", w)):
            if not np.allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-12):
                raise ValueError(f"{name} must have unit norm")
        object.__setattr__(self, "precoders", v)
        object.__setattr__(self, "combiners", w)

    @property
    def n_pilots(self) -> int:
        return self.precoders.shape[0]

    @property
    def n_t(self) -> int:
        return self.precoders.shape[1]

    @property
    def n_r(self) -> int:
        return self.combiners.shape[1]

    def __add__(self, other: "PilotDesign") -> "PilotDesign":
        return PilotDesign(np.vstack([self.precoders, other.precoders]),
                           np.vstack([self.combiners, other.combiners]), self.power)


@dataclass(frozen=True)
class PilotObservation:
    y: np.ndarray
    noise_var: float
    design: PilotDesign

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).ravel()
        if y.shape[0] != self.design.n_pilots:
            raise ValueError("observation length does not match the pilot design")
        object.__setattr__(self, "y", y)

    def __add__(self, other: "PilotObservation") -> "PilotObservation":
        return PilotObservation(np.concatenate([self.y, other.y]), self.noise_var,
                                self.design + other.design)


@dataclass
class EstimationResult:
    h_hat: np.ndarray
    nmse: float | None = None
    metadata: dict = field(default_factory=dict)


def random_unit_vectors(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    z = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_design(rng: np.random.Generator, count: int, n_t: int, n_r: int,
                  power: float = 1.0) -> PilotDesign:
    v = random_unit_vectors(rng, count, n_t)
    w = random_unit_vectors(rng, count, n_r)
    return PilotDesign(v, w, power)


def build_sensing_matrix(design: PilotDesign) -> np.ndarray:
    v, w = design.precoders, design.combiners
    return (v[:, :, None] * w.conj()[:, None, :]).reshape(design.n_pilots, -1)


def unvec(h: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    return np.asarray(h).reshape(n_t, n_r).T


def vec(h: np.ndarray) -> np.ndarray:
    return np.asarray(h).T.ravel()


class PilotChannel:
    """Pilot transmission oracle over a fixed channel.

    Each call consumes the next slots of a pre-drawn unit-variance noise
    stream, so several estimators can share noise slot by slot.
    """

    def __init__(self, h: np.ndarray, power: float, noise_var: float, noise: np.ndarray):
        self.h = np.asarray(h)
        self.power = power
        self.noise_var = noise_var
        self.noise = np.asarray(noise)
        self.slot = 0

    @property
    def n_r(self) -> int:
        return self.h.shape[0]

    @property
    def n_t(self) -> int:
        return self.h.shape[1]

    def __call__(self, design: PilotDesign) -> PilotObservation:
        n = design.n_pilots
        if self.slot + n > len(self.noise):
            raise ValueError("noise stream exhausted")
        z = self.noise[self.slot:self.slot + n]
        self.slot += n
        clean = np.einsum("ir,rt,it->i", design.combiners.conj(), self.h, design.precoders)
        y = math.sqrt(design.power) * clean + math.sqrt(self.noise_var) * z
        return PilotObservation(y, self.noise_var, design)


def _cholesky(m: np.ndarray, what: str):
    try:
        return cho_factor(m, lower=True)
    except LinAlgError:
        pass
    jitter = 1e-12 * max(np.real(np.trace(m)) / m.shape[0], 1.0)
    try:
        return cho_factor(m + jitter * np.eye(m.shape[0]), lower=True)
    except LinAlgError as exc:
        raise NumericalFailure(f"{what} is not positive definite") from exc


def mmse_estimate(obs: PilotObservation, prior_cov) -> EstimationResult:
    """Linear MMSE estimate under ``vec(H) ~ CN(0, prior_cov)``.

    ``prior_cov`` may be ``None`` for the identity.
    """
    d = obs.design
    b = build_sensing_matrix(d)
    p = d.power
    if prior_cov is None:
        cb = b.conj().T
    else:
        cb = np.asarray(prior_cov) @ b.conj().T
    gram = p * (b @ cb) + obs.noise_var * np.eye(d.n_pilots)
    gram = 0.5 * (gram + gram.conj().T)
    if obs.noise_var == 0:
        try:
            factor = cho_factor(gram, lower=True)
        except LinAlgError as exc:
            raise NumericalFailure("noiseless MMSE system is singular") from exc
    else:
        factor = _cholesky(gram, "MMSE system matrix")
    h = math.sqrt(p) * cb @ cho_solve(factor, obs.y)
    return EstimationResult(unvec(h, d.n_r, d.n_t), metadata={"estimator": "mmse"})


def ls_estimate(obs: PilotObservation) -> EstimationResult:
    """Minimum-norm least squares, ``pinv(sqrt(P) B) y``."""
    d = obs.design
    b = math.sqrt(d.power) * build_sensing_matrix(d)
    h, *_ = np.linalg.lstsq(b, obs.y, rcond=None)
    return EstimationResult(unvec(h, d.n_r, d.n_t), metadata={"estimator": "ls"})


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def cs_sensing_matrix(design: PilotDesign) -> np.ndarray:
    """``B (conj(F_t) kron F_r)``: maps the DFT-domain channel to the pilots."""
    f_t = dft_matrix(design.n_t)
    f_r = dft_matrix(design.n_r)
    return build_sensing_matrix(design) @ np.kron(f_t.conj(), f_r)


def _bg_denoise(r, v_r, rho, theta):
    """Posterior mean/variance and activity under a Bernoulli-Gaussian prior."""
    a2 = np.abs(r) ** 2
    total = theta + v_r
    with np.errstate(over="ignore"):
        llr = (math.log(rho / (1 - rho)) + np.log(v_r / total) + a2 * (1 / v_r - 1 / total))
    pi = 0.5 * (1 + np.tanh(0.5 * np.clip(llr, -500, 500)))
    m = theta / total * r
    v = theta * v_r / total
    mean = pi * m
    var = pi * (np.abs(m) ** 2 + v) - np.abs(mean) ** 2
    return mean, np.maximum(var, 0.0), pi, m, v


def amp_estimate(obs: PilotObservation, b_cs: np.ndarray | None = None, n_iter: int = 50,
                 damping: float = 0.7, patience: int = 5, tol: float = 1e-10) -> EstimationResult:
    """Bernoulli-Gaussian AMP in the DFT domain with EM-learned prior.

    This is the vector (VAMP) form: a Bernoulli-Gaussian denoising stage
    alternates with an LMMSE stage built on the SVD of the sensing matrix,
    exchanging extrinsic means and precisions. Unlike the scalar Onsager
    recursion it stays stable for structured (e.g. unitary) sensing
    matrices. ``damping`` is the weight on each new LMMSE message. The
    sparsity rate and active-coefficient variance are re-estimated every
    iteration. If the residual grows ``patience`` times in a row the best
    iterate so far is returned with ``metadata['diverged'] = True``.
    """
    d = obs.design
    if b_cs is None:
        b_cs = cs_sensing_matrix(d)
    a = math.sqrt(d.power) * b_cs
    y = obs.y
    m, n = a.shape
    meta = {"estimator": "amp", "diverged": False, "iterations": 0}
    if not np.any(y):
        return EstimationResult(np.zeros((d.n_r, d.n_t), dtype=complex), metadata=meta)

    energy = float(np.vdot(y, y).real)
    # a tiny floor keeps the LMMSE stage finite for noiseless data
    noise = max(obs.noise_var, 1e-13 * energy / m)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    s2 = s * s
    uy = u.conj().T @ y
    fro2 = float(np.sum(s2))
    rho = min(0.5, m / (2 * n))
    theta = max((energy - m * noise) / (rho * fro2), 1e-12 * energy / fro2)

    r1 = np.zeros(n, dtype=complex)
    g1 = 1.0 / (rho * theta)  # precision of the message into the denoiser
    x = np.zeros(n, dtype=complex)
    best_x, best_res = x, energy
    prev_res, growth = energy, 0
    for it in range(n_iter):
        mean, var, pi, m_c, v_c = _bg_denoise(r1, 1.0 / g1, rho, theta)
        # EM refresh of the prior
        rho = float(np.clip(np.mean(pi), 1e-6, 1 - 1e-6))
        theta = float(max(np.sum(pi * (np.abs(m_c) ** 2 + v_c)) / max(np.sum(pi), 1e-12), 1e-30))
        x_old, x = x, mean
        alpha1 = max(float(np.mean(var)) * g1, 1e-12)
        eta1 = g1 / alpha1
        g2 = max(eta1 - g1, 1e-12 * g1)
        r2 = (eta1 * mean - g1 * r1) / g2

        # LMMSE stage; the null space of ``a`` keeps the prior message
        vr2 = vh @ r2
        gain = 1.0 / (s2 / noise + g2)
        x2 = r2 + vh.conj().T @ (gain * (s * uy / noise + g2 * vr2) - vr2)
        alpha2 = g2 * (float(np.sum(gain)) + (n - len(s)) / g2) / n
        eta2 = g2 / alpha2
        g1_new = max(eta2 - g2, 1e-12 * g2)
        r1_new = (eta2 * x2 - g2 * r2) / g1_new
        r1 = damping * r1_new + (1 - damping) * r1
        g1 = damping * g1_new + (1 - damping) * g1

        res = float(np.linalg.norm(y - a @ x) ** 2)
        meta["iterations"] = it + 1
        if res < best_res:
            best_x, best_res = x.copy(), res
        # wobble at the noise floor is not growth
        growth = growth + 1 if res > prev_res * (1 + 1e-3) else 0
        prev_res = res
        if growth >= patience:
            meta["diverged"] = True
            break
        if it and np.linalg.norm(x - x_old) <= tol * np.linalg.norm(x):
            break
    x = best_x if meta["diverged"] else x
    h_tilde = unvec(x, d.n_r, d.n_t)
    h = dft_matrix(d.n_r) @ h_tilde @ dft_matrix(d.n_t).conj().T
    meta.update(sparsity=rho, active_variance=theta)
    return EstimationResult(h, metadata=meta)


def band_correlation(n: int, bandwidth: float, spacing_wavelengths: float = 0.5) -> np.ndarray:
    """Unit-diagonal spatial correlation ``sinc(W d (m - n))`` of a flat band."""
    k = np.arange(n)
    return np.sinc(bandwidth * spacing_wavelengths * (k[:, None] - k[None, :]))


def bandwidth_log_likelihood(obs: PilotObservation, bandwidth: float,
                             spacing_wavelengths: float = 0.5) -> float:
    """``log p(y | W)`` of the flat-band Kronecker model, constant included."""
    d = obs.design
    s_t = band_correlation(d.n_t, bandwidth, spacing_wavelengths)
    s_r = band_correlation(d.n_r, bandwidth, spacing_wavelengths)
    v, w = d.precoders, d.combiners
    # (v_i^T kron w_i^H)(S_t kron S_r)(v_j^* kron w_j) factorizes per side
    t_part = v @ s_t @ v.conj().T
    r_part = w.conj() @ s_r @ w.T
    cov = d.power * t_part * r_part + obs.noise_var * np.eye(d.n_pilots)
    cov = 0.5 * (cov + cov.conj().T)
    factor = _cholesky(cov, "pilot covariance")
    quad = float(np.real(np.vdot(obs.y, cho_solve(factor, obs.y))))
    logdet = 2.0 * float(np.sum(np.log(np.abs(np.diag(factor[0])))))
    return -quad - logdet - d.n_pilots * math.log(math.pi)


def estimate_bandwidth_map(obs: PilotObservation, w_grid=None, spacing_wavelengths: float = 0.5,
                           log_prior: Callable[[float], float] | None = None) -> float:
    """MAP wavenumber bandwidth over ``w_grid`` (uniform prior by default)."""
    grid = default_bandwidth_grid() if w_grid is None else np.asarray(w_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("bandwidth grid is empty")
    if np.any(grid <= 0) or np.any(grid > 1):
        raise ValueError("bandwidth grid must lie in (0, 1]")
    scores = np.array([bandwidth_log_likelihood(obs, w, spacing_wavelengths) for w in grid])
    if log_prior is not None:
        scores = scores + np.array([log_prior(w) for w in grid])
    return float(grid[int(np.argmax(scores))])


def dpss_design(n_t: int, n_r: int, bandwidth: float, count: int, eps: float = 0.1,
                spacing_wavelengths: float = 0.5, power: float = 1.0, pairing: str = "product",
                rng: np.random.Generator | None = None) -> tuple[PilotDesign, dict]:
    """Precoder/combiner pairs drawn from the admissible DPSS columns.

    ``pairing="product"`` walks the (tx, rx) column pairs by decreasing
    eigenvalue product; ``"random"`` shuffles them. Either way the list is
    cycled when ``count`` exceeds the number of pairs.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    w_disc = bandwidth * spacing_wavelengths
    tx = compute_dpss(n_t, min(w_disc, 1.0))
    rx = compute_dpss(n_r, min(w_disc, 1.0))
    it, ir = tx.admissible(eps), rx.admissible(eps)
    # the leading sequence is always kept so a design exists
    if it.size == 0:
        it = np.array([0])
    if ir.size == 0:
        ir = np.array([0])
    pairs = [(i, j) for i in it for j in ir]
    if pairing == "product":
        pairs.sort(key=lambda ij: -tx.eigenvalues[ij[0]] * rx.eigenvalues[ij[1]])
        chosen = [pairs[k % len(pairs)] for k in range(count)]
    elif pairing == "random":
        if rng is None:
            raise ValueError("random pairing needs a generator")
        chosen = []
        while len(chosen) < count:
            chosen.extend(pairs[k] for k in rng.permutation(len(pairs)))
        chosen = chosen[:count]
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    v = np.array([tx.vectors[:, i] for i, _ in chosen]).reshape(count, n_t)
    w = np.array([rx.vectors[:, j] for _, j in chosen]).reshape(count, n_r)
    meta = {
        "admissible": (int(it.size), int(ir.size)),
        "distinct_pairs": len(pairs),
        "recycled": count > len(pairs),
    }
    return PilotDesign(v, w, power), meta


@dataclass(frozen=True)
class PswfCeConfig:
    n_t: int
    n_r: int
    n_pilots: int
    snr: float
    n_pilots_step1: int | None = None
    eps: float = 0.1
    power: float = 1.0
    spacing_wavelengths: float = 0.5
    w_grid: tuple | None = None
    pairing: str = "product"

    @property
    def step1(self) -> int:
        return self.n_pilots // 4 if self.n_pilots_step1 is None else self.n_pilots_step1


def pswf_ce(channel_access: Callable[[PilotDesign], PilotObservation], config: PswfCeConfig,
            rng: np.random.Generator, bandwidth: float | None = None,
            prior_cov=None, step1_design: PilotDesign | None = None) -> EstimationResult:
    """Two-step PSWF channel estimator.

    Step 1 spends ``config.step1`` random pilots on a MAP bandwidth estimate;
    step 2 sends DPSS pilots at that bandwidth and runs MMSE over all slots.
    Passing ``bandwidth`` skips step 1 and spends every pilot on DPSS.
    ``prior_cov=None`` means the identity prior.
    """
    if not 0 < config.eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {config.eps}")
    meta = {"estimator": "pswf-ce"}
    obs = None
    if bandwidth is None:
        n1 = config.step1
        if not 0 < n1 < config.n_pilots:
            raise ValueError("step-1 pilots must satisfy 0 < N_P1 < N_P")
        if step1_design is None:
            step1_design = random_design(rng, n1, config.n_t, config.n_r, config.power)
        obs = channel_access(step1_design)
        grid = None if config.w_grid is None else np.asarray(config.w_grid)
        bandwidth = estimate_bandwidth_map(obs, grid, config.spacing_wavelengths)
        remaining = config.n_pilots - n1
    else:
        remaining = config.n_pilots
    meta["w_hat"] = bandwidth
    design, dmeta = dpss_design(config.n_t, config.n_r, bandwidth, remaining, config.eps,
                                config.spacing_wavelengths, config.power, config.pairing, rng)
    meta.update(dmeta)
    obs2 = channel_access(design)
    obs = obs2 if obs is None else obs + obs2
    result = mmse_estimate(obs, prior_cov)
    result.metadata = meta
    return result


def nmse(truth, estimate) -> float:
    h = np.asarray(getattr(truth, "h", truth))
    e = np.asarray(getattr(estimate, "h", getattr(estimate, "h_hat", estimate)))
    if h.shape != e.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {e.shape}")
    den = np.linalg.norm(h) ** 2
    if den == 0:
        raise ValueError("true channel has zero energy")
    return float(np.linalg.norm(h - e) ** 2 / den)
