import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import complex_gaussian_logpdf
from pswfmimo.capacity import wavelength
from pswfmimo.channel import ArrayGeometry, ChannelSpec, dictionary_factors, kl_sides
from pswfmimo.errors import NumericalFailure
from pswfmimo.estimators import (ESTIMATOR_NAMES, PilotChannel, PilotDesign, PilotObservation,
                                 PswfCeConfig, amp_estimate, band_correlation,
                                 bandwidth_log_likelihood, build_sensing_matrix,
                                 cs_sensing_matrix, default_bandwidth_grid, dft_matrix,
                                 dpss_design, estimate_bandwidth_map, ls_estimate,
                                 mmse_estimate, nmse, pswf_ce, random_design, unvec, vec)

LAM = wavelength(3.5e9)
SPEC = ChannelSpec((-0.15, 0.15), (-0.15, 0.15), 0.05, 0.05)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


@pytest.fixture(scope="module")
def ce_factors():
    g = ArrayGeometry(12, LAM / 2, LAM / 2, LAM)
    return dictionary_factors(SPEC, g, g)


def draw_channel(factors, rng):
    side_r, side_t = kl_sides(SPEC)
    return factors.channel(cn(rng, len(side_r.eigenvalues), len(side_t.eigenvalues)))


# pilot designs and sensing -----------------------------------------------------

def test_design_requires_unit_norm():
    with pytest.raises(ValueError):
        PilotDesign(np.ones((2, 3)), np.ones((2, 2)) / math.sqrt(2))
    with pytest.raises(ValueError):
        PilotDesign(np.eye(3)[:2], np.eye(2)[:1])


def test_sensing_matrix_shape_and_rows():
    rng = np.random.default_rng(0)
    d = random_design(rng, 7, 4, 3)
    b = build_sensing_matrix(d)
    assert b.shape == (7, 12)
    np.testing.assert_allclose(np.linalg.norm(b, axis=1), 1.0)
    np.testing.assert_array_equal(build_sensing_matrix(PilotDesign([[1.0]], [[1.0]])), [[1.0]])


def test_sensing_matrix_reproduces_pilot_model():
    rng = np.random.default_rng(1)
    h = cn(rng, 3, 4)
    d = random_design(rng, 6, 4, 3, power=2.5)
    obs = PilotChannel(h, 2.5, 0.0, np.zeros(6))(d)
    np.testing.assert_allclose(obs.y, math.sqrt(2.5) * build_sensing_matrix(d) @ vec(h), atol=1e-13)
    np.testing.assert_array_equal(unvec(vec(h), 3, 4), h)


def test_pilot_channel_consumes_noise_in_order():
    rng = np.random.default_rng(2)
    noise = cn(rng, 5)
    ch = PilotChannel(np.zeros((2, 2)), 1.0, 4.0, noise)
    d = random_design(rng, 3, 2, 2)
    np.testing.assert_allclose(ch(d).y, 2 * noise[:3])
    np.testing.assert_allclose(ch(PilotDesign(d.precoders[:2], d.combiners[:2])).y, 2 * noise[3:])
    with pytest.raises(ValueError):
        ch(d)


# MMSE ---------------------------------------------------------------------------

def test_mmse_zero_observation():
    rng = np.random.default_rng(3)
    d = random_design(rng, 5, 3, 2)
    est = mmse_estimate(PilotObservation(np.zeros(5), 0.1, d), None)
    np.testing.assert_array_equal(est.h_hat, 0)


def test_mmse_scalar():
    d = PilotDesign([[1.0]], [[1.0]], power=2.0)
    c, s2, y = 0.7, 0.3, 1.2 - 0.4j
    est = mmse_estimate(PilotObservation([y], s2, d), np.array([[c]]))
    assert est.h_hat[0, 0] == pytest.approx(math.sqrt(2.0) * c * y / (2.0 * c + s2))


def test_mmse_noiseless_unitary_recovers():
    rng = np.random.default_rng(4)
    f2, f3 = dft_matrix(2), dft_matrix(3)
    pairs = [(i, j) for i in range(3) for j in range(2)]
    d = PilotDesign([f3[:, i] for i, _ in pairs], [f2[:, j] for _, j in pairs], power=3.0)
    b = build_sensing_matrix(d)
    np.testing.assert_allclose(b @ b.conj().T, np.eye(6), atol=1e-12)
    h = cn(rng, 2, 3)
    obs = PilotChannel(h, 3.0, 0.0, np.zeros(6))(d)
    np.testing.assert_allclose(mmse_estimate(obs, None).h_hat, h, atol=1e-12)


def test_mmse_singular_noiseless_fails():
    d = PilotDesign(np.ones((2, 1)), np.ones((2, 1)))  # identical rows
    with pytest.raises(NumericalFailure):
        mmse_estimate(PilotObservation([1.0, 1.0], 0.0, d), None)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=5), st.complex_numbers(max_magnitude=5))
def test_mmse_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    d = random_design(rng, 6, 3, 3)
    c = np.eye(9) + 0.1 * np.ones((9, 9))
    y1, y2 = cn(rng, 6), cn(rng, 6)
    est = lambda y: mmse_estimate(PilotObservation(y, 0.2, d), c).h_hat
    np.testing.assert_allclose(est(a * y1 + b * y2), a * est(y1) + b * est(y2), atol=1e-10)


def test_mmse_beats_least_squares():
    rng = np.random.default_rng(5)
    a = cn(rng, 4, 4)
    cov = a @ a.conj().T / 4
    root = np.linalg.cholesky(cov)
    d = random_design(rng, 4, 2, 2)
    err_mmse, err_ls = [], []
    for _ in range(3000):
        h = unvec(root @ cn(rng, 4), 2, 2)
        obs = PilotChannel(h, 1.0, 0.1, cn(rng, 4))(d)
        err_mmse.append(np.linalg.norm(mmse_estimate(obs, cov).h_hat - h) ** 2)
        err_ls.append(np.linalg.norm(ls_estimate(obs).h_hat - h) ** 2)
    diff = np.array(err_mmse) - np.array(err_ls)
    assert diff.mean() <= 3 * diff.std() / math.sqrt(len(diff))


# AMP ----------------------------------------------------------------------------

def test_amp_noiseless_unitary():
    n_t = n_r = 4
    f_t, f_r = dft_matrix(n_t), dft_matrix(n_r)
    pairs = [(i, j) for i in range(n_t) for j in range(n_r)]
    d = PilotDesign([f_t[:, i] for i, _ in pairs], [f_r[:, j] for _, j in pairs])
    b_cs = cs_sensing_matrix(d)
    np.testing.assert_allclose(b_cs.conj().T @ b_cs, np.eye(16), atol=1e-12)
    h = cn(np.random.default_rng(6), n_r, n_t)
    obs = PilotChannel(h, 1.0, 0.0, np.zeros(16))(d)
    assert nmse(h, amp_estimate(obs, b_cs).h_hat) < 1e-6


def test_amp_sparse_recovery():
    rng = np.random.default_rng(7)
    n = 144
    errs = []
    for _ in range(10):
        x = np.zeros(n, complex)
        idx = rng.choice(n, n // 10, replace=False)
        x[idx] = cn(rng, len(idx))
        d = random_design(rng, 72, 12, 12)
        a = cs_sensing_matrix(d)
        clean = a @ x
        nv = np.linalg.norm(clean) ** 2 / 72 / 100
        obs = PilotObservation(clean + math.sqrt(nv) * cn(rng, 72), nv, d)
        h = dft_matrix(12) @ unvec(x, 12, 12) @ dft_matrix(12).conj().T
        errs.append(nmse(h, amp_estimate(obs, a).h_hat))
    assert 10 * math.log10(np.mean(errs)) < -15


def test_amp_zero_observation():
    d = random_design(np.random.default_rng(8), 5, 3, 3)
    est = amp_estimate(PilotObservation(np.zeros(5), 0.1, d))
    np.testing.assert_array_equal(est.h_hat, 0)
    assert est.metadata["diverged"] is False


# bandwidth MAP -------------------------------------------------------------------

def test_likelihood_matches_density():
    rng = np.random.default_rng(9)
    d = random_design(rng, 3, 2, 2, power=1.5)
    y = cn(rng, 3)
    w = 0.6
    s = band_correlation(2, w, 0.5)
    b = build_sensing_matrix(d)
    cov = 1.5 * b @ np.kron(s, s) @ b.conj().T + 0.2 * np.eye(3)
    ll = bandwidth_log_likelihood(PilotObservation(y, 0.2, d), w, 0.5)
    assert ll == pytest.approx(complex_gaussian_logpdf(y, cov), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi))
def test_map_phase_invariant(seed, phi):
    rng = np.random.default_rng(seed)
    d = random_design(rng, 8, 6, 6)
    y = cn(rng, 8)
    grid = default_bandwidth_grid(16)
    a = estimate_bandwidth_map(PilotObservation(y, 0.1, d), grid)
    b = estimate_bandwidth_map(PilotObservation(np.exp(1j * phi) * y, 0.1, d), grid)
    assert a == b


def test_map_constant_prior_invariant():
    rng = np.random.default_rng(10)
    obs = PilotObservation(cn(rng, 8), 0.1, random_design(rng, 8, 6, 6))
    assert estimate_bandwidth_map(obs) == estimate_bandwidth_map(obs, log_prior=lambda w: 3.0)


def test_map_grid_validation():
    obs = PilotObservation([1.0], 0.1, PilotDesign([[1.0]], [[1.0]]))
    for grid in ([], [0.0, 0.5], [0.5, 1.5]):
        with pytest.raises(ValueError):
            estimate_bandwidth_map(obs, grid)


def test_map_recovers_true_band(ce_factors):
    ws = []
    for t in range(100):
        rng = np.random.default_rng(t)
        h = draw_channel(ce_factors, rng)
        obs = PilotChannel(h, 1.0, 0.01, cn(rng, 30))(random_design(rng, 30, 12, 12))
        ws.append(estimate_bandwidth_map(obs))
    cell = (math.floor(0.3 * 64) / 64, math.ceil(0.3 * 64) / 64)
    assert cell[0] <= np.median(ws) <= cell[1]


# DPSS pilots and PSWF-CE ---------------------------------------------------------

def test_dpss_rows_orthonormal_for_distinct_pairs():
    d, meta = dpss_design(12, 12, 0.3, 9, eps=0.1)
    assert meta["distinct_pairs"] == 9 and not meta["recycled"]
    b = build_sensing_matrix(d)
    np.testing.assert_allclose(b @ b.conj().T, np.eye(9), atol=1e-12)


def test_dpss_recycles_in_order():
    d, meta = dpss_design(12, 12, 0.3, 20, eps=0.1)
    assert meta["recycled"]
    np.testing.assert_array_equal(d.precoders[:9], d.precoders[9:18])
    with pytest.raises(ValueError):
        dpss_design(12, 12, 0.3, 5, pairing="random")
    with pytest.raises(ValueError):
        dpss_design(12, 12, 0.3, 5, pairing="bogus")
    with pytest.raises(ValueError):
        dpss_design(12, 12, 0.3, 5, eps=1.0)
    r, _ = dpss_design(12, 12, 0.3, 9, pairing="random", rng=np.random.default_rng(0))
    assert r.n_pilots == 9


def test_config_defaults():
    cfg = PswfCeConfig(12, 12, 40, 10.0)
    assert cfg.step1 == 10
    assert cfg.eps == 0.1


def test_pswf_ce_rejects_bad_step1():
    ch = PilotChannel(np.zeros((4, 4)), 1.0, 1.0, np.zeros(10))
    with pytest.raises(ValueError):
        pswf_ce(ch, PswfCeConfig(4, 4, 8, 10.0, n_pilots_step1=8), np.random.default_rng(0))
    with pytest.raises(ValueError):
        pswf_ce(ch, PswfCeConfig(4, 4, 8, 10.0, eps=0.0), np.random.default_rng(0))


def test_pswf_ce_uses_all_pilots(ce_factors):
    rng = np.random.default_rng(11)
    h = draw_channel(ce_factors, rng)
    ch = PilotChannel(h, 1.0, 0.1, cn(rng, 40))
    est = pswf_ce(ch, PswfCeConfig(12, 12, 40, 10.0), rng)
    assert ch.slot == 40
    assert 0 < est.metadata["w_hat"] <= 1


def test_pswf_ce_beats_random_mmse(ce_factors):
    snr = 10.0
    ours, base = [], []
    cov = ce_factors.covariance()
    for t in range(100):
        rng = np.random.default_rng(1000 + t)
        h = draw_channel(ce_factors, rng)
        noise = cn(rng, 40)
        rand = random_design(rng, 40, 12, 12)
        base.append(nmse(h, mmse_estimate(PilotChannel(h, 1, 1 / snr, noise)(rand), cov).h_hat))
        ours.append(nmse(h, pswf_ce(PilotChannel(h, 1, 1 / snr, noise),
                                    PswfCeConfig(12, 12, 40, snr), rng).h_hat))
    assert np.mean(ours) < np.mean(base)


def test_nmse():
    h = cn(np.random.default_rng(12), 3, 3)
    assert nmse(h, h) == 0.0
    assert nmse(h, np.zeros_like(h)) == pytest.approx(1.0)
    assert nmse(h, 2 * h) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nmse(np.zeros((2, 2)), h[:2, :2])
    with pytest.raises(ValueError):
        nmse(h, h[:2])


def test_estimator_names():
    assert ESTIMATOR_NAMES == ("randcomb-mmse", "randcomb-amp", "bwest-pswf",
                               "pswf-mmse-noprior", "pswf-mmse-statcsi")
