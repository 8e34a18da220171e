import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamqkd.config import DecoyConfig, DetectorConfig
from oamqkd.qkd_core import (
    ChannelPoint,
    asymptotic_rate,
    binary_entropy,
    decoy_bounds,
    gains_and_errors,
    link_transmittance,
    poisson_pn,
)


def exact_single_photon(ch: ChannelPoint, det: DetectorConfig) -> tuple[float, float]:
    """Oracle: exact yields of the analytic photon-number channel.

    Y_n = 1 - (1 - Y0)(1 - eta)^n;  e_n Y_n = e0 Y0 (1-eta)^n + e_d (1 - (1-eta)^n)
    """
    y1 = 1.0 - (1.0 - det.dark_rate_y0) * (1.0 - ch.eta)
    e1 = (det.e0 * det.dark_rate_y0 * (1.0 - ch.eta) + ch.e_d * ch.eta) / y1
    return y1, e1


def test_binary_entropy_boundaries():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0


def test_binary_entropy_high_precision_point():
    # independent arbitrary-precision evaluation, frozen
    assert binary_entropy(0.11) == pytest.approx(0.4999159581645280, abs=1e-12)


def test_binary_entropy_domain_error():
    with pytest.raises(ValueError):
        binary_entropy(-0.01)
    with pytest.raises(ValueError):
        binary_entropy(1.01)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_binary_entropy_symmetric_and_bounded(x):
    h = binary_entropy(x)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)


def test_poisson_p1_identity():
    for mu in (0.1, 0.5, 0.6, 1.2):
        assert poisson_pn(mu, 1) == mu * math.exp(-mu)


def test_poisson_degenerate():
    assert poisson_pn(0.0, 1) == 0.0
    assert poisson_pn(0.0, 0) == 1.0


def test_poisson_series_sums_to_one():
    total = sum(poisson_pn(0.6, n) for n in range(51))
    assert abs(total - 1.0) < 1e-12


def test_link_transmittance_zero_range():
    det = DetectorConfig(eta_det=0.6, fixed_loss_db=0.0)
    assert link_transmittance(det, 0.0) == pytest.approx(0.6)


def test_link_transmittance_ten_db():
    det0 = DetectorConfig(fixed_loss_db=0.0)
    det10 = DetectorConfig(fixed_loss_db=10.0)
    assert link_transmittance(det10, 0.0) == pytest.approx(link_transmittance(det0, 0.0) / 10.0)


def test_link_transmittance_frozen_point():
    det = DetectorConfig(eta_det=0.6, channel_loss_db_per_km=0.43, fixed_loss_db=3.0)
    assert link_transmittance(det, 8000.0) == pytest.approx(0.13619189111302931, rel=1e-12)


def test_gains_background_only():
    det = DetectorConfig(dark_rate_y0=1e-4)
    q, e = gains_and_errors(0.5, ChannelPoint(eta=0.0, e_d=0.03), det)
    assert q == pytest.approx(1e-4)
    assert e == pytest.approx(det.e0)


def test_gains_signal_dominated():
    det = DetectorConfig(dark_rate_y0=0.0)
    q, e = gains_and_errors(50.0, ChannelPoint(eta=1.0, e_d=0.03), det)
    assert q == pytest.approx(1.0, abs=1e-12)
    assert e == pytest.approx(0.03, abs=1e-12)


@given(
    st.floats(min_value=1e-4, max_value=1.0),
    st.floats(min_value=0.0, max_value=0.5),
    st.floats(min_value=0.0, max_value=1e-3),
)
@settings(max_examples=60)
def test_gain_error_ranges(eta, e_d, y0):
    det = DetectorConfig(dark_rate_y0=y0)
    ch = ChannelPoint(eta=eta, e_d=e_d)
    q1, e1 = gains_and_errors(0.2, ch, det)
    q2, e2 = gains_and_errors(0.6, ch, det)
    assert 0.0 <= q1 <= q2 <= 1.0  # monotone in mu
    assert 0.0 <= e1 <= 0.5 and 0.0 <= e2 <= 0.5


def test_gain_monotone_in_eta():
    det = DetectorConfig()
    qs = [gains_and_errors(0.5, ChannelPoint(eta=eta, e_d=0.02), det)[0] for eta in (0.05, 0.1, 0.3)]
    assert qs[0] < qs[1] < qs[2]


def test_decoy_perfect_channel_tightness():
    # lossless, noiseless; tiny intensities make the bound tight to 1e-6
    det = DetectorConfig(dark_rate_y0=0.0)
    ch = ChannelPoint(eta=1.0, e_d=0.0)
    est = decoy_bounds(DecoyConfig(mu_s=3e-3, mu_w=1.5e-3, p_s=0.7, p_w=0.2, p_0=0.1), ch, det)
    assert est.y1_lower <= 1.0
    assert 1.0 - est.y1_lower < 1e-6


def test_decoy_bounds_sound_and_close_at_reference_point():
    det = DetectorConfig(dark_rate_y0=1e-5)
    ch = ChannelPoint(eta=0.1, e_d=0.03)
    est = decoy_bounds(DecoyConfig(mu_s=0.5, mu_w=0.1, p_s=0.7, p_w=0.2, p_0=0.1), ch, det)
    y1_true, e1_true = exact_single_photon(ch, det)
    assert est.y1_lower <= y1_true
    assert (y1_true - est.y1_lower) / y1_true < 0.05
    assert est.e1_upper >= e1_true


def test_decoy_soundness_random_grid_small():
    rng = np.random.default_rng(2024)
    det_base = dict(e0=0.5, f_ec=1.1)
    for _ in range(60):
        eta = 10 ** rng.uniform(-3, 0)
        y0 = 10 ** rng.uniform(-7, -3)
        e_d = rng.uniform(0.0, 0.1)
        mu_s = rng.uniform(0.2, 1.0)
        mu_w = rng.uniform(0.01, 0.9) * mu_s
        det = DetectorConfig(dark_rate_y0=y0, **det_base)
        ch = ChannelPoint(eta=eta, e_d=e_d)
        est = decoy_bounds(DecoyConfig(mu_s=mu_s, mu_w=mu_w, p_s=0.7, p_w=0.2, p_0=0.1), ch, det)
        y1_true, e1_true = exact_single_photon(ch, det)
        assert est.y1_lower <= y1_true + 1e-12
        if not est.insecure:
            assert est.e1_upper >= min(e1_true, 0.5) - 1e-12


def test_decoy_tightness_as_mu_w_vanishes():
    det = DetectorConfig(dark_rate_y0=0.0)
    ch = ChannelPoint(eta=0.1, e_d=0.03)
    est = decoy_bounds(DecoyConfig(mu_s=0.5, mu_w=0.01, p_s=0.7, p_w=0.2, p_0=0.1), ch, det)
    y1_true, _ = exact_single_photon(ch, det)
    assert est.y1_lower / y1_true >= 0.99


def test_decoy_insecure_flag():
    # near-degenerate intensity pair at large mu_s: discarded multiphoton
    # terms push the bound below zero
    det = DetectorConfig(dark_rate_y0=0.0)
    ch = ChannelPoint(eta=0.1, e_d=0.01)
    est = decoy_bounds(DecoyConfig(mu_s=1.4, mu_w=1.26, p_s=0.7, p_w=0.2, p_0=0.1), ch, det)
    assert est.insecure
    assert est.y1_lower == 0.0
    assert est.phi_inf <= 0.0


def test_phi_monotone_in_e_d():
    det = DetectorConfig(dark_rate_y0=1e-5)
    decoy = DecoyConfig()
    phis = [
        decoy_bounds(decoy, ChannelPoint(eta=0.1, e_d=e), det).phi_inf
        for e in (0.0, 0.02, 0.05, 0.10)
    ]
    assert all(a >= b for a, b in zip(phis, phis[1:]))


def test_rate_floor_and_linearity():
    det = DetectorConfig(dark_rate_y0=1e-5, pulse_rate=1e8)
    decoy = DecoyConfig()
    est = decoy_bounds(decoy, ChannelPoint(eta=0.1, e_d=0.25), det)
    assert est.phi_inf < 0
    assert asymptotic_rate(est, decoy, det) == 0.0

    good = decoy_bounds(decoy, ChannelPoint(eta=0.1, e_d=0.02), det)
    r1 = asymptotic_rate(good, decoy, det)
    det2 = DetectorConfig(dark_rate_y0=1e-5, pulse_rate=2e8)
    assert asymptotic_rate(good, decoy, det2) == pytest.approx(2.0 * r1)
