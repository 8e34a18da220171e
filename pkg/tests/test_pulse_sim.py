import math

import numpy as np
import pytest

from helpers import reference_table
from oamqkd.config import DetectorConfig, LinkConfig
from oamqkd.pulse_sim import (
    ChannelTable,
    DriftConfig,
    estimate_observed_counts,
    gamma_gamma_params,
    sample_scintillation,
    simulate_blocks,
)
from oamqkd.qkd_core import ChannelPoint, gains_and_errors
from oamqkd.rng import stream


def constant_table(e_d=0.03, capture=1.0):
    return ChannelTable(
        r0_grid=np.array([0.01, 1.0]),
        sigma_grid=np.array([0.0, 1e-3]),
        e_d=np.full((2, 2), e_d),
        capture=np.full((2, 2), capture),
    )


def stationary_drift(**kw):
    base = dict(
        r0_step=0.0, sigma_step=0.0, rytov_variance=0.0, corruption_prior=0.0,
        ao_residual_mean=0.0, ao_residual_std=0.0,
    )
    base.update(kw)
    return DriftConfig(**base)


def test_scintillation_off():
    assert sample_scintillation(0.0, stream(1, 1)) == 1.0
    assert np.all(sample_scintillation(0.0, stream(1, 1), size=10) == 1.0)


def test_scintillation_mean_and_variance():
    rytov = 0.3
    draws = sample_scintillation(rytov, stream(2, 5), size=100_000)
    assert abs(draws.mean() - 1.0) < 0.02
    a, b = gamma_gamma_params(rytov)
    var_theory = 1.0 / a + 1.0 / b + 1.0 / (a * b)
    assert abs(draws.var() / var_theory - 1.0) < 0.05


def test_vacuum_stratum_never_clicks_without_dark_counts():
    link = LinkConfig(detector=DetectorConfig(dark_rate_y0=0.0))
    res = simulate_blocks(link, stationary_drift(), constant_table(), 10, 5000, 3)
    vac = res.block_counts[:, 2]
    assert vac[:, 1].sum() == 0  # no clicks
    assert vac[:, 3].sum() == 0


def test_gains_match_analytics_within_three_sigma():
    link = LinkConfig()
    res = simulate_blocks(link, stationary_drift(), constant_table(), 100, 10_000, 7, workers=2)
    obs = res.observed_counts()
    ch = ChannelPoint(eta=float(res.latent.eta[0]), e_d=0.03)
    for i, (s, mu) in enumerate(zip(("signal", "weak"), (link.decoy.mu_s, link.decoy.mu_w))):
        q_th, e_th = gains_and_errors(mu, ch, link.detector)
        m = obs.emitted[s]
        sd_q = math.sqrt(q_th * (1 - q_th) / m)
        assert abs(obs.gain(s) - q_th) < 3 * sd_q
        sd_e = math.sqrt(e_th * (1 - e_th) / obs.sifted[s])
        assert abs(obs.error_rate(s) - e_th) < 3 * sd_e


def test_corrupted_fraction_tracks_prior():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 2000, 1000, 11)
    assert abs(res.labels.mean() - DriftConfig().corruption_prior) < 0.02


def test_label_soundness_qber_separation():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 600, 4000, 13)
    q = res.features[:, res.feature_names.index("qber_obs")]
    assert q[res.labels].mean() > q[~res.labels].mean()


def test_reproducibility_and_worker_invariance():
    link = LinkConfig()
    a = simulate_blocks(link, DriftConfig(), reference_table(), 30, 2000, 42, workers=1, keep_records=True)
    b = simulate_blocks(link, DriftConfig(), reference_table(), 30, 2000, 42, workers=4, keep_records=True)
    assert np.array_equal(a.block_counts, b.block_counts)
    assert np.array_equal(a.features, b.features)
    for k in a.records:
        assert np.array_equal(a.records[k], b.records[k])


def test_features_finite_and_ranged():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 50, 2000, 5)
    assert np.all(np.isfinite(res.features))
    click = res.features[:, res.feature_names.index("click_rate")]
    assert np.all((click >= 0) & (click <= 1))


def test_statistical_floor_enforced():
    with pytest.raises(ValueError, match="floor"):
        simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 5, 500, 1)


def test_tallies_conserve_and_match_naive_recount():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 50, 2000, 21, keep_records=True)
    table, pooled = estimate_observed_counts(res.records)
    assert table[:, :, 0].sum() == 100_000
    assert pooled.n_total == 100_000

    # independent single-pass recount
    naive = np.zeros((3, 2, 4), dtype=np.int64)
    r = res.records
    for i in range(100_000):
        k, b = r["stratum"][i], r["basis"][i]
        naive[k, b, 0] += 1
        naive[k, b, 1] += bool(r["clicked"][i])
        naive[k, b, 2] += bool(r["sifted"][i])
        naive[k, b, 3] += bool(r["error"][i])
    assert np.array_equal(table, naive)


def test_tallies_order_invariant():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 20, 1000, 8, keep_records=True)
    table, _ = estimate_observed_counts(res.records)
    perm = stream(1, 9).permutation(20_000)
    shuffled = {k: v[perm] for k, v in res.records.items()}
    table2, _ = estimate_observed_counts(shuffled)
    assert np.array_equal(table, table2)


def test_record_invariants():
    res = simulate_blocks(LinkConfig(), DriftConfig(), reference_table(), 20, 1000, 8, keep_records=True)
    r = res.records
    assert not np.any(r["error"] & ~r["sifted"])  # error implies sifted
    assert not np.any(r["sifted"] & ~r["clicked"])  # sifted implies clicked


def test_table_clamps_out_of_range():
    t = reference_table()
    e, c, clamped = t.lookup(np.array([0.01, 0.14]), np.array([0.0, 2e-5]))
    assert clamped == 2
    assert e[0] == pytest.approx(t.e_d[0, 0])  # clamped to the strong-turbulence edge


def test_table_rejects_bad_grids():
    with pytest.raises(ValueError):
        ChannelTable(
            r0_grid=np.array([0.2, 0.1]), sigma_grid=np.array([0.0, 1e-5]),
            e_d=np.zeros((2, 2)), capture=np.zeros((2, 2)),
        )
