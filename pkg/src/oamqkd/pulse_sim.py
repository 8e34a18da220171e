"""Pulse-level Monte Carlo of the link with a slowly drifting latent channel.

Per block, a bounded AR(1) walk drives (r0, sigma_theta); a per-block gust
drawn with the configured corruption prior temporarily degrades the state
hard enough to push the latent error rate over the corruption threshold,
which defines the block label the classifier learns. Per pulse the chain is:
stratum draw -> Poisson photon number at the scintillation-adjusted mean ->
per-photon survival + dark count -> basis sift -> error flip (e_d for
photon-caused clicks, e0 for dark-only clicks), matching the qkd_core
convention so analytic cross-checks are meaningful.

(eta, e_d) come from a channel lookup table precomputed by the physical
optics (bilinear in (r0, sigma)); per-block physics would make 1e8-pulse
runs infeasible on a desktop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .config import LinkConfig, TurbulenceParams, _Validated
from .finite_key import ObservedCounts
from .phys_channel import (
    ModeProjector,
    ScreenSynthesizer,
    crosstalk_ensemble,
    intrinsic_qber,
    matrix_from_amplitudes,
)
from .qkd_core import link_transmittance
from .rng import DOMAIN_BLOCKS, DOMAIN_JITTER, DOMAIN_SCREEN, DOMAIN_SWEEP, parallel_map, stream

STRATA = ("signal", "weak", "vacuum")
FEATURE_NAMES = (
    "r0_est",
    "sigma_theta_est",
    "range_m",
    "ao_residual",
    "detector_snr_db",
    "decoy_mix",
    "drift_indicator",
    "click_rate",
    "qber_obs",
)


def gamma_gamma_params(rytov_variance: float) -> tuple[float, float]:
    """Spherical-wave (alpha, beta) for the given Rytov variance."""
    b = rytov_variance
    sx = 0.49 * b / (1.0 + 0.56 * b ** (12.0 / 5.0)) ** (7.0 / 6.0)
    sy = 0.51 * b / (1.0 + 0.69 * b ** (12.0 / 5.0)) ** (5.0 / 6.0)
    alpha = 1.0 / (math.exp(sx) - 1.0)
    beta = 1.0 / (math.exp(sy) - 1.0)
    return alpha, beta


def sample_scintillation(rytov_variance: float, rng: np.random.Generator, size=None):
    """Gamma-Gamma irradiance factor(s), ensemble mean 1."""
    if rytov_variance < 0:
        raise ValueError("rytov_variance must be >= 0")
    if rytov_variance == 0.0:
        return 1.0 if size is None else np.ones(size)
    alpha, beta = gamma_gamma_params(rytov_variance)
    x = rng.gamma(alpha, 1.0 / alpha, size=size)
    y = rng.gamma(beta, 1.0 / beta, size=size)
    return x * y


@dataclass(frozen=True)
class ChannelTable:
    """Bilinear (r0, sigma_theta) -> (e_d, capture) lookup.

    Queries outside the tabulated rectangle are clamped to its edge and
    counted (`clamped` accumulates per lookup call).
    """

    r0_grid: np.ndarray
    sigma_grid: np.ndarray
    e_d: np.ndarray
    capture: np.ndarray

    def __post_init__(self):
        for g in (self.r0_grid, self.sigma_grid):
            if np.any(np.diff(g) <= 0):
                raise ValueError("table grids must be strictly ascending")
        shape = (len(self.r0_grid), len(self.sigma_grid))
        if self.e_d.shape != shape or self.capture.shape != shape:
            raise ValueError(f"table matrices must have shape {shape}")

    def lookup(self, r0, sigma) -> tuple[np.ndarray, np.ndarray, int]:
        r0 = np.atleast_1d(np.asarray(r0, dtype=float))
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        r0c = np.clip(r0, self.r0_grid[0], self.r0_grid[-1])
        sc = np.clip(sigma, self.sigma_grid[0], self.sigma_grid[-1])
        clamped = int(np.sum((r0c != r0) | (sc != sigma)))
        pts = np.column_stack([r0c, sc])
        interp_e = RegularGridInterpolator((self.r0_grid, self.sigma_grid), self.e_d)
        interp_c = RegularGridInterpolator((self.r0_grid, self.sigma_grid), self.capture)
        return interp_e(pts), interp_c(pts), clamped


def build_channel_table(
    link: LinkConfig,
    r0_grid: list[float],
    sigma_grid: list[float],
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
) -> ChannelTable:
    """Tabulate (e_d, capture) over a (r0, sigma) grid.

    One screen ensemble per r0 is reused across the sigma axis with jitter
    resampled per cell (variance-reduction choice shared with the heatmap).
    """
    geom, alph = link.geometry, link.alphabet
    wl = link.turbulence.wavelength
    proj = ModeProjector(geom, wl, alph)
    e_d = np.zeros((len(r0_grid), len(sigma_grid)))
    cap = np.zeros_like(e_d)
    for i, r0 in enumerate(r0_grid):
        synth = ScreenSynthesizer(TurbulenceParams(fried_r0=r0, wavelength=wl), geom)
        screens = np.stack(
            parallel_map(lambda k: synth.sample(stream(master_seed, DOMAIN_SCREEN, i, k)), range(n_realizations), workers)
        )
        for j, sig in enumerate(sigma_grid):
            jit = stream(master_seed, DOMAIN_JITTER, i, j)
            shifts = geom.range_z * (
                np.asarray(link.pointing.boresight_offset) + sig * jit.standard_normal((n_realizations, 2))
            )
            amps = crosstalk_ensemble(geom, wl, alph, screens, shifts, workers, projector=proj)
            xt = matrix_from_amplitudes(amps)
            e_d[i, j] = intrinsic_qber(xt, alph).e_d
            cap[i, j] = float(xt.capture.mean())
    return ChannelTable(
        r0_grid=np.asarray(r0_grid, dtype=float),
        sigma_grid=np.asarray(sigma_grid, dtype=float),
        e_d=e_d,
        capture=cap,
    )


@dataclass(frozen=True)
class DriftConfig(_Validated):
    """Bounded AR(1) channel drift plus gust-style corruption injection."""

    r0_mean: float = 0.14
    r0_lo: float = 0.11
    r0_hi: float = 0.20
    r0_step: float = 0.015
    sigma_mean: float = 2.5e-6
    sigma_lo: float = 0.0
    sigma_hi: float = 4.5e-6
    sigma_step: float = 1.0e-6
    rho: float = 0.9
    ao_residual_mean: float = 0.15
    ao_residual_std: float = 0.05
    rytov_variance: float = 0.08
    corruption_prior: float = 0.2
    corruption_threshold: float = 0.08
    gust_sigma_mult: float = 3.5
    gust_r0_div: float = 2.2
    estimation_noise: float = 0.10

    def violations(self) -> list[str]:
        out = []
        if not (self.r0_lo <= self.r0_mean <= self.r0_hi):
            out.append("need r0_lo <= r0_mean <= r0_hi")
        if not (self.sigma_lo <= self.sigma_mean <= self.sigma_hi):
            out.append("need sigma_lo <= sigma_mean <= sigma_hi")
        if not (0 <= self.rho < 1):
            out.append("AR(1) rho must lie in [0, 1)")
        if not (0 <= self.corruption_prior <= 1):
            out.append("corruption_prior must lie in [0, 1]")
        if not (0 < self.corruption_threshold <= 0.5):
            out.append("corruption_threshold must lie in (0, 0.5]")
        if self.rytov_variance < 0:
            out.append("rytov_variance must be >= 0")
        return out


@dataclass(frozen=True)
class LatentStates:
    """Per-block channel truth (the labels derive from e_d only)."""

    r0: np.ndarray
    sigma_theta: np.ndarray
    ao_residual: np.ndarray
    scintillation: np.ndarray
    e_d: np.ndarray
    eta: np.ndarray
    corrupted: np.ndarray
    gust: np.ndarray
    n_clamped: int


@dataclass
class SimResult:
    features: np.ndarray  # (n_blocks, len(FEATURE_NAMES))
    labels: np.ndarray  # bool, corrupted
    block_counts: np.ndarray  # (n_blocks, 3 strata, 4): emitted/clicked/sifted/errors
    latent: LatentStates
    pulses_per_block: int
    records: dict[str, np.ndarray] | None = None
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def observed_counts(self, mask: np.ndarray | None = None) -> ObservedCounts:
        """Pool per-block tallies (optionally over a block mask)."""
        c = self.block_counts if mask is None else self.block_counts[mask]
        tot = c.sum(axis=0)
        return ObservedCounts(
            emitted={s: float(tot[i, 0]) for i, s in enumerate(STRATA)},
            clicked={s: float(tot[i, 1]) for i, s in enumerate(STRATA)},
            sifted={s: float(tot[i, 2]) for i, s in enumerate(STRATA)},
            errors={s: float(tot[i, 3]) for i, s in enumerate(STRATA)},
        )


def _latent_chain(link: LinkConfig, drift: DriftConfig, table: ChannelTable, n_blocks: int, master_seed: int) -> LatentStates:
    rng = stream(master_seed, DOMAIN_BLOCKS, 0)
    r0 = np.empty(n_blocks)
    sig = np.empty(n_blocks)
    x_r, x_s = drift.r0_mean, drift.sigma_mean
    w = math.sqrt(1.0 - drift.rho**2)
    for t in range(n_blocks):
        x_r = drift.r0_mean + drift.rho * (x_r - drift.r0_mean) + w * drift.r0_step * rng.standard_normal()
        x_s = drift.sigma_mean + drift.rho * (x_s - drift.sigma_mean) + w * drift.sigma_step * rng.standard_normal()
        x_r = min(max(x_r, drift.r0_lo), drift.r0_hi)
        x_s = min(max(x_s, drift.sigma_lo), drift.sigma_hi)
        r0[t] = x_r
        sig[t] = x_s
    gust = rng.random(n_blocks) < drift.corruption_prior
    r0_eff = np.where(gust, r0 / drift.gust_r0_div, r0)
    sig_eff = np.where(gust, sig * drift.gust_sigma_mult, sig)
    ao = np.abs(drift.ao_residual_mean + drift.ao_residual_std * rng.standard_normal(n_blocks))
    scint = np.asarray(sample_scintillation(drift.rytov_variance, rng, size=n_blocks))

    e_d_tab, cap, n_clamped = table.lookup(r0_eff, sig_eff)
    # uncompensated residual phase scrambles modes toward depolarization and
    # costs a Strehl-like capture factor
    fid = np.exp(-(ao**2))
    e_d = e_d_tab + (0.5 - e_d_tab) * (1.0 - fid)
    eta0 = link_transmittance(link.detector, link.geometry.range_z)
    eta = np.clip(eta0 * cap * fid, 0.0, 1.0)
    corrupted = e_d > drift.corruption_threshold
    return LatentStates(
        r0=r0_eff, sigma_theta=sig_eff, ao_residual=ao, scintillation=scint,
        e_d=e_d, eta=eta, corrupted=corrupted, gust=gust, n_clamped=n_clamped,
    )


def _simulate_one_block(
    b: int,
    link: LinkConfig,
    drift: DriftConfig,
    lat: LatentStates,
    pulses: int,
    master_seed: int,
    keep_records: bool,
):
    rng = stream(master_seed, DOMAIN_BLOCKS, 1 + b)
    decoy, det = link.decoy, link.detector
    mus = np.array([decoy.mu_s, decoy.mu_w, 0.0]) * lat.scintillation[b]
    eta, e_d = lat.eta[b], lat.e_d[b]

    strata = rng.choice(3, size=pulses, p=[decoy.p_s, decoy.p_w, decoy.p_0])
    photons = rng.poisson(mus[strata])
    p_click = 1.0 - (1.0 - eta) ** photons
    clicked_ph = rng.random(pulses) < p_click
    dark = rng.random(pulses) < det.dark_rate_y0
    clicked = clicked_ph | dark
    basis_tx = rng.integers(0, 2, pulses)
    basis_rx = rng.integers(0, 2, pulses)
    symbol = rng.integers(0, 2, pulses)
    sifted = clicked & (basis_tx == basis_rx)
    err_prob = np.where(clicked_ph, e_d, det.e0)
    error = sifted & (rng.random(pulses) < err_prob)

    counts = np.zeros((3, 4), dtype=np.int64)
    for k in range(3):
        sel = strata == k
        counts[k] = (sel.sum(), (clicked & sel).sum(), (sifted & sel).sum(), (error & sel).sum())

    noise = drift.estimation_noise
    g = rng.standard_normal(3)
    r0_est = lat.r0[b] * (1.0 + noise * g[0])
    sigma_est = max(0.0, lat.sigma_theta[b] * (1.0 + noise * g[1]) + noise * drift.sigma_mean * g[2])
    ao_est = lat.ao_residual[b]
    click_rate = clicked.mean()
    n_sift = counts[:, 2].sum()
    qber_obs = counts[:, 3].sum() / n_sift if n_sift > 0 else 0.0
    snr_db = 10.0 * math.log10(max(click_rate, 1e-12) / max(det.dark_rate_y0, 1e-12))
    decoy_mix = counts[0, 0] / pulses
    feats = np.array(
        [r0_est, sigma_est, link.geometry.range_z, ao_est, snr_db, decoy_mix, 0.0, click_rate, qber_obs]
    )
    rec = None
    if keep_records:
        rec = {
            "block_id": np.full(pulses, b, dtype=np.int32),
            "stratum": strata.astype(np.int8),
            "basis": basis_tx.astype(np.int8),
            "symbol": symbol.astype(np.int8),
            "clicked": clicked,
            "sifted": sifted,
            "error": error,
        }
    return counts, feats, rec


def simulate_blocks(
    link: LinkConfig,
    drift: DriftConfig,
    table: ChannelTable,
    n_blocks: int,
    pulses_per_block: int,
    master_seed: int,
    workers: int = 1,
    keep_records: bool = False,
) -> SimResult:
    """Monte Carlo run: per-block features + labels + exact stratum tallies."""
    if pulses_per_block < 1000:
        raise ValueError("pulses_per_block below the 1e3 statistical floor")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    lat = _latent_chain(link, drift, table, n_blocks, master_seed)
    out = parallel_map(
        lambda b: _simulate_one_block(b, link, drift, lat, pulses_per_block, master_seed, keep_records),
        range(n_blocks),
        workers,
    )
    counts = np.stack([o[0] for o in out])
    feats = np.stack([o[1] for o in out])
    drift_col = FEATURE_NAMES.index("drift_indicator")
    r0_col = FEATURE_NAMES.index("r0_est")
    feats[1:, drift_col] = np.diff(feats[:, r0_col]) / drift.r0_mean
    records = None
    if keep_records:
        keys = out[0][2].keys()
        records = {k: np.concatenate([o[2][k] for o in out]) for k in keys}
    return SimResult(
        features=feats,
        labels=lat.corrupted.copy(),
        block_counts=counts,
        latent=lat,
        pulses_per_block=pulses_per_block,
        records=records,
    )


def estimate_observed_counts(records: dict[str, np.ndarray]):
    """Exact tallies by (stratum, basis) from a record stream.

    Returns (table, pooled) where table[k, b] = (emitted, clicked, sifted,
    errors) for stratum k in basis b, and pooled is the ObservedCounts the
    finite-key bound consumes. Order-invariant by construction.
    """
    if len(records["stratum"]) == 0:
        raise ValueError("record stream is empty")
    table = np.zeros((3, 2, 4), dtype=np.int64)
    strata = records["stratum"]
    basis = records["basis"]
    for k in range(3):
        for b in range(2):
            sel = (strata == k) & (basis == b)
            table[k, b] = (
                sel.sum(),
                records["clicked"][sel].sum(),
                records["sifted"][sel].sum(),
                records["error"][sel].sum(),
            )
    pooled_arr = table.sum(axis=1)
    pooled = ObservedCounts(
        emitted={s: float(pooled_arr[i, 0]) for i, s in enumerate(STRATA)},
        clicked={s: float(pooled_arr[i, 1]) for i, s in enumerate(STRATA)},
        sifted={s: float(pooled_arr[i, 2]) for i, s in enumerate(STRATA)},
        errors={s: float(pooled_arr[i, 3]) for i, s in enumerate(STRATA)},
    )
    return table, pooled
