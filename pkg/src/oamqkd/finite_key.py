"""Composable finite-key lower bound with explicit epsilon accounting.

The extractable-bits bound for a block of n emitted pulses:

    ell(n) = max(0, n p_s p1(mu_s) Y1fin [1 - H2(e1fin)] - lambda_EC - Delta_PA)

where Y1fin/e1fin are the weak+vacuum bounds re-derived from per-stratum
frequencies widened by two-sided Hoeffding deviations
delta(m, eps) = sqrt(ln(2/eps) / (2 m)) (this realizes Delta_stat),
lambda_EC = f_EC * (n p_s Q_s) * H2(E_s), and
Delta_PA = 2 log2(1/(2 eps_PA)) + log2(2/eps_cor).

The privacy term is per emitted signal pulse; the asymptote reference is
p_s * phi_inf (per emitted pulse overall), which ell(n)/n approaches from
below as the Hoeffding widths vanish. Four strata observables consume one
eps_pe each (signal gain, weak gain, vacuum yield, weak error frequency).

Both the analytic path (expected frequencies from qkd_core) and the
simulation path (observed counts from pulse_sim) share this operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import DecoyConfig, DetectorConfig, SecurityParams
from .qkd_core import (
    ChannelPoint,
    DecoyEstimate,
    binary_entropy,
    decoy_bounds,
    decoy_e1_upper,
    decoy_y1_lower,
    poisson_pn,
)

STRATA = ("signal", "weak", "vacuum")

# Strata with expected counts below this are statistically void.
_MIN_STRATUM_COUNT = 10.0


@dataclass(frozen=True)
class ObservedCounts:
    """Exact per-stratum tallies from a simulated (or real) run.

    errors are counted among sifted clicks only, so the per-emitted error
    frequency used for estimation is (errors/sifted) * (clicked/emitted)
    with Hoeffding trial count m = emitted.
    """

    emitted: dict[str, float]
    clicked: dict[str, float]
    sifted: dict[str, float]
    errors: dict[str, float]

    @property
    def n_total(self) -> float:
        return sum(self.emitted.values())

    def gain(self, stratum: str) -> float:
        m = self.emitted[stratum]
        return self.clicked[stratum] / m if m > 0 else 0.0

    def error_rate(self, stratum: str) -> float:
        s = self.sifted[stratum]
        return self.errors[stratum] / s if s > 0 else 0.0


@dataclass(frozen=True)
class FiniteKeyResult:
    n: float
    ell: float
    lambda_ec: float
    delta_stat: float
    delta_pa: float
    rate_per_pulse: float
    rate_bits_per_s: float
    asymptote: float
    y1_fin: float
    e1_fin: float
    void: bool = False
    insecure: bool = False

    def __post_init__(self):
        if self.ell > self.n:
            raise ValueError("extractable bits cannot exceed block size")


def hoeffding_delta(m: float, eps: float) -> float:
    """Two-sided deviation bound for m Bernoulli trials at confidence eps."""
    if m <= 0:
        return math.inf
    return math.sqrt(math.log(2.0 / eps) / (2.0 * m))


@dataclass(frozen=True)
class _Frequencies:
    m: dict[str, float]  # Hoeffding trial counts per stratum
    q_s: float
    q_w: float
    y0: float
    ewqw: float  # weak-stratum error frequency per emitted pulse
    e_s: float  # signal error rate among sifted clicks


def _analytic_frequencies(n: float, est: DecoyEstimate, decoy: DecoyConfig, det: DetectorConfig) -> _Frequencies:
    return _Frequencies(
        m={"signal": n * decoy.p_s, "weak": n * decoy.p_w, "vacuum": n * decoy.p_0},
        q_s=est.q_s,
        q_w=est.q_w,
        y0=det.dark_rate_y0,
        ewqw=est.e_w * est.q_w,
        e_s=est.e_s,
    )


def _observed_frequencies(obs: ObservedCounts) -> _Frequencies:
    return _Frequencies(
        m={k: obs.emitted[k] for k in STRATA},
        q_s=obs.gain("signal"),
        q_w=obs.gain("weak"),
        y0=obs.gain("vacuum"),
        ewqw=obs.error_rate("weak") * obs.gain("weak"),
        e_s=obs.error_rate("signal"),
    )


def _bounded_y1_e1(
    decoy: DecoyConfig, det: DetectorConfig, fr: _Frequencies, widen: float | dict[str, float]
) -> tuple[float, float, bool]:
    """Clamped single-photon bounds from (possibly widened) frequencies."""
    if isinstance(widen, dict):
        d = widen
    else:
        d = {k: widen for k in STRATA}
    q_s_hi = min(1.0, fr.q_s + d["signal"])
    q_w_lo = max(0.0, fr.q_w - d["weak"])
    y0_hi = min(1.0, fr.y0 + d["vacuum"])
    y0_lo = max(0.0, fr.y0 - d["vacuum"])
    ewqw_hi = min(1.0, fr.ewqw + d["weak"])

    y1 = decoy_y1_lower(decoy.mu_s, decoy.mu_w, q_s_hi, q_w_lo, y0_hi)
    if y1 <= 0.0:
        return 0.0, 0.5, True
    y1 = min(y1, 1.0)
    e1 = decoy_e1_upper(decoy.mu_w, ewqw_hi, det.e0, y0_lo, y1)
    return y1, min(max(e1, 0.0), 0.5), False


def finite_key_bound(
    n: float,
    est: DecoyEstimate | None,
    decoy: DecoyConfig,
    det: DetectorConfig,
    sec: SecurityParams,
    observed: ObservedCounts | None = None,
) -> FiniteKeyResult:
    """Composable lower bound on extractable secret bits for one block.

    Analytic mode (observed=None) uses expected frequencies from `est`;
    simulation mode takes exact tallies and ignores `est`/`n` in favor of
    the observed block. Any stratum below 10 expected counts voids the
    result (ell = 0, flagged).
    """
    if sec.consumed_eps() > sec.eps_sec * (1 + 1e-12):
        raise ValueError("epsilon allocations exceed eps_sec")
    if observed is not None:
        fr = _observed_frequencies(observed)
        n = observed.n_total
    else:
        if est is None:
            raise ValueError("analytic mode needs a DecoyEstimate")
        if n < 1:
            raise ValueError("block length must be >= 1")
        fr = _analytic_frequencies(n, est, decoy, det)

    p1 = poisson_pn(decoy.mu_s, 1)
    n_sig = n * decoy.p_s if observed is None else observed.emitted["signal"]
    n_sift = n_sig * fr.q_s
    lambda_ec = det.f_ec * n_sift * binary_entropy(min(fr.e_s, 1.0))
    delta_pa = 2.0 * math.log2(1.0 / (2.0 * sec.eps_pa)) + math.log2(2.0 / sec.eps_cor)

    # asymptote reference: per emitted pulse, privacy minus EC, zero-floored
    y1_ref, e1_ref, _ = _bounded_y1_e1(decoy, det, fr, 0.0)
    phi_ref = (
        p1 * (y1_ref * det.eta_mismatch) * (1.0 - binary_entropy(e1_ref))
        - det.f_ec * fr.q_s * binary_entropy(min(fr.e_s, 1.0))
    )
    asymptote = decoy.p_s * max(0.0, phi_ref)

    if any(fr.m[k] < _MIN_STRATUM_COUNT for k in STRATA):
        return FiniteKeyResult(
            n=n, ell=0.0, lambda_ec=lambda_ec, delta_stat=0.0, delta_pa=delta_pa,
            rate_per_pulse=0.0, rate_bits_per_s=0.0, asymptote=asymptote,
            y1_fin=0.0, e1_fin=0.5, void=True,
        )

    widths = {k: hoeffding_delta(fr.m[k], sec.eps_pe) for k in STRATA}
    y1_fin, e1_fin, insecure = _bounded_y1_e1(decoy, det, fr, widths)

    privacy_ref = n_sig * p1 * (y1_ref * det.eta_mismatch) * (1.0 - binary_entropy(e1_ref))
    privacy_fin = n_sig * p1 * (y1_fin * det.eta_mismatch) * (1.0 - binary_entropy(e1_fin))
    delta_stat = max(0.0, privacy_ref - privacy_fin)

    ell = max(0.0, privacy_fin - lambda_ec - delta_pa)
    rate_pp = ell / n
    return FiniteKeyResult(
        n=n,
        ell=ell,
        lambda_ec=lambda_ec,
        delta_stat=delta_stat,
        delta_pa=delta_pa,
        rate_per_pulse=rate_pp,
        rate_bits_per_s=rate_pp * det.pulse_rate,
        asymptote=asymptote,
        y1_fin=y1_fin,
        e1_fin=e1_fin,
        insecure=insecure,
    )


@dataclass(frozen=True)
class MinBlockResult:
    n_min: float
    reachable: bool
    achieved_fraction: float


def min_block_length(
    target_fraction: float,
    est: DecoyEstimate,
    decoy: DecoyConfig,
    det: DetectorConfig,
    sec: SecurityParams,
    n_lo: float = 1e2,
    n_hi: float = 1e16,
) -> MinBlockResult:
    """Smallest n whose per-pulse rate reaches target_fraction of the
    asymptote; bisection on log n (rate is monotone), answer within 1.01x.
    """
    if not (0.0 < target_fraction < 1.0):
        raise ValueError("target_fraction must lie in (0, 1)")
    ref = finite_key_bound(n_hi, est, decoy, det, sec)
    if ref.asymptote <= 0.0:
        raise ValueError("scenario has no positive asymptotic rate")

    def frac(n: float) -> float:
        r = finite_key_bound(n, est, decoy, det, sec)
        return r.rate_per_pulse / r.asymptote if r.asymptote > 0 else 0.0

    if frac(n_hi) < target_fraction:
        return MinBlockResult(n_min=math.inf, reachable=False, achieved_fraction=frac(n_hi))
    if frac(n_lo) >= target_fraction:
        return MinBlockResult(n_min=n_lo, reachable=True, achieved_fraction=frac(n_lo))
    lo, hi = n_lo, n_hi
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        if frac(mid) >= target_fraction:
            hi = mid
        else:
            lo = mid
    return MinBlockResult(n_min=hi, reachable=True, achieved_fraction=frac(hi))


def rate_vs_n_curve(
    est: DecoyEstimate,
    decoy: DecoyConfig,
    det: DetectorConfig,
    sec: SecurityParams,
    n_grid: list[float],
) -> list[FiniteKeyResult]:
    """Finite-key results over an ascending geometric grid of block sizes."""
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n grid must be strictly ascending")
    return [finite_key_bound(n, est, decoy, det, sec) for n in n_grid]


def scenario_estimate(
    det: DetectorConfig, decoy: DecoyConfig, range_m: float, e_d: float, capture: float = 1.0
) -> tuple[DecoyEstimate, ChannelPoint]:
    """Analytic decoy estimate for a loss-budget channel at one range."""
    from .qkd_core import link_transmittance

    eta = link_transmittance(det, range_m) * capture
    ch = ChannelPoint(eta=eta, e_d=e_d, range_m=range_m)
    return decoy_bounds(decoy, ch, det), ch
