"""Photon statistics, gain/error model, weak+vacuum decoy bounds, asymptotic rate.

Conventions (used identically by the pulse-level Monte Carlo so the 3-sigma
cross-checks are meaningful):

* Gain:   Q_mu = 1 - (1 - Y0) exp(-eta mu)        (multiplicative survival)
* Errors: E_mu Q_mu = e0 Y0 exp(-eta mu) + e_d (1 - exp(-eta mu))
  i.e. a photon-caused click errs with probability e_d regardless of a
  coincident dark count; a dark-only click errs with probability e0.

Detector efficiency mismatch is a worst-case multiplicative penalty on the
single-photon yield credited to privacy, never on the observed gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import DecoyConfig, DetectorConfig


def binary_entropy(x: float) -> float:
    """H2(x) in bits; H2(0) = H2(1) = 0."""
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def poisson_pn(mu: float, n: int) -> float:
    """P(N = n) for N ~ Poisson(mu)."""
    if mu < 0 or n < 0:
        raise ValueError("poisson_pn needs mu >= 0 and n >= 0")
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    if n < 20:
        return mu**n / math.factorial(n) * math.exp(-mu)
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def link_transmittance(det: DetectorConfig, range_m: float) -> float:
    """End-to-end transmittance: detector efficiency times the dB loss budget.

    Efficiency mismatch is applied downstream (privacy term only); geometric
    capture from the channel model multiplies in where available.
    """
    if range_m < 0:
        raise ValueError("range must be >= 0")
    loss_db = det.fixed_loss_db + det.channel_loss_db_per_km * range_m / 1000.0
    return det.eta_det * 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class ChannelPoint:
    """One operating point: end-to-end transmittance and intrinsic error."""

    eta: float
    e_d: float
    range_m: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not (0.0 <= self.e_d <= 0.5):
            raise ValueError(f"e_d must lie in [0, 0.5], got {self.e_d}")


def gains_and_errors(mu: float, ch: ChannelPoint, det: DetectorConfig) -> tuple[float, float]:
    """(Q_mu, E_mu) for intensity class mu under the module convention."""
    surv = math.exp(-ch.eta * mu)
    q = 1.0 - (1.0 - det.dark_rate_y0) * surv
    eq = det.e0 * det.dark_rate_y0 * surv + ch.e_d * (1.0 - surv)
    e = eq / q if q > 0 else det.e0
    return q, min(e, 1.0)


@dataclass(frozen=True)
class DecoyEstimate:
    """Weak+vacuum decoy-state estimate at one channel point.

    y1_lower / e1_upper are the clamped single-photon bounds; phi_inf is the
    asymptotic secret fraction per signal-class pulse and may be negative
    (rate floor applied downstream). `insecure` marks Y1^L <= 0, `clamped`
    that some intermediate left its valid range.
    """

    q_s: float
    q_w: float
    e_s: float
    e_w: float
    y1_lower: float
    e1_upper: float
    q1_lower: float
    phi_inf: float
    clamped: bool = False
    insecure: bool = False

    def to_json_dict(self) -> dict:
        return {
            "schema": "oamqkd/v1/decoy_estimate",
            "q_s": self.q_s,
            "q_w": self.q_w,
            "e_s": self.e_s,
            "e_w": self.e_w,
            "y1_lower": self.y1_lower,
            "e1_upper": self.e1_upper,
            "q1_lower": self.q1_lower,
            "phi_inf": self.phi_inf,
            "clamped": self.clamped,
            "insecure": self.insecure,
        }


def decoy_y1_lower(
    mu_s: float, mu_w: float, q_s: float, q_w: float, y0: float
) -> float:
    """Unclamped weak+vacuum lower bound on the single-photon yield."""
    return (mu_s / (mu_s * mu_w - mu_w**2)) * (
        q_w * math.exp(mu_w)
        - q_s * math.exp(mu_s) * mu_w**2 / mu_s**2
        - (mu_s**2 - mu_w**2) / mu_s**2 * y0
    )


def decoy_e1_upper(mu_w: float, ew_qw: float, e0: float, y0: float, y1_lower: float) -> float:
    """Unclamped upper bound on the single-photon error rate."""
    return (ew_qw * math.exp(mu_w) - e0 * y0) / (y1_lower * mu_w)


def decoy_bounds(decoy: DecoyConfig, ch: ChannelPoint, det: DetectorConfig) -> DecoyEstimate:
    """Single-photon bounds and asymptotic secret fraction (signal class)."""
    q_s, e_s = gains_and_errors(decoy.mu_s, ch, det)
    q_w, e_w = gains_and_errors(decoy.mu_w, ch, det)
    y0 = det.dark_rate_y0

    y1 = decoy_y1_lower(decoy.mu_s, decoy.mu_w, q_s, q_w, y0)
    clamped = False
    insecure = False
    if y1 <= 0.0:
        y1, e1, insecure = 0.0, 0.5, True
    else:
        if y1 > 1.0:
            y1, clamped = 1.0, True
        e1 = decoy_e1_upper(decoy.mu_w, e_w * q_w, det.e0, y0, y1)
        if e1 < 0.0:
            e1, clamped = 0.0, True
        elif e1 > 0.5:
            e1, clamped = 0.5, True

    p1 = poisson_pn(decoy.mu_s, 1)
    phi = p1 * (y1 * det.eta_mismatch) * (1.0 - binary_entropy(e1)) - det.f_ec * q_s * binary_entropy(e_s)
    return DecoyEstimate(
        q_s=q_s,
        q_w=q_w,
        e_s=e_s,
        e_w=e_w,
        y1_lower=y1,
        e1_upper=e1,
        q1_lower=y1 * p1,
        phi_inf=phi,
        clamped=clamped,
        insecure=insecure,
    )


def asymptotic_rate(est: DecoyEstimate, decoy: DecoyConfig, det: DetectorConfig) -> float:
    """Secret bits per second in the infinite-key limit."""
    return max(0.0, est.phi_inf) * decoy.p_s * det.pulse_rate
