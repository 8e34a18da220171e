"""Configuration data model: immutable dataclasses with fail-fast validation.

Each config class exposes `violations()` returning every violated invariant
as a human-readable string; construction raises ValueError listing all of
them at once so the CLI can report a complete validation picture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


class _Validated:
    def violations(self) -> list[str]:
        return []

    def __post_init__(self):
        probs = self.violations()
        if probs:
            name = type(self).__name__
            raise ValueError(f"invalid {name}:\n" + "\n".join(f"  - {p}" for p in probs))


@dataclass(frozen=True)
class TurbulenceParams(_Validated):
    """Turbulence strength: Fried parameter (math.inf switches turbulence off),
    optional path-resolved structure-constant profile, carrier wavelength."""

    fried_r0: float = 0.08
    wavelength: float = 1.55e-6
    cn2_profile: tuple[tuple[float, float], ...] | None = None

    def violations(self) -> list[str]:
        out = []
        if not (self.fried_r0 > 0):
            out.append(f"fried_r0 must be > 0 (got {self.fried_r0})")
        if not (_finite(self.wavelength) and self.wavelength > 0):
            out.append(f"wavelength must be finite and > 0 (got {self.wavelength})")
        if self.cn2_profile is not None:
            zs = [z for z, _ in self.cn2_profile]
            if any(c < 0 for _, c in self.cn2_profile):
                out.append("cn2_profile values must be >= 0")
            if any(b <= a for a, b in zip(zs, zs[1:])):
                out.append("cn2_profile positions must be strictly increasing")
        return out


@dataclass(frozen=True)
class PointingParams(_Validated):
    """Per-axis Gaussian jitter std plus a fixed boresight bias (rad)."""

    jitter_sigma: float = 0.0
    boresight_offset: tuple[float, float] = (0.0, 0.0)

    def violations(self) -> list[str]:
        out = []
        if not (_finite(self.jitter_sigma) and self.jitter_sigma >= 0):
            out.append(f"jitter_sigma must be >= 0 (got {self.jitter_sigma})")
        if len(self.boresight_offset) != 2 or not all(_finite(b) for b in self.boresight_offset):
            out.append("boresight_offset must be a finite (theta_x, theta_y) pair")
        return out


@dataclass(frozen=True)
class GeometryParams(_Validated):
    """Physical-optics grid for the channel model. Defaults describe a short
    sensing hop where the paper's r0 in [2, 20] cm sweep spans the full QBER
    dynamic range; long-range analytic experiments carry their own range."""

    range_z: float = 1500.0
    tx_waist: float = 0.025
    rx_aperture_d: float = 0.10
    grid_n: int = 256
    grid_extent: float = 0.31

    def violations(self) -> list[str]:
        out = []
        if not (_finite(self.range_z) and self.range_z > 0):
            out.append(f"range_z must be > 0 (got {self.range_z})")
        if not (_finite(self.tx_waist) and self.tx_waist > 0):
            out.append(f"tx_waist must be > 0 (got {self.tx_waist})")
        if not (_finite(self.rx_aperture_d) and self.rx_aperture_d > 0):
            out.append(f"rx_aperture_d must be > 0 (got {self.rx_aperture_d})")
        n = self.grid_n
        if not (isinstance(n, int) and n >= 64 and (n & (n - 1)) == 0):
            out.append(f"grid_n must be a power of two >= 64 (got {n})")
        if not (_finite(self.grid_extent) and self.grid_extent > 0):
            out.append(f"grid_extent must be > 0 (got {self.grid_extent})")
        return out

    @property
    def pixel(self) -> float:
        return self.grid_extent / self.grid_n

    def receiver_waist(self, wavelength: float) -> float:
        """Vacuum Gaussian beam radius at the receiver plane."""
        z_r = math.pi * self.tx_waist**2 / wavelength
        return self.tx_waist * math.sqrt(1.0 + (self.range_z / z_r) ** 2)

    def check_extent(self, wavelength: float) -> list[str]:
        """Cross-config invariant: extent must hold the received beam."""
        w = self.receiver_waist(wavelength)
        out = []
        if self.grid_extent < 2 * (2 * w):
            out.append(
                f"grid_extent {self.grid_extent:.3g} m must be >= 2x receiver beam "
                f"diameter {2 * w:.3g} m x 2"
            )
        if self.rx_aperture_d > self.grid_extent:
            out.append("rx_aperture_d must fit inside grid_extent")
        return out


def _default_pairs(n_modes: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, i + 1) for i in range(0, n_modes, 2))


@dataclass(frozen=True)
class OamAlphabet(_Validated):
    """BB84 encoding alphabet.

    Z states are the listed topological charges; X states are the balanced
    superpositions (|a> +/- |b>)/sqrt(2) of each index pair in `pairs`.
    """

    modes: tuple[int, ...] = (1, -1)
    pairs: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.pairs is None:
            object.__setattr__(self, "pairs", _default_pairs(len(self.modes)))
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))
        super().__post_init__()

    def violations(self) -> list[str]:
        out = []
        if len(set(self.modes)) != len(self.modes):
            out.append("modes must be distinct")
        if len(self.modes) % 2 != 0 or len(self.modes) == 0:
            out.append(f"|modes| must be even and nonzero (got {len(self.modes)})")
        if any(abs(m) > 8 for m in self.modes):
            out.append("topological charges limited to |l| <= 8")
        idx = [i for pair in self.pairs for i in pair]
        if sorted(idx) != list(range(len(self.modes))):
            out.append("pairs must cover every mode index exactly once")
        return out

    @property
    def n_modes(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class DecoyConfig(_Validated):
    """Weak+vacuum decoy intensities and emission probabilities."""

    mu_s: float = 0.5
    mu_w: float = 0.15
    p_s: float = 0.6
    p_w: float = 0.3
    p_0: float = 0.1

    def violations(self) -> list[str]:
        out = []
        if not (0 < self.mu_w < self.mu_s):
            out.append(f"need 0 < mu_w < mu_s (got mu_w={self.mu_w}, mu_s={self.mu_s})")
        if not (self.mu_s <= 1.5):
            out.append(f"mu_s above 1.5 sanity cap (got {self.mu_s})")
        ps = (self.p_s, self.p_w, self.p_0)
        if any(p < 0 for p in ps):
            out.append("emission probabilities must be >= 0")
        if abs(sum(ps) - 1.0) > 1e-12:
            out.append(f"p_s + p_w + p_0 must be 1 within 1e-12 (got {sum(ps)!r})")
        return out


@dataclass(frozen=True)
class DetectorConfig(_Validated):
    eta_det: float = 0.6
    eta_mismatch: float = 1.0
    dark_rate_y0: float = 1e-5
    e0: float = 0.5
    f_ec: float = 1.1
    pulse_rate: float = 1e8
    channel_loss_db_per_km: float = 0.43
    fixed_loss_db: float = 3.0

    def violations(self) -> list[str]:
        out = []
        for name in ("eta_det", "eta_mismatch", "dark_rate_y0", "e0"):
            v = getattr(self, name)
            if not (0 <= v <= 1):
                out.append(f"{name} must lie in [0, 1] (got {v})")
        if self.eta_mismatch == 0:
            out.append("eta_mismatch must be in (0, 1]")
        if not (self.f_ec >= 1):
            out.append(f"f_ec must be >= 1 (got {self.f_ec})")
        if not (self.pulse_rate > 0):
            out.append(f"pulse_rate must be > 0 (got {self.pulse_rate})")
        if self.channel_loss_db_per_km < 0 or self.fixed_loss_db < 0:
            out.append("loss budgets must be >= 0 dB")
        return out


@dataclass(frozen=True)
class SecurityParams(_Validated):
    """Composable failure budget. eps_sec is split across the four
    parameter-estimation bounds, smoothing, and privacy amplification;
    defaults allocate eps_sec/6 to each slot."""

    eps_sec: float = 1e-9
    eps_cor: float = 1e-15
    eps_pe: float | None = None
    eps_smooth: float | None = None
    eps_pa: float | None = None

    def __post_init__(self):
        sixth = self.eps_sec / 6.0
        for name in ("eps_pe", "eps_smooth", "eps_pa"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, sixth)
        super().__post_init__()

    def violations(self) -> list[str]:
        out = []
        for name in ("eps_sec", "eps_cor", "eps_pe", "eps_smooth", "eps_pa"):
            v = getattr(self, name)
            if not (0 < v < 1):
                out.append(f"{name} must lie in (0, 1) (got {v})")
        if self.consumed_eps() > self.eps_sec * (1 + 1e-12):
            out.append(
                f"allocations 4*eps_pe + eps_smooth + eps_pa = {self.consumed_eps():.3g} "
                f"exceed eps_sec = {self.eps_sec:.3g}"
            )
        return out

    def consumed_eps(self) -> float:
        return 4 * self.eps_pe + self.eps_smooth + self.eps_pa


@dataclass(frozen=True)
class LinkConfig(_Validated):
    """Complete physical scenario for one link, shared by every experiment."""

    geometry: GeometryParams = field(default_factory=GeometryParams)
    turbulence: TurbulenceParams = field(default_factory=TurbulenceParams)
    pointing: PointingParams = field(default_factory=PointingParams)
    alphabet: OamAlphabet = field(default_factory=OamAlphabet)
    decoy: DecoyConfig = field(default_factory=DecoyConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    security: SecurityParams = field(default_factory=SecurityParams)
    # Intrinsic sifted error for analytic experiments; None defers to phys_channel.
    intrinsic_e_d: float | None = 0.03
    # Geometric capture multiplier on transmittance; None defers to phys_channel.
    capture: float | None = 1.0

    def violations(self) -> list[str]:
        out = []
        if self.intrinsic_e_d is not None and not (0 <= self.intrinsic_e_d <= 0.5):
            out.append(f"intrinsic_e_d must lie in [0, 0.5] (got {self.intrinsic_e_d})")
        if self.capture is not None and not (0 <= self.capture <= 1):
            out.append(f"capture must lie in [0, 1] (got {self.capture})")
        out.extend(self.geometry.check_extent(self.turbulence.wavelength))
        return out


def asdict_shallow(cfg) -> dict:
    """One-level dict of a config dataclass (sub-configs recurse)."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = asdict_shallow(v) if hasattr(v, "__dataclass_fields__") else v
    return out
