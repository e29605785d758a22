"""Scenario configuration and closed-form performance metrics.

Holds the full system description (array, users, targets, power, noise,
frame budget, reliability targets) and the metrics every solver and
experiment is judged by: per-user SINR, the short-packet achievable rate
with its dispersion penalty, the radar beamforming error against an ideal
steering precoder, and transmit beampatterns.

Rates are handled in nats throughout; conversion to bits happens only at
the reporting boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import ArrayGeometry, ChannelSet, steering_matrix
from .numerics import inv_q

__all__ = [
    "SystemConfig",
    "HybridPrecoder",
    "RadarSpec",
    "ideal_radar_precoder",
    "sinr",
    "dispersion",
    "shannon_rate",
    "fbl_rate",
    "sum_rate",
    "rbe",
    "beampattern",
    "desired_beampattern",
    "NATS_PER_BIT",
]

NATS_PER_BIT = float(np.log(2.0))


@dataclass(frozen=True)
class SystemConfig:
    """Complete scenario description, all quantities in linear units.

    Powers are watts, rates are nats, angles are degrees.
    """

    n_tx: int = 128
    n_rf: int = 4
    n_cu: int = 2
    n_tar: int = 2
    p_max: float = 1.0            # 30 dBm
    noise: float = 1e-12          # -90 dBm
    frame_budget: int = 128
    eps: tuple = (1e-5, 1e-5)
    eta: tuple = (0.5, 0.5)
    e_max: float = 0.15
    target_angles_deg: tuple = (-60.0, -20.0)
    cu_angles_deg: Optional[tuple] = (30.0, 60.0)
    distances_m: Optional[tuple] = None
    n_clu: int = 5
    n_ray: int = 10
    angular_spread_deg: float = 10.0
    shadow_std_db: float = 5.8
    spacing_over_lambda: float = 0.5

    def __post_init__(self):
        if not (self.n_cu <= self.n_rf <= self.n_tx):
            raise ValueError(
                f"need n_cu <= n_rf <= n_tx, got {self.n_cu}, {self.n_rf}, {self.n_tx}"
            )
        if len(self.eps) != self.n_cu or len(self.eta) != self.n_cu:
            raise ValueError("eps and eta must have one entry per user")
        if any(not 0 < e < 1 for e in self.eps):
            raise ValueError("error probabilities must lie in (0, 1)")
        # eta entries in (0, 1]; a single-user scenario forces eta = 1
        if any(not 0 < v <= 1 for v in self.eta):
            raise ValueError("rate fractions must lie in (0, 1]")
        if abs(sum(self.eta) - 1.0) > 1e-12:
            raise ValueError(f"rate fractions must sum to 1, got {sum(self.eta)}")
        if self.p_max <= 0 or self.noise <= 0:
            raise ValueError("p_max and noise must be positive")
        if self.frame_budget < self.n_cu:
            raise ValueError("frame budget must cover at least one symbol per user")
        if len(self.target_angles_deg) != self.n_tar:
            raise ValueError("target_angles_deg must have one entry per target")
        if self.n_tar > self.n_rf:
            raise ValueError("need n_tar <= n_rf so the auxiliary matrix is wide")

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_tx, self.spacing_over_lambda)

    def with_updates(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


@dataclass
class HybridPrecoder:
    """RF stage (unit-modulus), baseband stage, and the auxiliary row-unitary.

    f_rf: (N_t, N_RF), f_bb: (N_RF, M), u: (N_tar, M).
    """

    f_rf: np.ndarray
    f_bb: np.ndarray
    u: np.ndarray

    def effective(self) -> np.ndarray:
        """Composite transmit precoder F_rf @ F_bb, shape (N_t, M)."""
        return self.f_rf @ self.f_bb

    def transmit_power(self) -> float:
        return float(np.linalg.norm(self.effective()) ** 2)

    def validate(self, p_max: float, unit_modulus: bool = True) -> None:
        """Raise if any structural invariant is violated.

        unit_modulus=False admits fully-digital precoders, where f_rf is an
        arbitrary fixed mixing matrix rather than a phase-shifter bank.
        """
        if unit_modulus:
            if np.max(np.abs(np.abs(self.f_rf) - 1.0)) > 1e-10:
                raise ValueError("RF precoder entries must have unit modulus")
        gram = self.u @ self.u.conj().T
        if np.max(np.abs(gram - np.eye(self.u.shape[0]))) > 1e-10:
            raise ValueError("auxiliary matrix rows must be orthonormal")
        if self.transmit_power() > p_max + 1e-8:
            raise ValueError(
                f"transmit power {self.transmit_power():.6g} exceeds budget {p_max:.6g}"
            )


@dataclass(frozen=True)
class RadarSpec:
    """Ideal sensing precoder: one steering column per target.

    Columns are unit-norm steering vectors, optionally scaled so the
    reference radiates a given total power (the sensing error is then
    measured against a full-budget radar transmission, which is what makes
    small error caps attainable at all within the power budget).
    """

    f_r: np.ndarray
    target_angles_deg: tuple


def ideal_radar_precoder(angles_deg: Sequence[float], geom: ArrayGeometry,
                         power: Optional[float] = None) -> RadarSpec:
    """Steering columns toward each target angle.

    With power=None the columns stay unit norm; otherwise each column is
    scaled by sqrt(power / n_targets) so the reference spends exactly
    `power` watts in total.
    """
    angles = tuple(float(a) for a in angles_deg)
    if len(angles) == 0:
        raise ValueError("need at least one target angle")
    f_r = steering_matrix(angles, geom)
    if power is not None:
        if power <= 0:
            raise ValueError("reference power must be positive")
        f_r = f_r * np.sqrt(power / len(angles))
    return RadarSpec(f_r=f_r, target_angles_deg=angles)


def sinr(ch: ChannelSet, pc: HybridPrecoder, noise: float) -> np.ndarray:
    """Per-user SINR of the composite precoder."""
    t = ch.h.conj() @ pc.effective()  # t[m, n] = h_m^H F f_n
    powers = np.abs(t) ** 2
    signal = np.diag(powers)
    interference = powers.sum(axis=1) - signal
    return signal / (interference + noise)


def dispersion(gamma: float):
    """Channel dispersion 1 - 1/(1+gamma)^2 of the normal approximation."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    out = 1.0 - 1.0 / (1.0 + gamma) ** 2
    return float(out) if out.ndim == 0 else out


def shannon_rate(gamma: float):
    """Infinite-blocklength rate ln(1 + gamma), in nats."""
    return np.log1p(np.asarray(gamma, dtype=float))


def fbl_rate(gamma: float, beta, eps: float):
    """Short-packet achievable rate in nats per channel use.

    ln(1+gamma) minus the dispersion penalty sqrt(V/beta) * Q^{-1}(eps).
    May be negative at small blocklengths; callers clamp where appropriate.
    """
    gamma = np.asarray(gamma, dtype=float)
    beta_arr = np.asarray(beta, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    if np.any(beta_arr < 1):
        raise ValueError("blocklength must be >= 1")
    penalty = np.sqrt(dispersion(gamma) / beta_arr) * inv_q(eps)
    out = np.log1p(gamma) - penalty
    return float(out) if out.ndim == 0 else out


def sum_rate(gammas: np.ndarray, betas: np.ndarray, eps: Sequence[float]) -> float:
    """Aggregate rate in nats; negative per-user rates count as zero."""
    total = 0.0
    for g, b, e in zip(np.atleast_1d(gammas), np.atleast_1d(betas), eps):
        total += max(0.0, fbl_rate(float(g), float(b), float(e)))
    return total


def rbe(pc: HybridPrecoder, rs: RadarSpec) -> float:
    """Radar beamforming error: squared Frobenius gap to the ideal precoder."""
    return float(np.linalg.norm(pc.effective() - rs.f_r @ pc.u) ** 2)


def beampattern(pc: HybridPrecoder, grid_deg: Sequence[float], geom: ArrayGeometry) -> np.ndarray:
    """Transmit power G(theta) = a(theta)^H C_x a(theta) on an angle grid.

    Evaluated through the factored form |a^H F|^2, which is exactly the
    quadratic form in the transmit covariance; clamped at zero against
    roundoff.
    """
    grid = np.atleast_1d(np.asarray(grid_deg, dtype=float))
    if grid.size == 0:
        raise ValueError("angle grid must be nonempty")
    a = steering_matrix(grid, geom)  # (N_t, G)
    proj = a.conj().T @ pc.effective()  # (G, M)
    g = np.sum(np.abs(proj) ** 2, axis=1)
    return np.maximum(g, 0.0)


def desired_beampattern(target_angles_deg, spread_deg: float, grid_deg) -> np.ndarray:
    """Indicator mask: 1 strictly inside (target +- spread), else 0."""
    if spread_deg <= 0:
        raise ValueError("spread must be positive")
    grid = np.atleast_1d(np.asarray(grid_deg, dtype=float))
    mask = np.zeros(grid.shape)
    for center in np.atleast_1d(target_angles_deg):
        mask[np.abs(grid - center) < spread_deg] = 1.0
    return mask
