"""Independent verification routes for omega-scaled sampling.

Every routine here reaches a quantity the samplers (or the closed-form SNR)
also produce, via a deliberately different arithmetic path: coefficient
propagation for the post-step SNR, scalar recursions for whole unit-normal
oracle trajectories, and annularly averaged FFT power for frequency-band
bookkeeping. Agreement between the routes is what the acceptance suite pins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .samplers import LatentState
from .schedules import AlphaBarSchedule, FlowTimesteps, modified_snr_ddim

__all__ = [
    "CoefficientState",
    "propagate_coefficients_ddim",
    "SnrTrajectory",
    "snr_trajectory",
    "ScalarTrajectory",
    "closed_form_scalar_trajectory",
    "SpectrumProfile",
    "radial_spectrum",
    "band_energy",
]


class CoefficientState(NamedTuple):
    """Latent decomposition z = z0_coeff * z0 + eps_coeff * eps."""

    z0_coeff: float
    eps_coeff: float


def propagate_coefficients_ddim(
    schedule: AlphaBarSchedule,
    omega: float,
    from_t: int,
    steps: int = 1,
    start: CoefficientState | None = None,
) -> list[CoefficientState]:
    """Track (z0_coeff, eps_coeff) across omega-scaled steps.

    Each step assumes the prediction equals the noise component of the
    current decomposition, so the pair evolves by the generic-step recurrence

        z0_coeff' = delta * z0_coeff
        eps_coeff' = delta * eps_coeff + zeta * omega.

    The default start is the forward-process decomposition at ``from_t``,
    (sqrt(abar), sqrt(1 - abar)); one step from there lands on
    z0_coeff = sqrt(abar_prev), and the squared coefficient ratio equals
    modified_snr_ddim(schedule, from_t, omega). The two routes share no
    arithmetic, which is what makes the comparison a real check. Pass an
    explicit ``start`` such as (0, 1) to model an idealised pure-noise state.
    """
    if not 1 <= from_t <= schedule.num_steps:
        raise ValueError(f"from_t {from_t} outside [1, {schedule.num_steps}]")
    if not 1 <= steps <= from_t:
        raise ValueError(f"steps must lie in [1, {from_t}] to stay on the ladder")
    if not (math.isfinite(omega) and omega > 0.0):
        raise ValueError("omega must be a positive finite number")
    if start is None:
        ab = schedule.alpha_bar(from_t)
        start = CoefficientState(math.sqrt(ab), math.sqrt(1.0 - ab))
    out = [start]
    z0_coeff, eps_coeff = start
    for t in range(from_t, from_t - steps, -1):
        ab_t = schedule.alpha_bar(t)
        ab_prev = schedule.alpha_bar(t - 1)
        root_t = math.sqrt(ab_t)
        delta = math.sqrt(ab_prev) / root_t
        zeta = -math.sqrt(ab_prev) * math.sqrt(1.0 - ab_t) / root_t + math.sqrt(1.0 - ab_prev)
        z0_coeff = delta * z0_coeff
        eps_coeff = delta * eps_coeff + zeta * omega
        out.append(CoefficientState(z0_coeff, eps_coeff))
    return out


@dataclass(frozen=True)
class SnrTrajectory:
    """Post-step SNR values over the interior steps of a schedule."""

    steps: np.ndarray
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.steps.shape != self.values.shape:
            raise ValueError("steps and values must align")
        if np.any(self.values <= 0.0):
            raise ValueError("SNR values must be positive")


def snr_trajectory(schedule: AlphaBarSchedule, omega: float, mode: str = "analytic") -> SnrTrajectory:
    """Per-step post-step SNR, by closed form or by coefficient propagation.

    Steps run from t = 2 to T: the step from t = 1 references the exact
    pre-corruption anchor, where the unscaled ratio has no finite value.
    """
    if mode not in ("analytic", "propagated"):
        raise ValueError("mode must be 'analytic' or 'propagated'")
    ts = np.arange(2, schedule.num_steps + 1)
    if mode == "analytic":
        values = np.array([modified_snr_ddim(schedule, int(t), omega) for t in ts])
    else:
        values = np.empty(ts.size)
        for idx, t in enumerate(ts):
            z0_coeff, eps_coeff = propagate_coefficients_ddim(schedule, omega, int(t), steps=1)[-1]
            values[idx] = (z0_coeff * z0_coeff) / (eps_coeff * eps_coeff)
    return SnrTrajectory(ts, values, mode)


@dataclass(frozen=True)
class ScalarTrajectory:
    """Per-step multipliers of a unit-normal-oracle trajectory.

    The deviation multipliers apply elementwise. For flow matching the
    latent mean evolves under its own multiplier (the mean-preserving step
    scales only the zero-mean part), so both sequences are tracked; plain
    deterministic stepping keeps the whole latent on one scalar and
    ``mean_multipliers`` stays None.
    """

    kind: str
    multipliers: np.ndarray
    mean_multipliers: np.ndarray | None = None

    def reconstruct(self, z_init) -> list[np.ndarray]:
        """States after 0..n steps for a concrete starting latent."""
        z0 = np.asarray(z_init, dtype=np.float64)
        deviation = np.concatenate(([1.0], np.cumprod(self.multipliers)))
        if self.kind == "ddim":
            return [c * z0 for c in deviation]
        mean_track = np.concatenate(([1.0], np.cumprod(self.mean_multipliers)))
        m0 = float(z0.mean())
        return [c * (z0 - m0) + mc * m0 for c, mc in zip(deviation, mean_track)]


def closed_form_scalar_trajectory(kind: str, schedule, omega: float) -> ScalarTrajectory:
    """Exact per-step multipliers when the denoiser is the unit-normal oracle.

    ddim (on the ladder actually stepped): the prediction sqrt(1-abar_t) * z
    makes each step a pure scaling by

        c_t = sqrt(abar_prev) * (1 - (1-abar_t) * omega) / sqrt(abar_t)
              + sqrt(1-abar_prev) * sqrt(1-abar_t) * omega.

    flow: the velocity (2t-1) / ((1-t)^2 + t^2) * z splits each step into a
    deviation multiplier 1 + dt*s*omega and a mean multiplier 1 + dt*s.
    """
    if not (math.isfinite(omega) and omega > 0.0):
        raise ValueError("omega must be a positive finite number")
    if kind == "ddim":
        if not isinstance(schedule, AlphaBarSchedule):
            raise ValueError("ddim closed form needs an AlphaBarSchedule ladder")
        multipliers = []
        for t in range(schedule.num_steps, 0, -1):
            ab_t = schedule.alpha_bar(t)
            ab_prev = schedule.alpha_bar(t - 1)
            c = math.sqrt(ab_prev) * (1.0 - (1.0 - ab_t) * omega) / math.sqrt(ab_t) + math.sqrt(
                1.0 - ab_prev
            ) * math.sqrt(1.0 - ab_t) * omega
            multipliers.append(c)
        return ScalarTrajectory("ddim", np.array(multipliers))
    if kind == "flow":
        if not isinstance(schedule, FlowTimesteps):
            raise ValueError("flow closed form needs FlowTimesteps")
        deviation, mean_track = [], []
        for k in range(schedule.num_steps):
            t = float(schedule.times[k])
            dt = schedule.dt(k)
            slope = (2.0 * t - 1.0) / ((1.0 - t) ** 2 + t**2)
            deviation.append(1.0 + dt * slope * omega)
            mean_track.append(1.0 + dt * slope)
        return ScalarTrajectory("flow", np.array(deviation), np.array(mean_track))
    raise ValueError(f"no closed-form trajectory for kind {kind!r}")


@dataclass(frozen=True)
class SpectrumProfile:
    """Annularly averaged power of a 2-D latent; bin b collects integer radius b.

    ``mean_power[b] * counts[b]`` summed over all bins equals the latent's
    total energy sum(z**2) (the FFT power is normalised by the cell count).
    """

    mean_power: np.ndarray
    counts: np.ndarray
    split_radius: float

    def total_power(self) -> float:
        return float(np.sum(self.mean_power * self.counts))


def radial_spectrum(values, split_radius: float | None = None) -> SpectrumProfile:
    """Radial profile of |FFT|^2 / N with the DC term alone in bin 0.

    Frequencies are binned by rounding the integer-frequency radius
    sqrt(ky^2 + kx^2). The default band split is half the Nyquist radius,
    min(H, W) / 4.
    """
    if isinstance(values, LatentState):
        values = values.values
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("radial spectrum requires a 2-D latent")
    if min(arr.shape) < 4:
        raise ValueError("latent must be at least 4x4")
    height, width = arr.shape
    power = np.abs(np.fft.fft2(arr)) ** 2 / arr.size
    freq_y = np.fft.fftfreq(height) * height
    freq_x = np.fft.fftfreq(width) * width
    radii = np.hypot(freq_y[:, None], freq_x[None, :])
    bins = np.rint(radii).astype(int).ravel()
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=power.ravel())
    mean_power = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    if split_radius is None:
        split_radius = min(height, width) / 4.0
    if not split_radius > 0.0:
        raise ValueError("split_radius must be positive")
    return SpectrumProfile(mean_power, counts, float(split_radius))


def band_energy(profile: SpectrumProfile, band: str) -> float:
    """Total power in one band: bins strictly below the split radius are 'low'."""
    if band not in ("low", "high"):
        raise ValueError("band must be 'low' or 'high'")
    radii = np.arange(profile.mean_power.size)
    selected = radii < profile.split_radius if band == "low" else radii >= profile.split_radius
    return float(np.sum(profile.mean_power[selected] * profile.counts[selected]))
