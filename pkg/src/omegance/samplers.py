"""Omega-scaled reverse-process steps and trajectory execution.

Three step families share one pattern: a prediction is formed at the current
noise level and its contribution is multiplied by omega (a scalar or a
per-cell field). Each scaled step has an unscaled reference twin; at
omega = 1 the scaled code path multiplies by the float 1.0 and reproduces the
reference bit for bit, which is the identity contract the test-suite pins.

The flow-matching step additionally recentres its update: the raw update
dt * v is not zero-mean, and scaling it directly would drift the latent mean
(visible as a colour shift once such latents are decoded). Only the
deviation from the mean is scaled,

    m  = mean(dt * v)
    z' = z + (dt * v - m) * omega + m

so mean(z') matches the unscaled step for every scalar omega.

Randomness: a trajectory consumes random numbers only for the churn
perturbation of the variance-exploding sampler, drawn from stream 1 of
``numpy.random.SeedSequence(config.seed).spawn(2)``. Stream 0 is reserved for
callers drawing the initial latent, so trajectory noise and prior draws never
share a stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .omega import IDENTITY_CONTROL, OmegaControl
from .schedules import AlphaBarSchedule, FlowTimesteps, SigmaSchedule

__all__ = [
    "NumericAbortError",
    "Denoiser",
    "LatentState",
    "SamplerConfig",
    "Trajectory",
    "forward_noise_at",
    "forward_noise",
    "ddim_step",
    "ddim_step_reference",
    "euler_step",
    "euler_step_reference",
    "flow_step",
    "flow_step_reference",
    "flow_update_mean",
    "run_sampler",
    "reference_trajectory",
]

SAMPLER_KINDS = ("ddim", "euler", "flow")


class NumericAbortError(ArithmeticError):
    """Non-finite value during sampling; ``step`` counts completed steps."""

    def __init__(self, step: int, message: str):
        super().__init__(message)
        self.step = step


class Denoiser(Protocol):
    """Prediction interface: output shape equals input shape, deterministic in (z, level)."""

    def epsilon_predict(
        self, z: np.ndarray, *, alpha_bar: float | None = None, sigma: float | None = None
    ) -> np.ndarray: ...

    def velocity_predict(self, z: np.ndarray, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class LatentState:
    """Latent values plus the number of sampling steps already applied."""

    values: np.ndarray
    step: int = 0


def _check_omega_field(omega, shape) -> None:
    if isinstance(omega, np.ndarray):
        if omega.shape != tuple(shape):
            raise ValueError(f"omega field {omega.shape} does not match latent shape {tuple(shape)}")
        if np.any(omega <= 0.0):
            raise ValueError("omega field cells must be positive")
    elif not omega > 0.0:
        raise ValueError("omega must be positive")


def _check_pair(z: np.ndarray, other: np.ndarray, name: str) -> None:
    if other.shape != z.shape:
        raise ValueError(f"{name} shape {other.shape} does not match latent shape {z.shape}")


def forward_noise_at(z0: np.ndarray, alpha_bar: float, eps: np.ndarray) -> np.ndarray:
    """Corrupt a clean latent: sqrt(abar) * z0 + sqrt(1 - abar) * eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_pair(z0, eps, "eps")
    if not 0.0 <= alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in [0, 1]")
    return math.sqrt(alpha_bar) * z0 + math.sqrt(1.0 - alpha_bar) * eps


def forward_noise(z0: np.ndarray, schedule: AlphaBarSchedule, t: int, eps: np.ndarray) -> np.ndarray:
    """Corrupt a clean latent to step t of the schedule."""
    return forward_noise_at(z0, schedule.alpha_bar(t), eps)


def ddim_step(z, schedule: AlphaBarSchedule, t: int, eps_pred, omega=1.0) -> np.ndarray:
    """One deterministic step from ladder index t with the prediction scaled by omega.

    Per cell: z' = sqrt(abar_prev) * (z - sqrt(1-abar_t) * eps * omega) / sqrt(abar_t)
                   + sqrt(1-abar_prev) * eps * omega.
    """
    z = np.asarray(z, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    _check_pair(z, eps_pred, "eps_pred")
    if t < 1:
        raise ValueError("ddim steps start at ladder index 1")
    _check_omega_field(omega, z.shape)
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    scaled = eps_pred * omega
    predicted_z0 = (z - math.sqrt(1.0 - ab_t) * scaled) / math.sqrt(ab_t)
    return math.sqrt(ab_prev) * predicted_z0 + math.sqrt(1.0 - ab_prev) * scaled


def ddim_step_reference(z, schedule: AlphaBarSchedule, t: int, eps_pred) -> np.ndarray:
    """Unscaled deterministic step; the baseline the omega path is checked against."""
    z = np.asarray(z, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    _check_pair(z, eps_pred, "eps_pred")
    if t < 1:
        raise ValueError("ddim steps start at ladder index 1")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    predicted_z0 = (z - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    return math.sqrt(ab_prev) * predicted_z0 + math.sqrt(1.0 - ab_prev) * eps_pred


def euler_step(z, schedule: SigmaSchedule, i: int, eps_pred, omega=1.0) -> np.ndarray:
    """One variance-exploding step: z + (sigma_next - sigma_hat) * eps * omega."""
    z = np.asarray(z, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    _check_pair(z, eps_pred, "eps_pred")
    _check_omega_field(omega, z.shape)
    sigma_hat = schedule.sigma_hat(i)
    sigma_next = float(schedule.sigmas[i + 1])
    return z + (sigma_next - sigma_hat) * (eps_pred * omega)


def euler_step_reference(z, schedule: SigmaSchedule, i: int, eps_pred) -> np.ndarray:
    """Unscaled variance-exploding step."""
    z = np.asarray(z, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    _check_pair(z, eps_pred, "eps_pred")
    sigma_hat = schedule.sigma_hat(i)
    sigma_next = float(schedule.sigmas[i + 1])
    return z + (sigma_next - sigma_hat) * eps_pred


def flow_update_mean(dt: float, v_pred) -> float:
    """Mean over all latent cells of the raw update dt * v."""
    return float(np.mean(dt * np.asarray(v_pred, dtype=np.float64)))


def flow_step(z, dt: float, v_pred, omega=1.0) -> np.ndarray:
    """One mean-preserving flow step: scale only the zero-mean part of dt * v.

    At omega = 1 the recentring detour is skipped so the result is
    bit-identical to the plain update z + dt * v.
    """
    z = np.asarray(z, dtype=np.float64)
    v_pred = np.asarray(v_pred, dtype=np.float64)
    _check_pair(z, v_pred, "v_pred")
    if z.size == 0:
        raise ValueError("empty latent")
    if dt == 0.0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    _check_omega_field(omega, z.shape)
    update = dt * v_pred
    if np.all(omega == 1.0):
        return z + update
    m = float(np.mean(update))
    return z + ((update - m) * omega + m)


def flow_step_reference(z, dt: float, v_pred) -> np.ndarray:
    """Plain integration step z + dt * v."""
    z = np.asarray(z, dtype=np.float64)
    v_pred = np.asarray(v_pred, dtype=np.float64)
    _check_pair(z, v_pred, "v_pred")
    if z.size == 0:
        raise ValueError("empty latent")
    if dt == 0.0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    update = dt * v_pred
    return z + update


@dataclass(frozen=True)
class SamplerConfig:
    """Everything a trajectory needs besides the denoiser and the initial latent."""

    kind: str
    steps: int
    schedule: AlphaBarSchedule | SigmaSchedule | FlowTimesteps
    control: OmegaControl = field(default=IDENTITY_CONTROL)
    seed: int = 0
    snapshots: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"kind must be one of {SAMPLER_KINDS}")
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")
        if self.kind == "ddim":
            if not isinstance(self.schedule, AlphaBarSchedule):
                raise ValueError("ddim requires an AlphaBarSchedule")
            if self.steps > self.schedule.num_steps:
                raise ValueError("steps exceeds the schedule length")
        elif self.kind == "euler":
            if not isinstance(self.schedule, SigmaSchedule):
                raise ValueError("euler requires a SigmaSchedule")
            if self.schedule.num_steps != self.steps:
                raise ValueError("sigma schedule must provide exactly `steps` levels")
        else:
            if not isinstance(self.schedule, FlowTimesteps):
                raise ValueError("flow requires FlowTimesteps")
            if self.schedule.num_steps != self.steps:
                raise ValueError("flow timesteps must provide exactly `steps` steps")
        snaps = tuple(sorted(set(int(s) for s in self.snapshots)))
        if snaps and not (0 <= snaps[0] and snaps[-1] <= self.steps):
            raise ValueError(f"snapshot indices must lie in [0, {self.steps}]")
        object.__setattr__(self, "snapshots", snaps)
        sched = self.control.schedule
        if sched is not None and sched.total_steps != self.steps:
            raise ValueError("omega schedule length must equal the sampler step count")


@dataclass(frozen=True)
class Trajectory:
    """Requested intermediate states (ordered by step) plus the final clean estimate."""

    states: tuple[LatentState, ...]
    final: LatentState


def _prepare_latent(z_init) -> np.ndarray:
    values = z_init.values if isinstance(z_init, LatentState) else z_init
    z = np.array(values, dtype=np.float64)
    if z.ndim not in (1, 2) or z.size == 0:
        raise ValueError("latent must be a non-empty 1-D or 2-D array")
    if not np.all(np.isfinite(z)):
        raise NumericAbortError(0, "initial latent contains non-finite values")
    return z


def _check_capability(denoiser, kind: str) -> None:
    needed = "velocity_predict" if kind == "flow" else "epsilon_predict"
    if not callable(getattr(denoiser, needed, None)):
        raise TypeError(f"denoiser lacks the {needed} capability required by {kind!r}")


def _prediction(denoiser_output, z: np.ndarray) -> np.ndarray:
    pred = np.asarray(denoiser_output, dtype=np.float64)
    if pred.shape != z.shape:
        raise ValueError(f"denoiser output shape {pred.shape} does not match latent {z.shape}")
    return pred


def _churn_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])


def run_sampler(denoiser, config: SamplerConfig, z_init) -> Trajectory:
    """Run the configured reverse process and collect the requested snapshots.

    The trajectory is strictly sequential and fully determined by
    (config, z_init); non-finite values abort with the offending step index.
    """
    _check_capability(denoiser, config.kind)
    z = _prepare_latent(z_init)
    wanted = set(config.snapshots)
    states: list[LatentState] = []
    if 0 in wanted:
        states.append(LatentState(z.copy(), 0))

    if config.kind == "ddim":
        ladder = config.schedule.subsample(config.steps)
    elif config.kind == "euler" and config.schedule.churn > 0.0:
        rng = _churn_rng(config.seed)

    for k in range(config.steps):
        omega_field = config.control.resolve_field(z.shape, k)
        if config.kind == "ddim":
            t = config.steps - k
            eps = _prediction(denoiser.epsilon_predict(z, alpha_bar=ladder.alpha_bar(t)), z)
            z = ddim_step(z, ladder, t, eps, omega_field)
        elif config.kind == "euler":
            sched = config.schedule
            if sched.churn > 0.0:
                sigma_hat = sched.sigma_hat(k)
                bump = math.sqrt(sigma_hat**2 - float(sched.sigmas[k]) ** 2)
                z = z + bump * rng.standard_normal(z.shape)
                eps = _prediction(denoiser.epsilon_predict(z, sigma=sigma_hat), z)
            else:
                eps = _prediction(denoiser.epsilon_predict(z, sigma=float(sched.sigmas[k])), z)
            z = euler_step(z, sched, k, eps, omega_field)
        else:
            t = float(config.schedule.times[k])
            v = _prediction(denoiser.velocity_predict(z, t), z)
            z = flow_step(z, config.schedule.dt(k), v, omega_field)
        if not np.all(np.isfinite(z)):
            raise NumericAbortError(k + 1, f"non-finite latent after step {k + 1}")
        if (k + 1) in wanted:
            states.append(LatentState(z.copy(), k + 1))

    return Trajectory(tuple(states), LatentState(z, config.steps))


def reference_trajectory(denoiser, config: SamplerConfig, z_init) -> Trajectory:
    """Run the unscaled reference steps with the same schedule and randomness.

    The omega control on the config is ignored; this is the vanilla twin that
    omega = 1 runs must reproduce bit for bit.
    """
    _check_capability(denoiser, config.kind)
    z = _prepare_latent(z_init)
    wanted = set(config.snapshots)
    states: list[LatentState] = []
    if 0 in wanted:
        states.append(LatentState(z.copy(), 0))

    if config.kind == "ddim":
        ladder = config.schedule.subsample(config.steps)
    elif config.kind == "euler" and config.schedule.churn > 0.0:
        rng = _churn_rng(config.seed)

    for k in range(config.steps):
        if config.kind == "ddim":
            t = config.steps - k
            eps = _prediction(denoiser.epsilon_predict(z, alpha_bar=ladder.alpha_bar(t)), z)
            z = ddim_step_reference(z, ladder, t, eps)
        elif config.kind == "euler":
            sched = config.schedule
            if sched.churn > 0.0:
                sigma_hat = sched.sigma_hat(k)
                bump = math.sqrt(sigma_hat**2 - float(sched.sigmas[k]) ** 2)
                z = z + bump * rng.standard_normal(z.shape)
                eps = _prediction(denoiser.epsilon_predict(z, sigma=sigma_hat), z)
            else:
                eps = _prediction(denoiser.epsilon_predict(z, sigma=float(sched.sigmas[k])), z)
            z = euler_step_reference(z, sched, k, eps)
        else:
            t = float(config.schedule.times[k])
            v = _prediction(denoiser.velocity_predict(z, t), z)
            z = flow_step_reference(z, config.schedule.dt(k), v)
        if not np.all(np.isfinite(z)):
            raise NumericAbortError(k + 1, f"non-finite latent after step {k + 1}")
        if (k + 1) in wanted:
            states.append(LatentState(z.copy(), k + 1))

    return Trajectory(tuple(states), LatentState(z, config.steps))
