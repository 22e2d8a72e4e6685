"""Omegance: a verification lab for single-parameter granularity control.

One positive scalar, omega, multiplies the noise-prediction term of each
reverse-diffusion step. Values below 1 leave more residual high-frequency
content (finer detail); values above 1 remove more of it (smoother output).
The package provides omega-scaled deterministic, variance-exploding and
flow-matching samplers, spatial omega masks and temporal omega schedules,
closed-form Gaussian-mixture oracle denoisers standing in for trained
networks, and an analysis suite that verifies the scaling's SNR, variance,
mean-preservation and frequency-spectrum behaviour against independent
arithmetic routes.
"""

__version__ = "0.1.0"

from .analysis import (
    CoefficientState,
    ScalarTrajectory,
    SnrTrajectory,
    SpectrumProfile,
    band_energy,
    closed_form_scalar_trajectory,
    propagate_coefficients_ddim,
    radial_spectrum,
    snr_trajectory,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .omega import (
    DEFAULT_RESCALE,
    IDENTITY_CONTROL,
    ConstantSchedule,
    CosSchedule,
    ExpSchedule,
    OmegaControl,
    OmegaMask,
    OmegaSchedule,
    RescaleParams,
    TwoStageSchedule,
    mask_from_grayscale,
    mask_to_grayscale,
    preset_schedule,
    rescale,
    resolve_omega,
    schedule_eval,
)
from .oracles import (
    GaussianFieldSpec,
    GaussianMixture,
    epsilon_oracle,
    gaussian_field_2d,
    sample_prior,
    standard_normal,
    velocity_oracle,
)
from .samplers import (
    Denoiser,
    LatentState,
    NumericAbortError,
    SamplerConfig,
    Trajectory,
    ddim_step,
    ddim_step_reference,
    euler_step,
    euler_step_reference,
    flow_step,
    flow_step_reference,
    flow_update_mean,
    forward_noise,
    forward_noise_at,
    reference_trajectory,
    run_sampler,
)
from .schedules import (
    AlphaBarSchedule,
    BetaSchedule,
    CoefficientFormError,
    FlowTimesteps,
    SigmaSchedule,
    SignalDivergenceError,
    StepCoefficients,
    alpha_bar_from_betas,
    ddim_coefficients,
    euler_coefficients,
    flow_timesteps,
    karras_sigmas,
    make_linear_beta,
    modified_snr_ddim,
    schedule_to_csv,
    snr,
    step_coefficients,
)

__all__ = [name for name in dir() if not name.startswith("_")]
