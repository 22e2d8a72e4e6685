"""Closed-form denoisers for known priors.

A Gaussian-mixture prior pushed through any affine Gaussian corruption
z = a * z0 + b * eps admits exact posterior means for both z0 and eps, so
these oracles stand in for trained prediction networks wherever a sampler
claim needs an exact reference. Scalar mixtures (component means of shape
(K,)) act independently on every latent cell, which makes them the substrate
for locality checks; vector mixtures couple coordinates through the component
responsibilities.

Responsibilities are always formed in log space with max subtraction, so the
normalising total never underflows to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianMixture",
    "standard_normal",
    "epsilon_oracle",
    "velocity_oracle",
    "sample_prior",
    "GaussianFieldSpec",
    "gaussian_field_2d",
]

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture with diagonal covariance; scalar (K,) or vector (K, d) components."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D vector")
        if (
            np.any(weights < 0.0)
            or not np.any(weights > 0.0)
            or abs(float(weights.sum()) - 1.0) > _WEIGHT_SUM_TOL
        ):
            raise ValueError("weights must be non-negative with positive total mass summing to 1")
        if means.shape != variances.shape or means.ndim not in (1, 2):
            raise ValueError("means and variances must share a (K,) or (K, d) shape")
        if means.shape[0] != weights.size:
            raise ValueError("component count mismatch between weights and means")
        if np.any(variances <= 0.0) or not np.all(np.isfinite(variances)):
            raise ValueError("variances must be finite and positive")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        for arr, name in ((weights, "weights"), (means, "means"), (variances, "variances")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_components(self) -> int:
        return int(self.weights.size)

    @property
    def is_scalar(self) -> bool:
        return self.means.ndim == 1

    @property
    def dimension(self) -> int:
        return 1 if self.is_scalar else int(self.means.shape[1])

    def _posterior(self, z, signal_scale: float, noise_scale: float):
        """Posterior means (E[eps | z], E[z0 | z]) under z = a*z0 + b*eps."""
        a, b = float(signal_scale), float(noise_scale)
        if not (math.isfinite(a) and math.isfinite(b)) or a < 0.0 or b < 0.0 or a + b == 0.0:
            raise ValueError("corruption scales must be non-negative with a positive sum")
        z = np.asarray(z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise ValueError("latent contains non-finite values")
        with np.errstate(divide="ignore"):  # zero weights contribute -inf, i.e. no mass
            log_weights = np.log(self.weights)
        if self.is_scalar:
            shape = z.shape
            flat = z.reshape(1, -1)
            centers = (a * self.means)[:, None]
            total_var = (a * a * self.variances + b * b)[:, None]
            diff = flat - centers
            log_resp = log_weights[:, None] - 0.5 * (
                diff * diff / total_var + np.log(2.0 * np.pi * total_var)
            )
            log_resp -= log_resp.max(axis=0, keepdims=True)
            resp = np.exp(log_resp)
            resp /= resp.sum(axis=0, keepdims=True)
            pull = diff / total_var
            eps_mean = (resp * (b * pull)).sum(axis=0).reshape(shape)
            z0_mean = (
                (resp * (self.means[:, None] + a * self.variances[:, None] * pull))
                .sum(axis=0)
                .reshape(shape)
            )
            return eps_mean, z0_mean
        if z.shape != (self.dimension,):
            raise ValueError(f"vector mixture expects a latent of shape ({self.dimension},)")
        centers = a * self.means
        total_var = a * a * self.variances + b * b
        diff = z[None, :] - centers
        log_resp = log_weights - 0.5 * np.sum(
            diff * diff / total_var + np.log(2.0 * np.pi * total_var), axis=1
        )
        log_resp -= log_resp.max()
        resp = np.exp(log_resp)
        resp /= resp.sum()
        pull = diff / total_var
        eps_mean = (resp[:, None] * (b * pull)).sum(axis=0)
        z0_mean = (resp[:, None] * (self.means + a * self.variances * pull)).sum(axis=0)
        return eps_mean, z0_mean

    def epsilon_given(self, z, signal_scale: float, noise_scale: float) -> np.ndarray:
        """Posterior-mean noise E[eps | a*z0 + b*eps = z]."""
        return self._posterior(z, signal_scale, noise_scale)[0]

    def posterior_z0(self, z, signal_scale: float, noise_scale: float) -> np.ndarray:
        """Posterior-mean clean latent E[z0 | a*z0 + b*eps = z]."""
        return self._posterior(z, signal_scale, noise_scale)[1]

    def epsilon_predict(self, z, *, alpha_bar: float | None = None, sigma: float | None = None):
        """Exact noise prediction for one of the two standard corruptions.

        Pass exactly one of ``alpha_bar`` (z = sqrt(abar) z0 + sqrt(1-abar) eps,
        0 < abar < 1) or ``sigma`` (z = z0 + sigma * eps, sigma > 0).
        """
        if (alpha_bar is None) == (sigma is None):
            raise TypeError("pass exactly one of alpha_bar and sigma")
        if alpha_bar is not None:
            if not 0.0 < alpha_bar < 1.0:
                raise ValueError("alpha_bar must lie strictly inside (0, 1)")
            return self.epsilon_given(z, math.sqrt(alpha_bar), math.sqrt(1.0 - alpha_bar))
        if sigma <= 0.0 or not math.isfinite(sigma):
            raise ValueError("sigma must be positive and finite")
        return self.epsilon_given(z, 1.0, float(sigma))

    def velocity_predict(self, z, t: float) -> np.ndarray:
        """Posterior-mean velocity E[eps - z0 | z] under z = (1-t) z0 + t eps."""
        if not 0.0 <= t <= 1.0:
            raise ValueError("flow time must lie in [0, 1]")
        eps_mean, z0_mean = self._posterior(z, 1.0 - float(t), float(t))
        return eps_mean - z0_mean


def standard_normal() -> GaussianMixture:
    """Unit-normal prior; its predictions are scalar multiples of the latent."""
    return GaussianMixture(np.array([1.0]), np.array([0.0]), np.array([1.0]))


def epsilon_oracle(mixture: GaussianMixture, z, alpha_bar: float) -> np.ndarray:
    """Exact E[eps | z] for the corruption z = sqrt(abar) z0 + sqrt(1-abar) eps."""
    return mixture.epsilon_predict(z, alpha_bar=alpha_bar)


def velocity_oracle(mixture: GaussianMixture, z, t: float) -> np.ndarray:
    """Exact E[eps - z0 | z] for the interpolation z = (1-t) z0 + t eps."""
    return mixture.velocity_predict(z, t)


def sample_prior(mixture: GaussianMixture, seed, n: int) -> np.ndarray:
    """n independent draws from the mixture; deterministic for a fixed seed."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError("n must be an integer >= 1")
    rng = np.random.default_rng(seed)
    picks = rng.choice(mixture.num_components, size=n, p=mixture.weights)
    if mixture.is_scalar:
        return mixture.means[picks] + np.sqrt(mixture.variances[picks]) * rng.standard_normal(n)
    noise = rng.standard_normal((n, mixture.dimension))
    return mixture.means[picks] + np.sqrt(mixture.variances[picks]) * noise


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Zero-mean stationary Gaussian grid with radial power proportional to r**spectral_exponent."""

    height: int
    width: int
    spectral_exponent: float = 0.0

    def __post_init__(self):
        for name in ("height", "width"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1")
        if not math.isfinite(self.spectral_exponent):
            raise ValueError("spectral_exponent must be finite")


def gaussian_field_2d(spec: GaussianFieldSpec, seed) -> np.ndarray:
    """Draw one field; exponent 0 is plain white noise (cells independent).

    For nonzero exponents the white draw is shaped in frequency space by the
    radial amplitude r**(exponent/2), normalised to unit mean-square over the
    nonzero frequencies and pinned to zero at DC, so the sample mean is
    exactly zero and the expected radial power profile follows the power law.
    A 1x1 grid degenerates to a single standard-normal draw.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    white = rng.standard_normal((spec.height, spec.width))
    if spec.spectral_exponent == 0.0 or (spec.height == 1 and spec.width == 1):
        return white
    freq_y = np.fft.fftfreq(spec.height) * spec.height
    freq_x = np.fft.fftfreq(spec.width) * spec.width
    radii = np.hypot(freq_y[:, None], freq_x[None, :])
    amplitude = np.zeros_like(radii)
    nonzero = radii > 0.0
    amplitude[nonzero] = radii[nonzero] ** (spec.spectral_exponent / 2.0)
    amplitude[nonzero] /= math.sqrt(float(np.mean(amplitude[nonzero] ** 2)))
    return np.fft.ifft2(np.fft.fft2(white) * amplitude).real
