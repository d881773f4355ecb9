import numpy as np

from dynreg.exceptions import DegenerateComposerError, ShapeError

LOG_2PI = np.log(2.0 * np.pi)


def gaussian_log_prob(mean, log_std, action):
    """Log density of a diagonal Gaussian, summed over the last axis."""
    mean = np.asarray(mean, dtype=float)
    action = np.asarray(action, dtype=float)
    log_std = np.broadcast_to(np.asarray(log_std, dtype=float), mean.shape)
    if action.shape != mean.shape:
        raise ShapeError(f"action shape {action.shape} does not match mean shape {mean.shape}")
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z**2, axis=-1) - np.sum(log_std, axis=-1) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_log_prob_grad_mean(mean, log_std, action):
    """∂ log p / ∂ mean = (action − mean) / σ²."""
    return (np.asarray(action, dtype=float) - np.asarray(mean, dtype=float)) * np.exp(-2.0 * np.asarray(log_std))


def gaussian_sample(mean, log_std, rng):
    mean = np.asarray(mean, dtype=float)
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def mcp_compose(primitive_means, weights, fixed_std=None):
    """Composite mean of primitives sharing one fixed diagonal covariance.

    The product of Gaussians ∏ N(μᵢ, σ²)^{wᵢ} is again Gaussian with mean
    Σ wᵢ μᵢ / Σ wᵢ. Shapes: means (..., n, d), weights (..., n).
    Returns (mean, std); std is `fixed_std` unchanged.
    """
    means = np.asarray(primitive_means, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != means.shape[:-1]:
        raise ShapeError(f"composer weights {weights.shape} do not match primitive means {means.shape}")
    if np.any(weights < 0.0):
        raise DegenerateComposerError("composer weights must be non-negative")
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise DegenerateComposerError("composer weights are all zero")
    normalized = weights / total
    return np.einsum("...n,...nd->...d", normalized, means), fixed_std


def mcp_compose_backward(primitive_means, weights, grad_mean):
    """Gradients of the composite mean with respect to the primitive means and raw weights."""
    means = np.asarray(primitive_means, dtype=float)
    weights = np.asarray(weights, dtype=float)
    grad_mean = np.asarray(grad_mean, dtype=float)
    total = weights.sum(axis=-1, keepdims=True)
    normalized = weights / total
    composite = np.einsum("...n,...nd->...d", normalized, means)
    grad_means = normalized[..., :, None] * grad_mean[..., None, :]
    grad_weights = np.einsum("...nd,...d->...n", means - composite[..., None, :], grad_mean) / total
    return grad_means, grad_weights
