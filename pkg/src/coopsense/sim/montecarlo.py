"""Sampling reference for the unscented frame transform."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import GaussianPose2, wrap_angle

__all__ = ["monte_carlo_reference", "monte_carlo_batch", "sample_moments"]


def _draw(rng: np.random.Generator, g: GaussianPose2, n: int) -> np.ndarray:
    # eigen square root: handles singular covariances without jitter
    cov = np.asarray(g.cov)
    z = rng.standard_normal((n, 3))
    if np.count_nonzero(cov - np.diag(np.diag(cov))) == 0:
        z *= np.sqrt(np.diag(cov))
    else:
        w, v = np.linalg.eigh(cov)
        z = z @ (v * np.sqrt(np.clip(w, 0.0, None))).T
    z += g.mean.as_array()
    return z


def sample_moments(samples: np.ndarray, heading_ref: float | None = None):
    """Circular-aware sample mean and covariance of (n, 3) poses.

    Heading residuals are wrapped about ``heading_ref`` (the circular mean of
    the samples when not given) before averaging.
    """
    # shifted by the first sample, so identical samples give exactly zero spread
    shift = samples[:, :2] - samples[0, :2]
    dxy = shift.mean(axis=0)
    mean_xy = samples[0, :2] + dxy
    if heading_ref is None:
        heading_ref = math.atan2(np.sin(samples[:, 2]).mean(), np.cos(samples[:, 2]).mean())
    resid = np.empty_like(samples)
    resid[:, :2] = shift - dxy
    resid[:, 2] = wrap_angle(samples[:, 2] - heading_ref)
    dh = resid[:, 2].mean()
    resid[:, 2] -= dh
    cov = resid.T @ resid / len(samples)
    return np.array([mean_xy[0], mean_xy[1], wrap_angle(heading_ref + dh)]), cov


def monte_carlo_reference(receiver: GaussianPose2, sender: GaussianPose2, obj: GaussianPose2,
                          n_samples: int = 1_000_000, seed: int = 0):
    """Mean and covariance of ``trans(R, S, p)`` from independent samples."""
    return monte_carlo_batch(receiver, sender, [obj], n_samples, seed)[0]


def monte_carlo_batch(receiver: GaussianPose2, sender: GaussianPose2, objects,
                      n_samples: int = 1_000_000, seed: int = 0):
    """Reference moments for several objects seen by the same station pair.

    Station samples are shared between the objects; each object's estimate is
    still drawn from the exact joint of its own (receiver, sender, object)
    triple, which is all the oracle needs.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    r = _draw(rng, receiver, n_samples)
    s = _draw(rng, sender, n_samples)
    cs, ss = np.cos(s[:, 2]), np.sin(s[:, 2])
    cr, sr = np.cos(r[:, 2]), np.sin(r[:, 2])
    base_x = s[:, 0] - r[:, 0]
    base_y = s[:, 1] - r[:, 1]
    dtheta = s[:, 2] - r[:, 2]
    out = []
    for obj in objects:
        p = _draw(rng, obj, n_samples)
        dx = base_x + cs * p[:, 0] - ss * p[:, 1]
        dy = base_y + ss * p[:, 0] + cs * p[:, 1]
        y = np.empty_like(p)
        y[:, 0] = cr * dx + sr * dy
        y[:, 1] = cr * dy - sr * dx
        y[:, 2] = p[:, 2] + dtheta
        ref = obj.mean.theta + sender.mean.theta - receiver.mean.theta
        out.append(sample_moments(y, heading_ref=ref))
    return out
