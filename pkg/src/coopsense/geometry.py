"""SE(2) pose algebra and unscented propagation of perceived objects between
station frames.

A perceived object is reported in the frame of the sensing station.  To use it
the receiving station has to move it into its own body frame, and the result
carries three independent sources of uncertainty: the sensing station's
self-localisation, the receiver's self-localisation and the perception error
itself.  :func:`transform_with_uncertainty` stacks all three into a 9-D
augmented Gaussian and pushes it through :func:`trans` with sigma points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidArgumentError",
    "NumericDomainError",
    "Pose2",
    "GaussianPose2",
    "SigmaPointSet",
    "UTParams",
    "ConfidenceEllipse",
    "wrap_angle",
    "homogeneous",
    "trans",
    "trans_batch",
    "psd_cholesky",
    "sigma_points",
    "transform_with_uncertainty",
    "confidence_ellipse",
    "chi2_quantile_2dof",
]

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9
JITTER = 1e-12
TWO_PI = 2.0 * math.pi


class InvalidArgumentError(ValueError):
    pass


class NumericDomainError(ArithmeticError):
    pass


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    if np.ndim(a) == 0:
        r = math.pi - (math.pi - float(a)) % TWO_PI
        return math.pi if r <= -math.pi else r
    r = math.pi - np.mod(math.pi - np.asarray(a, dtype=float), TWO_PI)
    return np.where(r <= -math.pi, math.pi, r)


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidArgumentError(f"pose component {name} is not finite: {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, v) -> "Pose2":
        return cls(float(v[0]), float(v[1]), float(v[2]))


def _check_cov(cov, n: int, name: str = "cov") -> np.ndarray:
    cov = np.array(cov, dtype=float)
    if cov.shape != (n, n):
        raise InvalidArgumentError(f"{name} must be {n}x{n}, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL:
        raise InvalidArgumentError(f"{name} is not symmetric")
    cov = 0.5 * (cov + cov.T)
    if n and np.linalg.eigvalsh(cov).min() < -PSD_TOL:
        raise InvalidArgumentError(f"{name} is not positive semi-definite")
    return cov


@dataclass(frozen=True, eq=False)
class GaussianPose2:
    """Pose mean with a 3x3 covariance over (x, y, theta)."""

    mean: Pose2
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if not isinstance(self.mean, Pose2):
            object.__setattr__(self, "mean", Pose2.from_array(self.mean))
        cov = _check_cov(self.cov, 3)
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)

    def __eq__(self, other):
        if not isinstance(other, GaussianPose2):
            return NotImplemented
        return self.mean == other.mean and np.array_equal(self.cov, other.cov)

    def __repr__(self):
        return f"GaussianPose2(mean={self.mean!r}, cov={self.cov.tolist()!r})"

    @classmethod
    def from_std(cls, x, y, theta, sx=0.0, sy=0.0, stheta=0.0) -> "GaussianPose2":
        return cls(Pose2(x, y, theta), np.diag([sx * sx, sy * sy, stheta * stheta]))

    @property
    def position_cov(self) -> np.ndarray:
        return np.array(self.cov[:2, :2])


@dataclass(frozen=True)
class UTParams:
    alpha: float = 0.9
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidArgumentError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.kappa < 0.0:
            raise InvalidArgumentError(f"kappa must be >= 0, got {self.kappa}")


@dataclass(frozen=True, eq=False)
class SigmaPointSet:
    points: np.ndarray  # (2d+1, d)
    mean_weights: np.ndarray
    cov_weights: np.ndarray
    params: UTParams

    @property
    def lam(self) -> float:
        d = self.points.shape[1]
        return self.params.alpha ** 2 * (d + self.params.kappa) - d


@dataclass(frozen=True)
class ConfidenceEllipse:
    center: tuple
    semi_major: float
    semi_minor: float
    orientation: float
    probability_mass: float

    @property
    def area(self) -> float:
        return math.pi * self.semi_major * self.semi_minor


def homogeneous(pose: Pose2) -> np.ndarray:
    x, y, th = float(pose.x), float(pose.y), float(pose.theta)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(th)):
        raise InvalidArgumentError("homogeneous() needs a finite pose")
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def trans(receiver: Pose2, sender: Pose2, object_in_sender: Pose2) -> Pose2:
    """Express an object reported in the sender frame in the receiver frame."""
    p = np.array([object_in_sender.x, object_in_sender.y, 1.0])
    # inverse of a rigid transform: [R^T, -R^T t]
    t_r = homogeneous(receiver)
    rot_t = t_r[:2, :2].T
    t_r_inv = np.eye(3)
    t_r_inv[:2, :2] = rot_t
    t_r_inv[:2, 2] = -rot_t @ t_r[:2, 2]
    q = t_r_inv @ homogeneous(sender) @ p
    return Pose2(q[0], q[1], object_in_sender.theta + sender.theta - receiver.theta)


def trans_batch(receiver: np.ndarray, sender: np.ndarray, obj: np.ndarray) -> np.ndarray:
    """Vectorised :func:`trans` over rows of (n, 3) arrays.  Headings are wrapped."""
    receiver = np.atleast_2d(receiver)
    sender = np.atleast_2d(sender)
    obj = np.atleast_2d(obj)
    cs, ss = np.cos(sender[:, 2]), np.sin(sender[:, 2])
    gx = sender[:, 0] + cs * obj[:, 0] - ss * obj[:, 1]
    gy = sender[:, 1] + ss * obj[:, 0] + cs * obj[:, 1]
    dx = gx - receiver[:, 0]
    dy = gy - receiver[:, 1]
    cr, sr = np.cos(receiver[:, 2]), np.sin(receiver[:, 2])
    out = np.empty((max(len(receiver), len(sender), len(obj)), 3))
    out[:, 0] = cr * dx + sr * dy
    out[:, 1] = -sr * dx + cr * dy
    out[:, 2] = wrap_angle(obj[:, 2] + sender[:, 2] - receiver[:, 2])
    return out


def _semidefinite_cholesky(a: np.ndarray) -> np.ndarray | None:
    # Tolerates exact zero pivots so a zero-variance block yields zero-spread
    # sigma points rather than a failure.
    n = a.shape[0]
    diag = np.abs(np.diag(a))
    lower = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - lower[j, :j] @ lower[j, :j]
        rest = a[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]
        if d > 1e-12 * diag[j]:
            lower[j, j] = math.sqrt(d)
            lower[j + 1:, j] = rest / lower[j, j]
        elif d < -1e-12 * diag[j] - 1e-300:
            return None
        elif np.any(np.abs(rest) > 1e-7 * np.sqrt(diag[j + 1:] * diag.max()) + 1e-300):
            return None
    return lower


def psd_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``cov = L @ L.T``.

    Zero-variance directions are allowed.  If the factorisation breaks down a
    single ``1e-12 * I`` jitter is tried before raising
    :class:`NumericDomainError`.
    """
    cov = np.asarray(cov, dtype=float)
    lower = _semidefinite_cholesky(cov)
    if lower is None:
        lower = _semidefinite_cholesky(cov + JITTER * np.eye(cov.shape[0]))
    if lower is None:
        raise NumericDomainError("covariance is not positive semi-definite")
    return lower


def sigma_points(mean, cov, alpha: float = 0.9, beta: float = 2.0, kappa: float = 0.0) -> SigmaPointSet:
    """Scaled symmetric sigma-point set of size ``2d + 1``.

    ``lambda = alpha**2 (d + kappa) - d``; columns of the Cholesky factor of
    ``(d + lambda) cov`` are added to and subtracted from the mean.
    """
    params = UTParams(alpha, beta, kappa)
    mean = np.asarray(mean, dtype=float).ravel()
    d = mean.size
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (d, d):
        raise InvalidArgumentError(f"cov must be {d}x{d}, got {cov.shape}")
    lam = alpha ** 2 * (d + kappa) - d
    spread = psd_cholesky((d + lam) * cov)

    points = np.empty((2 * d + 1, d))
    points[0] = mean
    points[1:d + 1] = mean + spread.T
    points[d + 1:] = mean - spread.T

    wm = np.full(2 * d + 1, 0.5 / (d + lam))
    wc = wm.copy()
    wm[0] = lam / (d + lam)
    wc[0] = lam / (d + lam) + (1.0 - alpha ** 2 + beta)
    return SigmaPointSet(points, wm, wc, params)


def _pose_moments(samples: np.ndarray, wm: np.ndarray, wc: np.ndarray):
    """Weighted mean/covariance of (n, 3) poses with a circular heading."""
    # offsets from the centre point keep a zero spread exactly zero
    ref = samples[0]
    shift = samples[:, :2] - ref[:2]
    dxy = wm @ shift
    mean = ref[:2] + dxy
    heading = wrap_angle(ref[2] + wm @ wrap_angle(samples[:, 2] - ref[2]))
    resid = np.empty_like(samples)
    resid[:, :2] = shift - dxy
    resid[:, 2] = wrap_angle(samples[:, 2] - heading)
    cov = (resid * wc[:, None]).T @ resid
    return np.array([mean[0], mean[1], heading]), 0.5 * (cov + cov.T)


def transform_with_uncertainty(
    receiver: GaussianPose2,
    sender: GaussianPose2,
    object_in_sender: GaussianPose2,
    ut_params: UTParams | None = None,
) -> GaussianPose2:
    """Move a Gaussian object estimate from the sender frame to the receiver frame.

    Parameters
    ----------
    receiver, sender:
        Self-localisation estimates of both stations in the global frame.
    object_in_sender:
        Perceived object in the sender's body frame.
    ut_params:
        Sigma-point scaling; defaults to ``alpha=0.9, beta=2, kappa=0``.
    """
    p = ut_params or UTParams()
    mean = np.concatenate([receiver.mean.as_array(), sender.mean.as_array(), object_in_sender.mean.as_array()])
    cov = np.zeros((9, 9))
    cov[0:3, 0:3] = receiver.cov
    cov[3:6, 3:6] = sender.cov
    cov[6:9, 6:9] = object_in_sender.cov
    sp = sigma_points(mean, cov, p.alpha, p.beta, p.kappa)
    ys = trans_batch(sp.points[:, 0:3], sp.points[:, 3:6], sp.points[:, 6:9])
    m, c = _pose_moments(ys, sp.mean_weights, sp.cov_weights)
    # a negative centre weight can leave tiny negative eigenvalues
    w, v = np.linalg.eigh(c)
    if w.min() < 0.0:
        c = (v * np.clip(w, 0.0, None)) @ v.T
        c = 0.5 * (c + c.T)
    return GaussianPose2(Pose2.from_array(m), c)


def chi2_quantile_2dof(probability_mass: float) -> float:
    return -2.0 * math.log1p(-probability_mass)


def confidence_ellipse(position_cov, center=(0.0, 0.0), probability_mass: float = 0.95) -> ConfidenceEllipse:
    """Level-set ellipse of a 2-D Gaussian containing ``probability_mass``."""
    if not (0.0 < probability_mass < 1.0):
        raise InvalidArgumentError(f"probability_mass must lie in (0, 1), got {probability_mass}")
    cov = np.asarray(position_cov, dtype=float)
    if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
        raise InvalidArgumentError("position_cov must be a finite 2x2 matrix")
    if abs(cov[0, 1] - cov[1, 0]) > SYMMETRY_TOL:
        raise InvalidArgumentError("position_cov is not symmetric")
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    if w[0] < -PSD_TOL * max(1.0, abs(w[1])):
        raise NumericDomainError(f"position_cov has a negative eigenvalue {w[0]:.3g}")
    w = np.clip(w, 0.0, None)
    q = chi2_quantile_2dof(probability_mass)
    major_vec = v[:, 1]
    orientation = math.atan2(major_vec[1], major_vec[0])
    if orientation <= -math.pi / 2:
        orientation += math.pi
    elif orientation > math.pi / 2:
        orientation -= math.pi
    return ConfidenceEllipse(
        center=(float(center[0]), float(center[1])),
        semi_major=math.sqrt(q * w[1]),
        semi_minor=math.sqrt(q * w[0]),
        orientation=orientation,
        probability_mass=probability_mass,
    )
