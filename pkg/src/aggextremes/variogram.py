"""Power variograms (isotropic and geometrically anisotropic).

Lags are arrays whose last axis holds the coordinate difference. One- and
two-dimensional lags are supported; in one dimension the anisotropy
parameters are ignored and ``gamma(h) = |h / lambda| ** alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError


@dataclass(frozen=True)
class VariogramParams:
    alpha: float = 1.0
    lam: float = 1.0
    eta: float = 0.0
    aniso: float = 1.0

    def __post_init__(self):
        check_params(self.alpha, self.lam, self.eta, self.aniso)

    @property
    def isotropic(self) -> bool:
        return self.aniso == 1.0

    def replace(self, **changes) -> "VariogramParams":
        values = dict(alpha=self.alpha, lam=self.lam, eta=self.eta, aniso=self.aniso)
        values.update(changes)
        return VariogramParams(**values)


def check_params(alpha, lam, eta=0.0, aniso=1.0):
    if not np.isfinite([alpha, lam, eta, aniso]).all():
        raise ParameterDomainError("variogram parameters must be finite")
    if not 0.0 < alpha <= 2.0:
        raise ParameterDomainError(f"alpha must lie in (0, 2], got {alpha}")
    if lam <= 0.0:
        raise ParameterDomainError(f"lambda must be positive, got {lam}")
    if not -np.pi / 2 < eta <= np.pi / 2:
        raise ParameterDomainError(f"eta must lie in (-pi/2, pi/2], got {eta}")
    if aniso < 1.0:
        raise ParameterDomainError(f"anisotropy ratio must be >= 1, got {aniso}")


def anisotropy_matrix(eta: float, aniso: float) -> np.ndarray:
    """Rotation by ``eta`` followed by stretching of the second axis by ``aniso``."""
    check_params(1.0, 1.0, eta, aniso)
    c, s = np.cos(eta), np.sin(eta)
    return np.array([[c, -s], [aniso * s, aniso * c]])


def gamma(h, p: VariogramParams) -> np.ndarray:
    """Evaluate ``||Omega h / lambda|| ** alpha`` for lags ``h`` of shape (..., d)."""
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        h = h[None]
    d = h.shape[-1]
    if d == 1:
        r = np.abs(h[..., 0])
    elif d == 2:
        if p.eta == 0.0 and p.aniso == 1.0:
            r = np.hypot(h[..., 0], h[..., 1])
        else:
            omega = anisotropy_matrix(p.eta, p.aniso)
            r = np.linalg.norm(h @ omega.T, axis=-1)
    else:
        raise ParameterDomainError(f"lags must be 1- or 2-dimensional, got d={d}")
    return (r / p.lam) ** p.alpha


def gaussian_cov(s, t, p: VariogramParams, origin=None) -> np.ndarray:
    """Covariance of the intrinsic Gaussian process pinned to zero at ``origin``.

    ``cov(G(s), G(t)) = (gamma(s - o) + gamma(t - o) - gamma(s - t)) / 2``.
    Broadcasts over the leading axes of ``s`` and ``t``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if origin is not None:
        origin = np.asarray(origin, dtype=float)
        s = s - origin
        t = t - origin
    return 0.5 * (gamma(s, p) + gamma(t, p) - gamma(s - t, p))


def covariance_matrix(points, p: VariogramParams, origin=None) -> np.ndarray:
    """Dense covariance matrix of the pinned process at ``points`` (n, d)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return gaussian_cov(pts[:, None, :], pts[None, :, :], p, origin=origin)
