"""Planar superellipses, the contact stiffness profile and the proxy solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

CORNER_GAMMAS = (0.25 * math.pi, 0.75 * math.pi, 1.25 * math.pi, 1.75 * math.pi)


class ConfigError(ValueError):
    """Invalid model or scenario configuration."""


class ProxyError(RuntimeError):
    pass


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Superellipse:
    """``|x/a1|^(2/eps) + |y/a2|^(2/eps) = 1`` in a body frame placed at ``pose = (x, y, theta)``."""

    a1: float
    a2: float
    eps_shape: float
    pose: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not (self.a1 > 0 and self.a2 > 0 and self.eps_shape > 0):
            raise ConfigError("superellipse needs a1 > 0, a2 > 0 and eps > 0")
        object.__setattr__(self, "pose", tuple(float(p) for p in self.pose))

    def to_body(self, point) -> np.ndarray:
        x, y, th = self.pose
        return _rot(th).T @ (np.asarray(point, dtype=float) - np.array([x, y]))

    def to_world(self, point) -> np.ndarray:
        x, y, th = self.pose
        return _rot(th) @ np.asarray(point, dtype=float) + np.array([x, y])

    def boundary_point(self, gamma: float, frame: str = "world") -> np.ndarray:
        """Point ``(a1 sgn(cos)|cos g|^eps, a2 sgn(sin)|sin g|^eps)`` of the boundary."""
        c, s = math.cos(gamma), math.sin(gamma)
        e = self.eps_shape
        p = np.array([self.a1 * math.copysign(abs(c) ** e, c), self.a2 * math.copysign(abs(s) ** e, s)])
        return self.to_world(p) if frame == "world" else p

    def corners(self, gammas=CORNER_GAMMAS, frame: str = "world") -> np.ndarray:
        return np.array([self.boundary_point(g, frame) for g in gammas])

    def moved(self, pose) -> "Superellipse":
        return Superellipse(self.a1, self.a2, self.eps_shape, tuple(pose))


@dataclass(frozen=True)
class StiffnessProfile:
    """Smooth contact stiffness ``k(d) = k_min + (1 - tanh(d/d0))/2 * k_max``."""

    k_min: float
    k_max: float
    d0: float
    min_ratio: float = 100.0

    def __post_init__(self) -> None:
        if not self.d0 > 0:
            raise ConfigError("stiffness transition scale d0 must be positive")
        if self.k_min < 0 or not self.k_max > 0:
            raise ConfigError("stiffness needs k_min >= 0 and k_max > 0")
        if self.k_max < self.min_ratio * self.k_min:
            raise ConfigError(f"k_max must be at least {self.min_ratio:g} * k_min")

    def as_array(self) -> np.ndarray:
        return np.array([self.k_min, self.k_max, self.d0], dtype=float)


@dataclass(frozen=True)
class ProxyResult:
    gamma: float
    proxy_point: np.ndarray
    query_point: np.ndarray
    gap: float

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.query_point - self.proxy_point))


def _check_finite(point) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ValueError(f"expected a finite planar point, got {point!r}")
    return p


def inside_outside(shape: Superellipse, point) -> float:
    """Inside-outside value at a world point: negative inside, zero on the surface, positive outside."""
    q = shape.to_body(_check_finite(point))
    return float(_kernels.io_value(q[0], q[1], shape.a1, shape.a2, shape.eps_shape))


def contact_stiffness(profile: StiffnessProfile, d: float) -> float:
    if math.isinf(d):
        return profile.k_min if d > 0 else profile.k_min + profile.k_max
    return profile.k_min + 0.5 * (1.0 - math.tanh(d / profile.d0)) * profile.k_max


def contact_stiffness_slope(profile: StiffnessProfile, d: float) -> float:
    th = math.tanh(d / profile.d0)
    return -0.5 * profile.k_max * (1.0 - th * th) / profile.d0


def solve_proxy(shape: Superellipse, query, restarts: int = 32) -> ProxyResult:
    """Closest surface point of ``shape`` to a world query point.

    Multi-started from ``restarts`` equispaced seeds around the boundary and
    refined by golden-section search; exact ties keep the earliest seed.
    """
    if restarts < 4:
        raise ValueError("restarts must be >= 4")
    c = _check_finite(query)
    q = shape.to_body(c)
    px, py, _, ok = _kernels.proxy(q[0], q[1], shape.a1, shape.a2, shape.eps_shape, int(restarts))
    if not ok:
        raise ProxyError(f"proxy search failed for query {c.tolist()}")
    gamma = _kernels.standard_gamma(px, py, shape.a1, shape.a2, shape.eps_shape)
    return ProxyResult(
        gamma=float(gamma),
        proxy_point=shape.to_world(np.array([px, py])),
        query_point=c,
        gap=float(_kernels.io_value(q[0], q[1], shape.a1, shape.a2, shape.eps_shape)),
    )


def contact_energy(shape: Superellipse, profile: StiffnessProfile, point, restarts: int = 32) -> float:
    """``1/2 k(F(c)) |c - p(gamma*)|^2`` for one query point against one shape."""
    res = solve_proxy(shape, point, restarts)
    return 0.5 * contact_stiffness(profile, res.gap) * res.distance ** 2
