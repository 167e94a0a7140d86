"""Small numeric substrate: central differences, damped Newton, fixed-step RK4."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class DifferentiationError(ArithmeticError):
    def __init__(self, coordinate: int, message: str = "") -> None:
        self.coordinate = coordinate
        super().__init__(message or f"non-finite function value while differentiating coordinate {coordinate}")


class SingularJacobianError(np.linalg.LinAlgError):
    def __init__(self, message: str, z: np.ndarray | None = None) -> None:
        super().__init__(message)
        self.z = z


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, t: float, last_state: np.ndarray, trace=None) -> None:
        super().__init__(message)
        self.t = t
        self.last_state = last_state
        self.trace = trace


@dataclass(frozen=True)
class FdScheme:
    """Central second-order differences with a per-coordinate step ``step_h * max(1, |x_j|)``."""

    step_h: float = 1e-5
    order: str = "central-2nd"

    def __post_init__(self) -> None:
        if not self.step_h > 0:
            raise ValueError("step_h must be positive")
        if self.order != "central-2nd":
            raise ValueError(f"unsupported difference scheme {self.order!r}")


@dataclass(frozen=True)
class NewtonSettings:
    residual_tol: float = 1e-8
    max_iters: int = 50
    damping: float = 1.0
    max_halvings: int = 4
    max_step: float | None = None

    def __post_init__(self) -> None:
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class NewtonResult:
    z: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int

    def __iter__(self):
        # allows ``z, res, ok = newton_refine(...)``
        return iter((self.z, self.residual_norm, self.converged))


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x, scheme: FdScheme = FdScheme()) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x``; returns an ``m x n`` array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for j in range(x.size):
        h = scheme.step_h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise DifferentiationError(j)
        # (xp - xm) rather than 2h: the representable step
        cols.append((fp - fm) / (xp[j] - xm[j]))
    return np.stack(cols, axis=1)


def newton_refine(residual, jac, z0, settings: NewtonSettings = NewtonSettings()) -> NewtonResult:
    """Damped Newton iteration on ``residual(z) = 0``.

    The step is halved (at most ``settings.max_halvings`` times) while the
    residual norm fails to decrease. Running out of iterations is reported
    through ``converged=False``; a singular Jacobian raises.
    """
    z = np.atleast_1d(np.array(z0, dtype=float))
    if not np.all(np.isfinite(z)):
        raise ValueError("z0 must be finite")
    r = np.atleast_1d(np.asarray(residual(z), dtype=float))
    rnorm = float(np.linalg.norm(r))
    it = 0
    while it < settings.max_iters:
        if not np.isfinite(rnorm):
            return NewtonResult(z, rnorm, False, it)
        if rnorm <= settings.residual_tol:
            return NewtonResult(z, rnorm, True, it)
        J = np.atleast_2d(np.asarray(jac(z), dtype=float))
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(f"singular jacobian at iteration {it}", z.copy()) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(f"singular jacobian at iteration {it}", z.copy())
        if settings.max_step is not None:
            snorm = np.linalg.norm(step)
            if snorm > settings.max_step:
                step *= settings.max_step / snorm
        alpha = settings.damping
        for _ in range(settings.max_halvings + 1):
            z_try = z - alpha * step
            r_try = np.atleast_1d(np.asarray(residual(z_try), dtype=float))
            n_try = float(np.linalg.norm(r_try))
            if n_try < rnorm:
                break
            alpha *= 0.5
        z, r, rnorm = z_try, r_try, n_try
        it += 1
    return NewtonResult(z, rnorm, bool(rnorm <= settings.residual_tol), it)


@dataclass
class Trace:
    """Samples ``(t, state)`` of a fixed-step integration."""

    t: list
    states: list
    stopped: bool = False

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        return iter(zip(self.t, self.states))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def rk4_step(rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed_step(rhs, state0, t_span, dt: float, stop_predicate=None) -> Trace:
    """Classical RK4 from ``t_span[0]`` to ``t_span[1]``.

    The last step is shortened to land on ``t1`` exactly. When
    ``stop_predicate(state)`` holds after a step, integration ends there and
    the trace is flagged ``stopped``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    x = np.array(state0, dtype=float)
    trace = Trace([t0], [x.copy()])
    t = t0
    n_steps = int(np.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    for i in range(n_steps):
        h = min(dt, t1 - t) if i == n_steps - 1 else dt
        try:
            x_new = rk4_step(rhs, t, x, h)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            raise IntegrationError(f"right-hand side failed at t={t:.6g}: {exc}", t, x.copy(), trace) from exc
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(f"non-finite right-hand side at t={t:.6g}", t, x.copy(), trace)
        t = t0 + (i + 1) * dt if i < n_steps - 1 else t1
        x = x_new
        trace.t.append(t)
        trace.states.append(x.copy())
        if stop_predicate is not None and stop_predicate(x):
            trace.stopped = True
            break
    return trace
