"""Equilibria, branches, the haptic metric, and tracking along the equilibrium manifold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import IntegrationError, NewtonSettings, SingularJacobianError, integrate_fixed_step, newton_refine
from .potentials import ConfigPoint, DerivativeBundle, ScenarioModel

STOP_DISTANCE = "distance-reached"
STOP_OBSTACLE = "obstacle"
STOP_BOUNDS = "control-bounds"
STOP_TARGET = "target-reached"


class NearSingularMetricError(ArithmeticError):
    """``H_zz`` too ill-conditioned for a meaningful reduced Hessian."""


@dataclass(frozen=True)
class EquilibriumPoint:
    point: ConfigPoint
    residual_norm: float
    hess_det: float
    stable: bool
    converged: bool = True
    W: float = math.nan
    f_ctrl: np.ndarray | None = None

    @property
    def z(self) -> np.ndarray:
        return self.point.z

    @property
    def u(self) -> np.ndarray:
        return self.point.u


@dataclass
class BranchSet:
    control: np.ndarray
    equilibria: list
    seeds_used: int

    @property
    def multiplicity(self) -> int:
        return len(self.equilibria)

    def __len__(self) -> int:
        return len(self.equilibria)

    def __iter__(self):
        return iter(self.equilibria)


@dataclass(frozen=True)
class HapticMetric:
    """Reduced Hessian ``G`` on control space and the metric tensor ``G^2``."""

    G: np.ndarray
    G_squared: np.ndarray

    def ellipse(self) -> tuple:
        """Eigenvalues (ascending) and unit eigenvectors (columns) of ``G^2``.

        The metric ellipse ``du^T G^2 du = 1`` has semi-axes ``1/sqrt(eigenvalue)``.
        """
        return np.linalg.eigh(self.G_squared)


@dataclass(frozen=True)
class TrackSettings:
    eta: float = 10.0
    dt: float = 1e-3
    lam: float = 1e-3
    polish: NewtonSettings = NewtonSettings()

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class TrackTrace:
    """Samples of one tracked path; row ``i`` of every array is sample ``i``."""

    t: np.ndarray
    z: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    W: np.ndarray
    f_ctrl: np.ndarray
    residual: np.ndarray
    stop_reason: str
    final: EquilibriumPoint
    diagnostics: str = ""

    @property
    def samples(self) -> list:
        return [(float(t), z, u, float(p)) for t, z, u, p in zip(self.t, self.z, self.u, self.phi)]

    def __len__(self) -> int:
        return len(self.t)


class _BundleCache:
    """Remembers the most recent bundle so predicates and the next RK stage share it."""

    def __init__(self, model: ScenarioModel) -> None:
        self.model = model
        self.key = None
        self.value = None

    def __call__(self, z, u) -> DerivativeBundle:
        key = (np.asarray(z, dtype=float).tobytes(), np.asarray(u, dtype=float).tobytes())
        if key != self.key:
            self.value = self.model.analytic_bundle(z, u) if self.model.analytic_derivatives_available \
                else _fd(self.model, z, u)
            self.key = key
        return self.value


def _fd(model, z, u):
    from .potentials import fd_bundle
    return fd_bundle(model, z, u)


def hzz_determinant(H_zz: np.ndarray) -> tuple:
    """``(det, positive_definite)`` via a Cholesky factorization."""
    try:
        L = np.linalg.cholesky(H_zz)
    except np.linalg.LinAlgError:
        return float(np.linalg.det(H_zz)), False
    return float(np.prod(np.diag(L)) ** 2), True


def _is_obstacle(H_zz: np.ndarray, lam: float) -> bool:
    if H_zz.shape == (1, 1):
        return not H_zz[0, 0] > lam
    det, pd = hzz_determinant(H_zz)
    return (not pd) or not (det > lam)


def is_haptic_obstacle(model: ScenarioModel, point: ConfigPoint, lam: float) -> bool:
    """True when ``det(H_zz) <= lam`` or ``H_zz`` is not positive definite."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _is_obstacle(_BundleCache(model)(point.z, point.u).H_zz, lam)


def _wrap(model: ScenarioModel, z: np.ndarray) -> np.ndarray:
    z = np.array(z, dtype=float)
    for i in model.periodic:
        z[i] = (z[i] + math.pi) % (2.0 * math.pi) - math.pi
    return z


def _equilibrium(model, z, u, b: DerivativeBundle, converged: bool) -> EquilibriumPoint:
    lam_min = float(np.linalg.eigvalsh(b.H_zz)[0])
    return EquilibriumPoint(
        point=ConfigPoint(z, u),
        residual_norm=float(np.linalg.norm(b.grad_z)),
        hess_det=float(np.linalg.det(b.H_zz)),
        stable=bool(lam_min > 0),
        converged=converged,
        W=b.W,
        f_ctrl=b.f_ctrl.copy(),
    )


def solve_equilibrium(model: ScenarioModel, u, z_seed, settings: NewtonSettings = NewtonSettings()) -> EquilibriumPoint:
    """Newton solve of ``grad_z W(z, u) = 0`` from ``z_seed``.

    Non-convergence comes back as ``converged=False``; a singular ``H_zz``
    yields an unstable, unconverged point.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z0 = np.atleast_1d(np.asarray(z_seed, dtype=float))
    if u.shape != (model.n_u,) or z0.shape != (model.n_z,):
        raise ValueError(f"dimension mismatch: z {z0.shape}, u {u.shape}, model {model.dims}")
    cache = _BundleCache(model)
    try:
        res = newton_refine(lambda z: cache(z, u).grad_z, lambda z: cache(z, u).H_zz, z0, settings)
        z, conv = res.z, res.converged
    except SingularJacobianError as exc:
        z, conv = (z0 if exc.z is None else exc.z), False
    if not np.all(np.isfinite(z)):
        z, conv = z0, False
    z = _wrap(model, z)
    return _equilibrium(model, z, u, cache(z, u), conv)


def default_seeds(model: ScenarioModel, u) -> list:
    return model.seed_grid(u)


def enumerate_branches(model: ScenarioModel, u, seed_grid=None, settings: NewtonSettings = NewtonSettings(),
                       dedup_radius: float | None = None) -> BranchSet:
    """All distinct stable equilibria reached from the seeds, sorted by ``W``.

    Equilibria outside the model's state bounds (when it declares any) are
    discarded along with unconverged and unstable ones.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    seeds = list(model.seed_grid(u) if seed_grid is None else seed_grid)
    if not seeds:
        raise ValueError("seed_grid must be non-empty")
    radius = model.dedup_radius if dedup_radius is None else dedup_radius
    found = []
    for s in seeds:
        eq = solve_equilibrium(model, u, s, settings)
        if eq.converged and eq.stable and model.state_in_bounds(eq.z):
            found.append(eq)
    found.sort(key=lambda e: e.W)
    kept = []
    for eq in found:
        if all(model.state_distance(eq.z, k.z) > radius for k in kept):
            kept.append(eq)
    return BranchSet(control=u, equilibria=kept, seeds_used=len(seeds))


def schur_metric(H_zz: np.ndarray, H_uz: np.ndarray, H_uu: np.ndarray) -> HapticMetric:
    """``G = H_uu - H_uz H_zz^{-1} H_uz^T`` and ``G^2``."""
    cond = np.linalg.cond(H_zz)
    if not cond <= 1e12:
        raise NearSingularMetricError(f"H_zz condition number {cond:.3g} exceeds 1e12")
    G = H_uu - H_uz @ np.linalg.solve(H_zz, H_uz.T)
    G = 0.5 * (G + G.T)
    return HapticMetric(G=G, G_squared=G @ G)


def haptic_metric(model: ScenarioModel, eq) -> HapticMetric:
    point = eq.point if isinstance(eq, EquilibriumPoint) else eq
    b = _BundleCache(model)(point.z, point.u)
    return schur_metric(b.H_zz, b.H_uz, b.H_uu)


def haptic_distance(trace: TrackTrace) -> float:
    return float(trace.phi[-1]) if len(trace.phi) else 0.0


def track(model: ScenarioModel, start: EquilibriumPoint, u_target, epsilon: float,
          settings: TrackSettings = TrackSettings()) -> TrackTrace:
    """Follow the equilibrium manifold while ``u`` moves in a straight line toward ``u_target``.

    Integrates ``z' = -H_zz^{-1}(H_uz^T u' + eta grad_z)``, ``u' = const`` (unit
    speed) and ``phi' = |G u'|`` with RK4 until the first of: obstacle,
    ``phi >= epsilon``, arrival at ``u_target``, leaving the control bounds.
    Non-obstacle stops are Newton-polished back onto the manifold.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    u0 = np.asarray(start.u, dtype=float)
    z0 = np.asarray(start.z, dtype=float)
    u_target = np.atleast_1d(np.asarray(u_target, dtype=float))
    length = float(np.linalg.norm(u_target - u0))
    if not length > 0:
        raise ValueError("u_target coincides with the start control")
    n_z, n_u = model.n_z, model.n_u
    udot = (u_target - u0) / length
    cache = _BundleCache(model)
    eta = settings.eta

    b0 = cache(z0, u0)
    if _is_obstacle(b0.H_zz, settings.lam):
        raise ValueError("start point is a haptic obstacle")

    def rhs(t, x):
        b = cache(x[:n_z], x[n_z:n_z + n_u])
        M = np.empty((n_z, 1 + n_u))
        M[:, 0] = b.H_uz.T @ udot + eta * b.grad_z
        M[:, 1:] = b.H_uz.T
        Y = M / b.H_zz[0, 0] if n_z == 1 else np.linalg.solve(b.H_zz, M)
        Gu = b.H_uu @ udot - b.H_uz @ (Y[:, 1:] @ udot)
        out = np.empty_like(x)
        out[:n_z] = -Y[:, 0]
        out[n_z:n_z + n_u] = udot
        out[-1] = math.sqrt(float(Gu @ Gu))
        return out

    reason = [STOP_TARGET]
    records = [_record(b0)]

    def stop(x):
        u = x[n_z:n_z + n_u]
        b = cache(x[:n_z], u)
        records.append(_record(b))
        if _is_obstacle(b.H_zz, settings.lam):
            reason[0] = STOP_OBSTACLE
        elif x[-1] >= epsilon:
            reason[0] = STOP_DISTANCE
        elif not model.in_bounds(u):
            reason[0] = STOP_BOUNDS
        else:
            return False
        return True

    x0 = np.concatenate([z0, u0, [0.0]])
    diagnostics = ""
    try:
        tr = integrate_fixed_step(rhs, x0, (0.0, length), settings.dt, stop)
        ts, xs = tr.t, tr.states
        if not tr.stopped:
            reason[0] = STOP_TARGET
    except IntegrationError as exc:
        diagnostics = str(exc)
        reason[0] = STOP_OBSTACLE
        # keep what was integrated before the failure
        ts, xs = exc.trace.t, exc.trace.states
    X = np.array(xs)
    T = np.array(ts, dtype=float)
    Z = X[:, :n_z].copy()
    U = X[:, n_z:n_z + n_u].copy()
    PHI = X[:, -1].copy()
    final_conv = False
    if reason[0] == STOP_TARGET:
        U[-1] = u_target
    if reason[0] != STOP_OBSTACLE:
        res = _polish(model, cache, Z[-1], U[-1], settings.polish)
        if res is not None:
            Z[-1], final_conv = res
        records[len(T) - 1] = _record(cache(Z[-1], U[-1]))
    if reason[0] != STOP_OBSTACLE and _is_obstacle(cache(Z[-1], U[-1]).H_zz, settings.lam):
        # polishing can move a boundary sample across the threshold
        reason[0] = STOP_OBSTACLE
    Wv = np.array([r[0] for r in records[:len(T)]])
    F = np.array([r[1] for r in records[:len(T)]])
    R = np.array([r[2] for r in records[:len(T)]])
    bl = cache(Z[-1], U[-1])
    final = _equilibrium(model, Z[-1].copy(), U[-1].copy(), bl, final_conv or R[-1] <= settings.polish.residual_tol)
    return TrackTrace(t=T, z=Z, u=U, phi=PHI, W=Wv, f_ctrl=F, residual=R, stop_reason=reason[0], final=final,
                      diagnostics=diagnostics)


def _record(b: DerivativeBundle) -> tuple:
    return b.W, b.f_ctrl, math.sqrt(float(b.grad_z @ b.grad_z))


def _polish(model, cache, z, u, settings: NewtonSettings):
    try:
        res = newton_refine(lambda zz: cache(zz, u).grad_z, lambda zz: cache(zz, u).H_zz, z, settings)
    except SingularJacobianError:
        return None
    if not res.converged or not np.all(np.isfinite(res.z)):
        return None
    return res.z, True


MAX_GRID_POINTS = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice over two control coordinates; the others stay at ``base``."""

    axes: tuple
    lo: tuple
    hi: tuple
    n: tuple
    base: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.axes) == len(self.lo) == len(self.hi) == len(self.n) == 2):
            raise ValueError("a grid needs exactly two axes, each with lo, hi and n")
        if self.axes[0] == self.axes[1]:
            raise ValueError("grid axes must differ")
        if min(self.n) < 1:
            raise ValueError("grid counts must be at least 1")
        object.__setattr__(self, "base", np.atleast_1d(np.asarray(self.base, dtype=float)))
        for a in self.axes:
            if not 0 <= a < self.base.size:
                raise ValueError(f"grid axis {a} out of range for {self.base.size} controls")

    @property
    def size(self) -> int:
        return int(self.n[0]) * int(self.n[1])

    def values(self, k: int) -> np.ndarray:
        return np.linspace(self.lo[k], self.hi[k], int(self.n[k]))

    def control(self, i: int, j: int) -> np.ndarray:
        u = self.base.copy()
        u[self.axes[0]] = self.values(0)[i]
        u[self.axes[1]] = self.values(1)[j]
        return u

    def indices(self):
        """Row-major ``(i, j)`` order, ``i`` along the first axis."""
        for i in range(int(self.n[0])):
            for j in range(int(self.n[1])):
                yield i, j

    def check_size(self) -> None:
        if self.size > MAX_GRID_POINTS:
            raise ValueError(f"grid of {self.size} points exceeds the limit of {MAX_GRID_POINTS}; "
                             "split the slice into several runs or lower the counts")


@dataclass(frozen=True)
class MeshRecord:
    i: int
    j: int
    m: int
    branch: int
    eq: EquilibriumPoint


def _neighbours(i, j, n0, n1):
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        a, b = i + di, j + dj
        if 0 <= a < n0 and 0 <= b < n1:
            yield a, b


def _merge(model, radius, *groups) -> list:
    found = sorted((e for g in groups for e in g), key=lambda e: e.W)
    kept = []
    for eq in found:
        if all(model.state_distance(eq.z, k.z) > radius for k in kept):
            kept.append(eq)
    return kept


def branch_mesh(model: ScenarioModel, grid: GridSpec, settings: NewtonSettings = NewtonSettings(),
                link_radius: float = 0.02, link_slope: float = 1.5, sweeps: int = 2) -> list:
    """Stable equilibria over a control grid, grouped into connected branches.

    Each grid point is seeded with the model's seed grid plus the equilibria
    already found at neighbouring points (forward sweep, then reverse sweeps
    seeded from every neighbour). Equilibria at adjacent grid points that are
    mutual nearest neighbours within ``link_radius + link_slope * |du|`` in
    state space share a branch id; ids are numbered in row-major order of
    first appearance.
    """
    grid.check_size()
    n0, n1 = int(grid.n[0]), int(grid.n[1])
    radius = model.dedup_radius
    sols = {}
    order = list(grid.indices())
    for sweep in range(max(1, sweeps)):
        seq = order if sweep % 2 == 0 else order[::-1]
        for i, j in seq:
            u = grid.control(i, j)
            cont = [e.z for a, b in _neighbours(i, j, n0, n1) for e in sols.get((a, b), ())]
            seeds = cont if sweep else list(model.seed_grid(u)) + cont
            if not seeds:
                continue
            new = enumerate_branches(model, u, seeds, settings).equilibria
            sols[(i, j)] = _merge(model, radius, sols.get((i, j), ()), new)

    keys = [(i, j, m) for i, j in order for m in range(len(sols.get((i, j), ())))]
    parent = {k: k for k in keys}
    rank = {k: n for n, k in enumerate(keys)}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for i, j in order:
        for a, b in ((i + 1, j), (i, j + 1)):
            if a >= n0 or b >= n1:
                continue
            here, there = sols.get((i, j), ()), sols.get((a, b), ())
            if not here or not there:
                continue
            reach = link_radius + link_slope * float(np.linalg.norm(grid.control(a, b) - grid.control(i, j)))
            D = np.array([[model.state_distance(e.z, f.z) for f in there] for e in here])
            # mutual nearest neighbours within reach share a branch
            for m in range(len(here)):
                mm = int(np.argmin(D[m]))
                if D[m, mm] <= reach and int(np.argmin(D[:, mm])) == m:
                    ra, rb = find((i, j, m)), find((a, b, mm))
                    if ra != rb:
                        # the earlier key in row-major order stays the root
                        lo, hi = (ra, rb) if rank[ra] < rank[rb] else (rb, ra)
                        parent[hi] = lo
    ids = {}
    records = []
    for i, j, m in keys:
        root = find((i, j, m))
        bid = ids.setdefault(root, len(ids))
        records.append(MeshRecord(i, j, m, bid, sols[(i, j)][m]))
    return records


@dataclass(frozen=True)
class MetricRecord:
    """Metric ellipse at one equilibrium; ``m = -1`` marks a grid point without one."""

    i: int
    j: int
    m: int
    eq: EquilibriumPoint | None
    eigenvalues: np.ndarray
    angles: np.ndarray
    obstacle: bool


def metric_field(model: ScenarioModel, grid: GridSpec, lam: float, settings: NewtonSettings = NewtonSettings()) -> list:
    """Eigenvalues of ``G^2`` and eigenvector angles in the grid plane at every mesh equilibrium.

    Angles are measured in the plane of the two grid axes, in ``[0, pi)``.
    Obstacle points keep a row with the flag set.
    """
    rows = []
    mesh = branch_mesh(model, grid, settings)
    by_point = {}
    for r in mesh:
        by_point.setdefault((r.i, r.j), []).append(r)
    ax = list(grid.axes)
    nan2 = np.full(model.n_u, np.nan)
    for i, j in grid.indices():
        recs = by_point.get((i, j))
        if not recs:
            rows.append(MetricRecord(i, j, -1, None, nan2, nan2, True))
            continue
        for r in recs:
            b = _BundleCache(model)(r.eq.z, r.eq.u)
            obstacle = _is_obstacle(b.H_zz, lam)
            try:
                met = schur_metric(b.H_zz, b.H_uz, b.H_uu)
            except NearSingularMetricError:
                rows.append(MetricRecord(i, j, r.m, r.eq, nan2, nan2, True))
                continue
            w, V = met.ellipse()
            ang = np.array([math.atan2(V[ax[1], k], V[ax[0], k]) % math.pi for k in range(model.n_u)])
            rows.append(MetricRecord(i, j, r.m, r.eq, w, ang, obstacle))
    return rows
