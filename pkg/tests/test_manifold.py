import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hapticrrt import ConfigPoint, evaluate_bundle
from hapticrrt.manifold import (
    STOP_BOUNDS,
    STOP_DISTANCE,
    STOP_OBSTACLE,
    STOP_TARGET,
    GridSpec,
    NearSingularMetricError,
    TrackSettings,
    branch_mesh,
    enumerate_branches,
    haptic_distance,
    haptic_metric,
    is_haptic_obstacle,
    metric_field,
    schur_metric,
    solve_equilibrium,
    track,
)
from hapticrrt.potentials import QuadraticModel

M, G0, L0, K = 1.0, 9.81, 1.0, 100.0
H_HANG = 0.5 * M * G0 * L0 + K * L0 ** 2


def random_quadratic(rng, n_z, n_u, coupled=True):
    X = rng.normal(size=(n_z, n_z))
    A = X @ X.T + n_z * np.eye(n_z)
    B = rng.normal(size=(n_z, n_u)) if coupled else np.zeros((n_z, n_u))
    Y = rng.normal(size=(n_u, n_u))
    C = Y @ Y.T + (n_u + 10.0) * np.eye(n_u)
    return QuadraticModel(A, B, C, (-2 * np.ones(n_u), 2 * np.ones(n_u)))


# -- equilibria and branches ---------------------------------------------------

def test_pendulum_equilibrium_from_nearby_seed(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    assert eq.converged and eq.stable
    assert eq.z[0] == pytest.approx(-math.pi / 2, abs=1e-8)
    assert eq.hess_det == pytest.approx(H_HANG, rel=1e-9)
    assert eq.residual_norm <= 1e-8


def test_pendulum_far_seed_never_fakes_a_root(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [1.2])
    if eq.converged:
        assert eq.residual_norm <= 1e-8
    if abs(eq.z[0] + math.pi / 2) < 1e-6:
        assert eq.residual_norm <= 1e-8


def test_clip_rest_equilibrium(clip):
    start = clip.start
    eq = solve_equilibrium(clip, start.u, start.z)
    np.testing.assert_allclose(eq.z, start.z, atol=1e-9)
    assert eq.W == pytest.approx(0.0, abs=1e-12)


def _grid_scan_stable_roots(model, u, n=20000):
    th = np.linspace(-math.pi, math.pi, n, endpoint=False)
    g = np.array([evaluate_bundle(model, ConfigPoint([t], u)).grad_z[0] for t in th])
    # stable roots: grad_z crosses zero upward
    return int(np.sum((g < 0) & (np.roll(g, -1) >= 0)))


@pytest.mark.parametrize("u", [(0.0, -1.0), (0.5, -0.6), (-0.8, 0.7), (1.1, 0.2)])
def test_pendulum_single_branch_matches_scan(pendulum, u):
    u = np.array(u)
    bs = enumerate_branches(pendulum, u)
    assert bs.seeds_used == 32
    assert bs.multiplicity == _grid_scan_stable_roots(pendulum, u) == 1


def test_clip_two_branches_at_shared_control(clip):
    bs = enumerate_branches(clip, np.array([0.6, 0.3]))
    assert bs.multiplicity >= 2
    z_theta = [e.z[0] for e in bs]
    assert any(abs(t + 0.4) < 0.1 for t in z_theta)
    assert any(t > -0.2 for t in z_theta)
    for e in bs:
        assert e.residual_norm <= 1e-8
    for a in range(len(bs)):
        for b in range(a):
            assert clip.state_distance(bs.equilibria[a].z, bs.equilibria[b].z) > clip.dedup_radius
    Ws = [e.W for e in bs]
    assert Ws == sorted(Ws)


def test_known_root_seed_is_idempotent(pendulum):
    bs = enumerate_branches(pendulum, np.array([0.0, -1.0]), [np.array([-math.pi / 2])])
    assert bs.multiplicity == 1
    assert bs.equilibria[0].z[0] == pytest.approx(-math.pi / 2, abs=1e-12)


def test_empty_seed_grid_rejected(pendulum):
    with pytest.raises(ValueError):
        enumerate_branches(pendulum, np.array([0.0, -1.0]), [])


# -- metric ---------------------------------------------------------------------

def test_schur_oracle_random_quadratics(rng):
    for _ in range(50):
        n_z, n_u = rng.integers(1, 5), rng.integers(1, 4)
        q = random_quadratic(rng, n_z, n_u)
        u = rng.uniform(-1, 1, n_u)
        met = haptic_metric(q, ConfigPoint(q.equilibrium(u), u))
        expect = q.C - q.B.T @ np.linalg.solve(q.A, q.B)
        assert np.max(np.abs(met.G - expect)) <= 1e-10
        np.testing.assert_allclose(met.G_squared, met.G @ met.G)


def test_decoupled_metric_is_control_block(rng):
    q = random_quadratic(rng, 3, 2, coupled=False)
    met = haptic_metric(q, ConfigPoint(np.zeros(3), np.zeros(2)))
    np.testing.assert_allclose(met.G, q.C, atol=1e-14)


def test_pendulum_metric_at_hanging(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    met = haptic_metric(pendulum, eq)
    expect = np.diag([K - K ** 2 * L0 ** 2 / H_HANG, K])
    np.testing.assert_allclose(met.G, expect, atol=1e-9)
    w, V = met.ellipse()
    # long ellipse axis (smallest G^2 eigenvalue) along x, the tip tangent
    assert abs(V[0, 0]) == pytest.approx(1.0, abs=1e-12)


def test_near_singular_metric():
    with pytest.raises(NearSingularMetricError):
        schur_metric(np.diag([1e-14, 1.0]), np.ones((1, 2)), np.eye(1))


@pytest.mark.parametrize("name", ["pendulum", "clip", "bookshelf"])
def test_metric_symmetric_psd(name, request):
    model = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 20:
        u = rng.uniform(model.control_lo, model.control_hi)
        seeds = [model.start.z] if name == "bookshelf" else None
        bs = enumerate_branches(model, u, seeds)
        for eq in bs:
            try:
                met = haptic_metric(model, eq)
            except NearSingularMetricError:
                continue
            assert np.max(np.abs(met.G - met.G.T)) <= 1e-9 * max(1.0, np.max(np.abs(met.G)))
            assert np.linalg.eigvalsh(met.G_squared).min() >= -1e-10 * max(1.0, np.max(np.abs(met.G_squared)))
            checked += 1


# -- obstacles -----------------------------------------------------------------

def test_obstacle_predicate(pendulum):
    p = ConfigPoint([-math.pi / 2], [0.0, -L0])
    assert not is_haptic_obstacle(pendulum, p, 1.0)
    assert is_haptic_obstacle(pendulum, p, H_HANG * 1.01)
    with pytest.raises(ValueError):
        is_haptic_obstacle(pendulum, p, 0.0)


def test_obstacle_small_determinant():
    q = QuadraticModel(np.diag([1e-9, 1.0]), np.zeros((2, 1)), np.eye(1))
    assert is_haptic_obstacle(q, ConfigPoint([0.0, 0.0], [0.0]), 1e-3)


def test_obstacle_indefinite():
    q = QuadraticModel(np.diag([-2.0, -3.0]), np.zeros((2, 1)), np.eye(1))
    # det = 6 > lambda but the Hessian is not positive definite
    assert is_haptic_obstacle(q, ConfigPoint([0.0, 0.0], [0.0]), 1e-3)


# -- tracking ------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_constant_metric_line_integral(seed):
    rng = np.random.default_rng(seed)
    q = random_quadratic(rng, int(rng.integers(1, 4)), 2)
    u0 = rng.uniform(-1, 1, 2)
    u1 = rng.uniform(-1, 1, 2)
    eq = solve_equilibrium(q, u0, np.zeros(q.n_z))
    tr = track(q, eq, u1, 1e9, TrackSettings(dt=0.01))
    G = q.C - q.B.T @ np.linalg.solve(q.A, q.B)
    d = u1 - u0
    assert tr.stop_reason == STOP_TARGET
    assert haptic_distance(tr) == pytest.approx(math.sqrt(d @ G @ G @ d), abs=1e-6)
    assert np.all(np.diff(tr.phi) >= 0)
    np.testing.assert_allclose(tr.final.u, u1)
    np.testing.assert_allclose(tr.final.z, q.equilibrium(u1), atol=1e-9)


def test_distance_additive_over_halves(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    mid, end = np.array([0.2, -1.0]), np.array([0.4, -1.0])
    ts = TrackSettings(dt=1e-3)
    a = track(pendulum, eq, mid, 1e9, ts)
    b = track(pendulum, a.final, end, 1e9, ts)
    ab = track(pendulum, eq, end, 1e9, ts)
    assert haptic_distance(a) > 0 and haptic_distance(b) > 0
    assert haptic_distance(a) + haptic_distance(b) == pytest.approx(haptic_distance(ab), abs=1e-8)


def test_zero_length_trace_distance(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    tr = track(pendulum, eq, [0.0, -0.9], 1e-12)
    assert tr.stop_reason == STOP_DISTANCE
    assert haptic_distance(tr) >= 1e-12
    with pytest.raises(ValueError):
        track(pendulum, eq, [0.0, -L0], 1.0)


def test_tangential_sweep_stays_on_branch(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    tr = track(pendulum, eq, [0.6, -1.0], 1e9)
    assert tr.stop_reason == STOP_TARGET
    assert np.max(tr.residual) <= 1e-5
    idx = np.linspace(0, len(tr) - 1, 20).astype(int)
    for k in idx:
        again = solve_equilibrium(pendulum, tr.u[k], tr.z[k])
        assert abs(again.z[0] - tr.z[k][0]) <= 1e-4


def test_push_through_boundary_is_obstacle(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    tr = track(pendulum, eq, [0.0, 0.3], 1e9, TrackSettings(lam=25.0))
    assert tr.stop_reason == STOP_OBSTACLE
    assert is_haptic_obstacle(pendulum, tr.final.point, 25.0)


def test_leaving_control_bounds(pendulum):
    eq = solve_equilibrium(pendulum, [1.2, 0.0], [0.1])
    tr = track(pendulum, eq, [2.0, 0.0], 1e9)
    assert tr.stop_reason == STOP_BOUNDS
    assert tr.final.u[0] == pytest.approx(1.3, abs=2e-3)


def test_distance_budget_stop(pendulum):
    eq = solve_equilibrium(pendulum, [0.0, -L0], [-1.2])
    tr = track(pendulum, eq, [0.6, -1.0], 2.0, TrackSettings(dt=1e-3))
    assert tr.stop_reason == STOP_DISTANCE
    assert tr.phi[-1] >= 2.0
    assert tr.phi[-2] < 2.0
    assert tr.final.residual_norm <= 1e-8


def test_start_on_obstacle_rejected():
    q = QuadraticModel(np.eye(1), np.ones((1, 1)), np.eye(1) * 4)
    eq = solve_equilibrium(q, [0.0], [0.0])
    assert track(q, eq, [1.0], 1e-12, TrackSettings(lam=0.5)).stop_reason == STOP_DISTANCE
    with pytest.raises(ValueError):
        track(q, eq, [1.0], 1.0, TrackSettings(lam=1.0))


# -- grids -----------------------------------------------------------------------

def test_grid_spec_limits():
    g = GridSpec((0, 1), (0, 0), (1, 1), (1001, 1000), np.zeros(2))
    with pytest.raises(ValueError, match="exceeds"):
        g.check_size()
    with pytest.raises(ValueError):
        GridSpec((0, 0), (0, 0), (1, 1), (2, 2), np.zeros(2))
    with pytest.raises(ValueError):
        GridSpec((0, 3), (0, 0), (1, 1), (2, 2), np.zeros(2))


def test_single_point_mesh(pendulum):
    g = GridSpec((0, 1), (0.0, -1.0), (0.0, -1.0), (1, 1), np.zeros(2))
    recs = branch_mesh(pendulum, g)
    assert len(recs) == 1
    assert recs[0].branch == 0
    assert recs[0].eq.z[0] == pytest.approx(-math.pi / 2, abs=1e-8)


def test_mesh_is_connected_on_single_branch(pendulum):
    g = GridSpec((0, 1), (0.3, -1.0), (0.6, -0.7), (6, 6), np.zeros(2))
    recs = branch_mesh(pendulum, g)
    assert len(recs) == 36
    assert {r.branch for r in recs} == {0}


def test_mesh_deterministic(clip):
    g = GridSpec((0, 1), (0.5, 0.3), (0.6, 0.45), (3, 3), clip.start.u)
    a = branch_mesh(clip, g)
    b = branch_mesh(clip, g)
    assert [(r.i, r.j, r.m, r.branch) for r in a] == [(r.i, r.j, r.m, r.branch) for r in b]
    for r, s in zip(a, b):
        np.testing.assert_array_equal(r.eq.z, s.eq.z)


def test_decoupled_metric_field_is_uniform(rng):
    q = random_quadratic(rng, 2, 2, coupled=False)
    g = GridSpec((0, 1), (-1, -1), (1, 1), (4, 4), np.zeros(2))
    rows = metric_field(q, g, 1e-3)
    assert len(rows) == 16
    for r in rows:
        np.testing.assert_allclose(r.eigenvalues, rows[0].eigenvalues, rtol=1e-12)
        np.testing.assert_allclose(r.angles, rows[0].angles, atol=1e-12)
        assert not r.obstacle
