import math

import numpy as np
import pytest

from hapticrrt import shipped
from hapticrrt.manifold import STOP_OBSTACLE, solve_equilibrium, track, TrackSettings
from hapticrrt.planner import (
    GoalSpec,
    PlannerExhausted,
    PlannerParams,
    StartInvalid,
    Tree,
    TreeIntegrityError,
    extend,
    extract_path,
    plan,
    sample_direction,
    select_near,
)
from hapticrrt.potentials import ConfigPoint, QuadraticModel


def _eq(model, u):
    return solve_equilibrium(model, u, np.zeros(model.n_z))


@pytest.fixture
def bowl():
    # W = 0.5 z^2 - z.u + u.u with z scalar, two controls
    return QuadraticModel(np.eye(1), np.array([[-1.0, 0.0]]), 2.0 * np.eye(2),
                          (np.array([-1.0, -1.0]), np.array([1.0, 1.0])))


@pytest.fixture(scope="module")
def pendulum_params():
    return PlannerParams.from_config(shipped("pendulum"))


@pytest.fixture(scope="module")
def pendulum_run(pendulum_params):
    from hapticrrt import model_from_config
    model = model_from_config(shipped("pendulum"))
    return model, plan(model, model.start, pendulum_params)


# -- parameters ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(epsilon=0), dict(lam=-1), dict(beta=-0.5), dict(max_nodes=-1),
                                dict(sigma=[[1, 2], [0, 1]]), dict(sigma=[[1, 0], [0, -1]]), dict(w_shift=0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        PlannerParams(**kw)


def test_goal_spec():
    g = GoalSpec("state-region", [0.0], [0.05], periodic=(0,))
    with pytest.raises(ValueError):
        GoalSpec("state-region", [0.0], [0.0])
    with pytest.raises(ValueError):
        GoalSpec("elsewhere", [0.0], [1.0])
    eq = type("E", (), {"z": np.array([2 * math.pi + 0.01]), "u": np.zeros(2)})()
    assert g.satisfied(eq)


# -- selection -------------------------------------------------------------------

def _tree(model, us):
    tree = Tree(_eq(model, us[0]))
    for u in us[1:]:
        tree.add(tree.root, _eq(model, u), None, False, 0.1)
    return tree


def test_select_prefers_lower_potential(bowl):
    p = PlannerParams(beta=1.0)
    # equal W and equal distance: the lowest id wins
    tree = _tree(bowl, [np.array([0.5, 0.0]), np.array([-0.5, 0.0])])
    assert tree[0].eq.W == pytest.approx(tree[1].eq.W, abs=1e-15)
    assert select_near(tree, np.zeros(2), p, np.eye(2)).id == 0
    # equal distance, node 1 has the lower W
    tree = _tree(bowl, [np.array([0.0, 0.5]), np.array([0.5, 0.0])])
    assert tree[1].eq.W < tree[0].eq.W
    assert select_near(tree, np.zeros(2), p, np.eye(2)).id == 1


def test_beta_weighting_changes_choice(bowl):
    tree = _tree(bowl, [np.array([0.0, 0.0]), np.array([0.9, 0.0])])
    u_rand = np.array([0.8, 0.0])
    assert select_near(tree, u_rand, PlannerParams(beta=0.0), np.eye(2)).id == 1
    # W difference 0.405: score 1.405^20 * 0.1 > 1 * 0.8
    assert select_near(tree, u_rand, PlannerParams(beta=20.0), np.eye(2)).id == 0


def test_beta_zero_is_mahalanobis_nearest(bowl, rng):
    us = [rng.uniform(-1, 1, 2) for _ in range(8)]
    tree = _tree(bowl, us)
    S = np.array([[2.0, 0.3], [0.3, 0.5]])
    Si = np.linalg.inv(S)
    for _ in range(20):
        r = rng.uniform(-1, 1, 2)
        d = [math.sqrt((u - r) @ Si @ (u - r)) for u in us]
        assert select_near(tree, r, PlannerParams(beta=0.0, sigma=S), Si).id == int(np.argmin(d))


def test_single_node_direction(bowl, rng):
    tree = Tree(_eq(bowl, np.array([0.2, -0.1])))
    s = sample_direction(tree, bowl, PlannerParams(), rng)
    assert s.near is tree.root
    assert np.linalg.norm(s.u_dot) == pytest.approx(1.0)
    expect = (s.u_rand - tree.root.eq.u) / np.linalg.norm(s.u_rand - tree.root.eq.u)
    np.testing.assert_allclose(s.u_dot, expect, atol=1e-15)
    assert np.all(s.u_rand >= -1) and np.all(s.u_rand <= 1)


def test_dead_ends_excluded_and_exhaustion(bowl):
    tree = Tree(_eq(bowl, np.zeros(2)))
    dead = tree.add(tree.root, _eq(bowl, np.array([0.5, 0.5])), None, True, 0.1, STOP_OBSTACLE)
    assert select_near(tree, np.array([0.5, 0.5]), PlannerParams(), np.eye(2)).id == 0
    with pytest.raises(TreeIntegrityError):
        tree.add(dead, _eq(bowl, np.ones(2) * 0.6), None, False, 0.1)
    with pytest.raises(TreeIntegrityError):
        extend(bowl, dead, np.zeros(2), PlannerParams())
    tree.root.dead_end = True
    tree._alive[0] = False
    with pytest.raises(PlannerExhausted):
        select_near(tree, np.zeros(2), PlannerParams(), np.eye(2))


# -- extension ---------------------------------------------------------------------

def test_zero_length_extension_rejected(bowl):
    tree = Tree(_eq(bowl, np.array([0.1, 0.1])))
    assert extend(bowl, tree.root, np.array([0.1, 0.1]), PlannerParams()) is None


def test_budget_extension(bowl):
    tree = Tree(_eq(bowl, np.zeros(2)))
    p = PlannerParams(epsilon=0.3, dt=1e-3)
    eq, tr, dead = extend(bowl, tree.root, np.array([1.0, 0.0]), p)
    assert not dead
    # G = diag(1, 2): ||G du|| = 1 along x, so phi overshoots epsilon by at most one step
    assert 0.3 <= tr.phi[-1] <= 0.3 + 1e-3 + 1e-12


def test_pendulum_extension_to_obstacle(pendulum, pendulum_params):
    tree = Tree(solve_equilibrium(pendulum, pendulum.start.u, pendulum.start.z))
    eq, tr, dead = extend(pendulum, tree.root, np.array([0.0, 0.5]), pendulum_params.__class__(
        epsilon=1e6, lam=pendulum_params.lam, dt=pendulum_params.dt, eta=pendulum_params.eta))
    assert dead and tr.stop_reason == STOP_OBSTACLE


# -- planning ----------------------------------------------------------------------

def test_zero_nodes_gives_root(pendulum, pendulum_params):
    p = PlannerParams.from_config(shipped("pendulum"), max_nodes=0)
    res = plan(pendulum, pendulum.start, p)
    assert len(res.tree) == 1 and res.goal_node is None


def test_invalid_start(pendulum, pendulum_params):
    with pytest.raises(StartInvalid):
        plan(pendulum, ConfigPoint([math.pi / 2], [0.0, 0.0]), pendulum_params)
    with pytest.raises(StartInvalid):
        plan(pendulum, ConfigPoint([-math.pi / 2], [0.0, -1.0]), PlannerParams(lam=1e6))


def test_pendulum_reaches_goal(pendulum_run, pendulum_params):
    model, res = pendulum_run
    assert res.goal_node is not None
    assert abs(res.goal_node.eq.z[0]) <= 0.05
    assert any(n.dead_end for n in res.tree)


def test_tree_invariants(pendulum_run):
    _, res = pendulum_run
    tree = res.tree
    for n in tree.nodes[1:]:
        parent = tree[n.parent_id]
        assert n.parent_id < n.id
        assert not parent.dead_end
        assert n.cumulative_phi == pytest.approx(parent.cumulative_phi + n.edge_phi, abs=1e-9)
        assert n.dead_end == (n.stop_reason == STOP_OBSTACLE)
        assert n.edge_phi > 0
        assert np.max(n.trace.residual) <= 1e-5


def test_plan_is_deterministic(pendulum, pendulum_run, pendulum_params):
    _, res = pendulum_run
    again = plan(pendulum, pendulum.start, pendulum_params)
    assert len(again.tree) == len(res.tree)
    for a, b in zip(again.tree, res.tree):
        assert a.parent_id == b.parent_id
        np.testing.assert_array_equal(a.eq.z, b.eq.z)
        np.testing.assert_array_equal(a.eq.u, b.eq.u)
        assert a.cumulative_phi == b.cumulative_phi


# -- paths -------------------------------------------------------------------------

def test_root_path(pendulum_run):
    _, res = pendulum_run
    path = extract_path(res.tree, res.tree.root)
    assert path.edges == 0 and len(path.t) == 1 and path.phi[0] == 0.0


def test_path_additivity(pendulum_run):
    _, res = pendulum_run
    node = res.goal_node
    path = extract_path(res.tree, node)
    depth, cur = 0, node
    while cur.parent_id is not None:
        depth += 1
        cur = res.tree[cur.parent_id]
    assert path.edges == depth
    assert path.phi[-1] == pytest.approx(node.cumulative_phi, abs=1e-9)
    assert np.all(np.diff(path.phi) >= 0)
    assert np.all(np.diff(path.t) > 0)
    np.testing.assert_allclose(path.f_ctrl[0], res.tree.root.eq.f_ctrl)


def test_path_replay(pendulum_run, pendulum_params):
    model, res = pendulum_run
    path = extract_path(res.tree, res.goal_node)
    eq = res.tree.root.eq
    ts = pendulum_params.track_settings
    # replay each edge's control segment through the tracker
    for tr in path.traces:
        rep = track(model, eq, tr.u[-1], 1e9, ts)
        assert np.max(np.abs(rep.z[-1] - tr.z[-1])) <= 1e-4
        eq = rep.final


def test_foreign_node_rejected(pendulum_run, bowl):
    _, res = pendulum_run
    other = Tree(_eq(bowl, np.zeros(2)))
    with pytest.raises(TreeIntegrityError):
        extract_path(res.tree, other.root.__class__(len(res.tree) + 5, 0, other.root.eq))


# -- potential bias ----------------------------------------------------------------

def test_beta_biases_toward_low_potential(clip):
    cfg = shipped("clip")
    diffs = []
    for seed in range(50):
        means = []
        for beta in (0.0, 1.0):
            p = PlannerParams.from_config(cfg, beta=beta, max_nodes=12, rng_seed=seed, goal=None)
            tree = plan(clip, clip.start, p).tree
            means.append(np.mean([tree[n.parent_id].eq.W for n in tree.nodes[1:]]))
        diffs.append(means[1] - means[0])
    diffs = np.array(diffs)
    rng = np.random.default_rng(0)
    boot = np.array([rng.choice(diffs, diffs.size).mean() for _ in range(4000)])
    assert np.percentile(boot, 97.5) <= 0.0
