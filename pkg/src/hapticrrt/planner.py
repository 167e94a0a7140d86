"""HapticRRT: a search tree grown on the equilibrium manifold.

Each iteration draws a random control, picks the tree node whose score
``(W - W_min + w_shift)^beta * |u - u_rand|_Sigma`` is lowest, and tracks the
manifold from that node toward the sample until the haptic-distance budget
runs out or a haptic obstacle is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .manifold import (STOP_OBSTACLE, EquilibriumPoint, TrackSettings, TrackTrace, is_haptic_obstacle,
                       solve_equilibrium, track)
from .potentials import ConfigPoint, ScenarioModel


class PlannerExhausted(RuntimeError):
    """Every node in the tree is a dead end."""


class StartInvalid(ValueError):
    """The start does not refine to a stable, obstacle-free equilibrium."""


class TreeIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class GoalSpec:
    """Axis-aligned goal box around ``center`` on the state or the control.

    ``indices`` selects the coordinates the box constrains (all by default);
    ``periodic`` lists positions within the box that wrap modulo ``2 pi``.
    """

    kind: str
    center: np.ndarray
    radius: np.ndarray
    periodic: tuple = ()
    indices: tuple | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("state-region", "control-region"):
            raise ValueError(f"unknown goal kind {self.kind!r}")
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        r = np.atleast_1d(np.asarray(self.radius, dtype=float))
        if c.shape != r.shape:
            raise ValueError("goal center and radius must have equal length")
        if np.any(r <= 0):
            raise ValueError("goal radius must be positive in every coordinate")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "periodic", tuple(int(i) for i in self.periodic))
        if self.indices is not None:
            idx = tuple(int(i) for i in self.indices)
            if len(idx) != c.size:
                raise ValueError("goal indices must match the center length")
            object.__setattr__(self, "indices", idx)

    @classmethod
    def from_config(cls, cfg: dict | None) -> "GoalSpec | None":
        if not cfg:
            return None
        idx = cfg.get("indices")
        return cls(cfg["kind"], cfg["center"], cfg["radius"], tuple(cfg.get("periodic", ())),
                   None if idx is None else tuple(idx))

    def offset(self, eq: EquilibriumPoint) -> np.ndarray:
        x = eq.z if self.kind == "state-region" else eq.u
        idx = list(self.indices) if self.indices is not None else list(range(self.center.size))
        if max(idx) >= x.size:
            raise ValueError("goal refers to coordinates beyond the target vector")
        d = x[idx] - self.center
        for i in self.periodic:
            d[i] = (d[i] + math.pi) % (2.0 * math.pi) - math.pi
        return d

    def satisfied(self, eq: EquilibriumPoint) -> bool:
        return bool(np.all(np.abs(self.offset(eq)) <= self.radius))


@dataclass(frozen=True)
class PlannerParams:
    epsilon: float = 0.5
    lam: float = 1e-3
    beta: float = 1.0
    sigma: np.ndarray | None = None
    max_nodes: int = 2000
    rng_seed: int = 0
    goal: GoalSpec | None = None
    eta: float = 10.0
    dt: float = 1e-3
    w_shift: float = 1.0
    stop_at_goal: bool = True

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.max_nodes < 0:
            raise ValueError("max_nodes must be non-negative")
        if not self.w_shift > 0:
            raise ValueError("w_shift must be positive")
        if self.sigma is not None:
            S = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if S.shape[0] != S.shape[1] or not np.allclose(S, S.T):
                raise ValueError("sigma must be a symmetric square matrix")
            if np.linalg.eigvalsh(S).min() <= 0:
                raise ValueError("sigma must be positive definite")
            object.__setattr__(self, "sigma", S)

    @property
    def track_settings(self) -> TrackSettings:
        return TrackSettings(eta=self.eta, dt=self.dt, lam=self.lam)

    @classmethod
    def from_config(cls, cfg: dict, **overrides) -> "PlannerParams":
        p = dict(cfg.get("planner", {}))
        kw = dict(
            epsilon=p.get("epsilon", 0.5),
            lam=p.get("lambda", 1e-3),
            beta=p.get("beta", 1.0),
            sigma=p.get("sigma"),
            max_nodes=p.get("max_nodes", 2000),
            rng_seed=p.get("seed", 0),
            goal=GoalSpec.from_config(cfg.get("goal")),
            eta=p.get("eta", 10.0),
            dt=p.get("dt", 1e-3),
            w_shift=p.get("w_shift", 1.0),
            stop_at_goal=p.get("stop_at_goal", True),
        )
        kw.update(overrides)
        return cls(**kw)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "lambda": self.lam, "beta": self.beta,
            "sigma": None if self.sigma is None else self.sigma.tolist(),
            "max_nodes": self.max_nodes, "seed": self.rng_seed, "eta": self.eta, "dt": self.dt,
            "w_shift": self.w_shift, "stop_at_goal": self.stop_at_goal,
            "goal": None if self.goal is None else {
                "kind": self.goal.kind, "center": self.goal.center.tolist(),
                "radius": self.goal.radius.tolist(), "periodic": list(self.goal.periodic),
                "indices": None if self.goal.indices is None else list(self.goal.indices)},
        }


@dataclass
class TreeNode:
    id: int
    parent_id: int | None
    eq: EquilibriumPoint
    dead_end: bool = False
    edge_phi: float = 0.0
    cumulative_phi: float = 0.0
    trace: TrackTrace | None = field(default=None, repr=False)
    stop_reason: str = ""


class Tree:
    """Nodes indexed by id; edges are implicit through ``parent_id``."""

    def __init__(self, root: EquilibriumPoint) -> None:
        self.nodes: list[TreeNode] = [TreeNode(0, None, root)]
        self._u = [np.asarray(root.u, dtype=float)]
        self._W = [float(root.W)]
        self._alive = [True]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def __getitem__(self, i: int) -> TreeNode:
        return self.nodes[i]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def add(self, parent: TreeNode, eq: EquilibriumPoint, trace: TrackTrace | None, dead_end: bool,
            edge_phi: float, stop_reason: str = "") -> TreeNode:
        if parent.dead_end:
            raise TreeIntegrityError(f"cannot extend dead-end node {parent.id}")
        node = TreeNode(len(self.nodes), parent.id, eq, dead_end, edge_phi, parent.cumulative_phi + edge_phi,
                        trace, stop_reason)
        self.nodes.append(node)
        self._u.append(np.asarray(eq.u, dtype=float))
        self._W.append(float(eq.W))
        self._alive.append(not dead_end)
        return node

    def arrays(self) -> tuple:
        return np.array(self._u), np.array(self._W), np.array(self._alive)


@dataclass(frozen=True)
class DirectionSample:
    u_rand: np.ndarray
    u_dot: np.ndarray
    near: TreeNode


def _sigma_inv(params: PlannerParams, n_u: int) -> np.ndarray:
    if params.sigma is None:
        return np.eye(n_u)
    if params.sigma.shape != (n_u, n_u):
        raise ValueError(f"sigma must be {n_u}x{n_u}")
    return np.linalg.inv(params.sigma)


def select_near(tree: Tree, u_rand, params: PlannerParams, sigma_inv: np.ndarray) -> TreeNode:
    """Lowest ``(W - W_min + w_shift)^beta * |u - u_rand|_Sigma`` over live nodes; ties go to the lowest id."""
    U, W, alive = tree.arrays()
    ids = np.flatnonzero(alive)
    if ids.size == 0:
        raise PlannerExhausted("all tree nodes are dead ends")
    d = U[ids] - np.asarray(u_rand, dtype=float)
    dist = np.sqrt(np.einsum("ij,jk,ik->i", d, sigma_inv, d))
    Wl = W[ids]
    score = dist if params.beta == 0 else (np.maximum(Wl - Wl.min(), 0.0) + params.w_shift) ** params.beta * dist
    return tree[int(ids[int(np.argmin(score))])]


def sample_direction(tree: Tree, model: ScenarioModel, params: PlannerParams, rng: np.random.Generator,
                     sigma_inv: np.ndarray | None = None) -> DirectionSample:
    """Draw ``u_rand`` uniformly in the control box and the node to extend toward it."""
    if sigma_inv is None:
        sigma_inv = _sigma_inv(params, model.n_u)
    while True:
        u_rand = rng.uniform(model.control_lo, model.control_hi)
        near = select_near(tree, u_rand, params, sigma_inv)
        delta = u_rand - near.eq.u
        n = float(np.linalg.norm(delta))
        if n > 1e-9:
            return DirectionSample(u_rand, delta / n, near)


def extend(model: ScenarioModel, near: TreeNode, u_rand, params: PlannerParams):
    """Track from ``near`` toward ``u_rand``; returns ``(eq, trace, dead_end)`` or ``None`` for a zero-length edge."""
    if near.dead_end:
        raise TreeIntegrityError(f"node {near.id} is a dead end")
    u_rand = np.asarray(u_rand, dtype=float)
    if float(np.linalg.norm(u_rand - near.eq.u)) <= 1e-9:
        return None
    trace = track(model, near.eq, u_rand, params.epsilon, params.track_settings)
    return trace.final, trace, trace.stop_reason == STOP_OBSTACLE


@dataclass
class PlanResult:
    tree: Tree
    goal_node: TreeNode | None
    exhausted: bool = False


def refine_start(model: ScenarioModel, start: ConfigPoint, lam: float) -> EquilibriumPoint:
    eq = solve_equilibrium(model, start.u, start.z)
    if not eq.converged or not eq.stable:
        raise StartInvalid(f"start does not refine to a stable equilibrium (residual {eq.residual_norm:.3g})")
    if not model.in_bounds(eq.u):
        raise StartInvalid("start control lies outside the control bounds")
    if is_haptic_obstacle(model, eq.point, lam):
        raise StartInvalid(f"start is a haptic obstacle (det H_zz = {eq.hess_det:.6g} <= {lam:g})")
    return eq


def plan(model: ScenarioModel, start: ConfigPoint, params: PlannerParams, progress=None) -> PlanResult:
    """Grow a tree of at most ``params.max_nodes`` extensions from ``start``."""
    root = refine_start(model, start, params.lam)
    tree = Tree(root)
    goal = params.goal
    goal_node = tree.root if goal is not None and goal.satisfied(root) else None
    if goal_node is not None and params.stop_at_goal:
        return PlanResult(tree, goal_node)
    rng = np.random.default_rng(params.rng_seed)
    sigma_inv = _sigma_inv(params, model.n_u)
    exhausted = False
    for n in range(params.max_nodes):
        try:
            s = sample_direction(tree, model, params, rng, sigma_inv)
        except PlannerExhausted:
            exhausted = True
            break
        eq, trace, dead = extend(model, s.near, s.u_rand, params)
        node = tree.add(s.near, eq, trace, dead, float(trace.phi[-1]), trace.stop_reason)
        if progress is not None:
            progress(n, node)
        if goal is not None and goal_node is None and not dead and goal.satisfied(eq):
            goal_node = node
            if params.stop_at_goal:
                break
    return PlanResult(tree, goal_node, exhausted)


@dataclass
class PlanPath:
    """Root-to-node control trajectory with states, cumulative haptic distance, energy and control force."""

    node_ids: list
    t: np.ndarray
    u: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    W: np.ndarray
    f_ctrl: np.ndarray
    residual: np.ndarray
    traces: list

    @property
    def edges(self) -> int:
        return len(self.traces)


def extract_path(tree: Tree, node: TreeNode) -> PlanPath:
    """Walk parents from ``node`` to the root and concatenate the edge traces."""
    if node.id >= len(tree) or tree[node.id] is not node:
        raise TreeIntegrityError(f"node {node.id} does not belong to this tree")
    chain = []
    cur = node
    seen = set()
    while cur.parent_id is not None:
        if cur.id in seen or cur.parent_id >= len(tree):
            raise TreeIntegrityError(f"broken parent chain at node {cur.id}")
        seen.add(cur.id)
        chain.append(cur)
        cur = tree[cur.parent_id]
    if cur.id != 0:
        raise TreeIntegrityError(f"node {node.id} is detached from the root")
    chain.reverse()
    root = tree.root
    t = [np.array([0.0])]
    u = [root.eq.u[None, :]]
    z = [root.eq.z[None, :]]
    phi = [np.array([0.0])]
    W = [np.array([root.eq.W])]
    traces = []
    F = [root.eq.f_ctrl[None, :]]
    R = [np.array([root.eq.residual_norm])]
    t_off = 0.0
    for nd in chain:
        tr = nd.trace
        if tr is None:
            raise TreeIntegrityError(f"node {nd.id} has no stored trace")
        parent_phi = tree[nd.parent_id].cumulative_phi
        t.append(tr.t[1:] + t_off)
        u.append(tr.u[1:])
        z.append(tr.z[1:])
        phi.append(tr.phi[1:] + parent_phi)
        W.append(tr.W[1:])
        F.append(tr.f_ctrl[1:])
        R.append(tr.residual[1:])
        t_off += float(tr.t[-1])
        traces.append(tr)
    return PlanPath([n.id for n in [root] + chain], np.concatenate(t), np.vstack(u), np.vstack(z),
                    np.concatenate(phi), np.concatenate(W), np.vstack(F), np.concatenate(R), traces)
