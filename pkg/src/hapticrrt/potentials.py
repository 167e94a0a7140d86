"""Manipulation potentials ``W(z, u)`` and their derivative bundles.

Three scenario models are provided: a hinged pendulum pushed by a point
robot, a spring-loaded clip operated by two arms, and a book inserted into a
crowded shelf. Contact between superellipse bodies uses proxy points and the
smooth stiffness profile from :mod:`hapticrrt.geometry`.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import validate
from .geometry import CORNER_GAMMAS, ConfigError, StiffnessProfile, Superellipse
from .numerics import FdScheme, fd_jacobian


@dataclass(frozen=True)
class ConfigPoint:
    z: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))


@dataclass(frozen=True)
class DerivativeBundle:
    """``W`` and its derivative blocks; ``H_uz`` is the ``K x N`` block ``d2W/du dz``."""

    W: float
    grad_z: np.ndarray
    grad_u: np.ndarray
    H_zz: np.ndarray
    H_uz: np.ndarray
    H_uu: np.ndarray

    @property
    def f_ctrl(self) -> np.ndarray:
        """Force exerted through the controls, ``-dW/du``."""
        return -self.grad_u

    @classmethod
    def from_full(cls, W: float, g: np.ndarray, H: np.ndarray, n_z: int) -> "DerivativeBundle":
        return cls(
            W=float(W),
            grad_z=g[:n_z].copy(),
            grad_u=g[n_z:].copy(),
            H_zz=H[:n_z, :n_z].copy(),
            H_uz=H[n_z:, :n_z].copy(),
            H_uu=H[n_z:, n_z:].copy(),
        )


def _matrix(spec, n: int, what: str) -> np.ndarray:
    a = np.asarray(spec, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.ndim == 1:
        if a.size != n:
            raise ConfigError(f"{what}: expected {n} diagonal entries, got {a.size}")
        a = np.diag(a)
    if a.shape != (n, n):
        raise ConfigError(f"{what}: expected a {n}x{n} matrix")
    if not np.allclose(a, a.T):
        raise ConfigError(f"{what}: matrix must be symmetric")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ConfigError(f"{what}: matrix must be positive definite")
    return a


@dataclass
class QuadTerm:
    """``1/2 (S v - c)^T K (S v - c)`` over generalized coordinates ``v = (z, u)``."""

    S: np.ndarray
    c: np.ndarray
    K: np.ndarray

    def add_to(self, v, g, H) -> float:
        r = self.S @ v - self.c
        Kr = self.K @ r
        g += self.S.T @ Kr
        H += self.S.T @ self.K @ self.S
        return 0.5 * float(r @ Kr)

    def energy(self, v) -> float:
        r = self.S @ v - self.c
        return 0.5 * float(r @ self.K @ r)


class ContactSet:
    """Rigid superellipse bodies driven by generalized coordinates, plus corner/surface pairs."""

    def __init__(self, n_v: int, shapes: list, contacts: list, profile: StiffnessProfile,
                 restarts: int = 32, index_of=None) -> None:
        self.names = [s["name"] for s in shapes]
        if len(set(self.names)) != len(self.names):
            raise ConfigError("shape names must be unique")
        nb = len(shapes)
        self.base = np.zeros((nb, 3))
        self.idx = -np.ones((nb, 3), dtype=np.int64)
        self.offset = np.zeros((nb, 3))
        self.shape = np.zeros((nb, 3))
        self.bodies = []
        for b, s in enumerate(shapes):
            self.shape[b] = (s["a1"], s["a2"], s["eps"])
            self.base[b] = s.get("pose", [0.0, 0.0, 0.0])
            att = s.get("attachment", {})
            self.offset[b] = att.get("offset", [0.0, 0.0, 0.0])
            for c, dof in enumerate(att.get("dofs", [None, None, None])):
                if dof is not None:
                    self.idx[b, c] = index_of(dof)
            self.bodies.append(Superellipse(s["a1"], s["a2"], s["eps"]))
        pa, pb, pts = [], [], []
        for a_name, b_name in contacts:
            for nm in (a_name, b_name):
                if nm not in self.names:
                    raise ConfigError(f"contacts: unknown shape {nm!r}")
            if a_name == b_name:
                raise ConfigError(f"contacts: shape {a_name!r} paired with itself")
            a = self.names.index(a_name)
            b = self.names.index(b_name)
            gammas = shapes[a].get("corners", list(CORNER_GAMMAS))
            for g in gammas:
                pa.append(a)
                pb.append(b)
                pts.append(self.bodies[a].boundary_point(g, frame="body"))
        self.pair_a = np.array(pa, dtype=np.int64)
        self.pair_b = np.array(pb, dtype=np.int64)
        self.pair_pt = np.array(pts, dtype=float).reshape(-1, 2)
        self.profile = profile
        self.stiff = profile.as_array()
        self.restarts = int(restarts)
        self.n_v = n_v
        self._g = np.zeros(n_v)
        self._H = np.zeros((n_v, n_v))

    def evaluate(self, v: np.ndarray, order: int = 2):
        """Energy (``order=0``) or energy, gradient and Hessian; also the failed-pair count."""
        E, nfail = _kernels.contact_terms(
            v, self.base, self.idx, self.offset, self.shape, self.pair_a, self.pair_b,
            self.pair_pt, self.stiff, self.restarts, order, self._g, self._H)
        return E, self._g.copy(), self._H.copy(), nfail

    def world_pose(self, name: str, v: np.ndarray) -> tuple:
        b = self.names.index(name)
        x, y, th = self.base[b]
        for c in range(3):
            if self.idx[b, c] >= 0:
                val = v[self.idx[b, c]]
                if c == 0:
                    x += val
                elif c == 1:
                    y += val
                else:
                    th += val
        ox, oy, oth = self.offset[b]
        cth, sth = math.cos(th), math.sin(th)
        return (x + cth * ox - sth * oy, y + sth * ox + cth * oy, th + oth)

    def placed(self, name: str, v: np.ndarray) -> Superellipse:
        return self.bodies[self.names.index(name)].moved(self.world_pose(name, v))


class ScenarioModel:
    """A manipulation potential on ``Z x U`` with dimensions ``(n_z, n_u)``."""

    analytic_derivatives_available = True

    def __init__(self, name: str, n_z: int, n_u: int, config: dict) -> None:
        self.name = name
        self.n_z = n_z
        self.n_u = n_u
        self.config = config
        cb = config["control_bounds"]
        self.control_lo = np.asarray(cb["lo"], dtype=float)
        self.control_hi = np.asarray(cb["hi"], dtype=float)
        if self.control_lo.shape != (n_u,) or self.control_hi.shape != (n_u,):
            raise ConfigError(f"control_bounds: expected {n_u} entries in lo and hi")
        if np.any(self.control_hi <= self.control_lo):
            raise ConfigError("control_bounds: hi must exceed lo")
        sb = config.get("state_bounds")
        if sb is not None:
            self.state_lo = np.asarray(sb["lo"], dtype=float)
            self.state_hi = np.asarray(sb["hi"], dtype=float)
            if self.state_lo.shape != (n_z,) or self.state_hi.shape != (n_z,):
                raise ConfigError(f"state_bounds: expected {n_z} entries in lo and hi")
        else:
            self.state_lo = self.state_hi = None
        start = config["start"]
        if len(start["z"]) != n_z or len(start["u"]) != n_u:
            raise ConfigError(f"start: expected z of length {n_z} and u of length {n_u}")
        br = config.get("branches", {})
        self.lattice = tuple(br.get("lattice", [3] * n_z))
        self.dedup_radius = float(br.get("dedup_radius", 1e-4))
        self.periodic = ()
        self.proxy_failures = 0

    @property
    def dims(self) -> tuple:
        return (self.n_z, self.n_u)

    @property
    def start(self) -> ConfigPoint:
        return ConfigPoint(self.config["start"]["z"], self.config["start"]["u"])

    @property
    def scenario_hash(self) -> str:
        text = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def in_bounds(self, u) -> bool:
        u = np.asarray(u)
        tol = 1e-12 * (1.0 + np.abs(u))
        return bool(np.all(u >= self.control_lo - tol) and np.all(u <= self.control_hi + tol))

    def state_in_bounds(self, z) -> bool:
        if self.state_lo is None:
            return True
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.state_lo - 1e-9) and np.all(z <= self.state_hi + 1e-9))

    def energy(self, z, u) -> float:
        raise NotImplementedError

    def analytic_bundle(self, z, u) -> DerivativeBundle:
        raise NotImplementedError

    def seed_grid(self, u) -> list:
        """Default equilibrium seeds: a lattice over the state bounds."""
        if self.state_lo is None:
            return [np.asarray(self.config["start"]["z"], dtype=float)]
        axes = [np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
                for lo, hi, n in zip(self.state_lo, self.state_hi, self.lattice)]
        return [np.array(p) for p in itertools.product(*axes)]

    def state_distance(self, za, zb) -> float:
        d = np.asarray(za, dtype=float) - np.asarray(zb, dtype=float)
        for i in self.periodic:
            d[i] = (d[i] + math.pi) % (2.0 * math.pi) - math.pi
        return float(np.linalg.norm(d))


class PendulumModel(ScenarioModel):
    """Hinged pendulum (angle ``z``) pushed by a planar point robot ``u = (u_x, u_y)``.

    ``W = 1/2 m g L0 sin z + 1/2 k |u - L0 (cos z, sin z)|^2``. With
    ``params.contact = "superellipse"`` the spring is replaced by a
    unilateral superellipse contact between the robot point and the body.
    """

    def __init__(self, config: dict) -> None:
        super().__init__("pendulum", 1, 2, config)
        p = config["params"]
        try:
            self.m = float(p["m"])
            self.g = float(p.get("g", 9.81))
            self.L0 = float(p["L0"])
            self.k = float(p["k"])
        except KeyError as exc:
            raise ConfigError(f"params: missing pendulum parameter {exc}") from exc
        if min(self.m, self.g, self.L0, self.k) <= 0:
            raise ConfigError("params: pendulum m, g, L0, k must all be positive")
        self.periodic = (0,)
        self.contact_mode = p.get("contact", "spring")
        self.contacts = None
        if self.contact_mode == "superellipse":
            st = config.get("stiffness")
            if st is None:
                raise ConfigError("stiffness: required for superellipse pendulum contact")
            profile = StiffnessProfile(st["k_min"], st["k_max"], st["d0"])
            shapes = [
                {"name": "pendulum", "a1": 0.5 * self.L0, "a2": 0.5 * float(p.get("width", 0.05)),
                 "eps": float(p.get("eps", 0.2)),
                 "attachment": {"dofs": [None, None, "z0"], "offset": [0.5 * self.L0, 0.0, 0.0]}},
                {"name": "probe", "a1": 1e-3, "a2": 1e-3, "eps": 1.0,
                 "attachment": {"dofs": ["u0", "u1", None]}, "corners": [0.0]},
            ]
            self.contacts = ContactSet(3, shapes, [("probe", "pendulum")], profile,
                                       st.get("proxy_restarts", 32), _dof_index(1, 2))
            # probe corner sits on the probe centre
            self.contacts.pair_pt[:] = 0.0
        elif self.contact_mode != "spring":
            raise ConfigError(f"params.contact: unknown mode {self.contact_mode!r}")

    def energy(self, z, u) -> float:
        th = float(np.asarray(z).ravel()[0])
        ux, uy = (float(x) for x in np.asarray(u).ravel())
        W = 0.5 * self.m * self.g * self.L0 * math.sin(th)
        if self.contacts is not None:
            E, _, _, nfail = self.contacts.evaluate(np.array([th, ux, uy]), order=0)
            self.proxy_failures += nfail
            return W + E
        ex = ux - self.L0 * math.cos(th)
        ey = uy - self.L0 * math.sin(th)
        return W + 0.5 * self.k * (ex * ex + ey * ey)

    def analytic_bundle(self, z, u) -> DerivativeBundle:
        th = float(np.asarray(z).ravel()[0])
        ux, uy = (float(x) for x in np.asarray(u).ravel())
        c, s = math.cos(th), math.sin(th)
        mgl = 0.5 * self.m * self.g * self.L0
        if self.contacts is not None:
            E, g, H, nfail = self.contacts.evaluate(np.array([th, ux, uy]), order=2)
            self.proxy_failures += nfail
            g[0] += mgl * c
            H[0, 0] += -mgl * s
            return DerivativeBundle.from_full(mgl * s + E, g, H, 1)
        k, L = self.k, self.L0
        ex = ux - L * c
        ey = uy - L * s
        W = mgl * s + 0.5 * k * (ex * ex + ey * ey)
        gz = mgl * c + k * L * (ux * s - uy * c)
        hzz = -mgl * s + k * L * (ux * c + uy * s)
        return DerivativeBundle(
            W=W,
            grad_z=np.array([gz]),
            grad_u=np.array([k * ex, k * ey]),
            H_zz=np.array([[hzz]]),
            H_uz=np.array([[k * L * s], [-k * L * c]]),
            H_uu=np.array([[k, 0.0], [0.0, k]]),
        )

    def seed_grid(self, u) -> list:
        n = self.lattice[0] if self.config.get("branches", {}).get("lattice") else 32
        return [np.array([a]) for a in np.linspace(-math.pi, math.pi, n, endpoint=False)]


def _dof_index(n_z: int, n_u: int):
    def index_of(dof: str) -> int:
        kind, i = dof[0], int(dof[1:])
        if kind == "z":
            if i >= n_z:
                raise ConfigError(f"attachment dof {dof!r} out of range (N={n_z})")
            return i
        if i >= n_u:
            raise ConfigError(f"attachment dof {dof!r} out of range (K={n_u})")
        return n_z + i
    return index_of


class ContactModel(ScenarioModel):
    """Sum of quadratic springs and superellipse contact energies."""

    def __init__(self, name: str, n_z: int, n_u: int, config: dict, quad_terms: list) -> None:
        super().__init__(name, n_z, n_u, config)
        st = config.get("stiffness")
        if st is None or "shapes" not in config:
            raise ConfigError(f"{name}: config needs 'shapes' and 'stiffness'")
        self.profile = StiffnessProfile(st["k_min"], st["k_max"], st["d0"])
        self.contacts = ContactSet(n_z + n_u, config["shapes"], config.get("contacts", []), self.profile,
                                   st.get("proxy_restarts", 32), _dof_index(n_z, n_u))
        self.quad_terms = quad_terms

    def _v(self, z, u) -> np.ndarray:
        return np.concatenate([np.asarray(z, dtype=float).ravel(), np.asarray(u, dtype=float).ravel()])

    def energy(self, z, u) -> float:
        v = self._v(z, u)
        E, _, _, nfail = self.contacts.evaluate(v, order=0)
        self.proxy_failures += nfail
        return E + sum(t.energy(v) for t in self.quad_terms)

    def energy_terms(self, z, u) -> dict:
        v = self._v(z, u)
        out = {f"quad{i}": t.energy(v) for i, t in enumerate(self.quad_terms)}
        out["contact"] = self.contacts.evaluate(v, order=0)[0]
        return out

    def analytic_bundle(self, z, u) -> DerivativeBundle:
        v = self._v(z, u)
        E, g, H, nfail = self.contacts.evaluate(v, order=2)
        self.proxy_failures += nfail
        for t in self.quad_terms:
            E += t.add_to(v, g, H)
        return DerivativeBundle.from_full(E, g, H, self.n_z)


class ClipModel(ContactModel):
    """Spring clip: ``z = [z_theta, z_ly, z_rx]``, ``u = [u_ly, u_rx]``.

    ``W = 1/2 (u - z_r)^T K_c (u - z_r) + 1/2 k_theta (z_theta - z_theta0)^2 + contacts``.
    """

    def __init__(self, config: dict) -> None:
        p = config["params"]
        try:
            Kc = _matrix(p["K_c"], 2, "params.K_c")
            self.k_theta = float(p["k_theta"])
            self.z_theta0 = float(p["z_theta0"])
        except KeyError as exc:
            raise ConfigError(f"params: missing clip parameter {exc}") from exc
        if self.k_theta <= 0:
            raise ConfigError("params.k_theta must be positive")
        S_ctrl = np.array([[0, -1, 0, 1, 0], [0, 0, -1, 0, 1]], dtype=float)
        S_clip = np.array([[1, 0, 0, 0, 0]], dtype=float)
        terms = [QuadTerm(S_ctrl, np.zeros(2), Kc),
                 QuadTerm(S_clip, np.array([self.z_theta0]), np.array([[self.k_theta]]))]
        super().__init__("clip", 3, 2, config, terms)
        self.K_c = Kc


class BookshelfModel(ContactModel):
    """Book insertion: ``z = [z_b, z_1, z_2]`` (three planar poses), ``u = [u_x, u_y, u_theta]``.

    ``W = 1/2 (u - z_b)^T K_c (u - z_b) + sum_i 1/2 (z_i - z_i0)^T K_i (z_i - z_i0) + contacts``.
    """

    def __init__(self, config: dict) -> None:
        p = config["params"]
        try:
            Kc = _matrix(p["K_c"], 3, "params.K_c")
            K1 = _matrix(p["K_1"], 3, "params.K_1")
            K2 = _matrix(p["K_2"], 3, "params.K_2")
            z10 = np.asarray(p["z_10"], dtype=float)
            z20 = np.asarray(p["z_20"], dtype=float)
            self.w_1 = float(p["w_1"])
            self.w_2 = float(p["w_2"])
        except KeyError as exc:
            raise ConfigError(f"params: missing bookshelf parameter {exc}") from exc
        if not self.w_2 < self.w_1:
            raise ConfigError(f"params: slot width w_2={self.w_2} must be narrower than the book w_1={self.w_1}")
        I3 = np.eye(3)
        Z3 = np.zeros((3, 3))
        S_ctrl = np.hstack([-I3, Z3, Z3, I3])
        S_1 = np.hstack([Z3, I3, Z3, Z3])
        S_2 = np.hstack([Z3, Z3, I3, Z3])
        terms = [QuadTerm(S_ctrl, np.zeros(3), Kc), QuadTerm(S_1, z10, K1), QuadTerm(S_2, z20, K2)]
        super().__init__("bookshelf", 9, 3, config, terms)
        self.K_c, self.K_1, self.K_2 = Kc, K1, K2
        self.z_10, self.z_20 = z10, z20
        self._check_widths(config)

    def _check_widths(self, config: dict) -> None:
        shapes = {s["name"]: s for s in config["shapes"]}
        book = shapes.get("book")
        if book is not None and abs(2.0 * book["a1"] - self.w_1) > 1e-9:
            raise ConfigError(f"params.w_1={self.w_1} disagrees with the book shape width {2 * book['a1']}")
        n1, n2 = shapes.get("neighbor1"), shapes.get("neighbor2")
        if n1 is not None and n2 is not None:
            x1 = n1.get("pose", [0, 0, 0])[0] + self.z_10[0]
            x2 = n2.get("pose", [0, 0, 0])[0] + self.z_20[0]
            gap = (x2 - n2["a1"]) - (x1 + n1["a1"])
            if abs(gap - self.w_2) > 1e-9:
                raise ConfigError(f"params.w_2={self.w_2} disagrees with the neighbor gap {gap}")

    def seed_grid(self, u) -> list:
        """Book pose near the control (3x3x3 offsets), neighbors at rest."""
        u = np.asarray(u, dtype=float)
        offs = [np.array(o) for o in itertools.product((-0.01, 0.0, 0.01), (-0.02, 0.0, 0.02), (-0.1, 0.0, 0.1))]
        return [np.concatenate([u + o, self.z_10, self.z_20]) for o in offs]


class QuadraticModel(ScenarioModel):
    """Synthetic ``W = 1/2 z^T A z + z^T B u + 1/2 u^T C u`` with a constant metric.

    ``A`` (``N x N``) must be symmetric positive definite; the manifold is
    ``z*(u) = -A^{-1} B u`` and the reduced Hessian is ``C - B^T A^{-1} B``.
    """

    def __init__(self, A, B, C, control_bounds=None) -> None:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        n_z, n_u = B.shape
        if A.shape != (n_z, n_z) or C.shape != (n_u, n_u):
            raise ConfigError("quadratic model: A must be N x N, B N x K and C K x K")
        if not (np.allclose(A, A.T) and np.allclose(C, C.T)):
            raise ConfigError("quadratic model: A and C must be symmetric")
        lo, hi = control_bounds if control_bounds is not None else (-np.ones(n_u), np.ones(n_u))
        config = {"control_bounds": {"lo": list(map(float, lo)), "hi": list(map(float, hi))},
                  "start": {"z": [0.0] * n_z, "u": [0.0] * n_u}}
        super().__init__("quadratic", n_z, n_u, config)
        self.A, self.B, self.C = A, B, C

    def equilibrium(self, u) -> np.ndarray:
        return -np.linalg.solve(self.A, self.B @ np.asarray(u, dtype=float))

    def energy(self, z, u) -> float:
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        return float(0.5 * z @ self.A @ z + z @ self.B @ u + 0.5 * u @ self.C @ u)

    def analytic_bundle(self, z, u) -> DerivativeBundle:
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        return DerivativeBundle(
            W=self.energy(z, u),
            grad_z=self.A @ z + self.B @ u,
            grad_u=self.B.T @ z + self.C @ u,
            H_zz=self.A.copy(),
            H_uz=self.B.T.copy(),
            H_uu=self.C.copy(),
        )


_BUILDERS = {"pendulum": PendulumModel, "clip": ClipModel, "bookshelf": BookshelfModel}


def build_scenario(name: str, config: dict) -> ScenarioModel:
    """Construct a scenario model from a validated config document."""
    validate(config)
    if config["scenario"] != name:
        raise ConfigError(f"scenario: config describes {config['scenario']!r}, not {name!r}")
    return _BUILDERS[name](config)


def model_from_config(config: dict) -> ScenarioModel:
    return build_scenario(config["scenario"], config)


def fd_bundle(model: ScenarioModel, z, u, scheme: FdScheme = FdScheme(1e-5),
              hess_step: float = 2e-4) -> DerivativeBundle:
    """Derivative bundle from central differences of ``W`` alone.

    The gradient uses ``fd_jacobian``; the Hessian uses the second-difference
    stencils of ``W`` with step ``hess_step * max(1, |v_j|)``, so no analytic
    derivative enters.
    """
    n_z = model.n_z
    v0 = np.concatenate([np.atleast_1d(np.asarray(z, dtype=float)), np.atleast_1d(np.asarray(u, dtype=float))])

    def W(v):
        return model.energy(v[:n_z], v[n_z:])

    g = fd_jacobian(W, v0, scheme)[0]
    n = v0.size
    h = hess_step * np.maximum(1.0, np.abs(v0))
    W0 = W(v0)
    H = np.empty((n, n))
    for i in range(n):
        e_i = np.zeros(n)
        e_i[i] = h[i]
        H[i, i] = (W(v0 + e_i) - 2.0 * W0 + W(v0 - e_i)) / (h[i] * h[i])
        for j in range(i):
            e_j = np.zeros(n)
            e_j[j] = h[j]
            H[i, j] = H[j, i] = (W(v0 + e_i + e_j) - W(v0 + e_i - e_j) - W(v0 - e_i + e_j)
                                 + W(v0 - e_i - e_j)) / (4.0 * h[i] * h[j])
    return DerivativeBundle.from_full(W0, g, H, n_z)


def evaluate_bundle(model: ScenarioModel, point: ConfigPoint, method: str = "auto",
                    scheme: FdScheme = FdScheme()) -> DerivativeBundle:
    """``W`` and all derivative blocks at ``point``.

    ``method``: ``"analytic"``, ``"fd"`` or ``"auto"`` (analytic when the
    model provides it).
    """
    if point.z.shape != (model.n_z,) or point.u.shape != (model.n_u,):
        raise ValueError(f"point dimensions {point.z.shape}, {point.u.shape} do not match model {model.dims}")
    if method == "auto":
        method = "analytic" if model.analytic_derivatives_available else "fd"
    if method == "analytic":
        return model.analytic_bundle(point.z, point.u)
    if method == "fd":
        return fd_bundle(model, point.z, point.u, scheme)
    raise ValueError(f"unknown derivative method {method!r}")
