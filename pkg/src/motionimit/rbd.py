"""Spatial rigid-body dynamics for small articulated chains.

Mass matrix by the composite-rigid-body algorithm, bias forces by recursive
Newton-Euler, semi-implicit Euler integration of base-pinned or floating
chains. Contact is not modelled.

Generalized coordinates follow the kernel layout: revolute joints contribute
one position/velocity each, a floating root contributes ``[p, quat]`` to the
positions and its body-frame twist ``[omega_b, v_b]`` to the velocities.
``RobotState`` keeps the base twist in world coordinates instead; use
:func:`generalized` and :func:`state_acceleration` to move between the two.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from .rotations import IDENTITY, quat_exp, quat_multiply, quat_normalize, quat_to_matrix

GRAVITY = np.array([0.0, 0.0, -9.81])

_JOINT_TYPES = {"fixed": K.FIXED, "revolute": K.REVOLUTE, "floating-base": K.FLOATING}


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class Link:
    mass: float
    com: tuple = (0.0, 0.0, 0.0)
    inertia: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    name: str = ""

    def spatial_inertia(self):
        m = float(self.mass)
        c = np.asarray(self.com, dtype=float)
        Ic = np.asarray(self.inertia, dtype=float)
        C = K.skew(c)
        I6 = np.zeros((6, 6))
        I6[:3, :3] = Ic + m * C @ C.T
        I6[:3, 3:] = m * C
        I6[3:, :3] = m * C.T
        I6[3:, 3:] = m * np.eye(3)
        return I6


@dataclass(frozen=True)
class Joint:
    type: str = "revolute"
    parent: int = -1
    axis: tuple = (0.0, 0.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    q_limits: tuple = (-np.pi, np.pi)
    tau_limits: tuple = (-np.inf, np.inf)
    armature: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class ChainModel:
    """Open kinematic tree. Joint ``i`` attaches link ``i`` to link ``joints[i].parent``."""

    links: tuple
    joints: tuple
    gravity: tuple = tuple(GRAVITY)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        if len(self.links) != len(self.joints) or not self.links:
            raise ValueError("need one joint per link and at least one link")
        for i, (link, joint) in enumerate(zip(self.links, self.joints)):
            if joint.type not in _JOINT_TYPES:
                raise ValueError(f"joint {i}: unknown type {joint.type!r}")
            if not -1 <= joint.parent < i:
                raise ValueError(f"joint {i}: parent {joint.parent} must precede it")
            if joint.type == "floating-base" and (i != 0 or joint.parent != -1):
                raise ValueError("only the root joint may be floating-base")
            if joint.type == "revolute" and abs(np.linalg.norm(joint.axis) - 1.0) > 1e-9:
                raise ValueError(f"joint {i}: axis must be unit length")
            if link.mass < 0:
                raise ValueError(f"link {i}: negative mass")
            Ic = np.asarray(link.inertia, dtype=float)
            if not np.allclose(Ic, Ic.T, atol=1e-12):
                raise ValueError(f"link {i}: inertia not symmetric")
            if np.linalg.eigvalsh(Ic).min() < -1e-12:
                raise ValueError(f"link {i}: inertia not positive semidefinite")

    @property
    def floating(self):
        return self.joints[0].type == "floating-base"

    @cached_property
    def _layout(self):
        qidx, vidx = [], []
        nq = nv = 0
        for j in self.joints:
            qidx.append(nq)
            vidx.append(nv)
            if j.type == "revolute":
                nq += 1
                nv += 1
            elif j.type == "floating-base":
                nq += 7
                nv += 6
        return np.array(qidx, dtype=np.int64), np.array(vidx, dtype=np.int64), nq, nv

    @property
    def nq(self):
        return self._layout[2]

    @property
    def nv(self):
        return self._layout[3]

    @property
    def n_bodies(self):
        return len(self.links)

    @cached_property
    def revolute(self):
        """Body indices of the revolute (actuated) joints, in coordinate order."""
        return tuple(i for i, j in enumerate(self.joints) if j.type == "revolute")

    @property
    def n_joints(self):
        return len(self.revolute)

    @cached_property
    def arrays(self):
        qidx, vidx, _, nv = self._layout
        n = self.n_bodies
        axis = np.zeros((n, 3))
        tree_R = np.zeros((n, 3, 3))
        tree_r = np.zeros((n, 3))
        inertia = np.zeros((n, 6, 6))
        armature = np.zeros(nv)
        for i, (link, j) in enumerate(zip(self.links, self.joints)):
            axis[i] = j.axis
            tree_R[i] = quat_to_matrix(quat_normalize(j.rotation))
            tree_r[i] = j.origin
            inertia[i] = link.spatial_inertia()
            if j.type == "revolute":
                armature[vidx[i]] = j.armature
        parent = np.array([j.parent for j in self.joints], dtype=np.int64)
        jtype = np.array([_JOINT_TYPES[j.type] for j in self.joints], dtype=np.int64)
        return parent, jtype, axis, tree_R, tree_r, qidx, vidx, inertia, armature

    @property
    def gravity_vector(self):
        return np.array(self.gravity)

    @property
    def total_mass(self):
        return float(sum(link.mass for link in self.links))

    def joint_limits(self):
        """(q_min, q_max, tau_min, tau_max) over the revolute joints."""
        js = [self.joints[i] for i in self.revolute]
        return (np.array([j.q_limits[0] for j in js], dtype=float),
                np.array([j.q_limits[1] for j in js], dtype=float),
                np.array([j.tau_limits[0] for j in js], dtype=float),
                np.array([j.tau_limits[1] for j in js], dtype=float))

    def with_masses(self, scale):
        """Copy with every link mass and inertia multiplied by ``scale[i]``."""
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.n_bodies,))
        links = [replace(l, mass=l.mass * s, inertia=tuple(map(tuple, np.asarray(l.inertia) * s)))
                 for l, s in zip(self.links, scale)]
        return replace(self, links=tuple(links))

    def to_dict(self):
        def _num(x):
            return float(x) if np.isfinite(x) else (None if np.isnan(x) else ("inf" if x > 0 else "-inf"))

        return {
            "links": [{"name": l.name, "mass": float(l.mass), "com": [float(c) for c in l.com],
                       "inertia": [[float(v) for v in row] for row in l.inertia]} for l in self.links],
            "joints": [{"name": j.name, "type": j.type, "parent": int(j.parent),
                        "axis": [float(a) for a in j.axis], "origin": [float(o) for o in j.origin],
                        "rotation": [float(r) for r in j.rotation],
                        "q_limits": [_num(v) for v in j.q_limits],
                        "tau_limits": [_num(v) for v in j.tau_limits],
                        "armature": float(j.armature)} for j in self.joints],
            "gravity": list(self.gravity),
        }

    @classmethod
    def from_dict(cls, doc):
        def _lim(pair):
            return tuple(float(v) for v in pair)

        unknown = set(doc) - {"links", "joints", "gravity"}
        if unknown:
            raise ValueError(f"unknown chain keys: {sorted(unknown)}")
        links = [Link(mass=float(l["mass"]), com=tuple(l.get("com", (0, 0, 0))),
                      inertia=tuple(map(tuple, l.get("inertia", np.zeros((3, 3))))),
                      name=l.get("name", "")) for l in doc["links"]]
        joints = []
        for j in doc["joints"]:
            kw = {"type": j.get("type", "revolute"), "parent": int(j.get("parent", -1)),
                  "axis": tuple(j.get("axis", (0, 0, 1))), "origin": tuple(j.get("origin", (0, 0, 0))),
                  "rotation": tuple(j.get("rotation", (1, 0, 0, 0))),
                  "armature": float(j.get("armature", 0.0)), "name": j.get("name", "")}
            if "q_limits" in j:
                kw["q_limits"] = _lim(j["q_limits"])
            if "tau_limits" in j:
                kw["tau_limits"] = _lim(j["tau_limits"])
            joints.append(Joint(**kw))
        return cls(links=tuple(links), joints=tuple(joints),
                   gravity=tuple(doc.get("gravity", GRAVITY)))


def load_chain(path):
    return ChainModel.from_dict(json.loads(Path(path).read_text()))


def save_chain(chain, path):
    Path(path).write_text(json.dumps(chain.to_dict(), indent=2))


def _check(chain, q, qd=None):
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.nq,):
        raise ValueError(f"expected {chain.nq} positions, got shape {q.shape}")
    if qd is not None:
        qd = np.asarray(qd, dtype=float)
        if qd.shape != (chain.nv,):
            raise ValueError(f"expected {chain.nv} velocities, got shape {qd.shape}")
    return q, qd


def mass_matrix(chain, q):
    q, _ = _check(chain, q)
    parent, jtype, axis, tR, tr, qidx, vidx, inertia, arm = chain.arrays
    return K.crba(parent, jtype, axis, tR, tr, qidx, vidx, inertia, arm, q, chain.nv)


def inverse_dynamics(chain, q, qd, qdd, fext=None):
    q, qd = _check(chain, q, qd)
    qdd = np.asarray(qdd, dtype=float)
    if fext is None:
        fext = np.zeros((chain.n_bodies, 6))
    parent, jtype, axis, tR, tr, qidx, vidx, inertia, arm = chain.arrays
    return K.rnea(parent, jtype, axis, tR, tr, qidx, vidx, inertia, arm,
                  q, qd, qdd, chain.gravity_vector, np.asarray(fext, dtype=float))


def bias_forces(chain, q, qd):
    """Coriolis, centrifugal and gravity generalized forces h(q, qd)."""
    return inverse_dynamics(chain, q, qd, np.zeros(chain.nv))


def body_poses(chain, q):
    q, _ = _check(chain, q)
    parent, jtype, axis, tR, tr, qidx, _, _, _ = chain.arrays
    return K.body_poses(parent, jtype, axis, tR, tr, qidx, q)


def world_wrench_to_body(chain, q, wrench):
    """Body-frame spatial forces from world wrenches ``[moment; force]`` at body origins.

    ``wrench`` is an (n_bodies, 6) array.
    """
    Rw, _ = body_poses(chain, q)
    wrench = np.asarray(wrench, dtype=float)
    f = np.empty_like(wrench)
    for i in range(chain.n_bodies):
        f[i, :3] = Rw[i].T @ wrench[i, :3]
        f[i, 3:] = Rw[i].T @ wrench[i, 3:]
    return f


def forward_dynamics(chain, q, qd, tau, external_wrench=None):
    """Solve M qdd + h = tau + J^T w for qdd.

    ``external_wrench`` is an (n_bodies, 6) array of world-frame
    ``[moment; force]`` pairs applied at each body origin.
    """
    q, qd = _check(chain, q, qd)
    fext = None
    if external_wrench is not None:
        fext = world_wrench_to_body(chain, q, external_wrench)
    c = inverse_dynamics(chain, q, qd, np.zeros(chain.nv), fext)
    M = mass_matrix(chain, q)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DynamicsError("mass matrix is not positive definite") from exc
    rhs = np.asarray(tau, dtype=float) - c
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def kinetic_energy(chain, q, qd):
    return 0.5 * qd @ mass_matrix(chain, q) @ qd


def potential_energy(chain, q):
    Rw, pw = body_poses(chain, q)
    g = chain.gravity_vector
    return -sum(l.mass * g @ (pw[i] + Rw[i] @ np.asarray(l.com)) for i, l in enumerate(chain.links))


def center_of_mass(chain, q):
    Rw, pw = body_poses(chain, q)
    m = chain.total_mass
    return sum(l.mass * (pw[i] + Rw[i] @ np.asarray(l.com)) for i, l in enumerate(chain.links)) / m


def point_jacobian(chain, q, body, point):
    """World-frame linear velocity Jacobian (3 x nv) of a point fixed on ``body``."""
    Rw, pw = body_poses(chain, q)
    x = pw[body] + Rw[body] @ np.asarray(point, dtype=float)
    parent, jtype, axis, _, _, _, vidx, _, _ = chain.arrays
    J = np.zeros((3, chain.nv))
    i = body
    while i >= 0:
        k = vidx[i]
        if jtype[i] == K.REVOLUTE:
            a, d = Rw[i] @ axis[i], x - pw[i]
            J[:, k] = (a[1] * d[2] - a[2] * d[1], a[2] * d[0] - a[0] * d[2], a[0] * d[1] - a[1] * d[0])
        elif jtype[i] == K.FLOATING:
            r = Rw[i].T @ (x - pw[i])
            J[:, k:k + 3] = -Rw[i] @ K.skew(r)
            J[:, k + 3:k + 6] = Rw[i]
        i = parent[i]
    return J


def point_position(chain, q, body, point):
    Rw, pw = body_poses(chain, q)
    return pw[body] + Rw[body] @ np.asarray(point, dtype=float)


@dataclass
class RobotState:
    """Base pose and world-frame twist, joint positions/velocities and the last action.

    For base-pinned chains the base fields stay at their initial values.
    """

    q: np.ndarray
    qd: np.ndarray
    base_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_quat: np.ndarray = field(default_factory=lambda: IDENTITY.copy())
    base_linvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_angvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_action: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.qd = np.asarray(self.qd, dtype=float).copy()
        self.base_pos = np.asarray(self.base_pos, dtype=float).copy()
        self.base_quat = np.asarray(self.base_quat, dtype=float).copy()
        self.base_linvel = np.asarray(self.base_linvel, dtype=float).copy()
        self.base_angvel = np.asarray(self.base_angvel, dtype=float).copy()
        if self.prev_action is None:
            self.prev_action = np.zeros_like(self.q)
        self.prev_action = np.asarray(self.prev_action, dtype=float).copy()

    def copy(self):
        return RobotState(self.q, self.qd, self.base_pos, self.base_quat,
                          self.base_linvel, self.base_angvel, self.prev_action)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in
                   (self.q, self.qd, self.base_pos, self.base_quat, self.base_linvel, self.base_angvel))


def generalized(chain, state):
    """Kernel-layout (q, qd) of a RobotState."""
    if not chain.floating:
        return state.q.copy(), state.qd.copy()
    R = quat_to_matrix(state.base_quat)
    q = np.concatenate((state.base_pos, state.base_quat, state.q))
    qd = np.concatenate((R.T @ state.base_angvel, R.T @ state.base_linvel, state.qd))
    return q, qd


def state_acceleration(chain, state, tau, external_wrench=None):
    """Accelerations in RobotState convention.

    Returns joint accelerations for pinned chains, and
    ``[omega_dot_world, a_world, qdd_joints]`` for floating chains, where
    ``a_world`` is the classical acceleration of the base origin.
    """
    q, qd = generalized(chain, state)
    tau = np.asarray(tau, dtype=float)
    if chain.floating:
        tau = np.concatenate((np.zeros(6), tau))
    qdd = forward_dynamics(chain, q, qd, tau, external_wrench)
    if not chain.floating:
        return qdd
    R = quat_to_matrix(state.base_quat)
    w_b, v_b = qd[:3], qd[3:6]
    return np.concatenate((R @ qdd[:3], R @ (qdd[3:6] + np.cross(w_b, v_b)), qdd[6:]))


def integrate(state, qdd, dt):
    """Semi-implicit Euler step: velocities first, then positions.

    ``qdd`` has n_j entries (pinned base) or 6 + n_j entries (floating base,
    as returned by :func:`state_acceleration`).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    qdd = np.asarray(qdd, dtype=float)
    s = state.copy()
    nj = s.q.shape[0]
    if qdd.shape[0] == nj + 6:
        s.base_angvel = s.base_angvel + dt * qdd[:3]
        s.base_linvel = s.base_linvel + dt * qdd[3:6]
        s.base_pos = s.base_pos + dt * s.base_linvel
        s.base_quat = quat_normalize(quat_multiply(quat_exp(s.base_angvel * dt), s.base_quat))
        qdd = qdd[6:]
    elif qdd.shape[0] != nj:
        raise ValueError(f"acceleration has {qdd.shape[0]} entries, state has {nj} joints")
    s.qd = s.qd + dt * qdd
    s.q = s.q + dt * s.qd
    return s


def point_mass_pendulum(mass=1.0, length=1.0, axis=(0.0, 1.0, 0.0), gravity=GRAVITY):
    """Single revolute joint carrying a point mass ``length`` below the pivot."""
    return ChainModel(
        links=(Link(mass=mass, com=(0.0, 0.0, -length)),),
        joints=(Joint(type="revolute", axis=axis),),
        gravity=tuple(gravity),
    )
