"""Contact-free floating-base plant for the imitation environment.

The toy plant is a torso with two limbs hanging below it. Limb 0 is a
pitch-roll pair driven through the pushrod ankle linkage, so its output
torques are limited by a configuration-dependent polygon. Limb 1 is a
hip-knee pair about y with box torque limits. The end link of each limb is
a keybody.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rbd
from ..pla.linkage import PlaLinkage, transmission_jacobians
from ..pla.mechanisms import motor_torque_box, pushrod_ankle
from ..pla.models import nominal_armature
from ..pla.polytope import polytope_from_map, torque_polytope
from ..rotations import matrix_to_quat, quat_to_matrix

X = (1.0, 0.0, 0.0)
Y = (0.0, 1.0, 0.0)


def _box_inertia(m, sx, sy, sz):
    return ((m * (sy * sy + sz * sz) / 12, 0.0, 0.0),
            (0.0, m * (sx * sx + sz * sz) / 12, 0.0),
            (0.0, 0.0, m * (sx * sx + sy * sy) / 12))


@dataclass
class PlaAttachment:
    """A two-output linkage driving plant joints ``joints`` (joint-vector indices)."""

    joints: tuple
    linkage: PlaLinkage
    box: np.ndarray
    _guess: np.ndarray | None = field(default=None, repr=False, compare=False)

    def fresh(self):
        """Copy without the closure warm start."""
        return PlaAttachment(self.joints, self.linkage, self.box)

    def polytope(self, q):
        """Polygon at ``q``; outputs beyond the linkage limits are clamped to them first.

        The closure solve is warm-started from the previous call.
        """
        lo, hi = self.linkage.main.joint_limits()[:2]
        q_o = np.clip(np.asarray(q, dtype=float)[list(self.joints)], lo, hi)
        maps = transmission_jacobians(self.linkage, q_o, guess=self._guess)
        self._guess = maps.q_support
        return polytope_from_map(maps.gamma_i, self.box)


@dataclass
class Plant:
    """Floating chain plus the control-side data the environment needs."""

    chain: rbd.ChainModel
    keybodies: tuple
    action_scale: np.ndarray
    pla: tuple = ()
    name: str = ""
    nominal_q: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.chain.floating:
            raise ValueError("the environment plant needs a floating base")
        self.action_scale = np.asarray(self.action_scale, dtype=float)
        if self.action_scale.shape != (self.n_j,) or np.any(self.action_scale <= 0):
            raise ValueError("action scale must be a positive per-joint vector")
        for kb in self.keybodies:
            if not 0 < kb < self.chain.n_bodies:
                raise ValueError(f"keybody {kb} is not a limb body")
        if self.nominal_q is None:
            self.nominal_q = np.zeros(self.n_j)

    @property
    def n_j(self):
        return self.chain.n_joints

    @property
    def n_kb(self):
        return len(self.keybodies)

    @property
    def armature(self):
        """Per-joint nominal armature used for PD design."""
        return self.chain.arrays[8][6:].copy()

    @property
    def limits(self):
        return self.chain.joint_limits()

    def polytopes(self, q):
        """``[(joint indices, TorquePolytope)]`` at joint configuration ``q``."""
        return [(a.joints, a.polytope(q)) for a in self.pla]

    def with_masses(self, scale):
        return Plant(self.chain.with_masses(scale), self.keybodies, self.action_scale,
                     tuple(a.fresh() for a in self.pla), self.name, self.nominal_q)

    def fork(self):
        """Copy with its own linkage warm-start state, for one episode or stream."""
        return Plant(self.chain, self.keybodies, self.action_scale, tuple(a.fresh() for a in self.pla),
                     self.name, self.nominal_q)

    @property
    def base_inertia(self):
        return np.asarray(self.chain.links[0].inertia, dtype=float)

    def com_offset(self, q=None):
        """Whole-body CoM relative to the base origin, base frame, at ``q`` (default nominal)."""
        q = self.nominal_q if q is None else q
        qg = np.concatenate((np.zeros(3), [1.0, 0.0, 0.0, 0.0], q))
        return rbd.center_of_mass(self.chain, qg)


def toy_plant(torso_mass=6.0, limb_masses=(0.3, 2.0, 1.2, 1.0), hip_offset=0.12,
              knee_armature=0.05, knee_torque=40.0, attach_pla=True, gravity=(0.0, 0.0, 0.0)):
    """Torso plus a linkage-driven pitch-roll limb and a hip-knee limb.

    ``limb_masses`` are (pitch carrier, leg, thigh, shank). With
    ``attach_pla=False`` limb 0 gets box limits at the linkage's nominal
    torque bounding box instead of the polygon.
    """
    ankle = pushrod_ankle()
    box = motor_torque_box(ankle)
    D = np.diag(nominal_armature(ankle).D_bar)
    nom = torque_polytope(ankle, ankle.q_nom, box).vertices
    bound = np.abs(nom).max(axis=0)
    (p_lo, p_hi), (r_lo, r_hi) = (j.q_limits for j in ankle.main.joints)
    mp, mleg, mth, msh = limb_masses
    links = (
        rbd.Link(torso_mass, (0, 0, 0), _box_inertia(torso_mass, 0.3, 0.25, 0.2), "torso"),
        rbd.Link(mp, (0, 0, 0), _box_inertia(mp, 0.04, 0.04, 0.04), "limb0_pitch"),
        rbd.Link(mleg, (0, 0, -0.2), _box_inertia(mleg, 0.06, 0.06, 0.4), "limb0_leg"),
        rbd.Link(mth, (0, 0, -0.15), _box_inertia(mth, 0.05, 0.05, 0.3), "limb1_thigh"),
        rbd.Link(msh, (0, 0, -0.15), _box_inertia(msh, 0.04, 0.04, 0.3), "limb1_shank"),
    )
    joints = (
        rbd.Joint("floating-base", name="base"),
        rbd.Joint("revolute", 0, Y, (0.0, hip_offset, -0.1), q_limits=(p_lo, p_hi),
                  tau_limits=(-bound[0], bound[0]), armature=D[0], name="limb0_pitch"),
        rbd.Joint("revolute", 1, X, q_limits=(r_lo, r_hi),
                  tau_limits=(-bound[1], bound[1]), armature=D[1], name="limb0_roll"),
        rbd.Joint("revolute", 0, Y, (0.0, -hip_offset, -0.1), q_limits=(-1.0, 1.0),
                  tau_limits=(-knee_torque, knee_torque), armature=knee_armature, name="limb1_hip"),
        rbd.Joint("revolute", 3, Y, (0.0, 0.0, -0.3), q_limits=(0.0, 1.8),
                  tau_limits=(-knee_torque, knee_torque), armature=knee_armature, name="limb1_knee"),
    )
    chain = rbd.ChainModel(links, joints, gravity=tuple(gravity))
    pla = (PlaAttachment((0, 1), ankle, box),) if attach_pla else ()
    return Plant(chain, keybodies=(2, 4), action_scale=np.array([0.10, 0.05, 0.20, 0.20]),
                 pla=pla, name="toy_plant", nominal_q=np.array([0.0, 0.0, 0.0, 0.6]))


def keybody_poses(plant, state):
    """Keybody positions (n_kb, 3) and quaternions (n_kb, 4) relative to the base, base frame."""
    q, _ = rbd.generalized(plant.chain, state)
    Rw, pw = rbd.body_poses(plant.chain, q)
    Rb = quat_to_matrix(state.base_quat)
    pos = np.array([Rb.T @ (pw[k] - state.base_pos) for k in plant.keybodies])
    quat = np.array([matrix_to_quat(Rb.T @ Rw[k]) for k in plant.keybodies])
    return pos, quat


def keybody_velocities(plant, state):
    """Absolute linear velocities (n_kb, 3) of the keybody origins, base frame."""
    q, qd = rbd.generalized(plant.chain, state)
    Rb = quat_to_matrix(state.base_quat)
    return np.array([Rb.T @ (rbd.point_jacobian(plant.chain, q, k, np.zeros(3)) @ qd)
                     for k in plant.keybodies])
