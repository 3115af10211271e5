"""Loop-closure kinematics of parallel-linkage actuators.

A linkage is split into two open chains that share a parent link:

* the main chain carries the parent joints ``q_p`` and the output joints
  ``q_o`` (the joints a simulator would see),
* the support chain carries copies of ``q_p``, the dependent joints ``q_d``
  (pushrods, couplers) and the actuated motor joints ``q_i``.

Loops close where a point on a main-chain body coincides with a point on a
support-chain body. Residuals are evaluated with the parent joints zeroed, so
they only depend on ``(q_o, q_d, q_i)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rbd


class WorkspaceError(RuntimeError):
    """Loop closure has no solution near the requested output configuration."""


class TransmissionSingularityError(RuntimeError):
    """Closure Jacobian w.r.t. the support joints is singular."""


CLOSURE_TOL = 1e-10
MAX_NEWTON_STEPS = 50
SINGULAR_COND = 1e12
SINGULAR_ABS = 1e-12  # m/rad; catches Jacobians that collapse in every direction


@dataclass(frozen=True)
class LoopConstraint:
    main_body: int
    main_point: tuple
    support_body: int
    support_point: tuple
    components: tuple = (0, 1, 2)


@dataclass
class TransmissionMaps:
    gamma_d: np.ndarray
    gamma_i: np.ndarray
    G: np.ndarray
    q_support: np.ndarray
    gamma_d_dot: np.ndarray | None = None
    gamma_i_dot: np.ndarray | None = None

    def G_dot_qd(self, linkage, qd_o):
        """``G_dot @ [0; qd_o]`` laid out in support-chain velocity order."""
        out = np.zeros(linkage.support.nv)
        if self.gamma_d_dot is not None:
            out[list(linkage.dependent_support)] = self.gamma_d_dot @ qd_o
        if self.gamma_i_dot is not None:
            out[list(linkage.actuated_support)] = self.gamma_i_dot @ qd_o
        return out


@dataclass
class PlaLinkage:
    """Closed-chain transmission between motors and output joints.

    Index tuples refer to joint-vector positions of the (pinned, revolute)
    main and support chains. ``motor_armature`` is the diagonal of ``I_i``.
    """

    main: rbd.ChainModel
    support: rbd.ChainModel
    parent_main: tuple
    output_main: tuple
    parent_support: tuple
    dependent_support: tuple
    actuated_support: tuple
    constraints: tuple
    motor_armature: np.ndarray
    q_nom: np.ndarray
    name: str = ""
    support_guess: np.ndarray | None = None
    qs_nom: np.ndarray = field(init=False)

    def __post_init__(self):
        self.parent_main = tuple(self.parent_main)
        self.output_main = tuple(self.output_main)
        self.parent_support = tuple(self.parent_support)
        self.dependent_support = tuple(self.dependent_support)
        self.actuated_support = tuple(self.actuated_support)
        self.constraints = tuple(self.constraints)
        self.motor_armature = np.asarray(self.motor_armature, dtype=float)
        self.q_nom = np.asarray(self.q_nom, dtype=float)
        if self.main.floating or self.support.floating:
            raise ValueError("linkage chains must be base-pinned")
        if sorted(self.parent_main + self.output_main) != list(range(self.main.nv)):
            raise ValueError("parent and output joints must cover the main chain")
        if sorted(self.parent_support + self.dependent_support + self.actuated_support) \
                != list(range(self.support.nv)):
            raise ValueError("parent, dependent and actuated joints must cover the support chain")
        if len(self.parent_main) != len(self.parent_support):
            raise ValueError("parent joints must be mirrored in the support chain")
        if self.motor_armature.shape != (self.n_i,) or np.any(self.motor_armature < 0):
            raise ValueError("motor armature must be a nonnegative vector of length dim(q_i)")
        if self.n_constraints != self.n_d + self.n_i:
            raise ValueError(f"{self.n_constraints} closure equations for "
                             f"{self.n_d + self.n_i} support unknowns")
        guess = self.support_guess if self.support_guess is not None else np.zeros(self.n_d + self.n_i)
        self.qs_nom = _newton(self, self.q_nom, np.asarray(guess, dtype=float))

    @property
    def n_o(self):
        return len(self.output_main)

    @property
    def n_d(self):
        return len(self.dependent_support)

    @property
    def n_i(self):
        return len(self.actuated_support)

    @property
    def n_constraints(self):
        return sum(len(c.components) for c in self.constraints)

    def split(self, q_s):
        """(q_d, q_i) from the stacked support unknowns."""
        return q_s[:self.n_d], q_s[self.n_d:]

    def main_q(self, q_o, q_p=None):
        q = np.zeros(self.main.nq)
        q[list(self.output_main)] = q_o
        if q_p is not None:
            q[list(self.parent_main)] = q_p
        return q

    def support_q(self, q_s, q_p=None):
        q = np.zeros(self.support.nq)
        q[list(self.dependent_support)] = q_s[:self.n_d]
        q[list(self.actuated_support)] = q_s[self.n_d:]
        if q_p is not None:
            q[list(self.parent_support)] = q_p
        return q

    def with_support_masses(self, scale):
        """Copy with support-chain masses scaled (0 gives massless support links)."""
        return PlaLinkage(self.main, self.support.with_masses(scale), self.parent_main,
                          self.output_main, self.parent_support, self.dependent_support,
                          self.actuated_support, self.constraints, self.motor_armature,
                          self.q_nom, self.name, self.qs_nom)

    def with_armature(self, armature):
        return PlaLinkage(self.main, self.support, self.parent_main, self.output_main,
                          self.parent_support, self.dependent_support, self.actuated_support,
                          self.constraints, np.broadcast_to(armature, (self.n_i,)).copy(),
                          self.q_nom, self.name, self.qs_nom)

    _INDEX_KEYS = ("parent_main", "output_main", "parent_support", "dependent_support",
                   "actuated_support")

    def to_dict(self):
        doc = {"name": self.name, "main": self.main.to_dict(), "support": self.support.to_dict()}
        doc.update({k: [int(i) for i in getattr(self, k)] for k in self._INDEX_KEYS})
        doc["constraints"] = [{"main_body": int(c.main_body), "main_point": [float(v) for v in c.main_point],
                               "support_body": int(c.support_body),
                               "support_point": [float(v) for v in c.support_point],
                               "components": [int(v) for v in c.components]} for c in self.constraints]
        doc["motor_armature"] = self.motor_armature.tolist()
        doc["q_nom"] = self.q_nom.tolist()
        doc["support_guess"] = self.qs_nom.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        allowed = {"name", "main", "support", "constraints", "motor_armature", "q_nom",
                   "support_guess", *cls._INDEX_KEYS}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown linkage keys: {sorted(unknown)}")
        cons = tuple(LoopConstraint(int(c["main_body"]), tuple(c["main_point"]), int(c["support_body"]),
                                    tuple(c["support_point"]), tuple(c.get("components", (0, 1, 2))))
                     for c in doc["constraints"])
        guess = doc.get("support_guess")
        return cls(main=rbd.ChainModel.from_dict(doc["main"]),
                   support=rbd.ChainModel.from_dict(doc["support"]),
                   **{k: tuple(doc[k]) for k in cls._INDEX_KEYS},
                   constraints=cons, motor_armature=np.asarray(doc["motor_armature"], dtype=float),
                   q_nom=np.asarray(doc["q_nom"], dtype=float), name=doc.get("name", ""),
                   support_guess=None if guess is None else np.asarray(guess, dtype=float))


def load_linkage(path):
    return PlaLinkage.from_dict(json.loads(Path(path).read_text()))


def save_linkage(linkage, path):
    Path(path).write_text(json.dumps(linkage.to_dict(), indent=2))


def closure_residual(linkage, q_o, q_s):
    qm = linkage.main_q(q_o)
    qs = linkage.support_q(q_s)
    Rm, pm = rbd.body_poses(linkage.main, qm)
    Rs, ps = rbd.body_poses(linkage.support, qs)
    out = []
    for c in linkage.constraints:
        a = pm[c.main_body] + Rm[c.main_body] @ np.asarray(c.main_point, float)
        b = ps[c.support_body] + Rs[c.support_body] @ np.asarray(c.support_point, float)
        out.append((a - b)[list(c.components)])
    return np.concatenate(out)


def closure_jacobians(linkage, q_o, q_s):
    """(dc/dq_o, dc/dq_s) with q_s stacked as [q_d; q_i]."""
    qm = linkage.main_q(q_o)
    qs = linkage.support_q(q_s)
    cols_s = list(linkage.dependent_support) + list(linkage.actuated_support)
    rows_o, rows_s = [], []
    for c in linkage.constraints:
        comp = list(c.components)
        Jm = rbd.point_jacobian(linkage.main, qm, c.main_body, c.main_point)
        Js = rbd.point_jacobian(linkage.support, qs, c.support_body, c.support_point)
        rows_o.append(Jm[comp][:, list(linkage.output_main)])
        rows_s.append(-Js[comp][:, cols_s])
    return np.vstack(rows_o), np.vstack(rows_s)


def _newton(linkage, q_o, guess):
    x = np.array(guess, dtype=float)
    r = closure_residual(linkage, q_o, x)
    err = np.linalg.norm(r)
    for _ in range(MAX_NEWTON_STEPS):
        if np.max(np.abs(r)) < CLOSURE_TOL:
            # one polishing step; quadratic convergence puts us at round-off
            _, Cs = closure_jacobians(linkage, q_o, x)
            x_new = x - np.linalg.lstsq(Cs, r, rcond=None)[0]
            r_new = closure_residual(linkage, q_o, x_new)
            if np.max(np.abs(r_new)) <= np.max(np.abs(r)):
                x = x_new
            return x
        _, Cs = closure_jacobians(linkage, q_o, x)
        step = np.linalg.lstsq(Cs, r, rcond=None)[0]
        t = 1.0
        while True:
            x_try = x - t * step
            r_try = closure_residual(linkage, q_o, x_try)
            e_try = np.linalg.norm(r_try)
            if e_try < err or t < 1e-4:
                break
            t *= 0.5
        x, r, err = x_try, r_try, e_try
    raise WorkspaceError(f"loop closure did not converge at q_o={np.asarray(q_o)} "
                         f"(residual {err:.3e})")


def solve_loop_closure(linkage, q_o, guess=None):
    """Support joints (q_d, q_i) closing every loop at output configuration ``q_o``.

    Damped Newton, warm-started from ``guess`` (stacked [q_d; q_i]) or the
    nominal solution.
    """
    q_o = np.asarray(q_o, dtype=float)
    if guess is None:
        guess = linkage.qs_nom
    return linkage.split(_newton(linkage, q_o, guess))


def _gammas(linkage, q_o, q_s):
    Co, Cs = closure_jacobians(linkage, q_o, q_s)
    sv = np.linalg.svd(Cs, compute_uv=False)
    if sv[-1] <= sv[0] / SINGULAR_COND or sv[-1] < SINGULAR_ABS:
        raise TransmissionSingularityError(f"closure Jacobian singular at q_o={q_o}")
    gamma = -np.linalg.solve(Cs, Co)
    return gamma[:linkage.n_d], gamma[linkage.n_d:]


GAMMA_DOT_EPS = 1e-6


def transmission_jacobians(linkage, q_o, qd_o=None, guess=None):
    """Velocity maps qd_d = Gamma_d qd_o and qd_i = Gamma_i qd_o at ``q_o``.

    With ``qd_o`` given, time derivatives along that velocity are added by a
    central difference of the maps.
    """
    q_o = np.asarray(q_o, dtype=float)
    q_d, q_i = solve_loop_closure(linkage, q_o, guess)
    q_s = np.concatenate((q_d, q_i))
    gd, gi = _gammas(linkage, q_o, q_s)
    G = np.zeros((linkage.support.nv, linkage.main.nv))
    for ks, km in zip(linkage.parent_support, linkage.parent_main):
        G[ks, km] = 1.0
    G[np.ix_(linkage.dependent_support, linkage.output_main)] = gd
    G[np.ix_(linkage.actuated_support, linkage.output_main)] = gi
    maps = TransmissionMaps(gd, gi, G, q_s)
    if qd_o is not None:
        qd_o = np.asarray(qd_o, dtype=float)
        speed = np.linalg.norm(qd_o)
        if speed == 0.0:
            maps.gamma_d_dot = np.zeros_like(gd)
            maps.gamma_i_dot = np.zeros_like(gi)
        else:
            u = qd_o / speed
            h = GAMMA_DOT_EPS
            sp = _newton(linkage, q_o + h * u, q_s)
            sm = _newton(linkage, q_o - h * u, q_s)
            gdp, gip = _gammas(linkage, q_o + h * u, sp)
            gdm, gim = _gammas(linkage, q_o - h * u, sm)
            maps.gamma_d_dot = speed * (gdp - gdm) / (2 * h)
            maps.gamma_i_dot = speed * (gip - gim) / (2 * h)
    return maps


def map_actuator_torque(gamma_i, tau_i):
    """Output-joint torque produced by motor torques: Gamma_i^T tau_i."""
    return np.asarray(gamma_i, dtype=float).T @ np.asarray(tau_i, dtype=float)
