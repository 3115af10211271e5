"""Observations, rewards, termination and domain randomization.

Actor observation layout (flat, in this order)::

    omega_T (3)   torso angular velocity, torso frame        noisy
    g_T     (3)   unit gravity direction, torso frame        noisy
    q       (n_j) joint positions                            noisy
    qd      (n_j) joint velocities                           noisy
    a_prev  (n_a) previous action
    rz_ref  (1)   reference base height
    v_ref   (3)   reference base linear velocity, base frame
    w_ref   (3)   reference base angular velocity, base frame
    g_ref   (3)   reference gravity direction, base frame
    q_ref   (n_j) reference joint positions

for ``16 + 3 n_j + n_a`` entries. The torso frame is the base frame of the
plant. The critic vector appends the privileged block listed in
``CRITIC_PRIVILEGED``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..rotations import boxminus, gravity_in_frame, quat_to_matrix

ACTOR_SLOTS = ("omega_T", "g_T", "q", "qd", "a_prev", "rz_ref", "v_ref", "w_ref", "g_ref", "q_ref")
CRITIC_PRIVILEGED = ("v_base", "rz", "f_contact_base", "f_contact_kb", "r_kb", "v_kb",
                     "f_assist", "tau_assist", "beta", "r_track", "phase")
TRACKING_TERMS = ("base_position", "base_orientation", "base_angular_velocity",
                  "base_linear_velocity", "joint_position", "keybody_position", "keybody_orientation")


def _sizes(names, n_j, n_a, n_kb=0):
    size = {"omega_T": 3, "g_T": 3, "q": n_j, "qd": n_j, "a_prev": n_a, "rz_ref": 1,
            "v_ref": 3, "w_ref": 3, "g_ref": 3, "q_ref": n_j,
            "v_base": 3, "rz": 1, "f_contact_base": 3, "f_contact_kb": 3 * n_kb,
            "r_kb": 3 * n_kb, "v_kb": 3 * n_kb, "f_assist": 3, "tau_assist": 3, "beta": 1,
            "r_track": 7, "phase": 1}
    out, k = {}, 0
    for name in names:
        out[name] = slice(k, k + size[name])
        k += size[name]
    return out, k


def actor_layout(n_j, n_a):
    """Slices of every actor slot and the total dimension."""
    return _sizes(ACTOR_SLOTS, n_j, n_a)


def critic_layout(n_j, n_a, n_kb):
    return _sizes(ACTOR_SLOTS + CRITIC_PRIVILEGED, n_j, n_a, n_kb)


@dataclass(frozen=True)
class ObservationNoise:
    """Per-step zero-mean Gaussian noise standard deviations."""

    angular_velocity: float = 0.10
    gravity: float = 0.015
    joint_position: float = 0.005
    joint_velocity: float = 0.25

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("noise standard deviations must be nonnegative")


def build_actor_obs(state, ref, noise_rng=None, noise=ObservationNoise()):
    """Actor vector for plant ``state`` and next target ``ref``; no noise without ``noise_rng``."""
    R = quat_to_matrix(state.base_quat)
    w = R.T @ state.base_angvel
    g = gravity_in_frame(state.base_quat)
    q, qd = state.q.copy(), state.qd.copy()
    if noise_rng is not None:
        w = w + noise_rng.normal(0.0, noise.angular_velocity, 3)
        g = g + noise_rng.normal(0.0, noise.gravity, 3)
        q = q + noise_rng.normal(0.0, noise.joint_position, q.shape)
        qd = qd + noise_rng.normal(0.0, noise.joint_velocity, qd.shape)
    return np.concatenate((w, g, q, qd, state.prev_action, [ref.height], ref.linvel_base,
                           ref.angvel_base, ref.gravity_base, ref.q))


@dataclass
class Privileged:
    """Critic-only quantities for one step."""

    keybody_pos: np.ndarray
    keybody_vel: np.ndarray
    assist_force: np.ndarray
    assist_torque: np.ndarray
    beta: float
    tracking: np.ndarray
    phase: float
    base_contact: np.ndarray = field(default_factory=lambda: np.zeros(3))
    keybody_contact: np.ndarray | None = None


def build_critic_obs(actor_obs, state, priv):
    """Actor vector followed by the privileged block.

    Contact forces are zero in the contact-free plant; the slots exist so a
    contact-capable backend can fill them.
    """
    R = quat_to_matrix(state.base_quat)
    n_kb = len(priv.keybody_pos)
    f_kb = np.zeros(3 * n_kb) if priv.keybody_contact is None else np.ravel(priv.keybody_contact)
    return np.concatenate((actor_obs, R.T @ state.base_linvel, [state.base_pos[2]], priv.base_contact,
                           f_kb, np.ravel(priv.keybody_pos), np.ravel(priv.keybody_vel),
                           priv.assist_force, priv.assist_torque, [priv.beta], priv.tracking,
                           [priv.phase]))


@dataclass(frozen=True)
class RewardWeights:
    """Reward weights; ``sigma`` entries 5 to 7 are multiplied by sqrt(n_j) or sqrt(n_kb)."""

    tracking: tuple = (1.0,) * 7
    sigma: tuple = (0.4, 0.5, 1.5, 0.6, 0.3, 0.2, 0.4)
    kappa: float = 0.25
    action_smoothness: float = 0.15
    joint_acceleration: float = 1e-5
    position_limit: float = 1.0
    torque_limit: float = 0.1
    survival: float = 1.0
    scale_by_dt: bool = True
    control_dt: float = 0.02

    def __post_init__(self):
        if len(self.tracking) != 7 or len(self.sigma) != 7:
            raise ValueError("need 7 tracking weights and 7 sigmas")
        if min(self.sigma) <= 0 or self.kappa <= 0:
            raise ValueError("sigma and kappa must be positive")
        if min(self.tracking) < 0 or min(self.action_smoothness, self.joint_acceleration,
                                         self.position_limit, self.torque_limit, self.survival) < 0:
            raise ValueError("reward weights must be nonnegative")
        if self.control_dt <= 0:
            raise ValueError("control dt must be positive")

    @property
    def dt_scale(self):
        return self.control_dt if self.scale_by_dt else 1.0

    def sigmas(self, n_j, n_kb):
        s = np.array(self.sigma, dtype=float)
        s[4] *= math.sqrt(n_j)
        s[5] *= math.sqrt(n_kb)
        s[6] *= math.sqrt(n_kb)
        return s


def tracking_errors(state, ref, keybodies):
    """The 7 error vectors; ``keybodies`` is the plant's (positions, quaternions) relative to its base."""
    kb_pos, kb_quat = keybodies
    return [
        state.base_pos - ref.base_pos,
        boxminus(state.base_quat, ref.base_quat),
        state.base_angvel - ref.base_angvel,
        state.base_linvel - ref.base_linvel,
        state.q - ref.q,
        np.ravel(kb_pos - ref.keybody_pos),
        np.concatenate([boxminus(a, b) for a, b in zip(kb_quat, ref.keybody_quat)]),
    ]


def kernel(err, sigma, kappa):
    return math.exp(-kappa * float(err @ err) / (sigma * sigma))


def tracking_reward(state, ref, weights, keybodies):
    """Per-term weighted tracking rewards (7-vector) and their sum."""
    sig = weights.sigmas(len(state.q), len(keybodies[0]))
    errs = tracking_errors(state, ref, keybodies)
    terms = np.array([c * weights.dt_scale * kernel(e, s, weights.kappa)
                      for c, e, s in zip(weights.tracking, errs, sig)])
    return terms, float(terms.sum())


def step_similarity(state, ref, weights):
    """Unweighted joint-position kernel ``s_k`` in [0, 1]."""
    sig = weights.sigma[4] * math.sqrt(len(state.q))
    return kernel(state.q - ref.q, sig, weights.kappa)


def limit_violation(x, lo, hi):
    return np.maximum(0.0, lo - x) + np.maximum(0.0, x - hi)


def regularization_penalty(action, prev_action, qdd, q, tau, limits, weights, torque_violation=None):
    """Nonpositive regularization reward.

    ``limits`` is ``(q_min, q_max, tau_min, tau_max)``. ``torque_violation``
    overrides the per-joint box violation of ``tau`` (used for joints whose
    feasible set is a polygon rather than a box).
    """
    q_min, q_max, t_min, t_max = limits
    if torque_violation is None:
        torque_violation = limit_violation(np.asarray(tau, float), t_min, t_max)
    pen = (weights.action_smoothness * np.linalg.norm(np.asarray(action) - np.asarray(prev_action))
           + weights.joint_acceleration * np.linalg.norm(qdd)
           + weights.position_limit * float(np.sum(limit_violation(np.asarray(q, float), q_min, q_max)))
           + weights.torque_limit * float(np.sum(torque_violation)))
    return -weights.dt_scale * pen


def survival_reward(weights):
    return weights.survival * weights.dt_scale


class Status(str, Enum):
    RUNNING = "running"
    FAILED = "failed"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class Termination:
    status: Status
    reason: str = ""

    @property
    def done(self):
        return self.status is not Status.RUNNING


@dataclass(frozen=True)
class TerminationThresholds:
    """``f_max`` is unused without a contact backend."""

    d_max: float = 0.5
    theta_max: float = 0.8
    f_max: float | None = None

    def __post_init__(self):
        if self.d_max <= 0 or self.theta_max <= 0:
            raise ValueError("termination thresholds must be positive")


def check_termination(state, ref, thresholds, step=0, timeout_step=None, contact_force=None):
    """Failure on numerical blow-up or deviation, timeout once ``step`` reaches ``timeout_step``."""
    if not state.is_finite():
        return Termination(Status.FAILED, "numerical")
    if np.linalg.norm(state.base_pos - ref.base_pos) > thresholds.d_max:
        return Termination(Status.FAILED, "position")
    if np.linalg.norm(boxminus(state.base_quat, ref.base_quat)) > thresholds.theta_max:
        return Termination(Status.FAILED, "orientation")
    if thresholds.f_max is not None and contact_force is not None \
            and np.max(np.linalg.norm(np.atleast_2d(contact_force), axis=1)) > thresholds.f_max:
        return Termination(Status.FAILED, "contact")
    if timeout_step is not None and step >= timeout_step:
        return Termination(Status.TIMEOUT)
    return Termination(Status.RUNNING)


@dataclass(frozen=True)
class DomainRandomization:
    static_friction: tuple = (0.6, 1.0)
    dynamic_friction: tuple = (0.5, 0.9)
    restitution: tuple = (0.0, 0.2)
    mass_scale: tuple = (0.9, 1.1)
    push_interval: tuple = (0.0, 10.0)
    push_speed: float = 0.5

    def __post_init__(self):
        for name in ("static_friction", "dynamic_friction", "restitution", "mass_scale", "push_interval"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: need 0 <= low <= high")
        if self.push_speed < 0:
            raise ValueError("push speed must be nonnegative")


@dataclass
class DomainSample:
    static_friction: float
    dynamic_friction: float
    restitution: float
    mass_scale: np.ndarray
    push_times: np.ndarray
    push_velocities: np.ndarray

    def pushes_between(self, t0, t1):
        """Summed velocity kicks with ``t0 < t <= t1``."""
        sel = (self.push_times > t0) & (self.push_times <= t1)
        return self.push_velocities[sel].sum(axis=0) if sel.any() else np.zeros(3)


def randomize_domain(cfg, n_bodies, horizon, rng):
    """One draw of the randomized parameters and a push schedule over ``horizon`` seconds.

    Push times accumulate intervals drawn from ``cfg.push_interval``; each push
    changes the base velocity by ``push_speed`` in a uniformly random
    horizontal direction. Friction and restitution are drawn for a contact
    backend and have no effect on the contact-free plant.
    """
    sf = rng.uniform(*cfg.static_friction)
    df = rng.uniform(*cfg.dynamic_friction)
    rest = rng.uniform(*cfg.restitution)
    scale = rng.uniform(*cfg.mass_scale, n_bodies)
    times, kicks = [], []
    t = 0.0
    while True:
        t += rng.uniform(*cfg.push_interval)
        if t > horizon or cfg.push_interval[1] <= 0:
            break
        ang = rng.uniform(0.0, 2 * np.pi)
        times.append(t)
        kicks.append((cfg.push_speed * np.cos(ang), cfg.push_speed * np.sin(ang), 0.0))
    return DomainSample(sf, df, rest, scale, np.array(times), np.array(kicks).reshape(-1, 3))
