"""Residual actions and armature-based joint PD control."""
from __future__ import annotations

import numpy as np


def pd_gains(armature, omega_n):
    """Critically damped gains ``Kp = I wn^2``, ``Kd = 2 I wn`` per joint."""
    I = np.asarray(armature, dtype=float)
    if np.any(I < 0) or omega_n <= 0:
        raise ValueError("armature must be nonnegative and omega_n positive")
    return I * omega_n ** 2, 2.0 * I * omega_n


def apply_action(q_ref, action, scale):
    """Joint command ``q_ref + scale * action`` (``scale`` is the diagonal of Sigma)."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("action scales must be positive")
    return np.asarray(q_ref, dtype=float) + scale * np.asarray(action, dtype=float)


def pd_request(q_cmd, q, qd, kp, kd):
    """Unconstrained PD torque ``Kp (q_cmd - q) - Kd qd``."""
    return kp * (np.asarray(q_cmd, float) - np.asarray(q, float)) - kd * np.asarray(qd, float)


def limit_torque(tau, limits, polytopes=()):
    """Project a torque request into the feasible set.

    Joints covered by ``polytopes`` (``[(joint indices, TorquePolytope)]``)
    are projected onto their polygon; the rest are clamped to the box
    ``limits = (q_min, q_max, tau_min, tau_max)``.
    """
    tau = np.asarray(tau, dtype=float)
    out = np.clip(tau, limits[2], limits[3])
    for idx, poly in polytopes:
        idx = list(idx)
        out[idx] = poly.project(tau[idx])
    return out


def pd_torque(q_cmd, q, qd, kp, kd, limits, polytopes=()):
    return limit_torque(pd_request(q_cmd, q, qd, kp, kd), limits, polytopes)
