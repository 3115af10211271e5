"""Accuracy of the simplified linkage models against the exact projected model.

Every model is rolled out on its own under the same PD tracker following a
sinusoid in each output joint. Joint accelerations are compared step by step
with the exact rollout. Each step's error is divided by
``max(||qdd_exact||, accel_floor)`` before squaring and averaging.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .. import rbd
from .linkage import TransmissionSingularityError, WorkspaceError
from .models import MODELS, model_acceleration, nominal_armature, projected_armature

APPROXIMATIONS = MODELS[1:]


@dataclass
class Protocol:
    """Sinusoidal tracking test.

    Output joint ``j`` follows ``q_nom_j + A_j sin(2 pi f t + phase_j)`` where
    ``A_j`` is ``amplitude_fraction`` times the smaller distance from
    ``q_nom_j`` to either joint limit. Parent joints are held at zero.
    """

    frequency_hz: float = 5.0
    amplitude_fraction: float = 0.5
    duration: float = 2.0
    dt: float = 0.004
    omega_n: float = 40.0
    damping_ratio: float = 1.0
    phases: tuple = ()
    accel_floor: float = 0.1
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.frequency_hz <= 0 or self.duration <= 0 or self.dt <= 0:
            raise ValueError("frequency, duration and dt must be positive")
        if not 0.0 < self.amplitude_fraction <= 1.0:
            raise ValueError("amplitude_fraction must lie in (0, 1]")
        if self.omega_n <= 0 or self.damping_ratio <= 0:
            raise ValueError("omega_n and damping_ratio must be positive")

    @property
    def steps(self):
        return int(round(self.duration / self.dt))


@dataclass
class ModelErrors:
    model: str
    joints: tuple
    normalized_mse: np.ndarray
    diverged: bool = False
    accelerations: np.ndarray = field(default=None, repr=False)


@dataclass
class EvaluationResult:
    rows: list

    def by_model(self):
        return {r.model: r for r in self.rows}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "joint", "normalized_mse"])
            for r in self.rows:
                for j, e in zip(r.joints, r.normalized_mse):
                    w.writerow([r.model, j, "nan" if r.diverged else f"{e:.6e}"])

    def table(self):
        joints = self.rows[0].joints
        lines = ["model".ljust(20) + "".join(j.rjust(16) for j in joints)]
        for r in self.rows:
            cells = ["diverged".rjust(16)] * len(joints) if r.diverged else \
                [f"{e:16.4e}" for e in r.normalized_mse]
            lines.append(r.model.ljust(20) + "".join(cells))
        return "\n".join(lines)


def reference_trajectory(linkage, protocol):
    """Targets ``(q*, qd*)`` for every main-chain joint, one row per step."""
    lo, hi = linkage.main.joint_limits()[:2]
    o = list(linkage.output_main)
    q_nom = linkage.q_nom
    span = np.minimum(hi[o] - q_nom, q_nom - lo[o])
    if np.any(~np.isfinite(span)):
        raise ValueError("output joints need finite position limits for the protocol")
    amp = protocol.amplitude_fraction * span
    phase = np.zeros(len(o)) if not protocol.phases else np.asarray(protocol.phases, float)
    w = 2 * np.pi * protocol.frequency_hz
    t = np.arange(protocol.steps) * protocol.dt
    Q = np.zeros((len(t), linkage.main.nq))
    V = np.zeros_like(Q)
    Q[:, o] = q_nom + amp * np.sin(w * t[:, None] + phase)
    V[:, o] = amp * w * np.cos(w * t[:, None] + phase)
    return Q, V


def tracker_gains(chain, linkage, protocol):
    """Diagonal PD gains from nominal reflected armature plus link inertia."""
    inertia = np.diag(rbd.mass_matrix(chain, linkage.main_q(linkage.q_nom))).copy()
    inertia[list(linkage.output_main)] += np.diag(nominal_armature(linkage).D_bar)
    kp = inertia * protocol.omega_n**2
    kd = 2 * protocol.damping_ratio * inertia * protocol.omega_n
    return kp, kd


def rollout(name, chain, linkage, protocol, q_ref=None, qd_ref=None):
    """Simulate one model under the common tracker; returns the accelerations.

    Raises ``FloatingPointError`` when the state leaves ``divergence_limit``.
    """
    if q_ref is None:
        q_ref, qd_ref = reference_trajectory(linkage, protocol)
    kp, kd = tracker_gains(chain, linkage, protocol)
    nominal = nominal_armature(linkage)
    o = list(linkage.output_main)
    p = [k for k in range(chain.nv) if k not in o]
    q = q_ref[0].copy()
    qd = qd_ref[0].copy()
    prev = np.zeros(len(o))
    guess = None
    acc = np.zeros((protocol.steps, chain.nv))
    for k in range(protocol.steps):
        tau = kp * (q_ref[k] - q) + kd * (qd_ref[k] - qd)
        tau_main = np.zeros(chain.nv)
        tau_main[p] = tau[p]
        qdd = model_acceleration(name, chain, linkage, q, qd, tau_o=tau[o], qdd_o_prev=prev,
                                 nominal=nominal, tau_main=tau_main, guess=guess)
        acc[k] = qdd
        prev = qdd[o]
        qd = qd + protocol.dt * qdd
        q = q + protocol.dt * qd
        if not np.all(np.isfinite(q)) or np.abs(qd).max() > protocol.divergence_limit:
            raise FloatingPointError(f"{name} rollout diverged at step {k}")
    return acc


def normalized_mse(acc, acc_exact, floor):
    scale = np.maximum(np.linalg.norm(acc_exact, axis=1), floor)
    err = (acc - acc_exact) / scale[:, None]
    return np.mean(err**2, axis=0)


def evaluate_model_errors(chain, linkage, protocol=None, models=MODELS):
    """Per-model, per-output-joint normalized MSE of accelerations vs. the exact model."""
    protocol = Protocol() if protocol is None else protocol
    o = list(linkage.output_main)
    joints = tuple(linkage.main.joints[k].name or f"joint_{k}" for k in o)
    q_ref, qd_ref = reference_trajectory(linkage, protocol)
    exact = rollout("exact", chain, linkage, protocol, q_ref, qd_ref)[:, o]
    rows = []
    for name in models:
        try:
            acc = exact if name == "exact" else rollout(name, chain, linkage, protocol, q_ref, qd_ref)[:, o]
        except (FloatingPointError, WorkspaceError, TransmissionSingularityError, rbd.DynamicsError):
            rows.append(ModelErrors(name, joints, np.full(len(o), np.nan), diverged=True))
            continue
        rows.append(ModelErrors(name, joints, normalized_mse(acc, exact, protocol.accel_floor),
                                accelerations=acc))
    return EvaluationResult(rows)


@dataclass
class DominanceReport:
    """Diagonal dominance of ``M_o`` over a grid of output configurations."""

    grid: np.ndarray
    margins: np.ndarray
    ratios: np.ndarray

    @property
    def dominant(self):
        return bool(np.all(self.margins > 0))

    @property
    def worst_ratio(self):
        """Largest ``sum_j |O_ij| / D_ii`` seen on the grid."""
        return float(self.ratios.max())


def diagonal_dominance_report(linkage, points=21):
    """Sweep the output-joint box and check ``sum_j |O_ij| < D_ii`` row by row."""
    lo, hi = linkage.main.joint_limits()[:2]
    o = list(linkage.output_main)
    axes = [np.linspace(lo[k], hi[k], points) for k in o]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(o))
    margins = np.empty_like(grid)
    ratios = np.empty_like(grid)
    for n, q_o in enumerate(grid):
        M = projected_armature(linkage, q_o)
        d = np.diag(M)
        off = np.abs(M).sum(axis=1) - np.abs(d)
        margins[n] = d - off
        ratios[n] = off / d
    return DominanceReport(grid, margins, ratios)
