"""Reference trajectories: JSON storage, per-frame target states and generation.

A reference holds frames at the control rate. Base velocities are world
frame; keybody poses are relative to the base and expressed in the base
frame. Reference accelerations are central differences of the stored
velocities, clamped componentwise to ``ACCEL_CLAMP``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import rbd
from ..rotations import IDENTITY, gravity_in_frame, quat_normalize, quat_to_matrix
from .control import limit_torque, pd_gains, pd_request
from .plant import keybody_poses

ACCEL_CLAMP = 50.0
FRAME_KEYS = ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "keybodies")


@dataclass
class RefState:
    """Target state for one control step."""

    base_pos: np.ndarray
    base_quat: np.ndarray
    base_linvel: np.ndarray
    base_angvel: np.ndarray
    base_linacc: np.ndarray
    base_angacc: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    keybody_pos: np.ndarray
    keybody_quat: np.ndarray

    @property
    def height(self):
        return float(self.base_pos[2])

    @property
    def linvel_base(self):
        return quat_to_matrix(self.base_quat).T @ self.base_linvel

    @property
    def angvel_base(self):
        return quat_to_matrix(self.base_quat).T @ self.base_angvel

    @property
    def gravity_base(self):
        return gravity_in_frame(self.base_quat)


def _central(x, dt):
    d = np.empty_like(x)
    if len(x) == 1:
        d[:] = 0.0
        return d
    d[1:-1] = (x[2:] - x[:-2]) / (2 * dt)
    d[0] = (x[1] - x[0]) / dt
    d[-1] = (x[-1] - x[-2]) / dt
    return d


@dataclass
class ReferenceTrajectory:
    dt: float
    base_pos: np.ndarray
    base_quat: np.ndarray
    base_linvel: np.ndarray
    base_angvel: np.ndarray
    q: np.ndarray
    keybodies: np.ndarray
    qd: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("reference dt must be positive")
        T = len(self.base_pos)
        if T < 2:
            raise ValueError("a reference needs at least two frames")
        shapes = {"base_pos": 3, "base_quat": 4, "base_linvel": 3, "base_angvel": 3}
        for key, width in shapes.items():
            arr = np.asarray(getattr(self, key), dtype=float)
            if arr.shape != (T, width):
                raise ValueError(f"{key} must have shape ({T}, {width})")
            setattr(self, key, arr)
        self.q = np.asarray(self.q, dtype=float)
        self.keybodies = np.asarray(self.keybodies, dtype=float)
        if self.q.ndim != 2 or len(self.q) != T:
            raise ValueError("q must be (frames, n_j)")
        if self.keybodies.ndim != 3 or self.keybodies.shape[0] != T or self.keybodies.shape[2] != 7:
            raise ValueError("keybodies must be (frames, n_kb, 7)")
        if self.qd is not None:
            self.qd = np.asarray(self.qd, dtype=float)
            if self.qd.shape != self.q.shape:
                raise ValueError("qd must match q")
        if not np.all(np.isfinite(self.base_pos)) or not np.all(np.isfinite(self.q)):
            raise ValueError("reference contains non-finite values")
        self._linacc = np.clip(_central(self.base_linvel, self.dt), -ACCEL_CLAMP, ACCEL_CLAMP)
        self._angacc = np.clip(_central(self.base_angvel, self.dt), -ACCEL_CLAMP, ACCEL_CLAMP)
        self._qd = self.qd if self.qd is not None else _central(self.q, self.dt)

    @property
    def n_frames(self):
        return len(self.base_pos)

    @property
    def length(self):
        """Control steps from the first to the last frame."""
        return self.n_frames - 1

    @property
    def duration(self):
        return self.length * self.dt

    @property
    def n_j(self):
        return self.q.shape[1]

    @property
    def n_kb(self):
        return self.keybodies.shape[1]

    def state(self, j):
        """Target at frame ``j``; indices past the end hold the final frame."""
        j = min(max(int(j), 0), self.n_frames - 1)
        kb = self.keybodies[j]
        return RefState(self.base_pos[j].copy(), quat_normalize(self.base_quat[j]),
                        self.base_linvel[j].copy(), self.base_angvel[j].copy(),
                        self._linacc[j].copy(), self._angacc[j].copy(),
                        self.q[j].copy(), self._qd[j].copy(), kb[:, :3].copy(), kb[:, 3:].copy())

    def robot_state(self, j):
        """Plant state that starts exactly on frame ``j``."""
        r = self.state(j)
        return rbd.RobotState(r.q, r.qd, r.base_pos, r.base_quat, r.base_linvel, r.base_angvel)

    def to_dict(self):
        frames = []
        for j in range(self.n_frames):
            fr = {
                "base_pos": self.base_pos[j].tolist(),
                "base_quat": self.base_quat[j].tolist(),
                "base_linvel": self.base_linvel[j].tolist(),
                "base_angvel": self.base_angvel[j].tolist(),
                "q": self.q[j].tolist(),
                "keybodies": [{"pos": kb[:3].tolist(), "quat": kb[3:].tolist()} for kb in self.keybodies[j]],
            }
            if self.qd is not None:
                fr["qd"] = self.qd[j].tolist()
            frames.append(fr)
        doc = {"dt": self.dt, "frames": frames}
        if self.name:
            doc["name"] = self.name
        return doc

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"dt", "frames", "name"}
        if unknown:
            raise ValueError(f"unknown reference keys {sorted(unknown)}")
        frames = doc["frames"]
        if not frames:
            raise ValueError("reference has no frames")
        has_qd = "qd" in frames[0]
        for k, fr in enumerate(frames):
            missing = set(FRAME_KEYS) - set(fr)
            if missing:
                raise ValueError(f"frame {k} is missing {sorted(missing)}")
            if ("qd" in fr) != has_qd:
                raise ValueError("qd must be given for every frame or none")

        def col(key):
            return np.array([fr[key] for fr in frames], dtype=float)

        kb = np.array([[kb["pos"] + kb["quat"] for kb in fr["keybodies"]] for fr in frames], dtype=float)
        return cls(float(doc["dt"]), col("base_pos"), col("base_quat"), col("base_linvel"),
                   col("base_angvel"), col("q"), kb, col("qd") if has_qd else None, doc.get("name", ""))


def load_reference(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"reference file not found: {path}")
    return ReferenceTrajectory.from_dict(json.loads(path.read_text()))


def save_reference(ref, path):
    Path(path).write_text(json.dumps(ref.to_dict()))


@dataclass(frozen=True)
class SinusoidTargets:
    """Joint targets ``center + amp * sin(2 pi f t + phase)``."""

    center: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __call__(self, t):
        return self.center + self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)

    @classmethod
    def random(cls, plant, rng, amplitude=(0.3, 0.7), frequency=(0.2, 0.6)):
        """Random slow targets inside the joint limits (amplitudes as fractions of the half range)."""
        lo, hi = plant.limits[:2]
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        n = plant.n_j
        return cls(center, half * rng.uniform(*amplitude, n), rng.uniform(*frequency, n),
                   rng.uniform(0, 2 * np.pi, n))


def _frame(plant, state):
    pos, quat = keybody_poses(plant, state)
    return np.hstack((pos, quat))


def simulate_torques(plant, state, torques, sim_dt, decimation):
    """Replay per-substep torques from ``state``; returns the frame-rate states."""
    states = [state.copy()]
    s = state.copy()
    for k, tau in enumerate(torques):
        qdd = rbd.state_acceleration(plant.chain, s, tau)
        s = rbd.integrate(s, qdd, sim_dt)
        if (k + 1) % decimation == 0:
            states.append(s.copy())
    return states


def trajectory_from_states(plant, states, dt, name=""):
    return ReferenceTrajectory(
        dt,
        np.array([s.base_pos for s in states]),
        np.array([s.base_quat for s in states]),
        np.array([s.base_linvel for s in states]),
        np.array([s.base_angvel for s in states]),
        np.array([s.q for s in states]),
        np.array([_frame(plant, s) for s in states]),
        np.array([s.qd for s in states]),
        name,
    )


def generate_reference(plant, duration, rng, sim_dt=0.004, decimation=5, omega_n=30.0,
                       targets=None, base_height=1.0, name=""):
    """Forward-simulate the plant under PD tracking of scripted sinusoid targets.

    Returns the reference (``duration / (sim_dt * decimation)`` steps, one
    more frame) and the per-substep torques that produced it, so the
    trajectory can be replayed exactly.
    """
    dt = sim_dt * decimation
    steps = int(round(duration / dt))
    if steps < 1:
        raise ValueError("duration shorter than one control step")
    targets = SinusoidTargets.random(plant, rng) if targets is None else targets
    plant = plant.fork()
    kp, kd = pd_gains(plant.armature, omega_n)
    limits = plant.limits
    q0 = targets(0.0)
    state = rbd.RobotState(q0, np.zeros(plant.n_j), (0.0, 0.0, base_height), IDENTITY)
    start = state.copy()
    states, torques = [state.copy()], []
    for k in range(steps * decimation):
        q_cmd = targets((k // decimation + 1) * dt)
        tau = limit_torque(pd_request(q_cmd, state.q, state.qd, kp, kd), limits,
                           plant.polytopes(state.q))
        torques.append(tau)
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                qdd = rbd.state_acceleration(plant.chain, state, tau)
                state = rbd.integrate(state, qdd, sim_dt)
        except FloatingPointError as exc:
            raise FloatingPointError(f"reference generation diverged at substep {k}") from exc
        if not state.is_finite():
            raise FloatingPointError("reference generation diverged")
        if (k + 1) % decimation == 0:
            states.append(state.copy())
    return trajectory_from_states(plant, states, dt, name), start, np.array(torques)
