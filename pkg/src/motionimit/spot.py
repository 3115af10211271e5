"""Quadruped actuator model: magnet saturation, rotor inertia, friction and
asymmetric transmission efficiency, plus a total-power limiter and
least-squares identification of the efficiencies.

    tau_out = eta * (tau_in / (1 + k |tau_in|) - I alpha) - K_c tanh(s omega) - K_v omega

``eta`` is ``eta_plus`` while the motor does positive work and ``eta_minus``
otherwise.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

WORK_HYSTERESIS = 0.01  # rad/s


@dataclass(frozen=True)
class ActuatorParams:
    """Static actuator constants; defaults are illustrative, not a datasheet."""

    k: float = 0.005
    rotor_inertia: float = 0.01
    coulomb: float = 0.3
    smoothing: float = 50.0
    viscous: float = 0.05
    eta_plus: float = 0.9
    eta_minus: float = 0.8
    cutoff_hz: float = 100.0

    def __post_init__(self):
        if self.k < 0 or self.rotor_inertia < 0 or self.coulomb < 0 or self.viscous < 0:
            raise ValueError("k, rotor inertia and friction constants must be nonnegative")
        for eta in (self.eta_plus, self.eta_minus):
            if not 0.0 < eta <= 1.0:
                raise ValueError("efficiencies must lie in (0, 1]")
        if self.cutoff_hz <= 0:
            raise ValueError("filter cutoff must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown actuator keys: {sorted(unknown)}")
        return cls(**doc)


def saturate(tau_in, k):
    """Motor-constant derating ``tau / (1 + k |tau|)``."""
    tau_in = np.asarray(tau_in, dtype=float)
    return tau_in / (1.0 + k * np.abs(tau_in))


def friction(omega, params):
    return -params.coulomb * np.tanh(params.smoothing * omega) - params.viscous * omega


def work_sign(tau_pre, omega, previous=None, band=WORK_HYSTERESIS):
    """+1 for positive mechanical work, -1 otherwise.

    Inside ``|omega| < band`` the previous sign is kept (positive when there
    is none), so the efficiency does not chatter around zero speed.
    """
    tau_pre = np.asarray(tau_pre, dtype=float)
    omega = np.asarray(omega, dtype=float)
    sign = np.where(tau_pre * omega >= 0.0, 1.0, -1.0)
    prev = np.ones_like(sign) if previous is None else np.asarray(previous, dtype=float)
    return np.where(np.abs(omega) < band, prev, sign)


class LowPassFilter:
    """First-order low pass ``y += a (x - y)`` with ``a = dt / (dt + 1 / (2 pi f_c))``.

    The state starts at the first sample, so there is no start-up transient.
    """

    def __init__(self, cutoff_hz, dt):
        rc = 1.0 / (2.0 * np.pi * cutoff_hz)
        self.alpha = dt / (dt + rc)
        self.y = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.y is None:
            self.y = x.copy()
        else:
            self.y = self.y + self.alpha * (x - self.y)
        return self.y.copy()

    def reset(self):
        self.y = None


@dataclass
class ActuatorState:
    """Per-stream filter and work-sign memory."""

    dt: float
    cutoff_hz: float = 100.0
    sign: np.ndarray | None = None
    filter: LowPassFilter = field(init=False)

    def __post_init__(self):
        self.filter = LowPassFilter(self.cutoff_hz, self.dt)


def actuator_output(tau_in, omega, alpha, params, state=None):
    """Output torque of the full actuator model.

    Without ``state`` the raw model is evaluated. With an ``ActuatorState``
    the work sign uses hysteresis and the result is low-pass filtered.
    """
    tau_pre = saturate(tau_in, params.k) - params.rotor_inertia * np.asarray(alpha, dtype=float)
    prev = None if state is None else state.sign
    sign = work_sign(tau_pre, omega, prev)
    eta = np.where(sign > 0, params.eta_plus, params.eta_minus)
    out = eta * tau_pre + friction(np.asarray(omega, dtype=float), params)
    if state is None:
        return out
    state.sign = sign
    return state.filter(out)


@dataclass
class PowerLimitResult:
    torque: np.ndarray
    scale: float
    infeasible: bool
    power: float


def total_power(tau, omega, r, idle_loss=0.0):
    """Requested mechanical power plus resistive losses."""
    tau = np.asarray(tau, dtype=float)
    return float(np.sum(np.maximum(tau * omega, 0.0)) + np.sum(r * tau * tau) + idle_loss)


def _scale_for_budget(a, b, c, budget):
    """Largest s in [0, 1] with ``b s^2 + a s + c <= budget`` (a, b >= 0)."""
    rem = budget - c
    if rem <= 0:
        return 0.0
    if b > 0:
        # cancellation-free root of b s^2 + a s - rem
        s = 2 * rem / (a + np.sqrt(a * a + 4 * b * rem))
    elif a > 0:
        s = rem / a
    else:
        s = 1.0
    return min(max(s, 0.0), 1.0)


def power_limit(tau, omega, budget, r=0.0, idle_loss=0.0):
    """Scale torques down until the total power fits ``budget``.

    Actuators drawing mechanical power are scaled by one common factor and
    regenerating actuators are left alone. If the regenerating actuators'
    resistive losses alone exceed the budget, every torque is scaled. If the
    fixed ``idle_loss`` exceeds it, all torques are zeroed and
    ``infeasible`` is set. The factor is the root of a quadratic. If rounding
    would overshoot the budget it is nudged down a few floats, then bisected.
    """
    if budget <= 0:
        raise ValueError("power budget must be positive")
    tau = np.asarray(tau, dtype=float)
    omega = np.broadcast_to(np.asarray(omega, dtype=float), tau.shape)
    r = np.broadcast_to(np.asarray(r, dtype=float), tau.shape)
    p = total_power(tau, omega, r, idle_loss)
    if p <= budget:
        return PowerLimitResult(tau.copy(), 1.0, False, p)
    if idle_loss > budget:
        z = np.zeros_like(tau)
        return PowerLimitResult(z, 0.0, True, total_power(z, omega, r, idle_loss))
    drawing = tau * omega > 0
    fixed = float(np.sum((r * tau * tau)[~drawing])) + idle_loss
    mask = drawing if fixed <= budget else np.ones_like(drawing)
    fixed = float(np.sum((r * tau * tau)[~mask])) + idle_loss
    a = float(np.sum(np.maximum(tau * omega, 0.0)[mask]))
    b = float(np.sum((r * tau * tau)[mask]))
    s = _scale_for_budget(a, b, fixed, budget)

    def fits(s):
        out = np.where(mask, s * tau, tau)
        p = total_power(out, omega, r, idle_loss)
        return p <= budget, out, p

    for _ in range(64):
        ok, out, p = fits(s)
        if ok or s == 0.0:
            return PowerLimitResult(out, s, False, p)
        s = float(np.nextafter(s, 0.0))
    # rounding is worse than a few ulps: bisect for the largest feasible s
    lo, hi = 0.0, s
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if fits(mid)[0]:
            lo = mid
        else:
            hi = mid
    ok, out, p = fits(lo)
    return PowerLimitResult(out, lo, False, p)


@dataclass
class EfficiencyFit:
    eta_plus: float
    eta_minus: float
    residual: float
    n_plus: int
    n_minus: int


def fit_efficiency(tau_in, omega, alpha, tau_out, params):
    """Least-squares ``(eta_plus, eta_minus)`` given the other actuator constants.

    With the friction moved to the measured side the model is linear in eta
    within each work-sign class. Samples inside the hysteresis band are
    ambiguous and skipped. A class with no samples yields ``nan`` and a
    warning.
    """
    tau_in, omega, alpha, tau_out = (np.asarray(v, dtype=float) for v in (tau_in, omega, alpha, tau_out))
    x = saturate(tau_in, params.k) - params.rotor_inertia * alpha
    y = tau_out - friction(omega, params)
    if not np.any(x != 0.0):
        raise ValueError("degenerate log: loss-free torque is identically zero")
    keep = np.abs(omega) >= WORK_HYSTERESIS
    pos = keep & (x * omega >= 0)
    neg = keep & (x * omega < 0)
    etas = []
    for sel, name in ((pos, "positive"), (neg, "negative")):
        xx = float(x[sel] @ x[sel])
        if xx == 0.0:
            warnings.warn(f"no {name}-work samples; that efficiency is left unfitted", RuntimeWarning)
            etas.append(np.nan)
            continue
        etas.append(float(np.clip(x[sel] @ y[sel] / xx, 1e-6, 1.0)))
    pred = np.zeros_like(y)
    for sel, eta in ((pos, etas[0]), (neg, etas[1])):
        if np.isfinite(eta):
            pred[sel] = eta * x[sel]
    used = (pos & np.isfinite(etas[0])) | (neg & np.isfinite(etas[1]))
    resid = float(np.sqrt(np.mean((pred[used] - y[used]) ** 2))) if used.any() else np.nan
    return EfficiencyFit(etas[0], etas[1], resid, int(pos.sum()), int(neg.sum()))


LOG_COLUMNS = ("t", "tau_in", "omega", "alpha", "tau_out")


def read_log(path):
    """Columns of an actuator log CSV as a dict of arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty log")
    missing = set(LOG_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return {c: np.array([float(r[c]) for r in rows]) for c in LOG_COLUMNS}


def write_log(path, log):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in zip(*(log[c] for c in LOG_COLUMNS)):
            w.writerow([f"{v:.12e}" for v in row])


def synthetic_log(params, n=2000, dt=0.004, noise=0.0, rng=None):
    """Sinusoidal joint motion with a phase-shifted torque so both work signs occur."""
    rng = np.random.default_rng(0) if rng is None else rng
    t = np.arange(n) * dt
    w = 2 * np.pi * 1.5
    omega = 3.0 * np.cos(w * t)
    alpha = -3.0 * w * np.sin(w * t)
    tau_in = 25.0 * np.sin(w * t + 0.9) + 5.0 * np.sin(3.1 * w * t)
    tau_out = actuator_output(tau_in, omega, alpha, params)
    if noise:
        tau_out = tau_out + rng.normal(0.0, noise, n)
    return {"t": t, "tau_in": tau_in, "omega": omega, "alpha": alpha, "tau_out": tau_out}
