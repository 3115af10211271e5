"""Episode runner, scripted policies and parallel episode streams."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import rbd
from ..curriculum import CurriculumParams, assistance_scale, assistive_wrench
from ..rsi import build_bins, episode_similarity, max_episode_steps, sample_start, sampling_distribution, \
    update_failure, update_failures, TrajectoryMeta
from .control import apply_action, limit_torque, pd_gains, pd_request
from .mdp import (DomainRandomization, ObservationNoise, Privileged, RewardWeights, Status,
                  TerminationThresholds, Termination, actor_layout, build_actor_obs, build_critic_obs,
                  check_termination, randomize_domain, regularization_penalty, step_similarity,
                  survival_reward, tracking_reward, TRACKING_TERMS)
from .plant import keybody_poses, keybody_velocities


@dataclass(frozen=True)
class EnvConfig:
    sim_dt: float = 0.004
    decimation: int = 5
    episode_length: float = 10.0
    omega_n: float = 30.0
    dwell: float = 0.5
    randomize: bool = False
    observation_noise: bool = True
    assist: bool = True
    thresholds: TerminationThresholds = TerminationThresholds()
    noise: ObservationNoise = ObservationNoise()
    domain: DomainRandomization = DomainRandomization()

    def __post_init__(self):
        if self.sim_dt <= 0 or self.decimation < 1 or self.episode_length <= 0:
            raise ValueError("need sim_dt > 0, decimation >= 1 and a positive episode length")
        if self.omega_n <= 0 or self.dwell < 0:
            raise ValueError("need omega_n > 0 and dwell >= 0")

    @property
    def control_dt(self):
        return self.sim_dt * self.decimation

    @property
    def episode_steps(self):
        return int(round(self.episode_length / self.control_dt))

    @property
    def dwell_steps(self):
        return int(round(self.dwell / self.control_dt))


@dataclass
class Env:
    """A plant, its reference library and the MDP constants."""

    plant: object
    references: list
    config: EnvConfig = EnvConfig()
    weights: RewardWeights = None
    curriculum: CurriculumParams = None

    def __post_init__(self):
        if not self.references:
            raise ValueError("the environment needs at least one reference")
        for k, ref in enumerate(self.references):
            if abs(ref.dt - self.config.control_dt) > 1e-12:
                raise ValueError(f"reference {k}: dt {ref.dt} differs from control dt {self.config.control_dt}")
            if ref.n_j != self.plant.n_j or ref.n_kb != self.plant.n_kb:
                raise ValueError(f"reference {k} does not match the plant's joints/keybodies")
        if self.weights is None:
            self.weights = RewardWeights(control_dt=self.config.control_dt)
        if self.curriculum is None:
            self.curriculum = CurriculumParams(
                mass=self.plant.chain.total_mass,
                inertia=tuple(map(tuple, self.plant.base_inertia)),
                r_com=tuple(self.plant.com_offset()),
                gravity=self.plant.chain.gravity)

    @property
    def n_a(self):
        return self.plant.n_j

    def metas(self):
        return [TrajectoryMeta(k, r.duration, r.length, r.name) for k, r in enumerate(self.references)]

    def bins(self, **kw):
        return build_bins(self.metas(), **kw)

    def gains(self):
        return pd_gains(self.plant.armature, self.config.omega_n)


EPISODE_LOG_COLUMNS = ("step", "t", "frame", *(f"r_{n}" for n in TRACKING_TERMS), "r_track", "r_reg",
                       "r_survival", "reward", "s_k", "beta", "status")
EPISODE_SUMMARY_COLUMNS = ("episode", "stream", "trajectory", "bin", "t_init", "start_frame", "beta",
                           "l_max", "l_real", "status", "reason", "s_bar", "return")


@dataclass
class EpisodeLog:
    trajectory: int
    bin: int
    t_init: float
    start_frame: int
    beta: float
    l_max: int
    timeout_step: int
    rows: list = field(default_factory=list)
    termination: Termination = None
    s_bar: float = float("nan")
    episode: int = 0
    stream: int = 0

    @property
    def l_real(self):
        return len(self.rows)

    @property
    def total_return(self):
        return math.fsum(r["reward"] for r in self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def summary(self):
        return {"episode": self.episode, "stream": self.stream, "trajectory": self.trajectory,
                "bin": self.bin, "t_init": self.t_init, "start_frame": self.start_frame,
                "beta": self.beta, "l_max": self.l_max, "l_real": self.l_real,
                "status": self.termination.status.value, "reason": self.termination.reason,
                "s_bar": self.s_bar, "return": self.total_return}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EPISODE_LOG_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in EPISODE_LOG_COLUMNS])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


# Scripted policies: callables obs -> action.

class ZeroResidual:
    """Always replays the reference command."""

    def __init__(self, n_a):
        self.n_a = n_a

    def __call__(self, obs):
        return np.zeros(self.n_a)


class NoisyExpert:
    """Zero residual plus Gaussian action noise."""

    def __init__(self, n_a, sigma, rng):
        self.n_a, self.sigma, self.rng = n_a, sigma, rng

    def __call__(self, obs):
        return self.rng.normal(0.0, self.sigma, self.n_a)


class ProportionalCorrector:
    """Residual ``gain * (q_ref - q) / scale`` read from the observation slots."""

    def __init__(self, n_j, action_scale, gain=0.5):
        self.slots, _ = actor_layout(n_j, n_j)
        self.scale = np.asarray(action_scale, dtype=float)
        self.gain = gain

    def __call__(self, obs):
        return self.gain * (obs[self.slots["q_ref"]] - obs[self.slots["q"]]) / self.scale


class Adversarial:
    """Constant maximal action with alternating joint signs."""

    def __init__(self, n_a, magnitude=50.0):
        self.action = magnitude * np.where(np.arange(n_a) % 2 == 0, 1.0, -1.0)

    def __call__(self, obs):
        return self.action.copy()


POLICIES = ("zero-residual", "noisy-expert", "proportional-corrector", "adversarial")


def make_policy(name, env, rng=None, **kw):
    n = env.plant.n_j
    if name == "zero-residual":
        return ZeroResidual(n)
    if name == "noisy-expert":
        return NoisyExpert(n, kw.get("sigma", 0.5), rng if rng is not None else np.random.default_rng(0))
    if name == "proportional-corrector":
        return ProportionalCorrector(n, env.plant.action_scale, kw.get("gain", 0.5))
    if name == "adversarial":
        return Adversarial(n, kw.get("magnitude", 50.0))
    raise ValueError(f"unknown policy {name!r}; choose from {POLICIES}")


def run_episode(env, policy, table, rng, *, update=True, start=None, critic=False):
    """One episode from an RSI start drawn from ``table``.

    The assistance scale is read from the start bin's failure level at
    reset. Observation noise and the domain draw use ``rng``. With
    ``update`` the episode similarity is folded into ``table`` on
    completion; parallel streams pass ``update=False`` and batch instead.
    """
    cfg = env.config
    start = sample_start(table, rng) if start is None else start
    ref_traj = env.references[start.trajectory]
    j0 = min(int(math.floor(start.t_init / cfg.control_dt + 1e-9)), ref_traj.length - 1)
    l_max = max_episode_steps(cfg.episode_steps, ref_traj.length, j0)
    timeout = min(cfg.episode_steps, ref_traj.length - j0 + cfg.dwell_steps)
    beta = assistance_scale(table.f[start.trajectory, start.bin], env.curriculum) if cfg.assist else 0.0

    plant = env.plant.fork()
    domain = None
    if cfg.randomize:
        domain = randomize_domain(cfg.domain, plant.chain.n_bodies, cfg.episode_length, rng)
        plant = plant.with_masses(domain.mass_scale)
    chain = plant.chain
    kp, kd = pd_gains(plant.armature, cfg.omega_n)
    limits = plant.limits
    weights = env.weights
    noise_rng = rng if cfg.observation_noise else None

    state = ref_traj.robot_state(j0)
    log = EpisodeLog(start.trajectory, start.bin, start.t_init, j0, beta, l_max, timeout)
    wrench = np.zeros((chain.n_bodies, 6))
    assist = None
    scores = []
    t = 0.0
    for k in range(timeout):
        ref = ref_traj.state(j0 + k + 1)
        obs = build_actor_obs(state, ref, noise_rng, cfg.noise)
        action = np.asarray(policy(obs), dtype=float)
        q_cmd = apply_action(ref.q, action, plant.action_scale)
        qd_before = state.qd.copy()
        excess = np.zeros(plant.n_j)
        status = None
        for _ in range(cfg.decimation):
            tau_req = pd_request(q_cmd, state.q, state.qd, kp, kd)
            tau = limit_torque(tau_req, limits, plant.polytopes(state.q))
            excess += np.abs(tau_req - tau)
            assist = assistive_wrench(state, ref, env.curriculum, beta)
            wrench[0] = assist.as_spatial()
            try:
                with np.errstate(over="raise", invalid="raise", divide="raise"):
                    qdd = rbd.state_acceleration(chain, state, tau, wrench if beta > 0 else None)
                    state = rbd.integrate(state, qdd, cfg.sim_dt)
            except (FloatingPointError, rbd.DynamicsError, np.linalg.LinAlgError):
                status = Termination(Status.FAILED, "numerical")
                break
        t_new = t + cfg.control_dt
        if status is None and domain is not None:
            state.base_linvel = state.base_linvel + domain.pushes_between(t, t_new)
        t = t_new
        if status is None:
            kb = keybody_poses(plant, state)
            terms, r_track = tracking_reward(state, ref, weights, kb)
            qdd_j = (state.qd - qd_before) / cfg.control_dt
            r_reg = regularization_penalty(action, state.prev_action, qdd_j, state.q, tau, limits, weights,
                                           torque_violation=excess / cfg.decimation)
            s_k = step_similarity(state, ref, weights)
            status = check_termination(state, ref, cfg.thresholds, k + 1, timeout)
        else:
            terms, r_track, r_reg, s_k = np.zeros(7), 0.0, 0.0, 0.0
        r_surv = survival_reward(weights)
        row = {"step": k, "t": t, "frame": min(j0 + k + 1, ref_traj.length), "r_track": r_track,
               "r_reg": r_reg, "r_survival": r_surv, "reward": r_track + r_reg + r_surv, "s_k": s_k,
               "beta": beta, "status": status.status.value if not status.reason
               else f"{status.status.value}:{status.reason}"}
        for name, v in zip(TRACKING_TERMS, terms):
            row[f"r_{name}"] = v
        if critic:
            ok = status.reason != "numerical"
            zeros = np.zeros((plant.n_kb, 3))
            priv = Privileged(kb[0] if ok else zeros, keybody_velocities(plant, state) if ok else zeros,
                              assist.force, assist.moment, beta, terms,
                              row["frame"] * ref_traj.dt / ref_traj.duration)
            row["critic_obs"] = build_critic_obs(obs, state, priv)
            row["actor_obs"] = obs
        log.rows.append(row)
        scores.append(s_k)
        state.prev_action = action
        if status.done:
            break
    log.termination = status
    l_real = min(log.l_real, l_max)
    log.s_bar = episode_similarity(scores[:l_real], l_max)
    if update:
        update_failure(table, start.trajectory, start.bin, log.s_bar)
    return log


def run_streams(env, policy_name, table, episodes, streams=1, seed=0, policy_kwargs=None):
    """Run ``episodes`` episodes over ``streams`` parallel streams.

    Stream ``s`` owns ``default_rng(seed + s)``. Episodes run in rounds of
    one episode per stream against a frozen copy of the table; after each
    round joins, the results are folded into ``table`` in one batch, so the
    outcome does not depend on thread scheduling.
    """
    if streams < 1 or episodes < 0:
        raise ValueError("need at least one stream and a nonnegative episode count")
    policy_kwargs = policy_kwargs or {}
    rngs = [np.random.default_rng(seed + s) for s in range(streams)]
    policies = [make_policy(policy_name, env, np.random.default_rng([seed, s, 1]), **policy_kwargs)
                for s in range(streams)]
    logs = []
    n_done = 0
    with ThreadPoolExecutor(max_workers=streams) as pool:
        while n_done < episodes:
            batch = min(streams, episodes - n_done)
            frozen = table.copy()
            p = sampling_distribution(frozen)
            futures = []
            for s in range(batch):
                start = sample_start(frozen, rngs[s], p)
                futures.append(pool.submit(run_episode, env, policies[s], frozen, rngs[s],
                                           update=False, start=start))
            round_logs = [f.result() for f in futures]
            for s, lg in enumerate(round_logs):
                lg.episode, lg.stream = n_done + s, s
            update_failures(table, [(lg.trajectory, lg.bin, lg.s_bar) for lg in round_logs])
            logs.extend(round_logs)
            n_done += batch
    return logs


def similarity_summary(logs):
    s = np.array([lg.s_bar for lg in logs])
    if s.size == 0:
        return {"episodes": 0}
    return {"episodes": int(s.size), "mean": float(s.mean()), "min": float(s.min()),
            "p10": float(np.percentile(s, 10)), "max": float(s.max()),
            "failed": int(sum(lg.termination.status is Status.FAILED for lg in logs))}


def write_summary_csv(logs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_SUMMARY_COLUMNS)
        for lg in logs:
            d = lg.summary()
            w.writerow([_fmt(d[c]) for c in EPISODE_SUMMARY_COLUMNS])
