"""Experiment configuration: one JSON document with a block per module.

Every block is a frozen dataclass. Loading is strict: unknown keys, wrong
types and out-of-range values raise ``ConfigError``. ``to_dict`` and
``from_dict`` round-trip exactly.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .pla.mechanisms import MECHANISMS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlaConfig:
    mechanisms: tuple = tuple(MECHANISMS)
    frequency_hz: float = 5.0
    amplitude_fraction: float = 0.5
    duration: float = 2.0
    dt: float = 0.004
    omega_n: float = 40.0
    polytope_mechanism: str = "pushrod_ankle"
    polytope_points: int = 21

    def validate(self):
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ConfigError(f"pla: unknown mechanism {m!r}")
        if not self.mechanisms:
            raise ConfigError("pla.mechanisms must not be empty")
        if self.polytope_mechanism not in MECHANISMS and not self.polytope_mechanism.endswith(".json"):
            raise ConfigError(f"pla.polytope_mechanism: {self.polytope_mechanism!r} is neither a shipped "
                              "mechanism nor a linkage JSON file")
        _positive("pla", frequency_hz=self.frequency_hz, duration=self.duration, dt=self.dt,
                  omega_n=self.omega_n)
        if not 0 < self.amplitude_fraction <= 1:
            raise ConfigError("pla.amplitude_fraction must lie in (0, 1]")
        if self.polytope_points < 1:
            raise ConfigError("pla.polytope_points must be at least 1 (an empty sweep has nothing to write)")


@dataclass(frozen=True)
class SpotConfig:
    k: float = 0.005
    rotor_inertia: float = 0.01
    coulomb: float = 0.3
    smoothing: float = 50.0
    viscous: float = 0.05
    eta_plus: float = 0.9
    eta_minus: float = 0.8
    cutoff_hz: float = 100.0
    synthetic_samples: int = 2000
    synthetic_noise: float = 0.0

    def validate(self):
        try:
            self.actuator_params()
        except ValueError as exc:
            raise ConfigError(f"spot: {exc}") from exc
        if self.synthetic_samples < 2 or self.synthetic_noise < 0:
            raise ConfigError("spot: need at least 2 synthetic samples and nonnegative noise")

    def actuator_params(self):
        from .spot import ActuatorParams
        names = ActuatorParams.__dataclass_fields__
        return ActuatorParams(**{k: getattr(self, k) for k in names})


@dataclass(frozen=True)
class SamplerConfig:
    """RSI constants plus the synthetic difficulty profile of the sampler demo.

    ``library`` is ``"demo"`` (15 built-in durations) or a manifest path.
    Bins listed in ``hard_bins`` score ``hard_similarity`` on average, all
    others ``easy_similarity``; per-episode scores get Gaussian noise.
    """

    alpha: float = 0.005
    tau_base: float = 1.0
    epsilon: float = 0.15
    max_bin_width: float = 4.0
    initial_failure: float = 1.0
    library: str = "demo"
    iterations: int = 400
    episodes_per_iteration: int = 32
    hard_bins: tuple = ((1, 1),)
    hard_similarity: float = 0.2
    easy_similarity: float = 0.9
    score_noise: float = 0.05
    snapshot_every: int = 50

    def validate(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("sampler.alpha must lie in (0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("sampler.epsilon must lie in [0, 1]")
        _positive("sampler", tau_base=self.tau_base, max_bin_width=self.max_bin_width)
        if self.iterations < 1 or self.episodes_per_iteration < 1 or self.snapshot_every < 1:
            raise ConfigError("sampler: iterations, episodes_per_iteration and snapshot_every must be >= 1")
        for s in (self.hard_similarity, self.easy_similarity):
            if not 0 <= s <= 1:
                raise ConfigError("sampler: similarities must lie in [0, 1]")
        if self.score_noise < 0:
            raise ConfigError("sampler.score_noise must be nonnegative")
        for hb in self.hard_bins:
            if len(hb) != 2 or min(hb) < 0:
                raise ConfigError("sampler.hard_bins entries are [trajectory, bin] pairs")


@dataclass(frozen=True)
class CurriculumConfig:
    eta: float = 0.80
    beta_max: float = 0.60
    kp_v: float = 0.0
    kd_v: float = 10.0
    kp_w: float = 200.0
    kd_w: float = 10.0

    def validate(self):
        if not 0 < self.eta <= 1 or not 0 <= self.beta_max < 1:
            raise ConfigError("curriculum: need 0 < eta <= 1 and 0 <= beta_max < 1")
        if min(self.kp_v, self.kd_v, self.kp_w, self.kd_w) < 0:
            raise ConfigError("curriculum: gains must be nonnegative")


@dataclass(frozen=True)
class EnvSectionConfig:
    sim_dt: float = 0.004
    decimation: int = 5
    episode_length: float = 10.0
    omega_n: float = 30.0
    dwell: float = 0.5
    d_max: float = 0.5
    theta_max: float = 0.8
    randomize: bool = False
    observation_noise: bool = True
    assist: bool = True
    noise_angular_velocity: float = 0.10
    noise_gravity: float = 0.015
    noise_joint_position: float = 0.005
    noise_joint_velocity: float = 0.25
    static_friction: tuple = (0.6, 1.0)
    dynamic_friction: tuple = (0.5, 0.9)
    restitution: tuple = (0.0, 0.2)
    mass_scale: tuple = (0.9, 1.1)
    push_interval: tuple = (0.0, 10.0)
    push_speed: float = 0.5
    tracking_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    tracking_sigma: tuple = (0.4, 0.5, 1.5, 0.6, 0.3, 0.2, 0.4)
    kappa: float = 0.25
    action_smoothness: float = 0.15
    joint_acceleration: float = 1e-5
    position_limit: float = 1.0
    torque_limit: float = 0.1
    survival: float = 1.0
    scale_by_dt: bool = True
    attach_pla: bool = True

    def validate(self):
        try:
            self.env_config()
            self.reward_weights()
        except ValueError as exc:
            raise ConfigError(f"env: {exc}") from exc

    def env_config(self):
        from .env.episode import EnvConfig
        from .env.mdp import DomainRandomization, ObservationNoise, TerminationThresholds
        return EnvConfig(
            sim_dt=self.sim_dt, decimation=self.decimation, episode_length=self.episode_length,
            omega_n=self.omega_n, dwell=self.dwell, randomize=self.randomize,
            observation_noise=self.observation_noise, assist=self.assist,
            thresholds=TerminationThresholds(self.d_max, self.theta_max),
            noise=ObservationNoise(self.noise_angular_velocity, self.noise_gravity,
                                   self.noise_joint_position, self.noise_joint_velocity),
            domain=DomainRandomization(self.static_friction, self.dynamic_friction, self.restitution,
                                       self.mass_scale, self.push_interval, self.push_speed))

    def reward_weights(self):
        from .env.mdp import RewardWeights
        return RewardWeights(self.tracking_weights, self.tracking_sigma, self.kappa, self.action_smoothness,
                             self.joint_acceleration, self.position_limit, self.torque_limit, self.survival,
                             self.scale_by_dt, self.sim_dt * self.decimation)


@dataclass(frozen=True)
class RolloutConfig:
    """``references`` are JSON paths; when empty, ``generated_durations`` references are made in memory."""

    policy: str = "zero-residual"
    episodes: int = 6
    references: tuple = ()
    generated_durations: tuple = (4.0, 6.0, 8.0)
    noise_sigma: float = 0.5
    corrector_gain: float = 0.5
    adversarial_magnitude: float = 50.0

    def validate(self):
        from .env.episode import POLICIES
        if self.policy not in POLICIES:
            raise ConfigError(f"rollout.policy must be one of {POLICIES}")
        if self.episodes < 0:
            raise ConfigError("rollout.episodes must be nonnegative")
        if not self.references and not self.generated_durations:
            raise ConfigError("rollout needs reference files or generated durations")
        if any(d <= 0 for d in self.generated_durations):
            raise ConfigError("rollout.generated_durations must be positive")


@dataclass(frozen=True)
class ReferenceConfig:
    duration: float = 6.0
    omega_n: float = 30.0
    base_height: float = 1.0
    amplitude: tuple = (0.3, 0.7)
    frequency: tuple = (0.2, 0.6)
    name: str = "generated"

    def validate(self):
        _positive("reference", duration=self.duration, omega_n=self.omega_n)
        for key in ("amplitude", "frequency"):
            lo, hi = getattr(self, key)
            if not 0 <= lo <= hi:
                raise ConfigError(f"reference.{key} must be an ordered nonnegative range")


@dataclass(frozen=True)
class PpoConfig:
    """Training constants kept as data; no learner is shipped."""

    actor_hidden: tuple = (512, 256, 128)
    critic_hidden: tuple = (512, 512, 256)
    activation: str = "elu"
    empirical_normalization: bool = True
    learning_rate: float = 1e-3
    schedule: str = "adaptive"
    gamma: float = 0.99
    lam: float = 0.95
    desired_kl: float = 0.01
    clip_range: float = 0.2
    entropy_coef: float = 0.001
    value_loss_coef: float = 0.5
    epochs: int = 5
    num_envs: int = 4096
    steps_per_env: int = 24
    mini_batch_steps: int = 6

    def validate(self):
        if self.num_envs < 1 or self.steps_per_env < 1 or self.mini_batch_steps < 1 or self.epochs < 1:
            raise ConfigError("ppo: counts must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "out"
    streams: int = 1
    pla: PlaConfig = field(default_factory=PlaConfig)
    spot: SpotConfig = field(default_factory=SpotConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    env: EnvSectionConfig = field(default_factory=EnvSectionConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.streams < 1:
            raise ConfigError("streams must be at least 1")
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v.validate()
        return self

    def to_dict(self):
        return _to_plain(self)

    @classmethod
    def from_dict(cls, doc):
        return _build(cls, doc, "").validate()

    def replace(self, **kw):
        return dataclasses.replace(self, **kw).validate()


def _positive(block, **values):
    for k, v in values.items():
        if not v > 0:
            raise ConfigError(f"{block}.{k} must be positive")


def _to_plain(v):
    if dataclasses.is_dataclass(v):
        return {f.name: _to_plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, tuple):
        return [_to_plain(x) for x in v]
    return v


def _tupled(v):
    return tuple(_tupled(x) for x in v) if isinstance(v, list) else v


def _coerce(kind, value, where):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if kind is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return _tupled(value)
    raise ConfigError(f"{where}: unsupported type")


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {sorted(unknown)}")
    kw = {}
    for name, value in doc.items():
        kind = hints[name]
        path = f"{where}.{name}" if where else name
        kw[name] = _build(kind, value, path) if dataclasses.is_dataclass(kind) else _coerce(kind, value, path)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def load_config(path=None):
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
