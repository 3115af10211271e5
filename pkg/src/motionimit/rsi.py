"""Adaptive reference-state initialization.

Each trajectory of a motion library is cut into fixed-width time bins. Every
valid bin keeps an EMA of its tracking failure, and episode start states are
drawn from a floor-smoothed softmax over those failure levels so that hard
segments are revisited more often without starving the rest.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ._kernels import floor_softmax

EMA_ALPHA = 0.005
TAU_BASE = 1.0
FLOOR_EPS = 0.15
MAX_BIN_WIDTH = 4.0
INITIAL_FAILURE = 1.0

# Durations (s) of a 15-clip motion library, used by demos and tests.
DEMO_LIBRARY = (
    ("army_crawl", 16.633333206176758),
    ("dance", 9.333240509033203),
    ("stylish_walk", 11.533218383789062),
    ("soccer_kick", 6.633267402648926),
    ("breakdance", 8.300000190734863),
    ("cartwheel", 5.9666666984558105),
    ("crouch_walk", 8.633333206176758),
    ("crawl_on_all_fours", 15.050000190734863),
    ("deep_squat", 2.991666555404663),
    ("animated_walk", 7.483333110809326),
    ("kneeling", 8.383333206176758),
    ("run", 6.474999904632568),
    ("lightsaber_routine", 9.399999618530273),
    ("cartwheel_backflip", 5.866666793823242),
    ("roll_on_all_fours", 8.800000190734863),
)


@dataclass(frozen=True)
class TrajectoryMeta:
    index: int
    duration: float
    length: int
    label: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"trajectory {self.index}: duration must be positive")
        if self.length < 1:
            raise ValueError(f"trajectory {self.index}: length must be at least one step")

    @classmethod
    def from_duration(cls, index, duration, control_dt, label=""):
        return cls(index, float(duration), int(round(duration / control_dt)), label)


def library_metas(library=DEMO_LIBRARY, control_dt=0.02):
    return [TrajectoryMeta.from_duration(i, d, control_dt, name) for i, (name, d) in enumerate(library)]


def load_manifest(path):
    """Library manifest: a JSON list of {"name", "duration_s", "length"}."""
    doc = json.loads(open(path).read())
    if not isinstance(doc, list) or not doc:
        raise ValueError(f"{path}: manifest must be a non-empty list")
    metas = []
    for i, entry in enumerate(doc):
        extra = set(entry) - {"name", "duration_s", "length"}
        if extra:
            raise ValueError(f"{path}: entry {i} has unknown keys {sorted(extra)}")
        metas.append(TrajectoryMeta(i, float(entry["duration_s"]), int(entry["length"]), entry.get("name", "")))
    return metas


def save_manifest(metas, path):
    doc = [{"name": m.label, "duration_s": m.duration, "length": m.length} for m in metas]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


@dataclass
class BinTable:
    """Failure levels over (trajectory, bin) pairs.

    ``f`` is ``-inf`` outside the valid set so a softmax gives those bins zero
    mass. ``visits`` counts completed episodes started in each bin.
    """

    delta: float
    durations: np.ndarray
    mask: np.ndarray
    f: np.ndarray
    alpha: float = EMA_ALPHA
    tau_base: float = TAU_BASE
    epsilon: float = FLOOR_EPS
    visits: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.visits is None:
            self.visits = np.zeros(self.mask.shape, dtype=np.int64)

    @property
    def n_trajectories(self):
        return self.mask.shape[0]

    @property
    def n_bins(self):
        return self.mask.shape[1]

    @property
    def omega(self):
        """Valid (i, b) pairs in row-major order."""
        return [tuple(map(int, ib)) for ib in np.argwhere(self.mask)]

    @property
    def n_valid(self):
        return int(self.mask.sum())

    @property
    def temperature(self):
        # natural log
        return self.tau_base / math.log(1.0 + self.n_valid)

    def copy(self):
        return BinTable(self.delta, self.durations.copy(), self.mask.copy(), self.f.copy(),
                        self.alpha, self.tau_base, self.epsilon, self.visits.copy())

    def bin_interval(self, i, b):
        return b * self.delta, min((b + 1) * self.delta, self.durations[i])


def default_bin_width(durations):
    return min(MAX_BIN_WIDTH, float(np.min(durations)))


def build_bins(metas, delta=None, alpha=EMA_ALPHA, tau_base=TAU_BASE, epsilon=FLOOR_EPS,
               initial_failure=INITIAL_FAILURE):
    """Bin a library with width ``delta`` (default ``min(4 s, shortest duration)``)."""
    if not metas:
        raise ValueError("cannot bin an empty trajectory library")
    durations = np.array([m.duration for m in metas], dtype=float)
    delta = default_bin_width(durations) if delta is None else float(delta)
    if not delta > 0:
        raise ValueError("bin width must be positive")
    if not 0 < alpha < 1 or not 0 <= epsilon <= 1 or not tau_base > 0:
        raise ValueError("need 0 < alpha < 1, 0 <= epsilon <= 1 and tau_base > 0")
    n_bins = int(math.ceil(float(np.max(durations)) / delta))
    mask = np.arange(n_bins)[None, :] * delta < durations[:, None]
    f = np.where(mask, float(initial_failure), -np.inf)
    return BinTable(delta, durations, mask, f, alpha, tau_base, epsilon)


def max_episode_steps(episode_steps, trajectory_length, start_step=0):
    """Steps an episode could last without early termination.

    An episode started ``start_step`` frames into the reference can run at
    most until the reference ends.
    """
    return max(1, min(int(episode_steps), int(trajectory_length) - int(start_step)))


def episode_similarity(step_scores, l_max, l_real=None):
    """``(1 / L_max) * sum_{k <= L_real} s_k``; missing steps count as zero."""
    s = np.asarray(step_scores, dtype=float)
    l_real = len(s) if l_real is None else int(l_real)
    if l_real > l_max:
        raise ValueError(f"realized length {l_real} exceeds L_max {l_max}")
    if l_real > len(s):
        raise ValueError("fewer scores than the realized length")
    s = s[:l_real]
    if np.any((s < 0) | (s > 1)):
        raise ValueError("step scores must lie in [0, 1]")
    return float(s.sum() / l_max)


def _check_valid(table, i, b):
    if not (0 <= i < table.n_trajectories and 0 <= b < table.n_bins and table.mask[i, b]):
        raise IndexError(f"bin ({i}, {b}) is not in the valid set")


def update_failure(table, i, b, s_bar):
    """One EMA step ``f <- (1 - alpha) f + alpha (1 - s_bar)``; updates in place."""
    _check_valid(table, i, b)
    table.f[i, b] = (1.0 - table.alpha) * table.f[i, b] + table.alpha * (1.0 - s_bar)
    table.visits[i, b] += 1
    return table


def update_failures(table, results):
    """Fold a batch of ``(i, b, s_bar)`` episode results.

    Results that share a bin are averaged first and applied as one EMA
    step, so the outcome does not depend on the order the episodes finished.
    """
    grouped = defaultdict(list)
    for i, b, s in results:
        _check_valid(table, i, b)
        grouped[(int(i), int(b))].append(float(s))
    for (i, b), vals in sorted(grouped.items()):
        s_bar = math.fsum(vals) / len(vals)
        table.f[i, b] = (1.0 - table.alpha) * table.f[i, b] + table.alpha * (1.0 - s_bar)
        table.visits[i, b] += len(vals)
    return table


def sampling_distribution(table):
    """``p = (1 - eps) softmax(f / tau) + eps / |Omega|`` on the valid set, 0 elsewhere."""
    if table.n_valid < 1:
        raise ValueError("no valid bins")
    p = floor_softmax(table.f.ravel(), table.mask.ravel(), table.temperature, table.epsilon)
    return p.reshape(table.mask.shape)


@dataclass(frozen=True)
class StartSample:
    trajectory: int
    bin: int
    t_init: float
    phase: float


def sample_start(table, rng, p=None):
    """Draw a bin from the sampling distribution and a uniform start time inside it."""
    p = sampling_distribution(table) if p is None else p
    flat = p.ravel()
    k = int(rng.choice(flat.size, p=flat / flat.sum()))
    i, b = divmod(k, table.n_bins)
    lo, hi = table.bin_interval(i, b)
    t = float(rng.uniform(lo, hi))
    if t >= table.durations[i]:
        t = float(np.nextafter(table.durations[i], 0.0))
    return StartSample(i, b, t, t / table.durations[i])


def sample_starts(table, rng, n, p=None):
    """``n`` independent draws of :func:`sample_start` as arrays.

    Returns ``(trajectory, bin, t_init, phase)``.
    """
    p = sampling_distribution(table) if p is None else p
    flat = p.ravel()
    k = rng.choice(flat.size, size=int(n), p=flat / flat.sum())
    i, b = np.divmod(k, table.n_bins)
    lo = b * table.delta
    hi = np.minimum((b + 1) * table.delta, table.durations[i])
    t = rng.uniform(lo, hi)
    t = np.where(t >= table.durations[i], np.nextafter(table.durations[i], 0.0), t)
    return i, b, t, t / table.durations[i]


def write_heatmap_csv(table, path, beta=None, labels=None):
    """Per-bin failure level, visit count, sampling probability (and optional beta)."""
    p = sampling_distribution(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["trajectory", "label", "bin", "valid", "failure", "visits", "probability"]
        if beta is not None:
            header.append("beta")
        w.writerow(header)
        for i in range(table.n_trajectories):
            for b in range(table.n_bins):
                valid = bool(table.mask[i, b])
                row = [i, labels[i] if labels else "", b, int(valid),
                       f"{table.f[i, b]:.9f}" if valid else "", int(table.visits[i, b]), f"{p[i, b]:.9e}"]
                if beta is not None:
                    row.append(f"{beta[i, b]:.9f}" if valid else "")
                w.writerow(row)
