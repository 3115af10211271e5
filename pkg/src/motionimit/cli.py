"""Command-line front end.

Every subcommand reads one experiment config (``--config``, defaults when
omitted), writes CSV/JSON into ``--out`` and is deterministic for a fixed
``--seed``. Exit status: 0 on success, 2 on configuration or input errors,
3 on numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import rbd
from .config import ConfigError, load_config
from .curriculum import CurriculumParams, assistance_scale
from .pla.evaluation import Protocol, evaluate_model_errors
from .pla.linkage import TransmissionSingularityError, WorkspaceError, load_linkage
from .pla.mechanisms import MECHANISMS, motor_torque_box
from .pla.polytope import polytope_sweep, write_polytope_csv
from .rsi import (build_bins, library_metas, load_manifest, sample_start, sampling_distribution,
                  update_failures, write_heatmap_csv)
from .spot import fit_efficiency, read_log, synthetic_log, write_log

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

EVAL_PLA_COLUMNS = ("mechanism", "model", "joint", "normalized_mse", "diverged")
SAMPLER_COLUMNS = ("iteration", "trajectory", "bin", "failure", "probability", "visits", "beta")
TORQUE_COLUMNS_PREFIX = ("substep",)


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _f(x):
    return "nan" if not math.isfinite(x) else f"{x:.9e}"


def cmd_eval_pla(cfg, out):
    pc = cfg.pla
    protocol = Protocol(frequency_hz=pc.frequency_hz, amplitude_fraction=pc.amplitude_fraction,
                        duration=pc.duration, dt=pc.dt, omega_n=pc.omega_n)
    rows, flagged = [], []
    for name in pc.mechanisms:
        linkage = MECHANISMS[name]()
        result = evaluate_model_errors(linkage.main, linkage, protocol)
        for r in result.rows:
            if r.diverged:
                flagged.append(f"{name}/{r.model}")
            for j, e in zip(r.joints, r.normalized_mse):
                rows.append((name, r.model, j, _f(float(e)), int(r.diverged)))
        print(f"[{name}]\n{result.table()}")
    with open(out / "eval_pla.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_PLA_COLUMNS)
        w.writerows(rows)
    if flagged:
        print("diverged:", ", ".join(flagged))
    return {"rows": len(rows), "diverged": flagged}


def cmd_torque_polytope(cfg, out):
    pc = cfg.pla
    if pc.polytope_mechanism in MECHANISMS:
        linkage = MECHANISMS[pc.polytope_mechanism]()
    else:
        linkage = load_linkage(pc.polytope_mechanism)
    if linkage.n_o != 2:
        raise ConfigError(f"{pc.polytope_mechanism} has {linkage.n_o} output joint(s); the sweep needs 2")
    sweep = polytope_sweep(linkage, motor_torque_box(linkage), pc.polytope_points)
    if not sweep:
        raise ConfigError("empty polytope sweep")
    write_polytope_csv(sweep, out / "torque_polytope.csv")
    print(f"{len(sweep)} configurations written")
    return {"configurations": len(sweep)}


def _library(sc):
    return library_metas() if sc.library == "demo" else load_manifest(sc.library)


def sampler_demo(cfg, rng):
    """Drive the sampler with a synthetic difficulty profile.

    Returns the final table and a list of snapshot rows.
    """
    sc = cfg.sampler
    metas = _library(sc)
    durations = [m.duration for m in metas]
    table = build_bins(metas, delta=min(sc.max_bin_width, min(durations)), alpha=sc.alpha,
                       tau_base=sc.tau_base, epsilon=sc.epsilon, initial_failure=sc.initial_failure)
    hard = {tuple(hb) for hb in sc.hard_bins}
    for i, b in hard:
        if not (i < table.n_trajectories and b < table.n_bins and table.mask[i, b]):
            raise ConfigError(f"sampler.hard_bins: ({i}, {b}) is not a valid bin")
    params = _curriculum(cfg)
    snapshots = []
    for it in range(1, sc.iterations + 1):
        p = sampling_distribution(table)
        results = []
        for _ in range(sc.episodes_per_iteration):
            st = sample_start(table, rng, p)
            mean = sc.hard_similarity if (st.trajectory, st.bin) in hard else sc.easy_similarity
            s = float(np.clip(mean + sc.score_noise * rng.standard_normal(), 0.0, 1.0))
            results.append((st.trajectory, st.bin, s))
        update_failures(table, results)
        if it % sc.snapshot_every == 0 or it == sc.iterations:
            p = sampling_distribution(table)
            beta = assistance_scale(table.f, params)
            for i, b in table.omega:
                snapshots.append((it, i, b, _f(table.f[i, b]), _f(p[i, b]), int(table.visits[i, b]),
                                  _f(float(beta[i, b]))))
    return table, snapshots


def _curriculum(cfg, **kw):
    c = cfg.curriculum
    return CurriculumParams(eta=c.eta, beta_max=c.beta_max, kp_v=c.kp_v, kd_v=c.kd_v,
                            kp_w=c.kp_w, kd_w=c.kd_w, **kw)


def coupling_report(table, hard):
    p = sampling_distribution(table)
    n = table.n_valid
    uniform_p = 1.0 / n
    uniform_visits = table.visits.sum() / n
    floor = table.epsilon / n
    rep = {"n_valid": n, "uniform_share": uniform_p, "floor": floor,
           "min_probability": float(p[table.mask].min()),
           "floor_respected": bool(np.all(p[table.mask] >= floor * (1 - 1e-12))), "hard_bins": []}
    for i, b in sorted(hard):
        rep["hard_bins"].append({"trajectory": i, "bin": b, "probability": float(p[i, b]),
                                 "visits": int(table.visits[i, b]), "uniform_visits": float(uniform_visits),
                                 "exceeds_uniform": bool(p[i, b] > uniform_p
                                                         and table.visits[i, b] > uniform_visits)})
    return rep


def cmd_sampler_demo(cfg, out):
    rng = np.random.default_rng(cfg.seed)
    table, snapshots = sampler_demo(cfg, rng)
    with open(out / "sampler_timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLER_COLUMNS)
        w.writerows(snapshots)
    labels = [m.label for m in _library(cfg.sampler)]
    write_heatmap_csv(table, out / "sampler_heatmap.csv",
                      beta=assistance_scale(table.f, _curriculum(cfg)), labels=labels)
    rep = coupling_report(table, {tuple(hb) for hb in cfg.sampler.hard_bins})
    _write_json(out / "sampler_summary.json", rep)
    for hb in rep["hard_bins"]:
        print(f"hard bin ({hb['trajectory']}, {hb['bin']}): p={hb['probability']:.4f} "
              f"(uniform {rep['uniform_share']:.4f}), visits={hb['visits']} "
              f"(uniform {hb['uniform_visits']:.1f})")
    print(f"min p = {rep['min_probability']:.3e} >= floor {rep['floor']:.3e}: {rep['floor_respected']}")
    return rep


def _plant(cfg):
    from .env.plant import toy_plant
    return toy_plant(attach_pla=cfg.env.attach_pla)


def _generated_refs(cfg, plant):
    from .env.reference import SinusoidTargets, generate_reference
    rc, ec = cfg.reference, cfg.env
    refs = []
    for k, d in enumerate(cfg.rollout.generated_durations):
        rng = np.random.default_rng([cfg.seed, 1000 + k])
        tg = SinusoidTargets.random(plant, rng, rc.amplitude, rc.frequency)
        ref, _, _ = generate_reference(plant, d, rng, ec.sim_dt, ec.decimation, rc.omega_n, tg,
                                       rc.base_height, name=f"generated_{k}")
        refs.append(ref)
    return refs


def build_env(cfg):
    from .env.episode import Env
    from .env.reference import load_reference
    plant = _plant(cfg)
    if cfg.rollout.references:
        refs = [load_reference(p) for p in cfg.rollout.references]
    else:
        refs = _generated_refs(cfg, plant)
    env = Env(plant, refs, cfg.env.env_config(), cfg.env.reward_weights())
    env.curriculum = _curriculum(cfg, mass=env.curriculum.mass, inertia=env.curriculum.inertia,
                                 r_com=env.curriculum.r_com, gravity=env.curriculum.gravity)
    return env


def cmd_rollout(cfg, out):
    from .env.episode import run_streams, similarity_summary, write_summary_csv
    env = build_env(cfg)
    sc = cfg.sampler
    table = env.bins(delta=min(sc.max_bin_width, min(r.duration for r in env.references)), alpha=sc.alpha,
                     tau_base=sc.tau_base, epsilon=sc.epsilon, initial_failure=sc.initial_failure)
    rc = cfg.rollout
    kw = {"sigma": rc.noise_sigma, "gain": rc.corrector_gain, "magnitude": rc.adversarial_magnitude}
    logs = run_streams(env, rc.policy, table, rc.episodes, cfg.streams, cfg.seed, kw)
    for lg in logs:
        lg.to_csv(out / f"episode_{lg.episode:04d}.csv")
    write_summary_csv(logs, out / "rollout_episodes.csv")
    summary = similarity_summary(logs)
    summary["policy"] = rc.policy
    _write_json(out / "rollout_summary.json", summary)
    if logs:
        print(f"{summary['episodes']} episodes: mean s_bar {summary['mean']:.4f}, "
              f"min {summary['min']:.4f}, p10 {summary['p10']:.4f}, failed {summary['failed']}")
    return summary


def cmd_fit_spot(cfg, out, log_path=None):
    params = cfg.spot.actuator_params()
    if log_path is None:
        rng = np.random.default_rng(cfg.seed)
        log = synthetic_log(params, cfg.spot.synthetic_samples, noise=cfg.spot.synthetic_noise, rng=rng)
        write_log(out / "spot_log.csv", log)
    else:
        if not Path(log_path).is_file():
            raise ConfigError(f"actuator log not found: {log_path}")
        log = read_log(log_path)
    fit = fit_efficiency(log["tau_in"], log["omega"], log["alpha"], log["tau_out"], params)
    doc = {"eta_plus": fit.eta_plus, "eta_minus": fit.eta_minus, "residual": fit.residual,
           "n_plus": fit.n_plus, "n_minus": fit.n_minus}
    fitted = params.to_dict()
    fitted.update(eta_plus=fit.eta_plus, eta_minus=fit.eta_minus)
    doc["params"] = fitted
    _write_json(out / "spot_fit.json", doc)
    print(f"eta_plus={fit.eta_plus:.9f} eta_minus={fit.eta_minus:.9f} residual={fit.residual:.3e}")
    return doc


def cmd_gen_reference(cfg, out):
    from .env.reference import SinusoidTargets, generate_reference, save_reference
    rc, ec = cfg.reference, cfg.env
    plant = _plant(cfg)
    rng = np.random.default_rng(cfg.seed)
    targets = SinusoidTargets.random(plant, rng, rc.amplitude, rc.frequency)
    ref, _, torques = generate_reference(plant, rc.duration, rng, ec.sim_dt, ec.decimation, rc.omega_n,
                                         targets, rc.base_height, rc.name)
    save_reference(ref, out / "reference.json")
    with open(out / "reference_torques.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TORQUE_COLUMNS_PREFIX + tuple(f"tau_{j}" for j in range(plant.n_j)))
        for k, tau in enumerate(torques):
            w.writerow([k] + [repr(float(v)) for v in tau])
    print(f"{ref.n_frames} frames ({ref.duration:.3f} s) written")
    return {"frames": ref.n_frames, "duration": ref.duration}


def read_torques(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


COMMANDS = {
    "eval-pla": cmd_eval_pla,
    "torque-polytope": cmd_torque_polytope,
    "sampler-demo": cmd_sampler_demo,
    "rollout": cmd_rollout,
    "fit-spot": cmd_fit_spot,
    "gen-reference": cmd_gen_reference,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--streams", type=int, help="parallel episode streams (overrides the config)")
    parser = argparse.ArgumentParser(prog="motionimit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eval-pla": "normalized acceleration MSE of the linkage models",
        "torque-polytope": "output torque polygons over the joint-limit grid",
        "sampler-demo": "adaptive sampler under a synthetic difficulty profile",
        "rollout": "scripted-policy episodes over parallel streams",
        "fit-spot": "fit actuator efficiencies from a log",
        "gen-reference": "self-consistent reference trajectory from the toy plant",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "fit-spot":
            p.add_argument("log", nargs="?", type=Path,
                           help="actuator log CSV; a synthetic log is generated when omitted")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("streams", args.streams)) if v is not None}
        if args.out is not None:
            overrides["out"] = str(args.out)
        cfg = cfg.replace(**overrides) if overrides else cfg
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "fit-spot":
            cmd_fit_spot(cfg, out, args.log)
        else:
            COMMANDS[args.command](cfg, out)
    except (FloatingPointError, ArithmeticError, rbd.DynamicsError, WorkspaceError,
            TransmissionSingularityError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
