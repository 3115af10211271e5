import csv
import json

import numpy as np
import pytest

from helpers import identity_linkage
from motionimit import cli
from motionimit.env.plant import toy_plant
from motionimit.env.reference import load_reference, simulate_torques
from motionimit.pla.linkage import save_linkage
from motionimit.rbd import RobotState

SMALL = {
    "pla": {"mechanisms": ["four_bar_knee"], "duration": 0.2, "polytope_points": 3},
    "sampler": {"iterations": 20, "episodes_per_iteration": 8, "snapshot_every": 10},
    "rollout": {"episodes": 2, "generated_durations": [1.0]},
    "env": {"episode_length": 1.0},
    "spot": {"synthetic_samples": 200},
    "reference": {"duration": 1.0},
}

GOLDEN_HEADERS = {
    "eval-pla": {"eval_pla.csv": "mechanism,model,joint,normalized_mse,diverged"},
    "torque-polytope": {"torque_polytope.csv": "pitch,roll,vertex_index,tau_pitch,tau_roll"},
    "sampler-demo": {"sampler_timeseries.csv": "iteration,trajectory,bin,failure,probability,visits,beta",
                     "sampler_heatmap.csv": "trajectory,label,bin,valid,failure,visits,probability,beta"},
    "rollout": {"rollout_episodes.csv": "episode,stream,trajectory,bin,t_init,start_frame,beta,l_max,l_real,"
                                        "status,reason,s_bar,return",
                "episode_0000.csv": "step,t,frame,r_base_position,r_base_orientation,r_base_angular_velocity,"
                                    "r_base_linear_velocity,r_joint_position,r_keybody_position,"
                                    "r_keybody_orientation,r_track,r_reg,r_survival,reward,s_k,beta,status"},
    "fit-spot": {"spot_log.csv": "t,tau_in,omega,alpha,tau_out"},
    "gen-reference": {"reference_torques.csv": "substep,tau_0,tau_1,tau_2,tau_3"},
}


def write_config(path, doc=None, **blocks):
    doc = json.loads(json.dumps(SMALL if doc is None else doc))
    for k, v in blocks.items():
        if isinstance(v, dict):
            doc.setdefault(k, {}).update(v)
        else:
            doc[k] = v
    path.write_text(json.dumps(doc))
    return path


def run(tmp_path, command, *extra, name="out", **blocks):
    cfg = write_config(tmp_path / f"{name}.json", **blocks)
    out = tmp_path / name
    return cli.main([command, "--config", str(cfg), "--out", str(out), *extra]), out


@pytest.mark.parametrize("command", sorted(GOLDEN_HEADERS))
def test_golden_headers(tmp_path, command):
    code, out = run(tmp_path, command)
    assert code == cli.EXIT_OK
    for fname, header in GOLDEN_HEADERS[command].items():
        assert (out / fname).read_text().splitlines()[0] == header


def test_header_constants_match_golden():
    assert ",".join(cli.EVAL_PLA_COLUMNS) == GOLDEN_HEADERS["eval-pla"]["eval_pla.csv"]
    assert ",".join(cli.SAMPLER_COLUMNS) == GOLDEN_HEADERS["sampler-demo"]["sampler_timeseries.csv"]


def test_unknown_config_key_exit_2(tmp_path):
    code, _ = run(tmp_path, "sampler-demo", env={"bogus": 1})
    assert code == cli.EXIT_CONFIG


def test_missing_config_file_exit_2(tmp_path):
    assert cli.main(["eval-pla", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG


def test_missing_reference_exit_2(tmp_path):
    code, _ = run(tmp_path, "rollout", rollout={"references": [str(tmp_path / "missing.json")]})
    assert code == cli.EXIT_CONFIG


def test_missing_actuator_log_exit_2(tmp_path):
    code, _ = run(tmp_path, "fit-spot", str(tmp_path / "nolog.csv"))
    assert code == cli.EXIT_CONFIG


def test_invalid_hard_bin_exit_2(tmp_path):
    code, _ = run(tmp_path, "sampler-demo", sampler={"hard_bins": [[0, 40]]})
    assert code == cli.EXIT_CONFIG


def test_divergence_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, "gen-reference", env={"sim_dt": 0.2, "decimation": 1, "attach_pla": False},
                  reference={"duration": 60.0})
    assert code == cli.EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_one_output_polytope_exit_2(tmp_path):
    code, _ = run(tmp_path, "torque-polytope", pla={"polytope_mechanism": "four_bar_knee"})
    assert code == cli.EXIT_CONFIG


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2


def test_seed_changes_output(tmp_path):
    _, a = run(tmp_path, "sampler-demo", name="a", seed=1)
    _, b = run(tmp_path, "sampler-demo", name="b", seed=2)
    assert (a / "sampler_timeseries.csv").read_bytes() != (b / "sampler_timeseries.csv").read_bytes()
    _, c = run(tmp_path, "sampler-demo", "--seed", "1", name="c")
    assert (a / "sampler_timeseries.csv").read_bytes() == (c / "sampler_timeseries.csv").read_bytes()


def test_gen_reference_replays(tmp_path):
    code, out = run(tmp_path, "gen-reference", reference={"duration": 1.0})
    assert code == 0
    ref = load_reference(out / "reference.json")
    assert ref.n_frames == 51 and ref.duration == pytest.approx(1.0)
    torques = cli.read_torques(out / "reference_torques.csv")
    assert torques.shape == (250, 4)
    start = RobotState(ref.q[0], ref.qd[0], ref.base_pos[0], ref.base_quat[0], ref.base_linvel[0],
                       ref.base_angvel[0])
    states = simulate_torques(toy_plant(), start, torques, 0.004, 5)
    assert np.abs(np.array([s.q for s in states]) - ref.q).max() < 1e-8
    assert np.abs(np.array([s.base_pos for s in states]) - ref.base_pos).max() < 1e-8


def test_rollout_with_reference_file(tmp_path):
    code, out = run(tmp_path, "gen-reference", name="gen", reference={"duration": 1.0})
    assert code == 0
    code, out2 = run(tmp_path, "rollout", name="roll",
                     rollout={"references": [str(out / "reference.json")], "episodes": 1})
    assert code == 0
    summary = json.loads((out2 / "rollout_summary.json").read_text())
    assert summary["episodes"] == 1 and summary["policy"] == "zero-residual"


def test_identity_linkage_polytope_constant_square(tmp_path):
    save_linkage(identity_linkage(motor_limit=2.0), tmp_path / "identity.json")
    code, out = run(tmp_path, "torque-polytope", pla={"polytope_mechanism": str(tmp_path / "identity.json"),
                                                     "polytope_points": 4})
    assert code == 0
    rows = list(csv.DictReader(open(out / "torque_polytope.csv")))
    assert len(rows) == 16 * 4
    for r in rows:
        assert abs(abs(float(r["tau_pitch"])) - 2.0) < 1e-12 and abs(abs(float(r["tau_roll"])) - 2.0) < 1e-12


def test_fit_spot_recovers_config_efficiencies(tmp_path):
    code, out = run(tmp_path, "fit-spot", spot={"eta_plus": 0.85, "eta_minus": 0.75, "synthetic_samples": 500})
    assert code == 0
    fit = json.loads((out / "spot_fit.json").read_text())
    assert fit["eta_plus"] == pytest.approx(0.85, abs=1e-9)
    assert fit["eta_minus"] == pytest.approx(0.75, abs=1e-9)
    # fitting the written log file gives the same answer
    code, out2 = run(tmp_path, "fit-spot", str(out / "spot_log.csv"), name="again",
                     spot={"eta_plus": 0.85, "eta_minus": 0.75})
    assert json.loads((out2 / "spot_fit.json").read_text())["eta_plus"] == pytest.approx(0.85, abs=1e-9)


def test_sampler_summary_reports_floor(tmp_path):
    code, out = run(tmp_path, "sampler-demo")
    rep = json.loads((out / "sampler_summary.json").read_text())
    assert rep["floor_respected"] and rep["n_valid"] > 0
