import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonstat.config import (
    ConfigError,
    ExperimentConfig,
    SweepAxis,
    eval_number,
    load_config,
    parse_config,
    parse_pairs,
)
from photonstat.dimer_model import DetectionGeometry, DimerParams

BASIC = """
# witness map
experiment = g2_map
R = 4          # half splitting
beta = pi/3
p1 = 0.1
p2 = 0.1
theta = pi/2
sweep.phi = 0, pi, 8
sweep.p2_over_p1 = 1, 40, 5
"""


def test_basic_config_parses():
    cfg = parse_config(BASIC)
    assert cfg.experiment == "g2_map"
    assert cfg.params == DimerParams(R=4.0, beta=math.pi / 3, p1=0.1, p2=0.1)
    assert cfg.geometry == DetectionGeometry(theta=math.pi / 2)
    assert cfg.sweeps == (SweepAxis("phi", 0.0, math.pi, 8), SweepAxis("p2_over_p1", 1.0, 40.0, 5))
    assert cfg.sensor is None and cfg.trajectories is None and cfg.output is None


@pytest.mark.parametrize("text,value", [("1", 1.0), ("pi/4", math.pi / 4), ("-2*pi", -2 * math.pi),
                                        ("1e-3", 1e-3), ("2**-3", 0.125), ("(1+2)/4", 0.75)])
def test_arithmetic_values(text, value):
    assert eval_number(text) == value


@pytest.mark.parametrize("text", ["__import__('os')", "abs(1)", "x", "1/0", "1 +", "'a'"])
def test_unsafe_or_bad_values_rejected(text):
    with pytest.raises(ConfigError):
        eval_number(text)


def test_sweep_endpoints_are_exact():
    values = SweepAxis("phi", 0.0, math.pi, 64).values()
    assert len(values) == 64 and values[0] == 0.0 and values[-1] == math.pi


@pytest.mark.parametrize("edit,field", [
    ("experiment = nope", "experiment"),
    ("beta = 2", "params"),
    ("sweep.phi = 0, 1", "sweep.phi"),
    ("sweep.phi = 0, 1, 1", "sweep.phi"),
    ("sweep.beta = 0, 3, 4", "sweep.beta"),
    ("colour = 3", "colour"),
    ("R = four", "R"),
    ("d1 = 0", "d1/d2"),
])
def test_field_level_errors(edit, field):
    key = edit.split("=")[0].strip()
    lines = [ln for ln in BASIC.splitlines() if not ln.startswith(key + " ") and not ln.startswith("sweep.p2")]
    with pytest.raises(ConfigError) as info:
        parse_config("\n".join(lines + [edit]))
    assert info.value.field == field


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError):
        parse_pairs("R = 1\nR = 2\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError):
        parse_pairs("R 1\n")


def test_missing_required_keys():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment = g2_map\nR = 1\n")
    assert info.value.field == "beta"
    with pytest.raises(ConfigError):
        parse_config("R = 1\nbeta = 0\n")


def test_sweep_order_follows_file_order():
    cfg = parse_config("experiment = g2_map\nR = 1\nbeta = 0.5\np1 = 0.1\n"
                       "sweep.p2_over_p1 = 1, 2, 2\nsweep.phi = 0, 1, 3\n")
    assert [ax.name for ax in cfg.sweeps] == ["p2_over_p1", "phi"]
    with pytest.raises(ConfigError) as info:
        parse_config("experiment = g2_map\nR = 1\nbeta = 0.5\nsweep.gamma = 1, 2, 2\n")
    assert info.value.field == "sweep.gamma"


def test_at_most_two_sweeps():
    text = BASIC + "sweep.theta = 0, 1, 3\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == "sweep"


def test_ratio_sweep_needs_pumped_first_emitter():
    with pytest.raises(ConfigError):
        parse_config(BASIC.replace("p1 = 0.1", "p1 = 0"))


def test_filtered_experiments_get_a_sensor_block():
    cfg = parse_config("experiment = filtered_g2_scan\nR = 2\nbeta = 0\n")
    assert cfg.sensor is not None and cfg.sensor.epsilon == 1e-3


def test_weak_coupling_limit_enforced():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment = filtered_g2_scan\nR = 2\nbeta = 0\nsensor.epsilon = 0.05\n")
    assert info.value.field == "sensor.epsilon"
    with pytest.raises(ConfigError):
        parse_config("experiment = filtered_g2_scan\nR = 2\nbeta = 0\n"
                     "sensor.gamma_filter = 0.1\nsensor.epsilon = 0.005\n")


def test_trajectory_block():
    cfg = parse_config("experiment = trajectories\nR = 2\nbeta = 0\np1 = 0.1\np2 = 0.1\n"
                       "traj.n_traj = 50\ntraj.seed = 7\ntraj.t_max = 2\n")
    assert cfg.trajectories.n_traj == 50 and cfg.trajectories.seed == 7
    with pytest.raises(ConfigError):
        parse_config("experiment = trajectories\nR = 2\nbeta = 0\ntraj.n_traj = 2.5\n")
    with pytest.raises(ConfigError):
        parse_config("experiment = trajectories\nR = 2\nbeta = 0\ntraj.dt = 0.01\ntraj.record_dt = 0.001\n")


def test_analytic_compare_restricted_to_limiting_angles():
    base = "experiment = analytic_compare\nR = 2\np1 = 0.1\np2 = 0.1\ntheta = pi/2\n"
    parse_config(base + "beta = pi/2\nsweep.phi = 0, pi/2, 5\n")
    parse_config(base + "beta = 0\nsweep.beta = 0, pi/2, 2\n")
    with pytest.raises(ConfigError):
        parse_config(base + "beta = 0.3\n")
    with pytest.raises(ConfigError):
        parse_config(base + "beta = 0\nsweep.beta = 0, pi/2, 3\n")


def test_text_round_trip():
    cfg = parse_config(BASIC + "output = out/map.csv\n")
    assert parse_config(cfg.to_text()) == cfg


def test_round_trip_with_all_blocks():
    text = ("experiment = filtered_g2_scan\nR = 2\nbeta = pi/5\ngamma = 1\np1 = 0.1\np2 = 0.3\n"
            "theta = 1.1\nphi = 0.2\nd1 = 1.5\nd2 = 0.5\nsensor.gamma_filter = 2\n"
            "sensor.epsilon = 0.001\nsensor.omega1 = 1.5\nsensor.omega2 = -2.5\n"
            "sweep.beta = 0, pi/2, 3\ntraj.n_traj = 4\n")
    cfg = parse_config(text)
    assert parse_config(cfg.to_text()) == cfg


@settings(max_examples=60, deadline=None)
@given(R=st.floats(1e-3, 1e3), beta=st.floats(0, math.pi / 2), p1=st.floats(1e-6, 10),
       p2=st.floats(0, 10), phi=st.floats(-10, 10), count=st.integers(2, 500))
def test_round_trip_is_exact_for_any_floats(R, beta, p1, p2, phi, count):
    cfg = ExperimentConfig("g2_map", DimerParams(R=R, beta=beta, p1=p1, p2=p2),
                           DetectionGeometry(phi=phi),
                           sweeps=(SweepAxis("p2_over_p1", 1.0, 3.0, count),))
    assert parse_config(cfg.to_text()) == cfg


def test_load_from_file_csv_and_sidecar(tmp_path):
    cfg = parse_config(BASIC)
    plain = tmp_path / "a.cfg"
    plain.write_text(BASIC)
    assert load_config(plain) == cfg
    csv_path = tmp_path / "a.csv"
    csv_path.write_text("# photonstat 0.1.0\n" + "".join(f"# config: {k} = {v}\n" for k, v in cfg.to_pairs())
                        + "beta,g2\n1,2\n")
    assert load_config(csv_path) == cfg
    side = tmp_path / "a.json"
    side.write_text(json.dumps({"metadata": {"config": cfg.to_dict()}}))
    assert load_config(side) == cfg


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_grid_and_seed_overrides():
    cfg = parse_config(BASIC).with_grid(3)
    assert [ax.count for ax in cfg.sweeps] == [3, 3]
    assert cfg.with_seed(4) == cfg
    traj = parse_config("experiment = trajectories\nR = 2\nbeta = 0\n").with_seed(4)
    assert traj.trajectories.seed == 4
