import json
import math

import numpy as np
import pytest

from photonstat.config import load_config, parse_config
from photonstat.experiments import (
    AXIS_COLUMNS,
    FIGURES,
    ExperimentError,
    ResultTable,
    columns_for,
    figure_configs,
    read_csv,
    run_experiment,
    run_figure_suite,
)

G2_MAP = """
experiment = g2_map
R = 4
beta = pi/3
p1 = 0.1
p2 = 0.1
theta = pi/2
sweep.phi = 0, pi, 9
sweep.p2_over_p1 = 1, 40, 6
"""

SCAN = """
experiment = filtered_g2_scan
R = 2
beta = {beta}
p1 = 0.1
p2 = 0.1
theta = pi/2
sensor.gamma_filter = 1
sweep.phi = 0, pi/2, 9
"""

TRAJ = """
experiment = trajectories
R = 2
beta = 0
p1 = 0.1
p2 = 0.1
traj.n_traj = 40
traj.t_max = 1
traj.dt = 0.001
traj.record_dt = 0.1
traj.seed = 3
"""


def single_point(text, **values):
    """The same config with every sweep removed and the point's values set."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("sweep.")]
    cfg_text = "\n".join(lines)
    for key, v in values.items():
        if key == "p2_over_p1":
            cfg_text = "\n".join(ln for ln in cfg_text.splitlines() if not ln.startswith("p2 "))
            cfg_text += f"\np2 = {v!r} * 0.1"
        else:
            cfg_text = "\n".join(ln for ln in cfg_text.splitlines() if not ln.startswith(key + " "))
            cfg_text += f"\n{key} = {v!r}"
    return parse_config(cfg_text)


def test_table_shape_and_order():
    table = run_experiment(parse_config(G2_MAP))
    assert table.columns == columns_for("g2_map")
    assert table.columns[:4] == AXIS_COLUMNS
    assert len(table.rows) == 54
    phi, ratio = table.column("phi"), table.column("p2_over_p1")
    # first axis varies slowest
    assert np.all(phi[:6] == 0.0) and np.all(np.diff(ratio[:6]) > 0)
    assert phi[-1] == math.pi


def test_rows_must_match_columns():
    with pytest.raises(ValueError):
        ResultTable(["a", "b"], [[1.0]])


def test_sweep_point_equals_single_point_run():
    table = run_experiment(parse_config(G2_MAP))
    for k in (7, 20, 41):
        row = table.rows[k]
        phi, ratio = row[2], row[3]
        single = run_experiment(single_point(G2_MAP, phi=phi, p2_over_p1=ratio)).rows[0]
        assert np.allclose(row, single, atol=1e-12, rtol=0, equal_nan=True)


def test_filtered_sweep_point_equals_single_point_run():
    text = SCAN.format(beta="0")
    table = run_experiment(parse_config(text))
    row = table.rows[3]
    single = run_experiment(single_point(text, phi=row[2])).rows[0]
    assert np.allclose(row, single, atol=1e-12, rtol=0)


def test_outputs_are_bit_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(parse_config(G2_MAP + f"output = {a}\n"))
    run_experiment(parse_config(G2_MAP + f"output = {b}\n"), workers=2)
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("# config: output")]
    assert strip(a) == strip(b)


def test_worker_count_does_not_change_results():
    for text in (G2_MAP, SCAN.format(beta="pi/2"), TRAJ):
        cfg = parse_config(text)
        assert run_experiment(cfg, workers=1).to_csv() == run_experiment(cfg, workers=3).to_csv()


def test_metadata_alone_reruns_the_experiment(tmp_path):
    out = tmp_path / "map.csv"
    run_experiment(parse_config(G2_MAP + f"output = {out}\n"))
    first = out.read_text()
    for source in (out, out.with_suffix(".json")):
        cfg = load_config(source)
        out.unlink()
        run_experiment(cfg)
        assert out.read_text() == first


def test_csv_values_round_trip(tmp_path):
    table = run_experiment(parse_config(SCAN.format(beta="0")))
    path = table.write(tmp_path / "scan.csv")
    back = read_csv(path)
    assert back.columns == table.columns
    assert np.array_equal(np.array(back.rows), np.array(table.rows), equal_nan=True)
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["columns"] == table.columns
    assert side["metadata"]["engine_version"] == "0.1.0"


def test_polarizer_nulls_reported_as_nan():
    text = G2_MAP.replace("theta = pi/2", "theta = 0")
    table = run_experiment(parse_config(text))
    null_rows = table.where(phi=table.column("phi")[4 * 6])  # phi = pi/2
    assert np.all(np.isnan(null_rows.column("g2")))
    assert np.all(np.isfinite(table.where(phi=0.0).column("g2")))


def test_numerical_errors_name_the_grid_point():
    text = SCAN.format(beta="0") + "sensor.epsilon = 1.5e-6\n"
    with pytest.raises(ExperimentError, match=r"grid point 0 \(phi=0"):
        run_experiment(parse_config(text))


def test_steady_state_columns_agree_with_closed_forms():
    text = G2_MAP.replace("g2_map", "steady_state").replace("sweep.phi = 0, pi, 9\n", "")
    table = run_experiment(parse_config(text))
    for name in ("n1", "n2", "coh_re", "coh_im", "nn", "pop_imbalance"):
        assert np.allclose(table.column(name), table.column(name + "_analytic"), atol=1e-9, rtol=0)


def test_excitonic_coherence_grows_from_zero():
    table = run_figure_suite("fig2a", grid=16)
    coh = table.column("exc_coh_abs")
    assert coh[0] < 1e-10
    assert np.all(np.diff(coh) > 0)


def test_witness_map_has_bunching_region_away_from_balance():
    table = run_figure_suite("fig2b", grid=16)
    g2 = table.column("g2")
    ratio = table.column("p2_over_p1")
    assert np.nanmax(g2) > 1
    assert not np.any(table.column("witnessed")[ratio == 1.0] == 1.0)


def test_filtered_scan_coupled_peaks_near_quarter_angle():
    table = run_figure_suite("fig3e", grid=9)
    coupled, uncoupled = table.where(beta=0.0), table.where(beta=math.pi / 2)
    phi = coupled.column("phi")
    g_c, g_u = coupled.column("g2_filtered"), uncoupled.column("g2_filtered")
    assert phi[np.nanargmax(g_c)] == pytest.approx(math.pi / 4)
    window = np.abs(phi - math.pi / 4) <= math.pi / 8 + 1e-12
    assert np.all(np.abs(g_u[window] - 1) <= 0.15)
    assert np.all(coupled.column("convergence_ratio")[~np.isnan(g_c)] <= 1e-2)


def test_aligned_dipoles_share_lobes():
    cfg = parse_config("experiment = spectrum_polar\nR = 2\nbeta = pi/4\np1 = 0.1\np2 = 0.1\n"
                       "theta = 0\nsweep.phi = 0, pi, 13\n")
    table = run_experiment(cfg)
    ok = ~np.isnan(table.column("s_plus"))
    sp, sm = table.column("s_plus")[ok], table.column("s_minus")[ok]
    assert np.max(np.abs(sp / sp.max() - sm / sm.max())) < 0.05


def test_analytic_compare_carries_both_shapes():
    table = run_figure_suite("figS2", grid=5)
    assert table.columns == columns_for("analytic_compare")
    flat = table.where(beta=math.pi / 2).column("analytic_shape")
    assert np.all(flat == 1.0)
    peaked = table.where(beta=0.0)
    assert peaked.column("analytic_shape")[2] == math.inf
    assert np.isfinite(peaked.column("g2_filtered")[2])


def test_trajectory_table():
    cfg = parse_config(TRAJ)
    table = run_experiment(cfg)
    assert table.columns == columns_for("trajectories")
    t = table.column("time")
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0) and len(t) == 11
    assert table.metadata["seeds"] == "3..42"
    pops = table.column("mean_rho_e1e1")
    assert np.all(np.abs(pops - table.column("me_rho_e1e1")) < 4 / math.sqrt(40))
    assert np.all(table.column("sem_re_rho_e1e2") >= 0)


def test_trajectory_seed_changes_output():
    a = run_experiment(parse_config(TRAJ))
    b = run_experiment(parse_config(TRAJ).with_seed(4))
    assert a.to_csv() != b.to_csv()


@pytest.mark.parametrize("figure_id", FIGURES)
def test_every_figure_has_presets(figure_id):
    configs = figure_configs(figure_id, grid=8)
    assert configs
    assert len({c.experiment for c in configs}) == 1
    for cfg in configs:
        # every preset survives its own text serialization
        assert parse_config(cfg.to_text()) == cfg


def test_figure_preset_parameters():
    fig2 = figure_configs("fig2b")[0]
    assert (fig2.params.R, fig2.params.beta, fig2.params.p1) == (4.0, math.pi / 3, 0.1)
    assert fig2.geometry.theta == math.pi / 2
    assert [ax.count for ax in fig2.sweeps] == [64, 64]
    fig3 = figure_configs("fig3a")
    assert {c.params.beta for c in fig3} == {0.0, math.pi / 2}
    assert all(c.trajectories.n_traj == 10_000 for c in fig3)
    assert {(c.params.beta, c.geometry.theta) for c in figure_configs("figS1")} == {
        (b, th) for b in (0.0, math.pi / 6, math.pi / 3, math.pi / 2) for th in (0.0, math.pi / 4, math.pi / 2)}


def test_unknown_figure():
    with pytest.raises(ValueError):
        figure_configs("fig9")


def test_figure_suite_writes_file_with_rerun_header(tmp_path):
    table = run_figure_suite("fig2a", grid=4, out_dir=tmp_path)
    text = (tmp_path / "fig2a.csv").read_text()
    assert "# rerun: photonstat figure fig2a --grid 4 --seed 0" in text
    assert "# config[0]: experiment = steady_state" in text
    assert read_csv(tmp_path / "fig2a.csv").columns == table.columns


def test_figS1_witness_pattern():
    table = run_figure_suite("figS1", grid=24)
    fired = {}
    for beta in (0.0, math.pi / 6, math.pi / 3, math.pi / 2):
        for theta in (0.0, math.pi / 4, math.pi / 2):
            sub = table.where(beta=beta, theta=theta)
            unbalanced = sub.column("p2_over_p1") > 1
            fired[beta, theta] = bool(np.any(sub.column("witnessed")[unbalanced] == 1.0))
    # coupled, detuned dimers seen through non-parallel dipoles
    for beta in (math.pi / 6, math.pi / 3):
        for theta in (math.pi / 4, math.pi / 2):
            assert fired[beta, theta]
    # no coupling, no detuning, or parallel dipoles: the field cannot exceed the bound
    assert not any(fired[0.0, th] for th in (0.0, math.pi / 4, math.pi / 2))
    assert not any(fired[math.pi / 2, th] for th in (0.0, math.pi / 4, math.pi / 2))
    assert not any(fired[b, 0.0] for b in (math.pi / 6, math.pi / 3))
