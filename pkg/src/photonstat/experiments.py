"""Parameter sweeps over the dimer observables and the figure presets.

Every grid point is evaluated independently from its own resolved
parameters, so a sweep row equals a single-point run with the same values
and the output does not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CONFIG_PREFIX,
    ExperimentConfig,
    SensorSettings,
    SweepAxis,
    TrajectorySettings,
)
from .correlations import (
    SensorConfig,
    analytic_filtered_g2_shape,
    coherence_witness,
    detected_intensity,
    filtered_g2,
    filtered_spectrum_result,
    near_null,
    single_excitation_spectrum_approx,
)
from .dimer_model import (
    E1,
    E2,
    EE,
    DetectionGeometry,
    DimerParams,
    analytic_steady_correlators,
    build_dimer_system,
    excitonic_coherence,
    excitonic_structure,
    field_operator,
    field_weights,
)
from .quantum_core import build_liouvillian, evolve, ket2dm, mcwf_ensemble, steady_state

log = logging.getLogger(__name__)

WORKERS_ENV = "PHOTONSTAT_WORKERS"
AXIS_COLUMNS = ["beta", "theta", "phi", "p2_over_p1"]
FIGURES = ("fig2a", "fig2b", "fig3a", "fig3c", "fig3d", "fig3e", "figS1", "figS2")


class ExperimentError(RuntimeError):
    """A numerical failure, annotated with the grid point that caused it."""


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row has {len(row)} values for {len(self.columns)} columns")

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([row[k] for row in self.rows], dtype=float)

    def where(self, **equal) -> "ResultTable":
        """Rows whose named columns equal the given values (to 1e-12)."""
        idx = [self.columns.index(k) for k in equal]
        keep = [row for row in self.rows
                if all(abs(row[i] - v) <= 1e-12 for i, v in zip(idx, equal.values()))]
        return ResultTable(list(self.columns), keep, dict(self.metadata))

    def header_lines(self) -> list[str]:
        lines = [f"# photonstat {self.metadata.get('engine_version', __version__)}"]
        if "figure" in self.metadata:
            m = self.metadata
            lines.append(f"# figure: {m['figure']}")
            lines.append(f"# rerun: photonstat figure {m['figure']} --grid {m['grid']} --seed {m['seed']}")
            for k, cfg in enumerate(m["configs"]):
                lines += [f"# config[{k}]: {key} = {value}" for key, value in cfg.items()]
        else:
            lines += [f"{CONFIG_PREFIX} {key} = {value}" for key, value in self.metadata["config"].items()]
        if "seeds" in self.metadata:
            lines.append(f"# seeds: {self.metadata['seeds']}")
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def write(self, path, sidecar: bool = True) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        if sidecar:
            path.with_suffix(".json").write_text(
                json.dumps({"metadata": self.metadata, "columns": self.columns}, indent=2) + "\n")
        return path


def read_csv(path) -> ResultTable:
    """Read the data part of a results CSV (metadata lines are skipped)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    rows = [[float(v) for v in row] for row in reader]
    return ResultTable(columns, rows)


@lru_cache(maxsize=4096)
def dimer_steady_state(params: DimerParams) -> np.ndarray:
    return steady_state(build_liouvillian(build_dimer_system(params)))


def _axis_values(params: DimerParams, geom: DetectionGeometry) -> list[float]:
    ratio = params.p2 / params.p1 if params.p1 > 0 else math.nan
    return [params.beta, geom.theta, geom.phi, ratio]


def _resolve_point(cfg: ExperimentConfig, values: dict) -> tuple[DimerParams, DetectionGeometry]:
    params, geom = cfg.params, cfg.geometry
    for name, v in values.items():
        if name == "phi":
            geom = geom.replace(phi=v)
        elif name == "theta":
            geom = geom.replace(theta=v)
        elif name == "beta":
            params = params.replace(beta=min(max(v, 0.0), math.pi / 2))
        elif name == "p2_over_p1":
            params = params.replace(p2=v * params.p1)
    return params, geom


def _sensor_config(sensor: SensorSettings, params: DimerParams) -> SensorConfig:
    exc = excitonic_structure(params)
    return SensorConfig(
        omega1=exc.omega_plus if sensor.omega1 is None else sensor.omega1,
        omega2=exc.omega_minus if sensor.omega2 is None else sensor.omega2,
        gamma_filter=sensor.gamma_filter,
        epsilon=sensor.epsilon,
    )


STEADY_COLUMNS = ["p1", "p2", "n1", "n2", "coh_re", "coh_im", "nn", "pop_imbalance",
                  "exc_coh_re", "exc_coh_im", "exc_coh_abs",
                  "n1_analytic", "n2_analytic", "coh_re_analytic", "coh_im_analytic",
                  "nn_analytic", "pop_imbalance_analytic"]
G2_COLUMNS = ["intensity", "g2", "margin", "witnessed", "exc_coh_abs"]
SPECTRUM_COLUMNS = ["s_plus", "s_minus", "s_plus_approx", "s_minus_approx",
                    "epsilon_used", "convergence_ratio"]
FILTERED_COLUMNS = ["g2_filtered", "s1", "s2", "epsilon_used", "convergence_ratio"]
ANALYTIC_COLUMNS = ["analytic_shape"] + FILTERED_COLUMNS
TRAJ_COLUMNS = ["time",
                "traj0_rho_e1e1", "traj0_rho_e2e2", "traj0_re_rho_e1e2", "traj0_im_rho_e1e2",
                "mean_rho_e1e1", "mean_rho_e2e2", "mean_rho_dd",
                "mean_re_rho_e1e2", "mean_im_rho_e1e2", "sem_re_rho_e1e2", "sem_im_rho_e1e2",
                "me_rho_e1e1", "me_rho_e2e2", "me_rho_dd", "me_re_rho_e1e2", "me_im_rho_e1e2"]

_COLUMNS = {
    "steady_state": STEADY_COLUMNS,
    "g2_map": G2_COLUMNS,
    "spectrum_polar": SPECTRUM_COLUMNS,
    "filtered_g2_scan": FILTERED_COLUMNS,
    "analytic_compare": ANALYTIC_COLUMNS,
    "trajectories": TRAJ_COLUMNS,
}


def columns_for(experiment: str) -> list[str]:
    return AXIS_COLUMNS + _COLUMNS[experiment]


def _steady_row(params, geom):
    rho = dimer_steady_state(params)
    exc = excitonic_structure(params)
    a = analytic_steady_correlators(params)
    x = excitonic_coherence(rho, exc)
    return [params.p1, params.p2,
            rho[E1, E1].real + rho[EE, EE].real, rho[E2, E2].real + rho[EE, EE].real,
            rho[E2, E1].real, rho[E2, E1].imag, rho[EE, EE].real,
            rho[E1, E1].real - rho[E2, E2].real,
            x.real, x.imag, abs(x),
            a.n1, a.n2, a.coh.real, a.coh.imag, a.nn, a.pop_imbalance]


def _g2_row(params, geom):
    rho = dimer_steady_state(params)
    e1, e2 = field_weights(geom)
    intensity = detected_intensity(rho, e1, e2)
    x = abs(excitonic_coherence(rho, excitonic_structure(params)))
    if near_null(rho, e1, e2, geom.theta, geom.d1, geom.d2):
        return [intensity, math.nan, math.nan, math.nan, x]
    witnessed, margin = coherence_witness(rho, e1, e2)
    return [intensity, margin + 1.0, margin, float(witnessed), x]


def _spectrum_row(params, geom, sensor):
    rho = dimer_steady_state(params)
    e1, e2 = field_weights(geom)
    exc = excitonic_structure(params)
    approx = [single_excitation_spectrum_approx(exc, e1, e2, +1),
              single_excitation_spectrum_approx(exc, e1, e2, -1)]
    if near_null(rho, e1, e2, geom.theta, geom.d1, geom.d2):
        return [math.nan, math.nan] + approx + [math.nan, math.nan]
    system = build_dimer_system(params)
    op = field_operator(e1, e2)
    cfg = _sensor_config(sensor, params)
    sp, eps_p, r_p = filtered_spectrum_result(system, op, exc.omega_plus, cfg)
    sm, eps_m, r_m = filtered_spectrum_result(system, op, exc.omega_minus, cfg)
    return [sp, sm] + approx + [min(eps_p, eps_m), max(r_p, r_m)]


def _filtered_row(params, geom, sensor):
    rho = dimer_steady_state(params)
    e1, e2 = field_weights(geom)
    if near_null(rho, e1, e2, geom.theta, geom.d1, geom.d2):
        return [math.nan] * len(FILTERED_COLUMNS)
    res = filtered_g2(build_dimer_system(params), field_operator(e1, e2),
                      _sensor_config(sensor, params))
    return [res.value, res.s1, res.s2, res.epsilon_used, res.convergence_ratio]


def _analytic_row(params, geom, sensor):
    beta_case = 0.0 if params.beta < math.pi / 4 else math.pi / 2
    shape = analytic_filtered_g2_shape(beta_case, geom.theta, geom.phi)
    return [shape] + _filtered_row(params, geom, sensor)


def evaluate_point(experiment: str, params: DimerParams, geom: DetectionGeometry,
                   sensor: SensorSettings | None = None) -> list[float]:
    """One output row (axis columns first) for a non-trajectory experiment."""
    head = _axis_values(params, geom)
    if experiment == "steady_state":
        return head + _steady_row(params, geom)
    if experiment == "g2_map":
        return head + _g2_row(params, geom)
    if experiment == "spectrum_polar":
        return head + _spectrum_row(params, geom, sensor)
    if experiment == "filtered_g2_scan":
        return head + _filtered_row(params, geom, sensor)
    if experiment == "analytic_compare":
        return head + _analytic_row(params, geom, sensor)
    raise ValueError(f"no point evaluator for {experiment!r}")


def _point_task(task):
    index, values, experiment, params, geom, sensor = task
    try:
        return evaluate_point(experiment, params, geom, sensor)
    except Exception as exc:
        where = ", ".join(f"{k}={v:.6g}" for k, v in values.items()) or "single point"
        raise ExperimentError(f"grid point {index} ({where}): {type(exc).__name__}: {exc}") from None


def _grid(cfg: ExperimentConfig) -> list[dict]:
    axes = list(cfg.sweeps)
    if not axes:
        return [{}]
    return [dict(zip([a.name for a in axes], combo))
            for combo in product(*(a.values() for a in axes))]


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _trajectory_chunk(task):
    system, psi0, t_max, dt, seeds, record_every = task
    return mcwf_ensemble(system, psi0, t_max, dt, seeds=seeds, record_every=record_every)


def _trajectory_rows(params, geom, traj: TrajectorySettings, workers: int):
    system = build_dimer_system(params)
    psi0 = np.array([1, 0, 0, 0], dtype=complex)
    record_every = max(1, int(round(traj.record_dt / traj.dt)))
    seeds = traj.seed + np.arange(traj.n_traj)
    chunks = [c for c in np.array_split(seeds, max(1, min(workers, traj.n_traj))) if c.size]
    tasks = [(system, psi0, traj.t_max, traj.dt, c, record_every) for c in chunks]
    parts = _map(_trajectory_chunk, tasks, workers)
    times = parts[0].times
    states = np.concatenate([p.states for p in parts], axis=0)
    n = states.shape[0]

    def elem(i, j):
        return states[:, :, i] * states[:, :, j].conj()

    e11, e22, edd, e12 = elem(E1, E1).real, elem(E2, E2).real, elem(EE, EE).real, elem(E1, E2)
    sem = (lambda x: x.std(axis=0, ddof=1) / math.sqrt(n)) if n > 1 else (lambda x: np.zeros(x.shape[1]))
    me = evolve(system, ket2dm(psi0), times)
    head = _axis_values(params, geom)
    rows = []
    for k, t in enumerate(times):
        rows.append(head + [
            t, e11[0, k], e22[0, k], e12[0, k].real, e12[0, k].imag,
            e11[:, k].mean(), e22[:, k].mean(), edd[:, k].mean(),
            e12[:, k].real.mean(), e12[:, k].imag.mean(),
            sem(e12.real)[k], sem(e12.imag)[k],
            me[k][E1, E1].real, me[k][E2, E2].real, me[k][EE, EE].real,
            me[k][E1, E2].real, me[k][E1, E2].imag,
        ])
    return rows


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   write: bool = True, sidecar: bool = True) -> ResultTable:
    """Evaluate ``cfg`` over its sweep grid, write ``cfg.output`` if set and
    return the table. Rows are ordered by grid index (first axis slowest)."""
    workers = default_workers() if workers is None else workers
    points = _grid(cfg)
    metadata = {"engine_version": __version__, "config": cfg.to_dict()}
    if cfg.experiment == "trajectories":
        rows = []
        for index, values in enumerate(points):
            params, geom = _resolve_point(cfg, values)
            try:
                rows += _trajectory_rows(params, geom, cfg.trajectories, workers)
            except Exception as exc:
                raise ExperimentError(f"grid point {index} ({values}): {type(exc).__name__}: {exc}") from None
        t = cfg.trajectories
        metadata["seeds"] = f"{t.seed}..{t.seed + t.n_traj - 1}"
    else:
        tasks = []
        for index, values in enumerate(points):
            params, geom = _resolve_point(cfg, values)
            tasks.append((index, values, cfg.experiment, params, geom, cfg.sensor))
        rows = _map(_point_task, tasks, workers)
    table = ResultTable(columns_for(cfg.experiment), rows, metadata)
    if write and cfg.output:
        table.write(cfg.output, sidecar=sidecar)
        log.info("wrote %s (%d rows)", cfg.output, len(rows))
    return table


FIG2_PARAMS = DimerParams(R=4.0, beta=math.pi / 3, p1=0.1, p2=0.1)
FIG3_PARAMS = DimerParams(R=2.0, beta=0.0, p1=0.1, p2=0.1)
FIG3_SENSOR = SensorSettings(gamma_filter=1.0)
P2_RATIO_RANGE = (1.0, 40.0)


def figure_configs(figure_id: str, grid: int = 64, seed: int = 0) -> list[ExperimentConfig]:
    """The preset configurations behind each figure."""
    ortho = DetectionGeometry(theta=math.pi / 2)
    phi_full = SweepAxis("phi", 0.0, math.pi, grid)
    phi_quarter = SweepAxis("phi", 0.0, math.pi / 2, grid)
    ratio = SweepAxis("p2_over_p1", *P2_RATIO_RANGE, grid)

    if figure_id == "fig2a":
        return [ExperimentConfig("steady_state", FIG2_PARAMS, ortho, sweeps=(ratio,))]
    if figure_id == "fig2b":
        return [ExperimentConfig("g2_map", FIG2_PARAMS, ortho, sweeps=(phi_full, ratio))]
    if figure_id == "fig3a":
        traj = TrajectorySettings(n_traj=10000, t_max=15.0, dt=1e-3, seed=seed, record_dt=0.1)
        return [ExperimentConfig("trajectories", FIG3_PARAMS.replace(beta=b), ortho, trajectories=traj)
                for b in (0.0, math.pi / 2)]
    if figure_id == "fig3c":
        return [ExperimentConfig("spectrum_polar", FIG3_PARAMS.replace(beta=b),
                                 DetectionGeometry(theta=th), sensor=FIG3_SENSOR, sweeps=(phi_full,))
                for b in (0.0, math.pi / 4, math.pi / 2) for th in (0.0, math.pi / 4, math.pi / 2)]
    if figure_id == "fig3d":
        return [ExperimentConfig("filtered_g2_scan", FIG3_PARAMS, ortho, sensor=FIG3_SENSOR,
                                 sweeps=(SweepAxis("beta", 0.0, math.pi / 2, 9), phi_quarter))]
    if figure_id == "fig3e":
        return [ExperimentConfig("filtered_g2_scan", FIG3_PARAMS.replace(beta=b), ortho,
                                 sensor=FIG3_SENSOR, sweeps=(phi_quarter,))
                for b in (0.0, math.pi / 2)]
    if figure_id == "figS1":
        return [ExperimentConfig("g2_map", FIG2_PARAMS.replace(beta=b), DetectionGeometry(theta=th),
                                 sweeps=(phi_full, ratio))
                for b in (0.0, math.pi / 6, math.pi / 3, math.pi / 2)
                for th in (0.0, math.pi / 4, math.pi / 2)]
    if figure_id == "figS2":
        return [ExperimentConfig("analytic_compare", FIG3_PARAMS.replace(beta=b), ortho,
                                 sensor=FIG3_SENSOR, sweeps=(phi_quarter,))
                for b in (0.0, math.pi / 2)]
    raise ValueError(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}")


def run_figure_suite(figure_id: str, grid: int = 64, seed: int = 0, workers: int | None = None,
                     out_dir=None, sidecar: bool = True) -> ResultTable:
    """Run every configuration of ``figure_id`` and concatenate the rows."""
    configs = figure_configs(figure_id, grid, seed)
    rows = []
    for cfg in configs:
        rows += run_experiment(cfg, workers=workers, write=False).rows
    metadata = {"engine_version": __version__, "figure": figure_id, "grid": grid, "seed": seed,
                "configs": [c.to_dict() for c in configs]}
    table = ResultTable(columns_for(configs[0].experiment), rows, metadata)
    if out_dir is not None:
        table.write(Path(out_dir) / f"{figure_id}.csv", sidecar=sidecar)
    return table
