"""Simulate, infer and report steps of an experiment, each writing into a run directory.

Run directory layout::

    config.yaml                 byte copy of the config file that was used
    resolved_config.yaml        the config after ``--set``/``--seed`` overrides
    observations.csv (+ .meta.json)
    truth.csv (+ .meta.json)    noise-free series, absent for ingested data
    posterior_trace.csv
    snapshots.csv               only with ``--snapshots``
    run.json                    RunRecord manifest
    report/wd_comparison.csv
    report/density_<kind>_t<step>.csv
"""

import csv
import json
import shutil
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..density import DegenerateSpreadWarning, HistogramSpec, empirical, kde, write_grid_csv
from ..exceptions import DegenerateSimulation, MissingRun, ParseError
from ..models.base import ObservationSeries, observe, sidecar_path
from ..ot import DiscreteDistribution, wasserstein_distance
from ..smcs import PosteriorTrace, run
from .config import load_config, parse_config

__all__ = ["RunRecord", "cli_simulate", "cli_infer", "cli_report", "ingest_external",
           "load_run_config"]

CONFIG_COPY = "config.yaml"
RESOLVED = "resolved_config.yaml"
OBSERVATIONS = "observations.csv"
TRUTH = "truth.csv"
TRACE = "posterior_trace.csv"
SNAPSHOTS = "snapshots.csv"
MANIFEST = "run.json"
REPORT_DIR = "report"
DENSITY_KINDS = ("truth", "observed", "prior", "posterior")


def _fmt(x):
    return format(float(x), ".17g")


@dataclass
class RunRecord:
    """Manifest of a run directory; paths are relative to it."""

    config: str = CONFIG_COPY
    resolved_config: str = RESOLVED
    observations: str = OBSERVATIONS
    truth: str = None
    trace: str = None
    snapshots: str = None
    density_grids: list = field(default_factory=list)
    wd_comparison: str = None
    status: str = "created"
    summary: dict = field(default_factory=dict)

    def write(self, out_dir):
        path = Path(out_dir) / MANIFEST
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def read(cls, out_dir):
        path = Path(out_dir) / MANIFEST
        if not path.is_file():
            raise MissingRun(f"{out_dir}: no {MANIFEST}; run 'infer' first")
        with open(path) as fh:
            return cls(**json.load(fh))

    def missing_files(self, out_dir):
        out_dir = Path(out_dir)
        names = [self.config, self.resolved_config, self.observations, self.truth, self.trace,
                 self.snapshots, self.wd_comparison, *self.density_grids]
        return [n for n in names if n is not None and not (out_dir / n).is_file()]


def _stage_config(config_path, overrides, out_dir, seed_field=None, seed=None):
    """Load a config, copy it into ``out_dir`` and write its resolved form."""
    overrides = list(overrides or ())
    if seed is not None:
        overrides.append(f"{seed_field}={int(seed)}")
    cfg, raw = load_config(config_path, overrides)
    out_dir = Path(out_dir if out_dir is not None else cfg.output or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_COPY).write_bytes(raw)
    (out_dir / RESOLVED).write_text(cfg.dumps())
    return cfg, out_dir


def load_run_config(out_dir):
    path = Path(out_dir) / RESOLVED
    if not path.is_file():
        raise MissingRun(f"{out_dir}: no {RESOLVED}")
    return parse_config(yaml.safe_load(path.read_text()))


def _copy_series(src, dst):
    src, dst = Path(src), Path(dst)
    if src.resolve() != dst.resolve():
        shutil.copyfile(src, dst)
        shutil.copyfile(sidecar_path(src), sidecar_path(dst))


# ------------------------------------------------------------- simulate

def cli_simulate(config_path, out_dir=None, overrides=(), seed=None):
    """Simulate ground truth at the fixed values and write noisy and noise-free series.

    ``seed`` replaces the config's ``observation_seed``.  Returns the output
    directory.
    """
    cfg, out_dir = _stage_config(config_path, overrides, out_dir, "observation_seed", seed)
    model = cfg.build_model()
    traj = model.simulate({}, cfg.T)
    check = model.validate(traj)
    if not check.ok:
        raise DegenerateSimulation(f"ground truth is degenerate at frame {check.frame}: "
                                   f"{check.reason}")
    truth = ObservationSeries([empirical(f) for f in traj.frames], traj.frame_times, 0.0)
    noisy = [observe(f, cfg.noise_sigma, np.random.default_rng([cfg.observation_seed, t]))
             for t, f in enumerate(traj.frames, start=1)]
    obs = ObservationSeries(noisy, traj.frame_times, cfg.noise_sigma)
    truth.to_csv(out_dir / TRUTH)
    obs.to_csv(out_dir / OBSERVATIONS)
    RunRecord(truth=TRUTH, status="simulated").write(out_dir)
    return out_dir


# ---------------------------------------------------------------- infer

class _StepWriter:
    """Appends trace (and snapshot) rows as steps complete."""

    def __init__(self, out_dir, names, snapshots):
        self.trace_fh = open(out_dir / TRACE, "w", newline="")
        self.trace = csv.writer(self.trace_fh, lineterminator="\n")
        self.trace.writerow(PosteriorTrace.CSV_HEADER)
        self.snap_fh = self.snap = None
        if snapshots:
            self.snap_fh = open(out_dir / SNAPSHOTS, "w", newline="")
            self.snap = csv.writer(self.snap_fh, lineterminator="\n")
            self.snap.writerow(["t", "sample_index", "weight", *names])
        self.trace_fh.flush()

    def __call__(self, trace, record):
        self.trace.writerows(trace.rows(record))
        self.trace_fh.flush()
        if self.snap is not None:
            t, weights, samples = trace.snapshots[-1]
            for j, (w, s) in enumerate(zip(weights, samples)):
                self.snap.writerow([t, j, _fmt(w), *(_fmt(v) for v in s)])
            self.snap_fh.flush()
            trace.snapshots.clear()

    def close(self):
        self.trace_fh.close()
        if self.snap_fh is not None:
            self.snap_fh.close()


def cli_infer(config_path, obs_path, out_dir=None, overrides=(), seed=None, snapshots=False):
    """Run the sampler on an observation series; returns the :class:`RunRecord`.

    The observations (and a ``truth.csv`` sitting next to them) are copied into
    the run directory so that it is self-contained.
    """
    cfg, out_dir = _stage_config(config_path, overrides, out_dir, "seed", seed)
    obs_path = Path(obs_path)
    obs = ObservationSeries.from_csv(obs_path)
    model = cfg.build_model()
    if obs.dim != model.dim:
        raise ParseError(f"{obs_path}: observations are {obs.dim}D, model {cfg.model} is "
                         f"{model.dim}D")
    if len(obs) < cfg.T:
        raise ParseError(f"{obs_path}: {len(obs)} observation steps, config asks for T={cfg.T}")
    _copy_series(obs_path, out_dir / OBSERVATIONS)
    record = RunRecord(trace=TRACE, snapshots=SNAPSHOTS if snapshots else None,
                       status="running")
    truth_src = obs_path.with_name(TRUTH)
    if truth_src.is_file():
        _copy_series(truth_src, out_dir / TRUTH)
        record.truth = TRUTH
    record.write(out_dir)

    smcs_cfg = cfg.smcs_config()
    writer = _StepWriter(out_dir, smcs_cfg.prior.names, snapshots)
    try:
        trace = run(smcs_cfg, obs, model, on_step=writer, snapshots=snapshots, horizon=cfg.T)
    except Exception as exc:
        record.status = "aborted"
        record.summary = {"error": f"{type(exc).__name__}: {exc}"}
        record.write(out_dir)
        raise
    finally:
        writer.close()
    record.status = "complete"
    record.summary = {
        "steps": len(trace),
        "posterior_mean": trace.final_mean(),
        "posterior_std": trace.final_std(),
        "truth": cfg.truth(),
        "bandwidths": [float(h) for h in trace.schedule.as_array()],
    }
    record.write(out_dir)
    return record


# --------------------------------------------------------------- report

def _wd(a_points, b):
    return wasserstein_distance(DiscreteDistribution(a_points), b)


def _reference_frames(model, theta, steps, label):
    traj = model.simulate(theta, max(steps))
    check = model.validate(traj)
    if not check.ok:
        raise DegenerateSimulation(f"{label} simulation is degenerate at frame {check.frame}: "
                                   f"{check.reason}")
    return traj


def cli_report(out_dir, steps=None):
    """Compare prior-mean and posterior-mean simulations against the observations.

    Writes ``report/wd_comparison.csv`` with columns ``step,time,wd0,wd1,wd2``
    (observed vs truth, vs prior-mean and vs posterior-mean simulation) and a
    KDE grid per selected step and cloud kind.  Returns the updated record.
    """
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise MissingRun(f"{out_dir}: not a run directory")
    record = RunRecord.read(out_dir)
    if record.status != "complete" or record.trace is None:
        raise MissingRun(f"{out_dir}: inference has not completed (status {record.status!r})")
    cfg = load_run_config(out_dir)
    obs = ObservationSeries.from_csv(out_dir / record.observations)
    truth = ObservationSeries.from_csv(out_dir / record.truth) if record.truth else None
    table = PosteriorTrace.read_csv(out_dir / record.trace)
    names = [p.name for p in cfg.infer]
    post_mean = {n: float(table[n]["mean"][-1]) for n in names}
    prior_mean = dict(zip(names, (float(v) for v in cfg.prior().mean())))

    steps = sorted(set(int(s) for s in steps)) if steps else cfg.report_steps()
    T = int(table[names[0]]["t"][-1])
    bad = [s for s in steps if not 1 <= s <= T]
    if bad:
        raise ParseError(f"report steps {bad} outside 1..{T}")

    model = cfg.build_model()
    prior_traj = _reference_frames(model, prior_mean, steps, "prior-mean")
    post_traj = _reference_frames(model, post_mean, steps, "posterior-mean")

    report_dir = out_dir / REPORT_DIR
    report_dir.mkdir(exist_ok=True)
    lower, upper = model.bounds
    spec = HistogramSpec.covering(lower, upper, cfg.grid_counts())
    rows, grids = [], []
    for s in steps:
        y = obs.observations[s - 1]
        wd0 = wasserstein_distance(y, truth.observations[s - 1]) if truth else float("nan")
        wd1 = _wd(prior_traj.frames[s - 1], y)
        wd2 = _wd(post_traj.frames[s - 1], y)
        rows.append([s, _fmt(obs.times[s - 1]), _fmt(wd0), _fmt(wd1), _fmt(wd2)])
        clouds = {
            "truth": truth.observations[s - 1].points if truth else None,
            "observed": y.points,
            "prior": prior_traj.frames[s - 1],
            "posterior": post_traj.frames[s - 1],
        }
        for kind in DENSITY_KINDS:
            pts = clouds[kind]
            if pts is None or len(pts) < 2:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateSpreadWarning)
                grid = kde(pts, spec)
            name = f"{REPORT_DIR}/density_{kind}_t{s:03d}.csv"
            write_grid_csv(grid, out_dir / name)
            grids.append(name)

    wd_name = f"{REPORT_DIR}/wd_comparison.csv"
    with open(out_dir / wd_name, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "time", "wd0", "wd1", "wd2"])
        writer.writerows(rows)

    record.density_grids = grids
    record.wd_comparison = wd_name
    record.summary = dict(record.summary)
    record.summary["report_steps"] = steps
    record.summary["wd"] = {str(r[0]): {"wd0": float(r[2]), "wd1": float(r[3]),
                                        "wd2": float(r[4])} for r in rows}
    record.write(out_dir)
    return record


def read_wd_comparison(path):
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


# --------------------------------------------------------------- ingest

def ingest_external(points_path, meta_path=None, out_dir=None):
    """Parse an external point CSV into an :class:`ObservationSeries`.

    Returns ``(series, counts)`` with the per-step point counts.  With
    ``out_dir`` the series is rewritten there as ``observations.csv``.
    """
    series = ObservationSeries.from_csv(points_path, meta_path)
    counts = [len(o) for o in series.observations]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        series.to_csv(out_dir / OBSERVATIONS)
    return series, counts
