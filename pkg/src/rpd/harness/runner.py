"""Experiment runner: seeded runs, flat-file records, comparisons and sweeps.

A run writes three files sharing a stem:

``<stem>.csv``
    one row per iteration (row 0 is the starting point) in the fixed
    column order of ``RECORD_COLUMNS`` followed by ``#`` footer lines;
``<stem>.json``
    configuration, environment, condition report and final iterate;
``<stem>.timing.json``
    wall-clock time, kept apart so the first two files are byte-identical
    across reruns of the same spec and seed.
"""

from __future__ import annotations

import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from .. import __version__
from .. import distributed as dist
from .. import pd_engine as pde
from ..activation import REQUIRED_COUPLING, ActivationSchedule
from ..errors import ErrorInjector
from ..exceptions import ReferenceUnavailable, SpecError, StructureError
from ..pd_engine import RECORD_COLUMNS, ConditionReport
from .reference import ReferenceSolution
from .spec import ProblemSpec, canonical_json
from .zoo import build_instance

GAP_THRESHOLDS = (1e-2, 1e-4, 1e-6)
_INT_COLUMNS = {"n", "active_blocks", "cum_block_evals"}


def _fmt(col: str, x) -> str:
    if col in _INT_COLUMNS:
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(a):
    """Nested lists of floats with non-finite entries spelled as strings."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        x = float(arr)
        return x if math.isfinite(x) else str(x)
    return [_jsonable(b) for b in arr]


def _unjson(a) -> np.ndarray:
    def conv(x):
        return [conv(y) for y in x] if isinstance(x, list) else float(x)
    return np.array(conv(a), dtype=float)


def environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "rpd": __version__,
            "platform": platform.platform()}


@dataclass
class RunRecord:
    """Trajectory and metadata of one run.

    ``x`` is the final primal iterate: the concatenated primal blocks for
    primal-dual problems and the ``(m, d)`` agent array for distributed
    ones.
    """

    spec: ProblemSpec
    seed: int
    rows: list
    stop_reason: str
    iterations: int
    condition_forced: bool
    config_hash: str
    report: Optional[dict]
    x: np.ndarray
    v: list = field(default_factory=list)
    wall_time: float = math.nan
    paths: dict = field(default_factory=dict)

    @property
    def is_distributed(self) -> bool:
        return self.spec.is_distributed

    def column(self, name: str) -> np.ndarray:
        k = RECORD_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def csv_text(self, timing_name: str = "") -> str:
        buf = io.StringIO()
        buf.write(",".join(RECORD_COLUMNS) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(c, x) for c, x in zip(RECORD_COLUMNS, row)) + "\n")
        buf.write(f"# stop_reason={self.stop_reason}\n")
        buf.write(f"# iterations={self.iterations}\n")
        buf.write(f"# condition_forced={'true' if self.condition_forced else 'false'}\n")
        buf.write(f"# config_hash={self.config_hash}\n")
        buf.write(f"# wall_time_file={timing_name}\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"config": self.spec.to_dict(), "seed": self.seed,
                "config_hash": self.config_hash, "stop_reason": self.stop_reason,
                "iterations": self.iterations, "condition_forced": self.condition_forced,
                "report": self.report, "environment": environment(),
                "final": {"x": _jsonable(self.x), "v": [_jsonable(b) for b in self.v]}}

    def write(self, out_dir, stem: Optional[str] = None) -> dict:
        """Write the CSV, the JSON sidecar and the timing file; return their paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or default_stem(self.spec, self.config_hash)
        paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json",
                 "timing": out / f"{stem}.timing.json"}
        paths["csv"].write_text(self.csv_text(paths["timing"].name), encoding="utf-8")
        paths["json"].write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True) + "\n",
                                 encoding="utf-8")
        paths["timing"].write_text(json.dumps({"wall_time_s": self.wall_time}) + "\n",
                                   encoding="utf-8")
        self.paths = paths
        return paths


def default_stem(spec: ProblemSpec, config_hash: str) -> str:
    return f"{spec.family}-{spec.algorithm}-{config_hash[:12]}"


def load_record(csv_path) -> RunRecord:
    """Read a record back from its CSV and the JSON sidecar next to it."""
    csv_path = Path(csv_path)
    side = csv_path.with_suffix(".json")
    try:
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        meta = json.loads(side.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read record {csv_path}: {exc}") from exc
    if not lines or lines[0] != ",".join(RECORD_COLUMNS):
        raise SpecError(f"{csv_path}: unexpected header")
    rows = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            continue
        vals = ln.split(",")
        rows.append(tuple(int(v) if c in _INT_COLUMNS else float(v)
                          for c, v in zip(RECORD_COLUMNS, vals)))
    timing = csv_path.with_name(csv_path.stem + ".timing.json")
    wall = math.nan
    if timing.exists():
        wall = float(json.loads(timing.read_text(encoding="utf-8"))["wall_time_s"])
    return RunRecord(ProblemSpec.from_dict(meta["config"]), meta["seed"], rows,
                     meta["stop_reason"], meta["iterations"], meta["condition_forced"],
                     meta["config_hash"], meta["report"], _unjson(meta["final"]["x"]),
                     [_unjson(b) for b in meta["final"]["v"]], wall,
                     {"csv": csv_path, "json": side, "timing": timing})


# ---------------------------------------------------------------- running

def schedule_for(spec: ProblemSpec, structure) -> ActivationSchedule:
    act = spec["activation"]
    return ActivationSchedule(act["kind"], structure, REQUIRED_COUPLING[spec.algorithm],
                              probs=act.get("prob"))


def injectors_for(spec: ProblemSpec) -> dict:
    err = spec["errors"]
    if err["kind"] == "none":
        return {}
    if err["kind"] == "power":
        inj = ErrorInjector.power(err["C"], err["s"])
    else:
        inj = ErrorInjector.geometric(err["C"], err["rho"])
    chans = "abcd" if err["channels"] == "all" else err["channels"]
    return {c: inj for c in chans}


def check_spec(spec: ProblemSpec) -> ConditionReport:
    """Condition report for the problem and algorithm of ``spec``."""
    prob = build_instance(spec).problem
    if spec.is_distributed:
        return dist.check(prob, spec.algorithm)
    return pde.check(prob, spec.algorithm)


def execute(spec: ProblemSpec, seed: int, force: bool = False) -> RunRecord:
    """Run ``spec`` in memory; raises ``ConditionError`` unless ``force``."""
    prob = build_instance(spec).problem
    sched = schedule_for(spec, prob.structure)
    stop = spec["stop"]
    kw = dict(seed=seed, lam=spec["lambda"], injectors=injectors_for(spec),
              max_iters=stop["max_iters"], tol=stop["tol"], window=stop["window"], force=force)
    t0 = time.perf_counter()
    if spec.is_distributed:
        res = dist.run_dist(prob, spec.algorithm, sched, **kw)
        x, v = res.state.x.copy(), list(res.state.v) + list(res.state.ve)
    else:
        res = pde.run_pd(prob, spec.algorithm, sched, **kw)
        x = np.concatenate(res.state.x.blocks)
        v = list(res.state.v.blocks)
    wall = time.perf_counter() - t0
    return RunRecord(spec, seed, res.rows, res.stop_reason, res.iterations,
                     res.condition_forced, spec.config_hash(seed),
                     res.report.to_dict() if res.report is not None else None, x, v, wall)


def run_experiment(spec: ProblemSpec, seed: Optional[int] = None, force: bool = False,
                   out=None, stem: Optional[str] = None) -> RunRecord:
    """Run ``spec`` and, when ``out`` is given, write the record files there.

    The seed falls back to the ``seed`` field and then to ``RPD_SEED``.
    """
    seed = spec.resolve_seed(seed, os.environ)
    rec = execute(spec, seed, force)
    if out is not None:
        rec.write(out, stem)
    return rec


# ---------------------------------------------------------------- comparison

@dataclass
class Comparison:
    """Final objective gap, final distance to ``x*`` and hitting iterations.

    ``iters_to_gap`` maps each threshold to the first row index whose
    absolute objective gap is below it (``None`` if never reached).
    """

    final_gap: float
    final_distance: float
    iters_to_gap: dict

    def to_dict(self) -> dict:
        def num(x):
            return x if x is None or math.isfinite(x) else str(x)
        return {"final_gap": num(self.final_gap), "final_distance": num(self.final_distance),
                "iters_to_gap": {format(k, "g"): v for k, v in self.iters_to_gap.items()}}


def compare(record: RunRecord, reference: Optional[ReferenceSolution],
            thresholds: Sequence[float] = GAP_THRESHOLDS) -> Comparison:
    """Compare a record with a reference solution.

    The distance is ``||x - x*||`` for primal-dual records and
    ``max_i ||x_i - x*||`` for distributed ones.
    """
    if reference is None:
        raise ReferenceUnavailable("no reference solution to compare with")
    xs = np.asarray(reference.x, dtype=float).reshape(-1)
    x = np.asarray(record.x, dtype=float)
    if record.is_distributed:
        if x.ndim != 2 or x.shape[1] != xs.size:
            raise StructureError(f"agent dimension {x.shape[-1]} does not match "
                                 f"reference dimension {xs.size}")
        distance = float(np.max(np.linalg.norm(x - xs, axis=1)))
    else:
        if x.size != xs.size:
            raise StructureError(f"record dimension {x.size} does not match "
                                 f"reference dimension {xs.size}")
        distance = float(np.linalg.norm(x.reshape(-1) - xs))
    gaps = np.abs(record.column("objective") - reference.objective)
    hits = {}
    for t in thresholds:
        idx = np.flatnonzero(gaps < t)
        hits[t] = int(idx[0]) if idx.size else None
    return Comparison(float(gaps[-1]), distance, hits)


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepEntry:
    """One sweep point.

    ``cost_per_iter`` is the observed mean number of active blocks per
    iteration and ``expected_cost`` its exact expectation from the
    schedule marginals.
    """

    value: object
    stop_reason: str
    iterations: int
    cost_per_iter: float
    expected_cost: float
    final_objective: float
    csv: Optional[str] = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if not math.isfinite(d["final_objective"]):
            d["final_objective"] = str(d["final_objective"])
        return d


def _sweep_one(args) -> SweepEntry:
    spec, value, seed, force, out = args
    rec = run_experiment(spec, seed, force, out)
    sched = schedule_for(spec, build_instance(spec).problem.structure)
    cum = rec.rows[-1][RECORD_COLUMNS.index("cum_block_evals")]
    return SweepEntry(value, rec.stop_reason, rec.iterations,
                      cum / max(rec.iterations, 1), float(sched.marginals().sum()),
                      float(rec.rows[-1][1]), str(rec.paths["csv"]) if rec.paths else None)


def sweep(spec: ProblemSpec, path: str, values: Sequence, seed: Optional[int] = None,
          force: bool = False, out=None, jobs: int = 1) -> list:
    """Run ``spec`` once per value of the dotted parameter ``path``.

    Runs are independent, each with its own RNG streams and files, so
    ``jobs > 1`` executes them in separate processes.
    """
    seed = spec.resolve_seed(seed, os.environ)
    specs = [spec.with_value(path, v) for v in values]
    tasks = [(s, v, seed, force, out) for s, v in zip(specs, values)]
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_sweep_one, tasks))


def summary_json(obj) -> str:
    return canonical_json(obj)
