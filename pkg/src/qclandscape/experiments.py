"""Seeded experiment harness producing row tables and aggregate summaries.

Every random draw comes from a stream keyed by ``(seed, tag, model_id,
run_id)`` through :class:`numpy.random.SeedSequence` spawn keys, so a run's
numbers depend only on its coordinates and never on scheduling.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import ControlField
from .landscape import AscentConfig, field_fidelity, randomized_ascent
from .model_zoo import random_heisenberg_tuple, random_tuple, system_e
from .singular import (
    integrate_singular,
    neighborhood_escape,
    probe_goal_angle,
    saddle_probe,
    seek_singular_critical,
    verify_singularity,
    SingularProbe,
)

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "trap_census_heisenberg",
    "trap_census_generic",
    "zero_field_start",
    "fluence_study",
    "singular_census",
    "singular_critical_search",
    "system_e_study",
)

# stream tags
_MODEL, _RUN, _CLASS, _SEARCH = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one experiment.

    ``ratio`` sets the polarizability strength as ``|iH2| / |iH1|``
    (Frobenius norms).  ``horizon`` is the final time ``T``.  Use
    :meth:`for_experiment` to get the per-experiment defaults.
    """

    experiment: str
    n_models: int = 10
    n_runs_per_model: int = 10
    seed: int = 0
    dimension: int = 4
    segments: int = 250
    horizon: float = 20.0
    polarizability: str = "on"
    ratio: float = 0.1
    output_path: str = "results"
    threads: int = 1
    success_threshold: float = 0.95
    step_size: float = 0.05
    min_step: float = 1e-3
    max_tries: int = 1000
    confirm_traps: bool = False
    singular_steps: int = 1000
    saddle_budget: int = 200
    search_budget: int = 3000
    angle_tol: float = 1e-3
    escape_count: int = 200
    escape_radius: float = 1e-3
    max_draws_factor: int = 20
    initial_norm: float = 1e-3
    norm_decay: float = 0.5
    fluence_ratios: tuple = (1.0, 0.1, 0.01)
    fluence_initial_norms: tuple = (0.1, 1.0)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        counts = ("n_models", "n_runs_per_model", "dimension", "segments", "threads", "max_tries",
                  "singular_steps", "saddle_budget", "search_budget", "escape_count", "max_draws_factor")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.polarizability not in ("on", "off"):
            raise ValueError("polarizability must be 'on' or 'off'")
        if self.ratio < 0 or any(r < 0 for r in self.fluence_ratios):
            raise ValueError("norm ratios must be non-negative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.success_threshold <= 1:
            raise ValueError("success_threshold must lie in (0, 1]")
        if self.dimension < 2:
            raise ValueError("dimension must be at least 2")
        if self.experiment in ("trap_census_heisenberg",) and self.dimension != 4:
            raise ValueError("the Heisenberg family lives in dimension 4")
        if len(self.fluence_initial_norms) != 2 or len(self.fluence_ratios) < 1:
            raise ValueError("need one or more fluence ratios and exactly two initial norms")

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        values = dict(_PRESETS.get(experiment, {}))
        values.update(overrides)
        return cls(experiment=experiment, **values)

    def ascent(self, rng_seed: int = 0) -> AscentConfig:
        return AscentConfig(
            step_size=self.step_size,
            min_step=self.min_step,
            max_tries=self.max_tries,
            success_threshold=self.success_threshold,
            confirm_traps=self.confirm_traps,
            rng_seed=rng_seed,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # serialization

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ValueError("config lacks 'experiment'")
        values = {k: _coerce(k, v) for k, v in data.items()}
        return cls.for_experiment(values.pop("experiment"), **values)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        d = self.to_dict()
        section = d.pop("experiment")
        parser[section] = {k: _ini_value(v) for k, v in d.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, experiment: Optional[str] = None, **overrides) -> "ExperimentConfig":
        """Read ``[experiment]`` from INI text; ``[DEFAULT]`` keys apply to all sections."""
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValueError(f"malformed config: {exc}") from exc
        if experiment is None:
            sections = parser.sections()
            if len(sections) != 1:
                raise ValueError("config must hold exactly one section when no experiment is named")
            experiment = sections[0]
        if parser.has_section(experiment):
            raw = dict(parser[experiment])
        else:
            raw = dict(parser.defaults())
        raw.update(overrides)
        raw["experiment"] = experiment
        return cls.from_dict(raw)


_PRESETS = {
    "trap_census_heisenberg": dict(n_models=20, n_runs_per_model=20, confirm_traps=True),
    "trap_census_generic": dict(n_models=10, n_runs_per_model=10),
    "zero_field_start": dict(n_models=10, n_runs_per_model=10),
    "fluence_study": dict(n_models=5, n_runs_per_model=1),
    "singular_census": dict(n_models=50, n_runs_per_model=1, horizon=2.0, ratio=1.0),
    "singular_critical_search": dict(
        n_models=40, n_runs_per_model=1, horizon=2.0, ratio=1.0, singular_steps=400
    ),
    "system_e_study": dict(
        n_models=20, n_runs_per_model=1, dimension=3, segments=500, horizon=1000.0,
        success_threshold=0.999, step_size=0.002, min_step=1e-4,
    ),
}

_TUPLE_FIELDS = ("fluence_ratios", "fluence_initial_norms")


def _ini_value(v) -> str:
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, value):
    kinds = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    kind = kinds.get(name)
    try:
        if name in _TUPLE_FIELDS:
            if isinstance(value, str):
                value = [x for x in value.replace(",", " ").split() if x]
            return tuple(float(x) for x in value)
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("1", "true", "yes", "on")
            return bool(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        return str(value).strip() if isinstance(value, str) else value
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad value for {name}: {value!r}") from exc


def stream_seed(root: int, *keys: int) -> int:
    """Counter-based child seed for the stream at coordinates ``keys``."""
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


# tables

@dataclass
class ResultsTable:
    experiment: str
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(row[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, out_dir: str, config: Optional[ExperimentConfig] = None) -> None:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write(os.path.join(out_dir, "rows.csv"), self.csv_text())
            _write(os.path.join(out_dir, "summary.json"), json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
            if config is not None:
                _write(os.path.join(out_dir, "config.json"), config.to_json())
        except OSError as exc:
            raise OSError(f"cannot write results to {out_dir!r}: {exc}") from exc


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _cell(v) -> str:
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


COLUMNS = {
    "trap_census_heisenberg": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "polarizability", "h2_norm", "initial_fidelity", "evaluations", "reason",
    ],
    "trap_census_generic": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "h2_norm", "initial_fidelity", "evaluations", "reason",
    ],
    "fluence_study": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "case_ratio", "start", "initial_norm", "iteration", "field_norm", "fidelity",
    ],
    "singular_census": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "model_class", "blow_up", "blow_up_count", "defect", "refined_defect", "max_abs_control",
        "classification", "trials_used",
    ],
    "singular_critical_search": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "angle", "reverified_angle", "escape_fraction",
    ],
    "system_e_study": [
        "model_id", "run_id", "success", "final_fidelity", "iterations", "fluence_final",
        "h2", "h2_seed", "initial_norm", "initial_fidelity", "evaluations", "reason",
    ],
}
COLUMNS["zero_field_start"] = COLUMNS["trap_census_generic"]

_BOOL_COLS = {"success", "blow_up"}
_INT_COLS = {"model_id", "run_id", "iterations", "evaluations", "iteration", "blow_up_count", "trials_used", "h2_seed"}
_STR_COLS = {"polarizability", "reason", "start", "model_class", "classification", "h2"}


def parse_rows(text: str) -> list:
    """Read ``rows.csv`` text back into typed row dicts."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in raw.items():
            if k in _BOOL_COLS:
                row[k] = v == "1"
            elif k in _STR_COLS:
                row[k] = v
            elif v == "":
                row[k] = None if k == "h2_seed" else float("nan")
            elif k in _INT_COLS:
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows


# summaries (pure functions of the rows)

def _frac(num, den):
    return None if den == 0 else num / den


def _by_model(rows, key="model_id"):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def _census_summary(rows):
    models = _by_model(rows)
    perfect = [m for m, rs in models.items() if all(r["success"] for r in rs)]
    imperfect = [rs for m, rs in models.items() if not all(r["success"] for r in rs)]
    failed = sum(not r["success"] for rs in imperfect for r in rs)
    total = sum(len(rs) for rs in imperfect)
    return {
        "models": len(models),
        "runs": len(rows),
        "models_all_converged": len(perfect),
        "fraction_models_all_converged": _frac(len(perfect), len(models)),
        "imperfect_models": len(imperfect),
        "failed_initial_fraction_among_imperfect": _frac(failed, total),
        "convergence_fraction": _frac(sum(r["success"] for r in rows), len(rows)),
    }


def _fluence_summary(rows):
    finals = {}
    for r in rows:
        finals[(r["case_ratio"], r["model_id"], r["run_id"], r["start"])] = r
    cases = {}
    for ratio in sorted({k[0] for k in finals}, reverse=True):
        keys = [k for k in finals if k[0] == ratio]
        uniform = [finals[k] for k in keys if k[3] == "uniform"]
        grow_ok = sum(r["fluence_final"] <= 3.0 * r["initial_norm"] for r in uniform)
        pairs = {}
        for k in keys:
            if k[3] != "uniform":
                pairs.setdefault((k[1], k[2]), []).append(finals[k]["fluence_final"])
        pair_ok = [max(v) <= 3.0 * min(v) for v in pairs.values() if len(v) == 2]
        cases[repr(ratio)] = {
            "models": len({k[1] for k in keys}),
            "runs": len(keys),
            "convergence_fraction": _frac(sum(finals[k]["success"] for k in keys), len(keys)),
            "growth_within_3x_fraction": _frac(grow_ok, len(uniform)),
            "paired_finals_within_3x_fraction": _frac(sum(pair_ok), len(pair_ok)),
        }
    return {"cases": cases, "rows": len(rows)}


def _singular_census_summary(rows):
    out = {}
    for cls in sorted({r["model_class"] for r in rows}):
        rs = [r for r in rows if r["model_class"] == cls]
        good = [r for r in rs if not r["blow_up"]]
        trials = [r["trials_used"] for r in good if r["classification"] == "saddle"]
        out[cls] = {
            "draws": len(rs),
            "blow_ups": len(rs) - len(good),
            "controls": len(good),
            "traps": sum(r["classification"] == "candidate_trap" for r in good),
            "saddles": len(trials),
            "median_trials": float(np.median(trials)) if trials else None,
            "max_trials": max(trials) if trials else None,
            "max_refined_defect": max((r["refined_defect"] for r in good), default=None),
        }
    good = [r for r in rows if not r["blow_up"]]
    trials = [r["trials_used"] for r in good if r["classification"] == "saddle"]
    out["all"] = {
        "controls": len(good),
        "traps": sum(r["classification"] == "candidate_trap" for r in good),
        "median_trials": float(np.median(trials)) if trials else None,
        "max_trials": max(trials) if trials else None,
    }
    return out


def _critical_summary(rows):
    found = [r for r in rows if r["success"]]
    return {
        "searches": len(rows),
        "found": len(found),
        "search_success_fraction": _frac(len(found), len(rows)),
        "max_reverified_angle": max((r["reverified_angle"] for r in found), default=None),
        "min_escape_fraction": min((r["escape_fraction"] for r in found), default=None),
    }


def _system_e_summary(rows):
    out = {}
    for arm in ("off", "on"):
        rs = [r for r in rows if r["h2"] == arm]
        if not rs:
            continue
        out[f"h2_{arm}"] = {
            "runs": len(rs),
            "reached_threshold": sum(r["success"] for r in rs),
            "convergence_fraction": _frac(sum(r["success"] for r in rs), len(rs)),
            "stalled_fraction": _frac(sum(not r["success"] for r in rs), len(rs)),
            "min_final_fidelity": min(r["final_fidelity"] for r in rs),
        }
    return out


SUMMARIES: dict = {
    "trap_census_heisenberg": _census_summary,
    "trap_census_generic": _census_summary,
    "zero_field_start": _census_summary,
    "fluence_study": _fluence_summary,
    "singular_census": _singular_census_summary,
    "singular_critical_search": _critical_summary,
    "system_e_study": _system_e_summary,
}


def summarize(experiment: str, rows: list) -> dict:
    return SUMMARIES[experiment](rows)


# workers (module level so they pickle)

def _record_row(model_id, run_id, rec):
    return {
        "model_id": model_id,
        "run_id": run_id,
        "success": bool(rec.success),
        "final_fidelity": float(rec.final_fidelity),
        "iterations": rec.iterations,
        "fluence_final": float(rec.fluence_trace[-1]),
        "initial_fidelity": float(rec.fidelity_trace[0]),
        "evaluations": rec.evaluations,
        "reason": rec.reason,
    }


def _heisenberg_h2_norm(cfg):
    # |iH1| = |I x sigma_z|_F = 2
    return cfg.ratio * 2.0 if cfg.polarizability == "on" else None


def _census_task(cfg: ExperimentConfig, model_id: int) -> list:
    model_seed = stream_seed(cfg.seed, _MODEL, model_id)
    if cfg.experiment == "trap_census_heisenberg":
        h2_norm = _heisenberg_h2_norm(cfg)
        model, goal = random_heisenberg_tuple(model_seed, h2_norm)
    else:
        h2_norm = cfg.ratio if cfg.polarizability == "on" else None
        model, goal = random_tuple(cfg.dimension, model_seed, norm_h2=h2_norm)
    rows = []
    for run_id in range(cfg.n_runs_per_model):
        run_seed = stream_seed(cfg.seed, _RUN, model_id, run_id)
        acfg = cfg.ascent(run_seed)
        if cfg.experiment == "zero_field_start":
            start = ControlField(np.zeros(cfg.segments), cfg.horizon)
            rec = randomized_ascent(model, goal, acfg, start)
        else:
            rec = randomized_ascent(model, goal, acfg, segments=cfg.segments, total_time=cfg.horizon)
        row = _record_row(model_id, run_id, rec)
        row["h2_norm"] = 0.0 if h2_norm is None else h2_norm
        row["polarizability"] = cfg.polarizability
        rows.append(row)
    return rows


def _direction(rng, k):
    v = rng.standard_normal(k)
    return v / np.linalg.norm(v)


def _fluence_task(cfg: ExperimentConfig, case_idx: int, model_id: int) -> list:
    ratio = cfg.fluence_ratios[case_idx]
    model, goal = random_tuple(cfg.dimension, stream_seed(cfg.seed, _MODEL, model_id), norm_h2=ratio)
    starts = [("uniform", None)] + [(repr(float(x)), float(x)) for x in cfg.fluence_initial_norms]
    rows = []
    for run_id in range(cfg.n_runs_per_model):
        for start_idx, (label, norm) in enumerate(starts):
            run_seed = stream_seed(cfg.seed, _RUN, model_id, run_id, case_idx, start_idx)
            acfg = cfg.ascent(run_seed)
            if norm is None:
                rec = randomized_ascent(model, goal, acfg, segments=cfg.segments, total_time=cfg.horizon)
            else:
                # same direction for both scaled starts of a run
                rng = np.random.default_rng(stream_seed(cfg.seed, _RUN, model_id, run_id, case_idx))
                start = ControlField(norm * _direction(rng, cfg.segments), cfg.horizon)
                rec = randomized_ascent(model, goal, acfg, start)
            base = _record_row(model_id, run_id, rec)
            for it, (fn, fi) in enumerate(zip(rec.fluence_trace, rec.fidelity_trace)):
                rows.append({
                    **base,
                    "case_ratio": float(ratio),
                    "start": label,
                    "initial_norm": float(rec.fluence_trace[0]),
                    "iteration": it,
                    "field_norm": float(fn),
                    "fidelity": float(fi),
                    "_key": (model_id, run_id, case_idx, start_idx, it),
                })
    return rows


_CLASSES = ("generic", "heisenberg")


def _singular_draw(cfg: ExperimentConfig, class_idx: int, draw: int) -> dict:
    seed = stream_seed(cfg.seed, _CLASS, class_idx, draw)
    if _CLASSES[class_idx] == "generic":
        model, goal = random_tuple(cfg.dimension, seed, norm_h2=cfg.ratio)
    else:
        model, goal = random_heisenberg_tuple(seed, cfg.ratio * 2.0)
    rng = np.random.default_rng(stream_seed(cfg.seed, _RUN, class_idx, draw))
    probe = SingularProbe.random(rng, model.dim)
    try:
        sol = integrate_singular(model, probe, cfg.horizon, cfg.singular_steps)
    except FloatingPointError:
        sol = None
    row = {
        "model_id": draw,
        "run_id": 0,
        "model_class": _CLASSES[class_idx],
        "blow_up": sol is None or sol.blown_up,
        "blow_up_count": -1 if sol is None else len(sol.blow_up_times),
        "defect": float("nan") if sol is None else float(sol.defect),
        "max_abs_control": float("inf") if sol is None else float(np.max(np.abs(sol.control_samples))),
        "_key": (draw, 0, class_idx),
    }
    if row["blow_up"]:
        row.update(success=False, final_fidelity=float("nan"), iterations=0, fluence_final=float("nan"),
                   refined_defect=float("nan"), classification="blow_up", trials_used=0)
        return row
    fld = sol.field(cfg.segments)
    verdict = saddle_probe(model, goal, fld, cfg.saddle_budget, seed=stream_seed(cfg.seed, _SEARCH, class_idx, draw))
    row.update(
        success=verdict.classification != "candidate_trap",
        final_fidelity=field_fidelity(model, fld, goal),
        iterations=verdict.trials_used,
        fluence_final=fld.norm(),
        refined_defect=float(verify_singularity(model, sol, probe)),
        classification=verdict.classification,
        trials_used=verdict.trials_used,
    )
    return row


def _critical_task(cfg: ExperimentConfig, model_id: int) -> list:
    model, goal = random_tuple(cfg.dimension, stream_seed(cfg.seed, _MODEL, model_id), norm_h2=cfg.ratio)
    found = seek_singular_critical(
        model, goal, stream_seed(cfg.seed, _SEARCH, model_id), cfg.angle_tol,
        total_time=cfg.horizon, steps=cfg.singular_steps, budget=cfg.search_budget,
    )
    row = {"model_id": model_id, "run_id": 0}
    if found is None:
        row.update(success=False, final_fidelity=float("nan"), iterations=0, fluence_final=float("nan"),
                   angle=float("nan"), reverified_angle=float("nan"), escape_fraction=float("nan"))
        return [row]
    probe, sol, angle = found
    again = integrate_singular(model, probe, cfg.horizon, cfg.singular_steps)
    fld = sol.field(cfg.segments)
    escape = neighborhood_escape(
        model, goal, fld, cfg.escape_count, stream_seed(cfg.seed, _RUN, model_id, 0),
        config=cfg.ascent(), radius=cfg.escape_radius,
    )
    row.update(
        success=True,
        final_fidelity=field_fidelity(model, fld, goal),
        iterations=cfg.escape_count,
        fluence_final=fld.norm(),
        angle=float(angle),
        reverified_angle=float(probe_goal_angle(probe.b, again.endpoint, goal)),
        escape_fraction=float(escape),
    )
    return [row]


def _system_e_task(cfg: ExperimentConfig, model_id: int) -> list:
    h2_seed = stream_seed(cfg.seed, _MODEL, model_id) % (2**31)
    norm = cfg.initial_norm * cfg.norm_decay**model_id
    arms = [("off", None), ("on", h2_seed)] if cfg.polarizability == "on" else [("off", None)]
    rows = []
    for run_id in range(cfg.n_runs_per_model):
        rng = np.random.default_rng(stream_seed(cfg.seed, _RUN, model_id, run_id))
        direction = _direction(rng, cfg.segments)
        for arm, seed in arms:
            model, goal, total_time = system_e(with_h2_seed=seed)
            start = ControlField(norm * direction, total_time)
            acfg = cfg.ascent(stream_seed(cfg.seed, _SEARCH, model_id, run_id))
            row = _record_row(model_id, run_id, randomized_ascent(model, goal, acfg, start))
            row.update(h2=arm, h2_seed=seed, initial_norm=float(norm), _key=(model_id, run_id, arm == "on"))
            rows.append(row)
    return rows


def _run_task(task):
    fn, args = task
    out = fn(*args)
    return out if isinstance(out, list) else [out]


def _map(tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_task, tasks))


def _assemble(cfg: ExperimentConfig, chunks) -> ResultsTable:
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: r.get("_key", (r["model_id"], r["run_id"])))
    for r in rows:
        r.pop("_key", None)
    cols = COLUMNS[cfg.experiment]
    # summaries are computed from the rows as they will be read back
    clean = parse_rows(ResultsTable(cfg.experiment, cols, rows).csv_text())
    return ResultsTable(cfg.experiment, cols, rows, summarize(cfg.experiment, clean))


def _check(cfg, *allowed):
    if cfg.experiment not in allowed:
        raise ValueError(f"experiment {cfg.experiment!r} is not handled here")


def run_trap_census(config: ExperimentConfig) -> ResultsTable:
    """Heisenberg census: all-runs-converged fraction and failed-start fraction."""
    _check(config, "trap_census_heisenberg")
    tasks = [(_census_task, (config, m)) for m in range(config.n_models)]
    return _assemble(config, _map(tasks, config.threads))


def run_generic_census(config: ExperimentConfig) -> ResultsTable:
    """Random su(n) tuples; ``zero_field_start`` begins every run at E = 0."""
    _check(config, "trap_census_generic", "zero_field_start")
    tasks = [(_census_task, (config, m)) for m in range(config.n_models)]
    return _assemble(config, _map(tasks, config.threads))


def run_fluence_study(config: ExperimentConfig) -> ResultsTable:
    """Field norm per accepted iteration for each polarizability ratio.

    Every run is started three times: from a uniform random field and
    from the two scaled starts in ``fluence_initial_norms``, which share a
    direction.
    """
    _check(config, "fluence_study")
    tasks = [
        (_fluence_task, (config, c, m))
        for c in range(len(config.fluence_ratios))
        for m in range(config.n_models)
    ]
    return _assemble(config, _map(tasks, config.threads))


def run_singular_census(config: ExperimentConfig) -> ResultsTable:
    """Singular controls per model class, each classified by :func:`saddle_probe`.

    Tuples are drawn in order until ``n_models`` controls without blow-up
    are collected (at most ``max_draws_factor * n_models`` draws).  Blow-up
    draws stay in the table, flagged, and are left out of the statistics.
    """
    _check(config, "singular_census")
    chunks = []
    limit = config.max_draws_factor * config.n_models
    for c in range(len(_CLASSES)):
        kept, draw = [], 0
        while draw < limit and sum(not r["blow_up"] for r in kept) < config.n_models:
            need = config.n_models - sum(not r["blow_up"] for r in kept)
            batch = range(draw, min(limit, draw + max(need, config.threads)))
            results = _map([(_singular_draw, (config, c, d)) for d in batch], config.threads)
            for rs in results:
                if sum(not r["blow_up"] for r in kept) >= config.n_models:
                    break
                kept.extend(rs)
            draw = batch.stop
        log.info("class %s: %d draws", _CLASSES[c], len(kept))
        chunks.append(kept)
    return _assemble(config, chunks)


def run_singular_critical_search(config: ExperimentConfig) -> ResultsTable:
    """Search for singular critical controls and test ascents started next to them."""
    _check(config, "singular_critical_search")
    tasks = [(_critical_task, (config, m)) for m in range(config.n_models)]
    return _assemble(config, _map(tasks, config.threads))


def run_system_e_study(config: ExperimentConfig) -> ResultsTable:
    """Ascents on the three-level trap system from near-zero fields.

    Model ``j`` starts from norm ``initial_norm * norm_decay**j``; each start
    is run without and (if ``polarizability`` is on) with a seeded ``H2``.
    """
    _check(config, "system_e_study")
    tasks = [(_system_e_task, (config, m)) for m in range(config.n_models)]
    return _assemble(config, _map(tasks, config.threads))


RUNNERS: dict = {
    "trap_census_heisenberg": run_trap_census,
    "trap_census_generic": run_generic_census,
    "zero_field_start": run_generic_census,
    "fluence_study": run_fluence_study,
    "singular_census": run_singular_census,
    "singular_critical_search": run_singular_critical_search,
    "system_e_study": run_system_e_study,
}


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    return RUNNERS[config.experiment](config)
