"""Experiment runner: named recipes, YAML configs, deterministic seeding,
CSV and metadata emission.

Every run writes its outputs plus a metadata file echoing the fully
resolved configuration; feeding the metadata file back to `run`
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import collision, evolve, measure, observables
from .hamiltonians import BathParameters, WalkParameters
from .instances import (
    SKInstance,
    brute_force_ground,
    load_instance,
    sample_sk,
    save_instance,
)

TRAJECTORY_COLUMNS = ("time", "stroke_index", "e_p", "e_driver", "e_total", "fidelity", "entropy")
STROKE_COLUMNS = ("stroke_index", "e_p_pre", "e_p_post", "entropy_post", "branch_count")
OUTCOME_COLUMNS = ("stroke", "j", "level_group", "E_A", "p", "e_p_cond", "fidelity_cond")
MAGNETIZATION_COLUMNS = ("f", "m_x_free", "m_x_interacting", "m_x_thermo", "epsilon", "N")
SWEEP_COLUMNS = ("f", "final_e_p", "final_fidelity")

WORKERS_ENV = "SPINCOOL_WORKERS"

DEFAULTS = {
    "experiment": None,
    "output_dir": "runs/out",
    "global_seed": 0,
    "tol": 1e-9,
    "keep_joint": "none",
    "instance": {"n": 9, "seed": None, "path": None},
    "walk": {"gamma1": 4.0, "gamma2": 1.0, "t_q": 5.0, "t_end": 25.0, "sample_dt": 0.25},
    "anneal": {"gamma1": 4.0, "gamma2": 1.0, "t_f": 25.0, "n_steps": 250, "sample_dt": 0.25},
    "bath": {
        "f": 0.6,
        "alpha": 3.0,
        "n_bath": None,
        "boundary": "periodic",
        "coupling_J": 1.0,
        "coupling_yy": False,
    },
    "strokes": {
        "n_c": 5,
        "dt": 5.0,
        "sample_dt": 0.25,
        "branch_tol": 1e-12,
        "init_state": "driver_ground",
        "j_schedule": [],
    },
    "selection": {"mode": "stochastic", "rng_seed": None, "grouped": False},
    "sweep": {"f_values": [round(0.1 * k, 10) for k in range(1, 10)]},
    "markovian": {
        "base_alpha": 3.0,
        "dt_short": 0.1,
        "n_short": 50,
        "scale_mode": "interaction",
        "dt_ref": 5.0,
        "dt_long": 5.0,
    },
    "magnetization": {
        "f_values": [round(0.05 * k, 10) for k in range(0, 20)],
        "pinning_epsilon": 1e-6,
        "estimator": "pinning",
        "include_interacting": True,
    },
    "measure_scan": {"strokes": [1, 2, 3, 4]},
}

_IGNORED_ECHO_KEYS = ("derived", "outputs")


# ---------------------------------------------------------------------------
# Config handling


def load_config(path) -> dict:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"config {path} is not a mapping")
    return doc


def resolve_config(doc: dict) -> dict:
    """Expand defaults into a fully explicit config."""
    resolved = copy.deepcopy(DEFAULTS)
    for key, value in doc.items():
        if key in _IGNORED_ECHO_KEYS:
            continue
        if isinstance(value, dict) and isinstance(resolved.get(key), dict):
            resolved[key].update(value)
        else:
            resolved[key] = copy.deepcopy(value)
    if resolved["instance"]["seed"] is None:
        resolved["instance"]["seed"] = resolved["global_seed"]
    if resolved["selection"]["rng_seed"] is None:
        resolved["selection"]["rng_seed"] = resolved["global_seed"]
    if resolved["bath"]["n_bath"] is None and resolved["instance"]["path"] is None:
        resolved["bath"]["n_bath"] = resolved["instance"]["n"]
    return resolved


RECIPES = {}


def recipe(name):
    def wrap(fn):
        RECIPES[name] = fn
        return fn

    return wrap


def validate_config(doc: dict) -> list:
    """Diagnostics as (key_path, problem, remedy); empty means runnable."""
    diags = []
    cfg = resolve_config(doc)
    exp = cfg.get("experiment")
    if exp not in RECIPES:
        diags.append(
            ("experiment", f"unknown experiment {exp!r}", f"choose one of {sorted(RECIPES)}")
        )
    inst = cfg["instance"]
    if inst["path"] is not None:
        if not Path(inst["path"]).exists():
            diags.append(
                ("instance.path", f"instance file {inst['path']} does not exist", "fix the path")
            )
    elif int(inst["n"]) < 1:
        diags.append(("instance.n", "system size must be >= 1", "set instance.n >= 1"))
    bath = cfg["bath"]
    if not 0.0 <= float(bath["f"]) <= 1.0:
        diags.append(("bath.f", f"f={bath['f']} outside [0, 1]", "pick f in [0, 1]"))
    if float(bath["alpha"]) <= 0:
        diags.append(("bath.alpha", "alpha must be positive", "set bath.alpha > 0"))
    if bath["boundary"] not in ("periodic", "open"):
        diags.append(("bath.boundary", f"unknown boundary {bath['boundary']!r}", "use periodic|open"))
    if inst["path"] is None and bath["n_bath"] is not None:
        if int(bath["n_bath"]) != int(inst["n"]):
            diags.append(
                (
                    "bath.n_bath",
                    f"bath size {bath['n_bath']} does not match system size {inst['n']}",
                    "equal sizes are required; drop bath.n_bath to inherit instance.n",
                )
            )
    strokes = cfg["strokes"]
    if int(strokes["n_c"]) < 1:
        diags.append(("strokes.n_c", "stroke count must be >= 1", "set strokes.n_c >= 1"))
    if float(strokes["dt"]) <= 0:
        diags.append(("strokes.dt", "stroke duration must be positive", "set strokes.dt > 0"))
    bt = float(strokes["branch_tol"])
    if not 0.0 < bt < 1.0:
        diags.append(("strokes.branch_tol", "branch_tol must lie in (0,1)", "use e.g. 1e-12"))
    if cfg["selection"]["mode"] not in ("none", "post_select_first_excited", "stochastic"):
        diags.append(
            ("selection.mode", f"unknown mode {cfg['selection']['mode']!r}", "use none|post_select_first_excited|stochastic")
        )
    if cfg["keep_joint"] not in ("none", "last", "all"):
        diags.append(("keep_joint", "must be none|last|all", "fix keep_joint"))
    if cfg["markovian"]["scale_mode"] not in ("interaction", "caption"):
        diags.append(
            ("markovian.scale_mode", "must be interaction|caption", "fix markovian.scale_mode")
        )
    if not cfg["sweep"]["f_values"]:
        diags.append(("sweep.f_values", "empty f grid", "list at least one f"))
    return diags


def _instance_from(cfg: dict) -> SKInstance:
    block = cfg["instance"]
    if block["path"] is not None:
        return load_instance(block["path"])
    return sample_sk(int(block["n"]), int(block["seed"]))


def _bath_from(cfg: dict, n: int) -> BathParameters:
    b = cfg["bath"]
    return BathParameters(
        f=float(b["f"]),
        alpha=float(b["alpha"]),
        n_bath=n,
        boundary=b["boundary"],
        coupling_J=float(b["coupling_J"]),
        coupling_yy=bool(b["coupling_yy"]),
    )


def _schedule_from(cfg: dict, bath: BathParameters) -> collision.StrokeSchedule:
    s = cfg["strokes"]
    sample_dt = s["sample_dt"]
    return collision.StrokeSchedule(
        n_c=int(s["n_c"]),
        dt=float(s["dt"]),
        bath=bath,
        j_schedule=tuple((int(k), float(j)) for k, j in s["j_schedule"]),
        init_state=s["init_state"],
        sample_dt=None if sample_dt is None else float(sample_dt),
        branch_tol=float(s["branch_tol"]),
    )


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if np.isnan(v):
        return ""
    return format(v, ".17g")


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _write_atomic(path, buf.getvalue())


def trajectory_rows(record: evolve.TrajectoryRecord):
    smax = record.metadata.get("n_system", 0) * np.log(2.0) + 1e-9
    for i in range(len(record)):
        fid = record.fidelity[i]
        ent = record.entropy[i]
        if not np.isnan(fid) and not -1e-9 <= fid <= 1 + 1e-9:
            raise ValueError(f"fidelity {fid} outside bounds at row {i}")
        if not np.isnan(ent) and not -1e-9 <= ent <= smax:
            raise ValueError(f"entropy {ent} outside bounds at row {i}")
        stroke = record.stroke_index[i]
        yield (
            record.times[i],
            None if stroke < 0 else int(stroke),
            record.e_p[i],
            record.e_driver[i],
            record.e_total[i],
            min(max(fid, 0.0), 1.0) if not np.isnan(fid) else fid,
            min(max(ent, 0.0), smax) if not np.isnan(ent) else ent,
        )


def write_trajectory(path: Path, record) -> None:
    write_csv(path, TRAJECTORY_COLUMNS, trajectory_rows(record))


def write_metadata(path: Path, cfg: dict, derived: dict, outputs: list) -> None:
    doc = copy.deepcopy(cfg)
    doc["derived"] = derived
    doc["outputs"] = [str(o) for o in outputs]
    _write_atomic(path, yaml.safe_dump(doc, sort_keys=False))


def _stroke_summary_rows(record, results):
    rows = []
    prev_ep = record.e_p[0]
    for k, res in enumerate(results, 1):
        post_ep = res.trajectory.e_p[-1]
        post_ent = res.trajectory.entropy[-1]
        rows.append((k, prev_ep, post_ep, post_ent, res.branch_count))
        prev_ep = post_ep
    return rows


# ---------------------------------------------------------------------------
# Recipes


@recipe("walk")
def _run_walk(cfg, outdir, instance):
    w = cfg["walk"]
    wp = WalkParameters(
        gamma1=float(w["gamma1"]), gamma2=float(w["gamma2"]),
        t_q=float(w["t_q"]), t_end=float(w["t_end"]),
    )
    record = evolve.run_quench_walk(instance, wp, float(w["sample_dt"]), float(cfg["tol"]))
    write_trajectory(outdir / "trajectory.csv", record)
    derived = {
        "e_p_ground": record.metadata["e_p_ground"],
        "e_total_ground_gamma2": record.metadata["e_total_ground_gamma2"],
        "n_ln_2": instance.n * float(np.log(2.0)),
    }
    return derived, [outdir / "trajectory.csv"]


@recipe("anneal")
def _run_anneal(cfg, outdir, instance):
    a = cfg["anneal"]
    record = evolve.run_anneal(
        instance,
        float(a["gamma1"]), float(a["gamma2"]), float(a["t_f"]),
        n_steps=int(a["n_steps"]), sample_dt=float(a["sample_dt"]), tol=float(cfg["tol"]),
    )
    write_trajectory(outdir / "trajectory.csv", record)
    derived = {
        "e_p_ground": record.metadata["e_p_ground"],
        "anneal_convergence_gap": record.metadata["anneal_convergence_gap"],
        "anneal_converged": record.metadata["anneal_converged"],
        "n_ln_2": instance.n * float(np.log(2.0)),
    }
    return derived, [outdir / "trajectory.csv"]


def _collide_common(cfg, outdir, instance):
    bath = _bath_from(cfg, instance.n)
    schedule = _schedule_from(cfg, bath)
    record, results = collision.run_collision_protocol(
        instance, schedule, tol=float(cfg["tol"]), keep_joint=cfg["keep_joint"]
    )
    write_trajectory(outdir / "trajectory.csv", record)
    write_csv(outdir / "strokes.csv", STROKE_COLUMNS, _stroke_summary_rows(record, results))
    derived = {
        "e_p_ground": record.metadata["e_p_ground"],
        "bath_ground_energy": record.metadata["bath_ground_energy"],
        "n_ln_2": instance.n * float(np.log(2.0)),
        "final_e_p": record.final("e_p"),
        "final_fidelity": record.final("fidelity"),
    }
    return derived, [outdir / "trajectory.csv", outdir / "strokes.csv"]


@recipe("collide")
def _run_collide(cfg, outdir, instance):
    return _collide_common(cfg, outdir, instance)


@recipe("entropy")
def _run_entropy(cfg, outdir, instance):
    # same engine as collide; the recipe exists so configs read naturally
    return _collide_common(cfg, outdir, instance)


@recipe("fsweep")
def _run_fsweep(cfg, outdir, instance):
    bath = _bath_from(cfg, instance.n)
    schedule = _schedule_from(cfg, bath)
    if schedule.sample_dt is not None and schedule.sample_dt < schedule.dt:
        schedule = replace(schedule, sample_dt=None)  # boundary sampling is enough
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    sweep = collision.final_energy_sweep(
        instance, [float(f) for f in cfg["sweep"]["f_values"]], schedule,
        tol=float(cfg["tol"]), workers=workers,
    )
    write_csv(outdir / "fsweep.csv", SWEEP_COLUMNS, sweep.as_rows())
    derived = {
        "argmin_f": sweep.argmin_f,
        "e_p_ground": brute_force_ground(instance).energy,
        "point_errors": [list(e) for e in sweep.errors],
    }
    outputs = [outdir / "fsweep.csv"]
    status = 3 if sweep.errors else 0
    return derived, outputs, status


@recipe("measure-scan")
def _run_measure_scan(cfg, outdir, instance):
    bath = _bath_from(cfg, instance.n)
    schedule = _schedule_from(cfg, bath)
    if schedule.sample_dt is not None and schedule.sample_dt < schedule.dt:
        schedule = replace(schedule, sample_dt=None)
    engine = collision.CollisionEngine(instance, bath, float(cfg["tol"]))
    rows = []
    fractions = {}
    for n_at in cfg["measure_scan"]["strokes"]:
        scan = measure.measure_after_strokes(
            instance, schedule, int(n_at), tol=float(cfg["tol"]), engine=engine
        )
        fractions[int(n_at)] = scan.fraction_below
        for o in scan.outcomes:
            if o.defined:
                e_cond = measure.conditional_energy(o, instance)
                fid_cond = observables.fidelity_to_problem_ground(o.post_state, instance)
            else:
                e_cond = fid_cond = None
            rows.append(
                (n_at, o.level_index, o.level_group, o.energy, o.probability, e_cond, fid_cond)
            )
    write_csv(outdir / "outcomes.csv", OUTCOME_COLUMNS, rows)
    derived = {
        "fraction_below": {k: float(v) for k, v in fractions.items()},
        "e_p_ground": brute_force_ground(instance).energy,
    }
    return derived, [outdir / "outcomes.csv"]


def _measured_common(cfg, outdir, instance, mode):
    bath = _bath_from(cfg, instance.n)
    schedule = _schedule_from(cfg, bath)
    rule = measure.SelectionRule(
        mode=mode,
        rng_seed=int(cfg["selection"]["rng_seed"]),
        grouped=bool(cfg["selection"]["grouped"]),
    )
    record, logs = measure.run_measured_protocol(
        instance, schedule, rule, tol=float(cfg["tol"])
    )
    write_trajectory(outdir / "trajectory.csv", record)
    rows = []
    for log in logs:
        rows.append(
            (log.stroke, log.chosen_index, None, None, log.probability, log.e_p, log.fidelity)
        )
    write_csv(outdir / "outcomes.csv", OUTCOME_COLUMNS, rows)
    derived = {
        "e_p_ground": record.metadata["e_p_ground"],
        "final_e_p": record.final("e_p"),
        "min_purity": min(log.purity for log in logs),
        "n_ln_2": instance.n * float(np.log(2.0)),
    }
    return derived, [outdir / "trajectory.csv", outdir / "outcomes.csv"]


@recipe("postselect")
def _run_postselect(cfg, outdir, instance):
    return _measured_common(cfg, outdir, instance, "post_select_first_excited")


@recipe("stochastic")
def _run_stochastic(cfg, outdir, instance):
    return _measured_common(cfg, outdir, instance, "stochastic")


@recipe("magnetization")
def _run_magnetization(cfg, outdir, instance):
    m = cfg["magnetization"]
    bath0 = _bath_from(cfg, instance.n)
    rows = []
    for f in m["f_values"]:
        params = replace(bath0, f=float(f))
        free = observables.bath_x_magnetization(
            None, params, float(m["pinning_epsilon"]), mode="free", estimator=m["estimator"]
        )
        inter = None
        if m["include_interacting"]:
            inter = observables.bath_x_magnetization(
                instance, params, float(m["pinning_epsilon"]), mode="interacting",
                estimator=m["estimator"],
            )
        thermo = observables.pfeuty_reference(float(f))
        rows.append(
            (f, free.m_x, inter.m_x if inter else None, thermo, free.pinning_epsilon, instance.n)
        )
    write_csv(outdir / "magnetization.csv", MAGNETIZATION_COLUMNS, rows)
    return {"estimator": m["estimator"]}, [outdir / "magnetization.csv"]


@recipe("markovian-compare")
def _run_markovian(cfg, outdir, instance):
    m = cfg["markovian"]
    bath = _bath_from(cfg, instance.n)
    long_sched = collision.StrokeSchedule(
        n_c=1, dt=float(m["dt_long"]), bath=replace(bath, alpha=float(m["base_alpha"])),
        sample_dt=float(cfg["strokes"]["sample_dt"]),
        branch_tol=float(cfg["strokes"]["branch_tol"]),
    )
    long_rec, _ = collision.run_collision_protocol(
        instance, long_sched, tol=float(cfg["tol"]), keep_joint="none"
    )
    short_rec = collision.run_markovian_mode(
        instance,
        base_alpha=float(m["base_alpha"]),
        dt_short=float(m["dt_short"]),
        n_short=int(m["n_short"]),
        f=bath.f,
        coupling_J=bath.coupling_J,
        scale_mode=m["scale_mode"],
        dt_ref=float(m["dt_ref"]),
        boundary=bath.boundary,
        branch_tol=float(cfg["strokes"]["branch_tol"]),
        tol=float(cfg["tol"]),
    )
    write_trajectory(outdir / "trajectory_long.csv", long_rec)
    write_trajectory(outdir / "trajectory_short.csv", short_rec)
    derived = {
        "e_p_ground": long_rec.metadata["e_p_ground"],
        "final_e_p_long": long_rec.final("e_p"),
        "final_e_p_short": short_rec.final("e_p"),
        "scale_mode": m["scale_mode"],
        "alpha_effective": short_rec.metadata["alpha_effective"],
        "coupling_J_effective": short_rec.metadata["coupling_J_effective"],
    }
    return derived, [outdir / "trajectory_long.csv", outdir / "trajectory_short.csv"]


# ---------------------------------------------------------------------------
# Entry points


def run_experiment(doc: dict, output_dir=None, seed_override=None) -> int:
    diags = validate_config(doc)
    if diags:
        for key, problem, remedy in diags:
            print(f"config error at {key}: {problem} ({remedy})", file=sys.stderr)
        return 2
    cfg = resolve_config(doc)
    if seed_override is not None:
        cfg["global_seed"] = int(seed_override)
        if "seed" not in doc.get("instance", {}):
            cfg["instance"]["seed"] = int(seed_override)
        if "rng_seed" not in doc.get("selection", {}):
            cfg["selection"]["rng_seed"] = int(seed_override)
    outdir = Path(output_dir or cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    cfg["output_dir"] = str(outdir)
    instance = _instance_from(cfg)
    # echo the actual instance block so the metadata alone reproduces the run
    cfg["instance"] = {"n": instance.n, "seed": instance.seed, "path": cfg["instance"]["path"]}
    if cfg["bath"]["n_bath"] is None:
        cfg["bath"]["n_bath"] = instance.n
    result = RECIPES[cfg["experiment"]](cfg, outdir, instance)
    if len(result) == 3:
        derived, outputs, status = result
    else:
        derived, outputs = result
        status = 0
    write_metadata(outdir / "metadata.yaml", cfg, derived, outputs)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spincool",
        description="Collision-model cooling experiments for SK spin glasses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None, help="override output_dir")
    p_run.add_argument("--seed", type=int, default=None, help="override global_seed")

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")

    p_inst = sub.add_parser("instance", help="instance utilities")
    inst_sub = p_inst.add_subparsers(dest="instance_command", required=True)
    p_new = inst_sub.add_parser("new", help="sample and save an instance")
    p_new.add_argument("--n", type=int, required=True)
    p_new.add_argument("--seed", type=int, required=True)
    p_new.add_argument("--out", required=True)
    p_solve = inst_sub.add_parser("solve", help="brute-force solve an instance file")
    p_solve.add_argument("path")

    p_rec = sub.add_parser("recipes", help="recipe registry")
    rec_sub = p_rec.add_subparsers(dest="recipes_command", required=True)
    rec_sub.add_parser("list", help="list recipe names")

    args = parser.parse_args(argv)

    if args.command == "run":
        doc = load_config(args.config)
        return run_experiment(doc, output_dir=args.output, seed_override=args.seed)
    if args.command == "validate":
        diags = validate_config(load_config(args.config))
        if not diags:
            print("config ok")
            return 0
        for key, problem, remedy in diags:
            print(f"{key}: {problem} ({remedy})")
        return 2
    if args.command == "instance":
        if args.instance_command == "new":
            inst = sample_sk(args.n, args.seed)
            save_instance(inst, args.out)
            print(f"wrote {args.out}")
            return 0
        if args.instance_command == "solve":
            inst = load_instance(args.path)
            sol = brute_force_ground(inst)
            config = "".join("+" if s > 0 else "-" for s in sol.configuration)
            print(f"energy {sol.energy:.12f}")
            print(f"configuration {config}")
            print(f"degenerate {sol.degenerate}")
            return 0
    if args.command == "recipes":
        for name in sorted(RECIPES):
            print(name)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
