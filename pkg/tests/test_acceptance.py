"""Acceptance gate: one PASS/FAIL line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import os
import tempfile
import time

import numpy as np

from conftest import VERDICTS
from oracles import expm_taylor
from qclandscape.dynamics import ControlField, HamiltonianModel, propagate
from qclandscape.experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from qclandscape.landscape import fidelity, fidelity_gradient
from qclandscape.matrix_core import PAULI_X, PAULI_Y, expm_skew, lie_closure_rank, random_su, unitarity_defect
from qclandscape.model_zoo import HeisenbergParams, heisenberg_model, random_heisenberg_tuple, random_tuple
from qclandscape.singular import SingularProbe, integrate_singular, verify_singularity


def verdict(name, checks, elapsed=None, budget=None):
    """Record and assert a criterion made of ``(label, ok, detail)`` checks."""
    if budget is not None:
        checks = list(checks) + [("runtime", elapsed <= budget, f"{elapsed:.0f}s of {budget:.0f}s")]
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{label}={'ok' if good else 'FAILED'} ({info})" for label, good, info in checks)
    VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def test_table_one_heisenberg_census():
    t0 = time.perf_counter()
    off = run_experiment(ExperimentConfig.for_experiment("trap_census_heisenberg", polarizability="off"))
    on = run_experiment(ExperimentConfig.for_experiment("trap_census_heisenberg", polarizability="on"))
    elapsed = time.perf_counter() - t0
    s_off, s_on = off.summary, on.summary
    failed = s_on["failed_initial_fraction_among_imperfect"]
    verdict(
        "Heisenberg census 20x20",
        [
            ("models", s_off["models"] == s_on["models"] == 20 and s_on["runs"] == 400, f"{s_on['models']} models, {s_on['runs']} runs"),
            ("all-converged without H2 = 0", s_off["fraction_models_all_converged"] == 0.0, f"{s_off['fraction_models_all_converged']}"),
            ("all-converged with H2 >= 0.9", s_on["fraction_models_all_converged"] >= 0.9, f"{s_on['fraction_models_all_converged']}"),
            ("failed-initial among imperfect <= 0.1", failed is None or failed <= 0.1, f"{failed}"),
        ],
        elapsed,
        30 * 60,
    )


def test_generic_census():
    t0 = time.perf_counter()
    rand = run_experiment(ExperimentConfig.for_experiment("trap_census_generic"))
    zero = run_experiment(ExperimentConfig.for_experiment("zero_field_start"))
    elapsed = time.perf_counter() - t0
    verdict(
        "generic su(4) census 10x10",
        [
            ("runs", rand.summary["runs"] == zero.summary["runs"] == 100, f"{rand.summary['runs']}"),
            ("random starts converge", rand.summary["convergence_fraction"] == 1.0, f"{rand.summary['convergence_fraction']}"),
            ("zero-field starts converge", zero.summary["convergence_fraction"] == 1.0, f"{zero.summary['convergence_fraction']}"),
        ],
        elapsed,
        20 * 60,
    )


def test_system_e():
    t0 = time.perf_counter()
    table = run_experiment(ExperimentConfig.for_experiment("system_e_study"))
    elapsed = time.perf_counter() - t0
    on = [r for r in table.rows if r["h2"] == "on"]
    off = [r for r in table.rows if r["h2"] == "off"]
    stalled = sum(r["final_fidelity"] < 0.999 for r in off)
    verdict(
        "three-level trap system",
        [
            ("20 H2 seeds", len({r["h2_seed"] for r in on}) == 20, f"{len(on)} runs"),
            ("near-zero starts", all(r["initial_norm"] <= 1e-3 for r in table.rows), f"max {max(r['initial_norm'] for r in table.rows):.1e}"),
            ("with H2 all >= 0.999", all(r["final_fidelity"] >= 0.999 for r in on), f"min {min(r['final_fidelity'] for r in on):.6f}"),
            ("without H2 majority < 0.999", stalled > len(off) / 2, f"{stalled}/{len(off)} stalled, min {min(r['final_fidelity'] for r in off):.6f}"),
        ],
        elapsed,
        30 * 60,
    )


def test_singular_self_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    refined, ratios, blown = [], [], 0
    for seed in range(50):
        model, _ = random_tuple(4, 70_000 + seed, norm_h2=1.0)
        probe = SingularProbe.random(rng, 4)
        coarse = integrate_singular(model, probe, 2.0, 1000)
        fine = integrate_singular(model, probe, 2.0, 2000)
        if coarse.blown_up or fine.blown_up:
            blown += 1
            continue
        d1, d2 = verify_singularity(model, coarse, probe), verify_singularity(model, fine, probe)
        refined.append(d1)
        ratios.append(d1 / d2)
    elapsed = time.perf_counter() - t0
    verdict(
        "singular self-consistency (50 tuples)",
        [
            ("smooth solutions", len(refined) > 0, f"{len(refined)} smooth, {blown} with blow-ups"),
            ("refined defect <= 1e-4", max(refined, default=np.inf) <= 1e-4, f"max {max(refined, default=np.nan):.2e}"),
            ("defect at least halves", min(ratios, default=0) >= 2.0, f"min ratio {min(ratios, default=np.nan):.2f}"),
        ],
        elapsed,
        10 * 60,
    )


def test_saddle_census():
    t0 = time.perf_counter()
    table = run_experiment(ExperimentConfig.for_experiment("singular_census"))
    elapsed = time.perf_counter() - t0
    s = table.summary
    verdict(
        "saddle census (100 singular controls)",
        [
            ("controls", s["all"]["controls"] == 100, f"{s['generic']['controls']} generic + {s['heisenberg']['controls']} Heisenberg"),
            ("no candidate traps", s["all"]["traps"] == 0, f"{s['all']['traps']}"),
            ("median trials <= 20", s["all"]["median_trials"] is not None and s["all"]["median_trials"] <= 20, f"{s['all']['median_trials']}"),
            ("max trials <= 200", s["all"]["max_trials"] is not None and s["all"]["max_trials"] <= 200, f"{s['all']['max_trials']}"),
        ],
        elapsed,
        15 * 60,
    )


def _fd_gradient(model, fld, goal, h=1e-5):
    out = np.empty(fld.segment_count)
    for k in range(fld.segment_count):
        e = np.zeros(fld.segment_count)
        e[k] = h
        up = fidelity(propagate(model, fld.with_amplitudes(fld.amplitudes + e))[0], goal)
        dn = fidelity(propagate(model, fld.with_amplitudes(fld.amplitudes - e))[0], goal)
        out[k] = (up - dn) / (2 * h)
    return out


def test_gradient_oracle():
    worst, exact = 0.0, True
    for n in (3, 4):
        for seed in range(5):
            model, goal = random_tuple(n, 900 + seed, norm_h2=0.5)
            fld = ControlField(np.random.default_rng(seed).uniform(-1, 1, 30), 4.0)
            g = fidelity_gradient(model, fld, goal)
            fd = _fd_gradient(model, fld, goal)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
            zeroed = HamiltonianModel(model.h0, model.h1, np.zeros_like(model.h0))
            exact &= np.array_equal(fidelity_gradient(zeroed, fld, goal), fidelity_gradient(model.without_h2(), fld, goal))
    verdict(
        "gradient oracle",
        [
            ("finite differences", worst <= 1e-4, f"max relative error {worst:.1e}"),
            ("zeroed H2 equals dipole gradient", exact, "bitwise"),
        ],
    )


def test_numerical_hygiene():
    defect = det = 0.0
    for seed in range(40):
        n = 2 + seed % 4
        model, _ = random_tuple(n, seed, norm_h2=1.0)
        fld = ControlField(np.random.default_rng(seed).normal(0, 2, 250), 20.0)
        u, traj = propagate(model, fld, keep_trajectory=True)
        for v in traj.samples[:: 25]:
            defect = max(defect, unitarity_defect(v))
            det = max(det, abs(np.linalg.det(v) - 1))
    expm_err = max(
        np.linalg.norm(expm_skew(random_su(n, s, norm)) - expm_taylor(random_su(n, s, norm)))
        for n in (2, 3, 4) for s in range(10) for norm in (0.37, 3.0)
    )
    su2 = lie_closure_rank([1j * PAULI_X, 1j * PAULI_Y])
    heis = [lie_closure_rank(random_heisenberg_tuple(s)[0].generators()) for s in range(10)]
    iso = lie_closure_rank(heisenberg_model(HeisenbergParams(1.0, 1.0, 1.0)).generators())
    aug = [lie_closure_rank(random_heisenberg_tuple(s, h2_norm=0.2)[0].generators()) for s in range(10)]
    verdict(
        "numerical hygiene",
        [
            ("unitarity", defect <= 1e-9, f"max {defect:.1e}"),
            ("determinant", det <= 1e-9, f"max {det:.1e}"),
            ("expm vs Taylor", expm_err <= 1e-10, f"max {expm_err:.1e}"),
            ("su(2) closure = 3", su2 == 3, f"{su2}"),
            ("Heisenberg closure < 15", max(heis + [iso]) < 15, f"{sorted(set(heis + [iso]))}"),
            ("augmented closure = 15", set(aug) == {15}, f"{sorted(set(aug))}"),
        ],
    )


def _tiny(experiment):
    if experiment == "system_e_study":
        return ExperimentConfig.for_experiment(experiment, n_models=2, max_tries=100, success_threshold=0.9)
    if experiment == "singular_census":
        return ExperimentConfig.for_experiment(experiment, n_models=2, segments=60, singular_steps=300)
    if experiment == "singular_critical_search":
        return ExperimentConfig.for_experiment(
            experiment, n_models=3, singular_steps=200, search_budget=300, escape_count=2, max_tries=100
        )
    extra = dict(n_runs_per_model=1, fluence_ratios=(1.0, 0.1), success_threshold=0.6) if experiment == "fluence_study" else {}
    return ExperimentConfig.for_experiment(
        experiment, **{**dict(n_models=2, n_runs_per_model=2, segments=60, horizon=8.0, max_tries=150), **extra}
    )


def test_determinism():
    checks = []
    for experiment in EXPERIMENTS:
        texts = []
        for threads in (1, 2, 1):
            cfg = _tiny(experiment).replace(threads=threads)
            with tempfile.TemporaryDirectory() as out:
                run_experiment(cfg).write(out, cfg)
                with open(os.path.join(out, "rows.csv"), "rb") as fh:
                    texts.append(fh.read())
        same = texts[0] == texts[1] == texts[2]
        checks.append((experiment, same, f"{len(texts[0])} bytes"))
    verdict("determinism across re-runs and thread counts", checks)
