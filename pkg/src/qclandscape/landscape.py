"""Gate fidelity, its gradient over control space, and ascent drivers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .dynamics import ControlField, HamiltonianModel, endpoint_variation_basis, propagate
from .matrix_core import dagger, unitarity_defect


@dataclass(frozen=True, eq=False)
class GoalGate:
    """Target unitary ``W``; ``det(W) = 1`` is enforced."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=complex)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("goal must be a square matrix")
        if unitarity_defect(w) > 1e-9:
            raise ValueError("goal is not unitary")
        if abs(np.linalg.det(w) - 1.0) > 1e-9:
            raise ValueError("goal must lie in SU(n)")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def fidelity(u, goal: GoalGate) -> float:
    """``|Tr(W^dagger U)|^2 / n^2``; equals 1 exactly on the phase orbit of ``W``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != goal.w.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {goal.w.shape}")
    n = u.shape[0]
    return float(abs(np.vdot(goal.w, u)) ** 2 / n**2)


def left_gradient(u, goal: GoalGate) -> np.ndarray:
    """``U^dagger grad J`` at ``U``: the element ``G`` with ``dJ = <G, X>`` for ``dU = U X``."""
    u = np.asarray(u, dtype=complex)
    n = u.shape[0]
    m = dagger(goal.w) @ u
    y = np.conj(np.trace(m)) * m
    return -(y - dagger(y)) / n**2


def fidelity_gradient(model: HamiltonianModel, fld: ControlField, goal: GoalGate) -> np.ndarray:
    """Exact derivative of ``J[V_T[E]]`` with respect to each segment amplitude."""
    u_t, traj = propagate(model, fld, keep_trajectory=True)
    basis = endpoint_variation_basis(model, fld, traj)
    g = left_gradient(u_t, goal)
    return np.real(np.einsum("ij,kij->k", np.conj(g), basis))


def field_fidelity(model: HamiltonianModel, fld: ControlField, goal: GoalGate) -> float:
    return float(
        _kernels.fidelity(
            model.h0, model.h1, model.h2_or_zero, fld.amplitudes, fld.dt, np.ascontiguousarray(dagger(goal.w))
        )
    )


@dataclass(frozen=True)
class AscentConfig:
    """Settings for :func:`randomized_ascent`.

    ``step_size`` is the initial amplitude ``eps`` of the uniform proposal
    ``eps * U[-1, 1]^K``.  With ``step_rule="adaptive"`` it grows by
    ``exp(1/4)`` on every accepted move and shrinks by ``exp(-1/16)`` on
    every rejection, clipped to ``[min_step, max_step]``.
    ``step_rule="halving"`` uses ``max(0.02 |E|, min_step)`` halved after
    each run of ``max_tries // 2`` rejections.
    """

    step_size: float = 0.05
    min_step: float = 1e-3
    max_step: float = 1.0
    step_rule: str = "adaptive"
    max_tries: int = 1000
    success_threshold: float = 0.95
    max_total_iterations: int = 200_000
    stall_window: int = 1000
    stall_horizon: int = 250_000
    initial_field_range: tuple = (-1.0, 1.0)
    rng_seed: int = 0
    confirm_traps: bool = False

    def __post_init__(self):
        if not 0 < self.success_threshold <= 1:
            raise ValueError("success_threshold must lie in (0, 1]")
        if self.stall_window < 1 or self.stall_horizon < 1:
            raise ValueError("stall_window and stall_horizon must be at least 1")
        if self.max_tries < 1:
            raise ValueError("max_tries must be at least 1")
        if not (0 < self.min_step <= self.max_step and self.step_size > 0):
            raise ValueError("need 0 < min_step <= max_step and step_size > 0")
        if self.step_rule not in ("adaptive", "halving"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        lo, hi = self.initial_field_range
        if not lo <= hi:
            raise ValueError("initial_field_range must be ordered")

    def replace(self, **changes) -> "AscentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunRecord:
    """Outcome of one ascent.  Traces start with the initial field."""

    success: bool
    final_fidelity: float
    fidelity_trace: list
    fluence_trace: list
    final_field: ControlField
    iterations: int
    evaluations: int
    reason: str

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (
            self.success == other.success
            and self.final_fidelity == other.final_fidelity
            and self.fidelity_trace == other.fidelity_trace
            and self.fluence_trace == other.fluence_trace
            and self.final_field == other.final_field
            and self.iterations == other.iterations
            and self.evaluations == other.evaluations
            and self.reason == other.reason
        )


def _initial_field(model, goal, config, initial, segments, total_time, rng):
    if initial is not None:
        if initial.amplitudes.ndim != 1:
            raise ValueError("bad initial field")
        return initial
    if segments is None or total_time is None:
        raise ValueError("segments and total_time are required without an initial field")
    lo, hi = config.initial_field_range
    return ControlField(rng.uniform(lo, hi, segments), total_time)


def randomized_ascent(
    model: HamiltonianModel,
    goal: GoalGate,
    config: AscentConfig,
    initial: Optional[ControlField] = None,
    *,
    segments: Optional[int] = None,
    total_time: Optional[float] = None,
) -> RunRecord:
    """Accept-if-better random search over the segment amplitudes.

    A trial ``E + eps * U[-1, 1]^K`` replaces ``E`` only if its fidelity is
    strictly larger.  The run succeeds once the fidelity reaches
    ``success_threshold`` and fails after ``max_tries`` consecutive
    rejections, after ``max_total_iterations`` accepted moves, or when the
    gain over the last ``stall_window`` trials is so small that keeping that
    pace would need more than ``stall_horizon`` further trials to reach the
    threshold.

    With ``config.confirm_traps`` a failed run is restarted from its final
    field with both step bounds reduced tenfold, and only a second failure
    is reported as one.
    """
    if goal.dim != model.dim:
        raise ValueError("goal and model dimensions differ")
    record = _randomized_ascent(model, goal, config, initial, segments, total_time)
    if record.success or not config.confirm_traps:
        return record
    retry_cfg = config.replace(
        step_size=config.step_size / 10, min_step=config.min_step / 10, confirm_traps=False,
        rng_seed=config.rng_seed + 1,
    )
    retry = _randomized_ascent(model, goal, retry_cfg, record.final_field, None, None)
    return RunRecord(
        success=retry.success,
        final_fidelity=retry.final_fidelity,
        fidelity_trace=record.fidelity_trace + retry.fidelity_trace[1:],
        fluence_trace=record.fluence_trace + retry.fluence_trace[1:],
        final_field=retry.final_field,
        iterations=record.iterations + retry.iterations,
        evaluations=record.evaluations + retry.evaluations,
        reason=retry.reason if retry.success else f"confirmed_{retry.reason}",
    )


def _randomized_ascent(model, goal, config, initial, segments, total_time) -> RunRecord:
    rng = np.random.default_rng(config.rng_seed)
    fld = _initial_field(model, goal, config, initial, segments, total_time, rng)
    a0, a1, a2 = model.h0, model.h1, model.h2_or_zero
    w_dag = np.ascontiguousarray(dagger(goal.w))
    dt = fld.dt
    k = fld.segment_count

    amps = np.array(fld.amplitudes)
    fid = float(_kernels.fidelity(a0, a1, a2, amps, dt, w_dag))
    fid_trace = [fid]
    flu_trace = [float(np.linalg.norm(amps))]
    iterations = evaluations = tries = 0
    eps = config.step_size
    halvings = 0
    window_start, window_fid = 0, fid
    reason = "converged"

    while fid < config.success_threshold:
        if iterations >= config.max_total_iterations:
            reason = "iteration_budget"
            break
        if tries >= config.max_tries:
            reason = "max_tries"
            break
        if evaluations - window_start >= config.stall_window:
            gain = fid - window_fid
            if gain <= 0 or (config.success_threshold - fid) * config.stall_window > gain * config.stall_horizon:
                reason = "stalled"
                break
            window_start, window_fid = evaluations, fid

        if config.step_rule == "halving":
            eps = max(0.02 * np.linalg.norm(amps), config.min_step) * 0.5**halvings
        delta = eps * rng.uniform(-1.0, 1.0, k)
        trial = amps + delta
        trial_fid = float(_kernels.fidelity(a0, a1, a2, trial, dt, w_dag))
        evaluations += 1
        if trial_fid > fid:
            amps, fid = trial, trial_fid
            tries = 0
            iterations += 1
            fid_trace.append(fid)
            flu_trace.append(float(np.linalg.norm(amps)))
            if config.step_rule == "adaptive":
                eps = min(eps * np.exp(0.25), config.max_step)
        else:
            tries += 1
            if config.step_rule == "adaptive":
                eps = max(eps * np.exp(-0.0625), config.min_step)
            elif tries % max(config.max_tries // 2, 1) == 0:
                halvings += 1

    return RunRecord(
        success=fid >= config.success_threshold,
        final_fidelity=fid,
        fidelity_trace=fid_trace,
        fluence_trace=flu_trace,
        final_field=fld.with_amplitudes(amps),
        iterations=iterations,
        evaluations=evaluations,
        reason=reason,
    )


def gradient_ascent(
    model: HamiltonianModel,
    goal: GoalGate,
    config: AscentConfig,
    initial: Optional[ControlField] = None,
    *,
    segments: Optional[int] = None,
    total_time: Optional[float] = None,
    grad_tol: float = 1e-10,
) -> RunRecord:
    """Steepest ascent with a backtracking step, for quick censuses.

    Uses the same config, initial-field sampling and record format as
    :func:`randomized_ascent`; ``max_tries`` bounds consecutive
    backtracking failures.
    """
    rng = np.random.default_rng(config.rng_seed)
    fld = _initial_field(model, goal, config, initial, segments, total_time, rng)
    fid = field_fidelity(model, fld, goal)
    fid_trace, flu_trace = [fid], [fld.norm()]
    step = 1.0
    iterations = evaluations = fails = 0
    reason = "converged"
    while fid < config.success_threshold:
        if iterations >= config.max_total_iterations:
            reason = "iteration_budget"
            break
        g = fidelity_gradient(model, fld, goal)
        gn = float(np.linalg.norm(g))
        if gn < grad_tol:
            reason = "critical_point"
            break
        trial = fld.with_amplitudes(fld.amplitudes + step * g / gn)
        trial_fid = field_fidelity(model, trial, goal)
        evaluations += 1
        if trial_fid > fid:
            fld, fid = trial, trial_fid
            step *= 1.5
            fails = 0
            iterations += 1
            fid_trace.append(fid)
            flu_trace.append(fld.norm())
        else:
            step *= 0.5
            fails += 1
            if fails >= min(config.max_tries, 60):
                reason = "max_tries"
                break
    return RunRecord(fid >= config.success_threshold, fid, fid_trace, flu_trace, fld, iterations, evaluations, reason)
