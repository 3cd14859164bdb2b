"""Singular trajectories, singular controls and probes of their neighbourhoods.

For a direction ``B`` in su(n), a control is singular when
``<U_t^dagger (A1 + 2 E(t) A2) U_t, B> = 0`` for every ``t``.  Solving for
``E`` gives ``E = -alpha / 2`` with
``alpha = <U^dagger A1 U, B> / <U^dagger A2 U, B>``, and substituting back
into ``dU/dt = A(t) U`` yields a closed initial value problem for ``U``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .dynamics import ControlField, HamiltonianModel, Trajectory, propagate
from .landscape import AscentConfig, GoalGate, field_fidelity, left_gradient, randomized_ascent
from .matrix_core import is_su, random_su_from, trace_inner

BLOW_UP_REL = 1e-8
CONTROL_CAP = 1e3
JUMP_REL = 0.25


class UnsupportedModelError(ValueError):
    """Raised when a singular-control routine needs a polarizability term."""


class DegenerateProbeError(ValueError):
    """Raised when the denominator pairing vanishes at the identity."""


@dataclass(frozen=True, eq=False)
class SingularProbe:
    """Unit-norm direction ``B`` in su(n) that the end point cannot reach."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=complex)
        if not is_su(b, 1e-10):
            raise ValueError("probe direction must lie in su(n)")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError("probe direction must have unit norm")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def normalized(cls, b) -> "SingularProbe":
        b = np.asarray(b, dtype=complex)
        return cls(b / np.linalg.norm(b))

    @classmethod
    def random(cls, rng: np.random.Generator, n: int) -> "SingularProbe":
        return cls(random_su_from(rng, n, 1.0))


@dataclass(frozen=True, eq=False)
class SingularSolution:
    trajectory: Trajectory
    control_samples: np.ndarray  # E at the grid points
    defect: float
    blow_up_times: list
    denominator_floor: float
    clamped: bool = False
    numerators: np.ndarray = dc_field(default=None, repr=False)
    denominators: np.ndarray = dc_field(default=None, repr=False)

    @property
    def total_time(self) -> float:
        return float(self.trajectory.times[-1])

    @property
    def steps(self) -> int:
        return self.control_samples.size - 1

    @property
    def blown_up(self) -> bool:
        return bool(self.blow_up_times) or self.clamped

    @property
    def endpoint(self) -> np.ndarray:
        return self.trajectory.samples[-1]

    def spline(self) -> CubicSpline:
        return CubicSpline(self.trajectory.times, self.control_samples)

    def field(self, segments: Optional[int] = None) -> ControlField:
        """Piecewise-constant version sampled at segment midpoints."""
        segments = self.steps if segments is None else segments
        dt = self.total_time / segments
        mid = (np.arange(segments) + 0.5) * dt
        return ControlField(self.spline()(mid), self.total_time)

    @property
    def control(self) -> ControlField:
        return self.field()


@dataclass
class SaddleVerdict:
    classification: str  # "saddle", "candidate_trap" or "regular_maximum"
    trials_used: int
    positive_direction: Optional[np.ndarray] = None
    negative_direction: Optional[np.ndarray] = None


def _pole_times(times, nums, dens, ctrl, thr, jump=JUMP_REL):
    """Grid times where the extracted control diverges or is not resolved.

    Flags a node when the denominator is below ``thr``, when the
    denominator changes sign while the numerator keeps its sign, or when
    the control jumps by more than ``jump * (1 + |E|)`` in one step.
    Flags on adjacent nodes are merged into one event.
    """
    flagged = []
    for j in range(len(dens)):
        hit = abs(dens[j]) < thr
        if j > 0 and not hit:
            pole = dens[j - 1] * dens[j] < 0 and nums[j - 1] * nums[j] > 0
            big = jump * (1.0 + max(abs(ctrl[j]), abs(ctrl[j - 1])))
            hit = pole or abs(ctrl[j] - ctrl[j - 1]) > big
        if hit:
            flagged.append(j)
    events = []
    last = None
    for j in flagged:
        if last is None or j - last > 2:
            events.append(float(times[j]))
        last = j
    return events


def integrate_singular(
    model: HamiltonianModel,
    probe: SingularProbe,
    total_time: float,
    steps: int,
    control_cap: float = CONTROL_CAP,
) -> SingularSolution:
    """Fixed-step RK4 solution of the singular-trajectory problem from ``U_0 = I``.

    Each step is followed by a polar correction whenever ``|U^dagger U - I|``
    exceeds 1e-10.  Blow-up times are grid points where the denominator
    pairing drops below ``1e-8 |A2|``, where it changes sign while the
    numerator does not, or where the control jumps faster than the grid
    resolves (see :func:`_pole_times`); the integration continues through them with the
    control clamped to ``+-min(control_cap, (h |A2|)^(-1/2))`` and the
    solution is flagged as non-physical.
    """
    if model.h2 is None:
        raise UnsupportedModelError("singular controls of this form need a polarizability term")
    if steps < 1 or not total_time > 0:
        raise ValueError("need steps >= 1 and total_time > 0")
    b = np.ascontiguousarray(probe.b)
    if b.shape != model.h0.shape:
        raise ValueError("probe dimension does not match the model")
    thr = BLOW_UP_REL * np.linalg.norm(model.h2)
    if abs(trace_inner(model.h2, b)) < thr:
        raise DegenerateProbeError("denominator vanishes at t = 0")

    # keep h |E|^2 |A2| <= 1 so clamped stretches stay within RK4 stability
    h = total_time / steps
    cap = min(control_cap, 1.0 / np.sqrt(h * np.linalg.norm(model.h2)))
    samples, nums, dens, ctrl, clamps = _kernels.singular_rk4(
        model.h0, model.h1, model.h2, b, float(total_time), int(steps), float(cap), 1e-10
    )
    if not np.all(np.isfinite(ctrl)):
        raise FloatingPointError("singular integration diverged")
    times = np.linspace(0.0, total_time, steps + 1)
    defect = float(np.max(np.abs(nums + 2.0 * ctrl * dens)))
    return SingularSolution(
        trajectory=Trajectory(samples, times),
        control_samples=ctrl,
        defect=defect,
        blow_up_times=_pole_times(times, nums, dens, ctrl, thr),
        denominator_floor=float(np.min(np.abs(dens))),
        clamped=bool(np.any(clamps)),
        numerators=nums,
        denominators=dens,
    )


def singularity_pairings(model: HamiltonianModel, fld: ControlField, probe: SingularProbe, control_at_nodes):
    """``<U_t^dagger (A1 + 2 E(t) A2) U_t, B>`` at the segment boundaries of ``fld``."""
    _, traj = propagate(model, fld, keep_trajectory=True)
    u = traj.samples
    c = u @ probe.b @ np.conj(np.swapaxes(u, -1, -2))
    num = np.real(np.einsum("ij,kij->k", np.conj(model.h1), c))
    den = np.real(np.einsum("ij,kij->k", np.conj(model.h2), c))
    return num + 2.0 * np.asarray(control_at_nodes) * den


def verify_singularity(model: HamiltonianModel, solution: SingularSolution, probe: SingularProbe) -> float:
    """Re-derive the singularity defect by independent propagation.

    The extracted control is interpolated onto a grid with twice as many
    segments, propagated piecewise-constantly through :func:`propagate`,
    and the pairing is evaluated at every node of that grid.
    """
    if model.h2 is None:
        raise UnsupportedModelError("singular controls of this form need a polarizability term")
    segments = 2 * solution.steps
    spl = solution.spline()
    fld = solution.field(segments)
    nodes = fld.times
    return float(np.max(np.abs(singularity_pairings(model, fld, probe, spl(nodes)))))


def probe_goal_angle(probe_b, u_t, goal: GoalGate) -> float:
    """Angle between ``B`` and the line through ``U_T^dagger grad J``."""
    g = left_gradient(u_t, goal)
    gn = np.linalg.norm(g)
    if gn == 0.0:
        return 0.0
    c = abs(trace_inner(probe_b, g)) / (np.linalg.norm(probe_b) * gn)
    return float(np.arccos(min(1.0, c)))


def seek_singular_critical(
    model: HamiltonianModel,
    goal: GoalGate,
    seed: int,
    angle_tol: float = 1e-3,
    *,
    total_time: float = 2.0,
    steps: int = 400,
    budget: int = 3000,
    initial_probe: Optional[SingularProbe] = None,
):
    """Randomised descent over unit ``B`` towards a singular critical control.

    Minimises the angle between ``B`` and the line through the
    left-trivialised fidelity gradient at the end of the singular
    trajectory generated by ``B`` (``B`` and ``-B`` give the same
    trajectory).  Proposals ``normalize(B + sigma xi)`` are accepted only if
    they lower the angle; ``sigma`` adapts with the 1/5 success rule.
    Trajectories with blow-ups score ``pi / 2``.

    Returns ``(probe, solution, angle)`` on success and ``None`` once the
    evaluation budget is spent.
    """
    if model.h2 is None:
        raise UnsupportedModelError("singular controls of this form need a polarizability term")
    rng = np.random.default_rng(seed)
    n = model.dim

    def score(b):
        try:
            sol = integrate_singular(model, SingularProbe(b), total_time, steps)
        except DegenerateProbeError:
            return np.pi / 2, None
        if sol.blown_up:
            return np.pi / 2, sol
        return probe_goal_angle(b, sol.endpoint, goal), sol

    b = (initial_probe or SingularProbe.random(rng, n)).b.copy()
    best, sol = score(b)
    sigma = 0.3
    for _ in range(budget):
        if best <= angle_tol and sol is not None:
            return SingularProbe(b), sol, best
        xi = random_su_from(rng, n, 1.0)
        cand = b + sigma * xi
        cand = cand / np.linalg.norm(cand)
        val, cand_sol = score(cand)
        if val < best:
            b, best, sol = cand, val, cand_sol
            sigma = min(sigma * np.exp(0.25), 1.0)
        else:
            sigma = max(sigma * np.exp(-0.0625), 1e-9)
    if best <= angle_tol and sol is not None:
        return SingularProbe(b), sol, best
    return None


def _unit_direction(rng: np.random.Generator, k: int) -> np.ndarray:
    v = rng.standard_normal(k)
    return v / np.linalg.norm(v)


def saddle_probe(
    model: HamiltonianModel,
    goal: GoalGate,
    fld: ControlField,
    budget: int = 200,
    seed: int = 0,
) -> SaddleVerdict:
    """Look for perturbations that change the fidelity with opposite signs.

    Perturbations point uniformly on the sphere with norm
    ``1e-3 * max(1, |E|)``.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    f0 = field_fidelity(model, fld, goal)
    if f0 >= 1.0 - 1e-9:
        return SaddleVerdict("regular_maximum", 0)
    rng = np.random.default_rng(seed)
    radius = 1e-3 * max(1.0, fld.norm())
    up = down = None
    for trial in range(1, budget + 1):
        d = radius * _unit_direction(rng, fld.segment_count)
        df = field_fidelity(model, fld.with_amplitudes(fld.amplitudes + d), goal) - f0
        if df > 0 and up is None:
            up = d
        elif df < 0 and down is None:
            down = d
        if up is not None and down is not None:
            return SaddleVerdict("saddle", trial, up, down)
    return SaddleVerdict("candidate_trap", budget, up, down)


def neighborhood_escape(
    model: HamiltonianModel,
    goal: GoalGate,
    fld: ControlField,
    count: int,
    seed: int,
    config: Optional[AscentConfig] = None,
    radius: float = 1e-3,
) -> float:
    """Fraction of ascents started near ``fld`` that reach the success threshold.

    Each start is ``E + r u`` with ``u`` uniform on the sphere and ``r``
    uniform in ``[0, radius]``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    config = config or AscentConfig()
    ss = np.random.SeedSequence(seed)
    hits = 0
    for i, child in enumerate(ss.spawn(count)):
        rng = np.random.default_rng(child)
        d = rng.uniform(0.0, radius) * _unit_direction(rng, fld.segment_count)
        run_cfg = config.replace(rng_seed=int(child.generate_state(1)[0]))
        rec = randomized_ascent(model, goal, run_cfg, fld.with_amplitudes(fld.amplitudes + d))
        hits += rec.success
    return hits / count
