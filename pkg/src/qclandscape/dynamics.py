"""Piecewise-constant controls and propagation of ``dU/dt = A(t) U``.

The generator is ``A(t) = A0 + E(t) A1 + E(t)^2 A2`` with ``A0, A1, A2``
the skew-Hermitian forms ``iH0, iH1, iH2`` (hbar = 1).  Segment ``k``
multiplies the partial product from the left, so the end point is
``P_{K-1} ... P_1 P_0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import _kernels
from .matrix_core import dagger, is_skew_hermitian, is_su

DEFAULT_SEGMENTS = 500


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ControlField:
    """Real field that is constant on ``K`` equal segments of ``[0, T]``."""

    amplitudes: np.ndarray
    total_time: float

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).ravel()
        if amps.size == 0:
            raise ValueError("control field needs at least one segment")
        if not np.all(np.isfinite(amps)):
            raise ValueError("control amplitudes must be finite")
        if not (np.isfinite(self.total_time) and self.total_time > 0):
            raise ValueError("total_time must be positive")
        object.__setattr__(self, "amplitudes", _frozen(amps))
        object.__setattr__(self, "total_time", float(self.total_time))

    @classmethod
    def zeros(cls, segments: int, total_time: float) -> "ControlField":
        return cls(np.zeros(segments), total_time)

    @classmethod
    def from_function(cls, func, segments: int, total_time: float) -> "ControlField":
        """Sample ``func`` at segment midpoints."""
        dt = total_time / segments
        t = (np.arange(segments) + 0.5) * dt
        return cls(np.asarray([func(x) for x in t], dtype=float), total_time)

    @property
    def segment_count(self) -> int:
        return self.amplitudes.size

    @property
    def dt(self) -> float:
        return self.total_time / self.segment_count

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.segment_count + 1)

    def norm(self) -> float:
        """Euclidean norm of the amplitude vector."""
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amps) -> "ControlField":
        return ControlField(amps, self.total_time)

    def __eq__(self, other):
        if not isinstance(other, ControlField):
            return NotImplemented
        return self.total_time == other.total_time and np.array_equal(
            self.amplitudes, other.amplitudes
        )


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Drift, dipole and optional polarizability generators.

    ``unitary_mode`` admits generators with a trace (u(n) rather than
    su(n)); the trace only contributes a global phase.
    """

    h0: np.ndarray
    h1: np.ndarray
    h2: Optional[np.ndarray] = None
    unitary_mode: bool = False
    name: str = dc_field(default="", compare=False)

    def __post_init__(self):
        mats = [self.h0, self.h1] + ([] if self.h2 is None else [self.h2])
        mats = [np.asarray(m, dtype=complex) for m in mats]
        n = mats[0].shape[0]
        check = is_skew_hermitian if self.unitary_mode else is_su
        for label, m in zip(("h0", "h1", "h2"), mats):
            if m.shape != (n, n):
                raise ValueError(f"{label} has shape {m.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{label} has non-finite entries")
            if not check(m, 1e-10):
                kind = "skew-Hermitian" if self.unitary_mode else "in su(n)"
                raise ValueError(f"{label} is not {kind}")
        object.__setattr__(self, "h0", _frozen(mats[0]))
        object.__setattr__(self, "h1", _frozen(mats[1]))
        object.__setattr__(self, "h2", None if self.h2 is None else _frozen(mats[2]))

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def has_polarizability(self) -> bool:
        return self.h2 is not None

    @property
    def h2_or_zero(self) -> np.ndarray:
        return np.zeros_like(self.h0) if self.h2 is None else self.h2

    def with_h2(self, h2) -> "HamiltonianModel":
        return HamiltonianModel(self.h0, self.h1, h2, self.unitary_mode, self.name)

    def without_h2(self) -> "HamiltonianModel":
        return HamiltonianModel(self.h0, self.h1, None, self.unitary_mode, self.name)

    def generators(self) -> list:
        return [self.h0, self.h1] + ([] if self.h2 is None else [self.h2])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Partial products at the ``K + 1`` segment boundaries."""

    samples: np.ndarray  # (K + 1, n, n)
    times: np.ndarray

    @property
    def endpoint(self) -> np.ndarray:
        return self.samples[-1]


def generator_at(model: HamiltonianModel, e: float) -> np.ndarray:
    if not np.isfinite(e):
        raise ValueError("field value must be finite")
    a = model.h0 + e * model.h1
    if model.h2 is not None:
        a = a + (e * e) * model.h2
    return a


def _segment_generators(model: HamiltonianModel, amps: np.ndarray) -> np.ndarray:
    e = amps[:, None, None]
    a = model.h0[None] + e * model.h1[None]
    if model.h2 is not None:
        a = a + (e * e) * model.h2[None]
    return a


def _segment_spectra(model: HamiltonianModel, fld: ControlField):
    """Eigen-decompositions ``-i A_k = V_k diag(w_k) V_k^dagger`` of every segment."""
    a = _segment_generators(model, fld.amplitudes)
    w, v = np.linalg.eigh(-1j * a)
    return w, v


def _check_dims(model: HamiltonianModel, fld: ControlField) -> None:
    if not isinstance(fld, ControlField):
        raise ValueError("field must be a ControlField")
    if fld.segment_count < 1:
        raise ValueError("empty control field")


def propagate(model: HamiltonianModel, fld: ControlField, keep_trajectory: bool = False):
    """End-point propagator and, optionally, the full trajectory.

    Returns ``(U_T, trajectory)`` where ``trajectory`` is ``None`` unless
    requested.
    """
    _check_dims(model, fld)
    w, v = _segment_spectra(model, fld)
    props = (v * np.exp(1j * fld.dt * w)[:, None, :]) @ dagger(v)
    n = model.dim
    u = np.eye(n, dtype=complex)
    if keep_trajectory:
        samples = np.empty((fld.segment_count + 1, n, n), dtype=complex)
        samples[0] = u
        for k in range(fld.segment_count):
            u = props[k] @ u
            samples[k + 1] = u
        return u, Trajectory(samples, fld.times)
    for k in range(fld.segment_count):
        u = props[k] @ u
    return u, None


def fast_endpoint(model: HamiltonianModel, fld_or_amps, total_time: Optional[float] = None) -> np.ndarray:
    """End point only, through the compiled kernel."""
    if isinstance(fld_or_amps, ControlField):
        amps, total_time = fld_or_amps.amplitudes, fld_or_amps.total_time
    else:
        amps = np.ascontiguousarray(fld_or_amps, dtype=float)
    dt = total_time / amps.size
    return _kernels.endpoint(model.h0, model.h1, model.h2_or_zero, np.ascontiguousarray(amps), dt)


def _phi(theta: np.ndarray) -> np.ndarray:
    """``(exp(i theta) - 1) / (i theta)`` without cancellation."""
    return np.exp(0.5j * theta) * np.sinc(theta / (2 * np.pi))


def endpoint_variation_basis(model: HamiltonianModel, fld: ControlField, traj: Trajectory) -> np.ndarray:
    """Left-trivialised derivative of the end point, one element per segment.

    Element ``k`` is ``dU_T/dE_k`` expressed as ``U_T^dagger dU_T/dE_k``,
    which equals ``U_k^dagger M_k U_k`` with ``U_k`` the partial product at
    the start of segment ``k`` and

        M_k = int_0^dt exp(-s A_k) (A1 + 2 E_k A2) exp(s A_k) ds,

    evaluated exactly in the eigenbasis of ``A_k``.  For short segments
    ``M_k ~ dt (A1 + 2 E_k A2)``.  Returns an array of shape ``(K, n, n)``.
    """
    _check_dims(model, fld)
    k = fld.segment_count
    if traj.samples.shape[0] != k + 1 or not np.allclose(traj.times, fld.times, rtol=0, atol=1e-12):
        raise ValueError("trajectory does not match the control field")
    w, v = _segment_spectra(model, fld)
    p0 = (v[0] * np.exp(1j * fld.dt * w[0])) @ dagger(v[0])
    if np.linalg.norm(p0 @ traj.samples[0] - traj.samples[1]) > 1e-8:
        raise ValueError("trajectory was not produced by this model and field")

    x = model.h1[None] + 0.0 * fld.amplitudes[:, None, None]
    if model.h2 is not None:
        x = x + 2.0 * fld.amplitudes[:, None, None] * model.h2[None]
    xe = dagger(v) @ x @ v
    # exp(-sA) X exp(sA) in the eigenbasis picks up exp(i s (w_l - w_j))
    gap = w[:, None, :] - w[:, :, None]
    m = v @ (xe * (fld.dt * _phi(fld.dt * gap))) @ dagger(v)
    u = traj.samples[:-1]
    return dagger(u) @ m @ u
