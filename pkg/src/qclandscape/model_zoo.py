"""Concrete systems: the uncontrollable Heisenberg pair, system E, random tuples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import HamiltonianModel
from .landscape import GoalGate
from .matrix_core import (
    IDENTITY_2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    random_su,
    random_su_from,
    random_unitary_from,
    to_special,
)


@dataclass(frozen=True)
class HeisenbergParams:
    """Coupling strengths ``(Jx, Jy, Jz)``."""

    jx: float
    jy: float
    jz: float

    @classmethod
    def random(cls, rng: np.random.Generator) -> "HeisenbergParams":
        """Uniform on the unit sphere."""
        v = rng.standard_normal(3)
        v = v / np.linalg.norm(v)
        return cls(*map(float, v))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.jx, self.jy, self.jz])


def heisenberg_model(params: HeisenbergParams) -> HamiltonianModel:
    """Two coupled spins driven by a z field on the second spin (no polarizability)."""
    j = params.vector
    if not np.all(np.isfinite(j)):
        raise ValueError("couplings must be finite")
    h0 = 1j * (
        j[0] * np.kron(PAULI_X, PAULI_X) + j[1] * np.kron(PAULI_Y, PAULI_Y) + j[2] * np.kron(PAULI_Z, PAULI_Z)
    )
    h1 = 1j * np.kron(IDENTITY_2, PAULI_Z)
    return HamiltonianModel(h0, h1, None, name="heisenberg")


def with_polarizability(model: HamiltonianModel, seed: int, norm: float) -> HamiltonianModel:
    """Add a seeded random ``iH2`` with Frobenius norm ``norm``."""
    if not norm > 0:
        raise ValueError("norm must be positive")
    return model.with_h2(random_su(model.dim, seed, norm))


@dataclass(frozen=True)
class SystemEParams:
    a: float = 5.0 * np.sqrt(2.0 / 3.0)
    b: float = 4.0
    c: float = 1.0
    theta: float = 2.0 * np.pi / 3.0
    phi: float = -3.0 * np.pi / 4.0
    alpha: float = np.pi / 1000.0
    total_time: float = 1000.0
    variant: bool = False

    def __post_init__(self):
        if not self.variant and not _is_default(self):
            raise ValueError("system E parameters are fixed; pass variant=True to override")


def _is_default(p: SystemEParams) -> bool:
    d = SystemEParams.__dataclass_fields__
    return all(getattr(p, f) == d[f].default for f in d if f != "variant")


SYSTEM_E_H2_RATIO = 0.1


def system_e_hamiltonians(params: SystemEParams = SystemEParams()):
    """Hermitian ``H0``, ``H1`` and the goal ``W`` exactly as defined (with trace)."""
    p = params
    h0 = np.diag([1.0 + p.alpha, 1.0, 2.0]).astype(complex)
    h1 = np.array([[-p.a, -1.0, 0.0], [-1.0, -p.b, -1.0], [0.0, -1.0, -p.c]], dtype=complex)
    phases = np.diag([np.exp(1j * p.theta), -1j * np.exp(-1j * p.phi), -1j * np.exp(1j * p.phi)])
    w = phases @ np.diag(np.exp(-1j * np.diag(h0).real * p.total_time))
    return h0, h1, w


def system_e(with_h2_seed: Optional[int] = None, params: SystemEParams = SystemEParams()):
    """Three-level system with a known zero-field trap.

    The generators follow the Schroedinger convention ``dU/dt = -i H U``,
    i.e. ``A0 = -i H0`` and ``A1 = -i H1``; they keep their trace
    (``unitary_mode``).  The goal is rescaled by a global phase into SU(3),
    which leaves the fidelity unchanged.  With ``with_h2_seed`` a random
    traceless ``A2`` of norm ``0.1 |A1|`` is added.

    Returns ``(model, goal, total_time)``.
    """
    h0, h1, w = system_e_hamiltonians(params)
    a0, a1 = -1j * h0, -1j * h1
    a2 = None
    if with_h2_seed is not None:
        a2 = random_su(3, with_h2_seed, SYSTEM_E_H2_RATIO * np.linalg.norm(a1))
    model = HamiltonianModel(a0, a1, a2, unitary_mode=True, name="system_e")
    return model, GoalGate(to_special(w)), params.total_time


def random_tuple(
    n: int,
    seed: int,
    norm_h0: float = 1.0,
    norm_h1: float = 1.0,
    norm_h2: Optional[float] = None,
):
    """Seeded ``(model, goal)`` with random su(n) generators and a Haar goal."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    h0 = random_su_from(rng, n, norm_h0)
    h1 = random_su_from(rng, n, norm_h1)
    h2_draw = random_su_from(rng, n, 1.0)
    goal = GoalGate(random_unitary_from(rng, n))
    h2 = None if norm_h2 is None else h2_draw * norm_h2
    return HamiltonianModel(h0, h1, h2, name="random"), goal


def random_heisenberg_tuple(seed: int, h2_norm: Optional[float] = None):
    """Seeded ``(model, goal)`` from the Heisenberg family, optionally with ``iH2``."""
    rng = np.random.default_rng(seed)
    params = HeisenbergParams.random(rng)
    h2_draw = random_su_from(rng, 4, 1.0)
    goal = GoalGate(random_unitary_from(rng, 4))
    model = heisenberg_model(params)
    if h2_norm is not None:
        model = model.with_h2(h2_draw * h2_norm)
    return model, goal
