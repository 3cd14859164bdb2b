import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import expm_taylor, propagate_loop
from qclandscape.dynamics import (
    ControlField,
    HamiltonianModel,
    endpoint_variation_basis,
    fast_endpoint,
    generator_at,
    propagate,
)
from qclandscape.matrix_core import expm_skew, random_su, unitarity_defect
from qclandscape.model_zoo import random_tuple

seeds = st.integers(0, 2**31 - 1)


def model_with_h2(n=4, seed=0, ratio=0.3):
    return random_tuple(n, seed, norm_h2=ratio)[0]


def random_field(seed, k=40, t=3.0, scale=1.0):
    return ControlField(np.random.default_rng(seed).uniform(-scale, scale, k), t)


def test_generator_at_cases():
    m = model_with_h2(3, 1)
    assert np.array_equal(generator_at(m, 0.0), m.h0)
    assert np.allclose(generator_at(m.without_h2(), 2.0), m.h0 + 2 * m.h1, atol=1e-15)
    assert np.allclose(generator_at(m, 2.0), m.h0 + 2 * m.h1 + 4 * m.h2, atol=1e-15)


def test_generator_at_rejects_nan():
    with pytest.raises(ValueError):
        generator_at(model_with_h2(), float("nan"))


def test_model_validation():
    with pytest.raises(ValueError):
        HamiltonianModel(np.eye(2) * 1j, random_su(2, 0))
    with pytest.raises(ValueError):
        HamiltonianModel(random_su(2, 0), random_su(3, 0))


def test_field_validation():
    with pytest.raises(ValueError):
        ControlField([], 1.0)
    with pytest.raises(ValueError):
        ControlField([np.inf], 1.0)
    with pytest.raises(ValueError):
        ControlField([1.0], 0.0)
    f = ControlField([1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        f.amplitudes[0] = 3.0


def test_zero_field_no_drift_is_identity():
    m = HamiltonianModel(np.zeros((3, 3), dtype=complex), random_su(3, 1))
    u, _ = propagate(m, ControlField.zeros(10, 2.0))
    assert np.allclose(u, np.eye(3), atol=1e-15)


def test_zero_field_is_drift_exponential():
    m = model_with_h2(4, 2)
    u, _ = propagate(m, ControlField.zeros(25, 1.7))
    assert np.linalg.norm(u - expm_skew(m.h0, 1.7)) <= 1e-12


def test_propagate_matches_product_oracle():
    m = model_with_h2(3, 4)
    f = random_field(1, k=30)
    gens = [generator_at(m, e) for e in f.amplitudes]
    u, _ = propagate(m, f)
    assert np.linalg.norm(u - propagate_loop(gens, f.dt)) <= 1e-11


def test_fast_endpoint_agrees():
    m = model_with_h2(4, 5)
    f = random_field(2, k=250, t=20.0)
    u, _ = propagate(m, f)
    assert np.linalg.norm(u - fast_endpoint(m, f)) <= 1e-11


def test_smooth_field_refinement():
    m = model_with_h2(3, 6, ratio=0.5)

    def pulse(t):
        return np.sin(1.3 * t) + 0.5 * np.cos(0.4 * t)

    def end(k):
        return propagate(m, ControlField.from_function(pulse, k, 4.0))[0]

    ref = end(12800)
    errs = [np.linalg.norm(end(k) - ref) for k in (100, 200, 400)]
    assert np.linalg.norm(end(100) - end(3200)) <= 1e-3
    # first order or better
    assert errs[1] <= errs[0] / 1.9 and errs[2] <= errs[1] / 1.9


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 5), st.floats(0.1, 50.0))
def test_endpoint_special_unitary(seed, n, horizon):
    m = random_tuple(n, seed, norm_h2=0.7)[0]
    f = ControlField(np.random.default_rng(seed).normal(0, 3, 64), horizon)
    u, traj = propagate(m, f, keep_trajectory=True)
    assert unitarity_defect(u) <= 1e-9
    assert abs(np.linalg.det(u) - 1) <= 1e-9
    assert np.array_equal(traj.endpoint, u)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 60))
def test_concatenation(seed, k):
    m = model_with_h2(3, seed % 1000)
    f = random_field(seed, k=2 * k, t=5.0)
    u, _ = propagate(m, f)
    first = ControlField(f.amplitudes[:k], 2.5)
    second = ControlField(f.amplitudes[k:], 2.5)
    u1, _ = propagate(m, first)
    u2, _ = propagate(m, second)
    assert np.linalg.norm(u2 @ u1 - u) <= 1e-10


def basis_for(m, f):
    _, traj = propagate(m, f, keep_trajectory=True)
    return endpoint_variation_basis(m, f, traj)


def test_basis_without_h2_is_dipole_to_first_order():
    m = model_with_h2(4, 7).without_h2()
    for k in (50, 100):
        f = ControlField.from_function(np.sin, k, 2.0)
        _, traj = propagate(m, f, keep_trajectory=True)
        u = traj.samples[:-1]
        approx = f.dt * np.conj(np.swapaxes(u, 1, 2)) @ m.h1 @ u
        err = np.max(np.linalg.norm(basis_for(m, f) - approx, axis=(1, 2)))
        assert err <= 2.0 * f.dt**2 * np.linalg.norm(m.h0 + m.h1)


def test_basis_zero_field_ignores_h2():
    m = model_with_h2(4, 8)
    f = ControlField.zeros(20, 2.0)
    assert np.array_equal(basis_for(m, f), basis_for(m.without_h2(), f))


def test_basis_first_zero_segment_ignores_h2():
    m = model_with_h2(4, 9)
    amps = np.random.default_rng(0).uniform(-1, 1, 20)
    amps[0] = 0.0
    f = ControlField(amps, 2.0)
    assert np.array_equal(basis_for(m, f)[0], basis_for(m.without_h2(), f)[0])


def test_basis_directional_derivative_matches_finite_difference():
    m = model_with_h2(4, 10)
    f = random_field(3, k=40)
    d = np.random.default_rng(4).standard_normal(40)
    h = 1e-6
    up, _ = propagate(m, f.with_amplitudes(f.amplitudes + h * d))
    dn, _ = propagate(m, f.with_amplitudes(f.amplitudes - h * d))
    u, _ = propagate(m, f)
    fd = (up - dn) / (2 * h)
    analytic = u @ np.einsum("k,kij->ij", d, basis_for(m, f))
    assert np.linalg.norm(fd - analytic) / np.linalg.norm(analytic) <= 1e-5


def test_basis_first_order_consistency():
    m = model_with_h2(4, 11)
    f = random_field(5, k=30)
    u, _ = propagate(m, f)
    basis = basis_for(m, f)
    rng = np.random.default_rng(6)
    for _ in range(20):
        d = rng.standard_normal(30)
        d /= np.linalg.norm(d)
        errs = []
        for h in (1e-2, 5e-3):
            up, _ = propagate(m, f.with_amplitudes(f.amplitudes + h * d))
            lin = u @ expm_taylor(h * np.einsum("k,kij->ij", d, basis))
            errs.append(np.linalg.norm(up - lin))
        assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_basis_rank_full_for_controllable_model():
    m = model_with_h2(4, 12)
    basis = basis_for(m, random_field(7, k=60, t=10.0))
    vecs = np.concatenate([basis.real.reshape(60, -1), basis.imag.reshape(60, -1)], axis=1)
    s = np.linalg.svd(vecs, compute_uv=False)
    assert np.sum(s > 1e-8 * s[0]) == 15


def test_basis_rejects_foreign_trajectory():
    m = model_with_h2(4, 13)
    f = random_field(8)
    _, traj = propagate(m, random_field(9), keep_trajectory=True)
    with pytest.raises(ValueError):
        endpoint_variation_basis(m, f, traj)
    _, short = propagate(m, random_field(9, k=10), keep_trajectory=True)
    with pytest.raises(ValueError):
        endpoint_variation_basis(m, f, short)
