"""Compiled hot loop for end-point propagation.

Each segment exponential is a scaled Taylor polynomial in Horner form with
the degree picked from a 1-norm bound, followed by repeated squaring.  The
result agrees with the eigendecomposition route in :mod:`dynamics` to
~1e-14 and is only used where nothing but the end point is needed.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _matmul(a, b, out):
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0j
            for l in range(n):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc


@nb.njit(cache=True)
def _expm_into(x, p, tmp):
    # x is overwritten (scaled); p receives exp(x)
    n = x.shape[0]
    theta = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += abs(x[i, j])
        if col > theta:
            theta = col
    s = 0
    while theta > 0.5:
        theta *= 0.5
        s += 1
    if s > 0:
        f = 0.5 ** s
        for i in range(n):
            for j in range(n):
                x[i, j] *= f
    m = 1
    term = theta
    while term > 1e-17:
        m += 1
        term = term * theta / m
    for i in range(n):
        for j in range(n):
            p[i, j] = x[i, j] / m
        p[i, i] += 1.0
    for d in range(m - 1, 0, -1):
        inv = 1.0 / d
        _matmul(x, p, tmp)
        for i in range(n):
            for j in range(n):
                p[i, j] = tmp[i, j] * inv
            p[i, i] += 1.0
    for _ in range(s):
        _matmul(p, p, tmp)
        p[:, :] = tmp


@nb.njit(cache=True)
def endpoint(a0, a1, a2, amps, dt):
    """Time-ordered product of ``exp(dt (a0 + e a1 + e^2 a2))`` over ``amps``."""
    n = a0.shape[0]
    u = np.eye(n, dtype=np.complex128)
    x = np.empty((n, n), dtype=np.complex128)
    p = np.empty_like(x)
    tmp = np.empty_like(x)
    for k in range(amps.shape[0]):
        e = amps[k]
        e2 = e * e
        for i in range(n):
            for j in range(n):
                x[i, j] = dt * (a0[i, j] + e * a1[i, j] + e2 * a2[i, j])
        _expm_into(x, p, tmp)
        _matmul(p, u, tmp)
        u[:, :] = tmp
    return u


@nb.njit(cache=True)
def fidelity(a0, a1, a2, amps, dt, w_dag):
    u = endpoint(a0, a1, a2, amps, dt)
    n = u.shape[0]
    tr = 0j
    for i in range(n):
        for l in range(n):
            tr += w_dag[i, l] * u[l, i]
    return (tr.real * tr.real + tr.imag * tr.imag) / (n * n)


@nb.njit(cache=True)
def _pair(x, c):
    # Re Tr(x^dagger c)
    n = x.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            s += x[i, j].real * c[i, j].real + x[i, j].imag * c[i, j].imag
    return s


@nb.njit(cache=True)
def _singular_rhs(u, a0, a1, a2, b, cap, out, c, tmp, gen):
    # out = A(alpha(u)) u with E = -num/(2 den) clamped to [-cap, cap]
    n = u.shape[0]
    _matmul(u, b, tmp)
    for i in range(n):
        for j in range(n):
            acc = 0j
            for l in range(n):
                acc += tmp[i, l] * np.conj(u[j, l])
            c[i, j] = acc
    num = _pair(a1, c)
    den = _pair(a2, c)
    if den != 0.0:
        e = -0.5 * num / den
    else:
        e = cap if num <= 0.0 else -cap
    clamped = False
    if e > cap:
        e = cap
        clamped = True
    elif e < -cap:
        e = -cap
        clamped = True
    for i in range(n):
        for j in range(n):
            gen[i, j] = a0[i, j] + e * a1[i, j] + e * e * a2[i, j]
    _matmul(gen, u, out)
    return num, den, e, clamped


@nb.njit(cache=True)
def _reunitarize(u, tmp, tmp2, tol):
    # Newton-Schulz steps towards the polar factor while |U^dagger U - I| > tol
    n = u.shape[0]
    for _ in range(8):
        drift = 0.0
        for i in range(n):
            for j in range(n):
                acc = 0j
                for l in range(n):
                    acc += np.conj(u[l, i]) * u[l, j]
                if i == j:
                    acc -= 1.0
                tmp[i, j] = acc
                drift += acc.real * acc.real + acc.imag * acc.imag
        if np.sqrt(drift) <= tol:
            return
        for i in range(n):
            for j in range(n):
                tmp[i, j] = -0.5 * tmp[i, j]
            tmp[i, i] += 1.0
        _matmul(u, tmp, tmp2)
        u[:, :] = tmp2


@nb.njit(cache=True)
def singular_rk4(a0, a1, a2, b, total_time, steps, cap, tol):
    """Classical RK4 for the singular-trajectory initial value problem.

    Returns grid samples of ``U``, the numerator and denominator pairings,
    the extracted control and a per-step clamp flag.
    """
    n = a0.shape[0]
    h = total_time / steps
    samples = np.empty((steps + 1, n, n), dtype=np.complex128)
    nums = np.empty(steps + 1)
    dens = np.empty(steps + 1)
    ctrl = np.empty(steps + 1)
    clamps = np.zeros(steps + 1, dtype=np.bool_)
    u = np.eye(n, dtype=np.complex128)
    k1 = np.empty_like(u)
    k2 = np.empty_like(u)
    k3 = np.empty_like(u)
    k4 = np.empty_like(u)
    y = np.empty_like(u)
    c = np.empty_like(u)
    tmp = np.empty_like(u)
    tmp2 = np.empty_like(u)
    gen = np.empty_like(u)
    for s in range(steps + 1):
        samples[s] = u
        num, den, e, cl = _singular_rhs(u, a0, a1, a2, b, cap, k1, c, tmp, gen)
        nums[s] = num
        dens[s] = den
        ctrl[s] = e
        clamps[s] = cl
        if s == steps:
            break
        for i in range(n):
            for j in range(n):
                y[i, j] = u[i, j] + 0.5 * h * k1[i, j]
        _singular_rhs(y, a0, a1, a2, b, cap, k2, c, tmp, gen)
        for i in range(n):
            for j in range(n):
                y[i, j] = u[i, j] + 0.5 * h * k2[i, j]
        _singular_rhs(y, a0, a1, a2, b, cap, k3, c, tmp, gen)
        for i in range(n):
            for j in range(n):
                y[i, j] = u[i, j] + h * k3[i, j]
        _singular_rhs(y, a0, a1, a2, b, cap, k4, c, tmp, gen)
        for i in range(n):
            for j in range(n):
                u[i, j] += h / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        _reunitarize(u, tmp, tmp2, tol)
    return samples, nums, dens, ctrl, clamps
