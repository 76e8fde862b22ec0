"""Compiled inner loops for the atom-cavity equations of motion.

The lattice is stored padded by two zero layers on every side so the
(+-2, 0), (0, +-2) and (+-1, +-1) stencils need no bounds tests.  All kernels
work on one trajectory; ensembles loop over trajectories in Python so each
trajectory's arithmetic is independent of batch layout.
"""

import numpy as np
import numba

PAD = 2

METHOD_RK4 = 0
METHOD_IFRK4 = 1

# columns of the observable block written at each sample
OBS_ABS_A2 = 0
OBS_THETA_RE = 1
OBS_THETA_IM = 2
OBS_BUNCHING = 3
OBS_N11 = 4
OBS_NORM = 5
N_OBS = 6


@numba.njit(cache=True)
def rhs(P, a, eps, dc, kin, U0, kappa, D):
    """Write dphi/dt into D (padded) and return da/dt.

    eps is the pump depth in rad/s (eps_tilde * omega_rec); kin holds the
    kinetic frequencies on the padded grid, or zeros when the kinetic phase
    is integrated exactly by the caller.
    """
    L = P.shape[0] - 2 * PAD
    a2 = a.real * a.real + a.imag * a.imag
    if eps < 0.0:
        eps = 0.0
    eta = np.sqrt(eps * U0)
    diag = 0.5 * eps + 0.5 * U0 * a2
    ce = 0.25 * eps
    cu = 0.25 * U0 * a2
    cx = 0.5 * eta * a.real
    b_acc = 0.0
    th_acc = 0.0
    for i in range(PAD, L + PAD):
        for j in range(PAD, L + PAD):
            p = P[i, j]
            c = P[i, j - 2] + P[i, j + 2]
            d = P[i - 1, j - 1] + P[i - 1, j + 1] + P[i + 1, j - 1] + P[i + 1, j + 1]
            s = (kin[i, j] + diag) * p + ce * (P[i - 2, j] + P[i + 2, j]) + cu * c + cx * d
            D[i, j] = complex(s.imag, -s.real)
            b_acc += 0.5 * (p.real * p.real + p.imag * p.imag) + 0.25 * (p.real * c.real + p.imag * c.imag)
            th_acc += 0.25 * (p.real * d.real + p.imag * d.imag)
    x = (-dc + U0 * b_acc) * a + eta * th_acc
    return complex(x.imag, -x.real) - kappa * a


@numba.njit(cache=True)
def observe(P, a, out):
    L = P.shape[0] - 2 * PAD
    c = L // 2 + PAD
    b_acc = 0.0
    th = 0j
    norm = 0.0
    for i in range(PAD, L + PAD):
        for j in range(PAD, L + PAD):
            p = P[i, j]
            pc = p.conjugate()
            b_acc += 0.5 * (p.real * p.real + p.imag * p.imag) + 0.25 * (pc * (P[i, j - 2] + P[i, j + 2])).real
            th += 0.25 * pc * (P[i - 1, j - 1] + P[i - 1, j + 1] + P[i + 1, j - 1] + P[i + 1, j + 1])
            norm += p.real * p.real + p.imag * p.imag
    n11 = 0.0
    for di in (-1, 1):
        for dj in (-1, 1):
            q = P[c + di, c + dj]
            n11 += q.real * q.real + q.imag * q.imag
    out[OBS_ABS_A2] = a.real * a.real + a.imag * a.imag
    out[OBS_THETA_RE] = th.real
    out[OBS_THETA_IM] = th.imag
    out[OBS_BUNCHING] = b_acc
    out[OBS_N11] = n11
    out[OBS_NORM] = norm


@numba.njit(cache=True)
def advance(P, a, eps3, dc3, noise, kin, eh, ef, U0, kappa, dt, every, method, obs):
    """Take len(eps3) fixed steps from (P, a); P is updated in place.

    eps3/dc3 hold the pump depth and bare detuning at t, t+dt/2, t+dt for
    each step.  noise[s] is the complex cavity increment added after step s.
    One row of obs is filled every `every` steps.  Returns (a, n_finite)
    where n_finite < len(eps3) flags the first step that produced a
    non-finite amplitude.
    """
    n = eps3.shape[0]
    Lp = P.shape[0]
    k1 = np.zeros_like(P)
    k2 = np.zeros_like(P)
    k3 = np.zeros_like(P)
    k4 = np.zeros_like(P)
    T = np.zeros_like(P)
    h = 0.5 * dt
    w = dt / 6.0
    row = 0
    for s in range(n):
        ka = rhs(P, a, eps3[s, 0], dc3[s, 0], kin, U0, kappa, k1)
        if method == METHOD_RK4:
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = P[i, j] + h * k1[i, j]
            kb = rhs(T, a + h * ka, eps3[s, 1], dc3[s, 1], kin, U0, kappa, k2)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = P[i, j] + h * k2[i, j]
            kc = rhs(T, a + h * kb, eps3[s, 1], dc3[s, 1], kin, U0, kappa, k3)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = P[i, j] + dt * k3[i, j]
            kd = rhs(T, a + dt * kc, eps3[s, 2], dc3[s, 2], kin, U0, kappa, k4)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    P[i, j] += w * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        else:
            # integrating-factor RK4: eh/ef = exp(-i kinetic dt/2), exp(-i kinetic dt)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = eh[i, j] * (P[i, j] + h * k1[i, j])
            kb = rhs(T, a + h * ka, eps3[s, 1], dc3[s, 1], kin, U0, kappa, k2)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = eh[i, j] * P[i, j] + h * k2[i, j]
            kc = rhs(T, a + h * kb, eps3[s, 1], dc3[s, 1], kin, U0, kappa, k3)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    T[i, j] = ef[i, j] * P[i, j] + dt * eh[i, j] * k3[i, j]
            kd = rhs(T, a + dt * kc, eps3[s, 2], dc3[s, 2], kin, U0, kappa, k4)
            for i in range(PAD, Lp - PAD):
                for j in range(PAD, Lp - PAD):
                    P[i, j] = ef[i, j] * P[i, j] + w * (
                        ef[i, j] * k1[i, j] + 2.0 * eh[i, j] * (k2[i, j] + k3[i, j]) + k4[i, j]
                    )
        a = a + w * (ka + 2.0 * kb + 2.0 * kc + kd) + noise[s]
        if not (np.isfinite(a.real) and np.isfinite(a.imag)):
            return a, s
        if (s + 1) % every == 0:
            observe(P, a, obs[row])
            row += 1
            if not np.isfinite(obs[row - 1, OBS_NORM]):
                return a, s
    return a, n
