"""Independent reference: dense single-particle Hamiltonian by spatial quadrature.

Matrix elements <n,m| V(y,z) |n',m'> of the lattice potentials are computed
by integrating the plane waves exp(i(n y + m z)) over one period on a grid
fine enough to be exact for these trigonometric polynomials.  Nothing here
uses the stencil code of the package.
"""

import numpy as np


def basis(n_max):
    ns = np.arange(-n_max, n_max + 1)
    return [(n, m) for n in ns for m in ns]


def potential_matrix(V, n_max, grid=64):
    """Dense matrix of multiplication by V(y, z) (kz = z, ky = y) in the plane-wave basis."""
    y = np.arange(grid) * 2 * np.pi / grid
    Y, Z = np.meshgrid(y, y, indexing="ij")
    Vg = V(Y, Z)
    states = basis(n_max)
    waves = np.array([np.exp(1j * (n * Y + m * Z)) for n, m in states])  # (N, grid, grid)
    flat = waves.reshape(len(states), -1)
    return (np.conj(flat) * Vg.ravel()) @ flat.T / grid**2


def single_particle(n_max, omega_rec, eps_rate, U0, a, eta):
    """H/hbar acting on the mode vector (row-major over n, m)."""
    states = basis(n_max)
    K = np.diag([omega_rec * (n * n + m * m) for n, m in states]).astype(complex)
    C2y = potential_matrix(lambda y, z: np.cos(y) ** 2, n_max)
    C2z = potential_matrix(lambda y, z: np.cos(z) ** 2, n_max)
    Cyz = potential_matrix(lambda y, z: np.cos(y) * np.cos(z), n_max)
    H = K + eps_rate * C2y + U0 * abs(a) ** 2 * C2z + eta * 2 * a.real * Cyz
    return H, C2z, Cyz


def total_energy(phi, a, n_max, omega_rec, eps_rate, U0, eta, delta_c):
    """Classical H(phi, a)/hbar."""
    v = phi.ravel()
    H, _, _ = single_particle(n_max, omega_rec, eps_rate, U0, a, eta)
    return float(np.real(-delta_c * abs(a) ** 2 + np.conj(v) @ H @ v))


def cavity_force(phi, a, n_max, U0, eta, delta_c):
    """dH/da* for the classical energy above."""
    v = phi.ravel()
    C2z = potential_matrix(lambda y, z: np.cos(z) ** 2, n_max)
    Cyz = potential_matrix(lambda y, z: np.cos(y) * np.cos(z), n_max)
    return -delta_c * a + U0 * a * np.real(np.conj(v) @ C2z @ v) + eta * np.real(np.conj(v) @ Cyz @ v)
