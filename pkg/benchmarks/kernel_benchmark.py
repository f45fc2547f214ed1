"""Compare the compiled and pure-Python master-equation kernels.

Times raw right-hand-side evaluations and a full dissipative transfer
integration on the standard 32-dimensional link problem, for each available
backend, and checks that both produce the same trajectory.

Run from the repository root:

    python benchmarks/kernel_benchmark.py
"""

import time

import numpy as np

import photonlink as pl
from photonlink import _kernels


def build_problem():
    ic = pl.InterconnectParams(
        nu_c=7.88e9, delta=4.25e6, g_l=6.46e6,
        kappa_bright=1 / 200e-9, kappa_dark=1 / 550e-9,
    )
    d1 = pl.DeviceParams(
        nu_q=4.7685e9, alpha=109.8e6, nu_r=5.7463e9, nu_c=7.88e9,
        g_qc=50e6, T1=10.1e-6, T2=0.7e-6,
    )
    d2 = pl.DeviceParams(
        nu_q=4.7420e9, alpha=109.9e6, nu_r=5.7405e9, nu_c=7.88e9,
        g_qc=50e6, T1=7.9e-6, T2=1.4e-6,
    )
    link = pl.PhotonLink.assemble(
        (d1, d2), ic, drive_coherence=((5.0e-6, 260e-9), (4.0e-6, 520e-9))
    )
    pulses = tuple(
        link.square_pulse(q, link.eps_max[q], 0.0, 400e-9) for q in (0, 1)
    )
    ham = link.hamiltonian(pulses)
    space = ham.space
    channels = link.channels(space)
    occ = tuple(1 if lab == "q1" else 0 for lab in space.labels)
    rho0 = pl.DensityMatrix.from_state_vector(space, pl.basis_state(space, occ))
    return ham, channels, rho0


def time_rhs(backend, ham, channels, rho0, n_calls=2000):
    rhs = _kernels.get_rhs(backend)
    dim = ham.space.dim
    h = ham.matrix_at(50e-9)
    rates = np.array([c.rate for c in channels])
    ls = np.array([c.operator.matrix for c in channels])
    lds = np.array([c.operator.matrix.conj().T for c in channels])
    a = -1j * h - 0.5 * sum(r * (ld @ l) for r, l, ld in zip(rates, ls, lds))
    rho = rho0.matrix.astype(complex)
    out = np.empty((dim, dim), dtype=complex)
    work = np.empty((dim, dim), dtype=complex)
    rhs(a, rho, ls, lds, rates, out, work)  # warm up
    t0 = time.perf_counter()
    for _ in range(n_calls):
        rhs(a, rho, ls, lds, rates, out, work)
    dt = time.perf_counter() - t0
    return dt / n_calls, out.copy()


def time_evolve(backend, ham, channels, rho0):
    times = np.linspace(0.0, 400e-9, 201)
    t0 = time.perf_counter()
    traj = pl.evolve(ham, channels, rho0, times, backend=backend)
    dt = time.perf_counter() - t0
    return dt, traj.final.matrix


def main():
    ham, channels, rho0 = build_problem()
    backends = _kernels.available_backends()
    print(f"active backend: {_kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"problem: dim {ham.space.dim}, {len(channels)} collapse channels\n")

    rhs_out = {}
    print(f"{'backend':<8} {'rhs call':>12} {'full evolve':>12}")
    evolve_out = {}
    for backend in backends:
        per_call, out = time_rhs(backend, ham, channels, rho0)
        wall, final = time_evolve(backend, ham, channels, rho0)
        rhs_out[backend] = out
        evolve_out[backend] = final
        print(f"{backend:<8} {per_call * 1e6:>10.1f}us {wall:>11.2f}s")

    if len(backends) == 2:
        d_rhs = np.max(np.abs(rhs_out["python"] - rhs_out["cython"]))
        d_evo = np.max(np.abs(evolve_out["python"] - evolve_out["cython"]))
        print(f"\nmax |python - cython|: rhs {d_rhs:.2e}, final state {d_evo:.2e}")


if __name__ == "__main__":
    main()
