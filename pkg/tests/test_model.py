"""Device/interconnect model: mode structure, calibration, pulse plumbing."""

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import j1 as bessel_j1

import photonlink as pl
from photonlink import (
    DcOffsetMap,
    DensityMatrix,
    FluxPulse,
    basis_state,
    build_exchange_hamiltonian,
    build_transfer_hamiltonian,
    dc_offset_resonance,
    diagonalize_interconnect,
    embed,
    eps_for_rate,
    evolve,
    number,
    sideband_rate,
)

from conftest import DRIVE_COHERENCE, standard_devices, standard_interconnect


def closed_form_mode_detunings(delta, g_l):
    # The coupling block over (res1, res2, cable) has rank 2: one exact zero
    # eigenvalue plus the two roots of lambda^2 - delta*lambda - 2 g_l^2.
    s = np.sqrt(delta**2 + 8.0 * g_l**2)
    return np.sort([0.0, (delta - s) / 2.0, (delta + s) / 2.0])


class TestModeStructure:
    def test_frequencies_match_closed_form(self):
        ic = standard_interconnect()
        modes = diagonalize_interconnect(ic, [50e6, 50e6])
        expected = ic.nu_c + closed_form_mode_detunings(ic.delta, ic.g_l)
        assert_allclose(modes.frequencies, expected, rtol=1e-12)

    def test_dark_mode_sits_exactly_on_cable_frequency(self):
        ic = standard_interconnect()
        modes = diagonalize_interconnect(ic, [50e6, 50e6])
        assert modes.dark_frequency == pytest.approx(ic.nu_c, abs=1e-3)
        # dark eigenvector is (1, -1, 0)/sqrt(2): zero cable amplitude
        assert abs(modes.eigenvectors[2, modes.dark_index]) < 1e-12

    def test_dark_couplings_are_g_over_sqrt2_with_opposite_signs(self):
        ic = standard_interconnect()
        g_qc = 50e6
        modes = diagonalize_interconnect(ic, [g_qc, g_qc])
        gd = modes.couplings[:, modes.dark_index]
        assert_allclose(np.abs(gd), g_qc / np.sqrt(2.0), rtol=1e-9)
        assert gd[0] * gd[1] < 0

    def test_coupling_rows_preserve_total_strength(self):
        # Eigenvector orthonormality forces sum_j g_ij^2 = g_qc_i^2.
        ic = standard_interconnect()
        modes = diagonalize_interconnect(ic, [50e6, 48e6])
        assert_allclose(
            np.sum(modes.couplings**2, axis=1), [50e6**2, 48e6**2], rtol=1e-12
        )

    def test_bright_detunings_reference_values(self):
        ic = standard_interconnect()
        modes = diagonalize_interconnect(ic, [50e6, 50e6])
        det = (modes.frequencies - ic.nu_c) / 1e6
        bright = np.sort(det[list(modes.bright_indices)])
        assert_allclose(bright, [-7.25470282, 11.50470282], atol=1e-6)


class TestSidebandCalibration:
    def test_small_amplitude_limit(self):
        # J1(x) -> x/2, so rate -> g * eps / (4 omega) for small eps.
        g, omega = 35e6, 3.1e9
        eps = 1e6
        assert sideband_rate(g, eps, omega) == pytest.approx(
            g * eps / (4 * omega), rel=1e-6
        )

    def test_eps_for_rate_roundtrip(self):
        g, omega = 35.36e6, 3.1115e9
        for target in (0.5e6, 2.0e6, 10e6):
            eps = eps_for_rate(g, omega, target)
            assert sideband_rate(g, eps, omega) == pytest.approx(target, rel=1e-10)

    def test_eps_for_rate_rejects_unreachable_rate(self):
        g, omega = 35e6, 3.1e9
        max_rate = g * bessel_j1(1.8412)
        with pytest.raises(ValueError):
            eps_for_rate(g, omega, 1.01 * max_rate)
        assert eps_for_rate(g, omega, 0.0) == 0.0

    def test_sideband_rate_validates_omega(self):
        with pytest.raises(ValueError):
            sideband_rate(35e6, 1e6, 0.0)


class TestFluxPulse:
    def test_square_window_is_half_open(self):
        p = FluxPulse.square(5e8, 3.1e9, start=10e-9, duration=100e-9)
        assert p.envelope(10e-9) == 5e8
        assert p.envelope(109.999e-9) == 5e8
        assert p.envelope(110e-9) == 0.0
        assert p.envelope(9.999e-9) == 0.0
        assert p.end == pytest.approx(110e-9)
        assert p.breakpoints() == pytest.approx((10e-9, 110e-9))

    def test_gaussian_truncated_at_five_sigma(self):
        sigma, center = 20e-9, 150e-9
        p = FluxPulse.gaussian(4e8, 3.1e9, sigma=sigma, center=center)
        assert p.envelope(center) == pytest.approx(4e8)
        assert p.envelope(center + sigma) == pytest.approx(4e8 * np.exp(-0.5))
        assert p.envelope(center + 5.001 * sigma) == 0.0
        assert p.start == pytest.approx(center - 5 * sigma)
        assert p.duration == pytest.approx(10 * sigma)

    def test_pulse_validation(self):
        with pytest.raises(ValueError):
            FluxPulse.square(-1.0, 3.1e9, 0.0, 1e-9)
        with pytest.raises(ValueError):
            FluxPulse.square(1e8, 3.1e9, 0.0, 0.0)
        with pytest.raises(ValueError):
            FluxPulse("triangle", 1e8, 3.1e9, 0.0, 1e-9)
        with pytest.raises(ValueError):
            FluxPulse("gaussian", 1e8, 3.1e9, 0.0, 1e-9)  # missing sigma/center


class TestDcOffsetMap:
    def test_flat_map_is_constant(self):
        m = DcOffsetMap.flat(3.1115e9, eps_max=1e9)
        assert m.resonance(0.0) == 3.1115e9
        assert m.resonance(0.77e9) == 3.1115e9

    def test_interpolates_calibration_points(self):
        # Quadratic DC-offset curve sampled on a grid; linear interpolation
        # between samples.
        omega0 = 3.1e9
        curve = lambda e: omega0 - 0.02 * e**2 / 1e9
        eps_grid = np.linspace(0.0, 1e9, 11)
        m = DcOffsetMap(tuple((e, curve(e)) for e in eps_grid))
        assert m.resonance(0.5e9) == pytest.approx(curve(0.5e9), rel=1e-12)
        mid = 0.55e9
        lo, hi = curve(0.5e9), curve(0.6e9)
        assert dc_offset_resonance(m, mid) == pytest.approx((lo + hi) / 2, rel=1e-12)

    def test_refuses_extrapolation(self):
        m = DcOffsetMap.flat(3.1e9, eps_max=1e9)
        with pytest.raises(ValueError):
            m.resonance(1.1e9)
        with pytest.raises(ValueError):
            m.resonance(-0.1e9)

    def test_rejects_unsorted_points(self):
        with pytest.raises(ValueError):
            DcOffsetMap(((0.0, 3e9), (0.0, 3e9)))
        with pytest.raises(ValueError):
            DcOffsetMap(((1e9, 3e9),))


class TestHamiltonianBuilders:
    def test_exchange_swap_period(self):
        # One qubit resonantly coupled to one mode swaps the excitation in
        # t = 1/(4 g_eff).
        dev = standard_devices()[0]
        g_eff = 2e6
        omega = 3.1115e9
        eps = eps_for_rate(35.355339e6, omega, g_eff)
        pulse = FluxPulse.square(eps, omega, 0.0, 1.0)
        h = build_exchange_hamiltonian(
            (dev,), (dev.nu_q + omega,), [[35.355339e6]], (pulse,),
            nu_ref=dev.nu_q + omega, mode_labels=("m",),
        )
        rho0 = DensityMatrix.from_state_vector(
            h.space, basis_state(h.space, (1, 0))
        )
        t_swap = 1.0 / (4.0 * g_eff)
        traj = evolve(
            h, [], rho0, np.linspace(0.0, t_swap, 11),
            observables={"nm": embed(number(2), h.space, "m")},
        )
        assert traj.expectations["nm"][-1] == pytest.approx(1.0, abs=1e-4)

    def test_transfer_space_labels_and_hermiticity(self, link):
        pulses = (
            link.square_pulse(0, link.eps_max[0], 0.0, 200e-9),
            link.square_pulse(1, link.eps_max[1], 0.0, 200e-9),
        )
        h_full = link.hamiltonian(pulses)
        assert h_full.space.labels == ("q1", "q2", "dark", "bright1", "bright2")
        h_dark = link.hamiltonian(pulses, include_bright=False)
        assert h_dark.space.labels == ("q1", "q2", "dark")
        for t in (0.0, 37e-9, 150e-9):
            m = h_full.matrix_at(t)
            assert np.max(np.abs(m - m.conj().T)) < 1e-9 * max(1.0, np.abs(m).max())

    def test_pulse_edges_become_breakpoints(self, link):
        pulses = (
            link.square_pulse(0, link.eps_max[0], 10e-9, 200e-9),
            link.square_pulse(1, link.eps_max[1], 30e-9, 150e-9),
        )
        h = link.hamiltonian(pulses)
        assert set(h.breakpoints) == {10e-9, 210e-9, 30e-9, 180e-9}


class TestPhotonLink:
    def test_eps_max_realizes_target_coupling(self, link):
        for q in (0, 1):
            assert link.g_eff(q, link.eps_max[q]) == pytest.approx(2e6, rel=1e-9)

    def test_dark_resonance_and_coupling(self, link):
        for q, dev in enumerate(link.devices):
            assert link.dark_resonance(q) == pytest.approx(7.88e9 - dev.nu_q)
            assert link.g_dark(q) == pytest.approx(50e6 / np.sqrt(2), rel=1e-9)

    def test_drive_coherence_override(self, link):
        assert link.qubit_coherence(0) == DRIVE_COHERENCE[0]
        assert link.qubit_coherence(1) == DRIVE_COHERENCE[1]
        assert link.qubit_coherence(0, during_drive=False) == (10.1e-6, 0.7e-6)

    def test_with_qubit_coherence_replaces_and_clears_override(self, link):
        better = link.with_qubit_coherence(20e-6, 20e-6)
        assert better.qubit_coherence(0) == (20e-6, 20e-6)
        assert better.qubit_coherence(0, during_drive=False) == (20e-6, 20e-6)
        assert better.drive_coherence == (None, None)
        # the original is untouched
        assert link.qubit_coherence(0) == DRIVE_COHERENCE[0]

    def test_channel_composition_and_rates(self, link):
        pulses = (
            link.square_pulse(0, link.eps_max[0], 0.0, 100e-9),
            link.square_pulse(1, link.eps_max[1], 0.0, 100e-9),
        )
        space = link.hamiltonian(pulses).space
        chans = link.channels(space)
        assert len(chans) == 7  # 2 qubits x (relax + dephase) + 3 mode losses
        by_label = {c.label: c.rate for c in chans}
        t1d, t2d = DRIVE_COHERENCE[0]
        assert by_label["q1:relax"] == pytest.approx(1.0 / t1d)
        assert by_label["q1:dephase"] == pytest.approx(
            (1.0 / t2d - 1.0 / (2 * t1d)) / 2.0
        )
        assert by_label["dark:loss"] == pytest.approx(1.0 / 550e-9)
        assert by_label["bright1:loss"] == pytest.approx(1.0 / 200e-9)
        assert by_label["bright2:loss"] == pytest.approx(1.0 / 200e-9)

        static = link.channels(space, during_drive=False)
        rates = {c.label: c.rate for c in static}
        assert rates["q1:relax"] == pytest.approx(1.0 / 10.1e-6)
        assert rates["q1:dephase"] == pytest.approx(
            (1.0 / 0.7e-6 - 1.0 / (2 * 10.1e-6)) / 2.0
        )

        only_deph = link.channels(space, include_loss=False)
        assert {c.label for c in only_deph} == {"q1:dephase", "q2:dephase"}
        only_loss = link.channels(space, include_dephasing=False)
        assert len(only_loss) == 5

    def test_assemble_validation(self):
        d1, d2 = standard_devices()
        ic = standard_interconnect()
        with pytest.raises(ValueError):
            pl.PhotonLink.assemble((d1,), ic)
        high = dataclasses.replace(d1, nu_q=8.0e9)  # above the cable mode
        with pytest.raises(ValueError):
            pl.PhotonLink.assemble((high, d2), ic)


def test_device_params_validation():
    d1, _ = standard_devices()
    with pytest.raises(ValueError):
        dataclasses.replace(d1, T1=-1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(d1, g_qc=0.0)


def test_interconnect_params_validation():
    ic = standard_interconnect()
    with pytest.raises(ValueError):
        dataclasses.replace(ic, kappa_dark=-1.0)
    assert ic.nu_l == pytest.approx(ic.nu_c + ic.delta)
