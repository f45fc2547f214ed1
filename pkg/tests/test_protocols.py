"""Transfer, chevron, delay-calibration, adiabatic, and Bell protocols."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import photonlink as pl
from photonlink import protocols
from photonlink.protocols import (
    SweepError,
    _run_parallel,
    bell_protocol,
    chevron_scan,
    delay_scan,
    estimate_symmetry_center,
    mode_coherence_probe,
    stirap_scan,
    stirap_transfer,
    transfer,
)

from conftest import standard_devices, standard_interconnect


# -- sweep machinery ---------------------------------------------------------


def _square(job):
    x, poison = job
    if poison:
        raise RuntimeError("cell exploded")
    return x * x


class TestRunParallel:
    def test_serial_and_parallel_agree(self):
        jobs = [(x, False) for x in range(9)]
        serial = _run_parallel(_square, jobs, None)
        parallel = _run_parallel(_square, jobs, 3)
        assert serial == [x * x for x in range(9)]
        assert parallel == serial

    def test_serial_failure_carries_completed_prefix(self):
        jobs = [(x, x == 4) for x in range(7)]
        with pytest.raises(SweepError) as info:
            _run_parallel(_square, jobs, None)
        err = info.value
        assert err.n_jobs == 7
        assert err.completed == {i: i * i for i in range(4)}
        assert "cell exploded" in str(err)

    def test_parallel_failure_reports_partial_cells(self):
        jobs = [(x, x == 5) for x in range(8)]
        with pytest.raises(SweepError) as info:
            _run_parallel(_square, jobs, 2)
        err = info.value
        assert err.n_jobs == 8
        assert 5 not in err.completed
        for idx, val in err.completed.items():
            assert val == idx * idx


def test_symmetry_center_on_synthetic_map():
    delays = np.linspace(-20.0, 20.0, 9)
    center = 5.0
    pop = np.exp(-((delays[:, None] - center) ** 2) / 50.0) * np.ones((1, 4))
    assert estimate_symmetry_center(delays, pop) == pytest.approx(5.0)


def test_symmetry_center_needs_enough_pairs():
    with pytest.raises(ValueError):
        estimate_symmetry_center(np.array([0.0, 1.0, 5.0]), np.zeros((3, 2)))


# -- chevron -----------------------------------------------------------------


class TestChevron:
    def test_resonant_column_oscillates_detuned_column_does_not(self, link):
        res = link.dark_resonance(0)
        scan = chevron_scan(
            link,
            0,
            (res - 3e6, res + 3e6),
            300e-9,
            link.eps_max[0],
            n_frequencies=3,
            n_lengths=61,
            dissipative=False,
        )
        assert scan.population.shape == (3, 61)
        on_res = scan.population[1]
        edge = scan.population[0]
        assert on_res[0] == pytest.approx(1.0, abs=1e-6)
        assert on_res.min() < 0.15  # full-contrast exchange dip
        assert edge.min() > on_res.min()  # detuned dip is shallower

    def test_dissipation_lowers_the_revival(self, link):
        res = link.dark_resonance(0)
        kwargs = dict(n_frequencies=1, n_lengths=41, during_drive=True)
        lossy = chevron_scan(
            link, 0, (res - 1.0, res + 1.0), 350e-9, link.eps_max[0],
            dissipative=True, **kwargs,
        )
        unit = chevron_scan(
            link, 0, (res - 1.0, res + 1.0), 350e-9, link.eps_max[0],
            dissipative=False, **kwargs,
        )
        # the revival (second maximum) suffers from loss
        half = len(lossy.lengths) // 2
        assert lossy.population[0, half:].max() < unit.population[0, half:].max()

    def test_no_resonance_in_range_warns_and_returns_flat_map(self, link):
        with pytest.warns(UserWarning, match="no link mode resonance"):
            scan = chevron_scan(
                link, 0, (1e6, 2e6), 100e-9, link.eps_max[0],
                n_frequencies=4, n_lengths=5,
            )
        assert_allclose(scan.population, 1.0)

    def test_worker_count_does_not_change_results(self, link):
        res = link.dark_resonance(1)
        args = (link, 1, (res - 2e6, res + 2e6), 150e-9, link.eps_max[1])
        kwargs = dict(n_frequencies=4, n_lengths=11)
        one = chevron_scan(*args, workers=1, **kwargs)
        two = chevron_scan(*args, workers=2, **kwargs)
        assert np.array_equal(one.population, two.population)

    def test_rejects_bad_ranges(self, link):
        with pytest.raises(ValueError):
            chevron_scan(link, 0, (5e6, 1e6), 100e-9, link.eps_max[0])
        with pytest.raises(ValueError):
            chevron_scan(link, 0, (1e6, 5e6), -1.0, link.eps_max[0])


# -- square-pulse transfer ---------------------------------------------------


class TestTransfer:
    def test_peak_band_and_time(self, link):
        res = transfer(link, 0)
        assert 0.56 <= res.peak_fidelity <= 0.66
        assert 120e-9 <= res.peak_time <= 220e-9
        assert res.times[0] == 0.0
        assert res.P_ge.max() == pytest.approx(res.peak_fidelity)

    def test_zero_dissipation_dark_only_reaches_unity(self, link):
        res = transfer(
            link,
            0,
            include_bright=False,
            include_loss=False,
            include_dephasing=False,
        )
        # lossless two-stage exchange through the dark mode: full transfer at
        # t = 1 / (2 sqrt(2) g_eff)
        assert res.peak_fidelity == pytest.approx(1.0, abs=1e-4)
        assert res.peak_time == pytest.approx(1.0 / (2 * np.sqrt(2) * 2e6), rel=0.02)

    def test_budget_knobs_reduce_infidelity(self, link):
        base = transfer(link, 0).peak_fidelity
        no_deph = transfer(link, 0, include_dephasing=False).peak_fidelity
        no_loss = transfer(link, 0, include_loss=False).peak_fidelity
        assert no_deph > base
        assert no_loss > base

    def test_population_traces_are_physical(self, link):
        res = transfer(link, 1, n_times=101)
        for trace in (res.P_eg, res.P_ge, res.P_gg):
            assert trace.min() >= -1e-9
        assert (res.P_eg + res.P_ge + res.P_gg).max() <= 1 + 1e-6
        # the receiver for sender=1 is qubit 1's column
        assert res.P_eg.max() == pytest.approx(res.peak_fidelity)

    def test_amplitude_override_slows_the_swap(self, link):
        slow = transfer(link, 0, eps1=0.6 * link.eps_max[0],
                        eps2=0.6 * link.eps_max[1], t1_len=600e-9,
                        t2_len=600e-9)
        fast = transfer(link, 0)
        assert slow.peak_time > fast.peak_time

    def test_sender_validation(self, link):
        with pytest.raises(ValueError):
            transfer(link, 2)


# -- delay calibration -------------------------------------------------------


class TestDelayScan:
    def test_no_skew_centers_at_zero(self, link):
        delays = np.linspace(-20e-9, 20e-9, 5)
        lengths = np.linspace(100e-9, 250e-9, 4)
        scan = delay_scan(link, 0, delays, lengths)
        assert scan.symmetry_center == pytest.approx(0.0, abs=1e-12)
        assert scan.population.shape == (5, 4)

    def test_injected_skew_shifts_the_center(self, link):
        delays = np.linspace(-30e-9, 30e-9, 13)
        lengths = np.linspace(140e-9, 220e-9, 2)
        scan = delay_scan(link, 0, delays, lengths, skew=(0.0, 10e-9),
                          workers=2)
        assert scan.symmetry_center == pytest.approx(-10e-9, abs=2.6e-9)

    def test_center_column_reproduces_transfer_trace(self, link):
        # a zero-delay cell of length L equals the transfer trace sampled at
        # t = L, because the square pulses are simply truncated later
        lengths = np.array([100e-9, 200e-9, 300e-9])
        delays = np.array([-10e-9, -5e-9, 0.0, 5e-9, 10e-9])
        scan = delay_scan(link, 0, delays, lengths)
        ref = transfer(link, 0, t1_len=400e-9, t2_len=400e-9, n_times=201)
        sender_pop = np.interp(lengths, ref.times, ref.P_eg)
        assert_allclose(scan.population[2], sender_pop, atol=2e-4)

    def test_grid_validation(self, link):
        with pytest.raises(ValueError):
            delay_scan(link, 0, np.array([0.0, 1e-9]), np.array([1e-7]))


# -- adiabatic transfer ------------------------------------------------------


class TestStirap:
    def test_overlapped_gaussians_beat_separated_ones(self, link):
        over = stirap_transfer(link, 68e-9, 0.0)
        apart = stirap_transfer(link, 68e-9, 400e-9)
        assert over.fidelity > apart.fidelity
        assert 0.55 <= over.fidelity <= 0.64
        assert over.max_dark_population < 0.5

    def test_improved_coherence_raises_fidelity(self, link):
        better = link.with_qubit_coherence(20e-6, 20e-6)
        cur = stirap_transfer(link, 70e-9, 0.0)
        imp = stirap_transfer(better, 70e-9, 0.0)
        assert imp.fidelity > cur.fidelity + 0.15

    def test_lower_amplitude_is_less_adiabatic(self, link):
        full = stirap_transfer(link, 68e-9, 0.0)
        weak = stirap_transfer(link, 68e-9, 0.0,
                               amplitude=0.4 * min(link.eps_max))
        assert weak.fidelity < full.fidelity

    def test_scan_argmax_matches_matrix(self, link):
        scan = stirap_scan(link, [50e-9, 68e-9], [0.0, 100e-9], workers=2)
        i, j = np.unravel_index(np.argmax(scan.fidelity), scan.fidelity.shape)
        assert scan.argmax == (scan.sigmas[i], scan.delta_ts[j])
        assert scan.max_fidelity == scan.fidelity.max()
        assert scan.fidelity.shape == (2, 2)

    def test_parameter_validation(self, link):
        with pytest.raises(ValueError):
            stirap_transfer(link, -1e-9, 0.0)
        with pytest.raises(ValueError):
            stirap_transfer(link, 50e-9, -1e-9)
        with pytest.raises(ValueError):
            stirap_scan(link, [], [0.0])


# -- Bell-state protocol -----------------------------------------------------


class TestBellProtocol:
    def test_reference_point(self, link):
        res = bell_protocol(link, len1=55e-9, len2=130e-9)
        assert res.fidelity == pytest.approx(0.6413, abs=0.005)
        assert res.phase_correction == pytest.approx(0.0411, abs=0.005)
        assert res.state.space.labels == ("q1", "q2")

    def test_fitted_phase_makes_coherence_real(self, link):
        res = bell_protocol(link, len1=60e-9, len2=135e-9)
        coh = res.state.matrix[1, 2]
        assert abs(coh.imag) < 1e-9
        assert coh.real >= 0.0
        # fidelity decomposes into populations + coherence
        m = res.state.matrix
        assert res.fidelity == pytest.approx(
            0.5 * (m[1, 1].real + m[2, 2].real) + coh.real, abs=1e-12
        )

    def test_explicit_phase_is_honored(self, link):
        raw = bell_protocol(link, len1=55e-9, len2=130e-9, phase_correction=0.0)
        fit = bell_protocol(link, len1=55e-9, len2=130e-9)
        assert raw.phase_correction == 0.0
        assert fit.fidelity >= raw.fidelity - 1e-12
        assert raw.params["len1"] == pytest.approx(55e-9)

    def test_state_trace_and_positivity(self, link):
        res = bell_protocol(link, len1=40e-9, len2=100e-9)
        assert np.trace(res.state.matrix).real == pytest.approx(1.0, abs=1e-7)
        assert np.linalg.eigvalsh(res.state.matrix).min() >= -1e-7


# -- mode coherence probes ---------------------------------------------------


class TestModeCoherenceProbe:
    def test_dark_mode_lifetime(self, link):
        t1 = mode_coherence_probe(link, "T1", mode="dark")
        assert t1 == pytest.approx(550e-9, rel=0.05)

    def test_bright_mode_lifetime(self, link):
        t1 = mode_coherence_probe(link, "T1", mode="bright1")
        assert t1 == pytest.approx(200e-9, rel=0.08)

    def test_ramsey_reads_pure_mode_dephasing(self):
        # with photon loss switched off, the fitted dephasing time equals the
        # injected mode T2
        d1, d2 = standard_devices()
        ic = standard_interconnect()
        quiet = pl.InterconnectParams(
            nu_c=ic.nu_c, delta=ic.delta, g_l=ic.g_l,
            kappa_bright=ic.kappa_bright, kappa_dark=0.0,
        )
        link0 = pl.PhotonLink.assemble((d1, d2), quiet)
        t2 = mode_coherence_probe(link0, "Ramsey", mode="dark", mode_T2=1e-6)
        assert t2 == pytest.approx(1e-6, rel=0.05)

    def test_validation(self, link):
        with pytest.raises(ValueError):
            mode_coherence_probe(link, "T2star")
        with pytest.raises(ValueError):
            mode_coherence_probe(link, "Ramsey", mode="dark", mode_T2=2e-6)
        with pytest.raises(ValueError):
            mode_coherence_probe(link, "T1", mode="darkish")
