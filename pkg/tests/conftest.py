"""Shared fixtures: the standard two-module link exercised across the suite."""

import numpy as np
import pytest

import photonlink as pl


def standard_devices():
    d1 = pl.DeviceParams(
        nu_q=4.7685e9,
        alpha=109.8e6,
        nu_r=5.7463e9,
        nu_c=7.88e9,
        g_qc=50e6,
        T1=10.1e-6,
        T2=0.7e-6,
    )
    d2 = pl.DeviceParams(
        nu_q=4.7420e9,
        alpha=109.9e6,
        nu_r=5.7405e9,
        nu_c=7.88e9,
        g_qc=50e6,
        T1=7.9e-6,
        T2=1.4e-6,
    )
    return d1, d2


def standard_interconnect():
    return pl.InterconnectParams(
        nu_c=7.88e9,
        delta=4.25e6,
        g_l=6.46e6,
        kappa_bright=1.0 / 200e-9,
        kappa_dark=1.0 / 550e-9,
    )


DRIVE_COHERENCE = ((5.0e-6, 260e-9), (4.0e-6, 520e-9))


@pytest.fixture(scope="session")
def link():
    d1, d2 = standard_devices()
    return pl.PhotonLink.assemble(
        (d1, d2), standard_interconnect(), drive_coherence=DRIVE_COHERENCE
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
