"""Dissipation/dephasing model: rate formulas, lifetime/branching tables,
the idling cascade and coherence sweeps."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fluxlab.constants import KB_OVER_H_GHZ_PER_K
from fluxlab.hilbert import CircuitParams, Spectrum, diagonalize
from fluxlab.noise import (
    NoiseModel,
    cascade_generator,
    coherence_sweep,
    gamma1_dielectric,
    gamma1_flux,
    gamma1_total,
    idling_cascade,
    rate_table,
    tphi,
)


def synthetic_spectrum(energies, charge, phase) -> Spectrum:
    """Hand-built Spectrum for formula-structure tests."""
    energies = np.asarray(energies, dtype=float)
    return Spectrum(
        params=CircuitParams(1.0, 1.0, 0.1),
        energies=energies,
        charge_elems=np.asarray(charge, dtype=complex),
        phase_elems=np.asarray(phase, dtype=complex),
        n_levels=len(energies),
    )


class TestGamma1Dielectric:
    def test_zero_matrix_element_gives_zero(self):
        spec = synthetic_spectrum([0.0, 1.0], np.zeros((2, 2)),
                                  0.3 * np.ones((2, 2)))
        assert gamma1_dielectric(spec, NoiseModel(), 0, 1) == 0.0

    def test_heating_decay_ratio_is_boltzmann(self):
        nu = 0.135
        spec = synthetic_spectrum([0.0, nu], [[0, 0.1], [0.1, 0]],
                                  np.zeros((2, 2)))
        nm = NoiseModel(temperature=0.02)
        ratio = gamma1_dielectric(spec, nm, 0, 1) / gamma1_dielectric(
            spec, nm, 1, 0)
        expected = math.exp(-nu / (KB_OVER_H_GHZ_PER_K * 0.02))
        assert ratio == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(0.7232, abs=2e-4)

    def test_monotone_in_temperature(self, gf_spec):
        rates = [
            gamma1_dielectric(gf_spec, NoiseModel(temperature=t), 1, 0)
            for t in (0.010, 0.020, 0.040)
        ]
        assert rates[0] < rates[1] < rates[2]

    @given(
        nu=st.floats(0.01, 10.0),
        elem=st.floats(0.001, 2.0),
        temp=st.floats(0.005, 0.1),
    )
    @settings(max_examples=40, deadline=None)
    def test_detailed_balance_property(self, nu, elem, temp):
        spec = synthetic_spectrum([0.0, nu], [[0, elem], [elem, 0]],
                                  np.zeros((2, 2)))
        nm = NoiseModel(temperature=temp)
        up = gamma1_dielectric(spec, nm, 0, 1)
        down = gamma1_dielectric(spec, nm, 1, 0)
        assert up / down == pytest.approx(
            math.exp(-nu / (KB_OVER_H_GHZ_PER_K * temp)), rel=1e-6)


class TestGamma1Flux:
    def test_zero_amplitude_gives_zero(self, gf_spec):
        nm = NoiseModel(a_flux=0.0)
        assert gamma1_flux(gf_spec, nm, 1, 2) == 0.0

    def test_inverse_frequency_scaling(self):
        phase = [[0, 0.5], [0.5, 0]]
        s1 = synthetic_spectrum([0.0, 0.2], np.zeros((2, 2)), phase)
        s2 = synthetic_spectrum([0.0, 0.1], np.zeros((2, 2)), phase)
        nm = NoiseModel()
        assert gamma1_flux(s2, nm, 1, 0) == pytest.approx(
            2.0 * gamma1_flux(s1, nm, 1, 0), rel=1e-12)

    def test_dielectric_dominates_flux_on_ef_pair(self, ef_spec):
        # at omega_ef ~ 30 MHz both channels contribute, with dielectric
        # loss the larger of the two
        nm = NoiseModel()
        flux = gamma1_flux(ef_spec, nm, 1, 2)
        diel = gamma1_dielectric(ef_spec, nm, 1, 2)
        assert flux > 0.0
        assert diel > flux
        assert diel / flux < 10.0


class TestGamma1Total:
    def test_additivity(self, gf_spec, noise_model):
        total = gamma1_total(gf_spec, noise_model, 2, 1)
        parts = gamma1_dielectric(gf_spec, noise_model, 2, 1) + gamma1_flux(
            gf_spec, noise_model, 2, 1)
        assert total == parts

    def test_zero_when_both_zero(self):
        spec = synthetic_spectrum([0.0, 1.0], np.zeros((2, 2)),
                                  np.zeros((2, 2)))
        assert gamma1_total(spec, NoiseModel(), 0, 1) == 0.0


class TestRateTable:
    def test_branching_rows_normalized(self, gf_rates):
        totals = gf_rates.gamma1.sum(axis=1)
        for i in range(gf_rates.n_levels):
            if totals[i] > 0:
                assert gf_rates.branching[i].sum() == pytest.approx(
                    1.0, abs=1e-9)

    def test_rates_nonnegative(self, gf_rates):
        assert np.all(gf_rates.gamma1 >= 0)
        assert np.all(gf_rates.gamma_phi >= 0)

    def test_csv_layout(self, gf_rates):
        lines = gf_rates.to_csv().strip().split("\n")
        assert lines[0].startswith("level,lifetime_us,branch_0")
        assert len(lines) == 1 + gf_rates.n_levels


class TestTphi:
    def test_zero_amplitude(self, gf_params):
        assert tphi(gf_params, None, NoiseModel(a_flux=0.0), 0, 2) == 0.0

    def test_sweet_spot_second_order_dominates(self, gf_params):
        from fluxlab.hilbert import flux_derivatives

        nm = NoiseModel()
        d1 = abs(flux_derivatives(gf_params, None, 0, 2, 1))
        total = tphi(gf_params, None, nm, 0, 2)
        first_term = 2 * math.pi * nm.a_flux * d1
        assert first_term < 1e-4 * total

    def test_monotone_trend_with_e_c(self, gf_params):
        nm = NoiseModel()
        rates = []
        for e_c in (1.6, 1.8, 2.0):
            p = CircuitParams(gf_params.e_j, e_c, gf_params.e_l)
            rates.append(tphi(p, None, nm, 0, 2))
        # T_phi^gf falls (rate rises) as E_C decreases from 2.0 GHz
        assert rates[0] > rates[1] > rates[2]


class TestIdlingCascade:
    def setup_method(self):
        self.gen = cascade_generator(gamma_10=1e-4, gamma_12=2e-5,
                                     gamma_21=5e-5)

    def test_initial_condition(self):
        pops, _ = idling_cascade(self.gen, [0.0, 0.0, 1.0], np.array([0.0]))
        assert np.allclose(pops[0], [0.0, 0.0, 1.0])

    def test_probability_conservation(self):
        t = np.linspace(0.0, 1e6, 30)
        pops, _ = idling_cascade(self.gen, [0.0, 0.0, 1.0], t)
        assert np.allclose(pops.sum(axis=1), 1.0, atol=1e-9)

    def test_matrix_exponential_oracle(self):
        t = np.array([0.0, 1e6])
        ode, _ = idling_cascade(self.gen, [0.0, 0.0, 1.0], t, method="ode")
        oracle = expm(self.gen * t[-1]) @ np.array([0.0, 0.0, 1.0])
        assert np.allclose(ode[-1], oracle, atol=1e-8)

    def test_ground_population_nondecreasing(self):
        t = np.linspace(0.0, 5e5, 50)
        pops, _ = idling_cascade(self.gen, [0.0, 0.0, 1.0], t)
        assert np.all(np.diff(pops[:, 0]) >= -1e-12)

    def test_ratio_grows_without_bound(self):
        p0 = [0.0, 0.0, 1.0]
        _, r_early = idling_cascade(self.gen, p0, np.array([0.0, 1e5]))
        _, r_late = idling_cascade(self.gen, p0, np.array([0.0, 1e7]))
        assert r_late[-1] > 10 * r_early[-1]


class TestCoherenceSweep:
    def test_single_point_matches_direct_calls(self, gf_params):
        nm = NoiseModel()
        out = coherence_sweep(gf_params, nm, "e_c", np.array([2.0]),
                              pair=(0, 2))
        spec = diagonalize(gf_params, n_levels=6)
        g1 = sum(
            gamma1_total(spec, nm, lvl, k)
            for lvl in (0, 2)
            for k in range(6)
            if k != lvl
        )
        gphi = tphi(gf_params, None, nm, 0, 2)
        assert out["t1_ns"][0] == pytest.approx(1.0 / g1, rel=1e-9)
        assert out["t2_ns"][0] == pytest.approx(
            1.0 / (0.5 * g1 + gphi), rel=1e-9)

    def test_ef_parameters_near_local_t2_optimum(self, ef_params):
        nm = NoiseModel()
        grid = np.arange(0.60, 0.901, 0.05)
        out = coherence_sweep(ef_params, nm, "e_c", grid, pair=(1, 2))
        best = float(np.max(out["t2_ns"]))
        at_params = coherence_sweep(ef_params, nm, "e_c",
                                    np.array([ef_params.e_c]),
                                    pair=(1, 2))["t2_ns"][0]
        assert at_params >= 0.8 * best

    def test_error_hierarchy_trend(self, gf_params):
        # as omega_ef rises with E_C, T1^ef falls and Tphi^gf rises
        nm = NoiseModel()
        grid = np.array([1.6, 1.8, 2.0])
        ef = coherence_sweep(gf_params, nm, "e_c", grid, pair=(1, 2))
        gf = coherence_sweep(gf_params, nm, "e_c", grid, pair=(0, 2))
        assert np.all(np.diff(ef["omega_ghz"]) > 0)
        assert np.all(np.diff(ef["t1_ns"]) < 0)
        assert np.all(np.diff(gf["tphi_ns"]) > 0)
