"""Tests for dispersive shifts, resonator matching, cavity dynamics, and
the analytic readout-dephasing predictions."""

import numpy as np
import pytest

from fluxlab.dispersive import (
    DriveConfig,
    ResonatorConfig,
    SmearingModel,
    ac_stark_shift,
    cavity_trajectory,
    chi_dressed,
    chi_perturbative,
    chi_scan_csv,
    find_matching_resonator,
    g_from_published,
    joint_spectrum,
    label_dressed_states,
    readout_dephasing_rate,
    smearing_dephasing,
    steady_state_alpha,
)
from fluxlab.dynamics import CollapseOp, lindblad_evolve
from fluxlab.errors import LabelingError, NoMatchingResonatorError, ResonanceError
from fluxlab.hilbert import CircuitParams, Spectrum, diagonalize

TWO_PI = 2.0 * np.pi


def synthetic_spectrum(energies, charge) -> Spectrum:
    energies = np.asarray(energies, dtype=float)
    charge = np.asarray(charge, dtype=complex)
    return Spectrum(
        params=CircuitParams(1.0, 1.0, 0.1),
        energies=energies,
        charge_elems=charge,
        phase_elems=np.zeros_like(charge),
        n_levels=len(energies),
    )


class TestChiPerturbative:
    def test_zero_coupling(self, ef_spec):
        res = ResonatorConfig(omega_r=8.461, g=0.0)
        assert chi_perturbative(ef_spec, res, 0) == 0.0

    def test_single_term_oracle(self):
        w01, n01, wr, g = 3.0, 0.4, 7.0, 0.1
        spec = synthetic_spectrum([0.0, w01], [[0, n01], [n01, 0]])
        res = ResonatorConfig(omega_r=wr, g=g)
        expect = 2 * g**2 * (-w01) * n01**2 / (w01**2 - wr**2)
        assert chi_perturbative(spec, res, 0) == pytest.approx(expect, rel=1e-12)
        assert chi_perturbative(spec, res, 1) == pytest.approx(-expect, rel=1e-12)

    def test_pole_raises(self, ef_spec):
        w_ge = ef_spec.omega(0, 1)
        res = ResonatorConfig(omega_r=w_ge, g=0.1)
        with pytest.raises(ResonanceError):
            chi_perturbative(ef_spec, res, 0)

    def test_level_convergence(self, gf_params):
        # retaining five extra levels changes the shift by well under 2%
        res = ResonatorConfig(omega_r=13.634, g=g_from_published(0.3))
        few = diagonalize(gf_params, n_levels=15)
        many = diagonalize(gf_params, n_levels=22)
        for j in (0, 1, 2):
            a = chi_perturbative(few, res, j)
            b = chi_perturbative(many, res, j)
            assert abs(a - b) < 0.02 * abs(b)

    def test_agrees_with_dressed_far_from_pole(self, gf_params, gf_spec):
        res = ResonatorConfig(omega_r=13.634, g=g_from_published(0.3), n_fock=8)
        pert = chi_perturbative(gf_spec, res, 0)
        exact = chi_dressed(gf_params, res, 0, spec=gf_spec)
        assert pert == pytest.approx(exact, rel=0.25)


class TestChiDressed:
    def test_zero_coupling(self, ef_params):
        res = ResonatorConfig(omega_r=8.461, g=0.0)
        assert chi_dressed(ef_params, res, 1) == 0.0

    def test_quadratic_in_g(self, ef_params, ef_spec):
        res1 = ResonatorConfig(omega_r=8.461, g=0.02, n_fock=6)
        res2 = ResonatorConfig(omega_r=8.461, g=0.04, n_fock=6)
        c1 = chi_dressed(ef_params, res1, 0, spec=ef_spec)
        c2 = chi_dressed(ef_params, res2, 0, spec=ef_spec)
        assert c2 / c1 == pytest.approx(4.0, abs=0.2)


class TestLabelDressedStates:
    def test_identity_vectors(self):
        labels, worst = label_dressed_states(np.eye(5, dtype=complex))
        assert labels == list(range(5))
        assert worst == pytest.approx(1.0)

    def test_permuted_vectors(self):
        perm = np.zeros((3, 3), dtype=complex)
        perm[2, 0] = perm[0, 1] = perm[1, 2] = 1.0
        labels, _ = label_dressed_states(perm)
        assert labels == [2, 0, 1]

    def test_strong_hybridization_raises(self):
        h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2)
        with pytest.raises(LabelingError):
            label_dressed_states(h, min_overlap=0.6)

    def test_joint_spectrum_labels_are_bijective(self, ef_params, ef_spec):
        res = ResonatorConfig(omega_r=8.461, g=g_from_published(0.25), n_fock=5)
        js = joint_spectrum(ef_params, res, n_qubit=10, spec=ef_spec)
        assert len(set(js.labels)) == len(js.labels)
        assert js.energy_of[(0, 0)] == pytest.approx(0.0, abs=1e-12)
        # one dressed photon costs roughly omega_r
        assert js.energy_of[(0, 1)] == pytest.approx(8.461, abs=0.05)


class TestFindMatchingResonator:
    def test_recovers_published_operating_point(self, gf_params):
        w_star, chi, candidates = find_matching_resonator(
            gf_params,
            target=(0, 2, 1),
            band=(13.3, 14.0),
            g=g_from_published(0.3),
            contrast_threshold=1e-3,
        )
        assert abs(w_star - 13.634) < 0.05
        assert abs(chi[0] - chi[1]) < 5e-5
        assert abs(chi[2] - chi[0]) >= 1e-3
        assert candidates

    def test_zero_coupling_never_matches(self, gf_params):
        with pytest.raises(NoMatchingResonatorError):
            find_matching_resonator(
                gf_params,
                target=(0, 2, 1),
                band=(13.3, 14.0),
                g=0.0,
                contrast_threshold=1e-3,
                n_grid=11,
            )

    def test_scan_csv_row_matches_direct_shift(self, gf_params):
        g = g_from_published(0.3)
        text = chi_scan_csv(gf_params, band=(13.6, 13.7), g=g, n_points=3)
        lines = text.strip().split("\n")
        assert lines[0] == "omega_r,chi_g,chi_e,chi_f,contrast,mismatch"
        row = lines[1].split(",")
        w_r = float(row[0])
        res = ResonatorConfig(omega_r=w_r, g=g)
        assert float(row[1]) == pytest.approx(
            chi_dressed(gf_params, res, 0), abs=1e-8
        )


class TestCavityTrajectory:
    def test_free_decay(self):
        kappa = 0.02
        delta = 0.15  # omega_r + chi - omega_d in GHz
        drive = DriveConfig(amplitude=0.0, omega_d=7.0)
        ts = np.linspace(0.0, 100.0, 11)
        alpha = cavity_trajectory(
            chi_j=0.15, drive=drive, omega_r=7.0, kappa=kappa, t_list=ts, alpha0=1.0
        )
        expect = np.exp(-(1j * TWO_PI * delta + 0.5 * kappa) * ts)
        assert np.allclose(alpha, expect, atol=1e-8)

    def test_reaches_steady_state(self):
        kappa = 0.05
        amp = 0.0628
        chi = 2e-3
        drive = DriveConfig(amplitude=amp, omega_d=8.0)
        ts = np.array([0.0, 1200.0])
        alpha = cavity_trajectory(
            chi_j=chi, drive=drive, omega_r=8.0, kappa=kappa, t_list=ts
        )
        expect = steady_state_alpha(0.5 * amp, chi, kappa)
        assert alpha[-1] == pytest.approx(expect, abs=1e-6)

    def test_steady_state_on_resonance_is_imaginary(self):
        alpha = steady_state_alpha(0.1, 0.0, 0.04)
        assert alpha.real == pytest.approx(0.0, abs=1e-15)
        assert alpha == pytest.approx(-1j * 0.1 / 0.02)


class TestReadoutDephasingRate:
    def test_equal_shifts_give_zero(self):
        assert readout_dephasing_rate(0.01, 0.05, 0.0, 1e-3, 1e-3) == 0.0

    def test_quadratic_in_amplitude(self):
        r1 = readout_dephasing_rate(0.01, 0.05, 0.0, 2e-3, -2e-3)
        r2 = readout_dephasing_rate(0.02, 0.05, 0.0, 2e-3, -2e-3)
        assert r2 == pytest.approx(4.0 * r1, rel=1e-12)

    def test_symmetric_in_states(self):
        a = readout_dephasing_rate(0.01, 0.05, 1e-3, 2e-3, -1e-3)
        b = readout_dephasing_rate(0.01, 0.05, 1e-3, -1e-3, 2e-3)
        assert a == pytest.approx(b, rel=1e-12)

    def test_lindblad_oracle(self):
        # drive a two-pull qubit-cavity system and fit the coherence decay
        amp, kappa = 5e-3, 0.1
        chi_a, chi_b = 3e-3, -3e-3
        n_fock = 8
        a_op = np.diag(np.sqrt(np.arange(1, n_fock)), 1).astype(complex)
        num = a_op.conj().T @ a_op
        eps = 0.5 * TWO_PI * amp  # rotating-frame drive of a lab cosine
        h = np.zeros((2 * n_fock, 2 * n_fock), dtype=complex)
        h[:n_fock, :n_fock] = TWO_PI * chi_a * num
        h[n_fock:, n_fock:] = TWO_PI * chi_b * num
        drive_block = eps * (a_op + a_op.conj().T)
        h[:n_fock, :n_fock] += drive_block
        h[n_fock:, n_fock:] += drive_block
        collapse = [
            CollapseOp.from_rate(kappa, np.kron(np.eye(2), a_op))
        ]
        psi = np.zeros(2 * n_fock, dtype=complex)
        psi[0] = psi[n_fock] = 1.0 / np.sqrt(2)
        rho0 = np.outer(psi, psi.conj())
        ts = np.array([0.0, 300.0, 800.0])
        rhos = lindblad_evolve(lambda t: h, collapse, rho0, ts)

        def coherence(rho):
            blk = rho[:n_fock, n_fock:]
            return abs(np.trace(blk))

        gamma_fit = -np.log(coherence(rhos[2]) / coherence(rhos[1])) / 500.0
        gamma = readout_dephasing_rate(amp, kappa, 0.0, chi_a, chi_b)
        assert gamma_fit == pytest.approx(gamma, rel=0.10)


class TestSmearingDephasing:
    def test_zero_slope(self):
        m = SmearingModel(
            lam=0.0, t_grid=np.array([0.0, 10.0]), nbar=np.ones(2), kappa=0.1
        )
        assert smearing_dephasing(m, 10.0) == 0.0

    def test_kappa_zero_constant_nbar(self):
        lam, nbar, t = 1.5e-3, 4.0, 120.0
        m = SmearingModel(
            lam=lam,
            t_grid=np.array([0.0, 200.0]),
            nbar=np.full(2, nbar),
            kappa=0.0,
        )
        expect = (TWO_PI * lam) ** 2 * nbar * t**2
        assert smearing_dephasing(m, t) == pytest.approx(expect, rel=1e-6)

    def test_nondecreasing_in_time(self):
        tg = np.linspace(0.0, 300.0, 61)
        nbar = 3.0 * (1 - np.exp(-tg / 40.0))
        m = SmearingModel(lam=1e-3, t_grid=tg, nbar=nbar, kappa=0.02)
        vals = [smearing_dephasing(m, t) for t in (10.0, 50.0, 120.0, 300.0)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_negative_nbar_rejected(self):
        with pytest.raises(ValueError):
            SmearingModel(
                lam=1e-3,
                t_grid=np.array([0.0, 1.0]),
                nbar=np.array([0.1, -0.1]),
                kappa=0.1,
            )


class TestAcStarkShift:
    def test_zero_coupling(self, gf_params):
        res = ResonatorConfig(omega_r=13.634, g=0.0)
        assert ac_stark_shift(gf_params, res, 3) == (0.0, 0.0)

    def test_quadratic_in_g(self, gf_params):
        r1 = ResonatorConfig(omega_r=13.634, g=0.05)
        r2 = ResonatorConfig(omega_r=13.634, g=0.1)
        lam1, _ = ac_stark_shift(gf_params, r1, 3, pair=(0, 2))
        lam2, _ = ac_stark_shift(gf_params, r2, 3, pair=(0, 2))
        assert lam2 / lam1 == pytest.approx(4.0, abs=0.2)

    def test_fit_is_close_to_linear(self, gf_params):
        res = ResonatorConfig(omega_r=13.634, g=g_from_published(0.3))
        lam, resid = ac_stark_shift(gf_params, res, 3, pair=(0, 2))
        assert lam != 0.0
        assert resid < 0.1 * abs(lam)

    def test_same_sign_as_shift_difference(self, gf_params, gf_spec):
        res = ResonatorConfig(omega_r=13.634, g=g_from_published(0.3))
        lam, _ = ac_stark_shift(gf_params, res, 3, pair=(0, 2))
        diff = chi_dressed(gf_params, res, 2, spec=gf_spec) - chi_dressed(
            gf_params, res, 0, spec=gf_spec
        )
        assert np.sign(lam) == np.sign(diff)
        assert 0.3 < lam / diff < 3.0
