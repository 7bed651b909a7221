"""Grid, Madelung decomposition, and hydrodynamic field diagnostics."""

import math

import numpy as np
import pytest

from qstream import (ComplexField, GridSpec, PhysicalConstants,
                     expectation_energy, gaussian_packet, norm, polar_compose,
                     polar_decompose, probability_current, quantum_potential,
                     velocity_field)
from qstream.errors import (AllBelowThreshold, NegativeDensity, NotNormalized)
from qstream.fields import (derivative, kinetic_energy, node_mask,
                            position_spread, write_snapshot)

from conftest import max_abs, sym_grid

C = PhysicalConstants()


# grid and value types ------------------------------------------------------

class TestGridSpec:
    def test_bounds_must_be_ordered(self):
        with pytest.raises(ValueError):
            GridSpec(1.0, -1.0, 64)

    def test_minimum_point_count(self):
        with pytest.raises(ValueError):
            GridSpec(-1.0, 1.0, 4)

    def test_dx_and_samples(self):
        g = GridSpec(0.0, 1.0, 11)
        assert g.dx == pytest.approx(0.1)
        assert np.allclose(g.x, np.linspace(0, 1, 11))

    def test_wavenumbers_match_fft_convention(self):
        g = GridSpec(0.0, 1.0, 16)
        assert np.allclose(g.wavenumbers(),
                           2 * np.pi * np.fft.fftfreq(16, d=g.dx))


class TestComplexField:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ComplexField(sym_grid(1, 16), np.zeros(8))

    def test_nonfinite_rejected(self):
        vals = np.ones(16, dtype=complex)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            ComplexField(sym_grid(1, 16), vals)


# polar decomposition -------------------------------------------------------

class TestPolarDecompose:
    def test_constant_real_field(self):
        g = sym_grid(1, 64)
        p = polar_decompose(ComplexField(g, np.ones(64, dtype=complex)), C)
        assert np.allclose(p.rho, 1.0)
        assert np.allclose(p.S, 0.0)

    def test_plane_wave_unwraps_many_turns(self):
        # e^{2ix} over [-30, 30] wraps the raw angle ~19 times
        g = sym_grid(30, 4096)
        p = polar_decompose(ComplexField(g, np.exp(2j * g.x)), C)
        assert np.allclose(p.rho, 1.0)
        ref = p.S - 2.0 * g.x
        assert max_abs(ref - ref[0]) < 1e-9
        assert np.all(np.abs(np.diff(p.S)) < np.pi * C.hbar)

    def test_reference_point_phase_in_principal_branch(self):
        g = sym_grid(30, 4096)
        p = polar_decompose(ComplexField(g, np.exp(2j * g.x)), C)
        i0 = int(np.argmax(p.rho))
        assert -np.pi * C.hbar < p.S[i0] <= np.pi * C.hbar

    def test_boosted_gaussian_linear_action(self):
        g = sym_grid(4, 1024)
        psi = gaussian_packet(g, C, sigma0=0.5, p0=3.0)
        p = polar_decompose(psi, C)
        rho_ref = (2 * np.pi * 0.25) ** -0.5 * np.exp(-g.x ** 2 / 0.5)
        assert max_abs(p.rho - rho_ref) < 1e-12
        resid = (p.S - 3.0 * g.x)[p.valid]
        assert max_abs(resid - resid[0]) < 1e-9

    def test_all_below_threshold(self):
        g = sym_grid(1, 64)
        with pytest.raises(AllBelowThreshold):
            polar_decompose(ComplexField(g, np.zeros(64, dtype=complex)), C)


class TestPolarCompose:
    def test_unit_density_zero_action(self):
        g = sym_grid(1, 64)
        from qstream.fields import PolarFields
        out = polar_compose(PolarFields(g, np.ones(64), np.zeros(64)), C)
        assert np.allclose(out.values, 1.0)

    def test_plane_wave_from_linear_action(self):
        g = sym_grid(1, 64)
        from qstream.fields import PolarFields
        out = polar_compose(PolarFields(g, np.ones(64), C.hbar * 2 * g.x), C)
        assert max_abs(out.values - np.exp(2j * g.x)) < 1e-12

    def test_negative_density_rejected(self):
        g = sym_grid(1, 64)
        from qstream.fields import PolarFields
        rho = np.ones(64)
        rho[5] = -1e-3
        with pytest.raises(NegativeDensity):
            polar_compose(PolarFields(g, rho, np.zeros(64)), C)

    def test_round_trip_two_gaussian_superposition(self):
        g = sym_grid(12, 2048)
        psi = gaussian_packet(g, C, 1.0, x0=-3.0)
        vals = psi.values + gaussian_packet(g, C, 1.0, x0=3.0).values \
            * np.exp(0.7j)
        psi = ComplexField(g, vals / math.sqrt(
            np.trapezoid(np.abs(vals) ** 2, dx=g.dx)))
        p = polar_decompose(psi, C)
        out = polar_compose(p, C)
        # identity up to a global phase on above-threshold points
        i0 = int(np.argmax(p.rho))
        phase = psi.values[i0] / out.values[i0]
        err = (out.values * phase - psi.values)[p.valid]
        assert max_abs(err) < 1e-10


# local fields --------------------------------------------------------------

class TestProbabilityCurrent:
    def test_real_gaussian_zero_current(self):
        g = sym_grid(8, 1024)
        J = probability_current(gaussian_packet(g, C, 1.0), C)
        assert max_abs(J) < 1e-12

    def test_plane_wave_uniform_current(self):
        g = sym_grid(1, 2048)
        J = probability_current(ComplexField(g, np.exp(2j * g.x)), C)
        assert max_abs(J - 2.0) < 1e-5

    def test_boosted_gaussian_center_value(self):
        g = sym_grid(4, 1024)
        psi = gaussian_packet(g, C, sigma0=0.5, p0=3.0)
        J = probability_current(psi, C)
        i0 = np.argmin(np.abs(g.x))
        rho0 = abs(psi.values[i0]) ** 2
        assert J[i0] == pytest.approx(3.0 * rho0, rel=1e-6)


class TestVelocityField:
    def test_real_gaussian_zero_velocity(self):
        g = sym_grid(8, 1024)
        vf = velocity_field(gaussian_packet(g, C, 1.0), C)
        assert max_abs(vf.v[vf.valid]) < 1e-10

    def test_plane_wave_uniform_velocity(self):
        g = sym_grid(1, 2048)
        vf = velocity_field(ComplexField(g, np.exp(2j * g.x)), C)
        assert max_abs(vf.v[vf.valid] - 2.0) < 1e-5

    def test_superposition_velocity_antisymmetric(self):
        # symmetric zero-momentum pair, evolved briefly so v is nonzero
        from qstream import PropagatorConfig, propagate
        g = sym_grid(16, 1024)
        vals = (gaussian_packet(g, C, 1.0, x0=-3.0).values
                + gaussian_packet(g, C, 1.0, x0=3.0).values)
        psi = ComplexField(g, vals / math.sqrt(
            np.trapezoid(np.abs(vals) ** 2, dx=g.dx)))
        vf0 = velocity_field(psi, C)
        v0 = np.where(vf0.valid, vf0.v, 0.0)
        assert max_abs(v0 + v0[::-1]) < 1e-8
        run = propagate(psi, PropagatorConfig(dt=1e-3), 0.5,
                        snapshot_every=500)
        final = run.snapshots[-1]
        vf = velocity_field(final, C)
        rho = np.abs(final.values) ** 2
        bulk = vf.valid & (rho > 1e-6 * rho.max())
        v = np.where(bulk, vf.v, 0.0)
        assert max_abs(v + v[::-1]) < 1e-8

    def test_matches_action_gradient(self):
        g = sym_grid(6, 2048)
        psi = gaussian_packet(g, C, sigma0=0.8, p0=1.5)
        vf = velocity_field(psi, C)
        p = polar_decompose(psi, C)
        dS = derivative(p.S, g.dx) / C.mass
        mask = p.valid & vf.valid
        assert max_abs((vf.v - dS)[mask]) < 1e-6

    def test_nodes_flagged_invalid(self):
        g = sym_grid(1, 64)
        vals = np.ones(64, dtype=complex)
        vals[30:34] = 0.0
        vf = velocity_field(ComplexField(g, vals), C)
        assert not vf.valid[31]
        assert np.isnan(vf.v[31])


class TestQuantumPotential:
    def test_plane_wave_zero(self):
        g = sym_grid(1, 512)
        Q = quantum_potential(ComplexField(g, np.exp(2j * g.x)), C)
        assert max_abs(Q) < 1e-8

    def test_oscillator_ground_state_constant_total(self):
        # sigma^2 = 1/2 ground state: Q(x) + x^2/2 = 1/2 pointwise
        g = sym_grid(8, 2048)
        psi = gaussian_packet(g, C, sigma0=math.sqrt(0.5))
        Q = quantum_potential(psi, C)
        interior = np.abs(g.x) < 4.0
        total = Q[interior] + 0.5 * g.x[interior] ** 2
        assert max_abs(total - 0.5) < 1e-6

    def test_center_value_second_order_refinement(self):
        # Q(0) = hbar^2 / (8 m sigma0^4) * (1 - 0) ... closed form for a
        # Gaussian: Q(x) = (hbar^2/(4 m sigma^2)) (1 - x^2/(2 sigma^2))
        sigma = 1.0
        exact = C.hbar ** 2 / (4 * C.mass * sigma ** 2)
        errs = []
        for n in (256, 512):
            g = sym_grid(8, n + 1)
            Q = quantum_potential(gaussian_packet(g, C, sigma), C)
            i0 = np.argmin(np.abs(g.x))
            errs.append(abs(Q[i0] - exact))
        # stencil is 4th order; require at least the advertised 2nd order
        assert errs[0] / errs[1] > 4.0
        assert errs[1] < 1e-8


class TestDerivativeStencils:
    def test_first_derivative_fourth_order_interior(self):
        errs = []
        for n in (256, 512):
            g = sym_grid(2, n + 1)
            d = derivative(np.sin(g.x), g.dx)
            errs.append(max_abs((d - np.cos(g.x))[4:-4]))
        assert errs[0] / errs[1] > 14.0

    def test_second_derivative_fourth_order_interior(self):
        errs = []
        for n in (128, 256):
            g = sym_grid(2, n + 1)
            d = derivative(np.sin(g.x), g.dx, order=2)
            errs.append(max_abs((d + np.sin(g.x))[4:-4]))
        assert errs[0] / errs[1] > 14.0
        assert errs[1] < 1e-8

    def test_unknown_order_rejected(self):
        with pytest.raises(ValueError):
            derivative(np.zeros(16), 0.1, order=3)


class TestNorm:
    def test_unit_gaussian(self):
        g = sym_grid(12, 2048)
        assert norm(gaussian_packet(g, C, 1.0)) == pytest.approx(1.0,
                                                                 abs=1e-10)

    def test_zero_field(self):
        g = sym_grid(1, 64)
        assert norm(ComplexField(g, np.zeros(64, dtype=complex))) == 0.0

    def test_two_distant_gaussians(self):
        # centers 10 sigma apart: residual overlap 2 e^{-12.5} ~ 7.5e-6
        g = sym_grid(25, 4096)
        vals = (gaussian_packet(g, C, 1.0, x0=-5.0).values
                + gaussian_packet(g, C, 1.0, x0=5.0).values)
        assert norm(ComplexField(g, vals)) == pytest.approx(2.0, abs=1e-5)


class TestExpectationEnergy:
    def test_oscillator_ground_state(self):
        g = sym_grid(8, 1024)
        psi = gaussian_packet(g, C, sigma0=math.sqrt(0.5))
        V = 0.5 * g.x ** 2
        assert expectation_energy(psi, V, C) == pytest.approx(0.5, abs=1e-4)

    def test_boosted_broad_gaussian(self):
        g = sym_grid(30, 4096)
        sigma = 2.0
        psi = gaussian_packet(g, C, sigma0=sigma, p0=2.0)
        E = expectation_energy(psi, np.zeros(g.n_points), C)
        assert E == pytest.approx(2.0 + 1.0 / (8 * sigma ** 2), rel=1e-8)

    def test_displaced_coherent_state(self):
        g = sym_grid(8, 1024)
        psi = gaussian_packet(g, C, sigma0=math.sqrt(0.5), x0=1.0)
        V = 0.5 * g.x ** 2
        assert expectation_energy(psi, V, C) == pytest.approx(1.0, abs=1e-4)

    def test_requires_normalized_state(self):
        g = sym_grid(8, 1024)
        psi = ComplexField(g, 2.0 * gaussian_packet(g, C, 1.0).values)
        with pytest.raises(NotNormalized):
            expectation_energy(psi, np.zeros(g.n_points), C)


class TestNodeMask:
    def test_threshold_relative_to_peak(self):
        rho = np.array([1.0, 1e-13, 0.5, 0.0])
        assert node_mask(rho).tolist() == [True, False, True, False]

    def test_all_zero(self):
        assert not node_mask(np.zeros(5)).any()


class TestSnapshotSerialization:
    def test_round_trip_columns(self, tmp_path):
        g = sym_grid(8, 256)
        psi = gaussian_packet(g, C, 1.0, p0=0.5)
        path = tmp_path / "snap.txt"
        write_snapshot(path, psi, C)
        lines = path.read_text().splitlines()
        header = [ln for ln in lines if "=" in ln]
        assert any(ln.startswith("n_points = 256") for ln in header)
        rows = [ln for ln in lines if "=" not in ln and not ln.startswith("#")]
        assert len(rows) == 256
        cols = np.array([[float(v) for v in r.split()] for r in rows])
        assert cols.shape == (256, 7)
        assert np.allclose(cols[:, 0], g.x)
        assert np.allclose(cols[:, 1] + 1j * cols[:, 2], psi.values)
        assert np.allclose(cols[:, 3], np.abs(psi.values) ** 2)

    def test_invalid_points_written_as_nan(self, tmp_path):
        g = sym_grid(1, 64)
        vals = np.ones(64, dtype=complex)
        vals[10] = 0.0
        path = tmp_path / "snap.txt"
        write_snapshot(path, ComplexField(g, vals), C)
        rows = [ln for ln in path.read_text().splitlines()
                if "=" not in ln and not ln.startswith("#")]
        assert "nan" in rows[10]


def test_kinetic_energy_plane_wave_mode():
    # exact FFT mode of the periodic box: T = hbar^2 k^2 / 2m per unit norm
    n = 256
    g = GridSpec(0.0, 4 * np.pi * (n - 1) / n, n)
    k = 2.0
    psi = ComplexField(g, np.exp(1j * k * g.x) / math.sqrt(4 * np.pi))
    assert kinetic_energy(psi, C) == pytest.approx(
        0.5 * k ** 2 * norm(psi), rel=1e-10)


def test_position_spread_gaussian():
    g = sym_grid(12, 2048)
    assert position_spread(gaussian_packet(g, C, 1.3)) == pytest.approx(
        1.3, rel=1e-8)
