import math

import numpy as np
import pytest

from qworklab.field1d import (
    FieldError,
    Grid1D,
    PotentialSpec,
    Propagator,
    Ramp,
    Wavefunction,
    free_gaussian_width,
    gaussian_packet,
    hamiltonian_expectation,
    ho_eigenstates,
    kinetic_expectation,
    split_step,
    step_count,
)


@pytest.fixture(scope="module")
def grid():
    return Grid1D.symmetric(20.0, 1024)


def fidelity(a: Wavefunction, b: Wavefunction) -> float:
    return abs(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx) ** 2


class TestGrid:
    def test_rejects_small_or_odd_sizes(self):
        with pytest.raises(FieldError):
            Grid1D(32, -1.0, 0.1)
        with pytest.raises(FieldError):
            Grid1D(100, -1.0, 0.1)

    def test_symmetric_layout(self, grid):
        assert grid.x[0] == -20.0
        assert grid.x[-1] + grid.dx == pytest.approx(20.0)
        assert grid.k_odd[grid.n_points // 2] == 0.0


class TestRamp:
    def test_linear_and_smooth(self):
        lin = Ramp(1.0, 3.0, 2.0)
        assert lin.value(1.0) == pytest.approx(2.0)
        assert lin.rate(0.5) == pytest.approx(1.0)
        smooth = Ramp(1.0, 3.0, 2.0, shape="smooth")
        assert smooth.rate(0.0) == 0.0 and smooth.rate(2.0) == 0.0
        assert smooth.value(5.0) == 3.0

    def test_reversed(self):
        r = Ramp(0.0, 2.0, 3.0, t0=0.5, shape="smooth")
        rev = r.reversed(4.0)
        for t in np.linspace(0, 4, 9):
            assert rev.value(t) == pytest.approx(r.value(4.0 - t), abs=1e-14)


class TestSplitStep:
    def test_norm_preserved_per_step(self, grid):
        psi = gaussian_packet(grid, 1.0, x0=1.0, k0=2.0)
        out = split_step(psi, PotentialSpec.harmonic(1.0), 0.01)
        assert abs(out.norm2() - psi.norm2()) < 1e-12
        assert out.time == pytest.approx(0.01)

    def test_ground_state_stationary_ten_periods(self, grid):
        (psi,), _ = ho_eigenstates(grid)
        out = Propagator(grid, PotentialSpec.harmonic(1.0)).evolve(psi, 20 * math.pi, 0.02)
        assert np.max(np.abs(np.abs(out.amplitudes) - np.abs(psi.amplitudes))) < 1e-8

    def test_free_gaussian_width(self, grid):
        psi = gaussian_packet(grid, 1.0)
        out = Propagator(grid, PotentialSpec.free()).evolve(psi, 2.0, 0.05)
        assert out.width() == pytest.approx(free_gaussian_width(1.0, 2.0), rel=1e-6)

    def test_second_order_convergence(self, grid):
        V = PotentialSpec.stiffness_ramp(Ramp(1.0, 2.0, 1.5, shape="smooth"))
        psi = gaussian_packet(grid, 0.8, x0=1.0)
        prop = Propagator(grid, V)
        ref = prop.evolve(psi, 2.0, 0.0005)
        errs = [np.max(np.abs(prop.evolve(psi, 2.0, dt).amplitudes - ref.amplitudes)) for dt in (0.04, 0.02)]
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_non_finite_detected(self, grid):
        psi = Wavefunction(grid, np.full(grid.n_points, np.nan, dtype=complex))
        with pytest.raises(FieldError, match="non-finite"):
            split_step(psi, PotentialSpec.free(), 0.1)

    def test_rejects_nonpositive_dt(self, grid):
        with pytest.raises(FieldError):
            split_step(gaussian_packet(grid, 1.0), PotentialSpec.free(), 0.0)

    def test_step_count_covers_span(self):
        n, dt = step_count(math.pi, 0.01)
        assert n == 315 and n * dt == pytest.approx(math.pi)

    def test_recorded_snapshots_end_on_target(self, grid):
        snaps = Propagator(grid, PotentialSpec.free()).evolve(gaussian_packet(grid, 1.0), math.pi, 0.01,
                                                             record_every=2)
        assert snaps[-1].time == pytest.approx(math.pi)
        assert np.allclose(np.diff([s.time for s in snaps]), snaps[1].time)


class TestLongRuns:
    def test_norm_over_ten_thousand_steps(self, grid):
        psi = gaussian_packet(grid, 0.7, x0=2.0, k0=1.0)
        out = Propagator(grid, PotentialSpec.harmonic(1.0)).evolve(psi, 100.0, 0.01)
        assert abs(out.norm2() - 1) < 1e-10

    @pytest.mark.parametrize("case", ["ground", "free", "displaced"])
    def test_static_energy_drift(self, grid, case):
        if case == "ground":
            (psi,), _ = ho_eigenstates(grid)
            V, dt = PotentialSpec.harmonic(1.0), 0.01
        elif case == "free":
            psi, V, dt = gaussian_packet(grid, 1.0, k0=0.5), PotentialSpec.free(), 0.001
        else:
            # energy error of the splitting is O(dt^2); this dt keeps it below 1e-8
            psi, V, dt = gaussian_packet(grid, 1 / math.sqrt(2), x0=1.0), PotentialSpec.harmonic(1.0), 2.5e-4
        e0 = hamiltonian_expectation(psi, V)
        out = Propagator(grid, V).evolve(psi, 1e4 * dt, dt)
        assert abs(hamiltonian_expectation(out, V) / e0 - 1) < 1e-8

    def test_time_reversal(self, grid):
        T = 4.0
        V = PotentialSpec.stiffness_ramp(Ramp(1.0, 2.0, 3.0, shape="smooth"))
        psi = gaussian_packet(grid, 0.7, x0=0.5, k0=1.0)
        fwd = Propagator(grid, V).evolve(psi, T, 0.01)
        back = Propagator(grid, V.reversed(T)).evolve(Wavefunction(grid, fwd.amplitudes.conj(), 0.0), T, 0.01)
        assert fidelity(psi, Wavefunction(grid, back.amplitudes.conj())) > 1 - 1e-8

    def test_dragged_trap_reversal(self, grid):
        T = 3.0
        V = PotentialSpec.harmonic(1.0, Ramp(0.0, 2.0, T))
        (psi,), _ = ho_eigenstates(grid)
        fwd = Propagator(grid, V).evolve(psi, T, 0.01)
        back = Propagator(grid, V.reversed(T)).evolve(Wavefunction(grid, fwd.amplitudes.conj(), 0.0), T, 0.01)
        assert fidelity(psi, Wavefunction(grid, back.amplitudes.conj())) > 1 - 1e-8


class TestObservables:
    def test_ground_state_energy(self, grid):
        (psi,), (e0,) = ho_eigenstates(grid)
        assert hamiltonian_expectation(psi, PotentialSpec.harmonic(1.0)) == pytest.approx(0.5, abs=1e-8)
        assert e0 == 0.5

    def test_gaussian_kinetic_energy(self, grid):
        sigma0 = 0.8
        psi = gaussian_packet(grid, sigma0)
        # sigma0 is the std of |psi|^2, so <p^2> = hbar^2 / (4 sigma0^2)
        expected = 1 / (8 * sigma0**2)
        assert hamiltonian_expectation(psi, PotentialSpec.free()) == pytest.approx(expected, rel=1e-10)
        assert kinetic_expectation(psi, PotentialSpec.free()) == pytest.approx(expected, rel=1e-10)

    def test_free_energy_constant(self, grid):
        psi = gaussian_packet(grid, 1.0, k0=1.0)
        V = PotentialSpec.free()
        e0 = hamiltonian_expectation(psi, V)
        for t in (0.5, 1.0, 2.0):
            out = Propagator(grid, V).evolve(psi, t, 0.05)
            assert abs(hamiltonian_expectation(out, V) - e0) < 1e-10

    def test_gaussian_width_is_sigma0(self, grid):
        assert gaussian_packet(grid, 1.3).width() == pytest.approx(1.3, rel=1e-12)

    def test_csv_columns(self, grid):
        lines = gaussian_packet(grid, 1.0).to_csv().splitlines()
        assert lines[0] == "x,re,im,density"
        assert len(lines) == grid.n_points + 1


class TestEigenstates:
    def test_energies_and_orthonormality(self, grid):
        states, energies = ho_eigenstates(grid, n_max=10)
        V = PotentialSpec.harmonic(1.0)
        for n, psi in enumerate(states):
            assert hamiltonian_expectation(psi, V) == pytest.approx(n + 0.5, abs=1e-6)
        assert abs(np.vdot(states[0].amplitudes, states[1].amplitudes) * grid.dx) < 1e-8
        gram = np.array([[np.vdot(a.amplitudes, b.amplitudes) * grid.dx for b in states] for a in states])
        assert np.max(np.abs(gram - np.eye(11))) < 1e-8
        np.testing.assert_allclose(energies, np.arange(11) + 0.5)

    def test_ground_state_is_gaussian(self, grid):
        (psi,), _ = ho_eigenstates(grid, omega=2.0)
        expected = gaussian_packet(grid, 1 / math.sqrt(2 * 2.0))
        assert np.max(np.abs(psi.amplitudes - expected.amplitudes)) < 1e-12

    def test_under_resolution_detected(self):
        coarse = Grid1D.symmetric(3.0, 64)
        with pytest.raises(FieldError, match="under-resolves"):
            ho_eigenstates(coarse, n_max=20)
