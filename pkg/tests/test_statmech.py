import json
import math

import numpy as np
import pytest

from qworklab.field1d import Ramp
from qworklab.statmech import (
    CanonicalSpec,
    JarzynskiReport,
    ProtocolSpec,
    StatMechError,
    bohmian_jarzynski,
    classical_gibbs_sample,
    classical_jarzynski,
    classical_work,
    free_energy_diff,
    jackknife_mean,
    quantum_gibbs_mixture,
    thermal_energy,
)


class TestClassicalGibbs:
    @pytest.mark.parametrize("beta,omega", [(1.0, 1.0), (2.0, 0.5)])
    def test_variances(self, beta, omega):
        n = 100_000
        x, p = classical_gibbs_sample(CanonicalSpec(beta, omega), n, 1)
        tol = 4 * math.sqrt(2 / n)
        assert abs(x.var() * beta * omega**2 - 1) < tol
        assert abs(p.var() * beta - 1) < tol

    def test_mean_energy(self):
        n, beta = 100_000, 0.5
        x, p = classical_gibbs_sample(CanonicalSpec(beta), n, 2)
        e = 0.5 * p**2 + 0.5 * x**2
        assert abs(e.mean() - 1 / beta) < 4 * e.std() / math.sqrt(n)

    def test_deterministic(self):
        a = classical_gibbs_sample(CanonicalSpec(1.0), 10, 3)
        b = classical_gibbs_sample(CanonicalSpec(1.0), 10, 3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(StatMechError):
            CanonicalSpec(0.0)


class TestClassicalWork:
    def test_static_protocol_zero(self):
        x, p = classical_gibbs_sample(CanonicalSpec(1.0), 200, 4)
        res = classical_work(ProtocolSpec.static(t_span=3.0), x, p, 0.01)
        assert np.max(np.abs(res.work)) == 0.0

    def test_quasi_static_drag(self):
        x, p = classical_gibbs_sample(CanonicalSpec(1.0), 2000, 5)
        means = [np.mean(classical_work(ProtocolSpec.drag(2.0, T, shape="smooth"), x, p, 0.01).work)
                 for T in (2.0, 20.0, 200.0)]
        assert means[0] > means[1] > means[2] >= -1e-3
        assert means[2] < 1e-3

    @pytest.mark.parametrize("kind", ["drag", "stiffness"])
    def test_work_equals_energy_change(self, kind):
        proto = ProtocolSpec.drag(3.0, 2.0) if kind == "drag" else ProtocolSpec.stiffness(1.0, 2.0, 2.0)
        x, p = classical_gibbs_sample(CanonicalSpec(1.0), 500, 6)
        res = [np.max(np.abs(classical_work(proto, x, p, dt).bookkeeping_residual)) for dt in (0.02, 0.01)]
        assert res[1] < 1e-3
        assert res[0] / res[1] > 3.5

    def test_rejects_unknown_kind(self):
        with pytest.raises(StatMechError):
            ProtocolSpec("teleport", Ramp.constant(1.0), 1.0)


class TestClassicalJarzynski:
    def test_needs_thousand_samples(self):
        with pytest.raises(StatMechError, match="1000"):
            classical_jarzynski(CanonicalSpec(1.0), ProtocolSpec.drag(1.0, 1.0), 999, 0)

    @pytest.mark.parametrize("proto", [ProtocolSpec.drag(3.0, 0.5), ProtocolSpec.stiffness(1.0, 2.0, 0.5)])
    def test_fast_protocol(self, proto):
        rep = classical_jarzynski(CanonicalSpec(1.0), proto, 10_000, 7)
        assert rep.gap_sigmas < 4
        # Jensen
        assert rep.mean_work >= rep.delta_F

    def test_report_serialization(self):
        rep = classical_jarzynski(CanonicalSpec(1.0), ProtocolSpec.drag(1.0, 1.0), 1000, 8)
        d = json.loads(rep.to_json())
        assert d["n"] == 1000 and d["work_kind"] == "classical" and d["protocol"]["kind"] == "drag"
        lines = rep.to_csv().splitlines()
        assert lines[0] == "n,traj_id,W,exp_minus_beta_W"
        assert len(lines) == 1001


class TestQuantumGibbs:
    def test_unit_beta_hbar_omega(self):
        p = quantum_gibbs_mixture(1.0, 1.0)
        n = np.arange(len(p))
        np.testing.assert_allclose(p, (1 - math.exp(-1)) * np.exp(-n), rtol=1e-9, atol=1e-12)
        assert math.fsum(p) == pytest.approx(1.0, abs=1e-15)

    def test_cold_limit(self):
        p = quantum_gibbs_mixture(50.0, 1.0)
        assert len(p) == 1 and p[0] == 1.0

    @pytest.mark.parametrize("beta", [0.3, 1.0, 4.0])
    def test_thermal_energy(self, beta):
        p = quantum_gibbs_mixture(beta, 1.0)
        mean = math.fsum(p * (np.arange(len(p)) + 0.5))
        assert mean == pytest.approx(0.5 / math.tanh(beta / 2), rel=1e-8)
        assert thermal_energy(beta, 1.0) == pytest.approx(mean, rel=1e-8)

    def test_insufficient_truncation(self):
        with pytest.raises(StatMechError, match="tail"):
            quantum_gibbs_mixture(1.0, 1.0, n_max=5)


class TestFreeEnergy:
    def test_classical(self):
        assert free_energy_diff("classical-HO", 2.0, 1.0, 2.0) == pytest.approx(math.log(2) / 2)

    def test_quantum(self):
        beta, w1, w2 = 1.0, 1.0, 2.0
        expected = math.log(math.sinh(beta * w2 / 2) / math.sinh(beta * w1 / 2)) / beta
        assert free_energy_diff("quantum-HO", beta, w1, w2) == pytest.approx(expected, rel=1e-14)

    def test_quantum_tends_to_classical(self):
        q = free_energy_diff("quantum-HO", 1e-4, 1.0, 2.0)
        c = free_energy_diff("classical-HO", 1e-4, 1.0, 2.0)
        assert q == pytest.approx(c, rel=1e-6)

    def test_large_argument_finite(self):
        assert free_energy_diff("quantum-HO", 1e4, 1.0, 2.0) == pytest.approx(0.5, rel=1e-10)

    def test_unknown_kind(self):
        with pytest.raises(StatMechError):
            free_energy_diff("anharmonic", 1.0, 1.0, 2.0)


class TestJackknife:
    def test_matches_standard_error_of_mean(self):
        y = np.random.default_rng(0).normal(size=500)
        mean, se = jackknife_mean(y)
        assert mean == pytest.approx(y.mean())
        assert se == pytest.approx(y.std(ddof=1) / math.sqrt(y.size), rel=1e-10)

    def test_needs_two(self):
        with pytest.raises(StatMechError):
            jackknife_mean([1.0])


class TestBohmianJarzynski:
    def test_static_protocol(self):
        rep = bohmian_jarzynski(2.0, 1.0, ProtocolSpec.static(1.0, 2.0), 50, 9, dt=0.01)
        assert rep.exact == 1.0
        assert abs(rep.estimate - rep.exact) < 1e-5

    def test_frequency_mismatch(self):
        with pytest.raises(StatMechError, match="frequency"):
            bohmian_jarzynski(1.0, 1.5, ProtocolSpec.stiffness(1.0, 2.0, 1.0), 10, 0)

    def test_report_gap(self):
        rep = JarzynskiReport(1.1, 1.0, 0.05, 10, {}, "W_E", 0.0, 0.0)
        assert rep.gap == pytest.approx(0.1) and rep.gap_sigmas == pytest.approx(2.0)
