import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from gedamage import autodiff as ad
from gedamage import materials as mat
from gedamage import networks as nn
from gedamage import tensors as tn
from gedamage.materials import ClosedFormParams
from gedamage.verify import neo_hookean_pk1, random_closedform, random_datadriven

from conftest import random_F

PLATE = ClosedFormParams.from_young(210.0, 0.3, eta_d=0.002, kappa_d=0.1, c_d=1.0, beta_d=1000.0)


def uniaxial_F(psi_target, m):
    """diag(l, 1, 1) whose neo-Hookean energy equals ``psi_target``."""
    f = lambda l: float(mat.neo_hookean_energy(np.diag([l * l, 1.0, 1.0]), m.mu_e, m.lambda_e)) - psi_target  # noqa: E731
    return np.diag([brentq(f, 1.0, 2.0, xtol=1e-15), 1.0, 1.0])


class TestParams:
    def test_from_young(self):
        m = ClosedFormParams.from_young(42.0, 0.45, eta_d=1.0, kappa_d=0.0)
        assert m.mu_e == pytest.approx(42.0 / 2.9)
        assert m.lambda_e == pytest.approx(42.0 * 0.45 / (1.45 * 0.1))

    @pytest.mark.parametrize("field,value", [("mu_e", 0.0), ("eta_d", 0.0), ("kappa_d", -1.0), ("beta_d", -1.0)])
    def test_rejects_invalid(self, field, value):
        kw = dict(mu_e=1.0, lambda_e=1.0, eta_d=1.0, kappa_d=0.0)
        kw[field] = value
        with pytest.raises(ValueError):
            ClosedFormParams(**kw)


class TestNeoHookean:
    def test_identity(self):
        assert mat.neo_hookean_energy(np.eye(3), 1.0, 1.0) == 0.0

    def test_diagonal_value(self):
        expect = 1.5 - np.log(2.0) + 0.5 * np.log(2.0) ** 2
        assert mat.neo_hookean_energy(np.diag([4.0, 1.0, 1.0]), 1.0, 1.0) == pytest.approx(expect, rel=1e-14)
        assert expect == pytest.approx(1.047080, abs=1e-6)

    def test_analytic_pk1(self, rng):
        m = ClosedFormParams(3.0, 20.0, eta_d=1.0, kappa_d=5.0)
        for lam in (0.8, 1.1, 1.5):
            F = np.diag([lam, 1.0, 1.0])
            P = mat.pk1_stress(F, 0.0, np.zeros(3), 0.0, m)
            np.testing.assert_allclose(P, neo_hookean_pk1(F, 3.0, 20.0), rtol=1e-10, atol=1e-12)
        for F in random_F(rng, 20):
            P = mat.pk1_stress(F, 0.0, np.zeros(3), 0.0, m)
            np.testing.assert_allclose(P, neo_hookean_pk1(F, 3.0, 20.0), rtol=1e-10, atol=1e-12)


class TestDataDrivenEnergy:
    def test_identity_zero(self, rng):
        for _ in range(10):
            assert abs(mat.datadriven_energy(np.eye(3), random_datadriven(rng))) < 1e-14

    def test_nonnegative_for_nondecreasing_net(self, rng):
        p = random_datadriven(rng)
        for layer in p.psi_iso_net.layers:
            layer.wx = np.abs(layer.wx)
        C = tn.right_cauchy_green(random_F(rng, 500, amp=0.4))
        assert mat.datadriven_energy(C, p).min() >= -1e-12

    def test_zero_network_leaves_volumetric(self, rng):
        p = nn.DataDrivenParams(1.0, 2.0, nn.IcnnWeights.zeros(), nn.MonotoneNetWeights.identity(), 1.0, 0.0)
        F = 1.2 * np.eye(3)
        J = 1.2**3
        assert mat.datadriven_energy(F.T @ F, p) == pytest.approx(2.0 * (J + 1 / J - 2) ** 2, rel=1e-13)


class TestDegradation:
    def test_below_threshold(self):
        f, d = mat.degradation(0.0, 1.0, 0.1)
        assert (f, d) == (1.0, 0.0)

    def test_unit_exponent(self):
        f, _ = mat.degradation(0.1 + 1 / 3.0, 3.0, 0.1)
        assert f == pytest.approx(np.exp(-1.0), rel=1e-14)

    def test_plate_parameters(self):
        f, d = mat.degradation(600.1, 0.002, 0.1)
        assert f == pytest.approx(0.301194, abs=1e-6)
        assert d == pytest.approx(0.698806, abs=1e-6)

    def test_monotone_and_bounded(self):
        k = np.linspace(0.0, 1e4, 2001)
        f, d = mat.degradation(k, 0.01, 0.5)
        assert np.all(np.diff(f) <= 0.0)
        assert np.all((d >= 0.0) & (d <= 1.0))
        np.testing.assert_allclose(f + d, 1.0, rtol=0, atol=1e-15)

    def test_derivatives(self):
        k = np.array([0.05, 0.3, 1.0])
        f, f1, f2 = mat.degradation_derivatives(k, 2.0, 0.1)
        np.testing.assert_allclose(f1, np.where(k > 0.1, -2.0 * f, 0.0))
        np.testing.assert_allclose(f2, np.where(k > 0.1, 4.0 * f, 0.0))


class TestInternalEnergy:
    def test_virgin(self):
        assert mat.internal_energy(np.eye(3), 0.0, np.zeros(3), 0.0, PLATE) == 0.0

    def test_pure_penalty(self):
        assert mat.internal_energy(np.eye(3), 1.0, np.zeros(3), 0.0, PLATE) == pytest.approx(500.0)

    def test_termwise(self, rng):
        for k in range(20):
            m = random_closedform(rng) if k % 2 else random_datadriven(rng)
            F = random_F(rng)
            phi, kappa, g = rng.uniform(0, 1), rng.uniform(0, 1), rng.normal(size=3)
            C = F.T @ F
            f = np.exp(-m.eta_d * max(kappa - m.kappa_d, 0.0))
            expect = (f * mat.elastic_energy(C, m) + 0.5 * m.c_d * g @ np.linalg.solve(C, g)
                      + 0.5 * m.beta_d * (phi - kappa) ** 2)
            assert mat.internal_energy(F, phi, g, kappa, m) == pytest.approx(expect, rel=1e-12)

    def test_objectivity(self, rng):
        m = random_datadriven(rng)
        F = random_F(rng)
        g = rng.normal(size=3)
        ref = mat.internal_energy(F, 0.3, g, 0.2, m)
        for Q in Rotation.random(50, random_state=1).as_matrix():
            assert mat.internal_energy(Q @ F, 0.3, g, 0.2, m) == pytest.approx(ref, rel=1e-10)


class TestStress:
    @pytest.mark.parametrize("variant", ["closedform", "datadriven"])
    def test_stress_free_reference(self, rng, variant):
        for _ in range(20):
            m = random_closedform(rng) if variant == "closedform" else random_datadriven(rng)
            kappa = rng.uniform(0.0, 3.0)
            P = mat.pk1_stress(np.eye(3), rng.uniform(0, 1), np.zeros(3), kappa, m)
            assert np.abs(P).max() < 1e-10

    def test_degradation_scales_elastic_part(self, rng):
        m = ClosedFormParams(3.0, 20.0, eta_d=np.log(2.0), kappa_d=0.0)
        F = random_F(rng)
        P1 = mat.pk1_stress(F, 0.0, np.zeros(3), 0.0, m)
        P2 = mat.pk1_stress(F, 0.0, np.zeros(3), 1.0, m)  # f_d = 0.5
        np.testing.assert_allclose(P2, 0.5 * P1, rtol=1e-14)

    def test_degradation_linearity_termwise(self, rng):
        m = random_closedform(rng, kappa_d=0.0)
        m0 = ClosedFormParams(m.mu_e, m.lambda_e, m.eta_d, m.kappa_d)
        grad_only = ClosedFormParams(1e-300, 0.0, m.eta_d, m.kappa_d, c_d=m.c_d)
        F, g, kappa = random_F(rng), rng.normal(size=3), 0.7
        c = float(mat.degradation(kappa, m.eta_d, m.kappa_d)[0])
        P = mat.pk1_stress(F, 0.2, g, kappa, m)
        expect = c * mat.pk1_stress(F, 0.0, np.zeros(3), 0.0, m0) + mat.pk1_stress(F, 0.0, g, 0.0, grad_only)
        np.testing.assert_allclose(P, expect, rtol=1e-12, atol=1e-12)


class TestNonlocalConjugates:
    def test_equilibrated(self):
        flux, src = mat.nonlocal_conjugates(np.eye(3), 0.4, np.zeros(3), 0.4, PLATE)
        np.testing.assert_array_equal(flux, 0.0)
        assert src == 0.0

    def test_identity_metric(self):
        flux, _ = mat.nonlocal_conjugates(np.eye(3), 0.0, np.array([1.0, 0.0, 0.0]), 0.0, PLATE)
        np.testing.assert_allclose(flux, [1.0, 0.0, 0.0])

    def test_penalty_source(self):
        _, src = mat.nonlocal_conjugates(np.eye(3), 0.21, np.zeros(3), 0.2, PLATE)
        assert src == pytest.approx(-10.0, rel=1e-10)

    def test_closed_form(self, rng):
        F, g = random_F(rng), rng.normal(size=3)
        flux, src = mat.nonlocal_conjugates(F, 0.5, g, 0.2, PLATE)
        np.testing.assert_allclose(flux, np.linalg.solve(F.T @ F, g), rtol=1e-12)
        assert src == pytest.approx(-1000.0 * 0.3, rel=1e-12)


class TestDrivingForce:
    def test_virgin(self):
        assert mat.driving_force(np.eye(3), 0.0, np.zeros(3), 0.0, PLATE) == 0.0

    def test_penalty_vanishes(self, rng):
        F = random_F(rng)
        q = mat.driving_force(F, 0.7, np.zeros(3), 0.7, PLATE)
        assert q == pytest.approx(float(mat.elastic_energy(F.T @ F, PLATE)), rel=1e-15)

    def test_plate_example(self):
        F = uniaxial_F(0.2, PLATE)
        q = mat.driving_force(F, 0.101, np.zeros(3), 0.1, PLATE)
        assert q == pytest.approx(500.2, rel=1e-10)

    def test_local_mode(self, rng):
        F = random_F(rng)
        assert mat.driving_force(F, 5.0, np.zeros(3), 0.0, PLATE, local=True) == pytest.approx(
            float(mat.elastic_energy(F.T @ F, PLATE)))

    def test_equals_energy_derivative_in_d(self, rng):
        for _ in range(10):
            m = random_closedform(rng)
            F, g = random_F(rng), rng.normal(size=3)
            d0 = rng.uniform(0.05, 0.9)
            kappa = m.kappa_d - np.log(1.0 - d0) / m.eta_d
            phi = kappa + rng.uniform(-0.2, 0.2)
            d = ad.seed(np.array([d0]))[0]
            k_of_d = m.kappa_d - ad.log(1.0 - d) / m.eta_d
            psi = mat.internal_energy(F, phi, g, k_of_d, m)
            q = mat.driving_force(F, phi, g, kappa, m)
            assert q == pytest.approx(-psi.tan[0], rel=1e-8)
