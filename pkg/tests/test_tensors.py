import numpy as np
import pytest

from gedamage import tensors as tn
from gedamage.autodiff import Dual

from conftest import random_F


class TestRightCauchyGreen:
    def test_identity(self):
        np.testing.assert_array_equal(tn.right_cauchy_green(np.eye(3)), np.eye(3))

    def test_diagonal_stretch(self):
        C = tn.right_cauchy_green(np.diag([2.0, 1.0, 1.0]))
        np.testing.assert_allclose(C, np.diag([4.0, 1.0, 1.0]))

    def test_random_spd(self, rng):
        for F in random_F(rng, 50):
            C = tn.right_cauchy_green(F)
            np.testing.assert_allclose(C, C.T, atol=1e-15)
            assert np.linalg.eigvalsh(C).min() > 0.0

    def test_inverted_raises(self):
        with pytest.raises(tn.InvertedElementError):
            tn.right_cauchy_green(np.diag([-1.0, 1.0, 1.0]))


class TestInvariants:
    def test_identity(self):
        inv = tn.invariants(np.eye(3))
        assert (inv.I1, inv.I2, inv.J, inv.I1G, inv.I2G) == (3.0, 3.0, 1.0, 3.0, 3.0)

    def test_diagonal(self):
        inv = tn.invariants(np.diag([4.0, 1.0, 1.0]))
        assert inv.I1 == pytest.approx(6.0)
        assert inv.I2 == pytest.approx(9.0)
        assert inv.J == pytest.approx(2.0)
        assert inv.I1G == pytest.approx(6.0 * 2.0 ** (-2.0 / 3.0))
        assert inv.I2G == pytest.approx(5.0625)

    def test_eigenvalue_oracle(self, rng):
        for F in random_F(rng, 50):
            C = F.T @ F
            lam = np.linalg.eigvalsh(C)
            inv = tn.invariants(C)
            I1 = lam.sum()
            I2 = lam[0] * lam[1] + lam[1] * lam[2] + lam[0] * lam[2]
            J = np.sqrt(lam.prod())
            np.testing.assert_allclose(inv.I1, I1, rtol=1e-12)
            np.testing.assert_allclose(inv.I2, I2, rtol=1e-12)
            np.testing.assert_allclose(inv.J, J, rtol=1e-12)
            np.testing.assert_allclose(inv.I1G, I1 * J ** (-2 / 3), rtol=1e-12)
            np.testing.assert_allclose(inv.I2G, I2**3 / (9 * J**4), rtol=1e-12)

    def test_J_equals_det_F(self, rng):
        F = random_F(rng, 100)
        inv = tn.invariants(tn.right_cauchy_green(F))
        np.testing.assert_allclose(inv.J, np.linalg.det(F), rtol=1e-12)

    def test_isochoric_scaling(self, rng):
        C = tn.right_cauchy_green(random_F(rng, 20))
        for s in (0.5, 1.7, 3.0):
            a, b = tn.invariants(C), tn.invariants(s * s * C)
            np.testing.assert_allclose(b.I1G, a.I1G, rtol=1e-12)
            np.testing.assert_allclose(b.I2G, a.I2G, rtol=1e-12)


class TestCofactorInverseDeterminant:
    def test_identity(self):
        np.testing.assert_array_equal(tn.cofactor(np.eye(3)), np.eye(3))
        np.testing.assert_array_equal(tn.inverse(np.eye(3)), np.eye(3))
        assert tn.determinant(np.eye(3)) == 1.0

    def test_diagonal(self):
        np.testing.assert_allclose(tn.cofactor(np.diag([2.0, 3.0, 5.0])), np.diag([15.0, 10.0, 6.0]))
        assert tn.determinant(np.diag([2.0, 4.0, 5.0])) == pytest.approx(40.0)

    def test_cayley_identity(self, rng):
        T = rng.normal(size=(100, 3, 3))
        cof = tn.cofactor(T)
        det = tn.determinant(T)
        lhs = np.swapaxes(cof, -1, -2) @ T
        np.testing.assert_allclose(lhs, det[:, None, None] * np.eye(3), atol=1e-12 * np.abs(T).max() ** 3)

    def test_inverse_residual(self, rng):
        T = np.eye(3) + 0.3 * rng.normal(size=(100, 3, 3))
        T = T[np.abs(np.linalg.det(T)) > 0.1]
        np.testing.assert_allclose(T @ tn.inverse(T), np.broadcast_to(np.eye(3), T.shape), atol=1e-12)

    def test_consistency(self, rng):
        T = np.eye(3) + 0.3 * rng.normal(size=(30, 3, 3))
        expect = tn.determinant(T)[:, None, None] * np.swapaxes(tn.inverse(T), -1, -2)
        np.testing.assert_allclose(tn.cofactor(T), expect, atol=1e-12)

    def test_cofactor_of_singular(self):
        T = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]])
        cof = tn.cofactor(T)
        np.testing.assert_allclose(cof.T @ T, np.zeros((3, 3)), atol=1e-14)

    def test_singular_inverse_raises(self):
        with pytest.raises(tn.SingularTensorError):
            tn.inverse(np.diag([1.0, 1.0, 1e-16]))


class TestDualInputs:
    def test_determinant_gradient_is_cofactor(self, rng):
        from gedamage import autodiff as ad

        T = rng.normal(size=(3, 3))
        g = ad.grad_wrt_tensor(tn.determinant, T)
        np.testing.assert_allclose(g, tn.cofactor(T), atol=1e-13)

    def test_accepts_dual(self, rng):
        from gedamage import autodiff as ad

        F = ad.seed(random_F(rng).reshape(9)).reshape(3, 3)
        inv = tn.invariants(tn.right_cauchy_green(F))
        assert isinstance(inv.J, Dual)


class TestStressMeasures:
    def test_cauchy_of_hydrostatic(self):
        F = 1.1 * np.eye(3)
        P = 2.0 * np.eye(3)
        sig = tn.cauchy_stress(P, F)
        np.testing.assert_allclose(sig, 2.0 * 1.1 / 1.1**3 * np.eye(3))
        assert tn.von_mises(sig) == pytest.approx(0.0, abs=1e-14)

    def test_von_mises_uniaxial(self):
        assert tn.von_mises(np.diag([3.0, 0.0, 0.0])) == pytest.approx(3.0)
