import numpy as np
import pytest

from gedamage import fitting as ft
from gedamage import networks as nn
from gedamage.materials import ClosedFormParams

torch = pytest.importorskip("torch")


class TestData:
    def test_cyclic_path(self):
        cyc, lam = ft.cyclic_path((1.1, 1.2), n=5)
        assert lam.size == 20 and lam.max() == pytest.approx(1.2)
        np.testing.assert_array_equal(np.unique(cyc), [1, 2])

    def test_csv_round_trip(self, tmp_path):
        d = ft.synthetic_data(n=5)
        p = tmp_path / "d.csv"
        ft.write_data(d, p)
        back = ft.read_data(p)
        np.testing.assert_array_equal(back.stress, d.stress)
        np.testing.assert_array_equal(back.cycle, d.cycle)

    @pytest.mark.parametrize("text,match", [
        ("x,y,z\n1,1,0\n", "header"),
        ("cycle,stretch,stress\n1,abc,0\n", ":2:"),
        ("cycle,stretch,stress\n", "at least one row"),
        ("cycle,stretch,stress\n1,-1,0\n", "positive"),
    ])
    def test_bad_files(self, tmp_path, text, match):
        p = tmp_path / "d.csv"
        p.write_text(text)
        with pytest.raises(ft.DataFileError, match=match):
            ft.read_data(p)

    def test_initial_shear_modulus(self):
        m = ClosedFormParams.from_young(42.0, 0.45, eta_d=5.0, kappa_d=0.5)
        d = ft.synthetic_data(m, n=200)
        assert ft.initial_shear_modulus(d) == pytest.approx(m.mu_e, rel=0.02)

    def test_relative_rmse(self):
        assert ft.relative_rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert ft.relative_rmse([2.0, 4.0], [1.0, 2.0]) == pytest.approx(1.0)


class TestFit:
    def test_single_point_dataset(self):
        d = ft.UniaxialData(np.array([1]), np.array([1.0]), np.array([0.0]))
        res = ft.fit(d, epochs=5)
        assert res.loss_history.max() == 0.0 and res.rel_rmse == 0.0
        assert nn.convexity_violations(res.params.psi_iso_net, n=1000) == 0
        assert nn.monotonicity_violations(res.params.yield_net, n=1000) == 0

    def test_torch_and_numpy_models_agree(self):
        d = ft.synthetic_data(n=10)
        res = ft.fit(d, epochs=30)
        np.testing.assert_allclose(ft.predict(res.params, d.stretch), res.torch_stress, rtol=1e-8, atol=1e-10)

    def test_undamaged_data_stays_undamaged(self):
        from gedamage.damage_update import point_driver

        m = ClosedFormParams.from_young(42.0, 0.45, eta_d=5.0, kappa_d=100.0)
        d = ft.synthetic_data(m, n=10)
        res = ft.fit(d, epochs=1500)
        assert res.rel_rmse < 0.03
        assert point_driver(d.stretch, res.params).d.max() < 0.02
