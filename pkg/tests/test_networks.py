import json

import numpy as np
import pytest

from gedamage import networks as nn


def _params(rng):
    return nn.DataDrivenParams(2.0, 10.0, nn.IcnnWeights.random(rng), nn.MonotoneNetWeights.random(rng), 0.01, 0.1)


class TestIcnn:
    def test_zero_network(self, rng):
        x = rng.uniform(3.0, 20.0, size=(50, 2))
        np.testing.assert_array_equal(nn.icnn_eval(nn.IcnnWeights.zeros(), x[:, 0], x[:, 1]),
                                      np.full(50, 2 * np.log(2.0) * 0.0))

    def test_normalized_at_reference(self, rng):
        for _ in range(10):
            w = nn.IcnnWeights.random(rng)
            assert nn.psi_iso_normalized(w, np.float64(3.0), np.float64(3.0)) == 0.0

    def test_midpoint_convexity(self, rng):
        for seed in range(5):
            w = nn.IcnnWeights.random(rng)
            assert nn.convexity_violations(w, n=1000, seed=seed) == 0
            x, y = rng.uniform(3, 20, (1000, 2)), rng.uniform(3, 20, (1000, 2))
            mid = nn.icnn_eval(w, *(0.5 * (x + y)).T)
            avg = 0.5 * (nn.icnn_eval(w, *x.T) + nn.icnn_eval(w, *y.T))
            assert np.all(mid <= avg + 1e-12)

    def test_hessian_psd(self, rng):
        w = nn.IcnnWeights.random(rng)
        x = rng.uniform(3, 20, (200, 2))
        _, _, H = nn.icnn_derivatives(w, x[:, 0], x[:, 1])
        assert np.linalg.eigvalsh(H).min() >= -1e-12


class TestMonotone:
    def test_identity(self, rng):
        q = rng.uniform(-5.0, 100.0, 100)
        np.testing.assert_array_equal(nn.monotone_eval(nn.MonotoneNetWeights.identity(), q), q)

    def test_shifted_vanishes_at_zero(self, rng):
        assert abs(nn.monotone_eval(nn.MonotoneNetWeights.random(rng), 0.0)) < 1e-14

    def test_monotone_pairs(self, rng):
        w = nn.MonotoneNetWeights.random(rng)
        q1, q2 = rng.uniform(0, 100, 1000), rng.uniform(0, 100, 1000)
        assert np.all((nn.monotone_eval(w, q2) - nn.monotone_eval(w, q1)) * (q2 - q1) >= -1e-12)
        assert nn.monotonicity_violations(w, n=1000) == 0

    def test_derivative_nonnegative_and_matches_fd(self, rng):
        w = nn.MonotoneNetWeights.random(rng)
        q = rng.uniform(0, 100, 1000)
        _, dq = nn.monotone_derivatives(w, q)
        assert dq.min() >= 0.0
        h = 1e-6
        fd = (nn.monotone_eval(w, q + h) - nn.monotone_eval(w, q - h)) / (2 * h)
        np.testing.assert_allclose(dq, fd, rtol=1e-6, atol=1e-8)


class TestWeightFiles:
    def test_round_trip_bitwise(self, rng, tmp_path):
        p = _params(rng)
        path = tmp_path / "w.json"
        nn.save_weights(p, path)
        q = nn.load_weights(path)
        for a, b in zip(p.psi_iso_net.layers + p.yield_net.layers, q.psi_iso_net.layers + q.yield_net.layers):
            for name in ("wz", "wx", "b"):
                x, y = getattr(a, name), getattr(b, name)
                if x is None:
                    assert y is None
                else:
                    np.testing.assert_array_equal(x, y)
        assert (p.yield_net.a0, p.yield_net.b0, p.mu_e, p.lambda_e, p.eta_d, p.kappa_d) == (
            q.yield_net.a0, q.yield_net.b0, q.mu_e, q.lambda_e, q.eta_d, q.kappa_d)

    def test_nonlocal_parameters_attached(self, rng, tmp_path):
        path = tmp_path / "w.json"
        nn.save_weights(_params(rng), path)
        q = nn.load_weights(path, c_d=0.5, beta_d=100.0)
        assert (q.c_d, q.beta_d) == (0.5, 100.0)

    def _doc(self, rng):
        return nn.params_to_json(_params(rng))

    def test_negative_passthrough_rejected(self, rng):
        doc = json.loads(json.dumps(self._doc(rng)))
        doc["psi_iso"]["layers"][1]["wz"][0][0] = -0.1
        with pytest.raises(nn.WeightFileError, match="negative"):
            nn.params_from_json(doc)

    def test_negative_yield_weight_rejected(self, rng):
        doc = json.loads(json.dumps(self._doc(rng)))
        doc["yield"]["layers"][0]["wx"][0][0] = -0.1
        with pytest.raises(nn.WeightFileError, match="negative"):
            nn.params_from_json(doc)

    def test_wrong_layer_count(self, rng):
        doc = json.loads(json.dumps(self._doc(rng)))
        doc["psi_iso"]["layers"].pop()
        with pytest.raises(nn.WeightFileError, match="layers"):
            nn.params_from_json(doc)

    def test_missing_field_and_version(self, rng):
        doc = json.loads(json.dumps(self._doc(rng)))
        del doc["mu_e"]
        with pytest.raises(nn.WeightFileError, match="mu_e"):
            nn.params_from_json(doc)
        doc = json.loads(json.dumps(self._doc(rng)))
        doc["model_version"] = 99
        with pytest.raises(nn.WeightFileError, match="model_version"):
            nn.params_from_json(doc)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(nn.WeightFileError, match="line 1"):
            nn.load_weights(path)

    def test_shipped_weights_valid(self):
        from gedamage.studies import default_weights_path

        p = nn.load_weights(default_weights_path())
        assert nn.convexity_violations(p.psi_iso_net, n=2000) == 0
        assert nn.monotonicity_violations(p.yield_net, n=2000) == 0
