"""Physics-augmented networks: an input-convex energy and a monotone yield map.

Both networks hold their *effective* weights.  Sign constraints are met by
construction: constrained weights are generated (and trained) as squares of
unconstrained raw parameters, so they can never leave the admissible set.
The forward passes are written once against a tiny operator surface
(``@``, ``+``, ``softplus``) so they run unchanged on floats, numpy arrays,
:class:`~gedamage.autodiff.Dual` numbers and torch tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

WIDTH = 8
MODEL_VERSION = 1


class WeightFileError(ValueError):
    """Malformed or inadmissible weight file."""


@dataclass
class IcnnLayer:
    wz: np.ndarray | None  # passthrough weights, >= 0 (None on the first layer)
    wx: np.ndarray  # input skip weights, unconstrained
    b: np.ndarray


@dataclass
class IcnnWeights:
    """2 inputs -> 8 -> 8 -> 1, softplus activations."""

    layers: list[IcnnLayer]

    @classmethod
    def zeros(cls):
        return cls(
            [
                IcnnLayer(None, np.zeros((WIDTH, 2)), np.zeros(WIDTH)),
                IcnnLayer(np.zeros((WIDTH, WIDTH)), np.zeros((WIDTH, 2)), np.zeros(WIDTH)),
                IcnnLayer(np.zeros((1, WIDTH)), np.zeros((1, 2)), np.zeros(1)),
            ]
        )

    @classmethod
    def random(cls, rng, scale=0.5):
        def raw(*shape):
            return scale * rng.standard_normal(shape)

        return cls(
            [
                IcnnLayer(None, raw(WIDTH, 2), raw(WIDTH)),
                IcnnLayer(raw(WIDTH, WIDTH) ** 2, raw(WIDTH, 2), raw(WIDTH)),
                IcnnLayer(raw(1, WIDTH) ** 2, raw(1, 2), raw(1)),
            ]
        )

    def check(self):
        shapes = [(None, (WIDTH, 2)), ((WIDTH, WIDTH), (WIDTH, 2)), ((1, WIDTH), (1, 2))]
        _check_layers(self.layers, shapes, "psi_iso", nonneg_wx=False)


@dataclass
class MonotoneNetWeights:
    """1 input -> 8 -> 8 -> 1 with every weight >= 0, plus ``a0 * q + b0``."""

    layers: list[IcnnLayer]
    a0: float = 1.0
    b0: float = 0.0

    @classmethod
    def identity(cls):
        return cls(
            [
                IcnnLayer(None, np.zeros((WIDTH, 1)), np.zeros(WIDTH)),
                IcnnLayer(np.zeros((WIDTH, WIDTH)), np.zeros((WIDTH, 0)), np.zeros(WIDTH)),
                IcnnLayer(np.zeros((1, WIDTH)), np.zeros((1, 0)), np.zeros(1)),
            ],
            a0=1.0,
            b0=0.0,
        )

    @classmethod
    def random(cls, rng, scale=0.5):
        def raw(*shape):
            return scale * rng.standard_normal(shape)

        w = cls(
            [
                IcnnLayer(None, raw(WIDTH, 1) ** 2, raw(WIDTH)),
                IcnnLayer(raw(WIDTH, WIDTH) ** 2, np.zeros((WIDTH, 0)), raw(WIDTH)),
                IcnnLayer(raw(1, WIDTH) ** 2, np.zeros((1, 0)), np.zeros(1)),
            ],
            a0=float(raw(1)[0] ** 2),
            b0=0.0,
        )
        return w.shifted()

    def shifted(self):
        """Copy with ``b0`` chosen so that ``N(0) = 0``."""
        w = MonotoneNetWeights(self.layers, self.a0, 0.0)
        w.b0 = -float(monotone_eval(w, 0.0))
        return w

    def check(self):
        shapes = [(None, (WIDTH, 1)), ((WIDTH, WIDTH), (WIDTH, 0)), ((1, WIDTH), (1, 0))]
        _check_layers(self.layers, shapes, "yield", nonneg_wx=True)
        if not np.isfinite(self.a0) or self.a0 < 0.0:
            raise WeightFileError(f"yield.a0 = {self.a0} violates a0 >= 0")
        if not np.isfinite(self.b0):
            raise WeightFileError("yield.b0 is not finite")


def _check_layers(layers, shapes, name, nonneg_wx):
    if len(layers) != len(shapes):
        raise WeightFileError(f"{name}: expected {len(shapes)} layers, got {len(layers)}")
    for k, (layer, (wz_shape, wx_shape)) in enumerate(zip(layers, shapes)):
        where = f"{name}.layers[{k}]"
        if wz_shape is None:
            if layer.wz is not None:
                raise WeightFileError(f"{where}.wz must be absent on the first layer")
        else:
            if layer.wz is None or layer.wz.shape != wz_shape:
                raise WeightFileError(f"{where}.wz must have shape {wz_shape}")
            if np.any(layer.wz < 0.0):
                raise WeightFileError(f"{where}.wz has a negative passthrough weight")
        if layer.wx.shape != wx_shape:
            raise WeightFileError(f"{where}.wx must have shape {wx_shape}")
        if nonneg_wx and np.any(layer.wx < 0.0):
            raise WeightFileError(f"{where}.wx has a negative weight")
        if layer.b.shape != (wx_shape[0],):
            raise WeightFileError(f"{where}.b must have length {wx_shape[0]}")
        for arr in (layer.wz, layer.wx, layer.b):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise WeightFileError(f"{where} contains non-finite values")


# -- forward passes ---------------------------------------------------------


def icnn_forward(layers, x, softplus=ad.softplus):
    """Raw ICNN output for inputs ``x`` with a trailing axis of length 2."""
    first, hidden, out = layers
    z = softplus(x @ first.wx.T + first.b)
    z = softplus(z @ hidden.wz.T + x @ hidden.wx.T + hidden.b)
    return (z @ out.wz.T + x @ out.wx.T + out.b)[..., 0]


def monotone_forward(layers, a0, b0, q, softplus=ad.softplus):
    """Raw monotone-network output for inputs ``q`` with a trailing unit axis."""
    first, hidden, out = layers
    z = softplus(q @ first.wx.T + first.b)
    z = softplus(z @ hidden.wz.T + hidden.b)
    return (z @ out.wz.T + out.b)[..., 0] + a0 * q[..., 0] + b0


def icnn_eval(w: IcnnWeights, i1g, i2g):
    """Isochoric energy network ``psi_iso(I1G, I2G)`` (not yet normalised)."""
    x = ad.stack([i1g, i2g], axis=-1)
    return icnn_forward(w.layers, x)


def psi_iso_normalized(w: IcnnWeights, i1g, i2g):
    """``psi_iso(I1G, I2G) - psi_iso(3, 3)``; vanishes in the reference state."""
    ref = icnn_eval(w, np.float64(3.0), np.float64(3.0))
    return icnn_eval(w, i1g, i2g) - ref


def monotone_eval(w: MonotoneNetWeights, q):
    if isinstance(q, ad.Dual):
        x = q.reshape(q.shape + (1,))
    else:
        x = np.asarray(q, dtype=float)[..., None]
    return monotone_forward(w.layers, w.a0, w.b0, x)


def icnn_derivatives(w: IcnnWeights, i1g, i2g):
    """Value, gradient and Hessian of the normalised ICNN w.r.t. its two inputs."""
    x = ad.seed(np.stack(np.broadcast_arrays(i1g, i2g), axis=-1), order=2)
    out = psi_iso_normalized(w, x[..., 0], x[..., 1])
    return out.val, out.tan, out.hess


def monotone_derivatives(w: MonotoneNetWeights, q):
    """Value and first derivative of ``N(q)``."""
    x = ad.seed(np.asarray(q, dtype=float)[..., None])
    out = monotone_eval(w, x[..., 0])
    return out.val, out.tan[..., 0]


# -- property checks --------------------------------------------------------


def convexity_violations(w: IcnnWeights, n=10_000, low=3.0, high=20.0, slack=1e-12, seed=0):
    """Count midpoint-inequality failures of the ICNN on random input pairs."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(low, high, size=(n, 2))
    b = rng.uniform(low, high, size=(n, 2))
    m = 0.5 * (a + b)
    fa = icnn_eval(w, a[:, 0], a[:, 1])
    fb = icnn_eval(w, b[:, 0], b[:, 1])
    fm = icnn_eval(w, m[:, 0], m[:, 1])
    scale = np.maximum(1.0, np.abs(fa) + np.abs(fb))
    return int(np.sum(fm - 0.5 * (fa + fb) > slack * scale))


def monotonicity_violations(w: MonotoneNetWeights, n=10_000, low=0.0, high=100.0, slack=1e-12, seed=0):
    rng = np.random.default_rng(seed)
    q = np.sort(rng.uniform(low, high, size=(n, 2)), axis=1)
    n1 = monotone_eval(w, q[:, 0])
    n2 = monotone_eval(w, q[:, 1])
    scale = np.maximum(1.0, np.abs(n1))
    return int(np.sum((n2 - n1) * (q[:, 1] - q[:, 0]) < -slack * scale))


# -- serialisation ----------------------------------------------------------


def _layer_to_json(layer: IcnnLayer):
    d = {"wx": layer.wx.tolist(), "b": layer.b.tolist()}
    if layer.wz is not None:
        d["wz"] = layer.wz.tolist()
    return d


def _layer_from_json(d, where, n_in):
    if not isinstance(d, dict):
        raise WeightFileError(f"{where}: expected an object")
    try:
        wz = np.array(d["wz"], dtype=float) if "wz" in d else None
        wx = np.array(d["wx"], dtype=float)
        b = np.array(d["b"], dtype=float)
    except KeyError as exc:
        raise WeightFileError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise WeightFileError(f"{where}: {exc}") from None
    if wx.size == 0 and n_in == 0:
        wx = wx.reshape(b.size, 0)
    return IcnnLayer(wz, wx, b)


@dataclass
class DataDrivenParams:
    """Material parameters of the network-based model."""

    mu_e: float
    lambda_e: float
    psi_iso_net: IcnnWeights
    yield_net: MonotoneNetWeights
    eta_d: float
    kappa_d: float
    c_d: float = 0.0
    beta_d: float = 0.0
    gamma_d: float = 1.0
    variant: str = field(default="datadriven", init=False, repr=False)

    def __post_init__(self):
        _check_positive(self)
        self.psi_iso_net.check()
        self.yield_net.check()


def _check_positive(p):
    if not p.mu_e > 0.0:
        raise ValueError("mu_e must be > 0")
    for name in ("lambda_e", "kappa_d", "c_d", "beta_d", "gamma_d"):
        if not getattr(p, name) >= 0.0:
            raise ValueError(f"{name} must be >= 0")
    if not p.eta_d > 0.0:
        raise ValueError("eta_d must be > 0")


def params_to_json(p: DataDrivenParams) -> dict:
    return {
        "model_version": MODEL_VERSION,
        "psi_iso": {"layers": [_layer_to_json(layer) for layer in p.psi_iso_net.layers]},
        "yield": {
            "layers": [_layer_to_json(layer) for layer in p.yield_net.layers],
            "a0": p.yield_net.a0,
            "b0": p.yield_net.b0,
        },
        "mu_e": p.mu_e,
        "lambda_e": p.lambda_e,
        "eta_d": p.eta_d,
        "kappa_d": p.kappa_d,
    }


def params_from_json(doc, c_d=0.0, beta_d=0.0, gamma_d=1.0) -> DataDrivenParams:
    if not isinstance(doc, dict):
        raise WeightFileError("weight document must be an object")
    version = doc.get("model_version")
    if version != MODEL_VERSION:
        raise WeightFileError(f"model_version: expected {MODEL_VERSION}, got {version!r}")
    try:
        psi_layers = doc["psi_iso"]["layers"]
        y = doc["yield"]
        y_layers = y["layers"]
        scalars = {k: float(doc[k]) for k in ("mu_e", "lambda_e", "eta_d", "kappa_d")}
        a0, b0 = float(y["a0"]), float(y["b0"])
    except KeyError as exc:
        raise WeightFileError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise WeightFileError(str(exc)) from None
    if not isinstance(psi_layers, list) or len(psi_layers) != 3:
        raise WeightFileError("psi_iso.layers: expected 3 layers")
    if not isinstance(y_layers, list) or len(y_layers) != 3:
        raise WeightFileError("yield.layers: expected 3 layers")
    psi = IcnnWeights(
        [_layer_from_json(d, f"psi_iso.layers[{k}]", 2) for k, d in enumerate(psi_layers)]
    )
    yld = MonotoneNetWeights(
        [_layer_from_json(d, f"yield.layers[{k}]", 1 if k == 0 else 0) for k, d in enumerate(y_layers)],
        a0=a0,
        b0=b0,
    )
    psi.check()
    yld.check()
    try:
        return DataDrivenParams(
            psi_iso_net=psi, yield_net=yld, c_d=c_d, beta_d=beta_d, gamma_d=gamma_d, **scalars
        )
    except ValueError as exc:
        raise WeightFileError(str(exc)) from None


def save_weights(p: DataDrivenParams, path):
    Path(path).write_text(json.dumps(params_to_json(p), indent=1))


def load_weights(path, **nonlocal_params) -> DataDrivenParams:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return params_from_json(doc, **nonlocal_params)
