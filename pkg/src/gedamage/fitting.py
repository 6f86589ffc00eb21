"""Training the energy and yield networks on uniaxial damage data.

Data are nominal stress vs stretch under incompressible uniaxial tension,
possibly with unloading cycles.  Along that path ``J = 1``, so only the
isochoric network and the yield network are identified; ``lambda_e`` is a
user choice that sets the compressibility of the fitted model.

The damage parameters ``eta_d`` and ``kappa_d`` are fixed.  Training runs at
a normalised scale ``eta_t = s * eta_d``, ``kappa_t = kappa_d / s`` and the
yield network output is multiplied by ``s`` afterwards, which leaves the
model response unchanged but lets the optimizer work with O(1) outputs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import damage_update as du
from . import networks as nn
from .materials import ClosedFormParams

log = logging.getLogger(__name__)


class DataFileError(ValueError):
    pass


@dataclass
class UniaxialData:
    cycle: np.ndarray
    stretch: np.ndarray
    stress: np.ndarray

    def __post_init__(self):
        if not (len(self.cycle) == len(self.stretch) == len(self.stress)) or len(self.stretch) < 1:
            raise DataFileError("data needs at least one row with cycle, stretch and stress")
        if np.any(self.stretch <= 0.0) or not np.all(np.isfinite(self.stress)):
            raise DataFileError("stretches must be positive and stresses finite")


def read_data(path):
    """CSV with header ``cycle,stretch,stress``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header != ["cycle", "stretch", "stress"]:
            raise DataFileError(f"{path}: expected header 'cycle,stretch,stress', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2])))
            except (ValueError, IndexError) as exc:
                raise DataFileError(f"{path}:{lineno}: bad record {row!r}") from exc
    a = np.array(rows, dtype=float).reshape(-1, 3)
    return UniaxialData(a[:, 0].astype(int), a[:, 1], a[:, 2])


def write_data(data: UniaxialData, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "stretch", "stress"])
        for c, s, p in zip(data.cycle, data.stretch, data.stress):
            w.writerow([int(c), f"{s:.17g}", f"{p:.17g}"])


def cyclic_path(amplitudes=(1.1, 1.2, 1.3, 1.4), n=25):
    """Load to each amplitude and unload to 1; returns ``(cycle, stretch)``."""
    cyc, lam = [], []
    for k, a in enumerate(amplitudes, start=1):
        up = np.linspace(1.0, a, n + 1)[1:]
        down = np.linspace(a, 1.0, n + 1)[1:]
        seg = np.concatenate([up, down])
        cyc.append(np.full(seg.size, k))
        lam.append(seg)
    return np.concatenate(cyc), np.concatenate(lam)


def synthetic_data(m: ClosedFormParams | None = None, amplitudes=(1.1, 1.2, 1.3, 1.4), n=25):
    """Closed-form generator: incompressible uniaxial tension with local damage."""
    if m is None:
        m = ClosedFormParams.from_young(42.0, 0.45, eta_d=5.0, kappa_d=0.5)
    cyc, lam = cyclic_path(amplitudes, n)
    res = du.point_driver(lam, m, kinematics="incompressible")
    return UniaxialData(cyc, lam, res.stress)


# -- model along the incompressible path (backend-agnostic pieces) --------------------------


def _path_invariants(lam):
    i1 = lam * lam + 2.0 / lam
    i2 = 2.0 * lam + 1.0 / (lam * lam)
    return i1, i2**3 / 9.0


@dataclass
class FitResult:
    params: nn.DataDrivenParams
    rel_rmse: float
    loss_history: np.ndarray
    torch_stress: np.ndarray


def predict(params: nn.DataDrivenParams, stretch):
    """Nominal stress of a fitted model along an incompressible uniaxial path."""
    return du.point_driver(np.asarray(stretch, float), params, kinematics="incompressible").stress


def relative_rmse(pred, data):
    """Root-mean-square error normalised by the root-mean-square data stress."""
    pred, data = np.asarray(pred), np.asarray(data)
    return float(np.sqrt(np.mean((pred - data) ** 2)) / np.sqrt(np.mean(data**2)))


def initial_shear_modulus(data: UniaxialData):
    """``mu_e`` from the initial slope ``3 mu`` of the first loading branch.

    Falls back to 1 when the data carry no stretch away from 1.
    """
    first = data.cycle == data.cycle[0]
    lam, p = data.stretch[first], data.stress[first]
    dl = np.abs(lam - 1.0)
    ok = dl > 1e-12
    if not ok.any():
        return 1.0
    k = np.flatnonzero(ok)[np.argmin(dl[ok])]
    slope = p[k] / (lam[k] - 1.0)
    return float(abs(slope) / 3.0) if abs(slope) > 0.0 else 1.0


def fit(data: UniaxialData, eta_d=0.001, kappa_d=0.1, lambda_e=None, epochs=5000, lr=1e-2,
        seed=0, scale=None, threads=None):
    """Fit both networks to ``data`` with Adam (full batch)."""
    import torch

    if threads:
        torch.set_num_threads(int(threads))
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    dt = torch.float64
    s = 1.0 / eta_d if scale is None else float(scale)
    eta_t, kd_t = eta_d * s, kappa_d / s

    lam_np = data.stretch
    mu_e = initial_shear_modulus(data)
    if lambda_e is None:
        lambda_e = 10.0 * mu_e

    ic = nn.IcnnWeights.random(rng, scale=0.3)
    mo = nn.MonotoneNetWeights.random(rng, scale=0.3)

    def param(a):
        return torch.tensor(np.asarray(a, float), dtype=dt, requires_grad=True)

    # raw parameters; constrained ones are squared
    ic_raw = [
        dict(wx=param(ic.layers[0].wx), b=param(ic.layers[0].b)),
        dict(wz=param(np.sqrt(ic.layers[1].wz)), wx=param(ic.layers[1].wx), b=param(ic.layers[1].b)),
        dict(wz=param(np.sqrt(ic.layers[2].wz)), wx=param(np.full((1, 2), 0.1)), b=param(ic.layers[2].b)),
    ]
    mo_raw = [
        dict(wx=param(np.sqrt(mo.layers[0].wx)), b=param(mo.layers[0].b)),
        dict(wz=param(np.sqrt(mo.layers[1].wz)), b=param(mo.layers[1].b)),
        dict(wz=param(np.sqrt(mo.layers[2].wz)), b=param(mo.layers[2].b)),
    ]
    a0_raw = param(1.0)
    all_params = [t for d in ic_raw + mo_raw for t in d.values()] + [a0_raw]

    def ic_layers():
        return [
            SimpleNamespace(wx=ic_raw[0]["wx"], b=ic_raw[0]["b"]),
            SimpleNamespace(wz=ic_raw[1]["wz"] ** 2, wx=ic_raw[1]["wx"], b=ic_raw[1]["b"]),
            SimpleNamespace(wz=ic_raw[2]["wz"] ** 2, wx=ic_raw[2]["wx"], b=ic_raw[2]["b"]),
        ]

    def mo_layers():
        empty = torch.zeros((nn.WIDTH, 0), dtype=dt)
        return [
            SimpleNamespace(wx=mo_raw[0]["wx"] ** 2, b=mo_raw[0]["b"]),
            SimpleNamespace(wz=mo_raw[1]["wz"] ** 2, wx=empty, b=mo_raw[1]["b"]),
            SimpleNamespace(wz=mo_raw[2]["wz"] ** 2, wx=empty[:1], b=mo_raw[2]["b"]),
        ]

    sp = torch.nn.functional.softplus
    lam = torch.tensor(lam_np, dtype=dt, requires_grad=True)
    target = torch.tensor(data.stress, dtype=dt)
    ref = torch.sqrt(torch.mean(target**2))
    if ref.item() == 0.0:
        ref = torch.ones((), dtype=dt)
    three = torch.tensor([[3.0, 3.0]], dtype=dt)

    def forward():
        L = ic_layers()
        i1, i2g = _path_invariants(lam)
        x = torch.stack([i1, i2g], dim=-1)
        psi = mu_e * (nn.icnn_forward(L, x, sp) - nn.icnn_forward(L, three, sp)[0])
        (dpsi,) = torch.autograd.grad(psi.sum(), lam, create_graph=True)
        M = mo_layers()
        a0 = a0_raw**2
        G = nn.monotone_forward(M, a0, 0.0, psi[:, None], sp) - nn.monotone_forward(
            M, a0, 0.0, torch.zeros((1, 1), dtype=dt), sp
        )[0]
        kappa = torch.cummax(G, dim=0).values
        f = torch.exp(-eta_t * torch.clamp(kappa - kd_t, min=0.0))
        return f * dpsi

    opt = torch.optim.Adam(all_params, lr=lr)
    hist = np.empty(epochs)
    for ep in range(epochs):
        opt.zero_grad()
        loss = torch.mean((forward() - target) ** 2) / ref**2
        loss.backward()
        opt.step()
        hist[ep] = loss.item()
        if ep % 1000 == 0:
            log.info("epoch %d loss %.3e", ep, hist[ep])
    torch_stress = forward().detach().numpy()

    def npy(t):
        return t.detach().numpy().astype(float).copy()

    icw = nn.IcnnWeights(
        [
            nn.IcnnLayer(None, npy(ic_raw[0]["wx"]), npy(ic_raw[0]["b"])),
            nn.IcnnLayer(npy(ic_raw[1]["wz"]) ** 2, npy(ic_raw[1]["wx"]), npy(ic_raw[1]["b"])),
            nn.IcnnLayer(npy(ic_raw[2]["wz"]) ** 2, npy(ic_raw[2]["wx"]), npy(ic_raw[2]["b"])),
        ]
    )
    # fold the scale into the last layer, the linear passthrough and the offset
    mow = nn.MonotoneNetWeights(
        [
            nn.IcnnLayer(None, npy(mo_raw[0]["wx"]) ** 2, npy(mo_raw[0]["b"])),
            nn.IcnnLayer(npy(mo_raw[1]["wz"]) ** 2, np.zeros((nn.WIDTH, 0)), npy(mo_raw[1]["b"])),
            nn.IcnnLayer(s * npy(mo_raw[2]["wz"]) ** 2, np.zeros((1, 0)), s * npy(mo_raw[2]["b"])),
        ],
        a0=s * float(npy(a0_raw)) ** 2,
        b0=0.0,
    ).shifted()
    params = nn.DataDrivenParams(
        mu_e=mu_e, lambda_e=float(lambda_e), psi_iso_net=icw, yield_net=mow, eta_d=eta_d, kappa_d=kappa_d
    )
    pred = predict(params, lam_np)
    err = relative_rmse(pred, data.stress) if np.any(data.stress) else float(np.sqrt(np.mean(pred**2)))
    return FitResult(params, err, hist, torch_stress)
