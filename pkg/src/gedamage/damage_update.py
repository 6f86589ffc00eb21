"""Local damage evolution: yield function, return mapping and a point driver.

The flow rule and the consistency condition are reduced to the single scalar
equation ``Phi_d(kappa_next) = 0``; the multiplier is recovered afterwards
from ``kappa_next - kappa_n = dlambda * dG/dq``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import materials as mat
from . import tensors as tn

TOL_LOCAL = 1e-10
MAX_ITER = 100
MAX_DOUBLINGS = 60
_EPS = np.finfo(float).eps


class LocalConvergenceError(ArithmeticError):
    """The return map did not reach ``|Phi_d| <= tol``."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class BracketError(LocalConvergenceError):
    """No sign change of ``Phi_d`` found while growing the search interval."""


@dataclass
class ReturnMapResult:
    kappa_next: float
    delta_lambda: float
    phi_d_residual: float
    iterations: int
    converged: bool
    degenerate: bool = False


def yield_residual(kappa, psi_e, phi, m, local=False):
    """``Phi_d = G(q) - kappa`` for a fixed strain energy ``psi_e`` (dual-aware in kappa)."""
    if local:
        q = psi_e
    else:
        f, _ = mat.degradation(kappa, m.eta_d, m.kappa_d)
        q = psi_e + m.gamma_d * m.beta_d * (phi - kappa) / (m.eta_d * f)
    return mat.yield_map(q, m) - kappa


def yield_function(F, phi, grad_phi, kappa, m, local=False):
    """Loading function evaluated at a full material state."""
    psi_e = mat.elastic_energy(tn.right_cauchy_green(mat._as_tensor(F)), m)
    return yield_residual(kappa, psi_e, phi, m, local)


def _residual_and_slope(kappa, psi_e, phi, m, local):
    k = ad.seed(np.asarray(kappa, dtype=float)[..., None])[..., 0]
    r = yield_residual(k, psi_e, phi, m, local)
    return r.val, r.tan[..., 0]


@dataclass
class KappaSolution:
    kappa: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    status: np.ndarray  # 0 ok, 1 max_iter, 2 no bracket, 3 NaN
    yielded: np.ndarray


def solve_kappa(psi_e, phi, kappa_n, m, local=False, tol=TOL_LOCAL, max_iter=MAX_ITER):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return _solve_kappa(psi_e, phi, kappa_n, m, local, tol, max_iter)


def _solve_kappa(psi_e, phi, kappa_n, m, local, tol, max_iter):
    """Vectorised return map over a batch of material points.

    Elastic points keep ``kappa_n``.  Yielding points are solved by Newton's
    method safeguarded with bisection on a bracket grown geometrically from
    ``kappa_n``.  A bracket or Newton step at machine precision counts as
    converged: when ``|dPhi/dkappa|`` is large the residual cannot drop below
    ``|dPhi/dkappa| * ulp(kappa)``.
    """
    psi_e, phi, kappa_n = np.broadcast_arrays(
        np.asarray(psi_e, float), np.asarray(phi, float), np.asarray(kappa_n, float)
    )
    shape = psi_e.shape
    psi_e, phi, kappa_n = psi_e.ravel(), phi.ravel(), kappa_n.ravel()
    n = psi_e.size
    kappa = kappa_n.copy()
    iters = np.zeros(n, dtype=int)
    status = np.zeros(n, dtype=int)

    r0 = yield_residual(kappa_n, psi_e, phi, m, local)
    residual = np.asarray(r0, dtype=float).copy()
    status[np.isnan(residual)] = 3
    yielded = residual > tol
    idx = np.flatnonzero(yielded)

    if idx.size:
        ps, ph, kn = psi_e[idx], phi[idx], kappa_n[idx]
        lo = kn.copy()
        r_lo = residual[idx]
        step = np.maximum(r_lo, 1e-8 * (1.0 + np.abs(kn)))
        hi = kn + step
        r_hi = yield_residual(hi, ps, ph, m, local)
        grow = r_hi > 0.0
        for _ in range(MAX_DOUBLINGS):
            if not grow.any():
                break
            lo = np.where(grow, hi, lo)
            step = np.where(grow, 2.0 * step, step)
            hi = np.where(grow, kn + step, hi)
            g = np.flatnonzero(grow)
            r_hi[g] = yield_residual(hi[g], ps[g], ph[g], m, local)
            grow = r_hi > 0.0
        nobracket = grow | np.isnan(r_hi)

        k = lo.copy()
        r, s = _residual_and_slope(k, ps, ph, m, local)
        done = nobracket | (np.abs(r) <= tol)
        it = np.zeros(idx.size, dtype=int)
        bad = np.zeros(idx.size, dtype=bool)
        for _ in range(max_iter):
            act = np.flatnonzero(~done)
            if act.size == 0:
                break
            it[act] += 1
            ka, ra, sa = k[act], r[act], s[act]
            lo_a = np.where(ra > 0.0, ka, lo[act])
            hi_a = np.where(ra > 0.0, hi[act], ka)
            newton = ka - ra / sa
            ok = (sa < 0.0) & (newton >= lo_a) & (newton <= hi_a) & np.isfinite(newton)
            k_new = np.where(ok, newton, 0.5 * (lo_a + hi_a))
            lo[act], hi[act] = lo_a, hi_a
            r_new, s_new = _residual_and_slope(k_new, ps[act], ph[act], m, local)
            k[act], r[act], s[act] = k_new, r_new, s_new
            nan = np.isnan(r_new)
            ulp = 8.0 * _EPS * np.maximum(np.abs(k_new), 1.0)
            stagnant = ((hi_a - lo_a) <= ulp) | (ok & (np.abs(k_new - ka) <= ulp))
            bad[act] |= nan
            done[act] = (np.abs(r_new) <= tol) | stagnant | nan

        # stagnated on the loading side: step up by whole ulps until Phi_d <= tol,
        # falling back to the bracket end where Phi_d <= 0
        for _ in range(8):
            over = np.flatnonzero(done & ~bad & ~nobracket & (r > tol))
            if over.size == 0:
                break
            ko = k[over]
            trial = np.nextafter(np.maximum(ko - r[over] / s[over], ko), np.inf)
            trial = np.where(np.isfinite(trial), np.minimum(trial, hi[over]), hi[over])
            k[over] = trial
            r[over], s[over] = _residual_and_slope(trial, ps[over], ph[over], m, local)
        over = np.flatnonzero(done & ~bad & ~nobracket & (r > tol))
        if over.size:
            k[over] = hi[over]
            r[over] = yield_residual(hi[over], ps[over], ph[over], m, local)
        kappa[idx] = k
        residual[idx] = r
        iters[idx] = it
        st = np.where(done, 0, 1)
        st = np.where(bad, 3, st)
        st = np.where(nobracket, 2, st)
        status[idx] = np.maximum(status[idx], st)

    return KappaSolution(
        kappa.reshape(shape),
        residual.reshape(shape),
        iters.reshape(shape),
        status.reshape(shape),
        yielded.reshape(shape),
    )


def return_map(F, phi, grad_phi, kappa_n, m, tol_local=TOL_LOCAL, max_iter=MAX_ITER, local=False):
    """Return map at a single material point."""
    psi_e = float(mat.elastic_energy(tn.right_cauchy_green(mat._as_tensor(F)), m))
    sol = solve_kappa(psi_e, phi, kappa_n, m, local=local, tol=tol_local, max_iter=max_iter)
    k = float(sol.kappa)
    status = int(sol.status)
    if status == 2:
        raise BracketError("no sign change of the yield function within 60 doublings", k)
    if status == 3:
        raise LocalConvergenceError("NaN in yield-function evaluation", k)
    if status == 1:
        raise LocalConvergenceError(f"return map not converged in {max_iter} iterations", k)
    if not sol.yielded:
        return ReturnMapResult(float(kappa_n), 0.0, float(sol.residual), 0, True)
    if local:
        q = psi_e
    else:
        f, _ = mat.degradation(k, m.eta_d, m.kappa_d)
        q = psi_e + m.gamma_d * m.beta_d * (phi - k) / (m.eta_d * f)
    dg = float(mat.yield_map_derivative(q, m))
    dk = k - float(kappa_n)
    degenerate = dg <= 0.0
    dlam = dk if degenerate else dk / dg
    return ReturnMapResult(k, dlam, float(sol.residual), int(sol.iterations), True, degenerate)


# -- homogeneous point driver ---------------------------------------------------


@dataclass
class PointDriverResult:
    stretch: np.ndarray
    stress: np.ndarray  # axial nominal (first Piola-Kirchhoff) stress
    kappa: np.ndarray
    d: np.ndarray
    lateral: np.ndarray


def _diag_energy(lam, a, m):
    z = 0.0 * lam
    C = tn._stack33([[lam * lam, z, z], [z, a * a, z], [z, z, a * a]])
    return mat.elastic_energy(C, m)


def lateral_stretch(stretch, m, tol=1e-14, max_iter=50):
    """Lateral stretch of a traction-free uniaxial-stress state (compressible)."""
    lam = np.asarray(stretch, dtype=float)
    a = np.ones_like(lam)
    for _ in range(max_iter):
        x = ad.seed(np.stack([lam, a], axis=-1), order=2)
        e = _diag_energy(x[..., 0], x[..., 1], m)
        g, h = e.tan[..., 1], e.hess[..., 1, 1]
        da = -g / h
        step = np.clip(da, -0.5 * a, 0.5 * a)
        a = a + step
        if np.all(np.abs(da) <= tol * np.maximum(a, 1.0)):
            break
    return a


def strain_energy_path(stretch, m, kinematics="incompressible"):
    """Undamaged energy and its stretch derivative along a uniaxial path."""
    lam = np.asarray(stretch, dtype=float)
    if kinematics == "incompressible":
        x = ad.seed(lam[..., None])[..., 0]
        e = _diag_energy(x, x ** (-0.5), m)
        return e.val, e.tan[..., 0], lam ** (-0.5)
    if kinematics == "uniaxial_stress":
        a = lateral_stretch(lam, m)
        x = ad.seed(np.stack([lam, a], axis=-1))
        e = _diag_energy(x[..., 0], x[..., 1], m)
        return e.val, e.tan[..., 0], a
    raise ValueError(f"unknown kinematics {kinematics!r}")


def point_driver(stretch, m, kinematics="incompressible", kappa0=0.0, tol=TOL_LOCAL):
    """Local damage response along a stretch history (no non-local terms)."""
    lam = np.asarray(stretch, dtype=float)
    psi, dpsi, a = strain_energy_path(lam, m, kinematics)
    kappa = np.empty_like(lam)
    k = float(kappa0)
    for i in range(lam.size):
        sol = solve_kappa(psi[i], 0.0, k, m, local=True, tol=tol)
        if int(sol.status) != 0:
            raise LocalConvergenceError(f"point driver failed at step {i}", float(sol.kappa))
        k = float(sol.kappa)
        kappa[i] = k
    f, d = mat.degradation(kappa, m.eta_d, m.kappa_d)
    return PointDriverResult(lam, f * dpsi, kappa, d, a)
