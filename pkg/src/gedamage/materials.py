"""Constitutive laws for gradient-enhanced damage.

The internal free energy is

    Psi = f_d(kappa) psi_e(C) + c_d/2 grad(phi) . C^-1 . grad(phi) + beta_d/2 (phi - kappa)^2

with ``psi_e`` either a compressible neo-Hookean law or a network energy.
Stresses, non-local fluxes and driving forces are all derived from it by
forward-mode differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import autodiff as ad
from . import networks as nn
from . import tensors as tn
from .networks import DataDrivenParams, _check_positive

FAILURE_F_D = 5e-3  # f_d below this (d > 0.995) marks a failed point


class DamageFailure(ArithmeticError):
    """Degradation factor underflow: the material point has failed."""


@dataclass
class ClosedFormParams:
    mu_e: float
    lambda_e: float
    eta_d: float
    kappa_d: float
    c_d: float = 0.0
    beta_d: float = 0.0
    gamma_d: float = 1.0
    variant: str = field(default="closedform", init=False, repr=False)

    def __post_init__(self):
        _check_positive(self)

    @classmethod
    def from_young(cls, E, nu, **kw):
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return cls(mu_e=mu, lambda_e=lam, **kw)


MaterialModel = Union[ClosedFormParams, DataDrivenParams]

__all__ = [
    "ClosedFormParams",
    "DataDrivenParams",
    "MaterialModel",
    "DamageFailure",
    "neo_hookean_energy",
    "datadriven_energy",
    "elastic_energy",
    "degradation",
    "internal_energy",
    "pk1_stress",
    "nonlocal_conjugates",
    "driving_force",
    "yield_map",
    "elastic_potential_derivatives",
]


# -- elastic energies -------------------------------------------------------


def _nh_potential(I1, J, mu, lam):
    lnJ = ad.log(J)
    return 0.5 * mu * (I1 - 3.0) - mu * lnJ + 0.5 * lam * lnJ * lnJ


def _dd_potential(I1, I2, J, p: DataDrivenParams):
    i1g = I1 * J ** (-2.0 / 3.0)
    i2g = I2**3 / (9.0 * J**4)
    vol = J + 1.0 / J - 2.0
    return p.mu_e * nn.psi_iso_normalized(p.psi_iso_net, i1g, i2g) + p.lambda_e * vol * vol


def neo_hookean_energy(C, mu_e, lambda_e):
    inv = tn.invariants(C)
    return _nh_potential(inv.I1, inv.J, mu_e, lambda_e)


def datadriven_energy(C, p: DataDrivenParams):
    inv = tn.invariants(C)
    return _dd_potential(inv.I1, inv.I2, inv.J, p)


def elastic_energy(C, m: MaterialModel):
    if m.variant == "closedform":
        return neo_hookean_energy(C, m.mu_e, m.lambda_e)
    return datadriven_energy(C, m)


def elastic_potential_derivatives(I1, I2, J, m: MaterialModel):
    """Value, gradient and Hessian of ``psi_e`` as a function of ``(I1, I2, J)``.

    Used by the element kernels, which lift these onto the invariant
    derivatives with respect to the kinematic unknowns.
    """
    x = ad.seed(np.stack(np.broadcast_arrays(I1, I2, J), axis=-1), order=2)
    if m.variant == "closedform":
        out = _nh_potential(x[..., 0], x[..., 2], m.mu_e, m.lambda_e) + 0.0 * x[..., 1]
    else:
        out = _dd_potential(x[..., 0], x[..., 1], x[..., 2], m)
    return out.val, out.tan, out.hess


# -- damage ----------------------------------------------------------------


def degradation(kappa, eta_d, kappa_d):
    """``f_d = exp(-eta_d <kappa - kappa_d>_+)`` and ``d = 1 - f_d``."""
    f = ad.exp(-eta_d * ad.macaulay(kappa - kappa_d))
    return f, 1.0 - f


def degradation_derivatives(kappa, eta_d, kappa_d):
    """``f_d``, ``f_d'`` and ``f_d''`` (one-sided zero at and below threshold)."""
    kappa = np.asarray(kappa, dtype=float)
    over = kappa > kappa_d
    f = np.exp(-eta_d * np.where(over, kappa - kappa_d, 0.0))
    f1 = np.where(over, -eta_d * f, 0.0)
    f2 = np.where(over, eta_d * eta_d * f, 0.0)
    return f, f1, f2


def yield_map(q, m: MaterialModel):
    """Yield-surface map ``G(q)``: identity, or the monotone network shifted to ``G(0)=0``."""
    if m.variant == "closedform":
        return q
    return nn.monotone_eval(m.yield_net, q) - nn.monotone_eval(m.yield_net, 0.0)


def yield_map_derivative(q, m: MaterialModel):
    if m.variant == "closedform":
        return np.ones_like(np.asarray(q, dtype=float))
    return nn.monotone_derivatives(m.yield_net, q)[1]


# -- internal energy and its conjugates --------------------------------------


def _as_tensor(F):
    if isinstance(F, ad.Dual):
        return F
    F = np.asarray(F, dtype=float)
    return F.reshape(F.shape[:-1] + (3, 3)) if F.shape[-1] == 9 else F


def gradient_energy(F, grad_phi, c_d):
    """``c_d/2 grad(phi) . C^-1 . grad(phi)``."""
    Cinv = tn.inverse(tn.right_cauchy_green(F))
    return 0.5 * c_d * ad.einsum2("...i,...i->...", grad_phi, ad.einsum2("...ij,...j->...i", Cinv, grad_phi))


def penalty_energy(phi, kappa, beta_d):
    r = phi - kappa
    return 0.5 * beta_d * r * r


def internal_energy(F, phi, grad_phi, kappa, m: MaterialModel):
    F = _as_tensor(F)
    f, _ = degradation(kappa, m.eta_d, m.kappa_d)
    psi_e = elastic_energy(tn.right_cauchy_green(F), m)
    return f * psi_e + gradient_energy(F, grad_phi, m.c_d) + penalty_energy(phi, kappa, m.beta_d)


def pk1_stress(F, phi, grad_phi, kappa, m: MaterialModel):
    """``P = dPsi/dF`` including the F-dependence of the gradient term."""
    F = _as_tensor(F)
    return ad.grad_wrt_tensor(lambda T: internal_energy(T, phi, grad_phi, kappa, m), F)


def nonlocal_conjugates(F, phi, grad_phi, kappa, m: MaterialModel):
    """Flux ``Y = dPsi/d grad(phi)`` and source ``Y = -dPsi/d phi``."""
    F = _as_tensor(F)
    grad_phi = np.asarray(grad_phi, dtype=float)
    x = np.concatenate([np.broadcast_to(phi, grad_phi.shape[:-1])[..., None], grad_phi], axis=-1)
    g = ad.grad_wrt_scalars(
        lambda p, g0, g1, g2: internal_energy(F, p, ad.stack([g0, g1, g2], axis=-1), kappa, m), x
    )
    return g[..., 1:], -g[..., 0]


def driving_force(F, phi, grad_phi, kappa, m: MaterialModel, local=False):
    """Thermodynamic force conjugate to damage, ``q = q_loc + q_nloc``.

    ``q_loc`` is the undamaged strain energy.  The non-local part is
    ``gamma_d beta_d (phi - kappa) / (eta_d f_d)``; at and below the damage
    threshold it uses ``f_d = 1``, its right limit.
    """
    F = _as_tensor(F)
    q = elastic_energy(tn.right_cauchy_green(F), m)
    if local:
        return q
    f, _ = degradation(kappa, m.eta_d, m.kappa_d)
    if np.any(ad.value(f) <= 0.0):
        raise DamageFailure("degradation factor underflow")
    return q + m.gamma_d * m.beta_d * (phi - kappa) / (m.eta_d * f)
