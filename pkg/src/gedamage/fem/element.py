"""HEX8 element: shape functions, quadrature and the coupled element kernel.

Each quadrature point carries the kinematic unknowns
``z = (F (9, row-major), phi, grad phi (3))`` plus the history variable
``kappa``.  The constitutive core returns the gradient and Hessian of the
internal energy with respect to ``(z, kappa)``; element residuals and
tangents follow from the linear maps ``B: element dofs -> z``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import damage_update as du
from .. import materials as mat
from .. import tensors as tn
from .mesh import HEX8_NODES

NZ = 13  # F (9), phi, grad phi (3)
NSEED = NZ + 1  # plus kappa
NDOF_E = 32  # 24 displacement dofs then 8 damage dofs
CHUNK = 4096

_g = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = HEX8_NODES * _g
GAUSS_WEIGHTS = np.ones(8)


class ElementFailure(ArithmeticError):
    """Element-level failure (inversion, NaN or local non-convergence)."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = np.asarray(elements, dtype=int)


def shape_functions(xi):
    """Trilinear values ``N`` (8,) and reference gradients ``dN/dxi`` (8, 3)."""
    xi = np.asarray(xi, dtype=float)
    t = 1.0 + HEX8_NODES * xi  # (8, 3)
    N = 0.125 * t[:, 0] * t[:, 1] * t[:, 2]
    dN = 0.125 * np.stack(
        [
            HEX8_NODES[:, 0] * t[:, 1] * t[:, 2],
            HEX8_NODES[:, 1] * t[:, 0] * t[:, 2],
            HEX8_NODES[:, 2] * t[:, 0] * t[:, 1],
        ],
        axis=1,
    )
    return N, dN


_SF = [shape_functions(p) for p in GAUSS_POINTS]
N_Q = np.array([s[0] for s in _SF])  # (Q, 8)
DN_Q = np.array([s[1] for s in _SF])  # (Q, 8, 3)


@dataclass
class ElementGeometry:
    dNdX: np.ndarray  # (E, Q, 8, 3)
    wdetJ: np.ndarray  # (E, Q)

    @property
    def n_elements(self):
        return self.dNdX.shape[0]


def element_geometry(mesh_or_coords):
    coords = mesh_or_coords
    if hasattr(mesh_or_coords, "elements"):
        coords = mesh_or_coords.nodes[mesh_or_coords.elements]
    coords = np.asarray(coords, dtype=float).reshape(-1, 8, 3)
    Jq = np.einsum("qai,eaj->eqji", DN_Q, coords)  # dX_j/dxi_i
    det = np.linalg.det(Jq)
    bad = np.flatnonzero((det <= 0.0).any(axis=1))
    if bad.size:
        raise tn.InvertedElementError(f"non-positive reference Jacobian in elements {bad.tolist()}")
    dNdX = np.einsum("qai,eqij->eqaj", DN_Q, np.linalg.inv(Jq))
    return ElementGeometry(dNdX, det * GAUSS_WEIGHTS)


def kinematics(geom, u_e, phi_e):
    """``F``, ``phi`` and ``grad phi`` at every quadrature point."""
    F = np.eye(3) + np.einsum("eai,eqaj->eqij", u_e, geom.dNdX)
    phi = np.einsum("qa,ea->eq", N_Q, phi_e)
    gphi = np.einsum("ea,eqaj->eqj", phi_e, geom.dNdX)
    return F, phi, gphi


def b_matrix(geom):
    """``dz/d(element dofs)`` with shape (E, Q, 13, 32)."""
    E = geom.n_elements
    B = np.zeros((E, 8, NZ, NDOF_E))
    for i in range(3):
        for j in range(3):
            B[:, :, 3 * i + j, i:24:3] = geom.dNdX[..., j]
    B[:, :, 9, 24:] = N_Q
    B[:, :, 10:13, 24:] = np.swapaxes(geom.dNdX, -1, -2)
    return B


# -- constitutive core ----------------------------------------------------------


def qp_core_numpy(F9, phi, gphi, kappa, Wv, Wg, Wh, f, f1, f2, c_d, beta_d, coef):
    """Energy gradient/Hessian and driving force at a batch of points (dual numbers).

    ``Wv, Wg, Wh`` are the elastic potential and its derivatives with respect
    to ``(I1, I2, J)``; ``f, f1, f2`` the degradation factor and its kappa
    derivatives.  Returns ``(grad, hess, q, dq)`` with 14 seed directions.
    """
    n = len(F9)
    z = ad.seed(np.concatenate([F9, phi[:, None], gphi, kappa[:, None]], axis=1), order=2)
    F = z[:, :9].reshape(n, 3, 3)
    C = ad.einsum2("nki,nkj->nij", F, F)
    cof = tn.cofactor(C)
    I1 = C[:, 0, 0] + C[:, 1, 1] + C[:, 2, 2]
    I2 = cof[:, 0, 0] + cof[:, 1, 1] + cof[:, 2, 2]
    I3 = C[:, 0, 0] * cof[:, 0, 0] + C[:, 0, 1] * cof[:, 0, 1] + C[:, 0, 2] * cof[:, 0, 2]
    W = ad.compose(Wv, Wg, Wh, [I1, I2, ad.sqrt(I3)])
    k = z[:, 13]
    fj = k._chain(f, f1, f2)
    psi = fj * W
    p = z[:, 9]
    if c_d:
        g = z[:, 10:13]
        gcg = ad.einsum2("ni,ni->n", g, ad.einsum2("nij,nj->ni", cof, g))
        psi = psi + (0.5 * c_d) * gcg / I3
    if beta_d:
        r = p - k
        psi = psi + (0.5 * beta_d) * r * r
    if coef:
        qd = W + coef * (p - k) / fj
        q, dq = qd.val, qd.tan
    else:
        q, dq = W.val, W.tan
    return psi.tan, psi.hess, q, dq


try:
    if os.environ.get("GEDAMAGE_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from ._qpkernel import qp_core as _qp_core_fast

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build
    _qp_core_fast = None
    BACKEND = "python"


def qp_core(*args, backend=None):
    use = backend or BACKEND
    if use == "compiled":
        if _qp_core_fast is None:
            raise RuntimeError("compiled kernel is not available")
        return _qp_core_fast(*(np.require(a, float, ["C", "W"]) if isinstance(a, np.ndarray) else a for a in args))
    return qp_core_numpy(*args)


def _coupling(m, local):
    if local:
        return 0.0, 0.0, 0.0
    return m.c_d, m.beta_d, m.gamma_d * m.beta_d / m.eta_d


def invariant_values(F):
    C = np.einsum("nki,nkj->nij", F, F)
    I1 = np.trace(C, axis1=1, axis2=2)
    I2 = 0.5 * (I1 * I1 - np.einsum("nij,nij->n", C, C))
    return I1, I2, np.linalg.det(F)


def qp_response(F, phi, gphi, kappa, m, local=False, backend=None):
    """Flat batch response: energy gradient (N, 14), Hessian (N, 14, 14),
    driving force ``q`` (N,), ``dq`` (N, 14) and undamaged energy (N,)."""
    n = len(F)
    F9 = F.reshape(n, 9)
    I1, I2, J = invariant_values(F.reshape(n, 3, 3))
    if np.any(J <= 0.0) or not np.all(np.isfinite(J)):
        raise tn.InvertedElementError("det F <= 0 at a quadrature point")
    Wv, Wg, Wh = mat.elastic_potential_derivatives(I1, I2, J, m)
    f, f1, f2 = mat.degradation_derivatives(kappa, m.eta_d, m.kappa_d)
    c_d, beta_d, coef = _coupling(m, local)
    out = [np.empty((n, NSEED)), np.empty((n, NSEED, NSEED)), np.empty(n), np.empty((n, NSEED))]
    for s in range(0, n, CHUNK):
        sl = slice(s, s + CHUNK)
        res = qp_core(
            F9[sl], phi[sl], gphi[sl], kappa[sl], Wv[sl], Wg[sl], Wh[sl], f[sl], f1[sl], f2[sl],
            c_d, beta_d, coef, backend=backend,
        )
        for o, r in zip(out, res):
            o[sl] = r
    return out[0], out[1], out[2], out[3], Wv


# -- element level ----------------------------------------------------------------


@dataclass
class KernelOutput:
    R: np.ndarray  # (E, 32)
    K: np.ndarray | None  # (E, 32, 32)
    kappa: np.ndarray  # (E, Q) kappa used in the constitutive calls
    P: np.ndarray  # (E, Q, 3, 3)
    F: np.ndarray  # (E, Q, 3, 3)
    phi: np.ndarray  # (E, Q)
    psi_e: np.ndarray  # (E, Q)


def evaluate(geom, u_e, phi_e, kappa_n, m, update_kappa=True, local=False,
             tangent=True, tol_local=du.TOL_LOCAL, max_iter_local=du.MAX_ITER, backend=None):
    """Residuals and tangents of a batch of elements.

    With ``update_kappa`` the return map is solved from ``kappa_n`` at the
    current fields and its implicit derivative enters the tangent;
    otherwise kappa is held at ``kappa_n``.
    """
    E = geom.n_elements
    F, phi, gphi = kinematics(geom, u_e, phi_e)
    n = E * 8
    Ff, pf, gf = F.reshape(n, 3, 3), phi.reshape(n), gphi.reshape(n, 3)
    kn = np.asarray(kappa_n, dtype=float).reshape(n)
    J = np.linalg.det(Ff)
    bad = J <= 0.0
    if bad.any() or not np.all(np.isfinite(J)):
        ids = np.unique(np.flatnonzero(bad | ~np.isfinite(J)) // 8)
        raise ElementFailure("inverted element (det F <= 0)", ids)

    kappa = kn
    yielded = np.zeros(n, dtype=bool)
    if update_kappa:
        I1, I2, _ = invariant_values(Ff)
        Wv = mat.elastic_potential_derivatives(I1, I2, J, m)[0]
        sol = du.solve_kappa(Wv, pf, kn, m, local=local, tol=tol_local, max_iter=max_iter_local)
        if np.any(sol.status != 0):
            ids = np.unique(np.flatnonzero(sol.status != 0) // 8)
            raise ElementFailure("local return map failed", ids)
        kappa, yielded = sol.kappa, sol.yielded & (sol.kappa > kn)

    g, H, q, dq, psi_e = qp_response(Ff, pf, gf, kappa, m, local=local, backend=backend)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        ids = np.unique(np.flatnonzero(~np.isfinite(g).all(axis=1)) // 8)
        raise ElementFailure("NaN in element response", ids)

    B = b_matrix(geom).reshape(n, NZ, NDOF_E)
    w = geom.wdetJ.reshape(n)
    Bt = np.swapaxes(B, 1, 2)
    R = (Bt @ (g[:, :NZ] * w[:, None])[:, :, None]).reshape(E, 8, NDOF_E).sum(axis=1)
    K = None
    if tangent:
        Hz = H[:, :NZ, :NZ].copy()
        if update_kappa and yielded.any():
            y = np.flatnonzero(yielded)
            dG = mat.yield_map_derivative(q[y], m)
            phi_z = dG[:, None] * dq[y, :NZ]
            phi_k = dG * dq[y, 13] - 1.0
            dk = -phi_z / phi_k[:, None]
            Hz[y] += H[y, :NZ, 13][:, :, None] * dk[:, None, :]
        Hz *= w[:, None, None]
        K = (Bt @ (Hz @ B)).reshape(E, 8, NDOF_E, NDOF_E).sum(axis=1)
    P = g[:, :9].reshape(E, 8, 3, 3)
    return KernelOutput(R, K, kappa.reshape(E, 8), P, F, phi, psi_e.reshape(E, 8))


def element_kernel(coords, u_e, phi_e, kappa_n, m, scheme="monolithic", backend=None):
    """Single-element residuals ``(R_u (24), R_phi (8), K (32, 32))``.

    ``scheme`` is ``monolithic`` (kappa resolved), ``staggered`` (kappa held),
    ``local`` (kappa held, no non-local coupling) or ``local-monolithic``.
    """
    geom = element_geometry(np.asarray(coords)[None])
    local = scheme in ("local", "local-monolithic")
    update = scheme in ("monolithic", "local-monolithic")
    out = evaluate(
        geom, np.asarray(u_e, float)[None], np.asarray(phi_e, float)[None],
        np.broadcast_to(np.asarray(kappa_n, float), (1, 8)), m,
        update_kappa=update, local=local, backend=backend,
    )
    return out.R[0, :24], out.R[0, 24:], out.K[0]


__all__ = [
    "shape_functions",
    "element_geometry",
    "element_kernel",
    "evaluate",
    "qp_response",
    "ElementFailure",
    "BACKEND",
]
