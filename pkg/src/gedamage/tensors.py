"""Second-order tensor algebra and finite-strain kinematics.

Tensors are arrays of shape ``(..., 3, 3)`` (row-major, so a flat 9-vector
reshaped to ``(3, 3)``).  Every function also accepts a :class:`~gedamage.autodiff.Dual`
with that value shape, which is how stresses and tangents are obtained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Dual

SINGULAR_DET = 1e-14


class InvertedElementError(ArithmeticError):
    """Non-positive Jacobian determinant where a deformation is expected."""


class SingularTensorError(ArithmeticError):
    """Determinant below the singularity threshold."""


def _stack33(rows):
    return ad.stack([ad.stack(r, axis=-1) for r in rows], axis=-2)


def identity(shape=()):
    return np.broadcast_to(np.eye(3), tuple(shape) + (3, 3)).copy()


def transpose(T):
    if isinstance(T, Dual):
        return T.swapaxes(-1, -2)
    return np.swapaxes(T, -1, -2)


def matmul(A, B):
    return ad.einsum2("...ik,...kj->...ij", A, B)


def trace(T):
    return T[..., 0, 0] + T[..., 1, 1] + T[..., 2, 2]


def determinant(T):
    """Cofactor expansion along the first row."""
    return (
        T[..., 0, 0] * (T[..., 1, 1] * T[..., 2, 2] - T[..., 1, 2] * T[..., 2, 1])
        - T[..., 0, 1] * (T[..., 1, 0] * T[..., 2, 2] - T[..., 1, 2] * T[..., 2, 0])
        + T[..., 0, 2] * (T[..., 1, 0] * T[..., 2, 1] - T[..., 1, 1] * T[..., 2, 0])
    )


def cofactor(T):
    """``cof T`` from 2x2 minors; equals ``det(T) inv(T)^T`` when T is regular."""
    t = [[T[..., i, j] for j in range(3)] for i in range(3)]
    rows = []
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        row = []
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            row.append(t[i1][j1] * t[i2][j2] - t[i1][j2] * t[i2][j1])
        rows.append(row)
    return _stack33(rows)


def inverse(T):
    det = determinant(T)
    if np.any(np.abs(ad.value(det)) <= SINGULAR_DET):
        raise SingularTensorError("tensor is singular to working precision")
    shape = ad.value(det).shape + (1, 1)
    return transpose(cofactor(T)) / det.reshape(*shape)


def right_cauchy_green(F):
    """``C = F^T F``.  Raises :class:`InvertedElementError` when det F <= 0."""
    if np.any(ad.value(determinant(F)) <= 0.0):
        raise InvertedElementError("deformation gradient with det F <= 0")
    return ad.einsum2("...ki,...kj->...ij", F, F)


@dataclass(frozen=True)
class InvariantSet:
    I1: object
    I2: object
    I3: object
    J: object
    I1G: object
    I2G: object


def invariants(C) -> InvariantSet:
    """Principal and polyconvex isochoric-type invariants of ``C``."""
    I3 = determinant(C)
    if np.any(ad.value(I3) <= 0.0):
        raise InvertedElementError("det C <= 0")
    I1 = trace(C)
    I2 = trace(cofactor(C))
    J = ad.sqrt(I3)
    I1G = I1 * J ** (-2.0 / 3.0)
    I2G = I2**3 / (9.0 * J**4)
    return InvariantSet(I1=I1, I2=I2, I3=I3, J=J, I1G=I1G, I2G=I2G)


def von_mises(sigma):
    s = np.asarray(sigma)
    dev = s - np.trace(s, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) / 3.0
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev, dev))


def cauchy_stress(P, F):
    """``sigma = J^-1 P F^T``."""
    J = np.linalg.det(F)
    return np.einsum("...ik,...jk->...ij", P, F) / J[..., None, None]
