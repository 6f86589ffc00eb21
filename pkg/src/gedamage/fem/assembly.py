"""Global dof numbering, sparse assembly and the direct linear solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

NDOF_NODE = 4  # u_x, u_y, u_z, phi


class LinearSolveError(ArithmeticError):
    """Sparse factorization failed or produced an inaccurate solution."""


@dataclass
class DofMap:
    n_nodes: int
    constrained: np.ndarray  # bool mask over all dofs

    @classmethod
    def for_mesh(cls, mesh):
        return cls(mesh.n_nodes, np.zeros(mesh.n_nodes * NDOF_NODE, dtype=bool))

    @property
    def n_dofs(self):
        return self.n_nodes * NDOF_NODE

    def u_dofs(self, nodes, comp):
        return np.asarray(nodes, dtype=int) * NDOF_NODE + comp

    def phi_dofs(self, nodes=None):
        nodes = np.arange(self.n_nodes) if nodes is None else np.asarray(nodes, dtype=int)
        return nodes * NDOF_NODE + 3

    def element_dofs(self, elements):
        """(E, 32): 24 displacement dofs (node-major) then 8 damage dofs."""
        el = np.asarray(elements, dtype=int)
        u = (el[:, :, None] * NDOF_NODE + np.arange(3)).reshape(len(el), 24)
        return np.concatenate([u, el * NDOF_NODE + 3], axis=1)

    @property
    def free(self):
        return np.flatnonzero(~self.constrained)

    def split(self, x):
        """Nodal displacements (n, 3) and damage field (n,) from a dof vector."""
        x = x.reshape(self.n_nodes, NDOF_NODE)
        return x[:, :3], x[:, 3]


class Assembler:
    """Scatter-add of element arrays into a fixed CSR pattern.

    The pattern and the scatter map are built once; each assembly is a single
    ``np.bincount`` over the element entries, a deterministic ordered
    reduction.
    """

    def __init__(self, edofs, n_dofs):
        self.edofs = np.asarray(edofs, dtype=np.int64)
        self.n_dofs = n_dofs
        E, n = self.edofs.shape
        rows = np.broadcast_to(self.edofs[:, :, None], (E, n, n)).ravel()
        cols = np.broadcast_to(self.edofs[:, None, :], (E, n, n)).ravel()
        keys, self._scatter = np.unique(rows * n_dofs + cols, return_inverse=True)
        self._rows, self._cols = keys // n_dofs, keys % n_dofs
        self._indptr = np.searchsorted(self._rows, np.arange(n_dofs + 1))

    def vector(self, Re):
        return np.bincount(self.edofs.ravel(), weights=np.ravel(Re), minlength=self.n_dofs)

    def matrix(self, Ke):
        data = np.bincount(self._scatter, weights=np.ravel(Ke), minlength=len(self._rows))
        return sp.csr_matrix((data, self._cols.copy(), self._indptr.copy()), shape=(self.n_dofs, self.n_dofs))


def linear_solve(K, R, scale=False, check=1e-10, refine=3):
    """Solve ``K x = R`` by sparse LU; ``scale`` applies symmetric Jacobi scaling.

    Up to ``refine`` steps of iterative refinement are applied.  Raises
    ``LinearSolveError`` on singular matrices or when the relative residual
    exceeds ``check``.
    """
    K = sp.csc_matrix(K)
    R = np.asarray(R, dtype=float)
    if K.shape[0] != K.shape[1] or K.shape[0] != R.shape[0]:
        raise LinearSolveError("dimension mismatch in linear solve")
    if not np.all(np.isfinite(K.data)) or not np.all(np.isfinite(R)):
        raise LinearSolveError("non-finite entries in the linear system")
    s = None
    A = K
    if scale:
        dg = np.abs(K.diagonal())
        s = 1.0 / np.sqrt(np.where(dg > 0.0, dg, 1.0))
        A = sp.diags(s) @ K @ sp.diags(s)
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorization failed: {exc}") from exc

    def solve(b):
        y = lu.solve(b * s if scale else b)
        return y * s if scale else y

    x = solve(R)
    nr = max(np.linalg.norm(R), 1e-300)
    # a few steps of iterative refinement recover accuracy lost to the
    # mixed scaling of displacement and damage rows
    for _ in range(refine):
        if not np.all(np.isfinite(x)):
            break
        res = R - K @ x
        if np.linalg.norm(res) <= 1e-2 * (check or 1e-10) * nr:
            break
        x = x + solve(res)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("non-finite solution (singular matrix)")
    err = np.linalg.norm(K @ x - R) / nr
    if check is not None and err > check:
        raise LinearSolveError(f"linear solve residual check failed: relative residual {err:.2e} "
                               "(ill-conditioned or singular matrix)")
    return x
