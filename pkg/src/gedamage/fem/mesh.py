"""HEX8 meshes and built-in generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Reference coordinates of the eight HEX8 (C3D8) nodes.
HEX8_NODES = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    nodes: np.ndarray  # (n, 3) mm
    elements: np.ndarray  # (e, 8) 0-based node indices
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    element_sets: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def validate(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise MeshError("nodes must have shape (n, 3)")
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise MeshError("elements must have shape (e, 8)")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= self.n_nodes):
            raise MeshError("element connectivity references a missing node")
        for name, ids in self.node_sets.items():
            if ids.size and (ids.min() < 0 or ids.max() >= self.n_nodes):
                raise MeshError(f"node set {name!r} references a missing node")
        from .element import element_geometry

        element_geometry(self)  # raises on inverted elements
        return self

    def node_set(self, name):
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}") from None


def _structured(xs, ys, zs):
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return nodes, _connectivity(nx, ny, nz)


def _connectivity(nx, ny, nz):
    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    return np.stack(
        [
            nid(i, j, k),
            nid(i + 1, j, k),
            nid(i + 1, j + 1, k),
            nid(i, j + 1, k),
            nid(i, j, k + 1),
            nid(i + 1, j, k + 1),
            nid(i + 1, j + 1, k + 1),
            nid(i, j + 1, k + 1),
        ],
        axis=1,
    )


def _face_sets(nodes, tol=1e-9):
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    sets = {}
    for axis, name in enumerate("xyz"):
        sets[f"{name}min"] = np.flatnonzero(np.abs(nodes[:, axis] - lo[axis]) < tol)
        sets[f"{name}max"] = np.flatnonzero(np.abs(nodes[:, axis] - hi[axis]) < tol)
    return sets


def box_mesh(lx, ly, lz, nx, ny, nz, distort=0.0):
    """Box ``[0,lx] x [0,ly] x [0,lz]`` with ``nx*ny*nz`` elements.

    ``distort`` > 0 applies a smooth in-plane perturbation to interior nodes,
    giving a non-uniform mesh with the same boundary.
    """
    nodes, elements = _structured(
        np.linspace(0.0, lx, nx + 1), np.linspace(0.0, ly, ny + 1), np.linspace(0.0, lz, nz + 1)
    )
    if distort:
        x, y = nodes[:, 0] / lx, nodes[:, 1] / ly
        bump = np.sin(np.pi * x) * np.sin(np.pi * y)
        nodes[:, 0] += distort * lx / nx * bump * np.sin(2 * np.pi * y)
        nodes[:, 1] += distort * ly / ny * bump * np.sin(2 * np.pi * x)
    mesh = Mesh(nodes, elements, _face_sets(nodes), {"all": np.arange(len(elements))})
    mesh.node_sets["origin"] = np.flatnonzero(np.all(np.abs(nodes) < 1e-9, axis=1))
    return mesh


def notched_plate_mesh(width, height, thickness, notch_radius, nx, ny, nz=1, bias=1.0):
    """Plate with two semicircular edge notches at mid-length (top and bottom).

    The structured grid follows the notch contour column by column; ``bias``
    > 1 concentrates columns toward the notch.
    """
    if not 0.0 < notch_radius < 0.5 * width:
        raise MeshError("notch radius must be in (0, width/2)")
    s = np.linspace(-1.0, 1.0, nx + 1)
    xs = 0.5 * width * (1.0 + np.sign(s) * np.abs(s) ** bias)
    xc = 0.5 * width
    inside = np.clip(notch_radius**2 - (xs - xc) ** 2, 0.0, None)
    depth = np.sqrt(inside)
    nodes = []
    zs = np.linspace(0.0, thickness, nz + 1)
    t = np.linspace(0.0, 1.0, ny + 1)
    for i, x in enumerate(xs):
        y0, y1 = depth[i], height - depth[i]
        for tj in t:
            for z in zs:
                nodes.append((x, y0 + (y1 - y0) * tj, z))
    nodes = np.array(nodes)
    elements = _connectivity(nx, ny, nz)
    sets = _face_sets(nodes)
    mesh = Mesh(nodes, elements, sets, {"all": np.arange(len(elements))})
    mesh.node_sets["origin"] = np.flatnonzero(np.all(np.abs(nodes) < 1e-9, axis=1))
    return mesh
