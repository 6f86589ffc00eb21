"""Problem builders and the numerical studies driven by the command line."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .fem.assembly import DofMap
from .fem.mesh import Mesh, box_mesh
from .fem.solver import Problem, SolverConfig, arc_length, element_damage, load_stepping
from .materials import ClosedFormParams

log = logging.getLogger(__name__)

SINGLE_ELEMENT = dict(E=42.0, nu=0.45)
PLATE = dict(E=210.0, nu=0.3, eta_d=0.002, kappa_d=0.1, c_d=1.0, beta_d=1000.0)


# -- problem builders ----------------------------------------------------------------


def single_element_problem(m, displacement=0.5, force=None, size=1.0):
    """Unit cube under uniaxial tension with symmetry planes at x, y, z = 0.

    Either the right face is given ``displacement`` (mm) or loaded by the
    total axial ``force`` (N), each scaled by the load factor.
    """
    mesh = box_mesh(size, size, size, 1, 1, 1)
    dm = DofMap.for_mesh(mesh)
    ns = mesh.node_sets
    fixed = np.concatenate([dm.u_dofs(ns["xmin"], 0), dm.u_dofs(ns["ymin"], 1), dm.u_dofs(ns["zmin"], 2)])
    right = dm.u_dofs(ns["xmax"], 0)
    if force is None:
        return Problem(mesh, m, fixed, right, np.full(len(right), float(displacement)), reaction_dofs=right)
    f = np.zeros(dm.n_dofs)
    f[right] = float(force) / len(right)
    return Problem(mesh, m, fixed, force=f, reaction_dofs=right, control_dof=int(right[0]))


def tension_problem(mesh: Mesh, m, displacement, grip=True):
    """Plate pulled in x: left face ``u_x = 0``, right face ``u_x`` prescribed.

    Rigid-body modes are removed at the corners ``(0,0,0)`` (``u_y = u_z = 0``)
    and ``(0, y_max, 0)`` (``u_z = 0``).  With ``grip`` the right face is also
    held at ``u_y = 0``, which makes the deformation non-uniform near it.
    """
    dm = DofMap.for_mesh(mesh)
    X = mesh.nodes
    left, right = mesh.node_set("xmin"), mesh.node_set("xmax")
    lo = X.min(axis=0)
    origin = np.flatnonzero(np.linalg.norm(X - lo, axis=1) < 1e-9)
    top = np.flatnonzero(
        (np.abs(X[:, 0] - lo[0]) < 1e-9) & (np.abs(X[:, 1] - X[:, 1].max()) < 1e-9) & (np.abs(X[:, 2] - lo[2]) < 1e-9)
    )
    fixed = [dm.u_dofs(left, 0), dm.u_dofs(origin, 1), dm.u_dofs(origin, 2), dm.u_dofs(top, 2)]
    if grip:
        fixed.append(dm.u_dofs(right, 1))
    pres = dm.u_dofs(right, 0)
    return Problem(
        mesh, m, np.unique(np.concatenate(fixed)), pres, np.full(len(pres), float(displacement)),
        reaction_dofs=pres,
    )


# -- single element ----------------------------------------------------------------------


@dataclass
class SweepCase:
    eta_d: float
    kappa_d: float
    stretch: np.ndarray
    sigma11: np.ndarray
    kappa: np.ndarray
    d: np.ndarray
    trajectory: object


def single_element_sweep(etas=(1.0, 10.0, 100.0), kappas=(0.0, 1.0, 2.0), eta_fixed=10.0, kappa_fixed=1.0,
                         displacement=0.5, steps=200, scheme="local-monolithic", newton_tol=1e-12, E=None, nu=None):
    """Vary ``eta_d`` at fixed ``kappa_d`` and ``kappa_d`` at fixed ``eta_d``.

    Returns a list of :class:`SweepCase`; the stretch is ``1 + u/L``.
    """
    E = SINGLE_ELEMENT["E"] if E is None else E
    nu = SINGLE_ELEMENT["nu"] if nu is None else nu
    pairs = [(e, kappa_fixed) for e in etas] + [(eta_fixed, k) for k in kappas]
    seen, cases = set(), []
    # the absolute floor is dropped: near full damage the residual scales with f_d
    cfg = SolverConfig(scheme=scheme, steps=steps, newton_tol=newton_tol, newton_abs_tol=1e-30, d_max=1.0)
    for eta, kd in pairs:
        if (eta, kd) in seen:
            continue
        seen.add((eta, kd))
        m = ClosedFormParams.from_young(E, nu, eta_d=eta, kappa_d=kd)
        traj = load_stepping(single_element_problem(m, displacement), cfg)
        cases.append(
            SweepCase(
                eta, kd, 1.0 + traj.column("control"), traj.column("max_sigma11"),
                traj.column("max_kappa"), traj.column("max_d"), traj,
            )
        )
    return cases


def softening_arc_length(eta_d=20.0, kappa_d=0.5, d_target=0.9, force_factor=2.0, steps=20):
    """Force-controlled single element with strong softening.

    The reference force is ``force_factor`` times the peak nominal stress of
    the local model; returns ``(arc_length_trajectory, load_stepping_trajectory)``.
    """
    from .damage_update import point_driver

    m = ClosedFormParams.from_young(SINGLE_ELEMENT["E"], SINGLE_ELEMENT["nu"], eta_d=eta_d, kappa_d=kappa_d)
    stretch = np.linspace(1.0, 1.5, 2001)
    peak = point_driver(stretch, m, kinematics="uniaxial_stress").stress.max()
    problem = single_element_problem(m, force=force_factor * peak)
    cfg = SolverConfig(scheme="local-monolithic", steps=steps, d_max=1.0, arc_max_steps=400)
    arc = arc_length(problem, cfg, d_target=d_target)
    ls = load_stepping(single_element_problem(m, force=force_factor * peak), cfg)
    return arc, ls


# -- mesh study ----------------------------------------------------------------------------


def plate_meshes(lx=10.0, ly=10.0, lz=1.0):
    return {
        "coarse": box_mesh(lx, ly, lz, 10, 10, 1),
        "refined": box_mesh(lx, ly, lz, 20, 20, 1),
        "nonuniform": box_mesh(lx, ly, lz, 14, 14, 1, distort=0.3),
    }


MESH_STUDY_SCHEMES = {
    "local-staggered": "local",
    "gradient-monolithic": "monolithic",
    "gradient-staggered": "staggered",
}


def localization_indicator(problem, state):
    """``max - median`` of the element damage field."""
    d = element_damage(problem, state)
    return float(d.max() - np.median(d))


def mesh_study(displacement=20.0, steps=100, meshes=None, schemes=None, params=None, d_max=0.995):
    """Three meshes times three solution strategies on the tension plate."""
    p = dict(PLATE, **(params or {}))
    m = ClosedFormParams.from_young(p["E"], p["nu"], eta_d=p["eta_d"], kappa_d=p["kappa_d"],
                                    c_d=p["c_d"], beta_d=p["beta_d"])
    meshes = plate_meshes() if meshes is None else meshes
    schemes = MESH_STUDY_SCHEMES if schemes is None else schemes
    results = {}
    for mname, mesh in meshes.items():
        for sname, scheme in schemes.items():
            problem = tension_problem(mesh, m, displacement)
            traj = load_stepping(problem, SolverConfig(scheme=scheme, steps=steps, d_max=d_max))
            results[(mname, sname)] = (problem, traj)
            log.info("mesh study %s/%s: %s after %d steps", mname, sname, traj.status, len(traj))
    return results


# -- notched plate --------------------------------------------------------------------------


def notched_problem(mesh, m, strain=0.25):
    """Horizontal pull of ``strain`` times the plate length on the right face."""
    lx = np.ptp(mesh.nodes[:, 0])
    return tension_problem(mesh, m, strain * lx, grip=False)


def notched_plate(mesh, m, steps=25, strain=0.25, scheme="monolithic", d_max=0.995):
    problem = notched_problem(mesh, m, strain)
    traj = load_stepping(problem, SolverConfig(scheme=scheme, steps=steps, d_max=d_max))
    return problem, traj


def scaled_material(m, scale):
    """Gradient parameter ``c_d`` scaled with the square of the geometric scale."""
    return replace(m, c_d=m.c_d * scale * scale)


# desk-scale notched plate: 1/10 of a 100 x 100 x 1 mm plate
NOTCH = dict(width=10.0, height=10.0, thickness=0.1, radius=1.0, bias=1.5)
# closed-form generator behind the shipped weights: gradual softening that the
# notched plate can follow to the full prescribed strain
WEIGHTS_GENERATOR = dict(E=42.0, nu=0.45, eta_d=0.3, kappa_d=0.0)
NOTCH_MESHES = {"coarse": (16, 15), "medium": (25, 25), "fine": (49, 48)}


def notched_meshes(generate=False):
    """The shipped coarse/medium/fine notched meshes (``generate`` rebuilds them)."""
    from importlib import resources

    from .fem.mesh import notched_plate_mesh
    from .io import parse_inp

    out = {}
    for name, (nx, ny) in NOTCH_MESHES.items():
        if generate:
            out[name] = notched_plate_mesh(NOTCH["width"], NOTCH["height"], NOTCH["thickness"], NOTCH["radius"],
                                           nx, ny, 1, bias=NOTCH["bias"])
        else:
            with resources.as_file(resources.files("gedamage") / "data" / f"notched_{name}.inp") as p:
                out[name] = parse_inp(p)
    return out


def default_weights_path():
    from importlib import resources

    return resources.files("gedamage") / "data" / "default_weights.json"


def notched_material(scale=0.1, weights=None):
    """Fitted data-driven model with the plate constants and ``eta_d = 0.001``.

    ``c_d`` is scaled with the square of the geometric ``scale`` so that the
    damage length stays proportional to the plate.
    """
    from .networks import load_weights

    p = load_weights(default_weights_path() if weights is None else weights,
                     c_d=PLATE["c_d"], beta_d=PLATE["beta_d"])
    return scaled_material(replace(p, eta_d=0.001, kappa_d=PLATE["kappa_d"]), scale)
