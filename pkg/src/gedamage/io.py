"""File formats: Abaqus-input meshes, VTK output, CSV histories and run configs."""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import tensors as tn
from .fem.mesh import Mesh, MeshError, _face_sets, box_mesh
from .fem.solver import Problem, SolverConfig, element_damage, assemble
from .materials import ClosedFormParams
from .networks import load_weights


class InpFormatError(MeshError):
    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(loc + message)
        self.line = line


class UnsupportedFeatureError(InpFormatError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration; the message starts with the offending key path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- Abaqus input ---------------------------------------------------------------------


def _keyword(line):
    head, *opts = [p.strip() for p in line[1:].split(",")]
    params = {}
    for o in opts:
        if not o:
            continue
        k, _, v = o.partition("=")
        params[k.strip().upper()] = v.strip()
    return head.upper(), params


def parse_inp(path):
    """Read nodes, C3D8 elements and node/element sets from an Abaqus input file.

    Ids are remapped to dense 0-based indices in order of appearance.
    """
    path = Path(path)
    text = path.read_text()
    node_ids, coords = {}, []
    elem_ids, conn, conn_lines = {}, [], []
    nsets, elsets = {}, {}
    mode, opts = None, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("**"):
            continue
        if line.startswith("*"):
            mode, opts = _keyword(line)
            if mode == "ELEMENT":
                etype = opts.get("TYPE", "").upper()
                if not re.fullmatch(r"C3D8[RHIT]*", etype):
                    raise UnsupportedFeatureError(f"unsupported element type {etype or '(none)'!r}", path, lineno)
                if opts.get("ELSET"):
                    elsets.setdefault(opts["ELSET"], [])
            elif mode in ("NSET", "ELSET"):
                key = "NSET" if mode == "NSET" else "ELSET"
                if key not in opts:
                    raise InpFormatError(f"*{mode} without {key}= name", path, lineno)
                target = nsets if mode == "NSET" else elsets
                target.setdefault(opts[key], [])
            continue
        try:
            vals = [v.strip() for v in line.split(",") if v.strip()]
            if mode == "NODE":
                nid = int(vals[0])
                if nid in node_ids:
                    raise InpFormatError(f"duplicate node id {nid}", path, lineno)
                xyz = [float(v) for v in vals[1:4]]
                if len(xyz) != 3:
                    raise InpFormatError(f"node {nid} needs three coordinates", path, lineno)
                node_ids[nid] = len(coords)
                coords.append(xyz)
            elif mode == "ELEMENT":
                ids = [int(v) for v in vals]
                if conn and len(conn[-1]) < 9:  # continuation line
                    conn[-1].extend(ids)
                    continue
                if ids[0] in elem_ids:
                    raise InpFormatError(f"duplicate element id {ids[0]}", path, lineno)
                elem_ids[ids[0]] = len(conn)
                conn.append(ids)
                if opts.get("ELSET"):
                    elsets[opts["ELSET"]].append(ids[0])
                conn_lines.append(lineno)
            elif mode in ("NSET", "ELSET"):
                name = opts["NSET" if mode == "NSET" else "ELSET"]
                target = nsets if mode == "NSET" else elsets
                if "GENERATE" in opts:
                    a, b, *st = (int(v) for v in vals)
                    step = st[0] if st else 1
                    if step <= 0 or b < a:
                        raise InpFormatError("bad GENERATE range", path, lineno)
                    target[name].extend(range(a, b + 1, step))
                else:
                    for v in vals:
                        if re.fullmatch(r"[+-]?\d+", v):
                            target[name].append(int(v))
                        else:
                            target[name].extend(target.get(v, []))
            # other keyword blocks are ignored
        except InpFormatError:
            raise
        except (ValueError, IndexError) as exc:
            raise InpFormatError(f"malformed record {line!r}", path, lineno) from exc

    if not coords:
        raise InpFormatError("no *NODE data found", path)
    elements = np.empty((len(conn), 8), dtype=int)
    for k, (ids, ln) in enumerate(zip(conn, conn_lines)):
        if len(ids) != 9:
            raise InpFormatError(f"element {ids[0]} has {len(ids) - 1} nodes, expected 8", path, ln)
        for j, nid in enumerate(ids[1:]):
            if nid not in node_ids:
                raise InpFormatError(f"element {ids[0]} references undefined node {nid}", path, ln)
            elements[k, j] = node_ids[nid]

    def remap(ids, table, kind, name):
        missing = [i for i in ids if i not in table]
        if missing:
            raise InpFormatError(f"{kind} set {name!r} references undefined id {missing[0]}", path)
        return np.unique(np.array([table[i] for i in ids], dtype=int))

    mesh = Mesh(
        np.array(coords, dtype=float),
        elements,
        {k: remap(v, node_ids, "node", k) for k, v in nsets.items()},
        {k: remap(v, elem_ids, "element", k) for k, v in elsets.items()},
    )
    for k, v in _face_sets(mesh.nodes).items():
        mesh.node_sets.setdefault(k, v)
    return mesh


def write_inp(mesh: Mesh, path, heading="mesh"):
    lines = ["*HEADING", heading, "*NODE"]
    lines += [f"{i + 1}, {x:.17g}, {y:.17g}, {z:.17g}" for i, (x, y, z) in enumerate(mesh.nodes)]
    lines.append("*ELEMENT, TYPE=C3D8, ELSET=ALL")
    lines += [f"{k + 1}, " + ", ".join(str(n + 1) for n in e) for k, e in enumerate(mesh.elements)]
    for name, ids in mesh.node_sets.items():
        lines.append(f"*NSET, NSET={name}")
        ids = [str(i + 1) for i in ids]
        lines += [", ".join(ids[i : i + 16]) for i in range(0, len(ids), 16)]
    Path(path).write_text("\n".join(lines) + "\n")


# -- VTK ----------------------------------------------------------------------------------

VTK_FIELDS = ("phi", "u", "d", "kappa", "von_mises")


def element_fields(problem: Problem, state, cfg: SolverConfig):
    """Cell data: damage, mean kappa and quadrature-averaged von Mises stress."""
    _, _, out, _ = assemble(problem, state, cfg, update_kappa=False, tangent=False)
    sig = tn.cauchy_stress(out.P, out.F).mean(axis=1)
    return {
        "d": element_damage(problem, state),
        "kappa": state.history.kappa.mean(axis=1),
        "von_mises": tn.von_mises(sig),
    }


def write_vtk(problem: Problem, state, path, cfg: SolverConfig | None = None, fields=VTK_FIELDS):
    """Legacy ASCII unstructured grid with hexahedral cells (type 12)."""
    cfg = cfg or SolverConfig()
    mesh = problem.mesh
    bad = [f for f in fields if f not in VTK_FIELDS]
    if bad:
        raise ValueError(f"unknown output fields {bad}")
    cells = element_fields(problem, state, cfg) if {"d", "kappa", "von_mises"} & set(fields) else {}
    n, e = mesh.n_nodes, mesh.n_elements
    out = ["# vtk DataFile Version 3.0", "gradient-enhanced damage", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {n} double")
    out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.nodes]
    out.append(f"CELLS {e} {9 * e}")
    out += ["8 " + " ".join(map(str, c)) for c in mesh.elements]
    out.append(f"CELL_TYPES {e}")
    out += ["12"] * e
    out.append(f"POINT_DATA {n}")
    if "phi" in fields:
        out += ["SCALARS phi double 1", "LOOKUP_TABLE default"]
        out += [f"{v:.17g}" for v in state.phi]
    if "u" in fields:
        out.append("VECTORS u double")
        out += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in state.u]
    names = [f for f in ("d", "kappa", "von_mises") if f in fields]
    if names:
        out.append(f"CELL_DATA {e}")
        for name in names:
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{v:.17g}" for v in cells[name]]
    Path(path).write_text("\n".join(out) + "\n")


# -- histories ------------------------------------------------------------------------------

HISTORY_HEADER = ("step", "load_factor", "displacement", "reaction", "max_sigma11", "max_kappa", "max_d", "max_phi")


def history_rows(traj):
    return [
        (r.step, r.load_factor, r.summary.control, r.summary.reaction, r.summary.max_sigma11,
         r.summary.max_kappa, r.summary.max_d, r.summary.max_phi)
        for r in traj.records
    ]


def write_history(traj, path):
    rows = history_rows(traj)
    if not rows:
        raise ValueError("empty trajectory")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for row in rows:
            w.writerow([str(row[0])] + [f"{v:.17g}" for v in row[1:]])


def read_history(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected history header")
        return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in reader if r]


# -- run configuration -------------------------------------------------------------------------

DOF_INDEX = {"x": 0, "y": 1, "z": 2, "phi": 3}


@dataclass
class MeshSpec:
    file: str | None = None
    box: dict | None = None  # lx, ly, lz, nx, ny, nz[, distort]


@dataclass
class MaterialSpec:
    variant: str = "closedform"
    E: float | None = None
    nu: float | None = None
    mu_e: float | None = None
    lambda_e: float | None = None
    eta_d: float = 1.0
    kappa_d: float = 0.0
    c_d: float = 0.0
    beta_d: float = 0.0
    gamma_d: float = 1.0
    weights: str | None = None


@dataclass
class BoundarySpec:
    node_set: str
    dof: str
    kind: str = "fixed"  # fixed | ramp
    value: float = 0.0


@dataclass
class OutputSpec:
    directory: str = "results"
    fields: list = field(default_factory=lambda: list(VTK_FIELDS))
    every: int = 0  # VTK frequency in steps; 0 writes the final state only


@dataclass
class RunConfig:
    mesh: MeshSpec
    material: MaterialSpec
    boundary: list
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    base_dir: str = field(default=".", repr=False, compare=False)


def _take(doc, cls, path, required=()):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name for f in fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    for r in required:
        if r not in doc:
            raise ConfigError(f"{path}.{r}" if path else r, "missing required key")
    return dict(doc)


def _number(v, path, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, "expected an integer")
    if not np.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    return int(v) if integer else float(v)


def parse_config(doc, base_dir="."):
    """Validate a config document (already JSON-decoded)."""
    top = _take(doc, RunConfig, "", required=("mesh", "material", "boundary"))
    m = _take(top["mesh"], MeshSpec, "mesh")
    if (m.get("file") is None) == (m.get("box") is None):
        raise ConfigError("mesh", "give exactly one of 'file' or 'box'")
    if m.get("box") is not None:
        box = m["box"]
        if not isinstance(box, dict):
            raise ConfigError("mesh.box", "expected an object")
        for k in ("lx", "ly", "lz"):
            _number(box.get(k), f"mesh.box.{k}", positive=True)
        for k in ("nx", "ny", "nz"):
            _number(box.get(k), f"mesh.box.{k}", positive=True, integer=True)
        extra = set(box) - {"lx", "ly", "lz", "nx", "ny", "nz", "distort"}
        if extra:
            raise ConfigError(f"mesh.box.{sorted(extra)[0]}", "unknown key")
    mesh = MeshSpec(**m)

    mat = _take(top["material"], MaterialSpec, "material")
    variant = mat.get("variant", "closedform")
    if variant not in ("closedform", "datadriven"):
        raise ConfigError("material.variant", "must be 'closedform' or 'datadriven'")
    for k, v in mat.items():
        if k in ("variant", "weights") or v is None:
            continue
        _number(v, f"material.{k}")
    if variant == "datadriven" and not mat.get("weights"):
        raise ConfigError("material.weights", "required for the datadriven variant")
    if variant == "closedform":
        has_e = mat.get("E") is not None and mat.get("nu") is not None
        has_l = mat.get("mu_e") is not None and mat.get("lambda_e") is not None
        if has_e == has_l:
            raise ConfigError("material", "give either E and nu or mu_e and lambda_e")
    material = MaterialSpec(**mat)

    if not isinstance(top["boundary"], list) or not top["boundary"]:
        raise ConfigError("boundary", "expected a non-empty list")
    bcs = []
    for i, b in enumerate(top["boundary"]):
        p = f"boundary[{i}]"
        b = _take(b, BoundarySpec, p, required=("node_set", "dof"))
        if b["dof"] not in DOF_INDEX:
            raise ConfigError(f"{p}.dof", f"must be one of {sorted(DOF_INDEX)}")
        if b.get("kind", "fixed") not in ("fixed", "ramp"):
            raise ConfigError(f"{p}.kind", "must be 'fixed' or 'ramp'")
        if "value" in b:
            b["value"] = _number(b["value"], f"{p}.value")
        bcs.append(BoundarySpec(**b))

    s = _take(top.get("solver", {}), SolverConfig, "solver")
    try:
        solver = SolverConfig(**s)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc
    except TypeError as exc:
        raise ConfigError("solver", str(exc)) from exc

    o = _take(top.get("output", {}), OutputSpec, "output")
    output = OutputSpec(**o)
    bad = [f for f in output.fields if f not in VTK_FIELDS]
    if bad:
        raise ConfigError("output.fields", f"unknown field {bad[0]!r}")
    seed = _number(top.get("seed", 0), "seed", integer=True)
    return RunConfig(mesh, material, bcs, solver, output, seed, str(base_dir))


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc, base_dir=path.parent)


def config_to_dict(cfg: RunConfig):
    def clean(d):
        return {k: v for k, v in d.items() if v is not None}

    return {
        "mesh": clean(asdict(cfg.mesh)),
        "material": clean(asdict(cfg.material)),
        "boundary": [asdict(b) for b in cfg.boundary],
        "solver": clean(asdict(cfg.solver)),
        "output": asdict(cfg.output),
        "seed": cfg.seed,
    }


def save_config(cfg: RunConfig, path):
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def _resolve(cfg, p):
    return p if os.path.isabs(p) else os.path.join(cfg.base_dir, p)


def build_mesh(cfg: RunConfig):
    if cfg.mesh.file is not None:
        return parse_inp(_resolve(cfg, cfg.mesh.file))
    b = cfg.mesh.box
    return box_mesh(b["lx"], b["ly"], b["lz"], int(b["nx"]), int(b["ny"]), int(b["nz"]), b.get("distort", 0.0))


def build_material(cfg: RunConfig):
    try:
        return _build_material(cfg)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("material", str(exc)) from exc


def _build_material(cfg: RunConfig):
    s = cfg.material
    nonlocal_ = dict(c_d=s.c_d, beta_d=s.beta_d, gamma_d=s.gamma_d)
    if s.variant == "datadriven":
        m = load_weights(_resolve(cfg, s.weights), **nonlocal_)
        over = {k: getattr(s, k) for k in ("mu_e", "lambda_e") if getattr(s, k) is not None}
        if over:
            m = replace(m, **over)
        return m
    if s.E is not None:
        return ClosedFormParams.from_young(s.E, s.nu, eta_d=s.eta_d, kappa_d=s.kappa_d, **nonlocal_)
    return ClosedFormParams(s.mu_e, s.lambda_e, s.eta_d, s.kappa_d, **nonlocal_)


def build_problem(cfg: RunConfig, mesh=None, material=None):
    mesh = build_mesh(cfg) if mesh is None else mesh
    material = build_material(cfg) if material is None else material
    n4 = 4
    fixed, pres, vals = [], [], []
    for i, b in enumerate(cfg.boundary):
        if b.node_set not in mesh.node_sets:
            raise ConfigError(f"boundary[{i}].node_set", f"unknown node set {b.node_set!r}")
        dofs = mesh.node_sets[b.node_set] * n4 + DOF_INDEX[b.dof]
        if b.kind == "fixed" and b.value == 0.0:
            fixed.append(dofs)
        else:
            pres.append(dofs)
            vals.append(np.full(len(dofs), b.value))
    fixed = np.unique(np.concatenate(fixed)) if fixed else np.zeros(0, dtype=int)
    pres = np.concatenate(pres) if pres else np.zeros(0, dtype=int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    ramp = [b for b in cfg.boundary if b.kind == "ramp"]
    reaction = None
    if ramp:
        r = ramp[0]
        reaction = mesh.node_sets[r.node_set] * n4 + DOF_INDEX[r.dof]
    return Problem(mesh, material, fixed, pres, vals, reaction_dofs=reaction)
