"""Global Newton schemes, load stepping and arc-length continuation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .. import damage_update as du
from .. import materials as mat
from .. import tensors as tn
from .assembly import NDOF_NODE, Assembler, DofMap, LinearSolveError, linear_solve
from .element import ElementFailure, element_geometry, evaluate

log = logging.getLogger(__name__)

SCHEMES = ("monolithic", "staggered", "local", "local-monolithic")
CONTINUATIONS = ("load-stepping", "arc-length")


class StepFailure(RuntimeError):
    """A load increment could not be converged; the caller may cut it back."""


class ConfigError(ValueError):
    pass


@dataclass
class SolverConfig:
    scheme: str = "monolithic"
    continuation: str = "load-stepping"
    steps: int = 100
    newton_tol: float = 1e-8
    newton_abs_tol: float = 1e-12
    newton_max_iter: int = 25
    local_tol: float = du.TOL_LOCAL
    local_max_iter: int = du.MAX_ITER
    d_max: float = 0.995
    max_halvings: int = 8
    arc_radius: float | None = None
    arc_psi: float = 0.0
    arc_max_steps: int = 400
    diag_scaling: bool = False
    predictor: bool = True
    backend: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.continuation not in CONTINUATIONS:
            raise ConfigError(f"continuation must be one of {CONTINUATIONS}, got {self.continuation!r}")
        for name in ("steps", "newton_max_iter", "local_max_iter", "arc_max_steps"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("newton_tol", "newton_abs_tol", "local_tol", "d_max"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be non-negative")
        if self.arc_radius is not None and not self.arc_radius >= 0.0:
            raise ConfigError("arc_radius must be non-negative")
        return self

    @property
    def local(self):
        return self.scheme in ("local", "local-monolithic")

    @property
    def monolithic(self):
        return self.scheme in ("monolithic", "local-monolithic")


@dataclass
class QuadHistory:
    kappa: np.ndarray  # committed kappa_n, (E, Q)
    trial: np.ndarray  # working kappa
    failed: np.ndarray  # (E, Q) bool

    @classmethod
    def virgin(cls, n_elements, kappa0=0.0):
        k = np.full((n_elements, 8), float(kappa0))
        return cls(k, k.copy(), np.zeros(k.shape, dtype=bool))

    def copy(self):
        return QuadHistory(self.kappa.copy(), self.trial.copy(), self.failed.copy())

    def commit(self, m, d_max):
        if np.any(self.trial < self.kappa):
            raise AssertionError("history variable decreased on commit")
        self.kappa = self.trial.copy()
        _, d = mat.degradation(self.kappa, m.eta_d, m.kappa_d)
        self.failed = d >= d_max

    def rollback(self):
        self.trial = self.kappa.copy()


@dataclass
class SystemState:
    x: np.ndarray  # interleaved (u_x, u_y, u_z, phi) per node
    history: QuadHistory
    step: int = 0
    load_factor: float = 0.0

    @property
    def u(self):
        return self.x.reshape(-1, NDOF_NODE)[:, :3]

    @property
    def phi(self):
        return self.x.reshape(-1, NDOF_NODE)[:, 3]

    def copy(self):
        return SystemState(self.x.copy(), self.history.copy(), self.step, self.load_factor)


@dataclass
class Problem:
    """Boundary-value problem driven by a single load factor.

    Prescribed dofs take ``load_factor * prescribed_values``; fixed dofs stay
    at zero; ``force`` (optional) is scaled by the load factor as well.
    """

    mesh: object
    material: object
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    prescribed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    prescribed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    force: np.ndarray | None = None
    reaction_dofs: np.ndarray | None = None
    control_dof: int | None = None
    kappa0: float = 0.0

    @cached_property
    def dofmap(self):
        return DofMap.for_mesh(self.mesh)

    @cached_property
    def geometry(self):
        return element_geometry(self.mesh)

    @cached_property
    def edofs(self):
        return self.dofmap.element_dofs(self.mesh.elements)

    @cached_property
    def assembler(self):
        return Assembler(self.edofs, self.dofmap.n_dofs)

    def constrained_dofs(self, local):
        parts = [np.asarray(self.fixed_dofs, int), np.asarray(self.prescribed_dofs, int)]
        if local:
            parts.append(self.dofmap.phi_dofs())
        return np.unique(np.concatenate(parts))

    def free_dofs(self, local):
        mask = np.ones(self.dofmap.n_dofs, dtype=bool)
        mask[self.constrained_dofs(local)] = False
        return np.flatnonzero(mask)

    def initial_state(self):
        return SystemState(np.zeros(self.dofmap.n_dofs), QuadHistory.virgin(self.mesh.n_elements, self.kappa0))

    def apply_dirichlet(self, x, load_factor):
        x[np.asarray(self.fixed_dofs, int)] = 0.0
        x[np.asarray(self.prescribed_dofs, int)] = load_factor * np.asarray(self.prescribed_values, float)

    def external(self, load_factor):
        if self.force is None:
            return 0.0
        return load_factor * self.force

    def control_value(self, x, load_factor):
        if self.control_dof is not None:
            return float(x[self.control_dof])
        vals = np.asarray(self.prescribed_values, float)
        return float(load_factor * (vals[np.argmax(np.abs(vals))] if vals.size else 0.0))


@dataclass
class StepSummary:
    """Per-step response quantities written to history files."""

    reaction: float
    max_sigma11: float
    max_kappa: float
    max_d: float
    max_phi: float
    control: float


@dataclass
class StepRecord:
    step: int
    load_factor: float
    state: SystemState
    summary: StepSummary
    iterations: int
    residuals: list


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    status: str = "completed"  # completed | terminated | aborted
    message: str = ""

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r.summary, name) for r in self.records])

    @property
    def load_factors(self):
        return np.array([r.load_factor for r in self.records])


# -- residual evaluation -------------------------------------------------------


def _element_fields(problem, x):
    xe = x[problem.edofs]
    return xe[:, :24].reshape(-1, 8, 3), xe[:, 24:]


def assemble(problem, state, cfg, x=None, load_factor=None, update_kappa=None, tangent=True):
    """Global residual ``f_int - lambda f_ext`` (all dofs), tangent and kernel output."""
    x = state.x if x is None else x
    lam = state.load_factor if load_factor is None else load_factor
    upd = cfg.monolithic if update_kappa is None else update_kappa
    u_e, phi_e = _element_fields(problem, x)
    out = evaluate(
        problem.geometry, u_e, phi_e, state.history.kappa, problem.material,
        update_kappa=upd, local=cfg.local, tangent=tangent,
        tol_local=cfg.local_tol, max_iter_local=cfg.local_max_iter, backend=cfg.backend,
    )
    fint = problem.assembler.vector(out.R)
    R = fint - problem.external(lam)
    K = problem.assembler.matrix(out.K) if tangent else None
    scale = np.linalg.norm(problem.assembler.vector(np.abs(out.R)))
    return R, K, out, scale


_FAILURES = (ElementFailure, LinearSolveError, tn.InvertedElementError, du.LocalConvergenceError,
             FloatingPointError, tn.SingularTensorError)


def _floor(cfg, scale):
    return max(cfg.newton_abs_tol, 1e-12 * scale)


def newton_step(problem, state, cfg, load_factor=None):
    """One Newton iteration on the free (u, phi) dofs.

    Returns the updated state and ``(residual_norm_before, correction_norm)``.
    In monolithic mode the trial history is the return-map result at the
    iterate the residual was evaluated at.
    """
    lam = state.load_factor if load_factor is None else load_factor
    new = state.copy()
    new.load_factor = lam
    problem.apply_dirichlet(new.x, lam)
    free = problem.free_dofs(cfg.local)
    R, K, out, _ = assemble(problem, new, cfg)
    new.history.trial = out.kappa.copy()
    r = R[free]
    if not np.all(np.isfinite(r)):
        raise StepFailure("NaN in global residual")
    dx = linear_solve(K[free][:, free], -r, scale=cfg.diag_scaling)
    new.x[free] += dx
    return new, (float(np.linalg.norm(r)), float(np.linalg.norm(dx)))


def solve_increment(problem, state, load_factor, cfg):
    """Converge the fields at ``load_factor`` from the last converged state.

    Returns ``(state, residual_history)``; the state's trial history holds the
    kappa to be committed.  Raises ``StepFailure``.
    """
    new = state.copy()
    new.history.rollback()
    new.load_factor = load_factor
    free = problem.free_dofs(cfg.local)
    hist = []
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            if cfg.predictor:
                _predict(problem, new, load_factor, cfg, free)
            problem.apply_dirichlet(new.x, load_factor)
            r0 = None
            for it in range(cfg.newton_max_iter + 1):
                R, K, out, scale = assemble(problem, new, cfg)
                r = R[free]
                nr = float(np.linalg.norm(r))
                if not np.isfinite(nr):
                    raise StepFailure("NaN in global residual")
                hist.append(nr)
                r0 = nr if r0 is None else r0
                if nr <= max(cfg.newton_tol * r0, _floor(cfg, scale)):
                    new.history.trial = out.kappa.copy()
                    break
                if it == cfg.newton_max_iter:
                    raise StepFailure(f"Newton did not converge in {cfg.newton_max_iter} iterations")
                dx = linear_solve(K[free][:, free], -r, scale=cfg.diag_scaling)
                new.x[free] += dx
    except _FAILURES as exc:
        raise StepFailure(str(exc)) from exc
    if not cfg.monolithic:
        new.history.trial = staggered_sweep(problem, new, cfg)
    return new, hist


def _predict(problem, state, load_factor, cfg, free):
    """Tangent predictor: extrapolate the free dofs along the Dirichlet/load increment.

    Without it a large prescribed jump concentrates in the boundary elements
    on the first iterate, which can push softening models onto a spurious
    damaged branch.
    """
    x_new = state.x.copy()
    problem.apply_dirichlet(x_new, load_factor)
    dxp = x_new - state.x
    dxp[free] = 0.0
    if not np.any(dxp) and problem.force is None:
        return
    R, K, _, _ = assemble(problem, state, cfg, load_factor=load_factor)
    rhs = -(R[free] + K[free] @ dxp)
    try:
        state.x[free] += linear_solve(K[free][:, free], rhs, scale=cfg.diag_scaling)
    except LinearSolveError:
        pass


def staggered_sweep(problem, state, cfg):
    """One pass of the return map over all points at the converged fields."""
    u_e, phi_e = _element_fields(problem, state.x)
    try:
        out = evaluate(
            problem.geometry, u_e, phi_e, state.history.kappa, problem.material,
            update_kappa=True, local=cfg.local, tangent=False,
            tol_local=cfg.local_tol, max_iter_local=cfg.local_max_iter, backend=cfg.backend,
        )
    except _FAILURES as exc:
        raise StepFailure(str(exc)) from exc
    return out.kappa.copy()


def summarize(problem, state, cfg):
    """Reaction, stress and damage measures at a committed state."""
    R, _, out, _ = assemble(problem, state, cfg, update_kappa=False, tangent=False)
    fint = R + problem.external(state.load_factor)
    rdofs = problem.reaction_dofs if problem.reaction_dofs is not None else problem.prescribed_dofs
    reaction = float(np.sum(fint[np.asarray(rdofs, int)])) if len(rdofs) else 0.0
    sig = tn.cauchy_stress(out.P, out.F)
    s11 = sig[..., 0, 0].mean(axis=1)
    k = state.history.kappa
    d = element_damage(problem, state)
    return StepSummary(
        reaction=reaction,
        max_sigma11=float(s11.max()),
        max_kappa=float(k.max()),
        max_d=float(d.max()),
        max_phi=float(state.phi.max()),
        control=problem.control_value(state.x, state.load_factor),
    )


def element_damage(problem, state):
    """Element damage: quadrature-point average of ``d = 1 - f_d(kappa)``."""
    m = problem.material
    return mat.degradation(state.history.kappa, m.eta_d, m.kappa_d)[1].mean(axis=1)


def _commit(problem, state, cfg, step, iters, hist):
    state.history.commit(problem.material, cfg.d_max)
    state.step = step
    return StepRecord(step, state.load_factor, state.copy(), summarize(problem, state, cfg), iters, hist)


# -- load stepping ----------------------------------------------------------------


def load_stepping(problem, cfg, load_factors=None, inject_failure=None, state=None):
    """Incremental loading with increment halving on failure.

    ``load_factors`` defaults to ``cfg.steps`` equal increments up to 1.
    ``inject_failure(step, load_factor)`` may return True to force a
    rejection (used for testing the cut-back logic).
    """
    targets = np.linspace(0.0, 1.0, cfg.steps + 1)[1:] if load_factors is None else np.asarray(load_factors, float)
    state = problem.initial_state() if state is None else state
    traj = Trajectory()
    for k, target in enumerate(targets, start=1):
        delta = target - state.load_factor
        halvings = 0
        iters = 0
        hist = []
        while abs(target - state.load_factor) > 1e-14 * max(1.0, abs(target)):
            lam = target if abs(delta) >= abs(target - state.load_factor) else state.load_factor + delta
            try:
                if inject_failure is not None and inject_failure(k, lam):
                    raise StepFailure("injected failure")
                new, h = solve_increment(problem, state, lam, cfg)
            except StepFailure as exc:
                halvings += 1
                if halvings > cfg.max_halvings:
                    traj.status = "aborted"
                    traj.message = f"increment underflow at step {k} (load factor {state.load_factor:.6g}): {exc}"
                    log.warning(traj.message)
                    return traj
                delta *= 0.5
                log.info("step %d: cutting increment to %.3g (%s)", k, delta, exc)
                continue
            new.history.commit(problem.material, cfg.d_max)
            state = new
            iters += len(h)
            hist.extend(h)
        state.step = k
        state.load_factor = float(target)
        rec = StepRecord(k, float(target), state.copy(), summarize(problem, state, cfg), iters, hist)
        traj.records.append(rec)
        if rec.summary.max_d >= cfg.d_max or state.history.failed.any():
            traj.status = "terminated"
            traj.message = f"damage threshold reached at step {k}"
            break
    return traj


# -- arc length --------------------------------------------------------------------


class ArcLengthError(ValueError):
    pass


def _load_direction(problem, K, free, local):
    """``-dR/dlambda`` on the free dofs."""
    q = np.zeros(len(free))
    if problem.force is not None:
        q += problem.force[free]
    pd = np.asarray(problem.prescribed_dofs, int)
    if pd.size:
        uc = np.zeros(problem.dofmap.n_dofs)
        uc[pd] = problem.prescribed_values
        q -= K[free][:, pd] @ uc[pd]
    return q


def arc_length(problem, cfg, d_target=None, state=None):
    """Spherical arc-length continuation in (free dofs, load factor).

    The constraint is ``|dx|^2 + psi^2 s^2 dlam^2 = r^2`` with ``s`` the norm
    of the initial tangent displacement per unit load, so both terms have
    displacement units.  Each failing step halves the radius (up to
    ``cfg.max_halvings`` times); a converged step restores it gradually.
    """
    if cfg.arc_radius is not None and cfg.arc_radius <= 0.0:
        raise ArcLengthError("arc radius must be positive")
    d_target = cfg.d_max if d_target is None else d_target
    state = problem.initial_state() if state is None else state
    free = problem.free_dofs(cfg.local)
    pd = np.asarray(problem.prescribed_dofs, int)
    traj = Trajectory()

    with np.errstate(over="raise", invalid="raise", divide="raise"):
        _, K, _, _ = assemble(problem, state, cfg)
        q = _load_direction(problem, K, free, cfg.local)
        dxq = linear_solve(K[free][:, free], q)
    s2 = float(dxq @ dxq)
    psi2 = cfg.arc_psi**2 * s2
    radius0 = cfg.arc_radius if cfg.arc_radius is not None else np.sqrt(s2 + psi2) / cfg.steps
    radius = radius0
    prev_dx = None
    prev_dlam = 1.0
    halvings = 0
    step = 0
    while step < cfg.arc_max_steps:
        try:
            new, hist = _arc_step(problem, state, cfg, free, pd, radius, psi2, prev_dx, prev_dlam)
        except StepFailure as exc:
            halvings += 1
            if halvings > cfg.max_halvings:
                traj.status = "aborted"
                traj.message = f"arc-length radius underflow after step {step}: {exc}"
                return traj
            radius *= 0.5
            continue
        step += 1
        prev_dx = new.x[free] - state.x[free]
        prev_dlam = new.load_factor - state.load_factor
        rec = _commit(problem, new, cfg, step, len(hist), hist)
        traj.records.append(rec)
        state = new
        if halvings and len(hist) <= 4:
            radius = min(2.0 * radius, radius0)
            halvings = max(halvings - 1, 0)
        if rec.summary.max_d >= d_target:
            traj.status = "terminated"
            traj.message = f"damage target reached at step {step}"
            break
    return traj


def _arc_step(problem, state, cfg, free, pd, radius, psi2, prev_dx, prev_dlam):
    base = state.copy()
    base.history.rollback()
    x0 = base.x.copy()
    lam0 = base.load_factor
    hist = []
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            cur = base.copy()
            R, K, out, scale = assemble(problem, cur, cfg)
            q = _load_direction(problem, K, free, cfg.local)
            dxq = linear_solve(K[free][:, free], q, scale=cfg.diag_scaling)
            denom = np.sqrt(dxq @ dxq + psi2)
            sign = 1.0
            if prev_dx is not None:
                sign = np.sign(dxq @ prev_dx + psi2 * prev_dlam) or 1.0
            dlam = sign * radius / denom
            Dx = dlam * dxq
            Dlam = dlam
            for it in range(cfg.newton_max_iter + 1):
                cur.x = x0.copy()
                cur.x[free] += Dx
                cur.load_factor = lam0 + Dlam
                problem.apply_dirichlet(cur.x, cur.load_factor)
                R, K, out, scale = assemble(problem, cur, cfg)
                r = R[free]
                nr = float(np.linalg.norm(r))
                if not np.isfinite(nr):
                    raise StepFailure("NaN in global residual")
                hist.append(nr)
                ref = np.linalg.norm(problem.external(1.0)[free]) if problem.force is not None else 0.0
                ref = max(ref, np.linalg.norm(_load_direction(problem, K, free, cfg.local)))
                if nr <= max(cfg.newton_tol * ref, _floor(cfg, scale)):
                    cur.history.trial = out.kappa.copy()
                    break
                if it == cfg.newton_max_iter:
                    raise StepFailure("arc-length corrector did not converge")
                q = _load_direction(problem, K, free, cfg.local)
                Kf = K[free][:, free]
                dxr = linear_solve(Kf, -r, scale=cfg.diag_scaling)
                dxq = linear_solve(Kf, q, scale=cfg.diag_scaling)
                a = Dx + dxr
                a1 = dxq @ dxq + psi2
                a2 = 2.0 * (dxq @ a) + 2.0 * psi2 * Dlam
                a3 = a @ a + psi2 * Dlam**2 - radius**2
                disc = a2 * a2 - 4.0 * a1 * a3
                if disc < 0.0:
                    raise StepFailure("complex arc-length constraint roots")
                roots = [(-a2 + sg * np.sqrt(disc)) / (2.0 * a1) for sg in (1.0, -1.0)]
                # pick the root keeping the increment closest to the previous direction
                best = max(roots, key=lambda c: (a + c * dxq) @ Dx + psi2 * (Dlam + c) * Dlam)
                Dx = a + best * dxq
                Dlam = Dlam + best
    except _FAILURES as exc:
        raise StepFailure(str(exc)) from exc
    if not cfg.monolithic:
        cur.history.trial = staggered_sweep(problem, cur, cfg)
    return cur, hist


def continuation(problem, cfg, **kw):
    """Dispatch on ``cfg.continuation``."""
    if cfg.continuation == "arc-length":
        return arc_length(problem, cfg, **kw)
    return load_stepping(problem, cfg, **kw)
