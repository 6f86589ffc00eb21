import numpy as np
import pytest
import scipy.sparse as sp

from gedamage.fem import element as el
from gedamage.fem.assembly import DofMap, LinearSolveError, linear_solve
from gedamage.fem.mesh import HEX8_NODES, box_mesh
from gedamage.fem.solver import (
    ArcLengthError, Problem, SolverConfig, arc_length, assemble, load_stepping, newton_step,
    solve_increment,
)
from gedamage.materials import ClosedFormParams
from gedamage.studies import single_element_problem, tension_problem

CUBE = HEX8_NODES * 0.5 + 0.5
DAMAGING = ClosedFormParams.from_young(42.0, 0.45, eta_d=2.0, kappa_d=0.05, c_d=0.1, beta_d=50.0)
ELASTIC = ClosedFormParams.from_young(42.0, 0.45, eta_d=1.0, kappa_d=1e6, c_d=0.1, beta_d=50.0)


def _kernel(x, kappa_n, m, scheme):
    Ru, Rp, K = el.element_kernel(CUBE, x[:24].reshape(8, 3), x[24:], kappa_n, m, scheme=scheme)
    return np.concatenate([Ru, Rp]), K


class TestShapeFunctions:
    def test_centroid(self):
        N, _ = el.shape_functions(np.zeros(3))
        np.testing.assert_allclose(N, 0.125, rtol=0, atol=1e-16)

    def test_kronecker(self):
        for a, xi in enumerate(HEX8_NODES):
            N, _ = el.shape_functions(xi)
            np.testing.assert_array_equal(N, np.eye(8)[a])

    def test_partition_of_unity(self, rng):
        for xi in rng.uniform(-1, 1, (50, 3)):
            N, dN = el.shape_functions(xi)
            assert abs(N.sum() - 1.0) < 1e-14
            assert np.abs(dN.sum(axis=0)).max() < 1e-14

    def test_gradient_fd(self, rng):
        xi, h = rng.uniform(-0.9, 0.9, 3), 1e-6
        _, dN = el.shape_functions(xi)
        for j in range(3):
            e = np.eye(3)[j] * h
            fd = (el.shape_functions(xi + e)[0] - el.shape_functions(xi - e)[0]) / (2 * h)
            np.testing.assert_allclose(dN[:, j], fd, atol=1e-9)

    def test_volume(self):
        g = el.element_geometry(np.array([CUBE * [2.0, 3.0, 0.5]]))
        assert g.wdetJ.sum() == pytest.approx(3.0, rel=1e-14)


class TestElementKernel:
    def test_virgin_equilibrium(self):
        R, _ = _kernel(np.zeros(32), 0.0, DAMAGING, "monolithic")
        assert np.abs(R).max() == 0.0

    def test_uniform_state_phi_residual_vanishes(self):
        u = (CUBE * [0.1, -0.02, -0.02]).ravel()
        phi = 0.3
        x = np.concatenate([u, np.full(8, phi)])
        R, _ = _kernel(x, phi, DAMAGING, "staggered")
        assert np.abs(R[24:]).max() < 1e-13

    @pytest.mark.parametrize("scheme", ["monolithic", "staggered", "local", "local-monolithic"])
    def test_tangent_matches_fd(self, rng, scheme):
        x = np.concatenate([0.05 * rng.standard_normal(24) + (CUBE * [0.15, 0, 0]).ravel(),
                            rng.uniform(0.0, 0.3, 8)])
        kappa_n = rng.uniform(0.0, 0.05, 8)
        _, K = _kernel(x, kappa_n, DAMAGING, scheme)
        h = 1e-6
        Kfd = np.empty((32, 32))
        for j in range(32):
            e = np.zeros(32)
            e[j] = h
            Kfd[:, j] = (_kernel(x + e, kappa_n, DAMAGING, scheme)[0] - _kernel(x - e, kappa_n, DAMAGING, scheme)[0]) / (2 * h)
        if scheme.startswith("local"):
            Kfd[24:], Kfd[:, 24:] = 0.0, 0.0
            K = K.copy()
            K[24:], K[:, 24:] = 0.0, 0.0
        assert np.abs(K - Kfd).max() <= 1e-5 * np.abs(Kfd).max()

    def test_inverted_element_rejected(self):
        u = np.zeros((8, 3))
        u[6] = [-3.0, -3.0, -3.0]
        with pytest.raises(el.ElementFailure):
            el.element_kernel(CUBE, u, np.zeros(8), 0.0, DAMAGING)


@pytest.mark.skipif(el._qp_core_fast is None, reason="compiled kernel not built")
class TestBackends:
    @pytest.mark.parametrize("local", [False, True])
    def test_compiled_matches_python(self, rng, local):
        from gedamage.verify import random_datadriven

        n = 300
        F = np.eye(3) + 0.2 * rng.standard_normal((n, 3, 3))
        F[np.linalg.det(F) <= 0.1] = np.eye(3)
        phi, g, k = rng.uniform(0, 1, n), rng.standard_normal((n, 3)), rng.uniform(0, 1, n)
        for m in (DAMAGING, random_datadriven(rng)):
            a = el.qp_response(F, phi, g, k, m, local=local, backend="python")
            b = el.qp_response(F, phi, g, k, m, local=local, backend="compiled")
            for x, y in zip(a, b):
                np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12 * np.abs(x).max())


class TestAssembly:
    def test_single_element_equals_element_system(self, rng):
        mesh = box_mesh(1, 1, 1, 1, 1, 1)
        prob = Problem(mesh, DAMAGING)
        state = prob.initial_state()
        state.x[:] = 0.03 * rng.standard_normal(state.x.size)
        cfg = SolverConfig(scheme="staggered")
        R, K, _, _ = assemble(prob, state, cfg)
        ed = prob.edofs[0]
        xe = state.x[ed]
        coords = mesh.nodes[mesh.elements[0]]
        Ru, Rp, Ke = el.element_kernel(coords, xe[:24].reshape(8, 3), xe[24:], 0.0, DAMAGING, scheme="staggered")
        np.testing.assert_allclose(R[ed], np.concatenate([Ru, Rp]), atol=1e-13)
        np.testing.assert_allclose(K.toarray()[np.ix_(ed, ed)], Ke, atol=1e-10)

    def test_pattern_symmetric(self):
        prob = Problem(box_mesh(2, 2, 1, 2, 2, 1), DAMAGING)
        _, K, _, _ = assemble(prob, prob.initial_state(), SolverConfig())
        P = (K != 0).astype(int) + 0
        P = sp.csr_matrix((np.ones(K.nnz), K.indices, K.indptr), shape=K.shape)
        assert (P != P.T).nnz == 0

    def test_dofmap(self):
        dm = DofMap.for_mesh(box_mesh(1, 1, 1, 1, 1, 1))
        assert dm.n_dofs == 32
        np.testing.assert_array_equal(dm.phi_dofs([0, 2]), [3, 11])
        u, phi = dm.split(np.arange(32.0))
        assert u.shape == (8, 3) and phi[1] == 7.0


class TestPatch:
    def test_uniform_stretch(self):
        mesh = box_mesh(1, 1, 1, 2, 2, 2)
        dm = DofMap.for_mesh(mesh)
        X = mesh.nodes
        boundary = np.flatnonzero(np.any((X < 1e-9) | (X > 1 - 1e-9), axis=1))
        grad = np.diag([0.3, -0.08, -0.08])
        dofs = np.concatenate([dm.u_dofs(boundary, i) for i in range(3)])
        vals = np.concatenate([(X[boundary] @ grad.T)[:, i] for i in range(3)])
        prob = Problem(mesh, DAMAGING, prescribed_dofs=dofs, prescribed_values=vals)
        traj = load_stepping(prob, SolverConfig(steps=5, newton_abs_tol=1e-30))
        assert traj.status == "completed"
        st = traj.records[-1].state
        _, _, out, _ = assemble(prob, st, SolverConfig(), update_kappa=False)
        k = st.history.kappa
        assert k.min() > DAMAGING.kappa_d
        for a in (out.P, k):
            assert np.abs(a - a.reshape(-1, *a.shape[2:])[0]).max() <= 1e-8 * np.abs(a).max()
        centre = np.flatnonzero(np.all(np.abs(X - 0.5) < 1e-9, axis=1))
        np.testing.assert_allclose(st.u[centre], (X[centre] @ grad.T), atol=1e-12)


class TestLinearSolve:
    def test_identity(self, rng):
        r = rng.standard_normal(20)
        np.testing.assert_allclose(linear_solve(sp.identity(20), r), r)

    def test_spd(self, rng):
        A = sp.random(100, 100, density=0.05, random_state=3)
        K = A @ A.T + sp.identity(100)
        r = rng.standard_normal(100)
        x = linear_solve(K, r)
        assert np.linalg.norm(K @ x - r) <= 1e-10 * np.linalg.norm(r)
        xs = linear_solve(K, r, scale=True)
        assert np.linalg.norm(K @ xs - r) <= 1e-10 * np.linalg.norm(r)

    def test_singular(self):
        K = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(LinearSolveError):
            linear_solve(K, np.ones(2))

    def test_nonfinite(self):
        with pytest.raises(LinearSolveError):
            linear_solve(sp.identity(2), np.array([1.0, np.nan]))


class TestNewton:
    def test_quadratic_convergence(self):
        prob = single_element_problem(ELASTIC, displacement=0.3)
        cfg = SolverConfig(scheme="monolithic", newton_tol=1e-14, newton_abs_tol=1e-30, predictor=False)
        _, hist = solve_increment(prob, prob.initial_state(), 1.0, cfg)
        r = np.array(hist)
        assert len(r) >= 4
        ratio = r[2:] / r[1:-1] ** 2
        assert np.all(ratio[r[2:] > 1e-10 * r[0]] < 1.0)

    def test_converged_state_zero_correction(self):
        prob = single_element_problem(DAMAGING, displacement=0.2)
        cfg = SolverConfig(newton_tol=1e-14, newton_abs_tol=1e-30)
        st, _ = solve_increment(prob, prob.initial_state(), 1.0, cfg)
        _, (_, dx) = newton_step(prob, st, cfg)
        assert dx <= 1e-10 * np.abs(st.x).max()

    def test_staggered_underestimates_monolithic(self):
        mesh = box_mesh(10, 10, 1, 4, 4, 1)
        m = ClosedFormParams.from_young(210.0, 0.3, eta_d=0.002, kappa_d=0.1, c_d=1.0, beta_d=1000.0)
        d = {}
        for scheme in ("monolithic", "staggered"):
            traj = load_stepping(tension_problem(mesh, m, 8.0), SolverConfig(scheme=scheme, steps=10))
            d[scheme] = traj.column("max_d")
        assert np.all(d["staggered"] <= d["monolithic"] + 1e-12)
        assert d["monolithic"][-1] > 0.0


class TestLoadStepping:
    def test_zero_load(self):
        prob = single_element_problem(DAMAGING, displacement=0.0)
        traj = load_stepping(prob, SolverConfig(steps=3))
        assert traj.status == "completed" and len(traj) == 3
        for rec in traj.records:
            assert np.abs(rec.state.x).max() == 0.0 and np.abs(rec.state.history.kappa).max() == 0.0

    def test_monotone_kappa_and_residuals(self):
        prob = single_element_problem(DAMAGING, displacement=0.2)
        cfg = SolverConfig(scheme="monolithic", steps=20)
        traj = load_stepping(prob, cfg)
        assert traj.status == "completed"
        k = np.array([r.state.history.kappa for r in traj.records])
        assert np.all(np.diff(k, axis=0) >= 0.0)
        assert k[-1].max() > DAMAGING.kappa_d
        for rec in traj.records:
            r = rec.residuals
            assert r[-1] <= max(cfg.newton_tol * r[0], cfg.newton_abs_tol)

    def test_halving_reaches_full_load(self):
        prob = single_element_problem(DAMAGING, displacement=0.3)
        calls = []

        def fail_once(step, lam):
            calls.append((step, lam))
            return step == 2 and len([c for c in calls if c[0] == 2]) == 1

        traj = load_stepping(prob, SolverConfig(steps=4), inject_failure=fail_once)
        assert traj.status == "completed"
        assert traj.load_factors[-1] == 1.0
        step2 = [lam for s, lam in calls if s == 2]
        assert step2[0] == pytest.approx(0.5) and step2[1] == pytest.approx(0.375)
        ref = load_stepping(single_element_problem(DAMAGING, displacement=0.3), SolverConfig(steps=4))
        np.testing.assert_allclose(traj.column("max_kappa"), ref.column("max_kappa"), rtol=1e-6)

    def test_abort_after_max_halvings(self):
        prob = single_element_problem(DAMAGING, displacement=0.3)
        traj = load_stepping(prob, SolverConfig(steps=2, max_halvings=2), inject_failure=lambda s, lam: s == 2)
        assert traj.status == "aborted" and len(traj) == 1

    def test_natural_boundary_condition(self):
        mesh = box_mesh(4, 2, 1, 4, 2, 1)
        prob = tension_problem(mesh, DAMAGING, 0.6)
        cfg = SolverConfig(steps=5, newton_abs_tol=1e-30)
        traj = load_stepping(prob, cfg)
        st = traj.records[-1].state
        R, _, out, _ = assemble(prob, st, cfg)
        rphi = R[prob.dofmap.phi_dofs()]
        scale = np.abs(prob.assembler.vector(np.abs(out.R))[prob.dofmap.phi_dofs()]).max()
        assert st.history.kappa.max() > DAMAGING.kappa_d
        assert np.abs(rphi).max() <= 1e-8 * scale


class TestArcLength:
    def test_zero_radius_rejected(self):
        prob = single_element_problem(DAMAGING, force=1.0)
        with pytest.raises(ArcLengthError):
            arc_length(prob, SolverConfig(arc_radius=0.0))

    def test_matches_load_stepping_when_hardening(self):
        m = ClosedFormParams.from_young(42.0, 0.45, eta_d=1.0, kappa_d=1e6)
        cfg = SolverConfig(scheme="local-monolithic", steps=8, arc_max_steps=8, newton_tol=1e-12,
                           newton_abs_tol=1e-30)
        arc = arc_length(single_element_problem(m, force=8.0), cfg)
        assert len(arc) == 8
        lam = arc.load_factors
        assert np.all(np.diff(lam) > 0.0)
        ls = load_stepping(single_element_problem(m, force=8.0), cfg, load_factors=lam)
        np.testing.assert_allclose(arc.column("control"), ls.column("control"), rtol=1e-6)
