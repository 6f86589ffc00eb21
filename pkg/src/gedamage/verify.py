"""Property suites: derivatives against finite differences, network
constraints, stress normality and the KKT conditions of the return map.

Each check returns a :class:`CheckResult`; :func:`run_all` runs the set used
by ``gedamage verify``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import damage_update as du
from . import materials as mat
from . import networks as nn
from . import tensors as tn
from .fem import element as el
from .fem.mesh import HEX8_NODES
from .materials import ClosedFormParams


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: {self.value:.3e} (limit {self.limit:.1e}){extra}"


# -- random draws -------------------------------------------------------------------


def random_deformation(rng, n, amplitude=0.25):
    """Deformation gradients ``I + H`` with ``det F > 0.3``."""
    out = np.empty((n, 3, 3))
    k = 0
    while k < n:
        F = np.eye(3) + rng.uniform(-amplitude, amplitude, size=(3, 3))
        if np.linalg.det(F) > 0.3:
            out[k] = F
            k += 1
    return out


def random_datadriven(rng, eta_d=1.0, kappa_d=0.1, c_d=0.5, beta_d=2.0, gamma_d=1.0):
    return nn.DataDrivenParams(
        mu_e=rng.uniform(0.5, 5.0),
        lambda_e=rng.uniform(1.0, 20.0),
        psi_iso_net=nn.IcnnWeights.random(rng),
        yield_net=nn.MonotoneNetWeights.random(rng).shifted(),
        eta_d=eta_d, kappa_d=kappa_d, c_d=c_d, beta_d=beta_d, gamma_d=gamma_d,
    )


def random_closedform(rng, **kw):
    base = dict(eta_d=rng.uniform(0.1, 5.0), kappa_d=rng.uniform(0.0, 1.0),
                c_d=rng.uniform(0.1, 2.0), beta_d=rng.uniform(0.5, 10.0))
    base.update(kw)
    return ClosedFormParams(mu_e=rng.uniform(1.0, 30.0), lambda_e=rng.uniform(1.0, 100.0), **base)


def neo_hookean_pk1(F, mu, lam):
    """Closed-form ``P = mu (F - F^-T) + lam ln J F^-T``."""
    Fit = np.swapaxes(np.linalg.inv(F), -1, -2)
    J = np.linalg.det(F)
    return mu * (F - Fit) + lam * np.log(J)[..., None, None] * Fit


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- derivative checks -----------------------------------------------------------------


def check_autodiff(n=100, seed=0, h=1e-6, tol=1e-5, tol_analytic=1e-10):
    """PK1 and the non-local conjugates against central differences, both variants."""
    rng = np.random.default_rng(seed)
    worst_fd, worst_an = 0.0, 0.0
    for k in range(n):
        m = random_closedform(rng) if k % 2 == 0 else random_datadriven(rng)
        F = random_deformation(rng, 1)[0]
        phi = rng.uniform(0.0, 1.0)
        gphi = rng.normal(size=3)
        kappa = rng.uniform(0.0, 1.5)

        P = mat.pk1_stress(F, phi, gphi, kappa, m)
        Pfd = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                dF = np.zeros((3, 3))
                dF[i, j] = h
                Pfd[i, j] = (float(mat.internal_energy(F + dF, phi, gphi, kappa, m))
                             - float(mat.internal_energy(F - dF, phi, gphi, kappa, m))) / (2 * h)
        flux, src = mat.nonlocal_conjugates(F, phi, gphi, kappa, m)
        ffd = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            ffd[i] = (float(mat.internal_energy(F, phi, gphi + e, kappa, m))
                      - float(mat.internal_energy(F, phi, gphi - e, kappa, m))) / (2 * h)
        sfd = -(float(mat.internal_energy(F, phi + h, gphi, kappa, m))
                - float(mat.internal_energy(F, phi - h, gphi, kappa, m))) / (2 * h)
        worst_fd = max(worst_fd, _rel(P, Pfd), _rel(flux, ffd), abs(src - sfd) / max(abs(sfd), 1e-8))

        if m.variant == "closedform":
            m0 = ClosedFormParams(m.mu_e, m.lambda_e, m.eta_d, m.kappa_d)
            f, _ = mat.degradation(kappa, m.eta_d, m.kappa_d)
            Pan = float(f) * neo_hookean_pk1(F, m.mu_e, m.lambda_e)
            worst_an = max(worst_an, _rel(mat.pk1_stress(F, phi, gphi, kappa, m0), Pan))
    return [
        CheckResult("AD vs FD (PK1, flux, source)", worst_fd < tol, worst_fd, tol, f"{n} states"),
        CheckResult("AD vs analytic neo-Hookean PK1", worst_an < tol_analytic, worst_an, tol_analytic),
    ]


def check_element_tangent(seed=0, h=1e-6, tol=1e-5, schemes=("monolithic", "staggered", "local", "local-monolithic")):
    """Element tangent against central differences of the element residual."""
    rng = np.random.default_rng(seed)
    coords = (HEX8_NODES + 1.0) / 2.0 + rng.uniform(-0.05, 0.05, size=(8, 3))
    u = rng.uniform(-0.05, 0.08, size=(8, 3))
    worst = 0.0
    for k, scheme in enumerate(schemes):
        m = random_closedform(rng, kappa_d=0.05) if k % 2 == 0 else random_datadriven(rng, kappa_d=0.05)
        phi = rng.uniform(0.0, 0.2, size=8)
        kn = np.full((1, 8), 0.02)
        local = scheme in ("local", "local-monolithic")
        _, _, K = el.element_kernel(coords, u, phi, kn, m, scheme)

        def res(x):
            Ru, Rp, _ = el.element_kernel(coords, x[:24].reshape(8, 3), x[24:], kn, m, scheme)
            return np.concatenate([Ru, Rp])

        x0 = np.concatenate([u.ravel(), phi])
        cols = range(24) if local else range(32)
        Kfd = np.zeros((32, 32))
        for j in cols:
            e = np.zeros(32)
            e[j] = h
            Kfd[:, j] = (res(x0 + e) - res(x0 - e)) / (2 * h)
        idx = list(cols)
        worst = max(worst, _rel(K[:, idx], Kfd[:, idx]))
    return [CheckResult("element tangent vs FD", worst < tol, worst, tol, ", ".join(schemes))]


def check_normality(draws=20, seed=0, tol=1e-10):
    """``P(F = I) = 0`` for random network draws and closed-form parameters."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        for m in (random_datadriven(rng), random_closedform(rng)):
            kappa = rng.uniform(0.0, 2.0)
            P = mat.pk1_stress(np.eye(3), kappa, np.zeros(3), kappa, m)
            worst = max(worst, float(np.abs(P).max()))
    return [CheckResult("stress-free reference state", worst < tol, worst, tol, f"{draws} draws per variant")]


def check_networks(weights=None, n=10_000, draws=5, seed=0, slack=1e-12):
    """Midpoint convexity of the ICNN and monotonicity of the yield network."""
    rng = np.random.default_rng(seed)
    nets = [(nn.IcnnWeights.random(rng), nn.MonotoneNetWeights.random(rng).shifted()) for _ in range(draws)]
    if weights is not None:
        nets.append((weights.psi_iso_net, weights.yield_net))
    conv = sum(nn.convexity_violations(a, n=n, slack=slack, seed=seed + i) for i, (a, _) in enumerate(nets))
    mono = sum(nn.monotonicity_violations(b, n=n, slack=slack, seed=seed + i) for i, (_, b) in enumerate(nets))
    return [
        CheckResult("ICNN convexity violations", conv == 0, conv, 0, f"{len(nets)} nets x {n} pairs"),
        CheckResult("yield network monotonicity violations", mono == 0, mono, 0, f"{len(nets)} nets x {n} pairs"),
    ]


# -- return map ----------------------------------------------------------------------------


def kkt_states(rng, n, m):
    psi_e = rng.uniform(0.0, 3.0, n)
    kappa_n = rng.uniform(0.0, 2.0, n)
    phi = kappa_n + rng.uniform(-0.5, 1.0, n)
    return psi_e, np.maximum(phi, 0.0), kappa_n


def _bisection_oracle(psi_e, phi, kappa_n, m, local):
    f = lambda k: float(du.yield_residual(k, psi_e, phi, m, local))  # noqa: E731
    if f(kappa_n) <= 0.0:
        return kappa_n
    hi = kappa_n + 1.0
    while f(hi) > 0.0:
        hi = kappa_n + 2.0 * (hi - kappa_n)
    return brentq(f, kappa_n, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def check_kkt(n=10_000, seed=0, tol=1e-10, tol_oracle=1e-9, n_oracle=200, tol_local=1e-12):
    """KKT conditions over random states for both variants.

    Parameters are drawn with ``gamma beta / eta`` of order one so that the
    yield residual is resolvable well below ``tol`` in double precision.  The
    local solve runs at ``tol_local`` so that ``|dlambda Phi_d| <= tol`` also
    holds when ``dlambda`` exceeds one.
    """
    rng = np.random.default_rng(seed)
    models = [
        ClosedFormParams(10.0, 40.0, eta_d=1.0, kappa_d=0.2, c_d=1.0, beta_d=1.0),
        random_datadriven(rng, eta_d=1.0, kappa_d=0.2, c_d=1.0, beta_d=1.0),
    ]
    worst = dict(neg_dlam=0.0, phi=-np.inf, comp=0.0, decrease=0.0, oracle=0.0, local=0.0, status=0)
    per = n // len(models)
    for m in models:
        psi_e, phi, kappa_n = kkt_states(rng, per, m)
        sol = du.solve_kappa(psi_e, phi, kappa_n, m, tol=tol_local)
        worst["status"] += int(np.count_nonzero(sol.status))
        k = sol.kappa
        phi_d = np.asarray(du.yield_residual(k, psi_e, phi, m), float)
        f, _ = mat.degradation(k, m.eta_d, m.kappa_d)
        q = psi_e + m.gamma_d * m.beta_d * (phi - k) / (m.eta_d * f)
        dg = mat.yield_map_derivative(q, m)
        dlam = np.where(sol.yielded, (k - kappa_n) / dg, 0.0)
        worst["neg_dlam"] = max(worst["neg_dlam"], float(np.max(-dlam)))
        worst["phi"] = max(worst["phi"], float(phi_d.max()))
        worst["comp"] = max(worst["comp"], float(np.abs(dlam * phi_d).max()))
        worst["decrease"] = max(worst["decrease"], float(np.max(kappa_n - k)))
        for i in rng.choice(per, size=min(n_oracle, per), replace=False):
            ko = _bisection_oracle(psi_e[i], phi[i], kappa_n[i], m, False)
            worst["oracle"] = max(worst["oracle"], abs(ko - k[i]))

    m = models[0]
    psi_e, phi, kappa_n = kkt_states(rng, per, m)
    sol = du.solve_kappa(psi_e, phi, kappa_n, m, local=True, tol=tol_local)
    expect = np.maximum(psi_e, kappa_n)
    worst["local"] = float(np.abs(sol.kappa - expect).max())
    worst["status"] += int(np.count_nonzero(sol.status))
    return [
        CheckResult("return map status", worst["status"] == 0, worst["status"], 0, f"{n} states"),
        CheckResult("KKT delta_lambda >= 0", worst["neg_dlam"] <= 0.0, max(worst["neg_dlam"], 0.0), 0.0),
        CheckResult("KKT Phi_d <= tol", worst["phi"] <= tol, worst["phi"], tol),
        CheckResult("KKT complementarity", worst["comp"] <= tol, worst["comp"], tol),
        CheckResult("kappa non-decreasing", worst["decrease"] <= 0.0, max(worst["decrease"], 0.0), 0.0),
        CheckResult("local limit kappa = psi_e", worst["local"] <= 1e-12, worst["local"], 1e-12),
        CheckResult("bisection oracle agreement", worst["oracle"] <= tol_oracle, worst["oracle"], tol_oracle),
    ]


def check_cauchy_symmetry(seed=0, n=20, tol=1e-10):
    """Cauchy stress from the kernel is symmetric (frame indifference)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        m = random_datadriven(rng, c_d=0.0, beta_d=0.0)
        F = random_deformation(rng, 1)[0]
        P = mat.pk1_stress(F, 0.0, np.zeros(3), 0.0, m)
        s = tn.cauchy_stress(P, F)
        worst = max(worst, float(np.abs(s - s.T).max() / max(np.abs(s).max(), 1e-300)))
    return [CheckResult("Cauchy stress symmetry", worst < tol, worst, tol)]


def run_all(seed=0, weights=None, quick=False):
    n = 20 if quick else 100
    results = []
    results += check_autodiff(n=n, seed=seed)
    results += check_element_tangent(seed=seed)
    results += check_normality(seed=seed)
    results += check_networks(weights=weights, seed=seed, n=2000 if quick else 10_000)
    results += check_kkt(seed=seed, n=2000 if quick else 10_000)
    results += check_cauchy_symmetry(seed=seed)
    return results
