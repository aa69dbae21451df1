"""Acceptance suite: the ten primary criteria at their stated tolerances and runtime budgets.

Each test records one PASS/FAIL line; the lines are repeated in the pytest terminal summary.
"""

import time

import numpy as np
from scipy.stats import unitary_group

from gsbkit.fock import FockVec, annihilator, annihilator_bound_slack, build_basis, coherent_vector, number_bound_slack
from gsbkit.gsb import (
    SIGMA_X,
    SIGMA_Z,
    SpinSystem,
    assemble_A,
    block_factor,
    block_residual,
    common_eigenbasis,
    hermiticity_residual,
    model_spec,
    preset,
    relative_bound_constant,
    relative_bound_slack,
    validate_interaction,
)
from gsbkit.modes import FormFactor, default_form_factor, geometric_grid, pairing, single_mode, uniform_grid
from gsbkit.renorm import convergence_study, dressing_ladder
from gsbkit.resolvent import ResolventContext, krein_check, krein_resolvent, op_norm, resolvent_vanishing_study

KREIN_Z = (-3.0, -10.0, -1 + 5j)


def rand_factor(rng, grid):
    return FormFactor(rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size))


def test_criterion_1_ccr(criterion):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m, n_max = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        g = uniform_grid(0.0, 1.0 + rng.random(), m) if m > 1 else single_mode(0.5 + rng.random(), rng.random() + 0.1)
        b = build_basis(m, n_max)
        f, h = rand_factor(rng, g), rand_factor(rng, g)
        af, ah = annihilator(f, b, g).dense(), annihilator(h, b, g).dense()
        ccr = af @ ah.conj().T - ah.conj().T @ af - pairing(f, h, g) * np.eye(b.size)
        worst = max(worst, np.abs(ccr[:, b.safe_mask]).max(), np.abs((af @ ah - ah @ af)[:, b.safe_mask]).max())
    elapsed = time.perf_counter() - t0
    criterion(1, worst < 1e-12 and elapsed < 5, f"max safe-sector CCR residual {worst:.2e}, {elapsed:.2f} s")


def random_spec(rng):
    D, m, n_max = int(rng.integers(2, 4)), int(rng.integers(1, 3)), int(rng.integers(2, 4))
    U = unitary_group.rvs(D, random_state=rng)
    Bs = tuple(U @ np.diag(rng.normal(size=D) + 1j * rng.normal(size=D)) @ U.conj().T for _ in range(int(rng.integers(1, 3))))
    X = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    g = uniform_grid(0.0, 2.0, m) if m > 1 else single_mode(1.0 + rng.random())
    fs = [rand_factor(rng, g) for _ in Bs]
    return model_spec(SpinSystem((X + X.conj().T) / 2, Bs), g, fs, n_max)


def test_criterion_2_krein_matches_direct(criterion):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    g = uniform_grid(0.0, 2.0, 2)
    specs = [preset("sigma_x", g, default_form_factor(g), 3)] + [random_spec(rng) for _ in range(20)]
    worst = max(row.rel_error for spec in specs for row in krein_check(ResolventContext.from_spec(spec), KREIN_Z))
    elapsed = time.perf_counter() - t0
    criterion(2, worst < 1e-8 and elapsed < 30, f"max relative error {worst:.2e} over 21 specs, {elapsed:.2f} s")


def test_criterion_3_self_adjointness(criterion):
    rng = np.random.default_rng(303)
    g = uniform_grid(0.0, 2.0, 2)
    specs = [preset("sigma_x", g, default_form_factor(g), 3)] + [random_spec(rng) for _ in range(5)]
    herm = max(hermiticity_residual(s) for s in specs)
    adj = 0.0
    for s in specs:
        ctx = ResolventContext.from_spec(s)
        for z in (-1 + 5j, 2 - 3j, -3.0):
            Rz, Rzb = krein_resolvent(ctx, z).dense(), krein_resolvent(ctx, np.conj(z)).dense()
            adj = max(adj, op_norm(Rz.conj().T - Rzb))
    criterion(3, herm == 0.0 and adj < 1e-10, f"Hermiticity residual {herm:.1e}, adjoint residual {adj:.2e}")


def test_criterion_4_block_decomposition(criterion):
    g = uniform_grid(0.0, 2.0, 3)
    f1 = default_form_factor(g)
    f2 = FormFactor(np.array([0.4, -1.0, 0.25 + 0.5j]))
    spec = preset("sigma_z_multi", g, [f1, f2], 3)
    eig = common_eigenbasis(spec.spin)
    res = block_residual(spec, eig)
    # spin basis |++>, |+->, |-+>, |--> carries f1+f2, f1-f2, -(f1-f2), -(f1+f2)
    want = [f1 + f2, f1 - f2, -(f1 - f2), -(f1 + f2)]
    exact = all(np.array_equal(block_factor(spec, eig, a).values, w.values) for a, w in enumerate(want))
    criterion(4, res < 1e-10 and exact, f"block residual {res:.2e}, f_+/f_- blocks exact: {exact}")


def test_criterion_5_assumption_validator(criterion):
    g = uniform_grid(0.0, 2.0, 2)
    f = default_form_factor(g)
    ok = [validate_interaction(preset(n, g, f, 2).spin).verdict for n in ("sigma_x", "sigma_z")]
    rwa = validate_interaction(preset("rwa", g, f, 2).spin)
    zero = validate_interaction(SpinSystem(SIGMA_Z, (0 * SIGMA_X,)))
    passed = (all(ok) and not rwa.verdict and not all(rwa.normal) and not rwa.joint_kernel_trivial
              and not zero.verdict and not zero.joint_kernel_trivial)
    criterion(5, passed, f"sigma_x/sigma_z pass {ok}, RWA failures {[m.split(':')[0] for m in rwa.failures()]}, "
                         f"zero family joint kernel trivial {zero.joint_kernel_trivial}")


def test_criterion_6_norm_resolvent_convergence(criterion):
    t0 = time.perf_counter()
    g = uniform_grid(0.0, 8.0, 9)
    spec = preset("sigma_x", g, default_form_factor(g), 2)
    # eight rungs just past nodes 0..7, so each rung keeps one more mode
    rep = convergence_study(spec, list(g.nodes[:-1] + 1e-9))
    elapsed = time.perf_counter() - t0
    rungs = {len(rep.for_z(z)) for z in rep.decreasing}
    spread = max(rep.ratio_spread.values())
    passed = rep.verdict and rungs == {8} and all(rep.decreasing.values()) and spread < 3 and elapsed < 120
    criterion(6, passed, f"strictly decreasing {all(rep.decreasing.values())}, max ratio spread {spread:.3f}, "
                         f"{elapsed:.2f} s")


def test_criterion_7_van_hove_self_energy(criterion):
    lad = dressing_ladder(FormFactor([1.0]), single_mode(2.0), [10, 20, 40])
    top = lad.reports[-1]
    err = abs(top.ground_energy + 0.5)
    unit = max(r.unitarity_residual for r in lad.reports)
    passed = abs(top.self_energy + 0.5) < 1e-15 and err < 1e-8 and unit < 1e-12 and lad.decreasing
    criterion(7, passed, f"E = {top.self_energy}, |lambda_min + 1/2| = {err:.1e}, unitarity {unit:.1e}, "
                         f"conjugation residuals {[f'{r.conjugation_residual:.1e}' for r in lad.reports]}")


def test_criterion_8_resolvent_vanishing(criterion):
    g = geometric_grid(1.0, 4096.0, 13, "linear")
    ctx = ResolventContext.from_spec(preset("sigma_x", g, default_form_factor(g), 2))
    zs = [-(2.0**n) for n in range(3, 11)]
    reps = [resolvent_vanishing_study(ctx, s, zs) for s in (0.5, 1.0)]
    passed = all(r.within_bound and r.exponent_ok for r in reps)
    detail = ", ".join(f"s={r.s}: exponent {r.exponent:.3f} (want {r.expected_exponent})" for r in reps)
    criterion(8, passed, f"{detail}, within bound {all(r.within_bound for r in reps)}")


def test_criterion_9_number_and_relative_bounds(criterion):
    rng = np.random.default_rng(909)
    g = uniform_grid(0.0, 3.0, 3, mass=0.5)
    f = default_form_factor(g)
    spec = preset("sigma_x_multi", g, [f, 2 * f], 2)
    b = build_basis(3, 3)
    slack = np.inf
    for _ in range(100):
        psi = FockVec(b, rng.normal(size=b.size) + 1j * rng.normal(size=b.size))
        slack = min(slack, number_bound_slack(psi, g), annihilator_bound_slack(f, psi, g))
        Psi = rng.normal(size=spec.dim) + 1j * rng.normal(size=spec.dim)
        slack = min(slack, relative_bound_slack(spec, Psi))
    c = relative_bound_constant(spec)
    criterion(9, slack >= -1e-10, f"min slack {slack:.3e} on 100 vectors, relative bound constant {c:.4f}")


def test_criterion_10_kernel_and_range(criterion):
    rng = np.random.default_rng(1010)
    g = uniform_grid(0.0, 2.0, 3)
    f1, f2 = default_form_factor(g), FormFactor([1.0, -1.0, 0.5])
    spec = preset("sigma_z_multi", g, [f1, f2], 4)
    # g orthogonal to both factors in the quadrature pairing
    F_mat = np.array([f.values * g.weights for f in (f1, f2)]).conj()
    h = FormFactor(np.linalg.svd(F_mat)[2][-1].conj())
    eps = coherent_vector(h, spec.basis, g).amps
    u = rng.normal(size=spec.spin.dim) + 1j * rng.normal(size=spec.spin.dim)
    out = (assemble_A(spec).dense() @ np.kron(u, eps)).reshape(spec.spin.dim, -1)[:, spec.basis.safe_mask]
    kernel = np.abs(out).max()
    k = FormFactor([0.2, -0.1 + 0.3j, 0.4])
    c = pairing(f1, k, g)
    eps_k = coherent_vector(k, spec.basis, g).amps
    rng_res = np.abs((annihilator(f1, spec.basis, g).dense() @ (eps_k / c) - eps_k)[spec.basis.safe_mask]).max()
    criterion(10, kernel < 1e-11 and rng_res < 1e-11, f"kernel residual {kernel:.1e}, range residual {rng_res:.1e}")
