"""End-to-end acceptance checks.

One test per headline guarantee.  Each prints a single [PASS] line with
its runtime (visible under pytest -s; the pytest verdict itself is the
pass/fail signal).  Tolerances and runtime budgets are asserted, not
just reported.
"""

import math
import time

import numpy as np

from ndfem.adapt import estimate, mark
from ndfem.assembly import assemble, energy_value
from ndfem.harness import compute_errors, run_adaptive_study, run_uniform_study
from ndfem.mesh import build_rectangle_mesh
from ndfem.problem import (
    check_cordes,
    compute_constants,
    cordes_ratio_special,
    get_problem,
)
from ndfem.solver import solve
from ndfem.spaces import build_system, evaluate, make_quadrature


def _solve_problem(name, k, n, theta=0.5):
    """One discrete solve following the study drivers' boundary handling."""
    spec = get_problem(name, theta=theta)
    bc = "strong-zero-u" if spec.zero_bc else "penalty-u"
    pen = {"penalty_scale": "edge-inverse"} if bc == "penalty-u" else {}
    system = build_system(spec.build_mesh(n), k, bc_mode=bc)
    asm = assemble(system, spec, **pen)
    x, _ = solve(asm.matrix, asm.rhs)
    return spec, system, asm, x


def test_cordes_condition_thresholds():
    t0 = time.perf_counter()

    lower = get_problem("tp-lower-order")
    assert check_cordes(lower, 0.22).holds
    assert not check_cordes(lower, 0.23).holds

    peak = get_problem("tp-peak")
    assert check_cordes(peak, 0.04).holds
    assert not check_cordes(peak, 0.05).holds

    # diag(1,1,5) in three dimensions misses the b=0, c=0 bound for every
    # admissible epsilon: the ratio 27/49 already exceeds the epsilon->0
    # limit 1/(d-1)
    ratio = float(cordes_ratio_special(np.diag([1.0, 1.0, 5.0])[None])[0])
    eps = np.linspace(1e-9, 1.0 - 1e-9, 10001)
    assert np.all(ratio > 1.0 / (3.0 - 1.0 + eps))

    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"[PASS] cordes-condition-thresholds ({elapsed:.2f}s < 5s)")


def test_polynomial_solution_reproduced_exactly():
    t0 = time.perf_counter()

    spec, system, asm, x = _solve_problem("tp-poly", k=2, n=4)
    energy = energy_value(system, spec, x,
                          penalty_weight=asm.penalty_weight,
                          penalty_scale=asm.penalty_scale)
    errors = compute_errors(system, spec, x)
    assert energy <= 1e-10
    assert errors["err_Y"] <= 1e-8

    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"[PASS] polynomial-reproduction E_theta={energy:.2e} "
          f"err_Y={errors['err_Y']:.2e} ({elapsed:.2f}s < 10s)")


def test_uniform_convergence_rates_smooth_problems():
    t0 = time.perf_counter()

    configs = [("tp-nonzero-bc", 0.5)]
    configs += [("tp-lower-order", th) for th in (0.0, 0.5, 1.0)]
    failures = []
    for k, levels in ((1, 4), (2, 3)):
        lo, hi = k - 0.25, k + 0.4
        for name, theta in configs:
            record = run_uniform_study(name, k, theta=theta, levels=levels)
            final = record.rows[-1]
            for col in ("eoc_H1_u", "eoc_H1_g", "eoc_L2_H"):
                rate = final[col]
                if not lo <= rate <= hi:
                    failures.append(
                        f"{name} k={k} theta={theta:g} {col}={rate:.3f} "
                        f"not in [{lo}, {hi}]")
    assert not failures, "\n".join(failures)

    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    print(f"[PASS] uniform-convergence-rates ({elapsed:.1f}s < 300s)")


def test_matrix_and_estimator_properties():
    t0 = time.perf_counter()

    # assembled matrices are symmetric
    for name, k, n in (("tp-lower-order", 1, 4), ("tp-nonzero-bc", 2, 3)):
        _, _, asm, _ = _solve_problem(name, k, n)
        diff = asm.matrix - asm.matrix.T
        gap = np.abs(diff.data).max() if diff.nnz else 0.0
        assert gap <= 1e-12 * np.abs(asm.matrix.data).max()

    # with strongly imposed zero boundary values the summed squared
    # indicators equal the energy of the computed solution
    spec, system, _, x = _solve_problem("tp-lower-order", k=1, n=4)
    ind = estimate(system, spec, x)
    energy = energy_value(system, spec, x)
    assert abs(ind.eta_total_sq - energy) <= 1e-12 * max(1.0, energy)

    # gradient-field Jacobian bound for 100 random zero-tangential-trace
    # fields: |D psi|^2 <= (div psi)^2 + (rot psi)^2 in the integral sense
    for k in (1, 2):
        mesh = build_rectangle_mesh((0.0, 0.0), (1.0, 1.0), 4)
        system = build_system(mesh, k, tangential_mode="strong-axis-aligned")
        rng = np.random.default_rng(700 + k)
        free = ~system.constrained_g.reshape(-1)
        quad = make_quadrature(2 * k)
        areas = mesh.signed_areas()
        for _ in range(50):
            gvec = np.zeros(system.n_g)
            gvec[free] = rng.standard_normal(int(free.sum()))
            D2 = div2 = rot2 = 0.0
            for t in range(mesh.num_triangles):
                J = evaluate(system, gvec, "g", t, quad.xy).gradient
                w = areas[t] * quad.weights
                D2 += float(w @ (J**2).sum(axis=(-2, -1)))
                div2 += float(w @ (J[:, 0, 0] + J[:, 1, 1]) ** 2)
                rot2 += float(w @ (J[:, 1, 0] - J[:, 0, 1]) ** 2)
            assert D2 <= div2 + rot2 + 1e-10 * max(1.0, D2)

    # Hessian-by-Laplacian bound for 50 random strong-space pairs,
    # lambda = rho = 1, at each theta
    lam = rho = 1.0
    for k, n in ((1, 3), (2, 2)):
        mesh = build_rectangle_mesh((0.0, 0.0), (1.0, 1.0), n)
        system = build_system(mesh, k, bc_mode="strong-zero-u",
                              tangential_mode="strong-axis-aligned")
        rng = np.random.default_rng(900 + k)
        quad = make_quadrature(2 * k)
        areas = mesh.signed_areas()
        free_u = ~system.constrained_u
        free_g = ~system.constrained_g.reshape(-1)
        for _ in range(25):
            uvec = np.zeros(system.n_u)
            uvec[free_u] = rng.standard_normal(int(free_u.sum()))
            gvec = np.zeros(system.n_g)
            gvec[free_g] = rng.standard_normal(int(free_g.sum()))
            D2 = phi2 = rot2 = dlam2 = graddiff2 = 0.0
            mix = {th: 0.0 for th in (0.0, 0.5, 1.0)}
            for t in range(mesh.num_triangles):
                w = areas[t] * quad.weights
                su = evaluate(system, uvec, "u", t, quad.xy)
                sg = evaluate(system, gvec, "g", t, quad.xy)
                J = sg.gradient
                D2 += float(w @ (J**2).sum(axis=(-2, -1)))
                phi2 += float(w @ su.value**2)
                rot2 += float(w @ (J[:, 1, 0] - J[:, 0, 1]) ** 2)
                dlam2 += float(w @ (J[:, 0, 0] + J[:, 1, 1] - lam * su.value) ** 2)
                graddiff2 += float(w @ ((su.gradient - sg.value) ** 2).sum(-1))
                for th in mix:
                    blend = th * sg.value + (1.0 - th) * su.gradient
                    mix[th] += float(w @ (blend**2).sum(-1))
            for th in (0.0, 0.5, 1.0):
                lhs = (1.0 - rho / 2.0) * (D2 + 2.0 * lam * mix[th]
                                           + lam**2 * phi2)
                rhs = (rot2 + dlam2
                       + (th**2 + (1.0 - th) ** 2) * (lam / rho) * graddiff2)
                assert lhs <= rhs + 1e-10 * max(1.0, rhs)

    # marking takes exactly ceil(beta N) triangles and they dominate
    rng = np.random.default_rng(11)
    eta_sq = rng.random(137)
    for beta in (0.1, 0.3, 0.5):
        ids = mark(eta_sq, beta)
        assert len(ids) == math.ceil(beta * len(eta_sq))
        unmarked = np.setdiff1d(np.arange(len(eta_sq)), ids)
        assert eta_sq[ids].min() >= eta_sq[unmarked].max()

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"[PASS] matrix-and-estimator-properties ({elapsed:.1f}s < 60s)")


def test_estimator_sandwiched_by_error():
    t0 = time.perf_counter()

    spec = get_problem("tp-lower-order")
    constants = compute_constants(spec, spec.epsilon)
    record = run_uniform_study("tp-lower-order", 1, levels=3)
    for row in record.rows:
        err_sq = row["err_Y"] ** 2
        eta_sq = row["eta_total"] ** 2
        assert constants.C_coercive_full * err_sq <= eta_sq
        assert eta_sq <= constants.C_continuity * err_sq

    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    print(f"[PASS] estimator-error-sandwich ({elapsed:.1f}s < 120s)")


def _uniform_err_at_ndof(name, k, target):
    """err_Y of the coarsest dyadic uniform mesh with ndof >= target."""
    n = 4
    while True:
        spec, system, asm, x = _solve_problem(name, k, n)
        if system.total_ndof >= target:
            return compute_errors(system, spec, x)["err_Y"], system.total_ndof
        n *= 2


def test_adaptive_beats_uniform_refinement():
    t0 = time.perf_counter()

    cases = [("tp-singular", 2, 1.0), ("tp-peak", 1, 3.0), ("tp-peak", 2, 3.0)]
    summary = []
    for name, k, factor in cases:
        record, state = run_adaptive_study(name, k, beta=0.3, tol=1e-14,
                                           maxiter=12)
        final = record.rows[-1]
        uniform_err, uniform_ndof = _uniform_err_at_ndof(name, k, final["ndof"])
        assert final["err_Y"] < uniform_err
        assert uniform_err >= factor * final["err_Y"]
        summary.append(f"{name} k={k}: {uniform_err / final['err_Y']:.1f}x")

        if name == "tp-peak":
            mesh = state.meshes[-1]
            centroids = mesh.vertices[mesh.triangles].mean(axis=1)
            near = np.hypot(centroids[:, 0] - 0.5, centroids[:, 1] - 0.117)
            assert float((near <= 0.2).mean()) >= 0.5

    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    print(f"[PASS] adaptive-beats-uniform {', '.join(summary)} "
          f"({elapsed:.1f}s < 600s)")


def test_uniform_refinement_stalls_on_singular_problem():
    t0 = time.perf_counter()

    record = run_uniform_study("tp-singular", 2, levels=3)
    rate = record.rows[-1]["eoc_Y"]
    assert rate <= 0.8

    elapsed = time.perf_counter() - t0
    print(f"[PASS] uniform-rate-loss-on-singularity eoc_Y={rate:.3f} "
          f"({elapsed:.1f}s)")
