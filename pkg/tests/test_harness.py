import json

import numpy as np
import pytest

from ndfem.assembly import assemble
from ndfem.harness import (
    CSV_COLUMNS,
    compute_errors,
    eoc,
    run_adaptive_study,
    run_uniform_study,
    write_csv,
    write_json,
)
from ndfem.harness import _tangential_trace_norm
from ndfem.problem import get_problem
from ndfem.solver import solve
from ndfem.spaces import build_system, interpolate


def _interpolated_triple(system, spec):
    iu = interpolate(system, "u", spec.exact.u)
    ig = interpolate(system, "g", spec.exact.grad_u)
    ih = interpolate(system, "H", spec.exact.hess_u)
    return np.concatenate([iu, ig, ih])


def test_eoc_first_order():
    h = [1.0, 0.5, 0.25]
    rates = eoc([1.0, 0.5, 0.25], h)
    assert rates == pytest.approx([1.0, 1.0], abs=1e-14)


def test_eoc_second_order():
    h = np.array([1.0, 0.5, 0.25, 0.125])
    rates = eoc(h**2, h)
    assert rates == pytest.approx([2.0, 2.0, 2.0], abs=1e-14)


def test_eoc_flat_errors():
    rates = eoc([3.0, 3.0], [1.0, 0.5])
    assert rates == pytest.approx([0.0], abs=1e-14)


def test_eoc_rejects_bad_input():
    with pytest.raises(ValueError):
        eoc([1.0], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 0.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [1.0, -0.5])


def test_interpolant_of_quadratic_has_tiny_errors():
    # the quadratic triple lies in the k=2 spaces, so only roundoff remains
    spec = get_problem("tp-poly")
    system = build_system(spec.build_mesh(3), 2, bc_mode="penalty-u")
    vec = _interpolated_triple(system, spec)
    err = compute_errors(system, spec, vec)
    for key in ("err_L2_u", "err_H1_u", "err_H1_g", "err_L2_H", "err_Y"):
        assert err[key] <= 1e-9, (key, err[key])


def test_err_Y_recomposition():
    spec = get_problem("tp-lower-order")
    system = build_system(spec.build_mesh(3), 1, bc_mode="strong-zero-u")
    rng = np.random.default_rng(5)
    vec = rng.standard_normal(system.n_dofs)
    err = compute_errors(system, spec, vec)
    combined = err["err_H1_u"] ** 2 + err["err_H1_g"] ** 2 + err["err_L2_H"] ** 2
    assert err["err_Y"] ** 2 == pytest.approx(combined, rel=1e-14)


def test_compute_errors_validates_inputs():
    spec = get_problem("tp-lower-order")
    system = build_system(spec.build_mesh(2), 1, bc_mode="strong-zero-u")
    with pytest.raises(ValueError):
        compute_errors(system, spec, np.zeros(3))


def test_tangential_trace_zero_when_constrained():
    # nodal zeroing on axis-aligned edges kills the whole degree-k trace
    spec = get_problem("tp-lower-order")
    for k in (1, 2):
        system = build_system(spec.build_mesh(3), k, bc_mode="strong-zero-u",
                              tangential_mode="strong-axis-aligned")
        rng = np.random.default_rng(11 + k)
        g = rng.standard_normal((system.n_scalar, 2))
        g[system.constrained_g] = 0.0
        assert _tangential_trace_norm(system, g) <= 1e-12


def test_tangential_trace_positive_when_relaxed():
    spec = get_problem("tp-lower-order")
    system = build_system(spec.build_mesh(3), 1, bc_mode="strong-zero-u")
    rng = np.random.default_rng(3)
    g = rng.standard_normal((system.n_scalar, 2))
    assert _tangential_trace_norm(system, g) > 0.1


def test_uniform_study_first_order_rates():
    record = run_uniform_study("tp-lower-order", 1, theta=0.5, levels=4)
    assert record.mode == "uniform"
    assert [row["level"] for row in record.rows] == [0, 1, 2, 3]
    assert record.rows[0]["eoc_H1_u"] is None
    final = record.rows[-1]
    assert 0.75 <= final["eoc_H1_u"] <= 1.25
    assert 0.75 <= final["eoc_Y"] <= 1.25
    ndofs = [row["ndof"] for row in record.rows]
    assert ndofs == sorted(ndofs) and ndofs[0] < ndofs[-1]


def test_error_halves_with_mesh_size():
    record = run_uniform_study("tp-nonzero-bc", 1, levels=2, n0=8)
    ratio = record.rows[0]["err_H1_u"] / record.rows[1]["err_H1_u"]
    assert 1.7 <= ratio <= 2.3


def test_hessianless_variant_converges_too():
    full = run_uniform_study("tp-nonzero-bc", 2, levels=3, form="full")
    nohess = run_uniform_study("tp-nonzero-bc", 2, levels=3, form="hessianless")
    assert 1.6 <= full.rows[-1]["eoc_H1_u"] <= 2.4
    assert 1.6 <= nohess.rows[-1]["eoc_H1_u"] <= 2.4

    # same mesh, different bilinear forms: iterates must not coincide
    spec = get_problem("tp-nonzero-bc")
    system = build_system(spec.build_mesh(4), 2, bc_mode="penalty-u")
    xf, _ = solve(*_assembled(system, spec, "full"))
    xh, _ = solve(*_assembled(system, spec, "hessianless"))
    nu = system.n_u
    assert np.max(np.abs(xf[:nu] - xh[:nu])) > 1e-8


def _assembled(system, spec, form):
    asm = assemble(system, spec, form=form)
    return asm.matrix, asm.rhs


def test_csv_schema(tmp_path):
    record = run_uniform_study("tp-lower-order", 1, levels=2)
    path = tmp_path / "study.csv"
    write_csv(record, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    first = lines[1].split(",")
    second = lines[2].split(",")
    assert len(first) == len(CSV_COLUMNS)
    assert len(second) == len(CSV_COLUMNS)
    # EOC columns are the last four: empty on the first level, filled after
    assert first[-4:] == ["", "", "", ""]
    assert all(cell != "" for cell in second[-4:])
    assert first[0] == "tp-lower-order"
    assert first[1] == "1"
    assert first[3] == "uniform"


def test_json_mirrors_csv(tmp_path):
    record = run_uniform_study("tp-lower-order", 1, levels=2)
    path = tmp_path / "study.json"
    write_json(record, path)
    rows = json.loads(path.read_text())
    assert len(rows) == 2
    for row in rows:
        assert list(row.keys()) == CSV_COLUMNS
    assert rows[0]["eoc_Y"] is None
    assert isinstance(rows[0]["ndof"], int)
    assert rows[1]["eoc_H1_u"] == pytest.approx(record.rows[1]["eoc_H1_u"])


def test_csv_output_is_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_csv(run_uniform_study("tp-lower-order", 1, levels=2), a)
    write_csv(run_uniform_study("tp-lower-order", 1, levels=2), b)
    assert a.read_bytes() == b.read_bytes()


def test_adaptive_study_record():
    record, state = run_adaptive_study("tp-singular", 1, beta=0.3,
                                       tol=1e-12, maxiter=3)
    assert state.stop_reason == "maxiter"
    assert record.mode == "adaptive"
    assert len(record.rows) == 3
    ndofs = [row["ndof"] for row in record.rows]
    assert all(b > a for a, b in zip(ndofs, ndofs[1:]))
    assert record.rows[0]["eoc_Y"] is None
    assert isinstance(record.rows[-1]["eoc_Y"], float)
    assert all(row["err_Y"] > 0 for row in record.rows)
    assert all(row["eta_total"] > 0 for row in record.rows)


def test_uniform_study_validates_levels():
    with pytest.raises(ValueError):
        run_uniform_study("tp-lower-order", 1, levels=1)
