import numpy as np
import pytest
import scipy.sparse as sp

from analytic_problems import build_problems
from coulombmpc import (
    ConeDims,
    ConicProblem,
    ConicSolver,
    SolverSettings,
    project_cone,
    project_psd,
    solve,
)
from coulombmpc.conic import sym_to_vec, vec_dim, vec_to_sym
from coulombmpc.solver import INFEASIBLE_SUSPECT, MAX_ITERS, OPTIMAL

TIGHT = SolverSettings(eps_abs=1e-9, eps_rel=1e-9, max_iters=100000)


# -- PSD projection -----------------------------------------------------------

def test_project_psd_clamps_diagonal():
    assert np.allclose(project_psd(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]), atol=1e-14)


def test_project_psd_idempotent_on_psd_input():
    rng = np.random.default_rng(0)
    root = rng.normal(size=(4, 4))
    mat = root @ root.T
    assert np.allclose(project_psd(mat), mat, rtol=0, atol=1e-12 * np.abs(mat).max())


def test_project_psd_is_frobenius_nearest_on_grid():
    # 2x2 oracle: sweep a dense grid of PSD candidates and confirm none is
    # closer in Frobenius norm than the eigenvalue-clamped projection
    rng = np.random.default_rng(1)
    grid = np.linspace(0.0, 3.0, 40)
    offd = np.linspace(-3.0, 3.0, 81)
    for _ in range(5):
        raw = rng.normal(size=(2, 2))
        sym = raw + raw.T
        proj = project_psd(sym)
        best = np.inf
        for a in grid:
            for d in grid:
                for c in offd:
                    if a * d >= c * c:  # PSD test for 2x2
                        cand = np.array([[a, c], [c, d]])
                        best = min(best, np.linalg.norm(cand - sym))
        assert np.linalg.norm(proj - sym) <= best + 1e-6


def test_project_psd_rejects_nonfinite():
    with pytest.raises(ValueError):
        project_psd(np.array([[np.nan, 0.0], [0.0, 1.0]]))


# -- blockwise cone projection ----------------------------------------------------

def test_project_cone_nonneg_passthrough():
    cones = ConeDims(nonneg=4)
    v = np.array([0.5, 1.0, 0.0, 2.0])
    assert np.array_equal(project_cone(v, cones), v)


def test_project_cone_zero_block():
    cones = ConeDims(zero=3)
    assert np.array_equal(project_cone(np.array([1.0, -2.0, 3.0]), cones), np.zeros(3))


def test_project_cone_mixed_blocks_match_individual():
    rng = np.random.default_rng(2)
    cones = ConeDims(zero=2, nonneg=3, psd=(2, 3, 2))
    v = rng.normal(size=cones.total)
    out = project_cone(v, cones)
    assert np.array_equal(out[:2], np.zeros(2))
    assert np.array_equal(out[2:5], np.maximum(v[2:5], 0.0))
    off = 5
    for side in (2, 3, 2):
        d = vec_dim(side)
        expected = project_psd(vec_to_sym(v[off : off + d]))
        assert np.allclose(vec_to_sym(out[off : off + d]), expected, atol=1e-12)
        off += d


def test_project_cone_dimension_mismatch():
    with pytest.raises(ValueError):
        project_cone(np.zeros(5), ConeDims(nonneg=4))


# -- solve on analytic problems ---------------------------------------------------

@pytest.mark.parametrize("name,prob,expected", build_problems())
def test_analytic_problem(name, prob, expected):
    result = solve(prob, TIGHT)
    assert result.status == OPTIMAL
    assert result.objective == pytest.approx(expected, abs=1e-6)
    # KKT residuals recomputed from scratch, not trusting solver bookkeeping
    primal = prob.A @ result.z + result.s - prob.b
    grad = prob.c + prob.A.T @ result.y
    if prob.P is not None:
        grad = grad + prob.P @ result.z
    assert np.abs(primal).max() <= 1e-6
    assert np.abs(grad).max() <= 1e-6


@pytest.mark.parametrize("name,prob,expected", build_problems())
def test_returned_slack_in_cone(name, prob, expected):
    result = solve(prob, TIGHT)
    s = result.s
    cones = prob.cones
    assert np.abs(s[: cones.zero]).max(initial=0.0) <= 1e-8
    nn = s[cones.zero : cones.zero + cones.nonneg]
    if nn.size:
        assert nn.min() >= -1e-8
    off = cones.zero + cones.nonneg
    for side in cones.psd:
        block = vec_to_sym(s[off : off + vec_dim(side)])
        assert np.linalg.eigvalsh(block).min() >= -1e-8
        off += vec_dim(side)


def test_min_x_at_least_one_example():
    prob = ConicProblem(
        c=np.array([1.0]), A=sp.csc_matrix([[-1.0]]), b=np.array([-1.0]),
        cones=ConeDims(nonneg=1),
    )
    result = solve(prob, SolverSettings())
    assert result.z[0] == pytest.approx(1.0, abs=1e-5)


def test_determinism_identical_iterates():
    _, prob, _ = build_problems()[7]
    a = solve(prob, SolverSettings())
    b = solve(prob, SolverSettings())
    assert a.iterations == b.iterations
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.y, b.y)


def test_max_iters_status():
    _, prob, _ = build_problems()[7]
    result = solve(prob, SolverSettings(max_iters=1))
    assert result.status == MAX_ITERS
    assert result.iterations == 1


def test_nonfinite_data_rejected():
    prob = ConicProblem(
        c=np.array([np.inf]), A=sp.csc_matrix([[-1.0]]), b=np.array([-1.0]),
        cones=ConeDims(nonneg=1),
    )
    with pytest.raises(ValueError):
        solve(prob)


def test_infeasible_problem_flagged_or_exhausted():
    # x <= -1 and x >= 1 cannot hold; no certificates, just a heuristic label
    prob = ConicProblem(
        c=np.array([1.0]),
        A=sp.csc_matrix([[1.0], [-1.0]]),
        b=np.array([-1.0, -1.0]),
        cones=ConeDims(nonneg=2),
    )
    result = solve(prob, SolverSettings(max_iters=8000))
    assert result.status in (INFEASIBLE_SUSPECT, MAX_ITERS)
    assert result.primal_residual > 1e-3


def test_warm_start_resumes_from_solution():
    _, prob, _ = build_problems()[8]
    solver = ConicSolver()
    first = solver.solve(prob, SolverSettings())
    again = solver.solve(prob, SolverSettings(), warm=first)
    assert again.status == OPTIMAL
    assert again.iterations <= max(first.iterations // 4, 2)


def test_warm_start_after_rhs_change_converges_faster():
    _, prob, _ = build_problems()[8]
    solver = ConicSolver()
    first = solver.solve(prob, SolverSettings())
    nudged = prob.with_rhs(prob.b + np.where(np.arange(prob.b.size) == 0, 1e-3, 0.0))
    warm = solver.solve(nudged, SolverSettings(), warm=first)
    cold = ConicSolver().solve(nudged, SolverSettings())
    assert warm.status == OPTIMAL
    assert warm.iterations < cold.iterations


def test_log_callback_streams_residuals():
    _, prob, _ = build_problems()[0]
    seen = []
    solve(prob, SolverSettings(), log_callback=lambda k, rp, rd: seen.append((k, rp, rd)))
    assert seen and seen[0][0] == 1
    assert all(np.isfinite(rp) and np.isfinite(rd) for _, rp, rd in seen)


def test_equilibration_toggle_same_answer():
    _, prob, expected = build_problems()[3]
    on = solve(prob, SolverSettings(eps_abs=1e-8, eps_rel=1e-8))
    off = solve(prob, SolverSettings(eps_abs=1e-8, eps_rel=1e-8, equilibrate=False))
    assert on.objective == pytest.approx(expected, abs=1e-5)
    assert off.objective == pytest.approx(expected, abs=1e-5)


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(eps_abs=0.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iters=0)
    with pytest.raises(ValueError):
        SolverSettings(alpha=2.5)
