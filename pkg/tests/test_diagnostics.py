import math

import numpy as np
import pytest

from regkrylov import diagnostics, problems, rng, solvers
from regkrylov.diagnostics import LCurvePoint
from regkrylov.exceptions import ContractViolation, NumericalError
from regkrylov.krylov import START_FILTERED, START_RESIDUAL, lanczos
from regkrylov.linalg import SymmetricMatrix, TridiagonalRect


# ---------------------------------------------------------------------------
# harmonic Ritz values


def test_harmonic_ritz_one_dimensional_hand_value():
    got = diagnostics.harmonic_ritz(TridiagonalRect([1.5], [0.5]))
    assert abs(got[0] - 5.0 / 3.0) < 1e-14


def test_harmonic_ritz_at_breakdown_equals_eigenvalues():
    lams = np.array([3.0, 2.2, 1.5, -1.0, 0.5])
    q, _ = np.linalg.qr(rng.normal(4, 25).reshape(5, 5))
    a = SymmetricMatrix(dense=(q * lams) @ q.T)
    fact = lanczos(a, START_RESIDUAL, rng.normal(5, 5), 5)
    assert fact.breakdown and fact.k == 5
    theta = diagnostics.harmonic_ritz(fact.tridiag)
    assert np.abs(np.sort(theta) - np.sort(lams)).max() < 1e-10


def test_harmonic_ritz_ordering(get_problem):
    prob = get_problem("shaw", 64)
    fact = lanczos(prob.a, START_RESIDUAL, prob.b_hat, 6)
    theta = diagnostics.harmonic_ritz(fact.tridiag)
    assert np.all(np.diff(np.abs(theta)) <= 1e-14 * np.abs(theta[0]))


# ---------------------------------------------------------------------------
# filter factors


def test_filter_is_one_at_a_root():
    f = diagnostics.filter_factors(np.array([2.0, 1.0]), np.array([2.0, 0.3]))
    assert f[0] == 1.0


def test_filter_is_zero_at_zero_eigenvalue():
    f = diagnostics.filter_factors(np.array([2.0, 1.0]), np.array([0.0]))
    assert f[0] == 0.0


def test_zero_harmonic_ritz_value_rejected():
    with pytest.raises(NumericalError):
        diagnostics.filter_factors(np.array([1.0, 0.0]), np.array([1.0]))


def test_filter_reconstruction_matches_minres(get_problem, get_decomp):
    # the k = 5 identity on shaw; deeper k live in the acceptance suite
    prob = get_problem("shaw", 128)
    decomp = get_decomp("shaw", 128)
    nz = problems.add_noise(prob, 1e-3, seed=1)
    tr = solvers.minres_trace(prob.a, nz.b, 5, x_true=prob.x_true)
    theta = diagnostics.harmonic_ritz(tr.factorization.tridiag)
    f = diagnostics.filter_factors(theta, decomp.eigenvalues)
    x_ff = diagnostics.filtered_solution(decomp, nz.b, f)
    gap = np.linalg.norm(x_ff - tr.solutions[-1]) / np.linalg.norm(tr.solutions[-1])
    assert gap < 1e-6


@pytest.mark.parametrize("name,k_max", [("phillips", 10), ("shaw", 7)])
def test_residual_polynomial_reproduces_minres_residual(get_problem, get_decomp, name, k_max):
    # the polynomial with harmonic Ritz roots, normalized at zero, applied
    # spectrally to b reproduces the residual norm
    prob = get_problem(name, 128)
    decomp = get_decomp(name, 128)
    nz = problems.add_noise(prob, 1e-3, seed=0)
    tr = solvers.minres_trace(prob.a, nz.b, k_max, x_true=prob.x_true)
    c = decomp.project(nz.b)
    for k in range(1, tr.iterations + 1):
        theta = diagnostics.harmonic_ritz(tr.factorization.tridiag.head(k))
        chi = np.prod(1.0 - decomp.eigenvalues[:, None] / theta[None, :], axis=1)
        rnorm = np.linalg.norm(chi * c)
        assert abs(rnorm - tr.residual_norms[k - 1]) <= 1e-8 * tr.residual_norms[k - 1]


# ---------------------------------------------------------------------------
# rank-k approximation error


def test_lowrank_error_vanishes_at_exact_capture():
    lams = np.array([0.9, 0.5, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0])
    q, _ = np.linalg.qr(rng.normal(9, 64).reshape(8, 8))
    a = SymmetricMatrix(dense=(q * lams) @ q.T)
    fact = lanczos(a, START_FILTERED, rng.normal(10, 8), 6)
    assert fact.breakdown and fact.k == 3
    gam = diagnostics.lowrank_error_sequence(a, fact)
    assert gam[-1] <= 1e-12 * lams[0]


def test_lowrank_error_lower_bound(get_problem, get_decomp):
    prob = get_problem("shaw", 128)
    decomp = get_decomp("shaw", 128)
    nz = problems.add_noise(prob, 1e-3, seed=3)
    fact = lanczos(prob.a, START_FILTERED, nz.b, 15)
    gam = diagnostics.lowrank_error_sequence(prob.a, fact)
    for k in range(1, len(gam) + 1):
        assert gam[k - 1] >= decomp.sigmas[k] - 1e-10 * decomp.sigmas[0]


def test_lowrank_error_near_optimality(get_problem, get_decomp):
    # rank-k errors stay within a factor 10 of the optimum before round-off;
    # a x10 margin over the floor keeps boundary fuzz out of the sweep
    for name in ("shaw", "foxgood", "gravity", "phillips"):
        prob = get_problem(name, 128)
        decomp = get_decomp(name, 128)
        nz = problems.add_noise(prob, 1e-3, seed=0)
        fact = lanczos(prob.a, START_FILTERED, nz.b, 20)
        floor = diagnostics.roundoff_floor(128, decomp.sigmas[0])
        gam = diagnostics.lowrank_error_sequence(prob.a, fact, floor=floor)
        checked = 0
        for k in range(1, len(gam) + 1):
            if min(gam[k - 1], decomp.sigmas[k]) <= 10 * floor:
                continue
            checked += 1
            assert gam[k - 1] / decomp.sigmas[k] <= 10.0, (name, k)
        assert checked >= 5, name


def test_rank_error_sandwiched_by_angle_bound():
    spec = problems.SyntheticSpec(n=32, decay="severe", alpha=1.0, beta=1.0,
                                  basis="random", seed=3)
    prob, decomp = problems.generate_synthetic(spec)
    nz = problems.add_noise(prob, 1e-3, seed=1)
    fact = lanczos(prob.a, START_FILTERED, nz.b, 8)
    gam = diagnostics.lowrank_error_sequence(prob.a, fact)
    sig1 = decomp.sigmas[0]
    for k in range(1, len(gam) + 1):
        sine = diagnostics.angle_sine(decomp, k, mode="direct", fact=fact)
        assert decomp.sigmas[k] - 1e-10 * sig1 <= gam[k - 1]
        assert gam[k - 1] <= decomp.sigmas[k] + sig1 * sine + 1e-8 * sig1


# ---------------------------------------------------------------------------
# coupling matrix and angles


def test_coupling_single_trailing_row():
    spec = problems.SyntheticSpec(n=5, decay="severe", alpha=0.8, beta=1.0)
    prob, decomp = problems.generate_synthetic(spec)
    b = prob.b_hat
    k = 4
    delta = diagnostics.tail_coupling(decomp, b, k)
    lams = decomp.eigenvalues
    c = decomp.project(b)
    lagrange = []
    for i in range(k):
        val = 1.0
        for j in range(k):
            if j != i:
                val *= (lams[k] - lams[j]) / (lams[i] - lams[j])
        lagrange.append(val)
    want = np.array([lams[k] * c[k] * lagrange[i] / (lams[i] * c[i]) for i in range(k)])
    assert delta.shape == (1, 4)
    assert np.abs(delta[0] - want).max() < 1e-12 * max(np.abs(want).max(), 1e-30)


def test_coupling_zero_tail_gives_zero_angle():
    spec = problems.SyntheticSpec(n=8, decay="severe", alpha=1.0, beta=1.0)
    _, decomp = problems.generate_synthetic(spec)
    coeffs = np.zeros(8)
    coeffs[:3] = [1.0, 0.5, 0.25]
    b = decomp.lincomb(coeffs)
    delta = diagnostics.tail_coupling(decomp, b, 3)
    assert np.all(delta == 0.0)
    assert diagnostics.angle_sine(decomp, 3, mode="formula", b=b) == 0.0


def test_coupling_spans_krylov_subspace():
    # columns of V [I; Delta] span K_k(A, Ab): check against explicit
    # Gram-Schmidt on the power basis
    spec = problems.SyntheticSpec(n=32, decay="severe", alpha=1.0, beta=1.0,
                                  basis="random", seed=11)
    prob, decomp = problems.generate_synthetic(spec)
    nz = problems.add_noise(prob, 1e-2, seed=4)
    k = 4
    delta = diagnostics.tail_coupling(decomp, nz.b, k)
    z = decomp.lincomb(np.vstack([np.eye(k), delta]))  # n x k in eigen coords
    z = np.column_stack([decomp.lincomb(np.concatenate([np.eye(k)[:, j], delta[:, j]]))
                         for j in range(k)])
    zq, _ = np.linalg.qr(z)
    cols = []
    w = nz.b.copy()
    for _ in range(k):
        w = prob.a.matvec(w)
        cols.append(w.copy())
    kq, _ = np.linalg.qr(np.column_stack(cols))
    from regkrylov.linalg import canonical_angles

    assert canonical_angles(zq, kq)[0] <= 1e-8


def test_coupling_preconditions():
    spec = problems.SyntheticSpec(n=8, decay="severe", alpha=1.0, beta=1.0)
    prob, decomp = problems.generate_synthetic(spec)
    with pytest.raises(ContractViolation):
        diagnostics.tail_coupling(decomp, prob.b_hat, 13)
    coeffs = np.zeros(8)
    coeffs[0] = 1.0  # second leading coefficient at noise level
    b = decomp.lincomb(coeffs)
    with pytest.raises(NumericalError):
        diagnostics.tail_coupling(decomp, b, 3)


def test_angle_formula_monotone_in_coupling_scale():
    delta = rng.normal(3, 12).reshape(4, 3)
    prev = -1.0
    for t in (0.1, 1.0, 10.0, 1e8):
        val = diagnostics.angle_sine(None, 3, mode="formula", coupling=t * delta)
        assert prev < val <= 1.0
        prev = val


def test_angle_direct_vs_formula():
    spec = problems.SyntheticSpec(n=32, decay="severe", alpha=1.0, beta=1.0,
                                  basis="random", seed=7)
    prob, decomp = problems.generate_synthetic(spec)
    nz = problems.add_noise(prob, 1e-3, seed=2)
    fact = lanczos(prob.a, START_FILTERED, nz.b, 8)
    for k in range(1, 9):
        direct = diagnostics.angle_sine(decomp, k, mode="direct", fact=fact)
        formula = diagnostics.angle_sine(decomp, k, mode="formula", b=nz.b)
        assert abs(direct - formula) <= 1e-8, k


# ---------------------------------------------------------------------------
# coefficient profiles


def test_tail_head_ratio_decreasing_coefficients():
    lams = np.array([1.0, 0.5, 0.25, 0.125])
    decomp = __import__("regkrylov.linalg", fromlist=["SpectralDecomposition"]).SpectralDecomposition(
        lams, v=np.eye(4)
    )
    b = np.array([1.0, 0.5, 0.25, 0.125])
    profile = diagnostics.coefficient_profile(decomp, b, np.zeros(4))
    assert np.allclose(profile.tail_head_ratio, [0.5, 0.5, 0.5])


def test_tail_head_ratio_flat_coefficients():
    from regkrylov.linalg import SpectralDecomposition

    decomp = SpectralDecomposition(np.array([2.0, 1.5, 1.0]), v=np.eye(3))
    profile = diagnostics.coefficient_profile(decomp, np.ones(3), np.zeros(3))
    assert np.allclose(profile.tail_head_ratio, 1.0)


def test_tail_head_ratio_matches_picard_model():
    spec = problems.SyntheticSpec(n=10, decay="severe", alpha=0.8, beta=1.0)
    prob, decomp = problems.generate_synthetic(spec)
    profile = diagnostics.coefficient_profile(decomp, prob.b_hat, np.zeros(10))
    want = (decomp.sigmas[1:] / decomp.sigmas[:-1]) ** 2
    assert np.abs(profile.tail_head_ratio - want).max() < 1e-12


def test_tail_head_ratio_near_one_past_transition():
    # flat eigenbasis noise: past the transition every coefficient sits at
    # the noise scale, so the tail/head ratio is pinned near one (white
    # noise would put min-of-normals tails far outside any fixed band)
    spec = problems.SyntheticSpec(n=48, decay="severe", alpha=0.7, beta=1.0,
                                  basis="random", seed=5)
    prob, decomp = problems.generate_synthetic(spec)
    e = decomp.lincomb(np.full(48, 1e-3))
    k0 = problems.transition_index(decomp, prob.b_hat, e)
    assert 0 < k0 < 38
    profile = diagnostics.coefficient_profile(decomp, prob.b_hat, e)
    window = profile.tail_head_ratio[k0 : k0 + 10]
    assert np.all((window >= 0.1) & (window <= 10.0))


def test_zero_denominator_flags_infinite_ratio():
    from regkrylov.linalg import SpectralDecomposition

    decomp = SpectralDecomposition(np.array([2.0, 1.0, 0.5]), v=np.eye(3))
    profile = diagnostics.coefficient_profile(decomp, np.array([0.0, 1.0, 1.0]), np.zeros(3))
    assert math.isinf(profile.tail_head_ratio[0])


# ---------------------------------------------------------------------------
# decay table


def test_decay_table_inequalities_hold(get_problem, get_decomp):
    prob = get_problem("shaw", 128)
    decomp = get_decomp("shaw", 128)
    nz = problems.add_noise(prob, 1e-3, seed=2)
    fact = lanczos(prob.a, START_FILTERED, nz.b, 24)
    floor = diagnostics.roundoff_floor(128, decomp.sigmas[0])
    gam = diagnostics.lowrank_error_sequence(prob.a, fact, floor=floor)
    rows, violations = diagnostics.lanczos_decay_table(fact, gam, decomp.sigmas, floor=floor)
    assert rows and not violations


def test_phillips_offdiagonal_tracks_sigma(get_problem, get_decomp):
    # the off-diagonals decay at the singular-value rate; individual entries
    # swing in an early transient, so the tracking claim is about the bulk
    prob = get_problem("phillips", 256)
    decomp = get_decomp("phillips", 256)
    nz = problems.add_noise(prob, 1e-3, seed=0)
    fact = lanczos(prob.a, START_FILTERED, nz.b, 40)
    beta = fact.tridiag.beta
    ratios = beta[1:39] / decomp.sigmas[1:39]
    assert 0.1 <= np.median(ratios) <= 10.0
    assert np.all(ratios[8:] >= 0.01) and np.all(ratios[8:] <= 100.0)


# ---------------------------------------------------------------------------
# L-curve corner and semi-convergence


def _pts(coords):
    return [LCurvePoint(x, y, i + 1) for i, (x, y) in enumerate(coords)]


def test_corner_of_exact_right_angle():
    corner = diagnostics.lcurve_corner(_pts([(2, 0), (1, 0), (1, 1), (1, 2)]))
    assert corner == 2


def test_collinear_points_have_no_corner():
    assert diagnostics.lcurve_corner(_pts([(3, 0), (2, 1), (1, 2), (0, 3)])) is None


def test_numerically_flat_curve_has_no_corner():
    pts = _pts([(5, 0.0), (3, 1e-4), (1, 0.0), (0, 2e-4)])
    assert diagnostics.lcurve_corner(pts) is None


def test_too_few_points():
    assert diagnostics.lcurve_corner(_pts([(1, 0), (0, 1)])) is None


def test_corner_tracks_semiconvergence_on_deriv2(get_problem):
    prob = get_problem("deriv2", 1024)
    for seed in range(3):
        nz = problems.add_noise(prob, 1e-3, seed=seed)
        tr = solvers.mr2_trace(prob.a, nz.b, 25, x_true=prob.x_true)
        corner = diagnostics.lcurve_corner(diagnostics.lcurve_points(tr))
        semi = diagnostics.semiconvergence_index(tr)
        assert corner is not None and abs(corner - semi) <= 1


def test_semiconvergence_trivial_cases():
    tr = solvers.IterateTrace(
        solver="x", solutions=[None] * 4,
        residual_norms=np.zeros(4), solution_norms=np.zeros(4),
        relative_errors=np.array([1.0, 0.5, 0.2, 0.4]), matvecs=np.zeros(4),
    )
    assert diagnostics.semiconvergence_index(tr) == 3
    tr.relative_errors = np.array([1.0, 0.5, 0.2, 0.1])
    assert diagnostics.semiconvergence_index(tr) == 4
    tr.relative_errors = None
    with pytest.raises(ContractViolation):
        diagnostics.semiconvergence_index(tr)


def test_roundoff_floor_value():
    from regkrylov.linalg import EPS

    assert diagnostics.roundoff_floor(100, 2.0) == 10 * 100 * EPS * 2.0


def test_report_serialization():
    report = diagnostics.DiagnosticsReport(lowrank_error=[1.0, 0.5])
    doc = report.to_json()
    assert '"lowrank_error"' in doc and '"sigma_next"' not in doc
