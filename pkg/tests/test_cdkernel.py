import numpy as np
import pytest
from scipy import integrate

from momentlab.cdkernel import (
    IllConditionedGramError,
    KernelWeights,
    ReferenceMeasure,
    graded_decompose,
    harmonic_bound_coefficient,
    harmonic_constant_bound,
    joint_moment,
    kernel_eval,
    moment_sequence,
    operator_apply,
    operator_matrix,
    orthonormal_basis,
    reference_moments,
    upper_bound_kernel,
    upper_bound_sdp,
)
from momentlab.momentkit import riesz_apply
from momentlab.polycore import Polynomial, monomial_basis
from momentlab.sdpcore import SolveOptions
from momentlab.semialg import SimpleSetProduct, make_catalog_set

def coeff_dist(p, q):
    diff = p - q
    return max((abs(c) for c in diff.terms.values()), default=0.0)


BALL1 = ReferenceMeasure("ball", 1, 1.0)
PROD2 = SimpleSetProduct((("ball", 1, 1.0), ("ball", 1, 1.0)))


# ----------------------------------------------------------------------------
# reference moments against adaptive quadrature


def test_ball_1d_moments_quadrature():
    norm, _ = integrate.quad(lambda x: (1 - x * x) ** -0.5, -1, 1)
    for a in range(9):
        want, _ = integrate.quad(lambda x: x ** a * (1 - x * x) ** -0.5, -1, 1)
        assert reference_moments("ball", 1, 1.0, (a,)) == pytest.approx(want / norm, abs=1e-10)
    assert reference_moments("ball", 1, 1.0, (2,)) == pytest.approx(0.5)
    assert reference_moments("ball", 1, 1.0, (0,)) == 1.0
    assert reference_moments("ball", 1, 1.0, (3,)) == 0.0


def test_ball_2d_moments_quadrature():
    def w(y, x):
        return (1 - x * x - y * y) ** -0.5

    def moment(ax, ay):
        val, _ = integrate.dblquad(
            lambda y, x: x ** ax * y ** ay * w(y, x), -1, 1,
            lambda x: -np.sqrt(max(0.0, 1 - x * x)) + 1e-12,
            lambda x: np.sqrt(max(0.0, 1 - x * x)) - 1e-12)
        return val

    norm = moment(0, 0)
    for ax, ay in [(2, 0), (0, 2), (2, 2), (4, 0)]:
        assert reference_moments("ball", 2, 1.0, (ax, ay)) == pytest.approx(
            moment(ax, ay) / norm, abs=1e-6)


def test_simplex_moments_quadrature():
    # n = 1 simplex with the Dirichlet(1/2,1/2) measure is arcsine on [0, 1]
    norm, _ = integrate.quad(lambda x: (x * (1 - x)) ** -0.5, 0, 1)
    for a in range(6):
        want, _ = integrate.quad(lambda x: x ** a * (x * (1 - x)) ** -0.5, 0, 1)
        assert reference_moments("simplex", 1, 1.0, (a,)) == pytest.approx(want / norm, abs=1e-9)

    def w2(y, x):
        return (x * y * (1 - x - y)) ** -0.5

    def moment2(ax, ay):
        val, _ = integrate.dblquad(lambda y, x: x ** ax * y ** ay * w2(y, x),
                                   1e-12, 1 - 1e-12, lambda x: 1e-12,
                                   lambda x: max(1e-12, 1 - x - 1e-12))
        return val

    norm2 = moment2(0, 0)
    for ax, ay in [(1, 0), (1, 1), (2, 0)]:
        assert reference_moments("simplex", 2, 1.0, (ax, ay)) == pytest.approx(
            moment2(ax, ay) / norm2, abs=1e-5)


def test_hypercube_moments_quadrature():
    norm, _ = integrate.quad(lambda x: (1 - x * x) ** -0.5, -1, 1)
    for a in range(8):
        want, _ = integrate.quad(lambda x: x ** a * (1 - x * x) ** -0.5, -1, 1)
        assert reference_moments("hypercube", 1, 1.0, (a,)) == pytest.approx(want / norm, abs=1e-10)
    assert reference_moments("hypercube", 2, 1.0, (2, 4)) == pytest.approx(0.5 * 3 / 8)


def test_scaled_moments():
    assert reference_moments("ball", 1, 2.0, (2,)) == pytest.approx(2.0)  # R^2 * 1/2
    assert reference_moments("simplex", 1, 3.0, (1,)) == pytest.approx(1.5)


def test_unsupported_kind():
    with pytest.raises(ValueError):
        ReferenceMeasure("sphere", 2, 1.0)


# ----------------------------------------------------------------------------
# orthonormal bases


def test_chebyshev_basis_coefficients():
    kb = orthonormal_basis(BALL1, 2)
    s2 = np.sqrt(2.0)
    assert kb.polynomial(0) == Polynomial.constant(1, 1.0)
    p1 = kb.polynomial(1)
    assert p1.coefficient((1,)) == pytest.approx(s2)
    p2 = kb.polynomial(2)
    assert p2.coefficient((2,)) == pytest.approx(2 * s2)
    assert p2.coefficient((0,)) == pytest.approx(-s2)


def test_orthonormality_independent_route():
    # Gram recomputed through polynomial products and the exact moment oracle
    for measure, D in [(BALL1, 8), (PROD2, 4)]:
        kb = orthonormal_basis(measure, D)
        y = moment_sequence(kb.measures, 2 * D)
        s = len(kb.basis)
        G = np.empty((s, s))
        polys = [kb.polynomial(i) for i in range(s)]
        for i in range(s):
            for j in range(i, s):
                G[i, j] = G[j, i] = riesz_apply(y, polys[i] * polys[j])
        assert np.abs(G - np.eye(s)).max() < 1e-8


def test_degree_of_basis_elements():
    kb = orthonormal_basis(BALL1, 6)
    for i, alpha in enumerate(kb.basis.exponents):
        assert kb.polynomial(i).degree == sum(alpha)


def test_product_basis_element():
    kb = orthonormal_basis(PROD2, 2)
    idx = kb.basis.index((1, 1))
    assert coeff_dist(kb.polynomial(idx), Polynomial(2, {(1, 1): 2.0})) < 1e-12
    assert kb.profiles[idx] == (1, 1)


def test_gram_failure_reports_degree():
    class Degenerate(ReferenceMeasure):
        def moment(self, alpha):  # moments of a Dirac at 0.5: rank-1 Gram
            return 0.5 ** sum(alpha)

    bad = Degenerate("ball", 1, 1.0)
    with pytest.raises(IllConditionedGramError) as err:
        orthonormal_basis(bad, 3)
    assert err.value.degree == 1


# ----------------------------------------------------------------------------
# kernels and the graded operator


def test_kernel_eval_examples():
    kb = orthonormal_basis(BALL1, 2)
    assert kernel_eval(kb, [1.0], [1.0], degree=(0, 2)) == pytest.approx(5.0)
    assert kernel_eval(kb, [0.3], [0.8], degree=0) == pytest.approx(1.0)
    # reproducing at sample points via explicit sum
    vals = kb.eval_rows(np.array([[0.2], [0.7]]))
    manual = float(vals[0] @ vals[1])
    assert kernel_eval(kb, [0.2], [0.7]) == pytest.approx(manual)


def test_reproducing_property():
    rng = np.random.default_rng(0)
    kb = orthonormal_basis(BALL1, 8)
    y = moment_sequence(kb.measures, 16)
    polys = [kb.polynomial(i) for i in range(len(kb.basis))]
    mb = monomial_basis(1, 8)
    for _ in range(20):
        p = Polynomial.from_vector(mb, rng.normal(size=len(mb)))
        x = rng.uniform(-1, 1, size=1)
        # quadrature of C(x, y) p(y) dmu(y) through exact basis integrals
        val = sum(float(kb.eval_rows(x[None, :])[0][i]) * riesz_apply(y, polys[i] * p)
                  for i in range(len(polys)))
        assert val == pytest.approx(p(x), abs=1e-8)


def test_operator_identity_with_unit_weights():
    kb = orthonormal_basis(PROD2, 4)
    rng = np.random.default_rng(1)
    mb = monomial_basis(2, 4)
    f = Polynomial.from_vector(mb, rng.normal(size=len(mb)))
    out = operator_apply(kb, None, f)
    assert coeff_dist(out, f) < 1e-10


def test_operator_single_eigenspace_scaling():
    kb = orthonormal_basis(BALL1, 2)
    w = KernelWeights((np.array([1.0, 0.5, 1.0]),))
    x = Polynomial.variable(1, 0)
    half = operator_apply(kb, w, x)
    assert coeff_dist(half, Polynomial(1, {(1,): 0.5})) < 1e-12
    back = operator_apply(kb, w, half, invert=True)
    assert coeff_dist(back, x) < 1e-9


def test_operator_round_trip():
    kb = orthonormal_basis(PROD2, 4)
    w = KernelWeights((np.array([1.0, 0.9, 0.8, 0.7, 0.6]),
                       np.array([1.0, 0.95, 0.85, 0.75, 0.65])))
    rng = np.random.default_rng(2)
    mb = monomial_basis(2, 4)
    f = Polynomial.from_vector(mb, rng.normal(size=len(mb)))
    round_trip = operator_apply(kb, w, operator_apply(kb, w, f), invert=True)
    assert coeff_dist(round_trip, f) < 1e-9


def test_graded_decompose_examples():
    kb1 = orthonormal_basis(BALL1, 2)
    parts = graded_decompose(kb1, Polynomial(1, {(0,): 1.0, (1,): 1.0}))
    assert coeff_dist(parts[(0,)], Polynomial.constant(1, 1.0)) < 1e-12
    assert coeff_dist(parts[(1,)], Polynomial.variable(1, 0)) < 1e-12

    sq = graded_decompose(kb1, Polynomial(1, {(2,): 1.0}))
    assert coeff_dist(sq[(0,)], Polynomial.constant(1, 0.5)) < 1e-12
    assert coeff_dist(sq[(2,)], Polynomial(1, {(2,): 1.0, (0,): -0.5})) < 1e-12

    kb2 = orthonormal_basis(PROD2, 2)
    cross = graded_decompose(kb2, Polynomial(2, {(1, 1): 1.0}))
    assert list(cross) == [(1, 1)]


def test_graded_components_sum_back():
    kb = orthonormal_basis(PROD2, 4)
    rng = np.random.default_rng(3)
    mb = monomial_basis(2, 4)
    f = Polynomial.from_vector(mb, rng.normal(size=len(mb)))
    total = sum(graded_decompose(kb, f).values(), Polynomial.zero(2))
    assert coeff_dist(total, f) < 1e-10


def test_weights_validation_and_diagnostics():
    with pytest.raises(ValueError):
        KernelWeights((np.array([0.9, 1.0]),))  # lambda_0 != 1
    with pytest.raises(ValueError):
        KernelWeights((np.array([1.0, 0.4]),))  # below 1/2
    w = KernelWeights.ones(2, 6)
    assert w.kernel_degree == 6
    diag = w.diagnostics([1, 1], k=2, r=3)
    assert diag[0][0] == 0.0
    assert diag[0][1] == pytest.approx(harmonic_bound_coefficient(1, 2) / 9)
    assert harmonic_bound_coefficient(1, 2) == pytest.approx(32.0)


def test_eigenstructure_matrix():
    # the operator matrix on monomials is similar to a diagonal matrix with
    # the per-profile eigenvalues; verify through the P-basis coordinates
    kb = orthonormal_basis(PROD2, 3)
    w = KernelWeights((np.array([1.0, 0.8, 0.7, 0.6]),
                       np.array([1.0, 0.9, 0.85, 0.55])))
    M = operator_matrix(kb, w)
    # the operator is C^T Lambda C^{-T} on monomial coefficients, so
    # conjugating the other way recovers the diagonal
    C = kb.coeffs
    D = np.linalg.solve(C.T, M @ C.T)
    lam = np.array([w.eigenvalue(p) for p in kb.profiles])
    assert np.allclose(D, np.diag(lam), atol=1e-9)
    # multiplicity of each eigenvalue equals the number of matching profiles
    for profile in {(1, 0), (1, 1), (2, 1)}:
        count = sum(1 for p in kb.profiles if w.eigenvalue(p) == w.eigenvalue(profile))
        assert count == int(np.sum(np.isclose(lam, w.eigenvalue(profile))))


def test_harmonic_constant_bound_examples():
    one = SimpleSetProduct((("ball", 1, 1.0),))
    assert harmonic_constant_bound(one, 2) == pytest.approx(np.sqrt(2.0), abs=1e-6)
    assert harmonic_constant_bound(one, 0) == pytest.approx(1.0)
    assert harmonic_constant_bound(PROD2, 2) == pytest.approx(2.0, abs=1e-6)


def test_component_bound_by_harmonic_constant():
    kb = orthonormal_basis(PROD2, 2)
    bound = harmonic_constant_bound(PROD2, 2)
    rng = np.random.default_rng(4)
    mb = monomial_basis(2, 2)
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 41)),
                    axis=-1).reshape(-1, 2)
    for _ in range(10):
        f = Polynomial.from_vector(mb, rng.normal(size=len(mb)))
        fmax = np.abs(f.eval_many(grid)).max()
        for part in graded_decompose(kb, f).values():
            assert np.abs(part.eval_many(grid)).max() <= bound * fmax + 1e-6


# ----------------------------------------------------------------------------
# upper bounds


def test_upper_bound_sdp_ball_linear():
    f = Polynomial.variable(1, 0)
    X = make_catalog_set("ball", n=1, R=1.0)
    value, sol = upper_bound_sdp(f, X, "Q", 1, BALL1, SolveOptions(tol=1e-9))
    assert sol.status == "optimal"
    assert value == pytest.approx(-1.0 / np.sqrt(2.0), abs=1e-5)


def test_upper_bound_sdp_constant():
    f = Polynomial.constant(1, 5.0)
    X = make_catalog_set("ball", n=1, R=1.0)
    value, _ = upper_bound_sdp(f, X, "Q", 1, BALL1, SolveOptions(tol=1e-9))
    assert value == pytest.approx(5.0, abs=1e-6)


def test_upper_bound_sdp_monotone():
    f = Polynomial.variable(1, 0)
    X = make_catalog_set("ball", n=1, R=1.0)
    v1, _ = upper_bound_sdp(f, X, "Q", 1, BALL1, SolveOptions(tol=1e-9))
    v4, _ = upper_bound_sdp(f, X, "Q", 4, BALL1, SolveOptions(tol=1e-9))
    assert v4 < v1 - 1e-4
    assert v4 >= -1.0 - 1e-8


def test_upper_bound_kernel_examples():
    one = SimpleSetProduct((("ball", 1, 1.0),))
    f = Polynomial.variable(1, 0)
    assert upper_bound_kernel(f, one, 2, None, [-1.0]) == pytest.approx(-1.0)
    w = KernelWeights((np.array([1.0, 0.5, 1.0, 1.0, 1.0]),))
    assert upper_bound_kernel(f, one, 2, w, [-1.0]) == pytest.approx(-0.5)
    sq = Polynomial(1, {(2,): 1.0})
    w2 = KernelWeights((np.array([1.0, 1.0, 0.5, 1.0, 1.0]),))
    assert upper_bound_kernel(sq, one, 2, w2, [0.0]) == pytest.approx(0.25)


def test_joint_moment_products():
    m = (ReferenceMeasure("ball", 1, 1.0), ReferenceMeasure("simplex", 1, 1.0))
    assert joint_moment(m, (2, 1)) == pytest.approx(0.5 * 0.5)


def test_harmonic_constant_bound_multid_factor():
    disk = SimpleSetProduct((("ball", 2, 1.0),))
    assert harmonic_constant_bound(disk, 0) == pytest.approx(1.0)
    val = harmonic_constant_bound(disk, 2, density=60, seed=1)
    # degree-1 component alone reaches 3 on the boundary, so the bound
    # is at least sqrt(3)
    assert val >= np.sqrt(3.0) - 1e-6
    assert np.isfinite(val)


def test_upper_bound_series_sandwich():
    # f_min <= ub_r, nonincreasing in r within solver tolerance
    f = Polynomial.variable(1, 0)
    X = make_catalog_set("ball", n=1, R=1.0)
    values = []
    for r in (1, 2, 3, 4):
        v, sol = upper_bound_sdp(f, X, "Q", r, BALL1, SolveOptions(tol=1e-9))
        assert sol.status == "optimal"
        values.append(v)
    for prev, cur in zip(values, values[1:]):
        assert cur <= prev + 2e-9
    assert all(v >= -1.0 - 1e-8 for v in values)
