import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import METRIC_CASES, all_metrics
from finsler_harmonic.finsler import (
    ContractViolation,
    ConvexityViolation,
    EmptySampleError,
    Euclidean,
    QuarticMinkowski,
    Randers,
    RiemannianInU,
    RoughInU,
    SlitBundleError,
    TangentSample,
    estimate_convexity_bounds,
    estimate_modulus,
    eval_norm,
    fundamental_tensor,
    make_metric,
    modulus_pairs,
    random_samples,
    unit_directions,
    verify_euler_identity,
    verify_homogeneity,
    verify_structure,
)

finite = st.floats(-3, 3, allow_nan=False)
vec2 = st.tuples(finite, finite)
nonzero = vec2.filter(lambda v: np.hypot(*v) > 1e-3)
metric_names = st.sampled_from(sorted(METRIC_CASES))


def test_euclidean_norm_example():
    assert eval_norm(Euclidean(), TangentSample((0, 0), (3, 4))) == pytest.approx(5.0, abs=1e-15)


@pytest.mark.parametrize("F", all_metrics(), ids=lambda F: F.name)
def test_norm_vanishes_at_zero_vector(F):
    assert eval_norm(F, TangentSample((0.3, -0.2), (0, 0))) == 0.0


def test_randers_direct_formula():
    F = Randers(b=(0.5, 0))
    for u in [(0, 0), (1.3, -2.0)]:
        assert eval_norm(F, TangentSample(u, (1, 0))) == pytest.approx(1.5, abs=1e-15)


def test_dimension_mismatch_rejected():
    with pytest.raises(ContractViolation):
        TangentSample((0, 0, 0), (1, 0))
    F3 = RiemannianInU(target_dim=3)
    with pytest.raises(ContractViolation):
        eval_norm(F3, TangentSample((0, 0), (1, 0)))


def test_euclidean_tensor_is_identity():
    for mode in ("analytic", "finite_difference"):
        f = fundamental_tensor(Euclidean(), TangentSample((0.2, 0.1), (0.3, -2.0)), mode)
        np.testing.assert_allclose(f, np.eye(2), atol=1e-7 if mode != "analytic" else 0)


def test_riemannian_tensor_example():
    F = RiemannianInU(eps=0.1)
    for X in [(1, 0), (0.3, -4), (-2, 2)]:
        f = fundamental_tensor(F, TangentSample((np.pi / 2, 0), X))
        np.testing.assert_allclose(f, 1.1 * np.eye(2), rtol=1e-15)


@pytest.mark.parametrize("F", all_metrics(), ids=lambda F: F.name)
def test_slit_bundle_enforced(F):
    with pytest.raises(SlitBundleError):
        fundamental_tensor(F, TangentSample((0, 0), (0, 0)))


def test_unknown_mode_and_metric():
    with pytest.raises(ContractViolation):
        fundamental_tensor(Euclidean(), TangentSample((0, 0), (1, 0)), "symbolic")
    with pytest.raises(ContractViolation, match="registered: euclidean"):
        make_metric("finsler_of_dreams")


@pytest.mark.parametrize("F", all_metrics(), ids=lambda F: F.name)
def test_analytic_and_fd_tensors_agree(F):
    for s in random_samples(2, 200, seed=3):
        a = fundamental_tensor(F, s)
        b = fundamental_tensor(F, s, "finite_difference")
        assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-5


@pytest.mark.parametrize("F", all_metrics(), ids=lambda F: F.name)
def test_tensors_are_exactly_symmetric(F):
    for s in random_samples(2, 20, seed=4):
        for mode in ("analytic", "finite_difference"):
            f = fundamental_tensor(F, s, mode)
            assert np.array_equal(f, f.T)


@settings(max_examples=60, deadline=None)
@given(name=metric_names, u=vec2, X=nonzero, lam=st.one_of(st.just(0.0), st.floats(1e-6, 50)))
def test_norm_positive_homogeneity(name, u, X, lam):
    F = make_metric(name, **METRIC_CASES[name])
    lhs = F.norm(np.array(u), lam * np.array(X))
    rhs = lam * F.norm(np.array(u), np.array(X))
    assert abs(lhs - rhs) <= 1e-12 * rhs or lhs == rhs


@settings(max_examples=60, deadline=None)
@given(name=metric_names, u=vec2, X=nonzero, lam=st.floats(1e-3, 1e3))
def test_tensor_zero_homogeneous(name, u, X, lam):
    F = make_metric(name, **METRIC_CASES[name])
    s = TangentSample(u, X)
    assert verify_homogeneity(F, [s], [lam]) < 1e-8
    assert verify_homogeneity(F, [s], [lam], "finite_difference") < 1e-5


@settings(max_examples=60, deadline=None)
@given(name=metric_names, u=vec2, X=nonzero)
def test_euler_identity(name, u, X):
    F = make_metric(name, **METRIC_CASES[name])
    s = TangentSample(u, X)
    assert verify_euler_identity(F, [s]) < 1e-8
    assert verify_euler_identity(F, [s], "finite_difference") < 1e-5


def test_homogeneity_rejects_nonpositive_scale():
    with pytest.raises(ContractViolation):
        verify_homogeneity(Euclidean(), random_samples(2, 2), [0.0])


@pytest.mark.parametrize("b", [(0.3, 0.0), (0.5, 0.0), (0.6, 0.6), (0.0, 0.95)])
def test_randers_bounds_positive_and_match_closed_form(b):
    F = Randers(b=b)
    bounds = estimate_convexity_bounds(F, np.zeros((1, 2)), 4096)
    lo, hi = F.declared_bounds()
    assert bounds.lambda_min > 0
    assert bounds.lambda_min == pytest.approx(lo, rel=1e-5)
    assert bounds.lambda_max == pytest.approx(hi, rel=1e-5)


def test_randers_unit_drift_breaks_convexity():
    with pytest.raises(ConvexityViolation) as exc:
        estimate_convexity_bounds(Randers(b=(1.1, 0)), np.zeros((1, 2)), 64)
    assert exc.value.eigenvalue < 0
    assert exc.value.X is not None


def test_convexity_bounds_need_directions():
    with pytest.raises(ContractViolation):
        estimate_convexity_bounds(Euclidean(), np.zeros((1, 2)), 4)


@pytest.mark.parametrize("F", [F for F in all_metrics() if F.declared_bounds() is not None],
                         ids=lambda F: F.name)
def test_declared_bounds_contain_estimates(F):
    declared = F.declared_bounds()
    est = estimate_convexity_bounds(F, np.random.default_rng(0).uniform(-2, 2, (30, 2)), 256)
    assert declared[0] - 1e-12 <= est.lambda_min <= est.lambda_max <= declared[1] + 1e-12


def test_modulus_u_independent_metrics_report_no_sigma():
    for F in (Euclidean(), Randers(b=(0.3, 0)), QuarticMinkowski()):
        fit = estimate_modulus(F, modulus_pairs(2), unit_directions(2, 8))
        assert fit.sigma is None and fit.c_omega == 0.0
        assert float(fit.omega(1.0)) == 0.0


@pytest.mark.parametrize("F,sigma", [(RiemannianInU(0.1), 0.5), (RoughInU(0.1), 0.25),
                                     (Randers((0.3, 0.1), kappa=0.5), 0.5)],
                         ids=["riemannian", "rough", "randers"])
def test_modulus_exponent_recovered(F, sigma):
    fit = estimate_modulus(F, modulus_pairs(2), unit_directions(2, 8))
    assert abs(fit.sigma - sigma) < 0.03
    u = modulus_pairs(2)
    X = unit_directions(2, 8)
    t = np.sum((u[:, 0] - u[:, 1]) ** 2, axis=1)
    d = np.abs(F.norm_sq(u[:, 0][:, None], X[None]) - F.norm_sq(u[:, 1][:, None], X[None])).max(axis=1)
    assert np.all(d <= fit.omega(t) * (1 + 1e-9) + 1e-15)


def test_modulus_cap_and_errors():
    fit = estimate_modulus(RiemannianInU(0.1), modulus_pairs(2), unit_directions(2, 8))
    assert fit.omega(10 * fit.t_cap) == fit.omega(fit.t_cap)
    with pytest.raises(EmptySampleError):
        estimate_modulus(Euclidean(), np.zeros((0, 2, 2)), unit_directions(2, 8))
    with pytest.raises(EmptySampleError):
        estimate_modulus(RiemannianInU(), np.zeros((3, 2, 2)), unit_directions(2, 8))
    with pytest.raises(SlitBundleError):
        estimate_modulus(RiemannianInU(), modulus_pairs(2), np.zeros((1, 2)))


def test_rough_triangle_mean_matches_2d_quadrature():
    from scipy.integrate import dblquad

    F = RoughInU(0.1)
    rng = np.random.default_rng(11)
    U = rng.normal(size=(5, 3, 2)) * 2
    U[0, :, 0] = [0.0, 1e-3, 0.5]
    U[1, :, 0] = [1.0, 1.0, 1.0]
    got = F.triangle_mean_factor(U)
    for k in range(len(U)):
        a, b, c = U[k, :, 0]
        f = lambda y, x: np.sqrt(abs(np.sin(a + (b - a) * x + (c - a) * y)))  # noqa: E731
        ref = 2 * dblquad(f, 0, 1, 0, lambda x: 1 - x, epsabs=1e-12, epsrel=1e-12)[0]
        assert got[k] == pytest.approx(1 + 0.1 * ref, abs=1e-8)


def test_fill_value_and_params():
    assert np.array_equal(Randers(b=(0.5, 0)).fill_value(), (0.25 + 2.25) / 2 * np.eye(2))
    assert make_metric("randers", b=(0.2, 0.1), kappa=0.5).params() == {"b": [0.2, 0.1], "kappa": 0.5}


def test_verify_structure_table():
    d = verify_structure(make_metric("randers", b=(0.5, 0)), 100).to_dict()
    assert d["homogeneity_deviation_analytic"] < 1e-8 and d["euler_deviation_analytic"] < 1e-8
    assert d["lambda_min"] > 0
    e = verify_structure(Euclidean(), 100).to_dict()
    assert max(e["homogeneity_deviation_analytic"], e["euler_deviation_analytic"]) < 1e-12
    assert (e["lambda_min"], e["lambda_max"]) == (1.0, 1.0)
