import numpy as np
import pytest

from diffusia import core, estimation as est
from diffusia.errors import ValidationError
from diffusia.selection import _nest_constant
from diffusia.simulation import DEFAULT_TRUE_PARAMS, SimScenario, generate

TRUE = DEFAULT_TRUE_PARAMS


@pytest.fixture(scope="module")
def clean():
    return est.synthetic_series(TRUE, 188)


@pytest.fixture(scope="module")
def noisy():
    return generate(SimScenario(noise_to_signal=0.02), 3)


@pytest.fixture(scope="module")
def noisy_fit(noisy):
    return est.fit(noisy, est.FitConfig("cdmp", "cumulative", TRUE))


def _perturbed(params, seed):
    rng = np.random.default_rng(seed)
    x = params.to_vector() * (1 + rng.choice([-0.2, 0.2], size=len(params.names)))
    return core.CompetitionParams.from_vector(params.family, x)


# -- containers -------------------------------------------------------------------------

def test_series_cumulates(clean):
    assert np.allclose(clean.cum1, np.cumsum(clean.sales1))
    assert np.all(np.diff(clean.cum1) >= 0) and np.all(np.diff(clean.cum2) >= 0)
    assert clean.n == 188 and clean.spacing == 1.0


@pytest.mark.parametrize("kwargs", [
    dict(t=[1, 2, 3], sales1=[1, -1, 1], sales2=[1, 1, 1]),
    dict(t=[1, 2, 4], sales1=[1, 1, 1], sales2=[1, 1, 1]),
    dict(t=[1, 2, 3], sales1=[1, 1], sales2=[1, 1, 1]),
    dict(t=[1, 2, 3], sales1=[1, np.nan, 1], sales2=[1, 1, 1]),
    dict(t=[0, 1, 2], sales1=[1, 1, 1], sales2=[1, 1, 1]),
])
def test_series_validation(kwargs):
    with pytest.raises(ValidationError):
        est.SalesSeries(**kwargs)


@pytest.mark.parametrize("kwargs", [dict(model="logistic"), dict(fit_scale="log"), dict(tolerance=0.0),
                                    dict(max_iterations=0), dict(model="constant", initial_values=TRUE)])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        est.FitConfig(**kwargs)


def test_default_initial_values(clean):
    start = est.default_initial_values(clean)
    total = clean.cum1[-1] + clean.cum2[-1]
    assert start.potential == core.GGSqrt(1.5 * total, 1e-3, 1e-2)
    assert start.coefficients().tolist() == [1e-3, 1e-2, 1e-4, 1e-2, 0.0]


# -- recovery and statistics ---------------------------------------------------------------

@pytest.mark.parametrize("scale", ["cumulative", "instantaneous"])
@pytest.mark.parametrize("seed", [0, 1])
def test_noiseless_recovery(clean, scale, seed):
    res = est.fit(clean, est.FitConfig("cdmp", scale, _perturbed(TRUE, seed)))
    assert res.converged
    rel = np.abs(res.estimates.to_vector() / TRUE.to_vector() - 1)
    assert np.all(rel < 1e-3)
    assert res.r_squared >= 1 - 1e-10


def test_counts(noisy_fit):
    assert noisy_fit.n_obs == 376
    assert noisy_fit.n_params == 8
    assert noisy_fit.param_names == ("K", "p_c", "q_c", "p1", "q1", "p2", "q2", "delta")


def test_interval_structure(noisy_fit):
    cov = noisy_fit.covariance
    assert np.allclose(cov, cov.T)
    assert np.min(np.linalg.eigvalsh(cov / np.outer(noisy_fit.std_errors, noisy_fit.std_errors))) > -1e-10
    x = noisy_fit.estimates.to_vector()
    assert np.allclose(noisy_fit.conf_intervals_95[:, 0], x - 1.96 * noisy_fit.std_errors, rtol=1e-14)
    assert np.allclose(noisy_fit.conf_intervals_95[:, 1], x + 1.96 * noisy_fit.std_errors, rtol=1e-14)
    assert 0 <= noisy_fit.r_squared <= 1 and 0 <= noisy_fit.rho_squared <= 1


def test_standard_errors_by_independent_formula(noisy_fit, noisy):
    # s^2 (J'J)^-1 with a central-difference Jacobian from a different step
    x = noisy_fit.estimates.to_vector()
    jac = est.jacobian("cdmp", x, noisy, "cumulative", rel_step=1e-7, central=True)
    s2 = noisy_fit.sse / (noisy_fit.n_obs - noisy_fit.n_params)
    d = 1.0 / np.linalg.norm(jac, axis=0)
    _, r = np.linalg.qr(jac * d)
    rinv = np.linalg.solve(r, np.eye(r.shape[0]))
    se = np.sqrt(s2 * np.sum(rinv ** 2, axis=1)) * d
    assert np.allclose(noisy_fit.std_errors, se, rtol=1e-3)


def test_sse_matches_residuals(noisy_fit):
    assert noisy_fit.sse == pytest.approx(float(np.sum(noisy_fit.residuals_cumulative ** 2)), rel=1e-10)


def test_residuals_equal_observed_minus_predicted(noisy_fit, noisy):
    pred = est.predict(noisy_fit, noisy.t)
    assert np.allclose(noisy_fit.residuals_cumulative[0], noisy.cum1 - pred.cum1, rtol=0, atol=1e-6)
    assert np.allclose(noisy_fit.residuals_instantaneous[1], noisy.sales2 - pred.inst2, rtol=0, atol=1e-6)
    assert noisy_fit.residuals is noisy_fit.residuals_cumulative


def test_predict_reproduces_closed_form():
    t = np.arange(1.0, 189.0)
    pred = est.predict_params(core.REFERENCE_PARAMS, t)
    z1, z2 = core.brand_trajectories(t, core.REFERENCE_PARAMS)
    assert np.array_equal(pred.cum1, z1) and np.array_equal(pred.cum2, z2)
    assert np.allclose(np.cumsum(pred.inst1), z1, rtol=1e-12, atol=1e-6)


def test_predicted_cumulative_non_decreasing():
    rng = np.random.default_rng(5)
    for _ in range(30):
        pot = core.GGSqrt(rng.uniform(1e3, 1e8), rng.uniform(1e-4, 0.05), rng.uniform(1e-3, 0.3))
        p = core.CompetitionParams(pot, *rng.uniform(1e-4, 0.05, 2), *rng.uniform(1e-4, 0.05, 2),
                                   rng.uniform(-0.02, 0.02))
        pred = est.predict_params(p, np.linspace(0.5, 300, 700))
        assert np.all(np.diff(pred.cum1) >= -1e-9 * pot.K)
        assert np.all(np.diff(pred.cum2) >= -1e-9 * pot.K)


def test_predict_refuses_unconverged(noisy):
    res = est.fit(noisy, est.FitConfig("cdmp", max_iterations=1))
    assert not res.converged
    with pytest.raises(ValidationError):
        est.predict(res, noisy.t)


def test_goodness_of_fit_limits(clean):
    r2, rho2 = est.goodness_of_fit(clean, (clean.cum1, clean.cum2))
    assert r2 == 1.0 and rho2 == pytest.approx(1.0, abs=1e-15)
    mean = np.concatenate([clean.cum1, clean.cum2]).mean()
    r2, _ = est.goodness_of_fit(clean, (np.full(188, mean), np.full(188, mean)))
    assert r2 == pytest.approx(0.0, abs=1e-12)


def test_rho_squared_falls_with_noise():
    means = []
    for level in (0.01, 0.05, 0.10):
        scen = SimScenario(noise_to_signal=level, noise_model="multiplicative")
        vals = [est.fit(generate(scen, r), est.FitConfig("cdmp", "instantaneous", TRUE)).rho_squared
                for r in range(8)]
        means.append(np.mean(vals))
    assert means[0] < 1 and means[0] > means[1] > means[2]


def test_nesting_constant_inside_cdmp():
    const = core.CompetitionParams(core.Constant(2e6), 4e-3, 4e-2, 1e-3, 3e-2, -1e-2)
    data = est.synthetic_series(const, 150)
    small = est.fit(data, est.FitConfig("constant", "cumulative", _perturbed(const, 4)))
    assert small.converged
    assert np.allclose(small.estimates.to_vector(), const.to_vector(), rtol=1e-4)
    big = est.fit_multistart(data, est.FitConfig("cdmp"), [_nest_constant(small.estimates)])
    assert big.r_squared >= small.r_squared


# -- numerical machinery -------------------------------------------------------------------

def test_jacobian_step_independence(noisy):
    rng = np.random.default_rng(11)
    for _ in range(5):
        x = TRUE.to_vector() * rng.uniform(0.8, 1.2, 8)
        forward = est.jacobian("cdmp", x, noisy, "cumulative", rel_step=1e-6)
        central = est.jacobian("cdmp", x, noisy, "cumulative", rel_step=1e-7, central=True)
        rel = np.linalg.norm(forward - central, axis=0) / np.linalg.norm(central, axis=0)
        assert np.all(rel < 1e-4)


def test_accepted_steps_never_raise_sse(noisy):
    res = est.fit(noisy, est.FitConfig("cdmp", initial_values=est.default_initial_values(noisy)))
    hist = np.array(res.sse_history)
    assert hist.size > 2 and np.all(np.diff(hist) <= 0)


def test_scale_equivariance(noisy, noisy_fit):
    c = 37.5
    pert = _perturbed(noisy_fit.estimates, 2)
    pert_scaled = core.CompetitionParams(core.GGSqrt(pert.potential.K * c, pert.potential.p_c,
                                                     pert.potential.q_c), *pert.coefficients())
    a = est.fit(noisy, est.FitConfig("cdmp", initial_values=pert))
    b = est.fit(noisy.scaled(c), est.FitConfig("cdmp", initial_values=pert_scaled))
    xa, xb = a.estimates.to_vector(), b.estimates.to_vector()
    assert xb[0] == pytest.approx(c * xa[0], rel=1e-6)
    assert np.allclose(xb[1:], xa[1:], rtol=1e-6, atol=0)


def test_brand_swap_symmetry(noisy, noisy_fit):
    swapped = noisy.swapped()
    x = noisy_fit.estimates.swapped().to_vector()
    r = est.stacked_residuals("cdmp", x, swapped, "cumulative")
    assert float(r @ r) == pytest.approx(noisy_fit.sse, rel=1e-9)
    refit = est.fit(swapped, est.FitConfig("cdmp", initial_values=noisy_fit.estimates.swapped()))
    assert refit.sse == pytest.approx(noisy_fit.sse, rel=1e-9)
    back = refit.estimates.swapped().to_vector()
    assert np.allclose(back, noisy_fit.estimates.to_vector(), rtol=1e-4, atol=1e-8)


def test_singular_information_hides_covariance():
    jac = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    assert est._covariance(jac, 1.0, 10, 2) is None


def test_positivity_bounds(noisy):
    res = est.fit(noisy, est.FitConfig("cdmp", bounds={"q_c": (0.05, None)}))
    assert res.estimates.potential.q_c >= 0.05
    with pytest.raises(ValidationError):
        est.fit(noisy, est.FitConfig("cdmp", bounds={"zeta": (0, 1)}))


def test_too_few_months():
    short = est.synthetic_series(TRUE, 5)
    with pytest.raises(ValidationError):
        est.fit(short)


def test_multistart_keeps_best(noisy):
    starts = [_perturbed(TRUE, s) for s in range(3)]
    best = est.fit_multistart(noisy, est.FitConfig("cdmp"), starts)
    singles = [est.fit(noisy, est.FitConfig("cdmp", initial_values=s)) for s in starts]
    assert best.sse == min(r.sse for r in singles if r.converged)


@pytest.mark.parametrize("model", ["gg-nosqrt", "gamma", "constant"])
def test_other_potentials_fit(noisy, model):
    res = est.fit_multistart(noisy, est.FitConfig(model))
    assert res.converged and res.n_params == (8 if model != "constant" else 6)
    assert 0.99 < res.r_squared < 1
