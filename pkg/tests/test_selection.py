import numpy as np
import pytest

from diffusia import core, estimation as est, selection as sel
from diffusia.errors import DomainError
from diffusia.simulation import SimScenario, generate


def test_partial_r2_published_values():
    assert sel.partial_r2(0.999960, 0.998766) == pytest.approx(0.967585, abs=1e-6)
    assert round(sel.partial_r2(0.999960, 0.998766), 4) == pytest.approx(0.9676, abs=2e-4)


def test_partial_r2_edges():
    assert sel.partial_r2(0.8, 0.8) == 0.0
    assert sel.partial_r2(1.0 - 1e-12, 0.5) == pytest.approx(1 - 2e-12, abs=1e-15)
    with pytest.raises(DomainError):
        sel.partial_r2(1.0, 1.0)


def test_f_ratio_published_value():
    f = sel.f_ratio(0.9675, 376, 8, 2)
    assert f == pytest.approx(5477.5, abs=0.1)
    assert abs(f / 5474.78 - 1) < 0.005


def test_f_ratio_arithmetic():
    assert sel.f_ratio(0.0, 50, 4, 1) == 0.0
    # 0.5 * 90 / (0.5 * 3)
    assert sel.f_ratio(0.5, 100, 10, 3) == pytest.approx(30.0, rel=1e-15)


@pytest.mark.parametrize("args", [(1.0, 376, 8, 2), (0.5, 8, 8, 2), (0.5, 376, 8, 0), (-0.1, 376, 8, 2)])
def test_f_ratio_domain(args):
    with pytest.raises(DomainError):
        sel.f_ratio(*args)


def test_f_ratio_monotone():
    r = np.linspace(0, 0.99, 100)
    f = [sel.f_ratio(x, 376, 8, 2) for x in r]
    assert np.all(np.diff(f) > 0)
    n = np.arange(10, 500)
    f = [sel.f_ratio(0.3, int(x), 8, 2) for x in n]
    assert np.all(np.diff(f) > 0)


def test_comparison_record():
    cmp = sel.ModelComparison.from_r2(0.999960, 0.998766, 376, 8, 2)
    assert cmp.exceeds_robust_threshold
    assert cmp.f_stat == pytest.approx(sel.f_ratio(cmp.r2_partial, 376, 8, 2))
    weak = sel.ModelComparison.from_r2(0.90001, 0.9, 376, 8, 2)
    assert not weak.exceeds_robust_threshold


@pytest.fixture(scope="module")
def table():
    return sel.compare_potentials(generate(SimScenario(noise_to_signal=0.02, seed=100), 0))


def test_table_rows(table):
    assert [r.model for r in table] == ["cdmp", "constant", "gg-nosqrt", "gamma"]
    assert all(r.converged and r.error is None for r in table)
    assert table[1].f_test is not None and table[1].f_test.s == 2
    assert table[1].f_test.n_obs == 376 and table[1].f_test.k_full == 8
    assert all(r.f_test is None for r in table if r.model != "constant")


def test_table_nesting_order(table):
    assert table[0].r_squared >= table[1].r_squared
    assert table[1].f_test.exceeds_robust_threshold


def test_table_respects_given_order():
    data = generate(SimScenario(noise_to_signal=0.02, seed=7), 0)
    rows = sel.compare_potentials(data, [est.FitConfig("constant"), est.FitConfig("cdmp")])
    assert [r.model for r in rows] == ["constant", "cdmp"]
    assert rows[0].f_test is not None


def test_failed_row_does_not_abort():
    data = generate(SimScenario(noise_to_signal=0.02, seed=7), 0)
    bad = est.FitConfig("cdmp", bounds={"nonexistent": (0, 1)})
    rows = sel.compare_potentials(data, [bad, est.FitConfig("constant")])
    assert rows[0].error is not None and not rows[0].converged
    assert rows[1].converged and rows[1].f_test is None


def test_sqrt_potential_wins_on_its_own_data():
    wins = 0
    seeds = range(10)
    for s in seeds:
        rows = sel.compare_potentials(generate(SimScenario(noise_to_signal=0.02, seed=200 + s), 0))
        rho = {r.model: r.rho_squared for r in rows}
        wins += rho["cdmp"] == max(rho.values())
    assert wins >= 0.9 * len(seeds)


def test_constant_data_rarely_rejects_null():
    const = core.CompetitionParams(core.Constant(5e7), 3e-3, 1.5e-2, 5e-4, 1.3e-3, -2.2e-2)
    below = 0
    for s in range(7):
        scen = SimScenario(true_params=const, noise_to_signal=0.005, seed=s,
                           fitted_model=est.FitConfig("constant"))
        rows = sel.compare_potentials(generate(scen, 0), sel.default_specs()[:2])
        below += rows[1].f_test.f_stat < sel.ROBUST_THRESHOLD
    assert below > 7 / 2
