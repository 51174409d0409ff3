import numpy as np
import pytest
from scipy import integrate

from safab.errors import DegenerateSelectionError, DomainError
from safab.gauss import GaussianModel
from safab.marginal import (Mechanism, SelectionSpec, conditional_marginal, joint_marginal,
                            marginal_cdf_at, selected_marginal)
from safab.prior import BimodalMixPrior, GridPrior, TwoGroupsPrior, default_theta_grid, evaluate_on_grid

import oracles as orc

M = GaussianModel(1.0)
TOY = TwoGroupsPrior(0.1, 3.0)
JOINT = SelectionSpec(2.0, Mechanism.JOINT)
COND = SelectionSpec(2.0, Mechanism.CONDITIONAL)


def _ray_integral(m):
    """Simpson integral of the density over both rays."""
    left = m.grid_y <= -m.t
    return sum(integrate.simpson(m.density[s], x=m.grid_y[s]) for s in (left, ~left))


def test_joint_selection_probability():
    m = joint_marginal(TOY, M, JOINT)
    exact = 2 * orc.two_groups_cdf(-2, 0.1, 3)
    assert m.prob_S == pytest.approx(float(exact), rel=1e-12)
    assert m.prob_S == pytest.approx(0.0726813, abs=1e-7)


@pytest.mark.parametrize("y", [-7.0, -2.3, -2.0, 0.0, 2.0, 2.5, 4.1, 9.0])
def test_joint_cdf_matches_mpmath(y):
    m = joint_marginal(TOY, M, JOINT)
    assert m.cdf_at(y) == pytest.approx(float(orc.joint_selected_cdf(y, 0.1, 3, 2)), abs=1e-8)


@pytest.mark.parametrize("y", [-5.0, -2.2, 2.01, 3.0, 6.5])
def test_conditional_density_matches_mpmath(y):
    m = conditional_marginal(TOY, M, COND)
    got = np.interp(y, m.grid_y, m.density)
    assert got == pytest.approx(float(orc.conditional_selected_density(y, 0.1, 3, 2)), rel=2e-4)


@pytest.mark.parametrize("spec", [JOINT, COND])
def test_density_normalised(spec):
    m = selected_marginal(TOY, M, spec)
    assert _ray_integral(m) == pytest.approx(1.0, abs=1e-6)
    assert m.cdf[0] == pytest.approx(0.0, abs=1e-9) and m.cdf[-1] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("spec", [JOINT, COND])
def test_running_trapezoid_agrees_with_exact_cdf(spec):
    # The stored CDF is exact; cumulative trapezoid of the density differs by O(h^2).
    m = selected_marginal(TOY, M, spec)
    left = m.grid_y <= -m.t
    cum = integrate.cumulative_trapezoid(m.density[left], m.grid_y[left], initial=0)
    assert np.max(np.abs(cum + m.cdf[left][0] - m.cdf[left])) < 1e-4


def test_cdf_flat_across_gap_and_monotone():
    m = joint_marginal(BimodalMixPrior(0.2, 0.25, 2.0), M, JOINT)
    inside = marginal_cdf_at(m, np.linspace(-2, 2, 11))
    assert np.ptp(inside) == 0.0
    assert np.all(np.diff(m.cdf) >= 0)


def test_symmetric_prior_gives_half_on_gap():
    m = conditional_marginal(TOY, M, COND)
    assert m.cdf_at(0.0) == pytest.approx(0.5, abs=1e-9)


def test_grid_and_closed_form_joint_agree():
    gp = evaluate_on_grid(TOY, default_theta_grid(12.0))
    a = joint_marginal(TOY, M, JOINT)
    b = joint_marginal(gp, M, JOINT)
    y = np.linspace(-8, 8, 161)
    assert np.max(np.abs(a.cdf_at(y) - b.cdf_at(y))) < 1e-7


def test_point_mass_prior_conditional_is_truncated_law():
    from safab.gauss import TruncatedGaussian, trunc_cdf
    m = conditional_marginal(GridPrior.point_mass(1.5), M, COND)
    y = np.array([-3.0, -2.0, 2.5, 4.0])
    assert m.cdf_at(y) == pytest.approx(trunc_cdf(TruncatedGaussian(1.0, 2.0), 1.5, y), abs=1e-9)


def test_degenerate_selection():
    with pytest.raises(DegenerateSelectionError):
        joint_marginal(TwoGroupsPrior(0.0, 1.0), M, SelectionSpec(40.0))


def test_bad_threshold():
    with pytest.raises(DomainError):
        SelectionSpec(0.0)


@pytest.mark.parametrize("theta0", [0.0, 1.5, -3.0])
def test_mechanisms_coincide_for_single_atom(theta0):
    prior = GridPrior.point_mass(theta0)
    a = joint_marginal(prior, M, JOINT)
    b = conditional_marginal(prior, M, COND)
    y = np.linspace(-9, 9, 181)
    assert np.max(np.abs(a.cdf_at(y) - b.cdf_at(y))) < 1e-10
    assert np.max(np.abs(np.interp(y, a.grid_y, a.density) - np.interp(y, b.grid_y, b.density))) < 1e-10


def test_symmetric_prior_symmetric_density():
    m = conditional_marginal(TOY, M, COND)
    assert np.max(np.abs(m.density - m.density[::-1])) < 1e-9


def test_uniform_prior_normalised():
    g = np.linspace(-5, 5, 401)
    m = conditional_marginal(GridPrior(g, np.full(g.size, 0.1)), M, COND)
    assert _ray_integral(m) == pytest.approx(1.0, abs=1e-5)


def test_estimated_equals_gridded_truth():
    from safab.marginal import estimated_marginal
    gp = evaluate_on_grid(TOY, default_theta_grid(12.0))
    a = estimated_marginal(gp, M, JOINT)
    b = joint_marginal(TOY, M, JOINT)
    y = np.linspace(-9, 9, 361)
    assert np.max(np.abs(np.interp(y, a.grid_y, a.density) - np.interp(y, b.grid_y, b.density))) < 1e-4


def test_cdf_beyond_grid():
    m = joint_marginal(TOY, M, JOINT)
    assert m.cdf_at(1e6) == 1.0 and m.cdf_at(-1e6) == 0.0
