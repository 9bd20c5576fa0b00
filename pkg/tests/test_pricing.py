"""Closed forms, backward evolution, and the two PDE pricers."""

import io
import math

import numpy as np
import pytest
from scipy.integrate import quad

from gauge_hamilton import (
    EvolveError,
    FarFieldBoundary,
    GridFunction,
    ModelParams,
    OptionContract,
    PriceSurface,
    bs_closed_form,
    bs_delta,
    build_bs_hamiltonian,
    default_grid_1d,
    evolve,
    identity_operator,
    make_grid_1d,
    make_grid_2d,
    price_bs,
    price_mg,
    simulate_mg,
    mc_price,
    solve_mg,
    terminal_payoff,
)

P = ModelParams(r=0.05, sigma=0.2)
CALL = OptionContract("call", 100.0, 1.0)
PUT = OptionContract("put", 100.0, 1.0)

# benchmark value for r=0.05, sigma=0.2, K=S0=100, T=1
BENCHMARK_CALL = 10.450583572185565


def lognormal_expectation(params, contract, s0):
    """Independent price: discounted payoff integrated against the exact
    terminal density of geometric Brownian motion."""
    r, sig, t = params.r, params.sigma, contract.maturity
    m = math.log(s0) + (r - 0.5 * sig * sig) * t
    sd = sig * math.sqrt(t)

    def integrand(z):
        s = math.exp(m + sd * z)
        return float(contract.payoff(s)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    # integrate each side of the payoff kink separately
    z_kink = (math.log(contract.strike) - m) / sd
    total, err_total = 0.0, 0.0
    for lo, hi in ((-12.0, z_kink), (z_kink, 12.0)):
        val, err = quad(integrand, lo, hi, limit=200)
        total += val
        err_total += err
    assert err_total < 1e-10
    return math.exp(-r * t) * total


# ---------------------------------------------------------------------------
# contracts and payoffs
# ---------------------------------------------------------------------------

def test_contract_payoff_examples():
    call = OptionContract("call", 42.0, 1.0)
    assert call.payoff(42.0) == 0.0
    assert call.payoff(47.0) == 5.0
    put = OptionContract("put", 50.0, 1.0)
    assert put.payoff(0.0) == 50.0
    np.testing.assert_array_equal(call.payoff([40.0, 42.0, 45.0]), [0.0, 0.0, 3.0])


def test_contract_validation():
    with pytest.raises(ValueError, match="kind"):
        OptionContract("straddle", 100.0, 1.0)
    with pytest.raises(ValueError, match="strike"):
        OptionContract("call", 0.0, 1.0)
    with pytest.raises(ValueError, match="maturity"):
        OptionContract("call", 100.0, 0.0)
    with pytest.raises(ValueError, match="premium"):
        OptionContract("call", 100.0, 1.0, premium=-1.0)


def test_terminal_payoff_grids():
    g = make_grid_1d(math.log(50.0), math.log(200.0), 41)
    f = terminal_payoff(CALL, g)
    np.testing.assert_allclose(f.values, np.maximum(np.exp(g.points) - 100.0, 0.0),
                               rtol=1e-15)
    g2 = make_grid_2d(math.log(50.0), math.log(200.0), 21, -4.0, -1.0, 11)
    f2 = terminal_payoff(CALL, g2).values2d
    assert np.array_equal(f2[:, 0], f2[:, -1])  # constant across variance


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def test_closed_form_benchmark_value():
    got = bs_closed_form(P, CALL, 100.0)
    assert got == pytest.approx(BENCHMARK_CALL, rel=1e-15)
    # and against a quadrature of the terminal density
    assert got == pytest.approx(lognormal_expectation(P, CALL, 100.0), abs=1e-9)


def test_closed_form_put_and_parity():
    call = bs_closed_form(P, CALL, 100.0)
    put = bs_closed_form(P, PUT, 100.0)
    assert put == pytest.approx(lognormal_expectation(P, PUT, 100.0), abs=1e-9)
    assert call - put == pytest.approx(100.0 - 100.0 * math.exp(-0.05), rel=1e-12)


def test_closed_form_zero_volatility():
    p0 = ModelParams(r=0.05, sigma=0.0)
    itm = OptionContract("call", 90.0, 1.0)
    assert bs_closed_form(p0, itm, 100.0) == 100.0 - 90.0 * math.exp(-0.05)
    assert bs_closed_form(p0, OptionContract("put", 90.0, 1.0), 100.0) == 0.0
    # continuous in sigma at the limit
    tiny = bs_closed_form(ModelParams(r=0.05, sigma=1e-8), itm, 100.0)
    assert tiny == pytest.approx(100.0 - 90.0 * math.exp(-0.05), rel=1e-9)


def test_closed_form_validates_spot():
    with pytest.raises(ValueError, match="s0"):
        bs_closed_form(P, CALL, 0.0)


def test_delta_properties():
    d_call = bs_delta(P, CALL, 100.0, 1.0)
    assert 0.0 < d_call < 1.0
    assert bs_delta(P, PUT, 100.0, 1.0) == d_call - 1.0
    p0 = ModelParams(r=0.05, sigma=0.0)
    assert bs_delta(p0, CALL, 100.0, 1.0) == 1.0   # forward in the money
    assert bs_delta(p0, CALL, 90.0, 1.0) == 0.0
    with pytest.raises(ValueError, match="tau"):
        bs_delta(P, CALL, 100.0, 0.0)


# ---------------------------------------------------------------------------
# backward evolution
# ---------------------------------------------------------------------------

def test_evolve_pure_discounting():
    # H = r I has the exact solution e^{-r T}; trapezoidal stepping with no
    # startup damping reproduces it to 1e-10
    g = make_grid_1d(0.0, 1.0, 11)
    h = identity_operator(g) * 0.07
    surf = evolve(h, GridFunction(g, np.ones(11)), maturity=2.0,
                  n_steps=10_000, rannacher=0)
    assert np.abs(surf.values - math.exp(-0.14)).max() < 1e-10


def test_evolve_validation():
    g = make_grid_1d(0.0, 1.0, 11)
    h = identity_operator(g)
    ones = GridFunction(g, np.ones(11))
    with pytest.raises(ValueError, match="grid mismatch"):
        evolve(h, GridFunction(make_grid_1d(0.0, 2.0, 11), np.ones(11)), 1.0, 10)
    with pytest.raises(ValueError, match="n_steps"):
        evolve(h, ones, 1.0, 0)
    with pytest.raises(ValueError, match="theta_scheme"):
        evolve(h, ones, 1.0, 10, theta_scheme=1.5)
    with pytest.raises(ValueError, match="maturity"):
        evolve(h, ones, -1.0, 10)


def test_evolve_singular_system():
    # I + theta dt H collapses to the zero matrix for H = -2I, dt = 1
    g = make_grid_1d(0.0, 1.0, 11)
    h = identity_operator(g) * -2.0
    with pytest.raises(EvolveError, match="factorization"):
        evolve(h, GridFunction(g, np.ones(11)), 1.0, 1, theta_scheme=0.5,
               rannacher=0)


def test_evolve_explicit_warns_when_unstable():
    g = default_grid_1d(100.0, 0.2, 1.0, n=201)
    h = build_bs_hamiltonian(P, g)
    with pytest.warns(RuntimeWarning, match="unstable"):
        try:
            evolve(h, terminal_payoff(CALL, g), 1.0, 1, theta_scheme=0.0)
        except EvolveError:
            pass  # divergence may also trip the residual check


def test_evolve_keeps_two_slices():
    g = make_grid_1d(0.0, 1.0, 11)
    h = identity_operator(g) * 0.05
    surf = evolve(h, GridFunction(g, np.ones(11)), 1.0, 4)
    assert surf.dt == 0.25
    assert surf.prev_values is not None
    # previous slice sits one step closer to maturity, so it is larger
    assert np.all(surf.prev_values > surf.values)


# ---------------------------------------------------------------------------
# Black-Scholes PDE pricing
# ---------------------------------------------------------------------------

def test_pde_matches_closed_form():
    got = price_bs(P, CALL, 100.0)
    assert abs(got - BENCHMARK_CALL) / BENCHMARK_CALL < 2e-4


def test_pde_put_call_parity():
    call = price_bs(P, CALL, 100.0)
    put = price_bs(P, PUT, 100.0)
    gap = call - put - (100.0 - 100.0 * math.exp(-0.05))
    assert abs(gap) < 1e-3


def test_pde_second_order_convergence():
    # strike at a grid node so the payoff kink does not pollute the order
    w = 5 * 0.2
    def err(n, steps):
        grid = make_grid_1d(math.log(100.0) - w, math.log(100.0) + w, n)
        return abs(price_bs(P, CALL, 100.0, grid=grid, n_steps=steps) - BENCHMARK_CALL)
    ratio = err(201, 100) / err(401, 200)
    assert 3.0 < ratio < 5.0


def test_pde_call_monotone_in_price():
    g = default_grid_1d(100.0, 0.2, 1.0, n=201)
    surf = evolve(build_bs_hamiltonian(P, g), terminal_payoff(CALL, g), 1.0, 100,
                  boundary=FarFieldBoundary(CALL, P.r))
    assert np.all(np.diff(surf.values) >= -1e-9)


def test_pde_implicit_euler_stays_nonnegative():
    g = default_grid_1d(100.0, 0.2, 1.0, n=201)
    surf = evolve(build_bs_hamiltonian(P, g), terminal_payoff(CALL, g), 1.0, 100,
                  theta_scheme=1.0, boundary=FarFieldBoundary(CALL, P.r))
    assert surf.values.min() > -1e-12


def test_far_field_values():
    g = default_grid_1d(100.0, 0.2, 1.0, n=21)
    lo, hi = FarFieldBoundary(CALL, 0.05).x_values(g, 1.0)
    assert lo == 0.0
    assert hi == pytest.approx(math.exp(g.x_max) - 100.0 * math.exp(-0.05), rel=1e-12)
    lo_p, hi_p = FarFieldBoundary(PUT, 0.05).x_values(g, 1.0)
    assert hi_p == 0.0
    assert lo_p == pytest.approx(100.0 * math.exp(-0.05) - math.exp(g.x_min), rel=1e-12)


# ---------------------------------------------------------------------------
# surfaces
# ---------------------------------------------------------------------------

def test_surface_interpolation():
    g = make_grid_1d(0.0, 1.0, 11)
    surf = PriceSurface(g, g.points ** 2, 0.0)
    assert surf.interpolate(0.5) == pytest.approx(0.25, abs=1e-12)
    assert surf.interpolate(0.55) == pytest.approx((0.25 + 0.36) / 2, abs=1e-12)
    with pytest.raises(ValueError, match="outside"):
        surf.interpolate(1.5)
    g2 = make_grid_2d(0.0, 1.0, 5, 0.0, 1.0, 5)
    surf2 = PriceSurface(g2, (g2.xs + g2.ys), 0.0)
    assert surf2.interpolate(0.3, 0.4) == pytest.approx(0.7, abs=1e-12)
    with pytest.raises(ValueError, match="both x and y"):
        surf2.interpolate(0.3)
    with pytest.raises(ValueError, match="outside"):
        surf2.interpolate(0.3, 2.0)


def test_surface_csv_header():
    g = make_grid_1d(0.0, 1.0, 5)
    buf = io.StringIO()
    PriceSurface(g, np.ones(5), 0.0).to_csv(buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == "# t=0"
    assert lines[1] == "x,value"


def test_surface_validation():
    g = make_grid_1d(0.0, 1.0, 5)
    with pytest.raises(ValueError, match="finite"):
        PriceSurface(g, np.array([1.0, np.nan, 1.0, 1.0, 1.0]), 0.0)
    with pytest.raises(TypeError):
        PriceSurface(g, np.ones(5), 0.0).values2d


# ---------------------------------------------------------------------------
# Merton-Garman pricing
# ---------------------------------------------------------------------------

def test_mg_degenerate_matches_bs():
    # frozen variance: zeta = lambda = mu = 0 prices like Black-Scholes
    # with sigma = sqrt(v0)
    pm = ModelParams(r=0.05, zeta=0.0, lambda_=0.0, mu=0.0)
    got = price_mg(pm, CALL, 100.0, 0.04)
    assert abs(got - BENCHMARK_CALL) / BENCHMARK_CALL < 2e-3


def test_mg_deep_in_the_money():
    pm = ModelParams(r=0.05, lambda_=0.01, mu=-0.5, zeta=0.5, alpha=1.0, rho=-0.5)
    got = price_mg(pm, OptionContract("call", 1e-8, 1.0), 100.0, 0.04)
    assert abs(got - 100.0) / 100.0 < 5e-3


def test_mg_agrees_with_simulation():
    # generator-consistent diffusion (the conventional 1/2) so the operator
    # prices the same dynamics the sampler integrates
    pm = ModelParams(r=0.05, phi=0.05, lambda_=0.01, mu=-0.5, zeta=0.5,
                     alpha=1.0, rho=-0.5, vol_vol_half=True)
    pde = price_mg(pm, CALL, 100.0, 0.04)
    ens = simulate_mg(pm, 100.0, 0.04, 1.0, n_steps=150, n_paths=60_000, seed=11)
    mc, se = mc_price(ens, CALL, 0.05)
    assert abs(pde - mc) <= 3.0 * se


def test_mg_surface_carries_time_slices():
    pm = ModelParams(r=0.05, zeta=0.3, lambda_=0.02, mu=-0.3, rho=-0.3)
    g = make_grid_2d(math.log(100.0) - 1.0, math.log(100.0) + 1.0, 41,
                     math.log(0.04) - 2.0, math.log(0.04) + 1.0, 21)
    surf = solve_mg(pm, CALL, g, n_steps=20)
    assert surf.dt == pytest.approx(0.05)
    assert surf.prev_values.shape == surf.values.shape


def test_price_mg_validates_spot_and_variance():
    with pytest.raises(ValueError):
        price_mg(ModelParams(r=0.05), CALL, -1.0, 0.04)
    with pytest.raises(ValueError):
        price_mg(ModelParams(r=0.05), CALL, 100.0, 0.0)
