import math

import numpy as np
import pytest

from lookback_ctmc import oracle
from lookback_ctmc.ctmc import build_generator, hitting_prob_lower
from lookback_ctmc.grid import Grid
from lookback_ctmc.model import CEV, BlackScholes
from lookback_ctmc.oracle import FdConfig, McConfig, OracleError
from lookback_ctmc.pricer import LookbackContract, estimate_order

from .conftest import D, R


# closed form and integral representation


@pytest.mark.parametrize("M", [1.0, 1.2, 1.5])
def test_closed_form_matches_integral(bs, M):
    c = LookbackContract("floating_put", 1.0, 1.0, M=M, r=R, d=D)
    assert oracle.bs_closed_form_floating_put(c, bs) == pytest.approx(
        oracle.bs_integral_price(c, bs), abs=1e-10)


def test_closed_form_zero_carry_branch():
    m = BlackScholes(0.3, 0.04, 0.04)
    c = LookbackContract("floating_put", 1.0, 1.0, M=1.3, r=0.04, d=0.04)
    assert oracle.bs_closed_form_floating_put(c, m) == pytest.approx(
        oracle.bs_integral_price(c, m), abs=1e-9)


def test_closed_form_limits(bs):
    expired = LookbackContract("floating_put", 1.0, 1.0, M=1.4, r=R, d=D, t=1.0)
    assert oracle.bs_closed_form_floating_put(expired, bs) == pytest.approx(0.4, abs=1e-15)
    # deep in the money: the running maximum almost surely stays at M
    deep = LookbackContract("floating_put", 1.0, 0.05, M=50.0, r=R, d=D)
    tau = 0.05
    assert oracle.bs_closed_form_floating_put(deep, bs) == pytest.approx(
        50.0 * math.exp(-R * tau) - math.exp(-D * tau), abs=1e-10)


def test_closed_form_rejects_other_models(cev, cev_put):
    with pytest.raises(OracleError):
        oracle.bs_closed_form_floating_put(cev_put, cev)


def test_integral_prices_satisfy_parity(bs):
    tau = 1.0
    flp = oracle.bs_integral_price(LookbackContract("floating_put", 1.0, tau, M=1.5, r=R, d=D), bs)
    fic = oracle.bs_integral_price(LookbackContract("fixed_call", 1.0, tau, M=1.5, K=1.2, r=R, d=D), bs)
    assert fic == pytest.approx(flp + math.exp(-D * tau) - 1.2 * math.exp(-R * tau), abs=1e-10)
    flc = oracle.bs_integral_price(LookbackContract("floating_call", 1.0, tau, m=0.8, r=R, d=D), bs)
    fip = oracle.bs_integral_price(LookbackContract("fixed_put", 1.0, tau, m=0.8, K=0.9, r=R, d=D), bs)
    assert fip == pytest.approx(0.9 * math.exp(-R * tau) - math.exp(-D * tau) + flc, abs=1e-10)


def test_extremum_distributions_are_probabilities(bs):
    ys = np.linspace(1.0, 4.0, 31)
    p = oracle.bs_max_exceedance(bs, 1.0, ys, 1.0)
    assert p[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(p) <= 0) and np.all((p >= 0) & (p <= 1))
    q = oracle.bs_min_subceedance(bs, 1.0, 1.0 / ys, 1.0)
    assert q[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(q) <= 0) and np.all((q >= 0) & (q <= 1))


# Monte Carlo


def test_mc_reproducible_and_thread_invariant(bs, put):
    cfg = McConfig(paths=4000, steps=100, seed=7, chunk=1000)
    a = oracle.mc_price(put, bs, cfg)
    b = oracle.mc_price(put, bs, cfg)
    c = oracle.mc_price(put, bs, McConfig(paths=4000, steps=100, seed=7, chunk=1000, threads=3))
    assert a == b
    assert a.price == c.price and a.stderr == c.stderr
    d = oracle.mc_price(put, bs, McConfig(paths=4000, steps=100, seed=8, chunk=1000))
    assert d.price != a.price


def test_mc_brackets_closed_form(bs, put):
    exact = oracle.bs_closed_form_floating_put(put, bs)
    res = oracle.mc_price(put, bs, McConfig(paths=40_000, steps=400))
    assert res.steps == 400
    assert abs(res.price - exact) <= 3 * res.stderr + res.bias_allowance
    # discrete monitoring underestimates the maximum
    assert res.coarse_price < res.price < exact + 3 * res.stderr
    assert abs(res.debiased - exact) <= 4 * res.debiased_stderr
    assert not res.low_power


def test_mc_near_deterministic_path():
    m = BlackScholes(1e-8, 0.05, 0.0)
    c = LookbackContract("floating_put", 1.0, 1.0, M=1.2, r=0.05, d=0.0)
    res = oracle.mc_price(c, m, McConfig(paths=100, steps=10))
    assert res.price == pytest.approx(1.2 * math.exp(-0.05) - 1.0, abs=1e-7)
    assert res.low_power


def test_mc_expired_contract_is_intrinsic(bs):
    c = LookbackContract("floating_put", 1.0, 1.0, M=1.3, r=R, d=D, t=1.0)
    res = oracle.mc_price(c, bs, McConfig(paths=10))
    assert res.price == pytest.approx(0.3) and res.stderr == 0.0


def test_mc_rejects_cgmy_and_bad_config(cgmy, put):
    with pytest.raises(OracleError, match="CGMY"):
        oracle.mc_price(put, cgmy, McConfig(paths=10))
    with pytest.raises(OracleError):
        McConfig(paths=0)
    with pytest.raises(OracleError):
        McConfig(threads=0)


def test_mc_regime_switching_and_jumps_run(rsbs, kou, put):
    for m in (rsbs, kou):
        res = oracle.mc_price(put, m, McConfig(paths=2000, steps=50))
        assert 0.3 < res.price < 0.8 and res.stderr > 0


# finite differences


def test_fd_boundaries(cev, cev_put):
    fd = FdConfig(40, 20, 3.0)
    u = oracle.fd_lattice(cev, cev_put, fd)
    dx = fd.Mbar / fd.N_x
    j = np.arange(fd.N_x + 1)
    # left boundary below the artificial top plane
    assert np.allclose(u[1:-1, 0], math.exp(-cev.r * cev_put.tau) * j[1:-1] * dx, atol=1e-14)
    assert np.allclose(u[-1], (fd.N_x - j) * dx, atol=1e-14)


def test_fd_matches_closed_form(bs, put):
    v = oracle.fd_price_floating_put(bs, put, FdConfig(200, 200, 4.0))
    assert v == pytest.approx(oracle.bs_closed_form_floating_put(put, bs), abs=2e-4)


def test_fd_monotone_in_running_max(cev):
    prices = [oracle.fd_price_floating_put(cev, LookbackContract("floating_put", 1.0, 0.5, M=M, r=0.1, d=0.0),
                                           FdConfig(120, 120, 3.0))
              for M in (1.0, 1.1, 1.25, 1.5, 2.0)]
    assert np.all(np.diff(prices) > 0)


def test_fd_rejects_bad_inputs(kou, cev, cev_put):
    with pytest.raises(OracleError):
        oracle.fd_price_floating_put(kou, cev_put, FdConfig(20, 20, 3.0))
    with pytest.raises(OracleError):
        oracle.fd_price_floating_put(cev, cev_put, FdConfig(20, 20, 0.9))
    call = LookbackContract("floating_call", 1.0, 0.5, m=1.0, r=0.1, d=0.0)
    with pytest.raises(OracleError):
        oracle.fd_price_floating_put(cev, call, FdConfig(20, 20, 3.0))
    with pytest.raises(OracleError):
        FdConfig(3, 10, 3.0)


# scale function


def test_scale_probability_properties(bs, cev):
    for m in (bs, cev):
        xs = np.linspace(0.8, 1.6, 17)
        p = [oracle.scale_hitting_prob(m, 0.8, 1.6, x) for x in xs]
        assert p[0] == 1.0 and p[-1] == pytest.approx(0.0, abs=1e-15)
        assert np.all(np.diff(p) <= 0)


def test_scale_probability_zero_drift_is_linear():
    m = BlackScholes(0.3, 0.04, 0.04)
    assert oracle.scale_hitting_prob(m, 0.75, 1.75, 1.0) == pytest.approx(0.75, abs=1e-12)


def test_scale_probability_rejects_jumps(kou):
    with pytest.raises(OracleError):
        oracle.scale_hitting_prob(kou, 0.8, 1.6, 1.0)
    with pytest.raises(OracleError):
        oracle.scale_hitting_prob(BlackScholes(0.3, R, D), 0.8, 1.6, 2.0)


def test_chain_hitting_probability_converges_to_scale_oracle():
    m = CEV(0.25, -0.5, 0.1, 0.0)
    ref = oracle.scale_hitting_prob(m, 0.8, 1.6, 1.1)
    errs = []
    for k in (15, 30, 60, 120):
        g = Grid(np.linspace(0.5, 2.0, 3 * k + 1), np.array([]))
        errs.append((k, hitting_prob_lower(build_generator(m, g), 0.8, 1.6, 1.1) - ref))
    assert estimate_order(errs) >= 1.7
