import numpy as np
import pytest
from scipy import integrate

from lookback_ctmc.model import (
    CEV,
    CGMY,
    BlackScholes,
    Kou,
    ModelError,
    RegimeSwitchingBS,
    characteristics,
    effective_vol,
    is_levy,
)


def test_cev_local_variance_at_one(cev):
    ch = characteristics(cev)
    assert ch.sig2(np.array(1.0)) == pytest.approx(0.0625, abs=1e-15)
    assert ch.sig2(np.array(0.0)) == 0.0
    assert ch.sig2(np.array(4.0)) == pytest.approx(0.0625 * 4.0, rel=1e-14)


def test_bs_characteristics(bs):
    ch = characteristics(bs)
    x = np.array([0.5, 2.0])
    assert np.allclose(ch.mu(x), 0.03 * x)
    assert np.allclose(ch.sig2(x), 0.09 * x**2)
    lg = characteristics(bs, log_space=True)
    assert lg.log_space and lg.mu(np.array(0.0)) == pytest.approx(0.03 - 0.045)


def test_kou_density_integrates_to_intensity(kou):
    f = characteristics(kou).levy_density
    lo = integrate.quad(lambda z: float(f(np.array(z))), -np.inf, 0, epsabs=1e-13, epsrel=1e-12)[0]
    hi = integrate.quad(lambda z: float(f(np.array(z))), 0, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
    assert lo + hi == pytest.approx(3.0, rel=1e-10)


def test_kou_tails_and_martingale_drift(kou):
    assert float(kou.upper_tail(0.0) + kou.lower_tail(0.0)) == pytest.approx(3.0)
    comp = 0.5 / 0.9 + 0.5 / 1.1 - 1.0
    assert kou.jump_compensator == pytest.approx(comp, rel=1e-14)
    ch = characteristics(kou)
    assert float(ch.mu(np.array(0.0))) == pytest.approx(0.03 - 0.045 - 3.0 * comp)


def test_cgmy_tails_match_density(cgmy):
    for a in (0.01, 0.1, 0.7):
        up = integrate.quad(lambda z: float(cgmy.density(np.array(z))), a, np.inf, epsrel=1e-12)[0]
        dn = integrate.quad(lambda z: float(cgmy.density(np.array(-z))), a, np.inf, epsrel=1e-12)[0]
        assert float(cgmy.upper_tail(a)) == pytest.approx(up, rel=1e-9)
        assert float(cgmy.lower_tail(a)) == pytest.approx(dn, rel=1e-9)


def test_cgmy_small_jump_moments(cgmy):
    e1, e2 = 0.03, 0.05
    var = integrate.quad(lambda z: z * z * float(cgmy.density(np.array(z))), -e1, 0, epsrel=1e-12)[0]
    var += integrate.quad(lambda z: z * z * float(cgmy.density(np.array(z))), 0, e2, epsrel=1e-12)[0]
    assert float(cgmy.small_jump_variance(e1, e2)) == pytest.approx(var, rel=1e-9)
    mean = integrate.quad(lambda z: z * float(cgmy.density(np.array(z))), e2, np.inf, epsrel=1e-12)[0]
    mean -= integrate.quad(lambda z: z * float(cgmy.density(np.array(-z))), e1, np.inf, epsrel=1e-12)[0]
    assert float(cgmy.large_jump_mean(e1, e2)) == pytest.approx(mean, rel=1e-9)


@pytest.mark.parametrize("Y", [0.0, 0.5, 1.0, 1.5])
def test_cgmy_compensated_exponent(Y):
    m = CGMY(1.0, 9.0, 8.0, Y)
    f = lambda z: (np.expm1(z) - z) * float(m.density(np.array(z)))
    # z = +-s**2 removes the integrable singularity at the origin
    g = lambda s: 2 * s * (f(s * s) + f(-s * s))
    val = integrate.quad(g, 0, 8, epsabs=1e-14, epsrel=1e-13, limit=500)[0]
    assert m.compensated_exponent == pytest.approx(val, rel=1e-9)


def test_regime_switching_validation():
    with pytest.raises(ModelError):
        RegimeSwitchingBS((0.2, 0.4), ((-0.75, 0.7), (0.25, -0.25)))
    with pytest.raises(ModelError):
        RegimeSwitchingBS((0.2, 0.4), ((0.75, -0.75), (0.25, -0.25)))
    m = RegimeSwitchingBS((0.2, 0.4), ((-0.75, 0.75), (0.25, -0.25)))
    assert m.regime_count == 2
    with pytest.raises(ModelError):
        characteristics(m)
    with pytest.raises(ModelError):
        characteristics(m, regime=2)


@pytest.mark.parametrize("bad", [
    lambda: BlackScholes(0.0),
    lambda: BlackScholes(-0.1),
    lambda: CEV(0.25, float("nan")),
    lambda: Kou(0.3, -1.0, 0.5, 0.5, 0.1, 0.1),
    lambda: Kou(0.3, 3.0, 0.6, 0.5, 0.1, 0.1),
    lambda: Kou(0.3, 3.0, 0.5, 0.5, 1.2, 0.1),
    lambda: CGMY(1.0, 9.0, 8.0, 2.0),
    lambda: CGMY(0.0, 9.0, 8.0, 0.5),
])
def test_invalid_parameters(bad):
    with pytest.raises(ModelError):
        bad()


def test_levy_classification_and_effective_vol(bs, cev, kou, cgmy, rsbs):
    assert is_levy(kou) and is_levy(cgmy)
    assert not any(is_levy(m) for m in (bs, cev, rsbs))
    assert effective_vol(bs) == 0.3 and effective_vol(rsbs) == 0.4
    assert effective_vol(kou) > 0.3
    assert 0 < effective_vol(cgmy) < 1
    with pytest.raises(ModelError):
        characteristics(cev, log_space=True)
