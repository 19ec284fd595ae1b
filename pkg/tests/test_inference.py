import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqreg.exceptions import DegenerateEfficiency
from mqreg.fitting import Dataset, MQConfig, MQFit, fit
from mqreg.inference import sandwich_cov, tau_cov, tau_hat


def _fake_fit(residuals, sigma, q, c, p=1):
    return MQFit(beta=np.zeros(p), sigma=sigma, residuals=np.asarray(residuals, float),
                 converged=True, n_iter=1, config=MQConfig(q=q, c=c))


def test_tau_hat_hand_value():
    assert tau_hat(np.array([-1.0, 0.0, 1.0]), 0.5, 2.0) == pytest.approx(1.5)


def test_tau_hat_all_outside():
    assert tau_hat(np.array([-5.0, 4.0, 6.0]), 0.5, 1.0) == 0.0


def test_tau_hat_degenerate():
    with pytest.raises(DegenerateEfficiency):
        tau_hat(np.zeros(4), 0.5, 1.0)


def test_tau_peaks_at_large_c_for_normal():
    r = np.random.default_rng(0).standard_normal(200_000)
    cs = np.linspace(0.5, 4, 36)
    taus = [tau_hat(r, 0.5, c) for c in cs]
    assert cs[int(np.argmax(taus))] > 2.5


def test_sandwich_hand_value():
    # standardized residuals of +-1: A = 2, B = 2
    y = np.array([-1.7, 1.7])
    d = Dataset.intercept_only(y)
    f = _fake_fit(y, 1.7, 0.5, 1e6)
    cov = sandwich_cov(d, f)
    assert cov.se[0] == pytest.approx(1.7 / np.sqrt(2), rel=1e-12)


def test_replication_halves_covariance():
    rng = np.random.default_rng(1)
    n = 300
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    d = Dataset(X @ [1, 2] + rng.standard_t(3, n), X)
    f = fit(d, q=0.4, c=1.3)
    d2 = Dataset(np.tile(d.y, 2), np.tile(X, (2, 1)))
    f2 = MQFit(f.beta, f.sigma, np.tile(f.residuals, 2), True, 1, f.config)
    np.testing.assert_allclose(sandwich_cov(d2, f2).cov, sandwich_cov(d, f).cov / 2, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), q=st.floats(0.05, 0.95), c=st.floats(0.5, 4.0),
       p=st.integers(1, 4))
def test_sandwich_symmetric_psd(seed, q, c, p):
    rng = np.random.default_rng(seed)
    n = 200
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    d = Dataset(X @ rng.normal(size=p) + rng.standard_t(3, n), X)
    f = fit(d, MQConfig(q=q, c=c))
    cov = sandwich_cov(d, f).cov
    assert np.max(np.abs(cov - cov.T)) <= 1e-12 * max(1.0, np.max(np.abs(cov)))
    assert np.min(np.linalg.eigvalsh(cov)) >= -1e-10 * np.trace(cov)


def test_tau_form_close_to_sandwich_for_iid_design():
    rng = np.random.default_rng(2)
    n = 20_000
    X = np.column_stack([np.ones(n), 1 + rng.standard_normal(n)])
    d = Dataset(X @ [100, 4] + rng.standard_normal(n), X)
    f = fit(d, q=0.5, c=1.345)
    a, b = sandwich_cov(d, f), tau_cov(d, f)
    assert b.kind == "tau"
    np.testing.assert_allclose(a.se, b.se, rtol=0.03)


def test_theoretical_se_value():
    # se(beta1) at n=1e4, c=1.345, N(0,1) errors, x ~ N(1,1): sqrt(1/(tau n))
    from mqreg.ali import expected_psi_sq_normal, normal_cdf
    c = 1.345
    tau = (2 * normal_cdf(c) - 1) ** 2 / expected_psi_sq_normal(c)
    assert np.sqrt(1 / (tau * 1e4)) == pytest.approx(0.0103, rel=0.01)
