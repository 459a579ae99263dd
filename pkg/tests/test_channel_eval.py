import io
import logging

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from cvbench.channel_eval import (
    ExperimentRecord,
    GaussianChannelParams,
    _displacement_matrix,
    classify_channel,
    displaced_thermal,
    fit_channel,
    gaussian_channel_fidelity,
    gaussian_channel_fidelity_mc,
    parse_records,
    read_records,
    synthetic_records,
    write_records,
)
from cvbench.classical_channel import Verdict, benchmark_bound, heterodyne_fidelity
from cvbench.prior import FLAT, GaussianPrior

LAMBDAS = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0]


def F(g, nbar, prior):
    return gaussian_channel_fidelity(GaussianChannelParams(g, nbar), prior).value


@pytest.mark.parametrize("lam", LAMBDAS)
def test_identity_channel(lam):
    assert F(1.0, 0.0, GaussianPrior(lam)) == 1.0


@pytest.mark.parametrize("lam", LAMBDAS)
def test_heterodyne_channel_hits_bound(lam):
    prior = GaussianPrior(lam)
    g = 1 / (1 + lam)
    assert abs(F(g, g * g, prior) - benchmark_bound(prior)) < 1e-12


@pytest.mark.parametrize("g", [0.0, 0.4, 1.0, 1.6])
def test_gaussian_matches_heterodyne_family(g):
    prior = GaussianPrior(0.8)
    assert F(g, g * g, prior) == pytest.approx(heterodyne_fidelity(prior, g), rel=1e-14)


def test_flat_limit():
    assert F(1.0, 1.0, FLAT) == 0.5
    assert F(1.0, 0.0, FLAT) == 1.0
    assert F(0.9, 0.0, FLAT) == 0.0
    # approach from small lambda
    assert F(1.0, 1.0, GaussianPrior(1e-9)) == pytest.approx(0.5)


def test_monotonicity():
    prior = GaussianPrior(1.0)
    noise = [F(0.7, n, prior) for n in np.linspace(0, 3, 31)]
    assert all(a > b for a, b in zip(noise, noise[1:]))
    rising = [F(g, 0.2, prior) for g in np.linspace(0, 1, 21)]
    assert all(a < b for a, b in zip(rising, rising[1:]))
    falling = [F(g, 0.2, prior) for g in np.linspace(1, 3, 21)]
    assert all(a > b for a, b in zip(falling, falling[1:]))


@pytest.mark.parametrize("lam", [0.1, 1.0, 5.0])
def test_heterodyne_family_maximum_is_bound(lam):
    prior = GaussianPrior(lam)
    grid = np.linspace(0, 2, 2001)
    vals = [F(g, g * g, prior) for g in grid]
    g0 = grid[int(np.argmax(vals))]
    res = minimize_scalar(lambda g: -F(g, g * g, prior), bounds=(max(g0 - 0.01, 0), g0 + 0.01), method="bounded",
                          options={"xatol": 1e-10})
    assert abs(-res.fun - benchmark_bound(prior)) < 1e-9
    assert max(vals) <= benchmark_bound(prior) + 1e-15


def test_displacement_matrix_matches_expm():
    d, beta = 40, 0.7 - 0.5j
    a = np.diag(np.sqrt(np.arange(1, 2 * d)), 1)
    D = expm(beta * a.conj().T - np.conj(beta) * a)[:d, :d]
    assert np.max(np.abs(_displacement_matrix(beta, d) - D)) < 1e-12


def test_displaced_thermal_is_state():
    rho = displaced_thermal(0.8 + 0.3j, 0.4, 60)
    assert abs(np.trace(rho).real - 1) < 1e-10
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_mc_oracle_against_closed_form():
    rng = np.random.default_rng(2024)
    hits = 0
    for k in range(20):
        g, nbar, lam = rng.uniform(0, 1.2), rng.uniform(0, 1.5), rng.uniform(1, 3)
        prior = GaussianPrior(lam)
        params = GaussianChannelParams(g, nbar)
        rep = gaussian_channel_fidelity_mc(params, prior, 400, seed=k)
        hits += abs(rep.value - F(g, nbar, prior)) <= 3 * rep.stderr
    assert hits >= 19


# -- fitting ------------------------------------------------------------------------


ALPHAS = [complex(x, y) for x in (-1.5, -0.5, 0.5, 1.5) for y in (-1.0, 0.0, 1.0)]


def test_fit_recovers_parameters():
    truth = GaussianChannelParams(0.9, 0.3)
    fit = fit_channel(synthetic_records(truth, ALPHAS * 10, 2000, seed=0))
    assert abs(fit.params.gain - 0.9) < 5 * fit.gain_stderr + 1e-3
    assert abs(fit.params.added_noise - 0.3) < 5 * fit.noise_stderr
    assert abs(fit.phase) < 0.01


def test_fit_identity_records():
    records = [ExperimentRecord(a, a, 0.5, 0.5) for a in ALPHAS]
    fit = fit_channel(records)
    assert fit.params.gain == pytest.approx(1.0, abs=1e-15)
    assert fit.params.added_noise == 0.0
    assert fit.residual_rms == 0.0


@pytest.mark.parametrize("var,nbar", [(1.5, 1.0), (1.0, 0.5)])
def test_fit_noise_mapping(var, nbar):
    fit = fit_channel([ExperimentRecord(a, 0.5 * a, var, var) for a in ALPHAS])
    assert fit.params.added_noise == pytest.approx(nbar, abs=1e-15)
    assert fit.params.gain == pytest.approx(0.5, abs=1e-15)


def test_fit_converges():
    truth = GaussianChannelParams(0.8, 0.5)
    rng = np.random.default_rng(1)
    errors = []
    for m in (10, 100, 1000):
        alphas = rng.normal(size=m) + 1j * rng.normal(size=m)
        fit = fit_channel(synthetic_records(truth, alphas, 200, seed=m))
        errors.append(abs(fit.params.gain - 0.8) + abs(fit.params.added_noise - 0.5))
    assert errors[2] < errors[0]
    assert errors[2] < 0.02


def test_fit_without_variances_warns(caplog):
    records = [ExperimentRecord(a, 0.7 * a) for a in ALPHAS]
    with caplog.at_level(logging.WARNING):
        fit = fit_channel(records)
    assert fit.params.added_noise is None
    assert fit.params.gain == pytest.approx(0.7)
    assert "variances" in caplog.text
    with pytest.raises(ValueError):
        gaussian_channel_fidelity(fit.params, GaussianPrior(1.0))


def test_fit_needs_records():
    with pytest.raises(ValueError):
        fit_channel([ExperimentRecord(1, 1, 0.5, 0.5)] * 5)


def test_unphysical_variance():
    with pytest.raises(ValueError):
        ExperimentRecord(1, 1, 0.3, 0.5)


# -- classification --------------------------------------------------------------------


def test_classify_measured_flat():
    rep = classify_channel(0.58)
    assert rep.verdict is Verdict.QUANTUM
    assert rep.benchmark == 0.5
    thresholds = rep.metadata["reference_thresholds"]
    assert [t["exceeded"] for t in thresholds] == [False, False]
    assert classify_channel(0.5).verdict is Verdict.AT_LIMIT
    assert classify_channel(0.45).verdict is Verdict.BELOW_CLASSICAL_LIMIT


def test_classify_with_uncertainty():
    assert classify_channel(0.58, stderr=0.03).verdict is Verdict.AT_LIMIT
    assert classify_channel(0.64, stderr=0.02).verdict is Verdict.QUANTUM


def test_classify_channel_params():
    prior = GaussianPrior(1.0)
    assert classify_channel(GaussianChannelParams(1.0, 0.0), prior).verdict is Verdict.QUANTUM
    assert classify_channel(GaussianChannelParams(0.5, 0.25), prior).verdict is Verdict.AT_LIMIT
    assert classify_channel(GaussianChannelParams(1.0, 1.0), prior).verdict is Verdict.BELOW_CLASSICAL_LIMIT


def test_classify_rejects_out_of_range():
    with pytest.raises(ValueError):
        classify_channel(1.2)


# -- CSV ---------------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    records = synthetic_records(GaussianChannelParams(0.9, 0.2), ALPHAS, 100, seed=3)
    path = tmp_path / "cal.csv"
    write_records(path, records)
    assert read_records(path) == records


def test_csv_missing_variances():
    text = "re_in,im_in,re_out,im_out,var_q,var_p\n1,0,0.9,0,,\n0,1,0,0.9,0.6,0.6\n"
    records = list(parse_records(io.StringIO(text)))
    assert not records[0].has_variances
    assert records[1].out_var_q == 0.6


def test_csv_bad_header():
    with pytest.raises(ValueError):
        list(parse_records(io.StringIO("a,b\n1,2\n")))


def test_csv_bad_value_reports_line():
    text = "re_in,im_in,re_out,im_out,var_q,var_p\n1,0,x,0,0.5,0.5\n"
    with pytest.raises(ValueError, match="line 2"):
        list(parse_records(io.StringIO(text)))
