import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ltnet import config
from ltnet.errors import FitError, InputError
from ltnet.metrics import fit_threshold, oscillation_index, peak_to_peak_index, power_spectrum, regularity_index
from ltnet.simulate import Trajectory, integrate


def _trajectory(*channels, dt: float = 0.01) -> Trajectory:
    states = np.column_stack(channels)
    return Trajectory(times=np.arange(states.shape[0]) * dt, states=states)


def test_spectrum_bins():
    t = np.arange(1000) * 0.01
    freqs, mags = power_spectrum(np.sin(2 * np.pi * 2.0 * t), 0.01)
    assert_allclose(freqs[0], 0.1)
    assert_allclose(freqs[np.argmax(mags)], 2.0)


def test_spectrum_needs_samples():
    with pytest.raises(InputError, match="too short"):
        power_spectrum(np.zeros(4), 0.1)


def test_pure_sinusoid_is_regular():
    t = np.arange(1000) * 0.01
    tr = _trajectory(0.5 + 0.5 * np.sin(2 * np.pi * 1.0 * t))
    metrics = oscillation_index(tr, m=[1.0], window_fraction=1.0)
    assert metrics.chi_reg > 1e3
    assert_allclose(metrics.chi_pp, 1.0, atol=1e-9)
    assert_allclose(metrics.per_channel[0].frequency, 1.0)


def test_constant_signal():
    tr = _trajectory(np.full(500, 0.3))
    metrics = oscillation_index(tr, m=[1.0], window_fraction=1.0)
    assert metrics.chi_reg == 1.0
    assert metrics.chi_pp == 0.0
    assert metrics.chi_osc == 0.0
    assert metrics.log_chi_osc == math.log(config.CHI_OSC_FLOOR)


def test_white_noise_has_low_regularity():
    in_range = 0
    for seed in range(20):
        noise = np.random.default_rng(seed).normal(size=1000)
        chi_reg, _ = regularity_index(_trajectory(noise))
        in_range += 1.0 <= chi_reg <= 5.0
    assert in_range >= 16


def test_regularity_is_max_over_channels():
    t = np.arange(1000) * 0.01
    tr = _trajectory(np.full(1000, 0.2), np.sin(2 * np.pi * 1.0 * t))
    chi_reg, detail = regularity_index(tr)
    assert detail[0] == (1.0, 0.0)
    assert chi_reg == detail[1][0] > 1e3


def test_epsilon_range_checked():
    with pytest.raises(InputError):
        regularity_index(_trajectory(np.zeros(100)), epsilon=1.5)


def test_peak_to_peak_normalized_by_rate():
    tr = _trajectory(np.linspace(0, 1, 50), np.linspace(0, 1, 50))
    chi_pp, per_channel = peak_to_peak_index(tr, [2.0, 4.0])
    assert_allclose(per_channel, [0.5, 0.25])
    assert chi_pp == 0.5


def test_oscillating_pair_beats_quiet_pair(oscillating_pair):
    net = oscillating_pair.to_network()
    moving = oscillation_index(integrate(net, [0.1, 0.1], t_end=200.0, dt=0.01), net.m, window_fraction=0.25)
    quiet_net = net.with_input([-1.0, -1.0])
    quiet = oscillation_index(integrate(quiet_net, [0.5, 0.5], t_end=200.0, dt=0.01), quiet_net.m, window_fraction=0.25)
    assert moving.chi_pp > 0.1
    assert moving.log_chi_osc > quiet.log_chi_osc + 5


@pytest.fixture
def trimodal():
    rng = np.random.default_rng(5)
    return np.concatenate([rng.normal(mu, 0.3, 400) for mu in (0.0, 3.0, 8.0)])


def test_threshold_between_upper_modes(trimodal):
    fit = fit_threshold(trimodal)
    assert not fit.degenerate
    assert 4.5 < fit.theta < 6.5
    assert fit.trough_location == fit.theta
    assert [round(c.mean) for c in fit.mixture] == [0, 3, 8]
    assert 0.0 < fit.left_trough < 3.0


def test_threshold_stable_across_em_seeds(trimodal):
    thetas = [fit_threshold(trimodal, seed=s).theta for s in range(4)]
    assert max(thetas) - min(thetas) < 0.1


def test_collapsed_component_falls_back_to_midpoint():
    rng = np.random.default_rng(2)
    samples = np.concatenate([rng.normal(0.0, 1.0, 300), np.full(300, 5.0)])
    fit = fit_threshold(samples)
    _, centre, right = fit.mixture
    assert fit.degenerate
    assert fit.notes
    assert math.isnan(fit.trough_location)
    assert_allclose(fit.theta, 0.5 * (centre.mean + right.mean))
    assert centre.mean < fit.theta < right.mean


def test_fit_needs_enough_samples():
    with pytest.raises(FitError):
        fit_threshold(np.arange(50.0))


def test_fit_drops_non_finite_samples(trimodal):
    padded = np.concatenate([trimodal, [np.nan, np.inf]])
    assert_allclose(fit_threshold(padded).theta, fit_threshold(trimodal).theta)
