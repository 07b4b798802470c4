"""Oscillation indices computed from trajectories, plus the oscillation threshold fit.

chi_reg measures how sharp the dominant spectral peak is, chi_pp the
normalized steady-state amplitude, and chi_osc = chi_reg * chi_pp combines
the two. The threshold is fitted on log chi_osc samples with a 3-component
Gaussian mixture.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.stats import norm
from sklearn.mixture import GaussianMixture

from ltnet import config
from ltnet.errors import EmptyWindowError, FitError, InputError
from ltnet.simulate import Trajectory, steady_window

logger = logging.getLogger(__name__)

MIN_SPECTRUM_LENGTH = 16
MIN_FIT_SAMPLES = 300


@dataclass(frozen=True)
class ChannelDetail:
    chi_reg: float
    frequency: float
    chi_pp: float


@dataclass(frozen=True)
class OscillationMetrics:
    chi_reg: float
    chi_pp: float
    chi_osc: float
    per_channel: tuple[ChannelDetail, ...]

    @property
    def log_chi_osc(self) -> float:
        return log_chi_osc(self)


def log_chi_osc(metrics: OscillationMetrics) -> float:
    return math.log(max(metrics.chi_osc, config.CHI_OSC_FLOOR))


def power_spectrum(signal, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centred rectangular-window DFT magnitudes at frequencies k / (L dt), k >= 1."""
    x = np.asarray(signal, dtype=float).ravel()
    if x.shape[0] < MIN_SPECTRUM_LENGTH:
        raise InputError(f"series too short for a spectrum ({x.shape[0]} < {MIN_SPECTRUM_LENGTH} samples)")
    x = x - x.mean()
    magnitudes = np.abs(scipy.fft.rfft(x))
    freqs = scipy.fft.rfftfreq(x.shape[0], d=dt)
    return freqs[1:], magnitudes[1:]


def _channel_regularity(signal, dt: float, epsilon: float) -> tuple[float, float]:
    freqs, mags = power_spectrum(signal, dt)
    scale = max(1.0, float(np.abs(signal).max())) * len(signal)
    peak_at = int(np.argmax(mags))
    peak = float(mags[peak_at])
    if peak <= config.SPECTRAL_FLOOR * scale:
        return 1.0, 0.0

    f = float(freqs[peak_at])
    df = float(freqs[0])
    # freqs[j] = (j + 1) * df
    lo = int(round((1 - epsilon) * f / df)) - 1
    hi = int(round((1 + epsilon) * f / df)) - 1
    if lo == peak_at:
        lo -= 1
    if hi == peak_at:
        hi += 1
    sides = [float(mags[j]) for j in (lo, hi) if 0 <= j < mags.shape[0]]
    if not sides:
        return 1.0, f
    side = max(max(sides), config.SPECTRAL_FLOOR * peak)
    return max(1.0, peak / side), f


def regularity_index(window: Trajectory, epsilon: float | None = None) -> tuple[float, list[tuple[float, float]]]:
    """chi_reg = max over channels, with per-channel (chi_reg_i, f_i)."""
    epsilon = config.EPSILON if epsilon is None else epsilon
    if not 0 < epsilon < 1:
        raise InputError(f"epsilon must lie in (0, 1) (got {epsilon})")
    detail = [_channel_regularity(window.states[:, i], window.dt, epsilon) for i in range(window.states.shape[1])]
    return max(c for c, _ in detail), detail


def peak_to_peak_index(window: Trajectory, m) -> tuple[float, np.ndarray]:
    """chi_pp = max_i (max_t x_i - min_t x_i) / m_i over the window."""
    if len(window) == 0:
        raise EmptyWindowError("peak-to-peak index needs a non-empty window")
    spread = window.states.max(axis=0) - window.states.min(axis=0)
    per_channel = spread / np.asarray(m, dtype=float)
    return float(per_channel.max()), per_channel


def oscillation_index(
    tr: Trajectory,
    m,
    epsilon: float | None = None,
    window_fraction: float | None = None,
) -> OscillationMetrics:
    window = steady_window(tr, window_fraction)
    chi_reg, reg_detail = regularity_index(window, epsilon)
    chi_pp, pp_detail = peak_to_peak_index(window, m)
    return OscillationMetrics(
        chi_reg=chi_reg,
        chi_pp=chi_pp,
        chi_osc=chi_reg * chi_pp,
        per_channel=tuple(
            ChannelDetail(chi_reg=c, frequency=f, chi_pp=float(p)) for (c, f), p in zip(reg_detail, pp_detail)
        ),
    )


# === Threshold fit ===


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    variance: float


@dataclass
class ThresholdFit:
    theta: float
    mixture: list[MixtureComponent]  # sorted by mean: left, centre, right
    trough_location: float           # density argmin between centre and right (nan when the fallback was used)
    left_trough: float               # same between left and centre, or their midpoint
    degenerate: bool = False
    converged: bool = True
    notes: list[str] = field(default_factory=list)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return sum(c.weight * norm.pdf(x, c.mean, math.sqrt(c.variance)) for c in self.mixture)


def _trough(fit: ThresholdFit, lo: float, hi: float, points: int = 2001) -> float | None:
    grid = np.linspace(lo, hi, points)
    k = int(np.argmin(fit.density(grid)))
    if k == 0 or k == points - 1:
        return None
    return float(grid[k])


def fit_threshold(log_chi_samples, seed: int | None = None) -> ThresholdFit:
    """Three-component Gaussian mixture on log chi_osc; theta is the trough between the two upper modes."""
    x = np.asarray(log_chi_samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.shape[0] < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} finite samples, got {x.shape[0]}")

    reg_covar = 1e-6
    gmm = GaussianMixture(
        n_components=3,
        covariance_type="full",
        init_params="kmeans",
        max_iter=config.GMM_MAX_ITER,
        tol=config.GMM_TOL,
        reg_covar=reg_covar,
        random_state=config.GMM_SEED if seed is None else seed,
    )
    try:
        gmm.fit(x.reshape(-1, 1))
    except ValueError as e:
        raise FitError(f"Gaussian mixture fit failed: {e}") from e

    order = np.argsort(gmm.means_.ravel())
    mixture = [
        MixtureComponent(
            weight=float(gmm.weights_[k]),
            mean=float(gmm.means_.ravel()[k]),
            variance=float(gmm.covariances_.reshape(-1)[k]),
        )
        for k in order
    ]
    left, centre, right = mixture
    fit = ThresholdFit(theta=math.nan, mixture=mixture, trough_location=math.nan, left_trough=math.nan,
                       converged=bool(gmm.converged_))
    if not fit.converged:
        fit.notes.append("EM hit the iteration cap before converging")
        logger.warning("Gaussian mixture did not converge in %d iterations", config.GMM_MAX_ITER)

    spread = max(float(x.std()), 1e-12)
    problems = []
    for c in mixture:
        if c.variance <= 10 * reg_covar:
            problems.append(f"component at {c.mean:.4g} collapsed (variance {c.variance:.3g})")
        if c.weight < 1e-3:
            problems.append(f"component at {c.mean:.4g} has negligible weight {c.weight:.3g}")
    if right.mean - centre.mean < 1e-9 * spread:
        problems.append("centre and right components coincide")

    trough = None if problems else _trough(fit, centre.mean, right.mean)
    if trough is None:
        if not problems:
            problems.append("no interior density minimum between the two upper modes")
        fit.degenerate = True
        fit.notes.extend(problems)
        fit.theta = 0.5 * (centre.mean + right.mean)
        logger.warning("Degenerate threshold fit (%s); using midpoint %.4g", "; ".join(problems), fit.theta)
    else:
        fit.theta = trough
        fit.trough_location = trough

    left_trough = None if fit.degenerate else _trough(fit, left.mean, centre.mean)
    fit.left_trough = left_trough if left_trough is not None else 0.5 * (left.mean + centre.mean)
    return fit
