"""Fixed-step RK4 integration of tau * dx/dt = -x + [W x + u]_0^m."""

import logging
from dataclasses import dataclass

import numpy as np

from ltnet import config
from ltnet.errors import EmptyWindowError, InputError, SimulationError
from ltnet.model import Network, ensure_valid, network_digest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Provenance:
    network_hash: str
    seed: int | None
    dt: float


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray   # uniform grid, may start after 0 when only a tail was kept
    states: np.ndarray  # T x N
    provenance: Provenance | None = None

    @property
    def dt(self) -> float:
        if self.provenance is not None:
            return self.provenance.dt
        if self.times.shape[0] < 2:
            raise InputError("cannot infer dt from fewer than two samples")
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return int(self.times.shape[0])


def _kept_samples(total: int, fraction: float) -> int:
    return int(round(fraction * total))


def integrate_many(
    net: Network,
    X0,
    t_end: float | None = None,
    dt: float | None = None,
    keep_fraction: float = 1.0,
    seed: int | None = None,
) -> list[Trajectory]:
    """Integrate several initial conditions (rows of X0) in one vectorized sweep.

    Each step is a classical RK4 step followed by clamping to [0, m].
    Only the final keep_fraction of the samples is stored.
    """
    ensure_valid(net)
    t_end = config.SIM_T_END if t_end is None else float(t_end)
    dt = config.SIM_DT if dt is None else float(dt)
    if not dt > 0:
        raise InputError(f"dt must be positive (got {dt})")
    if not t_end >= dt:
        raise InputError(f"t_end ({t_end}) must be at least dt ({dt})")
    if not 0 < keep_fraction <= 1:
        raise InputError(f"keep_fraction must lie in (0, 1] (got {keep_fraction})")

    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != net.N:
        raise InputError(f"initial condition has {X0.shape[1]} entries, network has {net.N} nodes")
    slack = 1e-9 * max(1.0, float(net.m.max()))
    if np.any(X0 < -slack) or np.any(X0 > net.m + slack):
        raise InputError("initial condition lies outside the box [0, m]")

    W, u, tau = net.W, net.u[:, None], net.tau[:, None]
    m = net.m[:, None]
    n_steps = int(round(t_end / dt))
    total = n_steps + 1
    keep = _kept_samples(total, keep_fraction)
    if keep == 0:
        raise EmptyWindowError(f"keep_fraction {keep_fraction} keeps no samples out of {total}")
    first_kept = total - keep

    def rhs(X):
        return (-X + np.clip(W @ X + u, 0.0, m)) / tau

    X = np.clip(X0.T.copy(), 0.0, m)
    out = np.empty((keep, net.N, X.shape[1]))
    if first_kept == 0:
        out[0] = X
    h = dt
    for step in range(1, total):
        k1 = rhs(X)
        k2 = rhs(X + 0.5 * h * k1)
        k3 = rhs(X + 0.5 * h * k2)
        k4 = rhs(X + h * k3)
        X = np.clip(X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), 0.0, m)
        if not np.all(np.isfinite(X)):
            raise SimulationError("non-finite state", step=step)
        if step >= first_kept:
            out[step - first_kept] = X

    times = np.arange(first_kept, total) * dt
    provenance = Provenance(network_hash=network_digest(net), seed=seed, dt=dt)
    return [Trajectory(times=times, states=out[:, :, k].copy(), provenance=provenance) for k in range(X.shape[1])]


def integrate(
    net: Network,
    x0,
    t_end: float | None = None,
    dt: float | None = None,
    keep_fraction: float = 1.0,
    seed: int | None = None,
) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise InputError(f"x0 must be a vector, got shape {x0.shape}")
    return integrate_many(net, x0[None, :], t_end=t_end, dt=dt, keep_fraction=keep_fraction, seed=seed)[0]


def random_initial_conditions(m, count: int, seed) -> np.ndarray:
    """count x N draws from U(0, m)."""
    rng = np.random.default_rng(seed)
    m = np.asarray(m, dtype=float)
    return rng.uniform(0.0, m, size=(count, m.shape[0]))


def steady_window(tr: Trajectory, fraction: float | None = None) -> Trajectory:
    """Suffix holding the last `fraction` of the samples."""
    fraction = config.STEADY_FRACTION if fraction is None else fraction
    if not 0 < fraction <= 1:
        raise InputError(f"window fraction must lie in (0, 1] (got {fraction})")
    keep = _kept_samples(len(tr), fraction)
    if keep == 0:
        raise EmptyWindowError(f"window fraction {fraction} of {len(tr)} samples is empty")
    return Trajectory(times=tr.times[-keep:], states=tr.states[-keep:], provenance=tr.provenance)


def has_converged(tr: Trajectory, m, fraction: float | None = None, rtol: float | None = None) -> bool:
    """Steady-window range below rtol * m_i on every channel."""
    rtol = config.CONVERGENCE_RTOL if rtol is None else rtol
    window = steady_window(tr, fraction)
    spread = window.states.max(axis=0) - window.states.min(axis=0)
    return bool(np.all(spread < rtol * np.asarray(m, dtype=float)))
