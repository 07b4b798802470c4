"""Monte-Carlo study harnesses.

* global study: random Dale-compliant networks, LoSE by enumeration versus
  the oscillation index of simulated trajectories, threshold fit.
* local sweep: convex path from an oscillating network to a stable one,
  recording where LoSE switches and where the oscillation index drops.
* eta study: networks of E-I pairs with excitatory-to-excitatory coupling
  scaled by eta, log chi_osc distribution per eta.

Every per-network seed is derive_seed(master_seed, index), so a study is
reproducible from its config and master seed regardless of worker count.
"""

import csv
import json
import logging
import math
import sqlite3
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ltnet import config, criteria, db, regions
from ltnet.errors import InputError, LtnetError
from ltnet.metrics import ThresholdFit, fit_threshold, oscillation_index
from ltnet.model import EIPairNetwork, EIPairParams, Network, flatten_ei_pair_network, interpolate_networks
from ltnet.simulate import integrate_many, random_initial_conditions
from ltnet.study_pool import StudyPool, TaskFailure

logger = logging.getLogger(__name__)

# Per-network failures that are recorded instead of aborting a study.
RECOVERABLE = (LtnetError, FloatingPointError, ValueError, np.linalg.LinAlgError)

HIST_BINS = 60
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


# === Configs ===


class _SimulationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_end: float = Field(2000.0, gt=0)
    dt: float = Field(0.01, gt=0)
    window: float = Field(0.05, gt=0, le=1)
    epsilon: float = Field(0.1, gt=0, lt=1)
    master_seed: int | None = None

    @model_validator(mode="after")
    def _check_horizon(self):
        if self.dt >= self.t_end:
            raise ValueError(f"dt ({self.dt}) must be smaller than t_end ({self.t_end})")
        return self


class GlobalStudyConfig(_SimulationSettings):
    n_networks: int = Field(20000, ge=1)
    NE: int = Field(5, ge=0)
    NI: int = Field(5, ge=0)
    B: float = Field(10.0, gt=0)
    tau: float = Field(1.0, gt=0)
    n_init_with_stable: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _check_size(self):
        if self.NE + self.NI < 1:
            raise ValueError("NE + NI must be at least 1")
        return self


class EtaStudyConfig(_SimulationSettings):
    n: int = Field(10, ge=1)
    eta_list: list[float] = Field(default_factory=lambda: [0.0, 0.9, 0.99, 1.01, 1.1])
    d_max: float = Field(1.0, ge=0)
    a_min: float = 3.5
    a_max: float = 5.0
    b_min: float = math.sqrt(8) + 0.5
    b_max: float = math.sqrt(8) + 2
    m1_min: float = Field(1.0, gt=0)
    m1_max: float = Field(2.0, gt=0)
    m2_min: float | None = None  # defaults to 8 / b_min + 0.5
    m2_max: float | None = None  # defaults to 8 / b_min + 2
    tau_min: float = Field(1.0, gt=0)
    tau_max: float = Field(10.0, gt=0)
    n_networks: int = Field(1000, ge=1)
    theta: float | None = None  # oscillation threshold from a global study, for the summary only

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.m2_min is None:
            self.m2_min = 8 / self.b_min + 0.5
        if self.m2_max is None:
            self.m2_max = 8 / self.b_min + 2
        for lo, hi in (("a_min", "a_max"), ("b_min", "b_max"), ("m1_min", "m1_max"), ("m2_min", "m2_max"), ("tau_min", "tau_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} ({getattr(self, lo)}) exceeds {hi} ({getattr(self, hi)})")
        if not self.a_min > self.d_max + 2:
            raise ValueError(f"a_min ({self.a_min}) must exceed d_max + 2 ({self.d_max + 2})")
        if not self.b_min ** 2 > (self.a_max - 1) * (self.d_max + 1):
            raise ValueError("b_min must exceed sqrt((a_max - 1)(d_max + 1))")
        if not self.m2_min > (self.a_max - 1) / self.b_min * self.m1_max:
            raise ValueError("m2_min must exceed (a_max - 1) / b_min * m1_max")
        if any(eta < 0 for eta in self.eta_list):
            raise ValueError("eta values must be nonnegative")
        return self


# === Seeding ===


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream identified by keys."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else LTNET_SEED, else a fresh one that gets logged."""
    if seed is not None:
        return int(seed)
    if config.SEED is not None:
        return config.SEED
    generated = int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])
    logger.warning("No seed given; generated master seed %d (pass --seed %d to reproduce)", generated, generated)
    return generated


# === Samplers ===


def sample_random_network(seed: int, NE: int, NI: int, B: float, tau: float = 1.0) -> tuple[Network, np.ndarray]:
    """Dale-compliant draw: first NE columns excitatory, the rest inhibitory, |w| ~ U(0, B).

    u ~ U(-B, B), m ~ U(1, B), x0 ~ U(0, m).
    """
    if NE < 0 or NI < 0 or NE + NI == 0:
        raise InputError(f"need NE, NI >= 0 with at least one node (got {NE}, {NI})")
    if not B > 0:
        raise InputError(f"B must be positive (got {B})")
    rng = np.random.default_rng(seed)
    n = NE + NI
    signs = np.concatenate([np.ones(NE), -np.ones(NI)])
    W = rng.uniform(0.0, B, (n, n)) * signs[None, :]
    u = rng.uniform(-B, B, n)
    m = rng.uniform(1.0, B, n) if B > 1 else np.ones(n)
    x0 = rng.uniform(0.0, m)
    return Network(W=W, u=u, m=m, tau=tau), x0


def sample_ei_pair(rng: np.random.Generator, cfg: EtaStudyConfig) -> EIPairParams:
    """One oscillating pair; u1 and u2 sit at the centres of their admissible ranges."""
    d = rng.uniform(0.0, cfg.d_max)
    a = rng.uniform(cfg.a_min, cfg.a_max)
    b = c = rng.uniform(cfg.b_min, cfg.b_max)
    m1 = rng.uniform(cfg.m1_min, cfg.m1_max)
    m2 = rng.uniform(cfg.m2_min, cfg.m2_max)
    u1 = (b * m2 - (a - 1) * m1) / 2
    K = b * c - (a - 1) * (d + 1)
    u2 = ((d + 1) * u1 - K * m1 / 2) / b
    return EIPairParams(a=a, b=b, c=c, d=d, m1=m1, m2=m2, u1=u1, u2=u2)


def normalized_coupling(pairs, G) -> np.ndarray:
    """A_bar[i, j] = (u_bar_i - u_i1) G[i, j] / ((G 1)_i m_j1), so sum_j A_bar[i, j] m_j1 = u_bar_i - u_i1.

    Rows of G summing to zero give zero rows.
    """
    G = np.asarray(G, dtype=float)
    headroom = np.array([criteria.oscillation_threshold(p) - p.u1 for p in pairs])
    m1 = np.array([p.m1 for p in pairs])
    row_sums = G.sum(axis=1)
    scale = np.divide(headroom, row_sums, out=np.zeros_like(headroom), where=row_sums > 0)
    return scale[:, None] * G / m1[None, :]


def sample_ei_pair_network(cfg: EtaStudyConfig, eta: float, seed: int) -> EIPairNetwork:
    """n pairs coupled E-to-E with A = eta * A_bar and no E-to-I projections.

    The same seed gives the same pairs and G for every eta.
    """
    if eta < 0:
        raise InputError(f"eta must be nonnegative (got {eta})")
    rng = np.random.default_rng(seed)
    pairs = tuple(sample_ei_pair(rng, cfg) for _ in range(cfg.n))
    G = rng.uniform(0.0, 1.0, (cfg.n, cfg.n))
    np.fill_diagonal(G, 0.0)
    tau = rng.uniform(cfg.tau_min, cfg.tau_max, cfg.n)
    return EIPairNetwork(pairs=pairs, Ae=eta * normalized_coupling(pairs, G), Ai=None, tau=tau)


# === Per-network evaluation (top-level so worker processes can pickle it) ===


@dataclass
class NetworkRecord:
    index: int
    seed: int
    lose: bool | None = None
    marginal: bool = False
    chi_reg: float | None = None
    chi_pp: float | None = None
    log_chi_osc: float | None = None
    runtime_ms: float = 0.0
    error: str | None = None
    network: Network | None = None
    x0: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class _GlobalTask:
    index: int
    seed: int
    cfg: GlobalStudyConfig


def _most_oscillatory(net: Network, X0: np.ndarray, cfg: _SimulationSettings, seed: int):
    trajectories = integrate_many(net, X0, t_end=cfg.t_end, dt=cfg.dt, keep_fraction=cfg.window, seed=seed)
    measured = [oscillation_index(tr, net.m, epsilon=cfg.epsilon, window_fraction=1.0) for tr in trajectories]
    return max(measured, key=lambda mt: mt.chi_osc)


def evaluate_global_network(task: _GlobalTask) -> NetworkRecord:
    cfg = task.cfg
    start = time.perf_counter()
    record = NetworkRecord(index=task.index, seed=task.seed)
    try:
        net, x0 = sample_random_network(task.seed, cfg.NE, cfg.NI, cfg.B, cfg.tau)
        record.network, record.x0 = net, x0
        verdict = regions.lose(net, stop_at_first=True)
        record.lose = verdict.lose
        record.marginal = bool(verdict.marginal_flags or verdict.singular_flags)
        X0 = x0[None, :]
        if not verdict.lose and cfg.n_init_with_stable > 1:
            extra = random_initial_conditions(net.m, cfg.n_init_with_stable - 1, [task.seed, 1])
            X0 = np.vstack([X0, extra])
        best = _most_oscillatory(net, X0, cfg, task.seed)
        record.chi_reg, record.chi_pp, record.log_chi_osc = best.chi_reg, best.chi_pp, best.log_chi_osc
    except RECOVERABLE as e:
        logger.error("Network %d (seed %d) failed: %s", task.index, task.seed, e)
        record.error = f"{type(e).__name__}: {e}"
    record.runtime_ms = 1000.0 * (time.perf_counter() - start)
    return record


def _collect(results: list[Any], tasks: list[Any]) -> list[Any]:
    """Replace pool failures by error records carrying the task's index and seed."""
    out = []
    for task, result in zip(tasks, results):
        if not isinstance(result, TaskFailure):
            out.append(result)
        elif isinstance(task, _EtaTask):
            out.append(EtaRecord(eta=task.eta, index=task.index, seed=task.seed, error=result.message))
        else:
            out.append(NetworkRecord(index=task.index, seed=task.seed, error=result.message))
    return out


# === Summaries and files ===


def _quantiles(values) -> dict[str, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {}
    return {f"q{int(q * 100):02d}": float(np.quantile(values, q)) for q in QUANTILES}


def _fraction(mask) -> float | None:
    mask = np.asarray(mask, dtype=bool)
    return float(mask.mean()) if mask.size else None


def histogram_rows(samples, edges) -> list[tuple[float, float, float]]:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return [(float(lo), float(hi), 0.0) for lo, hi in zip(edges[:-1], edges[1:])]
    density, _ = np.histogram(samples, bins=edges, density=True)
    return [(float(lo), float(hi), float(dens)) for lo, hi, dens in zip(edges[:-1], edges[1:], density)]


def _common_edges(*groups) -> np.ndarray:
    values = np.concatenate([np.asarray(g, dtype=float) for g in groups if len(g)] or [np.zeros(1)])
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, HIST_BINS + 1)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _record_to_db(kind: str, master_seed: int, cfg: BaseModel, rows: list[dict], summary: dict) -> str | None:
    try:
        db.init_db()
        study_id = db.create_study(kind, master_seed, cfg.model_dump_json())
        db.insert_records(study_id, rows)
        db.finish_study(study_id, summary)
        logger.info("Recorded %s study %s in %s", kind, study_id, config.DB_PATH)
        return study_id
    except (sqlite3.Error, OSError) as e:
        logger.error("Could not record %s study in the results store: %s", kind, e)
        return None


# === Global study ===


@dataclass
class GlobalStudyResult:
    config: GlobalStudyConfig
    master_seed: int
    records: list[NetworkRecord]
    fit: ThresholdFit | None = None
    fit_error: str | None = None

    def _split(self):
        ok = [r for r in self.records if r.ok]
        lose = np.array([r.log_chi_osc for r in ok if r.lose], dtype=float)
        stable = np.array([r.log_chi_osc for r in ok if not r.lose], dtype=float)
        return ok, lose, stable

    def summary(self) -> dict:
        ok, lose, stable = self._split()
        summary: dict[str, Any] = {
            "kind": "global",
            "master_seed": self.master_seed,
            "n_networks": len(self.records),
            "n_failed": len(self.records) - len(ok),
            "n_lose": int(lose.size),
            "n_stable": int(stable.size),
            "n_marginal": sum(1 for r in ok if r.marginal),
            "lose_prevalence": _fraction([r.lose for r in ok]),
            "quantiles_lose": _quantiles(lose),
            "quantiles_stable": _quantiles(stable),
            "theta": None,
            "frac_lose_below_theta": None,
            "frac_stable_above_theta": None,
            "fit": None,
            "fit_error": self.fit_error,
        }
        if self.fit is not None:
            theta = self.fit.theta
            summary["theta"] = theta
            summary["frac_lose_below_theta"] = _fraction(lose < theta)
            summary["frac_stable_above_theta"] = _fraction(stable > theta)
            summary["fit"] = {
                "mixture": [{"weight": c.weight, "mean": c.mean, "variance": c.variance} for c in self.fit.mixture],
                "trough_location": None if math.isnan(self.fit.trough_location) else self.fit.trough_location,
                "left_trough": self.fit.left_trough,
                "degenerate": self.fit.degenerate,
                "converged": self.fit.converged,
                "notes": list(self.fit.notes),
            }
        return summary

    def write(self, out_dir: Path) -> None:
        from ltnet import schemas

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "networks.jsonl", "w") as f:
            for r in self.records:
                if r.network is not None:
                    line = {"index": r.index, "seed": r.seed, **schemas.network_to_dict(r.network)}
                    line["x0"] = [float(v) for v in r.x0]
                    f.write(json.dumps(line) + "\n")
        write_csv(
            out_dir / "results.csv",
            ["index", "seed", "lose", "marginal", "chi_reg", "chi_pp", "log_chi_osc", "error"],
            ((r.index, r.seed, r.lose, r.marginal, r.chi_reg, r.chi_pp, r.log_chi_osc, r.error) for r in self.records),
        )
        write_csv(out_dir / "timings.csv", ["index", "runtime_ms"], ((r.index, r.runtime_ms) for r in self.records))
        _, lose, stable = self._split()
        edges = _common_edges(lose, stable)
        write_csv(out_dir / "hist_lose.csv", ["bin_left", "bin_right", "density"], histogram_rows(lose, edges))
        write_csv(out_dir / "hist_stable.csv", ["bin_left", "bin_right", "density"], histogram_rows(stable, edges))
        _write_json(out_dir / "summary.json", self.summary())
        _write_json(out_dir / "config.json", {**self.config.model_dump(), "master_seed": self.master_seed})

    def db_rows(self) -> list[dict]:
        return [
            {"index": r.index, "seed": r.seed, "lose": r.lose, "marginal": r.marginal, "chi_reg": r.chi_reg,
             "chi_pp": r.chi_pp, "log_chi_osc": r.log_chi_osc, "error": r.error, "runtime_ms": r.runtime_ms}
            for r in self.records
        ]


def run_global_study(
    cfg: GlobalStudyConfig,
    workers: int | None = None,
    out_dir: Path | None = None,
    record_db: bool = False,
    pool: StudyPool | None = None,
) -> GlobalStudyResult:
    master = resolve_seed(cfg.master_seed)
    tasks = [_GlobalTask(index=i, seed=derive_seed(master, i), cfg=cfg) for i in range(cfg.n_networks)]
    pool = pool or StudyPool(workers, label="global study")
    logger.info("Global study: %d networks (NE=%d, NI=%d, B=%g), master seed %d",
                cfg.n_networks, cfg.NE, cfg.NI, cfg.B, master)
    records = _collect(pool.map_ordered(evaluate_global_network, tasks), tasks)

    result = GlobalStudyResult(config=cfg, master_seed=master, records=records)
    samples = [r.log_chi_osc for r in records if r.ok]
    try:
        result.fit = fit_threshold(samples)
    except LtnetError as e:
        result.fit_error = str(e)
        logger.warning("No threshold fit: %s", e)

    summary = result.summary()
    logger.info("Global study done: LoSE prevalence %s, theta %s, LoSE below theta %s, stable above theta %s",
                summary["lose_prevalence"], summary["theta"],
                summary["frac_lose_below_theta"], summary["frac_stable_above_theta"])
    if out_dir is not None:
        result.write(out_dir)
    if record_db:
        _record_to_db("global", master, cfg, result.db_rows(), summary)
    return result


# === Local sweep ===


@dataclass
class SweepRecord:
    alpha_grid: np.ndarray
    lose_curve: np.ndarray          # bool per alpha
    chi_curve: np.ndarray           # log chi_osc per alpha
    alpha_lose: float | None        # set only for a single LoSE switch
    lose_status: str                # "single" | "multi" | "none"
    alpha_chi: float | None
    chi_status: str                 # "detected" | "undetected"
    marginal: list[bool] = field(default_factory=list)

    @property
    def retained(self) -> bool:
        return self.lose_status == "single" and self.chi_status == "detected"

    @property
    def delta(self) -> float | None:
        """alpha_chi - alpha_lose for retained sweeps."""
        return self.alpha_chi - self.alpha_lose if self.retained else None


def lose_switch(alpha_grid, lose_curve) -> tuple[float | None, str]:
    """First alpha where a stable equilibrium appears, kept only for exactly one switch starting from LoSE."""
    lose_curve = np.asarray(lose_curve, dtype=bool)
    switches = int(np.count_nonzero(lose_curve[1:] != lose_curve[:-1]))
    if switches == 0:
        return None, "none"
    if switches == 1 and lose_curve[0]:
        return float(alpha_grid[int(np.argmin(lose_curve))]), "single"
    return None, "multi"


def chi_drop(alpha_grid, chi_curve, theta: float, run: int = 3) -> tuple[float | None, str]:
    """First alpha where the mean of `run` consecutive log chi_osc values falls from above theta to below it."""
    chi = np.asarray(chi_curve, dtype=float)
    for k in range(chi.shape[0] - 2 * run + 1):
        if chi[k:k + run].mean() > theta and chi[k + run:k + 2 * run].mean() < theta:
            return float(alpha_grid[k + run]), "detected"
    return None, "undetected"


def run_local_sweep(
    net_osc: Network,
    net_stable: Network,
    steps: int,
    theta: float,
    seed: int = 0,
    t_end: float | None = None,
    dt: float | None = None,
    window: float | None = None,
    epsilon: float | None = None,
) -> SweepRecord:
    """Evaluate LoSE and log chi_osc along (1 - alpha) net_osc + alpha net_stable.

    The initial condition keeps the same position relative to the box [0, m]
    at every alpha.
    """
    if steps < 2:
        raise InputError(f"a sweep needs at least 2 steps (got {steps})")
    if net_osc.N != net_stable.N:
        raise InputError(f"sweep endpoints differ in size ({net_osc.N} vs {net_stable.N})")
    window = config.STEADY_FRACTION if window is None else window
    alpha_grid = np.linspace(0.0, 1.0, steps)
    position = np.random.default_rng(seed).uniform(0.0, 1.0, net_osc.N)
    lose_curve = np.zeros(steps, dtype=bool)
    chi_curve = np.zeros(steps)
    marginal = []
    for k, alpha in enumerate(alpha_grid):
        net = interpolate_networks(net_osc, net_stable, float(alpha))
        verdict = regions.lose(net, stop_at_first=True)
        lose_curve[k] = verdict.lose
        marginal.append(bool(verdict.marginal_flags or verdict.singular_flags))
        tr = integrate_many(net, (position * net.m)[None, :], t_end=t_end, dt=dt, keep_fraction=window, seed=seed)[0]
        chi_curve[k] = oscillation_index(tr, net.m, epsilon=epsilon, window_fraction=1.0).log_chi_osc
    alpha_lose, lose_status = lose_switch(alpha_grid, lose_curve)
    alpha_chi, chi_status = chi_drop(alpha_grid, chi_curve, theta)
    return SweepRecord(alpha_grid, lose_curve, chi_curve, alpha_lose, lose_status, alpha_chi, chi_status, marginal)


def select_sweep_pairs(
    networks: list[Network | None],
    records: list[NetworkRecord],
    fit: ThresholdFit,
    n_pairs: int,
    seed: int,
) -> list[tuple[Network, Network]]:
    """Pair strongly oscillating LoSE networks with stable networks from the left-most mode."""
    osc = [i for i, r in enumerate(records) if r.ok and r.lose and networks[i] is not None and r.log_chi_osc > fit.theta]
    stable = [
        i for i, r in enumerate(records)
        if r.ok and r.lose is False and networks[i] is not None and r.log_chi_osc < fit.left_trough
    ]
    if not osc or not stable:
        raise InputError(f"cannot form sweep pairs: {len(osc)} oscillating and {len(stable)} quiet candidates")
    rng = np.random.default_rng(seed)
    pick_osc = rng.choice(osc, size=n_pairs, replace=len(osc) < n_pairs)
    pick_stable = rng.choice(stable, size=n_pairs, replace=len(stable) < n_pairs)
    logger.info("Selected %d sweep pairs from %d oscillating and %d quiet networks", n_pairs, len(osc), len(stable))
    return [(networks[int(i)], networks[int(j)]) for i, j in zip(pick_osc, pick_stable)]


@dataclass(frozen=True)
class _SweepTask:
    index: int
    seed: int
    net_osc: Network
    net_stable: Network
    steps: int
    theta: float
    t_end: float | None
    dt: float | None
    window: float | None
    epsilon: float | None


def evaluate_sweep(task: _SweepTask) -> SweepRecord:
    return run_local_sweep(
        task.net_osc, task.net_stable, task.steps, task.theta, seed=task.seed,
        t_end=task.t_end, dt=task.dt, window=task.window, epsilon=task.epsilon,
    )


@dataclass
class SweepStudyResult:
    theta: float
    master_seed: int
    sweeps: list[SweepRecord | None]
    errors: dict[int, str] = field(default_factory=dict)
    near: float = 0.05

    def summary(self) -> dict:
        done = [s for s in self.sweeps if s is not None]
        deltas = np.array([s.delta for s in done if s.retained], dtype=float)
        off = deltas[np.abs(deltas) > self.near]
        return {
            "kind": "sweep",
            "master_seed": self.master_seed,
            "theta": self.theta,
            "n_pairs": len(self.sweeps),
            "n_failed": len(self.errors),
            "retained": int(deltas.size),
            "multi_switch": sum(1 for s in done if s.lose_status == "multi"),
            "no_switch": sum(1 for s in done if s.lose_status == "none"),
            "undetected": sum(1 for s in done if s.chi_status == "undetected"),
            "median_abs_delta": float(np.median(np.abs(deltas))) if deltas.size else None,
            "off_diagonal": int(off.size),
            "above_diagonal": int(np.count_nonzero(off > 0)),
            "below_diagonal": int(np.count_nonzero(off < 0)),
        }

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        curves = []
        for k, s in enumerate(self.sweeps):
            if s is None:
                rows.append((k, None, None, None, None, self.errors.get(k)))
                continue
            rows.append((k, s.alpha_lose, s.lose_status, s.alpha_chi, s.chi_status, None))
            curves.extend((k, a, lo, chi) for a, lo, chi in zip(s.alpha_grid, s.lose_curve, s.chi_curve))
        write_csv(out_dir / "results.csv", ["pair", "alpha_lose", "lose_status", "alpha_chi", "chi_status", "error"], rows)
        write_csv(out_dir / "curves.csv", ["pair", "alpha", "lose", "log_chi_osc"], curves)
        _write_json(out_dir / "summary.json", self.summary())


def run_sweep_study(
    pairs: list[tuple[Network, Network]],
    theta: float,
    steps: int = 101,
    master_seed: int | None = None,
    workers: int | None = None,
    out_dir: Path | None = None,
    t_end: float | None = None,
    dt: float | None = None,
    window: float | None = None,
    epsilon: float | None = None,
    pool: StudyPool | None = None,
) -> SweepStudyResult:
    master = resolve_seed(master_seed)
    tasks = [
        _SweepTask(k, derive_seed(master, k), osc, stable, steps, theta, t_end, dt, window, epsilon)
        for k, (osc, stable) in enumerate(pairs)
    ]
    pool = pool or StudyPool(workers, label="sweep study")
    logger.info("Sweep study: %d pairs, %d alpha steps, theta %.4g", len(pairs), steps, theta)
    result = SweepStudyResult(theta=theta, master_seed=master, sweeps=[])
    for k, outcome in enumerate(pool.map_ordered(evaluate_sweep, tasks)):
        if isinstance(outcome, TaskFailure):
            result.sweeps.append(None)
            result.errors[k] = outcome.message
        else:
            result.sweeps.append(outcome)
    summary = result.summary()
    logger.info("Sweep study done: %d retained, median |delta| %s", summary["retained"], summary["median_abs_delta"])
    if out_dir is not None:
        result.write(out_dir)
    return result


# === Eta study ===


@dataclass
class EtaRecord:
    eta: float
    index: int
    seed: int
    lose: bool | None = None  # excitatory-coupling LoSE test
    marginal: bool = False
    chi_reg: float | None = None
    chi_pp: float | None = None
    log_chi_osc: float | None = None
    runtime_ms: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class _EtaTask:
    eta: float
    index: int
    seed: int
    cfg: EtaStudyConfig


def evaluate_eta_network(task: _EtaTask) -> EtaRecord:
    start = time.perf_counter()
    record = EtaRecord(eta=task.eta, index=task.index, seed=task.seed)
    try:
        pn = sample_ei_pair_network(task.cfg, task.eta, task.seed)
        verdict = criteria.e2e_coupled_lose(pn)
        record.lose, record.marginal = verdict.satisfied, verdict.is_marginal
        net = flatten_ei_pair_network(pn)
        x0 = random_initial_conditions(net.m, 1, [task.seed, 1])
        best = _most_oscillatory(net, x0, task.cfg, task.seed)
        record.chi_reg, record.chi_pp, record.log_chi_osc = best.chi_reg, best.chi_pp, best.log_chi_osc
    except RECOVERABLE as e:
        logger.error("eta %g network %d (seed %d) failed: %s", task.eta, task.index, task.seed, e)
        record.error = f"{type(e).__name__}: {e}"
    record.runtime_ms = 1000.0 * (time.perf_counter() - start)
    return record


@dataclass
class EtaStudyResult:
    config: EtaStudyConfig
    master_seed: int
    records: list[EtaRecord]

    def samples(self, eta: float) -> np.ndarray:
        return np.array([r.log_chi_osc for r in self.records if r.eta == eta and r.ok], dtype=float)

    def summary(self) -> dict:
        per_eta = {}
        for eta in self.config.eta_list:
            values = self.samples(eta)
            rows = [r for r in self.records if r.eta == eta]
            entry = {
                "n": len(rows),
                "n_failed": sum(1 for r in rows if not r.ok),
                "lose_fraction": _fraction([r.lose for r in rows if r.ok]),
                "median": float(np.median(values)) if values.size else None,
                "quantiles": _quantiles(values),
            }
            if self.config.theta is not None:
                entry["frac_above_theta"] = _fraction(values > self.config.theta)
            per_eta[repr(float(eta))] = entry
        return {"kind": "eta", "master_seed": self.master_seed, "theta": self.config.theta, "per_eta": per_eta}

    def write(self, out_dir: Path) -> None:
        from ltnet import schemas

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        # Pairs and G do not depend on eta: each line holds Ae at eta = 1, scale it by eta.
        with open(out_dir / "networks.jsonl", "w") as f:
            for i in range(self.config.n_networks):
                seed = derive_seed(self.master_seed, i)
                pn = sample_ei_pair_network(self.config, 1.0, seed)
                f.write(json.dumps({"index": i, "seed": seed, "eta_scale": 1.0, **schemas.ei_pair_network_to_dict(pn)}) + "\n")
        write_csv(
            out_dir / "results.csv",
            ["eta", "index", "seed", "lose", "marginal", "chi_reg", "chi_pp", "log_chi_osc", "error"],
            ((r.eta, r.index, r.seed, r.lose, r.marginal, r.chi_reg, r.chi_pp, r.log_chi_osc, r.error) for r in self.records),
        )
        write_csv(out_dir / "timings.csv", ["eta", "index", "runtime_ms"], ((r.eta, r.index, r.runtime_ms) for r in self.records))
        groups = [self.samples(eta) for eta in self.config.eta_list]
        edges = _common_edges(*groups)
        for eta, values in zip(self.config.eta_list, groups):
            write_csv(out_dir / f"hist_eta_{eta:g}.csv", ["bin_left", "bin_right", "density"], histogram_rows(values, edges))
        _write_json(out_dir / "summary.json", self.summary())
        _write_json(out_dir / "config.json", {**self.config.model_dump(), "master_seed": self.master_seed})

    def db_rows(self) -> list[dict]:
        return [
            {"index": r.index, "seed": r.seed, "eta": r.eta, "lose": r.lose, "marginal": r.marginal,
             "chi_reg": r.chi_reg, "chi_pp": r.chi_pp, "log_chi_osc": r.log_chi_osc, "error": r.error,
             "runtime_ms": r.runtime_ms}
            for r in self.records
        ]


def run_eta_study(
    cfg: EtaStudyConfig,
    workers: int | None = None,
    out_dir: Path | None = None,
    record_db: bool = False,
    pool: StudyPool | None = None,
) -> EtaStudyResult:
    master = resolve_seed(cfg.master_seed)
    tasks = [
        _EtaTask(eta=float(eta), index=i, seed=derive_seed(master, i), cfg=cfg)
        for eta in cfg.eta_list
        for i in range(cfg.n_networks)
    ]
    pool = pool or StudyPool(workers, label="eta study")
    logger.info("Eta study: n=%d pairs, %d networks x %d eta values, master seed %d",
                cfg.n, cfg.n_networks, len(cfg.eta_list), master)
    records = _collect(pool.map_ordered(evaluate_eta_network, tasks), tasks)
    result = EtaStudyResult(config=cfg, master_seed=master, records=records)
    summary = result.summary()
    for eta, entry in summary["per_eta"].items():
        logger.info("eta %s: median log chi_osc %s, LoSE fraction %s", eta, entry["median"], entry["lose_fraction"])
    if out_dir is not None:
        result.write(out_dir)
    if record_db:
        _record_to_db("eta", master, cfg, result.db_rows(), summary)
    return result


def write_study_outputs(result: GlobalStudyResult | SweepStudyResult | EtaStudyResult, out_dir: Path) -> None:
    result.write(out_dir)
