"""JSON and CSV formats for networks, verdicts, metrics and trajectories.

Readers validate with pydantic and turn every problem into an InputError
whose location is a JSON line/column or a field path. Writers keep full
float precision (json and repr both emit the shortest round-tripping form).
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ltnet.criteria import ConditionVerdict, FGraph, InhibitoryAnalysis, ValidCycle, YOrthant
from ltnet.errors import InputError
from ltnet.metrics import MixtureComponent, OscillationMetrics, ThresholdFit
from ltnet.model import (
    EIPairNetwork,
    EIPairParams,
    Network,
    SingleInhibitoryNetwork,
    ValidationReport,
)
from ltnet.regions import LoseVerdict, NoCandidate, RegionReport
from ltnet.simulate import Trajectory

M = TypeVar("M", bound=BaseModel)


# === Input models ===


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _square(name: str, rows: list[list[float]], n: int | None = None) -> None:
    size = len(rows)
    if any(len(r) != size for r in rows):
        raise ValueError(f"{name} must be a square matrix")
    if n is not None and size != n:
        raise ValueError(f"{name} is {size}x{size}, expected {n}x{n}")


class NetworkModel(_Strict):
    W: list[list[float]]
    u: list[float]
    m: list[float]
    tau: float | list[float] = 1.0

    @model_validator(mode="after")
    def _check_shapes(self):
        n = len(self.u)
        if n == 0:
            raise ValueError("network needs at least one node")
        _square("W", self.W, n)
        if len(self.m) != n:
            raise ValueError(f"m has length {len(self.m)}, expected {n}")
        if isinstance(self.tau, list) and len(self.tau) != n:
            raise ValueError(f"tau has length {len(self.tau)}, expected {n}")
        return self

    def to_network(self) -> Network:
        return Network(W=self.W, u=self.u, m=self.m, tau=self.tau)


class NetworkLineModel(NetworkModel):
    """One line of networks.jsonl."""

    index: int
    seed: int
    x0: list[float] | None = None


class EIPairModel(_Strict):
    a: float
    b: float
    c: float
    d: float
    m1: float
    m2: float
    u1: float
    u2: float

    def to_params(self) -> EIPairParams:
        return EIPairParams(**self.model_dump())


class EIPairNetworkModel(_Strict):
    pairs: list[EIPairModel] = Field(min_length=1)
    Ae: list[list[float]]
    Ai: list[list[float]] | None = None
    tau: float | list[float] = 1.0

    @model_validator(mode="after")
    def _check_shapes(self):
        n = len(self.pairs)
        _square("Ae", self.Ae, n)
        if self.Ai is not None:
            _square("Ai", self.Ai, n)
        if isinstance(self.tau, list) and len(self.tau) != n:
            raise ValueError(f"tau has length {len(self.tau)}, expected {n}")
        return self

    def to_network(self) -> EIPairNetwork:
        return EIPairNetwork(
            pairs=tuple(p.to_params() for p in self.pairs),
            Ae=self.Ae,
            Ai=self.Ai,
            tau=self.tau,
        )


class SingleInhibitoryModel(_Strict):
    a: list[list[float]]
    b: list[float]
    c: list[float]
    d: float
    u_e: list[float]
    u_inh: float
    m_e: list[float]
    m_inh: float

    @model_validator(mode="after")
    def _check_shapes(self):
        n = len(self.u_e)
        if n == 0:
            raise ValueError("at least one excitatory node is required")
        _square("a", self.a, n)
        for name in ("b", "c", "m_e"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        return self

    def to_network(self) -> SingleInhibitoryNetwork:
        return SingleInhibitoryNetwork(
            A=self.a, b=self.b, c=self.c, d=self.d,
            u_e=self.u_e, u_inh=self.u_inh, m_e=self.m_e, m_inh=self.m_inh,
        )


class SweepPairModel(_Strict):
    osc: NetworkModel
    stable: NetworkModel


class SweepPairsModel(_Strict):
    theta: float
    steps: int = Field(101, ge=2)
    pairs: list[SweepPairModel] = Field(min_length=1)


# === Loading ===


def _read_text(source: str | Path) -> tuple[str, str]:
    path = Path(source)
    try:
        return path.read_text(), str(path)
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", location=str(path)) from e


def parse_model(text: str, model: type[M], origin: str = "<input>") -> M:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(e.msg, location=f"{origin}:{e.lineno}:{e.colno}") from e
    return validate_data(data, model, origin)


def validate_data(data: Any, model: type[M], origin: str = "<input>") -> M:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field_path = ".".join(str(p) for p in first["loc"]) or "(root)"
        extra = f" (+{e.error_count() - 1} more)" if e.error_count() > 1 else ""
        raise InputError(f"{first['msg']}{extra}", location=f"{origin}:{field_path}") from e


def load_model(source: str | Path, model: type[M]) -> M:
    text, origin = _read_text(source)
    return parse_model(text, model, origin)


def load_network(source: str | Path) -> Network:
    return load_model(source, NetworkModel).to_network()


def load_ei_pair(source: str | Path) -> EIPairParams:
    return load_model(source, EIPairModel).to_params()


def load_ei_pair_network(source: str | Path) -> EIPairNetwork:
    return load_model(source, EIPairNetworkModel).to_network()


def load_single_inhibitory(source: str | Path) -> SingleInhibitoryNetwork:
    return load_model(source, SingleInhibitoryModel).to_network()


def load_sweep_pairs(source: str | Path) -> tuple[float, int, list[tuple[Network, Network]]]:
    doc = load_model(source, SweepPairsModel)
    return doc.theta, doc.steps, [(p.osc.to_network(), p.stable.to_network()) for p in doc.pairs]


def load_jsonl(source: str | Path, model: type[M]) -> list[M]:
    text, origin = _read_text(source)
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            out.append(parse_model(line, model, f"{origin}:{lineno}"))
    return out


# === Serialization ===


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy containers and scalars into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def network_to_dict(net: Network) -> dict:
    tau = net.tau
    return {
        "W": net.W.tolist(),
        "u": net.u.tolist(),
        "m": net.m.tolist(),
        "tau": float(tau[0]) if np.all(tau == tau[0]) else tau.tolist(),
    }


def ei_pair_to_dict(p: EIPairParams) -> dict:
    return {k: float(getattr(p, k)) for k in ("a", "b", "c", "d", "m1", "m2", "u1", "u2")}


def ei_pair_network_to_dict(pn: EIPairNetwork) -> dict:
    return {
        "pairs": [ei_pair_to_dict(p) for p in pn.pairs],
        "Ae": pn.Ae.tolist(),
        "Ai": pn.Ai.tolist(),
        "tau": pn.tau.tolist(),
    }


def single_inhibitory_to_dict(net: SingleInhibitoryNetwork) -> dict:
    return {
        "a": net.A.tolist(), "b": net.b.tolist(), "c": net.c.tolist(), "d": net.d,
        "u_e": net.u_e.tolist(), "u_inh": net.u_inh, "m_e": net.m_e.tolist(), "m_inh": net.m_inh,
    }


def validation_report_to_dict(report: ValidationReport) -> dict:
    return {
        "valid": report.valid,
        "violations": list(report.violations),
        "signs": [s.value if s is not None else "mixed" for s in report.signs],
        "dale_columns": [j + 1 for j in report.dale_columns],
    }


def region_report_to_dict(report: RegionReport) -> dict:
    singular = isinstance(report.candidate, NoCandidate)
    return {
        "pattern": str(report.pattern),
        "index": report.pattern.index,
        "candidate": None if singular else to_jsonable(report.candidate),
        "singular_condition": to_jsonable(report.candidate.condition) if singular else None,
        "stability": report.stability.value,
        "contained": report.contained,
        "abscissa": to_jsonable(report.abscissa),
    }


def lose_verdict_to_dict(verdict: LoseVerdict) -> dict:
    return {
        "lose": verdict.lose,
        "indeterminate": verdict.indeterminate,
        "regions_scanned": verdict.regions_scanned,
        "stable_contained": [region_report_to_dict(r) for r in verdict.stable_contained],
        "marginal_flags": [region_report_to_dict(r) for r in verdict.marginal_flags],
        "singular_flags": [region_report_to_dict(r) for r in verdict.singular_flags],
    }


def condition_verdict_to_dict(verdict: ConditionVerdict) -> dict:
    return to_jsonable({
        "satisfied": verdict.satisfied,
        "per_condition": verdict.per_condition,
        "witness": verdict.witness,
        "marginal": verdict.marginal,
        "slacks": {k: (v if math.isfinite(v) else None) for k, v in verdict.slacks.items()},
    })


def y_orthant_to_dict(piece: YOrthant) -> dict:
    return to_jsonable({"sigma": piece.label, "corner": piece.corner, "y0": piece.y0, "ys": piece.ys, "yl": piece.yl})


def f_graph_to_dict(F: FGraph) -> dict:
    return {"weights": np.where(F.present, F.weights, 0.0).tolist(), "present": F.present.tolist()}


def valid_cycle_to_dict(cycle: ValidCycle | None) -> dict | None:
    if cycle is None:
        return None
    return {
        "vertices": [v + 1 for v in cycle.vertices],
        "product": cycle.product,
        "rho": cycle.rho,
        "Fc": cycle.Fc.tolist(),
    }


def inhibitory_analysis_to_dict(analysis: InhibitoryAnalysis) -> dict:
    return {
        "lose": analysis.lose,
        "p_matrix_necessary": condition_verdict_to_dict(analysis.p_matrix),
        "pairwise_unstable": condition_verdict_to_dict(analysis.pairwise),
        "f_graph": f_graph_to_dict(analysis.f_graph),
        "valid_cycle": valid_cycle_to_dict(analysis.cycle),
        "t_set": None if analysis.t_set is None else condition_verdict_to_dict(analysis.t_set),
        "oscillating_input": to_jsonable(analysis.oscillating_input),
        "notes": list(analysis.notes),
    }


def metrics_to_dict(metrics: OscillationMetrics) -> dict:
    return to_jsonable({
        "chi_reg": metrics.chi_reg,
        "chi_pp": metrics.chi_pp,
        "chi_osc": metrics.chi_osc,
        "log_chi_osc": metrics.log_chi_osc,
        "per_channel": [
            {"node": i + 1, "chi_reg": c.chi_reg, "frequency": c.frequency, "chi_pp": c.chi_pp}
            for i, c in enumerate(metrics.per_channel)
        ],
    })


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), indent=2)


# === Trajectory CSV ===


def write_trajectory_csv(tr: Trajectory, target: str | Path | io.TextIOBase) -> None:
    """Columns t, x1, ..., xN with a header row."""
    own = isinstance(target, (str, Path))
    f = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(tr.states.shape[1])])
        for t, row in zip(tr.times, tr.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    finally:
        if own:
            f.close()


def read_trajectory_csv(source: str | Path) -> Trajectory:
    text, origin = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise InputError("expected a header row starting with 't'", location=f"{origin}:1")
    width = len(rows[0])
    if width < 2:
        raise InputError("trajectory has no state columns", location=f"{origin}:1")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise InputError(f"expected {width} columns, got {len(row)}", location=f"{origin}:{lineno}")
        try:
            values.append([float(v) for v in row])
        except ValueError as e:
            raise InputError(str(e), location=f"{origin}:{lineno}") from e
    if len(values) < 2:
        raise InputError("trajectory needs at least two samples", location=origin)
    data = np.array(values)
    steps = np.diff(data[:, 0])
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise InputError("time column must be uniform and increasing", location=origin)
    return Trajectory(times=data[:, 0], states=data[:, 1:])


# === Previous global study runs ===


def load_global_run(run_dir: str | Path):
    """(networks, records, fit) from a directory written by a global study."""
    from ltnet.experiments import NetworkRecord

    run_dir = Path(run_dir)
    lines = load_jsonl(run_dir / "networks.jsonl", NetworkLineModel)
    by_index = {line.index: line.to_network() for line in lines}

    text, origin = _read_text(run_dir / "results.csv")
    records = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            records.append(NetworkRecord(
                index=int(row["index"]),
                seed=int(row["seed"]),
                lose=None if row["lose"] == "" else row["lose"] == "1",
                marginal=row["marginal"] == "1",
                chi_reg=float(row["chi_reg"]) if row["chi_reg"] else None,
                chi_pp=float(row["chi_pp"]) if row["chi_pp"] else None,
                log_chi_osc=float(row["log_chi_osc"]) if row["log_chi_osc"] else None,
                error=row["error"] or None,
            ))
        except (KeyError, ValueError) as e:
            raise InputError(f"bad results row: {e}", location=f"{origin}:{lineno}") from e
    networks = [by_index.get(r.index) for r in records]

    text, origin = _read_text(run_dir / "summary.json")
    try:
        summary = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(e.msg, location=f"{origin}:{e.lineno}:{e.colno}") from e
    fit_doc = summary.get("fit")
    if not fit_doc or summary.get("theta") is None:
        raise InputError("global run has no threshold fit", location=origin)
    fit = ThresholdFit(
        theta=float(summary["theta"]),
        mixture=[MixtureComponent(**c) for c in fit_doc["mixture"]],
        trough_location=math.nan if fit_doc["trough_location"] is None else float(fit_doc["trough_location"]),
        left_trough=float(fit_doc["left_trough"]),
        degenerate=bool(fit_doc["degenerate"]),
        converged=bool(fit_doc["converged"]),
        notes=list(fit_doc["notes"]),
    )
    return networks, records, fit
