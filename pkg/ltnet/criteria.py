"""Closed-form structural checks for lack of stable equilibria (LoSE).

Every checker returns a ConditionVerdict. Strict inequalities pass only
when their slack exceeds REL_TOL * max(1, |lhs|, |rhs|); anything within
that band is listed in ``marginal``. Boundary cases therefore resolve
toward "a stable equilibrium exists", the same way closed region
membership does in ltnet.regions.

Condition labels use 1-based node/pair numbers ("5a", "17[2]", "19b[1]",
"(1,3)"); witness indices are 0-based.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ltnet import config, linalg, regions
from ltnet.errors import CapExceededError, DimensionError, HypothesisError, InputError, NotInhibitoryError
from ltnet.model import EIPairNetwork, EIPairParams, Network, SingleInhibitoryNetwork, flatten_ei_pair_network

logger = logging.getLogger(__name__)


@dataclass
class ConditionVerdict:
    satisfied: bool
    per_condition: dict[str, bool]
    witness: dict[str, Any] | None = None
    marginal: list[str] = field(default_factory=list)
    slacks: dict[str, float] = field(default_factory=dict)

    @property
    def is_marginal(self) -> bool:
        return bool(self.marginal)


class _Ledger:
    """Collects labelled inequalities. Several inequalities under one label are AND-ed."""

    def __init__(self):
        self.per_condition: dict[str, bool] = {}
        self.slacks: dict[str, float] = {}
        self.marginal: list[str] = []

    def record(self, label: str, ok: bool, slack: float, tol: float) -> bool:
        self.per_condition[label] = self.per_condition.get(label, True) and bool(ok)
        self.slacks[label] = min(self.slacks.get(label, np.inf), float(slack))
        if abs(slack) <= tol and label not in self.marginal:
            self.marginal.append(label)
        return bool(ok)

    def strict(self, label: str, lhs: float, rhs: float) -> bool:
        """lhs < rhs."""
        tol = config.REL_TOL * max(1.0, abs(lhs), abs(rhs))
        return self.record(label, rhs - lhs > tol, rhs - lhs, tol)

    def weak(self, label: str, lhs: float, rhs: float) -> bool:
        """lhs <= rhs."""
        tol = config.REL_TOL * max(1.0, abs(lhs), abs(rhs))
        return self.record(label, rhs - lhs >= -tol, rhs - lhs, tol)

    def set(self, label: str, value: bool) -> bool:
        self.per_condition[label] = bool(value)
        return bool(value)

    def verdict(self, satisfied: bool, witness: dict | None = None) -> ConditionVerdict:
        return ConditionVerdict(
            satisfied=bool(satisfied),
            per_condition=self.per_condition,
            witness=witness,
            marginal=self.marginal,
            slacks=self.slacks,
        )


# === E-I pair ===


def ei_pair_limit_cycle(p: EIPairParams) -> ConditionVerdict:
    """Necessary and sufficient conditions (5a)-(5e) for an isolated E-I pair to oscillate."""
    if errors := p.violations():
        raise InputError("; ".join(errors))
    a, b, c, d, m1, m2, u1, u2 = p.a, p.b, p.c, p.d, p.m1, p.m2, p.u1, p.u2
    ledger = _Ledger()
    ledger.strict("5a", d + 2, a)
    ledger.strict("5b", (a - 1) * (d + 1), b * c)
    ledger.strict("5c", (a - 1) * m1, b * m2)
    ledger.strict("5d", 0.0, u1)
    ledger.strict("5d", u1, b * m2 - (a - 1) * m1)
    drive = (d + 1) * u1 - b * u2
    ledger.strict("5e", 0.0, drive)
    ledger.strict("5e", drive, (b * c - (a - 1) * (d + 1)) * m1)
    return ledger.verdict(all(ledger.per_condition.values()))


# === Single inhibitory node ===


def _require_single_inhibitory_hypothesis(net: SingleInhibitoryNetwork) -> None:
    if errors := net.violations():
        raise InputError("; ".join(errors))
    if bad := net.hypothesis_violations():
        nodes = ", ".join(str(i + 1) for i in bad)
        raise HypothesisError(f"a_ii > d + 2 fails for excitatory node(s) {nodes}")


@dataclass(frozen=True)
class YOrthant:
    """Cross-section of Y for one saturation pattern of the excitatory nodes.

    With u_{n+1} fixed, u belongs to this piece of Y iff u_i >= corner_i on
    saturated nodes and u_i <= corner_i on inactive ones.
    """

    saturated: tuple[bool, ...]
    y0: np.ndarray
    ys: np.ndarray
    yl: np.ndarray
    corner: np.ndarray

    @property
    def label(self) -> str:
        return "".join("s" if s else "0" for s in self.saturated)

    def margin(self, u_e) -> float:
        """Smallest signed distance of u_e inside the orthant (negative means outside)."""
        u_e = np.asarray(u_e, dtype=float)
        sat = np.array(self.saturated, dtype=bool)
        return float(np.where(sat, u_e - self.corner, self.corner - u_e).min())


def y_cross_section(net: SingleInhibitoryNetwork, u_inh: float | None = None) -> list[YOrthant]:
    """The 2^n orthants whose union is Y at the given inhibitory input."""
    _require_single_inhibitory_hypothesis(net)
    u_inh = net.u_inh if u_inh is None else float(u_inh)
    n = net.n
    A_minus_I = net.A - np.eye(n)
    pieces = []
    for bits in itertools.product((False, True), repeat=n):
        sat = np.array(bits, dtype=bool)
        m_sat = np.where(sat, net.m_e, 0.0)
        y0 = -A_minus_I @ m_sat
        ys = y0 + net.b * net.m_inh
        yl = y0 + net.b * (u_inh + net.c @ m_sat) / (net.d + 1)
        corner = np.minimum(np.maximum(y0, yl), ys)
        pieces.append(YOrthant(saturated=bits, y0=y0, ys=ys, yl=yl, corner=corner))
    return pieces


def single_inhibitory_in_Y(net: SingleInhibitoryNetwork) -> ConditionVerdict:
    """Exact test: the network lacks stable equilibria iff u lies outside Y."""
    ledger = _Ledger()
    pieces = y_cross_section(net)
    tol = config.REL_TOL * max(1.0, float(np.abs(net.u).max()), max(float(np.abs(p.corner).max()) for p in pieces))
    witness = None
    for piece in pieces:
        margin = piece.margin(net.u_e)
        label = f"Y[{piece.label}]"
        ledger.record(label, margin >= -tol, margin, tol)
        if ledger.per_condition[label] and witness is None:
            witness = {
                "sigma": piece.label,
                "saturated": [i for i, s in enumerate(piece.saturated) if s],
            }
    in_y = witness is not None
    ledger.set("Y", in_y)
    return ledger.verdict(not in_y, witness)


def single_inhibitory_sufficient(net: SingleInhibitoryNetwork) -> ConditionVerdict:
    """Simpler conditions: "nec" is necessary for LoSE, "suf1" or "suf2" is sufficient."""
    _require_single_inhibitory_hypothesis(net)
    n = net.n
    A, b, c, d = net.A, net.b, net.c, net.d
    u_e, u_inh, m_e, m_inh = net.u_e, net.u_inh, net.m_e, net.m_inh
    A_minus_I = A - np.eye(n)
    c_me = float(c @ m_e)
    ledger = _Ledger()

    ledger.strict("nec", -c_me, u_inh)
    ledger.strict("nec", u_inh, (d + 1) * m_inh)

    ok_12a = ledger.weak("12a", 0.0, u_inh) & ledger.weak("12a", u_inh, (d + 1) * m_inh - c_me)
    suf1_i0 = None
    for i0 in range(n):
        tag = f"[{i0 + 1}]"
        ok = ledger.strict("12b" + tag, (A[i0, i0] - 1) * (d + 1), b[i0] * c[i0])
        lower = b[i0] * u_inh / (d + 1)
        upper = b[i0] * (u_inh + c[i0] * m_e[i0]) / (d + 1) - (A[i0, i0] - 1) * m_e[i0]
        ok &= ledger.strict("12c" + tag, lower, u_e[i0]) & ledger.strict("12c" + tag, u_e[i0], upper)
        ledger.set("12d" + tag, True)
        for i in range(n):
            if i == i0:
                continue
            excess = np.clip(A_minus_I[i] * (d + 1) - b[i] * c, 0.0, None) @ m_e
            ok &= ledger.strict("12d" + tag, u_e[i], (b[i] * u_inh - excess) / (d + 1))
        if ok and suf1_i0 is None:
            suf1_i0 = i0
    suf1 = ledger.set("suf1", ok_12a and suf1_i0 is not None)

    ok_13a = ledger.weak("13a", (d + 1) * m_inh - float((c * m_e).min()), u_inh) & ledger.weak("13a", u_inh, (d + 1) * m_inh)
    suf2_i0 = None
    for i0 in range(n):
        tag = f"[{i0 + 1}]"
        ok = ledger.strict("13b" + tag, (A[i0, i0] - 1) * m_e[i0], b[i0] * m_inh)
        upper = b[i0] * m_inh - (A[i0, i0] - 1) * m_e[i0]
        ok &= ledger.strict("13c" + tag, 0.0, u_e[i0]) & ledger.strict("13c" + tag, u_e[i0], upper)
        ledger.set("13d" + tag, True)
        for i in range(n):
            if i == i0:
                continue
            ok &= ledger.strict("13d" + tag, u_e[i], b[i] * m_inh - float(A_minus_I[i] @ m_e))
        if ok and suf2_i0 is None:
            suf2_i0 = i0
    suf2 = ledger.set("suf2", ok_13a and suf2_i0 is not None)

    witness = {"suf1_i0": suf1_i0 if suf1 else None, "suf2_i0": suf2_i0 if suf2 else None}
    return ledger.verdict(suf1 or suf2, witness)


# === Fully inhibitory networks ===


def _inhibition(W) -> np.ndarray:
    """D = -W for a fully inhibitory W."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"expected a square weight matrix, got shape {W.shape}")
    if np.any(W > 0):
        rows, cols = np.nonzero(W > 0)
        raise NotInhibitoryError(f"W has positive entries, e.g. W[{rows[0] + 1},{cols[0] + 1}] = {W[rows[0], cols[0]]}")
    return -W


def inhibitory_p_matrix_necessary(W) -> ConditionVerdict:
    """Satisfied iff I - W is not a P-matrix. Unsatisfied certifies a stable equilibrium for every u."""
    D = _inhibition(W)
    M = np.eye(D.shape[0]) + D
    ledger = _Ledger()
    p_matrix = linalg.is_p_matrix(M)
    ledger.set("I-W not P", not p_matrix)
    witness = None
    if not p_matrix:
        scale = max(1.0, linalg.inf_norm(M))
        for idx, det in linalg.principal_minors(M):
            if not det > config.MINOR_TOL * scale ** len(idx):
                witness = {"minor": list(idx), "determinant": det}
                break
    return ledger.verdict(not p_matrix, witness)


def pairwise_unstable(W) -> ConditionVerdict:
    """Every order-2 principal minor of -I + W is negative."""
    D = _inhibition(W)
    ledger = _Ledger()
    for i, j in itertools.combinations(range(D.shape[0]), 2):
        minor = (1 + D[i, i]) * (1 + D[j, j]) - D[i, j] * D[j, i]
        ledger.strict(f"({i + 1},{j + 1})", minor, 0.0)
    return ledger.verdict(all(ledger.per_condition.values()))


def input_box(W, m) -> np.ndarray:
    """Upper corner of C = prod [0, (d_ii + 1) m_i)."""
    D = _inhibition(W)
    return (np.diag(D) + 1) * np.asarray(m, dtype=float)


def _require_in_box(W, u, m) -> None:
    u = np.asarray(u, dtype=float)
    upper = input_box(W, m)
    if u.shape != upper.shape:
        raise DimensionError(f"u has shape {u.shape}, expected {upper.shape}")
    outside = np.flatnonzero((u < 0) | (u >= upper))
    if outside.size:
        raise HypothesisError(f"u lies outside C = prod [0, (d_ii+1) m_i) at node(s) {', '.join(str(i + 1) for i in outside)}")


def t_set_membership(W, u, m) -> ConditionVerdict:
    """For pairwise-unstable W and u in C: LoSE holds iff u is in T (T0 and every Ti)."""
    D = _inhibition(W)
    if not pairwise_unstable(W).satisfied:
        raise HypothesisError("t_set_membership requires a pairwise-unstable network")
    _require_in_box(W, u, m)
    u = np.asarray(u, dtype=float)
    n = D.shape[0]
    ledger = _Ledger()

    ledger.strict("T0", 0.0, float(u.max()))
    for i in range(n):
        label = f"T{i + 1}"
        others = [j for j in range(n) if j != i]
        if not others:
            ledger.set(label, False)
            continue
        # Ti holds when some u_j beats its threshold d_ji / (d_ii + 1) * u_i.
        thresholds = {j: D[j, i] / (D[i, i] + 1) * u[i] for j in others}
        best = max(others, key=lambda j: u[j] - thresholds[j])
        ledger.strict(label, thresholds[best], u[best])
    return ledger.verdict(all(ledger.per_condition.values()))


@dataclass(frozen=True)
class FGraph:
    weights: np.ndarray  # F[i, j] = (d_ii + 1) / d_ji where present
    present: np.ndarray  # bool mask; absent where d_ji = 0

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class ValidCycle:
    vertices: tuple[int, ...]  # 0-based, in traversal order
    Fc: np.ndarray             # adjacency of the cycle subgraph, rows/cols follow `vertices`
    rho: float

    @property
    def product(self) -> float:
        return self.rho ** len(self.vertices)


def build_f_graph(W) -> FGraph:
    D = _inhibition(W)
    n = D.shape[0]
    weights = np.zeros((n, n))
    present = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j and D[j, i] > 0:
                weights[i, j] = (D[i, i] + 1) / D[j, i]
                present[i, j] = True
    return FGraph(weights=weights, present=present)


def _cycle_from(F: FGraph, vertices: list[int]) -> ValidCycle:
    k = len(vertices)
    Fc = np.zeros((k, k))
    product = 1.0
    for a in range(k):
        w = F.weights[vertices[a], vertices[(a + 1) % k]]
        Fc[a, (a + 1) % k] = w
        product *= w
    return ValidCycle(vertices=tuple(vertices), Fc=Fc, rho=float(product ** (1.0 / k)))


def find_valid_cycle(F: FGraph) -> ValidCycle | None:
    """First simple cycle (length >= 3) whose weight product exceeds 1.

    DFS from each start vertex over larger-numbered vertices only, so each
    cycle is visited from its smallest vertex. Branches are pruned when even
    max-weight edges could not lift the product above 1. Cost is exponential
    in n, hence CYCLE_DIM_CAP.
    """
    n = F.n
    if n > config.CYCLE_DIM_CAP:
        raise CapExceededError("find_valid_cycle", n, config.CYCLE_DIM_CAP)
    threshold = 1.0 + config.REL_TOL

    for start in range(n):
        allowed = list(range(start, n))
        sub = F.weights[np.ix_(allowed, allowed)][F.present[np.ix_(allowed, allowed)]]
        if sub.size == 0:
            continue
        w_max = float(sub.max())
        path = [start]
        on_path = {start}

        def dfs(product: float) -> list[int] | None:
            here = path[-1]
            remaining = (n - start) - len(path)
            bound = product * (w_max ** (remaining + 1) if w_max > 1 else w_max)
            if bound <= threshold:
                return None
            if len(path) >= 3 and F.present[here, start] and product * F.weights[here, start] > threshold:
                return list(path)
            for nxt in range(start + 1, n):
                if nxt in on_path or not F.present[here, nxt]:
                    continue
                path.append(nxt)
                on_path.add(nxt)
                found = dfs(product * F.weights[here, nxt])
                if found:
                    return found
                path.pop()
                on_path.discard(nxt)
            return None

        found = dfs(1.0)
        if found:
            return _cycle_from(F, found)
    return None


def construct_oscillating_input(W, m, cycle: ValidCycle) -> np.ndarray:
    """Input in T and C built from the Perron vector of the cycle's adjacency.

    u_i = v_i * lambda on cycle vertices (v unit Perron vector), zero elsewhere,
    with lambda at the midpoint of (0, min_i (d_ii + 1) m_i / v_i).
    """
    D = _inhibition(W)
    m = np.asarray(m, dtype=float)
    if m.shape[0] != D.shape[0]:
        raise DimensionError(f"m has length {m.shape[0]}, expected {D.shape[0]}")
    if not pairwise_unstable(W).satisfied:
        raise HypothesisError("construct_oscillating_input requires a pairwise-unstable network")
    _, v = linalg.perron_vector(cycle.Fc)
    idx = np.array(cycle.vertices)
    bound = float(np.min((np.diag(D)[idx] + 1) * m[idx] / v))
    lam = bound / 2
    u = np.zeros(D.shape[0])
    u[idx] = v * lam
    return u


def node_oscillation_participation(W, m, u, cycle: ValidCycle) -> list[bool]:
    """Per node, True when it is guaranteed not to oscillate (it lies off the cycle).

    LoSE is checked through the T-set when W is pairwise unstable and by
    region enumeration otherwise.
    """
    D = _inhibition(W)
    _require_in_box(W, u, m)
    if pairwise_unstable(W).satisfied:
        has_lose = t_set_membership(W, u, m).satisfied
    else:
        has_lose = regions.lose(Network(W=W, u=u, m=m, tau=1.0)).lose
    if not has_lose:
        raise HypothesisError("node participation needs a network without stable equilibria")
    on_cycle = set(cycle.vertices)
    return [i not in on_cycle for i in range(D.shape[0])]


# === Networks of E-I pairs ===


def _require_oscillating_pairs(pn: EIPairNetwork) -> None:
    if errors := pn.violations():
        raise InputError("; ".join(errors))
    bad = [k + 1 for k, p in enumerate(pn.pairs) if not ei_pair_limit_cycle(p).satisfied]
    if bad:
        raise HypothesisError(f"pair(s) {', '.join(map(str, bad))} do not satisfy the isolated-pair oscillation conditions")


def oscillation_threshold(p: EIPairParams) -> float:
    """u_bar_1 = b min{m2, (u2 + c m1)/(d + 1)} - (a - 1) m1."""
    return p.b * min(p.m2, (p.u2 + p.c * p.m1) / (p.d + 1)) - (p.a - 1) * p.m1


def e2e_coupled_lose(pn: EIPairNetwork) -> ConditionVerdict:
    """Exact test for excitatory-to-excitatory coupling: LoSE iff some pair keeps positive slack.

    The witness lists the pairs that cannot settle to a fixed value.
    """
    if np.any(pn.Ai != 0):
        raise HypothesisError("e2e_coupled_lose requires Ai = 0 (use e2all_coupled_lose)")
    _require_oscillating_pairs(pn)
    m1 = np.array([p.m1 for p in pn.pairs])
    drive = pn.Ae @ m1
    ledger = _Ledger()
    for i, p in enumerate(pn.pairs):
        ledger.strict(f"17[{i + 1}]", float(drive[i]), oscillation_threshold(p) - p.u1)
    oscillating = [i for i in range(pn.n) if ledger.per_condition[f"17[{i + 1}]"]]
    return ledger.verdict(bool(oscillating), {"pairs": oscillating})


def e2all_coupled_lose(pn: EIPairNetwork) -> ConditionVerdict:
    """Sufficient test for excitatory-to-all coupling: some pair meets (19a), (19b) and (19c)."""
    _require_oscillating_pairs(pn)
    m1 = np.array([p.m1 for p in pn.pairs])
    ledger = _Ledger()
    good = []
    for i, p in enumerate(pn.pairs):
        tag = f"[{i + 1}]"
        a, b, c, d = p.a, p.b, p.c, p.d
        e_row, i_row = pn.Ae[i], pn.Ai[i]
        ok = ledger.strict("19a" + tag, float(e_row @ m1), b * p.m2 - (a - 1) * p.m1 - p.u1)
        excess_e = float(np.clip((d + 1) * e_row - b * i_row, 0.0, None) @ m1)
        ok &= ledger.strict(
            "19b" + tag,
            excess_e,
            (b * c - (a - 1) * (d + 1)) * p.m1 - (d + 1) * p.u1 + b * p.u2,
        )
        excess_i = float(np.clip(b * i_row - (d + 1) * e_row, 0.0, None) @ m1)
        ok &= ledger.strict("19c" + tag, excess_i, (d + 1) * p.u1 - b * p.u2)
        if ok:
            good.append(i)
    return ledger.verdict(bool(good), {"pairs": good})


def find_e2all_gap_witness(seed: int, max_draws: int = 1000) -> EIPairNetwork | None:
    """Random 2-pair network where (19a-c) fail for every pair yet enumeration finds LoSE."""
    from ltnet.experiments import EtaStudyConfig, sample_ei_pair

    rng = np.random.default_rng(seed)
    cfg = EtaStudyConfig(n=2)
    for draw in range(max_draws):
        pairs = (sample_ei_pair(rng, cfg), sample_ei_pair(rng, cfg))
        Ae = rng.uniform(0.0, 0.5, (2, 2)) * (rng.random() < 0.5)
        Ai = rng.uniform(0.0, 3.0, (2, 2))
        np.fill_diagonal(Ae, 0.0)
        np.fill_diagonal(Ai, 0.0)
        pn = EIPairNetwork(pairs=pairs, Ae=Ae, Ai=Ai, tau=np.ones(2))
        verdict = e2all_coupled_lose(pn)
        if verdict.satisfied or verdict.is_marginal:
            continue
        lose = regions.lose(flatten_ei_pair_network(pn))
        if lose.lose and not lose.indeterminate:
            logger.info("Found sufficiency-gap witness after %d draws", draw + 1)
            return pn
    logger.warning("No sufficiency-gap witness in %d draws (seed %d)", max_draws, seed)
    return None


def two_node_inhibitory_has_stable(W) -> ConditionVerdict:
    """A 2-node fully inhibitory network always has a stable equilibrium.

    The verdict records which argument applies: "P" when I - W is a P-matrix
    (unique equilibrium for every u), "nonunique" otherwise.
    """
    D = _inhibition(W)
    if D.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 weight matrix, got {D.shape}")
    ledger = _Ledger()
    ledger.set("P", linalg.is_p_matrix(np.eye(2) + D))
    ledger.set("nonunique", not ledger.per_condition["P"])
    return ledger.verdict(True)


@dataclass
class InhibitoryAnalysis:
    p_matrix: ConditionVerdict          # satisfied means I - W is NOT a P-matrix
    pairwise: ConditionVerdict
    f_graph: FGraph
    cycle: ValidCycle | None
    t_set: ConditionVerdict | None = None
    oscillating_input: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def lose(self) -> bool | None:
        """True/False when one of the checks decides LoSE for the given input, None otherwise."""
        if not self.p_matrix.satisfied:
            return False
        if self.t_set is not None and not self.t_set.is_marginal:
            return self.t_set.satisfied
        return None


def analyze_inhibitory(W, u=None, m=None) -> InhibitoryAnalysis:
    """Run every fully inhibitory check that applies to (W, u, m)."""
    D = _inhibition(W)
    n = D.shape[0]
    F = build_f_graph(W)
    analysis = InhibitoryAnalysis(
        p_matrix=inhibitory_p_matrix_necessary(W),
        pairwise=pairwise_unstable(W) if n >= 2 else ConditionVerdict(False, {}),
        f_graph=F,
        cycle=find_valid_cycle(F) if n <= config.CYCLE_DIM_CAP else None,
    )
    if n > config.CYCLE_DIM_CAP:
        analysis.notes.append(f"valid-cycle search skipped above {config.CYCLE_DIM_CAP} nodes")
    if not analysis.pairwise.satisfied:
        analysis.notes.append("not pairwise unstable: the T-set test does not apply")
        return analysis
    if m is not None and analysis.cycle is not None:
        analysis.oscillating_input = construct_oscillating_input(W, m, analysis.cycle)
    if u is not None and m is not None:
        try:
            analysis.t_set = t_set_membership(W, u, m)
        except HypothesisError as e:
            analysis.notes.append(str(e))
    return analysis
