"""Core data types for bounded linear-threshold networks.

A network evolves as ``tau * dx/dt = -x + [W x + u]_0^m`` with the clip
applied elementwise. Every type here is an immutable value: arrays are
copied on construction and marked read-only.
"""

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ltnet.errors import DaleViolation, DimensionError, InputError


def _frozen(values, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-D array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class NodeSign(str, Enum):
    EXCITATORY = "E"
    INHIBITORY = "I"
    ZERO = "0"


@dataclass(frozen=True)
class Network:
    W: np.ndarray    # N x N synaptic weights, W[i, j] is the gain from node j onto node i
    u: np.ndarray    # external inputs
    m: np.ndarray    # maximum firing rates
    tau: np.ndarray  # time constants, scalar input broadcast per node

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        u = np.array(self.u, dtype=float).reshape(-1)
        m = np.array(self.m, dtype=float).reshape(-1)
        tau = np.array(self.tau, dtype=float)
        if tau.ndim == 0:
            tau = np.full(u.shape[0], float(tau))
        for name, arr in (("W", W), ("u", u), ("m", m), ("tau", tau.reshape(-1))):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def create(cls, W, u, m, tau=1.0) -> "Network":
        """Build a network and raise on any structural problem."""
        net = cls(W=W, u=u, m=m, tau=tau)
        ensure_valid(net)
        return net

    @property
    def N(self) -> int:
        return int(self.u.shape[0])

    def with_input(self, u) -> "Network":
        return Network(W=self.W, u=u, m=self.m, tau=self.tau)

    def digest(self) -> str:
        return network_digest(self)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    signs: list[NodeSign | None] = field(default_factory=list)  # None marks a mixed-sign column
    dale_columns: list[int] = field(default_factory=list)       # 0-based columns breaking Dale's law
    shape_ok: bool = True

    @property
    def valid(self) -> bool:
        return not self.violations


def _column_sign(col: np.ndarray) -> NodeSign | None:
    if not np.any(col):
        return NodeSign.ZERO
    if np.all(col >= 0):
        return NodeSign.EXCITATORY
    if np.all(col <= 0):
        return NodeSign.INHIBITORY
    return None


def node_signs(W) -> list[NodeSign | None]:
    """Classify every column of W. Mixed-sign columns come back as None."""
    W = np.asarray(W, dtype=float)
    return [_column_sign(W[:, j]) for j in range(W.shape[1])]


def validate_network(net: Network, require_dale: bool = False) -> ValidationReport:
    """Check dimensions, positivity of m and tau, finiteness and (optionally) Dale's law.

    Indices in messages are 1-based to match the usual mathematical notation.
    """
    report = ValidationReport()
    W = net.W
    n = net.N

    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        report.violations.append(f"W must be square, got shape {W.shape}")
        report.shape_ok = False
        return report
    if W.shape[0] != n:
        report.violations.append(f"W is {W.shape[0]}x{W.shape[1]} but u has length {n}")
    for name in ("m", "tau"):
        length = getattr(net, name).shape[0]
        if length != n:
            report.violations.append(f"{name} has length {length}, expected {n}")
    if report.violations:
        report.shape_ok = False
        return report

    for name in ("W", "u", "m", "tau"):
        if not np.all(np.isfinite(getattr(net, name))):
            report.violations.append(f"{name} contains non-finite entries")

    for i, value in enumerate(net.m):
        if not value > 0:
            report.violations.append(f"m_{i + 1} not positive")
    for i, value in enumerate(net.tau):
        if not value > 0:
            report.violations.append(f"tau_{i + 1} not positive")

    report.signs = node_signs(W)
    report.dale_columns = [j for j, s in enumerate(report.signs) if s is None]
    if require_dale:
        for j in report.dale_columns:
            report.violations.append(f"Dale violation on column {j + 1}")
    return report


def ensure_valid(net: Network, require_dale: bool = False) -> None:
    """Raise the matching ltnet error when validate_network finds a problem."""
    report = validate_network(net, require_dale=require_dale)
    if report.valid:
        return
    if not report.shape_ok:
        raise DimensionError("; ".join(report.violations))
    if require_dale and report.dale_columns and len(report.violations) == len(report.dale_columns):
        raise DaleViolation([j + 1 for j in report.dale_columns])
    raise InputError("; ".join(report.violations))


def network_digest(net: Network) -> str:
    """sha256 over shape and float64 bytes of (W, u, m, tau); used for trajectory provenance."""
    h = hashlib.sha256()
    h.update(str(net.W.shape).encode())
    for arr in (net.W, net.u, net.m, net.tau):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def interpolate_networks(net_a: Network, net_b: Network, alpha: float) -> Network:
    """Convex combination (1 - alpha) * a + alpha * b of W, u and m; tau is taken from net_a."""
    if net_a.N != net_b.N:
        raise DimensionError(f"cannot interpolate networks of size {net_a.N} and {net_b.N}")
    return Network(
        W=(1 - alpha) * net_a.W + alpha * net_b.W,
        u=(1 - alpha) * net_a.u + alpha * net_b.u,
        m=(1 - alpha) * net_a.m + alpha * net_b.m,
        tau=net_a.tau,
    )


# === E-I pairs ===


@dataclass(frozen=True)
class EIPairParams:
    """One excitatory node (x1) and one inhibitory node (x2) with W = [[a, -b], [c, -d]]."""

    a: float   # E -> E
    b: float   # I -> E (magnitude)
    c: float   # E -> I
    d: float   # I -> I (magnitude)
    m1: float
    m2: float
    u1: float
    u2: float

    def violations(self) -> list[str]:
        errors = [f"{k} must be nonnegative" for k in ("a", "b", "c", "d") if not getattr(self, k) >= 0]
        errors += [f"{k} must be positive" for k in ("m1", "m2") if not getattr(self, k) > 0]
        return errors

    @property
    def W(self) -> np.ndarray:
        return np.array([[self.a, -self.b], [self.c, -self.d]])

    @property
    def u(self) -> np.ndarray:
        return np.array([self.u1, self.u2])

    @property
    def m(self) -> np.ndarray:
        return np.array([self.m1, self.m2])

    def to_network(self, tau: float = 1.0) -> Network:
        if errors := self.violations():
            raise InputError("; ".join(errors))
        return Network(W=self.W, u=self.u, m=self.m, tau=tau)


@dataclass(frozen=True)
class SingleInhibitoryNetwork:
    """n excitatory nodes sharing one inhibitory node.

    W = [[A, -b], [c, -d]] with A >= 0 (n x n), b >= 0 (column), c >= 0 (row), d >= 0.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float
    u_e: np.ndarray
    u_inh: float
    m_e: np.ndarray
    m_inh: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, ndim=2))
        for name in ("b", "c", "u_e", "m_e"):
            object.__setattr__(self, name, _frozen(np.ravel(getattr(self, name))))
        for name in ("d", "u_inh", "m_inh"):
            object.__setattr__(self, name, float(getattr(self, name)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got shape {self.A.shape}")
        for name in ("b", "c", "u_e", "m_e"):
            if getattr(self, name).shape[0] != n:
                raise DimensionError(f"{name} has length {getattr(self, name).shape[0]}, expected {n}")

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def u(self) -> np.ndarray:
        return np.append(self.u_e, self.u_inh)

    @property
    def m(self) -> np.ndarray:
        return np.append(self.m_e, self.m_inh)

    def violations(self) -> list[str]:
        errors = []
        if np.any(self.A < 0) or np.any(self.b < 0) or np.any(self.c < 0) or self.d < 0:
            errors.append("A, b, c and d must be nonnegative")
        if np.any(self.m_e <= 0) or self.m_inh <= 0:
            errors.append("maximum rates must be positive")
        return errors

    def hypothesis_violations(self) -> list[int]:
        """0-based excitatory nodes with a_ii <= d + 2."""
        return [i for i in range(self.n) if not self.A[i, i] > self.d + 2]

    @property
    def W(self) -> np.ndarray:
        n = self.n
        W = np.zeros((n + 1, n + 1))
        W[:n, :n] = self.A
        W[:n, n] = -self.b
        W[n, :n] = self.c
        W[n, n] = -self.d
        return W

    def to_network(self, tau=1.0) -> Network:
        if errors := self.violations():
            raise InputError("; ".join(errors))
        return Network(W=self.W, u=self.u, m=self.m, tau=tau)


@dataclass(frozen=True)
class EIPairNetwork:
    """n E-I pairs coupled through excitatory projections.

    Ae[i, j] scales E_j -> E_i, Ai[i, j] scales E_j -> I_i. Both have zero diagonals.
    """

    pairs: tuple[EIPairParams, ...]
    Ae: np.ndarray
    Ai: np.ndarray
    tau: np.ndarray  # one time constant per pair

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        n = len(self.pairs)
        Ai = np.zeros((n, n)) if self.Ai is None else self.Ai
        object.__setattr__(self, "Ae", _frozen(self.Ae, ndim=2))
        object.__setattr__(self, "Ai", _frozen(Ai, ndim=2))
        tau = np.array(self.tau, dtype=float)
        if tau.ndim == 0:
            tau = np.full(n, float(tau))
        object.__setattr__(self, "tau", _frozen(tau.reshape(-1)))

    @property
    def n(self) -> int:
        return len(self.pairs)

    def violations(self) -> list[str]:
        n = self.n
        errors = []
        for k, p in enumerate(self.pairs):
            errors += [f"pair {k + 1}: {e}" for e in p.violations()]
        for name in ("Ae", "Ai"):
            A = getattr(self, name)
            if A.shape != (n, n):
                errors.append(f"{name} must be {n}x{n}, got {A.shape}")
                continue
            if np.any(A < 0):
                errors.append(f"{name} must be nonnegative")
            if np.any(np.diag(A) != 0):
                errors.append(f"{name} must have a zero diagonal")
        if self.tau.shape[0] != n:
            errors.append(f"tau has length {self.tau.shape[0]}, expected {n}")
        elif np.any(self.tau <= 0):
            errors.append("tau must be positive")
        return errors

    def pair_slice(self, k: int) -> slice:
        return slice(2 * k, 2 * k + 2)


_E_TO_E = np.array([[1.0, 0.0], [0.0, 0.0]])
_E_TO_I = np.array([[0.0, 0.0], [1.0, 0.0]])


def flatten_ei_pair_network(pn: EIPairNetwork) -> Network:
    """Expand into a 2n-node network ordered (x_11, x_12, x_21, x_22, ...)."""
    n = pn.n
    if pn.Ae.shape != (n, n) or pn.Ai.shape != (n, n) or pn.tau.shape[0] != n:
        raise DimensionError(
            f"{n} pairs need {n}x{n} couplings and {n} time constants; "
            f"got Ae {pn.Ae.shape}, Ai {pn.Ai.shape}, tau {pn.tau.shape}"
        )
    if errors := pn.violations():
        raise InputError("; ".join(errors))
    W = np.zeros((2 * n, 2 * n))
    for k, p in enumerate(pn.pairs):
        W[pn.pair_slice(k), pn.pair_slice(k)] = p.W
    W += np.kron(pn.Ae, _E_TO_E) + np.kron(pn.Ai, _E_TO_I)
    u = np.concatenate([p.u for p in pn.pairs])
    m = np.concatenate([p.m for p in pn.pairs])
    return Network(W=W, u=u, m=m, tau=np.repeat(pn.tau, 2))
