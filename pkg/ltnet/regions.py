"""Switched-affine view of the dynamics.

State space splits into 3^N regions, one per switching pattern. In each
region the dynamics are affine,

    tau * dx/dt = (-I + S_l W) x + S_l u + S_s m,

so the region's equilibrium candidate is (I - S_l W)^{-1} (S_l u + S_s m)
and its stability depends on W and the linear set only. A network lacks
stable equilibria (LoSE) when no stable region contains its candidate.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterator

import numpy as np

from ltnet import config, linalg
from ltnet.errors import CapExceededError, DimensionError, InputError
from ltnet.model import Network, ensure_valid

logger = logging.getLogger(__name__)


class Activation(IntEnum):
    INACTIVE = 0
    LINEAR = 1
    SATURATED = 2

    @property
    def symbol(self) -> str:
        return "0ls"[self.value]


_SYMBOLS = {"0": Activation.INACTIVE, "l": Activation.LINEAR, "ℓ": Activation.LINEAR, "s": Activation.SATURATED}


@dataclass(frozen=True)
class SwitchingPattern:
    sigma: tuple[Activation, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(Activation(s) for s in self.sigma))

    @classmethod
    def parse(cls, text: str) -> "SwitchingPattern":
        """Parse a string such as "0ls" (one symbol per node)."""
        try:
            return cls(tuple(_SYMBOLS[ch] for ch in text.strip()))
        except KeyError as e:
            raise InputError(f"unknown activation symbol {e.args[0]!r} in pattern {text!r}") from None

    @classmethod
    def uniform(cls, n: int, activation: Activation) -> "SwitchingPattern":
        return cls((activation,) * n)

    @classmethod
    def from_index(cls, index: int, n: int) -> "SwitchingPattern":
        if not 0 <= index < 3 ** n:
            raise ValueError(f"pattern index {index} out of range for N={n}")
        digits = []
        for _ in range(n):
            index, r = divmod(index, 3)
            digits.append(r)
        return cls(tuple(reversed(digits)))

    @property
    def N(self) -> int:
        return len(self.sigma)

    @property
    def index(self) -> int:
        """Base-3 index, first node most significant (itertools.product order)."""
        k = 0
        for s in self.sigma:
            k = 3 * k + int(s)
        return k

    @property
    def linear_mask(self) -> np.ndarray:
        return np.array([s == Activation.LINEAR for s in self.sigma], dtype=bool)

    @property
    def saturated_mask(self) -> np.ndarray:
        return np.array([s == Activation.SATURATED for s in self.sigma], dtype=bool)

    def __str__(self) -> str:
        return "".join(s.symbol for s in self.sigma)


def iter_patterns(n: int) -> Iterator[SwitchingPattern]:
    for digits in itertools.product(Activation, repeat=n):
        yield SwitchingPattern(digits)


class Stability(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class NoCandidate:
    """I - S_l W is singular: the region has no isolated candidate."""

    condition: float


@dataclass(frozen=True)
class RegionReport:
    pattern: SwitchingPattern
    candidate: np.ndarray | NoCandidate
    stability: Stability
    contained: bool | None  # None when there is no candidate
    abscissa: float

    @property
    def is_stable_equilibrium(self) -> bool:
        return bool(self.contained) and self.stability is Stability.STABLE


@dataclass
class LoseVerdict:
    lose: bool
    stable_contained: list[RegionReport] = field(default_factory=list)
    marginal_flags: list[RegionReport] = field(default_factory=list)
    singular_flags: list[RegionReport] = field(default_factory=list)  # non-unstable regions without a candidate
    regions_scanned: int = 0

    @property
    def has_stable_equilibrium(self) -> bool:
        return not self.lose

    @property
    def indeterminate(self) -> bool:
        """No stable equilibrium was certified, but a marginal or singular region blurs the answer."""
        return not self.stable_contained and bool(self.marginal_flags or self.singular_flags)


def _region_matrix(W: np.ndarray, linear: np.ndarray) -> np.ndarray:
    """-I + S_l W."""
    return -np.eye(W.shape[0]) + linear[:, None] * W


def _classify(abscissa: float, tol: float) -> Stability:
    if abscissa < -tol:
        return Stability.STABLE
    if abscissa > tol:
        return Stability.UNSTABLE
    return Stability.MARGINAL


def _check_pattern(net: Network, sigma: SwitchingPattern) -> None:
    if sigma.N != net.N:
        raise DimensionError(f"pattern {sigma} has {sigma.N} nodes, network has {net.N}")


def membership_tolerance(net: Network) -> float:
    """Tolerance on net inputs, scaled by the largest |Wx + u| reachable from the box [0, m]."""
    reach = np.abs(net.W).sum(axis=1).max() * net.m.max() + np.abs(net.u).max()
    return config.REL_TOL * max(1.0, float(reach))


def equilibrium_candidate(net: Network, sigma: SwitchingPattern) -> np.ndarray | NoCandidate:
    _check_pattern(net, sigma)
    linear, saturated = sigma.linear_mask, sigma.saturated_mask
    rhs = np.where(linear, net.u, 0.0) + np.where(saturated, net.m, 0.0)
    x = linalg.solve(-_region_matrix(net.W, linear), rhs)
    if isinstance(x, linalg.SingularReport):
        return NoCandidate(condition=x.condition)
    return x


def region_membership(net: Network, sigma: SwitchingPattern, x, tol: float | None = None) -> bool:
    """True iff every (Wx + u)_i lies in the closed interval of its activation, widened by tol."""
    _check_pattern(net, sigma)
    tol = membership_tolerance(net) if tol is None else tol
    y = net.W @ np.asarray(x, dtype=float) + net.u
    digits = np.array(sigma.sigma, dtype=int)
    lower = np.where(digits == Activation.INACTIVE, -np.inf, np.where(digits == Activation.LINEAR, 0.0, net.m))
    upper = np.where(digits == Activation.INACTIVE, 0.0, np.where(digits == Activation.LINEAR, net.m, np.inf))
    return bool(np.all((y >= lower - tol) & (y <= upper + tol)))


def region_stability(net: Network, sigma: SwitchingPattern) -> tuple[Stability, float]:
    _check_pattern(net, sigma)
    system = _region_matrix(net.W, sigma.linear_mask)
    spectrum = linalg.eigen(system)
    return _classify(spectrum.abscissa, linalg.tolerance(system)), spectrum.abscissa


def fixed_point_residual(net: Network, x) -> float:
    """||-x + [Wx + u]_0^m||_inf."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(-x + np.clip(net.W @ x + net.u, 0.0, net.m)).max())


@dataclass
class _LinearSet:
    mask: np.ndarray
    stability: Stability
    abscissa: float
    factor: linalg.Factorization | linalg.SingularReport


def _linear_set(W: np.ndarray, mask: np.ndarray) -> _LinearSet:
    system = _region_matrix(W, mask)
    spectrum = linalg.eigen(system)
    return _LinearSet(
        mask=mask,
        stability=_classify(spectrum.abscissa, linalg.tolerance(system)),
        abscissa=spectrum.abscissa,
        factor=linalg.factorize(-system),
    )


def _check_cap(n: int) -> None:
    if n > config.REGION_DIM_CAP:
        raise CapExceededError("region enumeration", n, config.REGION_DIM_CAP)
    if n > config.REGION_WARN_DIM:
        logger.warning("Enumerating 3^%d = %d switching regions; this may take a while", n, 3 ** n)


def enumerate_equilibria(net: Network) -> list[RegionReport]:
    """One report per switching pattern, in base-3 index order."""
    ensure_valid(net)
    n = net.N
    _check_cap(n)
    tol = membership_tolerance(net)
    cache: dict[bytes, _LinearSet] = {}
    reports = []

    for pattern in iter_patterns(n):
        linear = pattern.linear_mask
        key = linear.tobytes()
        ls = cache.get(key)
        if ls is None:
            ls = cache[key] = _linear_set(net.W, linear)

        if isinstance(ls.factor, linalg.SingularReport):
            candidate, contained = NoCandidate(condition=ls.factor.condition), None
        else:
            rhs = np.where(linear, net.u, 0.0) + np.where(pattern.saturated_mask, net.m, 0.0)
            candidate = ls.factor.solve(rhs)
            contained = region_membership(net, pattern, candidate, tol)
        reports.append(RegionReport(pattern, candidate, ls.stability, contained, ls.abscissa))

    return reports


def _pattern_from_masks(linear: np.ndarray, saturated: np.ndarray) -> SwitchingPattern:
    digits = np.where(linear, Activation.LINEAR, np.where(saturated, Activation.SATURATED, Activation.INACTIVE))
    return SwitchingPattern(tuple(int(d) for d in digits))


def lose(net: Network, stop_at_first: bool = False) -> LoseVerdict:
    """Decide LoSE by scanning all 3^N regions.

    Regions are grouped by linear set; unstable linear sets are skipped
    without solving, the rest solve every saturation choice of the
    remaining nodes in one batched back-substitution. With stop_at_first
    the scan ends at the first stable contained candidate.
    """
    ensure_valid(net)
    n = net.N
    _check_cap(n)
    tol = membership_tolerance(net)
    W, u, m = net.W, net.u, net.m
    verdict = LoseVerdict(lose=True, regions_scanned=3 ** n)

    for bits in itertools.product((False, True), repeat=n):
        linear = np.array(bits, dtype=bool)
        ls = _linear_set(W, linear)
        if ls.stability is Stability.UNSTABLE:
            continue

        free = np.flatnonzero(~linear)
        # Columns enumerate every inactive/saturated assignment of the free nodes.
        choices = ((np.arange(2 ** free.size)[None, :] >> np.arange(free.size)[::-1, None]) & 1).astype(bool)
        saturated = np.zeros((n, choices.shape[1]), dtype=bool)
        saturated[free] = choices

        if isinstance(ls.factor, linalg.SingularReport):
            for col in range(saturated.shape[1]):
                verdict.singular_flags.append(RegionReport(
                    _pattern_from_masks(linear, saturated[:, col]),
                    NoCandidate(condition=ls.factor.condition),
                    ls.stability,
                    None,
                    ls.abscissa,
                ))
            continue

        rhs = np.where(linear, u, 0.0)[:, None] + np.where(saturated, m[:, None], 0.0)
        X = ls.factor.solve(rhs)
        Y = W @ X + u[:, None]
        lin_ok = (Y >= -tol) & (Y <= m[:, None] + tol)
        sat_ok = Y >= m[:, None] - tol
        off_ok = Y <= tol
        ok = np.where(linear[:, None], lin_ok, np.where(saturated, sat_ok, off_ok)).all(axis=0)

        for col in np.flatnonzero(ok):
            report = RegionReport(
                _pattern_from_masks(linear, saturated[:, col]),
                X[:, col].copy(),
                ls.stability,
                True,
                ls.abscissa,
            )
            if ls.stability is Stability.STABLE:
                verdict.stable_contained.append(report)
            else:
                verdict.marginal_flags.append(report)
            verdict.lose = False
            if stop_at_first and ls.stability is Stability.STABLE:
                logger.debug("Stable equilibrium found in region %s", report.pattern)
                return _sorted(verdict)

    return _sorted(verdict)


def _sorted(verdict: LoseVerdict) -> LoseVerdict:
    for name in ("stable_contained", "marginal_flags", "singular_flags"):
        getattr(verdict, name).sort(key=lambda r: r.pattern.index)
    return verdict
