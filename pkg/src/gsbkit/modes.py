"""Single-particle space: mode grids, form factors, Hilbert-scale norms and UV classification.

The measure space is a 1-D momentum half-line discretized by a quadrature rule.
Everything here is immutable; arrays are frozen on construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ClassificationConflictError, GridMismatchError, LadderError

#: growth exponent above which a partial integral counts as divergent
DIVERGENCE_EXPONENT = 0.05
#: relative change between the last two rungs below which a partial integral counts as convergent
CONVERGENCE_RTOL = 1e-3
MIN_LADDER = 6


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


DISPERSIONS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "relativistic": lambda k, m: np.sqrt(k * k + m * m),
    "linear": lambda k, m: np.abs(k),
    "constant": lambda k, m: np.full_like(k, m, dtype=float),
}

# large-k power of each named dispersion, used for declared tails
_DISPERSION_POWER = {"relativistic": 1.0, "linear": 1.0, "constant": 0.0}


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Quadrature realization of the single-particle space.

    ``omega`` holds the dispersion sampled at ``nodes``; ``mass_floor`` defaults
    to ``omega.min()``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    omega: np.ndarray
    mass_floor: float | None = None
    dispersion: str = "custom"

    def __post_init__(self):
        nodes = _frozen(self.nodes, float).reshape(-1)
        weights = _frozen(self.weights, float).reshape(-1)
        omega = _frozen(self.omega, float).reshape(-1)
        if not (nodes.size == weights.size == omega.size) or nodes.size == 0:
            raise GridMismatchError("nodes, weights and omega must be non-empty and of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be strictly positive")
        m0 = float(omega.min()) if self.mass_floor is None else float(self.mass_floor)
        if not m0 > 0:
            raise ValueError(f"mass floor must be positive, got {m0}")
        if np.any(omega < m0 * (1 - 1e-14)):
            raise ValueError("dispersion drops below the mass floor")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "mass_floor", m0)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def extent(self) -> float:
        return float(self.nodes[-1])

    @property
    def dispersion_power(self) -> float | None:
        return _DISPERSION_POWER.get(self.dispersion)

    def prefix(self, n: int) -> ModeGrid:
        """Sub-grid of the first ``n`` nodes, keeping the parent weights."""
        if not 1 <= n <= self.size:
            raise ValueError(f"prefix length {n} outside 1..{self.size}")
        return ModeGrid(self.nodes[:n], self.weights[:n], self.omega[:n], self.mass_floor, self.dispersion)

    def is_prefix_of(self, other: ModeGrid) -> bool:
        n = self.size
        return n <= other.size and np.array_equal(self.nodes, other.nodes[:n]) and np.array_equal(
            self.omega, other.omega[:n]
        )

    def same_as(self, other: ModeGrid) -> bool:
        return self is other or (
            self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.omega, other.omega)
        )


def trapezoid_weights(nodes) -> np.ndarray:
    x = np.asarray(nodes, dtype=float)
    if x.size < 2:
        raise ValueError("trapezoid rule needs at least two nodes")
    w = np.empty_like(x)
    w[0] = (x[1] - x[0]) / 2
    w[-1] = (x[-1] - x[-2]) / 2
    w[1:-1] = (x[2:] - x[:-2]) / 2
    return w


def _make_grid(nodes, dispersion, mass):
    if callable(dispersion):
        omega = dispersion(nodes)
        name = getattr(dispersion, "__name__", "custom")
    else:
        try:
            omega = DISPERSIONS[dispersion](nodes, mass)
        except KeyError:
            raise ValueError(f"unknown dispersion {dispersion!r}; known: {sorted(DISPERSIONS)}") from None
        name = dispersion
    return ModeGrid(nodes, trapezoid_weights(nodes), omega, None, name)


def uniform_grid(k_min: float, k_max: float, n: int, dispersion="relativistic", mass: float = 1.0) -> ModeGrid:
    """Uniform nodes on ``[k_min, k_max]`` with trapezoid weights."""
    return _make_grid(np.linspace(k_min, k_max, n), dispersion, mass)


def geometric_grid(k_min: float, k_max: float, n: int, dispersion="relativistic", mass: float = 1.0) -> ModeGrid:
    """Geometrically spaced nodes (``k_min > 0``) with trapezoid weights.

    Suited to power-law tails: every octave gets the same number of nodes.
    """
    if k_min <= 0:
        raise ValueError("geometric grid needs k_min > 0")
    return _make_grid(np.geomspace(k_min, k_max, n), dispersion, mass)


def single_mode(omega: float, weight: float = 1.0, k: float = 0.0) -> ModeGrid:
    return ModeGrid([k], [weight], [omega], None, "constant")


class CaseLabel(enum.IntEnum):
    """UV-divergence class: index of the first convergent integral of |f|^2 / omega^p."""

    CASE0 = 0
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3


@dataclass(frozen=True, eq=False)
class FormFactor:
    """Coupling function sampled on a grid.

    ``tail`` is an optional declared asymptotic pair ``(alpha, beta)`` meaning
    ``|f(k)| ~ k**alpha`` and ``omega(k) ~ k**beta`` as ``k -> inf``.
    """

    values: np.ndarray
    tail: tuple[float, float] | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, complex).reshape(-1))
        if self.tail is not None:
            object.__setattr__(self, "tail", (float(self.tail[0]), float(self.tail[1])))

    def __len__(self):
        return self.values.size

    def _combine(self, other, sign):
        if not isinstance(other, FormFactor):
            return NotImplemented
        if len(other) != len(self):
            raise GridMismatchError("form factors live on grids of different size")
        return FormFactor(self.values + sign * other.values, None, "")

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return FormFactor(-self.values, self.tail, self.label)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return FormFactor(self.values * c, self.tail if c != 0 else None, self.label)

    __rmul__ = __mul__

    def restrict(self, n: int) -> FormFactor:
        return FormFactor(self.values[:n], self.tail, self.label)

    def check_on(self, grid: ModeGrid) -> None:
        if len(self) != grid.size:
            raise GridMismatchError(f"form factor has {len(self)} values, grid has {grid.size} nodes")

    @classmethod
    def from_function(cls, grid: ModeGrid, fn, tail=None, label="") -> FormFactor:
        return cls(fn(grid.nodes), tail, label)

    @classmethod
    def zeros(cls, grid: ModeGrid, label="zero") -> FormFactor:
        return cls(np.zeros(grid.size), None, label)


def power_form_factor(grid: ModeGrid, exponent: float = -0.25, amplitude: complex = 1.0,
                      phase_rate: float = 0.0, label: str = "") -> FormFactor:
    """``amplitude * omega**exponent * exp(1j * phase_rate * k)``.

    The tail is declared whenever the grid's dispersion has a known power law.
    ``exponent=-0.25`` with a relativistic dispersion is the default Case-1 factor.
    """
    vals = amplitude * grid.omega**exponent * np.exp(1j * phase_rate * grid.nodes)
    beta = grid.dispersion_power
    tail = None if beta is None else (exponent * beta, beta)
    return FormFactor(vals, tail, label or f"omega^{exponent:g}")


def default_form_factor(grid: ModeGrid) -> FormFactor:
    return power_form_factor(grid, -0.25, label="default")


def scale_norm(f: FormFactor, s: float, grid: ModeGrid) -> float:
    """Quadrature norm ``|| omega^{s/2} f ||``."""
    f.check_on(grid)
    return math.sqrt(float(np.sum(grid.weights * grid.omega**s * np.abs(f.values) ** 2)))


def pairing(f: FormFactor, g: FormFactor, grid: ModeGrid) -> complex:
    """Quadrature inner product, antilinear in the first slot."""
    f.check_on(grid)
    g.check_on(grid)
    return complex(np.sum(grid.weights * np.conj(f.values) * g.values))


def truncate(f: FormFactor, cutoff: float, grid: ModeGrid, strict: bool = True) -> FormFactor:
    """Sharp cutoff: keep nodes with ``k <= cutoff``, zero the rest.

    With ``strict`` a cutoff below the first node is rejected; otherwise it
    yields the zero factor.
    """
    f.check_on(grid)
    if strict and cutoff < grid.nodes[0]:
        raise ValueError(f"cutoff {cutoff} lies below the first node {grid.nodes[0]}")
    mask = grid.nodes <= cutoff
    return FormFactor(np.where(mask, f.values, 0), f.tail, f.label)


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    base: FormFactor
    cutoffs: tuple[float, ...]
    realized: tuple[FormFactor, ...]

    @classmethod
    def build(cls, base: FormFactor, cutoffs: Sequence[float], grid: ModeGrid, strict: bool = True) -> CutoffFamily:
        cutoffs = tuple(float(c) for c in cutoffs)
        if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
            raise LadderError("cutoffs must be strictly increasing")
        return cls(base, cutoffs, tuple(truncate(base, c, grid, strict) for c in cutoffs))

    def distances(self, grid: ModeGrid, s: float = -1.0) -> np.ndarray:
        return np.array([scale_norm(r - self.base, s, grid) for r in self.realized])


def power_law_exponent(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise LadderError("need at least two points to fit a growth exponent")
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _ladder_sizes(grid: ModeGrid, rungs: int) -> list[int]:
    # rung r keeps nodes with k <= k_max / 2**(rungs-1-r)
    sizes = []
    for j in range(rungs - 1, -1, -1):
        n = int(np.searchsorted(grid.nodes, grid.extent / 2**j, side="right"))
        if n >= 1 and (not sizes or n > sizes[-1]):
            sizes.append(n)
    return sizes


def integral_verdict(extents, partials) -> str:
    """'convergent', 'divergent' or 'inconclusive' for a ladder of partial integrals."""
    partials = np.asarray(partials, dtype=float)
    last, prev = partials[-1], partials[-2]
    if last > 0 and abs(last - prev) <= CONVERGENCE_RTOL * abs(last):
        return "convergent"
    if power_law_exponent(extents, partials) > DIVERGENCE_EXPONENT:
        return "divergent"
    return "inconclusive"


def analytic_case(tail: tuple[float, float]) -> CaseLabel:
    alpha, beta = tail
    for p in range(3):
        if 2 * alpha - p * beta < -1:
            return CaseLabel(p)
    return CaseLabel.CASE3


@dataclass(frozen=True)
class DivergenceReport:
    case: CaseLabel
    analytic: CaseLabel | None
    empirical: CaseLabel | None
    verdicts: tuple[str, str, str]
    exponents: tuple[float, float, float]


def divergence_report(f: FormFactor, grid: ModeGrid, rungs: int = 8) -> DivergenceReport:
    """Classify ``f`` from its declared tail and from partial-integral growth on nested sub-grids."""
    f.check_on(grid)
    if not 0 < grid.nodes[0]:
        raise ValueError("growth fits need strictly positive nodes")
    sizes = _ladder_sizes(grid, rungs)
    if len(sizes) < MIN_LADDER:
        raise LadderError(f"grid supports only {len(sizes)} nested rungs, need {MIN_LADDER}")
    extents = grid.nodes[np.array(sizes) - 1]
    dens = grid.weights * np.abs(f.values) ** 2
    verdicts, exponents = [], []
    for p in range(3):
        partial = np.cumsum(dens * grid.omega ** (-p))[np.array(sizes) - 1]
        verdicts.append(integral_verdict(extents, partial))
        exponents.append(power_law_exponent(extents, partial))
    empirical = None
    if "convergent" in verdicts:
        first = verdicts.index("convergent")
        if all(v == "divergent" for v in verdicts[:first]):
            empirical = CaseLabel(first)
    elif all(v == "divergent" for v in verdicts):
        empirical = CaseLabel.CASE3
    analytic = analytic_case(f.tail) if f.tail is not None else None
    if analytic is None and empirical is None:
        raise ClassificationConflictError(f"no declared tail and inconclusive growth fit {verdicts}")
    if analytic is not None and empirical is not None and analytic != empirical:
        raise ClassificationConflictError(
            f"declared tail says {analytic.name}, measured growth says {empirical.name} ({verdicts})"
        )
    if analytic is not None and empirical is None:
        raise ClassificationConflictError(
            f"declared tail says {analytic.name} but the growth fit is inconclusive {verdicts}; extend the grid"
        )
    return DivergenceReport(empirical, analytic, empirical, tuple(verdicts), tuple(exponents))


def classify_divergence(f: FormFactor, grid: ModeGrid) -> CaseLabel:
    return divergence_report(f, grid).case


@dataclass(frozen=True)
class IndependenceReport:
    extents: tuple[float, ...]
    min_eigenvalues: tuple[float, ...]
    exponent: float
    independent: bool


def gram_matrix(fs: Sequence[FormFactor], grid: ModeGrid) -> np.ndarray:
    vals = np.array([f.values for f in fs])
    return (np.conj(vals) * grid.weights) @ vals.T


def h_independence_margin(fs: Sequence[FormFactor], grids: Sequence[ModeGrid]) -> IndependenceReport:
    """Minimum Gram eigenvalue of ``fs`` along a ladder of nested grids.

    ``fs`` are sampled on the largest (last) grid; every grid must be a prefix of
    its successor. This is a finite-grid surrogate for H-independence: the
    minimum eigenvalue must grow without bound.
    """
    if not fs:
        raise ValueError("need at least one form factor")
    if len(grids) < 2:
        raise LadderError("need at least two grids")
    for a, b in zip(grids, grids[1:]):
        if not (a.is_prefix_of(b) and a.size < b.size):
            raise LadderError("grids are not nested by extending the k-range")
    for f in fs:
        f.check_on(grids[-1])
    mins, extents = [], []
    for g in grids:
        G = gram_matrix([f.restrict(g.size) for f in fs], g)
        ev = np.linalg.eigvalsh(G)
        scale = max(float(np.trace(G).real), np.finfo(float).tiny)
        mins.append(0.0 if ev[0] <= 1e-12 * scale else float(ev[0]))
        extents.append(g.extent)
    mins_a = np.array(mins)
    exponent = power_law_exponent(extents, mins_a) if np.all(mins_a > 0) else float("nan")
    independent = bool(
        np.all(mins_a > 0) and np.all(np.diff(mins_a) > 0) and exponent > DIVERGENCE_EXPONENT
    )
    return IndependenceReport(tuple(extents), tuple(mins), exponent, independent)
