"""Truncated symmetric Fock space in the occupation-number representation.

Quadrature weights are folded into the mode amplitudes (``sqrt(w_i)``), so the
discrete CCR reproduce :func:`gsbkit.modes.pairing` exactly on the sector where
the truncation is invisible (total occupation ``<= n_max - 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from .errors import BasisSizeError, GridMismatchError
from .modes import FormFactor, ModeGrid, analytic_case

DEFAULT_SIZE_CAP = 20000
SPARSE_THRESHOLD = 5000


def _compositions(m, budget):
    # lexicographic order; vacuum first
    if m == 0:
        yield ()
        return
    for first in range(budget + 1):
        for rest in _compositions(m - 1, budget - first):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation tuples ``(n_1..n_M)`` with ``sum(n) <= n_max`` in lexicographic order."""

    mode_count: int
    n_max: int
    states: tuple
    index: dict

    @cached_property
    def occupations(self) -> np.ndarray:
        occ = np.array(self.states, dtype=np.int64).reshape(len(self.states), self.mode_count)
        occ.setflags(write=False)
        return occ

    @cached_property
    def totals(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def _lowered(self) -> np.ndarray:
        # _lowered[i, s] = index of state s with one quantum removed from mode i, or -1
        low = np.full((self.mode_count, self.size), -1, dtype=np.int64)
        for s, occ in enumerate(self.states):
            for i, n in enumerate(occ):
                if n:
                    low[i, s] = self.index[occ[:i] + (n - 1,) + occ[i + 1:]]
        return low

    def sector_mask(self, max_total: int) -> np.ndarray:
        return self.totals <= max_total

    @property
    def safe_mask(self) -> np.ndarray:
        """States on which a single creation never leaves the truncated space."""
        return self.sector_mask(self.n_max - 1)

    def check_grid(self, grid: ModeGrid) -> None:
        if grid.size != self.mode_count:
            raise GridMismatchError(f"basis has {self.mode_count} modes, grid has {grid.size} nodes")


def build_basis(mode_count: int, n_max: int, size_cap: int = DEFAULT_SIZE_CAP) -> FockBasis:
    if mode_count < 1 or n_max < 0:
        raise ValueError("need mode_count >= 1 and n_max >= 0")
    size = math.comb(mode_count + n_max, mode_count)
    if size > size_cap:
        raise BasisSizeError(f"basis of {size} states exceeds the cap {size_cap}")
    states = tuple(_compositions(mode_count, n_max))
    return FockBasis(mode_count, n_max, states, {s: i for i, s in enumerate(states)})


@dataclass(frozen=True, eq=False)
class LinOp:
    """Matrix plus Hilbert-scale annotations (metadata only).

    ``src_scale``/``dst_scale`` record which scale spaces the operator is read as
    mapping between, e.g. ``a(f)`` with Case-1 ``f`` is bounded ``F_1 -> F``.
    """

    matrix: np.ndarray | sps.spmatrix
    src_scale: float = 0.0
    dst_scale: float = 0.0

    def __post_init__(self):
        m = self.matrix
        if sps.issparse(m):
            if not np.all(np.isfinite(m.data)):
                raise ValueError("operator has non-finite entries")
        else:
            m = np.asarray(m)
            if not np.all(np.isfinite(m)):
                raise ValueError("operator has non-finite entries")
            object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_sparse(self) -> bool:
        return sps.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    def adjoint(self) -> LinOp:
        return LinOp(self.matrix.conj().T, -self.dst_scale, -self.src_scale)

    @property
    def H(self) -> LinOp:
        return self.adjoint()

    def __array__(self, dtype=None, copy=None):
        d = self.dense()
        return d if dtype is None else d.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            return LinOp(self.matrix @ other.matrix, other.src_scale, self.dst_scale)
        return self.matrix @ other

    def __add__(self, other):
        if not isinstance(other, LinOp):
            return NotImplemented
        return LinOp(self.matrix + other.matrix, max(self.src_scale, other.src_scale),
                     min(self.dst_scale, other.dst_scale))

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return LinOp(-self.matrix, self.src_scale, self.dst_scale)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return LinOp(self.matrix * c, self.src_scale, self.dst_scale)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FockVec:
    basis: FockBasis
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.size != self.basis.size:
            raise GridMismatchError(f"{amps.size} amplitudes for a basis of {self.basis.size} states")
        object.__setattr__(self, "amps", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


def vacuum(basis: FockBasis) -> FockVec:
    amps = np.zeros(basis.size, dtype=complex)
    amps[0] = 1.0
    return FockVec(basis, amps)


def _use_sparse(basis, sparse):
    return basis.size > SPARSE_THRESHOLD if sparse is None else sparse


def _source_scale(f: FormFactor) -> float:
    return float(analytic_case(f.tail)) if f.tail is not None else 0.0


def annihilator(f: FormFactor, basis: FockBasis, grid: ModeGrid, sparse: bool | None = None) -> LinOp:
    """``a(f) = sum_i conj(f_i) sqrt(w_i) b_i`` in the occupation basis."""
    f.check_on(grid)
    basis.check_grid(grid)
    coef = np.conj(f.values) * np.sqrt(grid.weights)
    low = basis._lowered
    occ = basis.occupations
    rows, cols, vals = [], [], []
    for i in range(basis.mode_count):
        if coef[i] == 0:
            continue
        src = np.nonzero(low[i] >= 0)[0]
        rows.append(low[i, src])
        cols.append(src)
        vals.append(coef[i] * np.sqrt(occ[src, i]))
    n = basis.size
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=complex)
    if _use_sparse(basis, sparse):
        mat = sps.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    else:
        mat = np.zeros((n, n), dtype=complex)
        np.add.at(mat, (rows, cols), vals)
    return LinOp(mat, _source_scale(f), 0.0)


def creator(f: FormFactor, basis: FockBasis, grid: ModeGrid, sparse: bool | None = None) -> LinOp:
    """``a^*(f)``; transitions out of the top sector are dropped."""
    return annihilator(f, basis, grid, sparse).adjoint()


def field_energies(basis: FockBasis, grid: ModeGrid) -> np.ndarray:
    basis.check_grid(grid)
    return basis.occupations @ grid.omega


def second_quantize(grid: ModeGrid, basis: FockBasis, sparse: bool | None = None) -> LinOp:
    d = field_energies(basis, grid).astype(complex)
    return LinOp(sps.diags(d, format="csr") if _use_sparse(basis, sparse) else np.diag(d))


def number_op(basis: FockBasis, sparse: bool | None = None) -> LinOp:
    d = basis.totals.astype(complex)
    return LinOp(sps.diags(d, format="csr") if _use_sparse(basis, sparse) else np.diag(d))


def coherent_vector(g: FormFactor, basis: FockBasis, grid: ModeGrid) -> FockVec:
    """Non-normalized exponential vector, truncated at ``n_max``."""
    g.check_on(grid)
    basis.check_grid(grid)
    amp = np.sqrt(grid.weights) * g.values
    occ = basis.occupations
    log_fact = np.array([math.lgamma(n + 1) for n in range(basis.n_max + 1)])
    norm = np.exp(-0.5 * log_fact[occ].sum(axis=1))
    with np.errstate(invalid="ignore"):
        # 0**0 == 1 for unoccupied modes
        powers = np.where(occ == 0, 1.0 + 0j, amp[None, :] ** occ)
    return FockVec(basis, np.prod(powers, axis=1) * norm)


def fock_scale_norm(psi: FockVec, s: float, grid: ModeGrid) -> float:
    """``|| (dGamma(omega) + 1)^{s/2} psi ||``."""
    energies = field_energies(psi.basis, grid)
    return math.sqrt(float(np.sum((1 + energies) ** s * np.abs(psi.amps) ** 2)))


def embed(basis: FockBasis, other: FockBasis) -> np.ndarray:
    """Isometry from a smaller basis (fewer modes or lower n_max) into ``other``."""
    out = np.zeros((other.size, basis.size))
    pad = other.mode_count - basis.mode_count
    if pad < 0 or basis.n_max > other.n_max:
        raise GridMismatchError("target basis does not contain the source basis")
    for j, s in enumerate(basis.states):
        out[other.index[s + (0,) * pad], j] = 1.0
    return out


def number_bound_slack(psi: FockVec, grid: ModeGrid) -> float:
    """``||(dGamma+1)^{1/2} psi|| - min(m0, 1)^{1/2} ||(N+1)^{1/2} psi||``; non-negative when ``omega >= m0``."""
    m0 = min(grid.mass_floor, 1.0)
    weight = np.abs(psi.amps) ** 2
    lhs = math.sqrt(float(np.sum((1 + field_energies(psi.basis, grid)) * weight)))
    rhs = math.sqrt(m0 * float(np.sum((1 + psi.basis.totals) * weight)))
    return lhs - rhs


def annihilator_bound_slack(f: FormFactor, psi: FockVec, grid: ModeGrid) -> float:
    """``||f|| ||(N+1)^{1/2} psi|| - ||a(f) psi||``."""
    a = annihilator(f, psi.basis, grid)
    f_norm = math.sqrt(float(np.sum(grid.weights * np.abs(f.values) ** 2)))
    n_norm = math.sqrt(float(np.sum((1 + psi.basis.totals) * np.abs(psi.amps) ** 2)))
    return f_norm * n_norm - float(np.linalg.norm(a @ psi.amps))


def annihilator_scale_norm(f: FormFactor, basis: FockBasis, grid: ModeGrid, s: float = 1.0) -> float:
    """Norm of ``a(f)`` read as a map ``F_s -> F``: largest singular value of ``a(f) (dGamma+1)^{-s/2}``."""
    a = annihilator(f, basis, grid, sparse=False).matrix
    weight = (1 + field_energies(basis, grid)) ** (-s / 2)
    return float(np.linalg.svd(a * weight[None, :], compute_uv=False)[0])
