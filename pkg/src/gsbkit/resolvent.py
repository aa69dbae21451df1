"""Free and interacting resolvents, the minimal regularizing operator and the Krein-type block formula.

With ``R_z = (H_free - z)^{-1}`` and ``R = R_{z0}`` the interacting resolvent is

    R_z - [R_z A^*, R_z] @ inv([[M(z) - T, A R_z + 1], [R_z A^* + 1, R_z]]) @ [[A R_z], [R_z]]

where ``M(z) = A (R_z - R) A^*``. For ``T = -A R A^*`` this is the resolvent of
``H_free + A^* + A``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import LadderError, NearSpectrumError, SingularFormulaError
from .fock import LinOp
from .gsb import ModelSpec, assemble_A, assemble_free
from .modes import DIVERGENCE_EXPONENT, power_law_exponent

SPECTRUM_GAP = 1e-8
MAX_BLOCK_CONDITION = 1e12
MIN_DOMAIN_RUNGS = 4


def _dense(op) -> np.ndarray:
    return op.dense() if isinstance(op, LinOp) else np.asarray(op)


def op_norm(X) -> float:
    """Largest singular value."""
    X = _dense(X)
    if X.size == 0:
        return 0.0
    return float(np.linalg.svd(X, compute_uv=False)[0])


def _spectrum(H: np.ndarray) -> np.ndarray:
    if np.allclose(H, H.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
        return np.linalg.eigvalsh(H)
    return np.linalg.eigvals(H)


def spectral_distance(spectrum, z: complex) -> float:
    return float(np.min(np.abs(np.asarray(spectrum) - z)))


def resolvent_direct(H, z: complex) -> LinOp:
    """``(H - z)^{-1}`` by dense LU solve."""
    H = _dense(H)
    dist = spectral_distance(_spectrum(H), z)
    if dist <= SPECTRUM_GAP:
        raise NearSpectrumError(f"z={z} lies within {dist:.2e} of the spectrum")
    n = H.shape[0]
    return LinOp(sla.solve(H - z * np.eye(n), np.eye(n, dtype=complex)))


@dataclass(frozen=True, eq=False)
class ResolventContext:
    """Free Hamiltonian, annihilation part and reference point ``z0`` (real)."""

    H_free: LinOp
    A: LinOp
    z0: float = -1.0
    extent: float | None = None

    def __post_init__(self):
        H = _dense(self.H_free)
        if np.abs(H - H.conj().T).max(initial=0) > 1e-12 * max(1.0, np.abs(H).max()):
            raise ValueError("free Hamiltonian must be Hermitian")
        if self.A.shape != H.shape:
            raise ValueError(f"A has shape {self.A.shape}, H_free has {H.shape}")
        if isinstance(self.z0, complex) and self.z0.imag != 0:
            raise ValueError("reference point z0 must be real")
        object.__setattr__(self, "z0", float(np.real(self.z0)))
        if spectral_distance(self.spectrum, self.z0) <= SPECTRUM_GAP:
            raise NearSpectrumError(f"z0={self.z0} is in the spectrum of H_free")

    @classmethod
    def from_spec(cls, spec: ModelSpec, z0: float = -1.0, factors=None) -> ResolventContext:
        return cls(assemble_free(spec), assemble_A(spec, factors), z0, spec.grid.extent)

    @cached_property
    def _eig(self):
        return np.linalg.eigh(_dense(self.H_free))

    @property
    def spectrum(self) -> np.ndarray:
        return self._eig[0]

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @cached_property
    def a(self) -> np.ndarray:
        return _dense(self.A)

    @cached_property
    def a_star(self) -> np.ndarray:
        return self.a.conj().T

    def dist(self, z: complex) -> float:
        return spectral_distance(self.spectrum, z)

    def R_z(self, z: complex) -> np.ndarray:
        """Free resolvent from the eigendecomposition of ``H_free``."""
        if self.dist(z) <= SPECTRUM_GAP:
            raise NearSpectrumError(f"z={z} lies within {self.dist(z):.2e} of the free spectrum")
        lam, V = self._eig
        return (V / (lam - z)) @ V.conj().T

    @cached_property
    def R(self) -> np.ndarray:
        return self.R_z(self.z0)

    @cached_property
    def T(self) -> np.ndarray:
        """Minimal regularizing operator ``-A R A^*``."""
        T = -self.a @ self.R @ self.a_star
        return (T + T.conj().T) / 2

    @property
    def shift(self) -> float:
        """Shift making the free Hamiltonian non-negative for scale norms."""
        return min(0.0, float(self.spectrum[0]))

    def scale_op(self, s: float) -> np.ndarray:
        """``(H_free - shift + 1)^{s/2}``, the weight of the scale norm of index ``s``."""
        lam, V = self._eig
        return (V * (lam - self.shift + 1) ** (s / 2)) @ V.conj().T


def T_min(ctx: ResolventContext) -> LinOp:
    return LinOp(ctx.T)


def M_op(ctx: ResolventContext, z: complex) -> LinOp:
    """``A (R_z - R) A^*``."""
    return LinOp(ctx.a @ (ctx.R_z(z) - ctx.R) @ ctx.a_star)


def invertibility_margin(ctx: ResolventContext, z: complex, T=None) -> float:
    """Smallest singular value of ``M(z) - T``; positive certifies bounded invertibility at ``z``."""
    T = ctx.T if T is None else _dense(T)
    sv = np.linalg.svd(M_op(ctx, z).matrix - T, compute_uv=False)
    margin = float(sv[-1])
    if margin == 0.0:
        warnings.warn(f"M(z) - T is singular at z={z}", RuntimeWarning, stacklevel=2)
    return margin


@dataclass(frozen=True, eq=False)
class KreinBlock:
    matrix: np.ndarray
    condition_number: float


def krein_block(ctx: ResolventContext, z: complex, T=None) -> KreinBlock:
    """The 2x2 block operator whose inverse enters the resolvent formula.

    The top-left entry is the regularized annihilator applied to ``R_z A^*``,
    i.e. ``M(z) - T``; for ``T = -A R A^*`` it equals ``A R_z A^*``.
    """
    T = ctx.T if T is None else _dense(T)
    Rz = ctx.R_z(z)
    a, a_star = ctx.a, ctx.a_star
    one = np.eye(ctx.dim)
    top_left = a @ (Rz - ctx.R) @ a_star - T
    block = np.block([[top_left, a @ Rz + one], [Rz @ a_star + one, Rz]])
    return KreinBlock(block, float(np.linalg.cond(block)))


def krein_resolvent(ctx: ResolventContext, z: complex, T=None) -> LinOp:
    blk = krein_block(ctx, z, T)
    if not np.isfinite(blk.condition_number) or blk.condition_number > MAX_BLOCK_CONDITION:
        raise SingularFormulaError(
            f"block matrix at z={z} has condition number {blk.condition_number:.3e}", blk.condition_number
        )
    Rz = ctx.R_z(z)
    right = np.vstack([ctx.a @ Rz, Rz])
    left = np.hstack([Rz @ ctx.a_star, Rz])
    lu = sla.lu_factor(blk.matrix)
    return LinOp(Rz - left @ sla.lu_solve(lu, right))


def apply_H(ctx: ResolventContext, psi, T=None) -> np.ndarray:
    """``(H_free + A^*) psi + A (1 + R A^*) psi + T psi``."""
    T = ctx.T if T is None else _dense(T)
    psi = np.asarray(psi, dtype=complex)
    H0 = _dense(ctx.H_free)
    return H0 @ psi + ctx.a_star @ psi + ctx.a @ (psi + ctx.R @ (ctx.a_star @ psi)) + T @ psi


def creation_resolvent_norm(ctx: ResolventContext, z: complex) -> float:
    """``|| R_z A^* ||`` as a bounded map on the full space."""
    return op_norm(ctx.R_z(z) @ ctx.a_star)


@dataclass(frozen=True)
class DomainVerdict:
    member: bool
    diagnostics: tuple[tuple[float, float], ...]
    exponent: float


def domain_membership(ladder: Sequence[ResolventContext], psi: Callable[[ResolventContext], np.ndarray],
                      extents: Sequence[float] | None = None,
                      threshold: float = DIVERGENCE_EXPONENT) -> DomainVerdict:
    """Track ``||(H_free - z0)(1 + R A^*) psi||`` along a ladder of nested grids.

    The vector is regular (a domain member in the limit) when these norms do
    not grow: fitted growth exponent against grid extent below ``threshold``.
    """
    if len(ladder) < MIN_DOMAIN_RUNGS:
        raise LadderError(f"domain diagnostics need at least {MIN_DOMAIN_RUNGS} rungs, got {len(ladder)}")
    if extents is None:
        extents = [ctx.extent if ctx.extent is not None else float(i + 1) for i, ctx in enumerate(ladder)]
    if any(b <= a for a, b in zip(extents, extents[1:])):
        raise LadderError("ladder extents must be strictly increasing")
    rows = []
    for x, ctx in zip(extents, ladder):
        v = np.asarray(psi(ctx), dtype=complex)
        regular = v + ctx.R @ (ctx.a_star @ v)
        rows.append((float(x), float(np.linalg.norm(_dense(ctx.H_free) @ regular - ctx.z0 * regular))))
    xs, ys = zip(*rows)
    if max(ys) == 0.0:
        exponent = 0.0
    else:
        exponent = power_law_exponent(xs, np.maximum(ys, np.finfo(float).tiny))
    return DomainVerdict(bool(exponent < threshold), tuple(rows), exponent)


@dataclass(frozen=True)
class VanishingRow:
    z: complex
    dist: float
    norm_measured: float
    norm_bound: float


@dataclass(frozen=True)
class VanishingReport:
    s: float
    rows: tuple[VanishingRow, ...]
    exponent: float
    expected_exponent: float
    within_bound: bool
    decreasing: bool

    @property
    def exponent_ok(self) -> bool:
        return abs(self.exponent - self.expected_exponent) <= 0.1

    @property
    def passed(self) -> bool:
        return self.within_bound and self.decreasing and self.exponent_ok


def resolvent_vanishing_study(ctx: ResolventContext, s: float, zs: Sequence[complex]) -> VanishingReport:
    """Measure ``||R_z||`` from the scale space of index ``-s`` into the base space along ``zs``.

    The bound is the spectral supremum ``max_lambda |(lambda - shift + 1)^{s/2} / (lambda - z)|``.
    """
    if not 0 <= s < 2:
        raise ValueError("s must lie in [0, 2)")
    zs = [complex(z) for z in zs]
    if any(z.imag > 0 for z in zs):
        raise ValueError("the study runs along Im z <= 0")
    dists = [ctx.dist(z) for z in zs]
    if any(b <= a for a, b in zip(dists, dists[1:])):
        raise LadderError("distance to the spectrum must increase along the z sequence")
    lam = ctx.spectrum
    weight = ctx.scale_op(s)
    rows = []
    for z, d in zip(zs, dists):
        measured = op_norm(ctx.R_z(z) @ weight)
        bound = float(np.max(np.abs((lam - ctx.shift + 1) ** (s / 2) / (lam - z))))
        rows.append(VanishingRow(z, d, measured, bound))
    measured = [r.norm_measured for r in rows]
    exponent = power_law_exponent(dists, measured)
    within = all(r.norm_measured <= r.norm_bound * (1 + 1e-10) for r in rows)
    decreasing = all(b < a for a, b in zip(measured, measured[1:]))
    return VanishingReport(float(s), tuple(rows), exponent, -1 + s / 2, within, decreasing)


def scale_operator_norm(ctx: ResolventContext, X, src: float, dst: float = 0.0) -> float:
    """Norm of ``X`` read as a map between the scale spaces of index ``src`` and ``dst``."""
    return op_norm(ctx.scale_op(dst) @ _dense(X) @ ctx.scale_op(-src))


def relative_error(X, Y) -> float:
    ny = op_norm(Y)
    return op_norm(_dense(X) - _dense(Y)) / (ny if ny > 0 else 1.0)



@dataclass(frozen=True)
class KreinCheckRow:
    z: complex
    dist: float
    rel_error: float
    condition_number: float
    adjoint_residual: float


def krein_check(ctx: ResolventContext, zs: Sequence[complex]) -> list[KreinCheckRow]:
    """Block formula with ``T = -A R A^*`` against the dense inverse of ``H_free + A^* + A``.

    ``adjoint_residual`` is ``||R_z^* - R_{conj z}||`` for the block-formula output.
    """
    H = _dense(ctx.H_free) + ctx.a + ctx.a_star
    rows = []
    for z in (complex(z) for z in zs):
        blk = krein_block(ctx, z)
        Rk = krein_resolvent(ctx, z).matrix
        Rk_bar = krein_resolvent(ctx, z.conjugate()).matrix
        err = relative_error(Rk, resolvent_direct(H, z))
        rows.append(KreinCheckRow(z, ctx.dist(z), err, blk.condition_number, op_norm(Rk.conj().T - Rk_bar)))
    return rows
