"""Cutoff renormalization: regularized Hamiltonian ladders, norm-resolvent convergence and van Hove dressing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .fock import FockBasis, LinOp, annihilator, build_basis, second_quantize
from .gsb import ModelSpec, assemble_hamiltonian
from .modes import FormFactor, ModeGrid, scale_norm, truncate
from .resolvent import (
    ResolventContext,
    krein_resolvent,
    op_norm,
    resolvent_direct,
    spectral_distance,
)

DEFAULT_Z_SET = (-3.0, -10.0, -30.0, -1 + 5j)
RATIO_SPREAD_LIMIT = 3.0


def truncated_factors(spec: ModelSpec, cutoff: float) -> tuple[FormFactor, ...]:
    return tuple(truncate(f, cutoff, spec.grid, strict=False) for f in spec.factors)


def ladder(spec: ModelSpec, cutoffs: Sequence[float]) -> list[LinOp]:
    """Regularized Hamiltonians ``H_free + A_n^* + A_n`` with sharp cutoffs."""
    return [assemble_hamiltonian(spec, truncated_factors(spec, c)) for c in cutoffs]


def norm_resolvent_distance(H_a, H_b, z: complex) -> float:
    """``|| (H_a - z)^{-1} - (H_b - z)^{-1} ||``."""
    return op_norm(resolvent_direct(H_a, z).matrix - resolvent_direct(H_b, z).matrix)


def factor_distance(fs: Sequence[FormFactor], gs: Sequence[FormFactor], grid: ModeGrid, s: float = -1.0) -> float:
    """Euclidean combination of the per-coupling scale-norm distances."""
    return float(np.sqrt(sum(scale_norm(f - g, s, grid) ** 2 for f, g in zip(fs, gs))))


@dataclass(frozen=True)
class ConvergenceRow:
    cutoff: float
    z: complex
    h_minus1_dist: float
    resolvent_dist: float
    tmin_dist: float

    @property
    def ratio(self) -> float:
        return self.resolvent_dist / self.h_minus1_dist if self.h_minus1_dist > 0 else 0.0


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    constants: dict
    ratio_spread: dict
    decreasing: dict
    verdict: bool

    def for_z(self, z: complex) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.z == complex(z)]


def convergence_study(spec: ModelSpec, cutoffs: Sequence[float], zs: Sequence[complex] = DEFAULT_Z_SET,
                      z0: float = -1.0) -> ConvergenceReport:
    """Compare every rung against the finest-cutoff model (the full grid).

    The reference resolvent comes from the block formula with the minimal
    regularizing operator; rungs are inverted directly. The ratio of resolvent
    distance to the ``H_{-1}`` distance of the form factors is expected to stay
    bounded (fitted constant per ``z``).
    """
    cutoffs = [float(c) for c in cutoffs]
    if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError("cutoffs must be strictly increasing")
    zs = [complex(z) for z in zs]
    ref_ctx = ResolventContext.from_spec(spec, z0)
    ref_res = {z: krein_resolvent(ref_ctx, z).matrix for z in zs}
    ref_ARA = -ref_ctx.T
    rows = []
    for c in cutoffs:
        fs = truncated_factors(spec, c)
        hd = factor_distance(fs, spec.factors, spec.grid)
        ctx = ResolventContext.from_spec(spec, z0, fs)
        tmin_dist = op_norm(-ctx.T - ref_ARA)
        H = assemble_hamiltonian(spec, fs)
        for z in zs:
            rd = op_norm(resolvent_direct(H, z).matrix - ref_res[z])
            rows.append(ConvergenceRow(c, z, hd, rd, tmin_dist))
    constants, spread, decreasing = {}, {}, {}
    for z in zs:
        zr = [r for r in rows if r.z == z]
        ratios = np.array([r.ratio for r in zr if r.h_minus1_dist > 0])
        dists = [r.resolvent_dist for r in zr]
        constants[z] = float(ratios.max()) if ratios.size else 0.0
        spread[z] = float(ratios.max() / ratios.min()) if ratios.size and ratios.min() > 0 else float("inf")
        decreasing[z] = all(b < a for a, b in zip(dists, dists[1:]))
    all_zero = all(r.resolvent_dist == 0 for r in rows)
    verdict = all_zero or all(decreasing[z] and spread[z] < RATIO_SPREAD_LIMIT for z in zs)
    return ConvergenceReport(tuple(rows), constants, spread, decreasing, bool(verdict))


def self_energy(f: FormFactor, grid: ModeGrid) -> float:
    """``-sum_i w_i |f_i|^2 / omega_i``, i.e. minus the squared ``H_{-1}`` norm."""
    return -scale_norm(f, -1.0, grid) ** 2


@dataclass(frozen=True)
class DressingReport:
    self_energy: float
    ground_energy: float
    unitarity_residual: float
    conjugation_residual: float
    spectral_distance: float
    n_max: int


def van_hove_hamiltonian(f: FormFactor, grid: ModeGrid, basis: FockBasis) -> np.ndarray:
    a = annihilator(f, basis, grid, sparse=False).matrix
    H = second_quantize(grid, basis, sparse=False).matrix + a + a.conj().T
    return (H + H.conj().T) / 2


def dressing_operator(f: FormFactor, grid: ModeGrid, basis: FockBasis) -> np.ndarray:
    """``exp(a(h) - a^*(h))`` with ``h = f / omega``; the generator is exactly anti-Hermitian."""
    h = FormFactor(f.values / grid.omega)
    a = annihilator(h, basis, grid, sparse=False).matrix
    return sla.expm(a - a.conj().T)


def van_hove_dressing(f: FormFactor, grid: ModeGrid, basis: FockBasis | int,
                      spec: ModelSpec | None = None) -> DressingReport:
    """Check that the dressing unitary conjugates the regularized van Hove Hamiltonian to ``dGamma + E``.

    The conjugation residual is measured on total occupation ``<= n_max // 2``;
    the spectral comparison uses the lowest quarter of the eigenvalues.
    """
    if spec is not None and (spec.spin.dim != 1 or spec.spin.n_couplings != 1):
        raise ValueError("dressing is defined for the van Hove model (D = 1, one coupling)")
    if isinstance(basis, int):
        basis = build_basis(grid.size, basis)
    H = van_hove_hamiltonian(f, grid, basis)
    H_free = second_quantize(grid, basis, sparse=False).matrix.real
    E = self_energy(f, grid)
    W = dressing_operator(f, grid, basis)
    n = basis.size
    unitarity = op_norm(W.conj().T @ W - np.eye(n))
    low = basis.sector_mask(basis.n_max // 2)
    diff = W.conj().T @ H @ W - H_free - E * np.eye(n)
    conj = op_norm(diff[np.ix_(low, low)])
    ev = np.linalg.eigvalsh(H)
    target = np.diag(H_free) + E
    quarter = ev[: max(1, len(ev) // 4)]
    sdist = max(spectral_distance(target, x) for x in quarter)
    return DressingReport(E, float(ev[0]), unitarity, conj, sdist, basis.n_max)



@dataclass(frozen=True)
class DressingLadder:
    reports: tuple[DressingReport, ...]
    decreasing: bool


def dressing_ladder(f: FormFactor, grid: ModeGrid, n_maxes: Sequence[int]) -> DressingLadder:
    """Dressing reports over increasing truncations; ``decreasing`` tracks the conjugation residual."""
    n_maxes = [int(n) for n in n_maxes]
    if any(b <= a for a, b in zip(n_maxes, n_maxes[1:])):
        raise ValueError("truncations must be strictly increasing")
    reports = tuple(van_hove_dressing(f, grid, n) for n in n_maxes)
    res = [r.conjugation_residual for r in reports]
    return DressingLadder(reports, all(b < a for a, b in zip(res, res[1:])))
