"""Generalized spin-boson Hamiltonians on ``C^D (x) F_trunc``.

The atom index is the major (outer Kronecker) index, so a vector is the stack
``[Psi_1; ...; Psi_D]`` of Fock-space components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import AssumptionViolationError, GridMismatchError
from .fock import (
    DEFAULT_SIZE_CAP,
    FockBasis,
    LinOp,
    annihilator,
    build_basis,
    field_energies,
)
from .modes import FormFactor, ModeGrid, scale_norm

ASSUMPTION_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.conj().T


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Atom energy ``K`` and coupling matrices ``B_1..B_N``."""

    K: np.ndarray
    couplings: tuple
    labels: tuple = ()

    def __post_init__(self):
        K = np.array(self.K, dtype=complex)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("K must be a square matrix")
        if np.abs(K - K.conj().T).max(initial=0) > 1e-12:
            raise ValueError("K must be self-adjoint")
        Bs = tuple(np.array(B, dtype=complex) for B in self.couplings)
        if not Bs:
            raise ValueError("need at least one coupling matrix")
        for B in Bs:
            if B.shape != K.shape:
                raise ValueError(f"coupling of shape {B.shape} does not match K {K.shape}")
        labels = tuple(self.labels) or tuple(f"B{j + 1}" for j in range(len(Bs)))
        if len(labels) != len(Bs):
            raise ValueError("one label per coupling")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "couplings", Bs)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    @property
    def n_couplings(self) -> int:
        return len(self.couplings)


@dataclass(frozen=True)
class AssumptionReport:
    normal: tuple[bool, ...]
    normality_residuals: tuple[float, ...]
    commutator_residuals: dict
    joint_kernel_trivial: bool
    smallest_stacked_singular_value: float
    verdict: bool

    def failures(self) -> list[str]:
        out = []
        for j, ok in enumerate(self.normal):
            if not ok:
                out.append(f"normality: B{j + 1} is not normal (residual {self.normality_residuals[j]:.3e})")
        for (j, l), r in sorted(self.commutator_residuals.items()):
            if r >= ASSUMPTION_TOL:
                out.append(f"commutation: [B{j + 1}, B{l + 1}] != 0 (residual {r:.3e})")
        if not self.joint_kernel_trivial:
            out.append(
                f"joint kernel: couplings share a null vector "
                f"(smallest stacked singular value {self.smallest_stacked_singular_value:.3e})"
            )
        return out


def validate_interaction(spin: SpinSystem) -> AssumptionReport:
    """Check that the couplings are normal, pairwise commuting and have trivial joint kernel."""
    Bs = spin.couplings
    norm_res = tuple(float(np.linalg.norm(B.conj().T @ B - B @ B.conj().T, 2)) for B in Bs)
    comm = {}
    for j in range(len(Bs)):
        for l in range(j + 1, len(Bs)):
            comm[(j, l)] = float(np.linalg.norm(Bs[j] @ Bs[l] - Bs[l] @ Bs[j], 2))
    smin = float(np.linalg.svd(np.vstack(Bs), compute_uv=False)[-1])
    normal = tuple(r < ASSUMPTION_TOL for r in norm_res)
    kernel_ok = smin > ASSUMPTION_TOL
    verdict = all(normal) and all(r < ASSUMPTION_TOL for r in comm.values()) and kernel_ok
    return AssumptionReport(normal, norm_res, comm, kernel_ok, smin, verdict)


@dataclass(frozen=True, eq=False)
class EigStructure:
    """Common eigenbasis: ``B_j @ U[:, a] == eigvals[j, a] * U[:, a]``."""

    U: np.ndarray
    eigvals: np.ndarray

    def residuals(self, spin: SpinSystem) -> tuple[float, float]:
        unitarity = float(np.linalg.norm(self.U.conj().T @ self.U - np.eye(len(self.U)), 2))
        diag = max(
            float(np.linalg.norm(B @ self.U - self.U * self.eigvals[j][None, :], 2))
            for j, B in enumerate(spin.couplings)
        )
        return unitarity, diag


def _cluster(values, tol):
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            groups.append(list(range(start, i)))
            start = i
    return groups


def _canonical_basis(V):
    """Deterministic orthonormal basis of span(V): Gram-Schmidt on projected unit vectors."""
    P = V @ V.conj().T
    out = []
    for k in range(P.shape[0]):
        v = P[:, k].copy()
        for u in out:
            v -= (u.conj() @ v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            out.append(v / nv)
        if len(out) == V.shape[1]:
            break
    return np.array(out).T


def _split(Bs, V, rng, tol, depth=0):
    """Split span(V) into joint eigenspaces of the (commuting, normal) family Bs."""
    # restricted family; scalar on span(V) means V is already a joint eigenspace
    restricted = [V.conj().T @ B @ V for B in Bs]
    d = V.shape[1]
    if d == 1 or all(np.linalg.norm(Bv - np.trace(Bv) / d * np.eye(d), 2) < tol for Bv in restricted):
        return [V]
    if depth > 20:
        raise AssumptionViolationError("simultaneous diagonalization did not converge")
    c = rng.normal(size=len(Bs))
    e = rng.normal(size=len(Bs))
    H = sum(cj * (B + B.conj().T) + ej * 1j * (B - B.conj().T) for cj, ej, B in zip(c, e, restricted))
    w, X = np.linalg.eigh(H)
    scale = max(1.0, float(np.abs(w).max()))
    out = []
    for grp in _cluster(w, 1e-7 * scale):
        out.extend(_split(Bs, V @ X[:, grp], rng, tol, depth + 1))
    return out


def common_eigenbasis(spin: SpinSystem, seed: int = 0) -> EigStructure:
    """Simultaneous unitary diagonalization of the couplings.

    Random Hermitian combinations separate the joint eigenspaces (retrying on
    accidental degeneracy); vectors inside a genuinely degenerate joint
    eigenspace are fixed by Gram-Schmidt against the standard basis. Columns are
    ordered by their leading component.
    """
    report = validate_interaction(spin)
    if not report.verdict:
        raise AssumptionViolationError("; ".join(report.failures()))
    Bs = spin.couplings
    D = spin.dim
    scale = max(1.0, max(float(np.linalg.norm(B, 2)) for B in Bs))
    tol = 1e-9 * scale
    spaces = _split(Bs, np.eye(D, dtype=complex), np.random.default_rng(seed), tol)
    cols = []
    for V in spaces:
        V = _canonical_basis(V)
        for a in range(V.shape[1]):
            u = V[:, a]
            lead = int(np.argmax(np.abs(u) > np.abs(u).max() - 1e-9))
            u = u * (abs(u[lead]) / u[lead])
            cols.append(u)

    def key(u):
        lead = int(np.argmax(np.abs(u) > np.abs(u).max() - 1e-9))
        b = [complex(u.conj() @ B @ u) for B in Bs]
        return (lead, *[t for z in b for t in (-round(z.real, 9), -round(z.imag, 9))])

    cols.sort(key=key)
    U = np.array(cols).T
    eigvals = np.array([[U[:, a].conj() @ B @ U[:, a] for a in range(D)] for B in Bs])
    eig = EigStructure(U, eigvals)
    unitarity, diag = eig.residuals(spin)
    if unitarity > 1e-10 or diag > 1e-9 * scale:
        raise AssumptionViolationError(f"diagonalization residual too large ({unitarity:.2e}, {diag:.2e})")
    return eig


@dataclass(frozen=True, eq=False)
class ModelSpec:
    spin: SpinSystem
    grid: ModeGrid
    factors: tuple
    basis: FockBasis
    preset: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        factors = tuple(self.factors)
        if len(factors) != self.spin.n_couplings:
            raise ValueError(f"{len(factors)} form factors for {self.spin.n_couplings} couplings")
        for f in factors:
            f.check_on(self.grid)
        self.basis.check_grid(self.grid)
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self) -> int:
        return self.spin.dim * self.basis.size

    def with_factors(self, factors) -> ModelSpec:
        return ModelSpec(self.spin, self.grid, tuple(factors), self.basis, self.preset, self.params)


def model_spec(spin: SpinSystem, grid: ModeGrid, factors: Sequence[FormFactor], n_max: int,
               size_cap: int = DEFAULT_SIZE_CAP, preset: str = "custom", params=None) -> ModelSpec:
    basis = build_basis(grid.size, n_max, size_cap)
    return ModelSpec(spin, grid, tuple(factors), basis, preset, dict(params or {}))


def assemble_free(spec: ModelSpec) -> LinOp:
    """``K (x) 1 + 1 (x) dGamma(omega)``."""
    d = field_energies(spec.basis, spec.grid)
    D = spec.spin.dim
    return LinOp(np.kron(spec.spin.K, np.eye(spec.basis.size)) + np.kron(np.eye(D), np.diag(d)))


def free_spectrum(spec: ModelSpec) -> np.ndarray:
    """Eigenvalues of the free Hamiltonian as the Kronecker sum of spec(K) and the Fock energies."""
    kappa = np.linalg.eigvalsh(spec.spin.K)
    return np.sort((kappa[:, None] + field_energies(spec.basis, spec.grid)[None, :]).ravel())


def assemble_A(spec: ModelSpec, factors: Sequence[FormFactor] | None = None) -> LinOp:
    """Annihilation part ``sum_j B_j^* (x) a(f_j)``; its adjoint is the creation part."""
    factors = spec.factors if factors is None else tuple(factors)
    if len(factors) != spec.spin.n_couplings:
        raise GridMismatchError("one form factor per coupling")
    D, n = spec.spin.dim, spec.basis.size
    out = np.zeros((D * n, D * n), dtype=complex)
    src = 0.0
    for B, f in zip(spec.spin.couplings, factors):
        a = annihilator(f, spec.basis, spec.grid, sparse=False)
        src = max(src, a.src_scale)
        out += np.kron(B.conj().T, a.matrix)
    return LinOp(out, src, 0.0)


def assemble_hamiltonian(spec: ModelSpec, factors: Sequence[FormFactor] | None = None) -> LinOp:
    A = assemble_A(spec, factors).dense()
    H = assemble_free(spec).dense() + A + A.conj().T
    return LinOp((H + H.conj().T) / 2)


def block_decompose(spec: ModelSpec, eig: EigStructure) -> list[LinOp]:
    """Per-eigenvector annihilators ``a(sum_j b_j^(a) f_j)``."""
    report = validate_interaction(spec.spin)
    if not report.verdict:
        raise AssumptionViolationError("; ".join(report.failures()))
    return [annihilator(block_factor(spec, eig, a), spec.basis, spec.grid, sparse=False)
            for a in range(spec.spin.dim)]


def block_factor(spec: ModelSpec, eig: EigStructure, a: int) -> FormFactor:
    return reduce(lambda x, y: x + y, (complex(b) * f for b, f in zip(eig.eigvals[:, a], spec.factors)))


def block_residual(spec: ModelSpec, eig: EigStructure, blocks: Sequence[LinOp] | None = None) -> float:
    """Operator-norm distance between ``(U (x) 1)^* A (U (x) 1)`` and the direct sum of blocks."""
    blocks = block_decompose(spec, eig) if blocks is None else blocks
    n = spec.basis.size
    W = np.kron(eig.U, np.eye(n))
    rotated = W.conj().T @ assemble_A(spec).dense() @ W
    direct = np.zeros_like(rotated)
    for a, blk in enumerate(blocks):
        direct[a * n:(a + 1) * n, a * n:(a + 1) * n] = blk.dense()
    return float(np.linalg.norm(rotated - direct, 2))


def relative_bound_constant(spec: ModelSpec, factors: Sequence[FormFactor] | None = None) -> float:
    """``sum_j ||B_j|| ||f_j|| min(m0, 1)^{-1/2}``, the constant in ``||A psi|| <= c ||psi||_1``."""
    factors = spec.factors if factors is None else tuple(factors)
    m0 = min(spec.grid.mass_floor, 1.0)
    total = sum(np.linalg.norm(B, 2) * scale_norm(f, 0.0, spec.grid) for B, f in zip(spec.spin.couplings, factors))
    return float(total / np.sqrt(m0))


def free_scale_norm(spec: ModelSpec, psi, s: float = 1.0) -> float:
    """``||(H_free - shift + 1)^{s/2} psi||`` with ``shift = min(0, min spec K)``."""
    kappa, V = np.linalg.eigh(spec.spin.K)
    shift = min(0.0, float(kappa[0]))
    n = spec.basis.size
    psi = np.asarray(psi, dtype=complex).reshape(spec.spin.dim, n)
    coeffs = V.conj().T @ psi
    energies = kappa[:, None] - shift + 1 + field_energies(spec.basis, spec.grid)[None, :]
    return float(np.sqrt(np.sum(energies ** s * np.abs(coeffs) ** 2)))


def relative_bound_slack(spec: ModelSpec, psi, factors: Sequence[FormFactor] | None = None) -> float:
    """``c ||psi||_1 - ||A psi||``; non-negative by the number-operator estimate."""
    A = assemble_A(spec, factors).dense()
    c = relative_bound_constant(spec, factors)
    return c * free_scale_norm(spec, psi, 1.0) - float(np.linalg.norm(A @ np.asarray(psi, dtype=complex)))


def site_operator(op, site: int, n_sites: int) -> np.ndarray:
    """``1 (x) .. (x) op (x) .. (x) 1`` with ``op`` on tensor factor ``site``."""
    d = op.shape[0]
    mats = [op if j == site else np.eye(d) for j in range(n_sites)]
    return reduce(np.kron, mats)


PRESETS = ("sigma_x", "sigma_x_multi", "sigma_z", "sigma_z_multi", "van_hove", "rwa")


def preset(name: str, grid: ModeGrid, factors, n_max: int, eta=1.0, n_atoms: int | None = None,
           size_cap: int = DEFAULT_SIZE_CAP) -> ModelSpec:
    """Build one of the shipped models.

    ``sigma_x``/``sigma_z``: single qubit, ``K = eta/2 sigma_z``, ``B = sigma_x`` or ``sigma_z``.
    ``*_multi``: ``n_atoms`` qubits with site-local couplings and per-atom ``eta``.
    ``van_hove``: ``D = 1``, ``K = eta``, ``B = 1``.
    ``rwa``: rotating-wave coupling ``B = sigma_-`` (so ``A = sigma_+ (x) a(f)``); fails the
    interaction assumption and is meant for validation only.
    """
    if isinstance(factors, FormFactor):
        factors = [factors]
    factors = list(factors)
    if name in ("sigma_x", "sigma_z", "rwa", "van_hove"):
        n = 1
    elif name in ("sigma_x_multi", "sigma_z_multi"):
        n = len(factors) if n_atoms is None else n_atoms
    else:
        raise ValueError(f"unknown preset {name!r}; known: {PRESETS}")
    if n_atoms is not None and n_atoms != n:
        raise ValueError(f"preset {name!r} has {n} atom(s), got n_atoms={n_atoms}")
    etas = np.broadcast_to(np.asarray(eta, dtype=float), (n,)) if np.ndim(eta) == 0 else np.asarray(eta, float)
    if len(etas) != n or len(factors) != n:
        raise ValueError(f"preset {name!r} with {n} atom(s) needs {n} eta values and {n} form factors")
    if name == "van_hove":
        spin = SpinSystem(np.array([[etas[0]]]), (np.eye(1),), ("1",))
    elif name == "rwa":
        spin = SpinSystem(etas[0] / 2 * SIGMA_Z, (SIGMA_MINUS,), ("sigma_-",))
    else:
        coupling = SIGMA_X if name.startswith("sigma_x") else SIGMA_Z
        tag = "x" if name.startswith("sigma_x") else "z"
        K = sum(etas[j] / 2 * site_operator(SIGMA_Z, j, n) for j in range(n))
        Bs = tuple(site_operator(coupling, j, n) for j in range(n))
        spin = SpinSystem(K, Bs, tuple(f"sigma_{tag},{j + 1}" for j in range(n)))
    params = {"eta": [float(e) for e in etas], "n_atoms": n}
    return model_spec(spin, grid, factors, n_max, size_cap, name, params)


def hermiticity_residual(spec: ModelSpec) -> float:
    """Largest entry of ``|H - H^*|`` for the unsymmetrized sum ``H_free + A^* + A``."""
    A = assemble_A(spec).dense()
    H = assemble_free(spec).dense() + A + A.conj().T
    return float(np.abs(H - H.conj().T).max())


def low_spectra(spec: ModelSpec, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` eigenvalues of ``H_free`` and of ``H_free + A^* + A``."""
    free = free_spectrum(spec)
    full = np.linalg.eigvalsh(assemble_hamiltonian(spec).dense())
    count = len(free) if count is None else count
    return free[:count], full[:count]
