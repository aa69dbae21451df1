import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsbkit.errors import BasisSizeError, GridMismatchError
from gsbkit.fock import (
    FockVec,
    LinOp,
    annihilator,
    annihilator_bound_slack,
    annihilator_scale_norm,
    build_basis,
    coherent_vector,
    creator,
    embed,
    fock_scale_norm,
    number_bound_slack,
    number_op,
    second_quantize,
    vacuum,
)
from gsbkit.modes import FormFactor, ModeGrid, default_form_factor, pairing, scale_norm, single_mode, truncate, uniform_grid


def rand_factor(rng, grid):
    return FormFactor(rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size))


def rand_vec(rng, basis):
    return FockVec(basis, rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size))


def test_basis_enumeration():
    b = build_basis(1, 3)
    assert b.states == ((0,), (1,), (2,), (3,))
    assert build_basis(2, 2).states == ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0))
    b3 = build_basis(3, 4)
    assert b3.size == 35 == math.comb(7, 3)
    assert b3.states[0] == (0, 0, 0)
    assert list(b3.states) == sorted(b3.states)
    assert all(b3.index[s] == i for i, s in enumerate(b3.states))


def test_basis_cap():
    with pytest.raises(BasisSizeError):
        build_basis(10, 10)
    with pytest.raises(BasisSizeError):
        build_basis(3, 4, size_cap=34)
    with pytest.raises(ValueError):
        build_basis(0, 2)


def test_single_mode_ladder():
    g = single_mode(1.0)
    b = build_basis(1, 4)
    a = annihilator(FormFactor([1.0]), b, g).dense()
    assert np.allclose(a, np.diag(np.sqrt(np.arange(1, 5)), k=1))
    ad = creator(FormFactor([1.0]), b, g).dense()
    assert np.allclose(ad, np.diag(np.sqrt(np.arange(1, 5)), k=-1))
    # top sector is annihilated by the truncated creator
    assert not ad[:, -1].any()


def test_annihilator_kills_vacuum_and_vacuum_expectation():
    rng = np.random.default_rng(3)
    g = uniform_grid(0.0, 2.0, 3)
    b = build_basis(3, 3)
    f, h = rand_factor(rng, g), rand_factor(rng, g)
    vac = vacuum(b).amps
    assert not np.any(annihilator(f, b, g) @ vac)
    val = vac.conj() @ (annihilator(f, b, g).dense() @ creator(h, b, g).dense() @ vac)
    assert val == pytest.approx(pairing(f, h, g), abs=1e-14)


def test_creator_is_adjoint():
    rng = np.random.default_rng(4)
    g = uniform_grid(0.0, 2.0, 3)
    b = build_basis(3, 3)
    f = rand_factor(rng, g)
    assert np.array_equal(creator(f, b, g).dense(), annihilator(f, b, g).dense().conj().T)
    phi, psi = rand_vec(rng, b).amps, rand_vec(rng, b).amps
    lhs = phi.conj() @ (annihilator(f, b, g) @ psi)
    rhs = (creator(f, b, g) @ phi).conj() @ psi
    assert lhs == pytest.approx(rhs, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 5))
def test_ccr_safe_sector(seed, m, n_max):
    rng = np.random.default_rng(seed)
    g = uniform_grid(0.0, 1.0, m) if m > 1 else single_mode(1.5, weight=0.7)
    b = build_basis(m, n_max)
    f, h = rand_factor(rng, g), rand_factor(rng, g)
    af, ah = annihilator(f, b, g).dense(), annihilator(h, b, g).dense()
    safe = b.safe_mask
    comm = af @ ah.conj().T - ah.conj().T @ af - pairing(f, h, g) * np.eye(b.size)
    assert np.abs(comm[:, safe]).max() < 1e-12
    assert np.abs((af @ ah - ah @ af)[:, safe]).max(initial=0) < 1e-12


def test_sparse_and_dense_agree():
    rng = np.random.default_rng(5)
    g = uniform_grid(0.0, 1.0, 3)
    b = build_basis(3, 3)
    f = rand_factor(rng, g)
    sp = annihilator(f, b, g, sparse=True)
    assert sp.is_sparse
    assert np.array_equal(sp.dense(), annihilator(f, b, g, sparse=False).dense())
    assert np.array_equal(second_quantize(g, b, sparse=True).dense(), second_quantize(g, b, sparse=False).dense())


def test_annihilator_rejects_mismatch():
    g = uniform_grid(0.0, 1.0, 3)
    with pytest.raises(GridMismatchError):
        annihilator(default_form_factor(g), build_basis(2, 2), g)


def test_second_quantize_and_number():
    g = single_mode(2.0)
    b = build_basis(1, 4)
    assert np.allclose(np.diag(second_quantize(g, b).dense()), [0, 2, 4, 6, 8])
    g2 = uniform_grid(0.0, 1.0, 2)
    b2 = build_basis(2, 3)
    N = number_op(b2).dense()
    assert N[b2.index[(2, 1)], b2.index[(2, 1)]] == 3
    ones = ModeGrid(g2.nodes, g2.weights, np.ones(2))
    assert np.array_equal(second_quantize(ones, b2).dense(), N)
    dG = second_quantize(g2, b2).dense()
    assert np.allclose(dG @ N, N @ dG)
    assert (second_quantize(g2, b2) @ vacuum(b2).amps)[0] == 0


def test_coherent_vector():
    g = single_mode(1.0)
    b = build_basis(1, 5)
    c = 0.7 - 0.2j
    eps = coherent_vector(FormFactor([c]), b, g).amps
    assert np.allclose(eps, [c**n / math.sqrt(math.factorial(n)) for n in range(6)])
    assert np.array_equal(coherent_vector(FormFactor([0.0]), b, g).amps, vacuum(b).amps)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_coherent_eigenrelation(seed):
    rng = np.random.default_rng(seed)
    g = uniform_grid(0.0, 1.0, 3)
    b = build_basis(3, 4)
    f, h = rand_factor(rng, g), rand_factor(rng, g)
    eps = coherent_vector(h, b, g).amps
    lhs = (annihilator(f, b, g) @ eps)[b.safe_mask]
    rhs = (pairing(f, h, g) * eps)[b.safe_mask]
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_fock_scale_norm():
    rng = np.random.default_rng(6)
    g = uniform_grid(0.0, 2.0, 2)
    b = build_basis(2, 3)
    v = vacuum(b)
    assert fock_scale_norm(v, 1.7, g) == pytest.approx(1.0)
    psi = rand_vec(rng, b)
    assert fock_scale_norm(psi, 0.0, g) == pytest.approx(psi.norm())
    assert fock_scale_norm(psi, -1.0, g) <= fock_scale_norm(psi, 0.5, g) <= fock_scale_norm(psi, 2.0, g)


def test_number_and_annihilator_bounds():
    rng = np.random.default_rng(7)
    g = uniform_grid(0.0, 3.0, 3, mass=0.4)
    b = build_basis(3, 4)
    f = default_form_factor(g)
    for _ in range(100):
        psi = rand_vec(rng, b)
        assert number_bound_slack(psi, g) >= -1e-12
        assert annihilator_bound_slack(f, psi, g) >= -1e-12


def test_number_bound_saturates():
    # with m0 = 1, quanta in a mode with omega = 1 saturate the inequality
    g = ModeGrid([0.0, 1.0], [1.0, 1.0], [1.0, 2.0])
    b = build_basis(2, 3)
    amps = np.zeros(b.size)
    amps[b.index[(3, 0)]] = 1.0
    assert number_bound_slack(FockVec(b, amps), g) == pytest.approx(0.0, abs=1e-15)


def test_cutoff_approximation_in_scale_norm():
    # ||a(f_L) - a(f)||_{F_1 -> F} <= C ||f_L - f||_{H_{-1}} with a stable constant
    g = uniform_grid(0.0, 6.0, 7)
    b = build_basis(7, 2)
    f = default_form_factor(g)
    ratios = []
    for cutoff in g.nodes[:-1]:
        diff = f - truncate(f, cutoff, g)
        ratios.append(annihilator_scale_norm(diff, b, g, 1.0) / scale_norm(diff, -1.0, g))
    assert max(ratios) / min(ratios) < 3
    assert max(ratios) <= 1.0 + 1e-12


def test_embed_is_isometry():
    small, big = build_basis(2, 2), build_basis(3, 3)
    E = embed(small, big)
    assert np.allclose(E.T @ E, np.eye(small.size))
    with pytest.raises(GridMismatchError):
        embed(big, small)


def test_linop_algebra_and_annotations():
    g = uniform_grid(0.0, 1.0, 2)
    b = build_basis(2, 2)
    a = annihilator(default_form_factor(g), b, g)
    assert a.src_scale == 1.0 and a.dst_scale == 0.0
    ad = a.H
    assert ad.src_scale == 0.0 and ad.dst_scale == -1.0
    s = (a + ad) * 2.0
    assert np.allclose(s.dense(), 2 * (a.dense() + ad.dense()))
    assert np.allclose((a - a).dense(), 0)
    assert np.allclose(np.asarray(a @ ad), a.dense() @ ad.dense())
    with pytest.raises(ValueError):
        LinOp(np.array([[np.nan]]))
