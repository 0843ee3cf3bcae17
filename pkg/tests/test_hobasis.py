import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfmix.grid import make_grid
from bfmix.hobasis import (
    CACHED_3D,
    ONTHEFLY_1D,
    BasisMemoryError,
    HermiteBasis1D,
    ResolutionWarning,
    assemble_hamiltonian,
    build_basis,
    iev_fermion_loop,
    shell_size,
    shell_triples,
    solve_lowest,
)
from bfmix.methods import radial_profile
from bfmix.physics import MixtureParams
from tests.oracles import ho_1d

W = 133 / 6
OMEGA_F = 0.16
MASS_F = 1 / W
LENGTH_F = np.sqrt(W / OMEGA_F)


@pytest.fixture(scope="module")
def grid():
    return make_grid(32, 14 * LENGTH_F / 32)


@pytest.mark.parametrize("n, size", [(0, 1), (7, 120), (11, 364), (14, 680), (16, 969), (21, 2024)])
def test_tetrahedral_sizes(n, size):
    assert shell_size(n) == size
    assert len(shell_triples(n)) == size


def test_triple_order_is_shell_then_lexicographic():
    t = shell_triples(3)
    shells = t.sum(axis=1)
    assert np.all(np.diff(shells) >= 0)
    for s in range(4):
        block = [tuple(r) for r in t[shells == s]]
        assert block == sorted(block, reverse=True)


def test_hermite_functions_match_oracle_and_are_orthonormal():
    x = np.linspace(-30, 30, 2001)
    h = HermiteBasis1D(x, 0.7, 1.3, 40)
    for n in (0, 1, 5, 12):
        assert np.allclose(h.values[n], ho_1d(n, x, 1.3, 0.7), atol=1e-12)
    dx = x[1] - x[0]
    gram = h.values @ h.values.T * dx
    assert np.max(np.abs(gram - np.eye(41))) < 1e-10


def test_hermite_no_overflow_at_64():
    x = np.linspace(-40, 40, 4001)
    h = HermiteBasis1D(x, 1.0, 1.0, 64)
    assert np.all(np.isfinite(h.values))


def test_zero_shell_is_gaussian(grid):
    b = build_basis(grid, OMEGA_F, MASS_F, 0)
    assert b.size == 1
    f = b.functions(0, 1).reshape(grid.shape)
    gauss = np.exp(-0.5 * MASS_F * OMEGA_F * grid.r2)
    gauss /= np.sqrt(np.sum(gauss**2) * grid.dV)
    assert np.allclose(f, gauss, atol=1e-12)


def test_trap_only_gives_oscillator_levels(grid):
    b = build_basis(grid, OMEGA_F, MASS_F, 4)
    H = assemble_hamiltonian(b.trap(), b)
    assert np.array_equal(H, np.diag(np.diag(H)))
    res = solve_lowest(H, 4, b)
    assert np.allclose(res.eigenvalues / OMEGA_F, [1.5, 2.5, 2.5, 2.5], rtol=1e-14)


def test_constant_shift(grid):
    b = build_basis(grid, OMEGA_F, MASS_F, 5)
    H = assemble_hamiltonian(b.trap() + 0.3, b)
    assert np.max(np.abs(H - np.diag(b.energies) - 0.3 * np.eye(b.size))) < 1e-10


def test_elements_match_direct_quadrature(grid):
    b = build_basis(grid, OMEGA_F, MASS_F, 6)
    dV = 0.05 * np.exp(-grid.r2 / (2 * LENGTH_F**2)) * (1 + 0.1 * grid.coords[0] / LENGTH_F)
    H = assemble_hamiltonian(b.trap() + dV, b)
    rng = np.random.default_rng(0)
    axes = [grid.axis(i) for i in range(3)]
    for _ in range(10):
        a, c = rng.integers(0, b.size, 2)
        fa = np.ones(grid.shape)
        fc = np.ones(grid.shape)
        for i in range(3):
            shape = [1, 1, 1]
            shape[i] = -1
            fa = fa * ho_1d(b.triples[a][i], axes[i], MASS_F, OMEGA_F).reshape(shape)
            fc = fc * ho_1d(b.triples[c][i], axes[i], MASS_F, OMEGA_F).reshape(shape)
        direct = np.sum(fa * dV * fc) * grid.dV + (b.energies[a] if a == c else 0.0)
        assert H[a, c] == pytest.approx(direct, abs=1e-12)


def test_strategies_give_identical_matrices(grid):
    rng = np.random.default_rng(1)
    dV = 0.01 * rng.normal(size=grid.shape)
    b3 = build_basis(grid, OMEGA_F, MASS_F, 7, CACHED_3D)
    b1 = build_basis(grid, OMEGA_F, MASS_F, 7, ONTHEFLY_1D)
    assert np.array_equal(assemble_hamiltonian(b3.trap() + dV, b3), assemble_hamiltonian(b1.trap() + dV, b1))
    assert b1.stored_bytes < b3.stored_bytes
    assert b3.memory_bytes == 120 * grid.size * 8


def test_memory_cap(grid):
    with pytest.raises(BasisMemoryError, match="onthefly1D"):
        build_basis(grid, OMEGA_F, MASS_F, 7, CACHED_3D, memory_cap=1000)
    b = build_basis(grid, OMEGA_F, MASS_F, 7, ONTHEFLY_1D, memory_cap=1000)
    assert b.size == 120


def test_coarse_grid_warns():
    g = make_grid(8, 4 * LENGTH_F)
    with pytest.warns(ResolutionWarning):
        build_basis(g, OMEGA_F, MASS_F, 3)


def test_unknown_strategy(grid):
    with pytest.raises(ValueError):
        build_basis(grid, OMEGA_F, MASS_F, 2, "sparse")


def test_solve_lowest_small_matrices():
    res = solve_lowest(np.diag([3.0, 1.0, 2.0]), 3)
    assert np.allclose(res.eigenvalues, [1, 2, 3])
    a, c = 2.0, 0.5
    res = solve_lowest(np.array([[a, c], [c, a]]), 2)
    assert np.allclose(res.eigenvalues, [a - c, a + c])
    with pytest.raises(ValueError):
        solve_lowest(np.eye(2), 3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_eigenvectors_orthonormal_and_residual(seed, count):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(12, 12))
    H = m + m.T
    res = solve_lowest(H, count)
    c = res.coefficients
    assert np.max(np.abs(c.T @ c - np.eye(count))) < 1e-12
    assert np.all(np.linalg.norm(H @ c - c * res.eigenvalues, axis=0) <= 1e-10 * np.linalg.norm(H, 2))
    assert np.all(np.diff(res.eigenvalues) >= 0)


def test_iev_uncoupled_is_one_iteration(grid):
    p = MixtureParams(40, 4, W, 0.04, OMEGA_F)
    b = build_basis(grid, OMEGA_F, MASS_F, 4)
    res = iev_fermion_loop(np.zeros(grid.shape), p, None, b, 1e-9)
    assert res.iterations == 1
    assert res.energy == pytest.approx(9 * OMEGA_F, rel=1e-6)


@pytest.mark.parametrize("count", [1, 4, 10])
def test_closed_shell_density_is_isotropic(grid, count):
    p = MixtureParams(40, count, W, 0.04, OMEGA_F)
    b = build_basis(grid, OMEGA_F, MASS_F, 3)
    res = iev_fermion_loop(np.zeros(grid.shape), p, None, b, 1e-9)
    n = np.sum(np.abs(res.orbitals) ** 2, axis=0)
    c = grid.n[0] // 2
    ax = [n[c:, c, c], n[c, c:, c], n[c, c, c:]]
    peak = n.max()
    assert max(np.max(np.abs(ax[0] - ax[1])), np.max(np.abs(ax[0] - ax[2]))) <= 1e-8 * peak
    r, prof = radial_profile(n, grid)
    assert prof[0] > 0


def test_variational_monotonicity_in_shell(grid):
    from bfmix.afunction import build_afun_table

    table = build_afun_table(W, nodes=64)
    p = MixtureParams(40, 4, W, 0.04, OMEGA_F, g_BF_over_gB=-3.0)
    n_B = 0.02 * np.exp(-grid.r2 / (2 * 6.0**2))
    energies = []
    for shell in (2, 4, 6):
        b = build_basis(grid, OMEGA_F, MASS_F, shell)
        energies.append(iev_fermion_loop(n_B, p, table, b, 1e-10).energy)
    assert energies[0] >= energies[1] >= energies[2]
