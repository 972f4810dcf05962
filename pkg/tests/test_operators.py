import math
import warnings

import numpy as np
import pytest

from conftest import circulant_difference, fd_gradient, fd_hessian
from quasicontinuum.lattice import (ConfigurationError, LatticeConfig, apply_involution,
                                    backward_difference, norm_lp)
from quasicontinuum.operators import (MODELS, apply, assemble, energy, forcing, ghost_vector,
                                      table_row)
from quasicontinuum.potential import ExplicitCoeffs, LinearizedCoeffs, linearize

SHIFTED = linearize(ExplicitCoeffs(0.3, 1.0, 0.05, -0.1))


def lattice_for(model, N, K):
    return LatticeConfig(N, K if model in ("qce", "qnl") else None)


class TestStencils:
    def test_qce_interior_row_matches_atomistic(self, toy):
        lat = LatticeConfig(8, 3)
        op = assemble("qce", lat, toy)
        h2 = lat.h**2
        row = op.row(0)
        assert row[0] == pytest.approx(1.8 / h2)
        assert row[1] == row[-1] == pytest.approx(-1.0 / h2)
        assert row[2] == row[-2] == pytest.approx(0.1 / h2)
        assert op.row(0) == assemble("atomistic", lat, toy).row(0)

    @pytest.mark.parametrize("j", [-7, -1, 0, 3, 8])
    def test_continuum_row(self, toy, j):
        lat = LatticeConfig(8)
        row = assemble("continuum", lat, toy).row(j)
        c = toy.c_cont / lat.h**2
        assert len(row) == 3
        for k, v in ((j - 1, -c), (j, 2 * c), (j + 1, -c)):
            kk = (k + 7) % 16 - 7
            assert row[kk] == pytest.approx(v)

    def test_qce_regions(self, lj):
        lat = LatticeConfig(32, 8)
        q = assemble("qce", lat, lj).toarray()
        a = assemble("atomistic", lat, lj).toarray()
        c = assemble("continuum", lat, lj).toarray()
        for j in lat.indices:
            i = lat.slot(j)
            if abs(j) <= 6:
                np.testing.assert_array_equal(q[i], a[i])
            elif abs(j) >= 11 and j != -31:
                np.testing.assert_allclose(q[i], c[i], rtol=1e-14)

    def test_table_rows_are_consistent_scaled_stencils(self, lj):
        lat = LatticeConfig(16, 4)
        op = assemble("qnl", lat, lj)
        for j in range(0, 16):
            expected = {k: v / lat.h**2 for k, v in table_row("qnl", j, lat, lj).items() if v}
            got = {k - j: v for k, v in op.row(j).items()}
            assert got.keys() == expected.keys()
            for k in got:
                assert got[k] == pytest.approx(expected[k], rel=1e-14)

    def test_interface_range_enforced(self, lj):
        with pytest.raises(ConfigurationError):
            assemble("qce", LatticeConfig(8), lj)
        with pytest.raises(ValueError):
            assemble("quasi", LatticeConfig(8, 3), lj)


class TestStructure:
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("N,K", [(4, 2), (8, 3), (8, 6), (9, 2), (16, 14)])
    def test_symmetry_rowsums_involution(self, lj, model, N, K):
        lat = lattice_for(model, N, K)
        L = assemble(model, lat, lj).toarray()
        scale = np.abs(L).max()
        assert np.abs(L - L.T).max() <= 1e-14 * scale
        assert np.abs(L.sum(axis=1)).max() <= 1e-12 * scale
        perm = lat.slot(-lat.indices)
        np.testing.assert_array_equal(L[np.ix_(perm, perm)], L)

    @pytest.mark.parametrize("model", MODELS)
    def test_constants_in_kernel(self, toy, model):
        lat = lattice_for(model, 8, 3)
        assert norm_lp(apply(assemble(model, lat, toy), np.ones(16)), 2, lat.h) < 1e-12

    @pytest.mark.parametrize("model", MODELS)
    def test_sparse_equals_dense(self, lj, model):
        lat = lattice_for(model, 32, 8)
        dense = assemble(model, lat, lj)
        sparse = assemble(model, lat, lj, sparse=True)
        assert sparse.is_sparse and not dense.is_sparse
        np.testing.assert_array_equal(sparse.toarray(), dense.toarray())
        assert assemble(model, lattice_for(model, 512, 128), lj).is_sparse

    @pytest.mark.parametrize("model", MODELS)
    def test_mean_zero_kernel_trivial(self, lj, model):
        lat = lattice_for(model, 16, 4)
        L = assemble(model, lat, lj).toarray()
        Q = np.linalg.qr(np.eye(32) - 1 / 32)[0][:, :31]
        assert np.linalg.eigvalsh(Q.T @ L @ Q).min() > 0

    def test_dump_triplets(self, toy, tmp_path):
        lat = LatticeConfig(4, 2)
        op = assemble("qnl", lat, toy)
        path = tmp_path / "L.txt"
        op.dump_triplets(path)
        lines = path.read_text().splitlines()
        assert len(lines) == np.count_nonzero(op.toarray())
        i, j, v = lines[0].split()
        assert (int(i), int(j)) == (-3, -3)
        assert float(v) == op.toarray()[0, 0]

    def test_warns_outside_theory(self):
        bad = LinearizedCoeffs(0, 0.4, 0, -0.1)
        with pytest.warns(RuntimeWarning, match="nu_qce"):
            assemble("qce", LatticeConfig(8, 3), bad)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assemble("atomistic", LatticeConfig(8), bad)


class TestEnergyOracle:
    """Operators and ghost forces against finite differences of the energies."""

    @pytest.mark.parametrize("coeffs", ["lj", "shifted"])
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("N,K", [(4, 2), (8, 3), (8, 6), (7, 4)])
    def test_hessian(self, lj, coeffs, model, N, K):
        c = lj if coeffs == "lj" else SHIFTED
        lat = lattice_for(model, N, K)
        L = assemble(model, lat, c).toarray()
        H = fd_hessian(lambda u: energy(model, u, lat, c), lat.size)
        assert np.abs(H / lat.h - L).max() <= 1e-5 * np.abs(L).max()

    @pytest.mark.parametrize("model", MODELS)
    def test_gradient(self, rng, model):
        lat = lattice_for(model, 8, 3)
        op = assemble(model, lat, SHIFTED)
        g = forcing(model, lat, SHIFTED).values
        for _ in range(20):
            u = rng.standard_normal(lat.size)
            grad = fd_gradient(lambda v: energy(model, v, lat, SHIFTED), u)
            exact = lat.h * (op @ u - g)
            assert np.abs(grad - exact).max() <= 1e-6 * np.abs(exact).max()

    @pytest.mark.parametrize("model", MODELS)
    def test_zero_and_translation(self, lj, model):
        lat = lattice_for(model, 8, 3)
        assert energy(model, np.zeros(16), lat, lj) == 0.0
        assert energy(model, np.full(16, 0.7), lat, SHIFTED) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("model", ["qce", "qnl"])
    def test_involution_invariance(self, rng, model):
        lat = LatticeConfig(8, 3)
        for _ in range(5):
            u = rng.standard_normal(16)
            E1 = energy(model, u, lat, SHIFTED)
            E2 = energy(model, apply_involution(u).values, lat, SHIFTED)
            assert E2 == pytest.approx(E1, rel=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_quadratic_form_is_twice_quadratic_energy(self, rng, model):
        # the linear part is odd in v, so (E(v) + E(-v)) / 2 isolates the quadratic part
        lat = lattice_for(model, 16, 5)
        op = assemble(model, lat, SHIFTED)
        for _ in range(10):
            v = rng.standard_normal(lat.size)
            quad = 0.5 * (energy(model, v, lat, SHIFTED) + energy(model, -v, lat, SHIFTED))
            assert op.quadratic_form(v) == pytest.approx(2 * quad, rel=1e-12)


class TestGhostVector:
    def test_support_and_values(self, lj):
        lat = LatticeConfig(32, 8)
        g = ghost_vector(lat, lj)
        w = lj.phi1_2F * 16
        assert g[8] == pytest.approx(w) and g[8] == pytest.approx(1.476563, abs=1e-6)
        assert (g[7], g[9], g[10]) == (-w, w, -w)
        support = {int(j) for j in lat.indices if g[j] != 0}
        assert support == {s * k for s in (1, -1) for k in (7, 8, 9, 10)}
        np.testing.assert_array_equal(apply_involution(g.values).values, g.values)
        assert abs(math.fsum(g.values)) <= 4 * np.finfo(float).eps * w

    def test_vanishes_without_first_order_term(self):
        lat = LatticeConfig(16, 4)
        g = ghost_vector(lat, LinearizedCoeffs(0.3, 1, 0.0, -0.1))
        assert not np.any(g.values)

    def test_seam_cancellation(self, toy):
        # K = N - 2: the K+2 entry sits on the seam row and cancels against its mirror
        lat = LatticeConfig(8, 6)
        g = ghost_vector(lat, toy)
        assert g[8] == 0.0
        assert g[7] != 0.0 and g[-7] == -g[7]

    def test_forcing_by_model(self, toy):
        lat = LatticeConfig(8, 3)
        assert np.any(forcing("qce", lat, toy).values)
        for m in ("atomistic", "continuum", "qnl"):
            assert not np.any(forcing(m, lat, toy).values)


class TestConsistency:
    def test_atomistic_second_order(self, lj):
        errs = []
        for N in (32, 64, 128):
            lat = LatticeConfig(N)
            u = np.sin(math.pi * lat.x)
            Lu = apply(assemble("atomistic", lat, lj), u).values
            errs.append(np.abs(Lu - lj.c_cont * math.pi**2 * u).max())
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        np.testing.assert_allclose(rates, 2.0, atol=0.02)

    @pytest.mark.parametrize("model", ["qce", "qnl"])
    def test_stability_inequality(self, lj, toy, rng, model):
        for c in (lj, toy):
            lat = LatticeConfig(32, 8)
            op = assemble(model, lat, c)
            nu = c.nu(model)
            D = circulant_difference(lat.size, lat.h)
            for _ in range(100):
                v = rng.standard_normal(lat.size)
                dv2 = lat.h * np.sum((D @ v) ** 2)
                assert op.quadratic_form(v) >= nu * dv2 * (1 - 1e-12)

    def test_continuum_quadratic_identity(self, toy, rng):
        lat = LatticeConfig(16)
        op = assemble("continuum", lat, toy)
        for _ in range(10):
            v = rng.standard_normal(lat.size)
            dv = norm_lp(backward_difference(v, lat), 2, lat.h)
            assert op.quadratic_form(v) == pytest.approx(toy.c_cont * dv**2, rel=1e-12)
