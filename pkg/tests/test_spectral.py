import math

import numpy as np
import pytest

from tselliptic.operator import apply, assemble
from tselliptic.spectral import (
    InsufficientRootsError,
    eigen_shooting,
    eigen_symmetric_tridiagonal,
    expand,
    lambda1_lower_bound,
    reconstruct,
    shoot,
    spectrum_1d,
    symmetrize,
    tensor_spectrum,
)
from tselliptic.timescale import (
    GridFunction,
    MeshParams,
    ProductGridFunction,
    TimeScale,
    discretize,
    product_delta_inner,
)

from conftest import random_dirichlet, random_grid, random_timescale

DISCRETE = TimeScale.parse("0,1,2,3")
HYBRID = TimeScale.parse("[0,1],2,3")
CONT = TimeScale.parse("[0,3]")


def char_poly_roots(diag, off):
    """Roots of det(S - lambda I) by the tridiagonal determinant
    recurrence; an eigenvalue oracle independent of the symmetric solver."""
    p_prev = np.poly1d([1.0])
    p_cur = np.poly1d([-1.0, diag[0]])
    for k in range(1, len(diag)):
        p_next = np.poly1d([-1.0, diag[k]]) * p_cur - off[k - 1] ** 2 * p_prev
        p_prev, p_cur = p_cur, p_next
    return np.sort(np.roots(p_cur.coeffs).real)


class TestSymmetrize:
    def test_uniform_grid_unchanged(self):
        op = assemble(discretize(CONT, MeshParams(h=0.5)))
        S = symmetrize(op)
        assert np.allclose(S.diag, op.diag, rtol=0, atol=1e-15)
        assert np.allclose(S.off, op.sup[:-1], rtol=0, atol=1e-15)

    def test_unit_grid_matrix(self):
        S = symmetrize(assemble(discretize(DISCRETE)))
        assert np.array_equal(S.diag, [2.0, 2.0])
        assert np.array_equal(S.off, [-1.0])

    def test_single_interior(self):
        S = symmetrize(assemble(discretize(TimeScale.parse("5,7,10"))))
        assert S.diag[0] == pytest.approx(5.0 / 18.0, abs=1e-15)
        assert len(S.off) == 0

    def test_similar_to_operator(self, rng):
        # S = W^{1/2} A W^{-1/2} entrywise on a random nonuniform grid
        for _ in range(20):
            g = random_grid(rng)
            op = assemble(g)
            if op.n < 2:
                continue
            S = symmetrize(op)
            w = np.sqrt(op.weight)
            assert np.allclose(S.off, op.sup[:-1] * w[:-1] / w[1:], rtol=1e-14)
            assert np.allclose(S.off, op.sub[1:] * w[1:] / w[:-1], rtol=1e-14)


class TestEigenSymmetricTridiagonal:
    def test_2x2(self):
        S = symmetrize(assemble(discretize(DISCRETE)))
        w, V = eigen_symmetric_tridiagonal(S)
        assert np.allclose(w, [1.0, 3.0], rtol=0, atol=1e-14)
        assert np.allclose(V.T @ V, np.eye(2), rtol=0, atol=1e-14)

    def test_diagonal(self):
        from tselliptic.spectral import SymmetricTridiagonal

        d = np.array([3.0, 1.0, 2.0])
        S = SymmetricTridiagonal(diag=d, off=np.zeros(2))
        w, _ = eigen_symmetric_tridiagonal(S)
        assert np.array_equal(w, [1.0, 2.0, 3.0])

    def test_against_char_poly_oracle(self):
        # 10 interior points -> a 10x10 symmetric tridiagonal problem
        g = discretize(TimeScale.parse("[0,1]"), MeshParams(counts=(12,)))
        S = symmetrize(assemble(g))
        w, V = eigen_symmetric_tridiagonal(S)
        oracle = char_poly_roots(S.diag, S.off)
        assert np.abs(w - oracle).max() <= 1e-8 * np.abs(oracle).max()
        # residual per pair
        n = len(S.diag)
        M = np.diag(S.diag) + np.diag(S.off, 1) + np.diag(S.off, -1)
        norm_S = np.abs(M).sum(axis=1).max()
        for k in range(n):
            r = M @ V[:, k] - w[k] * V[:, k]
            assert np.linalg.norm(r) <= 1e-10 * norm_S


class TestSpectrum1D:
    def test_discrete_pair(self):
        s = spectrum_1d(discretize(DISCRETE))
        assert s.eigenvalues[0] == 1.0
        assert s.eigenvalues[1] == 3.0
        assert np.allclose(s.phis[0][1:3], [2**-0.5, 2**-0.5], atol=1e-14)
        assert np.allclose(s.phis[1][1:3], [2**-0.5, -(2**-0.5)], atol=1e-14)

    def test_continuous_first_eigenvalue(self):
        g = discretize(CONT, MeshParams(h=1e-3))
        s = spectrum_1d(g, 1)
        assert s.eigenvalues[0] == pytest.approx(math.pi**2 / 9, abs=1e-4)

    def test_hybrid_first_eigenvalue(self):
        g = discretize(HYBRID, MeshParams(h=1e-3))
        s = spectrum_1d(g, 1)
        assert s.eigenvalues[0] == pytest.approx(0.840, abs=1e-3)

    def test_count_equals_interior(self, rng):
        for _ in range(10):
            g = random_grid(rng)
            s = spectrum_1d(g)
            assert s.count == g.n_interior
            assert (np.diff(s.eigenvalues) > 0).all()
            assert (s.eigenvalues > 0).all()

    def test_orthonormal_and_eigen_residual(self, rng):
        for _ in range(20):
            g = random_grid(rng)
            s = spectrum_1d(g)
            op = assemble(g)
            gram = (s.phis[:, :-1] * g.mu) @ s.phis[:, :-1].T
            assert np.abs(gram - np.eye(s.count)).max() <= 1e-10
            for k in range(s.count):
                phi = s.phi(k)
                r = apply(op, phi).values - s.eigenvalues[k] * phi.values
                rn = math.sqrt(float(np.dot(r[:-1] ** 2, g.mu)))
                assert rn <= 1e-8 * (1.0 + s.eigenvalues[k])

    def test_sign_convention(self, rng):
        for _ in range(20):
            s = spectrum_1d(random_grid(rng))
            for row in s.phis:
                interior = row[1:-1]
                nz = interior[np.abs(interior) > 1e-12 * np.abs(interior).max()]
                assert nz[0] > 0

    def test_simplicity_gaps(self, rng):
        for _ in range(20):
            s = spectrum_1d(random_grid(rng))
            if s.count > 1:
                gaps = np.diff(s.eigenvalues)
                assert gaps.min() > 1e-8 * s.eigenvalues.max()


class TestShoot:
    def test_continuous_is_scaled_sine(self):
        for lam in (0.3, 1.0, 2.7):
            expected = math.sin(3 * math.sqrt(lam)) / math.sqrt(lam)
            assert shoot(CONT, lam) == pytest.approx(expected, rel=1e-12)

    def test_hybrid_transcendental_form(self):
        # y(3; lam) is proportional to
        # (lam^2 - 3 lam + 1) sin(sqrt(lam)) + (2 - lam) sqrt(lam) cos(sqrt(lam))
        for lam in (0.5, 0.840415965719, 2.0, 5.0):
            s = math.sqrt(lam)
            expected = ((lam**2 - 3 * lam + 1) * math.sin(s) + (2 - lam) * s * math.cos(s)) / s
            assert shoot(HYBRID, lam) == pytest.approx(expected, rel=1e-12)

    def test_discrete_characteristic_polynomial(self):
        assert shoot(DISCRETE, 1.0) == 0.0
        assert shoot(DISCRETE, 3.0) == 0.0
        # (lam - 1)(lam - 3) elsewhere
        assert shoot(DISCRETE, 2.0) == pytest.approx(-1.0, abs=1e-14)

    def test_small_lambda_branch_continuous(self):
        # the series branch matches the trig branch across the switch
        for lam in (1e-9, 5e-9, 2e-8):
            got = shoot(CONT, lam)
            expected = math.sin(3 * math.sqrt(lam)) / math.sqrt(lam)
            assert got == pytest.approx(expected, rel=1e-10)

    def test_nonpositive_lambda_no_zeros(self):
        for lam in (-4.0, -0.5, 0.0):
            assert shoot(CONT, lam) > 0.0


class TestEigenShooting:
    def test_continuous_classical(self):
        lams = eigen_shooting(CONT, 3)
        expected = np.array([1.0, 4.0, 9.0]) * math.pi**2 / 9
        assert np.abs(lams - expected).max() <= 1e-9

    def test_discrete(self):
        lams = eigen_shooting(DISCRETE, 2)
        assert abs(lams[0] - 1.0) <= 1e-9
        assert abs(lams[1] - 3.0) <= 1e-9

    def test_hybrid_reference_values(self):
        lams = eigen_shooting(HYBRID, 3)
        assert abs(lams[0] - 0.840) <= 1e-3
        assert abs(lams[1] - 2.600) <= 1e-3
        assert abs(lams[2] - 11.907) <= 1e-3

    def test_insufficient_roots(self):
        with pytest.raises(InsufficientRootsError) as err:
            eigen_shooting(DISCRETE, 5)
        assert err.value.found == 2

    def test_matches_matrix_on_discrete(self, rng):
        # purely discrete scales: the grid is the scale, both routes exact
        for _ in range(15):
            ts = random_timescale(rng, discrete_only=True)
            grid = discretize(ts)
            s = spectrum_1d(grid)
            lams = eigen_shooting(ts, s.count)
            scale = np.abs(s.eigenvalues).max()
            assert np.abs(lams - s.eigenvalues).max() <= 1e-10 * scale


class TestMeshConvergence:
    def test_continuous_second_order(self):
        exact = eigen_shooting(CONT, 1)[0]
        gaps = []
        for h in (4e-3, 2e-3):
            g = discretize(CONT, MeshParams(h=h))
            gaps.append(abs(spectrum_1d(g, 1).eigenvalues[0] - exact))
        assert gaps[0] / gaps[1] >= 3.5

    def test_hybrid_first_order_at_junction(self):
        # the delta measure is a left-point quadrature, so a dense-to-
        # scattered junction costs one order: the gap is c*h with
        # c = lambda1 * phi1(junction)^2 / 2 ~= 0.198 for this scale
        exact = eigen_shooting(HYBRID, 1)[0]
        gaps = []
        for h in (4e-3, 2e-3):
            g = discretize(HYBRID, MeshParams(h=h))
            gaps.append(spectrum_1d(g, 1).eigenvalues[0] - exact)
        ratio = gaps[0] / gaps[1]
        assert 1.8 <= ratio <= 2.2
        assert 0.17 <= gaps[1] / 2e-3 <= 0.23

    def test_routes_agree_across_junction_topologies(self):
        # both routes converge to each other under refinement on every
        # segment-boundary type (point-interval, interval-point, mixed)
        for lit in ("0,[1,2],3", "0,1,[2,3]", "[0,0.5],1,[2,3]"):
            ts = TimeScale.parse(lit)
            exact = eigen_shooting(ts, 2)
            gaps = []
            for h in (4e-3, 2e-3):
                g = discretize(ts, MeshParams(h=h))
                gaps.append(np.abs(spectrum_1d(g, 2).eigenvalues - exact))
            assert gaps[1].max() <= 1e-2
            for g0, g1 in zip(gaps[0], gaps[1]):
                if g1 > 1e-9:
                    assert 1.6 <= g0 / g1 <= 2.5, lit


class TestTensorSpectrum:
    def test_example_2d(self):
        s = spectrum_1d(discretize(DISCRETE))
        t = tensor_spectrum([s, s], 4)
        assert np.allclose(t.eigenvalues, [2.0, 4.0, 4.0, 6.0], atol=1e-12)
        assert [idx for idx, _ in t.entries] == [(1, 1), (1, 2), (2, 1), (2, 2)]
        assert t.exhausted

    def test_entry_sums_exact(self):
        s = spectrum_1d(discretize(DISCRETE))
        t = tensor_spectrum([s, s], 4)
        for idx, lam in t.entries:
            assert lam == sum(s.eigenvalues[p - 1] for p in idx)

    def test_three_axes_first(self):
        axes = [
            spectrum_1d(discretize(TimeScale.parse(a)))
            for a in ("0,1,2,3", "5,7,10", "4,6,7")
        ]
        t = tensor_spectrum(axes, 1)
        assert t.entries[0][0] == (1, 1, 1)
        assert t.entries[0][1] == pytest.approx(25.0 / 9.0, abs=1e-14)

    def test_single_axis_passthrough(self):
        s = spectrum_1d(discretize(TimeScale.parse("0,1,2,3,4,5")))
        t = tensor_spectrum([s], s.count)
        assert np.allclose(t.eigenvalues, s.eigenvalues, atol=0)

    def test_overrequest_flagged(self):
        s = spectrum_1d(discretize(DISCRETE))
        t = tensor_spectrum([s, s], 100)
        assert len(t.entries) == 4
        assert t.exhausted

    def test_product_eigenfunctions_orthonormal(self):
        s = spectrum_1d(discretize(DISCRETE))
        t = tensor_spectrum([s, s], 4)
        gram = np.array(
            [
                [
                    product_delta_inner(t.eigenfunction(i), t.eigenfunction(j))
                    for j in range(4)
                ]
                for i in range(4)
            ]
        )
        assert np.abs(gram - np.eye(4)).max() <= 1e-10


class TestExpansion:
    def test_basis_function_coefficients(self):
        s = spectrum_1d(discretize(DISCRETE))
        c = expand(s, s.phi(1))
        assert np.allclose(c, [0.0, 1.0], atol=1e-13)

    def test_roundtrip_random(self, rng):
        for _ in range(30):
            g = random_grid(rng)
            s = spectrum_1d(g)
            f = random_dirichlet(rng, g)
            c = expand(s, f)
            back = reconstruct(s, c)
            scale = 1.0 + np.abs(f.values).max()
            assert np.abs(back.values[1:-1] - f.values[1:-1]).max() <= 1e-9 * scale
            # Parseval for interior-supported functions
            norm_sq = float(np.dot(f.values[:-1] ** 2, g.mu))
            assert abs((c**2).sum() - norm_sq) <= 1e-9 * (1.0 + norm_sq)

    def test_interior_ones_coefficients(self):
        # f = 1 at the interior points of {0,1,2,3}: c = (sqrt(2), 0)
        g = discretize(DISCRETE)
        s = spectrum_1d(g)
        f = GridFunction(g, [0.0, 1.0, 1.0, 0.0])
        c = expand(s, f)
        assert c[0] == pytest.approx(math.sqrt(2.0), abs=1e-14)
        assert abs(c[1]) <= 1e-14
        assert (c**2).sum() == pytest.approx(2.0, abs=1e-13)

    def test_partial_tensor_projection(self, rng):
        # with only K of the modes, expand/reconstruct is the projection
        s = spectrum_1d(discretize(DISCRETE))
        full = tensor_spectrum([s, s], 4)
        part = tensor_spectrum([s, s], 2)
        target = ProductGridFunction(
            (s.grid, s.grid),
            0.7 * full.eigenfunction(0).values - 1.3 * full.eigenfunction(1).values,
        )
        back = reconstruct(part, expand(part, target))
        assert np.abs(back.values - target.values).max() <= 1e-12
        assert not part.exhausted

    def test_tensor_roundtrip(self, rng):
        s = spectrum_1d(discretize(DISCRETE))
        t = tensor_spectrum([s, s], 4)
        vals = np.zeros((4, 4))
        vals[1:-1, 1:-1] = rng.standard_normal((2, 2))
        f = ProductGridFunction((s.grid, s.grid), vals)
        c = expand(t, f)
        back = reconstruct(t, c)
        assert np.abs(back.values - f.values).max() <= 1e-12
        norm_sq = product_delta_inner(f, f)
        assert abs((c**2).sum() - norm_sq) <= 1e-12 * (1.0 + norm_sq)


class TestLowerBound:
    def test_values(self):
        assert lambda1_lower_bound(CONT) == pytest.approx(4.0 / 9.0, abs=1e-15)
        assert lambda1_lower_bound([DISCRETE, DISCRETE]) == pytest.approx(
            8.0 / 9.0, abs=1e-15
        )

    def test_bound_holds(self):
        assert eigen_shooting(CONT, 1)[0] >= 4.0 / 9.0
        assert spectrum_1d(discretize(DISCRETE)).eigenvalues[0] >= 4.0 / 9.0

    def test_bound_on_random_scales(self, rng):
        for _ in range(25):
            ts = random_timescale(rng)
            lam1 = eigen_shooting(ts, 1)[0]
            assert lam1 >= lambda1_lower_bound(ts) * (1 - 1e-12)
