"""Spectral-core tests: exact calculus identities and norm oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perihom.errors import GridMismatch, NonZeroMean
from perihom.spectral import (
    GridSpec,
    MatrixField,
    ScalarField,
    apply_D,
    apply_Dstar,
    inner_product,
    inv_laplacian_power,
    pointwise_product,
    random_trig_field,
    sobolev_norm,
    xi_squared,
)

TWO_PI = 2.0 * np.pi


def _sin_mode(grid):
    x = grid.nodes()[0]
    vals = np.sin(TWO_PI * x) * np.ones(grid.shape)
    return ScalarField.from_values(grid, vals)


class TestGridSpec:
    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            GridSpec(4, 16)

    def test_rejects_small_or_odd(self):
        with pytest.raises(ValueError):
            GridSpec(2, 2)
        with pytest.raises(ValueError):
            GridSpec(2, 17)

    def test_refined_grids_allowed(self):
        # torus grids n * m need not be powers of two
        g = GridSpec(2, 6 * 32)
        assert g.points_per_axis == 192


class TestHessian:
    def test_constant_gives_zero(self):
        g = GridSpec(2, 16)
        d = apply_D(ScalarField.constant(g, 3.7))
        for i in range(2):
            for j in range(2):
                assert np.max(np.abs(d.entry(i, j).values)) < 1e-12

    def test_single_mode(self):
        g = GridSpec(2, 32)
        u = _sin_mode(g)
        d = apply_D(u)
        expected = -(TWO_PI**2) * u.values
        assert np.max(np.abs(d.entry(0, 0).values - expected)) < 1e-10
        assert np.max(np.abs(d.entry(0, 1).values)) < 1e-12
        assert np.max(np.abs(d.entry(1, 1).values)) < 1e-12

    def test_double_contraction_is_bilaplacian(self, rng):
        # oracle: the |xi|^4 multiplier applied directly in Fourier space
        g = GridSpec(2, 32)
        u = random_trig_field(g, 7, rng, normalize=True)
        got = apply_Dstar(apply_D(u))
        ref = ScalarField(g, spectrum=xi_squared(g) ** 2 * u.spectrum)
        assert sobolev_norm(got - ref) <= 1e-12 * sobolev_norm(ref)

    def test_symmetry_by_storage(self, rng):
        g = GridSpec(3, 8)
        u = random_trig_field(g, 2, rng)
        d = apply_D(u)
        assert d.entry(0, 2) is d.entry(2, 0)


class TestDstar:
    def test_constant_matrix_gives_zero(self):
        g = GridSpec(2, 16)
        m = MatrixField(
            g, {(i, j): ScalarField.constant(g, 1.0 + i + j) for i in range(2) for j in range(i, 2)}
        )
        assert sobolev_norm(apply_Dstar(m)) < 1e-12

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_adjoint_to_hessian(self, seed):
        g = GridSpec(2, 16)
        r = np.random.default_rng(seed)
        v = random_trig_field(g, 5, r, normalize=True)
        eta = MatrixField(
            g,
            {(i, j): random_trig_field(g, 5, r, normalize=True) for i in range(2) for j in range(i, 2)},
        )
        lhs = inner_product(apply_Dstar(eta), v)
        dv = apply_D(v)
        rhs = sum(
            (1.0 if i == j else 2.0) * inner_product(eta.entry(i, j), dv.entry(i, j))
            for i in range(2)
            for j in range(i, 2)
        )
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


class TestNorms:
    def test_constant_equals_abs(self):
        g = GridSpec(2, 16)
        u = ScalarField.constant(g, -2.5)
        for space in ("L2", "H1", "H2", "H4", "Hminus2"):
            assert sobolev_norm(u, space) == pytest.approx(2.5, abs=1e-13)

    def test_single_mode_values(self):
        # Parseval oracle: coefficients +-i/2 at modes +-1
        g = GridSpec(2, 32)
        u = _sin_mode(g)
        assert sobolev_norm(u, "L2") == pytest.approx(1 / np.sqrt(2), rel=1e-13)
        assert sobolev_norm(u, "H2") == pytest.approx(
            np.sqrt((1 + TWO_PI**4) / 2), rel=1e-13
        )

    def test_duality_cauchy_schwarz(self, rng):
        g = GridSpec(2, 32)
        for _ in range(20):
            u = random_trig_field(g, 6, rng)
            v = random_trig_field(g, 6, rng)
            assert (
                sobolev_norm(u, "H2") * sobolev_norm(v, "Hminus2")
                >= abs(inner_product(u, v)) * (1 - 1e-12)
            )

    def test_plancherel(self, rng):
        g = GridSpec(2, 32)
        u = ScalarField(g, values=rng.standard_normal(g.shape))
        assert sobolev_norm(u, "L2") ** 2 == pytest.approx(
            float(np.sum(np.abs(u.spectrum) ** 2)), rel=1e-12
        )

    def test_roundtrip_identity(self, rng):
        g = GridSpec(3, 8)
        u = ScalarField(g, values=rng.standard_normal(g.shape))
        back = ScalarField(g, spectrum=u.spectrum)
        assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))

    def test_real_field_spectrum_conjugate_symmetric(self, rng):
        g = GridSpec(2, 16)
        c = ScalarField(g, values=rng.standard_normal(g.shape)).spectrum
        n = g.points_per_axis
        flipped = c[tuple(np.meshgrid(*[(n - np.arange(n)) % n] * 2, indexing="ij"))]
        assert np.max(np.abs(flipped - np.conj(c))) < 1e-13


class TestInverseLaplacian:
    def test_eigenfunction(self):
        g = GridSpec(1, 32)
        u = _sin_mode(g)
        got = inv_laplacian_power(u, 1)
        assert np.max(np.abs(got.values + u.values / TWO_PI**2)) < 1e-13

    def test_inverse_of_bilaplacian(self, rng):
        g = GridSpec(2, 32)
        u = random_trig_field(g, 7, rng, mean=0.0, normalize=True)
        z = inv_laplacian_power(u, 2)
        back = apply_Dstar(apply_D(z))
        assert sobolev_norm(back - u) <= 1e-11 * sobolev_norm(u)

    def test_rejects_nonzero_mean(self):
        g = GridSpec(2, 16)
        with pytest.raises(NonZeroMean):
            inv_laplacian_power(ScalarField.constant(g, 1.0), 1)


class TestPointwiseProduct:
    def test_identity_factor(self, rng):
        g = GridSpec(2, 16)
        u = random_trig_field(g, 4, rng)
        p = pointwise_product(u, ScalarField.constant(g, 1.0))
        assert sobolev_norm(p - u) < 1e-13

    def test_cosine_product_identity(self):
        g = GridSpec(1, 16)
        x = g.nodes()[0]
        u = ScalarField.from_values(g, np.cos(TWO_PI * x))
        p = pointwise_product(u, u, dealias=True)
        ref = 0.5 + 0.5 * np.cos(2 * TWO_PI * x)
        assert np.max(np.abs(p.values - ref)) < 1e-14

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_commutes(self, seed):
        g = GridSpec(2, 16)
        r = np.random.default_rng(seed)
        u = random_trig_field(g, 5, r)
        v = random_trig_field(g, 5, r)
        uv = pointwise_product(u, v)
        vu = pointwise_product(v, u)
        assert np.array_equal(uv.values, vu.values)

    def test_grid_mismatch(self, rng):
        u = random_trig_field(GridSpec(2, 16), 3, rng)
        v = random_trig_field(GridSpec(2, 32), 3, rng)
        with pytest.raises(GridMismatch):
            pointwise_product(u, v)

    def test_dealias_removes_aliasing(self, rng):
        # near-Nyquist content: the plain product aliases, the padded one
        # agrees with the product computed on a finer reference grid
        g = GridSpec(1, 16)
        fine = GridSpec(1, 64)
        u = random_trig_field(g, 7, rng, normalize=True)
        v = random_trig_field(g, 7, rng, normalize=True)
        uf = ScalarField(fine, spectrum=_embed_spec(u, fine))
        vf = ScalarField(fine, spectrum=_embed_spec(v, fine))
        ref_fine = pointwise_product(uf, vf, dealias=False)
        # compare retained band of the fine product against the dealiased one
        got = pointwise_product(u, v, dealias=True)
        ref_band = _restrict_spec(ref_fine, g)
        err = np.max(np.abs(got.spectrum - ref_band))
        assert err < 1e-13
        raw = pointwise_product(u, v, dealias=False)
        assert np.max(np.abs(raw.spectrum - ref_band)) > 1e-6


def _embed_spec(u, fine):
    out = np.zeros(fine.shape, dtype=complex)
    n = u.grid.points_per_axis
    half = n // 2
    out[:half] = u.spectrum[:half]
    out[-half + 1:] = u.spectrum[half + 1:]
    return out


def _restrict_spec(u, coarse):
    n = coarse.points_per_axis
    half = n // 2
    out = np.zeros(coarse.shape, dtype=complex)
    out[:half] = u.spectrum[:half]
    out[half + 1:] = u.spectrum[-half + 1:]
    return out
