"""Oscillating solves, homogenized resolvents, correctors, approximants."""

import numpy as np
import pytest

from perihom.cell import cell_pipeline
from perihom.coefficients import CoefficientFamily, make_family
from perihom.errors import GridMismatch
from perihom.harness import FMode, build_f
from perihom.resolvents import (
    EpsEmbedding,
    HomogenizedSymbol,
    build_bundle,
    build_u_tilde,
    build_w,
    corrector_K2,
    corrector_K2_adjoint,
    corrector_L,
    corrector_M,
    oscillating_solve,
    residual_F_eps,
    resolvent_hat,
)
from perihom.smoothing import SmoothingSpec, apply_smoothing
from perihom.spectral import (
    GridSpec,
    ScalarField,
    derive,
    inner_product,
    random_trig_field,
    sobolev_norm,
)


@pytest.fixture(scope="module")
def const_setup():
    grid = GridSpec(2, 8)
    a = make_family(CoefficientFamily("constant"), grid)
    cell = cell_pipeline(a, tol=1e-10)
    emb = EpsEmbedding(4, grid)
    sym = HomogenizedSymbol.from_cell(cell, emb.torus_grid)
    f = build_f(
        emb.torus_grid,
        (FMode((1, 0), 1.0, 0.2), FMode((2, 1), 0.5, 1.0)),
        mean=0.3,
    )
    return a, cell, emb, sym, f


@pytest.fixture(scope="module")
def d2_setup(d2_cell):
    a, cell = d2_cell
    emb = EpsEmbedding(4, a.grid)
    sym = HomogenizedSymbol.from_cell(cell, emb.torus_grid)
    f = build_f(
        emb.torus_grid,
        (FMode((1, 0), 1.0, 0.3), FMode((2, 1), 0.7, 1.1), FMode((0, 3), 0.4, 2.0)),
        mean=0.2,
    )
    return a, cell, emb, sym, f


class TestEmbedding:
    def test_grid_refinement(self):
        emb = EpsEmbedding(6, GridSpec(2, 32))
        assert emb.torus_grid.points_per_axis == 192
        assert emb.eps == pytest.approx(1.0 / 6.0)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            EpsEmbedding(1, GridSpec(2, 8))

    def test_lift_samples_rescaled_argument(self, rng):
        # lifted field at torus node x equals the cell field at n x mod 1
        cell_grid = GridSpec(2, 8)
        u = random_trig_field(cell_grid, 3, rng)
        emb = EpsEmbedding(3, cell_grid)
        lifted = emb.lift(u)
        tg = emb.torus_grid
        idx = (5, 17)
        src = tuple(k % cell_grid.points_per_axis for k in idx)
        assert lifted.values[idx] == u.values[src]

    def test_lift_preserves_l2_norm(self, rng):
        cell_grid = GridSpec(2, 8)
        u = random_trig_field(cell_grid, 3, rng)
        emb = EpsEmbedding(5, cell_grid)
        assert sobolev_norm(emb.lift(u)) == pytest.approx(sobolev_norm(u), rel=1e-13)

    def test_lift_requires_cell_grid(self, rng):
        emb = EpsEmbedding(4, GridSpec(2, 8))
        u = random_trig_field(GridSpec(2, 16), 3, rng)
        with pytest.raises(GridMismatch):
            emb.lift(u)


class TestOscillatingSolve:
    def test_constant_matches_multiplier(self, const_setup):
        a, cell, emb, sym, f = const_setup
        u, info = oscillating_solve(a, emb, f, tol=1e-12)
        ref = resolvent_hat(sym, f, emb.eps, with_b=False)
        assert sobolev_norm(u - ref) <= 1e-10 * sobolev_norm(ref)
        assert info.iterations <= 5

    def test_discrete_self_adjointness(self, d2_setup, rng):
        a, cell, emb, sym, f = d2_setup
        from perihom.operators import DivDivForm

        form = DivDivForm(emb.lift_tensor(a), dealias=True)
        tg = emb.torus_grid
        for _ in range(5):
            u = random_trig_field(tg, 5, rng, normalize=True)
            v = random_trig_field(tg, 5, rng, normalize=True)
            au = ScalarField(tg, spectrum=form.apply_spectrum(u.spectrum, add_identity=True))
            av = ScalarField(tg, spectrum=form.apply_spectrum(v.spectrum, add_identity=True))
            s1 = inner_product(au, v)
            s2 = inner_product(u, av)
            assert abs(s1 - s2) <= 1e-11 * abs(s1)

    def test_weak_residual_below_tolerance(self, d2_setup):
        a, cell, emb, sym, f = d2_setup
        u, info = oscillating_solve(a, emb, f, tol=1e-10)
        from perihom.operators import DivDivForm

        form = DivDivForm(emb.lift_tensor(a), dealias=True)
        res = form.apply_spectrum(u.spectrum, add_identity=True) - f.spectrum
        res_norm = sobolev_norm(ScalarField(emb.torus_grid, spectrum=res), "Hminus2")
        assert res_norm <= 1e-8 * sobolev_norm(f)

    def test_energy_estimate(self, d2_setup):
        a, cell, emb, sym, f = d2_setup
        u, _ = oscillating_solve(a, emb, f)
        lam = cell.lam
        assert sobolev_norm(u, "H2") <= (2.0 / lam) * sobolev_norm(f)


class TestHomogenizedResolvent:
    def test_constant_field_passthrough(self, d2_setup):
        _, _, emb, sym, _ = d2_setup
        c = ScalarField.constant(emb.torus_grid, 1.7)
        out = resolvent_hat(sym, c, emb.eps)
        assert np.max(np.abs(out.values - 1.7)) < 1e-12

    def test_single_mode_formula(self, d2_setup):
        # direct check of the multiplier on one cosine mode
        _, cell, emb, sym, _ = d2_setup
        tg = emb.torus_grid
        k = (2, 1)
        f = build_f(tg, (FMode(k, 1.0, 0.0),))
        out = resolvent_hat(sym, f, emb.eps, with_b=True)
        n = tg.points_per_axis
        kpos = tuple(kj % n for kj in k)
        lam = sym.lam[kpos]
        lam0 = sym.lam0[kpos]
        expected = 0.5 / (1.0 + lam - 1j * emb.eps * lam0)
        assert out.spectrum[kpos] == pytest.approx(expected, rel=1e-13)

    def test_denominator_safety(self, d2_setup):
        _, _, emb, sym, _ = d2_setup
        den = sym.denominator(emb.eps, with_b=True)
        assert np.min(np.abs(den)) >= 1.0

    def test_h4_estimate_uniform_in_eps(self, d2_setup, rng):
        _, _, emb, sym, _ = d2_setup
        c_bound = max(1.0, 1.0 / sym.eig_lo)
        for eps in (0.25, 0.05, 0.01):
            f = random_trig_field(emb.torus_grid, 6, rng, normalize=True)
            out = resolvent_hat(sym, f, eps)
            assert sobolev_norm(out, "H4") <= c_bound * (1 + 1e-9)

    def test_quartic_form_lower_bound(self, d2_setup):
        _, _, emb, sym, _ = d2_setup
        from perihom.spectral import xi_squared

        x4 = xi_squared(emb.torus_grid) ** 2
        assert np.all(sym.lam >= sym.eig_lo * x4 * (1 - 1e-12))


class TestCorrectors:
    def test_constant_correctors_vanish(self, const_setup):
        a, cell, emb, sym, f = const_setup
        assert sobolev_norm(corrector_K2(cell, sym, emb, f)) < 1e-13
        assert sobolev_norm(corrector_K2_adjoint(cell, sym, emb, f)) < 1e-13
        assert sobolev_norm(corrector_L(sym, emb.eps, f)) < 1e-16

    def test_constant_m_closed_form(self, const_setup):
        # for the identity tensor: multiplier (1/8) |xi|^2 / (1 + |xi|^4)
        a, cell, emb, sym, f = const_setup
        from perihom.spectral import xi_squared

        tg = emb.torus_grid
        x2 = xi_squared(tg)
        ref = ScalarField(tg, spectrum=f.spectrum * (x2 / 8.0) / (1.0 + x2**2))
        got = corrector_M(sym, emb.eps, f)
        assert sobolev_norm(got - ref) <= 1e-13 * max(sobolev_norm(ref), 1e-300)

    def test_zero_frequency_annihilated(self, d2_setup):
        _, cell, emb, sym, _ = d2_setup
        c = ScalarField.constant(emb.torus_grid, 2.0)
        assert sobolev_norm(corrector_M(sym, emb.eps, c)) < 1e-14
        assert sobolev_norm(corrector_L(sym, emb.eps, c)) < 1e-14

    def test_adjoint_identity(self, d2_setup, rng):
        _, cell, emb, sym, _ = d2_setup
        tg = emb.torus_grid
        for _ in range(5):
            f = random_trig_field(tg, 4, rng, normalize=True)
            g = random_trig_field(tg, 4, rng, normalize=True)
            lhs = inner_product(corrector_K2(cell, sym, emb, f), g)
            rhs = inner_product(f, corrector_K2_adjoint(cell, sym, emb, g))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-300)

    def test_corrector_bounded_uniformly_in_eps(self, d2_cell, rng):
        a, cell = d2_cell
        worst = 0.0
        for n in (4, 8):
            emb = EpsEmbedding(n, a.grid)
            tg = emb.torus_grid
            sym = HomogenizedSymbol.from_cell(cell, tg)
            for _ in range(5):
                f = random_trig_field(tg, 6, rng, normalize=True)
                worst = max(worst, sobolev_norm(corrector_K2(cell, sym, emb, f)))
        assert worst <= 100.0

    def test_sixth_order_composition(self, d2_setup, rng):
        # multiplier vs explicit composition: resolvent, six derivatives
        # contracted with c, resolvent
        _, cell, emb, sym, _ = d2_setup
        tg = emb.torus_grid
        f = random_trig_field(tg, 4, rng, normalize=True)
        got = corrector_L(sym, emb.eps, f)
        inner = resolvent_hat(sym, f, emb.eps, with_b=True)
        d = tg.dim
        acc = np.zeros(tg.shape, dtype=complex)
        for idx in np.ndindex(*(d,) * 6):
            cval = cell.c[idx]
            if cval == 0.0:
                continue
            orders = [0] * d
            for ax in idx:
                orders[ax] += 1
            acc += cval * derive(inner, orders).spectrum
        composed = resolvent_hat(sym, ScalarField(tg, spectrum=acc), emb.eps, with_b=True)
        assert sobolev_norm(got - composed) <= 1e-12 * max(sobolev_norm(got), 1e-300)


class TestApproximants:
    def test_constant_u_tilde_is_smoothed_resolvent(self, const_setup):
        a, cell, emb, sym, f = const_setup
        u_he = resolvent_hat(sym, f, emb.eps, with_b=True)
        ut = build_u_tilde(cell, emb, u_he)
        ref = apply_smoothing(u_he, SmoothingSpec(3, emb.eps))
        assert sobolev_norm(ut - ref) < 1e-13

    def test_constant_w_reproduces_oscillating_solution(self, const_setup):
        # degenerate case: every corrector vanishes and the homogenized
        # solution solves the oscillating equation exactly, so w must too
        a, cell, emb, sym, f = const_setup
        w = build_w(cell, sym, emb, f)
        u, _ = oscillating_solve(a, emb, f, tol=1e-13)
        assert sobolev_norm(u - w) <= 1e-10 * sobolev_norm(f)

    def test_u_tilde_h2_bounded_uniformly_in_eps(self, d2_cell, rng):
        a, cell = d2_cell
        for n in (4, 8):
            emb = EpsEmbedding(n, a.grid)
            tg = emb.torus_grid
            sym = HomogenizedSymbol.from_cell(cell, tg)
            for _ in range(3):
                f = random_trig_field(tg, 5, rng, normalize=True)
                u_he = resolvent_hat(sym, f, emb.eps, with_b=True)
                ut = build_u_tilde(cell, emb, u_he)
                assert sobolev_norm(ut, "H2") <= 100.0

    def test_constant_residual_is_smoothing_defect(self, const_setup):
        # F = Theta f - f, and its dual norm is O(eps^2 |f|)
        a, cell, emb, sym, f = const_setup
        u_he = resolvent_hat(sym, f, emb.eps, with_b=True)
        ut = build_u_tilde(cell, emb, u_he)
        F, norm = residual_F_eps(a, emb, ut, f)
        ref = apply_smoothing(f, SmoothingSpec(3, emb.eps)) - f
        assert sobolev_norm(F - ref) <= 1e-11 * max(sobolev_norm(ref), 1e-300)
        assert norm <= 10.0 * emb.eps**2 * sobolev_norm(f)

    def test_corrector_fields_mean_zero(self, d2_setup):
        # the residual diagnostic is only meaningful because the pipeline
        # normalizes the cell correctors to zero cell average
        _, cell, emb, sym, _ = d2_setup
        for i in range(2):
            for j in range(2):
                assert abs(cell.n2[i, j].mean()) < 1e-12
                for k in range(2):
                    assert abs(cell.n3[i, j, k].mean()) < 1e-12

    def test_w_and_u_tilde_agree_to_second_order(self, d1_cell):
        # both approximate the oscillating solution to at least eps^2 in L2
        a, cell = d1_cell
        dists = []
        for n in (4, 8, 16):
            emb = EpsEmbedding(n, a.grid)
            f = build_f(emb.torus_grid, (FMode((1,), 1.0, 0.3),), mean=0.2)
            bundle = build_bundle(a, cell, emb, f)
            dists.append((emb.eps, sobolev_norm(bundle.w - bundle.u_tilde)))
        for eps, dist in dists:
            assert dist <= 10.0 * eps**2 * sobolev_norm(f)

    def test_linearity_exact(self, d2_setup):
        a, cell, emb, sym, f = d2_setup
        b1 = build_bundle(a, cell, emb, f)
        f3 = f * 3.0
        b3 = build_bundle(a, cell, emb, f3)
        for name in ("u_hat", "u_hat_eps", "u_tilde", "w"):
            x1 = getattr(b1, name)
            x3 = getattr(b3, name)
            assert sobolev_norm(x3 - x1 * 3.0) <= 1e-13 * max(sobolev_norm(x3), 1e-300)


@pytest.fixture(scope="module")
def sweep(d1_cell):
    a, cell = d1_cell
    rows = []
    for n in (4, 8, 16, 32):
        emb = EpsEmbedding(n, a.grid)
        f = build_f(
            emb.torus_grid,
            (FMode((1,), 1.0, 0.3), FMode((3,), 0.6, 1.2)),
            mean=0.3,
        )
        bundle = build_bundle(a, cell, emb, f)
        rows.append((emb.eps, bundle.errors()))
    return rows


class TestRates1d:
    """Cheap end-to-end rate check; the acceptance suite runs the d=2 one."""

    def _slope(self, rows, key):
        eps = np.array([r[0] for r in rows])
        err = np.array([r[1][key] for r in rows])
        return np.polyfit(np.log(eps), np.log(err), 1)[0]

    def test_zeroth_order_rate(self, sweep):
        assert self._slope(sweep, "err_l2_u_hat") >= 1.8

    def test_energy_rate(self, sweep):
        assert self._slope(sweep, "err_h2_u_tilde") >= 1.6

    def test_improved_rate(self, sweep):
        assert self._slope(sweep, "err_l2_w") >= 2.6

    def test_residual_rate(self, sweep):
        assert self._slope(sweep, "res_hminus2") >= 1.6

    def test_strong_convergence_monotone(self, sweep):
        errs = [r[1]["err_l2_u_hat"] for r in sweep]
        for prev, nxt in zip(errs, errs[1:]):
            assert nxt <= 1.2 * prev

    def test_improved_never_worse(self, sweep):
        for _, e in sweep:
            assert e["err_l2_w"] <= e["err_l2_u_hat"]


class TestBundleIO:
    def test_save_roundtrip_manifest(self, const_setup, tmp_path):
        a, cell, emb, sym, f = const_setup
        bundle = build_bundle(a, cell, emb, f)
        path = tmp_path / "bundle.json"
        bundle.save(path)
        import json

        doc = json.loads(path.read_text())
        assert doc["eps"] == pytest.approx(emb.eps)
        assert set(doc["norms"]) == {
            "err_l2_u_hat",
            "err_h2_u_tilde",
            "err_l2_w",
            "res_hminus2",
        }
        raw = np.frombuffer((tmp_path / "bundle.bin").read_bytes(), dtype="<f8")
        rec = next(r for r in doc["field_index"] if r["name"] == "u_eps")
        vals = raw[rec["offset"]: rec["offset"] + int(np.prod(rec["shape"]))]
        assert np.array_equal(vals.reshape(rec["shape"]), bundle.u_eps.values)

    def test_selective_approximants(self, const_setup):
        a, cell, emb, sym, f = const_setup
        bundle = build_bundle(a, cell, emb, f, approximants=("u_hat",))
        assert bundle.u_tilde is None and bundle.w is None
        assert set(bundle.errors()) == {"err_l2_u_hat"}
