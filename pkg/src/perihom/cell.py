"""Cell problems on the periodicity cell and everything built from them.

Two families of corrector problems are solved on the unit cell by
preconditioned conjugate gradients with exact spectral differentiation:

* first family: mean-zero periodic n2[i][j] with
      div div ( a (grad^2 n2 + e_ij) ) = 0,
  where e_ij is the constant matrix with a single unit entry;
* second family: mean-zero periodic n3[i][j][k] with
      div div ( a grad^2 n3 + 2 a (grad n2 x e_k) + 2 sum_m d_m G2[i,j,k,m] ) = 0.

From these come the effective constant tensor ``a_hat`` (cell average of the
corrected flux), the mean-zero solenoidal flux remainders g2/g3, their
skew-symmetric matrix potentials (an explicit inverse-bilaplacian formula),
the constant drift matrices ``b`` entering the fifth-order term of the
homogenized symbol, and the sixth-order coupling coefficients ``c`` used by
the resolvent corrector of the same name.

A ``CellData`` bundle freezes all of it and serializes to a JSON manifest
plus a little-endian float64 sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .cg import CGInfo, pcg
from .coefficients import Tensor4, Tensor4Field, validate
from .errors import (
    NonZeroMean,
    NotSolenoidal,
    PropertyViolation,
    SolenoidalityViolation,
)
from .operators import DivDivForm, inv_biharmonic_preconditioner, _upper_pairs
from .spectral import (
    GridSpec,
    MatrixField,
    ScalarField,
    apply_Dstar,
    fftn,
    ifftn,
    inner_product,
    sobolev_norm,
    xi_axes,
    xi_squared,
)


@dataclass(eq=False)
class CellData:
    """Solved cell bundle; all object arrays alias their symmetric entries."""

    grid: GridSpec
    lam: float
    lam_hat: float
    n2: np.ndarray          # (d, d) of ScalarField, symmetric in (i, j)
    n3: np.ndarray          # (d, d, d) of ScalarField, symmetric in (i, j)
    a_hat: Tensor4
    g2: np.ndarray          # (d, d) of MatrixField
    G2: np.ndarray          # (d, d, d, d): member (k, m) of the (i, j) family
    g3: np.ndarray          # (d, d, d) of MatrixField
    G3: np.ndarray          # (d, d, d, d, d): member (s, t) of the (i, j, k) family
    b: np.ndarray           # (d, d, d, d, d): constant matrix b[i, j, k][p, q]
    c: np.ndarray           # (d,) * 6 coupling coefficients
    solver_report: dict = dc_field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def save(self, path) -> None:
        save_cell_data(self, path)

    @classmethod
    def load(cls, path) -> "CellData":
        return load_cell_data(path)


def _mean_scale(a: Tensor4Field) -> float:
    return float(np.max(np.abs(a.comps)))


def _solve_cell(
    form: DivDivForm,
    rhs_values: np.ndarray,
    tol: float,
    x0: np.ndarray | None = None,
) -> tuple[ScalarField, CGInfo]:
    grid = form.grid
    precond = inv_biharmonic_preconditioner(grid, shifted=False)
    x, info = pcg(
        lambda v: form.apply_values(v),
        rhs_values,
        precond,
        tol=tol,
        max_iter=10000,
        x0=x0,
    )
    # project out the (null) mean the operator cannot see
    x = x - x.mean()
    return ScalarField(grid, values=x), info


def _e_sym_entries(dim: int, i: int, j: int) -> dict:
    """Entries (s<=t) of the symmetrized unit matrix (e_ij + e_ji) / 2."""
    out = {}
    for s, t in _upper_pairs(dim):
        v = 0.0
        if (s, t) == (min(i, j), max(i, j)):
            v = 1.0 if i == j else 0.5
        out[(s, t)] = v
    return out


def _n2_rhs(form: DivDivForm, i: int, j: int) -> np.ndarray:
    """- div div (a e_ij) as nodal values."""
    a = form.apply_a.a
    grid = form.grid
    eta = {}
    for s, t in form.pairs:
        c = fftn(0.25 * (
            a.comps[s, t, i, j] + a.comps[t, s, i, j]
            + a.comps[s, t, j, i] + a.comps[t, s, j, i]
        )) / grid.size
        eta[(s, t)] = c
    rhs_spec = -form.dstar_spectrum(eta)
    return ifftn(rhs_spec).real * grid.size


def solve_n2(
    a: Tensor4Field,
    i: int,
    j: int,
    tol: float = 1e-10,
    dealias: bool = True,
    x0: np.ndarray | None = None,
) -> ScalarField:
    """First-family corrector for the (i, j) unit Hessian direction."""
    form = DivDivForm(a, dealias=dealias)
    n, _ = _solve_cell(form, _n2_rhs(form, i, j), tol, x0=x0)
    return n


def _corrected_flux_spectra(form: DivDivForm, n2_ij: ScalarField, i: int, j: int) -> dict:
    """Spectra of a (grad^2 n2 + e_ij), entry (s<=t)."""
    eta = form.hessian_spectra(n2_ij.spectrum)
    e = _e_sym_entries(form.dim, i, j)
    zero = (0,) * form.grid.dim
    eta2 = {}
    for key, spec in eta.items():
        spec = spec.copy()
        spec[zero] += e[key]
        eta2[key] = spec
    return form.apply_a.entry_spectra(eta2)


def hom_tensor(a: Tensor4Field, n2: np.ndarray, dealias: bool = True) -> Tensor4:
    """Effective tensor: a_hat e_ij = cell average of a (grad^2 n2_ij + e_ij)."""
    d = a.dim
    form = DivDivForm(a, dealias=dealias)
    zero = (0,) * a.grid.dim
    comps = np.empty((d, d, d, d))
    for i in range(d):
        for j in range(i, d):
            flux = _corrected_flux_spectra(form, n2[i][j], i, j)
            for s in range(d):
                for t in range(d):
                    key = (min(s, t), max(s, t))
                    comps[s, t, i, j] = flux[key][zero].real
                    comps[s, t, j, i] = comps[s, t, i, j]
    return Tensor4.from_components(comps, check=True, tol=1e-6)


def flux_g2(
    a: Tensor4Field,
    n2_ij: ScalarField,
    a_hat: Tensor4,
    i: int,
    j: int,
    dealias: bool = True,
) -> MatrixField:
    """Mean-zero solenoidal flux remainder a (grad^2 n2 + e_ij) - a_hat e_ij."""
    form = DivDivForm(a, dealias=dealias)
    flux = _corrected_flux_spectra(form, n2_ij, i, j)
    zero = (0,) * a.grid.dim
    entries = {}
    for key, spec in flux.items():
        s, t = key
        spec = spec.copy()
        spec[zero] -= 0.5 * (a_hat.comps[s, t, i, j] + a_hat.comps[s, t, j, i])
        entries[key] = ScalarField(a.grid, spectrum=spec)
    g = MatrixField(a.grid, entries)
    _check_flux(g, form, scale=_mean_scale(a), what=f"g2[{i}][{j}]")
    return g


def _check_flux(g: MatrixField, form: DivDivForm, scale: float, what: str) -> None:
    # thresholds carry an absolute floor in units of |a| so that fluxes that
    # vanish identically (constant coefficients, 1-d) pass at roundoff
    gnorm = g.l2_norm()
    zero = (0,) * g.grid.dim
    worst_mean = max(abs(e.spectrum[zero].real) for _, _, e in g.entries_upper())
    if worst_mean > 1e-8 * scale:
        raise SolenoidalityViolation(
            f"{what}: cell average {worst_mean:.3e} exceeds 1e-8 * |a|; "
            "cell solve has not converged"
        )
    res = sobolev_norm(apply_Dstar(g), "Hminus2")
    if res > 1e-6 * gnorm + 1e-10 * scale:
        raise SolenoidalityViolation(
            f"{what}: divergence residual {res:.3e} exceeds 1e-6 * |g| = {1e-6 * gnorm:.3e}"
        )


def potential_from_solenoidal(g: MatrixField, check: bool = True) -> np.ndarray:
    """Skew-symmetric matrix potentials of a mean-zero solenoidal matrix.

    Returns the (d, d) object array of matrix fields G[s][t] with

        G[s][t]_{km} = lap^{-2} ( D_km g_st - D_st g_km ),

    so that (i) each member is symmetric in its entries, (ii) the family is
    exactly skew under swapping (s,t) with (k,m), (iii) members are H^2
    bounded by the L2 norm of g, and (iv) div div G[s][t] reproduces g_st.
    Mirrored members are stored as exact negations, so (ii) holds bitwise.
    """
    grid = g.grid
    d = grid.dim
    xi = xi_axes(grid)
    x4 = xi_squared(grid) ** 2
    invlap2 = np.zeros(grid.shape)
    nz = x4 > 0
    invlap2[nz] = 1.0 / x4[nz]
    zero = (0,) * d

    gnorm = g.l2_norm()
    if check and gnorm > 0:
        for s, t, e in g.entries_upper():
            m = abs(e.spectrum[zero].real)
            if m > 1e-10 * gnorm:
                raise NonZeroMean(
                    f"g[{s}][{t}] has cell average {m:.3e} > 1e-10 * |g|"
                )
        res = sobolev_norm(apply_Dstar(g), "Hminus2")
        if res > 1e-6 * gnorm:
            raise NotSolenoidal(
                f"divergence residual {res:.3e} exceeds 1e-6 * |g| = {1e-6 * gnorm:.3e}"
            )

    pairs = _upper_pairs(d)
    pair_pos = {p: q for q, p in enumerate(pairs)}

    def dmult(p: tuple[int, int]) -> np.ndarray:
        return -(xi[p[0]] * xi[p[1]])

    # independent components: unordered pair of unordered pairs
    spectra: dict = {}
    for P in pairs:
        for Q in pairs:
            if pair_pos[Q] < pair_pos[P]:
                continue
            gP = g.entry(*P).spectrum
            gQ = g.entry(*Q).spectrum
            spectra[(P, Q)] = invlap2 * (dmult(Q) * gP - dmult(P) * gQ)

    fam = np.empty((d, d), dtype=object)
    for P in pairs:
        entries = {}
        for Q in pairs:
            if pair_pos[Q] >= pair_pos[P]:
                spec = spectra[(P, Q)]
            else:
                spec = -spectra[(Q, P)]
            entries[Q] = ScalarField(grid, spectrum=spec)
        member = MatrixField(grid, entries)
        fam[P[0], P[1]] = member
        fam[P[1], P[0]] = member
    return fam


def verify_potential_family(g: MatrixField, fam: np.ndarray, rtol: float = 1e-10) -> float:
    """Check div div G[s][t] == g_st; returns the worst relative error.

    Raises ``PropertyViolation('potential-divergence-identity', ...)`` when
    the reconstruction misses by more than ``rtol`` times the norm of g.
    """
    gnorm = max(g.l2_norm(), 1e-300)
    worst = 0.0
    for s in range(g.dim):
        for t in range(s, g.dim):
            err = sobolev_norm(apply_Dstar(fam[s, t]) - g.entry(s, t), "L2")
            worst = max(worst, err / gnorm)
    if worst > rtol:
        raise PropertyViolation(
            "potential-divergence-identity",
            f"worst relative reconstruction error {worst:.3e} > {rtol:.1e}",
        )
    return worst


def _dyad_sym_spectra(form: DivDivForm, n2_ij: ScalarField, k: int) -> dict:
    """Entries (p<=q) of the symmetrized dyad grad n2 x e_k."""
    grid = form.grid
    xi = xi_axes(grid)
    c = n2_ij.spectrum
    out = {}
    for p, q in form.pairs:
        spec = np.zeros(grid.shape, dtype=complex)
        if q == k:
            spec = spec + 0.5 * (1j * xi[p]) * c
        if p == k:
            spec = spec + 0.5 * (1j * xi[q]) * c
        out[(p, q)] = spec
    return out


def _div_potential_spectra(G2_fam: np.ndarray, k: int, grid: GridSpec) -> dict:
    """Entries (s<=t) of sum_m d_m G[k][m] for one potential family."""
    xi = xi_axes(grid)
    d = grid.dim
    out = {}
    for s, t in _upper_pairs(d):
        acc = np.zeros(grid.shape, dtype=complex)
        for m in range(d):
            acc += (1j * xi[m]) * G2_fam[k, m].entry(s, t).spectrum
        out[(s, t)] = acc
    return out


def _n3_source_spectra(
    form: DivDivForm,
    n2_ij: ScalarField,
    G2_fam: np.ndarray,
    k: int,
) -> tuple[dict, dict]:
    """(a-weighted dyad part, potential part) of the second-family source."""
    dyad = _dyad_sym_spectra(form, n2_ij, k)
    part1 = form.apply_a.entry_spectra({key: 2.0 * v for key, v in dyad.items()})
    part2 = {key: 2.0 * v for key, v in _div_potential_spectra(G2_fam, k, form.grid).items()}
    return part1, part2


def solve_n3(
    a: Tensor4Field,
    n2_ij: ScalarField,
    G2_fam: np.ndarray,
    i: int,
    j: int,
    k: int,
    tol: float = 1e-10,
    dealias: bool = True,
    x0: np.ndarray | None = None,
) -> ScalarField:
    """Second-family corrector for the (i, j, k) third-derivative direction."""
    form = DivDivForm(a, dealias=dealias)
    part1, part2 = _n3_source_spectra(form, n2_ij, G2_fam, k)
    src = {key: part1[key] + part2[key] for key in part1}
    rhs_spec = -form.dstar_spectrum(src)
    rhs = ifftn(rhs_spec).real * a.grid.size
    n, _ = _solve_cell(form, rhs, tol, x0=x0)
    return n


def _g3_core_spectra(form: DivDivForm, n3_ijk: ScalarField, n2_ij: ScalarField, k: int) -> dict:
    """Spectra of a (grad^2 n3 + 2 grad n2 x e_k), entries (s<=t)."""
    eta = form.hessian_spectra(n3_ijk.spectrum)
    dyad = _dyad_sym_spectra(form, n2_ij, k)
    merged = {key: eta[key] + 2.0 * dyad[key] for key in eta}
    return form.apply_a.entry_spectra(merged)


def b_tensor(
    a: Tensor4Field,
    n2: np.ndarray,
    n3: np.ndarray,
    dealias: bool = True,
) -> np.ndarray:
    """Constant drift matrices b[i, j, k] = <a (grad^2 n3 + 2 grad n2 x e_k)>."""
    d = a.dim
    form = DivDivForm(a, dealias=dealias)
    zero = (0,) * a.grid.dim
    b = np.zeros((d, d, d, d, d))
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                core = _g3_core_spectra(form, n3[i][j][k], n2[i][j], k)
                for p in range(d):
                    for q in range(d):
                        key = (min(p, q), max(p, q))
                        b[i, j, k, p, q] = core[key][zero].real
                b[j, i, k] = b[i, j, k]
    return b


def flux_g3(
    a: Tensor4Field,
    n2_ij: ScalarField,
    n3_ijk: ScalarField,
    G2_fam: np.ndarray,
    b_ijk: np.ndarray,
    i: int,
    j: int,
    k: int,
    dealias: bool = True,
) -> MatrixField:
    """Second-family flux remainder; mean zero and solenoidal by construction."""
    form = DivDivForm(a, dealias=dealias)
    core = _g3_core_spectra(form, n3_ijk, n2_ij, k)
    pot = _div_potential_spectra(G2_fam, k, a.grid)
    zero = (0,) * a.grid.dim
    entries = {}
    for key in core:
        s, t = key
        spec = core[key] + 2.0 * pot[key]
        spec = spec.copy()
        spec[zero] -= 0.5 * (b_ijk[s, t] + b_ijk[t, s])
        entries[key] = ScalarField(a.grid, spectrum=spec)
    g = MatrixField(a.grid, entries)
    _check_flux(g, form, scale=_mean_scale(a), what=f"g3[{i}][{j}][{k}]")
    return g


def c_coeffs(n2: np.ndarray, n3: np.ndarray, g2: np.ndarray, g3: np.ndarray) -> np.ndarray:
    """Sixth-order coupling coefficients from cell averages.

    c[i,j,k,p,m,n] = 2 <g3[i,j,k]_{pq} d_q n2[m,n]> - 2 <d_q n3[i,j,k] g2[m,n]_{qp}>
                     - <n2[i,j] g2[m,n]_{kp}> - <g2[i,j]_{kp} n2[m,n]>,

    with every cell average evaluated spectrally (exact for the stored
    trigonometric interpolants).
    """
    some = n2[0][0]
    grid = some.grid
    d = grid.dim
    xi = xi_axes(grid)

    def dq(u: ScalarField, q: int) -> ScalarField:
        return ScalarField(grid, spectrum=1j * xi[q] * u.spectrum)

    dn2 = np.empty((d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for q in range(d):
                dn2[i, j, q] = dq(n2[i][j], q)
                dn2[j, i, q] = dn2[i, j, q]
    dn3 = np.empty((d, d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                for q in range(d):
                    dn3[i, j, k, q] = dq(n3[i][j][k], q)
                    dn3[j, i, k, q] = dn3[i, j, k, q]

    c = np.zeros((d,) * 6)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for p in range(d):
                    for m in range(d):
                        for n in range(d):
                            v = 0.0
                            for q in range(d):
                                v += 2.0 * inner_product(
                                    g3[i][j][k].entry(p, q), dn2[m, n, q]
                                )
                                v -= 2.0 * inner_product(
                                    dn3[i, j, k, q], g2[m][n].entry(q, p)
                                )
                            v -= inner_product(n2[i][j], g2[m][n].entry(k, p))
                            v -= inner_product(g2[i][j].entry(k, p), n2[m][n])
                            c[i, j, k, p, m, n] = v
    return c


def cell_pipeline(a: Tensor4Field, tol: float = 1e-10, dealias: bool = True) -> CellData:
    """Solve both corrector families and assemble every derived quantity.

    Deterministic: zero initial CG guesses and a fixed dependency order, so
    repeated runs reproduce every tensor bitwise.
    """
    lam = validate(a)
    d = a.dim
    grid = a.grid
    form = DivDivForm(a, dealias=dealias)
    report: dict = {"tol": tol, "n2": [], "n3": []}

    n2 = np.empty((d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            sol, info = _solve_cell(form, _n2_rhs(form, i, j), tol)
            n2[i, j] = sol
            n2[j, i] = sol
            report["n2"].append(
                {"indices": [i, j], "iterations": info.iterations, "residual": info.residual}
            )

    a_hat = hom_tensor(a, n2, dealias=dealias)
    lam_hat = validate(Tensor4Field.from_constant(grid, a_hat), tol=1e-6)

    g2 = np.empty((d, d), dtype=object)
    G2 = np.empty((d, d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            g = flux_g2(a, n2[i, j], a_hat, i, j, dealias=dealias)
            g2[i, j] = g
            g2[j, i] = g
            fam = potential_from_solenoidal(g, check=False)
            G2[i, j] = fam
            G2[j, i] = fam

    n3 = np.empty((d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                part1, part2 = _n3_source_spectra(form, n2[i, j], G2[i, j], k)
                src = {key: part1[key] + part2[key] for key in part1}
                rhs = ifftn(-form.dstar_spectrum(src)).real * grid.size
                sol, info = _solve_cell(form, rhs, tol)
                n3[i, j, k] = sol
                n3[j, i, k] = sol
                report["n3"].append(
                    {
                        "indices": [i, j, k],
                        "iterations": info.iterations,
                        "residual": info.residual,
                    }
                )

    b = b_tensor(a, n2, n3, dealias=dealias)

    g3 = np.empty((d, d, d), dtype=object)
    G3 = np.empty((d, d, d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                g = flux_g3(a, n2[i, j], n3[i, j, k], G2[i, j], b[i, j, k], i, j, k, dealias=dealias)
                g3[i, j, k] = g
                g3[j, i, k] = g
                fam = potential_from_solenoidal(g, check=False)
                G3[i, j, k] = fam
                G3[j, i, k] = fam

    c = c_coeffs(n2, n3, g2, g3)

    return CellData(
        grid=grid,
        lam=lam,
        lam_hat=lam_hat,
        n2=n2,
        n3=n3,
        a_hat=a_hat,
        g2=g2,
        G2=G2,
        g3=g3,
        G3=G3,
        b=b,
        c=c,
        solver_report=report,
    )


# ---------------------------------------------------------------------------
# Serialization: JSON manifest + row-major little-endian float64 sidecar
# ---------------------------------------------------------------------------

def _collect_fields(cell: CellData) -> list[tuple[str, np.ndarray]]:
    d = cell.dim
    out = []
    for i in range(d):
        for j in range(i, d):
            out.append((f"n2/{i}{j}", cell.n2[i, j].values))
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                out.append((f"n3/{i}{j}{k}", cell.n3[i, j, k].values))
    for i in range(d):
        for j in range(i, d):
            for s, t, e in cell.g2[i, j].entries_upper():
                out.append((f"g2/{i}{j}/{s}{t}", e.values))
            for k in range(d):
                for m in range(d):
                    for s, t, e in cell.G2[i, j][k, m].entries_upper():
                        out.append((f"G2/{i}{j}/{k}{m}/{s}{t}", e.values))
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                for s, t, e in cell.g3[i, j, k].entries_upper():
                    out.append((f"g3/{i}{j}{k}/{s}{t}", e.values))
                for s in range(d):
                    for t in range(d):
                        for p, q, e in cell.G3[i, j, k][s, t].entries_upper():
                            out.append((f"G3/{i}{j}{k}/{s}{t}/{p}{q}", e.values))
    return out


def save_cell_data(cell: CellData, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = path.with_suffix(".bin")
    fields = _collect_fields(cell)
    index = []
    offset = 0
    with open(sidecar, "wb") as fh:
        for name, vals in fields:
            arr = np.ascontiguousarray(vals, dtype="<f8")
            fh.write(arr.tobytes())
            index.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = {
        "version": 1,
        "dim": cell.dim,
        "grid": cell.grid.points_per_axis,
        "period": cell.grid.period,
        "lambda": cell.lam,
        "lambda_hat": cell.lam_hat,
        "a_hat": cell.a_hat.comps.tolist(),
        "b": cell.b.tolist(),
        "c": cell.c.tolist(),
        "fields": sidecar.name,
        "field_index": index,
        "solver_report": cell.solver_report,
    }
    path.write_text(json.dumps(manifest, indent=1))


def load_cell_data(path) -> CellData:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest["version"] != 1:
        raise ValueError(f"unsupported cell data version {manifest['version']}")
    d = manifest["dim"]
    grid = GridSpec(d, manifest["grid"], manifest.get("period", 1.0))
    raw = np.frombuffer((path.parent / manifest["fields"]).read_bytes(), dtype="<f8")
    table = {}
    for rec in manifest["field_index"]:
        n = int(np.prod(rec["shape"]))
        table[rec["name"]] = raw[rec["offset"]: rec["offset"] + n].reshape(rec["shape"])

    def sf(name: str) -> ScalarField:
        return ScalarField(grid, values=table[name])

    def mf(prefix: str) -> MatrixField:
        return MatrixField(
            grid,
            {(s, t): sf(f"{prefix}/{s}{t}") for s, t in _upper_pairs(d)},
        )

    n2 = np.empty((d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            n2[i, j] = n2[j, i] = sf(f"n2/{i}{j}")
    n3 = np.empty((d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                n3[i, j, k] = n3[j, i, k] = sf(f"n3/{i}{j}{k}")
    g2 = np.empty((d, d), dtype=object)
    G2 = np.empty((d, d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            g2[i, j] = g2[j, i] = mf(f"g2/{i}{j}")
            fam = np.empty((d, d), dtype=object)
            for k in range(d):
                for m in range(d):
                    fam[k, m] = mf(f"G2/{i}{j}/{k}{m}")
            G2[i, j] = G2[j, i] = fam
    g3 = np.empty((d, d, d), dtype=object)
    G3 = np.empty((d, d, d, d, d), dtype=object)
    for i in range(d):
        for j in range(i, d):
            for k in range(d):
                g3[i, j, k] = g3[j, i, k] = mf(f"g3/{i}{j}{k}")
                fam = np.empty((d, d), dtype=object)
                for s in range(d):
                    for t in range(d):
                        fam[s, t] = mf(f"G3/{i}{j}{k}/{s}{t}")
                G3[i, j, k] = G3[j, i, k] = fam

    return CellData(
        grid=grid,
        lam=manifest["lambda"],
        lam_hat=manifest["lambda_hat"],
        n2=n2,
        n3=n3,
        a_hat=Tensor4.from_components(np.array(manifest["a_hat"]), check=True, tol=1e-10),
        g2=g2,
        G2=G2,
        g3=g3,
        G3=G3,
        b=np.array(manifest["b"]),
        c=np.array(manifest["c"]),
        solver_report=manifest.get("solver_report", {}),
    )
