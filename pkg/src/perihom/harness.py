"""Experiment driver: configs, eps sweeps, slope fits, property suites.

``run_converge`` solves the cell problems once, builds the approximant
bundle for every eps = 1/n in the sweep, and fits log-log slopes of each
error column.  Reports are deterministic for a fixed (config, seed): rerun
and every numeric column reproduces bitwise.

``run_check`` aggregates the property suites of all modules (spectral
identities, coefficient validation, cell invariants, smoothing inequalities,
resolvent adjointness) into a single pass/fail table with a process exit
status.
"""

from __future__ import annotations

import json
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cell import CellData, cell_pipeline, verify_potential_family
from .coefficients import CoefficientFamily, make_family, validate
from .errors import BadParameters
from .operators import DivDivForm
from .resolvents import (
    ALL_APPROXIMANTS,
    EpsEmbedding,
    HomogenizedSymbol,
    build_bundle,
    corrector_K2,
    corrector_K2_adjoint,
    resolvent_hat,
)
from .smoothing import check_lemma_suite
from .spectral import (
    GridSpec,
    MatrixField,
    ScalarField,
    apply_D,
    apply_Dstar,
    gradient,
    inner_product,
    pointwise_product,
    random_trig_field,
    sobolev_norm,
    xi_axes,
    xi_squared,
)


@dataclass(frozen=True)
class FMode:
    """One cosine mode of the right-hand side: amplitude * cos(2 pi k.x + phase)."""

    k: tuple
    amplitude: float
    phase: float = 0.0


@dataclass
class ExperimentConfig:
    family: CoefficientFamily
    dim: int
    cell_points: int
    eps_list: tuple
    f_modes: tuple
    f_mean: float = 0.0
    tol: float = 1e-10
    approximants: tuple = ALL_APPROXIMANTS
    seed: int = 0
    dealias: bool = True
    out_dir: str | None = None
    stress_high_freq: bool = False

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise BadParameters("dim must be 1, 2 or 3")
        m = self.cell_points
        if m < 4 or (m & (m - 1)) != 0:
            raise BadParameters("cell_points must be a power of two >= 4")
        if len(set(self.eps_list)) != len(self.eps_list):
            raise BadParameters("eps values must be distinct")
        for e in self.eps_list:
            if not (0 < e <= 0.5):
                raise BadParameters(f"eps = {e} outside (0, 1/2]")
            n = round(1.0 / e)
            if abs(e * n - 1.0) > 1e-9:
                raise BadParameters(f"eps = {e} is not the reciprocal of an integer")
        unknown = set(self.approximants) - set(ALL_APPROXIMANTS)
        if unknown:
            raise BadParameters(f"unknown approximants {sorted(unknown)}")
        for mode in self.f_modes:
            if len(mode.k) != self.dim:
                raise BadParameters(f"mode {mode.k} has wrong dimension")
        if not self.tol > 0:
            raise BadParameters("tol must be positive")

    def eps_denominators(self) -> list[int]:
        return [round(1.0 / e) for e in self.eps_list]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        fam = doc["family"]
        modes = tuple(
            FMode(tuple(int(x) for x in m["k"]), float(m["amplitude"]), float(m.get("phase", 0.0)))
            for m in doc.get("f_modes", ())
        )
        return cls(
            family=CoefficientFamily(fam["kind"], tuple(fam.get("parameters", ()))),
            dim=int(doc["dim"]),
            cell_points=int(doc["cell_points"]),
            eps_list=tuple(float(e) for e in doc["eps_list"]),
            f_modes=modes,
            f_mean=float(doc.get("f_mean", 0.0)),
            tol=float(doc.get("tol", 1e-10)),
            approximants=tuple(doc.get("approximants", ALL_APPROXIMANTS)),
            seed=int(doc.get("seed", 0)),
            dealias=bool(doc.get("dealias", True)),
            out_dir=doc.get("out_dir"),
            stress_high_freq=bool(doc.get("stress_high_freq", False)),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["family"] = {"kind": self.family.kind, "parameters": list(self.family.parameters)}
        doc["f_modes"] = [
            {"k": list(m.k), "amplitude": m.amplitude, "phase": m.phase} for m in self.f_modes
        ]
        doc["eps_list"] = list(self.eps_list)
        doc["approximants"] = list(self.approximants)
        return doc


def build_f(grid: GridSpec, modes, mean: float = 0.0) -> ScalarField:
    """Exact band-limited right-hand side from a cosine mode list."""
    spec = np.zeros(grid.shape, dtype=complex)
    spec[(0,) * grid.dim] = mean
    n = grid.points_per_axis
    for mode in modes:
        k = tuple(int(x) for x in mode.k)
        if any(abs(kj) >= n // 2 for kj in k):
            raise BadParameters(f"mode {k} is not resolved on an n={n} grid")
        half = 0.5 * mode.amplitude * np.exp(1j * mode.phase)
        kpos = tuple(kj % n for kj in k)
        kneg = tuple((-kj) % n for kj in k)
        spec[kpos] += half
        spec[kneg] += np.conj(half)
    return ScalarField(grid, spectrum=spec)


def fit_loglog(eps, errs) -> tuple[float, float]:
    """Least-squares slope of log(err) vs log(eps) plus the fit RMS residual."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(coef[0]), rms


_COLUMNS = ("err_l2_u_hat", "err_h2_u_tilde", "err_l2_w", "res_hminus2")


@dataclass
class ReportRow:
    eps: float
    n: int
    errors: dict
    cg_iterations: int


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    lambda0: float = 0.0
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        header = ["eps", "n", *_COLUMNS, "cg_iterations"]
        lines = [",".join(header)]
        for r in self.rows:
            cells = [repr(r.eps), str(r.n)]
            for col in _COLUMNS:
                v = r.errors.get(col)
                cells.append("" if v is None else repr(v))
            cells.append(str(r.cg_iterations))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "config": self.config.to_dict(),
            "rows": [
                {
                    "eps": r.eps,
                    "n": r.n,
                    **{c: r.errors.get(c) for c in _COLUMNS},
                    "cg_iterations": r.cg_iterations,
                }
                for r in self.rows
            ],
            "slopes": self.slopes,
            "lambda0_diagnostic": self.lambda0,
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=1)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "converge.csv").write_text(self.to_csv())
        (out / "converge.json").write_text(self.to_json())
        for col in _COLUMNS:
            pts = [(r.eps, r.errors.get(col)) for r in self.rows if r.errors.get(col)]
            if not pts:
                continue
            body = "\n".join(f"{repr(e)} {repr(v)}" for e, v in pts)
            (out / f"curve_{col}.dat").write_text(body + "\n")


def lambda0_diagnostic(cell: CellData, samples: int = 1000, seed: int = 0) -> float:
    """Largest |quintic drift form| over a fixed unit-sphere sample.

    Reported, never asserted: for pair-symmetric coefficient tensors the
    form is expected to vanish, and this measures how close to zero the
    assembled drift matrices actually are.
    """
    rng = np.random.default_rng(seed)
    d = cell.dim
    x = rng.standard_normal((samples, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = np.einsum("rstpq,ar,as,at,ap,aq->a", cell.b, x, x, x, x, x)
    return float(np.max(np.abs(vals)))


def run_converge(cfg: ExperimentConfig) -> ConvergenceReport:
    """Solve the cell problems once, then sweep eps and fit error slopes."""
    cfg.validate()
    grid = GridSpec(cfg.dim, cfg.cell_points)
    a = make_family(cfg.family, grid)
    cell = cell_pipeline(a, tol=cfg.tol, dealias=cfg.dealias)
    report = ConvergenceReport(config=cfg)
    for eps in cfg.eps_list:
        n = round(1.0 / eps)
        emb = EpsEmbedding(n, grid)
        modes = list(cfg.f_modes)
        if cfg.stress_high_freq:
            # energy at the microstructure scale: one mode at frequency 1/eps
            modes.append(FMode((n,) + (0,) * (cfg.dim - 1), 0.5, 0.0))
        f = build_f(emb.torus_grid, modes, cfg.f_mean)
        bundle = build_bundle(
            a, cell, emb, f, dealias=cfg.dealias, approximants=cfg.approximants
        )
        report.rows.append(
            ReportRow(eps=emb.eps, n=n, errors=bundle.errors(), cg_iterations=bundle.cg_info.iterations)
        )
    if len(report.rows) >= 3:
        for col in _COLUMNS:
            vals = [r.errors.get(col) for r in report.rows]
            if all(v is not None and v > 0 for v in vals):
                slope, rms = fit_loglog([r.eps for r in report.rows], vals)
                report.slopes[col] = {"slope": slope, "fit_rms": rms}
    report.lambda0 = lambda0_diagnostic(cell, seed=cfg.seed)
    report.metadata = {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
        "cell_iterations": cell.solver_report,
    }
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report


# ---------------------------------------------------------------------------
# Aggregated property suite
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    check_id: str
    worst: float
    limit: float
    passed: bool
    detail: str = ""


def _result(check_id: str, worst: float, limit: float, detail: str = "") -> CheckResult:
    return CheckResult(check_id, worst, limit, worst <= limit, detail)


def _spectral_checks(rng: np.random.Generator, trials: int) -> list[CheckResult]:
    grid = GridSpec(2, 32)
    worst_adj = worst_pl = worst_rt = worst_bi = 0.0
    for _ in range(trials):
        u = random_trig_field(grid, 6, rng, normalize=True)
        v = random_trig_field(grid, 6, rng, normalize=True)
        eta = apply_D(u)
        lhs = inner_product(apply_Dstar(eta), v)
        rhs = sum(
            (1.0 if i == j else 2.0) * inner_product(eta.entry(i, j), apply_D(v).entry(i, j))
            for i in range(2)
            for j in range(i, 2)
        )
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        c = u.spectrum
        worst_pl = max(
            worst_pl,
            abs(sobolev_norm(u) ** 2 - float(np.sum(np.abs(c) ** 2)))
            / max(sobolev_norm(u) ** 2, 1e-300),
        )
        w = ScalarField(grid, values=rng.standard_normal(grid.shape))
        back = ScalarField(grid, spectrum=w.spectrum)
        worst_rt = max(
            worst_rt,
            float(np.max(np.abs(back.values - w.values))) / float(np.max(np.abs(w.values))),
        )
        ref = ScalarField(grid, spectrum=xi_squared(grid) ** 2 * u.spectrum)
        got = apply_Dstar(apply_D(u))
        worst_bi = max(
            worst_bi,
            sobolev_norm(got - ref) / max(sobolev_norm(ref), 1e-300),
        )
    return [
        _result("spectral-adjointness", worst_adj, 1e-12),
        _result("spectral-plancherel", worst_pl, 1e-12),
        _result("spectral-roundtrip", worst_rt, 1e-12),
        _result("hessian-contraction-identity", worst_bi, 1e-12),
    ]


def _coefficient_checks(rng: np.random.Generator, trials: int) -> list[CheckResult]:
    out = []
    grid = GridSpec(2, 16)
    cases = [
        (CoefficientFamily("constant"), grid, 1.0),
        (CoefficientFamily("scalar_isotropic", (1.5, 0.5)), grid, 0.5),
        (CoefficientFamily("d1_profile", (2.0, 1.0)), GridSpec(1, 16), 1.0 / 3.0),
    ]
    worst = 0.0
    for fam, g, expected in cases:
        lam = validate(make_family(fam, g))
        worst = max(worst, abs(lam - expected))
    out.append(_result("family-ellipticity-constants", worst, 1e-12))
    a = make_family(CoefficientFamily("scalar_isotropic", (1.5, 0.5)), grid)
    worst = 0.0
    for _ in range(trials):
        xi = rng.standard_normal((2, 2))
        lhs = np.einsum("ijst...,st->ij...", a.comps, xi + xi.T)
        rhs = 2.0 * np.einsum("ijst...,st->ij...", a.comps, xi)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / float(np.max(np.abs(rhs))))
    out.append(_result("symmetric-part-action", worst, 1e-14))
    return out


def _cell_checks(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    grid = GridSpec(2, 16)
    a = make_family(CoefficientFamily("scalar_isotropic", (1.5, 0.5)), grid)
    cell = cell_pipeline(a, tol=1e-11)

    # effective tensor: major symmetry through the weak form, and ellipticity
    comps = cell.a_hat.comps
    out.append(
        _result(
            "effective-tensor-major-symmetry",
            float(np.max(np.abs(comps - comps.transpose(2, 3, 0, 1)))),
            1e-10,
        )
    )
    lo, _ = cell.a_hat.eig_bounds()
    out.append(_result("effective-tensor-ellipticity", 1.0 - lo, 1e-6))

    worst = 0.0
    for i in range(2):
        for j in range(i, 2):
            worst = max(worst, verify_potential_family(cell.g2[i, j], cell.G2[i, j], rtol=1.0))
    out.append(_result("potential-divergence-identity", worst, 1e-10))

    # H2 bound of the potentials relative to the flux
    worst = 0.0
    for i in range(2):
        for j in range(i, 2):
            gnorm = max(cell.g2[i, j].l2_norm(), 1e-300)
            for s in range(2):
                for t in range(2):
                    member = cell.G2[i, j][s, t]
                    h2 = np.sqrt(
                        sum(
                            (1.0 if k == m else 2.0) * sobolev_norm(e, "H2") ** 2
                            for k, m, e in member.entries_upper()
                        )
                    )
                    worst = max(worst, h2 / gnorm)
    out.append(_result("potential-h2-bound", worst, 10.0))

    # drift matrices are symmetric (range of the tensor action)
    b = cell.b
    out.append(
        _result(
            "drift-matrix-symmetry",
            float(np.max(np.abs(b - b.transpose(0, 1, 2, 4, 3)))),
            1e-12 * max(1.0, float(np.max(np.abs(b)))) + 1e-12,
        )
    )
    return out


def _calculus_checks(rng: np.random.Generator, trials: int) -> list[CheckResult]:
    """Product rule for div div on matrix-scalar products, and solenoidality
    of potential-times-envelope matrices on the torus."""
    out = []
    grid = GridSpec(2, 48)
    worst = 0.0
    for _ in range(trials):
        phi = random_trig_field(grid, 4, rng, normalize=True)
        ent = {}
        for i in range(2):
            for j in range(i, 2):
                ent[(i, j)] = random_trig_field(grid, 4, rng, normalize=True)
        B = MatrixField(grid, ent)
        prod_entries = {
            (i, j): pointwise_product(phi, e, dealias=True) for i, j, e in B.entries_upper()
        }
        lhs = apply_Dstar(MatrixField(grid, prod_entries))
        term1 = pointwise_product(phi, apply_Dstar(B), dealias=True)
        hess = apply_D(phi)
        term2_spec = np.zeros(grid.shape, dtype=complex)
        for i in range(2):
            for j in range(2):
                term2_spec += pointwise_product(B.entry(i, j), hess.entry(i, j), dealias=True).spectrum
        gphi = gradient(phi)
        xi = xi_axes(grid)
        term3_spec = np.zeros(grid.shape, dtype=complex)
        for i in range(2):
            div_i = np.zeros(grid.shape, dtype=complex)
            for j in range(2):
                div_i += 1j * xi[j] * B.entry(i, j).spectrum
            term3_spec += 2.0 * pointwise_product(
                ScalarField(grid, spectrum=div_i), gphi[i], dealias=True
            ).spectrum
        rhs = ScalarField(
            grid, spectrum=term1.spectrum + term2_spec + term3_spec
        )
        worst = max(worst, sobolev_norm(lhs - rhs) / max(sobolev_norm(lhs), 1e-300))
    out.append(_result("divdiv-product-rule", worst, 1e-11))

    # skew potentials against a smooth envelope: double divergence vanishes
    cellgrid = GridSpec(2, 8)
    aa = make_family(CoefficientFamily("scalar_isotropic", (1.5, 0.5)), cellgrid)
    cd = cell_pipeline(aa, tol=1e-11)
    emb = EpsEmbedding(4, cellgrid)
    tg = emb.torus_grid
    worst = 0.0
    for _ in range(max(1, trials // 4)):
        phi = random_trig_field(tg, 3, rng, normalize=True)
        acc = np.zeros(tg.shape, dtype=complex)
        scale = 0.0
        for s in range(2):
            for t in range(2):
                member = cd.G2[0, 1][s, t]
                lifted = {
                    (k, m): emb.lift(e) for k, m, e in member.entries_upper()
                }
                inner_entries = {
                    key: pointwise_product(val, phi, dealias=True)
                    for key, val in lifted.items()
                }
                m_st = apply_Dstar(MatrixField(tg, inner_entries))
                scale = max(scale, sobolev_norm(m_st, "H2"))
                xi = xi_axes(tg)
                acc += -(xi[s] * xi[t]) * m_st.spectrum
        total = ScalarField(tg, spectrum=acc)
        worst = max(worst, sobolev_norm(total) / max(scale, 1e-300))
    out.append(_result("potential-envelope-solenoidal", worst, 1e-10))
    return out


def _resolvent_checks(rng: np.random.Generator, trials: int) -> list[CheckResult]:
    grid = GridSpec(2, 8)
    a = make_family(CoefficientFamily("scalar_isotropic", (1.5, 0.5)), grid)
    cell = cell_pipeline(a, tol=1e-11)
    emb = EpsEmbedding(4, grid)
    tg = emb.torus_grid
    sym = HomogenizedSymbol.from_cell(cell, tg)
    form = DivDivForm(emb.lift_tensor(a), dealias=True)
    worst_k2 = worst_sym = worst_res = 0.0
    for _ in range(trials):
        f = random_trig_field(tg, 4, rng, normalize=True)
        g = random_trig_field(tg, 4, rng, normalize=True)
        lhs = inner_product(corrector_K2(cell, sym, emb, f), g)
        rhs = inner_product(f, corrector_K2_adjoint(cell, sym, emb, g))
        worst_k2 = max(worst_k2, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        au = ScalarField(tg, spectrum=form.apply_spectrum(f.spectrum))
        av = ScalarField(tg, spectrum=form.apply_spectrum(g.spectrum))
        s1 = inner_product(au, g)
        s2 = inner_product(f, av)
        worst_sym = max(worst_sym, abs(s1 - s2) / max(abs(s1), 1e-300))
        # adjoint homogenized resolvent pairing
        r1 = inner_product(resolvent_hat(sym, f, emb.eps, with_b=True), g)
        r2 = inner_product(f, resolvent_hat(sym, g, emb.eps, with_b=True, adjoint=True))
        worst_res = max(worst_res, abs(r1 - r2) / max(abs(r1), 1e-300))
    return [
        _result("corrector-adjoint-identity", worst_k2, 1e-10),
        _result("oscillating-form-self-adjoint", worst_sym, 1e-11),
        _result("resolvent-adjoint-pairing", worst_res, 1e-12),
    ]


def run_check(seed: int = 0, trials: int = 50) -> tuple[int, list[CheckResult]]:
    """Run every module property suite; returns (exit status, results)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    results += _spectral_checks(rng, min(trials, 25))
    results += _coefficient_checks(rng, min(trials, 25))
    results += _cell_checks(rng)
    results += _calculus_checks(rng, min(trials, 12))
    smoothing_report = check_lemma_suite(seed=seed, trials=trials, raise_on_fail=False)
    for row in smoothing_report.rows:
        results.append(
            CheckResult(
                f"smoothing/{row.check_id}", row.worst_ratio, 1.0, row.passed, row.worst_detail
            )
        )
    results += _resolvent_checks(rng, min(trials, 20))
    status = 0 if all(r.passed for r in results) else 1
    return status, results
