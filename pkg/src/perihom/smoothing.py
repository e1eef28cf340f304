"""Steklov averaging: multipliers, iterated kernels, and inequality checks.

The Steklov operator averages a field over a cube of side eps.  On the torus
it is the Fourier multiplier prod_j sinc(eps xi_j / 2); its k-th iterate is
the k-th power of that multiplier and equals convolution with the separable
kernel chi_k x ... x chi_k, where chi_k is the k-fold convolution of the unit
box indicator (box, triangle, quadratic spline for k = 1, 2, 3).

``check_lemma_suite`` exercises the operator inequalities that the corrector
analysis relies on, over randomized periodic multipliers and band-limited
fields, and reports the worst ratio of each left side to its majorant.
Inequalities with a known sharp constant use it; the rest get a fixed
constant budget of 100.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import PropertyViolation, UnsupportedOrder
from .spectral import (
    GridSpec,
    ScalarField,
    gradient,
    inner_product,
    pointwise_product,
    random_trig_field,
    seminorm,
    sobolev_norm,
    xi_axes,
    xi_squared,
)

#: Closed-form values of (1/2) * int omega_1^2 theta_k(omega) d omega; the
#: k-fold box convolution has variance k/12, so gamma_k = k/24.
GAMMA = {1: 1.0 / 24.0, 2: 1.0 / 12.0, 3: 1.0 / 8.0}


@dataclass(frozen=True)
class SmoothingSpec:
    """Iterated Steklov smoothing of order k in {1, 2, 3} at scale eps."""

    order: int
    eps: float

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise UnsupportedOrder(f"order must be in 1..3, got {self.order}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def _sinc(t: np.ndarray) -> np.ndarray:
    # np.sinc is sin(pi x)/(pi x)
    return np.sinc(np.asarray(t) / np.pi)


def steklov_multiplier(order: int, eps: float, freq, period: float = 1.0):
    """Multiplier of the order-th Steklov iterate at integer frequency vector(s).

    ``freq`` is an integer vector (last axis = dimension); the physical
    frequency is xi = 2 pi freq / period.  Averaging preserves constants
    (multiplier 1 at freq 0) and annihilates cell-periodic oscillations
    (zero whenever eps * freq_j / period is a nonzero integer).
    """
    if order < 1:
        raise UnsupportedOrder("order must be >= 1")
    xi = 2.0 * np.pi * np.asarray(freq, dtype=float) / period
    return np.prod(_sinc(0.5 * eps * xi), axis=-1) ** order


@lru_cache(maxsize=256)
def grid_multiplier(grid: GridSpec, order: int, eps: float) -> np.ndarray:
    """Steklov multiplier over a grid's full frequency lattice."""
    out = np.ones(grid.shape)
    for xj in xi_axes(grid):
        out = out * _sinc(0.5 * eps * xj)
    out = out**order
    out.flags.writeable = False
    return out


def apply_smoothing(u: ScalarField, spec: SmoothingSpec) -> ScalarField:
    mult = grid_multiplier(u.grid, spec.order, spec.eps)
    return ScalarField(u.grid, spectrum=u.spectrum * mult)


def kernel_chi(order: int, s) -> np.ndarray | float:
    """1-d kernel of the order-th Steklov iterate (k-fold box convolution)."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    if order == 1:
        out = np.where((s >= -0.5) & (s < 0.5), 1.0, 0.0)
    elif order == 2:
        out = np.where(a <= 1.0, 1.0 - a, 0.0)
    elif order == 3:
        out = np.where(
            a <= 0.5,
            0.75 - s**2,
            np.where(a < 1.5, 0.5 * (a - 1.5) ** 2, 0.0),
        )
    else:
        raise UnsupportedOrder(f"kernel implemented for orders 1..3, got {order}")
    return out if out.ndim else float(out)


def kernel_support(order: int) -> float:
    return 0.5 * order


def gamma_coefficient(order: int) -> float:
    """Second-moment coefficient (1/2) int s^2 chi_k(s) ds, by quadrature."""
    if order not in (1, 2, 3):
        raise UnsupportedOrder(f"gamma implemented for orders 1..3, got {order}")
    half = kernel_support(order)
    breaks = [x for x in (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5) if abs(x) <= half]
    val, _ = quad(
        lambda s: 0.5 * s * s * kernel_chi(order, s),
        -half,
        half,
        points=breaks,
        limit=200,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    return val


def kernel_transform(order: int, xi: float) -> float:
    """Continuous Fourier transform int chi_k(s) cos(xi s) ds, by quadrature."""
    half = kernel_support(order)
    breaks = [x for x in (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5) if abs(x) <= half]
    val, _ = quad(
        lambda s: kernel_chi(order, s) * np.cos(xi * s),
        -half,
        half,
        points=breaks,
        limit=200,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    return val


# ---------------------------------------------------------------------------
# Inequality suite
# ---------------------------------------------------------------------------

@dataclass
class LemmaCheck:
    check_id: str
    worst_ratio: float
    constant: float
    trials: int
    passed: bool
    worst_detail: str = ""


@dataclass
class SmoothingCheckReport:
    seed: int
    trials: int
    dim: int
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _lift_values(cell_vals: np.ndarray, n: int) -> np.ndarray:
    return np.tile(cell_vals, (n,) * cell_vals.ndim)


def _smooth(u: ScalarField, eps: float, order: int) -> ScalarField:
    return ScalarField(u.grid, spectrum=u.spectrum * grid_multiplier(u.grid, order, eps))


def _grad_norm(u: ScalarField) -> float:
    return seminorm(u, 1)


def check_lemma_suite(
    seed: int = 0,
    trials: int = 50,
    dim: int = 2,
    budget: float = 100.0,
    raise_on_fail: bool = True,
) -> SmoothingCheckReport:
    """Evaluate the smoothing-operator inequalities on randomized inputs.

    Each trial draws band-limited fields phi, psi on a torus refined by a
    factor n (eps = 1/n) and random periodic multipliers on the coarse cell;
    mean or orthogonality constraints are imposed exactly in Fourier space.
    The report lists, per inequality, the worst ratio of the left side to
    the majorant including its constant (sharp where known, ``budget``
    otherwise); all ratios must be <= 1.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    m_cell = 8
    cell = GridSpec(dim, m_cell)
    sd = np.sqrt(dim)

    worst: dict[str, tuple[float, str]] = {}

    def record(cid: str, ratio: float, detail: str) -> None:
        if cid not in worst or ratio > worst[cid][0]:
            worst[cid] = (ratio, detail)

    def periodic_multiplier(mean_zero: bool) -> ScalarField:
        b = random_trig_field(cell, band=3, rng=rng)
        if mean_zero:
            c = b.spectrum.copy()
            c[(0,) * dim] = 0.0
            b = ScalarField(cell, spectrum=c)
        return b

    for trial in range(trials):
        n = int(rng.choice([4, 6, 8]))
        eps = 1.0 / n
        torus = GridSpec(dim, n * m_cell)
        tag = f"trial={trial} n={n}"

        phi = random_trig_field(torus, band=3, rng=rng, normalize=True)
        psi = random_trig_field(torus, band=3, rng=rng, normalize=True)
        b = periodic_multiplier(mean_zero=False)
        b0 = periodic_multiplier(mean_zero=True)
        alpha = periodic_multiplier(mean_zero=False)
        beta = periodic_multiplier(mean_zero=False)
        # exact <alpha beta> = 0 by Gram-Schmidt in the product mean
        ab = inner_product(alpha, beta)
        aa = inner_product(alpha, alpha)
        beta_orth = beta - (ab / aa) * alpha

        def lift(bf: ScalarField) -> ScalarField:
            return ScalarField(torus, values=_lift_values(bf.values, n))

        def rms(bf: ScalarField) -> float:
            return sobolev_norm(bf, "L2")

        s_phi = _smooth(phi, eps, 1)
        s_psi = _smooth(psi, eps, 1)

        record("steklov-contraction", sobolev_norm(s_phi) / sobolev_norm(phi), tag)
        record(
            "steklov-first-order",
            sobolev_norm(s_phi - phi) / (0.5 * sd * eps * _grad_norm(phi)),
            tag,
        )
        record(
            "oscillating-factor-bound",
            sobolev_norm(pointwise_product(lift(b), s_phi)) / (rms(b) * sobolev_norm(phi)),
            tag,
        )
        record(
            "mean-zero-pairing",
            abs(inner_product(pointwise_product(lift(b0), s_phi), psi))
            / (budget * eps * rms(b0) * sobolev_norm(phi) * _grad_norm(psi)),
            tag,
        )
        lhs9 = abs(
            inner_product(
                pointwise_product(lift(alpha), s_phi),
                pointwise_product(lift(beta_orth), s_psi),
            )
        )
        record(
            "orthogonal-pair-order2",
            lhs9
            / (budget * eps**2 * rms(alpha) * rms(beta_orth) * _grad_norm(phi) * _grad_norm(psi)),
            tag,
        )
        lhs10 = abs(
            inner_product(
                pointwise_product(lift(alpha), s_phi),
                pointwise_product(lift(beta), s_psi),
            )
            - inner_product(alpha, beta) * inner_product(phi, psi)
        )
        record(
            "pair-mean-correction",
            lhs10
            / (budget * eps * rms(alpha) * rms(beta) * sobolev_norm(phi) * _grad_norm(psi)),
            tag,
        )

        # rough data: full-band field, first derivative under triple smoothing
        rough = ScalarField(torus, values=rng.standard_normal(torus.shape))
        rough = rough * (1.0 / sobolev_norm(rough))
        g3 = [_smooth(g, eps, 3) for g in gradient(rough)]
        lhs12 = np.sqrt(sum(sobolev_norm(g) ** 2 for g in g3))
        record("smoothed-derivative-bound", eps * lhs12 / (budget * 1.0), tag)
        lhs13 = np.sqrt(
            sum(sobolev_norm(pointwise_product(lift(b), g)) ** 2 for g in g3)
        )
        record(
            "smoothed-derivative-with-factor",
            eps * lhs13 / (budget * rms(b)),
            tag,
        )

        # derivative transfer between triple and double smoothing
        i_ax = int(rng.integers(dim))
        dphi = gradient(phi)[i_ax]
        lhs14 = abs(
            inner_product(
                pointwise_product(lift(alpha), _smooth(dphi, eps, 3)),
                pointwise_product(lift(beta), s_psi),
            )
            - inner_product(alpha, beta) * inner_product(_smooth(dphi, eps, 2), psi)
        )
        record(
            "iterate-derivative-transfer",
            lhs14 / (budget * rms(alpha) * rms(beta) * sobolev_norm(phi) * _grad_norm(psi)),
            tag,
        )

    # fourth-order Taylor bound: multiplier-only, eps need not be 1/n
    torus = GridSpec(dim, 8 * m_cell)
    x2 = xi_squared(torus)
    for trial in range(trials):
        phi = random_trig_field(torus, band=4, rng=rng, normalize=True)
        for k in (1, 2, 3):
            for n_eps in (4, 16, 64):
                eps = 1.0 / n_eps
                lhs = sobolev_norm(
                    _smooth(phi, eps, k)
                    - phi
                    - eps**2 * GAMMA[k] * ScalarField(torus, spectrum=-x2 * phi.spectrum)
                )
                record(
                    "taylor-fourth-order",
                    lhs / (budget * eps**4 * seminorm(phi, 4)),
                    f"trial={trial} k={k} eps=1/{n_eps}",
                )

    report = SmoothingCheckReport(seed=seed, trials=trials, dim=dim)
    for cid, (ratio, detail) in worst.items():
        constant = 1.0 if cid in (
            "steklov-contraction",
            "steklov-first-order",
            "oscillating-factor-bound",
        ) else budget
        report.rows.append(
            LemmaCheck(cid, ratio, constant, trials, ratio <= 1.0, detail)
        )
    if raise_on_fail and not report.passed:
        bad = [r for r in report.rows if not r.passed]
        raise PropertyViolation(
            bad[0].check_id,
            f"worst ratio {bad[0].worst_ratio:.4g} > 1 at {bad[0].worst_detail} "
            f"(seed={seed}, dim={dim})",
        )
    return report
