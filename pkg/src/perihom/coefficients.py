"""Fourth-order coefficient tensors: storage, validation, built-in families.

A coefficient tensor a = {a_ijst} acts on symmetric d x d matrices and obeys
the index symmetries a_ijst = a_stij = a_jist.  Constant tensors are stored
as a symmetric Mandel matrix over symmetric index pairs, so the symmetries
hold exactly by storage and the eigenvalues of the Mandel matrix are exactly
the eigenvalues of the tensor as an operator on symmetric matrices.

Periodic tensor fields carry the full nodewise component array plus, for the
built-in families, a ``profile``/``base`` factorization a(y) = rho(y) * base
that downstream operators use as a fast path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import BadParameters, NotElliptic, SymmetryViolation
from .spectral import GridSpec, _freeze

_SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def sym_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Canonical ordering of symmetric index pairs: diagonals first."""
    diag = [(i, i) for i in range(dim)]
    off = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    return tuple(diag + off)


@lru_cache(maxsize=None)
def _pair_index(dim: int) -> dict:
    return {p: q for q, p in enumerate(sym_pairs(dim))}


def _mandel_weight(i: int, j: int) -> float:
    return 1.0 if i == j else _SQRT2


class Tensor4:
    """Constant fourth-order tensor with the full pair/major symmetries."""

    __slots__ = ("dim", "mandel", "_comps")

    def __init__(self, dim: int, mandel: np.ndarray):
        pairs = sym_pairs(dim)
        m = np.array(mandel, dtype=float)
        if m.shape != (len(pairs), len(pairs)):
            raise ValueError("mandel matrix has wrong shape")
        self.dim = dim
        self.mandel = _freeze(0.5 * (m + m.T))
        self._comps = None

    @classmethod
    def from_components(cls, comps, check: bool = True, tol: float = 1e-8) -> "Tensor4":
        c = np.asarray(comps, dtype=float)
        if c.ndim != 4 or len(set(c.shape)) != 1:
            raise ValueError("components must be a (d, d, d, d) array")
        dim = c.shape[0]
        if check:
            scale = max(float(np.max(np.abs(c))), 1e-300)
            for t, name in (
                (c.transpose(1, 0, 2, 3), "a_ijst == a_jist"),
                (c.transpose(2, 3, 0, 1), "a_ijst == a_stij"),
            ):
                err = float(np.max(np.abs(c - t)))
                if err > tol * scale:
                    raise SymmetryViolation(
                        f"components violate {name} by {err:.3e} (scale {scale:.3e})"
                    )
        pairs = sym_pairs(dim)
        m = np.empty((len(pairs), len(pairs)))
        for P, (i, j) in enumerate(pairs):
            for Q, (s, t) in enumerate(pairs):
                avg = 0.25 * (c[i, j, s, t] + c[j, i, s, t] + c[i, j, t, s] + c[j, i, t, s])
                m[P, Q] = _mandel_weight(i, j) * _mandel_weight(s, t) * avg
        return cls(dim, m)

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "Tensor4":
        """The symmetric identity a_ijst = (delta_is delta_jt + delta_it delta_js) / 2."""
        p = len(sym_pairs(dim))
        return cls(dim, scale * np.eye(p))

    @property
    def comps(self) -> np.ndarray:
        if self._comps is None:
            d = self.dim
            idx = _pair_index(d)
            c = np.empty((d, d, d, d))
            for i in range(d):
                for j in range(d):
                    P = idx[(min(i, j), max(i, j))]
                    wP = _mandel_weight(i, j)
                    for s in range(d):
                        for t in range(d):
                            Q = idx[(min(s, t), max(s, t))]
                            c[i, j, s, t] = self.mandel[P, Q] / (wP * _mandel_weight(s, t))
            self._comps = _freeze(c)
        return self._comps

    def apply(self, xi: np.ndarray) -> np.ndarray:
        """Action on a d x d matrix; equals the action on its symmetric part."""
        return np.einsum("ijst,st->ij", self.comps, np.asarray(xi, dtype=float))

    def eig_bounds(self) -> tuple[float, float]:
        w = np.linalg.eigvalsh(self.mandel)
        return float(w[0]), float(w[-1])

    def __repr__(self):
        lo, hi = self.eig_bounds()
        return f"Tensor4(dim={self.dim}, eig=[{lo:.4g}, {hi:.4g}])"


class Tensor4Field:
    """Periodic fourth-order tensor field on a cell grid.

    ``comps`` has shape (d, d, d, d, *grid.shape).  When the field is a
    scalar profile times a constant tensor, ``profile``/``base`` carry that
    factorization; a spatially constant field stores ``const`` instead.
    """

    __slots__ = ("grid", "dim", "comps", "profile", "base", "const", "_ctx_cache")

    def __init__(
        self,
        grid: GridSpec,
        comps: np.ndarray,
        profile: np.ndarray | None = None,
        base: Tensor4 | None = None,
        const: Tensor4 | None = None,
    ):
        d = grid.dim
        comps = np.asarray(comps, dtype=float)
        if comps.shape != (d, d, d, d) + grid.shape:
            raise ValueError("component array has wrong shape")
        self.grid = grid
        self.dim = d
        self.comps = _freeze(comps)
        self.profile = None if profile is None else _freeze(np.asarray(profile, dtype=float))
        self.base = base
        self.const = const
        self._ctx_cache = {}

    @classmethod
    def from_constant(cls, grid: GridSpec, tensor: Tensor4) -> "Tensor4Field":
        comps = np.broadcast_to(
            tensor.comps.reshape(tensor.comps.shape + (1,) * grid.dim),
            (grid.dim,) * 4 + grid.shape,
        ).copy()
        return cls(grid, comps, const=tensor)

    @classmethod
    def from_profile(cls, grid: GridSpec, profile: np.ndarray, base: Tensor4) -> "Tensor4Field":
        profile = np.asarray(profile, dtype=float)
        if profile.shape != grid.shape:
            raise ValueError("profile shape does not match grid")
        comps = base.comps.reshape(base.comps.shape + (1,) * grid.dim) * profile
        return cls(grid, comps, profile=profile, base=base)

    def nodewise_mandel(self) -> np.ndarray:
        """Array of shape (*grid.shape, P, P) of Mandel matrices per node."""
        d = self.dim
        pairs = sym_pairs(d)
        p = len(pairs)
        out = np.empty(self.grid.shape + (p, p))
        for P, (i, j) in enumerate(pairs):
            for Q, (s, t) in enumerate(pairs):
                avg = 0.25 * (
                    self.comps[i, j, s, t]
                    + self.comps[j, i, s, t]
                    + self.comps[i, j, t, s]
                    + self.comps[j, i, t, s]
                )
                out[..., P, Q] = _mandel_weight(i, j) * _mandel_weight(s, t) * avg
        return out

    def eig_bounds(self) -> tuple[float, float]:
        if self.const is not None:
            return self.const.eig_bounds()
        if self.profile is not None and self.base is not None:
            lo, hi = self.base.eig_bounds()
            pmin, pmax = float(self.profile.min()), float(self.profile.max())
            if pmin < 0:
                raise NotElliptic("profile changes sign")
            return pmin * lo, pmax * hi
        w = np.linalg.eigvalsh(self.nodewise_mandel())
        return float(w[..., 0].min()), float(w[..., -1].max())

    def check_symmetry(self) -> None:
        c = self.comps
        if not np.array_equal(c, c.transpose((1, 0, 2, 3) + tuple(range(4, c.ndim)))):
            raise SymmetryViolation("a_ijst != a_jist at some node")
        if not np.array_equal(c, c.transpose((2, 3, 0, 1) + tuple(range(4, c.ndim)))):
            raise SymmetryViolation("a_ijst != a_stij at some node")


@dataclass(frozen=True)
class CoefficientFamily:
    """Named test family: ``kind`` plus a flat parameter list.

    constant          []           identity tensor
                      [s]          s * identity
                      [m_11, ...]  upper triangle of the Mandel matrix
    scalar_isotropic  [c0, amp]    a(y) xi = rho(y) xi with
                      (+[mode])    rho = c0 + amp * prod_j sin(2 pi mode y_j)
    d1_profile        [c0, amp]    dim 1 scalar a(y) = c0 + amp sin(2 pi mode y)
                      (+[mode])
    """

    kind: str
    parameters: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(float(p) for p in self.parameters))


def _sin_product_profile(grid: GridSpec, c0: float, amp: float, mode: int) -> np.ndarray:
    prof = np.full(grid.shape, c0)
    term = np.ones(grid.shape)
    for xj in grid.nodes():
        term = term * np.sin(2.0 * np.pi * mode * xj)
    return prof + amp * term


def make_family(fam: CoefficientFamily, grid: GridSpec) -> Tensor4Field:
    """Materialize a coefficient family on a cell grid.

    Families whose pointwise lower eigenvalue falls below 1 are rejected
    (``BadParameters``): the ellipticity normalization puts the lower bound
    at 1, and silently rescaling would hide configuration mistakes.
    """
    d = grid.dim
    p = len(sym_pairs(d))
    if fam.kind == "constant":
        pars = fam.parameters
        if len(pars) == 0:
            tensor = Tensor4.identity(d)
        elif len(pars) == 1:
            if pars[0] < 1.0:
                raise BadParameters("constant scale must be >= 1")
            tensor = Tensor4.identity(d, scale=pars[0])
        elif len(pars) == p * (p + 1) // 2:
            m = np.zeros((p, p))
            iu = np.triu_indices(p)
            m[iu] = pars
            m = m + np.triu(m, 1).T
            tensor = Tensor4(d, m)
            lo, _ = tensor.eig_bounds()
            if lo < 1.0 - 1e-12:
                raise BadParameters(f"constant tensor lower eigenvalue {lo:.3g} < 1")
        else:
            raise BadParameters(
                f"constant family takes 0, 1 or {p*(p+1)//2} parameters, got {len(pars)}"
            )
        return Tensor4Field.from_constant(grid, tensor)

    if fam.kind in ("scalar_isotropic", "d1_profile"):
        if fam.kind == "d1_profile" and d != 1:
            raise BadParameters("d1_profile requires a 1-d grid")
        pars = fam.parameters
        if len(pars) == 2:
            c0, amp = pars
            mode = 1
        elif len(pars) == 3:
            c0, amp = pars[0], pars[1]
            mode = int(round(pars[2]))
            if mode < 1 or abs(pars[2] - mode) > 1e-12:
                raise BadParameters("mode must be a positive integer")
        else:
            raise BadParameters(f"{fam.kind} takes 2 or 3 parameters, got {len(pars)}")
        if 2 * mode >= grid.points_per_axis:
            raise BadParameters("profile mode is not resolved by the grid")
        if c0 - abs(amp) < 1.0 - 1e-12:
            raise BadParameters(
                f"profile floor {c0 - abs(amp):.3g} < 1; rescale the family"
            )
        profile = _sin_product_profile(grid, c0, amp, mode)
        return Tensor4Field.from_profile(grid, profile, Tensor4.identity(d))

    raise BadParameters(f"unknown family kind {fam.kind!r}")


def validate(a: Tensor4Field, tol: float = 1e-12) -> float:
    """Check symmetries and two-sided ellipticity; return the constant lambda.

    With the lower bound normalized to 1, lambda is the reciprocal of the
    largest nodewise eigenvalue, so xi.xi <= a(y) xi.xi <= (1/lambda) xi.xi
    on symmetric matrices.  Raises ``NotElliptic`` when the smallest
    eigenvalue is nonpositive, or is below 1 (with rescaling advice).
    """
    a.check_symmetry()
    lo, hi = a.eig_bounds()
    if lo <= 0.0:
        raise NotElliptic(f"minimum eigenvalue {lo:.3e} is not positive")
    if lo < 1.0 - tol:
        raise NotElliptic(
            f"minimum eigenvalue {lo:.6g} < 1; rescale the tensor by {1.0 / lo:.6g} "
            "to restore the normalized lower bound"
        )
    return 1.0 / hi
