"""Periodic scalar and matrix fields with exact Fourier calculus.

Fields live on the d-dimensional torus of side ``period``, sampled on a
uniform grid.  Every field carries a dual representation: nodal values and
the coefficients ``c_k`` of its trigonometric interpolant

    u(x) = sum_k c_k exp(2*pi*i k.x / period),

kept lazily in sync.  Differential operators act as Fourier multipliers, so
they are exact on band-limited data.  Odd-order derivative multipliers are
zeroed on the Nyquist planes, which keeps real fields real; quadratic
pointwise products are dealiased by 3/2-rule zero padding by default.

All operations are pure (inputs are never mutated; arrays are frozen after
construction), so fields can be shared freely across threads.  The FFT
backend is scipy's pocketfft; ``set_fft_workers`` controls its threading.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy import fft as _sfft

from .errors import GridMismatch, NonZeroMean

_fft_workers = 1


def set_fft_workers(n: int) -> None:
    """Set the number of threads used by the FFT backend (default 1)."""
    global _fft_workers
    _fft_workers = max(1, int(n))


def fftn(a: np.ndarray) -> np.ndarray:
    return _sfft.fftn(a, workers=_fft_workers)


def ifftn(a: np.ndarray) -> np.ndarray:
    return _sfft.ifftn(a, workers=_fft_workers)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the d-dimensional torus.

    ``points_per_axis`` must be even and at least 4 so that 3/2-rule
    padding stays integral.  The experiment configuration additionally
    restricts cell grids to powers of two; torus grids obtained by
    refining a cell grid by an odd factor are accepted here.
    """

    dim: int
    points_per_axis: int
    period: float = 1.0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points_per_axis < 4 or self.points_per_axis % 2 != 0:
            raise ValueError("points_per_axis must be an even integer >= 4")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    def nodes(self) -> list[np.ndarray]:
        """Coordinate arrays (broadcastable) of the grid nodes in [0, period)."""
        n = self.points_per_axis
        x = np.arange(n) * (self.period / n)
        return [_axis_view(x, j, self.dim) for j in range(self.dim)]


def _axis_view(a: np.ndarray, axis: int, dim: int) -> np.ndarray:
    shape = [1] * dim
    shape[axis] = a.size
    return a.reshape(shape)


@lru_cache(maxsize=None)
def _int_freqs(n: int) -> np.ndarray:
    return _freeze(np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64))


@lru_cache(maxsize=None)
def _deriv_freq_1d(n: int, period: float) -> np.ndarray:
    # Nyquist zeroed: odd-order derivatives of real data are otherwise ambiguous.
    k = _int_freqs(n).astype(float).copy()
    k[n // 2] = 0.0
    return _freeze(2.0 * np.pi * k / period)


@lru_cache(maxsize=None)
def xi_axes(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Broadcastable physical derivative frequencies per axis (Nyquist zeroed)."""
    xi = _deriv_freq_1d(grid.points_per_axis, grid.period)
    return tuple(_axis_view(xi, j, grid.dim) for j in range(grid.dim))


@lru_cache(maxsize=None)
def xi_squared(grid: GridSpec) -> np.ndarray:
    """|xi|^2 over the full frequency lattice."""
    xi = xi_axes(grid)
    out = np.zeros(grid.shape)
    for x in xi:
        out = out + x * x
    return _freeze(out)


@lru_cache(maxsize=None)
def _norm_weight(grid: GridSpec, space: str) -> np.ndarray:
    x2 = xi_squared(grid)
    if space == "L2":
        w = np.ones(grid.shape)
    elif space == "H1":
        w = 1.0 + x2
    elif space == "H2":
        w = 1.0 + x2**2
    elif space == "H4":
        w = 1.0 + x2**4
    elif space == "Hminus2":
        w = 1.0 / (1.0 + x2**2)
    else:
        raise ValueError(f"unknown space {space!r}")
    return _freeze(w)


class PadPlan:
    """Index bookkeeping for 3/2-rule zero padding of spectra.

    ``embed`` drops Nyquist planes, so padded data are strictly band
    limited; ``restrict`` leaves the Nyquist planes of the target grid
    zero, which matches the derivative-multiplier convention.
    """

    def __init__(self, grid: GridSpec, numerator: int = 3, denominator: int = 2):
        n = grid.points_per_axis
        np_ = (n * numerator) // denominator
        if np_ * denominator != n * numerator:
            raise ValueError("padded size must be integral")
        self.grid = grid
        self.padded_shape = (np_,) * grid.dim
        self.padded_size = np_**grid.dim
        half = n // 2
        axis_blocks = [
            (slice(0, half), slice(0, half)),
            (slice(np_ - half + 1, np_), slice(half + 1, n)),
        ]
        self._blocks = [
            tuple(zip(*combo))
            for combo in itertools.product(axis_blocks, repeat=grid.dim)
        ]

    def embed(self, spec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.padded_shape, dtype=complex)
        for dst, src in self._blocks:
            out[dst] = spec[src]
        return out

    def restrict(self, spec_pad: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=complex)
        for dst, src in self._blocks:
            out[src] = spec_pad[dst]
        return out

    def to_values(self, spec: np.ndarray) -> np.ndarray:
        return ifftn(self.embed(spec)).real * self.padded_size

    def from_values(self, vals: np.ndarray) -> np.ndarray:
        return self.restrict(fftn(vals)) * (1.0 / self.padded_size)


@lru_cache(maxsize=None)
def pad_plan(grid: GridSpec) -> PadPlan:
    return PadPlan(grid)


class ScalarField:
    """Real periodic scalar field with dual nodal/spectral representation."""

    __slots__ = ("grid", "_values", "_spectrum")

    def __init__(self, grid: GridSpec, *, values=None, spectrum=None):
        if values is None and spectrum is None:
            raise ValueError("need values or spectrum")
        self.grid = grid
        self._values = None
        self._spectrum = None
        if values is not None:
            v = np.array(values, dtype=float)
            if v.shape != grid.shape:
                raise GridMismatch(f"values shape {v.shape} != grid shape {grid.shape}")
            self._values = _freeze(v)
        if spectrum is not None:
            c = np.array(spectrum, dtype=complex)
            if c.shape != grid.shape:
                raise GridMismatch(f"spectrum shape {c.shape} != grid shape {grid.shape}")
            self._spectrum = _freeze(c)

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "ScalarField":
        return cls(grid, values=values)

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spectrum) -> "ScalarField":
        return cls(grid, spectrum=spectrum)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, values=np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, values=np.full(grid.shape, float(c)))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = ifftn(self._spectrum).real * self.grid.size
            self._values = _freeze(np.ascontiguousarray(v))
        return self._values

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = _freeze(fftn(self._values) * (1.0 / self.grid.size))
        return self._spectrum

    def mean(self) -> float:
        if self._spectrum is not None:
            return float(self._spectrum[(0,) * self.grid.dim].real)
        return float(self._values.mean())

    def norm(self, space: str = "L2") -> float:
        return sobolev_norm(self, space)

    def _binop(self, other: "ScalarField", f) -> "ScalarField":
        if not isinstance(other, ScalarField):
            return NotImplemented
        if self.grid != other.grid:
            raise GridMismatch("fields on different grids")
        if (
            self._spectrum is not None
            and other._spectrum is not None
            and (self._values is None or other._values is None)
        ):
            return ScalarField(self.grid, spectrum=f(self._spectrum, other._spectrum))
        return ScalarField(self.grid, values=f(self.values, other.values))

    def __add__(self, other):
        return self._binop(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binop(other, lambda a, b: a - b)

    def __neg__(self):
        if self._spectrum is not None and self._values is None:
            return ScalarField(self.grid, spectrum=-self._spectrum)
        return ScalarField(self.grid, values=-self.values)

    def __mul__(self, c):
        if isinstance(c, (int, float, np.floating)):
            if self._spectrum is not None and self._values is None:
                return ScalarField(self.grid, spectrum=self._spectrum * c)
            return ScalarField(self.grid, values=self.values * c)
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"ScalarField(dim={self.grid.dim}, n={self.grid.points_per_axis})"


class MatrixField:
    """Symmetric d x d matrix of periodic scalar fields.

    Entry (i, j) and entry (j, i) are the same ``ScalarField`` object, so
    the symmetry holds exactly by storage.
    """

    __slots__ = ("grid", "dim", "_entries")

    def __init__(self, grid: GridSpec, entries: dict):
        self.grid = grid
        self.dim = grid.dim
        self._entries = {}
        for i in range(self.dim):
            for j in range(i, self.dim):
                e = entries[(i, j)]
                if e.grid != grid:
                    raise GridMismatch("matrix entry on a different grid")
                self._entries[(i, j)] = e

    @classmethod
    def zeros(cls, grid: GridSpec) -> "MatrixField":
        z = ScalarField.zeros(grid)
        return cls(grid, {(i, j): z for i in range(grid.dim) for j in range(i, grid.dim)})

    def entry(self, i: int, j: int) -> ScalarField:
        return self._entries[(min(i, j), max(i, j))]

    def entries_upper(self) -> Iterator[tuple[int, int, ScalarField]]:
        for (i, j), e in self._entries.items():
            yield i, j, e

    def values_stack(self) -> np.ndarray:
        """Full (d, d, *grid) nodal array (both triangles populated)."""
        d = self.dim
        out = np.empty((d, d) + self.grid.shape)
        for i in range(d):
            for j in range(d):
                out[i, j] = self.entry(i, j).values
        return out

    def l2_norm(self) -> float:
        s = 0.0
        for i, j, e in self.entries_upper():
            w = 1.0 if i == j else 2.0
            s += w * sobolev_norm(e, "L2") ** 2
        return float(np.sqrt(s))

    def _binop(self, other, f):
        if self.grid != other.grid:
            raise GridMismatch("matrix fields on different grids")
        return MatrixField(
            self.grid,
            {(i, j): f(e, other.entry(i, j)) for i, j, e in self.entries_upper()},
        )

    def __add__(self, other):
        return self._binop(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binop(other, lambda a, b: a - b)

    def __mul__(self, c):
        return MatrixField(self.grid, {(i, j): e * c for i, j, e in self.entries_upper()})

    __rmul__ = __mul__


def apply_D(u: ScalarField) -> MatrixField:
    """Hessian of a scalar field, computed spectrally."""
    xi = xi_axes(u.grid)
    c = u.spectrum
    entries = {}
    for i in range(u.grid.dim):
        for j in range(i, u.grid.dim):
            entries[(i, j)] = ScalarField(u.grid, spectrum=-(xi[i] * xi[j]) * c)
    return MatrixField(u.grid, entries)


def apply_Dstar(eta: MatrixField) -> ScalarField:
    """Double divergence sum_ij d_i d_j eta_ij of a symmetric matrix field."""
    xi = xi_axes(eta.grid)
    acc = np.zeros(eta.grid.shape, dtype=complex)
    for i, j, e in eta.entries_upper():
        w = 1.0 if i == j else 2.0
        acc += (-w) * (xi[i] * xi[j]) * e.spectrum
    return ScalarField(eta.grid, spectrum=acc)


def derive(u: ScalarField, orders: Sequence[int]) -> ScalarField:
    """Mixed partial derivative with `orders[j]` derivatives along axis j."""
    if len(orders) != u.grid.dim:
        raise ValueError("orders must have one entry per axis")
    xi = xi_axes(u.grid)
    mult = np.ones(u.grid.shape, dtype=complex)
    for j, p in enumerate(orders):
        if p:
            mult = mult * (1j * xi[j]) ** int(p)
    return ScalarField(u.grid, spectrum=u.spectrum * mult)


def gradient(u: ScalarField) -> list[ScalarField]:
    xi = xi_axes(u.grid)
    return [ScalarField(u.grid, spectrum=1j * xi[j] * u.spectrum) for j in range(u.grid.dim)]


def sobolev_norm(u: ScalarField, space: str = "L2") -> float:
    """Spectral Sobolev norm; ``space`` is one of L2, H1, H2, H4, Hminus2.

    The H2 weight is 1 + |xi|^4 (the squared-Hessian multiplier), H4 uses
    1 + |xi|^8, and Hminus2 is the dual weight 1 / (1 + |xi|^4).
    """
    w = _norm_weight(u.grid, space)
    c = u.spectrum
    return float(np.sqrt(np.sum(w * (c.real**2 + c.imag**2))))


def seminorm(u: ScalarField, order: int) -> float:
    """Homogeneous seminorm |nabla^p u| in L2 (sum over all multi-indices)."""
    x2 = xi_squared(u.grid)
    c = u.spectrum
    return float(np.sqrt(np.sum(x2**order * (c.real**2 + c.imag**2))))


def inner_product(u: ScalarField, v: ScalarField) -> float:
    """Exact L2 inner product of the trigonometric interpolants."""
    if u.grid != v.grid:
        raise GridMismatch("fields on different grids")
    return float(np.real(np.sum(u.spectrum * np.conj(v.spectrum))))


def matrix_inner_product(a: MatrixField, b: MatrixField) -> float:
    """L2 inner product of matrix fields, sum over all d^2 entries."""
    s = 0.0
    for i, j, e in a.entries_upper():
        w = 1.0 if i == j else 2.0
        s += w * inner_product(e, b.entry(i, j))
    return s


def inv_laplacian_power(u: ScalarField, p: int) -> ScalarField:
    """Apply the inverse Laplacian to the p-th power on a mean-zero field.

    The zero mode (and the degenerate Nyquist planes, which the derivative
    convention removes) are annihilated.  Raises ``NonZeroMean`` when the
    zero-frequency coefficient exceeds 1e-10 times the field's L2 norm.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    c = u.spectrum
    l2 = sobolev_norm(u, "L2")
    mean = abs(c[(0,) * u.grid.dim])
    if mean > 1e-10 * max(l2, 1e-300):
        raise NonZeroMean(f"zero-frequency coefficient {mean:.3e} vs norm {l2:.3e}")
    x2 = xi_squared(u.grid)
    mult = np.zeros(u.grid.shape)
    nz = x2 > 0.0
    mult[nz] = (-1.0) ** p / x2[nz] ** p
    return ScalarField(u.grid, spectrum=c * mult)


def pointwise_product(u: ScalarField, v: ScalarField, dealias: bool = True) -> ScalarField:
    """Nodewise product; with ``dealias`` the 3/2 rule makes the retained
    band exact for full-band factors."""
    if u.grid != v.grid:
        raise GridMismatch("fields on different grids")
    if not dealias:
        return ScalarField(u.grid, values=u.values * v.values)
    plan = pad_plan(u.grid)
    w = plan.to_values(u.spectrum) * plan.to_values(v.spectrum)
    return ScalarField(u.grid, spectrum=plan.from_values(w))


def random_trig_field(
    grid: GridSpec,
    band: int,
    rng: np.random.Generator,
    mean: float | None = None,
    normalize: bool = False,
) -> ScalarField:
    """Random real trigonometric polynomial with |k_j| <= band on every axis."""
    n = grid.points_per_axis
    if band >= n // 2:
        raise ValueError("band must be below the Nyquist frequency")
    v = rng.standard_normal(grid.shape)
    c = fftn(v) * (1.0 / grid.size)
    mask = np.ones(grid.shape, dtype=bool)
    for j in range(grid.dim):
        kj = _axis_view(_int_freqs(n), j, grid.dim)
        mask &= np.abs(kj) <= band
    c = np.where(mask, c, 0.0)
    if mean is not None:
        c[(0,) * grid.dim] = mean
    f = ScalarField(grid, spectrum=c)
    if normalize:
        nrm = sobolev_norm(f, "L2")
        if nrm > 0:
            f = f * (1.0 / nrm)
    return f
