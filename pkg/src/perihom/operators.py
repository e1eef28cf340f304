"""Matrix-free application of div div (a(y) grad^2 . ) and friends.

The core object is ``TensorApply``: the nodewise action eta -> a(y) eta on
symmetric matrix fields given by their entry spectra, with 3/2-rule
dealiasing.  Three paths are used, fastest first:

* constant tensor: a pure linear combination of entry spectra (exact);
* profile times constant base: one padded scalar multiply per output entry;
* general tensor field: a padded einsum against the full component array.

``DivDivForm`` composes Hessian, ``TensorApply`` and double divergence into
the self-adjoint operator used by the cell and torus solvers.
"""

from __future__ import annotations

import numpy as np

from .coefficients import Tensor4Field
from .spectral import GridSpec, pad_plan, xi_axes, xi_squared, fftn, ifftn


def _upper_pairs(d: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(d) for j in range(i, d)]


class TensorApply:
    """Nodewise eta -> a eta on symmetric matrix entry spectra."""

    def __init__(self, a: Tensor4Field, dealias: bool = True):
        self.a = a
        self.grid = a.grid
        self.dim = a.dim
        self.dealias = dealias
        self.pairs = _upper_pairs(a.dim)
        self._plan = pad_plan(a.grid) if dealias else None
        self._profile_nodal = None
        self._comps_nodal = None
        if a.const is None:
            if a.profile is not None:
                self._profile_nodal = (
                    self._plan.to_values(fftn(a.profile) / a.grid.size)
                    if dealias
                    else a.profile
                )
            else:
                shape = self._plan.padded_shape if dealias else a.grid.shape
                d = a.dim
                comps = np.empty((d, d, d, d) + shape)
                for i in range(d):
                    for j in range(d):
                        for s in range(d):
                            for t in range(d):
                                c = a.comps[i, j, s, t]
                                comps[i, j, s, t] = (
                                    self._plan.to_values(fftn(c) / a.grid.size)
                                    if dealias
                                    else c
                                )
                self._comps_nodal = comps

    def entry_spectra(self, eta: dict) -> dict:
        """Map {(i<=j): spectrum} of a symmetric eta to spectra of a eta."""
        d = self.dim
        if self.a.const is not None:
            comps = self.a.const.comps
            out = {}
            for s, t in self.pairs:
                acc = np.zeros(self.grid.shape, dtype=complex)
                for i in range(d):
                    for j in range(d):
                        acc += comps[s, t, i, j] * eta[(min(i, j), max(i, j))]
                out[(s, t)] = acc
            return out

        if self._profile_nodal is not None:
            base = self.a.base.comps
            out = {}
            for s, t in self.pairs:
                acc = np.zeros(self.grid.shape, dtype=complex)
                for i in range(d):
                    for j in range(d):
                        acc += base[s, t, i, j] * eta[(min(i, j), max(i, j))]
                out[(s, t)] = self._scalar_mult(acc)
            return out

        # general path: build the full nodal Hessian stack on the working grid
        if self.dealias:
            nodal = {
                key: self._plan.to_values(spec) for key, spec in eta.items()
            }
            shape = self._plan.padded_shape
        else:
            nodal = {
                key: ifftn(spec).real * self.grid.size for key, spec in eta.items()
            }
            shape = self.grid.shape
        stack = np.empty((d, d) + shape)
        for i in range(d):
            for j in range(d):
                stack[i, j] = nodal[(min(i, j), max(i, j))]
        flux = np.einsum("stij...,ij...->st...", self._comps_nodal, stack)
        out = {}
        for s, t in self.pairs:
            if self.dealias:
                out[(s, t)] = self._plan.from_values(flux[s, t])
            else:
                out[(s, t)] = fftn(flux[s, t]) / self.grid.size
        return out

    def _scalar_mult(self, spec: np.ndarray) -> np.ndarray:
        if self.dealias:
            return self._plan.from_values(self._profile_nodal * self._plan.to_values(spec))
        vals = ifftn(spec).real * self.grid.size
        return fftn(self._profile_nodal * vals) / self.grid.size


class DivDivForm:
    """u -> div div (a grad^2 u) [+ u], matrix free, on one grid."""

    def __init__(self, a: Tensor4Field, dealias: bool = True):
        self.grid = a.grid
        self.dim = a.dim
        self.apply_a = TensorApply(a, dealias=dealias)
        self.pairs = self.apply_a.pairs
        self._xi = xi_axes(a.grid)

    def hessian_spectra(self, c: np.ndarray) -> dict:
        xi = self._xi
        return {
            (i, j): -(xi[i] * xi[j]) * c for i, j in self.pairs
        }

    def dstar_spectrum(self, eta: dict) -> np.ndarray:
        xi = self._xi
        acc = np.zeros(self.grid.shape, dtype=complex)
        for (s, t), spec in eta.items():
            w = 1.0 if s == t else 2.0
            acc += (-w) * (xi[s] * xi[t]) * spec
        return acc

    def apply_spectrum(self, c: np.ndarray, add_identity: bool = False) -> np.ndarray:
        out = self.dstar_spectrum(self.apply_a.entry_spectra(self.hessian_spectra(c)))
        if add_identity:
            out = out + c
        return out

    def apply_values(self, v: np.ndarray, add_identity: bool = False) -> np.ndarray:
        c = fftn(v) / self.grid.size
        out = self.apply_spectrum(c, add_identity=add_identity)
        return ifftn(out).real * self.grid.size


def inv_biharmonic_preconditioner(grid: GridSpec, shifted: bool):
    """Spectral preconditioner 1/|xi|^4 (cell) or 1/(1 + |xi|^4) (torus)."""
    x4 = xi_squared(grid) ** 2
    if shifted:
        mult = 1.0 / (1.0 + x4)
    else:
        mult = np.zeros(grid.shape)
        nz = x4 > 0
        mult[nz] = 1.0 / x4[nz]

    def apply(v: np.ndarray) -> np.ndarray:
        return ifftn(mult * fftn(v)).real

    return apply
