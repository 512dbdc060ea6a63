"""Discretized conformal charts and finite-difference primitives.

Two chart kinds are supported:

* ``torus``: the rectangular torus with periods 1 and ``i*rho``, sampled on a
  uniform ``ny x nx`` grid with periodic wrap.
* ``disk``: the square ``[-L, L]^2`` with a circular mask of radius ``L``.
  Nodes of the mask with a neighbour outside it form the boundary ring where
  Dirichlet data lives; all other mask nodes are interior.

Fields are plain ``numpy`` arrays of shape ``(ny, nx)`` (y-outer, x-inner).
Difference operators return ``nan`` wherever the stencil is not available,
which on a disk means every node outside the interior.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

TORUS = "torus"
DISK = "disk"
MIN_NODES = 16
CORE_FRACTION = 0.75


class ContractViolation(ValueError):
    """A field does not satisfy the preconditions of an operator."""


class OneForm(NamedTuple):
    """Real 1-form ``x dx + y dy`` sampled on a chart."""

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Chart:
    kind: str
    nx: int
    ny: int
    rho: float = 1.0
    half_width: float = 1.0

    def __post_init__(self):
        if self.kind not in (TORUS, DISK):
            raise ContractViolation(f"unknown chart kind {self.kind!r}")
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise ContractViolation(
                f"need at least {MIN_NODES} nodes per axis, got {self.nx}x{self.ny}")
        if self.rho <= 0 or self.half_width <= 0:
            raise ContractViolation("chart dimensions must be positive")

    @classmethod
    def torus(cls, n: int, ny: int | None = None, rho: float = 1.0) -> Chart:
        return cls(TORUS, n, n if ny is None else ny, rho=rho)

    @classmethod
    def disk(cls, n: int, ny: int | None = None, half_width: float = 1.0) -> Chart:
        return cls(DISK, n, n if ny is None else ny, half_width=half_width)

    @property
    def periodic(self) -> bool:
        return self.kind == TORUS

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def hx(self) -> float:
        if self.periodic:
            return 1.0 / self.nx
        return 2.0 * self.half_width / (self.nx - 1)

    @property
    def hy(self) -> float:
        if self.periodic:
            return self.rho / self.ny
        return 2.0 * self.half_width / (self.ny - 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        if self.periodic:
            x1 = np.arange(self.nx) * self.hx
            y1 = np.arange(self.ny) * self.hy
        else:
            x1 = -self.half_width + np.arange(self.nx) * self.hx
            y1 = -self.half_width + np.arange(self.ny) * self.hy
        x, y = np.meshgrid(x1, y1)
        x.flags.writeable = False
        y.flags.writeable = False
        return x, y

    @property
    def x(self) -> np.ndarray:
        return self.coords[0]

    @property
    def y(self) -> np.ndarray:
        return self.coords[1]

    @property
    def z(self) -> np.ndarray:
        return self.x + 1j * self.y

    @cached_property
    def mask(self) -> np.ndarray:
        if self.periodic:
            m = np.ones(self.shape, dtype=bool)
        else:
            # small slack so the axis endpoints (+-L, 0) belong to the disk
            r2 = self.x**2 + self.y**2
            m = r2 <= self.half_width**2 * (1 + 1e-12)
        m.flags.writeable = False
        return m

    @cached_property
    def interior(self) -> np.ndarray:
        if self.periodic:
            return self.mask
        m = self.mask
        inner = m.copy()
        inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
        inner[1:-1, 1:-1] &= m[2:, 1:-1] & m[:-2, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2]
        inner.flags.writeable = False
        return inner

    @property
    def ring(self) -> np.ndarray:
        return self.mask & ~self.interior

    @cached_property
    def core(self) -> np.ndarray:
        """Interior nodes clear of the staircase boundary layer (``r <= 3L/4`` on a disk).

        Dirichlet data sampled on a staircase ring leaves an O(h) layer one
        cell thick; refinement studies measure on this region instead.
        """
        if self.periodic:
            return self.mask
        c = self.interior & (self.x**2 + self.y**2 <= (CORE_FRACTION * self.half_width) ** 2)
        c.flags.writeable = False
        return c

    def describe(self) -> dict:
        d = {"kind": self.kind, "nx": self.nx, "ny": self.ny}
        if self.periodic:
            d["rho"] = float(self.rho)
        else:
            d["L"] = float(self.half_width)
        return d

    # -- contract checks -------------------------------------------------

    def check(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise ContractViolation(
                f"{name} has shape {f.shape}, chart expects {self.shape}")
        if not np.all(np.isfinite(f[self.mask])):
            raise ContractViolation(f"{name} is not finite on every chart node")
        return f

    def _region(self, where) -> np.ndarray:
        if where is None:
            return self.mask
        if isinstance(where, str):
            return {"mask": self.mask, "interior": self.interior, "ring": self.ring,
                    "core": self.core}[where]
        where = np.asarray(where, dtype=bool)
        if where.shape != self.shape:
            raise ContractViolation("region mask does not match chart")
        return where

    def _finish(self, out: np.ndarray) -> np.ndarray:
        if not self.periodic:
            out[~self.interior] = np.nan
        return out

    def _shift(self, f: np.ndarray, dj: int, di: int) -> np.ndarray:
        # value at node (j + dj, i + di); wrap is harmless off the interior
        return np.roll(f, (-dj, -di), axis=(0, 1))

    # -- difference operators --------------------------------------------

    def dx(self, f) -> np.ndarray:
        """Centered first difference along x."""
        f = self.check(f)
        return self._finish((self._shift(f, 0, 1) - self._shift(f, 0, -1)) / (2 * self.hx))

    def dy(self, f) -> np.ndarray:
        """Centered first difference along y."""
        f = self.check(f)
        return self._finish((self._shift(f, 1, 0) - self._shift(f, -1, 0)) / (2 * self.hy))

    def laplacian(self, f) -> np.ndarray:
        """Five-point Laplacian; periodic on a torus, interior-only on a disk."""
        f = self.check(f)
        ihx2 = 1.0 / self.hx**2
        ihy2 = 1.0 / self.hy**2
        out = ((self._shift(f, 0, 1) + self._shift(f, 0, -1)) * ihx2
               + (self._shift(f, 1, 0) + self._shift(f, -1, 0)) * ihy2
               - 2.0 * f * (ihx2 + ihy2))
        return self._finish(out)

    def wirtinger(self, f) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(df/dz, df/dzbar)`` from centered differences."""
        fx = self.dx(f)
        fy = self.dy(f)
        return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)

    def d_oneform(self, tau: OneForm) -> np.ndarray:
        """Exterior derivative, as the coefficient of ``dx ^ dy``."""
        return self.dx(tau.y) - self.dy(tau.x)

    # -- quadrature and norms --------------------------------------------

    def _values(self, f, where) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise ContractViolation(
                f"field has shape {f.shape}, chart expects {self.shape}")
        vals = f[self._region(where)]
        if not np.all(np.isfinite(vals)):
            raise ContractViolation("field is not finite on the requested region")
        return vals

    def integrate(self, f, where=None) -> float:
        return float(np.sum(self._values(f, where)) * self.hx * self.hy)

    def sup_norm(self, f, where=None) -> float:
        vals = self._values(f, where)
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def l2_norm(self, f, where=None) -> float:
        vals = self._values(f, where)
        return float(np.sqrt(np.sum(np.abs(vals) ** 2) * self.hx * self.hy))
