"""Symmetric tensor algebra and Riemannian operators for conformal metrics.

Every metric here has the form ``g = exp(u) (dx^2 + dy^2)``.  Index 0 is x,
index 1 is y.  Component arrays carry the tensor indices first and the grid
axes last, e.g. a full (0,3) tensor is an array of shape ``(2, 2, 2, ny, nx)``.

Conventions:

* ``|C|^2`` contracts all three slots with the inverse metric.
* The scalar curvature is ``S = 2K = -exp(-u) lap(u)``.
* ``div C`` contracts the derivative index with the first slot of ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .chart import Chart, ContractViolation, OneForm

# position of the symmetric pair (i, j) in the packed (xx, xy, yy) layout
PAIR = ((0, 1), (1, 2))
PAIRS = ((0, 0), (0, 1), (1, 1))


class NotTracelessError(ValueError):
    pass


@dataclass(frozen=True)
class ConformalMetric:
    chart: Chart
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", self.chart.check(np.asarray(self.u, dtype=float), "u"))

    @classmethod
    def flat(cls, chart: Chart) -> ConformalMetric:
        return cls(chart, np.zeros(chart.shape))

    @cached_property
    def factor(self) -> np.ndarray:
        """``exp(u)``: both the metric coefficient and the Hermitian ``h``."""
        return np.exp(self.u)

    @cached_property
    def grad_u(self) -> tuple[np.ndarray, np.ndarray]:
        return self.chart.dx(self.u), self.chart.dy(self.u)

    def components(self) -> np.ndarray:
        g = np.zeros((2, 2) + self.chart.shape)
        g[0, 0] = g[1, 1] = self.factor
        return g


@dataclass(frozen=True)
class Sym3Tensor:
    """Totally symmetric (0,3) tensor stored by its four independent components."""

    xxx: np.ndarray
    xxy: np.ndarray
    xyy: np.ndarray
    yyy: np.ndarray

    @classmethod
    def zeros(cls, chart: Chart) -> Sym3Tensor:
        z = np.zeros(chart.shape)
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_full(cls, c: np.ndarray) -> Sym3Tensor:
        return cls(c[0, 0, 0], c[0, 0, 1], c[0, 1, 1], c[1, 1, 1])

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.xxx, self.xxy, self.xyy, self.yyy)

    def full(self) -> np.ndarray:
        comps = [np.asarray(c, dtype=float) for c in self.components()]
        shape = np.broadcast_shapes(*(c.shape for c in comps))
        out = np.empty((2, 2, 2) + shape)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    out[i, j, k] = comps[i + j + k]
        return out

    def __add__(self, other: Sym3Tensor) -> Sym3Tensor:
        return Sym3Tensor(*(a + b for a, b in zip(self.components(), other.components())))

    def __sub__(self, other: Sym3Tensor) -> Sym3Tensor:
        return Sym3Tensor(*(a - b for a, b in zip(self.components(), other.components())))

    def __mul__(self, s) -> Sym3Tensor:
        return Sym3Tensor(*(s * a for a in self.components()))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Tensor2:
    """General (0,2) tensor, components shaped ``(2, 2, ny, nx)``."""

    comps: np.ndarray

    @property
    def xx(self):
        return self.comps[0, 0]

    @property
    def xy(self):
        return self.comps[0, 1]

    @property
    def yx(self):
        return self.comps[1, 0]

    @property
    def yy(self):
        return self.comps[1, 1]

    def symmetric(self) -> Tensor2:
        return Tensor2(0.5 * (self.comps + self.comps.swapaxes(0, 1)))

    def antisymmetric(self) -> np.ndarray:
        """The ``xy`` entry of the antisymmetric part."""
        return 0.5 * (self.comps[0, 1] - self.comps[1, 0])

    def __sub__(self, other: Tensor2) -> Tensor2:
        return Tensor2(self.comps - other.comps)


@dataclass(frozen=True)
class Connection:
    """Torsion-free connection coefficients ``Gamma^k_ij``.

    Stored packed as ``coeffs[k, p]`` with ``p`` indexing ``(xx, xy, yy)``, so
    symmetry in the lower pair holds by construction.
    """

    coeffs: np.ndarray

    def full(self) -> np.ndarray:
        c = self.coeffs
        out = np.empty((2, 2, 2) + c.shape[2:])
        for i in range(2):
            for j in range(2):
                out[:, i, j] = c[:, PAIR[i][j]]
        return out

    def __call__(self, k: int, i: int, j: int) -> np.ndarray:
        return self.coeffs[k, PAIR[i][j]]

    def torsion(self) -> np.ndarray:
        g = self.full()
        return g - g.swapaxes(1, 2)


def _grad(chart: Chart, f: np.ndarray) -> np.ndarray:
    return np.stack([chart.dx(f), chart.dy(f)])


def christoffel(g: ConformalMetric) -> Connection:
    """Levi-Civita coefficients of ``exp(u) (dx^2 + dy^2)``."""
    ux, uy = g.grad_u
    c = np.empty((2, 3) + g.chart.shape)
    c[0] = (0.5 * ux, 0.5 * uy, -0.5 * ux)
    c[1] = (-0.5 * uy, 0.5 * ux, 0.5 * uy)
    return Connection(c)


def sym_tau_g(tau: OneForm, g: ConformalMetric) -> Sym3Tensor:
    """``tau(a) g(b,c) + tau(b) g(c,a) + tau(c) g(a,b)``."""
    e = g.factor
    return Sym3Tensor(3 * tau.x * e, tau.y * e, tau.x * e, 3 * tau.y * e)


def trace3(C: Sym3Tensor, g: ConformalMetric) -> OneForm:
    """Chebyshev form: trace of ``C`` over its last two slots."""
    inv = np.exp(-g.u)
    return OneForm(inv * (C.xxx + C.xyy), inv * (C.xxy + C.yyy))


def decompose3(C: Sym3Tensor, g: ConformalMetric) -> tuple[Sym3Tensor, OneForm]:
    """Split ``C`` into its traceless part and Chebyshev form (n = 2)."""
    tau = trace3(C, g)
    return C - 0.25 * sym_tau_g(tau, g), tau


def covariant_derivative3(C: Sym3Tensor, g: ConformalMetric) -> np.ndarray:
    """``(nabla_l C)_{ijk}`` as an array indexed ``[l, i, j, k, ...]``."""
    chart = g.chart
    c = C.full()
    gam = christoffel(g).full()
    dc = np.empty((2,) + c.shape)
    for i in range(2):
        for j in range(i, 2):
            for k in range(j, 2):
                d = _grad(chart, c[i, j, k])
                for (a, b, e) in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                    dc[:, a, b, e] = d
    return (dc
            - np.einsum("mli...,mjk...->lijk...", gam, c)
            - np.einsum("mlj...,imk...->lijk...", gam, c)
            - np.einsum("mlk...,ijm...->lijk...", gam, c))


def divergence3(C: Sym3Tensor, g: ConformalMetric) -> Tensor2:
    """``(div C)_{jk} = g^{il} (nabla_l C)_{ijk}``."""
    nc = covariant_derivative3(C, g)
    return Tensor2(np.exp(-g.u) * (nc[0, 0] + nc[1, 1]))


def covariant_derivative_oneform(tau: OneForm, g: ConformalMetric) -> Tensor2:
    """``(nabla tau)_{ij} = d_i tau_j - Gamma^k_ij tau_k`` (not symmetrized)."""
    chart = g.chart
    t = np.stack([tau.x, tau.y])
    d = np.stack([_grad(chart, tau.x), _grad(chart, tau.y)], axis=1)
    gam = christoffel(g).full()
    return Tensor2(d - np.einsum("kij...,k...->ij...", gam, t))


def covariant_derivative_split(tau: OneForm, g: ConformalMetric) -> tuple[Tensor2, np.ndarray]:
    """Symmetric part of ``nabla tau`` and its antisymmetric residual ``d tau / 2``."""
    nt = covariant_derivative_oneform(tau, g)
    return nt.symmetric(), nt.antisymmetric()


def scalar_curvature(g: ConformalMetric) -> np.ndarray:
    return -np.exp(-g.u) * g.chart.laplacian(g.u)


def norm_sym3(C: Sym3Tensor, g: ConformalMetric) -> np.ndarray:
    """Squared norm with all three slots contracted by ``g^{-1}``."""
    s = C.xxx**2 + 3 * C.xxy**2 + 3 * C.xyy**2 + C.yyy**2
    return np.exp(-3 * g.u) * s


def embed_cubic(q) -> Sym3Tensor:
    """Real tensor ``Q + conj(Q)`` for ``Q = q dz^3``."""
    q = np.asarray(q, dtype=complex)
    a, b = 2 * q.real, 2 * q.imag
    return Sym3Tensor(a, -b, -a, b)


def extract_cubic(C0: Sym3Tensor, g: ConformalMetric | None = None,
                  rtol: float = 1e-10) -> np.ndarray:
    """Coefficient ``q`` of the (3,0) part, i.e. ``C0(dz*, dz*, dz*)`` with ``dz* = (d_x - i d_y)/2``."""
    if g is not None:
        tr = trace3(C0, g)
        t = np.exp(g.u) * np.hypot(tr.x, tr.y)
        scale = max(np.nanmax(np.abs(np.stack(C0.components()))), np.finfo(float).tiny)
        trace_norm = float(np.nanmax(t)) if t.size else 0.0
        if trace_norm > rtol * scale:
            raise NotTracelessError(
                f"tensor is not traceless: sup |trace| = {trace_norm:.3e} "
                f"exceeds {rtol:.0e} x component scale {scale:.3e}")
    return ((C0.xxx - 3 * C0.xyy) + 1j * (C0.yyy - 3 * C0.xxy)) / 8


def extract_abelian(tau: OneForm) -> np.ndarray:
    """Coefficient ``w`` with ``tau = 16 Re(w dz)``."""
    return (tau.x - 1j * tau.y) / 16


def field_equation_residual(C: Sym3Tensor, g: ConformalMetric) -> Tensor2:
    """``nabla(tr C) - 2 div C``; vanishes iff ``(C, g)`` is conservative."""
    return covariant_derivative_oneform(trace3(C, g), g) - Tensor2(2 * divergence3(C, g).comps)


def divergence1(tau: OneForm, g: ConformalMetric) -> np.ndarray:
    nt = covariant_derivative_oneform(tau, g)
    return np.exp(-g.u) * (nt.xx + nt.yy)


def harmonicity_residual(tau: OneForm, g: ConformalMetric) -> tuple[np.ndarray, np.ndarray]:
    """``(d tau, div tau)``; both vanish for a harmonic 1-form."""
    return g.chart.d_oneform(tau), divergence1(tau, g)


def normalization_residual(C0: Sym3Tensor, g: ConformalMetric) -> np.ndarray:
    """``|C0|^2 - 4 S_g - 16``."""
    return norm_sym3(C0, g) - 4 * scalar_curvature(g) - 16


def check_same_chart(g: ConformalMetric, *tensors: Sym3Tensor) -> None:
    for t in tensors:
        for c in t.components():
            if np.shape(c) != g.chart.shape:
                raise ContractViolation("tensor component does not live on the metric's chart")
