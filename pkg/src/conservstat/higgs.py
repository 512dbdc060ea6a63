"""Pointwise algebra of the cyclic Higgs bundle ``K^-1 + O + K``.

The frame is ``(d_z, 1, dz)``; a real tangent vector ``v = (vx, vy)`` is
represented by its ``d_z`` coefficient ``vx + i vy``.  Higgs fields are given
by their ``dz`` coefficient, adjoints by their ``dzbar`` coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensors import (ConformalMetric, Connection, Sym3Tensor, christoffel,
                      embed_cubic, sym_tau_g)
from .chart import OneForm


@dataclass(frozen=True)
class HiggsPointData:
    w: complex
    q: complex
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"Hermitian coefficient must be positive, got h={self.h}")


def build_higgs(p: HiggsPointData) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Phi, A)`` with ``Phi = w I + A``."""
    A = np.zeros((3, 3), dtype=complex)
    A[0, 1] = A[1, 2] = 1.0
    A[2, 0] = p.q
    return p.w * np.eye(3) + A, A


def hermitian_frame(p: HiggsPointData) -> np.ndarray:
    return np.diag([p.h, 1.0, 1.0 / p.h]).astype(complex)


def metric_adjoint(M: np.ndarray, p: HiggsPointData) -> np.ndarray:
    """``H^-1 M^dagger H`` for ``H = diag(h, 1, 1/h)``."""
    H = hermitian_frame(p)
    return np.linalg.inv(H) @ M.conj().T @ H


def adjoint_A(p: HiggsPointData) -> np.ndarray:
    return metric_adjoint(build_higgs(p)[1], p)


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def omega_form(w) -> OneForm:
    """Real 1-form ``Omega = w dz + conj(w dz)``."""
    w = np.asarray(w, dtype=complex)
    return OneForm(2 * w.real, -2 * w.imag)


def build_C_from_moduli(w, q, g: ConformalMetric) -> Sym3Tensor:
    """Amari-Chentsov tensor ``2 sym(Omega x g) + Q + conj(Q)``."""
    shape = g.chart.shape
    w = np.broadcast_to(np.asarray(w, dtype=complex), shape)
    q = np.broadcast_to(np.asarray(q, dtype=complex), shape)
    return 2 * sym_tau_g(omega_form(w), g) + embed_cubic(q)


def build_nabla(C: Sym3Tensor, g: ConformalMetric) -> Connection:
    """Connection with ``nabla g = -C``: Levi-Civita plus ``C/2`` with its last slot raised."""
    base = christoffel(g).coeffs
    half_inv = 0.5 * np.exp(-g.u)
    c = C.full()
    out = base.copy()
    for k in range(2):
        for p, (i, j) in enumerate(((0, 0), (0, 1), (1, 1))):
            out[k, p] += half_inv * c[i, j, k]
    return Connection(out)


def nabla_metric(conn: Connection, g: ConformalMetric) -> np.ndarray:
    """``(nabla_i g)_{jk}`` indexed ``[i, j, k, ...]``."""
    chart = g.chart
    e = g.factor
    de = np.stack([chart.dx(e), chart.dy(e)])
    gam = conn.full()
    out = np.zeros((2, 2, 2) + chart.shape)
    for j in range(2):
        out[:, j, j] = de
    # g_mk = e delta_mk, so each contraction just relabels an index
    out -= e * gam.transpose(1, 2, 0, *range(3, gam.ndim))      # Gamma^k_ij
    out -= e * gam.transpose(1, 0, 2, *range(3, gam.ndim))      # Gamma^j_ik
    return out


class ConnectionCheck(NamedTuple):
    torsion_sup: float
    metric_residual_sup: float
    symmetry_sup: float


def _sup(a: np.ndarray, region: np.ndarray) -> float:
    vals = np.abs(a[..., region])
    return float(vals.max()) if vals.size else 0.0


def check_statistical_connection(conn: Connection, C: Sym3Tensor, g: ConformalMetric,
                                 where=None) -> ConnectionCheck:
    region = g.chart._region("interior" if where is None else where)
    ng = nabla_metric(conn, g)
    resid = ng + C.full()
    sym = max(_sup(ng - ng.transpose(1, 0, 2, *range(3, ng.ndim)), region),
              _sup(ng - ng.transpose(0, 2, 1, *range(3, ng.ndim)), region))
    return ConnectionCheck(_sup(conn.torsion(), region), _sup(resid, region), sym)


def higgs_route_nabla(p: HiggsPointData, du, v, w) -> np.ndarray:
    """Evaluate ``pi(D_v D_w xi) + 2 g(v, w) Re(omega)^#`` at one point.

    ``du`` is the gradient of ``u = log h``; ``v`` and ``w`` are real
    coordinate vectors treated as constant vector fields.
    """
    zv = complex(v[0], v[1])
    zw = complex(w[0], w[1])
    h = p.h
    Phi, _ = build_higgs(p)
    Phi_star = metric_adjoint(Phi, p)

    omega_w = 2 * (p.w * zw).real
    # D_w xi = (w, Omega(w), w_flat); the K-component of w_flat is h * conj(zw)
    Dw_xi = np.array([zw, omega_w, h * np.conj(zw)])
    # Chern connection of (T_X, h): nabla_v d_z = v^{1,0} d_z(log h) d_z
    chern = zv * zw * 0.5 * complex(du[0], -du[1])
    first = chern + zv * (Phi @ Dw_xi)[0] + np.conj(zv) * (Phi_star @ Dw_xi)[0]

    g_vw = h * (zv * np.conj(zw)).real
    re_omega_sharp = np.conj(p.w) / h
    out = first + 2 * g_vw * re_omega_sharp
    return np.array([out.real, out.imag])
