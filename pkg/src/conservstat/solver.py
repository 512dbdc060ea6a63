"""Damped Newton solver for the scalar Tzitzeica equation on a chart.

In conformal coordinates, with ``h = exp(u)`` and ``Q = q dz^3``, the equation
reads

    R(u) = lap(u) - 4 exp(u) + 4 |q|^2 exp(-2u) - f = 0,

where ``f`` is an optional forcing used for manufactured solutions.  The
constants make ``R = 0`` equivalent to ``|C0|^2 = 4 S_g + 16``:
``4 S_g + 16 - |C0|^2 = -4 exp(-u) R(u)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .chart import Chart, ContractViolation

log = logging.getLogger(__name__)

EPS0 = 1e-8
MAX_BACKTRACK_FAILURES = 10
STALL_WINDOW = 10


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    min_damping: float = 1.0 / 64
    linear_tol: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.min_damping <= self.damping:
            raise ValueError("min_damping must lie in (0, damping]")
        if not self.linear_tol > 0:
            raise ValueError("linear_tol must be positive")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    obstruction_detected: bool
    final_u: np.ndarray
    message: str = ""
    linear_iterations: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "obstruction_detected": self.obstruction_detected,
            "residual_history": [float(r) for r in self.residual_history],
            "linear_iterations": list(self.linear_iterations),
            "message": self.message,
        }


def _potential(u, q2):
    return 4 * np.exp(u) + 8 * q2 * np.exp(-2 * u)


def pde_residual(chart: Chart, u, q, f=None) -> np.ndarray:
    u = chart.check(u, "u")
    q2 = np.abs(np.broadcast_to(q, chart.shape)) ** 2
    r = chart.laplacian(u) - 4 * np.exp(u) + 4 * q2 * np.exp(-2 * u)
    if f is not None:
        r = r - f
    return r


def jacobian_apply(chart: Chart, u, q, delta) -> np.ndarray:
    """Linearization ``J(u)[delta] = lap(delta) - (4 e^u + 8 |q|^2 e^{-2u}) delta``."""
    q2 = np.abs(np.broadcast_to(q, chart.shape)) ** 2
    return chart.laplacian(delta) - _potential(u, q2) * delta


class _NegJacobian:
    """Matrix-free ``-J(u)`` acting on the unknown nodes of a chart."""

    def __init__(self, chart: Chart, u: np.ndarray, q2: np.ndarray):
        self.chart = chart
        self.unknown = chart.interior
        self.n = int(self.unknown.sum())
        self.pot = _potential(u, q2)[self.unknown]
        self._buf = np.zeros(chart.shape)
        diag = 2 / chart.hx**2 + 2 / chart.hy**2 + self.pot
        self.precond = LinearOperator((self.n, self.n), matvec=lambda r: r / diag, dtype=float)
        self.op = LinearOperator((self.n, self.n), matvec=self.matvec, dtype=float)

    def matvec(self, x):
        buf = self._buf
        buf[self.unknown] = np.ravel(x)
        # ring (and the exterior of a disk) carries zero Dirichlet data
        return -self.chart.laplacian(buf)[self.unknown] + self.pot * np.ravel(x)

    def solve(self, rhs: np.ndarray, rtol: float) -> tuple[np.ndarray, int]:
        count = [0]

        def tick(_):
            count[0] += 1

        x, info = cg(self.op, rhs, rtol=rtol, atol=0.0, maxiter=20 * self.n + 100,
                     M=self.precond, callback=tick)
        if info > 0:
            log.warning("CG stopped after %d iterations without reaching rtol=%g", info, rtol)
        return x, count[0]


def default_initial_guess(chart: Chart, q) -> float:
    q2 = np.abs(np.broadcast_to(q, chart.shape)) ** 2
    return float(np.log(np.mean(q2[chart.mask]) + EPS0) / 3)


def default_boundary(chart: Chart, q) -> np.ndarray:
    q2 = np.abs(np.broadcast_to(q, chart.shape)) ** 2
    return np.log(q2 + EPS0) / 3


def torus_obstructed(chart: Chart, q, f=None) -> bool:
    """Integral test for ``q == 0`` on a torus.

    Integrating ``R = 0`` over a closed chart kills the Laplacian, leaving
    ``4 int e^u + int f = 0``; with no cubic term this needs ``int f < 0``.
    """
    if not chart.periodic or np.any(np.asarray(q) != 0):
        return False
    return f is None or chart.integrate(f) >= 0


def newton_solve(chart: Chart, q, cfg: SolverConfig | None = None, u0=None, f=None,
                 bc=None) -> SolveReport:
    """Solve ``R(u) = 0`` by damped Newton with CG inner solves.

    On a disk, ``bc`` supplies the values on the boundary ring (an array on the
    chart or a scalar); the default is ``log(|q|^2 + eps)/3``.
    """
    cfg = cfg or SolverConfig()
    q = np.broadcast_to(np.asarray(q, dtype=complex), chart.shape)
    q2 = np.abs(q) ** 2
    if not np.all(np.isfinite(q[chart.mask])):
        raise ContractViolation("q is not finite on the chart")

    if chart.periodic:
        if bc is not None:
            raise ContractViolation("a torus chart takes no boundary data")
    else:
        bc = default_boundary(chart, q) if bc is None else np.broadcast_to(bc, chart.shape)

    u = np.full(chart.shape, np.nan)
    if u0 is None:
        u[chart.mask] = default_initial_guess(chart, q)
    else:
        u[chart.mask] = np.broadcast_to(u0, chart.shape)[chart.mask]
    if not chart.periodic:
        u[chart.ring] = bc[chart.ring]
    chart.check(u, "initial guess")

    unknown = chart.interior

    def residual(v):
        with np.errstate(over="ignore", invalid="ignore"):
            r = pde_residual(chart, v, q, f)
        return r, float(np.max(np.abs(r[unknown])))

    r, rnorm = residual(u)
    history = [rnorm]
    lin_its: list[int] = []

    if torus_obstructed(chart, q, f):
        return SolveReport(False, 0, history, True, u,
                           "no periodic solution: q vanishes identically and the forcing has non-negative integral")

    failures = 0
    stalled = 0
    last_step = np.inf
    drift_sign = 0.0
    for it in range(1, cfg.max_iter + 1):
        if rnorm <= cfg.tol:
            return SolveReport(True, it - 1, history, False, u, "converged", lin_its)

        jac = _NegJacobian(chart, u, q2)
        # -J delta = R  gives the Newton update u - J^{-1} R = u + delta
        delta_vec, n_lin = jac.solve(r[unknown], cfg.linear_tol)
        lin_its.append(n_lin)
        delta = np.zeros(chart.shape)
        delta[unknown] = delta_vec
        step_norm = float(np.max(np.abs(delta_vec)))

        s = cfg.damping
        while True:
            trial = u + s * delta
            r_new, rn_new = residual(trial)
            if np.isfinite(rn_new) and rn_new < rnorm:
                break
            if s / 2 < cfg.min_damping:
                break
            s /= 2

        if not (np.isfinite(rn_new) and rn_new < rnorm):
            if step_norm <= 1e-13 * (1 + float(np.max(np.abs(u[unknown])))):
                return SolveReport(False, it, history, False, u,
                                   f"stagnated at residual {rnorm:.3e} above tol", lin_its)
            failures += 1
            log.debug("backtracking failure %d at iteration %d", failures, it)
            if failures >= MAX_BACKTRACK_FAILURES:
                return SolveReport(False, it, history, True, u,
                                   "iterates diverge: repeated backtracking failures", lin_its)
            if not np.isfinite(rn_new):
                history.append(rnorm)
                continue
        else:
            failures = 0

        # a mean drift with non-shrinking steps means the iterates run off to infinity
        mean_step = float(np.mean(delta_vec))
        same_dir = np.sign(mean_step) == drift_sign and abs(mean_step) > 0.5 * step_norm
        stalled = stalled + 1 if (same_dir and step_norm > 0.9 * last_step) else 0
        drift_sign = np.sign(mean_step)
        last_step = step_norm

        u, r, rnorm = trial, r_new, rn_new
        history.append(rnorm)
        log.debug("newton %d: |R| = %.3e, step %.3e, damping %g, cg %d", it, rnorm, step_norm, s, n_lin)
        if stalled >= STALL_WINDOW:
            return SolveReport(False, it, history, True, u,
                               "iterates diverge: steps do not contract", lin_its)

    converged = rnorm <= cfg.tol
    return SolveReport(converged, cfg.max_iter, history, False, u,
                       "converged" if converged else "max_iter reached", lin_its)


def manufactured_solve(chart: Chart, u_star, q, cfg: SolverConfig | None = None,
                       f=None, u0=None) -> SolveReport:
    """Solve with forcing chosen so that ``u_star`` is the target.

    By default ``f = R(u_star)`` (discrete), making ``u_star`` the exact
    discrete solution; pass the continuum residual as ``f`` for truncation
    studies.  On a disk ``u_star`` also supplies the ring data.
    """
    u_star = chart.check(np.asarray(u_star, dtype=float), "u_star")
    if f is None:
        f = pde_residual(chart, u_star, q)
    bc = None if chart.periodic else u_star
    return newton_solve(chart, q, cfg, u0=u0, f=f, bc=bc)


def smallest_eigenvalue(chart: Chart, u, q, steps: int = 20, seed: int = 0) -> float:
    """Estimate the smallest eigenvalue of ``-J(u)`` by inverse power iteration."""
    q2 = np.abs(np.broadcast_to(q, chart.shape)) ** 2
    jac = _NegJacobian(chart, np.asarray(u, dtype=float), q2)
    x = np.random.default_rng(seed).standard_normal(jac.n)
    x /= np.linalg.norm(x)
    for _ in range(steps):
        y, _ = jac.solve(x, 1e-10)
        x = y / np.linalg.norm(y)
    return float(x @ jac.matvec(x))
