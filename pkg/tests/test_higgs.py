import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conservstat.chart import Chart
from conservstat.higgs import (HiggsPointData, adjoint_A, build_C_from_moduli, build_higgs,
                               build_nabla, check_statistical_connection, commutator,
                               hermitian_frame, higgs_route_nabla, metric_adjoint)
from conservstat.solver import newton_solve
from conservstat.tensors import (ConformalMetric, Connection, Sym3Tensor, christoffel,
                                 embed_cubic)

from conftest import observed_order

finite = dict(allow_nan=False, allow_infinity=False)
complexes = st.complex_numbers(max_magnitude=10, **finite)
positive = st.floats(min_value=0.05, max_value=20, **finite)


def closed_form_adjoint(q, h):
    """Closed form of A* under H = diag(h, 1, 1/h)."""
    return np.array([[0, 0, np.conj(q) / h**2], [h, 0, 0], [0, h, 0]], dtype=complex)


def closed_form_commutator(q, h):
    d = h - abs(q) ** 2 / h**2
    return np.diag([d, 0, -d]).astype(complex)


def test_build_higgs_examples():
    Phi, A = build_higgs(HiggsPointData(0, 0, 1))
    shift = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert np.array_equal(A, shift) and np.array_equal(Phi, A)
    Phi, A = build_higgs(HiggsPointData(5, 0, 1))
    assert np.array_equal(Phi - A, 5 * np.eye(3))
    _, A = build_higgs(HiggsPointData(0, 3 + 4j, 2))
    assert A[2, 0] == 3 + 4j


def test_adjoint_examples():
    Ast = adjoint_A(HiggsPointData(0, 3, 2))
    assert (Ast[0, 2], Ast[1, 0], Ast[2, 1]) == (0.75, 2, 2)
    Ast = adjoint_A(HiggsPointData(0, 0, 1))
    assert np.array_equal(Ast, np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]))
    assert adjoint_A(HiggsPointData(0, 1j, 1))[0, 2] == -1j


def test_domain_error():
    with pytest.raises(ValueError):
        HiggsPointData(0, 1, 0.0)
    with pytest.raises(ValueError):
        HiggsPointData(0, 1, -2.0)


@pytest.mark.parametrize("q,h,diag", [(0, 1, (1, 0, -1)), (3, 2, (-0.25, 0, 0.25))])
def test_commutator_examples(q, h, diag):
    p = HiggsPointData(0, q, h)
    assert np.allclose(commutator(build_higgs(p)[1], adjoint_A(p)), np.diag(diag), atol=1e-15)


@settings(deadline=None)
@given(positive, st.floats(0, 2 * np.pi))
def test_commutator_vanishes_on_constant_solution(h, phase):
    q = h**1.5 * np.exp(1j * phase)
    p = HiggsPointData(0, q, h)
    assert np.abs(commutator(build_higgs(p)[1], adjoint_A(p))).max() <= 1e-12 * max(1, h)


@settings(max_examples=200, deadline=None)
@given(complexes, complexes, positive)
def test_adjoint_and_commutator_match_closed_forms(w, q, h):
    p = HiggsPointData(w, q, h)
    Phi, A = build_higgs(p)
    Ast = adjoint_A(p)
    scale = 1 + abs(q) ** 2 / h**2 + h
    assert np.abs(Ast - closed_form_adjoint(q, h)).max() <= 1e-13 * scale
    comm = commutator(A, Ast)
    assert np.abs(comm - closed_form_commutator(q, h)).max() <= 1e-13 * scale**2
    # omega-terms cancel: [Phi, Phi*] = [A, A*]
    assert np.abs(commutator(Phi, metric_adjoint(Phi, p)) - comm).max() <= 1e-13 * scale**2
    # real diagonal, trace free
    assert np.abs(comm - np.diag(np.diag(comm))).max() <= 1e-13 * scale**2
    assert np.abs(np.diag(comm).imag).max() <= 1e-13 * scale**2
    assert abs(np.trace(comm)) <= 1e-13 * scale**2
    # H A* = A^dagger H defines the metric adjoint
    H = hermitian_frame(p)
    assert np.abs(H @ Ast - A.conj().T @ H).max() <= 1e-13 * scale


# -- the statistical structure -------------------------------------------------------

def test_build_C_examples(torus64):
    c = torus64
    g0 = ConformalMetric.flat(c)
    assert all(np.all(a == 0) for a in build_C_from_moduli(0, 0, g0).components())
    C = build_C_from_moduli(1, 0, g0)
    assert [float(a.flat[0]) for a in C.components()] == [12, 0, 4, 0]
    g = ConformalMetric(c, np.full(c.shape, 0.9))
    C = build_C_from_moduli(0, 1, g)
    assert [float(a.flat[0]) for a in C.components()] == [2, 0, -2, 0]


def test_build_C_brute_force(torus64):
    # 2 Omega(a) g(b,c) + ... + 2 Re(conj(Q)(a,b,c)) evaluated directly on basis vectors
    c = torus64
    w, q, u = 0.7 - 1.2j, -0.4 + 2.1j, 0.35
    C = build_C_from_moduli(w, q, ConformalMetric(c, np.full(c.shape, u))).full()
    zeta = np.array([1, 1j])
    omega = np.array([2 * (w * z).real for z in zeta])
    g = np.exp(u) * np.eye(2)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                expected = (2 * (omega[i] * g[j, k] + omega[j] * g[i, k] + omega[k] * g[i, j])
                            + 2 * (np.conj(q * zeta[i] * zeta[j] * zeta[k])).real)
                assert C[i, j, k, 0, 0] == pytest.approx(expected, abs=1e-13)


def test_build_nabla_examples(torus64):
    c = torus64
    g0 = ConformalMetric.flat(c)
    conn = build_nabla(Sym3Tensor.zeros(c), g0)
    assert np.array_equal(conn.coeffs, christoffel(g0).coeffs)

    one = np.ones(c.shape)
    conn = build_nabla(embed_cubic(one + 0j), g0)
    expected = {(0, 0, 0): 1, (0, 0, 1): 0, (0, 1, 1): -1, (1, 0, 0): 0, (1, 0, 1): -1, (1, 1, 1): 0}
    for (k, i, j), v in expected.items():
        assert np.all(conn(k, i, j) == v)

    conn = build_nabla(build_C_from_moduli(1, 0, g0), g0)
    assert np.all(conn(0, 0, 0) == 6)


def test_check_connection_examples(torus64):
    c = torus64
    g0 = ConformalMetric.flat(c)
    assert check_statistical_connection(build_nabla(Sym3Tensor.zeros(c), g0),
                                        Sym3Tensor.zeros(c), g0) == (0, 0, 0)
    g = ConformalMetric(c, np.full(c.shape, np.log(9) / 3))
    C = build_C_from_moduli(0.3 + 2j, 3, g)
    torsion, metric, sym = check_statistical_connection(build_nabla(C, g), C, g)
    assert torsion == 0 and metric <= 1e-12 and sym <= 1e-12


def test_check_connection_refinement():
    metric, sym, hs = [], [], []
    for n in (32, 64, 128):
        d = Chart.disk(n)
        u = 0.4 * np.sin(d.x + 0.5) * np.cos(d.y)
        g = ConformalMetric(d, u)
        C = build_C_from_moduli(0.2 * d.z - 1, d.z**2, g)
        t, m, s = check_statistical_connection(build_nabla(C, g), C, g)
        assert t == 0
        metric.append(m)
        sym.append(s)
        hs.append(d.hx)
    assert observed_order(metric, hs) == pytest.approx(2.0, abs=0.2)
    assert observed_order(sym, hs) == pytest.approx(2.0, abs=0.2)


def test_uniqueness_regression(torus64, rng):
    c = torus64
    g = ConformalMetric(c, np.full(c.shape, 0.2))
    C = build_C_from_moduli(1 + 1j, 2 - 1j, g)
    conn = build_nabla(C, g)
    base = check_statistical_connection(conn, C, g).metric_residual_sup
    for _ in range(10):
        delta = rng.standard_normal((2, 3)) * 10.0 ** rng.uniform(-6, 0)
        pert = Connection(conn.coeffs + delta[:, :, None, None])
        chk = check_statistical_connection(pert, C, g)
        assert chk.torsion_sup == 0
        assert chk.metric_residual_sup > base


def test_higgs_route_examples():
    ex, ey = (1.0, 0.0), (0.0, 1.0)
    assert np.allclose(higgs_route_nabla(HiggsPointData(0, 0, 1.7), (0, 0), ex, ex), 0)
    assert np.allclose(higgs_route_nabla(HiggsPointData(1, 0, 1), (0, 0), ex, ex), (6, 0))
    assert np.allclose(higgs_route_nabla(HiggsPointData(0, 1, 1), (0, 0), ex, ex), (1, 0))
    assert np.allclose(higgs_route_nabla(HiggsPointData(0, 1, 1), (0, 0), ex, ey), (0, -1))


def test_higgs_route_matches_build_nabla_on_solution():
    d = Chart.disk(48)
    rep = newton_solve(d, d.z + 0.3)
    g = ConformalMetric(d, rep.final_u)
    w = 0.5 - 0.25 * d.z
    q = d.z + 0.3
    conn = build_nabla(build_C_from_moduli(w, q, g), g).full()
    ux, uy = g.grad_u
    nodes = np.argwhere(d.interior)
    basis = np.eye(2)
    for j, i in nodes[::37]:
        p = HiggsPointData(complex(w[j, i]), complex(q[j, i]), float(g.factor[j, i]))
        for a in range(2):
            for b in range(2):
                got = higgs_route_nabla(p, (ux[j, i], uy[j, i]), basis[a], basis[b])
                assert np.allclose(got, conn[:, a, b, j, i], atol=1e-10, rtol=0)
