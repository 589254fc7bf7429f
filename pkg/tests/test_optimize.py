import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_rotation
from willmore import generators as gen
from willmore import pl, ss
from willmore import optimize as opt
from willmore.mesh import midpoint_subdivide
from willmore.symmetry import build_symmetry, d4h_group


@pytest.fixture(scope="module")
def blob():
    return gen.perturb(gen.sphere_mesh("octahedron", 1, project=True), 0.05, seed=11)


def _fd_rel(f, x, g, idx, h):
    errs = []
    for k in idx:
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        errs.append((f(xp) - f(xm)) / (2 * h) - g.flat[k])
    return np.max(np.abs(errs)) / np.max(np.abs(g))


# --- spec and reduced quantities -------------------------------------------

@pytest.mark.parametrize("kw", [dict(problem="canham"), dict(problem="canham", v0=1.2),
                                dict(problem="helfrich", v0=0.8), dict(lam=-1.0),
                                dict(method="newton"), dict(mu0=0.0), dict(mu_growth=1.0),
                                dict(representation="fem"), dict(h0_scale="unit")])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        opt.ProblemSpec(**kw)


def test_active_sets():
    assert opt.ProblemSpec().active == ("A",)
    assert opt.ProblemSpec(problem="canham", v0=0.7).active == ("A", "V")
    assert opt.ProblemSpec(problem="helfrich", v0=0.7, m0=1.1).active == ("A", "V", "M")


def test_reduced_unit_sphere():
    v0, m0 = opt.reduced_quantities(4 * math.pi, 4 * math.pi / 3, 4 * math.pi)
    assert v0 == pytest.approx(1, abs=1e-15) and m0 == pytest.approx(1, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(A=st.floats(0.1, 100), V=st.floats(-10, 10), M=st.floats(-10, 10), s=st.floats(0.05, 20))
def test_reduced_scale_invariant(A, V, M, s):
    a = opt.reduced_quantities(A, V, M)
    b = opt.reduced_quantities(s * s * A, s ** 3 * V, s * M)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_reduced_needs_area():
    with pytest.raises(ValueError):
        opt.reduced_quantities(0.0, 1.0, 1.0)


def test_reduced_fine_sphere():
    m = gen.sphere_mesh("icosahedron", 4, project=True)
    v0, _ = opt.reduced_quantities(pl.area(m), pl.volume(m), pl.m_cotan(m))
    assert v0 == pytest.approx(1, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(A0=st.floats(0.1, 50), v0=st.floats(0.1, 1), m0=st.floats(0.5, 2))
def test_targets_roundtrip(A0, v0, m0):
    t = opt.targets(A0, v0, m0)
    assert opt.reduced_quantities(t["A"], t["V"], t["M"]) == pytest.approx((v0, m0), rel=1e-12)


def test_echo_is_plain():
    import json

    spec = opt.ProblemSpec(representation="pl", problem="canham", v0=0.8, lam=2.0,
                           structure=pl.TorusLattice(1j, 4, 4))
    d = json.loads(json.dumps(spec.echo()))
    assert d["problem"] == "canham" and d["structure"]["omega"] == [0.0, 1.0]


# --- penalty function ------------------------------------------------------

def test_mu_zero_pl(blob):
    spec = opt.ProblemSpec(representation="pl", problem="helfrich", v0=0.7, m0=1.3, lam=2.0)
    F, g = opt.penalty_value_grad(blob, spec, 0.0)
    E, gE = pl.dirichlet_energy(blob)
    W, gW = pl.w_pl(blob, "normalcur")
    assert F == pytest.approx(W + 2 * E, rel=1e-12)
    assert np.allclose(g, gW + 2 * gE, atol=1e-10)


def test_mu_zero_loop(blob):
    spec = opt.ProblemSpec(problem="canham", v0=0.7, quad_n=2)
    F, g = opt.penalty_value_grad(blob, spec, 0.0)
    r = ss.ss_energy(blob, ss.tables_for(blob, 2, 16), ("W",))
    assert F == pytest.approx(r.values["W"], rel=1e-12)
    assert np.allclose(g, r.gradients["W"], atol=1e-10)


@pytest.mark.parametrize("rep", ["pl", "loop"])
def test_penalty_gradient_fd(blob, rep):
    spec = opt.ProblemSpec(representation=rep, problem="helfrich", v0=0.7, m0=1.3, quad_n=2,
                           lam=1.5 if rep == "pl" else 0.0)
    obj = opt.Objective(blob, spec)
    mu = 30.0
    ev = obj.evaluate(blob.vertices, mu)
    idx = np.random.default_rng(0).choice(blob.vertices.size, 15, replace=False)
    f = lambda x: obj.evaluate(x, mu).F
    assert _fd_rel(f, blob.vertices.copy(), ev.grad, idx, 1e-6) <= 1e-6


@pytest.mark.parametrize("rep", ["pl", "loop"])
def test_feasible_gradient_is_bare(blob, rep):
    A = pl.area(blob) if rep == "pl" else None
    base = opt.Objective(blob, opt.ProblemSpec(representation=rep, quad_n=2))
    vals = base.initial
    v0, m0 = opt.reduced_quantities(vals["A"], vals["V"], vals["M"])
    spec = opt.ProblemSpec(representation=rep, problem="helfrich", v0=v0, m0=m0, quad_n=2,
                           A0=vals["A"], lam=2.0 if rep == "pl" else 0.0)
    obj = opt.Objective(blob, spec)
    assert max(obj.violations(vals).values()) <= 1e-14
    g = obj.evaluate(blob.vertices, 1e4).grad
    g0 = obj.evaluate(blob.vertices, 0.0).grad
    assert np.allclose(g, g0, atol=1e-8 * np.abs(g0).max())
    if A is not None:
        assert vals["A"] == pytest.approx(A)


def test_violations_relative(blob):
    obj = opt.Objective(blob, opt.ProblemSpec(representation="pl", problem="helfrich", v0=0.5, m0=2.0))
    vals = dict(obj.initial)
    t = obj.targets
    v = obj.violations({**vals, "A": 1.1 * t["A"], "V": 0.5 * t["V"], "M": t["M"] + 1.0})
    assert v["A"] == pytest.approx(0.1)
    assert v["V"] == pytest.approx(0.5)
    assert v["M"] == pytest.approx(1 / (abs(t["M"]) + 1))


def test_rejected_point(blob):
    obj = opt.Objective(blob, opt.ProblemSpec(quad_n=2))
    with pytest.raises(opt.Rejected):
        obj.evaluate(np.zeros_like(blob.vertices), 10.0)


def test_initial_failure():
    flat = gen.planar_torus(3, 8, [1.0, 0.5, 0.2])
    with pytest.raises(opt.OptimizeError):
        opt.minimize(flat, opt.ProblemSpec(representation="pl", w_variant="normalcur"))


# --- minimize --------------------------------------------------------------

@pytest.mark.parametrize("method", ["bfgs", "gd"])
def test_armijo_monotone(blob, method):
    spec = opt.ProblemSpec(representation="pl", problem="canham", v0=0.9, lam=1.0,
                           max_iter=40, method=method, mu_max=100.0)
    r = opt.minimize(blob, spec)
    for stage in {h["stage"] for h in r.history}:
        F = [h["F"] for h in r.history if h["stage"] == stage]
        assert all(b <= a for a, b in zip(F, F[1:]))
    assert r.history[-1]["F"] < r.history[0]["F"]


def test_result_fields(blob):
    r = opt.minimize(blob, opt.ProblemSpec(representation="pl", lam=1.0, max_iter=30))
    assert r.reason in ("converged", "max-iter", "stalled", "line-search-failure", "non-immersed")
    assert set(r.values) >= {"W", "A", "V", "M"}
    assert r.iterations == len(r.history) - 1
    assert r.summary()["reason"] == r.reason
    assert r.symmetry_deviation is None


def test_willmore_loop_small():
    m = midpoint_subdivide(gen.octahedron())
    r = opt.minimize(m, opt.ProblemSpec())
    assert r.feasible and r.reason == "converged"
    assert r.W == pytest.approx(4 * math.pi, rel=0.01)
    assert r.W >= 4 * math.pi - 1e-3


def test_time_limit(blob):
    r = opt.minimize(blob, opt.ProblemSpec(problem="canham", v0=0.6, quad_n=2, time_limit=0.0))
    assert r.reason == "time-limit" and r.stages == 1


def test_rotation_equivariance(blob):
    q = random_rotation(np.random.default_rng(3))
    spec = opt.ProblemSpec(representation="pl", problem="canham", v0=0.9, lam=1.0, max_iter=25,
                           mu_max=10.0)
    a = opt.minimize(blob, spec)
    b = opt.minimize(blob.with_vertices(blob.vertices @ q.T), spec)
    assert b.iterations == a.iterations
    assert b.W == pytest.approx(a.W, rel=1e-8, abs=1e-8)
    assert np.allclose(b.mesh.vertices, a.mesh.vertices @ q.T, atol=1e-7)


def test_callback_sees_every_row(blob):
    rows = []
    r = opt.minimize(blob, opt.ProblemSpec(representation="pl", lam=1.0, max_iter=5), callback=rows.append)
    assert rows == r.history


def _symmetric_start():
    m = gen.sphere_mesh("octahedron", 2, project=True, flatten=0.6)
    return m, build_symmetry(m, d4h_group())


@pytest.mark.parametrize("method", ["bfgs", "gd"])
def test_symmetric_step(method):
    # a G-symmetric iterate maps to a G-symmetric next iterate
    m, sym = _symmetric_start()
    spec = opt.ProblemSpec(representation="pl", lam=2.0, method=method, max_iter=1, mu_max=10.0)
    r = opt.minimize(m, spec, sym)
    assert r.iterations == 1
    assert r.symmetry_deviation <= 1e-12 * m.bbox_diagonal()


def test_symmetrize_holds_exactly():
    m, sym = _symmetric_start()
    spec = opt.ProblemSpec(representation="pl", max_iter=60, mu_max=10.0, symmetrize=True)
    r = opt.minimize(m, spec, sym)
    assert max(h["symmetry_deviation"] for h in r.history) <= 1e-14


def test_h0_scale_options(blob):
    spec = dict(representation="pl", lam=1.0, max_iter=30, mu_max=10.0)
    a = opt.minimize(blob, opt.ProblemSpec(**spec))
    b = opt.minimize(blob, opt.ProblemSpec(h0_scale="gradient", **spec))
    # same first step, different quasi-Newton scaling afterwards
    assert a.history[1]["F"] == b.history[1]["F"]
    assert a.history[-1]["F"] < a.history[0]["F"] and b.history[-1]["F"] < b.history[0]["F"]


def test_carry_hessian(blob):
    spec = dict(representation="pl", lam=1.0, max_iter=20, mu_max=1e3)
    a = opt.minimize(blob, opt.ProblemSpec(**spec))
    b = opt.minimize(blob, opt.ProblemSpec(carry_hessian=True, **spec))
    assert a.stages > 1
    first = [h["F"] for h in a.history if h["stage"] == 0]
    assert first == [h["F"] for h in b.history if h["stage"] == 0]
    assert a.history[-1] != b.history[-1]
