import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from algebroid_lab.algebroid import AlgebroidModel, Section, bracket_sections, sample_points
from algebroid_lab.dynamics import EPoint, dualize, integrate
from algebroid_lab.expr import CompiledExprs, diff, parse, to_string
from algebroid_lab.killing import (StackelTensor, UnderdeterminedError, charge_along_geodesic, charge_series,
                                   geodesic_section_residual, killing_check, killing_data,
                                   killing_find, killing_residual_connection, killing_residual_lemma,
                                   killing_residual_poisson, killing_transport, lift_morphism_residual,
                                   maxwell_identities, stackel_residual, tangent_lift)
from algebroid_lab.riemann import MetricModel

from helpers import BATTERY, EPS, GEODESICS, load, nonholonomic_frame, sample_section


def flat(n=2):
    m = AlgebroidModel(f"tr{n}", ["x", "y"][:n], ["ex", "ey"][:n], np.eye(n), np.zeros((n, n, n)),
                       [(-1.0, 1.0)] * n)
    return MetricModel([[1.0 if j == i else 0.0 for j in range(i, n)] for i in range(n)], m)


def sec(met, comps, name="u"):
    return Section(comps, met.owner, name)


def ep(x, y):
    return EPoint(np.array(x, float), np.array(y, float))


def s(e):
    return to_string(e)


# --- tangent lift ----------------------------------------------------------

def test_lift_examples(so3):
    met = flat()
    lt = tangent_lift(sec(met, ["1", "0"]))
    assert [s(e) for e in lt.base] == ["1", "0"] and [s(e) for e in lt.fiber] == ["0", "0"]
    lt = tangent_lift(sec(met, ["-y", "x"]))
    assert [s(e) for e in lt.fiber] == ["-y_ey", "y_ex"]
    lt = tangent_lift(Section(["1", "0", "0"], so3.model))
    assert lt.base == []
    # -y^a u^b Q_ba^c with u = e1; the opposite order breaks the morphism property
    f = CompiledExprs(lt.fiber, so3.model.fiber, (3,))
    y = np.array([0.3, -0.5, 0.8])
    assert np.allclose(f(y), -np.einsum("a,ac->c", y, EPS[0]))


def test_lift_morphism():
    met = flat()
    rot, tx = sec(met, ["-y", "x"]), sec(met, ["1", "0"])
    assert lift_morphism_residual(rot, tx) < 1e-10
    rng = np.random.default_rng(4)
    for _ in range(3):
        u, v = sample_section(rng, met.owner, 2), sample_section(rng, met.owner, 2)
        assert lift_morphism_residual(u, v) < 1e-9


def test_lift_morphism_on_lie_algebra_and_frame(so3):
    e = [Section(np.eye(3)[i], so3.model) for i in range(3)]
    assert lift_morphism_residual(e[0], e[1]) == 0.0
    m = nonholonomic_frame()
    rng = np.random.default_rng(8)
    u, v = sample_section(rng, m, 1), sample_section(rng, m, 1)
    assert lift_morphism_residual(u, v, samples=16) < 1e-8


# --- residual forms --------------------------------------------------------

def test_lemma_examples(so3):
    met = flat()
    assert killing_residual_lemma(met, sec(met, ["1", "0"])) == 0.0
    assert killing_residual_lemma(met, sec(met, ["x", "0"])) == 2.0
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = Section(rng.normal(size=3), so3.model)
        assert killing_residual_lemma(so3.metric, u) < 1e-14


def test_poisson_examples(corpus):
    met = flat()
    assert killing_residual_poisson(met, sec(met, ["0", "1"])) == 0.0
    L = corpus["linebundle_X"]
    assert killing_residual_poisson(L.metric, L.sections["radius2"]) == 0.0
    assert killing_residual_poisson(L.metric, L.sections["x"]) > 0.1
    S = corpus["sphere_chart"]
    for name in ("rot_x", "rot_y", "rot_z"):
        assert killing_residual_poisson(S.metric, S.sections[name]) < 1e-9


def test_connection_form_is_standard_killing_equation():
    # on TR^n: d_b u_c + d_c u_b
    met = flat()
    u = sec(met, ["x*y", "y^2"])
    r = killing_residual_connection(met, u, samples=1, seed=0)
    x, y = sample_points(met.owner.box, 1, np.random.default_rng(0))[0]
    J = np.array([[y, 0.0], [x, 2 * y]])          # J[b, c] = d_b u^c
    assert r == pytest.approx(np.abs(J + J.T).max())


@pytest.mark.parametrize("model,section,expected", BATTERY)
def test_battery(model, section, expected):
    L = load(model)
    r = killing_check(L.metric, L.sections[section])
    assert r.consistent
    assert r.verdict is expected
    res = [r.residual_lemma, r.residual_poisson, r.residual_connection]
    if min(res) > 1e-12:
        assert max(res) / min(res) < 100


def test_report_fields(sphere):
    d = killing_check(sphere.metric, sphere.sections["rot_x"]).as_dict()
    assert set(d) == {"section", "residual_lemma", "residual_poisson", "residual_connection",
                      "scale", "tolerance", "verdict", "consistent"}


def test_lie_closure(sphere):
    u, v = sphere.sections["rot_x"], sphere.sections["rot_y"]
    w = bracket_sections(u, v)
    assert killing_check(sphere.metric, w).verdict
    assert killing_residual_lemma(sphere.metric, w) < 1e-8


SCALING_WITNESSES = {
    # f * u with u Killing and f non-constant; so3 has no non-constant functions
    "flat_tm1": ("d_x", "x"),
    "flat_tm2": ("tx", "x"),
    "sphere_chart": ("rot_z", "theta"),
    "linebundle_X": ("radius2", "x"),
    "foliation_product": ("tu", "u"),
}


@pytest.mark.parametrize("model", sorted(SCALING_WITNESSES))
def test_scaling_by_functions_breaks_killing(model):
    L = load(model)
    name, f = SCALING_WITNESSES[model]
    u = L.sections[name]
    assert killing_check(L.metric, u).verdict
    r = killing_check(L.metric, u.scale(parse(f)))
    assert r.consistent and not r.verdict


# --- charges ---------------------------------------------------------------

def test_charge_examples(corpus):
    F = corpus["flat_tm2"]
    t = integrate(F.metric, "geodesic", ep([0.1, -0.2], [0.6, 0.3]), 5.0, 1e-2)
    assert charge_along_geodesic(F.metric, F.sections["tx"], t) < 1e-10
    assert charge_along_geodesic(F.metric, F.sections["dilation"], t) > 0.5
    S = corpus["sphere_chart"]
    t = integrate(S.metric, "geodesic", ep(*GEODESICS["sphere_chart"]), 10.0, 1e-3)
    for name in ("rot_x", "rot_y", "rot_z"):
        assert charge_along_geodesic(S.metric, S.sections[name], t) < 1e-8


def _floor(traj, q_scale):
    # accumulated rounding over the steps, for flows whose energy is exactly conserved
    return len(traj) * np.finfo(float).eps * max(q_scale, traj.energy[0])


def test_conservation_pairs():
    """Every Killing section of the battery against its model's geodesic, in E and in E*."""
    flows = {}
    for model, name, killing in BATTERY:
        if not killing:
            continue
        L = load(model)
        if model not in flows:
            s0 = ep(*GEODESICS[model])
            flows[model] = (integrate(L.metric, "geodesic", s0, 5.0, 1e-3),
                            integrate(L.metric, "cogeodesic", dualize(L.metric, s0), 5.0, 1e-3))
        for traj in flows[model]:
            u = L.sections[name]
            drift = charge_along_geodesic(L.metric, u, traj)
            q = np.abs(charge_series(L.metric, u, traj)).max()
            assert drift <= 10 * max(traj.energy_drift, _floor(traj, q)), (model, name, traj.kind)


def test_dilation_not_conserved():
    for model in ("flat_tm1", "flat_tm2", "foliation_product"):
        L = load(model)
        t = integrate(L.metric, "geodesic", ep(*GEODESICS[model]), 5.0, 1e-2)
        assert charge_along_geodesic(L.metric, L.sections["dilation"], t) > 1e-2


# --- transport -------------------------------------------------------------

def test_transport_flat():
    met = flat()
    t = integrate(met, "geodesic", ep([0.1, 0.2], [0.5, -0.3]), 1.0, 1e-2)
    u, L = killing_transport(met, [1.0, 0.0], np.zeros((2, 2)), t)
    assert np.abs(u - [1, 0]).max() < 1e-14 and np.abs(L).max() < 1e-14


def test_transport_lie_algebra(so3):
    u0, L0 = killing_data(so3.metric, so3.sections["mixed"], np.zeros(0))
    t = integrate(so3.metric, "geodesic", ep([], [0.3, -0.5, 0.8]), 1.0, 1e-2)
    u, L = killing_transport(so3.metric, u0, L0, t)
    assert np.abs(u - u0).max() < 1e-12 and np.abs(L - L0).max() < 1e-12


def test_transport_rejects_symmetric_L(sphere):
    t = integrate(sphere.metric, "geodesic", ep([1.0, 0.0], [0.1, 0.1]), 0.1, 1e-2)
    with pytest.raises(ValueError):
        killing_transport(sphere.metric, [0, 1], np.eye(2), t)


def test_transport_sphere_rotation(sphere):
    u = sphere.sections["rot_x"]
    x0 = np.array([1.2, 0.1])
    u0, L0 = killing_data(sphere.metric, u, x0)
    assert np.abs(L0 + L0.T).max() < 1e-12
    t = integrate(sphere.metric, "geodesic", ep(x0, [0.6, 0.8]), 1.0, 1e-2)
    uq, Lq = killing_transport(sphere.metric, u0, L0, t)
    u_exact, L_exact = killing_data(sphere.metric, u, t.x[-1])
    assert np.abs(uq - u_exact).max() < 1e-6
    assert np.abs(Lq - L_exact).max() < 1e-6


# --- discovery -------------------------------------------------------------

def test_find_flat_tm2(corpus):
    kb = killing_find(corpus["flat_tm2"].metric, degree=1)
    assert kb.dim == 3 == kb.bound
    assert kb.gap_ratio > 1e4 and kb.closure_residual < 1e-8
    for u in kb.sections:
        assert killing_check(corpus["flat_tm2"].metric, u).verdict


def test_find_so3(so3):
    kb = killing_find(so3.metric)
    assert kb.dim == 3
    C = kb.structure_constants
    assert abs(C[0, 1, 2]) > 0.1
    assert np.allclose(C, C[0, 1, 2] * EPS, atol=1e-12)


def test_find_line_bundle_over_line():
    m = AlgebroidModel("dx", ["x"], ["s"], [["1"]], [[[0.0]]], [(-1.0, 1.0)])
    kb = killing_find(MetricModel([["1"]], m), basis=["1", "x", "x^2"])
    assert kb.dim == 1
    assert s(kb.sections[0][0]) == "1"


def test_find_linebundle_X_exceeds_bound(corpus):
    # the anchor is not transitive: any function of x^2 + y^2 is Killing
    kb = killing_find(corpus["linebundle_X"].metric, degree=2)
    assert kb.dim == 2 > kb.bound == 1 and kb.bound_exceeded


def test_find_underdetermined(sphere):
    with pytest.raises(UnderdeterminedError):
        killing_find(sphere.metric, degree=3, grid_points=2)


# --- geodesic sections, Stackel, Maxwell -----------------------------------

def test_geodesic_sections(so3):
    met = flat()
    assert geodesic_section_residual(met, sec(met, ["1", "2"])) == 0.0
    assert geodesic_section_residual(so3.metric, so3.sections["mixed"]) < 1e-15
    assert geodesic_section_residual(met, sec(met, ["x", "y"])) > 0.1


def test_stackel(sphere):
    assert stackel_residual(sphere.metric, StackelTensor.energy()) < 1e-14
    assert stackel_residual(sphere.metric, StackelTensor(parse("3"), 0)) == 0.0
    K = StackelTensor.power_of_section(sphere.sections["rot_x"], 2)
    assert K.homogeneity_residual(sphere.model) < 1e-12
    assert stackel_residual(sphere.metric, K) < 1e-9
    assert stackel_residual(sphere.metric, StackelTensor(parse("pi_e_theta^2"), 2)) > 1e-3


def test_maxwell(corpus):
    met = flat()
    assert maxwell_identities(met, sec(met, ["-y", "x"]))["div"] == 0.0
    S = corpus["sphere_chart"]
    for name in ("rot_x", "rot_y", "rot_z"):
        r = maxwell_identities(S.metric, S.sections[name])
        assert max(r.values()) < 1e-7, (name, r)
    assert maxwell_identities(met, sec(met, ["x", "y"]))["div"] == 2.0


def test_maxwell_on_lie_algebra(so3):
    r = maxwell_identities(so3.metric, so3.sections["mixed"])
    assert max(r.values()) < 1e-14


# --- properties ------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_every_constant_so3_section_is_killing(c):
    L = load("so3_killing")
    r = killing_check(L.metric, Section(c, L.model))
    assert r.verdict and r.consistent


COEF = st.floats(-2, 2).filter(lambda v: abs(v) > 1e-3)


@settings(max_examples=30, deadline=None)
@given(st.lists(COEF, min_size=6, max_size=6), st.booleans())
def test_linebundle_killing_iff_X_annihilates(c, radial):
    L = load("linebundle_X")
    if radial:
        f = parse(f"{c[0]!r} + {c[1]!r}*(x^2 + y^2) + {c[2]!r}*(x^2 + y^2)^2")
    else:
        f = parse(f"{c[0]!r} + {c[1]!r}*x + {c[2]!r}*y + {c[3]!r}*x*y + {c[4]!r}*x^2 + {c[5]!r}*y^2")
    Xf = parse("-y") * diff(f, "x") + parse("x") * diff(f, "y")
    pts = np.random.default_rng(0).uniform(-1, 1, (64, 2))
    annihilated = np.abs(CompiledExprs([Xf], ["x", "y"], (1,)).at(pts)).max() < 1e-9
    r = killing_check(L.metric, Section([f], L.model))
    assert r.consistent and r.verdict == annihilated == radial


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["rot_x", "rot_y", "rot_z"]),
       st.sampled_from(["rot_x", "rot_y", "rot_z"]))
def test_killing_vector_space(a, b, n1, n2):
    S = load("sphere_chart")
    u, v = S.sections[n1], S.sections[n2]
    w = u.scale(parse(repr(a))) + v.scale(parse(repr(b)))
    res = lambda z: killing_residual_lemma(S.metric, z, samples=16)
    assert res(w) <= abs(a) * res(u) + abs(b) * res(v) + 1e-12 * (1 + abs(a) + abs(b)) * 10
