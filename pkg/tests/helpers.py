"""Shared constructions for the test-suite: corruptions, frames, the Killing battery."""
import numpy as np

from algebroid_lab.algebroid import AlgebroidModel, Section, vector_field_commutator
from algebroid_lab.expr import ZERO, parse, total
from algebroid_lab.killing import monomials
from algebroid_lab.modelfile import load_bundled
from algebroid_lab.riemann import MetricModel

EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0

# (model, section, Killing?)
BATTERY = [
    ("flat_tm1", "d_x", True),
    ("flat_tm1", "dilation", False),
    ("flat_tm2", "tx", True),
    ("flat_tm2", "ty", True),
    ("flat_tm2", "rot", True),
    ("flat_tm2", "dilation", False),
    ("flat_tm2", "x_tx", False),
    ("sphere_chart", "rot_z", True),
    ("sphere_chart", "rot_x", True),
    ("sphere_chart", "rot_y", True),
    ("sphere_chart", "d_theta", False),
    ("sphere_chart", "theta_rot_z", False),
    ("so3_killing", "e1", True),
    ("so3_killing", "e2", True),
    ("so3_killing", "mixed", True),
    ("so3_aniso", "e1", False),
    ("linebundle_X", "radius2", True),
    ("linebundle_X", "one", True),
    ("linebundle_X", "x", False),
    ("linebundle_X", "xy", False),
    ("foliation_product", "tu", True),
    ("foliation_product", "rot", True),
    ("foliation_product", "w_tu", True),
    ("foliation_product", "dilation", False),
]

# geodesic initial data (x0, y0) per corpus model
GEODESICS = {
    "flat_tm1": ([0.1], [0.7]),
    "flat_tm2": ([0.1, -0.2], [0.6, 0.3]),
    "sphere_chart": ([1.2, 0.1], [0.6, 0.8]),
    "so3_killing": ([], [0.3, -0.5, 0.8]),
    "linebundle_X": ([0.5, 0.1], [0.9]),
    "foliation_product": ([0.1, 0.2, 0.4], [0.5, -0.7]),
}


def so3_aniso():
    """so(3) with the non-invariant metric diag(1, 2, 3)."""
    L = load_bundled("so3_killing")
    L.metric = MetricModel([["1", "0", "0"], ["2", "0"], ["3"]], L.model)
    return L


def load(name):
    return so3_aniso() if name == "so3_aniso" else load_bundled(name)


def bracket_corruption(m: AlgebroidModel):
    """Flip the sign of one nonzero Q_ab^c (a < b) without its partner, or set a zero one to 1."""
    n = m.rank
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(n):
                if m.bracket[a, b, c] != ZERO:
                    return m.with_entry("bracket", (a, b, c), -m.bracket[a, b, c]), (a, b, c)
    idx = (0, 1 % n, 0)
    return m.with_entry("bracket", idx, 1.0), idx


ANCHOR_CORRUPTIONS = {
    # (frame index, coordinate index, added term): each makes [rho s_0, rho s_1] nonzero
    "flat_tm2": (0, 0, "y"),
    "sphere_chart": (0, 0, "phi"),
    "foliation_product": (0, 0, "v"),
}

NOT_APPLICABLE = {
    ("so3_killing", "anchor"): "dimM = 0: there is no anchor entry",
    ("linebundle_X", "anchor"): "rank 1: every vector field is the anchor of a Lie algebroid on a line bundle",
    ("flat_tm1", "anchor"): "rank 1: every vector field is the anchor of a Lie algebroid on a line bundle",
    ("linebundle_X", "metric"): "rank 1: a 1x1 metric is always symmetric",
    ("flat_tm1", "metric"): "rank 1: a 1x1 metric is always symmetric",
}


def anchor_corruption(m: AlgebroidModel, name: str):
    a, A, term = ANCHOR_CORRUPTIONS[name]
    return m.with_entry("anchor", (a, A), m.anchor[a, A] + parse(term)), (a, A)


def metric_corruption(met: MetricModel):
    """Full-matrix metric with G_01 perturbed by 0.1 while G_10 is kept."""
    n = met.owner.rank
    rows = [[met.g[a, b] for b in range(n)] for a in range(n)]
    rows[0][1] = rows[0][1] + 0.1
    return MetricModel(rows, met.owner)


def nonholonomic_frame() -> AlgebroidModel:
    """Tangent bundle of R^3 in a generic point-dependent frame s_a = A_a^B d_B.

    The structure functions Q_ab^c come from the vector-field commutators
    and the adjugate inverse of A; they depend on the point, so the sign of
    the quadratic term in the Jacobi identity matters.
    """
    coords = ["x", "y", "z"]
    A = np.array([["1 + 0.3*y*z", "0.2*x", "0.1*sin(y)"],
                  ["0.2*z^2", "1", "0.3*x*y"],
                  ["0.1*y", "0.2*cos(x)", "1 + 0.2*z"]], dtype=object)
    A = np.vectorize(parse, otypes=[object])(A)

    def cof(i, j):
        r = [k for k in range(3) if k != i]
        c = [k for k in range(3) if k != j]
        return A[r[0], c[0]] * A[r[1], c[1]] - A[r[0], c[1]] * A[r[1], c[0]]

    det = total(A[0, j] * cof(0, j) * (-1) ** j for j in range(3))
    Ainv = np.array([[cof(j, i) * (-1) ** (i + j) / det for j in range(3)] for i in range(3)], dtype=object)
    Q = np.empty((3, 3, 3), dtype=object)
    for a in range(3):
        for b in range(3):
            comm = vector_field_commutator(list(A[a]), list(A[b]), coords)
            for c in range(3):
                # [s_a, s_b] = w^B d_B = w^B (A^-1)_B^c s_c
                Q[a, b, c] = total(comm[B] * Ainv[B, c] for B in range(3))
    return AlgebroidModel("nonholonomic", coords, ["s1", "s2", "s3"], A, Q, [(-1.0, 1.0)] * 3)


def jacobi_displayed(m: AlgebroidModel, pts: np.ndarray) -> np.ndarray:
    """Cyclic sum of Q_a^A d_A Q_bc^d - Q_ae^d Q_bc^e (quadratic sign as written in the source text)."""
    Q = m.anchor_fn.at(pts)
    Qb = m.bracket_fn.at(pts)
    dQb = m.dbracket_fn.at(pts)
    term = np.einsum("paA,pAbcd->pabcd", Q, dQb) - np.einsum("paed,pbce->pabcd", Qb, Qb)
    return term + np.transpose(term, (0, 2, 3, 1, 4)) + np.transpose(term, (0, 3, 1, 2, 4))


def sample_section(rng, m, degree=2):
    """A random polynomial section with small coefficients."""
    mons = monomials(m.coords, degree)
    comps = []
    for _ in range(m.rank):
        coef = rng.uniform(-1, 1, size=len(mons))
        comps.append(total(float(c) * mono for c, mono in zip(coef, mons)))
    return Section(comps, m, "random")
