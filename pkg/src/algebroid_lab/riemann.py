"""Fiber metrics, the Levi-Civita connection, curvature and their identity checks.

Index conventions (0-based arrays, leading axis is the sample point when
evaluating at several points at once):

* ``G[a, b]`` = G_ab, ``Ginv[a, b]`` = G^ab, ``dG[A, a, b]`` = dG_ab/dx^A
* ``Gam[b, c, a]`` = Gamma_bc^a with nabla_{s_b} s_c = Gamma_bc^a s_a
* ``R[a, d, b, c]`` = R_a^d_bc with R(s_b, s_c) s_a = R_a^d_bc s_d, so R is
  antisymmetric in its last two slots, and ``Ric[a, b]`` = R_a^c_cb.

All derivatives of the connection are assembled from exact symbolic
derivatives of G and the structure functions; nothing here uses finite
differences except :func:`christoffel_fd`, which exists for profiling only.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .algebroid import DEFAULT_SAMPLES, DEFAULT_SEED, AlgebroidModel, Section, _diff_array, sweep
from .expr import CompiledExprs, as_expr

DEGENERACY_RTOL = 1e-12
CERT_TOL = 1e-9

CONVENTIONS = {
    "christoffel": "nabla_{s_b} s_c = Gamma_bc^a s_a; Gamma_bc^a = 1/2 G^ad (Q_c dG_bd + Q_b dG_cd"
                   " - Q_d dG_bc + Q_db^e G_ec + Q_dc^e G_eb + Q_bc^e G_ed)",
    "curvature": "R(s_b, s_c) s_a = R_a^d_bc s_d; Ricci R_ab = R_a^c_cb",
}


class DegenerateMetricError(ArithmeticError):
    def __init__(self, point, det: float):
        super().__init__(f"metric is degenerate at {np.round(np.asarray(point, float), 12).tolist()}"
                         f" (det = {det:.3e})")
        self.point = np.asarray(point, float)
        self.det = det


class CertificationError(RuntimeError):
    pass


class MetricModel:
    """Symmetric fiber metric G_ab(x) on an algebroid.

    ``upper`` rows hold the upper triangle (row a has rank - a entries).  A
    full square matrix is also accepted; it is then stored as given and its
    symmetry becomes a sampled property (see :func:`validate_metric_symmetry`).
    """

    def __init__(self, g, owner: AlgebroidModel):
        n = owner.rank
        rows = [list(r) for r in g]
        if len(rows) != n:
            raise ValueError(f"metric needs {n} rows")
        full = np.empty((n, n), dtype=object)
        if all(len(r) == n - a for a, r in enumerate(rows)):
            for a in range(n):
                for b in range(a, n):
                    full[a, b] = full[b, a] = as_expr(rows[a][b - a])
            self.from_upper = True
        elif all(len(r) == n for r in rows):
            for a in range(n):
                for b in range(n):
                    full[a, b] = as_expr(rows[a][b])
            self.from_upper = n == 1
        else:
            raise ValueError("metric rows must form an upper triangle or a square matrix")
        self.g = full
        self.owner = owner

    @property
    def model(self) -> AlgebroidModel:
        return self.owner

    @cached_property
    def g_fn(self) -> CompiledExprs:
        return CompiledExprs(self.g, self.owner.coords, self.g.shape)

    @cached_property
    def dg(self) -> np.ndarray:
        return _diff_array(self.g, self.owner.coords)

    @cached_property
    def dg_fn(self) -> CompiledExprs:
        return CompiledExprs(self.dg, self.owner.coords, self.dg.shape)

    @cached_property
    def d2g_fn(self) -> CompiledExprs:
        d2 = _diff_array(self.dg, self.owner.coords)
        return CompiledExprs(d2, self.owner.coords, d2.shape)

    def inner(self, p, u, v) -> float:
        return float(np.asarray(u) @ self.g_fn(p) @ np.asarray(v))


def check_nondegenerate(G: np.ndarray, pts: np.ndarray) -> None:
    """Raise if any |det G| < 1e-12 (max |G_ab|)^rank; G has shape (P, n, n)."""
    n = G.shape[-1]
    det = np.linalg.det(G)
    scale = np.abs(G).reshape(G.shape[0], -1).max(axis=1) ** n
    bad = ~(np.abs(det) > DEGENERACY_RTOL * scale)
    if bad.any():
        i = int(np.argmax(bad))
        raise DegenerateMetricError(pts[i] if len(pts) else [], float(det[i]))


def metric_eval(met: MetricModel, p) -> np.ndarray:
    return met.g_fn(p)


def metric_inverse(met: MetricModel, p) -> np.ndarray:
    G = met.g_fn(p)
    check_nondegenerate(G[None], np.atleast_2d(np.asarray(p, float)))
    return np.linalg.inv(G)


def validate_metric_symmetry(met: MetricModel, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED) -> float:
    res = sweep(met.owner.box, samples, seed,
                lambda pts: (lambda G: G - np.swapaxes(G, 1, 2))(met.g_fn.at(pts)))
    return float(np.abs(res).max())


def validate_nondegenerate(met: MetricModel, samples: int = DEFAULT_SAMPLES,
                           seed: int = DEFAULT_SEED) -> float:
    """Smallest |det G| / (max |G_ab|)^rank over the samples (raises when degenerate)."""
    def ratio(pts):
        G = met.g_fn.at(pts)
        check_nondegenerate(G, pts)
        n = G.shape[-1]
        return np.abs(np.linalg.det(G)) / np.abs(G).reshape(len(G), -1).max(axis=1) ** n
    return float(sweep(met.owner.box, samples, seed, ratio).min())


# ---------------------------------------------------------------------------
# vectorized field evaluation


@dataclass
class Fields:
    """Structure functions and metric data evaluated at a batch of points."""

    pts: np.ndarray
    Q: np.ndarray          # (P, a, A)
    Cb: np.ndarray         # (P, a, b, c)
    G: np.ndarray          # (P, a, b)
    Ginv: np.ndarray
    dG: np.ndarray         # (P, A, a, b)
    dQ: np.ndarray | None = None     # (P, A, a, B)
    dCb: np.ndarray | None = None    # (P, A, a, b, c)
    d2G: np.ndarray | None = None    # (P, A, B, a, b)


def eval_fields(met: MetricModel, pts, second: bool = False) -> Fields:
    m = met.owner
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    G = met.g_fn.at(pts)
    check_nondegenerate(G, pts)
    f = Fields(pts=pts, Q=m.anchor_fn.at(pts), Cb=m.bracket_fn.at(pts), G=G,
               Ginv=np.linalg.inv(G), dG=met.dg_fn.at(pts))
    if second:
        f.dQ = m.danchor_fn.at(pts)
        f.dCb = m.dbracket_fn.at(pts)
        f.d2G = met.d2g_fn.at(pts)
    return f


def lowered_christoffel(f: Fields, sign: float = 1.0) -> np.ndarray:
    """``B[p, b, c, d]`` = 2 <nabla_{s_b} s_c | s_d>.

    ``sign`` multiplies the Q_bc^e G_ed term; +1 is the Koszul-consistent
    choice, -1 reproduces the sign as commonly printed (and is not torsion free).
    """
    rG = np.einsum("paA,pAbc->pabc", f.Q, f.dG)       # rG[a, b, c] = rho(s_a) G_bc
    B = (np.einsum("pcbd->pbcd", rG)                   # Q_c dG_bd
         + np.einsum("pbcd->pbcd", rG)                 # Q_b dG_cd
         - np.einsum("pdbc->pbcd", rG)                 # Q_d dG_bc
         + np.einsum("pdbe,pec->pbcd", f.Cb, f.G)
         + np.einsum("pdce,peb->pbcd", f.Cb, f.G)
         + sign * np.einsum("pbce,ped->pbcd", f.Cb, f.G))
    return B


def gamma_from_fields(f: Fields, sign: float = 1.0) -> np.ndarray:
    """``Gam[p, b, c, a]`` = Gamma_bc^a."""
    return 0.5 * np.einsum("pbcd,pda->pbca", lowered_christoffel(f, sign), f.Ginv)


def dgamma_from_fields(f: Fields) -> np.ndarray:
    """``dGam[p, A, b, c, a]`` = dGamma_bc^a/dx^A, assembled from exact derivatives."""
    assert f.dQ is not None and f.dCb is not None and f.d2G is not None
    B = lowered_christoffel(f)
    # d/dx^A of rho(s_a) G_bc
    drG = (np.einsum("pAaE,pEbc->pAabc", f.dQ, f.dG)
           + np.einsum("paE,pAEbc->pAabc", f.Q, f.d2G))
    dB = (np.einsum("pAcbd->pAbcd", drG)
          + drG
          - np.einsum("pAdbc->pAbcd", drG)
          + np.einsum("pAdbe,pec->pAbcd", f.dCb, f.G) + np.einsum("pdbe,pAec->pAbcd", f.Cb, f.dG)
          + np.einsum("pAdce,peb->pAbcd", f.dCb, f.G) + np.einsum("pdce,pAeb->pAbcd", f.Cb, f.dG)
          + np.einsum("pAbce,ped->pAbcd", f.dCb, f.G) + np.einsum("pbce,pAed->pAbcd", f.Cb, f.dG))
    dGinv = -np.einsum("pde,pAef,pfa->pAda", f.Ginv, f.dG, f.Ginv)
    return 0.5 * (np.einsum("pAbcd,pda->pAbca", dB, f.Ginv)
                  + np.einsum("pbcd,pAda->pAbca", B, dGinv))


def curvature_from_fields(f: Fields, Gam: np.ndarray, dGam: np.ndarray) -> np.ndarray:
    """``R[p, a, d, b, c]`` with R(s_b, s_c) s_a = R_a^d_bc s_d."""
    t1 = np.einsum("pbA,pAcad->padbc", f.Q, dGam)
    t2 = np.einsum("pcae,pbed->padbc", Gam, Gam)
    t3 = np.einsum("pbce,pead->padbc", f.Cb, Gam)
    return t1 - np.swapaxes(t1, 3, 4) + t2 - np.swapaxes(t2, 3, 4) - t3


# ---------------------------------------------------------------------------
# pointwise API


@dataclass
class ConnectionAt:
    point: np.ndarray
    Gamma: np.ndarray       # Gamma[b, c, a] = Gamma_bc^a
    Ginv: np.ndarray
    G: np.ndarray
    torsion: float
    compat: float
    koszul: float


@dataclass
class CurvatureAt:
    point: np.ndarray
    R: np.ndarray           # R[a, d, b, c] = R_a^d_bc
    Ricci: np.ndarray       # Ricci[a, b] = R_a^c_cb

    def sectional(self, G: np.ndarray, i: int = 0, j: int = 1) -> float:
        """<R(s_i, s_j) s_j | s_i> / (G_ii G_jj - G_ij^2)."""
        num = self.R[j, :, i, j] @ G[:, i]
        return float(num / (G[i, i] * G[j, j] - G[i, j] ** 2))


def frame_residuals(f: Fields, Gam: np.ndarray) -> dict[str, np.ndarray]:
    """Tensorial torsion, compatibility and Koszul residuals of a candidate Gamma."""
    torsion = Gam - np.swapaxes(Gam, 1, 2) - f.Cb
    rG = np.einsum("paA,pAbc->pabc", f.Q, f.dG)
    low = np.einsum("pbcd,pde->pbce", Gam, f.G)         # <nabla_b s_c | s_e>
    compat = rG - low - np.swapaxes(low, 2, 3)
    koszul_rhs = (np.einsum("pbcd->pbcd", rG) + np.einsum("pcdb->pbcd", rG)
                  - np.einsum("pdbc->pbcd", rG)
                  - np.einsum("pbe,pcde->pbcd", f.G, f.Cb)
                  + np.einsum("pce,pdbe->pbcd", f.G, f.Cb)
                  + np.einsum("pde,pbce->pbcd", f.G, f.Cb))
    koszul = 2 * low - koszul_rhs
    return {"torsion": torsion, "compat": compat, "koszul": koszul}


def certify(f: Fields, Gam: np.ndarray) -> dict[str, float]:
    return {k: float(np.abs(v).max()) if v.size else 0.0
            for k, v in frame_residuals(f, Gam).items()}


def christoffel(met: MetricModel, p, certify_tol: float | None = CERT_TOL) -> ConnectionAt:
    """Levi-Civita Christoffel symbols at ``p``, certified torsion free and compatible."""
    f = eval_fields(met, p)
    Gam = gamma_from_fields(f)
    res = certify(f, Gam)
    scale = max(1.0, float(np.abs(f.G).max()))
    if certify_tol is not None and (res["torsion"] > certify_tol * scale
                                    or res["compat"] > certify_tol * scale):
        raise CertificationError(f"connection failed certification at {list(np.ravel(p))}: {res}")
    return ConnectionAt(point=f.pts[0], Gamma=Gam[0], Ginv=f.Ginv[0], G=f.G[0],
                        torsion=res["torsion"], compat=res["compat"], koszul=res["koszul"])


def christoffel_fd(met: MetricModel, p, step: float = 1e-6) -> np.ndarray:
    """Gamma from central-difference metric derivatives; not used for certification."""
    m = met.owner
    p = np.asarray(p, dtype=float)
    f = eval_fields(met, p)
    dG = np.zeros_like(f.dG)
    for A in range(m.dimM):
        e = np.zeros(m.dimM)
        e[A] = step
        dG[0, A] = (met.g_fn(p + e) - met.g_fn(p - e)) / (2 * step)
    f.dG = dG
    return gamma_from_fields(f)[0]


def curvature(met: MetricModel, p) -> CurvatureAt:
    f = eval_fields(met, p, second=True)
    Gam = gamma_from_fields(f)
    R = curvature_from_fields(f, Gam, dgamma_from_fields(f))
    return CurvatureAt(point=f.pts[0], R=R[0], Ricci=np.einsum("accb->ab", R[0]))


def certification_sweep(met: MetricModel, samples: int = DEFAULT_SAMPLES,
                        seed: int = DEFAULT_SEED) -> dict[str, float]:
    """Max torsion / compatibility / Koszul residuals of the Levi-Civita Gamma at random points."""
    def fn(pts):
        f = eval_fields(met, pts)
        r = frame_residuals(f, gamma_from_fields(f))
        return np.stack([np.abs(v).reshape(len(pts), -1).max(axis=1) if v[0].size
                         else np.zeros(len(pts)) for v in r.values()], axis=1)
    res = sweep(met.owner.box, samples, seed, fn)
    return {k: float(res[:, i].max()) for i, k in enumerate(("torsion", "compat", "koszul"))}


# ---------------------------------------------------------------------------
# section-level identities


def _sec(u: Section, p) -> tuple[np.ndarray, np.ndarray]:
    return u.at(p), u.jacobian_fn(p)


def covariant_derivative(met: MetricModel, p, u: Section, Gam: np.ndarray | None = None) -> np.ndarray:
    """``Du[b, d]`` = (nabla_{s_b} u)^d at ``p``."""
    m = met.owner
    if Gam is None:
        Gam = christoffel(met, p, certify_tol=None).Gamma
    uv, du = _sec(u, p)
    return m.anchor_at(p) @ du + np.einsum("bed,e->bd", Gam, uv)


def _rho_inner(f: Fields, uv, vv, dv, wv, dw) -> float:
    """rho(u)<v|w> at a single point."""
    rho_u = uv @ f.Q[0]
    d_inner = (np.einsum("Aab,a,b->A", f.dG[0], vv, wv)
               + np.einsum("ab,Aa,b->A", f.G[0], dv, wv)
               + np.einsum("ab,a,Ab->A", f.G[0], vv, dw))
    return float(rho_u @ d_inner)


def _bracket_num(f: Fields, uv, du, vv, dv) -> np.ndarray:
    rho_u = uv @ f.Q[0]
    rho_v = vv @ f.Q[0]
    return rho_u @ dv - rho_v @ du + np.einsum("abc,a,b->c", f.Cb[0], uv, vv)


def _nabla(f: Fields, Gam, uv, vv, dv) -> np.ndarray:
    return uv @ (f.Q[0] @ dv) + np.einsum("bed,b,e->d", Gam, uv, vv)


def torsion_residual(met: MetricModel, p, u: Section, v: Section,
                     Gamma: np.ndarray | None = None) -> np.ndarray:
    """T(u, v) = nabla_u v - nabla_v u - [u, v] at ``p``."""
    f = eval_fields(met, p)
    Gam = gamma_from_fields(f)[0] if Gamma is None else Gamma
    uv, du = _sec(u, p)
    vv, dv = _sec(v, p)
    return _nabla(f, Gam, uv, vv, dv) - _nabla(f, Gam, vv, uv, du) - _bracket_num(f, uv, du, vv, dv)


def compat_residual(met: MetricModel, p, u: Section, v: Section, w: Section,
                    Gamma: np.ndarray | None = None) -> float:
    """rho(u)<v|w> - <nabla_u v|w> - <v|nabla_u w> at ``p``."""
    f = eval_fields(met, p)
    Gam = gamma_from_fields(f)[0] if Gamma is None else Gamma
    uv, du = _sec(u, p)
    vv, dv = _sec(v, p)
    wv, dw = _sec(w, p)
    G = f.G[0]
    return (_rho_inner(f, uv, vv, dv, wv, dw)
            - _nabla(f, Gam, uv, vv, dv) @ G @ wv
            - vv @ G @ _nabla(f, Gam, uv, wv, dw))


def koszul_check(met: MetricModel, p, u: Section, v: Section, w: Section) -> float:
    """2<nabla_u v|w> minus the six-term Koszul expression, at ``p``."""
    f = eval_fields(met, p)
    Gam = gamma_from_fields(f)[0]
    G = f.G[0]
    uv, du = _sec(u, p)
    vv, dv = _sec(v, p)
    wv, dw = _sec(w, p)
    lhs = 2 * _nabla(f, Gam, uv, vv, dv) @ G @ wv
    rhs = (_rho_inner(f, uv, vv, dv, wv, dw)
           + _rho_inner(f, vv, wv, dw, uv, du)
           - _rho_inner(f, wv, uv, du, vv, dv)
           - uv @ G @ _bracket_num(f, vv, dv, wv, dw)
           + vv @ G @ _bracket_num(f, wv, dw, uv, du)
           + wv @ G @ _bracket_num(f, uv, du, vv, dv))
    return float(lhs - rhs)


def frame_sections(m: AlgebroidModel) -> list[Section]:
    return [Section([1.0 if a == b else 0.0 for b in range(m.rank)], m, m.frame[a])
            for a in range(m.rank)]


def random_polynomial_sections(m: AlgebroidModel, count: int, rng: np.random.Generator,
                               degree: int = 2) -> list[Section]:
    """Sections with random coefficients on monomials up to ``degree`` (test fodder)."""
    from .killing import monomials

    basis = monomials(m.coords, degree)
    out = []
    for _ in range(count):
        comps = []
        for _a in range(m.rank):
            c = rng.normal(size=len(basis))
            comps.append(sum((float(ci) * b for ci, b in zip(c, basis)), as_expr(0.0)))
        out.append(Section(comps, m))
    return out


def bianchi_residual(met: MetricModel, p) -> float:
    """max |R_a^d_bc + R_b^d_ca + R_c^d_ab| (first Bianchi, torsion-free case)."""
    R = curvature(met, p).R
    s = R + np.transpose(R, (2, 1, 3, 0)) + np.transpose(R, (3, 1, 0, 2))
    return float(np.abs(s).max()) if s.size else 0.0


def metric_at_points(met: MetricModel, pts: Sequence) -> np.ndarray:
    return met.g_fn.at(np.asarray(pts, float))
