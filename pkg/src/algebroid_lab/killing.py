"""Killing sections of a Riemannian Lie algebroid.

Three residual forms are provided.  For a section u write

    K_bc = u^a Q_a^A dG_bc/dx^A + Q_b^A du^d/dx^A G_dc + Q_c^A du^d/dx^A G_db
           - u^a Q_ab^d G_dc - u^a Q_ac^d G_db

(the local Lie derivative of G).  u is Killing when K vanishes, equivalently
when {u.pi, H} = 0 on E*, equivalently when <nabla_b u|s_c> + <nabla_c u|s_b> = 0.

Second covariant derivatives use nabla2_{b,c} u = nabla_b(nabla_c u) - Gamma_bc^e nabla_e u.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebroid import (DEFAULT_SAMPLES, DEFAULT_SEED, AlgebroidModel, Section, _diff_array,
                        bracket_sections, sample_points, sweep, vector_field_commutator)
from .dynamics import EnergyBracket, EPoint, Trajectory, rk4_steps, to_geodesic
from .expr import ONE, CompiledExprs, Expr, as_expr, const, diff, power, total, var
from .riemann import (MetricModel, Fields, curvature_from_fields, dgamma_from_fields, eval_fields,
                      gamma_from_fields)

KILLING_TOL = 1e-8
NULL_CUTOFF = 1e-7
GRID_POINTS = 5

CONVENTIONS = {
    "second_derivative": "nabla2_{b,c} u = nabla_b(nabla_c u) - Gamma_bc^e nabla_e u",
    "killing_transport": "du^d/dt = v^b L_be G^ed - v^b Gamma_be^d u^e; "
                         "dL_ca/dt = v^b (-u^e R_e^d_ca G_db + Gamma_bc^e L_ea + Gamma_ba^e L_ce)",
}


class UnderdeterminedError(ValueError):
    pass


# ---------------------------------------------------------------------------
# tangent lift


@dataclass
class LiftedField:
    base: list[Expr]      # u^a Q_a^A
    fiber: list[Expr]     # y^a Q_a^A du^c/dx^A - y^a u^b Q_ba^c
    names: list[str]      # coords followed by fiber coordinates

    def vector(self) -> list[Expr]:
        return list(self.base) + list(self.fiber)


def tangent_lift(u: Section) -> LiftedField:
    m = u.owner
    ys = [var(n) for n in m.fiber]
    base = [total(u[a] * m.anchor[a, A] for a in range(m.rank)) for A in range(m.dimM)]
    fiber = []
    for c in range(m.rank):
        terms = [ys[a] * m.anchor[a, A] * u.jacobian[A, c]
                 for a in range(m.rank) for A in range(m.dimM)]
        terms += [-(ys[a] * u[b] * m.bracket[b, a, c]) for a in range(m.rank) for b in range(m.rank)]
        fiber.append(total(terms))
    return LiftedField(base, fiber, list(m.coords) + list(m.fiber))


def _sample_E(m: AlgebroidModel, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = sample_points(m.box, samples, rng)
    if m.dimM == 0:
        x = np.zeros((samples, 0))
    y = rng.uniform(-1.0, 1.0, size=(len(x), m.rank))
    return np.concatenate([x, y], axis=1)


def lift_morphism_residual(u: Section, v: Section, samples: int = DEFAULT_SAMPLES,
                           seed: int = DEFAULT_SEED) -> float:
    """max over sampled points of E of |lift([u,v]) - [lift u, lift v]|."""
    m = u.owner
    lu, lv = tangent_lift(u), tangent_lift(v)
    lw = tangent_lift(bracket_sections(u, v))
    comm = vector_field_commutator(lu.vector(), lv.vector(), lu.names)
    res = [a - b for a, b in zip(lw.vector(), comm)]
    fn = CompiledExprs(res, lu.names, (len(res),))
    pts = _sample_E(m, samples, seed)
    return float(np.abs(fn.at(pts)).max(initial=0.0))


# ---------------------------------------------------------------------------
# residual forms


class _SectionData:
    """Compiled values, first and second derivatives of a section."""

    def __init__(self, u: Section):
        self.u = u
        self.val = u.value_fn
        self.jac = u.jacobian_fn
        self._hess = None

    @property
    def hess(self) -> CompiledExprs:
        if self._hess is None:
            h = _diff_array(self.u.jacobian, self.u.owner.coords)   # [B, A, a]
            self._hess = CompiledExprs(h, self.u.owner.coords, h.shape)
        return self._hess


def lie_derivative_metric(f: Fields, uv: np.ndarray, du: np.ndarray) -> np.ndarray:
    """K[p, b, c] from values ``uv`` (P, a) and ``du`` (P, A, a)."""
    rG = np.einsum("pa,paA,pAbc->pbc", uv, f.Q, f.dG)
    t = np.einsum("pbA,pAd,pdc->pbc", f.Q, du, f.G)
    s = np.einsum("pa,pabd,pdc->pbc", uv, f.Cb, f.G)
    return rG + t + np.swapaxes(t, 1, 2) - s - np.swapaxes(s, 1, 2)


def covariant_jacobian(f: Fields, Gam: np.ndarray, uv, du) -> np.ndarray:
    """``Du[p, b, d]`` = (nabla_b u)^d."""
    return np.einsum("pbA,pAd->pbd", f.Q, du) + np.einsum("pbed,pe->pbd", Gam, uv)


def _lemma_at(met, sd: _SectionData, pts):
    f = eval_fields(met, pts)
    return lie_derivative_metric(f, sd.val.at(pts), sd.jac.at(pts))


def killing_residual_lemma(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                           seed: int = DEFAULT_SEED) -> float:
    sd = _SectionData(u)
    res = sweep(met.owner.box, samples, seed, lambda pts: _lemma_at(met, sd, pts))
    return float(np.abs(res).max(initial=0.0))


def killing_residual_connection(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                                seed: int = DEFAULT_SEED) -> float:
    """max |<nabla_b u|s_c> + <nabla_c u|s_b>| using the Levi-Civita Gamma."""
    sd = _SectionData(u)

    def fn(pts):
        f = eval_fields(met, pts)
        Du = covariant_jacobian(f, gamma_from_fields(f), sd.val.at(pts), sd.jac.at(pts))
        L = np.einsum("pbd,pdc->pbc", Du, f.G)
        return L + np.swapaxes(L, 1, 2)

    return float(np.abs(sweep(met.owner.box, samples, seed, fn)).max(initial=0.0))


def linear_function(u: Section) -> Expr:
    """u^a(x) pi_a."""
    m = u.owner
    return total(u[a] * var(m.momenta[a]) for a in range(m.rank))


def _unit_momenta(m: AlgebroidModel, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed + 1)
    pi = rng.normal(size=(count, m.rank))
    return pi / np.linalg.norm(pi, axis=1, keepdims=True)


def _energy_bracket_sweep(met: MetricModel, eb: EnergyBracket, samples: int, seed: int) -> float:
    m = met.owner
    pis = _unit_momenta(m, samples, seed)
    if m.dimM == 0:
        return float(np.abs(eb(np.zeros((samples, 0)), pis)).max())

    def fn(pts):
        # pointwise redraws reuse the momentum of the first slot
        pi = pis[: len(pts)] if len(pts) == samples else pis[:1]
        return eb(pts, pi)

    return float(np.abs(sweep(m.box, samples, seed, fn)).max(initial=0.0))


def killing_residual_poisson(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED) -> float:
    """max |{u^a pi_a, H}| over sampled phase points with |pi| = 1."""
    return _energy_bracket_sweep(met, EnergyBracket(met, linear_function(u)), samples, seed)


@dataclass
class KillingReport:
    section: str
    residual_lemma: float
    residual_poisson: float
    residual_connection: float
    scale: float
    tolerance: float
    verdict: bool
    consistent: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def section_scale(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED) -> float:
    """max(1, |u|_inf, |G|_inf) over the sample box."""
    vals = sweep(met.owner.box, samples, seed,
                 lambda pts: np.concatenate([np.abs(u.value_fn.at(pts)),
                                             np.abs(met.g_fn.at(pts)).reshape(len(pts), -1)], axis=1))
    return max(1.0, float(vals.max(initial=0.0)))


def killing_check(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED, tol: float = KILLING_TOL) -> KillingReport:
    r1 = killing_residual_lemma(met, u, samples, seed)
    r2 = killing_residual_poisson(met, u, samples, seed)
    r3 = killing_residual_connection(met, u, samples, seed)
    scale = section_scale(met, u, samples, seed)
    verdicts = [r / scale < tol for r in (r1, r2, r3)]
    return KillingReport(section=u.name, residual_lemma=r1, residual_poisson=r2,
                         residual_connection=r3, scale=scale, tolerance=tol,
                         verdict=all(verdicts), consistent=len(set(verdicts)) == 1)


# ---------------------------------------------------------------------------
# conserved charges


def charge_series(met: MetricModel, u: Section, traj: Trajectory) -> np.ndarray:
    """<u|gamma(t)> along a trajectory (u^a pi_a for cogeodesics)."""
    m = met.owner
    uv = u.value_fn.at(traj.x) if m.dimM else np.broadcast_to(u.at(np.zeros(0)), (len(traj), m.rank))
    if traj.kind == "cogeodesic":
        return np.einsum("pa,pa->p", uv, traj.fiber)
    G = met.g_fn.at(traj.x) if m.dimM else np.broadcast_to(met.g_fn(np.zeros(0)), (len(traj), m.rank, m.rank))
    return np.einsum("pa,pab,pb->p", uv, G, traj.fiber)


def charge_along_geodesic(met: MetricModel, u: Section, traj: Trajectory) -> float:
    q = charge_series(met, u, traj)
    return float(np.abs(q - q[0]).max())


# ---------------------------------------------------------------------------
# Killing transport


def killing_data(met: MetricModel, u: Section, p) -> tuple[np.ndarray, np.ndarray]:
    """(u^a(p), L_ab(p)) with L_ab = (nabla_a u)^c G_cb."""
    f = eval_fields(met, p)
    pts = f.pts
    Du = covariant_jacobian(f, gamma_from_fields(f), u.value_fn.at(pts), u.jacobian_fn.at(pts))
    return u.value_fn.at(pts)[0], (Du @ f.G)[0]


def _transport_rhs(met: MetricModel, d: int, n: int):
    def f(z):
        x, y = z[:d], z[d:d + n]
        uu = z[d + n:d + 2 * n]
        L = z[d + 2 * n:].reshape(n, n)
        fl = eval_fields(met, x, second=True)
        Gam = gamma_from_fields(fl)
        R = curvature_from_fields(fl, Gam, dgamma_from_fields(fl))[0]
        Gam, G, Ginv, Q = Gam[0], fl.G[0], fl.Ginv[0], fl.Q[0]
        dx = y @ Q
        acc = -np.einsum("bca,b,c->a", Gam, y, y)
        du = y @ L @ Ginv - np.einsum("bed,b,e->d", Gam, y, uu)
        dL = (-np.einsum("e,edca,db,b->ca", uu, R, G, y)
              + np.einsum("b,bce,ea->ca", y, Gam, L)
              + np.einsum("b,bae,ce->ca", y, Gam, L))
        return np.concatenate([dx, acc, du, dL.ravel()])
    return f


def killing_transport(met: MetricModel, u0, L0, curve: Trajectory,
                      antisym_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Transport Killing data (u, L) along a geodesic trajectory; returns the endpoint values.

    The curve is re-integrated jointly with the transport equations using the
    trajectory's own step and initial state, so the base path is identical.
    """
    m = met.owner
    d, n = m.dimM, m.rank
    L0 = np.asarray(L0, dtype=float).reshape(n, n)
    if np.abs(L0 + L0.T).max() > antisym_tol:
        raise ValueError("L must be antisymmetric")
    if curve.kind == "cogeodesic":
        y0 = to_geodesic(met, curve)[0]
    else:
        y0 = curve.fiber[0]
    z0 = np.concatenate([curve.x[0], y0, np.asarray(u0, float), L0.ravel()])
    steps = len(curve) - 1
    out = rk4_steps(_transport_rhs(met, d, n), z0, steps, curve.h)[-1]
    return out[d + n:d + 2 * n], out[d + 2 * n:].reshape(n, n)


# ---------------------------------------------------------------------------
# discovery


def monomials(coords: Sequence[str], degree: int) -> list[Expr]:
    """All monomials in ``coords`` of total degree <= ``degree`` (graded, lexicographic)."""
    out: list[Expr] = [ONE]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(coords)), deg):
            e: Expr = ONE
            for i in sorted(set(combo)):
                k = combo.count(i)
                e = e * (var(coords[i]) if k == 1 else power(var(coords[i]), const(k)))
            out.append(e)
    return out


def tensor_grid(box, points: int = GRID_POINTS) -> np.ndarray:
    if not box:
        return np.zeros((1, 0))
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


@dataclass
class KillingBasis:
    sections: list[Section]
    structure_constants: np.ndarray     # C[alpha, beta, gamma]
    dim: int
    bound: int
    bound_exceeded: bool
    singular_values: np.ndarray
    gap_ratio: float
    closure_residual: float
    coefficients: np.ndarray = field(repr=False, default=None)


def _clean(c: float) -> float:
    return 0.0 if abs(c) < 1e-12 else float(c)


def _rref(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    A = A.astype(float).copy()
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[piv, c]) < tol:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r] /= A[r, c]
        for i in range(rows):
            if i != r:
                A[i] -= A[i, c] * A[r]
        r += 1
    return A[:r]


def killing_find(met: MetricModel, basis: Sequence | None = None, degree: int = 1,
                 grid_points: int = GRID_POINTS, cutoff: float = NULL_CUTOFF) -> KillingBasis:
    """Killing sections with components in span(basis), found as a null space.

    Each candidate u^a = sum_k c^a_k b_k(x); the lemma residual at a tensor
    grid is linear in c.  Singular values below ``cutoff * sigma_max`` count
    as zero.  The basis returned is orthonormal in coefficient space.
    """
    m = met.owner
    n = m.rank
    funcs = [as_expr(b) for b in basis] if basis is not None else monomials(m.coords, degree)
    K = len(funcs)
    pts = tensor_grid(m.box, grid_points)
    iu = np.triu_indices(n)
    rows = len(pts) * len(iu[0])
    unknowns = n * K
    if rows < unknowns:
        raise UnderdeterminedError(f"{rows} equations for {unknowns} unknowns; enlarge the grid")
    f = eval_fields(met, pts)
    bval = CompiledExprs(funcs, m.coords, (K,)).at(pts)                             # (P, K)
    bjac = CompiledExprs(_diff_array(np.array(funcs, dtype=object), m.coords),
                         m.coords, (m.dimM, K)).at(pts)                              # (P, A, K)
    cols = []
    for a in range(n):
        for k in range(K):
            uv = np.zeros((len(pts), n))
            du = np.zeros((len(pts), m.dimM, n))
            uv[:, a] = bval[:, k]
            du[:, :, a] = bjac[:, :, k]
            cols.append(lie_derivative_metric(f, uv, du)[:, iu[0], iu[1]].ravel())
    M = np.stack(cols, axis=1)
    _, sv, Vt = np.linalg.svd(M, full_matrices=True)
    sv_full = np.zeros(unknowns)
    sv_full[: len(sv)] = sv
    smax = sv_full.max(initial=0.0)
    zero = sv_full <= cutoff * smax if smax > 0 else np.ones(unknowns, bool)
    dim = int(zero.sum())
    nonzero = sv_full[~zero]
    if dim and len(nonzero) and sv_full[zero].max() > 0:
        gap = float(nonzero.min() / sv_full[zero].max())
    else:
        gap = float("inf")
    null = Vt[zero]
    if dim:
        null = _rref(null)
        q, _ = np.linalg.qr(null.T)
        null = np.where(np.abs(q.T) < 1e-13, 0.0, q.T)
        lead = null[np.arange(dim), np.argmax(null != 0, axis=1)]
        null = null * np.sign(lead)[:, None]
    sections = []
    for i, c in enumerate(null):
        coef = c.reshape(n, K)
        comps = [total(_clean(coef[a, k]) * funcs[k] for k in range(K) if _clean(coef[a, k]))
                 for a in range(n)]
        sections.append(Section(comps, m, f"k{i + 1}"))
    C, closure = structure_constants(sections, pts)
    bound = n * (n + 1) // 2
    return KillingBasis(sections=sections, structure_constants=C, dim=dim, bound=bound,
                        bound_exceeded=dim > bound, singular_values=sv_full, gap_ratio=gap,
                        closure_residual=closure, coefficients=null)


def structure_constants(sections: Sequence[Section], pts: np.ndarray) -> tuple[np.ndarray, float]:
    """C[alpha, beta, gamma] with [u_alpha, u_beta] = C u_gamma (least squares) and the misfit."""
    N = len(sections)
    if N == 0:
        return np.zeros((0, 0, 0)), 0.0
    U = np.stack([s.value_fn.at(pts).ravel() for s in sections], axis=1)
    C = np.zeros((N, N, N))
    worst = 0.0
    for al in range(N):
        for be in range(N):
            w = bracket_sections(sections[al], sections[be]).value_fn.at(pts).ravel()
            c, *_ = np.linalg.lstsq(U, w, rcond=None)
            C[al, be] = c
            worst = max(worst, float(np.abs(U @ c - w).max(initial=0.0)))
    C[np.abs(C) < 1e-12] = 0.0
    return C, worst


# ---------------------------------------------------------------------------
# geodesic sections, Stackel tensors, Maxwell-type identities


def geodesic_section_residual(met: MetricModel, v: Section, samples: int = DEFAULT_SAMPLES,
                              seed: int = DEFAULT_SEED) -> float:
    """max |nabla_v v| over samples."""
    def fn(pts):
        f = eval_fields(met, pts)
        vv = v.value_fn.at(pts)
        Dv = covariant_jacobian(f, gamma_from_fields(f), vv, v.jacobian_fn.at(pts))
        return np.linalg.norm(np.einsum("pb,pbd->pd", vv, Dv), axis=1)
    return float(sweep(met.owner.box, samples, seed, fn).max(initial=0.0))


@dataclass
class StackelTensor:
    """A function on E* polynomial of degree ``degree`` in the momenta.

    ``K = None`` stands for the energy H itself (which has no closed form
    when G is not constant).
    """

    K: Expr | None
    degree: int

    @classmethod
    def energy(cls) -> "StackelTensor":
        return cls(None, 2)

    @classmethod
    def power_of_section(cls, u: Section, k: int = 2) -> "StackelTensor":
        return cls(power(linear_function(u), const(k)) if k != 1 else linear_function(u), k)

    def homogeneity_residual(self, m: AlgebroidModel, samples: int = 16, seed: int = DEFAULT_SEED,
                             lam: float = 1.7) -> float:
        if self.K is None:
            return 0.0
        fn = CompiledExprs([self.K], m.coords + m.momenta, ())
        pts = _sample_E(m, samples, seed)
        scaled = pts.copy()
        scaled[:, m.dimM:] *= lam
        return float(np.abs(fn.at(scaled) - lam ** self.degree * fn.at(pts)).max())


def stackel_residual(met: MetricModel, K: StackelTensor, samples: int = DEFAULT_SAMPLES,
                     seed: int = DEFAULT_SEED) -> float:
    """max |{K, H}| over sampled phase points with |pi| = 1."""
    return _energy_bracket_sweep(met, EnergyBracket(met, K.K), samples, seed)


def second_covariant(f: Fields, Gam, dGam, uv, du, d2u) -> tuple[np.ndarray, np.ndarray]:
    """(Du, D2u) with Du[p,c,d] = (nabla_c u)^d and D2u[p,b,c,d] = (nabla2_{b,c} u)^d."""
    Du = covariant_jacobian(f, Gam, uv, du)
    # d/dx^A of (nabla_c u)^d
    dDu = (np.einsum("pAcB,pBd->pAcd", f.dQ, du) + np.einsum("pcB,pABd->pAcd", f.Q, d2u)
           + np.einsum("pAced,pe->pAcd", dGam, uv) + np.einsum("pced,pAe->pAcd", Gam, du))
    D2u = (np.einsum("pbA,pAcd->pbcd", f.Q, dDu)
           + np.einsum("pbed,pce->pbcd", Gam, Du)
           - np.einsum("pbce,ped->pbcd", Gam, Du))
    return Du, D2u


def maxwell_identities(met: MetricModel, u: Section, samples: int = DEFAULT_SAMPLES,
                       seed: int = DEFAULT_SEED) -> dict[str, float]:
    """Residuals of the identities satisfied by Killing sections.

    ``div``: max |(nabla_a u)^a|.
    ``second_derivative``: max |(nabla2_{b,c} u)^d G_da + u^e R_e^d_ca G_db|.
    ``ricci_trace``: max |G^cb (nabla2_{b,c} u)^f + u^e R_ea G^af|.
    """
    sd = _SectionData(u)
    m = met.owner

    def fn(pts):
        f = eval_fields(met, pts, second=True)
        Gam = gamma_from_fields(f)
        dGam = dgamma_from_fields(f)
        R = curvature_from_fields(f, Gam, dGam)
        uv, du = sd.val.at(pts), sd.jac.at(pts)
        d2u = sd.hess.at(pts) if m.dimM else np.zeros((len(pts), 0, 0, m.rank))
        Du, D2u = second_covariant(f, Gam, dGam, uv, du, d2u)
        div = np.abs(np.einsum("paa->p", Du))
        lhs = np.einsum("pbcd,pda->pbca", D2u, f.G)
        rhs = -np.einsum("pe,pedca,pdb->pbca", uv, R, f.G)
        second = np.abs(lhs - rhs).reshape(len(pts), -1).max(axis=1)
        ric = np.einsum("peccb->peb", R)
        trace = (np.einsum("pcb,pbcf->pf", f.Ginv, D2u)
                 + np.einsum("pe,pea,paf->pf", uv, ric, f.Ginv))
        return np.stack([div, second, np.abs(trace).max(axis=1)], axis=1)

    res = sweep(m.box, samples, seed, fn)
    return {"div": float(res[:, 0].max()), "second_derivative": float(res[:, 1].max()),
            "ricci_trace": float(res[:, 2].max())}
