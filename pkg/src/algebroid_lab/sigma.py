"""Lattice discretization of the Lie algebroid sigma model.

A configuration on a structured grid over the source (Sigma, g) holds
phi^A(z) and chi_i^a(z) at every node.  Arrays are laid out as
``phi[*grid, A]`` and ``chi[*grid, i, a]``.

Curl-condition convention: for a morphism,
chi_j^b chi_i^c Q_cb^a = d chi_i^a/dz^j - d chi_j^a/dz^i; the signed residual
is reported for the pair (j, i) = (0, 1).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .algebroid import AlgebroidModel, Section, _diff_array
from .dynamics import EPoint, Trajectory, integrate
from .expr import CompiledExprs, as_expr, total
from .riemann import MetricModel, check_nondegenerate, eval_fields, gamma_from_fields

CONVENTIONS = {
    "curl_condition": "chi_j^b chi_i^c Q_cb^a = d_j chi_i^a - d_i chi_j^a (signed residual, (j,i)=(0,1))",
    "field_strength": "F_bc = Q_b dC_c - Q_c dC_b - Q_bc^e C_e",
    "action_quadrature": "node-centred trapezoid weights (half weight on Dirichlet faces)",
}

TENSION_TOL = 1e-6


class NonConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# source manifold and configurations


@dataclass(eq=False)
class SourceManifold:
    k: int
    sizes: tuple
    box: list
    names: list = field(default_factory=lambda: ["t"])
    metric: list | None = None          # upper-triangular rows of expressions
    periodic: tuple = ()

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError("source dimension must be 1 or 2")
        self.sizes = tuple(int(s) for s in self.sizes)
        self.box = [(float(lo), float(hi)) for lo, hi in self.box]
        if len(self.sizes) != self.k or len(self.box) != self.k:
            raise ValueError("need one grid size and one interval per source axis")
        if len(self.names) != self.k:
            raise ValueError("need one name per source axis")
        self.periodic = tuple(bool(p) for p in self.periodic) or (False,) * self.k
        if any(n < 4 for n in self.sizes):
            raise ValueError("each axis needs at least 4 nodes")
        rows = self.metric or [[1.0 if j == i else 0.0 for j in range(i, self.k)] for i in range(self.k)]
        g = np.empty((self.k, self.k), dtype=object)
        for i in range(self.k):
            for j in range(i, self.k):
                g[i, j] = g[j, i] = as_expr(rows[i][j - i])
        self.g = g
        self.g_fn = CompiledExprs(g, self.names, g.shape)
        if any(h <= 0 for h in self.h):
            raise ValueError("grid spacings must be positive")

    @property
    def shape(self) -> tuple:
        return self.sizes

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / (n if per else n - 1)
                     for (lo, hi), n, per in zip(self.box, self.sizes, self.periodic))

    def axis(self, i: int) -> np.ndarray:
        lo = self.box[i][0]
        return lo + self.h[i] * np.arange(self.sizes[i])

    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*[self.axis(i) for i in range(self.k)], indexing="ij")
        return np.stack(grids, axis=-1)

    def metric_data(self, z: np.ndarray):
        """(sqrt|g|, g^ij) at points z of shape (..., k)."""
        flat = z.reshape(-1, self.k)
        g = self.g_fn.at(flat)
        check_nondegenerate(g, flat)
        sq = np.sqrt(np.abs(np.linalg.det(g)))
        gi = np.linalg.inv(g)
        return sq.reshape(z.shape[:-1]), gi.reshape(z.shape[:-1] + (self.k, self.k))

    def weights(self) -> np.ndarray:
        """Node-centred quadrature weights (trapezoid on Dirichlet axes)."""
        w = np.ones(self.shape)
        for i in range(self.k):
            wi = np.full(self.sizes[i], self.h[i])
            if not self.periodic[i]:
                wi[0] = wi[-1] = 0.5 * self.h[i]
            shp = [1] * self.k
            shp[i] = -1
            w = w * wi.reshape(shp)
        return w

    def interior(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for i in range(self.k):
            if not self.periodic[i]:
                idx = [slice(None)] * self.k
                idx[i] = 0
                mask[tuple(idx)] = False
                idx[i] = -1
                mask[tuple(idx)] = False
        return mask


@dataclass
class SigmaConfiguration:
    phi: np.ndarray      # (*grid, dimM)
    chi: np.ndarray      # (*grid, k, rank)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.chi = np.asarray(self.chi, dtype=float)
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.chi))):
            raise ValueError("configuration has non-finite entries")

    def check(self, source: SourceManifold, m: AlgebroidModel) -> None:
        if self.phi.shape != source.shape + (m.dimM,):
            raise ValueError(f"phi has shape {self.phi.shape}, expected {source.shape + (m.dimM,)}")
        if self.chi.shape != source.shape + (source.k, m.rank):
            raise ValueError(f"chi has shape {self.chi.shape}")

    def to_csv(self, source: SourceManifold, m: AlgebroidModel, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = [f"z_{n}" for n in source.names] + [f"phi_{c}" for c in m.coords]
        header += [f"chi_{source.names[i]}_{s}" for i in range(source.k) for s in m.frame]
        w.writerow(header)
        z = source.nodes().reshape(-1, source.k)
        phi = self.phi.reshape(len(z), -1)
        chi = self.chi.reshape(len(z), -1)
        for r in range(len(z)):
            w.writerow([repr(float(v)) for v in (*z[r], *phi[r], *chi[r])])
        text = buf.getvalue()
        if out is not None:
            with open(out, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, source: SourceManifold, m: AlgebroidModel) -> "SigmaConfiguration":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        expected = source.k + m.dimM + source.k * m.rank
        if len(header) != expected or body.shape[0] != int(np.prod(source.shape)):
            raise ValueError("CSV does not match the source grid and target model")
        k, d = source.k, m.dimM
        phi = body[:, k:k + d].reshape(source.shape + (d,))
        chi = body[:, k + d:].reshape(source.shape + (k, m.rank))
        return cls(phi, chi)


@dataclass
class OneFormPotential:
    C: list

    def __post_init__(self):
        self.C = [as_expr(c) for c in self.C]


# ---------------------------------------------------------------------------
# finite differences


def _diff_axis(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Second-order derivative along ``axis``: central inside, one-sided at Dirichlet ends."""
    if periodic:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(d, 0, axis)


def _div_axis(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Like :func:`_diff_axis`, but nodes next to a Dirichlet face use an inward stencil.

    Fields such as chi are themselves difference quotients whose boundary
    values carry a different truncation error; differencing across them
    would make divergences first-order next to the boundary.
    """
    d = _diff_axis(f, h, axis, periodic)
    if periodic:
        return d
    f = np.moveaxis(f, axis, 0)
    d = np.moveaxis(d, axis, 0)
    d[1] = (-3 * f[1] + 4 * f[2] - f[3]) / (2 * h)
    d[-2] = (3 * f[-2] - 4 * f[-3] + f[-4]) / (2 * h)
    return np.moveaxis(d, 0, axis)


def _grad(f: np.ndarray, source: SourceManifold) -> np.ndarray:
    """``out[*grid, i, ...]`` = d f / dz^i."""
    k = source.k
    parts = [_diff_axis(f, source.h[i], i, source.periodic[i]) for i in range(k)]
    return np.stack(parts, axis=k)


def _flat(arr: np.ndarray, k: int) -> np.ndarray:
    return arr.reshape((math.prod(arr.shape[:k]),) + arr.shape[k:])


# ---------------------------------------------------------------------------
# residuals, action, tension


def morphism_residual(cfg: SigmaConfiguration, m: AlgebroidModel, source: SourceManifold,
                      signed: bool = False):
    """(resA, resB): admissibility and curl-condition residuals on interior nodes."""
    cfg.check(source, m)
    k = source.k
    inner = source.interior()
    phi = _flat(cfg.phi, k)
    Q = m.anchor_fn.at(phi).reshape(source.shape + (m.rank, m.dimM))
    dphi = _grad(cfg.phi, source)                                   # (*g, i, A)
    resA_arr = dphi - np.einsum("...ia,...aA->...iA", cfg.chi, Q)
    resA = float(np.abs(resA_arr[inner]).max(initial=0.0))
    if k == 1:
        return (resA, 0.0) if not signed else (resA, 0.0, np.zeros(source.shape + (m.rank,)))
    Cb = m.bracket_fn.at(phi).reshape(source.shape + (m.rank,) * 3)
    dchi = _grad(cfg.chi, source)                                   # (*g, j, i, a)
    lhs = np.einsum("...b,...c,...cba->...a", cfg.chi[..., 0, :], cfg.chi[..., 1, :], Cb)
    rhs = dchi[..., 0, 1, :] - dchi[..., 1, 0, :]
    curl = lhs - rhs
    resB = float(np.abs(curl[inner]).max(initial=0.0))
    return (resA, resB) if not signed else (resA, resB, curl)


def lagrangian_density(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold) -> np.ndarray:
    """1/2 sqrt|g| g^ij chi_j^b chi_i^a G_ab at every node."""
    k = source.k
    m = met.owner
    phi = _flat(cfg.phi, k)
    G = met.g_fn.at(phi)
    check_nondegenerate(G, phi)
    G = G.reshape(source.shape + (m.rank, m.rank))
    sq, gi = source.metric_data(source.nodes())
    return 0.5 * sq * np.einsum("...ij,...jb,...ia,...ab->...", gi, cfg.chi, cfg.chi, G)


def action(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold) -> float:
    cfg.check(source, met.owner)
    return float(np.sum(source.weights() * lagrangian_density(cfg, met, source)))


def el_residual(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold) -> np.ndarray:
    """Tension field ``tau[*grid, a]``; entries on Dirichlet boundary nodes are set to zero."""
    cfg.check(source, met.owner)
    k = source.k
    z = source.nodes()
    sq, gi = source.metric_data(z)
    flux = sq[..., None, None] * np.einsum("...ji,...ia->...ja", gi, cfg.chi)   # (*g, j, a)
    div = sum(_div_axis(flux[..., j, :], source.h[j], j, source.periodic[j]) for j in range(k))
    f = eval_fields(met, _flat(cfg.phi, k))
    Gam = gamma_from_fields(f).reshape(source.shape + (met.owner.rank,) * 3)
    quad = np.einsum("...ij,...jc,...ib,...bca->...a", gi, cfg.chi, cfg.chi, Gam)
    tau = div / sq[..., None] + quad
    tau[~source.interior()] = 0.0
    return tau


def max_tension(cfg, met, source) -> float:
    return float(np.abs(el_residual(cfg, met, source)).max(initial=0.0))


# ---------------------------------------------------------------------------
# relaxation


class _BaseMetric:
    """Pull-forward metric on M: g_M = Q^T S^-1 G S^-1 Q with S = Q Q^T (injective anchor)."""

    def __init__(self, met: MetricModel):
        self.met = met
        self.m = met.owner

    def __call__(self, pts: np.ndarray, deriv: bool = True):
        f = eval_fields(self.met, pts, second=False)
        m = self.m
        Q = f.Q
        S = np.einsum("paA,pbA->pab", Q, Q)
        check_nondegenerate_anchor(S, pts)
        Si = np.linalg.inv(S)
        W = Si @ f.G @ Si
        gM = np.einsum("paA,pab,pbB->pAB", Q, W, Q)
        if not deriv:
            return gM, None
        dQ = m.danchor_fn.at(pts)                                    # (P, C, a, A)
        dS = np.einsum("pCaA,pbA->pCab", dQ, Q)
        dS = dS + np.swapaxes(dS, 2, 3)
        dSi = -np.einsum("pab,pCbc,pcd->pCad", Si, dS, Si)
        dW = (np.einsum("pCab,pbc,pcd->pCad", dSi, f.G, Si)
              + np.einsum("pab,pCbc,pcd->pCad", Si, f.dG, Si)
              + np.einsum("pab,pbc,pCcd->pCad", Si, f.G, dSi))
        dgM = (np.einsum("pCaA,pab,pbB->pCAB", dQ, W, Q)
               + np.einsum("paA,pCab,pbB->pCAB", Q, dW, Q)
               + np.einsum("paA,pab,pCbB->pCAB", Q, W, dQ))
        return gM, dgM

    def chi_from_dphi(self, phi: np.ndarray, dphi: np.ndarray) -> np.ndarray:
        """chi_i = dphi_i Q^T S^-1 (exact when dphi_i lies in the anchor image)."""
        Q = self.m.anchor_fn.at(phi)
        Si = np.linalg.inv(np.einsum("paA,pbA->pab", Q, Q))
        return np.einsum("piA,pbA,pba->pia", dphi, Q, Si)


def check_nondegenerate_anchor(S: np.ndarray, pts) -> None:
    n = S.shape[-1]
    det = np.linalg.det(S)
    scale = np.abs(S).reshape(len(S), -1).max(axis=1) ** n
    if np.any(~(np.abs(det) > 1e-12 * scale)):
        raise ValueError("relax needs an injective anchor (Q Q^T invertible) along the configuration")


def _neighbors(i: int, n: int, periodic: bool) -> list[int]:
    out = [i]
    for j in (i - 1, i + 1):
        if periodic:
            out.append(j % n)
        elif 0 <= j < n:
            out.append(j)
    return out


def _colors(n: int, periodic: bool) -> np.ndarray:
    c = np.arange(n) % 3
    if periodic and n % 3:
        base = 3 * (n // 3)
        c[base:] = 3 + np.arange(n - base)
    return c


class _DiscreteEnergy:
    """Edge-based discrete action as a function of the free phi values."""

    def __init__(self, met: MetricModel, source: SourceManifold, phi0: np.ndarray):
        self.met = met
        self.source = source
        self.base = _BaseMetric(met)
        self.d = met.owner.dimM
        self.shape = source.shape
        N = int(np.prod(self.shape))
        self.N = N
        idx = np.arange(N).reshape(self.shape)
        k = source.k
        h = source.h
        vol = float(np.prod(h))
        self.phi0 = phi0.reshape(N, self.d).copy()
        free = source.interior().ravel()
        self.free = np.flatnonzero(free)
        # axis edges
        ea, eb, ec = [], [], []
        for i in range(k):
            a = idx
            b = np.roll(idx, -1, axis=i)
            if not source.periodic[i]:
                sl = [slice(None)] * k
                sl[i] = slice(0, -1)
                a, b = a[tuple(sl)], b[tuple(sl)]
            zA = source.nodes().reshape(N, k)[a.ravel()]
            zB = zA.copy()
            zB[:, i] += h[i]
            sq, gi = source.metric_data(0.5 * (zA + zB))
            w = np.ones(a.shape)
            for j in range(k):
                if j != i and not source.periodic[j]:
                    sl = [slice(None)] * k
                    sl[j] = 0
                    w[tuple(sl)] *= 0.5
                    sl[j] = -1
                    w[tuple(sl)] *= 0.5
            ea.append(a.ravel())
            eb.append(b.ravel())
            ec.append(0.5 * sq * gi[:, i, i] * vol / h[i] ** 2 * w.ravel())
        self.ea, self.eb, self.ec = np.concatenate(ea), np.concatenate(eb), np.concatenate(ec)
        # cell cross terms (k = 2)
        self.cells = None
        if k == 2:
            c00 = idx
            c10 = np.roll(idx, -1, 0)
            c01 = np.roll(idx, -1, 1)
            c11 = np.roll(c10, -1, 1)
            sl = tuple(slice(None) if source.periodic[i] else slice(0, -1) for i in range(2))
            corners = [c[sl].ravel() for c in (c00, c10, c01, c11)]
            zc = source.nodes().reshape(N, 2)[corners[0]] + 0.5 * np.array(h)
            sq, gi = source.metric_data(zc)
            coef = sq * gi[:, 0, 1] * vol
            if np.any(coef != 0):
                self.cells = (corners, coef)

    def full(self, x: np.ndarray) -> np.ndarray:
        phi = self.phi0.copy()
        phi[self.free] = x.reshape(-1, self.d)
        return phi

    def _terms(self, phi: np.ndarray, grad: bool):
        D = phi[self.eb] - phi[self.ea]
        mid = 0.5 * (phi[self.eb] + phi[self.ea])
        gM, dgM = self.base(mid, deriv=grad)
        e = self.ec * np.einsum("pA,pAB,pB->p", D, gM, D)
        g = None
        if grad:
            g = np.zeros_like(phi)
            lin = 2 * self.ec[:, None] * np.einsum("pAB,pB->pA", gM, D)
            curv = 0.5 * self.ec[:, None] * np.einsum("pA,pCAB,pB->pC", D, dgM, D)
            np.add.at(g, self.eb, lin + curv)
            np.add.at(g, self.ea, -lin + curv)
        if self.cells is not None:
            (c00, c10, c01, c11), coef = self.cells
            h = self.source.h
            a1 = (phi[c10] - phi[c00] + phi[c11] - phi[c01]) / (2 * h[0])
            a2 = (phi[c01] - phi[c00] + phi[c11] - phi[c10]) / (2 * h[1])
            mc = 0.25 * (phi[c00] + phi[c10] + phi[c01] + phi[c11])
            gc, dgc = self.base(mc, deriv=grad)
            e = np.concatenate([e, coef * np.einsum("pA,pAB,pB->p", a1, gc, a2)])
            if grad:
                v1 = coef[:, None] * np.einsum("pAB,pB->pA", gc, a2) / (2 * h[0])   # dE/d a1 scaled
                v2 = coef[:, None] * np.einsum("pA,pAB->pB", a1, gc) / (2 * h[1])
                vm = 0.25 * coef[:, None] * np.einsum("pA,pCAB,pB->pC", a1, dgc, a2)
                for idx, s1, s2 in ((c00, -1, -1), (c10, 1, -1), (c01, -1, 1), (c11, 1, 1)):
                    np.add.at(g, idx, s1 * v1 + s2 * v2 + vm)
        return e, g

    def value(self, x) -> float:
        return math.fsum(self._terms(self.full(x), grad=False)[0])

    def value_terms(self, x) -> np.ndarray:
        return self._terms(self.full(x), grad=False)[0]

    def gradient(self, x) -> np.ndarray:
        return self._terms(self.full(x), grad=True)[1][self.free].ravel()

    def node_volumes(self) -> np.ndarray:
        return self.source.weights().ravel()[self.free]

    def hessian(self, x: np.ndarray, eps: float = 1e-5) -> sp.csr_matrix:
        """Central finite differences of the analytic gradient, columns grouped by colouring."""
        src = self.source
        k, d = src.k, self.d
        pos = -np.ones(self.N, dtype=int)
        pos[self.free] = np.arange(len(self.free))
        coords = np.array(np.unravel_index(np.arange(self.N), self.shape)).T      # (N, k)
        cols = [_colors(src.sizes[i], src.periodic[i]) for i in range(k)]
        ncol = [c.max() + 1 for c in cols]
        color = cols[0][coords[:, 0]]
        for i in range(1, k):
            color = color * ncol[i] + cols[i][coords[:, i]]
        # stencil neighbourhoods
        nbrs = []
        for node in range(self.N):
            sets = [_neighbors(int(coords[node, i]), src.sizes[i], src.periodic[i]) for i in range(k)]
            grid = np.array(np.meshgrid(*sets, indexing="ij")).reshape(k, -1).T
            nbrs.append(np.ravel_multi_index(tuple(grid.T), self.shape))
        rows, colsi, vals = [], [], []
        base = self.full(x)
        for c in np.unique(color[self.free]):
            group = self.free[color[self.free] == c]
            for A in range(d):
                plus = base.copy()
                minus = base.copy()
                step = eps * np.maximum(1.0, np.abs(base[group, A]))
                plus[group, A] += step
                minus[group, A] -= step
                gp = self._terms(plus, True)[1]
                gm = self._terms(minus, True)[1]
                for gi_, node in enumerate(group):
                    col = pos[node] * d + A
                    for r in nbrs[node]:
                        if pos[r] < 0:
                            continue
                        dv = (gp[r] - gm[r]) / (2 * step[gi_])
                        for B in range(d):
                            rows.append(pos[r] * d + B)
                            colsi.append(col)
                            vals.append(dv[B])
        n = len(self.free) * d
        H = sp.coo_matrix((vals, (rows, colsi)), shape=(n, n)).tocsr()
        return (0.5 * (H + H.T)).tocsr()


@dataclass
class RelaxResult:
    cfg: SigmaConfiguration
    converged: bool
    iterations: int
    action: float
    tension: float
    log: list = field(default_factory=list)

    def log_csv(self, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "action", "max_tension", "step"])
        for row in self.log:
            w.writerow([row["iter"], repr(row["action"]), repr(row["max_tension"]), repr(row["step"])])
        text = buf.getvalue()
        if out is not None:
            with open(out, "w") as fh:
                fh.write(text)
        return text


def reconstruct_chi(met: MetricModel, source: SourceManifold, phi: np.ndarray) -> np.ndarray:
    """chi_i^a from phi by the anchor pseudo-inverse (second-order differences)."""
    k = source.k
    dphi = _grad(phi, source)
    chi = _BaseMetric(met).chi_from_dphi(_flat(phi, k), _flat(dphi, k))
    return chi.reshape(source.shape + (k, met.owner.rank))


def relax(cfg0: SigmaConfiguration, met: MetricModel, source: SourceManifold,
          step: float = 1.0, iters: int = 50, tol: float = TENSION_TOL,
          max_halvings: int = 30) -> RelaxResult:
    """Drive a configuration to a discrete harmonic map.

    phi on the Dirichlet boundary stays fixed.  Each iteration takes a Newton
    step on the discrete action (sparse Hessian from finite differences of
    the analytic gradient), halving the step until the action does not
    increase.  Convergence is declared when the discrete tension (action
    gradient per unit node volume) drops below ``tol``.
    """
    m = met.owner
    cfg0.check(source, m)
    prob = _DiscreteEnergy(met, source, cfg0.phi)
    x = prob.phi0[prob.free].ravel()
    vols = np.repeat(prob.node_volumes(), prob.d)
    log = []
    S = prob.value(x)
    converged = False
    it = 0
    for it in range(iters + 1):
        g = prob.gradient(x)
        tension = float(np.abs(g / vols).max(initial=0.0))
        if it == 0:
            log.append({"iter": 0, "action": S, "max_tension": tension, "step": 0.0})
        if tension < tol:
            converged = True
            break
        if it == iters:
            break
        H = prob.hessian(x)
        try:
            dx = spsolve(H.tocsc(), -g)
        except RuntimeError:
            dx = np.full_like(g, np.nan)
        if not np.all(np.isfinite(dx)) or g @ dx >= 0:
            dx = -g / max(float(np.abs(H.diagonal()).max(initial=0.0)), 1e-300)
        t = step
        accepted = False
        resolution = 64 * np.finfo(float).eps * float(np.abs(prob.value_terms(x)).sum())
        for _ in range(max_halvings + 1):
            xn = x + t * dx
            Sn = prob.value(xn)
            if np.isfinite(Sn) and (Sn <= S or (Sn - S <= resolution and
                                                np.abs(prob.gradient(xn) / vols).max() < tension)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x, S = xn, Sn
        tn = float(np.abs(prob.gradient(x) / vols).max(initial=0.0))
        log.append({"iter": it + 1, "action": S, "max_tension": tn, "step": t})
    phi = prob.full(x).reshape(source.shape + (m.dimM,))
    chi = reconstruct_chi(met, source, phi)
    cfg = SigmaConfiguration(phi, chi)
    return RelaxResult(cfg=cfg, converged=converged, iterations=it, action=S, tension=tension, log=log)


def discrete_action(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold) -> float:
    """The edge-based action minimized by :func:`relax`."""
    return _DiscreteEnergy(met, source, cfg.phi).value(
        cfg.phi.reshape(-1, met.owner.dimM)[source.interior().ravel()].ravel())


def line_configuration(met: MetricModel, source: SourceManifold, x_start, x_end) -> SigmaConfiguration:
    """k = 1 configuration interpolating linearly between the two endpoints."""
    if source.k != 1:
        raise ValueError("line configurations need a one-dimensional source")
    t = np.linspace(0.0, 1.0, source.sizes[0])[:, None]
    phi = (1 - t) * np.asarray(x_start, float) + t * np.asarray(x_end, float)
    return SigmaConfiguration(phi, reconstruct_chi(met, source, phi))


# ---------------------------------------------------------------------------
# symmetries


def _section_fields(u: Section, phi: np.ndarray):
    return u.value_fn.at(phi), u.jacobian_fn.at(phi)


def field_redefinition(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold,
                       sections: Sequence[Section], xi, epsilon: float) -> SigmaConfiguration:
    """phi^A += eps xi^al u_al^a Q_a^A,  chi_i^a += eps xi^al chi_i^b (Q_b du_al^a - u_al^c Q_cb^a)."""
    m = met.owner
    k = source.k
    xi = np.asarray(xi, dtype=float).reshape(len(sections))
    phi = _flat(cfg.phi, k)
    chi = _flat(cfg.chi, k)
    Q = m.anchor_fn.at(phi)
    Cb = m.bracket_fn.at(phi)
    dphi = np.zeros_like(phi)
    dchi = np.zeros_like(chi)
    for x_al, u in zip(xi, sections):
        if x_al == 0.0:
            continue
        uv, du = _section_fields(u, phi)
        dphi += x_al * np.einsum("pa,paA->pA", uv, Q)
        M = np.einsum("pbA,pAa->pba", Q, du) - np.einsum("pc,pcba->pba", uv, Cb)
        dchi += x_al * np.einsum("pib,pba->pia", chi, M)
    return SigmaConfiguration((phi + epsilon * dphi).reshape(cfg.phi.shape),
                              (chi + epsilon * dchi).reshape(cfg.chi.shape))


def invariance_check(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold,
                     sections: Sequence[Section], epsilon: float, xi=None) -> float:
    """|S(redefined) - S| / epsilon."""
    xi = np.ones(len(sections)) if xi is None else xi
    s0 = action(cfg, met, source)
    s1 = action(field_redefinition(cfg, met, source, sections, xi, epsilon), met, source)
    return abs(s1 - s0) / epsilon


def noether_current(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold,
                    sections: Sequence[Section], xi) -> np.ndarray:
    """J^j = xi^al u_al^a g^ji chi_i^b G_ba at every node, shape (*grid, k)."""
    m = met.owner
    k = source.k
    xi = np.asarray(xi, dtype=float).reshape(len(sections))
    phi = _flat(cfg.phi, k)
    G = met.g_fn.at(phi).reshape(source.shape + (m.rank, m.rank))
    u = sum(x * s.value_fn.at(phi) for x, s in zip(xi, sections)).reshape(source.shape + (m.rank,))
    _, gi = source.metric_data(source.nodes())
    return np.einsum("...a,...ji,...ib,...ba->...j", u, gi, cfg.chi, G)


def noether_divergence(cfg: SigmaConfiguration, met: MetricModel, source: SourceManifold,
                       sections: Sequence[Section], xi) -> float:
    """max over interior nodes of |(1/sqrt g) d_j (sqrt g J^j)|."""
    J = noether_current(cfg, met, source, sections, xi)
    sq, _ = source.metric_data(source.nodes())
    div = sum(_div_axis(sq * J[..., j], source.h[j], j, source.periodic[j]) for j in range(source.k))
    div = div / sq
    return float(np.abs(div[source.interior()]).max(initial=0.0))


# ---------------------------------------------------------------------------
# charged particle


def field_strength_exprs(m: AlgebroidModel, C) -> np.ndarray:
    """F[b, c] = rho(s_b) C_c - rho(s_c) C_b - Q_bc^e C_e as expressions."""
    C = C.C if isinstance(C, OneFormPotential) else [as_expr(c) for c in C]
    if len(C) != m.rank:
        raise ValueError(f"one-form needs {m.rank} components")
    dC = _diff_array(np.array(C, dtype=object), m.coords)                # [A, c]
    F = np.empty((m.rank, m.rank), dtype=object)
    for b in range(m.rank):
        for c in range(m.rank):
            terms = [m.anchor[b, A] * dC[A, c] for A in range(m.dimM)]
            terms += [-(m.anchor[c, A] * dC[A, b]) for A in range(m.dimM)]
            terms += [-(m.bracket[b, c, e] * C[e]) for e in range(m.rank)]
            F[b, c] = total(terms)
    return F


def field_strength(m: AlgebroidModel, C, p) -> np.ndarray:
    F = field_strength_exprs(m, C)
    return CompiledExprs(F, m.coords, F.shape)(p)


def exact_oneform(m: AlgebroidModel, f) -> OneFormPotential:
    """C = d_E f, i.e. C_a = rho(s_a)[f]."""
    return OneFormPotential(m.rho(f))


def lie_derivative_oneform(m: AlgebroidModel, u: Section, C) -> list:
    """(L_u C)_b = u^a F_ab + rho(s_b)[u^a C_a] as expressions."""
    C = C.C if isinstance(C, OneFormPotential) else [as_expr(c) for c in C]
    F = field_strength_exprs(m, C)
    pairing = total(u[a] * C[a] for a in range(m.rank))
    rho = m.rho(pairing)
    return [total([u[a] * F[a, b] for a in range(m.rank)] + [rho[b]]) for b in range(m.rank)]


def charged_particle(met: MetricModel, C, s0: EPoint, t_end: float, h: float,
                     killing: Section | None = None) -> Trajectory:
    """RK4 for x' = chi Q, chi'^a = -Gamma_bc^a chi^b chi^c - chi^b F_bc G^ca.

    With a ``killing`` section the charged current u^a (chi^b G_ba + C_a) is
    stored in ``traj.extras['charged_current']`` along with the sampled
    size of L_u C.
    """
    m = met.owner
    Cx = C.C if isinstance(C, OneFormPotential) else [as_expr(c) for c in C]
    traj = integrate(met, "charged", s0, t_end, h, oneform=Cx)
    Ffn = CompiledExprs(field_strength_exprs(m, Cx), m.coords, (m.rank, m.rank))
    F = Ffn.at(traj.x)
    traj.extras["F_antisymmetry"] = float(np.abs(F + np.swapaxes(F, 1, 2)).max(initial=0.0))
    if killing is not None:
        G = met.g_fn.at(traj.x)
        uv = killing.value_fn.at(traj.x)
        Cv = CompiledExprs(Cx, m.coords, (m.rank,)).at(traj.x)
        traj.extras["charged_current"] = np.einsum(
            "pa,pa->p", uv, np.einsum("pb,pba->pa", traj.fiber, G) + Cv)
        LC = CompiledExprs(lie_derivative_oneform(m, killing, Cx), m.coords, (m.rank,)).at(traj.x)
        traj.extras["lie_derivative_C"] = float(np.abs(LC).max(initial=0.0))
    return traj


def fit_circle(xy: np.ndarray) -> tuple[np.ndarray, float]:
    """Algebraic least-squares circle fit; returns (centre, radius)."""
    A = np.column_stack([2 * xy[:, 0], 2 * xy[:, 1], np.ones(len(xy))])
    b = (xy ** 2).sum(axis=1)
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.array([cx, cy]), float(np.sqrt(c + cx * cx + cy * cy))
