"""Energy, the linear Poisson bracket on E*, and (co)geodesic flows.

Phase space E* carries coordinates (x^A, pi_a); E carries (x^A, y^a).  The
bracket of two functions is

    {F, K} = Q_a^A (dF/dpi_a dK/dx^A - dF/dx^A dK/dpi_a) - Q_ba^c pi_c dF/dpi_a dK/dpi_b

so {pi_a, x^B} = delta_a^B, and the cogeodesic flow is dF/dt = {H, F}.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import root

from .algebroid import AlgebroidModel
from .expr import CompiledExprs, Expr, as_expr, diff, total, var
from .riemann import MetricModel, check_nondegenerate

BLOWUP = 1e12
KINDS = ("cogeodesic", "geodesic", "charged")


class BlowUpError(ArithmeticError):
    """State left the finite range; ``trajectory`` holds everything up to ``t_last``."""

    def __init__(self, t_last: float, trajectory: "Trajectory"):
        super().__init__(f"integration blew up after t = {t_last:.6g}")
        self.t_last = t_last
        self.trajectory = trajectory


@dataclass
class PhasePoint:
    x: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.pi = np.asarray(self.pi, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.pi))):
            raise ValueError("phase point has non-finite entries")


@dataclass
class EPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("point has non-finite entries")


@dataclass
class Trajectory:
    kind: str
    times: np.ndarray
    x: np.ndarray                 # (N, dimM)
    fiber: np.ndarray             # (N, rank): pi for cogeodesic, y otherwise
    energy: np.ndarray
    admissibility: np.ndarray
    h: float
    vertical: bool
    coords: list[str] = field(default_factory=list)
    fiber_names: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def energy_drift(self) -> float:
        """max_t |H(t) - H(0)|."""
        return float(np.abs(self.energy - self.energy[0]).max())

    @property
    def terminal_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]))

    @property
    def admissibility_max(self) -> float:
        return float(self.admissibility.max()) if len(self.admissibility) else 0.0

    def state(self, i: int):
        if self.kind == "cogeodesic":
            return PhasePoint(self.x[i], self.fiber[i])
        return EPoint(self.x[i], self.fiber[i])

    def to_csv(self, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.coords, *self.fiber_names, "H", "admissibility"])
        for i in range(len(self.times)):
            w.writerow([repr(float(v)) for v in
                        (self.times[i], *self.x[i], *self.fiber[i], self.energy[i], self.admissibility[i])])
        text = buf.getvalue()
        if out is not None:
            with open(out, "w") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# energy and bracket


def hamiltonian(met: MetricModel, s: PhasePoint) -> float:
    G = met.g_fn(s.x)
    check_nondegenerate(G[None], s.x[None])
    return 0.5 * float(s.pi @ np.linalg.solve(G, s.pi))


def energy_e(met: MetricModel, s: EPoint) -> float:
    return 0.5 * float(s.y @ met.g_fn(s.x) @ s.y)


def dualize(met: MetricModel, s: EPoint) -> PhasePoint:
    """pi_b = y^a G_ab."""
    return PhasePoint(s.x, s.y @ met.g_fn(s.x))


def undualize(met: MetricModel, s: PhasePoint) -> EPoint:
    G = met.g_fn(s.x)
    check_nondegenerate(G[None], s.x[None])
    return EPoint(s.x, np.linalg.solve(G, s.pi))


def poisson_bracket(m: AlgebroidModel, F, K) -> Expr:
    """Symbolic {F, K} for expressions over the coordinates and ``m.momenta``."""
    F, K = as_expr(F), as_expr(K)
    P = m.momenta
    Fp = [diff(F, p) for p in P]
    Kp = [diff(K, p) for p in P]
    terms = []
    for a in range(m.rank):
        for A, xA in enumerate(m.coords):
            q = m.anchor[a, A]
            terms.append(q * (Fp[a] * diff(K, xA) - diff(F, xA) * Kp[a]))
    pis = [var(p) for p in P]
    for a in range(m.rank):
        for b in range(m.rank):
            coef = total(m.bracket[b, a, c] * pis[c] for c in range(m.rank))
            terms.append(-(coef * Fp[a] * Kp[b]))
    return total(terms)


def hamiltonian_expr(met: MetricModel, ginv_exprs=None) -> Expr:
    """H as an expression; only possible when G^-1 is supplied symbolically or G is constant."""
    m = met.owner
    if ginv_exprs is None:
        G = met.g_fn(np.zeros(m.dimM))
        if not met.g_fn.constant:
            raise ValueError("symbolic H needs a constant metric or explicit G^-1 expressions")
        ginv_exprs = np.linalg.inv(G)
    pis = [var(p) for p in m.momenta]
    return total(0.5 * as_expr(ginv_exprs[a][b]) * pis[a] * pis[b]
                 for a in range(m.rank) for b in range(m.rank))


class EnergyBracket:
    """Numeric {F, H} for the energy H, using dG^bc = -G^bd dG_de G^ec.

    ``F`` is an expression over coordinates and momenta, or None for H
    itself.  Evaluation is vectorized over phase points given as ``x``
    (P, dimM) and ``pi`` (P, rank).
    """

    def __init__(self, met: MetricModel, F=None):
        m = met.owner
        self.met = met
        self.dFx = self.dFp = None
        if F is not None:
            F = as_expr(F)
            names = m.coords + m.momenta
            self.dFx = CompiledExprs([diff(F, c) for c in m.coords], names, (m.dimM,))
            self.dFp = CompiledExprs([diff(F, p) for p in m.momenta], names, (m.rank,))

    def __call__(self, x, pi) -> np.ndarray:
        met = self.met
        m = met.owner
        x = np.atleast_2d(np.asarray(x, float)).reshape(len(pi), m.dimM)
        pi = np.atleast_2d(np.asarray(pi, float))
        G = met.g_fn.at(x)
        check_nondegenerate(G, x)
        y = np.linalg.solve(G, pi[..., None])[..., 0]              # dH/dpi
        Hx = -0.5 * np.einsum("pb,pAbc,pc->pA", y, met.dg_fn.at(x), y)
        if self.dFx is None:
            Fx, Fp = Hx, y
        else:
            pts = np.concatenate([x, pi], axis=1)
            Fx, Fp = self.dFx.at(pts), self.dFp.at(pts)
        Q = m.anchor_fn.at(x)
        Cb = m.bracket_fn.at(x)
        return (np.einsum("paA,pa,pA->p", Q, Fp, Hx) - np.einsum("paA,pA,pa->p", Q, Fx, y)
                - np.einsum("pbac,pc,pa,pb->p", Cb, pi, Fp, y))


# ---------------------------------------------------------------------------
# right-hand sides


class _Eval:
    """Scalar evaluators of the structure data, shared by the RHS functions."""

    def __init__(self, met: MetricModel, oneform: Sequence | None = None):
        m = met.owner
        self.met, self.m = met, m
        self.n, self.d = m.rank, m.dimM
        self.G = met.g_fn
        self.dG = met.dg_fn
        self.Q = m.anchor_fn
        self.Cb = m.bracket_fn
        self.F = None
        if oneform is not None:
            from .sigma import field_strength_exprs
            Fx = field_strength_exprs(m, oneform)
            self.F = CompiledExprs(Fx, m.coords, Fx.shape)

    def geometry(self, x):
        G = self.G(x)
        check_nondegenerate(G[None], np.atleast_2d(x))
        return G, self.dG(x), self.Q(x), self.Cb(x)


def _cogeo(ev: _Eval, x, pi):
    G, dG, Q, Cb = ev.geometry(x)
    y = np.linalg.solve(G, pi)
    dx = y @ Q
    # -1/2 Q_a^A dG^bc pi_b pi_c = +1/2 Q_a^A y.dG_A.y
    dpi = np.einsum("dac,d,c->a", Cb, y, pi) + 0.5 * Q @ np.einsum("b,Abc,c->A", y, dG, y)
    return dx, dpi


def _geo_accel(G, dG, Q, Cb, y):
    """-Gamma_bc^a y^b y^c from the lowered form, without building Gamma."""
    rho = y @ Q                                              # anchor image
    rG = np.einsum("A,Abd->bd", rho, dG)                     # rho(y) G_bd
    yQdG = np.einsum("dA,b,Abc,c->d", Q, y, dG, y)           # Q_d(y.G.y)
    Gy = G @ y
    Bl = (2 * rG @ y - yQdG
          + 2 * np.einsum("dbe,b,e->d", Cb, y, Gy)
          + np.einsum("bce,b,c,ed->d", Cb, y, y, G))
    return -0.5 * np.linalg.solve(G, Bl)


def _geo(ev: _Eval, x, y):
    G, dG, Q, Cb = ev.geometry(x)
    return y @ Q, _geo_accel(G, dG, Q, Cb, y)


def _charged(ev: _Eval, x, y):
    G, dG, Q, Cb = ev.geometry(x)
    acc = _geo_accel(G, dG, Q, Cb, y)
    if ev.F is not None:
        acc = acc - np.linalg.solve(G, y @ ev.F(x))
    return y @ Q, acc


def cogeodesic_rhs(met: MetricModel, s: PhasePoint):
    return _cogeo(_Eval(met), s.x, s.pi)


def geodesic_rhs(met: MetricModel, s: EPoint):
    return _geo(_Eval(met), s.x, s.y)


_RHS = {"cogeodesic": _cogeo, "geodesic": _geo, "charged": _charged}


# ---------------------------------------------------------------------------
# integration


def _derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0."""
    N = len(values)
    if N < 5:
        return np.gradient(values, h, axis=0) if N > 1 else np.zeros_like(values)
    d = np.empty_like(values)
    d[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * h)
    f = values
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def rk4_steps(f, z0: np.ndarray, n_steps: int, h: float, on_bad=None) -> np.ndarray:
    """Classical RK4 for dz/dt = f(z); returns all states (n_steps+1, len(z0))."""
    out = np.empty((n_steps + 1, len(z0)))
    out[0] = z = np.asarray(z0, dtype=float)
    for i in range(n_steps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.abs(z).max(initial=0.0) > BLOWUP:
            if on_bad is not None:
                on_bad(out[: i + 1], i)
            raise FloatingPointError(i)
        out[i + 1] = z
    return out


def _n_steps(t_end: float, h: float) -> int:
    if h <= 0 or t_end < 0:
        raise ValueError("need h > 0 and t_end >= 0")
    n = int(round(t_end / h))
    if abs(n * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of h (uniform steps)")
    return n


def integrate(met: MetricModel, kind: str, s0, t_end: float, h: float, oneform=None) -> Trajectory:
    """Fixed-step RK4 integration of the cogeodesic, geodesic or charged flow.

    ``s0`` is a PhasePoint for ``cogeodesic`` and an EPoint otherwise; a
    ``oneform`` (rank list of expressions C_a) is required for ``charged``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown flow kind {kind!r}")
    m = met.owner
    d, n = m.dimM, m.rank
    ev = _Eval(met, oneform if kind == "charged" else None)
    rhs = _RHS[kind]
    if kind == "cogeodesic":
        if not isinstance(s0, PhasePoint):
            raise TypeError("cogeodesic flow starts from a PhasePoint")
        z0 = np.concatenate([s0.x, s0.pi])
    else:
        if not isinstance(s0, EPoint):
            raise TypeError(f"{kind} flow starts from an EPoint")
        z0 = np.concatenate([s0.x, s0.y])
    if len(z0) != d + n:
        raise ValueError(f"initial state needs {d} coordinates and {n} fiber components")

    def f(z):
        dx, dv = rhs(ev, z[:d], z[d:])
        return np.concatenate([dx, dv])

    steps = _n_steps(t_end, h)
    try:
        states = rk4_steps(f, z0, steps, h)
    except FloatingPointError as exc:
        i = exc.args[0]
        partial = rk4_steps(f, z0, i, h) if i > 0 else z0[None]
        traj = _assemble(met, kind, partial, h)
        raise BlowUpError(float(traj.times[-1]), traj) from None
    return _assemble(met, kind, states, h)


def _assemble(met: MetricModel, kind: str, states: np.ndarray, h: float) -> Trajectory:
    m = met.owner
    d = m.dimM
    x, v = states[:, :d], states[:, d:]
    G = met.g_fn.at(x) if d else np.broadcast_to(met.g_fn(np.zeros(0)), (len(states),) + (m.rank,) * 2)
    Q = m.anchor_fn.at(x)
    if kind == "cogeodesic":
        y = np.linalg.solve(G, v[..., None])[..., 0]
        energy = 0.5 * np.einsum("pa,pa->p", v, y)
        names = m.momenta
    else:
        y = v
        energy = 0.5 * np.einsum("pa,pab,pb->p", y, G, y)
        names = m.fiber
    xdot = _derivative(x, h)
    adm = np.linalg.norm(xdot - np.einsum("pa,paA->pA", y, Q), axis=1) if d else np.zeros(len(states))
    vertical = bool(np.linalg.norm(y[0] @ Q[0]) <= 1e-14) if d else True
    return Trajectory(kind=kind, times=h * np.arange(len(states)), x=x.copy(), fiber=v.copy(),
                      energy=energy, admissibility=adm, h=h, vertical=vertical,
                      coords=list(m.coords), fiber_names=list(names))


def to_geodesic(met: MetricModel, traj: Trajectory) -> np.ndarray:
    """Fiber velocities y(t) of a trajectory (undualizing cogeodesics)."""
    if traj.kind != "cogeodesic":
        return traj.fiber
    G = met.g_fn.at(traj.x) if met.owner.dimM else np.broadcast_to(
        met.g_fn(np.zeros(0)), (len(traj),) + (met.owner.rank,) * 2)
    return np.linalg.solve(G, traj.fiber[..., None])[..., 0]


def flow_discrepancy(met: MetricModel, s0: EPoint, t_end: float, h: float) -> dict[str, float]:
    """Integrate the geodesic flow from ``s0`` and the cogeodesic flow from its dual; compare."""
    geo = integrate(met, "geodesic", s0, t_end, h)
    co = integrate(met, "cogeodesic", dualize(met, s0), t_end, h)
    y_co = to_geodesic(met, co)
    diff_x = np.abs(geo.x - co.x).max(initial=0.0)
    diff_y = np.abs(geo.fiber - y_co).max(initial=0.0)
    return {"discrepancy": float(max(diff_x, diff_y)),
            "energy_drift_geodesic": geo.energy_drift,
            "energy_drift_cogeodesic": co.energy_drift}


def shoot(met: MetricModel, x0, x1, t_end: float = 1.0, h: float = 1e-3, y_guess=None,
          tol: float = 1e-12) -> tuple[np.ndarray, Trajectory]:
    """Initial fiber velocity of the geodesic from ``x0`` reaching ``x1`` at ``t_end``.

    Needs an invertible anchor (rank == dimM).  Returns (y0, trajectory).
    """
    m = met.owner
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    if m.rank != m.dimM:
        raise ValueError("shooting needs a square anchor")
    if y_guess is None:
        y_guess = np.linalg.solve(m.anchor_fn(x0).T, (x1 - x0) / t_end)

    def miss(y0):
        return integrate(met, "geodesic", EPoint(x0, y0), t_end, h).x[-1] - x1

    sol = root(miss, np.asarray(y_guess, float), method="hybr", options={"xtol": tol})
    if not sol.success or np.abs(miss(sol.x)).max() > 1e-9:
        raise RuntimeError(f"shooting did not converge: {sol.message}")
    return sol.x, integrate(met, "geodesic", EPoint(x0, sol.x), t_end, h)
