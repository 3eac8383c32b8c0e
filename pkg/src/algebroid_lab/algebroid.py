"""Lie algebroids in local data: anchor ``Q_a^A(x)`` and brackets ``Q_ab^c(x)``.

Array conventions used throughout the package (0-based):

* ``anchor[a, A]``      = Q_a^A, the A-th component of rho(s_a)
* ``bracket[a, b, c]``  = Q_ab^c, i.e. [s_a, s_b] = Q_ab^c s_c
* derivative arrays put the differentiation index first:
  ``danchor[A, a, B]`` = dQ_a^B/dx^A.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .expr import ZERO, CompiledExprs, EvalDomainError, Expr, as_expr, diff, total

DEFAULT_SAMPLES = 64
DEFAULT_SEED = 42
MAX_REDRAWS = 8


class SamplingError(RuntimeError):
    """A sample point could not be evaluated even after redrawing."""


def _obj_array(shape, fill=ZERO) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    arr.fill(fill)
    return arr


def _diff_array(arr: np.ndarray, names: Sequence[str]) -> np.ndarray:
    out = _obj_array((len(names),) + arr.shape)
    for i, n in enumerate(names):
        for idx in np.ndindex(arr.shape):
            out[(i,) + idx] = diff(arr[idx], n)
    return out


@dataclass(eq=False)
class AlgebroidModel:
    name: str
    coords: list[str]
    frame: list[str]
    anchor: np.ndarray
    bracket: np.ndarray
    box: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.coords = list(self.coords)
        self.frame = list(self.frame)
        n, d = len(self.frame), len(self.coords)
        if n < 1:
            raise ValueError("fiber rank must be at least 1")
        anchor = np.asarray(self.anchor, dtype=object).reshape(n, d) if d else _obj_array((n, 0))
        self.anchor = np.vectorize(as_expr, otypes=[object])(anchor) if anchor.size else anchor
        self.bracket = np.vectorize(as_expr, otypes=[object])(
            np.asarray(self.bracket, dtype=object).reshape(n, n, n))
        if not self.box:
            self.box = [(-1.0, 1.0)] * d
        self.box = [(float(lo), float(hi)) for lo, hi in self.box]
        if len(self.box) != d:
            raise ValueError("box must give one interval per coordinate")

    @property
    def dimM(self) -> int:
        return len(self.coords)

    @property
    def rank(self) -> int:
        return len(self.frame)

    @property
    def momenta(self) -> list[str]:
        return [f"pi_{s}" for s in self.frame]

    @property
    def fiber(self) -> list[str]:
        return [f"y_{s}" for s in self.frame]

    # compiled evaluators --------------------------------------------------

    @cached_property
    def anchor_fn(self) -> CompiledExprs:
        return CompiledExprs(self.anchor, self.coords, self.anchor.shape)

    @cached_property
    def danchor(self) -> np.ndarray:
        return _diff_array(self.anchor, self.coords)

    @cached_property
    def danchor_fn(self) -> CompiledExprs:
        return CompiledExprs(self.danchor, self.coords, self.danchor.shape)

    @cached_property
    def bracket_fn(self) -> CompiledExprs:
        return CompiledExprs(self.bracket, self.coords, self.bracket.shape)

    @cached_property
    def dbracket(self) -> np.ndarray:
        return _diff_array(self.bracket, self.coords)

    @cached_property
    def dbracket_fn(self) -> CompiledExprs:
        return CompiledExprs(self.dbracket, self.coords, self.dbracket.shape)

    def anchor_at(self, p) -> np.ndarray:
        return self.anchor_fn(p)

    def bracket_at(self, p) -> np.ndarray:
        return self.bracket_fn(p)

    def section(self, components, name: str = "") -> "Section":
        return Section(components, self, name)

    def rho(self, f: Expr) -> list[Expr]:
        """The functions rho(s_a)[f] = Q_a^A df/dx^A as expressions."""
        f = as_expr(f)
        df = [diff(f, c) for c in self.coords]
        return [total(self.anchor[a, A] * df[A] for A in range(self.dimM))
                for a in range(self.rank)]

    def with_entry(self, which: str, index: tuple, value) -> "AlgebroidModel":
        """Copy of the model with one raw array entry replaced (no re-antisymmetrization)."""
        anchor = self.anchor.copy()
        bracket = self.bracket.copy()
        target = {"anchor": anchor, "bracket": bracket}[which]
        target[index] = as_expr(value)
        return AlgebroidModel(self.name, self.coords, self.frame, anchor, bracket, self.box)


class Section:
    """A section u = u^a(x) s_a of an algebroid, components held as expressions."""

    def __init__(self, components, owner: AlgebroidModel, name: str = ""):
        comps = [as_expr(c) for c in components]
        if len(comps) != owner.rank:
            raise ValueError(f"section needs {owner.rank} components, got {len(comps)}")
        self.components = tuple(comps)
        self.owner = owner
        self.name = name

    def __repr__(self):
        inner = ", ".join(str(c) for c in self.components)
        return f"Section({self.name or '?'}: [{inner}])"

    def __getitem__(self, a: int) -> Expr:
        return self.components[a]

    def __len__(self):
        return len(self.components)

    def __add__(self, other: "Section") -> "Section":
        return Section([a + b for a, b in zip(self.components, other.components)], self.owner)

    def __sub__(self, other: "Section") -> "Section":
        return Section([a - b for a, b in zip(self.components, other.components)], self.owner)

    def scale(self, f) -> "Section":
        f = as_expr(f)
        return Section([f * c for c in self.components], self.owner)

    @cached_property
    def value_fn(self) -> CompiledExprs:
        return CompiledExprs(list(self.components), self.owner.coords, (self.owner.rank,))

    @cached_property
    def jacobian(self) -> np.ndarray:
        """``jac[A, a]`` = du^a/dx^A as expressions."""
        comps = np.array(self.components, dtype=object)
        return _diff_array(comps, self.owner.coords)

    @cached_property
    def jacobian_fn(self) -> CompiledExprs:
        return CompiledExprs(self.jacobian, self.owner.coords, self.jacobian.shape)

    def at(self, p) -> np.ndarray:
        return self.value_fn(p)


# ---------------------------------------------------------------------------
# sampling


def sample_points(box: Sequence[tuple[float, float]], n: int, rng: np.random.Generator) -> np.ndarray:
    d = len(box)
    if d == 0:
        return np.zeros((1, 0))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((n, d))


def sweep(box: Sequence[tuple[float, float]], samples: int, seed: int,
          fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate ``fn`` (points -> per-point values) at seeded random points.

    A point whose evaluation hits a domain error is redrawn, at most
    ``MAX_REDRAWS`` times, after which :class:`SamplingError` is raised.
    Returns the stacked per-point results.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = sample_points(box, samples, rng)
    try:
        return np.asarray(fn(pts))
    except EvalDomainError:
        pass
    out = []
    for p in pts:
        for attempt in range(MAX_REDRAWS + 1):
            try:
                out.append(np.asarray(fn(p[None, :]))[0])
                break
            except EvalDomainError as exc:
                if attempt == MAX_REDRAWS:
                    raise SamplingError(
                        f"evaluation failed at {MAX_REDRAWS} redraws: {exc}") from exc
                p = sample_points(box, 1, rng)[0]
    return np.stack(out)


def _max(values) -> float:
    arr = np.abs(np.asarray(values, dtype=float))
    return float(arr.max()) if arr.size else 0.0


# ---------------------------------------------------------------------------
# axiom validators


def antisymmetry_residuals(m: AlgebroidModel, pts: np.ndarray) -> np.ndarray:
    Qb = m.bracket_fn.at(pts)
    return Qb + np.swapaxes(Qb, 1, 2)


def validate_antisymmetry(m: AlgebroidModel, samples: int = DEFAULT_SAMPLES,
                          seed: int = DEFAULT_SEED) -> float:
    """max |Q_ab^c + Q_ba^c| over sampled points and all index triples."""
    res = sweep(m.box, samples, seed, lambda pts: antisymmetry_residuals(m, pts))
    return _max(res)


def anchor_morphism_residuals(m: AlgebroidModel, pts: np.ndarray, full: bool = True) -> np.ndarray:
    """Components ``[p, a, b, B]`` of rho([s_a, s_b]) - [rho(s_a), rho(s_b)] (negated).

    With ``full=False`` the bracket term is dropped, giving the pairwise
    identity Q_a^A dQ_b^B/dx^A - Q_b^A dQ_a^B/dx^A.
    """
    Q = m.anchor_fn.at(pts)            # (P, a, A)
    dQ = m.danchor_fn.at(pts)          # (P, A, a, B)
    t = np.einsum("paA,pAbB->pabB", Q, dQ)
    res = t - np.swapaxes(t, 1, 2)
    if full:
        Qb = m.bracket_fn.at(pts)
        res = res - np.einsum("pabc,pcB->pabB", Qb, Q)
    return res


def validate_anchor_morphism(m: AlgebroidModel, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED, full: bool = True) -> float:
    if m.dimM == 0:
        return 0.0
    res = sweep(m.box, samples, seed, lambda pts: anchor_morphism_residuals(m, pts, full))
    return _max(res)


def jacobi_residuals(m: AlgebroidModel, pts: np.ndarray) -> np.ndarray:
    """Cyclic sum over (a, b, c) of rho(s_a)[Q_bc^d] + Q_ae^d Q_bc^e.

    This is the d-component of [s_a,[s_b,s_c]] + cyclic.
    """
    Q = m.anchor_fn.at(pts)
    Qb = m.bracket_fn.at(pts)
    dQb = m.dbracket_fn.at(pts)        # (P, A, b, c, d)
    term = np.einsum("paA,pAbcd->pabcd", Q, dQb) + np.einsum("paed,pbce->pabcd", Qb, Qb)
    return term + np.transpose(term, (0, 2, 3, 1, 4)) + np.transpose(term, (0, 3, 1, 2, 4))


def validate_jacobi(m: AlgebroidModel, samples: int = DEFAULT_SAMPLES,
                    seed: int = DEFAULT_SEED) -> float:
    res = sweep(m.box, samples, seed, lambda pts: jacobi_residuals(m, pts))
    return _max(res)


# ---------------------------------------------------------------------------
# sections


def bracket_sections(u: Section, v: Section) -> Section:
    """[u, v]^c = Q_a^A (u^a dv^c/dx^A - v^a du^c/dx^A) + Q_ab^c u^a v^b."""
    m = u.owner
    if v.owner is not m:
        raise ValueError("sections belong to different algebroids")
    n, d = m.rank, m.dimM
    rho_u = [total(u[a] * m.anchor[a, A] for a in range(n)) for A in range(d)]
    rho_v = [total(v[a] * m.anchor[a, A] for a in range(n)) for A in range(d)]
    comps = []
    for c in range(n):
        terms = [rho_u[A] * v.jacobian[A, c] for A in range(d)]
        terms += [-(rho_v[A] * u.jacobian[A, c]) for A in range(d)]
        terms += [m.bracket[a, b, c] * u[a] * v[b] for a in range(n) for b in range(n)]
        comps.append(total(terms))
    name = f"[{u.name},{v.name}]" if u.name and v.name else ""
    return Section(comps, m, name)


def anchor_apply(u: Section, p) -> np.ndarray:
    """rho(u) at p: the vector u^a(p) Q_a^A(p)."""
    m = u.owner
    return u.at(p) @ m.anchor_at(p) if m.dimM else np.zeros(0)


def vector_field_commutator(X: Sequence[Expr], Y: Sequence[Expr], names: Sequence[str]) -> list[Expr]:
    """[X, Y]^I = X^J dY^I/dz^J - Y^J dX^I/dz^J for fields on the coordinates ``names``."""
    out = []
    for i in range(len(names)):
        out.append(total([X[j] * diff(Y[i], names[j]) for j in range(len(names))]
                         + [-(Y[j] * diff(X[i], names[j])) for j in range(len(names))]))
    return out


def validation_summary(m: AlgebroidModel, samples: int = DEFAULT_SAMPLES,
                       seed: int = DEFAULT_SEED) -> dict[str, float]:
    return {
        "antisymmetry": validate_antisymmetry(m, samples, seed),
        "anchor_morphism": validate_anchor_morphism(m, samples, seed, full=True),
        "anchor_pairwise_as_displayed": validate_anchor_morphism(m, samples, seed, full=False),
        "jacobi": validate_jacobi(m, samples, seed),
    }
