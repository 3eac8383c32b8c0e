"""Command line front end: ``algebroid-lab <validate|geodesic|killing|sigma>``.

Every command prints a JSON report (sorted keys) that embeds the tool
version, the seed and the index conventions.  Bulk series go out as CSV.

Exit codes: 0 ok, 1 check failed or integration blew up, 2 schema error or
refused request, 3 relaxation did not converge.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import killing as kil
from . import riemann as rie
from . import sigma as sig
from .algebroid import (DEFAULT_SAMPLES, DEFAULT_SEED, SamplingError, anchor_morphism_residuals,
                        antisymmetry_residuals, jacobi_residuals, sample_points, validation_summary)
from .dynamics import BlowUpError, EPoint, PhasePoint, dualize, integrate
from .expr import ExprError
from .modelfile import LoadedModel, SchemaError, load_model
from .riemann import DegenerateMetricError

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_NOCONV = 0, 1, 2, 3
AXIOM_TOL = 1e-10
SEED_ENV = "ALGEBROID_LAB_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def conventions() -> dict:
    return {**rie.CONVENTIONS, **kil.CONVENTIONS, **sig.CONVENTIONS,
            "indices": "0-based; anchor[a, A]; bracket[a, b, c] = Q_ab^c"}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def emit(report: dict, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n")


def _report(cmd: str, model: str, seed) -> dict:
    return {"tool": "algebroid-lab", "version": __version__, "command": cmd, "model": model,
            "seed": seed, "conventions": conventions()}


def _worst(res: np.ndarray, pts: np.ndarray) -> dict:
    a = np.abs(res)
    if not a.size:
        return {}
    idx = np.unravel_index(int(np.argmax(a)), a.shape)
    return {"point": pts[idx[0]].tolist(), "index": [int(i) for i in idx[1:]]}


# ---------------------------------------------------------------------------
# validate


def cmd_validate(L: LoadedModel, samples: int, seed: int) -> tuple[dict, int]:
    m, met = L.model, L.metric
    rep = _report("validate", m.name, seed)
    rep["samples"] = samples
    res = dict(validation_summary(m, samples, seed))
    res["metric_symmetry"] = rie.validate_metric_symmetry(met, samples, seed)
    tol = {k: AXIOM_TOL for k in res}
    tol.pop("anchor_pairwise_as_displayed")
    failures = []
    try:
        rep["nondegeneracy_ratio"] = rie.validate_nondegenerate(met, samples, seed)
        cert = rie.certification_sweep(met, samples, seed)
        for k, v in cert.items():
            res[f"certification_{k}"] = v
            tol[f"certification_{k}"] = rie.CERT_TOL
    except DegenerateMetricError as err:
        failures.append({"check": "nondegeneracy", "residual": err.det, "point": list(map(float, err.point))})
    rep["residuals"] = res
    rep["tolerances"] = tol
    pts = sample_points(m.box, samples, np.random.default_rng(seed))
    locate = {"antisymmetry": lambda: antisymmetry_residuals(m, pts),
              "anchor_morphism": lambda: anchor_morphism_residuals(m, pts, True),
              "jacobi": lambda: jacobi_residuals(m, pts),
              "metric_symmetry": lambda: (lambda G: G - np.swapaxes(G, 1, 2))(met.g_fn.at(pts))}
    for k, t in tol.items():
        if not res[k] < t:
            entry = {"check": k, "residual": res[k], "tolerance": t}
            if k in locate:
                try:
                    entry.update(_worst(locate[k](), pts))
                except (ExprError, ArithmeticError):
                    pass
            failures.append(entry)
    failures.sort(key=lambda e: -abs(e["residual"]) if isinstance(e["residual"], float) else 0.0)
    rep["failures"] = failures
    rep["worst"] = failures[0] if failures else None
    rep["ok"] = not failures
    return rep, EXIT_OK if not failures else EXIT_FAIL


# ---------------------------------------------------------------------------
# geodesic


def _vec(vals, n: int, what: str) -> np.ndarray:
    vals = [] if vals is None else vals
    if len(vals) != n:
        raise SchemaError(f"{what}: expected {n} values, got {len(vals)}")
    return np.array(vals, dtype=float)


def _write_csv(text: str, out) -> str:
    if out:
        Path(out).write_text(text)
        return str(out)
    sys.stdout.write(text)
    return "stdout"


def cmd_geodesic(L: LoadedModel, args) -> tuple[dict, int]:
    m, met = L.model, L.metric
    rep = _report("geodesic", m.name, args.seed)
    x0 = _vec(args.x0, m.dimM, "--x0")
    if (args.y0 is None) == (args.pi0 is None):
        raise SchemaError("give exactly one of --y0 and --pi0")
    if args.pi0 is not None:
        s0, kind = PhasePoint(x0, _vec(args.pi0, m.rank, "--pi0")), "cogeodesic"
    else:
        s0 = EPoint(x0, _vec(args.y0, m.rank, "--y0"))
        kind = "geodesic"
        if args.dual:
            s0, kind = dualize(met, s0), "cogeodesic"
    rep.update(flow=kind, t_end=args.t_end, h=args.h)
    code = EXIT_OK
    try:
        traj = integrate(met, kind, s0, args.t_end, args.h)
    except BlowUpError as err:
        traj = err.trajectory
        rep["blow_up"] = {"t_last": err.t_last}
        code = EXIT_FAIL
    except DegenerateMetricError as err:
        rep["error"] = str(err)
        return rep, EXIT_FAIL
    rep.update(energy_drift=traj.energy_drift, energy_initial=traj.energy[0],
               admissibility_max=traj.admissibility_max, vertical=traj.vertical,
               steps=len(traj) - 1, final={"t": traj.times[-1], "x": traj.x[-1], "fiber": traj.fiber[-1]})
    rep["csv"] = _write_csv(traj.to_csv(), args.out)
    return rep, code


# ---------------------------------------------------------------------------
# killing


def cmd_killing(L: LoadedModel, args) -> tuple[dict, int]:
    met = L.metric
    rep = _report(f"killing {args.mode}", L.name, args.seed)
    if args.mode == "check":
        if args.section not in L.sections:
            known = ", ".join(sorted(L.sections)) or "none"
            raise SchemaError(f"unknown section {args.section!r} (model has: {known})")
        r = kil.killing_check(met, L.sections[args.section], args.samples, args.seed)
        rep.update(samples=args.samples, **r.as_dict())
        return rep, EXIT_OK if r.consistent else EXIT_FAIL
    try:
        kb = kil.killing_find(met, degree=args.degree, grid_points=args.grid)
    except kil.UnderdeterminedError as err:
        rep["error"] = str(err)
        return rep, EXIT_SCHEMA
    rep.update(degree=args.degree, grid_points=args.grid, dimension=kb.dim, bound=kb.bound,
               bound_exceeded=kb.bound_exceeded, gap_ratio=kb.gap_ratio,
               closure_residual=kb.closure_residual, structure_constants=kb.structure_constants,
               singular_values=kb.singular_values,
               basis={s.name: [str(c) for c in s.components] for s in kb.sections})
    return rep, EXIT_OK


# ---------------------------------------------------------------------------
# sigma


def _source(L: LoadedModel, args) -> tuple:
    if L.sigma is None:
        raise SchemaError(f"model {L.name} has no sigma block")
    setup = L.sigma
    src = setup.source
    if args.sizes:
        src = sig.SourceManifold(src.k, args.sizes, src.box, names=src.names, metric=src.metric,
                                 periodic=src.periodic)
    boundary = dict(setup.boundary)
    if args.start is not None:
        boundary["start"] = args.start
    if args.end is not None:
        boundary["end"] = args.end
    return src, boundary


def _initial(L: LoadedModel, src, boundary) -> sig.SigmaConfiguration:
    met, m = L.metric, L.model
    if m.rank != m.dimM:
        raise SchemaError("sigma solve needs an invertible anchor (rank == dimM)")
    if "start" in boundary and "end" in boundary:
        return sig.line_configuration(met, src, _vec(boundary["start"], m.dimM, "start"),
                                      _vec(boundary["end"], m.dimM, "end"))
    if "phi" in boundary:
        from .expr import CompiledExprs
        fn = CompiledExprs(boundary["phi"], src.names, (m.dimM,))
        phi = fn.at(src.nodes().reshape(-1, src.k)).reshape(src.shape + (m.dimM,))
        return sig.SigmaConfiguration(phi, sig.reconstruct_chi(met, src, phi))
    raise SchemaError("sigma.boundary needs start/end (k = 1) or a phi expression vector")


def _config(L: LoadedModel, args, src, boundary) -> sig.SigmaConfiguration:
    if args.config:
        try:
            return sig.SigmaConfiguration.from_csv(Path(args.config).read_text(), src, L.model)
        except (OSError, ValueError) as err:
            raise SchemaError(f"--config: {err}") from None
    return _initial(L, src, boundary)


def _sections(L: LoadedModel, names, xi) -> tuple[list, list]:
    if not names:
        raise SchemaError("give at least one --section")
    missing = [n for n in names if n not in L.sections]
    if missing:
        raise SchemaError(f"unknown section(s): {', '.join(missing)}")
    xi = list(xi) if xi else [1.0] * len(names)
    if len(xi) != len(names):
        raise SchemaError("--xi needs one value per --section")
    return [L.sections[n] for n in names], xi


def cmd_sigma(L: LoadedModel, args) -> tuple[dict, int]:
    met, m = L.metric, L.model
    rep = _report(f"sigma {args.mode}", L.name, args.seed)
    if args.mode == "charged":
        return _charged(L, args, rep)
    src, boundary = _source(L, args)
    rep["grid"] = {"k": src.k, "sizes": src.sizes, "box": src.box, "periodic": src.periodic}
    code = EXIT_OK
    if args.mode == "solve" or (args.mode == "noether" and not args.config):
        res = sig.relax(_initial(L, src, boundary), met, src, step=args.step, iters=args.iters)
        cfg = res.cfg
        rep.update(converged=res.converged, iterations=res.iterations, discrete_action=res.action,
                   discrete_tension=res.tension)
        if args.log:
            res.log_csv(args.log)
        if not res.converged:
            code = EXIT_NOCONV
    else:
        cfg = _config(L, args, src, boundary)
    resA, resB = sig.morphism_residual(cfg, m, src)
    rep.update(morphism_residual=resA, curl_residual=resB, action=sig.action(cfg, met, src),
               max_tension=sig.max_tension(cfg, met, src))
    if args.mode == "noether":
        secs, xi = _sections(L, args.section, args.xi)
        J = sig.noether_current(cfg, met, src, secs, xi)
        rep.update(sections=args.section, xi=xi, epsilon=args.epsilon,
                   noether_divergence=sig.noether_divergence(cfg, met, src, secs, xi),
                   current_min=J.min(), current_max=J.max(),
                   invariance_ratio=sig.invariance_check(cfg, met, src, secs, args.epsilon, xi))
    if args.mode in ("solve", "noether") or args.out:
        rep["csv"] = _write_csv(cfg.to_csv(src, m), args.out)
    return rep, code


def _charged(L: LoadedModel, args, rep) -> tuple[dict, int]:
    met, m = L.metric, L.model
    C = args.oneform if args.oneform else (L.oneform.C if L.oneform else None)
    if C is None:
        raise SchemaError(f"model {L.name} has no oneform; pass --oneform")
    try:
        C = sig.OneFormPotential(list(C))
    except (ExprError, ValueError) as err:
        raise SchemaError(f"--oneform: {err}") from None
    s0 = EPoint(_vec(args.x0, m.dimM, "--x0"), _vec(args.y0, m.rank, "--y0"))
    u = None
    if args.killing:
        secs, _ = _sections(L, [args.killing], None)
        u = secs[0]
    code = EXIT_OK
    try:
        traj = sig.charged_particle(met, C, s0, args.t_end, args.h, killing=u)
    except BlowUpError as err:
        traj = err.trajectory
        rep["blow_up"] = {"t_last": err.t_last}
        code = EXIT_FAIL
    rep.update(t_end=args.t_end, h=args.h, energy_drift=traj.energy_drift,
               admissibility_max=traj.admissibility_max,
               F_antisymmetry=traj.extras.get("F_antisymmetry"),
               field_strength_at_x0=sig.field_strength(m, C, s0.x),
               final={"t": traj.times[-1], "x": traj.x[-1], "fiber": traj.fiber[-1]})
    if "charged_current" in traj.extras:
        q = traj.extras["charged_current"]
        rep.update(killing=args.killing, charged_current_drift=float(np.abs(q - q[0]).max()),
                   lie_derivative_C=traj.extras["lie_derivative_C"])
    if m.dimM == 2:
        centre, radius = sig.fit_circle(traj.x)
        rep["circle_fit"] = {"centre": centre, "radius": radius}
    rep["csv"] = _write_csv(traj.to_csv(), args.out)
    return rep, code


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="algebroid-lab",
                                description="Analyses of Riemannian Lie algebroids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", help="model JSON file or bundled model name")
        sp.add_argument("--seed", type=int, default=None, help=f"sampling seed (env {SEED_ENV}, default 42)")
        sp.add_argument("--report", help="write the JSON report here instead of the console")

    v = sub.add_parser("validate", help="algebroid axioms, metric checks and connection certification")
    common(v)
    v.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)

    g = sub.add_parser("geodesic", help="integrate the geodesic or cogeodesic flow")
    common(g)
    g.add_argument("--x0", type=float, nargs="*", default=[])
    g.add_argument("--y0", type=float, nargs="*")
    g.add_argument("--pi0", type=float, nargs="*")
    g.add_argument("--t-end", type=float, default=1.0)
    g.add_argument("--h", type=float, default=1e-3)
    g.add_argument("--dual", action="store_true", help="integrate the cogeodesic flow from the dual of --y0")
    g.add_argument("--out", help="trajectory CSV path (default stdout)")

    k = sub.add_parser("killing", help="Killing section checks and discovery")
    ksub = k.add_subparsers(dest="mode", required=True)
    kc = ksub.add_parser("check")
    common(kc)
    kc.add_argument("--section", required=True)
    kc.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    kf = ksub.add_parser("find")
    common(kf)
    kf.add_argument("--degree", type=int, default=1)
    kf.add_argument("--grid", type=int, default=kil.GRID_POINTS, help="tensor grid points per axis")
    kf.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)

    s = sub.add_parser("sigma", help="lattice sigma model")
    ssub = s.add_subparsers(dest="mode", required=True)
    for mode in ("solve", "residual", "noether", "charged"):
        sp = ssub.add_parser(mode)
        common(sp)
        sp.add_argument("--out", help="CSV output path (default stdout)")
        if mode == "charged":
            sp.add_argument("--x0", type=float, nargs="*", default=[])
            sp.add_argument("--y0", type=float, nargs="*", default=[])
            sp.add_argument("--t-end", type=float, default=1.0)
            sp.add_argument("--h", type=float, default=1e-3)
            sp.add_argument("--oneform", nargs="*", help="C_a expressions (default: the model's oneform)")
            sp.add_argument("--killing", help="section whose charged current is recorded")
            continue
        sp.add_argument("--sizes", type=int, nargs="*")
        sp.add_argument("--start", type=float, nargs="*")
        sp.add_argument("--end", type=float, nargs="*")
        sp.add_argument("--config", help="configuration CSV (residual / noether)")
        sp.add_argument("--step", type=float, default=1.0)
        sp.add_argument("--iters", type=int, default=50)
        sp.add_argument("--log", help="convergence log CSV path")
        if mode == "noether":
            sp.add_argument("--section", action="append")
            sp.add_argument("--xi", type=float, nargs="*")
            sp.add_argument("--epsilon", type=float, default=1e-4)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = None
    try:
        seed = args.seed if args.seed is not None else default_seed()
        args.seed = seed
        L = load_model(args.model)
        if args.command == "validate":
            rep, code = cmd_validate(L, args.samples, seed)
        elif args.command == "geodesic":
            rep, code = cmd_geodesic(L, args)
        elif args.command == "killing":
            rep, code = cmd_killing(L, args)
        else:
            rep, code = cmd_sigma(L, args)
    except (SchemaError, ExprError) as err:
        rep, code = _report(args.command, str(args.model), seed), EXIT_SCHEMA
        rep["error"] = f"schema: {err}"
    except (DegenerateMetricError, SamplingError, ValueError) as err:
        rep, code = _report(args.command, str(args.model), seed), EXIT_FAIL
        rep["error"] = str(err)
    rep["exit_code"] = code
    if getattr(args, "report", None):
        with open(args.report, "w") as fh:
            emit(rep, fh)
    elif rep.get("csv") == "stdout":
        emit(rep, sys.stderr)
    else:
        emit(rep)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
