"""Command-line front end.

    tdenclosure simulate  --scenario S.json --out DIR [--variant exact|tilde] [--noise STD --seed N]
    tdenclosure indicator --scenario S.json --out DIR [--records DIR] [--variant ...] [--tau-*]
    tdenclosure distance  ...            (distance.csv)
    tdenclosure classify  ...            (classify.json, prints the verdict)
    tdenclosure sweep-t   ... [--t-grid 0.3,0.5,...]   (tsweep.csv)
    tdenclosure proxies   --scenario S.json --out DIR  (proxies.csv, no simulation)
    tdenclosure validate  --scenario S.json --out DIR  (validate.json)

Every error class has its own exit code (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Scenario, pulse_laplace
from .errors import (DomainError, InsufficientDataError, RecordMismatchError, ScenarioError,
                     SimulationError, SizingError, UnsupportedGeometryError)

log = logging.getLogger("tdenclosure")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2  # argparse
EXIT_CODES = {
    SizingError: 4,
    ScenarioError: 3,
    InsufficientDataError: 5,
    RecordMismatchError: 6,
    SimulationError: 7,
    UnsupportedGeometryError: 8,
    DomainError: 9,
}
EXIT_VALIDATION_FAILED = 10


def _exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return EXIT_UNEXPECTED


# ---------------------------------------------------------------------------
# helpers


def _load_scenario(args) -> Scenario:
    path = Path(args.scenario)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    sc = Scenario.from_dict(raw, base=path.parent)
    changes = {}
    if getattr(args, "tau_min", None) is not None or getattr(args, "tau_max", None) is not None \
            or getattr(args, "tau_count", None) is not None:
        base = sc.taus()
        lo = args.tau_min if args.tau_min is not None else float(base[0])
        hi = args.tau_max if args.tau_max is not None else float(base[-1])
        n = args.tau_count if args.tau_count is not None else len(base)
        if not (0 < lo < hi) or n < 2:
            raise ScenarioError("tau range needs 0 < tau-min < tau-max and tau-count >= 2")
        changes["tau_grid"] = tuple(np.geomspace(lo, hi, n).tolist())
    if getattr(args, "noise", None) is not None:
        changes["noise_std"] = float(args.noise)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = int(args.seed)
    if changes:
        sc = dataclasses.replace(sc, **changes)
    return sc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_test"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ScenarioError(f"output directory not writable: {out}") from exc
    return out


def _record_name(kind: str, j: int) -> str:
    return f"record_{kind}_{j}.csv"


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def _load_runs(args, sc: Scenario, variant: str):
    from .enclosure import EXACT, RunSet
    from .solver import RunRecord

    rdir = Path(args.records or args.out)
    h = sc.physics_hash()

    def load(kind, j):
        p = rdir / _record_name(kind, j)
        if not p.exists():
            raise InsufficientDataError(f"missing record {p}; run `simulate` first")
        return RunRecord.from_csv(p)

    obst = tuple(load("obstacle", j) for j in range(2))
    for r in obst:
        if r.scenario_hash != h:
            raise RecordMismatchError(
                f"record hash {r.scenario_hash} does not match scenario hash {h}")
    free = None
    if all((rdir / _record_name("free", j)).exists() for j in range(2)):
        free = tuple(load("free", j) for j in range(2))
    elif variant == EXACT:
        raise InsufficientDataError("exact variant needs free-space records "
                                    "(simulate with --variant exact)")
    return RunSet(obst, free)


def _curve(args, sc, variant):
    from .enclosure import sum_indicator

    runs = _load_runs(args, sc, variant)
    return sum_indicator(sc, runs, variant), runs


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    from .enclosure import EXACT, simulate_runs

    sc = _load_scenario(args)
    out = _out_dir(args)
    need_free = args.variant == EXACT
    runs = simulate_runs(sc, need_free=need_free, backend=args.backend)
    files = []
    for j, r in enumerate(runs.obstacle):
        files.append(r.to_csv(out / _record_name("obstacle", j)).name)
    if runs.free is not None:
        for j, r in enumerate(runs.free):
            files.append(r.to_csv(out / _record_name("free", j)).name)
    _write_json(out / "simulate.json", {
        "scenario_hash": sc.physics_hash(), "variant": args.variant, "records": files,
        "noise_std": sc.noise_std, "seed": sc.seed, "n_steps": sc.n_steps, "dt": sc.dt,
        "dims": runs.obstacle[0].meta.get("dims"), "version": __version__})
    print(f"wrote {len(files)} records to {out}")
    return EXIT_OK


def cmd_indicator(args) -> int:
    sc = _load_scenario(args)
    out = _out_dir(args)
    curve, _ = _curve(args, sc, args.variant)
    curve.to_csv(out / "indicator.csv")
    _write_json(out / "indicator.json", {
        "scenario_hash": sc.physics_hash(), "variant": curve.variant, "T": curve.T,
        "noise_floor": curve.noise_floor, "usable": curve.usable.astype(int),
        "quiet_time": curve.meta.get("quiet_time")})
    print(f"indicator: {curve.taus.size} taus, {int(curve.usable.sum())} above the noise floor")
    return EXIT_OK


def cmd_distance(args) -> int:
    from .enclosure import (distance_scan, estimate_distance, sliding_windows,
                            write_distance_csv)
    from .core import distance_facts

    sc = _load_scenario(args)
    out = _out_dir(args)
    curve, _ = _curve(args, sc, args.variant)
    facts = distance_facts(sc) if sc.obstacle is not None else None
    best = estimate_distance(curve, facts=facts)
    rows = [best]
    if args.windows > 1:
        upper = curve.taus[curve.upper_window()]
        width = max(6, upper.size // 2)
        try:
            rows += distance_scan(curve, sliding_windows(upper, width, args.windows), facts=facts)
        except InsufficientDataError as exc:
            log.warning("window scan skipped: %s", exc)
    write_distance_csv(out / "distance.csv", rows)
    msg = f"dist = {best.dist:.6g} (window {best.fit_window[0]:.4g}..{best.fit_window[1]:.4g})"
    if facts is not None:
        msg += f"; scenario dist(D,B) = {facts.dist_DB:.6g}"
    print(msg)
    return EXIT_OK


def cmd_classify(args) -> int:
    from .enclosure import classify_impedance

    sc = _load_scenario(args)
    out = _out_dir(args)
    curve, _ = _curve(args, sc, args.variant)
    v = classify_impedance(curve)
    _write_json(out / "classify.json", {"scenario_hash": sc.physics_hash(), "verdict": v.label,
                                        "variant": curve.variant, "T": curve.T,
                                        "evidence": v.evidence})
    print(v.label)
    return EXIT_OK


def cmd_sweep_t(args) -> int:
    from .enclosure import t_sweep

    sc = _load_scenario(args)
    out = _out_dir(args)
    runs = _load_runs(args, sc, args.variant)
    if args.t_grid:
        grid = np.array([float(v) for v in args.t_grid.split(",") if v.strip()])
    elif sc.t_grid_for_sweep is not None:
        grid = np.asarray(sc.t_grid_for_sweep)
    else:
        Tmax = runs.duration
        grid = np.linspace(Tmax / 6.0, Tmax, 12)
    coarse = None
    if args.refinement_floor:
        from .core import GridSpec
        from .enclosure import simulate_runs

        sc2 = dataclasses.replace(sc, grid=GridSpec(2.0 * sc.grid.dx),
                                  time=dataclasses.replace(sc.time, dt=None))
        coarse = (sc2, simulate_runs(sc2, need_free=args.variant == "exact",
                                     backend=getattr(args, "backend", None)))
    res = t_sweep(sc, runs, grid, args.variant, coarse=coarse)
    res.to_csv(out / "tsweep.csv")
    _write_json(out / "tsweep.json", {"scenario_hash": sc.physics_hash(), "T_star": res.T_star,
                                      "dist": res.dist, "variant": args.variant,
                                      "floor": "refinement" if coarse else "default"})
    print(f"T* = {res.T_star}, dist = {res.dist}")
    return EXIT_OK


def cmd_proxies(args) -> int:
    from . import analytic

    sc = _load_scenario(args)
    out = _out_dir(args)
    if sc.obstacle is None:
        raise UnsupportedGeometryError("proxies need an obstacle")
    taus = sc.taus()
    rows = []
    lam_pos = True
    for tau in taus:
        je = jp = 0.0
        for src in sc.sources:
            ft = float(pulse_laplace(src.pulse, tau, sc.time.T, sc.dt))
            if lam_pos:
                try:
                    je += analytic.je_proxy(tau, sc.obstacle, src, sc.medium, ft)
                except ValueError as exc:
                    if isinstance(exc, UnsupportedGeometryError):
                        raise
                    lam_pos = False
            jp += analytic.je_plus_proxy(tau, sc.obstacle, src, sc.medium, ft)
        rows.append((tau, je if lam_pos else float("nan"), jp))
    path = out / "proxies.csv"
    with open(path, "w") as fh:
        fh.write("tau,je,je_plus\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_validation

    out = _out_dir(args)
    report = run_validation(Path(args.scenario), quick=not args.full)
    _write_json(out / "validate.json", report)
    n_fail = sum(not c["pass"] for c in report["checks"])
    print(f"validate: {len(report['checks']) - n_fail} passed, {n_fail} failed")
    return EXIT_OK if n_fail == 0 else EXIT_VALIDATION_FAILED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdenclosure",
                                description="Time-domain enclosure method for impedance obstacles")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, records=True, tau=True, noise=False, variant=True):
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        if records:
            sp.add_argument("--records", default=None,
                            help="directory holding simulate outputs (default: --out)")
        if variant:
            sp.add_argument("--variant", choices=("exact", "tilde"), default="tilde")
        if tau:
            sp.add_argument("--tau-min", type=float, default=None)
            sp.add_argument("--tau-max", type=float, default=None)
            sp.add_argument("--tau-count", type=int, default=None)
        if noise:
            sp.add_argument("--noise", type=float, default=None,
                            help="std of Gaussian observation noise added to s(t)")
            sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("simulate", help="run the FDTD solver and write records")
    common(sp, records=False, tau=False, noise=True)
    sp.add_argument("--backend", choices=("cython", "numpy"), default=None)
    sp.set_defaults(func=cmd_simulate)

    for name, fn, helptext in (("indicator", cmd_indicator, "indicator curve"),
                               ("distance", cmd_distance, "distance estimate"),
                               ("classify", cmd_classify, "impedance verdict")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        if name == "distance":
            sp.add_argument("--windows", type=int, default=3,
                            help="number of shifted fit windows to report (upper half of grid)")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("sweep-t", help="T-sweep characterization of the distance")
    common(sp)
    sp.add_argument("--t-grid", default=None, help="comma-separated T values")
    sp.add_argument("--refinement-floor", action="store_true",
                    help="judge each T against |I_dx - I_2dx| from an extra run at twice the "
                         "grid spacing (does not use the known distance)")
    sp.set_defaults(func=cmd_sweep_t)

    sp = sub.add_parser("proxies", help="surface proxies over the tau grid (no simulation)")
    common(sp, records=False, variant=False)
    sp.set_defaults(func=cmd_proxies)

    sp = sub.add_parser("validate", help="oracle checks and solver invariants")
    common(sp, records=False, tau=False, variant=False)
    sp.add_argument("--full", action="store_true", help="include the slower checks")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SizingError as exc:
        lo, hi = exc.minimal_box if exc.minimal_box is not None else (None, None)
        print(f"error: {exc}", file=sys.stderr)
        if lo is not None:
            print(f"hint: set grid.box to at least lo={np.round(lo, 6).tolist()} "
                  f"hi={np.round(hi, 6).tolist()}, or drop grid.box to size it automatically",
                  file=sys.stderr)
        return _exit_code(exc)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "CFL" in str(exc):
            print("hint: lower time.dt or omit it to use 0.45 dx/(sqrt(3) c)", file=sys.stderr)
        return _exit_code(exc)
    except (InsufficientDataError, RecordMismatchError, SimulationError,
            UnsupportedGeometryError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
