"""Command-line front end.

Every subcommand writes its CSV into ``--out`` and exits with 0 when all
executed checks pass, 1 when at least one fails and 2 on usage or
configuration errors. ``--config`` reads an INI file whose ``[global]``
section and per-subcommand section (``[korn]``, ``[campaign]``, ...) use
the long flag names without dashes; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _accel
from . import nonlocal_system as ns
from . import verification as vf
from .errors import ParameterError
from .fields import FracParams

__all__ = ["main", "build_parser", "load_config"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# built-in defaults, applied after the config file; dests not listed default to None
DEFAULTS = {
    "seed": 0,
    "threads": None,
    "out": "frackorn_out",
    "timings": False,
    "plots": False,
    "d": 2,
    "s": 0.5,
    "p": 2.0,
}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [x.strip() for x in str(text).replace(";", ",").split(",") if x.strip()]


def _dim(text: str) -> int:
    try:
        d = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dimension {text!r}") from None
    if d not in (1, 2, 3):
        raise argparse.ArgumentTypeError(f"dimension must be 1, 2 or 3, got {d}")
    return d


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("global")
    g.add_argument("--seed", type=int, help="base RNG seed (default 0)")
    g.add_argument("--threads", type=int, help="numba thread count")
    g.add_argument("--out", help="output directory (default ./frackorn_out)")
    g.add_argument("--config", help="INI config file")
    g.add_argument("--timings", action="store_const", const=True, help="fill the runtime_ms column")
    g.add_argument("--plots", action="store_const", const=True, help="write ratio histograms when matplotlib is available")
    return c


def _sp(p: argparse.ArgumentParser, d: bool = True) -> None:
    if d:
        p.add_argument("--d", type=_dim, help="dimension (default 2)")
    p.add_argument("--s", type=float, help="fractional order (default 0.5)")
    p.add_argument("--p", type=float, help="integrability exponent (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frackorn", description="Fractional Korn and nonlocal system checks.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    com = [_common()]

    k = sub.add_parser("kernels-check", parents=com, help="kernel normalization, symbol, semigroup, nilpotency and identities")
    k.add_argument("--d", type=_dim)
    k.add_argument("--N", type=int, help="nodes per axis for normalization (default 512)")
    k.add_argument("--L", type=float, help="box side for normalization (default 40)")
    k.add_argument("--t", type=float, help="kernel parameter (default 1)")
    k.add_argument("--symbol-N", type=int, help="nodes per axis for the symbol match (default 2048)")
    k.add_argument("--symbol-L", type=float, help="box side for the symbol match (default 320)")
    k.add_argument("--n-random", type=int, help="random frequencies (default 1000)")

    i = sub.add_parser("identities-check", parents=com, help="Riesz and extension identities")
    i.add_argument("--d", type=_dim)
    i.add_argument("--N", type=int, help="default 64")
    i.add_argument("--L", type=float, help="default 10")
    i.add_argument("--n-fields", type=int, help="default 20")
    i.add_argument("--levels", type=int, help="t-levels per field (default 5)")

    ko = sub.add_parser("korn", parents=com, help="Korn chain and null-space checks")
    _sp(ko)
    ko.add_argument("--family", choices=["gaussian", "bandlimited", "mixed"], help="default mixed")
    ko.add_argument("--n", type=int, help="fields (default 50)")
    ko.add_argument("--N", type=int, help="finer resolution; the coarser one is N/2 (default 128)")
    ko.add_argument("--L", type=float, help="default 10")

    for name, hlp in (("poincare", "Poincare-Korn constant stability"), ("embed", "Sobolev embedding constant stability")):
        q = sub.add_parser(name, parents=com, help=hlp)
        _sp(q)
        q.add_argument("--radius", type=float, help="support ball radius (default 1)")
        q.add_argument("--n", type=int, help="fields (default 10)")
        q.add_argument("--N", type=int, help="finer resolution (default 128)")
        q.add_argument("--L", type=float, help="default 8")

    ql = sub.add_parser("quasilocal", parents=com, help="fractional Laplacian between separated sets")
    _sp(ql)
    ql.add_argument("--q", type=float, help="default 2")
    ql.add_argument("--rho", type=float, help="set separation (default 4)")
    ql.add_argument("--h", type=float, help="lattice spacing (default 0.05)")

    cm = sub.add_parser("commutator", parents=com, help="commutator decay in eps")
    _sp(cm)
    cm.add_argument("--eps", type=_floats, help="default 0.01,0.02,0.04,0.08")
    cm.add_argument("--N", type=int, help="default 64")
    cm.add_argument("--L", type=float, help="default 8")
    cm.add_argument("--probes", type=int, help="default 8")

    so = sub.add_parser("solve", parents=com, help="solve the nonlocal system")
    _sp(so)
    src = so.add_mutually_exclusive_group()
    src.add_argument("--scenario", choices=sorted(ns.SCENARIOS), help="built-in scenario (default smooth)")
    src.add_argument("--problem", help="problem CSV as written by save_problem_csv")
    so.add_argument("--coeff", help="coefficient spec, e.g. constant(1), smooth(1,2,1), checkerboard(0.25,1,10)")
    so.add_argument("--N", type=int, help="default 64")
    so.add_argument("--L", type=float, help="default 5")
    so.add_argument("--radius", type=float, help="default 1")
    so.add_argument("--h", type=float, help="lattice spacing of a problem file (default: inferred)")
    so.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-8)")
    so.add_argument("--max-iter", type=int, help="default 20000")
    so.add_argument("--check-against-dense", action="store_const", const=True, help="compare with the dense solve (p = 2)")

    si = sub.add_parser("selfimprove", parents=com, help="self-improvement ratio table")
    _sp(si)
    si.add_argument("--eps", type=_floats, help="default 0.01,0.02,0.04")
    si.add_argument("--coeff", help="default smooth(1,2,1)")
    si.add_argument("--N", type=int, help="finer resolution; the coarser one is N/2 (default 128)")
    si.add_argument("--L", type=float, help="default 8")
    si.add_argument("--radius", type=float, help="default 1")
    si.add_argument("--probes", type=int, help="default 32")

    ca = sub.add_parser("campaign", parents=com, help="run a configured list of checks")
    ca.add_argument("--d", type=_dim)
    ca.add_argument("--checks", type=_names, help=f"comma list from: {', '.join(vf.CHECKS)}")
    ca.add_argument("--seeds", type=_ints, help="default: --seed")
    ca.add_argument("--N", type=int, help="default 128")
    ca.add_argument("--L", type=float, help="default 10")
    ca.add_argument("--s-list", type=_floats, help="default 0.5")
    ca.add_argument("--p-list", type=_floats, help="default 2")
    ca.add_argument("--eps-list", type=_floats, help="default 0.01,0.02,0.04,0.08")
    ca.add_argument("--n-fields", type=int, help="default 10")
    return parser


_CONVERT = {
    "eps": _floats,
    "eps_list": _floats,
    "s_list": _floats,
    "p_list": _floats,
    "seeds": _ints,
    "checks": _names,
    "d": _dim,
}


def load_config(path: str | Path, command: str) -> dict:
    """Read ``[global]`` and ``[<command>]`` sections into a flat dict of raw strings."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys such as N and L are case-sensitive flags
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for sec in ("global", command):
        if cp.has_section(sec):
            out.update({k.replace("-", "_"): v for k, v in cp.items(sec)})
    return out


def _coerce(parser: argparse.ArgumentParser, command: str, key: str, raw: str):
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    action = next((a for a in sub._actions if a.dest == key), None)
    if action is None:
        raise UsageError(f"unknown config key {key!r} for {command}")
    try:
        if isinstance(action, argparse._StoreConstAction):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        conv = _CONVERT.get(key) or action.type or str
        val = conv(raw)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {key!r}: {exc}") from None
    if action.choices is not None and val not in action.choices:
        raise UsageError(f"config key {key!r}: {val!r} not in {sorted(action.choices)}")
    return val


def _resolve(parser, args: argparse.Namespace) -> argparse.Namespace:
    if args.config:
        for k, raw in load_config(args.config, args.command).items():
            if k == "config":
                continue
            if getattr(args, k, None) is None:
                setattr(args, k, _coerce(parser, args.command, k, raw))
    for k, v in DEFAULTS.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    return args


def _get(args, key, default):
    v = getattr(args, key, None)
    return default if v is None else v


def _params(args) -> FracParams:
    return FracParams(float(args.s), float(args.p), int(args.d))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


class _Out:
    """All writes go through here so nothing lands outside the output directory."""

    def __init__(self, root: str):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root not in p.parents:
            raise UsageError(f"refusing to write outside {self.root}: {name}")
        return p


def _finish(reports: list, args, out: _Out, name: str) -> int:
    vf.write_reports_csv(reports, out.path(f"{name}.csv"), timings=bool(args.timings))
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check_id:<34} residual={r.residual:.3e}  threshold={r.threshold:.3e}")
    if args.plots:
        for k, r in enumerate(reports):
            try:
                vf.plot_report(r, out.path(f"{name}_{k:02d}_{r.check_id}.png"))
            except Exception as exc:  # plots never change the exit code
                print(f"plot skipped for {r.check_id}: {exc}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_kernels_check(args, out: _Out) -> int:
    d = int(args.d)
    t = float(_get(args, "t", 1.0))
    n_rand = int(_get(args, "n_random", 1000))
    reports = vf.check_kernel_normalization(d, float(_get(args, "L", 40.0)), int(_get(args, "N", 512)), t)
    reports.append(vf.check_symbol_match(d, float(_get(args, "symbol_L", 320.0)), int(_get(args, "symbol_N", 2048 if d < 3 else 128)), t))
    reports.append(vf.check_semigroup(d, n_rand, args.seed))
    reports.append(vf.check_nilpotency(d, n_rand, args.seed))
    reports.append(vf.check_riesz_identities(d, seed=args.seed))
    reports.append(vf.check_lemma_identities(d, seed=args.seed))
    return _finish(reports, args, out, "kernels_check")


def cmd_identities_check(args, out: _Out) -> int:
    kw = dict(
        d=int(args.d),
        L=float(_get(args, "L", 10.0)),
        N=int(_get(args, "N", 64)),
        n_fields=int(_get(args, "n_fields", 20)),
        n_levels=int(_get(args, "levels", 5)),
        seed=args.seed,
    )
    reports = [vf.check_riesz_identities(**kw), vf.check_lemma_identities(**kw)]
    reports += [vf.check_derivative_comparison(p, kw["d"], seed=args.seed) for p in (2.0, 3.0)]
    return _finish(reports, args, out, "identities_check")


def _pair(N: int) -> tuple[int, int]:
    return (N // 2, N)


def cmd_korn(args, out: _Out) -> int:
    prm = _params(args)
    N = int(_get(args, "N", 128))
    rep = vf.check_korn_chain(_get(args, "family", "mixed"), prm, int(_get(args, "n", 50)), _pair(N), float(_get(args, "L", 10.0)), args.seed)
    return _finish([rep, vf.check_null_space(prm, seed=args.seed)], args, out, "korn")


def cmd_poincare(args, out: _Out) -> int:
    rep = vf.check_poincare_korn(
        _params(args), float(_get(args, "radius", 1.0)), int(_get(args, "n", 10)), _pair(int(_get(args, "N", 128))), float(_get(args, "L", 8.0)), args.seed
    )
    return _finish([rep], args, out, "poincare")


def cmd_embed(args, out: _Out) -> int:
    rep = vf.check_sobolev_embedding(
        _params(args), int(_get(args, "n", 10)), _pair(int(_get(args, "N", 128))), float(_get(args, "L", 8.0)), float(_get(args, "radius", 1.0)), args.seed
    )
    return _finish([rep], args, out, "embed")


def cmd_quasilocal(args, out: _Out) -> int:
    prm = _params(args)
    rep = vf.check_quasi_locality(
        s=prm.s, p=prm.p, q=float(_get(args, "q", 2.0)), rho=float(_get(args, "rho", 4.0)), h=float(_get(args, "h", 0.05)), d=prm.d
    )
    return _finish([rep], args, out, "quasilocal")


def cmd_commutator(args, out: _Out) -> int:
    prm = _params(args)
    u, probes, mask = vf.commutator_setup(prm.d, int(_get(args, "N", 64)), float(_get(args, "L", 8.0)), int(_get(args, "probes", 8)), args.seed)
    rep = vf.estimate_commutator(u, probes, prm, _get(args, "eps", [0.01, 0.02, 0.04, 0.08]), mask)
    return _finish([rep], args, out, "commutator")


def cmd_solve(args, out: _Out) -> int:
    prm = _params(args)
    coeff = _get(args, "coeff", None)
    if args.problem:
        pb = ns.load_problem_csv(args.problem, prm, coeff or "constant(1)", _get(args, "h", None))
        label = Path(args.problem).stem
    else:
        name = _get(args, "scenario", "smooth")
        pb = ns.scenario(name, prm, L=float(_get(args, "L", 5.0)), N=int(_get(args, "N", 64)), radius=float(_get(args, "radius", 1.0)))
        if coeff:
            pb = ns.build_ball_problem(prm, L=pb.meta["L"], N=pb.meta["N"], radius=pb.meta["radius"], coeff=coeff, forcing=ns.SCENARIOS[name]["forcing"])
        label = name
    check = bool(args.check_against_dense)
    tol = float(_get(args, "tol", 1e-8))
    rep = ns.solve(pb, tol=tol, max_iter=int(_get(args, "max_iter", 20000)), check_against_dense=check)
    ns.save_solution_csv(pb, rep.solution, out.path("solution.csv"))
    out.path("solve_report.json").write_text(ns.report_to_json(rep, timings=bool(args.timings)))
    mono = bool(np.all(np.diff(rep.energy_trace) <= 0))
    est = {"n_nodes": pb.n, "iterations": rep.iterations, "grad_norm": rep.grad_norm, "converged": rep.converged, "monotone": mono}
    p = {"d": prm.d, "s": prm.s, "p": prm.p, "N": pb.meta.get("N"), "L": pb.meta.get("L"), "scenario": label}
    reports = [vf.CheckReport("solve.residual", p, rep.grad_norm if (rep.converged and mono) else float("inf"), tol, est, runtime_ms=int(rep.runtime_ms))]
    if check:
        reports.append(vf.CheckReport("solve.dense_mismatch", p, rep.dense_mismatch, 1e-6, {"dense_mismatch": rep.dense_mismatch}))
    return _finish(reports, args, out, "solve")


def cmd_selfimprove(args, out: _Out) -> int:
    prm = _params(args)
    eps = _get(args, "eps", [0.01, 0.02, 0.04])
    rep = vf.check_self_improvement(
        prm,
        _get(args, "coeff", "smooth(1,2,1)"),
        eps,
        _pair(int(_get(args, "N", 128))),
        float(_get(args, "L", 8.0)),
        float(_get(args, "radius", 1.0)),
        int(_get(args, "probes", 32)),
        args.seed,
    )
    with open(out.path("selfimprove_table.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "eps", "lhs", "dual_norm", "u_norm", "rhs", "ratio"])
        for N, rows in rep.meta["tables"].items():
            for r in rows:
                w.writerow([N] + [repr(float(r[k])) for k in ("eps", "lhs", "dual_norm", "u_norm", "rhs", "ratio")])
    return _finish([rep], args, out, "selfimprove")


def cmd_campaign(args, out: _Out) -> int:
    checks = _get(args, "checks", None)
    if not checks:
        raise UsageError("campaign needs --checks or a 'checks' key in the config")
    cfg = vf.CampaignConfig(
        checks=list(checks),
        seeds=list(_get(args, "seeds", [args.seed])),
        d=int(args.d),
        N=int(_get(args, "N", 128)),
        L=float(_get(args, "L", 10.0)),
        s_list=list(_get(args, "s_list", [0.5])),
        p_list=list(_get(args, "p_list", [2.0])),
        eps_list=list(_get(args, "eps_list", [0.01, 0.02, 0.04, 0.08])),
        n_fields=int(_get(args, "n_fields", 10)),
    )
    for s in cfg.s_list:
        for p in cfg.p_list:
            FracParams(s, p, cfg.d)
    reports = vf.run_campaign(cfg)
    return _finish(reports, args, out, "campaign")


COMMANDS = {
    "kernels-check": cmd_kernels_check,
    "identities-check": cmd_identities_check,
    "korn": cmd_korn,
    "poincare": cmd_poincare,
    "embed": cmd_embed,
    "quasilocal": cmd_quasilocal,
    "commutator": cmd_commutator,
    "solve": cmd_solve,
    "selfimprove": cmd_selfimprove,
    "campaign": cmd_campaign,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        args = _resolve(parser, args)
        if args.threads is not None:
            _accel.set_threads(int(args.threads))
        out = _Out(args.out)
        return COMMANDS[args.command](args, out)
    except (UsageError, ParameterError) as exc:
        print(f"frackorn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
