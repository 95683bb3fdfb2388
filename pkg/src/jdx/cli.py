"""Command-line front end.

Subcommands: check, tail, density, validate, price.  Exit codes: 0 success,
1 domain/condition failure, 2 usage or parse error.  All randomized commands
either take --seed or emit the auto-chosen seed in the output metadata.
"""
from __future__ import annotations

import argparse
import json
import secrets
import sys

import numpy as np

from . import expansion, model as model_mod, montecarlo, numint, pricing
from .expressions import ExpressionError
from .truncation import make_truncation

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _csv(rows, header):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _load_model(args):
    if not args.model:
        raise UsageError("--model FILE is required")
    try:
        return model_mod.load_model_file(args.model)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {args.model}")
    except (json.JSONDecodeError, ExpressionError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot parse model file: {exc}")


def _quad_config(args):
    kw = {}
    if getattr(args, "abs_tol", None) is not None:
        kw["abs_tol"] = args.abs_tol
    if getattr(args, "rel_tol", None) is not None:
        kw["rel_tol"] = args.rel_tol
    if not kw:
        return None
    base = numint.DEFAULT_CONFIG
    return numint.QuadratureConfig(
        abs_tol=kw.get("abs_tol", base.abs_tol),
        rel_tol=kw.get("rel_tol", base.rel_tol),
    )


def _floats(text, flag):
    try:
        return [float(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{flag} expects a comma-separated list of numbers")


def _require_y_positive(ys):
    if any(y <= 0 for y in ys):
        raise UsageError("y must be positive (right-tail expansions only)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(args):
    mdl = _load_model(args)
    report = model_mod.check_conditions(mdl, cfg=_quad_config(args))
    _emit(report.to_json(indent=2) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_DOMAIN


def cmd_tail(args):
    mdl = _load_model(args)
    cfg = _quad_config(args)
    xs = _floats(args.x, "--x")
    ys = _floats(args.y, "--y")
    _require_y_positive(ys)
    scheme = make_truncation(mdl, args.eps, cfg)
    records = []
    for x in xs:
        for y in ys:
            co = expansion.tail_A2(mdl, scheme, x, y, cfg)
            rec = co.to_dict()
            if args.t is not None:
                ex = expansion.tail_expansion(mdl, scheme, x, y, args.t,
                                              cfg, coefficients=co)
                rec["t"] = args.t
                rec["expansion"] = ex.value
            if args.eps_sweep:
                sweep = expansion.epsilon_invariance(
                    mdl, x, y, _floats(args.eps_sweep, "--eps-sweep"),
                    quantity="tail", cfg=cfg)
                rec["eps_sweep"] = sweep.to_dict()
            records.append(rec)
    _write_records(records, args)
    return EXIT_OK


def cmd_density(args):
    mdl = _load_model(args)
    cfg = _quad_config(args)
    xs = _floats(args.x, "--x")
    ys = _floats(args.y, "--y")
    _require_y_positive(ys)
    scheme = make_truncation(mdl, args.eps, cfg)
    records = []
    for x in xs:
        for y in ys:
            co = expansion.density_a2(mdl, scheme, x, y, cfg)
            rec = co.to_dict()
            if args.check_dy:
                rec["dy_consistency"] = _dy_consistency(mdl, scheme, x, y, co, cfg)
            records.append(rec)
    _write_records(records, args)
    return EXIT_OK


def _dy_consistency(mdl, scheme, x, y, co, cfg):
    """a1 vs -dA1/dy and a2 vs -dA2/dy by central differences."""
    step = 1e-4 * y
    a1_fd = -(expansion.tail_A1(mdl, x, y + step, cfg, check=False)
              - expansion.tail_A1(mdl, x, y - step, cfg, check=False)) / (2 * step)
    a2_fd = -(expansion.tail_A2(mdl, scheme, x, y + step, cfg).A2
              - expansion.tail_A2(mdl, scheme, x, y - step, cfg).A2) / (2 * step)
    return {
        "a1": co.a1, "a1_from_tail": a1_fd,
        "a2": co.a2, "a2_from_tail": a2_fd,
        "step": step,
    }


def _write_records(records, args):
    if args.format == "csv":
        header, rows = _records_to_csv(records)
        _emit(_csv(rows, header), args.out)
    else:
        payload = records[0] if len(records) == 1 else records
        _emit(json.dumps(payload, indent=2) + "\n", args.out)


def _records_to_csv(records):
    base_keys = [k for k in records[0] if k not in ("parts", "flags", "eps_sweep",
                                                    "dy_consistency")]
    part_keys = sorted(records[0].get("parts", {}))
    header = base_keys + [f"part_{k}" for k in part_keys] + ["flags"]
    rows = []
    for rec in records:
        row = [rec[k] for k in base_keys]
        row += [rec["parts"][k] for k in part_keys]
        row.append(";".join(rec.get("flags", [])))
        rows.append(row)
    return header, rows


def cmd_validate(args):
    mdl = _load_model(args)
    cfg = _quad_config(args)
    t_grid = _floats(args.t_grid, "--t-grid")
    if len(t_grid) < 4:
        raise UsageError("--t-grid needs at least 4 points for the coefficient fit")
    if sorted(t_grid) != t_grid or any(t <= 0 for t in t_grid):
        raise UsageError("--t-grid must be increasing and positive")
    x, y = args.x, args.y
    if y is None or x is None:
        raise UsageError("--x and --y are required")
    if y <= 0:
        raise UsageError("y must be positive")
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    sim = montecarlo.SimScheme(seed=seed, eps=args.sim_eps or args.eps,
                               n_steps=args.n_steps,
                               small_jump_mode=args.small_jump_mode,
                               stream_id=args.stream)
    if args.tune_steps:
        sim = montecarlo.tune_n_steps(mdl, sim, x, max(t_grid))
    scheme = make_truncation(mdl, args.eps, cfg)
    co = expansion.tail_A2(mdl, scheme, x, y, cfg)
    estimates, rows = [], []
    for t in t_grid:
        samples = montecarlo.simulate_terminal(mdl, sim, x, t, args.n_samples,
                                               threads=args.threads)
        est = montecarlo.estimate_tail(samples, x, y,
                                       provenance=(sim.seed, sim.stream_id))
        estimates.append(est)
        value = t * co.A1 + 0.5 * t * t * co.A2
        resid = est.mean - value
        rows.append([t, est.mean, est.std_error, value, resid, resid / t**3])
    fit = montecarlo.fit_expansion_coeffs(t_grid, estimates)
    header = ["t", "mc_tail", "mc_stderr", "expansion", "residual", "residual_over_t3"]
    text = _csv(rows, header)
    text += "# fitted_A1={} fitted_A1_se={} analytic_A1={}\n".format(
        _fmt(fit.A1), _fmt(fit.se_A1), _fmt(co.A1))
    text += "# fitted_A2={} fitted_A2_se={} analytic_A2={}\n".format(
        _fmt(fit.A2), _fmt(fit.se_A2), _fmt(co.A2))
    text += "# seed={} stream={} eps={} sim_eps={} n_steps={} mode={}\n".format(
        sim.seed, sim.stream_id, _fmt(args.eps), _fmt(sim.eps), sim.n_steps,
        sim.small_jump_mode)
    _emit(text, args.out)
    return EXIT_OK


def cmd_price(args):
    mdl = _load_model(args)
    cfg = _quad_config(args)
    if args.spot is None or args.strike is None:
        raise UsageError("--spot and --strike are required")
    try:
        pm = pricing.build_pricing_model(mdl, args.spot, cfg)
        if args.strike <= args.spot:
            raise pricing.OTMError("strike must exceed spot: out-of-the-money calls only")
        leading = pricing.otm_leading_term(pm, args.strike, cfg)
    except pricing.OTMError as exc:
        raise DomainError(str(exc))
    except pricing.ModelRejectionError as exc:
        raise DomainError(str(exc))
    payload = {"leading_term": leading}
    if args.mc:
        if args.t is None:
            raise UsageError("--mc needs --t")
        seed = args.seed if args.seed is not None else secrets.randbits(32)
        sim = montecarlo.SimScheme(seed=seed, eps=args.sim_eps or args.eps,
                                   n_steps=args.n_steps,
                                   small_jump_mode=args.small_jump_mode,
                                   stream_id=args.stream)
        est = montecarlo.estimate_call_price(pm.model, args.spot, args.strike,
                                             args.t, args.n_samples, sim,
                                             threads=args.threads)
        payload.update({
            "mc_estimate": est.mean,
            "mc_std_error": est.std_error,
            "t": args.t,
            "mc_over_t": est.mean / args.t,
            "seed": seed,
            "stream": sim.stream_id,
        })
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=False, help="model JSON file")
    common.add_argument("--eps", type=float, default=0.5,
                        help="truncation threshold for coefficients (default 0.5)")
    common.add_argument("--abs-tol", type=float, default=None)
    common.add_argument("--rel-tol", type=float, default=None)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=1)

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--n-samples", type=int, default=100000)
    mc.add_argument("--seed", type=int, default=None)
    mc.add_argument("--stream", type=int, default=0)
    mc.add_argument("--n-steps", type=int, default=64)
    mc.add_argument("--small-jump-mode", choices=montecarlo.SMALL_JUMP_MODES,
                    default="gaussian-substitute")
    mc.add_argument("--sim-eps", type=float, default=None,
                    help="simulation truncation threshold (default: --eps)")
    mc.add_argument("--tune-steps", action="store_true",
                    help="auto-double n_steps until the step bias is below noise")

    p = argparse.ArgumentParser(prog="jdx",
                                description="small-time expansions for local "
                                            "jump-diffusion models")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("check", parents=[common],
                        help="validate model conditions")
    pc.set_defaults(func=cmd_check)

    pt = sub.add_parser("tail", parents=[common], help="tail coefficients A1/A2")
    pt.add_argument("--x", required=True)
    pt.add_argument("--y", required=True)
    pt.add_argument("--t", type=float, default=None)
    pt.add_argument("--eps-sweep", default=None,
                    help="comma list of eps values for the invariance report")
    pt.set_defaults(func=cmd_tail)

    pd = sub.add_parser("density", parents=[common],
                        help="density coefficients a1/a2")
    pd.add_argument("--x", required=True)
    pd.add_argument("--y", required=True)
    pd.add_argument("--check-dy", action="store_true",
                    help="compare against -d/dy of the tail coefficients")
    pd.set_defaults(func=cmd_density)

    pv = sub.add_parser("validate", parents=[common, mc],
                        help="Monte Carlo vs expansion table")
    pv.add_argument("--x", type=float, required=True)
    pv.add_argument("--y", type=float, required=True)
    pv.add_argument("--t-grid", required=True)
    pv.set_defaults(func=cmd_validate, format="csv")

    pp = sub.add_parser("price", parents=[common, mc],
                        help="OTM call leading term (optionally vs MC)")
    pp.add_argument("--spot", type=float, required=True)
    pp.add_argument("--strike", type=float, required=True)
    pp.add_argument("--t", type=float, default=None)
    pp.add_argument("--mc", action="store_true")
    pp.set_defaults(func=cmd_price)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (expansion.ConsistencyError, expansion.CoefficientQuadratureError,
            numint.QuadratureError, model_mod.JumpRangeError,
            model_mod.RootFindingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
