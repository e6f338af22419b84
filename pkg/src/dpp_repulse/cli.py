"""Command-line interface: ``dpp-repulse <subcommand> ...``.

Exit codes: 0 success, 2 domain-invalid kernel or model, 1 usage or
internal error.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import json
import math
import os
import sys

import numpy as np

from . import kernels as K
from .kernels import KernelSpec, SpecError, make_kernel, validate
from .metrics import (LocalFlag, global_repulsiveness, local_repulsiveness, pcf_curve,
                      write_pcf_csv)
from .compact import constant_M, alpha_max_search, most_locally_repulsive
from .sampler import Window, sample_dpp, sample_matern2, sample_poisson, solve_matern_proposal

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


class DomainInvalid(Exception):
    pass


def worker_count():
    env = os.environ.get("DPP_REPULSE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise SystemExit(f"DPP_REPULSE_THREADS must be an integer, got {env!r}")
        return max(1, n)
    return os.cpu_count() or 1


def run_replicates(fn, reps):
    """fn(i) for i in range(reps), in parallel, results ordered by index."""
    n = min(worker_count(), reps)
    if n <= 1:
        return [fn(i) for i in range(reps)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(reps)))


def _dump(obj):
    sys.stdout.write(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def load_spec(path):
    with open(path) as fh:
        text = fh.read()
    return KernelSpec.from_json(text)


def load_valid_kernel(path):
    kernel = make_kernel(load_spec(path))
    rep = validate(kernel)
    if not rep.valid:
        raise DomainInvalid(f"kernel violates 0 <= F(C) <= 1 ({rep.violation}, sup F = {rep.sup_F})")
    return kernel


def cmd_validate(args):
    kernel = make_kernel(load_spec(args.spec))
    rep = validate(kernel)
    _dump({"valid": rep.valid, "sup_F": rep.sup_F, "argsup_t": rep.argsup_t,
           "alpha_max": rep.alpha_max, "violation": rep.violation})
    return EXIT_OK if rep.valid else EXIT_INVALID


def cmd_pcf(args):
    if not args.rmax > 0 or args.n < 2:
        raise SpecError("--rmax must be > 0 and --n >= 2")
    kernel = load_valid_kernel(args.spec)
    curve = pcf_curve(kernel, args.rmax, args.n)
    if args.out in (None, "-"):
        write_pcf_csv(curve, sys.stdout)
    else:
        write_pcf_csv(curve, args.out)
    return EXIT_OK


def _metrics(kernel):
    g = global_repulsiveness(kernel)
    loc = local_repulsiveness(kernel)
    if isinstance(loc, LocalFlag):
        return {"global": g, "local": None, "local_flag": loc.value}
    return {"global": g, "local": loc, "local_flag": None}


def cmd_metrics(args):
    kernel = load_valid_kernel(args.spec)
    _dump(_metrics(kernel))
    return EXIT_OK


def cmd_compact_opt(args):
    M = constant_M(args.d, args.rho)
    kernel = most_locally_repulsive(args.d, args.rho, args.R)
    out = {"d": args.d, "rho": args.rho, "R": args.R, "M": M,
           "branch": kernel.meta["branch"], "heuristic": kernel.meta["heuristic"],
           "F0": float(kernel.fourier(0.0))}
    if kernel.meta["branch"] == "closed_form":
        out["kappa"] = kernel.meta["kappa"]
        out["spec"] = kernel.spec.to_dict()
    else:
        out.update(alpha=kernel.meta["alpha"], beta=kernel.meta["beta"], gamma=kernel.meta["gamma"])
        out["spec"] = {"family": K.COMPACT_U, "d": args.d, "rho": args.rho, "R": args.R,
                       "alpha": kernel.meta["alpha"]}
    out["metrics"] = _metrics(kernel)
    _dump(out)
    return EXIT_OK


def _parse_window(text, d):
    if text is None:
        return Window.cube(-5.0, 5.0, d)
    w = Window.parse(text)
    if w.d != d:
        raise SpecError(f"window has dimension {w.d}, model has {d}")
    return w


def _simulator(args):
    """(d, rho, sampler(i) -> PointPattern, model tag) from the CLI flags."""
    if args.spec:
        kernel = load_valid_kernel(args.spec)
        if kernel.spec.family == K.POISSON:
            window = _parse_window(args.window, kernel.d)
            return kernel, window, lambda i: sample_poisson(kernel.rho, window, args.seed, i)
        window = _parse_window(args.window, kernel.d)
        return kernel, window, lambda i: sample_dpp(kernel, window, args.seed, K=args.K, replicate=i)
    if args.model == "poisson":
        spec = KernelSpec(K.POISSON, d=args.d, rho=args.rho)
        window = _parse_window(args.window, args.d)
        return make_kernel(spec), window, lambda i: sample_poisson(args.rho, window, args.seed, i)
    if args.model == "matern2":
        r = args.hardcore_r if args.hardcore_r is not None else 1.0 / math.sqrt(math.pi)
        if args.proposal_intensity is not None:
            lam = args.proposal_intensity
        elif args.target_rho is not None:
            try:
                lam = solve_matern_proposal(args.target_rho, r, args.d)
            except ValueError as exc:
                raise DomainInvalid(str(exc))
        else:
            lam = 1e3
        window = _parse_window(args.window, args.d)
        return None, window, lambda i: sample_matern2(lam, r, window, args.seed, i)
    raise SpecError("give --spec or --model")


def cmd_simulate(args):
    if args.reps < 1:
        raise SpecError("--reps must be >= 1")
    _, _, sim = _simulator(args)
    os.makedirs(args.out, exist_ok=True)
    patterns = run_replicates(sim, args.reps)
    for i, p in enumerate(patterns):
        stem = os.path.join(args.out, f"pattern_{i:05d}")
        p.write_csv(stem + ".csv")
        p.write_sidecar(stem + ".json")
    _dump({"written": args.reps, "out": args.out, "counts": [p.n for p in patterns]})
    return EXIT_OK


def cmd_validate_sim(args):
    from .stats import validation_report

    if args.reps < 2:
        raise SpecError("--reps must be >= 2")
    kernel, window, sim = _simulator(args)
    if kernel is None:
        raise SpecError("validate-sim needs a kernel spec or the poisson model")
    patterns = run_replicates(sim, args.reps)
    report = validation_report(kernel, window, patterns)
    _dump(report)
    return EXIT_OK


def cmd_alpha_max(args):
    if args.family in (K.BESSEL, K.LAGUERRE_GAUSS):
        param = args.sigma if args.family == K.BESSEL else args.m
        if param is None:
            raise SpecError("--sigma (BesselType) or --m (LaguerreGauss) is required")
        out = {"family": args.family, "alpha_max": K.alpha_max(args.family, args.d, args.rho, param)}
        if args.family == K.LAGUERRE_GAUSS:
            out["limit_m_infinity"] = K.lg_alpha_max_limit(args.d, args.rho)
    elif args.family == K.COMPACT_U:
        if args.R is None:
            raise SpecError("--R is required for CompactU")
        out = {"family": args.family,
               "alpha_max": _finite(alpha_max_search(args.d, args.rho, args.R))}
    else:
        raise SpecError(f"no alpha_max for family {args.family}")
    _dump(out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dpp-repulse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check existence of the DPP for a kernel spec")
    s.add_argument("--spec", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("pcf", help="theoretical pcf curve as CSV")
    s.add_argument("--spec", required=True)
    s.add_argument("--rmax", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_pcf)

    s = sub.add_parser("metrics", help="global and local repulsiveness")
    s.add_argument("--spec", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("compact-opt", help="most locally repulsive kernel of range R")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--R", type=float, required=True)
    s.set_defaults(func=cmd_compact_opt)

    for name, fn, hlp in (("simulate", cmd_simulate, "simulate point patterns"),
                          ("validate-sim", cmd_validate_sim, "simulate and compare with theory")):
        s = sub.add_parser(name, help=hlp)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--spec")
        src.add_argument("--model", choices=("poisson", "matern2"))
        s.add_argument("--d", type=int, default=2)
        s.add_argument("--rho", type=float, default=1.0)
        s.add_argument("--hardcore-r", type=float)
        s.add_argument("--proposal-intensity", type=float)
        s.add_argument("--target-rho", type=float)
        s.add_argument("--window", help='bounds "lo1,hi1;lo2,hi2"; default [-5,5]^d')
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--reps", type=int, default=1)
        s.add_argument("--K", type=int, help="spectral truncation (default: automatic)")
        if name == "simulate":
            s.add_argument("--out", required=True)
        s.set_defaults(func=fn)

    s = sub.add_parser("alpha-max", help="largest admissible alpha")
    s.add_argument("--family", required=True, choices=(K.BESSEL, K.LAGUERRE_GAUSS, K.COMPACT_U))
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--sigma", type=float)
    s.add_argument("--m", type=int)
    s.add_argument("--R", type=float)
    s.set_defaults(func=cmd_alpha_max)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    try:
        return args.func(args)
    except DomainInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SpecError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
