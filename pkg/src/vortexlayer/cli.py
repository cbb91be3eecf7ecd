"""Command-line interface: run a scenario, verify the bundled suite, sweep rates."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .acceptance import SuiteCache, run_acceptance
from .harness import (
    ConfigError,
    bundled_scenario_names,
    emit_results,
    load_bundled,
    load_scenario,
    run_scenario,
)


def _parse_resolution(text):
    try:
        n_alpha, n_eta = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}")
    return n_alpha, n_eta


def _parse_eps(text):
    try:
        eps = [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")
    return eps


def _apply_overrides(spec, args):
    raw = spec.to_dict()
    if getattr(args, "resolution", None):
        n_alpha, n_eta = args.resolution
        raw["resolutions"].update({"n_alpha_closed": n_alpha, "n_alpha_open": n_alpha,
                                   "n_eta": n_eta})
    if getattr(args, "eps", None):
        raw["eps_sweep"] = args.eps
    from .harness import validate_spec
    return validate_spec(raw, where=raw["name"])


def cmd_run(args):
    spec = _apply_overrides(load_scenario(args.config), args)
    artifact = run_scenario(spec)
    paths = emit_results(artifact, args.out, dump_solution_fields=args.dump_fields)
    print(f"scenario={spec.name} verdict={artifact.verdict.get('verdict')} "
          f"runtime={artifact.runtime_seconds:.1f}s")
    for k, p in paths.items():
        print(f"wrote {k}: {p}")
    return 0


def cmd_verify(args):
    threads = int(os.environ.get("VORTEXLAYER_THREADS", "1"))
    results = run_acceptance(SuiteCache(threads=threads), verbose=True)
    n_pass = sum(r.passed for r in results)
    print(f"acceptance: {n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


def cmd_sweep(args):
    if args.param != "eps":
        print(f"unsupported sweep parameter {args.param!r} (only 'eps')", file=sys.stderr)
        return 2
    spec = _apply_overrides(load_bundled(args.scenario), args)
    artifact = run_scenario(spec)
    print(f"scenario={spec.name} verdict={artifact.verdict.get('verdict')}")
    print("eps,abs_I_eps,I_tilde,defect_linearity,min_talenti_int_gap")
    for r in artifact.records:
        if r.get("ok"):
            print(f"{r['eps']!r},{abs(r['I_eps'])!r},{r['I_tilde']!r},"
                  f"{r['defect_linearity']!r},{min(r['talenti_int_gap'])!r}")
        else:
            print(f"{r['eps']!r},nan,nan,nan,nan")
    for key, val in sorted(artifact.rates.items()):
        print(f"rate {key}={val:.4f}")
    if args.out:
        emit_results(artifact, args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vortexlayer",
        description="Vortex-sheet desingularization laboratory")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config and emit results")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--resolution", type=_parse_resolution, default=None,
                       metavar="NxM", help="override n_alpha x n_eta")
    p_run.add_argument("--eps", type=_parse_eps, default=None,
                       metavar="e1,e2,...", help="override the epsilon sweep")
    p_run.add_argument("--dump-fields", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the bundled suite against the "
                                          "acceptance thresholds (exit 0/1)")
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="rate table for one bundled scenario")
    p_sw.add_argument("--scenario", required=True,
                      help=f"one of {bundled_scenario_names()}")
    p_sw.add_argument("--param", default="eps")
    p_sw.add_argument("--eps", type=_parse_eps, default=None)
    p_sw.add_argument("--resolution", type=_parse_resolution, default=None)
    p_sw.add_argument("--out", default=None)
    p_sw.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                        format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
