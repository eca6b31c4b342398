"""Command line entry point: ``cpkdim <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from fractions import Fraction

from . import harness
from .catalog import load_map
from .config import ExperimentConfig, load_config
from .errors import CpkError
from .normal_forms import EPS_RES, enumerate_resonances

log = logging.getLogger("cpkdim")


def _parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for sampling")
    common.add_argument("--map", dest="maps", action="append",
                        help="catalog map name; repeat for several maps")

    p = argparse.ArgumentParser(prog="cpkdim", parents=[common],
                                description="Dimension bounds for equilibrium measures on CP^k.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("sample", "sample the equilibrium measure"),
                       ("lyapunov", "estimate the Lyapunov spectrum"),
                       ("entropy", "estimate the entropy from dynamical balls"),
                       ("dimension", "local and correlation dimension"),
                       ("growth", "volume growth of catalog discs"),
                       ("verify", "full pipeline and report")]:
        sub.add_parser(name, parents=[common], help=text)
    r = sub.add_parser("resonance", parents=[common], help="enumerate resonant degrees")
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambdas", help="comma-separated exponents, descending")
    g.add_argument("--bases", help="comma-separated rationals q_i with lambda_i = log q_i")
    r.add_argument("--eps-res", type=float, default=EPS_RES)
    return p


def _config(args) -> ExperimentConfig:
    opt = vars(args)
    cfg = load_config(opt["config"]) if opt.get("config") else ExperimentConfig()
    maps = opt.get("maps")
    return cfg.with_overrides(seed=opt.get("seed"), out=opt.get("out"),
                              threads=opt.get("threads"), maps=tuple(maps) if maps else None)


def _resonance(args):
    if args.bases:
        bases = [Fraction(s) for s in args.bases.split(",")]
        lambdas = [math.log(b) for b in bases]
    else:
        bases = None
        lambdas = [float(s) for s in args.lambdas.split(",")]
    res = enumerate_resonances(lambdas, args.eps_res, bases)
    print(f"theta = {res.theta:.12g}")
    print(f"Delta = {res.Delta}")
    print(f"I = {{{', '.join(str(i) for i in sorted(res.I))}}}")
    for i, degs in enumerate(res.R, 1):
        print(f"R_{i} = {{{'; '.join(','.join(map(str, a)) for a in degs)}}}")


def _run(args):
    if args.command == "resonance":
        _resonance(args)
        return
    cfg = _config(args)
    if args.command == "verify":
        report = harness.run_verify(cfg)
        csv_path, md_path = harness.emit_report(report, cfg.out)
        print(md_path.read_text())
        log.info("wrote %s and %s", csv_path, md_path)
        return
    for name in cfg.maps:
        with harness.stage("load"):
            f = load_map(name, cfg.catalog)
        if args.command == "sample":
            with harness.stage("sample"):
                cloud = harness.stage_sample(f, cfg)
            print(f"{name}: {len(cloud)} points -> {cfg.out}/{name}_cloud.csv")
            continue
        if args.command == "growth":
            with harness.stage("growth"):
                res = harness.stage_growth(f, cfg)
            worst = max((r.ratio for r in res), default=float("nan"))
            print(f"{name}: {sum(r.passed for r in res)}/{len(res)} pass, worst ratio {worst:.4f}")
            continue
        with harness.stage("sample"):
            cloud = harness.load_or_sample(f, cfg)
        if args.command == "lyapunov":
            with harness.stage("lyapunov"):
                spec, resid, sigma, margin = harness.stage_lyapunov(f, cloud, cfg)
            lam = ", ".join(f"{x:.6f}±{s:.6f}" for x, s in zip(spec.lambdas, spec.stderr))
            print(f"{name}: lambda = [{lam}], identity residual {resid:.3g} (sigma {sigma:.3g}), "
                  f"lambda_k - log sqrt d = {margin:+.5f}")
        elif args.command == "entropy":
            with harness.stage("entropy"):
                est = harness.stage_entropy(f, cloud, cfg)
            print(f"{name}: h = {est.h:.6f} ± {est.se:.6f} (levels {est.levels[0]}..{est.levels[1]})")
        elif args.command == "dimension":
            with harness.stage("dimension"):
                med, se, corr = harness.stage_dimension(cloud, cfg, name)
            print(f"{name}: median local dimension {med:.4f} ± {se:.4f}, "
                  f"correlation dimension {corr.slope:.4f} ± {corr.ci95:.4f}")


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        _run(args)
    except (CpkError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
