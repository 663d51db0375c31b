"""Command-line interface.

Subcommands: ``logistic``, ``two-moons``, ``fig1``, ``exhaustive``,
``validate``.  Each accepts ``--config FILE`` (JSON) whose fields are
overridden by explicit flags.  Exit codes: 0 success, 1 invariant failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .grids import ConfigError
from .optimizers import RunAbortError


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    return cfg


def _parse_seeds(args) -> list | None:
    if getattr(args, "seeds", None):
        return [int(s) for s in args.seeds.split(",")]
    if getattr(args, "seed", None) is not None:
        return [int(args.seed)]
    return None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--out-dir", default="runs", help="output directory")
    p.add_argument("--seed", type=int, help="single seed")


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-schedule", dest="lr_schedule",
                   choices=["constant", "inverse_power", "piecewise"])
    p.add_argument("--lr-delta", type=float, dest="lr_delta")
    p.add_argument("--alpha", type=float)
    p.add_argument("--m-clip", type=float, dest="m_clip")
    p.add_argument("--epsilon0", type=float)
    p.add_argument("--anneal-decay", type=float, dest="anneal_decay")
    p.add_argument("--no-anneal", action="store_const", const=False, dest="anneal")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--parallel", type=int, help="concurrent seeds")


def _training_overrides(args) -> dict:
    keys = ("epochs", "batch_size", "lr", "lr_schedule", "lr_delta", "alpha",
            "m_clip", "epsilon0", "anneal_decay", "anneal", "format", "parallel")
    over = {k: getattr(args, k, None) for k in keys}
    over["seeds"] = _parse_seeds(args)
    return over


def cmd_logistic(args) -> int:
    cfg = harness.resolve_config(harness.LOGISTIC_DEFAULTS,
                                 _load_config(args.config),
                                 _training_overrides(args))
    summary = harness.run_logistic(cfg, args.out_dir)
    for seed, per in summary["per_seed"].items():
        parts = [f"{m}: loss={per[m]['final_loss_latent']:.4f}"
                 f" hamming={per[m]['hamming_to_true']}"
                 for m in ("askew", "sgd", "projected", "bc_ste")]
        print(f"seed {seed}  " + "  ".join(parts))
    return 0


def cmd_two_moons(args) -> int:
    cfg = harness.resolve_config(harness.TWO_MOONS_DEFAULTS,
                                 _load_config(args.config),
                                 _training_overrides(args))
    summary = harness.run_two_moons(cfg, args.out_dir)
    med = summary["medians"]
    print("median test loss  full-precision={sgd_test:.5f}  exhaustive-best="
          "{exhaustive_best_test:.5f}  askew={askew_test:.5f}  "
          "bc_ste={bc_ste_test:.5f}".format(**med))
    return 0


def cmd_fig1(args) -> int:
    over = {
        "epsilon": args.epsilon, "m_clip": args.m_clip,
        "alphas": [float(a) for a in args.alphas.split(",")] if args.alphas else None,
        "grid_res": args.grid_res, "extent": args.extent,
        "start": [float(v) for v in args.start.split(",")] if args.start else None,
        "traj_alpha": args.traj_alpha, "gamma": args.gamma, "steps": args.steps,
        "search_res": None,
    }
    cfg = harness.resolve_config(harness.FIG1_DEFAULTS,
                                 _load_config(args.config), over)
    meta = harness.run_fig1(cfg, args.out_dir)
    final = meta["trajectory_final"]
    print(f"constrained minimizer {meta['constrained_min']}  "
          f"trajectory end {final['w']}  gap={final['feasibility_gap']:.2e}  "
          f"kkt={final['kkt_residual']:.2e}")
    if meta["vector_field_violations"]:
        print(f"{meta['vector_field_violations']} inadmissible velocities",
              file=sys.stderr)
        return 1
    return 0


def cmd_exhaustive(args) -> int:
    over = {"model": args.model, "grid": args.grid, "seed": args.seed}
    cfg = harness.resolve_config(harness.EXHAUSTIVE_DEFAULTS,
                                 _load_config(args.config), over)
    summary = harness.run_exhaustive(cfg, args.out_dir)
    best = summary["best"]
    print(f"{summary['n_configs']} configurations; best id {best['config_id']} "
          f"train_loss={best['train_loss']:.5f} test_loss={best['test_loss']}")
    return 0


def cmd_validate(args) -> int:
    over = {"seed": args.seed, "alpha": args.alpha,
            "epsilon": args.epsilon, "m_clip": args.m_clip}
    cfg = harness.resolve_config(harness.VALIDATE_DEFAULTS,
                                 _load_config(args.config), over)
    reports = harness.run_validate(cfg)
    ok = True
    for rep in reports:
        print(rep.line())
        ok = ok and rep.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="askewsgd",
        description="Quantization-constrained training experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("logistic", help="logistic-regression benchmark, four optimizers")
    _add_common(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_logistic)

    p = sub.add_parser("two-moons", help="two-moons benchmark plus exhaustive search")
    _add_common(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_two_moons)

    p = sub.add_parser("fig1", help="2-D velocity field and trajectory diagnostics")
    _add_common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--m-clip", type=float, dest="m_clip")
    p.add_argument("--alphas", help="comma-separated pull-back strengths")
    p.add_argument("--grid-res", type=int, dest="grid_res")
    p.add_argument("--extent", type=float)
    p.add_argument("--start", help="trajectory start, e.g. 0.5,0.5")
    p.add_argument("--traj-alpha", type=float, dest="traj_alpha")
    p.add_argument("--gamma", type=float)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_fig1)

    p = sub.add_parser("exhaustive", help="enumerate all grid configurations")
    _add_common(p)
    p.add_argument("--model", choices=["mlp", "logistic", "quadratic"])
    p.add_argument("--grid")
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("validate", help="run the invariant suites")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--m-clip", type=float, dest="m_clip")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RunAbortError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
