"""Command-line interface for batch audits.

Subcommands: ``pretrain``, ``attack``, ``baseline``, ``ablate``,
``diagnose``, ``evaluate``, ``scaling``.  All take ``--config`` (flat
key = value file), ``--seed`` (overrides the config seed) and ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import KINDS
from .checkpoint import save_victim
from .config import ExperimentConfig, load_config
from .diagnostics import (
    robustness_probe,
    separability_projection,
    summarize_by_membership,
    write_projection_csv,
    write_robustness_csv,
)
from .experiment import (
    PRIMARY_ATTACK,
    VARIANT_FULL,
    VARIANT_WO_IL,
    VARIANT_WO_UL,
    build_context,
    run_experiment,
    runtime_scaling_check,
)
from .rng import derive_seed


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_summary(result) -> None:
    summary = result.summary()
    for key, stats in summary["attacks"].items():
        print(f"{key}: acc {stats['acc_mean']:.4f} +- {stats['acc_std']:.4f}  "
              f"f1 {stats['f1_mean']:.4f} +- {stats['f1_std']:.4f}  ({stats['runs']} runs)")
    for failure in summary["failures"]:
        print(f"FAILED: {failure}", file=sys.stderr)


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    ctx = build_context(cfg, cfg.seed)
    path = out / f"victim_seed{cfg.seed}.ckpt"
    save_victim(path, ctx.target, seed=cfg.seed)
    print(f"wrote {path}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, attacks=(PRIMARY_ATTACK,), variants=(VARIANT_FULL,),
                            out_dir=_out_dir(args))
    _print_summary(result)
    return 1 if result.failures else 0


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, attacks=(args.name,), out_dir=_out_dir(args))
    _print_summary(result)
    return 1 if result.failures else 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    variant = {"wo-ul": VARIANT_WO_UL, "wo-il": VARIANT_WO_IL}[args.variant]
    result = run_experiment(cfg, attacks=(PRIMARY_ATTACK,), variants=(variant,),
                            out_dir=_out_dir(args))
    _print_summary(result)
    return 1 if result.failures else 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    ctx = build_context(cfg, cfg.seed)
    dom = ctx.attack_domain
    if args.probe == "pca":
        result, labels = separability_projection(ctx.target, dom.member_graph, dom.nonmember_graph)
        path = out / f"pca_seed{cfg.seed}.csv"
        write_projection_csv(path, result, labels)
        ratios = ", ".join(f"{r:.4f}" for r in result.explained_ratios)
        print(f"wrote {path} (explained variance ratios: {ratios})")
    else:
        values = {}
        labels = {}
        for tag, graph, is_member in (
            ("member", dom.member_graph, 1), ("nonmember", dom.nonmember_graph, 0),
        ):
            probe = robustness_probe(
                ctx.target, graph, range(graph.num_nodes),
                trials=args.trials, seed=derive_seed(cfg.seed, "robustness", tag),
            )
            offset = len(values)
            for node, sim in probe.items():
                values[offset + node] = sim
                labels[offset + node] = is_member
        members = [k for k, v in labels.items() if v == 1]
        path = out / f"robustness_seed{cfg.seed}.csv"
        write_robustness_csv(path, values, members)
        summary = summarize_by_membership(values, members)
        print(f"wrote {path} (member mean {summary.member_mean:.4f}, "
              f"non-member mean {summary.nonmember_mean:.4f})")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    reports = sorted(out.glob("report_*.json"))
    if not reports:
        print(f"no reports under {out}", file=sys.stderr)
        return 1
    groups: dict[str, list[dict]] = {}
    for path in reports:
        rec = json.loads(path.read_text(encoding="utf-8"))
        groups.setdefault(f"{rec['attack']}/{rec['variant']}", []).append(rec)
    for key, recs in sorted(groups.items()):
        accs = [r["acc"] for r in recs]
        f1s = [r["f1"] for r in recs]
        n = len(recs)
        acc_mean = sum(accs) / n
        f1_mean = sum(f1s) / n
        acc_std = (sum((a - acc_mean) ** 2 for a in accs) / (n - 1)) ** 0.5 if n > 1 else 0.0
        print(f"{key}: acc {acc_mean:.4f} +- {acc_std:.4f}  f1 {f1_mean:.4f}  ({n} runs)")
    return 0


def cmd_scaling(args: argparse.Namespace) -> int:
    cfg = _load(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    report = runtime_scaling_check(sizes, cfg)
    out = _out_dir(args)
    path = out / "scaling.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    for n, sec in zip(report.sizes, report.seconds):
        print(f"n={n}: {sec:.3f}s")
    print(f"log-log slope: {report.slope:.3f} (wrote {path})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphmia",
        description="Membership-inference audits of multi-domain graph pre-trained encoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, default=None, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=str, default="runs", help="output directory")

    p = sub.add_parser("pretrain", help="pre-train and checkpoint the victim")
    common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("attack", help="run the full similarity attack pipeline")
    common(p)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("baseline", help="run one baseline attack")
    p.add_argument("--name", required=True, choices=list(KINDS))
    common(p)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("ablate", help="run an ablated variant of the attack")
    p.add_argument("--variant", required=True, choices=["wo-ul", "wo-il"])
    common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("diagnose", help="pre-attack diagnostics")
    p.add_argument("probe", choices=["pca", "robustness"])
    p.add_argument("--trials", type=int, default=5)
    common(p)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("evaluate", help="aggregate previously written reports")
    common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("scaling", help="check how attack wall time scales with n")
    p.add_argument("--sizes", type=str, default="500,1000,2000,4000",
                   help="comma-separated node counts")
    common(p)
    p.set_defaults(fn=cmd_scaling)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
