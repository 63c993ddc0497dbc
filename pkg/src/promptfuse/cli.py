"""Command-line interface.

Subcommands mirror the pipeline stages: ``synth-data`` writes a task
archive, ``train`` tunes a context on it, ``eval`` scores predictors
against task + context, ``ablate`` runs the two ablation predictors, and
``sweep`` runs the temperature or shot sweeps end to end.  Exit code is 0
on success; failures print one ``ErrorClass: message`` line to stderr and
exit 1.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .backend import backend_name
from .config import RunSettings, load_config, validate_predictor_mode
from .errors import ConfigError, PromptFuseError
from .fusion import build_prompt_bank
from .harness import (
    build_predictor,
    derive_seeds,
    emit_report,
    evaluate_open,
    generate_synthetic_task,
    load_context,
    load_task,
    run_shot_sweep,
    run_temperature_sweep,
    sample_few_shot,
    save_context,
    save_task,
)
from .tuning import TrainConfig, train_coop

__all__ = ["main"]


def _settings(args) -> RunSettings:
    settings = load_config(args.config) if args.config else RunSettings()
    overrides = {}
    for attr in ("seed", "tau", "shots", "epochs"):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[attr] = value
    return replace(settings, **overrides) if overrides else settings


def _print_report_line(report) -> None:
    print(
        f"{report.predictor}: base {report.base_acc:.1f}  "
        f"new {report.new_acc:.1f}  h {report.h:.1f}"
    )


def cmd_synth_data(args) -> int:
    settings = _settings(args)
    seeds = derive_seeds(settings.seed)
    task = generate_synthetic_task(
        settings.n_classes,
        settings.dim,
        settings.noise_scale,
        settings.train_per_class,
        seeds.task,
        test_per_class=settings.test_per_class,
        embed_width=settings.embed_width,
        feat_dim=settings.feat_dim,
        template=settings.template,
    )
    save_task(task, args.out)
    print(
        f"task: {settings.n_classes} classes "
        f"({task.universe.num_base} base), seed {settings.seed} -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    settings = _settings(args)
    task = load_task(args.task)
    seeds = derive_seeds(settings.seed)
    few = sample_few_shot(task, settings.shots, seeds.sample)
    config = TrainConfig(
        max_epochs=settings.epochs,
        lr_init=settings.lr_init,
        warmup_lr=settings.warmup_lr,
        warmup_epochs=settings.warmup_epochs,
        shots=settings.shots,
        seed=seeds.train,
        tau=settings.tau,
        batch_size=settings.batch_size,
    )
    context = train_coop(few, config, task.encoders, task.universe, task.template)
    save_context(context, args.out)
    print(
        f"trained {context.num_vectors} context vectors for "
        f"{settings.epochs} epochs ({settings.shots}-shot) -> {args.out}"
    )
    return 0


def _eval_modes(args, settings) -> tuple[str, ...]:
    if getattr(args, "alpha_mode", None):
        return (validate_predictor_mode(args.alpha_mode),)
    return settings.predictors


def _run_eval(args, modes) -> int:
    settings = _settings(args)
    task = load_task(args.task)
    context = load_context(args.context)
    bank = build_prompt_bank(context, task.encoders, task.universe)
    out_dir = getattr(args, "out", None)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    for mode in modes if modes else _eval_modes(args, settings):
        predictor = build_predictor(
            mode,
            bank,
            task.universe,
            task.encoders,
            settings.tau,
            settings.alpha_cache_bins,
        )
        report = evaluate_open(
            predictor, task, shots=settings.shots, epochs=settings.epochs,
            seed=settings.seed,
        )
        _print_report_line(report)
        if out_dir is not None:
            name = "report_" + report.predictor.replace(":", "_") + ".txt"
            emit_report(report, Path(out_dir) / name)
    return 0


def cmd_eval(args) -> int:
    return _run_eval(args, None)


def cmd_ablate(args) -> int:
    return _run_eval(args, ("fixed:0.5", "combo"))


def cmd_sweep(args) -> int:
    settings = _settings(args)
    if args.out is not None:
        settings = replace(settings, out_dir=args.out)
    if bool(args.temperatures) == bool(args.shot_list):
        raise ConfigError("sweep needs exactly one of --temperatures or --shots")
    if args.temperatures:
        try:
            taus = [float(t) for t in args.temperatures.split(",") if t.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad temperature list: {exc}") from None
        reports = run_temperature_sweep(settings, taus)
        for report in reports:
            print(f"tau {report.tau!r}: ", end="")
            _print_report_line(report)
    else:
        try:
            counts = [int(s) for s in args.shot_list.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad shot list: {exc}") from None
        reports = run_shot_sweep(settings, counts)
        for report in reports:
            print(f"shots {report.shots}: ", end="")
            _print_report_line(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptfuse",
        description="Few-shot prompt tuning with score-weighted test-time "
        "prompt fusion on synthetic open-class tasks "
        f"(kernel backend: {backend_name()})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help, out_required=False):
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--tau", type=float, metavar="V")
        p.add_argument("--out", metavar="PATH", required=out_required, help=out_help)

    p = sub.add_parser("synth-data", help="generate and persist a task archive")
    common(p, "task archive to write", out_required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="few-shot tuning; writes a context archive")
    p.add_argument("--task", metavar="PATH", required=True)
    p.add_argument("--shots", type=int, metavar="N")
    p.add_argument("--epochs", type=int, metavar="N")
    common(p, "context archive to write", out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictors on task + context")
    p.add_argument("--task", metavar="PATH", required=True)
    p.add_argument("--context", metavar="PATH", required=True)
    p.add_argument(
        "--alpha-mode",
        metavar="MODE",
        help="dynamic, fixed:<v>, combo, learned, or handcrafted "
        "(default: the config's predictor list)",
    )
    common(p, "directory for report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the fixed-alpha and combo ablations")
    p.add_argument("--task", metavar="PATH", required=True)
    p.add_argument("--context", metavar="PATH", required=True)
    common(p, "directory for report files")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="temperature or shot sweep, end to end")
    p.add_argument("--temperatures", metavar="LIST", help="comma-separated taus")
    p.add_argument(
        "--shots", dest="shot_list", metavar="LIST", help="comma-separated shot counts"
    )
    common(p, "directory for report files")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PromptFuseError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
