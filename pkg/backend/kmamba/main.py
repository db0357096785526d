"""
Command-line entry point.

Commands:
- gen: write a phantom dataset
- train: optimize a network on a dataset
- eval: score a checkpoint per case and class
- gradcheck: finite-difference suites
- bench: scan vs attention runtime scaling
- ablate: HSA/BKM/MDA on/off grid
- sweep: one hyper-parameter over values and seeds
- params: parameter ledger of a configuration

Exceptions map to exit codes (see ``EXIT_CODES``).
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.table import Table

from kmamba.core.config import RunConfig, Settings, get_settings, load_run_config
from kmamba.core.domain.records import (
    AblationRecord,
    BenchRecord,
    MetricRecord,
    SweepRecord,
    ValidationSummary,
)
from kmamba.core.exceptions import (
    ConfigurationException,
    DatasetNotFoundError,
    InvariantViolationError,
    KMambaException,
    NonFiniteError,
    TrainingException,
    VolumeFormatException,
)
from kmamba.infrastructure.data.dataset import PhantomDatasetRepository, generate_dataset
from kmamba.infrastructure.storage.results import write_records
from kmamba.infrastructure.storage.vvol import export_pgm
from kmamba.nn.model import build_model, full_scale_config
from kmamba.services.ablation import COMPONENTS, run_ablation, run_sweep
from kmamba.services.benchmark import check_slope, run_benchmark
from kmamba.services.evaluator import Evaluator, summarize
from kmamba.services.gradcheck_suite import SUITES, all_passed, run_suites
from kmamba.services.trainer import Trainer, load_model

logger = logging.getLogger(__name__)

console = Console()

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_INVARIANT = 5
EXIT_FORMAT = 6

# first match wins
EXIT_CODES: list[tuple[type[Exception], int]] = [
    (DatasetNotFoundError, EXIT_MISSING),
    (ConfigurationException, EXIT_CONFIG),
    (InvariantViolationError, EXIT_INVARIANT),
    (TrainingException, EXIT_INVARIANT),
    (NonFiniteError, EXIT_INVARIANT),
    (VolumeFormatException, EXIT_FORMAT),
]


def exit_code_for(exc: Exception) -> int:
    for exc_type, code in EXIT_CODES:
        if isinstance(exc, exc_type):
            return code
    return EXIT_UNEXPECTED


def _csv_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _int_list(value: str) -> list[int]:
    try:
        return [int(part) for part in _csv_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from e


def _run_config(path: Optional[Path]) -> RunConfig:
    return load_run_config(path) if path is not None else RunConfig()


def _summary_table(title: str, summary: ValidationSummary) -> Table:
    table = Table(title=title)
    for column in ("final L_total", "val Dice", "val HD95", "val IoU"):
        table.add_column(column, justify="right")
    table.add_row(*(f"{v:.4f}" if v is not None and v == v else "-" for v in (
        summary.final_l_total, summary.val_dice, summary.val_hd95, summary.val_iou)))
    return table


# =============================================================================
# Commands
# =============================================================================

def cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    records = generate_dataset(args.out, args.n, args.size, args.seed, args.val_fraction,
                               args.noise_sigma, threads=settings.THREADS)
    if args.pgm:
        repository = PhantomDatasetRepository(args.out, normalize=False)
        for record in records:
            case = repository.load_case(record.case_id)
            export_pgm(args.out / "slices" / f"{record.case_id}_label.pgm", case.label_volume())
            export_pgm(args.out / "slices" / f"{record.case_id}_image.pgm", case.image_volume())
    console.print(f"Wrote {len(records)} phantoms to {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    cfg = load_run_config(args.config)
    repository = PhantomDatasetRepository(args.data, normalize=cfg.data.normalize)
    cases = repository.load_split("train", threads=settings.THREADS)
    args.out.mkdir(parents=True, exist_ok=True)
    cfg.write(args.out / "config.txt")
    result = Trainer(cfg, cases, args.out).fit()
    train_dice = Evaluator(result.model).foreground_dice(cases)

    table = Table(title="Training")
    for column in ("steps", "final L_total", "train foreground Dice", "checkpoint"):
        table.add_column(column)
    table.add_row(str(cfg.train.steps), f"{result.final_l_total:.4f}", f"{train_dice:.4f}",
                  str(result.checkpoint))
    console.print(table)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    model, cfg = load_model(args.model)
    repository = PhantomDatasetRepository(args.data, normalize=cfg.data.normalize)
    split = None if args.split == "all" else args.split
    cases = repository.load_split(split, threads=settings.THREADS)
    records = Evaluator(model, regions=args.regions).evaluate(cases)
    write_records(args.out, MetricRecord.CSV_HEADER, records)
    console.print(_summary_table(f"Evaluation ({len(cases)} cases)",
                                 summarize(records, float("nan"))))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    names = _csv_list(args.module) if args.module else None
    results = run_suites(names, seed=args.seed)
    table = Table(title="Gradient checks")
    for column in ("check", "max rel. error", "tolerance", "coords", "status"):
        table.add_column(column)
    for r in results:
        table.add_row(r.name, f"{r.max_rel_error:.2e}", f"{r.tolerance:.0e}", str(r.checked),
                      "[green]pass[/green]" if r.passed else f"[red]FAIL[/red] ({r.worst_param})")
    console.print(table)
    return EXIT_OK if all_passed(results) else EXIT_INVARIANT


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    records = run_benchmark(args.kind, args.sizes or (), args.repeats, args.seed,
                            settings.PRECISION)
    write_records(args.out, BenchRecord.CSV_HEADER, records)
    table = Table(title=f"Benchmark: {args.kind}")
    for column in ("T", "mean (ms)", "std (ms)"):
        table.add_column(column, justify="right")
    for r in records:
        table.add_row(str(r.T), f"{r.mean_ns / 1e6:.3f}", f"{r.std_ns / 1e6:.3f}")
    console.print(table)
    console.print(f"log-log slope: {records[0].slope_fit:.3f}")
    if args.check:
        check_slope(args.kind, records[0].slope_fit)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _run_config(args.config)
    repository = PhantomDatasetRepository(args.data, normalize=cfg.data.normalize)
    train_cases = repository.load_split("train", threads=settings.THREADS)
    val_cases = repository.load_split("val", threads=settings.THREADS)
    records = run_ablation(cfg, train_cases, val_cases, _csv_list(args.grid), args.steps)
    write_records(args.out, AblationRecord.CSV_HEADER, records)

    table = Table(title="Ablation")
    for column in AblationRecord.CSV_HEADER:
        table.add_column(column)
    for r in records:
        table.add_row(*(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.to_row()))
    console.print(table)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    cfg = _run_config(args.config)
    repository = PhantomDatasetRepository(args.data, normalize=cfg.data.normalize)
    train_cases = repository.load_split("train", threads=settings.THREADS)
    val_cases = repository.load_split("val", threads=settings.THREADS)
    seeds = args.seeds or [cfg.train.seed]
    records = run_sweep(cfg, args.key, _csv_list(args.values), seeds, train_cases, val_cases)
    write_records(args.out, SweepRecord.CSV_HEADER, records)

    table = Table(title=f"Sweep: {args.key}")
    for column in SweepRecord.CSV_HEADER:
        table.add_column(column)
    for r in records:
        table.add_row(*(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.to_row()))
    console.print(table)
    return EXIT_OK


def cmd_params(args: argparse.Namespace, settings: Settings) -> int:
    model_cfg = _run_config(args.config).model
    if args.full:
        model_cfg = full_scale_config(model_cfg)
    model = build_model(model_cfg)
    table = Table(title=f"Parameters: {model!r}")
    table.add_column("name")
    table.add_column("shape")
    table.add_column("count", justify="right")
    if not args.summary:
        for name, shape, count in model.param_ledger():
            table.add_row(name, "x".join(str(n) for n in shape), f"{count:,}")
    table.add_row("[bold]total[/bold]", "", f"[bold]{model.param_count():,}[/bold]")
    console.print(table)
    return EXIT_OK


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmamba", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Write a phantom dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--pgm", action="store_true", help="Also export mid-slice PGM images")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="Train a network")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Score a checkpoint")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="all")
    p.add_argument("--regions", action="store_true", help="Also score WT/TC/ET")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient suites")
    p.add_argument("--module", help=f"Comma-separated subset of {','.join(SUITES)}")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("bench", help="Runtime scaling benchmark")
    p.add_argument("--kind", choices=("scan", "attention"), required=True)
    p.add_argument("--sizes", type=_int_list)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", action="store_true", help="Fail when the slope is out of bounds")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("ablate", help="Component ablation grid")
    p.add_argument("--grid", default=",".join(COMPONENTS))
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--steps", type=int, help="Override train.steps for every run")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep", help="Hyper-parameter sweep")
    p.add_argument("--key", required=True, help="section.key, e.g. loss.lambda2")
    p.add_argument("--values", required=True)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("params", help="Parameter ledger")
    p.add_argument("--config", type=Path)
    p.add_argument("--full", action="store_true", help="Full-scale widths and patch")
    p.add_argument("--summary", action="store_true", help="Only print the total")
    p.set_defaults(handler=cmd_params)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    try:
        return int(args.handler(args, settings))
    except KMambaException as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e.message}")
        console.print(f"[red]error[/red]: {e.message}")
        return code
    except Exception:
        logger.exception(f"Unexpected error in '{args.command}'")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
