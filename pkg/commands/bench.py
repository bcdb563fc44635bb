"""bench: ADI recall, ablation table and timing report over a dataset"""
import argparse
import logging
from pathlib import Path

from commands.common import load_config, write_output
from exceptions import InputError
from models.enums import AblationVariant
from services.evaluation import ablation_run, ablation_table, timing_report
from services.report_export import EvaluationReportService, format_float
from storage.dataset_store import open_dataset_for

logger = logging.getLogger(__name__)

DEFAULT_REPORT_DIR = "reports"


def parse_variants(text: str):
    """Comma-separated variant names, order kept, duplicates dropped"""
    variants = []
    for name in (part.strip() for part in text.split(",")):
        if not name:
            continue
        try:
            variant = AblationVariant(name)
        except ValueError:
            raise InputError(f"unknown variant '{name}' (choose from {', '.join(v.value for v in AblationVariant)})")
        if variant not in variants:
            variants.append(variant)
    if not variants:
        raise InputError("no variants given")
    return variants


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("bench", parents=parents, help="evaluate pipeline variants on a dataset")
    parser.add_argument("--manifest", required=True, help="dataset manifest written by synth")
    parser.add_argument("--variants", default=AblationVariant.FULL.value,
                        help="comma-separated variants (default: full)")
    parser.add_argument("--epsilon", type=float, help="ADI threshold in meters (overrides the config)")
    parser.add_argument("--limit", type=int, help="evaluate only the first N scenes")
    parser.add_argument("--reports", default=DEFAULT_REPORT_DIR, help="directory for the CSV reports")
    parser.set_defaults(handler=cmd_bench)


def cmd_bench(args: argparse.Namespace) -> int:
    """Evaluate every variant, export its reports and print a recall line per variant"""
    config = load_config(args)
    if args.epsilon is not None:
        config = config.model_validate({**config.model_dump(),
                                        "evaluation": {**config.evaluation.model_dump(), "epsilon": args.epsilon}})
    variants = parse_variants(args.variants)

    store = open_dataset_for(args.manifest)
    try:
        entries = store.read_manifest(args.limit)
        if not entries:
            raise InputError(f"manifest {args.manifest} has no scenes")
        logger.info(f"Benchmarking {len(variants)} variant(s) on {len(entries)} scenes")
        results = ablation_run(entries, store, variants, config)
    finally:
        store.close()

    report_dir = Path(args.reports)
    lines = []
    for result in results:
        exporter = EvaluationReportService(report_dir / result.variant.value if len(results) > 1 else report_dir)
        exporter.export_run(result, timing_report(result))
        lines.append(f"{result.variant.value} recall {format_float(result.recall)} "
                     f"epsilon_m {format_float(result.epsilon)} scenes {len(result.scenes)}")
    if len(results) > 1:
        EvaluationReportService(report_dir).export_ablation(ablation_table(results))

    write_output("\n".join(lines) + "\n", args.out)
    return 0
