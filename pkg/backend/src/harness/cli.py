#!/usr/bin/env python3
"""
Command-line entry point.

Verbs:
    baselines  every configured model on every configured feature set
    ablation   tree models on the three nested feature sets
    ga         multi-seed GA feature selection plus the full-vs-GA comparison
    synth      write the configured synthetic dataset (and its manifest) to CSV
    report     re-render every table from results.json

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 undefined metric.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from typing import Optional

from backend.src.data.dataset import write_csv
from backend.src.data.manifest import PMU_MEASUREMENT, FeatureManifest, write_manifest
from backend.src.data.synthetic import generate_synthetic
from backend.src.errors import GridAnomalyError
from backend.src.harness import reports
from backend.src.harness.config import ExperimentConfig, load_config
from backend.src.harness.experiments import (
    GaStudy,
    ResultRow,
    run_ablation,
    run_baselines,
    run_ga_study,
)
from backend.src.storage.results_store import ResultsStore

logger = logging.getLogger(__name__)

VERBS = ("baselines", "ablation", "ga", "synth", "report")

SYNTHETIC_CSV = "synthetic.csv"
SYNTHETIC_MANIFEST = "synthetic_manifest.env"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridga",
        description="Smart-grid attack detection with GA feature selection",
    )
    parser.add_argument("verb", choices=VERBS, help="Experiment to run")
    parser.add_argument("--config", help="Flat KEY=VALUE config file")
    parser.add_argument("--data-dir", help="Directory holding the event CSV files")
    parser.add_argument(
        "--feature-set",
        help="Feature set: all, pmu_only or pmu_without_status",
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="Seed for the split, the models and the synthetic data",
    )
    parser.add_argument("--out", help="Output directory (default: results)")
    parser.add_argument("--models", help="Comma-separated model roster")
    parser.add_argument("--ga-seeds", help="Comma-separated GA seeds")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log debug detail"
    )
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict[str, Optional[str]]:
    """Map CLI flags onto config keys (unset flags map to None)."""
    seed = None if args.seed is None else str(args.seed)
    overrides = {
        "DATA_DIR": args.data_dir,
        "OUT_DIR": args.out,
        "MODELS": args.models,
        "GA_SEEDS": args.ga_seeds,
        "SPLIT_SEED": seed,
        "MODEL_SEED": seed,
        "SYNTH_SEED": seed,
    }
    if args.feature_set:
        key = "GA_FEATURE_SET" if args.verb == "ga" else "FEATURE_SETS"
        overrides[key] = args.feature_set
    return overrides


def configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _print_rows(rows: Sequence[ResultRow]):
    for row in rows:
        m = row.metrics
        print(
            f"   {row.model:<14} {row.feature_set:<19} {row.n_features:>4} features  "
            f"macro-F1 {m.macro_f1:.4f}  ROC-AUC {m.roc_auc:.4f}"
        )


def write_results(store: ResultsStore, name: str, rows: Sequence[ResultRow]):
    store.write_table(name, reports.results_table(rows))


def write_ga_study(store: ResultsStore, study: GaStudy):
    store.write_table("ga_runs", reports.ga_runs_table(study))
    store.write_table("comparison", reports.comparison_table(study))
    store.write_table("selected_summary", reports.selected_summary(study))
    for run in study.runs:
        reports.write_ga_run(store, run)


def cmd_table(cfg: ExperimentConfig, store: ResultsStore, verb: str):
    runner = run_baselines if verb == "baselines" else run_ablation
    print(f"🧪 Running {verb}...")
    rows = runner(cfg)
    store.save_section(verb, {"rows": [r.to_dict() for r in rows]}, cfg.to_dict())
    write_results(store, verb, rows)
    _print_rows(rows)
    print(f"✅ {verb.capitalize()} written to {store.out_dir / (verb + '.csv')}")


def cmd_ga(cfg: ExperimentConfig, store: ResultsStore):
    print(
        f"🧬 Running GA on {cfg.ga_feature_set} "
        f"(P={cfg.ga.population_size}, G={cfg.ga.generations}, "
        f"seeds {', '.join(map(str, cfg.ga_seeds))})"
    )
    study = run_ga_study(cfg, store=store)
    store.save_section("ga", study.to_dict(), cfg.to_dict())
    write_ga_study(store, study)

    for run in study.runs:
        print(
            f"   seed {run.seed}: {run.n_selected}/{study.n_features} features, "
            f"macro-F1 {run.test.macro_f1:.4f}, ROC-AUC {run.test.roc_auc:.4f}"
        )
    summary = reports.ga_summary(study.runs)["mean"]
    print(
        f"📊 Mean: {summary['n_selected']:.1f} features, "
        f"macro-F1 {summary['macro_f1']:.4f}, ROC-AUC {summary['roc_auc']:.4f}"
    )
    if study.full_feature is not None:
        print(
            f"   Full {study.feature_set}: macro-F1 "
            f"{study.full_feature.metrics.macro_f1:.4f}"
        )
    print(f"✅ GA results written to {store.out_dir}")


def cmd_synth(cfg: ExperimentConfig, store: ResultsStore):
    ds = generate_synthetic(cfg.synthetic)
    csv_path = write_csv(ds, store.out_dir / SYNTHETIC_CSV, cfg.label_column)
    manifest = FeatureManifest.uniform(ds.feature_names, PMU_MEASUREMENT)
    manifest_path = write_manifest(manifest, store.out_dir / SYNTHETIC_MANIFEST)
    counts = ds.class_counts()
    print(
        f"✅ Wrote {ds.n_samples} rows x {ds.n_features} features "
        f"({counts[1]} attack / {counts[0]} natural) to {csv_path}"
    )
    print(f"   Manifest: {manifest_path}")


def cmd_report(store: ResultsStore):
    document = store.load()
    if not document:
        print(f"⚠️  No {store.results_path} found; run an experiment first")
        return
    rendered = []
    for verb in ("baselines", "ablation"):
        if verb in document:
            rows = [ResultRow.from_dict(r) for r in document[verb]["rows"]]
            write_results(store, verb, rows)
            rendered.append(verb)
    if "ga" in document:
        study = GaStudy.from_dict(document["ga"])
        write_ga_study(store, study)
        rendered.append("ga" if study.complete else "ga (incomplete)")
    print(f"✅ Re-rendered {', '.join(rendered) or 'nothing'} in {store.out_dir}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
        store = ResultsStore(cfg.out_dir)
        if args.verb in ("baselines", "ablation"):
            cmd_table(cfg, store, args.verb)
        elif args.verb == "ga":
            cmd_ga(cfg, store)
        elif args.verb == "synth":
            cmd_synth(cfg, store)
        else:
            cmd_report(store)
    except GridAnomalyError as e:
        print(f"❌ ERROR: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        print()
        print("🛑 Stopped")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
