"""
Report tables built from experiment results.

Tables are pandas DataFrames with canonical row order and no wall-clock
columns, so the same results always render to the same bytes.
"""

from collections.abc import Sequence
from typing import TYPE_CHECKING

import pandas as pd

from backend.src.data.manifest import MEASUREMENT_TYPES, OTHER, RELAYS, describe_column
from backend.src.selection.genetic import HISTORY_COLUMNS, GaResult

if TYPE_CHECKING:
    from backend.src.harness.experiments import GaStudy, ResultRow
    from backend.src.storage.results_store import ResultsStore

METRIC_COLUMNS = (
    "accuracy",
    "balanced_accuracy",
    "precision_pos",
    "recall_pos",
    "f1_pos",
    "f1_neg",
    "macro_f1",
    "roc_auc",
    "threshold",
)

GA_RUN_COLUMNS = (
    "n_selected",
    "accuracy",
    "balanced_accuracy",
    "f1_pos",
    "macro_f1",
    "roc_auc",
)


def results_table(rows: Sequence["ResultRow"]) -> pd.DataFrame:
    """One line per (model, feature set), as in the baseline and ablation tables."""
    records = []
    for row in sorted(rows, key=lambda r: (r.model, r.feature_set)):
        metrics = row.metrics
        record = {
            "model": row.model,
            "feature_set": row.feature_set,
            "n_features": row.n_features,
        }
        record.update({name: getattr(metrics, name) for name in METRIC_COLUMNS})
        record.update(
            tp=metrics.confusion.tp,
            fp=metrics.confusion.fp,
            tn=metrics.confusion.tn,
            fn=metrics.confusion.fn,
        )
        records.append(record)
    return pd.DataFrame.from_records(
        records,
        columns=[
            "model",
            "feature_set",
            "n_features",
            *METRIC_COLUMNS,
            "tp",
            "fp",
            "tn",
            "fn",
        ],
    )


def history_table(run: GaResult) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [
            (row.generation, row.best_fitness, row.mean_fitness, row.best_popcount)
            for row in run.history
        ],
        columns=list(HISTORY_COLUMNS),
    )


def _run_record(run: GaResult) -> dict:
    return {
        "n_selected": run.n_selected,
        "accuracy": run.test.accuracy,
        "balanced_accuracy": run.test.balanced_accuracy,
        "f1_pos": run.test.f1_pos,
        "macro_f1": run.test.macro_f1,
        "roc_auc": run.test.roc_auc,
    }


def ga_summary(runs: Sequence[GaResult]) -> pd.DataFrame:
    """Per-seed metrics with sample mean and standard deviation."""
    frame = pd.DataFrame.from_records(
        [_run_record(run) for run in sorted(runs, key=lambda r: r.seed)],
        columns=list(GA_RUN_COLUMNS),
    ).astype(float)
    mean = frame.mean()
    # A single run has no spread; report 0 instead of NaN
    std = frame.std(ddof=1).fillna(0.0)
    return pd.DataFrame({"mean": mean, "std": std})


def ga_runs_table(study: "GaStudy") -> pd.DataFrame:
    """The five-seed layout: one row per seed, then mean and std rows."""
    runs = sorted(study.runs, key=lambda r: r.seed)
    per_seed = pd.DataFrame.from_records(
        [
            {
                "seed": str(run.seed),
                **_run_record(run),
                "final_model": run.final_model,
            }
            for run in runs
        ],
        columns=["seed", *GA_RUN_COLUMNS, "final_model"],
    )
    if not runs:
        return per_seed
    summary = ga_summary(runs)
    final_model = runs[0].final_model
    aggregate = pd.DataFrame.from_records(
        [
            {"seed": label, **summary[label].to_dict(), "final_model": final_model}
            for label in ("mean", "std")
        ],
        columns=per_seed.columns,
    )
    table = pd.concat([per_seed, aggregate], ignore_index=True)
    return table.astype({"n_selected": float})


def comparison_table(study: "GaStudy") -> pd.DataFrame:
    """Full-feature classifier next to the GA mean on the same feature set."""
    columns = [
        "configuration",
        "n_features",
        "accuracy",
        "balanced_accuracy",
        "f1_pos",
        "macro_f1",
        "roc_auc",
    ]
    records = []
    if study.full_feature is not None:
        full = study.full_feature.metrics
        records.append(
            {
                "configuration": f"full ({study.feature_set})",
                "n_features": float(study.n_features),
                "accuracy": full.accuracy,
                "balanced_accuracy": full.balanced_accuracy,
                "f1_pos": full.f1_pos,
                "macro_f1": full.macro_f1,
                "roc_auc": full.roc_auc,
            }
        )
    if study.runs:
        mean = ga_summary(study.runs)["mean"]
        records.append(
            {
                "configuration": f"ga_mean ({len(study.runs)} seeds)",
                "n_features": mean["n_selected"],
                **{name: mean[name] for name in columns[2:]},
            }
        )
    return pd.DataFrame.from_records(records, columns=columns)


def selected_summary(study: "GaStudy") -> pd.DataFrame:
    """
    What the GA kept, broken down by relay, by measurement type and by feature.

    One column per seed holds the count of selected columns in each relay or
    measurement-type row and 0/1 in each feature row; ``mean`` averages over
    seeds, so for a feature it is its selection frequency. Features never
    selected are left out; the rest are ordered by frequency, then name.
    """
    runs = sorted(study.runs, key=lambda r: r.seed)
    seed_columns = [f"seed_{run.seed}" for run in runs]
    chosen = [set(run.selected_features) for run in runs]

    relay_counts = {name: [0] * len(runs) for name in (*RELAYS, OTHER)}
    type_counts = {name: [0] * len(runs) for name in MEASUREMENT_TYPES}
    for i, names in enumerate(chosen):
        for name in names:
            relay, kind = describe_column(name)
            relay_counts[relay if relay in relay_counts else OTHER][i] += 1
            type_counts[kind][i] += 1
    features = sorted(
        set().union(*chosen),
        key=lambda name: (-sum(name in names for names in chosen), name),
    )

    records = []
    for breakdown, rows in (
        ("relay", relay_counts.items()),
        ("measurement", type_counts.items()),
        ("feature", ((f, [int(f in names) for names in chosen]) for f in features)),
    ):
        for name, counts in rows:
            mean = sum(counts) / len(counts) if counts else 0.0
            records.append(
                {
                    "breakdown": breakdown,
                    "name": name,
                    **dict(zip(seed_columns, counts)),
                    "mean": mean,
                }
            )
    return pd.DataFrame.from_records(
        records, columns=["breakdown", "name", *seed_columns, "mean"]
    )


def write_ga_run(store: "ResultsStore", run: GaResult):
    """Per-seed outputs: the generation history and the selected feature names."""
    store.write_table(f"ga_history_{run.seed}", history_table(run))
    store.write_lines(f"selected_features_{run.seed}.txt", list(run.selected_features))
