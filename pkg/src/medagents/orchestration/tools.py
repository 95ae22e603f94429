"""Native tools (EDA, feature importance, radiomics, tabular train/infer) as registry entries."""

from __future__ import annotations

import json
from typing import Any, Callable

from ..adapters import AdapterManifest, builtin_manifests, register_adapters
from ..radiomics.extract import FEATURE_CLASSES, ExtractionConfig, extract_batch
from ..radiomics.imageops import FILTERS
from ..tabular.bundle import load_bundle
from ..tabular.eda import DEFAULT_SAMPLE_CAP, run_eda
from ..tabular.importance import METHODS, run_feature_importance
from ..tabular.training import TrainOptions, infer_tabular, train_tabular
from ..toolspec import ParamSpec, ToolDescriptor, ToolRegistry, ToolResult

P = ParamSpec

EDA = "eda"
FEATURE_IMPORTANCE = "feature_importance"
RADIOMICS = "radiomics_extract"
CLASSIFIER_TRAIN = "tabular_classifier_train"
CLASSIFIER_INFER = "tabular_classifier_infer"
REGRESSOR_TRAIN = "tabular_regressor_train"
REGRESSOR_INFER = "tabular_regressor_infer"
NATIVE_TOOLS = (EDA, FEATURE_IMPORTANCE, RADIOMICS, CLASSIFIER_TRAIN, CLASSIFIER_INFER,
                REGRESSOR_TRAIN, REGRESSOR_INFER)

MAX_LISTED = 40


def _listing(paths: list[str], limit: int = MAX_LISTED) -> list[str]:
    lines = [f"- {p}" for p in paths[:limit]]
    if len(paths) > limit:
        lines.append(f"- ... and {len(paths) - limit} more")
    return lines


def arguments_line(args: dict) -> str:
    return "arguments: " + json.dumps(args, sort_keys=True, ensure_ascii=False)


def _summary(head: str, args: dict, details: list[str], warnings: list[str], artifacts: list[str]) -> str:
    lines = [head, arguments_line(args), *details]
    if warnings:
        lines.append("warnings:")
        lines += [f"- {w}" for w in warnings]
    lines.append(f"artifacts ({len(artifacts)}):")
    lines += _listing(artifacts)
    return "\n".join(lines)


# ---------------------------------------------------------------- EDA

EDA_DESCRIPTOR = ToolDescriptor(
    EDA,
    "Exploratory data analysis of a CSV table: per-column summary statistics, missing-value report, "
    "IQR outliers, correlation matrix and a markdown report, with optional histograms, box plots, "
    "bar/pie charts and a correlation heatmap.",
    (
        P("input_path", "path", True, description="CSV file to analyse"),
        P("output_dir", "path", True, description="directory for the report, CSVs and plots"),
        P("target_column", "string", description="optional class column for grouped statistics"),
        P("correlation_method", "enum", default="pearson", values=("pearson", "spearman")),
        P("sample_cap", "integer", default=DEFAULT_SAMPLE_CAP, description="rows sampled for analysis"),
        P("make_plots", "boolean", default=True, description="false skips every SVG plot"),
    ),
    "report.md, summary_stats.csv, missing_report.csv, outliers.csv, correlations.csv and SVG plots",
)


def eda_tool(args: dict, workspace: Any) -> ToolResult:
    rep = run_eda(args["input_path"], args["output_dir"], args["correlation_method"], args["sample_cap"],
                  args["make_plots"], args.get("target_column"))
    details = [f"rows {rep.n_rows}, columns {rep.n_cols}, outliers flagged {len(rep.outliers)}"]
    return ToolResult("ok", _summary(f"eda finished; outputs in {args['output_dir']}", args, details, rep.notes,
                                     rep.artifacts), list(rep.artifacts),
                      {"n_rows": float(rep.n_rows), "n_cols": float(rep.n_cols)})


# ---------------------------------------------------------------- feature importance

FI_DESCRIPTOR = ToolDescriptor(
    FEATURE_IMPORTANCE,
    "Rank the features of a CSV table by importance for a target column and export top-k feature "
    "subsets (each file holds the selected columns plus the target).",
    (
        P("input_path", "path", True),
        P("target", "string", True, description="target column name"),
        P("output_dir", "path", True),
        P("method", "enum", default="random_forest", values=METHODS),
        P("top_ks", "list", item_kind="integer", description="sizes of the exported top_<k>_features.csv files"),
        P("make_plots", "boolean", default=True),
        P("n_trees", "integer", default=200, description="forest size for the random_forest method"),
        P("seed", "integer", default=0),
    ),
    "importance_scores.csv, top_<k>_features.csv per requested k, optional plots",
)


def feature_importance_tool(args: dict, workspace: Any) -> ToolResult:
    res = run_feature_importance(args["input_path"], args["target"], args["output_dir"], args["method"],
                                 args.get("top_ks") or [], args["make_plots"], args["n_trees"], args["seed"])
    details = [f"task {res.task_type}, method {res.method}", "top features: " + ", ".join(res.ranking[:10])]
    return ToolResult("ok", _summary(f"feature_importance finished; outputs in {args['output_dir']}", args, details,
                                     res.warnings, res.exported_files), list(res.exported_files),
                      {"n_features": float(len(res.ranking))})


# ---------------------------------------------------------------- radiomics

RADIOMICS_DESCRIPTOR = ToolDescriptor(
    RADIOMICS,
    "Extract radiomic features (first order, shape, GLCM, GLRLM, GLSZM, GLDM, NGTDM) from NIfTI images "
    "and their masks, one CSV per mask label. A mask <case>.nii.gz pairs with image <case>.nii.gz, "
    "or with <case>_0000.nii.gz when no exact match exists.",
    (
        P("image_dir", "path", True),
        P("mask_dir", "path", True),
        P("output_dir", "path", True),
        P("filters", "list", default=["original"], item_kind="enum", values=FILTERS),
        P("feature_classes", "list", default=list(FEATURE_CLASSES), item_kind="enum", values=FEATURE_CLASSES),
        P("labels", "list", item_kind="integer", description="mask labels to process; default all"),
        P("bin_width", "float", default=25.0),
        P("resample_spacing", "float", description="isotropic resampling in mm; default none"),
        P("mode", "enum", default="3d", values=("3d", "2d_slicewise")),
        P("log_sigmas", "list", default=[1.0], item_kind="float"),
        P("workers", "integer", default=1),
        P("targets_csv", "path", description="optional subject-level targets to merge"),
        P("id_column", "string", default="subject_id"),
    ),
    "features_label_<L>.csv per label, extraction_params.json, report.md",
)


def radiomics_tool(args: dict, workspace: Any) -> ToolResult:
    cfg = ExtractionConfig(
        filters=tuple(args["filters"]), feature_classes=tuple(args["feature_classes"]),
        bin_width=args["bin_width"], resample_spacing=args.get("resample_spacing"), mode=args["mode"],
        labels=tuple(args["labels"]) if args.get("labels") else None, workers=args["workers"],
        log_sigmas=tuple(args["log_sigmas"]), targets_csv=args.get("targets_csv"), id_column=args["id_column"],
    )
    res = extract_batch(args["image_dir"], args["mask_dir"], args["output_dir"], cfg)
    if not res.successes:
        return ToolResult.failed(_summary("radiomics_extract failed for every case", args, [
            f"- {c}: {e}" for c, e in res.failures.items()], res.warnings, res.artifacts), artifacts=res.artifacts)
    details = [f"cases ok {len(res.successes)}, failed {len(res.failures)}, unpaired masks {len(res.unpaired)}"]
    details += [f"failed {c}: {e}" for c, e in res.failures.items()]
    return ToolResult("ok", _summary(f"radiomics_extract finished; outputs in {args['output_dir']}", args, details,
                                     res.warnings, res.artifacts), res.artifacts,
                      {"cases_ok": float(len(res.successes)), "cases_failed": float(len(res.failures))})


# ---------------------------------------------------------------- tabular train / infer

def _train_descriptor(name: str, task: str) -> ToolDescriptor:
    metric = "accuracy" if task == "classification" else "R2"
    return ToolDescriptor(
        name,
        f"Train and compare tabular {task} models with cross-validation (ranked by {metric}), tune the top 3 "
        f"by random search and blend them. Saves leaderboard.csv, tuned_results.csv, metrics.csv, plots and "
        f"model bundles under models/tuned_model_{{1,2,3}}/ and models/blended_model/.",
        (
            P("input_path", "path", True),
            P("target", "string", True),
            P("output_dir", "path", True),
            P("exclude", "list", item_kind="string", description="model names to leave out"),
            P("normalize", "boolean", default=True),
            P("power_transformation", "boolean", default=False, description="accepted but not supported"),
            P("oversample", "boolean", default=False, description="balance classes in training folds"),
            P("folds", "integer", default=10),
            P("tune_iters", "integer", default=20),
            P("seed", "integer", default=0),
            P("make_plots", "boolean", default=True),
        ),
        "leaderboard, tuned and blended metrics, .mbundle model files, plots",
    )


def _infer_descriptor(name: str, task: str) -> ToolDescriptor:
    return ToolDescriptor(
        name,
        f"Apply a saved tabular {task} model bundle (.mbundle file or its directory) to a CSV file. "
        "Writes predictions.csv and, when a ground-truth column is given, metrics.csv.",
        (
            P("model_path", "path", True),
            P("input_path", "path", True),
            P("output_dir", "path", True),
            P("gt_column", "string", description="column holding ground truth, if available"),
        ),
        "predictions.csv (+ metrics.csv)",
    )


def _train_tool(task: str) -> Callable[[dict, Any], ToolResult]:
    def execute(args: dict, workspace: Any) -> ToolResult:
        opt = TrainOptions(folds=args["folds"], exclude=tuple(args.get("exclude") or ()),
                           normalize=args["normalize"], oversample=args["oversample"], seed=args["seed"],
                           tune_iters=args["tune_iters"], power_transformation=args["power_transformation"],
                           make_plots=args["make_plots"])
        rep = train_tabular(task, args["input_path"], args["target"], args["output_dir"], opt)
        bundles = [a for a in rep.artifacts if a.endswith(".mbundle")]
        details = [rep.summary(), "model bundles:"] + [f"- {b}" for b in bundles]
        p = rep.primary_metric
        return ToolResult("ok", _summary(f"{task} training finished; outputs in {args['output_dir']}", args, details,
                                         rep.warnings, rep.artifacts), list(rep.artifacts),
                          {f"blended_{k}": float(v) for k, v in rep.blended.mean.items()} | {
                              "primary": float(rep.blended.mean[p])})
    return execute


def _infer_tool(task: str) -> Callable[[dict, Any], ToolResult]:
    def execute(args: dict, workspace: Any) -> ToolResult:
        kind = load_bundle(args["model_path"]).task_type
        if kind != task:
            return ToolResult.failed(f"model {args['model_path']} is a {kind} model; use the {kind} tool")
        res = infer_tabular(args["model_path"], args["input_path"], args["output_dir"], args.get("gt_column"))
        arts = [res.predictions_path] + ([res.metrics_path] if res.metrics_path else [])
        details = [f"predicted {res.n_rows} row(s)"]
        if res.metrics:
            details.append("metrics: " + ", ".join(f"{k}={v:.4f}" for k, v in res.metrics.items()))
        return ToolResult("ok", _summary(f"{task} inference finished; outputs in {args['output_dir']}", args, details,
                                         res.warnings, arts), arts, dict(res.metrics))
    return execute


NATIVE = (
    (EDA_DESCRIPTOR, eda_tool),
    (FI_DESCRIPTOR, feature_importance_tool),
    (RADIOMICS_DESCRIPTOR, radiomics_tool),
    (_train_descriptor(CLASSIFIER_TRAIN, "classification"), _train_tool("classification")),
    (_infer_descriptor(CLASSIFIER_INFER, "classification"), _infer_tool("classification")),
    (_train_descriptor(REGRESSOR_TRAIN, "regression"), _train_tool("regression")),
    (_infer_descriptor(REGRESSOR_INFER, "regression"), _infer_tool("regression")),
)


def register_native_tools(registry: ToolRegistry) -> ToolRegistry:
    for desc, fn in NATIVE:
        registry.register(desc, fn)
    return registry


def default_registry(manifests: list[AdapterManifest] | None = None) -> ToolRegistry:
    """The 12 concrete tools: 7 native plus one per adapter manifest (built-ins unless given)."""
    reg = register_native_tools(ToolRegistry())
    return register_adapters(reg, builtin_manifests() if manifests is None else manifests)

