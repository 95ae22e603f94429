"""Offline evaluation fixtures.

`build_fixtures(root)` renders the 53-prompt corpus analog onto small synthetic datasets (tabular CSVs,
NIfTI volumes, image folders), pretrained model bundles and the mock adapter manifests, and writes two
scripted backend profiles: one that routes and calls tools correctly, and one that never emits a
valid action.

Every prompt has a plan (delegations, tool calls, answers). The correct script is compiled from the
plans: each rule is keyed on text that only one step of one prompt can produce, namely the prompt
itself, a delegation's task text, the `arguments:` line of a tool observation, or a specialist's
answer as echoed back to the master.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..adapters import load_manifests, mock_manifests, write_manifests
from ..adapters.mock import sphere_mask
from ..llm import BackendProfile, ScriptRule, scripted_backend
from ..radiomics.nifti import Volume, write_nifti
from ..tabular.training import TrainOptions, train_tabular
from ..toolspec import ToolRegistry, validate_invocation
from .evaluation import CorpusEntry
from .tools import arguments_line, default_registry

QUICK = {"folds": 3, "tune_iters": 3}  # desk-scale CV settings named in every training prompt
BROKEN_REPLY = "I will look at the files and get back to you with the analysis."
EMPTY_REPLY = "No task was given, so no specialist was deployed."


@dataclass
class Call:
    tool: str
    args: dict


@dataclass
class Delegation:
    agent: str
    subtask: str
    calls: list[Call]
    answer: str


@dataclass
class PromptPlan:
    id: str
    category: str
    prompt: str
    delegations: list[Delegation]
    required_artifacts: list[str]
    final_answer: str = ""

    def entry(self) -> CorpusEntry:
        return CorpusEntry(self.id, self.category, self.prompt, tuple(d.agent for d in self.delegations),
                           tuple(self.required_artifacts))


@dataclass
class FixtureSet:
    root: Path
    corpus_path: Path
    correct_profile_path: Path
    broken_profile_path: Path
    manifest_dir: Path
    plans: list[PromptPlan] = field(default_factory=list)

    def registry(self) -> ToolRegistry:
        return default_registry(load_manifests(self.manifest_dir))

    def plan(self, prompt_id: str) -> PromptPlan:
        return next(p for p in self.plans if p.id == prompt_id)

    def correct_profile(self) -> BackendProfile:
        return BackendProfile.load(self.correct_profile_path)

    def broken_profile(self) -> BackendProfile:
        return BackendProfile.load(self.broken_profile_path)


# ---------------------------------------------------------------- tabular data

Col = tuple  # (name, mean, sd, decimals) or (name, [choices])


@dataclass(frozen=True)
class TabularSpec:
    file: str
    target: str
    cols: tuple[Col, ...]
    weights: dict[str, float]
    labels: tuple[Any, ...] | None = None  # None: regression
    n: int = 120
    noise: float = 0.3
    intercept: float = 0.0
    scale: float = 1.0
    missing: tuple[str, ...] = ()


BREAST = TabularSpec(
    "breast_cancer_wisconsin_diagnosis_dataset.csv", "diagnosis",
    (("radius_mean", 14.1, 3.5, 3), ("texture_mean", 19.3, 4.3, 2), ("perimeter_mean", 92.0, 24.3, 2),
     ("area_mean", 655.0, 352.0, 1), ("smoothness_mean", 0.096, 0.014, 5), ("compactness_mean", 0.104, 0.053, 5),
     ("concavity_mean", 0.089, 0.080, 5), ("concave_points_mean", 0.049, 0.039, 5),
     ("symmetry_mean", 0.181, 0.027, 4), ("fractal_dimension_mean", 0.063, 0.007, 5),
     ("radius_se", 0.405, 0.277, 4), ("texture_se", 1.217, 0.552, 4)),
    {"radius_mean": 1.5, "concave_points_mean": 1.5, "area_mean": 1.0, "texture_mean": 0.5},
    labels=("B", "M"), n=150)
DIABETES = TabularSpec(
    "predict_diabetes.csv", "Outcome",
    (("Pregnancies", 3.8, 3.3, 0), ("Glucose", 121.0, 32.0, 0), ("BloodPressure", 69.0, 19.0, 0),
     ("SkinThickness", 20.5, 16.0, 0), ("Insulin", 80.0, 115.0, 0), ("BMI", 32.0, 7.9, 1),
     ("DiabetesPedigreeFunction", 0.47, 0.33, 3), ("Age", 33.0, 11.7, 0)),
    {"Glucose": 1.6, "BMI": 0.8, "Age": 0.5}, labels=(0, 1))
HEART_DISEASE = TabularSpec(
    "heart_disease_classification.csv", "target",
    (("age", 54.0, 9.0, 0), ("sex", [0, 1]), ("cp", [0, 1, 2, 3]), ("trestbps", 131.0, 17.5, 0),
     ("chol", 246.0, 51.0, 0), ("fbs", [0, 1]), ("restecg", [0, 1, 2]), ("thalach", 149.0, 22.9, 0),
     ("exang", [0, 1]), ("oldpeak", 1.04, 1.16, 1), ("slope", [0, 1, 2]), ("ca", [0, 1, 2, 3]),
     ("thal", [1, 2, 3])),
    {"thalach": 1.4, "oldpeak": -1.2, "age": -0.5}, labels=(0, 1))
HEART_FAILURE = TabularSpec(
    "heart_failure_clinical_records_dataset.csv", "DEATH_EVENT",
    (("age", 60.8, 11.9, 0), ("anaemia", [0, 1]), ("creatinine_phosphokinase", 582.0, 970.0, 0),
     ("diabetes", [0, 1]), ("ejection_fraction", 38.0, 11.8, 0), ("high_blood_pressure", [0, 1]),
     ("platelets", 263358.0, 97804.0, 0), ("serum_creatinine", 1.39, 1.03, 2), ("serum_sodium", 136.6, 4.4, 0),
     ("sex", [0, 1]), ("smoking", [0, 1]), ("time", 130.0, 77.6, 0)),
    {"time": -1.6, "ejection_fraction": -1.0, "serum_creatinine": 0.9}, labels=(0, 1))
LIFE = TabularSpec(
    "Life-Expectancy-Data.csv", "Life_expectancy",
    (("Country", ["Albania", "Brazil", "Chad", "Denmark", "Egypt", "Fiji", "Ghana", "Haiti", "India", "Japan"]),
     ("Status", ["Developed", "Developing"]), ("Year", 2007.5, 4.6, 0), ("Adult_Mortality", 160.0, 120.0, 0),
     ("Infant_Deaths", 30.0, 20.0, 0), ("Alcohol", 4.6, 4.0, 2), ("Hepatitis_B", 80.0, 25.0, 0),
     ("BMI", 38.0, 20.0, 1), ("Polio", 82.0, 23.0, 0), ("GDP", 7480.0, 14270.0, 1), ("Schooling", 12.0, 3.3, 1)),
    {"Adult_Mortality": -3.0, "Schooling": 2.5, "Infant_Deaths": -1.5, "BMI": 1.0},
    labels=None, n=150, noise=0.05, intercept=69.0, scale=1.0, missing=("Alcohol", "GDP"))
MAMAMIA = TabularSpec(
    "dataset_mamamia.csv", "pcr",
    tuple((f"{f}_{c}_{n}", 0.0, 1.0, 4) for f, c, n in [
        (flt, cls, feat) for flt in ("original", "exponential")
        for cls, feats in (("firstorder", ("Mean", "Energy", "Entropy", "Skewness", "Kurtosis")),
                           ("glcm", ("Contrast", "Correlation", "JointEnergy", "Idm", "Imc1")),
                           ("glrlm", ("RunEntropy", "ShortRunEmphasis", "LongRunEmphasis", "RunPercentage")),
                           ("ngtdm", ("Coarseness", "Busyness")),
                           ("shape", ("Sphericity", "Elongation", "Flatness", "VoxelVolume")))
        for feat in feats]),
    {"original_glcm_Contrast": 0.9, "original_firstorder_Entropy": 0.7, "exponential_shape_Sphericity": 0.5},
    labels=(0, 1), n=90, noise=1.0)


def _gen(spec: TabularSpec, n: int, seed: int, with_target: bool = True) -> tuple[list[str], list[list[str]]]:
    rng = np.random.default_rng(seed)
    score = np.full(n, spec.intercept, dtype=float)
    cols: dict[str, list[str]] = {}
    for c in spec.cols:
        name = c[0]
        if isinstance(c[1], list):
            idx = rng.integers(0, len(c[1]), n)
            cols[name] = [str(c[1][i]) for i in idx]
            continue
        z = rng.normal(size=n)
        score += spec.weights.get(name, 0.0) * z
        v = c[1] + c[2] * z
        cols[name] = [f"{x:.{c[3]}f}" if c[3] else str(int(round(x))) for x in v]
    for name in spec.missing:
        for i in rng.choice(n, size=max(1, n // 30), replace=False):
            cols[name][i] = ""
    score += spec.noise * rng.normal(size=n)
    header = [c[0] for c in spec.cols]
    if with_target:
        if spec.labels is None:
            cols[spec.target] = [f"{x:.2f}" for x in score * spec.scale]
        else:
            cols[spec.target] = [str(spec.labels[int(s > spec.intercept)]) for s in score]
        header.append(spec.target)
    return header, [list(r) for r in zip(*(cols[h] for h in header))]


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def write_dataset(spec: TabularSpec, path: Path, seed: int, n: int | None = None, with_target: bool = True) -> str:
    header, rows = _gen(spec, n or spec.n, seed, with_target)
    return _write_csv(path, header, rows)


# ---------------------------------------------------------------- images

def _volume(path: Path, shape: tuple[int, int, int], seed: int, spacing=(1.0, 1.0, 2.0), base=-40.0,
            organ=70.0) -> str:
    rng = np.random.default_rng(seed)
    inside = sphere_mask(shape) > 0
    data = rng.normal(base, 25.0, shape)
    data[inside] = rng.normal(organ, 20.0, int(inside.sum()))
    write_nifti(Volume(np.round(data).astype(np.int16), spacing), path)
    return str(path)


def _mask(path: Path, shape: tuple[int, int, int], labels: int = 1, spacing=(1.0, 1.0, 2.0)) -> str:
    write_nifti(Volume(sphere_mask(shape, labels), spacing, kind="mask"), path)
    return str(path)


def _image_folder(root: Path, n_classes: int, per_class: int = 2, splits=("train", "val", "test")) -> None:
    for split in splits:
        for c in range(n_classes):
            d = root / split / str(c)
            d.mkdir(parents=True, exist_ok=True)
            for i in range(per_class):
                (d / f"img_{i}.png").write_bytes(b"\x89PNG\r\n\x1a\n" + bytes([c, i]))


def _gt_csv(test_dir: Path, path: Path) -> str:
    rows = sorted([p.relative_to(test_dir).as_posix(), p.parent.name] for p in test_dir.rglob("*.png"))
    return _write_csv(path, ["filename", "label"], rows)


def _checkpoint(path: Path, arch: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"MOCK-CHECKPOINT\n" + json.dumps({"architecture": arch}).encode() + b"\n")
    return str(path)


# ---------------------------------------------------------------- plan helpers

def _act(tool: str, args: dict, thought: str) -> str:
    return json.dumps({"thought": thought, "action": {"tool": tool, "arguments": args}}, ensure_ascii=False)


def _final(text: str, thought: str = "Everything requested is done.") -> str:
    return json.dumps({"thought": thought, "final_answer": text}, ensure_ascii=False)


def compile_rules(plans: Sequence[PromptPlan], registry: ToolRegistry) -> list[ScriptRule]:
    rules: list[ScriptRule] = []
    for plan in plans:
        key = plan.prompt
        for d in plan.delegations:
            rules.append(ScriptRule(_act(d.agent, {"task": d.subtask}, f"This step needs {d.agent}."), key))
            key = d.subtask
            for c in d.calls:
                rules.append(ScriptRule(_act(c.tool, c.args, f"Calling {c.tool}."), key))
                key = arguments_line(validate_invocation(registry.resolve(c.tool), c.args))
            rules.append(ScriptRule(_final(d.answer, "The tool output covers the request."), key))
            key = "answer: " + d.answer
        rules.append(ScriptRule(_final(plan.final_answer or "All requested steps are complete."), key))
    keys = [r.substring for r in rules]
    dupes = sorted({k for k in keys if keys.count(k) > 1})
    if dupes:
        raise ValueError(f"script keys are not unique: {dupes[:3]}")
    rules.append(ScriptRule(_final(EMPTY_REPLY, "The task text is empty."), "(empty task)", repeat=10**6))
    return rules


def broken_profile() -> BackendProfile:
    return scripted_backend([ScriptRule(BROKEN_REPLY, None, repeat=10**9)], model_id="scripted-broken",
                            name="scripted-broken")


# ---------------------------------------------------------------- the corpus

class _Paths:
    def __init__(self, root: Path):
        self.root = root
        self.data = root / "data"
        self.out = root / "outputs"

    def o(self, pid: str, *parts: str) -> str:
        return os.path.normpath(str(self.out.joinpath(pid, *parts)))

    def d(self, *parts: str) -> str:
        return os.path.normpath(str(self.data.joinpath(*parts)))


def _eda(p: _Paths, pid: str, csv_path: str, plots: bool = True, name: str = "") -> PromptPlan:
    out = p.o(pid)
    verb = "Perform comprehensive exploratory data analysis" if plots else "Perform exploratory data analysis"
    prompt = f'{verb} of the table "{csv_path}".\nWrite the results to "{out}".'
    args = {"input_path": csv_path, "output_dir": out, "make_plots": plots}
    return PromptPlan(pid, "EDA", prompt, [Delegation(
        "eda_agent", f"Run exploratory data analysis on {csv_path} and save every result in {out}.",
        [Call("eda", args)], f"EDA of {name or csv_path} finished; report and tables are in {out}.")],
        [f"{out}/report.md", f"{out}/summary_stats.csv", f"{out}/correlations.csv"],
        f"The EDA agent analysed {csv_path}; results are in {out}.")


def _fia(p: _Paths, pid: str, csv_path: str, target: str, ks: list[int], plots: bool = False) -> PromptPlan:
    out = p.o(pid)
    ks_text = ", ".join(map(str, ks[:-1])) + (" and " if len(ks) > 1 else "") + str(ks[-1])
    prompt = (f'Run a feature importance analysis on "{csv_path}" with target column "{target}".\n'
              f'Export CSV files holding the top {ks_text} features to "{out}".'
              + (" Create plots." if plots else ""))
    args = {"input_path": csv_path, "target": target, "output_dir": out, "top_ks": ks, "make_plots": plots}
    return PromptPlan(pid, "Feature Importance", prompt, [Delegation(
        "feature_importance_agent",
        f"Rank the features of {csv_path} for target {target} and export top {ks_text} feature files to {out}.",
        [Call("feature_importance", args)], f"Feature ranking for {target} written to {out}.")],
        [f"{out}/importance_scores.csv"] + [f"{out}/top_{k}_features.csv" for k in ks],
        f"Feature importance files are in {out}.")


def _train(p: _Paths, pid: str, csv_path: str, target: str, task: str, exclude: list[str],
           extra: dict | None = None, extra_text: str = "") -> PromptPlan:
    out = p.o(pid)
    kind = "classification" if task == "classification" else "regression"
    agent = "classifier_agent" if task == "classification" else "regressor_agent"
    tool = "tabular_classifier_train" if task == "classification" else "tabular_regressor_train"
    excl = (" Leave out " + ", ".join(exclude) + ".") if exclude else ""
    prompt = (f'Train a {kind} model on "{csv_path}". Target column: "{target}".{excl}{extra_text} '
              f'Use {QUICK["folds"]} folds and {QUICK["tune_iters"]} tuning iterations.\n'
              f'Save everything in "{out}".')
    args = {"input_path": csv_path, "target": target, "output_dir": out, "exclude": exclude,
            "make_plots": False, **QUICK, **(extra or {})}
    return PromptPlan(pid, "Classification (Training)" if task == "classification" else "Regression (Training)",
                      prompt, [Delegation(agent, f"Train {kind} models on {csv_path} for target {target}, "
                                                 f"excluding {exclude or 'nothing'}, with {QUICK['folds']} folds "
                                                 f"and {QUICK['tune_iters']} tuning iterations{extra_text.lower()}; "
                                                 f"save outputs in {out}.",
                                          [Call(tool, args)], f"{kind.capitalize()} models trained; outputs in {out}.")],
                      [f"{out}/leaderboard.csv", f"{out}/metrics.csv",
                       f"{out}/models/blended_model/blended_model.mbundle"],
                      f"Training finished; leaderboard and model bundles are in {out}.")


def _infer(p: _Paths, pid: str, model: str, data: str, gt: str | None, task: str) -> PromptPlan:
    out = p.o(pid)
    kind = "classification" if task == "classification" else "regression"
    agent = "classifier_agent" if task == "classification" else "regressor_agent"
    tool = "tabular_classifier_infer" if task == "classification" else "tabular_regressor_infer"
    prompt = (f'Apply the {kind} model "{model}" to the predictors in "{data}".'
              + (f' Ground truth is in the column "{gt}".' if gt else "") + f'\nOutput directory: "{out}".')
    args = {"model_path": model, "input_path": data, "output_dir": out}
    arts = [f"{out}/predictions.csv"]
    if gt:
        args["gt_column"] = gt
        arts.append(f"{out}/metrics.csv")
    sub = f"Predict {data} with the model {model}" + (f", ground truth column {gt}" if gt else "") + f"; save to {out}."
    return PromptPlan(pid, "Classification (Inference)" if task == "classification" else "Regression (Inference)",
                      prompt, [Delegation(agent, sub, [Call(tool, args)], f"Predictions written to {out}.")],
                      arts, f"Inference finished; see {out}.")


def _rfe(p: _Paths, pid: str, images: str, masks: str, classes: list[str] | None, filters: list[str],
         note: str = "", ask_filters: Sequence[str] = ()) -> PromptPlan:
    out = p.o(pid)
    what = "Extract " + " and ".join(classes) + " radiomic features" if classes else \
        "Run a comprehensive radiomic feature extraction"
    ask = list(ask_filters) or filters
    prompt = (f'{what} for the scans in "{images}".\nThe masks are in "{masks}".\n'
              + (f"Apply these filters: {', '.join(ask)}.\n" if ask != ["original"] else "")
              + f'Store the results in "{out}".')
    args: dict = {"image_dir": images, "mask_dir": masks, "output_dir": out, "filters": filters}
    if classes:
        args["feature_classes"] = classes
    sub = (f"Extract radiomic features ({', '.join(classes) if classes else 'all classes'}; filters "
           f"{', '.join(filters)}) from images in {images} with masks in {masks}; save to {out}.{note}")
    return PromptPlan(pid, "Radiomics", prompt, [Delegation(
        "radiomics_agent", sub, [Call("radiomics_extract", args)],
        f"Radiomic features saved in {out}.{note}")], [f"{out}/features_label_1.csv", f"{out}/report.md"],
        f"Radiomic features are in {out}.{note}")


def _totalseg(p: _Paths, pid: str, ct: str, task: str, rois: list[str] | None) -> PromptPlan:
    out = p.o(pid)
    target = ("only the " + ", ".join(rois)) if rois else "every available structure"
    modality = "MR" if task == "total_mr" else "CT"
    prompt = (f'Run TotalSegmentator ({task} task) to segment {target} in the {modality} scan "{ct}".\n'
              f'Save the mask in "{out}".')
    args: dict = {"input_path": ct, "output_dir": out, "task": task}
    if rois:
        args["roi_subset"] = rois
    return PromptPlan(pid, "TotalSegmentator", prompt, [Delegation(
        "totalsegmentator_agent", f"Segment {target} in {ct} with the {task} task; write masks to {out}.",
        [Call("totalseg", args)], f"Segmentation masks written to {out}.")], [f"{out}/*.nii.gz"],
        f"Masks are in {out}.")


def _nnunet_train(p: _Paths, pid: str, dataset: str) -> PromptPlan:
    prompt = f'Train a 3d full resolution nnU-Net segmentation model on the dataset in "{dataset}", fold all.'
    args = {"dataset_dir": dataset, "configuration": "3d_fullres", "fold": "all"}
    return PromptPlan(pid, "nnUNet", prompt, [Delegation(
        "nnunet_agent", f"Train nnU-Net 3d_fullres, fold all, on {dataset}.", [Call("nnunet_train", args)],
        f"nnU-Net training on {dataset} finished.")],
        ["nnunet_results/3d_fullres_fold_all/checkpoint_final.pth"], f"Training on {dataset} is complete.")


def _nnunet_infer(p: _Paths, pid: str, dataset_id: str, scans: str) -> PromptPlan:
    out = p.o(pid)
    prompt = (f"Segment the scans in {scans} with the nnU-Net dataset {dataset_id} 3d full resolution "
              f"fold all model.\nOutput folder: {out}")
    args = {"dataset_id": dataset_id, "configuration": "3d_fullres", "fold": "all", "input_dir": scans,
            "output_dir": out}
    return PromptPlan(pid, "nnUNet", prompt, [Delegation(
        "nnunet_agent", f"Run nnU-Net inference (dataset {dataset_id}, 3d_fullres, fold all) on {scans}; "
                        f"write masks to {out}.", [Call("nnunet_infer", args)], f"nnU-Net masks written to {out}.")],
        [f"{out}/*.nii.gz"], f"Masks are in {out}.")


def _img_train(p: _Paths, pid: str, data: str, arch: str, classes: int, text: str, extra: dict) -> PromptPlan:
    out = p.o(pid)
    prompt = f'Train a {arch} image classification model on "{data}" (train, val and test splits). ' \
             f'There are {classes} classes. {text}\nOutput folder: "{out}".'
    args = {"data_dir": data, "architecture": arch, "num_classes": classes, "output_dir": out, **extra}
    return PromptPlan(pid, "Image Classification (Training)", prompt, [Delegation(
        "image_classifier_agent", f"Train {arch} with {classes} classes on {data} ({text.strip()}); "
                                  f"save to {out}.", [Call("image_cls_train", args)],
        f"{arch} training finished; checkpoint and metrics in {out}.")],
        [f"{out}/best_model.pt", f"{out}/metrics.json"], f"The trained {arch} model is in {out}.")


def _img_infer(p: _Paths, pid: str, model: str, images: str, classes: int, gt: str | None) -> PromptPlan:
    out = p.o(pid)
    prompt = (f'Classify the images in "{images}" with the model "{model}". Number of classes: {classes}.'
              + (f' Ground truth labels: "{gt}".' if gt else "") + f'\nSave the output in "{out}".')
    args: dict = {"model_path": model, "input_dir": images, "num_classes": classes, "output_dir": out}
    if gt:
        args["gt_csv"] = gt
    return PromptPlan(pid, "Image Classification (Inference)", prompt, [Delegation(
        "image_classifier_agent", f"Classify {images} with {model} ({classes} classes"
                                  + (f", ground truth {gt}" if gt else "") + f"); save to {out}.",
        [Call("image_cls_infer", args)], f"Image predictions written to {out}.")],
        [f"{out}/predictions.csv"] + ([f"{out}/metrics.json"] if gt else []), f"Predictions are in {out}.")


def _train_tabular_models(spec: TabularSpec, csv_path: str, out: Path, task: str) -> None:
    train_tabular(task, csv_path, spec.target, out, TrainOptions(folds=3, tune_iters=2, make_plots=False))


# ---------------------------------------------------------------- build

def build_fixtures(root: str | os.PathLike) -> FixtureSet:
    root = Path(root).resolve()
    p = _Paths(root)
    tab = p.data / "tabular"
    files = {s.file: write_dataset(s, tab / s.file, seed=i + 1) for i, s in enumerate(
        (BREAST, DIABETES, HEART_DISEASE, HEART_FAILURE, LIFE))}
    cohort = {}
    for name, spec, task, seed in (("breast_cancer_wisconsin", BREAST, "classification", 11),
                                   ("predict_diabetes", DIABETES, "classification", 12),
                                   ("heart_disease", HEART_DISEASE, "classification", 13),
                                   ("heart_failure", HEART_FAILURE, "classification", 14),
                                   ("life_expectancy", LIFE, "regression", 15)):
        d = tab / name
        _train_tabular_models(spec, files[spec.file], d, task)
        cohort[name] = write_dataset(spec, d / ("test_set.csv" if name == "predict_diabetes"
                                                else "independent_eval_cohort.csv"), seed, n=40)
    write_dataset(LIFE, tab / "life_expectancy" / "no_gt_independent_eval_cohort.csv", 16, n=40, with_target=False)

    shape = (14, 14, 8)
    for i in range(3):
        _volume(p.data / "ct" / "images" / f"ct_{i:03d}.nii.gz", shape, 100 + i)
        _mask(p.data / "ct" / "labels" / f"ct_{i:03d}.nii.gz", shape)
        _volume(p.data / "mri" / "mama_mia" / "images_pre_contrast" / f"duke_{i:03d}.nii.gz", shape, 200 + i,
                base=20.0, organ=120.0)
        _mask(p.data / "mri" / "mama_mia" / "labels" / f"duke_{i:03d}.nii.gz", shape)
    for i in range(2):
        for ch in range(4):
            _volume(p.data / "mri" / "brats21" / "images" / f"BraTS2021_{i:05d}_{ch:04d}.nii.gz", shape,
                    300 + 10 * i + ch, base=10.0, organ=150.0)
        _mask(p.data / "mri" / "brats21" / "labels" / f"BraTS2021_{i:05d}.nii.gz", shape, labels=3)
    ct_input = _volume(p.data / "ct_input" / "abdomen_ct.nii.gz", shape, 400)
    mr_input = _volume(p.data / "mr_input" / "abdomen_mr.nii.gz", shape, 401, base=30.0, organ=110.0)
    for ds in ("Dataset135_Brats21", "Dataset140_Kits23"):
        d = p.data / "nnUNet_raw" / ds
        (d / "imagesTr").mkdir(parents=True, exist_ok=True)
        (d / "dataset.json").write_text(json.dumps({"name": ds}) + "\n")
    for i in range(2):
        for ch in range(4):
            _volume(p.data / "inference_nnunet" / "brats21_validation" / f"BraTS2021_{i + 10:05d}_{ch:04d}.nii.gz",
                    shape, 500 + 10 * i + ch)
        _volume(p.data / "inference_nnunet" / "kits23_validation" / f"case_{i:05d}_0000.nii.gz", shape, 600 + i)

    img_sets = {"pneumoniamnist_28": 2, "pathmnist_64": 9, "breastmnist_128": 2, "dermamnist_224": 7,
                "organamnist_28": 11, "octmnist_28": 4, "bloodmnist_128": 8, "pneumoniamnist_128": 2}
    for ds, k in img_sets.items():
        base = p.data / "images" / ds
        _image_folder(base / f"dataset_{ds}", k, per_class=1)
        _gt_csv(base / f"dataset_{ds}" / "test", base / "inference" / "gt_test_labels.csv")
    pn = p.data / "images" / "pneumoniamnist_128" / "inference"
    _image_folder(pn / "test_data", 2, per_class=2, splits=(".",))
    _gt_csv(pn / "test_data", pn / "gt_test_labels.csv")
    ckpts = {}
    for i, (ds, arch) in enumerate((("pneumoniamnist_28", "resnet18"), ("pathmnist_64", "resnet34"),
                                    ("breastmnist_128", "resnet50"), ("dermamnist_224", "resnet101"),
                                    ("organamnist_28", "resnet152"), ("octmnist_28", "vgg16"),
                                    ("bloodmnist_128", "inceptionv3")), 1):
        ckpts[ds] = _checkpoint(p.data / "images" / ds / "output_master_agent" / f"{arch}_img_train_{i}" /
                                "best_model.pt", arch)

    mt = p.data / "multi_task"
    for i in range(2):
        _volume(mt / "mt1" / "ct_scans" / f"spleen_{i:03d}.nii.gz", shape, 700 + i)
        for ch in range(4):
            _volume(mt / "mt2" / "mpMRI_scans" / f"BraTS2021_{i:05d}_{ch:04d}.nii.gz", shape, 800 + 10 * i + ch,
                    base=10.0, organ=150.0)
    mamamia = write_dataset(MAMAMIA, mt / "mt3" / "mamamia_features" / MAMAMIA.file, 900)

    manifest_dir = root / "manifests"
    write_manifests(mock_manifests(), manifest_dir)
    registry = default_registry(load_manifests(manifest_dir))

    plans = _plans(p, files, cohort, ckpts, ct_input, mr_input, mamamia)
    corpus = root / "corpus.json"
    corpus.write_text(json.dumps([pl.entry().to_dict() for pl in plans], indent=2, ensure_ascii=False) + "\n",
                      encoding="utf-8")
    correct = scripted_backend(compile_rules(plans, registry), model_id="scripted-correct", name="scripted-correct")
    cpath, bpath = root / "backend_correct.json", root / "backend_broken.json"
    cpath.write_text(json.dumps(correct.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    bpath.write_text(json.dumps(broken_profile().to_dict(), indent=2) + "\n", encoding="utf-8")
    return FixtureSet(root, corpus, cpath, bpath, manifest_dir, plans)


def _plans(p: _Paths, files: dict, cohort: dict, ckpts: dict, ct_input: str, mr_input: str,
           mamamia: str) -> list[PromptPlan]:
    tab = lambda *a: p.d("tabular", *a)  # noqa: E731
    breast, diabetes = files[BREAST.file], files[DIABETES.file]
    heart, failure, life = files[HEART_DISEASE.file], files[HEART_FAILURE.file], files[LIFE.file]
    plans: list[PromptPlan] = [
        _rfe(p, "rfe_ct_prompt_1", p.d("ct", "images"), p.d("ct", "labels"), None, ["original"]),
        _rfe(p, "rfe_ct_prompt_2", p.d("ct", "images"), p.d("ct", "labels"), ["shape", "firstorder"],
             ["exponential", "gradient"], note=" LBP2D is not available and was skipped.",
             ask_filters=["Exponential", "Gradient", "LBP2D"]),
        _rfe(p, "rfe_mri_prompt_1", p.d("mri", "mama_mia", "images_pre_contrast"), p.d("mri", "mama_mia", "labels"),
             None, ["original"]),
        _rfe(p, "rfe_mri_prompt_2", p.d("mri", "brats21", "images"), p.d("mri", "brats21", "labels"),
             ["shape", "glrlm", "ngtdm"], ["exponential", "gradient", "squareroot"]),
        _eda(p, "eda_prompt_1", breast, name="the breast cancer table"),
        _eda(p, "eda_prompt_2", diabetes),
        _eda(p, "eda_prompt_3", heart),
        _eda(p, "eda_prompt_4", failure),
        _eda(p, "eda_prompt_5", life),
        _fia(p, "fia_prompt_1", breast, "diagnosis", [5, 10, 20]),
        _fia(p, "fia_prompt_2", diabetes, "Outcome", [5, 10, 20]),
        _fia(p, "fia_prompt_3", heart, "target", [5, 10]),
        _fia(p, "fia_prompt_4", failure, "DEATH_EVENT", [8]),
        _fia(p, "fia_prompt_5", life, "Life_expectancy", [10, 15], plots=True),
        _nnunet_train(p, "nnunet_prompt_1_brats21", p.d("nnUNet_raw", "Dataset135_Brats21")),
        _nnunet_train(p, "nnunet_prompt_1_kits23", p.d("nnUNet_raw", "Dataset140_Kits23")),
        _nnunet_infer(p, "nnunet_prompt_2_brats21", "135", p.d("inference_nnunet", "brats21_validation")),
        _nnunet_infer(p, "nnunet_prompt_2_kits23", "140", p.d("inference_nnunet", "kits23_validation")),
        _totalseg(p, "totalsegmentator_prompt_1", ct_input, "total", ["spleen"]),
        _totalseg(p, "totalsegmentator_prompt_2", ct_input, "total", ["liver", "stomach", "kidney_left",
                                                                      "kidney_right"]),
        _totalseg(p, "totalsegmentator_prompt_3", ct_input, "total", None),
        _totalseg(p, "totalsegmentator_prompt_4", mr_input, "total_mr", None),
        _train(p, "tct_prompt_1", breast, "diagnosis", "classification", ["lightgbm"],
               {"normalize": False, "power_transformation": False}, " Turn normalization and transformation off."),
        _train(p, "tct_prompt_2", diabetes, "Outcome", "classification", ["lightgbm"]),
        _train(p, "tct_prompt_3", heart, "target", "classification", ["lightgbm"]),
        _train(p, "tct_prompt_4", failure, "DEATH_EVENT", "classification", ["lightgbm", "dummy", "catboost"]),
        _infer(p, "ict_prompt_1", tab("breast_cancer_wisconsin", "models", "tuned_model_1", "tuned_model_1.mbundle"),
               cohort["breast_cancer_wisconsin"], "diagnosis", "classification"),
        _infer(p, "ict_prompt_2", tab("predict_diabetes", "models", "tuned_model_3", "tuned_model_3.mbundle"),
               cohort["predict_diabetes"], "Outcome", "classification"),
        _infer(p, "ict_prompt_3", tab("predict_diabetes", "models", "blended_model", "blended_model.mbundle"),
               cohort["predict_diabetes"], "Outcome", "classification"),
        _infer(p, "ict_prompt_4", tab("heart_disease", "models", "tuned_model_3", "tuned_model_3.mbundle"),
               cohort["heart_disease"], "target", "classification"),
        _infer(p, "ict_prompt_5", tab("heart_failure", "models", "tuned_model_2", "tuned_model_2.mbundle"),
               cohort["heart_failure"], "DEATH_EVENT", "classification"),
        _train(p, "trt_prompt_1", life, "Life_expectancy", "regression", ["lightgbm"]),
        _infer(p, "irt_prompt_1", tab("life_expectancy", "models", "tuned_model_1", "tuned_model_1.mbundle"),
               cohort["life_expectancy"], "Life_expectancy", "regression"),
        _infer(p, "irt_prompt_2", tab("life_expectancy", "models", "tuned_model_1", "tuned_model_1.mbundle"),
               tab("life_expectancy", "no_gt_independent_eval_cohort.csv"), None, "regression"),
    ]
    img = lambda ds, *a: p.d("images", ds, *a)  # noqa: E731
    plans += [
        _img_train(p, "img_train_prompt_1", img("pneumoniamnist_28", "dataset_pneumoniamnist_28"), "resnet18", 2,
                   "Batch size 64, 60 epochs.", {"batch_size": 64, "epochs": 60}),
        _img_train(p, "img_train_prompt_2", img("pathmnist_64", "dataset_pathmnist_64"), "resnet34", 9,
                   "Batch size 32, patience 10, 50 epochs.", {"batch_size": 32, "patience": 10, "epochs": 50}),
        _img_train(p, "img_train_prompt_3", img("breastmnist_128", "dataset_breastmnist_128"), "resnet50", 2,
                   "50 epochs without early stopping.", {"epochs": 50, "patience": 0}),
        _img_train(p, "img_train_prompt_4", img("dermamnist_224", "dataset_dermamnist_224"), "resnet101", 7,
                   "200 epochs, early-stopping patience 10.", {"epochs": 200, "patience": 10}),
        _img_train(p, "img_train_prompt_5", img("organamnist_28", "dataset_organamnist_28"), "resnet152", 11,
                   "Patience 5.", {"patience": 5}),
        _img_train(p, "img_train_prompt_6", img("octmnist_28", "dataset_octmnist_28"), "vgg16", 4,
                   "No pretrained weights.", {"pretrained": False}),
        _img_train(p, "img_train_prompt_7", img("bloodmnist_128", "dataset_bloodmnist_128"), "inceptionv3", 8,
                   "Pretrained weights, batch size 64, 150 epochs.", {"pretrained": True, "batch_size": 64,
                                                                      "epochs": 150}),
    ]
    gt = lambda ds: img(ds, "inference", "gt_test_labels.csv")  # noqa: E731
    test = lambda ds: img(ds, f"dataset_{ds}", "test")  # noqa: E731
    plans += [
        _img_infer(p, "img_infer_prompt_1", ckpts["pneumoniamnist_28"], test("pneumoniamnist_28"), 2,
                   gt("pneumoniamnist_28")),
        _img_infer(p, "img_infer_prompt_2", ckpts["pathmnist_64"], test("pathmnist_64"), 9, gt("pathmnist_64")),
        _img_infer(p, "img_infer_prompt_3", ckpts["breastmnist_128"], test("breastmnist_128"), 2,
                   gt("breastmnist_128")),
        _img_infer(p, "img_infer_prompt_4", ckpts["dermamnist_224"], test("dermamnist_224"), 7, None),
        _img_infer(p, "img_infer_prompt_5", ckpts["organamnist_28"], test("organamnist_28"), 11, None),
        _img_infer(p, "img_infer_prompt_6", ckpts["octmnist_28"], test("octmnist_28"), 4, gt("octmnist_28")),
        _img_infer(p, "img_infer_prompt_7", ckpts["bloodmnist_128"], test("bloodmnist_128"), 8,
                   gt("bloodmnist_128")),
    ]
    plans += _multi_task_plans(p, breast, mamamia)
    return plans


def _multi_task_plans(p: _Paths, breast: str, mamamia: str) -> list[PromptPlan]:
    mt = lambda *a: p.d("multi_task", *a)  # noqa: E731
    out: list[PromptPlan] = []

    # segmentation -> radiomics -> EDA
    scans, masks = mt("mt1", "ct_scans"), p.o("multi_task_prompt_1", "masks")
    feats, eda = p.o("multi_task_prompt_1", "radiomics"), p.o("multi_task_prompt_1", "eda")
    cases = ["spleen_000", "spleen_001"]
    prompt = (f'Segment only the spleen in each CT scan in "{scans}" with TotalSegmentator (total task), one scan '
              f'at a time, and save the masks to "{masks}" using the scan file names.\n'
              f'Then extract radiomic features from the scans and their spleen masks and save the CSV in "{feats}".\n'
              f'Finally run exploratory data analysis, without plots, on that CSV and save the results in "{eda}".')
    label_csv = os.path.join(feats, "features_label_1.csv")
    out.append(PromptPlan("multi_task_prompt_1", "TotalSegmentator", prompt, [
        Delegation("totalsegmentator_agent",
                   f"Segment the spleen (total task) in each scan of {scans}, one at a time; masks go to {masks}.",
                   [Call("totalseg", {"input_path": os.path.join(scans, f"{c}.nii.gz"), "output_dir": masks,
                                      "task": "total", "roi_subset": ["spleen"]}) for c in cases],
                   f"Spleen masks for {len(cases)} scans are in {masks}."),
        Delegation("radiomics_agent",
                   f"Extract radiomic features from the CT scans in {scans} with the masks in {masks}; "
                   f"save to {feats}.",
                   [Call("radiomics_extract", {"image_dir": scans, "mask_dir": masks, "output_dir": feats})],
                   f"Spleen radiomic features are in {label_csv}."),
        Delegation("eda_agent", f"Run EDA without plots on {label_csv}; save the results in {eda}.",
                   [Call("eda", {"input_path": label_csv, "output_dir": eda, "make_plots": False})],
                   f"EDA of the spleen features saved in {eda}."),
    ], [f"{masks}/spleen_000.nii.gz", f"{masks}/spleen_001.nii.gz", label_csv, f"{eda}/report.md"],
        f"Masks in {masks}, features in {feats}, EDA in {eda}."))

    # nnU-Net -> radiomics on T1 -> EDA per label
    scans, masks = mt("mt2", "mpMRI_scans"), p.o("multi_task_prompt_2", "masks")
    feats, eda = p.o("multi_task_prompt_2", "radiomics"), p.o("multi_task_prompt_2", "eda")
    prompt = (f'Use the nnU-Net dataset 135 3d full resolution fold all model to segment the mpMRI scans in '
              f'"{scans}" and save the masks to "{masks}".\nExtract radiomic features for each mask label from '
              f'the T1 scans only (mask BraTS2021_00000.nii.gz goes with image BraTS2021_00000_0000.nii.gz) with '
              f'the Exponential, Original and Wavelet filters, saving the CSV files in "{feats}".\n'
              f'Run exploratory data analysis on each CSV and save the results per label in subfolders of "{eda}".')
    label_csvs = [os.path.join(feats, f"features_label_{k}.csv") for k in (1, 2, 3)]
    out.append(PromptPlan("multi_task_prompt_2", "nnUNet", prompt, [
        Delegation("nnunet_agent", f"Run nnU-Net inference (dataset 135, 3d_fullres, fold all) on {scans}; "
                                   f"write masks to {masks}.",
                   [Call("nnunet_infer", {"dataset_id": "135", "configuration": "3d_fullres", "fold": "all",
                                          "input_dir": scans, "output_dir": masks})],
                   f"Tumour masks written to {masks}."),
        Delegation("radiomics_agent",
                   f"Extract radiomic features per label from the T1 images (_0000) in {scans} with masks in "
                   f"{masks}, filters exponential, original and wavelet; save to {feats}.",
                   [Call("radiomics_extract", {"image_dir": scans, "mask_dir": masks, "output_dir": feats,
                                               "filters": ["exponential", "original", "wavelet"],
                                               "feature_classes": ["firstorder", "shape", "glcm"]})],
                   f"Per-label radiomic features are in {', '.join(label_csvs)}."),
        Delegation("eda_agent", "Run EDA on each of " + ", ".join(label_csvs) +
                   f"; save each in {eda}/label_<k>.",
                   [Call("eda", {"input_path": c, "output_dir": os.path.join(eda, f"label_{k}"),
                                 "make_plots": False}) for k, c in zip((1, 2, 3), label_csvs)],
                   f"EDA for labels 1, 2 and 3 saved under {eda}."),
    ], [f"{masks}/BraTS2021_00000.nii.gz"] + label_csvs + [f"{eda}/label_{k}/report.md" for k in (1, 2, 3)],
        f"Masks in {masks}, features in {feats}, EDA in {eda}."))

    # feature importance -> classifier on the top 20
    fi, clf = p.o("multi_task_prompt_3", "feature_importance"), p.o("multi_task_prompt_3", "classifier")
    top20 = os.path.join(fi, "top_20_features.csv")
    prompt = (f'Run a feature importance analysis on "{mamamia}" with target column "pcr" and export the top 20, '
              f'50 and 100 features to "{fi}".\nThen train a classifier on the top 20 feature file '
              f'({QUICK["folds"]} folds, {QUICK["tune_iters"]} tuning iterations) and save its outputs in "{clf}".')
    out.append(PromptPlan("multi_task_prompt_3", "Feature Importance", prompt, [
        Delegation("feature_importance_agent",
                   f"Rank features of {mamamia} for target pcr; export top 20, 50 and 100 feature files to {fi}.",
                   [Call("feature_importance", {"input_path": mamamia, "target": "pcr", "output_dir": fi,
                                                "top_ks": [20, 50, 100], "make_plots": False})],
                   f"Top feature files for pcr are in {fi}; the top 20 file is {top20}."),
        Delegation("classifier_agent",
                   f"Train classifiers on {top20} for target pcr with {QUICK['folds']} folds and "
                   f"{QUICK['tune_iters']} tuning iterations; save to {clf}.",
                   [Call("tabular_classifier_train", {"input_path": top20, "target": "pcr", "output_dir": clf,
                                                      "make_plots": False, **QUICK})],
                   f"pcr classifier trained; outputs in {clf}."),
    ], [top20, f"{fi}/top_100_features.csv", f"{clf}/models/blended_model/blended_model.mbundle"],
        f"Feature files in {fi}; classifier in {clf}."))

    # EDA + top-10 features -> classifier
    base, clf = p.o("multi_task_prompt_4"), p.o("multi_task_prompt_4", "classifier")
    top10 = os.path.join(base, "top_10_features.csv")
    prompt = (f'Run exploratory data analysis of "{breast}" and save the EDA results and a CSV with the top 10 '
              f'features in "{base}". The target column is "diagnosis".\nThen train a classifier on the top 10 '
              f'feature file ({QUICK["folds"]} folds, {QUICK["tune_iters"]} tuning iterations) and save its '
              f'outputs in "{clf}".')
    out.append(PromptPlan("multi_task_prompt_4", "EDA", prompt, [
        Delegation("eda_agent", f"Run EDA on {breast} with target column diagnosis; save to {base}.",
                   [Call("eda", {"input_path": breast, "output_dir": base, "target_column": "diagnosis"})],
                   f"EDA of the breast cancer table saved in {base}."),
        Delegation("feature_importance_agent",
                   f"Rank features of {breast} for target diagnosis; export the top 10 feature file to {base}.",
                   [Call("feature_importance", {"input_path": breast, "target": "diagnosis", "output_dir": base,
                                                "top_ks": [10], "make_plots": False})],
                   f"The top 10 feature file is {top10}."),
        Delegation("classifier_agent",
                   f"Train classifiers on {top10} for target diagnosis with {QUICK['folds']} folds and "
                   f"{QUICK['tune_iters']} tuning iterations; save to {clf}.",
                   [Call("tabular_classifier_train", {"input_path": top10, "target": "diagnosis",
                                                      "output_dir": clf, "make_plots": False, **QUICK})],
                   f"Diagnosis classifier trained; outputs in {clf}."),
    ], [f"{base}/report.md", top10, f"{clf}/leaderboard.csv"], f"EDA and features in {base}; classifier in {clf}."))

    # image classifier: train, then infer with the new checkpoint
    data = p.d("images", "pneumoniamnist_128", "dataset_pneumoniamnist_128")
    test_dir = p.d("images", "pneumoniamnist_128", "inference", "test_data")
    gt = p.d("images", "pneumoniamnist_128", "inference", "gt_test_labels.csv")
    outdir = p.o("multi_task_prompt_5")
    ckpt = os.path.join(outdir, "best_model.pt")
    pred = os.path.join(outdir, "inference")
    prompt = (f'Train an InceptionV3 classifier on "{data}" with 2 classes for 100 epochs and patience 10.\n'
              f'Then classify the images in "{test_dir}" with the trained model, using the ground truth in '
              f'"{gt}".\nSave the model and the inference results in "{outdir}".')
    out.append(PromptPlan("multi_task_prompt_5", "Image Classification (Training)", prompt, [
        Delegation("image_classifier_agent",
                   f"Train inceptionv3 with 2 classes on {data} for 100 epochs, patience 10; save to {outdir}.",
                   [Call("image_cls_train", {"data_dir": data, "architecture": "inceptionv3", "num_classes": 2,
                                             "epochs": 100, "patience": 10, "output_dir": outdir})],
                   f"InceptionV3 checkpoint saved as {ckpt}."),
        Delegation("image_classifier_agent",
                   f"Classify {test_dir} with {ckpt} (2 classes, ground truth {gt}); save to {pred}.",
                   [Call("image_cls_infer", {"model_path": ckpt, "input_dir": test_dir, "num_classes": 2,
                                             "gt_csv": gt, "output_dir": pred})],
                   f"Inference results and metrics saved in {pred}."),
    ], [ckpt, f"{pred}/predictions.csv", f"{pred}/metrics.json"], f"Model and predictions are in {outdir}."))
    return out
