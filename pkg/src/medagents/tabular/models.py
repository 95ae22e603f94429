"""Model zoo: fitting plus portable numpy predictors that serialize exactly.

Logistic regression and the tree models are fitted with scikit-learn and then
copied into plain arrays; the remaining models are fitted directly here.
Prediction always goes through the portable form, so a model behaves the
same before and after a save/load round trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.linear_model import LogisticRegression
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

CLASSIFIERS = ("logreg", "decision_tree", "random_forest", "knn", "naive_bayes")
REGRESSORS = ("linear", "ridge", "decision_tree", "random_forest", "knn")
ALIASES = {"lr": "logreg", "logistic_regression": "logreg", "dt": "decision_tree", "rf": "random_forest",
           "nb": "naive_bayes", "gnb": "naive_bayes", "lin": "linear", "linear_regression": "linear"}

# Hyperparameter grids used by the tuner; `None` means unbounded.
GRIDS: dict[str, dict[str, list]] = {
    "logreg": {"C": [0.01, 0.1, 1.0, 10.0, 100.0]},
    "decision_tree": {"max_depth": [None, 3, 5, 8, 12], "min_samples_leaf": [1, 2, 5, 10]},
    "random_forest": {"n_estimators": [100, 200, 400], "max_depth": [None, 4, 8, 16], "min_samples_leaf": [1, 2, 5]},
    "knn": {"n_neighbors": [1, 3, 5, 7, 9, 15], "weights": ["uniform", "distance"]},
    "naive_bayes": {"var_smoothing": [1e-9, 1e-8, 1e-7, 1e-6, 1e-5]},
    "linear": {"fit_intercept": [True]},
    "ridge": {"alpha": [0.01, 0.1, 1.0, 10.0, 100.0]},
}
DEFAULTS: dict[str, dict[str, Any]] = {
    "logreg": {"C": 1.0},
    "decision_tree": {"max_depth": None, "min_samples_leaf": 1},
    "random_forest": {"n_estimators": 100, "max_depth": None, "min_samples_leaf": 1},
    "knn": {"n_neighbors": 5, "weights": "uniform"},
    "naive_bayes": {"var_smoothing": 1e-9},
    "linear": {"fit_intercept": True},
    "ridge": {"alpha": 1.0},
}


def zoo(task: str) -> tuple[str, ...]:
    return CLASSIFIERS if task == "classification" else REGRESSORS


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    task: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.algorithm not in zoo(self.task):
            raise ValueError(f"{self.algorithm!r} is not in the {self.task} zoo: {', '.join(zoo(self.task))}")

    def params(self) -> dict:
        return {**DEFAULTS[self.algorithm], **self.hyperparams}

    def label(self) -> str:
        return f"{self.algorithm}({json.dumps(self.params(), sort_keys=True)})"

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "task": self.task, "hyperparams": dict(self.hyperparams),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["algorithm"], d["task"], dict(d.get("hyperparams", {})), int(d.get("seed", 0)))


# ---------------------------------------------------------------- portable predictors
# A portable model is a plain dict of numbers/arrays with a "kind" key.

def _tree_dict(est, n_classes: int | None, class_index: np.ndarray | None) -> dict:
    t = est.tree_
    value = t.value[:, 0, :].astype(np.float64)
    if n_classes is not None:
        sums = value.sum(axis=1, keepdims=True)
        value = value / np.where(sums > 0, sums, 1.0)
        full = np.zeros((value.shape[0], n_classes))
        full[:, class_index] = value
        value = full
    else:
        value = value[:, :1]
    return {"kind": "tree", "left": t.children_left.astype(np.int64), "right": t.children_right.astype(np.int64),
            "feature": t.feature.astype(np.int64), "threshold": t.threshold.astype(np.float64), "value": value}


def _tree_predict(m: dict, X: np.ndarray) -> np.ndarray:
    Xf = X.astype(np.float32).astype(np.float64)  # split thresholds were learned on float32 inputs
    node = np.zeros(len(X), dtype=np.int64)
    left, right, feat, thr = m["left"], m["right"], m["feature"], m["threshold"]
    active = left[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        nd = node[idx]
        go_left = Xf[idx, feat[nd]] <= thr[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = left[node] >= 0
    return m["value"][node]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_raw(m: dict, X: np.ndarray, n_classes: int | None) -> np.ndarray:
    """Class probabilities (n x k) for classifiers, or a prediction vector for regressors."""
    X = np.asarray(X, dtype=np.float64)
    kind = m["kind"]
    if kind == "constant":
        out = np.tile(m["value"], (len(X), 1))
    elif kind == "linear":
        z = X @ m["coef"].T + m["intercept"]
        if m["link"] == "identity":
            return z[:, 0]
        if m["link"] == "sigmoid":
            p1 = 1.0 / (1.0 + np.exp(-z[:, 0]))
            local = np.column_stack([1.0 - p1, p1])
        else:
            local = _softmax(z)
        out = np.zeros((len(X), n_classes))
        out[:, m["class_index"]] = local
    elif kind == "tree":
        out = _tree_predict(m, X)
    elif kind == "forest":
        out = sum(_tree_predict(t, X) for t in m["trees"]) / len(m["trees"])
    elif kind == "knn":
        out = _knn_predict(m, X, n_classes)
    elif kind == "gnb":
        jll = np.stack([m["log_prior"][c] - 0.5 * np.sum(np.log(2 * np.pi * m["var"][c]))
                        - 0.5 * np.sum((X - m["theta"][c]) ** 2 / m["var"][c], axis=1)
                        for c in range(len(m["log_prior"]))], axis=1)
        local = _softmax(jll)
        out = np.zeros((len(X), n_classes))
        out[:, m["class_index"]] = local
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    if n_classes is None:
        return out[:, 0]
    return out


def _knn_predict(m: dict, X: np.ndarray, n_classes: int | None) -> np.ndarray:
    train, y = m["X"], m["y"]
    k = min(int(m["k"]), len(train))
    out = np.zeros((len(X), n_classes if n_classes is not None else 1))
    for start in range(0, len(X), 256):
        block = X[start:start + 256]
        d2 = np.sum((block[:, None, :] - train[None, :, :]) ** 2, axis=-1)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        dist = np.sqrt(np.take_along_axis(d2, nn, axis=1))
        if m["weights"] == "distance":
            w = np.where(dist == 0, 0.0, 1.0 / np.where(dist == 0, 1.0, dist))
            exact = dist == 0
            has_exact = exact.any(axis=1)
            w[has_exact] = exact[has_exact].astype(np.float64)
        else:
            w = np.ones_like(dist)
        w = w / w.sum(axis=1, keepdims=True)
        if n_classes is None:
            out[start:start + 256, 0] = np.sum(w * y[nn], axis=1)
        else:
            for c in range(n_classes):
                out[start:start + 256, c] = np.sum(w * (y[nn] == c), axis=1)
    return out


def fit_model(spec: ModelSpec, X: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> dict:
    """Fit on encoded features; for classification `y` holds class indices 0..n_classes-1."""
    X = np.asarray(X, dtype=np.float64)
    p = spec.params()
    algo = spec.algorithm
    if spec.task == "classification":
        y = np.asarray(y, dtype=np.int64)
        present = np.unique(y)
        if len(present) == 1:
            v = np.zeros(n_classes)
            v[present[0]] = 1.0
            return {"kind": "constant", "value": v}
        if algo == "logreg":
            est = LogisticRegression(C=p["C"], max_iter=2000, random_state=spec.seed).fit(X, y)
            link = "sigmoid" if len(est.classes_) == 2 else "softmax"
            return {"kind": "linear", "coef": est.coef_.astype(np.float64),
                    "intercept": est.intercept_.astype(np.float64), "link": link,
                    "class_index": est.classes_.astype(np.int64)}
        if algo == "decision_tree":
            est = DecisionTreeClassifier(max_depth=p["max_depth"], min_samples_leaf=p["min_samples_leaf"],
                                         random_state=spec.seed).fit(X, y)
            return _tree_dict(est, n_classes, est.classes_.astype(np.int64))
        if algo == "random_forest":
            est = RandomForestClassifier(n_estimators=p["n_estimators"], max_depth=p["max_depth"],
                                         min_samples_leaf=p["min_samples_leaf"], random_state=spec.seed,
                                         n_jobs=1).fit(X, y)
            idx = est.classes_.astype(np.int64)
            return {"kind": "forest", "trees": [_tree_dict(t, n_classes, idx) for t in est.estimators_]}
        if algo == "knn":
            return {"kind": "knn", "X": X.copy(), "y": y.astype(np.float64), "k": int(p["n_neighbors"]),
                    "weights": p["weights"]}
        if algo == "naive_bayes":
            theta = np.stack([X[y == c].mean(axis=0) for c in present])
            var = np.stack([X[y == c].var(axis=0) for c in present])
            var = var + p["var_smoothing"] * float(np.max(X.var(axis=0), initial=0.0))
            var = np.where(var > 0, var, 1e-12)
            counts = np.array([(y == c).sum() for c in present], dtype=np.float64)
            return {"kind": "gnb", "theta": theta, "var": var, "log_prior": np.log(counts / counts.sum()),
                    "class_index": present.astype(np.int64)}
    else:
        y = np.asarray(y, dtype=np.float64)
        if algo in ("linear", "ridge"):
            alpha = 0.0 if algo == "linear" else float(p["alpha"])
            fit_int = bool(p.get("fit_intercept", True))
            xm = X.mean(axis=0) if fit_int else np.zeros(X.shape[1])
            ym = y.mean() if fit_int else 0.0
            Xc, yc = X - xm, y - ym
            if alpha > 0:
                coef = np.linalg.solve(Xc.T @ Xc + alpha * np.eye(X.shape[1]), Xc.T @ yc)
            else:
                coef = np.linalg.lstsq(Xc, yc, rcond=None)[0]
            return {"kind": "linear", "coef": coef[None, :], "intercept": np.array([ym - xm @ coef]),
                    "link": "identity"}
        if algo == "decision_tree":
            est = DecisionTreeRegressor(max_depth=p["max_depth"], min_samples_leaf=p["min_samples_leaf"],
                                        random_state=spec.seed).fit(X, y)
            return _tree_dict(est, None, None)
        if algo == "random_forest":
            est = RandomForestRegressor(n_estimators=p["n_estimators"], max_depth=p["max_depth"],
                                        min_samples_leaf=p["min_samples_leaf"], random_state=spec.seed,
                                        n_jobs=1).fit(X, y)
            return {"kind": "forest", "trees": [_tree_dict(t, None, None) for t in est.estimators_]}
        if algo == "knn":
            return {"kind": "knn", "X": X.copy(), "y": y.copy(), "k": int(p["n_neighbors"]), "weights": p["weights"]}
    raise ValueError(f"cannot fit {algo!r} for {spec.task}")
