"""Empirical hardness models.

A model maps the 48 raw features through a selected quadratic basis into a
ridge regression on log runtime or per-instance score. Basis selection is
greedy forward selection on cross-validated RMSE, run once over the raw
features and once more to add pairwise products of the selected features.
Censored runtimes (runs cut off at the time limit) are handled with the
Schmee-Hahn iteration: censored targets are repeatedly replaced by the mean
of the predictive normal truncated at the cutoff and the model is refit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

TARGET_LOG_RUNTIME = "log_runtime"
TARGET_SCORE = "score"

DEFAULT_DELTA = 1e-3
MIN_RUNTIME = 0.005  # zero runtimes are clamped here before the log transform


class DimensionMismatch(ValueError):
    pass


class EmptyCandidates(ValueError):
    pass


class NoUncensoredData(ValueError):
    pass


def log_runtime(runtime_seconds) -> np.ndarray:
    """Log-transform runtimes, clamping zeros to a measurable floor."""
    r = np.maximum(np.asarray(runtime_seconds, dtype=float), MIN_RUNTIME)
    return np.log(r)


@dataclass
class BasisSpec:
    """Selected basis functions plus the column standardization.

    The expanded vector is [x[i] for i in raw_indices] followed by
    [x[j] * x[k] for (j, k) in product_pairs], each standardized as
    (value - mean) / scale. Indices are 0-based into the raw feature vector.
    """

    raw_indices: list[int]
    product_pairs: list[tuple[int, int]]
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        if len(set(self.raw_indices)) != len(self.raw_indices):
            raise ValueError("raw_indices must be distinct")
        pairs = [tuple(p) for p in self.product_pairs]
        if len(set(pairs)) != len(pairs):
            raise ValueError("product_pairs must be distinct")
        if any(j > k for j, k in pairs):
            raise ValueError("product pairs must have j <= k")
        self.product_pairs = pairs
        self.means = np.asarray(self.means, dtype=float)
        self.scales = np.asarray(self.scales, dtype=float)
        if self.means.shape != (self.dim,) or self.scales.shape != (self.dim,):
            raise ValueError("normalization length must equal basis dimension")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be positive")

    @property
    def dim(self) -> int:
        return len(self.raw_indices) + len(self.product_pairs)

    @classmethod
    def identity(cls, raw_indices, product_pairs=()):
        d = len(raw_indices) + len(product_pairs)
        return cls(list(raw_indices), list(product_pairs), np.zeros(d), np.ones(d))

    def expand_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [X[:, i] for i in self.raw_indices]
        cols += [X[:, j] * X[:, k] for j, k in self.product_pairs]
        if not cols:
            return np.zeros((X.shape[0], 0))
        phi = np.column_stack(cols)
        return (phi - self.means) / self.scales


def quadratic_expand(x, basis: BasisSpec) -> np.ndarray:
    """Expand one raw feature vector through the basis."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("expected a 1-d raw feature vector")
    needed = max(
        [i + 1 for i in basis.raw_indices]
        + [k + 1 for _, k in basis.product_pairs]
        + [0]
    )
    if x.shape[0] < needed:
        raise DimensionMismatch(
            f"raw vector of length {x.shape[0]} too short for basis (needs {needed})"
        )
    return basis.expand_matrix(x[None, :])[0]


def full_product_pairs(m: int) -> list[tuple[int, int]]:
    """All pairs (j, k) with j <= k; the full expansion has m + m(m+1)/2 terms."""
    return [(j, k) for j in range(m) for k in range(j, m)]


def ridge_fit(phi: np.ndarray, y: np.ndarray, delta: float) -> np.ndarray:
    """Solve w = (delta*I + Phi^T Phi)^-1 Phi^T y via Cholesky."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != y.shape[0]:
        raise DimensionMismatch("design matrix and targets disagree")
    d = phi.shape[1]
    if d == 0:
        return np.zeros(0)
    gram = phi.T @ phi + delta * np.eye(d)
    rhs = phi.T @ y
    c, low = linalg.cho_factor(gram)
    return linalg.cho_solve((c, low), rhs)


@dataclass
class RidgeModel:
    """A fitted ridge model over a quadratic basis.

    Predictions are intercept + w . phi(x); with the log_runtime target,
    exp(prediction) is the runtime estimate in seconds. `sigma` is the
    sample standard deviation of the training residuals (uncensored rows
    only when the fit was censored).
    """

    basis: BasisSpec
    weights: np.ndarray
    delta: float
    sigma: float
    target: str
    intercept: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.basis.dim,):
            raise DimensionMismatch("weight length must equal basis dimension")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.target not in (TARGET_LOG_RUNTIME, TARGET_SCORE):
            raise ValueError(f"unknown target {self.target!r}")

    def predict(self, x) -> float:
        return float(self.intercept + quadratic_expand(x, self.basis) @ self.weights)

    def predict_matrix(self, X) -> np.ndarray:
        return self.intercept + self.basis.expand_matrix(X) @ self.weights


def ridge_predict(model: RidgeModel, x):
    """Point prediction plus the predictive normal (mean, sigma)."""
    mean = model.predict(x)
    return mean, model.sigma


@dataclass
class LabeledDataset:
    """Raw features with (possibly censored) regression targets."""

    features: np.ndarray
    targets: np.ndarray
    censored: np.ndarray = None
    cutoff_log: float = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        n = self.features.shape[0]
        if self.targets.shape != (n,):
            raise DimensionMismatch("row counts disagree")
        if self.censored is None:
            self.censored = np.zeros(n, dtype=bool)
        self.censored = np.asarray(self.censored, dtype=bool)
        if self.censored.shape != (n,):
            raise DimensionMismatch("censoring flags disagree with rows")
        if self.censored.any():
            if self.cutoff_log is None:
                raise ValueError("censored rows require cutoff_log")
            if not np.allclose(self.targets[self.censored], self.cutoff_log):
                raise ValueError("censored targets must sit at cutoff_log")

    @property
    def n(self) -> int:
        return self.features.shape[0]


def _standardize_columns(M: np.ndarray):
    means = M.mean(axis=0) if M.size else np.zeros(M.shape[1])
    stds = M.std(axis=0) if M.size else np.ones(M.shape[1])
    scales = np.where(stds > 0, stds, 1.0)
    return means, scales


def make_basis(X: np.ndarray, raw_indices, product_pairs=()) -> BasisSpec:
    """Basis over the given terms, standardized on the training matrix X."""
    spec = BasisSpec.identity(raw_indices, product_pairs)
    phi = spec.expand_matrix(X)
    means, scales = _standardize_columns(phi)
    return BasisSpec(list(raw_indices), list(product_pairs), means, scales)


def _content_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Canonical row order independent of storage order."""
    keys = tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1)) + (y,)
    return np.lexsort(keys[::-1])


def _fold_indices(X, y, folds):
    order = _content_order(X, y)
    return [order[k::folds] for k in range(folds)]


def _greedy_cv_select(C: np.ndarray, y: np.ndarray, folds: int, max_terms: int,
                      delta: float, base: tuple[int, ...] = ()) -> list[int]:
    """Greedy forward selection over the columns of C by CV RMSE.

    `base` columns are pinned into every fit but not reported. Columns are
    standardized and y centered before use; fold membership depends only on
    row content, so results do not change under row permutation.
    """
    n, m = C.shape
    if m == 0:
        raise EmptyCandidates("no candidate columns")
    folds = min(folds, n)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    means, scales = _standardize_columns(C)
    Z = (C - means) / scales
    yc = y - y.mean()

    fold_idx = _fold_indices(C, y, folds)
    masks = []
    for k in range(folds):
        test = np.zeros(n, dtype=bool)
        test[fold_idx[k]] = True
        masks.append(test)
    grams = []
    for test in masks:
        Zt, yt = Z[~test], yc[~test]
        grams.append((Zt.T @ Zt, Zt.T @ yt))

    def cv_rmse(cols: tuple[int, ...]) -> float:
        idx = np.array(cols, dtype=int)
        sq = 0.0
        for (G, b), test in zip(grams, masks):
            A = G[np.ix_(idx, idx)] + delta * np.eye(len(idx))
            w = np.linalg.solve(A, b[idx])
            resid = yc[test] - Z[np.ix_(test, idx)] @ w
            sq += float(resid @ resid)
        return math.sqrt(sq / n)

    selected: list[int] = []
    current = math.sqrt(float(yc @ yc) / n) if not base else cv_rmse(base)
    available = [j for j in range(m) if j not in base]
    while len(selected) < max_terms and available:
        best_j, best_rmse = None, current
        for j in available:
            r = cv_rmse(base + tuple(selected) + (j,))
            if r < best_rmse - 1e-12:
                best_j, best_rmse = j, r
        if best_j is None:
            break
        selected.append(best_j)
        available.remove(best_j)
        current = best_rmse
    return selected


def forward_select(features: np.ndarray, targets: np.ndarray,
                   candidate_indices=None, folds: int = 10,
                   max_terms: int = 30, delta: float = DEFAULT_DELTA) -> list[int]:
    """Greedy forward selection of raw feature columns.

    Starts empty and adds the candidate that most reduces cross-validated
    RMSE of a ridge fit, stopping when nothing improves or max_terms is
    reached. Returns raw-feature indices in selection order.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if candidate_indices is None:
        candidate_indices = list(range(X.shape[1]))
    candidate_indices = list(candidate_indices)
    if not candidate_indices:
        raise EmptyCandidates("candidate_indices is empty")
    if max_terms < 1:
        raise ValueError("max_terms must be at least 1")
    C = X[:, candidate_indices]
    picked = _greedy_cv_select(C, y, folds, max_terms, delta)
    return [candidate_indices[j] for j in picked]


def select_basis(X: np.ndarray, y: np.ndarray, folds: int = 10,
                 max_raw_terms: int = 30, max_expanded_terms: int = 40,
                 delta: float = DEFAULT_DELTA) -> BasisSpec:
    """Two-pass basis selection: raw features, then pairwise products.

    The second pass keeps the selected raw features in the model and
    greedily adds products of those features while CV RMSE improves, up to
    a total of max_expanded_terms basis functions.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    raw = forward_select(X, y, folds=folds, max_terms=max_raw_terms, delta=delta)
    if not raw:
        # no informative feature; fall back to the single best-scoring column
        raw = [0]
    candidates = [(j, k) for idx, j in enumerate(raw) for k in raw[idx:]]
    candidates = [(min(j, k), max(j, k)) for j, k in candidates]
    candidates = sorted(set(candidates))
    room = max_expanded_terms - len(raw)
    pairs: list[tuple[int, int]] = []
    if room > 0 and candidates:
        Craw = X[:, raw]
        Cprod = np.column_stack([X[:, j] * X[:, k] for j, k in candidates])
        C = np.column_stack([Craw, Cprod])
        base = tuple(range(len(raw)))
        picked = _greedy_cv_select(C, y, folds, room, delta, base=base)
        pairs = [candidates[j - len(raw)] for j in picked]
    return make_basis(X, raw, pairs)


def fit_ridge_model(X: np.ndarray, y: np.ndarray, basis: BasisSpec,
                    delta: float = DEFAULT_DELTA, target: str = TARGET_LOG_RUNTIME,
                    residual_rows=None) -> RidgeModel:
    """Fit a RidgeModel: standardized basis columns, centered target."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = basis.expand_matrix(X)
    intercept = float(y.mean())
    w = ridge_fit(phi, y - intercept, delta)
    resid = y - (intercept + phi @ w)
    if residual_rows is not None:
        resid = resid[residual_rows]
    sigma = float(np.std(resid, ddof=1)) if resid.size > 1 else 0.0
    return RidgeModel(basis, w, delta, sigma, target, intercept)


def truncated_normal_mean(mu: float, sigma: float, lower: float) -> float:
    """E[Y | Y >= lower] for Y ~ Normal(mu, sigma); always >= lower.

    The upper tail uses the scaled complementary error function, which stays
    accurate far beyond 8 sigma where pdf/cdf ratios would degrade.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if lower == -np.inf:
        return float(mu)
    a = (lower - mu) / sigma
    if a < 0:
        lam = stats.norm.pdf(a) / stats.norm.sf(a)
    else:
        lam = math.sqrt(2 / math.pi) / special.erfcx(a / math.sqrt(2))
    return max(float(mu + sigma * lam), float(lower))


def censored_fit(data: LabeledDataset, delta: float = DEFAULT_DELTA,
                 basis: BasisSpec | None = None, tol: float = 1e-6,
                 max_iter: int = 50, target: str = TARGET_LOG_RUNTIME) -> RidgeModel:
    """Schmee-Hahn censored regression.

    The initial fit treats censored targets as observed at the cutoff; each
    iteration replaces them with the truncated-normal conditional mean of
    the current predictive distribution and refits, until the largest
    weight change drops below tol or max_iter is reached.
    """
    censored = data.censored
    uncensored = ~censored
    if not uncensored.any():
        raise NoUncensoredData("need at least one uncensored row")
    if basis is None:
        basis = make_basis(data.features, list(range(data.features.shape[1])))

    y_work = data.targets.astype(float).copy()
    model = fit_ridge_model(data.features, y_work, basis, delta, target,
                            residual_rows=uncensored)
    if not censored.any():
        return model

    phi_c = basis.expand_matrix(data.features[censored])
    for _ in range(max_iter):
        preds = model.intercept + phi_c @ model.weights
        if model.sigma > 0:
            imputed = np.array([
                truncated_normal_mean(p, model.sigma, data.cutoff_log) for p in preds
            ])
        else:
            imputed = np.maximum(preds, data.cutoff_log)
        y_work[censored] = imputed
        new_model = fit_ridge_model(data.features, y_work, basis, delta, target,
                                    residual_rows=uncensored)
        change = max(
            float(np.max(np.abs(new_model.weights - model.weights), initial=0.0)),
            abs(new_model.intercept - model.intercept),
        )
        model = new_model
        if change < tol:
            break
    return model


def model_to_doc(model: RidgeModel) -> dict:
    return {
        "type": "ridge",
        "target": model.target,
        "delta": model.delta,
        "sigma": model.sigma,
        "intercept": model.intercept,
        "basis": {
            "raw_indices": list(model.basis.raw_indices),
            "product_pairs": [list(p) for p in model.basis.product_pairs],
            "means": [float(v) for v in model.basis.means],
            "scales": [float(v) for v in model.basis.scales],
        },
        "weights": [float(v) for v in model.weights],
    }


def model_from_doc(doc: dict) -> RidgeModel:
    if doc.get("type") != "ridge":
        raise ValueError(f"not a ridge model document: {doc.get('type')!r}")
    b = doc["basis"]
    basis = BasisSpec(
        [int(i) for i in b["raw_indices"]],
        [(int(j), int(k)) for j, k in b["product_pairs"]],
        np.array(b["means"], dtype=float),
        np.array(b["scales"], dtype=float),
    )
    weights = np.array(doc["weights"], dtype=float)
    if weights.shape != (basis.dim,):
        raise DimensionMismatch("weight length disagrees with basis dimension")
    return RidgeModel(basis, weights, float(doc["delta"]), float(doc["sigma"]),
                      doc["target"], float(doc["intercept"]))


def save_model(model: RidgeModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_doc(model), fh, indent=1)


def load_model(path) -> RidgeModel:
    with open(path) as fh:
        return model_from_doc(json.load(fh))
