"""Linear readout training, prediction, and benchmark error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SingularSystemError, UndefinedMetricError
from .reservoir import StateMatrix


@dataclass(frozen=True)
class RegressionConfig:
    ridge_lambda: float = 0.0
    washout: int = 50
    include_intercept: bool = True

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ParameterError("ridge_lambda must be >= 0")
        if self.washout < 0:
            raise ParameterError("washout must be >= 0")


@dataclass(frozen=True)
class ReadoutWeights:
    weights: np.ndarray
    include_intercept: bool = True
    intercept: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.intercept):
            raise ParameterError("readout weights must be finite")


@dataclass(frozen=True)
class MetricReport:
    kind: str  # MSE | NMSE | SER | WER (free-form for auxiliary metrics)
    value: float
    sample_count: int

    def __post_init__(self):
        if self.kind in ("NMSE", "SER", "WER") and self.value < 0:
            raise ParameterError(f"{self.kind} cannot be negative")
        if self.kind in ("SER", "WER") and self.value > 1:
            raise ParameterError(f"{self.kind} cannot exceed 1")


def _as_array(states) -> np.ndarray:
    if isinstance(states, StateMatrix):
        return states.states
    return np.asarray(states, dtype=float)


def train_linear(states, targets, config: RegressionConfig) -> ReadoutWeights:
    """Fit readout weights by (ridge-regularized) least squares.

    Solves (R + lambda*I) W = P where R is the time-averaged state
    correlation matrix and P the state/target cross-correlation, both over
    the columns after the washout. With lambda=0 this is the exact
    least-squares optimum. The intercept, when enabled, is fitted by
    augmenting a constant-one state row.
    """
    x = _as_array(states)
    y = np.asarray(targets, dtype=float)
    if y.ndim != 1 or y.shape[0] != x.shape[1]:
        raise ParameterError(
            f"targets length {y.shape} does not match {x.shape[1]} state columns"
        )
    if config.washout >= x.shape[1]:
        raise ParameterError(
            f"washout {config.washout} leaves no training columns out of {x.shape[1]}"
        )
    x = x[:, config.washout :]
    y = y[config.washout :]
    if config.include_intercept:
        x = np.vstack([x, np.ones(x.shape[1])])

    t = x.shape[1]
    corr = (x @ x.T) / t
    cross = (x @ y) / t
    system = corr
    if config.ridge_lambda > 0:
        system = corr + config.ridge_lambda * np.eye(corr.shape[0])
    try:
        solution = np.linalg.solve(system, cross)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "state correlation matrix is singular; set ridge_lambda > 0"
        ) from exc
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError(
            "linear solve produced non-finite weights; set ridge_lambda > 0"
        )

    if config.include_intercept:
        return ReadoutWeights(
            weights=solution[:-1], include_intercept=True, intercept=float(solution[-1])
        )
    return ReadoutWeights(weights=solution, include_intercept=False, intercept=0.0)


def predict(states, w: ReadoutWeights) -> np.ndarray:
    """Linear readout: weighted sum of node states (plus intercept)."""
    x = _as_array(states)
    if x.shape[0] != w.weights.shape[0]:
        raise ParameterError(
            f"states have {x.shape[0]} nodes, weights expect {w.weights.shape[0]}"
        )
    out = w.weights @ x
    if w.include_intercept:
        out = out + w.intercept
    return out


def mse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise ParameterError("sequences must be non-empty and equal length")
    return float(np.mean((y - yhat) ** 2))


def nmse(y, yhat) -> float:
    """Mean squared error normalized by the mean of the squared target.

    The denominator is mean(y^2), not the target variance.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise ParameterError("sequences must be non-empty and equal length")
    power = np.mean(y**2)
    if power == 0:
        raise UndefinedMetricError("NMSE undefined for an all-zero target")
    return float(np.mean((y - yhat) ** 2) / power)


def quantize_symbols(yhat, alphabet) -> np.ndarray:
    """Snap each value to the nearest alphabet symbol (lower one on ties)."""
    alphabet = np.asarray(alphabet, dtype=float)
    if alphabet.size == 0:
        raise ParameterError("alphabet must be non-empty")
    if np.any(np.diff(alphabet) <= 0):
        raise ParameterError("alphabet must be strictly increasing")
    yhat = np.asarray(yhat, dtype=float)
    distances = np.abs(yhat[..., np.newaxis] - alphabet)
    return alphabet[np.argmin(distances, axis=-1)]


def ser(symbols, estimated) -> float:
    """Fraction of symbols that differ from their estimates."""
    symbols = np.asarray(symbols)
    estimated = np.asarray(estimated)
    if symbols.shape != estimated.shape or symbols.size == 0:
        raise ParameterError("sequences must be non-empty and equal length")
    return float(np.mean(symbols != estimated))


def winner_takes_all(class_scores, segments) -> np.ndarray:
    """Pick the class with the largest time-averaged score per segment.

    class_scores is (n_classes, n_steps); segments is a sequence of
    (start, stop) column ranges. Exact ties go to the lowest class index.
    """
    scores = np.asarray(class_scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] < 2:
        raise ParameterError("class_scores must be (n_classes >= 2, n_steps)")
    labels = np.empty(len(segments), dtype=int)
    for idx, (start, stop) in enumerate(segments):
        if stop <= start or stop > scores.shape[1]:
            raise ParameterError(f"empty or out-of-range segment ({start}, {stop})")
        labels[idx] = int(np.argmax(scores[:, start:stop].mean(axis=1)))
    return labels


def wer(labels, truth) -> float:
    """Fraction of segments whose predicted class differs from the truth."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape or labels.size == 0:
        raise ParameterError("label sequences must be non-empty and equal length")
    return float(np.mean(labels != truth))


@dataclass(frozen=True)
class CrossValidation:
    mean: MetricReport
    folds: list = field(default_factory=list)


def fold_assignment(n_items: int, folds: int, seed: int = 0) -> np.ndarray:
    """Deterministic balanced assignment of items to folds."""
    if folds < 2:
        raise ParameterError("need at least 2 folds")
    if n_items < folds:
        raise ParameterError(f"cannot split {n_items} items into {folds} folds")
    order = np.random.default_rng(seed).permutation(n_items)
    assignment = np.empty(n_items, dtype=int)
    assignment[order] = np.arange(n_items) % folds
    return assignment


def cross_validate(items, folds: int, evaluate, seed: int = 0) -> CrossValidation:
    """Rotate each fold through the test role and average the fold metrics.

    evaluate(train_items, test_items) must return a MetricReport; all folds
    must report the same metric kind.
    """
    items = list(items)
    assignment = fold_assignment(len(items), folds, seed=seed)
    reports = []
    for f in range(folds):
        test = [item for item, a in zip(items, assignment) if a == f]
        train = [item for item, a in zip(items, assignment) if a != f]
        reports.append(evaluate(train, test))
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise ParameterError(f"folds reported mixed metric kinds: {kinds}")
    mean = MetricReport(
        kind=reports[0].kind,
        value=float(np.mean([r.value for r in reports])),
        sample_count=int(sum(r.sample_count for r in reports)),
    )
    return CrossValidation(mean=mean, folds=reports)


def save_weights(w: ReadoutWeights, path) -> None:
    """Plain-text weights: one `index value` line per node, then intercept."""
    lines = [f"{i} {value!r}" for i, value in enumerate(w.weights)]
    if w.include_intercept:
        lines.append(f"intercept {w.intercept!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> ReadoutWeights:
    weights = {}
    intercept = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, value = line.split()
            if key == "intercept":
                intercept = float(value)
            else:
                weights[int(key)] = float(value)
    vector = np.array([weights[i] for i in range(len(weights))])
    if intercept is None:
        return ReadoutWeights(weights=vector, include_intercept=False, intercept=0.0)
    return ReadoutWeights(weights=vector, include_intercept=True, intercept=intercept)
