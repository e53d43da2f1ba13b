"""One-vs-one linear maximum-margin classifier.

Each class pair gets a binary model minimizing

    0.5 ||w||^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))

by full-batch subgradient descent with Armijo backtracking, which is
deterministic for a fixed data order and decreases the objective at every
accepted step.  Prediction is a majority vote over the pair decisions;
ties break on summed signed margins, then on class order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFeatures, LengthMismatch, SingleClass

RELATIVE_TOLERANCE = 1e-6
MAX_EPOCHS = 2000
ARMIJO = 1e-4


@dataclass
class LinearModel:
    classes: tuple[str, ...]
    pairs: tuple[tuple[int, int], ...]  # indices into classes, i < j
    weights: np.ndarray  # (n_pairs, dim)
    biases: np.ndarray  # (n_pairs,)
    C: float

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def hinge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, c: float) -> float:
    margins = y * (np.einsum("nd,d->n", x, w) + b)
    return 0.5 * float(np.einsum("d,d->", w, w)) + c * float(
        np.maximum(0.0, 1.0 - margins).sum()
    )


def fit_binary(x: np.ndarray, y: np.ndarray, c: float):
    """Fit one max-margin separator for labels in {-1, +1}.

    Returns (w, b, objective_trace); the trace is recorded once per epoch
    and is strictly decreasing until the relative tolerance is met.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, dim = x.shape
    w = np.zeros(dim)
    b = 0.0
    obj = hinge_objective(w, b, x, y, c)
    trace = [obj]
    step = 1.0 / max(1.0, c * n)

    for _ in range(MAX_EPOCHS):
        margins = y * (np.einsum("nd,d->n", x, w) + b)
        active = margins < 1.0
        gw = w - c * np.einsum("n,nd->d", y * active, x)
        gb = -c * float(np.einsum("n,n->", y, active.astype(np.float64)))
        gnorm2 = float(np.einsum("d,d->", gw, gw)) + gb * gb
        if gnorm2 == 0.0:
            break

        step = min(step * 2.0, 1e6)
        accepted = False
        for _ in range(60):
            w_new = w - step * gw
            b_new = b - step * gb
            new_obj = hinge_objective(w_new, b_new, x, y, c)
            if new_obj <= obj - ARMIJO * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # stuck on a hinge vertex; no descent available
        w, b = w_new, b_new
        done = obj - new_obj <= RELATIVE_TOLERANCE * max(1.0, abs(obj))
        obj = new_obj
        trace.append(obj)
        if done:
            break

    return w, b, trace


def train(x, labels, c: float = 1.0) -> LinearModel:
    """Train one-vs-one binary models over all label pairs."""
    x = np.asarray(x, dtype=np.float64)
    labels = list(labels)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes}")
    if len(x) and np.ptp(x, axis=0).max() == 0.0:
        raise DegenerateFeatures("all training vectors are identical")

    index = {cls: i for i, cls in enumerate(classes)}
    y_idx = np.asarray([index[l] for l in labels])
    pairs = [
        (i, j) for i in range(len(classes)) for j in range(i + 1, len(classes))
    ]
    weights = np.zeros((len(pairs), x.shape[1]))
    biases = np.zeros(len(pairs))
    for p, (i, j) in enumerate(pairs):
        mask = (y_idx == i) | (y_idx == j)
        ys = np.where(y_idx[mask] == i, 1.0, -1.0)
        weights[p], biases[p], _ = fit_binary(x[mask], ys, c)
    return LinearModel(
        classes=classes, pairs=tuple(pairs), weights=weights, biases=biases, C=c
    )


def decision_values(model: LinearModel, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise LengthMismatch(f"vector of length {vec.shape} against dim {model.dim}")
    return np.einsum("pd,d->p", model.weights, vec) + model.biases


def predict(model: LinearModel, vec: np.ndarray) -> str:
    votes = np.zeros(len(model.classes))
    margin_sum = np.zeros(len(model.classes))
    for (i, j), f in zip(model.pairs, decision_values(model, vec)):
        winner = i if f >= 0.0 else j  # exact ties favor the earlier class
        votes[winner] += 1.0
        margin_sum[i] += f
        margin_sum[j] -= f
    best = min(
        range(len(model.classes)),
        key=lambda cls: (-votes[cls], -margin_sum[cls], cls),
    )
    return model.classes[best]


def predict_many(model: LinearModel, x) -> list[str]:
    return [predict(model, row) for row in np.asarray(x, dtype=np.float64)]


def save_model(model: LinearModel, path_prefix) -> None:
    from . import formats

    prefix = Path(path_prefix)
    formats.write_fmap(model.weights, prefix.with_suffix(".fmap"))
    formats.write_fmap(model.biases.reshape(1, -1), prefix.with_suffix(".bias.fmap"))
    formats.write_sidecar(
        {
            "classes": ",".join(model.classes),
            "C": repr(model.C),
            "dim": str(model.dim),
        },
        prefix.with_suffix(".txt"),
    )


def load_model(path_prefix) -> LinearModel:
    from . import formats

    prefix = Path(path_prefix)
    weights = np.asarray(formats.read_fmap(prefix.with_suffix(".fmap")), dtype=np.float64)
    biases = np.asarray(
        formats.read_fmap(prefix.with_suffix(".bias.fmap")), dtype=np.float64
    ).ravel()
    side = formats.read_sidecar(prefix.with_suffix(".txt"))
    classes = tuple(side["classes"].split(","))
    pairs = tuple(
        (i, j) for i in range(len(classes)) for j in range(i + 1, len(classes))
    )
    return LinearModel(
        classes=classes,
        pairs=pairs,
        weights=weights,
        biases=biases,
        C=float(side["C"]),
    )
