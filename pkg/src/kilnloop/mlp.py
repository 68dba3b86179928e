"""Single-hidden-layer regression network trained by momentum SGD.

Inputs are standardized to zero mean and unit variance with statistics
frozen at fit time; the loss is the mean squared error on the raw target.
The analytic gradients are exposed separately so they can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MOMENTUM = 0.9


@dataclass
class MlpState:
    w1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float
    x_mean: np.ndarray
    x_std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpState":
        return cls(
            np.asarray(d["w1"], np.float64),
            np.asarray(d["b1"], np.float64),
            np.asarray(d["w2"], np.float64),
            float(d["b2"]),
            np.asarray(d["x_mean"], np.float64),
            np.asarray(d["x_std"], np.float64),
        )


def standardize(state: MlpState, X: np.ndarray) -> np.ndarray:
    return (X - state.x_mean) / state.x_std


def forward(state: MlpState, Xs: np.ndarray) -> np.ndarray:
    hidden = np.maximum(Xs @ state.w1 + state.b1, 0.0)
    return hidden @ state.w2 + state.b2


def loss_and_grads(state: MlpState, X: np.ndarray, y: np.ndarray):
    """Mean-squared-error loss and its gradient for every weight.

    X is raw (standardization applied internally, matching predict).
    Returns (loss, dict of gradients keyed like the MlpState fields).
    """
    Xs = standardize(state, X)
    n = len(y)
    z1 = Xs @ state.w1 + state.b1
    hidden = np.maximum(z1, 0.0)
    pred = hidden @ state.w2 + state.b2
    err = pred - y
    loss = float(np.mean(err**2))

    dpred = 2.0 * err / n
    grad_w2 = hidden.T @ dpred
    grad_b2 = float(dpred.sum())
    dhidden = np.outer(dpred, state.w2)
    dhidden[z1 <= 0.0] = 0.0
    grad_w1 = Xs.T @ dhidden
    grad_b1 = dhidden.sum(axis=0)
    return loss, {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def fit_mlp(
    X: np.ndarray,
    y: np.ndarray,
    hidden_units: int,
    learning_rate: float,
    n_epochs: int,
    batch_size: int,
    seed: int,
) -> MlpState:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    x_std = np.where(x_std > 0.0, x_std, 1.0)
    state = MlpState(
        w1=rng.normal(0.0, np.sqrt(2.0 / max(d, 1)), size=(d, hidden_units)),
        b1=np.zeros(hidden_units),
        w2=rng.normal(0.0, np.sqrt(1.0 / hidden_units), size=hidden_units),
        b2=float(y.mean()),
        x_mean=x_mean,
        x_std=x_std,
    )

    velocity = {
        "w1": np.zeros_like(state.w1),
        "b1": np.zeros_like(state.b1),
        "w2": np.zeros_like(state.w2),
        "b2": 0.0,
    }
    for _ in range(n_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            batch = order[lo : lo + batch_size]
            _, grads = loss_and_grads(state, X[batch], y[batch])
            for key in ("w1", "b1", "w2"):
                velocity[key] = MOMENTUM * velocity[key] - learning_rate * grads[key]
                setattr(state, key, getattr(state, key) + velocity[key])
            velocity["b2"] = MOMENTUM * velocity["b2"] - learning_rate * grads["b2"]
            state.b2 = state.b2 + velocity["b2"]
    return state


def predict_mlp(state: MlpState, X: np.ndarray) -> np.ndarray:
    return forward(state, standardize(state, np.asarray(X, dtype=np.float64)))
