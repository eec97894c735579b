"""Recover a linear patch transform from example pairs.

The controlled experiment: given pairs (x, y) with y = T x for a known
linear patch transform T, fit a single 36x36 linear layer y_hat = A x by
gradient descent on the mean squared error, and independently by the
closed-form least-squares solution. Both are compared against the analytic
operator matrix of the transform.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .optim import Adam
from .tensor import Tensor, parameter


@dataclass
class SyntheticFit:
    a_hat: np.ndarray
    train_mse: float
    holdout_mse: float = float("nan")
    max_abs_err: float = float("nan")
    rel_fro_err: float = float("nan")
    rank_deficient: bool = False

    def compare(self, reference, holdout_x=None, holdout_y=None):
        """Fill the comparison metrics against an analytic operator."""
        diff = self.a_hat - reference
        self.max_abs_err = float(np.max(np.abs(diff)))
        self.rel_fro_err = float(np.linalg.norm(diff)
                                 / max(np.linalg.norm(reference), 1e-300))
        if holdout_x is not None:
            pred = holdout_x @ self.a_hat.T
            self.holdout_mse = float(np.mean((pred - holdout_y) ** 2))
        return self


def fit_action_gd(xs, ys, epochs=200, lr=0.01):
    """Full-batch Adam on mean ||y - A x||^2; no bias, no nonlinearity."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n, d = xs.shape
    if n < d:
        warnings.warn(
            f"{n} pairs for a {d}x{d} operator is underdetermined",
            RuntimeWarning, stacklevel=2)
    a = parameter(np.zeros((d, d)))
    opt = Adam({"A": a}, lr=lr)
    x_t = Tensor(xs)
    y_t = Tensor(ys)
    loss_value = float("nan")
    for _ in range(epochs):
        opt.zero_grad()
        pred = x_t @ a.transpose()
        diff = pred - y_t
        loss = (diff * diff).mean()
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise RuntimeError(
                f"gradient fit diverged (loss={loss_value}); try a smaller "
                f"learning rate than {lr}")
        loss.backward()
        opt.step()
    return SyntheticFit(a_hat=a.data.copy(), train_mse=loss_value)


def fit_action_lstsq(xs, ys):
    """Exact minimizer of the mean squared error, one solve per output row."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    solution, _, rank, _ = np.linalg.lstsq(xs, ys, rcond=None)
    deficient = rank < xs.shape[1]
    if deficient:
        warnings.warn(
            f"input matrix has rank {rank} < {xs.shape[1]}; returning the "
            f"minimum-norm solution", RuntimeWarning, stacklevel=2)
    a_hat = solution.T
    mse = float(np.mean((xs @ solution - ys) ** 2))
    return SyntheticFit(a_hat=a_hat, train_mse=mse, rank_deficient=deficient)


def analytic_operator(transform):
    """Ground-truth matrix of the transform in the vec basis."""
    return transform.operator()
