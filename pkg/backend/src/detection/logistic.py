"""
Logistic-regression baseline: standardized features, full-batch gradient
descent on the L2-regularized mean log-loss with a curvature-scaled step.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from backend.src.errors import DivergenceError, TrainingError, UsageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    final_loss: float = float("nan")
    epochs_run: int = 0

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise UsageError(
                f"Model trained on {self.n_features} features, got {X.shape[-1]}"
            )
        return self.standardize(X) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def log_loss_and_gradient(
    weights: np.ndarray, bias: float, Z: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """
    Mean log-loss plus ``l2/2 * ||w||^2`` (bias unpenalized) and its gradient.

    Args:
        weights: Current weight vector
        bias: Current intercept
        Z: Standardized feature matrix
        y: Binary labels as floats
        l2: Regularization strength

    Returns:
        (loss, gradient w.r.t. weights, gradient w.r.t. bias)
    """
    margin = Z @ weights + bias
    # log(1 + e^m) - y*m, computed without overflow
    loss = float(np.mean(np.logaddexp(0.0, margin) - y * margin))
    loss += 0.5 * l2 * float(weights @ weights)
    residual = expit(margin) - y
    grad_w = Z.T @ residual / y.size + l2 * weights
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    epochs: int = 10_000,
    learning_rate: float = 1.0,
    l2: float = 1e-3,
    seed: int = 0,
    tol: float = 1e-8,
) -> LinearModel:
    """
    Fit a logistic-regression model by full-batch gradient descent.

    Features are standardized with the training mean and standard deviation
    (zero-variance columns use a divisor of 1). Weights start from a small
    seeded Gaussian draw. Each step moves ``learning_rate / L`` along the
    negative gradient, where L bounds the curvature of the objective, so the
    default of 1.0 always descends. Training stops once the largest gradient
    component drops below ``tol`` or after ``epochs`` steps.

    Returns:
        LinearModel whose ``final_loss`` is the objective at the returned
        weights and ``epochs_run`` the number of steps taken

    Raises:
        TrainingError: Fewer than two rows or a single class
        DivergenceError: The loss became non-finite (lower the learning rate)
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise UsageError("X must be N x d with one label per row")
    if not np.isfinite(X).all():
        raise UsageError("Feature matrix must be finite; impute first")
    if epochs < 0 or not learning_rate > 0 or l2 < 0:
        raise UsageError("epochs >= 0, learning_rate > 0 and l2 >= 0 are required")
    if X.shape[0] < 2:
        raise TrainingError("Logistic regression needs at least two rows")
    if np.unique(y).size < 2:
        raise TrainingError("Training data contains a single class")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    Z = (X - mean) / scale

    # Centered Z is orthogonal to the bias column, so [Z 1] has squared
    # spectral norm max(||Z||^2, n); the sigmoid slope is at most 1/4
    n = X.shape[0]
    spectral = np.linalg.norm(Z, 2) ** 2 if Z.size else 0.0
    step = learning_rate / (max(spectral, n) / (4.0 * n) + l2)

    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=X.shape[1])
    bias = 0.0
    epoch = 0
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad_w, grad_b = log_loss_and_gradient(weights, bias, Z, y, l2)
        while epoch < epochs and _largest(grad_w, grad_b) >= tol:
            weights = weights - step * grad_w
            bias = bias - step * grad_b
            epoch += 1
            loss, grad_w, grad_b = log_loss_and_gradient(weights, bias, Z, y, l2)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"Log-loss became non-finite at epoch {epoch}; "
                    f"try a learning rate below {learning_rate}"
                )

    if epoch == epochs and _largest(grad_w, grad_b) >= tol:
        logger.info(
            "Logistic regression hit the %d-epoch cap (loss %.6f, gradient %.2e)",
            epochs,
            loss,
            _largest(grad_w, grad_b),
        )
    return LinearModel(weights, bias, mean, scale, loss, epoch)


def _largest(grad_w: np.ndarray, grad_b: float) -> float:
    return max(float(np.max(np.abs(grad_w), initial=0.0)), abs(grad_b))
