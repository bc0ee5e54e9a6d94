"""
Quality-of-life index.

Category weights come from an L2-regularized logistic regression of survey
satisfaction on per-capita accessibility, normalized so that the absolute
weights sum to one. Negative weights are kept. A zone's index is the weighted
sum of its accessibility profile.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml
from scipy.special import expit

from .exceptions import ConvergenceError, DomainError, FitError, ScenarioValidationError
from .rng import StreamPurpose, make_stream
from .transport import AccessProfile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurveyRow:
    features: Mapping[str, float]
    satisfied: int


@dataclass(frozen=True)
class FitConfig:
    l2_lambda: float = 1.0
    max_iterations: int = 100
    tolerance: float = 1e-8
    include_intercept: bool = True

    def __post_init__(self) -> None:
        if not self.l2_lambda >= 0:
            raise ScenarioValidationError("l2_lambda must be >= 0")
        if not self.tolerance > 0:
            raise ScenarioValidationError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ScenarioValidationError("max_iterations must be >= 1")


@dataclass(frozen=True)
class QoLWeights:
    """Category weights w_c of the QoL index."""

    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        if not all(math.isfinite(w) for w in self.weights.values()):
            raise ScenarioValidationError("QoL weights must be finite")

    @property
    def categories(self) -> list[str]:
        return sorted(self.weights)

    @classmethod
    def normalized(cls, raw: Mapping[str, float]) -> "QoLWeights":
        """Scales raw coefficients so that the absolute weights sum to one."""
        total = sum(abs(w) for w in raw.values())
        if not total > 0:
            raise FitError("all coefficients are zero; weights cannot be normalized")
        return cls({c: w / total for c, w in raw.items()})


@dataclass(frozen=True)
class FitReport:
    weights: QoLWeights
    coefficients: Mapping[str, float]
    intercept: float
    iterations: int
    gradient_norm: float
    l2_lambda: float
    n_rows: int
    categories: list[str] = field(default_factory=list)


def _design(
    rows: Sequence[SurveyRow],
) -> tuple[list[str], np.ndarray, np.ndarray]:
    if not rows:
        raise FitError("survey is empty")
    categories = sorted(rows[0].features)
    X = np.empty((len(rows), len(categories)))
    y = np.empty(len(rows))
    for i, row in enumerate(rows):
        if sorted(row.features) != categories:
            raise ScenarioValidationError(
                f"survey row {i}: categories differ from the first row"
            )
        if row.satisfied not in (0, 1):
            raise ScenarioValidationError(f"survey row {i}: label must be 0 or 1")
        X[i] = [row.features[c] for c in categories]
        y[i] = row.satisfied
    if not np.all(np.isfinite(X)):
        raise ScenarioValidationError("survey features must be finite")
    return categories, X, y


def _with_intercept(X: np.ndarray, include_intercept: bool) -> np.ndarray:
    if not include_intercept:
        return X
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _penalty_mask(n_params: int, include_intercept: bool) -> np.ndarray:
    mask = np.ones(n_params)
    if include_intercept:
        mask[-1] = 0.0  # the intercept is not penalized
    return mask


def nll(
    beta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    l2_lambda: float,
    include_intercept: bool = True,
) -> float:
    """
    Regularized negative log-likelihood.

    `X` holds the feature columns only; with `include_intercept` the last entry
    of `beta` is the intercept.
    """
    A = _with_intercept(X, include_intercept)
    eta = A @ beta
    penalty = _penalty_mask(beta.size, include_intercept) * beta
    loss = np.sum(np.logaddexp(0.0, eta) - y * eta)
    return float(loss + 0.5 * l2_lambda * penalty @ beta)


def gradient(
    beta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    l2_lambda: float,
    include_intercept: bool = True,
) -> np.ndarray:
    """Analytic gradient of `nll`."""
    A = _with_intercept(X, include_intercept)
    residual = expit(A @ beta) - y
    mask = _penalty_mask(beta.size, include_intercept)
    return A.T @ residual + l2_lambda * mask * beta


def fit_weights(rows: Sequence[SurveyRow], cfg: Optional[FitConfig] = None) -> FitReport:
    """
    Fits category weights by damped Newton iterations on the regularized NLL.

    Raises:
        FitError: If the survey has a single class or the fit is degenerate.
        ConvergenceError: If the gradient norm is still above the tolerance
            after `max_iterations`.
    """
    cfg = cfg or FitConfig()
    categories, X, y = _design(rows)
    if len(rows) < 2 or y.min() == y.max():
        raise FitError("survey needs at least two rows with both labels present")

    A = _with_intercept(X, cfg.include_intercept)
    mask = _penalty_mask(A.shape[1], cfg.include_intercept)
    beta = np.zeros(A.shape[1])

    def objective(b: np.ndarray) -> float:
        return nll(b, X, y, cfg.l2_lambda, cfg.include_intercept)

    grad = gradient(beta, X, y, cfg.l2_lambda, cfg.include_intercept)
    grad_norm = float(np.linalg.norm(grad))
    iterations = 0
    while grad_norm > cfg.tolerance:
        if iterations >= cfg.max_iterations:
            raise ConvergenceError(
                "logistic fit did not converge", grad_norm, iterations
            )
        iterations += 1
        p = expit(A @ beta)
        curvature = (A * (p * (1.0 - p))[:, None]).T @ A
        hessian = curvature + cfg.l2_lambda * np.diag(mask)
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian, grad, rcond=None)[0]

        # Armijo backtracking keeps every step a descent step.
        current = objective(beta)
        slope = float(grad @ step)
        t = 1.0
        while t > 1e-10 and objective(beta - t * step) > current - 1e-4 * t * slope:
            t *= 0.5
        beta = beta - t * step
        grad = gradient(beta, X, y, cfg.l2_lambda, cfg.include_intercept)
        grad_norm = float(np.linalg.norm(grad))

    n_features = len(categories)
    coefficients = {c: float(beta[i]) for i, c in enumerate(categories)}
    intercept = float(beta[n_features]) if cfg.include_intercept else 0.0
    weights = QoLWeights.normalized(coefficients) if categories else QoLWeights({})
    logger.info(
        f"Fitted QoL weights on {len(rows)} rows in {iterations} iteration(s), "
        f"gradient norm {grad_norm:.2e}"
    )
    return FitReport(
        weights=weights,
        coefficients=coefficients,
        intercept=intercept,
        iterations=iterations,
        gradient_norm=grad_norm,
        l2_lambda=cfg.l2_lambda,
        n_rows=len(rows),
        categories=categories,
    )


def qol(profile: AccessProfile, weights: QoLWeights) -> float:
    """
    Q_i = sum over categories of w_c * access_c.

    Raises:
        DomainError: If the profile has a category without a weight.
    """
    total = 0.0
    for category in sorted(profile.values):
        if category not in weights.weights:
            raise DomainError(f"no QoL weight for category {category!r}")
        total += weights.weights[category] * profile.values[category]
    return total


def weights_from_config(raw: Mapping[str, float]) -> QoLWeights:
    """Explicit config weights, rescaled if their absolute values do not sum to one."""
    total = sum(abs(w) for w in raw.values())
    if math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-12):
        return QoLWeights(dict(raw))
    logger.warning(f"QoL weights sum to {total!r} in absolute value; normalizing")
    return QoLWeights.normalized(raw)


def synthesize_survey(
    true_weights: Mapping[str, float],
    n_rows: int,
    master_seed: int = 0,
    seed: int = 0,
    intercept: float = 0.0,
    feature_scale: float = 1.0,
    noise: float = 0.5,
) -> list[SurveyRow]:
    """
    Draws a synthetic survey: features uniform on [0, feature_scale], labels
    Bernoulli with a logistic link on the true weights plus Gaussian noise.
    """
    if n_rows < 1:
        raise DomainError("n_rows must be >= 1")
    rng = make_stream(master_seed, StreamPurpose.SURVEY, seed)
    categories = sorted(true_weights)
    w = np.array([true_weights[c] for c in categories])
    X = rng.uniform(0.0, feature_scale, size=(n_rows, len(categories)))
    eta = intercept + X @ w + rng.normal(0.0, noise, size=n_rows)
    labels = (rng.random(n_rows) < expit(eta)).astype(int)
    return [
        SurveyRow(
            features={c: float(X[i, j]) for j, c in enumerate(categories)},
            satisfied=int(labels[i]),
        )
        for i in range(n_rows)
    ]


def fit_report_to_dict(report: FitReport) -> dict[str, Any]:
    return {
        "categories": list(report.categories),
        "coefficients": dict(report.coefficients),
        "intercept": report.intercept,
        "weights": dict(report.weights.weights),
        "iterations": report.iterations,
        "gradient_norm": report.gradient_norm,
        "l2_lambda": report.l2_lambda,
        "n_rows": report.n_rows,
    }


def write_fit_report(path: Union[str, Path], report: FitReport) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as f:
        yaml.safe_dump(fit_report_to_dict(report), f, sort_keys=True)
    return target
