import logging
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy.optimize import minimize

from climadapt.exceptions import ConvergenceError, DomainError, FitError
from climadapt.qol import (
    FitConfig,
    QoLWeights,
    SurveyRow,
    fit_weights,
    gradient,
    nll,
    qol,
    synthesize_survey,
    weights_from_config,
    write_fit_report,
)
from climadapt.transport import AccessProfile


def _rows(X: np.ndarray, y: np.ndarray, names: tuple[str, ...] = ("a", "b")) -> list[SurveyRow]:
    return [
        SurveyRow(features={n: float(v) for n, v in zip(names, x)}, satisfied=int(label))
        for x, label in zip(X, y)
    ]


def test_qol_of_zero_profile() -> None:
    weights = QoLWeights({"park": 0.3, "shop": 0.7})

    assert qol(AccessProfile("Z", {"park": 0.0, "shop": 0.0}), weights) == 0.0


def test_qol_weighted_sum() -> None:
    weights = QoLWeights({"park": 0.3, "shop": 0.7})

    assert qol(AccessProfile("Z", {"park": 0.5, "shop": 1.0}), weights) == pytest.approx(0.85)


def test_qol_matches_summation() -> None:
    rng = np.random.default_rng(8)
    for _ in range(50):
        names = [f"c{i}" for i in range(int(rng.integers(1, 6)))]
        w = dict(zip(names, rng.normal(size=len(names))))
        values = dict(zip(names, rng.uniform(0.0, 3.0, size=len(names))))
        expected = sum(w[c] * values[c] for c in names)
        assert qol(AccessProfile("Z", values), QoLWeights(w)) == pytest.approx(
            expected, rel=1e-12, abs=1e-12
        )


def test_qol_needs_weight_per_category() -> None:
    with pytest.raises(DomainError, match="clinic"):
        qol(AccessProfile("Z", {"clinic": 1.0}), QoLWeights({"park": 1.0}))


def test_toy_weights_are_kept(toy_scenario) -> None:
    assert dict(toy_scenario.weights.weights) == {"park": 0.2, "shop": 0.5, "clinic": 0.3}


def test_config_weights_are_normalized(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING):
        weights = weights_from_config({"park": 2.0, "shop": -2.0})

    assert dict(weights.weights) == {"park": 0.5, "shop": -0.5}
    assert "normalizing" in caplog.text


def test_normalizing_all_zero_fails() -> None:
    with pytest.raises(FitError):
        QoLWeights.normalized({"park": 0.0})


def test_gradient_matches_finite_differences() -> None:
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 3))
    y = (rng.random(30) < 0.5).astype(float)
    beta = rng.normal(size=4)
    eps = 1e-6

    numeric = np.array(
        [
            (nll(beta + eps * e, X, y, 0.7) - nll(beta - eps * e, X, y, 0.7)) / (2 * eps)
            for e in np.eye(4)
        ]
    )

    np.testing.assert_allclose(gradient(beta, X, y, 0.7), numeric, rtol=1e-5, atol=1e-5)


def test_mirrored_features_get_opposite_weights() -> None:
    x = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    y = np.array([0, 0, 1, 0, 1, 0, 1, 1])
    X = np.column_stack([x, -x])

    report = fit_weights(_rows(X, y), FitConfig(l2_lambda=1.0))

    assert report.weights.weights["a"] == pytest.approx(0.5, abs=1e-9)
    assert report.weights.weights["b"] == pytest.approx(-0.5, abs=1e-9)


def test_intercept_only_on_balanced_labels() -> None:
    rows = [SurveyRow(features={}, satisfied=label) for label in (0, 1, 0, 1)]

    report = fit_weights(rows)

    assert report.intercept == pytest.approx(0.0, abs=1e-12)
    assert dict(report.weights.weights) == {}


def test_fit_matches_direct_minimization() -> None:
    rng = np.random.default_rng(40)
    X = rng.normal(size=(40, 2))
    y = (rng.random(40) < 1.0 / (1.0 + np.exp(-(X @ [1.5, -0.5])))).astype(int)

    report = fit_weights(_rows(X, y), FitConfig(l2_lambda=1.0))

    def objective(b: np.ndarray) -> float:
        eta = X @ b[:2] + b[2]
        return float(np.sum(np.log1p(np.exp(eta)) - y * eta) + 0.5 * (b[0] ** 2 + b[1] ** 2))

    oracle = minimize(objective, np.zeros(3), method="Nelder-Mead",
                      options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20_000})
    assert report.coefficients["a"] == pytest.approx(oracle.x[0], abs=1e-3)
    assert report.coefficients["b"] == pytest.approx(oracle.x[1], abs=1e-3)
    assert report.intercept == pytest.approx(oracle.x[2], abs=1e-3)
    assert sum(abs(w) for w in report.weights.weights.values()) == pytest.approx(1.0)


def test_single_class_survey_fails() -> None:
    rows = [SurveyRow(features={"a": float(i)}, satisfied=1) for i in range(5)]

    with pytest.raises(FitError, match="both labels"):
        fit_weights(rows)


def test_empty_survey_fails() -> None:
    with pytest.raises(FitError, match="empty"):
        fit_weights([])


def test_non_convergence_reports_gradient() -> None:
    rows = synthesize_survey({"a": 2.0, "b": -1.0}, 60, master_seed=1)

    with pytest.raises(ConvergenceError) as excinfo:
        fit_weights(rows, FitConfig(max_iterations=1, tolerance=1e-15))

    assert excinfo.value.iterations == 1
    assert excinfo.value.gradient_norm > 0.0


def test_synthetic_survey_recovers_signs() -> None:
    first = synthesize_survey({"park": 3.0, "shop": -3.0}, 400, master_seed=5, feature_scale=2.0)
    second = synthesize_survey({"park": 3.0, "shop": -3.0}, 400, master_seed=5, feature_scale=2.0)

    assert first == second
    report = fit_weights(first, FitConfig(l2_lambda=0.1))
    assert report.weights.weights["park"] > 0 > report.weights.weights["shop"]


def test_toy_survey_fits(toy_scenario) -> None:
    report = fit_weights(list(toy_scenario.survey))

    assert report.n_rows == 16
    assert report.categories == ["clinic", "park", "shop"]
    assert sum(abs(w) for w in report.weights.weights.values()) == pytest.approx(1.0)


def test_fit_report_written_as_yaml(tmp_path: Path) -> None:
    report = fit_weights(synthesize_survey({"a": 1.0}, 50, master_seed=3))

    path = write_fit_report(tmp_path / "fit" / "weights.yml", report)
    data = yaml.safe_load(path.read_text())

    assert data["n_rows"] == 50
    assert abs(data["weights"]["a"]) == pytest.approx(1.0)


def test_coefficient_norm_shrinks_along_lambda_path() -> None:
    rows = synthesize_survey(
        {"clinic": 2.0, "park": -1.0, "shop": 0.5}, 300, master_seed=11, feature_scale=2.0
    )

    norms = []
    for l2_lambda in (0.001, 0.01, 0.1, 1.0, 10.0, 100.0):
        cfg = FitConfig(l2_lambda=l2_lambda, max_iterations=1000, tolerance=1e-10)
        report = fit_weights(rows, cfg)
        norms.append(float(np.linalg.norm(list(report.coefficients.values()))))

    assert all(later <= earlier + 1e-6 for earlier, later in zip(norms, norms[1:]))
    assert norms[-1] < norms[0]


@pytest.mark.parametrize("scale", [0.01, 3.0, 1e4])
def test_zone_ranking_ignores_positive_weight_scale(scale: float) -> None:
    rng = np.random.default_rng(12)
    names = ["clinic", "park", "shop"]
    weights = dict(zip(names, rng.normal(size=3)))
    profiles = [
        AccessProfile(f"z{i}", dict(zip(names, rng.uniform(0.0, 2.0, size=3))))
        for i in range(8)
    ]

    def ranking(w: dict[str, float]) -> list[str]:
        scores = {p.zone_id: qol(p, QoLWeights(w)) for p in profiles}
        return sorted(scores, key=lambda z: (-scores[z], z))

    assert ranking(weights) == ranking({c: scale * v for c, v in weights.items()})
