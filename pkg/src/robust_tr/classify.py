"""Classification rules in the full space and in projected spaces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .linalg import as_symmetric
from .moments import GroupModel, LabeledDataset, ScatterPair, check_priors
from .reduce import Projection
from .robust import RobustConfig, robust_scatter


@dataclass(frozen=True)
class ClassifierModel:
    """Centers, metric and log-priors of a projected (or full-space) rule.

    ``cov`` is ``None`` for the Euclidean metric. Predicted labels are
    ``1..g``.
    """

    centers: np.ndarray  # g x k
    log_priors: np.ndarray
    metric: str = "euclidean"
    cov: np.ndarray | None = None
    projection: Projection | None = None

    def __post_init__(self):
        if self.centers.shape[0] != self.log_priors.size:
            raise ValidationError("one center per group is required")
        if self.metric == "mahalanobis":
            if self.cov is None or np.linalg.eigvalsh(self.cov)[0] <= 0:
                raise ValidationError("Mahalanobis metric needs an SPD covariance")
        elif self.metric != "euclidean":
            raise ValidationError(f"unknown metric {self.metric!r}")

    @property
    def g(self) -> int:
        return self.centers.shape[0]


def _rows(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValidationError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _argmin_labels(scores: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, so ties go to the lowest group
    return np.argmin(scores, axis=1) + 1


def _sq_mahalanobis(x: np.ndarray, centers: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    out = np.empty((x.shape[0], centers.shape[0]))
    for i, c in enumerate(centers):
        z = np.linalg.solve(chol, (x - c).T)
        out[:, i] = np.sum(z * z, axis=0)
    return out


def score(model: ClassifierModel, x) -> np.ndarray:
    """Discriminant scores (smaller is better), one column per group."""
    if model.projection is not None:
        u = _rows(x, model.projection.v.shape[0]) @ model.projection.v
    else:
        u = _rows(x, model.centers.shape[1])
    if model.metric == "euclidean":
        d2 = ((u[:, None, :] - model.centers[None]) ** 2).sum(axis=2)
    else:
        d2 = _sq_mahalanobis(u, model.centers, model.cov)
    return d2 - 2.0 * model.log_priors


def predict(model: ClassifierModel, x) -> np.ndarray:
    return _argmin_labels(score(model, x))


def nearest_projected_mean_train(d: LabeledDataset, proj: Projection) -> ClassifierModel:
    """Euclidean nearest projected group mean with log-prior correction ``log(n_j / n)``."""
    if proj.v.shape[0] != d.p:
        raise ValidationError(f"projection is for p={proj.v.shape[0]}, data has p={d.p}")
    means = np.array([d.group(j).mean(axis=0) for j in range(1, d.g + 1)])
    return ClassifierModel(means @ proj.v, np.log(d.counts / d.n), "euclidean", None, proj)


def nearest_projected_mean_predict(model: ClassifierModel, x) -> np.ndarray:
    return predict(model, x)


def _common_cov(models: Sequence[GroupModel], cov) -> np.ndarray:
    if cov is not None:
        return as_symmetric(cov, "cov")
    first = models[0].sigma
    for m in models[1:]:
        if np.abs(m.sigma - first).max() > 1e-12 * (1 + np.abs(first).max()):
            raise ValidationError("lda_rule needs a common covariance; pass cov= explicitly")
    return first


def lda_rule(x, models: Sequence[GroupModel], cov=None) -> np.ndarray:
    """Plug-in linear discriminant labels.

    ``argmin_i ||x - mu_i||^2_{Sigma^{-1}} - 2 log p_i``, with ``Sigma`` the
    shared covariance of ``models`` or ``cov`` when given.
    """
    priors = check_priors(models)
    sigma = _common_cov(models, cov)
    lam = np.linalg.eigvalsh(sigma)
    if lam[0] <= 1e-12 * max(lam[-1], 0.0) or lam[0] <= 0:
        raise ValidationError("covariance is singular")
    mus = np.array([m.mu for m in models])
    x = _rows(x, mus.shape[1])
    return _argmin_labels(_sq_mahalanobis(x, mus, sigma) - 2.0 * np.log(priors))


def qda_rule(x, models: Sequence[GroupModel]) -> np.ndarray:
    """Quadratic discriminant labels from per-group Gaussian models."""
    priors = check_priors(models)
    x = _rows(x, models[0].p)
    scores = np.empty((x.shape[0], len(models)))
    for i, m in enumerate(models):
        try:
            chol = np.linalg.cholesky(m.sigma)
        except np.linalg.LinAlgError:
            raise ValidationError(f"covariance of group {i + 1} is not positive definite") from None
        z = np.linalg.solve(chol, (x - m.mu).T)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        scores[:, i] = np.sum(z * z, axis=0) + logdet - 2.0 * np.log(priors[i])
    return _argmin_labels(scores)


def reduced_rank_lda_params(s: ScatterPair, proj: Projection, means=None):
    """Centroids and covariance of rank-``k`` LDA.

    ``mu_i = S V V^T xbar_i + (I - S V V^T) xbar`` and
    ``Sigma = S + (I - S V V^T) B (I - S V V^T)^T`` with ``S = S_pooled``.
    The projection must satisfy ``V^T S_pooled V = I``.
    """
    if proj.scaling != "s_pooled":
        raise ValidationError("reduced-rank LDA needs a projection with S_pooled scaling")
    v = proj.v
    if np.abs(v.T @ s.s_pooled @ v - np.eye(v.shape[1])).max() > 1e-8:
        raise ValidationError("projection is not S_pooled-orthonormal for this scatter pair")
    means = s.means if means is None else np.asarray(means, dtype=float)
    xbar = s.weights @ means
    svvt = s.s_pooled @ v @ v.T
    resid = np.eye(s.p) - svvt
    mu_hat = means @ svvt.T + resid @ xbar
    sigma_hat = s.s_pooled + resid @ s.b @ resid.T
    return mu_hat, 0.5 * (sigma_hat + sigma_hat.T)


def robust_projected_train(d: LabeledDataset, proj: Projection, cfg: RobustConfig = RobustConfig()) -> ClassifierModel:
    """Robust LDA in the projected space.

    Each projected group gets an MCD (or MRCD) location; the covariance is
    the pooled robust within scatter with weights ``(n_j - 1) / (n - g)``.
    """
    if proj.v.shape[0] != d.p:
        raise ValidationError(f"projection is for p={proj.v.shape[0]}, data has p={d.p}")
    rs = robust_scatter(d.project(proj.v), cfg)
    return ClassifierModel(rs.means, np.log(d.counts / d.n), "mahalanobis", rs.w, proj)


def robust_projected_predict(model: ClassifierModel, x) -> np.ndarray:
    return predict(model, x)


def accuracy(labels_true, labels_pred) -> float:
    labels_true = np.asarray(labels_true)
    return float(np.mean(labels_true == np.asarray(labels_pred)))
