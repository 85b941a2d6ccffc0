"""Gaussian mixture contamination: sampling, exact moments and subspace bounds.

Group ``j`` is observed as ``Z_j = (1 - O_j) X_j + O_j Xc_j`` where
``O_j ~ Bernoulli(epsilon)``, ``X_j ~ N(mu_j, Sigma_j)`` is the clean model
and ``Xc_j ~ N(muc_j, Sigmac_j)`` the contaminating one. Groups without a
contaminating model are left clean.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import NumericalError, ValidationError
from .linalg import projector_distance, sym_eigvals
from .moments import GroupModel, LabeledDataset, ScatterPair, check_priors, theoretical_scatter
from .reduce import GAP_TOL, TrOptions, solve_tr


@dataclass(frozen=True)
class ContaminationSpec:
    """Contamination level and per-group contaminating models (``None`` = clean)."""

    epsilon: float
    contaminating: tuple

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must lie in [0, 1]")
        object.__setattr__(self, "contaminating", tuple(self.contaminating))

    @property
    def flags(self) -> tuple:
        """1-based indices of contaminated groups."""
        return tuple(j + 1 for j, m in enumerate(self.contaminating) if m is not None)

    def with_epsilon(self, epsilon: float) -> "ContaminationSpec":
        return ContaminationSpec(epsilon, self.contaminating)

    def shift(self, j: int, model: GroupModel) -> np.ndarray:
        """``Delta_j = muc_j - mu_j`` (zero for clean groups)."""
        c = self.contaminating[j - 1]
        return np.zeros(model.p) if c is None else c.mu - model.mu

    def check(self, models: Sequence[GroupModel]) -> None:
        if len(self.contaminating) != len(models):
            raise ValidationError("one contaminating entry (or None) per group is required")
        for m, c in zip(models, self.contaminating):
            if c is not None and c.p != m.p:
                raise ValidationError("contaminating model has the wrong dimension")


def contaminated_group_moments(model: GroupModel, contaminating: GroupModel | None, epsilon: float):
    """Mean and covariance of one contaminated group.

    ``E = mu + eps Delta`` and
    ``Var = Sigma + eps (Sigmac - Sigma) + eps (1 - eps) Delta Delta^T``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError("epsilon must lie in [0, 1]")
    if contaminating is None:
        return model.mu.copy(), model.sigma.copy()
    delta = contaminating.mu - model.mu
    mean = model.mu + epsilon * delta
    var = model.sigma + epsilon * (contaminating.sigma - model.sigma) + epsilon * (1 - epsilon) * np.outer(delta, delta)
    return mean, 0.5 * (var + var.T)


def contaminated_scatter(models: Sequence[GroupModel], spec: ContaminationSpec) -> ScatterPair:
    """Exact between/within scatter of the contaminated population.

    ``W_Z = W + eps sum p_j (Sigmac_j - Sigma_j) + eps (1 - eps) sum p_j Delta_j Delta_j^T``
    ``B_Z = B + eps sum p_j [delta_j (Delta_j - Dbar)^T + (Delta_j - Dbar) delta_j^T]
    + eps^2 sum p_j (Delta_j - Dbar)(Delta_j - Dbar)^T``
    with ``delta_j = mu_j - mu`` and ``Dbar = sum p_j Delta_j``.
    """
    priors = check_priors(models)
    spec.check(models)
    clean = theoretical_scatter(models)
    eps = spec.epsilon
    mus = np.array([m.mu for m in models])
    deltas = np.array([spec.shift(j, m) for j, m in enumerate(models, start=1)])
    dbar = priors @ deltas
    small = mus - priors @ mus
    dd = deltas - dbar
    w = clean.w.copy()
    for j, (m, c) in enumerate(zip(models, spec.contaminating)):
        if c is not None:
            w += priors[j] * (eps * (c.sigma - m.sigma) + eps * (1 - eps) * np.outer(deltas[j], deltas[j]))
    cross = (small.T * priors) @ dd
    b = clean.b + eps * (cross + cross.T) + eps**2 * (dd.T * priors) @ dd
    b = 0.5 * (b + b.T)
    w = 0.5 * (w + w.T)
    means = mus + eps * deltas
    return ScatterPair(b, w, w.copy(), None, "contaminated-theoretical", means, priors)


def first_order_one_group(models: Sequence[GroupModel], spec: ContaminationSpec):
    """Terms of ``B_Z - B`` and ``W_Z - W`` linear in ``eps`` when only group 1 is contaminated.

    ``dW = eps p_1 [(Sigmac_1 - Sigma_1) + Delta_1 Delta_1^T]`` and
    ``dB = eps p_1 (delta_1 Delta_1^T + Delta_1 delta_1^T)``.
    """
    priors = check_priors(models)
    spec.check(models)
    if spec.flags != (1,):
        raise ValidationError(f"first-order expansion needs only group 1 contaminated, got {spec.flags}")
    eps, p1 = spec.epsilon, priors[0]
    c, m = spec.contaminating[0], models[0]
    delta = c.mu - m.mu
    small = m.mu - priors @ np.array([g.mu for g in models])
    dw = eps * p1 * ((c.sigma - m.sigma) + np.outer(delta, delta))
    db = eps * p1 * (np.outer(small, delta) + np.outer(delta, small))
    return db, dw


@dataclass(frozen=True)
class PerturbationReport:
    """First-order bounds on ``||V V^T - Vt Vt^T||`` for the trace-ratio subspace.

    ``general`` uses the exact perturbations, ``general_first_order`` the
    linear terms with ``||W||`` in place of ``||W + dW||``.
    ``specialized`` is the closed form for one contaminated group with
    ``Sigmac_1 = Sigma_1`` written with ``p_1^2`` in the ``rho`` term;
    ``specialized_corrected`` uses ``p_1``, which is what the first-order
    terms give. ``bound_value`` is ``specialized`` when it applies and
    ``general`` otherwise.
    """

    delta_b: np.ndarray
    delta_w: np.ndarray
    sigma_bound: float
    gamma: float
    tau: float
    rho: float
    general: float
    general_first_order: float
    specialized: float
    specialized_corrected: float
    observed_angle_sin: float
    bound_value: float


def tr_perturbation_bound(
    models: Sequence[GroupModel], k: int, spec: ContaminationSpec, opts: TrOptions = TrOptions()
) -> PerturbationReport:
    """Compare the contaminated and clean trace-ratio subspaces with the bounds.

    ``rho`` and the gap ``gamma`` come from the clean problem.
    """
    clean = theoretical_scatter(models)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = solve_tr(clean, k, opts)
    scale = np.linalg.norm(clean.b, 2) + np.linalg.norm(clean.w, 2)
    if v.gap <= GAP_TOL * scale:
        raise NumericalError(f"clean trace-ratio solution is not unique (gap {v.gap:.3g}); bound does not apply")
    cont = contaminated_scatter(models, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vt = solve_tr(cont, k, opts)
    db = cont.b - clean.b
    dw = cont.w - clean.w
    rho, gamma = v.rho, v.gap
    lam_w = sym_eigvals(clean.w)
    tau = float(lam_w[-k:].sum())
    sigma = np.linalg.norm(db, 2) + rho * np.linalg.norm(dw, 2)
    general = 4 * sigma / gamma * (1 + k * np.linalg.norm(clean.w + dw, 2) / tau)

    spec_val = spec_corr = gen_first = math.nan
    eps = spec.epsilon
    if spec.flags == (1,):
        db1, dw1 = first_order_one_group(models, spec)
        s1 = np.linalg.norm(db1, 2) + rho * np.linalg.norm(dw1, 2)
        gen_first = 4 * s1 / gamma * (1 + k * np.linalg.norm(clean.w, 2) / tau)
        c1 = spec.contaminating[0]
        if np.allclose(c1.sigma, models[0].sigma, rtol=0, atol=1e-12):
            priors = check_priors(models)
            p1 = priors[0]
            d1 = np.linalg.norm(c1.mu - models[0].mu)
            s_1 = np.linalg.norm(models[0].mu - priors @ np.array([m.mu for m in models]))
            kappa = lam_w[0] / lam_w[-1]
            spec_val = 4 / gamma * eps * p1 * d1 * (2 * s_1 + p1 * rho * d1) * (1 + kappa)
            spec_corr = 4 / gamma * eps * p1 * d1 * (2 * s_1 + rho * d1) * (1 + kappa)
    observed = projector_distance(v.v, vt.v)
    bound = spec_val if not math.isnan(spec_val) else general
    return PerturbationReport(
        db, dw, float(sigma), float(gamma), tau, float(rho), float(general), float(gen_first),
        float(spec_val), float(spec_corr), float(observed), float(bound),
    )


def group_rng(seed, j: int) -> np.random.Generator:
    """Generator for group ``j`` under ``seed`` (an int or a tuple of ints)."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=(j,)))


def _gaussian(rng, model: GroupModel, m: int) -> np.ndarray:
    return model.mu + rng.standard_normal((m, model.p)) @ _chol(model.sigma).T


def _chol(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValidationError("covariance is not positive definite") from None


def sample_contaminated(
    models: Sequence[GroupModel],
    spec: ContaminationSpec | None,
    n_per_group,
    seed=0,
    return_mask: bool = False,
):
    """Draw ``n_per_group`` rows from each (possibly contaminated) group.

    Group ``j`` uses its own stream, see :func:`group_rng`: first ``n`` clean
    rows, then the Bernoulli indicators, then replacement rows from the
    contaminating model. The clean rows therefore do not depend on
    ``epsilon``.
    A ``UserWarning`` is emitted when the realised contamination fraction of
    a group is more than three standard errors away from ``epsilon``.
    """
    g = len(models)
    if spec is None:
        spec = ContaminationSpec(0.0, (None,) * g)
    spec.check(models)
    counts = np.broadcast_to(np.asarray(n_per_group, dtype=int), (g,))
    if np.any(counts < 1):
        raise ValidationError("every group needs at least one row")
    for m in models:
        _chol(m.sigma)
    eps = spec.epsilon
    xs, labels, masks = [], [], []
    for j, (m, c) in enumerate(zip(models, spec.contaminating), start=1):
        rng = group_rng(seed, j)
        n = int(counts[j - 1])
        x = _gaussian(rng, m, n)
        omega = np.zeros(n, dtype=bool)
        if c is not None and eps > 0:
            omega = rng.random(n) < eps
            if omega.any():
                x[omega] = _gaussian(rng, c, int(omega.sum()))
        if c is not None and 0 < eps < 1:
            se = math.sqrt(eps * (1 - eps) / n)
            if abs(omega.mean() - eps) > 3 * se:
                warnings.warn(
                    f"group {j}: contamination fraction {omega.mean():.3f} is far from epsilon={eps}",
                    UserWarning,
                    stacklevel=2,
                )
        xs.append(x)
        labels.append(np.full(n, j))
        masks.append(omega)
    d = LabeledDataset(np.vstack(xs), np.concatenate(labels))
    return (d, np.concatenate(masks)) if return_mask else d
