"""Classical group statistics, scatter matrices and the Qn scale."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .linalg import as_symmetric

QN_CONSTANT = 2.2219


@dataclass(frozen=True)
class LabeledDataset:
    """An ``n x p`` data matrix with group labels ``1..g``.

    Every group index in ``1..g`` must be used at least once. Use
    :meth:`from_raw` to map arbitrary class labels to ``1..g``.
    """

    x: np.ndarray
    labels: np.ndarray
    classes: tuple = ()
    columns: tuple = ()

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        labels = np.asarray(self.labels)
        if x.ndim != 2:
            raise ValidationError("x must be a 2-d array")
        if labels.shape != (x.shape[0],):
            raise ValidationError("labels must have one entry per row of x")
        if not np.all(np.isfinite(x)):
            raise ValidationError("x contains non-finite values")
        if labels.size == 0:
            raise ValidationError("dataset is empty")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ValidationError("labels must be integers 1..g")
        labels = labels.astype(int)
        g = int(labels.max())
        if labels.min() < 1:
            raise ValidationError("labels must be integers 1..g")
        counts = np.bincount(labels, minlength=g + 1)[1:]
        if np.any(counts == 0):
            missing = [j + 1 for j in np.flatnonzero(counts == 0)]
            raise ValidationError(f"empty group(s): {missing}")
        x.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)
        if not self.classes:
            object.__setattr__(self, "classes", tuple(range(1, g + 1)))

    @classmethod
    def from_raw(cls, x, raw_labels, columns: Sequence[str] = ()) -> "LabeledDataset":
        classes, labels = np.unique(np.asarray(raw_labels), return_inverse=True)
        return cls(x, labels + 1, classes=tuple(classes.tolist()), columns=tuple(columns))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def g(self) -> int:
        return int(self.labels.max())

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.g + 1)[1:]

    def group(self, j: int) -> np.ndarray:
        """Rows of group ``j`` (1-based)."""
        return self.x[self.labels == j]

    def subset(self, rows) -> "LabeledDataset":
        return LabeledDataset(self.x[rows], self.labels[rows], self.classes, self.columns)

    def project(self, v) -> "LabeledDataset":
        return LabeledDataset(self.x @ np.asarray(v), self.labels, self.classes)


@dataclass(frozen=True)
class GroupModel:
    mu: np.ndarray
    sigma: np.ndarray
    prior: float = 1.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = as_symmetric(np.atleast_2d(self.sigma), "sigma")
        if sigma.shape != (mu.size, mu.size):
            raise ValidationError("sigma shape does not match mu")
        if not 0 < self.prior <= 1:
            raise ValidationError("prior must lie in (0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class ScatterPair:
    """Between/within scatter pair used by both reducers.

    ``means`` (g x p) and ``weights`` (group proportions) are kept alongside
    the matrices because the classifiers need them.
    """

    b: np.ndarray
    w: np.ndarray
    s_pooled: np.ndarray
    counts: np.ndarray | None
    source: str
    means: np.ndarray | None = None
    weights: np.ndarray | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def p(self) -> int:
        return self.b.shape[0]

    @property
    def overall_mean(self) -> np.ndarray:
        return self.weights @ self.means

    def compress(self, gamma: np.ndarray) -> "ScatterPair":
        """Pair expressed in the coordinates ``x -> gamma^T x``."""
        return ScatterPair(
            gamma.T @ self.b @ gamma,
            gamma.T @ self.w @ gamma,
            gamma.T @ self.s_pooled @ gamma,
            self.counts,
            self.source,
            None if self.means is None else self.means @ gamma,
            self.weights,
            dict(self.extra),
        )


@dataclass(frozen=True)
class GroupStats:
    means: np.ndarray  # g x p
    covs: list  # per group p x p, or None when n_j < 2
    counts: np.ndarray
    overall_mean: np.ndarray


def group_stats(d: LabeledDataset) -> GroupStats:
    means, covs = [], []
    for j in range(1, d.g + 1):
        xj = d.group(j)
        means.append(xj.mean(axis=0))
        covs.append(np.cov(xj, rowvar=False, ddof=1).reshape(d.p, d.p) if len(xj) >= 2 else None)
    means = np.array(means)
    counts = d.counts
    overall = (counts / d.n) @ means
    return GroupStats(means, covs, counts, overall)


def classical_scatter(d: LabeledDataset) -> ScatterPair:
    """Classical ``B`` and ``W`` with the ``1/n`` convention.

    ``S_pooled = n / (n - g) * W``; it is undefined (all NaN) when every
    group is a single observation.
    """
    n, g = d.n, d.g
    st = group_stats(d)
    dev = st.means - st.overall_mean
    b = (dev.T * st.counts) @ dev / n
    resid = d.x - st.means[d.labels - 1]
    w = resid.T @ resid / n
    if g < 2:
        warnings.warn("only one group: between scatter is zero", UserWarning)
        b = np.zeros_like(w)
    b = 0.5 * (b + b.T)
    w = 0.5 * (w + w.T)
    s_pooled = w * (n / (n - g)) if n > g else np.full_like(w, np.nan)
    return ScatterPair(b, w, s_pooled, st.counts, "classical", st.means, st.counts / n)


def check_priors(models: Sequence[GroupModel]) -> np.ndarray:
    priors = np.array([m.prior for m in models], dtype=float)
    if abs(priors.sum() - 1.0) > 1e-12:
        raise ValidationError(f"priors sum to {priors.sum()!r}, not 1")
    if len({m.p for m in models}) != 1:
        raise ValidationError("group models have different dimensions")
    return priors


def _check_spd_models(models: Sequence[GroupModel]) -> None:
    for j, m in enumerate(models, start=1):
        lam = np.linalg.eigvalsh(m.sigma)
        if lam[0] <= 0:
            raise ValidationError(f"covariance of group {j} is not positive definite")


def theoretical_scatter(models: Sequence[GroupModel]) -> ScatterPair:
    """Population ``B = sum p_j (mu_j - mu)(mu_j - mu)^T`` and ``W = sum p_j Sigma_j``."""
    priors = check_priors(models)
    _check_spd_models(models)
    mus = np.array([m.mu for m in models])
    mu = priors @ mus
    dev = mus - mu
    b = (dev.T * priors) @ dev
    w = sum(p * m.sigma for p, m in zip(priors, models))
    b = 0.5 * (b + b.T)
    w = 0.5 * (w + w.T)
    return ScatterPair(b, w, w.copy(), None, "theoretical", mus, priors)


def qn_scale(x) -> float:
    """Qn scale estimate, ``2.2219 * d_(k)`` over pairwise absolute differences.

    ``k = C(h, 2)`` with ``h = n // 2 + 1``. No small-sample correction.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValidationError("qn_scale needs at least two values")
    h = n // 2 + 1
    k = math.comb(h, 2)
    return QN_CONSTANT * kth_pairwise_difference(x, k)


def _row_blocks(xs: np.ndarray, block: int = 256):
    n = xs.size
    for i0 in range(0, n - 1, block):
        rows = xs[i0:i0 + block, None]
        diffs = xs[None, i0:] - rows
        # keep only j > i
        mask = np.arange(i0, n)[None, :] > np.arange(i0, min(i0 + block, n))[:, None]
        yield diffs, mask


def kth_pairwise_difference(x, k: int, direct_limit: int = 4000) -> float:
    """k-th smallest (1-based) of ``|x_i - x_j|`` over pairs i < j.

    Small inputs enumerate all pairs; large ones bisect on the value with
    exact block-wise counting so memory stays O(n).
    """
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    n = xs.size
    if not 1 <= k <= n * (n - 1) // 2:
        raise ValidationError("k out of range")
    if n <= direct_limit:
        vals = np.concatenate([xs[i + 1:] - xs[i] for i in range(n - 1)])
        return float(np.partition(vals, k - 1)[k - 1])

    def count_le(t):
        return sum(int(np.count_nonzero((d <= t) & m)) for d, m in _row_blocks(xs))

    lo, hi = 0.0, float(xs[-1] - xs[0])
    if count_le(lo) >= k:
        return 0.0
    # invariant: count_le(lo) < k <= count_le(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if count_le(mid) >= k:
            hi = mid
        else:
            lo = mid
    # smallest actual difference in (lo, hi]
    best = hi
    for d, m in _row_blocks(xs):
        sel = d[m & (d > lo) & (d <= hi)]
        if sel.size:
            best = min(best, float(sel.min()))
    return best
