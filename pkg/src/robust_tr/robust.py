"""Robust location/scatter: fast-MCD, regularised MCD (MRCD) and robust B/W.

The fast-MCD recipe used here: ``n_initial_subsets`` random elemental
``(p+1)``-subsets, two concentration steps (C-steps) each, then the
``n_cstep_candidates`` best are iterated to convergence. The raw covariance
of the winning ``h``-subset is multiplied by the chi-square consistency
factor; no reweighting step is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .exceptions import InvariantViolation, NumericalError, ValidationError
from .moments import LabeledDataset, ScatterPair, qn_scale

MONOTONE_TOL = 1e-9
MAX_CSTEPS = 200


def default_rho_grid() -> tuple:
    return tuple(np.round(np.linspace(0.0, 1.0, 101), 2).tolist())


@dataclass(frozen=True)
class RobustConfig:
    alpha: float = 0.75
    n_initial_subsets: int = 500
    n_cstep_candidates: int = 10
    condition_cap: float = 1000.0
    rho_grid: tuple = field(default_factory=default_rho_grid)
    seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.alpha <= 1:
            raise ValidationError("alpha must lie in [0.5, 1]")
        if self.n_initial_subsets < 1 or self.n_cstep_candidates < 1:
            raise ValidationError("subset counts must be positive")
        grid = np.asarray(self.rho_grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
            raise ValidationError("rho_grid must be ascending values in [0, 1]")

    def h(self, n: int) -> int:
        return min(n, int(math.ceil(self.alpha * n)))


@dataclass(frozen=True)
class RobustEstimate:
    mu_tilde: np.ndarray
    sigma_tilde: np.ndarray
    support: np.ndarray
    rho: float
    objective: float
    method: str = "mcd"
    condition: float = float("nan")
    cstep_trace: tuple = ()  # log-determinants along the winner's C-steps


def consistency_factor(alpha: float, p: int) -> float:
    """``alpha / F_{chi2(p+2)}(q_alpha)`` with ``q_alpha`` the chi2(p) alpha-quantile."""
    if alpha >= 1:
        return 1.0
    q = stats.chi2.ppf(alpha, p)
    return float(alpha / stats.chi2.cdf(q, p + 2))


def _rng_for(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


class _Rows:
    """Centred data plus row-wise outer products, so subset moments and
    Mahalanobis distances for many subsets reduce to matrix products."""

    def __init__(self, x: np.ndarray):
        self.shift = x.mean(axis=0)
        self.x = x - self.shift
        n, p = self.x.shape
        self.outer = np.einsum("ni,nj->nij", self.x, self.x).reshape(n, p * p)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def moments(self, idx: np.ndarray):
        """Means (S, p) and covariances (S, p, p), divisor m - 1, of row subsets."""
        s, m = idx.shape
        ind = np.zeros((s, self.n))
        np.put_along_axis(ind, idx, 1.0, axis=1)
        means = ind @ self.x / m
        second = (ind @ self.outer).reshape(s, self.p, self.p)
        covs = (second - m * means[:, :, None] * means[:, None, :]) / (m - 1)
        return means, 0.5 * (covs + covs.transpose(0, 2, 1))

    def sq_distances(self, means: np.ndarray, scatters: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distances of every row, for S (mean, scatter) pairs."""
        inv = np.linalg.inv(scatters)
        inv = 0.5 * (inv + inv.transpose(0, 2, 1))
        s, p = means.shape
        am = np.einsum("sij,sj->si", inv, means)
        d = inv.reshape(s, p * p) @ self.outer.T
        d -= 2.0 * am @ self.x.T
        d += np.einsum("si,si->s", am, means)[:, None]
        return d


class _Objective:
    """Scatter used for distances and its log-determinant.

    ``rho = 0`` gives the plain MCD objective; otherwise the regularised
    ``rho * T + (1 - rho) * c * S`` in standardised coordinates (T = I).
    """

    def __init__(self, c: float, rho: float = 0.0):
        self.c = c
        self.rho = rho

    def scatter(self, covs: np.ndarray) -> np.ndarray:
        if self.rho == 0.0:
            return self.c * covs
        p = covs.shape[-1]
        return self.rho * np.eye(p) + (1.0 - self.rho) * self.c * covs

    def logdet(self, covs: np.ndarray) -> np.ndarray:
        sign, ld = np.linalg.slogdet(self.scatter(covs))
        return np.where(sign > 0, ld, -np.inf)


def _h_smallest(d: np.ndarray, h: int) -> np.ndarray:
    n = d.shape[1]
    if h >= n:
        return np.tile(np.arange(n), (d.shape[0], 1))
    part = np.argpartition(d, h - 1, axis=1)[:, :h]
    return np.sort(part, axis=1)


def _cstep(rows: _Rows, means, covs, h, obj: _Objective):
    """One concentration step from subsets with known moments."""
    new_idx = _h_smallest(rows.sq_distances(means, obj.scatter(covs)), h)
    new_means, new_covs = rows.moments(new_idx)
    return new_idx, new_means, new_covs, obj.logdet(new_covs)


def _check_monotone(before: np.ndarray, after: np.ndarray) -> None:
    slack = MONOTONE_TOL * np.maximum(1.0, np.abs(before))
    bad = np.isfinite(before) & (after > before + slack)
    if np.any(bad):
        raise InvariantViolation(
            f"C-step increased the covariance determinant ({before[bad][0]!r} -> {after[bad][0]!r})"
        )


def _concentrate(rows: _Rows, means, covs, h, obj: _Objective, n_candidates: int):
    """Two warm-up C-steps on every start, then iterate the best to convergence.

    ``means``/``covs`` describe the starting subsets (any size); the first
    step turns each into an h-subset. Returns (support, logdet, trace).
    """
    idx, means, covs, ld = _cstep(rows, means, covs, h, obj)
    traces = [[float(v)] for v in ld]
    for _ in range(2):
        idx, means, covs, new_ld = _cstep(rows, means, covs, h, obj)
        _check_monotone(ld, new_ld)
        ld = new_ld
        for t, v in zip(traces, ld):
            t.append(float(v))

    # distinct finalists, best objective first (stable: lower start index wins)
    order = np.argsort(ld, kind="stable")
    chosen, seen = [], set()
    for s in order:
        key = idx[s].tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(s)
        if len(chosen) == n_candidates:
            break
    best = None
    for s in chosen:
        cur, cur_ld, trace = idx[s : s + 1], ld[s : s + 1], traces[s]
        cur_means, cur_covs = means[s : s + 1], covs[s : s + 1]
        for _ in range(MAX_CSTEPS):
            if not np.isfinite(cur_ld[0]):
                break
            nxt, cur_means, cur_covs, nxt_ld = _cstep(rows, cur_means, cur_covs, h, obj)
            _check_monotone(cur_ld, nxt_ld)
            trace.append(float(nxt_ld[0]))
            done = np.array_equal(nxt, cur)
            cur, cur_ld = nxt, nxt_ld
            if done:
                break
        if best is None or cur_ld[0] < best[1]:
            best = (cur[0], float(cur_ld[0]), tuple(trace))
    return best


def _draw_elemental(rng, n, m, count):
    keys = rng.random((count, n))
    if m >= n:
        return np.tile(np.arange(n), (count, 1))
    return np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m], axis=1)


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or not np.all(np.isfinite(x)):
        raise ValidationError("x must be a finite 2-d array")
    return x


def fast_mcd(x, cfg: RobustConfig = RobustConfig(), rng: np.random.Generator | None = None) -> RobustEstimate:
    """Minimum covariance determinant location and scatter.

    Requires ``n >= 2 (p + 1)``; use :func:`mrcd` otherwise. Elemental subsets
    whose covariance is singular are redrawn; if that keeps happening a
    :class:`NumericalError` is raised.
    """
    x = _as_matrix(x)
    n, p = x.shape
    if n < 2 * (p + 1):
        raise ValidationError(f"fast_mcd needs n >= 2(p+1) (n={n}, p={p}); use mrcd")
    h = cfg.h(n)
    if h < p + 1:
        raise ValidationError("h-subset too small for a nonsingular covariance")
    if rng is None:
        rng = _rng_for(cfg.seed)
    rows = _Rows(x)

    starts = _draw_elemental(rng, n, p + 1, cfg.n_initial_subsets)
    for _ in range(50):
        means, covs = rows.moments(starts)
        lam = np.linalg.eigvalsh(covs)
        bad = (lam[:, -1] <= 0) | (lam[:, 0] <= 1e-12 * np.abs(lam[:, -1]))
        if not bad.any():
            break
        starts[bad] = _draw_elemental(rng, n, p + 1, int(bad.sum()))
    else:
        raise NumericalError("could not draw nonsingular elemental subsets (data may be degenerate)")

    support, ld, trace = _concentrate(rows, means, covs, h, _Objective(1.0), cfg.n_cstep_candidates)
    if not np.isfinite(ld):
        raise NumericalError("exact fit: an h-subset has singular covariance; use mrcd")
    xs = x[support]
    mu = xs.mean(axis=0)
    sigma = consistency_factor(cfg.alpha, p) * np.atleast_2d(np.cov(xs, rowvar=False, ddof=1))
    lam = np.linalg.eigvalsh(sigma)
    return RobustEstimate(mu, sigma, support, 0.0, ld, "mcd", float(lam[-1] / lam[0]), trace)


def _smallest_feasible_rho(eigs: np.ndarray, grid: np.ndarray, cap: float) -> float:
    """Smallest grid rho with cond(rho I + (1 - rho) diag(eigs)) <= cap."""
    top, bottom = eigs.max(), max(eigs.min(), 0.0)
    for rho in grid:
        lo = rho + (1 - rho) * bottom
        if lo > 0 and (rho + (1 - rho) * top) / lo <= cap:
            return float(rho)
    return float(grid[-1])


def mrcd(x, cfg: RobustConfig = RobustConfig(), rng: np.random.Generator | None = None) -> RobustEstimate:
    """Regularised MCD, usable for any ``n >= 4`` and any ``p``.

    The scatter of an h-subset is ``rho * T + (1 - rho) * c * S_H`` with
    ``T = diag(Qn_1^2, ..., Qn_p^2)``. ``rho`` is the smallest value in
    ``cfg.rho_grid`` keeping the condition number (in Qn-standardised
    coordinates) below ``cfg.condition_cap`` for every candidate subset.
    When plain MCD is applicable and already well conditioned the result is
    exactly :func:`fast_mcd` with the same seed.
    """
    x = _as_matrix(x)
    n, p = x.shape
    if n < 4:
        raise ValidationError("mrcd needs at least 4 observations")
    scales = np.array([qn_scale(col) for col in x.T])
    if np.any(scales == 0):
        zero = np.flatnonzero(scales == 0).tolist()
        raise ValidationError(f"variables {zero} have zero Qn scale; screen them out first")
    if rng is None:
        rng = _rng_for(cfg.seed)

    if n >= 2 * (p + 1):
        state = rng.bit_generator.state
        try:
            est = fast_mcd(x, cfg, rng)
        except NumericalError:
            est = None
        if est is not None:
            lam = np.linalg.eigvalsh(est.sigma_tilde / np.outer(scales, scales))
            if lam[0] > 0 and lam[-1] / lam[0] <= cfg.condition_cap:
                return replace(est, method="mrcd", condition=float(lam[-1] / lam[0]))
        rng.bit_generator.state = state

    centre = np.median(x, axis=0)
    z = (x - centre) / scales
    rows = _Rows(z)
    h = cfg.h(n)
    c = consistency_factor(cfg.alpha, p)
    grid = np.asarray(cfg.rho_grid, dtype=float)
    eye = np.eye(p)

    # starts are regularised just enough to be usable for the first C-step
    starts = _draw_elemental(rng, n, min(p + 1, h), cfg.n_initial_subsets)
    means, covs = rows.moments(starts)
    start_rho = np.array(
        [_smallest_feasible_rho(e, grid, cfg.condition_cap) for e in np.linalg.eigvalsh(c * covs)]
    )
    scat = start_rho[:, None, None] * eye + (1 - start_rho)[:, None, None] * c * covs
    cand = _h_smallest(rows.sq_distances(means, scat), h)
    cand_means, cand_covs = rows.moments(cand)
    rho = max(
        _smallest_feasible_rho(e, grid, cfg.condition_cap) for e in np.linalg.eigvalsh(c * cand_covs)
    )

    obj = _Objective(c, rho)
    support, ld, trace = _concentrate(rows, cand_means, cand_covs, h, obj, cfg.n_cstep_candidates)
    zs = z[support]
    mu_z = zs.mean(axis=0)
    sigma_z = obj.scatter(np.atleast_2d(np.cov(zs, rowvar=False, ddof=1))[None])[0]
    lam = np.linalg.eigvalsh(sigma_z)
    if lam[0] <= 0:
        raise NumericalError("regularised covariance is singular; extend rho_grid towards 1")
    mu = centre + scales * mu_z
    sigma = sigma_z * np.outer(scales, scales)
    return RobustEstimate(mu, sigma, support, rho, ld, "mrcd", float(lam[-1] / lam[0]), trace)


class GroupEstimationError(NumericalError):
    def __init__(self, group: int, cause: Exception):
        super().__init__(f"robust estimation failed for group {group}: {cause}")
        self.group = group
        self.cause = cause


def estimate_group(x, cfg: RobustConfig, rng=None) -> RobustEstimate:
    """fast_mcd when ``n_j >= 2(p+1)``, else mrcd."""
    x = _as_matrix(x)
    n, p = x.shape
    if n >= 2 * (p + 1):
        return fast_mcd(x, cfg, rng)
    return mrcd(x, cfg, rng)


def robust_scatter(d: LabeledDataset, cfg: RobustConfig = RobustConfig()) -> ScatterPair:
    """Robust between/within pair from per-group MCD (or MRCD) estimates.

    Group ``j`` draws its subsets from a stream keyed by ``(cfg.seed, j)``.
    """
    n, g = d.n, d.g
    if n - g < 1:
        raise ValidationError("need n - g >= 1")
    ests = []
    for j in range(1, g + 1):
        try:
            ests.append(estimate_group(d.group(j), cfg, _rng_for(cfg.seed, j)))
        except (NumericalError, ValidationError) as exc:
            raise GroupEstimationError(j, exc) from exc
    counts = d.counts
    weights = counts / n
    mus = np.array([e.mu_tilde for e in ests])
    mu = weights @ mus
    dev = mus - mu
    b = (dev.T * weights) @ dev
    w = sum(((nj - 1) / (n - g)) * e.sigma_tilde for nj, e in zip(counts, ests))
    if g < 2:
        b = np.zeros_like(w)
    b = 0.5 * (b + b.T)
    w = 0.5 * (w + w.T)
    return ScatterPair(b, w, w.copy(), counts, "robust", mus, weights, {"estimates": ests})
