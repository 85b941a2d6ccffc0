"""Fisher discriminant and trace-ratio dimension reduction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvariantViolation, NonUniqueSolutionWarning, ValidationError
from .linalg import gen_eig_spd, numerical_rank, orthonormalize, sym_eig
from .moments import ScatterPair

GAP_TOL = 1e-8
FIRST_ORDER_TOL = 1e-6
PROFILE_SLACK = 1e-8
# tolerated decrease of rho between iterations, relative to |rho|
_MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class Projection:
    """A ``p x k`` reduction matrix with its diagnostics.

    ``scaling`` is ``"w"`` (``V^T W V = I``), ``"s_pooled"``
    (``V^T S_pooled V = I``) or ``"orthonormal"`` (``V^T V = I``).
    """

    v: np.ndarray
    method: str
    scaling: str
    rho: float
    gap: float = np.nan
    iterations: int = 0
    converged: bool = True
    rho_trace: tuple = ()
    warnings: tuple = ()
    first_order_residual: float = np.nan

    @property
    def k(self) -> int:
        return self.v.shape[1]

    @property
    def basis(self) -> np.ndarray:
        """Orthonormal basis of the column span."""
        return self.v if self.scaling == "orthonormal" else orthonormalize(self.v)


@dataclass(frozen=True)
class TrOptions:
    tol_rho: float = 1e-10
    max_iter: int = 200
    init: str = "fda"
    seed: int | None = None

    def __post_init__(self):
        if not self.tol_rho > 0:
            raise ValidationError("tol_rho must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.init not in ("fda", "random"):
            raise ValidationError("init must be 'fda' or 'random'")


def _check_k(k, p):
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= p:
        raise ValidationError(f"k must be an integer in 1..{p}, got {k!r}")


def fda(s: ScatterPair, k: int, scaling: str = "w") -> Projection:
    """Top-``k`` generalized eigenvectors of ``(B, W)``.

    Raises
    ------
    ValidationError
        If ``k`` exceeds the rank of ``B``.
    """
    _check_k(k, s.p)
    r = numerical_rank(s.b)
    if k > r:
        raise ValidationError(
            f"k={k} exceeds rank(B)={r}; FDA yields at most r <= min(g-1, p) directions"
        )
    eig = gen_eig_spd(s.b, s.w, scaling=scaling, s_pooled=s.s_pooled if scaling == "s_pooled" else None)
    v = eig.vectors[:, :k]
    return Projection(v, "FDA", scaling, trace_ratio_value(v, s), float(eig.values[k - 1]))


def trace_ratio_value(v, s: ScatterPair) -> float:
    """``tr(V^T B V) / tr(V^T W V)``."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    den = float(np.trace(v.T @ s.w @ v))
    if not den > 0:
        raise ValidationError("tr(V^T W V) is not positive; trace ratio undefined")
    return float(np.trace(v.T @ s.b @ v)) / den


def _initial_basis(s: ScatterPair, k: int, opts: TrOptions) -> np.ndarray:
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        return orthonormalize(rng.standard_normal((s.p, k)))
    try:
        return fda(s, k).basis
    except Exception:
        # rank-deficient B or singular W: start from the leading eigenvectors of B
        return sym_eig(s.b).vectors[:, :k]


def solve_tr(s: ScatterPair, k: int, opts: TrOptions = TrOptions()) -> Projection:
    """Maximize ``tr(V^T B V) / tr(V^T W V)`` over ``V^T V = I_k``.

    Fixed-point iteration: ``rho <- rho(V)``, then ``V <-`` top-``k``
    eigenvectors of ``B - rho W``, stopping when the relative change of
    ``rho`` is at most ``opts.tol_rho`` or an update fails to increase it,
    in which case the previous iterate is kept. If ``max_iter`` is reached the
    last iterate is returned with ``converged=False``.
    """
    _check_k(k, s.p)
    p = s.p
    if numerical_rank(s.w) < p - k + 1:
        raise ValidationError(f"rank(W) must be at least p - k + 1 = {p - k + 1} for a finite maximum")
    v = _initial_basis(s, k, opts)
    rho = trace_ratio_value(v, s)
    trace = [rho]
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        cand = sym_eig(s.b - rho * s.w).vectors[:, :k]
        new = trace_ratio_value(cand, s)
        if new < rho - _MONOTONE_SLACK * max(1.0, abs(rho)):
            raise InvariantViolation(f"trace ratio decreased during iteration ({rho!r} -> {new!r})")
        if new <= rho:
            # rounding-level drop: the previous iterate is already a fixed point
            converged = True
            break
        v = cand
        trace.append(new)
        done = abs(new - rho) <= opts.tol_rho * max(abs(new), np.finfo(float).tiny)
        rho = new
        if done:
            converged = True
            break

    lam = sym_eig(s.b - rho * s.w).values
    gap = float(lam[k - 1] - lam[k]) if k < p else np.inf
    scale = np.linalg.norm(s.b, 2) + np.linalg.norm(s.w, 2)
    notes = []
    if gap <= GAP_TOL * scale:
        msg = f"eigenvalue gap {gap:.3g} at k={k}: the trace-ratio subspace is not unique"
        warnings.warn(msg, NonUniqueSolutionWarning, stacklevel=2)
        notes.append(msg)
    if not converged:
        notes.append(f"no convergence after {opts.max_iter} iterations")
    return Projection(
        v, "TR", "orthonormal", rho, gap, it, converged, tuple(trace), tuple(notes),
        float(abs(lam[:k].sum())),
    )


def first_order_bound(s: ScatterPair, rho: float) -> float:
    """Tolerance for the stationarity residual ``|sum_{i<=k} lambda_i(B - rho W)|``."""
    return FIRST_ORDER_TOL * (np.linalg.norm(s.b, 2) + rho * np.linalg.norm(s.w, 2))


@dataclass(frozen=True)
class ProfileEntry:
    k: int
    rho: float
    tr_b: float
    tr_w: float
    gap: float
    projection: Projection = field(repr=False, compare=False, default=None)


def rho_profile(s: ScatterPair, k_max: int, opts: TrOptions = TrOptions()) -> list[ProfileEntry]:
    """Optimal trace ratio for ``k = 1..k_max``; checks it never increases."""
    _check_k(k_max, s.p)
    out = []
    for k in range(1, k_max + 1):
        proj = solve_tr(s, k, opts)
        v = proj.v
        out.append(
            ProfileEntry(k, proj.rho, float(np.trace(v.T @ s.b @ v)), float(np.trace(v.T @ s.w @ v)), proj.gap, proj)
        )
    for a, b in zip(out, out[1:]):
        if b.rho > a.rho + PROFILE_SLACK:
            raise InvariantViolation(f"rho increased from k={a.k} ({a.rho!r}) to k={b.k} ({b.rho!r})")
    return out


@dataclass(frozen=True)
class ConjectureReport:
    profile: list
    violations: list  # (k, tr_b(k), tr_b(k+1))

    @property
    def ok(self) -> bool:
        return not self.violations


def conjecture_scan(s: ScatterPair, k_max: int, opts: TrOptions = TrOptions()) -> ConjectureReport:
    """Report every ``k`` where ``tr(V^T B V)`` of the optimal TR basis drops at ``k + 1``.

    Observational only: nothing is raised when a drop is found.
    """
    prof = rho_profile(s, k_max, opts)
    bad = [
        (a.k, a.tr_b, b.tr_b)
        for a, b in zip(prof, prof[1:])
        if b.tr_b < a.tr_b - PROFILE_SLACK
    ]
    return ConjectureReport(prof, bad)
