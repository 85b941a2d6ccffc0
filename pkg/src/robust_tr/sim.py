"""Simulation scenarios and the Monte-Carlo replication engine.

Every replication draws from random streams keyed by
``(seed, replication, draw kind, group)``, so results do not depend on the
order in which replications run or on how many worker processes are used.
Training sets use the same stream at every contamination level, so the
levels are compared on common random numbers.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .classify import (
    ClassifierModel,
    accuracy,
    nearest_projected_mean_train,
    predict,
    qda_rule,
    robust_projected_train,
)
from .contaminate import ContaminationSpec, sample_contaminated
from .exceptions import ValidationError
from .linalg import subspace_angle
from .moments import GroupModel, classical_scatter, theoretical_scatter
from .reduce import Projection, fda, solve_tr
from .robust import RobustConfig, robust_scatter

SCENARIOS = ("I", "II", "III", "IV")
METHODS = ("cTR", "cFDA", "rTR", "rFDA", "tTR", "tFDA", "tQDA")
DEFAULT_EPSILONS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
CSV_COLUMNS = ("scenario", "method", "epsilon", "q", "replication", "accuracy", "angle")

# draw kinds used in stream keys
_TRAIN, _TEST, _ROBUST = 0, 1, 2


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    q: int
    models: tuple
    contaminating: tuple
    k: int = 2

    @property
    def p(self) -> int:
        return self.models[0].p

    @property
    def g(self) -> int:
        return len(self.models)

    def contamination(self, epsilon: float) -> ContaminationSpec:
        return ContaminationSpec(epsilon, self.contaminating)


def _models(means, covs):
    return tuple(GroupModel(np.asarray(m, float), np.asarray(s, float), 0.25) for m, s in zip(means, covs))


def build_scenario(id: str, q: int = 0) -> ScenarioSpec:
    """Four equally likely Gaussian groups in three (plus ``q``) dimensions.

    One group is contaminated by moving the second coordinate of its mean
    to ``-27``; its covariance is unchanged. ``q`` irrelevant standard normal
    coordinates are only allowed for scenario ``"IV"``, which otherwise
    equals ``"II"``.
    """
    if id not in SCENARIOS:
        raise ValidationError(f"unknown scenario {id!r}; choose from {SCENARIOS}")
    if not isinstance(q, (int, np.integer)) or q < 0:
        raise ValidationError("q must be a non-negative integer")
    if q and id != "IV":
        raise ValidationError("irrelevant variables (q > 0) only exist in scenario IV")

    if id == "I":
        s = [[1, 0, 0], [0, 1, -0.25], [0, -0.25, 1]]
        means = [(15, 3, 0), (15, -3, 0), (0, 0, 2), (0, 0, -2)]
        covs = [s] * 4
        bad = 0
    elif id in ("II", "IV"):
        a, b = np.diag([1.0, 3, 1]), np.diag([3.0, 1, 3])
        means = [(0, -3, 0), (0, 3, 0), (3, 0, 1), (-3, 0, 1)]
        covs = [a, a, b, b]
        bad = 1
    else:
        s3 = [[1, 0, 0], [0, 3, -0.5], [0, -0.5, 1]]
        means = [(0, -3, 1), (10, 0, 0), (0, 3, 1), (-10, 0, 0)]
        covs = [np.diag([1.0, 3, 1]), np.eye(3), s3, np.eye(3)]
        bad = 2

    means = [np.concatenate([m, np.zeros(q)]) for m in means]
    covs = [np.block([[np.asarray(c, float), np.zeros((3, q))], [np.zeros((q, 3)), np.eye(q)]]) for c in covs]
    models = _models(means, covs)
    cmean = means[bad].copy()
    cmean[1] = -27.0
    contaminating = [None] * 4
    contaminating[bad] = GroupModel(cmean, covs[bad], 0.25)
    return ScenarioSpec(id, int(q), models, tuple(contaminating))


def theoretical_solutions(spec: ScenarioSpec) -> tuple[Projection, Projection]:
    """FDA (``W``-orthonormal) and TR projections of the clean population."""
    pair = theoretical_scatter(spec.models)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fda(pair, spec.k), solve_tr(pair, spec.k)


@dataclass(frozen=True)
class StudyConfig:
    scenario: str = "I"
    epsilons: tuple = DEFAULT_EPSILONS
    qs: tuple = (0,)
    n_train: int = 400
    n_test: int = 40
    replications: int = 200
    methods: tuple = METHODS
    seed: int = 0
    threads: int = 1
    robust: RobustConfig = field(default_factory=RobustConfig)

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "qs", tuple(int(q) for q in self.qs))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.methods or not self.epsilons or not self.qs:
            raise ValidationError("methods, epsilons and qs must be non-empty")
        if any(not 0 <= e < 1 for e in self.epsilons):
            raise ValidationError("epsilons must lie in [0, 1)")
        if any(q and self.scenario != "IV" for q in self.qs):
            raise ValidationError("q > 0 is only valid for scenario IV")
        if self.n_train < 2 or self.n_test < 1 or self.replications < 1 or self.threads < 1:
            raise ValidationError("n_train >= 2, n_test >= 1, replications >= 1 and threads >= 1 are required")

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "robust" in data and isinstance(data["robust"], dict):
            data["robust"] = RobustConfig(**data["robust"])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["robust"] = asdict(self.robust)
        return out


@dataclass(frozen=True)
class Record:
    scenario: str
    method: str
    epsilon: float
    q: int
    replication: int
    accuracy: float
    angle: float


@dataclass
class StudyReport:
    config: StudyConfig
    records: list
    failures: list  # (method, epsilon, q, replication, message)

    def rows(self):
        for r in self.records:
            yield [r.scenario, r.method, repr(r.epsilon), r.q, r.replication, repr(r.accuracy), repr(r.angle)]

    def values(self, method: str, epsilon: float, q: int = 0, what: str = "accuracy") -> np.ndarray:
        return np.array(
            [getattr(r, what) for r in self.records if r.method == method and r.epsilon == epsilon and r.q == q]
        )


def _stream_key(seed, *parts) -> tuple:
    base = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return tuple(base) + tuple(int(p) for p in parts)


def _eps_key(eps: float) -> int:
    return int(round(eps * 1_000_000))


def _angle(proj: Projection, bench: Projection) -> float:
    return subspace_angle(proj.basis, bench.basis)


def _theoretical_model(spec: ScenarioSpec, proj: Projection) -> ClassifierModel:
    centers = np.array([m.mu for m in spec.models]) @ proj.v
    priors = np.log(np.array([m.prior for m in spec.models]))
    return ClassifierModel(centers, priors, "euclidean", None, proj)


def _replicate(cfg: StudyConfig, q: int, rep: int, bench) -> tuple[list, list]:
    """All contamination levels and methods for one replication."""
    spec = build_scenario(cfg.scenario, q)
    v_fda, v_tr = bench
    test = sample_contaminated(spec.models, None, cfg.n_test, _stream_key(cfg.seed, rep, _TEST))
    out, failures = [], []

    def add(method, eps, acc, ang):
        out.append(Record(cfg.scenario, method, float(eps), q, rep, float(acc), float(ang)))

    theo = {}
    if "tTR" in cfg.methods:
        theo["tTR"] = (accuracy(test.labels, predict(_theoretical_model(spec, v_tr), test.x)), 0.0)
    if "tFDA" in cfg.methods:
        theo["tFDA"] = (accuracy(test.labels, predict(_theoretical_model(spec, v_fda), test.x)), 0.0)
    if "tQDA" in cfg.methods:
        theo["tQDA"] = (accuracy(test.labels, qda_rule(test.x, spec.models)), math.nan)

    for eps in cfg.epsilons:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            train = sample_contaminated(
                spec.models, spec.contamination(eps), cfg.n_train, _stream_key(cfg.seed, rep, _TRAIN)
            )
        classical = robust = None
        for method in cfg.methods:
            if method in theo:
                add(method, eps, *theo[method])
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    if method[0] == "c":
                        if classical is None:
                            classical = classical_scatter(train)
                        if method == "cTR":
                            proj = solve_tr(classical, spec.k)
                        else:
                            proj = fda(classical, spec.k, "s_pooled")
                        model = nearest_projected_mean_train(train, proj)
                        rcfg = None
                    else:
                        rcfg = replace(cfg.robust, seed=_stream_key(cfg.seed, rep, _ROBUST, _eps_key(eps)))
                        if robust is None:
                            robust = robust_scatter(train, rcfg)
                        if method == "rTR":
                            proj = solve_tr(robust, spec.k)
                        else:
                            proj = fda(robust, spec.k, "s_pooled")
                        model = robust_projected_train(train, proj, rcfg)
                    acc = accuracy(test.labels, predict(model, test.x))
                    ang = _angle(proj, v_tr if method.endswith("TR") else v_fda)
            except Exception as exc:  # recorded, not fatal
                failures.append((method, float(eps), q, rep, f"{type(exc).__name__}: {exc}"))
                acc = ang = math.nan
            add(method, eps, acc, ang)
    return out, failures


def _work(args):
    return _replicate(*args)


def run_study(cfg: StudyConfig) -> StudyReport:
    """Run every replication of ``cfg`` and collect records in a fixed order."""
    tasks = []
    for q in cfg.qs:
        bench = theoretical_solutions(build_scenario(cfg.scenario, q))
        tasks.extend((cfg, q, rep, bench) for rep in range(cfg.replications))
    if cfg.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_work, tasks, chunksize=max(1, len(tasks) // (4 * cfg.threads))))
    else:
        results = [_work(t) for t in tasks]
    records, failures = [], []
    for recs, fails in results:
        records.extend(recs)
        failures.extend(fails)
    return StudyReport(cfg, records, failures)


def lower_median(values) -> float:
    """Median taking the lower middle value for even counts; NaNs are ignored."""
    v = np.sort(np.asarray(values, dtype=float))
    v = v[~np.isnan(v)]
    if v.size == 0:
        return math.nan
    return float(v[(v.size - 1) // 2])


def _quantile(values, prob) -> float:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    return float(np.quantile(v, prob, method="lower")) if v.size else math.nan


def summarize(report: StudyReport) -> list[dict]:
    """Median and quartiles of accuracy and angle per (method, epsilon, q)."""
    if not report.records:
        raise ValidationError("empty report")
    groups: dict = {}
    for r in report.records:
        groups.setdefault((r.method, r.epsilon, r.q), []).append(r)
    out = []
    order = {m: i for i, m in enumerate(METHODS)}
    for (method, eps, q), recs in sorted(groups.items(), key=lambda kv: (kv[0][2], order[kv[0][0]], kv[0][1])):
        acc = [r.accuracy for r in recs]
        ang = [r.angle for r in recs]
        out.append(
            {
                "scenario": report.config.scenario,
                "method": method,
                "epsilon": eps,
                "q": q,
                "n": len(recs),
                "failed": int(np.isnan(acc).sum()),
                "accuracy_median": lower_median(acc),
                "accuracy_q1": _quantile(acc, 0.25),
                "accuracy_q3": _quantile(acc, 0.75),
                "angle_median": lower_median(ang),
                "angle_q1": _quantile(ang, 0.25),
                "angle_q3": _quantile(ang, 0.75),
            }
        )
    return out


def _atomic_write(path, write) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    _atomic_write(path, write)


def write_json(path, data) -> None:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    _atomic_write(path, lambda fh: (json.dump(clean(data), fh, indent=2, sort_keys=True), fh.write("\n")))


def write_report(report: StudyReport, csv_path, json_path=None) -> None:
    """Long-format CSV of every record plus an optional JSON summary."""
    write_csv(csv_path, CSV_COLUMNS, report.rows())
    if json_path is not None:
        write_json(
            json_path,
            {
                "config": report.config.to_dict(),
                "summary": summarize(report),
                "failures": [list(f) for f in report.failures],
            },
        )
