"""Command-line interface and the cross-validation harness.

Subcommands: ``simulate``, ``crossval``, ``reduce``, ``bound-check`` and
``scan-conjecture``. Exit status is 0 on success, 1 for invalid input and 2
for numerical failures; errors are also printed to stderr as JSON.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .classify import ClassifierModel, accuracy, predict, robust_projected_train
from .contaminate import tr_perturbation_bound
from .exceptions import InvariantViolation, NumericalError, ValidationError
from .linalg import numerical_rank, range_projection
from .moments import LabeledDataset, ScatterPair, classical_scatter, qn_scale, theoretical_scatter
from .reduce import Projection, TrOptions, conjecture_scan, fda, rho_profile, solve_tr
from .robust import RobustConfig, robust_scatter
from .sim import DEFAULT_EPSILONS, METHODS, StudyConfig, build_scenario, run_study, write_csv, write_json, write_report

THREADS_ENV = "ROBUST_TR_THREADS"
MISSING = {"", "na", "nan", "?", "null", "none"}


# ---------------------------------------------------------------- data input


@dataclass(frozen=True)
class LoadReport:
    rows_read: int
    dropped_rows: tuple  # 1-based data row numbers with a missing value
    dropped_columns: tuple  # names of columns with zero Qn scale


def load_csv(path, label_column: str, return_report: bool = False):
    """Read a labelled data set from a CSV file with a header row.

    Rows with a missing value are dropped, then columns whose Qn scale is
    zero. Non-numeric cells raise :class:`ValidationError` naming the row
    and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: file is empty") from None
        if label_column not in header:
            raise ValidationError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        features = [h for i, h in enumerate(header) if i != li]
        xs, labels, dropped, n_read = [], [], [], 0
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            n_read += 1
            if len(row) != len(header):
                raise ValidationError(f"{path}: row {rownum} has {len(row)} fields, expected {len(header)}")
            cells = [c.strip() for c in row]
            if any(c.lower() in MISSING for c in cells):
                dropped.append(rownum)
                continue
            vals = []
            for i, c in enumerate(cells):
                if i == li:
                    continue
                try:
                    v = float(c)
                except ValueError:
                    raise ValidationError(f"{path}: row {rownum}, column {header[i]!r}: cannot parse {c!r}") from None
                if not math.isfinite(v):
                    raise ValidationError(f"{path}: row {rownum}, column {header[i]!r}: non-finite value")
                vals.append(v)
            xs.append(vals)
            labels.append(cells[li])
    if not xs:
        raise ValidationError(f"{path}: no complete rows")
    x = np.array(xs, dtype=float).reshape(len(xs), len(features))
    if len(set(labels)) < 2:
        raise ValidationError(f"{path}: fewer than 2 classes after dropping incomplete rows")
    keep = [j for j in range(x.shape[1]) if qn_scale(x[:, j]) > 0]
    zero = tuple(features[j] for j in range(x.shape[1]) if j not in keep)
    if not keep:
        raise ValidationError(f"{path}: every variable has zero Qn scale")
    d = LabeledDataset.from_raw(x[:, keep], labels, [features[j] for j in keep])
    report = LoadReport(n_read, tuple(dropped), zero)
    return (d, report) if return_report else d


# ----------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CvConfig:
    folds: int = 10
    method: str = "fda"
    estimator: str = "robust"
    seed: int = 0
    robust: RobustConfig = field(default_factory=RobustConfig)

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError("need at least 2 folds")
        if self.method not in ("fda", "tr"):
            raise ValidationError("method must be 'fda' or 'tr'")
        if self.estimator not in ("classical", "robust"):
            raise ValidationError("estimator must be 'classical' or 'robust'")


def stratified_folds(labels, folds: int, seed=0) -> np.ndarray:
    """Fold index per observation.

    Each class is shuffled and dealt round-robin, continuing where the
    previous class stopped, so per-class fold counts differ by at most one
    and fold sizes stay balanced.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if folds > counts.min():
        raise ValidationError(f"folds={folds} exceeds the smallest class size {counts.min()}")
    rng = np.random.default_rng(seed)
    out = np.empty(labels.size, dtype=int)
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        out[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return out


@dataclass
class CvResult:
    k_values: list
    accuracies: dict  # k (or "rLDA") -> list of per-fold accuracy (nan = failed)
    failures: list  # (fold, k, message)

    def median(self, key) -> float:
        v = np.array(self.accuracies[key], dtype=float)
        v = np.sort(v[~np.isnan(v)])
        return float(v[(v.size - 1) // 2]) if v.size else math.nan

    def table(self) -> list:
        rows = []
        for key in list(self.k_values) + ["rLDA"]:
            v = np.array(self.accuracies[key], dtype=float)
            rows.append([key, self.median(key), int((~np.isnan(v)).sum()), int(np.isnan(v).sum())])
        return rows


def _scatter(d: LabeledDataset, cfg: CvConfig) -> ScatterPair:
    return robust_scatter(d, cfg.robust) if cfg.estimator == "robust" else classical_scatter(d)


def crossval(d: LabeledDataset, cfg: CvConfig = CvConfig()) -> CvResult:
    """Stratified k-fold accuracy of robust projected LDA for every reduced dimension.

    Within each fold, a singular training within scatter is handled by
    moving to the basis of its numerical range; the reducer and the
    classifier only see the training part. The ``"rLDA"`` entry is robust
    LDA without reduction.
    """
    fold_of = stratified_folds(d.labels, cfg.folds, cfg.seed)
    r = min(d.g - 1, d.p)
    ks = list(range(1, r + 1))
    acc = {k: [] for k in ks}
    acc["rLDA"] = []
    failures = []
    for f in range(cfg.folds):
        train, test = d.subset(fold_of != f), d.subset(fold_of == f)
        try:
            w = classical_scatter(train).w
            if numerical_rank(w) < train.p:
                gamma = range_projection(w).gamma
                train, test = train.project(gamma), test.project(gamma)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pair = _scatter(train, cfg)
        except Exception as exc:
            for key in acc:
                acc[key].append(math.nan)
            failures.append((f, "all", f"{type(exc).__name__}: {exc}"))
            continue
        for k in ks:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    if k > train.p:
                        raise ValidationError(f"k={k} exceeds the rank of the training data")
                    proj = fda(pair, k, "s_pooled") if cfg.method == "fda" else solve_tr(pair, k)
                    model = robust_projected_train(train, proj, cfg.robust)
                acc[k].append(accuracy(test.labels, predict(model, test.x)))
            except Exception as exc:
                acc[k].append(math.nan)
                failures.append((f, k, f"{type(exc).__name__}: {exc}"))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                full = robust_scatter(train, cfg.robust)
            model = ClassifierModel(full.means, np.log(train.counts / train.n), "mahalanobis", full.w)
            acc["rLDA"].append(accuracy(test.labels, predict(model, test.x)))
        except Exception as exc:
            acc["rLDA"].append(math.nan)
            failures.append((f, "rLDA", f"{type(exc).__name__}: {exc}"))
    return CvResult(ks, acc, failures)


# ------------------------------------------------------------------ commands


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValidationError(f"cannot parse integer list {text!r}") from None


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_simulate(args) -> None:
    if args.config:
        cfg = StudyConfig.from_json(args.config)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.threads_given:
            over["threads"] = args.threads
        cfg = replace(cfg, **over)
    else:
        if not args.scenario:
            raise ValidationError("simulate needs --config or --scenario")
        cfg = StudyConfig(
            scenario=args.scenario,
            epsilons=_floats(args.eps) if args.eps else DEFAULT_EPSILONS,
            qs=_ints(args.q) if args.q else (0,),
            n_train=args.n_train,
            n_test=args.n_test,
            replications=args.reps,
            methods=tuple(args.methods.split(",")) if args.methods else METHODS,
            seed=args.seed if args.seed is not None else 0,
            threads=args.threads,
        )
    report = run_study(cfg)
    write_report(report, _out(args, "simulation.csv"), _out(args, "summary.json"))
    print(f"{len(report.records)} records, {len(report.failures)} failures -> {args.out}")


def _pair_to_json(pair: ScatterPair) -> dict:
    return {
        "b": pair.b.tolist(),
        "w": pair.w.tolist(),
        "s_pooled": pair.s_pooled.tolist(),
        "means": None if pair.means is None else pair.means.tolist(),
        "weights": None if pair.weights is None else pair.weights.tolist(),
        "source": pair.source,
    }


def _pair_from_json(path) -> ScatterPair:
    try:
        with open(path) as fh:
            data = json.load(fh)
        b = np.array(data["b"], dtype=float)
        w = np.array(data["w"], dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"{path}: not a valid scatter-pair file ({exc})") from None
    s = np.array(data.get("s_pooled") or w, dtype=float)
    means = np.array(data["means"], dtype=float) if data.get("means") is not None else None
    weights = np.array(data["weights"], dtype=float) if data.get("weights") is not None else None
    if b.shape != w.shape or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValidationError(f"{path}: b and w must be square matrices of the same size")
    return ScatterPair(b, w, s, None, data.get("source", "file"), means, weights)


def cmd_reduce(args) -> None:
    if args.pair:
        pair = _pair_from_json(args.pair)
    elif args.scenario:
        pair = theoretical_scatter(build_scenario(args.scenario, args.q).models)
    else:
        raise ValidationError("reduce needs --pair or --scenario")
    if args.save_pair:
        write_json(args.save_pair, _pair_to_json(pair))
    opts = TrOptions(seed=args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        proj = solve_tr(pair, args.k, opts) if args.method == "tr" else fda(pair, args.k, args.scaling)
        profile = rho_profile(pair, args.k_max or min(pair.p, max(args.k, 1)), opts)
    write_csv(_out(args, "projection.csv"), [f"v{j + 1}" for j in range(proj.k)], ([repr(float(a)) for a in row] for row in proj.v))
    write_csv(
        _out(args, "rho_profile.csv"),
        ["k", "rho", "tr_b", "tr_w", "gap"],
        ([e.k, repr(e.rho), repr(e.tr_b), repr(e.tr_w), repr(e.gap)] for e in profile),
    )
    print(f"{proj.method} k={proj.k} rho={proj.rho:.10g} gap={proj.gap:.6g} -> {args.out}")


def cmd_bound_check(args) -> None:
    spec = build_scenario(args.scenario, args.q)
    rows = []
    for eps in _floats(args.eps):
        rep = tr_perturbation_bound(spec.models, args.k, spec.contamination(eps))
        rows.append(
            [args.scenario, repr(eps), repr(rep.observed_angle_sin), repr(rep.general), repr(rep.general_first_order),
             repr(rep.specialized), repr(rep.specialized_corrected), repr(rep.bound_value),
             rep.observed_angle_sin <= rep.bound_value]
        )
    write_csv(
        _out(args, "bound_check.csv"),
        ["scenario", "epsilon", "observed", "general", "general_first_order", "specialized",
         "specialized_corrected", "bound", "observed_le_bound"],
        rows,
    )
    for r in rows:
        print(f"eps={r[1]} observed={float(r[2]):.4g} bound={float(r[7]):.4g} ok={r[8]}")


def random_pencil(rng, p: int = 20, rank: int = 10) -> ScatterPair:
    """``W = diag(1..p)`` and ``B = A A^T`` with ``A`` a centred ``p x rank`` Gaussian."""
    a = rng.standard_normal((p, rank))
    a -= a.mean(axis=1, keepdims=True)
    b = a @ a.T
    w = np.diag(np.arange(1.0, p + 1))
    return ScatterPair(0.5 * (b + b.T), w, w.copy(), None, "random")


def cmd_scan_conjecture(args) -> None:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    rows, n_bad = [], 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in range(args.n):
            rep = conjecture_scan(random_pencil(rng, args.p, args.rank), args.k_max)
            n_bad += bool(rep.violations)
            rows.extend([i, k, repr(a), repr(b)] for k, a, b in rep.violations)
    write_csv(_out(args, "conjecture_violations.csv"), ["pencil", "k", "tr_b_k", "tr_b_k_plus_1"], rows)
    write_json(_out(args, "conjecture_summary.json"), {"pencils": args.n, "pencils_with_violations": n_bad, "violations": len(rows)})
    print(f"{n_bad} of {args.n} pencils show a decrease of tr(V^T B V)")


def cmd_crossval(args) -> None:
    d, rep = load_csv(args.data, args.label, return_report=True)
    print(json.dumps({"rows_read": rep.rows_read, "dropped_rows": list(rep.dropped_rows),
                      "dropped_columns": list(rep.dropped_columns)}), file=sys.stderr)
    cfg = CvConfig(args.folds, args.method, args.estimator, args.seed if args.seed is not None else 0)
    res = crossval(d, cfg)
    write_csv(_out(args, "crossval.csv"), ["k", "median_accuracy", "folds_ok", "folds_failed"],
              ([k, repr(m), ok, bad] for k, m, ok, bad in res.table()))
    for f, k, msg in res.failures:
        print(f"fold {f}, k={k}: {msg}", file=sys.stderr)
    for k, m, ok, _ in res.table():
        print(f"k={k}: median accuracy {m:.4f} over {ok} folds")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"{THREADS_ENV}={raw!r} is not an integer") from None


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=None, help=f"worker processes (default ${THREADS_ENV} or 1)")

    p = _Parser(prog="robust-tr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario study")
    s.add_argument("--config", help="JSON study configuration")
    s.add_argument("--scenario", choices=["I", "II", "III", "IV"])
    s.add_argument("--eps", help="comma-separated contamination levels")
    s.add_argument("--q", help="comma-separated irrelevant-variable counts (scenario IV)")
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--n-train", type=int, default=400)
    s.add_argument("--n-test", type=int, default=40)
    s.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("crossval", parents=[common], help="stratified cross-validation on a CSV file")
    c.add_argument("data", help="CSV file with a header row")
    c.add_argument("--label", required=True, help="name of the class column")
    c.add_argument("--folds", type=int, default=10)
    c.add_argument("--method", choices=["fda", "tr"], default="fda")
    c.add_argument("--estimator", choices=["classical", "robust"], default="robust")
    c.set_defaults(func=cmd_crossval)

    r = sub.add_parser("reduce", parents=[common], help="projection matrix and rho profile")
    r.add_argument("--scenario", choices=["I", "II", "III", "IV"])
    r.add_argument("--q", type=int, default=0)
    r.add_argument("--pair", help="JSON file with b, w (and optionally s_pooled)")
    r.add_argument("--save-pair", help="write the scatter pair used to this JSON file")
    r.add_argument("--method", choices=["fda", "tr"], default="tr")
    r.add_argument("--scaling", choices=["w", "s_pooled"], default="w")
    r.add_argument("--k", type=int, default=2)
    r.add_argument("--k-max", type=int, default=None)
    r.set_defaults(func=cmd_reduce)

    b = sub.add_parser("bound-check", parents=[common], help="subspace perturbation bound over epsilon")
    b.add_argument("--scenario", choices=["I", "II", "III", "IV"], default="I")
    b.add_argument("--q", type=int, default=0)
    b.add_argument("--eps", default="1e-4,1e-3")
    b.add_argument("--k", type=int, default=2)
    b.set_defaults(func=cmd_bound_check)

    k = sub.add_parser("scan-conjecture", parents=[common], help="monotonicity scan of tr(V^T B V) over random pencils")
    k.add_argument("--n", type=int, default=1000)
    k.add_argument("--p", type=int, default=20)
    k.add_argument("--rank", type=int, default=10)
    k.add_argument("--k-max", type=int, default=8)
    k.set_defaults(func=cmd_scan_conjecture)
    return p


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.threads_given = args.threads is not None
        if args.threads is None:
            args.threads = _default_threads()
        args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(1, exc)
    except (NumericalError, InvariantViolation, np.linalg.LinAlgError) as exc:
        return _fail(2, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
