"""Fair-prediction metrics, the scalar predictor on z_p, regression
diagnostics of z_p on the attributes, latent diversity, and k-fold evaluation."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from projfair import model as md
from projfair.losses import pearson_corr
from projfair.synthdata import Dataset, Fold, kfold_split
from projfair.trainer import TrainConfig, train

LOGISTIC_RIDGE = 1e-6


class DegenerateInput(ValueError):
    pass


def is_binary(values) -> bool:
    return set(np.unique(values).tolist()) <= {0.0, 1.0}


# --------------------------------------------------------------------------
# predictor


@dataclass
class Predictor:
    kind: str  # "linear" | "logistic"
    intercept: float
    slope: float
    slope_se: float = float("nan")
    converged: bool = True
    n_iter: int = 0

    def score(self, z_p) -> np.ndarray:
        """Linear prediction, or the positive-class probability for logistic."""
        eta = self.intercept + self.slope * np.asarray(z_p, dtype=np.float64)
        if self.kind == "linear":
            return eta
        return 1.0 / (1.0 + np.exp(-eta))

    def inverse(self, value: float) -> float:
        """The z_p at which :meth:`score` equals ``value``."""
        if self.slope == 0:
            raise DegenerateInput("predictor has zero slope")
        if self.kind == "logistic":
            if not 0 < value < 1:
                raise ValueError("logistic targets must lie strictly inside (0, 1)")
            value = math.log(value / (1 - value))
        return (value - self.intercept) / self.slope


def _separated(z, t) -> bool:
    pos, neg = z[t == 1], z[t == 0]
    return pos.min() > neg.max() or neg.min() > pos.max()


def fit_predictor(z_p, t, kind: str | None = None, tol: float = 1e-8, max_iter: int = 100) -> Predictor:
    """Regress ``t`` on the scalar ``z_p``.

    ``kind`` defaults to logistic for a 0/1 target and linear otherwise. The
    logistic fit runs Newton iterations on the log-likelihood with an L2
    ridge on the slope; ``converged`` is False when iterations run out or when
    the classes are perfectly separated (the ridge alone then bounds the slope).
    """
    z = np.asarray(z_p, dtype=np.float64).reshape(-1)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if z.size != t.size:
        raise ValueError("z_p and t differ in length")
    if z.size < 3:
        raise ValueError("need at least three points")
    if np.ptp(z) == 0:
        raise DegenerateInput("z_p is constant")
    if kind is None:
        kind = "logistic" if is_binary(t) else "linear"

    mu, sd = z.mean(), z.std()
    u = (z - mu) / sd
    A = np.column_stack([np.ones_like(u), u])
    if kind == "linear":
        coef, *_ = np.linalg.lstsq(A, t, rcond=None)
        resid = t - A @ coef
        sigma2 = resid @ resid / max(z.size - 2, 1)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        b0, b1, se1, converged, it = coef[0], coef[1], math.sqrt(cov[1, 1]), True, 0
    elif kind == "logistic":
        if not is_binary(t):
            raise ValueError("logistic regression needs a 0/1 target")
        if np.ptp(t) == 0:
            raise DegenerateInput("target has a single class")
        ridge = np.diag([0.0, LOGISTIC_RIDGE])
        w = np.zeros(2)
        converged = False
        for it in range(1, max_iter + 1):
            p = 1.0 / (1.0 + np.exp(-(A @ w)))
            grad = A.T @ (t - p) - ridge @ w
            H = (A * (p * (1 - p))[:, None]).T @ A + ridge
            step = np.linalg.solve(H, grad)
            w = w + step
            if np.max(np.abs(step)) < tol:
                converged = True
                break
        p = 1.0 / (1.0 + np.exp(-(A @ w)))
        H = (A * (p * (1 - p))[:, None]).T @ A + ridge
        cov = np.linalg.inv(H)
        b0, b1, se1 = w[0], w[1], math.sqrt(cov[1, 1])
        if _separated(z, t):
            converged = False
    else:
        raise ValueError(f"unknown predictor kind {kind!r}")
    # back to the original z_p scale
    slope = b1 / sd
    return Predictor(
        kind=kind,
        intercept=float(b0 - slope * mu),
        slope=float(slope),
        slope_se=float(se1 / sd),
        converged=converged,
        n_iter=it,
    )


# --------------------------------------------------------------------------
# metrics


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise DegenerateInput("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def signed_bias_corr(t_hat, s) -> tuple[float, str]:
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if np.ptp(s) == 0:
        raise DegenerateInput("bias is constant")
    r = pearson_corr(t_hat, s)
    return abs(r), "+" if r >= 0 else "-"


def rec_error_l1(X, X_rec) -> float:
    X = np.asarray(X, dtype=np.float64)
    X_rec = np.asarray(X_rec, dtype=np.float64)
    if X.shape != X_rec.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {X_rec.shape}")
    return float(np.mean(np.abs(X - X_rec)))


@dataclass
class LatentDiversity:
    matrix: np.ndarray
    mean_abs_offdiag: float
    constant_columns: list[int]


def latent_corr_matrix(Z) -> LatentDiversity:
    """Pairwise Pearson correlations of latent columns.

    Constant columns get zero off-diagonal entries and are left out of the
    summary mean.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least two rows")
    n = Z.shape[1]
    sd = Z.std(axis=0)
    constant = [int(i) for i in np.flatnonzero(sd == 0)]
    keep = sd > 0
    C = np.eye(n)
    Zc = (Z[:, keep] - Z[:, keep].mean(axis=0)) / sd[keep]
    sub = (Zc.T @ Zc) / Z.shape[0]
    sub = np.clip((sub + sub.T) / 2, -1.0, 1.0)
    np.fill_diagonal(sub, 1.0)
    C[np.ix_(keep, keep)] = sub
    k = int(keep.sum())
    mean_abs = float(np.abs(sub[~np.eye(k, dtype=bool)]).mean()) if k >= 2 else float("nan")
    return LatentDiversity(matrix=C, mean_abs_offdiag=mean_abs, constant_columns=constant)


# --------------------------------------------------------------------------
# regression diagnostic  z_p = b0 + b_s s + b_t t + e


@dataclass
class Eq1Diagnostics:
    beta0: float
    beta_s: np.ndarray
    beta_t: float
    se_s: np.ndarray
    se_t: float
    resid_sd: float
    r2: float


def fit_eq1_diagnostics(z_p, t, S, max_condition: float = 1e8) -> Eq1Diagnostics:
    """OLS of standardized ``z_p`` on standardized ``[S, t]``. Report only."""
    z = np.asarray(z_p, dtype=np.float64).reshape(-1)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    d, k = S.shape
    if d <= k + 2:
        raise ValueError(f"need more than {k + 2} rows, got {d}")
    R = np.column_stack([S, t])
    sd = R.std(axis=0)
    if np.any(sd == 0) or z.std() == 0:
        raise DegenerateInput("constant regressor or response")
    Rs = (R - R.mean(axis=0)) / sd
    zs = (z - z.mean()) / z.std()
    A = np.column_stack([np.ones(d), Rs])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > max_condition:
        raise DegenerateInput(f"regressors are collinear (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(A, zs, rcond=None)
    resid = zs - A @ coef
    dof = d - A.shape[1]
    sigma2 = resid @ resid / dof
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(A.T @ A)))
    r2 = 1.0 - (resid @ resid) / (zs @ zs)
    return Eq1Diagnostics(
        beta0=float(coef[0]),
        beta_s=coef[1 : 1 + k].copy(),
        beta_t=float(coef[-1]),
        se_s=se[1 : 1 + k].copy(),
        se_t=float(se[-1]),
        resid_sd=float(math.sqrt(sigma2)),
        r2=float(r2),
    )


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldResult:
    fold: int
    metric_name: str
    accuracy: float
    bias_corr: dict[str, float]
    rec_error: float
    diversity: float
    n_train: int = 0
    n_test: int = 0


@dataclass
class EvalReport:
    method: str
    target: str
    biases: list[str]
    metric_name: str
    folds: list[FoldResult]
    models: list = field(default_factory=list, repr=False)

    def aggregate(self) -> FoldResult:
        def mean(values):
            return float(np.mean(list(values)))

        return FoldResult(
            fold=0,
            metric_name=self.metric_name,
            accuracy=mean(f.accuracy for f in self.folds),
            bias_corr={b: mean(f.bias_corr[b] for f in self.folds) for b in self.biases},
            rec_error=mean(f.rec_error for f in self.folds),
            diversity=mean(f.diversity for f in self.folds),
        )

    def mean_abs_bias_corr(self) -> dict[str, float]:
        return {b: float(np.mean([abs(f.bias_corr[b]) for f in self.folds])) for b in self.biases}

    def rows(self):
        """Fold rows followed by the aggregate row (labelled ``mean``)."""
        out = [(str(f.fold), f) for f in self.folds]
        out.append(("mean", self.aggregate()))
        return out


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(float(v), ".17g")


def write_report_csv(reports: list[EvalReport], path) -> None:
    biases = reports[0].biases
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "fold", reports[0].metric_name, *[f"corr_{b}" for b in biases],
                    "rec_error_l1", "latent_mean_abs_corr"])
        for rep in reports:
            for label, r in rep.rows():
                w.writerow([rep.method, label, _fmt(r.accuracy), *[_fmt(r.bias_corr[b]) for b in biases],
                            _fmt(r.rec_error), _fmt(r.diversity)])


def _signed(v: float) -> str:
    if math.isnan(v):
        return "-"
    return f"{'+' if v >= 0 else '-'}{abs(v):.3f}"


def _plain(v: float) -> str:
    return "-" if math.isnan(v) else f"{v:.3f}"


def format_table(reports: list[EvalReport], dataset: Dataset | None = None) -> str:
    """Plain-text table: one row per metric, one column per method.

    With ``dataset`` given, a leading ``X`` column shows the correlation of the
    ground-truth target with each bias.
    """
    first = reports[0]
    headers = ["", *(["X"] if dataset is not None else []), *[r.method for r in reports]]
    aggs = [r.aggregate() for r in reports]
    lab = None
    if dataset is not None:
        lab = dataset.subset(np.flatnonzero(dataset.labelled))
    lines = []
    row = [first.metric_name]
    if lab is not None:
        row.append("1" if first.metric_name == "AUC" else "0")
    lines.append(row + [_plain(a.accuracy) for a in aggs])
    for b in first.biases:
        row = [f"Corr ({b})"]
        if lab is not None:
            row.append(_signed(pearson_corr(lab.attributes[first.target], lab.attributes[b])))
        lines.append(row + [_signed(a.bias_corr[b]) for a in aggs])
    row = ["Rec error"] + (["-"] if lab is not None else [])
    lines.append(row + [_plain(a.rec_error) for a in aggs])
    row = ["Latent |corr|"] + (["-"] if lab is not None else [])
    lines.append(row + [_plain(a.diversity) for a in aggs])

    table = [headers, *lines]
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    out = []
    for i, r in enumerate(table):
        out.append("  ".join(c.ljust(widths[j]) if j == 0 else c.rjust(widths[j]) for j, c in enumerate(r)))
        if i == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out) + "\n"


def evaluate_fold(dataset: Dataset, fold: Fold, arch: md.Architecture, config: TrainConfig,
                  index: int, eval_biases=None, keep_model: bool = False):
    """Train on one fold's training split and score its test split."""
    biases = list(eval_biases if eval_biases is not None else config.biases)
    rows = fold.train if config.mode == "semi_supervised" else fold.train_labelled
    train_set = dataset.subset(rows)
    test_set = dataset.subset(fold.test)
    params, history = train(train_set, arch, config, val=test_set)

    t_test = test_set.attributes[config.target]
    binary = is_binary(dataset.attributes[config.target][dataset.labelled])
    metric_name = "AUC" if binary else "R-MSE"
    Z_test = md.encode(params, test_set.X, arch)
    rec = rec_error_l1(test_set.X, md.decode(params, Z_test, arch))
    diversity = latent_corr_matrix(Z_test).mean_abs_offdiag

    if config.mode == "ablation_plain_ae":
        accuracy = float("nan")
        corr = {b: float("nan") for b in biases}
    else:
        lab_train = dataset.subset(fold.train_labelled)
        zp_train = md.project(md.encode(params, lab_train.X, arch), params.P)
        predictor = fit_predictor(zp_train, lab_train.attributes[config.target],
                                  "logistic" if binary else "linear")
        t_hat = predictor.score(md.project(Z_test, params.P))
        accuracy = auc(t_hat, t_test) if binary else rmse(t_hat, t_test)
        corr = {}
        for b in biases:
            mag, sign = signed_bias_corr(t_hat, test_set.attributes[b])
            corr[b] = mag if sign == "+" else -mag
    result = FoldResult(
        fold=index, metric_name=metric_name, accuracy=accuracy, bias_corr=corr,
        rec_error=rec, diversity=diversity, n_train=len(train_set), n_test=len(test_set),
    )
    return result, ((params, history) if keep_model else None)


def _fold_task(args):
    return evaluate_fold(*args)


def cross_validate(dataset: Dataset, arch: md.Architecture, config: TrainConfig, k: int = 5,
                   seed: int = 0, method: str | None = None, stratify_on: str | None = None,
                   eval_biases=None, jobs: int = 1, keep_models: bool = False) -> EvalReport:
    folds = kfold_split(dataset, k, seed, stratify_on=stratify_on)
    tasks = [(dataset, f, arch, config, i + 1, eval_biases, keep_models) for i, f in enumerate(folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_fold_task, tasks))
    else:
        outputs = []
        for i, task in enumerate(tasks, start=1):
            try:
                outputs.append(_fold_task(task))
            except Exception as exc:
                raise RuntimeError(f"fold {i} failed: {exc}") from exc
    results = [o[0] for o in outputs]
    return EvalReport(
        method=method or config.mode,
        target=config.target,
        biases=list(eval_biases if eval_biases is not None else config.biases),
        metric_name=results[0].metric_name,
        folds=results,
        models=[o[1] for o in outputs] if keep_models else [],
    )
