"""Supervised joint training and the two-phase semi-supervised loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from projfair import diffgraph as dg
from projfair.losses import MIN_CORR_BATCH, DegenerateBatch, LossConfig, corr_loss, joint_terms
from projfair.model import (
    MIN_DIRECTION_NORM,
    Architecture,
    ModelParams,
    init_params,
    mlp_forward,
    project_graph,
    random_direction,
)
from projfair.seeding import subseed
from projfair.synthdata import Dataset

log = logging.getLogger(__name__)

MODES = ("supervised", "semi_supervised", "ablation_no_bias", "ablation_plain_ae")


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, cause: str):
        self.epoch = epoch
        self.cause = cause
        super().__init__(f"training aborted at epoch {epoch}: {cause}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 600
    batch_size: int = 64
    lr: float = 1e-3
    eta: float = 0.5
    lam: float = 1.0
    seed: int = 0
    mode: str = "supervised"
    target: str = "t"
    biases: tuple[str, ...] = ()
    eps_v: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size % 2:
            raise ValueError("batch_size must be even")
        if self.mode == "semi_supervised" and self.batch_size // 2 < MIN_CORR_BATCH:
            raise ValueError(f"semi-supervised half-batches need at least {MIN_CORR_BATCH} rows")
        if self.batch_size < MIN_CORR_BATCH:
            raise ValueError(f"batch_size must be at least {MIN_CORR_BATCH}")

    @property
    def active_biases(self) -> tuple[str, ...]:
        return () if self.mode == "ablation_no_bias" else tuple(self.biases)

    def loss_config(self) -> LossConfig:
        lam = 0.0 if self.mode == "ablation_plain_ae" else self.lam
        return LossConfig(eta=self.eta, lam=lam, eps_v=self.eps_v)


@dataclass
class TrainHistory:
    rec_train: list[float] = field(default_factory=list)
    corr_train: list[float] = field(default_factory=list)
    joint_train: list[float] = field(default_factory=list)
    rec_val: list[float] = field(default_factory=list)
    corr_val: list[float] = field(default_factory=list)
    joint_val: list[float] = field(default_factory=list)
    skipped_batches: list[int] = field(default_factory=list)
    nonfinite_steps: list[int] = field(default_factory=list)
    phases: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    LOSS_COLUMNS = ("rec_train", "corr_train", "joint_train", "rec_val", "corr_val", "joint_val")

    def __len__(self):
        return len(self.rec_train)

    def table(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.LOSS_COLUMNS])

    def same_trajectory(self, other: "TrainHistory") -> bool:
        """Bit-level equality of every recorded loss and counter (timings excluded)."""
        a, b = self.table(), other.table()
        return (
            a.shape == b.shape
            and np.array_equal(a, b, equal_nan=True)
            and self.skipped_batches == other.skipped_batches
            and self.nonfinite_steps == other.nonfinite_steps
            and self.phases == other.phases
        )


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", *TrainHistory.LOSS_COLUMNS])
        for e, row in enumerate(history.table(), start=1):
            writer.writerow([e, *(format(float(v), ".17g") for v in row)])


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays])


BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state, applied)``. A non-finite gradient leaves
    parameters and state untouched and reports ``applied=False``.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise dg.ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    if not all(np.all(np.isfinite(g)) for g in grads):
        return list(params), state, False
    t = state.t + 1
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(m=new_m, v=new_v, t=t), True


# --------------------------------------------------------------------------
# forward graphs


def _forward(params: ModelParams, X: np.ndarray, arch: Architecture):
    enc = [dg.param(a) for a in params.enc]
    dec = [dg.param(a) for a in params.dec]
    P = dg.param(params.P.reshape(-1, 1))
    Z = mlp_forward(enc, dg.const(X), arch.activation, arch.latent_activation)
    X_rec = mlp_forward(dec, Z, arch.activation)
    z_p = project_graph(Z, P)
    return enc, dec, P, X_rec, z_p


def evaluate_losses(params, arch, X, t, S, loss_cfg: LossConfig):
    """Full-set ``(rec, corr, joint)``; corr is evaluated even when ``lam == 0``."""
    _, _, _, X_rec, z_p = _forward(params, X, arch)
    cfg = LossConfig(eta=loss_cfg.eta, lam=1.0, eps_v=loss_cfg.eps_v)
    _, rec, corr = joint_terms(dg.const(X), X_rec, z_p, t, S, cfg)
    rec, corr = float(rec.value[0, 0]), float(corr.value[0, 0])
    return rec, corr, rec + loss_cfg.lam * corr


class _Optimizers:
    """Adam state for encoder+decoder and a separate one for P."""

    def __init__(self, params: ModelParams, seed: int):
        self.ae = AdamState.zeros_like([*params.enc, *params.dec])
        self.pe = AdamState.zeros_like([params.P])
        self.reinit_rng = np.random.default_rng(subseed(seed, "reinit"))
        self.reinits = 0

    def step_ae(self, params, g_enc, g_dec, lr):
        arrays = [*params.enc, *params.dec]
        new, self.ae, ok = adam_step(arrays, [*g_enc, *g_dec], self.ae, lr)
        n = len(params.enc)
        return ModelParams(enc=new[:n], dec=new[n:], P=params.P), ok

    def step_pe(self, params, g_P, lr):
        (P,), self.pe, ok = adam_step([params.P], [g_P], self.pe, lr)
        if np.linalg.norm(P) < MIN_DIRECTION_NORM:
            P = random_direction(self.reinit_rng, P.size)
            self.reinits += 1
        return ModelParams(enc=params.enc, dec=params.dec, P=P), ok


def _joint_step(params, opt, X, t, S, arch, loss_cfg, lr):
    """One L_joint update of all parameters; returns (params, rec, corr, joint, ok)."""
    enc, dec, P, X_rec, z_p = _forward(params, X, arch)
    joint, rec, corr = joint_terms(dg.const(X), X_rec, z_p, t, S, loss_cfg)
    if corr is None:
        corr_value = float(corr_loss(z_p, t, S, loss_cfg.eta, loss_cfg.eps_v).value[0, 0])
    else:
        corr_value = float(corr.value[0, 0])
    grads = dg.backward(joint, [*enc, *dec, P])
    n = len(enc)
    g_enc, g_dec, g_P = grads[:n], grads[n : n + len(dec)], grads[-1].reshape(-1)
    finite = all(np.all(np.isfinite(g)) for g in grads)
    if finite:
        params, _ = opt.step_ae(params, g_enc, g_dec, lr)
        params, _ = opt.step_pe(params, g_P, lr)
    return params, float(rec.value[0, 0]), corr_value, float(joint.value[0, 0]), finite


def _rec_step(params, opt, X, arch, lr):
    """One L_rec update of encoder and decoder only; P is left as is."""
    enc, dec, _, X_rec, _ = _forward(params, X, arch)
    rec = dg.reduce_mean(dg.square(dg.sub(dg.const(X), X_rec)))
    grads = dg.backward(rec, [*enc, *dec])
    n = len(enc)
    new, ok = opt.step_ae(params, grads[:n], grads[n:], lr)
    return new, float(rec.value[0, 0]), ok


def _labelled_arrays(dataset: Dataset, config: TrainConfig):
    lab = dataset.subset(np.flatnonzero(dataset.labelled))
    t, S = lab.target_and_biases(config.target, config.active_biases)
    return lab.X, t, S


def _record_val(history, params, arch, val, config, loss_cfg, fallback):
    X, t, S = _labelled_arrays(val, config) if val is not None else fallback
    rec, corr, joint = evaluate_losses(params, arch, X, t, S, loss_cfg)
    history.rec_val.append(rec)
    history.corr_val.append(corr)
    history.joint_val.append(joint)


def _check_arch(dataset, arch):
    if dataset.m != arch.input_dim:
        raise dg.ShapeError(f"dataset has {dataset.m} features, architecture expects {arch.input_dim}")


def train_supervised(
    dataset: Dataset,
    arch: Architecture,
    config: TrainConfig,
    val: Dataset | None = None,
    init: ModelParams | None = None,
    callback=None,
):
    """Minimise ``L_rec + lam * L_corr`` over the labelled rows.

    Validation losses use ``val`` when given, else the full training set.
    ``callback(epoch, params)`` runs after every epoch. Returns
    ``(params, history)``.
    """
    _check_arch(dataset, arch)
    X, t, S = _labelled_arrays(dataset, config)
    if X.shape[0] < config.batch_size:
        raise ValueError(f"{X.shape[0]} labelled rows is fewer than one batch of {config.batch_size}")
    loss_cfg = config.loss_config()
    params = init.copy() if init is not None else init_params(arch, subseed(config.seed, "init"))
    opt = _Optimizers(params, config.seed)
    shuffle = np.random.default_rng(subseed(config.seed, "shuffle"))
    history = TrainHistory()
    bs = config.batch_size

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = shuffle.permutation(X.shape[0])
        recs, corrs, joints = [], [], []
        skipped = nonfinite = attempted = 0
        for j in range(0, order.size, bs):
            idx = order[j : j + bs]
            if idx.size < MIN_CORR_BATCH:
                break
            attempted += 1
            try:
                params, rec, corr, joint, ok = _joint_step(
                    params, opt, X[idx], t[idx], S[idx], arch, loss_cfg, config.lr
                )
            except DegenerateBatch:
                skipped += 1
                continue
            nonfinite += not ok
            recs.append(rec)
            corrs.append(corr)
            joints.append(joint)
        if skipped * 2 > attempted:
            raise TrainingAborted(epoch, f"{skipped} of {attempted} batches had a constant attribute")
        history.rec_train.append(float(np.mean(recs)))
        history.corr_train.append(float(np.mean(corrs)))
        history.joint_train.append(float(np.mean(joints)))
        history.skipped_batches.append(skipped)
        history.nonfinite_steps.append(nonfinite)
        history.phases.append(attempted - skipped)
        _record_val(history, params, arch, val, config, loss_cfg, (X, t, S))
        history.seconds.append(time.perf_counter() - started)
        _check_finite(history, epoch)
        if callback is not None:
            callback(epoch, params)
    history.notes["p_reinitialisations"] = opt.reinits
    return params, history


def train_semisupervised(
    unlabelled: np.ndarray,
    labelled: Dataset,
    arch: Architecture,
    config: TrainConfig,
    val: Dataset | None = None,
    init: ModelParams | None = None,
    check_pe_untouched: bool = True,
    callback=None,
):
    """Alternate a reconstruction step on an unlabelled half-batch with a joint
    step on a labelled half-batch.

    Each epoch draws ``N_sample = min(len(unlabelled), len(labelled))`` rows
    from both pools and walks them in half-batches. An empty unlabelled pool
    falls back to :func:`train_supervised`.
    """
    unlabelled = np.asarray(unlabelled, dtype=np.float64).reshape(-1, labelled.m)
    if unlabelled.shape[0] == 0:
        log.info("no unlabelled rows; falling back to supervised training")
        return train_supervised(labelled, arch, config, val=val, init=init, callback=callback)
    _check_arch(labelled, arch)
    X_l, t, S = _labelled_arrays(labelled, config)
    half = config.batch_size // 2
    if X_l.shape[0] < half:
        raise ValueError(f"{X_l.shape[0]} labelled rows is fewer than a half-batch of {half}")
    loss_cfg = config.loss_config()
    params = init.copy() if init is not None else init_params(arch, subseed(config.seed, "init"))
    opt = _Optimizers(params, config.seed)
    rng_u = np.random.default_rng(subseed(config.seed, "shuffle.unlabelled"))
    rng_l = np.random.default_rng(subseed(config.seed, "shuffle.labelled"))
    n_sample = min(unlabelled.shape[0], X_l.shape[0])
    history = TrainHistory(notes={"n_sample": n_sample})

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        us = rng_u.permutation(unlabelled.shape[0])[:n_sample]
        ls = rng_l.permutation(X_l.shape[0])[:n_sample]
        recs, corrs, joints = [], [], []
        skipped = nonfinite = attempted = phases = 0
        j = 0
        while j < n_sample:
            ut, lt = us[j : j + half], ls[j : j + half]
            if lt.size < MIN_CORR_BATCH:
                break
            P_before = params.P.copy()
            params, rec_u, ok = _rec_step(params, opt, unlabelled[ut], arch, config.lr)
            if check_pe_untouched and not np.array_equal(params.P, P_before):
                raise AssertionError("reconstruction step modified the projection direction")
            phases += 1
            nonfinite += not ok
            recs.append(rec_u)
            attempted += 1
            try:
                params, rec, corr, joint, ok = _joint_step(
                    params, opt, X_l[lt], t[lt], S[lt], arch, loss_cfg, config.lr
                )
                phases += 1
                nonfinite += not ok
                recs.append(rec)
                corrs.append(corr)
                joints.append(joint)
            except DegenerateBatch:
                skipped += 1
            j += half
        if skipped * 2 > attempted:
            raise TrainingAborted(epoch, f"{skipped} of {attempted} labelled half-batches had a constant attribute")
        history.rec_train.append(float(np.mean(recs)))
        history.corr_train.append(float(np.mean(corrs)))
        history.joint_train.append(float(np.mean(joints)))
        history.skipped_batches.append(skipped)
        history.nonfinite_steps.append(nonfinite)
        history.phases.append(phases)
        _record_val(history, params, arch, val, config, loss_cfg, (X_l, t, S))
        history.seconds.append(time.perf_counter() - started)
        _check_finite(history, epoch)
        if callback is not None:
            callback(epoch, params)
    history.notes["p_reinitialisations"] = opt.reinits
    return params, history


def _check_finite(history: TrainHistory, epoch: int):
    last = [getattr(history, c)[-1] for c in TrainHistory.LOSS_COLUMNS]
    if not all(math.isfinite(v) for v in last):
        raise TrainingAborted(epoch, "non-finite loss")


def train(dataset: Dataset, arch: Architecture, config: TrainConfig, val: Dataset | None = None, callback=None):
    """Dispatch on ``config.mode``; semi-supervised mode uses the unlabelled rows
    of ``dataset`` as the unlabelled pool."""
    if config.mode == "semi_supervised":
        unl = dataset.X[~dataset.labelled]
        lab = dataset.subset(np.flatnonzero(dataset.labelled))
        return train_semisupervised(unl, lab, arch, config, val=val, callback=callback)
    return train_supervised(dataset, arch, config, val=val, callback=callback)
