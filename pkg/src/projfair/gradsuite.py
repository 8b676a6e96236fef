"""Finite-difference checks of every differentiable op and of the joint loss."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from projfair import diffgraph as dg
from projfair import losses, model

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class OpResult:
    op: str
    configurations: int
    max_rel_error: float
    worst_param: str

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _weighted(out: dg.Node, R: np.ndarray) -> dg.Node:
    # random weights make every output element matter to the scalar loss
    return dg.reduce_sum(dg.mul(out, dg.const(R)))


def _away_from_zero(rng, shape, margin=1e-3):
    x = rng.uniform(-2, 2, size=shape)
    x[np.abs(x) < margin] = margin * 10
    return x


def _unary(fn, sampler):
    def case(rng):
        x = sampler(rng, (3, 2))
        R = rng.standard_normal((3, 2))
        return (lambda p: _weighted(fn(p[0]), R)), {"x": x}
    return case


def _binary(fn, shape_b=(3, 2), positive_b=False):
    def case(rng):
        a = rng.standard_normal((3, 2))
        b = rng.uniform(0.5, 2.0, size=shape_b) if positive_b else rng.standard_normal(shape_b)
        R = rng.standard_normal((3, 2))
        return (lambda p: _weighted(fn(p[0], p[1]), R)), {"a": a, "b": b}
    return case


def _matmul(rng):
    A = rng.standard_normal((3, 4))
    B = rng.standard_normal((4, 2))
    R = rng.standard_normal((3, 2))
    return (lambda p: _weighted(dg.matmul(p[0], p[1]), R)), {"A": A, "B": B}


def _transpose(rng):
    A = rng.standard_normal((3, 2))
    R = rng.standard_normal((2, 3))
    return (lambda p: _weighted(dg.transpose(p[0]), R)), {"A": A}


def _reduce(fn):
    def case(rng):
        x = rng.standard_normal((4, 3))
        c = rng.standard_normal()
        return (lambda p: dg.scale(fn(p[0]), c)), {"x": x}
    return case


def _pearson(rng):
    a = rng.standard_normal(10)
    b = 0.5 * a + rng.standard_normal(10)
    return (lambda p: losses.pearson_corr_node(p[0], p[1])), {"a": a, "b": b}


def _rec(rng):
    X = rng.standard_normal((5, 3))
    Y = rng.standard_normal((5, 3))
    return (lambda p: losses.rec_loss(p[0], p[1])), {"X": X, "X_rec": Y}


def _corr_loss(rng):
    d = 12
    t = rng.standard_normal(d)
    S = np.column_stack([rng.standard_normal(d), (rng.random(d) > 0.5).astype(float)])
    S[0, 1], S[1, 1] = 0.0, 1.0
    z = 0.7 * t + 0.3 * S[:, 0] + 0.5 * rng.standard_normal(d)
    eta = rng.uniform(0.1, 1.0)
    return (lambda p: losses.corr_loss(p[0], t, S, eta)), {"z_p": z}


GRAD_ARCH = model.Architecture(input_dim=6, latent_dim=3, enc_hidden=(5,), dec_hidden=(5,),
                               latent_activation="tanh")


def joint_loss_case(rng, arch=GRAD_ARCH, batch=8):
    """Joint loss of a freshly initialised model on a random batch, as a
    ``(builder, params)`` pair for :func:`diffgraph.grad_check`."""
    params = model.init_params(arch, int(rng.integers(2**31)))
    for a in params.enc + params.dec:
        a += 0.1 * rng.standard_normal(a.shape)
    X = rng.standard_normal((batch, arch.input_dim))
    t = rng.standard_normal(batch)
    S = np.column_stack([rng.standard_normal(batch), np.tile([0.0, 1.0], batch // 2)])
    cfg = losses.LossConfig(eta=0.5, lam=1.0)
    names = params.names()
    n_enc, n_dec = len(params.enc), len(params.dec)

    def build(p):
        enc, dec, P = p[:n_enc], p[n_enc : n_enc + n_dec], p[-1]
        Z = model.mlp_forward(enc, dg.const(X), arch.activation, arch.latent_activation)
        X_rec = model.mlp_forward(dec, Z, arch.activation)
        z_p = model.project_graph(Z, P)
        return losses.joint_loss(dg.const(X), X_rec, z_p, t, S, cfg)

    arrays = [*params.enc, *params.dec, params.P.reshape(-1, 1)]
    return build, dict(zip(names, arrays))


CASES = {
    "matmul": _matmul,
    "transpose": _transpose,
    "add": _binary(dg.add),
    "add_row": _binary(dg.add, shape_b=(1, 2)),
    "sub": _binary(dg.sub),
    "mul": _binary(dg.mul),
    "div": _binary(dg.div, positive_b=True),
    "scale": _unary(lambda x: dg.scale(x, 1.7), lambda r, s: r.standard_normal(s)),
    "square": _unary(dg.square, lambda r, s: r.standard_normal(s)),
    "abs": _unary(dg.abs, _away_from_zero),
    "tanh": _unary(dg.tanh, lambda r, s: r.standard_normal(s)),
    "sqrt": _unary(dg.sqrt, lambda r, s: r.uniform(0.2, 3.0, size=s)),
    "reduce_mean": _reduce(dg.reduce_mean),
    "reduce_sum": _reduce(dg.reduce_sum),
    "pearson_corr": _pearson,
    "rec_loss": _rec,
    "corr_loss": _corr_loss,
    "joint_loss": joint_loss_case,
}


def run(configurations: int = 100, seed: int = 0, ops=None) -> list[OpResult]:
    results = []
    for name, case in CASES.items():
        if ops is not None and name not in ops:
            continue
        rng = np.random.default_rng([seed, len(name), sum(map(ord, name))])
        worst, worst_param = 0.0, ""
        for _ in range(configurations):
            builder, params = case(rng)
            report = dg.grad_check(builder, params, eps=EPS)
            for pname, err in report.max_rel_error.items():
                if err > worst or not worst_param:
                    worst, worst_param = max(err, worst), pname
        results.append(OpResult(name, configurations, worst, worst_param))
    return results


def format_results(results: list[OpResult], seconds: float | None = None) -> str:
    lines = [f"{'op':<14}{'configs':>8}{'max rel err':>14}  worst param  status"]
    for r in results:
        lines.append(f"{r.op:<14}{r.configurations:>8}{r.max_rel_error:>14.3e}  "
                     f"{r.worst_param:<11}  {'ok' if r.passed else 'FAIL'}")
    worst = max(results, key=lambda r: r.max_rel_error)
    verdict = "PASS" if all(r.passed for r in results) else f"FAIL (worst op: {worst.op}, param {worst.worst_param})"
    lines.append(f"overall: {verdict}; max relative error {worst.max_rel_error:.3e} (tolerance {TOLERANCE:g})")
    if seconds is not None:
        lines.append(f"runtime: {seconds:.1f} s")
    return "\n".join(lines) + "\n"


def timed_run(configurations: int = 100, seed: int = 0):
    started = time.perf_counter()
    results = run(configurations, seed)
    return results, time.perf_counter() - started
