"""Decode points sampled along the learned direction P from the mean latent
point, and attach a predicted target to every frame."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from projfair import model as md
from projfair.evalkit import Predictor

DEFAULT_FRAMES = 10
SIGMA_SPAN = 3.0


@dataclass
class TraversalResult:
    k: np.ndarray
    frames: np.ndarray  # (h, m)
    z_p: np.ndarray
    t_hat: np.ndarray

    @property
    def difference_map(self) -> np.ndarray:
        """Last frame minus first frame, per observation feature."""
        return self.frames[-1] - self.frames[0]


def mean_latent(Z_test) -> np.ndarray:
    Z = np.asarray(Z_test, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.shape[0] == 0:
        raise ValueError("mean_latent needs at least one row")
    return Z.mean(axis=0)


def k_schedule(z_p_test, h: int = DEFAULT_FRAMES, mode: str = "sigma_range", p_norm: float = 1.0,
               predictor: Predictor | None = None, zp_ref: float | None = None,
               bounds: tuple[float, float] | None = None) -> np.ndarray:
    """Step sizes ``k_1 < ... < k_h`` for sampling ``d_bar + k P``.

    ``sigma_range`` spans z_p over +-3 standard deviations of ``z_p_test``.
    ``target_range`` picks the end points whose predicted targets equal
    ``bounds``, using ``z_p(d_bar + k P) = z_p(d_bar) + k |P|``.
    """
    if h < 2:
        raise ValueError("need at least two frames")
    if p_norm < md.MIN_DIRECTION_NORM:
        raise md.DegenerateDirection("projection direction has (near) zero norm")
    if mode == "sigma_range":
        sd = float(np.std(np.asarray(z_p_test, dtype=np.float64)))
        if sd == 0:
            raise ValueError("z_p of the test rows has zero spread")
        half = SIGMA_SPAN * sd / p_norm
        return np.linspace(-half, half, h)
    if mode == "target_range":
        if predictor is None or zp_ref is None or bounds is None:
            raise ValueError("target_range needs predictor, zp_ref and bounds")
        ends = [(predictor.inverse(b) - zp_ref) / p_norm for b in bounds]
        lo, hi = min(ends), max(ends)
        if lo == hi:
            raise ValueError("target bounds map to a single step")
        return np.linspace(lo, hi, h)
    raise ValueError(f"unknown schedule mode {mode!r}")


def run_traversal(params: md.ModelParams, arch: md.Architecture, predictor: Predictor,
                  d_bar, schedule) -> TraversalResult:
    P = np.asarray(params.P, dtype=np.float64)
    if np.linalg.norm(P) < md.MIN_DIRECTION_NORM:
        raise md.DegenerateDirection("projection direction has (near) zero norm")
    k = np.asarray(schedule, dtype=np.float64).reshape(-1)
    d_bar = np.asarray(d_bar, dtype=np.float64).reshape(-1)
    points = d_bar[None, :] + k[:, None] * P[None, :]
    # one row at a time so a frame never depends on the batch it sits in
    frames = np.vstack([md.decode(params, row[None, :], arch) for row in points])
    z_p = md.project(points, P)
    return TraversalResult(k=k, frames=frames, z_p=z_p, t_hat=predictor.score(z_p))


def _fmt(v) -> str:
    return format(float(v), ".17g")


def export_traversal(result: TraversalResult, out_dir, prefix: str = "traversal") -> tuple[Path, Path]:
    """Write ``<prefix>_frames.csv`` and ``<prefix>_diffmap.csv``; returns both paths.

    The difference-map rank is 1 for the largest absolute change, ties broken
    by feature index.
    """
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory {out_dir} does not exist")
    frames_path = out_dir / f"{prefix}_frames.csv"
    diff_path = out_dir / f"{prefix}_diffmap.csv"
    m = result.frames.shape[1]
    with open(frames_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "k", "z_p", "t_hat", *[f"x{i}" for i in range(m)]])
        for i in range(len(result.k)):
            w.writerow([i + 1, _fmt(result.k[i]), _fmt(result.z_p[i]), _fmt(result.t_hat[i]),
                        *map(_fmt, result.frames[i])])
    diff = result.difference_map
    order = np.lexsort((np.arange(m), -np.abs(diff)))
    rank = np.empty(m, dtype=int)
    rank[order] = np.arange(1, m + 1)
    with open(diff_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "difference", "abs_difference", "abs_rank"])
        for i in range(m):
            w.writerow([i, _fmt(diff[i]), _fmt(abs(diff[i])), rank[i]])
    return frames_path, diff_path


def wired_change(result: TraversalResult, wiring: dict[str, list[int]], target: str, biases) -> dict:
    """Median absolute change over target-wired columns and over columns wired
    only to biases."""
    diff = np.abs(result.difference_map)
    target_cols = set(wiring[target])
    bias_cols = set().union(*(set(wiring[b]) for b in biases)) - target_cols
    return {
        "target": float(np.median(diff[sorted(target_cols)])),
        "bias_only": float(np.median(diff[sorted(bias_cols)])) if bias_cols else float("nan"),
    }
