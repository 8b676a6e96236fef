"""Synthetic confounded datasets, CSV persistence and cross-validation folds.

Attributes are drawn from a Gaussian copula: a jointly Gaussian latent vector
whose binary members are thresholded at zero. The latent correlations are
adjusted so that the *observed* correlations (after thresholding) match the
requested matrix:

* continuous/binary pairs: ``r_obs = r_lat * sqrt(2 / pi)``
* binary/binary pairs:     ``r_obs = (2 / pi) * arcsin(r_lat)``

Observations are ``X = map(F @ W) + noise`` where the factor matrix ``F``
stacks the attribute signals and four nuisance normals. The loading matrix
``W`` (see :func:`signal_loadings`) wires each attribute to its own block of
observation columns and partially into the next block; nuisance factors own
the trailing block and load weakly on every column.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from projfair.seeding import subseed

log = logging.getLogger(__name__)

N_NUISANCE = 4
OWN_LOADING = (0.6, 1.4)
SPILL_LOADING = 0.5
NUISANCE_DENSE = 0.3


class SpecError(ValueError):
    pass


class NotPSD(SpecError):
    def __init__(self, eigenvalue: float, which: str = "correlation matrix"):
        self.eigenvalue = eigenvalue
        super().__init__(f"{which} is not positive semi-definite: eigenvalue {eigenvalue:.6g}")


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # "continuous" | "binary"
    role: str  # "target" | "bias"

    def __post_init__(self):
        if self.kind not in ("continuous", "binary"):
            raise SpecError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ("target", "bias"):
            raise SpecError(f"attribute {self.name!r}: unknown role {self.role!r}")


@dataclass
class GenSpec:
    d: int
    m: int
    attributes: list[Attribute]
    corr: np.ndarray
    signal: str = "linear"
    noise: float = 1.0
    seed: int = 0
    labelled_fraction: float = 1.0

    def __post_init__(self):
        self.corr = np.asarray(self.corr, dtype=np.float64)
        q = len(self.attributes)
        names = [a.name for a in self.attributes]
        if len(set(names)) != q:
            raise SpecError("attribute names must be unique")
        if sum(a.role == "target" for a in self.attributes) != 1:
            raise SpecError("exactly one attribute must have role 'target'")
        if self.corr.shape != (q, q):
            raise SpecError(f"corr must be {q}x{q}, got {self.corr.shape}")
        if not np.allclose(self.corr, self.corr.T, atol=1e-12):
            raise SpecError("corr must be symmetric")
        if not np.allclose(np.diag(self.corr), 1.0, atol=1e-12):
            raise SpecError("corr must have a unit diagonal")
        if self.m < q + N_NUISANCE:
            raise SpecError(f"m={self.m} must be at least attributes + {N_NUISANCE}")
        if self.d < 2:
            raise SpecError("d must be at least 2")
        if self.signal not in ("linear", "tanh"):
            raise SpecError(f"unknown signal map {self.signal!r}")
        if self.noise < 0:
            raise SpecError("noise must be >= 0")
        if not 0 < self.labelled_fraction <= 1:
            raise SpecError("labelled_fraction must lie in (0, 1]")

    @property
    def target(self) -> str:
        return next(a.name for a in self.attributes if a.role == "target")

    @property
    def biases(self) -> list[str]:
        return [a.name for a in self.attributes if a.role == "bias"]

    def to_config(self) -> dict[str, str]:
        return {
            "d": str(self.d),
            "m": str(self.m),
            "attributes": ", ".join(f"{a.name}:{a.kind}:{a.role}" for a in self.attributes),
            "corr": "; ".join(" ".join(repr(float(v)) for v in row) for row in self.corr),
            "signal": self.signal,
            "noise": repr(float(self.noise)),
            "seed": str(self.seed),
            "labelled_fraction": repr(float(self.labelled_fraction)),
        }

    @classmethod
    def from_config(cls, section: dict[str, str]) -> "GenSpec":
        known = {"d", "m", "attributes", "corr", "signal", "noise", "seed", "labelled_fraction"}
        unknown = set(section) - known
        if unknown:
            raise SpecError(f"unknown key(s): {', '.join(sorted(unknown))}")
        for key in ("d", "m", "attributes", "corr"):
            if key not in section:
                raise SpecError(f"missing key: {key}")
        attrs = []
        for item in section["attributes"].split(","):
            parts = [p.strip() for p in item.split(":")]
            if len(parts) != 3:
                raise SpecError(f"attributes: expected name:kind:role, got {item.strip()!r}")
            attrs.append(Attribute(*parts))
        try:
            corr = np.array(
                [[float(v) for v in row.replace(",", " ").split()] for row in section["corr"].split(";")]
            )
        except ValueError as exc:
            raise SpecError(f"corr: {exc}") from exc
        return cls(
            d=int(section["d"]),
            m=int(section["m"]),
            attributes=attrs,
            corr=corr,
            signal=section.get("signal", "linear"),
            noise=float(section.get("noise", 1.0)),
            seed=int(section.get("seed", 0)),
            labelled_fraction=float(section.get("labelled_fraction", 1.0)),
        )


@dataclass
class Dataset:
    X: np.ndarray
    attributes: dict[str, np.ndarray]
    labelled: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labelled = np.asarray(self.labelled, dtype=bool)
        d = self.X.shape[0]
        if self.labelled.shape != (d,):
            raise DataFormatError("label mask length differs from row count")
        for name, col in self.attributes.items():
            if np.asarray(col).shape != (d,):
                raise DataFormatError(f"attribute {name!r} length differs from row count")
        if not np.all(np.isfinite(self.X)):
            raise DataFormatError("X has non-finite entries")

    def __len__(self):
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            X=self.X[idx],
            attributes={k: v[idx] for k, v in self.attributes.items()},
            labelled=self.labelled[idx],
            provenance=self.provenance,
        )

    def target_and_biases(self, target: str, biases):
        missing = [n for n in [target, *biases] if n not in self.attributes]
        if missing:
            raise KeyError(f"unknown attribute(s): {', '.join(missing)}")
        t = self.attributes[target]
        S = np.column_stack([self.attributes[b] for b in biases]) if biases else np.zeros((len(self), 0))
        return t, S

    def equals(self, other: "Dataset") -> bool:
        return (
            np.array_equal(self.X, other.X)
            and list(self.attributes) == list(other.attributes)
            and all(np.array_equal(self.attributes[k], other.attributes[k]) for k in self.attributes)
            and np.array_equal(self.labelled, other.labelled)
        )


# --------------------------------------------------------------------------
# generation


def min_eigenvalue(C) -> float:
    return float(np.linalg.eigvalsh(C).min())


def latent_correlation(spec: GenSpec) -> np.ndarray:
    """Gaussian-copula correlations that reproduce ``spec.corr`` after thresholding."""
    kinds = [a.kind for a in spec.attributes]
    L = spec.corr.copy()
    q = len(kinds)
    for i in range(q):
        for j in range(q):
            if i == j:
                continue
            r = spec.corr[i, j]
            n_bin = (kinds[i] == "binary") + (kinds[j] == "binary")
            if n_bin == 1:
                L[i, j] = r / math.sqrt(2 / math.pi)
            elif n_bin == 2:
                L[i, j] = math.sin(math.pi * r / 2)
    if np.any(np.abs(L) > 1):
        raise SpecError("requested correlation with a binary attribute exceeds the reachable range")
    return L


def signal_loadings(spec: GenSpec):
    """Loading matrix ``W`` of shape ``(q + 4, m)`` and the column wiring.

    Returns ``(W, wiring)`` where ``wiring[name]`` is the sorted array of
    observation columns that attribute loads on.
    """
    q, m = len(spec.attributes), spec.m
    rng = np.random.default_rng(subseed(spec.seed, "wiring"))
    n_nuis_cols = max(N_NUISANCE, m // 5)
    width = (m - n_nuis_cols) // q
    W = np.zeros((q + N_NUISANCE, m))
    wiring = {}
    overlap = max(1, width // 4)
    for j, attr in enumerate(spec.attributes):
        own = np.arange(j * width, (j + 1) * width)
        nxt = (j + 1) * width
        spill = np.arange(nxt, min(nxt + overlap, m))
        W[j, own] = rng.uniform(*OWN_LOADING, size=own.size)
        W[j, spill] = SPILL_LOADING
        wiring[attr.name] = np.concatenate([own, spill])
    nuis_start = q * width
    nuis_cols = np.array_split(np.arange(nuis_start, m), N_NUISANCE)
    W[q:, :] = NUISANCE_DENSE * rng.standard_normal((N_NUISANCE, m))
    for k, cols in enumerate(nuis_cols):
        W[q + k, cols] = rng.uniform(*OWN_LOADING, size=cols.size)
    return W, wiring


def generate(spec: GenSpec) -> Dataset:
    eig = min_eigenvalue(spec.corr)
    if eig < -1e-10:
        raise NotPSD(eig)
    L = latent_correlation(spec)
    eig = min_eigenvalue(L)
    if eig < -1e-10:
        raise NotPSD(eig, "copula-adjusted correlation matrix")

    rng = np.random.default_rng(subseed(spec.seed, "generate"))
    w, V = np.linalg.eigh(L)
    factor = V * np.sqrt(np.clip(w, 0, None))
    G = rng.standard_normal((spec.d, len(spec.attributes))) @ factor.T

    attributes, signals = {}, []
    for j, attr in enumerate(spec.attributes):
        if attr.kind == "binary":
            b = (G[:, j] > 0).astype(np.float64)
            attributes[attr.name] = b
            signals.append(2 * b - 1)
        else:
            attributes[attr.name] = G[:, j].copy()
            signals.append(G[:, j])
    nuisance = rng.standard_normal((spec.d, N_NUISANCE))
    F = np.column_stack([*signals, nuisance])

    W, wiring = signal_loadings(spec)
    clean = F @ W
    if spec.signal == "tanh":
        clean = 2.0 * np.tanh(clean / 2.0)
    X = clean + spec.noise * rng.standard_normal(clean.shape)

    n_lab = int(round(spec.labelled_fraction * spec.d))
    labelled = np.zeros(spec.d, dtype=bool)
    labelled[rng.permutation(spec.d)[:n_lab]] = True
    for name, col in attributes.items():
        if np.ptp(col[labelled]) == 0:
            raise SpecError(f"attribute {name!r} is constant over labelled rows")

    provenance = {
        "source": "generated",
        "spec": spec.to_config(),
        "wiring": {k: v.tolist() for k, v in wiring.items()},
    }
    return Dataset(X=X, attributes=attributes, labelled=labelled, provenance=provenance)


def experiment1_spec(seed: int = 0, d: int = 4000, m: int = 60, noise: float = 2.0) -> GenSpec:
    """Continuous target with a correlated continuous bias and a near-independent
    binary bias (height / BMI / gender analog)."""
    attrs = [
        Attribute("height", "continuous", "target"),
        Attribute("bmi", "continuous", "bias"),
        Attribute("gender", "binary", "bias"),
    ]
    corr = np.array(
        [
            [1.0, 0.243, -0.033],
            [0.243, 1.0, 0.035],
            [-0.033, 0.035, 1.0],
        ]
    )
    return GenSpec(d=d, m=m, attributes=attrs, corr=corr, noise=noise, seed=seed)


def experiment2_spec(
    seed: int = 0, d: int = 5000, m: int = 60, noise: float = 2.0, labelled_fraction: float = 0.3
) -> GenSpec:
    """Binary target whose biases jointly carry more signal than the target's
    own residual (exposure / ethnicity / smoking / maternal age / BMI / gender)."""
    attrs = [
        Attribute("exposure", "binary", "target"),
        Attribute("ethnicity", "binary", "bias"),
        Attribute("smoking", "binary", "bias"),
        Attribute("maternal_age", "continuous", "bias"),
        Attribute("bmi", "continuous", "bias"),
        Attribute("gender", "binary", "bias"),
    ]
    corr = np.array(
        [
            [1.0, 0.479, 0.288, 0.407, -0.318, -0.020],
            [0.479, 1.0, 0.15, 0.25, -0.15, 0.0],
            [0.288, 0.15, 1.0, 0.10, -0.05, 0.0],
            [0.407, 0.25, 0.10, 1.0, -0.15, 0.0],
            [-0.318, -0.15, -0.05, -0.15, 1.0, 0.05],
            [-0.020, 0.0, 0.0, 0.0, 0.05, 1.0],
        ]
    )
    return GenSpec(
        d=d, m=m, attributes=attrs, corr=corr, noise=noise, seed=seed,
        labelled_fraction=labelled_fraction,
    )


# --------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(dataset: Dataset, path) -> None:
    m = dataset.m
    header = [f"x{i}" for i in range(m)] + list(dataset.attributes) + ["labelled"]
    attr_cols = list(dataset.attributes.values())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in range(len(dataset)):
            row = [_fmt(v) for v in dataset.X[r]]
            row += [_fmt(col[r]) for col in attr_cols]
            row.append("1" if dataset.labelled[r] else "0")
            writer.writerow(row)


def read_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    seen = set()
    for col, name in enumerate(header):
        if name in seen:
            raise DataFormatError(f"{path}: duplicate column name {name!r} at column {col + 1}")
        seen.add(name)
    x_cols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if [header[i] for i in x_cols] != [f"x{k}" for k in range(len(x_cols))]:
        raise DataFormatError(f"{path}: feature columns must be x0..x{{m-1}} in order")
    has_mask = "labelled" in header
    attr_cols = [i for i, h in enumerate(header) if i not in x_cols and h != "labelled"]

    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {r} (line {r + 1}) has {len(row)} cells, expected {len(header)}"
            )
        for c, cell in enumerate(row):
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at row {r} (line {r + 1}), "
                    f"column {header[c]!r}"
                ) from None
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(f"{path}: non-finite value at row {r + 1}, column {header[c]!r}")

    if has_mask:
        mask_col = values[:, header.index("labelled")]
        if not np.all(np.isin(mask_col, (0.0, 1.0))):
            raise DataFormatError(f"{path}: 'labelled' column must be 0/1")
        labelled = mask_col == 1.0
    else:
        log.info("%s has no 'labelled' column; treating every row as labelled", path)
        labelled = np.ones(len(values), dtype=bool)
    return Dataset(
        X=values[:, x_cols],
        attributes={header[i]: values[:, i].copy() for i in attr_cols},
        labelled=labelled,
        provenance={"source": "file", "path": str(path)},
    )


# --------------------------------------------------------------------------
# folds


@dataclass
class Fold:
    train_labelled: np.ndarray
    test: np.ndarray
    unlabelled: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train_labelled, self.unlabelled]))


def kfold_split(dataset: Dataset, k: int, seed: int, stratify_on: str | None = None) -> list[Fold]:
    """Partition the labelled rows into ``k`` test folds.

    Unlabelled rows join every training split and never a test split.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    lab = np.flatnonzero(dataset.labelled)
    unl = np.flatnonzero(~dataset.labelled)
    if lab.size < k:
        raise ValueError(f"{lab.size} labelled rows cannot fill {k} folds")
    rng = np.random.default_rng(subseed(seed, "folds"))
    if stratify_on is None:
        order = rng.permutation(lab)
    else:
        col = dataset.attributes[stratify_on][lab]
        classes = np.unique(col)
        if not set(classes.tolist()) <= {0.0, 1.0}:
            raise ValueError(f"stratify attribute {stratify_on!r} is not binary")
        order = np.concatenate([rng.permutation(lab[col == c]) for c in classes])
    assignment = np.arange(order.size) % k
    folds = []
    for i in range(k):
        test = np.sort(order[assignment == i])
        train = np.sort(order[assignment != i])
        folds.append(Fold(train_labelled=train, test=test, unlabelled=unl.copy()))
    return folds
