"""Encoder, decoder and projection estimator, plus checkpoint persistence."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from projfair import diffgraph as dg

FORMAT_VERSION = 1
MAGIC = b"PFCK"
MIN_DIRECTION_NORM = 1e-8


class DegenerateDirection(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    latent_dim: int
    enc_hidden: tuple[int, ...] = (64,)
    dec_hidden: tuple[int, ...] = (64,)
    activation: str = "tanh"
    latent_activation: str = "tanh"

    def __post_init__(self):
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be at least 2")
        if self.input_dim < self.latent_dim:
            raise ValueError("input_dim must be >= latent_dim")
        if not self.enc_hidden or not self.dec_hidden:
            raise ValueError("encoder and decoder need at least one hidden layer")
        for act in (self.activation, self.latent_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    def enc_widths(self):
        return [self.input_dim, *self.enc_hidden, self.latent_dim]

    def dec_widths(self):
        return [self.latent_dim, *self.dec_hidden, self.input_dim]


ACTIVATIONS = {"tanh": dg.tanh, "linear": lambda x: x}


@dataclass
class ModelParams:
    """Weights as ``[W0, b0, W1, b1, ...]`` per network, plus the direction P.

    P is kept unnormalized; every projection divides by its norm.
    """

    enc: list[np.ndarray]
    dec: list[np.ndarray]
    P: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in checkpoint order: encoder, decoder, P."""
        return [*self.enc, *self.dec, self.P]

    def names(self) -> list[str]:
        enc = [f"enc.{'W' if i % 2 == 0 else 'b'}{i // 2}" for i in range(len(self.enc))]
        dec = [f"dec.{'W' if i % 2 == 0 else 'b'}{i // 2}" for i in range(len(self.dec))]
        return [*enc, *dec, "pe.P"]

    @classmethod
    def from_arrays(cls, arrays, n_enc: int, n_dec: int) -> "ModelParams":
        arrays = list(arrays)
        return cls(
            enc=arrays[:n_enc],
            dec=arrays[n_enc : n_enc + n_dec],
            P=arrays[n_enc + n_dec],
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            enc=[a.copy() for a in self.enc],
            dec=[a.copy() for a in self.dec],
            P=self.P.copy(),
        )

    def equals(self, other: "ModelParams") -> bool:
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs)
        )


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _mlp_params(rng, widths):
    out = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        out.append(_glorot(rng, fan_in, fan_out))
        out.append(np.zeros((1, fan_out)))
    return out


def random_direction(rng, n: int) -> np.ndarray:
    while True:
        p = rng.standard_normal(n)
        norm = np.linalg.norm(p)
        if norm > MIN_DIRECTION_NORM:
            return p / norm


def init_params(arch: Architecture, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    enc = _mlp_params(rng, arch.enc_widths())
    dec = _mlp_params(rng, arch.dec_widths())
    return ModelParams(enc=enc, dec=dec, P=random_direction(rng, arch.latent_dim))


# --------------------------------------------------------------------------
# graph-level forward passes, shared by training and evaluation


def mlp_forward(layers, x: dg.Node, activation: str, output_activation: str = "linear") -> dg.Node:
    act = ACTIVATIONS[activation]
    n_layers = len(layers) // 2
    h = x
    for i in range(n_layers):
        h = dg.add(dg.matmul(h, layers[2 * i]), layers[2 * i + 1])
        if i < n_layers - 1:
            h = act(h)
    return ACTIVATIONS[output_activation](h)


def project_graph(Z: dg.Node, P: dg.Node) -> dg.Node:
    norm = dg.sqrt(dg.reduce_sum(dg.square(P)))
    return dg.div(dg.matmul(Z, P), norm)


def _check_input(X, width, what):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != width:
        raise dg.ShapeError(f"{what}: expected {width} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{what}: non-finite input")
    return X


def encode(params: ModelParams, X, arch: Architecture) -> np.ndarray:
    X = _check_input(X, arch.input_dim, "encode")
    leaves = [dg.const(a) for a in params.enc]
    return mlp_forward(leaves, dg.const(X), arch.activation, arch.latent_activation).value


def decode(params: ModelParams, Z, arch: Architecture) -> np.ndarray:
    Z = _check_input(Z, arch.latent_dim, "decode")
    leaves = [dg.const(a) for a in params.dec]
    return mlp_forward(leaves, dg.const(Z), arch.activation).value


def project(Z, P) -> np.ndarray:
    """Scalar projection of each latent row onto P: ``Z @ P / |P|``."""
    Z = np.asarray(Z, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64).reshape(-1)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.shape[1] != P.shape[0]:
        raise dg.ShapeError(f"project: latent width {Z.shape[1]} vs direction {P.shape[0]}")
    if np.linalg.norm(P) < MIN_DIRECTION_NORM:
        raise DegenerateDirection("projection direction has (near) zero norm")
    return project_graph(dg.const(Z), dg.const(P)).value[:, 0]


# --------------------------------------------------------------------------
# checkpoint format
#
#   4 bytes   magic "PFCK"
#   4 bytes   header length L, uint32 little-endian
#   L bytes   UTF-8 JSON header: format_version, input_dim, latent_dim,
#             enc_hidden, dec_hidden, activation, latent_activation, arrays [[name, rows, cols], ...]
#   rest      float64 little-endian values, arrays in header order (row-major):
#             enc.W0, enc.b0, ..., dec.W0, dec.b0, ..., pe.P


def save_checkpoint(params: ModelParams, arch: Architecture, path) -> None:
    arrays = params.arrays()
    shapes = [list(a.shape) if a.ndim == 2 else [a.shape[0], 1] for a in arrays]
    header = {
        "format_version": FORMAT_VERSION,
        "input_dim": arch.input_dim,
        "latent_dim": arch.latent_dim,
        "enc_hidden": list(arch.enc_hidden),
        "dec_hidden": list(arch.dec_hidden),
        "activation": arch.activation,
        "latent_activation": arch.latent_activation,
        "arrays": [[name, *shape] for name, shape in zip(params.names(), shapes)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + body)


def load_checkpoint(path, expect: Architecture | None = None):
    """Read a checkpoint; returns ``(params, arch)``.

    With ``expect`` given, the stored dimensions must match it.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"format version {header.get('format_version')} != supported {FORMAT_VERSION}"
        )
    arch = Architecture(
        input_dim=header["input_dim"],
        latent_dim=header["latent_dim"],
        enc_hidden=tuple(header["enc_hidden"]),
        dec_hidden=tuple(header["dec_hidden"]),
        activation=header["activation"],
        latent_activation=header.get("latent_activation", "tanh"),
    )
    specs = header["arrays"]
    n_values = sum(r * c for _, r, c in specs)
    body = raw[8 + hlen :]
    if len(body) != 8 * n_values:
        raise CheckpointError(
            f"truncated body: expected {8 * n_values} bytes, found {len(body)}"
        )
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for name, r, c in specs:
        a = values[pos : pos + r * c].reshape(r, c).copy()
        pos += r * c
        arrays.append(a.reshape(-1) if name == "pe.P" else a)

    n_enc = 2 * (len(arch.enc_hidden) + 1)
    n_dec = 2 * (len(arch.dec_hidden) + 1)
    if len(arrays) != n_enc + n_dec + 1:
        raise CheckpointError("array count inconsistent with architecture")
    params = ModelParams.from_arrays(arrays, n_enc, n_dec)
    expected = init_shapes(arch)
    if [a.shape for a in params.arrays()] != expected:
        raise CheckpointError("array shapes inconsistent with architecture")
    if expect is not None and expect != arch:
        raise CheckpointError(
            f"checkpoint architecture (m={arch.input_dim}, n={arch.latent_dim}) "
            f"does not match requested (m={expect.input_dim}, n={expect.latent_dim})"
        )
    return params, arch


def init_shapes(arch: Architecture):
    shapes = []
    for widths in (arch.enc_widths(), arch.dec_widths()):
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            shapes += [(fan_in, fan_out), (1, fan_out)]
    return shapes + [(arch.latent_dim,)]
