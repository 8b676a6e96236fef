import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from projfair import model as md
from projfair.synthdata import Dataset
from projfair.trainer import TrainConfig, train_supervised

ARCH = md.Architecture(input_dim=12, latent_dim=4, enc_hidden=(8,), dec_hidden=(8,))


def test_init_deterministic_and_unit_direction():
    a, b = md.init_params(ARCH, 7), md.init_params(ARCH, 7)
    assert a.equals(b)
    assert abs(np.linalg.norm(a.P) - 1.0) < 1e-12
    assert not a.equals(md.init_params(ARCH, 8))


def test_architecture_validation():
    with pytest.raises(ValueError):
        md.Architecture(input_dim=3, latent_dim=4)
    with pytest.raises(ValueError):
        md.Architecture(input_dim=8, latent_dim=4, activation="relu")
    with pytest.raises(ValueError):
        md.Architecture(input_dim=8, latent_dim=4, enc_hidden=())


def test_encode_shapes_and_duplicate_rows():
    p = md.init_params(ARCH, 0)
    X = np.random.default_rng(0).standard_normal((64, 12))
    assert md.encode(p, X, ARCH).shape == (64, 4)
    Z = md.encode(p, np.vstack([X[0], X[0]]), ARCH)
    assert np.array_equal(Z[0], Z[1])
    X_rec = md.decode(p, md.encode(p, X, ARCH), ARCH)
    assert X_rec.shape == (64, 12) and np.all(np.isfinite(X_rec))


def test_encode_rejects_wrong_width():
    p = md.init_params(ARCH, 0)
    with pytest.raises(ValueError):
        md.encode(p, np.ones((3, 11)), ARCH)


def test_decode_zero_latent_gives_constant_rows():
    p = md.init_params(ARCH, 0)
    out = md.decode(p, np.zeros((5, 4)), ARCH)
    assert out.shape == (5, 12)
    assert np.all(out == out[0])


def test_linear_identity_task_fits():
    arch = md.Architecture(input_dim=4, latent_dim=4, enc_hidden=(4,), dec_hidden=(4,),
                           activation="linear", latent_activation="linear")
    rng = np.random.default_rng(1)
    X = rng.standard_normal((256, 4))
    ds = Dataset(X=X, attributes={"t": rng.standard_normal(256)}, labelled=np.ones(256, bool))
    cfg = TrainConfig(epochs=150, batch_size=32, lr=1e-2, mode="ablation_plain_ae", target="t")
    params, _ = train_supervised(ds, arch, cfg)
    assert np.mean((md.decode(params, md.encode(params, X, arch), arch) - X) ** 2) < 1e-2


def test_project_examples():
    assert md.project([[1.0, 2.0, 3.0]], [1.0, 0.0, 0.0])[0] == 1.0
    assert md.project([[1.0, 2.0, 0.0]], [1.0, 1.0, 0.0])[0] == pytest.approx(3 / np.sqrt(2), abs=1e-12)


def test_project_rejects_degenerate_direction():
    with pytest.raises(md.DegenerateDirection):
        md.project(np.ones((2, 3)), np.zeros(3))


vec = arrays(np.float64, 5, elements=st.floats(-2, 2, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(vec, vec, st.floats(-4, 4), st.floats(0.01, 100))
def test_projection_algebra(d_bar, P, k, c):
    if np.linalg.norm(P) < 1e-3:
        P = P + 1.0
    Z = np.vstack([d_bar, d_bar + 1.0])
    assert np.allclose(md.project(Z, c * P), md.project(Z, P), atol=1e-12, rtol=0)
    step = md.project((d_bar + k * P)[None, :], P)[0] - md.project(d_bar[None, :], P)[0]
    assert abs(step - k * np.linalg.norm(P)) < 1e-9


def test_checkpoint_roundtrip(tmp_path):
    arch = md.Architecture(input_dim=12, latent_dim=4, enc_hidden=(8, 6), dec_hidden=(5,),
                           latent_activation="linear")
    p = md.init_params(arch, 3)
    path = tmp_path / "ck.bin"
    md.save_checkpoint(p, arch, path)
    q, arch2 = md.load_checkpoint(path)
    assert arch2 == arch
    assert all(np.array_equal(x, y) for x, y in zip(p.arrays(), q.arrays()))


def test_checkpoint_truncated(tmp_path):
    p = md.init_params(ARCH, 0)
    path = tmp_path / "ck.bin"
    md.save_checkpoint(p, ARCH, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(md.CheckpointError, match="truncated"):
        md.load_checkpoint(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(md.CheckpointError, match="magic"):
        md.load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    p = md.init_params(ARCH, 0)
    path = tmp_path / "ck.bin"
    md.save_checkpoint(p, ARCH, path)
    raw = path.read_bytes()
    path.write_bytes(raw.replace(b'"format_version": 1', b'"format_version": 9'))
    with pytest.raises(md.CheckpointError, match="version"):
        md.load_checkpoint(path)


def test_checkpoint_dimension_guard(tmp_path):
    arch32 = md.Architecture(input_dim=64, latent_dim=32)
    path = tmp_path / "ck.bin"
    md.save_checkpoint(md.init_params(arch32, 0), arch32, path)
    with pytest.raises(md.CheckpointError):
        md.load_checkpoint(path, expect=md.Architecture(input_dim=64, latent_dim=64))
