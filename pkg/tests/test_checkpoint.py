import pytest
import torch

from tpcnet.checkpoint import CheckpointError, load_checkpoint, load_into, load_model, save_checkpoint
from tpcnet.network import NetworkConfig, TPCNet, build_model, param_tree

CFG = NetworkConfig(base_channels=4)


@pytest.fixture
def saved(tmp_path):
    model = build_model(CFG, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, CFG, step=17)
    return model, path


def test_round_trip_is_bit_exact(saved, tmp_path):
    model, path = saved
    params, cfg, step = load_checkpoint(path)
    assert cfg == CFG and step == 17
    assert list(params) == list(param_tree(model))
    for name, p in param_tree(model).items():
        assert torch.equal(params[name], p.detach())
    again = tmp_path / "again.ckpt"
    save_checkpoint(again, params, cfg, step)
    assert again.read_bytes() == path.read_bytes()


def test_load_model_reproduces_outputs(saved):
    model, path = saved
    loaded, step = load_model(path)
    x = torch.rand(1, 3, 32, 32)
    with torch.no_grad():
        assert torch.equal(model(x), loaded(x))


@pytest.mark.parametrize("cut", [1, 100, 5000])
def test_truncated_file_is_rejected(saved, cut):
    _, path = saved
    raw = path.read_bytes()
    path.write_bytes(raw[:-cut])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_corrupted_payload_is_rejected(saved):
    _, path = saved
    raw = bytearray(path.read_bytes())
    raw[-10] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_version_mismatch_is_rejected(saved):
    _, path = saved
    path.write_bytes(path.read_bytes().replace(b"version 1\n", b"version 9\n", 1))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"hello\nworld\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_shape_audit(saved):
    _, path = saved
    params, _, _ = load_checkpoint(path)
    other = TPCNet(NetworkConfig(base_channels=8))
    with pytest.raises(CheckpointError):
        load_into(other, params)
    name = next(iter(params))
    params[name] = torch.zeros(1)
    with pytest.raises(CheckpointError):
        load_into(TPCNet(CFG), params)
