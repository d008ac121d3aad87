import numpy as np
import pytest
from numpy.testing import assert_array_equal

from bamsr.attention import AttentionSpec
from bamsr.checkpoint import CheckpointError, blob_path, load_checkpoint, save_checkpoint
from bamsr.data import Dataset, make_pair
from bamsr.network import NetworkSpec, build
from bamsr.synthetic import texture_image
from bamsr.train import TrainSpec, train


def _setup():
    rng = np.random.default_rng(0)
    pairs = [make_pair(texture_image(rng, 24), 2, f"t{i}") for i in range(3)]
    spec = NetworkSpec(2, 4, 2, AttentionSpec("cbam", 4, 4, 3), "both")
    return spec, Dataset(pairs, 2), TrainSpec(patch_size=6, batch=2, epochs=4, lr0=1e-3, seed=5, scale=2)


def test_round_trip_is_bit_exact(tmp_path):
    spec, ds, ts = _setup()
    res = train(build(spec, 1), ds, ts, stop_epoch=2)
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, res.net, res.optimizer, res.epoch, res.rng, ts)
    net, state = load_checkpoint(path)
    assert net.spec == spec and state.epoch == 2 and state.train_spec == ts
    for (n1, p1), (n2, p2) in zip(res.net.named_parameters(), net.named_parameters()):
        assert n1 == n2
        assert_array_equal(p1.data, p2.data)
    for n in res.optimizer.m:
        assert_array_equal(res.optimizer.m[n], state.optimizer.m[n])
        assert_array_equal(res.optimizer.v[n], state.optimizer.v[n])
    assert state.optimizer.t == res.optimizer.t
    assert state.rng.bit_generator.state == res.rng.bit_generator.state


def test_resave_is_byte_identical(tmp_path):
    spec, ds, ts = _setup()
    res = train(build(spec, 1), ds, ts, stop_epoch=1)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, res.net, res.optimizer, res.epoch, res.rng, ts)
    net, st = load_checkpoint(a)
    save_checkpoint(b, net, st.optimizer, st.epoch, st.rng, st.train_spec, st.seed)
    assert a.read_text().replace("a.ckpt.bin", "b.ckpt.bin") == b.read_text()
    assert blob_path(a).read_bytes() == blob_path(b).read_bytes()


def test_resume_continues_trace_exactly(tmp_path):
    spec, ds, ts = _setup()
    straight = train(build(spec, 1), ds, ts)
    path = tmp_path / "mid.ckpt"
    train(build(spec, 1), ds, ts, stop_epoch=2, checkpoint_path=path, checkpoint_every=2)
    net, st = load_checkpoint(path)
    rest = train(net, ds, st.train_spec, optimizer=st.optimizer, rng=st.rng, start_epoch=st.epoch)
    assert [r.mean_l1 for r in straight.trace[2:]] == [r.mean_l1 for r in rest.trace]


def _saved(tmp_path):
    spec, _, _ = _setup()
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, build(spec, 1), epoch=3, seed=1)
    return path


def test_wrong_shape_rejected(tmp_path):
    path = _saved(tmp_path)
    text = path.read_text().replace("head.weight 4x3x3x3", "head.weight 4x3x3x2")
    path.write_text(text)
    with pytest.raises(CheckpointError, match="head.weight"):
        load_checkpoint(path)


def test_truncated_blob_rejected(tmp_path):
    path = _saved(tmp_path)
    bp = blob_path(path)
    bp.write_bytes(bp.read_bytes()[:-4])
    with pytest.raises(CheckpointError, match="bytes"):
        load_checkpoint(path)


@pytest.mark.parametrize("edit", [
    lambda t: "garbage\n" + t,
    lambda t: t.replace("epoch 3\n", ""),
    lambda t: "\n".join(t.splitlines()[:-1]) + "\n",
    lambda t: t.replace("blocks=2", "blocks=two"),
])
def test_corrupt_manifest_rejected(tmp_path, edit):
    path = _saved(tmp_path)
    path.write_text(edit(path.read_text()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_files_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing.ckpt")
    path = _saved(tmp_path)
    blob_path(path).unlink()
    with pytest.raises(CheckpointError, match="blob"):
        load_checkpoint(path)
