import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bamsr import ops
from bamsr.attention import AttentionSpec, count_params
from bamsr.autograd import Tensor, count_ops, no_grad
from bamsr.gradcheck import grad_check
from bamsr.metrics import bicubic_resize
from bamsr.network import Insertion, NetworkSpec, build, network_flops


def _spec(kind="bam", blocks=2, width=8, scale=2, insertion="per_block"):
    return NetworkSpec(blocks, width, scale, AttentionSpec(kind, width, 4, 3), insertion)


@pytest.mark.parametrize("scale", [2, 3, 4])
def test_output_shape(scale, rng):
    net = build(_spec(scale=scale), 0)
    with no_grad():
        y = net(Tensor(rng.uniform(size=(2, 3, 6, 5))))
    assert y.shape == (2, 3, 6 * scale, 5 * scale)


@pytest.mark.parametrize("kind", ["bam", "ca", "se", "cbam"])
@pytest.mark.parametrize("blocks", [1, 3])
def test_per_block_twin_param_difference(kind, blocks):
    spec = _spec(kind, blocks)
    with_attn, without = build(spec, 0), build(spec.with_attention("none"), 0)
    assert with_attn.num_parameters() - without.num_parameters() == blocks * count_params(spec.attention)


def test_insertion_policies_place_modules():
    both = build(_spec(insertion="both", blocks=2), 0)
    names = [n for n, _ in both.named_parameters()]
    assert any(n.startswith("pre_up_attn.") for n in names)
    assert any(n.startswith("body.1.attn.") for n in names)
    pre = build(_spec(insertion="pre_upsample"), 0)
    assert not any(".attn." in n for n, _ in pre.named_parameters())
    assert _spec(insertion="none").has_attention is False


def test_untrained_network_reproduces_bicubic(rng):
    net = build(_spec(scale=2), 0, dtype=np.float64)
    x = rng.uniform(size=(1, 3, 8, 7))
    with no_grad():
        y = net(Tensor(x)).data[0]
    assert_allclose(y, bicubic_resize(x[0], 16, 14, clamp=False), atol=1e-12)


@pytest.mark.parametrize("insertion", ["per_block", "pre_upsample", "both", "none"])
@pytest.mark.parametrize("scale", [2, 3, 4])
def test_flop_formula_matches_instrumented_count(insertion, scale, rng):
    spec = _spec("cbam", 2, 8, scale, insertion)
    net = build(spec, 0, dtype=np.float64)
    with count_ops() as counter, no_grad():
        net(Tensor(rng.uniform(size=(1, 3, 7, 6))))
    assert counter.total == network_flops(spec, 7, 6)


def test_same_seed_same_parameters():
    a, b = build(_spec(), 42), build(_spec(), 42)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert_array_equal(pa.data, pb.data)


def test_forward_is_batch_equivariant(rng):
    net = build(_spec(), 1, dtype=np.float64)
    for p in net.parameters():
        p.data = p.data + rng.normal(scale=0.05, size=p.shape)
    x = rng.uniform(size=(3, 3, 6, 6))
    with no_grad():
        whole = net(Tensor(x)).data
        for i in range(3):
            assert_allclose(net(Tensor(x[i : i + 1])).data[0], whole[i], atol=1e-12)


def test_host_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    net = build(NetworkSpec(1, 8, 2, AttentionSpec("bam", 8)), 3, dtype=np.float64)
    for p in net.parameters():
        p.data = p.data + rng.normal(scale=0.1, size=p.shape)
    x = rng.uniform(size=(2, 3, 12, 10))
    r = Tensor(rng.normal(size=(2, 3, 24, 20)))
    err = grad_check(lambda t: ops.sum_all(ops.mul(net(t), r)), x, params=net.parameters())
    assert err <= 1e-5


def test_invalid_specs_rejected():
    with pytest.raises(ValueError, match="scale"):
        NetworkSpec(2, 8, 5, AttentionSpec("bam", 8))
    with pytest.raises(ValueError, match="equal width"):
        NetworkSpec(2, 8, 2, AttentionSpec("bam", 16))
    with pytest.raises(ValueError, match="insertion"):
        NetworkSpec(2, 8, 2, AttentionSpec("bam", 8), "everywhere")
    # channel mismatch is fine when attention is off
    assert NetworkSpec(2, 8, 2, AttentionSpec("none", 16)).has_attention is False


def test_bad_inputs_rejected(rng):
    net = build(_spec(), 0)
    with pytest.raises(ValueError, match="N, 3, H, W"):
        net(Tensor(rng.uniform(size=(1, 4, 5, 5))))
    bad = rng.uniform(size=(1, 3, 5, 5))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        net(Tensor(bad))


def test_insertion_parse():
    assert Insertion.parse("BOTH") is Insertion.BOTH
