"""Network assembly: shapes, validation, determinism, exact accounting."""

import numpy as np
import pytest

from depthpolyp import autodiff as ad
from depthpolyp.autodiff import Tensor
from depthpolyp.errors import ConfigurationError, DimensionError
from depthpolyp.network import (DepthPolypNet, NetworkConfig, mac_table,
                                parameter_summary, parameter_table, total_macs)

RNG = np.random.default_rng


def _image_batch(b, size, seed):
    return Tensor(RNG(seed).uniform(0, 1, (b, 3, size, size)).astype(np.float32))


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults_validate():
    cfg = NetworkConfig().validate()
    assert cfg.widths == (16, 32, 48, 64)
    assert cfg.stream_widths() == (128, 128)


def test_config_mini_stream_widths():
    assert NetworkConfig.mini().stream_widths() == (8, 8)


@pytest.mark.parametrize("bad", [
    dict(widths=(16, 32, 48)),
    dict(kernel_size=4),
    dict(unified_dim=63),
    dict(stream_dim=31),
    dict(groups=3),
])
def test_config_rejects_inconsistent_settings(bad):
    with pytest.raises(ConfigurationError):
        NetworkConfig(**bad).validate()


# ---------------------------------------------------------------------------
# forward contract


def test_forward_shapes_and_ranges():
    net = DepthPolypNet(NetworkConfig.mini())
    net.eval()
    with ad.no_grad():
        logits, depth = net(_image_batch(2, 32, 0))
    assert logits.shape == (2, 1, 32, 32)
    assert depth.shape == (2, 1, 32, 32)
    assert np.all(np.isfinite(logits.data))
    assert np.all((depth.data > 0) & (depth.data < 1))  # sigmoid range


def test_forward_default_config_at_native_size():
    net = DepthPolypNet()
    net.eval()
    with ad.no_grad():
        logits, depth = net(_image_batch(1, 64, 1))
    assert logits.shape == (1, 1, 64, 64)
    assert depth.shape == (1, 1, 64, 64)


def test_forward_rejects_bad_rank():
    net = DepthPolypNet(NetworkConfig.mini())
    with pytest.raises(DimensionError):
        net(Tensor(np.zeros((3, 32, 32), dtype=np.float32)))


def test_forward_rejects_wrong_channel_count():
    net = DepthPolypNet(NetworkConfig.mini())
    with pytest.raises(DimensionError):
        net(Tensor(np.zeros((1, 4, 32, 32), dtype=np.float32)))


def test_forward_rejects_size_not_multiple_of_32():
    net = DepthPolypNet(NetworkConfig.mini())
    with pytest.raises(DimensionError):
        net(Tensor(np.zeros((1, 3, 48, 48), dtype=np.float32)))


def test_same_seed_builds_identical_networks():
    a = DepthPolypNet(NetworkConfig(seed=5))
    b = DepthPolypNet(NetworkConfig(seed=5))
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)


def test_different_seeds_differ():
    a = DepthPolypNet(NetworkConfig(seed=5))
    b = DepthPolypNet(NetworkConfig(seed=6))
    diffs = [not np.array_equal(pa.data, pb.data)
             for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters())]
    assert any(diffs)


def test_eval_forward_is_deterministic():
    net = DepthPolypNet(NetworkConfig.mini())
    net.eval()
    x = _image_batch(1, 32, 2)
    with ad.no_grad():
        l1, d1 = net(x)
        l2, d2 = net(x)
    assert np.array_equal(l1.data, l2.data)
    assert np.array_equal(d1.data, d2.data)


# ---------------------------------------------------------------------------
# parameter accounting


def test_default_parameter_count_exact():
    net = DepthPolypNet()
    assert net.num_parameters() == 80334


def test_mini_parameter_count_exact():
    net = DepthPolypNet(NetworkConfig.mini())
    assert net.num_parameters() == 1262


def test_parameter_table_sums_to_module_count():
    net = DepthPolypNet(NetworkConfig.mini())
    table = parameter_table(net)
    assert sum(count for _, _, count in table) == net.num_parameters()
    for name, shape, count in table:
        assert count == int(np.prod(shape)) if shape else count == 1


def test_parameter_summary_buckets_cover_everything():
    net = DepthPolypNet()
    summary = parameter_summary(net)
    total = summary.pop("total")
    assert total == net.num_parameters()
    assert sum(summary.values()) == total
    assert all(v > 0 for v in summary.values())


def test_all_parameters_are_float32():
    net = DepthPolypNet(NetworkConfig.mini())
    for _, p in net.named_parameters():
        assert p.data.dtype == np.float32
    for _, b in net.named_buffers():
        assert b.dtype == np.float32


# ---------------------------------------------------------------------------
# MAC accounting: the static table must equal the instrumented tally exactly


def test_default_total_macs_at_64():
    assert total_macs(NetworkConfig(), 64, 64) == 7532560


def test_mini_total_macs_at_32():
    assert total_macs(NetworkConfig.mini(), 32, 32) == 77872


def test_macs_scale_linearly_with_batch():
    cfg = NetworkConfig.mini()
    assert total_macs(cfg, 32, 32, batch=3) == 3 * total_macs(cfg, 32, 32)


def test_mac_table_rejects_bad_size():
    with pytest.raises(ConfigurationError):
        mac_table(NetworkConfig(), 48, 48)


@pytest.mark.parametrize("cfg,size,expect", [
    (NetworkConfig.mini(), 32, 77872),
    (NetworkConfig(), 64, 7532560),
])
def test_instrumented_tally_matches_static_table(cfg, size, expect):
    net = DepthPolypNet(cfg)
    net.eval()
    x = _image_batch(1, size, 9)
    with ad.no_grad(), ad.tally_macs() as tally:
        net(x)
    assert tally.total == total_macs(cfg, size, size) == expect


def test_instrumented_tally_matches_static_table_batch2():
    cfg = NetworkConfig.mini()
    net = DepthPolypNet(cfg)
    net.eval()
    with ad.no_grad(), ad.tally_macs() as tally:
        net(_image_batch(2, 32, 10))
    assert tally.total == total_macs(cfg, 32, 32, batch=2)


def test_mac_table_rows_are_labelled_and_nonnegative():
    rows = mac_table(NetworkConfig(), 64, 64)
    names = [n for n, _ in rows]
    assert len(names) == len(set(names))
    assert all(n >= 0 for _, n in rows)
    assert any(name.startswith("encoder.") for name in names)
    assert any(name.endswith(".upsample") for name in names)
