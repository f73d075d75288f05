import numpy as np
import pytest

from manifold_csi import ChannelConfig, TrainConfig, build_dataset, fit_codec_bundle


@pytest.fixture(scope="session")
def small_channel():
    return ChannelConfig(
        n_tx=4,
        n_freq=16,
        n_clusters=6,
        rays_per_cluster=5,
        delay_spread_s=60e-9,
        rng_seed=3,
    )


@pytest.fixture(scope="session")
def small_dataset(small_channel):
    return build_dataset(small_channel, slot_count=80)  # (32, 320)


@pytest.fixture(scope="session")
def small_train_config():
    return TrainConfig(
        m_landmarks=40, k_neighbors=10, intrinsic_dim=6, max_iters=10, rng_seed=11
    )


@pytest.fixture(scope="session")
def small_bundle(small_dataset, small_train_config):
    return fit_codec_bundle(small_dataset, small_train_config)


def assert_weights_feasible(weights, dictionary=None, queries=None):
    """Sum-to-one within 1e-10 and support exactly on the k nearest landmarks."""
    sums = weights.column_sums()
    assert np.max(np.abs(sums - 1.0)) < 1e-10
    k, n = weights.indices.shape
    for i in range(n):
        assert len(set(weights.indices[:, i].tolist())) == k
    if dictionary is not None and queries is not None:
        for i in range(queries.shape[1]):
            d2 = np.sum((dictionary - queries[:, i][:, None]) ** 2, axis=0)
            order = sorted(range(dictionary.shape[1]), key=lambda j: (d2[j], j))
            assert sorted(weights.indices[:, i].tolist()) == sorted(order[:k])
