"""Acceptance suite: one test per benchmark criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s`` to see them).

The shared benchmark setup trains a full-size desk-scale codec once; the
spectral-efficiency criterion trains its own pair of bundles at a longer
delay spread so the reconstruction error sits in the regime where a
zero-forcing precoder built from imperfect CSI is strictly dominated.
"""

import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from conftest import assert_weights_feasible
from helpers import gd_column_oracle, qp_weight_oracle

import manifold_csi as mc
from manifold_csi.codec import _incremental_weights
from manifold_csi.landmarks import LocalWeights

SEED = 42
INFER_LAM = 0.01  # runtime locality override used by the benchmark evaluations


def report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {name} ({detail})")
    assert ok, f"criterion {number}: {name} [{detail}]"


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def benchmark():
    """Criterion-4 setup: N_f=48, N_t=8, N=2000, M=100, k=30, gamma=1/8.

    The delay spread keeps the channel's linear span inside the d=12 budget,
    so reconstruction quality is governed by the landmarks rather than the
    shared embedding stage, while the unquantized error stays above the
    12-bit quantization floor.
    """
    channel = mc.ChannelConfig(
        n_tx=8, n_freq=48, delay_spread_s=110e-9, delay_cap_factor=3.0, rng_seed=SEED
    )
    data = mc.build_dataset(channel, slot_count=250)
    train = mc.TrainConfig(
        m_landmarks=100, k_neighbors=30, intrinsic_dim=12, max_iters=40, rng_seed=SEED
    )
    learned = mc.fit_codec_bundle(data, train)
    random_bundle = mc.fit_codec_bundle(data, replace(train, max_iters=0))
    embedding = mc.embed_training_set(data, 12)
    quantizers = {bits: mc.fit_quantizer(embedding, bits) for bits in (4, 12)}
    test_channel = replace(channel, rng_seed=SEED + 7919)
    test_slots = [mc.real_stack(mc.generate_slot(test_channel, s)) for s in range(200)]
    return {
        "channel": channel,
        "train": train,
        "data": data,
        "learned": learned,
        "random": random_bundle,
        "quantizers": quantizers,
        "test_slots": test_slots,
    }


def eval_nmse(bundle, slots, k=None, lam=INFER_LAM, quantizer=None, snr_db=None, noise_seed=0):
    recon = []
    for i, true_csi in enumerate(slots):
        observed = true_csi
        if snr_db is not None:
            observed = mc.add_estimation_noise(true_csi, snr_db, rng=noise_seed + i)
        embedding, _ = mc.compress(observed, bundle, k=k, lam=lam)
        if quantizer is not None:
            embedding = mc.decode_frame(mc.encode_frame(embedding, quantizer), quantizer)
        recon.append(mc.reconstruct(embedding, bundle, k=k, lam=lam))
    return mc.nmse(np.stack(slots), np.stack(recon))


# ---------------------------------------------------------------------------
# criteria


def test_criterion_1_monotone_convergence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for run in range(20):
        n_freq = int(rng.choice([8, 16]))
        slots = int(rng.integers(30, 120))
        channel = mc.ChannelConfig(
            n_tx=4,
            n_freq=n_freq,
            n_clusters=int(rng.integers(3, 12)),
            rays_per_cluster=int(rng.integers(2, 8)),
            delay_spread_s=float(rng.choice([50e-9, 150e-9, 300e-9])),
            rng_seed=int(rng.integers(0, 2**31)),
        )
        data = mc.build_dataset(channel, slot_count=slots)
        n = data.shape[1]
        m = int(rng.integers(10, min(80, n // 2)))
        config = mc.TrainConfig(
            m_landmarks=m,
            k_neighbors=int(rng.integers(2, min(10, m) + 1)),
            intrinsic_dim=2,
            lam=float(rng.choice([0.0, 1e-3, 1e-2, 5e-2])),
            mu=float(rng.choice([0.0, 1e-3, 1e-2])),
            max_iters=8,
            rel_tol=0.0,
            rng_seed=int(rng.integers(0, 2**31)),
        )
        assert n <= 1000 and m <= 100
        _, _, trace = mc.train_landmarks(data, config)
        totals = np.asarray(trace.total)
        rel_increase = np.diff(totals) / totals[:-1]
        worst = max(worst, float(rel_increase.max(initial=-np.inf)))
    report(1, "monotone convergence over 20 random runs", worst <= 1e-9,
           f"worst relative increase {worst:.3e}")


def test_criterion_2_closed_forms_match_oracles():
    rng = np.random.default_rng(77)
    worst_w, worst_d = 0.0, 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 11))
        k = int(rng.integers(2, 6))
        x = rng.normal(size=dim)
        nb = rng.normal(size=(dim, k))
        lam = rng.uniform(0.0, 0.5)
        mu = rng.uniform(0.0, 0.2)
        g = rng.uniform(0.2, 3.0, size=k)
        w = mc.solve_local_weights(x, nb, lam=lam, mu=mu, g_hat=g, ridge_eps=1e-12)
        oracle = qp_weight_oracle(x, nb, lam, mu=mu, g_hat=g, ridge=1e-12)
        worst_w = max(worst_w, np.linalg.norm(w - oracle) / max(1.0, np.linalg.norm(oracle)))

        m, n = int(rng.integers(3, 7)), int(rng.integers(5, 10))
        X = rng.normal(size=(dim, n))
        D = rng.normal(size=(dim, m))
        kk = int(rng.integers(1, min(3, m) + 1))
        indices = np.stack([rng.choice(m, size=kk, replace=False) for _ in range(n)], axis=1)
        values = rng.normal(size=(kk, n))
        values /= values.sum(axis=0, keepdims=True)
        weights = LocalWeights(indices, values, m)
        dense = weights.to_dense()
        j = int(rng.integers(0, m))
        if np.sum(dense[j] ** 2) < 1e-8:
            continue
        closed = mc.update_dictionary_column(j, X, D, weights, lam)
        numeric = gd_column_oracle(j, X, D, dense, lam)
        worst_d = max(worst_d, np.linalg.norm(closed - numeric) / max(1.0, np.linalg.norm(closed)))
    ok = worst_w < 1e-6 and worst_d < 1e-6
    report(2, "closed-form solvers match independent minimizers", ok,
           f"weights dev {worst_w:.2e}, column dev {worst_d:.2e}")


def test_criterion_3_weight_constraints(benchmark):
    channel, train = benchmark["channel"], benchmark["train"]
    small = mc.TrainConfig(
        m_landmarks=40, k_neighbors=10, intrinsic_dim=6, max_iters=5, rng_seed=SEED
    )
    data = benchmark["data"][:, :600]
    dictionary, weights, _ = mc.train_landmarks(data, small)
    assert_weights_feasible(weights, dictionary, data)

    bundle = benchmark["learned"]
    queries = np.hstack(benchmark["test_slots"][:25])
    inc = _incremental_weights(queries, bundle.dh_dr, 30, INFER_LAM, bundle.config.ridge_eps)
    assert_weights_feasible(inc, bundle.dh_dr, queries)
    max_dev = max(
        np.abs(weights.column_sums() - 1.0).max(), np.abs(inc.column_sums() - 1.0).max()
    )
    report(3, "sum-to-one and exact kNN support on all weight paths", max_dev < 1e-10,
           f"max |sum-1| = {max_dev:.2e}")


def test_criterion_4_landmark_advantage(benchmark):
    slots = benchmark["test_slots"]
    learned = eval_nmse(benchmark["learned"], slots)
    randomized = eval_nmse(benchmark["random"], slots)
    margin = randomized - learned
    report(4, "learned landmarks beat random landmarks by >= 1 dB", margin >= 1.0,
           f"learned {learned:.2f} dB vs random {randomized:.2f} dB, margin {margin:.2f} dB")


def test_criterion_5_neighbor_trend(benchmark):
    slots = benchmark["test_slots"]
    at_10 = eval_nmse(benchmark["learned"], slots, k=10)
    at_50 = eval_nmse(benchmark["learned"], slots, k=50)
    report(5, "NMSE at k=50 <= NMSE at k=10", at_50 <= at_10,
           f"k=10: {at_10:.2f} dB, k=50: {at_50:.2f} dB")


def test_criterion_6_quantization_fidelity(benchmark):
    slots = benchmark["test_slots"]
    raw = eval_nmse(benchmark["learned"], slots)
    q12 = eval_nmse(benchmark["learned"], slots, quantizer=benchmark["quantizers"][12])
    q4 = eval_nmse(benchmark["learned"], slots, quantizer=benchmark["quantizers"][4])
    deg12, deg4 = q12 - raw, q4 - raw
    ok = deg12 < 1.0 and deg4 > deg12
    report(6, "12-bit quantization costs < 1 dB and 4-bit costs more", ok,
           f"12-bit degradation {deg12:.2f} dB, 4-bit degradation {deg4:.2f} dB")


def test_criterion_7_noise_robustness(benchmark):
    slots = benchmark["test_slots"]
    values = [
        eval_nmse(benchmark["learned"], slots, snr_db=snr, noise_seed=1000 * i)
        for i, snr in enumerate((5.0, 15.0, 30.0))
    ]
    ok = values[0] > values[1] > values[2] and all(math.isfinite(v) for v in values)
    report(7, "NMSE improves monotonically with estimation SNR", ok,
           "5/15/30 dB -> " + ", ".join(f"{v:.2f}" for v in values) + " dB")


def test_criterion_8_metric_unit_cases():
    rng = np.random.default_rng(5)
    h = rng.normal(size=(6, 4))
    e = rng.normal(size=(6, 4))
    e *= 0.1 * np.linalg.norm(h) / np.linalg.norm(e)
    nmse_dev = abs(mc.nmse(h, h + e) - (-20.0))

    hc = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
    cosine_dev = abs(mc.cosine_similarity(hc, (2.3 - 1.1j) * hc) - 1.0)

    exact = mc.nmse(h, h.copy()) == mc.NEG_INF_DB
    zero_db = abs(mc.nmse(h, np.zeros_like(h))) < 1e-12
    ok = nmse_dev < 1e-9 and cosine_dev < 1e-12 and exact and zero_db
    report(8, "analytic metric cases reproduce exactly", ok,
           f"-20 dB dev {nmse_dev:.1e}, cosine dev {cosine_dev:.1e}")


def test_criterion_9_round_trips(tmp_path):
    rng = np.random.default_rng(31337)
    for _ in range(1000):
        shape = (int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        h = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        assert np.array_equal(mc.complex_unstack(mc.real_stack(h)), h)
    for _ in range(1000):
        bits = int(rng.integers(1, 17))
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        codes = rng.integers(0, 1 << bits, size=shape).astype(np.uint16)
        assert np.array_equal(mc.unpack_codes(mc.pack_codes(codes, bits), bits, shape), codes)
    path = tmp_path / "t.mlcf"
    for i in range(1000):
        shape = (int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        a = rng.normal(size=shape)
        if i % 2:
            a = a + 1j * rng.normal(size=shape)
        mc.write_matrix(path, a)
        assert np.array_equal(mc.read_matrix(path), a)
    report(9, "stack/pack/file round trips bit-exact (1000 trials each)", True, "all exact")


@pytest.fixture(scope="module")
def se_setup():
    """Criterion-10 setup: one training set, bundles at gamma 1/16 and 1/8.

    The delay spread is chosen so reconstruction error is moderate: a
    zero-forcing precoder from near-perfect CSI differs from the ideal one
    only through a zero-mean first-order term, which makes a strict per-draw
    ordering a coin flip; at moderate error the interference penalty
    dominates and the ordering is strict.
    """
    channel = mc.ChannelConfig(
        n_tx=8, n_freq=48, delay_spread_s=185e-9, delay_cap_factor=3.0, rng_seed=SEED
    )
    data = mc.build_dataset(channel, slot_count=250)
    bundles = {}
    for d in (6, 12):
        config = mc.TrainConfig(
            m_landmarks=100, k_neighbors=30, intrinsic_dim=d, max_iters=40, rng_seed=SEED
        )
        bundles[d] = (
            mc.fit_codec_bundle(data, config),
            mc.fit_quantizer(mc.embed_training_set(data, d), 4 if d == 6 else 12),
        )
    return channel, bundles


def test_criterion_10_spectral_efficiency_ordering(se_setup):
    channel, bundles = se_setup

    def user_draws(draw):
        users_true = []
        for u in range(4):
            cfg = replace(channel, rng_seed=SEED + 104729 + 997 * draw + 31 * u)
            users_true.append(mc.real_stack(mc.generate_slot(cfg, 0)))
        return users_true

    def roundtrip(true_csi, d):
        bundle, quantizer = bundles[d]
        embedding, _ = mc.compress(true_csi, bundle)
        embedding = mc.decode_frame(mc.encode_frame(embedding, quantizer), quantizer)
        return mc.reconstruct(embedding, bundle)

    violations = 0
    min_gap = np.inf
    max_gap_12 = -np.inf
    mean_gaps_12 = []
    for draw in range(50):
        users = user_draws(draw)
        h_true = np.stack([mc.complex_unstack(h) for h in users], axis=1)
        h_low = np.stack([mc.complex_unstack(roundtrip(h, 6)) for h in users], axis=1)
        h_high = np.stack([mc.complex_unstack(roundtrip(h, 12)) for h in users], axis=1)
        for snr_db in (0.0, 10.0, 20.0):
            se_perfect = mc.spectral_efficiency(h_true, h_true, snr_db)
            se_low = mc.spectral_efficiency(h_true, h_low, snr_db)
            se_high = mc.spectral_efficiency(h_true, h_high, snr_db)
            if se_low > se_perfect + 1e-9:
                violations += 1
            min_gap = min(min_gap, (se_perfect - se_low) / se_perfect)
            gap12 = (se_perfect - se_high) / se_perfect
            max_gap_12 = max(max_gap_12, gap12)
            mean_gaps_12.append(gap12)
    ok = violations == 0 and max_gap_12 < 0.15 and np.mean(mean_gaps_12) > 0.0
    report(
        10,
        "perfect-CSI SE upper-bounds reconstructed SE; 12-bit gap < 15%",
        ok,
        f"violations {violations}/150 (4-bit, gamma 1/16, min gap {min_gap*100:.2f}%), "
        f"12-bit gamma 1/8 max gap {max_gap_12*100:.2f}%, mean {np.mean(mean_gaps_12)*100:.2f}%",
    )
