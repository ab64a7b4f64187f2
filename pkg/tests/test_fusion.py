"""Fusion of repeated per-class measurements."""

import numpy as np
import pytest

from semnav.fusion import (SIGMA_FLOOR, FusionMode, fuse_class_measurements,
                           fused_from_sufficient_stats)


def test_single_measurement_is_identity():
    p = np.array([0.7, 0.2, 0.05, 0.05])
    s = np.array([0.1, 0.2, 0.3, 0.4])
    pf, sf = fuse_class_measurements([(p, s)])
    np.testing.assert_array_equal(pf, p)
    np.testing.assert_array_equal(sf, s)


def test_two_identical_measurements_halve_variance():
    # equal variances -> equal weights 1/2 -> sigma / sqrt(2) per class
    p = np.array([0.6, 0.3, 0.1])
    s = np.array([0.2, 0.1, 0.05])
    pf, sf = fuse_class_measurements([(p, s), (p, s)])
    np.testing.assert_allclose(pf, p, atol=1e-12)
    np.testing.assert_allclose(sf, s / np.sqrt(2.0), atol=1e-12)


def test_precise_measurement_dominates():
    # weight ratio (0.001)^-2 / ((0.001)^-2 + (0.5)^-2) = 0.999996
    p_a = np.array([0.9, 0.1])
    p_b = np.array([0.1, 0.9])
    s_a = np.full(2, 0.001)
    s_b = np.full(2, 0.5)
    pf, _ = fuse_class_measurements([(p_a, s_a), (p_b, s_b)])
    np.testing.assert_allclose(pf, p_a, atol=1e-3)


def test_zero_sigma_clamped_to_floor():
    p = np.array([1.0, 0.0])
    s = np.zeros(2)
    pf, sf = fuse_class_measurements([(p, s)])
    assert (sf == SIGMA_FLOOR).all()
    assert pf.sum() == pytest.approx(1.0, abs=1e-12)


def test_empty_history_rejected():
    with pytest.raises(ValueError):
        fuse_class_measurements([])


def test_literal_mode_normalizes_within_measurement():
    # weights normalized over classes: w_c = s_c^-2 / sum_c' s_c'^-2
    p = np.array([0.5, 0.5])
    s = np.array([0.1, 0.2])
    pf, sf = fuse_class_measurements([(p, s)], FusionMode.LITERAL_PAPER)
    lam = s**-2.0
    w = lam / lam.sum()
    expect_p = w * p / (w * p).sum()
    np.testing.assert_allclose(pf, expect_p, atol=1e-12)
    np.testing.assert_allclose(sf, w * s, atol=1e-12)
    # not the identity, unlike the measurement-normalized mode
    assert not np.allclose(pf, p)


def test_sufficient_stats_match_batch():
    rng = np.random.default_rng(3)
    for _ in range(50):
        k = rng.integers(1, 6)
        probs = rng.dirichlet(np.ones(4), size=k)
        sigmas = rng.uniform(0.02, 0.5, size=(k, 4))
        pf, sf = fuse_class_measurements(list(zip(probs, sigmas)))
        lam = sigmas**-2.0
        p2, s2 = fused_from_sufficient_stats(lam.sum(axis=0),
                                             (lam * probs).sum(axis=0))
        np.testing.assert_allclose(pf, p2, atol=1e-13)
        np.testing.assert_allclose(sf, s2, atol=1e-13)


def test_random_chains_preserve_simplex_and_monotonicity():
    # vectorized over many chains: running sufficient statistics per chain
    rng = np.random.default_rng(11)
    chains, C, length = 2000, 4, 6
    prec = np.full((chains, C), 0.5**-2)
    wsum = prec / C
    prev_sigma = np.sqrt(1.0 / prec)
    for _ in range(length):
        p = rng.dirichlet(np.ones(C), size=chains)
        s = np.maximum(rng.uniform(0.0, 0.6, size=(chains, C)), SIGMA_FLOOR)
        prec += s**-2.0
        wsum += s**-2.0 * p
        pf, sf = fused_from_sufficient_stats(prec, wsum)
        np.testing.assert_allclose(pf.sum(axis=1), 1.0, atol=1e-9)
        assert (sf <= prev_sigma + 1e-15).all()
        prev_sigma = sf
