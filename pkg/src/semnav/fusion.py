"""Per-class fusion of repeated semantic measurements.

A measurement is a pair (p, sigma): a class-probability vector and the
per-class standard deviations attached to it. Repeated measurements of one
point are combined into a single (p, sigma) with an inverse-variance
weighting; the combined probability vector is renormalized onto the simplex.

Two weighting conventions are supported because the inverse-variance weights
can be normalized two ways:

* ``MEASUREMENT_NORMALIZED`` (default): for each class, weights are
  normalized across measurements,
  ``w_kc = sigma_kc^-2 / sum_k' sigma_k'c^-2``. This is the classic best
  linear unbiased estimator per class; a single measurement fuses to itself
  and per-class variance never increases as measurements accumulate.
* ``LITERAL_PAPER``: weights are normalized across classes within each
  measurement, ``w_kc = sigma_kc^-2 / sum_c' sigma_kc'^-2``. Neither the
  identity at one measurement nor variance monotonicity holds under this
  convention; it is provided for comparison and selected explicitly.
"""

from __future__ import annotations

import enum

import numpy as np

SIGMA_FLOOR = 1e-6


class FusionMode(enum.Enum):
    MEASUREMENT_NORMALIZED = "measurement-normalized"
    LITERAL_PAPER = "literal-paper"


def fuse_class_measurements(history, mode: FusionMode = FusionMode.MEASUREMENT_NORMALIZED):
    """Fuse a measurement history into one (p, sigma) pair.

    `history` is a sequence of (p, sigma) pairs; each p is a length-C
    probability vector and each sigma a length-C vector of stds. Zero stds
    are clamped to SIGMA_FLOOR before the inverse-variance weighting.

    Returns (p_fused, sigma_fused) as float64 arrays.
    """
    if len(history) == 0:
        raise ValueError("empty measurement history")
    probs = np.asarray([p for p, _ in history], dtype=np.float64)
    sigmas = np.asarray([s for _, s in history], dtype=np.float64)
    if probs.ndim != 2 or probs.shape != sigmas.shape:
        raise ValueError("history entries must be matching (p, sigma) vectors")
    sigmas = np.maximum(sigmas, SIGMA_FLOOR)
    lam = sigmas**-2  # per-measurement, per-class precision

    if mode is FusionMode.MEASUREMENT_NORMALIZED:
        weights = lam / lam.sum(axis=0, keepdims=True)
    elif mode is FusionMode.LITERAL_PAPER:
        weights = lam / lam.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")

    p_raw = (weights * probs).sum(axis=0)
    z = p_raw.sum()
    if z <= 0.0:
        raise ValueError("degenerate fusion: weighted probabilities sum to zero")
    p_fused = p_raw / z
    sigma_fused = np.sqrt((weights**2 * sigmas**2).sum(axis=0))
    return p_fused, sigma_fused


def fused_from_sufficient_stats(precision_sum: np.ndarray, weighted_prob_sum: np.ndarray):
    """Measurement-normalized fusion from running sufficient statistics.

    With ``precision_sum = sum_k sigma_kc^-2`` and
    ``weighted_prob_sum = sum_k sigma_kc^-2 p_kc`` (per class), the batch
    result of :func:`fuse_class_measurements` is recovered exactly:
    the weighted probability mean is ``weighted_prob_sum / precision_sum``
    and the fused variance is ``1 / precision_sum``.

    Accepts per-point arrays of shape (..., C); returns (p, sigma) with the
    probability axis renormalized to sum to one.
    """
    mean = weighted_prob_sum / precision_sum
    z = mean.sum(axis=-1, keepdims=True)
    return mean / z, np.sqrt(1.0 / precision_sum)
