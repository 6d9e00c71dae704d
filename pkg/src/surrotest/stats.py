"""Statistical acceptance layer: exact binomial test, curve smoothing, and
representative-accuracy selection from learning curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import LengthError, ParameterError


@dataclass
class BinomialTestResult:
    successes: int
    trials: int
    null_proportion: float
    p_value: float
    alpha: float
    reject: bool


def binomial_test(k: int, n: int, p0: float = 0.5,
                  alpha: float = 0.05) -> BinomialTestResult:
    """Exact two-sided one-sample binomial test.

    The p-value is min(1, 2 * min(P(X <= k), P(X >= k))) under
    Binomial(n, p0).  For the symmetric null p0 = 0.5 the tails are exact
    integer sums (so the result agrees bit-for-bit with direct mass
    summation); other nulls use log-space summation, which stays accurate
    far into the tails where naive products underflow.
    """
    if n < 1:
        raise ParameterError(f"need at least one trial, got n={n}")
    if not 0 <= k <= n:
        raise ParameterError(f"successes k={k} outside [0, {n}]")
    if not 0.0 < p0 < 1.0:
        raise ParameterError(f"null proportion must be in (0, 1), got {p0}")

    if p0 == 0.5:
        lower = sum(math.comb(n, i) for i in range(0, k + 1))
        upper = sum(math.comb(n, i) for i in range(k, n + 1))
        p = float(min(Fraction(1), 2 * Fraction(min(lower, upper), 2**n)))
    else:
        log_pmf = _binomial_log_pmf(n, p0)
        lower = _log_sum_exp(log_pmf[: k + 1])
        upper = _log_sum_exp(log_pmf[k:])
        p = min(1.0, 2.0 * math.exp(min(lower, upper)))
    return BinomialTestResult(successes=k, trials=n, null_proportion=p0,
                              p_value=p, alpha=alpha, reject=p < alpha)


def _binomial_log_pmf(n: int, p0: float) -> np.ndarray:
    i = np.arange(n + 1)
    log_comb = (math.lgamma(n + 1)
                - np.array([math.lgamma(v + 1) for v in i])
                - np.array([math.lgamma(n - v + 1) for v in i]))
    return log_comb + i * math.log(p0) + (n - i) * math.log1p(-p0)


def _log_sum_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + math.log(float(np.sum(np.exp(values - m))))


def smooth(curve, window: int = 5) -> np.ndarray:
    """Trailing moving average; the first window-1 points average over the
    available prefix."""
    if window < 1:
        raise ParameterError(f"window must be at least 1, got {window}")
    arr = np.asarray(curve, dtype=float)
    if arr.size == 0:
        raise LengthError("cannot smooth an empty curve")
    out = np.empty_like(arr)
    for i in range(arr.size):
        lo = max(0, i - window + 1)
        out[i] = arr[lo:i + 1].mean()
    return out


def representative_accuracy(report) -> tuple:
    """Epoch (1-based) with the lowest smoothed combined loss, and the
    smoothed test accuracy there.

    Formalizes "read the accuracy off the loss plateau": the chosen epoch
    minimizes smoothed(train loss) + smoothed(validation loss); ties go to
    the earliest epoch.
    """
    train_s = np.asarray(report.train_loss_s5, dtype=float)
    val_s = np.asarray(report.val_loss_s5, dtype=float)
    acc_s = np.asarray(report.test_acc_s5, dtype=float)
    if train_s.size == 0 or val_s.size == 0 or acc_s.size == 0:
        raise LengthError("report has empty curves")
    combined = train_s + val_s
    idx = int(np.argmin(combined))  # argmin returns the first minimum
    return idx + 1, float(acc_s[idx])
