"""Monte Carlo error bars: batch means, autocorrelation times, mergeable moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InsufficientSamples(ValueError):
    pass


def batch_means(x, n_batches: int | None = None, min_batches: int = 10):
    """Mean and batch-means standard error along axis 0.

    ``x`` may carry trailing axes; each column is treated separately. The
    default uses ``floor(sqrt(n))`` batches of ``floor(sqrt(n))`` samples.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n_batches is None:
        n_batches = int(math.isqrt(n))
    if n_batches < min_batches:
        raise InsufficientSamples(f"{n} samples give only {n_batches} batches")
    b = n // n_batches
    used = x[: b * n_batches].reshape((n_batches, b) + x.shape[1:])
    means = used.mean(axis=1)
    mu = x.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return mu, se


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    f = np.fft.rfft(x - x.mean(), n=2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    if acf[0] == 0:
        return np.ones(1)
    return acf / acf[0]


def integrated_autocorrelation_time(x, c: float = 5.0) -> float:
    """Sokal's self-consistent window estimate of ``tau_int`` (with ``tau=1`` for iid)."""
    rho = autocorrelation(x)
    taus = 2.0 * np.cumsum(rho) - 1.0
    windows = np.arange(len(taus))
    ok = windows >= c * taus
    m = int(np.argmax(ok)) if ok.any() else len(taus) - 1
    return float(max(taus[m], 1.0))


def iid_mean(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamples("need at least two samples")
    return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass
class Moments:
    """Count, mean and sum of squared deviations; merged with Chan's rule."""

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def from_samples(cls, x) -> "Moments":
        x = np.asarray(x, dtype=float)
        mu = x.mean(axis=0)
        return cls(x.shape[0], mu, ((x - mu) ** 2).sum(axis=0))

    @classmethod
    def from_sums(cls, count, s1, s2) -> "Moments":
        mu = np.asarray(s1) / count
        s2 = np.asarray(s2, dtype=float)
        m2 = s2 - count * mu * mu
        # below the rounding error of accumulating s2 the spread is not resolved
        m2 = np.where(m2 > count * np.finfo(float).eps * np.abs(s2), m2, 0.0)
        return cls(int(count), mu, m2 if m2.ndim else float(m2))

    def merge(self, other: "Moments") -> "Moments":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = np.asarray(other.mean) - np.asarray(self.mean)
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def variance(self):
        return np.asarray(self.m2) / (self.count - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count)


def zscore(a: float, se_a: float, b: float, se_b: float = 0.0) -> float:
    s = math.hypot(se_a, se_b)
    if s == 0:
        return 0.0 if a == b else math.copysign(math.inf, a - b)
    return (a - b) / s
