"""Streaming Monte-Carlo moments merged across chunks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RunningMoments:
    """Count, mean and centered second moments of vector samples (Chan merge)."""

    count: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None

    def add(self, samples: np.ndarray) -> None:
        """Merge rows of ``samples`` (shape (k, p))."""
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        k = x.shape[0]
        if k == 0:
            return
        mu = x.mean(axis=0)
        d = x - mu
        m2 = d.T @ d
        if self.count == 0:
            self.count, self.mean, self.m2 = k, mu, m2
            return
        n = self.count + k
        delta = mu - self.mean
        self.m2 = self.m2 + m2 + np.outer(delta, delta) * self.count * k / n
        self.mean = self.mean + delta * k / n
        self.count = n

    @property
    def cov(self) -> np.ndarray:
        return self.m2 / (self.count - 1)

    @property
    def se(self) -> np.ndarray:
        """Standard error of each column mean."""
        return np.sqrt(np.diag(self.cov) / self.count)
