"""Gauss-Legendre rules with power transforms for weakly singular endpoints.

An integrand behaving like ``x**e`` (e > -1) near the left end of [0, 1] is
made smooth by the substitution ``x = v**(1/(1+e))``; the Jacobian cancels the
singularity exactly.  Everything here returns (nodes, weights) on [0, 1].
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre01(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def power_rule(order: int, exponent: float, side: str = "left") -> tuple[np.ndarray, np.ndarray]:
    """Rule for integrands ~ dist**exponent at the ``side`` end of [0, 1]."""
    if exponent <= -1.0:
        raise ValueError("exponent must exceed -1 for an integrable singularity")
    v, w = gauss_legendre01(order)
    q = 1.0 / (1.0 + exponent)
    x = v**q
    wx = w * q * v ** (q - 1.0)
    if side == "right":
        x = 1.0 - x
    elif side != "left":
        raise ValueError("side must be 'left' or 'right'")
    x.setflags(write=False)
    wx.setflags(write=False)
    return x, wx


def composite_rule(
    a: np.ndarray,
    b: np.ndarray,
    n_panels: int,
    order: int,
    left_exp: float | None = None,
    right_exp: float | None = None,
    breaks: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for ∫_a^b on ``n_panels`` equal panels, vectorized over a, b.

    The first panel uses a power rule for ``left_exp`` and the last one for
    ``right_exp`` (when given).  ``breaks`` (increasing, from 0 to 1) replaces
    the equal panels by arbitrary ones.  Returns arrays of shape
    a.shape + (n_panels*order,).
    """
    if breaks is not None:
        breaks = np.asarray(breaks, dtype=float)
        n_panels = len(breaks) - 1
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x0, w0 = gauss_legendre01(order)
    xs = np.tile(x0, (n_panels, 1))
    ws = np.tile(w0, (n_panels, 1))
    if left_exp is not None:
        xs[0], ws[0] = power_rule(order, left_exp, "left")
    if right_exp is not None:
        xr, wr = power_rule(order, right_exp, "right")
        if n_panels == 1 and left_exp is not None:
            raise ValueError("two singular ends need at least two panels")
        xs[-1], ws[-1] = xr, wr
    if breaks is None:
        breaks = np.arange(n_panels + 1) / n_panels
    width = np.diff(breaks)[:, None]
    unit_x = (breaks[:-1, None] + width * xs).ravel()
    unit_w = (width * ws).ravel()
    h = (b - a)[..., None]
    return a[..., None] + h * unit_x, h * unit_w


def graded_breaks(levels: int, ratio: float = 0.5, right_levels: int = 0) -> np.ndarray:
    """Panel ends refined geometrically toward 0 (``levels``) and toward 1 (``right_levels``).

    With no right refinement: 0, ratio**levels, ..., ratio, 1.  Otherwise the
    left refinement covers [0, 1/2] and the right one mirrors it on [1/2, 1].
    """
    if right_levels <= 0:
        return np.concatenate([[0.0], ratio ** np.arange(levels, 0, -1), [1.0]])
    left = 0.5 * ratio ** np.arange(levels, 0, -1)
    right = 1.0 - 0.5 * ratio ** np.arange(0, right_levels + 1)
    return np.concatenate([[0.0], left, right, [1.0]])
