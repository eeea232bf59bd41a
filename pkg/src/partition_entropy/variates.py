"""Gamma, Beta and Dirichlet variates.

Gamma draws use the Marsaglia-Tsang squeeze/rejection method.  Shapes below
one are boosted: ``G(a) = G(a + 1) * U**(1/a)``.  Internally everything is
kept on the log scale so that small shapes (singleton classes with discount
close to one) never underflow to an exact zero.
"""

from __future__ import annotations

import numpy as np

from .rng import RandomStream


def _log_gamma_ge1(shape: np.ndarray, rng: RandomStream) -> np.ndarray:
    # Marsaglia & Tsang (2000); requires shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(shape)
    pending = np.arange(shape.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        z = rng.normal(pending.size)
        u = rng.random(pending.size)
        v = 1.0 + cp * z
        ok = v > 0
        v3 = np.where(ok, v * v * v, 1.0)
        with np.errstate(divide="ignore"):
            log_u = np.log(u)
        accept = ok & (log_u < 0.5 * z * z + dp - dp * v3 + dp * np.log(v3))
        out[pending[accept]] = np.log(dp[accept]) + np.log(v3[accept])
        pending = pending[~accept]
    return out


def log_gamma_draw(shape, rng: RandomStream) -> np.ndarray:
    """Logarithms of independent standard Gamma(shape) draws, one per entry.

    The result has the shape of ``shape`` (at least one-dimensional).
    """
    shape = np.atleast_1d(np.asarray(shape, dtype=float))
    if np.any(~(shape > 0)):
        raise ValueError("gamma shape parameters must be > 0")
    dims = shape.shape
    shape = shape.ravel()
    small = shape < 1.0
    boosted = np.where(small, shape + 1.0, shape)
    out = _log_gamma_ge1(boosted, rng)
    if small.any():
        u = rng.random(int(small.sum()))
        # u may be exactly 0 with probability 2**-53; treat as the smallest double
        u = np.maximum(u, np.finfo(float).tiny)
        out[small] += np.log(u) / shape[small]
    return out.reshape(dims)


def gamma_draw(shape: float, rng: RandomStream) -> float:
    """One standard Gamma(shape) variate."""
    return float(np.exp(log_gamma_draw(shape, rng)[0]))


def log_beta_draw(a, b, rng: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    """``(log X, log(1 - X))`` for ``X ~ Beta(a, b)``, vectorized over a, b.

    ``X = G_a / (G_a + G_b)`` with independent Gammas.  Both logs are exact to
    rounding even when ``X`` is within machine epsilon of 0 or 1.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    lga = log_gamma_draw(a, rng)
    lgb = log_gamma_draw(b, rng)
    total = np.logaddexp(lga, lgb)
    return lga - total, lgb - total


def beta_draw(a: float, b: float, rng: RandomStream) -> float:
    """One Beta(a, b) variate in (0, 1)."""
    log_x, _ = log_beta_draw(a, b, rng)
    return float(np.exp(log_x[0]))


def dirichlet_draw(alphas, rng: RandomStream, size: int | None = None) -> np.ndarray:
    """A probability vector distributed Dirichlet(alphas) (normalized Gammas).

    With ``size`` given, returns a ``(size, len(alphas))`` array of
    independent draws, one per row.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("dirichlet_draw needs a nonempty 1-d parameter vector")
    rows = 1 if size is None else size
    lg = log_gamma_draw(np.broadcast_to(alphas, (rows, alphas.size)), rng)
    p = np.exp(lg - lg.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if size is None else p
