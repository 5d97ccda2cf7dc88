"""Pure-Python/numpy implementations of the hot loops.

Mirrors ``_kernels.pyx`` function for function; ``crowdnet._backend`` picks
whichever is importable.
"""
import numpy as np


def left_fixed_vector(weights, tol, max_iter):
    """Power iteration for v with vW = v, started from the uniform vector.

    Returns ``(v, iterations, converged)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    v = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        nxt = v @ w
        nxt /= nxt.sum()
        delta = np.max(np.abs(nxt - v))
        v = nxt
        if delta <= tol:
            return v, it, True
    return v, max_iter, False


def consensus(weights, x, tol, max_rounds):
    """Apply x <- Wx until max(x) - min(x) <= tol.

    Returns ``(x, rounds, converged)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    cur = np.array(x, dtype=np.float64)
    for rounds in range(max_rounds + 1):
        if cur.max() - cur.min() <= tol:
            return cur, rounds, True
        if rounds == max_rounds:
            break
        cur = w @ cur
    return cur, max_rounds, False


def propagate(weights, x, rounds):
    """States W^k x for k = 0..rounds as a (rounds+1, n) array."""
    w = np.asarray(weights, dtype=np.float64)
    out = np.empty((rounds + 1, w.shape[0]))
    out[0] = x
    for k in range(1, rounds + 1):
        out[k] = w @ out[k - 1]
    return out


def gini(values):
    # mean absolute difference via the sorted-rank identity
    xs = np.sort(np.asarray(values, dtype=np.float64))
    n = xs.shape[0]
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    return float(np.dot(ranks, xs) / (n * xs.sum()))
