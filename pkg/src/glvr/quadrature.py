"""Gauss-Laguerre and Gauss-Legendre rules built from the three-term recurrences.

Nodes are found with a safeguarded Newton iteration: every root of the degree-n
polynomial sits strictly between consecutive roots of the degree-(n-1)
polynomial (interlacing), so each Newton iterate is kept inside a bracket and
falls back to bisection when it would leave it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureError",
    "QuadratureRule",
    "laguerre_eval",
    "legendre_eval",
    "laguerre_rule",
    "legendre_rule",
    "laguerre_weights_from_next",
    "integrate",
]

MAX_POINTS = 64
_CACHE_LIMIT = 32
_MAX_ITER = 200


class QuadratureError(RuntimeError):
    """Root polishing failed; indicates a numerical-policy bug, not bad input."""


@dataclass(frozen=True)
class QuadratureRule:
    """Immutable n-point rule; ``nodes`` ascending, ``weights`` positive."""

    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64)
        weights = np.array(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be non-empty 1-D arrays of equal length")
        if self.kind not in ("laguerre", "legendre"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    def __iter__(self):
        return iter(zip(self.nodes.tolist(), self.weights.tolist()))


def laguerre_eval(n: int, x):
    """Return ``(L_n(x), L_n'(x))``.

    Uses ``(k+1) L_{k+1} = (2k+1-x) L_k - k L_{k-1}`` together with
    ``L'_{k+1} = L'_k - L_k``, which stays finite at ``x = 0``.
    Accepts scalars or arrays.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    dp = np.zeros_like(x)
    for k in range(n):
        p_next = ((2 * k + 1 - x) * p - k * p_prev) / (k + 1)
        dp = dp - p
        p_prev, p = p, p_next
    if p.ndim == 0:
        return float(p), float(dp)
    return p, dp


def legendre_eval(n: int, x):
    """Return ``(P_n(x), P_n'(x))`` via Bonnet's recurrence."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    dp_prev = np.zeros_like(x)
    dp = np.zeros_like(x)
    for k in range(n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        # P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    if p.ndim == 0:
        return float(p), float(dp)
    return p, dp


def _polish(evaluate, guess, lo, hi, n):
    """Newton iteration confined to the sign-change bracket ``[lo, hi]``."""
    f_lo, _ = evaluate(n, lo)
    x = guess if lo < guess < hi else 0.5 * (lo + hi)
    tiny = 2 * np.finfo(float).eps * max(1.0, abs(x))
    for _ in range(_MAX_ITER):
        f, df = evaluate(n, x)
        if f == 0.0:
            return x
        converged = abs(f) < 1e-12 * max(1.0, abs(df))
        # shrink bracket using the sign of f
        if (f < 0) == (f_lo < 0):
            lo, f_lo = x, f
        else:
            hi = x
        step = f / df if df != 0.0 else math.inf
        x_new = x - step
        if not (lo <= x_new <= hi):
            if converged:
                return x
            x_new = 0.5 * (lo + hi)
        # one more Newton step after the residual test passes squeezes out
        # the last digits, which the weight formulas amplify
        if converged or abs(x_new - x) <= tiny or hi - lo <= tiny:
            return x_new
        x = x_new
    raise QuadratureError(f"root of degree-{n} polynomial did not converge near {guess!r}")


def _laguerre_guesses(n: int) -> list[float]:
    guesses: list[float] = []
    for i in range(n):
        if i == 0:
            z = 3.0 / (2 * n + 1)
        elif i == 1:
            z = guesses[0] + 15.0 / (1 + 2.5 * n)
        else:
            a = i - 1
            z = guesses[i - 1] + (1 + 2.55 * a) / (1.9 * a) * (guesses[i - 1] - guesses[i - 2])
        guesses.append(z)
    return guesses


@lru_cache(maxsize=None)
def _laguerre_roots(n: int) -> tuple[float, ...]:
    if n == 1:
        return (1.0,)
    inner = _laguerre_roots(n - 1)
    # largest root of L_n is below 4n + 2 (Szego bound, loose)
    edges = (0.0,) + inner + (4.0 * n + 2.0,)
    guesses = _laguerre_guesses(n)
    roots = [_polish(laguerre_eval, guesses[i], edges[i], edges[i + 1], n) for i in range(n)]
    return tuple(roots)


@lru_cache(maxsize=None)
def _legendre_roots(n: int) -> tuple[float, ...]:
    if n == 1:
        return (0.0,)
    inner = _legendre_roots(n - 1)
    edges = (-1.0,) + inner + (1.0,)
    roots = []
    for i in range(n):
        guess = -math.cos(math.pi * (i + 0.75) / (n + 0.5))
        roots.append(_polish(legendre_eval, guess, edges[i], edges[i + 1], n))
    # enforce exact symmetry about 0
    roots = [0.5 * (r - s) for r, s in zip(roots, reversed(roots))]
    return tuple(r + 0.0 for r in roots)


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"n must be an integer, got {n!r}")
    n = int(n)
    if not 1 <= n <= MAX_POINTS:
        raise ValueError(f"n must lie in [1, {MAX_POINTS}], got {n}")
    return n


def laguerre_weights_from_next(nodes: np.ndarray) -> np.ndarray:
    """Weights from ``x_i / ((n+1)^2 L_{n+1}(x_i)^2)``.

    Algebraically equal to the derivative form used by :func:`laguerre_rule`;
    kept as an independent cross-check of node indexing.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    n = nodes.size
    value, _ = laguerre_eval(n + 1, nodes)
    return nodes / ((n + 1) ** 2 * value**2)


def _build_laguerre(n: int) -> QuadratureRule:
    nodes = np.array(_laguerre_roots(n))
    _, deriv = laguerre_eval(n, nodes)
    weights = 1.0 / (nodes * deriv**2)
    return QuadratureRule("laguerre", nodes, weights)


def _build_legendre(n: int) -> QuadratureRule:
    nodes = np.array(_legendre_roots(n))
    _, deriv = legendre_eval(n, nodes)
    weights = 2.0 / ((1.0 - nodes**2) * deriv**2)
    return QuadratureRule("legendre", nodes, weights)


_laguerre_cached = lru_cache(maxsize=None)(_build_laguerre)
_legendre_cached = lru_cache(maxsize=None)(_build_legendre)


def laguerre_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Laguerre rule for ``int_0^inf e^{-x} f(x) dx``."""
    n = _check_n(n)
    return _laguerre_cached(n) if n <= _CACHE_LIMIT else _build_laguerre(n)


def legendre_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule for ``int_{-1}^{1} f(x) dx``."""
    n = _check_n(n)
    return _legendre_cached(n) if n <= _CACHE_LIMIT else _build_legendre(n)


def integrate(rule: QuadratureRule, f: Callable) -> float:
    """``sum_i w_i f(x_i)``; ``f`` is called once per node with a float."""
    return float(math.fsum(w * f(x) for x, w in rule))
