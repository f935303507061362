"""Adaptive Simpson quadrature on finite intervals."""

from __future__ import annotations

import math

__all__ = ["QuadratureError", "adaptive_simpson"]


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


def _simpson(fa, fm, fb, a, b):
    return (b - a) * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(func, a, b, abs_tol=1e-10, max_depth=40):
    """Integrate a scalar function over ``[a, b]`` by adaptive Simpson.

    Returns ``(value, error_estimate)``. The interval is bisected until the
    Richardson estimate of each piece is below its share of ``abs_tol``;
    a piece that still fails at ``max_depth`` raises :class:`QuadratureError`.
    """
    if b == a:
        return 0.0, 0.0
    if b < a:
        val, err = adaptive_simpson(func, b, a, abs_tol, max_depth)
        return -val, err

    fa, fb = func(a), func(b)
    m = 0.5 * (a + b)
    fm = func(m)
    whole = _simpson(fa, fm, fb, a, b)

    total = 0.0
    err_total = 0.0
    # explicit stack instead of recursion: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, abs_tol, 0)]
    worst = 0.0
    while stack:
        a_, b_, fa_, fm_, fb_, whole_, tol_, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm = 0.5 * (a_ + m_)
        rm = 0.5 * (m_ + b_)
        flm, frm = func(lm), func(rm)
        left = _simpson(fa_, flm, fm_, a_, m_)
        right = _simpson(fm_, frm, fb_, m_, b_)
        delta = left + right - whole_
        if abs(delta) <= 15.0 * tol_:
            total += left + right + delta / 15.0
            err_total += abs(delta) / 15.0
            continue
        if depth >= max_depth:
            worst = max(worst, abs(delta) / 15.0)
            total += left + right + delta / 15.0
            err_total += abs(delta) / 15.0
            continue
        stack.append((a_, m_, fa_, flm, fm_, left, 0.5 * tol_, depth + 1))
        stack.append((m_, b_, fm_, frm, fb_, right, 0.5 * tol_, depth + 1))
    if worst > 0.0 or not math.isfinite(total):
        raise QuadratureError(
            f"adaptive Simpson did not converge on [{a}, {b}]: "
            f"achieved error {err_total:.3e} > tolerance {abs_tol:.3e}",
            achieved=err_total,
        )
    return total, err_total
