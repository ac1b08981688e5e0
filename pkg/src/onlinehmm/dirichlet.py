"""Dirichlet moment identities and the digamma matching system.

For x ~ Dirichlet(u) the reweighted averages that drive the Bayesian
learners reduce to ratios of gamma functions and digamma differences:

    E[prod_j x_j**r_j]          = W(u, r)
    E[prod_j x_j**r_j * ln x_i] = W(u, r) * (psi(u_i + r_i) - psi(u0 + r0))

with u0 = sum(u), r0 = sum(r) and

    W(u, r) = Gamma(u0) / Gamma(u0 + r0) * prod_j Gamma(u_j + r_j) / Gamma(u_j).

Matching a collection of log averages mu_i = <ln x_i> back to a
concentration vector means solving psi(u_i) - psi(u0) = mu_i, done here
by a fixed-point iteration in the total mass u0.
"""

import math

import numpy as np
from scipy.special import gammaln

from .exceptions import DegenerateSystemError, SolverConvergenceError

EULER_GAMMA = 0.57721566490153286061

_RESIDUAL_TOL = 1e-12
_DEGENERATE_TOL = -1e-6


def digamma(x):
    """psi(x) = d ln Gamma(x) / dx for real x > 0.

    Recurrence shifts the argument above 6, where the asymptotic series
    through the x**-14 term leaves a truncation error below 1e-12.
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    value = 0.0
    while x < 6.0:
        value -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (
        1.0 / 12.0
        - inv2 * (
            1.0 / 120.0
            - inv2 * (
                1.0 / 252.0
                - inv2 * (
                    1.0 / 240.0
                    - inv2 * (
                        1.0 / 132.0
                        - inv2 * (691.0 / 32760.0 - inv2 / 12.0)
                    )
                )
            )
        )
    )
    return value + math.log(x) - 0.5 * inv - series


def trigamma(x):
    """psi'(x) for real x > 0; same shift-then-series scheme as digamma."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"trigamma requires x > 0, got {x}")
    value = 0.0
    while x < 8.0:
        value += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # 1/x + 1/2x^2 + sum_k B_2k / x^(2k+1)
    series = inv * (
        1.0
        + inv * (
            0.5
            + inv * (
                1.0 / 6.0
                - inv2 * (
                    1.0 / 30.0
                    - inv2 * (
                        1.0 / 42.0
                        - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)
                    )
                )
            )
        )
    )
    return value + series


def inverse_digamma(y, tol=_RESIDUAL_TOL, max_iter=64):
    """Solve psi(x) = y for x > 0 by Newton iteration.

    The starting point exp(y) + 1/2 (large y) or -1/(y + gamma) (very
    negative y) is accurate enough that a handful of Newton steps reach
    a residual |psi(x) - y| <= tol * max(1, |y|); the scaling keeps the
    target reachable for very negative y, where cancellation in psi
    limits the attainable absolute residual.
    """
    y = float(y)
    if y >= -2.22:
        x = math.exp(y) + 0.5
    else:
        x = -1.0 / (y + EULER_GAMMA)
    bound = tol * max(1.0, abs(y))
    for _ in range(max_iter):
        f = digamma(x) - y
        if abs(f) <= bound:
            return x
        step = f / trigamma(x)
        if step >= x:
            # psi is increasing; keep the iterate positive.
            x *= 0.5
        else:
            x -= step
    raise SolverConvergenceError(
        f"inverse_digamma({y}) did not reach |residual| <= {bound} in {max_iter} steps"
    )


def _digamma_vec(x):
    """Elementwise :func:`digamma` on an array, same shift-then-series scheme.

    Shifts every entry up by 6 unconditionally (the recurrence holds for
    any x > 0), which keeps the evaluation branch-free.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size and not np.all(x > 0.0):
        raise ValueError("digamma requires x > 0")
    value = -(
        1.0 / x
        + 1.0 / (x + 1.0)
        + 1.0 / (x + 2.0)
        + 1.0 / (x + 3.0)
        + 1.0 / (x + 4.0)
        + 1.0 / (x + 5.0)
    )
    x = x + 6.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (
        1.0 / 12.0
        - inv2 * (
            1.0 / 120.0
            - inv2 * (
                1.0 / 252.0
                - inv2 * (
                    1.0 / 240.0
                    - inv2 * (
                        1.0 / 132.0
                        - inv2 * (691.0 / 32760.0 - inv2 / 12.0)
                    )
                )
            )
        )
    )
    return value + np.log(x) - 0.5 * inv - series


def _trigamma_vec(x):
    """Elementwise :func:`trigamma` on an array, branch-free like
    :func:`_digamma_vec` with an unconditional shift by 8."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and not np.all(x > 0.0):
        raise ValueError("trigamma requires x > 0")
    shifts = [1.0 / (x + k) for k in range(8)]
    value = sum(s * s for s in shifts)
    x = x + 8.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv * (
        1.0
        + inv * (
            0.5
            + inv * (
                1.0 / 6.0
                - inv2 * (
                    1.0 / 30.0
                    - inv2 * (
                        1.0 / 42.0
                        - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)
                    )
                )
            )
        )
    )
    return value + series


_SHIFT8 = np.arange(8.0).reshape(8, 1)


def _psi_pair(x):
    """Digamma and trigamma at ``x`` (1-d array) in one pass.

    Shares the shifted reciprocals between the two recurrences; both
    series are evaluated at x + 8.
    """
    recip = 1.0 / (x[None, :] + _SHIFT8)
    dig_acc = recip.sum(axis=0)
    tri_acc = (recip * recip).sum(axis=0)
    xs = x + 8.0
    inv = 1.0 / xs
    inv2 = inv * inv
    dig_series = inv2 * (
        1.0 / 12.0
        - inv2 * (
            1.0 / 120.0
            - inv2 * (
                1.0 / 252.0
                - inv2 * (
                    1.0 / 240.0
                    - inv2 * (
                        1.0 / 132.0
                        - inv2 * (691.0 / 32760.0 - inv2 / 12.0)
                    )
                )
            )
        )
    )
    tri_series = inv * (
        1.0
        + inv * (
            0.5
            + inv * (
                1.0 / 6.0
                - inv2 * (
                    1.0 / 30.0
                    - inv2 * (
                        1.0 / 42.0
                        - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)
                    )
                )
            )
        )
    )
    return np.log(xs) - 0.5 * inv - dig_series - dig_acc, tri_series + tri_acc


def _inverse_digamma_init(y):
    x = np.empty_like(y)
    hi = y >= -2.22
    x[hi] = np.exp(y[hi]) + 0.5
    x[~hi] = -1.0 / (y[~hi] + EULER_GAMMA)
    return x


def _inverse_digamma_vec(y, tol=_RESIDUAL_TOL, max_iter=64):
    """Elementwise :func:`inverse_digamma` on an array."""
    y = np.asarray(y, dtype=np.float64)
    x = _inverse_digamma_init(y)
    bound = tol * np.maximum(1.0, np.abs(y))
    for _ in range(max_iter):
        f = _digamma_vec(x) - y
        done = np.abs(f) <= bound
        if done.all():
            return x
        step = f / _trigamma_vec(x)
        x = np.where(done, x, np.where(step >= x, 0.5 * x, x - step))
    raise SolverConvergenceError(
        f"inverse_digamma did not converge in {max_iter} steps for {np.count_nonzero(~done)} entries"
    )


def log_weight(u, r):
    """ln W(u, r); exposed separately so mixtures can be normalized in log space."""
    u = np.asarray(u, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    u0 = u.sum()
    r0 = r.sum()
    return float(
        gammaln(u0) - gammaln(u0 + r0) + (gammaln(u + r) - gammaln(u)).sum()
    )


def _check_pair(u, r):
    u = np.asarray(u, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u must be a non-empty 1-d vector")
    if r.shape != u.shape:
        raise ValueError(f"r must have shape {u.shape}, got {r.shape}")
    if np.any(u <= 0.0):
        raise ValueError("all concentration parameters must be positive")
    if np.any(r < 0.0):
        raise ValueError("all exponents must be non-negative")
    return u, r


def log_moment(u, r, i):
    """Weight and digamma part of E[prod_j x_j**r_j * ln x_i].

    Returns the pair ``(weight, value)`` with ``weight = W(u, r)`` and
    ``value = psi(u_i + r_i) - psi(u0 + r0)``; the full average is their
    product.  ``i`` is a 0-based component index.
    """
    u, r = _check_pair(u, r)
    if not 0 <= i < u.size:
        raise ValueError(f"component index {i} outside [0, {u.size})")
    weight = math.exp(log_weight(u, r))
    value = digamma(u[i] + r[i]) - digamma(u.sum() + r.sum())
    return weight, value


def monomial_moment(u, r, extra):
    """E[prod_j x_j**(r_j + extra_j)] = W(u, r + extra).

    With all exponents zero this is exactly 1: the gammaln terms cancel
    pairwise before exponentiation.
    """
    u, r = _check_pair(u, r)
    extra = np.asarray(extra, dtype=np.float64)
    if extra.shape != u.shape:
        raise ValueError(f"extra must have shape {u.shape}, got {extra.shape}")
    if np.any(extra < 0.0):
        raise ValueError("all exponents must be non-negative")
    return math.exp(log_weight(u, r + extra))


def solve_digamma_system(mu, tol=1e-10, max_iter=500):
    """Recover u from the log averages mu_i = psi(u_i) - psi(u0).

    Parameters
    ----------
    mu : array-like of shape (N,)
        Targets; each must be strictly negative (they are averages of
        ``ln x_i`` with ``x`` on the simplex).
    tol : float
        Relative fixed-point tolerance on the total mass u0.
    max_iter : int
        Budget for the fixed-point iteration before falling back to
        bisection on the total mass.

    Returns
    -------
    ndarray of shape (N,)
        The unique positive solution.

    Notes
    -----
    Writing s = psi(u0), each component is u_i = psi^-1(mu_i + s), so u0
    must be a fixed point of ``g(u0) = sum_i psi^-1(mu_i + psi(u0))``.
    A Newton iteration on ``g(u0) - u0`` from u0 = N converges in a
    handful of steps in practice; if it stalls, g - id changes sign on
    [1e-8, 1e8] and bisection finishes the job.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1 or mu.size < 2:
        raise ValueError("mu must be a 1-d vector with at least 2 components")
    if np.any(mu >= _DEGENERATE_TOL):
        raise DegenerateSystemError(
            f"targets must be <= {_DEGENERATE_TOL}; got max {mu.max()!r}"
        )

    def g(u0):
        return float(_inverse_digamma_vec(mu + digamma(u0)).sum())

    # Newton on g(u0) - u0, with g'(u0) = psi'(u0) * sum_i 1 / psi'(u_i);
    # falls back to a plain fixed-point step whenever the Newton step
    # leaves the domain.  The inner psi-inversion is warm-started from
    # the previous outer iterate, which usually leaves it one or two
    # Newton steps of its own.
    def refine(u, u0):
        # Inner Newton for u = psi^-1(mu + psi(u0)), warm-started.
        y = mu + digamma(u0)
        if u is None:
            u = _inverse_digamma_init(y)
        bound = _RESIDUAL_TOL * np.maximum(1.0, np.abs(y))
        for _ in range(64):
            psi_u, psi1_u = _psi_pair(u)
            f = psi_u - y
            if (np.abs(f) <= bound).all():
                return u, psi1_u
            step = f / psi1_u
            u = np.where(step >= u, 0.5 * u, u - step)
        return None, None

    u0 = float(mu.size)
    u = None
    converged = False
    for _ in range(max_iter):
        u, psi1_u = refine(u, u0)
        if u is None:
            break
        total = float(u.sum())
        # The Newton step estimates the remaining error directly, which
        # the raw fixed-point gap does not when the contraction factor
        # is close to 1 (strongly concentrated rows).
        slope = trigamma(u0) * float((1.0 / psi1_u).sum()) - 1.0
        u0_next = u0 - (total - u0) / slope if slope != 0.0 else total
        if u0_next <= 0.0:
            u0_next = total
        if abs(u0_next - u0) <= tol * max(abs(u0_next), 1.0):
            u0 = u0_next
            u, _ = refine(u, u0)
            converged = u is not None
            break
        u0 = u0_next

    if not converged:
        lo, hi = 1e-8, 1e8
        if g(lo) - lo < 0.0 or g(hi) - hi > 0.0:
            raise SolverConvergenceError(
                "targets admit no positive solution on [1e-8, 1e8]"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) - mid > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * max(lo, 1.0):
                break
        u0 = 0.5 * (lo + hi)
        u = _inverse_digamma_vec(mu + digamma(u0))

    return u
