"""Discrete hidden Markov models with a fixed observation window.

A model is a triple ``(pi, A, B)`` over ``n`` hidden states and ``m``
visible symbols, always used to generate sequences of a fixed length
``T``.  Everything here is exact up to floating point: likelihoods come
from the scaled forward recursion, and the divergence between two models
is computed by enumerating the full sequence space, which is feasible
because ``m ** T`` is kept small by construction.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .exceptions import EnumerationCapError, ZeroLikelihoodError
from .validation import as_state_path, as_symbol_sequence

DEFAULT_ENUMERATION_CAP = 10 ** 6

STOCHASTIC_ATOL = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Problem size: ``n`` hidden states, ``m`` symbols, window length ``T``."""

    n: int
    m: int
    T: int

    def __post_init__(self):
        for name in ("n", "m", "T"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass
class ValidationReport:
    """Outcome of a stochastic-constraint check.

    Truthy when the parameters passed; ``violations`` lists one message
    per failed constraint otherwise.
    """

    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


@dataclass
class HmmParams:
    """Parameters of a discrete HMM.

    Parameters
    ----------
    dims : ModelDims
        Number of hidden states, number of symbols, and window length.
    pi : array-like of shape (n,)
        Initial state distribution.
    A : array-like of shape (n, n)
        State transition matrix, rows indexed by source state.
    B : array-like of shape (n, m)
        Emission matrix, rows indexed by hidden state.

    Construction only enforces shapes; use :func:`validate` to check the
    stochastic constraints, which the learners' outputs must satisfy.
    """

    dims: ModelDims
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        n, m = self.dims.n, self.dims.m
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.pi.shape != (n,):
            raise ValueError(f"pi must have shape ({n},), got {self.pi.shape}")
        if self.A.shape != (n, n):
            raise ValueError(f"A must have shape ({n}, {n}), got {self.A.shape}")
        if self.B.shape != (n, m):
            raise ValueError(f"B must have shape ({n}, {m}), got {self.B.shape}")

    def __eq__(self, other):
        if not isinstance(other, HmmParams):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.pi, other.pi)
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
        )

    def copy(self):
        return HmmParams(self.dims, self.pi.copy(), self.A.copy(), self.B.copy())

    def to_dict(self):
        """Plain-types representation used for JSON round trips."""
        return {
            "n": self.dims.n,
            "m": self.dims.m,
            "T": self.dims.T,
            "pi": self.pi.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        dims = ModelDims(int(data["n"]), int(data["m"]), int(data["T"]))
        return cls(dims, data["pi"], data["A"], data["B"])


@dataclass
class PathPosterior:
    """Posterior over hidden states given one observed sequence.

    ``gamma[t, i]`` is the marginal probability of state ``i`` at step
    ``t``; ``xi[t, i, j]`` the joint of states ``(i, j)`` at steps
    ``(t, t + 1)``, so ``xi`` has ``T - 1`` slices.
    """

    gamma: np.ndarray
    xi: np.ndarray
    log_likelihood: float


def uniform_params(dims):
    """The maximally symmetric model: every row uniform."""
    n, m = dims.n, dims.m
    return HmmParams(
        dims,
        np.full(n, 1.0 / n),
        np.full((n, n), 1.0 / n),
        np.full((n, m), 1.0 / m),
    )


def validate(params, atol=STOCHASTIC_ATOL):
    """Check that ``params`` is a well-formed distribution triple.

    Every entry must lie in ``[0, 1]`` and every row of ``pi``, ``A``
    and ``B`` must sum to 1 within ``atol``.

    Returns
    -------
    ValidationReport
        Truthy on success; lists human-readable violations otherwise.
    """
    violations = []
    blocks = [("pi", params.pi[None, :]), ("A", params.A), ("B", params.B)]
    for name, rows in blocks:
        if np.any(rows < 0.0) or np.any(rows > 1.0):
            violations.append(f"{name}: entries outside [0, 1]")
        sums = rows.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > atol)[0]
        for i in bad:
            violations.append(f"{name}: row {i} sums to {sums[i]!r}")
    return ValidationReport(ok=not violations, violations=violations)


def floor_params(params, eps):
    """Clamp every entry to at least ``eps`` and renormalize the rows.

    Used by the learners to keep their working parameters strictly
    positive, which guarantees a positive likelihood for any sequence.
    """
    pi = np.maximum(params.pi, eps)
    A = np.maximum(params.A, eps)
    B = np.maximum(params.B, eps)
    pi = pi / pi.sum()
    A = A / A.sum(axis=1, keepdims=True)
    B = B / B.sum(axis=1, keepdims=True)
    return HmmParams(params.dims, pi, A, B)


def joint_path_probability(params, y, q):
    """Probability of emitting ``y`` along the hidden path ``q``.

    This is the product of the initial-state weight, the transition
    weights along ``q``, and the emission weights of ``y`` from ``q``.
    """
    dims = params.dims
    y = as_symbol_sequence(y, dims.m, dims.T)
    q = as_state_path(q, dims.n, dims.T)
    prob = params.pi[q[0]] * params.B[q[0], y[0]]
    for t in range(1, dims.T):
        prob *= params.A[q[t - 1], q[t]] * params.B[q[t], y[t]]
    return float(prob)


def sequence_likelihood(params, y, scale=True):
    """Likelihood of one observed sequence under ``params``.

    Parameters
    ----------
    params : HmmParams
    y : array-like of shape (T,)
        Symbol indices in ``[0, m)``.
    scale : bool
        Use the per-step normalized forward recursion (default).  The
        unscaled recursion is kept for cross-checking; both agree to
        rounding for the window lengths used here.
    """
    dims = params.dims
    y = as_symbol_sequence(y, dims.m, dims.T)
    alpha = params.pi * params.B[:, y[0]]
    if not scale:
        for t in range(1, dims.T):
            alpha = (alpha @ params.A) * params.B[:, y[t]]
        return float(alpha.sum())
    likelihood = alpha.sum()
    if likelihood > 0.0:
        alpha = alpha / likelihood
    for t in range(1, dims.T):
        alpha = (alpha @ params.A) * params.B[:, y[t]]
        c = alpha.sum()
        likelihood *= c
        if c > 0.0:
            alpha = alpha / c
    return float(likelihood)


def brute_force_likelihood(params, y, cap=DEFAULT_ENUMERATION_CAP):
    """Likelihood by summing :func:`joint_path_probability` over all paths.

    Exponential in ``T``; refuses to enumerate more than ``cap`` paths.
    Exists as an independent cross-check for the forward recursion.
    """
    dims = params.dims
    if dims.n ** dims.T > cap:
        raise EnumerationCapError(
            f"{dims.n} ** {dims.T} hidden paths exceed the cap of {cap}"
        )
    y = as_symbol_sequence(y, dims.m, dims.T)
    total = 0.0
    for q in product(range(dims.n), repeat=dims.T):
        total += joint_path_probability(params, y, np.asarray(q))
    return float(total)


def _forward_backward_kernel(pi, A, B, y):
    """Scaled forward-backward on raw arrays; no validation, no wrapping.

    Returns ``(gamma, xi, log_likelihood)``.  Hot path shared by the
    online learners; callers guarantee well-formed inputs.
    """
    T = len(y)
    n = len(pi)
    emit = B[:, y].T  # (T, n)
    alpha = np.empty((T, n))
    scales = np.empty(T)
    alpha[0] = pi * emit[0]
    scales[0] = alpha[0].sum()
    if scales[0] <= 0.0:
        raise ZeroLikelihoodError("sequence has probability zero under the model")
    alpha[0] /= scales[0]
    for t in range(1, T):
        alpha[t] = (alpha[t - 1] @ A) * emit[t]
        scales[t] = alpha[t].sum()
        if scales[t] <= 0.0:
            raise ZeroLikelihoodError("sequence has probability zero under the model")
        alpha[t] /= scales[t]

    beta = np.empty((T, n))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (emit[t + 1] * beta[t + 1])) / scales[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = alpha[:-1, :, None] * A[None, :, :] * (emit[1:] * beta[1:])[:, None, :]
    xi /= scales[1:, None, None]
    return gamma, xi, float(np.log(scales).sum())


def forward_backward(params, y, scale=True):
    """Run the forward-backward recursions for one sequence.

    Returns
    -------
    PathPosterior
        State marginals ``gamma``, pair marginals ``xi``, and the log
        likelihood of ``y``.

    Raises
    ------
    ZeroLikelihoodError
        If ``params`` assigns probability zero to ``y``; posteriors are
        undefined in that case.
    """
    dims = params.dims
    n, T = dims.n, dims.T
    y = as_symbol_sequence(y, dims.m, dims.T)
    A, B = params.A, params.B

    if scale:
        gamma, xi, log_likelihood = _forward_backward_kernel(params.pi, A, B, y)
        return PathPosterior(gamma=gamma, xi=xi, log_likelihood=log_likelihood)

    emit = B[:, y].T  # (T, n)
    alpha = np.empty((T, n))
    alpha[0] = params.pi * emit[0]
    if alpha[0].sum() <= 0.0:
        raise ZeroLikelihoodError("sequence has probability zero under the model")
    for t in range(1, T):
        alpha[t] = (alpha[t - 1] @ A) * emit[t]
        if alpha[t].sum() <= 0.0:
            raise ZeroLikelihoodError("sequence has probability zero under the model")

    beta = np.empty((T, n))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = A @ (emit[t + 1] * beta[t + 1])

    likelihood = alpha[T - 1].sum()
    gamma = alpha * beta / likelihood
    xi = alpha[:-1, :, None] * A[None, :, :] * (emit[1:] * beta[1:])[:, None, :]
    xi /= likelihood
    return PathPosterior(gamma=gamma, xi=xi, log_likelihood=float(np.log(likelihood)))


def sample_sequence(params, rng):
    """Draw ``(y, q)`` from the model.

    Consumes ``2 T`` uniform variates from ``rng`` in a fixed order
    (state draw then symbol draw, per step), so resampling with an
    equally seeded generator reproduces the sequence exactly.
    """
    dims = params.dims
    n, T = dims.n, dims.T
    pi_cum = np.cumsum(params.pi)
    A_cum = np.cumsum(params.A, axis=1)
    B_cum = np.cumsum(params.B, axis=1)
    y = np.empty(T, dtype=np.int64)
    q = np.empty(T, dtype=np.int64)
    state = min(int(np.searchsorted(pi_cum, rng.random())), n - 1)
    q[0] = state
    y[0] = min(int(np.searchsorted(B_cum[state], rng.random())), dims.m - 1)
    for t in range(1, T):
        state = min(int(np.searchsorted(A_cum[state], rng.random())), n - 1)
        q[t] = state
        y[t] = min(int(np.searchsorted(B_cum[state], rng.random())), dims.m - 1)
    return y, q


@lru_cache(maxsize=32)
def all_observation_sequences(m, T):
    """Every length-``T`` sequence over ``m`` symbols, as an ``(m**T, T)`` array.

    Cached and returned read-only; callers must not modify the result.
    """
    grids = np.meshgrid(*(np.arange(m),) * T, indexing="ij")
    seqs = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    seqs.setflags(write=False)
    return seqs


def _batch_likelihood_kernel(pi, A, B, seqs):
    """Scaled-forward likelihoods on raw arrays; ``seqs`` is (K, T) ints."""
    T = seqs.shape[1]
    alpha = pi[None, :] * B[:, seqs[:, 0]].T
    likelihood = alpha.sum(axis=1)
    safe = np.where(likelihood > 0.0, likelihood, 1.0)
    alpha = alpha / safe[:, None]
    for t in range(1, T):
        alpha = (alpha @ A) * B[:, seqs[:, t]].T
        c = alpha.sum(axis=1)
        likelihood = likelihood * c
        safe = np.where(c > 0.0, c, 1.0)
        alpha = alpha / safe[:, None]
    return likelihood


def batch_sequence_likelihood(params, sequences):
    """Scaled-forward likelihoods for many sequences at once.

    ``sequences`` has shape ``(K, T)``; returns a length-``K`` vector.
    Zero-probability sequences come out as exactly 0.
    """
    seqs = np.asarray(sequences)
    return _batch_likelihood_kernel(params.pi, params.A, params.B, seqs)


def _enumerated_likelihood_kernel(pi, A, B, T):
    """Likelihoods of every length-``T`` sequence, in enumeration order.

    Exploits the product structure of the full sequence space: one
    forward sweep over a prefix tensor replaces per-sequence forward
    passes.  Row ``k`` matches ``all_observation_sequences(m, T)[k]``.
    No scaling is applied; under the enumeration cap the products stay
    far above the underflow threshold, and exact zeros are preserved.
    """
    emit = B.T  # (m, n)
    front = pi * emit  # (m, n)
    for _ in range(T - 1):
        front = (front @ A)[:, None, :] * emit[None, :, :]
        front = front.reshape(-1, front.shape[-1])
    return front.sum(axis=1)


def kl_divergence(p_model, q_model, cap=DEFAULT_ENUMERATION_CAP):
    """Exact Kullback-Leibler divergence between two models.

    Sums ``P(y) ln(P(y) / Q(y))`` over the complete sequence space of
    size ``m ** T``.  Returns ``inf`` when some sequence has positive
    probability under ``p_model`` but zero under ``q_model``.

    Raises
    ------
    EnumerationCapError
        If ``m ** T`` exceeds ``cap``.
    ValueError
        If the two models have different dimensions.
    """
    if p_model.dims != q_model.dims:
        raise ValueError(
            f"dimension mismatch: {p_model.dims} vs {q_model.dims}"
        )
    dims = p_model.dims
    if dims.m ** dims.T > cap:
        raise EnumerationCapError(
            f"{dims.m} ** {dims.T} sequences exceed the cap of {cap}"
        )
    p = _enumerated_likelihood_kernel(p_model.pi, p_model.A, p_model.B, dims.T)
    q = _enumerated_likelihood_kernel(q_model.pi, q_model.A, q_model.B, dims.T)
    support = p > 0.0
    p_s = p[support]
    return _kl_from_likelihoods(p_s, np.log(p_s), support, q)


def _kl_from_likelihoods(p_probs, p_logs, support, q):
    """Divergence sum given precomputed teacher-side terms."""
    q_s = q[support]
    if np.any(q_s <= 0.0):
        return float("inf")
    value = float(np.sum(p_probs * (p_logs - np.log(q_s))))
    # Rounding can push a mathematically non-negative sum slightly below 0.
    return max(value, 0.0)
