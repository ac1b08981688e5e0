"""Online learners for discrete HMMs.

All four learners consume one observed sequence at a time and maintain a
current model estimate.  They share the scikit-learn estimator contract:
constructor arguments are stored untouched, state lives in trailing
underscore attributes created by ``reset`` (or lazily on the first
``partial_fit``), and ``get_params`` / ``set_params`` work as usual.

Two learners move a point estimate directly:

* ``BaumWelchOnline`` blends the current parameters toward the
  single-sequence reestimation target.
* ``BaldiChauvin`` does gradient ascent in softmax weight space; its
  weight update is the expected-count residual, which equals the
  log-likelihood gradient divided by the softmax gain, so the effective
  step size does not shrink as the gain goes to zero.

Two learners maintain a factorized Dirichlet posterior over the model
and differ only in how the path-mixture posterior is projected back to
a product of Dirichlet rows after each observation:

* ``BayesianOnline`` matches all expected logs, which requires solving a
  digamma system per row.
* ``MeanPosterior`` matches row means plus one second moment, which
  needs only arithmetic on the mixture moments.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from .dirichlet import _digamma_vec, solve_digamma_system
from .exceptions import CollapsedPosteriorError, EnumerationCapError
from .hmm import (
    HmmParams,
    ModelDims,
    _forward_backward_kernel,
    sequence_likelihood,
    uniform_params,
)
from .validation import as_symbol_sequence, check_positive, ensure_rng

DEFAULT_PATH_CAP = 10 ** 6

_VARIANCE_FLOOR = 1e-14


def _floored_vector(v, eps):
    v = np.maximum(v, eps)
    return v / v.sum()


def _floored_rows(mat, eps):
    mat = np.maximum(mat, eps)
    return mat / mat.sum(axis=1, keepdims=True)


def _reestimate_arrays(pi, A, B, y, floor):
    """Reestimation on raw arrays; returns ``(pi, A, B)`` fresh arrays.

    The posterior is computed under floored-and-renormalized copies of
    the inputs; rows with zero posterior visit count keep their original
    (unfloored) values.
    """
    if floor > 0.0:
        work = (_floored_vector(pi, floor), _floored_rows(A, floor), _floored_rows(B, floor))
    else:
        work = (pi, A, B)
    gamma, xi, _ = _forward_backward_kernel(work[0], work[1], work[2], y)

    pi_new = gamma[0].copy()

    den_A = gamma[:-1].sum(axis=0)
    num_A = xi.sum(axis=0)
    rows = den_A > 0.0
    if rows.all():
        A_new = num_A / den_A[:, None]
    else:
        A_new = A.copy()
        A_new[rows] = num_A[rows] / den_A[rows, None]

    den_B = gamma.sum(axis=0)
    num_B = np.zeros_like(B)
    for t in range(len(y)):
        num_B[:, y[t]] += gamma[t]
    rows = den_B > 0.0
    if rows.all():
        B_new = num_B / den_B[:, None]
    else:
        B_new = B.copy()
        B_new[rows] = num_B[rows] / den_B[rows, None]

    return pi_new, A_new, B_new


def bw_reestimate(params, y, floor=1e-12):
    """One full reestimation step from a single observed sequence.

    The posterior is computed under a floored copy of ``params`` (all
    entries clamped to ``floor`` and renormalized), which keeps the
    sequence likelihood positive.  Rows whose posterior visit count is
    zero are left unchanged; with a positive floor this can only happen
    for the transition block when ``T == 1``.

    Reestimation never decreases the sequence likelihood: it is one EM
    step on the single-sequence objective.
    """
    dims = params.dims
    y = as_symbol_sequence(y, dims.m, dims.T)
    pi_new, A_new, B_new = _reestimate_arrays(params.pi, params.A, params.B, y, floor)
    return HmmParams(dims, pi_new, A_new, B_new)


@lru_cache(maxsize=64)
def _path_structure(n, T):
    """All hidden paths of length T plus their start/transition counts."""
    paths = np.array(list(product(range(n), repeat=T)), dtype=np.int64)
    K = paths.shape[0]
    start = np.zeros((K, n))
    start[np.arange(K), paths[:, 0]] = 1.0
    trans = np.zeros((K, n, n))
    for t in range(T - 1):
        trans[np.arange(K), paths[:, t], paths[:, t + 1]] += 1.0
    for arr in (paths, start, trans):
        arr.setflags(write=False)
    return paths, start, trans


def _emission_counts(paths, y, n, m):
    K, T = paths.shape
    counts = np.zeros((K, n, m))
    rows = np.broadcast_to(np.arange(K)[:, None], (K, T))
    symbols = np.broadcast_to(y, (K, T))
    np.add.at(counts, (rows, paths, symbols), 1.0)
    return counts


class _CountStructure(NamedTuple):
    """Per-path count arrays for one observed sequence, all read-only.

    ``entries`` (K, n + n*n + n*m) and ``row_totals`` (K, 1 + 2n) hold
    the flattened entry counts and per-row totals in (pi, A rows, B
    rows) order, for the mass computation.  ``head`` stacks the pi and
    A counts into one (K, n + 1, n) block of equal-width rows so the
    learners project them in a single call; ``head_totals`` and
    ``emit_totals`` are the matching slices of ``row_totals``.
    """

    paths: np.ndarray
    start: np.ndarray
    trans: np.ndarray
    emit: np.ndarray
    entries: np.ndarray
    row_totals: np.ndarray
    head: np.ndarray
    head_totals: np.ndarray
    emit_totals: np.ndarray


@lru_cache(maxsize=4096)
def _count_structure(n, m, T, y_key):
    """Count arrays for one sequence, cached because they depend only on
    ``y`` and the dimensions, not on the hyperparameters.
    """
    paths, start, trans = _path_structure(n, T)
    y = np.asarray(y_key, dtype=np.int64)
    emit = _emission_counts(paths, y, n, m)
    K = paths.shape[0]
    entries = np.concatenate(
        [start, trans.reshape(K, -1), emit.reshape(K, -1)], axis=1
    )
    row_totals = np.concatenate(
        [start.sum(axis=1, keepdims=True), trans.sum(axis=2), emit.sum(axis=2)],
        axis=1,
    )
    head = np.concatenate([start[:, None, :], trans], axis=1)
    for arr in (entries, row_totals, emit, head):
        arr.setflags(write=False)
    return _CountStructure(
        paths, start, trans, emit, entries, row_totals,
        head, row_totals[:, : n + 1], row_totals[:, n + 1 :],
    )


@dataclass
class PosteriorMixture:
    """Exact posterior over models after one observation, as a mixture.

    Conditioned on a hidden path the Dirichlet prior stays conjugate, so
    the posterior is a mixture with one component per path.  Component
    ``k`` adds ``pi_counts[k]``, ``A_counts[k]`` and ``B_counts[k]`` to
    the respective concentration rows and carries normalized weight
    ``exp(log_weights[k])``.  ``log_evidence`` is the log marginal
    probability of the observed sequence under the prior.
    """

    paths: np.ndarray
    log_weights: np.ndarray
    pi_counts: np.ndarray
    A_counts: np.ndarray
    B_counts: np.ndarray
    log_evidence: float

    @property
    def weights(self):
        return np.exp(self.log_weights)


def posterior_mixture(rho, a, b, y, path_cap=DEFAULT_PATH_CAP):
    """Mixture posterior for prior rows ``(rho, a, b)`` and sequence ``y``.

    Raises
    ------
    EnumerationCapError
        If the number of hidden paths ``n ** T`` exceeds ``path_cap``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = b.shape
    T = len(y)
    if n ** T > path_cap:
        raise EnumerationCapError(
            f"{n} ** {T} hidden paths exceed the cap of {path_cap}"
        )
    y_key = tuple(int(s) for s in y)
    counts = _count_structure(n, m, T, y_key)
    log_mass, log_evidence = _mixture_masses(rho, a, b, counts)
    return PosteriorMixture(
        paths=counts.paths,
        log_weights=log_mass - log_evidence,
        pi_counts=counts.start,
        A_counts=counts.trans,
        B_counts=counts.emit,
        log_evidence=log_evidence,
    )


def _mixture_masses(rho, a, b, counts):
    """Component log masses and log evidence for one cached count set.

    Component ``k``'s unnormalized log mass is the sum over model rows
    of ``ln W(u_row, counts_row[k])``; all rows go through one fused
    pair of ``gammaln`` evaluations.
    """
    u_entries = np.concatenate([rho, a.ravel(), b.ravel()])
    u_totals = np.concatenate([[rho.sum()], a.sum(axis=1), b.sum(axis=1)])
    base = float(gammaln(u_totals).sum() - gammaln(u_entries).sum())
    log_mass = (
        base
        + gammaln(u_entries[None, :] + counts.entries).sum(axis=1)
        - gammaln(u_totals[None, :] + counts.row_totals).sum(axis=1)
    )
    peak = log_mass.max()
    log_evidence = float(np.log(np.exp(log_mass - peak).sum()) + peak)
    return log_mass, log_evidence


class _OnlineHmmLearner(BaseEstimator):
    """Common plumbing: validation, lazy state, the observe loop."""

    _state_attr = None  # set by subclasses; presence marks a reset learner

    @property
    def dims(self):
        return ModelDims(self.n_states, self.n_symbols, self.sequence_length)

    def _check_setup(self):
        for name in ("n_states", "n_symbols", "sequence_length"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def _ensure_state(self):
        if not hasattr(self, self._state_attr):
            self.reset()

    def reset(self):
        """Return the learner to its initial (pre-data) state."""
        self._check_setup()
        self._init_state()
        if self.init_noise:
            check_positive("init_noise", self.init_noise)
            self._jitter_state(ensure_rng(self.random_state), self.init_noise)
        return self

    def fit(self, X, y=None):
        """Reset, then observe every row of ``X`` in order."""
        self.reset()
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        """Observe a batch of sequences, one online update per row.

        ``X`` is either a single sequence of length ``T`` or an array of
        shape ``(n_sequences, T)`` with integer symbols in ``[0, m)``.
        """
        self._ensure_state()
        X = np.asarray(X)
        rows = X[None, :] if X.ndim == 1 else X
        for row in rows:
            seq = as_symbol_sequence(row, self.n_symbols, self.sequence_length)
            self._observe(seq)
        return self

    def estimate(self):
        """Current model estimate as a fresh :class:`HmmParams`."""
        self._ensure_state()
        pi, A, B = self._estimate_arrays()
        return HmmParams(self.dims, pi.copy(), A.copy(), B.copy())

    def score(self, X, y=None):
        """Mean log-likelihood of the rows of ``X`` under the estimate."""
        params = self.estimate()
        X = np.asarray(X)
        rows = X[None, :] if X.ndim == 1 else X
        total = 0.0
        for row in rows:
            seq = as_symbol_sequence(row, self.n_symbols, self.sequence_length)
            total += np.log(sequence_likelihood(params, seq))
        return float(total / len(rows))

    def _estimate_arrays(self):
        """Current ``(pi, A, B)`` as raw arrays, without defensive copies.

        Hot-path accessor for the simulation harness; callers must not
        mutate the result.
        """
        raise NotImplementedError


class BaumWelchOnline(_OnlineHmmLearner):
    """Online reestimation: blend toward the single-sequence EM target.

    Each observed sequence yields the full reestimate of the current
    parameters, and the new estimate is the convex blend
    ``(1 - learning_rate) * current + learning_rate * reestimate``
    followed by flooring at ``floor`` and row renormalization.  With
    ``learning_rate=1`` the update is exactly the floored reestimate.

    State lives in the arrays ``pi_``, ``A_`` and ``B_``; ``estimate()``
    wraps a copy of them.

    Parameters
    ----------
    n_states, n_symbols, sequence_length : int
        Model dimensions and observation window length.
    learning_rate : float, default 0.1
        Blend weight on the reestimation target.
    floor : float, default 1e-12
        Lower clamp applied both inside the posterior computation and to
        the committed estimate; keeps every likelihood positive.
    init_params : HmmParams, optional
        Starting estimate; the uniform model when omitted.
    init_noise : float, default 0.0
        Magnitude of uniform parameter jitter applied at reset, used to
        break the exact permutation symmetry of the uniform start.
    random_state : int, Generator, optional
        Source of the jitter draws.
    """

    _state_attr = "pi_"

    def __init__(
        self,
        n_states=2,
        n_symbols=3,
        sequence_length=2,
        learning_rate=0.1,
        floor=1e-12,
        init_params=None,
        init_noise=0.0,
        random_state=None,
    ):
        self.n_states = n_states
        self.n_symbols = n_symbols
        self.sequence_length = sequence_length
        self.learning_rate = learning_rate
        self.floor = floor
        self.init_params = init_params
        self.init_noise = init_noise
        self.random_state = random_state

    def _init_state(self):
        check_positive("learning_rate", self.learning_rate)
        check_positive("floor", self.floor)
        if self.init_params is not None:
            if self.init_params.dims != self.dims:
                raise ValueError("init_params dimensions do not match the learner")
            start = self.init_params
        else:
            start = uniform_params(self.dims)
        self.pi_ = start.pi.copy()
        self.A_ = start.A.copy()
        self.B_ = start.B.copy()

    def _jitter_state(self, rng, noise):
        pi = self.pi_ + rng.uniform(0.0, noise, self.pi_.shape)
        A = self.A_ + rng.uniform(0.0, noise, self.A_.shape)
        B = self.B_ + rng.uniform(0.0, noise, self.B_.shape)
        self.pi_ = pi / pi.sum()
        self.A_ = A / A.sum(axis=1, keepdims=True)
        self.B_ = B / B.sum(axis=1, keepdims=True)

    def _observe(self, y):
        eta = self.learning_rate
        floor = self.floor
        t_pi, t_A, t_B = _reestimate_arrays(self.pi_, self.A_, self.B_, y, floor)
        pi = np.maximum(self.pi_ + eta * (t_pi - self.pi_), floor)
        A = np.maximum(self.A_ + eta * (t_A - self.A_), floor)
        B = np.maximum(self.B_ + eta * (t_B - self.B_), floor)
        self.pi_ = pi / pi.sum()
        self.A_ = A / A.sum(axis=1, keepdims=True)
        self.B_ = B / B.sum(axis=1, keepdims=True)

    def _estimate_arrays(self):
        return self.pi_, self.A_, self.B_


class BaldiChauvin(_OnlineHmmLearner):
    """Gradient ascent on the sequence log-likelihood in weight space.

    The model is parameterized row by row through a sharpened softmax,
    ``pi = softmax(lam * w_pi)`` and likewise for each row of ``A`` and
    ``B``.  After each sequence the weights move by ``learning_rate``
    times the expected-count residuals

        w_pi   += eta * (gamma_1 - pi)
        w_A[i] += eta * (xi-counts[i] - A[i] * gamma-counts[i])
        w_B[i] += eta * (emit-counts[i] - B[i] * visit-counts[i])

    which is the gradient of the log-likelihood with respect to ``w``
    divided by ``lam``; keeping the gain out of the step means the
    update does not vanish as ``lam`` is made small.  To first order in
    ``lam``, starting from uniform rows, the induced parameter change is
    the blend step of :class:`BaumWelchOnline` with effective rate
    ``lam * learning_rate / row_width``, with the transition and
    emission rows additionally weighted by their posterior visit counts.

    Parameters
    ----------
    n_states, n_symbols, sequence_length : int
        Model dimensions and observation window length.
    learning_rate : float, default 1.0
        Step size on the weights.
    lam : float, default 0.01
        Softmax gain; small values make the parameterization nearly
        linear around uniform rows.
    floor : float, default 1e-12
        Clamp used inside the posterior computation.  The softmax itself
        keeps all parameters strictly positive.
    init_noise : float, default 0.0
        Relative jitter applied to the initial (uniform) parameters,
        realized exactly in weight space.
    random_state : int, Generator, optional
        Source of the jitter draws.
    """

    _state_attr = "w_pi_"

    def __init__(
        self,
        n_states=2,
        n_symbols=3,
        sequence_length=2,
        learning_rate=1.0,
        lam=0.01,
        floor=1e-12,
        init_noise=0.0,
        random_state=None,
    ):
        self.n_states = n_states
        self.n_symbols = n_symbols
        self.sequence_length = sequence_length
        self.learning_rate = learning_rate
        self.lam = lam
        self.floor = floor
        self.init_noise = init_noise
        self.random_state = random_state

    def _init_state(self):
        check_positive("learning_rate", self.learning_rate)
        check_positive("lam", self.lam)
        check_positive("floor", self.floor)
        n, m = self.n_states, self.n_symbols
        self.w_pi_ = np.zeros(n)
        self.w_A_ = np.zeros((n, n))
        self.w_B_ = np.zeros((n, m))
        self._cached_rows = None

    def _jitter_state(self, rng, noise):
        # Jitter the derived parameters, then invert the softmax exactly:
        # w = ln(p) / lam reproduces any strictly positive row.
        def jitter(w):
            p = self._softmax_rows(w)
            p = p + rng.uniform(0.0, noise, p.shape)
            p /= p.sum(axis=1, keepdims=True)
            return (np.log(p) / self.lam).reshape(np.shape(w))

        self.w_pi_ = jitter(self.w_pi_)
        self.w_A_ = jitter(self.w_A_)
        self.w_B_ = jitter(self.w_B_)

    def _softmax_rows(self, w):
        z = self.lam * np.atleast_2d(w)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def _observe(self, y):
        pi, A, B = self._estimate_arrays()
        gamma, xi, _ = _forward_backward_kernel(
            _floored_vector(pi, self.floor),
            _floored_rows(A, self.floor),
            _floored_rows(B, self.floor),
            y,
        )

        trans_counts = xi.sum(axis=0)
        visits_from = gamma[:-1].sum(axis=0)
        emit_counts = np.zeros_like(B)
        for t in range(len(y)):
            emit_counts[:, y[t]] += gamma[t]
        visits = gamma.sum(axis=0)

        eta = self.learning_rate
        self.w_pi_ = self.w_pi_ + eta * (gamma[0] - pi)
        self.w_A_ = self.w_A_ + eta * (trans_counts - A * visits_from[:, None])
        self.w_B_ = self.w_B_ + eta * (emit_counts - B * visits[:, None])

    def _estimate_arrays(self):
        # Updates rebind the weight arrays, so identity of the sources
        # is a sound cache key; holding them also keeps the ids alive.
        cached = self._cached_rows
        if (
            cached is not None
            and cached[0] is self.w_pi_
            and cached[1] is self.w_A_
            and cached[2] is self.w_B_
        ):
            return cached[3]
        rows = (
            self._softmax_rows(self.w_pi_)[0],
            self._softmax_rows(self.w_A_),
            self._softmax_rows(self.w_B_),
        )
        self._cached_rows = (self.w_pi_, self.w_A_, self.w_B_, rows)
        return rows


class _DirichletPosteriorLearner(_OnlineHmmLearner):
    """Shared state and mixture computation for the Bayesian learners.

    State is one concentration row per model row: ``rho_`` for the
    initial distribution, ``a_`` for transitions, ``b_`` for emissions.
    Each observation forms the exact path-mixture posterior and projects
    it back onto a single product of Dirichlet rows; subclasses define
    the projection.
    """

    _state_attr = "rho_"

    def __init__(
        self,
        n_states=2,
        n_symbols=3,
        sequence_length=2,
        prior_strength=1.0,
        prior_mean=None,
        path_cap=DEFAULT_PATH_CAP,
        init_noise=0.0,
        random_state=None,
    ):
        self.n_states = n_states
        self.n_symbols = n_symbols
        self.sequence_length = sequence_length
        self.prior_strength = prior_strength
        self.prior_mean = prior_mean
        self.path_cap = path_cap
        self.init_noise = init_noise
        self.random_state = random_state

    def _init_state(self):
        check_positive("prior_strength", self.prior_strength)
        n, m = self.n_states, self.n_symbols
        mean = self.prior_mean if self.prior_mean is not None else uniform_params(self.dims)
        if mean.dims != self.dims:
            raise ValueError("prior_mean dimensions do not match the learner")
        if min(mean.pi.min(), mean.A.min(), mean.B.min()) <= 0.0:
            raise ValueError("prior_mean must be strictly positive")
        # Row concentration = strength * row width * mean row, so the flat
        # prior at strength 1 has every concentration equal to 1.
        s = self.prior_strength
        self.rho_ = s * n * mean.pi.copy()
        self.a_ = s * n * mean.A.copy()
        self.b_ = s * m * mean.B.copy()
        self.last_projection_residual_ = 0.0
        self.max_projection_residual_ = 0.0

    def _jitter_state(self, rng, noise):
        self.rho_ = self.rho_ * (1.0 + rng.uniform(0.0, noise, self.rho_.shape))
        self.a_ = self.a_ * (1.0 + rng.uniform(0.0, noise, self.a_.shape))
        self.b_ = self.b_ * (1.0 + rng.uniform(0.0, noise, self.b_.shape))

    def posterior_mixture(self, y):
        """Exact mixture posterior for ``y`` given the current state."""
        self._ensure_state()
        y = as_symbol_sequence(y, self.n_symbols, self.sequence_length)
        return posterior_mixture(self.rho_, self.a_, self.b_, y, self.path_cap)

    def _observe(self, y):
        n, m = self.b_.shape
        if n ** len(y) > self.path_cap:
            raise EnumerationCapError(
                f"{n} ** {len(y)} hidden paths exceed the cap of {self.path_cap}"
            )
        counts = _count_structure(n, m, len(y), tuple(int(s) for s in y))
        log_mass, log_evidence = _mixture_masses(self.rho_, self.a_, self.b_, counts)
        weights = np.exp(log_mass - log_evidence)
        head_u = np.concatenate([self.rho_[None, :], self.a_], axis=0)
        head = self._project_block(head_u, counts.head, counts.head_totals, weights)
        b = self._project_block(self.b_, counts.emit, counts.emit_totals, weights)
        # Both blocks projected; commit atomically so a failed update
        # leaves the state untouched.
        self.rho_, self.a_, self.b_ = head[0], head[1:], b
        self._after_update()

    def _after_update(self):
        pass

    def _estimate_arrays(self):
        return (
            self.rho_ / self.rho_.sum(),
            self.a_ / self.a_.sum(axis=1, keepdims=True),
            self.b_ / self.b_.sum(axis=1, keepdims=True),
        )


class BayesianOnline(_DirichletPosteriorLearner):
    """Exact sequential Bayes with expected-log projection.

    The mixture posterior is replaced by the product of Dirichlet rows
    with the same expected logarithms ``<ln x_j>``.  Each row requires
    inverting a digamma system; ``last_projection_residual_`` records
    the worst residual of the most recent inversion and
    ``max_projection_residual_`` the worst over the learner's lifetime.

    Parameters
    ----------
    n_states, n_symbols, sequence_length : int
        Model dimensions and observation window length.
    prior_strength : float, default 1.0
        Scale of the initial concentrations; at 1 with the default
        uniform ``prior_mean`` every concentration starts at 1.
    prior_mean : HmmParams, optional
        Strictly positive mean of the initial prior.
    path_cap : int, default 10**6
        Refuse sequences whose hidden-path count exceeds this.
    solver_tol, solver_max_iter : float, int
        Passed through to the digamma-system solver.
    init_noise : float, default 0.0
        Relative jitter applied to the initial concentrations at reset.
    random_state : int, Generator, optional
        Source of the jitter draws.
    """

    def __init__(
        self,
        n_states=2,
        n_symbols=3,
        sequence_length=2,
        prior_strength=1.0,
        prior_mean=None,
        path_cap=DEFAULT_PATH_CAP,
        solver_tol=1e-10,
        solver_max_iter=500,
        init_noise=0.0,
        random_state=None,
    ):
        super().__init__(
            n_states=n_states,
            n_symbols=n_symbols,
            sequence_length=sequence_length,
            prior_strength=prior_strength,
            prior_mean=prior_mean,
            path_cap=path_cap,
            init_noise=init_noise,
            random_state=random_state,
        )
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter

    def _project_block(self, u, counts, count_totals, weights):
        K = counts.shape[0]
        shifted = u[None, :, :] + counts
        totals = u.sum(axis=1)[None, :] + count_totals
        logs = _digamma_vec(shifted) - _digamma_vec(totals)[:, :, None]
        mu = (weights @ logs.reshape(K, -1)).reshape(u.shape)
        out = np.empty_like(u)
        for i in range(u.shape[0]):
            out[i] = solve_digamma_system(
                mu[i], tol=self.solver_tol, max_iter=self.solver_max_iter
            )
        residual = np.abs(
            _digamma_vec(out) - _digamma_vec(out.sum(axis=1))[:, None] - mu
        ).max()
        self._pending_residuals.append(float(residual))
        return out

    def _observe(self, y):
        self._pending_residuals = []
        super()._observe(y)

    def _after_update(self):
        self.last_projection_residual_ = max(self._pending_residuals)
        self.max_projection_residual_ = max(
            self.max_projection_residual_, self.last_projection_residual_
        )
        del self._pending_residuals


class MeanPosterior(_DirichletPosteriorLearner):
    """Moment-matched approximation of :class:`BayesianOnline`.

    Each row of the mixture posterior is replaced by the Dirichlet with
    the same mean vector whose total concentration is set by matching
    the second moment of the row's first component:

        u_hat = mean * (mean_1 - m2_1) / (m2_1 - mean_1**2)

    All quantities are mixture averages of conjugate-component moments,
    so an update costs only arithmetic; on a single-component mixture
    the projection returns that component exactly.

    Parameters are those of :class:`BayesianOnline` minus the solver
    knobs.

    Raises
    ------
    CollapsedPosteriorError
        When the matched variance falls below 1e-14 and no finite
        concentration can reproduce it.
    """

    def _project_block(self, u, counts, count_totals, weights):
        K = counts.shape[0]
        shifted = u[None, :, :] + counts
        totals = u.sum(axis=1)[None, :] + count_totals
        ratios = shifted / totals[:, :, None]
        mean = (weights @ ratios.reshape(K, -1)).reshape(u.shape)
        first = shifted[:, :, 0]
        m2 = weights @ (first * (first + 1.0) / (totals * (totals + 1.0)))
        variance = m2 - mean[:, 0] ** 2
        if np.any(variance < _VARIANCE_FLOOR):
            raise CollapsedPosteriorError(
                f"matched variance {variance.min()!r} below {_VARIANCE_FLOOR}"
            )
        return mean * ((mean[:, 0] - m2) / variance)[:, None]


LEARNERS = {
    "bwo": BaumWelchOnline,
    "bc": BaldiChauvin,
    "bona": BayesianOnline,
    "mpa": MeanPosterior,
}


@dataclass
class LearnerConfig:
    """Learner block of an experiment configuration.

    ``algorithm`` selects the learner; the remaining fields are the
    union of all learner options, each consumed only by the algorithms
    it applies to (see :data:`CONFIG_FIELDS`).
    """

    algorithm: str
    eta_bw: float = 0.1
    eta_bc: float = 1.0
    lam: float = 0.01
    prior_strength: float = 1.0
    floor: float = 1e-12


# Which configuration fields each algorithm accepts.
CONFIG_FIELDS = {
    "bwo": ("eta_bw", "floor"),
    "bc": ("eta_bc", "lam", "floor"),
    "bona": ("prior_strength",),
    "mpa": ("prior_strength",),
}


def make_learner(dims, config, init_noise=0.0, random_state=None):
    """Build a learner from a :class:`LearnerConfig`.

    With ``init_noise == 0`` the learner starts at the exactly uniform
    (maximally symmetric) model.
    """
    common = {
        "n_states": dims.n,
        "n_symbols": dims.m,
        "sequence_length": dims.T,
        "init_noise": init_noise,
        "random_state": random_state,
    }
    name = config.algorithm
    if name == "bwo":
        return BaumWelchOnline(
            learning_rate=config.eta_bw, floor=config.floor, **common
        )
    if name == "bc":
        return BaldiChauvin(
            learning_rate=config.eta_bc, lam=config.lam, floor=config.floor, **common
        )
    if name == "bona":
        return BayesianOnline(prior_strength=config.prior_strength, **common)
    if name == "mpa":
        return MeanPosterior(prior_strength=config.prior_strength, **common)
    raise ValueError(
        f"unknown algorithm {name!r}; expected one of {sorted(LEARNERS)}"
    )
