"""Teacher-student simulation engine.

A run streams sequences from a (possibly drifting) teacher into one
learner and records the exact KL divergence from the current teacher to
the learner's estimate after every sequence.  Averaged experiments
repeat this over independently seeded replicas, each with its own
teacher, and reduce to a mean curve with standard errors.

Determinism contract: the master seed fully determines every draw.
Replica r uses the r-th child of ``SeedSequence(seed)``; teacher
generation, initial-state jitter, and the observation stream all
consume the replica's generator in a fixed order, so results are
bitwise reproducible and independent of worker count.
"""

import time
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .exceptions import ConfigError, EnumerationCapError, UpdateError
from .hmm import (
    DEFAULT_ENUMERATION_CAP,
    HmmParams,
    _enumerated_likelihood_kernel,
    _kl_from_likelihoods,
    kl_divergence,
    uniform_params,
    validate,
)
from .learners import CONFIG_FIELDS, LEARNERS, LearnerConfig, make_learner
from .validation import ensure_rng

INF_SENTINEL = 1e9

SCHEDULE_KINDS = ("static", "abrupt", "gradual")


@dataclass
class Schedule:
    """Teacher drift policy.

    ``static`` never changes the teacher; ``abrupt`` replaces it with a
    fresh random teacher after every ``interval`` sequences; ``gradual``
    adds independent uniform(0, ``delta``) noise to every entry after
    each sequence and renormalizes.
    """

    kind: str = "static"
    interval: int = 500
    delta: float = 0.01

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(
                f"kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}"
            )
        if self.kind == "abrupt" and (
            not isinstance(self.interval, (int, np.integer)) or self.interval < 1
        ):
            raise ValueError(f"interval must be a positive integer, got {self.interval!r}")
        if self.kind == "gradual" and not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")


@dataclass
class LearningCurve:
    """KL trajectory of a single run.

    ``kl[i]`` is the divergence from the teacher in force at step
    ``p[i]`` to the learner's estimate after that step; ``p[0] == 0`` is
    the pre-data point.  Failed updates leave the state unchanged and
    are listed in ``annotations`` as ``(p, message)``.  ``snapshots``
    maps step index to the estimate recorded there, when requested.
    """

    p: np.ndarray
    kl: np.ndarray
    snapshots: dict = field(default_factory=dict)
    annotations: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class AveragedCurve:
    """Pointwise mean and standard error over replicas.

    Non-finite replica values are capped at ``INF_SENTINEL`` before
    averaging and flagged in ``inf_flags``.  ``snapshots`` is only
    populated for single-replica runs.
    """

    p: np.ndarray
    kl_mean: np.ndarray
    kl_stderr: np.ndarray
    inf_flags: np.ndarray
    n_replicas: int
    snapshots: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Complete description of one experiment.

    ``teacher=None`` draws an independent random teacher per replica;
    a fixed teacher is shared by all replicas, whose observation streams
    still differ.  ``init_jitter`` perturbs every learner's initial
    state away from the exactly symmetric start.
    """

    dims: object
    learners: list
    n_sequences: int
    n_replicas: int = 1
    schedule: Schedule = field(default_factory=Schedule)
    seed: int = 0
    teacher: HmmParams = None
    init_jitter: float = 0.0
    snapshots: bool = False
    snapshot_stride: int = 10

    def validate(self):
        """Raise :class:`ConfigError` naming the offending field."""
        if not isinstance(self.n_sequences, (int, np.integer)) or self.n_sequences < 1:
            raise ConfigError("n_sequences", f"must be a positive integer, got {self.n_sequences!r}")
        if not isinstance(self.n_replicas, (int, np.integer)) or self.n_replicas < 1:
            raise ConfigError("n_replicas", f"must be a positive integer, got {self.n_replicas!r}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("seed", f"must be an integer, got {self.seed!r}")
        if not isinstance(self.snapshot_stride, (int, np.integer)) or self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride", f"must be a positive integer, got {self.snapshot_stride!r}")
        if self.init_jitter < 0.0:
            raise ConfigError("init_jitter", f"must be non-negative, got {self.init_jitter!r}")
        if self.snapshots and self.n_replicas != 1:
            raise ConfigError("snapshots", "parameter snapshots require n_replicas = 1")
        if not self.learners:
            raise ConfigError("learners", "at least one learner is required")
        for idx, cfg in enumerate(self.learners):
            path = f"learners[{idx}]"
            if cfg.algorithm not in LEARNERS:
                raise ConfigError(
                    f"{path}.algorithm",
                    f"unknown algorithm {cfg.algorithm!r}; expected one of {sorted(LEARNERS)}",
                )
            for name in CONFIG_FIELDS[cfg.algorithm]:
                if not getattr(cfg, name) > 0.0:
                    raise ConfigError(
                        f"{path}.{name}", f"must be positive, got {getattr(cfg, name)!r}"
                    )
        if self.teacher is not None:
            if self.teacher.dims != self.dims:
                raise ConfigError("teacher", "dimensions do not match dims")
            report = validate(self.teacher)
            if not report:
                raise ConfigError("teacher", "; ".join(report.violations))
        return self


def random_teacher(dims, rng):
    """Teacher with every row drawn from the flat Dirichlet on its simplex."""
    rng = ensure_rng(rng)
    pi = rng.dirichlet(np.ones(dims.n))
    A = np.stack([rng.dirichlet(np.ones(dims.n)) for _ in range(dims.n)])
    B = np.stack([rng.dirichlet(np.ones(dims.m)) for _ in range(dims.n)])
    return HmmParams(dims, pi, A, B)


def symmetric_student(dims, algorithm, **options):
    """Learner whose initial estimate is the exactly uniform model.

    ``options`` set the matching :class:`LearnerConfig` fields.  The
    returned learner has no initial jitter, so its starting point is an
    exact fixed point of the hidden-state permutation symmetry.
    """
    return make_learner(dims, LearnerConfig(algorithm=algorithm, **options))


def drift_step(schedule, teacher, p, rng):
    """Teacher in force after step ``p``; consumes ``rng`` only on change."""
    if schedule is None or schedule.kind == "static":
        return teacher
    if schedule.kind == "abrupt":
        if p % schedule.interval == 0:
            return random_teacher(teacher.dims, rng)
        return teacher
    # gradual: perturb every entry, clamp, renormalize
    pi = np.maximum(teacher.pi + rng.uniform(0.0, schedule.delta, teacher.pi.shape), 0.0)
    A = np.maximum(teacher.A + rng.uniform(0.0, schedule.delta, teacher.A.shape), 0.0)
    B = np.maximum(teacher.B + rng.uniform(0.0, schedule.delta, teacher.B.shape), 0.0)
    return HmmParams(
        teacher.dims,
        pi / pi.sum(),
        A / A.sum(axis=1, keepdims=True),
        B / B.sum(axis=1, keepdims=True),
    )


def _kl_terms(teacher):
    """Cache the teacher side of the divergence sum."""
    probs = _enumerated_likelihood_kernel(
        teacher.pi, teacher.A, teacher.B, teacher.dims.T
    )
    support = probs > 0.0
    p_s = probs[support]
    return support, p_s, np.log(p_s)


def run_single(
    teacher,
    learner,
    n_sequences,
    rng,
    schedule=None,
    record_snapshots=False,
    snapshot_stride=10,
    kl_cap=DEFAULT_ENUMERATION_CAP,
):
    """Stream ``n_sequences`` observations into one learner.

    Per step: draw a sequence from the current teacher, let the learner
    observe it (an :class:`UpdateError` is recorded and skipped, leaving
    the state unchanged), record the divergence from the current teacher
    to the estimate, then apply the drift schedule.  The caller owns the
    learner's initialization; ``rng`` drives both sampling and drift.

    The divergence recorded at each step equals
    :func:`onlinehmm.hmm.kl_divergence` of (current teacher, estimate).
    """
    rng = ensure_rng(rng)
    dims = teacher.dims
    if dims.m ** dims.T > kl_cap:
        raise EnumerationCapError(
            f"{dims.m} ** {dims.T} sequences exceed the cap of {kl_cap}"
        )
    T = dims.T
    n1 = dims.n - 1
    m1 = dims.m - 1

    def teacher_tables():
        # Python-list cumsums: bisect_left matches np.searchsorted exactly
        # and is faster for rows this small.
        return (
            np.cumsum(teacher.pi).tolist(),
            np.cumsum(teacher.A, axis=1).tolist(),
            np.cumsum(teacher.B, axis=1).tolist(),
        )

    support, p_probs, p_logs = _kl_terms(teacher)
    pi_cum, A_cum, B_cum = teacher_tables()

    def current_kl():
        pi, A, B = learner._estimate_arrays()
        q = _enumerated_likelihood_kernel(pi, A, B, T)
        return _kl_from_likelihoods(p_probs, p_logs, support, q)

    steps = np.arange(n_sequences + 1)
    kl = np.empty(n_sequences + 1)
    snapshots = {}
    annotations = []
    learner._ensure_state()
    kl[0] = current_kl()
    if record_snapshots:
        snapshots[0] = learner.estimate()

    y = np.empty(T, dtype=np.int64)
    random = rng.random
    for p in range(1, n_sequences + 1):
        # Same draw order as hmm.sample_sequence, with cached cumsums.
        state = min(bisect_left(pi_cum, random()), n1)
        y[0] = min(bisect_left(B_cum[state], random()), m1)
        for t in range(1, T):
            state = min(bisect_left(A_cum[state], random()), n1)
            y[t] = min(bisect_left(B_cum[state], random()), m1)
        try:
            learner._observe(y)
        except UpdateError as exc:
            annotations.append((p, f"{type(exc).__name__}: {exc}"))
        kl[p] = current_kl()
        if record_snapshots and p % snapshot_stride == 0:
            snapshots[p] = learner.estimate()
        if schedule is not None and schedule.kind != "static":
            new_teacher = drift_step(schedule, teacher, p, rng)
            if new_teacher is not teacher:
                teacher = new_teacher
                support, p_probs, p_logs = _kl_terms(teacher)
                pi_cum, A_cum, B_cum = teacher_tables()

    diagnostics = {"update_failures": len(annotations)}
    if hasattr(learner, "max_projection_residual_"):
        diagnostics["max_projection_residual"] = learner.max_projection_residual_
    return LearningCurve(
        p=steps, kl=kl, snapshots=snapshots, annotations=annotations,
        diagnostics=diagnostics,
    )


def _replica_curve(
    dims,
    learner_config,
    n_sequences,
    seed_seq,
    schedule,
    teacher,
    init_noise,
    record_snapshots,
    snapshot_stride,
    kl_cap,
):
    rng = np.random.default_rng(seed_seq)
    if teacher is None:
        teacher = random_teacher(dims, rng)
    learner = make_learner(dims, learner_config, init_noise=init_noise, random_state=rng)
    learner.reset()
    return run_single(
        teacher,
        learner,
        n_sequences,
        rng,
        schedule=schedule,
        record_snapshots=record_snapshots,
        snapshot_stride=snapshot_stride,
        kl_cap=kl_cap,
    )


def run_averaged(
    dims,
    learner_config,
    n_sequences,
    n_replicas,
    seed=0,
    schedule=None,
    teacher=None,
    init_noise=0.0,
    record_snapshots=False,
    snapshot_stride=10,
    n_jobs=1,
    replica_seeds=None,
    kl_cap=DEFAULT_ENUMERATION_CAP,
):
    """Average :func:`run_single` over independently seeded replicas.

    Replica sub-seeds come from ``SeedSequence(seed).spawn(n_replicas)``
    unless ``replica_seeds`` supplies them explicitly (it may repeat a
    seed, which makes replicas identical and the standard error zero).
    Results do not depend on ``n_jobs``.
    """
    if record_snapshots and n_replicas != 1:
        raise ValueError("parameter snapshots require n_replicas == 1")
    if replica_seeds is None:
        replica_seeds = np.random.SeedSequence(seed).spawn(n_replicas)
    elif len(replica_seeds) != n_replicas:
        raise ValueError("replica_seeds length must equal n_replicas")

    args = [
        (
            dims,
            learner_config,
            n_sequences,
            seed_seq,
            schedule,
            teacher,
            init_noise,
            record_snapshots,
            snapshot_stride,
            kl_cap,
        )
        for seed_seq in replica_seeds
    ]
    if n_jobs == 1:
        curves = [_replica_curve(*a) for a in args]
    else:
        curves = Parallel(n_jobs=n_jobs)(delayed(_replica_curve)(*a) for a in args)

    stacked = np.stack([c.kl for c in curves])
    finite = np.isfinite(stacked)
    capped = np.where(finite, stacked, INF_SENTINEL)
    kl_mean = capped.mean(axis=0)
    if n_replicas > 1:
        kl_stderr = capped.std(axis=0, ddof=1) / np.sqrt(n_replicas)
    else:
        kl_stderr = np.zeros_like(kl_mean)

    diagnostics = {"update_failures": sum(c.diagnostics["update_failures"] for c in curves)}
    residuals = [
        c.diagnostics["max_projection_residual"]
        for c in curves
        if "max_projection_residual" in c.diagnostics
    ]
    if residuals:
        diagnostics["max_projection_residual"] = max(residuals)

    return AveragedCurve(
        p=curves[0].p,
        kl_mean=kl_mean,
        kl_stderr=kl_stderr,
        inf_flags=~finite.all(axis=0),
        n_replicas=n_replicas,
        snapshots=curves[0].snapshots if n_replicas == 1 else {},
        diagnostics=diagnostics,
    )


@dataclass
class LearnerRun:
    """One learner's results within an experiment."""

    config: LearnerConfig
    curve: AveragedCurve
    wall_clock_seconds: float


def run_experiment(config, n_jobs=1):
    """Execute every learner of ``config`` under the same master seed.

    Each learner sees identical replica teachers and observation
    streams (the draws depend only on the seed and the teacher), which
    makes the resulting curves directly comparable.
    """
    config.validate()
    runs = []
    for learner_config in config.learners:
        start = time.perf_counter()
        curve = run_averaged(
            config.dims,
            learner_config,
            config.n_sequences,
            config.n_replicas,
            seed=config.seed,
            schedule=config.schedule,
            teacher=config.teacher,
            init_noise=config.init_jitter,
            record_snapshots=config.snapshots,
            snapshot_stride=config.snapshot_stride,
            n_jobs=n_jobs,
        )
        runs.append(LearnerRun(learner_config, curve, time.perf_counter() - start))
    return runs


def sharp_drop_stats(kl):
    """Largest single-step decrease and median absolute step of a curve.

    A symmetry-breaking trace shows a largest drop far above the median
    step; a uniformly decaying or flat curve does not.
    """
    steps = np.diff(np.asarray(kl, dtype=np.float64))
    if steps.size == 0:
        return 0.0, 0.0
    return float(-steps.min()), float(np.median(np.abs(steps)))


def has_sharp_drop(kl, factor=10.0):
    drop, median_step = sharp_drop_stats(kl)
    return drop > factor * median_step


def block_departures(snapshots, threshold=0.05):
    """First step at which each parameter block leaves its uniform start.

    ``snapshots`` maps step index to estimates (stride 1 gives exact
    first crossings).  A block departs when some entry differs from its
    symmetric-start value (1/n, or 1/m for emissions) by more than
    ``threshold``.  Returns ``{"pi": p or None, "A": ..., "B": ...}``.
    """
    first = {"pi": None, "A": None, "B": None}
    for p in sorted(snapshots):
        params = snapshots[p]
        n, m = params.dims.n, params.dims.m
        gaps = {
            "pi": np.abs(params.pi - 1.0 / n).max(),
            "A": np.abs(params.A - 1.0 / n).max(),
            "B": np.abs(params.B - 1.0 / m).max(),
        }
        for block, gap in gaps.items():
            if first[block] is None and gap > threshold:
                first[block] = p
    return first
