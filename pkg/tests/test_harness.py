import numpy as np
import pytest

import onlinehmm.harness as harness
from onlinehmm import (
    AveragedCurve,
    ConfigError,
    EnumerationCapError,
    ExperimentConfig,
    HmmParams,
    INF_SENTINEL,
    LearnerConfig,
    MeanPosterior,
    ModelDims,
    Schedule,
    block_departures,
    drift_step,
    has_sharp_drop,
    kl_divergence,
    random_teacher,
    run_averaged,
    run_experiment,
    run_single,
    sample_sequence,
    sharp_drop_stats,
    symmetric_student,
    uniform_params,
    validate,
)
from onlinehmm.learners import BaumWelchOnline

from oracles import random_stochastic_params


class RecordingLearner:
    """Duck-typed learner that stores every observed sequence."""

    def __init__(self, dims):
        self._dims = dims
        self.seen = []
        self._uniform = uniform_params(dims)

    def reset(self):
        return self

    def _ensure_state(self):
        pass

    def _observe(self, y):
        self.seen.append(np.array(y))

    def _estimate_arrays(self):
        u = self._uniform
        return u.pi, u.A, u.B

    def estimate(self):
        return self._uniform.copy()


class ZeroSupportLearner(RecordingLearner):
    """Estimate assigns zero mass to symbol 0, off the teacher's support."""

    def _estimate_arrays(self):
        pi = np.array([0.5, 0.5])
        A = np.full((2, 2), 0.5)
        B = np.array([[0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
        return pi, A, B


class TestSchedule:
    def test_defaults(self):
        s = Schedule()
        assert s.kind == "static"

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            Schedule(kind="jumpy")

    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError, match="interval"):
            Schedule(kind="abrupt", interval=0)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError, match="delta"):
            Schedule(kind="gradual", delta=0.0)


class TestDriftStep:
    def test_static_is_identity(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        assert drift_step(Schedule(), teacher, 7, rng) is teacher
        assert drift_step(None, teacher, 7, rng) is teacher

    def test_abrupt_fires_on_interval(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        schedule = Schedule(kind="abrupt", interval=5)
        same = drift_step(schedule, teacher, 4, rng)
        assert same is teacher
        new = drift_step(schedule, teacher, 5, rng)
        assert new is not teacher
        assert validate(new)

    def test_abrupt_consumes_rng_only_on_change(self, dims232):
        teacher = random_teacher(dims232, np.random.default_rng(0))
        schedule = Schedule(kind="abrupt", interval=5)
        a = np.random.default_rng(3)
        b = np.random.default_rng(3)
        drift_step(schedule, teacher, 4, a)
        assert a.random() == b.random()

    def test_gradual_moves_a_little_every_step(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        schedule = Schedule(kind="gradual", delta=0.01)
        moved = drift_step(schedule, teacher, 1, rng)
        assert moved is not teacher
        assert validate(moved)
        assert 0.0 < np.abs(moved.B - teacher.B).max() < 0.02


class TestTeachers:
    def test_random_teacher_validates_and_reproduces(self, dims232):
        a = random_teacher(dims232, np.random.default_rng(4))
        b = random_teacher(dims232, np.random.default_rng(4))
        assert validate(a)
        assert a == b

    def test_symmetric_student_options(self, dims232):
        learner = symmetric_student(dims232, "bwo", eta_bw=0.05)
        assert isinstance(learner, BaumWelchOnline)
        assert learner.learning_rate == 0.05
        assert learner.estimate() == uniform_params(dims232)


class TestRunSingle:
    def test_curve_shape_and_start(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bwo")
        curve = run_single(teacher, learner.reset(), 20, rng)
        assert curve.p.shape == (21,)
        assert curve.kl.shape == (21,)
        np.testing.assert_array_equal(curve.p, np.arange(21))
        assert curve.kl[0] == kl_divergence(teacher, uniform_params(dims232))

    def test_recorded_kl_matches_divergence_of_snapshots(self, dims232):
        rng = np.random.default_rng(9)
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bwo").reset()
        curve = run_single(
            teacher, learner, 15, rng, record_snapshots=True, snapshot_stride=1
        )
        for p, params in curve.snapshots.items():
            assert curve.kl[p] == kl_divergence(teacher, params)

    def test_deterministic_given_seed(self, dims232):
        def one():
            rng = np.random.default_rng(13)
            teacher = random_teacher(dims232, rng)
            learner = symmetric_student(dims232, "mpa").reset()
            return run_single(teacher, learner, 25, rng).kl

        np.testing.assert_array_equal(one(), one())

    def test_snapshot_stride(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bwo").reset()
        curve = run_single(
            teacher, learner, 12, rng, record_snapshots=True, snapshot_stride=5
        )
        assert sorted(curve.snapshots) == [0, 5, 10]

    def test_sampling_matches_reference_sampler(self, dims232):
        teacher = random_teacher(dims232, np.random.default_rng(2))
        stub = RecordingLearner(dims232)
        run_single(teacher, stub, 40, np.random.default_rng(5))
        reference = np.random.default_rng(5)
        for observed in stub.seen:
            y, _ = sample_sequence(teacher, reference)
            np.testing.assert_array_equal(observed, y)

    def test_failed_updates_annotated_and_skipped(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        learner = MeanPosterior(2, 3, 2, prior_strength=1e15).reset()
        curve = run_single(teacher, learner, 8, rng)
        assert len(curve.annotations) == 8
        assert curve.diagnostics["update_failures"] == 8
        assert all("CollapsedPosteriorError" in msg for _, msg in curve.annotations)
        np.testing.assert_array_equal(curve.kl, curve.kl[0])

    def test_projection_residual_diagnostic(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bona").reset()
        curve = run_single(teacher, learner, 5, rng)
        assert curve.diagnostics["max_projection_residual"] < 1e-8

    def test_enumeration_cap(self, dims232, rng):
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bwo").reset()
        with pytest.raises(EnumerationCapError):
            run_single(teacher, learner, 3, rng, kl_cap=8)

    def test_abrupt_drift_switches_reference_teacher(self, dims232):
        rng = np.random.default_rng(21)
        teacher = random_teacher(dims232, rng)
        stub = RecordingLearner(dims232)
        schedule = Schedule(kind="abrupt", interval=3)
        curve = run_single(teacher, stub, 6, rng, schedule=schedule)
        # the estimate never moves, so the curve is piecewise constant
        # and jumps exactly when the teacher is replaced
        first = curve.kl[0]
        assert np.all(curve.kl[:4] == first)
        assert np.all(curve.kl[4:] == curve.kl[4])
        assert curve.kl[4] != first

    def test_gradual_drift_moves_every_step(self, dims232):
        rng = np.random.default_rng(22)
        teacher = random_teacher(dims232, rng)
        stub = RecordingLearner(dims232)
        schedule = Schedule(kind="gradual", delta=0.05)
        curve = run_single(teacher, stub, 6, rng, schedule=schedule)
        # drift happens after each recording, so the first two points
        # still share the original teacher; every later one differs
        assert curve.kl[1] == curve.kl[0]
        assert len(np.unique(curve.kl[1:])) == curve.kl.size - 1


class TestRunAveraged:
    def test_repeated_seeds_give_zero_stderr(self, dims232):
        seeds = [np.random.SeedSequence(7) for _ in range(2)]
        curve = run_averaged(
            dims232, LearnerConfig("bwo"), 15, 2, replica_seeds=seeds
        )
        np.testing.assert_array_equal(curve.kl_stderr, 0.0)
        assert curve.n_replicas == 2

    def test_worker_count_does_not_change_results(self, dims232):
        serial = run_averaged(dims232, LearnerConfig("bwo"), 20, 4, seed=3, n_jobs=1)
        parallel = run_averaged(dims232, LearnerConfig("bwo"), 20, 4, seed=3, n_jobs=2)
        np.testing.assert_array_equal(serial.kl_mean, parallel.kl_mean)
        np.testing.assert_array_equal(serial.kl_stderr, parallel.kl_stderr)

    def test_snapshots_require_single_replica(self, dims232):
        with pytest.raises(ValueError, match="replica"):
            run_averaged(dims232, LearnerConfig("bwo"), 5, 2, record_snapshots=True)

    def test_replica_seed_length_checked(self, dims232):
        with pytest.raises(ValueError, match="length"):
            run_averaged(
                dims232,
                LearnerConfig("bwo"),
                5,
                2,
                replica_seeds=[np.random.SeedSequence(0)],
            )

    def test_infinite_divergence_capped_and_flagged(
        self, dims232, alternating_teacher, monkeypatch
    ):
        monkeypatch.setattr(
            harness,
            "make_learner",
            lambda dims, config, init_noise=0.0, random_state=None: (
                ZeroSupportLearner(dims)
            ),
        )
        curve = run_averaged(
            dims232, LearnerConfig("bwo"), 4, 2, teacher=alternating_teacher
        )
        assert isinstance(curve, AveragedCurve)
        np.testing.assert_array_equal(curve.kl_mean, INF_SENTINEL)
        assert curve.inf_flags.all()

    def test_diagnostics_aggregate_over_replicas(self, dims232):
        curve = run_averaged(
            dims232, LearnerConfig("mpa", prior_strength=1e15), 5, 2, seed=1
        )
        assert curve.diagnostics["update_failures"] == 10
        bona = run_averaged(dims232, LearnerConfig("bona"), 5, 2, seed=1)
        assert bona.diagnostics["max_projection_residual"] < 1e-8

    def test_mean_of_identical_replicas_matches_single_run(self, dims232):
        seeds = [np.random.SeedSequence(11), np.random.SeedSequence(11)]
        avg = run_averaged(dims232, LearnerConfig("bwo"), 10, 2, replica_seeds=seeds)
        rng = np.random.default_rng(np.random.SeedSequence(11))
        teacher = random_teacher(dims232, rng)
        learner = symmetric_student(dims232, "bwo").reset()
        single = run_single(teacher, learner, 10, rng)
        np.testing.assert_array_equal(avg.kl_mean, single.kl)


class TestRunExperiment:
    def test_learners_share_streams(self, dims232):
        config = ExperimentConfig(
            dims=dims232,
            learners=[LearnerConfig("bwo"), LearnerConfig("bwo")],
            n_sequences=15,
            n_replicas=2,
            seed=5,
        )
        runs = run_experiment(config)
        assert len(runs) == 2
        np.testing.assert_array_equal(runs[0].curve.kl_mean, runs[1].curve.kl_mean)
        assert all(r.wall_clock_seconds > 0.0 for r in runs)

    def test_distinct_algorithms_recorded(self, dims232):
        config = ExperimentConfig(
            dims=dims232,
            learners=[LearnerConfig("bwo"), LearnerConfig("mpa")],
            n_sequences=5,
        )
        runs = run_experiment(config)
        assert [r.config.algorithm for r in runs] == ["bwo", "mpa"]


class TestExperimentConfigValidate:
    def base(self, dims, **overrides):
        fields = dict(
            dims=dims,
            learners=[LearnerConfig("bwo")],
            n_sequences=10,
        )
        fields.update(overrides)
        return ExperimentConfig(**fields)

    def test_accepts_good_config(self, dims232):
        assert self.base(dims232).validate() is not None

    def test_field_names_in_errors(self, dims232):
        with pytest.raises(ConfigError) as err:
            self.base(dims232, n_sequences=0).validate()
        assert err.value.field == "n_sequences"

        with pytest.raises(ConfigError) as err:
            self.base(dims232, n_replicas=2, snapshots=True).validate()
        assert err.value.field == "snapshots"

        with pytest.raises(ConfigError) as err:
            self.base(dims232, learners=[]).validate()
        assert err.value.field == "learners"

        with pytest.raises(ConfigError) as err:
            self.base(dims232, learners=[LearnerConfig("em")]).validate()
        assert err.value.field == "learners[0].algorithm"

        with pytest.raises(ConfigError) as err:
            self.base(dims232, learners=[LearnerConfig("bwo", eta_bw=0.0)]).validate()
        assert err.value.field == "learners[0].eta_bw"

    def test_teacher_checked(self, dims232, rng):
        other = random_stochastic_params(ModelDims(2, 3, 3), rng, HmmParams)
        with pytest.raises(ConfigError) as err:
            self.base(dims232, teacher=other).validate()
        assert err.value.field == "teacher"

        broken = uniform_params(dims232)
        broken.pi = np.array([0.7, 0.7])
        with pytest.raises(ConfigError) as err:
            self.base(dims232, teacher=broken).validate()
        assert err.value.field == "teacher"


class TestDetectors:
    def test_sharp_drop_stats_values(self):
        drop, median = sharp_drop_stats([1.0, 1.0, 1.0, 0.1, 0.1])
        assert drop == pytest.approx(0.9)
        assert median == pytest.approx(0.0)
        assert sharp_drop_stats([2.0]) == (0.0, 0.0)

    def test_has_sharp_drop_on_cliff(self):
        kl = np.concatenate([np.full(50, 1.0) + 1e-4 * np.sin(np.arange(50)),
                             np.full(50, 0.2)])
        assert has_sharp_drop(kl)

    def test_no_sharp_drop_on_linear_decay(self):
        assert not has_sharp_drop(np.linspace(1.0, 0.0, 100))

    def test_block_departures(self, dims232):
        def model(pi0, a00, b00):
            params = uniform_params(dims232)
            params.pi = np.array([pi0, 1.0 - pi0])
            params.A = np.array([[a00, 1.0 - a00], [0.5, 0.5]])
            b_rest = (1.0 - b00) / 2.0
            params.B = np.array([[b00, b_rest, b_rest], [1 / 3] * 3])
            return params

        snapshots = {
            0: model(0.5, 0.5, 1 / 3),
            10: model(0.5, 0.5, 0.45),
            20: model(0.58, 0.60, 0.45),
        }
        first = block_departures(snapshots, threshold=0.05)
        assert first == {"pi": 20, "A": 20, "B": 10}

    def test_block_departures_threshold(self, dims232):
        params = uniform_params(dims232)
        params.pi = np.array([0.54, 0.46])
        first = block_departures({3: params}, threshold=0.05)
        assert first["pi"] is None
